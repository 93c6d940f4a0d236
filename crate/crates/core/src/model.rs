//! Signals, load laws, the multiplicative noise channel and qPCR cycle
//! conversion.

use log::warn;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Readings below this magnitude are treated as exact zeros.
pub const ZERO_CLAMP: f64 = 1e-300;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Law of a single nonzero viral load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LoadLaw {
    Uniform { lo: f64, hi: f64 },
    PointMass { value: f64 },
}

impl Default for LoadLaw {
    fn default() -> Self {
        LoadLaw::Uniform { lo: 1.0, hi: 1000.0 }
    }
}

impl LoadLaw {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        let law = LoadLaw::Uniform { lo, hi };
        law.validate()?;
        Ok(law)
    }

    pub fn point_mass(value: f64) -> Result<Self> {
        let law = LoadLaw::PointMass { value };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LoadLaw::Uniform { lo, hi } => {
                if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                    return Err(Error::invalid(format!(
                        "uniform load law needs 0 < lo < hi < inf, got [{lo}, {hi}]"
                    )));
                }
            }
            LoadLaw::PointMass { value } => {
                if !(value > 0.0 && value.is_finite()) {
                    return Err(Error::invalid(format!(
                        "point-mass load must be positive and finite, got {value}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            LoadLaw::Uniform { lo, hi } => rng.random_range(lo..hi),
            LoadLaw::PointMass { value } => value,
        }
    }

    /// Support box of a single load, `[lo, hi]` (degenerate for a point mass).
    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            LoadLaw::Uniform { lo, hi } => (lo, hi),
            LoadLaw::PointMass { value } => (value, value),
        }
    }

    /// Log prior weight of one nonzero load inside its box: `-ln(hi - lo)`
    /// for the uniform law, `0` for a point mass (an atom of mass one).
    pub fn log_density_in_box(&self) -> f64 {
        match *self {
            LoadLaw::Uniform { lo, hi } => -(hi - lo).ln(),
            LoadLaw::PointMass { .. } => 0.0,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            LoadLaw::Uniform { lo, hi } => 0.5 * (lo + hi),
            LoadLaw::PointMass { value } => value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalDistribution {
    pub n: usize,
    pub prevalence: f64,
    #[serde(default)]
    pub load_law: LoadLaw,
}

impl SignalDistribution {
    pub fn new(n: usize, prevalence: f64, load_law: LoadLaw) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("population size must be at least 1"));
        }
        if !(0.0..=1.0).contains(&prevalence) {
            return Err(Error::invalid(format!(
                "prevalence must lie in [0, 1], got {prevalence}"
            )));
        }
        load_law.validate()?;
        Ok(Self {
            n,
            prevalence,
            load_law,
        })
    }
}

/// A non-negative viral-load vector together with its support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    values: Vec<f64>,
    support: Vec<usize>,
}

impl Signal {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::invalid(format!(
                "signal entries must be finite and non-negative, found {v}"
            )));
        }
        let support = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(j, _)| j)
            .collect();
        Ok(Self { values, support })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Indices of the strictly positive entries, ascending.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_positive(&self) -> usize {
        self.support.len()
    }

    pub fn n_negative(&self) -> usize {
        self.values.len() - self.support.len()
    }

    pub fn is_positive(&self, j: usize) -> bool {
        self.values[j] > 0.0
    }
}

/// Each coordinate is independently positive with probability `p`, with
/// loads drawn from the distribution's load law.
pub fn generate_signal<R: Rng + ?Sized>(dist: &SignalDistribution, rng: &mut R) -> Signal {
    let values: Vec<f64> = (0..dist.n)
        .map(|_| {
            if rng.random::<f64>() < dist.prevalence {
                dist.load_law.sample(rng)
            } else {
                0.0
            }
        })
        .collect();
    Signal::from_values(values).expect("sampled loads are positive")
}

/// Signal with exactly `k` positives on a uniformly random `k`-subset.
pub fn generate_signal_fixed_k<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    load_law: &LoadLaw,
    rng: &mut R,
) -> Result<Signal> {
    if k > n {
        return Err(Error::invalid(format!(
            "cannot place {k} positives in a population of {n}"
        )));
    }
    let mut chosen = rand::seq::index::sample(rng, n, k).into_vec();
    chosen.sort_unstable();
    let mut values = vec![0.0; n];
    for j in chosen {
        values[j] = load_law.sample(rng);
    }
    Signal::from_values(values)
}

/// Log-normal multiplicative noise, `eps = exp(mu + sigma * g)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma_eps: f64,
    #[serde(default)]
    pub mu_eps: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::tapestry()
    }
}

impl NoiseModel {
    pub fn new(sigma_eps: f64, mu_eps: f64) -> Result<Self> {
        let noise = Self { sigma_eps, mu_eps };
        noise.validate()?;
        Ok(noise)
    }

    /// `sigma = 0.1 ln 1.95`, `mu = 0`: the qPCR noise level used for the
    /// published performance tables.
    pub fn tapestry() -> Self {
        Self {
            sigma_eps: 0.1 * 1.95f64.ln(),
            mu_eps: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_eps > 0.0 && self.sigma_eps.is_finite() && self.mu_eps.is_finite()) {
            return Err(Error::invalid(format!(
                "noise needs sigma_eps > 0 and finite mu_eps, got sigma={} mu={}",
                self.sigma_eps, self.mu_eps
            )));
        }
        Ok(())
    }

    pub fn sample_factor<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let g: f64 = StandardNormal.sample(rng);
        (self.mu_eps + self.sigma_eps * g).exp()
    }

    /// `ln p_eps(e)` for the log-normal factor.
    pub fn log_density(&self, e: f64) -> f64 {
        if e <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let u = (e.ln() - self.mu_eps) / self.sigma_eps;
        -e.ln() - self.sigma_eps.ln() - LN_SQRT_2PI - 0.5 * u * u
    }

    /// Conditional log-density of a reading `z > 0` given a clean value
    /// `y > 0`: `ln(p_eps(z / y) / y)`.
    pub fn log_likelihood(&self, z: f64, y: f64) -> f64 {
        if y <= 0.0 || z <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let u = (z.ln() - y.ln() - self.mu_eps) / self.sigma_eps;
        -z.ln() - self.sigma_eps.ln() - LN_SQRT_2PI - 0.5 * u * u
    }
}

/// `z = y * eps`. Zero stays zero.
pub fn apply_noise<R: Rng + ?Sized>(y: f64, noise: &NoiseModel, rng: &mut R) -> f64 {
    debug_assert!(y >= 0.0, "clean measurement must be non-negative");
    if y <= 0.0 {
        return 0.0;
    }
    let z = y * noise.sample_factor(rng);
    if z < ZERO_CLAMP {
        warn!("noisy reading {z:e} from y={y:e} clamped to zero");
        return 0.0;
    }
    z
}

/// Amplification parameters of the qPCR readout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpcrParams {
    /// Per-cycle amplification base, slightly below 2 in practice.
    pub b: f64,
    pub d_min: f64,
    pub c_max: u32,
    pub sigma_delta: f64,
}

impl QpcrParams {
    pub fn new(b: f64, d_min: f64, c_max: u32, sigma_delta: f64) -> Result<Self> {
        if !(b > 1.0 && d_min > 0.0 && c_max > 0 && sigma_delta >= 0.0) {
            return Err(Error::invalid(format!(
                "qPCR parameters need b > 1, d_min > 0, c_max > 0, sigma_delta >= 0; got b={b} d_min={d_min} c_max={c_max} sigma_delta={sigma_delta}"
            )));
        }
        Ok(Self {
            b,
            d_min,
            c_max,
            sigma_delta,
        })
    }

    /// The induced log-normal noise: `sigma_eps = sigma_delta * ln b`.
    pub fn noise_model(&self) -> Result<NoiseModel> {
        NoiseModel::new(self.sigma_delta * self.b.ln(), 0.0)
    }
}

/// `z = d_min * b^(-c)`. Cycle counts past `c_max` are below detection and
/// read as zero.
pub fn cycle_to_measurement(c_x: f64, params: &QpcrParams) -> Result<f64> {
    if !(c_x > 0.0) {
        return Err(Error::invalid(format!("cycle count must be positive, got {c_x}")));
    }
    if c_x > params.c_max as f64 {
        return Ok(0.0);
    }
    Ok(params.d_min * params.b.powf(-c_x))
}

/// `c = log_b(d_min / z)`, the inverse of [`cycle_to_measurement`].
pub fn measurement_to_cycle(z: f64, params: &QpcrParams) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::invalid(format!(
            "only positive readings map to a cycle count, got {z}"
        )));
    }
    Ok((params.d_min / z).ln() / params.b.ln())
}
