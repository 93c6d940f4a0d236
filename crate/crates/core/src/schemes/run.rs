use log::debug;
use rand::Rng;

use super::{
    count_pipetting, partition_positive_pools, AlphaEstimate, MatrixSource, PlannedPool,
    PoolDiagnostic, Scheme, SchemeConfig, StagePlan, TrialOutcome,
};
use crate::error::{Error, Result};
use crate::matrices::{builtin_matrix, design_profile, profile_sample, SensingMatrix, DEFAULT_MAX_ATTEMPTS};
use crate::model::{apply_noise, LoadLaw, NoiseModel, Signal};
use crate::recovery::{
    comp, estimate_pool_count, estimate_prevalence, list_scores, list_scores_mixed, DecoderConfig,
    ListDecode, PoolInstance, PrevalenceMode,
};

/// State of one trial in progress.
struct Trial<'a, R: Rng + ?Sized> {
    signal: &'a Signal,
    cfg: &'a SchemeConfig,
    decoder: DecoderConfig,
    alphas: &'a [f64],
    noise: &'a NoiseModel,
    law: &'a LoadLaw,
    rng: &'a mut R,
    /// Readings taken so far.
    readings: usize,
    plans: Vec<StagePlan>,
    estimates: Vec<Vec<usize>>,
    diagnostics: Vec<PoolDiagnostic>,
    budget_flag: bool,
}

impl<'a, R: Rng + ?Sized> Trial<'a, R> {
    fn new(
        signal: &'a Signal,
        cfg: &'a SchemeConfig,
        alphas: &'a [f64],
        noise: &'a NoiseModel,
        law: &'a LoadLaw,
        rng: &'a mut R,
    ) -> Result<Self> {
        if alphas.is_empty() || alphas.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return Err(Error::invalid(format!("alphas must be non-empty and in (0, 1], got {alphas:?}")));
        }
        if signal.len() != cfg.n() {
            return Err(Error::invalid(format!(
                "signal length {} does not match q*s = {}",
                signal.len(),
                cfg.n()
            )));
        }
        let floor = alphas.iter().copied().fold(1.0, f64::min);
        Ok(Self {
            signal,
            cfg,
            decoder: DecoderConfig { alpha_floor: Some(floor), ..cfg.decoder },
            alphas,
            noise,
            law,
            rng,
            readings: 0,
            plans: Vec::new(),
            estimates: vec![Vec::new(); alphas.len()],
            diagnostics: Vec::new(),
            budget_flag: false,
        })
    }

    /// Noisy reading of one row applied to `members`.
    fn measure(&mut self, members: &[usize], row: &[u8]) -> f64 {
        let x = self.signal.values();
        let y: f64 = members.iter().zip(row).filter(|(_, &a)| a == 1).map(|(&j, _)| x[j]).sum();
        self.readings += 1;
        apply_noise(y, self.noise, self.rng)
    }

    fn measure_all(&mut self, members: &[usize], mat: &SensingMatrix) -> Vec<f64> {
        (0..mat.rows()).map(|i| self.measure(members, mat.row(i))).collect()
    }

    fn pool_members(&self, l: usize) -> Vec<usize> {
        (l * self.cfg.s..(l + 1) * self.cfg.s).collect()
    }

    /// All `q` pooled readings.
    fn stage1(&mut self) -> Vec<f64> {
        let ones = SensingMatrix::ones(1, self.cfg.s);
        let mut pools = Vec::with_capacity(self.cfg.q);
        let mut z = Vec::with_capacity(self.cfg.q);
        for l in 0..self.cfg.q {
            let members = self.pool_members(l);
            z.push(self.measure(&members, ones.row(0)));
            pools.push(PlannedPool { members, matrix: ones.clone() });
        }
        self.plans.push(StagePlan { stage: 1, pools });
        z
    }

    fn design(&mut self, rows: usize, width: usize) -> Result<SensingMatrix> {
        match self.cfg.matrix_source {
            MatrixSource::Builtin => Ok(builtin_matrix(rows, width)?.clone()),
            MatrixSource::Resample => {
                let profile = design_profile(rows, width)?;
                profile_sample(&profile, rows, width, self.rng, DEFAULT_MAX_ATTEMPTS)
            }
        }
    }

    fn stage2_pool(&mut self, members: Vec<usize>, matrix: SensingMatrix) -> Vec<f64> {
        let z = self.measure_all(&members, &matrix);
        if self.plans.len() < 2 {
            self.plans.push(StagePlan { stage: 2, pools: Vec::new() });
        }
        self.plans[1].pools.push(PlannedPool { members, matrix });
        z
    }

    fn prevalence(&self, positive_pools: usize) -> f64 {
        match self.cfg.decoder.prevalence {
            PrevalenceMode::Known { p } => p,
            PrevalenceMode::Estimate => estimate_prevalence(positive_pools, self.cfg.q, self.cfg.s),
        }
    }

    fn k_hat(&self, z1: f64, p: f64) -> Result<usize> {
        estimate_pool_count(z1, self.cfg.s, p, self.noise, self.law)
    }

    /// Records a decode: maps pool columns back to signal coordinates per
    /// threshold and notes diagnostics.
    fn record(&mut self, pools: Vec<usize>, k_hat: Vec<usize>, members: &[usize], rows: usize, list: &ListDecode) {
        for (est, &alpha) in self.estimates.iter_mut().zip(self.alphas) {
            est.extend(list.union_at(alpha).into_iter().map(|c| members[c]));
        }
        let comp_superset_ok = members
            .iter()
            .enumerate()
            .filter(|(_, &j)| self.signal.is_positive(j))
            .all(|(c, _)| list.survivors.binary_search(&c).is_ok());
        self.budget_flag |= list.budget_exceeded;
        self.diagnostics.push(PoolDiagnostic {
            pools,
            k_hat,
            rows,
            survivors: list.survivors.len(),
            enumerated: list.enumerated,
            pruned: list.pruned,
            scored: list.candidates.len(),
            budget_exceeded: list.budget_exceeded,
            comp_superset_ok,
        });
    }

    /// Measures pool `l` with `rows` stage-2 rows and decodes it.
    fn decode_single(&mut self, l: usize, z1: f64, k_hat: usize, rows: usize, p: f64) -> Result<()> {
        let s = self.cfg.s;
        let a2 = self.design(rows, s)?;
        let members = self.pool_members(l);
        let z2 = self.stage2_pool(members.clone(), a2.clone());
        let mat = SensingMatrix::ones(1, s).vstack(&a2)?;
        let z = [vec![z1], z2].concat();
        let reduced = comp(&PoolInstance::new(mat, z)?);
        let list = list_scores(&reduced, k_hat, &self.decoder, p, self.noise, self.law)?;
        self.record(vec![l], vec![k_hat], &members, rows, &list);
        Ok(())
    }

    /// Measures pools `la` and `lb` together on a `2s`-wide design.
    fn decode_pair(&mut self, (la, za, ka): (usize, f64, usize), (lb, zb, kb): (usize, f64, usize), rows: usize, p: f64) -> Result<()> {
        let s = self.cfg.s;
        let a2 = self.design(rows, 2 * s)?;
        let members = [self.pool_members(la), self.pool_members(lb)].concat();
        let z2 = self.stage2_pool(members.clone(), a2.clone());
        let halves = SensingMatrix::from_rows(vec![
            [vec![1; s], vec![0; s]].concat(),
            [vec![0; s], vec![1; s]].concat(),
        ])?;
        let mat = halves.vstack(&a2)?;
        let z = [vec![za, zb], z2].concat();
        let reduced = comp(&PoolInstance::new(mat, z)?);
        let list = list_scores_mixed(&reduced, ka, kb, &self.decoder, p, self.noise, self.law)?;
        self.record(vec![la, lb], vec![ka, kb], &members, rows, &list);
        Ok(())
    }

    fn finish(self) -> Result<TrialOutcome> {
        let stage1 = self.plans.first().map_or(0, |p| p.pools.iter().map(|p| p.matrix.rows()).sum());
        let planned: usize = self.plans.iter().flat_map(|s| &s.pools).map(|p| p.matrix.rows()).sum();
        if planned != self.readings {
            return Err(Error::Internal(format!(
                "{} readings taken but {planned} rows planned",
                self.readings
            )));
        }
        let sweep: Vec<AlphaEstimate> = self
            .alphas
            .iter()
            .zip(self.estimates)
            .map(|(&alpha, mut support)| {
                support.sort_unstable();
                support.dedup();
                AlphaEstimate { alpha, support }
            })
            .collect();
        Ok(TrialOutcome {
            estimated_support: sweep[0].support.clone(),
            sweep,
            measurements_total: self.readings,
            measurements_stage1: stage1,
            measurements_stage2: self.readings - stage1,
            pipetting_ops: count_pipetting(&self.plans),
            budget_flag: self.budget_flag,
            pools: self.diagnostics,
        })
    }

    fn set_all(&mut self, support: &[usize]) {
        for est in &mut self.estimates {
            est.extend_from_slice(support);
        }
    }
}

fn individual<R: Rng + ?Sized>(t: &mut Trial<'_, R>) -> Result<()> {
    let n = t.signal.len();
    let one = SensingMatrix::ones(1, 1);
    let mut pools = Vec::with_capacity(n);
    let mut found = Vec::new();
    for j in 0..n {
        if t.measure(&[j], one.row(0)) > 0.0 {
            found.push(j);
        }
        pools.push(PlannedPool { members: vec![j], matrix: one.clone() });
    }
    t.plans.push(StagePlan { stage: 1, pools });
    t.set_all(&found);
    Ok(())
}

fn dorfman<R: Rng + ?Sized>(t: &mut Trial<'_, R>) -> Result<()> {
    let z1 = t.stage1();
    let eye = SensingMatrix::identity(t.cfg.s);
    let mut found = Vec::new();
    for (l, &z) in z1.iter().enumerate() {
        if z > 0.0 {
            let members = t.pool_members(l);
            let z2 = t.stage2_pool(members.clone(), eye.clone());
            found.extend(members.iter().zip(z2).filter(|(_, z)| *z > 0.0).map(|(&j, _)| j));
        }
    }
    t.set_all(&found);
    Ok(())
}

fn stap<R: Rng + ?Sized>(t: &mut Trial<'_, R>, adaptive: bool) -> Result<()> {
    let z1 = t.stage1();
    let positive: Vec<usize> = (0..z1.len()).filter(|&l| z1[l] > 0.0).collect();
    let p = t.prevalence(positive.len());
    for l in positive {
        let k_hat = t.k_hat(z1[l], p)?;
        let rows = if adaptive {
            t.cfg.rows_for_khat(k_hat).ok_or_else(|| Error::Config(format!("no stage-2 row count for k_hat = {k_hat}")))?
        } else {
            t.cfg.stage2_rows_fixed
        };
        t.decode_single(l, z1[l], k_hat, rows, p)?;
    }
    Ok(())
}

fn stamp<R: Rng + ?Sized>(t: &mut Trial<'_, R>) -> Result<()> {
    let z1 = t.stage1();
    let positive: Vec<usize> = (0..z1.len()).filter(|&l| z1[l] > 0.0).collect();
    let p = t.prevalence(positive.len());
    let mut pools: Vec<(usize, f64, usize)> = positive
        .iter()
        .map(|&l| Ok((l, z1[l], t.k_hat(z1[l], p)?)))
        .collect::<Result<_>>()?;
    // Descending estimated count, ties by pool index.
    pools.sort_by(|a, b| b.2.cmp(&a.2).then(a.0.cmp(&b.0)));
    let k_hats: Vec<usize> = pools.iter().map(|p| p.2).collect();
    let partition = partition_positive_pools(&k_hats, t.cfg.kappa)?;
    let single_rows = |t: &Trial<'_, R>, k: usize| {
        t.cfg.rows_for_khat(k).ok_or_else(|| Error::Config(format!("no stage-2 row count for k_hat = {k}")))
    };
    for part in &partition.parts {
        match part[..] {
            [i] => {
                let (l, z, k) = pools[i];
                let rows = single_rows(t, k)?;
                t.decode_single(l, z, k, rows, p)?;
            }
            [i, j] => match t.cfg.rows_for_pair(pools[i].2, pools[j].2) {
                Some(rows) => t.decode_pair(pools[i], pools[j], rows, p)?,
                None => {
                    debug!(
                        "no mixed design for k_hat pair ({}, {}); measuring pools {} and {} apart",
                        pools[i].2, pools[j].2, pools[i].0, pools[j].0
                    );
                    for (l, z, k) in [pools[i], pools[j]] {
                        let rows = single_rows(t, k)?;
                        t.decode_single(l, z, k, rows, p)?;
                    }
                }
            },
            _ => unreachable!("parts hold one or two pools"),
        }
    }
    Ok(())
}

/// Runs `cfg.scheme` on `signal`, reporting the support estimate at every
/// threshold in `alphas` (the first is also `estimated_support`). The
/// measurements are taken once; only the list threshold varies.
pub fn run_scheme<R: Rng + ?Sized>(
    signal: &Signal,
    cfg: &SchemeConfig,
    alphas: &[f64],
    noise: &NoiseModel,
    law: &LoadLaw,
    rng: &mut R,
) -> Result<TrialOutcome> {
    let mut t = Trial::new(signal, cfg, alphas, noise, law, rng)?;
    match cfg.scheme {
        Scheme::Individual => individual(&mut t)?,
        Scheme::Dorfman => dorfman(&mut t)?,
        Scheme::Stap1 => stap(&mut t, false)?,
        Scheme::Stap2 => stap(&mut t, true)?,
        Scheme::Stamp => stamp(&mut t)?,
    }
    t.finish()
}

fn with_scheme(cfg: &SchemeConfig, scheme: Scheme) -> SchemeConfig {
    SchemeConfig { scheme, ..cfg.clone() }
}

/// Every sample measured on its own.
pub fn run_individual<R: Rng + ?Sized>(signal: &Signal, noise: &NoiseModel, rng: &mut R) -> Result<TrialOutcome> {
    let n = signal.len();
    let cfg = SchemeConfig { scheme: Scheme::Individual, q: n, s: 1, ..SchemeConfig::default() };
    run_scheme(signal, &cfg, &[1.0], noise, &LoadLaw::default(), rng)
}

/// Pooled stage 1, then every member of a positive pool on its own.
pub fn run_dorfman<R: Rng + ?Sized>(signal: &Signal, cfg: &SchemeConfig, noise: &NoiseModel, rng: &mut R) -> Result<TrialOutcome> {
    run_scheme(signal, &with_scheme(cfg, Scheme::Dorfman), &[1.0], noise, &LoadLaw::default(), rng)
}

/// Fixed stage-2 design for every positive pool.
pub fn run_stap1<R: Rng + ?Sized>(signal: &Signal, cfg: &SchemeConfig, noise: &NoiseModel, law: &LoadLaw, rng: &mut R) -> Result<TrialOutcome> {
    run_scheme(signal, &with_scheme(cfg, Scheme::Stap1), &[cfg.decoder.alpha], noise, law, rng)
}

/// Stage-2 design sized by each pool's estimated count.
pub fn run_stap2<R: Rng + ?Sized>(signal: &Signal, cfg: &SchemeConfig, noise: &NoiseModel, law: &LoadLaw, rng: &mut R) -> Result<TrialOutcome> {
    run_scheme(signal, &with_scheme(cfg, Scheme::Stap2), &[cfg.decoder.alpha], noise, law, rng)
}

/// As STAP-II, but sparse positive pools are measured in mixed pairs.
pub fn run_stamp<R: Rng + ?Sized>(signal: &Signal, cfg: &SchemeConfig, noise: &NoiseModel, law: &LoadLaw, rng: &mut R) -> Result<TrialOutcome> {
    run_scheme(signal, &with_scheme(cfg, Scheme::Stamp), &[cfg.decoder.alpha], noise, law, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::generate_signal_fixed_k;
    use crate::rng::stream;

    fn signal(k: usize, seed: u64) -> Signal {
        generate_signal_fixed_k(961, k, &LoadLaw::default(), &mut stream(seed)).unwrap()
    }

    fn zero() -> Signal {
        Signal::from_values(vec![0.0; 961]).unwrap()
    }

    #[test]
    fn individual_is_exact() {
        let noise = NoiseModel::tapestry();
        let out = run_individual(&zero(), &noise, &mut stream(1)).unwrap();
        assert!(out.estimated_support.is_empty());
        assert_eq!(out.measurements_total, 961);
        let x = signal(10, 2);
        let out = run_individual(&x, &noise, &mut stream(3)).unwrap();
        assert_eq!(out.estimated_support, x.support());
        assert_eq!((out.measurements_total, out.pipetting_ops), (961, 961));
    }

    #[test]
    fn dorfman_accounting() {
        let cfg = SchemeConfig::default();
        let noise = NoiseModel::tapestry();
        let out = run_dorfman(&zero(), &cfg, &noise, &mut stream(1)).unwrap();
        assert_eq!(out.measurements_total, 31);
        assert!(out.estimated_support.is_empty());
        let x = signal(10, 4);
        let t = x.support().iter().map(|j| j / 31).collect::<std::collections::BTreeSet<_>>().len();
        let out = run_dorfman(&x, &cfg, &noise, &mut stream(5)).unwrap();
        assert_eq!(out.measurements_total, 31 + 31 * t);
        assert_eq!(out.pipetting_ops, 961 + 31 * t);
        assert_eq!(out.estimated_support, x.support());
    }

    #[test]
    fn stap1_accounting() {
        let cfg = SchemeConfig::new(Scheme::Stap1);
        let noise = NoiseModel::tapestry();
        let law = LoadLaw::default();
        let out = run_stap1(&zero(), &cfg, &noise, &law, &mut stream(1)).unwrap();
        assert_eq!(out.measurements_total, 31);
        let x = signal(5, 6);
        let t = x.support().iter().map(|j| j / 31).collect::<std::collections::BTreeSet<_>>().len();
        let out = run_stap1(&x, &cfg, &noise, &law, &mut stream(7)).unwrap();
        assert_eq!(out.measurements_stage2, 6 * t);
        assert_eq!(out.pipetting_ops, 961 + 108 * t);
        assert_eq!(out.comp_violations(), 0);
    }

    #[test]
    fn stamp_runs_and_contains_estimate_in_positive_pools() {
        let cfg = SchemeConfig::new(Scheme::Stamp);
        let noise = NoiseModel::tapestry();
        let law = LoadLaw::default();
        let x = signal(10, 8);
        let pos_pools: std::collections::BTreeSet<usize> = x.support().iter().map(|j| j / 31).collect();
        let out = run_scheme(&x, &cfg, &[0.5, 0.9], &noise, &law, &mut stream(9)).unwrap();
        assert_eq!(out.measurements_total, out.measurements_stage1 + out.measurements_stage2);
        assert_eq!(out.comp_violations(), 0);
        for est in &out.sweep {
            assert!(est.support.iter().all(|j| pos_pools.contains(&(j / 31))));
        }
        // Lower thresholds keep more.
        let (lo, hi) = (&out.sweep[0].support, &out.sweep[1].support);
        assert!(hi.iter().all(|j| lo.contains(j)));
    }

    #[test]
    fn builtin_source_is_deterministic() {
        let mut cfg = SchemeConfig::new(Scheme::Stap2);
        cfg.matrix_source = MatrixSource::Builtin;
        let x = signal(10, 10);
        let a = run_scheme(&x, &cfg, &[0.9], &NoiseModel::tapestry(), &LoadLaw::default(), &mut stream(11)).unwrap();
        let b = run_scheme(&x, &cfg, &[0.9], &NoiseModel::tapestry(), &LoadLaw::default(), &mut stream(11)).unwrap();
        assert_eq!(a, b);
    }
}
