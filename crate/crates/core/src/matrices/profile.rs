use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SensingMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_MAX_ATTEMPTS: usize = 10_000;

/// Prescribed row and column weight multisets of a binary matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightProfile {
    /// `(weight, count)` pairs over columns.
    pub col_weight_counts: Vec<(usize, usize)>,
    /// `(weight, count)` pairs over rows.
    pub row_weight_counts: Vec<(usize, usize)>,
    #[serde(default = "yes")]
    pub require_distinct_rows: bool,
    #[serde(default = "yes")]
    pub require_distinct_cols: bool,
}

fn yes() -> bool {
    true
}

impl WeightProfile {
    pub fn new(
        col_weight_counts: Vec<(usize, usize)>,
        row_weight_counts: Vec<(usize, usize)>,
    ) -> Self {
        Self {
            col_weight_counts,
            row_weight_counts,
            require_distinct_rows: true,
            require_distinct_cols: true,
        }
    }

    pub fn rows(&self) -> usize {
        self.row_weight_counts.iter().map(|&(_, c)| c).sum()
    }

    pub fn cols(&self) -> usize {
        self.col_weight_counts.iter().map(|&(_, c)| c).sum()
    }

    pub fn total_ones(&self) -> usize {
        self.col_weight_counts.iter().map(|&(w, c)| w * c).sum()
    }

    fn row_total(&self) -> usize {
        self.row_weight_counts.iter().map(|&(w, c)| w * c).sum()
    }

    /// Expanded, non-increasing column weights.
    pub fn col_weights(&self) -> Vec<usize> {
        expand(&self.col_weight_counts)
    }

    /// Expanded, non-increasing row weights.
    pub fn row_weights(&self) -> Vec<usize> {
        expand(&self.row_weight_counts)
    }

    /// Checks the profile against an `m x n` shape: counts, weight ranges,
    /// the handshake identity, Gale-Ryser realisability and, when required,
    /// that enough distinct rows/columns of each weight exist.
    pub fn check(&self, m: usize, n: usize) -> Result<()> {
        if self.rows() != m {
            return Err(Error::Construction(format!(
                "row counts sum to {}, matrix has {m} rows",
                self.rows()
            )));
        }
        if self.cols() != n {
            return Err(Error::Construction(format!(
                "column counts sum to {}, matrix has {n} columns",
                self.cols()
            )));
        }
        if let Some(&(w, _)) = self.col_weight_counts.iter().find(|&&(w, c)| w > m && c > 0) {
            return Err(Error::Construction(format!("column weight {w} exceeds {m} rows")));
        }
        if let Some(&(w, _)) = self.row_weight_counts.iter().find(|&&(w, c)| w > n && c > 0) {
            return Err(Error::Construction(format!("row weight {w} exceeds {n} columns")));
        }
        if self.total_ones() != self.row_total() {
            return Err(Error::Construction(format!(
                "handshake violated: column weights total {}, row weights total {}",
                self.total_ones(),
                self.row_total()
            )));
        }
        if !gale_ryser(&self.row_weights(), &self.col_weights()) {
            return Err(Error::Construction(
                "no binary matrix realises these margins (Gale-Ryser condition fails)".into(),
            ));
        }
        if self.require_distinct_cols {
            for (w, c) in merged(&self.col_weight_counts) {
                if c as u128 > binomial(m, w) {
                    return Err(Error::Construction(format!(
                        "{c} distinct columns of weight {w} requested but only C({m},{w}) exist"
                    )));
                }
            }
        }
        if self.require_distinct_rows {
            for (w, c) in merged(&self.row_weight_counts) {
                if c as u128 > binomial(n, w) {
                    return Err(Error::Construction(format!(
                        "{c} distinct rows of weight {w} requested but only C({n},{w}) exist"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn expand(counts: &[(usize, usize)]) -> Vec<usize> {
    let mut v: Vec<usize> = counts
        .iter()
        .flat_map(|&(w, c)| std::iter::repeat_n(w, c))
        .collect();
    v.sort_unstable_by(|a, b| b.cmp(a));
    v
}

fn merged(counts: &[(usize, usize)]) -> BTreeMap<usize, usize> {
    let mut m = BTreeMap::new();
    for &(w, c) in counts {
        *m.entry(w).or_insert(0) += c;
    }
    m
}

pub(crate) fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn gale_ryser(rows: &[usize], cols: &[usize]) -> bool {
    if rows.iter().sum::<usize>() != cols.iter().sum::<usize>() {
        return false;
    }
    let mut c = cols.to_vec();
    c.sort_unstable_by(|a, b| b.cmp(a));
    let mut lhs = 0;
    for (k, &ck) in c.iter().enumerate() {
        lhs += ck;
        let rhs: usize = rows.iter().map(|&r| r.min(k + 1)).sum();
        if lhs > rhs {
            return false;
        }
    }
    true
}

/// Result of checking a matrix against a profile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileReport {
    pub ok: bool,
    /// First violation found, if any.
    pub violation: Option<String>,
}

impl ProfileReport {
    fn pass() -> Self {
        Self {
            ok: true,
            violation: None,
        }
    }

    fn fail(msg: String) -> Self {
        Self {
            ok: false,
            violation: Some(msg),
        }
    }
}

pub fn verify_profile(mat: &SensingMatrix, profile: &WeightProfile) -> ProfileReport {
    if profile.rows() != mat.rows() || profile.cols() != mat.cols() {
        return ProfileReport::fail(format!(
            "shape mismatch: profile is {}x{}, matrix is {}x{}",
            profile.rows(),
            profile.cols(),
            mat.rows(),
            mat.cols()
        ));
    }
    let mut rw = mat.row_weights().to_vec();
    rw.sort_unstable_by(|a, b| b.cmp(a));
    if rw != profile.row_weights() {
        return ProfileReport::fail(format!(
            "row-weight violation: matrix rows {rw:?}, profile {:?}",
            profile.row_weights()
        ));
    }
    let mut cw = mat.col_weights().to_vec();
    cw.sort_unstable_by(|a, b| b.cmp(a));
    if cw != profile.col_weights() {
        return ProfileReport::fail(format!(
            "column-weight violation: matrix columns {cw:?}, profile {:?}",
            profile.col_weights()
        ));
    }
    if profile.require_distinct_rows {
        if let Some((a, b)) = first_duplicate((0..mat.rows()).map(|i| mat.row(i).to_vec())) {
            return ProfileReport::fail(format!("rows {a} and {b} are identical"));
        }
    }
    if profile.require_distinct_cols {
        if let Some((a, b)) = first_duplicate((0..mat.cols()).map(|j| mat.column(j))) {
            return ProfileReport::fail(format!("columns {a} and {b} are identical"));
        }
    }
    ProfileReport::pass()
}

fn first_duplicate(items: impl Iterator<Item = Vec<u8>>) -> Option<(usize, usize)> {
    let mut seen = std::collections::HashMap::new();
    for (idx, v) in items.enumerate() {
        if let Some(&prev) = seen.get(&v) {
            return Some((prev, idx));
        }
        seen.insert(v, idx);
    }
    None
}

/// Draws a matrix realising `profile` exactly.
///
/// Columns are filled one at a time, heaviest first; each picks its rows
/// with probability proportional to the rows' remaining capacity, taking
/// any row whose capacity equals the number of columns left. A weight class
/// that needs every possible distinct column of its weight is emitted
/// whole. Dead ends restart from scratch, up to `max_attempts` times.
pub fn profile_sample<R: Rng + ?Sized>(
    profile: &WeightProfile,
    m: usize,
    n: usize,
    rng: &mut R,
    max_attempts: usize,
) -> Result<SensingMatrix> {
    profile.check(m, n)?;
    let mut last = String::from("no attempts made");
    for _ in 0..max_attempts.max(1) {
        match try_fill(profile, m, n, rng) {
            Ok(cols) => {
                let mut entries = vec![0u8; m * n];
                for (j, col) in cols.iter().enumerate() {
                    for &i in col {
                        entries[i * n + j] = 1;
                    }
                }
                let mat = SensingMatrix::from_flat(m, n, entries)?;
                let report = verify_profile(&mat, profile);
                if report.ok {
                    return Ok(mat);
                }
                last = report.violation.unwrap_or_default();
            }
            Err(why) => last = why,
        }
    }
    Err(Error::Construction(format!(
        "gave up after {max_attempts} attempts; last failure: {last}"
    )))
}

fn try_fill<R: Rng + ?Sized>(
    profile: &WeightProfile,
    m: usize,
    n: usize,
    rng: &mut R,
) -> std::result::Result<Vec<Vec<usize>>, String> {
    let mut caps = profile.row_weights();
    caps.shuffle(rng);

    let mut columns: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut pending: Vec<usize> = Vec::new();
    for (w, c) in merged(&profile.col_weight_counts) {
        if profile.require_distinct_cols && c > 0 && c as u128 == binomial(m, w) {
            for subset in all_subsets(m, w) {
                for &i in &subset {
                    if caps[i] == 0 {
                        return Err(format!("row {i} over capacity after saturated weight-{w} class"));
                    }
                    caps[i] -= 1;
                }
                seen.insert(subset.clone());
                columns.push(subset);
            }
        } else {
            pending.extend(std::iter::repeat_n(w, c));
        }
    }
    pending.sort_unstable_by(|a, b| b.cmp(a));

    let total = pending.len();
    for (idx, &w) in pending.iter().enumerate() {
        let left = total - idx;
        let mut placed = None;
        for _ in 0..64 {
            let col = pick_rows(&caps, w, left, rng)?;
            if !profile.require_distinct_cols || !seen.contains(&col) {
                placed = Some(col);
                break;
            }
        }
        let col = placed.ok_or_else(|| format!("could not place a distinct weight-{w} column"))?;
        for &i in &col {
            caps[i] -= 1;
        }
        seen.insert(col.clone());
        columns.push(col);
    }
    if caps.iter().any(|&c| c != 0) {
        return Err("row capacities not exhausted".into());
    }
    columns.shuffle(rng);
    Ok(columns)
}

fn pick_rows<R: Rng + ?Sized>(
    caps: &[usize],
    w: usize,
    cols_left: usize,
    rng: &mut R,
) -> std::result::Result<Vec<usize>, String> {
    let mut chosen: Vec<usize> = (0..caps.len()).filter(|&i| caps[i] >= cols_left).collect();
    if chosen.len() > w {
        return Err(format!(
            "{} rows must appear in every remaining column but columns have weight {w}",
            chosen.len()
        ));
    }
    let mut pool: Vec<usize> = (0..caps.len())
        .filter(|&i| caps[i] > 0 && caps[i] < cols_left)
        .collect();
    while chosen.len() < w {
        let total: usize = pool.iter().map(|&i| caps[i]).sum();
        if total == 0 {
            return Err(format!("not enough rows with capacity for a weight-{w} column"));
        }
        let mut ticket = rng.random_range(0..total);
        let pos = pool
            .iter()
            .position(|&i| {
                if ticket < caps[i] {
                    true
                } else {
                    ticket -= caps[i];
                    false
                }
            })
            .expect("ticket falls inside the pool");
        chosen.push(pool.swap_remove(pos));
    }
    chosen.sort_unstable();
    Ok(chosen)
}

/// All `w`-subsets of `0..m` in lexicographic order.
pub(crate) fn all_subsets(m: usize, w: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(w);
    fn rec(start: usize, m: usize, w: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == w {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            if m - i < w - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, m, w, cur, out);
            cur.pop();
        }
    }
    rec(0, m, w, &mut cur, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn all_ones_profile_is_unique() {
        let p = WeightProfile {
            col_weight_counts: vec![(3, 4)],
            row_weight_counts: vec![(4, 3)],
            require_distinct_rows: false,
            require_distinct_cols: false,
        };
        let mat = profile_sample(&p, 3, 4, &mut stream(1), 10).unwrap();
        assert_eq!(mat, SensingMatrix::ones(3, 4));
    }

    #[test]
    fn handshake_violation_is_an_error() {
        let p = WeightProfile::new(vec![(2, 3)], vec![(2, 2)]);
        let err = profile_sample(&p, 2, 3, &mut stream(1), 10).unwrap_err();
        assert!(err.to_string().contains("handshake"), "{err}");
    }

    #[test]
    fn gale_ryser_rejects_unrealisable_margins() {
        // Totals agree (4 = 4) but a weight-3 column cannot fit in rows
        // where only two have capacity.
        let p = WeightProfile {
            col_weight_counts: vec![(3, 1), (1, 1)],
            row_weight_counts: vec![(2, 2), (0, 1)],
            require_distinct_rows: false,
            require_distinct_cols: false,
        };
        assert!(p.check(3, 2).is_err());
    }

    #[test]
    fn too_many_distinct_columns_rejected() {
        let p = WeightProfile::new(vec![(1, 4)], vec![(2, 2)]);
        let err = p.check(2, 4).unwrap_err();
        assert!(err.to_string().contains("distinct"), "{err}");
    }

    #[test]
    fn verify_reports_row_weight_violation() {
        let zeros = SensingMatrix::from_flat(2, 2, vec![0; 4]).unwrap();
        let p = WeightProfile {
            col_weight_counts: vec![(1, 2)],
            row_weight_counts: vec![(1, 2)],
            require_distinct_rows: false,
            require_distinct_cols: false,
        };
        let r = verify_profile(&zeros, &p);
        assert!(!r.ok);
        assert!(r.violation.unwrap().contains("row-weight"));
    }

    #[test]
    fn verify_reports_duplicate_columns() {
        let m = SensingMatrix::from_rows(vec![vec![1, 1, 0], vec![0, 0, 1]]).unwrap();
        let p = WeightProfile::new(vec![(1, 3)], vec![(2, 1), (1, 1)]);
        let r = verify_profile(&m, &p);
        assert!(!r.ok);
        assert!(r.violation.unwrap().contains("columns 0 and 1"));
    }

    #[test]
    fn subsets_enumeration() {
        assert_eq!(all_subsets(4, 2).len(), 6);
        assert_eq!(all_subsets(5, 0), vec![Vec::<usize>::new()]);
        assert_eq!(binomial(31, 4), 31_465);
        assert_eq!(binomial(3, 5), 0);
    }
}
