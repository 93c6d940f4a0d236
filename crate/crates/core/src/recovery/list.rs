//! Candidate enumeration and the alpha-list union.

use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use super::score::Scorer;
use super::{CandidateScore, DecoderConfig, ReducedInstance};
use crate::error::{Error, Result};
use crate::model::{LoadLaw, NoiseModel};

/// Candidate sizes `max(k-w, 1) ..= min(k+w, available)` around `k_hat`
/// (clamped into `1..=available`). An empty set of survivors gives `0..=0`.
pub fn size_window(k_hat: usize, k_window: usize, available: usize) -> RangeInclusive<usize> {
    if available == 0 {
        return 0..=0;
    }
    let k = k_hat.clamp(1, available);
    k.saturating_sub(k_window).max(1)..=(k + k_window).min(available)
}

/// Every scored candidate of one pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ListDecode {
    pub survivors: Vec<usize>,
    /// Optimised candidates in enumeration order (ascending size).
    pub candidates: Vec<CandidateScore>,
    /// Index of the best candidate; ties go to the smaller, then
    /// lexicographically smaller subset. `None` when no subset covers the
    /// positive rows.
    pub best: Option<usize>,
    /// Covering subsets enumerated.
    pub enumerated: usize,
    /// Covering subsets skipped because their score bound fell below the
    /// floor.
    pub pruned: usize,
    pub budget_exceeded: bool,
    /// Thresholds below this value may miss pruned candidates.
    pub floor: f64,
}

impl ListDecode {
    pub fn best_log_score(&self) -> f64 {
        self.best.map_or(f64::NEG_INFINITY, |b| self.candidates[b].log_score)
    }

    pub fn best_subset(&self) -> Option<&[usize]> {
        self.best.map(|b| self.candidates[b].subset.as_slice())
    }

    /// Union of all candidates with `f(T) >= alpha * f*`, ascending.
    ///
    /// When no candidate explains the readings (`f* = 0`) every subset
    /// qualifies, so the union is all survivors.
    pub fn union_at(&self, alpha: f64) -> Vec<usize> {
        assert!(
            alpha > 0.0 && alpha <= 1.0 && alpha >= self.floor * (1.0 - 1e-12),
            "alpha {alpha} outside (floor {}, 1]",
            self.floor
        );
        let Some(best) = self.best else {
            return self.survivors.clone();
        };
        let threshold = self.candidates[best].log_score + alpha.ln();
        let mut out: Vec<usize> = self
            .candidates
            .iter()
            .filter(|c| c.log_score >= threshold)
            .flat_map(|c| c.subset.iter().copied())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

struct Search<'s, 'a> {
    scorer: &'s Scorer<'a>,
    cfg: &'s DecoderConfig,
    ln_floor: f64,
    out: ListDecode,
}

impl Search<'_, '_> {
    fn threshold(&self) -> f64 {
        self.out.best_log_score() + self.ln_floor
    }

    /// Returns `false` once the budget is spent.
    fn visit(&mut self, local: &[usize]) -> bool {
        self.out.enumerated += 1;
        if self.out.enumerated > self.cfg.enumeration_cap {
            self.out.enumerated -= 1;
            self.out.budget_exceeded = true;
            return false;
        }
        if self.scorer.upper_bound(local) < self.threshold() {
            self.out.pruned += 1;
            return true;
        }
        let cand = self.scorer.score(local, &self.cfg.optimizer);
        if cand.log_score > self.out.best_log_score() {
            self.out.best = Some(self.out.candidates.len());
        }
        self.out.candidates.push(cand);
        true
    }

    /// Depth-first over size-`k` subsets of `cols` whose row masks, together
    /// with `covered`, reach `target`.
    fn combos(
        &mut self,
        cols: &[usize],
        suffix: &[u128],
        k: usize,
        target: u128,
        prefix: &mut Vec<usize>,
        covered: u128,
        start: usize,
        emit: &mut dyn FnMut(&mut Self, &[usize], u128) -> bool,
    ) -> bool {
        if prefix.len() == k {
            return covered & target != target || emit(self, prefix, covered);
        }
        let need = k - prefix.len();
        if cols.len() < start + need {
            return true;
        }
        for pos in start..=cols.len() - need {
            // Masks only shrink further right.
            if (covered | suffix[pos]) & target != target {
                break;
            }
            prefix.push(cols[pos]);
            let go_on = self.combos(
                cols,
                suffix,
                k,
                target,
                prefix,
                covered | self.scorer.col_masks[cols[pos]],
                pos + 1,
                emit,
            );
            prefix.pop();
            if !go_on {
                return false;
            }
        }
        true
    }

    /// Size-indexed subsets of `cols` that cover the rows `own`, with their
    /// row masks. `false` when the budget ran out.
    fn half_parts(&mut self, cols: &[usize], own: u128, win: RangeInclusive<usize>) -> (Vec<Vec<(Vec<usize>, u128)>>, bool) {
        let suffix = self.suffix_masks(cols);
        let cap = self.cfg.enumeration_cap;
        let mut by_size = vec![Vec::new(); *win.end() + 1];
        for k in win {
            let mut found = Vec::new();
            let ok = self.combos(cols, &suffix, k, own, &mut Vec::new(), 0, 0, &mut |_, t, m| {
                found.push((t.to_vec(), m));
                found.len() <= cap
            });
            by_size[k] = found;
            if !ok {
                return (by_size, false);
            }
        }
        (by_size, true)
    }

    /// Highest score wins; ties go to the smaller, then lexicographically
    /// smaller subset.
    fn finish(mut self) -> ListDecode {
        let c = &self.out.candidates;
        self.out.best = (0..c.len())
            .filter(|&i| c[i].log_score > f64::NEG_INFINITY)
            .min_by(|&i, &j| {
                c[j].log_score
                    .total_cmp(&c[i].log_score)
                    .then(c[i].subset.len().cmp(&c[j].subset.len()))
                    .then(c[i].subset.cmp(&c[j].subset))
            });
        self.out
    }

    fn suffix_masks(&self, cols: &[usize]) -> Vec<u128> {
        let mut suffix = vec![0u128; cols.len() + 1];
        for pos in (0..cols.len()).rev() {
            suffix[pos] = suffix[pos + 1] | self.scorer.col_masks[cols[pos]];
        }
        suffix
    }
}

fn prevalence(cfg: &DecoderConfig, p: f64) -> f64 {
    match cfg.prevalence {
        super::PrevalenceMode::Known { p } => p,
        super::PrevalenceMode::Estimate => p,
    }
}

fn start<'s, 'a>(scorer: &'s Scorer<'a>, cfg: &'s DecoderConfig) -> Search<'s, 'a> {
    Search {
        scorer,
        cfg,
        ln_floor: cfg.floor().ln(),
        out: ListDecode {
            survivors: scorer.reduced.survivors.clone(),
            candidates: Vec::new(),
            best: None,
            enumerated: 0,
            pruned: 0,
            budget_exceeded: false,
            floor: cfg.floor(),
        },
    }
}

fn check_active(reduced: &ReducedInstance) -> Result<()> {
    if reduced.m_star() == 0 {
        return Err(Error::invalid("list decoding needs at least one positive reading"));
    }
    Ok(())
}

/// Scores every covering subset of the survivors with size in the window
/// around `k_hat`. `p` is the prevalence used when the config asks for an
/// estimate; a known prevalence in the config overrides it.
pub fn list_scores(
    reduced: &ReducedInstance,
    k_hat: usize,
    cfg: &DecoderConfig,
    p: f64,
    noise: &NoiseModel,
    law: &LoadLaw,
) -> Result<ListDecode> {
    cfg.validate()?;
    check_active(reduced)?;
    let scorer = Scorer::new(reduced, prevalence(cfg, p), noise, law)?;
    let mut search = start(&scorer, cfg);
    let cols: Vec<usize> = (0..reduced.s_star()).collect();
    let suffix = search.suffix_masks(&cols);
    let target = scorer.full_mask;
    for k in size_window(k_hat, cfg.k_window, reduced.s_star()) {
        if k == 0 || scorer.size_bound(k) < search.threshold() {
            continue;
        }
        let go_on = search.combos(&cols, &suffix, k, target, &mut Vec::new(), 0, 0, &mut |s, t, _| s.visit(t));
        if !go_on {
            break;
        }
    }
    Ok(search.finish())
}

/// As [`list_scores`] for a mixed pool of two equal halves: candidates are
/// `T1 ∪ T2` with `T1` from the first half's survivors and `T2` from the
/// second's, each sized by its own window. A half without survivors gets
/// the window `{0}`.
pub fn list_scores_mixed(
    reduced: &ReducedInstance,
    k_hat_a: usize,
    k_hat_b: usize,
    cfg: &DecoderConfig,
    p: f64,
    noise: &NoiseModel,
    law: &LoadLaw,
) -> Result<ListDecode> {
    cfg.validate()?;
    check_active(reduced)?;
    if reduced.pool_width % 2 != 0 {
        return Err(Error::invalid(format!(
            "mixed pool width must be even, got {}",
            reduced.pool_width
        )));
    }
    let split = reduced.pool_width / 2;
    let scorer = Scorer::new(reduced, prevalence(cfg, p), noise, law)?;
    let mut search = start(&scorer, cfg);
    let (half_a, half_b): (Vec<usize>, Vec<usize>) =
        (0..reduced.s_star()).partition(|&j| reduced.survivors[j] < split);
    let mask_of = |cols: &[usize]| cols.iter().fold(0u128, |m, &j| m | scorer.col_masks[j]);
    let (reach_a, reach_b) = (mask_of(&half_a), mask_of(&half_b));
    // Rows only one half can explain must be covered by that half alone.
    let own_a = scorer.full_mask & !reach_b;
    let own_b = scorer.full_mask & !reach_a;
    let win_a = size_window(k_hat_a, cfg.k_window, half_a.len());
    let win_b = size_window(k_hat_b, cfg.k_window, half_b.len());

    let (parts_a, ok_a) = search.half_parts(&half_a, own_a, win_a.clone());
    let (parts_b, ok_b) = search.half_parts(&half_b, own_b, win_b.clone());
    if !(ok_a && ok_b) {
        search.out.budget_exceeded = true;
        return Ok(search.finish());
    }

    let totals = (win_a.start() + win_b.start())..=(win_a.end() + win_b.end());
    'sizes: for total in totals {
        if total == 0 || scorer.size_bound(total) < search.threshold() {
            continue;
        }
        for ka in win_a.clone() {
            let Some(kb) = total.checked_sub(ka).filter(|kb| win_b.contains(kb)) else {
                continue;
            };
            for (ta, ma) in &parts_a[ka] {
                for (tb, mb) in &parts_b[kb] {
                    if (ma | mb) != scorer.full_mask {
                        continue;
                    }
                    let t: Vec<usize> = ta.iter().chain(tb).copied().collect();
                    if !search.visit(&t) {
                        break 'sizes;
                    }
                }
            }
        }
    }
    Ok(search.finish())
}

fn finish(list: ListDecode, alpha: f64) -> Result<Vec<usize>> {
    let support = list.union_at(alpha);
    if list.budget_exceeded {
        return Err(Error::BudgetExceeded {
            cap: list.enumerated,
            partial: support,
        });
    }
    Ok(support)
}

/// MAP list decoding of a single pool: the union of every candidate within
/// a factor `cfg.alpha` of the best score, as pool column indices.
///
/// Exceeding the enumeration cap yields [`Error::BudgetExceeded`] carrying
/// the union over the candidates scored so far.
pub fn map_list_decode(
    reduced: &ReducedInstance,
    k_hat: usize,
    cfg: &DecoderConfig,
    p: f64,
    noise: &NoiseModel,
    law: &LoadLaw,
) -> Result<Vec<usize>> {
    finish(list_scores(reduced, k_hat, cfg, p, noise, law)?, cfg.alpha)
}

/// MAP list decoding of a mixed pool; see [`list_scores_mixed`].
pub fn map_list_decode_mixed(
    reduced: &ReducedInstance,
    k_hat_a: usize,
    k_hat_b: usize,
    cfg: &DecoderConfig,
    p: f64,
    noise: &NoiseModel,
    law: &LoadLaw,
) -> Result<Vec<usize>> {
    finish(list_scores_mixed(reduced, k_hat_a, k_hat_b, cfg, p, noise, law)?, cfg.alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrices::{builtin_matrix, SensingMatrix};
    use crate::recovery::{comp, PoolInstance};

    fn noiseless() -> NoiseModel {
        NoiseModel::new(1e-4, 0.0).unwrap()
    }

    #[test]
    fn windows() {
        assert_eq!(size_window(3, 1, 10), 2..=4);
        assert_eq!(size_window(1, 1, 10), 1..=2);
        assert_eq!(size_window(5, 1, 3), 2..=3);
        assert_eq!(size_window(2, 1, 0), 0..=0);
        assert_eq!(size_window(0, 1, 4), 1..=2);
    }

    fn pool(mat: &SensingMatrix, x: &[f64]) -> ReducedInstance {
        comp(&PoolInstance::new(mat.clone(), mat.apply(x)).unwrap())
    }

    #[test]
    fn alpha_one_returns_argmax() {
        let mat = builtin_matrix(6, 31).unwrap().vstack(&SensingMatrix::ones(1, 31)).unwrap();
        let mut x = vec![0.0; 31];
        x[4] = 300.0;
        x[17] = 41.0;
        let r = pool(&mat, &x);
        let cfg = DecoderConfig { alpha: 1.0, ..Default::default() };
        let list = list_scores(&r, 2, &cfg, 0.01, &noiseless(), &LoadLaw::default()).unwrap();
        assert_eq!(list.best_subset(), Some(&[4, 17][..]));
        assert_eq!(list.union_at(1.0), vec![4, 17]);
    }

    #[test]
    fn tiny_alpha_unions_everything_scored() {
        let mat = SensingMatrix::from_rows(vec![vec![1, 1, 0], vec![0, 1, 1], vec![1, 1, 1]]).unwrap();
        let r = pool(&mat, &[10.0, 20.0, 30.0]);
        let cfg = DecoderConfig { alpha: 1e-300, ..Default::default() };
        let list = list_scores(&r, 2, &cfg, 0.1, &NoiseModel::tapestry(), &LoadLaw::default()).unwrap();
        let all: Vec<usize> = {
            let mut v: Vec<usize> = list.candidates.iter().flat_map(|c| c.subset.clone()).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        assert_eq!(list.union_at(1e-300), all);
        assert_eq!(all, vec![0, 1, 2]);
    }

    #[test]
    fn budget_overflow_is_reported() {
        let mat = SensingMatrix::ones(1, 12);
        let r = pool(&mat, &[50.0; 12]);
        let cfg = DecoderConfig { enumeration_cap: 10, ..Default::default() };
        match map_list_decode(&r, 4, &cfg, 0.2, &NoiseModel::tapestry(), &LoadLaw::default()) {
            Err(Error::BudgetExceeded { cap, partial }) => {
                assert_eq!(cap, 10);
                assert!(!partial.is_empty());
            }
            other => panic!("expected budget error, got {other:?}"),
        }
    }

    #[test]
    fn mixed_with_empty_half_matches_single() {
        // 62-wide pool; positives only in the second half.
        let mut rows = vec![[vec![1u8; 31], vec![0u8; 31]].concat(), [vec![0u8; 31], vec![1u8; 31]].concat()];
        let stage2 = builtin_matrix(9, 62).unwrap();
        rows.extend(stage2.to_rows());
        let mat = SensingMatrix::from_rows(rows).unwrap();
        let mut x = vec![0.0; 62];
        x[40] = 512.0;
        let r = pool(&mat, &x);
        assert!(r.survivors.iter().all(|&c| c >= 31));
        let cfg = DecoderConfig::default();
        let law = LoadLaw::default();
        let mixed = map_list_decode_mixed(&r, 1, 1, &cfg, 0.01, &noiseless(), &law).unwrap();
        let single = map_list_decode(&r, 1, &cfg, 0.01, &noiseless(), &law).unwrap();
        assert_eq!(mixed, single);
        assert_eq!(mixed, vec![40]);
    }

    #[test]
    fn mixed_one_per_half() {
        let mut rows = vec![[vec![1u8; 31], vec![0u8; 31]].concat(), [vec![0u8; 31], vec![1u8; 31]].concat()];
        rows.extend(builtin_matrix(9, 62).unwrap().to_rows());
        let mat = SensingMatrix::from_rows(rows).unwrap();
        let mut x = vec![0.0; 62];
        x[7] = 88.0;
        x[50] = 650.0;
        let r = pool(&mat, &x);
        let cfg = DecoderConfig { alpha: 1.0, ..Default::default() };
        let got = map_list_decode_mixed(&r, 1, 1, &cfg, 0.01, &noiseless(), &LoadLaw::default()).unwrap();
        assert_eq!(got, vec![7, 50]);
    }
}
