//! Distance-correlation statistic and resampling-based randomization
//! inference for H0: X is independent of Y_D within one period.
//!
//! The null model replaces a period's treatment window with a window drawn
//! uniformly from the pool of all observed focal windows, preserving
//! within-window autocorrelation. P-values use add-one smoothing, so they
//! lie in [1/(1+R), 1] and never reach zero.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{is_constant, PairPeriod};
use crate::seed::period_seed;

/// Double-centered pairwise-distance matrix for one vector, with its
/// distance variance. Centering once and reusing it is what makes mass
/// resampling cheap: each null draw is then a single dot product.
#[derive(Debug, Clone)]
pub struct CenteredDistance {
    n: usize,
    /// Row-major n*n centered matrix.
    centered: Vec<f64>,
    dvar2: f64,
}

impl CenteredDistance {
    pub fn new(values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n < 2 {
            return Err(Error::BadVectors {
                x_len: n,
                y_len: n,
            });
        }
        let mut dist = vec![0.0; n * n];
        let mut row_means = vec![0.0; n];
        for i in 0..n {
            let mut sum = 0.0;
            for j in 0..n {
                let d = (values[i] - values[j]).abs();
                dist[i * n + j] = d;
                sum += d;
            }
            row_means[i] = sum / n as f64;
        }
        let grand_mean = row_means.iter().sum::<f64>() / n as f64;

        let mut dvar2 = 0.0;
        // symmetric distances: column mean j equals row mean j
        for i in 0..n {
            for j in 0..n {
                let c = dist[i * n + j] - row_means[i] - row_means[j] + grand_mean;
                dist[i * n + j] = c;
                dvar2 += c * c;
            }
        }
        dvar2 /= (n * n) as f64;

        Ok(CenteredDistance {
            n,
            centered: dist,
            dvar2,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Distance variance (squared); exactly 0 for a constant vector.
    pub fn dvar2(&self) -> f64 {
        self.dvar2
    }
}

/// Distance correlation between two precentered matrices, in [0, 1].
/// Returns 0 when either distance variance is 0 (constant input).
pub fn dcor_from_centered(a: &CenteredDistance, b: &CenteredDistance) -> f64 {
    debug_assert_eq!(a.n, b.n);
    if a.dvar2 == 0.0 || b.dvar2 == 0.0 {
        return 0.0;
    }
    let n2 = (a.n * a.n) as f64;
    let dcov2: f64 = a
        .centered
        .iter()
        .zip(&b.centered)
        .map(|(x, y)| x * y)
        .sum::<f64>()
        / n2;
    // rounding can leave a tiny negative where the true value is ~0
    let dcov2 = dcov2.max(0.0);
    (dcov2 / (a.dvar2 * b.dvar2).sqrt()).sqrt().min(1.0)
}

/// Distance correlation dCor(x, y) in [0, 1], biased (V-statistic) form.
pub fn distance_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::BadVectors {
            x_len: x.len(),
            y_len: y.len(),
        });
    }
    Ok(dcor_from_centered(
        &CenteredDistance::new(x)?,
        &CenteredDistance::new(y)?,
    ))
}

/// Pool of observed treatment windows, deduplicated per (focal, period),
/// from which the null model draws. Pool order is canonical (sorted by
/// focal id then period index), so results do not depend on input order.
pub struct NullPool {
    tau: usize,
    centered: Vec<CenteredDistance>,
    index: BTreeMap<(String, usize), usize>,
}

impl NullPool {
    /// Build from sliced periods. Each unique (focal, period) treatment
    /// window enters once, however many targets share it.
    pub fn from_periods(periods: &[PairPeriod]) -> Result<NullPool> {
        if periods.is_empty() {
            return Err(Error::NullPool("no periods to pool".into()));
        }
        let tau = periods[0].tau;
        let mut windows: BTreeMap<(String, usize), &[f64]> = BTreeMap::new();
        for p in periods {
            if p.tau != tau || p.x_window.len() != tau {
                return Err(Error::NullPool(format!(
                    "window length mismatch: expected {}, got {} for ({}, period {})",
                    tau,
                    p.x_window.len(),
                    p.focal_id,
                    p.period_index
                )));
            }
            windows
                .entry((p.focal_id.clone(), p.period_index))
                .or_insert(&p.x_window);
        }
        let mut centered = Vec::with_capacity(windows.len());
        let mut index = BTreeMap::new();
        for (key, window) in windows {
            index.insert(key, centered.len());
            centered.push(CenteredDistance::new(window)?);
        }
        Ok(NullPool {
            tau,
            centered,
            index,
        })
    }

    /// Build from raw windows (no exclusion bookkeeping).
    pub fn from_windows(windows: &[Vec<f64>]) -> Result<NullPool> {
        if windows.is_empty() {
            return Err(Error::NullPool("empty pool".into()));
        }
        let tau = windows[0].len();
        let mut centered = Vec::with_capacity(windows.len());
        for w in windows {
            if w.len() != tau {
                return Err(Error::NullPool("window length mismatch in pool".into()));
            }
            centered.push(CenteredDistance::new(w)?);
        }
        Ok(NullPool {
            tau,
            centered,
            index: BTreeMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.centered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centered.is_empty()
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    fn own_index(&self, period: &PairPeriod) -> Option<usize> {
        self.index
            .get(&(period.focal_id.clone(), period.period_index))
            .copied()
    }
}

/// Extension point for alternative independence tests: discrete data can
/// use an exact test, and with long windows a mutual-information test
/// becomes viable. Implementations produce an [`IndependenceResult`] per
/// period; only the resampling distance-correlation test ships, and
/// discovery uses it directly.
pub trait PeriodIndependenceTest {
    fn test(&self, period: &PairPeriod) -> Result<IndependenceResult>;
}

/// The default test: distance correlation with pool-resampling inference.
pub struct ResamplingDcorTest<'a> {
    pub pool: &'a NullPool,
    pub n_resamples: usize,
    pub base_seed: u64,
}

impl PeriodIndependenceTest for ResamplingDcorTest<'_> {
    fn test(&self, period: &PairPeriod) -> Result<IndependenceResult> {
        randomization_pvalue(period, self.pool, self.n_resamples, self.base_seed)
    }
}

/// Outcome of one randomization test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceResult {
    pub focal_id: String,
    pub target_id: String,
    pub period_index: usize,
    /// Observed distance correlation of (x, y_d), in [0, 1].
    pub statistic: f64,
    /// Add-one resampling p-value, in [1/(1+R), 1].
    pub p_value: f64,
    pub n_resamples: usize,
    pub seed: u64,
    /// True when x or y_d was exactly constant; no meaningful test occurred.
    pub degenerate: bool,
}

pub(crate) fn add_one_pvalue(count_ge: usize, n_resamples: usize) -> f64 {
    (1 + count_ge) as f64 / (1 + n_resamples) as f64
}

/// Randomization p-value for H0: x independent of y_d in one period.
///
/// Draws `n_resamples` windows uniformly from the pool (excluding the
/// period's own window when the pool holds more than one) and counts null
/// statistics at least as large as the observed one. Deterministic given
/// the base seed: the per-period seed is derived from (seed, focal,
/// target, period index), so scheduling cannot change results.
pub fn randomization_pvalue(
    period: &PairPeriod,
    pool: &NullPool,
    n_resamples: usize,
    base_seed: u64,
) -> Result<IndependenceResult> {
    if pool.is_empty() {
        return Err(Error::NullPool("empty pool".into()));
    }
    if n_resamples == 0 {
        return Err(Error::invalid("n_resamples", "must be >= 1"));
    }
    if pool.tau() != period.tau {
        return Err(Error::NullPool(format!(
            "pool window length {} does not match period tau {}",
            pool.tau(),
            period.tau
        )));
    }

    let seed = period_seed(
        base_seed,
        &period.focal_id,
        &period.target_id,
        period.period_index,
    );
    let degenerate = is_constant(&period.x_window) || is_constant(&period.y_d_window);
    let mut result = IndependenceResult {
        focal_id: period.focal_id.clone(),
        target_id: period.target_id.clone(),
        period_index: period.period_index,
        statistic: 0.0,
        p_value: 1.0,
        n_resamples,
        seed,
        degenerate,
    };
    if degenerate {
        // statistic is 0 by convention and every null draw ties it
        return Ok(result);
    }

    let y_centered = CenteredDistance::new(&period.y_d_window)?;
    let observed = dcor_from_centered(&CenteredDistance::new(&period.x_window)?, &y_centered);

    let own = pool.own_index(period).filter(|_| pool.len() > 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut count_ge = 0usize;
    for _ in 0..n_resamples {
        let idx = match own {
            Some(own_idx) => {
                let mut i = rng.gen_range(0..pool.len() - 1);
                if i >= own_idx {
                    i += 1;
                }
                i
            }
            None => rng.gen_range(0..pool.len()),
        };
        let null_stat = dcor_from_centered(&pool.centered[idx], &y_centered);
        if null_stat >= observed {
            count_ge += 1;
        }
    }

    result.statistic = observed;
    result.p_value = add_one_pvalue(count_ge, n_resamples);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use proptest::prelude::*;

    /// Brute-force oracle: materialize both distance matrices, center them
    /// with explicit row/column/grand means, and combine. Kept independent
    /// of the production path on purpose.
    fn oracle_dcor(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let matrix = |v: &[f64]| -> Vec<Vec<f64>> {
            (0..n)
                .map(|i| (0..n).map(|j| (v[i] - v[j]).abs()).collect())
                .collect()
        };
        let center = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
            let row: Vec<f64> = m.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
            let col: Vec<f64> = (0..n)
                .map(|j| m.iter().map(|r| r[j]).sum::<f64>() / n as f64)
                .collect();
            let grand = row.iter().sum::<f64>() / n as f64;
            (0..n)
                .map(|i| (0..n).map(|j| m[i][j] - row[i] - col[j] + grand).collect())
                .collect()
        };
        let a = center(&matrix(x));
        let b = center(&matrix(y));
        let mean_prod = |p: &Vec<Vec<f64>>, q: &Vec<Vec<f64>>| -> f64 {
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    s += p[i][j] * q[i][j];
                }
            }
            s / (n * n) as f64
        };
        let dcov2 = mean_prod(&a, &b).max(0.0);
        let dvarx = mean_prod(&a, &a);
        let dvary = mean_prod(&b, &b);
        if dvarx == 0.0 || dvary == 0.0 {
            0.0
        } else {
            (dcov2 / (dvarx * dvary).sqrt()).sqrt()
        }
    }

    fn period(x: Vec<f64>, y_d: Vec<f64>) -> PairPeriod {
        let tau = x.len();
        PairPeriod {
            focal_id: "f".into(),
            target_id: "t".into(),
            period_index: 0,
            start_date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            tau,
            x_window: x,
            y_r_window: vec![0.0; tau],
            y_d_window: y_d,
        }
    }

    #[test]
    fn identical_vectors_have_dcor_one() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(distance_correlation(&v, &v).unwrap(), 1.0);
    }

    #[test]
    fn constant_vector_gives_zero() {
        let x = [1.0, 2.0, 3.0];
        let y = [7.0, 7.0, 7.0];
        assert_eq!(distance_correlation(&x, &y).unwrap(), 0.0);
    }

    #[test]
    fn matches_oracle_on_fixed_case() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 3.0, 2.0, 4.0];
        let got = distance_correlation(&x, &y).unwrap();
        let want = oracle_dcor(&x, &y);
        assert!((got - want).abs() < 1e-12, "got {got}, oracle {want}");
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(distance_correlation(&[1.0], &[2.0]).is_err());
        assert!(distance_correlation(&[1.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn add_one_counting_rule() {
        // R=4 null stats (0.2, 0.5, 0.9, 0.1) against s0=0.6: one exceeds
        assert_eq!(add_one_pvalue(1, 4), 0.4);
        assert_eq!(add_one_pvalue(0, 4), 0.2);
        assert_eq!(add_one_pvalue(4, 4), 1.0);
    }

    #[test]
    fn degenerate_x_short_circuits_to_p_one() {
        let pp = period(vec![3.0; 6], vec![1.0, 2.0, 1.0, 3.0, 2.0, 1.0]);
        let pool = NullPool::from_windows(&[vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]]).unwrap();
        let res = randomization_pvalue(&pp, &pool, 50, 1).unwrap();
        assert!(res.degenerate);
        assert_eq!(res.statistic, 0.0);
        assert_eq!(res.p_value, 1.0);
    }

    #[test]
    fn empty_pool_and_tau_mismatch_are_errors() {
        let pp = period(vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 9.0]);
        assert!(NullPool::from_windows(&[]).is_err());
        let short = NullPool::from_windows(&[vec![1.0, 2.0]]).unwrap();
        assert!(randomization_pvalue(&pp, &short, 10, 1).is_err());
    }

    #[test]
    fn trait_object_matches_direct_call() {
        let pp = period(
            vec![3.0, 1.0, 4.0, 1.0, 5.0],
            vec![9.0, 2.0, 6.0, 5.0, 3.0],
        );
        let windows: Vec<Vec<f64>> = (0..10)
            .map(|k| (0..5).map(|i| ((k * 3 + i) % 7) as f64).collect())
            .collect();
        let pool = NullPool::from_windows(&windows).unwrap();
        let test: &dyn PeriodIndependenceTest = &ResamplingDcorTest {
            pool: &pool,
            n_resamples: 50,
            base_seed: 5,
        };
        assert_eq!(
            test.test(&pp).unwrap(),
            randomization_pvalue(&pp, &pool, 50, 5).unwrap()
        );
    }

    #[test]
    fn deterministic_given_seed() {
        let pp = period(
            vec![1.0, 5.0, 2.0, 8.0, 3.0, 9.0],
            vec![2.0, 2.0, 7.0, 1.0, 5.0, 4.0],
        );
        let windows: Vec<Vec<f64>> = (0..20)
            .map(|k| (0..6).map(|i| ((k * 7 + i * 3) % 11) as f64).collect())
            .collect();
        let pool = NullPool::from_windows(&windows).unwrap();
        let a = randomization_pvalue(&pp, &pool, 200, 42).unwrap();
        let b = randomization_pvalue(&pp, &pool, 200, 42).unwrap();
        let c = randomization_pvalue(&pp, &pool, 200, 43).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.statistic, c.statistic);
        assert_ne!(a.seed, c.seed);
    }

    #[test]
    fn own_window_is_excluded_from_draws() {
        // pool of two windows: the period's own (perfectly dependent with
        // y_d) and one other; with exclusion every null draw uses the other
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let y_d = x.clone();
        let other = vec![5.0, 1.0, 4.0, 2.0, 3.0];
        let mut p1 = period(x.clone(), y_d);
        p1.focal_id = "f1".into();
        let mut p2 = period(other.clone(), vec![1.0, 1.0, 2.0, 1.0, 1.0]);
        p2.focal_id = "f2".into();
        let pool = NullPool::from_periods(&[p1.clone(), p2]).unwrap();
        let res = randomization_pvalue(&p1, &pool, 100, 7).unwrap();
        // s0 = 1.0; the other window's dcor with y_d is < 1, so no null
        // draw can tie unless the own window were drawn
        assert_eq!(res.statistic, 1.0);
        assert_eq!(res.p_value, add_one_pvalue(0, 100));
    }

    proptest! {
        #[test]
        fn symmetry_is_exact(
            v in proptest::collection::vec((0u8..20).prop_map(f64::from), 2..12),
            w in proptest::collection::vec((0u8..20).prop_map(f64::from), 2..12),
        ) {
            let n = v.len().min(w.len());
            let x = &v[..n];
            let y = &w[..n];
            prop_assert_eq!(
                distance_correlation(x, y).unwrap(),
                distance_correlation(y, x).unwrap()
            );
        }

        #[test]
        fn shift_and_positive_scale_invariance(
            v in proptest::collection::vec(-50.0f64..50.0, 3..10),
            w in proptest::collection::vec(-50.0f64..50.0, 3..10),
            a in 0.1f64..10.0,
            b in -20.0f64..20.0,
        ) {
            let n = v.len().min(w.len());
            let x = &v[..n];
            let y = &w[..n];
            let scaled: Vec<f64> = x.iter().map(|&t| a * t + b).collect();
            let base = distance_correlation(x, y).unwrap();
            let transformed = distance_correlation(&scaled, y).unwrap();
            prop_assert!((base - transformed).abs() < 1e-9);
        }

        #[test]
        fn production_matches_oracle_on_small_grids(
            v in proptest::collection::vec((0u8..4).prop_map(f64::from), 2..17),
            w in proptest::collection::vec((0u8..4).prop_map(f64::from), 2..17),
        ) {
            let n = v.len().min(w.len());
            let got = distance_correlation(&v[..n], &w[..n]).unwrap();
            let want = oracle_dcor(&v[..n], &w[..n]);
            prop_assert!((got - want).abs() < 1e-12);
        }

        #[test]
        fn pvalue_stays_in_add_one_range(seed in any::<u64>()) {
            let pp = period(
                vec![1.0, 4.0, 2.0, 6.0, 3.0],
                vec![2.0, 3.0, 9.0, 1.0, 6.0],
            );
            let windows: Vec<Vec<f64>> = (0..8)
                .map(|k| (0..5).map(|i| ((k * 3 + i * 5) % 7) as f64).collect())
                .collect();
            let pool = NullPool::from_windows(&windows).unwrap();
            let res = randomization_pvalue(&pp, &pool, 25, seed).unwrap();
            prop_assert!(res.p_value >= 1.0 / 26.0);
            prop_assert!(res.p_value <= 1.0);
        }
    }
}
