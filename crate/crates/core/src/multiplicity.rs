//! Error from mass hypothesis testing: estimators for the fraction of
//! truly independent pairs, the false non-discovery bound phi, and the
//! asymmetric error interval around the effect estimate.
//!
//! The screen accepts pairs with LARGE p-values, so the quantity bounded
//! here is the expected fraction of accepted instances that are actually
//! dependent (a false non-discovery rate), not the usual FDR.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which independent-fraction estimator drives the reported phi.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PiEstimator {
    Nettleton,
    Storey,
}

impl std::str::FromStr for PiEstimator {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "nettleton" => Ok(PiEstimator::Nettleton),
            "storey" => Ok(PiEstimator::Storey),
            other => Err(format!("unknown pi estimator `{other}` (expected nettleton|storey)")),
        }
    }
}

/// Storey's estimator of the independent fraction:
/// #{p > lambda} / (m (1 - lambda)), clamped to [0, 1].
pub fn storey_pi_indep(p_values: &[f64], lambda: f64) -> Result<f64> {
    if p_values.is_empty() {
        return Err(Error::EmptyInput("p-values"));
    }
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::invalid("lambda", format!("must be in [0, 1), got {lambda}")));
    }
    let w_lambda = p_values.iter().filter(|&&p| p > lambda).count();
    let raw = w_lambda as f64 / (p_values.len() as f64 * (1.0 - lambda));
    Ok(raw.clamp(0.0, 1.0))
}

/// Histogram of p-values into `bins` equal-width bins over [0, 1]. A value
/// of exactly 1 lands in the last bin.
pub fn pvalue_histogram(p_values: &[f64], bins: usize) -> Result<Vec<usize>> {
    if bins < 2 {
        return Err(Error::invalid("bins", "must be >= 2"));
    }
    let mut counts = vec![0usize; bins];
    for &p in p_values {
        let idx = ((p * bins as f64).floor() as usize).min(bins - 1);
        counts[idx] += 1;
    }
    Ok(counts)
}

/// Nettleton's estimator: choose lambda adaptively as (I-1)/B where I is
/// the left-most histogram bin whose count fails to exceed the mean count
/// of the bins to its right, then apply Storey's formula at that lambda.
///
/// Returns (pi_indep, lambda).
pub fn nettleton_pi_indep(p_values: &[f64], bins: usize) -> Result<(f64, f64)> {
    if p_values.is_empty() {
        return Err(Error::EmptyInput("p-values"));
    }
    let counts = pvalue_histogram(p_values, bins)?;

    let mut chosen = bins; // fallback when no earlier bin qualifies
    for i in 1..bins {
        let right = &counts[i..];
        let right_mean = right.iter().sum::<usize>() as f64 / right.len() as f64;
        if counts[i - 1] as f64 <= right_mean {
            chosen = i;
            break;
        }
    }
    let lambda = (chosen - 1) as f64 / bins as f64;
    let w_lambda = p_values.iter().filter(|&&p| p > lambda).count();
    let raw = w_lambda as f64 / (p_values.len() as f64 * (1.0 - lambda));
    Ok((raw.clamp(0.0, 1.0), lambda))
}

/// Upper bound on the expected fraction of erroneous (actually dependent)
/// instances among the W accepted at level alpha:
/// (1 - alpha) * pi_dep * m / W.
pub fn fndr_bound(alpha: f64, pi_dep: f64, m: usize, w: usize) -> Result<f64> {
    if w == 0 {
        return Err(Error::NoInstances);
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha", "must be in (0, 1)"));
    }
    if !(0.0..=1.0).contains(&pi_dep) {
        return Err(Error::invalid("pi_dep", "must be in [0, 1]"));
    }
    Ok((1.0 - alpha) * pi_dep * m as f64 / w as f64)
}

/// Expected invalid fraction among the N focal estimates: phi * W / N,
/// capped at 1 (no more than all of them can be invalid). Equality with
/// phi*W/N is the conservative reading; a focal estimate built from
/// several instances can only lower the true value.
pub fn phi_prime(phi: f64, w: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    (phi * w as f64 / n as f64).clamp(0.0, 1.0)
}

/// How the worst-case erroneous mass is sized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntervalMethod {
    /// Exact: sum of the ceil(phi_prime * N) largest focal estimates.
    TopkExact,
    /// Approximate: phi_prime * N * rho_hat.
    MeanApprox,
}

/// Asymmetric error interval around the mean effect. The downward-only
/// bias correction reflects positively correlated demand: erroneous
/// instances can only inflate the estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectInterval {
    pub lower: f64,
    pub upper: f64,
    pub rho_maxsum: f64,
    pub z: f64,
    pub method: IntervalMethod,
}

/// Interval: (rho_hat - rho_maxsum/N - z*sigma/sqrt(N), rho_hat + z*sigma/sqrt(N)).
pub fn effect_interval(
    focal_rhos: &[f64],
    phi_prime: f64,
    z: f64,
    method: IntervalMethod,
) -> Result<EffectInterval> {
    let n = focal_rhos.len();
    if n == 0 {
        return Err(Error::EmptyInput("focal estimates"));
    }
    if !(0.0..=1.0).contains(&phi_prime) {
        return Err(Error::invalid("phi_prime", "must be in [0, 1]"));
    }
    if z.is_nan() || z < 0.0 {
        return Err(Error::invalid("z", "must be >= 0"));
    }

    let n_f = n as f64;
    let rho_hat = focal_rhos.iter().sum::<f64>() / n_f;
    let sigma_hat = if n > 1 {
        let ss: f64 = focal_rhos
            .iter()
            .map(|r| (r - rho_hat) * (r - rho_hat))
            .sum();
        (ss / (n_f - 1.0)).sqrt()
    } else {
        0.0
    };

    let k = (phi_prime * n_f).ceil() as usize;
    let rho_maxsum = match method {
        IntervalMethod::TopkExact => {
            let mut sorted = focal_rhos.to_vec();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            sorted[..k.min(n)].iter().sum::<f64>()
        }
        IntervalMethod::MeanApprox => phi_prime * n_f * rho_hat,
    }
    // erroneous mass is nonnegative under positively correlated demand
    .max(0.0);

    let variance_term = z * sigma_hat / n_f.sqrt();
    Ok(EffectInterval {
        lower: rho_hat - rho_maxsum / n_f - variance_term,
        upper: rho_hat + variance_term,
        rho_maxsum,
        z,
        method,
    })
}

/// Multiple-testing summary embedded in the pipeline report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityReport {
    pub pi_indep_storey: f64,
    pub pi_indep_nettleton: f64,
    pub lambda_storey: f64,
    pub lambda_nettleton: f64,
    pub estimator: PiEstimator,
    /// 1 - pi_indep under the chosen estimator.
    pub pi_dep: f64,
    pub phi: f64,
    pub phi_prime: f64,
}

/// Assemble the full multiplicity report for one run.
pub fn multiplicity_report(
    p_values: &[f64],
    alpha: f64,
    w: usize,
    n_focal: usize,
    estimator: PiEstimator,
    lambda: f64,
    bins: usize,
) -> Result<MultiplicityReport> {
    let pi_indep_storey = storey_pi_indep(p_values, lambda)?;
    let (pi_indep_nettleton, lambda_nettleton) = nettleton_pi_indep(p_values, bins)?;
    let pi_dep = match estimator {
        PiEstimator::Nettleton => 1.0 - pi_indep_nettleton,
        PiEstimator::Storey => 1.0 - pi_indep_storey,
    };
    let phi = fndr_bound(alpha, pi_dep, p_values.len(), w)?;
    Ok(MultiplicityReport {
        pi_indep_storey,
        pi_indep_nettleton,
        lambda_storey: lambda,
        lambda_nettleton,
        estimator,
        pi_dep,
        phi,
        phi_prime: phi_prime(phi, w, n_focal),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn storey_all_null_and_all_dependent() {
        // exactly half above 0.5 at lambda = 0.5
        let half: Vec<f64> = (0..100)
            .map(|i| if i < 50 { 0.25 } else { 0.75 })
            .collect();
        assert_eq!(storey_pi_indep(&half, 0.5).unwrap(), 1.0);

        let low: Vec<f64> = (0..100).map(|i| 0.005 * (i % 100) as f64).collect();
        assert_eq!(storey_pi_indep(&low, 0.5).unwrap(), 0.0);

        assert!(storey_pi_indep(&half, 1.0).is_err());
        assert!(storey_pi_indep(&half, -0.1).is_err());
        assert!(storey_pi_indep(&[], 0.5).is_err());
    }

    #[test]
    fn storey_recovers_mixture_weight() {
        // 70% uniform nulls, 30% concentrated near zero
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut p_values = Vec::with_capacity(10_000);
        for _ in 0..7_000 {
            p_values.push(rng.gen::<f64>());
        }
        for _ in 0..3_000 {
            p_values.push(rng.gen::<f64>() * 0.05);
        }
        let pi = storey_pi_indep(&p_values, 0.5).unwrap();
        assert!((pi - 0.70).abs() < 0.03, "pi {pi}");
    }

    #[test]
    fn nettleton_flat_histogram_gives_one() {
        // 5 values per bin, B = 20
        let p_values: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        let (pi, lambda) = nettleton_pi_indep(&p_values, 20).unwrap();
        assert_eq!(lambda, 0.0);
        assert_eq!(pi, 1.0);
    }

    #[test]
    fn nettleton_hand_traced_histogram() {
        // B=5 counts [30, 2, 3, 2, 3]: bin 1 (30) > mean(2,3,2,3)=2.5,
        // bin 2 (2) <= mean(3,2,3)=8/3, so I=2, lambda=0.2,
        // pi = #{p > 0.2} / (40 * 0.8) = 10/32
        let mut p_values = vec![0.1; 30];
        p_values.extend(vec![0.3; 2]);
        p_values.extend(vec![0.5; 3]);
        p_values.extend(vec![0.7; 2]);
        p_values.extend(vec![0.9; 3]);
        let (pi, lambda) = nettleton_pi_indep(&p_values, 5).unwrap();
        assert_eq!(lambda, 0.2);
        assert!((pi - 0.3125).abs() < 1e-15);
    }

    #[test]
    fn nettleton_strictly_decreasing_falls_back_to_last_bin() {
        // counts [10, 4, 3, 2, 1]: no bin count <= mean of bins to its
        // right until the fallback I = B
        let mut p_values = vec![0.1; 10];
        p_values.extend(vec![0.3; 4]);
        p_values.extend(vec![0.5; 3]);
        p_values.extend(vec![0.7; 2]);
        p_values.extend(vec![0.9; 1]);
        let (pi, lambda) = nettleton_pi_indep(&p_values, 5).unwrap();
        assert_eq!(lambda, 0.8);
        assert!((pi - 0.25).abs() < 1e-15);
        assert!(pi < 1.0);
    }

    #[test]
    fn nettleton_mixture_band() {
        // 18.7% dependent pairs concentrated near zero
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = 10_000;
        let n_dep = (0.187 * m as f64).round() as usize;
        let mut p_values = Vec::with_capacity(m);
        for _ in 0..(m - n_dep) {
            p_values.push(rng.gen::<f64>());
        }
        for _ in 0..n_dep {
            p_values.push(rng.gen::<f64>().powi(20));
        }
        let (pi, _) = nettleton_pi_indep(&p_values, 20).unwrap();
        let pi_dep = 1.0 - pi;
        assert!((0.15..=0.23).contains(&pi_dep), "pi_dep {pi_dep}");
    }

    #[test]
    fn fndr_bound_matches_reported_values() {
        let phi = fndr_bound(0.80, 0.187, 114_469, 20_000).unwrap();
        assert!((phi - 0.214).abs() < 0.005, "phi {phi}");

        assert_eq!(fndr_bound(0.80, 0.0, 100, 10).unwrap(), 0.0);

        let phi95 = fndr_bound(0.95, 0.187, 114_469, 7_000).unwrap();
        assert!((phi95 - 0.153).abs() < 5e-4, "phi95 {phi95}");

        assert!(fndr_bound(0.95, 0.187, 100, 0).is_err());
        assert!(fndr_bound(1.2, 0.187, 100, 10).is_err());
    }

    #[test]
    fn phi_prime_caps_at_one() {
        assert_eq!(phi_prime(0.5, 100, 100), 0.5);
        assert_eq!(phi_prime(0.9, 200, 100), 1.0);
        assert_eq!(phi_prime(0.5, 100, 0), 0.0);
    }

    #[test]
    fn interval_hand_example() {
        let rhos = [0.01, 0.02, 0.03, 0.10];
        let iv = effect_interval(&rhos, 0.25, 2.58, IntervalMethod::TopkExact).unwrap();
        // k = ceil(0.25*4) = 1, so rho_maxsum is the single largest value
        assert_eq!(iv.rho_maxsum, 0.10);
        let rho_hat = 0.04;
        let sigma = (0.005f64 / 3.0).sqrt();
        let want_lower = rho_hat - 0.10 / 4.0 - 2.58 * sigma / 2.0;
        let want_upper = rho_hat + 2.58 * sigma / 2.0;
        assert!((iv.lower - want_lower).abs() < 1e-15);
        assert!((iv.upper - want_upper).abs() < 1e-15);
    }

    #[test]
    fn interval_with_no_erroneous_mass_is_symmetric() {
        let rhos = [0.02, 0.03, 0.04, 0.05];
        let iv = effect_interval(&rhos, 0.0, 2.58, IntervalMethod::TopkExact).unwrap();
        assert_eq!(iv.rho_maxsum, 0.0);
        let rho_hat = 0.035;
        assert!((rho_hat - iv.lower - (iv.upper - rho_hat)).abs() < 1e-15);
    }

    #[test]
    fn interval_errors() {
        assert!(effect_interval(&[], 0.0, 2.58, IntervalMethod::TopkExact).is_err());
        assert!(effect_interval(&[0.1], 1.5, 2.58, IntervalMethod::TopkExact).is_err());
    }

    proptest! {
        #[test]
        fn topk_dominates_mean_approx(
            rhos in proptest::collection::vec(-0.05f64..0.3, 1..40),
            phi_p in 0.0f64..=1.0,
        ) {
            let exact = effect_interval(&rhos, phi_p, 2.58, IntervalMethod::TopkExact).unwrap();
            let approx = effect_interval(&rhos, phi_p, 2.58, IntervalMethod::MeanApprox).unwrap();
            prop_assert!(exact.rho_maxsum >= approx.rho_maxsum - 1e-12);
        }

        #[test]
        fn interval_contains_the_mean(
            rhos in proptest::collection::vec(0.0f64..0.3, 1..40),
            phi_p in 0.0f64..=1.0,
        ) {
            let n = rhos.len() as f64;
            let rho_hat = rhos.iter().sum::<f64>() / n;
            let iv = effect_interval(&rhos, phi_p, 2.58, IntervalMethod::TopkExact).unwrap();
            prop_assert!(iv.lower <= rho_hat + 1e-12);
            prop_assert!(iv.upper >= rho_hat - 1e-12);
        }
    }
}
