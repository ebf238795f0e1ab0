//! Model extensions: binomial thinning by sex ratio, Poisson offspring with
//! a Gamma prior, survival/reproduction composition and a joint Dirichlet
//! over offspring vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{BetaParams, GammaParams};
use crate::model::check_probability_vector;

/// `Beta(a + females, b + males)`.
pub fn sex_ratio_posterior(prior: BetaParams, females: u64, males: u64) -> BetaParams {
    BetaParams {
        a: prior.a + females as f64,
        b: prior.b + males as f64,
    }
}

/// Law of the number of retained offspring when a litter of size `l ~ q`
/// keeps each member independently with probability `p`:
/// `p(k) = Σ_{l≥k} q(l) C(l,k) pᵏ (1−p)^{l−k}`.
pub fn thinned_offspring_law(q: &[f64], p: f64) -> Result<Vec<f64>> {
    check_probability_vector(q, 1e-9)?;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "retention probability {p} outside [0,1]"
        )));
    }
    let n = q.len();
    let mut out = vec![0.0; n];
    // binomial row for each litter size, built by the recurrence on l
    let mut row = vec![1.0];
    for (l, &ql) in q.iter().enumerate() {
        if l > 0 {
            let mut next = vec![0.0; l + 1];
            for (k, &r) in row.iter().enumerate() {
                next[k] += r * (1.0 - p);
                next[k + 1] += r * p;
            }
            row = next;
        }
        for (k, &r) in row.iter().enumerate() {
            out[k] += ql * r;
        }
    }
    Ok(out)
}

/// `Gamma(a + Σk, b + n)` for `n` observed offspring counts.
pub fn poisson_posterior(prior: GammaParams, counts: &[u64]) -> GammaParams {
    GammaParams {
        shape: prior.shape + counts.iter().sum::<u64>() as f64,
        rate: prior.rate + counts.len() as f64,
    }
}

/// Smallest root in `(0,1]` of `s = exp(m(s−1))`.
pub fn poisson_extinction_fixed_point(m: f64) -> Result<f64> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "Poisson rate must be positive, got {m}"
        )));
    }
    if m <= 1.0 {
        return Ok(1.0);
    }
    // Newton from 0 on the convex decreasing f(s) = exp(m(s−1)) − s
    // increases monotonically to the minimal root.
    let mut s = 0.0f64;
    for _ in 0..200 {
        let e = (m * (s - 1.0)).exp();
        let next = s - (e - s) / (m * e - 1.0);
        if (next - s).abs() < 1e-15 {
            return Ok(next);
        }
        s = next;
    }
    Ok(s)
}

/// Law of `survival + reproduction` for independent `survival ~ p_s` and
/// `reproduction ~ p_r`.
pub fn convolve_survival_reproduction(p_s: &[f64], p_r: &[f64]) -> Result<Vec<f64>> {
    check_probability_vector(p_s, 1e-9)?;
    check_probability_vector(p_r, 1e-9)?;
    let mut out = vec![0.0; p_s.len() + p_r.len() - 1];
    for (a, &ps) in p_s.iter().enumerate() {
        for (b, &pr) in p_r.iter().enumerate() {
            out[a + b] += ps * pr;
        }
    }
    Ok(out)
}

/// Dirichlet over joint offspring vectors `(k_1, …, k_K)` with
/// `0 ≤ k_j ≤ κ_j`, stored in mixed-radix order with `k_1` varying fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDirichlet {
    pub caps: Vec<u32>,
    pub alpha: Vec<f64>,
}

impl JointDirichlet {
    pub fn flat(caps: Vec<u32>) -> Self {
        let size = caps.iter().map(|&c| c as usize + 1).product();
        Self {
            caps,
            alpha: vec![1.0; size],
        }
    }

    pub fn new(caps: Vec<u32>, alpha: Vec<f64>) -> Result<Self> {
        let size: usize = caps.iter().map(|&c| c as usize + 1).product();
        if alpha.len() != size {
            return Err(Error::DimensionMismatch {
                expected: size,
                actual: alpha.len(),
            });
        }
        if alpha.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::InvalidParameter("joint Dirichlet concentrations must be positive".into()));
        }
        Ok(Self { caps, alpha })
    }

    pub fn index(&self, offspring: &[u32]) -> Result<usize> {
        if offspring.len() != self.caps.len() {
            return Err(Error::DimensionMismatch {
                expected: self.caps.len(),
                actual: offspring.len(),
            });
        }
        let mut idx = 0;
        let mut stride = 1;
        for (&k, &cap) in offspring.iter().zip(&self.caps) {
            if k > cap {
                return Err(Error::InvalidParameter(format!(
                    "offspring vector {offspring:?} outside caps {:?}",
                    self.caps
                )));
            }
            idx += k as usize * stride;
            stride *= cap as usize + 1;
        }
        Ok(idx)
    }

    pub fn offspring(&self, mut index: usize) -> Vec<u32> {
        self.caps
            .iter()
            .map(|&cap| {
                let radix = cap as usize + 1;
                let k = index % radix;
                index /= radix;
                k as u32
            })
            .collect()
    }

    /// Posterior-mean number of offspring of child type `j` (zero-based).
    pub fn marginal_mean(&self, j: usize) -> f64 {
        let total: f64 = self.alpha.iter().sum();
        self.alpha
            .iter()
            .enumerate()
            .map(|(idx, a)| self.offspring(idx)[j] as f64 * a)
            .sum::<f64>()
            / total
    }
}

/// Adds observed joint offspring vectors to the prior.
pub fn joint_offspring_posterior(prior: &JointDirichlet, counts: &[(Vec<u32>, u64)]) -> Result<JointDirichlet> {
    let mut post = prior.clone();
    for (offspring, n) in counts {
        let idx = prior.index(offspring)?;
        post.alpha[idx] += *n as f64;
    }
    Ok(post)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{sample_dirichlet, sample_offspring_histogram, SeedSpec};
    use crate::model::OffspringLaw;
    use proptest::prelude::*;

    #[test]
    fn sex_ratio_examples() {
        let prior = BetaParams { a: 1.0, b: 1.0 };
        let post = sex_ratio_posterior(prior, 14, 10);
        assert_eq!((post.a, post.b), (15.0, 11.0));
        assert!((post.mean() - 15.0 / 26.0).abs() < 1e-15);
        assert_eq!(sex_ratio_posterior(prior, 0, 0), prior);
    }

    #[test]
    fn thinning_examples() {
        let q = [0.2, 0.3, 0.5];
        assert_eq!(thinned_offspring_law(&q, 0.0).unwrap(), vec![1.0, 0.0, 0.0]);
        assert_eq!(thinned_offspring_law(&q, 1.0).unwrap(), q.to_vec());
        assert_eq!(thinned_offspring_law(&[0.0, 0.0, 1.0], 0.5).unwrap(), vec![0.25, 0.5, 0.25]);
    }

    #[test]
    fn poisson_examples() {
        let prior = GammaParams { shape: 1.0, rate: 1.0 };
        assert_eq!(poisson_posterior(prior, &[]), prior);
        let post = poisson_posterior(prior, &[2, 0, 1]);
        assert_eq!((post.shape, post.rate), (4.0, 4.0));
        assert_eq!(poisson_extinction_fixed_point(0.8).unwrap(), 1.0);
        assert_eq!(poisson_extinction_fixed_point(1.0).unwrap(), 1.0);
    }

    #[test]
    fn poisson_posterior_learns_rate() {
        let mut rng = SeedSpec::new(21, 0).rng();
        let hist = sample_offspring_histogram(&OffspringLaw::Poisson { rate: 2.3 }, 10_000, &mut rng);
        let counts: Vec<u64> = hist.iter().flat_map(|&(k, c)| std::iter::repeat_n(k as u64, c as usize)).collect();
        let sample_mean = counts.iter().sum::<u64>() as f64 / counts.len() as f64;
        let post = poisson_posterior(GammaParams { shape: 1.0, rate: 1.0 }, &counts);
        assert!((post.mean() - sample_mean).abs() < 1e-3);
    }

    #[test]
    fn poisson_fixed_point_matches_bisection() {
        let f = |s: f64| s - (2.0 * (s - 1.0)).exp();
        // f(0) < 0 and f is negative up to the minimal root
        let (mut lo, mut hi) = (0.0, 0.5);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let got = poisson_extinction_fixed_point(2.0).unwrap();
        assert!((got - 0.5 * (lo + hi)).abs() < 1e-9);
        assert!((got - 0.2032).abs() < 1e-4);
    }

    #[test]
    fn composition_examples() {
        let out = convolve_survival_reproduction(&[0.6, 0.4], &[0.8, 0.1, 0.05, 0.05]).unwrap();
        let want = [0.48, 0.38, 0.07, 0.05, 0.02];
        for (a, b) in out.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        let pr = [0.5, 0.3, 0.2];
        assert_eq!(convolve_survival_reproduction(&[1.0, 0.0], &pr).unwrap(), vec![0.5, 0.3, 0.2, 0.0]);
        assert_eq!(convolve_survival_reproduction(&[0.0, 1.0], &pr).unwrap(), vec![0.0, 0.5, 0.3, 0.2]);
    }

    #[test]
    fn joint_single_observation() {
        let prior = JointDirichlet::flat(vec![1, 1]);
        assert_eq!(joint_offspring_posterior(&prior, &[]).unwrap(), prior);
        let post = joint_offspring_posterior(&prior, &[(vec![1, 0], 1)]).unwrap();
        assert_eq!(post.alpha, vec![1.0, 2.0, 1.0, 1.0]);
        assert!(joint_offspring_posterior(&prior, &[(vec![2, 0], 1)]).is_err());
    }

    #[test]
    fn joint_model_agrees_with_independent_marginals() {
        // independent laws for two child types
        let p1 = [0.5, 0.3, 0.2];
        let p2 = [0.7, 0.3];
        let mut rng = SeedSpec::new(31, 0).rng();
        let n = 20_000u64;
        let h1 = sample_offspring_histogram(&OffspringLaw::Categorical { p: p1.to_vec() }, n, &mut rng);
        let h2 = sample_offspring_histogram(&OffspringLaw::Categorical { p: p2.to_vec() }, n, &mut rng);
        let mut k1: Vec<u32> = h1.iter().flat_map(|&(k, c)| std::iter::repeat_n(k, c as usize)).collect();
        let k2: Vec<u32> = h2.iter().flat_map(|&(k, c)| std::iter::repeat_n(k, c as usize)).collect();
        // break the sort order of the histogram so pairs are independent
        let perm = sample_dirichlet(&vec![1.0; k1.len()], &mut rng);
        let mut order: Vec<usize> = (0..k1.len()).collect();
        order.sort_by(|&a, &b| perm[a].total_cmp(&perm[b]));
        k1 = order.iter().map(|&i| k1[i]).collect();

        let prior = JointDirichlet::flat(vec![2, 1]);
        let mut counts = std::collections::BTreeMap::new();
        for (a, b) in k1.iter().zip(&k2) {
            *counts.entry(vec![*a, *b]).or_insert(0u64) += 1;
        }
        let counts: Vec<(Vec<u32>, u64)> = counts.into_iter().collect();
        let joint = joint_offspring_posterior(&prior, &counts).unwrap();

        let indep1 = (k1.iter().map(|&k| k as f64).sum::<f64>() + 3.0) / (n as f64 + 3.0);
        let indep2 = (k2.iter().map(|&k| k as f64).sum::<f64>() + 1.0) / (n as f64 + 2.0);
        assert!((joint.marginal_mean(0) - indep1).abs() < 0.01);
        assert!((joint.marginal_mean(1) - indep2).abs() < 0.01);
    }

    #[test]
    fn joint_index_round_trip() {
        let d = JointDirichlet::flat(vec![2, 1, 3]);
        for idx in 0..d.alpha.len() {
            assert_eq!(d.index(&d.offspring(idx)).unwrap(), idx);
        }
    }

    fn prob_vec(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, len).prop_map(|w| {
            let s: f64 = w.iter().sum();
            w.iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn thinned_law_mass_and_mean(q in prob_vec(1..7), p in 0.0f64..=1.0) {
            let out = thinned_offspring_law(&q, p).unwrap();
            prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            let mean_q: f64 = q.iter().enumerate().map(|(l, x)| l as f64 * x).sum();
            let mean: f64 = out.iter().enumerate().map(|(k, x)| k as f64 * x).sum();
            prop_assert!((mean - p * mean_q).abs() < 1e-12);
        }

        #[test]
        fn poisson_root_decreasing(m in 1.01f64..6.0, dm in 0.01f64..1.0) {
            prop_assert!(poisson_extinction_fixed_point(m + dm).unwrap() < poisson_extinction_fixed_point(m).unwrap());
        }

        #[test]
        fn composition_adds_means(ps in prob_vec(2..3), pr in prob_vec(1..6)) {
            let out = convolve_survival_reproduction(&ps, &pr).unwrap();
            prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let mean = |p: &[f64]| p.iter().enumerate().map(|(k, x)| k as f64 * x).sum::<f64>();
            prop_assert!((mean(&out) - (ps[1] + mean(&pr))).abs() < 1e-12);
        }

        #[test]
        fn joint_reduces_to_marginal_update(c1 in prop::collection::vec(0u64..20, 3)) {
            // data recorded only on child type 1, with type 2 fixed at 0
            let prior = JointDirichlet::flat(vec![2, 0]);
            let counts: Vec<(Vec<u32>, u64)> = c1.iter().enumerate().map(|(k, &n)| (vec![k as u32, 0], n)).collect();
            let joint = joint_offspring_posterior(&prior, &counts).unwrap();
            let marginal: Vec<f64> = c1.iter().map(|&n| 1.0 + n as f64).collect();
            prop_assert_eq!(joint.alpha, marginal);
        }
    }
}
