//! Posterior-integrated quantities computed over one shared set of seeded
//! parameter draws.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extinction::{
    extinction_probability, extinction_time_bounds, minimal_fixed_point, survival_bounds,
    ExtinctionProfile, SurvivalBounds, TimeBounds,
};
use crate::inference::PosteriorParams;
use crate::matrix::Matrix;
use crate::model::{ParameterDraw, PopulationState, TypeIndex};
use crate::sampling::{sample_parameter_draw, SeedSpec};
use crate::spectral::{mean_matrix, perron_triple, project, SpectralTriple};

pub const DEFAULT_N_PREC: usize = 2500;
/// Fraction of excluded replicates above which estimates carry a warning.
pub const QUALITY_THRESHOLD: f64 = 0.01;
const HISTOGRAM_BINS: usize = 100;
const CURVE_LIMIT: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_prec: usize,
    pub master_seed: u64,
    /// Worker threads; `None` uses the rayon default.
    pub threads: Option<usize>,
}

impl McConfig {
    pub fn new(n_prec: usize, master_seed: u64) -> Self {
        Self {
            n_prec,
            master_seed,
            threads: None,
        }
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = Some(threads);
        self
    }
}

/// Runs `f` over `0..n` on a pool of the requested size and returns the
/// results in index order.
pub fn parallel_map<T: Send>(threads: Option<usize>, n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    match builder.build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        Err(_) => (0..n).map(f).collect(),
    }
}

/// Pairwise summation with a fixed split, so the result depends only on the
/// order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Mean and standard error (population variance over `n`).
fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / n;
    (mean, (var / n).sqrt())
}

/// One posterior draw with everything derived from it.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub draw: ParameterDraw,
    pub mean: Matrix,
    /// `None` for the zero matrix, whose growth rate is 0.
    pub triple: Option<SpectralTriple>,
    pub lambda: f64,
    pub profile: Option<ExtinctionProfile>,
}

impl Replicate {
    fn build(draw: ParameterDraw) -> Self {
        let mean = mean_matrix(&draw);
        let triple = perron_triple(&mean).ok();
        let lambda = triple.as_ref().map_or(0.0, |t| t.lambda);
        let profile = minimal_fixed_point(&draw).ok();
        Self {
            draw,
            mean,
            triple,
            lambda,
            profile,
        }
    }

    /// The eigen-solve or the fixed point did not converge.
    pub fn failed(&self) -> bool {
        self.profile.is_none() || self.triple.as_ref().is_some_and(|t| !t.converged)
    }

    pub fn primitive(&self) -> bool {
        self.triple.as_ref().is_some_and(|t| t.primitive)
    }

    fn survival_bounds(&self, n: &PopulationState) -> Option<SurvivalBounds> {
        match &self.triple {
            None => Some(SurvivalBounds {
                lambda: 0.0,
                xi: 0.0,
                x: n.total() as f64,
                min_v: 1.0,
                max_v: 1.0,
            }),
            Some(t) if t.normalized => survival_bounds(&self.draw, t, n).ok(),
            Some(_) => None,
        }
    }
}

/// A Monte Carlo estimate and its bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_prec: usize,
    /// Replicates that entered the mean.
    pub used: usize,
    pub master_seed: u64,
    /// Replicates satisfying the conditioning event, where there is one.
    pub lambda_condition_count: Option<usize>,
    /// Replicates dropped because a solver failed.
    pub excluded: usize,
    /// Replicates whose mean matrix is not primitive; kept in the mean.
    pub nonprimitive: usize,
    pub quality_warning: bool,
}

/// Posterior draws shared by every estimate of one analysis.
#[derive(Debug, Clone)]
pub struct PosteriorSample {
    config: McConfig,
    replicates: Vec<Replicate>,
}

impl PosteriorSample {
    pub fn draw(post: &PosteriorParams, config: McConfig) -> Result<Self> {
        if config.n_prec == 0 {
            return Err(Error::InvalidParameter("n_prec must be at least 1".into()));
        }
        let replicates = parallel_map(config.threads, config.n_prec, |r| {
            let mut rng = SeedSpec::new(config.master_seed, r as u64).rng();
            Replicate::build(sample_parameter_draw(post, &mut rng))
        });
        Ok(Self { config, replicates })
    }

    pub fn config(&self) -> McConfig {
        self.config
    }

    pub fn replicates(&self) -> &[Replicate] {
        &self.replicates
    }

    fn excluded(&self) -> usize {
        self.replicates.iter().filter(|r| r.failed()).count()
    }

    fn nonprimitive(&self) -> usize {
        self.replicates
            .iter()
            .filter(|r| !r.failed() && !r.primitive())
            .count()
    }

    fn estimate(&self, values: &[f64], condition: Option<usize>) -> McEstimate {
        let (value, std_error) = mean_and_se(values);
        let excluded = self.excluded();
        McEstimate {
            value,
            std_error,
            n_prec: self.config.n_prec,
            used: values.len(),
            master_seed: self.config.master_seed,
            lambda_condition_count: condition,
            excluded,
            nonprimitive: self.nonprimitive(),
            quality_warning: excluded as f64 > QUALITY_THRESHOLD * self.config.n_prec as f64,
        }
    }

    fn usable(&self) -> impl Iterator<Item = &Replicate> {
        self.replicates.iter().filter(|r| !r.failed())
    }

    /// `P(λ > 1 | n)`.
    pub fn viability(&self) -> McEstimate {
        let values: Vec<f64> = self
            .usable()
            .map(|r| if r.lambda > 1.0 { 1.0 } else { 0.0 })
            .collect();
        self.estimate(&values, None)
    }

    /// `E[Π s_i^{N_i} | n]`.
    pub fn extinction_probability(&self, n: &PopulationState) -> McEstimate {
        let values: Vec<f64> = self
            .usable()
            .map(|r| extinction_probability(r.profile.as_ref().expect("usable"), n))
            .collect();
        self.estimate(&values, None)
    }

    /// Posterior-mean survival bounds over draws with `λ < 1`, and the
    /// integer extinction-time bounds they imply.
    pub fn time_bounds(&self, n: &PopulationState, alpha: f64, horizon_cap: u64) -> Result<TimeBoundsEstimate> {
        let bounds: Vec<SurvivalBounds> = self
            .usable()
            .filter(|r| r.lambda < 1.0)
            .filter_map(|r| r.survival_bounds(n))
            .collect();
        if bounds.is_empty() {
            return Err(Error::NoSubcriticalDraws);
        }
        let ubar = |t: u64| pairwise_sum(&bounds.iter().map(|b| b.upper(t)).collect::<Vec<_>>()) / bounds.len() as f64;
        let lbar = |t: u64| pairwise_sum(&bounds.iter().map(|b| b.lower(t)).collect::<Vec<_>>()) / bounds.len() as f64;
        let tb = extinction_time_bounds(ubar, lbar, alpha, horizon_cap)?;
        let end = tb.upper.min(CURVE_LIMIT);
        Ok(TimeBoundsEstimate {
            bounds: tb,
            alpha,
            upper_curve: (0..=end).map(ubar).collect(),
            lower_curve: (0..=end).map(lbar).collect(),
            lambda_condition_count: bounds.len(),
            n_prec: self.config.n_prec,
            master_seed: self.config.master_seed,
            excluded: self.excluded(),
        })
    }

    /// Histogram and posterior mean of each type's extinction probability.
    pub fn reintroduction(&self) -> Reintroduction {
        let k = self.replicates.first().map_or(0, |r| r.draw.types());
        let profiles: Vec<&ExtinctionProfile> = self.usable().map(|r| r.profile.as_ref().expect("usable")).collect();
        let per_type = (0..k)
            .map(|i| {
                let values: Vec<f64> = profiles.iter().map(|p| p.s[i]).collect();
                let mut histogram = vec![0u64; HISTOGRAM_BINS];
                for &s in &values {
                    let bin = ((s * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
                    histogram[bin] += 1;
                }
                let estimate = self.estimate(&values, None);
                TypeExtinction {
                    kind: TypeIndex::new(i + 1, k).expect("in range"),
                    mean: estimate.value,
                    std_error: estimate.std_error,
                    histogram,
                }
            })
            .collect();
        Reintroduction {
            per_type,
            used: profiles.len(),
            n_prec: self.config.n_prec,
            master_seed: self.config.master_seed,
        }
    }

    /// Smallest number of type-`kind` individuals whose extinction
    /// probability is below `threshold`.
    pub fn effective_population_size(&self, kind: TypeIndex, threshold: f64, cap: u64) -> Result<EffectiveSize> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "threshold must lie in (0,1), got {threshold}"
            )));
        }
        let k = self.replicates.first().map_or(0, |r| r.draw.types());
        if kind.get() > k {
            return Err(Error::TypeOutOfRange { value: kind.get(), types: k });
        }
        let at = |n: u64| {
            let mut counts = vec![0; k];
            counts[kind.zero_based()] = n;
            self.extinction_probability(&PopulationState::at_zero(counts))
        };
        let below = |n: u64| at(n).value < threshold;
        let mut hi = 1u64;
        while !below(hi) {
            if hi >= cap {
                return Err(Error::OpenEnded { cap });
            }
            hi = (hi * 2).min(cap);
        }
        let mut lo = hi / 2;
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if below(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        // lo = 0 is never below threshold (extinction of nobody is certain)
        Ok(EffectiveSize {
            kind,
            threshold,
            size: hi,
            estimate: at(hi),
        })
    }

    /// `E[N(0)ᵀ Mᵗ | n]` for `t = 0..=horizon`, averaging per-draw powers.
    pub fn short_time_abundance(&self, n0: &PopulationState, horizon: u32) -> Vec<AbundancePoint> {
        let paths: Vec<Vec<Vec<f64>>> = self
            .usable()
            .map(|r| (0..=horizon).map(|t| project(&r.mean, n0, t)).collect())
            .collect();
        (0..=horizon)
            .map(|t| {
                let (mean, std_error) = (0..n0.types())
                    .map(|j| {
                        let xs: Vec<f64> = paths.iter().map(|p| p[t as usize][j]).collect();
                        mean_and_se(&xs)
                    })
                    .unzip();
                AbundancePoint { time: t, mean, std_error }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeBoundsEstimate {
    pub bounds: TimeBounds,
    pub alpha: f64,
    /// Posterior-mean upper survival bound for `t = 0..=T₊` (at most 1001 points).
    pub upper_curve: Vec<f64>,
    pub lower_curve: Vec<f64>,
    pub lambda_condition_count: usize,
    pub n_prec: usize,
    pub master_seed: u64,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeExtinction {
    pub kind: TypeIndex,
    pub mean: f64,
    pub std_error: f64,
    /// Counts over 100 equal bins of `[0,1]`; `s = 1` falls in the last bin.
    pub histogram: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reintroduction {
    pub per_type: Vec<TypeExtinction>,
    pub used: usize,
    pub n_prec: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveSize {
    pub kind: TypeIndex,
    pub threshold: f64,
    pub size: u64,
    pub estimate: McEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbundancePoint {
    pub time: u32,
    pub mean: Vec<f64>,
    pub std_error: Vec<f64>,
}

pub fn mc_viability_probability(post: &PosteriorParams, config: McConfig) -> Result<McEstimate> {
    Ok(PosteriorSample::draw(post, config)?.viability())
}

pub fn mc_extinction_probability(post: &PosteriorParams, n: &PopulationState, config: McConfig) -> Result<McEstimate> {
    Ok(PosteriorSample::draw(post, config)?.extinction_probability(n))
}

pub fn mc_time_bounds(
    post: &PosteriorParams,
    n: &PopulationState,
    alpha: f64,
    config: McConfig,
    horizon_cap: u64,
) -> Result<TimeBoundsEstimate> {
    PosteriorSample::draw(post, config)?.time_bounds(n, alpha, horizon_cap)
}

pub fn mc_reintroduction(post: &PosteriorParams, config: McConfig) -> Result<Reintroduction> {
    Ok(PosteriorSample::draw(post, config)?.reintroduction())
}

pub fn effective_population_size(
    post: &PosteriorParams,
    kind: TypeIndex,
    threshold: f64,
    config: McConfig,
    cap: u64,
) -> Result<EffectiveSize> {
    PosteriorSample::draw(post, config)?.effective_population_size(kind, threshold, cap)
}

pub fn mc_short_time_abundance(
    post: &PosteriorParams,
    n0: &PopulationState,
    horizon: u32,
    config: McConfig,
) -> Result<Vec<AbundancePoint>> {
    Ok(PosteriorSample::draw(post, config)?.short_time_abundance(n0, horizon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets;
    use crate::inference::{posterior_update, prior_noninformative, HyperParams, PairParams};
    use crate::model::{LifeTable, OffspringCap, PairMap};

    fn synthetic_post() -> PosteriorParams {
        posterior_update(
            &prior_noninformative(&datasets::synthetic_cap()),
            &datasets::synthetic_learning_table(),
        )
        .unwrap()
    }

    fn concentrated(alpha: Vec<f64>) -> PosteriorParams {
        PosteriorParams::from_hyper(
            HyperParams::new(PairMap::from_fn(1, |_, _| PairParams::Categorical { alpha: alpha.clone() })).unwrap(),
        )
    }

    fn death_post() -> PosteriorParams {
        posterior_update(&prior_noninformative(&OffspringCap::uniform(2, 0)), &LifeTable::new(2)).unwrap()
    }

    #[test]
    fn pairwise_sum_is_exact_on_small_integers() {
        let xs: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 500_500.0);
    }

    #[test]
    fn abundance_curve_starts_at_n0() {
        let sample = PosteriorSample::draw(&synthetic_post(), McConfig::new(2000, 5)).unwrap();
        let curve = sample.short_time_abundance(&PopulationState::at_zero(vec![22]), 2);
        assert_eq!(curve[0].mean, vec![22.0]);
        assert_eq!(curve[0].std_error, vec![0.0]);
        let want = 22.0 * 242.0 / 315.0;
        assert!((curve[1].mean[0] - want).abs() < 3.0 * curve[1].std_error[0]);
    }

    #[test]
    fn deterministic_self_replacement_is_not_viable() {
        let post = concentrated(vec![1e-12, 1e12]);
        let est = mc_viability_probability(&post, McConfig::new(200, 1)).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn empty_population_is_extinct() {
        let est = mc_extinction_probability(&synthetic_post(), &PopulationState::at_zero(vec![0]), McConfig::new(50, 1)).unwrap();
        assert_eq!(est.value, 1.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn certain_death_posterior() {
        let post = death_post();
        let sample = PosteriorSample::draw(&post, McConfig::new(20, 3)).unwrap();
        let tb = sample.time_bounds(&PopulationState::at_zero(vec![4, 1]), 0.05, 1000).unwrap();
        assert_eq!(tb.bounds.upper, 1);
        assert_eq!(tb.upper_curve[1], 0.0);
        let re = sample.reintroduction();
        assert!(re.per_type.iter().all(|t| t.mean == 1.0 && t.histogram[99] == 20));
        let kind = TypeIndex::new(1, 2).unwrap();
        assert_eq!(
            sample.effective_population_size(kind, 0.05, 64).unwrap_err(),
            Error::OpenEnded { cap: 64 }
        );
    }

    #[test]
    fn fixed_quadratic_profile() {
        let post = concentrated(vec![0.25e9, 1e-9, 0.75e9]);
        let re = mc_reintroduction(&post, McConfig::new(50, 2)).unwrap();
        assert!((re.per_type[0].mean - 1.0 / 3.0).abs() < 1e-3);
        assert_eq!(re.per_type[0].histogram[33], 50);
    }

    #[test]
    fn supercritical_single_individual_suffices() {
        let post = concentrated(vec![0.25e9, 1e-9, 0.75e9]);
        let kind = TypeIndex::new(1, 1).unwrap();
        let eff = effective_population_size(&post, kind, 0.999, McConfig::new(50, 2), 1000).unwrap();
        assert_eq!(eff.size, 1);
    }

    #[test]
    fn conditioning_counts_are_consistent() {
        let post = posterior_update(
            &prior_noninformative(&datasets::bear_cap()),
            &datasets::bear_aggregate_table(),
        )
        .unwrap();
        let sample = PosteriorSample::draw(&post, McConfig::new(2000, 9)).unwrap();
        let viable = sample.viability();
        let tb = sample.time_bounds(&datasets::bear_population_2016(), 0.05, 1_000_000);
        let subcritical = tb.map(|t| t.lambda_condition_count).unwrap_or(0);
        let supercritical = (viable.value * viable.used as f64).round() as usize;
        assert!((subcritical + supercritical).abs_diff(viable.used) <= 1);
    }

    #[test]
    fn extinction_monotone_in_abundance() {
        let post = posterior_update(
            &prior_noninformative(&datasets::bear_cap()),
            &datasets::bear_aggregate_table(),
        )
        .unwrap();
        let sample = PosteriorSample::draw(&post, McConfig::new(500, 4)).unwrap();
        let mut last = 1.0;
        for n in 0..8 {
            let p = sample.extinction_probability(&PopulationState::at_zero(vec![n / 2, 0, 1, 0, n])).value;
            assert!(p <= last + 1e-15);
            last = p;
        }
    }

    #[test]
    fn estimates_do_not_depend_on_thread_count() {
        let post = synthetic_post();
        let n = PopulationState::at_zero(vec![22]);
        let reference = PosteriorSample::draw(&post, McConfig::new(300, 77).with_threads(1)).unwrap();
        for threads in [4, 8] {
            let other = PosteriorSample::draw(&post, McConfig::new(300, 77).with_threads(threads)).unwrap();
            assert_eq!(reference.viability(), other.viability());
            assert_eq!(reference.time_bounds(&n, 0.05, 10_000), other.time_bounds(&n, 0.05, 10_000));
        }
    }
}
