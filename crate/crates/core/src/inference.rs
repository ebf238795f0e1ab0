//! Priors, the conjugate posterior update, posterior means, credible
//! intervals and quantile scenarios.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extensions::thinned_offspring_law;
use crate::matrix::Matrix;
use crate::model::{
    aggregate_counts, check_probability_vector, LifeTable, OffspringCap, OffspringLaw, PairMap,
    ParameterDraw, TypeIndex,
};
use crate::special::{beta_quantile, gamma_quantile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub a: f64,
    pub b: f64,
}

impl BetaParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Beta({a}, {b}) needs positive finite parameters"
            )));
        }
        Ok(Self { a, b })
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        beta_quantile(self.a, self.b, p)
    }
}

/// Gamma law in the shape/rate parametrisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub shape: f64,
    pub rate: f64,
}

impl GammaParams {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Gamma({shape}, {rate}) needs positive finite parameters"
            )));
        }
        Ok(Self { shape, rate })
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn quantile(&self, p: f64) -> f64 {
        gamma_quantile(self.shape, self.rate, p)
    }
}

/// Prior or posterior parameters of one (parent, child) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "lowercase")]
pub enum PairParams {
    /// Structurally impossible transition: zero offspring with certainty.
    Forbidden,
    /// Dirichlet over offspring counts `0..=κ`.
    Categorical { alpha: Vec<f64> },
    /// Gamma on the rate of a Poisson offspring law.
    Poisson { gamma: GammaParams },
    /// Dirichlet over litter sizes, thinned by a Beta-distributed
    /// probability that each offspring counts.
    Thinned {
        litter_alpha: Vec<f64>,
        sex_ratio: BetaParams,
    },
}

impl PairParams {
    pub fn categorical(alpha: Vec<f64>) -> Result<Self> {
        check_alpha(&alpha)?;
        Ok(PairParams::Categorical { alpha })
    }

    /// `None` for unbounded laws, `Some(0)` for forbidden pairs.
    pub fn kappa(&self) -> Option<u32> {
        match self {
            PairParams::Forbidden => Some(0),
            PairParams::Categorical { alpha } => Some(alpha.len() as u32 - 1),
            PairParams::Poisson { .. } => None,
            PairParams::Thinned { litter_alpha, .. } => Some(litter_alpha.len() as u32 - 1),
        }
    }

    /// Posterior-mean number of offspring.
    pub fn mean_offspring(&self) -> f64 {
        match self {
            PairParams::Forbidden => 0.0,
            PairParams::Categorical { alpha } => dirichlet_mean_index(alpha),
            PairParams::Poisson { gamma } => gamma.mean(),
            // q and the thinning probability are independent a posteriori.
            PairParams::Thinned {
                litter_alpha,
                sex_ratio,
            } => dirichlet_mean_index(litter_alpha) * sex_ratio.mean(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            PairParams::Forbidden => Ok(()),
            PairParams::Categorical { alpha } => check_alpha(alpha),
            PairParams::Poisson { gamma } => GammaParams::new(gamma.shape, gamma.rate).map(|_| ()),
            PairParams::Thinned {
                litter_alpha,
                sex_ratio,
            } => {
                check_alpha(litter_alpha)?;
                BetaParams::new(sex_ratio.a, sex_ratio.b).map(|_| ())
            }
        }
    }
}

/// `Σ_k k·α(k) / Σ_k α(k)`.
fn dirichlet_mean_index(alpha: &[f64]) -> f64 {
    let total: f64 = alpha.iter().sum();
    alpha
        .iter()
        .enumerate()
        .map(|(k, a)| k as f64 * a)
        .sum::<f64>()
        / total
}

fn check_alpha(alpha: &[f64]) -> Result<()> {
    if alpha.is_empty() {
        return Err(Error::InvalidParameter("empty Dirichlet parameter".into()));
    }
    if let Some(a) = alpha.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "Dirichlet concentration {a} must be positive and finite"
        )));
    }
    Ok(())
}

/// Dirichlet (or Gamma, or thinned) hyperparameters for all `K²` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pairs: PairMap<PairParams>,
}

impl HyperParams {
    pub fn new(pairs: PairMap<PairParams>) -> Result<Self> {
        for (i, j, p) in pairs.iter() {
            p.validate()
                .map_err(|e| Error::InvalidParameter(format!("pair ({i},{j}): {e}")))?;
        }
        Ok(Self { pairs })
    }

    pub fn types(&self) -> usize {
        self.pairs.types()
    }

    pub fn pair(&self, from: TypeIndex, to: TypeIndex) -> &PairParams {
        self.pairs.get(from, to)
    }

    pub fn pairs(&self) -> &PairMap<PairParams> {
        &self.pairs
    }

    pub fn cap(&self) -> OffspringCap {
        OffspringCap::new(self.pairs.map(|_, _, p| p.kappa()))
    }
}

/// Hyperparameters after conditioning on data. Same shape as the prior.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorParams(HyperParams);

impl PosteriorParams {
    /// Treats `params` as already conditioned, e.g. when loaded from disk.
    pub fn from_hyper(params: HyperParams) -> Self {
        Self(params)
    }

    pub fn as_hyper(&self) -> &HyperParams {
        &self.0
    }

    pub fn into_hyper(self) -> HyperParams {
        self.0
    }

    pub fn types(&self) -> usize {
        self.0.types()
    }

    pub fn pair(&self, from: TypeIndex, to: TypeIndex) -> &PairParams {
        self.0.pair(from, to)
    }

    pub fn cap(&self) -> OffspringCap {
        self.0.cap()
    }
}

/// All-ones Dirichlet on every allowed pair; `Gamma(1, 1)` for unbounded
/// pairs.
pub fn prior_noninformative(cap: &OffspringCap) -> HyperParams {
    let pairs = PairMap::from_fn(cap.types(), |i, j| match cap.kappa(i, j) {
        Some(0) => PairParams::Forbidden,
        Some(kappa) => PairParams::Categorical {
            alpha: vec![1.0; kappa as usize + 1],
        },
        None => PairParams::Poisson {
            gamma: GammaParams {
                shape: 1.0,
                rate: 1.0,
            },
        },
    });
    HyperParams { pairs }
}

/// Dirichlet with mean `m` and per-coordinate variance `m(k)(1−m(k))σ²`.
/// When `σ² ≥ 1` no such Dirichlet exists and the flat vector is returned.
pub fn prior_from_moments(m: &[f64], sigma2: f64) -> Result<Vec<f64>> {
    check_probability_vector(m, 1e-9)?;
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "variance factor must be positive, got {sigma2}"
        )));
    }
    if sigma2 >= 1.0 {
        return Ok(vec![1.0; m.len()]);
    }
    let concentration = (1.0 - sigma2) / sigma2;
    let alpha: Vec<f64> = m.iter().map(|x| concentration * x).collect();
    check_alpha(&alpha)?;
    Ok(alpha)
}

/// Expert belief `q` weighted as `weight` observations.
pub fn prior_expert(q: &[f64], weight: f64) -> Result<Vec<f64>> {
    check_probability_vector(q, 1e-9)?;
    if !(weight > 0.0 && weight.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "expert weight must be positive, got {weight}"
        )));
    }
    let alpha: Vec<f64> = q.iter().map(|x| weight * x).collect();
    check_alpha(&alpha)?;
    Ok(alpha)
}

/// Adds the time-aggregated counts of `table` to the prior.
///
/// Only support is checked here; the table need not be row-consistent, so
/// counts pooled from separate surveys can be used directly. For thinned
/// pairs the recorded offspring count is the litter size.
pub fn posterior_update(prior: &HyperParams, table: &LifeTable) -> Result<PosteriorParams> {
    if table.types() > prior.types() {
        return Err(Error::DimensionMismatch {
            expected: prior.types(),
            actual: table.types(),
        });
    }
    let mut pairs = prior.pairs.clone();
    for ((from, to, k), n) in aggregate_counts(table).iter() {
        let outside = Error::OutsideSupport {
            from,
            to,
            offspring: k,
        };
        match pairs.get_mut(from, to) {
            PairParams::Forbidden => {
                if k != 0 && n > 0 {
                    return Err(outside);
                }
            }
            PairParams::Categorical { alpha }
            | PairParams::Thinned {
                litter_alpha: alpha,
                ..
            } => match alpha.get_mut(k as usize) {
                Some(a) => *a += n as f64,
                None if n == 0 => {}
                None => return Err(outside),
            },
            PairParams::Poisson { gamma } => {
                gamma.shape += k as f64 * n as f64;
                gamma.rate += n as f64;
            }
        }
    }
    Ok(PosteriorParams(HyperParams { pairs }))
}

/// Sexed offspring counts for the thinning probability of one pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SexedCount {
    pub from: TypeIndex,
    pub to: TypeIndex,
    pub females: u64,
    pub males: u64,
}

/// [`posterior_update`] followed by the Beta update of each thinned pair's
/// retention probability from sexed offspring counts.
pub fn posterior_update_with_sexes(
    prior: &HyperParams,
    table: &LifeTable,
    sexed: &[SexedCount],
) -> Result<PosteriorParams> {
    let mut post = posterior_update(prior, table)?.into_hyper();
    for s in sexed {
        if s.from.get() > post.types() || s.to.get() > post.types() {
            return Err(Error::TypeOutOfRange {
                value: s.from.get().max(s.to.get()),
                types: post.types(),
            });
        }
        match post.pairs.get_mut(s.from, s.to) {
            PairParams::Thinned { sex_ratio, .. } => {
                *sex_ratio = crate::extensions::sex_ratio_posterior(*sex_ratio, s.females, s.males);
            }
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "sexed counts given for pair ({},{}) which is not a thinned law",
                    s.from, s.to
                )))
            }
        }
    }
    Ok(PosteriorParams(post))
}

/// Posterior expectation of the mean matrix, entry by entry.
pub fn posterior_mean_matrix(post: &PosteriorParams) -> Matrix {
    let k = post.types();
    let mut m = Matrix::zeros(k);
    for (i, j, p) in post.as_hyper().pairs().iter() {
        m.set(i.zero_based(), j.zero_based(), p.mean_offspring());
    }
    m
}

/// Equal-tailed interval of the Beta marginal `(α_k, Σα − α_k)`.
pub fn credible_interval(alpha: &[f64], k: usize, level: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "credible level must lie in (0,1), got {level}"
        )));
    }
    let marginal = marginal_beta(alpha, k)?;
    let tail = (1.0 - level) / 2.0;
    Ok((marginal.quantile(tail), marginal.quantile(1.0 - tail)))
}

/// Beta marginal of coordinate `k` of a Dirichlet.
pub fn marginal_beta(alpha: &[f64], k: usize) -> Result<BetaParams> {
    let a = *alpha.get(k).ok_or_else(|| {
        Error::InvalidParameter(format!("category {k} outside 0..{}", alpha.len()))
    })?;
    let total: f64 = alpha.iter().sum();
    BetaParams::new(a, total - a)
}

/// A deterministic parameter draw built from posterior marginal quantiles.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub label: String,
    pub quantile: f64,
    pub draw: ParameterDraw,
}

/// One scenario per quantile. Dirichlet marginal quantiles do not sum to
/// one, so each vector is renormalised.
pub fn scenario_draws(post: &PosteriorParams, quantiles: &[f64]) -> Result<Vec<Scenario>> {
    quantiles
        .iter()
        .map(|&q| {
            if !(q > 0.0 && q < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "scenario quantile must lie in (0,1), got {q}"
                )));
            }
            let mut laws = Vec::with_capacity(post.types() * post.types());
            for (_, _, p) in post.as_hyper().pairs().iter() {
                laws.push(scenario_law(p, q)?);
            }
            let mut laws = laws.into_iter();
            let draw = ParameterDraw::new(PairMap::from_fn(post.types(), |_, _| {
                laws.next().expect("one law per pair")
            }))?;
            Ok(Scenario {
                label: format!("q{}", q * 100.0),
                quantile: q,
                draw,
            })
        })
        .collect()
}

fn scenario_law(p: &PairParams, q: f64) -> Result<OffspringLaw> {
    Ok(match p {
        PairParams::Forbidden => OffspringLaw::point_mass_zero(),
        PairParams::Categorical { alpha } => OffspringLaw::Categorical {
            p: renormalised_quantiles(alpha, q)?,
        },
        PairParams::Poisson { gamma } => OffspringLaw::Poisson {
            rate: gamma.quantile(q),
        },
        PairParams::Thinned {
            litter_alpha,
            sex_ratio,
        } => OffspringLaw::Categorical {
            p: thinned_offspring_law(
                &renormalised_quantiles(litter_alpha, q)?,
                sex_ratio.quantile(q),
            )?,
        },
    })
}

fn renormalised_quantiles(alpha: &[f64], q: f64) -> Result<Vec<f64>> {
    if alpha.len() == 1 {
        return Ok(vec![1.0]);
    }
    let raw = (0..alpha.len())
        .map(|k| marginal_beta(alpha, k).map(|b| b.quantile(q)))
        .collect::<Result<Vec<f64>>>()?;
    let total: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.iter().map(|x| x / total).collect();
    // absorb rounding so the vector sums to one within 1e-12
    let drift: f64 = 1.0 - p.iter().sum::<f64>();
    let largest = (0..p.len())
        .max_by(|&a, &b| p[a].total_cmp(&p[b]))
        .expect("nonempty");
    p[largest] += drift;
    Ok(p)
}
