//! Seeded streams, Dirichlet and posterior draws, and the forward
//! Galton-Watson simulator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Binomial, Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};
use crate::extensions::thinned_offspring_law;
use crate::inference::{PairParams, PosteriorParams};
use crate::model::{Cell, LifeTable, OffspringLaw, PairMap, ParameterDraw, PopulationState, TypeIndex};

/// Default abundance above which a trajectory is stopped and flagged.
pub const DEFAULT_OVERFLOW_CAP: u64 = 1_000_000_000_000;

/// Identifies one replicate's random stream.
///
/// The master seed keys a ChaCha8 generator and the replicate index selects
/// its stream, so replicate `r` sees the same numbers however the work is
/// scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub replicate_index: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, replicate_index: u64) -> Self {
        Self {
            master_seed,
            replicate_index,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.replicate_index);
        rng
    }

    /// A fresh master seed for a nested experiment, derived from this
    /// stream and a salt.
    pub fn child(&self, salt: u64) -> SeedSpec {
        let mixed = splitmix64(splitmix64(self.master_seed ^ splitmix64(salt)) ^ self.replicate_index);
        SeedSpec::new(mixed, 0)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Dirichlet draw by normalised Gamma variates.
///
/// Works in log space, using `G(α) = G(α+1)·U^{1/α}` for small `α`, so that
/// tiny concentrations do not underflow to an all-zero vector.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    if alpha.len() == 1 {
        return vec![1.0];
    }
    let logs: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            if a < 1.0 {
                let g: f64 = Gamma::new(a + 1.0, 1.0).expect("positive shape").sample(rng);
                let u: f64 = rng.random::<f64>();
                g.ln() + (1.0 - u).ln() / a
            } else {
                let g: f64 = Gamma::new(a, 1.0).expect("positive shape").sample(rng);
                g.ln()
            }
        })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

/// One draw of every offspring law from the posterior.
pub fn sample_parameter_draw<R: Rng + ?Sized>(post: &PosteriorParams, rng: &mut R) -> ParameterDraw {
    let k = post.types();
    let mut laws = Vec::with_capacity(k * k);
    for (_, _, pair) in post.as_hyper().pairs().iter() {
        let law = match pair {
            PairParams::Forbidden => OffspringLaw::point_mass_zero(),
            PairParams::Categorical { alpha } => OffspringLaw::Categorical {
                p: sample_dirichlet(alpha, rng),
            },
            PairParams::Poisson { gamma } => OffspringLaw::Poisson {
                rate: Gamma::new(gamma.shape, 1.0 / gamma.rate)
                    .expect("valid Gamma")
                    .sample(rng),
            },
            PairParams::Thinned {
                litter_alpha,
                sex_ratio,
            } => {
                let q = sample_dirichlet(litter_alpha, rng);
                let p: f64 = Beta::new(sex_ratio.a, sex_ratio.b)
                    .expect("valid Beta")
                    .sample(rng);
                OffspringLaw::Categorical {
                    p: thinned_offspring_law(&q, p).expect("valid thinned law"),
                }
            }
        };
        laws.push(law);
    }
    let mut laws = laws.into_iter();
    ParameterDraw::new(PairMap::from_fn(k, |_, _| laws.next().expect("one law per pair")))
        .expect("sampled laws are normalised")
}

/// Offspring-count histogram of `n` independent parents under `law`,
/// by sequential binomial conditioning over offspring counts.
pub fn sample_offspring_histogram<R: Rng + ?Sized>(
    law: &OffspringLaw,
    n: u64,
    rng: &mut R,
) -> Vec<(u32, u64)> {
    let mut out = Vec::new();
    let mut remaining = n;
    let mut k: u32 = 0;
    while remaining > 0 {
        let (pk, tail) = match law {
            OffspringLaw::Categorical { p } => {
                if k as usize >= p.len() {
                    // rounding left a few parents unassigned; give them the last category
                    if let Some(last) = out.last_mut() {
                        let (_, c): &mut (u32, u64) = last;
                        *c += remaining;
                    } else {
                        out.push((p.len() as u32 - 1, remaining));
                    }
                    break;
                }
                let tail: f64 = p[k as usize..].iter().sum();
                (p[k as usize], tail)
            }
            OffspringLaw::Poisson { rate } => {
                if *rate == 0.0 {
                    (1.0, 1.0)
                } else {
                    let kf = k as f64;
                    let pmf = (-rate + kf * rate.ln() - ln_gamma(kf + 1.0)).exp();
                    let tail = if k == 0 { 1.0 } else { gamma_lr(kf, *rate) };
                    (pmf, tail)
                }
            }
        };
        let cond = if tail <= 0.0 { 1.0 } else { (pk / tail).clamp(0.0, 1.0) };
        let count = if cond >= 1.0 {
            remaining
        } else if cond <= 0.0 {
            0
        } else {
            Binomial::new(remaining, cond).expect("valid binomial").sample(rng)
        };
        if count > 0 {
            out.push((k, count));
        }
        remaining -= count;
        k += 1;
    }
    out
}

/// A simulated path of the process.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<PopulationState>,
    /// Every nonzero `n_{i,j}(k,t)` realised along the path.
    pub transitions: LifeTable,
    pub extinct_at: Option<u32>,
    /// Stopped because the total abundance exceeded the overflow cap.
    pub exploded: bool,
}

/// One generation. Returns the next abundances and, when `record` is given,
/// writes the realised transition counts at time `t`.
fn step<R: Rng + ?Sized>(
    draw: &ParameterDraw,
    current: &[u64],
    t: u32,
    rng: &mut R,
    mut record: Option<&mut LifeTable>,
) -> Vec<u64> {
    let k = draw.types();
    let mut next = vec![0u64; k];
    for (i, &n) in current.iter().enumerate() {
        if n == 0 {
            continue;
        }
        for (j, slot) in next.iter_mut().enumerate() {
            let law = draw.laws().at(i, j);
            for (offspring, count) in sample_offspring_histogram(law, n, rng) {
                *slot = slot.saturating_add((offspring as u64).saturating_mul(count));
                if let Some(table) = record.as_deref_mut() {
                    let cell = Cell::new(
                        TypeIndex::new(i + 1, k).expect("in range"),
                        TypeIndex::new(j + 1, k).expect("in range"),
                        offspring,
                        t,
                    );
                    table.insert(cell, count).expect("in range");
                }
            }
        }
    }
    next
}

/// Runs the process for at most `horizon` generations.
pub fn simulate(
    draw: &ParameterDraw,
    n0: &PopulationState,
    horizon: u32,
    seed: &SeedSpec,
) -> Result<Trajectory> {
    simulate_with_rng(draw, n0, horizon, DEFAULT_OVERFLOW_CAP, &mut seed.rng())
}

pub fn simulate_with_rng<R: Rng + ?Sized>(
    draw: &ParameterDraw,
    n0: &PopulationState,
    horizon: u32,
    overflow_cap: u64,
    rng: &mut R,
) -> Result<Trajectory> {
    if n0.types() != draw.types() {
        return Err(Error::DimensionMismatch {
            expected: draw.types(),
            actual: n0.types(),
        });
    }
    let mut states = vec![PopulationState::new(n0.counts.clone(), 0)];
    let mut table = LifeTable::new(draw.types());
    let mut extinct_at = n0.is_extinct().then_some(0);
    let mut exploded = false;
    let mut t = 0;
    while extinct_at.is_none() && t < horizon {
        let next = step(draw, &states[t as usize].counts, t, rng, Some(&mut table));
        t += 1;
        let state = PopulationState::new(next, t);
        if state.is_extinct() {
            extinct_at = Some(t);
        }
        let total = state.counts.iter().fold(0u64, |a, b| a.saturating_add(*b));
        states.push(state);
        if total > overflow_cap {
            exploded = true;
            break;
        }
    }
    Ok(Trajectory {
        states,
        transitions: table,
        extinct_at,
        exploded,
    })
}

/// Result of following a population until extinction or a cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "time", rename_all = "lowercase")]
pub enum ExtinctionOutcome {
    Extinct(u32),
    /// Still alive at the generation cap.
    Censored(u32),
    /// Abundance passed the overflow cap at this generation.
    Exploded(u32),
}

impl ExtinctionOutcome {
    pub fn extinct_time(&self) -> Option<u32> {
        match self {
            ExtinctionOutcome::Extinct(t) => Some(*t),
            _ => None,
        }
    }

    /// Whether the population was still alive at generation `t`.
    pub fn survived_past(&self, t: u32) -> bool {
        match self {
            ExtinctionOutcome::Extinct(e) => *e > t,
            ExtinctionOutcome::Censored(_) | ExtinctionOutcome::Exploded(_) => true,
        }
    }
}

/// First generation with no individuals, without recording transitions.
pub fn simulate_extinction_time<R: Rng + ?Sized>(
    draw: &ParameterDraw,
    n0: &PopulationState,
    cap: u32,
    rng: &mut R,
) -> ExtinctionOutcome {
    let mut state = n0.counts.clone();
    if state.iter().all(|&n| n == 0) {
        return ExtinctionOutcome::Extinct(0);
    }
    for t in 0..cap {
        state = step(draw, &state, t, rng, None);
        if state.iter().all(|&n| n == 0) {
            return ExtinctionOutcome::Extinct(t + 1);
        }
        if state.iter().fold(0u64, |a, b| a.saturating_add(*b)) > DEFAULT_OVERFLOW_CAP {
            return ExtinctionOutcome::Exploded(t + 1);
        }
    }
    ExtinctionOutcome::Censored(cap)
}
