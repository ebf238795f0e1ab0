//! Mean matrix, Perron root with left and right eigenvectors, and
//! deterministic projection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{ParameterDraw, PopulationState};

const MAX_ITERATIONS: usize = 100_000;
const RESIDUAL_TOL: f64 = 1e-12;

/// `M_{i,j} = Σ_k k·p_{i,j}(k)`.
pub fn mean_matrix(draw: &ParameterDraw) -> Matrix {
    let mut m = Matrix::zeros(draw.types());
    for (i, j, law) in draw.laws().iter() {
        m.set(i.zero_based(), j.zero_based(), law.mean());
    }
    m
}

/// Perron root `λ` with `M v = λ v`, `u M = λ u`, normalised so that
/// `Σ u = 1` and `Σ u·v = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralTriple {
    pub lambda: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// Some power of the sparsity pattern is strictly positive.
    pub primitive: bool,
    /// Both eigenvector residuals met the tolerance.
    pub converged: bool,
    /// `u·v` was nonzero so the joint normalisation holds. False for
    /// nilpotent and some reducible matrices.
    pub normalized: bool,
}

/// Structural primitivity through the Wielandt exponent `(K−1)² + 1`.
pub fn is_primitive(m: &Matrix) -> bool {
    let k = m.dim();
    let pattern: Vec<bool> = (0..k * k).map(|n| m.at(n / k, n % k) > 0.0).collect();
    let mul = |a: &[bool], b: &[bool]| -> Vec<bool> {
        (0..k * k)
            .map(|n| {
                let (i, j) = (n / k, n % k);
                (0..k).any(|l| a[i * k + l] && b[l * k + j])
            })
            .collect()
    };
    // square-and-multiply on boolean matrices
    let mut exp = (k - 1) * (k - 1) + 1;
    let mut base = pattern;
    let mut acc: Option<Vec<bool>> = None;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = Some(match acc {
                None => base.clone(),
                Some(a) => mul(&a, &base),
            });
        }
        exp >>= 1;
        if exp > 0 {
            base = mul(&base, &base);
        }
    }
    acc.map(|a| a.iter().all(|&x| x)).unwrap_or(false)
}

fn is_nilpotent(m: &Matrix) -> bool {
    let mut p = m.clone();
    for _ in 1..m.dim() {
        let mut next = Matrix::zeros(m.dim());
        for i in 0..m.dim() {
            for j in 0..m.dim() {
                let s = (0..m.dim()).map(|l| p.at(i, l) * m.at(l, j)).sum();
                next.set(i, j, s);
            }
        }
        p = next;
    }
    p.is_zero()
}

fn sup_normalize(x: &mut [f64]) -> f64 {
    let s = x.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if s > 0.0 {
        x.iter_mut().for_each(|e| *e /= s);
    }
    s
}

fn residual(apply: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], lambda: f64) -> f64 {
    apply(x)
        .iter()
        .zip(x)
        .fold(0.0f64, |acc, (y, x)| acc.max((y - lambda * x).abs()))
}

/// Power iteration for the dominant nonnegative eigenvector of `apply`,
/// itself shifted by `shift` times the identity. Once the residual meets
/// the tolerance the iteration continues while it still improves, so the
/// vector survives the later rescaling with little amplified error.
fn power_iterate(apply: impl Fn(&[f64]) -> Vec<f64>, dim: usize, shift: f64, scale: f64) -> (Vec<f64>, bool) {
    let mut x = vec![1.0; dim];
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    for _ in 0..MAX_ITERATIONS {
        let mut y = apply(&x);
        y.iter_mut().zip(&x).for_each(|(y, x)| *y += shift * x);
        let lambda = sup_normalize(&mut y) - shift;
        x = y;
        let r = residual(&apply, &x, lambda);
        if r < best {
            best = r;
            stalled = 0;
        } else {
            stalled += 1;
        }
        if best <= RESIDUAL_TOL * scale && (stalled >= 20 || r <= f64::EPSILON * scale) {
            break;
        }
    }
    (x, best <= RESIDUAL_TOL * scale)
}

pub fn perron_triple(m: &Matrix) -> Result<SpectralTriple> {
    let k = m.dim();
    if m.is_zero() {
        return Err(Error::ZeroMatrix);
    }
    if k == 1 {
        return Ok(SpectralTriple {
            lambda: m.at(0, 0),
            u: vec![1.0],
            v: vec![1.0],
            primitive: true,
            converged: true,
            normalized: true,
        });
    }
    let primitive = is_primitive(m);
    if is_nilpotent(m) {
        return Ok(SpectralTriple {
            lambda: 0.0,
            u: vec![1.0 / k as f64; k],
            v: vec![1.0; k],
            primitive: false,
            converged: true,
            normalized: false,
        });
    }
    let scale = m.norm_inf();
    // A periodic matrix has several eigenvalues of modulus λ; shifting by a
    // positive multiple of the identity leaves λ + c strictly dominant.
    let shift = if primitive { 0.0 } else { scale };
    let (mut v, v_ok) = power_iterate(|x| m.mul_vec(x), k, shift, scale);
    let (mut u, u_ok) = power_iterate(|x| m.vec_mul(x), k, shift, scale);
    for x in u.iter_mut().chain(v.iter_mut()) {
        *x = x.max(0.0);
    }
    let u_sum: f64 = u.iter().sum();
    u.iter_mut().for_each(|x| *x /= u_sum);
    let mv = m.mul_vec(&v);
    let uv: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
    let normalized = uv > 1e-14;
    let lambda = if normalized {
        u.iter().zip(&mv).map(|(a, b)| a * b).sum::<f64>() / uv
    } else {
        let (num, den) = mv.iter().zip(&v).fold((0.0, 0.0), |(n, d), (y, x)| (n + y, d + x));
        num / den
    };
    if normalized {
        v.iter_mut().for_each(|x| *x /= uv);
    }
    Ok(SpectralTriple {
        lambda,
        u,
        v,
        primitive,
        converged: v_ok && u_ok,
        normalized,
    })
}

/// `N(t)ᵀ = N(0)ᵀ Mᵗ`, computed step by step.
pub fn project(m: &Matrix, n0: &PopulationState, t: u32) -> Vec<f64> {
    let mut x = n0.as_f64();
    for _ in 0..t {
        x = m.vec_mul(&x);
    }
    x
}

/// Continues a real-valued projection for `t` more steps.
pub fn project_from(m: &Matrix, x: &[f64], t: u32) -> Vec<f64> {
    let mut x = x.to_vec();
    for _ in 0..t {
        x = m.vec_mul(&x);
    }
    x
}
