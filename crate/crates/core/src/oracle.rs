//! Independent numerical checks of the closed-form sensitivities.
//!
//! [`brute_force_operator_norm`] searches directly for the `(p, q)`
//! operator norm of the block-diagonal map `h -> (h_i * g_i)_i` and never
//! looks at the closed form; [`empirical_sensitivity_limit`] estimates the
//! sensitivity from function values alone, using finite perturbations of
//! shrinking size.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::{Dataset, JacobianTensor, NormPair};
use crate::error::{Error, Result};
use crate::sensitivity::{alpha_from_pq, generalized_mean, sensitivity_pq};

/// Largest sample count the brute-force search accepts.
pub const MAX_ORACLE_SAMPLES: usize = 12;
pub const DEFAULT_RESTARTS: usize = 20;
pub const DEFAULT_ITERS: usize = 500;
/// Offset used to step off the non-differentiable point `h_i = 0`.
const KINK_OFFSET: f64 = 1e-9;

/// Plain Lp norm, rescaled by the largest magnitude.
fn lp_norm(v: &[f64], p: f64) -> f64 {
    let m = v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    if m == 0.0 || p.is_infinite() {
        return m;
    }
    m * v.iter().map(|x| (x.abs() / m).powf(p)).sum::<f64>().powf(1.0 / p)
}

fn normalize(h: &mut [f64], p: f64) {
    let norm = lp_norm(h, p);
    if norm > 0.0 {
        h.iter_mut().for_each(|x| *x /= norm);
    }
}

#[inline]
fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// `D h` flattened as `[i * m + k]`.
fn apply_operator(block: ArrayView2<'_, f64>, h: &[f64]) -> Vec<f64> {
    block.outer_iter().zip(h).flat_map(|(row, &hi)| row.iter().map(move |g| hi * g).collect::<Vec<_>>()).collect()
}

/// Ratio `||D h||_q / ||h||_p`.
fn objective(block: ArrayView2<'_, f64>, h: &[f64], norms: NormPair) -> f64 {
    let hn = lp_norm(h, norms.p.get());
    if hn == 0.0 {
        return 0.0;
    }
    lp_norm(&apply_operator(block, h), norms.q.get()) / hn
}

/// A (sub)gradient of `h -> ||D h||_q` at `h`.
fn gradient(block: ArrayView2<'_, f64>, h: &[f64], q: f64) -> Vec<f64> {
    let h: Vec<f64> = h.iter().map(|&x| if x == 0.0 { KINK_OFFSET } else { x }).collect();
    let dh = apply_operator(block, &h);
    let f = lp_norm(&dh, q);
    let m = block.ncols();
    let mut grad = vec![0.0; h.len()];
    if f == 0.0 {
        return grad;
    }
    if q.is_infinite() {
        let (best, _) =
            dh.iter().enumerate().fold((0, -1.0), |acc, (idx, v)| if v.abs() > acc.1 { (idx, v.abs()) } else { acc });
        let (i, k) = (best / m, best % m);
        grad[i] = sign(dh[best]) * block[[i, k]];
        return grad;
    }
    for (i, g) in grad.iter_mut().enumerate() {
        *g = (0..m)
            .map(|k| {
                let u = dh[i * m + k] / f;
                block[[i, k]] * sign(u) * u.abs().powf(q - 1.0)
            })
            .sum();
    }
    grad
}

/// The point of the unit p-sphere most aligned with `grad`:
/// `argmax <grad, u>` subject to `||u||_p = 1`.
fn best_aligned(grad: &[f64], current: &[f64], p: f64) -> Vec<f64> {
    if p == 1.0 {
        let (best, _) =
            grad.iter().enumerate().fold((0, -1.0), |acc, (i, g)| if g.abs() > acc.1 { (i, g.abs()) } else { acc });
        let mut u = vec![0.0; grad.len()];
        u[best] = sign(grad[best]);
        return u;
    }
    if p.is_infinite() {
        return grad.iter().zip(current).map(|(&g, &c)| if g == 0.0 { sign(c) } else { sign(g) }).collect();
    }
    let dual_power = 1.0 / (p - 1.0);
    let scale = grad.iter().fold(0.0_f64, |acc, g| acc.max(g.abs()));
    if scale == 0.0 {
        return current.to_vec();
    }
    let mut u: Vec<f64> = grad.iter().map(|g| sign(*g) * (g.abs() / scale).powf(dual_power)).collect();
    normalize(&mut u, p);
    u
}

/// Result of one multi-start search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleOutcome {
    pub value: f64,
    /// Maximizing direction, normalized to `||h||_p = 1`.
    pub argmax: Vec<f64>,
    /// Best value reached from each start, in start order.
    pub start_values: Vec<f64>,
}

fn ascend(block: ArrayView2<'_, f64>, mut h: Vec<f64>, norms: NormPair, iters: usize) -> (f64, Vec<f64>) {
    let (p, q) = (norms.p.get(), norms.q.get());
    normalize(&mut h, p);
    let mut value = objective(block, &h, norms);
    for _ in 0..iters {
        let grad = gradient(block, &h, q);
        let next = best_aligned(&grad, &h, p);
        let next_value = objective(block, &next, norms);
        if next_value < value {
            break;
        }
        let moved = next.iter().zip(&h).fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
        h = next;
        value = next_value;
        if moved < 1e-13 {
            break;
        }
    }
    (value, h)
}

fn start_point(n: usize, start: usize, seed: u64) -> Vec<f64> {
    if start == 0 {
        return vec![1.0; n];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(start as u64);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Multi-start ascent on `||D h||_q` over the unit `p`-sphere, where
/// `(D h)_i = h_i * block[i, ..]`. Start 0 is the all-ones direction; the
/// remaining `restarts - 1` are seeded random directions.
///
/// Each iteration moves to the point of the sphere best aligned with the
/// current (sub)gradient, which never decreases a convex objective.
pub fn operator_norm_search(
    block: ArrayView2<'_, f64>,
    norms: NormPair,
    restarts: usize,
    iters: usize,
    seed: u64,
) -> Result<OracleOutcome> {
    let n = block.nrows();
    if n == 0 || block.ncols() == 0 {
        return Err(Error::EmptyInput);
    }
    if n > MAX_ORACLE_SAMPLES {
        return Err(Error::TooLarge(n));
    }
    if block.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("operator entries".into()));
    }
    let restarts = restarts.max(1);
    let runs: Vec<(f64, Vec<f64>)> =
        (0..restarts).into_par_iter().map(|s| ascend(block, start_point(n, s, seed), norms, iters)).collect();
    // first start wins ties, so the result is independent of scheduling
    let (best, _) =
        runs.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (s, r)| if r.0 > acc.1 { (s, r.0) } else { acc });
    Ok(OracleOutcome {
        value: runs[best].0,
        argmax: runs[best].1.clone(),
        start_values: runs.iter().map(|r| r.0).collect(),
    })
}

/// Brute-force `(p, q)` operator norm of the derivative block of one
/// variable (`N × m`, one row per sample).
pub fn brute_force_operator_norm(
    block: ArrayView2<'_, f64>,
    norms: NormPair,
    restarts: usize,
    iters: usize,
    seed: u64,
) -> Result<f64> {
    operator_norm_search(block, norms, restarts, iters, seed).map(|o| o.value)
}

/// For each `epsilon`, the largest observed `v(f, h) / epsilon` over sampled
/// perturbations with `||h||_p = epsilon` applied to feature `j` of every
/// sample, where `v` is the `L^q` norm of the stacked output changes.
///
/// Perturbation directions are `probes` seeded draws (dense, sparse and
/// random-sign, so the vertices of both the 1-ball and the max-ball are
/// reachable) followed by a derivative-free local refinement of the best
/// draw. The same directions are reused for every epsilon.
pub fn empirical_sensitivity_limit<F>(
    f: F,
    dataset: &Dataset,
    j: usize,
    norms: NormPair,
    epsilons: &[f64],
    probes: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    if j >= dataset.n_features() {
        return Err(Error::IndexOutOfRange { what: "feature", index: j, len: dataset.n_features() });
    }
    if probes == 0 {
        return Err(Error::InvalidArgument("probes must be at least 1".into()));
    }
    if epsilons.is_empty() || epsilons.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(Error::InvalidArgument("epsilons must be positive and finite".into()));
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("epsilons must be strictly decreasing".into()));
    }
    let (p, q) = (norms.p.get(), norms.q.get());
    let points: Vec<Vec<f64>> = dataset.features().rows().into_iter().map(|r| r.to_vec()).collect();
    let n = points.len();
    let base: Vec<Vec<f64>> = points.iter().map(|x| f(x)).collect();
    if base.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("function value at a sample".into()));
    }

    let variation = |h: &[f64], eps: f64| -> Result<f64> {
        let mut diffs = Vec::with_capacity(n * base[0].len());
        for ((x, f0), hi) in points.iter().zip(&base).zip(h) {
            let mut xp = x.clone();
            xp[j] += eps * hi;
            let f1 = f(&xp);
            if f1.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("function value at perturbation {}", eps * hi)));
            }
            diffs.extend(f1.iter().zip(f0).map(|(a, b)| a - b));
        }
        Ok(lp_norm(&diffs, q) / eps)
    };

    let mut out = Vec::with_capacity(epsilons.len());
    for &eps in epsilons {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best_ratio = f64::NEG_INFINITY;
        let mut best_h = vec![0.0; n];
        for t in 0..probes {
            let mut h: Vec<f64> = if t % 3 == 0 {
                (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
            } else if t % 3 == 2 {
                (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect()
            } else {
                let support = rng.gen_range(1..=n);
                let mut h = vec![0.0; n];
                for _ in 0..support {
                    h[rng.gen_range(0..n)] = rng.sample::<f64, _>(StandardNormal);
                }
                h
            };
            if lp_norm(&h, p) == 0.0 {
                continue;
            }
            normalize(&mut h, p);
            let ratio = variation(&h, eps)?;
            if ratio > best_ratio {
                best_ratio = ratio;
                best_h = h;
            }
        }
        let mut radius = 0.5;
        for _ in 0..400 {
            let mut cand: Vec<f64> = best_h.iter().map(|v| v + radius * rng.sample::<f64, _>(StandardNormal)).collect();
            radius *= 0.985;
            if lp_norm(&cand, p) == 0.0 {
                continue;
            }
            normalize(&mut cand, p);
            let ratio = variation(&cand, eps)?;
            if ratio > best_ratio {
                best_ratio = ratio;
                best_h = cand;
            }
        }
        out.push((eps, best_ratio));
    }
    Ok(out)
}

/// Central differences `(f(x + s e_j) - f(x - s e_j)) / 2s`, as `m × n`.
pub fn finite_diff_jacobian<F>(f: F, x: &[f64], step: f64) -> Result<Array2<f64>>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    let n = x.len();
    let m = f(x).len();
    let mut jac = Array2::zeros((m, n));
    let mut xp = x.to_vec();
    for j in 0..n {
        xp[j] = x[j] + step;
        let plus = f(&xp);
        xp[j] = x[j] - step;
        let minus = f(&xp);
        xp[j] = x[j];
        if plus.len() != m || minus.len() != m {
            return Err(Error::DimensionMismatch { expected: m, got: plus.len().min(minus.len()) });
        }
        for k in 0..m {
            let d = (plus[k] - minus[k]) / (2.0 * step);
            if !d.is_finite() {
                return Err(Error::NonFinite(format!("difference quotient for output {k}, input {j}")));
            }
            jac[[k, j]] = d;
        }
    }
    Ok(jac)
}

/// The exponents swept by [`verify_sweep`].
pub const SWEEP_EXPONENTS: [f64; 5] = [1.0, 1.5, 2.0, 3.0, f64::INFINITY];

/// Aggregate comparison for one `(p, q)` pair.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub p: String,
    pub q: String,
    pub instances: usize,
    /// Largest `(closed - oracle) / closed` observed.
    pub max_shortfall: f64,
    /// Largest `(oracle - closed) / closed` observed.
    pub max_excess: f64,
    /// Largest power-mean identity mismatch for scalar instances with `p > q`.
    pub max_identity_error: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub seed: u64,
    pub instances: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }
}

pub const ORACLE_REL_TOL: f64 = 1e-3;
pub const ORACLE_EXCESS_TOL: f64 = 1e-9;
pub const IDENTITY_REL_TOL: f64 = 1e-12;

/// Random derivative tensor with `N <= 6`, `m <= 3` and some exact zeros.
pub fn random_instance(rng: &mut ChaCha8Rng) -> JacobianTensor {
    let n = rng.gen_range(1..=6);
    let m = rng.gen_range(1..=3);
    let values = ndarray::Array3::from_shape_simple_fn((n, m, 1), || {
        if rng.gen_bool(0.1) {
            0.0
        } else {
            rng.sample::<f64, _>(StandardNormal)
        }
    });
    JacobianTensor::new(values).expect("finite random entries")
}

/// Compares the closed form with the brute-force search on `instances`
/// random tensors for every `(p, q)` in [`SWEEP_EXPONENTS`]², and checks the
/// power-mean identity on the scalar ones.
pub fn verify_sweep(seed: u64, instances: usize) -> Result<SweepReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tensors: Vec<JacobianTensor> = (0..instances).map(|_| random_instance(&mut rng)).collect();
    let mut rows = Vec::new();
    for &p in &SWEEP_EXPONENTS {
        for &q in &SWEEP_EXPONENTS {
            let norms = NormPair::new(p, q)?;
            let mut shortfall = 0.0_f64;
            let mut excess = 0.0_f64;
            let mut identity: Option<f64> = None;
            for (t, jac) in tensors.iter().enumerate() {
                let closed = sensitivity_pq(jac, 0, norms)?;
                let oracle = brute_force_operator_norm(
                    jac.feature_block(0)?,
                    norms,
                    DEFAULT_RESTARTS,
                    DEFAULT_ITERS,
                    seed ^ (t as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                )?;
                let denom = closed.max(f64::MIN_POSITIVE);
                if closed > 0.0 {
                    shortfall = shortfall.max((closed - oracle) / denom);
                    excess = excess.max((oracle - closed) / denom);
                } else if oracle > 0.0 {
                    excess = f64::INFINITY;
                }
                if jac.n_outputs() == 1 && p > q {
                    let alpha = alpha_from_pq(norms);
                    let mags: Vec<f64> = jac.partials(0, 0)?.iter().map(|v| v.abs()).collect();
                    let via_mean = (jac.n_samples() as f64).powf(1.0 / alpha) * generalized_mean(&mags, alpha)?;
                    let err = if closed > 0.0 { (via_mean - closed).abs() / closed } else { via_mean.abs() };
                    identity = Some(identity.map_or(err, |c: f64| c.max(err)));
                }
            }
            let passed = shortfall <= ORACLE_REL_TOL
                && excess <= ORACLE_EXCESS_TOL
                && identity.is_none_or(|c| c <= IDENTITY_REL_TOL);
            rows.push(SweepRow {
                p: norms.p.to_string(),
                q: norms.q.to_string(),
                instances,
                max_shortfall: shortfall,
                max_excess: excess,
                max_identity_error: identity,
                passed,
            });
        }
    }
    Ok(SweepReport { seed, instances, rows })
}
