//! Idempotency loss `F(w) = ||rho(w)^2 - rho(w)||_F^2` with
//! `rho(w) = sum_j w_j rho_j`, and a damped Newton iteration over weights
//! constrained to `sum_j w_j = 1`.
//!
//! The constraint is removed by elimination: the free coordinates are
//! `v = (w_1, ..., w_{M-1})` and `w_M = 1 - sum(v)`. With
//! `P(x) = x^4 - 2x^3 + x^2` the loss is `Tr P(rho)`, so
//!
//! ```text
//! dF/dw_j      = Re Tr(rho_j P'(rho)),   P'(x) = 4x^3 - 6x^2 + 2x
//! d2F/dw_j dw_k = 8 Re<X_j, X_k> + 4 Re Tr(X_j X_k)
//!                - 12 Re Tr(rho_j X_k) + 2 Re Tr(rho_j rho_k)
//! ```
//!
//! where `X_k = rho_k rho` and `<A, B> = Tr(A^dagger B)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::SourceMatch;
use crate::quantum::{common_dim, fidelity, idempotency_loss, DensityMatrix};
use crate::rng::{Domain, Stream};

/// Tolerance on `sum_j w_j = 1`.
pub const WEIGHT_SUM_TOL: f64 = 1e-10;
/// Two solutions whose fidelity exceeds `1 - DEDUP_TOL` are the same.
pub const DEDUP_TOL: f64 = 1e-6;

/// Real weights summing to one.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::validation("weights non-empty", "empty weight vector"));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL || !sum.is_finite() {
            return Err(Error::validation(
                "weights sum to 1",
                format!("sum is {sum:.17}"),
            ));
        }
        Ok(Self(w))
    }

    /// Full weights from the free coordinates; the last weight closes the sum.
    pub fn from_reduced(v: &[f64]) -> Self {
        let mut w = v.to_vec();
        w.push(1.0 - v.iter().sum::<f64>());
        Self(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The free coordinates `(w_1, ..., w_{M-1})`.
    pub fn reduced(&self) -> &[f64] {
        &self.0[..self.0.len() - 1]
    }
}

/// `w_1..w_{M-1} ~ U[-2, 2]`, `w_M` fixed by the constraint.
pub fn random_init(m: usize, rng: &mut Stream) -> WeightVector {
    let v: Vec<f64> = (0..m.saturating_sub(1)).map(|_| rng.uniform(-2.0, 2.0)).collect();
    WeightVector::from_reduced(&v)
}

fn check_lengths(w: &WeightVector, detectors: &[DensityMatrix]) -> Result<usize> {
    let d = common_dim(detectors)?;
    if w.len() != detectors.len() {
        return Err(Error::DimensionMismatch {
            expected: detectors.len(),
            found: w.len(),
        });
    }
    Ok(d)
}

fn combine(w: &[f64], detectors: &[DensityMatrix], d: usize) -> Vec<Complex64> {
    let mut acc = vec![Complex64::new(0.0, 0.0); d * d];
    for (wj, rho) in w.iter().zip(detectors) {
        for (a, x) in acc.iter_mut().zip(rho.as_slice()) {
            *a += x * *wj;
        }
    }
    acc
}

/// `F(w) = sum_mn |(rho^2 - rho)_mn|^2`.
pub fn loss(w: &WeightVector, detectors: &[DensityMatrix]) -> Result<f64> {
    let d = check_lengths(w, detectors)?;
    Ok(idempotency_loss(&combine(w.as_slice(), detectors, d), d))
}

fn re_trace_product(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    // Tr(AB) = sum_mn A_mn B_nm
    let d = a.nrows();
    let mut t = 0.0;
    for m in 0..d {
        for n in 0..d {
            t += (a[(m, n)] * b[(n, m)]).re;
        }
    }
    t
}

fn re_frobenius(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// Gradient and Hessian in the full weight coordinates.
fn full_derivatives(w: &[f64], detectors: &[DensityMatrix], d: usize) -> (Vec<f64>, DMatrix<f64>) {
    let m = detectors.len();
    let rho = DMatrix::from_vec(d, d, combine(w, detectors, d));
    let rho2 = &rho * &rho;
    let rho3 = &rho2 * &rho;
    let dp = rho3 * Complex64::new(4.0, 0.0) - &rho2 * Complex64::new(6.0, 0.0)
        + &rho * Complex64::new(2.0, 0.0);
    let grad: Vec<f64> = detectors
        .iter()
        .map(|r| re_frobenius(r.entries(), &dp))
        .collect();

    let xs: Vec<DMatrix<Complex64>> = detectors.iter().map(|r| r.entries() * &rho).collect();
    let mut hess = DMatrix::<f64>::zeros(m, m);
    for j in 0..m {
        for k in j..m {
            let rj = detectors[j].entries();
            let h = 8.0 * re_frobenius(&xs[j], &xs[k]) + 4.0 * re_trace_product(&xs[j], &xs[k])
                - 6.0 * (re_trace_product(rj, &xs[k]) + re_trace_product(detectors[k].entries(), &xs[j]))
                + 2.0 * re_frobenius(rj, detectors[k].entries());
            hess[(j, k)] = h;
            hess[(k, j)] = h;
        }
    }
    (grad, hess)
}

/// Gradient and Hessian of `F` in the reduced coordinates `v`.
pub fn loss_gradient_hessian(
    w: &WeightVector,
    detectors: &[DensityMatrix],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let d = check_lengths(w, detectors)?;
    let (g, h) = full_derivatives(w.as_slice(), detectors, d);
    Ok(reduce(&g, &h))
}

fn reduce(g: &[f64], h: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let m = g.len();
    let last = m - 1;
    let grad = DVector::from_fn(last, |i, _| g[i] - g[last]);
    let hess = DMatrix::from_fn(last, last, |i, k| {
        h[(i, k)] - h[(i, last)] - h[(last, k)] + h[(last, last)]
    });
    (grad, hess)
}

/// Newton iteration settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonConfig {
    /// Converged once `F` drops below this.
    pub loss_tol: f64,
    pub max_iterations: usize,
    /// Steps shorter than this end the iteration.
    pub step_tol: f64,
    /// A short final step still counts as converged below this loss.
    pub stall_loss_tol: f64,
    /// Smallest nonzero Levenberg damping.
    pub lambda_floor: f64,
    pub lambda_factor: f64,
    /// Damping beyond this is treated as failure to make progress.
    pub lambda_max: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            loss_tol: 1e-12,
            max_iterations: 1000,
            step_tol: 1e-12,
            stall_loss_tol: 1e-8,
            lambda_floor: 1e-8,
            lambda_factor: 10.0,
            lambda_max: 1e16,
        }
    }
}

/// Outcome of one Newton run.
#[derive(Clone, Debug)]
pub struct NewtonReport {
    pub w_final: WeightVector,
    pub rho_f: DensityMatrix,
    pub loss_final: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Filled in by the evaluator when ground truth is available.
    pub matched_source: Option<SourceMatch>,
}

/// Eigen-solved `(H + lambda I)^{-1} g`; `None` when the shifted matrix is
/// numerically singular.
struct ShiftedSolver {
    vectors: DMatrix<f64>,
    values: DVector<f64>,
    projected: DVector<f64>,
    scale: f64,
}

const SINGULAR_RTOL: f64 = 1e-12;

impl ShiftedSolver {
    fn new(h: DMatrix<f64>, g: &DVector<f64>) -> Option<Self> {
        if h.iter().any(|x| !x.is_finite()) || g.iter().any(|x| !x.is_finite()) {
            return None;
        }
        let eig = h.symmetric_eigen();
        let projected = eig.eigenvectors.transpose() * g;
        let scale = eig.eigenvalues.iter().fold(0.0f64, |a, e| a.max(e.abs()));
        Some(Self {
            vectors: eig.eigenvectors,
            values: eig.eigenvalues,
            projected,
            scale,
        })
    }

    fn solve(&self, lambda: f64) -> Option<DVector<f64>> {
        let threshold = SINGULAR_RTOL * self.scale.max(f64::MIN_POSITIVE);
        let mut coeffs = self.projected.clone();
        for (c, e) in coeffs.iter_mut().zip(self.values.iter()) {
            let shifted = e + lambda;
            if shifted.abs() <= threshold {
                return None;
            }
            *c /= shifted;
        }
        Some(&self.vectors * coeffs)
    }
}

/// Levenberg-damped Newton iteration from `init`.
///
/// Each iteration solves `(H + lambda I) s = g` in the reduced coordinates
/// and tries `v - s`. A step that fails to lower `F` (or a singular solve)
/// raises `lambda` to `max(floor, factor * lambda)` and retries; an accepted
/// step divides `lambda` by `factor`.
pub fn newton_solve(
    detectors: &[DensityMatrix],
    init: &WeightVector,
    config: &NewtonConfig,
) -> Result<NewtonReport> {
    let d = check_lengths(init, detectors)?;
    let m = detectors.len();
    let mut v = init.reduced().to_vec();
    let mut w = WeightVector::from_reduced(&v);
    let mut f = idempotency_loss(&combine(w.as_slice(), detectors, d), d);
    let mut lambda = 0.0f64;
    let mut iterations = 0;
    let mut converged = f < config.loss_tol;

    while !converged && iterations < config.max_iterations && m > 1 {
        iterations += 1;
        let (g_full, h_full) = full_derivatives(w.as_slice(), detectors, d);
        let (g, h) = reduce(&g_full, &h_full);
        let Some(solver) = ShiftedSolver::new(h, &g) else {
            break;
        };

        let mut accepted = None;
        while lambda <= config.lambda_max {
            if let Some(step) = solver.solve(lambda) {
                let trial: Vec<f64> = v.iter().zip(step.iter()).map(|(a, s)| a - s).collect();
                let tw = WeightVector::from_reduced(&trial);
                let tf = idempotency_loss(&combine(tw.as_slice(), detectors, d), d);
                if tf.is_finite() && tf < f {
                    accepted = Some((trial, tw, tf, step.norm()));
                    break;
                }
            }
            lambda = (lambda * config.lambda_factor).max(config.lambda_floor);
        }

        let Some((nv, nw, nf, step_norm)) = accepted else {
            // no damping level lowers the loss: the step has shrunk to nothing
            converged = f < config.stall_loss_tol;
            break;
        };
        v = nv;
        w = nw;
        f = nf;
        lambda /= config.lambda_factor;
        if lambda < config.lambda_floor * 1e-4 {
            lambda = 0.0;
        }
        if f < config.loss_tol {
            converged = true;
        } else if step_norm < config.step_tol {
            converged = f < config.stall_loss_tol;
            break;
        }
    }

    let rho_f = DensityMatrix::combination(w.as_slice(), detectors)?;
    Ok(NewtonReport {
        w_final: w,
        rho_f,
        loss_final: f,
        iterations,
        converged,
        matched_source: None,
    })
}

fn same_solution(a: &DensityMatrix, b: &DensityMatrix) -> bool {
    match (a.to_physical(), b.to_physical()) {
        (Ok(pa), Ok(pb)) => fidelity(&pa, &pb).is_ok_and(|f| f > 1.0 - DEDUP_TOL),
        _ => false,
    }
}

/// Runs `restarts` Newton solves from independent random initializations and
/// returns the distinct converged solutions sorted by loss.
///
/// Restart `r` draws its start point from stream `(seed, NewtonInit, r)`, so
/// the result does not depend on how many threads run the restarts.
pub fn multi_restart(
    detectors: &[DensityMatrix],
    restarts: usize,
    seed: u64,
    config: &NewtonConfig,
) -> Result<Vec<NewtonReport>> {
    let runs = run_restarts(detectors, restarts, seed, config)?;
    Ok(distinct_solutions(runs))
}

/// Every restart's report, in restart order.
pub fn run_restarts(
    detectors: &[DensityMatrix],
    restarts: usize,
    seed: u64,
    config: &NewtonConfig,
) -> Result<Vec<NewtonReport>> {
    if restarts == 0 {
        return Err(Error::validation("restarts >= 1", "restarts = 0"));
    }
    common_dim(detectors)?;
    let m = detectors.len();
    (0..restarts as u64)
        .into_par_iter()
        .map(|r| {
            let init = random_init(m, &mut Stream::new(seed, Domain::NewtonInit, r));
            newton_solve(detectors, &init, config)
        })
        .collect()
}

/// Converged reports with duplicates (fidelity above `1 - 1e-6`) merged,
/// keeping the lower-loss representative, sorted by loss.
pub fn distinct_solutions(runs: Vec<NewtonReport>) -> Vec<NewtonReport> {
    let mut kept: Vec<NewtonReport> = Vec::new();
    for run in runs.into_iter().filter(|r| r.converged) {
        match kept.iter_mut().find(|k| same_solution(&k.rho_f, &run.rho_f)) {
            Some(k) if run.loss_final < k.loss_final => *k = run,
            Some(_) => {}
            None => kept.push(run),
        }
    }
    kept.sort_by(|a, b| a.loss_final.total_cmp(&b.loss_final));
    kept
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluate::match_sources;
    use crate::quantum::{purity, PureState};
    use crate::scenario::{generate_scenario, mix, MixingMatrix};
    use proptest::prelude::*;

    /// Plain element-by-element evaluation of sum |(rho^2 - rho)_mn|^2.
    #[allow(clippy::needless_range_loop)]
    fn naive_loss(w: &[f64], detectors: &[DensityMatrix]) -> f64 {
        let d = detectors[0].dim();
        let mut rho = vec![vec![Complex64::new(0.0, 0.0); d]; d];
        for (wj, r) in w.iter().zip(detectors) {
            for i in 0..d {
                for k in 0..d {
                    rho[i][k] += r.entries()[(i, k)] * *wj;
                }
            }
        }
        let mut total = 0.0;
        for i in 0..d {
            for k in 0..d {
                let mut sq = Complex64::new(0.0, 0.0);
                for l in 0..d {
                    sq += rho[i][l] * rho[l][k];
                }
                total += (sq - rho[i][k]).norm_sqr();
            }
        }
        total
    }

    fn reduced_loss(v: &[f64], detectors: &[DensityMatrix]) -> f64 {
        naive_loss(WeightVector::from_reduced(v).as_slice(), detectors)
    }

    fn fd_gradient(v: &[f64], detectors: &[DensityMatrix], h: f64) -> Vec<f64> {
        (0..v.len())
            .map(|i| {
                let mut p = v.to_vec();
                let mut q = v.to_vec();
                p[i] += h;
                q[i] -= h;
                (reduced_loss(&p, detectors) - reduced_loss(&q, detectors)) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: f64, b: f64, scale: f64) -> f64 {
        (a - b).abs() / scale.max(1e-300)
    }

    #[test]
    fn loss_zero_on_pure_detector() {
        let s = generate_scenario(8, 3, 4, 1).unwrap();
        let mut rows = s.mixing().rows().to_vec();
        rows[2] = vec![0.0, 1.0, 0.0];
        let dets = mix(s.sources(), &MixingMatrix::new(rows).unwrap()).unwrap();
        let w = WeightVector::new(vec![0.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(loss(&w, &dets).unwrap() <= 1e-12);
    }

    #[test]
    fn loss_of_maximally_mixed_state() {
        let d = 8;
        let basis: Vec<PureState> = (0..d)
            .map(|k| {
                let mut c = vec![0.0; d];
                c[k] = 1.0;
                PureState::from_real(&c).unwrap()
            })
            .collect();
        let dets = mix(&basis, &MixingMatrix::new(vec![vec![0.125; 8]]).unwrap()).unwrap();
        let f = loss(&WeightVector::new(vec![1.0]).unwrap(), &dets).unwrap();
        assert!((f - 49.0 / 512.0).abs() < 1e-15);
        assert!((f - 0.095_703_13).abs() < 1e-8);
    }

    #[test]
    fn loss_matches_naive_oracle() {
        let s = generate_scenario(8, 3, 7, 17).unwrap();
        let mut rng = Stream::new(17, Domain::NewtonInit, 99);
        for _ in 0..10 {
            let w = random_init(7, &mut rng);
            let fast = loss(&w, s.detectors()).unwrap();
            let slow = naive_loss(w.as_slice(), s.detectors());
            assert!((fast - slow).abs() <= 1e-12 * slow.max(1.0), "{fast} vs {slow}");
        }
    }

    #[test]
    fn loss_rejects_mismatched_lengths() {
        let s = generate_scenario(8, 3, 7, 17).unwrap();
        let w = WeightVector::new(vec![0.5, 0.5]).unwrap();
        assert!(matches!(loss(&w, s.detectors()), Err(Error::DimensionMismatch { .. })));
        assert!(WeightVector::new(vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn gradient_vanishes_at_exact_solution() {
        let s = generate_scenario(8, 3, 3, 23).unwrap();
        // invert the 3x3 mixing to hit source 0 exactly
        let a = DMatrix::from_fn(3, 3, |j, i| s.mixing().row(j)[i]);
        let target = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let w = a.transpose().lu().solve(&target).unwrap();
        let w = WeightVector::new(w.iter().copied().collect()).unwrap();
        assert!(loss(&w, s.detectors()).unwrap() < 1e-20);
        let (g, h) = loss_gradient_hessian(&w, s.detectors()).unwrap();
        assert!(g.norm() <= 1e-8);
        assert!((&h - h.transpose()).amax() <= 1e-10);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for seed in 0..5 {
            let s = generate_scenario(8, 3, 7, seed).unwrap();
            let w = random_init(7, &mut Stream::new(seed, Domain::NewtonInit, 7));
            let (g, h) = loss_gradient_hessian(&w, s.detectors()).unwrap();
            let fd = fd_gradient(w.reduced(), s.detectors(), 1e-5);
            let gscale = g.amax();
            for (a, b) in g.iter().zip(&fd) {
                assert!(rel_err(*a, *b, gscale) <= 1e-6, "{a} vs {b}");
            }
            let hscale = h.amax();
            let step = 1e-5;
            for i in 0..6 {
                let mut p = w.reduced().to_vec();
                let mut q = w.reduced().to_vec();
                p[i] += step;
                q[i] -= step;
                let (gp, _) = loss_gradient_hessian(&WeightVector::from_reduced(&p), s.detectors()).unwrap();
                let (gq, _) = loss_gradient_hessian(&WeightVector::from_reduced(&q), s.detectors()).unwrap();
                for k in 0..6 {
                    let fd = (gp[k] - gq[k]) / (2.0 * step);
                    assert!(rel_err(h[(k, i)], fd, hscale) <= 1e-4);
                }
            }
        }
    }

    #[test]
    fn single_source_always_recovered() {
        let s = generate_scenario(8, 1, 4, 3).unwrap();
        for r in 0..5 {
            let init = random_init(4, &mut Stream::new(3, Domain::NewtonInit, r));
            let mut rep = newton_solve(s.detectors(), &init, &NewtonConfig::default()).unwrap();
            assert!(rep.converged);
            let m = match_sources(&rep.rho_f, s.sources()).unwrap();
            assert!((m.fidelity - 1.0).abs() <= 1e-9);
            rep.matched_source = Some(m);
        }
        let sols = multi_restart(s.detectors(), 8, 3, &NewtonConfig::default()).unwrap();
        assert_eq!(sols.len(), 1);
    }

    #[test]
    fn three_sources_recovered_with_restarts() {
        let s = generate_scenario(8, 3, 7, 42).unwrap();
        let sols = multi_restart(s.detectors(), 50, 42, &NewtonConfig::default()).unwrap();
        assert_eq!(sols.len(), 3, "found {} solutions", sols.len());
        let mut matched: Vec<usize> = sols
            .iter()
            .map(|r| {
                let m = match_sources(&r.rho_f, s.sources()).unwrap();
                assert!(m.fidelity >= 0.999);
                assert!((purity(&r.rho_f) - 1.0).abs() <= 1e-6);
                assert!(r.rho_f.min_eigenvalue() >= -1e-8);
                m.index
            })
            .collect();
        matched.sort();
        assert_eq!(matched, vec![0, 1, 2]);
        for w in sols.windows(2) {
            assert!(w[0].loss_final <= w[1].loss_final);
        }
    }

    #[test]
    fn one_restart_gives_at_most_one_solution() {
        let s = generate_scenario(8, 3, 5, 8).unwrap();
        assert!(multi_restart(s.detectors(), 1, 8, &NewtonConfig::default()).unwrap().len() <= 1);
        assert!(multi_restart(s.detectors(), 0, 8, &NewtonConfig::default()).is_err());
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let s = generate_scenario(8, 3, 7, 4).unwrap();
        let cfg = NewtonConfig {
            max_iterations: 1,
            ..NewtonConfig::default()
        };
        let init = random_init(7, &mut Stream::new(4, Domain::NewtonInit, 0));
        let rep = newton_solve(s.detectors(), &init, &cfg).unwrap();
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn gradient_and_hessian_agree_with_finite_differences(seed in any::<u64>()) {
            let s = generate_scenario(8, 3, 5, seed).unwrap();
            let w = random_init(5, &mut Stream::new(seed, Domain::NewtonInit, 1));
            let (g, h) = loss_gradient_hessian(&w, s.detectors()).unwrap();
            let fd = fd_gradient(w.reduced(), s.detectors(), 1e-5);
            for (a, b) in g.iter().zip(&fd) {
                prop_assert!(rel_err(*a, *b, g.amax()) <= 1e-6);
            }
            prop_assert!((&h - h.transpose()).amax() <= 1e-10 * h.amax().max(1.0));
        }

        #[test]
        fn loss_is_quartic_along_lines(seed in any::<u64>()) {
            let s = generate_scenario(6, 2, 4, seed).unwrap();
            let mut rng = Stream::new(seed, Domain::NewtonInit, 2);
            let base = random_init(4, &mut rng);
            let dir: Vec<f64> = (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect();
            let at = |t: f64| {
                let v: Vec<f64> = base.reduced().iter().zip(&dir).map(|(b, d)| b + t * d).collect();
                loss(&WeightVector::from_reduced(&v), s.detectors()).unwrap()
            };
            // fourth forward difference of a quartic is constant
            let fourth = |t0: f64, h: f64| {
                at(t0) - 4.0 * at(t0 + h) + 6.0 * at(t0 + 2.0 * h) - 4.0 * at(t0 + 3.0 * h) + at(t0 + 4.0 * h)
            };
            let a = fourth(-0.5, 0.25);
            let b = fourth(0.3, 0.25);
            prop_assert!((a - b).abs() <= 1e-8 * a.abs().max(b.abs()).max(1.0), "{} vs {}", a, b);
            prop_assert!(at(0.0) >= 0.0);
        }

        #[test]
        fn iterates_keep_weights_normalized(seed in any::<u64>()) {
            let s = generate_scenario(8, 3, 6, seed).unwrap();
            let init = random_init(6, &mut Stream::new(seed, Domain::NewtonInit, 0));
            let rep = newton_solve(s.detectors(), &init, &NewtonConfig::default()).unwrap();
            let sum: f64 = rep.w_final.as_slice().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-10);
            if rep.converged {
                prop_assert!(rep.loss_final <= 1e-12 || rep.loss_final <= 1e-8);
                prop_assert!((purity(&rep.rho_f) - 1.0).abs() <= 4.0 * rep.loss_final.sqrt() + 1e-12);
                // an eigenvalue lambda contributes (lambda^2 - lambda)^2 to the loss
                prop_assert!(rep.rho_f.min_eigenvalue() >= -2.0 * rep.loss_final.sqrt() - 1e-12);
            }
        }
    }
}
