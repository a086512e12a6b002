//! Capacity measures.
//!
//! For the class `{x ↦ ⟨w, x⟩ : ‖w‖ ≤ B}` the supremum inside the empirical
//! Rademacher complexity has a closed form per sign vector,
//! `sup_w (1/m) Σ σᵢ⟨w, xᵢ⟩ = (B/m) ‖Σ σᵢ xᵢ‖`, so estimators only need to
//! average that quantity over sign vectors. Values are for the margin class;
//! the loss class is covered through contraction with factor 1.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::environment::Environment;
use crate::error::{validation, Result};
use crate::linalg::{norm, norm_sq, KahanSum, Matrix};
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    ClosedForm,
    MonteCarlo,
    Exhaustive,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RademacherEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_draws: usize,
    pub method: EstimateMethod,
}

impl RademacherEstimate {
    fn from_draws(values: &[f64], method: EstimateMethod) -> Self {
        let n = values.len();
        let mean = values.iter().copied().collect::<KahanSum>().value() / n as f64;
        let std_error = if n > 1 {
            let ss = values.iter().map(|v| (v - mean).powi(2)).collect::<KahanSum>().value();
            (ss / (n - 1) as f64).sqrt() / (n as f64).sqrt()
        } else {
            0.0
        };
        RademacherEstimate {
            mean,
            std_error,
            n_draws: n,
            method,
        }
    }
}

/// Norm bound `B` of the linear hypothesis class.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HypothesisClassSpec {
    norm_bound: f64,
}

impl HypothesisClassSpec {
    pub fn new(norm_bound: f64) -> Result<Self> {
        if !(norm_bound > 0.0 && norm_bound.is_finite()) {
            return Err(validation(format!("norm bound must be positive, got {norm_bound}")));
        }
        Ok(HypothesisClassSpec { norm_bound })
    }

    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }
}

fn check_points<X: AsRef<[f64]>>(xs: &[X], b: f64) -> Result<()> {
    if xs.is_empty() {
        return Err(validation("empty point set"));
    }
    HypothesisClassSpec::new(b)?;
    let d = xs[0].as_ref().len();
    if xs.iter().any(|x| x.as_ref().len() != d) {
        return Err(validation("points have different dimensions"));
    }
    Ok(())
}

/// `B √(Σ‖xᵢ‖²) / m`, the Jensen upper bound on the expectation.
pub fn linear_rad_closed_form<X: AsRef<[f64]>>(xs: &[X], b: f64) -> Result<f64> {
    check_points(xs, b)?;
    let total: f64 = xs.iter().map(|x| norm_sq(x.as_ref())).sum();
    Ok(b * total.sqrt() / xs.len() as f64)
}

/// `(B/m) ‖Σ σᵢ xᵢ‖` for one sign vector.
pub fn linear_sup_for_signs<X: AsRef<[f64]>>(xs: &[X], b: f64, signs: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), signs.len());
    let d = xs[0].as_ref().len();
    let mut acc = vec![0.0; d];
    for (x, &s) in xs.iter().zip(signs) {
        for (a, v) in acc.iter_mut().zip(x.as_ref()) {
            *a += s * v;
        }
    }
    b * norm(&acc) / xs.len() as f64
}

fn rademacher_signs(seed: u64, m: usize) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..m).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

/// Monte-Carlo estimate over `n_draws` independent sign vectors. Draw `t`
/// uses its own derived seed, so the result is independent of thread count.
pub fn linear_rad_monte_carlo<X: AsRef<[f64]> + Sync>(
    xs: &[X],
    b: f64,
    n_draws: usize,
    seed: u64,
) -> Result<RademacherEstimate> {
    check_points(xs, b)?;
    if n_draws == 0 {
        return Err(validation("n_draws must be at least 1"));
    }
    let values: Vec<f64> = (0..n_draws)
        .into_par_iter()
        .map(|t| {
            let signs = rademacher_signs(derive_seed(seed, &format!("rad/{t}")), xs.len());
            linear_sup_for_signs(xs, b, &signs)
        })
        .collect();
    Ok(RademacherEstimate::from_draws(&values, EstimateMethod::MonteCarlo))
}

/// Averages the per-sign-vector supremum over a caller-supplied list of sign
/// vectors.
pub fn linear_rad_from_signs<X: AsRef<[f64]>>(
    xs: &[X],
    b: f64,
    signs: &[Vec<f64>],
    method: EstimateMethod,
) -> Result<RademacherEstimate> {
    check_points(xs, b)?;
    if signs.is_empty() {
        return Err(validation("no sign vectors"));
    }
    if signs.iter().any(|s| s.len() != xs.len()) {
        return Err(validation("sign vector length differs from point count"));
    }
    let values: Vec<f64> = signs.iter().map(|s| linear_sup_for_signs(xs, b, s)).collect();
    Ok(RademacherEstimate::from_draws(&values, method))
}

/// All `2^m` sign vectors, in binary counting order (bit `i` set ⇒ `σᵢ = −1`).
pub fn all_sign_vectors(m: usize) -> Vec<Vec<f64>> {
    assert!(m < 31, "exhaustive enumeration limited to m < 31");
    (0u32..1 << m)
        .map(|mask| (0..m).map(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 }).collect())
        .collect()
}

/// Exact expectation by enumerating every sign vector; `std_error` is the
/// spread of the enumerated values, not a sampling error.
pub fn linear_rad_exhaustive<X: AsRef<[f64]>>(xs: &[X], b: f64) -> Result<RademacherEstimate> {
    if xs.len() > 20 {
        return Err(validation(format!("exhaustive enumeration needs m <= 20, got {}", xs.len())));
    }
    let mut est = linear_rad_from_signs(xs, b, &all_sign_vectors(xs.len()), EstimateMethod::Exhaustive)?;
    est.std_error = 0.0;
    est.n_draws = 0;
    Ok(est)
}

/// Domain-level complexity over `n` domains.
///
/// Each draw picks one representative sample uniformly from every domain and
/// one sign per domain, and evaluates `(B/n) ‖Σⱼ σⱼ xⱼ‖`. With `bias_feature`
/// a constant 1 is appended to each representative, matching models trained
/// with the constant feature.
pub fn domain_level_rad(
    env: &Environment,
    b: f64,
    n_draws: usize,
    seed: u64,
    bias_feature: bool,
) -> Result<RademacherEstimate> {
    HypothesisClassSpec::new(b)?;
    if n_draws == 0 {
        return Err(validation("n_draws must be at least 1"));
    }
    let n = env.n_domains();
    let values: Vec<f64> = (0..n_draws)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(derive_seed(seed, &format!("domain_rad/{t}")));
            let reps: Vec<Vec<f64>> = env
                .domains()
                .iter()
                .map(|dom| {
                    let i = rng.random_range(0..dom.len());
                    let mut x = dom.samples[i].features.clone();
                    if bias_feature {
                        x.push(1.0);
                    }
                    x
                })
                .collect();
            let signs: Vec<f64> = (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();
            linear_sup_for_signs(&reps, b, &signs)
        })
        .collect();
    Ok(RademacherEstimate::from_draws(&values, EstimateMethod::MonteCarlo))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralNorm {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub const SPECTRAL_TOL: f64 = 1e-10;
pub const SPECTRAL_MAX_ITER: usize = 10_000;

/// Largest singular value by power iteration on `MᵀM` from a fixed seeded
/// unit start vector. Stops when the relative change of the estimate falls
/// below `tol`; hitting `max_iter` first is reported via `converged = false`.
pub fn spectral_norm(m: &Matrix, tol: f64, max_iter: usize) -> Result<SpectralNorm> {
    if m.as_slice().iter().all(|&v| v == 0.0) {
        return Err(validation("spectral norm of a zero matrix is not estimated"));
    }
    let mut rng = rng_from_seed(derive_seed(0, "spectral/start"));
    let mut v: Vec<f64> = (0..m.cols()).map(|_| rng.random::<f64>() - 0.5).collect();
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);

    let mut sigma = norm(&m.matvec(&v));
    for it in 1..=max_iter {
        let w = m.t_matvec(&m.matvec(&v));
        let nw = norm(&w);
        if nw == 0.0 {
            // start vector in the null space; sigma stays at its last estimate
            return Ok(SpectralNorm { value: sigma, iterations: it, converged: true });
        }
        v = w.into_iter().map(|x| x / nw).collect();
        let next = norm(&m.matvec(&v));
        let change = (next - sigma).abs() / next.max(f64::MIN_POSITIVE);
        sigma = next;
        if change < tol {
            return Ok(SpectralNorm { value: sigma, iterations: it, converged: true });
        }
    }
    Ok(SpectralNorm {
        value: sigma,
        iterations: max_iter,
        converged: false,
    })
}

/// `‖V‖_F (‖U − U⁰‖_F + ‖U⁰‖₂)` with `U`, `U⁰` of shape `h×d` and `V` of
/// shape `K×h`. Architecture-dependent constant factors are omitted.
pub fn neyshabur_measure(v: &Matrix, u: &Matrix, u0: &Matrix) -> Result<f64> {
    if u.shape() != u0.shape() || v.cols() != u.rows() {
        return Err(crate::error::Error::Shape(format!(
            "inconsistent shapes V {:?}, U {:?}, U0 {:?}",
            v.shape(),
            u.shape(),
            u0.shape()
        )));
    }
    let v_f = v.frobenius_norm();
    if v_f == 0.0 {
        return Ok(0.0);
    }
    let dist = u.sub(u0)?.frobenius_norm();
    let spec = if u0.as_slice().iter().all(|&x| x == 0.0) {
        0.0
    } else {
        spectral_norm(u0, SPECTRAL_TOL, SPECTRAL_MAX_ITER)?.value
    };
    Ok(v_f * (dist + spec))
}

/// The capacity measure of a checkpointed 2-layer network.
pub fn neyshabur_complexity(ckpt: &crate::mlp::MlpCheckpoint) -> Result<f64> {
    neyshabur_measure(&ckpt.v, &ckpt.u, &ckpt.u0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{Domain, Sample};

    #[test]
    fn closed_form_examples() {
        let unit = [vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.6, 0.8]];
        assert!((linear_rad_closed_form(&unit, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((linear_rad_closed_form(&[vec![3.0, 4.0]], 2.0).unwrap() - 10.0).abs() < 1e-15);
        let empty: [Vec<f64>; 0] = [];
        assert!(linear_rad_closed_form(&empty, 1.0).is_err());
        assert!(linear_rad_closed_form(&unit, 0.0).is_err());
    }

    #[test]
    fn single_point_is_sign_free() {
        let est = linear_rad_monte_carlo(&[vec![3.0, 4.0]], 2.0, 50, 1).unwrap();
        assert_eq!(est.mean, 10.0);
        assert_eq!(est.std_error, 0.0);
        assert_eq!(est.method, EstimateMethod::MonteCarlo);
    }

    #[test]
    fn two_equal_points_exhaustive() {
        let est = linear_rad_exhaustive(&[vec![1.0, 0.0], vec![1.0, 0.0]], 1.0).unwrap();
        assert!((est.mean - 0.5).abs() < 1e-15);
        assert_eq!(est.n_draws, 0);
    }

    #[test]
    fn monte_carlo_is_seeded_and_near_exhaustive() {
        let xs: Vec<Vec<f64>> = (0..8).map(|i| vec![(i as f64).sin(), (i as f64 * 0.7).cos(), 0.3]).collect();
        let a = linear_rad_monte_carlo(&xs, 1.5, 4000, 3).unwrap();
        let b = linear_rad_monte_carlo(&xs, 1.5, 4000, 3).unwrap();
        assert_eq!(a, b);
        let exact = linear_rad_exhaustive(&xs, 1.5).unwrap().mean;
        assert!((a.mean - exact).abs() < 4.0 * a.std_error, "{} vs {exact}", a.mean);
    }

    #[test]
    fn spectral_norm_examples() {
        let id = spectral_norm(&Matrix::identity(3), SPECTRAL_TOL, SPECTRAL_MAX_ITER).unwrap();
        assert!((id.value - 1.0).abs() < 1e-12 && id.converged);
        let d = spectral_norm(&Matrix::diag(&[3.0, 4.0]), SPECTRAL_TOL, SPECTRAL_MAX_ITER).unwrap();
        assert!((d.value - 4.0).abs() < 1e-9);
        assert!(spectral_norm(&Matrix::zeros(2, 2), SPECTRAL_TOL, 10).is_err());
    }

    #[test]
    fn spectral_norm_flags_non_convergence() {
        // nearly equal top singular values converge slowly
        let m = Matrix::diag(&[1.0, 0.999_999, 0.5]);
        let r = spectral_norm(&m, 1e-15, 3).unwrap();
        assert!(!r.converged);
        assert_eq!(r.iterations, 3);
    }

    #[test]
    fn spectral_below_frobenius_and_equal_for_rank_one() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0, 0.0], vec![-1.0, 0.5, 3.0]]).unwrap();
        let s = spectral_norm(&m, SPECTRAL_TOL, SPECTRAL_MAX_ITER).unwrap().value;
        assert!(s <= m.frobenius_norm());
        let u = [1.0, -2.0, 0.5];
        let v = [3.0, 1.0];
        let r1 = Matrix::from_rows(&u.iter().map(|a| v.iter().map(|b| a * b).collect()).collect::<Vec<_>>()).unwrap();
        let s1 = spectral_norm(&r1, SPECTRAL_TOL, SPECTRAL_MAX_ITER).unwrap().value;
        assert!((s1 - r1.frobenius_norm()).abs() < 1e-9 * s1);
    }

    #[test]
    fn neyshabur_examples() {
        let u0 = Matrix::identity(2);
        let v = Matrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        // U - U0 = diag(3, 4)
        let u = Matrix::from_rows(&[vec![4.0, 0.0], vec![0.0, 5.0]]).unwrap();
        let c = neyshabur_measure(&v, &u, &u0).unwrap();
        assert!((c - 2f64.sqrt() * 6.0).abs() < 1e-9, "{c}");
        assert!((c - 8.4853).abs() < 1e-4);
        assert_eq!(neyshabur_measure(&Matrix::zeros(1, 2), &u, &u0).unwrap(), 0.0);
        let at_init = neyshabur_measure(&v, &u0, &u0).unwrap();
        let spec = spectral_norm(&u0, SPECTRAL_TOL, SPECTRAL_MAX_ITER).unwrap().value;
        assert_eq!(at_init, v.frobenius_norm() * spec);
        assert!(neyshabur_measure(&v, &Matrix::zeros(3, 2), &u0).is_err());
    }

    #[test]
    fn domain_rad_single_domain_is_norm() {
        let dom = Domain::new("a", vec![Sample::new(vec![3.0, 4.0], 0), Sample::new(vec![0.0, 2.0], 1)]).unwrap();
        let env = Environment::new(vec![dom], 2).unwrap();
        let est = domain_level_rad(&env, 1.0, 200, 5, false).unwrap();
        // each draw is B‖x‖ for x in {5, 2}
        assert!(est.mean > 2.0 && est.mean < 5.0);
        let one = Domain::new("a", vec![Sample::new(vec![3.0, 4.0], 0)]).unwrap();
        let env = Environment::new(vec![one], 1).unwrap();
        assert_eq!(domain_level_rad(&env, 2.0, 10, 5, false).unwrap().mean, 10.0);
    }
}
