//! Ridge-penalized GLM fitting by iteratively reweighted least squares.
//!
//! The objective is `deviance / 2 + (epsilon / 2) * ||gamma||^2`, which is the
//! negative log-likelihood (dispersion one) plus a ridge term on the slopes.
//! The intercept is never penalized. Each IRLS step is a weighted ridge
//! solve; when there are more usable columns than rows the step is solved in
//! dual form so the cost is driven by `n` rather than `m`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SparError};
use crate::family::{deviance_unchecked, Family, FamilySpec};

const MAX_HALVINGS: usize = 30;
/// Columns whose Cholesky pivot keeps less than this fraction of their
/// weighted sum of squares are treated as collinear when no penalty is used.
const COLLINEAR_PIVOT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlmOptions {
    /// Ridge penalty on the slopes.
    pub epsilon: f64,
    pub max_iter: usize,
    /// Relative change in the penalized objective that counts as converged.
    pub tol: f64,
}

impl Default for GlmOptions {
    fn default() -> Self {
        GlmOptions {
            epsilon: 0.0,
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

impl GlmOptions {
    pub fn with_epsilon(epsilon: f64) -> Self {
        GlmOptions {
            epsilon,
            ..Default::default()
        }
    }

    /// Default marginal-model penalty: none for gaussian, `1e-4 * n` otherwise.
    pub fn default_epsilon(family: Family, n: usize) -> f64 {
        match family {
            Family::Gaussian => 0.0,
            Family::Binomial | Family::Poisson => 1e-4 * n as f64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlmFit {
    pub intercept: f64,
    pub coefficients: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Unpenalized deviance at the returned coefficients.
    pub deviance: f64,
    /// Penalized objective after each accepted iteration.
    pub objective_path: Vec<f64>,
}

impl GlmFit {
    /// Linear predictor for the rows of `z`.
    pub fn linear_predictor(&self, z: &DMatrix<f64>) -> DVector<f64> {
        let mut eta = z * &self.coefficients;
        eta.add_scalar_mut(self.intercept);
        eta
    }
}

/// Fit `y ~ 1 + z` under `fam` with a ridge penalty on the slopes.
///
/// Returns [`SparError::Singular`] when the weighted least-squares system is
/// rank deficient and `epsilon` is zero. Non-convergence is not an error: the
/// best iterate is returned with `converged == false`.
pub fn fit_penalized_glm(
    z: &DMatrix<f64>,
    y: &[f64],
    fam: FamilySpec,
    opts: &GlmOptions,
) -> Result<GlmFit> {
    let n = z.nrows();
    if n == 0 {
        return Err(SparError::InsufficientData { needed: 1, got: 0 });
    }
    if y.len() != n {
        return Err(SparError::shape(format!(
            "design has {n} rows but response has length {}",
            y.len()
        )));
    }
    if !(opts.epsilon >= 0.0) || !opts.epsilon.is_finite() {
        return Err(SparError::config("ridge penalty must be finite and non-negative"));
    }
    let family = fam.family;
    family.validate_response(y)?;

    let usable = usable_columns(z);
    let m = z.ncols();
    let penalty = |g: &[f64]| 0.5 * opts.epsilon * g.iter().map(|v| v * v).sum::<f64>();

    let mut eta: Vec<f64> = y.iter().map(|&v| family.link(family.clamp_mu(family.mu_start(v)))).collect();
    let mut mu: Vec<f64> = eta.iter().map(|&e| family.linkinv(e)).collect();
    let mut weights = vec![1.0; n];
    let mut working = vec![0.0; n];

    let mut current: Option<(f64, Vec<f64>)> = None;
    let mut obj_old = f64::INFINITY;
    let mut path = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=opts.max_iter.max(1) {
        iterations = iter;
        for i in 0..n {
            let w = family.variance(mu[i]).max(f64::MIN_POSITIVE);
            weights[i] = w;
            working[i] = eta[i] + (y[i] - mu[i]) / w;
        }
        let (mut g0, g_usable) = weighted_ridge(z, &usable, &weights, &working, opts.epsilon)?;
        let mut gamma = scatter(m, &usable, &g_usable);

        let eval = |g0: f64, gamma: &[f64], eta: &mut Vec<f64>, mu: &mut Vec<f64>| {
            linear_predictor_into(z, g0, gamma, eta);
            for (m_i, &e) in mu.iter_mut().zip(eta.iter()) {
                *m_i = family.linkinv(e);
            }
            0.5 * deviance_unchecked(family, y, mu) + penalty(gamma)
        };
        let mut obj = eval(g0, &gamma, &mut eta, &mut mu);

        if let Some((prev0, prev)) = &current {
            let mut halvings = 0;
            while !(obj <= obj_old + 1e-12 * obj_old.abs().max(1.0)) && halvings < MAX_HALVINGS {
                g0 = 0.5 * (g0 + prev0);
                for (g, p) in gamma.iter_mut().zip(prev) {
                    *g = 0.5 * (*g + p);
                }
                obj = eval(g0, &gamma, &mut eta, &mut mu);
                halvings += 1;
            }
            if !(obj <= obj_old + 1e-12 * obj_old.abs().max(1.0)) {
                // no descent direction found; keep the previous iterate
                let (p0, p) = (*prev0, prev.clone());
                eval(p0, &p, &mut eta, &mut mu);
                log::debug!("IRLS step-halving exhausted at iteration {iter}");
                break;
            }
        }

        path.push(obj);
        let rel = (obj - obj_old).abs() / (obj.abs() + 0.1);
        obj_old = obj;
        current = Some((g0, gamma));
        if family == Family::Gaussian || rel < opts.tol {
            converged = obj.is_finite();
            break;
        }
    }

    let (intercept, gamma) = current.ok_or_else(|| SparError::Numerical("IRLS produced no iterate".into()))?;
    let deviance = deviance_unchecked(family, y, &mu);
    if converged && !deviance.is_finite() {
        converged = false;
    }
    Ok(GlmFit {
        intercept,
        coefficients: DVector::from_vec(gamma),
        converged,
        iterations,
        deviance,
        objective_path: path,
    })
}

/// Columns that are neither all-zero nor constant. The others carry no
/// information beyond the intercept and get a zero coefficient.
fn usable_columns(z: &DMatrix<f64>) -> Vec<usize> {
    (0..z.ncols())
        .filter(|&j| {
            let col = z.column(j);
            let first = col[0];
            col.iter().any(|&v| v != first)
        })
        .collect()
}

fn scatter(m: usize, idx: &[usize], vals: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m];
    for (&j, &v) in idx.iter().zip(vals) {
        out[j] = v;
    }
    out
}

fn linear_predictor_into(z: &DMatrix<f64>, g0: f64, gamma: &[f64], eta: &mut [f64]) {
    eta.iter_mut().for_each(|e| *e = g0);
    for (j, &g) in gamma.iter().enumerate() {
        if g != 0.0 {
            for (e, &v) in eta.iter_mut().zip(z.column(j).iter()) {
                *e += g * v;
            }
        }
    }
}

/// Solve `min sum_i w_i (t_i - g0 - z_i' g)^2 / 2 + eps/2 ||g||^2` over the
/// columns in `cols`. Returns the intercept and the slopes for `cols`.
pub(crate) fn weighted_ridge(
    z: &DMatrix<f64>,
    cols: &[usize],
    w: &[f64],
    t: &[f64],
    eps: f64,
) -> Result<(f64, Vec<f64>)> {
    let n = z.nrows();
    let sw: f64 = w.iter().sum();
    let tbar = w.iter().zip(t).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ma = cols.len();
    if ma == 0 {
        return Ok((tbar, Vec::new()));
    }

    let sqrt_w: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let mut xbar = Vec::with_capacity(ma);
    let mut a = DMatrix::<f64>::zeros(n, ma);
    for (c, &j) in cols.iter().enumerate() {
        let col = z.column(j);
        let mean = col.iter().zip(w).map(|(v, wi)| v * wi).sum::<f64>() / sw;
        xbar.push(mean);
        for i in 0..n {
            a[(i, c)] = sqrt_w[i] * (col[i] - mean);
        }
    }
    let b = DVector::from_iterator(n, (0..n).map(|i| sqrt_w[i] * (t[i] - tbar)));

    let gamma: DVector<f64> = if ma <= n {
        let mut gram = a.tr_mul(&a);
        let diag: Vec<f64> = (0..ma).map(|j| gram[(j, j)]).collect();
        for j in 0..ma {
            gram[(j, j)] += eps;
        }
        let chol = gram.cholesky().ok_or(SparError::Singular)?;
        if eps == 0.0 {
            let l = chol.l_dirty();
            for j in 0..ma {
                let piv = l[(j, j)] * l[(j, j)];
                if !(piv > COLLINEAR_PIVOT * diag[j]) {
                    return Err(SparError::Singular);
                }
            }
        }
        chol.solve(&a.tr_mul(&b))
    } else {
        if eps == 0.0 {
            return Err(SparError::Singular);
        }
        let mut kernel = &a * a.transpose();
        for i in 0..n {
            kernel[(i, i)] += eps;
        }
        let chol = kernel.cholesky().ok_or(SparError::Singular)?;
        let alpha = chol.solve(&b);
        a.tr_mul(&alpha)
    };

    if gamma.iter().any(|v| !v.is_finite()) {
        return Err(SparError::Singular);
    }
    let g0 = tbar - xbar.iter().zip(gamma.iter()).map(|(x, g)| x * g).sum::<f64>();
    Ok((g0, gamma.iter().copied().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, m, |_, _| rng.sample(StandardNormal))
    }

    /// Penalized normal equations with an explicit unpenalized intercept
    /// column, solved by full matrix inversion.
    fn ridge_oracle(z: &DMatrix<f64>, y: &[f64], eps: f64) -> (f64, Vec<f64>) {
        let n = z.nrows();
        let m = z.ncols();
        let x = DMatrix::from_fn(n, m + 1, |i, j| if j == 0 { 1.0 } else { z[(i, j - 1)] });
        let mut lhs = x.transpose() * &x;
        for j in 1..=m {
            lhs[(j, j)] += eps;
        }
        let rhs = x.transpose() * DVector::from_column_slice(y);
        let sol = lhs.try_inverse().unwrap() * rhs;
        (sol[0], sol.iter().skip(1).copied().collect())
    }

    #[test]
    fn symmetric_exact_fit() {
        let z = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let fit = fit_penalized_glm(&z, &[1.0, -1.0], FamilySpec::gaussian(), &GlmOptions::default()).unwrap();
        assert_abs_diff_eq!(fit.intercept, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(fit.coefficients[0], 1.0, epsilon = 1e-14);
        assert!(fit.converged);
    }

    #[test]
    fn constant_response_gives_zero_slopes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = random_matrix(&mut rng, 10, 3);
        let fit = fit_penalized_glm(&z, &[2.5; 10], FamilySpec::gaussian(), &GlmOptions::default()).unwrap();
        assert_abs_diff_eq!(fit.intercept, 2.5, epsilon = 1e-12);
        for g in fit.coefficients.iter() {
            assert_abs_diff_eq!(*g, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn gaussian_ridge_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let z = random_matrix(&mut rng, 20, 3);
        let y: Vec<f64> = (0..20).map(|_| rng.sample::<f64, _>(StandardNormal) * 2.0 + 1.0).collect();
        let fit = fit_penalized_glm(&z, &y, FamilySpec::gaussian(), &GlmOptions::with_epsilon(2.0)).unwrap();
        let (b0, b) = ridge_oracle(&z, &y, 2.0);
        assert_abs_diff_eq!(fit.intercept, b0, epsilon = 1e-10);
        for (g, o) in fit.coefficients.iter().zip(&b) {
            assert_abs_diff_eq!(*g, *o, epsilon = 1e-10);
        }
    }

    #[test]
    fn dual_form_matches_primal_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let z = random_matrix(&mut rng, 8, 15);
        let y: Vec<f64> = (0..8).map(|_| rng.sample(StandardNormal)).collect();
        let fit = fit_penalized_glm(&z, &y, FamilySpec::gaussian(), &GlmOptions::with_epsilon(0.7)).unwrap();
        let (b0, b) = ridge_oracle(&z, &y, 0.7);
        assert_abs_diff_eq!(fit.intercept, b0, epsilon = 1e-9);
        for (g, o) in fit.coefficients.iter().zip(&b) {
            assert_abs_diff_eq!(*g, *o, epsilon = 1e-9);
        }
    }

    #[test]
    fn unpenalized_wide_design_is_singular() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let z = random_matrix(&mut rng, 5, 9);
        let y: Vec<f64> = (0..5).map(|i| i as f64).collect();
        let err = fit_penalized_glm(&z, &y, FamilySpec::gaussian(), &GlmOptions::default()).unwrap_err();
        assert!(matches!(err, SparError::Singular));
    }

    #[test]
    fn duplicated_column_without_penalty_is_singular() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mut z = random_matrix(&mut rng, 12, 3);
        let c0 = z.column(0).clone_owned();
        z.set_column(2, &(c0 * 2.0));
        let y: Vec<f64> = (0..12).map(|_| rng.sample(StandardNormal)).collect();
        let err = fit_penalized_glm(&z, &y, FamilySpec::gaussian(), &GlmOptions::default()).unwrap_err();
        assert!(matches!(err, SparError::Singular));
        assert!(fit_penalized_glm(&z, &y, FamilySpec::gaussian(), &GlmOptions::with_epsilon(0.1)).is_ok());
    }

    #[test]
    fn zero_columns_get_zero_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let mut z = random_matrix(&mut rng, 15, 4);
        z.column_mut(1).fill(0.0);
        let y: Vec<f64> = (0..15).map(|_| rng.sample(StandardNormal)).collect();
        let fit = fit_penalized_glm(&z, &y, FamilySpec::gaussian(), &GlmOptions::default()).unwrap();
        assert_eq!(fit.coefficients[1], 0.0);
        let reduced = z.clone().remove_column(1);
        let (b0, b) = ridge_oracle(&reduced, &y, 0.0);
        assert_abs_diff_eq!(fit.intercept, b0, epsilon = 1e-10);
        assert_abs_diff_eq!(fit.coefficients[0], b[0], epsilon = 1e-10);
        assert_abs_diff_eq!(fit.coefficients[3], b[2], epsilon = 1e-10);
    }

    #[test]
    fn intercept_only_fit() {
        let z = DMatrix::<f64>::zeros(4, 0);
        let fit = fit_penalized_glm(&z, &[0.0, 1.0, 1.0, 1.0], FamilySpec::binomial(), &GlmOptions::default()).unwrap();
        assert!(fit.converged);
        assert_abs_diff_eq!(fit.intercept, 3f64.ln(), epsilon = 1e-8);
        let fit = fit_penalized_glm(&DMatrix::<f64>::zeros(3, 0), &[1.0, 2.0, 6.0], FamilySpec::poisson(), &GlmOptions::default()).unwrap();
        assert_abs_diff_eq!(fit.intercept, 3f64.ln(), epsilon = 1e-8);
    }

    #[test]
    fn separated_binomial_with_penalty_is_finite() {
        let z = DMatrix::from_row_slice(6, 1, &[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]);
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let fit = fit_penalized_glm(&z, &y, FamilySpec::binomial(), &GlmOptions::with_epsilon(0.1)).unwrap();
        assert!(fit.converged);
        assert!(fit.coefficients.norm() < 1e6);
        assert!(fit.coefficients[0] > 0.0);
    }

    #[test]
    fn binomial_gradient_vanishes_at_optimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let z = random_matrix(&mut rng, 60, 3);
        let y: Vec<f64> = (0..60)
            .map(|i| {
                let eta = 0.5 + z[(i, 0)] - 0.7 * z[(i, 2)];
                let p = 1.0 / (1.0 + (-eta).exp());
                if rng.random::<f64>() < p { 1.0 } else { 0.0 }
            })
            .collect();
        let eps = 0.3;
        let fit = fit_penalized_glm(&z, &y, FamilySpec::binomial(), &GlmOptions::with_epsilon(eps)).unwrap();
        assert!(fit.converged);
        let eta = fit.linear_predictor(&z);
        let resid: Vec<f64> = (0..60).map(|i| y[i] - 1.0 / (1.0 + (-eta[i]).exp())).collect();
        assert_abs_diff_eq!(resid.iter().sum::<f64>(), 0.0, epsilon = 1e-6);
        for j in 0..3 {
            let grad: f64 = (0..60).map(|i| resid[i] * z[(i, j)]).sum::<f64>() - eps * fit.coefficients[j];
            assert_abs_diff_eq!(grad, 0.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn poisson_objective_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let z = random_matrix(&mut rng, 40, 4);
        let y: Vec<f64> = (0..40)
            .map(|i| (0.3 + 0.8 * z[(i, 1)]).exp().round())
            .collect();
        let fit = fit_penalized_glm(&z, &y, FamilySpec::poisson(), &GlmOptions::default()).unwrap();
        assert!(fit.converged);
        for w in fit.objective_path.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0));
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let z = DMatrix::<f64>::zeros(3, 1);
        assert!(matches!(
            fit_penalized_glm(&z, &[1.0, 2.0], FamilySpec::gaussian(), &GlmOptions::default()),
            Err(SparError::Shape(_))
        ));
        assert!(fit_penalized_glm(&z, &[0.0, 2.0, 1.0], FamilySpec::binomial(), &GlmOptions::default()).is_err());
        assert!(fit_penalized_glm(&z, &[0.0, 1.0, 1.0], FamilySpec::gaussian(), &GlmOptions::with_epsilon(-1.0)).is_err());
    }
}
