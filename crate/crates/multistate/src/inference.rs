//! Maximum-likelihood machinery shared by both frameworks: a quasi-Newton
//! maximiser with numerically differenced gradients, observed-information
//! covariance with an eigenvalue-clipping repair, AIC, and multivariate
//! normal parameter draws for interval estimation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CovariateValue, Dataset};
use crate::rng::stream;

/// Relative finite-difference steps: gradients use the smaller step, Hessians
/// the larger one (second differences amplify rounding error).
const GRAD_STEP: f64 = 1e-6;
const HESS_STEP: f64 = 1e-4;

/// Eigenvalue floor applied when the observed information is not positive
/// definite (cure fractions near the boundary produce near-singular
/// information).
const EIGEN_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct OptimControls {
    pub max_iter: usize,
    /// Gradient tolerance, scaled by `max(1, |loglik|)`.
    pub grad_tol: f64,
    /// Minimum relative step before the line search gives up.
    pub step_tol: f64,
}

impl Default for OptimControls {
    fn default() -> Self {
        OptimControls { max_iter: 500, grad_tol: 1e-9, step_tol: 1e-12 }
    }
}

#[derive(Debug, Clone)]
pub struct OptimResult {
    /// Argmax on the transformed (unconstrained) scale.
    pub argmax: Vec<f64>,
    pub loglik: f64,
    /// Covariance of the transformed-scale estimates (inverse observed
    /// information, repaired if necessary).
    pub covariance: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

/// Treat evaluation failures and non-finite values as minus infinity so the
/// line search backtracks out of bad regions.
fn eval<F: Fn(&[f64]) -> Result<f64>>(f: &F, x: &[f64]) -> f64 {
    match f(x) {
        Ok(v) if v.is_finite() => v,
        _ => f64::NEG_INFINITY,
    }
}

/// Central-difference gradient.
pub fn fd_gradient<F: Fn(&[f64]) -> Result<f64>>(f: &F, x: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let h = GRAD_STEP * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let up = eval(f, &xp);
        xp[i] = x[i] - h;
        let dn = eval(f, &xp);
        xp[i] = x[i];
        g[i] = (up - dn) / (2.0 * h);
    }
    g
}

/// Central-difference Hessian (symmetric by construction).
pub fn fd_hessian<F: Fn(&[f64]) -> Result<f64>>(f: &F, x: &[f64]) -> DMatrix<f64> {
    let k = x.len();
    let f0 = eval(f, x);
    let h: Vec<f64> = x.iter().map(|&xi| HESS_STEP * xi.abs().max(1.0)).collect();
    let mut hess = DMatrix::zeros(k, k);
    let mut xp = x.to_vec();
    for i in 0..k {
        xp[i] = x[i] + h[i];
        let up = eval(f, &xp);
        xp[i] = x[i] - h[i];
        let dn = eval(f, &xp);
        xp[i] = x[i];
        hess[(i, i)] = (up - 2.0 * f0 + dn) / (h[i] * h[i]);
    }
    for i in 0..k {
        for j in (i + 1)..k {
            xp[i] = x[i] + h[i];
            xp[j] = x[j] + h[j];
            let pp = eval(f, &xp);
            xp[j] = x[j] - h[j];
            let pm = eval(f, &xp);
            xp[i] = x[i] - h[i];
            let mm = eval(f, &xp);
            xp[j] = x[j] + h[j];
            let mp = eval(f, &xp);
            xp[i] = x[i];
            xp[j] = x[j];
            let v = (pp - pm - mp + mm) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Maximise a log-likelihood by BFGS with central-difference gradients and a
/// backtracking Armijo line search; the covariance is the inverse of the
/// finite-difference observed information at the optimum.
pub fn maximize<F: Fn(&[f64]) -> Result<f64>>(
    f: &F,
    initial: &[f64],
    controls: &OptimControls,
) -> Result<OptimResult> {
    maximize_with_grad(f, |x| fd_gradient(f, x), initial, controls)
}

/// Same as [`maximize`] but with a caller-supplied gradient.
pub fn maximize_with_grad<F, G>(
    f: &F,
    grad: G,
    initial: &[f64],
    controls: &OptimControls,
) -> Result<OptimResult>
where
    F: Fn(&[f64]) -> Result<f64>,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let k = initial.len();
    let mut x = DVector::from_column_slice(initial);
    let mut fx = eval(f, x.as_slice());
    if !fx.is_finite() {
        return Err(Error::Numerical(format!(
            "log-likelihood not finite at the initial point: {initial:?}"
        )));
    }
    let mut g = DVector::from_vec(grad(x.as_slice()));
    let mut hinv = DMatrix::<f64>::identity(k, k);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < controls.max_iter {
        iterations += 1;
        let gnorm = g.amax();
        if gnorm <= controls.grad_tol * fx.abs().max(1.0) {
            converged = true;
            break;
        }

        // ascent direction; reset to steepest ascent if curvature is broken
        let mut dir = &hinv * &g;
        if dir.dot(&g) <= 0.0 {
            hinv = DMatrix::identity(k, k);
            dir = g.clone();
        }

        // backtracking Armijo line search (on the maximisation problem)
        let slope = g.dot(&dir);
        let mut step = 1.0;
        let mut accepted = false;
        let mut x_new = x.clone();
        let mut f_new = fx;
        for _ in 0..60 {
            x_new = &x + &dir * step;
            f_new = eval(f, x_new.as_slice());
            if f_new.is_finite() && f_new >= fx + 1e-4 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
            if step * dir.amax() < controls.step_tol * x.amax().max(1.0) {
                break;
            }
        }
        if !accepted {
            // no progress possible along the ascent direction
            if gnorm <= 1e3 * controls.grad_tol * fx.abs().max(1.0) {
                converged = true;
                break;
            }
            return Err(Error::NonConvergence { iterations, grad_norm: gnorm });
        }

        let g_new = DVector::from_vec(grad(x_new.as_slice()));
        let s = &x_new - &x;
        let y = &g - &g_new; // change in the gradient of -loglik
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            // BFGS update of the inverse Hessian of -loglik
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            for i in 0..k {
                for j in 0..k {
                    hinv[(i, j)] += (sy + yhy) * rho * rho * s[i] * s[j]
                        - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }

    if !converged {
        let gnorm = g.amax();
        if gnorm > 1e3 * controls.grad_tol * fx.abs().max(1.0) {
            return Err(Error::NonConvergence { iterations, grad_norm: gnorm });
        }
    }

    let mut warnings = Vec::new();
    let info = -fd_hessian(f, x.as_slice());
    let covariance = covariance_from_information(&info, &mut warnings)?;

    Ok(OptimResult {
        argmax: x.as_slice().to_vec(),
        loglik: fx,
        covariance,
        converged: true,
        iterations,
        warnings,
    })
}

/// Invert the observed information. A positive-definite input passes through
/// untouched (Cholesky route); otherwise eigenvalues are clipped from below
/// and a warning is recorded.
pub fn covariance_from_information(
    info: &DMatrix<f64>,
    warnings: &mut Vec<String>,
) -> Result<DMatrix<f64>> {
    let k = info.nrows();
    let sym = (info + info.transpose()) * 0.5;
    if let Some(chol) = sym.clone().cholesky() {
        return Ok(chol.inverse());
    }
    warnings.push(format!(
        "observed information not positive definite; eigenvalues clipped at {EIGEN_FLOOR}"
    ));
    let eig = sym.symmetric_eigen();
    let mut inv = DMatrix::zeros(k, k);
    for (idx, &lambda) in eig.eigenvalues.iter().enumerate() {
        let l = lambda.max(EIGEN_FLOOR);
        let v = eig.eigenvectors.column(idx);
        inv += (v * v.transpose()) / l;
    }
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::BadCovariance);
    }
    Ok(inv)
}

/// Akaike information criterion.
pub fn aic(loglik: f64, k: usize) -> f64 {
    -2.0 * loglik + 2.0 * k as f64
}

/// A matrix of parameter draws on the transformed scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamDraws {
    /// B rows, one parameter vector per row.
    pub draws: Vec<Vec<f64>>,
    pub seed: u64,
}

/// Draw `b` parameter vectors from the asymptotic normal distribution of the
/// estimates: N(argmax, covariance). Deterministic given `seed`.
pub fn draw_params(
    argmax: &[f64],
    covariance: &DMatrix<f64>,
    b: usize,
    seed: u64,
) -> Result<ParamDraws> {
    if b == 0 {
        return Err(Error::Config("number of parameter draws B must be >= 1".into()));
    }
    let k = argmax.len();
    let factor = cov_factor(covariance)?;
    let mut rng = stream(seed, "draws", 0);
    let mut draws = Vec::with_capacity(b);
    for _ in 0..b {
        let z = DVector::from_iterator(
            k,
            (0..k).map(|_| {
                let u: f64 = rng.sample(rand_distr::StandardNormal);
                u
            }),
        );
        let shift = &factor * z;
        let row: Vec<f64> = (0..k).map(|i| argmax[i] + shift[i]).collect();
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::BadCovariance);
        }
        draws.push(row);
    }
    Ok(ParamDraws { draws, seed })
}

/// Cholesky factor of the covariance, falling back to an eigenvalue square
/// root for singular-but-PSD inputs.
fn cov_factor(covariance: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = covariance.nrows();
    let sym = (covariance + covariance.transpose()) * 0.5;
    if sym.iter().all(|&v| v == 0.0) {
        return Ok(DMatrix::zeros(k, k));
    }
    if let Some(chol) = sym.clone().cholesky() {
        return Ok(chol.l());
    }
    let eig = sym.symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| l < -1e-8 * eig.eigenvalues.amax()) {
        return Err(Error::BadCovariance);
    }
    let mut factor = DMatrix::zeros(k, k);
    for (idx, &lambda) in eig.eigenvalues.iter().enumerate() {
        let l = lambda.max(0.0).sqrt();
        let v = eig.eigenvectors.column(idx);
        for i in 0..k {
            factor[(i, idx)] = v[i] * l;
        }
    }
    Ok(factor)
}

// ---------------------------------------------------------------------------
// Subgroup log-likelihood table
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubgroupRow {
    /// Grouping covariate -> level for this group.
    pub group: std::collections::BTreeMap<String, String>,
    pub n: usize,
    pub loglik: f64,
}

/// Sum per-observation log-likelihood contributions within each group defined
/// by the `grouping` covariates. The groups partition the dataset, so the
/// rows sum to the total log-likelihood.
pub fn subgroup_loglik(
    dataset: &Dataset,
    grouping: &[String],
    contributions: &[f64],
) -> Result<Vec<SubgroupRow>> {
    if contributions.len() != dataset.len() {
        return Err(Error::Config("one contribution per observation required".into()));
    }
    for g in grouping {
        if !dataset.design.sources.iter().any(|s| s == g) {
            return Err(Error::Config(format!("grouping covariate `{g}` not in dataset")));
        }
    }
    let mut groups: std::collections::BTreeMap<Vec<String>, (usize, f64)> =
        std::collections::BTreeMap::new();
    for (obs, &ll) in dataset.observations.iter().zip(contributions) {
        let key: Vec<String> = grouping
            .iter()
            .map(|g| {
                obs.covariates
                    .get(g)
                    .map(CovariateValue::as_str)
                    .unwrap_or_else(|| "<missing>".to_string())
            })
            .collect();
        let entry = groups.entry(key).or_insert((0, 0.0));
        entry.0 += 1;
        entry.1 += ll;
    }
    Ok(groups
        .into_iter()
        .map(|(key, (n, loglik))| SubgroupRow {
            group: grouping.iter().cloned().zip(key).collect(),
            n,
            loglik,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quadratic_maximum() {
        let f = |x: &[f64]| Ok(-(x[0] - 3.0) * (x[0] - 3.0));
        let r = maximize(&f, &[0.0], &OptimControls::default()).unwrap();
        assert_relative_eq!(r.argmax[0], 3.0, epsilon = 1e-6);
        assert!(r.converged);
        // curvature -2 => variance 1/2
        assert_relative_eq!(r.covariance[(0, 0)], 0.5, max_relative = 1e-3);
    }

    #[test]
    fn exponential_rate_mle_and_variance() {
        // n events with total exposure T: rate MLE = n/T, Var(rate) = rate^2/n.
        let n = 400.0;
        let total = 180.0;
        let f = move |x: &[f64]| {
            let rate = x[0];
            if rate <= 0.0 {
                return Err(Error::Domain("rate must be positive".into()));
            }
            Ok(n * rate.ln() - rate * total)
        };
        let r = maximize(&f, &[1.0], &OptimControls::default()).unwrap();
        let expected = n / total;
        assert_relative_eq!(r.argmax[0], expected, max_relative = 1e-6);
        let var = r.covariance[(0, 0)];
        assert_relative_eq!(var, expected * expected / n, max_relative = 0.05);
    }

    #[test]
    fn multivariate_banana_still_converges() {
        // Rosenbrock flipped to a maximisation problem.
        let f =
            |x: &[f64]| Ok(-((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)));
        let r = maximize(
            &f,
            &[-1.2, 1.0],
            &OptimControls { max_iter: 2000, ..Default::default() },
        )
        .unwrap();
        assert_relative_eq!(r.argmax[0], 1.0, epsilon = 1e-4);
        assert_relative_eq!(r.argmax[1], 1.0, epsilon = 1e-4);
    }

    #[test]
    fn aic_paper_values() {
        assert_eq!(aic(-22850.5, 58), 45817.0);
        assert_eq!(aic(-23379.0, 52), 46862.0);
        assert_eq!(aic(0.0, 0), 0.0);
        // exactly linear in k
        assert_eq!(aic(-100.0, 8) - aic(-100.0, 7), 2.0);
    }

    #[test]
    fn draws_reproduce_mean_and_variance() {
        let cov = DMatrix::from_row_slice(1, 1, &[4.0]);
        let d = draw_params(&[10.0], &cov, 100_000, 42).unwrap();
        let mean: f64 = d.draws.iter().map(|r| r[0]).sum::<f64>() / d.draws.len() as f64;
        let var: f64 = d.draws.iter().map(|r| (r[0] - mean) * (r[0] - mean)).sum::<f64>()
            / d.draws.len() as f64;
        // mean within 3 standard errors, variance within 3%
        assert!((mean - 10.0).abs() < 3.0 * 2.0 / (100_000.0_f64).sqrt());
        assert!((var - 4.0).abs() / 4.0 < 0.03, "var={var}");
    }

    #[test]
    fn draws_zero_covariance_and_determinism() {
        let cov = DMatrix::zeros(2, 2);
        let d = draw_params(&[1.0, -2.0], &cov, 5, 7).unwrap();
        for row in &d.draws {
            assert_eq!(row, &vec![1.0, -2.0]);
        }
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
        let a = draw_params(&[0.0, 0.0], &cov, 50, 9).unwrap();
        let b = draw_params(&[0.0, 0.0], &cov, 50, 9).unwrap();
        assert_eq!(a.draws, b.draws);
        let c = draw_params(&[0.0, 0.0], &cov, 50, 10).unwrap();
        assert_ne!(a.draws, c.draws);
    }

    #[test]
    fn covariance_repair_leaves_pd_input_alone() {
        let info = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let mut warnings = Vec::new();
        let cov = covariance_from_information(&info, &mut warnings).unwrap();
        assert!(warnings.is_empty());
        let identity = &cov * &info;
        for i in 0..2 {
            for j in 0..2 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(identity[(i, j)], expected, epsilon = 1e-12);
            }
        }

        // indefinite input gets repaired with a warning
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -0.5]);
        let cov = covariance_from_information(&bad, &mut warnings).unwrap();
        assert_eq!(warnings.len(), 1);
        assert!(cov[(0, 0)] > 0.0 && cov[(1, 1)] > 0.0);
    }

    #[test]
    fn subgroup_partition_additivity() {
        use crate::model::*;
        let mut observations = Vec::new();
        for i in 0..10 {
            let mut cov = std::collections::BTreeMap::new();
            cov.insert(
                "gender".to_string(),
                CovariateValue::Categorical(if i % 2 == 0 { "F" } else { "M" }.into()),
            );
            observations.push(Observation {
                subject: format!("s{i}"),
                from: 0,
                to: Some(2),
                time: 1.0 + i as f64,
                status: Status::Transition,
                covariates: cov,
            });
        }
        let m = ModelStructure::hospital();
        let d = load_dataset(observations, &m, ZeroTimePolicy::default()).unwrap();
        let contributions: Vec<f64> = (0..10).map(|i| -(i as f64) - 0.5).collect();
        let rows = subgroup_loglik(&d, &["gender".to_string()], &contributions).unwrap();
        assert_eq!(rows.len(), 2);
        let total: f64 = rows.iter().map(|r| r.loglik).sum();
        assert_relative_eq!(total, contributions.iter().sum::<f64>(), epsilon = 1e-10);
        assert_eq!(rows.iter().map(|r| r.n).sum::<usize>(), 10);

        // single group = whole dataset
        let rows = subgroup_loglik(&d, &[], &contributions).unwrap();
        assert_eq!(rows.len(), 1);
        assert_relative_eq!(rows[0].loglik, contributions.iter().sum::<f64>(), epsilon = 1e-10);

        assert!(subgroup_loglik(&d, &["age".to_string()], &contributions).is_err());
    }
}
