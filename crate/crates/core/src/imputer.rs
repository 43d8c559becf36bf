//! Ridge-regularized conditional-mean imputers and the Gaussian oracle.
//!
//! For a feature `j` two regressions are fitted on the full sample:
//! `nu_j` of `X^j` on `X^{-j}` and `rho_j` of `X^j` on `(X^{-j}, y)`. Both
//! minimize `(1/n) sum (theta' chi_i - z_i)^2 + lambda ||theta||^2` on
//! column-centered data, which leaves the intercept unpenalized.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::TabularDataset;
use crate::error::{Error, Result};

pub const DEFAULT_LAMBDA: f64 = 0.1;

/// Log-spaced grid from 1e-4 to 1e1, three points per decade.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..=15)
        .map(|k| 10f64.powf(-4.0 + k as f64 / 3.0))
        .collect()
}

/// A fitted ridge regression `z ~ intercept + coefficients . (x - means)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeRegression {
    pub coefficients: DVector<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub training_column_means: DVector<f64>,
}

impl RidgeRegression {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        debug_assert_eq!(row.len(), self.coefficients.len());
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(self.training_column_means.iter())
                .zip(row)
                .map(|((c, m), x)| c * (x - m))
                .sum::<f64>()
    }

    pub fn predict(&self, regressors: &DMatrix<f64>) -> Result<Vec<f64>> {
        if regressors.ncols() != self.coefficients.len() {
            return Err(Error::DimensionMismatch(format!(
                "fit has {} regressors, got {} columns",
                self.coefficients.len(),
                regressors.ncols()
            )));
        }
        let mut out = vec![self.intercept; regressors.nrows()];
        for (k, col) in regressors.column_iter().enumerate() {
            let c = self.coefficients[k];
            let m = self.training_column_means[k];
            for (o, x) in out.iter_mut().zip(col.iter()) {
                *o += c * (x - m);
            }
        }
        Ok(out)
    }
}

struct Centered {
    xc: DMatrix<f64>,
    zc: DVector<f64>,
    means: DVector<f64>,
    z_mean: f64,
}

fn center(targets: &[f64], regressors: &DMatrix<f64>) -> Result<Centered> {
    let n = regressors.nrows();
    if targets.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} targets for {} regressor rows",
            targets.len(),
            n
        )));
    }
    if n == 0 {
        return Err(Error::TooFewRows(0));
    }
    let nf = n as f64;
    let means = DVector::from_iterator(
        regressors.ncols(),
        regressors.column_iter().map(|c| c.sum() / nf),
    );
    let mut xc = regressors.clone();
    for (k, mut col) in xc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[k]);
    }
    let z_mean = targets.iter().sum::<f64>() / nf;
    let zc = DVector::from_iterator(n, targets.iter().map(|z| z - z_mean));
    Ok(Centered {
        xc,
        zc,
        means,
        z_mean,
    })
}

/// Solves `(X_c'X_c/n + lambda I) theta = X_c'z_c/n`.
///
/// The system is factored with Cholesky. At `lambda = 0` a rank-deficient
/// Gram matrix falls back to the minimum-norm pseudo-inverse solution and
/// logs a warning.
pub fn fit_ridge(
    targets: &[f64],
    regressors: &DMatrix<f64>,
    lambda: f64,
) -> Result<RidgeRegression> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    let Centered {
        xc,
        zc,
        means,
        z_mean,
    } = center(targets, regressors)?;
    let k = xc.ncols();
    if k == 0 {
        return Ok(RidgeRegression {
            coefficients: DVector::zeros(0),
            intercept: z_mean,
            lambda,
            training_column_means: means,
        });
    }
    let nf = xc.nrows() as f64;
    let mut gram = xc.tr_mul(&xc) / nf;
    for i in 0..k {
        gram[(i, i)] += lambda;
    }
    let rhs = xc.tr_mul(&zc) / nf;
    if gram.iter().any(|v| !v.is_finite()) || rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("non-finite normal equations".into()));
    }

    let factor = Cholesky::new(gram.clone()).filter(|c| lambda > 0.0 || well_conditioned(c));
    let coefficients = match factor {
        Some(chol) => {
            let mut theta = chol.solve(&rhs);
            // One step of iterative refinement.
            let residual = &rhs - &gram * &theta;
            theta += chol.solve(&residual);
            theta
        }
        None if lambda > 0.0 => {
            return Err(Error::Singular(format!(
                "ridge system not positive definite at lambda = {lambda}"
            )));
        }
        None => {
            log::warn!("Gram matrix is rank-deficient at lambda = 0; using the pseudo-inverse");
            let eps = 1e-12 * gram.amax().max(1.0);
            gram.clone()
                .svd(true, true)
                .solve(&rhs, eps)
                .map_err(|e| Error::Singular(e.to_string()))?
        }
    };
    if coefficients.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("solution is not finite".into()));
    }
    Ok(RidgeRegression {
        coefficients,
        intercept: z_mean,
        lambda,
        training_column_means: means,
    })
}

fn well_conditioned(chol: &Cholesky<f64, Dyn>) -> bool {
    let l = chol.l_dirty();
    let diag: Vec<f64> = (0..l.nrows()).map(|i| l[(i, i)]).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    // Squared ratio of Cholesky pivots bounds the condition number from below.
    min > 0.0 && (max / min).powi(2) < 1e14
}

/// Generalized cross-validation score for each `lambda` in `grid`; returns
/// the minimizing lambda and all scores.
pub fn select_lambda_gcv(
    targets: &[f64],
    regressors: &DMatrix<f64>,
    grid: &[f64],
) -> Result<(f64, Vec<f64>)> {
    if grid.is_empty() || grid.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::InvalidParameter(
            "GCV grid must hold positive lambdas".into(),
        ));
    }
    let Centered { xc, zc, .. } = center(targets, regressors)?;
    let n = xc.nrows() as f64;
    let eig = SymmetricEigen::new(xc.tr_mul(&xc) / n);
    let projected = eig.eigenvectors.tr_mul(&(xc.tr_mul(&zc) / n));
    let mut scores = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let shrunk = DVector::from_iterator(
            projected.len(),
            projected
                .iter()
                .zip(eig.eigenvalues.iter())
                .map(|(b, d)| b / (d.max(0.0) + lambda)),
        );
        let theta = &eig.eigenvectors * shrunk;
        let rss = (&zc - &xc * theta).norm_squared();
        let dof: f64 = eig
            .eigenvalues
            .iter()
            .map(|d| d.max(0.0) / (d.max(0.0) + lambda))
            .sum::<f64>()
            + 1.0;
        let denom = (1.0 - dof / n).max(1e-12);
        scores.push(rss / n / (denom * denom));
    }
    let best = scores
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| grid[i])
        .expect("non-empty grid");
    Ok((best, scores))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressorSpec {
    /// Regressors are `X^{-j}`.
    WithoutResponse,
    /// Regressors are `(X^{-j}, y)`, response last.
    WithResponse,
}

/// A ridge fit of feature `feature_index` on the other columns, optionally
/// augmented with the response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeImputer {
    pub feature_index: usize,
    pub regressor_spec: RegressorSpec,
    pub fit: RidgeRegression,
}

impl RidgeImputer {
    pub fn regressors(&self, data: &TabularDataset) -> DMatrix<f64> {
        match self.regressor_spec {
            RegressorSpec::WithoutResponse => data.without_column(self.feature_index),
            RegressorSpec::WithResponse => data.without_column_with_response(self.feature_index),
        }
    }

    /// Imputed value of the feature for every row of `data`.
    pub fn impute(&self, data: &TabularDataset) -> Result<Vec<f64>> {
        self.fit.predict(&self.regressors(data))
    }

    pub fn coefficients(&self) -> &DVector<f64> {
        &self.fit.coefficients
    }
}

/// Both imputers of one feature and their in-sample residual pools.
#[derive(Debug, Clone)]
pub struct ImputerPair {
    pub feature_index: usize,
    pub nu: RidgeImputer,
    pub rho: RidgeImputer,
    pub fitted_nu: Vec<f64>,
    pub fitted_rho: Vec<f64>,
    pub residuals_nu: Vec<f64>,
    pub residuals_rho: Vec<f64>,
}

pub fn fit_imputer_pair(
    data: &TabularDataset,
    feature_index: usize,
    lambda: f64,
) -> Result<ImputerPair> {
    if feature_index >= data.p() {
        return Err(Error::InvalidParameter(format!(
            "feature index {feature_index} out of range for p = {}",
            data.p()
        )));
    }
    let target = data.column(feature_index);
    let fit_side = |spec: RegressorSpec| -> Result<(RidgeImputer, Vec<f64>, Vec<f64>)> {
        let regressors = match spec {
            RegressorSpec::WithoutResponse => data.without_column(feature_index),
            RegressorSpec::WithResponse => data.without_column_with_response(feature_index),
        };
        let fit = fit_ridge(&target, &regressors, lambda)?;
        let fitted = fit.predict(&regressors)?;
        let residuals = target.iter().zip(&fitted).map(|(x, f)| x - f).collect();
        let imputer = RidgeImputer {
            feature_index,
            regressor_spec: spec,
            fit,
        };
        Ok((imputer, fitted, residuals))
    };
    let (nu, fitted_nu, residuals_nu) = fit_side(RegressorSpec::WithoutResponse)?;
    let (rho, fitted_rho, residuals_rho) = fit_side(RegressorSpec::WithResponse)?;
    Ok(ImputerPair {
        feature_index,
        nu,
        rho,
        fitted_nu,
        fitted_rho,
        residuals_nu,
        residuals_rho,
    })
}

/// `||theta_tilde - theta_hat||_2`: how much the ridge coefficients of
/// `data.response` on `data.inputs` move when column `dropped_index` is
/// removed (the restricted fit is re-embedded with a 0 at that coordinate).
pub fn stability_probe(data: &TabularDataset, dropped_index: usize, lambda: f64) -> Result<f64> {
    if dropped_index >= data.p() {
        return Err(Error::InvalidParameter(format!(
            "dropped index {dropped_index} out of range for p = {}",
            data.p()
        )));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "stability probe needs lambda > 0, got {lambda}"
        )));
    }
    let full = fit_ridge(data.response(), data.inputs(), lambda)?;
    let restricted = fit_ridge(data.response(), &data.without_column(dropped_index), lambda)?;
    let mut sq = 0.0;
    let mut r = restricted.coefficients.iter();
    for (k, theta) in full.coefficients.iter().enumerate() {
        let extended = if k == dropped_index {
            0.0
        } else {
            *r.next().expect("restricted fit has p - 1 coefficients")
        };
        sq += (extended - theta).powi(2);
    }
    Ok(sq.sqrt())
}

/// Multivariate normal `N(mean, covariance)` used as a ground-truth oracle.
#[derive(Debug, Clone)]
pub struct GaussianOracle {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

/// Conditional law of one coordinate given all others:
/// `E = mean[t] + weights . (x_rest - mean_rest)`, with standard deviation `sd`.
#[derive(Debug, Clone)]
pub struct GaussianConditional {
    pub target_index: usize,
    pub weights: DVector<f64>,
    pub sd: f64,
    target_mean: f64,
    rest_means: DVector<f64>,
}

impl GaussianConditional {
    pub fn mean_given(&self, rest: &[f64]) -> f64 {
        self.target_mean
            + self
                .weights
                .iter()
                .zip(self.rest_means.iter())
                .zip(rest)
                .map(|((w, m), x)| w * (x - m))
                .sum::<f64>()
    }
}

impl GaussianOracle {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if covariance.shape() != (d, d) {
            return Err(Error::DimensionMismatch(format!(
                "mean has length {d} but covariance is {:?}",
                covariance.shape()
            )));
        }
        let scale = covariance.amax().max(1.0);
        for i in 0..d {
            for k in 0..i {
                if (covariance[(i, k)] - covariance[(k, i)]).abs() > 1e-12 * scale {
                    return Err(Error::NotPositiveDefinite);
                }
            }
        }
        let eig = SymmetricEigen::new(covariance.clone());
        if eig.eigenvalues.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { mean, covariance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// Marginal over the first `k` coordinates.
    pub fn leading_marginal(&self, k: usize) -> Result<GaussianOracle> {
        if k == 0 || k > self.dim() {
            return Err(Error::InvalidParameter(format!("bad marginal size {k}")));
        }
        GaussianOracle::new(
            self.mean.rows(0, k).into_owned(),
            self.covariance.view((0, 0), (k, k)).into_owned(),
        )
    }

    pub fn conditional(&self, target_index: usize) -> Result<GaussianConditional> {
        let d = self.dim();
        if target_index >= d {
            return Err(Error::InvalidParameter(format!(
                "target index {target_index} out of range for dimension {d}"
            )));
        }
        let rest_cov = self
            .covariance
            .clone()
            .remove_row(target_index)
            .remove_column(target_index);
        let cross = self
            .covariance
            .column(target_index)
            .into_owned()
            .remove_row(target_index);
        let (weights, explained) = if d == 1 {
            (DVector::zeros(0), 0.0)
        } else {
            let chol = Cholesky::new(rest_cov).ok_or(Error::NotPositiveDefinite)?;
            let w = chol.solve(&cross);
            let explained = w.dot(&cross);
            (w, explained)
        };
        let var = self.covariance[(target_index, target_index)] - explained;
        if !(var > 0.0) {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(GaussianConditional {
            target_index,
            weights,
            sd: var.sqrt(),
            target_mean: self.mean[target_index],
            rest_means: self.mean.clone().remove_row(target_index),
        })
    }
}

/// Exact `(E[X^t | X^{-t} = values], sd(X^t | X^{-t}))` under the oracle.
/// `conditioning_values` lists the other coordinates in index order.
pub fn oracle_conditional_mean(
    oracle: &GaussianOracle,
    conditioning_values: &[f64],
    target_index: usize,
) -> Result<(f64, f64)> {
    if conditioning_values.len() + 1 != oracle.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} conditioning values for dimension {}",
            conditioning_values.len(),
            oracle.dim()
        )));
    }
    let cond = oracle.conditional(target_index)?;
    Ok((cond.mean_given(conditioning_values), cond.sd))
}

/// True conditional means of a feature, evaluated at every row of a dataset.
pub trait ConditionalMeanOracle: Send + Sync {
    /// `E[X^j | X^{-j}]` per row.
    fn nu(&self, data: &TabularDataset, feature: usize) -> Result<Vec<f64>>;
    /// `E[X^j | X^{-j}, y]` per row.
    fn rho(&self, data: &TabularDataset, feature: usize) -> Result<Vec<f64>>;
}

/// Oracle for data whose `(X, y)` is jointly Gaussian; the response is the
/// last coordinate of `joint`.
#[derive(Debug, Clone)]
pub struct JointGaussianOracle {
    joint: GaussianOracle,
    inputs: GaussianOracle,
}

impl JointGaussianOracle {
    pub fn new(joint: GaussianOracle) -> Result<Self> {
        if joint.dim() < 2 {
            return Err(Error::InvalidParameter(
                "joint oracle needs at least one feature and the response".into(),
            ));
        }
        let inputs = joint.leading_marginal(joint.dim() - 1)?;
        Ok(Self { joint, inputs })
    }

    pub fn joint(&self) -> &GaussianOracle {
        &self.joint
    }

    pub fn inputs(&self) -> &GaussianOracle {
        &self.inputs
    }

    fn check(&self, data: &TabularDataset, feature: usize) -> Result<()> {
        if data.p() != self.inputs.dim() {
            return Err(Error::DimensionMismatch(format!(
                "oracle covers {} features, data has {}",
                self.inputs.dim(),
                data.p()
            )));
        }
        if feature >= data.p() {
            return Err(Error::InvalidParameter(format!(
                "feature {feature} out of range"
            )));
        }
        Ok(())
    }
}

fn apply_conditional(cond: &GaussianConditional, rest: &DMatrix<f64>) -> Vec<f64> {
    let mut row = vec![0.0; rest.ncols()];
    (0..rest.nrows())
        .map(|i| {
            for (k, v) in row.iter_mut().enumerate() {
                *v = rest[(i, k)];
            }
            cond.mean_given(&row)
        })
        .collect()
}

impl ConditionalMeanOracle for JointGaussianOracle {
    fn nu(&self, data: &TabularDataset, feature: usize) -> Result<Vec<f64>> {
        self.check(data, feature)?;
        let cond = self.inputs.conditional(feature)?;
        Ok(apply_conditional(&cond, &data.without_column(feature)))
    }

    fn rho(&self, data: &TabularDataset, feature: usize) -> Result<Vec<f64>> {
        self.check(data, feature)?;
        let cond = self.joint.conditional(feature)?;
        Ok(apply_conditional(
            &cond,
            &data.without_column_with_response(feature),
        ))
    }
}

/// `Sigma_ij = rho^|i - j|`.
pub fn ar1_covariance(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| rho.powi(i.abs_diff(j) as i32))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TaskKind;
    use crate::rng::RngStream;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_matrix(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = RngStream::new(seed).rng();
        DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn closed_form_single_regressor() {
        let x = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let fit = fit_ridge(&[1.0, -1.0], &x, 1.0).unwrap();
        assert!((fit.coefficients[0] - 0.5).abs() < 1e-15);
        assert_eq!(fit.intercept, 0.0);
    }

    #[test]
    fn interpolates_exact_linear_target() {
        let x = gaussian_matrix(50, 4, 3);
        let beta = [1.5, -2.0, 0.25, 3.0];
        let z: Vec<f64> = (0..50)
            .map(|i| 0.7 + (0..4).map(|k| beta[k] * x[(i, k)]).sum::<f64>())
            .collect();
        let fit = fit_ridge(&z, &x, 0.0).unwrap();
        for k in 0..4 {
            assert!((fit.coefficients[k] - beta[k]).abs() < 1e-8);
        }
        let pred = fit.predict(&x).unwrap();
        assert!(pred.iter().zip(&z).all(|(a, b)| (a - b).abs() < 1e-8));
    }

    #[test]
    fn huge_penalty_shrinks_to_mean() {
        let x = gaussian_matrix(30, 3, 4);
        let z: Vec<f64> = (0..30).map(|i| 2.0 + x[(i, 0)]).collect();
        let fit = fit_ridge(&z, &x, 1e9).unwrap();
        assert!(fit.coefficients.amax() < 1e-8);
        let mean = z.iter().sum::<f64>() / 30.0;
        assert!((fit.intercept - mean).abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_at_zero_lambda_uses_pseudo_inverse() {
        let base = gaussian_matrix(20, 1, 5);
        let x = DMatrix::from_fn(20, 2, |i, _| base[(i, 0)]);
        let z: Vec<f64> = (0..20).map(|i| 2.0 * base[(i, 0)]).collect();
        let fit = fit_ridge(&z, &x, 0.0).unwrap();
        // Minimum-norm solution splits the weight evenly.
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-8);
        assert!((fit.coefficients[1] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn errors() {
        let x = gaussian_matrix(5, 2, 6);
        assert!(matches!(
            fit_ridge(&[1.0; 4], &x, 0.1),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            fit_ridge(&[1.0; 5], &x, -1.0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn empty_regressor_set_predicts_mean() {
        let x = DMatrix::<f64>::zeros(3, 0);
        let fit = fit_ridge(&[1.0, 2.0, 6.0], &x, 0.1).unwrap();
        assert_eq!(fit.intercept, 3.0);
        assert_eq!(fit.predict(&x).unwrap(), vec![3.0; 3]);
    }

    #[test]
    fn normal_equation_residual_is_tiny() {
        for seed in 0..10 {
            let x = gaussian_matrix(80, 6, 100 + seed);
            let z: Vec<f64> = (0..80)
                .map(|i| x[(i, 1)] - x[(i, 3)] + 0.1 * i as f64)
                .collect();
            let lambda = 1e-3 * (seed + 1) as f64;
            let fit = fit_ridge(&z, &x, lambda).unwrap();
            let c = center(&z, &x).unwrap();
            let n = 80.0;
            let gram = c.xc.tr_mul(&c.xc) / n + DMatrix::identity(6, 6) * lambda;
            let rhs = c.xc.tr_mul(&c.zc) / n;
            let resid = (&gram * &fit.coefficients - &rhs).amax();
            assert!(resid <= 1e-10 * rhs.amax().max(1.0), "residual {resid}");
        }
    }

    #[test]
    fn gcv_prefers_small_lambda_for_clean_signal() {
        let x = gaussian_matrix(200, 3, 9);
        let mut rng = RngStream::new(10).rng();
        let z: Vec<f64> = (0..200)
            .map(|i| {
                3.0 * x[(i, 0)]
                    + 0.1 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
            })
            .collect();
        let grid = default_lambda_grid();
        assert_eq!(grid.len(), 16);
        assert!((grid[0] - 1e-4).abs() < 1e-18 && (grid[15] - 10.0).abs() < 1e-12);
        let (best, scores) = select_lambda_gcv(&z, &x, &grid).unwrap();
        assert_eq!(scores.len(), grid.len());
        assert!(best < 0.1, "picked {best}");
    }

    fn dataset_with_constant_column() -> TabularDataset {
        let mut x = gaussian_matrix(40, 3, 12);
        x.column_mut(1).fill(2.5);
        let y: Vec<f64> = (0..40).map(|i| x[(i, 0)]).collect();
        TabularDataset::new(x, y, TaskKind::Regression).unwrap()
    }

    #[test]
    fn constant_feature_has_zero_residuals() {
        let data = dataset_with_constant_column();
        let pair = fit_imputer_pair(&data, 1, 0.1).unwrap();
        assert!(pair.residuals_nu.iter().all(|r| r.abs() < 1e-12));
        assert!(pair.residuals_rho.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn residual_pools_are_centered() {
        let data = dataset_with_constant_column();
        let pair = fit_imputer_pair(&data, 0, 0.1).unwrap();
        for pool in [&pair.residuals_nu, &pair.residuals_rho] {
            let mean = pool.iter().sum::<f64>() / pool.len() as f64;
            assert!(mean.abs() < 1e-8);
        }
        assert_eq!(pair.rho.coefficients().len(), 3);
        assert_eq!(pair.nu.coefficients().len(), 2);
        let again = pair.nu.impute(&data).unwrap();
        assert_eq!(again, pair.fitted_nu);
    }

    #[test]
    fn single_feature_nu_is_the_mean() {
        let x = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 6.0]);
        let data = TabularDataset::new(x, vec![0.0, 1.0, 0.0, 1.0], TaskKind::BinaryClassification)
            .unwrap();
        let pair = fit_imputer_pair(&data, 0, 0.1).unwrap();
        assert_eq!(pair.fitted_nu, vec![3.0; 4]);
        assert_eq!(pair.residuals_nu, vec![-2.0, -1.0, 0.0, 3.0]);
        assert!(fit_imputer_pair(&data, 1, 0.1).is_err());
    }

    #[test]
    fn oracle_identity_covariance() {
        let o = GaussianOracle::new(DVector::zeros(3), DMatrix::identity(3, 3)).unwrap();
        let (m, sd) = oracle_conditional_mean(&o, &[5.0, -2.0], 1).unwrap();
        assert_eq!((m, sd), (0.0, 1.0));
    }

    #[test]
    fn oracle_two_dimensional() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 1.0]);
        let o = GaussianOracle::new(DVector::zeros(2), cov).unwrap();
        let (m, sd) = oracle_conditional_mean(&o, &[1.0], 0).unwrap();
        assert!((m - 0.6).abs() < 1e-12);
        assert!((sd - 0.8).abs() < 1e-12);
    }

    #[test]
    fn oracle_ar1_middle_coordinate() {
        let o = GaussianOracle::new(DVector::zeros(3), ar1_covariance(3, 0.6)).unwrap();
        let (m, _) = oracle_conditional_mean(&o, &[1.0, 1.0], 1).unwrap();
        // Cramer's rule on [[1, .36], [.36, 1]] w = [.6, .6].
        let det = 1.0 - 0.36 * 0.36;
        let w = (0.6 * 1.0 - 0.36 * 0.6) / det;
        assert!((m - 2.0 * w).abs() < 1e-12);
    }

    #[test]
    fn oracle_rejects_bad_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            GaussianOracle::new(DVector::zeros(2), cov),
            Err(Error::NotPositiveDefinite)
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.2, 1.0]);
        assert!(GaussianOracle::new(DVector::zeros(2), asym).is_err());
    }

    #[test]
    fn stability_probe_for_sole_predictor() {
        let x = gaussian_matrix(500, 3, 21);
        let z: Vec<f64> = (0..500).map(|i| x[(i, 2)]).collect();
        let data = TabularDataset::new(x, z, TaskKind::Regression).unwrap();
        let v = stability_probe(&data, 2, 0.01).unwrap();
        assert!(v > 0.9, "probe {v}");
        assert!(stability_probe(&data, 2, 0.0).is_err());
    }

    #[test]
    fn stability_probe_with_duplicate_column_is_finite() {
        let base = gaussian_matrix(100, 2, 22);
        let x = DMatrix::from_fn(100, 3, |i, k| base[(i, k.min(1))]);
        let z: Vec<f64> = (0..100).map(|i| base[(i, 1)] + base[(i, 0)]).collect();
        let data = TabularDataset::new(x, z, TaskKind::Regression).unwrap();
        assert!(stability_probe(&data, 2, 0.1).unwrap().is_finite());
    }
}
