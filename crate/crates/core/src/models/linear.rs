use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{TabularDataset, TaskKind};
use crate::error::{Error, Result};
use crate::imputer::fit_ridge;
use crate::loss::PredictiveModel;

const IRLS_MAX_ITERATIONS: usize = 100;
const IRLS_GRADIENT_TOLERANCE: f64 = 1e-8;
const SEPARATION_LOSS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Identity,
    Logistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub link: Link,
}

impl LinearModel {
    pub fn new(coefficients: Vec<f64>, intercept: f64, link: Link) -> Result<Self> {
        if !intercept.is_finite() || coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(
                "linear model parameters must be finite".into(),
            ));
        }
        Ok(Self {
            coefficients,
            intercept,
            link,
        })
    }

    fn linear_predictor(&self, inputs: &DMatrix<f64>) -> Vec<f64> {
        let mut eta = vec![self.intercept; inputs.nrows()];
        for (col, &c) in inputs.column_iter().zip(&self.coefficients) {
            for (e, x) in eta.iter_mut().zip(col.iter()) {
                *e += c * x;
            }
        }
        eta
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl PredictiveModel for LinearModel {
    fn id(&self) -> &str {
        match self.link {
            Link::Identity => "linear",
            Link::Logistic => "logistic",
        }
    }

    fn predict(&self, inputs: &DMatrix<f64>) -> Result<Vec<f64>> {
        if inputs.ncols() != self.coefficients.len() {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, got {}",
                self.coefficients.len(),
                inputs.ncols()
            )));
        }
        let eta = self.linear_predictor(inputs);
        Ok(match self.link {
            Link::Identity => eta,
            // Keep probabilities strictly inside (0, 1).
            Link::Logistic => eta
                .into_iter()
                .map(|t| sigmoid(t).clamp(f64::EPSILON, 1.0 - f64::EPSILON))
                .collect(),
        })
    }
}

/// Ridge regression for regression tasks, penalized logistic regression
/// (damped Newton / IRLS) for binary classification. The intercept is never
/// penalized.
pub fn fit_linear(data: &TabularDataset, ridge_lambda: f64) -> Result<LinearModel> {
    match data.task_kind() {
        TaskKind::Regression => {
            let fit = fit_ridge(data.response(), data.inputs(), ridge_lambda)?;
            let coefficients: Vec<f64> = fit.coefficients.iter().copied().collect();
            let intercept = fit.intercept
                - coefficients
                    .iter()
                    .zip(fit.training_column_means.iter())
                    .map(|(c, m)| c * m)
                    .sum::<f64>();
            LinearModel::new(coefficients, intercept, Link::Identity)
        }
        TaskKind::BinaryClassification => {
            fit_logistic(data.inputs(), data.response(), ridge_lambda)
        }
    }
}

fn mean_cross_entropy(eta: &[f64], y: &[f64]) -> f64 {
    // log(1 + e^t) - y t, evaluated stably.
    eta.iter()
        .zip(y)
        .map(|(&t, &yi)| {
            let softplus = if t > 0.0 {
                t + (-t).exp().ln_1p()
            } else {
                t.exp().ln_1p()
            };
            softplus - yi * t
        })
        .sum::<f64>()
        / eta.len() as f64
}

fn fit_logistic(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<LinearModel> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    let (n, p) = x.shape();
    let nf = n as f64;
    // Design with a leading intercept column.
    let design = x.clone().insert_column(0, 1.0);
    let objective = |beta: &DVector<f64>| -> (f64, Vec<f64>) {
        let eta: Vec<f64> = (&design * beta).iter().copied().collect();
        let penalty = 0.5 * lambda * beta.rows(1, p).norm_squared();
        (mean_cross_entropy(&eta, y) + penalty, eta)
    };

    let mut beta = DVector::zeros(p + 1);
    let (mut value, mut eta) = objective(&beta);
    for _ in 0..IRLS_MAX_ITERATIONS {
        let mu: Vec<f64> = eta.iter().map(|&t| sigmoid(t)).collect();
        let resid = DVector::from_iterator(n, mu.iter().zip(y).map(|(m, yi)| m - yi));
        let mut gradient = design.tr_mul(&resid) / nf;
        for k in 1..=p {
            gradient[k] += lambda * beta[k];
        }
        if gradient.amax() < IRLS_GRADIENT_TOLERANCE {
            // An unpenalized fit that classifies every row correctly only
            // stopped because the gradient decays; the optimum is at infinity.
            if lambda == 0.0 && separates(&eta, y) {
                return Err(Error::Separation);
            }
            return finish(beta, p);
        }
        let mut weighted = design.clone();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            row *= mu[i] * (1.0 - mu[i]);
        }
        let mut hessian = design.tr_mul(&weighted) / nf;
        for k in 1..=p {
            hessian[(k, k)] += lambda;
        }
        let mean_loss = mean_cross_entropy(&eta, y);
        let step = match hessian.clone().cholesky() {
            Some(chol) => chol.solve(&gradient),
            None if lambda == 0.0 && mean_loss < 1e-3 => return Err(Error::Separation),
            None => hessian
                .svd(true, true)
                .solve(&gradient, 1e-12)
                .map_err(|e| Error::Singular(e.to_string()))?,
        };
        // Halve the Newton step until the penalized objective decreases.
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let candidate = &beta - &step * scale;
            let (v, e) = objective(&candidate);
            if v.is_finite() && v <= value {
                beta = candidate;
                value = v;
                eta = e;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if lambda == 0.0 && (mean_cross_entropy(&eta, y) < SEPARATION_LOSS || beta.amax() > 1e8) {
            return Err(Error::Separation);
        }
        if !accepted {
            // No descent along the Newton direction: we are at numerical optimum.
            return finish(beta, p);
        }
    }
    if lambda == 0.0 && mean_cross_entropy(&eta, y) < 1e-6 {
        return Err(Error::Separation);
    }
    Err(Error::NonConvergence {
        iterations: IRLS_MAX_ITERATIONS,
    })
}

fn separates(eta: &[f64], y: &[f64]) -> bool {
    eta.iter()
        .zip(y)
        .all(|(&t, &yi)| (yi >= 0.5 && t > 0.0) || (yi < 0.5 && t < 0.0))
}

fn finish(beta: DVector<f64>, p: usize) -> Result<LinearModel> {
    LinearModel::new(
        beta.rows(1, p).iter().copied().collect(),
        beta[0],
        Link::Logistic,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use rand_distr::{Distribution, StandardNormal};

    fn regression(x: Vec<f64>, p: usize, y: Vec<f64>) -> TabularDataset {
        let n = y.len();
        TabularDataset::new(DMatrix::from_row_slice(n, p, &x), y, TaskKind::Regression).unwrap()
    }

    #[test]
    fn interpolates_an_exact_line() {
        let xs = vec![0.0, 1.0, 2.0, 3.0, 4.5];
        let ys = xs.iter().map(|x| 2.0 * x + 1.0).collect();
        let m = fit_linear(&regression(xs, 1, ys), 0.0).unwrap();
        assert!((m.coefficients[0] - 2.0).abs() < 1e-8);
        assert!((m.intercept - 1.0).abs() < 1e-8);
        let pred = m.predict(&DMatrix::from_row_slice(1, 1, &[10.0])).unwrap();
        assert!((pred[0] - 21.0).abs() < 1e-8);
    }

    #[test]
    fn heavier_penalty_shrinks_noise_fit() {
        let mut rng = RngStream::new(3).rng();
        let n = 60;
        let x: Vec<f64> = (0..n * 3)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let y: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let d = regression(x, 3, y);
        let norm = |m: &LinearModel| m.coefficients.iter().map(|c| c * c).sum::<f64>().sqrt();
        let heavy = fit_linear(&d, 10.0).unwrap();
        let light = fit_linear(&d, 0.01).unwrap();
        assert!(norm(&heavy) < norm(&light));
    }

    #[test]
    fn regularized_logistic_handles_separable_data() {
        let x = DMatrix::from_row_slice(4, 1, &[-2.0, -1.0, 1.0, 2.0]);
        let d = TabularDataset::new(
            x.clone(),
            vec![0.0, 0.0, 1.0, 1.0],
            TaskKind::BinaryClassification,
        )
        .unwrap();
        let m = fit_linear(&d, 0.1).unwrap();
        let pred = m.predict(&x).unwrap();
        assert!(pred.iter().all(|&p| p > 0.0 && p < 1.0));
        assert!(pred[0] < 0.5 && pred[3] > 0.5);
        assert!(matches!(fit_linear(&d, 0.0), Err(Error::Separation)));
    }

    #[test]
    fn logistic_recovers_generating_slope() {
        let mut rng = RngStream::new(8).rng();
        let n = 4000;
        let x: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| {
                let u: f64 = rand::Rng::random(&mut rng);
                if u < sigmoid(1.5 * v - 0.5) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let d = TabularDataset::new(
            DMatrix::from_vec(n, 1, x),
            y,
            TaskKind::BinaryClassification,
        )
        .unwrap();
        let m = fit_linear(&d, 0.0).unwrap();
        assert!((m.coefficients[0] - 1.5).abs() < 0.2, "{:?}", m);
        assert!((m.intercept + 0.5).abs() < 0.15, "{:?}", m);
    }

    #[test]
    fn logistic_gradient_vanishes_at_the_fit() {
        let mut rng = RngStream::new(21).rng();
        let n = 200;
        let x = DMatrix::from_fn(n, 2, |_, _| StandardNormal.sample(&mut rng));
        let y: Vec<f64> = (0..n)
            .map(|i| {
                if x[(i, 0)] + x[(i, 1)] > 0.3 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let lambda = 0.05;
        let d = TabularDataset::new(x.clone(), y.clone(), TaskKind::BinaryClassification).unwrap();
        let m = fit_linear(&d, lambda).unwrap();
        let eta = m.linear_predictor(&x);
        let mut g = [0.0; 3];
        for i in 0..n {
            let r = sigmoid(eta[i]) - y[i];
            g[0] += r / n as f64;
            g[1] += r * x[(i, 0)] / n as f64;
            g[2] += r * x[(i, 1)] / n as f64;
        }
        g[1] += lambda * m.coefficients[0];
        g[2] += lambda * m.coefficients[1];
        assert!(g.iter().all(|v| v.abs() < 1e-7), "{g:?}");
    }

    #[test]
    fn predictions_are_reproducible_and_checked() {
        let m = LinearModel::new(vec![1.0, -2.0], 0.5, Link::Identity).unwrap();
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 2.0]);
        assert_eq!(m.predict(&x).unwrap(), vec![-0.5, -3.5]);
        assert_eq!(m.predict(&x).unwrap(), m.predict(&x).unwrap());
        assert!(m.predict(&DMatrix::zeros(1, 3)).is_err());
        assert!(LinearModel::new(vec![f64::NAN], 0.0, Link::Identity).is_err());
    }
}
