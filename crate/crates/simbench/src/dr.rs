//! Nonlinear setting: its oracle and the double-robustness probe.

use serde::{Deserialize, Serialize};

use semiknock_core::imputer::fit_imputer_pair;
use semiknock_core::models::ModelSpec;
use semiknock_core::rng::permutation;
use semiknock_core::sampler::draw_with_permutations;
use semiknock_core::{
    evaluate_loss, ConditionalMeanOracle, Error, GaussianOracle, LossFunction, ResidualPools,
    Result, RngStream, TabularDataset,
};

use crate::settings::{simulate, SettingKind, SyntheticSetting};

/// `E[y | x] = 0.8 x1 + 0.6 x2 + 0.4 x3 + 0.2 x4 + sin(x1)`.
pub fn nonlinear_mean(x: &[f64]) -> f64 {
    0.8 * x[1] + 0.6 * x[2] + 0.4 * x[3] + 0.2 * x[4] + x[1].sin()
}

const QUADRATURE_HALF_WIDTH: f64 = 8.0;
const QUADRATURE_POINTS: usize = 801;

/// Conditional means for Gaussian inputs and `y = nonlinear_mean(x) + eps`.
///
/// `nu` is the Gaussian conditional mean. `rho` equals it for features the
/// response does not use; for the others it is the posterior mean of
/// `x_j` given the rest and `y`, integrated on a fine grid over the
/// Gaussian prior.
#[derive(Debug, Clone)]
pub struct NonlinearOracle {
    inputs: GaussianOracle,
    noise_sd: f64,
}

impl NonlinearOracle {
    pub fn new(inputs: GaussianOracle, noise_sd: f64) -> Self {
        Self { inputs, noise_sd }
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

impl ConditionalMeanOracle for NonlinearOracle {
    fn nu(&self, data: &TabularDataset, feature: usize) -> Result<Vec<f64>> {
        self.check(data, feature)?;
        let cond = self.inputs.conditional(feature)?;
        let rest = data.without_column(feature);
        Ok((0..data.n())
            .map(|i| cond.mean_given(&rest.row(i).iter().copied().collect::<Vec<_>>()))
            .collect())
    }

    fn rho(&self, data: &TabularDataset, feature: usize) -> Result<Vec<f64>> {
        let nu = self.nu(data, feature)?;
        if !(1..=4).contains(&feature) {
            return Ok(nu);
        }
        let cond = self.inputs.conditional(feature)?;
        let s = cond.sd;
        let inv_two_var = 1.0 / (2.0 * self.noise_sd * self.noise_sd);
        let step = 2.0 * QUADRATURE_HALF_WIDTH / (QUADRATURE_POINTS - 1) as f64;
        let mut row = vec![0.0; data.p()];
        let mut log_w = vec![0.0; QUADRATURE_POINTS];
        Ok((0..data.n())
            .map(|i| {
                for (j, v) in row.iter_mut().enumerate() {
                    *v = data.inputs()[(i, j)];
                }
                let y = data.response()[i];
                for (k, lw) in log_w.iter_mut().enumerate() {
                    let u = -QUADRATURE_HALF_WIDTH + k as f64 * step;
                    row[feature] = nu[i] + s * u;
                    let r = y - nonlinear_mean(&row);
                    *lw = -0.5 * u * u - r * r * inv_two_var;
                }
                let top = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let (mut num, mut den) = (0.0, 0.0);
                for (k, lw) in log_w.iter().enumerate() {
                    let w = (lw - top).exp();
                    num += w * (nu[i] + s * (-QUADRATURE_HALF_WIDTH + k as f64 * step));
                    den += w;
                }
                num / den
            })
            .collect())
    }
}

/// Per-sample loss differences for the null feature 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrProbe {
    /// `l(m(X'_1), y) - l(m(X'_2), y)`, estimated imputers, independent
    /// permutations.
    pub estimated_vs_estimated: Vec<f64>,
    /// `l(m(X'_1), y) - l(m(X_1), y)`: estimated versus true conditional
    /// mean, same permutation.
    pub estimated_vs_oracle: Vec<f64>,
}

impl DrProbe {
    /// `sample,kind,difference` rows for plotting.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["sample", "kind", "difference"])?;
        for (kind, values) in [
            ("estimated_vs_estimated", &self.estimated_vs_estimated),
            ("estimated_vs_oracle", &self.estimated_vs_oracle),
        ] {
            for (i, v) in values.iter().enumerate() {
                w.write_record([i.to_string(), kind.to_string(), v.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::Io {
            path: "<csv output>".into(),
            source: e,
        })
    }
}

/// The two difference distributions behind the double-robustness picture,
/// for feature 0 of a freshly simulated dataset.
pub fn double_robustness_probe(
    setting: &SyntheticSetting,
    model: &ModelSpec,
    lambda: f64,
    rng: &RngStream,
) -> Result<DrProbe> {
    if setting.kind != SettingKind::DrNonlinear {
        log::warn!(
            "double-robustness probe on {} instead of dr_nonlinear",
            setting.kind
        );
    }
    let sim = simulate(setting, &rng.derive(0))?;
    let data = &sim.data;
    let oracle = sim.oracle()?;
    let feature = 0;
    let m = model.fit(data, &rng.derive(1))?;
    let loss = LossFunction::SquaredError;

    let estimated = ResidualPools::from(&fit_imputer_pair(data, feature, lambda)?);
    let theoretical = ResidualPools::from_oracle(data, oracle, feature)?;
    let mut gen = rng.derive(2).rng();
    let pi1 = permutation(data.n(), &mut gen);
    let pi2 = permutation(data.n(), &mut gen);

    let est = draw_with_permutations(data, &estimated, pi1.clone(), pi2)?;
    let orc = draw_with_permutations(data, &theoretical, pi1.clone(), pi1)?;
    let l1 = evaluate_loss(&m, loss, &est.inputs_one, data.response())?;
    let l2 = evaluate_loss(&m, loss, &est.inputs_two, data.response())?;
    let lo = evaluate_loss(&m, loss, &orc.inputs_one, data.response())?;
    Ok(DrProbe {
        estimated_vs_estimated: l1.iter().zip(&l2).map(|(a, b)| a - b).collect(),
        estimated_vs_oracle: l1.iter().zip(&lo).map(|(a, b)| a - b).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use semiknock_core::imputer::ar1_covariance;
    use semiknock_core::TaskKind;

    #[test]
    fn rho_matches_nu_off_the_support() {
        let sim = simulate(
            &SyntheticSetting::new(SettingKind::DrNonlinear).with_size(50, 6),
            &RngStream::new(1),
        )
        .unwrap();
        let o = sim.oracle().unwrap();
        assert_eq!(o.nu(&sim.data, 0).unwrap(), o.rho(&sim.data, 0).unwrap());
        assert_eq!(o.nu(&sim.data, 5).unwrap(), o.rho(&sim.data, 5).unwrap());
    }

    #[test]
    fn quadrature_matches_a_dense_riemann_sum() {
        let p = 5;
        let sigma = ar1_covariance(p, 0.5);
        let inputs = GaussianOracle::new(DVector::zeros(p), sigma.clone()).unwrap();
        let oracle = NonlinearOracle::new(inputs.clone(), 0.7);
        let row = [0.3, 0.2, -0.1, 0.5, 0.4];
        let x = DMatrix::from_fn(2, p, |_, j| row[j]);
        let y = nonlinear_mean(&row) + 1.0;
        let data = TabularDataset::new(x, vec![y, y], TaskKind::Regression).unwrap();
        let nu = oracle.nu(&data, 1).unwrap()[0];
        let rho = oracle.rho(&data, 1).unwrap()[0];
        // A positive residual pulls x1 upward.
        assert!(rho > nu, "{rho} <= {nu}");
        // Independent reference: brute-force Riemann sum on a wider grid.
        let cond = inputs.conditional(1).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..200_001 {
            let t = nu + cond.sd * (-12.0 + k as f64 * 24.0 / 200_000.0);
            let row = [0.3, t, -0.1, 0.5, 0.4];
            let w = (-0.5 * ((t - nu) / cond.sd).powi(2)
                - (y - nonlinear_mean(&row)).powi(2) / (2.0 * 0.49))
                .exp();
            num += w * t;
            den += w;
        }
        assert!((rho - num / den).abs() < 1e-9, "{rho} vs {}", num / den);
    }

    #[test]
    fn oracle_on_both_sides_cancels() {
        let setting = SyntheticSetting::new(SettingKind::DrNonlinear).with_size(200, 6);
        let sim = simulate(&setting, &RngStream::new(3)).unwrap();
        let o = sim.oracle().unwrap();
        let pools = ResidualPools::from_oracle(&sim.data, o, 0).unwrap();
        let m = ModelSpec::boosted_stumps()
            .fit(&sim.data, &RngStream::new(0))
            .unwrap();
        let mut gen = RngStream::new(4).rng();
        let pi = permutation(200, &mut gen);
        let a = draw_with_permutations(&sim.data, &pools, pi.clone(), pi.clone()).unwrap();
        let b = draw_with_permutations(&sim.data, &pools, pi.clone(), pi).unwrap();
        let la = evaluate_loss(
            &m,
            LossFunction::SquaredError,
            &a.inputs_one,
            sim.data.response(),
        )
        .unwrap();
        let lb = evaluate_loss(
            &m,
            LossFunction::SquaredError,
            &b.inputs_one,
            sim.data.response(),
        )
        .unwrap();
        assert!(la.iter().zip(&lb).all(|(x, y)| x - y == 0.0));
    }

    #[test]
    fn probe_shapes() {
        let setting = SyntheticSetting::new(SettingKind::DrNonlinear).with_size(300, 6);
        let probe =
            double_robustness_probe(&setting, &ModelSpec::linear(), 0.1, &RngStream::new(5))
                .unwrap();
        assert_eq!(probe.estimated_vs_estimated.len(), 300);
        assert_eq!(probe.estimated_vs_oracle.len(), 300);
        let mut buf = Vec::new();
        probe.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 601);
    }
}
