//! Synthetic data-generating processes with known ground truth.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use semiknock_core::imputer::ar1_covariance;
use semiknock_core::{
    ConditionalMeanOracle, Error, GaussianOracle, JointGaussianOracle, Result, RngStream,
    TabularDataset, TaskKind,
};

use crate::dr::NonlinearOracle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SettingKind {
    /// Linear response on a contiguous block of leading features.
    AdjacentSupport,
    /// One relevant feature plus a near-copy of it that is null.
    MaskedCorrelation,
    /// Adjacent support with Student-t(3) inputs.
    HeavyTails,
    /// Nonlinear response on features 1..=4; feature 0 is null.
    DrNonlinear,
    /// Linear response on randomly placed blocks of 5 features.
    StabilityBlocks,
}

impl SettingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SettingKind::AdjacentSupport => "adjacent_support",
            SettingKind::MaskedCorrelation => "masked_correlation",
            SettingKind::HeavyTails => "heavy_tails",
            SettingKind::DrNonlinear => "dr_nonlinear",
            SettingKind::StabilityBlocks => "stability_blocks",
        }
    }
}

impl fmt::Display for SettingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Width of one support block in [`SettingKind::StabilityBlocks`].
pub const BLOCK_WIDTH: usize = 5;

/// Dimension the nonlinear response needs (the null feature plus four
/// active ones).
const DR_MIN_P: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSetting {
    pub kind: SettingKind,
    pub n: usize,
    pub p: usize,
    /// AR(1) correlation of the base Gaussian design.
    pub correlation_rho: f64,
    /// Standard deviation of the response noise; `None` uses the setting's
    /// own rule (see [`SyntheticSetting::new`]).
    pub noise_sd: Option<f64>,
    /// Fraction of important features, where the setting has one.
    pub sparsity: f64,
}

impl SyntheticSetting {
    /// Defaults per kind:
    ///
    /// | kind | n | p | rho | noise sd | sparsity |
    /// |---|---|---|---|---|---|
    /// | adjacent_support | 300 | 50 | 0.6 | 1 | 0.25 |
    /// | masked_correlation | 300 | 50 | 0.6 | 0.5 | - |
    /// | heavy_tails | 300 | 50 | 0.6 | 1 | 0.25 |
    /// | dr_nonlinear | 2000 | 10 | 0.5 | sqrt(0.5) | - |
    /// | stability_blocks | 300 | 50 | 0.6 | `‖Xβ‖₂ / (2√n)` | 0.25 |
    pub fn new(kind: SettingKind) -> Self {
        let (n, p, rho) = match kind {
            SettingKind::DrNonlinear => (2000, 10, 0.5),
            _ => (300, 50, 0.6),
        };
        Self {
            kind,
            n,
            p,
            correlation_rho: rho,
            noise_sd: None,
            sparsity: 0.25,
        }
    }

    pub fn with_size(mut self, n: usize, p: usize) -> Self {
        self.n = n;
        self.p = p;
        self
    }

    /// Noise standard deviation when it does not depend on the sample.
    pub fn default_noise_sd(&self) -> Option<f64> {
        self.noise_sd.or(match self.kind {
            SettingKind::AdjacentSupport | SettingKind::HeavyTails => Some(1.0),
            SettingKind::MaskedCorrelation => Some(0.5),
            SettingKind::DrNonlinear => Some(0.5f64.sqrt()),
            SettingKind::StabilityBlocks => None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.p == 0 {
            return bad("p must be positive".into());
        }
        if !(self.correlation_rho.abs() < 1.0) {
            return bad(format!(
                "correlation must lie in (-1, 1), got {}",
                self.correlation_rho
            ));
        }
        if let Some(sd) = self.noise_sd {
            if !(sd > 0.0 && sd.is_finite()) {
                return bad(format!("noise sd must be positive, got {sd}"));
            }
        }
        if !(0.0..=1.0).contains(&self.sparsity) {
            return bad(format!(
                "sparsity must lie in [0, 1], got {}",
                self.sparsity
            ));
        }
        match self.kind {
            SettingKind::MaskedCorrelation if self.p < 2 => {
                bad("masked_correlation needs p >= 2".into())
            }
            SettingKind::DrNonlinear if self.p < DR_MIN_P => {
                bad(format!("dr_nonlinear needs p >= {DR_MIN_P}"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// `important[j]` iff feature `j` is outside the null set.
    pub important: Vec<bool>,
    pub generating_coefficients: Option<Vec<f64>>,
    /// The planted null that is strongly correlated with an important
    /// feature (masked correlation only).
    pub correlated_null: Option<usize>,
}

impl GroundTruth {
    pub fn p(&self) -> usize {
        self.important.len()
    }

    pub fn important_indices(&self) -> Vec<usize> {
        (0..self.p()).filter(|&j| self.important[j]).collect()
    }

    pub fn null_indices(&self) -> Vec<usize> {
        (0..self.p()).filter(|&j| !self.important[j]).collect()
    }
}

/// A simulated dataset, its truth, and the true conditional means when
/// they are available.
#[derive(Clone)]
pub struct Simulated {
    pub data: TabularDataset,
    pub truth: GroundTruth,
    pub oracle: Option<Arc<dyn ConditionalMeanOracle>>,
    /// Noise standard deviation actually used.
    pub noise_sd: f64,
}

impl fmt::Debug for Simulated {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Simulated")
            .field("n", &self.data.n())
            .field("p", &self.data.p())
            .field("truth", &self.truth)
            .field("has_oracle", &self.oracle.is_some())
            .field("noise_sd", &self.noise_sd)
            .finish()
    }
}

impl Simulated {
    pub fn oracle(&self) -> Result<&dyn ConditionalMeanOracle> {
        self.oracle.as_deref().ok_or_else(|| {
            Error::OracleUnavailable("this setting has no closed-form conditional means".into())
        })
    }
}

/// Symmetric square root `V diag(sqrt(l)) V'`.
pub fn symmetric_sqrt(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(sigma.clone());
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::NotPositiveDefinite);
    }
    let root = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Ok(&eig.eigenvectors * root * eig.eigenvectors.transpose())
}

fn gaussian_design<R: Rng>(n: usize, sigma: &DMatrix<f64>, rng: &mut R) -> Result<DMatrix<f64>> {
    let root = symmetric_sqrt(sigma)?;
    let z = DMatrix::<f64>::from_fn(n, sigma.nrows(), |_, _| StandardNormal.sample(rng));
    Ok(z * root)
}

fn normals<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Oracle for `y = X beta + eps` with `X ~ N(0, sigma)`, `eps ~ N(0, s^2)`.
fn linear_gaussian_oracle(
    sigma: &DMatrix<f64>,
    beta: &DVector<f64>,
    noise_sd: f64,
) -> Result<JointGaussianOracle> {
    let p = sigma.nrows();
    let cross = sigma * beta;
    let var_y = beta.dot(&cross) + noise_sd * noise_sd;
    let mut joint = DMatrix::zeros(p + 1, p + 1);
    joint.view_mut((0, 0), (p, p)).copy_from(sigma);
    for k in 0..p {
        joint[(k, p)] = cross[k];
        joint[(p, k)] = cross[k];
    }
    joint[(p, p)] = var_y;
    JointGaussianOracle::new(GaussianOracle::new(DVector::zeros(p + 1), joint)?)
}

/// Draws `(data, truth)` for `setting`.
pub fn generate(
    setting: &SyntheticSetting,
    rng: &RngStream,
) -> Result<(TabularDataset, GroundTruth)> {
    simulate(setting, rng).map(|s| (s.data, s.truth))
}

/// Like [`generate`], also returning the oracle when one exists.
pub fn simulate(setting: &SyntheticSetting, rng: &RngStream) -> Result<Simulated> {
    setting.validate()?;
    let (n, p) = (setting.n, setting.p);
    let sigma = ar1_covariance(p, setting.correlation_rho);
    let mut gen = rng.rng();
    match setting.kind {
        SettingKind::AdjacentSupport | SettingKind::HeavyTails => {
            let x = if setting.kind == SettingKind::HeavyTails {
                let t3 = StudentT::new(3.0).expect("valid degrees of freedom");
                let z = DMatrix::from_fn(n, p, |_, _| t3.sample(&mut gen));
                z * symmetric_sqrt(&sigma)?
            } else {
                gaussian_design(n, &sigma, &mut gen)?
            };
            let k = (setting.sparsity * p as f64).floor() as usize;
            let beta = DVector::from_fn(p, |j, _| {
                if j < k {
                    gen.random_range(1.0..=2.0)
                } else {
                    0.0
                }
            });
            let noise_sd = setting.default_noise_sd().expect("fixed noise level");
            let oracle: Option<Arc<dyn ConditionalMeanOracle>> = match setting.kind {
                SettingKind::AdjacentSupport => {
                    Some(Arc::new(linear_gaussian_oracle(&sigma, &beta, noise_sd)?))
                }
                _ => None,
            };
            linear_response(x, &beta, noise_sd, &mut gen, oracle, None)
        }
        SettingKind::StabilityBlocks => {
            let x = gaussian_design(n, &sigma, &mut gen)?;
            let blocks = ((setting.sparsity * p as f64).floor() as usize / BLOCK_WIDTH).max(1);
            let slots = p / BLOCK_WIDTH;
            if slots == 0 {
                return Err(Error::InvalidParameter(format!(
                    "stability_blocks needs p >= {BLOCK_WIDTH}"
                )));
            }
            let chosen = rand::seq::index::sample(&mut gen, slots, blocks.min(slots));
            let mut beta = DVector::zeros(p);
            let mut starts: Vec<usize> = chosen.into_iter().map(|s| s * BLOCK_WIDTH).collect();
            starts.sort_unstable();
            for s in starts {
                for j in s..s + BLOCK_WIDTH {
                    beta[j] = gen.random_range(1.0..=2.0);
                }
            }
            let signal = &x * &beta;
            let noise_sd = setting
                .noise_sd
                .unwrap_or_else(|| signal.norm() / (2.0 * (n as f64).sqrt()));
            let oracle: Arc<dyn ConditionalMeanOracle> =
                Arc::new(linear_gaussian_oracle(&sigma, &beta, noise_sd)?);
            linear_response(x, &beta, noise_sd, &mut gen, Some(oracle), None)
        }
        SettingKind::MaskedCorrelation => {
            let mut x = gaussian_design(n, &sigma, &mut gen)?;
            let l = gen.random_range(1..p);
            let e2 = normals(n, &mut gen);
            for i in 0..n {
                x[(i, l - 1)] = x[(i, l)] + 0.5 * e2[i];
            }
            // Population covariance after the overwrite.
            let mut cov = sigma.clone();
            for k in 0..p {
                cov[(l - 1, k)] = sigma[(l, k)];
                cov[(k, l - 1)] = sigma[(l, k)];
            }
            cov[(l - 1, l - 1)] = 1.25;
            let mut beta = DVector::zeros(p);
            beta[l] = 1.0;
            let noise_sd = setting.default_noise_sd().expect("fixed noise level");
            let oracle: Arc<dyn ConditionalMeanOracle> =
                Arc::new(linear_gaussian_oracle(&cov, &beta, noise_sd)?);
            linear_response(x, &beta, noise_sd, &mut gen, Some(oracle), Some(l - 1))
        }
        SettingKind::DrNonlinear => {
            let x = gaussian_design(n, &sigma, &mut gen)?;
            let noise_sd = setting.default_noise_sd().expect("fixed noise level");
            let eps = normals(n, &mut gen);
            let y: Vec<f64> = (0..n)
                .map(|i| {
                    let row: Vec<f64> = (0..p).map(|j| x[(i, j)]).collect();
                    crate::dr::nonlinear_mean(&row) + noise_sd * eps[i]
                })
                .collect();
            let mut important = vec![false; p];
            important[1..DR_MIN_P].fill(true);
            let oracle =
                NonlinearOracle::new(GaussianOracle::new(DVector::zeros(p), sigma)?, noise_sd);
            Ok(Simulated {
                data: TabularDataset::new(x, y, TaskKind::Regression)?,
                truth: GroundTruth {
                    important,
                    generating_coefficients: None,
                    correlated_null: None,
                },
                oracle: Some(Arc::new(oracle)),
                noise_sd,
            })
        }
    }
}

fn linear_response<R: Rng>(
    x: DMatrix<f64>,
    beta: &DVector<f64>,
    noise_sd: f64,
    rng: &mut R,
    oracle: Option<Arc<dyn ConditionalMeanOracle>>,
    correlated_null: Option<usize>,
) -> Result<Simulated> {
    let n = x.nrows();
    let signal = &x * beta;
    let eps = normals(n, rng);
    let y: Vec<f64> = (0..n).map(|i| signal[i] + noise_sd * eps[i]).collect();
    let important = beta.iter().map(|&b| b != 0.0).collect();
    Ok(Simulated {
        data: TabularDataset::new(x, y, TaskKind::Regression)?,
        truth: GroundTruth {
            important,
            generating_coefficients: Some(beta.iter().copied().collect()),
            correlated_null,
        },
        oracle,
        noise_sd,
    })
}

/// Synthetic binary-classification table shaped like the breast-cancer
/// diagnostic data: 30 features in three groups of 10 (mean, spread and
/// extreme value of ten cell traits), strongly correlated within a trait.
pub fn diagnostic_standin(n: usize, rng: &RngStream) -> Result<TabularDataset> {
    const TRAITS: usize = 10;
    let mut gen = rng.rng();
    let traits = gaussian_design(n, &ar1_covariance(TRAITS, 0.5), &mut gen)?;
    let groups = [("mean", 0.2), ("se", 0.8), ("worst", 0.35)];
    let p = TRAITS * groups.len();
    let mut x = DMatrix::zeros(n, p);
    let mut names = Vec::with_capacity(p);
    for (g, (label, spread)) in groups.iter().enumerate() {
        for t in 0..TRAITS {
            names.push(format!("trait{t}_{label}"));
            for i in 0..n {
                let e: f64 = StandardNormal.sample(&mut gen);
                x[(i, g * TRAITS + t)] = traits[(i, t)] + spread * e;
            }
        }
    }
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let eta = -0.4 + 1.6 * traits[(i, 0)] + 1.2 * traits[(i, 3)] - 0.8 * traits[(i, 6)];
            let prob = 1.0 / (1.0 + (-eta).exp());
            if gen.random::<f64>() < prob {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    TabularDataset::new(x, y, TaskKind::BinaryClassification)?.with_column_names(names)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn adjacent_support_shape() {
        let s = SyntheticSetting::new(SettingKind::AdjacentSupport);
        let (data, truth) = generate(&s, &RngStream::new(1)).unwrap();
        assert_eq!((data.n(), data.p()), (300, 50));
        assert_eq!(truth.important_indices(), (0..12).collect::<Vec<_>>());
        let beta = truth.generating_coefficients.unwrap();
        assert!(beta[..12].iter().all(|b| (1.0..=2.0).contains(b)));
        assert!(beta[12..].iter().all(|&b| b == 0.0));
        let mut mean_corr = 0.0;
        for j in 0..49 {
            mean_corr += corr(&data.column(j), &data.column(j + 1)) / 49.0;
        }
        assert!((mean_corr - 0.6).abs() < 0.05, "{mean_corr}");
    }

    #[test]
    fn masked_correlation_has_one_relevant_feature() {
        let s = SyntheticSetting::new(SettingKind::MaskedCorrelation).with_size(5000, 50);
        let sim = simulate(&s, &RngStream::new(2)).unwrap();
        let imp = sim.truth.important_indices();
        assert_eq!(imp.len(), 1);
        let l = imp[0];
        assert_eq!(sim.truth.correlated_null, Some(l - 1));
        let r = corr(&sim.data.column(l - 1), &sim.data.column(l));
        assert!((r - 1.0 / 1.25f64.sqrt()).abs() < 0.03, "{r}");
    }

    #[test]
    fn heavy_tails_are_heavy() {
        let s = SyntheticSetting::new(SettingKind::HeavyTails).with_size(20000, 5);
        let sim = simulate(&s, &RngStream::new(3)).unwrap();
        assert!(sim.oracle.is_none());
        for j in 0..5 {
            let c = sim.data.column(j);
            let n = c.len() as f64;
            let m = c.iter().sum::<f64>() / n;
            let v = c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
            let k = c.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n / (v * v) - 3.0;
            assert!(k > 1.0, "feature {j}: excess kurtosis {k}");
        }
    }

    #[test]
    fn stability_blocks_are_aligned_blocks_of_five() {
        let s = SyntheticSetting::new(SettingKind::StabilityBlocks);
        let sim = simulate(&s, &RngStream::new(4)).unwrap();
        let imp = sim.truth.important_indices();
        assert_eq!(imp.len(), 10);
        for block in imp.chunks(BLOCK_WIDTH) {
            assert_eq!(block[0] % BLOCK_WIDTH, 0);
            assert_eq!(block[4], block[0] + 4);
        }
    }

    #[test]
    fn dr_nonlinear_truth() {
        let sim = simulate(
            &SyntheticSetting::new(SettingKind::DrNonlinear),
            &RngStream::new(5),
        )
        .unwrap();
        assert_eq!(sim.truth.important_indices(), vec![1, 2, 3, 4]);
        assert!((sim.noise_sd - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        let mut s = SyntheticSetting::new(SettingKind::MaskedCorrelation).with_size(10, 1);
        assert!(s.validate().is_err());
        s.p = 3;
        s.correlation_rho = 1.0;
        assert!(s.validate().is_err());
        assert!(SyntheticSetting::new(SettingKind::DrNonlinear)
            .with_size(10, 4)
            .validate()
            .is_err());
    }

    #[test]
    fn standin_is_binary_with_thirty_features() {
        let d = diagnostic_standin(569, &RngStream::new(6)).unwrap();
        assert_eq!((d.n(), d.p()), (569, 30));
        assert_eq!(d.task_kind(), TaskKind::BinaryClassification);
        let ones = d.response().iter().filter(|&&v| v == 1.0).count();
        assert!(ones > 100 && ones < 469);
    }

    #[test]
    fn generation_is_reproducible() {
        let s = SyntheticSetting::new(SettingKind::AdjacentSupport).with_size(20, 6);
        let a = generate(&s, &RngStream::new(9)).unwrap();
        let b = generate(&s, &RngStream::new(9)).unwrap();
        assert_eq!(a, b);
    }
}
