//! Semi-knockoff draws by residual permutation.
//!
//! For feature `j`, the first copy replaces column `j` with
//! `nu(X^{-j}_i) + e1[pi1(i)]` and the second with
//! `rho(X^{-j}_i, y_i) + e2[pi2(i)]`, where `e1`, `e2` are the residual pools
//! of the two imputers and `pi1`, `pi2` are independent uniform permutations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::TabularDataset;
use crate::error::{Error, Result};
use crate::imputer::{ConditionalMeanOracle, ImputerPair};
use crate::rng::{permutation, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawVariant {
    /// Fitted imputers.
    Estimated,
    /// True conditional means.
    Oracle,
}

/// Per-row conditional-mean predictions and the residuals they leave,
/// for both sides of a semi-knockoff.
#[derive(Debug, Clone)]
pub struct ResidualPools {
    pub feature_index: usize,
    pub variant: DrawVariant,
    pub fitted_one: Vec<f64>,
    pub fitted_two: Vec<f64>,
    pub residuals_one: Vec<f64>,
    pub residuals_two: Vec<f64>,
}

impl From<&ImputerPair> for ResidualPools {
    fn from(pair: &ImputerPair) -> Self {
        ResidualPools {
            feature_index: pair.feature_index,
            variant: DrawVariant::Estimated,
            fitted_one: pair.fitted_nu.clone(),
            fitted_two: pair.fitted_rho.clone(),
            residuals_one: pair.residuals_nu.clone(),
            residuals_two: pair.residuals_rho.clone(),
        }
    }
}

impl ResidualPools {
    /// Pools built from the theoretical residuals `X^j - nu_j(X^{-j})` and
    /// `X^j - rho_j(X^{-j}, y)`.
    pub fn from_oracle<O: ConditionalMeanOracle + ?Sized>(
        data: &TabularDataset,
        oracle: &O,
        feature: usize,
    ) -> Result<Self> {
        if feature >= data.p() {
            return Err(Error::InvalidParameter(format!(
                "feature {feature} out of range"
            )));
        }
        let x = data.column(feature);
        let fitted_one = oracle.nu(data, feature)?;
        let fitted_two = oracle.rho(data, feature)?;
        if fitted_one.len() != data.n() || fitted_two.len() != data.n() {
            return Err(Error::DimensionMismatch(
                "oracle returned the wrong number of predictions".into(),
            ));
        }
        let residuals_one = x.iter().zip(&fitted_one).map(|(a, b)| a - b).collect();
        let residuals_two = x.iter().zip(&fitted_two).map(|(a, b)| a - b).collect();
        Ok(ResidualPools {
            feature_index: feature,
            variant: DrawVariant::Oracle,
            fitted_one,
            fitted_two,
            residuals_one,
            residuals_two,
        })
    }

    pub fn n(&self) -> usize {
        self.fitted_one.len()
    }

    fn check(&self, data: &TabularDataset) -> Result<()> {
        let n = data.n();
        let lens = [
            self.fitted_one.len(),
            self.fitted_two.len(),
            self.residuals_one.len(),
            self.residuals_two.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::DimensionMismatch(format!(
                "residual pools sized {lens:?} for {n} rows"
            )));
        }
        if self.feature_index >= data.p() {
            return Err(Error::DimensionMismatch(format!(
                "pools for feature {} but data has {} features",
                self.feature_index,
                data.p()
            )));
        }
        Ok(())
    }
}

/// Two perturbed copies of the inputs for one feature and one seed.
#[derive(Debug, Clone)]
pub struct SemiKnockoffDraw {
    pub feature_index: usize,
    pub variant: DrawVariant,
    pub inputs_one: DMatrix<f64>,
    pub inputs_two: DMatrix<f64>,
    pub permutation_one: Vec<usize>,
    pub permutation_two: Vec<usize>,
}

fn is_permutation(p: &[usize], n: usize) -> bool {
    if p.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    p.iter()
        .all(|&k| k < n && !std::mem::replace(&mut seen[k], true))
}

/// Builds a draw from explicit permutations.
pub fn draw_with_permutations(
    data: &TabularDataset,
    pools: &ResidualPools,
    permutation_one: Vec<usize>,
    permutation_two: Vec<usize>,
) -> Result<SemiKnockoffDraw> {
    pools.check(data)?;
    let n = data.n();
    if !is_permutation(&permutation_one, n) || !is_permutation(&permutation_two, n) {
        return Err(Error::InvalidParameter(format!(
            "permutations must be bijections on 0..{n}"
        )));
    }
    let j = pools.feature_index;
    let column = |fitted: &[f64], residuals: &[f64], perm: &[usize]| {
        DVector::from_iterator(n, (0..n).map(|i| fitted[i] + residuals[perm[i]]))
    };
    let mut inputs_one = data.inputs().clone();
    inputs_one.set_column(
        j,
        &column(&pools.fitted_one, &pools.residuals_one, &permutation_one),
    );
    let mut inputs_two = data.inputs().clone();
    inputs_two.set_column(
        j,
        &column(&pools.fitted_two, &pools.residuals_two, &permutation_two),
    );
    Ok(SemiKnockoffDraw {
        feature_index: j,
        variant: pools.variant,
        inputs_one,
        inputs_two,
        permutation_one,
        permutation_two,
    })
}

/// One draw with `pi1`, `pi2` sampled independently and uniformly from `rng`.
pub fn draw_from_pools(
    data: &TabularDataset,
    pools: &ResidualPools,
    rng: &RngStream,
) -> Result<SemiKnockoffDraw> {
    pools.check(data)?;
    let mut gen = rng.rng();
    let permutation_one = permutation(data.n(), &mut gen);
    let permutation_two = permutation(data.n(), &mut gen);
    draw_with_permutations(data, pools, permutation_one, permutation_two)
}

pub fn draw_semi_knockoff(
    data: &TabularDataset,
    pair: &ImputerPair,
    rng: &RngStream,
) -> Result<SemiKnockoffDraw> {
    draw_from_pools(data, &ResidualPools::from(pair), rng)
}

pub fn draw_oracle_semi_knockoff<O: ConditionalMeanOracle + ?Sized>(
    data: &TabularDataset,
    oracle: &O,
    feature: usize,
    rng: &RngStream,
) -> Result<SemiKnockoffDraw> {
    draw_from_pools(
        data,
        &ResidualPools::from_oracle(data, oracle, feature)?,
        rng,
    )
}

/// `count` draws; draw `d` uses the stream `rng.derive(d)`.
pub fn draw_batch(
    data: &TabularDataset,
    pools: &ResidualPools,
    rng: &RngStream,
    count: usize,
) -> Result<Vec<SemiKnockoffDraw>> {
    if count == 0 {
        return Err(Error::InvalidParameter(
            "at least one draw is required".into(),
        ));
    }
    (0..count)
        .map(|d| draw_from_pools(data, pools, &rng.derive(d as u64)))
        .collect()
}
