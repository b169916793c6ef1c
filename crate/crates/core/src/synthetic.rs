//! Synthetic samples drawn from a linear conditional quantile model
//! `Y = α(U) + β(U)·X` with `U` independent of `X`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VqrError};
use crate::matrix::{dot, Matrix};
use crate::measures::{center, DiscreteSample};

/// Points on `[0, 1]` at which the monotonicity of a specified model is
/// checked, in addition to the drawn levels.
const MONOTONE_CHECK_POINTS: usize = 1001;

/// Polynomial with coefficients in increasing degree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial(pub Vec<f64>);

impl Polynomial {
    pub fn eval(&self, u: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * u + c)
    }

    pub fn derivative(&self) -> Polynomial {
        Polynomial(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c)
                .collect(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum NoiseMode {
    None,
    /// Adds uniform noise on `[-scale, scale]`, drawn independently of `X`.
    MeanIndependent { scale: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    /// `S × N` covariate support points.
    pub support: Matrix,
    pub probs: Vec<f64>,
    pub alpha: Polynomial,
    /// One polynomial per covariate.
    pub beta: Vec<Polynomial>,
    pub noise: NoiseMode,
    pub seed: u64,
    /// Reject specs whose quantile `α(u) + β(u)·x` fails to increase in `u`
    /// at some support point.
    pub require_monotone: bool,
}

impl SyntheticSpec {
    /// `α(u) = u`, `β(u) = 1 + u/2`, `X` uniform on `{-1/2, 1/2}`.
    pub fn specified(n: usize, seed: u64) -> Self {
        Self {
            n,
            support: Matrix::column(vec![-0.5, 0.5]),
            probs: vec![0.5, 0.5],
            alpha: Polynomial(vec![0.0, 1.0]),
            beta: vec![Polynomial(vec![1.0, 0.5])],
            noise: NoiseMode::None,
            seed,
            require_monotone: true,
        }
    }

    /// As `specified` but with `β ≡ 0`.
    pub fn independent(n: usize, seed: u64) -> Self {
        Self {
            beta: vec![Polynomial(vec![0.0])],
            ..Self::specified(n, seed)
        }
    }

    /// `β(u) = 1 - 3u` with `X` uniform on `{-1, 0, 1}`. The draw at `x = 1`
    /// decreases in `u`, so the conditional quantiles are not affine in `x`.
    pub fn misspecified(n: usize, seed: u64) -> Self {
        Self {
            support: Matrix::column(vec![-1.0, 0.0, 1.0]),
            probs: vec![1.0 / 3.0; 3],
            beta: vec![Polynomial(vec![1.0, -3.0])],
            require_monotone: false,
            ..Self::specified(n, seed)
        }
    }

    pub fn preset(name: &str, n: usize, seed: u64) -> Result<Self> {
        match name {
            "specified" => Ok(Self::specified(n, seed)),
            "independent" => Ok(Self::independent(n, seed)),
            "misspecified" => Ok(Self::misspecified(n, seed)),
            other => Err(VqrError::Validation(format!(
                "unknown preset '{other}' (expected specified, independent or misspecified)"
            ))),
        }
    }

    pub fn alpha_at(&self, u: f64) -> f64 {
        self.alpha.eval(u)
    }

    pub fn beta_at(&self, u: f64) -> Vec<f64> {
        self.beta.iter().map(|p| p.eval(u)).collect()
    }

    pub fn quantile(&self, u: f64, x: &[f64]) -> f64 {
        self.alpha_at(u) + dot(&self.beta_at(u), x)
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(VqrError::Validation("sample size must be positive".into()));
        }
        let s = self.support.rows();
        if s == 0 || self.probs.len() != s {
            return Err(VqrError::Validation(
                "covariate support and probabilities must be nonempty and aligned".into(),
            ));
        }
        if self.beta.len() != self.support.cols() {
            return Err(VqrError::Dimension(format!(
                "{} slope polynomials for {} covariates",
                self.beta.len(),
                self.support.cols()
            )));
        }
        if self.probs.iter().any(|p| !(*p > 0.0)) || (self.probs.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(VqrError::Validation("covariate probabilities must be positive and sum to 1".into()));
        }
        if let NoiseMode::MeanIndependent { scale } = self.noise {
            if !(scale >= 0.0 && scale.is_finite()) {
                return Err(VqrError::Validation(format!("noise scale must be nonnegative, got {scale}")));
            }
        }
        if self.require_monotone {
            let da = self.alpha.derivative();
            let db: Vec<Polynomial> = self.beta.iter().map(Polynomial::derivative).collect();
            for k in 0..MONOTONE_CHECK_POINTS {
                let u = k as f64 / (MONOTONE_CHECK_POINTS - 1) as f64;
                for x in self.support.iter_rows() {
                    let slope = da.eval(u) + db.iter().zip(x).map(|(p, xv)| p.eval(u) * xv).sum::<f64>();
                    if !(slope > 0.0) {
                        return Err(VqrError::Validation(format!(
                            "quantile is not increasing at u = {u} for x = {x:?}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// What the generator drew, for comparison with fitted models.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeneratorMetadata {
    pub spec: SyntheticSpec,
    /// Latent level of every atom, in output order.
    pub u: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Matrix,
    /// True when `n` is a multiple of the support size and every stratum of
    /// `U` carries the exact covariate law.
    pub stratified: bool,
    /// Number of `U` strata.
    pub cells: usize,
    /// Mean subtracted from the covariates.
    pub x_mean: Vec<f64>,
}

/// Draws a centered sample. When `n` is a multiple of the support size `S`,
/// `U` takes the midpoints of `n/S` equal cells and every cell holds one atom
/// per support point with weight `p_s · S/n`, so `E(X | U) = E(X)` holds
/// exactly. Otherwise `X` is drawn i.i.d. and `U` is stratified on `n` cells.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<(DiscreteSample, GeneratorMetadata)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, s, n_cov) = (spec.n, spec.support.rows(), spec.support.cols());
    let stratified = n % s == 0;
    let mut atoms: Vec<(f64, usize, f64)> = Vec::with_capacity(n);
    let cells = if stratified {
        let cells = n / s;
        for c in 0..cells {
            let u = (c as f64 + 0.5) / cells as f64;
            for (k, p) in spec.probs.iter().enumerate() {
                atoms.push((u, k, p / cells as f64));
            }
        }
        cells
    } else {
        let mut levels: Vec<f64> = (0..n).map(|c| (c as f64 + 0.5) / n as f64).collect();
        levels.shuffle(&mut rng);
        for u in levels {
            let draw: f64 = rng.gen();
            let mut acc = 0.0;
            let k = spec
                .probs
                .iter()
                .position(|p| {
                    acc += p;
                    draw < acc
                })
                .unwrap_or(s - 1);
            atoms.push((u, k, 1.0 / n as f64));
        }
        n
    };
    atoms.shuffle(&mut rng);

    let mut x = Matrix::zeros(n, n_cov);
    let mut y = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    let mut u_out = Vec::with_capacity(n);
    let mut alpha = Vec::with_capacity(n);
    let mut beta = Matrix::zeros(n, n_cov);
    for (j, &(u, k, weight)) in atoms.iter().enumerate() {
        let xs = spec.support.row(k);
        x.row_mut(j).copy_from_slice(xs);
        let noise = match spec.noise {
            NoiseMode::None => 0.0,
            NoiseMode::MeanIndependent { scale } if scale > 0.0 => rng.gen_range(-scale..=scale),
            NoiseMode::MeanIndependent { .. } => 0.0,
        };
        y.push(spec.quantile(u, xs) + noise);
        w.push(weight);
        u_out.push(u);
        alpha.push(spec.alpha_at(u));
        beta.row_mut(j).copy_from_slice(&spec.beta_at(u));
    }
    let sample = center(&DiscreteSample::new(x, Matrix::column(y), Some(w))?);
    let meta = GeneratorMetadata {
        spec: spec.clone(),
        u: u_out,
        alpha,
        beta,
        stratified,
        cells,
        x_mean: sample.x_mean().to_vec(),
    };
    Ok((sample, meta))
}
