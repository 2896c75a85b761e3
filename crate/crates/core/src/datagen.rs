//! Synthetic designs used by the simulations, and unit-vector pairs for the
//! quadratic-form checks.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{thin_svd, DataMatrix};
use crate::rng::{stream_id, Philox};

const TAG_U: u16 = 101;
const TAG_V: u16 = 102;
const TAG_Y: u16 = 103;
const TAG_ROWS: u16 = 104;
const TAG_CHI: u16 = 105;
const TAG_PAIR: u16 = 106;

/// Which simulated design to build.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseConfig {
    pub case: u8,
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    /// Noise standard deviation for case 2.
    #[serde(default = "default_noise")]
    pub noise_sd: f64,
}

fn default_noise() -> f64 {
    CASE2_NOISE_SD
}

pub const CASE2_NOISE_SD: f64 = 0.01;
/// Middle block coefficient of the case 2 regression vector.
pub const CASE2_T: f64 = 0.1;

impl CaseConfig {
    pub fn new(case: u8, n: usize, p: usize, seed: u64) -> Self {
        Self {
            case,
            n,
            p,
            seed,
            noise_sd: CASE2_NOISE_SD,
        }
    }

    pub fn generate(&self) -> Result<DataMatrix> {
        match self.case {
            1 => gen_case1(self.n, self.p, self.seed),
            2 => gen_case2_with_noise(self.n, self.p, self.seed, self.noise_sd),
            3 => gen_case3(self.n, self.p, self.seed),
            c => Err(Error::InvalidArgument(format!("unknown case {c}; expected 1, 2 or 3"))),
        }
    }
}

fn check_shape(n: usize, p: usize) -> Result<()> {
    if p == 0 || n < p {
        return Err(Error::BadShape(format!("need n >= p >= 1, got n = {n}, p = {p}")));
    }
    Ok(())
}

fn gaussian(rows: usize, cols: usize, seed: u64, tag: u16) -> DMatrix<f64> {
    let mut g = DMatrix::<f64>::zeros(rows, cols);
    for (j, mut col) in g.column_iter_mut().enumerate() {
        let mut rng = Philox::new(seed, stream_id(tag, j as u64));
        col.iter_mut().for_each(|x| *x = StandardNormal.sample(&mut rng));
    }
    g
}

fn uniform_response(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = Philox::new(seed, stream_id(TAG_Y, 0));
    DVector::from_fn(n, |_, _| rng.uniform())
}

/// Uniformly distributed `n x p` matrix with orthonormal columns.
pub fn haar_orthonormal(n: usize, p: usize, seed: u64, tag: u16) -> DMatrix<f64> {
    let qr = gaussian(n, p, seed, tag).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn compose(u: &DMatrix<f64>, l: &[f64], v: &DMatrix<f64>) -> DMatrix<f64> {
    let mut ul = u.clone();
    for (j, mut col) in ul.column_iter_mut().enumerate() {
        col *= l[j];
    }
    ul * v.transpose()
}

/// `X = U diag(1, 1/2, ..., 1/p) V^T` with Haar `U` and `V`; `y ~ Uniform(0, 1)`.
pub fn gen_case1(n: usize, p: usize, seed: u64) -> Result<DataMatrix> {
    check_shape(n, p)?;
    let u = haar_orthonormal(n, p, seed, TAG_U);
    let v = haar_orthonormal(p, p, seed, TAG_V);
    let l: Vec<f64> = (1..=p).map(|k| 1.0 / k as f64).collect();
    DataMatrix::new(compose(&u, &l, &v), Some(uniform_response(n, seed)))
}

/// Regression vector `(1_{0.2p}, t 1_{0.6p}, 1_{0.2p})`.
pub fn case2_coefficients(p: usize) -> DVector<f64> {
    let edge = p / 5;
    DVector::from_fn(p, |i, _| if i < edge || i >= p - edge { 1.0 } else { CASE2_T })
}

/// Singular values equally spaced on `[0.1, 1]`, descending.
pub fn case2_singular_values(p: usize) -> Vec<f64> {
    if p == 1 {
        return vec![1.0];
    }
    (0..p).map(|k| 1.0 - 0.9 * k as f64 / (p - 1) as f64).collect()
}

pub fn gen_case2(n: usize, p: usize, seed: u64) -> Result<DataMatrix> {
    gen_case2_with_noise(n, p, seed, CASE2_NOISE_SD)
}

/// Left singular vectors of a heavy-tailed `t_2(0, C)` sample, `C_ij = 2 * 0.5^|i-j|`,
/// with equally spaced singular values and a Gaussian rotation; `y = X b + noise`.
pub fn gen_case2_with_noise(n: usize, p: usize, seed: u64, noise_sd: f64) -> Result<DataMatrix> {
    check_shape(n, p)?;
    if p % 5 != 0 {
        return Err(Error::BadShape(format!("case 2 needs p divisible by 5, got {p}")));
    }
    let c = DMatrix::from_fn(p, p, |i, j| 2.0 * 0.5f64.powi((i as i32 - j as i32).abs()));
    let chol = c.cholesky().expect("covariance is positive definite").l();
    let z = gaussian(n, p, seed, TAG_ROWS);
    let mut a = z * chol.transpose();
    let mut rng = Philox::new(seed, stream_id(TAG_CHI, 0));
    for mut row in a.row_iter_mut() {
        // chi-square with 2 df is 2 * Exp(1)
        let chi2 = -2.0 * (1.0 - rng.uniform()).ln();
        row /= (chi2 / 2.0).sqrt();
    }
    let u = thin_svd(&a)?.u;
    let v = thin_svd(&gaussian(p, p, seed, TAG_V))?.v;
    let x = compose(&u, &case2_singular_values(p), &v);
    let b = case2_coefficients(p);
    let mut y = &x * &b;
    if noise_sd > 0.0 {
        let mut rng = Philox::new(seed, stream_id(TAG_Y, 1));
        y.iter_mut().for_each(|v| {
            let e: f64 = StandardNormal.sample(&mut rng);
            *v += noise_sd * e
        });
    }
    DataMatrix::new(x, Some(y))
}

/// Two Gaussian row blocks with means 0 and 5, columns standardized; `y ~ Uniform(0, 1)`.
pub fn gen_case3(n: usize, p: usize, seed: u64) -> Result<DataMatrix> {
    check_shape(n, p)?;
    if n < 2 {
        return Err(Error::BadShape("case 3 needs n >= 2".into()));
    }
    let mut x = gaussian(n, p, seed, TAG_ROWS);
    let split = n.div_ceil(2);
    x.rows_mut(split, n - split).add_scalar_mut(5.0);
    standardize_columns(&mut x);
    DataMatrix::new(x, Some(uniform_response(n, seed)))
}

/// Centre each column and scale to unit sample variance (`n - 1` denominator).
fn standardize_columns(x: &mut DMatrix<f64>) {
    let n = x.nrows() as f64;
    for mut col in x.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / (n - 1.0)).sqrt();
        col /= sd;
    }
}

/// How to pick the pair `(a, a~)` for quadratic-form experiments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PairStyle {
    /// Two independent uniformly random unit vectors.
    Delocalized,
    /// `a = a~ = e_1`.
    Localized,
    /// Random unit vectors with `a^T a~ = cos(theta)` exactly.
    Angle(f64),
    /// `(1/2, 1/2, -1/2, -1/2, 0, ...)` and `(-1/2, 1/2, -1/2, 1/2, 0, ...)`.
    SrhtCounterexample,
}

fn random_unit(n: usize, seed: u64, stream: u64) -> DVector<f64> {
    let mut rng = Philox::new(seed, stream_id(TAG_PAIR, stream));
    let v = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    v.normalize()
}

pub fn gen_unit_pair(style: PairStyle, n: usize, seed: u64) -> Result<(DVector<f64>, DVector<f64>)> {
    if n < 2 {
        return Err(Error::BadShape(format!("unit pairs need n >= 2, got {n}")));
    }
    Ok(match style {
        PairStyle::Delocalized => (random_unit(n, seed, 0), random_unit(n, seed, 1)),
        PairStyle::Localized => {
            let e1 = DVector::from_fn(n, |i, _| (i == 0) as u8 as f64);
            (e1.clone(), e1)
        }
        PairStyle::Angle(theta) => {
            let a = random_unit(n, seed, 0);
            let w = random_unit(n, seed, 1);
            // component of w orthogonal to a
            let perp = (&w - &a * a.dot(&w)).normalize();
            let b = &a * theta.cos() + perp * theta.sin();
            (a, b)
        }
        PairStyle::SrhtCounterexample => {
            if n < 4 {
                return Err(Error::BadShape("the counterexample needs n >= 4".into()));
            }
            let mut a = DVector::zeros(n);
            let mut b = DVector::zeros(n);
            a.rows_mut(0, 4).copy_from_slice(&[0.5, 0.5, -0.5, -0.5]);
            b.rows_mut(0, 4).copy_from_slice(&[-0.5, 0.5, -0.5, 0.5]);
            (a, b)
        }
    })
}
