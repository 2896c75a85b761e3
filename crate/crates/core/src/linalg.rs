//! Dense linear algebra shared by the inference paths.
//!
//! Everything here is deterministic. Factorizations follow one sign
//! convention: the first coordinate of every right singular vector or
//! eigenvector whose magnitude exceeds [`SIGN_THRESHOLD`] is positive.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};

/// Relative singular value floor below which a matrix is treated as rank deficient.
pub const RANK_TOL: f64 = 1e-10;
/// Magnitude a coordinate must exceed to count as "first nonzero" in the sign convention.
pub const SIGN_THRESHOLD: f64 = 1e-12;
/// Relative asymmetry tolerated by [`sym_eig`].
pub const SYMMETRY_TOL: f64 = 1e-10;

/// An `n x p` design matrix with an optional response vector.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix {
    x: DMatrix<f64>,
    y: Option<DVector<f64>>,
}

impl DataMatrix {
    pub fn new(x: DMatrix<f64>, y: Option<DVector<f64>>) -> Result<Self> {
        let (n, p) = x.shape();
        if p == 0 || n < p {
            return Err(Error::BadShape(format!("need n >= p >= 1, got {n}x{p}")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "design matrix" });
        }
        if let Some(y) = &y {
            if y.len() != n {
                return Err(Error::BadShape(format!(
                    "response has length {}, expected {n}",
                    y.len()
                )));
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what: "response" });
            }
        }
        Ok(Self { x, y })
    }

    /// Build from row-major data.
    pub fn from_rows(n: usize, p: usize, rows: &[f64], y: Option<Vec<f64>>) -> Result<Self> {
        if rows.len() != n * p {
            return Err(Error::BadShape(format!(
                "{} values do not fill a {n}x{p} matrix",
                rows.len()
            )));
        }
        Self::new(
            DMatrix::from_row_slice(n, p, rows),
            y.map(DVector::from_vec),
        )
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> Option<&DVector<f64>> {
        self.y.as_ref()
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn without_response(&self) -> Self {
        Self {
            x: self.x.clone(),
            y: None,
        }
    }

    pub fn with_response(&self, y: DVector<f64>) -> Result<Self> {
        Self::new(self.x.clone(), Some(y))
    }

    /// `X^T y`, computed from the full data.
    pub fn xty(&self) -> Option<DVector<f64>> {
        self.y.as_ref().map(|y| self.x.tr_mul(y))
    }
}

/// Thin SVD `X = U diag(L) V^T` with descending singular values.
#[derive(Clone, Debug)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl ThinSvd {
    /// Indices `i` with `l_i - l_{i+1} <= rel_tol * l_1`.
    pub fn ties(&self, rel_tol: f64) -> Vec<usize> {
        let s = &self.singular_values;
        let top = s[0].abs();
        (0..s.len().saturating_sub(1))
            .filter(|&i| s[i] - s[i + 1] <= rel_tol * top)
            .collect()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, mut col) in us.column_iter_mut().enumerate() {
            col *= self.singular_values[j];
        }
        us * self.v.transpose()
    }
}

/// Symmetric eigendecomposition with descending eigenvalues.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub lambdas: DVector<f64>,
    /// Eigenvectors stored as columns.
    pub vectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= self.lambdas[j];
        }
        scaled * self.vectors.transpose()
    }

    /// Smallest relative gap between eigenvalue `i` and any other eigenvalue.
    pub fn relative_gap(&self, i: usize) -> f64 {
        relative_gap(self.lambdas.as_slice(), i)
    }
}

pub(crate) fn relative_gap(lambdas: &[f64], i: usize) -> f64 {
    let li = lambdas[i];
    lambdas
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != i)
        .map(|(_, &lk)| {
            let scale = li.abs().max(lk.abs());
            if scale == 0.0 {
                0.0
            } else {
                (li - lk).abs() / scale
            }
        })
        .fold(f64::INFINITY, f64::min)
}

fn ensure_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what })
    }
}

/// Flip the sign of column `j` of `v` (and of `u`, if given) so the first
/// coordinate above [`SIGN_THRESHOLD`] is positive.
pub(crate) fn normalize_signs(v: &mut DMatrix<f64>, mut u: Option<&mut DMatrix<f64>>) {
    for j in 0..v.ncols() {
        let lead = v.column(j).iter().copied().find(|x| x.abs() > SIGN_THRESHOLD);
        if matches!(lead, Some(x) if x < 0.0) {
            v.column_mut(j).neg_mut();
            if let Some(u) = u.as_deref_mut() {
                u.column_mut(j).neg_mut();
            }
        }
    }
}

/// Singular values of a small square (typically triangular) matrix, descending.
fn singular_values_of(r: &DMatrix<f64>) -> DVector<f64> {
    let mut s = r.clone().singular_values();
    s.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    s
}

fn rank_check(s: &DVector<f64>) -> Result<()> {
    let top = s[0];
    let bottom = s[s.len() - 1];
    if top <= 0.0 || bottom <= RANK_TOL * top {
        let ratio = if top > 0.0 { bottom / top } else { 0.0 };
        return Err(Error::RankDeficient { ratio });
    }
    Ok(())
}

/// Thin SVD via Householder QR followed by an SVD of the `p x p` triangle.
pub fn thin_svd(x: &DMatrix<f64>) -> Result<ThinSvd> {
    let (n, p) = x.shape();
    if p == 0 || n < p {
        return Err(Error::BadShape(format!("thin SVD needs n >= p >= 1, got {n}x{p}")));
    }
    ensure_finite(x, "matrix passed to thin_svd")?;
    let qr = x.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let svd = SVD::new(r, true, true);
    let ur = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let s = svd.singular_values;

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let singular_values = DVector::from_iterator(p, order.iter().map(|&k| s[k]));
    rank_check(&singular_values)?;

    let ur_sorted = DMatrix::from_fn(p, p, |i, j| ur[(i, order[j])]);
    let mut v = DMatrix::from_fn(p, p, |i, j| vt[(order[j], i)]);
    let mut u = q * ur_sorted;
    normalize_signs(&mut v, Some(&mut u));
    Ok(ThinSvd {
        u,
        singular_values,
        v,
    })
}

/// Eigendecomposition of a symmetric matrix.
///
/// The input is symmetrized as `(A + A^T) / 2` before factorization, so the
/// output is invariant under that operation.
pub fn sym_eig(a: &DMatrix<f64>) -> Result<EigenDecomposition> {
    let (r, c) = a.shape();
    if r != c || r == 0 {
        return Err(Error::BadShape(format!("sym_eig needs a square matrix, got {r}x{c}")));
    }
    ensure_finite(a, "matrix passed to sym_eig")?;
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let asymmetry = (a - a.transpose()).amax();
    if asymmetry > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { asymmetry });
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let lambdas = DVector::from_iterator(r, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::from_fn(r, r, |i, j| eig.eigenvectors[(i, order[j])]);
    normalize_signs(&mut vectors, None);
    Ok(EigenDecomposition { lambdas, vectors })
}

/// Cholesky-like factor of a Gram matrix `X^T X = R^T R` obtained by QR of `X`.
///
/// Avoids forming `X^T X` explicitly, which would square the condition number.
#[derive(Clone, Debug)]
pub struct GramFactor {
    r: DMatrix<f64>,
}

impl GramFactor {
    pub fn new(x: &DMatrix<f64>) -> Result<Self> {
        let (n, p) = x.shape();
        if p == 0 || n < p {
            return Err(Error::RankDeficient { ratio: 0.0 });
        }
        ensure_finite(x, "sketched matrix")?;
        let r = x.clone().qr().r();
        rank_check(&singular_values_of(&r))?;
        Ok(Self { r })
    }

    pub fn p(&self) -> usize {
        self.r.nrows()
    }

    /// Solve `(X^T X) z = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let w = self
            .r
            .tr_solve_upper_triangular(b)
            .expect("R is nonsingular after the rank check");
        self.r
            .solve_upper_triangular(&w)
            .expect("R is nonsingular after the rank check")
    }

    /// `(X^T X)^{-1}`, symmetrized.
    pub fn inverse(&self) -> DMatrix<f64> {
        let p = self.p();
        let rinv = self
            .r
            .solve_upper_triangular(&DMatrix::identity(p, p))
            .expect("R is nonsingular after the rank check");
        let inv = &rinv * rinv.transpose();
        (&inv + inv.transpose()) * 0.5
    }
}

/// Least-squares solution of `min ||y - X b||` by Householder QR.
pub fn solve_ls(data: &DataMatrix) -> Result<DVector<f64>> {
    let y = data
        .y()
        .ok_or_else(|| Error::InvalidArgument("least squares needs a response vector".into()))?;
    solve_ls_parts(data.x(), y)
}

pub(crate) fn solve_ls_parts(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::BadShape(format!("response length {} != {n}", y.len())));
    }
    if p == 0 || n < p {
        return Err(Error::RankDeficient { ratio: 0.0 });
    }
    ensure_finite(x, "design matrix")?;
    let qr = x.clone().qr();
    let r = qr.r();
    rank_check(&singular_values_of(&r))?;
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let rhs = qty.rows(0, p).into_owned();
    Ok(r
        .solve_upper_triangular(&rhs)
        .expect("R is nonsingular after the rank check"))
}

/// Max-abs deviation of `U^T U` from the identity.
pub fn orthonormality_defect(u: &DMatrix<f64>) -> f64 {
    let p = u.ncols();
    (u.tr_mul(u) - DMatrix::<f64>::identity(p, p)).amax()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_random(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        // cheap LCG; these tests only need generic full-rank matrices
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        DMatrix::from_fn(n, p, |_, _| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        })
    }

    #[test]
    fn identity_svd() {
        let svd = thin_svd(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(svd.singular_values.as_slice(), &[1.0, 1.0, 1.0]);
        assert!((svd.u.abs() - DMatrix::<f64>::identity(3, 3)).amax() < 1e-12);
        assert!((svd.v.abs() - DMatrix::<f64>::identity(3, 3)).amax() < 1e-12);
        assert_eq!(svd.ties(1e-10), vec![0, 1]);
    }

    #[test]
    fn svd_reconstructs_random_matrix() {
        let x = small_random(6, 3, 11);
        let svd = thin_svd(&x).unwrap();
        let l1 = svd.singular_values[0];
        assert!((svd.reconstruct() - &x).amax() <= 1e-8 * l1);
        assert!(orthonormality_defect(&svd.u) <= 1e-10);
        assert!(orthonormality_defect(&svd.v) <= 1e-10);
        for j in 0..3 {
            let lead = svd.v.column(j).iter().copied().find(|v| v.abs() > SIGN_THRESHOLD).unwrap();
            assert!(lead > 0.0);
        }
        assert!(svd.singular_values[0] >= svd.singular_values[1]);
        assert!(svd.singular_values[1] >= svd.singular_values[2]);
    }

    #[test]
    fn svd_rejects_rank_deficient_and_nan() {
        let mut x = small_random(5, 2, 3);
        let c0 = x.column(0).into_owned();
        x.set_column(1, &(c0 * 2.0));
        assert!(matches!(thin_svd(&x), Err(Error::RankDeficient { .. })));
        let mut y = small_random(5, 2, 4);
        y[(2, 1)] = f64::NAN;
        assert!(matches!(thin_svd(&y), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn diagonal_eig() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0, 2.0]));
        let e = sym_eig(&a).unwrap();
        assert_eq!(e.lambdas.as_slice(), &[3.0, 2.0, 1.0]);
        let expected = DMatrix::from_row_slice(3, 3, &[0., 0., 1., 1., 0., 0., 0., 1., 0.]);
        assert!((e.vectors - expected).amax() < 1e-14);
    }

    #[test]
    fn rank_one_eig_sign() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let v = DVector::from_vec(vec![s, s]);
        let a = &v * v.transpose();
        let e = sym_eig(&a).unwrap();
        assert!((e.lambdas[0] - 1.0).abs() < 1e-14);
        assert!((e.vectors[(0, 0)] - s).abs() < 1e-14);
        assert!((e.vectors[(1, 0)] - s).abs() < 1e-14);
    }

    #[test]
    fn eig_rejects_asymmetric() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(sym_eig(&a), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn eig_invariant_under_symmetrization() {
        let x = small_random(8, 4, 5);
        let mut a = x.tr_mul(&x);
        a[(0, 1)] += 1e-13;
        let e1 = sym_eig(&a).unwrap();
        let e2 = sym_eig(&((&a + a.transpose()) * 0.5)).unwrap();
        assert_eq!(e1.lambdas, e2.lambdas);
        assert_eq!(e1.vectors, e2.vectors);
        let l1 = e1.lambdas[0].abs();
        assert!((e1.reconstruct() - &a).amax() <= 1e-8 * l1);
    }

    #[test]
    fn svd_and_eig_agree() {
        let x = small_random(20, 4, 9);
        let svd = thin_svd(&x).unwrap();
        let e = sym_eig(&x.tr_mul(&x)).unwrap();
        for i in 0..4 {
            let l2 = svd.singular_values[i].powi(2);
            assert!((e.lambdas[i] - l2).abs() <= 1e-8 * l2);
        }
        assert!((e.vectors - &svd.v).amax() < 1e-8);
    }

    #[test]
    fn ls_identity_and_hand_example() {
        let d = DataMatrix::new(DMatrix::identity(2, 2), Some(DVector::from_vec(vec![3.0, -1.0])))
            .unwrap();
        let b = solve_ls(&d).unwrap();
        assert!((b[0] - 3.0).abs() < 1e-14 && (b[1] + 1.0).abs() < 1e-14);

        // normal equations: [[2,0],[0,1]] b = [4,5]
        let d = DataMatrix::from_rows(3, 2, &[1., 0., 1., 0., 0., 1.], Some(vec![1., 3., 5.]))
            .unwrap();
        let b = solve_ls(&d).unwrap();
        assert!((b[0] - 2.0).abs() < 1e-12 && (b[1] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn ls_matches_svd_route() {
        let x = small_random(30, 3, 21);
        let y = DVector::from_fn(30, |i, _| (i as f64).sin());
        let d = DataMatrix::new(x.clone(), Some(y.clone())).unwrap();
        let b = solve_ls(&d).unwrap();
        let svd = thin_svd(&x).unwrap();
        let mut uty = svd.u.tr_mul(&y);
        for i in 0..3 {
            uty[i] /= svd.singular_values[i];
        }
        let b2 = &svd.v * uty;
        assert!((&b - &b2).norm() <= 1e-8 * b2.norm());
        let grad = x.tr_mul(&(&y - &x * &b));
        assert!(grad.norm() <= 1e-8 * x.tr_mul(&y).norm());
    }

    #[test]
    fn gram_factor_inverse() {
        let x = small_random(10, 3, 2);
        let g = GramFactor::new(&x).unwrap();
        let prod = g.inverse() * x.tr_mul(&x);
        assert!((prod - DMatrix::<f64>::identity(3, 3)).amax() < 1e-10);
    }

    #[test]
    fn data_matrix_validation() {
        assert!(DataMatrix::from_rows(1, 2, &[1.0, 2.0], None).is_err());
        assert!(DataMatrix::from_rows(2, 1, &[1.0, f64::INFINITY], None).is_err());
        assert!(DataMatrix::from_rows(2, 1, &[1.0, 2.0], Some(vec![1.0])).is_err());
    }
}
