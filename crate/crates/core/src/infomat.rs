//! Information matrix `B = Σ x_ℓ v_ℓ v_ℓᵀ` held as a lower Cholesky factor.
//!
//! Values are persistent: update and downdate return a fresh matrix so that
//! concurrent exchange scans can share one base.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::instance::RowVector;
use crate::linalg::DenseMatrix;
use crate::math;

/// Positive-definiteness threshold. A Cholesky pivot is accepted when the
/// squared pivot exceeds `EPS_PSD` times the matching diagonal entry of `B`;
/// a downdate is accepted when `1 − vᵀB⁻¹v > EPS_PSD`.
pub const EPS_PSD: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct InfoMatrix {
    dim: usize,
    /// Row-major `dim × dim`; only the lower triangle is meaningful.
    factor: Vec<f64>,
    ldet: f64,
}

impl InfoMatrix {
    /// `B = Σ mult_k row_k row_kᵀ`, factorized.
    pub fn build(dim: usize, rows: &[RowVector], mults: &[u32]) -> Result<Self> {
        if rows.len() != mults.len() {
            return Err(Error::DimensionMismatch {
                expected: rows.len(),
                got: mults.len(),
            });
        }
        Self::from_weighted_rows(
            dim,
            rows.iter().zip(mults).map(|(r, &k)| (r.as_slice(), f64::from(k))),
        )
    }

    /// `B = Σ w_k row_k row_kᵀ` for real weights.
    pub fn from_weighted_rows<'a, I>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a [f64], f64)>,
    {
        Self::from_matrix(&weighted_gram(dim, rows)?)
    }

    /// Factorizes a symmetric positive-definite matrix.
    pub fn from_matrix(b: &DenseMatrix) -> Result<Self> {
        if !b.is_square() {
            return Err(Error::DimensionMismatch {
                expected: b.rows(),
                got: b.cols(),
            });
        }
        let n = b.rows();
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = b.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0 && d > EPS_PSD * b.get(j, j)) {
                return Err(Error::RankDeficient);
            }
            let ljj = math::sqrt(d);
            l[j * n + j] = ljj;
            for i in (j + 1)..n {
                let mut s = b.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / ljj;
            }
        }
        let mut out = Self {
            dim: n,
            factor: l,
            ldet: 0.0,
        };
        out.refresh_ldet();
        Ok(out)
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_matrix(&DenseMatrix::identity(dim)).expect("identity is positive definite")
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `ldet B`, cached.
    #[inline]
    pub fn ldet(&self) -> f64 {
        self.ldet
    }

    /// Lower-triangular Cholesky factor as a dense matrix.
    pub fn factor(&self) -> DenseMatrix {
        let n = self.dim;
        let mut l = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                l.set(i, j, self.factor[i * n + j]);
            }
        }
        l
    }

    /// `L Lᵀ`
    pub fn reconstruct(&self) -> DenseMatrix {
        let n = self.dim;
        let mut b = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..=j)
                    .map(|k| self.factor[i * n + k] * self.factor[j * n + k])
                    .sum();
                b.set(i, j, s);
                b.set(j, i, s);
            }
        }
        b
    }

    pub fn min_pivot(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.factor[i * self.dim + i])
            .fold(f64::INFINITY, f64::min)
    }

    fn refresh_ldet(&mut self) {
        let n = self.dim;
        self.ldet = 2.0 * (0..n).map(|i| math::ln(self.factor[i * n + i])).sum::<f64>();
    }

    fn check_dim(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Solves `L y = v`.
    pub fn forward_solve(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut y = v.to_vec();
        for i in 0..n {
            let row = &self.factor[i * n..i * n + i];
            let s: f64 = row.iter().zip(&y[..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - s) / self.factor[i * n + i];
        }
        y
    }

    /// Solves `Lᵀ x = y`.
    fn backward_solve(&self, y: &mut [f64]) {
        let n = self.dim;
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.factor[k * n + i] * y[k];
            }
            y[i] = s / self.factor[i * n + i];
        }
    }

    /// `B⁻¹ v`
    pub fn solve(&self, v: &[f64]) -> Vec<f64> {
        let mut y = self.forward_solve(v);
        self.backward_solve(&mut y);
        y
    }

    /// `vᵀ B⁻¹ v` by one triangular solve.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        debug_assert_eq!(v.len(), self.dim);
        let y = self.forward_solve(v);
        y.iter().map(|a| a * a).sum()
    }

    /// Explicit symmetric `B⁻¹`.
    pub fn inverse(&self) -> DenseMatrix {
        let n = self.dim;
        // B⁻¹ = L⁻ᵀ L⁻¹, with L⁻¹ built column by column
        let mut linv = vec![0.0; n * n];
        for c in 0..n {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            let y = self.forward_solve(&e);
            for r in 0..n {
                linv[r * n + c] = y[r];
            }
        }
        let mut out = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (j.max(i)..n).map(|k| linv[k * n + i] * linv[k * n + j]).sum();
                out.set(i, j, s);
                out.set(j, i, s);
            }
        }
        out
    }

    /// Factor of `B + v vᵀ`. `O(m²)` Givens sweep.
    pub fn rank_one_update(&self, v: &[f64]) -> Result<Self> {
        self.check_dim(v)?;
        let mut out = self.clone();
        out.update_in_place(v);
        Ok(out)
    }

    pub(crate) fn update_in_place(&mut self, v: &[f64]) {
        let n = self.dim;
        let mut w = v.to_vec();
        let l = &mut self.factor;
        for j in 0..n {
            let ljj = l[j * n + j];
            let wj = w[j];
            if wj == 0.0 {
                continue;
            }
            let r = math::hypot(ljj, wj);
            let c = r / ljj;
            let s = wj / ljj;
            l[j * n + j] = r;
            for i in (j + 1)..n {
                let lij = (l[i * n + j] + s * w[i]) / c;
                l[i * n + j] = lij;
                w[i] = c * w[i] - s * lij;
            }
        }
        self.refresh_ldet();
    }

    /// Factor of `B − v vᵀ`, or [`Error::Singular`] when
    /// `1 − vᵀB⁻¹v ≤ EPS_PSD`.
    pub fn rank_one_downdate(&self, v: &[f64]) -> Result<Self> {
        self.check_dim(v)?;
        let n = self.dim;
        let mut p = self.forward_solve(v);
        let residual = 1.0 - p.iter().map(|a| a * a).sum::<f64>();
        if !(residual > EPS_PSD) {
            return Err(Error::Singular { residual });
        }
        // Rotate [p; α] onto e_{m+1}, applying the same rotations to the
        // rows of R = Lᵀ stacked over a zero row (LINPACK dchdd).
        let mut alpha = math::sqrt(residual);
        let mut out = self.clone();
        let l = &mut out.factor;
        let mut w = vec![0.0; n];
        for i in (0..n).rev() {
            let b = p[i];
            let r = math::hypot(alpha, b);
            let c = alpha / r;
            let s = b / r;
            alpha = r;
            p[i] = 0.0;
            // row i of R is column i of L
            for k in i..n {
                let rik = l[k * n + i];
                l[k * n + i] = c * rik - s * w[k];
                w[k] = s * rik + c * w[k];
            }
            if !(l[i * n + i] > 0.0) {
                return Err(Error::Singular { residual });
            }
        }
        out.refresh_ldet();
        Ok(out)
    }
}

/// `Σ w_k row_k row_kᵀ` as a dense matrix.
pub fn weighted_gram<'a, I>(dim: usize, rows: I) -> Result<DenseMatrix>
where
    I: IntoIterator<Item = (&'a [f64], f64)>,
{
    let mut b = DenseMatrix::zeros(dim, dim);
    for (row, w) in rows {
        if row.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: row.len(),
            });
        }
        if w != 0.0 {
            b.add_outer(w, row);
        }
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m2(a: f64, b: f64, c: f64, d: f64) -> DenseMatrix {
        DenseMatrix::from_row_major(2, 2, vec![a, b, c, d]).unwrap()
    }

    #[test]
    fn build_small_designs() {
        let rows = [RowVector(vec![1.0, 0.0]), RowVector(vec![1.0, 1.0])];
        let b = InfoMatrix::build(2, &rows, &[1, 1]).unwrap();
        assert!(b.reconstruct().frobenius_distance(&m2(2.0, 1.0, 1.0, 1.0)) < 1e-14);
        assert!(b.ldet().abs() < 1e-15);
        let rank1 = InfoMatrix::build(2, &rows[..1], &[2]);
        assert_eq!(rank1, Err(Error::RankDeficient));
    }

    #[test]
    fn repeated_direction_is_rank_deficient() {
        let rows = [RowVector(vec![1.0, 1.0]), RowVector(vec![2.0, 2.0])];
        assert_eq!(InfoMatrix::build(2, &rows, &[1, 3]), Err(Error::RankDeficient));
    }

    #[test]
    fn ldet_of_identity() {
        assert_eq!(InfoMatrix::identity(5).ldet(), 0.0);
    }

    #[test]
    fn update_examples() {
        let i2 = InfoMatrix::identity(2);
        let up = i2.rank_one_update(&[1.0, 0.0]).unwrap();
        assert!((up.ldet() - core::f64::consts::LN_2).abs() < 1e-15);
        let same = i2.rank_one_update(&[0.0, 0.0]).unwrap();
        assert_eq!(same.ldet(), 0.0);
    }

    #[test]
    fn downdate_examples() {
        let b = InfoMatrix::from_matrix(&m2(2.0, 1.0, 1.0, 1.0)).unwrap();
        assert!(matches!(b.rank_one_downdate(&[1.0, 1.0]), Err(Error::Singular { .. })));

        let b = InfoMatrix::from_matrix(&m2(2.0, 0.0, 0.0, 2.0)).unwrap();
        let d = b.rank_one_downdate(&[1.0, 0.0]).unwrap();
        assert!(d.reconstruct().frobenius_distance(&m2(1.0, 0.0, 0.0, 2.0)) < 1e-15);
        assert!((d.ldet() - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn quad_form_examples() {
        assert_eq!(InfoMatrix::identity(2).quad_form(&[1.0, 1.0]), 2.0);
        let b = InfoMatrix::from_matrix(&m2(1.0, 0.0, 0.0, 2.0)).unwrap();
        assert!((b.quad_form(&[1.0, 1.0]) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn inverse_examples() {
        let b = InfoMatrix::from_matrix(&m2(2.0, 1.0, 1.0, 1.0)).unwrap();
        assert!(b.inverse().frobenius_distance(&m2(1.0, -1.0, -1.0, 2.0)) < 1e-14);
        assert_eq!(InfoMatrix::identity(3).inverse(), DenseMatrix::identity(3));
    }

    #[test]
    fn dimension_mismatch() {
        let b = InfoMatrix::identity(3);
        assert!(b.rank_one_update(&[1.0]).is_err());
        assert!(b.rank_one_downdate(&[1.0]).is_err());
    }
}
