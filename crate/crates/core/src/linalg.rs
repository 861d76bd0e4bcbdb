//! Small dense complex matrices and a Householder QR solver.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Ratio of smallest to largest `|R_ii|` below which a system is rejected as singular.
pub const SINGULAR_RATIO: f64 = 1e-10;

/// Row-major complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("ragged matrix rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn matmul(&self, rhs: &CMatrix) -> Result<CMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::InvalidArgument(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                for c in 0..rhs.cols {
                    out[(r, c)] += a * rhs[(k, c)];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if self.cols != v.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot multiply {}x{} by a vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;

    fn index(&self, (r, c): (usize, usize)) -> &Complex64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Solves `a·x = b` in the least-squares sense via Householder QR and back-substitution.
///
/// `a` must have at least as many rows as columns. Fails with
/// [`Error::Singular`] when `min |R_ii| < SINGULAR_RATIO · max |R_ii|`.
pub fn qr_solve(a: &CMatrix, b: &[Complex64]) -> Result<Vec<Complex64>> {
    let (m, n) = (a.rows(), a.cols());
    if m < n {
        return Err(Error::Underdetermined { rows: m, cols: n });
    }
    if b.len() != m {
        return Err(Error::InvalidArgument(format!(
            "right-hand side has length {}, expected {m}",
            b.len()
        )));
    }
    let mut r = a.clone();
    let mut rhs = b.to_vec();

    for k in 0..n {
        let norm = (k..m).map(|i| r[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let x0 = r[(k, k)];
        // alpha = -e^{i·arg(x0)}·‖x‖ avoids cancellation in x0 - alpha
        let phase = if x0.norm() == 0.0 {
            Complex64::new(1.0, 0.0)
        } else {
            x0 / x0.norm()
        };
        let alpha = -phase * norm;

        let mut v: Vec<Complex64> = (k..m).map(|i| r[(i, k)]).collect();
        v[0] -= alpha;
        let v_norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if v_norm == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|z| *z /= v_norm);

        // H = I - 2·v·v^H applied to the trailing block and the rhs
        for c in k..n {
            let dot: Complex64 = v.iter().enumerate().map(|(i, vi)| vi.conj() * r[(k + i, c)]).sum();
            for (i, vi) in v.iter().enumerate() {
                r[(k + i, c)] -= 2.0 * vi * dot;
            }
        }
        let dot: Complex64 = v.iter().enumerate().map(|(i, vi)| vi.conj() * rhs[k + i]).sum();
        for (i, vi) in v.iter().enumerate() {
            rhs[k + i] -= 2.0 * vi * dot;
        }
    }

    let diag: Vec<f64> = (0..n).map(|i| r[(i, i)].norm()).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    let min = diag.iter().copied().fold(f64::INFINITY, f64::min);
    if n > 0 && (max == 0.0 || min < SINGULAR_RATIO * max) {
        let ratio = if max == 0.0 { 0.0 } else { min / max };
        return Err(Error::Singular { ratio });
    }

    let mut x = vec![Complex64::new(0.0, 0.0); n];
    for i in (0..n).rev() {
        let tail: Complex64 = (i + 1..n).map(|c| r[(i, c)] * x[c]).sum();
        x[i] = (rhs[i] - tail) / r[(i, i)];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn hermitian_examples() {
        let d = CMatrix::from_rows(&[vec![c(2.0, 0.0), c(0.0, 0.0)], vec![c(0.0, 0.0), c(-1.0, 0.0)]])
            .unwrap();
        assert_eq!(d.hermitian(), d);
        let j = CMatrix::from_rows(&[vec![c(0.0, 1.0)]]).unwrap();
        assert_eq!(j.hermitian()[(0, 0)], c(0.0, -1.0));
        let a = CMatrix::from_fn(8, 3, |r, k| c(r as f64 - 1.5, (k * r) as f64 * 0.25));
        assert_eq!(a.hermitian().hermitian(), a);
        assert_eq!(a.hermitian().rows(), 3);
    }

    #[test]
    fn qr_solves_square_system() {
        let a = CMatrix::from_rows(&[
            vec![c(4.0, 1.0), c(1.0, 0.0), c(0.0, -2.0)],
            vec![c(1.0, 0.0), c(3.0, 0.0), c(1.0, 1.0)],
            vec![c(0.0, 2.0), c(1.0, -1.0), c(5.0, 0.0)],
        ])
        .unwrap();
        let x_true = vec![c(1.0, -1.0), c(0.5, 2.0), c(-3.0, 0.25)];
        let b = a.matvec(&x_true).unwrap();
        let x = qr_solve(&a, &b).unwrap();
        for (got, want) in x.iter().zip(&x_true) {
            assert!((got - want).norm() < 1e-12);
        }
    }

    #[test]
    fn qr_detects_singular() {
        let a = CMatrix::from_rows(&[vec![c(1.0, 0.0), c(1.0, 0.0)], vec![c(1.0, 0.0), c(1.0, 0.0)]])
            .unwrap();
        assert!(matches!(qr_solve(&a, &[c(1.0, 0.0), c(1.0, 0.0)]), Err(Error::Singular { .. })));
        let zero = CMatrix::zeros(2, 2);
        assert!(matches!(qr_solve(&zero, &[c(0.0, 0.0); 2]), Err(Error::Singular { .. })));
    }

    #[test]
    fn qr_rejects_wide() {
        let a = CMatrix::zeros(1, 2);
        assert!(matches!(qr_solve(&a, &[c(0.0, 0.0)]), Err(Error::Underdetermined { .. })));
    }

    #[test]
    fn matmul_shape_mismatch() {
        assert!(CMatrix::zeros(2, 3).matmul(&CMatrix::zeros(2, 3)).is_err());
        assert!(CMatrix::zeros(2, 3).matvec(&[c(0.0, 0.0); 2]).is_err());
    }
}
