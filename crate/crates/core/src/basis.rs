//! Orthogonal polynomial expansions of exposure columns.
//!
//! Each exposure column is standardised, expanded into monomials
//! `u, u^2, ..., u^M` and orthogonalised against the constant and all lower
//! degrees by modified Gram–Schmidt. The resulting triangular monomial
//! coefficients are frozen, so the same functions can be evaluated at shifted
//! (counterfactual) exposures without re-fitting.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalisation of the basis columns on the training sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisScaling {
    /// Columns have unit Euclidean norm (`Phi' Phi = I`).
    #[default]
    UnitNorm,
    /// Columns have unit variance (`Phi' Phi = N I`), so coefficients are on
    /// the scale of a standardised exposure regardless of sample size.
    UnitVariance,
}

/// Orthogonal polynomials for a single exposure column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnBasis {
    pub center: f64,
    pub spread: f64,
    /// `coefs[m - 1][k]` multiplies `u^k` in the degree-`m` polynomial, where
    /// `u = (value - center) / spread`.
    pub coefs: Vec<Vec<f64>>,
}

impl ColumnBasis {
    fn eval_into(&self, value: f64, out: &mut [f64]) {
        let u = (value - self.center) / self.spread;
        for (slot, c) in out.iter_mut().zip(&self.coefs) {
            *slot = c.iter().rev().fold(0.0, |acc, &ck| acc * u + ck);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub degree: usize,
    pub scaling: BasisScaling,
    /// Rows of the sample the basis was fitted on.
    pub n_train: usize,
    pub columns: Vec<ColumnBasis>,
}

impl BasisSpec {
    pub fn q(&self) -> usize {
        self.columns.len()
    }

    /// Number of design columns, `q * M`.
    pub fn width(&self) -> usize {
        self.q() * self.degree
    }

    /// Evaluates all basis functions at one exposure vector into `out`
    /// (length `q * M`, exposure-major).
    pub fn eval_point_into(&self, point: &[f64], out: &mut [f64]) -> Result<()> {
        if point.len() != self.q() || out.len() != self.width() {
            return Err(Error::DimensionMismatch(format!(
                "basis over {} exposures of degree {} cannot evaluate a point of length {} into {} slots",
                self.q(),
                self.degree,
                point.len(),
                out.len()
            )));
        }
        for (j, col) in self.columns.iter().enumerate() {
            col.eval_into(point[j], &mut out[j * self.degree..(j + 1) * self.degree]);
        }
        Ok(())
    }

    pub fn eval_point(&self, point: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.width()];
        self.eval_point_into(point, &mut out)?;
        Ok(out)
    }

    /// Evaluates the frozen basis at every row of `values` (`m x q`),
    /// returning an `m x (q M)` design.
    pub fn eval(&self, values: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if values.ncols() != self.q() {
            return Err(Error::DimensionMismatch(format!(
                "basis fitted on {} exposures, got {} columns",
                self.q(),
                values.ncols()
            )));
        }
        let m = self.degree;
        let mut out = DMatrix::zeros(values.nrows(), self.width());
        let mut buf = vec![0.0; m];
        for (j, col) in self.columns.iter().enumerate() {
            for i in 0..values.nrows() {
                col.eval_into(values[(i, j)], &mut buf);
                for k in 0..m {
                    out[(i, j * m + k)] = buf[k];
                }
            }
        }
        Ok(out)
    }
}

/// Fits a unit-norm basis of degree `degree` to each column of `values`.
pub fn fit_basis(values: &DMatrix<f64>, degree: usize) -> Result<BasisSpec> {
    fit_basis_scaled(values, degree, BasisScaling::UnitNorm)
}

pub fn fit_basis_scaled(
    values: &DMatrix<f64>,
    degree: usize,
    scaling: BasisScaling,
) -> Result<BasisSpec> {
    fit_basis_with_design(values, degree, scaling).map(|(spec, _)| spec)
}

/// Fits one basis to the rows of `w` and `g` stacked, so home and
/// neighbourhood exposures are expanded by the same functions.
pub fn fit_stacked_basis(
    w: &DMatrix<f64>,
    g: &DMatrix<f64>,
    degree: usize,
    scaling: BasisScaling,
) -> Result<BasisSpec> {
    if w.ncols() != g.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "W has {} columns, G has {}",
            w.ncols(),
            g.ncols()
        )));
    }
    let (nw, ng) = (w.nrows(), g.nrows());
    let mut stacked = DMatrix::zeros(nw + ng, w.ncols());
    stacked.rows_mut(0, nw).copy_from(w);
    stacked.rows_mut(nw, ng).copy_from(g);
    fit_basis_scaled(&stacked, degree, scaling)
}

/// Fits the basis and also returns the orthogonalised training design
/// produced directly by Gram–Schmidt.
pub fn fit_basis_with_design(
    values: &DMatrix<f64>,
    degree: usize,
    scaling: BasisScaling,
) -> Result<(BasisSpec, DMatrix<f64>)> {
    let n = values.nrows();
    if degree == 0 {
        return Err(Error::Config("basis degree must be at least 1".into()));
    }
    if n <= degree {
        return Err(Error::Config(format!(
            "need more than {degree} rows to fit a degree-{degree} basis, got {n}"
        )));
    }
    let factor = match scaling {
        BasisScaling::UnitNorm => 1.0,
        BasisScaling::UnitVariance => (n as f64).sqrt(),
    };
    let mut columns = Vec::with_capacity(values.ncols());
    let mut design = DMatrix::zeros(n, values.ncols() * degree);
    for j in 0..values.ncols() {
        let col: Vec<f64> = values.column(j).iter().copied().collect();
        let (basis, q) = fit_column(&col, degree).ok_or(Error::DegenerateColumn(j))?;
        for (m, qm) in q.iter().enumerate() {
            design.column_mut(j * degree + m).copy_from(&(qm * factor));
        }
        columns.push(ColumnBasis {
            coefs: basis
                .coefs
                .into_iter()
                .map(|c| c.into_iter().map(|v| v * factor).collect())
                .collect(),
            ..basis
        });
    }
    Ok((
        BasisSpec {
            degree,
            scaling,
            n_train: n,
            columns,
        },
        design,
    ))
}

/// Unit-norm orthogonal polynomials for one column, or `None` when the column
/// has too few distinct values.
fn fit_column(values: &[f64], degree: usize) -> Option<(ColumnBasis, Vec<DVector<f64>>)> {
    let n = values.len();
    let nf = n as f64;
    let center = values.iter().sum::<f64>() / nf;
    let spread = (values.iter().map(|v| (v - center).powi(2)).sum::<f64>() / nf).sqrt();
    if !(spread > 1e-12 * (1.0 + center.abs())) {
        return None;
    }
    let u = DVector::from_iterator(n, values.iter().map(|v| (v - center) / spread));

    // orthonormal vectors and their monomial coefficients, constant first
    let mut qs: Vec<DVector<f64>> = vec![DVector::from_element(n, 1.0 / nf.sqrt())];
    let mut cs: Vec<Vec<f64>> = vec![{
        let mut c = vec![0.0; degree + 1];
        c[0] = 1.0 / nf.sqrt();
        c
    }];
    for m in 1..=degree {
        let mut v = u.map(|x| x.powi(m as i32));
        let mut c = vec![0.0; degree + 1];
        c[m] = 1.0;
        let raw_norm = v.norm();
        // two Gram–Schmidt passes
        for _ in 0..2 {
            for (qk, ck) in qs.iter().zip(&cs) {
                let proj = qk.dot(&v);
                v.axpy(-proj, qk, 1.0);
                for (a, b) in c.iter_mut().zip(ck) {
                    *a -= proj * b;
                }
            }
        }
        let norm = v.norm();
        if !(norm > 1e-9 * raw_norm) {
            return None;
        }
        v /= norm;
        c.iter_mut().for_each(|a| *a /= norm);
        qs.push(v);
        cs.push(c);
    }
    qs.remove(0);
    cs.remove(0);
    Some((ColumnBasis { center, spread, coefs: cs }, qs))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn symmetric_grid_degree_two() {
        let grid: Vec<f64> = (0..21).map(|i| -1.0 + 0.1 * i as f64).collect();
        let (spec, phi) = fit_basis_with_design(&column(&grid), 2, BasisScaling::UnitNorm).unwrap();
        assert_eq!(spec.width(), 2);
        assert!(phi.column(0).dot(&phi.column(1)).abs() < 1e-10);
        // linear column is proportional to the centred grid
        let lin = phi.column(0);
        let ratio = lin[20] / grid[20];
        for i in 0..21 {
            assert!((lin[i] - ratio * grid[i]).abs() < 1e-12);
        }
        // quadratic column is proportional to x^2 - mean(x^2)
        let m2 = grid.iter().map(|x| x * x).sum::<f64>() / 21.0;
        let quad = phi.column(1);
        let r = quad[0] / (grid[0] * grid[0] - m2);
        for i in 0..21 {
            assert!((quad[i] - r * (grid[i] * grid[i] - m2)).abs() < 1e-12);
        }
    }

    #[test]
    fn orthonormal_on_training_sample() {
        let vals = DMatrix::from_fn(50, 3, |i, j| ((i * 7 + j * 13) % 17) as f64 + 0.1 * j as f64);
        for scaling in [BasisScaling::UnitNorm, BasisScaling::UnitVariance] {
            let (spec, phi) = fit_basis_with_design(&vals, 3, scaling).unwrap();
            let target = match scaling {
                BasisScaling::UnitNorm => 1.0,
                BasisScaling::UnitVariance => 50.0,
            };
            for j in 0..3 {
                let block = phi.columns(j * 3, 3);
                let gram = block.tr_mul(&block) / target;
                assert!((gram - DMatrix::identity(3, 3)).abs().max() < 1e-8);
                for c in 0..3 {
                    assert!(block.column(c).sum().abs() < 1e-8);
                }
            }
            let evald = spec.eval(&vals).unwrap();
            assert!((evald - &phi).abs().max() < 1e-12 * target.sqrt().max(1.0) * 10.0);
        }
    }

    #[test]
    fn degenerate_columns() {
        let vals = DMatrix::from_fn(10, 2, |i, j| if j == 1 { 4.0 } else { i as f64 });
        assert!(matches!(fit_basis(&vals, 3), Err(Error::DegenerateColumn(1))));
        // two distinct values cannot support a cubic
        let vals = DMatrix::from_fn(10, 1, |i, _| (i % 2) as f64);
        assert!(matches!(fit_basis(&vals, 3), Err(Error::DegenerateColumn(0))));
        assert!(fit_basis(&DMatrix::from_fn(3, 1, |i, _| i as f64), 3).is_err());
    }

    #[test]
    fn point_and_matrix_evaluation_agree() {
        let vals = DMatrix::from_fn(40, 2, |i, j| (i as f64 * 0.37 + j as f64).sin());
        let spec = fit_basis(&vals, 3).unwrap();
        let phi = spec.eval(&vals).unwrap();
        for i in [0, 7, 39] {
            let row = spec.eval_point(&[vals[(i, 0)], vals[(i, 1)]]).unwrap();
            for k in 0..6 {
                assert_eq!(row[k], phi[(i, k)]);
            }
        }
        assert!(spec.eval(&DMatrix::zeros(2, 3)).is_err());
        assert!(spec.eval_point(&[0.0]).is_err());
    }

    #[test]
    fn spec_round_trips_through_json() {
        let vals = DMatrix::from_fn(30, 2, |i, j| (i as f64).powf(1.0 + 0.2 * j as f64));
        let spec = fit_basis_scaled(&vals, 3, BasisScaling::UnitVariance).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        let back: BasisSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }
}
