//! Mobility weights and neighbourhood exposures.
//!
//! A raw time matrix `T` (row `i` = residents of region `i`, column `j` =
//! destination) is turned into the home-time fraction
//! `tau_i = T_ii / sum_k T_ik` and the away-time shares
//! `alpha_ij = T_ij / sum_{k != i} T_ik` (zero diagonal). The neighbourhood
//! exposure of region `i` is `G_i = sum_j alpha_ij W_j`.
//!
//! Regions with no away time are *isolated*: `tau_i = 1`, their `alpha` row
//! is zero and so is their `G` row.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Above this many regions `alpha` is stored row-compressed.
pub const DENSE_LIMIT: usize = 5000;

/// Tolerance on the row-stochastic property of `alpha`.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityMatrix {
    t: DMatrix<f64>,
}

impl MobilityMatrix {
    pub fn new(t: DMatrix<f64>) -> Result<Self> {
        if t.nrows() != t.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "mobility matrix must be square, got {}x{}",
                t.nrows(),
                t.ncols()
            )));
        }
        for i in 0..t.nrows() {
            for j in 0..t.ncols() {
                let v = t[(i, j)];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvariantViolation(format!(
                        "mobility entry at row {}, column {} is {v}; entries must be finite and >= 0",
                        i + 1,
                        j + 1
                    )));
                }
            }
            if t.row(i).sum() <= 0.0 {
                return Err(Error::ZeroRowSum(i));
            }
        }
        Ok(MobilityMatrix { t })
    }

    pub fn n(&self) -> usize {
        self.t.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.t
    }
}

/// Row-compressed sparse matrix; only what `alpha` needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_rows(n: usize, rows: &[Vec<(usize, f64)>]) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for &(j, v) in row {
                if v != 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix { n, row_ptr, cols, vals }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AlphaMatrix {
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix),
}

impl AlphaMatrix {
    /// Builds from per-row `(column, weight)` lists, choosing the storage by size.
    pub fn from_rows(n: usize, rows: &[Vec<(usize, f64)>]) -> Self {
        if n <= DENSE_LIMIT {
            let mut a = DMatrix::zeros(n, n);
            for (i, row) in rows.iter().enumerate() {
                for &(j, v) in row {
                    a[(i, j)] = v;
                }
            }
            AlphaMatrix::Dense(a)
        } else {
            AlphaMatrix::Sparse(CsrMatrix::from_rows(n, rows))
        }
    }

    pub fn n(&self) -> usize {
        match self {
            AlphaMatrix::Dense(a) => a.nrows(),
            AlphaMatrix::Sparse(s) => s.n,
        }
    }

    /// Non-zero entries of row `i`.
    pub fn row(&self, i: usize) -> Vec<(usize, f64)> {
        match self {
            AlphaMatrix::Dense(a) => a
                .row(i)
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(j, v)| (j, *v))
                .collect(),
            AlphaMatrix::Sparse(s) => s.row(i).collect(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            AlphaMatrix::Dense(a) => a[(i, j)],
            AlphaMatrix::Sparse(s) => s.row(i).find(|(c, _)| *c == j).map_or(0.0, |(_, v)| v),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            AlphaMatrix::Dense(a) => a.clone(),
            AlphaMatrix::Sparse(s) => {
                let mut a = DMatrix::zeros(s.n, s.n);
                for i in 0..s.n {
                    for (j, v) in s.row(i) {
                        a[(i, j)] = v;
                    }
                }
                a
            }
        }
    }

    /// `alpha * m` for an `n x k` matrix `m`.
    pub fn apply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            AlphaMatrix::Dense(a) => a * m,
            AlphaMatrix::Sparse(s) => {
                let mut out = DMatrix::zeros(s.n, m.ncols());
                for i in 0..s.n {
                    for (j, v) in s.row(i) {
                        for c in 0..m.ncols() {
                            out[(i, c)] += v * m[(j, c)];
                        }
                    }
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MobilityWeights {
    pub tau: Vec<f64>,
    pub alpha: AlphaMatrix,
    /// Regions with no away time (`tau = 1`, zero `alpha` row).
    pub isolated: Vec<bool>,
}

impl MobilityWeights {
    pub fn n(&self) -> usize {
        self.tau.len()
    }

    /// Checks the weight invariants: `tau` in `[0, 1]`, zero diagonal,
    /// non-negative `alpha` and unit row sums for non-isolated rows.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.alpha.n() != n || self.isolated.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "tau has {n} entries, alpha is {}x{0}, isolation flags {}",
                self.alpha.n(),
                self.isolated.len()
            )));
        }
        for i in 0..n {
            let t = self.tau[i];
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::InvariantViolation(format!("tau[{i}] = {t} outside [0, 1]")));
            }
            let row = self.alpha.row(i);
            if row.iter().any(|&(j, v)| j == i || v < 0.0 || !v.is_finite()) {
                return Err(Error::InvariantViolation(format!(
                    "alpha row {i} has a diagonal or negative entry"
                )));
            }
            let s: f64 = row.iter().map(|(_, v)| v).sum();
            if self.isolated[i] {
                if !row.is_empty() {
                    return Err(Error::InvariantViolation(format!(
                        "isolated region {i} has non-zero alpha entries"
                    )));
                }
            } else if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::InvariantViolation(format!(
                    "alpha row {i} sums to {s}, expected 1"
                )));
            }
        }
        Ok(())
    }
}

/// Home-time fractions and travel shares from a time matrix.
pub fn compute_weights(t: &MobilityMatrix) -> MobilityWeights {
    let m = t.as_matrix();
    let n = m.nrows();
    let mut tau = Vec::with_capacity(n);
    let mut isolated = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let total: f64 = m.row(i).sum();
        let away: f64 = (0..n).filter(|&k| k != i).map(|k| m[(i, k)]).sum();
        if away > 0.0 {
            tau.push(m[(i, i)] / total);
            isolated.push(false);
            rows.push(
                (0..n)
                    .filter(|&j| j != i && m[(i, j)] > 0.0)
                    .map(|j| (j, m[(i, j)] / away))
                    .collect(),
            );
        } else {
            tau.push(1.0);
            isolated.push(true);
            rows.push(Vec::new());
        }
    }
    MobilityWeights {
        tau,
        alpha: AlphaMatrix::from_rows(n, &rows),
        isolated,
    }
}

/// `G = alpha W`; isolated regions get a zero row.
pub fn neighborhood_exposure(weights: &MobilityWeights, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if w.nrows() != weights.n() {
        return Err(Error::DimensionMismatch(format!(
            "exposure matrix has {} rows but there are {} regions",
            w.nrows(),
            weights.n()
        )));
    }
    Ok(weights.alpha.apply(w))
}

/// Observed data for every region: home and neighbourhood exposures, home-time
/// fraction, optional covariates and outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposurePanel {
    pub w: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub tau: Vec<f64>,
    pub x: Option<DMatrix<f64>>,
    pub y: Option<Vec<f64>>,
    pub isolated: Vec<bool>,
}

impl ExposurePanel {
    /// Panel whose `G` is built from `W` through the mobility weights.
    pub fn from_mobility(
        weights: &MobilityWeights,
        w: DMatrix<f64>,
        x: Option<DMatrix<f64>>,
        y: Option<Vec<f64>>,
    ) -> Result<Self> {
        let g = neighborhood_exposure(weights, &w)?;
        let panel = ExposurePanel {
            w,
            g,
            tau: weights.tau.clone(),
            x,
            y,
            isolated: weights.isolated.clone(),
        };
        panel.validate()?;
        Ok(panel)
    }

    pub fn n(&self) -> usize {
        self.tau.len()
    }

    pub fn q(&self) -> usize {
        self.w.ncols()
    }

    pub fn p(&self) -> usize {
        self.x.as_ref().map_or(0, |x| x.ncols())
    }

    pub fn y(&self) -> Result<&[f64]> {
        self.y.as_deref().ok_or(Error::MissingOutcome)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let mismatch = |what: &str, got: usize| {
            Err(Error::DimensionMismatch(format!("{what} has {got} rows, expected {n}")))
        };
        if self.w.nrows() != n {
            return mismatch("W", self.w.nrows());
        }
        if self.g.nrows() != n {
            return mismatch("G", self.g.nrows());
        }
        if self.g.ncols() != self.w.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "W has {} columns but G has {}",
                self.w.ncols(),
                self.g.ncols()
            )));
        }
        if self.isolated.len() != n {
            return mismatch("isolation flags", self.isolated.len());
        }
        if let Some(x) = &self.x {
            if x.nrows() != n {
                return mismatch("X", x.nrows());
            }
        }
        if let Some(y) = &self.y {
            if y.len() != n {
                return mismatch("y", y.len());
            }
        }
        for (i, t) in self.tau.iter().enumerate() {
            if !(0.0..=1.0).contains(t) {
                return Err(Error::InvariantViolation(format!("tau[{i}] = {t} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Copy with every home-time fraction multiplied by `factor`.
    pub fn with_tau_scaled(&self, factor: f64) -> Self {
        let mut p = self.clone();
        for t in &mut p.tau {
            *t = (*t * factor).clamp(0.0, 1.0);
        }
        p
    }
}

fn parse_cell(s: &str, row: usize, col: usize) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|e| {
        Error::Parse(format!("row {}, column {}: '{}' ({e})", row + 1, col + 1, s.trim()))
    })
}

pub fn read_mobility_csv<R: std::io::Read>(reader: R) -> Result<MobilityMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, s)| parse_cell(s, i, j))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let n = rows.len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != n) {
        return Err(Error::DimensionMismatch(format!(
            "mobility row {} has {} entries, expected {n}",
            i + 1,
            r.len()
        )));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    MobilityMatrix::new(DMatrix::from_row_slice(n, n, &flat))
}

pub fn load_mobility_csv(path: impl AsRef<Path>) -> Result<MobilityMatrix> {
    read_mobility_csv(std::fs::File::open(path)?)
}

/// Column layout of a panel CSV header.
struct PanelLayout {
    y: Option<usize>,
    tau: usize,
    w: Vec<usize>,
    g: Vec<usize>,
    x: Vec<usize>,
}

fn numbered(headers: &csv::StringRecord, prefix: &str) -> Result<Vec<usize>> {
    let mut cols = Vec::new();
    loop {
        let name = format!("{prefix}{}", cols.len() + 1);
        match headers.iter().position(|h| h == name) {
            Some(c) => cols.push(c),
            None => break,
        }
    }
    // reject gaps such as w1,w3
    for h in headers.iter() {
        if let Some(rest) = h.strip_prefix(prefix) {
            if let Ok(k) = rest.parse::<usize>() {
                if k == 0 || k > cols.len() {
                    return Err(Error::Parse(format!(
                        "column '{h}' is out of sequence for prefix '{prefix}'"
                    )));
                }
            }
        }
    }
    Ok(cols)
}

fn panel_layout(headers: &csv::StringRecord) -> Result<PanelLayout> {
    let find = |name: &str| headers.iter().position(|h| h == name);
    let tau = find("tau").ok_or_else(|| Error::Parse("panel header lacks 'tau'".into()))?;
    let w = numbered(headers, "w")?;
    let g = numbered(headers, "g")?;
    let x = numbered(headers, "x")?;
    if w.is_empty() {
        return Err(Error::Parse("panel header lacks exposure columns w1..wq".into()));
    }
    if w.len() != g.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} home exposure columns but {} neighbourhood columns",
            w.len(),
            g.len()
        )));
    }
    let known = 1 + w.len() + g.len() + x.len() + usize::from(find("y").is_some());
    if known != headers.len() {
        return Err(Error::Parse(format!(
            "unrecognised columns in panel header: {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    Ok(PanelLayout { y: find("y"), tau, w, g, x })
}

pub fn read_panel_csv<R: std::io::Read>(reader: R) -> Result<ExposurePanel> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let layout = panel_layout(&rdr.headers()?.clone())?;
    let (q, p) = (layout.w.len(), layout.x.len());
    let (mut y, mut tau, mut w, mut g, mut x) = (vec![], vec![], vec![], vec![], vec![]);
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cell = |c: usize| parse_cell(&rec[c], i + 1, c);
        if let Some(c) = layout.y {
            y.push(cell(c)?);
        }
        let t = cell(layout.tau)?;
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvariantViolation(format!(
                "row {}, column {}: tau = {t} outside [0, 1]",
                i + 2,
                layout.tau + 1
            )));
        }
        tau.push(t);
        for &c in &layout.w {
            w.push(cell(c)?);
        }
        for &c in &layout.g {
            g.push(cell(c)?);
        }
        for &c in &layout.x {
            x.push(cell(c)?);
        }
    }
    let n = tau.len();
    let isolated = tau.iter().map(|&t| t == 1.0).collect();
    let panel = ExposurePanel {
        w: DMatrix::from_row_slice(n, q, &w),
        g: DMatrix::from_row_slice(n, q, &g),
        tau,
        x: (p > 0).then(|| DMatrix::from_row_slice(n, p, &x)),
        y: layout.y.map(|_| y),
        isolated,
    };
    panel.validate()?;
    Ok(panel)
}

pub fn load_panel_csv(path: impl AsRef<Path>) -> Result<ExposurePanel> {
    read_panel_csv(std::fs::File::open(path)?)
}

pub fn write_panel_csv<W: std::io::Write>(panel: &ExposurePanel, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let (q, p) = (panel.q(), panel.p());
    let mut header = Vec::new();
    if panel.y.is_some() {
        header.push("y".to_string());
    }
    header.push("tau".to_string());
    header.extend((1..=q).map(|k| format!("w{k}")));
    header.extend((1..=q).map(|k| format!("g{k}")));
    header.extend((1..=p).map(|k| format!("x{k}")));
    wtr.write_record(&header)?;
    for i in 0..panel.n() {
        let mut rec = Vec::with_capacity(header.len());
        if let Some(y) = &panel.y {
            rec.push(y[i]);
        }
        rec.push(panel.tau[i]);
        rec.extend(panel.w.row(i).iter());
        rec.extend(panel.g.row(i).iter());
        if let Some(x) = &panel.x {
            rec.extend(x.row(i).iter());
        }
        wtr.write_record(rec.iter().map(|v| format!("{v:?}")))?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_panel_csv(panel: &ExposurePanel, path: impl AsRef<Path>) -> Result<()> {
    write_panel_csv(panel, std::fs::File::create(path)?)
}
