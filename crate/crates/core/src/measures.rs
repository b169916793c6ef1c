//! Discrete measures: the weighted sample `ν = Law(X, Y)`, the uniform
//! reference grid `μ` on `[0,1]^d`, and couplings between them.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VqrError};
use crate::matrix::{dot, max_abs, Matrix};

/// Default feasibility tolerance used across the crate.
pub const FEAS_TOL: f64 = 1e-9;

/// Largest grid `make_grid` will build unless a different cap is given.
pub const DEFAULT_GRID_CAP: usize = 1 << 20;

const WEIGHT_SUM_TOL: f64 = 1e-12;
const CENTER_TOL: f64 = 1e-12;

/// Weighted atoms `(x_j, y_j)` with `Σ w_j = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSample")]
pub struct DiscreteSample {
    x: Matrix,
    y: Matrix,
    w: Vec<f64>,
    x_mean: Vec<f64>,
}

#[derive(Deserialize)]
struct RawSample {
    x: Matrix,
    y: Matrix,
    w: Vec<f64>,
    #[serde(default)]
    x_mean: Option<Vec<f64>>,
}

impl TryFrom<RawSample> for DiscreteSample {
    type Error = VqrError;

    fn try_from(raw: RawSample) -> Result<Self> {
        // An empty covariate matrix deserializes with zero columns; make the
        // row count agree with y so validation only complains about real
        // mismatches.
        let x = if raw.x.cols() == 0 && raw.x.rows() == 0 {
            Matrix::zeros(raw.y.rows(), 0)
        } else {
            raw.x
        };
        let mut s = DiscreteSample::new(x, raw.y, Some(raw.w))?;
        if let Some(mean) = raw.x_mean {
            if mean.len() != s.n_covariates() {
                return Err(VqrError::Dimension(format!(
                    "x_mean has {} entries for {} covariates",
                    mean.len(),
                    s.n_covariates()
                )));
            }
            s.x_mean = mean;
        }
        Ok(s)
    }
}

impl DiscreteSample {
    /// Builds an (uncentered) sample. Missing weights mean uniform weights;
    /// weights that do not sum to one are rescaled.
    pub fn new(x: Matrix, y: Matrix, w: Option<Vec<f64>>) -> Result<Self> {
        let n = y.rows();
        if n == 0 {
            return Err(VqrError::Validation("sample has no atoms".into()));
        }
        if y.cols() == 0 {
            return Err(VqrError::Validation("outcome dimension must be at least 1".into()));
        }
        if x.rows() != n {
            return Err(VqrError::Dimension(format!(
                "x has {} rows but y has {n}",
                x.rows()
            )));
        }
        if x.as_slice().iter().chain(y.as_slice()).any(|v| !v.is_finite()) {
            return Err(VqrError::Validation("non-finite atom coordinate".into()));
        }
        let w = match w {
            None => vec![1.0 / n as f64; n],
            Some(w) => normalize_weights(w, n)?,
        };
        let n_cov = x.cols();
        Ok(Self {
            x,
            y,
            w,
            x_mean: vec![0.0; n_cov],
        })
    }

    pub fn n(&self) -> usize {
        self.y.rows()
    }

    /// Number of covariates `N` (may be zero).
    pub fn n_covariates(&self) -> usize {
        self.x.cols()
    }

    /// Outcome dimension `d`.
    pub fn dim(&self) -> usize {
        self.y.cols()
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn y(&self) -> &Matrix {
        &self.y
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    /// The shift subtracted by [`center`]; zero for uncentered samples.
    pub fn x_mean(&self) -> &[f64] {
        &self.x_mean
    }

    pub fn x_row(&self, j: usize) -> &[f64] {
        self.x.row(j)
    }

    pub fn y_row(&self, j: usize) -> &[f64] {
        self.y.row(j)
    }

    /// Weighted covariate mean.
    pub fn weighted_x_mean(&self) -> Vec<f64> {
        weighted_mean(&self.x, &self.w)
    }

    /// Barycenter `ȳ` of the outcomes.
    pub fn y_mean(&self) -> Vec<f64> {
        weighted_mean(&self.y, &self.w)
    }

    pub fn is_centered(&self) -> bool {
        let scale = 1.0f64.max(self.x.max_abs());
        max_abs(&self.weighted_x_mean()) <= CENTER_TOL * scale
    }

    /// Errors unless the sample is centered; solvers call this on entry.
    pub fn require_centered(&self) -> Result<()> {
        if self.is_centered() {
            Ok(())
        } else {
            Err(VqrError::Validation(format!(
                "sample is not centered (weighted x mean {:?}); call center() first",
                self.weighted_x_mean()
            )))
        }
    }

    /// Scalar outcomes; errors unless `d = 1`.
    pub fn y_scalar(&self) -> Result<Vec<f64>> {
        if self.dim() != 1 {
            return Err(VqrError::Dimension(format!(
                "expected univariate outcomes, got d = {}",
                self.dim()
            )));
        }
        Ok(self.y.col_to_vec(0))
    }

    /// Covariate columns whose centered values are all (numerically) zero.
    pub fn degenerate_covariates(&self) -> Vec<usize> {
        let mean = self.weighted_x_mean();
        let scale = 1.0f64.max(self.x.max_abs());
        (0..self.n_covariates())
            .filter(|&k| {
                (0..self.n()).all(|j| (self.x[(j, k)] - mean[k]).abs() <= CENTER_TOL * scale)
            })
            .collect()
    }

    /// Copy with only the listed covariate columns.
    pub fn with_covariates(&self, keep: &[usize]) -> Self {
        Self {
            x: self.x.select_cols(keep),
            y: self.y.clone(),
            w: self.w.clone(),
            x_mean: keep.iter().map(|&k| self.x_mean[k]).collect(),
        }
    }

    /// Copy with atoms reordered: atom `k` of the result is atom `perm[k]` here.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if !is_permutation(perm, self.n()) {
            return Err(VqrError::Validation("not a permutation of the atoms".into()));
        }
        Ok(Self {
            x: self.x.select_rows(perm),
            y: self.y.select_rows(perm),
            w: perm.iter().map(|&j| self.w[j]).collect(),
            x_mean: self.x_mean.clone(),
        })
    }

    /// Stable identifier derived from the atom contents.
    pub fn fingerprint(&self) -> String {
        let mut h = Fnv::new();
        h.write_usize(self.n());
        h.write_usize(self.n_covariates());
        h.write_usize(self.dim());
        for v in self.x.as_slice().iter().chain(self.y.as_slice()).chain(&self.w) {
            h.write_f64(*v);
        }
        format!("sample:{:016x}", h.0)
    }
}

fn weighted_mean(m: &Matrix, w: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for (row, wj) in m.iter_rows().zip(w) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += wj * v;
        }
    }
    out
}

fn normalize_weights(w: Vec<f64>, n: usize) -> Result<Vec<f64>> {
    if w.len() != n {
        return Err(VqrError::Dimension(format!("{} weights for {n} atoms", w.len())));
    }
    if let Some(bad) = w.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(VqrError::Validation(format!("nonpositive weight {bad}")));
    }
    let total: f64 = w.iter().sum();
    if (total - 1.0).abs() <= WEIGHT_SUM_TOL {
        Ok(w)
    } else {
        Ok(w.into_iter().map(|v| v / total).collect())
    }
}

fn is_permutation(perm: &[usize], n: usize) -> bool {
    let mut seen = vec![false; n];
    perm.len() == n
        && perm
            .iter()
            .all(|&j| j < n && !std::mem::replace(&mut seen[j], true))
}

/// Returns the sample with weighted covariate mean zero. `x_mean` accumulates
/// the subtracted shift; `y` is untouched. Already-centered samples come back
/// unchanged.
pub fn center(sample: &DiscreteSample) -> DiscreteSample {
    if sample.is_centered() {
        return sample.clone();
    }
    let mut out = sample.clone();
    // Two passes: the second removes the rounding left by the first.
    for _ in 0..2 {
        let mean = out.weighted_x_mean();
        for j in 0..out.n() {
            for (v, m) in out.x.row_mut(j).iter_mut().zip(&mean) {
                *v -= m;
            }
        }
        for (acc, m) in out.x_mean.iter_mut().zip(&mean) {
            *acc += m;
        }
    }
    out
}

/// Maps CSV header names to roles.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub covariates: Vec<String>,
    pub outcomes: Vec<String>,
    pub weight: Option<String>,
}

impl Schema {
    /// Infers roles from header names: `x*` covariates, `y*` outcomes,
    /// `w` or `weight` the weight column.
    pub fn infer(headers: &[String]) -> Result<Self> {
        let mut schema = Schema {
            covariates: Vec::new(),
            outcomes: Vec::new(),
            weight: None,
        };
        for h in headers {
            let name = h.trim();
            if name.eq_ignore_ascii_case("w") || name.eq_ignore_ascii_case("weight") {
                if schema.weight.replace(name.to_string()).is_some() {
                    return Err(VqrError::Validation("more than one weight column".into()));
                }
            } else if name.starts_with('x') || name.starts_with('X') {
                schema.covariates.push(name.to_string());
            } else if name.starts_with('y') || name.starts_with('Y') {
                schema.outcomes.push(name.to_string());
            } else {
                return Err(VqrError::Validation(format!(
                    "cannot infer the role of column '{name}'"
                )));
            }
        }
        Ok(schema)
    }
}

/// Reads a sample from a CSV file. `schema = None` infers roles from the header.
pub fn load_sample(path: impl AsRef<Path>, schema: Option<&Schema>) -> Result<DiscreteSample> {
    let path = path.as_ref();
    let file = File::open(path)?;
    read_sample(file, schema, path)
}

pub fn read_sample<R: Read>(
    reader: R,
    schema: Option<&Schema>,
    source: &Path,
) -> Result<DiscreteSample> {
    let parse_err = |line: u64, message: String| VqrError::Parse {
        path: source.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.iter().all(|h| h.is_empty()) {
        return Err(VqrError::Validation(format!("{}: empty file", source.display())));
    }
    let inferred;
    let schema = match schema {
        Some(s) => s,
        None => {
            inferred = Schema::infer(&headers)?;
            &inferred
        }
    };
    let position = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| VqrError::Validation(format!("column '{name}' not in header")))
    };
    let x_cols = schema
        .covariates
        .iter()
        .map(|c| position(c))
        .collect::<Result<Vec<_>>>()?;
    let y_cols = schema
        .outcomes
        .iter()
        .map(|c| position(c))
        .collect::<Result<Vec<_>>>()?;
    let w_col = schema.weight.as_deref().map(position).transpose()?;
    if y_cols.is_empty() {
        return Err(VqrError::Validation("no outcome columns".into()));
    }

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, csv::Position::line);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, csv::Position::line);
        let field = |k: usize| -> Result<f64> {
            let raw = record
                .get(k)
                .ok_or_else(|| parse_err(line, format!("missing column {}", headers[k])))?;
            raw.parse::<f64>()
                .map_err(|_| parse_err(line, format!("'{raw}' in column {} is not a number", headers[k])))
        };
        for &k in &x_cols {
            xs.push(field(k)?);
        }
        for &k in &y_cols {
            ys.push(field(k)?);
        }
        if let Some(k) = w_col {
            let v = field(k)?;
            if !(v > 0.0) {
                return Err(VqrError::Validation(format!(
                    "{}:{line}: nonpositive weight {v}",
                    source.display()
                )));
            }
            ws.push(v);
        }
    }
    let n = ys.len() / y_cols.len();
    if n == 0 {
        return Err(VqrError::Validation(format!("{}: no data rows", source.display())));
    }
    let x = Matrix::from_row_major(n, x_cols.len(), xs)?;
    let y = Matrix::from_row_major(n, y_cols.len(), ys)?;
    DiscreteSample::new(x, y, w_col.map(|_| ws))
}

/// Writes `x1..xN, y1..yd, w` with shortest round-trip float formatting, so
/// reloading reproduces the atoms bit for bit.
pub fn write_sample<W: Write>(writer: W, sample: &DiscreteSample) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=sample.n_covariates()).map(|k| format!("x{k}")).collect();
    header.extend((1..=sample.dim()).map(|k| format!("y{k}")));
    header.push("w".into());
    wtr.write_record(&header).map_err(csv_io)?;
    for j in 0..sample.n() {
        let row: Vec<String> = sample
            .x_row(j)
            .iter()
            .chain(sample.y_row(j))
            .chain(std::iter::once(&sample.w[j]))
            .map(|v| v.to_string())
            .collect();
        wtr.write_record(&row).map_err(csv_io)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_sample(path: impl AsRef<Path>, sample: &DiscreteSample) -> Result<()> {
    write_sample(File::create(path)?, sample)
}

fn csv_io(e: csv::Error) -> VqrError {
    VqrError::Io(std::io::Error::new(std::io::ErrorKind::Other, e))
}

/// Tensor grid of cell midpoints on `[0,1]^d` with uniform weights.
///
/// Atoms are ordered with the last axis varying fastest, so in `d = 1` the
/// levels are strictly increasing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct UGrid {
    u: Matrix,
    mu: Vec<f64>,
    per_axis: Vec<usize>,
}

#[derive(Deserialize)]
struct RawGrid {
    per_axis: Vec<usize>,
}

impl TryFrom<RawGrid> for UGrid {
    type Error = VqrError;

    fn try_from(raw: RawGrid) -> Result<Self> {
        let first = *raw
            .per_axis
            .first()
            .ok_or_else(|| VqrError::Validation("grid with no axes".into()))?;
        if raw.per_axis.iter().any(|&k| k != first) {
            return Err(VqrError::Validation("grid axes must share one resolution".into()));
        }
        make_grid(raw.per_axis.len(), first)
    }
}

impl UGrid {
    /// Number of atoms `m`.
    pub fn m(&self) -> usize {
        self.u.rows()
    }

    pub fn dim(&self) -> usize {
        self.u.cols()
    }

    pub fn u(&self) -> &Matrix {
        &self.u
    }

    pub fn level(&self, i: usize) -> &[f64] {
        self.u.row(i)
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn per_axis(&self) -> &[usize] {
        &self.per_axis
    }

    /// Cell width along each axis.
    pub fn spacing(&self) -> f64 {
        1.0 / self.per_axis[0] as f64
    }

    /// Levels of a one-dimensional grid.
    pub fn levels_1d(&self) -> Result<Vec<f64>> {
        if self.dim() != 1 {
            return Err(VqrError::Dimension(format!("grid has dimension {}", self.dim())));
        }
        Ok(self.u.col_to_vec(0))
    }

    /// Flat index of a multi-index (one entry per axis).
    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi
            .iter()
            .zip(&self.per_axis)
            .fold(0, |acc, (&k, &p)| acc * p + k)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for (slot, &p) in out.iter_mut().zip(&self.per_axis).rev() {
            *slot = flat % p;
            flat /= p;
        }
        out
    }

    pub fn fingerprint(&self) -> String {
        format!("grid:d={}:k={}", self.dim(), self.per_axis[0])
    }
}

pub fn make_grid(d: usize, per_axis: usize) -> Result<UGrid> {
    make_grid_with_cap(d, per_axis, DEFAULT_GRID_CAP)
}

pub fn make_grid_with_cap(d: usize, per_axis: usize, cap: usize) -> Result<UGrid> {
    if d == 0 || per_axis == 0 {
        return Err(VqrError::Validation(format!(
            "grid needs d >= 1 and per_axis >= 1 (got d = {d}, per_axis = {per_axis})"
        )));
    }
    let m = u32::try_from(d)
        .ok()
        .and_then(|d| per_axis.checked_pow(d))
        .filter(|&m| m <= cap)
        .ok_or_else(|| VqrError::Size(format!("{per_axis}^{d} grid atoms exceed the cap of {cap}")))?;
    let h = 1.0 / per_axis as f64;
    let mut u = Matrix::zeros(m, d);
    let per = vec![per_axis; d];
    let mut grid = UGrid {
        u: Matrix::zeros(0, d),
        mu: vec![1.0 / m as f64; m],
        per_axis: per,
    };
    for i in 0..m {
        for (a, k) in grid.multi_index(i).into_iter().enumerate() {
            u[(i, a)] = (k as f64 + 0.5) * h;
        }
    }
    grid.u = u;
    Ok(grid)
}

/// Nonnegative `m × n` joint law of (grid atom, sample atom).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    pi: Matrix,
    pub grid_ref: String,
    pub sample_ref: String,
}

impl Coupling {
    /// Wraps a transport plan. Round-off negatives down to `-FEAS_TOL` are
    /// clipped to zero; anything more negative is rejected.
    pub fn new(mut pi: Matrix, grid: &UGrid, sample: &DiscreteSample) -> Result<Self> {
        if pi.rows() != grid.m() || pi.cols() != sample.n() {
            return Err(VqrError::Dimension(format!(
                "coupling is {}x{}, expected {}x{}",
                pi.rows(),
                pi.cols(),
                grid.m(),
                sample.n()
            )));
        }
        for i in 0..pi.rows() {
            for v in pi.row_mut(i) {
                if *v < -FEAS_TOL || !v.is_finite() {
                    return Err(VqrError::Validation(format!("negative coupling mass {v}")));
                }
                *v = v.max(0.0);
            }
        }
        Ok(Self {
            pi,
            grid_ref: grid.fingerprint(),
            sample_ref: sample.fingerprint(),
        })
    }

    /// The product coupling `μ ⊗ w`.
    pub fn independent(grid: &UGrid, sample: &DiscreteSample) -> Self {
        let mut pi = Matrix::zeros(grid.m(), sample.n());
        for i in 0..grid.m() {
            for j in 0..sample.n() {
                pi[(i, j)] = grid.mu()[i] * sample.w()[j];
            }
        }
        Self {
            pi,
            grid_ref: grid.fingerprint(),
            sample_ref: sample.fingerprint(),
        }
    }

    pub fn pi(&self) -> &Matrix {
        &self.pi
    }

    pub fn mass(&self, i: usize, j: usize) -> f64 {
        self.pi[(i, j)]
    }

    pub fn grid_residual(&self, grid: &UGrid) -> f64 {
        (0..self.pi.rows())
            .map(|i| (self.pi.row(i).iter().sum::<f64>() - grid.mu()[i]).abs())
            .fold(0.0, f64::max)
    }

    pub fn sample_residual(&self, sample: &DiscreteSample) -> f64 {
        (0..self.pi.cols())
            .map(|j| ((0..self.pi.rows()).map(|i| self.pi[(i, j)]).sum::<f64>() - sample.w()[j]).abs())
            .fold(0.0, f64::max)
    }

    /// Per grid row, `|Σ_j π(i,j) x_j|∞ / μ_i`.
    pub fn mean_indep_residuals(&self, grid: &UGrid, sample: &DiscreteSample) -> Vec<f64> {
        let n_cov = sample.n_covariates();
        (0..self.pi.rows())
            .map(|i| {
                let mut acc = vec![0.0; n_cov];
                for (j, &p) in self.pi.row(i).iter().enumerate() {
                    for (a, x) in acc.iter_mut().zip(sample.x_row(j)) {
                        *a += p * x;
                    }
                }
                max_abs(&acc) / grid.mu()[i]
            })
            .collect()
    }

    pub fn mean_indep_residual(&self, grid: &UGrid, sample: &DiscreteSample) -> f64 {
        self.mean_indep_residuals(grid, sample)
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// `Σ π(i,j) u_i·y_j`.
    pub fn correlation(&self, grid: &UGrid, sample: &DiscreteSample) -> f64 {
        let mut total = 0.0;
        for i in 0..self.pi.rows() {
            for (j, &p) in self.pi.row(i).iter().enumerate() {
                if p != 0.0 {
                    total += p * dot(grid.level(i), sample.y_row(j));
                }
            }
        }
        total
    }

    /// Entries with mass above `floor`, as `(i, j, mass)`.
    pub fn triplets(&self, floor: f64) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.pi.rows() {
            for (j, &p) in self.pi.row(i).iter().enumerate() {
                if p > floor {
                    out.push((i, j, p));
                }
            }
        }
        out
    }

    /// Rebuilds a dense coupling from triplets.
    pub fn from_triplets(
        triplets: &[(usize, usize, f64)],
        grid: &UGrid,
        sample: &DiscreteSample,
    ) -> Result<Self> {
        let mut pi = Matrix::zeros(grid.m(), sample.n());
        for &(i, j, p) in triplets {
            if i >= grid.m() || j >= sample.n() {
                return Err(VqrError::Dimension(format!("triplet ({i}, {j}) out of range")));
            }
            pi[(i, j)] += p;
        }
        Self::new(pi, grid, sample)
    }
}

/// 64-bit FNV-1a.
struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    fn write_usize(&mut self, v: usize) {
        self.write(&(v as u64).to_le_bytes());
    }

    fn write_f64(&mut self, v: f64) {
        self.write(&v.to_bits().to_le_bytes());
    }
}
