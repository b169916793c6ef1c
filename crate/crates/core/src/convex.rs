//! Discrete Legendre transforms, convex envelopes and the contact-set check
//! for mean-independence solutions.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VqrError};
use crate::matrix::{dot, Matrix};
use crate::measures::{DiscreteSample, UGrid};
use crate::vqr::VqrSolution;

/// Relative tolerance used for contact flags.
const CONTACT_REL: f64 = 1e-12;
/// Total size cap of the bounding slope grid in the default slope set.
const SLOPE_GRID_CAP: usize = 4096;

/// Values of a function on the atoms of a grid.
#[derive(Clone, Debug)]
pub struct GridFunction<'a> {
    grid: &'a UGrid,
    values: Vec<f64>,
}

impl<'a> GridFunction<'a> {
    pub fn new(grid: &'a UGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.m() {
            return Err(VqrError::Dimension(format!(
                "{} values for a grid of {} atoms",
                values.len(),
                grid.m()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(VqrError::Validation(format!("non-finite value at grid atom {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &'a UGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `f*(y) = max_i {u_i·y - f(u_i)}` for every row `y` of `slopes`.
pub fn legendre(f: &GridFunction, slopes: &Matrix) -> Vec<f64> {
    let grid = f.grid;
    slopes
        .iter_rows()
        .map(|y| {
            (0..grid.m())
                .map(|i| dot(grid.level(i), y) - f.values[i])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Indices of the lower convex hull vertices (monotone chain).
fn lower_hull(t: &[f64], values: &[f64]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::with_capacity(t.len());
    for k in 0..t.len() {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            if cross((t[a], values[a]), (t[b], values[b]), (t[k], values[k])) <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(k);
    }
    hull
}

/// Lower convex hull of `(t_k, values_k)` evaluated at every `t_k`, with
/// contact flags where the hull touches the data.
pub fn convex_envelope_1d(t: &[f64], values: &[f64]) -> Result<(Vec<f64>, Vec<bool>)> {
    if t.len() != values.len() {
        return Err(VqrError::Dimension(format!(
            "{} abscissae but {} values",
            t.len(),
            values.len()
        )));
    }
    if t.is_empty() {
        return Err(VqrError::Validation("envelope of an empty function".into()));
    }
    if let Some(k) = t.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(VqrError::Validation(format!(
            "abscissae must be strictly increasing (positions {k} and {})",
            k + 1
        )));
    }
    let hull = lower_hull(t, values);
    let mut env = values.to_vec();
    for seg in hull.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let slope = (values[b] - values[a]) / (t[b] - t[a]);
        for k in a + 1..b {
            env[k] = (values[a] + slope * (t[k] - t[a])).min(values[k]);
        }
    }
    let contact = env
        .iter()
        .zip(values)
        .map(|(e, v)| (v - e).abs() <= CONTACT_REL * (1.0 + v.abs()))
        .collect();
    Ok((env, contact))
}

/// Biconjugate over a finite slope set, with the resolution of the
/// approximation.
#[derive(Clone, Debug)]
pub struct DoubleTransform<'a> {
    pub envelope: GridFunction<'a>,
    /// Upper bound on `true envelope - returned envelope` at every atom,
    /// available in d = 1 only.
    pub resolution: Option<f64>,
}

/// `u ↦ max_{y ∈ slopes} {u·y - f*(y)}`.
pub fn envelope_via_double_transform<'a>(f: &GridFunction<'a>, slopes: &Matrix) -> Result<DoubleTransform<'a>> {
    let grid = f.grid;
    if slopes.rows() == 0 {
        return Err(VqrError::Validation("empty slope set".into()));
    }
    if slopes.cols() != grid.dim() {
        return Err(VqrError::Dimension(format!(
            "slopes have dimension {} but the grid has {}",
            slopes.cols(),
            grid.dim()
        )));
    }
    let conj = legendre(f, slopes);
    let values: Vec<f64> = (0..grid.m())
        .map(|i| {
            let u = grid.level(i);
            slopes
                .iter_rows()
                .zip(&conj)
                .map(|(y, c)| dot(u, y) - c)
                .fold(f64::NEG_INFINITY, f64::max)
                .min(f.values[i])
        })
        .collect();
    let resolution = if grid.dim() == 1 {
        Some(resolution_1d(f, slopes)?)
    } else {
        None
    };
    Ok(DoubleTransform {
        envelope: GridFunction { grid, values },
        resolution,
    })
}

/// Distance from each hull segment slope to the slope set, times the
/// diameter of the grid.
fn resolution_1d(f: &GridFunction, slopes: &Matrix) -> Result<f64> {
    let t = f.grid.levels_1d()?;
    if t.len() < 2 {
        return Ok(0.0);
    }
    let hull = lower_hull(&t, &f.values);
    let set = slopes.col_to_vec(0);
    let worst = hull
        .windows(2)
        .map(|s| {
            let slope = (f.values[s[1]] - f.values[s[0]]) / (t[s[1]] - t[s[0]]);
            set.iter().map(|y| (y - slope).abs()).fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    Ok(worst * (t[t.len() - 1] - t[0]))
}

/// Sample outcomes plus a bounding slope grid covering every difference
/// quotient of the given values along the grid axes.
pub fn default_slopes(grid: &UGrid, values: &[f64], sample: &DiscreteSample) -> Matrix {
    let d = grid.dim();
    let mut bound = 0.0f64;
    for i in 0..grid.m() {
        for k in i + 1..grid.m() {
            let dist = grid
                .level(i)
                .iter()
                .zip(grid.level(k))
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
            bound = bound.max((values[i] - values[k]).abs() / dist);
        }
    }
    for j in 0..sample.n() {
        bound = bound.max(sample.y_row(j).iter().fold(0.0, |a: f64, v| a.max(v.abs())));
    }
    let mut per = 4 * grid.per_axis().iter().copied().max().unwrap_or(1) + 1;
    while per > 2 && per.pow(d as u32) > SLOPE_GRID_CAP {
        per -= 1;
    }
    let axis: Vec<f64> = (0..per)
        .map(|k| -bound + 2.0 * bound * k as f64 / (per - 1) as f64)
        .collect();
    let total = per.pow(d as u32);
    let mut data = sample.y().as_slice().to_vec();
    for flat in 0..total {
        let mut rem = flat;
        let mut point = vec![0.0; d];
        for a in (0..d).rev() {
            point[a] = axis[rem % per];
            rem /= per;
        }
        data.extend(point);
    }
    Matrix::from_row_major(sample.n() + total, d, data).expect("slope matrix shape")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContactRecord {
    pub i: usize,
    pub j: usize,
    pub mass: f64,
    /// `Φ_x(u_i) - Φ_x**(u_i)` with `x = x_j`.
    pub envelope_gap: f64,
    /// `|u_i·y_j - Φ_x*(y_j) - Φ_x**(u_i)|`.
    pub young_gap: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContactReport {
    pub records: Vec<ContactRecord>,
    pub max_envelope_gap: f64,
    pub max_young_gap: f64,
    /// Smallest envelope gap over all atoms checked; negative values beyond
    /// `tol` would mean the envelope fails to minorize.
    pub min_envelope_gap: f64,
    /// Worst envelope resolution over the functions built; unknown in d ≥ 2
    /// where envelopes come from a finite slope set.
    pub resolution: Option<f64>,
    pub tol: f64,
    pub mass_floor: f64,
    pub pass: bool,
}

impl ContactReport {
    pub fn violations(&self) -> impl Iterator<Item = &ContactRecord> {
        self.records
            .iter()
            .filter(|r| r.envelope_gap > self.tol || r.young_gap > self.tol)
    }
}

pub fn default_mass_floor(grid: &UGrid, sample: &DiscreteSample) -> f64 {
    1e-10 / (grid.m() * sample.n()) as f64
}

pub fn default_contact_tol(value: f64) -> f64 {
    1e-6 * (1.0 + value.abs())
}

/// `Φ_x(u_i) = φ_i + b_i·x` as a grid function.
pub fn potential<'a>(sol: &VqrSolution, grid: &'a UGrid, x: &[f64]) -> Result<GridFunction<'a>> {
    GridFunction::new(grid, sol.potential_at(x))
}

struct Envelope {
    values: Vec<f64>,
    resolution: Option<f64>,
}

fn envelope_of(f: &GridFunction, sample: &DiscreteSample) -> Result<Envelope> {
    let grid = f.grid;
    if grid.dim() == 1 {
        let (values, _) = convex_envelope_1d(&grid.levels_1d()?, &f.values)?;
        Ok(Envelope {
            values,
            resolution: Some(0.0),
        })
    } else {
        let slopes = default_slopes(grid, &f.values, sample);
        let dt = envelope_via_double_transform(f, &slopes)?;
        Ok(Envelope {
            values: dt.envelope.values,
            resolution: dt.resolution,
        })
    }
}

/// Checks `Φ_X(U) = Φ_X**(U)` and Young's equality on every coupling entry
/// above `mass_floor`.
pub fn check_relaxed_spec(
    sol: &VqrSolution,
    sample: &DiscreteSample,
    grid: &UGrid,
    tol: f64,
    mass_floor: f64,
) -> Result<ContactReport> {
    if sol.phi.len() != grid.m() || sol.psi.len() != sample.n() || sol.b.cols() != sample.n_covariates() {
        return Err(VqrError::Dimension(
            "solution does not match the sample and grid".into(),
        ));
    }
    let mut records = Vec::new();
    let mut min_env = f64::INFINITY;
    let mut resolution = Some(0.0f64);
    for j in 0..sample.n() {
        let support: Vec<usize> = (0..grid.m())
            .filter(|&i| sol.coupling.mass(i, j) > mass_floor)
            .collect();
        if support.is_empty() {
            continue;
        }
        let f = potential(sol, grid, sample.x_row(j))?;
        let env = envelope_of(&f, sample)?;
        resolution = resolution.zip(env.resolution).map(|(a, b)| a.max(b));
        for (v, e) in f.values.iter().zip(&env.values) {
            min_env = min_env.min(v - e);
        }
        let y = sample.y_row(j);
        let conj = legendre(&f, &Matrix::from_row_major(1, y.len(), y.to_vec())?)[0];
        for i in support {
            records.push(ContactRecord {
                i,
                j,
                mass: sol.coupling.mass(i, j),
                envelope_gap: f.values[i] - env.values[i],
                young_gap: (dot(grid.level(i), y) - conj - env.values[i]).abs(),
            });
        }
    }
    let max_envelope_gap = records.iter().map(|r| r.envelope_gap).fold(0.0, f64::max);
    let max_young_gap = records.iter().map(|r| r.young_gap).fold(0.0, f64::max);
    let min_envelope_gap = if min_env.is_finite() { min_env } else { 0.0 };
    let pass = max_envelope_gap <= tol && max_young_gap <= tol && min_envelope_gap >= -tol;
    Ok(ContactReport {
        records,
        max_envelope_gap,
        max_young_gap,
        min_envelope_gap,
        resolution,
        tol,
        mass_floor,
        pass,
    })
}

/// Rows `(u, Φ_x(u), Φ_x**(u))` for one covariate value.
#[derive(Clone, Debug)]
pub struct ContactCurve {
    pub x: Vec<f64>,
    pub levels: Matrix,
    pub values: Vec<f64>,
    pub envelope: Vec<f64>,
}

pub fn contact_curve(sol: &VqrSolution, sample: &DiscreteSample, grid: &UGrid, x: &[f64]) -> Result<ContactCurve> {
    if x.len() != sol.b.cols() {
        return Err(VqrError::Dimension(format!(
            "query has {} covariates but the model has {}",
            x.len(),
            sol.b.cols()
        )));
    }
    let f = potential(sol, grid, x)?;
    let env = envelope_of(&f, sample)?;
    Ok(ContactCurve {
        x: x.to_vec(),
        levels: grid.u().clone(),
        values: f.values,
        envelope: env.values,
    })
}

/// CSV with columns `x1..xN, u1..ud, phi, envelope`, one block per curve.
pub fn write_contact_csv(path: &Path, curves: &[ContactCurve]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let (n_cov, d) = curves
        .first()
        .map_or((0, 0), |c| (c.x.len(), c.levels.cols()));
    let mut header: Vec<String> = (1..=n_cov).map(|k| format!("x{k}")).collect();
    header.extend((1..=d).map(|a| format!("u{a}")));
    header.push("phi".into());
    header.push("envelope".into());
    writeln!(out, "{}", header.join(","))?;
    for c in curves {
        for i in 0..c.values.len() {
            let mut row: Vec<String> = c.x.iter().map(f64::to_string).collect();
            row.extend(c.levels.row(i).iter().map(f64::to_string));
            row.push(c.values[i].to_string());
            row.push(c.envelope[i].to_string());
            writeln!(out, "{}", row.join(","))?;
        }
    }
    out.flush()?;
    Ok(())
}
