//! Self-contained solution files and their re-validation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::convex::{check_relaxed_spec, default_contact_tol, default_mass_floor};
use crate::error::{Result, VqrError};
use crate::matrix::{dot, Matrix};
use crate::measures::{Coupling, DiscreteSample, UGrid};
use crate::qr1d::{build_uqr, quasi_spec_check, QuantileModel1D, QuasiSpecReport, UqrReport};
use crate::transport::correlation_costs;
use crate::vqr::{verify_duals, Backend, Residuals, VqrSolution};

/// Transport or mean-independence solution together with the grid and
/// sample it was computed on.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransportFile {
    pub value: f64,
    pub backend: Backend,
    pub epsilon: f64,
    pub tol: f64,
    pub phi: Vec<f64>,
    pub b: Matrix,
    pub psi: Vec<f64>,
    /// `[i, j, mass]` for every entry with positive mass.
    pub coupling: Vec<(usize, usize, f64)>,
    pub residuals: Residuals,
    pub grid: UGrid,
    pub sample: DiscreteSample,
}

impl TransportFile {
    pub fn new(sol: &VqrSolution, grid: &UGrid, sample: &DiscreteSample, tol: f64) -> Self {
        Self {
            value: sol.value,
            backend: sol.backend,
            epsilon: sol.epsilon,
            tol,
            phi: sol.phi.clone(),
            b: sol.b.clone(),
            psi: sol.psi.clone(),
            coupling: sol.coupling.triplets(0.0),
            residuals: sol.residuals,
            grid: grid.clone(),
            sample: sample.clone(),
        }
    }

    pub fn solution(&self) -> Result<VqrSolution> {
        let coupling = Coupling::from_triplets(&self.coupling, &self.grid, &self.sample)?;
        Ok(VqrSolution {
            coupling,
            phi: self.phi.clone(),
            b: self.b.clone(),
            psi: self.psi.clone(),
            value: self.value,
            backend: self.backend,
            epsilon: self.epsilon,
            residuals: self.residuals,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Qr1dFile {
    pub tol: f64,
    pub model: QuantileModel1D,
    pub quasi_spec: QuasiSpecReport,
    pub uqr: UqrReport,
    pub sample: DiscreteSample,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SolutionFile {
    Vq(TransportFile),
    Vqr(TransportFile),
    Qr1d(Qr1dFile),
}

impl SolutionFile {
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(file)?)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckReport {
    pub kind: String,
    pub checks: Vec<Check>,
    pub pass: bool,
}

#[derive(Default)]
struct Checks(Vec<Check>);

impl Checks {
    fn at_most(&mut self, name: &str, value: f64, bound: f64) {
        self.0.push(Check {
            name: name.into(),
            value,
            bound,
            pass: value <= bound,
        });
    }

    fn holds(&mut self, name: &str, ok: bool) {
        self.at_most(name, if ok { 0.0 } else { 1.0 }, 0.0);
    }

    fn finish(self, kind: &str) -> CheckReport {
        let pass = self.0.iter().all(|c| c.pass);
        CheckReport {
            kind: kind.into(),
            checks: self.0,
            pass,
        }
    }
}

/// Re-validates a solution file. `tol` overrides the tolerance stored in
/// the file for feasibility residuals.
pub fn check_solution(file: &SolutionFile, tol: Option<f64>) -> Result<CheckReport> {
    match file {
        SolutionFile::Vq(f) => check_transport(f, tol, false),
        SolutionFile::Vqr(f) => check_transport(f, tol, true),
        SolutionFile::Qr1d(f) => check_qr1d(f, tol),
    }
}

fn check_transport(f: &TransportFile, tol: Option<f64>, mean_indep: bool) -> Result<CheckReport> {
    let tol = tol.unwrap_or(f.tol);
    let (grid, sample) = (&f.grid, &f.sample);
    if f.phi.len() != grid.m() || f.psi.len() != sample.n() || f.b.rows() != grid.m() {
        return Err(VqrError::Dimension("potentials do not match the embedded grid and sample".into()));
    }
    let sol = f.solution()?;
    let mut c = Checks::default();
    let res = Residuals::of(&sol.coupling, grid, sample);
    c.at_most("grid_residual", res.grid, tol);
    c.at_most("sample_residual", res.sample, tol);
    if mean_indep {
        c.holds("sample_centered", sample.is_centered());
        c.at_most("mean_indep_residual", res.mean_indep, tol);
    }
    let ctol = default_contact_tol(f.value);
    let primal = dot(sol.coupling.pi().as_slice(), &correlation_costs(sample, grid));
    c.at_most("value_vs_coupling", (primal - f.value).abs(), ctol);
    let floor = default_mass_floor(grid, sample);
    let duals = verify_duals(&sol, sample, grid, floor);
    match f.backend {
        Backend::Exact => {
            c.at_most("duality_gap", (f.value - sol.dual_value(grid, sample)).abs(), ctol);
            c.at_most("dual_violation", duals.max_violation, ctol);
            c.at_most("support_slackness", duals.max_support_slack, ctol);
            let contact = check_relaxed_spec(&sol, sample, grid, ctol, floor)?;
            c.at_most("envelope_gap", contact.max_envelope_gap, ctol);
            c.at_most("young_gap", contact.max_young_gap, ctol);
        }
        Backend::Entropic => {
            let slack = f.epsilon * (grid.m() as f64).ln() + ctol;
            c.at_most("dual_violation", duals.max_violation, slack);
        }
    }
    Ok(c.finish(if mean_indep { "vqr" } else { "vq" }))
}

fn check_qr1d(f: &Qr1dFile, tol: Option<f64>) -> Result<CheckReport> {
    let tol = tol.unwrap_or(f.tol);
    let (model, sample) = (&f.model, &f.sample);
    let y = sample.y_scalar()?;
    let (k_levels, n) = (model.t.len(), sample.n());
    if model.ut.rows() != k_levels || model.ut.cols() != n || model.beta.cols() != sample.n_covariates() {
        return Err(VqrError::Dimension("model does not match the embedded sample".into()));
    }
    let mut c = Checks::default();
    let mut moment = 0.0f64;
    let mut bounds = 0.0f64;
    let mut slackness = 0.0f64;
    for k in 0..k_levels {
        let ut = model.ut.row(k);
        moment = moment.max((dot(sample.w(), ut) - (1.0 - model.t[k])).abs());
        for col in 0..sample.n_covariates() {
            let m: f64 = (0..n).map(|j| sample.w()[j] * ut[j] * sample.x()[(j, col)]).sum();
            moment = moment.max(m.abs());
        }
        for j in 0..n {
            bounds = bounds.max(-ut[j]).max(ut[j] - 1.0);
            let r = y[j] - model.quantile(k, sample.x_row(j));
            if r.abs() > 1e-9 * (1.0 + y[j].abs()) {
                let target = if r > 0.0 { 1.0 } else { 0.0 };
                slackness = slackness.max((ut[j] - target).abs());
            }
        }
    }
    c.at_most("moment_residual", moment, tol);
    c.at_most("ut_bounds", bounds, 0.0);
    c.at_most("complementary_slackness", slackness, tol);
    c.holds("quasi_spec_consistent", quasi_spec_check(model, sample).pass == f.quasi_spec.pass);
    let uqr = build_uqr(model)?;
    let drift = uqr
        .iter()
        .zip(&f.uqr.uqr)
        .fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
    c.holds("uqr_length", uqr.len() == f.uqr.uqr.len());
    c.at_most("uqr_reproduced", drift, 1e-12);
    Ok(c.finish("qr1d"))
}
