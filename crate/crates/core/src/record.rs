//! Serializable per-solution summaries shared by the CLI result files and
//! the sweep tables.

use serde::Serialize;

use crate::anneal::{AnnealReport, StopReason};
use crate::error::Result;
use crate::evaluate::{match_sources, SourceMatch};
use crate::newton::NewtonReport;
use crate::quantum::{positive_part_entropy, DensityMatrix, PureState};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolutionRecord {
    pub index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spins: Option<Vec<i8>>,
    /// Newton loss or Ising energy; the two coincide on spin configurations.
    pub objective: f64,
    pub trace: f64,
    pub entropy: f64,
    pub min_eigenvalue: f64,
    pub matched_source: usize,
    pub matched_fidelity: f64,
    pub fidelities: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub restart: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stopped_by: Option<StopReason>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs_run: Option<u64>,
}

fn base(index: usize, objective: f64, rho: &DensityMatrix, sources: &[PureState]) -> Result<SolutionRecord> {
    let eig = rho.eigenvalues();
    let SourceMatch {
        fidelities,
        index: matched_source,
        fidelity: matched_fidelity,
    } = match_sources(rho, sources)?;
    Ok(SolutionRecord {
        index,
        weights: None,
        spins: None,
        objective,
        trace: rho.trace(),
        entropy: positive_part_entropy(&eig),
        min_eigenvalue: eig[0],
        matched_source,
        matched_fidelity,
        fidelities,
        converged: None,
        iterations: None,
        restart: None,
        stopped_by: None,
        epochs_run: None,
    })
}

impl SolutionRecord {
    pub fn from_newton(index: usize, report: &NewtonReport, sources: &[PureState]) -> Result<Self> {
        let mut r = base(index, report.loss_final, &report.rho_f, sources)?;
        r.weights = Some(report.w_final.as_slice().to_vec());
        r.converged = Some(report.converged);
        r.iterations = Some(report.iterations);
        Ok(r)
    }

    pub fn from_anneal(index: usize, report: &AnnealReport, sources: &[PureState]) -> Result<Self> {
        let mut r = base(index, report.energy_final, &report.rho_f, sources)?;
        r.entropy = report.entropy_final;
        r.min_eigenvalue = report.min_eigenvalue;
        r.spins = Some(report.spins_final.as_slice().to_vec());
        r.restart = Some(report.restart);
        r.stopped_by = Some(report.stopped_by);
        r.epochs_run = Some(report.epochs_run);
        Ok(r)
    }
}
