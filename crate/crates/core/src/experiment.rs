//! Solver sweeps over detector counts and scenario seeds.
//!
//! Cell `(M, seed)` uses `generate_scenario(d, N, M, seed)`, so all cells
//! with one seed share sources and their mixing rows form nested prefixes.
//! Solver randomness for a cell comes from `derive_seed(seed, Sweep, M)`.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anneal::{anneal_restarts, rank_reports, AnnealConfig};
use crate::error::{Error, Result};
use crate::evaluate::cross_fidelities;
use crate::newton::{multi_restart, NewtonConfig};
use crate::record::SolutionRecord;
use crate::rng::{derive_seed, Domain};
use crate::scenario::generate_scenario;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Newton,
    Anneal,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Newton => "newton",
            SolverKind::Anneal => "anneal",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepConfig {
    pub kind: SolverKind,
    pub d: usize,
    pub n: usize,
    pub m_list: Vec<usize>,
    pub seeds: Vec<u64>,
    pub restarts: usize,
    pub newton: NewtonConfig,
    pub anneal: AnnealConfig,
}

/// One recovered state in one cell.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub kind: SolverKind,
    pub m: usize,
    pub seed: u64,
    pub solution: SolutionRecord,
    /// `|<s_k|s_j>|` for the matched source `k` against every source `j`.
    pub reference: Vec<f64>,
}

impl SweepRow {
    /// Largest gap between an unmatched fidelity and the corresponding
    /// source cross-fidelity.
    pub fn max_unmatched_gap(&self) -> f64 {
        let k = self.solution.matched_source;
        self.solution
            .fidelities
            .iter()
            .zip(&self.reference)
            .enumerate()
            .filter(|(j, _)| *j != k)
            .map(|(_, (f, c))| (f - c).abs())
            .fold(0.0, f64::max)
    }
}

fn run_cell(cfg: &SweepConfig, m: usize, seed: u64) -> Result<Vec<SweepRow>> {
    let scenario = generate_scenario(cfg.d, cfg.n, m, seed)?;
    let sources = scenario.sources();
    let cross = cross_fidelities(sources);
    let cell_seed = derive_seed(seed, Domain::Sweep, m as u64);
    let solutions = match cfg.kind {
        SolverKind::Newton => multi_restart(scenario.detectors(), cfg.restarts, cell_seed, &cfg.newton)?
            .iter()
            .enumerate()
            .map(|(i, r)| SolutionRecord::from_newton(i, r, sources))
            .collect::<Result<Vec<_>>>()?,
        SolverKind::Anneal => {
            let acfg = AnnealConfig {
                seed: cell_seed,
                restarts: cfg.restarts as u64,
                ..cfg.anneal.clone()
            };
            let mut reports = anneal_restarts(scenario.detectors(), &acfg)?;
            rank_reports(&mut reports, &acfg);
            let mut seen = Vec::new();
            let mut out = Vec::new();
            for r in &reports {
                if seen.contains(&r.spins_final) {
                    continue;
                }
                seen.push(r.spins_final.clone());
                out.push(SolutionRecord::from_anneal(out.len(), r, sources)?);
            }
            out
        }
    };
    Ok(solutions
        .into_iter()
        .map(|solution| {
            let k = solution.matched_source;
            let reference = (0..sources.len())
                .map(|j| {
                    if j == k {
                        1.0
                    } else {
                        crate::evaluate::cross_fidelity(&cross, k, j).unwrap_or(0.0)
                    }
                })
                .collect();
            SweepRow {
                kind: cfg.kind,
                m,
                seed,
                solution,
                reference,
            }
        })
        .collect())
}

/// Runs every `(M, seed)` cell; rows are ordered by `M` list position, then
/// seed list position, then solution rank.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    if cfg.m_list.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::validation("non-empty M and seed lists", "empty list"));
    }
    if cfg.restarts == 0 {
        return Err(Error::validation("restarts >= 1", "restarts = 0"));
    }
    if cfg.kind == SolverKind::Anneal {
        if let Some(m) = cfg.m_list.iter().find(|m| *m % 2 == 0) {
            return Err(Error::Constraint(format!(
                "M = {m} is even; annealing needs an odd number of detectors"
            )));
        }
    }
    let cells: Vec<(usize, u64)> = cfg
        .m_list
        .iter()
        .flat_map(|&m| cfg.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let rows: Vec<Vec<SweepRow>> = cells
        .par_iter()
        .map(|&(m, s)| run_cell(cfg, m, s))
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Plot-ready CSV: one line per solution with per-source fidelities and the
/// matched source's cross-fidelities.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], n: usize, mut out: W) -> io::Result<()> {
    write!(out, "kind,M,seed,solution,matched_source,matched_fidelity,objective,entropy,min_eigenvalue")?;
    for j in 0..n {
        write!(out, ",fidelity_{j}")?;
    }
    for j in 0..n {
        write!(out, ",cross_{j}")?;
    }
    writeln!(out)?;
    for r in rows {
        let s = &r.solution;
        write!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.kind.name(),
            r.m,
            r.seed,
            s.index,
            s.matched_source,
            s.matched_fidelity,
            s.objective,
            s.entropy,
            s.min_eigenvalue
        )?;
        for f in s.fidelities.iter().chain(&r.reference) {
            write!(out, ",{f}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Median of a non-empty slice (mean of the two middle values for even length).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
