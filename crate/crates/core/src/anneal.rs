//! Metropolis simulated annealing over the magnetization-one spin sector.
//!
//! Moves are pair exchanges: one `+1` site and one `-1` site are flipped
//! together, which keeps `sum sigma = 1`. The temperature after epoch `n` is
//! `T0 / (n + 1)`, the telescoped form of lowering `T` by `1/(n(n+1))` each
//! epoch from `T0 = 1`.

use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ising::{energy, SpinConfiguration};
use crate::quantum::{common_dim, idempotency_loss, positive_part_entropy, DensityMatrix};
use crate::rng::{Domain, Stream};

/// Accepted moves between from-scratch rebuilds of `rho_f`.
pub const REFRESH_INTERVAL: u64 = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealConfig {
    pub initial_temperature: f64,
    /// Proposed moves per epoch, in total (not per spin).
    pub flips_per_epoch: u64,
    pub max_epochs: u64,
    pub entropy_threshold: f64,
    pub psd_tolerance: f64,
    pub seed: u64,
    pub restarts: u64,
    /// Return the state at the last epoch instead of the best one seen.
    pub return_final: bool,
    pub record_trace: bool,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        Self {
            initial_temperature: 1.0,
            flips_per_epoch: 12_000,
            max_epochs: 500,
            entropy_threshold: 0.05,
            psd_tolerance: 1e-6,
            seed: 0,
            restarts: 1,
            return_final: false,
            record_trace: false,
        }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("initial_temperature > 0", self.initial_temperature),
            ("entropy_threshold > 0", self.entropy_threshold),
            ("psd_tolerance > 0", self.psd_tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(name, format!("got {v}")));
            }
        }
        if self.flips_per_epoch < 1 {
            return Err(Error::validation("flips_per_epoch >= 1", "got 0"));
        }
        if self.max_epochs < 1 {
            return Err(Error::validation("max_epochs >= 1", "got 0"));
        }
        if self.restarts < 1 {
            return Err(Error::validation("restarts >= 1", "got 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    CriteriaMet,
    MaxEpochs,
}

/// One row of the per-epoch diagnostics, taken on the chain's current state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochTrace {
    pub epoch: u64,
    pub temperature: f64,
    pub energy: f64,
    pub entropy: f64,
    pub min_eigenvalue: f64,
    pub acceptance_rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnealReport {
    pub restart: u64,
    pub spins_final: SpinConfiguration,
    pub energy_final: f64,
    pub rho_f: DensityMatrix,
    pub entropy_final: f64,
    pub min_eigenvalue: f64,
    pub epochs_run: u64,
    pub stopped_by: StopReason,
    pub trace: Vec<EpochTrace>,
}

impl AnnealReport {
    pub fn meets_criteria(&self, config: &AnnealConfig) -> bool {
        meets(self.entropy_final, self.min_eigenvalue, config)
    }
}

fn meets(entropy: f64, min_eigenvalue: f64, config: &AnnealConfig) -> bool {
    entropy <= config.entropy_threshold && min_eigenvalue >= -config.psd_tolerance
}

/// `1/(n+1)`: the temperature left after `n` reductions by `1/(k(k+1))`
/// starting from one.
pub fn temperature_at_epoch(n: u64) -> f64 {
    1.0 / (n as f64 + 1.0)
}

/// Pair exchange: flips one uniformly chosen `+1` site and one uniformly
/// chosen `-1` site. With a single spin there is nothing to exchange and the
/// input is returned unchanged.
pub fn propose_move(spins: &SpinConfiguration, rng: &mut Stream) -> SpinConfiguration {
    let s = spins.as_slice();
    let plus: Vec<usize> = (0..s.len()).filter(|&j| s[j] == 1).collect();
    let minus: Vec<usize> = (0..s.len()).filter(|&j| s[j] == -1).collect();
    if minus.is_empty() {
        return spins.clone();
    }
    let a = plus[rng.index(plus.len())];
    let b = minus[rng.index(minus.len())];
    let mut out = s.to_vec();
    out[a] = -1;
    out[b] = 1;
    SpinConfiguration::from_trusted(out)
}

/// Metropolis rule with `k_b = 1`: downhill moves are always accepted
/// without drawing; otherwise accept with probability `exp(-(E_new - E_old)/T)`.
pub fn metropolis_accept(e_old: f64, e_new: f64, temperature: f64, rng: &mut Stream) -> bool {
    if e_new < e_old {
        return true;
    }
    rng.unit() < (-(e_new - e_old) / temperature).exp()
}

/// `rho_f = sum_j sigma_j rho_j`.
pub fn reconstruct_density(
    spins: &SpinConfiguration,
    detectors: &[DensityMatrix],
) -> Result<DensityMatrix> {
    common_dim(detectors)?;
    if spins.len() != detectors.len() {
        return Err(Error::DimensionMismatch {
            expected: detectors.len(),
            found: spins.len(),
        });
    }
    if spins.magnetization() != 1 {
        return Err(Error::Constraint(format!(
            "total magnetization is {}, must be 1",
            spins.magnetization()
        )));
    }
    DensityMatrix::combination(&spins.weights(), detectors)
}

fn combine_into(out: &mut [Complex64], spins: &[i8], mats: &[&[Complex64]]) {
    out.fill(Complex64::new(0.0, 0.0));
    for (&s, m) in spins.iter().zip(mats) {
        let s = s as f64;
        for (o, x) in out.iter_mut().zip(m.iter()) {
            *o += x * s;
        }
    }
}

fn spectrum(rho: &[Complex64], d: usize) -> (f64, f64) {
    let eig = DensityMatrix::from_hermitian_slice(rho, d).eigenvalues();
    (positive_part_entropy(&eig), eig[0])
}

/// Incrementally maintained chain state.
pub(crate) struct Chain<'a> {
    mats: Vec<&'a [Complex64]>,
    d: usize,
    spins: Vec<i8>,
    plus: Vec<usize>,
    minus: Vec<usize>,
    rho: Vec<Complex64>,
    trial: Vec<Complex64>,
    energy: f64,
    updates: u64,
}

impl<'a> Chain<'a> {
    pub(crate) fn new(detectors: &'a [DensityMatrix], spins: Vec<i8>) -> Self {
        let d = detectors[0].dim();
        let mats: Vec<&[Complex64]> = detectors.iter().map(|r| r.as_slice()).collect();
        let plus = (0..spins.len()).filter(|&j| spins[j] == 1).collect();
        let minus = (0..spins.len()).filter(|&j| spins[j] == -1).collect();
        let mut rho = vec![Complex64::new(0.0, 0.0); d * d];
        combine_into(&mut rho, &spins, &mats);
        let energy = idempotency_loss(&rho, d);
        Self {
            mats,
            d,
            spins,
            plus,
            minus,
            trial: rho.clone(),
            rho,
            energy,
            updates: 0,
        }
    }

    /// Proposes one exchange and applies the Metropolis rule.
    pub(crate) fn step(&mut self, temperature: f64, rng: &mut Stream) -> bool {
        if self.minus.is_empty() {
            return false;
        }
        let pi = rng.index(self.plus.len());
        let mi = rng.index(self.minus.len());
        let (a, b) = (self.plus[pi], self.minus[mi]);
        for ((t, r), (xa, xb)) in self
            .trial
            .iter_mut()
            .zip(&self.rho)
            .zip(self.mats[a].iter().zip(self.mats[b].iter()))
        {
            *t = r + (xb - xa) * 2.0;
        }
        let e_new = idempotency_loss(&self.trial, self.d);
        if !metropolis_accept(self.energy, e_new, temperature, rng) {
            return false;
        }
        std::mem::swap(&mut self.rho, &mut self.trial);
        self.energy = e_new;
        self.spins[a] = -1;
        self.spins[b] = 1;
        self.plus[pi] = b;
        self.minus[mi] = a;
        self.updates += 1;
        if self.updates.is_multiple_of(REFRESH_INTERVAL) {
            self.refresh();
        }
        true
    }

    pub(crate) fn refresh(&mut self) {
        combine_into(&mut self.rho, &self.spins, &self.mats);
        self.energy = idempotency_loss(&self.rho, self.d);
    }

    pub(crate) fn rho(&self) -> &[Complex64] {
        &self.rho
    }

    #[cfg(test)]
    pub(crate) fn spins(&self) -> &[i8] {
        &self.spins
    }
}

struct Candidate {
    spins: Vec<i8>,
    energy: f64,
}

fn check_input(detectors: &[DensityMatrix], config: &AnnealConfig) -> Result<()> {
    config.validate()?;
    common_dim(detectors)?;
    let m = detectors.len();
    if m.is_multiple_of(2) {
        return Err(Error::Constraint(format!(
            "M = {m} is even; total magnetization one needs an odd number of spins"
        )));
    }
    Ok(())
}

/// Runs restart 0 of `config`.
pub fn anneal(detectors: &[DensityMatrix], config: &AnnealConfig) -> Result<AnnealReport> {
    anneal_restart(detectors, config, 0)
}

/// One annealing chain driven by stream `(config.seed, Anneal, restart)`.
///
/// After every epoch the current state and the lowest-energy state seen so
/// far are checked against the entropy and positivity criteria. The chain
/// stops after the first epoch whose current state meets both. The returned
/// state is the lowest-energy criterion-satisfying state found, or the
/// lowest-energy state overall when none qualified (or the last state with
/// `return_final`).
pub fn anneal_restart(
    detectors: &[DensityMatrix],
    config: &AnnealConfig,
    restart: u64,
) -> Result<AnnealReport> {
    check_input(detectors, config)?;
    let m = detectors.len();
    let d = detectors[0].dim();
    let mut rng = Stream::new(config.seed, Domain::Anneal, restart);

    let mut order: Vec<usize> = (0..m).collect();
    rng.shuffle(&mut order);
    let mut init = vec![-1i8; m];
    for &j in &order[..m.div_ceil(2)] {
        init[j] = 1;
    }
    let mut chain = Chain::new(detectors, init);

    let mut best = Candidate {
        spins: chain.spins.clone(),
        energy: chain.energy,
    };
    let mut best_checked = false;
    let mut best_ok: Option<Candidate> = None;
    let mut trace = Vec::new();
    let mut stopped_by = StopReason::MaxEpochs;
    let mut epochs_run = 0;

    for epoch in 1..=config.max_epochs {
        let t = config.initial_temperature * temperature_at_epoch(epoch);
        let mut accepted = 0u64;
        for _ in 0..config.flips_per_epoch {
            if chain.step(t, &mut rng) {
                accepted += 1;
                if chain.energy < best.energy {
                    best.energy = chain.energy;
                    best.spins.clone_from(&chain.spins);
                    best_checked = false;
                }
            }
        }
        epochs_run = epoch;

        let (entropy, min_eig) = spectrum(chain.rho(), d);
        let current_ok = meets(entropy, min_eig, config);
        if current_ok && best_ok.as_ref().is_none_or(|c| chain.energy < c.energy) {
            best_ok = Some(Candidate {
                spins: chain.spins.clone(),
                energy: chain.energy,
            });
        }
        if !best_checked {
            best_checked = true;
            let mut rho = vec![Complex64::new(0.0, 0.0); d * d];
            combine_into(&mut rho, &best.spins, &chain.mats);
            let (be, bm) = spectrum(&rho, d);
            if meets(be, bm, config) && best_ok.as_ref().is_none_or(|c| best.energy < c.energy) {
                best_ok = Some(Candidate {
                    spins: best.spins.clone(),
                    energy: best.energy,
                });
            }
        }
        if config.record_trace {
            trace.push(EpochTrace {
                epoch,
                temperature: t,
                energy: chain.energy,
                entropy,
                min_eigenvalue: min_eig,
                acceptance_rate: accepted as f64 / config.flips_per_epoch as f64,
            });
        }
        if current_ok {
            stopped_by = StopReason::CriteriaMet;
            break;
        }
    }

    let spins = if config.return_final {
        chain.spins.clone()
    } else {
        best_ok.map_or(best.spins, |c| c.spins)
    };
    let spins_final = SpinConfiguration::from_trusted(spins);
    let rho_f = reconstruct_density(&spins_final, detectors)?;
    let eig = rho_f.eigenvalues();
    let entropy_final = positive_part_entropy(&eig);
    let min_eigenvalue = eig[0];
    if stopped_by == StopReason::CriteriaMet && !meets(entropy_final, min_eigenvalue, config) {
        // only reachable with return_final after a refresh nudged the spectrum
        stopped_by = StopReason::MaxEpochs;
    }
    Ok(AnnealReport {
        restart,
        energy_final: energy(&spins_final, detectors)?,
        spins_final,
        rho_f,
        entropy_final,
        min_eigenvalue,
        epochs_run,
        stopped_by,
        trace,
    })
}

/// Runs `config.restarts` independent chains concurrently; reports come back
/// in restart order.
pub fn anneal_restarts(
    detectors: &[DensityMatrix],
    config: &AnnealConfig,
) -> Result<Vec<AnnealReport>> {
    check_input(detectors, config)?;
    (0..config.restarts)
        .into_par_iter()
        .map(|r| anneal_restart(detectors, config, r))
        .collect()
}

/// Ranks reports: criterion-satisfying first, then by energy, then by
/// restart index.
pub fn rank_reports(reports: &mut [AnnealReport], config: &AnnealConfig) {
    reports.sort_by(|a, b| {
        b.meets_criteria(config)
            .cmp(&a.meets_criteria(config))
            .then(a.energy_final.total_cmp(&b.energy_final))
            .then(a.restart.cmp(&b.restart))
    });
}

/// Writes the per-epoch trace as CSV.
pub fn write_trace_csv<W: Write>(trace: &[EpochTrace], mut out: W) -> io::Result<()> {
    writeln!(out, "epoch,temperature,energy,entropy,min_eigenvalue,acceptance_rate")?;
    for t in trace {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            t.epoch, t.temperature, t.energy, t.entropy, t.min_eigenvalue, t.acceptance_rate
        )?;
    }
    Ok(())
}
