//! Numerical check that the best `+-1` combination of mixed signal vectors
//! approaches a single source as the number of signals grows.
//!
//! Signals are `x_j = sum_i A_ji s_i` with `A_ji` in `[0, 1]` and no row
//! normalization. The approximation is `y = sum_j w_j x_j`, `w_j = +-1`,
//! minimized exactly over all `2^M` sign vectors.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, Domain, Stream};

/// Largest `M` accepted by [`min_residual`].
pub const MAX_SIGNALS: usize = 25;

/// Gray-code steps between from-scratch recomputations of the residual.
const RESYNC_INTERVAL: u64 = 1 << 16;

#[derive(Clone, Debug, PartialEq)]
pub struct VectorScenario {
    sources: Vec<Vec<f64>>,
    mixing: Vec<Vec<f64>>,
    signals: Vec<Vec<f64>>,
    seed: u64,
}

fn combine(mixing_row: &[f64], sources: &[Vec<f64>]) -> Vec<f64> {
    let mut x = vec![0.0; sources[0].len()];
    for (a, s) in mixing_row.iter().zip(sources) {
        for (xi, si) in x.iter_mut().zip(s) {
            *xi += a * si;
        }
    }
    x
}

impl VectorScenario {
    /// Builds signals from `sources` (N vectors of equal dimension) and an
    /// `M x N` mixing matrix with entries in `[0, 1]`.
    pub fn new(sources: Vec<Vec<f64>>, mixing: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        let Some(first) = sources.first() else {
            return Err(Error::validation("N >= 1", "no sources"));
        };
        let dim = first.len();
        if dim == 0 {
            return Err(Error::validation("D >= 1", "zero-dimensional sources"));
        }
        if let Some(bad) = sources.iter().find(|s| s.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        for row in &mixing {
            if row.len() != sources.len() {
                return Err(Error::DimensionMismatch {
                    expected: sources.len(),
                    found: row.len(),
                });
            }
            if let Some(a) = row.iter().find(|a| !(0.0..=1.0).contains(*a)) {
                return Err(Error::validation("mixing entries in [0,1]", format!("got {a}")));
            }
        }
        let signals = mixing.iter().map(|row| combine(row, &sources)).collect();
        Ok(Self {
            sources,
            mixing,
            signals,
            seed,
        })
    }

    /// Sources uniform in `[-5, 5]^D` then normalized; mixing entries uniform
    /// in `[0, 1)`. Row `j` of the mixing matrix is drawn from
    /// `mixing_stream` in order, so scenarios sharing a stream and sources
    /// share a prefix of signals.
    pub fn generate(
        n: usize,
        dim: usize,
        m: usize,
        seed: u64,
        source_stream: u64,
        mixing_stream: u64,
    ) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(Error::validation("N >= 1 and D >= 1", format!("N={n}, D={dim}")));
        }
        let mut rng = Stream::new(seed, Domain::StatementSources, source_stream);
        let mut sources = Vec::with_capacity(n);
        while sources.len() < n {
            let v: Vec<f64> = (0..dim).map(|_| rng.uniform(-5.0, 5.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                sources.push(v.into_iter().map(|x| x / norm).collect());
            }
        }
        let mut rng = Stream::new(seed, Domain::StatementMixing, mixing_stream);
        let mixing = (0..m)
            .map(|_| (0..n).map(|_| rng.unit()).collect())
            .collect();
        Self::new(sources, mixing, seed)
    }

    pub fn sources(&self) -> &[Vec<f64>] {
        &self.sources
    }

    pub fn mixing(&self) -> &[Vec<f64>] {
        &self.mixing
    }

    pub fn signals(&self) -> &[Vec<f64>] {
        &self.signals
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn m(&self) -> usize {
        self.signals.len()
    }

    /// The first `m` signals.
    pub fn truncated(&self, m: usize) -> Self {
        let m = m.min(self.m());
        Self {
            sources: self.sources.clone(),
            mixing: self.mixing[..m].to_vec(),
            signals: self.signals[..m].to_vec(),
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Residual {
    pub value: f64,
    pub signs: Vec<i8>,
}

fn residual_of(mask: u64, signals: &[Vec<f64>], target: &[f64]) -> f64 {
    let mut r: Vec<f64> = target.iter().map(|t| -t).collect();
    for (j, x) in signals.iter().enumerate() {
        let w = if mask >> j & 1 == 1 { -1.0 } else { 1.0 };
        for (ri, xi) in r.iter_mut().zip(x) {
            *ri += w * xi;
        }
    }
    r.iter().map(|v| v * v).sum::<f64>()
}

/// `a` precedes `b` in lexicographic order of sign vectors with `+1 < -1`
/// (bit `j` set means `w_j = -1`).
fn lex_less(a: u64, b: u64) -> bool {
    let diff = a ^ b;
    diff != 0 && a >> diff.trailing_zeros() & 1 == 0
}

/// Exact `min_w ||sum_j w_j x_j - s_k||` over `w in {-1, +1}^M`.
///
/// Ties go to the lexicographically smallest sign vector with `+1 < -1`.
pub fn min_residual(scenario: &VectorScenario, target: usize) -> Result<Residual> {
    let m = scenario.m();
    if m == 0 {
        return Err(Error::validation("M >= 1", "no signals"));
    }
    if m > MAX_SIGNALS {
        return Err(Error::Size(format!(
            "M = {m} needs 2^{m} sign vectors, above the cap of M = {MAX_SIGNALS}"
        )));
    }
    let Some(target_vec) = scenario.sources.get(target) else {
        return Err(Error::validation(
            "target index < N",
            format!("target {target} with N = {}", scenario.sources.len()),
        ));
    };
    let signals = &scenario.signals;

    // Gray code walk starting from all +1.
    let mut r: Vec<f64> = target_vec.iter().map(|t| -t).collect();
    for x in signals {
        for (ri, xi) in r.iter_mut().zip(x) {
            *ri += xi;
        }
    }
    let mut mask = 0u64;
    let mut best_mask = 0u64;
    let mut best = r.iter().map(|v| v * v).sum::<f64>();
    for step in 1..1u64 << m {
        let j = step.trailing_zeros() as usize;
        mask ^= 1 << j;
        let w = if mask >> j & 1 == 1 { -2.0 } else { 2.0 };
        if step % RESYNC_INTERVAL == 0 {
            r = target_vec.iter().map(|t| -t).collect();
            for (jj, x) in signals.iter().enumerate() {
                let ww = if mask >> jj & 1 == 1 { -1.0 } else { 1.0 };
                for (ri, xi) in r.iter_mut().zip(x) {
                    *ri += ww * xi;
                }
            }
        } else {
            for (ri, xi) in r.iter_mut().zip(&signals[j]) {
                *ri += w * xi;
            }
        }
        let v = r.iter().map(|v| v * v).sum::<f64>();
        if v < best || (v == best && lex_less(mask, best_mask)) {
            best = v;
            best_mask = mask;
        }
    }
    let signs = (0..m)
        .map(|j| if best_mask >> j & 1 == 1 { -1 } else { 1 })
        .collect();
    Ok(Residual {
        value: residual_of(best_mask, signals, target_vec).sqrt(),
        signs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatementConfig {
    pub n: usize,
    pub dim: usize,
    pub m_list: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub target: usize,
    /// Reuse one growing signal list per trial; otherwise every `M` gets a
    /// fresh mixing draw.
    pub nested: bool,
}

impl Default for StatementConfig {
    fn default() -> Self {
        Self {
            n: 5,
            dim: 8,
            m_list: vec![5, 9, 13, 17, 21],
            trials: 20,
            seed: 0,
            target: 0,
            nested: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StatementRow {
    pub trial: usize,
    pub m: usize,
    pub inverse_m: f64,
    pub residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StatementSummary {
    pub m: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatementSweep {
    /// Ordered by trial, then by position in `m_list`.
    pub rows: Vec<StatementRow>,
    pub summary: Vec<StatementSummary>,
}

/// Residual versus `M` over independent trials. Each trial has its own
/// sources; in nested mode the signals for smaller `M` are a prefix of
/// those for larger `M`.
pub fn statement_sweep(config: &StatementConfig) -> Result<StatementSweep> {
    if config.m_list.is_empty() {
        return Err(Error::validation("non-empty M list", "no M values"));
    }
    if let Some(&m) = config.m_list.iter().find(|&&m| m == 0 || m > MAX_SIGNALS) {
        return Err(Error::Size(format!(
            "M = {m} outside 1..={MAX_SIGNALS} for exhaustive search"
        )));
    }
    if config.target >= config.n {
        return Err(Error::validation(
            "target index < N",
            format!("target {} with N = {}", config.target, config.n),
        ));
    }
    let m_max = *config.m_list.iter().max().expect("non-empty");
    let per_trial: Vec<Vec<StatementRow>> = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let t = trial as u64;
            let full = if config.nested {
                Some(VectorScenario::generate(
                    config.n, config.dim, m_max, config.seed, t, t,
                )?)
            } else {
                None
            };
            config
                .m_list
                .iter()
                .map(|&m| {
                    let scenario = match &full {
                        Some(f) => f.truncated(m),
                        None => {
                            let stream = derive_seed(t, Domain::StatementMixing, m as u64);
                            VectorScenario::generate(
                                config.n, config.dim, m, config.seed, t, stream,
                            )?
                        }
                    };
                    let r = min_residual(&scenario, config.target)?;
                    Ok(StatementRow {
                        trial,
                        m,
                        inverse_m: 1.0 / m as f64,
                        residual: r.value,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<StatementRow> = per_trial.into_iter().flatten().collect();

    let summary = config
        .m_list
        .iter()
        .enumerate()
        .filter(|(i, m)| !config.m_list[..*i].contains(m))
        .map(|(_, &m)| {
            let vals: Vec<f64> = rows.iter().filter(|r| r.m == m).map(|r| r.residual).collect();
            let n = vals.len().max(1) as f64;
            StatementSummary {
                m,
                mean: vals.iter().sum::<f64>() / n,
                min: vals.iter().copied().fold(f64::INFINITY, f64::min),
                max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    Ok(StatementSweep { rows, summary })
}

/// CSV with columns `trial,M,inverse_M,residual`.
pub fn write_statement_csv<W: Write>(rows: &[StatementRow], mut out: W) -> io::Result<()> {
    writeln!(out, "trial,M,inverse_M,residual")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.trial, r.m, r.inverse_m, r.residual)?;
    }
    Ok(())
}
