//! Synthetic instances: pure sources, a row-stochastic mixing matrix and the
//! mixed detector states `rho_j = sum_i A_ji |phi_i><phi_i|`.
//!
//! Sources and mixing rows are drawn from separate random streams, so a
//! scenario with more detectors shares its sources and its leading mixing
//! rows with a smaller one generated from the same seed.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{outer_product, DensityMatrix, PureState};
use crate::rng::{Domain, Stream};

/// Version tag written into scenario files.
pub const SCENARIO_VERSION: u32 = 1;
/// Default lower bound on `|<phi_i|phi_j>|` for distinct sources.
pub const DEFAULT_ORTHOGONALITY_THRESHOLD: f64 = 1e-3;

const ROW_SUM_TOL: f64 = 1e-12;
const MIX_TOL: f64 = 1e-12;
const MAX_REDRAWS: usize = 10_000;

/// Draws `c_k ~ U[-5, 5]` for `k = 0..d` and normalizes.
pub fn sample_pure_state(d: usize, rng: &mut Stream) -> Result<PureState> {
    if d < 2 {
        return Err(Error::validation(
            "pure state dimension >= 2",
            format!("got dimension {d}"),
        ));
    }
    loop {
        let coeffs: Vec<f64> = (0..d).map(|_| rng.uniform(-5.0, 5.0)).collect();
        if coeffs.iter().any(|&c| c != 0.0) {
            return PureState::from_real(&coeffs);
        }
    }
}

/// An `M x N` matrix with entries in `[0, 1]` and unit row sums.
#[derive(Clone, Debug, PartialEq)]
pub struct MixingMatrix {
    rows: Vec<Vec<f64>>,
}

impl MixingMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || n == 0 {
            return Err(Error::validation("mixing matrix non-empty", "no rows or columns"));
        }
        for (j, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            if let Some(x) = row.iter().find(|x| !(0.0..=1.0).contains(*x)) {
                return Err(Error::validation(
                    "mixing entries in [0,1]",
                    format!("row {j} has entry {x}"),
                ));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::validation(
                    "mixing rows sum to 1",
                    format!("row {j} sums to {sum:.17}"),
                ));
            }
        }
        Ok(Self { rows })
    }

    /// Number of detectors.
    pub fn m(&self) -> usize {
        self.rows.len()
    }

    /// Number of sources.
    pub fn n(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.rows[j]
    }
}

/// Each row: `N` draws from `U[0, 1)` divided by their sum.
pub fn sample_mixing_matrix(m: usize, n: usize, rng: &mut Stream) -> Result<MixingMatrix> {
    if m == 0 || n == 0 {
        return Err(Error::validation(
            "mixing matrix non-empty",
            format!("M = {m}, N = {n}"),
        ));
    }
    let mut rows = Vec::with_capacity(m);
    for _ in 0..m {
        loop {
            let raw: Vec<f64> = (0..n).map(|_| rng.unit()).collect();
            let sum: f64 = raw.iter().sum();
            if sum > 0.0 {
                rows.push(raw.iter().map(|x| x / sum).collect());
                break;
            }
        }
    }
    MixingMatrix::new(rows)
}

/// `rho_j = sum_i A_ji |phi_i><phi_i|` for every detector row `j`.
pub fn mix(sources: &[PureState], mixing: &MixingMatrix) -> Result<Vec<DensityMatrix>> {
    if sources.len() != mixing.n() {
        return Err(Error::DimensionMismatch {
            expected: mixing.n(),
            found: sources.len(),
        });
    }
    let d = sources[0].dim();
    if let Some(bad) = sources.iter().find(|s| s.dim() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: bad.dim(),
        });
    }
    let projectors: Vec<DensityMatrix> = sources.iter().map(outer_product).collect();
    mixing
        .rows()
        .iter()
        .map(|row| {
            let mut acc = vec![Complex64::new(0.0, 0.0); d * d];
            for (a, p) in row.iter().zip(&projectors) {
                for (x, y) in acc.iter_mut().zip(p.as_slice()) {
                    *x += y * *a;
                }
            }
            DensityMatrix::physical(DMatrix::from_vec(d, d, acc))
        })
        .collect()
}

/// Options for [`generate_scenario_with`] and [`Scenario::validate_with`].
#[derive(Clone, Copy, Debug)]
pub struct ScenarioOptions {
    pub orthogonality_threshold: f64,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self {
            orthogonality_threshold: DEFAULT_ORTHOGONALITY_THRESHOLD,
        }
    }
}

/// A synthetic q-CPP instance with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    seed: u64,
    sources: Vec<PureState>,
    mixing: MixingMatrix,
    detectors: Vec<DensityMatrix>,
}

impl Scenario {
    /// Assembles and validates a scenario.
    pub fn new(
        seed: u64,
        sources: Vec<PureState>,
        mixing: MixingMatrix,
        detectors: Vec<DensityMatrix>,
    ) -> Result<Self> {
        let s = Self {
            seed,
            sources,
            mixing,
            detectors,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn d(&self) -> usize {
        self.sources[0].dim()
    }

    pub fn n_sources(&self) -> usize {
        self.sources.len()
    }

    pub fn m_detectors(&self) -> usize {
        self.detectors.len()
    }

    pub fn sources(&self) -> &[PureState] {
        &self.sources
    }

    pub fn mixing(&self) -> &MixingMatrix {
        &self.mixing
    }

    pub fn detectors(&self) -> &[DensityMatrix] {
        &self.detectors
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with(&ScenarioOptions::default())
    }

    pub fn validate_with(&self, opts: &ScenarioOptions) -> Result<()> {
        let n = self.sources.len();
        let m = self.detectors.len();
        if n == 0 {
            return Err(Error::validation("at least one source", "no sources"));
        }
        let d = self.d();
        check_sizes(d, n, m)?;
        if self.mixing.n() != n || self.mixing.m() != m {
            return Err(Error::validation(
                "mixing shape is M x N",
                format!(
                    "mixing is {}x{}, expected {m}x{n}",
                    self.mixing.m(),
                    self.mixing.n()
                ),
            ));
        }
        if let Some(bad) = self.sources.iter().find(|s| s.dim() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bad.dim(),
            });
        }
        if let Some((i, j, overlap)) = near_orthogonal_pair(&self.sources, opts.orthogonality_threshold)
        {
            return Err(Error::validation(
                "sources non-orthogonal",
                format!("|<phi_{i}|phi_{j}>| = {overlap:e}"),
            ));
        }
        let expected = mix(&self.sources, &self.mixing)?;
        for (j, (got, want)) in self.detectors.iter().zip(&expected).enumerate() {
            if got.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: got.dim(),
                });
            }
            let dev = got
                .as_slice()
                .iter()
                .zip(want.as_slice())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            if dev > MIX_TOL {
                return Err(Error::validation(
                    "detectors equal mixture of sources",
                    format!("detector {j} deviates by {dev:e}"),
                ));
            }
        }
        Ok(())
    }

    /// Serializes to the JSON scenario format.
    pub fn to_json(&self) -> Result<String> {
        let file = ScenarioFile {
            version: SCENARIO_VERSION,
            seed: self.seed,
            d: self.d(),
            n_sources: self.n_sources(),
            m_detectors: self.m_detectors(),
            sources: self
                .sources
                .iter()
                .map(|s| s.amplitudes().iter().map(|z| [z.re, z.im]).collect())
                .collect(),
            mixing: self.mixing.rows().to_vec(),
            detectors: self.detectors.iter().map(matrix_to_rows).collect(),
        };
        let mut text = serde_json::to_string_pretty(&file).map_err(|e| Error::Parse(e.to_string()))?;
        text.push('\n');
        Ok(text)
    }

    /// Parses and re-validates a JSON scenario.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if file.version != SCENARIO_VERSION {
            return Err(Error::Parse(format!(
                "unsupported scenario version {}",
                file.version
            )));
        }
        if file.sources.len() != file.n_sources
            || file.detectors.len() != file.m_detectors
            || file.mixing.len() != file.m_detectors
        {
            return Err(Error::validation(
                "declared sizes match contents",
                format!(
                    "n_sources={} (found {}), m_detectors={} (found {} detectors, {} mixing rows)",
                    file.n_sources,
                    file.sources.len(),
                    file.m_detectors,
                    file.detectors.len(),
                    file.mixing.len()
                ),
            ));
        }
        let sources = file
            .sources
            .iter()
            .map(|amps| {
                if amps.len() != file.d {
                    return Err(Error::DimensionMismatch {
                        expected: file.d,
                        found: amps.len(),
                    });
                }
                PureState::new(amps.iter().map(|&[re, im]| Complex64::new(re, im)).collect())
            })
            .collect::<Result<Vec<_>>>()?;
        let mixing = MixingMatrix::new(file.mixing)?;
        let detectors = file
            .detectors
            .iter()
            .map(|rows| rows_to_matrix(rows, file.d).and_then(DensityMatrix::physical))
            .collect::<Result<Vec<_>>>()?;
        Scenario::new(file.seed, sources, mixing, detectors)
    }
}

fn check_sizes(d: usize, n: usize, m: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::validation("d >= 2", format!("d = {d}")));
    }
    if n == 0 {
        return Err(Error::validation("at least one source", "N = 0"));
    }
    if d * d <= n {
        return Err(Error::validation("d^2 > N", format!("d = {d}, N = {n}")));
    }
    if m < n {
        return Err(Error::validation("M >= N", format!("M = {m}, N = {n}")));
    }
    Ok(())
}

fn near_orthogonal_pair(sources: &[PureState], threshold: f64) -> Option<(usize, usize, f64)> {
    for i in 0..sources.len() {
        for j in i + 1..sources.len() {
            let overlap = sources[i].inner(&sources[j]).norm();
            if overlap <= threshold {
                return Some((i, j, overlap));
            }
        }
    }
    None
}

/// Generates a scenario with default options.
pub fn generate_scenario(d: usize, n: usize, m: usize, seed: u64) -> Result<Scenario> {
    generate_scenario_with(d, n, m, seed, &ScenarioOptions::default())
}

/// Sources come from the `Sources` stream, each redrawn until it clears the
/// orthogonality threshold against all earlier ones; mixing rows come from
/// the `Mixing` stream.
pub fn generate_scenario_with(
    d: usize,
    n: usize,
    m: usize,
    seed: u64,
    opts: &ScenarioOptions,
) -> Result<Scenario> {
    check_sizes(d, n, m)?;
    let mut source_rng = Stream::new(seed, Domain::Sources, 0);
    let mut sources: Vec<PureState> = Vec::with_capacity(n);
    while sources.len() < n {
        let mut redraws = 0;
        let candidate = loop {
            let c = sample_pure_state(d, &mut source_rng)?;
            if sources
                .iter()
                .all(|s| s.inner(&c).norm() > opts.orthogonality_threshold)
            {
                break c;
            }
            redraws += 1;
            if redraws > MAX_REDRAWS {
                return Err(Error::validation(
                    "sources non-orthogonal",
                    "could not draw a non-orthogonal source set",
                ));
            }
        };
        sources.push(candidate);
    }
    let mixing = sample_mixing_matrix(m, n, &mut Stream::new(seed, Domain::Mixing, 0))?;
    let detectors = mix(&sources, &mixing)?;
    let s = Scenario {
        seed,
        sources,
        mixing,
        detectors,
    };
    s.validate_with(opts)?;
    Ok(s)
}

pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, scenario.to_json()?)?;
    Ok(())
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let text = fs::read_to_string(path)?;
    Scenario::from_json(&text)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    version: u32,
    seed: u64,
    d: usize,
    n_sources: usize,
    m_detectors: usize,
    sources: Vec<Vec<[f64; 2]>>,
    mixing: Vec<Vec<f64>>,
    detectors: Vec<Vec<Vec<[f64; 2]>>>,
}

/// Row-major `[re, im]` pairs.
fn matrix_to_rows(rho: &DensityMatrix) -> Vec<Vec<[f64; 2]>> {
    let m = rho.entries();
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

fn rows_to_matrix(rows: &[Vec<[f64; 2]>], d: usize) -> Result<DMatrix<Complex64>> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::validation(
            "detector matrices are d x d",
            format!("expected {d}x{d}"),
        ));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| {
        let [re, im] = rows[i][j];
        Complex64::new(re, im)
    }))
}
