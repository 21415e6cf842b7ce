//! Mapping of the idempotency loss at `w_j = sigma_j in {-1, +1}` onto a
//! classical spin Hamiltonian with two-, three- and four-body couplings:
//!
//! ```text
//! H(sigma) = sum_ijkl A_ijkl s_i s_j s_k s_l + sum_ijk B_ijk s_i s_j s_k + sum_ij C_ij s_i s_j
//! A_ijkl = Tr(rho_i rho_j rho_k rho_l)
//! B_ijk  = -Tr((rho_i rho_j) rho_k) - Tr(rho_i (rho_j rho_k)) = -2 Tr(rho_i rho_j rho_k)
//! C_ij   = Tr(rho_i rho_j)
//! ```
//!
//! Sums run over all index tuples, repeats included, so `H(sigma)` is exactly
//! `Tr rho_f^4 - 2 Tr rho_f^3 + Tr rho_f^2 = F(sigma)` with no constant
//! offset. Only the real part of each trace is stored: the imaginary parts
//! cancel between an index tuple and its reverse in the full sums (and are
//! zero outright for real detector matrices).
//!
//! The spins live in the sector `sum_j sigma_j = 1` (odd `M`), which keeps
//! `Tr rho_f = 1`.

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quantum::{common_dim, idempotency_loss, DensityMatrix};

/// Largest sector size [`brute_force_ground_state`] will enumerate.
pub const MAX_SECTOR_SIZE: u64 = 10_000_000;

/// Spins `sigma in {-1, +1}^M` with odd `M` and total magnetization one.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct SpinConfiguration(Vec<i8>);

impl SpinConfiguration {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if let Some(s) = spins.iter().find(|s| **s != 1 && **s != -1) {
            return Err(Error::Constraint(format!("spin value {s} is not +1 or -1")));
        }
        if spins.len().is_multiple_of(2) {
            return Err(Error::Constraint(format!(
                "{} spins: the number of spins must be odd",
                spins.len()
            )));
        }
        let total: i64 = spins.iter().map(|&s| s as i64).sum();
        if total != 1 {
            return Err(Error::Constraint(format!(
                "total magnetization is {total}, must be 1"
            )));
        }
        Ok(Self(spins))
    }

    pub(crate) fn from_trusted(spins: Vec<i8>) -> Self {
        debug_assert!(Self::new(spins.clone()).is_ok());
        Self(spins)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn magnetization(&self) -> i64 {
        self.0.iter().map(|&s| s as i64).sum()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.0.iter().map(|&s| s as f64).collect()
    }
}

/// Dense coupling tensors, row-major with the last index fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct IsingCoefficients {
    m: usize,
    order4: Vec<f64>,
    order3: Vec<f64>,
    order2: Vec<f64>,
}

fn ensure_odd(m: usize) -> Result<()> {
    if m.is_multiple_of(2) {
        return Err(Error::Constraint(format!(
            "M = {m} is even; total magnetization one needs an odd number of spins"
        )));
    }
    Ok(())
}

fn matmul(a: &[Complex64], b: &[Complex64], d: usize) -> Vec<Complex64> {
    // column-major: (ab)[r + c d] = sum_k a[r + k d] b[k + c d]
    let mut out = vec![Complex64::new(0.0, 0.0); d * d];
    for c in 0..d {
        for k in 0..d {
            let bkc = b[k + c * d];
            for r in 0..d {
                out[r + c * d] += a[r + k * d] * bkc;
            }
        }
    }
    out
}

fn re_trace_product(a: &[Complex64], b: &[Complex64], d: usize) -> f64 {
    let mut t = 0.0;
    for r in 0..d {
        for c in 0..d {
            t += (a[r + c * d] * b[c + r * d]).re;
        }
    }
    t
}

/// Builds `A`, `B`, `C` from the detector matrices.
pub fn build_coefficients(detectors: &[DensityMatrix]) -> Result<IsingCoefficients> {
    let d = common_dim(detectors)?;
    let m = detectors.len();
    ensure_odd(m)?;
    let rho: Vec<&[Complex64]> = detectors.iter().map(|r| r.as_slice()).collect();
    let pairs: Vec<Vec<Complex64>> = (0..m * m)
        .into_par_iter()
        .map(|ij| matmul(rho[ij / m], rho[ij % m], d))
        .collect();

    let order2: Vec<f64> = (0..m * m)
        .map(|ij| (0..d).map(|r| pairs[ij][r + r * d].re).sum())
        .collect();
    let order3: Vec<f64> = (0..m * m * m)
        .into_par_iter()
        .map(|ijk| -2.0 * re_trace_product(&pairs[ijk / m], rho[ijk % m], d))
        .collect();
    let order4: Vec<f64> = (0..m * m)
        .into_par_iter()
        .flat_map_iter(|ij| {
            let left = &pairs[ij];
            pairs.iter().map(move |right| re_trace_product(left, right, d))
        })
        .collect();

    Ok(IsingCoefficients {
        m,
        order4,
        order3,
        order2,
    })
}

impl IsingCoefficients {
    /// Number of spins.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn a(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let m = self.m;
        self.order4[((i * m + j) * m + k) * m + l]
    }

    pub fn b(&self, i: usize, j: usize, k: usize) -> f64 {
        let m = self.m;
        self.order3[(i * m + j) * m + k]
    }

    pub fn c(&self, i: usize, j: usize) -> f64 {
        self.order2[i * self.m + j]
    }

    /// Tensor shapes `(len A, len B, len C)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.order4.len(), self.order3.len(), self.order2.len())
    }

    /// `H(sigma)` by full contraction, `O(M^4)`.
    pub fn energy(&self, spins: &SpinConfiguration) -> Result<f64> {
        if spins.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                found: spins.len(),
            });
        }
        let s = spins.weights();
        let m = self.m;
        let mut e4 = 0.0;
        for (ij, chunk) in self.order4.chunks_exact(m * m).enumerate() {
            let sij = s[ij / m] * s[ij % m];
            let mut inner = 0.0;
            for (kl, a) in chunk.iter().enumerate() {
                inner += a * s[kl / m] * s[kl % m];
            }
            e4 += sij * inner;
        }
        let mut e3 = 0.0;
        for (ijk, b) in self.order3.iter().enumerate() {
            e3 += b * s[ijk / (m * m)] * s[(ijk / m) % m] * s[ijk % m];
        }
        let mut e2 = 0.0;
        for (ij, c) in self.order2.iter().enumerate() {
            e2 += c * s[ij / m] * s[ij % m];
        }
        Ok(e4 + e3 + e2)
    }

    /// Writes the coefficients as text, one coupling per line:
    ///
    /// ```text
    /// # ising coefficients v1
    /// m <M>
    /// A <i> <j> <k> <l> <value>
    /// B <i> <j> <k> <value>
    /// C <i> <j> <value>
    /// ```
    ///
    /// Indices are zero-based; values use the shortest decimal form that
    /// parses back to the same `f64`.
    pub fn write_text<W: Write>(&self, mut out: W) -> io::Result<()> {
        let m = self.m;
        writeln!(out, "# ising coefficients v1")?;
        writeln!(
            out,
            "# H = sum A[i,j,k,l] s_i s_j s_k s_l + sum B[i,j,k] s_i s_j s_k + sum C[i,j] s_i s_j"
        )?;
        writeln!(out, "m {m}")?;
        let mut line = String::new();
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    for l in 0..m {
                        line.clear();
                        let _ = writeln!(line, "A {i} {j} {k} {l} {}", self.a(i, j, k, l));
                        out.write_all(line.as_bytes())?;
                    }
                }
            }
        }
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    writeln!(out, "B {i} {j} {k} {}", self.b(i, j, k))?;
                }
            }
        }
        for i in 0..m {
            for j in 0..m {
                writeln!(out, "C {i} {j} {}", self.c(i, j))?;
            }
        }
        Ok(())
    }

    /// Parses the format produced by [`IsingCoefficients::write_text`].
    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut m = None;
        let mut out: Option<IsingCoefficients> = None;
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Parse(format!("line {}: malformed `{line}`", lineno + 1));
            let idx = |s: &str| s.parse::<usize>().map_err(|_| bad());
            match fields[0] {
                "m" if fields.len() == 2 => {
                    let mm = idx(fields[1])?;
                    m = Some(mm);
                    out = Some(IsingCoefficients {
                        m: mm,
                        order4: vec![f64::NAN; mm.pow(4)],
                        order3: vec![f64::NAN; mm.pow(3)],
                        order2: vec![f64::NAN; mm.pow(2)],
                    });
                }
                tag @ ("A" | "B" | "C") => {
                    let (Some(mm), Some(c)) = (m, out.as_mut()) else {
                        return Err(bad());
                    };
                    let arity = match tag {
                        "A" => 4,
                        "B" => 3,
                        _ => 2,
                    };
                    if fields.len() != arity + 2 {
                        return Err(bad());
                    }
                    let mut flat = 0;
                    for f in &fields[1..=arity] {
                        let i = idx(f)?;
                        if i >= mm {
                            return Err(bad());
                        }
                        flat = flat * mm + i;
                    }
                    let v: f64 = fields[arity + 1].parse().map_err(|_| bad())?;
                    match tag {
                        "A" => c.order4[flat] = v,
                        "B" => c.order3[flat] = v,
                        _ => c.order2[flat] = v,
                    }
                }
                _ => return Err(bad()),
            }
        }
        let c = out.ok_or_else(|| Error::Parse("missing `m` line".into()))?;
        if c.order4.iter().chain(&c.order3).chain(&c.order2).any(|v| v.is_nan()) {
            return Err(Error::Parse("missing coefficient entries".into()));
        }
        Ok(c)
    }
}

fn check_spins(spins: &SpinConfiguration, detectors: &[DensityMatrix]) -> Result<usize> {
    let d = common_dim(detectors)?;
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
    Ok(d)
}

/// `H(sigma)` through `rho_f = sum_j sigma_j rho_j`: `O(d^3)` after forming
/// `rho_f`, independent of the size of the coupling tensors.
pub fn energy(spins: &SpinConfiguration, detectors: &[DensityMatrix]) -> Result<f64> {
    let d = check_spins(spins, detectors)?;
    let mut rho = vec![Complex64::new(0.0, 0.0); d * d];
    for (&s, r) in spins.as_slice().iter().zip(detectors) {
        for (a, x) in rho.iter_mut().zip(r.as_slice()) {
            *a += x * s as f64;
        }
    }
    Ok(idempotency_loss(&rho, d))
}

/// Exact minimum over the magnetization-one sector.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroundState {
    pub spins: SpinConfiguration,
    pub energy: f64,
    /// Number of sector configurations evaluated.
    pub visited: u64,
}

fn binomial(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
        if r > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    r as u64
}

/// Size of the magnetization-one sector for `m` spins.
pub fn sector_size(m: usize) -> u64 {
    binomial(m as u64, (m as u64).div_ceil(2))
}

/// Leaves within this absolute distance of the running minimum are kept and
/// re-evaluated from scratch, so rounding in the partial sums cannot decide
/// between near-degenerate configurations.
const NEAR_TIE: f64 = 1e-12;
const MAX_NEAR_TIES: usize = 1024;

struct Best {
    energy: f64,
    /// `(energy, plus positions)` in visiting order.
    near: Vec<(f64, Vec<usize>)>,
    visited: u64,
}

/// Depth-first walk over `k`-subsets (positions of `+1`) in lexicographic
/// order, which is also lexicographic order of the spin vectors with
/// `+1 < -1`.
struct Walker<'a> {
    mats: &'a [&'a [Complex64]],
    d: usize,
    k: usize,
    best: Best,
    chosen: Vec<usize>,
}

impl Walker<'_> {
    fn descend(&mut self, partial: &[Complex64], start: usize) {
        let m = self.mats.len();
        if self.chosen.len() == self.k {
            self.best.visited += 1;
            let e = idempotency_loss(partial, self.d);
            if e < self.best.energy {
                self.best.energy = e;
                let cut = e + NEAR_TIE;
                self.best.near.retain(|(x, _)| *x <= cut);
            }
            if e <= self.best.energy + NEAR_TIE && self.best.near.len() < MAX_NEAR_TIES {
                self.best.near.push((e, self.chosen.clone()));
            }
            return;
        }
        let remaining = self.k - self.chosen.len();
        let mut next = vec![Complex64::new(0.0, 0.0); partial.len()];
        for idx in start..=m - remaining {
            for ((n, p), x) in next.iter_mut().zip(partial).zip(self.mats[idx]) {
                *n = p + x * 2.0;
            }
            self.chosen.push(idx);
            self.descend(&next, idx + 1);
            self.chosen.pop();
        }
    }
}

/// Enumerates the magnetization-one sector and returns a minimum-energy
/// configuration. Ties go to the lexicographically smallest spin vector
/// under `+1 < -1`.
pub fn brute_force_ground_state(detectors: &[DensityMatrix]) -> Result<GroundState> {
    let d = common_dim(detectors)?;
    let m = detectors.len();
    ensure_odd(m)?;
    let size = sector_size(m);
    if size > MAX_SECTOR_SIZE {
        return Err(Error::Size(format!(
            "M = {m} has {size} sector configurations, above the cap of {MAX_SECTOR_SIZE}"
        )));
    }
    let k = m.div_ceil(2);
    let mats: Vec<&[Complex64]> = detectors.iter().map(|r| r.as_slice()).collect();
    // rho_f = 2 sum_{plus} rho_j - sum_all rho_j
    let mut base = vec![Complex64::new(0.0, 0.0); d * d];
    for r in &mats {
        for (b, x) in base.iter_mut().zip(r.iter()) {
            *b -= x;
        }
    }

    // blocks keyed by the first +1 position, already in lexicographic order
    let blocks: Vec<Best> = (0..=m - k)
        .into_par_iter()
        .map(|first| {
            let mut partial = base.clone();
            for (p, x) in partial.iter_mut().zip(mats[first]) {
                *p += x * 2.0;
            }
            let mut w = Walker {
                mats: &mats,
                d,
                k,
                best: Best {
                    energy: f64::INFINITY,
                    near: Vec::new(),
                    visited: 0,
                },
                chosen: vec![first],
            };
            w.descend(&partial, first + 1);
            w.best
        })
        .collect();

    let visited = blocks.iter().map(|b| b.visited).sum();
    let floor = blocks.iter().map(|b| b.energy).fold(f64::INFINITY, f64::min);
    let mut best: Option<(f64, SpinConfiguration)> = None;
    for (e, plus) in blocks.into_iter().flat_map(|b| b.near) {
        if e > floor + NEAR_TIE {
            continue;
        }
        let mut spins = vec![-1i8; m];
        for p in plus {
            spins[p] = 1;
        }
        let spins = SpinConfiguration::from_trusted(spins);
        let exact = energy(&spins, detectors)?;
        if best.as_ref().is_none_or(|(b, _)| exact < *b) {
            best = Some((exact, spins));
        }
    }
    let (energy, spins) = best.expect("sector is non-empty");
    Ok(GroundState {
        spins,
        energy,
        visited,
    })
}
