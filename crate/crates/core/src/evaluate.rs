//! Scoring recovered states against the known sources of a synthetic scenario.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quantum::{fidelity, outer_product, DensityMatrix, PureState};

/// Fidelities of one recovered state to every source.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SourceMatch {
    pub fidelities: Vec<f64>,
    /// Argmax of `fidelities`.
    pub index: usize,
    pub fidelity: f64,
}

impl SourceMatch {
    /// Builds a match from fidelities; the matched source is the argmax.
    pub fn from_fidelities(fidelities: Vec<f64>) -> Result<Self> {
        if fidelities.is_empty() {
            return Err(Error::validation("at least one source", "no fidelities"));
        }
        if let Some(f) = fidelities.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(Error::validation("fidelities in [0,1]", format!("got {f}")));
        }
        let (index, &fidelity) = fidelities
            .iter()
            .enumerate()
            .fold((0, &fidelities[0]), |best, cur| if cur.1 > best.1 { cur } else { best });
        Ok(Self {
            fidelities,
            index,
            fidelity,
        })
    }
}

/// Fidelity of `rho_f` to each source.
///
/// Candidates from the spin search may be slightly indefinite, so `rho_f`
/// is first mapped to the nearest physical state (negative eigenvalues
/// dropped, trace renormalized). Physical inputs pass through unchanged.
pub fn match_sources(rho_f: &DensityMatrix, sources: &[PureState]) -> Result<SourceMatch> {
    let state = match rho_f.to_physical() {
        Ok(s) => s,
        Err(Error::NonPhysical(_)) => {
            return SourceMatch::from_fidelities(vec![0.0; sources.len()]);
        }
        Err(e) => return Err(e),
    };
    let fidelities = sources
        .iter()
        .map(|s| fidelity(&outer_product(s), &state))
        .collect::<Result<Vec<_>>>()?;
    SourceMatch::from_fidelities(fidelities)
}

/// Pairwise source fidelity `F(rho_i, rho_j)` for `i < j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CrossFidelity {
    pub i: usize,
    pub j: usize,
    pub fidelity: f64,
}

/// All `N(N-1)/2` pairwise source fidelities, ordered `(0,1), (0,2), ..., (1,2), ...`.
pub fn cross_fidelities(sources: &[PureState]) -> Vec<CrossFidelity> {
    let mut out = Vec::new();
    for i in 0..sources.len() {
        for j in i + 1..sources.len() {
            out.push(CrossFidelity {
                i,
                j,
                fidelity: sources[i].inner(&sources[j]).norm(),
            });
        }
    }
    out
}

/// `F(rho_i, rho_j)` looked up from the list above.
pub fn cross_fidelity(cross: &[CrossFidelity], i: usize, j: usize) -> Option<f64> {
    let (a, b) = if i < j { (i, j) } else { (j, i) };
    cross.iter().find(|c| c.i == a && c.j == b).map(|c| c.fidelity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::generate_scenario;

    #[test]
    fn exact_source_is_matched() {
        let s = generate_scenario(8, 3, 5, 2).unwrap();
        let m = match_sources(&outer_product(&s.sources()[1]), s.sources()).unwrap();
        assert_eq!(m.index, 1);
        assert!((m.fidelity - 1.0).abs() < 1e-9);
        let cross = cross_fidelities(s.sources());
        assert_eq!(cross.len(), 3);
        assert!((m.fidelities[0] - cross_fidelity(&cross, 0, 1).unwrap()).abs() < 1e-9);
        assert!((m.fidelities[2] - cross_fidelity(&cross, 2, 1).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn argmax_invariant() {
        let m = SourceMatch::from_fidelities(vec![0.2, 0.9, 0.4]).unwrap();
        assert_eq!((m.index, m.fidelity), (1, 0.9));
        assert!(SourceMatch::from_fidelities(vec![1.2]).is_err());
    }
}
