//! Signatures, Young-diagram strip relations, and counting measures.
//!
//! A *signature* of length `L` is a weakly decreasing integer vector
//! `λ_1 ≥ λ_2 ≥ … ≥ λ_L`. Nonnegative signatures index the rows of particle
//! configurations throughout the crate. The *counting measure* of a signature
//! places mass `1/N` at each shifted, rescaled particle location
//! `(λ_i + N − i)/N`.

use num::rational::Rational64;
use num::traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SqhexError};

/// A weakly decreasing integer vector. The empty signature is legal.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Signature {
    parts: Vec<i64>,
}

impl Signature {
    /// Builds a signature, validating weak monotonicity.
    pub fn new(parts: Vec<i64>) -> Result<Self> {
        if parts.windows(2).any(|w| w[0] < w[1]) {
            return Err(SqhexError::InvalidInput(format!(
                "signature parts must be weakly decreasing, got {parts:?}"
            )));
        }
        Ok(Signature { parts })
    }

    /// The all-zero signature of length `len`.
    pub fn zero(len: usize) -> Self {
        Signature { parts: vec![0; len] }
    }

    /// Number of parts.
    pub fn len(&self) -> usize {
        self.parts.len()
    }

    /// True for the empty signature.
    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// Part accessor; indices past the end read as 0 (missing parts).
    pub fn part(&self, i: usize) -> i64 {
        self.parts.get(i).copied().unwrap_or(0)
    }

    /// Underlying parts slice.
    pub fn parts(&self) -> &[i64] {
        &self.parts
    }

    /// Sum of parts `|λ|`.
    pub fn weight(&self) -> i64 {
        self.parts.iter().sum()
    }

    /// True iff all parts are nonnegative.
    pub fn is_nonnegative(&self) -> bool {
        self.parts.iter().all(|&p| p >= 0)
    }
}

/// A finitely supported probability measure with exact rational atoms.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountingMeasure {
    /// Sorted list of `(location, mass)` with distinct locations and positive
    /// masses summing to 1.
    pub atoms: Vec<(Rational64, Rational64)>,
}

impl CountingMeasure {
    /// Builds a measure from raw atoms: merges equal locations, drops zero
    /// masses, checks positivity and total mass 1.
    pub fn new(mut raw: Vec<(Rational64, Rational64)>) -> Result<Self> {
        raw.sort_by(|a, b| a.0.cmp(&b.0));
        let mut atoms: Vec<(Rational64, Rational64)> = Vec::new();
        for (loc, mass) in raw {
            if mass.is_zero() {
                continue;
            }
            match atoms.last_mut() {
                Some(last) if last.0 == loc => last.1 += mass,
                _ => atoms.push((loc, mass)),
            }
        }
        if atoms.iter().any(|&(_, m)| m <= Rational64::zero()) {
            return Err(SqhexError::InvalidInput("atom masses must be positive".into()));
        }
        let total: Rational64 = atoms.iter().map(|&(_, m)| m).sum();
        if !total.is_one() {
            return Err(SqhexError::InvalidInput(format!(
                "atom masses must sum to 1, got {total}"
            )));
        }
        Ok(CountingMeasure { atoms })
    }
}

/// Horizontal-strip (interlacing) relation: the diagram of `outer` contains
/// the diagram of `inner` and their difference has at most one box per
/// column. Missing parts are read as 0; lengths may differ by 0 or 1.
pub fn is_horizontal_strip(inner: &Signature, outer: &Signature) -> Result<bool> {
    check_strip_args(inner, outer)?;
    // Interlacing: outer_i ≥ inner_i ≥ outer_{i+1}, with missing parts as 0.
    let n = inner.len().max(outer.len());
    let ok = (0..n).all(|i| outer.part(i) >= inner.part(i) && inner.part(i) >= outer.part(i + 1));
    Ok(ok)
}

/// Vertical-strip (cointerlacing) relation: containment plus at most one box
/// per row, i.e. `inner_i ≤ outer_i ≤ inner_i + 1` for every row.
pub fn is_vertical_strip(inner: &Signature, outer: &Signature) -> Result<bool> {
    check_strip_args(inner, outer)?;
    let n = inner.len().max(outer.len());
    let ok = (0..n).all(|i| inner.part(i) <= outer.part(i) && outer.part(i) <= inner.part(i) + 1);
    Ok(ok)
}

fn check_strip_args(inner: &Signature, outer: &Signature) -> Result<()> {
    let li = inner.len() as i64;
    let lo = outer.len() as i64;
    if (li - lo).abs() > 1 {
        return Err(SqhexError::InvalidInput(format!(
            "strip relation requires lengths differing by at most 1, got {li} and {lo}"
        )));
    }
    if !inner.is_nonnegative() || !outer.is_nonnegative() {
        return Err(SqhexError::InvalidInput(
            "strip relations are defined for nonnegative signatures".into(),
        ));
    }
    Ok(())
}

/// Counting measure of a signature: mass `1/N` at `(λ_i + N − i)/N` for each
/// `i`, with equal locations merged.
pub fn counting_measure(lambda: &Signature) -> Result<CountingMeasure> {
    let n = lambda.len() as i64;
    if n == 0 {
        return Err(SqhexError::InvalidInput(
            "counting measure requires at least one part".into(),
        ));
    }
    let atoms = lambda
        .parts()
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            (
                Rational64::new(p + n - 1 - i as i64, n),
                Rational64::new(1, n),
            )
        })
        .collect();
    CountingMeasure::new(atoms)
}

/// `p`-th moment `Σ mass · location^p` of a finitely supported measure.
pub fn measure_moment(measure: &CountingMeasure, p: u32) -> Rational64 {
    measure
        .atoms
        .iter()
        .map(|&(loc, mass)| mass * loc.pow(p as i32))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sig(parts: &[i64]) -> Signature {
        Signature::new(parts.to_vec()).unwrap()
    }

    #[test]
    fn rejects_non_monotone() {
        assert!(Signature::new(vec![1, 2]).is_err());
        assert!(Signature::new(vec![3, 1, 2]).is_err());
    }

    #[test]
    fn horizontal_strip_examples() {
        assert!(is_horizontal_strip(&sig(&[1]), &sig(&[2, 0])).unwrap());
        assert!(is_horizontal_strip(&sig(&[0, 0]), &sig(&[2, 0])).unwrap());
        assert!(!is_horizontal_strip(&sig(&[2, 0]), &sig(&[1, 1])).unwrap());
        assert!(is_horizontal_strip(&sig(&[1, 0]), &sig(&[2, 1])).unwrap());
    }

    #[test]
    fn vertical_strip_examples() {
        assert!(is_vertical_strip(&sig(&[0]), &sig(&[1])).unwrap());
        assert!(!is_vertical_strip(&sig(&[0, 0]), &sig(&[2, 0])).unwrap());
        assert!(is_vertical_strip(&sig(&[1, 0]), &sig(&[2, 1])).unwrap());
    }

    #[test]
    fn empty_signature_is_legal_in_strips() {
        assert!(is_horizontal_strip(&sig(&[]), &sig(&[3])).unwrap());
        assert!(is_vertical_strip(&sig(&[]), &sig(&[1])).unwrap());
        assert!(!is_vertical_strip(&sig(&[]), &sig(&[2])).unwrap());
    }

    #[test]
    fn counting_measure_examples() {
        let m = counting_measure(&sig(&[2, 1, 0])).unwrap();
        assert_eq!(
            m.atoms,
            vec![
                (Rational64::new(0, 1), Rational64::new(1, 3)),
                (Rational64::new(2, 3), Rational64::new(1, 3)),
                (Rational64::new(4, 3), Rational64::new(1, 3)),
            ]
        );

        let m = counting_measure(&sig(&[2, 2])).unwrap();
        assert_eq!(
            m.atoms,
            vec![
                (Rational64::new(1, 1), Rational64::new(1, 2)),
                (Rational64::new(3, 2), Rational64::new(1, 2)),
            ]
        );

        // Equal-location atoms merge.
        let merged = CountingMeasure::new(vec![
            (Rational64::new(1, 2), Rational64::new(1, 2)),
            (Rational64::new(1, 2), Rational64::new(1, 4)),
            (Rational64::new(0, 1), Rational64::new(1, 4)),
        ])
        .unwrap();
        assert_eq!(merged.atoms.len(), 2);
        assert_eq!(merged.atoms[1], (Rational64::new(1, 2), Rational64::new(3, 4)));
    }

    #[test]
    fn counting_measure_dense_and_staircase() {
        // Densely packed λ=0: atoms (N−i)/N.
        let m = counting_measure(&Signature::zero(4)).unwrap();
        let locs: Vec<Rational64> = m.atoms.iter().map(|a| a.0).collect();
        assert_eq!(
            locs,
            vec![
                Rational64::new(0, 1),
                Rational64::new(1, 4),
                Rational64::new(2, 4),
                Rational64::new(3, 4)
            ]
        );

        // Staircase λ_i=(m−1)(N−i): equispaced atoms with gap m/N.
        for n in 2..=20i64 {
            for m_par in 1..=4i64 {
                let parts: Vec<i64> = (0..n).map(|i| (m_par - 1) * (n - 1 - i)).collect();
                let meas = counting_measure(&Signature::new(parts).unwrap()).unwrap();
                assert_eq!(meas.atoms.len(), n as usize);
                for (i, &(loc, mass)) in meas.atoms.iter().enumerate() {
                    assert_eq!(loc, Rational64::new(m_par * i as i64, n));
                    assert_eq!(mass, Rational64::new(1, n));
                }
            }
        }
    }

    #[test]
    fn moments() {
        let m = counting_measure(&sig(&[2, 1, 0])).unwrap();
        assert_eq!(measure_moment(&m, 0), Rational64::one());
        assert_eq!(measure_moment(&m, 1), Rational64::new(2, 3));
    }

    proptest! {
        #[test]
        fn strip_implies_containment(a in proptest::collection::vec(0i64..6, 0..5),
                                     b in proptest::collection::vec(0i64..6, 0..5)) {
            let mut a = a; a.sort_unstable_by(|x, y| y.cmp(x));
            let mut b = b; b.sort_unstable_by(|x, y| y.cmp(x));
            let inner = Signature::new(a).unwrap();
            let outer = Signature::new(b).unwrap();
            if (inner.len() as i64 - outer.len() as i64).abs() <= 1 {
                let h = is_horizontal_strip(&inner, &outer).unwrap();
                let v = is_vertical_strip(&inner, &outer).unwrap();
                if h || v {
                    let n = inner.len().max(outer.len());
                    prop_assert!((0..n).all(|i| inner.part(i) <= outer.part(i)));
                }
            }
        }

        #[test]
        fn measure_mass_is_one(a in proptest::collection::vec(0i64..9, 1..8)) {
            let mut a = a; a.sort_unstable_by(|x, y| y.cmp(x));
            let m = counting_measure(&Signature::new(a).unwrap()).unwrap();
            prop_assert_eq!(measure_moment(&m, 0), Rational64::one());
        }
    }
}
