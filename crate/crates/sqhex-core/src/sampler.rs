//! Exact sequential sampling of the signature chain through its transfer
//! kernels, plus the power-sum observables of a row.
//!
//! The Boltzmann measure on matchings factorizes over the chain
//! `ω = μ^(N) → ν^(N) → μ^(N−1) → … → μ^(0) = ∅`: the square strips apply a
//! vertical-strip growth kernel normalized by dual Pieri, and every strip
//! ends with an interlacing truncation kernel normalized by the branching
//! rule. Both kernels enumerate their supports, so this sampler is
//! oracle-grade (exact but limited to supports below the size guard); large
//! instances belong to the determinantal sampler.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SqhexError};
use crate::lattice::{boundary_signature, signatures_to_matching, Lattice, MatchingRecord};
use crate::partitions::Signature;
use crate::schur::{interlacing_inners, schur_eval_log};

/// Maximum kernel support size before advising the determinantal sampler.
const SUPPORT_GUARD: u128 = 1_000_000;

/// A finite distribution over signatures.
#[derive(Debug, Clone)]
pub struct RowDistribution {
    /// Support, in enumeration order.
    pub support: Vec<Signature>,
    /// Matching probabilities; always sums to 1.
    pub probs: Vec<f64>,
}

impl RowDistribution {
    fn from_log_weights(support: Vec<Signature>, log_w: Vec<f64>) -> Self {
        let m = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = log_w.iter().map(|&l| (l - m).exp()).collect();
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        RowDistribution { support, probs }
    }

    /// Draws one signature.
    pub fn sample(&self, rng: &mut impl Rng) -> Signature {
        let mut u = rng.gen::<f64>();
        for (sig, &p) in self.support.iter().zip(&self.probs) {
            u -= p;
            if u <= 0.0 {
                return sig.clone();
            }
        }
        self.support.last().expect("nonempty support").clone()
    }

    /// Probability of a specific signature (0 outside the support).
    pub fn prob_of(&self, sig: &Signature) -> f64 {
        self.support
            .iter()
            .position(|s| s == sig)
            .map_or(0.0, |i| self.probs[i])
    }
}

/// Truncation kernel: removes the first weight of the suffix. The support is
/// every signature interlacing `ν` with one part fewer, and
/// `P(μ) ∝ s_μ(x₂,…,x_t) · x₁^{|ν|−|μ|}`, which sums to 1 by the branching
/// rule.
pub fn pr_kernel(nu: &Signature, suffix: &[f64]) -> Result<RowDistribution> {
    let t = nu.len();
    if suffix.len() != t {
        return Err(SqhexError::InvalidInput(format!(
            "weight suffix must have {t} entries, got {}",
            suffix.len()
        )));
    }
    if !nu.is_nonnegative() {
        return Err(SqhexError::InvalidInput("signature must be nonnegative".into()));
    }
    let mut size: u128 = 1;
    for i in 0..t {
        let lo = if i + 1 < t { nu.part(i + 1) } else { 0 };
        size = size.saturating_mul((nu.part(i) - lo + 1) as u128);
        if size > SUPPORT_GUARD {
            return Err(SqhexError::SizeGuard(
                "truncation kernel support exceeds 10^6; use the determinantal sampler".into(),
            ));
        }
    }
    let x_removed = suffix[0];
    let rest = &suffix[1..];
    let nu_weight = nu.weight();
    let mut support = Vec::new();
    let mut log_w = Vec::new();
    for parts in interlacing_inners(nu.parts()) {
        let mu = Signature::new(parts)?;
        let lw = schur_eval_log(&mu, rest)?
            + (nu_weight - mu.weight()) as f64 * x_removed.ln();
        support.push(mu);
        log_w.push(lw);
    }
    Ok(RowDistribution::from_log_weights(support, log_w))
}

/// Vertical-strip growth kernel:
/// `P(ν) ∝ y^{|ν|−|μ|} · s_ν(x₁,…,x_t)`, over signatures `ν ⊇ μ` with
/// `ν_i − μ_i ∈ {0,1}`, normalized to `s_μ(x) · ∏_j (1 + y x_j)` by dual
/// Pieri.
pub fn st_kernel(mu: &Signature, y: f64, suffix: &[f64]) -> Result<RowDistribution> {
    let t = mu.len();
    if suffix.len() != t {
        return Err(SqhexError::InvalidInput(format!(
            "weight suffix must have {t} entries, got {}",
            suffix.len()
        )));
    }
    if !(y > 0.0) {
        return Err(SqhexError::InvalidInput("growth weight must be positive".into()));
    }
    if (1u128 << t.min(127)) > SUPPORT_GUARD {
        return Err(SqhexError::SizeGuard(
            "growth kernel support exceeds 10^6; use the determinantal sampler".into(),
        ));
    }
    let mut support = Vec::new();
    let mut log_w = Vec::new();
    // Each part grows by 0 or 1; the result must stay weakly decreasing.
    for mask in 0u64..(1u64 << t) {
        let mut parts = Vec::with_capacity(t);
        let mut ok = true;
        let mut added = 0i64;
        for i in 0..t {
            let inc = ((mask >> i) & 1) as i64;
            let v = mu.part(i) + inc;
            if let Some(&prev) = parts.last() {
                if v > prev {
                    ok = false;
                    break;
                }
            }
            added += inc;
            parts.push(v);
        }
        if !ok {
            continue;
        }
        let nu = Signature::new(parts)?;
        let lw = schur_eval_log(&nu, suffix)? + added as f64 * y.ln();
        support.push(nu);
        log_w.push(lw);
    }
    Ok(RowDistribution::from_log_weights(support, log_w))
}

/// Weight suffix `(x_s, …, x_N)` for strip `s` of a lattice.
fn weight_suffix(lat: &Lattice, s: usize) -> Vec<f64> {
    (s..=lat.spec.n).map(|i| lat.spec.model.x_at(i)).collect()
}

/// Draws one exact Boltzmann sample by walking the chain from the boundary
/// signature down to the empty one. Deterministic given the seed.
pub fn sample_chain(lat: &Lattice, seed: u64) -> Result<MatchingRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_chain_rng(lat, &mut rng)
}

/// As [`sample_chain`] with a caller-provided RNG.
pub fn sample_chain_rng(lat: &Lattice, rng: &mut impl Rng) -> Result<MatchingRecord> {
    let n = lat.spec.n;
    let mut seq = Vec::with_capacity(2 * n + 1);
    let mut mu = boundary_signature(&lat.spec.omega)?;
    seq.push(mu.clone());
    for s in 1..=n {
        let suffix = weight_suffix(lat, s);
        let nu = if lat.spec.c[s - 1] == 1 {
            mu.clone()
        } else {
            st_kernel(&mu, lat.spec.model.y_at(s), &suffix)?.sample(rng)
        };
        seq.push(nu.clone());
        mu = pr_kernel(&nu, &suffix)?.sample(rng);
        seq.push(mu.clone());
    }
    let edges = signatures_to_matching(lat, &seq)?;
    let log_weight = lat.log_weight(&edges);
    Ok(MatchingRecord { edges, signatures: seq, log_weight })
}

/// Power sum of the particle positions: `Σ_i (λ_i + L − i)^k` with
/// `L = len(λ)` (so `k = 0` returns the particle count).
pub fn p_statistic(lambda: &Signature, k: u32) -> i64 {
    let l = lambda.len() as i64;
    (1..=lambda.len() as i64)
        .map(|i| (lambda.part((i - 1) as usize) + l - i).pow(k))
        .sum()
}

/// Exact marginal law of the signature at a lattice row, by enumerating the
/// full chain (tiny-instance oracle).
pub fn exact_row_distribution(lat: &Lattice, row: usize) -> Result<RowDistribution> {
    if row < 1 || row > lat.row_count() {
        return Err(SqhexError::InvalidInput(format!("row {row} out of range")));
    }
    let matchings = crate::lattice::enumerate_matchings(lat)?;
    let log_z = {
        let m = matchings.iter().map(|m| m.log_weight).fold(f64::NEG_INFINITY, f64::max);
        m + matchings.iter().map(|r| (r.log_weight - m).exp()).sum::<f64>().ln()
    };
    let mut support: Vec<Signature> = Vec::new();
    let mut probs: Vec<f64> = Vec::new();
    for m in &matchings {
        let sig = &m.signatures[row - 1];
        let p = (m.log_weight - log_z).exp();
        match support.iter().position(|s| s == sig) {
            Some(i) => probs[i] += p,
            None => {
                support.push(sig.clone());
                probs.push(p);
            }
        }
    }
    Ok(RowDistribution { support, probs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, LatticeSpec};
    use crate::schur::WeightModel;
    use approx::assert_relative_eq;
    use rand::rngs::StdRng;
    use std::collections::BTreeSet;
    use std::collections::HashMap;

    fn sig(parts: &[i64]) -> Signature {
        Signature::new(parts.to_vec()).unwrap()
    }

    #[test]
    fn truncation_kernel_examples() {
        let d = pr_kernel(&sig(&[1, 0]), &[1.0, 2.0]).unwrap();
        assert_relative_eq!(d.prob_of(&sig(&[1])), 2.0 / 3.0, epsilon = 1e-11);
        assert_relative_eq!(d.prob_of(&sig(&[0])), 1.0 / 3.0, epsilon = 1e-11);

        let d = pr_kernel(&sig(&[0, 0]), &[1.3, 0.4]).unwrap();
        assert_eq!(d.support.len(), 1);
        assert_relative_eq!(d.prob_of(&sig(&[0])), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn growth_kernel_examples() {
        let d = st_kernel(&sig(&[0]), 0.5, &[2.0]).unwrap();
        assert_relative_eq!(d.prob_of(&sig(&[0])), 0.5, epsilon = 1e-11);
        assert_relative_eq!(d.prob_of(&sig(&[1])), 0.5, epsilon = 1e-11);

        // Vanishing growth weight concentrates on staying put.
        let d = st_kernel(&sig(&[2, 1]), 1e-9, &[1.0, 1.5]).unwrap();
        assert!(d.prob_of(&sig(&[2, 1])) > 1.0 - 1e-6);
    }

    #[test]
    fn kernels_are_normalized_against_closed_forms() {
        // The normalizing constants are the branching and dual Pieri sums;
        // rebuild each distribution's raw mass and compare.
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..200 {
            let t = 1 + rng.gen_range(0..4usize);
            let mut parts: Vec<i64> = (0..t).map(|_| rng.gen_range(0..6i64)).collect();
            parts.sort_unstable_by(|a, b| b.cmp(a));
            let nu = sig(&parts);
            let suffix: Vec<f64> = (0..t).map(|_| 0.2 + rng.gen::<f64>() * 2.0).collect();

            // Branching: Σ_μ s_μ(rest)·x₁^{|ν|−|μ|} = s_ν(suffix).
            let target = schur_eval_log(&nu, &suffix).unwrap();
            let mut total = 0.0;
            for parts in interlacing_inners(nu.parts()) {
                let mu = Signature::new(parts).unwrap();
                total += (schur_eval_log(&mu, &suffix[1..]).unwrap()
                    + (nu.weight() - mu.weight()) as f64 * suffix[0].ln()
                    - target)
                    .exp();
            }
            assert_relative_eq!(total, 1.0, epsilon = 1e-11);

            // Dual Pieri: Σ_ν y^{|ν|−|μ|}s_ν(x) = s_μ(x)·∏(1+y x_j).
            let y = 0.1 + rng.gen::<f64>();
            let d = st_kernel(&nu, y, &suffix).unwrap();
            let norm = schur_eval_log(&nu, &suffix).unwrap()
                + suffix.iter().map(|&x| (1.0 + y * x).ln()).sum::<f64>();
            let mut total = 0.0;
            for (s, _) in d.support.iter().zip(&d.probs) {
                total += (schur_eval_log(s, &suffix).unwrap()
                    + (s.weight() - nu.weight()) as f64 * y.ln()
                    - norm)
                    .exp();
            }
            assert_relative_eq!(total, 1.0, epsilon = 1e-11);
        }
    }

    #[test]
    fn p_statistic_examples() {
        assert_eq!(p_statistic(&sig(&[2, 1, 0]), 1), 6);
        assert_eq!(p_statistic(&sig(&[2, 1, 0]), 0), 3);
        assert_eq!(p_statistic(&sig(&[2, 1, 0]), 2), 20);
        assert_eq!(p_statistic(&sig(&[]), 3), 0);
    }

    fn hexagon_lattice() -> Lattice {
        let i2 = BTreeSet::new();
        let model = WeightModel::new(vec![1.0, 2.0], vec![0.0, 0.0], i2, None).unwrap();
        build_lattice(&LatticeSpec::new(vec![1, 3], vec![1, 1], model).unwrap()).unwrap()
    }

    #[test]
    fn chain_marginal_matches_closed_form() {
        let lat = hexagon_lattice();
        // Row 3 holds the one-part signature; P((1)) = 2/3.
        let d = exact_row_distribution(&lat, 3).unwrap();
        assert_relative_eq!(d.prob_of(&sig(&[1])), 2.0 / 3.0, epsilon = 1e-12);
        // Bottom row is a point mass at the boundary signature.
        let d = exact_row_distribution(&lat, 1).unwrap();
        assert_eq!(d.support.len(), 1);
        assert_relative_eq!(d.probs[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn chain_sampler_matches_enumeration() {
        let i2: BTreeSet<usize> = [1, 3].into_iter().collect();
        let model = WeightModel::new(
            vec![1.2, 0.8, 1.5],
            vec![0.7, 0.0, 0.9],
            i2,
            None,
        )
        .unwrap();
        let lat =
            build_lattice(&LatticeSpec::new(vec![1, 2, 4], vec![0, 1, 0], model).unwrap()).unwrap();
        let ms = crate::lattice::enumerate_matchings(&lat).unwrap();
        let z: f64 = ms.iter().map(|m| m.log_weight.exp()).sum();
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        let trials = 30000;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..trials {
            let rec = sample_chain_rng(&lat, &mut rng).unwrap();
            *counts.entry(rec.edges).or_insert(0) += 1;
        }
        for m in &ms {
            let expected = m.log_weight.exp() / z;
            let got = *counts.get(&m.edges).unwrap_or(&0) as f64 / trials as f64;
            assert!(
                (got - expected).abs() < 0.015,
                "joint law mismatch: expected {expected}, got {got}"
            );
        }
    }

    #[test]
    fn frozen_lattice_has_unique_chain() {
        let i2 = BTreeSet::new();
        let model = WeightModel::new(vec![1.0, 1.0], vec![0.0, 0.0], i2, None).unwrap();
        let lat =
            build_lattice(&LatticeSpec::new(vec![1, 2], vec![1, 1], model).unwrap()).unwrap();
        let a = sample_chain(&lat, 1).unwrap();
        let b = sample_chain(&lat, 999).unwrap();
        assert_eq!(a.edges, b.edges);
    }

    #[test]
    fn deterministic_given_seed() {
        let lat = hexagon_lattice();
        assert_eq!(
            sample_chain(&lat, 5).unwrap().edges,
            sample_chain(&lat, 5).unwrap().edges
        );
    }
}
