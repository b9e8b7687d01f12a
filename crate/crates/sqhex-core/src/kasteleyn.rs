//! Signed (Kasteleyn) adjacency matrices for the finite lattice, exact
//! determinantal sampling, and the torus spectral curve.
//!
//! The sign gauge negates every slanted edge leaving a black row upward
//! (the `x`-weighted edges). With this choice each bounded square face
//! carries an odd number of minus signs and each bounded hexagonal face an
//! even number, which is exactly the parity a `2k`-gon needs (`k+1 mod 2`)
//! for `|det K|` to equal the matching partition function. A face-by-face
//! gauge repair pass covers any boundary shape for which the parity check
//! fails.

use std::collections::HashMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SqhexError};
use crate::lattice::{
    ambient_faces, matching_to_signatures, row_signature, Color, Lattice, MatchingRecord,
};
use crate::partitions::Signature;
use crate::schur::WeightModel;

/// Signed weighted adjacency matrix, rows = white vertices, columns = black.
#[derive(Debug, Clone)]
pub struct KasteleynMatrix {
    /// Signed weights; `mat[(i,j)]` couples white `whites[i]` to black
    /// `blacks[j]`.
    pub mat: DMatrix<f64>,
    /// White vertex ids in row order.
    pub whites: Vec<usize>,
    /// Black vertex ids in column order.
    pub blacks: Vec<usize>,
    white_index: HashMap<usize, usize>,
    black_index: HashMap<usize, usize>,
}

impl KasteleynMatrix {
    /// Matrix row of a white vertex id.
    pub fn white_row(&self, v: usize) -> usize {
        self.white_index[&v]
    }

    /// Matrix column of a black vertex id.
    pub fn black_col(&self, v: usize) -> usize {
        self.black_index[&v]
    }

    /// `log |det K|`, evaluated stably in the log domain.
    pub fn log_abs_det(&self) -> f64 {
        let n = self.mat.nrows();
        let mut a: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| self.mat[(i, j)]).collect())
            .collect();
        // LU with partial pivoting accumulating Σ log|u_kk|.
        let mut log_det = 0.0;
        for k in 0..n {
            let (mut piv, mut best) = (k, a[k][k].abs());
            for i in (k + 1)..n {
                if a[i][k].abs() > best {
                    piv = i;
                    best = a[i][k].abs();
                }
            }
            if best == 0.0 {
                return f64::NEG_INFINITY;
            }
            a.swap(piv, k);
            let pivot = a[k][k];
            log_det += pivot.abs().ln();
            for i in (k + 1)..n {
                let f = a[i][k] / pivot;
                for j in k..n {
                    a[i][j] -= f * a[k][j];
                }
            }
        }
        log_det
    }
}

/// True when the slanted edge carries an `x` weight (black row below white).
fn is_x_edge(lat: &Lattice, e: usize) -> bool {
    let edge = lat.edges[e];
    edge.kind == crate::lattice::EdgeKind::NorthEast
        && lat.vertices[edge.white].row > lat.vertices[edge.black].row
}

/// Builds the signed Kasteleyn matrix and repairs the gauge if any bounded
/// face fails the parity condition.
pub fn kasteleyn_matrix(lat: &Lattice) -> Result<KasteleynMatrix> {
    let whites = lat.whites();
    let blacks = lat.blacks();
    if whites.len() != blacks.len() {
        return Err(SqhexError::InvalidInput(
            "vertex count mismatch: no perfect matching exists".into(),
        ));
    }
    let white_index: HashMap<usize, usize> = whites.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let black_index: HashMap<usize, usize> = blacks.iter().enumerate().map(|(i, &v)| (v, i)).collect();

    // Base gauge: negate x-edges.
    let mut sign: Vec<f64> = (0..lat.edges.len())
        .map(|e| if is_x_edge(lat, e) { -1.0 } else { 1.0 })
        .collect();

    repair_gauge(lat, &mut sign)?;

    let n = whites.len();
    let mut mat = DMatrix::<f64>::zeros(n, n);
    for (e, edge) in lat.edges.iter().enumerate() {
        let i = white_index[&edge.white];
        let j = black_index[&edge.black];
        mat[(i, j)] = sign[e] * edge.weight;
    }
    Ok(KasteleynMatrix { mat, whites, blacks, white_index, black_index })
}

/// Bounded faces of the finite lattice: ambient faces whose corners are all
/// lattice vertices, as lists of edge ids.
fn bounded_faces(lat: &Lattice) -> Vec<Vec<usize>> {
    ambient_faces(lat)
        .iter()
        .filter_map(|f| {
            let mut edges = Vec::with_capacity(f.corners.len());
            for ((r1, p1), (r2, p2)) in f.boundary_edges() {
                if r1 < 1 || r2 < 1 {
                    return None;
                }
                let u = lat.vertex_at(r1 as usize, p1)?;
                let v = lat.vertex_at(r2 as usize, p2)?;
                edges.push(lat.edge_between(u, v)?);
            }
            Some(edges)
        })
        .collect()
}

/// A `2k`-gon needs `#(−) ≡ k+1 (mod 2)`.
fn face_parity_ok(face: &[usize], sign: &[f64]) -> bool {
    let k = face.len() / 2;
    let minus = face.iter().filter(|&&e| sign[e] < 0.0).count();
    minus % 2 == (k + 1) % 2
}

/// Fixes face parities by flipping one fresh edge per face, walking a
/// spanning tree of the dual graph (outer face as root) from the leaves up.
fn repair_gauge(lat: &Lattice, sign: &mut [f64]) -> Result<()> {
    let faces = bounded_faces(lat);
    if faces.iter().all(|f| face_parity_ok(f, sign)) {
        return Ok(());
    }
    // Dual graph over bounded faces plus the outer face (node index = len).
    let outer = faces.len();
    let mut edge_owner: HashMap<usize, Vec<usize>> = HashMap::new();
    for (fi, f) in faces.iter().enumerate() {
        for &e in f {
            edge_owner.entry(e).or_default().push(fi);
        }
    }
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); faces.len() + 1];
    for (&e, owners) in &edge_owner {
        match owners.as_slice() {
            [a, b] => {
                adj[*a].push((*b, e));
                adj[*b].push((*a, e));
            }
            [a] => {
                adj[*a].push((outer, e));
                adj[outer].push((*a, e));
            }
            _ => return Err(SqhexError::Numerical("edge on more than two faces".into())),
        }
    }
    // BFS tree from the outer face.
    let mut parent_edge: Vec<Option<usize>> = vec![None; faces.len() + 1];
    let mut seen = vec![false; faces.len() + 1];
    let mut order = Vec::new();
    let mut q = std::collections::VecDeque::from([outer]);
    seen[outer] = true;
    while let Some(u) = q.pop_front() {
        order.push(u);
        for &(v, e) in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                parent_edge[v] = Some(e);
                q.push_back(v);
            }
        }
    }
    if seen.iter().any(|&s| !s) {
        return Err(SqhexError::Numerical("dual graph is disconnected".into()));
    }
    // Leaves first: each face fixes its parity with the edge toward its
    // parent, which no earlier-processed face shares.
    for &f in order.iter().rev() {
        if f == outer {
            continue;
        }
        if !face_parity_ok(&faces[f], sign) {
            let e = parent_edge[f].expect("non-root face has a tree parent");
            sign[e] = -sign[e];
        }
    }
    if faces.iter().all(|f| face_parity_ok(f, sign)) {
        Ok(())
    } else {
        Err(SqhexError::Numerical("gauge repair failed to fix all faces".into()))
    }
}

// ---------------------------------------------------------------------------
// Spectral curve
// ---------------------------------------------------------------------------

/// Torus characteristic polynomial `P(z,w) = A(z) − w·B(z)` of a `1×n`
/// fundamental domain, with `R(z) = A(z)/B(z)` the solution branch of
/// `P(z, w) = 0`.
#[derive(Debug, Clone)]
pub struct SpectralCurve {
    /// Coefficients of `A(z) = ∏_i (z − x_i)`, ascending.
    pub a: Vec<f64>,
    /// Coefficients of `B(z) = ∏_{j∈I₂} (1 + y_j z)`, ascending.
    pub b: Vec<f64>,
}

/// Multiplies polynomial `p` by `(c0 + c1·z)`.
fn poly_mul_linear(p: &[f64], c0: f64, c1: f64) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + 1];
    for (i, &pi) in p.iter().enumerate() {
        out[i] += pi * c0;
        out[i + 1] += pi * c1;
    }
    out
}

/// Evaluates an ascending-coefficient polynomial at a complex point.
pub fn poly_eval(p: &[f64], z: Complex64) -> Complex64 {
    p.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

/// Derivative coefficients of an ascending-coefficient polynomial.
pub fn poly_derivative(p: &[f64]) -> Vec<f64> {
    p.iter().enumerate().skip(1).map(|(i, &c)| i as f64 * c).collect()
}

impl SpectralCurve {
    /// `P(z, w)`.
    pub fn eval_p(&self, z: Complex64, w: Complex64) -> Complex64 {
        poly_eval(&self.a, z) - w * poly_eval(&self.b, z)
    }

    /// `R(z) = A(z)/B(z)`.
    pub fn eval_r(&self, z: Complex64) -> Complex64 {
        poly_eval(&self.a, z) / poly_eval(&self.b, z)
    }

    /// `R(z)/(z·R'(z))`, the transport coefficient of the characteristic
    /// differential equation.
    pub fn transport(&self, z: Complex64) -> Complex64 {
        let a = poly_eval(&self.a, z);
        let b = poly_eval(&self.b, z);
        let ap = poly_eval(&poly_derivative(&self.a), z);
        let bp = poly_eval(&poly_derivative(&self.b), z);
        // R'/R = A'/A − B'/B, so R/(zR') = 1/(z(A'/A − B'/B)).
        let logderiv = ap / a - bp / b;
        1.0 / (z * logderiv)
    }
}

/// Builds the spectral curve of the `1×n` periodic model.
pub fn torus_curve(model: &WeightModel) -> SpectralCurve {
    let mut a = vec![1.0];
    for &xi in &model.x {
        a = poly_mul_linear(&a, -xi, 1.0);
    }
    let mut b = vec![1.0];
    for &j in &model.i2 {
        b = poly_mul_linear(&b, 1.0, model.y[j - 1]);
    }
    SpectralCurve { a, b }
}

// ---------------------------------------------------------------------------
// Determinantal sampling
// ---------------------------------------------------------------------------

/// Inclusion probability of an edge given the inverse of the (possibly
/// conditioned) Kasteleyn matrix: `p = |K_{wb} · (K⁻¹)_{bw}|`, clamped to
/// `[0, 1]`.
pub fn edge_inclusion_probability(
    k: &KasteleynMatrix,
    inverse: &DMatrix<f64>,
    white_row: usize,
    black_col: usize,
) -> f64 {
    let p = (k.mat[(white_row, black_col)] * inverse[(black_col, white_row)]).abs();
    p.clamp(0.0, 1.0)
}

/// Draws one exact Boltzmann sample by sequential conditioning: each white
/// vertex picks a matched black with the determinantal marginal, the inverse
/// is updated by a rank-one step, and the matrix is re-factorized every 64
/// steps for stability.
pub fn determinantal_sample(lat: &Lattice, seed: u64) -> Result<MatchingRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    determinantal_sample_rng(lat, &mut rng)
}

/// As [`determinantal_sample`] with a caller-provided RNG.
pub fn determinantal_sample_rng(lat: &Lattice, rng: &mut impl Rng) -> Result<MatchingRecord> {
    let k = kasteleyn_matrix(lat)?;
    let d = k.whites.len();
    let mut inv = k
        .mat
        .clone()
        .try_inverse()
        .ok_or_else(|| SqhexError::Numerical("Kasteleyn matrix is singular".into()))?;

    // Active row/col bookkeeping: logical index → current matrix position.
    let mut white_pos: Vec<Option<usize>> = (0..d).map(Some).collect();
    let mut black_pos: Vec<Option<usize>> = (0..d).map(Some).collect();
    // Current matrix position → logical index.
    let mut pos_white: Vec<usize> = (0..d).collect();
    let mut pos_black: Vec<usize> = (0..d).collect();

    let mut matching = Vec::with_capacity(d);
    let mut steps_since_refactor = 0usize;

    for wi in 0..d {
        let w_vertex = k.whites[wi];
        let wp = white_pos[wi].expect("white not yet matched");
        // Candidate blacks: uncovered neighbors.
        let mut cands: Vec<(usize, usize, f64)> = Vec::new(); // (edge, black logical, p)
        for &e in &lat.adj[w_vertex] {
            let edge = lat.edges[e];
            let b_vertex = edge.black;
            let bj = k.black_col(b_vertex);
            if let Some(bp) = black_pos[bj] {
                let p = k.mat[(wi, bj)] * inv[(bp, wp)];
                cands.push((e, bj, p));
            }
        }
        let total: f64 = cands.iter().map(|c| c.2).sum();
        if (total - 1.0).abs() > 1e-6 || steps_since_refactor >= 64 {
            // Re-factorize the active submatrix and retry the probabilities.
            let act_w: Vec<usize> = pos_white.clone();
            let act_b: Vec<usize> = pos_black.clone();
            let m = act_w.len();
            let mut sub = DMatrix::<f64>::zeros(m, m);
            for (i, &wj) in act_w.iter().enumerate() {
                for (j, &bj) in act_b.iter().enumerate() {
                    sub[(i, j)] = k.mat[(wj, bj)];
                }
            }
            inv = sub.try_inverse().ok_or_else(|| {
                SqhexError::Numerical("conditioned Kasteleyn matrix is singular".into())
            })?;
            steps_since_refactor = 0;
            for c in cands.iter_mut() {
                let bp = black_pos[c.1].unwrap();
                c.2 = k.mat[(wi, c.1)] * inv[(bp, wp)];
            }
        }
        let total: f64 = cands.iter().map(|c| c.2.max(0.0)).sum();
        if !(0.9..=1.1).contains(&total) {
            return Err(SqhexError::Numerical(format!(
                "inclusion probabilities sum to {total} at white {w_vertex}"
            )));
        }
        let mut u = rng.gen::<f64>() * total;
        let mut pick = cands.len() - 1;
        for (ci, c) in cands.iter().enumerate() {
            u -= c.2.max(0.0);
            if u <= 0.0 {
                pick = ci;
                break;
            }
        }
        let (e, bj, p) = cands[pick];
        matching.push(e);
        let bp = black_pos[bj].expect("picked black is active");

        // Condition on the edge: Schur-complement update of the inverse,
        // then drop row `bp` and column `wp`.
        let pivot = inv[(bp, wp)];
        if pivot.abs() < 1e-14 {
            return Err(SqhexError::Numerical("vanishing pivot in inverse update".into()));
        }
        let _ = p;
        let m = inv.nrows();
        let col_w: Vec<f64> = (0..m).map(|r| inv[(r, wp)]).collect();
        let row_b: Vec<f64> = (0..m).map(|c| inv[(bp, c)]).collect();
        for r in 0..m {
            if r == bp {
                continue;
            }
            let f = col_w[r] / pivot;
            if f == 0.0 {
                continue;
            }
            for c in 0..m {
                inv[(r, c)] -= f * row_b[c];
            }
        }
        // Swap-remove row bp and column wp.
        inv = inv.remove_row(bp).remove_column(wp);
        // Update index maps: positions shift down past the removed slots.
        black_pos[bj] = None;
        white_pos[wi] = None;
        pos_black.remove(bp);
        pos_white.remove(wp);
        for poso in black_pos.iter_mut().flatten() {
            if *poso > bp {
                *poso -= 1;
            }
        }
        for poso in white_pos.iter_mut().flatten() {
            if *poso > wp {
                *poso -= 1;
            }
        }
        steps_since_refactor += 1;
    }

    matching.sort_unstable();
    let signatures = matching_to_signatures(lat, &matching)?;
    let log_weight = lat.log_weight(&matching);
    Ok(MatchingRecord { edges: matching, signatures, log_weight })
}

// ---------------------------------------------------------------------------
// Row-marginal sampler
// ---------------------------------------------------------------------------

/// Exact sampler for the signatures of a few observed white rows.
///
/// Works on the determinantal point process of *edges*: with
/// `L(e,f) = K(w_e,b_e)·K⁻¹(b_e,w_f)`, any joint inclusion probability is a
/// minor of `L`. Only the edges incident to the observed rows enter, so one
/// factorization of the full matrix is shared by arbitrarily many samples
/// and each sample costs a few passes over a small matrix.
pub struct RowSampler {
    lat: Lattice,
    rows: Vec<usize>,
    /// Edge ids incident to observed-row whites.
    edges: Vec<usize>,
    /// `L` restricted to those edges.
    l: DMatrix<f64>,
    /// Per observed row: groups of indices into `edges`, one group per white
    /// vertex, left to right.
    groups: Vec<Vec<Vec<usize>>>,
}

impl RowSampler {
    /// Prepares the restricted kernel for the given odd (white) rows.
    pub fn new(lat: &Lattice, rows: &[usize]) -> Result<Self> {
        for &r in rows {
            if r % 2 == 0 || r < 3 || r > lat.row_count() {
                return Err(SqhexError::InvalidInput(format!(
                    "observed rows must be interior white rows, got {r}"
                )));
            }
        }
        let k = kasteleyn_matrix(lat)?;
        let inv = k
            .mat
            .clone()
            .try_inverse()
            .ok_or_else(|| SqhexError::Numerical("Kasteleyn matrix is singular".into()))?;

        let mut edges: Vec<usize> = Vec::new();
        let mut groups: Vec<Vec<Vec<usize>>> = Vec::new();
        for &r in rows {
            let mut row_groups = Vec::new();
            for w in lat.row_vertices(r) {
                debug_assert_eq!(lat.vertices[w].color, Color::White);
                let mut group = Vec::new();
                for &e in &lat.adj[w] {
                    group.push(edges.len());
                    edges.push(e);
                }
                row_groups.push(group);
            }
            groups.push(row_groups);
        }
        let s = edges.len();
        let mut l = DMatrix::<f64>::zeros(s, s);
        for (i, &ei) in edges.iter().enumerate() {
            let (wi, bi) = (lat.edges[ei].white, lat.edges[ei].black);
            let kwb = k.mat[(k.white_row(wi), k.black_col(bi))];
            for (j, &ej) in edges.iter().enumerate() {
                let wj = lat.edges[ej].white;
                l[(i, j)] = kwb * inv[(k.black_col(bi), k.white_row(wj))];
            }
        }
        Ok(RowSampler { lat: lat.clone(), rows: rows.to_vec(), edges, l, groups })
    }

    /// Observed rows.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    /// Draws the signatures of the observed rows, one per row.
    pub fn sample(&self, rng: &mut impl Rng) -> Result<Vec<Signature>> {
        let mut l = self.l.clone();
        let s = l.nrows();
        let mut out = Vec::with_capacity(self.groups.len());
        for (ri, row_groups) in self.groups.iter().enumerate() {
            let row = self.rows[ri];
            let mut statuses = Vec::with_capacity(row_groups.len());
            for group in row_groups {
                // Diagonal entries of the conditioned kernel are the matched
                // probabilities of this white's edges; they sum to 1.
                let probs: Vec<f64> = group.iter().map(|&gi| l[(gi, gi)].max(0.0)).collect();
                let total: f64 = probs.iter().sum();
                if !(0.999..=1.001).contains(&total) {
                    return Err(SqhexError::Numerical(format!(
                        "conditioned edge probabilities sum to {total}"
                    )));
                }
                let mut u = rng.gen::<f64>() * total;
                let mut pick = group.len() - 1;
                for (i, &p) in probs.iter().enumerate() {
                    u -= p;
                    if u <= 0.0 {
                        pick = i;
                        break;
                    }
                }
                let e = group[pick];
                // Status: particle iff matched upward.
                let eid = self.edges[e];
                let edge = self.lat.edges[eid];
                let other_row = self.lat.vertices[edge.black].row;
                statuses.push(other_row > row);
                // Condition on `e ∈ M`.
                let pivot = l[(e, e)];
                if pivot.abs() < 1e-12 {
                    return Err(SqhexError::Numerical("vanishing pivot in row sampler".into()));
                }
                let col: Vec<f64> = (0..s).map(|r| l[(r, e)]).collect();
                let row_e: Vec<f64> = (0..s).map(|c| l[(e, c)]).collect();
                for r in 0..s {
                    let f = col[r] / pivot;
                    if f == 0.0 {
                        continue;
                    }
                    for c in 0..s {
                        l[(r, c)] -= f * row_e[c];
                    }
                }
                // Re-impose the conditioned edge's own inclusion.
                l[(e, e)] = 1.0;
            }
            out.push(row_signature(&statuses));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, enumerate_matchings, LatticeSpec};
    use approx::assert_relative_eq;
    use std::collections::BTreeSet;
    use std::collections::HashMap;

    fn model_for(c: &[u8], x: Vec<f64>, y: Vec<f64>) -> WeightModel {
        let i2: BTreeSet<usize> = c
            .iter()
            .enumerate()
            .filter(|&(_, &ci)| ci == 0)
            .map(|(i, _)| i + 1)
            .collect();
        WeightModel::new(x, y, i2, None).unwrap()
    }

    fn lat(omega: &[i64], c: &[u8], x: Vec<f64>, y: Vec<f64>) -> Lattice {
        let model = model_for(c, x, y);
        build_lattice(&LatticeSpec::new(omega.to_vec(), c.to_vec(), model).unwrap()).unwrap()
    }

    #[test]
    fn det_equals_partition_function() {
        for (omega, c) in [
            (vec![1i64], vec![1u8]),
            (vec![1, 3], vec![1, 1]),
            (vec![1, 2], vec![0, 1]),
            (vec![1, 2, 4], vec![0, 1, 0]),
            (vec![1, 3, 6], vec![1, 0, 1]),
            (vec![1, 3, 6], vec![0, 0, 0]),
        ] {
            let n = omega.len();
            let x: Vec<f64> = (0..n).map(|i| 0.9 + 0.23 * i as f64).collect();
            let y: Vec<f64> = (0..n).map(|i| 0.6 + 0.11 * i as f64).collect();
            let l = lat(&omega, &c, x, y);
            let k = kasteleyn_matrix(&l).unwrap();
            let ms = enumerate_matchings(&l).unwrap();
            let z: f64 = ms.iter().map(|m| m.log_weight.exp()).sum();
            assert_relative_eq!(k.log_abs_det().exp(), z, max_relative = 1e-10);
        }
    }

    #[test]
    fn spectral_curve_examples() {
        // n=2, I₂={2}: P = (z−x1)(z−x2) − w(1+y2 z).
        let mut i2 = BTreeSet::new();
        i2.insert(2);
        let model = WeightModel::new(vec![1.3, 0.7], vec![0.0, 0.4], i2, None).unwrap();
        let curve = torus_curve(&model);
        for (re, im) in [(0.3, 0.9), (-1.2, 0.4), (2.0, -0.7)] {
            let z = Complex64::new(re, im);
            let w = Complex64::new(0.11, -0.37);
            let direct = (z - 1.3) * (z - 0.7) - w * (1.0 + 0.4 * z);
            let got = curve.eval_p(z, w);
            assert_relative_eq!(got.re, direct.re, epsilon = 1e-12);
            assert_relative_eq!(got.im, direct.im, epsilon = 1e-12);
            // P(z, R(z)) = 0.
            let on_curve = curve.eval_p(z, curve.eval_r(z));
            assert!(on_curve.norm() < 1e-10);
        }
        // n=1, I₂=∅: R(z) = z − x1.
        let model = WeightModel::new(vec![0.8], vec![0.0], BTreeSet::new(), None).unwrap();
        let curve = torus_curve(&model);
        let z = Complex64::new(1.7, 0.2);
        let r = curve.eval_r(z);
        assert_relative_eq!(r.re, (z - 0.8).re, epsilon = 1e-12);
        assert_relative_eq!(r.im, (z - 0.8).im, epsilon = 1e-12);
    }

    #[test]
    fn inclusion_probabilities_sum_to_one() {
        let l = lat(&[1, 3, 6], &[1, 0, 1], vec![1.1, 0.7, 1.4], vec![0.0, 0.8, 0.0]);
        let k = kasteleyn_matrix(&l).unwrap();
        let inv = k.mat.clone().try_inverse().unwrap();
        for &w in &k.whites {
            let wi = k.white_row(w);
            let total: f64 = l.adj[w]
                .iter()
                .map(|&e| {
                    let b = l.edges[e].black;
                    k.mat[(wi, k.black_col(b))] * inv[(k.black_col(b), wi)]
                })
                .sum();
            assert_relative_eq!(total, 1.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn inclusion_probabilities_match_enumeration() {
        let l = lat(&[1, 3], &[1, 1], vec![1.0, 2.0], vec![0.0, 0.0]);
        let k = kasteleyn_matrix(&l).unwrap();
        let inv = k.mat.clone().try_inverse().unwrap();
        let ms = enumerate_matchings(&l).unwrap();
        let z: f64 = ms.iter().map(|m| m.log_weight.exp()).sum();
        for (e, edge) in l.edges.iter().enumerate() {
            let p = edge_inclusion_probability(&k, &inv, k.white_row(edge.white), k.black_col(edge.black));
            let p_enum: f64 = ms
                .iter()
                .filter(|m| m.edges.contains(&e))
                .map(|m| m.log_weight.exp())
                .sum::<f64>()
                / z;
            assert_relative_eq!(p, p_enum, epsilon = 1e-10);
        }
    }

    #[test]
    fn sampler_is_deterministic_given_seed() {
        let l = lat(&[1, 3, 6], &[1, 0, 1], vec![1.1, 0.7, 1.4], vec![0.0, 0.8, 0.0]);
        let a = determinantal_sample(&l, 42).unwrap();
        let b = determinantal_sample(&l, 42).unwrap();
        assert_eq!(a.edges, b.edges);
    }

    #[test]
    fn sampler_marginals_match_enumeration() {
        let l = lat(&[1, 3], &[1, 1], vec![1.0, 2.0], vec![0.0, 0.0]);
        let ms = enumerate_matchings(&l).unwrap();
        let z: f64 = ms.iter().map(|m| m.log_weight.exp()).sum();
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        let trials = 20000;
        for seed in 0..trials {
            let m = determinantal_sample(&l, seed as u64).unwrap();
            *counts.entry(m.edges).or_insert(0) += 1;
        }
        for m in &ms {
            let expected = m.log_weight.exp() / z;
            let got = *counts.get(&m.edges).unwrap_or(&0) as f64 / trials as f64;
            assert!((got - expected).abs() < 0.02, "expected {expected}, got {got}");
        }
    }

    #[test]
    fn row_sampler_matches_enumeration() {
        let l = lat(&[1, 2, 4], &[0, 1, 0], vec![1.2, 0.8, 1.5], vec![0.7, 0.0, 0.9]);
        let ms = enumerate_matchings(&l).unwrap();
        let z: f64 = ms.iter().map(|m| m.log_weight.exp()).sum();
        // Exact marginal of the row-3 signature (index 2 in the chain).
        let mut exact: HashMap<Vec<i64>, f64> = HashMap::new();
        for m in &ms {
            *exact.entry(m.signatures[2].parts().to_vec()).or_insert(0.0) +=
                m.log_weight.exp() / z;
        }
        let sampler = RowSampler::new(&l, &[3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let trials = 40000;
        let mut counts: HashMap<Vec<i64>, usize> = HashMap::new();
        for _ in 0..trials {
            let sigs = sampler.sample(&mut rng).unwrap();
            *counts.entry(sigs[0].parts().to_vec()).or_insert(0) += 1;
        }
        for (samp, p) in &exact {
            let got = *counts.get(samp).unwrap_or(&0) as f64 / trials as f64;
            assert!(
                (got - p).abs() < 0.01,
                "row marginal {samp:?}: expected {p}, got {got}"
            );
        }
    }
}
