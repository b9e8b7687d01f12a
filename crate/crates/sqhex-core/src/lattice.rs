//! Construction of the finite contracting square-hexagon lattice, the
//! bijection between perfect matchings and interlacing signature chains,
//! brute-force enumeration, and height fields on the dual graph.
//!
//! # Geometry
//!
//! Vertices live on rows `1..=2N+1`; odd rows are white, even rows black.
//! Horizontal positions are stored doubled (`x2`), so genuine half-integer
//! coordinates stay exact. The bottom white row has vertices at
//! `x2 = 2·Ω_i − 1`. Going up:
//!
//! * a `c_s = 1` row of blacks sits vertically above every position of the
//!   white hull below (same parity, same extent), contributing hexagonal
//!   faces;
//! * a `c_s = 0` row of blacks sits diagonally between/outside the whites
//!   (flipped parity, extent widened by one step on each side), contributing
//!   square faces;
//! * the next white row always sits diagonally between the blacks (flipped
//!   parity, extent narrowed by one step on each side).
//!
//! Edge weights: slanted edges from a black row `2s` up-right to row `2s+1`
//! carry `x_s` (up-left edges carry 1); slanted edges from a white row
//! `2s−1` up-right to a `c_s = 0` black row carry `y_s` (up-left 1);
//! vertical edges carry 1.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SqhexError};
use crate::partitions::{is_horizontal_strip, is_vertical_strip, Signature};
use crate::schur::WeightModel;

/// Vertex color; white rows are odd, black rows even.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Color {
    White,
    Black,
}

/// A lattice vertex at `(row, x2/2)`.
#[derive(Debug, Clone, Copy)]
pub struct Vertex {
    /// Row index, 1-based from the bottom.
    pub row: usize,
    /// Doubled horizontal coordinate.
    pub x2: i64,
    /// Color implied by row parity.
    pub color: Color,
}

/// Orientation of an edge, read from its lower endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    Vertical,
    /// Upper endpoint one half-step to the right.
    NorthEast,
    /// Upper endpoint one half-step to the left.
    NorthWest,
}

/// A weighted edge between a white and a black vertex.
#[derive(Debug, Clone, Copy)]
pub struct Edge {
    /// Index of the white endpoint.
    pub white: usize,
    /// Index of the black endpoint.
    pub black: usize,
    /// Multiplicative weight.
    pub weight: f64,
    /// Geometric orientation.
    pub kind: EdgeKind,
}

/// Input data for [`build_lattice`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeSpec {
    /// Number of bottom-row white vertices.
    pub n: usize,
    /// Strictly increasing boundary positions with `Ω_1 = 1`.
    pub omega: Vec<i64>,
    /// Row pattern bits `c_1…c_N` (`c=0` rows carry square faces).
    pub c: Vec<u8>,
    /// Periodic edge weights.
    pub model: WeightModel,
}

impl LatticeSpec {
    /// Builds and validates a spec.
    pub fn new(omega: Vec<i64>, c: Vec<u8>, model: WeightModel) -> Result<Self> {
        let n = omega.len();
        if n == 0 {
            return Err(SqhexError::InvalidInput("boundary must be nonempty".into()));
        }
        if omega[0] != 1 {
            return Err(SqhexError::InvalidInput("boundary must start at 1".into()));
        }
        if omega.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SqhexError::InvalidInput(
                "boundary positions must be strictly increasing".into(),
            ));
        }
        if c.len() != n {
            return Err(SqhexError::InvalidInput(format!(
                "row pattern length {} must equal N={n}",
                c.len()
            )));
        }
        for (idx, &ci) in c.iter().enumerate() {
            if ci > 1 {
                return Err(SqhexError::InvalidInput("row pattern entries must be 0 or 1".into()));
            }
            if (ci == 0) != model.row_in_i2(idx + 1) {
                return Err(SqhexError::InvalidInput(format!(
                    "row pattern at row {} disagrees with the model's square-row classes",
                    idx + 1
                )));
            }
        }
        Ok(LatticeSpec { n, omega, c, model })
    }

    /// Staircase boundary (one kept vertex per `m` positions) with the row
    /// pattern induced by the model's periodic classes.
    pub fn staircase(n: usize, model: WeightModel) -> Result<Self> {
        let m = model.staircase_m.unwrap_or(1) as i64;
        let omega: Vec<i64> = (0..n as i64).map(|i| i * m + 1).collect();
        let c: Vec<u8> = (1..=n).map(|i| if model.row_in_i2(i) { 0 } else { 1 }).collect();
        LatticeSpec::new(omega, c, model)
    }
}

/// The constructed lattice with vertex/edge tables and row extents.
#[derive(Debug, Clone)]
pub struct Lattice {
    /// Originating spec.
    pub spec: LatticeSpec,
    /// Vertex table.
    pub vertices: Vec<Vertex>,
    /// Edge table.
    pub edges: Vec<Edge>,
    /// Incident edge ids per vertex.
    pub adj: Vec<Vec<usize>>,
    /// Doubled-coordinate extent `(L, R)` of each row `1..=2N+1`
    /// (`L > R` encodes an empty row).
    pub hull: Vec<(i64, i64)>,
    index: HashMap<(usize, i64), usize>,
}

impl Lattice {
    /// Vertex id at `(row, x2)` if present.
    pub fn vertex_at(&self, row: usize, x2: i64) -> Option<usize> {
        self.index.get(&(row, x2)).copied()
    }

    /// Edge id between two vertices if adjacent.
    pub fn edge_between(&self, u: usize, v: usize) -> Option<usize> {
        self.adj[u]
            .iter()
            .copied()
            .find(|&e| self.edges[e].white == u && self.edges[e].black == v
                || self.edges[e].black == u && self.edges[e].white == v)
    }

    /// Total number of rows (`2N+1`; the top row may be empty).
    pub fn row_count(&self) -> usize {
        2 * self.spec.n + 1
    }

    /// Vertex ids of a row, left to right.
    pub fn row_vertices(&self, row: usize) -> Vec<usize> {
        let (l, r) = self.hull[row - 1];
        let mut out = Vec::new();
        let mut p = l;
        while p <= r {
            if let Some(v) = self.vertex_at(row, p) {
                out.push(v);
            }
            p += 2;
        }
        out
    }

    /// White vertex ids in order (row-major).
    pub fn whites(&self) -> Vec<usize> {
        (0..self.vertices.len())
            .filter(|&v| self.vertices[v].color == Color::White)
            .collect()
    }

    /// Black vertex ids in order (row-major).
    pub fn blacks(&self) -> Vec<usize> {
        (0..self.vertices.len())
            .filter(|&v| self.vertices[v].color == Color::Black)
            .collect()
    }

    /// log-weight `Σ log w_e` of an edge set.
    pub fn log_weight(&self, edges: &[usize]) -> f64 {
        edges.iter().map(|&e| self.edges[e].weight.ln()).sum()
    }

    /// Map vertex id → matched edge id for a perfect matching.
    pub fn partner_map(&self, matching: &[usize]) -> Result<Vec<usize>> {
        let mut partner = vec![usize::MAX; self.vertices.len()];
        for &e in matching {
            let edge = self.edges[e];
            for v in [edge.white, edge.black] {
                if partner[v] != usize::MAX {
                    return Err(SqhexError::InvalidInput(format!(
                        "vertex {v} covered twice"
                    )));
                }
                partner[v] = e;
            }
        }
        if partner.iter().any(|&p| p == usize::MAX) {
            return Err(SqhexError::InvalidInput("matching is not perfect".into()));
        }
        Ok(partner)
    }
}

/// A perfect matching together with its signature chain
/// `(μ^(N), ν^(N), μ^(N−1), …, ν^(1), μ^(0))` and log-weight.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatchingRecord {
    /// Sorted matched edge ids.
    pub edges: Vec<usize>,
    /// Signature chain, bottom row first.
    pub signatures: Vec<Signature>,
    /// `Σ log w_e`.
    pub log_weight: f64,
}

/// Boundary signature `ω_k = Ω_{N+1−k} − (N+1−k)`.
pub fn boundary_signature(omega: &[i64]) -> Result<Signature> {
    let n = omega.len();
    let parts: Vec<i64> = (0..n).map(|k| omega[n - 1 - k] - (n - k) as i64).collect();
    Signature::new(parts)
}

/// Builds the lattice row by row per the inductive construction.
pub fn build_lattice(spec: &LatticeSpec) -> Result<Lattice> {
    let n = spec.n;
    let mut vertices: Vec<Vertex> = Vec::new();
    let mut index: HashMap<(usize, i64), usize> = HashMap::new();
    let mut hull: Vec<(i64, i64)> = vec![(1, 0); 2 * n + 1];

    let add_vertex = |row: usize, x2: i64, vertices: &mut Vec<Vertex>, index: &mut HashMap<(usize, i64), usize>| {
        let color = if row % 2 == 1 { Color::White } else { Color::Black };
        let id = vertices.len();
        vertices.push(Vertex { row, x2, color });
        index.insert((row, x2), id);
        id
    };

    // Bottom white row: vertices at 2Ω_i − 1; hull spans the full range.
    for &o in &spec.omega {
        add_vertex(1, 2 * o - 1, &mut vertices, &mut index);
    }
    hull[0] = (1, 2 * spec.omega[n - 1] - 1);

    for s in 1..=n {
        let (lw, rw) = hull[2 * s - 2];
        // Black row 2s.
        let (lb, rb) = if spec.c[s - 1] == 1 { (lw, rw) } else { (lw - 1, rw + 1) };
        hull[2 * s - 1] = (lb, rb);
        let mut p = lb;
        while p <= rb {
            add_vertex(2 * s, p, &mut vertices, &mut index);
            p += 2;
        }
        // White row 2s+1.
        let (lu, ru) = (lb + 1, rb - 1);
        hull[2 * s] = (lu, ru);
        let mut p = lu;
        while p <= ru {
            add_vertex(2 * s + 1, p, &mut vertices, &mut index);
            p += 2;
        }
    }

    // Edges.
    let mut edges: Vec<Edge> = Vec::new();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); vertices.len()];
    let add_edge = |w: usize, b: usize, weight: f64, kind: EdgeKind,
                        edges: &mut Vec<Edge>, adj: &mut Vec<Vec<usize>>| {
        let id = edges.len();
        edges.push(Edge { white: w, black: b, weight, kind });
        adj[w].push(id);
        adj[b].push(id);
    };

    for s in 1..=n {
        let xs = spec.model.x_at(s);
        let ys = spec.model.y_at(s);
        // White row 2s−1 to black row 2s.
        for v in 0..vertices.len() {
            if vertices[v].row != 2 * s - 1 {
                continue;
            }
            let x2 = vertices[v].x2;
            if spec.c[s - 1] == 1 {
                if let Some(b) = index.get(&(2 * s, x2)) {
                    add_edge(v, *b, 1.0, EdgeKind::Vertical, &mut edges, &mut adj);
                }
            } else {
                if let Some(b) = index.get(&(2 * s, x2 - 1)) {
                    add_edge(v, *b, 1.0, EdgeKind::NorthWest, &mut edges, &mut adj);
                }
                if let Some(b) = index.get(&(2 * s, x2 + 1)) {
                    add_edge(v, *b, ys, EdgeKind::NorthEast, &mut edges, &mut adj);
                }
            }
        }
        // Black row 2s to white row 2s+1.
        for v in 0..vertices.len() {
            if vertices[v].row != 2 * s {
                continue;
            }
            let x2 = vertices[v].x2;
            if let Some(w) = index.get(&(2 * s + 1, x2 + 1)) {
                add_edge(*w, v, xs, EdgeKind::NorthEast, &mut edges, &mut adj);
            }
            if let Some(w) = index.get(&(2 * s + 1, x2 - 1)) {
                add_edge(*w, v, 1.0, EdgeKind::NorthWest, &mut edges, &mut adj);
            }
        }
    }

    let lat = Lattice { spec: spec.clone(), vertices, edges, adj, hull, index };
    let nw = lat.whites().len();
    let nb = lat.blacks().len();
    if nw != nb {
        return Err(SqhexError::InvalidInput(format!(
            "no perfect matching: {nw} white vs {nb} black vertices"
        )));
    }
    Ok(lat)
}

/// Signature of a row from its left-to-right particle statuses
/// (`true` = particle): the `k`-th particle from the right contributes the
/// number of holes to its left.
pub(crate) fn row_signature(statuses: &[bool]) -> Signature {
    let mut holes_left = Vec::with_capacity(statuses.len());
    let mut holes = 0i64;
    for &s in statuses {
        if s {
            holes_left.push(holes);
        } else {
            holes += 1;
        }
    }
    holes_left.reverse();
    Signature::new(holes_left).expect("hole counts are weakly decreasing right-to-left")
}

/// Left-to-right statuses from a signature: particle `k` from the right sits
/// at slot `μ_k + n_v − k` (0-based) among `n_slots` hull positions.
fn statuses_from_signature(sig: &Signature, n_slots: usize) -> Result<Vec<bool>> {
    let n_v = sig.len();
    let mut statuses = vec![false; n_slots];
    for k in 1..=n_v {
        let slot = sig.part(k - 1) + (n_v - k) as i64;
        if slot < 0 || slot as usize >= n_slots {
            return Err(SqhexError::InvalidInput(format!(
                "particle slot {slot} outside row of {n_slots} positions"
            )));
        }
        if statuses[slot as usize] {
            return Err(SqhexError::InvalidInput("duplicate particle slot".into()));
        }
        statuses[slot as usize] = true;
    }
    Ok(statuses)
}

/// Row statuses of a perfect matching: particles are vertices matched toward
/// the higher of the two rows an edge spans (for the bottom row, removed hull
/// positions count as holes).
fn matching_row_statuses(lat: &Lattice, partner: &[usize], row: usize) -> Vec<bool> {
    let (l, r) = lat.hull[row - 1];
    let mut out = Vec::new();
    let mut p = l;
    while p <= r {
        match lat.vertex_at(row, p) {
            None => out.push(false),
            Some(v) => {
                let e = partner[v];
                let other = if lat.edges[e].white == v { lat.edges[e].black } else { lat.edges[e].white };
                let up = lat.vertices[other].row > row;
                // Whites are particles when matched up, blacks when matched
                // down: a matched edge's particle is its lower-row endpoint
                // for black rows and the white endpoint for slanted rows.
                let is_particle = match lat.vertices[v].color {
                    Color::White => up,
                    Color::Black => !up,
                };
                out.push(is_particle);
            }
        }
        p += 2;
    }
    out
}

/// Reads the signature chain `(μ^(N), ν^(N), …, μ^(0))` off a perfect
/// matching and validates the interlacing constraints.
pub fn matching_to_signatures(lat: &Lattice, matching: &[usize]) -> Result<Vec<Signature>> {
    let partner = lat.partner_map(matching)?;
    let n = lat.spec.n;
    let mut seq = Vec::with_capacity(2 * n + 1);
    for row in 1..=(2 * n + 1) {
        let statuses = matching_row_statuses(lat, &partner, row);
        seq.push(row_signature(&statuses));
    }
    validate_chain(lat, &seq)?;
    Ok(seq)
}

/// Checks lengths, the boundary value, the interlacing chain, and the
/// frozen rows (`c=1` forces equality of the two signatures it spans).
fn validate_chain(lat: &Lattice, seq: &[Signature]) -> Result<()> {
    let n = lat.spec.n;
    if seq.len() != 2 * n + 1 {
        return Err(SqhexError::InvalidInput(format!(
            "chain must have {} signatures, got {}",
            2 * n + 1,
            seq.len()
        )));
    }
    let omega = boundary_signature(&lat.spec.omega)?;
    if seq[0] != omega {
        return Err(SqhexError::ChainViolation {
            level: n,
            detail: format!("bottom signature {:?} differs from boundary {:?}", seq[0].parts(), omega.parts()),
        });
    }
    for s in 1..=n {
        let t = n - s + 1; // level of the strip
        let mu_lo = &seq[2 * s - 2]; // μ^(t)
        let nu = &seq[2 * s - 1]; // ν^(t)
        let mu_hi = &seq[2 * s]; // μ^(t−1)
        if mu_lo.len() != t || nu.len() != t || mu_hi.len() != t - 1 {
            return Err(SqhexError::ChainViolation {
                level: t,
                detail: "signature length out of place".into(),
            });
        }
        if lat.spec.c[s - 1] == 1 {
            if mu_lo != nu {
                return Err(SqhexError::ChainViolation {
                    level: t,
                    detail: "hexagon row must keep its signature".into(),
                });
            }
        } else if !is_vertical_strip(mu_lo, nu)? {
            return Err(SqhexError::ChainViolation {
                level: t,
                detail: "square row is not a vertical strip".into(),
            });
        }
        if !is_horizontal_strip(mu_hi, nu)? {
            return Err(SqhexError::ChainViolation {
                level: t,
                detail: "slanted strip is not interlacing".into(),
            });
        }
    }
    Ok(())
}

/// Rebuilds the unique perfect matching realizing a signature chain.
pub fn signatures_to_matching(lat: &Lattice, seq: &[Signature]) -> Result<Vec<usize>> {
    validate_chain(lat, seq)?;
    let n = lat.spec.n;
    // Statuses per row.
    let mut statuses: Vec<Vec<bool>> = Vec::with_capacity(2 * n + 1);
    for row in 1..=(2 * n + 1) {
        let (l, r) = lat.hull[row - 1];
        let n_slots = if l > r { 0 } else { ((r - l) / 2 + 1) as usize };
        statuses.push(statuses_from_signature(&seq[row - 1], n_slots)?);
    }
    // Bottom-row particles must sit exactly on the boundary vertices.
    {
        let (l, _) = lat.hull[0];
        for (i, &st) in statuses[0].iter().enumerate() {
            let present = lat.vertex_at(1, l + 2 * i as i64).is_some();
            if st != present {
                return Err(SqhexError::ChainViolation {
                    level: n,
                    detail: "bottom-row particles must coincide with boundary vertices".into(),
                });
            }
        }
    }

    let row_ids = |row: usize, want: bool| -> Vec<usize> {
        let (l, _) = lat.hull[row - 1];
        statuses[row - 1]
            .iter()
            .enumerate()
            .filter(|&(_,

 &st)| st == want)
            .filter_map(|(i, _)| lat.vertex_at(row, l + 2 * i as i64))
            .collect()
    };

    let mut matching = Vec::new();
    for s in 1..=n {
        let t = n - s + 1;
        // Up-matched whites of row 2s−1 pair with down-matched blacks of 2s.
        let ups = row_ids(2 * s - 1, true);
        let downs = row_ids(2 * s, true);
        if ups.len() != downs.len() {
            return Err(SqhexError::ChainViolation { level: t, detail: "particle counts differ across a row pair".into() });
        }
        for (&w, &b) in ups.iter().zip(&downs) {
            let e = lat.edge_between(w, b).ok_or(SqhexError::ChainViolation {
                level: t,
                detail: format!("paired vertices {w},{b} are not adjacent"),
            })?;
            matching.push(e);
        }
        // Up-matched blacks of row 2s pair with down-matched whites of 2s+1.
        let ups = row_ids(2 * s, false);
        let downs = row_ids(2 * s + 1, false);
        if ups.len() != downs.len() {
            return Err(SqhexError::ChainViolation { level: t, detail: "hole counts differ across a row pair".into() });
        }
        for (&b, &w) in ups.iter().zip(&downs) {
            let e = lat.edge_between(w, b).ok_or(SqhexError::ChainViolation {
                level: t,
                detail: format!("paired vertices {b},{w} are not adjacent"),
            })?;
            matching.push(e);
        }
    }
    matching.sort_unstable();
    // Sanity: the result must cover every vertex exactly once.
    lat.partner_map(&matching)?;
    Ok(matching)
}

/// Enumerates every perfect matching (guarded oracle, ≤ 60 vertices).
pub fn enumerate_matchings(lat: &Lattice) -> Result<Vec<MatchingRecord>> {
    let nv = lat.vertices.len();
    if nv > 60 {
        return Err(SqhexError::SizeGuard(format!(
            "enumeration limited to 60 vertices, lattice has {nv}"
        )));
    }
    let mut covered = vec![false; nv];
    let mut chosen: Vec<usize> = Vec::new();
    let mut out: Vec<Vec<usize>> = Vec::new();
    fn rec(lat: &Lattice, covered: &mut [bool], chosen: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let v = match covered.iter().position(|&c| !c) {
            None => {
                let mut m = chosen.clone();
                m.sort_unstable();
                out.push(m);
                return;
            }
            Some(v) => v,
        };
        for &e in &lat.adj[v] {
            let edge = lat.edges[e];
            let other = if edge.white == v { edge.black } else { edge.white };
            if covered[other] {
                continue;
            }
            covered[v] = true;
            covered[other] = true;
            chosen.push(e);
            rec(lat, covered, chosen, out);
            chosen.pop();
            covered[v] = false;
            covered[other] = false;
        }
    }
    rec(lat, &mut covered, &mut chosen, &mut out);
    out.into_iter()
        .map(|edges| {
            let signatures = matching_to_signatures(lat, &edges)?;
            let log_weight = lat.log_weight(&edges);
            Ok(MatchingRecord { edges, signatures, log_weight })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Height fields
// ---------------------------------------------------------------------------

/// A dual vertex (a face of the ambient lattice) carrying a height value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualVertex {
    /// Face centroid, horizontal.
    pub x: f64,
    /// Face centroid, vertical (row units).
    pub y: f64,
    /// Integer height.
    pub h: i64,
    /// True when the face touches a vertex outside the finite lattice, so
    /// its height is matching-independent.
    pub boundary: bool,
}

/// Heights on the dual graph of the lattice.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeightField {
    /// Dual vertices sorted by `(y, x)`.
    pub verts: Vec<DualVertex>,
}

impl HeightField {
    /// Height at the dual vertex nearest to `(x, y)`.
    pub fn value_near(&self, x: f64, y: f64) -> i64 {
        self.verts
            .iter()
            .min_by(|a, b| {
                let da = (a.x - x).powi(2) + (a.y - y).powi(2);
                let db = (b.x - x).powi(2) + (b.y - y).powi(2);
                da.partial_cmp(&db).unwrap()
            })
            .map(|v| v.h)
            .unwrap_or(0)
    }
}

/// A face of the ambient (whole-plane) lattice: cyclic vertex list as
/// `(row, x2)` pairs, where `row` may be 0 (below the lattice).
pub(crate) struct AmbientFace {
    pub(crate) corners: Vec<(i64, i64)>,
}

impl AmbientFace {
    fn centroid(&self) -> (f64, f64) {
        let k = self.corners.len() as f64;
        let x: f64 = self.corners.iter().map(|&(_, x2)| x2 as f64 * 0.5).sum();
        let y: f64 = self.corners.iter().map(|&(r, _)| r as f64).sum();
        (x / k, y / k)
    }
    pub(crate) fn boundary_edges(&self) -> Vec<((i64, i64), (i64, i64))> {
        let k = self.corners.len();
        (0..k)
            .map(|i| {
                let a = self.corners[i];
                let b = self.corners[(i + 1) % k];
                if a <= b { (a, b) } else { (b, a) }
            })
            .collect()
    }
}

/// Faces of the ambient lattice incident to at least one lattice vertex.
pub(crate) fn ambient_faces(lat: &Lattice) -> Vec<AmbientFace> {
    let n = lat.spec.n;
    let mut faces = Vec::new();
    for s in 1..=n {
        let (lw, rw) = lat.hull[2 * s - 2];
        let r2s = 2 * s as i64;
        if lat.spec.c[s - 1] == 1 {
            // Hexagons spanning rows 2s−2 .. 2s+1.
            let mut x = lw - 2;
            while x <= rw {
                faces.push(AmbientFace {
                    corners: vec![
                        (r2s - 1, x),
                        (r2s, x),
                        (r2s + 1, x + 1),
                        (r2s, x + 2),
                        (r2s - 1, x + 2),
                        (r2s - 2, x + 1),
                    ],
                });
                x += 2;
            }
        } else {
            // Lower squares spanning rows 2s−2 .. 2s.
            let mut x = lw - 2;
            while x <= rw {
                faces.push(AmbientFace {
                    corners: vec![(r2s - 1, x), (r2s, x + 1), (r2s - 1, x + 2), (r2s - 2, x + 1)],
                });
                x += 2;
            }
            // Upper squares spanning rows 2s−1 .. 2s+1.
            let (lb, rb) = lat.hull[2 * s - 1];
            let mut p = lb - 2;
            while p <= rb {
                faces.push(AmbientFace {
                    corners: vec![(r2s, p), (r2s + 1, p + 1), (r2s, p + 2), (r2s - 1, p + 1)],
                });
                p += 2;
            }
        }
    }
    // Keep faces incident to the finite lattice.
    faces
        .into_iter()
        .filter(|f| {
            f.corners.iter().any(|&(r, x2)| {
                r >= 1 && lat.vertex_at(r as usize, x2).is_some()
            })
        })
        .collect()
}

/// Computes the height field of a perfect matching.
///
/// Heights are defined on the faces of the ambient lattice that touch the
/// finite lattice. Crossing a dual edge over a slanted lattice edge changes
/// the height by ±1 (absent edge) or ∓3 (matched edge); over a vertical edge
/// by ±2; the `+` sign applies when the white endpoint lies to the left of
/// the oriented dual step. The field is anchored at 0 on the lexicographic
/// smallest (bottom-left) dual vertex and checked for path-independence.
pub fn height_field(lat: &Lattice, matching: &[usize]) -> Result<HeightField> {
    let partner = lat.partner_map(matching)?;
    let faces = ambient_faces(lat);
    let nf = faces.len();

    // Edge → adjacent face ids.
    let mut edge_faces: HashMap<((i64, i64), (i64, i64)), Vec<usize>> = HashMap::new();
    for (fi, f) in faces.iter().enumerate() {
        for e in f.boundary_edges() {
            edge_faces.entry(e).or_default().push(fi);
        }
    }

    // Anchor: lexicographic smallest by (y, x).
    let mut order: Vec<usize> = (0..nf).collect();
    order.sort_by(|&a, &b| {
        let ca = faces[a].centroid();
        let cb = faces[b].centroid();
        (ca.1, ca.0).partial_cmp(&(cb.1, cb.0)).unwrap()
    });
    let root = order[0];

    let mut h: Vec<Option<i64>> = vec![None; nf];
    h[root] = Some(0);
    let mut queue = std::collections::VecDeque::from([root]);
    let mut dual_edges: Vec<(usize, usize, ((i64, i64), (i64, i64)))> = Vec::new();
    for (e, fs) in &edge_faces {
        if fs.len() == 2 {
            dual_edges.push((fs[0], fs[1], *e));
        }
    }
    // Adjacency list over faces.
    let mut fadj: Vec<Vec<(usize, ((i64, i64), (i64, i64)))>> = vec![Vec::new(); nf];
    for &(a, b, e) in &dual_edges {
        fadj[a].push((b, e));
        fadj[b].push((a, e));
    }

    let increment = |from: usize, to: usize, e: ((i64, i64), (i64, i64))| -> i64 {
        let ((r1, p1), (r2, p2)) = e;
        // White endpoint: odd row.
        let (wr, wx) = if r1 % 2 == 1 { (r1, p1) } else { (r2, p2) };
        let present = match (
            (r1 >= 1).then(|| lat.vertex_at(r1 as usize, p1)).flatten(),
            (r2 >= 1).then(|| lat.vertex_at(r2 as usize, p2)).flatten(),
        ) {
            (Some(u), Some(v)) => match lat.edge_between(u, v) {
                Some(eid) => partner[u] == eid,
                None => false,
            },
            _ => false,
        };
        let c1 = faces[from].centroid();
        let c2 = faces[to].centroid();
        let (dx, dy) = (c2.0 - c1.0, c2.1 - c1.1);
        let (wxf, wyf) = (wx as f64 * 0.5, wr as f64);
        let cross = dx * (wyf - c1.1) - dy * (wxf - c1.0);
        debug_assert!(cross.abs() > 1e-9);
        let white_left = cross > 0.0;
        let vertical = p1 == p2;
        let base = match (vertical, present) {
            (true, false) => 2,
            (true, true) => -2,
            (false, false) => 1,
            (false, true) => -3,
        };
        if white_left { base } else { -base }
    };

    while let Some(f) = queue.pop_front() {
        let hf = h[f].unwrap();
        for &(g, e) in &fadj[f] {
            let hv = hf + increment(f, g, e);
            match h[g] {
                None => {
                    h[g] = Some(hv);
                    queue.push_back(g);
                }
                Some(prev) => {
                    if prev != hv {
                        return Err(SqhexError::Numerical(format!(
                            "height field is path-dependent at face {g}: {prev} vs {hv}"
                        )));
                    }
                }
            }
        }
    }
    if h.iter().any(|v| v.is_none()) {
        return Err(SqhexError::Numerical("dual graph is disconnected".into()));
    }

    let mut verts: Vec<DualVertex> = faces
        .iter()
        .enumerate()
        .map(|(fi, f)| {
            let (x, y) = f.centroid();
            let boundary = f.corners.iter().any(|&(r, x2)| {
                r < 1 || lat.vertex_at(r as usize, x2).is_none()
            });
            DualVertex { x, y, h: h[fi].unwrap(), boundary }
        })
        .collect();
    verts.sort_by(|a, b| (a.y, a.x).partial_cmp(&(b.y, b.x)).unwrap());
    Ok(HeightField { verts })
}

/// Limiting rescaled height profile `𝐡(χ,κ)`, built from the cumulative
/// distribution of the level-`κ` limit measure:
/// `𝐡 = 2(2(1−κ)·CDF((χ−κr/(2n))/(1−κ)) − 2χ + 2κ)`.
pub fn limit_height(chi: f64, kappa: f64, model: &WeightModel) -> Result<f64> {
    if !(0.0..1.0).contains(&kappa) {
        return Err(SqhexError::InvalidInput("kappa must lie in [0,1)".into()));
    }
    let r = model.r() as f64;
    let n = model.n as f64;
    let v = (chi - kappa * r / (2.0 * n)) / (1.0 - kappa);
    let cdf = crate::asymptotics::density_cdf(v, kappa, model)?;
    Ok(2.0 * (2.0 * (1.0 - kappa) * cdf - 2.0 * chi + 2.0 * kappa))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::collections::BTreeSet;

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
    fn boundary_signature_examples() {
        assert_eq!(boundary_signature(&[1, 3, 6]).unwrap().parts(), &[3, 1, 0]);
        assert_eq!(boundary_signature(&[1, 2, 3, 4]).unwrap().parts(), &[0, 0, 0, 0]);
        // Staircase Ω_i = (i−1)m+1 gives parts (m−1)(N−1), ….
        assert_eq!(boundary_signature(&[1, 4, 7]).unwrap().parts(), &[4, 2, 0]);
    }

    #[test]
    fn single_vertex_lattice() {
        let l = lat(&[1], &[1], vec![1.0], vec![0.0]);
        assert_eq!(l.vertices.len(), 2);
        let ms = enumerate_matchings(&l).unwrap();
        assert_eq!(ms.len(), 1);
        assert_relative_eq!(ms[0].log_weight.exp(), 1.0);
    }

    #[test]
    fn two_row_hexagon_counts() {
        // Ω=(1,3), č=(1,1): two matchings with weights x1 and x2.
        let l = lat(&[1, 3], &[1, 1], vec![1.3, 0.6], vec![0.0, 0.0]);
        let ms = enumerate_matchings(&l).unwrap();
        assert_eq!(ms.len(), 2);
        let mut ws: Vec<f64> = ms.iter().map(|m| m.log_weight.exp()).collect();
        ws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_relative_eq!(ws[0], 0.6, max_relative = 1e-12);
        assert_relative_eq!(ws[1], 1.3, max_relative = 1e-12);
    }

    #[test]
    fn square_row_total_weight() {
        // Ω=(1,2), č=(0,1): Z = (1+y1x1)(1+y1x2).
        let (x1, x2, y1) = (1.3, 0.6, 0.8);
        let l = lat(&[1, 2], &[0, 1], vec![x1, x2], vec![y1, 0.0]);
        let ms = enumerate_matchings(&l).unwrap();
        let z: f64 = ms.iter().map(|m| m.log_weight.exp()).sum();
        assert_relative_eq!(z, (1.0 + y1 * x1) * (1.0 + y1 * x2), max_relative = 1e-12);
    }

    #[test]
    fn enumeration_matches_closed_form_all_patterns() {
        // All č patterns at N ≤ 3 with random-ish weights.
        let omegas: Vec<Vec<i64>> = vec![vec![1, 2], vec![1, 3], vec![1, 2, 4], vec![1, 3, 6]];
        for omega in omegas {
            let n = omega.len();
            for bits in 0u32..(1 << n) {
                let c: Vec<u8> = (0..n).map(|i| ((bits >> i) & 1) as u8).collect();
                let x: Vec<f64> = (0..n).map(|i| 0.6 + 0.41 * i as f64).collect();
                let y: Vec<f64> = (0..n).map(|i| 0.9 - 0.17 * i as f64).collect();
                let model = model_for(&c, x, y);
                let spec = LatticeSpec::new(omega.clone(), c.clone(), model.clone()).unwrap();
                let l = build_lattice(&spec).unwrap();
                let ms = enumerate_matchings(&l).unwrap();
                let z_enum: f64 = ms.iter().map(|m| m.log_weight.exp()).sum();
                let omega_sig = boundary_signature(&omega).unwrap();
                let z_formula = crate::schur::partition_function(&omega_sig, &c, &model).unwrap();
                assert_relative_eq!(z_enum, z_formula, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn signature_round_trip() {
        let l = lat(&[1, 3, 6], &[1, 0, 1], vec![1.1, 0.7, 1.6], vec![0.0, 0.9, 0.0]);
        let ms = enumerate_matchings(&l).unwrap();
        assert!(!ms.is_empty());
        for m in &ms {
            let rebuilt = signatures_to_matching(&l, &m.signatures).unwrap();
            assert_eq!(rebuilt, m.edges);
        }
        // Distinct matchings must give distinct chains (bijection).
        let mut chains: Vec<_> = ms.iter().map(|m| m.signatures.clone()).collect();
        chains.sort();
        chains.dedup();
        assert_eq!(chains.len(), ms.len());
    }

    #[test]
    fn frozen_lattice_all_zero_chain() {
        let l = lat(&[1, 2], &[1, 1], vec![1.0, 1.0], vec![0.0, 0.0]);
        let ms = enumerate_matchings(&l).unwrap();
        assert_eq!(ms.len(), 1);
        for sig in &ms[0].signatures {
            assert!(sig.parts().iter().all(|&p| p == 0));
        }
    }

    #[test]
    fn hexagon_row_marginals() {
        // Ω=(1,3), č=(1,1): matchings correspond to μ^(1)=(0) and (1).
        let l = lat(&[1, 3], &[1, 1], vec![1.0, 2.0], vec![0.0, 0.0]);
        let ms = enumerate_matchings(&l).unwrap();
        let mut mus: Vec<Vec<i64>> = ms.iter().map(|m| m.signatures[2].parts().to_vec()).collect();
        mus.sort();
        assert_eq!(mus, vec![vec![0], vec![1]]);
    }

    #[test]
    fn heights_well_defined_and_boundary_fixed() {
        for (omega, c) in [
            (vec![1i64, 3], vec![1u8, 1]),
            (vec![1, 2], vec![0, 1]),
            (vec![1, 2, 4], vec![0, 1, 0]),
            (vec![1, 3, 6], vec![1, 0, 1]),
        ] {
            let n = omega.len();
            let x: Vec<f64> = (0..n).map(|i| 0.8 + 0.3 * i as f64).collect();
            let y: Vec<f64> = vec![0.7; n];
            let l = lat(&omega, &c, x, y);
            let ms = enumerate_matchings(&l).unwrap();
            let fields: Vec<HeightField> = ms
                .iter()
                .map(|m| height_field(&l, &m.edges).unwrap())
                .collect();
            // Boundary dual vertices carry matching-independent heights.
            let b0: Vec<(i64, i64, i64)> = fields[0]
                .verts
                .iter()
                .filter(|v| v.boundary)
                .map(|v| ((v.x * 4.0).round() as i64, (v.y * 4.0).round() as i64, v.h))
                .collect();
            assert!(!b0.is_empty());
            for f in &fields[1..] {
                let b: Vec<(i64, i64, i64)> = f
                    .verts
                    .iter()
                    .filter(|v| v.boundary)
                    .map(|v| ((v.x * 4.0).round() as i64, (v.y * 4.0).round() as i64, v.h))
                    .collect();
                assert_eq!(b, b0);
            }
        }
    }
}
