//! Numerically robust evaluation of rational Schur functions and the closed
//! forms built from them.
//!
//! Schur values and their ratios span an enormous dynamic range when the
//! weights are strongly separated, so every evaluation path works in the log
//! domain. Two strategies are used: the bialternant determinant when the
//! evaluation points are well separated, and the single-variable branching
//! recursion (with memoization) when points cluster or coincide.

use std::collections::{BTreeSet, HashMap};

use num::bigint::BigInt;
use num::rational::BigRational;
use num::One;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SqhexError};
use crate::partitions::Signature;

/// Periodic edge-weight data: period `n`, multiplicative weights `x_1…x_n`
/// on the slanted edges of each period, and `y_i` on the square rows whose
/// class `i` belongs to `i2`. `staircase_m` records the uniform-boundary
/// spacing parameter when the model is used with a staircase boundary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightModel {
    /// Period length.
    pub n: usize,
    /// Slanted-edge weights, one per class.
    pub x: Vec<f64>,
    /// Square-row weights, one per class; entries for classes outside `i2`
    /// are ignored.
    pub y: Vec<f64>,
    /// Classes whose rows carry square faces (the rows with `c=0`).
    pub i2: BTreeSet<usize>,
    /// Uniform-boundary spacing (one kept boundary vertex per `m` positions).
    pub staircase_m: Option<u32>,
}

impl WeightModel {
    /// Builds and validates a model.
    pub fn new(
        x: Vec<f64>,
        y: Vec<f64>,
        i2: BTreeSet<usize>,
        staircase_m: Option<u32>,
    ) -> Result<Self> {
        let n = x.len();
        if n == 0 {
            return Err(SqhexError::InvalidInput("period must be at least 1".into()));
        }
        if y.len() != n {
            return Err(SqhexError::InvalidInput(format!(
                "y must have one entry per class: expected {n}, got {}",
                y.len()
            )));
        }
        if x.iter().any(|&v| !(v > 0.0)) {
            return Err(SqhexError::InvalidInput("x weights must be positive".into()));
        }
        for &i in &i2 {
            if i < 1 || i > n {
                return Err(SqhexError::InvalidInput(format!(
                    "class {i} outside 1..={n}"
                )));
            }
            if !(y[i - 1] > 0.0) {
                return Err(SqhexError::InvalidInput(format!(
                    "y weight for class {i} must be positive"
                )));
            }
        }
        Ok(WeightModel { n, x, y, i2, staircase_m })
    }

    /// Uniform model: period 1, unit weight, no square rows, spacing `m`.
    pub fn uniform(m: u32) -> Self {
        WeightModel {
            n: 1,
            x: vec![1.0],
            y: vec![0.0],
            i2: BTreeSet::new(),
            staircase_m: Some(m),
        }
    }

    /// Number of square-row classes per period.
    pub fn r(&self) -> usize {
        self.i2.len()
    }

    /// Class (1-based) of row index `i` (1-based).
    pub fn class_of(&self, i: usize) -> usize {
        (i - 1) % self.n + 1
    }

    /// Slanted-edge weight for row index `i` (1-based, periodic).
    pub fn x_at(&self, i: usize) -> f64 {
        self.x[(i - 1) % self.n]
    }

    /// Square-row weight for row index `i` (1-based, periodic).
    pub fn y_at(&self, i: usize) -> f64 {
        self.y[(i - 1) % self.n]
    }

    /// True iff row index `i` is a square row under the periodic pattern.
    pub fn row_in_i2(&self, i: usize) -> bool {
        self.i2.contains(&self.class_of(i))
    }
}

/// Natural log of `s_λ(x)` for positive `x` with `len(x) = len(λ)`.
///
/// Uses the bialternant determinant for well-separated points and the
/// branching recursion otherwise.
pub fn schur_eval_log(lambda: &Signature, x: &[f64]) -> Result<f64> {
    let n = lambda.len();
    if x.len() != n {
        return Err(SqhexError::InvalidInput(format!(
            "schur_eval: {} variables for a length-{n} signature",
            x.len()
        )));
    }
    if x.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(SqhexError::InvalidInput("evaluation points must be positive".into()));
    }
    if n == 0 {
        return Ok(0.0); // s_∅ = 1
    }
    let max_x = x.iter().cloned().fold(0.0f64, f64::max);
    let mut min_gap = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            min_gap = min_gap.min((x[i] - x[j]).abs());
        }
    }
    if n == 1 || min_gap > 1e-6 * max_x {
        bialternant_log(lambda, x)
    } else {
        let mut memo = HashMap::new();
        Ok(branching_log(lambda.parts(), x, &mut memo))
    }
}

/// `s_λ(x)` as a positive real. Prefer [`schur_eval_log`] for ratios.
pub fn schur_eval(lambda: &Signature, x: &[f64]) -> Result<f64> {
    schur_eval_log(lambda, x).map(f64::exp)
}

/// log det via LU with partial pivoting, tracking `Σ log|u_ii|` and sign.
/// Returns `(log|det|, sign)`; sign 0 means numerically singular.
fn lu_log_det(mut a: Vec<Vec<f64>>) -> (f64, i8) {
    let n = a.len();
    let mut log_det = 0.0;
    let mut sign = 1i8;
    for k in 0..n {
        let (mut piv, mut best) = (k, a[k][k].abs());
        for i in (k + 1)..n {
            if a[i][k].abs() > best {
                piv = i;
                best = a[i][k].abs();
            }
        }
        if best == 0.0 {
            return (f64::NEG_INFINITY, 0);
        }
        if piv != k {
            a.swap(piv, k);
            sign = -sign;
        }
        let pivot = a[k][k];
        log_det += pivot.abs().ln();
        if pivot < 0.0 {
            sign = -sign;
        }
        for i in (k + 1)..n {
            let f = a[i][k] / pivot;
            for j in k..n {
                a[i][j] -= f * a[k][j];
            }
        }
    }
    (log_det, sign)
}

fn bialternant_log(lambda: &Signature, x: &[f64]) -> Result<f64> {
    let n = lambda.len();
    // Exponents e_j = λ_j + N − 1 − j (0-based j).
    let exps: Vec<i64> = (0..n)
        .map(|j| lambda.part(j) + (n - 1 - j) as i64)
        .collect();
    // Row-scale each row by its largest entry in the log domain so the scaled
    // matrix stays representable even for strongly separated points.
    let mut mat = vec![vec![0.0f64; n]; n];
    let mut log_scale = 0.0;
    for i in 0..n {
        let lx = x[i].ln();
        let row_max = exps
            .iter()
            .map(|&e| e as f64 * lx)
            .fold(f64::NEG_INFINITY, f64::max);
        log_scale += row_max;
        for (j, &e) in exps.iter().enumerate() {
            mat[i][j] = (e as f64 * lx - row_max).exp();
        }
    }
    let (log_num, sign_num) = lu_log_det(mat);
    if sign_num == 0 {
        return Err(SqhexError::Numerical(
            "bialternant determinant is numerically singular".into(),
        ));
    }
    let mut log_den = 0.0;
    let mut sign_den = 1i8;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = x[i] - x[j];
            log_den += d.abs().ln();
            if d < 0.0 {
                sign_den = -sign_den;
            }
        }
    }
    debug_assert_eq!(sign_num, sign_den, "Schur value must be positive");
    Ok(log_scale + log_num - log_den)
}

/// log s_ν(x) via s_ν(x_1,…,x_k) = Σ_{μ≺ν} x_1^{|ν|−|μ|} s_μ(x_2,…,x_k).
fn branching_log(nu: &[i64], x: &[f64], memo: &mut HashMap<(usize, Vec<i64>), f64>) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let key = (x.len(), nu.to_vec());
    if let Some(&v) = memo.get(&key) {
        return v;
    }
    let mut terms: Vec<f64> = Vec::new();
    let lx = x[0].ln();
    let nu_w: i64 = nu.iter().sum();
    for mu in interlacing_inners(nu) {
        let mu_w: i64 = mu.iter().sum();
        let tail = branching_log(&mu, &x[1..], memo);
        terms.push((nu_w - mu_w) as f64 * lx + tail);
    }
    let v = log_sum_exp(&terms);
    memo.insert(key, v);
    v
}

/// All μ of length len(ν)−1 with ν_{i+1} ≤ μ_i ≤ ν_i.
pub(crate) fn interlacing_inners(nu: &[i64]) -> Vec<Vec<i64>> {
    let k = nu.len();
    if k == 0 {
        return vec![];
    }
    if k == 1 {
        // μ is empty.
        return vec![vec![]];
    }
    let mut out = Vec::new();
    let mut cur = vec![0i64; k - 1];
    fn rec(nu: &[i64], i: usize, cur: &mut Vec<i64>, out: &mut Vec<Vec<i64>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        let hi = if i == 0 { nu[0] } else { cur[i - 1].min(nu[i]) };
        let lo = nu[i + 1];
        for v in lo..=hi {
            cur[i] = v;
            rec(nu, i + 1, cur, out);
        }
    }
    rec(nu, 0, &mut cur, &mut out);
    out
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + terms.iter().map(|&t| (t - m).exp()).sum::<f64>().ln()
}

/// Product formula `∏_{i<j} (x_i^m − x_j^m)/(x_i − x_j)` for the staircase
/// signature with spacing `m` in `N` variables. Ties are handled by the
/// limiting factor `m·x^{m−1}`. Returned in the linear domain.
pub fn staircase_schur(m: u32, n_vars: usize, x: &[f64]) -> Result<f64> {
    staircase_schur_log(m, n_vars, x).map(f64::exp)
}

/// Log-domain version of [`staircase_schur`].
pub fn staircase_schur_log(m: u32, n_vars: usize, x: &[f64]) -> Result<f64> {
    if x.len() != n_vars {
        return Err(SqhexError::InvalidInput(format!(
            "staircase_schur: expected {n_vars} variables, got {}",
            x.len()
        )));
    }
    if x.iter().any(|&v| !(v > 0.0)) {
        return Err(SqhexError::InvalidInput("evaluation points must be positive".into()));
    }
    let scale = x.iter().cloned().fold(0.0f64, f64::max);
    let mut log_val = 0.0;
    for i in 0..n_vars {
        for j in (i + 1)..n_vars {
            if (x[i] - x[j]).abs() <= 1e-12 * scale {
                // lim_{b→a} (a^m−b^m)/(a−b) = m a^{m−1}
                log_val += (m as f64).ln() + (m as f64 - 1.0) * x[i].ln();
            } else {
                let num = x[i].powi(m as i32) - x[j].powi(m as i32);
                let den = x[i] - x[j];
                log_val += (num / den).ln();
            }
        }
    }
    Ok(log_val)
}

/// The staircase signature `((m−1)(N−1), (m−1)(N−2), …, 0)`.
pub fn staircase_signature(m: u32, n_vars: usize) -> Signature {
    let parts: Vec<i64> = (0..n_vars)
        .map(|i| (m as i64 - 1) * (n_vars - 1 - i) as i64)
        .collect();
    Signature::new(parts).expect("staircase parts are weakly decreasing")
}

/// `s_λ(1,…,1)` as an exact integer, via `∏_{i<j}(λ_i−λ_j+j−i)/(j−i)`.
pub fn schur_dimension(lambda: &Signature) -> Result<BigInt> {
    if !lambda.is_nonnegative() {
        return Err(SqhexError::InvalidInput(
            "dimension formula requires a nonnegative signature".into(),
        ));
    }
    let n = lambda.len();
    let mut acc = BigRational::one();
    for i in 0..n {
        for j in (i + 1)..n {
            let num = lambda.part(i) - lambda.part(j) + (j - i) as i64;
            let den = (j - i) as i64;
            acc *= BigRational::new(BigInt::from(num), BigInt::from(den));
        }
    }
    if !acc.denom().is_one() {
        return Err(SqhexError::Numerical("dimension product is not integral".into()));
    }
    Ok(acc.to_integer())
}

/// Closed-form partition function of the finite lattice with boundary
/// signature `ω`, row pattern `c` (length `N`, `c_i ∈ {0,1}`), and periodic
/// weights from `model`:
///
/// `Z = [∏_{i: c_i=0} Γ_i] · s_ω(x_1,…,x_N)` with
/// `Γ_i = ∏_{t=i}^{N} (1 + y_i x_t)`.
pub fn partition_function(omega: &Signature, c: &[u8], model: &WeightModel) -> Result<f64> {
    partition_function_log(omega, c, model).map(f64::exp)
}

/// Log-domain version of [`partition_function`].
pub fn partition_function_log(omega: &Signature, c: &[u8], model: &WeightModel) -> Result<f64> {
    let n_rows = c.len();
    if omega.len() != n_rows {
        return Err(SqhexError::InvalidInput(format!(
            "boundary signature length {} does not match row count {n_rows}",
            omega.len()
        )));
    }
    for (idx, &ci) in c.iter().enumerate() {
        let i = idx + 1;
        if ci > 1 {
            return Err(SqhexError::InvalidInput("row pattern entries must be 0 or 1".into()));
        }
        if (ci == 0) != model.row_in_i2(i) {
            return Err(SqhexError::InvalidInput(format!(
                "row pattern at row {i} disagrees with the model's square-row classes"
            )));
        }
    }
    let xs: Vec<f64> = (1..=n_rows).map(|i| model.x_at(i)).collect();
    let mut log_z = schur_eval_log(omega, &xs)?;
    for (idx, &ci) in c.iter().enumerate() {
        let i = idx + 1;
        if ci == 0 {
            let yi = model.y_at(i);
            for t in i..=n_rows {
                log_z += (1.0 + yi * model.x_at(t)).ln();
            }
        }
    }
    Ok(log_z)
}
