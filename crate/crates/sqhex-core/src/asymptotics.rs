//! Limit shape of the uniform (staircase) boundary: the complex transform
//! `F_{κ,m}`, contour-integral moments of the rescaled row measure, the
//! complex-root parametrization of the liquid region with its inverse map,
//! densities, and the complex Burgers equation residual.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Result, SqhexError};
use crate::kasteleyn::torus_curve;
use crate::schur::WeightModel;

const TWO_PI: f64 = std::f64::consts::TAU;
const PI: f64 = std::f64::consts::PI;

/// Staircase spacing of the model, required by every map in this module.
pub(crate) fn staircase_m(model: &WeightModel) -> Result<u32> {
    model.staircase_m.ok_or_else(|| {
        SqhexError::InvalidInput("model has no staircase spacing parameter".into())
    })
}

// ---------------------------------------------------------------------------
// The transform F and its building blocks
// ---------------------------------------------------------------------------

/// `U(z) = (z/n) Σ_{i∈I₂} y_i/(1+y_i z)`.
pub(crate) fn u_sum(z: Complex64, model: &WeightModel) -> Complex64 {
    let mut s = Complex64::default();
    for &i in &model.i2 {
        let y = model.y[i - 1];
        s += y / (1.0 + y * z);
    }
    z * s / model.n as f64
}

/// `V(z) = (z/n) Σ_j 1/(z−x_j)`.
pub(crate) fn v_sum(z: Complex64, model: &WeightModel) -> Complex64 {
    let mut s = Complex64::default();
    for &x in &model.x {
        s += 1.0 / (z - x);
    }
    z * s / model.n as f64
}

/// `W(z) = (z/n) Σ_j (m z^{m−1}/(z^m−x_j^m) − 1/(z−x_j))`.
pub(crate) fn w_sum(z: Complex64, m: u32, model: &WeightModel) -> Complex64 {
    let zm = z.powu(m);
    let zm1 = z.powu(m - 1);
    let mut s = Complex64::default();
    for &x in &model.x {
        s += m as f64 * zm1 / (zm - x.powi(m as i32)) - 1.0 / (z - x);
    }
    z * s / model.n as f64
}

/// `U'(z) = (1/n) Σ_{i∈I₂} y_i/(1+y_i z)²`.
fn u_prime(z: Complex64, model: &WeightModel) -> Complex64 {
    let mut s = Complex64::default();
    for &i in &model.i2 {
        let y = model.y[i - 1];
        s += y / ((1.0 + y * z) * (1.0 + y * z));
    }
    s / model.n as f64
}

/// `V'(z) = −(1/n) Σ_j x_j/(z−x_j)²`.
fn v_prime(z: Complex64, model: &WeightModel) -> Complex64 {
    let mut s = Complex64::default();
    for &x in &model.x {
        s -= x / ((z - x) * (z - x));
    }
    s / model.n as f64
}

/// `W'(z) = (1/n) Σ_j (−m² z^{m−1} x_j^m/(z^m−x_j^m)² + x_j/(z−x_j)²)`.
fn w_prime(z: Complex64, m: u32, model: &WeightModel) -> Complex64 {
    let zm = z.powu(m);
    let zm1 = z.powu(m - 1);
    let mf = m as f64;
    let mut s = Complex64::default();
    for &x in &model.x {
        let xm = x.powi(m as i32);
        let d = zm - xm;
        s += -mf * mf * zm1 * xm / (d * d) + x / ((z - x) * (z - x));
    }
    s / model.n as f64
}

/// Singularities of `F`: the origin, every `x_j·e^{2πik/m}`, and `−1/y_i`.
fn singularities(m: u32, model: &WeightModel) -> Vec<Complex64> {
    let mut out = vec![Complex64::default()];
    for &x in &model.x {
        for k in 0..m {
            let th = TWO_PI * k as f64 / m as f64;
            out.push(Complex64::from_polar(x, th));
        }
    }
    for &i in &model.i2 {
        out.push(Complex64::new(-1.0 / model.y[i - 1], 0.0));
    }
    out
}

/// The transform `F_{κ,m}(z) = κ/(1−κ)·U(z) + V(z) + W(z)/(1−κ)`.
pub fn f_kappa_m(z: Complex64, kappa: f64, model: &WeightModel) -> Result<Complex64> {
    let m = staircase_m(model)?;
    if !(0.0..1.0).contains(&kappa) {
        return Err(SqhexError::InvalidInput("kappa must lie in [0,1)".into()));
    }
    for s in singularities(m, model) {
        if s.norm() > 0.0 && (z - s).norm() < 1e-12 {
            return Err(SqhexError::Numerical(format!("evaluation point {z} is a pole")));
        }
    }
    Ok(kappa / (1.0 - kappa) * u_sum(z, model)
        + v_sum(z, model)
        + w_sum(z, m, model) / (1.0 - kappa))
}

/// `F'` with the same normalization, evaluated analytically.
pub fn f_prime(z: Complex64, kappa: f64, model: &WeightModel) -> Result<Complex64> {
    let m = staircase_m(model)?;
    Ok(kappa / (1.0 - kappa) * u_prime(z, model)
        + v_prime(z, model)
        + w_prime(z, m, model) / (1.0 - kappa))
}

// ---------------------------------------------------------------------------
// Contour quadrature
// ---------------------------------------------------------------------------

/// A circular contour with trapezoid-rule nodes (spectrally accurate for
/// analytic integrands on circles).
#[derive(Debug, Clone)]
pub struct ContourQuadrature {
    /// Circle center.
    pub center: Complex64,
    /// Circle radius.
    pub radius: f64,
    /// Number of nodes; must be even.
    pub nodes: usize,
}

impl ContourQuadrature {
    /// Builds a contour; the node count must be even and positive.
    pub fn new(center: Complex64, radius: f64, nodes: usize) -> Result<Self> {
        if radius <= 0.0 {
            return Err(SqhexError::InvalidInput("contour radius must be positive".into()));
        }
        if nodes == 0 || nodes % 2 != 0 {
            return Err(SqhexError::InvalidInput("node count must be even and positive".into()));
        }
        Ok(ContourQuadrature { center, radius, nodes })
    }

    /// `∮ f(z) dz` over the circle, counterclockwise.
    pub fn integrate(&self, mut f: impl FnMut(Complex64) -> Complex64) -> Complex64 {
        let mut acc = Complex64::default();
        for k in 0..self.nodes {
            let th = TWO_PI * k as f64 / self.nodes as f64;
            let offset = Complex64::from_polar(self.radius, th);
            let z = self.center + offset;
            // dz = i·(z−c) dθ.
            acc += f(z) * Complex64::new(0.0, 1.0) * offset;
        }
        acc * TWO_PI / self.nodes as f64
    }
}

/// One contour per distinct positive weight `x_i`, radius half the distance
/// to the nearest other singularity (including the origin).
fn weight_contours(m: u32, model: &WeightModel, nodes: usize) -> Result<Vec<ContourQuadrature>> {
    let sing = singularities(m, model);
    let mut centers: Vec<f64> = Vec::new();
    for &x in &model.x {
        if !centers.iter().any(|&c| (c - x).abs() < 1e-12) {
            centers.push(x);
        }
    }
    centers
        .into_iter()
        .map(|c| {
            let cz = Complex64::new(c, 0.0);
            let d = sing
                .iter()
                .filter(|s| (*s - cz).norm() > 1e-12)
                .map(|s| (s - cz).norm())
                .fold(f64::INFINITY, f64::min);
            ContourQuadrature::new(cz, d / 2.0, nodes)
        })
        .collect()
}

/// `p`-th moment of the limiting row measure at height `κ`:
/// `Σ_i (1/(2(p+1)πi)) ∮_{x_i} F^{p+1} dz/z`. Fails if doubling the node
/// count moves the answer by more than 1e−8.
pub fn limit_moments(kappa: f64, p: u32, model: &WeightModel) -> Result<f64> {
    let m = staircase_m(model)?;
    let eval = |nodes: usize| -> Result<Complex64> {
        let mut total = Complex64::default();
        for q in weight_contours(m, model, nodes)? {
            total += q.integrate(|z| {
                let f = kappa / (1.0 - kappa) * u_sum(z, model)
                    + v_sum(z, model)
                    + w_sum(z, m, model) / (1.0 - kappa);
                f.powu(p + 1) / z
            });
        }
        Ok(total / (Complex64::new(0.0, 1.0) * 2.0 * (p as f64 + 1.0) * PI))
    };
    let coarse = eval(512)?;
    let fine = eval(1024)?;
    if (fine - coarse).norm() > 1e-8 {
        return Err(SqhexError::Numerical(format!(
            "contour quadrature did not converge: {coarse} vs {fine}"
        )));
    }
    if fine.im.abs() > 1e-9 {
        return Err(SqhexError::Numerical(format!(
            "moment has non-negligible imaginary part {}",
            fine.im
        )));
    }
    Ok(fine.re)
}

// ---------------------------------------------------------------------------
// Root solver and the liquid-region parametrization
// ---------------------------------------------------------------------------

/// A point of the rescaled domain together with the selected complex root of
/// `F_{κ,m}(z) = χ/(1−κ)`.
#[derive(Debug, Clone, Copy)]
pub struct LiquidPoint {
    /// Horizontal coordinate.
    pub chi: f64,
    /// Vertical coordinate.
    pub kappa: f64,
    /// The tracked root; real in the frozen phases.
    pub z: Complex64,
}

impl LiquidPoint {
    /// True outside the liquid region (root collapsed to the real axis).
    pub fn is_frozen(&self) -> bool {
        self.z.im.abs() < 1e-8
    }
}

fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, &c) in a.iter().enumerate() {
        out[i] += c;
    }
    for (i, &c) in b.iter().enumerate() {
        out[i] += c;
    }
    out
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

fn poly_scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|&c| c * s).collect()
}

/// `z^m − x^m`.
fn poly_zm_minus(m: u32, x: f64) -> Vec<f64> {
    let mut p = vec![0.0; m as usize + 1];
    p[0] = -x.powi(m as i32);
    p[m as usize] = 1.0;
    p
}

/// `(z^m − x^m)/(z − x) = Σ_k x^{m−1−k} z^k`.
fn poly_quotient(m: u32, x: f64) -> Vec<f64> {
    (0..m).map(|k| x.powi((m - 1 - k) as i32)).collect()
}

/// All complex roots of a real-coefficient polynomial (ascending
/// coefficients), via the companion matrix.
fn poly_roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    let max = coeffs.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
    if max == 0.0 {
        return Err(SqhexError::Numerical("zero polynomial".into()));
    }
    let mut c = coeffs.to_vec();
    while c.len() > 1 && c.last().unwrap().abs() < 1e-12 * max {
        c.pop();
    }
    let d = c.len() - 1;
    if d == 0 {
        return Ok(vec![]);
    }
    let lead = c[d];
    let mut comp = DMatrix::<f64>::zeros(d, d);
    for i in 1..d {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..d {
        comp[(i, d - 1)] = -c[i] / lead;
    }
    Ok(comp.complex_eigenvalues().iter().cloned().collect())
}

/// Coefficients of the cleared-denominator form of `F_{κ,m}(z) = χ/(1−κ)`,
/// i.e. `κ·z·A_U·P + z·Σ_j (m z^{m−1} − q_j)·P_j·B + (1−κ)·z·Σ_j q_j·P_j·B
/// − n·χ·B·P` with `B = ∏(1+y_i z)`, `P = ∏(z^m − x_j^m)`,
/// `q_j = (z^m−x_j^m)/(z−x_j)`.
fn cleared_polynomial(chi: f64, kappa: f64, m: u32, model: &WeightModel) -> Vec<f64> {
    let n = model.n;
    let b: Vec<f64> = model
        .i2
        .iter()
        .fold(vec![1.0], |acc, &i| poly_mul(&acc, &[1.0, model.y[i - 1]]));
    let p: Vec<f64> = model
        .x
        .iter()
        .fold(vec![1.0], |acc, &x| poly_mul(&acc, &poly_zm_minus(m, x)));
    let p_except: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            model
                .x
                .iter()
                .enumerate()
                .filter(|&(j2, _)| j2 != j)
                .fold(vec![1.0], |acc, (_, &x)| poly_mul(&acc, &poly_zm_minus(m, x)))
        })
        .collect();
    // A_U = Σ_{i∈I₂} y_i ∏_{i'≠i} (1+y_{i'} z).
    let mut a_u = vec![0.0];
    for &i in &model.i2 {
        let rest = model
            .i2
            .iter()
            .filter(|&&i2| i2 != i)
            .fold(vec![1.0], |acc, &i2| poly_mul(&acc, &[1.0, model.y[i2 - 1]]));
        a_u = poly_add(&a_u, &poly_scale(&rest, model.y[i - 1]));
    }

    let mut acc = poly_scale(&poly_mul(&[0.0, 1.0], &poly_mul(&a_u, &p)), kappa);
    let mut mzm1 = vec![0.0; m as usize];
    mzm1[m as usize - 1] = m as f64;
    for (j, pj) in p_except.iter().enumerate() {
        let q = poly_quotient(m, model.x[j]);
        // z·(m z^{m−1} − q_j)·P_j·B
        let slant = poly_mul(
            &[0.0, 1.0],
            &poly_mul(&poly_add(&mzm1, &poly_scale(&q, -1.0)), &poly_mul(pj, &b)),
        );
        acc = poly_add(&acc, &slant);
        // (1−κ)·z·q_j·P_j·B
        let square = poly_mul(&[0.0, 1.0], &poly_mul(&q, &poly_mul(pj, &b)));
        acc = poly_add(&acc, &poly_scale(&square, 1.0 - kappa));
    }
    poly_add(&acc, &poly_scale(&poly_mul(&b, &p), -(n as f64) * chi))
}

/// Newton-polishes a root of `κU + (1−κ)V + W = χ`.
fn polish_root(z0: Complex64, chi: f64, kappa: f64, model: &WeightModel) -> Complex64 {
    let m = match staircase_m(model) {
        Ok(m) => m,
        Err(_) => return z0,
    };
    let mut z = z0;
    for _ in 0..4 {
        let g = kappa * u_sum(z, model)
            + (1.0 - kappa) * v_sum(z, model)
            + w_sum(z, m, model)
            - chi;
        let gp = kappa * u_prime(z, model)
            + (1.0 - kappa) * v_prime(z, model)
            + w_prime(z, m, model);
        if gp.norm() < 1e-300 {
            break;
        }
        let step = g / gp;
        if !step.re.is_finite() || !step.im.is_finite() {
            break;
        }
        z -= step;
    }
    z
}

/// Upper bound `χ < m + (r/n − 1)κ` of the rescaled domain.
fn chi_upper(kappa: f64, m: u32, model: &WeightModel) -> f64 {
    m as f64 + (model.r() as f64 / model.n as f64 - 1.0) * kappa
}

/// Closed-form root at the bottom boundary: `z^m = ζ` with `ζ < 0` solving
/// `(m/n) Σ_j ζ/(ζ − x_j^m) = χ`, picked on the ray `Arg z = π/m`.
fn bottom_root(chi: f64, m: u32, model: &WeightModel) -> Result<Complex64> {
    if !(0.0 < chi && chi < m as f64) {
        return Err(SqhexError::InvalidInput(format!(
            "bottom boundary requires 0 < χ < {m}, got {chi}"
        )));
    }
    let f = |zeta: f64| -> f64 {
        model
            .x
            .iter()
            .map(|&x| m as f64 * zeta / (zeta - x.powi(m as i32)))
            .sum::<f64>()
            / model.n as f64
    };
    // f is monotone on (−∞, 0): 0 at 0⁻ up to m toward −∞; bisect.
    let (mut lo, mut hi) = (-1.0, 0.0);
    while f(lo) < chi {
        lo *= 2.0;
        if lo < -1e18 {
            return Err(SqhexError::Numerical("bottom-root bracket failed".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= chi {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let zeta = 0.5 * (lo + hi);
    Ok(Complex64::from_polar((-zeta).powf(1.0 / m as f64), PI / m as f64))
}

/// Solves `F_{κ,m}(z) = χ/(1−κ)`, selecting the branch by continuity from
/// the analytically known bottom boundary (`Arg z = π/m` at `κ = 0`). The
/// returned root is real when `(χ,κ)` lies in a frozen phase.
pub fn solve_root(chi: f64, kappa: f64, model: &WeightModel) -> Result<LiquidPoint> {
    let m = staircase_m(model)?;
    if !(0.0..1.0).contains(&kappa) || chi <= 0.0 || chi >= chi_upper(kappa, m, model) {
        return Err(SqhexError::InvalidInput(format!(
            "(χ,κ)=({chi},{kappa}) outside the rescaled domain"
        )));
    }
    // Path start: same χ when admissible at κ=0, else mid-bottom.
    let chi0 = if chi < m as f64 { chi.clamp(0.02 * m as f64, 0.98 * m as f64) } else { 0.5 * m as f64 };
    let mut z = bottom_root(chi0, m, model)?;
    let mut s = 0.0_f64;
    let mut step = 0.01 / kappa.max(chi0.max(chi) - chi0.min(chi)).max(0.01);
    let mut halvings = 0;
    while s < 1.0 {
        let s_next = (s + step).min(1.0);
        let chi_s = chi0 + (chi - chi0) * s_next;
        let kappa_s = kappa * s_next;
        let roots = poly_roots(&cleared_polynomial(chi_s, kappa_s, m, model))?;
        let (best, dist) = roots
            .iter()
            .map(|&r| (r, (r - z).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .ok_or_else(|| SqhexError::Numerical("no roots of the cleared polynomial".into()))?;
        let scale = z.norm().max(0.25);
        if dist > 0.35 * scale && step > 1e-6 {
            step *= 0.5;
            halvings += 1;
            if halvings > 60 {
                return Err(SqhexError::Numerical("root tracking failed to converge".into()));
            }
            continue;
        }
        // Keep the upper-half-plane representative of a conjugate pair.
        z = if best.im < 0.0 { best.conj() } else { best };
        s = s_next;
    }
    z = polish_root(z, chi, kappa, model);
    if z.im < 0.0 {
        z = z.conj();
    }
    Ok(LiquidPoint { chi, kappa, z })
}

/// Upper-half branch of the level set `{z : F_{κ,m}(z) = χ/(1−κ)}` traced
/// over `χ ∈ (0, m+(r/n−1)κ)` on a grid clustered toward both endpoints
/// (where the curve approaches 0 and ∞). Returned as `(χ, z)` pairs in
/// ascending χ order; points with `|z|` beyond `cutoff` are dropped.
pub(crate) fn level_set(
    kappa: f64,
    model: &WeightModel,
    points: usize,
    cutoff: f64,
) -> Result<Vec<(f64, Complex64)>> {
    let m = staircase_m(model)?;
    if !(0.0 < kappa && kappa < 1.0) {
        return Err(SqhexError::InvalidInput("level sets need κ in (0,1)".into()));
    }
    let chi_max = chi_upper(kappa, m, model);
    let mut out = Vec::with_capacity(points);
    let mut prev: Option<Complex64> = None;
    for k in 1..points {
        // Chebyshev clustering toward χ = 0 and χ = χ_max.
        let theta = PI * k as f64 / points as f64;
        let chi = chi_max * 0.5 * (1.0 - theta.cos());
        let z = match prev {
            None => solve_root(chi, kappa, model)?.z,
            Some(zp) => {
                let roots = poly_roots(&cleared_polynomial(chi, kappa, m, model))?;
                let best = roots
                    .iter()
                    .cloned()
                    .min_by(|a, b| (a - zp).norm().total_cmp(&(b - zp).norm()))
                    .ok_or_else(|| SqhexError::Numerical("empty root set".into()))?;
                let z = polish_root(best, chi, kappa, model);
                if z.im < 0.0 {
                    z.conj()
                } else {
                    z
                }
            }
        };
        prev = Some(z);
        if z.norm() <= cutoff {
            out.push((chi, z));
        }
    }
    if out.len() < 8 {
        return Err(SqhexError::Numerical("level-set tracing collapsed".into()));
    }
    Ok(out)
}

/// Inverse of the liquid-region parametrization: recovers `(χ, κ)` from the
/// root `z` by conjugate elimination.
pub fn liquid_inverse(z: Complex64, model: &WeightModel) -> Result<(f64, f64)> {
    let m = staircase_m(model)?;
    if z.im <= 0.0 {
        return Err(SqhexError::InvalidInput("inverse map needs Im z > 0".into()));
    }
    let zb = z.conj();
    let (u, ub) = (u_sum(z, model), u_sum(zb, model));
    let (v, vb) = (v_sum(z, model), v_sum(zb, model));
    let (w, wb) = (w_sum(z, m, model), w_sum(zb, m, model));
    let den = u - ub - v + vb;
    if den.norm() < 1e-12 {
        return Err(SqhexError::Numerical("degenerate inverse-map denominator".into()));
    }
    let kappa = (wb - w + vb - v) / den;
    let chi = kappa * (u - v) + v + w;
    if kappa.im.abs() > 1e-9 || chi.im.abs() > 1e-9 {
        return Err(SqhexError::Numerical(format!(
            "inverse map returned non-real coordinates ({chi}, {kappa})"
        )));
    }
    Ok((chi.re, kappa.re))
}

/// Density of the limiting row measure at position `u` and height `κ`:
/// `Arg(z₀(χ,κ))/π` with `χ = u(1−κ)`; identically 0 or 1 in the frozen
/// phases (positive and negative real roots respectively).
pub fn density(u: f64, kappa: f64, model: &WeightModel) -> Result<f64> {
    let m = staircase_m(model)?;
    let chi = u * (1.0 - kappa);
    if chi <= 0.0 || chi >= chi_upper(kappa, m, model) {
        return Ok(0.0);
    }
    let pt = solve_root(chi, kappa, model)?;
    let arg = if pt.is_frozen() {
        if pt.z.re >= 0.0 {
            0.0
        } else {
            PI
        }
    } else {
        pt.z.arg()
    };
    Ok((arg / PI).clamp(0.0, 1.0))
}

/// Cumulative distribution of the limiting row measure at height `κ`,
/// integrated by Simpson's rule over the density.
pub fn density_cdf(v: f64, kappa: f64, model: &WeightModel) -> Result<f64> {
    let m = staircase_m(model)?;
    let u_max = chi_upper(kappa, m, model) / (1.0 - kappa);
    let v = v.clamp(0.0, u_max);
    if v <= 0.0 {
        return Ok(0.0);
    }
    let intervals = 60usize; // even
    let h = v / intervals as f64;
    let mut acc = 0.0;
    for i in 0..=intervals {
        let coeff = if i == 0 || i == intervals {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += coeff * density(i as f64 * h, kappa, model)?;
    }
    Ok((acc * h / 3.0).clamp(0.0, 1.0))
}

/// Central-difference residual of the complex Burgers equation
/// `z_χ − n·(R(z)/(z R'(z)))·z_κ = 0` satisfied by the tracked root (the
/// sign is pinned numerically: the residual decays quadratically in `h`
/// with this orientation and is order one with the opposite one).
pub fn burgers_residual(chi: f64, kappa: f64, model: &WeightModel, h: f64) -> Result<Complex64> {
    if !(h > 0.0) {
        return Err(SqhexError::InvalidInput("step must be positive".into()));
    }
    let z = solve_root(chi, kappa, model)?.z;
    let z_cp = solve_root(chi + h, kappa, model)?.z;
    let z_cm = solve_root(chi - h, kappa, model)?.z;
    let z_kp = solve_root(chi, kappa + h, model)?.z;
    let z_km = solve_root(chi, kappa - h, model)?.z;
    if [z, z_cp, z_cm, z_kp, z_km].iter().any(|w| w.im.abs() < 1e-8) {
        return Err(SqhexError::InvalidInput(
            "difference stencil leaves the liquid region; shrink the step".into(),
        ));
    }
    let z_chi = (z_cp - z_cm) / (2.0 * h);
    let z_kap = (z_kp - z_km) / (2.0 * h);
    let t = torus_curve(model).transport(z);
    Ok(z_chi - model.n as f64 * t * z_kap)
}

/// Stieltjes transform of the limiting row measure, evaluated by the
/// logarithmic contour integral
/// `Σ_i (1/2πi) ∮_{x_i} log(z) · ∂_z(1 − F(z)/x)/(1 − F(z)/x) dz`.
pub fn stieltjes_limit(x: Complex64, kappa: f64, model: &WeightModel) -> Result<Complex64> {
    let m = staircase_m(model)?;
    if x.norm() < 1e-9 {
        return Err(SqhexError::InvalidInput("evaluation point too close to 0".into()));
    }
    let eval = |nodes: usize| -> Result<Complex64> {
        let mut total = Complex64::default();
        for q in weight_contours(m, model, nodes)? {
            total += q.integrate(|z| {
                let f = kappa / (1.0 - kappa) * u_sum(z, model)
                    + v_sum(z, model)
                    + w_sum(z, m, model) / (1.0 - kappa);
                let fp = f_prime(z, kappa, model).expect("contour avoids poles");
                z.ln() * (-fp / x) / (1.0 - f / x)
            });
        }
        Ok(total / (Complex64::new(0.0, 1.0) * TWO_PI))
    };
    let coarse = eval(512)?;
    let fine = eval(1024)?;
    if (fine - coarse).norm() > 1e-7 {
        return Err(SqhexError::Numerical("log-contour quadrature did not converge".into()));
    }
    Ok(fine)
}
