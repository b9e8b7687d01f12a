//! Piecewise boundary conditions: multi-segment bottom boundaries, the
//! per-class decomposition of the boundary partition, free-probability
//! transforms (moment series, R-transform, H-transform) of the class limit
//! measures, and the limit formulas they drive — moments of the level
//! counting measures, the two-level covariance kernels, and the upper-half
//! plane parametrization of the per-class liquid region.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SqhexError};
use crate::partitions::Signature;
use crate::schur::WeightModel;

const TWO_PI: f64 = std::f64::consts::TAU;

/// Default truncation order of the power-series arithmetic.
pub const SERIES_ORDER: usize = 16;

/// A truncated power series `c₀ + c₁ z + … + c_K z^K` with complex
/// coefficients. All arithmetic is exact on the retained coefficients:
/// products, reciprocals, compositions, and inversions never perturb a
/// coefficient below the truncation order.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSeries {
    c: Vec<Complex64>,
}

impl PowerSeries {
    /// Builds a series from ascending coefficients, padded or truncated to
    /// the requested order.
    pub fn new(mut c: Vec<Complex64>, order: usize) -> Self {
        c.resize(order + 1, Complex64::default());
        PowerSeries { c }
    }

    /// Builds a series from real ascending coefficients.
    pub fn from_real(c: &[f64], order: usize) -> Self {
        Self::new(c.iter().map(|&v| Complex64::new(v, 0.0)).collect(), order)
    }

    /// The zero series.
    pub fn zero(order: usize) -> Self {
        Self::new(Vec::new(), order)
    }

    /// The constant series `v`.
    pub fn constant(v: Complex64, order: usize) -> Self {
        Self::new(vec![v], order)
    }

    /// The identity series `z`.
    pub fn identity(order: usize) -> Self {
        Self::new(vec![Complex64::default(), Complex64::new(1.0, 0.0)], order)
    }

    /// Truncation order `K`.
    pub fn order(&self) -> usize {
        self.c.len() - 1
    }

    /// Coefficient of `z^k` (zero beyond the truncation order).
    pub fn coeff(&self, k: usize) -> Complex64 {
        self.c.get(k).copied().unwrap_or_default()
    }

    /// All retained coefficients, ascending.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.c
    }

    /// Term-wise sum.
    pub fn add(&self, other: &PowerSeries) -> PowerSeries {
        let order = self.order().max(other.order());
        PowerSeries::new(
            (0..=order).map(|k| self.coeff(k) + other.coeff(k)).collect(),
            order,
        )
    }

    /// Term-wise difference.
    pub fn sub(&self, other: &PowerSeries) -> PowerSeries {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    /// Multiplies every coefficient by a scalar.
    pub fn scale(&self, v: Complex64) -> PowerSeries {
        PowerSeries::new(self.c.iter().map(|&x| x * v).collect(), self.order())
    }

    /// Truncated Cauchy product.
    pub fn mul(&self, other: &PowerSeries) -> PowerSeries {
        let order = self.order().max(other.order());
        let mut c = vec![Complex64::default(); order + 1];
        for (i, &a) in self.c.iter().enumerate() {
            if a == Complex64::default() {
                continue;
            }
            for (j, &b) in other.c.iter().enumerate() {
                if i + j > order {
                    break;
                }
                c[i + j] += a * b;
            }
        }
        PowerSeries { c }
    }

    /// Term-wise derivative.
    pub fn derivative(&self) -> PowerSeries {
        let order = self.order();
        let mut c: Vec<Complex64> =
            (1..=order).map(|k| self.c[k] * k as f64).collect();
        c.push(Complex64::default());
        PowerSeries::new(c, order)
    }

    /// Term-wise antiderivative with zero constant term. The top coefficient
    /// is dropped by the truncation.
    pub fn integrate(&self) -> PowerSeries {
        let order = self.order();
        let mut c = vec![Complex64::default()];
        for k in 0..order {
            c.push(self.c[k] / (k + 1) as f64);
        }
        PowerSeries::new(c, order)
    }

    /// Composition `self ∘ inner`; the inner series must vanish at 0.
    pub fn compose(&self, inner: &PowerSeries) -> Result<PowerSeries> {
        if inner.coeff(0).norm() > 1e-12 {
            return Err(SqhexError::InvalidInput(
                "series composition requires a vanishing inner constant term".into(),
            ));
        }
        let order = self.order().max(inner.order());
        let mut acc = PowerSeries::constant(self.coeff(self.order()), order);
        for k in (0..self.order()).rev() {
            acc = acc.mul(inner).add(&PowerSeries::constant(self.coeff(k), order));
        }
        Ok(acc)
    }

    /// Multiplicative inverse; requires a nonzero constant term.
    pub fn recip(&self) -> Result<PowerSeries> {
        let c0 = self.coeff(0);
        if c0.norm() < 1e-300 {
            return Err(SqhexError::InvalidInput(
                "series reciprocal requires a nonzero constant term".into(),
            ));
        }
        let order = self.order();
        let mut r = vec![Complex64::default(); order + 1];
        r[0] = Complex64::new(1.0, 0.0) / c0;
        for k in 1..=order {
            let mut s = Complex64::default();
            for j in 1..=k {
                s += self.coeff(j) * r[k - j];
            }
            r[k] = -s / c0;
        }
        Ok(PowerSeries { c: r })
    }

    /// Principal-branch logarithm; requires a nonzero constant term.
    pub fn log(&self) -> Result<PowerSeries> {
        let c0 = self.coeff(0);
        if c0.norm() < 1e-300 {
            return Err(SqhexError::InvalidInput(
                "series logarithm requires a nonzero constant term".into(),
            ));
        }
        let body = self.derivative().mul(&self.recip()?).integrate();
        Ok(body.add(&PowerSeries::constant(c0.ln(), self.order())))
    }

    /// Exponential (of the full series, constant term included).
    pub fn exp(&self) -> PowerSeries {
        let order = self.order();
        let mut tail = self.clone();
        tail.c[0] = Complex64::default();
        let mut acc = PowerSeries::constant(Complex64::new(1.0, 0.0), order);
        let mut term = PowerSeries::constant(Complex64::new(1.0, 0.0), order);
        for k in 1..=order {
            term = term.mul(&tail).scale(Complex64::new(1.0 / k as f64, 0.0));
            acc = acc.add(&term);
        }
        acc.scale(self.coeff(0).exp())
    }

    /// Compositional (Lagrange) inverse: the series `g` with
    /// `self ∘ g = z`. Requires `c₀ = 0` and `c₁ ≠ 0`.
    pub fn invert(&self) -> Result<PowerSeries> {
        if self.coeff(0).norm() > 1e-12 {
            return Err(SqhexError::InvalidInput(
                "series inversion requires a vanishing constant term".into(),
            ));
        }
        let c1 = self.coeff(1);
        if c1.norm() < 1e-300 {
            return Err(SqhexError::InvalidInput(
                "series inversion requires a nonzero linear term".into(),
            ));
        }
        let order = self.order();
        // f(z) = c1 z + tail(z); iterate g ← (z − tail∘g)/c1, gaining one
        // exact order per pass.
        let mut tail = self.clone();
        tail.c[0] = Complex64::default();
        tail.c[1] = Complex64::default();
        let z = PowerSeries::identity(order);
        let mut g = z.scale(Complex64::new(1.0, 0.0) / c1);
        for _ in 0..order {
            g = z.sub(&tail.compose(&g)?).scale(Complex64::new(1.0, 0.0) / c1);
        }
        Ok(g)
    }

    /// Taylor shift: the series of `z ↦ self(z + a)`.
    pub fn taylor_shift(&self, a: Complex64) -> PowerSeries {
        let order = self.order();
        // Horner over the shifted variable: r ← r·(z + a) + c_k.
        let mut r = PowerSeries::zero(order);
        let za = PowerSeries::new(vec![a, Complex64::new(1.0, 0.0)], order);
        for k in (0..=order).rev() {
            r = r.mul(&za).add(&PowerSeries::constant(self.coeff(k), order));
        }
        r
    }

    /// Horner evaluation at a point.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let mut acc = Complex64::default();
        for &c in self.c.iter().rev() {
            acc = acc * z + c;
        }
        acc
    }
}

/// A compactly supported measure on the real line: point masses plus
/// constant-density intervals. The limit of the counting measures of the
/// boundary partitions is of this form, as are the per-class slices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassMeasure {
    /// Point masses `(location, mass)`.
    pub atoms: Vec<(f64, f64)>,
    /// Intervals `(lo, hi, density)` with `lo < hi`, `density > 0`.
    pub intervals: Vec<(f64, f64, f64)>,
}

impl ClassMeasure {
    /// The point mass `δ_c`.
    pub fn point_mass(c: f64) -> Self {
        ClassMeasure { atoms: vec![(c, 1.0)], intervals: Vec::new() }
    }

    /// A purely atomic measure.
    pub fn from_atoms(atoms: Vec<(f64, f64)>) -> Result<Self> {
        if atoms.iter().any(|&(_, m)| m <= 0.0) {
            return Err(SqhexError::InvalidInput("atom masses must be positive".into()));
        }
        Ok(ClassMeasure { atoms, intervals: Vec::new() })
    }

    /// A measure with constant density on each interval.
    pub fn from_intervals(intervals: Vec<(f64, f64, f64)>) -> Result<Self> {
        if intervals.iter().any(|&(lo, hi, d)| lo >= hi || d <= 0.0) {
            return Err(SqhexError::InvalidInput(
                "intervals must satisfy lo < hi with positive density".into(),
            ));
        }
        Ok(ClassMeasure { atoms: Vec::new(), intervals })
    }

    /// Total mass.
    pub fn total_mass(&self) -> f64 {
        let a: f64 = self.atoms.iter().map(|&(_, m)| m).sum();
        let i: f64 = self.intervals.iter().map(|&(lo, hi, d)| d * (hi - lo)).sum();
        a + i
    }

    /// Raw moment `∫ x^k dμ`.
    pub fn moment(&self, k: u32) -> f64 {
        let p = k as i32;
        let a: f64 = self.atoms.iter().map(|&(x, m)| m * x.powi(p)).sum();
        let i: f64 = self
            .intervals
            .iter()
            .map(|&(lo, hi, d)| d * (hi.powi(p + 1) - lo.powi(p + 1)) / (p + 1) as f64)
            .sum();
        a + i
    }

    /// Stieltjes transform `St(t) = ∫ dμ(x)/(t−x)`, in closed form.
    pub fn stieltjes(&self, t: Complex64) -> Result<Complex64> {
        if self.distance_to_support(t) < 1e-9 {
            return Err(SqhexError::InvalidInput(
                "Stieltjes transform evaluated on the support".into(),
            ));
        }
        let mut s = Complex64::default();
        for &(x, m) in &self.atoms {
            s += m / (t - x);
        }
        for &(lo, hi, d) in &self.intervals {
            s += d * ((t - lo) / (t - hi)).ln();
        }
        Ok(s)
    }

    /// Derivative of the Stieltjes transform.
    pub fn stieltjes_prime(&self, t: Complex64) -> Result<Complex64> {
        if self.distance_to_support(t) < 1e-9 {
            return Err(SqhexError::InvalidInput(
                "Stieltjes transform evaluated on the support".into(),
            ));
        }
        let mut s = Complex64::default();
        for &(x, m) in &self.atoms {
            let d = t - x;
            s -= m / (d * d);
        }
        for &(lo, hi, d) in &self.intervals {
            s += d * (1.0 / (t - lo) - 1.0 / (t - hi));
        }
        Ok(s)
    }

    fn distance_to_support(&self, t: Complex64) -> f64 {
        let mut dist = f64::INFINITY;
        for &(x, _) in &self.atoms {
            dist = dist.min((t - x).norm());
        }
        for &(lo, hi, _) in &self.intervals {
            let d = if t.re < lo {
                (t - lo).norm()
            } else if t.re > hi {
                (t - hi).norm()
            } else {
                t.im.abs()
            };
            dist = dist.min(d);
        }
        dist
    }
}

/// Moment generating series `S(z) = M₀ z + M₁ z² + M₂ z³ + …` of a measure.
pub fn moment_series(measure: &ClassMeasure, order: usize) -> PowerSeries {
    let mut c = vec![Complex64::default()];
    for k in 0..order {
        c.push(Complex64::new(measure.moment(k as u32), 0.0));
    }
    PowerSeries::new(c, order)
}

/// Voiculescu R-transform `R(z) = 1/S^{(−1)}(z) − 1/z` of a probability
/// measure, as a truncated series (a genuine power series: the `1/z` poles
/// cancel).
pub fn r_transform(series: &PowerSeries) -> Result<PowerSeries> {
    if series.coeff(0).norm() > 1e-12 || (series.coeff(1) - 1.0).norm() > 1e-9 {
        return Err(SqhexError::InvalidInput(
            "R-transform requires S(z) = z + M₁z² + … of a probability measure".into(),
        ));
    }
    let order = series.order();
    let inv = series.invert()?; // z + a₂z² + …
    // S^{(−1)}(z) = z·g(z) with g(0)=1, so R = (1/g − 1)/z.
    let g = PowerSeries::new(inv.coeffs()[1..].to_vec(), order - 1);
    let h = g.recip()?; // 1 + b₁z + …
    Ok(PowerSeries::new(h.coeffs()[1..].to_vec(), order - 1))
}

/// `ln(ln u / (u−1))`, stable near the removable singularity at `u = 1`.
fn log_log_ratio(u: Complex64) -> Complex64 {
    let e = u - 1.0;
    if e.norm() < 1e-4 {
        // ln(1+e)/e = 1 − e/2 + e²/3 − e³/4 + …
        let mut ratio = Complex64::new(1.0, 0.0);
        let mut p = Complex64::new(1.0, 0.0);
        for k in 2..=8 {
            p *= -e;
            ratio += p / k as f64;
        }
        ratio.ln()
    } else {
        (u.ln() / e).ln()
    }
}

/// H-transform `H(u) = ∫₀^{ln u} R(t) dt + ln(ln u/(u−1))` of a probability
/// measure; `H(1) = 0` by the removable singularity.
pub fn h_transform(measure: &ClassMeasure, u: Complex64) -> Result<Complex64> {
    let r = r_transform(&moment_series(measure, SERIES_ORDER))?;
    Ok(r.integrate().eval(u.ln()) + log_log_ratio(u))
}

/// `z H'(z)` from the R-series: `R(ln z) + 1/ln z − z/(z−1)`, with the
/// `z → 1` cancellation between the last two terms handled by series.
fn z_h_prime(r: &PowerSeries, z: Complex64) -> Complex64 {
    let l = z.ln();
    let e = z - 1.0;
    let reg = if e.norm() < 1e-3 {
        // 1/ln z − z/(z−1) = [(z−1) − z ln z]/[(z−1) ln z]; the numerator is
        // −Σ_{k≥2} (−1)^k e^k/(k(k−1)).
        let mut num = Complex64::default();
        let mut p = e;
        for k in 2..=9 {
            p *= e;
            let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
            num += sign * p / (k * (k - 1)) as f64;
        }
        num / (e * l)
    } else {
        1.0 / l - z / e
    };
    r.eval(l) + reg
}

/// Taylor series of `f(z) = z H'(z)` around `z₀` (away from 0 and 1), to the
/// order of the R-series.
fn z_h_prime_series(r: &PowerSeries, z0: Complex64) -> Result<PowerSeries> {
    if (z0 - 1.0).norm() < 1e-6 || z0.norm() < 1e-6 {
        return Err(SqhexError::InvalidInput(
            "drift series expansion point must avoid 0 and 1".into(),
        ));
    }
    let order = SERIES_ORDER;
    // ln(z0 + dz) = ln z0 + Σ_{k≥1} (−1)^{k+1} dz^k/(k z0^k).
    let l0 = z0.ln();
    let mut lc = vec![l0];
    let mut zp = Complex64::new(1.0, 0.0);
    for k in 1..=order {
        zp *= z0;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        lc.push(Complex64::new(sign, 0.0) / (k as f64 * zp));
    }
    let l = PowerSeries::new(lc, order);
    let lt = l.sub(&PowerSeries::constant(l0, order));
    let r_at = r.taylor_shift(l0).compose(&lt)?;
    let zs = PowerSeries::new(vec![z0, Complex64::new(1.0, 0.0)], order);
    let zm1 = PowerSeries::new(vec![z0 - 1.0, Complex64::new(1.0, 0.0)], order);
    Ok(r_at.add(&l.recip()?).sub(&zs.mul(&zm1.recip()?)))
}

/// A multi-segment bottom boundary: densely packed runs `[a_i, b_i]` of
/// rescaled particle positions with total density one.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PiecewiseBoundary {
    segments: Vec<(f64, f64)>,
}

impl PiecewiseBoundary {
    /// Validates the segment list: `a₁ < b₁ < a₂ < … < b_s` and
    /// `Σ (b_i − a_i) = 1`.
    pub fn new(segments: Vec<(f64, f64)>) -> Result<Self> {
        if segments.is_empty() {
            return Err(SqhexError::InvalidInput("at least one segment required".into()));
        }
        let mut prev = f64::NEG_INFINITY;
        for &(a, b) in &segments {
            if !(prev < a && a < b) {
                return Err(SqhexError::InvalidInput(
                    "segments must be strictly ordered with a_i < b_i".into(),
                ));
            }
            prev = b;
        }
        let total: f64 = segments.iter().map(|&(a, b)| b - a).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(SqhexError::InvalidInput(format!(
                "segment lengths must sum to 1, got {total}"
            )));
        }
        Ok(PiecewiseBoundary { segments })
    }

    /// The validated segments.
    pub fn segments(&self) -> &[(f64, f64)] {
        &self.segments
    }

    /// Realizes the boundary at `rows` bottom vertices: particle positions
    /// `Ω` (runs `A_i..B_i` with `A_i = round(a_i·rows)+1`,
    /// `B_i = round(b_i·rows)`) and the corresponding partition `λ` with
    /// `Ω_k = λ_{rows+1−k} + k`.
    pub fn realize(&self, rows: usize) -> Result<(Vec<i64>, Signature)> {
        let n = rows as i64;
        let mut omega = Vec::with_capacity(rows);
        let mut prev_end = 0i64;
        for &(a, b) in &self.segments {
            let lo = (a * rows as f64).round() as i64 + 1;
            let hi = (b * rows as f64).round() as i64;
            if lo <= prev_end {
                return Err(SqhexError::InvalidInput(
                    "rounded segments overlap at this size".into(),
                ));
            }
            if hi < lo {
                return Err(SqhexError::InvalidInput(
                    "a segment rounds to zero length at this size".into(),
                ));
            }
            omega.extend(lo..=hi);
            prev_end = hi;
        }
        if omega.len() != rows {
            return Err(SqhexError::InvalidInput(format!(
                "rounded segments hold {} positions, expected {rows}",
                omega.len()
            )));
        }
        let mut parts = vec![0i64; rows];
        for (k, &w) in omega.iter().enumerate() {
            let j = rows - 1 - k; // λ_{rows+1−k} with 0-based indexing
            parts[j] = w - (k as i64 + 1);
        }
        if parts.iter().any(|&p| p < 0) || omega.last().copied().unwrap_or(0) > 2 * n {
            // The partition is defined for any increasing Ω; negativity can
            // only come from a malformed first segment.
            if parts.iter().any(|&p| p < 0) {
                return Err(SqhexError::InvalidInput(
                    "segments must start at a nonnegative position".into(),
                ));
            }
        }
        Ok((omega, Signature::new(parts)?))
    }

    /// The limit counting measure of the realized partitions: density one on
    /// each segment.
    pub fn limit_measure(&self) -> ClassMeasure {
        ClassMeasure {
            atoms: Vec::new(),
            intervals: self.segments.iter().map(|&(a, b)| (a, b, 1.0)).collect(),
        }
    }
}

/// Realizes a segment boundary at a finite size; see
/// [`PiecewiseBoundary::realize`].
pub fn boundary_from_segments(
    segments: Vec<(f64, f64)>,
    rows: usize,
) -> Result<(Vec<i64>, Signature)> {
    PiecewiseBoundary::new(segments)?.realize(rows)
}

/// Splits the boundary partition into one partition per weight class. With
/// the weights sorted in strictly decreasing order, positions are grouped
/// into `n` consecutive blocks of equal length and each entry is shifted by
/// the number of later positions of a different class.
pub fn class_partitions(lambda: &Signature, model: &WeightModel) -> Result<Vec<Signature>> {
    let n = model.n;
    let rows = lambda.len();
    if rows % n != 0 {
        return Err(SqhexError::InvalidInput(format!(
            "partition length {rows} must be divisible by the period {n}"
        )));
    }
    for w in model.x.windows(2) {
        if w[0] <= w[1] {
            return Err(SqhexError::InvalidInput(
                "class decomposition requires strictly decreasing distinct weights".into(),
            ));
        }
    }
    let block = rows / n;
    let mut out = Vec::with_capacity(n);
    for i in 1..=n {
        let shift = (rows - i * block) as i64;
        let parts: Vec<i64> = ((i - 1) * block..i * block)
            .map(|j| lambda.part(j) + shift)
            .collect();
        out.push(Signature::new(parts)?);
    }
    Ok(out)
}

/// Limit counting measures of the per-class partitions: the boundary's
/// density-one profile is sliced into `n` equal-mass pieces from the top and
/// each slice is dilated by `n`.
pub fn class_measures(boundary: &PiecewiseBoundary, n: usize) -> Result<Vec<ClassMeasure>> {
    if n == 0 {
        return Err(SqhexError::InvalidInput("period must be positive".into()));
    }
    // Walk the segments from the top, cutting at cumulative mass k/n.
    let mut desc: Vec<(f64, f64)> = boundary.segments().to_vec();
    desc.reverse();
    let mut slices: Vec<Vec<(f64, f64, f64)>> = vec![Vec::new(); n];
    let mut used = 0.0; // mass consumed from the top
    let mut idx = 0;
    let mut hi = desc[0].1;
    for (i, slice) in slices.iter_mut().enumerate() {
        let target = (i + 1) as f64 / n as f64;
        while used < target - 1e-12 {
            let (a, _) = desc[idx];
            let want = target - used;
            let avail = hi - a;
            if avail > want + 1e-12 {
                let lo = hi - want;
                slice.push((n as f64 * lo, n as f64 * hi, 1.0));
                hi = lo;
                used = target;
            } else {
                slice.push((n as f64 * a, n as f64 * hi, 1.0));
                used += avail;
                idx += 1;
                if idx < desc.len() {
                    hi = desc[idx].1;
                } else {
                    break;
                }
            }
        }
        slice.reverse();
    }
    slices.into_iter().map(ClassMeasure::from_intervals).collect()
}

/// Weights plus per-class limit measures: everything the piecewise limit
/// formulas consume.
#[derive(Debug, Clone)]
pub struct PiecewiseModel {
    /// Periodic edge weights; `x` strictly decreasing when the period
    /// exceeds one.
    pub weights: WeightModel,
    /// One limit measure per weight class.
    pub measures: Vec<ClassMeasure>,
    r_series: Vec<PowerSeries>,
}

impl PiecewiseModel {
    /// Builds the model from a segment boundary, deriving the class measures.
    pub fn new(weights: WeightModel, boundary: &PiecewiseBoundary) -> Result<Self> {
        let measures = class_measures(boundary, weights.n)?;
        Self::with_measures(weights, measures)
    }

    /// Builds the model from explicitly given class measures.
    pub fn with_measures(weights: WeightModel, measures: Vec<ClassMeasure>) -> Result<Self> {
        if measures.len() != weights.n {
            return Err(SqhexError::InvalidInput(format!(
                "expected {} class measures, got {}",
                weights.n,
                measures.len()
            )));
        }
        for w in weights.x.windows(2) {
            if w[0] <= w[1] {
                return Err(SqhexError::InvalidInput(
                    "piecewise weights must be strictly decreasing".into(),
                ));
            }
        }
        for m in &measures {
            if (m.total_mass() - 1.0).abs() > 1e-9 {
                return Err(SqhexError::InvalidInput(
                    "class measures must be probability measures".into(),
                ));
            }
        }
        let r_series = measures
            .iter()
            .map(|m| r_transform(&moment_series(m, SERIES_ORDER)))
            .collect::<Result<Vec<_>>>()?;
        Ok(PiecewiseModel { weights, measures, r_series })
    }

    /// R-series of class `j` (1-based).
    pub fn r_series(&self, j: usize) -> Result<&PowerSeries> {
        self.r_series
            .get(j.wrapping_sub(1))
            .ok_or_else(|| SqhexError::InvalidInput(format!("class index {j} out of range")))
    }

    fn check_class(&self, j: usize) -> Result<()> {
        if j == 0 || j > self.weights.n {
            return Err(SqhexError::InvalidInput(format!("class index {j} out of range")));
        }
        Ok(())
    }
}

/// `z A_j(z)`: the class-`j` drift numerator. The square-row term appears
/// only for the leading class.
fn z_a_kernel(z: Complex64, j: usize, kappa: f64, model: &PiecewiseModel) -> Result<Complex64> {
    model.check_class(j)?;
    let n = model.weights.n as f64;
    let mut v = Complex64::new(-kappa * (model.weights.n - j) as f64 / n, 0.0);
    v += z_h_prime(model.r_series(j)?, z) / n;
    if j == 1 {
        let x1 = model.weights.x[0];
        for &l in &model.weights.i2 {
            if l <= model.weights.n {
                let y = model.weights.y[l - 1];
                v += kappa / n * y * x1 * z / (1.0 + y * x1 * z);
            }
        }
    }
    Ok(v)
}

/// Fluctuation kernels of class `j`: the drift `A_j(z)` and the two-point
/// kernel `B_j(z,w) = ∂²/∂z∂w log(1 − (z−1)(w−1)·(zH'(z)−wH'(w))/(z−w))`,
/// both computed by truncated-series arithmetic (no finite differences).
pub fn ab_kernels(
    z: Complex64,
    w: Complex64,
    j: usize,
    kappa: f64,
    model: &PiecewiseModel,
) -> Result<(Complex64, Complex64)> {
    let a = z_a_kernel(z, j, kappa, model)? / z;
    let r = model.r_series(j)?;
    let fz = z_h_prime_series(r, z)?;
    let fw = z_h_prime_series(r, w)?;
    Ok((a, b_kernel_from_series(&fz, &fw, z, w)))
}

/// Mixed second derivative of `log C` with
/// `C = 1 − (z−1)(w−1)·(f(z)−f(w))/(z−w)` at the expansion points of the two
/// Taylor series of `f`. Only the four lowest bivariate coefficients of `C`
/// enter: `∂²(log C)/∂z∂w = C₁₁/C₀₀ − C₁₀C₀₁/C₀₀²`. When `z₀` and `w₀` are
/// close the divided difference is summed from one Taylor series instead of
/// divided, which keeps the result exact through the coincident limit.
fn b_kernel_from_series(
    fz: &PowerSeries,
    fw: &PowerSeries,
    z0: Complex64,
    w0: Complex64,
) -> Complex64 {
    // Bivariate coefficients D[a][b] of the divided difference
    // (f(z)−f(w))/(z−w) in (z−z0)^a (w−w0)^b.
    let (d00, d10, d01, d11);
    let gap = z0 - w0;
    if gap.norm() < 1e-3 {
        // Expand both variables around z0: with f(z) = Σ F_k p^k the divided
        // difference is Σ F_k h_{k−1}(p, q) in the complete homogeneous
        // polynomials; its Taylor data at (0, q₀), q₀ = w₀ − z₀, is a plain
        // convergent sum with no cancellation.
        let q0 = -gap;
        let (mut s00, mut s10, mut s01, mut s11) = (
            Complex64::default(),
            Complex64::default(),
            Complex64::default(),
            Complex64::default(),
        );
        // Shift registers for q₀^{k−1}, q₀^{k−2}, q₀^{k−3}.
        let one = Complex64::new(1.0, 0.0);
        let (mut p1, mut p2, mut p3) = (one, Complex64::default(), Complex64::default());
        for k in 1..=fz.order() {
            let f = fz.coeff(k);
            s00 += f * p1;
            s10 += f * p2;
            s01 += f * (k as f64 - 1.0) * p2;
            s11 += f * (k as f64 - 2.0) * p3;
            p3 = p2;
            p2 = p1;
            p1 *= q0;
        }
        d00 = s00;
        d10 = s10;
        d01 = s01;
        d11 = s11;
    } else {
        let d = gap;
        let (n00, n10, n01) = (fz.coeff(0) - fw.coeff(0), fz.coeff(1), -fw.coeff(1));
        let (e00, e10, e01, e11) = (1.0 / d, -1.0 / (d * d), 1.0 / (d * d), -2.0 / (d * d * d));
        d00 = n00 * e00;
        d10 = n10 * e00 + n00 * e10;
        d01 = n01 * e00 + n00 * e01;
        d11 = n10 * e01 + n01 * e10 + n00 * e11;
    }
    // (z−1)(w−1) has bivariate coefficients (p0q0, q0, p0, 1).
    let (p0, q0) = (z0 - 1.0, w0 - 1.0);
    let c00 = 1.0 - p0 * q0 * d00;
    let c10 = -(p0 * q0 * d10 + q0 * d00);
    let c01 = -(p0 * q0 * d01 + p0 * d00);
    let c11 = -(p0 * q0 * d11 + q0 * d01 + p0 * d10 + d00);
    c11 / c00 - c10 * c01 / (c00 * c00)
}

/// Class-`j` drift `F_{j,κ}(z) = z/(n(z−1)) + z A_j(z)/(1−κ)`; the level
/// counting measures and the liquid parametrization are both expressed
/// through it.
pub fn class_drift(z: Complex64, j: usize, kappa: f64, model: &PiecewiseModel) -> Result<Complex64> {
    if !(0.0 <= kappa && kappa < 1.0) {
        return Err(SqhexError::InvalidInput("level must lie in [0,1)".into()));
    }
    let n = model.weights.n as f64;
    Ok(z / (n * (z - 1.0)) + z_a_kernel(z, j, kappa, model)? / (1.0 - kappa))
}

/// `(1/(2πi)) ∮ g dz` over the circle `|z−c| = r` with `nodes` points.
fn circle_integral<F>(c: Complex64, r: f64, nodes: usize, mut g: F) -> Result<Complex64>
where
    F: FnMut(Complex64) -> Result<Complex64>,
{
    let mut total = Complex64::default();
    for k in 0..nodes {
        let e = Complex64::from_polar(r, TWO_PI * k as f64 / nodes as f64);
        total += g(c + e)? * e;
    }
    Ok(total / nodes as f64)
}

/// Moment `∫ x^p dμ^κ` of the limit counting measure at level `κ`:
/// `(1/(2(p+1)πi)) Σ_j ∮_{|z−1|=ε} F_{j,κ}(z)^{p+1} dz/z`.
pub fn piecewise_moments(kappa: f64, p: u32, model: &PiecewiseModel) -> Result<f64> {
    if !(0.0 < kappa && kappa < 1.0) {
        return Err(SqhexError::InvalidInput("level must lie in (0,1)".into()));
    }
    let one = Complex64::new(1.0, 0.0);
    let eval = |nodes: usize| -> Result<Complex64> {
        let mut total = Complex64::default();
        for j in 1..=model.weights.n {
            total += circle_integral(one, 0.4, nodes, |z| {
                Ok(class_drift(z, j, kappa, model)?.powu(p + 1) / z)
            })?;
        }
        Ok(total / (p as f64 + 1.0))
    };
    let coarse = eval(256)?;
    let fine = eval(512)?;
    if (coarse - fine).norm() > 1e-8 * fine.norm().max(1.0) {
        return Err(SqhexError::Numerical(
            "moment contour quadrature did not converge".into(),
        ));
    }
    if fine.im.abs() > 1e-9 * fine.norm().max(1.0) {
        return Err(SqhexError::Numerical(format!(
            "moment has imaginary part {}",
            fine.im
        )));
    }
    Ok(fine.re)
}

/// Per-class contributions to the two-level covariance
/// `lim cov(p_{l1}^{((1−κ₁)N)}, p_{l2}^{((1−κ₂)N)})/N^{l1+l2}`: for each
/// class `j`, the nested double contour integral of
/// `((1−κ₁)F_{j,κ₁}(z))^{l1} ((1−κ₂)F_{j,κ₂}(w))^{l2} [B_j(z,w)+1/(z−w)²]`.
///
/// The nesting is orientation-sensitive (the orderings differ by the
/// residue at `w = z`); the smaller level goes on the outer contour, which
/// is the ordering that reproduces the Monte Carlo covariance, and the
/// slots are normalized accordingly since the covariance is symmetric.
pub fn cov_limit_piecewise_by_class(
    l1: u32,
    kappa1: f64,
    l2: u32,
    kappa2: f64,
    model: &PiecewiseModel,
) -> Result<Vec<f64>> {
    if kappa1 > kappa2 {
        return cov_limit_piecewise_by_class(l2, kappa2, l1, kappa1, model);
    }
    if l1 == 0 || l2 == 0 {
        return Err(SqhexError::InvalidInput("observable powers must be ≥ 1".into()));
    }
    for k in [kappa1, kappa2] {
        if !(0.0 < k && k < 1.0) {
            return Err(SqhexError::InvalidInput("levels must lie in (0,1)".into()));
        }
    }
    let one = Complex64::new(1.0, 0.0);
    let (rz, rw) = (0.35, 0.15);
    let mut out = Vec::with_capacity(model.weights.n);
    for j in 1..=model.weights.n {
        let r = model.r_series(j)?;
        let eval = |nodes: usize| -> Result<Complex64> {
            // Precompute nodes, drift powers, and Taylor data on both circles.
            let prep = |radius: f64, l: u32, kappa: f64| -> Result<Vec<(Complex64, Complex64, PowerSeries)>> {
                (0..nodes)
                    .map(|k| {
                        let e = Complex64::from_polar(radius, TWO_PI * k as f64 / nodes as f64);
                        let z = one + e;
                        let f = ((1.0 - kappa) * class_drift(z, j, kappa, model)?).powu(l);
                        Ok((z, f * e, z_h_prime_series(r, z)?))
                    })
                    .collect()
            };
            let zs = prep(rz, l1, kappa1)?;
            let ws = prep(rw, l2, kappa2)?;
            let mut total = Complex64::default();
            for (z, fz, sz) in &zs {
                let mut row = Complex64::default();
                for (w, fw, sw) in &ws {
                    let b = b_kernel_from_series(sz, sw, *z, *w);
                    let d = z - w;
                    row += fw * (b + 1.0 / (d * d));
                }
                total += fz * row;
            }
            Ok(total / (nodes as f64 * nodes as f64))
        };
        let coarse = eval(128)?;
        let fine = eval(256)?;
        if (coarse - fine).norm() > 1e-7 * fine.norm().max(1.0) {
            return Err(SqhexError::Numerical(
                "covariance contour quadrature did not converge".into(),
            ));
        }
        if fine.im.abs() > 1e-8 * fine.norm().max(1.0) {
            return Err(SqhexError::Numerical(format!(
                "covariance has imaginary part {}",
                fine.im
            )));
        }
        out.push(fine.re);
    }
    Ok(out)
}

/// Two-level covariance of the row power sums for a piecewise boundary: sum
/// of the per-class contributions.
pub fn cov_limit_piecewise(
    l1: u32,
    kappa1: f64,
    l2: u32,
    kappa2: f64,
    model: &PiecewiseModel,
) -> Result<f64> {
    Ok(cov_limit_piecewise_by_class(l1, kappa1, l2, kappa2, model)?.iter().sum())
}

/// Inverse Stieltjes transform: solves `St(t) = s` by Newton iteration from
/// the large-`t` expansion `t ≈ 1/s + M₁`.
pub fn stieltjes_inverse(measure: &ClassMeasure, s: Complex64) -> Result<Complex64> {
    let mut t = 1.0 / s + measure.moment(1);
    for _ in 0..100 {
        let f = measure.stieltjes(t)? - s;
        let fp = measure.stieltjes_prime(t)?;
        let step = f / fp;
        t -= step;
        if step.norm() < 1e-14 * t.norm().max(1.0) {
            return Ok(t);
        }
    }
    Err(SqhexError::Numerical("Stieltjes inversion did not converge".into()))
}

/// Upper-half-plane parametrization of the class-`i` liquid region: maps
/// `t` with `Im t > 0` to the point `(χ, κ)` whose drift equation
/// `F_{i,κ}(z) = χ/(1−κ)` has the conjugate pair of roots
/// `exp[St(t)], exp[St(t)]̄`.
pub fn piecewise_liquid_maps(
    t: Complex64,
    i: usize,
    model: &PiecewiseModel,
) -> Result<(f64, f64)> {
    model.check_class(i)?;
    if t.im <= 0.0 {
        return Err(SqhexError::InvalidInput(
            "liquid parametrization requires Im t > 0".into(),
        ));
    }
    let n = model.weights.n as f64;
    let st = model.measures[i - 1].stieltjes(t)?;
    let e = st.exp();
    if (e - 1.0).norm() < 1e-12 {
        return Err(SqhexError::Numerical("degenerate parametrization point".into()));
    }
    let q = e / (e - 1.0);
    let tb = t.conj();
    let (chi, kappa) = if i == 1 {
        let mut p = Complex64::default();
        let x1 = model.weights.x[0];
        for &l in &model.weights.i2 {
            if l <= model.weights.n {
                let y = model.weights.y[l - 1];
                p += y * x1 * e / (1.0 + y * x1 * e);
            }
        }
        let (pb, qb) = (p.conj(), q.conj());
        let den = p - pb - q + qb;
        if den.norm() < 1e-14 {
            return Err(SqhexError::Numerical("degenerate parametrization point".into()));
        }
        let chi = (tb * (p - q) - t * (pb - qb) - (n - 1.0) * (tb - t)) / (n * den);
        let kappa = (tb - t) / den;
        (chi, kappa)
    } else {
        let qb = q.conj();
        let den = q - qb;
        if den.norm() < 1e-14 {
            return Err(SqhexError::Numerical("degenerate parametrization point".into()));
        }
        let chi = (tb * q - t * qb + (tb - t) * (n - i as f64)) / (n * den);
        let kappa = (tb - t) / -den;
        (chi, kappa)
    };
    if chi.im.abs() > 1e-12 * chi.norm().max(1.0) || kappa.im.abs() > 1e-12 * kappa.norm().max(1.0)
    {
        return Err(SqhexError::Numerical(
            "parametrization produced a non-real output".into(),
        ));
    }
    Ok((chi.re, kappa.re))
}
