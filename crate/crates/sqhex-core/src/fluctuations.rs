//! Central-limit fluctuations of the row observables for the uniform
//! boundary: the exact contour-integral covariance, Monte Carlo covariance
//! estimation with jackknife errors, the strip Green's function, and the
//! pullback covariances that identify the field with the Gaussian free
//! field.

use nalgebra::Complex;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::asymptotics::{f_kappa_m, level_set, u_sum, w_sum};
use crate::error::{Result, SqhexError};
use crate::kasteleyn::RowSampler;
use crate::lattice::Lattice;
use crate::sampler::p_statistic;
use crate::schur::WeightModel;

const PI: f64 = std::f64::consts::PI;
const TWO_PI: f64 = std::f64::consts::TAU;

/// Parameters of a two-level covariance evaluation.
#[derive(Debug, Clone, Copy)]
pub struct CovarianceSpec {
    /// Power of the first observable.
    pub l1: u32,
    /// Height of the first observable.
    pub kappa1: f64,
    /// Power of the second observable.
    pub l2: u32,
    /// Height of the second observable.
    pub kappa2: f64,
}

impl CovarianceSpec {
    /// Validates powers (≥1) and heights (in (0,1)).
    pub fn new(l1: u32, kappa1: f64, l2: u32, kappa2: f64) -> Result<Self> {
        if l1 == 0 || l2 == 0 {
            return Err(SqhexError::InvalidInput("observable powers must be ≥ 1".into()));
        }
        for k in [kappa1, kappa2] {
            if !(0.0 < k && k < 1.0) {
                return Err(SqhexError::InvalidInput("heights must lie in (0,1)".into()));
            }
        }
        Ok(CovarianceSpec { l1, kappa1, l2, kappa2 })
    }
}

/// Drift term of the fluctuation expansion:
/// `H(z) = (1/n)Σ_j (m z^{m−1}/(z^m−x_j^m) − 1/(z−x_j)) + (κ/n)Σ_{I₂} y_j/(1+y_j z)`.
pub fn h_drift(z: Complex64, kappa: f64, model: &WeightModel) -> Result<Complex64> {
    let m = crate::asymptotics::staircase_m(model)?;
    Ok((w_sum(z, m, model) + kappa * u_sum(z, model)) / z)
}

/// Covariance kernel `Q(z,w) = m² z^{m−1} w^{m−1}/(z^m−w^m)²`.
pub fn q_kernel(z: Complex64, w: Complex64, m: u32) -> Result<Complex64> {
    let d = z.powu(m) - w.powu(m);
    if d.norm() < 1e-14 {
        return Err(SqhexError::InvalidInput("kernel arguments must satisfy z^m ≠ w^m".into()));
    }
    Ok((m as f64).powi(2) * z.powu(m - 1) * w.powu(m - 1) / (d * d))
}

/// Nodes of a circle used by the double contour integral.
fn circle(center: f64, radius: f64, nodes: usize) -> Vec<Complex64> {
    (0..nodes)
        .map(|k| {
            Complex64::new(center, 0.0)
                + Complex64::from_polar(radius, TWO_PI * k as f64 / nodes as f64)
        })
        .collect()
}

/// Contour radii for the distinct positive weights: half the distance to
/// the nearest other singularity of `F`.
fn contour_radii(m: u32, model: &WeightModel) -> Vec<(f64, f64)> {
    let mut sing: Vec<Complex64> = vec![Complex64::default()];
    for &x in &model.x {
        for k in 0..m {
            sing.push(Complex64::from_polar(x, TWO_PI * k as f64 / m as f64));
        }
    }
    for &i in &model.i2 {
        sing.push(Complex64::new(-1.0 / model.y[i - 1], 0.0));
    }
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
            (c, d / 2.0)
        })
        .collect()
}

/// Limit covariance of the row power sums,
/// `lim cov(p_{l1}^{((1−κ1)N)}, p_{l2}^{((1−κ2)N)})/N^{l1+l2}`, as the double
/// contour integral of `F^{l1} F^{l2} Q` over small circles around the
/// positive weights. The inner (`w`) circle is shrunk by 0.9 so the
/// `1/(z−w)²` part of the kernel stays outside.
///
/// The nested integral is orientation-sensitive — the two orderings differ
/// by the residue at `w = z` — and only the ordering with the smaller level
/// on the outer contour reproduces the Monte Carlo covariance. Since the
/// covariance itself is symmetric, the slots are normalized to that
/// ordering first.
pub fn cov_limit_uniform(spec: &CovarianceSpec, model: &WeightModel) -> Result<f64> {
    if spec.kappa1 > spec.kappa2 {
        let swapped = CovarianceSpec::new(spec.l2, spec.kappa2, spec.l1, spec.kappa1)?;
        return cov_limit_uniform(&swapped, model);
    }
    let m = crate::asymptotics::staircase_m(model)?;
    let radii = contour_radii(m, model);
    let eval = |nodes: usize| -> Result<Complex64> {
        let mut total = Complex64::default();
        for &(cz, rz) in &radii {
            let zs = circle(cz, rz, nodes);
            // Precompute the z-factor.
            let fz: Vec<Complex64> = zs
                .iter()
                .map(|&z| f_kappa_m(z, spec.kappa1, model).map(|f| f.powu(spec.l1)))
                .collect::<Result<_>>()?;
            for &(cw, rw) in &radii {
                let ws = circle(cw, 0.9 * rw, nodes);
                let fw: Vec<Complex64> = ws
                    .iter()
                    .map(|&w| f_kappa_m(w, spec.kappa2, model).map(|f| f.powu(spec.l2)))
                    .collect::<Result<_>>()?;
                let mut inner = Complex64::default();
                for (iz, &z) in zs.iter().enumerate() {
                    let dz = Complex64::new(0.0, 1.0) * (z - cz) * TWO_PI / nodes as f64;
                    let mut row = Complex64::default();
                    for (iw, &w) in ws.iter().enumerate() {
                        let dw = Complex64::new(0.0, 1.0) * (w - cw) * TWO_PI / nodes as f64;
                        row += fw[iw] * q_kernel(z, w, m)? * dw;
                    }
                    inner += fz[iz] * row * dz;
                }
                total += inner;
            }
        }
        let denom = Complex::new(0.0, TWO_PI) * Complex::new(0.0, TWO_PI);
        Ok(total / denom
            * (1.0 - spec.kappa1).powi(spec.l1 as i32)
            * (1.0 - spec.kappa2).powi(spec.l2 as i32))
    };
    let coarse = eval(256)?;
    let fine = eval(512)?;
    if (fine - coarse).norm() > 1e-7 {
        return Err(SqhexError::Numerical(format!(
            "covariance quadrature did not converge: {coarse} vs {fine}"
        )));
    }
    if fine.im.abs() > 1e-8 {
        return Err(SqhexError::Numerical(format!(
            "covariance has imaginary part {}",
            fine.im
        )));
    }
    Ok(fine.re)
}

/// Monte Carlo estimate of `cov(p_k@row1, p_l@row2)/N^{k+l}` with a
/// delete-one jackknife standard error. Rows are white (odd) rows of the
/// lattice; `row1 == row2` estimates a single-level covariance.
pub fn mc_covariance(
    lat: &Lattice,
    row1: usize,
    row2: usize,
    k: u32,
    l: u32,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if samples < 8 {
        return Err(SqhexError::InvalidInput("need at least 8 samples".into()));
    }
    let mut rows = vec![row1];
    if row2 != row1 {
        rows.push(row2);
    }
    rows.sort_unstable();
    let sampler = RowSampler::new(lat, &rows)?;
    let idx1 = rows.iter().position(|&r| r == row1).unwrap();
    let idx2 = rows.iter().position(|&r| r == row2).unwrap();
    let n_big = lat.spec.n as f64;
    let scale = n_big.powi((k + l) as i32);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = Vec::with_capacity(samples);
    let mut b = Vec::with_capacity(samples);
    for _ in 0..samples {
        let sigs = sampler.sample(&mut rng)?;
        a.push(p_statistic(&sigs[idx1], k) as f64);
        b.push(p_statistic(&sigs[idx2], l) as f64);
    }
    let s = samples as f64;
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    let sab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    let cov = (sab - sa * sb / s) / (s - 1.0) / scale;
    // Delete-one jackknife over the covariance estimator.
    let mut jk = Vec::with_capacity(samples);
    for i in 0..samples {
        let sa_i = sa - a[i];
        let sb_i = sb - b[i];
        let sab_i = sab - a[i] * b[i];
        let s_i = s - 1.0;
        jk.push((sab_i - sa_i * sb_i / s_i) / (s_i - 1.0) / scale);
    }
    let jk_mean = jk.iter().sum::<f64>() / s;
    let var = (s - 1.0) / s * jk.iter().map(|v| (v - jk_mean).powi(2)).sum::<f64>();
    Ok((cov, var.sqrt()))
}

/// Green's function of the sector `{0 < Arg z < π/m}` with Dirichlet
/// boundary: the half-plane kernel pulled back through `z ↦ z^m`,
/// `−(1/2π)·ln|(z^m−w^m)/(z^m−w̄^m)|`.
pub fn gff_green_strip(z: Complex64, w: Complex64, m: u32) -> f64 {
    let (zm, wm) = (z.powu(m), w.powu(m));
    let num = (zm - wm).norm();
    let den = (zm - wm.conj()).norm();
    if num < 1e-300 || den < 1e-300 {
        return 0.0;
    }
    -(num / den).ln() / TWO_PI
}

/// Closed level contour `Z(κ)`: the traced upper branch followed by its
/// reflection, oriented counterclockwise around the positive real axis.
/// Returns `(χ, z)` waypoints.
fn closed_level_contour(
    kappa: f64,
    model: &WeightModel,
    points: usize,
    cutoff: f64,
) -> Result<Vec<(f64, Complex64)>> {
    let upper = level_set(kappa, model, points, cutoff)?;
    let mut path: Vec<(f64, Complex64)> =
        upper.iter().map(|&(chi, z)| (chi, z.conj())).collect();
    path.extend(upper.iter().rev().map(|&(chi, z)| (chi, z)));
    Ok(path)
}

/// Limit covariance of the moment observables `M_j^κ` of the height
/// fluctuation field:
/// `−1/(4π(j1+1)(j2+1)) ∮∮_{Z(κ1)×Z(κ2)} χ(z)^{j1+1} χ(w)^{j2+1} Q(z,w) dz dw`.
pub fn pullback_moment_cov(
    j1: u32,
    kappa1: f64,
    j2: u32,
    kappa2: f64,
    model: &WeightModel,
) -> Result<f64> {
    pullback_moment_cov_with(j1, kappa1, j2, kappa2, model, 700, 150.0)
}

/// [`pullback_moment_cov`] with explicit contour resolution (points per
/// level curve, χ cutoff for the unbounded curves).
pub fn pullback_moment_cov_with(
    j1: u32,
    kappa1: f64,
    j2: u32,
    kappa2: f64,
    model: &WeightModel,
    points: usize,
    cutoff: f64,
) -> Result<f64> {
    let m = crate::asymptotics::staircase_m(model)?;
    if (kappa1 - kappa2).abs() < 1e-3 {
        return Err(SqhexError::InvalidInput(
            "level contours must be distinct (κ₁ ≠ κ₂)".into(),
        ));
    }
    let cz = closed_level_contour(kappa1, model, points, cutoff)?;
    let cw = closed_level_contour(kappa2, model, points, cutoff)?;
    // Midpoint rule along both polylines.
    let mids = |c: &[(f64, Complex64)], j: u32| -> Vec<(f64, Complex64, Complex64)> {
        c.windows(2)
            .map(|p| {
                let chi_mid = 0.5 * (p[0].0 + p[1].0);
                let z_mid = 0.5 * (p[0].1 + p[1].1);
                let dz = p[1].1 - p[0].1;
                (chi_mid.powi(j as i32 + 1), z_mid, dz)
            })
            .collect()
    };
    let mz = mids(&cz, j1);
    let mw = mids(&cw, j2);
    let mut total = Complex64::default();
    for &(cz1, z, dz) in &mz {
        let mut row = Complex64::default();
        for &(cw1, w, dw) in &mw {
            row += cw1 * q_kernel(z, w, m)? * dw;
        }
        total += cz1 * row * dz;
    }
    let cov = -total / (4.0 * PI * (j1 as f64 + 1.0) * (j2 as f64 + 1.0));
    if cov.im.abs() > 1e-6 * cov.norm().max(1.0) {
        return Err(SqhexError::Numerical(format!(
            "pullback covariance has imaginary part {}",
            cov.im
        )));
    }
    Ok(cov.re)
}

/// The same covariance through the sector Green's function:
/// `∫∫ χ1^{j1} χ2^{j2} G(z(χ1), w(χ2)) dχ1 dχ2` over the two level curves.
pub fn green_moment_cov(
    j1: u32,
    kappa1: f64,
    j2: u32,
    kappa2: f64,
    model: &WeightModel,
) -> Result<f64> {
    green_moment_cov_with(j1, kappa1, j2, kappa2, model, 700, 150.0)
}

/// [`green_moment_cov`] with explicit contour resolution.
pub fn green_moment_cov_with(
    j1: u32,
    kappa1: f64,
    j2: u32,
    kappa2: f64,
    model: &WeightModel,
    points: usize,
    cutoff: f64,
) -> Result<f64> {
    let m = crate::asymptotics::staircase_m(model)?;
    let cz = level_set(kappa1, model, points, cutoff)?;
    let cw = level_set(kappa2, model, points, cutoff)?;
    let mids = |c: &[(f64, Complex64)], j: u32| -> Vec<(f64, Complex64, f64)> {
        c.windows(2)
            .map(|p| {
                let chi_mid = 0.5 * (p[0].0 + p[1].0);
                let z_mid = 0.5 * (p[0].1 + p[1].1);
                (chi_mid.powi(j as i32), z_mid, p[1].0 - p[0].0)
            })
            .collect()
    };
    let mz = mids(&cz, j1);
    let mw = mids(&cw, j2);
    let mut total = 0.0;
    for &(c1, z, d1) in &mz {
        let mut row = 0.0;
        for &(c2, w, d2) in &mw {
            row += c2 * gff_green_strip(z, w, m) * d2;
        }
        total += c1 * row * d1;
    }
    Ok(total)
}

/// Normality diagnostics of a Monte Carlo sample.
#[derive(Debug, Clone, Copy)]
pub struct GaussianityReport {
    /// Sample size.
    pub n: usize,
    /// Sample mean.
    pub mean: f64,
    /// Sample variance (unbiased).
    pub variance: f64,
    /// Standardized skewness.
    pub skewness: f64,
    /// Excess kurtosis.
    pub excess_kurtosis: f64,
    /// Standard error of the skewness under normality, `√(6/n)`.
    pub se_skew: f64,
    /// Standard error of the excess kurtosis under normality, `√(24/n)`.
    pub se_kurt: f64,
    /// True when both statistics are within 5 standard errors, or when the
    /// sample is deterministic (zero variance, test skipped).
    pub pass: bool,
    /// True when the test was skipped for lack of variability.
    pub skipped: bool,
}

/// Tests a sample for compatibility with a Gaussian law through its third
/// and fourth standardized moments.
pub fn gaussianity_test(samples: &[f64]) -> Result<GaussianityReport> {
    let n = samples.len();
    if n < 10_000 {
        return Err(SqhexError::InvalidInput("need at least 10⁴ samples".into()));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let m2 = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
    if m2 < 1e-24 {
        return Ok(GaussianityReport {
            n,
            mean,
            variance: 0.0,
            skewness: 0.0,
            excess_kurtosis: 0.0,
            se_skew: (6.0 / nf).sqrt(),
            se_kurt: (24.0 / nf).sqrt(),
            pass: true,
            skipped: true,
        });
    }
    let m3 = samples.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / nf;
    let m4 = samples.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / nf;
    let skewness = m3 / m2.powf(1.5);
    let excess_kurtosis = m4 / (m2 * m2) - 3.0;
    let se_skew = (6.0 / nf).sqrt();
    let se_kurt = (24.0 / nf).sqrt();
    let pass = skewness.abs() < 5.0 * se_skew && excess_kurtosis.abs() < 5.0 * se_kurt;
    Ok(GaussianityReport {
        n,
        mean,
        variance: m2 * nf / (nf - 1.0),
        skewness,
        excess_kurtosis,
        se_skew,
        se_kurt,
        pass,
        skipped: false,
    })
}
