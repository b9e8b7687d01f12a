//! End-to-end acceptance suite: one test per contract criterion, each
//! printing a single PASS/FAIL line with its worst observed residual.
//! Monte Carlo pools at N = 24 are shared across criteria through lazy
//! statics so the expensive samplers run once.

use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;

use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sqhex_core::asymptotics::{
    burgers_residual, limit_moments, liquid_inverse, solve_root,
};
use sqhex_core::fluctuations::{
    gaussianity_test, gff_green_strip, green_moment_cov_with, pullback_moment_cov_with,
};
use sqhex_core::kasteleyn::{determinantal_sample_rng, kasteleyn_matrix, RowSampler};
use sqhex_core::lattice::{
    boundary_signature, build_lattice, enumerate_matchings, height_field, Lattice, LatticeSpec,
};
use sqhex_core::partitions::Signature;
use sqhex_core::piecewise::{
    boundary_from_segments, class_drift, cov_limit_piecewise, moment_series,
    piecewise_liquid_maps, piecewise_moments, r_transform, stieltjes_inverse, ClassMeasure,
    PiecewiseBoundary, PiecewiseModel,
};
use sqhex_core::sampler::{p_statistic, pr_kernel, sample_chain_rng, st_kernel};
use sqhex_core::schur::{partition_function_log, WeightModel};

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {id:02} {name}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {id:02} {name} failed: {detail}");
}

/// Staircase model of order `m` with `n` weight classes and a square row in
/// every period (class 1).
fn staircase_model(m: u32, n: usize) -> WeightModel {
    let x: Vec<f64> = (0..n).map(|i| 1.0 - 0.4 * i as f64 / n.max(1) as f64).collect();
    let mut y = vec![0.0; n];
    y[0] = 0.8;
    WeightModel::new(x, y, BTreeSet::from([1usize]), Some(m)).unwrap()
}

fn staircase_lattice(rows: usize, m: u32, n: usize) -> Lattice {
    build_lattice(&LatticeSpec::staircase(rows, staircase_model(m, n)).unwrap()).unwrap()
}

/// Shared Monte Carlo pool: signatures of the middle white row (level
/// κ = 1/2) of the order-2 staircase at N = 24.
fn mid_row_pool(n_classes: usize) -> &'static Vec<Signature> {
    static POOL1: OnceLock<Vec<Signature>> = OnceLock::new();
    static POOL2: OnceLock<Vec<Signature>> = OnceLock::new();
    let cell = if n_classes == 1 { &POOL1 } else { &POOL2 };
    cell.get_or_init(|| {
        let lat = staircase_lattice(24, 2, n_classes);
        let sampler = RowSampler::new(&lat, &[25]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024 + n_classes as u64);
        (0..40_000)
            .map(|_| sampler.sample(&mut rng).unwrap().remove(0))
            .collect()
    })
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_01_partition_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut worst = 0.0f64;
    let mut count = 0;
    for n in [2usize, 3] {
        let omega: Vec<i64> = if n == 2 { vec![1, 3] } else { vec![1, 2, 4] };
        for bits in 0..(1u32 << n) {
            let c: Vec<u8> = (0..n).map(|i| ((bits >> i) & 1) as u8).collect();
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
            let mut y = vec![0.0; n];
            let mut i2 = BTreeSet::new();
            for (i, &ci) in c.iter().enumerate() {
                if ci == 0 {
                    y[i] = rng.gen_range(0.5..2.0);
                    i2.insert(i + 1);
                }
            }
            let model = WeightModel::new(x, y, i2, None).unwrap();
            let spec = LatticeSpec::new(omega.clone(), c.clone(), model.clone()).unwrap();
            let lat = build_lattice(&spec).unwrap();
            let total: f64 = enumerate_matchings(&lat)
                .unwrap()
                .iter()
                .map(|m| m.log_weight.exp())
                .sum();
            let log_z =
                partition_function_log(&boundary_signature(&omega).unwrap(), &c, &model).unwrap();
            let log_det = kasteleyn_matrix(&lat).unwrap().log_abs_det();
            let z = log_z.exp();
            worst = worst
                .max((total - z).abs() / z)
                .max((log_det.exp() - z).abs() / z);
            count += 1;
        }
    }
    report(
        1,
        "partition-identity",
        count == 12 && worst < 1e-8,
        &format!("{count} lattices, max rel err {worst:.2e}"),
    );
}

#[test]
fn criterion_02_kernel_normalization() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..250 {
        let len = rng.gen_range(1..=4usize);
        let mut parts: Vec<i64> = (0..len).map(|_| rng.gen_range(0..=6i64)).collect();
        parts.sort_unstable_by(|a, b| b.cmp(a));
        let nu = Signature::new(parts).unwrap();
        let suffix: Vec<f64> = (0..len).map(|_| rng.gen_range(0.5..2.0)).collect();
        let pr = pr_kernel(&nu, &suffix).unwrap();
        worst = worst.max((pr.probs.iter().sum::<f64>() - 1.0).abs());
        let st = st_kernel(&nu, rng.gen_range(0.5..2.0), &suffix).unwrap();
        worst = worst.max((st.probs.iter().sum::<f64>() - 1.0).abs());
    }
    report(
        2,
        "kernel-normalization",
        worst < 1e-12,
        &format!("500 randomized kernels, max |Σp − 1| = {worst:.2e}"),
    );
}

#[test]
fn criterion_03_sampler_exactness() {
    let model = WeightModel::new(
        vec![1.2, 0.8, 1.5],
        vec![0.7, 0.0, 0.9],
        BTreeSet::from([1usize, 3]),
        None,
    )
    .unwrap();
    let spec = LatticeSpec::new(vec![1, 2, 4], vec![0, 1, 0], model).unwrap();
    let lat = build_lattice(&spec).unwrap();
    let ms = enumerate_matchings(&lat).unwrap();
    let z: f64 = ms.iter().map(|m| m.log_weight.exp()).sum();
    let exact: HashMap<Vec<usize>, f64> = ms
        .iter()
        .map(|m| (m.edges.clone(), m.log_weight.exp() / z))
        .collect();
    let trials = 100_000usize;
    let mut worst = 0.0f64;
    for (name, seed) in [("kernel", 11u64), ("kasteleyn", 13u64)] {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for _ in 0..trials {
            let rec = if name == "kernel" {
                sample_chain_rng(&lat, &mut rng).unwrap()
            } else {
                determinantal_sample_rng(&lat, &mut rng).unwrap()
            };
            *counts.entry(rec.edges).or_insert(0) += 1;
        }
        let tv: f64 = exact
            .iter()
            .map(|(k, p)| (p - *counts.get(k).unwrap_or(&0) as f64 / trials as f64).abs())
            .sum::<f64>()
            / 2.0;
        worst = worst.max(tv);
    }
    report(
        3,
        "sampler-exactness",
        worst < 0.01,
        &format!("10⁵ samples per sampler, max TV {worst:.4}"),
    );
}

#[test]
fn criterion_04_height_well_defined() {
    // height_field integrates the face increments over the full dual graph
    // and rejects any path-dependent assignment, so success on every sample
    // certifies zero increment sums around all cycles.
    let lat = staircase_lattice(6, 2, 1);
    let mut rng = StdRng::seed_from_u64(3);
    let mut reference: Option<Vec<i64>> = None;
    let mut spread = 0i64;
    for _ in 0..1000 {
        let rec = determinantal_sample_rng(&lat, &mut rng).unwrap();
        let hf = height_field(&lat, &rec.edges).unwrap();
        let boundary: Vec<i64> =
            hf.verts.iter().filter(|v| v.boundary).map(|v| v.h).collect();
        match &reference {
            None => reference = Some(boundary),
            Some(r) => {
                for (a, b) in r.iter().zip(&boundary) {
                    spread = spread.max((a - b).abs());
                }
            }
        }
    }
    report(
        4,
        "height-well-defined",
        spread == 0,
        &format!("10³ matchings, boundary height spread {spread}"),
    );
}

#[test]
fn criterion_05_limit_moments() {
    let mut worst_p0 = 0.0f64;
    let mut worst_k0 = 0.0f64;
    for m in [1u32, 2, 3] {
        let model = staircase_model(m, 1);
        for kappa in [0.2, 0.5, 0.8] {
            worst_p0 = worst_p0.max((limit_moments(kappa, 0, &model).unwrap() - 1.0).abs());
        }
        // Bottom boundary: uniform profile on [0, m].
        for p in 0..=4u32 {
            let target = (m as f64).powi(p as i32) / (p as f64 + 1.0);
            worst_k0 = worst_k0.max((limit_moments(0.0, p, &model).unwrap() - target).abs());
        }
    }

    // Monte Carlo at N = 24, κ = 1/2, staircase order 2, one and two classes.
    // The level measure puts mass 1/t on each rescaled particle position
    // (λ_i + t − i)/t, with t the number of parts at the observed level.
    let t = 12usize;
    let mut worst_mc = 0.0f64;
    for n_classes in [1usize, 2] {
        let model = staircase_model(2, n_classes);
        let pool = mid_row_pool(n_classes);
        for p in 0..=3u32 {
            let mut acc = 0.0;
            for sig in pool.iter().take(20_000) {
                let mut s = 0.0;
                for i in 0..sig.len() {
                    let x = (sig.part(i) + t as i64 - i as i64) as f64 / t as f64;
                    s += x.powi(p as i32);
                }
                acc += s / t as f64;
            }
            let mc = acc / 20_000.0;
            let lim = limit_moments(0.5, p, &model).unwrap();
            worst_mc = worst_mc.max((mc - lim).abs() / lim.abs());
        }
    }
    let pass = worst_p0 < 1e-8 && worst_k0 < 1e-6 && worst_mc < 0.05;
    report(
        5,
        "limit-moments",
        pass,
        &format!(
            "p0 err {worst_p0:.2e}, bottom-boundary err {worst_k0:.2e}, MC rel err {worst_mc:.3}"
        ),
    );
}

#[test]
fn criterion_06_root_structure() {
    // Bottom boundary: the tracked root sits on the ray Arg z = π/m.
    let mut worst_arg = 0.0f64;
    for m in [2u32, 3] {
        let model = staircase_model(m, 1);
        for i in 1..10 {
            let chi = m as f64 * i as f64 / 10.0;
            let z = solve_root(chi, 0.0, &model).unwrap().z;
            worst_arg = worst_arg.max((z.arg() - std::f64::consts::PI / m as f64).abs());
        }
    }
    // Liquid coordinates round trip through the tracked root.
    let model = staircase_model(2, 1);
    let mut worst_rt = 0.0f64;
    let mut pts = 0;
    'outer: for i in 1..=14 {
        for j in 1..=6 {
            let kappa = j as f64 / 7.0;
            let chi = 0.2 + 1.4 * i as f64 / 14.0;
            let root = solve_root(chi, kappa, &model).unwrap();
            if root.is_frozen() {
                continue;
            }
            let (c2, k2) = liquid_inverse(root.z, &model).unwrap();
            worst_rt = worst_rt.max((c2 - chi).abs().max((k2 - kappa).abs()));
            pts += 1;
            if pts == 50 {
                break 'outer;
            }
        }
    }
    let pass = worst_arg < 1e-10 && worst_rt < 1e-8 && pts == 50;
    report(
        6,
        "root-structure",
        pass,
        &format!("arg err {worst_arg:.2e}, round trip err {worst_rt:.2e} at {pts} points"),
    );
}

#[test]
fn criterion_07_burgers_residual() {
    let mut worst = 0.0f64;
    let mut worst_ratio = 0.0f64;
    let mut pts = 0;
    for m in [2u32, 3] {
        let model = staircase_model(m, 1);
        for i in 1..=5 {
            for j in 1..=2 {
                let chi = m as f64 * (0.25 + 0.5 * i as f64 / 6.0);
                let kappa = 0.25 + 0.35 * (j as f64 - 1.0);
                if solve_root(chi, kappa, &model).unwrap().is_frozen() {
                    continue;
                }
                let rh = burgers_residual(chi, kappa, &model, 2e-3).unwrap().norm();
                let rh2 = burgers_residual(chi, kappa, &model, 1e-3).unwrap().norm();
                worst = worst.max(rh2);
                if rh > 1e-9 {
                    worst_ratio = worst_ratio.max(rh2 / rh);
                }
                pts += 1;
            }
        }
    }
    let pass = worst < 1e-4 && worst_ratio < 0.35 && pts >= 20;
    report(
        7,
        "burgers-residual",
        pass,
        &format!(
            "{pts} liquid points, max residual {worst:.2e}, halving ratio {worst_ratio:.3}"
        ),
    );
}

#[test]
fn criterion_08_uniform_clt() {
    let n_rows = 24usize;
    let model = staircase_model(2, 1);
    let pool = mid_row_pool(1);
    // The observable is p₁/N, so its variance carries the CLT scale N².
    let vals: Vec<f64> = pool
        .iter()
        .map(|sig| p_statistic(sig, 1) as f64 / n_rows as f64)
        .collect();
    let s = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / s;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s - 1.0);
    // Standard error of the variance from the fourth central moment.
    let m4 = vals.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / s;
    let se = ((m4 - var * var) / s).sqrt();
    let contour = {
        use sqhex_core::fluctuations::{cov_limit_uniform, CovarianceSpec};
        cov_limit_uniform(&CovarianceSpec::new(1, 0.5, 1, 0.5).unwrap(), &model).unwrap()
    };
    let err = (var - contour).abs();
    let tol = (3.0 * se).max(0.15 * contour.abs());
    let gauss = gaussianity_test(&vals).unwrap();
    let pass = err < tol && gauss.pass;
    report(
        8,
        "uniform-clt",
        pass,
        &format!(
            "MC var {var:.5} vs contour {contour:.5} (err {err:.2e}, tol {tol:.2e}), \
             skew {:.3}, ex-kurt {:.3}",
            gauss.skewness, gauss.excess_kurtosis
        ),
    );
}

#[test]
fn criterion_09_gff_pullback() {
    let model = WeightModel::uniform(2);
    let mut worst = 0.0f64;
    for (j1, j2) in [(0u32, 0u32), (0, 1)] {
        let ra = pullback_moment_cov_with(j1, 0.4, j2, 0.6, &model, 2800, 300.0).unwrap();
        let rb = green_moment_cov_with(j1, 0.4, j2, 0.6, &model, 2800, 300.0).unwrap();
        worst = worst.max((ra - rb).abs() / rb.abs());
    }
    // Dirichlet boundary of the sector Green's function.
    let mut worst_bd = 0.0f64;
    for m in [1u32, 2, 3] {
        let w = Complex64::from_polar(0.8, std::f64::consts::PI / (2 * m) as f64);
        for r in [0.3, 1.0, 2.5] {
            for arg in [0.0, std::f64::consts::PI / m as f64] {
                let z = Complex64::from_polar(r, arg);
                worst_bd = worst_bd.max(gff_green_strip(z, w, m).abs());
            }
        }
    }
    let pass = worst < 1e-3 && worst_bd < 1e-12;
    report(
        9,
        "gff-pullback",
        pass,
        &format!("moment-form rel err {worst:.2e}, boundary value {worst_bd:.2e}"),
    );
}

#[test]
fn criterion_10_piecewise() {
    // R-transform of the point mass is the constant series.
    let mut worst_r = 0.0f64;
    for c in [0.3, 0.7, 1.1] {
        let r = r_transform(&moment_series(&ClassMeasure::point_mass(c), 16)).unwrap();
        worst_r = worst_r.max((r.coeff(0).re - c).abs());
        for k in 1..r.order() {
            worst_r = worst_r.max(r.coeff(k).norm() / c.max(1.0).powi(k as i32 + 2));
        }
    }

    // Trivial packed boundary with one class reduces to the order-1
    // staircase: moments and covariance must agree with that machinery.
    let weights =
        WeightModel::new(vec![1.0], vec![0.7], BTreeSet::from([1usize]), None).unwrap();
    let uniform01 = ClassMeasure::from_intervals(vec![(0.0, 1.0, 1.0)]).unwrap();
    let trivial = PiecewiseModel::with_measures(weights.clone(), vec![uniform01]).unwrap();
    let mut oracle_weights = weights;
    oracle_weights.staircase_m = Some(1);
    let mut worst_m = 0.0f64;
    for kappa in [0.3, 0.6] {
        for p in 0..=4u32 {
            let ours = piecewise_moments(kappa, p, &trivial).unwrap();
            let oracle = limit_moments(kappa, p, &oracle_weights).unwrap();
            worst_m = worst_m.max((ours - oracle).abs() / oracle.abs());
        }
    }
    let mut worst_c = 0.0f64;
    {
        use sqhex_core::fluctuations::{cov_limit_uniform, CovarianceSpec};
        for (l1, k1, l2, k2) in [(1u32, 0.4f64, 1u32, 0.6f64), (2, 0.3, 1, 0.5)] {
            let ours = cov_limit_piecewise(l1, k1, l2, k2, &trivial).unwrap();
            let oracle =
                cov_limit_uniform(&CovarianceSpec::new(l1, k1, l2, k2).unwrap(), &oracle_weights)
                    .unwrap();
            worst_c = worst_c.max((ours - oracle).abs() / oracle.abs());
        }
    }

    // Monte Carlo at N = 24 with two strongly separated classes.
    let n_rows = 24usize;
    let segments = vec![(0.0, 0.5), (1.0, 1.5)];
    let (omega, _) = boundary_from_segments(segments.clone(), n_rows).unwrap();
    let model = WeightModel::new(
        vec![1.0, 1e-3],
        vec![0.7, 0.0],
        BTreeSet::from([1usize]),
        None,
    )
    .unwrap();
    let c: Vec<u8> = (1..=n_rows).map(|i| u8::from(!model.row_in_i2(i))).collect();
    let lat =
        build_lattice(&LatticeSpec::new(omega, c, model.clone()).unwrap()).unwrap();
    let boundary = PiecewiseBoundary::new(segments).unwrap();
    let pw = PiecewiseModel::new(model, &boundary).unwrap();
    let (rows, levels) = ([13usize, 37], [0.25f64, 0.75]);
    let (mc, se) = {
        use sqhex_core::fluctuations::mc_covariance;
        mc_covariance(&lat, rows[0], rows[1], 1, 1, 20_000, 17).unwrap()
    };
    let limit = cov_limit_piecewise(1, levels[0], 1, levels[1], &pw).unwrap();
    let err_mc = (mc - limit).abs();
    let tol_mc = 3.0 * se + 0.2 * limit.abs();

    let pass = worst_r < 1e-12 && worst_m < 1e-5 && worst_c < 1e-6 && err_mc < tol_mc;
    report(
        10,
        "piecewise",
        pass,
        &format!(
            "R err {worst_r:.2e}, moment rel {worst_m:.2e}, cov rel {worst_c:.2e}, \
             MC {mc:.5} vs limit {limit:.5} (err {err_mc:.2e}, tol {tol_mc:.2e})"
        ),
    );
}

#[test]
fn criterion_11_liquid_parametrization() {
    let weights = WeightModel::new(
        vec![1.0, 1e-3],
        vec![0.7, 0.0],
        BTreeSet::from([1usize]),
        None,
    )
    .unwrap();
    let m1 = ClassMeasure::from_intervals(vec![(2.0, 2.5, 1.0), (3.0, 3.5, 1.0)]).unwrap();
    let m2 = ClassMeasure::from_intervals(vec![(0.0, 0.5, 1.0), (1.0, 1.5, 1.0)]).unwrap();
    let model = PiecewiseModel::with_measures(weights, vec![m1, m2]).unwrap();

    // Second-order decay of 1 − κ at large |t|, by Richardson extrapolation.
    let cl: f64 = 1.0 / 0.7;
    let y_term = cl / (1.0 + cl).powi(2);
    let mut worst_coeff = 0.0f64;
    for i in 1..=2usize {
        let m = &model.measures[i - 1];
        let var = m.moment(2) - m.moment(1).powi(2);
        let expect = 1.0 / 12.0 - var - if i == 1 { y_term } else { 0.0 };
        let coeff = |radius: f64| -> f64 {
            let t = Complex64::from_polar(radius, 1.1);
            (piecewise_liquid_maps(t, i, &model).unwrap().1 - 1.0) * radius * radius
        };
        worst_coeff = worst_coeff.max((2.0 * coeff(2e3) - coeff(1e3) - expect).abs());
    }

    // Round trip: t → (χ, κ) → drift roots → t.
    let mut worst_rt = 0.0f64;
    for i in 1..=2usize {
        for &t in &[
            Complex64::new(3.0, 1.5),
            Complex64::new(-2.0, 2.5),
            Complex64::new(4.5, 0.8),
        ] {
            let (chi, kappa) = piecewise_liquid_maps(t, i, &model).unwrap();
            let m = &model.measures[i - 1];
            let z = m.stieltjes(t).unwrap().exp();
            let f = class_drift(z, i, kappa, &model).unwrap();
            let rhs = chi / (1.0 - kappa);
            worst_rt = worst_rt.max((f - rhs).norm() / rhs.abs().max(1.0));
            let back = stieltjes_inverse(m, z.ln()).unwrap();
            worst_rt = worst_rt.max((back - t).norm());
        }
    }
    let pass = worst_coeff < 1e-4 && worst_rt < 1e-6;
    report(
        11,
        "liquid-parametrization",
        pass,
        &format!("|t|⁻² coefficient err {worst_coeff:.2e}, round trip err {worst_rt:.2e}"),
    );
}
