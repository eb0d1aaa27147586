//! End-to-end acceptance checks, one test per criterion. Each prints a
//! PASS/FAIL line to the real stderr (not captured by the harness) before
//! asserting.

use std::f64::consts::PI;
use std::io::Write;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{Complex, DMatrix, Matrix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use atomchip::chip_model::{builtin_paper_layout, splitting_currents, AtomSpecies, ChipLayout, CurrentConfig, Discretization, Vec3};
use atomchip::constants::{BOLTZMANN, GAUSS, MICRON, MU_0, PLANCK};
use atomchip::disorder::{
    invert_density_boltzmann, invert_density_thomas_fermi, rb87_interaction_constant, remove_harmonic_background,
    wire_roughness, CenterlineDeviation, DensityProfile, RoughnessRun,
};
use atomchip::interferometry::{
    fit_modulated_gaussian, phase_statistics, simulate_shots, synthesize_fringes, uniform_grid, wrap_phase,
    wrapped_normal, Envelope, FringeModel, ShotConfig, DEFAULT_BIN_DEG,
};
use atomchip::magnetostatics::{FieldSolver, DIV_CURL_TOLERANCE};
use atomchip::reproduce::{splitting_operating_point, straight_wire};
use atomchip::rf::{dressed_potential, DressedPotential, Phasor};
use atomchip::thermal::{calibrate, max_current_density, steady_temperature, Materials, ThermalWire, Transient, DEFAULT_HEATED_LENGTH};
use atomchip::trap::{find_trap_minimum, potential_at, MinimizeOptions, PotentialDef};

fn report(n: u8, pass: bool, elapsed: Duration, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "acceptance criterion {n}: {verdict} ({:.2} s) {detail}",
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_1_trap_height() {
    let t0 = Instant::now();
    let (layout, cur, sp) = builtin_paper_layout();
    let wire = layout.wire("z2").unwrap();
    let (x, centerline) = (wire.nodes[1].x, wire.nodes[1].y);
    // Thin wire plus perpendicular bias: field zero at r = μ0 I / (2π B).
    let oracle = MU_0 * cur.dc_current("z2") / (2.0 * PI * cur.bias.norm());

    let seed = Vec3::new(x, 150.0 * MICRON, 0.0);
    let thin = FieldSolver::new(&layout, Discretization::THIN);
    let m_thin = find_trap_minimum(&PotentialDef::new(&thin, &cur, &sp), &seed, &MinimizeOptions::default()).unwrap();
    let h_thin = m_thin.position.y - centerline;

    let finite = FieldSolver::new(&layout, Discretization::default());
    let m_fin = find_trap_minimum(&PotentialDef::new(&finite, &cur, &sp), &seed, &MinimizeOptions::default()).unwrap();
    let h_fin = m_fin.position.y;

    let el = t0.elapsed();
    let ok_thin = (h_thin - oracle).abs() <= 1.0 * MICRON;
    let ok_fin = (140.0 * MICRON..=165.0 * MICRON).contains(&h_fin);
    let ok_time = el < Duration::from_secs(1);
    report(
        1,
        ok_thin && ok_fin && ok_time,
        el,
        format!(
            "thin {:.3} um vs oracle {:.3} um; finite 50 um wire {:.2} um above chip",
            h_thin / MICRON,
            oracle / MICRON,
            h_fin / MICRON
        ),
    );
    assert!(ok_thin, "thin-filament height {h_thin} vs {oracle}");
    assert!(ok_fin, "finite-width height {h_fin}");
    assert!(ok_time, "took {el:?}");
}

/// Central-difference Jacobian J[i][j] = ∂B_i/∂x_j of the wire field.
fn jacobian(s: &FieldSolver, cur: &CurrentConfig, p: &Vec3, h: f64) -> Matrix3<f64> {
    let mut j = Matrix3::zeros();
    for k in 0..3 {
        let mut e = Vec3::zeros();
        e[k] = h;
        let d = (s.wire_field(cur, &(p + e)).unwrap() - s.wire_field(cur, &(p - e)).unwrap()) / (2.0 * h);
        j.set_column(k, &d);
    }
    j
}

#[test]
fn criterion_2_field_solver() {
    let t0 = Instant::now();
    let mut pass = true;

    // Long thin wire against the infinite-wire field.
    let long = ChipLayout::new(vec![straight_wire("w", 0.0, 1.0 * MICRON, 0.5)]).unwrap();
    let s = FieldSolver::new(&long, Discretization::THIN);
    let cur = CurrentConfig::default().with_dc("w", 2.0);
    let mut wire_err = 0.0f64;
    for i in 0..=450 {
        let r = (50.0 + i as f64) * MICRON;
        let b = s.wire_field(&cur, &Vec3::new(0.0, r - 1.5 * MICRON, 0.0)).unwrap().norm();
        wire_err = wire_err.max((b / (MU_0 * 2.0 / (2.0 * PI * r)) - 1.0).abs());
    }
    pass &= wire_err < 1e-3;

    // Superposition and scaling on the full chip at assorted points.
    let (layout, cur, _) = builtin_paper_layout();
    let s = FieldSolver::new(&layout, Discretization::default());
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut lin_err = 0.0f64;
    for _ in 0..200 {
        let p = Vec3::new(
            rng.random_range(-800.0..800.0) * MICRON,
            rng.random_range(20.0..800.0) * MICRON,
            rng.random_range(-800.0..800.0) * MICRON,
        );
        let (i1, i2, k) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-10.0..10.0));
        let a = CurrentConfig::default().with_dc("z1", i1);
        let b = CurrentConfig::default().with_dc("e2", i2);
        let ab = CurrentConfig::default().with_dc("z1", i1).with_dc("e2", i2);
        let bab = s.wire_field(&ab, &p).unwrap();
        let sum = s.wire_field(&a, &p).unwrap() + s.wire_field(&b, &p).unwrap();
        lin_err = lin_err.max((bab - sum).norm() / bab.norm());
        let kab = s.wire_field(&ab.scaled_dc(k), &p).unwrap();
        lin_err = lin_err.max((kab - bab * k).norm() / kab.norm());
    }
    pass &= lin_err < 1e-12;

    // Div and curl on 101 x 101 points (1 mm^2 in the trap plane, 50 um clear
    // of the chip). Open leads carry a curl from their ends, so the circuits
    // are closed by off-chip returns for the curl-free check.
    let closed = FieldSolver::new(&layout.closed_circuits(5e-3), Discretization::default());
    let h = 0.5 * MICRON;
    let (mut div, mut curl) = (0.0f64, 0.0f64);
    let mut end_err = 0.0f64;
    for i in 0..101 {
        for k in 0..101 {
            let p = Vec3::new((-542.5 + 10.0 * i as f64) * MICRON, (50.0 + 10.0 * k as f64) * MICRON, 100.0 * MICRON);
            let j = jacobian(&closed, &cur, &p, h);
            div = div.max(j.trace().abs() / j.norm());
            curl = curl.max((j - j.transpose()).norm() / 2f64.sqrt() / j.norm());
            if i % 20 == 0 && k % 20 == 0 {
                // Open chip: curl is μ0 I/4π Σ [(r−b)/|r−b|³ − (r−a)/|r−a|³].
                let jo = (jacobian(&s, &cur, &p, h) * 4.0 - jacobian(&s, &cur, &p, 2.0 * h)) / 3.0;
                let c = Vec3::new(jo[(2, 1)] - jo[(1, 2)], jo[(0, 2)] - jo[(2, 0)], jo[(1, 0)] - jo[(0, 1)]);
                let mut expect = Vec3::zeros();
                for w in &layout.wires {
                    let (ra, rb) = (p - w.nodes[0], p - w.nodes[w.nodes.len() - 1]);
                    expect += (rb / rb.norm().powi(3) - ra / ra.norm().powi(3)) * (MU_0 * cur.dc_current(&w.channel) / (4.0 * PI));
                }
                end_err = end_err.max((c - expect).norm() / expect.norm());
            }
        }
    }
    pass &= div < DIV_CURL_TOLERANCE && curl < DIV_CURL_TOLERANCE && end_err < 1e-3;

    let el = t0.elapsed();
    pass &= el < Duration::from_secs(10);
    report(
        2,
        pass,
        el,
        format!("wire {wire_err:.2e}, linearity {lin_err:.2e}, div {div:.2e}, curl {curl:.2e}, open-lead curl {end_err:.2e}"),
    );
    assert!(wire_err < 1e-3 && lin_err < 1e-12, "wire {wire_err}, linearity {lin_err}");
    assert!(div < DIV_CURL_TOLERANCE && curl < DIV_CURL_TOLERANCE, "div {div}, curl {curl}");
    assert!(end_err < 1e-3, "open-lead curl {end_err}");
    assert!(el < Duration::from_secs(10), "took {el:?}");
}

type C = Complex<f64>;

/// Rotating-frame F = 2 Hamiltonian δ F_z + (Ω/2)(e^{iθ} F_+ + h.c.) in
/// h·kHz, top eigenvalue by Hermitian diagonalization (real 10x10 embedding).
fn f2_top_level(delta: f64, omega: f64, theta: f64) -> f64 {
    let f = 2.0f64;
    let m: Vec<f64> = (0..5).map(|k| f - k as f64).collect();
    let mut h = DMatrix::<C>::zeros(5, 5);
    for k in 0..5 {
        h[(k, k)] = C::new(delta * m[k], 0.0);
    }
    for k in 1..5 {
        // ⟨m+1|F_+|m⟩ = √(F(F+1) − m(m+1)); row k−1 has m[k]+1.
        let c = (f * (f + 1.0) - m[k] * (m[k] + 1.0)).sqrt();
        let v = C::from_polar(0.5 * omega * c, theta);
        h[(k - 1, k)] = v;
        h[(k, k - 1)] = v.conj();
    }
    let real = DMatrix::<f64>::from_fn(10, 10, |i, j| {
        let z = h[(i % 5, j % 5)];
        match (i < 5, j < 5) {
            (true, true) | (false, false) => z.re,
            (true, false) => -z.im,
            (false, true) => z.im,
        }
    });
    let ev = real.symmetric_eigen().eigenvalues;
    ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn criterion_3_dressed_levels() {
    let t0 = Instant::now();
    let sp = AtomSpecies::rb87();
    let gmu = sp.zeeman_slope / f64::from(sp.m_f);
    let hk = PLANCK * 1e3;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        // Random (δ, Ω) drawn through a random static field direction and rf
        // polarization: δ from the field magnitude, Ω from the σ component in
        // a transverse basis built here.
        let dir = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
        let b = dir * rng.random_range(0.05..5.0) * GAUSS;
        let rf = Phasor::from_fn(|_, _| C::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * 0.3 * GAUSS);
        let f = gmu * b.norm() / PLANCK + rng.random_range(-2e6..2e6);
        let delta = gmu * b.norm() - PLANCK * f;
        let e1 = dir.cross(&Vec3::new(0.3, -0.7, 0.64)).normalize();
        let e2 = dir.cross(&e1);
        let p1: C = (0..3).map(|k| rf[k] * e1[k]).sum();
        let p2: C = (0..3).map(|k| rf[k] * e2[k]).sum();
        let sigma = p1 - C::new(0.0, 1.0) * p2;
        let omega = 0.5 * gmu * sigma.norm();
        let oracle = f2_top_level(delta / hk, omega / hk, sigma.arg()) * hk;
        let got = dressed_potential(&b, &rf, f, &sp, 2).unwrap();
        worst = worst.max((got / oracle - 1.0).abs());
    }
    let el = t0.elapsed();
    let pass = worst < 1e-9 && el < Duration::from_secs(5);
    report(3, pass, el, format!("max relative error {worst:.2e} over 1000 draws"));
    assert!(worst < 1e-9, "max relative error {worst}");
    assert!(el < Duration::from_secs(5), "took {el:?}");
}

#[test]
fn criterion_4_double_well() {
    let t0 = Instant::now();
    let op = splitting_operating_point().unwrap().expect("operating point in the search box");
    // Re-derive the wells from the dressed potential on a fine line through
    // the reported minima, with a local search written here.
    let (layout, _, sp) = builtin_paper_layout();
    let solver = FieldSolver::new(&layout, Discretization::default());
    let cur = splitting_currents(op.amplitude, op.rf_frequency);
    let pot = DressedPotential::new(&solver, &cur, &sp).unwrap();
    let axis = op.report.slice_axis;
    let (a, b) = (op.report.minima[0], op.report.minima[1]);
    let mid = 0.5 * (a + b);
    // Slice center: static minimum, recovered from the report geometry.
    let static_pot = PotentialDef::new(&solver, &cur, &sp);
    let center = find_trap_minimum(&static_pot, &Vec3::new(0.0, 300.0 * MICRON, 0.0), &MinimizeOptions::default())
        .unwrap()
        .position;
    let e = |s: f64| potential_at(&pot, &(center + axis * s)).unwrap();
    let golden = |mut lo: f64, mut hi: f64, sign: f64| {
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..80 {
            let (x1, x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
            if sign * e(x1) < sign * e(x2) {
                hi = x2;
            } else {
                lo = x1;
            }
        }
        0.5 * (lo + hi)
    };
    let w = 0.5 * (b - a);
    let left = golden(a - 0.5 * w, a + 0.5 * w, 1.0);
    let right = golden(b - 0.5 * w, b + 0.5 * w, 1.0);
    let top = golden(left, right, -1.0);
    let sep = right - left;
    let barrier = (e(top) - e(left).max(e(right))) / PLANCK;
    let el = t0.elapsed();
    let ok_sep = (sep / (4.0 * MICRON) - 1.0).abs() <= 0.1;
    let ok_bar = (5e3..=20e3).contains(&barrier);
    let ok_agree = (sep - op.report.separation).abs() < 0.02 * MICRON && (barrier / op.report.barrier_hz() - 1.0).abs() < 0.01;
    let ok_time = el < Duration::from_secs(120);
    report(
        4,
        ok_sep && ok_bar && ok_agree && ok_time,
        el,
        format!(
            "rf {:.3} kHz ({:.1} kHz detuning), {:.1} mA: separation {:.3} um, barrier {:.2} kHz, mid-offset {:.3} um",
            op.rf_frequency / 1e3,
            op.detuning / 1e3,
            op.amplitude * 1e3,
            sep / MICRON,
            barrier / 1e3,
            mid / MICRON
        ),
    );
    assert!(ok_sep, "separation {sep}");
    assert!(ok_bar, "barrier {barrier} Hz");
    assert!(ok_agree, "scan report {:?} vs independent {sep} m, {barrier} Hz", op.report);
    assert!(ok_time, "took {el:?}");
}

#[test]
fn criterion_5_roughness() {
    let t0 = Instant::now();
    let width = 50.0 * MICRON;
    let layout = ChipLayout::new(vec![straight_wire("w", 0.0, width, 5e-3)]).unwrap();
    let i_wire = 2.0;
    let cur = CurrentConfig::default().with_dc("w", i_wire);
    let sp = AtomSpecies::rb87();
    let dev = CenterlineDeviation::Triangle {
        amplitude: 20e-9,
        ramp: 200.0 * MICRON,
    };
    let height = 150.0 * MICRON;
    let z: Vec<f64> = (0..=150).map(|i| (i as f64 - 75.0) * 20.0 * MICRON).collect();
    let mut run = RoughnessRun {
        wire: "w".into(),
        deviation: dev.clone(),
        resample_step: 5.0 * MICRON,
        height,
        z: z.clone(),
        discretization: Discretization::default(),
    };
    let p1 = wire_roughness(&layout, &cur, &sp, &run).unwrap();
    run.deviation = dev.scaled(2.0);
    let p2 = wire_roughness(&layout, &cur, &sp, &run).unwrap();
    let ratio = p1.max_abs_ratio();
    let lin = p2.max_abs_delta_bz() / p1.max_abs_delta_bz() / 2.0 - 1.0;

    // First-order oracle: the transverse current I·f'(z') of a ribbon of
    // width w at depth d below the line gives
    // δB_z(z) = μ0 I d/(4π w) ∫dx ∫dz' f'(z') / (d² + x² + (z − z')²)^{3/2},
    // against B_main = μ0 I/(π w)·atan(w/2d).
    let d = height + 1.5 * MICRON;
    let slope = |zp: f64| {
        let e = 0.1 * MICRON;
        (dev.value(zp + e) - dev.value(zp - e)) / (2.0 * e)
    };
    let b_main = MU_0 * i_wire / (PI * width) * (width / (2.0 * d)).atan();
    let nx = 20;
    let dz = 1.0 * MICRON;
    let mut oracle_max = 0.0f64;
    for &zc in z.iter().filter(|z| z.abs() <= 1000.0 * MICRON) {
        let mut acc = 0.0;
        for ix in 0..nx {
            let x = (ix as f64 + 0.5) / nx as f64 * width - 0.5 * width;
            let mut zp = zc - 2000.0 * MICRON;
            while zp < zc + 2000.0 * MICRON {
                let zm = zp + 0.5 * dz;
                acc += slope(zm) / (d * d + x * x + (zc - zm).powi(2)).powf(1.5) * dz;
                zp += dz;
            }
        }
        let dbz = MU_0 * i_wire * d / (4.0 * PI * width) * acc * (width / nx as f64);
        oracle_max = oracle_max.max((dbz / b_main).abs());
    }
    let el = t0.elapsed();
    let ok_window = (1e-4 / 3.0..=3e-4).contains(&ratio);
    let ok_lin = lin.abs() < 0.02;
    let ok_oracle = (ratio / oracle_max - 1.0).abs() < 0.05;
    let ok_time = el < Duration::from_secs(30);
    report(
        5,
        ok_window && ok_lin && ok_oracle && ok_time,
        el,
        format!("max |dBz/B_main| {ratio:.3e} (first-order oracle {oracle_max:.3e}), doubling error {:.1e}", lin.abs()),
    );
    assert!(ok_window, "ratio {ratio}");
    assert!(ok_lin, "linearity {lin}");
    assert!(ok_oracle, "ratio {ratio} vs oracle {oracle_max}");
    assert!(ok_time, "took {el:?}");
}

#[test]
fn criterion_6_inversions() {
    let t0 = Instant::now();
    let sp = AtomSpecies::rb87();
    let m = sp.mass;
    let wz = 2.0 * PI * 6.5;
    let z: Vec<f64> = (0..1601).map(|i| (i as f64 - 800.0) * 0.75 * MICRON).collect();
    let v: Vec<f64> = z
        .iter()
        .map(|z| {
            0.5 * m * wz * wz * (z - 20.0 * MICRON).powi(2)
                + PLANCK * 3e3 * (2.0 * PI * z / (90.0 * MICRON)).cos() * (-(z / (300.0 * MICRON)).powi(2)).exp()
        })
        .collect();

    // Boltzmann: n = n0 exp(−V/kT); recovered δV should equal V − V(peak).
    let temp = 1.9e-6;
    let n: Vec<f64> = v.iter().map(|u| 3e7 * (-u / (BOLTZMANN * temp)).exp()).collect();
    let peak = (0..n.len()).max_by(|&a, &b| n[a].total_cmp(&n[b])).unwrap();
    let inv = invert_density_boltzmann(&DensityProfile::new(z.clone(), n.clone()).unwrap(), temp, &sp).unwrap();
    let truth: Vec<f64> = inv.indices.iter().map(|&i| v[i] - v[peak]).collect();
    let scale = truth.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let b_err = inv.delta_v.iter().zip(&truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
    let in_support = inv.indices.iter().all(|&i| n[i] > 0.05 * n[peak]);

    // Thomas–Fermi: n = π(μ − V)²/(g m ω⊥²) where V < μ.
    let g = rb87_interaction_constant();
    let wp = 2.0 * PI * 2e3;
    let vmin = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let vt: Vec<f64> = v.iter().map(|u| u - vmin).collect();
    let mu = PLANCK * 4e3;
    let ntf: Vec<f64> = vt.iter().map(|u| if *u < mu { PI * (mu - u).powi(2) / (g * m * wp * wp) } else { 0.0 }).collect();
    let npk = ntf.iter().cloned().fold(0.0, f64::max);
    let tf = invert_density_thomas_fermi(&DensityProfile::new(z.clone(), ntf.clone()).unwrap(), mu, wp, g, &sp).unwrap();
    let mut tf_err = 0.0f64;
    for i in 0..z.len() {
        assert_eq!(tf.supported[i], ntf[i] > 0.05 * npk);
        if tf.supported[i] {
            tf_err = tf_err.max((tf.v[i] - vt[i]).abs() / mu);
        }
    }

    // Harmonic background: pure quadratic plus offset and tilt.
    let vh: Vec<f64> = z.iter().map(|z| 0.5 * m * wz * wz * (z + 35.0 * MICRON).powi(2) + PLANCK * 1e3 + 1e-30 * z / MICRON).collect();
    let fit = remove_harmonic_background(&z, &vh, m).unwrap();
    let wz_err = (fit.omega_z / wz - 1.0).abs();

    let el = t0.elapsed();
    let pass = b_err < 0.01 && in_support && tf_err < 0.01 && wz_err < 1e-3 && el < Duration::from_secs(5);
    report(
        6,
        pass,
        el,
        format!(
            "Boltzmann sup error {b_err:.1e}, Thomas-Fermi {tf_err:.1e}, omega_z/2pi {:.5} Hz",
            fit.omega_z / (2.0 * PI)
        ),
    );
    assert!(b_err < 0.01 && in_support, "Boltzmann {b_err}");
    assert!(tf_err < 0.01, "Thomas-Fermi {tf_err}");
    assert!(wz_err < 1e-3, "omega_z {}", fit.omega_z);
    assert!(el < Duration::from_secs(5), "took {el:?}");
}

#[test]
fn criterion_7_thermal() {
    let t0 = Instant::now();
    let narrow = ThermalWire::new(50.0 * MICRON, 3.0 * MICRON).unwrap();
    let wide = ThermalWire::new(100.0 * MICRON, 3.0 * MICRON).unwrap();
    let net = calibrate(Materials::default(), &narrow, 8.8e9, 150.0, DEFAULT_HEATED_LENGTH).unwrap();
    // Calibration reproduces its own point.
    let t_cal = steady_temperature(&narrow, 8.8e9 * narrow.area(), &net).unwrap();
    let jmax = max_current_density(&wide, &net, 150.0).unwrap();
    let t_at_jmax = steady_temperature(&wide, jmax.current_density * wide.area(), &net).unwrap();

    let i0 = 1e-3 * 8.8e9 * narrow.area();
    let t1 = steady_temperature(&narrow, i0, &net).unwrap();
    let t2 = steady_temperature(&narrow, 2.0 * i0, &net).unwrap();
    let quad = (t2 / t1 / 4.0 - 1.0).abs();

    let tr = Transient::new(&narrow, 8.8e9 * narrow.area(), &net).unwrap();
    let el = t0.elapsed();
    let ok_cal = (t_cal - 150.0).abs() < 1e-6 && (t_at_jmax - 150.0).abs() < 1e-3;
    let ok_j = (jmax.current_density / 6.1e9 - 1.0).abs() <= 0.25;
    let ok_quad = quad < 0.01;
    let ok_tau = (0.1e-6..=100e-6).contains(&tr.tau_fast);
    let ok_time = el < Duration::from_secs(5);
    report(
        7,
        ok_cal && ok_j && ok_quad && ok_tau && ok_time,
        el,
        format!(
            "J_max(100 um) {:.3e} A/m^2 vs 6.1e9, I^2 deviation {quad:.1e}, tau_fast {:.3} us",
            jmax.current_density,
            tr.tau_fast * 1e6
        ),
    );
    assert!(ok_cal, "calibration {t_cal} K, at J_max {t_at_jmax} K");
    assert!(ok_j, "J_max {}", jmax.current_density);
    assert!(ok_quad, "I^2 scaling {quad}");
    assert!(ok_tau, "tau_fast {}", tr.tau_fast);
    assert!(ok_time, "took {el:?}");
}

#[test]
fn criterion_8_phase_extraction() {
    let t0 = Instant::now();
    let sp = AtomSpecies::rb87();

    // Noiseless recovery.
    let env = Envelope {
        amplitude: 2.5,
        center: 7.0 * MICRON,
        width: 38.0 * MICRON,
    };
    let truth = FringeModel::from_physical(4.0 * MICRON, 14e-3, sp.mass, env, 0.55, 1.1).unwrap();
    let x = uniform_grid(-160.0 * MICRON, 160.0 * MICRON, 2.0 * MICRON);
    let n = synthesize_fringes(&truth, &x, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let fit = fit_modulated_gaussian(&x, &n).unwrap();
    let expected_period = PLANCK * 14e-3 / (sp.mass * 4.0 * MICRON);
    let rel = [
        fit.envelope.amplitude / 2.5 - 1.0,
        (fit.envelope.center - 7.0 * MICRON) / (38.0 * MICRON),
        fit.envelope.width / (38.0 * MICRON) - 1.0,
        fit.contrast / 0.55 - 1.0,
        fit.period / expected_period - 1.0,
        wrap_phase(fit.phase - 1.1) / (2.0 * PI),
    ];
    let noiseless = rel.iter().fold(0.0f64, |a, b| a.max(b.abs()));

    // 200 seeded shots at 5 % noise.
    let well = atomchip::rf::DoubleWellReport {
        n_minima: 2,
        minima: vec![-2.0 * MICRON, 2.0 * MICRON],
        separation: 4.0 * MICRON,
        barrier: PLANCK * 10e3,
        asymmetry: 0.0,
        slice_axis: Vec3::x(),
    };
    let mut cfg = ShotConfig::standard(sp.mass);
    cfg.noise = 0.05;
    cfg.mean_phase = 0.7;
    let shots = simulate_shots(&well, &cfg, 200, 1).unwrap();
    let mut err: Vec<f64> = shots
        .iter()
        .map(|s| wrap_phase(s.fit.as_ref().expect("fit converges").phase - s.injected_phase).abs().to_degrees())
        .collect();
    err.sort_by(f64::total_cmp);
    let p95 = err[(0.95 * err.len() as f64).ceil() as usize - 1];

    // 103 wrapped-normal draws; circular std computed here.
    let ph = wrapped_normal(103, 0.0, 23f64.to_radians(), &mut ChaCha8Rng::seed_from_u64(1));
    let (c, s) = ph.iter().fold((0.0, 0.0), |(c, s), p| (c + p.cos(), s + p.sin()));
    let r = (c * c + s * s).sqrt() / ph.len() as f64;
    let circ = (-2.0 * r.ln()).sqrt().to_degrees();
    let stats = phase_statistics(&ph, DEFAULT_BIN_DEG).unwrap();

    let el = t0.elapsed();
    let ok_fit = noiseless < 1e-6;
    let ok_p95 = p95 <= 5.0;
    let ok_circ = (circ - 23.0).abs() <= 4.0 && (stats.circular_std.to_degrees() - circ).abs() < 1e-9;
    let ok_time = el < Duration::from_secs(30);
    report(
        8,
        ok_fit && ok_p95 && ok_circ && ok_time,
        el,
        format!("noiseless {noiseless:.1e}, p95 phase error {p95:.2} deg, circular std {circ:.2} deg"),
    );
    assert!(ok_fit, "noiseless relative errors {rel:?}");
    assert!(ok_p95, "p95 {p95}");
    assert!(ok_circ, "circular std {circ} vs library {}", stats.circular_std.to_degrees());
    assert!(ok_time, "took {el:?}");
}

#[test]
fn criterion_9_determinism() {
    let t0 = Instant::now();
    let run = |dir: &std::path::Path| {
        let out = Command::new(env!("CARGO_BIN_EXE_atomchip"))
            .args(["reproduce-paper", "--seed", "1", "--out"])
            .arg(dir)
            .env_remove("SOURCE_DATE_EPOCH")
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out.stdout
    };
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (s1, s2) = (run(d1.path()), run(d2.path()));
    let mut names: Vec<_> = std::fs::read_dir(d1.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    let mut same = s1 == s2 && !names.is_empty();
    for n in &names {
        same &= std::fs::read(d1.path().join(n)).unwrap() == std::fs::read(d2.path().join(n)).unwrap_or_default();
    }
    same &= std::fs::read_dir(d2.path()).unwrap().count() == names.len();
    let el = t0.elapsed();
    report(9, same, el, format!("{} files and stdout byte-identical across two runs", names.len()));
    assert!(same, "outputs differ");
}
