//! Wire-meander roughness and density-profile inversion.

use std::io::BufRead;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::chip_model::{AtomSpecies, ChipLayout, CurrentConfig, Discretization, Vec3, WireSegmentPath};
use crate::constants::{BOLTZMANN, GAUSS, HBAR, KHZ, MICRON, PLANCK, RB87_SCATTERING_LENGTH};
use crate::error::{Error, Result};
use crate::magnetostatics::FieldSolver;
use crate::report::fmt_sig;

/// Sample spacing of the random generator never exceeds this (m).
pub const RANDOM_MAX_STEP: f64 = 5.0 * MICRON;

/// In-plane transverse centerline offset f(z).
#[derive(Debug, Clone, PartialEq)]
pub enum CenterlineDeviation {
    Zero,
    Sinusoid { amplitude: f64, period: f64, phase: f64 },
    /// Triangle wave rising by `amplitude` over each `ramp` length, so the
    /// slope is ±amplitude/ramp everywhere and the period is 4·ramp.
    Triangle { amplitude: f64, ramp: f64 },
    /// Sampled Gaussian process, linearly interpolated, zero outside.
    Random(RandomDeviation),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomDeviation {
    pub rms: f64,
    pub correlation_length: f64,
    pub seed: u64,
    pub z0: f64,
    pub step: f64,
    pub values: Vec<f64>,
}

impl RandomDeviation {
    /// Squared-exponential covariance `rms²·exp(−Δz²/2ℓ²)`, realized by
    /// smoothing white noise with a normalized gaussian kernel.
    pub fn generate(rms: f64, correlation_length: f64, z_min: f64, z_max: f64, seed: u64) -> Result<Self> {
        if !(rms >= 0.0 && correlation_length > 0.0 && z_max > z_min) {
            return Err(Error::InvalidInput(
                "random deviation needs rms ≥ 0, correlation length > 0 and a nonempty range".into(),
            ));
        }
        let step = RANDOM_MAX_STEP.min(correlation_length / 4.0);
        let width = correlation_length / std::f64::consts::SQRT_2;
        let half = (4.0 * width / step).ceil() as usize;
        let kernel: Vec<f64> = (0..=2 * half)
            .map(|i| {
                let d = (i as f64 - half as f64) * step;
                (-0.5 * d * d / (width * width)).exp()
            })
            .collect();
        let norm = kernel.iter().map(|k| k * k).sum::<f64>().sqrt();
        let n = ((z_max - z_min) / step).ceil() as usize + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise: Vec<f64> = (0..n + 2 * half).map(|_| StandardNormal.sample(&mut rng)).collect();
        let values = (0..n)
            .map(|i| rms * kernel.iter().zip(&noise[i..]).map(|(k, w)| k * w).sum::<f64>() / norm)
            .collect();
        Ok(Self {
            rms,
            correlation_length,
            seed,
            z0: z_min,
            step,
            values,
        })
    }

    fn value(&self, z: f64) -> f64 {
        let t = (z - self.z0) / self.step;
        if t < 0.0 || t > (self.values.len() - 1) as f64 {
            return 0.0;
        }
        let i = (t.floor() as usize).min(self.values.len().saturating_sub(2));
        let f = t - i as f64;
        self.values[i] * (1.0 - f) + self.values.get(i + 1).copied().unwrap_or(0.0) * f
    }
}

impl CenterlineDeviation {
    pub fn value(&self, z: f64) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Sinusoid { amplitude, period, phase } => {
                amplitude * (2.0 * std::f64::consts::PI * z / period + phase).sin()
            }
            Self::Triangle { amplitude, ramp } => {
                // 0 at z = 0, +a at ramp, 0 at 2·ramp, −a at 3·ramp.
                let u = (z / (4.0 * ramp)).rem_euclid(1.0) * 4.0;
                let t = if u < 1.0 {
                    u
                } else if u < 3.0 {
                    2.0 - u
                } else {
                    u - 4.0
                };
                amplitude * t
            }
            Self::Random(r) => r.value(z),
        }
    }

    /// Upper bound on |f|.
    pub fn max_abs(&self) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Sinusoid { amplitude, .. } | Self::Triangle { amplitude, .. } => amplitude.abs(),
            Self::Random(r) => r.values.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        match self.clone() {
            Self::Zero => Self::Zero,
            Self::Sinusoid { amplitude, period, phase } => Self::Sinusoid {
                amplitude: amplitude * k,
                period,
                phase,
            },
            Self::Triangle { amplitude, ramp } => Self::Triangle {
                amplitude: amplitude * k,
                ramp,
            },
            Self::Random(mut r) => {
                r.rms *= k;
                r.values.iter_mut().for_each(|v| *v *= k);
                Self::Random(r)
            }
        }
    }
}

/// Resamples `wire` to segments no longer than `step` and shifts every node
/// in x by f(z). The current path is unchanged apart from its shape.
pub fn perturb_wire(wire: &WireSegmentPath, dev: &CenterlineDeviation, step: f64) -> Result<WireSegmentPath> {
    if dev.max_abs() >= wire.width / 10.0 {
        return Err(Error::DeviationTooLarge {
            max_deviation: dev.max_abs(),
            width: wire.width,
        });
    }
    if !(step > 0.0) {
        return Err(Error::InvalidInput("resampling step must be positive".into()));
    }
    let mut nodes = vec![wire.nodes[0]];
    for (a, b) in wire.segments() {
        let n = ((b - a).norm() / step).ceil().max(1.0) as usize;
        for k in 1..=n {
            nodes.push(a + (b - a) * (k as f64 / n as f64));
        }
    }
    for p in &mut nodes {
        p.x += dev.value(p.z);
    }
    WireSegmentPath::new(&wire.name, &wire.channel, nodes, wire.width, wire.thickness)
}

/// Copy of `layout` with `wire_name` replaced by its perturbed version.
pub fn perturb_layout(layout: &ChipLayout, wire_name: &str, dev: &CenterlineDeviation, step: f64) -> Result<ChipLayout> {
    let mut out = layout.clone();
    let w = out
        .wires
        .iter_mut()
        .find(|w| w.name == wire_name)
        .ok_or_else(|| Error::InvalidInput(format!("no wire named `{wire_name}`")))?;
    *w = perturb_wire(w, dev, step)?;
    Ok(out)
}

/// Axial field roughness along a line parallel to z.
#[derive(Debug, Clone, PartialEq)]
pub struct RoughnessProfile {
    pub z: Vec<f64>,
    pub delta_bz: Vec<f64>,
    pub delta_v: Vec<f64>,
    pub ratio_to_main: Vec<f64>,
}

impl RoughnessProfile {
    pub fn max_abs_ratio(&self) -> f64 {
        self.ratio_to_main.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    pub fn max_abs_delta_bz(&self) -> f64 {
        self.delta_bz.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// δB_z and δV along the line (x, y, z) for z in `z`, perturbed minus
/// reference. `|B_main|` is the reference wire field magnitude (bias
/// excluded); δV uses the total field including bias.
pub fn roughness_field(
    reference: &FieldSolver,
    perturbed: &FieldSolver,
    currents: &CurrentConfig,
    species: &AtomSpecies,
    x: f64,
    height: f64,
    z: &[f64],
) -> Result<RoughnessProfile> {
    if !(height > 0.0) {
        return Err(Error::InvalidInput("height must be positive".into()));
    }
    let amps_ref = reference.channel_currents(currents);
    let amps_pert = perturbed.channel_currents(currents);
    let rows: Vec<(f64, f64, f64)> = z
        .par_iter()
        .map(|&zi| {
            let p = Vec3::new(x, height, zi);
            let b_ref = reference.wire_field_with(&amps_ref, &p)?;
            let b_pert = perturbed.wire_field_with(&amps_pert, &p)?;
            let dbz = b_pert.z - b_ref.z;
            let dv = species.zeeman_slope * ((b_pert + currents.bias).norm() - (b_ref + currents.bias).norm());
            Ok((dbz, dv, dbz / b_ref.norm()))
        })
        .collect::<Result<_>>()?;
    Ok(RoughnessProfile {
        z: z.to_vec(),
        delta_bz: rows.iter().map(|r| r.0).collect(),
        delta_v: rows.iter().map(|r| r.1).collect(),
        ratio_to_main: rows.iter().map(|r| r.2).collect(),
    })
}

/// x of the wire's longest z-directed segment.
pub fn wire_axis_x(wire: &WireSegmentPath) -> f64 {
    wire.segments()
        .max_by(|(a, b), (c, d)| ((b - a).z.abs()).total_cmp(&(d - c).z.abs()))
        .map(|(a, b)| 0.5 * (a.x + b.x))
        .unwrap_or(0.0)
}

/// Settings for [`wire_roughness`].
#[derive(Debug, Clone)]
pub struct RoughnessRun {
    pub wire: String,
    pub deviation: CenterlineDeviation,
    pub resample_step: f64,
    pub height: f64,
    pub z: Vec<f64>,
    pub discretization: Discretization,
}

/// Roughness of one wire against the same wire resampled without deviation.
pub fn wire_roughness(
    layout: &ChipLayout,
    currents: &CurrentConfig,
    species: &AtomSpecies,
    run: &RoughnessRun,
) -> Result<RoughnessProfile> {
    let reference = perturb_layout(layout, &run.wire, &CenterlineDeviation::Zero, run.resample_step)?;
    let perturbed = perturb_layout(layout, &run.wire, &run.deviation, run.resample_step)?;
    let x = wire_axis_x(layout.wire(&run.wire).expect("checked by perturb_layout"));
    let rs = FieldSolver::new(&reference, run.discretization);
    let ps = FieldSolver::new(&perturbed, run.discretization);
    roughness_field(&rs, &ps, currents, species, x, run.height, &run.z)
}

pub const ROUGHNESS_HEADER: &str = "z_um,dBz_mG,dV_h_kHz,ratio";

pub fn roughness_csv(p: &RoughnessProfile) -> String {
    let mut s = String::from(ROUGHNESS_HEADER);
    s.push('\n');
    for i in 0..p.z.len() {
        s.push_str(&format!(
            "{},{},{},{}\n",
            fmt_sig(p.z[i] / MICRON),
            fmt_sig(p.delta_bz[i] / (1e-3 * GAUSS)),
            fmt_sig(p.delta_v[i] / PLANCK / KHZ),
            fmt_sig(p.ratio_to_main[i])
        ));
    }
    s
}

/// Linear density samples n(z) (m⁻¹).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    pub z: Vec<f64>,
    pub n: Vec<f64>,
}

impl DensityProfile {
    pub fn new(z: Vec<f64>, n: Vec<f64>) -> Result<Self> {
        if z.len() != n.len() {
            return Err(Error::InvalidInput("z and n lengths differ".into()));
        }
        if z.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("z must be strictly increasing".into()));
        }
        Ok(Self { z, n })
    }

    /// Reads the two-column CSV `z_um,n_per_um`; `#` lines are comments.
    pub fn read_csv(r: impl BufRead) -> Result<Self> {
        let mut z = Vec::new();
        let mut n = Vec::new();
        let mut header = false;
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse(e.to_string()))?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            if !header {
                if t.replace(' ', "") != "z_um,n_per_um" {
                    return Err(Error::Parse(format!(
                        "line {}: expected header `z_um,n_per_um`, found `{t}`",
                        lineno + 1
                    )));
                }
                header = true;
                continue;
            }
            let cols: Vec<&str> = t.split(',').map(str::trim).collect();
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: bad number `{s}`", lineno + 1)))
            };
            if cols.len() != 2 {
                return Err(Error::Parse(format!("line {}: expected 2 columns", lineno + 1)));
            }
            z.push(parse(cols[0])? * MICRON);
            n.push(parse(cols[1])? / MICRON);
        }
        Self::new(z, n)
    }

    pub fn read_csv_file(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

/// Fraction of the peak density below which points are excluded.
pub const DENSITY_FLOOR: f64 = 0.05;
const MIN_SUPPORT: usize = 5;

/// Potential recovered from a density profile, on the points above the floor.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedPotential {
    pub z: Vec<f64>,
    pub delta_v: Vec<f64>,
    pub delta_bz: Vec<f64>,
    /// Indices into the input profile.
    pub indices: Vec<usize>,
}

fn support(n: &[f64]) -> Result<(f64, Vec<usize>)> {
    let peak = n.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 0.0) {
        return Err(Error::ZeroDensity);
    }
    let idx: Vec<usize> = (0..n.len()).filter(|&i| n[i] > DENSITY_FLOOR * peak).collect();
    if idx.len() < MIN_SUPPORT {
        return Err(Error::WindowTooNarrow(format!(
            "{} points above {}% of peak, need {MIN_SUPPORT}",
            idx.len(),
            DENSITY_FLOOR * 100.0
        )));
    }
    Ok((peak, idx))
}

/// Thermal cloud: δV = −k_B·T·ln(n/n_max), δB_z = δV/zeeman_slope.
pub fn invert_density_boltzmann(profile: &DensityProfile, temperature: f64, species: &AtomSpecies) -> Result<InvertedPotential> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidInput("temperature must be positive".into()));
    }
    let (peak, idx) = support(&profile.n)?;
    let dv: Vec<f64> = idx
        .iter()
        .map(|&i| -BOLTZMANN * temperature * (profile.n[i] / peak).ln())
        .collect();
    Ok(InvertedPotential {
        z: idx.iter().map(|&i| profile.z[i]).collect(),
        delta_bz: dv.iter().map(|v| v / species.zeeman_slope).collect(),
        delta_v: dv,
        indices: idx,
    })
}

/// Forward Boltzmann model n = n0·exp(−V/k_BT).
pub fn boltzmann_density(v: &[f64], temperature: f64, n0: f64) -> Vec<f64> {
    v.iter().map(|u| n0 * (-u / (BOLTZMANN * temperature)).exp()).collect()
}

/// Contact interaction constant 4πħ²a/m (J·m³).
pub fn interaction_constant(scattering_length: f64, mass: f64) -> f64 {
    4.0 * std::f64::consts::PI * HBAR * HBAR * scattering_length / mass
}

pub fn rb87_interaction_constant() -> f64 {
    interaction_constant(RB87_SCATTERING_LENGTH, AtomSpecies::rb87().mass)
}

/// Radially integrated Thomas–Fermi density π(μ−V)²/(g·m·ω⊥²), zero where V ≥ μ.
pub fn thomas_fermi_density(v: &[f64], mu: f64, omega_perp: f64, g: f64, mass: f64) -> Vec<f64> {
    let k = std::f64::consts::PI / (g * mass * omega_perp * omega_perp);
    v.iter().map(|u| if *u < mu { k * (mu - u).powi(2) } else { 0.0 }).collect()
}

/// Chemical potential for `atoms` atoms in an axially harmonic trap, from
/// N = (16π/15)·μ²·R/(g·m·ω⊥²) with R = √(2μ/(m·ω_z²)).
pub fn thomas_fermi_chemical_potential(atoms: f64, omega_perp: f64, omega_z: f64, g: f64, mass: f64) -> f64 {
    // N ∝ μ^{5/2}
    let unit = thomas_fermi_atom_number(1.0, omega_perp, omega_z, g, mass);
    (atoms / unit).powf(0.4)
}

pub fn thomas_fermi_atom_number(mu: f64, omega_perp: f64, omega_z: f64, g: f64, mass: f64) -> f64 {
    let r = (2.0 * mu / (mass * omega_z * omega_z)).sqrt();
    16.0 * std::f64::consts::PI / 15.0 * mu * mu * r / (g * mass * omega_perp * omega_perp)
}

/// Potential recovered from a condensate profile.
#[derive(Debug, Clone, PartialEq)]
pub struct TfInversion {
    pub z: Vec<f64>,
    pub v: Vec<f64>,
    /// Points with no density: V ≥ μ there, reported as μ.
    pub clipped: Vec<bool>,
    /// True on the > 5 %-of-peak support.
    pub supported: Vec<bool>,
}

/// V = μ − √(n·g·m·ω⊥²/π).
pub fn invert_density_thomas_fermi(
    profile: &DensityProfile,
    mu: f64,
    omega_perp: f64,
    g: f64,
    species: &AtomSpecies,
) -> Result<TfInversion> {
    let (peak, idx) = support(&profile.n)?;
    let k = g * species.mass * omega_perp * omega_perp / std::f64::consts::PI;
    let bound = mu * mu / k;
    let scale = peak.max(bound);
    let mut v = Vec::with_capacity(profile.n.len());
    let mut clipped = Vec::with_capacity(profile.n.len());
    for (i, &n) in profile.n.iter().enumerate() {
        if n < -1e-9 * scale {
            return Err(Error::NegativeDensity { index: i, value: n });
        }
        if n > bound * (1.0 + 1e-9) {
            return Err(Error::InvalidInput(format!(
                "density {n:e} m⁻¹ at index {i} exceeds the Thomas–Fermi bound {bound:e} m⁻¹ for this μ"
            )));
        }
        if n <= 0.0 {
            v.push(mu);
            clipped.push(true);
        } else {
            v.push(mu - (n * k).sqrt());
            clipped.push(false);
        }
    }
    let mut supported = vec![false; profile.n.len()];
    for i in idx {
        supported[i] = true;
    }
    let _ = peak;
    Ok(TfInversion {
        z: profile.z.clone(),
        v,
        clipped,
        supported,
    })
}

/// Quadratic background fit of an axial potential.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicFit {
    /// √(2c/m) for V ≈ a + b·z + c·z²; zero when the curvature is not positive.
    pub omega_z: f64,
    pub curvature: f64,
    pub center: f64,
    pub residual: Vec<f64>,
    /// Set when the fitted curvature is not positive.
    pub degenerate: bool,
}

/// Least-squares quadratic subtracted from `v(z)`.
pub fn remove_harmonic_background(z: &[f64], v: &[f64], mass: f64) -> Result<HarmonicFit> {
    if z.len() != v.len() || z.len() < 3 {
        return Err(Error::InvalidInput("need at least 3 matching samples".into()));
    }
    let zc = z.iter().sum::<f64>() / z.len() as f64;
    let half = z.iter().fold(0.0f64, |m, x| m.max((x - zc).abs())).max(f64::MIN_POSITIVE);
    let vs = v.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    let a = DMatrix::from_fn(z.len(), 3, |i, j| ((z[i] - zc) / half).powi(j as i32));
    let rhs = DVector::from_iterator(v.len(), v.iter().map(|x| x / vs));
    let coef = a
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    let fit = &a * &coef;
    let residual: Vec<f64> = fit.iter().zip(v).map(|(f, x)| x - f * vs).collect();
    let c = coef[2] * vs / (half * half);
    let b = coef[1] * vs / half;
    // Curvature below roundoff of the scaled fit counts as zero.
    let degenerate = coef[2] <= 1e-12;
    Ok(HarmonicFit {
        omega_z: if degenerate { 0.0 } else { (2.0 * c / mass).sqrt() },
        curvature: if degenerate { c.max(0.0) } else { c },
        center: if degenerate { zc } else { zc - b / (2.0 * c) },
        residual,
        degenerate,
    })
}

/// Inverted potential CSV `z_um,dV_h_kHz,dBz_mG`.
pub fn inversion_csv(inv: &InvertedPotential) -> String {
    let mut s = String::from("z_um,dV_h_kHz,dBz_mG\n");
    for i in 0..inv.z.len() {
        s.push_str(&format!(
            "{},{},{}\n",
            fmt_sig(inv.z[i] / MICRON),
            fmt_sig(inv.delta_v[i] / PLANCK / KHZ),
            fmt_sig(inv.delta_bz[i] / (1e-3 * GAUSS))
        ));
    }
    s
}
