//! Time-of-flight fringes of a split condensate and their phase analysis.

use std::f64::consts::PI;
use std::io::BufRead;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::constants::{MICRON, MS, PLANCK};
use crate::error::{Error, Result};
use crate::report::{fmt_sig, round_sig};
use crate::rf::DoubleWellReport;

/// Default time of flight (s). Not a measured value; every use is a parameter.
pub const DEFAULT_TOF: f64 = 14.0 * MS;

/// Wraps an angle to (−π, π].
pub fn wrap_phase(phi: f64) -> f64 {
    let w = (phi + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Far-field fringe period h·t/(m·d).
pub fn fringe_period(separation: f64, tof: f64, mass: f64) -> f64 {
    PLANCK * tof / (mass * separation)
}

/// Gaussian envelope A·exp(−(x − x0)²/2σ²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
}

impl Envelope {
    pub fn at(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.width;
        self.amplitude * (-0.5 * u * u).exp()
    }

    pub fn fwhm(&self) -> f64 {
        2.0 * (2.0 * 2f64.ln()).sqrt() * self.width
    }
}

/// n(x) = g(x)·(1 + α·cos(2πx/Λ + φ)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeModel {
    pub envelope: Envelope,
    pub contrast: f64,
    pub period: f64,
    pub phase: f64,
}

impl FringeModel {
    pub fn new(envelope: Envelope, contrast: f64, period: f64, phase: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&contrast) {
            return Err(Error::InvalidInput(format!("contrast {contrast} outside [0, 1]")));
        }
        if !(period > 0.0 && envelope.width > 0.0) {
            return Err(Error::InvalidInput("period and envelope width must be positive".into()));
        }
        Ok(Self {
            envelope,
            contrast,
            period,
            phase: wrap_phase(phase),
        })
    }

    /// Period from well separation, time of flight and mass.
    pub fn from_physical(separation: f64, tof: f64, mass: f64, envelope: Envelope, contrast: f64, phase: f64) -> Result<Self> {
        Self::new(envelope, contrast, fringe_period(separation, tof, mass), phase)
    }

    pub fn at(&self, x: f64) -> f64 {
        self.envelope.at(x) * (1.0 + self.contrast * (2.0 * PI * x / self.period + self.phase).cos())
    }
}

/// Samples the model on `x` with multiplicative gaussian noise of relative
/// size `noise`, clipped at zero.
pub fn synthesize_fringes(model: &FringeModel, x: &[f64], noise: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let spacing = max_spacing(x)?;
    if spacing >= model.period / 6.0 {
        return Err(Error::UnderSampled {
            spacing,
            period: model.period,
        });
    }
    Ok(x.iter()
        .map(|&xi| {
            let e: f64 = if noise > 0.0 { StandardNormal.sample(rng) } else { 0.0 };
            (model.at(xi) * (1.0 + noise * e)).max(0.0)
        })
        .collect())
}

fn max_spacing(x: &[f64]) -> Result<f64> {
    if x.len() < 2 || x.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("sample positions must be strictly increasing".into()));
    }
    Ok(x.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max))
}

pub fn uniform_grid(min: f64, max: f64, spacing: f64) -> Vec<f64> {
    let n = ((max - min) / spacing).round() as usize;
    (0..=n).map(|i| min + i as f64 * spacing).collect()
}

/// Damped least-squares outcome.
#[derive(Debug, Clone)]
struct LmOutcome {
    p: DVector<f64>,
    cost: f64,
    iterations: usize,
    converged: bool,
}

const LM_MAX_ITER: usize = 200;
const LM_STEP_TOL: f64 = 1e-10;

/// Levenberg–Marquardt on `f(p) -> (residuals, jacobian)`; `project` maps a
/// trial point back into the feasible set.
fn levenberg_marquardt(
    p0: DVector<f64>,
    f: impl Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
    project: impl Fn(&mut DVector<f64>),
) -> LmOutcome {
    let mut p = p0;
    let (mut r, mut j) = f(&p);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    for it in 0..LM_MAX_ITER {
        let jt = j.transpose();
        let jtj = &jt * &j;
        let g = &jt * &r;
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for k in 0..a.nrows() {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = &p + &step;
            project(&mut trial);
            let (rt, jtr) = f(&trial);
            let ct = rt.norm_squared();
            if ct.is_finite() && ct <= cost {
                let rel = (&trial - &p).norm() / p.norm().max(1e-300);
                p = trial;
                r = rt;
                j = jtr;
                let improvement = cost - ct;
                cost = ct;
                lambda = (lambda * 0.3).max(1e-15);
                accepted = true;
                if rel < LM_STEP_TOL || improvement <= 1e-30 * cost.max(1e-300) && rel < 1e-8 {
                    return LmOutcome {
                        p,
                        cost,
                        iterations: it + 1,
                        converged: true,
                    };
                }
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No decrease possible: at a minimum to working precision.
            return LmOutcome {
                p,
                cost,
                iterations: it + 1,
                converged: true,
            };
        }
    }
    LmOutcome {
        p,
        cost,
        iterations: LM_MAX_ITER,
        converged: false,
    }
}

/// Result of a modulated-gaussian fit. Lengths in m, phase in rad.
#[derive(Debug, Clone, PartialEq)]
pub struct FringeFitResult {
    pub envelope: Envelope,
    pub contrast: f64,
    pub period: f64,
    pub phase: f64,
    /// Covariance of (A, x0, σ, α, Λ, φ) in SI units and radians.
    pub covariance: DMatrix<f64>,
    pub residual_norm: f64,
    pub converged: bool,
    pub contrast_at_bound: bool,
    pub iterations: usize,
}

impl FringeFitResult {
    pub fn model(&self) -> FringeModel {
        FringeModel {
            envelope: self.envelope,
            contrast: self.contrast,
            period: self.period,
            phase: self.phase,
        }
    }

    pub fn standard_errors(&self) -> [f64; 6] {
        std::array::from_fn(|i| self.covariance[(i, i)].max(0.0).sqrt())
    }
}

/// Contrast below which the spectrum is considered to have no fringe peak.
pub const MIN_CONTRAST: f64 = 0.02;
const PHASE_OFFSETS_DEG: [f64; 4] = [0.0, 90.0, 180.0, 270.0];

// Internal parameters, lengths in μm relative to x_ref and amplitude in
// units of the profile maximum: [A, x0, σ, α, Λ, ψ] with the fringe term
// cos(2π(x − x_ref)/Λ + ψ).
fn model_and_jacobian(p: &DVector<f64>, x: &[f64], y: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let (a, x0, s, al, lam, psi) = (p[0], p[1], p[2], p[3], p[4], p[5]);
    let n = x.len();
    let mut r = DVector::zeros(n);
    let mut j = DMatrix::zeros(n, 6);
    for i in 0..n {
        let u = (x[i] - x0) / s;
        let g = (-0.5 * u * u).exp();
        let th = 2.0 * PI * x[i] / lam + psi;
        let (sn, cs) = th.sin_cos();
        let fr = 1.0 + al * cs;
        r[i] = a * g * fr - y[i];
        j[(i, 0)] = g * fr;
        j[(i, 1)] = a * g * fr * u / s;
        j[(i, 2)] = a * g * fr * u * u / s;
        j[(i, 3)] = a * g * cs;
        j[(i, 4)] = a * g * al * sn * 2.0 * PI * x[i] / (lam * lam);
        j[(i, 5)] = -a * g * al * sn;
    }
    (r, j)
}

fn gaussian_fit(x: &[f64], y: &[f64]) -> DVector<f64> {
    let sum: f64 = y.iter().sum();
    let mean = x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / sum;
    let var = x.iter().zip(y).map(|(a, b)| (a - mean).powi(2) * b).sum::<f64>() / sum;
    let peak = y.iter().cloned().fold(0.0, f64::max);
    let p0 = DVector::from_vec(vec![peak, mean, var.sqrt().max(1e-3)]);
    let f = |p: &DVector<f64>| {
        let n = x.len();
        let mut r = DVector::zeros(n);
        let mut j = DMatrix::zeros(n, 3);
        for i in 0..n {
            let u = (x[i] - p[1]) / p[2];
            let g = (-0.5 * u * u).exp();
            r[i] = p[0] * g - y[i];
            j[(i, 0)] = g;
            j[(i, 1)] = p[0] * g * u / p[2];
            j[(i, 2)] = p[0] * g * u * u / p[2];
        }
        (r, j)
    };
    levenberg_marquardt(p0, f, |p| p[2] = p[2].abs().max(1e-6)).p
}

/// Fits n(x) = g(x)·(1 + α·cos(2πx/Λ + φ)) to samples at positions `x` (m).
pub fn fit_modulated_gaussian(x: &[f64], n: &[f64]) -> Result<FringeFitResult> {
    if x.len() != n.len() || x.len() < 12 {
        return Err(Error::InvalidInput("need at least 12 matching samples".into()));
    }
    let spacing_m = max_spacing(x)?;
    let peak = n.iter().cloned().fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::ZeroDensity);
    }
    let xu: Vec<f64> = x.iter().map(|v| v / MICRON).collect();
    let yu: Vec<f64> = n.iter().map(|v| v / peak).collect();
    let spacing = spacing_m / MICRON;

    // Envelope first, then the spectrum of the envelope-normalized profile.
    let env = gaussian_fit(&xu, &yu);
    let (a0, x_ref, s0) = (env[0], env[1], env[2].abs());
    let fwhm = 2.0 * (2.0 * 2f64.ln()).sqrt() * s0;
    let mut num = Vec::new();
    let mut w = Vec::new();
    for (xi, yi) in xu.iter().zip(&yu) {
        let u = (xi - x_ref) / s0;
        let g = a0 * (-0.5 * u * u).exp();
        if g > 0.2 * a0 {
            num.push((xi - x_ref, yi / g - 1.0));
            w.push(g);
        }
    }
    let wsum: f64 = w.iter().sum();
    let spectrum = |k: f64| -> (f64, f64) {
        let (mut re, mut im) = (0.0, 0.0);
        for ((dx, r), wi) in num.iter().zip(&w) {
            let (s, c) = (k * dx).sin_cos();
            re += wi * r * c;
            im -= wi * r * s;
        }
        (re, im)
    };
    let k_min = 2.0 * PI * 2.0 / (fwhm * 1.5);
    let k_max = PI / spacing;
    if k_min >= k_max {
        return Err(Error::InvalidInput("envelope too narrow for the sampling".into()));
    }
    let steps = 4000;
    let mut best = (0.0, k_min);
    for i in 0..=steps {
        let k = k_min + (k_max - k_min) * i as f64 / steps as f64;
        let (re, im) = spectrum(k);
        let m = re.hypot(im);
        if m > best.0 {
            best = (m, k);
        }
    }
    // Golden-section refinement around the grid peak.
    let dk = (k_max - k_min) / steps as f64;
    let (mut lo, mut hi) = (best.1 - dk, best.1 + dk);
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..60 {
        let m1 = hi - gr * (hi - lo);
        let m2 = lo + gr * (hi - lo);
        let f1 = {
            let (a, b) = spectrum(m1);
            a.hypot(b)
        };
        let f2 = {
            let (a, b) = spectrum(m2);
            a.hypot(b)
        };
        if f1 > f2 {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let k = 0.5 * (lo + hi);
    let (re, im) = spectrum(k);
    let alpha_est = 2.0 * re.hypot(im) / wsum;
    if alpha_est < MIN_CONTRAST {
        return Err(Error::DegenerateSpectrum { contrast: alpha_est });
    }
    let lam0 = 2.0 * PI / k;
    if fwhm < 3.0 * lam0 {
        return Err(Error::InvalidInput(format!(
            "only {:.2} fringe periods within the envelope FWHM, need 3",
            fwhm / lam0
        )));
    }
    let psi0 = im.atan2(re);

    // Model phase is referenced to x = 0: ψ(x=0) = ψ_ref − 2π·x_ref/Λ.
    let fit_one = |offset: f64| {
        let p0 = DVector::from_vec(vec![
            a0,
            x_ref,
            s0,
            alpha_est.min(0.99),
            lam0,
            psi0 - 2.0 * PI * x_ref / lam0 + offset,
        ]);
        levenberg_marquardt(
            p0,
            |p| model_and_jacobian(p, &xu, &yu),
            |p| {
                p[2] = p[2].abs().max(1e-6);
                p[3] = p[3].clamp(-1.0, 1.0);
                p[4] = p[4].abs().max(spacing * 2.0);
            },
        )
    };
    let outcomes: Vec<LmOutcome> = PHASE_OFFSETS_DEG.iter().map(|o| fit_one(o.to_radians())).collect();
    let best = outcomes
        .into_iter()
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .expect("four starts");

    let mut p = best.p.clone();
    if p[3] < 0.0 {
        p[3] = -p[3];
        p[5] += PI;
    }
    let at_bound = p[3] >= 1.0 - 1e-12;
    let (r, j) = model_and_jacobian(&p, &xu, &yu);
    let dof = (xu.len() as f64 - 6.0).max(1.0);
    let s2 = r.norm_squared() / dof;
    let jtj = j.transpose() * &j;
    let cov_u = jtj
        .try_inverse()
        .map(|m| m * s2)
        .unwrap_or_else(|| DMatrix::from_element(6, 6, f64::NAN));
    // Back to SI lengths and the profile's amplitude units.
    let scale = DVector::from_vec(vec![peak, MICRON, MICRON, 1.0, MICRON, 1.0]);
    let cov = DMatrix::from_fn(6, 6, |a, b| cov_u[(a, b)] * scale[a] * scale[b]);

    Ok(FringeFitResult {
        envelope: Envelope {
            amplitude: p[0] * peak,
            center: p[1] * MICRON,
            width: p[2].abs() * MICRON,
        },
        contrast: p[3],
        period: p[4] * MICRON,
        phase: wrap_phase(p[5]),
        covariance: cov,
        residual_norm: r.norm() * peak,
        converged: best.converged,
        contrast_at_bound: at_bound,
        iterations: best.iterations,
    })
}

/// JSON form of a fit in μm and degrees.
#[derive(Debug, Clone, Serialize)]
pub struct FringeFitRecord {
    pub amplitude: f64,
    pub center_um: f64,
    pub width_um: f64,
    pub contrast: f64,
    pub period_um: f64,
    pub phase_deg: f64,
    pub stderr: [f64; 6],
    pub residual_norm: f64,
    pub converged: bool,
    pub contrast_at_bound: bool,
    pub iterations: usize,
}

impl From<&FringeFitResult> for FringeFitRecord {
    fn from(f: &FringeFitResult) -> Self {
        let se = f.standard_errors();
        let units = [1.0, MICRON, MICRON, 1.0, MICRON, PI / 180.0];
        Self {
            amplitude: round_sig(f.envelope.amplitude),
            center_um: round_sig(f.envelope.center / MICRON),
            width_um: round_sig(f.envelope.width / MICRON),
            contrast: round_sig(f.contrast),
            period_um: round_sig(f.period / MICRON),
            phase_deg: round_sig(f.phase.to_degrees()),
            stderr: std::array::from_fn(|i| round_sig(se[i] / units[i])),
            residual_norm: round_sig(f.residual_norm),
            converged: f.converged,
            contrast_at_bound: f.contrast_at_bound,
            iterations: f.iterations,
        }
    }
}

/// Histogram bin width default (degrees).
pub const DEFAULT_BIN_DEG: f64 = 15.0;
/// Rayleigh-test significance below which uniformity is rejected.
pub const RAYLEIGH_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    /// Bin edges in degrees, from −180 to 180; bins are (e_k, e_{k+1}].
    pub edges_deg: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn centers_deg(&self) -> Vec<f64> {
        self.edges_deg.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseEnsembleStats {
    pub phases: Vec<f64>,
    pub circular_mean: f64,
    pub circular_std: f64,
    pub resultant_length: f64,
    /// Sample standard deviation of the phases unwrapped about the circular mean.
    pub linear_std: f64,
    pub rayleigh_p: f64,
    /// Uniform-on-circle hypothesis not rejected at [`RAYLEIGH_ALPHA`].
    pub consistent_with_uniform: bool,
    pub histogram: Histogram,
}

/// Rayleigh test p-value with the second-order small-sample correction.
pub fn rayleigh_p(n: usize, r: f64) -> f64 {
    let nf = n as f64;
    let z = nf * r * r;
    let p = (-z).exp() * (1.0 + (2.0 * z - z * z) / (4.0 * nf) - (24.0 * z - 132.0 * z * z + 76.0 * z.powi(3) - 9.0 * z.powi(4)) / (288.0 * nf * nf));
    p.clamp(0.0, 1.0)
}

pub fn phase_statistics(phases: &[f64], bin_deg: f64) -> Result<PhaseEnsembleStats> {
    if phases.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 phases".into()));
    }
    if !(bin_deg > 0.0 && (360.0 / bin_deg - (360.0 / bin_deg).round()).abs() < 1e-9) {
        return Err(Error::InvalidInput("bin width must divide 360°".into()));
    }
    let n = phases.len() as f64;
    let (s, c) = phases
        .iter()
        .fold((0.0, 0.0), |(s, c), p| (s + p.sin(), c + p.cos()));
    let r = (s.hypot(c) / n).min(1.0);
    let mean = wrap_phase(s.atan2(c));
    let circ = (-2.0 * r.ln()).max(0.0).sqrt();
    let dev: Vec<f64> = phases.iter().map(|p| wrap_phase(p - mean)).collect();
    let dmean = dev.iter().sum::<f64>() / n;
    let lin = (dev.iter().map(|d| (d - dmean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();

    let nbins = (360.0 / bin_deg).round() as usize;
    let edges: Vec<f64> = (0..=nbins).map(|k| -180.0 + k as f64 * bin_deg).collect();
    let mut counts = vec![0usize; nbins];
    for p in phases {
        let d = wrap_phase(*p).to_degrees();
        // (e_k, e_{k+1}]: ceil picks the right edge.
        let k = (((d + 180.0) / bin_deg).ceil() as usize).clamp(1, nbins) - 1;
        counts[k] += 1;
    }
    let p = rayleigh_p(phases.len(), r);
    Ok(PhaseEnsembleStats {
        phases: phases.to_vec(),
        circular_mean: mean,
        circular_std: circ,
        resultant_length: r,
        linear_std: lin,
        rayleigh_p: p,
        consistent_with_uniform: p > RAYLEIGH_ALPHA,
        histogram: Histogram { edges_deg: edges, counts },
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseStatsRecord {
    pub n: usize,
    pub circular_mean_deg: f64,
    pub circular_std_deg: f64,
    pub resultant_length: f64,
    pub linear_std_deg: f64,
    pub rayleigh_p: f64,
    pub consistent_with_uniform: bool,
}

impl From<&PhaseEnsembleStats> for PhaseStatsRecord {
    fn from(s: &PhaseEnsembleStats) -> Self {
        Self {
            n: s.phases.len(),
            circular_mean_deg: round_sig(s.circular_mean.to_degrees()),
            circular_std_deg: round_sig(s.circular_std.to_degrees()),
            resultant_length: round_sig(s.resultant_length),
            linear_std_deg: round_sig(s.linear_std.to_degrees()),
            rayleigh_p: round_sig(s.rayleigh_p),
            consistent_with_uniform: s.consistent_with_uniform,
        }
    }
}

pub fn histogram_csv(h: &Histogram) -> String {
    let mut s = String::from("bin_center_deg,count\n");
    for (c, n) in h.centers_deg().iter().zip(&h.counts) {
        s.push_str(&format!("{},{}\n", fmt_sig(*c), n));
    }
    s
}

/// Samples from a wrapped normal distribution.
pub fn wrapped_normal(n: usize, mean: f64, sigma: f64, rng: &mut impl Rng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let e: f64 = StandardNormal.sample(rng);
            wrap_phase(mean + sigma * e)
        })
        .collect()
}

/// Reads one angle per line in degrees; header `phase_deg`, `#` comments.
pub fn read_phases_csv(r: impl BufRead) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    let mut header = false;
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse(e.to_string()))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if !header {
            if t != "phase_deg" {
                return Err(Error::Parse(format!("line {}: expected header `phase_deg`", i + 1)));
            }
            header = true;
            continue;
        }
        let v: f64 = t
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad number `{t}`", i + 1)))?;
        out.push(v.to_radians());
    }
    Ok(out)
}

/// Reads a profile CSV `x_um,n_arb` into (x in m, n).
pub fn read_profile_csv(r: impl BufRead) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut xs = Vec::new();
    let mut ns = Vec::new();
    let mut header = false;
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::Parse(e.to_string()))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        if !header {
            if t.replace(' ', "") != "x_um,n_arb" {
                return Err(Error::Parse(format!("line {}: expected header `x_um,n_arb`", i + 1)));
            }
            header = true;
            continue;
        }
        let cols: Vec<&str> = t.split(',').map(str::trim).collect();
        if cols.len() != 2 {
            return Err(Error::Parse(format!("line {}: expected 2 columns", i + 1)));
        }
        let p = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("line {}: bad number `{s}`", i + 1)))
        };
        xs.push(p(cols[0])? * MICRON);
        ns.push(p(cols[1])?);
    }
    Ok((xs, ns))
}

pub fn profile_csv(x: &[f64], n: &[f64]) -> String {
    let mut s = String::from("x_um,n_arb\n");
    for (a, b) in x.iter().zip(n) {
        s.push_str(&format!("{},{}\n", fmt_sig(a / MICRON), fmt_sig(*b)));
    }
    s
}

/// Settings of simulated interference shots.
#[derive(Debug, Clone)]
pub struct ShotConfig {
    pub tof: f64,
    pub mass: f64,
    pub envelope: Envelope,
    pub contrast: f64,
    pub grid: Vec<f64>,
    /// Relative multiplicative noise per sample.
    pub noise: f64,
    pub mean_phase: f64,
    /// Standard deviation of the injected shot-to-shot phase (rad).
    pub phase_jitter: f64,
}

impl ShotConfig {
    /// 40 μm wide cloud at the origin on a 2 μm grid spanning ±150 μm,
    /// 60 % contrast, default time of flight.
    pub fn standard(mass: f64) -> Self {
        Self {
            tof: DEFAULT_TOF,
            mass,
            envelope: Envelope {
                amplitude: 1.0,
                center: 0.0,
                width: 40.0 * MICRON,
            },
            contrast: 0.6,
            grid: uniform_grid(-150.0 * MICRON, 150.0 * MICRON, 2.0 * MICRON),
            noise: 0.0,
            mean_phase: 0.0,
            phase_jitter: 0.0,
        }
    }
}

/// One simulated shot: injected phase and fit.
#[derive(Debug)]
pub struct Shot {
    pub injected_phase: f64,
    pub fit: Result<FringeFitResult>,
}

/// Synthesizes and fits one shot from a double-well report.
pub fn end_to_end_shot(well: &DoubleWellReport, cfg: &ShotConfig, rng: &mut impl Rng) -> Result<Shot> {
    if well.n_minima != 2 {
        return Err(Error::InvalidInput(format!(
            "double well required, slice has {} minima",
            well.n_minima
        )));
    }
    let jitter: f64 = if cfg.phase_jitter > 0.0 {
        StandardNormal.sample(rng)
    } else {
        0.0
    };
    let phase = wrap_phase(cfg.mean_phase + cfg.phase_jitter * jitter);
    let model = FringeModel::from_physical(well.separation, cfg.tof, cfg.mass, cfg.envelope, cfg.contrast, phase)?;
    let n = synthesize_fringes(&model, &cfg.grid, cfg.noise, rng)?;
    Ok(Shot {
        injected_phase: phase,
        fit: fit_modulated_gaussian(&cfg.grid, &n),
    })
}

/// `count` independent shots; shot i draws from stream i of a generator
/// seeded with `seed`, so results do not depend on scheduling.
pub fn simulate_shots(well: &DoubleWellReport, cfg: &ShotConfig, count: usize, seed: u64) -> Result<Vec<Shot>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            end_to_end_shot(well, cfg, &mut rng)
        })
        .collect()
}
