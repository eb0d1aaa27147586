//! rf-dressed adiabatic potentials and double-well splitting.
//!
//! Rotating-wave approximation about the local static field. With
//! `B_rf(t) = Re[B̃ e^{−iωt}]` and `e_z` along the static field, the coupling
//! is carried by the circular component `B̃₋ = B̃·(e_x − i e_y)` (or `B̃₊` for
//! g_F < 0) and
//!
//! ```text
//! ħδ = |g_F| μ_B |B| − h f_rf
//! ħΩ = |g_F| μ_B |B̃∓| / 2
//! E  = m̃ √((ħδ)² + (ħΩ)²)
//! ```
//!
//! The longitudinal part of the phasor does not couple and is dropped.

use std::collections::BTreeMap;

use nalgebra::{Complex, Vector3};
use rayon::prelude::*;

use crate::chip_model::{AtomSpecies, CurrentConfig, RfChannel, Vec3};
use crate::constants::{KHZ, MICRON, PLANCK};
use crate::error::{Error, Result};
use crate::magnetostatics::FieldSolver;
use crate::report::fmt_sig;
use crate::trap::Potential;

pub type C64 = Complex<f64>;
pub type Phasor = Vector3<C64>;

/// rf drive: frequency, per-channel amplitude and phase, dressed level m̃.
#[derive(Debug, Clone, PartialEq)]
pub struct RfDriveState {
    pub frequency: f64,
    pub channels: BTreeMap<String, RfChannel>,
    pub manifold: i8,
}

impl RfDriveState {
    pub fn from_currents(currents: &CurrentConfig) -> Result<Self> {
        let drive = Self {
            frequency: currents.rf_frequency,
            channels: currents.rf.clone(),
            manifold: 2,
        };
        drive.validate()?;
        Ok(drive)
    }

    pub fn validate(&self) -> Result<()> {
        let active = self.channels.values().any(|c| c.amplitude != 0.0);
        if active && !(self.frequency > 0.0 && self.frequency.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "rf frequency must be positive when rf is driven, got {}",
                self.frequency
            )));
        }
        Ok(())
    }

    /// Complex weight of each solver channel (A).
    pub fn weights(&self, solver: &FieldSolver) -> Vec<C64> {
        solver
            .channels()
            .iter()
            .map(|ch| {
                self.channels
                    .get(ch)
                    .map_or(C64::new(0.0, 0.0), |c| C64::from_polar(c.amplitude, c.phase))
            })
            .collect()
    }
}

fn superpose(unit: &[Vec3], weights: &[C64]) -> Phasor {
    let mut out = Phasor::zeros();
    for (b, w) in unit.iter().zip(weights) {
        if *w != C64::new(0.0, 0.0) {
            out += b.map(|x| C64::new(x, 0.0)) * *w;
        }
    }
    out
}

/// rf field phasor at `p` (T), quasi-static superposition of channel fields.
pub fn rf_field_phasor(solver: &FieldSolver, drive: &RfDriveState, p: &Vec3) -> Result<Phasor> {
    let unit = solver.unit_fields(p)?;
    Ok(superpose(&unit, &drive.weights(solver)))
}

/// Local frame (e_x, e_y, e_z) with e_z along `b`.
pub fn local_frame(b: &Vec3) -> (Vec3, Vec3, Vec3) {
    let ez = b.normalize();
    let trial = if ez.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let ex = (trial - ez * trial.dot(&ez)).normalize();
    let ey = ez.cross(&ex);
    (ex, ey, ez)
}

/// Magnitude of the coupled circular component of `rf` relative to `b`.
pub fn coupled_amplitude(b: &Vec3, rf: &Phasor, g_f_sign: f64) -> f64 {
    let (ex, ey, _) = local_frame(b);
    let px: C64 = rf.iter().zip(ex.iter()).map(|(c, e)| c * *e).sum();
    let py: C64 = rf.iter().zip(ey.iter()).map(|(c, e)| c * *e).sum();
    let i = C64::new(0.0, 1.0);
    if g_f_sign >= 0.0 {
        (px - i * py).norm()
    } else {
        (px + i * py).norm()
    }
}

/// Detuning ħδ (J) and Rabi energy ħΩ (J) at one point.
pub fn detuning_and_rabi(b: &Vec3, rf: &Phasor, rf_frequency: f64, species: &AtomSpecies) -> Result<(f64, f64)> {
    let bmag = b.norm();
    if bmag == 0.0 || !bmag.is_finite() {
        return Err(Error::ZeroField);
    }
    let gmu = species.g_f_mu_b();
    let delta = gmu.abs() * bmag - PLANCK * rf_frequency;
    let omega = 0.5 * gmu.abs() * coupled_amplitude(b, rf, gmu.signum());
    Ok((delta, omega))
}

/// Dressed energy `m̃·√((ħδ)² + (ħΩ)²)` (J).
pub fn dressed_potential(b: &Vec3, rf: &Phasor, rf_frequency: f64, species: &AtomSpecies, manifold: i8) -> Result<f64> {
    let (d, o) = detuning_and_rabi(b, rf, rf_frequency, species)?;
    Ok(manifold as f64 * d.hypot(o))
}

/// All 2F+1 dressed energies (J, ascending) by diagonalizing the
/// rotating-frame spin Hamiltonian `δ·F_z + (g_F μ_B/4)(B̃∓·F_± + h.c.)`.
/// Slower than [`dressed_potential`]; meant as a cross-check.
pub fn dressed_levels_by_diagonalization(b: &Vec3, rf: &Phasor, rf_frequency: f64, species: &AtomSpecies) -> Result<Vec<f64>> {
    use nalgebra::{DMatrix, SymmetricEigen};
    let bmag = b.norm();
    if bmag == 0.0 || !bmag.is_finite() {
        return Err(Error::ZeroField);
    }
    let f = species.hyperfine_f as i32;
    let n = (2 * f + 1) as usize;
    // Work in h·kHz to keep the matrix entries O(1).
    let unit = PLANCK * KHZ;
    let gmu = species.g_f_mu_b();
    let delta = (gmu.abs() * bmag - PLANCK * rf_frequency) / unit;
    let (ex, ey, _) = local_frame(b);
    let comp = |e: &Vec3| -> C64 { rf.iter().zip(e.iter()).map(|(c, x)| c * *x).sum() };
    let i = C64::new(0.0, 1.0);
    let circ = if gmu >= 0.0 { comp(&ex) - i * comp(&ey) } else { comp(&ex) + i * comp(&ey) };
    let coupling = circ * (gmu.abs() / 4.0 / unit);
    let mut h = DMatrix::<C64>::zeros(n, n);
    for k in 0..n {
        let m = (f - k as i32) as f64;
        h[(k, k)] = C64::new(delta * m, 0.0);
        if k > 0 {
            let ff = f as f64;
            let raise = (ff * (ff + 1.0) - m * (m + 1.0)).sqrt();
            h[(k - 1, k)] = coupling * raise;
            h[(k, k - 1)] = coupling.conj() * raise;
        }
    }
    let mut e: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().map(|v| v * unit).collect();
    e.sort_by(f64::total_cmp);
    Ok(e)
}

/// Full dressed potential of a chip with dc and rf currents.
pub struct DressedPotential<'a> {
    solver: &'a FieldSolver,
    species: &'a AtomSpecies,
    bias: Vec3,
    dc: Vec<f64>,
    weights: Vec<C64>,
    frequency: f64,
    manifold: i8,
}

impl<'a> DressedPotential<'a> {
    pub fn new(solver: &'a FieldSolver, currents: &CurrentConfig, species: &'a AtomSpecies) -> Result<Self> {
        let drive = RfDriveState::from_currents(currents)?;
        Ok(Self {
            solver,
            species,
            bias: currents.bias,
            dc: solver.channel_currents(currents),
            weights: drive.weights(solver),
            frequency: drive.frequency,
            manifold: drive.manifold,
        })
    }
}

impl Potential for DressedPotential<'_> {
    fn energy(&self, p: &Vec3) -> Result<f64> {
        let unit = self.solver.unit_fields(p)?;
        let b = unit.iter().zip(&self.dc).fold(self.bias, |acc, (u, i)| acc + u * *i);
        let rf = superpose(&unit, &self.weights);
        dressed_potential(&b, &rf, self.frequency, self.species, self.manifold)
    }

    fn mass(&self) -> f64 {
        self.species.mass
    }

    fn zeeman_slope(&self) -> f64 {
        self.species.zeeman_slope
    }
}

/// Outcome of a 1D double-well analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct DoubleWellReport {
    pub n_minima: usize,
    /// Minimum positions along the slice, relative to its centre (m).
    pub minima: Vec<f64>,
    pub separation: f64,
    /// Saddle minus mean well bottom (J); zero for a single well.
    pub barrier: f64,
    /// Depth difference of the two wells (J).
    pub asymmetry: f64,
    pub slice_axis: Vec3,
}

impl DoubleWellReport {
    pub fn barrier_hz(&self) -> f64 {
        self.barrier / PLANCK
    }

    pub fn asymmetry_hz(&self) -> f64 {
        self.asymmetry / PLANCK
    }
}

/// Energy steps below this are treated as flat when counting minima (J).
pub const SLICE_NOISE: f64 = PLANCK * 1e-3;

/// Counts strict interior minima of `energies` sampled at increasing
/// `positions`. Plateaus shallower than `noise` are merged first.
pub fn characterize_double_well(positions: &[f64], energies: &[f64], axis: Vec3, noise: f64) -> Result<DoubleWellReport> {
    if positions.len() != energies.len() || positions.len() < 3 {
        return Err(Error::InvalidInput("slice needs at least 3 matching samples".into()));
    }
    // Runs of samples within `noise` of each other collapse to one level.
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for i in 1..energies.len() {
        if (energies[i] - energies[start]).abs() > noise {
            runs.push((start, i - 1));
            start = i;
        }
    }
    runs.push((start, energies.len() - 1));

    let level = |r: &(usize, usize)| energies[r.0];
    let mut minima_idx = Vec::new();
    for k in 1..runs.len().saturating_sub(1) {
        if level(&runs[k]) < level(&runs[k - 1]) && level(&runs[k]) < level(&runs[k + 1]) {
            let (a, b) = runs[k];
            let best = (a..=b).min_by(|&i, &j| energies[i].total_cmp(&energies[j])).unwrap_or(a);
            minima_idx.push(best);
        }
    }

    let refine = |i: usize| -> (f64, f64) {
        if i == 0 || i + 1 >= energies.len() {
            return (positions[i], energies[i]);
        }
        let (x0, x1, x2) = (positions[i - 1], positions[i], positions[i + 1]);
        let (y0, y1, y2) = (energies[i - 1], energies[i], energies[i + 1]);
        let h = 0.5 * (x2 - x0);
        let curv = y0 - 2.0 * y1 + y2;
        if curv <= 0.0 {
            return (x1, y1);
        }
        let t = 0.5 * (y0 - y2) / curv;
        (x1 + t * h, y1 - 0.25 * (y0 - y2) * t)
    };

    let found: Vec<(f64, f64)> = minima_idx.iter().map(|&i| refine(i)).collect();
    match found.len() {
        0 => Err(Error::NoMinimum),
        1 => Ok(DoubleWellReport {
            n_minima: 1,
            minima: vec![found[0].0],
            separation: 0.0,
            barrier: 0.0,
            asymmetry: 0.0,
            slice_axis: axis,
        }),
        2 => {
            let (i0, i1) = (minima_idx[0], minima_idx[1]);
            let saddle_i = (i0..=i1)
                .max_by(|&i, &j| energies[i].total_cmp(&energies[j]))
                .unwrap_or(i0);
            let saddle = if saddle_i > 0 && saddle_i + 1 < energies.len() {
                let (x0, x2) = (positions[saddle_i - 1], positions[saddle_i + 1]);
                let (y0, y1, y2) = (energies[saddle_i - 1], energies[saddle_i], energies[saddle_i + 1]);
                let curv = y0 - 2.0 * y1 + y2;
                let _ = (x0, x2);
                if curv < 0.0 {
                    let t = 0.5 * (y0 - y2) / curv;
                    y1 - 0.25 * (y0 - y2) * t
                } else {
                    y1
                }
            } else {
                energies[saddle_i]
            };
            let mean = 0.5 * (found[0].1 + found[1].1);
            Ok(DoubleWellReport {
                n_minima: 2,
                minima: vec![found[0].0, found[1].0],
                separation: found[1].0 - found[0].0,
                barrier: saddle - mean,
                asymmetry: (found[0].1 - found[1].1).abs(),
                slice_axis: axis,
            })
        }
        _ => Err(Error::TooManyMinima {
            positions: found.iter().map(|f| f.0).collect(),
        }),
    }
}

/// Sampling line through a trap centre.
#[derive(Debug, Clone, Copy)]
pub struct Slice {
    pub center: Vec3,
    pub axis: Vec3,
    pub half_length: f64,
    pub samples: usize,
}

impl Slice {
    /// ±10 μm along `axis` in 1001 samples (20 nm spacing).
    pub fn through(center: Vec3, axis: Vec3) -> Self {
        Self {
            center,
            axis,
            half_length: 10.0 * MICRON,
            samples: 1001,
        }
    }

    pub fn offsets(&self) -> Vec<f64> {
        let n = self.samples.max(3);
        (0..n)
            .map(|i| (2.0 * i as f64 / (n - 1) as f64 - 1.0) * self.half_length)
            .collect()
    }

    pub fn point(&self, s: f64) -> Vec3 {
        self.center + self.axis.normalize() * s
    }
}

/// Static field and per-channel unit fields cached along a slice, so that
/// rf amplitude and frequency can be scanned without re-running Biot–Savart.
#[derive(Debug, Clone)]
pub struct SliceFields {
    pub slice: Slice,
    pub offsets: Vec<f64>,
    pub static_field: Vec<Vec3>,
    pub unit: Vec<Vec<Vec3>>,
}

impl SliceFields {
    pub fn new(solver: &FieldSolver, currents: &CurrentConfig, slice: Slice) -> Result<Self> {
        let offsets = slice.offsets();
        let dc = solver.channel_currents(currents);
        let unit: Vec<Vec<Vec3>> = offsets
            .par_iter()
            .map(|s| solver.unit_fields(&slice.point(*s)))
            .collect::<Result<_>>()?;
        let static_field = unit
            .iter()
            .map(|u| u.iter().zip(&dc).fold(currents.bias, |acc, (b, i)| acc + b * *i))
            .collect();
        Ok(Self {
            slice,
            offsets,
            static_field,
            unit,
        })
    }

    /// Smallest |B| on the slice (T).
    pub fn bottom_field(&self) -> f64 {
        self.static_field.iter().map(|b| b.norm()).fold(f64::INFINITY, f64::min)
    }

    pub fn energies(&self, weights: &[C64], frequency: f64, species: &AtomSpecies, manifold: i8) -> Result<Vec<f64>> {
        self.static_field
            .iter()
            .zip(&self.unit)
            .map(|(b, u)| dressed_potential(b, &superpose(u, weights), frequency, species, manifold))
            .collect()
    }

    pub fn analyze(&self, weights: &[C64], frequency: f64, species: &AtomSpecies, manifold: i8) -> Result<DoubleWellReport> {
        let e = self.energies(weights, frequency, species, manifold)?;
        characterize_double_well(&self.offsets, &e, self.slice.axis.normalize(), SLICE_NOISE)
    }
}

/// Per-channel weights with every amplitude set to `amplitude` and the
/// phases of `drive` kept.
pub fn ramp_weights(solver: &FieldSolver, drive: &RfDriveState, amplitude: f64) -> Vec<C64> {
    let mut d = drive.clone();
    for c in d.channels.values_mut() {
        c.amplitude = amplitude;
    }
    d.weights(solver)
}

/// One row of an amplitude ramp.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitScanRow {
    pub amplitude: f64,
    pub n_minima: usize,
    pub separation: f64,
    pub barrier: f64,
    pub asymmetry: f64,
}

impl SplitScanRow {
    fn from_result(amplitude: f64, r: Result<DoubleWellReport>) -> Self {
        match r {
            Ok(rep) => Self {
                amplitude,
                n_minima: rep.n_minima,
                separation: rep.separation,
                barrier: rep.barrier,
                asymmetry: rep.asymmetry,
            },
            Err(Error::TooManyMinima { positions }) => Self {
                amplitude,
                n_minima: positions.len(),
                separation: f64::NAN,
                barrier: f64::NAN,
                asymmetry: f64::NAN,
            },
            Err(_) => Self {
                amplitude,
                n_minima: 0,
                separation: f64::NAN,
                barrier: f64::NAN,
                asymmetry: f64::NAN,
            },
        }
    }
}

/// Double-well analysis for each amplitude of a monotone ramp.
pub fn split_scan(
    solver: &FieldSolver,
    currents: &CurrentConfig,
    species: &AtomSpecies,
    slice: Slice,
    amplitudes: &[f64],
) -> Result<Vec<SplitScanRow>> {
    if amplitudes.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidInput("rf amplitude ramp must be nondecreasing".into()));
    }
    let drive = RfDriveState::from_currents(currents)?;
    let fields = SliceFields::new(solver, currents, slice)?;
    Ok(amplitudes
        .par_iter()
        .map(|&a| {
            let w = ramp_weights(solver, &drive, a);
            SplitScanRow::from_result(a, fields.analyze(&w, drive.frequency, species, drive.manifold))
        })
        .collect())
}

/// First ramp amplitude with two wells, following a single-well row.
pub fn critical_amplitude(rows: &[SplitScanRow]) -> Option<f64> {
    rows.windows(2)
        .find(|w| w[0].n_minima == 1 && w[1].n_minima == 2)
        .map(|w| w[1].amplitude)
}

pub const SPLIT_SCAN_HEADER: &str = "rf_amplitude_A,n_minima,separation_um,barrier_kHz,asymmetry_kHz";

pub fn split_scan_csv(rows: &[SplitScanRow]) -> String {
    let mut s = String::from(SPLIT_SCAN_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_sig(r.amplitude),
            r.n_minima,
            fmt_sig(r.separation / MICRON),
            fmt_sig(r.barrier / PLANCK / KHZ),
            fmt_sig(r.asymmetry / PLANCK / KHZ)
        ));
    }
    s
}

/// Targets for an operating-point search.
#[derive(Debug, Clone, Copy)]
pub struct SplitTarget {
    pub separation: f64,
    pub separation_tolerance: f64,
    /// Allowed barrier range (Hz).
    pub barrier_hz: (f64, f64),
}

impl Default for SplitTarget {
    fn default() -> Self {
        Self {
            separation: 4.0 * MICRON,
            separation_tolerance: 0.1,
            barrier_hz: (5e3, 20e3),
        }
    }
}

/// Search box: rf frequency offsets above the Larmor frequency at the static
/// trap bottom (Hz) and rf amplitudes (A).
#[derive(Debug, Clone)]
pub struct SplitSearchBox {
    pub detunings: Vec<f64>,
    pub amplitudes: Vec<f64>,
}

impl Default for SplitSearchBox {
    /// 0–60 kHz above the bottom Larmor frequency in 0.5 kHz steps,
    /// 0.5–50 mA per channel in 0.5 mA steps.
    fn default() -> Self {
        Self {
            detunings: (0..=120).map(|i| i as f64 * 0.5 * KHZ).collect(),
            amplitudes: (1..=100).map(|i| i as f64 * 0.5e-3).collect(),
        }
    }
}

/// An (rf frequency, amplitude) pair meeting the target.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub rf_frequency: f64,
    pub detuning: f64,
    pub amplitude: f64,
    pub report: DoubleWellReport,
}

/// Grid search of the box; among points meeting the target returns the one
/// nearest the target separation and the geometric centre of the barrier
/// range.
pub fn find_operating_point(
    solver: &FieldSolver,
    fields: &SliceFields,
    drive: &RfDriveState,
    species: &AtomSpecies,
    search: &SplitSearchBox,
    target: &SplitTarget,
) -> Option<OperatingPoint> {
    let larmor = species.g_f_mu_b().abs() * fields.bottom_field() / PLANCK;
    let mid_barrier = (target.barrier_hz.0 * target.barrier_hz.1).sqrt();
    let candidates: Vec<(f64, OperatingPoint)> = search
        .detunings
        .par_iter()
        .flat_map_iter(|&det| {
            let f = larmor + det;
            search.amplitudes.iter().filter_map(move |&a| {
                let w = ramp_weights(solver, drive, a);
                let rep = fields.analyze(&w, f, species, drive.manifold).ok()?;
                let sep_err = (rep.separation / target.separation - 1.0).abs();
                let b = rep.barrier_hz();
                let ok = rep.n_minima == 2
                    && sep_err <= target.separation_tolerance
                    && b >= target.barrier_hz.0
                    && b <= target.barrier_hz.1;
                ok.then(|| {
                    let score = sep_err / target.separation_tolerance + (b / mid_barrier).ln().abs();
                    (
                        score,
                        OperatingPoint {
                            rf_frequency: f,
                            detuning: det,
                            amplitude: a,
                            report: rep,
                        },
                    )
                })
            })
        })
        .collect();
    candidates
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|c| c.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Spin-F matrices (F_z, F_+) in the |F, m⟩ basis, m = F … −F.
    fn spin_matrices(f: i32) -> (DMatrix<C64>, DMatrix<C64>) {
        let n = (2 * f + 1) as usize;
        let mut fz = DMatrix::zeros(n, n);
        let mut fp = DMatrix::zeros(n, n);
        for i in 0..n {
            let m = (f - i as i32) as f64;
            fz[(i, i)] = C64::new(m, 0.0);
            if i > 0 {
                let ff = f as f64;
                fp[(i - 1, i)] = C64::new((ff * (ff + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
            }
        }
        (fz, fp)
    }

    /// Largest eigenvalue of the rotating-frame Hamiltonian
    /// δ F_z + (g μ_B/4)(B̃₋ F_+ + h.c.), built in units of h·kHz.
    fn oracle(b: &Vec3, rf: &Phasor, f_rf: f64, sp: &AtomSpecies) -> f64 {
        let unit = PLANCK * KHZ;
        let (fz, fp) = spin_matrices(2);
        let gmu = sp.g_f_mu_b();
        let delta = (gmu * b.norm() - PLANCK * f_rf) / unit;
        let (ex, ey, _) = local_frame(b);
        let comp = |e: &Vec3| -> C64 { rf.iter().zip(e.iter()).map(|(c, x)| c * *x).sum() };
        let bm = comp(&ex) - C64::new(0.0, 1.0) * comp(&ey);
        let c = bm * (gmu / 4.0 / unit);
        let h = &fz * C64::new(delta, 0.0) + &fp * c + fp.adjoint() * c.conj();
        let eig = SymmetricEigen::new(h);
        eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max) * unit
    }

    fn random_case(rng: &mut ChaCha8Rng) -> (Vec3, Phasor, f64) {
        let dir = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let b = dir.normalize() * rng.random_range(0.05..5.0) * 1e-4;
        let rf = Phasor::from_fn(|_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * 2e-5);
        let f = rng.random_range(0.0..5e6);
        (b, rf, f)
    }

    #[test]
    fn matches_matrix_oracle() {
        let sp = AtomSpecies::rb87();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let (b, rf, f) = random_case(&mut rng);
            let e = dressed_potential(&b, &rf, f, &sp, 2).unwrap();
            let o = oracle(&b, &rf, f, &sp);
            worst = worst.max((e / o - 1.0).abs());
        }
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn library_diagonalization_agrees() {
        let sp = AtomSpecies::rb87();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let (b, rf, f) = random_case(&mut rng);
            let levels = dressed_levels_by_diagonalization(&b, &rf, f, &sp).unwrap();
            let top = dressed_potential(&b, &rf, f, &sp, 2).unwrap();
            assert!((levels[4] / top - 1.0).abs() < 1e-9);
            assert!((levels[3] / top - 0.5).abs() < 1e-9);
            assert!(levels[2].abs() < 1e-9 * top);
        }
    }

    #[test]
    fn limits() {
        let sp = AtomSpecies::rb87();
        let b = Vec3::new(0.0, 0.0, 1e-4);
        let zero = Phasor::zeros();
        let f = 1e6;
        let e = dressed_potential(&b, &zero, f, &sp, 2).unwrap();
        let bare = 2.0 * (sp.g_f_mu_b() * 1e-4 - PLANCK * f).abs();
        assert!((e / bare - 1.0).abs() < 1e-14);

        let f_res = sp.g_f_mu_b() * 1e-4 / PLANCK;
        let rf = Phasor::new(C64::new(1e-6, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        let e = dressed_potential(&b, &rf, f_res, &sp, 2).unwrap();
        let rabi = 0.5 * sp.g_f_mu_b() * 1e-6;
        assert!((e / (2.0 * rabi) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn global_phase_and_longitudinal_component() {
        let sp = AtomSpecies::rb87();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let (b, rf, f) = random_case(&mut rng);
            let e0 = dressed_potential(&b, &rf, f, &sp, 2).unwrap();
            let rot = C64::from_polar(1.0, rng.random_range(0.0..6.3));
            let e1 = dressed_potential(&b, &(rf * rot), f, &sp, 2).unwrap();
            assert!((e1 / e0 - 1.0).abs() < 1e-12);
            let along = b.normalize().map(|x| C64::new(x, 0.0)) * C64::new(3e-5, 1e-5);
            let e2 = dressed_potential(&b, &(rf + along), f, &sp, 2).unwrap();
            assert!((e2 / e0 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_field_rejected() {
        let sp = AtomSpecies::rb87();
        assert!(matches!(
            dressed_potential(&Vec3::zeros(), &Phasor::zeros(), 1e6, &sp, 2),
            Err(Error::ZeroField)
        ));
    }

    #[test]
    fn counts_minima() {
        let xs: Vec<f64> = (0..401).map(|i| (i as f64 - 200.0) * 0.05).collect();
        let single: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let r = characterize_double_well(&xs, &single, Vec3::x(), 1e-12).unwrap();
        assert_eq!(r.n_minima, 1);
        let dw: Vec<f64> = xs.iter().map(|x| (x * x - 4.0).powi(2)).collect();
        let r = characterize_double_well(&xs, &dw, Vec3::x(), 1e-12).unwrap();
        assert_eq!(r.n_minima, 2);
        assert!((r.separation - 4.0).abs() < 2e-3, "{}", r.separation);
        assert!((r.barrier - 16.0).abs() < 1e-2, "{}", r.barrier);
        assert!(r.asymmetry < 1e-12);
        let triple: Vec<f64> = xs.iter().map(|x| (x * 2.0).cos()).collect();
        assert!(matches!(
            characterize_double_well(&xs, &triple, Vec3::x(), 1e-12),
            Err(Error::TooManyMinima { .. })
        ));
    }

    #[test]
    fn noise_plateaus_do_not_create_minima() {
        let xs: Vec<f64> = (0..101).map(|i| i as f64).collect();
        let e: Vec<f64> = xs
            .iter()
            .map(|x| (x - 50.0).powi(2) + if (*x as i64) % 2 == 0 { 1e-9 } else { 0.0 })
            .collect();
        let r = characterize_double_well(&xs, &e, Vec3::x(), 1e-6).unwrap();
        assert_eq!(r.n_minima, 1);
    }
}
