//! Magnetic trap minima and their harmonic characterization.

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::chip_model::{AtomSpecies, CurrentConfig, Vec3};
use crate::constants::{BOHR_MAGNETON, GAUSS, KHZ, MICRON, PLANCK};
use crate::error::{Error, Result};
use crate::magnetostatics::FieldSolver;
use crate::report::round_sig;

/// A scalar potential energy landscape (J) for an atom of mass `mass()`.
pub trait Potential: Sync {
    fn energy(&self, p: &Vec3) -> Result<f64>;
    fn mass(&self) -> f64;
    /// Energy per tesla of the trapped state, for expressing depths in G.
    fn zeeman_slope(&self) -> f64 {
        BOHR_MAGNETON
    }
    /// |B| at `p` when the potential is magnetic.
    fn field_magnitude(&self, _p: &Vec3) -> Option<f64> {
        None
    }
}

/// Zeeman potential `zeeman_slope·|B|`, plus `−m·g·r` when gravity is on.
#[derive(Debug, Clone)]
pub struct PotentialDef<'a> {
    pub solver: &'a FieldSolver,
    pub currents: &'a CurrentConfig,
    pub species: &'a AtomSpecies,
    pub gravity: bool,
    amps: Vec<f64>,
}

impl<'a> PotentialDef<'a> {
    /// Gravity is off by default.
    pub fn new(solver: &'a FieldSolver, currents: &'a CurrentConfig, species: &'a AtomSpecies) -> Self {
        Self {
            solver,
            currents,
            species,
            gravity: false,
            amps: solver.channel_currents(currents),
        }
    }

    pub fn with_gravity(mut self, on: bool) -> Self {
        self.gravity = on;
        self
    }

    pub fn field(&self, p: &Vec3) -> Result<Vec3> {
        Ok(self.currents.bias + self.solver.wire_field_with(&self.amps, p)?)
    }
}

impl Potential for PotentialDef<'_> {
    fn energy(&self, p: &Vec3) -> Result<f64> {
        let b = self.field(p)?;
        let mut u = self.species.zeeman_slope * b.norm();
        if self.gravity {
            u -= self.species.mass * self.species.gravity.dot(p);
        }
        if !u.is_finite() {
            return Err(Error::NonFinite { x: p.x, y: p.y, z: p.z });
        }
        Ok(u)
    }

    fn mass(&self) -> f64 {
        self.species.mass
    }

    fn zeeman_slope(&self) -> f64 {
        self.species.zeeman_slope
    }

    fn field_magnitude(&self, p: &Vec3) -> Option<f64> {
        self.field(p).ok().map(|b| b.norm())
    }
}

pub fn potential_at(pot: &impl Potential, p: &Vec3) -> Result<f64> {
    pot.energy(p)
}

/// Gradient tolerance of the minimizer, 10⁻³⁰ J/m (≈ 1.1×10⁻⁹ G/μm for a
/// μ_B Zeeman slope).
pub const GRADIENT_TOLERANCE: f64 = 1e-30;

/// Minimizer settings.
#[derive(Debug, Clone, Copy)]
pub struct MinimizeOptions {
    /// Spacing of the 3×3×3 multistart lattice around the seed (m).
    pub multistart_spacing: f64,
    /// Largest allowed excursion of the minimum from the seed (m).
    pub domain_radius: f64,
    pub max_iterations: usize,
    /// Convergence on step length (m) for cusp-shaped minima.
    pub step_tolerance: f64,
    /// Y coordinate of the chip surface; minima below it are rejected.
    pub chip_surface: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            multistart_spacing: 10.0 * MICRON,
            domain_radius: 2000.0 * MICRON,
            max_iterations: 2000,
            step_tolerance: 1e-13,
            chip_surface: 0.0,
        }
    }
}

/// Location of a trap minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapMinimum {
    pub position: Vec3,
    pub energy: f64,
    /// |B| at the minimum (T), when the potential is magnetic.
    pub bottom_field: Option<f64>,
    pub height_above_chip: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
}

// Minimization runs in μm and h·kHz so the numbers stay O(1).
const LENGTH_SCALE: f64 = MICRON;
const ENERGY_SCALE: f64 = PLANCK * KHZ;
const GRADIENT_STEP: f64 = 1e-3; // μm

struct Scaled<'a, P: Potential + ?Sized> {
    pot: &'a P,
}

impl<P: Potential + ?Sized> Scaled<'_, P> {
    fn f(&self, x: &Vec3) -> Result<f64> {
        Ok(self.pot.energy(&(x * LENGTH_SCALE))? / ENERGY_SCALE)
    }

    fn grad(&self, x: &Vec3) -> Result<Vec3> {
        let mut g = Vec3::zeros();
        for k in 0..3 {
            let mut e = Vec3::zeros();
            e[k] = GRADIENT_STEP;
            g[k] = (self.f(&(x + e))? - self.f(&(x - e))?) / (2.0 * GRADIENT_STEP);
        }
        Ok(g)
    }
}

/// BFGS descent from one start point, numerical gradient, Armijo backtracking.
fn bfgs(pot: &(impl Potential + ?Sized), start: &Vec3, opts: &MinimizeOptions) -> Result<TrapMinimum> {
    let s = Scaled { pot };
    let grad_tol = GRADIENT_TOLERANCE * LENGTH_SCALE / ENERGY_SCALE;
    let step_tol = opts.step_tolerance / LENGTH_SCALE;
    let origin = start / LENGTH_SCALE;

    let mut x = origin;
    let mut f = s.f(&x)?;
    let mut g = s.grad(&x)?;
    let mut h_inv = Matrix3::identity();
    let mut small_steps = 0;
    for it in 0..opts.max_iterations {
        if g.norm() < grad_tol || small_steps >= 3 {
            return finish(pot, x, f, g, it, opts);
        }
        let mut dir = -(h_inv * g);
        if dir.dot(&g) >= 0.0 {
            h_inv = Matrix3::identity();
            dir = -g;
        }
        // Backtracking line search; points inside conductors count as +∞.
        let slope = dir.dot(&g);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = x + dir * t;
            if let Ok(fnew) = s.f(&xn) {
                if fnew <= f + 1e-4 * t * slope {
                    accepted = Some((xn, fnew));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            // No descent possible at this resolution: we sit on the minimum.
            return finish(pot, x, f, g, it, opts);
        };
        let gn = s.grad(&xn)?;
        let sk = xn - x;
        let yk = gn - g;
        let sy = sk.dot(&yk);
        if sy > 1e-300 {
            if it == 0 {
                h_inv *= sy / yk.dot(&yk);
            }
            let rho = 1.0 / sy;
            let i = Matrix3::identity();
            h_inv = (i - sk * yk.transpose() * rho) * h_inv * (i - yk * sk.transpose() * rho)
                + sk * sk.transpose() * rho;
        }
        small_steps = if sk.norm() < step_tol { small_steps + 1 } else { 0 };
        x = xn;
        f = fnew;
        g = gn;
        if (x - origin).norm() * LENGTH_SCALE > opts.domain_radius {
            return Err(Error::EscapedDomain);
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iterations,
    })
}

fn finish(
    pot: &(impl Potential + ?Sized),
    x: Vec3,
    f: f64,
    g: Vec3,
    iterations: usize,
    opts: &MinimizeOptions,
) -> Result<TrapMinimum> {
    let position = x * LENGTH_SCALE;
    if position.y < opts.chip_surface {
        return Err(Error::EscapedDomain);
    }
    Ok(TrapMinimum {
        position,
        energy: f * ENERGY_SCALE,
        bottom_field: pot.field_magnitude(&position),
        height_above_chip: position.y - opts.chip_surface,
        gradient_norm: g.norm() * ENERGY_SCALE / LENGTH_SCALE,
        iterations,
    })
}

/// Local minimum of `pot` near `seed`: BFGS from every point of a 3×3×3
/// lattice around the seed, keeping the lowest energy (ties broken by
/// lexicographic position).
pub fn find_trap_minimum(pot: &impl Potential, seed: &Vec3, opts: &MinimizeOptions) -> Result<TrapMinimum> {
    let starts: Vec<Vec3> = (0..27)
        .map(|k| {
            let off = Vec3::new((k / 9) as f64 - 1.0, ((k / 3) % 3) as f64 - 1.0, (k % 3) as f64 - 1.0);
            seed + off * opts.multistart_spacing
        })
        .collect();
    let results: Vec<Result<TrapMinimum>> =
        starts.par_iter().map(|s| bfgs(pot, s, opts)).collect();

    let mut best: Option<TrapMinimum> = None;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(m) => {
                let better = match &best {
                    None => true,
                    Some(b) => {
                        let tie = (m.energy - b.energy).abs() <= 1e-12 * b.energy.abs().max(f64::MIN_POSITIVE);
                        if tie {
                            lexicographic_lt(&m.position, &b.position)
                        } else {
                            m.energy < b.energy
                        }
                    }
                };
                if better {
                    best = Some(m);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap_or(Error::NoConvergence { iterations: 0 }))
}

fn lexicographic_lt(a: &Vec3, b: &Vec3) -> bool {
    for k in 0..3 {
        if a[k] != b[k] {
            return a[k] < b[k];
        }
    }
    false
}

/// Harmonic frequencies (Hz, ascending) and matching principal axes.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapFrequencies {
    pub frequencies: [f64; 3],
    pub axes: [Vec3; 3],
    pub hessian: Matrix3<f64>,
    /// Finite-difference step the Hessian settled on (m).
    pub step: f64,
}

/// Hessian of `pot` at `p` by central differences with step `h`.
pub fn hessian(pot: &(impl Potential + ?Sized), p: &Vec3, h: f64) -> Result<Matrix3<f64>> {
    let u0 = pot.energy(p)?;
    let e = |k: usize| {
        let mut v = Vec3::zeros();
        v[k] = h;
        v
    };
    let mut m = Matrix3::zeros();
    for i in 0..3 {
        let up = pot.energy(&(p + e(i)))?;
        let um = pot.energy(&(p - e(i)))?;
        m[(i, i)] = (up - 2.0 * u0 + um) / (h * h);
        for j in 0..i {
            let pp = pot.energy(&(p + e(i) + e(j)))?;
            let pm = pot.energy(&(p + e(i) - e(j)))?;
            let mp = pot.energy(&(p - e(i) + e(j)))?;
            let mm = pot.energy(&(p - e(i) - e(j)))?;
            let v = (pp - pm - mp + mm) / (4.0 * h * h);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// Initial Hessian step (m); halved until eigenvalues settle within 0.5 %.
pub const HESSIAN_STEP: f64 = 1.0 * MICRON;
const HESSIAN_MIN_STEP: f64 = 1e-3 * MICRON;
const HESSIAN_SETTLE: f64 = 0.005;

fn sorted_eigen(h: &Matrix3<f64>) -> ([f64; 3], [Vec3; 3]) {
    let eig = SymmetricEigen::new(*h);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = idx.map(|i| eig.eigenvalues[i]);
    let mut axes = idx.map(|i| Vec3::from(eig.eigenvectors.column(i)).normalize());
    // Canonical orientation: largest component positive, right-handed set.
    for a in axes.iter_mut().take(2) {
        let k = a.iamax();
        if a[k] < 0.0 {
            *a = -*a;
        }
    }
    axes[2] = axes[0].cross(&axes[1]).normalize();
    (vals, axes)
}

/// Trap frequencies from the eigen-decomposition of the Hessian at `min`.
pub fn trap_frequencies(pot: &(impl Potential + ?Sized), min: &Vec3) -> Result<TrapFrequencies> {
    let mut h = HESSIAN_STEP;
    let mut hess = hessian(pot, min, h)?;
    let (mut vals, mut axes) = sorted_eigen(&hess);
    while h > HESSIAN_MIN_STEP {
        let h_next = 0.5 * h;
        let hess_next = hessian(pot, min, h_next)?;
        let (v_next, a_next) = sorted_eigen(&hess_next);
        let scale = v_next.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let settled = v_next
            .iter()
            .zip(&vals)
            .all(|(a, b)| (a - b).abs() <= HESSIAN_SETTLE * a.abs().max(1e-9 * scale));
        h = h_next;
        hess = hess_next;
        vals = v_next;
        axes = a_next;
        if settled {
            break;
        }
    }
    // Roundoff floor of the second difference.
    let u0 = pot.energy(min)?.abs();
    let noise = 64.0 * f64::EPSILON * u0 / (h * h);
    if vals[0] < -noise {
        return Err(Error::Saddle { eigenvalues: vals });
    }
    let m = pot.mass();
    let frequencies = vals.map(|l| (l.max(0.0) / m).sqrt() / (2.0 * std::f64::consts::PI));
    Ok(TrapFrequencies {
        frequencies,
        axes,
        hessian: hess,
        step: h,
    })
}

/// Frequency along `axis` from a least-squares parabola through `n` samples
/// of the potential within ±`half_width` of `min`. Independent of the
/// Hessian route.
pub fn axis_parabola_frequency(
    pot: &(impl Potential + ?Sized),
    min: &Vec3,
    axis: &Vec3,
    half_width: f64,
    n: usize,
) -> Result<f64> {
    let a = axis.normalize();
    let n = n.max(5) | 1;
    let mut s = [0.0f64; 5];
    let mut t = [0.0f64; 3];
    let u0 = pot.energy(min)?;
    for i in 0..n {
        let x = (2.0 * i as f64 / (n - 1) as f64 - 1.0) * half_width;
        let xs = x / half_width;
        let u = pot.energy(&(min + a * x))? - u0;
        let mut xp = 1.0;
        for k in 0..5 {
            s[k] += xp;
            if k < 3 {
                t[k] += xp * u;
            }
            xp *= xs;
        }
    }
    let m = Matrix3::new(s[0], s[1], s[2], s[1], s[2], s[3], s[2], s[3], s[4]);
    let c = m
        .lu()
        .solve(&Vec3::new(t[0], t[1], t[2]))
        .ok_or_else(|| Error::InvalidInput("singular parabola fit".into()))?;
    let curvature = 2.0 * c[2] / (half_width * half_width);
    Ok((curvature.max(0.0) / pot.mass()).sqrt() / (2.0 * std::f64::consts::PI))
}

/// Escape-barrier search settings.
#[derive(Debug, Clone, Copy)]
pub struct DepthOptions {
    /// Half-sizes of the search box around the minimum (m).
    pub box_half: Vec3,
    pub samples_per_ray: usize,
    /// Rays stop this far above the chip surface (m).
    pub surface_margin: f64,
    pub chip_surface: f64,
}

impl Default for DepthOptions {
    fn default() -> Self {
        Self {
            box_half: Vec3::new(500.0 * MICRON, 500.0 * MICRON, 4000.0 * MICRON),
            samples_per_ray: 400,
            surface_margin: 0.5 * MICRON,
            chip_surface: 0.0,
        }
    }
}

/// Trap depth: lowest escape barrier over the rays probed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapDepth {
    pub joules: f64,
    /// Depth divided by the Zeeman slope (T).
    pub tesla: f64,
    /// Direction of the lowest barrier.
    pub escape_direction: Vec3,
    /// Set when the lowest barrier is the box edge: the depth is then only
    /// a lower bound.
    pub box_limited: bool,
}

/// Rays from `min` along the 26 lattice directions and the ± principal
/// axes (when given); on each ray the barrier is the highest energy met
/// before leaving the box or reaching the chip.
pub fn trap_depth(
    pot: &(impl Potential + ?Sized),
    min: &Vec3,
    axes: Option<&[Vec3; 3]>,
    opts: &DepthOptions,
) -> Result<TrapDepth> {
    let u0 = pot.energy(min)?;
    let mut dirs: Vec<Vec3> = Vec::new();
    for i in -1..=1 {
        for j in -1..=1 {
            for k in -1..=1 {
                if (i, j, k) != (0, 0, 0) {
                    dirs.push(Vec3::new(i as f64, j as f64, k as f64).normalize());
                }
            }
        }
    }
    if let Some(ax) = axes {
        for a in ax {
            dirs.push(*a);
            dirs.push(-*a);
        }
    }
    let rays: Vec<Result<(f64, bool)>> = dirs
        .par_iter()
        .map(|d| ray_barrier(pot, min, d, opts))
        .collect();
    let mut best: Option<(f64, bool, Vec3)> = None;
    for (r, d) in rays.into_iter().zip(&dirs) {
        let (barrier, limited) = r?;
        if best.as_ref().is_none_or(|b| barrier < b.0) {
            best = Some((barrier, limited, *d));
        }
    }
    let (barrier, limited, dir) = best.expect("at least one ray");
    let joules = barrier - u0;
    Ok(TrapDepth {
        joules,
        tesla: joules / pot.zeeman_slope(),
        escape_direction: dir,
        box_limited: limited,
    })
}

fn ray_barrier(pot: &(impl Potential + ?Sized), min: &Vec3, dir: &Vec3, opts: &DepthOptions) -> Result<(f64, bool)> {
    // Distance to the box face along `dir`.
    let mut reach = f64::INFINITY;
    for k in 0..3 {
        if dir[k].abs() > 1e-12 {
            reach = reach.min(opts.box_half[k] / dir[k].abs());
        }
    }
    let floor = opts.chip_surface + opts.surface_margin;
    let mut hit_chip = false;
    if dir.y < -1e-12 {
        let to_chip = (min.y - floor) / -dir.y;
        if to_chip < reach {
            reach = to_chip.max(0.0);
            hit_chip = true;
        }
    }
    let n = opts.samples_per_ray.max(2);
    let mut max_u = f64::NEG_INFINITY;
    let mut argmax = 0;
    for i in 1..=n {
        let p = min + dir * (reach * i as f64 / n as f64);
        let u = match pot.energy(&p) {
            Ok(u) => u,
            Err(Error::InsideConductor { .. }) => {
                hit_chip = true;
                break;
            }
            Err(e) => return Err(e),
        };
        if u > max_u {
            max_u = u;
            argmax = i;
        }
    }
    Ok((max_u, argmax == n && !hit_chip))
}

/// Full characterization of one trap.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapCharacterization {
    pub minimum: Vec3,
    pub bottom_field: f64,
    pub frequencies: [f64; 3],
    pub axes: [Vec3; 3],
    pub depth: TrapDepth,
    pub height_above_chip: f64,
}

pub fn characterize_trap(
    pot: &PotentialDef<'_>,
    seed: &Vec3,
    min_opts: &MinimizeOptions,
    depth_opts: &DepthOptions,
) -> Result<TrapCharacterization> {
    let m = find_trap_minimum(pot, seed, min_opts)?;
    let f = trap_frequencies(pot, &m.position)?;
    let depth = trap_depth(pot, &m.position, Some(&f.axes), depth_opts)?;
    Ok(TrapCharacterization {
        minimum: m.position,
        bottom_field: m.bottom_field.unwrap_or(0.0),
        frequencies: f.frequencies,
        axes: f.axes,
        depth,
        height_above_chip: m.height_above_chip,
    })
}

/// JSON record of a [`TrapCharacterization`] in G, μm and Hz.
#[allow(non_snake_case)]
#[derive(Debug, Clone, Serialize)]
pub struct TrapRecord {
    pub minimum_um: [f64; 3],
    pub height_above_chip_um: f64,
    pub bottom_field_G: f64,
    pub frequencies_Hz: [f64; 3],
    pub axes: [[f64; 3]; 3],
    pub depth_G: f64,
    pub depth_kHz: f64,
    pub depth_box_limited: bool,
}

impl From<&TrapCharacterization> for TrapRecord {
    fn from(t: &TrapCharacterization) -> Self {
        let v = |p: &Vec3, s: f64| [round_sig(p.x / s), round_sig(p.y / s), round_sig(p.z / s)];
        TrapRecord {
            minimum_um: v(&t.minimum, MICRON),
            height_above_chip_um: round_sig(t.height_above_chip / MICRON),
            bottom_field_G: round_sig(t.bottom_field / GAUSS),
            frequencies_Hz: t.frequencies.map(round_sig),
            axes: t.axes.map(|a| v(&a, 1.0)),
            depth_G: round_sig(t.depth.tesla / GAUSS),
            depth_kHz: round_sig(t.depth.joules / PLANCK / KHZ),
            depth_box_limited: t.depth.box_limited,
        }
    }
}
