//! Static fields of filamentary wire models plus a uniform bias.
//!
//! Each wire is tiled into thin filaments ([`discretize_wire`]); each
//! filament is a polyline of straight segments whose field is the closed
//! form finite-segment Biot–Savart result. The field is linear in every
//! channel current.

use std::io::Write;

use nalgebra::Matrix3;
use rayon::prelude::*;

use crate::chip_model::{
    cross_section_frame, discretize_wire, ChipLayout, CurrentConfig, Discretization, Vec3,
};
use crate::constants::{GAUSS, MICRON, MU_0};
use crate::error::{Error, Result};
use crate::report::fmt_sig;

const MU0_OVER_4PI: f64 = MU_0 / (4.0 * std::f64::consts::PI);

/// Default central-difference step for field gradients (m).
pub const DEFAULT_JACOBIAN_STEP: f64 = 0.5 * MICRON;

/// Field of a straight segment from `a` to `b` carrying unit current,
/// observed at `p` (T/A).
#[inline]
pub fn segment_field(a: &Vec3, b: &Vec3, p: &Vec3) -> Vec3 {
    let ra = a - p;
    let rb = b - p;
    let la = ra.norm();
    let lb = rb.norm();
    let c = ra.cross(&rb);
    let dot = ra.dot(&rb);
    // la·lb + a·b cancels when p sits beside a long segment; use
    // |a×b|² / (la·lb − a·b) there instead.
    let factor = if dot >= 0.0 {
        let denom = la * lb * (la * lb + dot);
        if denom <= 0.0 {
            return Vec3::zeros();
        }
        (la + lb) / denom
    } else {
        let c2 = c.norm_squared();
        if c2 == 0.0 {
            return Vec3::zeros();
        }
        (la + lb) * (la * lb - dot) / (la * lb * c2)
    };
    c * (MU0_OVER_4PI * factor)
}

#[derive(Debug, Clone)]
struct FilamentSegment {
    start: Vec3,
    end: Vec3,
    channel: usize,
    weight: f64,
}

#[derive(Debug, Clone)]
struct ConductorBlock {
    wire: usize,
    origin: Vec3,
    along: Vec3,
    length: f64,
    u: Vec3,
    v: Vec3,
    half_width: f64,
    half_thickness: f64,
}

impl ConductorBlock {
    fn contains(&self, p: &Vec3) -> bool {
        let r = p - self.origin;
        let s = r.dot(&self.along);
        s >= -self.half_width
            && s <= self.length + self.half_width
            && r.dot(&self.u).abs() <= self.half_width
            && r.dot(&self.v).abs() <= self.half_thickness
    }
}

/// A field sample. `grad` holds ∂B_i/∂x_j when requested.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub point: Vec3,
    pub b: Vec3,
    pub grad: Option<Matrix3<f64>>,
    pub magnitude: f64,
}

/// Discretized chip, ready for repeated field evaluation.
#[derive(Debug, Clone)]
pub struct FieldSolver {
    channels: Vec<String>,
    wire_names: Vec<String>,
    segments: Vec<FilamentSegment>,
    blocks: Vec<ConductorBlock>,
    bbox_min: Vec3,
    bbox_max: Vec3,
    discretization: Discretization,
}

impl FieldSolver {
    pub fn new(layout: &ChipLayout, discretization: Discretization) -> Self {
        let channels = layout.channels();
        let mut segments = Vec::new();
        let mut blocks = Vec::new();
        let mut bbox_min = Vec3::repeat(f64::INFINITY);
        let mut bbox_max = Vec3::repeat(f64::NEG_INFINITY);
        for (wi, wire) in layout.wires.iter().enumerate() {
            let ch = channels
                .iter()
                .position(|c| *c == wire.channel)
                .expect("channel list built from the same layout");
            for fil in discretize_wire(wire, discretization.n_width, discretization.n_thickness) {
                for seg in fil.nodes.windows(2) {
                    segments.push(FilamentSegment {
                        start: seg[0],
                        end: seg[1],
                        channel: ch,
                        weight: fil.fraction,
                    });
                }
            }
            let pad = 0.5 * wire.width.max(wire.thickness);
            for (a, b) in wire.segments() {
                let d = b - a;
                let (u, v) = cross_section_frame(&d);
                blocks.push(ConductorBlock {
                    wire: wi,
                    origin: a,
                    along: d.normalize(),
                    length: d.norm(),
                    u,
                    v,
                    half_width: 0.5 * wire.width,
                    half_thickness: 0.5 * wire.thickness,
                });
                for n in [a, b] {
                    bbox_min = bbox_min.inf(&n.add_scalar(-pad));
                    bbox_max = bbox_max.sup(&n.add_scalar(pad));
                }
            }
        }
        Self {
            channels,
            wire_names: layout.wires.iter().map(|w| w.name.clone()).collect(),
            segments,
            blocks,
            bbox_min,
            bbox_max,
            discretization,
        }
    }

    pub fn channels(&self) -> &[String] {
        &self.channels
    }

    pub fn discretization(&self) -> Discretization {
        self.discretization
    }

    /// Current per channel, in solver channel order.
    pub fn channel_currents(&self, currents: &CurrentConfig) -> Vec<f64> {
        self.channels.iter().map(|c| currents.dc_current(c)).collect()
    }

    /// Errors if `p` lies inside any conductor volume.
    pub fn check_outside(&self, p: &Vec3) -> Result<()> {
        if (0..3).any(|k| p[k] < self.bbox_min[k] || p[k] > self.bbox_max[k]) {
            return Ok(());
        }
        if let Some(block) = self.blocks.iter().find(|b| b.contains(p)) {
            return Err(Error::InsideConductor {
                wire: self.wire_names[block.wire].clone(),
                x: p.x,
                y: p.y,
                z: p.z,
            });
        }
        Ok(())
    }

    /// Field of the wires alone for per-channel currents `amps` (T).
    pub fn wire_field_with(&self, amps: &[f64], p: &Vec3) -> Result<Vec3> {
        self.check_outside(p)?;
        let mut b = Vec3::zeros();
        for s in &self.segments {
            let i = amps[s.channel];
            if i != 0.0 {
                b += segment_field(&s.start, &s.end, p) * (i * s.weight);
            }
        }
        if !b.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite { x: p.x, y: p.y, z: p.z });
        }
        Ok(b)
    }

    /// Field per unit current of every channel, in solver channel order.
    pub fn unit_fields(&self, p: &Vec3) -> Result<Vec<Vec3>> {
        self.check_outside(p)?;
        let mut out = vec![Vec3::zeros(); self.channels.len()];
        for s in &self.segments {
            out[s.channel] += segment_field(&s.start, &s.end, p) * s.weight;
        }
        Ok(out)
    }

    pub fn wire_field(&self, currents: &CurrentConfig, p: &Vec3) -> Result<Vec3> {
        self.wire_field_with(&self.channel_currents(currents), p)
    }

    /// Total field: bias plus wires.
    pub fn total_field(&self, currents: &CurrentConfig, p: &Vec3) -> Result<Vec3> {
        Ok(currents.bias + self.wire_field(currents, p)?)
    }
}

/// B at `point` (bias included), without gradient.
pub fn field_at(solver: &FieldSolver, currents: &CurrentConfig, point: &Vec3) -> Result<FieldSample> {
    let b = solver.total_field(currents, point)?;
    Ok(FieldSample {
        point: *point,
        b,
        grad: None,
        magnitude: b.norm(),
    })
}

/// Options for the finite-difference Jacobian.
#[derive(Debug, Clone, Copy)]
pub struct JacobianOptions {
    pub step: f64,
    /// Combine steps h and h/2 to cancel the O(h²) error.
    pub richardson: bool,
}

impl Default for JacobianOptions {
    fn default() -> Self {
        Self {
            step: DEFAULT_JACOBIAN_STEP,
            richardson: false,
        }
    }
}

fn central_jacobian(
    solver: &FieldSolver,
    amps: &[f64],
    p: &Vec3,
    h: f64,
) -> Result<Matrix3<f64>> {
    let mut j = Matrix3::zeros();
    for axis in 0..3 {
        let mut e = Vec3::zeros();
        e[axis] = h;
        let bp = solver.wire_field_with(amps, &(p + e))?;
        let bm = solver.wire_field_with(amps, &(p - e))?;
        j.set_column(axis, &((bp - bm) / (2.0 * h)));
    }
    Ok(j)
}

/// ∂B_i/∂x_j at `point` by central differences (T/m).
pub fn field_jacobian(
    solver: &FieldSolver,
    currents: &CurrentConfig,
    point: &Vec3,
    opts: JacobianOptions,
) -> Result<Matrix3<f64>> {
    solver.check_outside(point)?;
    let amps = solver.channel_currents(currents);
    let coarse = central_jacobian(solver, &amps, point, opts.step)?;
    if !opts.richardson {
        return Ok(coarse);
    }
    let fine = central_jacobian(solver, &amps, point, 0.5 * opts.step)?;
    Ok((fine * 4.0 - coarse) / 3.0)
}

/// Field sample including the gradient.
pub fn field_with_gradient(
    solver: &FieldSolver,
    currents: &CurrentConfig,
    point: &Vec3,
    opts: JacobianOptions,
) -> Result<FieldSample> {
    let mut s = field_at(solver, currents, point)?;
    s.grad = Some(field_jacobian(solver, currents, point, opts)?);
    Ok(s)
}

/// Divergence and curl residuals of a gradient matrix, each relative to its
/// Frobenius norm.
pub fn div_curl_residuals(grad: &Matrix3<f64>) -> (f64, f64) {
    let norm = grad.norm();
    if norm == 0.0 {
        return (0.0, 0.0);
    }
    let div = grad.trace().abs();
    let curl = (grad - grad.transpose()).norm() / std::f64::consts::SQRT_2;
    (div / norm, curl / norm)
}

/// Relative tolerance on [`div_curl_residuals`] for the default 0.5 μm step
/// at distances of 50 μm or more from any conductor: the central-difference
/// truncation error scales as (h/r)².
pub const DIV_CURL_TOLERANCE: f64 = 1e-4;

/// Axis-aligned lattice of `counts` points starting at `origin`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub origin: Vec3,
    pub step: Vec3,
    pub counts: [usize; 3],
}

impl Grid {
    pub fn single(p: Vec3) -> Self {
        Self {
            origin: p,
            step: Vec3::zeros(),
            counts: [1, 1, 1],
        }
    }

    /// Grid spanning `min..=max` with `counts` points per axis.
    pub fn spanning(min: Vec3, max: Vec3, counts: [usize; 3]) -> Self {
        let mut step = Vec3::zeros();
        for k in 0..3 {
            if counts[k] > 1 {
                step[k] = (max[k] - min[k]) / (counts[k] - 1) as f64;
            }
        }
        Self {
            origin: min,
            step,
            counts,
        }
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Point `index` in row-major order (x slowest, z fastest).
    pub fn point(&self, index: usize) -> Vec3 {
        let [_, ny, nz] = self.counts;
        let k = index % nz;
        let j = (index / nz) % ny;
        let i = index / (ny * nz);
        self.origin
            + Vec3::new(
                i as f64 * self.step.x,
                j as f64 * self.step.y,
                k as f64 * self.step.z,
            )
    }

    pub fn points(&self) -> Vec<Vec3> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
}

/// Field samples over `grid`, in row-major order. Work fans out across the
/// rayon pool; each point is reduced in a fixed order so the output does not
/// depend on the number of workers.
pub fn field_map(
    solver: &FieldSolver,
    currents: &CurrentConfig,
    grid: &Grid,
    gradient: Option<JacobianOptions>,
) -> Result<Vec<FieldSample>> {
    (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let p = grid.point(i);
            match gradient {
                Some(opts) => field_with_gradient(solver, currents, &p, opts),
                None => field_at(solver, currents, &p),
            }
        })
        .collect()
}

pub const FIELD_MAP_HEADER: &str = "x_um,y_um,z_um,Bx_G,By_G,Bz_G,Bmag_G";

pub fn write_field_map_csv<W: Write>(out: &mut W, samples: &[FieldSample]) -> std::io::Result<()> {
    writeln!(out, "{FIELD_MAP_HEADER}")?;
    for s in samples {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_sig(s.point.x / MICRON),
            fmt_sig(s.point.y / MICRON),
            fmt_sig(s.point.z / MICRON),
            fmt_sig(s.b.x / GAUSS),
            fmt_sig(s.b.y / GAUSS),
            fmt_sig(s.b.z / GAUSS),
            fmt_sig(s.magnitude / GAUSS),
        )?;
    }
    Ok(())
}
