//! Chip geometry, current settings and atom parameters.
//!
//! Coordinates: `z` runs along the central section of the wires, `y` is the
//! chip normal (trap side positive, chip surface at `y = 0`, wires in
//! `y <= 0`), `x` is the in-plane transverse direction.

mod builtin;
mod config;
mod discretize;

use std::collections::BTreeMap;

use nalgebra::Vector3;

use crate::constants::{BOHR_MAGNETON, RB87_MASS, STANDARD_GRAVITY};
use crate::error::{Error, Result};

pub use builtin::{builtin_paper_layout, splitting_currents, PaperLayoutParams};
pub use config::{load_layout, load_layout_file, serialize_layout};
pub use discretize::{discretize_wire, Discretization, Filament};

pub type Vec3 = Vector3<f64>;

/// Minimum distance between consecutive nodes of a wire path (m).
pub const MIN_NODE_SEPARATION: f64 = 1e-9;

/// Centerline polyline of a wire with a rectangular cross-section.
#[derive(Debug, Clone, PartialEq)]
pub struct WireSegmentPath {
    pub name: String,
    pub channel: String,
    pub nodes: Vec<Vec3>,
    pub width: f64,
    pub thickness: f64,
}

impl WireSegmentPath {
    pub fn new(
        name: impl Into<String>,
        channel: impl Into<String>,
        nodes: Vec<Vec3>,
        width: f64,
        thickness: f64,
    ) -> Result<Self> {
        let wire = Self {
            name: name.into(),
            channel: channel.into(),
            nodes,
            width,
            thickness,
        };
        wire.validate()?;
        Ok(wire)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: String| Error::InvalidWire {
            wire: self.name.clone(),
            reason,
        };
        if self.nodes.len() < 2 {
            return Err(invalid(format!("{} nodes, need at least 2", self.nodes.len())));
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(invalid(format!("width {} must be positive", self.width)));
        }
        if !(self.thickness > 0.0 && self.thickness.is_finite()) {
            return Err(invalid(format!("thickness {} must be positive", self.thickness)));
        }
        if self.nodes.iter().any(|n| !n.iter().all(|c| c.is_finite())) {
            return Err(invalid("non-finite node coordinate".into()));
        }
        for (i, pair) in self.nodes.windows(2).enumerate() {
            if (pair[1] - pair[0]).norm() <= MIN_NODE_SEPARATION {
                return Err(invalid(format!("nodes {} and {} coincide", i, i + 1)));
            }
        }
        for (i, triple) in self.nodes.windows(3).enumerate() {
            let d1 = (triple[1] - triple[0]).normalize();
            let d2 = (triple[2] - triple[1]).normalize();
            if d1.dot(&d2) < -0.99 {
                return Err(invalid(format!("path folds back on itself at node {}", i + 1)));
            }
        }
        Ok(())
    }

    pub fn cross_section_area(&self) -> f64 {
        self.width * self.thickness
    }

    pub fn segments(&self) -> impl Iterator<Item = (Vec3, Vec3)> + '_ {
        self.nodes.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|(a, b)| (b - a).norm()).sum()
    }
}

/// Width and thickness directions for a segment running along `dir`.
///
/// Width lies in the chip plane, thickness along the chip normal when the
/// segment itself is in-plane.
pub(crate) fn cross_section_frame(dir: &Vec3) -> (Vec3, Vec3) {
    let d = dir.normalize();
    let normal = Vec3::y();
    let mut u = normal.cross(&d);
    if u.norm() < 1e-12 {
        u = Vec3::x();
    }
    let u = u.normalize();
    let v = d.cross(&u).normalize();
    (u, v)
}

/// Every wire on the chip.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChipLayout {
    pub wires: Vec<WireSegmentPath>,
    /// Extent of the gold mirror (x, z) in metres. Informational only.
    pub mirror_extent: Option<[f64; 2]>,
}

impl ChipLayout {
    pub fn new(wires: Vec<WireSegmentPath>) -> Result<Self> {
        let layout = Self {
            wires,
            mirror_extent: None,
        };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        for w in &self.wires {
            w.validate()?;
        }
        for (i, a) in self.wires.iter().enumerate() {
            if self.wires[..i].iter().any(|b| b.name == a.name) {
                return Err(Error::InvalidConfig(format!("duplicate wire name `{}`", a.name)));
            }
        }
        for (i, a) in self.wires.iter().enumerate() {
            for b in &self.wires[i + 1..] {
                if footprints_overlap(a, b) {
                    return Err(Error::OverlappingWires {
                        first: a.name.clone(),
                        second: b.name.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn wire(&self, name: &str) -> Option<&WireSegmentPath> {
        self.wires.iter().find(|w| w.name == name)
    }

    /// Copy in which every open wire is closed by an off-chip return path:
    /// straight down from its last node to `depth` below the chip, across to
    /// below its first node, and back up. Wire `i` returns at depth
    /// `depth + i * 100 μm` so return legs never intersect.
    ///
    /// Biot–Savart fields of open paths carry a curl from the path ends;
    /// closed circuits are divergence- and curl-free away from conductors.
    /// The return legs are off-chip, so the chip-plane overlap check is not
    /// applied to the result.
    pub fn closed_circuits(&self, depth: f64) -> ChipLayout {
        let wires = self
            .wires
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let (a, b) = (w.nodes[0], w.nodes[w.nodes.len() - 1]);
                if (b - a).norm() <= MIN_NODE_SEPARATION {
                    return w.clone();
                }
                let y = -(depth + i as f64 * 100e-6);
                let mut nodes = w.nodes.clone();
                nodes.push(Vec3::new(b.x, y, b.z));
                nodes.push(Vec3::new(a.x, y, a.z));
                nodes.push(a);
                WireSegmentPath { nodes, ..w.clone() }
            })
            .collect();
        ChipLayout {
            wires,
            mirror_extent: self.mirror_extent,
        }
    }

    /// Distinct channel identifiers, sorted.
    pub fn channels(&self) -> Vec<String> {
        let mut ch: Vec<String> = self.wires.iter().map(|w| w.channel.clone()).collect();
        ch.sort();
        ch.dedup();
        ch
    }
}

/// Oriented footprint rectangle of one segment in the chip plane (x, z).
struct Footprint {
    center: [f64; 2],
    axes: [[f64; 2]; 2],
    half: [f64; 2],
    y_range: (f64, f64),
}

fn segment_footprint(a: &Vec3, b: &Vec3, width: f64, thickness: f64) -> Option<Footprint> {
    let d = [b.x - a.x, b.z - a.z];
    let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
    if len < 1e-15 {
        return None;
    }
    let t = [d[0] / len, d[1] / len];
    let n = [-t[1], t[0]];
    let ymid = 0.5 * (a.y + b.y);
    Some(Footprint {
        center: [0.5 * (a.x + b.x), 0.5 * (a.z + b.z)],
        axes: [t, n],
        half: [0.5 * len + 0.5 * width, 0.5 * width],
        y_range: (ymid - 0.5 * thickness, ymid + 0.5 * thickness),
    })
}

fn rectangles_overlap(p: &Footprint, q: &Footprint) -> bool {
    // Tolerance so that wires that merely touch are not flagged.
    const TOL: f64 = 1e-12;
    if p.y_range.1 <= q.y_range.0 + TOL || q.y_range.1 <= p.y_range.0 + TOL {
        return false;
    }
    let dc = [q.center[0] - p.center[0], q.center[1] - p.center[1]];
    let dot = |u: &[f64; 2], v: &[f64; 2]| u[0] * v[0] + u[1] * v[1];
    for axis in p.axes.iter().chain(q.axes.iter()) {
        let rp: f64 = (0..2).map(|k| p.half[k] * dot(&p.axes[k], axis).abs()).sum();
        let rq: f64 = (0..2).map(|k| q.half[k] * dot(&q.axes[k], axis).abs()).sum();
        if dot(&dc, axis).abs() >= rp + rq - TOL {
            return false;
        }
    }
    true
}

fn footprints_overlap(a: &WireSegmentPath, b: &WireSegmentPath) -> bool {
    let fa: Vec<Footprint> = a
        .segments()
        .filter_map(|(s, e)| segment_footprint(&s, &e, a.width, a.thickness))
        .collect();
    let fb: Vec<Footprint> = b
        .segments()
        .filter_map(|(s, e)| segment_footprint(&s, &e, b.width, b.thickness))
        .collect();
    fa.iter().any(|p| fb.iter().any(|q| rectangles_overlap(p, q)))
}

/// Amplitude (A) and phase (rad) of one rf channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfChannel {
    pub amplitude: f64,
    pub phase: f64,
}

/// DC currents, uniform bias field and rf drive.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurrentConfig {
    pub dc: BTreeMap<String, f64>,
    pub bias: Vec3,
    pub rf: BTreeMap<String, RfChannel>,
    pub rf_frequency: f64,
}

impl CurrentConfig {
    pub fn validate(&self) -> Result<()> {
        for (ch, i) in &self.dc {
            if !i.is_finite() {
                return Err(Error::InvalidConfig(format!("dc current on `{ch}` is not finite")));
            }
        }
        if !self.bias.iter().all(|b| b.is_finite()) {
            return Err(Error::InvalidConfig("bias field is not finite".into()));
        }
        for (ch, rf) in &self.rf {
            if !rf.amplitude.is_finite() || !rf.phase.is_finite() {
                return Err(Error::InvalidConfig(format!("rf drive on `{ch}` is not finite")));
            }
        }
        if !(self.rf_frequency >= 0.0 && self.rf_frequency.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "rf frequency {} must be finite and non-negative",
                self.rf_frequency
            )));
        }
        Ok(())
    }

    /// Checks that every referenced channel exists in `layout`.
    pub fn validate_against(&self, layout: &ChipLayout) -> Result<()> {
        self.validate()?;
        let channels = layout.channels();
        for ch in self.dc.keys().chain(self.rf.keys()) {
            if !channels.contains(ch) {
                return Err(Error::InvalidConfig(format!("current on unknown channel `{ch}`")));
            }
        }
        Ok(())
    }

    pub fn dc_current(&self, channel: &str) -> f64 {
        self.dc.get(channel).copied().unwrap_or(0.0)
    }

    pub fn with_dc(mut self, channel: &str, amps: f64) -> Self {
        self.dc.insert(channel.to_string(), amps);
        self
    }

    pub fn with_bias(mut self, bias: Vec3) -> Self {
        self.bias = bias;
        self
    }

    /// Same configuration with every dc current scaled by `factor`.
    pub fn scaled_dc(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for v in out.dc.values_mut() {
            *v *= factor;
        }
        out
    }

    pub fn rf_active(&self) -> bool {
        self.rf.values().any(|c| c.amplitude != 0.0)
    }
}

/// Trapped atomic species and state.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomSpecies {
    pub label: String,
    pub mass: f64,
    /// m_F·g_F·μ_B of the trapped state (J/T).
    pub zeeman_slope: f64,
    pub gravity: Vec3,
    pub hyperfine_f: u8,
    pub m_f: i8,
}

impl AtomSpecies {
    /// ⁸⁷Rb in |F=2, m_F=2⟩, gravity along −y.
    pub fn rb87() -> Self {
        Self {
            label: "87Rb".into(),
            mass: RB87_MASS,
            zeeman_slope: BOHR_MAGNETON,
            gravity: Vec3::new(0.0, -STANDARD_GRAVITY, 0.0),
            hyperfine_f: 2,
            m_f: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::InvalidConfig(format!("atom mass {} must be positive", self.mass)));
        }
        if !(self.zeeman_slope > 0.0 && self.zeeman_slope.is_finite()) {
            return Err(Error::InvalidConfig(
                "zeeman slope must be positive (weak-field seeking state)".into(),
            ));
        }
        if self.m_f == 0 || self.m_f.unsigned_abs() > self.hyperfine_f {
            return Err(Error::InvalidConfig(format!(
                "m_F = {} invalid for F = {}",
                self.m_f, self.hyperfine_f
            )));
        }
        if !self.gravity.iter().all(|g| g.is_finite()) {
            return Err(Error::InvalidConfig("gravity is not finite".into()));
        }
        Ok(())
    }

    /// g_F·μ_B, the Zeeman energy per unit m_F per tesla (J/T).
    pub fn g_f_mu_b(&self) -> f64 {
        self.zeeman_slope / f64::from(self.m_f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::MICRON;

    fn straight(name: &str, x: f64, width: f64) -> WireSegmentPath {
        WireSegmentPath::new(
            name,
            name,
            vec![
                Vec3::new(x, -1.5 * MICRON, -1e-3),
                Vec3::new(x, -1.5 * MICRON, 1e-3),
            ],
            width,
            3.0 * MICRON,
        )
        .unwrap()
    }

    #[test]
    fn rejects_degenerate_wires() {
        let n = Vec3::zeros();
        assert!(WireSegmentPath::new("a", "a", vec![n], 1e-6, 1e-6).is_err());
        assert!(WireSegmentPath::new("a", "a", vec![n, n], 1e-6, 1e-6).is_err());
        let nodes = vec![n, Vec3::new(0.0, 0.0, 1e-3)];
        assert!(WireSegmentPath::new("a", "a", nodes.clone(), 0.0, 1e-6).is_err());
        assert!(WireSegmentPath::new("a", "a", nodes, 1e-6, -1.0).is_err());
    }

    #[test]
    fn overlapping_wires_are_named() {
        let a = straight("left", 0.0, 50.0 * MICRON);
        let b = straight("right", 30.0 * MICRON, 50.0 * MICRON);
        match ChipLayout::new(vec![a, b]) {
            Err(Error::OverlappingWires { first, second }) => {
                assert_eq!(first, "left");
                assert_eq!(second, "right");
            }
            other => panic!("expected overlap error, got {other:?}"),
        }
    }

    #[test]
    fn separated_and_touching_wires_are_fine() {
        let a = straight("a", 0.0, 50.0 * MICRON);
        let b = straight("b", 85.0 * MICRON, 50.0 * MICRON);
        let c = straight("c", -50.0 * MICRON, 50.0 * MICRON);
        assert!(ChipLayout::new(vec![a, b, c]).is_ok());
    }

    #[test]
    fn rb87_state() {
        let rb = AtomSpecies::rb87();
        rb.validate().unwrap();
        assert_eq!(rb.g_f_mu_b(), BOHR_MAGNETON / 2.0);
    }
}
