//! The six-wire interferometer chip.
//!
//! Published: outer Z-wires 100 μm wide at 300 μm centre-to-centre, inner
//! Z-wires 50 μm wide at 85 μm, 7 mm central sections along z, loading with
//! 2 A in one inner wire and B_x = 24.8 G.
//!
//! Unpublished, exposed as [`PaperLayoutParams`] with placeholder defaults:
//! gold thickness of each wire (taken from the 3 μm film), the lead pitch
//! and lead length of the nested Z-wires, and the end-wire position, width
//! and length.

use std::collections::BTreeMap;

use super::{AtomSpecies, ChipLayout, CurrentConfig, Vec3, WireSegmentPath};
use crate::constants::{from_unit, to_unit, GAUSS, MICRON};

/// Geometry knobs of the builtin layout. Fields marked *placeholder* are not
/// published and only need to give a non-overlapping nested layout.
#[derive(Debug, Clone, PartialEq)]
pub struct PaperLayoutParams {
    pub outer_width: f64,
    pub outer_separation: f64,
    pub inner_width: f64,
    pub inner_separation: f64,
    pub central_length: f64,
    /// Gold film thickness.
    pub thickness: f64,
    /// *placeholder*: z offset between the turning points of adjacent Z-wires.
    pub lead_pitch: f64,
    /// *placeholder*: length of each Z-wire lead along x.
    pub lead_length: f64,
    /// *placeholder*: |z| of the two end wires.
    pub end_wire_offset: f64,
    /// *placeholder*: end-wire width.
    pub end_wire_width: f64,
    /// *placeholder*: end-wire length along x.
    pub end_wire_length: f64,
    /// Chip size (x, z), informational.
    pub mirror: [f64; 2],
}

impl Default for PaperLayoutParams {
    fn default() -> Self {
        Self {
            outer_width: 100.0 * MICRON,
            outer_separation: 300.0 * MICRON,
            inner_width: 50.0 * MICRON,
            inner_separation: 85.0 * MICRON,
            central_length: 7000.0 * MICRON,
            thickness: 3.0 * MICRON,
            lead_pitch: 200.0 * MICRON,
            lead_length: 2000.0 * MICRON,
            end_wire_offset: 4500.0 * MICRON,
            end_wire_width: 100.0 * MICRON,
            end_wire_length: 6000.0 * MICRON,
            mirror: [24000.0 * MICRON, 26000.0 * MICRON],
        }
    }
}

impl PaperLayoutParams {
    /// Builds the layout: Z-wires `z1`..`z4` ordered by x, end wires `e1`
    /// (z > 0) and `e2` (z < 0). Each Z carries positive current along +z
    /// in its central section, entering from −x and leaving towards +x.
    pub fn build(&self) -> ChipLayout {
        // Arithmetic runs in μm so every coordinate is the SI image of a
        // plain config number and the layout round-trips through the file.
        let um = |v: f64| to_unit(v, MICRON);
        let si = |v: f64| from_unit(v, MICRON);
        let y = -0.5 * um(self.thickness);
        let xs = [
            -0.5 * um(self.outer_separation),
            -0.5 * um(self.inner_separation),
            0.5 * um(self.inner_separation),
            0.5 * um(self.outer_separation),
        ];
        let widths = [
            self.outer_width,
            self.inner_width,
            self.inner_width,
            self.outer_width,
        ];
        let lead = um(self.lead_length);
        let half = 0.5 * um(self.central_length);
        let node = |x: f64, z: f64| Vec3::new(si(x), si(y), si(z));
        let mut wires = Vec::with_capacity(6);
        for (i, (&x, &w)) in xs.iter().zip(widths.iter()).enumerate() {
            // Nested Zs: shifting each along z by the lead pitch keeps every
            // lead clear of its neighbours' central sections.
            let zc = (1.5 - i as f64) * um(self.lead_pitch);
            let nodes = vec![
                node(x - lead, zc - half),
                node(x, zc - half),
                node(x, zc + half),
                node(x + lead, zc + half),
            ];
            let name = format!("z{}", i + 1);
            wires.push(
                WireSegmentPath::new(name.clone(), name, nodes, w, self.thickness)
                    .expect("builtin wire geometry is valid"),
            );
        }
        for (name, sign) in [("e1", 1.0), ("e2", -1.0)] {
            let z = sign * um(self.end_wire_offset);
            let half_len = 0.5 * um(self.end_wire_length);
            let nodes = vec![node(-half_len, z), node(half_len, z)];
            wires.push(
                WireSegmentPath::new(name, name, nodes, self.end_wire_width, self.thickness)
                    .expect("builtin wire geometry is valid"),
            );
        }
        let mut layout = ChipLayout::new(wires).expect("builtin layout does not overlap");
        layout.mirror_extent = Some(self.mirror);
        layout
    }

    /// z coordinate of the centre of Z-wire `index` (0-based, ordered by x).
    pub fn z_center(&self, index: usize) -> f64 {
        (1.5 - index as f64) * self.lead_pitch
    }
}

/// Builtin layout with the loading configuration: 2 A through inner wire
/// `z2`, B_x = 24.8 G, every other channel at 0 A, rf off.
pub fn builtin_paper_layout() -> (ChipLayout, CurrentConfig, AtomSpecies) {
    let layout = PaperLayoutParams::default().build();
    let mut dc = BTreeMap::new();
    for ch in layout.channels() {
        dc.insert(ch, 0.0);
    }
    dc.insert("z2".to_string(), 2.0);
    let currents = CurrentConfig {
        dc,
        bias: Vec3::new(24.8 * GAUSS, 0.0, 0.0),
        rf: BTreeMap::new(),
        rf_frequency: 0.0,
    };
    (layout, currents, AtomSpecies::rb87())
}

/// Splitting configuration on the builtin layout: both inner wires carry
/// parallel dc, forming a 2D quadrupole with the bias field, and carry rf
/// in antiphase. The dc values, bias and relative rf weights are not
/// published; these are the defaults used by `split-scan`.
pub fn splitting_currents(rf_amplitude: f64, rf_frequency: f64) -> CurrentConfig {
    let (layout, _, _) = builtin_paper_layout();
    let mut dc = BTreeMap::new();
    for ch in layout.channels() {
        dc.insert(ch, 0.0);
    }
    dc.insert("z2".into(), SPLIT_DC_CURRENT);
    dc.insert("z3".into(), SPLIT_DC_CURRENT);
    let mut rf = BTreeMap::new();
    rf.insert(
        "z2".into(),
        super::RfChannel {
            amplitude: rf_amplitude,
            phase: 0.0,
        },
    );
    rf.insert(
        "z3".into(),
        super::RfChannel {
            amplitude: rf_amplitude,
            phase: std::f64::consts::PI,
        },
    );
    CurrentConfig {
        dc,
        bias: Vec3::new(SPLIT_BIAS[0] * GAUSS, SPLIT_BIAS[1] * GAUSS, SPLIT_BIAS[2] * GAUSS),
        rf,
        rf_frequency,
    }
}

/// dc current in each inner wire during splitting (A).
pub const SPLIT_DC_CURRENT: f64 = 2.0;
/// Bias during splitting (G).
pub const SPLIT_BIAS: [f64; 3] = [24.8, 0.0, 1.0];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chip_model::{load_layout, serialize_layout};

    #[test]
    fn six_wires_with_published_dimensions() {
        let (layout, currents, _) = builtin_paper_layout();
        assert_eq!(layout.wires.len(), 6);
        let z1 = layout.wire("z1").unwrap();
        let z2 = layout.wire("z2").unwrap();
        let z3 = layout.wire("z3").unwrap();
        let z4 = layout.wire("z4").unwrap();
        assert!((z2.width - 50e-6).abs() < 1e-18);
        assert!((z1.width - 100e-6).abs() < 1e-18);
        assert!(((z4.nodes[1].x - z1.nodes[1].x) - 300e-6).abs() < 1e-15);
        assert!(((z3.nodes[1].x - z2.nodes[1].x) - 85e-6).abs() < 1e-15);
        for w in [z1, z2, z3, z4] {
            assert!(((w.nodes[2] - w.nodes[1]).norm() - 7e-3).abs() < 1e-15);
        }
        assert_eq!(currents.dc_current("z2"), 2.0);
        assert!((currents.bias.x - 24.8e-4).abs() < 1e-18);
        assert!(!currents.rf_active());
    }

    #[test]
    fn builtin_round_trips_through_config() {
        let (l, c, a) = builtin_paper_layout();
        let text = serialize_layout(&l, &c, &a);
        let (l2, c2, a2) = load_layout(&text).unwrap();
        assert_eq!(l, l2);
        assert_eq!(c, c2);
        assert_eq!(a, a2);
    }

    #[test]
    fn splitting_drive_is_antiphase() {
        let c = splitting_currents(0.05, 1e6);
        let d = c.rf["z3"].phase - c.rf["z2"].phase;
        assert!((d - std::f64::consts::PI).abs() < 1e-15);
        assert_eq!(c.dc_current("z2"), c.dc_current("z3"));
    }
}
