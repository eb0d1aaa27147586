use super::{cross_section_frame, Vec3, WireSegmentPath};

/// Cross-section tiling used when turning wires into thin filaments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Discretization {
    pub n_width: usize,
    pub n_thickness: usize,
}

impl Default for Discretization {
    fn default() -> Self {
        Self {
            n_width: 8,
            n_thickness: 3,
        }
    }
}

impl Discretization {
    pub const THIN: Discretization = Discretization {
        n_width: 1,
        n_thickness: 1,
    };

    pub fn new(n_width: usize, n_thickness: usize) -> Self {
        Self {
            n_width: n_width.max(1),
            n_thickness: n_thickness.max(1),
        }
    }
}

/// A thin current filament carrying `fraction` of its wire's current.
#[derive(Debug, Clone, PartialEq)]
pub struct Filament {
    pub nodes: Vec<Vec3>,
    pub fraction: f64,
}

/// Tiles the rectangular cross-section of `wire` with `n_width × n_thickness`
/// filaments at the cell centres, each a parallel offset of the centerline
/// with mitred corners.
pub fn discretize_wire(wire: &WireSegmentPath, n_width: usize, n_thickness: usize) -> Vec<Filament> {
    let n_width = n_width.max(1);
    let n_thickness = n_thickness.max(1);
    let fraction = 1.0 / (n_width * n_thickness) as f64;

    let frames: Vec<(Vec3, Vec3)> = wire
        .segments()
        .map(|(a, b)| cross_section_frame(&(b - a)))
        .collect();
    let n = wire.nodes.len();
    // Per-node miter vectors for unit width and thickness offsets.
    let miters: Vec<(Vec3, Vec3)> = (0..n)
        .map(|k| {
            let prev = frames[k.saturating_sub(1)];
            let next = frames[k.min(frames.len() - 1)];
            let miter = |a: Vec3, b: Vec3| (a + b) / (1.0 + a.dot(&b));
            (miter(prev.0, next.0), miter(prev.1, next.1))
        })
        .collect();

    let mut out = Vec::with_capacity(n_width * n_thickness);
    for i in 0..n_width {
        let a = ((i as f64 + 0.5) / n_width as f64 - 0.5) * wire.width;
        for j in 0..n_thickness {
            let b = ((j as f64 + 0.5) / n_thickness as f64 - 0.5) * wire.thickness;
            let nodes = wire
                .nodes
                .iter()
                .zip(&miters)
                .map(|(p, (mu, mv))| p + mu * a + mv * b)
                .collect();
            out.push(Filament { nodes, fraction });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::MICRON;

    fn z_wire() -> WireSegmentPath {
        WireSegmentPath::new(
            "z",
            "z",
            vec![
                Vec3::new(-1e-3, -1.5e-6, -3.5e-3),
                Vec3::new(0.0, -1.5e-6, -3.5e-3),
                Vec3::new(0.0, -1.5e-6, 3.5e-3),
                Vec3::new(1e-3, -1.5e-6, 3.5e-3),
            ],
            50.0 * MICRON,
            3.0 * MICRON,
        )
        .unwrap()
    }

    #[test]
    fn single_filament_is_centerline() {
        let w = z_wire();
        let f = discretize_wire(&w, 1, 1);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].fraction, 1.0);
        for (a, b) in f[0].nodes.iter().zip(&w.nodes) {
            assert!((a - b).norm() < 1e-18);
        }
    }

    #[test]
    fn two_filaments_at_quarter_width() {
        let w = z_wire();
        let f = discretize_wire(&w, 2, 1);
        assert_eq!(f.len(), 2);
        // Central section runs along +z, width direction is x.
        let offsets: Vec<f64> = f.iter().map(|fl| fl.nodes[1].x - w.nodes[1].x).collect();
        let quarter = w.width / 4.0;
        assert!((offsets[0] + quarter).abs() < 1e-15);
        assert!((offsets[1] - quarter).abs() < 1e-15);
        for fl in &f {
            assert_eq!(fl.fraction, 0.5);
            // Central segment stays parallel to the centerline.
            let d = fl.nodes[2] - fl.nodes[1];
            assert!(d.x.abs() < 1e-15 && d.y.abs() < 1e-15);
        }
    }

    #[test]
    fn fractions_normalized() {
        let f = discretize_wire(&z_wire(), 8, 3);
        let total: f64 = f.iter().map(|fl| fl.fraction).sum();
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn symmetric_tiling_centroid_is_centerline() {
        let w = z_wire();
        for (nw, nt) in [(2, 2), (8, 3), (5, 4)] {
            let f = discretize_wire(&w, nw, nt);
            for k in 0..w.nodes.len() {
                let c: Vec3 = f.iter().map(|fl| fl.nodes[k] * fl.fraction).sum();
                assert!((c - w.nodes[k]).norm() < 1e-15, "{nw}x{nt} node {k}");
            }
        }
    }

    #[test]
    fn corner_filaments_mitre() {
        let w = z_wire();
        let f = discretize_wire(&w, 2, 1);
        // Each lead of each filament stays parallel to the lead axis.
        for fl in &f {
            let lead = fl.nodes[3] - fl.nodes[2];
            assert!(lead.z.abs() < 1e-15);
            let lead = fl.nodes[1] - fl.nodes[0];
            assert!(lead.z.abs() < 1e-15);
        }
    }
}
