//! JSON config reader and writer.
//!
//! Lengths are in μm, currents in A, fields in G, frequencies in kHz, rf
//! phases in degrees. The schema is documented in `docs/config.md`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AtomSpecies, ChipLayout, CurrentConfig, RfChannel, Vec3, WireSegmentPath};
use crate::constants::{from_unit, to_unit, BOHR_MAGNETON, GAUSS, KHZ, MICRON};
use crate::error::{Error, Result};

const DEGREE: f64 = std::f64::consts::PI / 180.0;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    wires: Vec<WireEntry>,
    #[serde(default)]
    bias: BiasEntry,
    #[serde(default)]
    currents: BTreeMap<String, f64>,
    #[serde(default)]
    rf: RfEntry,
    #[serde(default)]
    atom: AtomEntry,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mirror_um: Option<[f64; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireEntry {
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    channel: Option<String>,
    width_um: f64,
    thickness_um: f64,
    nodes_um: Vec<[f64; 3]>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BiasEntry {
    #[serde(default, rename = "x_G")]
    x: f64,
    #[serde(default, rename = "y_G")]
    y: f64,
    #[serde(default, rename = "z_G")]
    z: f64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RfEntry {
    #[serde(default, rename = "frequency_kHz")]
    frequency: f64,
    #[serde(default)]
    channels: BTreeMap<String, RfChannelEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RfChannelEntry {
    #[serde(rename = "amplitude_A")]
    amplitude: f64,
    #[serde(default)]
    phase_deg: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtomEntry {
    label: String,
    mass_kg: f64,
    /// Zeeman slope in units of μ_B.
    zeeman_slope_bohr: f64,
    #[serde(rename = "F")]
    f: u8,
    #[serde(rename = "m_F")]
    m_f: i8,
    gravity_m_per_s2: [f64; 3],
}

impl Default for AtomEntry {
    fn default() -> Self {
        AtomEntry::from(&AtomSpecies::rb87())
    }
}

impl From<&AtomSpecies> for AtomEntry {
    fn from(a: &AtomSpecies) -> Self {
        AtomEntry {
            label: a.label.clone(),
            mass_kg: a.mass,
            zeeman_slope_bohr: to_unit(a.zeeman_slope, BOHR_MAGNETON),
            f: a.hyperfine_f,
            m_f: a.m_f,
            gravity_m_per_s2: [a.gravity.x, a.gravity.y, a.gravity.z],
        }
    }
}

fn um3(p: &[f64; 3]) -> Vec3 {
    Vec3::new(
        from_unit(p[0], MICRON),
        from_unit(p[1], MICRON),
        from_unit(p[2], MICRON),
    )
}

/// Parses a config document into SI layout, currents and species.
pub fn load_layout(text: &str) -> Result<(ChipLayout, CurrentConfig, AtomSpecies)> {
    let cfg: ConfigFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;

    let mut wires = Vec::with_capacity(cfg.wires.len());
    for w in cfg.wires {
        let channel = w.channel.unwrap_or_else(|| w.name.clone());
        wires.push(WireSegmentPath::new(
            w.name,
            channel,
            w.nodes_um.iter().map(um3).collect(),
            from_unit(w.width_um, MICRON),
            from_unit(w.thickness_um, MICRON),
        )?);
    }
    let mut layout = ChipLayout::new(wires)?;
    layout.mirror_extent = cfg
        .mirror_um
        .map(|[a, b]| [from_unit(a, MICRON), from_unit(b, MICRON)]);

    let currents = CurrentConfig {
        dc: cfg.currents,
        bias: Vec3::new(
            from_unit(cfg.bias.x, GAUSS),
            from_unit(cfg.bias.y, GAUSS),
            from_unit(cfg.bias.z, GAUSS),
        ),
        rf: cfg
            .rf
            .channels
            .into_iter()
            .map(|(k, v)| {
                (
                    k,
                    RfChannel {
                        amplitude: v.amplitude,
                        phase: from_unit(v.phase_deg, DEGREE),
                    },
                )
            })
            .collect(),
        rf_frequency: from_unit(cfg.rf.frequency, KHZ),
    };
    currents.validate_against(&layout)?;

    let a = cfg.atom;
    let atom = AtomSpecies {
        label: a.label,
        mass: a.mass_kg,
        zeeman_slope: from_unit(a.zeeman_slope_bohr, BOHR_MAGNETON),
        gravity: Vec3::new(
            a.gravity_m_per_s2[0],
            a.gravity_m_per_s2[1],
            a.gravity_m_per_s2[2],
        ),
        hyperfine_f: a.f,
        m_f: a.m_f,
    };
    atom.validate()?;
    Ok((layout, currents, atom))
}

pub fn load_layout_file(path: &Path) -> Result<(ChipLayout, CurrentConfig, AtomSpecies)> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_layout(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Writes the config document that [`load_layout`] reads back unchanged.
pub fn serialize_layout(
    layout: &ChipLayout,
    currents: &CurrentConfig,
    atom: &AtomSpecies,
) -> String {
    let um = |v: f64| to_unit(v, MICRON);
    let cfg = ConfigFile {
        wires: layout
            .wires
            .iter()
            .map(|w| WireEntry {
                name: w.name.clone(),
                channel: (w.channel != w.name).then(|| w.channel.clone()),
                width_um: um(w.width),
                thickness_um: um(w.thickness),
                nodes_um: w.nodes.iter().map(|n| [um(n.x), um(n.y), um(n.z)]).collect(),
            })
            .collect(),
        bias: BiasEntry {
            x: to_unit(currents.bias.x, GAUSS),
            y: to_unit(currents.bias.y, GAUSS),
            z: to_unit(currents.bias.z, GAUSS),
        },
        currents: currents.dc.clone(),
        rf: RfEntry {
            frequency: to_unit(currents.rf_frequency, KHZ),
            channels: currents
                .rf
                .iter()
                .map(|(k, v)| {
                    (
                        k.clone(),
                        RfChannelEntry {
                            amplitude: v.amplitude,
                            phase_deg: to_unit(v.phase, DEGREE),
                        },
                    )
                })
                .collect(),
        },
        atom: AtomEntry::from(atom),
        mirror_um: layout.mirror_extent.map(|[a, b]| [um(a), um(b)]),
    };
    serde_json::to_string_pretty(&cfg).expect("config serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    const SINGLE: &str = r#"{
        "wires": [
            {"name": "w1", "width_um": 50, "thickness_um": 3,
             "nodes_um": [[0, -1.5, -3500], [0, -1.5, 3500]]}
        ],
        "currents": {"w1": 2.0},
        "bias": {"x_G": 24.8}
    }"#;

    #[test]
    fn minimal_config_in_si() {
        let (layout, currents, atom) = load_layout(SINGLE).unwrap();
        assert_eq!(layout.wires.len(), 1);
        let w = &layout.wires[0];
        assert_eq!(w.channel, "w1");
        assert!((w.width - 50e-6).abs() < 1e-18);
        assert!((w.thickness - 3e-6).abs() < 1e-18);
        assert!((w.nodes[1].z - 3.5e-3).abs() < 1e-15);
        assert!((currents.bias.x - 24.8e-4).abs() < 1e-18);
        assert_eq!(currents.dc_current("w1"), 2.0);
        assert_eq!(atom, AtomSpecies::rb87());
    }

    #[test]
    fn unknown_keys_rejected_with_context() {
        let text = SINGLE.replace("\"thickness_um\"", "\"thicknes_um\": 1, \"thickness_um\"");
        let err = load_layout(&text).unwrap_err().to_string();
        assert!(err.contains("thicknes_um"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn unknown_channel_rejected() {
        let text = SINGLE.replace("{\"w1\": 2.0}", "{\"w9\": 2.0}");
        assert!(matches!(load_layout(&text), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn invalid_wire_named() {
        let text = SINGLE.replace("\"width_um\": 50", "\"width_um\": -5");
        match load_layout(&text) {
            Err(Error::InvalidWire { wire, .. }) => assert_eq!(wire, "w1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overlapping_config_names_both() {
        let text = r#"{"wires": [
            {"name": "a", "width_um": 50, "thickness_um": 3, "nodes_um": [[0, -1.5, -100], [0, -1.5, 100]]},
            {"name": "b", "width_um": 50, "thickness_um": 3, "nodes_um": [[20, -1.5, -100], [20, -1.5, 100]]}
        ]}"#;
        let err = load_layout(text).unwrap_err().to_string();
        assert!(err.contains("`a`") && err.contains("`b`"), "{err}");
    }

    #[test]
    fn round_trip_single() {
        let (l, c, a) = load_layout(SINGLE).unwrap();
        let text = serialize_layout(&l, &c, &a);
        let (l2, c2, a2) = load_layout(&text).unwrap();
        assert_eq!((l, c, a), (l2, c2, a2));
    }
}
