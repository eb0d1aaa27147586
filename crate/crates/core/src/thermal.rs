//! Joule heating of chip wires: wire → oxide → substrate → mount.
//!
//! Per unit wire length the wire node (capacity C_w) couples through the
//! oxide (R_ox) to a substrate node (capacity C_s), which drains through
//! substrate spreading (R_sp) and the mount (R_mount·ℓ) to the bath.
//! Dissipation is ρ(T)·J²·A with ρ = ρ₀(1 + α_R·ΔT).

use nalgebra::{Matrix2, Vector2};
use serde::Serialize;

use crate::chip_model::WireSegmentPath;
use crate::constants::MICRON;
use crate::error::{Error, Result};
use crate::report::round_sig;

/// Material and geometry constants of the network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Materials {
    /// Gold resistivity at the bath temperature (Ω·m).
    pub rho0: f64,
    /// Fractional resistivity change per kelvin.
    pub alpha_r: f64,
    pub oxide_conductivity: f64,
    pub oxide_thickness: f64,
    pub substrate_conductivity: f64,
    /// Outer radius of the 2D spreading region (m).
    pub spreading_reference: f64,
    pub wire_density: f64,
    pub wire_specific_heat: f64,
    /// Lumped heat capacity of the substrate per unit heated length (J/(K·m)).
    pub substrate_capacity: f64,
}

impl Default for Materials {
    fn default() -> Self {
        Self {
            rho0: 2.2e-8,
            alpha_r: 0.5 / 150.0,
            oxide_conductivity: 1.4,
            oxide_thickness: 100e-9,
            substrate_conductivity: 150.0,
            spreading_reference: 500.0 * MICRON,
            wire_density: 19300.0,
            wire_specific_heat: 129.0,
            // 25 × 25 × 0.5 mm³ of silicon (2330 kg/m³, 700 J/(kg·K)) over 7 mm.
            substrate_capacity: 25e-3 * 25e-3 * 0.5e-3 * 2330.0 * 700.0 / 7e-3,
        }
    }
}

/// Working temperature rise (K).
pub const DEFAULT_LIMIT: f64 = 150.0;
/// Heated length used to express the mount resistance per unit length (m).
pub const DEFAULT_HEATED_LENGTH: f64 = 7e-3;

/// Cross-section of the straight central section of a wire.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalWire {
    pub width: f64,
    pub thickness: f64,
}

impl ThermalWire {
    pub fn new(width: f64, thickness: f64) -> Result<Self> {
        if !(width > 0.0 && thickness > 0.0) {
            return Err(Error::InvalidInput("wire width and thickness must be positive".into()));
        }
        Ok(Self { width, thickness })
    }

    pub fn from_path(w: &WireSegmentPath) -> Self {
        Self {
            width: w.width,
            thickness: w.thickness,
        }
    }

    pub fn area(&self) -> f64 {
        self.width * self.thickness
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalNetwork {
    pub materials: Materials,
    /// Lumped mount resistance (K/W), the single calibrated parameter.
    pub mount_resistance: f64,
    pub heated_length: f64,
}

impl ThermalNetwork {
    pub fn new(materials: Materials, mount_resistance: f64, heated_length: f64) -> Result<Self> {
        let net = Self {
            materials,
            mount_resistance,
            heated_length,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.materials;
        let positive = [
            m.rho0,
            m.alpha_r,
            m.oxide_conductivity,
            m.oxide_thickness,
            m.substrate_conductivity,
            m.spreading_reference,
            m.wire_density,
            m.wire_specific_heat,
            m.substrate_capacity,
            self.heated_length,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || !(self.mount_resistance >= 0.0) {
            return Err(Error::InvalidConfig("thermal constants must be positive, mount resistance ≥ 0".into()));
        }
        Ok(())
    }

    /// Oxide layer under the wire (K·m/W).
    pub fn oxide_resistance(&self, w: &ThermalWire) -> f64 {
        self.materials.oxide_thickness / (self.materials.oxide_conductivity * w.width)
    }

    /// Half-plane spreading into silicon, ln(d_ref/w)/(π·k) (K·m/W), floored at 0.
    pub fn spreading_resistance(&self, w: &ThermalWire) -> f64 {
        (self.materials.spreading_reference / w.width).ln().max(0.0)
            / (std::f64::consts::PI * self.materials.substrate_conductivity)
    }

    pub fn mount_per_length(&self) -> f64 {
        self.mount_resistance * self.heated_length
    }

    pub fn total_resistance(&self, w: &ThermalWire) -> f64 {
        self.oxide_resistance(w) + self.spreading_resistance(w) + self.mount_per_length()
    }

    pub fn wire_capacity(&self, w: &ThermalWire) -> f64 {
        self.materials.wire_density * self.materials.wire_specific_heat * w.area()
    }

    /// Dissipation per length at ΔT = 0 (W/m).
    fn base_power(&self, w: &ThermalWire, current: f64) -> f64 {
        self.materials.rho0 * current * current / w.area()
    }

    /// Current above which no finite steady state exists.
    pub fn runaway_current(&self, w: &ThermalWire) -> f64 {
        (w.area() / (self.materials.rho0 * self.materials.alpha_r * self.total_resistance(w))).sqrt()
    }
}

/// Sets the mount resistance so that `wire` at current density `j` settles
/// at `delta_t`.
pub fn calibrate(materials: Materials, wire: &ThermalWire, j: f64, delta_t: f64, heated_length: f64) -> Result<ThermalNetwork> {
    if !(j > 0.0 && delta_t > 0.0) {
        return Err(Error::InvalidInput("calibration needs J > 0 and ΔT > 0".into()));
    }
    let probe = ThermalNetwork::new(materials, 0.0, heated_length)?;
    let p = materials.rho0 * (1.0 + materials.alpha_r * delta_t) * j * j * wire.area();
    let r_total = delta_t / p;
    let rest = probe.oxide_resistance(wire) + probe.spreading_resistance(wire);
    let mount = (r_total - rest) / heated_length;
    if mount < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "calibration point needs {r_total:e} K·m/W, less than oxide plus spreading {rest:e} K·m/W"
        )));
    }
    ThermalNetwork::new(materials, mount, heated_length)
}

/// Self-consistent ΔT = ρ(ΔT)·J²·A·R. The fixed point is linear in ΔT, so
/// it is solved exactly; runaway when α_R·P₀·R ≥ 1.
pub fn steady_temperature(wire: &ThermalWire, current: f64, net: &ThermalNetwork) -> Result<f64> {
    if !(current >= 0.0) {
        return Err(Error::InvalidInput("current must be ≥ 0".into()));
    }
    let a = net.base_power(wire, current) * net.total_resistance(wire);
    let gain = net.materials.alpha_r * a;
    if gain >= 1.0 {
        return Err(Error::ThermalRunaway {
            threshold_current: net.runaway_current(wire),
        });
    }
    Ok(a / (1.0 - gain))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxCurrent {
    pub current_density: f64,
    pub current: f64,
    /// The limit was not reached below runaway; values are the runaway threshold.
    pub runaway_limited: bool,
}

/// Bisection on I for steady ΔT = `limit`.
pub fn max_current_density(wire: &ThermalWire, net: &ThermalNetwork, limit: f64) -> Result<MaxCurrent> {
    if !(limit > 0.0) {
        return Err(Error::InvalidInput("temperature limit must be positive".into()));
    }
    let i_run = net.runaway_current(wire);
    let (mut lo, mut hi) = (0.0, i_run);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        match steady_temperature(wire, mid, net) {
            Ok(t) if t < limit => lo = mid,
            _ => hi = mid,
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let reached = steady_temperature(wire, hi, net).is_ok_and(|t| (t - limit).abs() <= 1e-9 * limit);
    let current = if reached { 0.5 * (lo + hi) } else { i_run };
    Ok(MaxCurrent {
        current_density: current / wire.area(),
        current,
        runaway_limited: !reached,
    })
}

/// Transient of the two-node network after switching on `current` at t = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transient {
    pub tau_fast: f64,
    pub tau_slow: f64,
    pub steady: f64,
    amplitudes: Vector2<f64>,
    rates: Vector2<f64>,
}

impl Transient {
    pub fn new(wire: &ThermalWire, current: f64, net: &ThermalNetwork) -> Result<Self> {
        let steady = steady_temperature(wire, current, net)?;
        let p0 = net.base_power(wire, current);
        let c1 = net.wire_capacity(wire);
        let c2 = net.materials.substrate_capacity;
        let r1 = net.oxide_resistance(wire);
        let r2 = net.spreading_resistance(wire) + net.mount_per_length();
        let alpha = net.materials.alpha_r;
        // d/dt (T1, T2) = M·(T1, T2) + f
        let m = Matrix2::new(
            (p0 * alpha - 1.0 / r1) / c1,
            1.0 / (r1 * c1),
            1.0 / (r1 * c2),
            -(1.0 / r1 + 1.0 / r2) / c2,
        );
        let tr = m.trace();
        let det = m.determinant();
        let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
        // Both roots negative below runaway; compute the small one stably.
        let l_fast = 0.5 * tr - disc;
        let l_slow = det / l_fast;
        let t_inf = m
            .lu()
            .solve(&Vector2::new(-p0 / c1, 0.0))
            .ok_or_else(|| Error::InvalidInput("singular thermal network".into()))?;
        // Eigenvectors (m01, λ − m00); T(t) = T∞ + Σ c_k v_k e^{λ_k t}, T(0) = 0.
        let v = |l: f64| Vector2::new(m[(0, 1)], l - m[(0, 0)]);
        let basis = Matrix2::from_columns(&[v(l_fast), v(l_slow)]);
        let c = basis
            .lu()
            .solve(&(-t_inf))
            .ok_or_else(|| Error::InvalidInput("degenerate thermal modes".into()))?;
        Ok(Self {
            tau_fast: -1.0 / l_fast,
            tau_slow: -1.0 / l_slow,
            steady,
            amplitudes: Vector2::new(c[0] * basis[(0, 0)], c[1] * basis[(0, 1)]),
            rates: Vector2::new(l_fast, l_slow),
        })
    }

    /// Wire temperature rise at `t` (K).
    pub fn at(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        self.steady + self.amplitudes[0] * (self.rates[0] * t).exp() + self.amplitudes[1] * (self.rates[1] * t).exp()
    }
}

pub fn transient_temperature(wire: &ThermalWire, current: f64, net: &ThermalNetwork, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidInput("time must be ≥ 0".into()));
    }
    Ok(Transient::new(wire, current, net)?.at(t))
}

/// Fractional resistance rise α_R·ΔT; infinite past runaway.
pub fn resistance_monitor(wire: &ThermalWire, net: &ThermalNetwork, current: f64) -> f64 {
    match steady_temperature(wire, current, net) {
        Ok(t) => net.materials.alpha_r * t,
        Err(_) => f64::INFINITY,
    }
}

/// JSON record of a steady-state query.
#[allow(non_snake_case)]
#[derive(Debug, Clone, Serialize)]
pub struct ThermalRecord {
    pub wire: String,
    pub I_A: f64,
    pub J_A_per_m2: f64,
    pub dT_K: Option<f64>,
    pub resistance_rise: Option<f64>,
    pub runaway: bool,
}

pub fn thermal_record(name: &str, wire: &ThermalWire, net: &ThermalNetwork, current: f64) -> ThermalRecord {
    let dt = steady_temperature(wire, current, net).ok();
    ThermalRecord {
        wire: name.to_string(),
        I_A: round_sig(current),
        J_A_per_m2: round_sig(current / wire.area()),
        dT_K: dt.map(round_sig),
        resistance_rise: dt.map(|t| round_sig(net.materials.alpha_r * t)),
        runaway: dt.is_none(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn narrow() -> ThermalWire {
        ThermalWire::new(50e-6, 3e-6).unwrap()
    }

    fn net() -> ThermalNetwork {
        calibrate(Materials::default(), &narrow(), 8.8e9, 150.0, DEFAULT_HEATED_LENGTH).unwrap()
    }

    #[test]
    fn calibration_point_reproduced() {
        let n = net();
        let i = 8.8e9 * narrow().area();
        assert!((i - 1.32).abs() < 1e-12);
        let t = steady_temperature(&narrow(), i, &n).unwrap();
        assert!((t - 150.0).abs() < 1e-9);
        assert!((resistance_monitor(&narrow(), &n, i) - 0.5).abs() < 1e-12);
        let again = calibrate(Materials::default(), &narrow(), 8.8e9, t, DEFAULT_HEATED_LENGTH).unwrap();
        assert!((again.mount_resistance / n.mount_resistance - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_current() {
        let n = net();
        assert_eq!(steady_temperature(&narrow(), 0.0, &n).unwrap(), 0.0);
        assert_eq!(resistance_monitor(&narrow(), &n, 0.0), 0.0);
        assert_eq!(transient_temperature(&narrow(), 1.0, &n, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn runaway_reported() {
        let n = net();
        let i = n.runaway_current(&narrow()) * 1.01;
        assert!(matches!(
            steady_temperature(&narrow(), i, &n),
            Err(Error::ThermalRunaway { .. })
        ));
        assert!(resistance_monitor(&narrow(), &n, i).is_infinite());
    }

    #[test]
    fn bisection_matches_closed_form() {
        let n = net();
        let m = max_current_density(&narrow(), &n, 150.0).unwrap();
        assert!(!m.runaway_limited);
        assert!((m.current_density / 8.8e9 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn transient_relaxes_to_steady() {
        let n = net();
        let tr = Transient::new(&narrow(), 1.0, &n).unwrap();
        assert!(tr.tau_fast < tr.tau_slow);
        assert!((tr.at(10.0 * tr.tau_slow) / tr.steady - 1.0).abs() < 1e-2);
        assert!(tr.at(1e-12) >= 0.0);
        // Fast stage saturates near the oxide drop.
        let drop = tr.at(10.0 * tr.tau_fast);
        assert!(drop < 0.05 * tr.steady);
        assert!(drop > 0.0);
    }

    #[test]
    fn record_json() {
        let n = net();
        let r = thermal_record("z2", &narrow(), &n, 1.32);
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["runaway"], false);
        assert!((v["dT_K"].as_f64().unwrap() - 150.0).abs() < 1e-6);
    }
}
