//! Device geometry and the kinematic maps from a physical loading scenario to
//! a deformed layout.
//!
//! Lengths carry their unit in the field name. IDE and stack dimensions are in
//! micrometres, loop footprint, lumen diameter and bend radius in millimetres.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest strain magnitude the lumped kinematic model is trusted for.
pub const MAX_MODEL_STRAIN: f64 = 0.5;

/// Largest supported joint bend angle in degrees.
pub const MAX_BEND_DEG: f64 = 120.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid geometry: {0}")]
    InvalidParameter(String),
    #[error("strain {strain} outside the model range of ±{MAX_MODEL_STRAIN}")]
    OutOfModelRange { strain: f64 },
}

fn require(cond: bool, what: impl FnOnce() -> String) -> Result<(), GeometryError> {
    if cond {
        Ok(())
    } else {
        Err(GeometryError::InvalidParameter(what()))
    }
}

/// Layer stack around the patterned metal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubstrateStack {
    pub base_thickness_um: f64,
    pub encapsulation_thickness_um: f64,
    pub substrate_rel_permittivity: f64,
    /// Medium above the encapsulation (1.0 for air).
    pub medium_rel_permittivity: f64,
    pub metal_thickness_um: f64,
}

impl Default for SubstrateStack {
    fn default() -> Self {
        Self {
            base_thickness_um: 200.0,
            encapsulation_thickness_um: 200.0,
            // PDMS at low GHz frequencies
            substrate_rel_permittivity: 2.7,
            medium_rel_permittivity: 1.0,
            metal_thickness_um: 30.0,
        }
    }
}

impl SubstrateStack {
    pub fn validate(&self) -> Result<(), GeometryError> {
        for (name, v) in [
            ("base_thickness_um", self.base_thickness_um),
            (
                "encapsulation_thickness_um",
                self.encapsulation_thickness_um,
            ),
            ("metal_thickness_um", self.metal_thickness_um),
        ] {
            require(v.is_finite() && v > 0.0, || {
                format!("{name} must be > 0, got {v}")
            })?;
        }
        for (name, v) in [
            (
                "substrate_rel_permittivity",
                self.substrate_rel_permittivity,
            ),
            ("medium_rel_permittivity", self.medium_rel_permittivity),
        ] {
            require(v.is_finite() && v >= 1.0, || {
                format!("{name} must be >= 1, got {v}")
            })?;
        }
        Ok(())
    }
}

/// Interdigitated electrode comb.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdeGeometry {
    pub finger_count: u32,
    /// Overlap length of adjacent fingers.
    pub finger_length_um: f64,
    pub trace_width_um: f64,
    pub gap_um: f64,
}

impl Default for IdeGeometry {
    fn default() -> Self {
        Self {
            finger_count: 4,
            finger_length_um: 1500.0,
            trace_width_um: 120.0,
            gap_um: 30.0,
        }
    }
}

impl IdeGeometry {
    pub fn validate(&self) -> Result<(), GeometryError> {
        require(self.finger_count >= 2, || {
            format!("finger_count must be >= 2, got {}", self.finger_count)
        })?;
        for (name, v) in [
            ("finger_length_um", self.finger_length_um),
            ("trace_width_um", self.trace_width_um),
            ("gap_um", self.gap_um),
        ] {
            require(v.is_finite() && v > 0.0, || {
                format!("{name} must be > 0, got {v}")
            })?;
        }
        Ok(())
    }
}

/// Square planar loop antenna, optionally stretched along the strain axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopGeometry {
    pub outer_side_mm: f64,
    pub turns: u32,
    pub trace_width_um: f64,
    pub turn_spacing_um: f64,
    /// Scale of the outer dimension along the strain axis (1.0 when undeformed).
    pub axial_scale: f64,
}

impl Default for LoopGeometry {
    fn default() -> Self {
        Self {
            outer_side_mm: 10.0,
            turns: 1,
            trace_width_um: 120.0,
            turn_spacing_um: 30.0,
            axial_scale: 1.0,
        }
    }
}

impl LoopGeometry {
    pub fn validate(&self) -> Result<(), GeometryError> {
        require(
            self.outer_side_mm.is_finite() && self.outer_side_mm > 0.0,
            || format!("outer_side_mm must be > 0, got {}", self.outer_side_mm),
        )?;
        require(self.turns >= 1, || "turns must be >= 1".to_string())?;
        require(
            self.trace_width_um.is_finite() && self.trace_width_um > 0.0,
            || {
                format!(
                    "loop trace_width_um must be > 0, got {}",
                    self.trace_width_um
                )
            },
        )?;
        require(
            self.turn_spacing_um.is_finite() && self.turn_spacing_um >= 0.0,
            || format!("turn_spacing_um must be >= 0, got {}", self.turn_spacing_um),
        )?;
        require(
            self.axial_scale.is_finite() && self.axial_scale > 0.0,
            || format!("axial_scale must be > 0, got {}", self.axial_scale),
        )?;
        // innermost turn must still enclose an area
        let pitch_mm = (self.trace_width_um + self.turn_spacing_um) * 1e-3;
        let short_side = self.outer_side_mm * self.axial_scale.min(1.0);
        let inner =
            short_side - self.trace_width_um * 1e-3 - 2.0 * pitch_mm * f64::from(self.turns - 1);
        require(inner > 0.0, || {
            format!(
                "{} turns do not fit in a {} mm loop",
                self.turns, self.outer_side_mm
            )
        })
    }
}

/// Complete parametric description of the sensor in its fabricated state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeviceGeometry {
    pub ide: IdeGeometry,
    #[serde(rename = "loop")]
    pub loop_: LoopGeometry,
    pub stack: SubstrateStack,
    /// Sensor length along the strain axis, used for ε = ΔL / L₀.
    pub rest_length_um: f64,
    /// Poisson ratio of the elastomer.
    pub poisson_ratio: f64,
}

impl Default for DeviceGeometry {
    fn default() -> Self {
        Self {
            ide: IdeGeometry::default(),
            loop_: LoopGeometry::default(),
            stack: SubstrateStack::default(),
            rest_length_um: 10_000.0,
            poisson_ratio: 0.49,
        }
    }
}

impl DeviceGeometry {
    pub fn validate(&self) -> Result<(), GeometryError> {
        self.ide.validate()?;
        self.loop_.validate()?;
        self.stack.validate()?;
        require(
            self.rest_length_um.is_finite() && self.rest_length_um > 0.0,
            || format!("rest_length_um must be > 0, got {}", self.rest_length_um),
        )?;
        require((0.0..0.5).contains(&self.poisson_ratio), || {
            format!(
                "poisson_ratio must lie in [0, 0.5), got {}",
                self.poisson_ratio
            )
        })
    }
}

/// Physical loading applied to the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeformationState {
    Rest,
    UniaxialStrain {
        strain: f64,
    },
    /// Sensor wrapped around a compliant lumen under internal pressure.
    RolledPressure {
        lumen_diameter_mm: f64,
        pressure_mmhg: f64,
        /// Hoop strain per mmHg.
        compliance_per_mmhg: f64,
    },
    /// Rolled sensor whose diameter changes by `displacement_um`
    /// (positive = expansion).
    RolledDisplacement {
        lumen_diameter_mm: f64,
        displacement_um: f64,
    },
    /// Sensor draped over a joint flexed by `angle_deg`.
    JointBend {
        angle_deg: f64,
        effective_radius_mm: f64,
    },
}

impl DeformationState {
    pub fn validate(&self) -> Result<(), GeometryError> {
        match *self {
            DeformationState::Rest => Ok(()),
            DeformationState::UniaxialStrain { strain } => {
                require(strain.is_finite(), || "strain must be finite".into())?;
                check_range(strain)
            }
            DeformationState::RolledPressure {
                lumen_diameter_mm,
                pressure_mmhg,
                compliance_per_mmhg,
            } => {
                require(
                    lumen_diameter_mm.is_finite() && lumen_diameter_mm > 0.0,
                    || format!("lumen diameter must be > 0, got {lumen_diameter_mm}"),
                )?;
                require(pressure_mmhg.is_finite() && pressure_mmhg >= 0.0, || {
                    format!("pressure must be >= 0, got {pressure_mmhg}")
                })?;
                require(compliance_per_mmhg.is_finite(), || {
                    "compliance must be finite".into()
                })
            }
            DeformationState::RolledDisplacement {
                lumen_diameter_mm,
                displacement_um,
            } => {
                require(
                    lumen_diameter_mm.is_finite() && lumen_diameter_mm > 0.0,
                    || format!("lumen diameter must be > 0, got {lumen_diameter_mm}"),
                )?;
                require(displacement_um.is_finite(), || {
                    "displacement must be finite".into()
                })
            }
            DeformationState::JointBend {
                angle_deg,
                effective_radius_mm,
            } => {
                require((0.0..=MAX_BEND_DEG).contains(&angle_deg), || {
                    format!("bend angle must lie in [0, {MAX_BEND_DEG}] deg, got {angle_deg}")
                })?;
                require(
                    effective_radius_mm.is_finite() && effective_radius_mm >= 0.0,
                    || format!("effective radius must be >= 0, got {effective_radius_mm}"),
                )
            }
        }
    }
}

fn check_range(strain: f64) -> Result<(), GeometryError> {
    if strain.abs() > MAX_MODEL_STRAIN {
        Err(GeometryError::OutOfModelRange { strain })
    } else {
        Ok(())
    }
}

/// Effective strain along the sensing axis produced by `state`.
///
/// Positive strain elongates the sensing axis and opens the IDE gaps.
pub fn strain_of(state: &DeformationState, device: &DeviceGeometry) -> Result<f64, GeometryError> {
    state.validate()?;
    let strain = match *state {
        DeformationState::Rest => 0.0,
        DeformationState::UniaxialStrain { strain } => strain,
        DeformationState::RolledPressure {
            pressure_mmhg,
            compliance_per_mmhg,
            ..
        } => compliance_per_mmhg * pressure_mmhg,
        DeformationState::RolledDisplacement {
            lumen_diameter_mm,
            displacement_um,
        } => displacement_um / (lumen_diameter_mm * 1e3),
        DeformationState::JointBend {
            angle_deg,
            effective_radius_mm,
        } => effective_radius_mm * 1e3 * angle_deg.to_radians() / device.rest_length_um,
    };
    check_range(strain)?;
    Ok(strain)
}

/// Deformed copy of `device` under uniaxial strain `strain`.
///
/// Gaps and the loop's axial dimension scale by `1 + ε`, finger overlap by
/// `1 - ν ε`. Copper widths are left untouched.
pub fn apply_strain(device: &DeviceGeometry, strain: f64) -> Result<DeviceGeometry, GeometryError> {
    require(strain.is_finite(), || "strain must be finite".into())?;
    check_range(strain)?;
    let mut out = *device;
    out.ide.gap_um *= 1.0 + strain;
    out.ide.finger_length_um *= 1.0 - device.poisson_ratio * strain;
    out.loop_.axial_scale *= 1.0 + strain;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniaxial_strain_is_identity() {
        let d = DeviceGeometry::default();
        let s = strain_of(&DeformationState::UniaxialStrain { strain: 0.05 }, &d).unwrap();
        assert_eq!(s, 0.05);
    }

    #[test]
    fn rolled_displacement_is_hoop_strain() {
        let d = DeviceGeometry::default();
        let state = DeformationState::RolledDisplacement {
            lumen_diameter_mm: 3.18,
            displacement_um: 95.0,
        };
        let s = strain_of(&state, &d).unwrap();
        assert!((s - 95.0 / 3180.0).abs() < 1e-15);
        assert!((s - 0.02987).abs() < 1e-5);
    }

    #[test]
    fn zero_loads_give_zero_strain() {
        let d = DeviceGeometry::default();
        let bend = DeformationState::JointBend {
            angle_deg: 0.0,
            effective_radius_mm: 7.0,
        };
        assert_eq!(strain_of(&bend, &d).unwrap(), 0.0);
        let p = DeformationState::RolledPressure {
            lumen_diameter_mm: 6.0,
            pressure_mmhg: 0.0,
            compliance_per_mmhg: 0.0013,
        };
        assert_eq!(strain_of(&p, &d).unwrap(), 0.0);
        assert_eq!(strain_of(&DeformationState::Rest, &d).unwrap(), 0.0);
    }

    #[test]
    fn bend_uses_arc_elongation() {
        let d = DeviceGeometry::default();
        let bend = DeformationState::JointBend {
            angle_deg: 90.0,
            effective_radius_mm: 2.0,
        };
        let s = strain_of(&bend, &d).unwrap();
        assert!((s - 2000.0 * std::f64::consts::FRAC_PI_2 / 10_000.0).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_strain_rejected() {
        let d = DeviceGeometry::default();
        let err = strain_of(&DeformationState::UniaxialStrain { strain: 0.6 }, &d).unwrap_err();
        assert!(matches!(err, GeometryError::OutOfModelRange { .. }));
        let bend = DeformationState::JointBend {
            angle_deg: 90.0,
            effective_radius_mm: 10.0,
        };
        assert!(matches!(
            strain_of(&bend, &d),
            Err(GeometryError::OutOfModelRange { .. })
        ));
        assert!(apply_strain(&d, -0.51).is_err());
    }

    #[test]
    fn invalid_states_rejected() {
        let d = DeviceGeometry::default();
        let bad = [
            DeformationState::JointBend {
                angle_deg: 130.0,
                effective_radius_mm: 1.0,
            },
            DeformationState::RolledPressure {
                lumen_diameter_mm: 6.0,
                pressure_mmhg: -1.0,
                compliance_per_mmhg: 1e-3,
            },
            DeformationState::RolledDisplacement {
                lumen_diameter_mm: 0.0,
                displacement_um: 10.0,
            },
        ];
        for s in bad {
            assert!(
                matches!(strain_of(&s, &d), Err(GeometryError::InvalidParameter(_))),
                "{s:?}"
            );
        }
    }

    #[test]
    fn apply_strain_examples() {
        let d = DeviceGeometry::default();
        assert_eq!(apply_strain(&d, 0.0).unwrap(), d);

        let strained = apply_strain(&d, 0.10).unwrap();
        assert!((strained.ide.gap_um - 33.0).abs() < 1e-12);
        assert_eq!(strained.ide.trace_width_um, d.ide.trace_width_um);
        assert_eq!(strained.loop_.trace_width_um, d.loop_.trace_width_um);
        assert!((strained.loop_.axial_scale - 1.1).abs() < 1e-15);

        let mut long = d;
        long.ide.finger_length_um = 4000.0;
        let s = apply_strain(&long, 0.10).unwrap();
        assert!((s.ide.finger_length_um - 3804.0).abs() < 1e-9);
    }

    #[test]
    fn default_geometry_is_valid() {
        DeviceGeometry::default().validate().unwrap();
    }

    #[test]
    fn geometry_validation_catches_bad_fields() {
        let mut d = DeviceGeometry::default();
        d.ide.finger_count = 1;
        assert!(d.validate().is_err());
        let mut d = DeviceGeometry::default();
        d.stack.medium_rel_permittivity = 0.5;
        assert!(d.validate().is_err());
        let mut d = DeviceGeometry::default();
        d.loop_.turns = 40;
        assert!(d.validate().is_err());
    }

    proptest! {
        #[test]
        fn gap_strain_composes(e1 in -0.3f64..0.3, e2 in -0.3f64..0.3) {
            let d = DeviceGeometry::default();
            let once = apply_strain(&apply_strain(&d, e1).unwrap(), e2).unwrap();
            let combined = (1.0 + e1) * (1.0 + e2) - 1.0;
            let expected = d.ide.gap_um * (1.0 + combined);
            prop_assert!((once.ide.gap_um - expected).abs() <= 1e-12 * expected);
        }

        #[test]
        fn strain_of_is_monotone(a in 0.0f64..200.0, b in 0.0f64..200.0) {
            let d = DeviceGeometry::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let p = |x: f64| DeformationState::RolledPressure {
                lumen_diameter_mm: 6.0, pressure_mmhg: x, compliance_per_mmhg: 1e-3 };
            prop_assert!(strain_of(&p(lo), &d).unwrap() <= strain_of(&p(hi), &d).unwrap());
            let disp = |x: f64| DeformationState::RolledDisplacement {
                lumen_diameter_mm: 3.18, displacement_um: x };
            prop_assert!(strain_of(&disp(lo), &d).unwrap() <= strain_of(&disp(hi), &d).unwrap());
            let bend = |x: f64| DeformationState::JointBend {
                angle_deg: x * 0.45, effective_radius_mm: 3.0 };
            prop_assert!(strain_of(&bend(lo), &d).unwrap() <= strain_of(&bend(hi), &d).unwrap());
        }

        #[test]
        fn pressure_and_displacement_agree_through_strain(p in 0.0f64..200.0, alpha in 0.0f64..1e-3) {
            let d = DeviceGeometry::default();
            let d0 = 3.18;
            let via_pressure = strain_of(&DeformationState::RolledPressure {
                lumen_diameter_mm: d0, pressure_mmhg: p, compliance_per_mmhg: alpha }, &d).unwrap();
            let displacement_um = alpha * p * d0 * 1e3;
            let via_disp = strain_of(&DeformationState::RolledDisplacement {
                lumen_diameter_mm: d0, displacement_um }, &d).unwrap();
            prop_assert!((via_pressure - via_disp).abs() <= 1e-12);
        }
    }
}
