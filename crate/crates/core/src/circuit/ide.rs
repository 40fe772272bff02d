//! Interdigitated-electrode capacitance.
//!
//! Conformal-mapping unit-cell model with separate interior and exterior
//! electrode cells. Each half-space above and below the electrode plane is a
//! stack of dielectric layers handled by partial capacitances; a finite layer
//! of thickness `h` uses the elliptic modulus of the strip-in-a-slab mapping,
//! an unbounded layer the half-plane limit. Finite metal thickness adds a
//! parallel-plate term across each gap, filled by the encapsulant.

use std::f64::consts::PI;

use crate::elliptic::{
    ellip_k_from_complement, jacobi_with_complement, k_ratio, modulus_from_nome,
};
use crate::geometry::{GeometryError, IdeGeometry, SubstrateStack};

pub const EPSILON_0: f64 = 8.854_187_812_8e-12;

/// Layers thicker than this many spatial periods are treated as unbounded.
/// The exterior cell converges like `1/r²`, so the cut-off sits far out.
const THICK_LAYER_PERIODS: f64 = 1e4;
/// Below this complementary modulus the interior cell uses the `k → 1`
/// limits `sn → tanh`, `cn, dn → sech`.
const NEAR_UNIT_MODULUS: f64 = 1e-8;

/// Dimensionless `K(k)/K(k')` ratios of the interior and exterior unit cells
/// for a dielectric layer of thickness `height_um` (`None` = half-space).
pub fn cell_ratios(width_um: f64, gap_um: f64, height_um: Option<f64>) -> (f64, f64) {
    let period = 2.0 * (width_um + gap_um);
    let eta = width_um / (width_um + gap_um);
    let r = height_um.map(|h| h / period);
    match r {
        Some(r) if r < THICK_LAYER_PERIODS => (interior_finite(eta, r), exterior_finite(eta, r)),
        _ => (interior_infinite(eta), exterior_infinite(eta)),
    }
}

fn interior_infinite(eta: f64) -> f64 {
    let arg = PI * eta / 2.0;
    k_ratio(arg.sin(), arg.cos())
}

fn exterior_infinite(eta: f64) -> f64 {
    let k = 2.0 * eta.sqrt() / (1.0 + eta);
    let k_prime = (1.0 - eta) / (1.0 + eta);
    k_ratio(k, k_prime)
}

fn interior_finite(eta: f64, r: f64) -> f64 {
    let q = (-4.0 * PI * r).exp();
    let (k, k_prime) = modulus_from_nome(q);
    let u = ellip_k_from_complement(k_prime) * eta;
    if k_prime < NEAR_UNIT_MODULUS {
        let k_i = k_prime * u.sinh();
        return k_ratio(k_i, ((1.0 - k_i) * (1.0 + k_i)).sqrt());
    }
    let (sn, cn, dn) = jacobi_with_complement(u, k, k_prime);
    // k_I = t2 sqrt((t4² - 1)/(t4² - t2²)) with t2 = sn, t4 = 1/k,
    // rewritten in terms of sn, cn, dn to avoid cancellation.
    k_ratio(sn * k_prime / dn, cn / dn)
}

fn exterior_finite(eta: f64, r: f64) -> f64 {
    let a = PI * (1.0 - eta) / (8.0 * r);
    let b = PI * (1.0 + eta) / (8.0 * r);
    // k_E = sqrt((t4² - t3²)/(t4² - 1)) / t3 with t3 = cosh a, t4 = cosh b
    let k = ((b + a).sinh() * (b - a).sinh()).sqrt() / (a.cosh() * b.sinh());
    let k_prime = a.tanh() / b.tanh();
    k_ratio(k, k_prime)
}

/// Combine per-cell capacitances into the capacitance of an `n`-finger comb.
fn comb_total(n: u32, c_interior: f64, c_exterior: f64) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * c_exterior,
        _ => {
            f64::from(n - 3) * c_interior / 2.0
                + 2.0 * c_interior * c_exterior / (c_interior + c_exterior)
        }
    }
}

/// Partial-capacitance sum for one half-space: a layer of permittivity
/// `eps_layer` and thickness `h_um` backed by an unbounded `eps_outer`.
fn half_space(ide: &IdeGeometry, eps_layer: f64, h_um: f64, eps_outer: f64) -> (f64, f64) {
    let (ci_h, ce_h) = cell_ratios(ide.trace_width_um, ide.gap_um, Some(h_um));
    let (ci_inf, ce_inf) = cell_ratios(ide.trace_width_um, ide.gap_um, None);
    (
        (eps_layer - eps_outer) * ci_h + eps_outer * ci_inf,
        (eps_layer - eps_outer) * ce_h + eps_outer * ce_inf,
    )
}

/// Breakdown of the IDE capacitance into its physical contributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdeCapacitance {
    /// Fringing field through the substrate side.
    pub substrate_side: f64,
    /// Fringing field through the encapsulation and surrounding medium.
    pub medium_side: f64,
    /// Parallel-plate field between finger sidewalls.
    pub sidewall: f64,
}

impl IdeCapacitance {
    pub fn total(&self) -> f64 {
        self.substrate_side + self.medium_side + self.sidewall
    }
}

/// Capacitance contributions of the comb described by `ide` in `stack`.
pub fn ide_capacitance_parts(
    ide: &IdeGeometry,
    stack: &SubstrateStack,
) -> Result<IdeCapacitance, GeometryError> {
    ide.validate()?;
    stack.validate()?;
    let length_m = ide.finger_length_um * 1e-6;
    let eps_s = stack.substrate_rel_permittivity;

    let (ci_lo, ce_lo) = half_space(ide, eps_s, stack.base_thickness_um, 1.0);
    let (ci_hi, ce_hi) = half_space(
        ide,
        eps_s,
        stack.encapsulation_thickness_um,
        stack.medium_rel_permittivity,
    );
    let ci = ci_lo + ci_hi;
    let ce = ce_lo + ce_hi;
    let fringing = EPSILON_0 * length_m * comb_total(ide.finger_count, ci, ce);
    // Split the series-combined comb total in proportion to each side's share.
    let lo_share = comb_total(ide.finger_count, ci_lo, ce_lo);
    let hi_share = comb_total(ide.finger_count, ci_hi, ce_hi);
    let lo_frac = lo_share / (lo_share + hi_share);

    let gaps = f64::from(ide.finger_count - 1);
    let sidewall = gaps * EPSILON_0 * eps_s * length_m * stack.metal_thickness_um / ide.gap_um;

    Ok(IdeCapacitance {
        substrate_side: fringing * lo_frac,
        medium_side: fringing * (1.0 - lo_frac),
        sidewall,
    })
}

/// Total interdigitated capacitance in farads.
pub fn ide_capacitance(ide: &IdeGeometry, stack: &SubstrateStack) -> Result<f64, GeometryError> {
    Ok(ide_capacitance_parts(ide, stack)?.total())
}
