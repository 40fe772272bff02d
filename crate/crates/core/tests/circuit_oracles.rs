//! Independent oracles for the lumped-element models.

use std::f64::consts::PI;

use maicas_core::circuit::{ide_capacitance, ide_capacitance_parts, loop_inductance, EPSILON_0};
use maicas_core::geometry::{IdeGeometry, LoopGeometry, SubstrateStack};

const MU_0: f64 = 4e-7 * PI;

/// Complete elliptic integral of the first kind via the arithmetic-geometric mean.
fn agm_k(k: f64) -> f64 {
    let (mut a, mut b) = (1.0, (1.0 - k * k).sqrt());
    while (a - b).abs() > 1e-15 * a {
        (a, b) = (0.5 * (a + b), (a * b).sqrt());
    }
    PI / (2.0 * a)
}

/// Per-length capacitance of two isolated coplanar strips between two
/// dielectric half-spaces, normalised by ε0.
fn coplanar_strips(width: f64, gap: f64, eps_a: f64, eps_b: f64) -> f64 {
    let k = gap / (gap + 2.0 * width);
    let kp = (1.0 - k * k).sqrt();
    0.5 * (eps_a + eps_b) * agm_k(kp) / agm_k(k)
}

#[test]
fn ide_lies_between_parallel_plate_and_coplanar_strip_bounds() {
    let ide = IdeGeometry::default();
    let stack = SubstrateStack::default();
    assert_eq!((ide.trace_width_um, ide.gap_um), (120.0, 30.0));
    let c = ide_capacitance(&ide, &stack).unwrap();

    let gaps = f64::from(ide.finger_count - 1);
    let length = ide.finger_length_um * 1e-6;
    let eps_s = stack.substrate_rel_permittivity;
    let plate = EPSILON_0 * eps_s * length * stack.metal_thickness_um / ide.gap_um;
    let lower = gaps * plate;
    // Each gap at most as strong as an isolated strip pair with every
    // half-space filled by its most permittive layer.
    let eps_lo = eps_s.max(1.0);
    let eps_hi = eps_s.max(stack.medium_rel_permittivity);
    let strips =
        EPSILON_0 * length * coplanar_strips(ide.trace_width_um, ide.gap_um, eps_lo, eps_hi);
    let upper = gaps * (strips + plate);
    assert!(lower < c && c < upper, "{lower:e} < {c:e} < {upper:e}");

    // Every fringing side sits below its own strip-pair bound too.
    let parts = ide_capacitance_parts(&ide, &stack).unwrap();
    let half_strip = 0.5
        * gaps
        * EPSILON_0
        * length
        * coplanar_strips(ide.trace_width_um, ide.gap_um, eps_s, eps_s);
    assert!(parts.substrate_side < half_strip && parts.medium_side < half_strip);
}

#[test]
fn ide_in_vacuum_approaches_periodic_cell() {
    // Zero sidewall and vacuum everywhere: an interior-heavy comb approaches
    // the periodic cell, which lies below the isolated strip pair.
    let ide = IdeGeometry {
        finger_count: 40,
        ..IdeGeometry::default()
    };
    let stack = SubstrateStack {
        substrate_rel_permittivity: 1.0,
        medium_rel_permittivity: 1.0,
        metal_thickness_um: 1e-6,
        ..SubstrateStack::default()
    };
    let per_gap =
        ide_capacitance(&ide, &stack).unwrap() / 39.0 / (EPSILON_0 * ide.finger_length_um * 1e-6);
    let strips = coplanar_strips(120.0, 30.0, 1.0, 1.0);
    // Periodic interior cell in vacuum, both half-spaces: K(k)/K(k') with k = sin(πη/2).
    let k = (PI / 2.0 * 120.0 / 150.0).sin();
    let interior = agm_k(k) / agm_k((1.0 - k * k).sqrt());
    assert!(per_gap < strips, "{per_gap} vs {strips}");
    assert!(
        (per_gap - interior).abs() < 0.03 * interior,
        "{per_gap} vs {interior}"
    );
}

/// Neumann double integral between two coaxial square filaments of side
/// `side` separated by `dz`; the inner integral along each straight edge is
/// done in closed form.
fn neumann_squares(side: f64, dz: f64, samples: usize) -> f64 {
    let h = side / 2.0;
    // (start, direction) of the four edges, counter-clockwise
    let edges = [
        ([-h, -h], [1.0, 0.0]),
        ([h, -h], [0.0, 1.0]),
        ([h, h], [-1.0, 0.0]),
        ([-h, h], [0.0, -1.0]),
    ];
    let ds = side / samples as f64;
    let mut total = 0.0;
    for (p0, d) in edges {
        for (q0, e) in edges {
            let dot = d[0] * e[0] + d[1] * e[1];
            if dot == 0.0 {
                continue;
            }
            for i in 0..samples {
                let s = (i as f64 + 0.5) * ds;
                let p = [p0[0] + d[0] * s, p0[1] + d[1] * s];
                // coordinates of p relative to the inner edge: along and across
                let rel = [p[0] - q0[0], p[1] - q0[1]];
                let along = rel[0] * e[0] + rel[1] * e[1];
                let across2 =
                    (rel[0] * rel[0] + rel[1] * rel[1] - along * along).max(0.0) + dz * dz;
                let rho = across2.sqrt();
                let inner = (along / rho).asinh() - ((along - side) / rho).asinh();
                total += dot * inner * ds;
            }
        }
    }
    MU_0 / (4.0 * PI) * total
}

#[test]
fn single_turn_loop_matches_neumann_integral() {
    let lp = LoopGeometry {
        outer_side_mm: 10.0,
        turns: 1,
        trace_width_um: 120.0,
        ..LoopGeometry::default()
    };
    let thickness_um = 30.0;
    let l = loop_inductance(&lp, thickness_um).unwrap();
    // Centre-line square, self term through the geometric mean distance of
    // the rectangular section.
    let w = 120e-6;
    let t = thickness_um * 1e-6;
    let gmd = 0.2235 * (w + t);
    let oracle = neumann_squares(10e-3 - w, gmd, 20_000);
    let rel = (l - oracle).abs() / oracle;
    assert!(
        rel < 0.05,
        "model {l:e} H, Neumann {oracle:e} H, rel {rel:.4}"
    );
}

#[test]
fn neumann_oracle_reproduces_circular_limit_scale() {
    // Sanity check of the quadrature: doubling the side doubles L up to the
    // logarithmic term, so the ratio lies in (2, 2.5) for thin wires.
    let a = neumann_squares(10e-3, 30e-6, 20_000);
    let b = neumann_squares(20e-3, 30e-6, 20_000);
    assert!(b / a > 2.0 && b / a < 2.5, "{}", b / a);
}

#[test]
fn two_turns_fall_in_mutual_coupling_bracket() {
    let one = LoopGeometry {
        turns: 1,
        ..LoopGeometry::default()
    };
    let two = LoopGeometry { turns: 2, ..one };
    let ratio = loop_inductance(&two, 30.0).unwrap() / loop_inductance(&one, 30.0).unwrap();
    // 2 (uncoupled turns) < ratio < 4 (perfectly coupled identical turns)
    assert!(ratio > 2.0 && ratio < 4.0, "{ratio}");
}
