//! Planar loop inductance by segment summation.
//!
//! Each turn is a rectangle of four straight strip segments. The total is the
//! sum of segment self-inductances plus the mutual inductance of every pair
//! of parallel segments (positive for co-directed currents, negative for
//! opposed). Orthogonal segments do not couple.

use crate::geometry::{GeometryError, LoopGeometry};

pub const MU_0: f64 = 1.256_637_062_12e-6;
const MU0_OVER_2PI: f64 = MU_0 / (2.0 * std::f64::consts::PI);
const MU0_OVER_4PI: f64 = MU_0 / (4.0 * std::f64::consts::PI);

/// Self-inductance of a straight rectangular-section strip.
pub fn strip_self_inductance(length_m: f64, width_m: f64, thickness_m: f64) -> f64 {
    let wt = width_m + thickness_m;
    MU0_OVER_2PI * length_m * ((2.0 * length_m / wt).ln() + 0.50049 + wt / (3.0 * length_m))
}

fn g(u: f64, d: f64) -> f64 {
    u * (u / d).asinh() - (u * u + d * d).sqrt()
}

/// Mutual inductance of two parallel filaments spanning `[x1, x2]` and
/// `[y1, y2]` along a common axis, separated by perpendicular distance `d`.
pub fn parallel_filament_mutual(x1: f64, x2: f64, y1: f64, y2: f64, d: f64) -> f64 {
    MU0_OVER_4PI * (g(x2 - y1, d) - g(x1 - y1, d) - g(x2 - y2, d) + g(x1 - y2, d))
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    /// true: runs along x, false: along y
    horizontal: bool,
    /// position on the perpendicular axis
    offset: f64,
    start: f64,
    end: f64,
    /// +1 or -1 relative to the axis direction
    direction: f64,
}

/// Centre-line rectangles of every turn, counter-clockwise, in metres.
fn segments(loop_: &LoopGeometry) -> Vec<Segment> {
    let width = loop_.trace_width_um * 1e-6;
    let pitch = (loop_.trace_width_um + loop_.turn_spacing_um) * 1e-6;
    let outer_x = loop_.outer_side_mm * 1e-3 * loop_.axial_scale;
    let outer_y = loop_.outer_side_mm * 1e-3;
    let mut segs = Vec::with_capacity(4 * loop_.turns as usize);
    for turn in 0..loop_.turns {
        let inset = width + 2.0 * pitch * f64::from(turn);
        let hx = 0.5 * (outer_x - inset);
        let hy = 0.5 * (outer_y - inset);
        segs.push(Segment {
            horizontal: true,
            offset: -hy,
            start: -hx,
            end: hx,
            direction: 1.0,
        });
        segs.push(Segment {
            horizontal: false,
            offset: hx,
            start: -hy,
            end: hy,
            direction: 1.0,
        });
        segs.push(Segment {
            horizontal: true,
            offset: hy,
            start: -hx,
            end: hx,
            direction: -1.0,
        });
        segs.push(Segment {
            horizontal: false,
            offset: -hx,
            start: -hy,
            end: hy,
            direction: -1.0,
        });
    }
    segs
}

/// Inductance of the planar loop in henries.
pub fn loop_inductance(
    loop_: &LoopGeometry,
    metal_thickness_um: f64,
) -> Result<f64, GeometryError> {
    loop_.validate()?;
    if !(metal_thickness_um.is_finite() && metal_thickness_um > 0.0) {
        return Err(GeometryError::InvalidParameter(format!(
            "metal thickness must be > 0, got {metal_thickness_um}"
        )));
    }
    let width = loop_.trace_width_um * 1e-6;
    let thickness = metal_thickness_um * 1e-6;
    let segs = segments(loop_);

    let mut total = 0.0;
    for (i, a) in segs.iter().enumerate() {
        total += strip_self_inductance(a.end - a.start, width, thickness);
        for b in segs.iter().skip(i + 1) {
            if a.horizontal != b.horizontal {
                continue;
            }
            let d = (a.offset - b.offset).abs();
            let m = parallel_filament_mutual(a.start, a.end, b.start, b.end, d);
            total += 2.0 * a.direction * b.direction * m;
        }
    }
    Ok(total)
}
