//! Compiled constraint scoring on the optimization plane.
//!
//! All gap thresholds are fractions of the plane width, applied in pixel
//! space. The plane and the table share orientation (+x right, +y toward the
//! front edge); lattice "+y away from the viewer" is flipped once, when
//! discrete poses are seeded into the plane.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::fast::DiscretePoseSet;
use crate::relations::{
    AlignMode, AnchorZone, AxisSel, RelationDef, RelationInstance, RelationKind, RelationLibrary,
};
use crate::scene::{Boundary, Layout, PLANE_H, PLANE_W};

/// Validation passes when the tolerance-widened score reaches this level.
pub const VALIDATE_THRESHOLD: f64 = 0.5;

/// A box in plane-pixel space. `z` extents are converted with the x scale so
/// vertical gaps live in the same unit as the thresholds.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct PxBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub z0: f64,
    pub z1: f64,
}

impl PxBox {
    fn center_x(&self) -> f64 {
        (self.x0 + self.x1) / 2.0
    }
    fn center_y(&self) -> f64 {
        (self.y0 + self.y1) / 2.0
    }
}

/// Pixel-space view of a layout, shared by the public scorer and the genetic
/// fitness path.
#[derive(Clone, Debug)]
pub struct PxView {
    pub boxes: BTreeMap<String, PxBox>,
    pub plane_w: f64,
    pub plane_h: f64,
}

impl PxView {
    pub fn from_layout(layout: &Layout, boundary: &Boundary) -> Self {
        let map = boundary.plane_map(PLANE_W, PLANE_H);
        let mut boxes = BTreeMap::new();
        for (name, b) in &layout.boxes {
            let (x0, y0) = map.cm_to_px(b.min.x, b.min.y);
            let (x1, y1) = map.cm_to_px(b.max.x, b.max.y);
            boxes.insert(
                name.clone(),
                PxBox {
                    x0,
                    y0,
                    x1,
                    y1,
                    z0: (b.min.z - boundary.surface_z) * map.px_per_cm_x,
                    z1: (b.max.z - boundary.surface_z) * map.px_per_cm_x,
                },
            );
        }
        PxView {
            boxes,
            plane_w: PLANE_W as f64,
            plane_h: PLANE_H as f64,
        }
    }

    fn get(&self, name: &str) -> Result<&PxBox> {
        self.boxes
            .get(name)
            .ok_or_else(|| Error::UnknownObject { name: name.into() })
    }
}

fn gauss(excess: f64, width: f64) -> f64 {
    let r = excess / width;
    (-r * r).exp()
}

fn band_score(gap: f64, min_px: f64, max_px: f64, falloff_px: f64) -> f64 {
    if gap < min_px {
        gauss(min_px - gap, falloff_px)
    } else if gap > max_px {
        gauss(gap - max_px, falloff_px)
    } else {
        1.0
    }
}

/// Signed edge gap from B toward A in the direction `sign` along one axis.
/// Positive means A sits strictly on the expected side; 0 means touching.
fn directional_gap(a: (f64, f64), b: (f64, f64), sign: i32) -> f64 {
    if sign > 0 {
        a.0 - b.1
    } else {
        b.0 - a.1
    }
}

/// Unsigned separation along one axis; 0 when the extents overlap.
fn separation(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.1).max(b.0 - a.1).max(0.0)
}

fn overlap_ratio_1d(a: (f64, f64), b: (f64, f64)) -> f64 {
    let overlap = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let min_len = (a.1 - a.0).min(b.1 - b.0);
    if min_len <= 0.0 {
        0.0
    } else {
        (overlap / min_len).min(1.0)
    }
}

fn x_ext(b: &PxBox) -> (f64, f64) {
    (b.x0, b.x1)
}
fn y_ext(b: &PxBox) -> (f64, f64) {
    (b.y0, b.y1)
}
fn z_ext(b: &PxBox) -> (f64, f64) {
    (b.z0, b.z1)
}

/// Lattice +y points away from the viewer while plane +y points toward the
/// front edge, so a +1 rpc on y expects A at smaller plane y.
fn plane_sign_y(rpc_y: i32) -> i32 {
    -rpc_y
}

struct Eval {
    premise_ok: bool,
    band: f64,
    gap_above_band: bool,
    overlap: f64,
    misc: f64,
}

impl Eval {
    fn score(&self) -> f64 {
        if !self.premise_ok {
            0.0
        } else {
            self.band * self.overlap * self.misc
        }
    }
}

fn resolve<'l>(
    instance: &RelationInstance,
    lib: &'l RelationLibrary,
) -> Result<&'l RelationDef> {
    let def = lib.get(&instance.relation)?;
    if !def.arity_accepts(instance.args.len()) {
        return Err(Error::ArityMismatch {
            relation: instance.relation.clone(),
            expected: def.arity_expected().into(),
            got: instance.args.len(),
        });
    }
    Ok(def)
}

/// Core evaluation at a widening tolerance `t >= 1`. `t = 1` is the plain
/// constraint score; validation widens every effective threshold by `t`.
fn eval(def: &RelationDef, args: &[String], view: &PxView, t: f64) -> Result<Eval> {
    let spec = &def.constraint;
    let w = view.plane_w;
    let min_px = spec.min_gap_frac / t * w;
    let max_px = (spec.max_gap_frac * t).min(1.0) * w;
    let falloff_px = spec.falloff_width_frac * t * w;
    let align_tol_px = spec.min_gap_frac * t * w;

    let mut out = Eval {
        premise_ok: true,
        band: 1.0,
        gap_above_band: false,
        overlap: 1.0,
        misc: 1.0,
    };

    match def.kind {
        RelationKind::Relative => {
            let a = view.get(&args[0])?;
            let b = view.get(&args[1])?;
            let rpc = def.rpc.expect("relative relations carry an rpc");

            let gap_x = if rpc[0] != 0 {
                directional_gap(x_ext(a), x_ext(b), rpc[0])
            } else {
                separation(x_ext(a), x_ext(b))
            };
            let gap_y = if rpc[1] != 0 {
                directional_gap(y_ext(a), y_ext(b), plane_sign_y(rpc[1]))
            } else {
                separation(y_ext(a), y_ext(b))
            };
            let gap_z = if rpc[2] != 0 {
                directional_gap(z_ext(a), z_ext(b), rpc[2])
            } else {
                separation(z_ext(a), z_ext(b))
            };

            if (rpc[0] != 0 && gap_x < 0.0)
                || (rpc[1] != 0 && gap_y < 0.0)
                || (rpc[2] != 0 && gap_z < 0.0)
            {
                out.premise_ok = false;
                return Ok(out);
            }

            let gap = match spec.primary_axis {
                AxisSel::None => None,
                AxisSel::X => Some(gap_x.abs()),
                AxisSel::Y => Some(gap_y.abs()),
                AxisSel::Z => Some(gap_z.abs()),
                AxisSel::Xy => Some((gap_x * gap_x + gap_y * gap_y).sqrt()),
            };
            if let Some(g) = gap {
                out.band = band_score(g, min_px, max_px, falloff_px);
                out.gap_above_band = g > max_px;
            }

            if spec.require_overlap {
                out.overlap = match spec.overlap_axis {
                    AxisSel::None => 1.0,
                    AxisSel::X => overlap_ratio_1d(x_ext(a), x_ext(b)),
                    AxisSel::Y => overlap_ratio_1d(y_ext(a), y_ext(b)),
                    AxisSel::Z => overlap_ratio_1d(z_ext(a), z_ext(b)),
                    AxisSel::Xy => {
                        overlap_ratio_1d(x_ext(a), x_ext(b)) * overlap_ratio_1d(y_ext(a), y_ext(b))
                    }
                };
            }
        }
        RelationKind::Alignment => {
            let boxes: Vec<&PxBox> = args
                .iter()
                .map(|n| view.get(n))
                .collect::<Result<Vec<_>>>()?;
            let dev = |vals: Vec<f64>| -> f64 {
                let mut min = f64::INFINITY;
                let mut max = f64::NEG_INFINITY;
                for v in vals {
                    min = min.min(v);
                    max = max.max(v);
                }
                max - min
            };
            let deviation = match spec.align_mode {
                AlignMode::None => 0.0,
                AlignMode::CenterX => dev(boxes.iter().map(|b| b.center_x()).collect()),
                AlignMode::CenterY => dev(boxes.iter().map(|b| b.center_y()).collect()),
                AlignMode::CenterZ => {
                    let dx = dev(boxes.iter().map(|b| b.center_x()).collect());
                    let dy = dev(boxes.iter().map(|b| b.center_y()).collect());
                    dx.max(dy)
                }
            };
            out.misc = if deviation <= align_tol_px {
                1.0
            } else {
                gauss(deviation - align_tol_px, falloff_px)
            };
        }
        RelationKind::Anchoring => {
            let b = view.get(&args[0])?;
            let zone = spec.anchor_zone.ok_or_else(|| Error::InvalidConfig {
                detail: format!("anchoring relation '{}' lacks a zone", def.name),
            })?;
            let excess = match zone {
                AnchorZone::CentralColumn => {
                    let half = t * view.plane_w / 6.0;
                    let mid = view.plane_w / 2.0;
                    (b.center_x() - mid).abs() - half
                }
                AnchorZone::NearFrontEdge => {
                    let edge = view.plane_h * (1.0 - 0.15 * t);
                    edge - b.center_y()
                }
            };
            out.misc = if excess <= 0.0 {
                1.0
            } else {
                gauss(excess, falloff_px)
            };
        }
    }
    Ok(out)
}

/// Constraint score in `[0, 1]`. 1 means fully satisfied; 0 means the
/// categorical premise fails (e.g. A is not left of B at all).
pub fn score(
    instance: &RelationInstance,
    layout: &Layout,
    boundary: &Boundary,
    lib: &RelationLibrary,
) -> Result<f64> {
    let view = PxView::from_layout(layout, boundary);
    score_view(instance, &view, lib)
}

/// Same scorer against a prebuilt pixel view (the genetic fitness path).
pub fn score_view(
    instance: &RelationInstance,
    view: &PxView,
    lib: &RelationLibrary,
) -> Result<f64> {
    let def = resolve(instance, lib)?;
    Ok(eval(def, &instance.args, view, 1.0)?.score())
}

/// Boolean validator: the tolerance-widened score must reach 0.5.
pub fn validate(
    instance: &RelationInstance,
    layout: &Layout,
    boundary: &Boundary,
    lib: &RelationLibrary,
) -> Result<bool> {
    let def = resolve(instance, lib)?;
    let view = PxView::from_layout(layout, boundary);
    let ev = eval(def, &instance.args, &view, def.validation.tolerance_frac)?;
    Ok(ev.score() >= VALIDATE_THRESHOLD)
}

/// What a failed validation says about the constraint parameters.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum FailureEvidence {
    /// The measured gap overflowed the band; widening `max_gap_frac` helps.
    GapOverflow,
    /// An overlap, alignment, or anchoring term fell short; widening the
    /// validation tolerance helps.
    OverlapShortfall,
}

/// Classify a validation failure, or `None` when the categorical premise
/// itself failed (no threshold adjustment can help; the loop re-grounds or
/// re-samples instead).
pub fn diagnose(
    instance: &RelationInstance,
    layout: &Layout,
    boundary: &Boundary,
    lib: &RelationLibrary,
) -> Result<Option<FailureEvidence>> {
    let def = resolve(instance, lib)?;
    let view = PxView::from_layout(layout, boundary);
    let ev = eval(def, &instance.args, &view, def.validation.tolerance_frac)?;
    if !ev.premise_ok {
        return Ok(None);
    }
    if ev.score() >= VALIDATE_THRESHOLD {
        return Ok(None);
    }
    if ev.gap_above_band {
        Ok(Some(FailureEvidence::GapOverflow))
    } else {
        Ok(Some(FailureEvidence::OverlapShortfall))
    }
}

/// Lattice-stage check. Relative relations compare sign patterns against the
/// rpc on every nonzero axis; alignment relations require equal cross-axis
/// coordinates; anchoring is continuous-only and always passes here.
pub fn discrete_check(
    instance: &RelationInstance,
    discrete: &DiscretePoseSet,
    lib: &RelationLibrary,
) -> Result<bool> {
    let def = resolve(instance, lib)?;
    let pose = |name: &str| -> Result<[i64; 3]> {
        discrete
            .poses
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownObject { name: name.into() })
    };
    match def.kind {
        RelationKind::Anchoring => Ok(true),
        RelationKind::Relative => {
            let a = pose(&instance.args[0])?;
            let b = pose(&instance.args[1])?;
            let rpc = def.rpc.expect("relative relations carry an rpc");
            for axis in 0..3 {
                if rpc[axis] != 0 {
                    let diff = a[axis] - b[axis];
                    if diff.signum() != rpc[axis] as i64 {
                        return Ok(false);
                    }
                }
            }
            Ok(true)
        }
        RelationKind::Alignment => {
            let axes: &[usize] = match def.constraint.align_mode {
                AlignMode::CenterY => &[1, 2],
                AlignMode::CenterX => &[0, 2],
                AlignMode::CenterZ => &[0, 1],
                AlignMode::None => &[],
            };
            let first = pose(&instance.args[0])?;
            for arg in &instance.args[1..] {
                let p = pose(arg)?;
                for &axis in axes {
                    if p[axis] != first[axis] {
                        return Ok(false);
                    }
                }
            }
            Ok(true)
        }
    }
}
