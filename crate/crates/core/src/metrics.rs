//! Evaluation suite: collision-free score, in-boundary score, functional
//! completeness, the weighted aggregate, and the LLM-judged semantic scores.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{parse_tagged_block, render_template, ChatRequest, Gateway, Role, TemplateId};
use crate::geometry::{iou, is_stacking_pair};
use crate::scene::{Boundary, Layout};

pub const DEFAULT_TAU: f64 = 0.01;

/// Comparison slack for containment checks, absorbing pixel-to-cm conversion
/// noise (~1e-13 cm). Far below any physical significance.
pub const CONTAINMENT_EPS: f64 = 1e-9;

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct CollisionStats {
    /// 1 - C/M in [0, 1]; 1 when there are no pairs.
    pub cf: f64,
    /// Collision rate C/M.
    pub rho: f64,
    /// Mean IoU over colliding pairs; 0 when none collide.
    pub mean_iou: f64,
}

/// All-pairs IoU scan with threshold `tau`. A single object has no pairs and
/// scores a clean 1.
pub fn collision_free_score(layout: &Layout, tau: f64) -> Result<CollisionStats> {
    let boxes: Vec<_> = layout.boxes.values().collect();
    let n = boxes.len();
    let pairs = n * (n - 1) / 2;
    if pairs == 0 {
        return Ok(CollisionStats {
            cf: 1.0,
            rho: 0.0,
            mean_iou: 0.0,
        });
    }
    let mut colliding = 0usize;
    let mut iou_sum = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let v = iou(boxes[i], boxes[j])?;
            if v > tau {
                colliding += 1;
                iou_sum += v;
            }
        }
    }
    let rho = colliding as f64 / pairs as f64;
    Ok(CollisionStats {
        cf: 1.0 - rho,
        rho,
        mean_iou: if colliding == 0 {
            0.0
        } else {
            iou_sum / colliding as f64
        },
    })
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct BoundaryStats {
    /// 1 - (V_T + V_S)/(N + S); higher is better.
    pub ib: f64,
    /// The raw violation ratio (V_T + V_S)/(N + S).
    pub violation_ratio: f64,
    pub containment_violations: u32,
    pub stacking_violations: u32,
    pub stacking_pairs: u32,
}

/// Containment and stacking-quality score. An object violates containment
/// when its xy box leaves the surface extents or its bottom dips below the
/// surface; a stacking pair violates when the bottom footprint fails to
/// contain the top footprint.
pub fn in_boundary_score(layout: &Layout, boundary: &Boundary) -> BoundaryStats {
    let names: Vec<&String> = layout.boxes.keys().collect();
    let n = names.len();

    let eps = CONTAINMENT_EPS;
    let x0 = boundary.origin_x - eps;
    let y0 = boundary.origin_y - eps;
    let x1 = boundary.origin_x + boundary.width + eps;
    let y1 = boundary.origin_y + boundary.depth + eps;

    let mut v_t = 0u32;
    for b in layout.boxes.values() {
        let contained =
            b.min.x >= x0 && b.max.x <= x1 && b.min.y >= y0 && b.max.y <= y1;
        if !contained || b.min.z < boundary.surface_z - eps {
            v_t += 1;
        }
    }

    let mut s = 0u32;
    let mut v_s = 0u32;
    for i in 0..n {
        for j in (i + 1)..n {
            let a = &layout.boxes[names[i]];
            let b = &layout.boxes[names[j]];
            if is_stacking_pair(a, b) {
                s += 1;
                let (bottom, top) = if a.max.z <= b.min.z { (a, b) } else { (b, a) };
                let contained = bottom.min.x <= top.min.x + eps
                    && top.max.x <= bottom.max.x + eps
                    && bottom.min.y <= top.min.y + eps
                    && top.max.y <= bottom.max.y + eps;
                if !contained {
                    v_s += 1;
                }
            }
        }
    }

    let denom = (n as u32 + s) as f64;
    let ratio = if denom == 0.0 {
        0.0
    } else {
        (v_t + v_s) as f64 / denom
    };
    BoundaryStats {
        ib: 1.0 - ratio,
        violation_ratio: ratio,
        containment_violations: v_t,
        stacking_violations: v_s,
        stacking_pairs: s,
    }
}

/// Fraction of requested objects present in the layout, by exact name.
pub fn functional_completeness(requested: &[String], layout: &Layout) -> f64 {
    assert!(!requested.is_empty(), "requested list must be non-empty");
    let placed = requested
        .iter()
        .filter(|n| layout.boxes.contains_key(*n))
        .count();
    placed as f64 / requested.len() as f64
}

/// Weighted aggregate over percentage inputs:
/// `0.4*(CF+IB)/2 + 0.3*(Pos+Ali)/2 + 0.3*FC`.
pub fn psf(cf: f64, ib: f64, pos: f64, ali: f64, fc: f64) -> f64 {
    0.4 * ((cf + ib) / 2.0) + 0.3 * ((pos + ali) / 2.0) + 0.3 * fc
}

/// Flat report with percentages rounded to one decimal. `psf` is present only
/// when the judged scores are.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub cf: f64,
    pub ib: f64,
    pub ib_violation_ratio: f64,
    pub mean_iou: f64,
    pub rho: f64,
    pub fc: f64,
    pub pos: Option<f64>,
    pub ali: Option<f64>,
    pub psf: Option<f64>,
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Assemble the full report for a layout. `judged` carries (Pos, Ali)
/// percentages when an LLM judge was consulted.
pub fn build_report(
    layout: &Layout,
    boundary: &Boundary,
    requested: &[String],
    tau: f64,
    judged: Option<(f64, f64)>,
) -> Result<MetricsReport> {
    let collision = collision_free_score(layout, tau)?;
    let bounds = in_boundary_score(layout, boundary);
    let fc = functional_completeness(requested, layout);
    let cf_pct = round1(collision.cf * 100.0);
    let ib_pct = round1(bounds.ib * 100.0);
    let fc_pct = round1(fc * 100.0);
    let (pos, ali) = match judged {
        Some((p, a)) => (Some(round1(p)), Some(round1(a))),
        None => (None, None),
    };
    let psf_val = match (pos, ali) {
        (Some(p), Some(a)) => Some(round1(psf(cf_pct, ib_pct, p, a, fc_pct))),
        _ => None,
    };
    Ok(MetricsReport {
        cf: cf_pct,
        ib: ib_pct,
        ib_violation_ratio: round1(bounds.violation_ratio * 100.0),
        mean_iou: collision.mean_iou,
        rho: collision.rho,
        fc: fc_pct,
        pos,
        ali,
        psf: psf_val,
    })
}

/// Compact textual rendering handed to the judge prompt: one line per object.
pub fn layout_render_text(layout: &Layout) -> String {
    let mut lines = Vec::new();
    for (name, b) in &layout.boxes {
        let c = b.center();
        let s = b.size();
        lines.push(format!(
            "{name}: center [{:.1}, {:.1}, {:.1}] cm, size [{:.1}, {:.1}, {:.1}] cm",
            c.x, c.y, c.z, s.x, s.y, s.z
        ));
    }
    lines.join("\n")
}

/// Ask the configured judge for position and alignment scores (0-100). Parse
/// failures are retried twice with the failure fed back.
pub fn semantic_scores_llm(
    render: &str,
    instruction: &str,
    gateway: &Gateway,
) -> Result<(f64, f64)> {
    let mut subs = BTreeMap::new();
    subs.insert("<layout_render>", render.to_string());
    subs.insert("<task_instruction>", instruction.to_string());
    let prompt = render_template(TemplateId::JudgePosAli, &subs)?;
    let mut req = ChatRequest::user(prompt);
    let mut last = String::new();
    for _ in 0..=2 {
        let response = gateway.complete(&req)?;
        match parse_judge_scores(&response) {
            Ok(scores) => return Ok(scores),
            Err(e) => {
                last = e.to_string();
                req.push(Role::Assistant, response);
                req.push(
                    Role::User,
                    "Your previous response could not be parsed. Output exactly the requested format.",
                );
            }
        }
    }
    Err(Error::JudgeUnparseable { detail: last })
}

fn parse_judge_scores(response: &str) -> Result<(f64, f64)> {
    let block = parse_tagged_block(response, "</scores>")?;
    let mut pos = None;
    let mut ali = None;
    for line in block.lines() {
        let line = line.trim();
        if let Some(v) = line.strip_prefix("position:") {
            pos = v.trim().parse::<f64>().ok();
        } else if let Some(v) = line.strip_prefix("alignment:") {
            ali = v.trim().parse::<f64>().ok();
        }
    }
    match (pos, ali) {
        (Some(p), Some(a)) if (0.0..=100.0).contains(&p) && (0.0..=100.0).contains(&a) => {
            Ok((p, a))
        }
        _ => Err(Error::JudgeUnparseable {
            detail: format!("scores block: {block:?}"),
        }),
    }
}
