//! The closed loop: Stage-1 sampling, Stage-2 grounding, third-stage
//! validation, conservative parameter adjustment, re-grounding, and
//! re-sampling up to the round budget.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fast::{consistency_filter, extract_relations, gen_discrete_coords, repair_incomplete, TopoRelationSet};
use crate::gateway::Gateway;
use crate::grounding::{
    build_support_graph, evolve, init_population, normalize, to_bbox, GroundingConfig,
};
use crate::metrics::{build_report, MetricsReport, DEFAULT_TAU};
use crate::relations::{
    adjust_parameters, diagnose, validate, RelationInstance, RelationLibrary,
};
use crate::scene::{Layout, SceneSpec};
use crate::slow::{rrg_with_notes, DEFAULT_MAX_ITERS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub max_rounds: u32,
    pub max_adjustments_per_relation: u32,
    pub regrounds_per_round: u32,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            max_rounds: 5,
            max_adjustments_per_relation: 3,
            regrounds_per_round: 2,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_rounds == 0 || self.max_adjustments_per_relation == 0 || self.regrounds_per_round == 0
        {
            return Err(Error::InvalidConfig {
                detail: "loop budgets must all be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// One conservative widening applied during a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentRecord {
    pub relation: String,
    pub field: String,
    pub old: f64,
    pub new: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub solved: bool,
    pub rounds_used: u32,
    pub final_layout: Layout,
    pub surviving_relations: TopoRelationSet,
    pub adjustments: Vec<AdjustmentRecord>,
    pub metrics: MetricsReport,
    pub fingerprints: Vec<String>,
}

/// Run every surviving relation's validator; failures come back in input
/// order. A missing library entry is an error, not a failure.
pub fn validate_layout(
    layout: &Layout,
    relations: &TopoRelationSet,
    boundary: &crate::scene::Boundary,
    lib: &RelationLibrary,
) -> Result<Vec<RelationInstance>> {
    let mut failures = Vec::new();
    for instance in &relations.relations {
        if !validate(instance, layout, boundary, lib)? {
            failures.push(instance.clone());
        }
    }
    Ok(failures)
}

/// The full pipeline with self-validation. Library mutations (synthesized
/// relations, conservative adjustments) are confined to this run's copy.
pub fn run_closed_loop(
    scene: &SceneSpec,
    lib: &RelationLibrary,
    gateway: &Gateway,
    loop_cfg: &LoopConfig,
    ground_cfg: &GroundingConfig,
) -> Result<RunReport> {
    scene.validate()?;
    loop_cfg.validate()?;
    ground_cfg.validate()?;

    let mut lib = lib.clone();
    let mut adjustments: Vec<AdjustmentRecord> = Vec::new();
    let mut carry_notes: Vec<String> = Vec::new();
    // best layout so far by physical score, kept for the unsolved verdict
    let mut fallback: Option<(f64, Layout, TopoRelationSet)> = None;
    let requested = scene.object_names();

    for round in 1..=loop_cfg.max_rounds {
        // Stage 1: description, discrete coordinates, relations, filtering,
        // completeness repair. An unapproved description after the iteration
        // budget still proceeds; the filter and repair guard completeness.
        let desc = rrg_with_notes(scene, &lib, gateway, DEFAULT_MAX_ITERS, &carry_notes)?;
        let (coords, _missing) = gen_discrete_coords(&desc, scene, gateway)?;
        let extracted = extract_relations(&desc, scene, &mut lib, gateway)?;
        let (filtered, incomplete) =
            consistency_filter(&coords, &extracted, &requested, &lib)?;
        let (coords, relations) = if incomplete.is_empty() {
            (coords, filtered)
        } else {
            repair_incomplete(coords, filtered, &incomplete, scene, &desc, &lib, gateway)?
        };

        let support = build_support_graph(&relations, scene, &lib)?;

        for reground in 0..=loop_cfg.regrounds_per_round {
            let mut cfg = ground_cfg.clone();
            cfg.rng_seed = derive_seed(ground_cfg.rng_seed, round, reground);
            let population = init_population(&coords, scene, &support, &cfg)?;
            let meta = population.meta.clone();
            let (best, fit, _generations) = evolve(population, &relations, &lib, &cfg)?;
            let plane_points = normalize(&best, &meta);
            let layout = to_bbox(&plane_points, scene, &support, &cfg)?;

            let physical = fit.physical();
            let better = fallback
                .as_ref()
                .map(|(p, _, _)| physical > *p)
                .unwrap_or(true);
            if better {
                fallback = Some((physical, layout.clone(), relations.clone()));
            }

            let failures = validate_layout(&layout, &relations, &scene.boundary, &lib)?;
            if failures.is_empty() {
                let metrics =
                    build_report(&layout, &scene.boundary, &requested, DEFAULT_TAU, None)?;
                return Ok(RunReport {
                    solved: true,
                    rounds_used: round,
                    final_layout: layout,
                    surviving_relations: relations,
                    adjustments,
                    metrics,
                    fingerprints: gateway.fingerprints_used(),
                });
            }

            carry_notes = failures
                .iter()
                .map(|f| format!("The relation {f} was not satisfied by the grounded layout."))
                .collect();

            if reground == loop_cfg.regrounds_per_round {
                break; // round budget spent; re-sample Stage 1
            }

            // conservative adjustment for each failed relation within budget
            for instance in &failures {
                let Some(evidence) = diagnose(instance, &layout, &scene.boundary, &lib)? else {
                    continue; // categorical failure; only re-grounding helps
                };
                let def = lib.get(&instance.relation)?.clone();
                if def.revision >= loop_cfg.max_adjustments_per_relation {
                    continue;
                }
                match adjust_parameters(&def, evidence) {
                    Ok(new_def) => {
                        let record = if new_def.constraint.max_gap_frac
                            != def.constraint.max_gap_frac
                        {
                            AdjustmentRecord {
                                relation: def.name.clone(),
                                field: "max_gap_frac".into(),
                                old: def.constraint.max_gap_frac,
                                new: new_def.constraint.max_gap_frac,
                            }
                        } else {
                            AdjustmentRecord {
                                relation: def.name.clone(),
                                field: "tolerance_frac".into(),
                                old: def.validation.tolerance_frac,
                                new: new_def.validation.tolerance_frac,
                            }
                        };
                        adjustments.push(record);
                        lib.apply_adjustment(new_def)?;
                    }
                    Err(Error::AdjustmentLimit { .. }) => continue,
                    Err(e) => return Err(e),
                }
            }
        }
    }

    let (_, layout, relations) = fallback.expect("every round grounds at least once");
    let metrics = build_report(&layout, &scene.boundary, &requested, DEFAULT_TAU, None)?;
    Ok(RunReport {
        solved: false,
        rounds_used: loop_cfg.max_rounds,
        final_layout: layout,
        surviving_relations: relations,
        adjustments,
        metrics,
        fingerprints: gateway.fingerprints_used(),
    })
}

fn derive_seed(base: u64, round: u32, reground: u32) -> u64 {
    base ^ (round as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ (reground as u64).wrapping_mul(0x85eb_ca6b_c2b2_ae63)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Pose, Vec3};
    use crate::relations::builtin_library;
    use crate::scene::{Boundary, ObjectSpec};

    fn scene_of(objects: &[(&str, Vec3)], seed: u64) -> SceneSpec {
        SceneSpec {
            instruction: "Arrange the table".into(),
            objects: objects
                .iter()
                .map(|(n, s)| ObjectSpec::new(*n, *s, *n))
                .collect(),
            boundary: Boundary::new(120.0, 60.0),
            rng_seed: seed,
        }
    }

    fn small_cfg(seed: u64) -> GroundingConfig {
        GroundingConfig {
            population: 200,
            generations: 60,
            rng_seed: seed,
            ..GroundingConfig::default()
        }
    }

    #[test]
    fn validate_layout_lists_failures_in_order() {
        let lib = builtin_library();
        let mut layout = Layout::new();
        layout.insert(
            "fork",
            Pose::at(Vec3::new(80.0, 30.0, 1.0)), // right of the plate: violated
            Vec3::new(2.0, 20.0, 2.0),
            (0.0, 0.0),
        );
        layout.insert(
            "plate",
            Pose::at(Vec3::new(60.0, 30.0, 1.0)),
            Vec3::new(26.0, 26.0, 2.0),
            (0.0, 0.0),
        );
        let mut relations = TopoRelationSet::default();
        relations.push_unique(RelationInstance::new("left_of", vec!["fork", "plate"]));
        let boundary = Boundary::new(120.0, 60.0);
        let failures = validate_layout(&layout, &relations, &boundary, &lib).unwrap();
        assert_eq!(failures.len(), 1);
        assert_eq!(failures[0].relation, "left_of");

        let mut unknown = TopoRelationSet::default();
        unknown.push_unique(RelationInstance::new("behind_of", vec!["fork", "plate"]));
        assert!(matches!(
            validate_layout(&layout, &unknown, &boundary, &lib),
            Err(Error::MissingRelation { .. })
        ));
    }

    #[test]
    fn mock_scene_solves_in_one_round() {
        let scene = scene_of(
            &[
                ("plate", Vec3::new(26.0, 26.0, 2.0)),
                ("glass", Vec3::new(8.0, 8.0, 12.0)),
                ("fork", Vec3::new(2.0, 20.0, 2.0)),
                ("napkin", Vec3::new(16.0, 16.0, 1.0)),
            ],
            11,
        );
        let lib = builtin_library();
        let gateway = Gateway::mock("standard").unwrap();
        let report =
            run_closed_loop(&scene, &lib, &gateway, &LoopConfig::default(), &small_cfg(11))
                .unwrap();
        assert!(report.solved, "metrics: {:?}", report.metrics);
        assert_eq!(report.rounds_used, 1);
        assert_eq!(report.metrics.fc, 100.0);
        // solved implies the validators all pass on the reported layout
        let failures = validate_layout(
            &report.final_layout,
            &report.surviving_relations,
            &scene.boundary,
            &builtin_library(),
        )
        .unwrap();
        assert!(failures.is_empty());
    }

    #[test]
    fn omitted_object_is_still_placed() {
        let scene = scene_of(
            &[
                ("plate", Vec3::new(26.0, 26.0, 2.0)),
                ("glass", Vec3::new(8.0, 8.0, 12.0)),
                ("napkin", Vec3::new(16.0, 16.0, 1.0)),
            ],
            5,
        );
        let lib = builtin_library();
        let gateway = Gateway::mock("omit:napkin").unwrap();
        let report =
            run_closed_loop(&scene, &lib, &gateway, &LoopConfig::default(), &small_cfg(5))
                .unwrap();
        assert!(report.final_layout.boxes.contains_key("napkin"));
        assert_eq!(report.metrics.fc, 100.0);
    }

    #[test]
    fn infeasible_scene_exhausts_rounds_with_fallback() {
        // two objects wider than half the table cannot satisfy a side-by-side
        // premise; every round fails and the report keeps the best layout
        let scene = scene_of(
            &[
                ("slab-0", Vec3::new(66.0, 20.0, 2.0)),
                ("slab-1", Vec3::new(66.0, 20.0, 2.0)),
            ],
            3,
        );
        let lib = builtin_library();
        let gateway = Gateway::mock("standard").unwrap();
        let loop_cfg = LoopConfig {
            max_rounds: 2, // keep the test fast; the budget rule is the same
            ..LoopConfig::default()
        };
        let cfg = GroundingConfig {
            population: 60,
            generations: 10,
            rng_seed: 3,
            ..GroundingConfig::default()
        };
        let report = run_closed_loop(&scene, &lib, &gateway, &loop_cfg, &cfg).unwrap();
        assert!(!report.solved);
        assert_eq!(report.rounds_used, loop_cfg.max_rounds);
        assert_eq!(report.final_layout.len(), 2);
    }

    #[test]
    fn gap_overflow_is_adjusted_and_solved() {
        // three 18 cm blocks chained right_of, plus a skip relation from the
        // third back to the first whose gap necessarily exceeds the band:
        // the loop must widen max_gap_frac and then validate
        let scene = scene_of(
            &[
                ("block-a", Vec3::new(18.0, 12.0, 4.0)),
                ("block-b", Vec3::new(18.0, 12.0, 4.0)),
                ("block-c", Vec3::new(18.0, 12.0, 4.0)),
            ],
            23,
        );
        let lib = builtin_library();
        let gateway = Gateway::mock("skipchain").unwrap();
        let report = run_closed_loop(
            &scene,
            &lib,
            &gateway,
            &LoopConfig::default(),
            &small_cfg(23),
        )
        .unwrap();
        assert!(report.solved, "metrics: {:?}", report.metrics);
        assert!(
            report
                .adjustments
                .iter()
                .any(|a| a.relation == "right_of" && a.field == "max_gap_frac"),
            "adjustments: {:?}",
            report.adjustments
        );
    }
}
