//! The slow system: generate an expected-scene description, critique it, and
//! iterate until approved.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::{parse_tagged_block, render_template, ChatRequest, Gateway, TemplateId};
use crate::relations::RelationLibrary;
use crate::scene::SceneSpec;

pub const DEFAULT_MAX_ITERS: u32 = 3;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneDescription {
    pub text: String,
    pub mentioned_objects: BTreeSet<String>,
    pub iterations_used: u32,
    pub approved: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CritiqueResult {
    pub approved: bool,
    pub issues: Vec<String>,
}

/// `['a', 'b']` rendering shared by every prompt that lists objects.
pub fn format_object_list(names: &[String]) -> String {
    let quoted: Vec<String> = names.iter().map(|n| format!("'{n}'")).collect();
    format!("[{}]", quoted.join(", "))
}

pub fn generate_description(
    scene: &SceneSpec,
    lib: &RelationLibrary,
    gateway: &Gateway,
) -> Result<SceneDescription> {
    generate_with_correction(scene, lib, gateway, "")
}

fn generate_with_correction(
    scene: &SceneSpec,
    lib: &RelationLibrary,
    gateway: &Gateway,
    correction: &str,
) -> Result<SceneDescription> {
    let names = scene.object_names();
    let mut subs = BTreeMap::new();
    subs.insert("<relations_library_key>", lib.prompt_catalog());
    subs.insert("<correction_section>", correction.to_string());
    subs.insert("<obj_list>", format_object_list(&names));
    subs.insert("<task_instruction>", scene.instruction.clone());
    let prompt = render_template(TemplateId::RrgDescribe, &subs)?;
    let response = gateway.complete(&ChatRequest::user(prompt))?;
    let text = parse_tagged_block(&response, "</Description>")?;
    let mentioned_objects = names
        .iter()
        .filter(|n| text.contains(n.as_str()))
        .cloned()
        .collect();
    Ok(SceneDescription {
        text,
        mentioned_objects,
        iterations_used: 1,
        approved: false,
    })
}

pub fn critique_description(
    scene: &SceneSpec,
    desc: &SceneDescription,
    gateway: &Gateway,
) -> Result<CritiqueResult> {
    let mut subs = BTreeMap::new();
    subs.insert("<obj_list>", format_object_list(&scene.object_names()));
    subs.insert("<task_instruction>", scene.instruction.clone());
    subs.insert("<description>", desc.text.clone());
    let prompt = render_template(TemplateId::RrgCritique, &subs)?;
    let response = gateway.complete(&ChatRequest::user(prompt))?;
    parse_critique(&response)
}

/// Pure parsing of a critique response: `</output>` carries the verdict,
/// `</issue>` optionally carries the problem list.
pub fn parse_critique(response: &str) -> Result<CritiqueResult> {
    let verdict = parse_tagged_block(response, "</output>")?;
    let approved = match verdict.to_ascii_lowercase().as_str() {
        "true" => true,
        "false" => false,
        _ => return Err(Error::UnparseableBool { text: verdict }),
    };
    let issues = match parse_tagged_block(response, "</issue>") {
        Ok(block) => block
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(str::to_string)
            .collect(),
        Err(Error::TagNotFound { .. }) => Vec::new(),
        Err(e) => return Err(e),
    };
    Ok(CritiqueResult {
        approved,
        issues: if approved { Vec::new() } else { issues },
    })
}

/// Reasoning-reflection-generation loop: regenerate with the reviewer's
/// issues appended until the description is approved and covers every object,
/// or the iteration budget runs out (the last candidate is then returned
/// flagged unapproved).
pub fn rrg(
    scene: &SceneSpec,
    lib: &RelationLibrary,
    gateway: &Gateway,
    max_iters: u32,
) -> Result<SceneDescription> {
    rrg_with_notes(scene, lib, gateway, max_iters, &[])
}

/// Same loop, seeded with correction notes from a previous round of the
/// closed loop.
pub fn rrg_with_notes(
    scene: &SceneSpec,
    lib: &RelationLibrary,
    gateway: &Gateway,
    max_iters: u32,
    initial_notes: &[String],
) -> Result<SceneDescription> {
    assert!(max_iters >= 1, "max_iters must be at least 1");
    let mut correction = format_correction(initial_notes);
    let mut last: Option<SceneDescription> = None;
    for iteration in 1..=max_iters {
        let mut desc = generate_with_correction(scene, lib, gateway, &correction)?;
        desc.iterations_used = iteration;
        let critique = critique_description(scene, &desc, gateway)?;
        let missing: Vec<String> = scene
            .object_names()
            .into_iter()
            .filter(|n| !desc.mentioned_objects.contains(n))
            .collect();
        if critique.approved && missing.is_empty() {
            desc.approved = true;
            return Ok(desc);
        }
        let mut issues = critique.issues;
        for name in missing {
            issues.push(format!("The object '{name}' is never mentioned."));
        }
        correction = format_correction(&issues);
        last = Some(desc);
    }
    Ok(last.expect("max_iters >= 1 produced at least one candidate"))
}

fn format_correction(issues: &[String]) -> String {
    if issues.is_empty() {
        return String::new();
    }
    let mut out = String::from("\nCorrection notes from the previous review:\n");
    for (i, issue) in issues.iter().enumerate() {
        out.push_str(&format!("{}. {}\n", i + 1, issue));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::relations::builtin_library;
    use crate::scene::{Boundary, ObjectSpec, SceneSpec};

    fn dining_scene() -> SceneSpec {
        let names = ["plate", "glass", "knife", "fork", "spoon", "napkin"];
        SceneSpec {
            instruction: "Arrange a scene suitable for family dining".into(),
            objects: names
                .iter()
                .map(|n| ObjectSpec::new(*n, Vec3::new(10.0, 10.0, 3.0), *n))
                .collect(),
            boundary: Boundary::new(120.0, 60.0),
            rng_seed: 7,
        }
    }

    #[test]
    fn description_mentions_every_object() {
        let scene = dining_scene();
        let lib = builtin_library();
        let gateway = Gateway::mock("standard").unwrap();
        let desc = generate_description(&scene, &lib, &gateway).unwrap();
        let names: BTreeSet<String> = scene.object_names().into_iter().collect();
        assert_eq!(desc.mentioned_objects, names);
    }

    #[test]
    fn critique_parsing() {
        let ok = parse_critique("</output>\nTrue\n</output>").unwrap();
        assert!(ok.approved && ok.issues.is_empty());

        let bad = parse_critique(
            "</issue>\n1. Missing clarification on the cup.\n2. Overlap risk at the center.\n</issue>\n</output>\nFalse\n</output>",
        )
        .unwrap();
        assert!(!bad.approved);
        assert_eq!(bad.issues.len(), 2);

        assert!(matches!(
            parse_critique("</output>\nmaybe\n</output>"),
            Err(Error::UnparseableBool { .. })
        ));
    }

    #[test]
    fn rrg_first_pass_approval() {
        let scene = dining_scene();
        let lib = builtin_library();
        let gateway = Gateway::mock("standard").unwrap();
        let desc = rrg(&scene, &lib, &gateway, DEFAULT_MAX_ITERS).unwrap();
        assert!(desc.approved);
        assert_eq!(desc.iterations_used, 1);
    }

    #[test]
    fn rrg_second_pass_after_issue() {
        let scene = dining_scene();
        let lib = builtin_library();
        let gateway = Gateway::mock("picky").unwrap();
        let desc = rrg(&scene, &lib, &gateway, DEFAULT_MAX_ITERS).unwrap();
        assert!(desc.approved);
        assert_eq!(desc.iterations_used, 2);
    }

    #[test]
    fn rrg_exhausted_returns_unapproved() {
        let scene = dining_scene();
        let lib = builtin_library();
        // picky approves only revised descriptions, which need 2 iterations
        let gateway = Gateway::mock("picky").unwrap();
        let desc = rrg(&scene, &lib, &gateway, 1).unwrap();
        assert!(!desc.approved);
        assert_eq!(desc.iterations_used, 1);
    }

    #[test]
    fn rrg_is_deterministic() {
        let scene = dining_scene();
        let lib = builtin_library();
        let a = rrg(&scene, &lib, &Gateway::mock("standard").unwrap(), 3).unwrap();
        let b = rrg(&scene, &lib, &Gateway::mock("standard").unwrap(), 3).unwrap();
        assert_eq!(a.text, b.text);
    }
}
