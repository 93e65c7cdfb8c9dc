//! Prompt templates bundled as data assets, plus tagged-block parsing.
//!
//! The prompts delimit machine-readable output with a repeated closing-style
//! token (`</pose> ... </pose>`), so the parser pairs occurrences
//! positionally instead of matching open/close forms.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum TemplateId {
    ArlDefine,
    ArlConstraint,
    ArlValidation,
    RrgDescribe,
    RrgCritique,
    FastPoses,
    FastRelations,
    JudgePosAli,
}

impl TemplateId {
    pub fn from_str(id: &str) -> Result<Self> {
        Ok(match id {
            "arl_define" => TemplateId::ArlDefine,
            "arl_constraint" => TemplateId::ArlConstraint,
            "arl_validation" => TemplateId::ArlValidation,
            "rrg_describe" => TemplateId::RrgDescribe,
            "rrg_critique" => TemplateId::RrgCritique,
            "fast_poses" => TemplateId::FastPoses,
            "fast_relations" => TemplateId::FastRelations,
            "judge_pos_ali" => TemplateId::JudgePosAli,
            other => return Err(Error::UnknownTemplate { id: other.into() }),
        })
    }

    pub fn text(&self) -> &'static str {
        match self {
            TemplateId::ArlDefine => include_str!("../../templates/arl_define.txt"),
            TemplateId::ArlConstraint => include_str!("../../templates/arl_constraint.txt"),
            TemplateId::ArlValidation => include_str!("../../templates/arl_validation.txt"),
            TemplateId::RrgDescribe => include_str!("../../templates/rrg_describe.txt"),
            TemplateId::RrgCritique => include_str!("../../templates/rrg_critique.txt"),
            TemplateId::FastPoses => include_str!("../../templates/fast_poses.txt"),
            TemplateId::FastRelations => include_str!("../../templates/fast_relations.txt"),
            TemplateId::JudgePosAli => include_str!("../../templates/judge_pos_ali.txt"),
        }
    }

    pub fn placeholders(&self) -> &'static [&'static str] {
        match self {
            TemplateId::ArlDefine => &["<complete_relationship>", "<incomplete_relationship>"],
            TemplateId::ArlConstraint => &[
                "<relationship_name>",
                "<relationship_definition>",
                "<spatial_description>",
            ],
            TemplateId::ArlValidation => &["<relationship_name>", "<relationship_definition>"],
            TemplateId::RrgDescribe => &[
                "<relations_library_key>",
                "<correction_section>",
                "<obj_list>",
                "<task_instruction>",
            ],
            TemplateId::RrgCritique => &["<obj_list>", "<task_instruction>", "<description>"],
            TemplateId::FastPoses => &["<object_list>", "<scene_description>"],
            TemplateId::FastRelations => &[
                "<object_list>",
                "<scene_description>",
                "<relationship_library>",
            ],
            TemplateId::JudgePosAli => &["<layout_render>", "<task_instruction>"],
        }
    }
}

/// Exact textual substitution of every declared placeholder.
pub fn render_template(
    id: TemplateId,
    substitutions: &BTreeMap<&str, String>,
) -> Result<String> {
    let mut text = id.text().to_string();
    for placeholder in id.placeholders() {
        let value = substitutions
            .get(placeholder)
            .ok_or_else(|| Error::PlaceholderUnbound {
                placeholder: (*placeholder).to_string(),
            })?;
        text = text.replace(placeholder, value);
    }
    Ok(text)
}

/// Text strictly between the first and second occurrences of the literal
/// token, trimmed. Further occurrences are ignored.
pub fn parse_tagged_block(text: &str, tag: &str) -> Result<String> {
    let start = text
        .find(tag)
        .ok_or_else(|| Error::TagNotFound { tag: tag.into() })?;
    let after = start + tag.len();
    let end_rel = text[after..]
        .find(tag)
        .ok_or_else(|| Error::TagNotFound { tag: tag.into() })?;
    Ok(text[after..after + end_rel].trim().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_substitutes_all_placeholders() {
        let mut subs = BTreeMap::new();
        subs.insert("<object_list>", "['notebook', 'pen']".to_string());
        subs.insert("<scene_description>", "a tidy desk".to_string());
        let out = render_template(TemplateId::FastPoses, &subs).unwrap();
        assert!(out.contains("['notebook', 'pen']"));
        assert!(out.contains("a tidy desk"));
        assert!(!out.contains("<object_list>"));
        assert!(!out.contains("<scene_description>"));
    }

    #[test]
    fn render_names_missing_placeholder() {
        let mut subs = BTreeMap::new();
        subs.insert("<obj_list>", "['cup']".to_string());
        subs.insert("<description>", "text".to_string());
        match render_template(TemplateId::RrgCritique, &subs) {
            Err(Error::PlaceholderUnbound { placeholder }) => {
                assert_eq!(placeholder, "<task_instruction>");
            }
            other => panic!("expected unbound placeholder, got {other:?}"),
        }
    }

    #[test]
    fn tagged_block_first_pair_wins() {
        let text = "preamble </pose>\nnotebook: [0, 0, 0]\n</pose> trailing </pose>extra</pose>";
        assert_eq!(
            parse_tagged_block(text, "</pose>").unwrap(),
            "notebook: [0, 0, 0]"
        );
    }

    #[test]
    fn tagged_block_errors() {
        assert!(matches!(
            parse_tagged_block("nothing here", "</pose>"),
            Err(Error::TagNotFound { .. })
        ));
        assert!(matches!(
            parse_tagged_block("one </pose> only", "</pose>"),
            Err(Error::TagNotFound { .. })
        ));
    }

    #[test]
    fn tagged_block_round_trip() {
        let inner = "knife: [2, 0, 0]\nfork: [-1, 0, 0]";
        let wrapped = format!("lead\n</pose>\n{inner}\n</pose>\ntail");
        assert_eq!(parse_tagged_block(&wrapped, "</pose>").unwrap(), inner);
    }
}
