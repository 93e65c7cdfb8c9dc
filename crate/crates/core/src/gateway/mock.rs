//! Deterministic scripted completion policies.
//!
//! A mock policy is a pure function of the rendered prompt: it recognizes the
//! prompt family by its output-tag instructions, reads the object list back
//! out of the prompt, and emits a plausible tagged response. Identical
//! requests always yield identical responses.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum MockPolicy {
    /// Grid placer: anchor first, rows of four, `right_of` chains within a
    /// row and `above_of` links between rows.
    Standard {
        /// Name omitted from discrete-pose responses.
        omit: Option<String>,
        /// Whether a targeted repair call for the omitted object succeeds.
        repair: bool,
        /// Reject descriptions until a correction round marks them revised.
        picky: bool,
        /// Add one extra row relation skipping an object (`right_of` from the
        /// third object back to the first).
        skip_chain: bool,
    },
    /// Fixed judge scores.
    Judge { pos: u32, ali: u32 },
    /// Unparseable output for every request.
    Garbage,
}

impl MockPolicy {
    pub fn parse(policy: &str) -> Result<MockPolicy> {
        match policy {
            "standard" => Ok(standard_fields().into()),
            "picky" => {
                let mut f = standard_fields();
                f.picky = true;
                Ok(f.into())
            }
            "skipchain" => {
                let mut f = standard_fields();
                f.skip_chain = true;
                Ok(f.into())
            }
            "garbage" => Ok(MockPolicy::Garbage),
            other => {
                if let Some(name) = other.strip_prefix("omit:") {
                    let mut f = standard_fields();
                    f.omit = Some(name.to_string());
                    Ok(f.into())
                } else if let Some(name) = other.strip_prefix("forget:") {
                    let mut f = standard_fields();
                    f.omit = Some(name.to_string());
                    f.repair = true;
                    Ok(f.into())
                } else if let Some(scores) = other.strip_prefix("judge:") {
                    let (p, a) =
                        scores
                            .split_once(',')
                            .ok_or_else(|| Error::UnknownMockPolicy {
                                policy: other.into(),
                            })?;
                    let parse = |s: &str| {
                        s.trim()
                            .parse::<u32>()
                            .map_err(|_| Error::UnknownMockPolicy {
                                policy: other.into(),
                            })
                    };
                    Ok(MockPolicy::Judge {
                        pos: parse(p)?,
                        ali: parse(a)?,
                    })
                } else {
                    Err(Error::UnknownMockPolicy {
                        policy: other.into(),
                    })
                }
            }
        }
    }

    pub fn respond(&self, prompt: &str) -> String {
        if matches!(self, MockPolicy::Garbage) {
            return "???".to_string();
        }
        if prompt.contains("</Description>") {
            self.describe(prompt)
        } else if prompt.contains("</issue>") && prompt.contains("</output>") {
            self.critique(prompt)
        } else if prompt.contains("</pose>") {
            self.poses(prompt)
        } else if prompt.contains("</relationships>") {
            self.relations(prompt)
        } else if prompt.contains("</new_relationship>") {
            self.define_relation(prompt)
        } else if prompt.contains("constraint parameters:") {
            self.constraint_spec(prompt)
        } else if prompt.contains("validation parameters:") {
            "</func>\n{\"tolerance_frac\": 1.5, \"max_adjustments\": 3}\n</func>".to_string()
        } else if prompt.contains("</scores>") {
            self.judge()
        } else {
            "unrecognized prompt".to_string()
        }
    }

    fn fields(&self) -> StandardFields {
        match self {
            MockPolicy::Standard {
                omit,
                repair,
                picky,
                skip_chain,
            } => StandardFields {
                omit: omit.clone(),
                repair: *repair,
                picky: *picky,
                skip_chain: *skip_chain,
            },
            _ => standard_fields(),
        }
    }

    fn describe(&self, prompt: &str) -> String {
        let objects = parse_object_list(prompt);
        let revised = prompt.contains("Correction notes");
        let mut lines = Vec::new();
        if self.fields().picky && revised {
            lines.push("[revised]".to_string());
        }
        for (i, name) in objects.iter().enumerate() {
            if i == 0 {
                lines.push(format!(
                    "The {name} anchors the arrangement, placed first on the surface."
                ));
            } else {
                lines.push(format!(
                    "The {name} sits immediately to the right (x axis) of the previous object."
                ));
            }
        }
        format!("</Description>\n{}\n</Description>", lines.join("\n"))
    }

    fn critique(&self, prompt: &str) -> String {
        if self.fields().picky {
            let desc_ok = prompt.contains("[revised]");
            if !desc_ok {
                return "</issue>\n1. The arrangement needs one more revision pass.\n</issue>\n\n</output>\nFalse\n</output>".to_string();
            }
        }
        "</issue>\n</issue>\n\n</output>\nTrue\n</output>".to_string()
    }

    fn poses(&self, prompt: &str) -> String {
        let objects = parse_object_list(prompt);
        let fields = self.fields();
        let repair_call = prompt.contains("Current placed poses:");
        if repair_call {
            // targeted re-deployment of a single missing object
            let mut lines = Vec::new();
            for name in &objects {
                let withheld = fields.omit.as_deref() == Some(name.as_str()) && !fields.repair;
                if !withheld {
                    lines.push(format!("{name}: [-2, 0, 0]"));
                }
            }
            return format!("</pose>\n{}\n</pose>", lines.join("\n"));
        }
        let mut lines = Vec::new();
        for (i, name) in objects.iter().enumerate() {
            if fields.omit.as_deref() == Some(name.as_str()) {
                continue;
            }
            lines.push(format!("{name}: [{i}, 0, 0]"));
        }
        format!("</pose>\n{}\n</pose>", lines.join("\n"))
    }

    fn relations(&self, prompt: &str) -> String {
        let objects = parse_object_list(prompt);
        let fields = self.fields();
        let mut lines = Vec::new();
        for (i, name) in objects.iter().enumerate() {
            if i == 0 {
                continue; // the anchor is covered by being the anchor
            }
            let prev = &objects[i - 1];
            lines.push(format!("right_of('{name}', '{prev}')"));
        }
        if fields.skip_chain && objects.len() >= 3 {
            lines.push(format!("right_of('{}', '{}')", objects[2], objects[0]));
        }
        format!("</relationships>\n{}\n</relationships>", lines.join("\n"))
    }

    fn define_relation(&self, prompt: &str) -> String {
        let name = parse_field(prompt, "- incomplete relationship:").unwrap_or_default();
        let rpc = rpc_from_name(&name);
        let kind = if rpc != [0, 0, 0] || name.contains("near") {
            "Binary"
        } else if name.contains("align") {
            "Nary"
        } else {
            "Unary"
        };
        let definition = format!(
            "Obj_A is placed {} Obj_B following the axis signs of the RPC.",
            name.replace('_', " ")
        );
        if kind == "Binary" {
            format!(
                "</new_relationship>\n{{\"{name}\": {{\"type\": \"Binary\", \"definition\": \"{definition}\", \"RPC\": [{}, {}, {}]}}}}\n</new_relationship>",
                rpc[0], rpc[1], rpc[2]
            )
        } else {
            format!(
                "</new_relationship>\n{{\"{name}\": {{\"type\": \"{kind}\", \"definition\": \"{definition}\"}}}}\n</new_relationship>"
            )
        }
    }

    fn constraint_spec(&self, prompt: &str) -> String {
        let name = parse_field(prompt, "- relationship name:").unwrap_or_default();
        let rpc = rpc_from_name(&name);
        let body = if rpc[2] != 0 {
            "{\"primary_axis\": \"z\", \"min_gap_frac\": 0.0, \"max_gap_frac\": 0.01, \"overlap_axis\": \"xy\", \"require_overlap\": true, \"align_mode\": \"none\", \"anchor_zone\": null, \"falloff_width_frac\": 0.01}"
        } else if rpc[0] != 0 && rpc[1] != 0 {
            "{\"primary_axis\": \"xy\", \"min_gap_frac\": 0.01, \"max_gap_frac\": 0.06, \"overlap_axis\": \"none\", \"require_overlap\": false, \"align_mode\": \"none\", \"anchor_zone\": null, \"falloff_width_frac\": 0.05}"
        } else if rpc[1] != 0 {
            "{\"primary_axis\": \"y\", \"min_gap_frac\": 0.01, \"max_gap_frac\": 0.06, \"overlap_axis\": \"x\", \"require_overlap\": true, \"align_mode\": \"none\", \"anchor_zone\": null, \"falloff_width_frac\": 0.05}"
        } else {
            "{\"primary_axis\": \"x\", \"min_gap_frac\": 0.01, \"max_gap_frac\": 0.06, \"overlap_axis\": \"y\", \"require_overlap\": true, \"align_mode\": \"none\", \"anchor_zone\": null, \"falloff_width_frac\": 0.05}"
        };
        format!("</func>\n{body}\n</func>")
    }

    fn judge(&self) -> String {
        let (pos, ali) = match self {
            MockPolicy::Judge { pos, ali } => (*pos, *ali),
            _ => (75, 70),
        };
        format!("</scores>\nposition: {pos}\nalignment: {ali}\n</scores>")
    }
}

struct StandardFields {
    omit: Option<String>,
    repair: bool,
    picky: bool,
    skip_chain: bool,
}

fn standard_fields() -> StandardFields {
    StandardFields {
        omit: None,
        repair: false,
        picky: false,
        skip_chain: false,
    }
}

impl From<StandardFields> for MockPolicy {
    fn from(f: StandardFields) -> Self {
        MockPolicy::Standard {
            omit: f.omit,
            repair: f.repair,
            picky: f.picky,
            skip_chain: f.skip_chain,
        }
    }
}

/// Reads `- Object List: ['a', 'b']` back out of a rendered prompt.
fn parse_object_list(prompt: &str) -> Vec<String> {
    let Some(value) = parse_field(prompt, "- Object List:") else {
        return Vec::new();
    };
    let inner = value.trim_start_matches('[').trim_end_matches(']');
    inner
        .split(',')
        .map(|part| part.trim().trim_matches('\'').trim_matches('"').to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn parse_field(prompt: &str, label: &str) -> Option<String> {
    for line in prompt.lines() {
        if let Some(rest) = line.trim_start().strip_prefix(label) {
            return Some(rest.trim().to_string());
        }
    }
    None
}

/// Axis signs suggested by the tokens of a relation name.
fn rpc_from_name(name: &str) -> [i32; 3] {
    let mut rpc = [0, 0, 0];
    for token in name.split(['_', '-']) {
        match token {
            "left" => rpc[0] = -1,
            "right" => rpc[0] = 1,
            "above" | "behind" | "beyond" => rpc[1] = 1,
            "below" | "front" => rpc[1] = -1,
            "top" | "onto" => rpc[2] = 1,
            _ => {}
        }
    }
    rpc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_parsing() {
        assert!(MockPolicy::parse("standard").is_ok());
        assert!(MockPolicy::parse("omit:napkin").is_ok());
        assert!(MockPolicy::parse("forget:napkin").is_ok());
        assert!(MockPolicy::parse("judge:80,65").is_ok());
        assert!(matches!(
            MockPolicy::parse("bogus"),
            Err(Error::UnknownMockPolicy { .. })
        ));
    }

    #[test]
    fn rpc_derivation_matches_known_names() {
        assert_eq!(rpc_from_name("left_of"), [-1, 0, 0]);
        assert_eq!(rpc_from_name("right_above_of"), [1, 1, 0]);
        assert_eq!(rpc_from_name("on_top_of"), [0, 0, 1]);
        assert_eq!(rpc_from_name("near_of"), [0, 0, 0]);
    }

    #[test]
    fn row_poses_are_complete_and_anchored() {
        let policy = MockPolicy::parse("standard").unwrap();
        let prompt = "Output every pose between two </pose> tokens\n- Object List: ['plate', 'glass', 'knife', 'fork', 'spoon', 'napkin']\n";
        let response = policy.respond(prompt);
        assert!(response.contains("plate: [0, 0, 0]"));
        assert!(response.contains("napkin: [5, 0, 0]"));
        assert_eq!(response.matches(": [").count(), 6);
    }
}
