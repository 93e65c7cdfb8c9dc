//! Create-on-miss: fill in a relation definition from its name alone.

use std::collections::BTreeMap;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::gateway::{parse_tagged_block, render_template, ChatRequest, Gateway, Role, TemplateId};
use crate::relations::{
    AnchorZone, Arity, ConstraintSpec, RelationDef, RelationKind, RelationLibrary, ValidationSpec,
};

const MAX_RETRIES: usize = 2;

/// Synthesize a new relation definition through the gateway: one call for the
/// definition (name, type, RPC), one for the constraint parameters, one for
/// the validation parameters. Each call gets up to two retries with the
/// parse failure fed back before synthesis is abandoned.
pub fn synthesize_relation(
    name: &str,
    context: &str,
    lib: &RelationLibrary,
    gateway: &Gateway,
) -> Result<RelationDef> {
    if lib.contains(name) {
        return Err(Error::RelationExists { name: name.into() });
    }

    let mut subs = BTreeMap::new();
    subs.insert("<complete_relationship>", reference_entries(lib));
    subs.insert("<incomplete_relationship>", name.to_string());
    let define_prompt = render_template(TemplateId::ArlDefine, &subs)?;
    let defined = call_with_retries(gateway, &define_prompt, name, |response| {
        parse_definition(response, name)
    })?;

    let mut subs = BTreeMap::new();
    subs.insert("<relationship_name>", name.to_string());
    subs.insert("<relationship_definition>", defined.definition.clone());
    subs.insert("<spatial_description>", context.to_string());
    let constraint_prompt = render_template(TemplateId::ArlConstraint, &subs)?;
    let constraint = call_with_retries(gateway, &constraint_prompt, name, parse_constraint)?;

    let mut subs = BTreeMap::new();
    subs.insert("<relationship_name>", name.to_string());
    subs.insert("<relationship_definition>", defined.definition.clone());
    let validation_prompt = render_template(TemplateId::ArlValidation, &subs)?;
    let validation = call_with_retries(gateway, &validation_prompt, name, parse_validation)?;

    let kind = match defined.arity {
        Arity::Unary => RelationKind::Anchoring,
        Arity::Binary => RelationKind::Relative,
        Arity::Nary => RelationKind::Alignment,
    };
    let mut constraint = constraint;
    if kind == RelationKind::Anchoring && constraint.anchor_zone.is_none() {
        constraint.anchor_zone = Some(AnchorZone::CentralColumn);
    }
    let def = RelationDef {
        name: name.to_string(),
        arity: defined.arity,
        kind,
        definition: defined.definition,
        rpc: if kind == RelationKind::Relative {
            Some(defined.rpc.ok_or_else(|| Error::SynthesisFailed {
                name: name.into(),
                reason: "binary definition lacks an RPC".into(),
            })?)
        } else {
            None
        },
        constraint,
        validation,
        revision: 0,
    };
    def.validate().map_err(|e| Error::SynthesisFailed {
        name: name.into(),
        reason: e.to_string(),
    })?;
    Ok(def)
}

struct Defined {
    arity: Arity,
    definition: String,
    rpc: Option<[i32; 3]>,
}

fn call_with_retries<T>(
    gateway: &Gateway,
    prompt: &str,
    name: &str,
    parse: impl Fn(&str) -> Result<T>,
) -> Result<T> {
    let mut req = ChatRequest::user(prompt);
    let mut last_reason = String::new();
    for _ in 0..=MAX_RETRIES {
        let response = gateway.complete(&req)?;
        match parse(&response) {
            Ok(value) => return Ok(value),
            Err(e) => {
                last_reason = e.to_string();
                req.push(Role::Assistant, response);
                req.push(
                    Role::User,
                    format!("Your previous response could not be parsed ({last_reason}). Output exactly the requested format."),
                );
            }
        }
    }
    Err(Error::SynthesisFailed {
        name: name.into(),
        reason: last_reason,
    })
}

fn reference_entries(lib: &RelationLibrary) -> String {
    let mut lines = Vec::new();
    for reference in ["left_of", "on_top_of", "central_column"] {
        if let Ok(def) = lib.get(reference) {
            let rpc = match def.rpc {
                Some([x, y, z]) => format!(", \"RPC\": [{x}, {y}, {z}]"),
                None => String::new(),
            };
            lines.push(format!(
                "{{\"{}\": {{\"type\": \"{:?}\", \"definition\": \"{}\"{rpc}}}}}",
                def.name, def.arity, def.definition
            ));
        }
    }
    lines.join("\n")
}

fn parse_definition(response: &str, name: &str) -> Result<Defined> {
    let block = parse_tagged_block(response, "</new_relationship>")?;
    let value: Value = serde_json::from_str(&block)
        .map_err(|e| Error::schema("new_relationship block", e.to_string()))?;
    let obj = value
        .as_object()
        .filter(|m| m.len() == 1)
        .ok_or_else(|| Error::schema("new_relationship block", "expected one relation object"))?;
    let (key, body) = obj.iter().next().expect("len checked");
    if key != name {
        return Err(Error::schema(
            "new_relationship block",
            format!("definition names '{key}', expected '{name}'"),
        ));
    }
    let arity = match body["type"].as_str() {
        Some("Unary") => Arity::Unary,
        Some("Binary") => Arity::Binary,
        Some("Nary") => Arity::Nary,
        other => {
            return Err(Error::schema(
                "new_relationship block",
                format!("unknown type {other:?}"),
            ))
        }
    };
    let definition = body["definition"]
        .as_str()
        .ok_or_else(|| Error::schema("new_relationship block", "missing definition"))?
        .to_string();
    let rpc = match body.get("RPC") {
        None | Some(Value::Null) => None,
        Some(Value::Array(items)) if items.len() == 3 => {
            let mut rpc = [0i32; 3];
            for (i, item) in items.iter().enumerate() {
                let v = item.as_i64().ok_or_else(|| {
                    Error::schema("new_relationship block", "RPC components must be integers")
                })?;
                if !(-1..=1).contains(&v) {
                    return Err(Error::schema(
                        "new_relationship block",
                        format!("RPC component {v} outside -1..=1"),
                    ));
                }
                rpc[i] = v as i32;
            }
            Some(rpc)
        }
        Some(other) => {
            return Err(Error::schema(
                "new_relationship block",
                format!("malformed RPC {other}"),
            ))
        }
    };
    Ok(Defined {
        arity,
        definition,
        rpc,
    })
}

fn parse_constraint(response: &str) -> Result<ConstraintSpec> {
    let block = parse_tagged_block(response, "</func>")?;
    let spec: ConstraintSpec = serde_json::from_str(&block)
        .map_err(|e| Error::schema("constraint block", e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}

fn parse_validation(response: &str) -> Result<ValidationSpec> {
    let block = parse_tagged_block(response, "</func>")?;
    let spec: ValidationSpec = serde_json::from_str(&block)
        .map_err(|e| Error::schema("validation block", e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relations::builtin_library;

    #[test]
    fn synthesizes_right_above_of_from_mock() {
        let mut lib = builtin_library();
        lib.entries.remove("right_above_of");
        let gateway = Gateway::mock("standard").unwrap();
        let def = synthesize_relation("right_above_of", "diagonal grouping", &lib, &gateway)
            .unwrap();
        assert_eq!(def.rpc, Some([1, 1, 0]));
        assert_eq!(def.kind, RelationKind::Relative);
        assert_eq!(def.arity, Arity::Binary);
        assert_eq!(def.revision, 0);
    }

    #[test]
    fn existing_name_is_a_precondition_error() {
        let lib = builtin_library();
        let gateway = Gateway::mock("standard").unwrap();
        assert!(matches!(
            synthesize_relation("left_of", "ctx", &lib, &gateway),
            Err(Error::RelationExists { .. })
        ));
    }

    #[test]
    fn gibberish_responses_fail_after_retries() {
        let lib = builtin_library();
        let gateway = Gateway::mock("garbage").unwrap();
        assert!(matches!(
            synthesize_relation("behind_of", "ctx", &lib, &gateway),
            Err(Error::SynthesisFailed { .. })
        ));
    }
}
