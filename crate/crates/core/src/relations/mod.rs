//! The adaptive relation library: relation definitions, compiled constraint
//! scorers, boolean validators, discrete lattice checks, and conservative
//! runtime parameter adjustment.

mod scoring;
mod synthesize;

pub use scoring::{
    diagnose, discrete_check, score, score_view, validate, FailureEvidence, PxBox, PxView,
    VALIDATE_THRESHOLD,
};
pub use synthesize::synthesize_relation;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Widening factor applied per conservative adjustment step.
pub const ADJUST_FACTOR: f64 = 1.25;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arity {
    Unary,
    Binary,
    Nary,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelationKind {
    Anchoring,
    Relative,
    Alignment,
}

/// Axis selector for gap and overlap terms. `Xy` selects both plane axes.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisSel {
    None,
    X,
    Y,
    Z,
    Xy,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignMode {
    None,
    CenterX,
    CenterY,
    CenterZ,
}

/// Named surface region used by anchoring relations.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorZone {
    /// Middle third of the plane along x.
    CentralColumn,
    /// Front 15% of the plane along y (the edge nearest the user).
    NearFrontEdge,
}

/// Declarative constraint parameters. Gap fractions are of the plane width,
/// matching the compiled scorer in [`score`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSpec {
    pub primary_axis: AxisSel,
    pub min_gap_frac: f64,
    pub max_gap_frac: f64,
    pub overlap_axis: AxisSel,
    pub require_overlap: bool,
    pub align_mode: AlignMode,
    pub anchor_zone: Option<AnchorZone>,
    /// Width of the Gaussian falloff applied outside the gap band, as a
    /// fraction of the plane width. Defaults to the band width.
    pub falloff_width_frac: f64,
}

impl ConstraintSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.min_gap_frac
            && self.min_gap_frac < self.max_gap_frac
            && self.max_gap_frac <= 1.0)
        {
            return Err(Error::InvalidConfig {
                detail: format!(
                    "gap band [{}, {}] violates 0 <= min < max <= 1",
                    self.min_gap_frac, self.max_gap_frac
                ),
            });
        }
        if self.falloff_width_frac <= 0.0 {
            return Err(Error::InvalidConfig {
                detail: "falloff width must be positive".into(),
            });
        }
        Ok(())
    }
}

impl Default for ConstraintSpec {
    fn default() -> Self {
        ConstraintSpec {
            primary_axis: AxisSel::None,
            min_gap_frac: 0.01,
            max_gap_frac: 0.06,
            overlap_axis: AxisSel::None,
            require_overlap: false,
            align_mode: AlignMode::None,
            anchor_zone: None,
            falloff_width_frac: 0.05,
        }
    }
}

/// Slack applied when validating rather than scoring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationSpec {
    pub tolerance_frac: f64,
    pub max_adjustments: u32,
}

impl Default for ValidationSpec {
    fn default() -> Self {
        ValidationSpec {
            tolerance_frac: 1.5,
            max_adjustments: 3,
        }
    }
}

impl ValidationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.tolerance_frac < 1.0 {
            return Err(Error::InvalidConfig {
                detail: format!("tolerance_frac {} < 1", self.tolerance_frac),
            });
        }
        Ok(())
    }
}

/// One library entry: definition, constraint parameters, validation slack,
/// and the revision counter bumped by each conservative adjustment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationDef {
    pub name: String,
    pub arity: Arity,
    pub kind: RelationKind,
    pub definition: String,
    pub rpc: Option<[i32; 3]>,
    pub constraint: ConstraintSpec,
    pub validation: ValidationSpec,
    pub revision: u32,
}

impl RelationDef {
    pub fn validate(&self) -> Result<()> {
        self.constraint.validate()?;
        self.validation.validate()?;
        match self.kind {
            RelationKind::Relative if self.rpc.is_none() => Err(Error::InvalidConfig {
                detail: format!("relative relation '{}' lacks an rpc", self.name),
            }),
            _ if self.arity == Arity::Unary && self.rpc.is_some() => Err(Error::InvalidConfig {
                detail: format!("unary relation '{}' must not carry an rpc", self.name),
            }),
            _ => Ok(()),
        }
    }

    pub fn arity_accepts(&self, n: usize) -> bool {
        match self.arity {
            Arity::Unary => n == 1,
            Arity::Binary => n == 2,
            Arity::Nary => n >= 2,
        }
    }

    pub fn arity_expected(&self) -> &'static str {
        match self.arity {
            Arity::Unary => "1 arg",
            Arity::Binary => "2 args",
            Arity::Nary => "2+ args",
        }
    }
}

/// A relation applied to concrete scene objects. For binary relations the
/// reference object comes last: `left_of('fork', 'plate')` places the fork
/// left of the plate.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationInstance {
    pub relation: String,
    pub args: Vec<String>,
}

impl RelationInstance {
    pub fn new(relation: impl Into<String>, args: Vec<&str>) -> Self {
        RelationInstance {
            relation: relation.into(),
            args: args.into_iter().map(str::to_string).collect(),
        }
    }
}

impl std::fmt::Display for RelationInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let args: Vec<String> = self.args.iter().map(|a| format!("'{a}'")).collect();
        write!(f, "{}({})", self.relation, args.join(", "))
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Builtin,
    LlmSynthesized,
    Adjusted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LibraryEntry {
    pub def: RelationDef,
    pub provenance: Provenance,
}

/// The relation library. Immutable in normal use; the closed loop clones it
/// per run and is the single writer of its copy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationLibrary {
    pub format_version: u32,
    pub entries: BTreeMap<String, LibraryEntry>,
}

impl RelationLibrary {
    pub fn empty() -> Self {
        RelationLibrary {
            format_version: 1,
            entries: BTreeMap::new(),
        }
    }

    pub fn get(&self, name: &str) -> Result<&RelationDef> {
        self.entries
            .get(name)
            .map(|e| &e.def)
            .ok_or_else(|| Error::MissingRelation { name: name.into() })
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }

    pub fn insert(&mut self, def: RelationDef, provenance: Provenance) -> Result<()> {
        def.validate()?;
        self.entries
            .insert(def.name.clone(), LibraryEntry { def, provenance });
        Ok(())
    }

    /// Replace an entry with an adjusted copy, marking its provenance.
    pub fn apply_adjustment(&mut self, def: RelationDef) -> Result<()> {
        def.validate()?;
        self.entries.insert(
            def.name.clone(),
            LibraryEntry {
                def,
                provenance: Provenance::Adjusted,
            },
        );
        Ok(())
    }

    /// Renders the catalog handed to description/extraction prompts.
    pub fn prompt_catalog(&self) -> String {
        let mut lines = Vec::new();
        for (name, entry) in &self.entries {
            let rpc = match entry.def.rpc {
                Some([x, y, z]) => format!(", \"RPC\": [{x}, {y}, {z}]"),
                None => String::new(),
            };
            lines.push(format!(
                "{{\"{name}\": {{\"type\": \"{:?}\", \"kind\": \"{:?}\", \"definition\": \"{}\"{rpc}}}}}",
                entry.def.arity, entry.def.kind, entry.def.definition
            ));
        }
        lines.join("\n")
    }
}

fn relative(name: &str, rpc: [i32; 3], definition: &str, constraint: ConstraintSpec) -> RelationDef {
    RelationDef {
        name: name.into(),
        arity: Arity::Binary,
        kind: RelationKind::Relative,
        definition: definition.into(),
        rpc: Some(rpc),
        constraint,
        validation: ValidationSpec::default(),
        revision: 0,
    }
}

fn side_constraint(primary: AxisSel, overlap: AxisSel) -> ConstraintSpec {
    ConstraintSpec {
        primary_axis: primary,
        overlap_axis: overlap,
        require_overlap: true,
        ..ConstraintSpec::default()
    }
}

fn alignment(name: &str, mode: AlignMode, definition: &str) -> RelationDef {
    RelationDef {
        name: name.into(),
        arity: Arity::Nary,
        kind: RelationKind::Alignment,
        definition: definition.into(),
        rpc: None,
        constraint: ConstraintSpec {
            align_mode: mode,
            ..ConstraintSpec::default()
        },
        validation: ValidationSpec::default(),
        revision: 0,
    }
}

fn anchoring(name: &str, zone: AnchorZone, definition: &str) -> RelationDef {
    RelationDef {
        name: name.into(),
        arity: Arity::Unary,
        kind: RelationKind::Anchoring,
        definition: definition.into(),
        rpc: None,
        constraint: ConstraintSpec {
            anchor_zone: Some(zone),
            ..ConstraintSpec::default()
        },
        validation: ValidationSpec::default(),
        revision: 0,
    }
}

/// The built-in catalog every run starts from.
pub fn builtin_library() -> RelationLibrary {
    let mut lib = RelationLibrary::empty();
    let defs = vec![
        anchoring(
            "central_column",
            AnchorZone::CentralColumn,
            "The object sits in the central column of the surface, the middle third along the x axis.",
        ),
        anchoring(
            "near_front_edge",
            AnchorZone::NearFrontEdge,
            "The object sits close to the front edge of the surface, within the front 15% along the y axis.",
        ),
        relative(
            "left_of",
            [-1, 0, 0],
            "Obj_A is immediately to the left of Obj_B on the x axis, with substantial y-overlap.",
            side_constraint(AxisSel::X, AxisSel::Y),
        ),
        relative(
            "right_of",
            [1, 0, 0],
            "Obj_A is immediately to the right of Obj_B on the x axis, with substantial y-overlap.",
            side_constraint(AxisSel::X, AxisSel::Y),
        ),
        relative(
            "above_of",
            [0, 1, 0],
            "Obj_A is immediately beyond Obj_B on the y axis (farther from the front edge), with substantial x-overlap.",
            side_constraint(AxisSel::Y, AxisSel::X),
        ),
        relative(
            "right_above_of",
            [1, 1, 0],
            "Obj_A is immediately to the right of and beyond Obj_B, diagonal on the x and y axes, corner to corner within a threshold.",
            ConstraintSpec {
                primary_axis: AxisSel::Xy,
                ..ConstraintSpec::default()
            },
        ),
        relative(
            "on_top_of",
            [0, 0, 1],
            "Obj_A rests on top of Obj_B on the z axis, in contact, with its footprint over Obj_B.",
            ConstraintSpec {
                primary_axis: AxisSel::Z,
                min_gap_frac: 0.0,
                max_gap_frac: 0.01,
                overlap_axis: AxisSel::Xy,
                require_overlap: true,
                falloff_width_frac: 0.01,
                ..ConstraintSpec::default()
            },
        ),
        relative(
            "near_of",
            [0, 0, 0],
            "Obj_A stays close to Obj_B on the plane, within a small clearance in any direction.",
            ConstraintSpec {
                primary_axis: AxisSel::Xy,
                min_gap_frac: 0.0,
                ..ConstraintSpec::default()
            },
        ),
        alignment(
            "aligned_in_x_axis",
            AlignMode::CenterY,
            "The objects form a row along the x axis: their volume centers share the same y coordinate.",
        ),
        alignment(
            "aligned_in_y_axis",
            AlignMode::CenterX,
            "The objects form a column along the y axis: their volume centers share the same x coordinate.",
        ),
        alignment(
            "align_z-axis_at_center",
            AlignMode::CenterZ,
            "The objects are stacked about a common vertical axis: their volume centers share x and y.",
        ),
    ];
    for def in defs {
        lib.insert(def, Provenance::Builtin)
            .expect("builtin definitions are valid");
    }
    lib
}

/// What a failed validation tells us about a constraint.
pub fn adjust_parameters(entry: &RelationDef, evidence: FailureEvidence) -> Result<RelationDef> {
    if entry.revision >= entry.validation.max_adjustments {
        return Err(Error::AdjustmentLimit {
            relation: entry.name.clone(),
            max: entry.validation.max_adjustments,
        });
    }
    let mut next = entry.clone();
    match evidence {
        FailureEvidence::GapOverflow => {
            next.constraint.max_gap_frac = (next.constraint.max_gap_frac * ADJUST_FACTOR).min(1.0);
        }
        FailureEvidence::OverlapShortfall => {
            next.validation.tolerance_frac *= ADJUST_FACTOR;
        }
    }
    next.revision += 1;
    Ok(next)
}

pub fn save_library(lib: &RelationLibrary, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(lib)
        .map_err(|e| Error::schema(path.display().to_string(), e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_library(path: &Path) -> Result<RelationLibrary> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let lib: RelationLibrary = serde_json::from_str(&text).map_err(|e| {
        Error::schema(
            path.display().to_string(),
            format!("line {}, column {}: {}", e.line(), e.column(), e),
        )
    })?;
    if lib.format_version != 1 {
        return Err(Error::schema(
            path.display().to_string(),
            format!("unsupported format_version {}", lib.format_version),
        ));
    }
    for entry in lib.entries.values() {
        entry.def.validate()?;
    }
    Ok(lib)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_present_with_expected_shape() {
        let lib = builtin_library();
        for name in [
            "central_column",
            "near_front_edge",
            "left_of",
            "right_of",
            "above_of",
            "right_above_of",
            "on_top_of",
            "near_of",
            "aligned_in_x_axis",
            "aligned_in_y_axis",
            "align_z-axis_at_center",
        ] {
            assert!(lib.contains(name), "missing builtin {name}");
        }
        assert_eq!(lib.get("right_above_of").unwrap().rpc, Some([1, 1, 0]));
        assert_eq!(lib.get("left_of").unwrap().rpc, Some([-1, 0, 0]));
        assert_eq!(lib.get("right_of").unwrap().rpc, Some([1, 0, 0]));
        assert_eq!(lib.get("above_of").unwrap().rpc, Some([0, 1, 0]));
        assert_eq!(lib.get("on_top_of").unwrap().rpc, Some([0, 0, 1]));

        let left = lib.get("left_of").unwrap();
        assert_eq!(left.arity, Arity::Binary);
        assert_eq!(left.kind, RelationKind::Relative);

        for name in ["aligned_in_x_axis", "aligned_in_y_axis", "align_z-axis_at_center"] {
            assert_eq!(lib.get(name).unwrap().arity, Arity::Nary);
        }
        for name in ["central_column", "near_front_edge"] {
            let def = lib.get(name).unwrap();
            assert_eq!(def.arity, Arity::Unary);
            assert_eq!(def.kind, RelationKind::Anchoring);
            assert!(def.rpc.is_none());
        }

        assert!(matches!(
            lib.get("no_such_relation"),
            Err(Error::MissingRelation { .. })
        ));
    }

    #[test]
    fn adjustment_widens_and_respects_budget() {
        let lib = builtin_library();
        let left = lib.get("left_of").unwrap();

        let adjusted = adjust_parameters(left, FailureEvidence::GapOverflow).unwrap();
        assert!((adjusted.constraint.max_gap_frac - 0.075).abs() < 1e-12);
        assert_eq!(adjusted.revision, 1);
        // original untouched
        assert!((left.constraint.max_gap_frac - 0.06).abs() < 1e-12);

        let overlap = adjust_parameters(left, FailureEvidence::OverlapShortfall).unwrap();
        assert!((overlap.validation.tolerance_frac - 1.875).abs() < 1e-12);
        assert!((overlap.constraint.max_gap_frac - 0.06).abs() < 1e-12);

        let mut cur = left.clone();
        for _ in 0..cur.validation.max_adjustments {
            cur = adjust_parameters(&cur, FailureEvidence::GapOverflow).unwrap();
        }
        assert!(matches!(
            adjust_parameters(&cur, FailureEvidence::GapOverflow),
            Err(Error::AdjustmentLimit { .. })
        ));
    }

    #[test]
    fn library_round_trip() {
        let lib = builtin_library();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("library.json");
        save_library(&lib, &path).unwrap();
        let loaded = load_library(&path).unwrap();
        assert_eq!(lib, loaded);
    }

    #[test]
    fn load_rejects_truncated_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.json");
        std::fs::write(&path, "{\"format_version\": 1, \"entr").unwrap();
        assert!(matches!(load_library(&path), Err(Error::Schema { .. })));
    }

    #[test]
    fn load_names_unknown_arity_token() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("badarity.json");
        let mut lib = builtin_library();
        let mut text = serde_json::to_string(&lib).unwrap();
        text = text.replace("\"Binary\"", "\"Pentary\"");
        std::fs::write(&path, text).unwrap();
        match load_library(&path) {
            Err(Error::Schema { detail, .. }) => assert!(detail.contains("Pentary"), "{detail}"),
            other => panic!("expected schema error, got {other:?}"),
        }
        lib.entries.clear();
    }
}
