//! Default asset dimensions and scene assembly from corpus cases.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Deserialize;

use layoutforge_core::geometry::Vec3;
use layoutforge_core::scene::{Boundary, ObjectSpec, SceneSpec};

use crate::corpus::CorpusScenario;

pub const BUNDLED_SIZES: &str = include_str!("../assets/sizes.json");

#[derive(Clone, Debug, Deserialize)]
pub struct SizeCatalog {
    #[allow(dead_code)]
    pub note: String,
    pub sizes: BTreeMap<String, [f64; 3]>,
}

impl SizeCatalog {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let (text, origin) = match path {
            Some(p) => (
                std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read size catalog {}", p.display()))?,
                p.display().to_string(),
            ),
            None => (BUNDLED_SIZES.to_string(), "bundled size catalog".into()),
        };
        let catalog: SizeCatalog = serde_json::from_str(&text)
            .with_context(|| format!("size catalog schema error in {origin}"))?;
        Ok(catalog)
    }

    /// Instance suffixes like "cup-0" resolve through their base category.
    pub fn base_category(name: &str) -> &str {
        match name.rsplit_once('-') {
            Some((base, suffix)) if !base.is_empty() && suffix.chars().all(|c| c.is_ascii_digit()) => {
                base
            }
            _ => name,
        }
    }

    pub fn size_of(&self, name: &str) -> Result<Vec3> {
        let base = Self::base_category(name);
        let [x, y, z] = self
            .sizes
            .get(base)
            .copied()
            .with_context(|| format!("no size entry for category '{base}' (object '{name}')"))?;
        Ok(Vec3::new(x, y, z))
    }
}

pub fn build_scene(
    scenario: &CorpusScenario,
    case_index: usize,
    catalog: &SizeCatalog,
    boundary: Boundary,
    seed: u64,
) -> Result<SceneSpec> {
    let case = scenario
        .cases
        .get(case_index)
        .with_context(|| {
            format!(
                "scenario '{}' has {} cases; index {case_index} is out of range",
                scenario.key,
                scenario.cases.len()
            )
        })?;
    let mut objects = Vec::with_capacity(case.len());
    for name in case {
        objects.push(ObjectSpec::new(
            name.clone(),
            catalog.size_of(name)?,
            SizeCatalog::base_category(name).to_string(),
        ));
    }
    let scene = SceneSpec {
        instruction: scenario.info.clone(),
        objects,
        boundary,
        rng_seed: seed,
    };
    scene.validate()?;
    Ok(scene)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::load_corpus;

    #[test]
    fn every_corpus_object_resolves() {
        let corpus = load_corpus(None).unwrap();
        let catalog = SizeCatalog::load(None).unwrap();
        for scenario in &corpus {
            for case in &scenario.cases {
                for name in case {
                    catalog
                        .size_of(name)
                        .unwrap_or_else(|e| panic!("{}: {e}", scenario.key));
                }
            }
        }
    }

    #[test]
    fn instance_suffix_resolution() {
        assert_eq!(SizeCatalog::base_category("cup-0"), "cup");
        assert_eq!(SizeCatalog::base_category("snack box-1"), "snack box");
        assert_eq!(SizeCatalog::base_category("plate"), "plate");
        assert_eq!(SizeCatalog::base_category("tea pot"), "tea pot");
    }

    #[test]
    fn scene_assembly() {
        let corpus = load_corpus(None).unwrap();
        let catalog = SizeCatalog::load(None).unwrap();
        let dining = crate::corpus::find_scenario(&corpus, "Dining_Table").unwrap();
        let scene = build_scene(dining, 0, &catalog, Boundary::new(140.0, 70.0), 7).unwrap();
        assert_eq!(scene.objects.len(), 6);
        assert_eq!(scene.rng_seed, 7);
        assert!(build_scene(dining, 9, &catalog, Boundary::new(140.0, 70.0), 7).is_err());
    }
}
