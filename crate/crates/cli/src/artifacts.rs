//! On-disk layout schema and run artifact writing.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use layoutforge_core::gateway::CassetteEntry;
use layoutforge_core::geometry::{Pose, Vec3};
use layoutforge_core::scene::{Boundary, Layout, PLANE_H, PLANE_W};

/// `layout.json`: the boundary, the requested object list, and one entry per
/// placed object carrying center, size, and the derived box.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LayoutFile {
    pub boundary: Boundary,
    pub requested: Vec<String>,
    pub objects: BTreeMap<String, LayoutObject>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LayoutObject {
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub r#box: BoxExtents,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoxExtents {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl LayoutFile {
    pub fn from_layout(layout: &Layout, boundary: &Boundary, requested: &[String]) -> Self {
        let mut objects = BTreeMap::new();
        for (name, b) in &layout.boxes {
            let c = b.center();
            let s = b.size();
            objects.insert(
                name.clone(),
                LayoutObject {
                    center: [c.x, c.y, c.z],
                    size: [s.x, s.y, s.z],
                    r#box: BoxExtents {
                        min: [b.min.x, b.min.y, b.min.z],
                        max: [b.max.x, b.max.y, b.max.z],
                    },
                },
            );
        }
        LayoutFile {
            boundary: *boundary,
            requested: requested.to_vec(),
            objects,
        }
    }

    /// Reconstruct the in-memory layout; plane points are recomputed from the
    /// box corners through the boundary's plane map.
    pub fn to_layout(&self) -> Result<Layout> {
        let map = self.boundary.plane_map(PLANE_W, PLANE_H);
        let mut layout = Layout::new();
        for (name, obj) in &self.objects {
            let center = Vec3::new(obj.center[0], obj.center[1], obj.center[2]);
            let size = Vec3::new(obj.size[0], obj.size[1], obj.size[2]);
            if !(size.x > 0.0 && size.y > 0.0 && size.z > 0.0) {
                bail!("layout schema error: object '{name}' has a non-positive size");
            }
            for axis in 0..3 {
                let lo = obj.center[axis] - obj.size[axis] / 2.0;
                let hi = obj.center[axis] + obj.size[axis] / 2.0;
                if (lo - obj.r#box.min[axis]).abs() > 1e-6
                    || (hi - obj.r#box.max[axis]).abs() > 1e-6
                {
                    bail!("layout schema error: box of '{name}' does not match center and size");
                }
            }
            let (px, py) = map.cm_to_px(obj.r#box.min[0], obj.r#box.min[1]);
            layout.insert(
                name,
                Pose::at(center),
                size,
                (px / PLANE_W as f64, py / PLANE_H as f64),
            );
        }
        layout.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok(layout)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        let file: LayoutFile = serde_json::from_str(&text)
            .with_context(|| format!("layout schema error in {}", path.display()))?;
        if file.requested.is_empty() {
            bail!(
                "layout schema error in {}: requested list is empty",
                path.display()
            );
        }
        Ok(file)
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// The cassette entries a run actually consumed, as replayable JSONL.
pub fn write_used_cassette(entries: &[CassetteEntry], path: &Path) -> Result<()> {
    let mut out = String::new();
    for entry in entries {
        out.push_str(&serde_json::to_string(entry)?);
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use layoutforge_core::geometry::aabb_from_pose;

    #[test]
    fn layout_file_round_trip() {
        let mut layout = Layout::new();
        let size = Vec3::new(8.0, 8.0, 10.0);
        let pose = Pose::at(Vec3::new(30.0, 20.0, 5.0));
        layout.insert("cup", pose, size, (0.1, 0.2));
        let boundary = Boundary::new(140.0, 70.0);
        let file = LayoutFile::from_layout(&layout, &boundary, &["cup".to_string()]);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("layout.json");
        file.save(&path).unwrap();
        let loaded = LayoutFile::load(&path).unwrap();
        let rebuilt = loaded.to_layout().unwrap();
        assert_eq!(rebuilt.boxes["cup"], aabb_from_pose(&pose, size));
    }

    #[test]
    fn corrupted_box_is_rejected() {
        let mut layout = Layout::new();
        layout.insert(
            "cup",
            Pose::at(Vec3::new(30.0, 20.0, 5.0)),
            Vec3::new(8.0, 8.0, 10.0),
            (0.0, 0.0),
        );
        let boundary = Boundary::new(140.0, 70.0);
        let mut file = LayoutFile::from_layout(&layout, &boundary, &["cup".to_string()]);
        file.objects.get_mut("cup").unwrap().r#box.min[0] += 1.0;
        assert!(file.to_layout().is_err());
    }
}
