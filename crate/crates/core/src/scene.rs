//! Scene inputs and the continuous layout result.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{aabb_from_pose, Aabb, Pose, Vec3};

/// Optimization plane dimensions in pixels.
pub const PLANE_W: u32 = 600;
pub const PLANE_H: u32 = 300;

/// One object to place: unique name, size vector in cm, category label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub name: String,
    pub size: Vec3,
    pub category: String,
}

impl ObjectSpec {
    pub fn new(name: impl Into<String>, size: Vec3, category: impl Into<String>) -> Self {
        ObjectSpec {
            name: name.into(),
            size,
            category: category.into(),
        }
    }
}

/// Supporting surface extents in cm. `origin_x`/`origin_y` locate the
/// surface's min corner in world coordinates (0 unless a scene is translated),
/// and `surface_z` is the height of the top face.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub width: f64,
    pub depth: f64,
    #[serde(default)]
    pub surface_z: f64,
    #[serde(default)]
    pub origin_x: f64,
    #[serde(default)]
    pub origin_y: f64,
}

impl Boundary {
    pub fn new(width: f64, depth: f64) -> Self {
        Boundary {
            width,
            depth,
            surface_z: 0.0,
            origin_x: 0.0,
            origin_y: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.depth > 0.0) {
            return Err(Error::InvalidScene {
                detail: format!("boundary extents must be positive: {}x{}", self.width, self.depth),
            });
        }
        Ok(())
    }

    /// Affine cm↔pixel map onto an optimization plane of the given size.
    pub fn plane_map(&self, plane_w: u32, plane_h: u32) -> PlaneMap {
        PlaneMap {
            origin_x: self.origin_x,
            origin_y: self.origin_y,
            px_per_cm_x: plane_w as f64 / self.width,
            px_per_cm_y: plane_h as f64 / self.depth,
            plane_w,
            plane_h,
        }
    }
}

/// Affine map between table cm coordinates and plane pixels. The plane and
/// the table share orientation: +x right, +y toward the front edge.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneMap {
    pub origin_x: f64,
    pub origin_y: f64,
    pub px_per_cm_x: f64,
    pub px_per_cm_y: f64,
    pub plane_w: u32,
    pub plane_h: u32,
}

impl PlaneMap {
    pub fn cm_to_px(&self, x_cm: f64, y_cm: f64) -> (f64, f64) {
        (
            (x_cm - self.origin_x) * self.px_per_cm_x,
            (y_cm - self.origin_y) * self.px_per_cm_y,
        )
    }

    pub fn px_to_cm(&self, x_px: f64, y_px: f64) -> (f64, f64) {
        (
            x_px / self.px_per_cm_x + self.origin_x,
            y_px / self.px_per_cm_y + self.origin_y,
        )
    }

    pub fn size_to_px(&self, size: Vec3) -> (f64, f64) {
        (size.x * self.px_per_cm_x, size.y * self.px_per_cm_y)
    }
}

/// The task input: instruction text, objects with sizes, surface boundary,
/// and the seed that fixes every random choice downstream.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneSpec {
    pub instruction: String,
    pub objects: Vec<ObjectSpec>,
    pub boundary: Boundary,
    pub rng_seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.objects.is_empty() {
            return Err(Error::InvalidScene {
                detail: "object list is empty".into(),
            });
        }
        self.boundary.validate()?;
        let mut seen = std::collections::BTreeSet::new();
        for obj in &self.objects {
            if !(obj.size.x > 0.0 && obj.size.y > 0.0 && obj.size.z > 0.0) {
                return Err(Error::InvalidScene {
                    detail: format!("object '{}' has a non-positive size component", obj.name),
                });
            }
            if !obj.size.is_finite() {
                return Err(Error::InvalidScene {
                    detail: format!("object '{}' has a non-finite size", obj.name),
                });
            }
            if !seen.insert(obj.name.as_str()) {
                return Err(Error::InvalidScene {
                    detail: format!("duplicate object name '{}'", obj.name),
                });
            }
        }
        Ok(())
    }

    pub fn object(&self, name: &str) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.name == name)
    }

    pub fn object_names(&self) -> Vec<String> {
        self.objects.iter().map(|o| o.name.clone()).collect()
    }
}

/// Continuous result: per-object center pose, derived box, and the normalized
/// plane point of the box's top-left corner. The three maps always share the
/// same key set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub poses: BTreeMap<String, Pose>,
    pub boxes: BTreeMap<String, Aabb>,
    pub plane_points: BTreeMap<String, (f64, f64)>,
}

impl Layout {
    pub fn new() -> Self {
        Layout {
            poses: BTreeMap::new(),
            boxes: BTreeMap::new(),
            plane_points: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, pose: Pose, size: Vec3, plane_point: (f64, f64)) {
        self.poses.insert(name.to_string(), pose);
        self.boxes
            .insert(name.to_string(), aabb_from_pose(&pose, size));
        self.plane_points.insert(name.to_string(), plane_point);
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.poses.keys()
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.poses.len() != self.boxes.len()
            || self.poses.len() != self.plane_points.len()
            || !self.poses.keys().eq(self.boxes.keys())
            || !self.poses.keys().eq(self.plane_points.keys())
        {
            return Err(Error::InvalidScene {
                detail: "layout maps do not share one key set".into(),
            });
        }
        for (name, pose) in &self.poses {
            let b = &self.boxes[name];
            let from_pose = aabb_from_pose(pose, b.size());
            let tol = 1e-6;
            if (from_pose.min.x - b.min.x).abs() > tol
                || (from_pose.min.y - b.min.y).abs() > tol
                || (from_pose.min.z - b.min.z).abs() > tol
            {
                return Err(Error::InvalidScene {
                    detail: format!("box of '{name}' does not match its pose"),
                });
            }
        }
        Ok(())
    }
}

impl Default for Layout {
    fn default() -> Self {
        Layout::new()
    }
}
