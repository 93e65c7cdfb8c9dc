//! Axis-aligned box geometry shared by fitness evaluation and metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 3-component vector. Units are fixed by the containing type: centimeters
/// for object sizes and world positions, pixels on the optimization plane,
/// dimensionless for lattice offsets.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn scale(&self, k: f64) -> Vec3 {
        Vec3::new(self.x * k, self.y * k, self.z * k)
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

/// Object pose: box-center position plus Euler angles. Angles are carried for
/// interface completeness but every produced layout keeps them at 0.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn at(position: Vec3) -> Self {
        Pose {
            position,
            roll: 0.0,
            pitch: 0.0,
            yaw: 0.0,
        }
    }
}

/// Axis-aligned bounding box with `min <= max` componentwise.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        debug_assert!(min.x <= max.x && min.y <= max.y && min.z <= max.z);
        Aabb { min, max }
    }

    pub fn size(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        Vec3::new(
            (self.min.x + self.max.x) / 2.0,
            (self.min.y + self.max.y) / 2.0,
            (self.min.z + self.max.z) / 2.0,
        )
    }

    pub fn volume(&self) -> f64 {
        let s = self.size();
        s.x * s.y * s.z
    }

    /// Overlap length with `other` along one axis; 0 when disjoint.
    pub fn overlap_len(&self, other: &Aabb, axis: Axis) -> f64 {
        let (a_min, a_max) = self.extent(axis);
        let (b_min, b_max) = other.extent(axis);
        (a_max.min(b_max) - a_min.max(b_min)).max(0.0)
    }

    pub fn extent(&self, axis: Axis) -> (f64, f64) {
        match axis {
            Axis::X => (self.min.x, self.max.x),
            Axis::Y => (self.min.y, self.max.y),
            Axis::Z => (self.min.z, self.max.z),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// Box of an object from its center pose and size vector.
pub fn aabb_from_pose(pose: &Pose, size: Vec3) -> Aabb {
    let half = size.scale(0.5);
    Aabb {
        min: pose.position - half,
        max: pose.position + half,
    }
}

/// Volume of `a ∩ b`; 0 when the boxes are disjoint on any axis.
pub fn intersection_volume(a: &Aabb, b: &Aabb) -> f64 {
    let dx = (a.max.x.min(b.max.x) - a.min.x.max(b.min.x)).max(0.0);
    let dy = (a.max.y.min(b.max.y) - a.min.y.max(b.min.y)).max(0.0);
    let dz = (a.max.z.min(b.max.z) - a.min.z.max(b.min.z)).max(0.0);
    dx * dy * dz
}

/// Intersection over union of two boxes. Errors when both boxes are
/// degenerate (zero volume), since the union volume would be zero.
pub fn iou(a: &Aabb, b: &Aabb) -> Result<f64> {
    let inter = intersection_volume(a, b);
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        return Err(Error::DegenerateBoxes);
    }
    Ok(inter / union)
}

/// True when the xy projections intersect and the boxes are vertically
/// separated (one box's top at or below the other's bottom). Closed
/// comparisons: exact touching counts.
pub fn is_stacking_pair(a: &Aabb, b: &Aabb) -> bool {
    let xy_overlap = a.overlap_len(b, Axis::X) > 0.0 && a.overlap_len(b, Axis::Y) > 0.0;
    xy_overlap && (a.max.z <= b.min.z || b.max.z <= a.min.z)
}

/// Closed containment of `top`'s footprint inside `bottom`'s footprint.
pub fn footprint_contains(bottom: &Aabb, top: &Aabb) -> bool {
    bottom.min.x <= top.min.x
        && top.max.x <= bottom.max.x
        && bottom.min.y <= top.min.y
        && top.max.y <= bottom.max.y
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(center: Vec3, side: f64) -> Aabb {
        aabb_from_pose(&Pose::at(center), Vec3::new(side, side, side))
    }

    #[test]
    fn aabb_from_pose_symmetric() {
        let b = aabb_from_pose(&Pose::at(Vec3::ZERO), Vec3::new(2.0, 2.0, 2.0));
        assert_eq!(b.min, Vec3::new(-1.0, -1.0, -1.0));
        assert_eq!(b.max, Vec3::new(1.0, 1.0, 1.0));
    }

    #[test]
    fn aabb_from_pose_componentwise() {
        // oracle: min = c - s/2, max = c + s/2 per component
        let c = Vec3::new(5.0, 0.0, 1.0);
        let s = Vec3::new(2.0, 4.0, 2.0);
        let b = aabb_from_pose(&Pose::at(c), s);
        assert_eq!(b.min, Vec3::new(5.0 - 1.0, 0.0 - 2.0, 1.0 - 1.0));
        assert_eq!(b.max, Vec3::new(5.0 + 1.0, 0.0 + 2.0, 1.0 + 1.0));
    }

    #[test]
    fn intersection_identical_unit_cubes() {
        let a = cube(Vec3::ZERO, 1.0);
        assert_eq!(intersection_volume(&a, &a), 1.0);
    }

    #[test]
    fn intersection_disjoint_x() {
        let a = cube(Vec3::ZERO, 1.0);
        let b = cube(Vec3::new(5.0, 0.0, 0.0), 1.0);
        assert_eq!(intersection_volume(&a, &b), 0.0);
    }

    #[test]
    fn intersection_half_offset() {
        // oracle: overlap extents 0.5 x 1 x 1
        let a = cube(Vec3::ZERO, 1.0);
        let b = cube(Vec3::new(0.5, 0.0, 0.0), 1.0);
        assert!((intersection_volume(&a, &b) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn iou_cases() {
        let a = cube(Vec3::ZERO, 1.0);
        let b = cube(Vec3::new(0.5, 0.0, 0.0), 1.0);
        let c = cube(Vec3::new(9.0, 0.0, 0.0), 1.0);
        assert!((iou(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(iou(&a, &c).unwrap(), 0.0);
        // intersection 0.5, union 1.5
        assert!((iou(&a, &b).unwrap() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn iou_degenerate_pair_errors() {
        let flat = Aabb::new(Vec3::ZERO, Vec3::new(1.0, 1.0, 0.0));
        assert!(matches!(iou(&flat, &flat), Err(Error::DegenerateBoxes)));
    }

    #[test]
    fn stacking_pair_cases() {
        let bottom = Aabb::new(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0));
        let top = Aabb::new(Vec3::new(0.2, 0.2, 1.0), Vec3::new(0.8, 0.8, 2.0));
        assert!(is_stacking_pair(&bottom, &top));
        assert!(is_stacking_pair(&top, &bottom));

        let beside = Aabb::new(Vec3::new(2.0, 0.0, 0.0), Vec3::new(3.0, 1.0, 1.0));
        assert!(!is_stacking_pair(&bottom, &beside));

        let floating_off = Aabb::new(Vec3::new(5.0, 5.0, 3.0), Vec3::new(6.0, 6.0, 4.0));
        assert!(!is_stacking_pair(&bottom, &floating_off));
    }

    #[test]
    fn footprint_containment_cases() {
        let big = Aabb::new(Vec3::ZERO, Vec3::new(4.0, 4.0, 1.0));
        let small = Aabb::new(Vec3::new(1.0, 1.0, 1.0), Vec3::new(2.0, 2.0, 2.0));
        assert!(footprint_contains(&big, &small));
        assert!(footprint_contains(&big, &big)); // equal footprints: closed
        let overhang = Aabb::new(Vec3::new(3.5, 1.0, 1.0), Vec3::new(4.5, 2.0, 2.0));
        assert!(!footprint_contains(&big, &overhang));
        assert!(!footprint_contains(&small, &big));
    }
}
