//! Input-to-task pose mapping with translation scaling and a clutch.

use serde::{Deserialize, Serialize};

use crate::geom::{RigidTransform, Vector3};

pub const MIN_SCALE: f64 = 0.1;
pub const MAX_SCALE: f64 = 10.0;

/// Maps input poses to ring poses: `rebase ∘ offset ∘ scaled(input)`.
///
/// Only translation is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mapping {
    scale: f64,
    offset: RigidTransform,
    rebase: RigidTransform,
    frozen: Option<RigidTransform>,
}

impl Default for Mapping {
    fn default() -> Self {
        Self::new(1.0, RigidTransform::IDENTITY).expect("unit scale")
    }
}

impl Mapping {
    pub fn new(scale: f64, offset: RigidTransform) -> Option<Self> {
        (MIN_SCALE..=MAX_SCALE).contains(&scale).then_some(Self {
            scale,
            offset,
            rebase: RigidTransform::IDENTITY,
            frozen: None,
        })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn offset(&self) -> &RigidTransform {
        &self.offset
    }

    pub fn rebase(&self) -> &RigidTransform {
        &self.rebase
    }

    pub fn clutch_engaged(&self) -> bool {
        self.frozen.is_some()
    }

    fn scaled(&self, input: &RigidTransform) -> RigidTransform {
        RigidTransform::new(input.rotation, input.translation * self.scale)
    }

    fn live(&self, input: &RigidTransform) -> RigidTransform {
        self.rebase * (self.offset * self.scaled(input))
    }

    pub fn apply(&self, input: &RigidTransform) -> RigidTransform {
        self.frozen.unwrap_or_else(|| self.live(input))
    }

    /// Rigid part of the mapping, for drawing input-frame geometry.
    pub fn frame(&self) -> RigidTransform {
        self.rebase * self.offset
    }

    /// Input-frame point that maps to `task_point` while the clutch is released.
    pub fn input_point(&self, task_point: &Vector3) -> Vector3 {
        self.frame().inverse().transform_point(task_point) * (1.0 / self.scale)
    }

    /// Freeze the ring at `ring`. A second engage keeps the first freeze.
    pub fn engage_clutch(&mut self, ring: RigidTransform) {
        if self.frozen.is_none() {
            self.frozen = Some(ring);
        }
    }

    /// Unfreeze so that `input` maps exactly to the frozen pose.
    pub fn release_clutch(&mut self, input: &RigidTransform) {
        if let Some(frozen) = self.frozen.take() {
            self.rebase = frozen * (self.offset * self.scaled(input)).inverse();
        }
    }

    /// Unfreeze without moving the rebase, for when no input has been seen.
    pub fn release_clutch_in_place(&mut self) {
        self.frozen = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::UnitQuaternion;
    use proptest::prelude::*;

    fn pose(x: f64, y: f64, z: f64, angle: f64) -> RigidTransform {
        RigidTransform::new(UnitQuaternion::from_rot_z(angle), Vector3::new(x, y, z))
    }

    #[test]
    fn identity_and_scale() {
        let m = Mapping::default();
        let p = pose(0.1, 0.2, 0.3, 0.4);
        assert_eq!(m.apply(&p), p);
        let m = Mapping::new(2.0, RigidTransform::IDENTITY).unwrap();
        let out = m.apply(&pose(0.1, 0.0, 0.0, 0.7));
        assert_eq!(out.translation, Vector3::new(0.2, 0.0, 0.0));
        assert_eq!(out.rotation, UnitQuaternion::from_rot_z(0.7));
        assert!(Mapping::new(0.05, RigidTransform::IDENTITY).is_none());
        assert!(Mapping::new(11.0, RigidTransform::IDENTITY).is_none());
    }

    #[test]
    fn scripted_clutch_sequence() {
        let mut m = Mapping::new(1.5, pose(0.1, -0.2, 0.0, 0.3)).unwrap();
        let a = pose(0.3, 0.0, 0.1, 0.0);
        let ring = m.apply(&a);
        m.engage_clutch(ring);
        let moved = pose(0.6, 0.0, 0.1, 0.5);
        assert_eq!(m.apply(&moved), ring);
        m.release_clutch(&moved);
        assert!((m.apply(&moved).translation - ring.translation).norm() <= 1e-9);
        assert!(m.apply(&moved).rotation.angle_to(&ring.rotation) <= 1e-9);
        // subsequent motion applies from the frozen pose
        let nudged = pose(0.61, 0.0, 0.1, 0.5);
        let delta = (m.apply(&nudged).translation - m.apply(&moved).translation).norm();
        assert!((delta - 0.015).abs() < 1e-12);
    }

    #[test]
    fn clutch_idempotence() {
        let mut m = Mapping::default();
        m.release_clutch(&pose(1.0, 0.0, 0.0, 0.0));
        assert_eq!(m, Mapping::default());
        m.engage_clutch(pose(0.1, 0.0, 0.0, 0.0));
        let once = m;
        m.engage_clutch(pose(0.9, 0.0, 0.0, 0.0));
        assert_eq!(m, once);
    }

    #[test]
    fn input_point_inverts_mapping() {
        let m = Mapping::new(2.5, pose(0.1, -0.2, 0.05, 1.0)).unwrap();
        let p = Vector3::new(0.3, -0.1, 0.2);
        let back = m.apply(&RigidTransform::from_translation(m.input_point(&p))).translation;
        assert!((back - p).norm() < 1e-12);
    }

    proptest! {
        #[test]
        fn release_is_continuous(
            scale in 0.1f64..10.0,
            start in prop::array::uniform4(-1.0f64..1.0),
            drifts in proptest::collection::vec(prop::array::uniform4(-0.5f64..0.5), 1..20),
        ) {
            let mut m = Mapping::new(scale, pose(0.2, 0.1, -0.1, 0.4)).unwrap();
            let mut input = pose(start[0], start[1], start[2], start[3]);
            m.engage_clutch(m.apply(&input));
            let frozen = m.apply(&input);
            for d in drifts {
                input = RigidTransform::new(
                    UnitQuaternion::from_rot_x(d[3]) * input.rotation,
                    input.translation + Vector3::new(d[0], d[1], d[2]),
                );
                prop_assert_eq!(m.apply(&input), frozen);
            }
            m.release_clutch(&input);
            let after = m.apply(&input);
            prop_assert!((after.translation - frozen.translation).norm() <= 1e-9);
            prop_assert!(after.rotation.angle_to(&frozen.rotation) <= 1e-9);
        }
    }
}
