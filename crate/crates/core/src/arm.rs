//! Simplified ball-joint arm: a 3-dof shoulder at the world origin, a 2-dof
//! elbow, and rigid upper-arm, forearm and hand links.
//!
//! World frame: x forward along the extended arm at the zero configuration,
//! y left, z up. Each IMU is assumed aligned with its segment, so the segment
//! axis is the IMU's local +x.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{RigidTransform, UnitQuaternion, Vector3};

/// Hand length from wrist to extended fingertip used during calibration.
pub const DEFAULT_HAND_LENGTH: f64 = 0.2;

/// Upper bound on any link length, meters.
pub const MAX_LINK_LENGTH: f64 = 1.0;

pub const ELBOW_FLEXION_MAX_DEG: f64 = 150.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArmError {
    #[error("{name} length {value} m must be in (0, {MAX_LINK_LENGTH})")]
    InvalidLength { name: &'static str, value: f64 },
    #[error("joint q{index} = {value_deg:.3}° is outside [{min_deg}°, {max_deg}°]")]
    JointOutOfRange {
        index: usize,
        value_deg: f64,
        min_deg: f64,
        max_deg: f64,
    },
}

/// Link lengths in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ArmLengths", into = "ArmLengths")]
pub struct ArmModel {
    upper_arm: f64,
    forearm: f64,
    hand: f64,
}

#[derive(Serialize, Deserialize)]
struct ArmLengths {
    upper_arm: f64,
    forearm: f64,
    #[serde(default = "default_hand")]
    hand: f64,
}

fn default_hand() -> f64 {
    DEFAULT_HAND_LENGTH
}

impl TryFrom<ArmLengths> for ArmModel {
    type Error = ArmError;
    fn try_from(l: ArmLengths) -> Result<Self, ArmError> {
        ArmModel::new(l.upper_arm, l.forearm, l.hand)
    }
}

impl From<ArmModel> for ArmLengths {
    fn from(a: ArmModel) -> Self {
        ArmLengths {
            upper_arm: a.upper_arm,
            forearm: a.forearm,
            hand: a.hand,
        }
    }
}

fn check_length(name: &'static str, value: f64) -> Result<f64, ArmError> {
    if value > 0.0 && value < MAX_LINK_LENGTH {
        Ok(value)
    } else {
        Err(ArmError::InvalidLength { name, value })
    }
}

impl ArmModel {
    pub fn new(upper_arm: f64, forearm: f64, hand: f64) -> Result<Self, ArmError> {
        Ok(Self {
            upper_arm: check_length("upper-arm", upper_arm)?,
            forearm: check_length("forearm", forearm)?,
            hand: check_length("hand", hand)?,
        })
    }

    /// Arm with the default 0.2 m hand.
    pub fn with_default_hand(upper_arm: f64, forearm: f64) -> Result<Self, ArmError> {
        Self::new(upper_arm, forearm, DEFAULT_HAND_LENGTH)
    }

    pub fn upper_arm(&self) -> f64 {
        self.upper_arm
    }

    pub fn forearm(&self) -> f64 {
        self.forearm
    }

    pub fn hand(&self) -> f64 {
        self.hand
    }

    /// Shoulder-to-wrist reach.
    pub fn wrist_reach(&self) -> f64 {
        self.upper_arm + self.forearm
    }
}

/// Joint angles in radians.
///
/// `q1..q3` are shoulder abduction/adduction, flexion/extension and
/// medial/lateral rotation; `q4` is elbow flexion and `q5` forearm
/// pronation/supination.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 5]", into = "[f64; 5]")]
pub struct JointConfig {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub q4: f64,
    pub q5: f64,
}

impl From<[f64; 5]> for JointConfig {
    fn from(q: [f64; 5]) -> Self {
        JointConfig {
            q1: q[0],
            q2: q[1],
            q3: q[2],
            q4: q[3],
            q5: q[4],
        }
    }
}

impl From<JointConfig> for [f64; 5] {
    fn from(j: JointConfig) -> Self {
        j.to_array()
    }
}

impl JointConfig {
    pub fn new(q1: f64, q2: f64, q3: f64, q4: f64, q5: f64) -> Self {
        Self { q1, q2, q3, q4, q5 }
    }

    pub fn from_degrees(deg: [f64; 5]) -> Self {
        deg.map(f64::to_radians).into()
    }

    pub fn to_array(self) -> [f64; 5] {
        [self.q1, self.q2, self.q3, self.q4, self.q5]
    }

    pub fn validate(&self) -> Result<(), ArmError> {
        for (i, &q) in self.to_array().iter().enumerate() {
            let (lo, hi): (f64, f64) = if i == 3 {
                (0.0, ELBOW_FLEXION_MAX_DEG)
            } else {
                (-180.0, 180.0)
            };
            let deg = q.to_degrees();
            // compare in radians so the exact bounds stay admissible
            if !(q >= lo.to_radians() && q <= hi.to_radians()) {
                return Err(ArmError::JointOutOfRange {
                    index: i + 1,
                    value_deg: deg,
                    min_deg: lo,
                    max_deg: hi,
                });
            }
        }
        Ok(())
    }
}

/// Timestamped orientations of the upper-arm (`r1`) and forearm (`r2`) IMUs
/// with respect to the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuPair {
    pub t: f64,
    pub r1: UnitQuaternion,
    pub r2: UnitQuaternion,
}

impl ImuPair {
    pub fn new(t: f64, r1: UnitQuaternion, r2: UnitQuaternion) -> Self {
        Self { t, r1, r2 }
    }

    pub fn identity(t: f64) -> Self {
        Self::new(t, UnitQuaternion::IDENTITY, UnitQuaternion::IDENTITY)
    }

    pub fn at(mut self, t: f64) -> Self {
        self.t = t;
        self
    }
}

/// Shoulder rotation `rotZ(q1)·rotY(q2)·rotX(q3)`.
pub fn shoulder_rotation(j: &JointConfig) -> UnitQuaternion {
    UnitQuaternion::from_rot_z(j.q1)
        * UnitQuaternion::from_rot_y(j.q2)
        * UnitQuaternion::from_rot_x(j.q3)
}

/// Elbow rotation `rotZ(q4)·rotX(q5)`, flexion about +z.
pub fn elbow_rotation(j: &JointConfig) -> UnitQuaternion {
    UnitQuaternion::from_rot_z(j.q4) * UnitQuaternion::from_rot_x(j.q5)
}

/// IMU orientations produced by a joint configuration, timestamped at 0.
pub fn joints_to_imus(j: &JointConfig) -> Result<ImuPair, ArmError> {
    j.validate()?;
    let r1 = shoulder_rotation(j);
    let r2 = r1 * elbow_rotation(j);
    Ok(ImuPair::new(0.0, r1, r2))
}

/// Wrist pose in the world frame.
///
/// Expanding the shoulder·elbow·wrist frame product with `R_s = r1`,
/// `R_e = r1⁻¹·r2` and an identity wrist rotation collapses to
/// `p = r1·(l_u,0,0) + r2·(l_f,0,0)` and `R = r2`.
pub fn wrist_pose(arm: &ArmModel, imus: &ImuPair) -> RigidTransform {
    let elbow = imus.r1.rotate(&Vector3::new(arm.upper_arm, 0.0, 0.0));
    let wrist = elbow + imus.r2.rotate(&Vector3::new(arm.forearm, 0.0, 0.0));
    RigidTransform::new(imus.r2, wrist)
}

/// Extended-fingertip position; the hand is rigid with the forearm.
pub fn fingertip_position(arm: &ArmModel, imus: &ImuPair) -> Vector3 {
    wrist_pose(arm, imus).translation + imus.r2.rotate(&Vector3::new(arm.hand, 0.0, 0.0))
}

/// Joint positions for drawing the arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Skeleton {
    pub shoulder: Vector3,
    pub elbow: Vector3,
    pub wrist: Vector3,
    pub fingertip: Vector3,
}

impl Skeleton {
    /// Apply a rigid transform to every joint.
    pub fn transformed(&self, t: &RigidTransform) -> Skeleton {
        Skeleton {
            shoulder: t.transform_point(&self.shoulder),
            elbow: t.transform_point(&self.elbow),
            wrist: t.transform_point(&self.wrist),
            fingertip: t.transform_point(&self.fingertip),
        }
    }
}

pub fn arm_skeleton(arm: &ArmModel, imus: &ImuPair) -> Skeleton {
    let upper_dir = imus.r1.rotate(&Vector3::X);
    let fore_dir = imus.r2.rotate(&Vector3::X);
    let elbow = upper_dir * arm.upper_arm;
    let wrist = elbow + fore_dir * arm.forearm;
    Skeleton {
        shoulder: Vector3::ZERO,
        elbow,
        wrist,
        fingertip: wrist + fore_dir * arm.hand,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn arm() -> ArmModel {
        ArmModel::new(0.3, 0.25, 0.2).unwrap()
    }

    fn close(a: &Vector3, b: &Vector3, tol: f64) -> bool {
        (*a - *b).norm() <= tol
    }

    fn random_quat(rng: &mut ChaCha8Rng) -> UnitQuaternion {
        loop {
            let c: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let n2: f64 = c.iter().map(|v| v * v).sum();
            if n2 > 1e-2 && n2 <= 1.0 {
                return UnitQuaternion::from_array(c).unwrap();
            }
        }
    }

    fn random_joints(rng: &mut ChaCha8Rng) -> JointConfig {
        JointConfig::new(
            rng.random_range(-PI..PI),
            rng.random_range(-PI..PI),
            rng.random_range(-PI..PI),
            rng.random_range(0.0..150f64.to_radians()),
            rng.random_range(-PI..PI),
        )
    }

    // 4×4 homogeneous matrices built straight from cos/sin, no quaternions.
    type Mat4 = [[f64; 4]; 4];

    fn mat_mul(a: &Mat4, b: &Mat4) -> Mat4 {
        let mut out = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        out
    }

    fn rot_x(a: f64) -> Mat4 {
        let (s, c) = a.sin_cos();
        [[1.0, 0.0, 0.0, 0.0], [0.0, c, -s, 0.0], [0.0, s, c, 0.0], [0.0, 0.0, 0.0, 1.0]]
    }

    fn rot_y(a: f64) -> Mat4 {
        let (s, c) = a.sin_cos();
        [[c, 0.0, s, 0.0], [0.0, 1.0, 0.0, 0.0], [-s, 0.0, c, 0.0], [0.0, 0.0, 0.0, 1.0]]
    }

    fn rot_z(a: f64) -> Mat4 {
        let (s, c) = a.sin_cos();
        [[c, -s, 0.0, 0.0], [s, c, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
    }

    fn trans_x(d: f64) -> Mat4 {
        let mut m = rot_x(0.0);
        m[0][3] = d;
        m
    }

    /// Five revolute joints in series with link offsets along local x.
    fn serial_chain_wrist(arm: &ArmModel, j: &JointConfig) -> Mat4 {
        [
            rot_z(j.q1),
            rot_y(j.q2),
            rot_x(j.q3),
            trans_x(arm.upper_arm()),
            rot_z(j.q4),
            rot_x(j.q5),
            trans_x(arm.forearm()),
        ]
        .iter()
        .fold(rot_x(0.0), |acc, m| mat_mul(&acc, m))
    }

    fn frame_product(imus: &ImuPair, offsets: &[f64]) -> RigidTransform {
        let r_s = imus.r1;
        let r_e = imus.r1.inverse() * imus.r2;
        let rotations = [r_s, r_e, UnitQuaternion::IDENTITY, UnitQuaternion::IDENTITY];
        let mut translations = vec![Vector3::ZERO];
        translations.extend(offsets.iter().map(|&l| Vector3::new(l, 0.0, 0.0)));
        rotations
            .iter()
            .zip(&translations)
            .map(|(r, p)| RigidTransform::new(*r, *p))
            .fold(RigidTransform::IDENTITY, |acc, f| acc.compose(&f))
    }

    #[test]
    fn rejects_bad_lengths() {
        assert!(ArmModel::new(0.0, 0.25, 0.2).is_err());
        assert!(ArmModel::new(0.3, 1.0, 0.2).is_err());
        assert!(ArmModel::new(0.3, 0.25, -0.1).is_err());
        assert!(ArmModel::new(0.3, f64::NAN, 0.2).is_err());
    }

    #[test]
    fn zero_configuration_gives_identity_imus() {
        let imus = joints_to_imus(&JointConfig::default()).unwrap();
        assert_eq!(imus.r1, UnitQuaternion::IDENTITY);
        assert_eq!(imus.r2, UnitQuaternion::IDENTITY);
    }

    #[test]
    fn elbow_only_configuration() {
        let imus = joints_to_imus(&JointConfig::new(0.0, 0.0, 0.0, FRAC_PI_2, 0.0)).unwrap();
        assert_eq!(imus.r1, UnitQuaternion::IDENTITY);
        assert!(imus.r2.dot(&UnitQuaternion::from_rot_z(FRAC_PI_2)).abs() > 1.0 - 1e-15);
    }

    #[test]
    fn out_of_range_joints_rejected() {
        let bad = JointConfig::from_degrees([0.0, 0.0, 0.0, 151.0, 0.0]);
        assert!(matches!(
            joints_to_imus(&bad),
            Err(ArmError::JointOutOfRange { index: 4, .. })
        ));
        let bad = JointConfig::from_degrees([0.0, 0.0, 0.0, -1.0, 0.0]);
        assert!(joints_to_imus(&bad).is_err());
        let bad = JointConfig::from_degrees([181.0, 0.0, 0.0, 10.0, 0.0]);
        assert!(matches!(
            joints_to_imus(&bad),
            Err(ArmError::JointOutOfRange { index: 1, .. })
        ));
        let edge = JointConfig::from_degrees([180.0, -180.0, 0.0, 150.0, 0.0]);
        assert!(joints_to_imus(&edge).is_ok());
    }

    #[test]
    fn wrist_pose_examples() {
        let w = wrist_pose(&arm(), &ImuPair::identity(0.0));
        assert!(close(&w.translation, &Vector3::new(0.55, 0.0, 0.0), 1e-15));
        assert_eq!(w.rotation, UnitQuaternion::IDENTITY);

        let bent = ImuPair::new(0.0, UnitQuaternion::IDENTITY, UnitQuaternion::from_rot_z(FRAC_PI_2));
        let w = wrist_pose(&arm(), &bent);
        assert!(close(&w.translation, &Vector3::new(0.3, 0.25, 0.0), 1e-15));
    }

    #[test]
    fn fingertip_examples() {
        let p = fingertip_position(&arm(), &ImuPair::identity(0.0));
        assert!(close(&p, &Vector3::new(0.75, 0.0, 0.0), 1e-15));
        let bent = ImuPair::new(0.0, UnitQuaternion::IDENTITY, UnitQuaternion::from_rot_z(FRAC_PI_2));
        let p = fingertip_position(&arm(), &bent);
        assert!(close(&p, &Vector3::new(0.3, 0.45, 0.0), 1e-15));
    }

    #[test]
    fn skeleton_examples() {
        let s = arm_skeleton(&arm(), &ImuPair::identity(0.0));
        let xs = [s.shoulder.x, s.elbow.x, s.wrist.x, s.fingertip.x];
        for (got, want) in xs.iter().zip([0.0, 0.3, 0.55, 0.75]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
        for p in [s.elbow, s.wrist, s.fingertip] {
            assert_eq!(p.y, 0.0);
            assert_eq!(p.z, 0.0);
        }
    }

    #[test]
    fn wrist_pose_matches_three_frame_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let arm = arm();
        for _ in 0..1000 {
            let imus = ImuPair::new(0.0, random_quat(&mut rng), random_quat(&mut rng));
            let oracle = frame_product(&imus, &[arm.upper_arm(), arm.forearm()]);
            let got = wrist_pose(&arm, &imus);
            assert!(close(&got.translation, &oracle.translation, 1e-12));
            assert!(got.rotation.dot(&oracle.rotation).abs() > 1.0 - 1e-12);
        }
    }

    #[test]
    fn fingertip_matches_four_frame_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let arm = arm();
        for _ in 0..1000 {
            let imus = ImuPair::new(0.0, random_quat(&mut rng), random_quat(&mut rng));
            let oracle = frame_product(&imus, &[arm.upper_arm(), arm.forearm(), arm.hand()]);
            assert!(close(&fingertip_position(&arm, &imus), &oracle.translation, 1e-12));
        }
    }

    #[test]
    fn joints_round_trip_against_serial_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let arm = arm();
        for _ in 0..1000 {
            let j = random_joints(&mut rng);
            let w = wrist_pose(&arm, &joints_to_imus(&j).unwrap());
            let m = serial_chain_wrist(&arm, &j);
            assert!(close(&w.translation, &Vector3::new(m[0][3], m[1][3], m[2][3]), 1e-9));
            let r = w.rotation.to_matrix();
            for i in 0..3 {
                for k in 0..3 {
                    assert_abs_diff_eq!(r[i][k], m[i][k], epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn skeleton_is_consistent_with_fk() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let arm = arm();
        for _ in 0..200 {
            let imus = ImuPair::new(0.0, random_quat(&mut rng), random_quat(&mut rng));
            let s = arm_skeleton(&arm, &imus);
            assert!(close(&s.wrist, &wrist_pose(&arm, &imus).translation, 1e-12));
            assert!(close(&s.fingertip, &fingertip_position(&arm, &imus), 1e-12));
            assert_abs_diff_eq!((s.elbow - s.shoulder).norm(), arm.upper_arm(), epsilon = 1e-12);
            assert_abs_diff_eq!((s.wrist - s.elbow).norm(), arm.forearm(), epsilon = 1e-9);
            assert_abs_diff_eq!((s.fingertip - s.wrist).norm(), arm.hand(), epsilon = 1e-9);
        }
    }

    fn arb_quat() -> impl Strategy<Value = UnitQuaternion> {
        prop::array::uniform4(-1.0f64..1.0)
            .prop_filter("degenerate", |c| c.iter().map(|v| v * v).sum::<f64>() > 1e-3)
            .prop_map(|c| UnitQuaternion::from_array(c).unwrap())
    }

    proptest! {
        #[test]
        fn wrist_within_reach(r1 in arb_quat(), r2 in arb_quat()) {
            let arm = arm();
            let w = wrist_pose(&arm, &ImuPair::new(0.0, r1, r2));
            prop_assert!(w.translation.norm() <= arm.wrist_reach() + 1e-12);
        }

        #[test]
        fn double_cover_leaves_outputs_unchanged(r1 in arb_quat(), r2 in arb_quat()) {
            let arm = arm();
            let a = ImuPair::new(0.0, r1, r2);
            for b in [
                ImuPair::new(0.0, r1.negated(), r2),
                ImuPair::new(0.0, r1, r2.negated()),
                ImuPair::new(0.0, r1.negated(), r2.negated()),
            ] {
                prop_assert!(close(&wrist_pose(&arm, &a).translation, &wrist_pose(&arm, &b).translation, 1e-12));
                prop_assert!(close(&fingertip_position(&arm, &a), &fingertip_position(&arm, &b), 1e-12));
            }
        }

        #[test]
        fn fingertip_is_lipschitz_in_orientation(
            r1 in arb_quat(),
            r2 in arb_quat(),
            axis in prop::array::uniform3(-1.0f64..1.0),
            which in 0usize..2,
        ) {
            let axis = Vector3::from(axis);
            prop_assume!(axis.norm() > 1e-3);
            let eps = 1e-4;
            let d = UnitQuaternion::from_axis_angle(&axis, eps).unwrap();
            let arm = arm();
            let a = ImuPair::new(0.0, r1, r2);
            let b = if which == 0 { ImuPair::new(0.0, d * r1, r2) } else { ImuPair::new(0.0, r1, d * r2) };
            let moved = (fingertip_position(&arm, &a) - fingertip_position(&arm, &b)).norm();
            let bound = (arm.upper_arm() + arm.forearm() + arm.hand()) * eps;
            prop_assert!(moved <= bound * (1.0 + 1e-3));
        }
    }

    #[test]
    fn full_extension_reaches_bound() {
        let arm = arm();
        let r = UnitQuaternion::from_rot_y(0.7);
        let w = wrist_pose(&arm, &ImuPair::new(0.0, r, r));
        assert_abs_diff_eq!(w.translation.norm(), arm.wrist_reach(), epsilon = 1e-15);
    }
}
