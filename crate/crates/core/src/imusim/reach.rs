//! Two-link pose synthesis for scripted motion: find a joint configuration
//! that puts the end of a shoulder–elbow chain on a target point.
//!
//! Used to generate synthetic calibration touches and autopilot arm motion.
//! The elbow is placed on its swivel circle measured from the downward
//! direction, so `swivel = 0` gives the usual elbow-down posture.

use thiserror::Error;

use crate::arm::{joints_to_imus, ArmModel, ImuPair, JointConfig};
use crate::geom::Vector3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReachError {
    #[error("target at {distance:.4} m is outside the reachable shell [{min:.4}, {max:.4}]")]
    Unreachable { distance: f64, min: f64, max: f64 },
    #[error("target needs elbow flexion {0:.1}°, beyond the joint limit")]
    ElbowLimit(f64),
}

/// Joint configuration placing the end of a chain with link lengths
/// `upper` and `lower` at `target` (shoulder at the origin).
pub fn solve_reach(
    upper: f64,
    lower: f64,
    target: &Vector3,
    swivel: f64,
    pronation: f64,
) -> Result<JointConfig, ReachError> {
    let d = target.norm();
    let (min, max) = ((upper - lower).abs(), upper + lower);
    if !(d >= min && d <= max) || d < 1e-9 {
        return Err(ReachError::Unreachable { distance: d, min, max });
    }
    let axis = *target * (1.0 / d);

    // elbow circle: center along the target axis, radius from the link triangle
    let along = (upper * upper - lower * lower + d * d) / (2.0 * d);
    let radius = (upper * upper - along * along).max(0.0).sqrt();
    let down = -Vector3::Z;
    let n1 = (down - axis * down.dot(&axis))
        .normalized()
        .or_else(|| (Vector3::X - axis * axis.x).normalized())
        .expect("some reference is perpendicular to the target axis");
    let n2 = axis.cross(&n1);
    let (s, c) = swivel.sin_cos();
    let elbow = axis * along + (n1 * c + n2 * s) * radius;

    let upper_dir = elbow.normalized().expect("elbow is one upper-arm length away");
    let lower_dir = ((*target - elbow) * (1.0 / lower))
        .normalized()
        .unwrap_or(upper_dir);
    let perp = lower_dir - upper_dir * lower_dir.dot(&upper_dir);
    let flexion = perp.norm().atan2(lower_dir.dot(&upper_dir));
    if flexion > crate::arm::ELBOW_FLEXION_MAX_DEG.to_radians() {
        return Err(ReachError::ElbowLimit(flexion.to_degrees()));
    }
    let y_axis = perp.normalized().unwrap_or_else(|| {
        let helper = if upper_dir.z.abs() < 0.9 { Vector3::Z } else { Vector3::X };
        helper.cross(&upper_dir).normalized().expect("helper not parallel")
    });
    let z_axis = upper_dir.cross(&y_axis);

    // shoulder matrix columns are the upper-arm frame axes; read off Z-Y-X angles
    let m20 = upper_dir.z;
    let q2 = (-m20).clamp(-1.0, 1.0).asin();
    let q1 = upper_dir.y.atan2(upper_dir.x);
    let q3 = y_axis.z.atan2(z_axis.z);
    Ok(JointConfig::new(q1, q2, q3, flexion, pronation))
}

/// IMU pair whose wrist sits at `target`.
pub fn wrist_reach(arm: &ArmModel, target: &Vector3, swivel: f64) -> Result<ImuPair, ReachError> {
    let j = solve_reach(arm.upper_arm(), arm.forearm(), target, swivel, 0.0)?;
    Ok(joints_to_imus(&j).expect("solver output stays within joint limits"))
}

/// IMU pair whose extended fingertip sits at `target`, hand rigid with the
/// forearm.
pub fn fingertip_reach(
    arm: &ArmModel,
    target: &Vector3,
    swivel: f64,
    pronation: f64,
) -> Result<ImuPair, ReachError> {
    let j = solve_reach(
        arm.upper_arm(),
        arm.forearm() + arm.hand(),
        target,
        swivel,
        pronation,
    )?;
    Ok(joints_to_imus(&j).expect("solver output stays within joint limits"))
}
