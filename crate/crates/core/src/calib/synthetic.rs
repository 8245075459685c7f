//! Synthetic touch samples from a known arm, for exact-recovery checks and
//! noise studies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{calibrate, CalibError, CalibrationGrid, CalibrationOptions, CalibrationResult, CalibrationSample};
use crate::arm::ArmModel;
use crate::geom::{UnitQuaternion, Vector3};
use crate::imusim::reach::fingertip_reach;

/// Corner points of the default grid.
pub const CORNER_IDS: [u32; 4] = [1, 3, 7, 9];
pub const MAX_SWIVEL_DEG: f64 = 20.0;
pub const MAX_PRONATION_DEG: f64 = 45.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSetup {
    /// Ground-truth arm; its hand length is used for the touches.
    pub arm: ArmModel,
    pub grid: CalibrationGrid,
    pub point_ids: Vec<u32>,
    /// Root-mean-square rotation angle of the orientation noise, degrees.
    pub noise_rms_deg: f64,
    pub seed: u64,
}

impl SyntheticSetup {
    pub fn new(upper_arm: f64, forearm: f64) -> Result<Self, CalibError> {
        Ok(Self {
            arm: ArmModel::with_default_hand(upper_arm, forearm)?,
            grid: CalibrationGrid::default_grid(),
            point_ids: CORNER_IDS.to_vec(),
            noise_rms_deg: 0.0,
            seed: 0,
        })
    }
}

fn perturb(q: &UnitQuaternion, dist: Option<&Normal<f64>>, rng: &mut ChaCha8Rng) -> UnitQuaternion {
    match dist {
        Some(d) => {
            let v = Vector3::new(d.sample(rng), d.sample(rng), d.sample(rng));
            UnitQuaternion::from_rotation_vector(&v) * *q
        }
        None => *q,
    }
}

/// One touch per listed point, with a seeded elbow swivel and forearm
/// pronation per touch and the wrist held straight.
pub fn synthesize_samples(setup: &SyntheticSetup) -> Result<Vec<CalibrationSample>, CalibError> {
    if !(setup.noise_rms_deg >= 0.0 && setup.noise_rms_deg.is_finite()) {
        return Err(CalibError::InvalidOptions(format!("noise {}", setup.noise_rms_deg)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(setup.seed);
    noise_rng.set_stream(1);
    let sigma = setup.noise_rms_deg.to_radians() / 3f64.sqrt();
    let noise = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"));
    let swivel_max = MAX_SWIVEL_DEG.to_radians();
    let pronation_max = MAX_PRONATION_DEG.to_radians();

    let mut out = Vec::with_capacity(setup.point_ids.len());
    for &id in &setup.point_ids {
        let target = setup.grid.position(id).ok_or(CalibError::UnknownPoint(id))?;
        let swivel = rng.random_range(-swivel_max..=swivel_max);
        let pronation = rng.random_range(-pronation_max..=pronation_max);
        let imus = fingertip_reach(&setup.arm, &target, swivel, pronation)
            .map_err(|e| CalibError::InvalidGrid(format!("point {id}: {e}")))?;
        out.push(CalibrationSample {
            point_id: id,
            r1: perturb(&imus.r1, noise.as_ref(), &mut noise_rng),
            r2: perturb(&imus.r2, noise.as_ref(), &mut noise_rng),
        });
    }
    Ok(out)
}

/// Calibrate `trials` independent noisy sample sets, seeds `seed, seed+1, …`.
pub fn noise_study(
    setup: &SyntheticSetup,
    trials: usize,
    options: &CalibrationOptions,
) -> Result<Vec<CalibrationResult>, CalibError> {
    (0..trials as u64)
        .map(|k| {
            let s = SyntheticSetup {
                seed: setup.seed.wrapping_add(k),
                ..setup.clone()
            };
            let samples = synthesize_samples(&s)?;
            Ok(calibrate(&samples, &s.grid, options)?
                .with_ground_truth(setup.arm.upper_arm(), setup.arm.forearm()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arm::fingertip_position;

    #[test]
    fn noiseless_touches_hit_targets() {
        let setup = SyntheticSetup {
            point_ids: (1..=9).collect(),
            ..SyntheticSetup::new(0.28, 0.24).unwrap()
        };
        for s in synthesize_samples(&setup).unwrap() {
            let tip = fingertip_position(&setup.arm, &s.imus());
            assert!(tip.distance(&setup.grid.position(s.point_id).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn noise_has_requested_rms() {
        let base = SyntheticSetup {
            point_ids: (1..=9).collect(),
            ..SyntheticSetup::new(0.28, 0.24).unwrap()
        };
        let clean = synthesize_samples(&base).unwrap();
        let mut sum_sq = 0.0;
        let mut n = 0;
        for seed in 0..200 {
            let noisy = synthesize_samples(&SyntheticSetup { noise_rms_deg: 2.0, seed, ..base.clone() }).unwrap();
            let clean = synthesize_samples(&SyntheticSetup { seed, ..base.clone() }).unwrap();
            for (a, b) in noisy.iter().zip(&clean) {
                for angle in [a.r1.angle_to(&b.r1), a.r2.angle_to(&b.r2)] {
                    sum_sq += angle.to_degrees().powi(2);
                    n += 1;
                }
            }
        }
        let rms = (sum_sq / n as f64).sqrt();
        assert!((rms - 2.0).abs() < 0.1, "rms {rms}");
        assert_eq!(clean.len(), 9);
    }

    #[test]
    fn same_seed_same_samples() {
        let s = SyntheticSetup { noise_rms_deg: 2.0, seed: 3, ..SyntheticSetup::new(0.3, 0.25).unwrap() };
        assert_eq!(synthesize_samples(&s).unwrap(), synthesize_samples(&s).unwrap());
    }

    #[test]
    fn unreachable_point_is_reported() {
        let s = SyntheticSetup::new(0.15, 0.15).unwrap();
        let far = CalibrationGrid::new(
            (1..=4)
                .map(|id| super::super::GridPoint { id, position: Vector3::new(0.9, 0.1 * id as f64, 0.0) })
                .collect(),
        )
        .unwrap();
        assert!(synthesize_samples(&SyntheticSetup { grid: far, point_ids: vec![1, 2, 3, 4], ..s }).is_err());
    }
}
