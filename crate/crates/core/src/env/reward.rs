use serde::{Deserialize, Serialize};

use crate::kinematics::STATE_DIM;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    /// Reward per meter (per radian for turning).
    pub w_vel: f64,
    /// Penalty per joule.
    pub w_e: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w_vel: 50.0,
            w_e: 0.5,
        }
    }
}

impl RewardWeights {
    pub fn is_valid(&self) -> bool {
        self.w_vel.is_finite() && self.w_e.is_finite() && self.w_vel >= 0.0 && self.w_e >= 0.0
    }
}

/// How per-joint mechanical power is turned into spent energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyMode {
    /// Only positive work counts: `max(0, τ·q̇)`.
    #[default]
    PositiveWork,
    /// Plain `τ·q̇`; braking gives energy back.
    Signed,
    /// `|τ·q̇|`; braking costs as much as driving.
    Absolute,
}

/// Energy spent by all joints over one substep.
pub fn accumulate_energy(
    tau: &[f64; STATE_DIM],
    qdot: &[f64; STATE_DIM],
    dt: f64,
    mode: EnergyMode,
) -> f64 {
    tau.iter()
        .zip(qdot)
        .map(|(t, v)| {
            let p = t * v;
            match mode {
                EnergyMode::PositiveWork => p.max(0.0),
                EnergyMode::Signed => p,
                EnergyMode::Absolute => p.abs(),
            }
        })
        .sum::<f64>()
        * dt
}

/// `W_vel · Δ − W_E · ΔE`.
pub fn compute_reward(delta: f64, energy: f64, w: &RewardWeights) -> f64 {
    w.w_vel * delta - w.w_e * energy
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_joint_product() {
        let mut tau = [0.0; 12];
        let mut qd = [0.0; 12];
        tau[4] = 1.0;
        qd[4] = 2.0;
        assert_abs_diff_eq!(
            accumulate_energy(&tau, &qd, 0.005, EnergyMode::PositiveWork),
            0.01,
            epsilon = 1e-15
        );
    }

    #[test]
    fn braking_is_free_under_positive_work() {
        let tau = [1.0; 12];
        let qd = [-3.0; 12];
        assert_eq!(
            accumulate_energy(&tau, &qd, 0.01, EnergyMode::PositiveWork),
            0.0
        );
        assert_abs_diff_eq!(
            accumulate_energy(&tau, &qd, 0.01, EnergyMode::Signed),
            -0.36,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            accumulate_energy(&tau, &qd, 0.01, EnergyMode::Absolute),
            0.36,
            epsilon = 1e-12
        );
    }

    #[test]
    fn matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut total = 0.0;
        let mut oracle = 0.0;
        for _ in 0..2000 {
            let tau: [f64; 12] = std::array::from_fn(|_| rng.random_range(-4.0..4.0));
            let qd: [f64; 12] = std::array::from_fn(|_| rng.random_range(-10.0..10.0));
            let dt = 0.001;
            total += accumulate_energy(&tau, &qd, dt, EnergyMode::PositiveWork);
            let mut step = 0.0;
            for j in 0..12 {
                let p = tau[j] * qd[j];
                if p > 0.0 {
                    step += p;
                }
            }
            oracle += step * dt;
        }
        assert!(total >= 0.0);
        assert_abs_diff_eq!(total, oracle, epsilon = 1e-12);
    }

    #[test]
    fn reward_terms() {
        let w = RewardWeights {
            w_vel: 10.0,
            w_e: 2.0,
        };
        assert_abs_diff_eq!(compute_reward(0.1, 0.0, &w), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(compute_reward(0.0, 0.5, &w), -1.0, epsilon = 1e-15);
        let w2 = RewardWeights {
            w_vel: 20.0,
            w_e: 4.0,
        };
        assert_abs_diff_eq!(
            compute_reward(0.3, 0.7, &w2),
            2.0 * compute_reward(0.3, 0.7, &w),
            epsilon = 1e-14
        );
    }
}
