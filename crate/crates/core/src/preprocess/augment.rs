use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::scene::{Role, Scene};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub enabled: bool,
    /// Standard deviation of position noise on observed frames, meters.
    pub noise_sigma: f64,
    /// Add noise to every observed track instead of only the AGENT.
    pub noise_all_agents: bool,
    pub rotate: bool,
    pub drop_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { enabled: true, noise_sigma: 0.25, noise_all_agents: true, rotate: true, drop_prob: 0.1 }
    }
}

impl AugmentConfig {
    pub fn off() -> Self {
        Self { enabled: false, noise_sigma: 0.0, noise_all_agents: false, rotate: false, drop_prob: 0.0 }
    }
}

/// Training-time perturbation of a scene.
///
/// In order: a rotation by `U[0, 2pi)` about the AGENT's last observed
/// position (tracks, future and map together), Gaussian noise on observed
/// positions, then random drops of observed frames, each replaced by the
/// previous kept position. The first frame of a track is never dropped.
pub fn augment(scene: &Scene, rng: &mut impl Rng, cfg: &AugmentConfig) -> Scene {
    if !cfg.enabled {
        return scene.clone();
    }
    let t_obs = scene.window().t_obs;
    let mut out = if cfg.rotate {
        let pivot = scene.agent_last_observed();
        let theta = rng.random_range(0.0..TAU);
        scene.transformed(move |p| p.rotate_about(pivot, theta))
    } else {
        scene.clone()
    };

    let noise = (cfg.noise_sigma > 0.0).then(|| Normal::new(0.0, cfg.noise_sigma).expect("finite sigma"));
    let drop = cfg.drop_prob > 0.0;
    if noise.is_none() && !drop {
        return out;
    }
    let mut tracks = out.tracks().to_vec();
    for track in &mut tracks {
        let n_obs = track.frames().iter().take_while(|&&f| f < t_obs).count();
        let noisy = cfg.noise_all_agents || track.role == Role::Agent;
        let positions = track.positions_mut();
        if let Some(dist) = noise.as_ref().filter(|_| noisy) {
            for p in &mut positions[..n_obs] {
                p.x += dist.sample(rng);
                p.y += dist.sample(rng);
            }
        }
        if drop {
            for i in 1..n_obs {
                if rng.random_bool(cfg.drop_prob.min(1.0)) {
                    positions[i] = positions[i - 1];
                }
            }
        }
    }
    out = out.with_tracks(tracks);
    out
}
