//! Tracker configuration.
//!
//! Defaults reproduce the published experimental setup: 32x32 templates cut
//! into 8x8 patches, 10 targets per patch template, 600 particles with
//! transition sigmas `(6, 6, 0.02, 0.002, 0.002, 0)`, pursuit sparsity
//! `L = 4`, regularization `lambda = 0.001`, group size `k = 4`, and beta
//! hyperparameters `a = d = 4`, `b = c = 8`.

use serde::{Deserialize, Serialize};

use crate::appearance::RecencyBias;
use crate::error::{Error, Result};
use crate::motion::TransitionNoise;
use crate::occlusion::BetaPriors;
use crate::sparse;

/// Which joint sparse solver codes candidate groups.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// Greedy SOMP on the row-sparsity-constrained problem ("PJS-S").
    PjsS,
    /// M-FOCUSS on the l2,1 convex relaxation ("PJS-M").
    PjsM,
}

impl std::fmt::Display for SolverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolverKind::PjsS => write!(f, "pjs-s"),
            SolverKind::PjsM => write!(f, "pjs-m"),
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pjs-s" => Ok(SolverKind::PjsS),
            "pjs-m" => Ok(SolverKind::PjsM),
            other => Err(Error::InvalidConfig(format!(
                "unknown solver '{other}', expected pjs-s or pjs-m"
            ))),
        }
    }
}

/// Full tracker configuration; flat keys mirror the JSON config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Candidate images are resized to this square side (pixels).
    pub template_side: usize,
    /// Patch side; must divide `template_side`.
    pub patch_side: usize,
    /// Targets kept per patch template (`n`).
    pub n_targets: usize,
    pub n_particles: usize,
    /// Pursuit sparsity `L`.
    pub sparsity: usize,
    /// Regularization weight for the convex solver and the update-time
    /// single-patch coding.
    pub lambda: f64,
    /// Joint-coding group size `k`: how many previous targets accompany a
    /// candidate patch.
    pub group_size: usize,
    /// Transition standard deviations `(tx, ty, rotation, scale, aspect,
    /// skew)`.
    pub sigma: [f64; 6],
    pub solver: SolverKind,
    pub beta: BetaPriors,
    pub seed: u64,
    /// Maximum pixel shift when synthesizing the initial dictionary slots.
    pub init_shift_px: u32,
    pub mfocuss_tol: f64,
    pub mfocuss_max_iter: usize,
    /// Which end of the recency ranking dictionary replacement favors.
    pub recency_bias: RecencyBias,
    /// Optional per-patch error variances; `None` weights all patches
    /// equally.
    pub patch_variances: Option<Vec<f64>>,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            template_side: 32,
            patch_side: 8,
            n_targets: 10,
            n_particles: 600,
            sparsity: 4,
            lambda: 0.001,
            group_size: 4,
            sigma: [6.0, 6.0, 0.02, 0.002, 0.002, 0.0],
            solver: SolverKind::PjsS,
            beta: BetaPriors::default(),
            seed: 0,
            init_shift_px: 2,
            mfocuss_tol: sparse::DEFAULT_TOL,
            mfocuss_max_iter: sparse::DEFAULT_MAX_ITER,
            recency_bias: RecencyBias::RecentFirst,
            patch_variances: None,
        }
    }
}

impl TrackerConfig {
    /// Patches per template (`m`).
    pub fn n_patches(&self) -> usize {
        let grid = self.template_side / self.patch_side;
        grid * grid
    }

    /// Patch signal dimension (`M`).
    pub fn patch_dim(&self) -> usize {
        self.patch_side * self.patch_side
    }

    pub fn noise(&self) -> Result<TransitionNoise> {
        TransitionNoise::new(self.sigma)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_side == 0 || !self.template_side.is_multiple_of(self.patch_side) {
            return Err(Error::InvalidConfig(format!(
                "template side {} not divisible by patch side {}",
                self.template_side, self.patch_side
            )));
        }
        if self.n_targets < 2 {
            return Err(Error::InvalidConfig("n_targets must be >= 2".into()));
        }
        if self.n_particles == 0 {
            return Err(Error::InvalidConfig("n_particles must be >= 1".into()));
        }
        if self.sparsity == 0 {
            return Err(Error::InvalidConfig("sparsity must be >= 1".into()));
        }
        let n_atoms = self.n_targets * self.n_patches();
        if self.sparsity > self.patch_dim().min(n_atoms) {
            return Err(Error::InvalidConfig(format!(
                "sparsity {} exceeds min(patch dim {}, atoms {})",
                self.sparsity,
                self.patch_dim(),
                n_atoms
            )));
        }
        if !self.lambda.is_finite() || self.lambda <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "lambda must be finite and > 0, got {}",
                self.lambda
            )));
        }
        if !self.mfocuss_tol.is_finite() || self.mfocuss_tol <= 0.0 || self.mfocuss_max_iter == 0 {
            return Err(Error::InvalidConfig(
                "mfocuss_tol must be > 0 and mfocuss_max_iter >= 1".into(),
            ));
        }
        BetaPriors::new(self.beta.a, self.beta.b, self.beta.c, self.beta.d)?;
        self.noise()?;
        if let Some(vars) = &self.patch_variances {
            if vars.len() != self.n_patches() {
                return Err(Error::InvalidConfig(format!(
                    "patch_variances has {} entries, expected {}",
                    vars.len(),
                    self.n_patches()
                )));
            }
            if vars.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                return Err(Error::InvalidConfig(
                    "patch_variances must be finite and > 0".into(),
                ));
            }
        }
        Ok(())
    }

    /// Parses a JSON config; missing keys take defaults, unknown keys are
    /// rejected by name.
    pub fn from_json(text: &str) -> Result<Self> {
        let config: TrackerConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("config parse error: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    /// Serializes the effective configuration (all keys explicit).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_match_published_setup() {
        let config = TrackerConfig::default();
        config.validate().unwrap();
        assert_eq!(config.n_patches(), 16);
        assert_eq!(config.patch_dim(), 64);
        assert_eq!(config.sparsity, 4);
        assert_eq!(config.lambda, 0.001);
        assert_eq!(config.group_size, 4);
        assert_eq!(config.n_particles, 600);
        assert_eq!(config.sigma, [6.0, 6.0, 0.02, 0.002, 0.002, 0.0]);
    }

    #[test]
    fn json_roundtrip_preserves_config() {
        let config = TrackerConfig {
            seed: 7,
            solver: SolverKind::PjsM,
            ..TrackerConfig::default()
        };
        let text = config.to_json();
        let parsed = TrackerConfig::from_json(&text).unwrap();
        assert_eq!(parsed, config);
    }

    #[test]
    fn partial_json_fills_defaults() {
        let parsed = TrackerConfig::from_json(r#"{"n_particles": 50, "seed": 3}"#).unwrap();
        assert_eq!(parsed.n_particles, 50);
        assert_eq!(parsed.seed, 3);
        assert_eq!(parsed.template_side, 32);
        assert_eq!(parsed.solver, SolverKind::PjsS);
    }

    #[test]
    fn unknown_key_is_rejected_by_name() {
        let err = TrackerConfig::from_json(r#"{"particels": 50}"#).unwrap_err();
        let message = err.to_string();
        assert!(message.contains("particels"), "{message}");
    }

    #[test]
    fn solver_kind_parses_kebab_case() {
        assert_eq!("pjs-s".parse::<SolverKind>().unwrap(), SolverKind::PjsS);
        assert_eq!("pjs-m".parse::<SolverKind>().unwrap(), SolverKind::PjsM);
        assert!("pjs".parse::<SolverKind>().is_err());
        let json = serde_json::to_string(&SolverKind::PjsM).unwrap();
        assert_eq!(json, "\"pjs-m\"");
    }

    #[test]
    fn invalid_geometry_is_rejected() {
        let config = TrackerConfig {
            patch_side: 5,
            ..TrackerConfig::default()
        };
        assert!(config.validate().is_err());
        let mut config = TrackerConfig::default();
        config.beta.a = 1.0;
        assert!(config.validate().is_err());
    }
}
