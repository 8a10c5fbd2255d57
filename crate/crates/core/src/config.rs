//! Engine configuration and its flat `key = value` text form.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Per-frame cost proxy `quad * R^2 + lin * R + fixed`, arbitrary units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostModel {
    pub quad: f64,
    pub lin: f64,
    pub fixed: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            quad: 1.0,
            lin: 100.0,
            fixed: 0.0,
        }
    }
}

impl CostModel {
    pub fn cost(&self, tokens: usize) -> f64 {
        let r = tokens as f64;
        self.quad * r * r + self.lin * r + self.fixed
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    /// Warmup frames at full resolution before merging starts.
    pub warmup_frames: usize,
    /// Depth clusters over unprotected patches.
    pub clusters: usize,
    /// Frames over which a region's merges are spread.
    pub merge_window: usize,
    pub r_min: f64,
    pub r_max: f64,
    /// Depth-gradient threshold, meters per patch step.
    pub tau_edge: f64,
    /// Static-patch depth range threshold, meters.
    pub epsilon: f64,
    /// Non-static fraction above which a region is restored.
    pub gamma: f64,
    /// Mean attended-patch depth change that triggers re-initialization, meters.
    pub delta_reinit: f64,
    /// Depth history length for static detection, frames.
    pub dynamics_window: usize,
    pub seed: u64,

    pub uniform_ratio: bool,
    pub one_shot: bool,
    pub no_protection: bool,
    pub no_reinit: bool,
    pub no_auxview: bool,

    /// End-effector step length counted as significant motion, meters.
    pub motion_sig: f64,
    /// Largest per-step aperture change still counted as stable.
    pub aperture_stable: f64,
    /// Auxiliary-view merge ratio in the Merge state.
    pub r_aux: f64,
    /// Aperture below which the gripper is treated as carrying an object.
    pub carry_aperture: f64,

    pub cost: CostModel,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            warmup_frames: 5,
            clusters: 3,
            merge_window: 5,
            r_min: 0.1,
            r_max: 0.7,
            tau_edge: 0.05,
            epsilon: 0.01,
            gamma: 0.3,
            delta_reinit: 0.05,
            dynamics_window: 5,
            seed: 0,
            uniform_ratio: false,
            one_shot: false,
            no_protection: false,
            no_reinit: false,
            no_auxview: false,
            motion_sig: 0.01,
            aperture_stable: 0.05,
            r_aux: 0.6,
            carry_aperture: 0.2,
            cost: CostModel::default(),
        }
    }
}

/// Every recognized key, in canonical output order.
pub const CONFIG_KEYS: &[&str] = &[
    "warmup_frames",
    "clusters",
    "merge_window",
    "r_min",
    "r_max",
    "tau_edge",
    "epsilon",
    "gamma",
    "delta_reinit",
    "dynamics_window",
    "seed",
    "uniform_ratio",
    "one_shot",
    "no_protection",
    "no_reinit",
    "no_auxview",
    "motion_sig",
    "aperture_stable",
    "r_aux",
    "carry_aperture",
    "cost_quad",
    "cost_lin",
    "cost_fixed",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::bad_config(key, format!("cannot parse `{value}`")))
}

impl EngineConfig {
    /// Sets one field by key. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "warmup_frames" => self.warmup_frames = parse(key, v)?,
            "clusters" => self.clusters = parse(key, v)?,
            "merge_window" => self.merge_window = parse(key, v)?,
            "r_min" => self.r_min = parse(key, v)?,
            "r_max" => self.r_max = parse(key, v)?,
            "tau_edge" => self.tau_edge = parse(key, v)?,
            "epsilon" => self.epsilon = parse(key, v)?,
            "gamma" => self.gamma = parse(key, v)?,
            "delta_reinit" => self.delta_reinit = parse(key, v)?,
            "dynamics_window" => self.dynamics_window = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "uniform_ratio" => self.uniform_ratio = parse(key, v)?,
            "one_shot" => self.one_shot = parse(key, v)?,
            "no_protection" => self.no_protection = parse(key, v)?,
            "no_reinit" => self.no_reinit = parse(key, v)?,
            "no_auxview" => self.no_auxview = parse(key, v)?,
            "motion_sig" => self.motion_sig = parse(key, v)?,
            "aperture_stable" => self.aperture_stable = parse(key, v)?,
            "r_aux" => self.r_aux = parse(key, v)?,
            "carry_aperture" => self.carry_aperture = parse(key, v)?,
            "cost_quad" => self.cost.quad = parse(key, v)?,
            "cost_lin" => self.cost.lin = parse(key, v)?,
            "cost_fixed" => self.cost.fixed = parse(key, v)?,
            _ => return Err(Error::bad_config(key, "unknown key")),
        }
        Ok(())
    }

    /// Builds a validated config from defaults overridden by `pairs`.
    pub fn from_pairs<'a, I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut cfg = Self::default();
        for (k, v) in pairs {
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses the flat text form: one `key = value` per line, `#` comments.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Malformed {
                what: "config".into(),
                reason: format!("line {}: expected `key = value`", lineno + 1),
            })?;
            pairs.push((k.trim(), v.trim()));
        }
        Self::from_pairs(pairs)
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        CONFIG_KEYS
            .iter()
            .map(|&k| {
                let v = match k {
                    "warmup_frames" => self.warmup_frames.to_string(),
                    "clusters" => self.clusters.to_string(),
                    "merge_window" => self.merge_window.to_string(),
                    "r_min" => self.r_min.to_string(),
                    "r_max" => self.r_max.to_string(),
                    "tau_edge" => self.tau_edge.to_string(),
                    "epsilon" => self.epsilon.to_string(),
                    "gamma" => self.gamma.to_string(),
                    "delta_reinit" => self.delta_reinit.to_string(),
                    "dynamics_window" => self.dynamics_window.to_string(),
                    "seed" => self.seed.to_string(),
                    "uniform_ratio" => self.uniform_ratio.to_string(),
                    "one_shot" => self.one_shot.to_string(),
                    "no_protection" => self.no_protection.to_string(),
                    "no_reinit" => self.no_reinit.to_string(),
                    "no_auxview" => self.no_auxview.to_string(),
                    "motion_sig" => self.motion_sig.to_string(),
                    "aperture_stable" => self.aperture_stable.to_string(),
                    "r_aux" => self.r_aux.to_string(),
                    "carry_aperture" => self.carry_aperture.to_string(),
                    "cost_quad" => self.cost.quad.to_string(),
                    "cost_lin" => self.cost.lin.to_string(),
                    "cost_fixed" => self.cost.fixed.to_string(),
                    _ => unreachable!(),
                };
                (k, v)
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.to_pairs() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let positive_counts = [
            ("warmup_frames", self.warmup_frames),
            ("clusters", self.clusters),
            ("merge_window", self.merge_window),
            ("dynamics_window", self.dynamics_window),
        ];
        for (key, v) in positive_counts {
            if v == 0 {
                return Err(Error::bad_config(key, "must be at least 1"));
            }
        }
        let unit = |key: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::bad_config(key, "must lie in [0, 1]"))
            }
        };
        unit("r_min", self.r_min)?;
        unit("r_max", self.r_max)?;
        unit("r_aux", self.r_aux)?;
        if self.r_min > self.r_max {
            return Err(Error::bad_config("r_min", "must not exceed r_max"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::bad_config("gamma", "must lie in (0, 1)"));
        }
        let thresholds = [
            ("tau_edge", self.tau_edge),
            ("epsilon", self.epsilon),
            ("delta_reinit", self.delta_reinit),
            ("motion_sig", self.motion_sig),
            ("aperture_stable", self.aperture_stable),
            ("carry_aperture", self.carry_aperture),
        ];
        for (key, v) in thresholds {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::bad_config(key, "must be a positive finite number"));
            }
        }
        for (key, v) in [
            ("cost_quad", self.cost.quad),
            ("cost_lin", self.cost.lin),
            ("cost_fixed", self.cost.fixed),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::bad_config(key, "must be a non-negative finite number"));
            }
        }
        Ok(())
    }
}
