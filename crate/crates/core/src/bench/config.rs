//! Flat `key = value` tracker configuration files. Every key is optional and
//! overrides the corresponding default.
//!
//! ```toml
//! psi = 0.03
//! lambda = 0.01
//! padding = 2.0
//! template_side = 200
//! scale_factors = [0.985, 1.0, 1.015]
//! scale_penalty = 0.99
//! cell_size = 4
//! hog = true
//! color_names = true
//! gray = true
//! color_names_table = "path/to/table.bin"
//! theta = 0.95
//! gamma = 0.2
//! sigma_min = 20.0
//! omega = 1.5
//! min_log_ratio = 0.0
//! fg_gate = 4.0
//! mu0 = 5.0
//! beta = 3.0
//! admm_iterations = 4
//! mu_max = 20.0
//! response_drop = 0.65
//! depth_support_min = 0.1
//! tau = 0.65
//! history_len = 100
//! redetect_candidates = 3
//! depth_masking = true
//! occlusion_handling = true
//! warm_start = true
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::tracker::TrackerConfig;
use crate::{Error, Result};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    psi: Option<f64>,
    lambda: Option<f64>,
    padding: Option<f64>,
    template_side: Option<f64>,
    scale_factors: Option<Vec<f64>>,
    scale_penalty: Option<f64>,
    channel_weights: Option<Vec<f64>>,
    cell_size: Option<usize>,
    hog: Option<bool>,
    color_names: Option<bool>,
    gray: Option<bool>,
    color_names_table: Option<PathBuf>,
    theta: Option<f64>,
    gamma: Option<f64>,
    sigma_min: Option<f64>,
    omega: Option<f64>,
    min_log_ratio: Option<f64>,
    fg_gate: Option<f64>,
    mu0: Option<f64>,
    beta: Option<f64>,
    admm_iterations: Option<usize>,
    mu_max: Option<f64>,
    response_drop: Option<f64>,
    depth_support_min: Option<f64>,
    tau: Option<f64>,
    history_len: Option<usize>,
    redetect_candidates: Option<usize>,
    depth_masking: Option<bool>,
    occlusion_handling: Option<bool>,
    warm_start: Option<bool>,
}

macro_rules! set {
    ($src:expr => $($dst:expr),+ ; $($field:ident),+) => {
        $( if let Some(v) = $src.$field { $dst = v; } )+
    };
}

pub fn parse_config(text: &str, path: &Path) -> Result<TrackerConfig> {
    let f: ConfigFile = toml::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut c = TrackerConfig::default();
    set!(f => c.psi, c.lambda, c.padding, c.template_side, c.scale_factors, c.scale_penalty;
        psi, lambda, padding, template_side, scale_factors, scale_penalty);
    set!(f => c.features.cell_size, c.features.hog, c.features.color_names, c.features.gray;
        cell_size, hog, color_names, gray);
    set!(f => c.depth.theta, c.depth.gamma, c.depth.sigma_min, c.depth.min_log_ratio, c.depth.fg_gate;
        theta, gamma, sigma_min, min_log_ratio, fg_gate);
    set!(f => c.admm.mu0, c.admm.beta, c.admm.iterations, c.admm.mu_max;
        mu0, beta, admm_iterations, mu_max);
    set!(f => c.occlusion.response_drop, c.occlusion.depth_support_min, c.occlusion.tau, c.occlusion.history_len, c.occlusion.candidates, c.occlusion.enabled;
        response_drop, depth_support_min, tau, history_len, redetect_candidates, occlusion_handling);
    set!(f => c.use_depth_mask, c.warm_start; depth_masking, warm_start);
    if f.omega.is_some() {
        c.depth.omega = f.omega;
    }
    if f.channel_weights.is_some() {
        c.channel_weights = f.channel_weights;
    }
    if let Some(p) = f.color_names_table {
        let p = if p.is_relative() {
            path.parent().unwrap_or(Path::new(".")).join(p)
        } else {
            p
        };
        c.features.color_names_table = Some(p);
    }
    c.validate()?;
    Ok(c)
}

pub fn load_config(path: &Path) -> Result<TrackerConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path)
}
