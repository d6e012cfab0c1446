//! `key = value` run configuration files.
//!
//! Blank lines and `#` comments are ignored. Relative paths resolve against
//! the directory holding the file. Values given on the command line take
//! precedence over the file.

use std::fs;
use std::path::{Path, PathBuf};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub mesh: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub trajectory: Option<PathBuf>,
    pub targets: Option<PathBuf>,
    pub gaussians: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub n_node: Option<usize>,
    pub n_neighbor: Option<usize>,
    pub metric: Option<String>,
    pub mode: Option<String>,
    pub per_face: Option<usize>,
    pub seed: Option<u64>,
    pub lambda_arap: Option<f64>,
    pub lambda_nc: Option<f64>,
    pub max_iters: Option<usize>,
    pub step_size: Option<f64>,
    pub convergence_tol: Option<f64>,
    pub gradient_tol: Option<f64>,
    pub descent: Option<String>,
    pub serial: Option<bool>,
}

fn parse_value<V: std::str::FromStr>(key: &str, value: &str, line: usize) -> Result<V, CliError>
where
    V::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Config(format!("line {line}: `{key}`: {e}")))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(CliError::Config(format!("line {line}: expected `key = value`")));
            };
            let (key, value) = (key.trim(), value.trim());
            let path = || Some(base.join(value));
            match key {
                "mesh" => cfg.mesh = path(),
                "graph" => cfg.graph = path(),
                "trajectory" => cfg.trajectory = path(),
                "targets" => cfg.targets = path(),
                "gaussians" => cfg.gaussians = path(),
                "out" => cfg.out = path(),
                "n_node" => cfg.n_node = Some(parse_value(key, value, line)?),
                "n_neighbor" => cfg.n_neighbor = Some(parse_value(key, value, line)?),
                "metric" => cfg.metric = Some(value.to_string()),
                "mode" => cfg.mode = Some(value.to_string()),
                "per_face" => cfg.per_face = Some(parse_value(key, value, line)?),
                "seed" => cfg.seed = Some(parse_value(key, value, line)?),
                "lambda_arap" => cfg.lambda_arap = Some(parse_value(key, value, line)?),
                "lambda_nc" => cfg.lambda_nc = Some(parse_value(key, value, line)?),
                "max_iters" => cfg.max_iters = Some(parse_value(key, value, line)?),
                "step_size" => cfg.step_size = Some(parse_value(key, value, line)?),
                "convergence_tol" => cfg.convergence_tol = Some(parse_value(key, value, line)?),
                "gradient_tol" => cfg.gradient_tol = Some(parse_value(key, value, line)?),
                "descent" => cfg.descent = Some(value.to_string()),
                "serial" => cfg.serial = Some(parse_value(key, value, line)?),
                other => return Err(CliError::Config(format!("line {line}: unknown key `{other}`"))),
            }
        }
        Ok(cfg)
    }
}
