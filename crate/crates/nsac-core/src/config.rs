//! Plain-text key=value run configuration.
//!
//! Lines are `key = value`; `#` starts a comment, blank lines are skipped.
//! Keys:
//!
//! ```text
//! n                mesh resolution per axis (positive integer)
//! preset           initial-data preset name (see preset module)
//! rho_snapshot     initial density snapshot path   (all three or none,
//! u_snapshot       initial velocity snapshot path    mutually exclusive
//! c_snapshot       initial phase snapshot path       with `preset`)
//! nu, lambda       viscosities
//! gamma, a         pressure law p = a rho^gamma
//! epsilon          flux-diffusion exponent (face terms scale with h^epsilon)
//! beta             jump-penalty exponent
//! dt_factor        time step as a multiple of h
//! T                final time
//! newton_tol, newton_max_iter, homotopy_steps
//! n_list           comma-separated ascending resolutions for `study`
//! snapshot_every   write field snapshots every S accepted steps (0 = final only)
//! check_tol        residual tolerance for the `check` identity battery
//! ```

use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::scheme::Params;
use crate::study::theorem_condition_check;

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub n: usize,
    pub preset: Option<String>,
    /// rho, u, c snapshot paths when resuming from saved fields.
    pub snapshots: Option<[PathBuf; 3]>,
    pub params: Params,
    pub n_list: Vec<usize>,
    /// 0 writes only the final state.
    pub snapshot_every: usize,
    pub check_tol: f64,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            n: 8,
            preset: None,
            snapshots: None,
            params: Params::default(),
            n_list: Vec::new(),
            snapshot_every: 0,
            check_tol: 1e-11,
        }
    }
}

fn parse_err(path: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

impl RunConfig {
    /// Parse a config file body. `path` is used only in error messages.
    pub fn parse(text: &str, path: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<String> = Vec::new();
        let mut snap: [Option<PathBuf>; 3] = [None, None, None];
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = match line.split_once('=') {
                Some((k, v)) => (k.trim(), v.trim()),
                None => {
                    return Err(parse_err(path, lineno, format!("expected 'key = value', got '{line}'")))
                }
            };
            if value.is_empty() {
                return Err(parse_err(path, lineno, format!("field '{key}': empty value")));
            }
            if seen.iter().any(|s| s == key) {
                return Err(parse_err(path, lineno, format!("field '{key}' given twice")));
            }
            seen.push(key.to_string());

            let bad = |what: &str| parse_err(path, lineno, format!("field '{key}': {what} '{value}'"));
            let f64_of = || -> Result<f64> { value.parse().map_err(|_| bad("not a number:")) };
            match key {
                "n" => cfg.n = value.parse().map_err(|_| bad("not a positive integer:"))?,
                "preset" => cfg.preset = Some(value.to_string()),
                "rho_snapshot" => snap[0] = Some(PathBuf::from(value)),
                "u_snapshot" => snap[1] = Some(PathBuf::from(value)),
                "c_snapshot" => snap[2] = Some(PathBuf::from(value)),
                "nu" => cfg.params.nu = f64_of()?,
                "lambda" => cfg.params.lambda = f64_of()?,
                "gamma" => cfg.params.gamma = f64_of()?,
                "a" => cfg.params.a = f64_of()?,
                "epsilon" => cfg.params.epsilon = f64_of()?,
                "beta" => cfg.params.beta = f64_of()?,
                "dt_factor" => cfg.params.dt_factor = f64_of()?,
                "T" => cfg.params.t_final = f64_of()?,
                "newton_tol" => cfg.params.newton_tol = f64_of()?,
                "newton_max_iter" => {
                    cfg.params.newton_max_iter =
                        value.parse().map_err(|_| bad("not a positive integer:"))?
                }
                "homotopy_steps" => {
                    cfg.params.homotopy_steps =
                        value.parse().map_err(|_| bad("not a positive integer:"))?
                }
                "n_list" => {
                    cfg.n_list = value
                        .split(',')
                        .map(|s| s.trim().parse::<usize>().map_err(|_| bad("not an integer list:")))
                        .collect::<Result<Vec<usize>>>()?;
                }
                "snapshot_every" => {
                    cfg.snapshot_every = value.parse().map_err(|_| bad("not an integer:"))?
                }
                "check_tol" => cfg.check_tol = f64_of()?,
                _ => return Err(parse_err(path, lineno, format!("unknown field '{key}'"))),
            }
        }
        match snap {
            [None, None, None] => {}
            [Some(r), Some(u), Some(c)] => cfg.snapshots = Some([r, u, c]),
            _ => {
                return Err(Error::config(
                    "snapshot initial data needs all three of rho_snapshot, u_snapshot, c_snapshot",
                ))
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config(format!("cannot read config '{}': {e}", path.display()))
        })?;
        RunConfig::parse(&text, &path.display().to_string())
    }

    /// Model-level validation: scheme parameter invariants plus the flux
    /// diffusion admissibility window. Runs before any solve.
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::config("mesh resolution n must be at least 1"));
        }
        let report = theorem_condition_check(2, self.params.gamma, self.params.epsilon);
        if !report.admissible() {
            return Err(Error::config(report.message.clone()));
        }
        self.params.validate(2)?;
        if self.preset.is_some() && self.snapshots.is_some() {
            return Err(Error::config(
                "give either a preset or snapshot paths, not both",
            ));
        }
        Ok(())
    }

    /// Validation for commands that solve: initial data must be specified.
    pub fn validate_for_run(&self) -> Result<()> {
        self.validate()?;
        if self.preset.is_none() && self.snapshots.is_none() {
            return Err(Error::config(
                "no initial data: set 'preset' or the three snapshot paths",
            ));
        }
        Ok(())
    }
}
