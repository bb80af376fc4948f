//! Flat `key=value` run configuration.
//!
//! Values are layered: built-in defaults for the chosen environment and mode,
//! then a config file, then command-line flags. Keys starting with `run.`
//! are run metadata written into manifests and are skipped when a manifest
//! is read back as a config.

use std::path::Path;

use crate::env::EnvKind;
use crate::error::{Error, Result};
use crate::sampler::{Mode, SamplerConfig};

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse::<T>()
        .map_err(|e| Error::invalid(format!("{key}: cannot parse '{value}' ({e})")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::invalid(format!("{key}: expected true or false, got '{value}'"))),
    }
}

/// Every key [`apply`] understands, in manifest order.
pub const KEYS: [&str; 21] = [
    "env",
    "mode",
    "iters",
    "episodes",
    "sigma_p",
    "temperature",
    "mu",
    "gamma",
    "seed",
    "bootstrap",
    "prior",
    "hidden",
    "gridworld_pit",
    "pit_terminates",
    "reevaluate_current",
    "td_form",
    "curiosity_hidden",
    "curiosity_lr",
    "curiosity_updates",
    "curiosity_reduction",
    "curiosity_scale",
];

/// Sets one field. `env` and `mode` select defaults and are handled by
/// [`resolve`]; here they only have to agree with the config.
pub fn apply(config: &mut SamplerConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "env" => {
            let kind: EnvKind = value.parse()?;
            if kind != config.env.kind {
                return Err(Error::invalid(format!("env '{value}' conflicts with {}", config.env.kind)));
            }
        }
        "mode" => {
            let mode: Mode = value.parse()?;
            if mode != config.mode {
                return Err(Error::invalid(format!("mode '{value}' conflicts with {}", config.mode)));
            }
        }
        "iters" => config.iterations = parse(key, value)?,
        "episodes" => config.episodes = parse(key, value)?,
        "sigma_p" => config.sigma_p = parse(key, value)?,
        "temperature" => config.utility.temperature = parse(key, value)?,
        "mu" => config.utility.mu = parse(key, value)?,
        "gamma" => config.gamma = parse(key, value)?,
        "seed" => config.seed = parse(key, value)?,
        "bootstrap" => config.bootstrap = value.parse()?,
        "prior" => config.utility.prior = value.parse()?,
        "hidden" => config.hidden = parse(key, value)?,
        "gridworld_pit" => config.env.gridworld_pit = parse(key, value)?,
        "pit_terminates" => config.env.pit_terminates = parse_bool(key, value)?,
        "reevaluate_current" => config.reevaluate_current = parse_bool(key, value)?,
        "td_form" => config.td_form = value.parse()?,
        "curiosity_hidden" => config.curiosity.hidden = parse(key, value)?,
        "curiosity_lr" => config.curiosity.learning_rate = parse(key, value)?,
        "curiosity_updates" => config.curiosity.updates_per_trajectory = parse(key, value)?,
        "curiosity_reduction" => config.curiosity.reduction = value.parse()?,
        "curiosity_scale" => config.curiosity.scale = parse(key, value)?,
        other => return Err(Error::invalid(format!("unknown config key '{other}'"))),
    }
    Ok(())
}

/// The effective configuration as `key=value` pairs, in [`KEYS`] order.
/// Floats use the shortest representation that parses back exactly.
pub fn to_pairs(config: &SamplerConfig) -> Vec<(String, String)> {
    let values = [
        config.env.kind.to_string(),
        config.mode.to_string(),
        config.iterations.to_string(),
        config.episodes.to_string(),
        config.sigma_p.to_string(),
        config.utility.temperature.to_string(),
        config.utility.mu.to_string(),
        config.gamma.to_string(),
        config.seed.to_string(),
        config.bootstrap.to_string(),
        config.utility.prior.to_string(),
        config.hidden.to_string(),
        config.env.gridworld_pit.to_string(),
        config.env.pit_terminates.to_string(),
        config.reevaluate_current.to_string(),
        config.td_form.to_string(),
        config.curiosity.hidden.to_string(),
        config.curiosity.learning_rate.to_string(),
        config.curiosity.updates_per_trajectory.to_string(),
        config.curiosity.reduction.to_string(),
        config.curiosity.scale.to_string(),
    ];
    KEYS.iter().map(|k| k.to_string()).zip(values).collect()
}

fn is_metadata(key: &str) -> bool {
    key.starts_with("run.")
}

/// Builds the effective config. `file` holds `(key, value, line)` entries
/// read from `file_path`; `flags` are already-validated flag overrides.
pub fn resolve(
    file: &[(String, String, usize)],
    file_path: Option<&Path>,
    flags: &[(String, String)],
) -> Result<SamplerConfig> {
    let lookup = |key: &str| -> Option<&str> {
        flags
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .or_else(|| file.iter().rev().find(|(k, _, _)| k == key).map(|(_, v, _)| v.as_str()))
    };
    let kind: EnvKind = lookup("env").unwrap_or("gridworld").parse()?;
    let mode: Mode = lookup("mode").unwrap_or("plain").parse()?;
    let mut config = SamplerConfig::new(kind, mode);
    for (key, value, line) in file {
        if is_metadata(key) || key == "env" || key == "mode" {
            continue;
        }
        apply(&mut config, key, value).map_err(|e| match file_path {
            Some(path) => Error::Parse {
                path: path.to_path_buf(),
                line: *line,
                message: e.to_string(),
            },
            None => e,
        })?;
    }
    for (key, value) in flags {
        if key == "env" || key == "mode" {
            continue;
        }
        apply(&mut config, key, value)?;
    }
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bootstrap::TdForm;
    use crate::curiosity::LossReduction;
    use crate::sampler::Bootstrap;
    use crate::target::PriorKind;
    use std::path::PathBuf;

    fn file(entries: &[(&str, &str)]) -> Vec<(String, String, usize)> {
        entries
            .iter()
            .enumerate()
            .map(|(i, (k, v))| (k.to_string(), v.to_string(), i + 1))
            .collect()
    }

    fn flags(entries: &[(&str, &str)]) -> Vec<(String, String)> {
        entries.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_follow_env_and_mode() {
        let c = resolve(&[], None, &flags(&[("env", "cartpole")])).unwrap();
        assert_eq!(c, SamplerConfig::new(EnvKind::CartPole, Mode::Plain));
        let c = resolve(&file(&[("mode", "cameo")]), None, &[]).unwrap();
        assert_eq!(c.env.kind, EnvKind::Gridworld);
        assert_eq!(c.utility.prior, PriorKind::BoundaryPenalty);
        assert_eq!(c.bootstrap, Bootstrap::Resimulate);
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let f = file(&[("env", "cliff"), ("seed", "5"), ("iters", "30"), ("mu", "0.25")]);
        let c = resolve(&f, None, &flags(&[("seed", "9"), ("mode", "cameo")])).unwrap();
        assert_eq!(c.env.kind, EnvKind::Cliff);
        assert_eq!(c.mode, Mode::Cameo);
        assert_eq!(c.seed, 9);
        assert_eq!(c.iterations, 30);
        assert_eq!(c.utility.mu, 0.25);
        assert_eq!(c.episodes, 20);
    }

    #[test]
    fn pairs_round_trip() {
        let mut original = SamplerConfig::new(EnvKind::Acrobot, Mode::Cameo);
        original.sigma_p = 0.1 + 0.2;
        original.seed = u64::MAX;
        original.td_form = TdForm::SinglePolicy;
        original.curiosity.reduction = LossReduction::Sum;
        original.curiosity.learning_rate = 1.0 / 3.0;
        original.env.pit_terminates = false;
        original.reevaluate_current = false;
        let entries: Vec<(String, String, usize)> = to_pairs(&original).into_iter().map(|(k, v)| (k, v, 0)).collect();
        let mut with_meta = entries.clone();
        with_meta.push(("run.duration_s".into(), "1.5".into(), 0));
        assert_eq!(resolve(&with_meta, None, &[]).unwrap(), original);
        assert_eq!(to_pairs(&original).len(), KEYS.len());
    }

    #[test]
    fn bad_values_are_reported_with_their_line() {
        let path = PathBuf::from("run.cfg");
        let f = file(&[("env", "gridworld"), ("sigma_p", "wide")]);
        match resolve(&f, Some(&path), &[]) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected a parse error, got {other:?}"),
        }
        assert!(resolve(&file(&[("colour", "red")]), None, &[]).is_err());
        assert!(resolve(&[], None, &flags(&[("env", "pong")])).is_err());
        assert!(resolve(&[], None, &flags(&[("sigma_p", "-1")])).is_err());
    }
}
