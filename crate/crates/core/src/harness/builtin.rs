use crate::error::{Error, Result};
use crate::presets;

use super::config::{ExperimentConfig, Factor, GridEntry, Method};

pub const BUILTIN_NAMES: [&str; 4] = ["paper-main", "paper-illcond", "paper-order", "paper-tradeoff"];

fn opf(gamma: Factor) -> GridEntry {
    GridEntry::new(Method::Opf, gamma)
}

fn uniform(alpha: f64) -> GridEntry {
    GridEntry::new(Method::Uniform, Factor::Value(alpha))
}

fn kalman() -> GridEntry {
    GridEntry::new(Method::Kalman, Factor::Value(1.0))
}

/// Looks up a built-in experiment by name.
pub fn builtin(name: &str) -> Result<ExperimentConfig> {
    let v = Factor::Value;
    let cfg = match name {
        // 3-D tracking, balanced vs uniform forgetting, horizon 7680
        "paper-main" => ExperimentConfig::new(
            name,
            presets::tracking_model(),
            vec![
                kalman(),
                opf(Factor::Auto),
                opf(v(0.9)),
                opf(v(1.0)),
                uniform(0.99),
                uniform(0.9999),
                uniform(1.0),
            ],
        )?,
        "paper-illcond" => {
            let mut cfg = ExperimentConfig::new(
                name,
                presets::illconditioned_model(),
                vec![kalman(), opf(Factor::Auto), opf(v(1.0))],
            )?;
            cfg.beta = 6.0;
            cfg.t_init = 500;
            cfg.epochs = 3;
            cfg
        }
        "paper-order" => ExperimentConfig::new(name, presets::tracking_model(), vec![kalman(), opf(Factor::Auto), opf(v(1.0))])?,
        "paper-tradeoff" => {
            let mut grid = vec![opf(Factor::Auto)];
            grid.extend([0.6, 0.7, 0.8, 0.9, 1.0].map(|g| opf(v(g))));
            let mut cfg = ExperimentConfig::new(name, presets::tracking_model(), grid)?;
            cfg.decomposition = true;
            cfg
        }
        _ => {
            return Err(Error::UnknownExperiment {
                name: name.to_string(),
                available: BUILTIN_NAMES.join(", "),
            })
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

/// All built-in experiments, in [`BUILTIN_NAMES`] order.
pub fn builtin_experiments() -> Vec<ExperimentConfig> {
    BUILTIN_NAMES.iter().map(|n| builtin(n).expect("built-in configs are valid")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::parse_config;

    #[test]
    fn main_horizon() {
        assert_eq!(builtin("paper-main").unwrap().final_step(), 7680);
    }

    #[test]
    fn illcond_horizon() {
        let cfg = builtin("paper-illcond").unwrap();
        assert_eq!(cfg.final_step(), 2 * (4 * 500 + 1) - 2);
    }

    #[test]
    fn all_builtins_round_trip() {
        for cfg in builtin_experiments() {
            assert_eq!(parse_config(&cfg.canonical()).unwrap(), cfg);
        }
    }

    #[test]
    fn unknown_lists_names() {
        let err = builtin("paper-nope").unwrap_err().to_string();
        for n in BUILTIN_NAMES {
            assert!(err.contains(n), "{err}");
        }
    }
}
