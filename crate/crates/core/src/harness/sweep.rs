use crate::error::{Error, Result};

use super::config::{ExperimentConfig, Factor, GridEntry, Method};
use super::run::{run_experiment, ExperimentResult, RunOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Gamma,
    Alpha,
    Beta,
}

impl SweepParam {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "gamma" => Ok(Self::Gamma),
            "alpha" => Ok(Self::Alpha),
            "beta" => Ok(Self::Beta),
            _ => Err(Error::Usage(format!("unknown sweep parameter '{name}'; expected gamma, alpha or beta"))),
        }
    }

    fn applies_to(self, method: Method) -> bool {
        match self {
            Self::Gamma => method == Method::Opf,
            Self::Alpha => method == Method::Uniform,
            Self::Beta => method != Method::Kalman,
        }
    }
}

/// Replaces every applicable grid entry by one copy per value.
///
/// Entries that differ only in the swept parameter collapse into one
/// template first; other entries are kept unchanged.
pub fn sweep_config(config: &ExperimentConfig, param: SweepParam, values: &[Factor]) -> Result<ExperimentConfig> {
    if values.is_empty() {
        return Err(Error::Parameter("sweep needs at least one value".into()));
    }
    let mut templates: Vec<GridEntry> = Vec::new();
    let mut grid: Vec<GridEntry> = Vec::new();
    for entry in &config.grid {
        if !param.applies_to(entry.method) {
            grid.push(entry.clone());
            continue;
        }
        let mut t = entry.clone();
        match param {
            SweepParam::Gamma | SweepParam::Alpha => t.factor = Factor::Value(1.0),
            SweepParam::Beta => t.beta = None,
        }
        if !templates.contains(&t) {
            templates.push(t);
        }
    }
    if templates.is_empty() {
        return Err(Error::Parameter(format!("no grid entry takes {param:?}").to_lowercase()));
    }
    for t in &templates {
        for &v in values {
            let mut e = t.clone();
            match (param, v) {
                (SweepParam::Beta, Factor::Auto) => return Err(Error::Parameter("beta does not accept auto".into())),
                (SweepParam::Beta, Factor::Value(b)) => e.beta = Some(b),
                (_, f) => e.factor = f,
            }
            grid.push(e);
        }
    }
    let mut swept = config.clone();
    swept.grid = grid;
    swept.validate()?;
    Ok(swept)
}

/// Runs the cross product of values and seeds on shared trajectories.
pub fn sweep(config: &ExperimentConfig, param: SweepParam, values: &[Factor], options: &RunOptions) -> Result<ExperimentResult> {
    run_experiment(&sweep_config(config, param, values)?, options)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::builtin;

    #[test]
    fn gamma_sweep_replaces_opf_entries() {
        let cfg = builtin("paper-order").unwrap();
        let swept = sweep_config(&cfg, SweepParam::Gamma, &[Factor::Value(0.7), Factor::Auto]).unwrap();
        let labels: Vec<_> = swept.grid.iter().map(GridEntry::label).collect();
        assert_eq!(labels, ["kalman", "opf:gamma=0.7", "opf:gamma=auto"]);
    }

    #[test]
    fn beta_sweep_keeps_factors() {
        let cfg = builtin("paper-order").unwrap();
        let swept = sweep_config(&cfg, SweepParam::Beta, &[Factor::Value(1.5), Factor::Value(4.0)]).unwrap();
        assert_eq!(swept.grid.len(), 5);
        assert!(swept.grid.iter().any(|e| e.label() == "opf:gamma=auto,beta=4"));
    }

    #[test]
    fn rejects_inapplicable_and_empty() {
        let cfg = builtin("paper-order").unwrap();
        assert!(sweep_config(&cfg, SweepParam::Alpha, &[Factor::Value(0.9)]).is_err());
        assert!(sweep_config(&cfg, SweepParam::Gamma, &[]).is_err());
        assert!(sweep_config(&cfg, SweepParam::Gamma, &[Factor::Value(1.2)]).is_err());
    }
}
