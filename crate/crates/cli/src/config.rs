//! Flat `key = value` run configuration.

use std::path::Path;

use ccsl::synthgen::GenSettings;
use ccsl::FitConfig;
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Result};

/// Every recognized key; all are optional and fall back to the library
/// defaults. `lags` and `noise_components` apply to both generation and
/// fitting.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    // Generation.
    pub groups: Option<usize>,
    pub subjects: Option<usize>,
    pub variables: Option<usize>,
    pub length: Option<usize>,
    pub edge_prob: Option<f64>,
    pub burn_in: Option<usize>,
    pub gaussian_noise: Option<bool>,

    // Shared.
    pub lags: Option<usize>,
    pub noise_components: Option<usize>,

    // Fitting.
    pub alpha: Option<f64>,
    pub mc_samples_fit: Option<usize>,
    pub mc_samples_score: Option<usize>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub inner_iterations: Option<usize>,
    pub warm_start_iterations: Option<usize>,
    pub holdout_iterations: Option<usize>,
    pub init_sigma: Option<f64>,
    pub max_sweeps: Option<usize>,
    pub tolerance: Option<f64>,
    pub tau_b: Option<f64>,
    pub tau_a: Option<f64>,

    /// Master seed; the `--seed` flag takes precedence.
    pub seed: Option<u64>,

    // Sweep grid: every listed axis is crossed with the others.
    pub grid_groups: Option<Vec<usize>>,
    pub grid_subjects: Option<Vec<usize>>,
    pub grid_variables: Option<Vec<usize>>,
    pub grid_length: Option<Vec<usize>>,
    pub realizations: Option<usize>,
    /// Worker threads for sweeps; defaults to the available parallelism.
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::parse(&text).map_err(|reason| CliError::Config {
            path: path.to_path_buf(),
            reason,
        })
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn gen_settings(&self) -> Result<GenSettings> {
        let d = GenSettings::default();
        let settings = GenSettings {
            groups: self.groups.unwrap_or(d.groups),
            subjects: self.subjects.unwrap_or(d.subjects),
            variables: self.variables.unwrap_or(d.variables),
            length: self.length.unwrap_or(d.length),
            lags: self.lags.unwrap_or(d.lags),
            noise_components: self.noise_components.unwrap_or(d.noise_components),
            edge_prob: self.edge_prob.unwrap_or(d.edge_prob),
            burn_in: self.burn_in.unwrap_or(d.burn_in),
            gaussian_noise: self.gaussian_noise.unwrap_or(d.gaussian_noise),
        };
        settings.validate()?;
        Ok(settings)
    }

    pub fn fit_config(&self, seed: u64) -> Result<FitConfig> {
        let d = FitConfig::default();
        let config = FitConfig {
            alpha: self.alpha.unwrap_or(d.alpha),
            lags: self.lags.unwrap_or(d.lags),
            noise_components: self.noise_components.unwrap_or(d.noise_components),
            mc_samples_fit: self.mc_samples_fit.unwrap_or(d.mc_samples_fit),
            mc_samples_score: self.mc_samples_score.unwrap_or(d.mc_samples_score),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            beta1: self.beta1.unwrap_or(d.beta1),
            beta2: self.beta2.unwrap_or(d.beta2),
            inner_iterations: self.inner_iterations.unwrap_or(d.inner_iterations),
            warm_start_iterations: self
                .warm_start_iterations
                .unwrap_or(d.warm_start_iterations),
            holdout_iterations: self.holdout_iterations.unwrap_or(d.holdout_iterations),
            init_sigma: self.init_sigma.unwrap_or(d.init_sigma),
            max_sweeps: self.max_sweeps.unwrap_or(d.max_sweeps),
            tolerance: self.tolerance.unwrap_or(d.tolerance),
            tau_b: self.tau_b.unwrap_or(d.tau_b),
            tau_a: self.tau_a.unwrap_or(d.tau_a),
            seed,
        };
        config.validate()?;
        Ok(config)
    }

    /// Cells of the sweep grid in row-major order of
    /// (groups, subjects, variables, length); unlisted axes keep their
    /// single configured value.
    pub fn grid(&self) -> Result<Vec<GridCell>> {
        let listed = [
            &self.grid_groups,
            &self.grid_subjects,
            &self.grid_variables,
            &self.grid_length,
        ];
        if listed.iter().all(|axis| axis.is_none())
            || listed
                .iter()
                .any(|axis| axis.as_ref().is_some_and(Vec::is_empty))
            || self.realizations == Some(0)
        {
            return Err(CliError::EmptyGrid);
        }
        let base = self.gen_settings_unchecked();
        let axis = |values: &Option<Vec<usize>>, fallback: usize| {
            values.clone().unwrap_or_else(|| vec![fallback])
        };
        let mut cells = Vec::new();
        for &groups in &axis(&self.grid_groups, base.groups) {
            for &subjects in &axis(&self.grid_subjects, base.subjects) {
                for &variables in &axis(&self.grid_variables, base.variables) {
                    for &length in &axis(&self.grid_length, base.length) {
                        cells.push(GridCell {
                            groups,
                            subjects,
                            variables,
                            length,
                        });
                    }
                }
            }
        }
        Ok(cells)
    }

    pub fn realizations(&self) -> usize {
        self.realizations.unwrap_or(1)
    }

    fn gen_settings_unchecked(&self) -> GenSettings {
        let d = GenSettings::default();
        GenSettings {
            groups: self.groups.unwrap_or(d.groups),
            subjects: self.subjects.unwrap_or(d.subjects),
            variables: self.variables.unwrap_or(d.variables),
            length: self.length.unwrap_or(d.length),
            ..d
        }
    }
}

/// One point of the sweep grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridCell {
    pub groups: usize,
    pub subjects: usize,
    pub variables: usize,
    pub length: usize,
}

impl GridCell {
    /// The configured generation settings with this cell's axis values.
    pub fn apply(&self, config: &RunConfig) -> Result<GenSettings> {
        let cell = RunConfig {
            groups: Some(self.groups),
            subjects: Some(self.subjects),
            variables: Some(self.variables),
            length: Some(self.length),
            ..config.clone()
        };
        cell.gen_settings()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::parse("").unwrap();
        assert_eq!(c.gen_settings().unwrap(), GenSettings::default());
        assert_eq!(c.fit_config(0).unwrap(), FitConfig::default());
    }

    #[test]
    fn keys_override_defaults() {
        let c = RunConfig::parse("subjects = 12\nlags = 2\nlearning_rate = 0.1\nseed = 9").unwrap();
        assert_eq!(c.gen_settings().unwrap().subjects, 12);
        assert_eq!(c.gen_settings().unwrap().lags, 2);
        let f = c.fit_config(3).unwrap();
        assert_eq!((f.lags, f.learning_rate, f.seed), (2, 0.1, 3));
        assert_eq!(c.seed, Some(9));
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::parse("subjcts = 3").unwrap_err();
        assert!(err.contains("subjcts"), "{err}");
    }

    #[test]
    fn invalid_value_is_named() {
        let c = RunConfig::parse("subjects = 0").unwrap();
        let err = c.gen_settings().unwrap_err().to_string();
        assert!(err.contains("subjects"), "{err}");
        let c = RunConfig::parse("alpha = -1.0").unwrap();
        assert!(c.fit_config(0).unwrap_err().to_string().contains("alpha"));
    }

    #[test]
    fn grid_crosses_axes() {
        let c = RunConfig::parse(
            "grid_variables = [6, 8]\ngrid_subjects = [20, 30, 40]\nrealizations = 2",
        )
        .unwrap();
        let cells = c.grid().unwrap();
        assert_eq!(cells.len(), 6);
        assert_eq!(
            cells[0],
            GridCell {
                groups: 2,
                subjects: 20,
                variables: 6,
                length: 60
            }
        );
        assert_eq!(cells[1].variables, 8);
        assert_eq!(c.realizations(), 2);
    }

    #[test]
    fn empty_grid_is_rejected() {
        for text in [
            "",
            "grid_variables = []",
            "grid_length = [60]\nrealizations = 0",
        ] {
            assert!(
                matches!(
                    RunConfig::parse(text).unwrap().grid(),
                    Err(CliError::EmptyGrid)
                ),
                "{text}"
            );
        }
    }
}
