//! The on-disk run format: a simulated hidden trajectory plus its
//! observations, with the generating model embedded so downstream
//! commands are self-contained.

use serde::{Deserialize, Serialize};

use rbpf_core::config::ModelConfig;
use rbpf_core::grid::{GridRun, GridWorldModel};
use rbpf_core::jmls::{JmlsModel, JmlsRun};

pub const RUN_SCHEMA: &str = "rbpf-run/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelData {
    Grid(GridWorldModel),
    Jmls(JmlsModel),
}

impl From<ModelConfig> for ModelData {
    fn from(config: ModelConfig) -> Self {
        match config {
            ModelConfig::Grid(m) => ModelData::Grid(m),
            ModelConfig::Jmls(m) => ModelData::Jmls(m),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunData {
    Grid(GridRun),
    Jmls(JmlsRun),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunFile {
    pub schema: String,
    /// Scenario name when the model came from a built-in scenario.
    pub scenario: Option<String>,
    pub seed: u64,
    pub model: ModelData,
    pub run: RunData,
}

impl RunFile {
    pub fn new(scenario: Option<String>, seed: u64, model: ModelData, run: RunData) -> Self {
        RunFile {
            schema: RUN_SCHEMA.to_string(),
            scenario,
            seed,
            model,
            run,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("run files always serialize");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<RunFile, String> {
        let file: RunFile =
            serde_json::from_str(text).map_err(|e| format!("malformed run file: {e}"))?;
        if file.schema != RUN_SCHEMA {
            return Err(format!(
                "unsupported run schema '{}', expected '{RUN_SCHEMA}'",
                file.schema
            ));
        }
        match (&file.model, &file.run) {
            (ModelData::Grid(model), RunData::Grid(run)) => {
                model.validate().map_err(|e| e.to_string())?;
                if run.locations.len() != run.observations.len() + 1
                    || run.maps.len() != run.observations.len() + 1
                {
                    return Err("grid run lengths are inconsistent".into());
                }
                if run.locations.iter().any(|&l| l >= model.n_cells()) {
                    return Err("grid run contains an out-of-range location".into());
                }
            }
            (ModelData::Jmls(model), RunData::Jmls(run)) => {
                model.validate().map_err(|e| e.to_string())?;
                if run.regimes.len() != run.observations.len() + 1
                    || run.states.len() != run.observations.len() + 1
                {
                    return Err("jmls run lengths are inconsistent".into());
                }
                if run.regimes.iter().any(|&r| r >= model.n_regimes) {
                    return Err("jmls run contains an out-of-range regime".into());
                }
            }
            _ => return Err("model type and run kind disagree".into()),
        }
        Ok(file)
    }
}
