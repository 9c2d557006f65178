//! Model configuration files and the built-in scenarios.
//!
//! Models load from TOML with a `type` discriminator (`grid` or `jmls`);
//! the schema is documented in `docs/config.md`. The shipped scenarios
//! live in `scenarios/` and are embedded in the library, so their noise
//! defaults are plain data rather than code.

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::error::ConfigError;
use crate::grid::{parse_actions, parse_colors, GridWorldModel, MapPrior, Neighborhood};
use crate::jmls::JmlsModel;
use crate::kalman::{GaussianBelief, RegimeParams};

pub const MODEL_SCHEMA: &str = "rbpf-model/1";

/// A parsed and validated model file.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelConfig {
    Grid(GridWorldModel),
    Jmls(JmlsModel),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    schema: String,
    #[serde(rename = "type")]
    kind: String,
    grid: Option<GridSection>,
    noise: Option<NoiseSection>,
    robot: Option<RobotSection>,
    map: Option<MapSection>,
    jmls: Option<JmlsSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    width: usize,
    height: usize,
    n_colors: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseSection {
    epsilon: f64,
    p_slip: f64,
    #[serde(default)]
    p_change: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotSection {
    actions: String,
    init_location: InitLocationSpec,
    neighborhood: NeighborhoodSpec,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum InitLocationSpec {
    Cell(usize),
    Named(String),
    Probs(Vec<f64>),
}

#[derive(Debug, Deserialize, Clone, Copy)]
enum NeighborhoodSpec {
    #[serde(rename = "single")]
    Single,
    #[serde(rename = "3x3")]
    ThreeByThree,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapSection {
    true_map: Option<String>,
    #[serde(default = "default_prior")]
    prior: String,
}

fn default_prior() -> String {
    "uniform".to_string()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct JmlsSection {
    n_regimes: usize,
    regime_transition: Vec<Vec<f64>>,
    init_regime: Vec<f64>,
    init_mean: Vec<f64>,
    init_cov: Vec<Vec<f64>>,
    regimes: Vec<RegimeSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegimeSection {
    a: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
}

fn to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>, ConfigError> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(ConfigError::Invalid(format!("{what} is empty")));
    }
    let ncols = rows[0].len();
    if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(ConfigError::Invalid(format!("{what} rows have uneven lengths")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// Parse a model file from TOML text.
pub fn parse_model_str(text: &str) -> Result<ModelConfig, ConfigError> {
    let file: ModelFile = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    if file.schema != MODEL_SCHEMA {
        return Err(ConfigError::Invalid(format!(
            "unsupported schema '{}', expected '{MODEL_SCHEMA}'",
            file.schema
        )));
    }
    match file.kind.as_str() {
        "grid" => {
            let grid = file
                .grid
                .ok_or_else(|| ConfigError::Invalid("missing [grid] section".into()))?;
            let noise = file
                .noise
                .ok_or_else(|| ConfigError::Invalid("missing [noise] section".into()))?;
            let robot = file
                .robot
                .ok_or_else(|| ConfigError::Invalid("missing [robot] section".into()))?;
            let map = file
                .map
                .ok_or_else(|| ConfigError::Invalid("missing [map] section".into()))?;
            let n_cells = grid.width * grid.height;
            let init_location = match robot.init_location {
                InitLocationSpec::Cell(cell) => {
                    if cell >= n_cells {
                        return Err(ConfigError::Invalid(format!(
                            "init cell {cell} outside a {n_cells}-cell grid"
                        )));
                    }
                    let mut v = vec![0.0; n_cells];
                    v[cell] = 1.0;
                    v
                }
                InitLocationSpec::Named(name) if name == "uniform" => {
                    vec![1.0 / n_cells as f64; n_cells]
                }
                InitLocationSpec::Named(name) => {
                    return Err(ConfigError::Invalid(format!(
                        "unknown init location '{name}'"
                    )))
                }
                InitLocationSpec::Probs(v) => v,
            };
            let true_map = map
                .true_map
                .as_deref()
                .map(|s| parse_colors(s, grid.n_colors))
                .transpose()?;
            let map_prior = match map.prior.as_str() {
                "uniform" => MapPrior::Uniform,
                "known" => MapPrior::Known,
                other => {
                    return Err(ConfigError::Invalid(format!("unknown map prior '{other}'")))
                }
            };
            let model = GridWorldModel {
                width: grid.width,
                height: grid.height,
                n_colors: grid.n_colors,
                true_map,
                epsilon: noise.epsilon,
                p_slip: noise.p_slip,
                p_change: noise.p_change,
                actions: parse_actions(&robot.actions)?,
                neighborhood: match robot.neighborhood {
                    NeighborhoodSpec::Single => Neighborhood::Single,
                    NeighborhoodSpec::ThreeByThree => Neighborhood::ThreeByThree,
                },
                init_location,
                map_prior,
            };
            model.validate()?;
            Ok(ModelConfig::Grid(model))
        }
        "jmls" => {
            let jmls = file
                .jmls
                .ok_or_else(|| ConfigError::Invalid("missing [jmls] section".into()))?;
            let mut params = Vec::with_capacity(jmls.regimes.len());
            for (k, regime) in jmls.regimes.iter().enumerate() {
                params.push(RegimeParams {
                    a: to_matrix(&regime.a, &format!("regime {k} A"))?,
                    c: to_matrix(&regime.c, &format!("regime {k} C"))?,
                    q: to_matrix(&regime.q, &format!("regime {k} Q"))?,
                    r: to_matrix(&regime.r, &format!("regime {k} R"))?,
                });
            }
            let model = JmlsModel {
                n_regimes: jmls.n_regimes,
                regime_transition: jmls.regime_transition,
                params,
                init_regime: jmls.init_regime,
                init_belief: GaussianBelief::new(
                    DVector::from_vec(jmls.init_mean.clone()),
                    to_matrix(&jmls.init_cov, "init covariance")?,
                ),
            };
            model.validate()?;
            Ok(ModelConfig::Jmls(model))
        }
        other => Err(ConfigError::Invalid(format!("unknown model type '{other}'"))),
    }
}

fn expect_grid(config: ModelConfig) -> GridWorldModel {
    match config {
        ModelConfig::Grid(m) => m,
        ModelConfig::Jmls(_) => unreachable!("embedded scenario has the wrong type"),
    }
}

fn expect_jmls(config: ModelConfig) -> JmlsModel {
    match config {
        ModelConfig::Jmls(m) => m,
        ModelConfig::Grid(_) => unreachable!("embedded scenario has the wrong type"),
    }
}

/// The eight-cell corridor: out to the far wall and back, single-cell
/// sensing, unknown binary map.
pub fn corridor_scenario() -> Result<GridWorldModel, ConfigError> {
    parse_model_str(include_str!("../scenarios/corridor.toml")).map(expect_grid)
}

/// The 10x10 map-learning scenario: 3x3 sensing along a sweep covering
/// every cell.
pub fn ten_by_ten_scenario() -> Result<GridWorldModel, ConfigError> {
    parse_model_str(include_str!("../scenarios/ten_by_ten.toml")).map(expect_grid)
}

/// A two-cell grid small enough for every enumeration oracle.
pub fn two_cell_scenario() -> Result<GridWorldModel, ConfigError> {
    parse_model_str(include_str!("../scenarios/two_cell.toml")).map(expect_grid)
}

/// A two-regime scalar jump-Markov linear system.
pub fn jmls2_scenario() -> Result<JmlsModel, ConfigError> {
    parse_model_str(include_str!("../scenarios/jmls2.toml")).map(expect_jmls)
}

/// Look up a built-in scenario by CLI name.
pub fn scenario_by_name(name: &str) -> Result<ModelConfig, ConfigError> {
    match name {
        "corridor" => corridor_scenario().map(ModelConfig::Grid),
        "ten_by_ten" => ten_by_ten_scenario().map(ModelConfig::Grid),
        "two_cell" => two_cell_scenario().map(ModelConfig::Grid),
        "jmls2" => jmls2_scenario().map(ModelConfig::Jmls),
        other => Err(ConfigError::Invalid(format!(
            "unknown scenario '{other}' (expected corridor, ten_by_ten, two_cell or jmls2)"
        ))),
    }
}
