use serde_json::{json, Map, Value};

use socnav_gnn::evaluation::EvalError;
use socnav_gnn::gnn::ModelError;
use socnav_gnn::heatmap::HeatmapError;
use socnav_gnn::scenario::ScenarioError;
use socnav_gnn::training::TrainError;

pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

/// Reported on stderr as one JSON line: `{"code", "message", "context"}`.
#[derive(Debug)]
pub struct CliError {
    pub exit: i32,
    pub code: &'static str,
    pub message: String,
    pub context: Map<String, Value>,
}

impl CliError {
    pub fn new(exit: i32, code: &'static str, message: impl Into<String>) -> Self {
        CliError {
            exit,
            code,
            message: message.into(),
            context: Map::new(),
        }
    }

    pub fn invalid(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(EXIT_INVALID, code, message)
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.context.insert(key.into(), value.into());
        self
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Self::new(EXIT_RUNTIME, "io", err.to_string()).with("path", path.display().to_string())
    }

    pub fn to_json_line(&self) -> String {
        json!({"code": self.code, "message": self.message, "context": self.context}).to_string()
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        let code = match e {
            ScenarioError::Generation(_) => "config",
            _ => "data",
        };
        CliError::invalid(code, e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match &e {
            ModelError::Spec(_) => CliError::invalid("config", e.to_string()),
            ModelError::Checkpoint(_) => CliError::invalid("checkpoint", e.to_string()),
            ModelError::Batch(_) => CliError::invalid("data", e.to_string()),
            ModelError::Io { path, message } => {
                CliError::new(EXIT_RUNTIME, "io", message.clone()).with("path", path.clone())
            }
            ModelError::Tensor(_) => CliError::new(EXIT_RUNTIME, "runtime", e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(m) => CliError::invalid("config", m),
            TrainError::Data(m) => CliError::invalid("data", m),
            TrainError::Model(m) => m.into(),
            TrainError::Diverged {
                epoch, ref config, ..
            } => {
                let cfg = serde_json::to_value(config.as_ref()).unwrap_or(Value::Null);
                CliError::new(EXIT_RUNTIME, "divergence", e.to_string())
                    .with("epoch", epoch)
                    .with("config", cfg)
            }
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Model(m) => m.into(),
            other => CliError::invalid("data", other.to_string()),
        }
    }
}

impl From<HeatmapError> for CliError {
    fn from(e: HeatmapError) -> Self {
        match e {
            HeatmapError::Grid(m) => CliError::invalid("config", m),
            HeatmapError::Scenario(s) => s.into(),
            HeatmapError::Model(m) => m.into(),
            other @ HeatmapError::Score { .. } => {
                CliError::new(EXIT_RUNTIME, "runtime", other.to_string())
            }
        }
    }
}
