//! Browser front end: draw a synthetic scenario, train a small GAT a few
//! epochs at a time, and compare its heat map with the proxy label field.
//!
//! [`DemoState`] holds the logic and is usable natively; [`Demo`] is the
//! wasm-bindgen wrapper the page talks to.

use serde_json::json;
use wasm_bindgen::prelude::*;

use socnav_gnn::gnn::Preset;
use socnav_gnn::graph::{build_graph, Graph, Variant};
use socnav_gnn::heatmap::{sweep, GridSpec};
use socnav_gnn::numeric::Rng;
use socnav_gnn::scenario::{
    generate_synthetic, proxy_label, serialize_scenario, Pose2D, Scenario, SynthConfig,
};
use socnav_gnn::training::{TrainConfig, Trainer};

/// Grid dimensions `[rows, cols]` followed by row-major scores, row 0 at the
/// bottom of the room.
pub type Field = Vec<f64>;

pub struct DemoState {
    scenario: Scenario,
    trainer: Option<Trainer>,
}

fn dataset(rng: &mut Rng, n: usize) -> Result<Vec<Graph>, String> {
    let cfg = SynthConfig::default();
    (0..n)
        .map(|_| {
            let s = generate_synthetic(rng.next_u64(), &cfg).map_err(|e| e.to_string())?;
            build_graph(&s, Variant::Unlabelled).map_err(|e| e.to_string())
        })
        .collect()
}

fn grid_for(s: &Scenario, resolution: f64, theta: f64) -> GridSpec {
    GridSpec {
        resolution,
        robot_theta: theta,
        ..GridSpec::for_room(s)
    }
}

impl DemoState {
    pub fn new(seed: u64) -> Result<Self, String> {
        Ok(DemoState {
            scenario: generate_synthetic(seed, &SynthConfig::default())
                .map_err(|e| e.to_string())?,
            trainer: None,
        })
    }

    pub fn new_scenario(&mut self, seed: u64) -> Result<String, String> {
        self.scenario =
            generate_synthetic(seed, &SynthConfig::default()).map_err(|e| e.to_string())?;
        Ok(self.scenario_json())
    }

    pub fn scenario_json(&self) -> String {
        serialize_scenario(&self.scenario)
    }

    /// Fresh session on `samples` synthetic training and `samples / 4` dev
    /// scenarios.
    pub fn start_training(
        &mut self,
        samples: usize,
        layers: usize,
        hidden: usize,
        learning_rate: f64,
        seed: u64,
    ) -> Result<(), String> {
        let mut rng = Rng::new(seed);
        let train = dataset(&mut rng, samples.max(1))?;
        let dev = dataset(&mut rng, (samples / 4).max(1))?;
        let cfg = TrainConfig {
            preset: Preset::Gat,
            variant: Variant::Unlabelled,
            epochs: usize::MAX,
            patience: usize::MAX,
            batch_size: 32,
            hidden_units: hidden,
            attention_heads: 2,
            final_heads: 2,
            learning_rate,
            weight_decay: 0.0,
            layers,
            dropout: 0.0,
            alpha: 0.2,
            seed,
        };
        self.trainer = Some(Trainer::new(&cfg, &train, &dev).map_err(|e| e.to_string())?);
        Ok(())
    }

    /// Runs one epoch and returns `{"epoch", "train_loss", "dev_loss"}`.
    pub fn train_epoch(&mut self) -> Result<String, String> {
        let trainer = self
            .trainer
            .as_mut()
            .ok_or("training has not been started")?;
        let r = trainer.run_epoch().map_err(|e| e.to_string())?.record;
        Ok(
            json!({"epoch": r.epoch, "train_loss": r.train_loss, "dev_loss": r.dev_loss})
                .to_string(),
        )
    }

    pub fn model_field(&self, resolution: f64, theta: f64) -> Result<Field, String> {
        let trainer = self
            .trainer
            .as_ref()
            .ok_or("training has not been started")?;
        let grid = grid_for(&self.scenario, resolution, theta);
        let g =
            sweep(trainer.current_model(), &self.scenario, &grid, 1).map_err(|e| e.to_string())?;
        let mut out = vec![g.rows as f64, g.cols as f64];
        out.extend(g.scores);
        Ok(out)
    }

    /// Proxy label / 100 at every cell; the heading does not affect it.
    pub fn proxy_field(&self, resolution: f64) -> Result<Field, String> {
        let grid = grid_for(&self.scenario, resolution, 0.0);
        grid.validate().map_err(|e| e.to_string())?;
        let (rows, cols) = (grid.rows(), grid.cols());
        let mut out = vec![rows as f64, cols as f64];
        for r in 0..rows {
            for c in 0..cols {
                let p = grid.cell_center(r, c);
                out.push(
                    proxy_label(&self.scenario.with_robot(Pose2D::new(p.x, p.y, 0.0))) / 100.0,
                );
            }
        }
        Ok(out)
    }
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

#[wasm_bindgen]
pub struct Demo {
    state: DemoState,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<Demo, JsError> {
        Ok(Demo {
            state: DemoState::new(seed as u64).map_err(js)?,
        })
    }

    #[wasm_bindgen(js_name = newScenario)]
    pub fn new_scenario(&mut self, seed: u32) -> Result<String, JsError> {
        self.state.new_scenario(seed as u64).map_err(js)
    }

    #[wasm_bindgen(js_name = scenarioJson)]
    pub fn scenario_json(&self) -> String {
        self.state.scenario_json()
    }

    #[wasm_bindgen(js_name = startTraining)]
    pub fn start_training(
        &mut self,
        samples: u32,
        layers: u32,
        hidden: u32,
        learning_rate: f64,
        seed: u32,
    ) -> Result<(), JsError> {
        self.state
            .start_training(
                samples as usize,
                layers as usize,
                hidden as usize,
                learning_rate,
                seed as u64,
            )
            .map_err(js)
    }

    #[wasm_bindgen(js_name = trainEpoch)]
    pub fn train_epoch(&mut self) -> Result<String, JsError> {
        self.state.train_epoch().map_err(js)
    }

    #[wasm_bindgen(js_name = modelField)]
    pub fn model_field(&self, resolution: f64, theta: f64) -> Result<Vec<f64>, JsError> {
        self.state.model_field(resolution, theta).map_err(js)
    }

    #[wasm_bindgen(js_name = proxyField)]
    pub fn proxy_field(&self, resolution: f64) -> Result<Vec<f64>, JsError> {
        self.state.proxy_field(resolution).map_err(js)
    }
}
