//! Robot-pose sweeps over a grid for a fixed scenario.
//!
//! A score of 1.0 means fully socially compliant (label 100).

use std::f64::consts::FRAC_PI_2;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gnn::{ModelError, Scorer};
use crate::graph::{build_graph, Graph};
use crate::scenario::{Point, Pose2D, Scenario, ScenarioError};

pub const DEFAULT_RESOLUTION: f64 = 0.1;
pub const DEFAULT_THETA: f64 = FRAC_PI_2;
/// Written for masked cells in CSV output.
pub const MASK_SENTINEL: f64 = -1.0;

const CELLS_PER_BATCH: usize = 64;
const MAX_CELLS: usize = 4_000_000;

#[derive(Debug, Error)]
pub enum HeatmapError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("cell ({row}, {col}) scored {value}, outside [0, 1]")]
    Score { row: usize, col: usize, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// Meters per cell.
    pub resolution: f64,
    /// Robot heading in radians, fixed across the sweep.
    pub robot_theta: f64,
}

impl GridSpec {
    /// Bounding box of the room at the default resolution and heading.
    pub fn for_room(s: &Scenario) -> GridSpec {
        let (lo, hi) = s.bounding_box();
        GridSpec {
            x_min: lo.x,
            x_max: hi.x,
            y_min: lo.y,
            y_max: hi.y,
            resolution: DEFAULT_RESOLUTION,
            robot_theta: DEFAULT_THETA,
        }
    }

    pub fn validate(&self) -> Result<(), HeatmapError> {
        let vals = [
            self.x_min,
            self.x_max,
            self.y_min,
            self.y_max,
            self.resolution,
            self.robot_theta,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(HeatmapError::Grid("all grid values must be finite".into()));
        }
        if self.resolution <= 0.0 {
            return Err(HeatmapError::Grid(format!(
                "resolution {} must be positive",
                self.resolution
            )));
        }
        if self.x_max <= self.x_min || self.y_max <= self.y_min {
            return Err(HeatmapError::Grid(
                "max must exceed min on both axes".into(),
            ));
        }
        let cells = self.rows().saturating_mul(self.cols());
        if cells > MAX_CELLS {
            return Err(HeatmapError::Grid(format!(
                "{cells} cells exceed the limit of {MAX_CELLS}"
            )));
        }
        Ok(())
    }

    fn count(span: f64, res: f64) -> usize {
        // the tolerance keeps 1.0 / 0.1 at 10 cells
        ((span / res - 1e-9).ceil() as usize).max(1)
    }

    pub fn rows(&self) -> usize {
        Self::count(self.y_max - self.y_min, self.resolution)
    }

    pub fn cols(&self) -> usize {
        Self::count(self.x_max - self.x_min, self.resolution)
    }

    /// Center of cell `(row, col)`; row 0 is at `y_min`.
    pub fn cell_center(&self, row: usize, col: usize) -> Point {
        Point::new(
            self.x_min + (col as f64 + 0.5) * self.resolution,
            self.y_min + (row as f64 + 0.5) * self.resolution,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreGrid {
    pub grid: GridSpec,
    pub rows: usize,
    pub cols: usize,
    /// Row-major, row 0 at `y_min`.
    pub scores: Vec<f64>,
    /// Whether each cell center lies inside the room polygon.
    pub inside: Vec<bool>,
}

impl ScoreGrid {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.scores[row * self.cols + col]
    }

    /// `x,y,score` per cell, row 0 first; masked cells read `-1`.
    pub fn to_csv(&self, mask_outside: bool) -> String {
        let mut out = String::from("x,y,score\n");
        for r in 0..self.rows {
            for c in 0..self.cols {
                let p = self.grid.cell_center(r, c);
                let k = r * self.cols + c;
                let v = if mask_outside && !self.inside[k] {
                    MASK_SENTINEL
                } else {
                    self.scores[k]
                };
                out.push_str(&format!("{},{},{}\n", p.x, p.y, v));
            }
        }
        out
    }

    /// Binary 8-bit PGM, first image row at `y_max`, pixel `round(255 * score)`;
    /// masked cells are 0.
    pub fn to_pgm(&self, mask_outside: bool) -> Vec<u8> {
        let header = format!(
            "P5\n# socnav heatmap: row 0 = y_max, pixel = round(255*score), 255 = fully compliant{}\n{} {}\n255\n",
            if mask_outside { ", 0 = outside room" } else { "" },
            self.cols,
            self.rows
        );
        let mut out = header.into_bytes();
        for r in (0..self.rows).rev() {
            for c in 0..self.cols {
                let k = r * self.cols + c;
                let v = if mask_outside && !self.inside[k] {
                    0.0
                } else {
                    self.scores[k]
                };
                out.push((255.0 * v).round().clamp(0.0, 255.0) as u8);
            }
        }
        out
    }
}

fn score_cells<S: Scorer + ?Sized>(
    scorer: &S,
    base: &Scenario,
    grid: &GridSpec,
    cells: std::ops::Range<usize>,
) -> Result<Vec<f64>, HeatmapError> {
    let cols = grid.cols();
    let graphs: Vec<Graph> = cells
        .clone()
        .map(|k| {
            let p = grid.cell_center(k / cols, k % cols);
            build_graph(
                &base.with_robot(Pose2D::new(p.x, p.y, grid.robot_theta)),
                scorer.variant(),
            )
        })
        .collect::<Result<_, _>>()?;
    let refs: Vec<&Graph> = graphs.iter().collect();
    let scores = scorer.score_graphs(&refs)?;
    for (k, &v) in cells.zip(&scores) {
        if !(0.0..=1.0).contains(&v) {
            return Err(HeatmapError::Score {
                row: k / cols,
                col: k % cols,
                value: v,
            });
        }
    }
    Ok(scores)
}

/// Places the robot at every cell center with heading `grid.robot_theta` and
/// scores the regraphized scenario. Cells are scored in fixed blocks, so the
/// result does not depend on `jobs`.
pub fn sweep<S: Scorer + ?Sized>(
    scorer: &S,
    base: &Scenario,
    grid: &GridSpec,
    jobs: usize,
) -> Result<ScoreGrid, HeatmapError> {
    grid.validate()?;
    base.validate()?;
    if jobs == 0 {
        return Err(HeatmapError::Grid("jobs must be at least 1".into()));
    }
    let (rows, cols) = (grid.rows(), grid.cols());
    let total = rows * cols;
    let n_blocks = total.div_ceil(CELLS_PER_BATCH);
    let block = |b: usize| b * CELLS_PER_BATCH..((b + 1) * CELLS_PER_BATCH).min(total);

    let mut blocks: Vec<Option<Result<Vec<f64>, HeatmapError>>> = Vec::new();
    blocks.resize_with(n_blocks, || None);
    let slots = Mutex::new(blocks);
    let next = AtomicUsize::new(0);
    let worker = || loop {
        let b = next.fetch_add(1, Ordering::Relaxed);
        if b >= n_blocks {
            break;
        }
        let r = score_cells(scorer, base, grid, block(b));
        slots.lock().expect("no worker panicked")[b] = Some(r);
    };
    let jobs = jobs.min(n_blocks);
    if jobs <= 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..jobs {
                s.spawn(worker);
            }
        });
    }
    let mut scores = Vec::with_capacity(total);
    for r in slots.into_inner().expect("no worker panicked") {
        scores.extend(r.expect("every block ran")?);
    }
    let inside = (0..total)
        .map(|k| base.room_contains(grid.cell_center(k / cols, k % cols)))
        .collect();
    Ok(ScoreGrid {
        grid: *grid,
        rows,
        cols,
        scores,
        inside,
    })
}
