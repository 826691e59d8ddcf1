use std::rc::Rc;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::layers::{
    gat_layer, gcn_layer, ggnn_step, readout_robot, rgcn_layer, GatWeights, GcnWeights,
    GgnnWeights, GraphCtx, HeadMode, RgcnWeights,
};
use super::ModelError;
use crate::graph::{Graph, Relation, Variant};
use crate::numeric::{glorot, Index, Rng, Tape, Tensor, Var};
use crate::training::{batch_graphs, BatchedGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Gcn,
    Gat,
    Rgcn,
    Ggnn,
}

impl BlockKind {
    pub fn needs_relations(self) -> bool {
        matches!(self, BlockKind::Rgcn | BlockKind::Ggnn)
    }
}

/// One entry of a layer plan. `heads` only matters for GAT blocks that are
/// not last; the last GAT block uses [`ModelSpec::final_heads`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub kind: BlockKind,
    pub hidden: usize,
    pub heads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    pub blocks: Vec<BlockSpec>,
    /// Negative slope of the attention LeakyReLU.
    pub alpha: f64,
    pub dropout: f64,
    pub final_heads: usize,
}

impl ModelSpec {
    /// Four GAT layers, 129 hidden units, 2 heads, 3 heads in the last layer,
    /// alpha 0.2114, no dropout.
    pub fn selected_gat() -> ModelSpec {
        Preset::Gat
            .build(&PresetParams {
                layers: 4,
                hidden: 129,
                heads: 2,
                final_heads: 3,
                alpha: 0.2114,
                dropout: 0.0,
                variant: None,
            })
            .expect("valid preset")
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Spec(m));
        if self.blocks.is_empty() {
            return err("layer plan is empty".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return err(format!("alpha {} outside (0, 1)", self.alpha));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.final_heads == 0 {
            return err("final_heads must be at least 1".into());
        }
        let mut prev: Option<BlockSpec> = None;
        for (i, b) in self.blocks.iter().enumerate() {
            if b.hidden == 0 || b.heads == 0 {
                return err(format!(
                    "layer {i}: hidden units and heads must be positive"
                ));
            }
            if b.kind.needs_relations() && self.variant != Variant::Labelled {
                return err(format!(
                    "layer {i}: {:?} needs the labelled graph variant",
                    b.kind
                ));
            }
            if let Some(p) = prev {
                if p.kind == BlockKind::Ggnn && b.kind == BlockKind::Ggnn && p.hidden != b.hidden {
                    return err(format!(
                        "layer {i}: gated steps keep their width ({} -> {})",
                        p.hidden, b.hidden
                    ));
                }
            }
            prev = Some(*b);
        }
        Ok(())
    }
}

/// Named layer plans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Gcn,
    Gat,
    Rgcn,
    Ggnn,
    /// `n` RGCN layers then `n` GAT layers, equal widths.
    RgcnGatSeq,
    /// RGCN and GAT alternating, `n` of each, equal widths.
    RgcnGatInterleaved,
    /// `n` RGCN then `n` GAT layers with widths falling linearly from `hidden`.
    RgcnGatDecreasing,
}

impl Preset {
    pub const ALL: [Preset; 7] = [
        Preset::Gcn,
        Preset::Gat,
        Preset::Rgcn,
        Preset::Ggnn,
        Preset::RgcnGatSeq,
        Preset::RgcnGatInterleaved,
        Preset::RgcnGatDecreasing,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Gcn => "gcn",
            Preset::Gat => "gat",
            Preset::Rgcn => "rgcn",
            Preset::Ggnn => "ggnn",
            Preset::RgcnGatSeq => "rgcn-gat-seq",
            Preset::RgcnGatInterleaved => "rgcn-gat-interleaved",
            Preset::RgcnGatDecreasing => "rgcn-gat-decreasing",
        }
    }

    pub fn default_variant(self) -> Variant {
        match self {
            Preset::Gcn | Preset::Gat => Variant::Unlabelled,
            _ => Variant::Labelled,
        }
    }

    /// Hybrids use `n = max(1, layers / 2)` layers of each kind.
    pub fn build(self, p: &PresetParams) -> Result<ModelSpec, ModelError> {
        if p.layers == 0 {
            return Err(ModelError::Spec("layers must be at least 1".into()));
        }
        let block = |kind, hidden| BlockSpec {
            kind,
            hidden,
            heads: p.heads,
        };
        let uniform = |kind| vec![block(kind, p.hidden); p.layers];
        let n = (p.layers / 2).max(1);
        let blocks = match self {
            Preset::Gcn => uniform(BlockKind::Gcn),
            Preset::Gat => uniform(BlockKind::Gat),
            Preset::Rgcn => uniform(BlockKind::Rgcn),
            Preset::Ggnn => uniform(BlockKind::Ggnn),
            Preset::RgcnGatSeq => [BlockKind::Rgcn, BlockKind::Gat]
                .iter()
                .flat_map(|&k| std::iter::repeat_n(block(k, p.hidden), n))
                .collect(),
            Preset::RgcnGatInterleaved => (0..n)
                .flat_map(|_| {
                    [
                        block(BlockKind::Rgcn, p.hidden),
                        block(BlockKind::Gat, p.hidden),
                    ]
                })
                .collect(),
            Preset::RgcnGatDecreasing => {
                let total = 2 * n;
                (0..total)
                    .map(|i| {
                        let kind = if i < n {
                            BlockKind::Rgcn
                        } else {
                            BlockKind::Gat
                        };
                        let width = (p.hidden as f64 * (total - i) as f64 / total as f64).round();
                        block(kind, (width as usize).max(1))
                    })
                    .collect()
            }
        };
        let spec = ModelSpec {
            variant: p.variant.unwrap_or(self.default_variant()),
            blocks,
            alpha: p.alpha,
            dropout: p.dropout,
            final_heads: p.final_heads,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Preset::ALL.iter().map(|p| p.name()).collect();
                format!(
                    "unknown preset {s:?} (expected one of {})",
                    names.join(", ")
                )
            })
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresetParams {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub final_heads: usize,
    pub alpha: f64,
    pub dropout: f64,
    /// Overrides [`Preset::default_variant`].
    pub variant: Option<Variant>,
}

#[derive(Debug, Clone, PartialEq)]
enum LayerPlan {
    Gcn {
        weight: usize,
        bias: usize,
        activate: bool,
    },
    Gat {
        weight: usize,
        attn_src: Vec<usize>,
        attn_dst: Vec<usize>,
        bias: usize,
        mode: HeadMode,
    },
    Rgcn {
        self_weight: usize,
        bias: usize,
        relations: Vec<usize>,
        activate: bool,
    },
    Project {
        weight: usize,
        bias: usize,
    },
    Ggnn {
        messages: Vec<usize>,
        /// update, reset, candidate: (w, u, b) each.
        gates: [usize; 9],
    },
}

/// Learned parameters of a [`ModelSpec`], stored as one flat list so that
/// optimizers and checkpoints can walk them in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    names: Vec<String>,
    params: Vec<Tensor>,
    plan: Vec<LayerPlan>,
    readout: (usize, usize),
}

struct ParamBuilder<'r> {
    rng: &'r mut Rng,
    names: Vec<String>,
    params: Vec<Tensor>,
}

impl ParamBuilder<'_> {
    fn add(&mut self, name: String, value: Tensor) -> usize {
        self.names.push(name);
        self.params.push(value);
        self.params.len() - 1
    }

    fn weight(&mut self, name: String, fan_in: usize, fan_out: usize) -> usize {
        let w = glorot(self.rng, fan_in, fan_out);
        self.add(name, w)
    }

    fn bias(&mut self, name: String, width: usize) -> usize {
        self.add(name, Tensor::zeros(&[width]))
    }
}

/// Glorot-initialized model for `spec`.
pub fn assemble_model(spec: &ModelSpec, rng: &mut Rng) -> Result<Model, ModelError> {
    spec.validate()?;
    let mut pb = ParamBuilder {
        rng,
        names: Vec::new(),
        params: Vec::new(),
    };
    let mut plan = Vec::new();
    let mut width = spec.variant.feature_width();
    let last = spec.blocks.len() - 1;
    for (i, b) in spec.blocks.iter().enumerate() {
        let is_last = i == last;
        let p = |s: &str| format!("layer{i}.{s}");
        match b.kind {
            BlockKind::Gcn => {
                plan.push(LayerPlan::Gcn {
                    weight: pb.weight(p("gcn.weight"), 2 * width, b.hidden),
                    bias: pb.bias(p("gcn.bias"), b.hidden),
                    activate: !is_last,
                });
                width = b.hidden;
            }
            BlockKind::Gat => {
                let (heads, mode) = if is_last {
                    (spec.final_heads, HeadMode::Average)
                } else {
                    (b.heads, HeadMode::Concat)
                };
                let weight = pb.weight(p("gat.weight"), width, heads * b.hidden);
                let attn_src = (0..heads)
                    .map(|h| pb.weight(p(&format!("gat.attn_src{h}")), b.hidden, 1))
                    .collect();
                let attn_dst = (0..heads)
                    .map(|h| pb.weight(p(&format!("gat.attn_dst{h}")), b.hidden, 1))
                    .collect();
                width = match mode {
                    HeadMode::Concat => heads * b.hidden,
                    HeadMode::Average => b.hidden,
                };
                plan.push(LayerPlan::Gat {
                    weight,
                    attn_src,
                    attn_dst,
                    bias: pb.bias(p("gat.bias"), width),
                    mode,
                });
            }
            BlockKind::Rgcn => {
                let self_weight = pb.weight(p("rgcn.self_weight"), width, b.hidden);
                let bias = pb.bias(p("rgcn.bias"), b.hidden);
                let relations = Relation::ALL
                    .iter()
                    .map(|r| pb.weight(p(&format!("rgcn.rel.{}", r.name())), width, b.hidden))
                    .collect();
                plan.push(LayerPlan::Rgcn {
                    self_weight,
                    bias,
                    relations,
                    activate: !is_last,
                });
                width = b.hidden;
            }
            BlockKind::Ggnn => {
                let h = b.hidden;
                if width != h {
                    plan.push(LayerPlan::Project {
                        weight: pb.weight(p("ggnn.project.weight"), width, h),
                        bias: pb.bias(p("ggnn.project.bias"), h),
                    });
                    width = h;
                }
                let messages = Relation::ALL
                    .iter()
                    .map(|r| pb.weight(p(&format!("ggnn.msg.{}", r.name())), h, h))
                    .collect();
                let mut gates = [0; 9];
                for (g, gate) in ["update", "reset", "cand"].iter().enumerate() {
                    gates[3 * g] = pb.weight(p(&format!("ggnn.{gate}.w")), h, h);
                    gates[3 * g + 1] = pb.weight(p(&format!("ggnn.{gate}.u")), h, h);
                    gates[3 * g + 2] = pb.bias(p(&format!("ggnn.{gate}.b")), h);
                }
                plan.push(LayerPlan::Ggnn { messages, gates });
            }
        }
    }
    let readout = (
        pb.weight("readout.weight".into(), width, 1),
        pb.bias("readout.bias".into(), 1),
    );
    Ok(Model {
        spec: spec.clone(),
        names: pb.names,
        params: pb.params,
        plan,
        readout,
    })
}

/// Per-forward dropout source. `None` means inference.
pub struct Dropout<'r> {
    pub rate: f64,
    pub rng: &'r mut Rng,
}

impl Model {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn variant(&self) -> Variant {
        self.spec.variant
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Replaces all parameters; shapes must match the current ones.
    pub fn set_params(&mut self, params: Vec<Tensor>) -> Result<(), ModelError> {
        if params.len() != self.params.len() {
            return Err(ModelError::Checkpoint(format!(
                "expected {} parameter tensors, got {}",
                self.params.len(),
                params.len()
            )));
        }
        for (i, (old, new)) in self.params.iter().zip(&params).enumerate() {
            if old.shape() != new.shape() {
                return Err(ModelError::Checkpoint(format!(
                    "parameter {} has shape {:?}, expected {:?}",
                    self.names[i],
                    new.shape(),
                    old.shape()
                )));
            }
        }
        self.params = params;
        Ok(())
    }

    /// Records the network on `tape` and returns the `B x 1` scores together
    /// with the parameter leaves (same order as [`Model::params`]).
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        batch: &BatchedGraph,
        dropout: Option<Dropout<'_>>,
    ) -> Result<(Var<'t>, Vec<Var<'t>>), ModelError> {
        let vars: Vec<Var<'t>> = self.params.iter().map(|p| tape.param(p.clone())).collect();
        let scores = self.forward_with(tape, &vars, batch, dropout)?;
        Ok((scores, vars))
    }

    /// Same as [`Model::forward`] with caller-provided parameter leaves, which
    /// lets gradient checks perturb them.
    pub fn forward_with<'t>(
        &self,
        tape: &'t Tape,
        vars: &[Var<'t>],
        batch: &BatchedGraph,
        mut dropout: Option<Dropout<'_>>,
    ) -> Result<Var<'t>, ModelError> {
        if batch.variant != self.spec.variant {
            return Err(ModelError::Spec(format!(
                "model expects {} graphs, got {}",
                self.spec.variant.name(),
                batch.variant.name()
            )));
        }
        let ctx = GraphCtx::new(batch);
        let alpha = self.spec.alpha;
        let mut h = tape.constant(batch.features.clone());
        let last = self.plan.len() - 1;
        for (i, layer) in self.plan.iter().enumerate() {
            h = match layer {
                LayerPlan::Gcn {
                    weight,
                    bias,
                    activate,
                } => {
                    let w = GcnWeights {
                        weight: vars[*weight],
                        bias: vars[*bias],
                    };
                    gcn_layer(&ctx, h, &w, *activate)?
                }
                LayerPlan::Gat {
                    weight,
                    attn_src,
                    attn_dst,
                    bias,
                    mode,
                } => {
                    let w = GatWeights {
                        weight: vars[*weight],
                        attn_src: attn_src.iter().map(|&k| vars[k]).collect(),
                        attn_dst: attn_dst.iter().map(|&k| vars[k]).collect(),
                        bias: vars[*bias],
                    };
                    gat_layer(&ctx, h, &w, alpha, *mode)?
                }
                LayerPlan::Rgcn {
                    self_weight,
                    bias,
                    relations,
                    activate,
                } => {
                    let w = RgcnWeights {
                        self_weight: vars[*self_weight],
                        bias: vars[*bias],
                        relation_weights: relations.iter().map(|&k| vars[k]).collect(),
                    };
                    rgcn_layer(&ctx, h, &w, *activate, true)?
                }
                LayerPlan::Project { weight, bias } => h.linear(vars[*weight], vars[*bias])?,
                LayerPlan::Ggnn { messages, gates } => {
                    let g = |k: usize| vars[gates[k]];
                    let w = GgnnWeights {
                        messages: messages.iter().map(|&k| vars[k]).collect(),
                        w_update: g(0),
                        u_update: g(1),
                        b_update: g(2),
                        w_reset: g(3),
                        u_reset: g(4),
                        b_reset: g(5),
                        w_cand: g(6),
                        u_cand: g(7),
                        b_cand: g(8),
                    };
                    ggnn_step(&ctx, h, &w)?
                }
            };
            let between_layers = i != last && !matches!(layer, LayerPlan::Project { .. });
            if let (true, Some(d)) = (between_layers, dropout.as_mut()) {
                if d.rate > 0.0 {
                    let keep = 1.0 - d.rate;
                    let shape = h.shape();
                    let n = shape.iter().product();
                    let data = (0..n)
                        .map(|_| {
                            if d.rng.uniform() < keep {
                                1.0 / keep
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    let mask = Tensor::new(shape, data)?;
                    h = h.mul(tape.constant(mask))?;
                }
            }
        }
        let robots: Index = Rc::from(batch.robot_indices.as_slice());
        Ok(readout_robot(
            h,
            &robots,
            vars[self.readout.0],
            vars[self.readout.1],
        )?)
    }

    /// Inference scores for an already-batched graph.
    pub fn score_batched(&self, batch: &BatchedGraph) -> Result<Vec<f64>, ModelError> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = self
            .params
            .iter()
            .map(|p| tape.constant(p.clone()))
            .collect();
        let scores = self.forward_with(&tape, &vars, batch, None)?;
        let out = scores.value().data().to_vec();
        Ok(out)
    }

    pub fn score(&self, graph: &Graph) -> Result<f64, ModelError> {
        Ok(self.score_batched(&batch_graphs(&[graph])?)?[0])
    }
}
