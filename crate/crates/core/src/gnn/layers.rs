//! Message-passing layers over a [`GraphCtx`].
//!
//! In every layer an edge `(s, r)` carries the current feature row of its
//! source `s` towards its destination `r`.

use crate::graph::Relation;
use crate::numeric::{Index, Tensor, TensorError, Var};
use crate::training::BatchedGraph;

type Result<T> = std::result::Result<T, TensorError>;

/// Index lists of one (batched) graph, prepared once per forward pass.
pub struct GraphCtx {
    pub num_nodes: usize,
    pub src: Index,
    pub dst: Index,
    /// Per relation id: edges of that relation, empty for unlabelled graphs.
    pub by_relation: Vec<RelationEdges>,
}

pub struct RelationEdges {
    pub src: Index,
    pub dst: Index,
    /// `1 / c` where `c` is the number of incoming edges of this relation at
    /// the destination.
    pub mean_coeff: Tensor,
}

impl GraphCtx {
    pub fn new(batch: &BatchedGraph) -> Self {
        Self::from_parts(batch.num_nodes(), &batch.src, &batch.dst, &batch.relations)
    }

    pub fn from_parts(
        num_nodes: usize,
        src: &[usize],
        dst: &[usize],
        relations: &[Relation],
    ) -> Self {
        let by_relation = if relations.is_empty() {
            Vec::new()
        } else {
            Relation::ALL
                .iter()
                .map(|&rel| {
                    let ks: Vec<usize> = (0..relations.len())
                        .filter(|&k| relations[k] == rel)
                        .collect();
                    let mut count = vec![0usize; num_nodes];
                    for &k in &ks {
                        count[dst[k]] += 1;
                    }
                    let coeff = ks.iter().map(|&k| 1.0 / count[dst[k]] as f64).collect();
                    RelationEdges {
                        src: ks.iter().map(|&k| src[k]).collect(),
                        dst: ks.iter().map(|&k| dst[k]).collect(),
                        mean_coeff: Tensor::vector(coeff),
                    }
                })
                .collect()
        };
        Self {
            num_nodes,
            src: src.into(),
            dst: dst.into(),
            by_relation,
        }
    }

    pub fn is_labelled(&self) -> bool {
        !self.by_relation.is_empty()
    }
}

pub struct GcnWeights<'t> {
    /// `2d x out`; the first `d` rows act on the aggregate, the rest on the node.
    pub weight: Var<'t>,
    pub bias: Var<'t>,
}

/// `e_i = sum over edges (s -> i) of v_s`, then `v_i' = [e_i, v_i] W + b`,
/// followed by ReLU when `activate`. No degree normalization.
pub fn gcn_layer<'t>(
    ctx: &GraphCtx,
    h: Var<'t>,
    w: &GcnWeights<'t>,
    activate: bool,
) -> Result<Var<'t>> {
    let aggregated = h
        .gather_rows(&ctx.src)?
        .scatter_sum(&ctx.dst, ctx.num_nodes)?;
    let out = Var::concat_cols(&[aggregated, h])?.linear(w.weight, w.bias)?;
    Ok(if activate { out.relu() } else { out })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadMode {
    Concat,
    Average,
}

pub struct GatWeights<'t> {
    /// `d x heads*out`, head `h` owns columns `h*out..(h+1)*out`.
    pub weight: Var<'t>,
    /// Per head, `out x 1`.
    pub attn_src: Vec<Var<'t>>,
    pub attn_dst: Vec<Var<'t>>,
    /// `heads*out` when concatenating, `out` when averaging.
    pub bias: Var<'t>,
}

/// Multi-head graph attention.
///
/// Per head: `z = v W_h`; the logit of edge `s -> r` is
/// `LeakyReLU_alpha(a_src . z_s + a_dst . z_r)`; logits are softmax-normalized
/// over the incoming edges of each destination, and node `r` receives
/// `sum attn * z_s`. Head outputs are concatenated or averaged, then `b` is
/// added.
pub fn gat_layer<'t>(
    ctx: &GraphCtx,
    h: Var<'t>,
    w: &GatWeights<'t>,
    alpha: f64,
    mode: HeadMode,
) -> Result<Var<'t>> {
    let heads = w.attn_src.len();
    let z = h.matmul(w.weight)?;
    let out = z.cols() / heads.max(1);
    let mut per_head = Vec::with_capacity(heads);
    for head in 0..heads {
        let zh = z.slice_cols(head * out, out)?;
        let score_src = zh.matmul(w.attn_src[head])?.gather_rows(&ctx.src)?;
        let score_dst = zh.matmul(w.attn_dst[head])?.gather_rows(&ctx.dst)?;
        let attn = score_src
            .add(score_dst)?
            .leaky_relu(alpha)
            .segment_softmax(&ctx.dst, ctx.num_nodes)?;
        let msg = zh.gather_rows(&ctx.src)?.scale_rows(attn)?;
        per_head.push(msg.scatter_sum(&ctx.dst, ctx.num_nodes)?);
    }
    let combined = match mode {
        HeadMode::Concat => Var::concat_cols(&per_head)?,
        HeadMode::Average => {
            let mut acc = per_head[0];
            for p in &per_head[1..] {
                acc = acc.add(*p)?;
            }
            acc.scale(1.0 / heads as f64)
        }
    };
    combined.add_bias(w.bias)
}

pub struct RgcnWeights<'t> {
    pub self_weight: Var<'t>,
    pub bias: Var<'t>,
    /// One `d x out` matrix per relation id.
    pub relation_weights: Vec<Var<'t>>,
}

/// `v_i' = v_i W_self + b + sum_rel sum_(s -> i of rel) (1/c_{i,rel}) v_s W_rel`,
/// ReLU when `activate`. With `normalize == false` the `1/c` factor is dropped.
pub fn rgcn_layer<'t>(
    ctx: &GraphCtx,
    h: Var<'t>,
    w: &RgcnWeights<'t>,
    activate: bool,
    normalize: bool,
) -> Result<Var<'t>> {
    if !ctx.is_labelled() {
        return Err(TensorError::Evaluation(
            "relational layer needs edge relations (labelled variant)".into(),
        ));
    }
    if w.relation_weights.len() != ctx.by_relation.len() {
        return Err(TensorError::Evaluation(format!(
            "relation vocabulary mismatch: {} weight matrices for {} relations",
            w.relation_weights.len(),
            ctx.by_relation.len()
        )));
    }
    let tape = h.tape();
    let mut out = h.linear(w.self_weight, w.bias)?;
    for (edges, &weight) in ctx.by_relation.iter().zip(&w.relation_weights) {
        if edges.src.is_empty() {
            continue;
        }
        let mut msg = h.gather_rows(&edges.src)?;
        if normalize {
            msg = msg.scale_rows(tape.constant(edges.mean_coeff.clone()))?;
        }
        out = out.add(msg.matmul(weight)?.scatter_sum(&edges.dst, ctx.num_nodes)?)?;
    }
    Ok(if activate { out.relu() } else { out })
}

pub struct GgnnWeights<'t> {
    /// One `h x h` message matrix per relation id.
    pub messages: Vec<Var<'t>>,
    pub w_update: Var<'t>,
    pub u_update: Var<'t>,
    pub b_update: Var<'t>,
    pub w_reset: Var<'t>,
    pub u_reset: Var<'t>,
    pub b_reset: Var<'t>,
    pub w_cand: Var<'t>,
    pub u_cand: Var<'t>,
    pub b_cand: Var<'t>,
}

/// One gated propagation step.
///
/// ```text
/// m  = sum over edges (s -> i) of v_s W_rel(edge)
/// z  = sigmoid(m W_z + v U_z + b_z)
/// r  = sigmoid(m W_r + v U_r + b_r)
/// h~ = tanh(m W_h + (r * v) U_h + b_h)
/// v' = (1 - z) * v + z * h~
/// ```
pub fn ggnn_step<'t>(ctx: &GraphCtx, h: Var<'t>, w: &GgnnWeights<'t>) -> Result<Var<'t>> {
    if !ctx.is_labelled() {
        return Err(TensorError::Evaluation(
            "gated layer needs edge relations (labelled variant)".into(),
        ));
    }
    let width = h.cols();
    let tape = h.tape();
    let mut m = tape.constant(Tensor::zeros(&[ctx.num_nodes, width]));
    for (edges, &weight) in ctx.by_relation.iter().zip(&w.messages) {
        if edges.src.is_empty() {
            continue;
        }
        let msg = h.gather_rows(&edges.src)?.matmul(weight)?;
        m = m.add(msg.scatter_sum(&edges.dst, ctx.num_nodes)?)?;
    }
    let z = m
        .matmul(w.w_update)?
        .add(h.matmul(w.u_update)?)?
        .add_bias(w.b_update)?
        .sigmoid();
    let r = m
        .matmul(w.w_reset)?
        .add(h.matmul(w.u_reset)?)?
        .add_bias(w.b_reset)?
        .sigmoid();
    let cand = m
        .matmul(w.w_cand)?
        .add(r.mul(h)?.matmul(w.u_cand)?)?
        .add_bias(w.b_cand)?
        .tanh();
    h.add(z.mul(cand.sub(h)?)?)
}

/// Robot-node regression: `sigmoid(v_robot w + b)` for every member graph.
pub fn readout_robot<'t>(
    h: Var<'t>,
    robot_indices: &Index,
    weight: Var<'t>,
    bias: Var<'t>,
) -> Result<Var<'t>> {
    Ok(h.gather_rows(robot_indices)?
        .linear(weight, bias)?
        .sigmoid())
}
