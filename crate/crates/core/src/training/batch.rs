use thiserror::Error;

use crate::graph::{Graph, NodeType, Relation, Variant};
use crate::numeric::Tensor;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BatchError {
    #[error("cannot batch an empty list of graphs")]
    Empty,
    #[error("graph {index} is {found:?} but the batch is {expected:?}")]
    MixedVariants {
        index: usize,
        expected: Variant,
        found: Variant,
    },
}

/// Disjoint union of graphs. Member `k` owns nodes
/// `offsets[k]..offsets[k] + sizes[k]` and its edges are shifted by the same
/// offset, so no edge crosses members.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchedGraph {
    pub variant: Variant,
    pub node_types: Vec<NodeType>,
    pub features: Tensor,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub relations: Vec<Relation>,
    pub robot_indices: Vec<usize>,
    pub labels: Vec<Option<f64>>,
    pub offsets: Vec<usize>,
    pub sizes: Vec<usize>,
}

impl BatchedGraph {
    pub fn num_nodes(&self) -> usize {
        self.node_types.len()
    }

    pub fn num_graphs(&self) -> usize {
        self.robot_indices.len()
    }
}

pub fn batch_graphs(graphs: &[&Graph]) -> Result<BatchedGraph, BatchError> {
    let first = graphs.first().ok_or(BatchError::Empty)?;
    let variant = first.variant;
    let width = variant.feature_width();
    let total_nodes: usize = graphs.iter().map(|g| g.num_nodes()).sum();
    let total_edges: usize = graphs.iter().map(|g| g.num_edges()).sum();

    let mut b = BatchedGraph {
        variant,
        node_types: Vec::with_capacity(total_nodes),
        features: Tensor::zeros(&[0]),
        src: Vec::with_capacity(total_edges),
        dst: Vec::with_capacity(total_edges),
        relations: Vec::new(),
        robot_indices: Vec::with_capacity(graphs.len()),
        labels: Vec::with_capacity(graphs.len()),
        offsets: Vec::with_capacity(graphs.len()),
        sizes: Vec::with_capacity(graphs.len()),
    };
    let mut features = Vec::with_capacity(total_nodes * width);
    for (index, g) in graphs.iter().enumerate() {
        if g.variant != variant {
            return Err(BatchError::MixedVariants {
                index,
                expected: variant,
                found: g.variant,
            });
        }
        let offset = b.node_types.len();
        b.offsets.push(offset);
        b.sizes.push(g.num_nodes());
        b.node_types.extend_from_slice(&g.node_types);
        features.extend_from_slice(g.features.data());
        for &(s, r) in &g.edges {
            b.src.push(s + offset);
            b.dst.push(r + offset);
        }
        b.relations.extend_from_slice(&g.relations);
        b.robot_indices.push(g.robot_index + offset);
        b.labels.push(g.label);
    }
    b.features = Tensor::new(vec![total_nodes, width], features).expect("widths agree per variant");
    Ok(b)
}
