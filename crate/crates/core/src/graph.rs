//! Scenario-to-graph transformations.
//!
//! Two variants exist. The unlabelled one has an explicit node per
//! interaction and no edge types; the labelled one links interacting entities
//! directly and tags every edge with a [`Relation`] derived from the endpoint
//! types. Both add a self-loop to every node.
//!
//! Node order is robot, room, walls, humans, objects, then (unlabelled only)
//! interactions, each group in scenario order.
//!
//! Feature layout, unlabelled (24 columns):
//!
//! | cols    | content                                             |
//! |---------|-----------------------------------------------------|
//! | 0..6    | one-hot robot, room, wall, human, object, interaction |
//! | 6..11   | human: distance, sin/cos bearing, sin/cos orientation |
//! | 11..16  | object: same as human                               |
//! | 16..18  | room: distance to closest human, number of humans   |
//! | 18..21  | wall: distance, sin/cos tangent orientation         |
//! | 21..24  | interaction: distance, sin/cos src->dst orientation |
//!
//! The labelled layout (20 columns) drops the interaction one-hot and slots.
//! All geometry is expressed in the robot frame; bearing is
//! `atan2(y, x)` of the robot-frame position.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::numeric::Tensor;
use crate::scenario::{to_robot_frame, Point, Scenario, ScenarioError};

/// Distance reported by the room node when the scenario has no humans.
pub const NO_HUMAN_DISTANCE: f64 = 10.0;

/// Bumped whenever the feature layout changes; checkpoints record it.
pub const FEATURE_LAYOUT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Unlabelled,
    Labelled,
}

impl Variant {
    pub fn feature_width(self) -> usize {
        match self {
            Variant::Unlabelled => 24,
            Variant::Labelled => 20,
        }
    }

    pub fn layout_tag(self) -> String {
        format!(
            "v{FEATURE_LAYOUT_VERSION}-{}-{}",
            self.name(),
            self.feature_width()
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Unlabelled => "unlabelled",
            Variant::Labelled => "labelled",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unlabelled" => Ok(Variant::Unlabelled),
            "labelled" => Ok(Variant::Labelled),
            other => Err(format!(
                "unknown variant {other:?} (expected unlabelled or labelled)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeType {
    Robot,
    Room,
    Wall,
    Human,
    Object,
    Interaction,
}

impl NodeType {
    fn one_hot_slot(self) -> usize {
        self as usize
    }
}

/// Edge vocabulary of the labelled variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "self")]
    SelfLoop,
    #[serde(rename = "wall->room")]
    WallRoom,
    #[serde(rename = "room->robot")]
    RoomRobot,
    #[serde(rename = "human->robot")]
    HumanRobot,
    #[serde(rename = "object->robot")]
    ObjectRobot,
    #[serde(rename = "human->human")]
    HumanHuman,
    #[serde(rename = "human->object")]
    HumanObject,
    #[serde(rename = "object->human")]
    ObjectHuman,
}

impl Relation {
    pub const ALL: [Relation; 8] = [
        Relation::SelfLoop,
        Relation::WallRoom,
        Relation::RoomRobot,
        Relation::HumanRobot,
        Relation::ObjectRobot,
        Relation::HumanHuman,
        Relation::HumanObject,
        Relation::ObjectHuman,
    ];

    pub const COUNT: usize = Self::ALL.len();

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Relation> {
        Self::ALL.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Relation::SelfLoop => "self",
            Relation::WallRoom => "wall->room",
            Relation::RoomRobot => "room->robot",
            Relation::HumanRobot => "human->robot",
            Relation::ObjectRobot => "object->robot",
            Relation::HumanHuman => "human->human",
            Relation::HumanObject => "human->object",
            Relation::ObjectHuman => "object->human",
        }
    }

    /// Relation implied by the endpoint types, if the pair is in the vocabulary.
    pub fn between(src: NodeType, dst: NodeType) -> Option<Relation> {
        use NodeType::*;
        Some(match (src, dst) {
            (Wall, Room) => Relation::WallRoom,
            (Room, Robot) => Relation::RoomRobot,
            (Human, Robot) => Relation::HumanRobot,
            (Object, Robot) => Relation::ObjectRobot,
            (Human, Human) => Relation::HumanHuman,
            (Human, Object) => Relation::HumanObject,
            (Object, Human) => Relation::ObjectHuman,
            _ => return None,
        })
    }

    pub fn vocabulary() -> Vec<&'static str> {
        Self::ALL.iter().map(|r| r.name()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub variant: Variant,
    pub node_types: Vec<NodeType>,
    /// `N x d`, `d` = [`Variant::feature_width`].
    pub features: Tensor,
    /// `(source, destination)` pairs.
    pub edges: Vec<(usize, usize)>,
    /// One per edge in the labelled variant, empty otherwise.
    pub relations: Vec<Relation>,
    pub robot_index: usize,
    /// Scenario label divided by 100.
    pub label: Option<f64>,
}

impl Graph {
    pub fn num_nodes(&self) -> usize {
        self.node_types.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges other than the added self-loops.
    pub fn num_edges_without_self_loops(&self) -> usize {
        self.edges.iter().filter(|(s, r)| s != r).count()
    }

    /// Relabels node `i` as `perm[i]`, carrying types, features, edges and
    /// the robot index along. Edge order is preserved.
    pub fn permuted(&self, perm: &[usize]) -> Graph {
        let n = self.num_nodes();
        assert_eq!(perm.len(), n);
        let d = self.features.cols();
        let mut types = vec![NodeType::Robot; n];
        let mut feats = vec![0.0; n * d];
        for (old, &new) in perm.iter().enumerate() {
            types[new] = self.node_types[old];
            feats[new * d..(new + 1) * d].copy_from_slice(self.features.row(old));
        }
        Graph {
            variant: self.variant,
            node_types: types,
            features: Tensor::new(vec![n, d], feats).expect("same size"),
            edges: self
                .edges
                .iter()
                .map(|&(s, r)| (perm[s], perm[r]))
                .collect(),
            relations: self.relations.clone(),
            robot_index: perm[self.robot_index],
            label: self.label,
        }
    }

    pub fn to_dump(&self) -> GraphDump {
        GraphDump {
            variant: self.variant,
            robot_index: self.robot_index,
            label: self.label,
            nodes: self
                .node_types
                .iter()
                .enumerate()
                .map(|(i, &t)| NodeDump {
                    index: i,
                    node_type: t,
                    features: self.features.row(i).to_vec(),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .enumerate()
                .map(|(k, &(src, dst))| EdgeDump {
                    src,
                    dst,
                    relation: self.relations.get(k).copied(),
                })
                .collect(),
        }
    }

    /// Graphviz rendering for visual inspection. Self-loops are omitted.
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph scenario {\n");
        let mut counters = [0usize; 6];
        for (i, t) in self.node_types.iter().enumerate() {
            let c = &mut counters[*t as usize];
            *c += 1;
            let name = match t {
                NodeType::Robot => "robot".to_string(),
                NodeType::Room => "room".to_string(),
                NodeType::Wall => format!("w{c}"),
                NodeType::Human => format!("h{c}"),
                NodeType::Object => format!("o{c}"),
                NodeType::Interaction => format!("i{c}"),
            };
            let _ = writeln!(out, "  n{i} [label=\"{name}\"];");
        }
        for (k, &(s, r)) in self.edges.iter().enumerate() {
            if s == r {
                continue;
            }
            match self.relations.get(k) {
                Some(rel) => {
                    let _ = writeln!(out, "  n{s} -> n{r} [label=\"{}\"];", rel.name());
                }
                None => {
                    let _ = writeln!(out, "  n{s} -> n{r};");
                }
            }
        }
        out.push_str("}\n");
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphDump {
    pub variant: Variant,
    pub robot_index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<f64>,
    pub nodes: Vec<NodeDump>,
    pub edges: Vec<EdgeDump>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDump {
    pub index: usize,
    #[serde(rename = "type")]
    pub node_type: NodeType,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeDump {
    pub src: usize,
    pub dst: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relation: Option<Relation>,
}

pub fn encode_angle(alpha: f64) -> (f64, f64) {
    alpha.sin_cos()
}

/// A node of the graph being built, referring back into the scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRef {
    Robot,
    Room,
    Wall(usize),
    Human(usize),
    Object(usize),
    Interaction(usize),
}

impl NodeRef {
    pub fn node_type(self) -> NodeType {
        match self {
            NodeRef::Robot => NodeType::Robot,
            NodeRef::Room => NodeType::Room,
            NodeRef::Wall(_) => NodeType::Wall,
            NodeRef::Human(_) => NodeType::Human,
            NodeRef::Object(_) => NodeType::Object,
            NodeRef::Interaction(_) => NodeType::Interaction,
        }
    }
}

struct Layout {
    one_hot: usize,
    human: usize,
    object: usize,
    room: usize,
    wall: usize,
    interaction: Option<usize>,
    width: usize,
}

impl Layout {
    fn of(variant: Variant) -> Layout {
        let one_hot = match variant {
            Variant::Unlabelled => 6,
            Variant::Labelled => 5,
        };
        let human = one_hot;
        let object = human + 5;
        let room = object + 5;
        let wall = room + 2;
        let (interaction, width) = match variant {
            Variant::Unlabelled => (Some(wall + 3), wall + 6),
            Variant::Labelled => (None, wall + 3),
        };
        Layout {
            one_hot,
            human,
            object,
            room,
            wall,
            interaction,
            width,
        }
    }
}

/// Feature row of one node. `node` must refer to an element of `s`.
pub fn node_features(node: NodeRef, s: &Scenario, variant: Variant) -> Vec<f64> {
    let layout = Layout::of(variant);
    debug_assert_eq!(layout.width, variant.feature_width());
    let mut row = vec![0.0; layout.width];
    let slot = node.node_type().one_hot_slot();
    assert!(slot < layout.one_hot, "{node:?} has no slot in {variant:?}");
    row[slot] = 1.0;

    let robot = &s.robot;
    let local = |p: Point| to_robot_frame(p, robot);
    let mut put = |at: usize, values: &[f64]| row[at..at + values.len()].copy_from_slice(values);
    match node {
        NodeRef::Robot => {}
        NodeRef::Room => {
            let closest = s
                .humans
                .iter()
                .map(|h| local(h.pose.position()).norm())
                .fold(f64::INFINITY, f64::min);
            let closest = if closest.is_finite() {
                closest
            } else {
                NO_HUMAN_DISTANCE
            };
            put(layout.room, &[closest, s.humans.len() as f64]);
        }
        NodeRef::Human(i) | NodeRef::Object(i) => {
            let (e, at) = match node {
                NodeRef::Human(_) => (&s.humans[i], layout.human),
                _ => (&s.objects[i], layout.object),
            };
            let p = local(e.pose.position());
            let (sb, cb) = encode_angle(p.y.atan2(p.x));
            let (so, co) = encode_angle(e.pose.theta - robot.theta);
            put(at, &[p.norm(), sb, cb, so, co]);
        }
        NodeRef::Wall(i) => {
            let w = &s.walls[i];
            let p = local(w.center());
            let tangent = (w.p2.y - w.p1.y).atan2(w.p2.x - w.p1.x) - robot.theta;
            let (st, ct) = encode_angle(tangent);
            put(layout.wall, &[p.norm(), st, ct]);
        }
        NodeRef::Interaction(i) => {
            let at = layout
                .interaction
                .expect("interaction nodes exist only in the unlabelled variant");
            let inter = &s.interactions[i];
            let a = s
                .entity(inter.src_id)
                .expect("validated id")
                .pose
                .position();
            let b = s
                .entity(inter.dst_id)
                .expect("validated id")
                .pose
                .position();
            let p = local(a.midpoint(b));
            let orientation = (b.y - a.y).atan2(b.x - a.x) - robot.theta;
            let (so, co) = encode_angle(orientation);
            put(at, &[p.norm(), so, co]);
        }
    }
    row
}

struct Builder<'a> {
    s: &'a Scenario,
    variant: Variant,
    nodes: Vec<NodeRef>,
    edges: Vec<(usize, usize)>,
    relations: Vec<Relation>,
}

impl<'a> Builder<'a> {
    fn new(s: &'a Scenario, variant: Variant) -> Self {
        let mut nodes = vec![NodeRef::Robot, NodeRef::Room];
        nodes.extend((0..s.walls.len()).map(NodeRef::Wall));
        nodes.extend((0..s.humans.len()).map(NodeRef::Human));
        nodes.extend((0..s.objects.len()).map(NodeRef::Object));
        if variant == Variant::Unlabelled {
            nodes.extend((0..s.interactions.len()).map(NodeRef::Interaction));
        }
        Self {
            s,
            variant,
            nodes,
            edges: Vec::new(),
            relations: Vec::new(),
        }
    }

    fn index_of(&self, node: NodeRef) -> usize {
        self.nodes
            .iter()
            .position(|&n| n == node)
            .expect("node exists")
    }

    fn entity_node(&self, id: u64) -> NodeRef {
        if let Some(i) = self.s.humans.iter().position(|e| e.id == id) {
            NodeRef::Human(i)
        } else {
            NodeRef::Object(
                self.s
                    .objects
                    .iter()
                    .position(|e| e.id == id)
                    .expect("validated id"),
            )
        }
    }

    fn link(&mut self, src: NodeRef, dst: NodeRef) {
        let (s, r) = (self.index_of(src), self.index_of(dst));
        self.edges.push((s, r));
        if self.variant == Variant::Labelled {
            let rel = Relation::between(src.node_type(), dst.node_type())
                .expect("edge rules only produce vocabulary pairs");
            self.relations.push(rel);
        }
    }

    fn finish(mut self) -> Graph {
        for i in 0..self.nodes.len() {
            self.edges.push((i, i));
            if self.variant == Variant::Labelled {
                self.relations.push(Relation::SelfLoop);
            }
        }
        let d = self.variant.feature_width();
        let mut data = Vec::with_capacity(self.nodes.len() * d);
        for &n in &self.nodes {
            data.extend(node_features(n, self.s, self.variant));
        }
        Graph {
            variant: self.variant,
            node_types: self.nodes.iter().map(|n| n.node_type()).collect(),
            features: Tensor::new(vec![self.nodes.len(), d], data).expect("row widths match"),
            edges: self.edges,
            relations: self.relations,
            robot_index: 0,
            label: self.s.label.map(|l| l / 100.0),
        }
    }

    fn structural_edges(&mut self) {
        for w in 0..self.s.walls.len() {
            self.link(NodeRef::Wall(w), NodeRef::Room);
        }
        self.link(NodeRef::Room, NodeRef::Robot);
        for h in 0..self.s.humans.len() {
            self.link(NodeRef::Human(h), NodeRef::Robot);
        }
        for o in 0..self.s.objects.len() {
            self.link(NodeRef::Object(o), NodeRef::Robot);
        }
    }
}

/// Graph with one node per interaction and untyped edges.
pub fn build_graph_unlabelled(s: &Scenario) -> Result<Graph, ScenarioError> {
    s.validate()?;
    let mut b = Builder::new(s, Variant::Unlabelled);
    b.structural_edges();
    for (k, inter) in s.interactions.iter().enumerate() {
        let node = NodeRef::Interaction(k);
        let src = b.entity_node(inter.src_id);
        let dst = b.entity_node(inter.dst_id);
        b.link(src, node);
        b.link(dst, node);
        b.link(node, src);
        b.link(node, dst);
    }
    Ok(b.finish())
}

/// Graph with interacting entities linked directly and typed edges.
pub fn build_graph_labelled(s: &Scenario) -> Result<Graph, ScenarioError> {
    s.validate()?;
    let mut b = Builder::new(s, Variant::Labelled);
    b.structural_edges();
    for inter in &s.interactions {
        let src = b.entity_node(inter.src_id);
        let dst = b.entity_node(inter.dst_id);
        b.link(src, dst);
        b.link(dst, src);
    }
    Ok(b.finish())
}

pub fn build_graph(s: &Scenario, variant: Variant) -> Result<Graph, ScenarioError> {
    match variant {
        Variant::Unlabelled => build_graph_unlabelled(s),
        Variant::Labelled => build_graph_labelled(s),
    }
}
