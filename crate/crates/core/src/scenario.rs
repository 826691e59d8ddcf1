//! World-frame scenario model, its JSON document format and a synthetic
//! generator.
//!
//! Units are meters and radians; angles are counter-clockwise from world +x
//! and normalized to `(-pi, pi]`.
//!
//! Document layout (keys are always written in this order):
//!
//! ```text
//! {"robot":{"x":f,"y":f,"theta":f},
//!  "walls":[{"x1":f,"y1":f,"x2":f,"y2":f},...],
//!  "humans":[{"id":i,"x":f,"y":f,"theta":f},...],
//!  "objects":[{"id":i,"x":f,"y":f,"theta":f},...],
//!  "interactions":[{"src":i,"dst":i},...],
//!  "label":f}            // optional, 0..=100
//! ```

use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::Rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("generation error: {0}")]
    Generation(String),
}

type Result<T> = std::result::Result<T, ScenarioError>;

const CLOSURE_TOLERANCE: f64 = 1e-9;

/// Maps an angle into `(-pi, pi]`. Angles already in range are returned
/// unchanged so normalization is idempotent bit for bit.
pub fn normalize_angle(theta: f64) -> f64 {
    if theta > -PI && theta <= PI {
        theta
    } else {
        PI - (PI - theta).rem_euclid(2.0 * PI)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn midpoint(self, other: Point) -> Point {
        Point::new((self.x + other.x) / 2.0, (self.y + other.y) / 2.0)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn position(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// Expresses a world point in the frame of `robot`: translate by the robot
/// position, then rotate by `-theta`. The robot looks along its own +x.
pub fn to_robot_frame(p: Point, robot: &Pose2D) -> Point {
    let (dx, dy) = (p.x - robot.x, p.y - robot.y);
    let (s, c) = robot.theta.sin_cos();
    Point::new(c * dx + s * dy, -s * dx + c * dy)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EntityKind {
    Human,
    Object,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entity {
    pub id: u64,
    pub kind: EntityKind,
    pub pose: Pose2D,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallSegment {
    pub p1: Point,
    pub p2: Point,
}

impl WallSegment {
    pub fn center(&self) -> Point {
        self.p1.midpoint(self.p2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interaction {
    pub src_id: u64,
    pub dst_id: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub robot: Pose2D,
    pub walls: Vec<WallSegment>,
    pub humans: Vec<Entity>,
    pub objects: Vec<Entity>,
    pub interactions: Vec<Interaction>,
    /// Social compliance, 0 (worst) to 100 (fully compliant).
    pub label: Option<f64>,
}

impl Scenario {
    pub fn entity(&self, id: u64) -> Option<&Entity> {
        self.humans.iter().chain(&self.objects).find(|e| e.id == id)
    }

    /// World-frame midpoint of each interaction, in order.
    pub fn interaction_midpoints(&self) -> Vec<Point> {
        self.interactions
            .iter()
            .filter_map(|i| {
                let a = self.entity(i.src_id)?;
                let b = self.entity(i.dst_id)?;
                Some(a.pose.position().midpoint(b.pose.position()))
            })
            .collect()
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for w in &self.walls {
            for p in [w.p1, w.p2] {
                lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
                hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
            }
        }
        (lo, hi)
    }

    /// Even-odd point-in-polygon test against the wall loop.
    pub fn room_contains(&self, p: Point) -> bool {
        let mut inside = false;
        for w in &self.walls {
            let (a, b) = (w.p1, w.p2);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    pub fn with_robot(&self, robot: Pose2D) -> Scenario {
        Scenario {
            robot,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(ScenarioError::Validation(format!("{what} is not finite")))
            }
        };
        finite(self.robot.x, "robot.x")?;
        finite(self.robot.y, "robot.y")?;
        finite(self.robot.theta, "robot.theta")?;

        if self.walls.len() < 3 {
            return Err(ScenarioError::Validation(format!(
                "room needs at least 3 walls, got {}",
                self.walls.len()
            )));
        }
        for (i, w) in self.walls.iter().enumerate() {
            for v in [w.p1.x, w.p1.y, w.p2.x, w.p2.y] {
                finite(v, &format!("walls[{i}]"))?;
            }
            if w.p1 == w.p2 {
                return Err(ScenarioError::Validation(format!(
                    "walls[{i}] has identical endpoints"
                )));
            }
            let next = &self.walls[(i + 1) % self.walls.len()];
            if w.p2.distance(next.p1) > CLOSURE_TOLERANCE {
                return Err(ScenarioError::Validation(format!(
                    "walls[{i}] does not connect to walls[{}]: room polygon is open",
                    (i + 1) % self.walls.len()
                )));
            }
        }

        let mut kinds = HashMap::new();
        for (kind, list, name) in [
            (EntityKind::Human, &self.humans, "humans"),
            (EntityKind::Object, &self.objects, "objects"),
        ] {
            for (i, e) in list.iter().enumerate() {
                if e.kind != kind {
                    return Err(ScenarioError::Validation(format!(
                        "{name}[{i}] has kind {:?}",
                        e.kind
                    )));
                }
                for v in [e.pose.x, e.pose.y, e.pose.theta] {
                    finite(v, &format!("{name}[{i}]"))?;
                }
                if kinds.insert(e.id, kind).is_some() {
                    return Err(ScenarioError::Validation(format!("duplicate id {}", e.id)));
                }
            }
        }

        for (i, inter) in self.interactions.iter().enumerate() {
            for id in [inter.src_id, inter.dst_id] {
                if !kinds.contains_key(&id) {
                    return Err(ScenarioError::Validation(format!(
                        "interactions[{i}]: unknown id {id}"
                    )));
                }
            }
            if kinds[&inter.src_id] != EntityKind::Human {
                return Err(ScenarioError::Validation(format!(
                    "interactions[{i}]: source {} is not a human",
                    inter.src_id
                )));
            }
            if inter.src_id == inter.dst_id {
                return Err(ScenarioError::Validation(format!(
                    "interactions[{i}]: id {} interacts with itself",
                    inter.src_id
                )));
            }
        }

        if let Some(label) = self.label {
            if !(0.0..=100.0).contains(&label) {
                return Err(ScenarioError::Validation(format!(
                    "label {label} outside [0, 100]"
                )));
            }
        }
        Ok(())
    }
}

mod doc {
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Robot {
        pub x: f64,
        pub y: f64,
        pub theta: f64,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Wall {
        pub x1: f64,
        pub y1: f64,
        pub x2: f64,
        pub y2: f64,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Entity {
        pub id: u64,
        pub x: f64,
        pub y: f64,
        pub theta: f64,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Interaction {
        pub src: u64,
        pub dst: u64,
    }

    #[derive(Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Scenario {
        pub robot: Robot,
        pub walls: Vec<Wall>,
        pub humans: Vec<Entity>,
        pub objects: Vec<Entity>,
        pub interactions: Vec<Interaction>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub label: Option<f64>,
    }
}

impl From<doc::Scenario> for Scenario {
    fn from(d: doc::Scenario) -> Self {
        let entity = |e: doc::Entity, kind| Entity {
            id: e.id,
            kind,
            pose: Pose2D::new(e.x, e.y, e.theta),
        };
        Scenario {
            robot: Pose2D::new(d.robot.x, d.robot.y, d.robot.theta),
            walls: d
                .walls
                .into_iter()
                .map(|w| WallSegment {
                    p1: Point::new(w.x1, w.y1),
                    p2: Point::new(w.x2, w.y2),
                })
                .collect(),
            humans: d
                .humans
                .into_iter()
                .map(|e| entity(e, EntityKind::Human))
                .collect(),
            objects: d
                .objects
                .into_iter()
                .map(|e| entity(e, EntityKind::Object))
                .collect(),
            interactions: d
                .interactions
                .into_iter()
                .map(|i| Interaction {
                    src_id: i.src,
                    dst_id: i.dst,
                })
                .collect(),
            label: d.label,
        }
    }
}

impl From<&Scenario> for doc::Scenario {
    fn from(s: &Scenario) -> Self {
        let entity = |e: &Entity| doc::Entity {
            id: e.id,
            x: e.pose.x,
            y: e.pose.y,
            theta: e.pose.theta,
        };
        doc::Scenario {
            robot: doc::Robot {
                x: s.robot.x,
                y: s.robot.y,
                theta: s.robot.theta,
            },
            walls: s
                .walls
                .iter()
                .map(|w| doc::Wall {
                    x1: w.p1.x,
                    y1: w.p1.y,
                    x2: w.p2.x,
                    y2: w.p2.y,
                })
                .collect(),
            humans: s.humans.iter().map(entity).collect(),
            objects: s.objects.iter().map(entity).collect(),
            interactions: s
                .interactions
                .iter()
                .map(|i| doc::Interaction {
                    src: i.src_id,
                    dst: i.dst_id,
                })
                .collect(),
            label: s.label,
        }
    }
}

/// Parses and validates one scenario document.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: doc::Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ScenarioError::Parse {
            path,
            message: e.into_inner().to_string(),
        }
    })?;
    let s = Scenario::from(raw);
    s.validate()?;
    Ok(s)
}

/// Compact single-line JSON in the fixed key order.
pub fn serialize_scenario(s: &Scenario) -> String {
    serde_json::to_string(&doc::Scenario::from(s)).expect("plain data serializes")
}

/// Parses a `.jsonl` dataset: one document per non-blank line.
pub fn parse_jsonl(text: &str) -> Result<Vec<Scenario>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            parse_scenario(line).map_err(|e| match e {
                ScenarioError::Parse { path, message } => ScenarioError::Parse {
                    path: format!("line {}: {path}", n + 1),
                    message,
                },
                ScenarioError::Validation(m) => {
                    ScenarioError::Validation(format!("line {}: {m}", n + 1))
                }
                other => other,
            })
        })
        .collect()
}

pub fn serialize_jsonl(scenarios: &[Scenario]) -> String {
    let mut out = String::new();
    for s in scenarios {
        out.push_str(&serialize_scenario(s));
        out.push('\n');
    }
    out
}

/// Distance at and beyond which the proxy label saturates at 100.
pub const PROXY_COMFORT_DISTANCE: f64 = 2.0;

/// Analytic stand-in for a human judgment: `100 * min(1, d / 2)` where `d` is
/// the robot's distance to the nearest human or interaction midpoint.
/// Scenarios without humans score 100.
pub fn proxy_label(s: &Scenario) -> f64 {
    let robot = s.robot.position();
    let d_min = s
        .humans
        .iter()
        .map(|h| h.pose.position())
        .chain(s.interaction_midpoints())
        .map(|p| robot.distance(p))
        .fold(f64::INFINITY, f64::min);
    if d_min.is_infinite() {
        return 100.0;
    }
    (100.0 * (d_min / PROXY_COMFORT_DISTANCE).min(1.0)).clamp(0.0, 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub min_humans: usize,
    pub max_humans: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Side-length range of the rectangular room, meters.
    pub min_room_side: f64,
    pub max_room_side: f64,
    /// Chance that a given human starts an interaction.
    pub interaction_prob: f64,
    /// Minimum distance between any two humans or objects.
    pub min_separation: f64,
    /// Clearance kept between entities and the walls.
    pub wall_margin: f64,
    pub max_retries: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            min_humans: 0,
            max_humans: 4,
            min_objects: 0,
            max_objects: 3,
            min_room_side: 4.0,
            max_room_side: 8.0,
            interaction_prob: 0.5,
            min_separation: 0.6,
            wall_margin: 0.25,
            max_retries: 1000,
        }
    }
}

impl SynthConfig {
    fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(ScenarioError::Generation(m.to_string()));
        if self.min_humans > self.max_humans || self.min_objects > self.max_objects {
            return bad("count range has min above max");
        }
        if !(self.min_room_side > 0.0 && self.max_room_side >= self.min_room_side) {
            return bad("room side range must be positive and ordered");
        }
        if self.min_room_side <= 2.0 * self.wall_margin {
            return bad("room too small for the wall margin");
        }
        if !(0.0..=1.0).contains(&self.interaction_prob) {
            return bad("interaction probability outside [0, 1]");
        }
        Ok(())
    }
}

/// Random rectangular-room scenario labelled with [`proxy_label`].
///
/// The room is axis-aligned and centered on the origin. Humans and objects
/// keep `min_separation` from each other; the robot is placed freely.
pub fn generate_synthetic(seed: u64, cfg: &SynthConfig) -> Result<Scenario> {
    cfg.check()?;
    let mut rng = Rng::new(seed);
    let width = rng.range(cfg.min_room_side, cfg.max_room_side);
    let depth = rng.range(cfg.min_room_side, cfg.max_room_side);
    let (hx, hy) = (width / 2.0, depth / 2.0);
    let corners = [
        Point::new(-hx, -hy),
        Point::new(hx, -hy),
        Point::new(hx, hy),
        Point::new(-hx, hy),
    ];
    let walls = (0..4)
        .map(|i| WallSegment {
            p1: corners[i],
            p2: corners[(i + 1) % 4],
        })
        .collect();

    let (mx, my) = (hx - cfg.wall_margin, hy - cfg.wall_margin);
    let random_pose =
        |rng: &mut Rng| Pose2D::new(rng.range(-mx, mx), rng.range(-my, my), rng.range(-PI, PI));
    let robot = random_pose(&mut rng);

    let n_humans = rng.int_inclusive(cfg.min_humans as i64, cfg.max_humans as i64) as usize;
    let n_objects = rng.int_inclusive(cfg.min_objects as i64, cfg.max_objects as i64) as usize;
    let mut placed: Vec<Entity> = Vec::with_capacity(n_humans + n_objects);
    for k in 0..n_humans + n_objects {
        let kind = if k < n_humans {
            EntityKind::Human
        } else {
            EntityKind::Object
        };
        let mut attempt = 0;
        let pose = loop {
            let pose = random_pose(&mut rng);
            let clear = placed
                .iter()
                .all(|e| e.pose.position().distance(pose.position()) >= cfg.min_separation);
            if clear {
                break pose;
            }
            attempt += 1;
            if attempt >= cfg.max_retries {
                return Err(ScenarioError::Generation(format!(
                    "could not place entity {k} after {attempt} attempts"
                )));
            }
        };
        placed.push(Entity {
            id: k as u64,
            kind,
            pose,
        });
    }
    let objects = placed.split_off(n_humans);
    let humans = placed;

    let mut interactions = Vec::new();
    let mut seen = HashSet::new();
    let partners = humans.len() + objects.len();
    for h in &humans {
        if partners < 2 || !rng.bernoulli(cfg.interaction_prob) {
            continue;
        }
        let mut pick = rng.below(partners as u64 - 1);
        if pick >= h.id {
            pick += 1;
        }
        let key = (h.id.min(pick), h.id.max(pick));
        if seen.insert(key) {
            interactions.push(Interaction {
                src_id: h.id,
                dst_id: pick,
            });
        }
    }

    let mut s = Scenario {
        robot,
        walls,
        humans,
        objects,
        interactions,
        label: None,
    };
    s.label = Some(proxy_label(&s));
    s.validate()?;
    Ok(s)
}
