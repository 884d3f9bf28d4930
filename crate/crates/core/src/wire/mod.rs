//! Messages exchanged between the three node roles and the transports that
//! carry them.
//!
//! Every message is an [`Envelope`] encoded as one line of JSON:
//!
//! ```text
//! {"topic":"params","schema_version":1,"experiment_id":"e1","t_sim_s":180.0,"payload":{...}}
//! ```
//!
//! Delivery is at-most-once per subscriber and in publication order per
//! publisher. Receivers keep their last known value when a message is lost.

mod bus;
mod tcp;

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use thiserror::Error;

use crate::model::{Genome, GenomeBounds, GENOME_LEN};
use crate::stats::{BehaviorStats, SimilarityReport};
use crate::trajectory::TrajectoryBatch;

pub use bus::{InProcBus, InProcLink};
pub use tcp::{SocketEndpoints, TcpLink};

pub const SCHEMA_VERSION: u32 = 1;
/// Capacity of every receive queue; the oldest message is dropped first.
pub const QUEUE_CAPACITY: usize = 64;

#[derive(Debug, Error)]
pub enum WireError {
    #[error("malformed message: {0}")]
    MalformedMessage(String),
    #[error("schema version {got} is not supported (expected {expected})")]
    VersionMismatch { got: u64, expected: u32 },
    #[error("unknown topic {0:?}")]
    UnknownTopic(String),
    #[error("{role} may not publish {topic}")]
    TopologyViolation { role: NodeRole, topic: Topic },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topic {
    Trajectory,
    Scores,
    Params,
    Ack,
    Shutdown,
}

impl Topic {
    pub const ALL: [Topic; 5] = [Topic::Trajectory, Topic::Scores, Topic::Params, Topic::Ack, Topic::Shutdown];

    pub fn as_str(self) -> &'static str {
        match self {
            Topic::Trajectory => "trajectory",
            Topic::Scores => "scores",
            Topic::Params => "params",
            Topic::Ack => "ack",
            Topic::Shutdown => "shutdown",
        }
    }

    pub fn parse(s: &str) -> Option<Topic> {
        Topic::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Controller,
    Analyst,
    Calibrator,
}

impl NodeRole {
    pub const ALL: [NodeRole; 3] = [NodeRole::Controller, NodeRole::Analyst, NodeRole::Calibrator];

    pub fn as_str(self) -> &'static str {
        match self {
            NodeRole::Controller => "controller",
            NodeRole::Analyst => "analyst",
            NodeRole::Calibrator => "calibrator",
        }
    }

    pub fn publishes(self) -> &'static [Topic] {
        match self {
            NodeRole::Controller => &[Topic::Trajectory, Topic::Shutdown],
            NodeRole::Analyst => &[Topic::Scores, Topic::Ack, Topic::Shutdown],
            NodeRole::Calibrator => &[Topic::Params, Topic::Shutdown],
        }
    }

    pub fn subscribes(self) -> &'static [Topic] {
        match self {
            NodeRole::Controller => &[Topic::Params, Topic::Ack, Topic::Shutdown],
            NodeRole::Analyst => &[Topic::Trajectory, Topic::Shutdown],
            NodeRole::Calibrator => &[Topic::Scores, Topic::Shutdown],
        }
    }

    pub fn may_publish(self, topic: Topic) -> bool {
        self.publishes().contains(&topic)
    }

    pub fn wants(self, topic: Topic) -> bool {
        self.subscribes().contains(&topic)
    }

    /// The role whose data this role consumes; its shutdown ends this role.
    pub fn upstream(self) -> NodeRole {
        match self {
            NodeRole::Controller => NodeRole::Calibrator,
            NodeRole::Analyst => NodeRole::Controller,
            NodeRole::Calibrator => NodeRole::Analyst,
        }
    }
}

impl fmt::Display for NodeRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for NodeRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NodeRole::ALL.into_iter().find(|r| r.as_str() == s).ok_or_else(|| format!("unknown role {s:?}"))
    }
}

/// One reporting period of frames from the controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMsg {
    /// 1-based.
    pub batch_index: u32,
    pub batch: TrajectoryBatch,
}

/// The analyst's view of one window: fish-only statistics and the score of
/// the fish-plus-robot group against them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoresMsg {
    /// 1-based.
    pub window_index: u32,
    pub t_start_s: f64,
    pub t_end_s: f64,
    pub control: BehaviorStats,
    pub integration: SimilarityReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamsMsg {
    /// 1-based calibration round that produced the genome.
    pub round: u32,
    pub genome: [f64; GENOME_LEN],
    pub best_s: f64,
}

impl ParamsMsg {
    pub fn genome(&self) -> Genome {
        Genome(self.genome)
    }

    pub fn within(&self, bounds: &GenomeBounds) -> bool {
        bounds.contains(&self.genome())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AckMsg {
    pub batch_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShutdownMsg {
    pub origin: NodeRole,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Trajectory(TrajectoryMsg),
    Scores(Box<ScoresMsg>),
    Params(ParamsMsg),
    Ack(AckMsg),
    Shutdown(ShutdownMsg),
}

impl Payload {
    pub fn topic(&self) -> Topic {
        match self {
            Payload::Trajectory(_) => Topic::Trajectory,
            Payload::Scores(_) => Topic::Scores,
            Payload::Params(_) => Topic::Params,
            Payload::Ack(_) => Topic::Ack,
            Payload::Shutdown(_) => Topic::Shutdown,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub schema_version: u32,
    pub experiment_id: String,
    pub t_sim_s: f64,
    pub payload: Payload,
}

impl Envelope {
    pub fn new(experiment_id: impl Into<String>, t_sim_s: f64, payload: Payload) -> Self {
        Envelope { schema_version: SCHEMA_VERSION, experiment_id: experiment_id.into(), t_sim_s, payload }
    }

    pub fn topic(&self) -> Topic {
        self.payload.topic()
    }
}

#[derive(Serialize)]
struct OutFrame<'a, P: Serialize> {
    topic: Topic,
    schema_version: u32,
    experiment_id: &'a str,
    t_sim_s: f64,
    payload: &'a P,
}

#[derive(Deserialize)]
struct InFrame<'a> {
    topic: String,
    experiment_id: String,
    t_sim_s: f64,
    #[serde(borrow)]
    payload: &'a RawValue,
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: serde_json::Value,
}

/// Serialises `msg` as one LF-terminated JSON line.
pub fn encode(msg: &Envelope) -> Vec<u8> {
    fn frame<P: Serialize>(msg: &Envelope, payload: &P) -> Vec<u8> {
        let out = OutFrame {
            topic: msg.topic(),
            schema_version: msg.schema_version,
            experiment_id: &msg.experiment_id,
            t_sim_s: msg.t_sim_s,
            payload,
        };
        let mut bytes = serde_json::to_vec(&out).expect("messages serialise");
        bytes.push(b'\n');
        bytes
    }
    match &msg.payload {
        Payload::Trajectory(p) => frame(msg, p),
        Payload::Scores(p) => frame(msg, p),
        Payload::Params(p) => frame(msg, p),
        Payload::Ack(p) => frame(msg, p),
        Payload::Shutdown(p) => frame(msg, p),
    }
}

/// Parses one encoded message. A trailing LF is optional.
pub fn decode(bytes: &[u8]) -> Result<Envelope, WireError> {
    let malformed = |e: serde_json::Error| WireError::MalformedMessage(e.to_string());
    let text = bytes.strip_suffix(b"\n").unwrap_or(bytes);
    let probe: VersionProbe = serde_json::from_slice(text).map_err(malformed)?;
    let version = probe
        .schema_version
        .as_u64()
        .ok_or_else(|| WireError::MalformedMessage("schema_version is not an unsigned integer".into()))?;
    if version != u64::from(SCHEMA_VERSION) {
        return Err(WireError::VersionMismatch { got: version, expected: SCHEMA_VERSION });
    }
    let frame: InFrame<'_> = serde_json::from_slice(text).map_err(malformed)?;
    let topic = Topic::parse(&frame.topic).ok_or_else(|| WireError::UnknownTopic(frame.topic.clone()))?;
    let body = frame.payload.get();
    let payload = match topic {
        Topic::Trajectory => Payload::Trajectory(serde_json::from_str(body).map_err(malformed)?),
        Topic::Scores => Payload::Scores(serde_json::from_str(body).map_err(malformed)?),
        Topic::Params => Payload::Params(serde_json::from_str(body).map_err(malformed)?),
        Topic::Ack => Payload::Ack(serde_json::from_str(body).map_err(malformed)?),
        Topic::Shutdown => Payload::Shutdown(serde_json::from_str(body).map_err(malformed)?),
    };
    if !frame.t_sim_s.is_finite() {
        return Err(WireError::MalformedMessage("t_sim_s is not finite".into()));
    }
    Ok(Envelope { schema_version: SCHEMA_VERSION, experiment_id: frame.experiment_id, t_sim_s: frame.t_sim_s, payload })
}

/// A node's connection to the others: publish under its role's topics,
/// receive the topics it subscribes to.
pub trait Link: Send {
    fn role(&self) -> NodeRole;

    /// Sends `msg` to every current subscriber of its topic. Publishing a
    /// topic outside the role's contract is rejected.
    fn publish(&mut self, msg: &Envelope) -> Result<(), WireError>;

    /// Next message, waiting at most `timeout`; `None` on timeout.
    fn recv_timeout(&mut self, timeout: Duration) -> Result<Option<Envelope>, WireError>;

    fn try_recv(&mut self) -> Result<Option<Envelope>, WireError> {
        self.recv_timeout(Duration::ZERO)
    }
}

impl Link for Box<dyn Link> {
    fn role(&self) -> NodeRole {
        (**self).role()
    }

    fn publish(&mut self, msg: &Envelope) -> Result<(), WireError> {
        (**self).publish(msg)
    }

    fn recv_timeout(&mut self, timeout: Duration) -> Result<Option<Envelope>, WireError> {
        (**self).recv_timeout(timeout)
    }
}

fn check_topology(role: NodeRole, topic: Topic) -> Result<(), WireError> {
    if role.may_publish(topic) {
        Ok(())
    } else {
        Err(WireError::TopologyViolation { role, topic })
    }
}
