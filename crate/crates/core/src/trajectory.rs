//! Timestamped agent positions and their CSV form.
//!
//! CSV layout: header `t_s,agent_id,x_mm,y_mm,is_robot`, one row per agent
//! per frame, frames in time order, `is_robot` written as `0`/`1`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arena::Point;

pub const CSV_HEADER: [&str; 5] = ["t_s", "agent_id", "x_mm", "y_mm", "is_robot"];
const PERIOD_TOLERANCE: f64 = 1e-6;
/// Frame period assumed when a CSV holds a single frame.
pub const DEFAULT_FRAME_PERIOD: f64 = 0.2;

#[derive(Debug, Error)]
pub enum TrajectoryError {
    #[error("frame period must be positive and finite, got {0}")]
    Period(f64),
    #[error("agent_ids and robot_flags lengths differ ({0} vs {1})")]
    AgentMeta(usize, usize),
    #[error("frame at t={t} has {got} agents, expected {expected}")]
    AgentCount { t: f64, got: usize, expected: usize },
    #[error("timestamps must increase by the frame period: {prev} -> {next} (period {period})")]
    Timing { prev: f64, next: f64, period: f64 },
    #[error("batches cannot be joined: {0}")]
    Join(String),
    #[error("malformed trajectory CSV: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for TrajectoryError {
    fn from(e: csv::Error) -> Self {
        TrajectoryError::Csv(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t: f64,
    pub positions: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBatch", into = "RawBatch")]
pub struct TrajectoryBatch {
    frame_period: f64,
    agent_ids: Vec<u32>,
    robot_flags: Vec<bool>,
    frames: Vec<Frame>,
}

#[derive(Serialize, Deserialize)]
struct RawBatch {
    frame_period: f64,
    agent_ids: Vec<u32>,
    robot_flags: Vec<bool>,
    frames: Vec<Frame>,
}

impl TryFrom<RawBatch> for TrajectoryBatch {
    type Error = TrajectoryError;

    fn try_from(r: RawBatch) -> Result<Self, Self::Error> {
        TrajectoryBatch::new(r.frame_period, r.agent_ids, r.robot_flags, r.frames)
    }
}

impl From<TrajectoryBatch> for RawBatch {
    fn from(b: TrajectoryBatch) -> Self {
        RawBatch { frame_period: b.frame_period, agent_ids: b.agent_ids, robot_flags: b.robot_flags, frames: b.frames }
    }
}

impl TrajectoryBatch {
    pub fn new(
        frame_period: f64,
        agent_ids: Vec<u32>,
        robot_flags: Vec<bool>,
        frames: Vec<Frame>,
    ) -> Result<Self, TrajectoryError> {
        if !(frame_period > 0.0 && frame_period.is_finite()) {
            return Err(TrajectoryError::Period(frame_period));
        }
        if agent_ids.len() != robot_flags.len() {
            return Err(TrajectoryError::AgentMeta(agent_ids.len(), robot_flags.len()));
        }
        for f in &frames {
            if f.positions.len() != agent_ids.len() {
                return Err(TrajectoryError::AgentCount { t: f.t, got: f.positions.len(), expected: agent_ids.len() });
            }
        }
        for w in frames.windows(2) {
            check_step(w[0].t, w[1].t, frame_period)?;
        }
        Ok(TrajectoryBatch { frame_period, agent_ids, robot_flags, frames })
    }

    pub fn frame_period(&self) -> f64 {
        self.frame_period
    }

    pub fn agent_ids(&self) -> &[u32] {
        &self.agent_ids
    }

    pub fn robot_flags(&self) -> &[bool] {
        &self.robot_flags
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn agent_count(&self) -> usize {
        self.agent_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn start_time(&self) -> Option<f64> {
        self.frames.first().map(|f| f.t)
    }

    /// Time just past the last frame (`last.t + frame_period`).
    pub fn end_time(&self) -> Option<f64> {
        self.frames.last().map(|f| f.t + self.frame_period)
    }

    /// Concatenates consecutive batches of the same agents.
    pub fn concat(batches: &[&TrajectoryBatch]) -> Result<TrajectoryBatch, TrajectoryError> {
        let first = batches.first().ok_or_else(|| TrajectoryError::Join("no batches".into()))?;
        let mut frames: Vec<Frame> = Vec::with_capacity(batches.iter().map(|b| b.frames.len()).sum());
        for b in batches {
            if b.agent_ids != first.agent_ids || b.robot_flags != first.robot_flags {
                return Err(TrajectoryError::Join("agent sets differ".into()));
            }
            if (b.frame_period - first.frame_period).abs() > PERIOD_TOLERANCE {
                return Err(TrajectoryError::Join("frame periods differ".into()));
            }
            frames.extend(b.frames.iter().cloned());
        }
        TrajectoryBatch::new(first.frame_period, first.agent_ids.clone(), first.robot_flags.clone(), frames)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), TrajectoryError> {
        let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        out.write_record(CSV_HEADER)?;
        for f in &self.frames {
            let t = f.t.to_string();
            for ((id, p), robot) in self.agent_ids.iter().zip(&f.positions).zip(&self.robot_flags) {
                out.write_record([
                    t.as_str(),
                    &id.to_string(),
                    &p.x.to_string(),
                    &p.y.to_string(),
                    if *robot { "1" } else { "0" },
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<TrajectoryBatch, TrajectoryError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
            return Err(TrajectoryError::Csv(format!("unexpected header {:?}", headers)));
        }
        let mut agent_ids: Vec<u32> = Vec::new();
        let mut robot_flags: Vec<bool> = Vec::new();
        let mut frames: Vec<Frame> = Vec::new();
        let mut current: Option<PendingFrame> = None;
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 5 {
                return Err(TrajectoryError::Csv(format!("row {} has {} fields", line + 2, rec.len())));
            }
            let field = |i: usize| rec.get(i).unwrap_or("").trim();
            let bad = |what: &str| TrajectoryError::Csv(format!("row {}: bad {what}", line + 2));
            let t: f64 = field(0).parse().map_err(|_| bad("t_s"))?;
            let id: u32 = field(1).parse().map_err(|_| bad("agent_id"))?;
            let x: f64 = field(2).parse().map_err(|_| bad("x_mm"))?;
            let y: f64 = field(3).parse().map_err(|_| bad("y_mm"))?;
            let robot = match field(4) {
                "1" | "true" => true,
                "0" | "false" => false,
                _ => return Err(bad("is_robot")),
            };
            if !(t.is_finite() && x.is_finite() && y.is_finite()) {
                return Err(bad("non-finite value"));
            }
            let same_frame = matches!(&current, Some((ct, _, _)) if *ct == t);
            if !same_frame {
                if let Some(cur) = current.take() {
                    flush(cur, &mut agent_ids, &mut frames)?;
                }
                current = Some((t, Vec::new(), Vec::new()));
            }
            let (_, ids, positions) = current.as_mut().expect("frame started");
            if frames.is_empty() {
                robot_flags.push(robot);
            } else if robot_flags.get(ids.len()) != Some(&robot) {
                return Err(TrajectoryError::Csv(format!("row {}: robot flag changed for agent {id}", line + 2)));
            }
            ids.push(id);
            positions.push(Point::new(x, y));
        }
        if let Some(cur) = current.take() {
            flush(cur, &mut agent_ids, &mut frames)?;
        }
        let period = match frames.as_slice() {
            [a, b, ..] => b.t - a.t,
            _ => DEFAULT_FRAME_PERIOD,
        };
        TrajectoryBatch::new(period, agent_ids, robot_flags, frames)
    }
}

type PendingFrame = (f64, Vec<u32>, Vec<Point>);

fn flush(cur: PendingFrame, agent_ids: &mut Vec<u32>, frames: &mut Vec<Frame>) -> Result<(), TrajectoryError> {
    let (t, ids, positions) = cur;
    if frames.is_empty() && agent_ids.is_empty() {
        *agent_ids = ids;
    } else if ids != *agent_ids {
        return Err(TrajectoryError::Csv(format!("frame at t={t} lists agents {ids:?}, expected {agent_ids:?}")));
    }
    frames.push(Frame { t, positions });
    Ok(())
}

fn check_step(prev: f64, next: f64, period: f64) -> Result<(), TrajectoryError> {
    if next <= prev || ((next - prev) - period).abs() > PERIOD_TOLERANCE {
        return Err(TrajectoryError::Timing { prev, next, period });
    }
    Ok(())
}

/// Frame timestamp rounded to the microsecond so CSVs stay readable.
pub fn frame_time(index: u64, dt: f64) -> f64 {
    (index as f64 * dt * 1e6).round() / 1e6
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(n: usize) -> TrajectoryBatch {
        let frames = (0..n)
            .map(|k| Frame {
                t: frame_time(k as u64, 0.2),
                positions: vec![Point::new(k as f64, 1.5), Point::new(100.25, k as f64 / 3.0)],
            })
            .collect();
        TrajectoryBatch::new(0.2, vec![0, 1], vec![false, true], frames).unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let b = batch(7);
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t_s,agent_id,x_mm,y_mm,is_robot\n"));
        assert_eq!(text.lines().count(), 1 + 7 * 2);
        assert!(!text.contains('\r'));
        let back = TrajectoryBatch::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn rejects_irregular_timing() {
        let mut frames = batch(3).frames().to_vec();
        frames[2].t = 0.5;
        assert!(matches!(
            TrajectoryBatch::new(0.2, vec![0, 1], vec![false, true], frames),
            Err(TrajectoryError::Timing { .. })
        ));
    }

    #[test]
    fn rejects_changing_agent_count() {
        let mut frames = batch(3).frames().to_vec();
        frames[1].positions.pop();
        assert!(matches!(
            TrajectoryBatch::new(0.2, vec![0, 1], vec![false, true], frames),
            Err(TrajectoryError::AgentCount { .. })
        ));
    }

    #[test]
    fn concat_requires_continuity() {
        let all = batch(10);
        let a = TrajectoryBatch::new(0.2, vec![0, 1], vec![false, true], all.frames()[..4].to_vec()).unwrap();
        let b = TrajectoryBatch::new(0.2, vec![0, 1], vec![false, true], all.frames()[4..].to_vec()).unwrap();
        assert_eq!(TrajectoryBatch::concat(&[&a, &b]).unwrap(), all);
        assert!(TrajectoryBatch::concat(&[&b, &a]).is_err());
    }

    #[test]
    fn malformed_csv_is_reported() {
        let text = "t_s,agent_id,x_mm,y_mm,is_robot\n0,0,1.0,2.0,0\n0,1,abc,2.0,0\n";
        assert!(matches!(TrajectoryBatch::read_csv(text.as_bytes()), Err(TrajectoryError::Csv(_))));
        let text = "t,agent,x,y\n";
        assert!(TrajectoryBatch::read_csv(text.as_bytes()).is_err());
    }
}
