//! In-process transport: one bounded inbox per role.

use std::collections::{BTreeSet, VecDeque};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use super::{check_topology, decode, encode, Envelope, Link, NodeRole, Topic, WireError, QUEUE_CAPACITY};

#[derive(Debug, Default)]
pub(super) struct Inbox {
    queue: Mutex<VecDeque<Vec<u8>>>,
    ready: Condvar,
}

impl Inbox {
    /// Appends `bytes`, dropping the oldest entry when full.
    pub(super) fn push(&self, bytes: Vec<u8>, owner: NodeRole) {
        let mut q = self.queue.lock().expect("inbox lock");
        if q.len() >= QUEUE_CAPACITY {
            q.pop_front();
            log::warn!("{owner} inbox full, dropped the oldest message");
        }
        q.push_back(bytes);
        self.ready.notify_one();
    }

    pub(super) fn pop_timeout(&self, timeout: Duration) -> Option<Vec<u8>> {
        let deadline = Instant::now() + timeout;
        let mut q = self.queue.lock().expect("inbox lock");
        loop {
            if let Some(b) = q.pop_front() {
                return Some(b);
            }
            let now = Instant::now();
            if now >= deadline {
                return None;
            }
            q = self.ready.wait_timeout(q, deadline - now).expect("inbox lock").0;
        }
    }
}

#[derive(Debug, Default)]
struct Shared {
    inboxes: [Inbox; 3],
    blocked: Mutex<BTreeSet<Topic>>,
    published: Mutex<Vec<(NodeRole, Topic)>>,
}

/// Hub for nodes running in one process. Messages still go through
/// [`encode`]/[`decode`].
#[derive(Debug, Clone, Default)]
pub struct InProcBus {
    shared: Arc<Shared>,
}

impl InProcBus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn link(&self, role: NodeRole) -> InProcLink {
        InProcLink { role, shared: Arc::clone(&self.shared) }
    }

    /// Silently discards every future message on `topic`.
    pub fn block_topic(&self, topic: Topic) {
        self.shared.blocked.lock().expect("bus lock").insert(topic);
    }

    /// Every accepted publication so far, in order.
    pub fn published(&self) -> Vec<(NodeRole, Topic)> {
        self.shared.published.lock().expect("bus lock").clone()
    }
}

#[derive(Debug)]
pub struct InProcLink {
    role: NodeRole,
    shared: Arc<Shared>,
}

fn slot(role: NodeRole) -> usize {
    match role {
        NodeRole::Controller => 0,
        NodeRole::Analyst => 1,
        NodeRole::Calibrator => 2,
    }
}

impl Link for InProcLink {
    fn role(&self) -> NodeRole {
        self.role
    }

    fn publish(&mut self, msg: &Envelope) -> Result<(), WireError> {
        let topic = msg.topic();
        check_topology(self.role, topic)?;
        self.shared.published.lock().expect("bus lock").push((self.role, topic));
        if self.shared.blocked.lock().expect("bus lock").contains(&topic) {
            return Ok(());
        }
        let bytes = encode(msg);
        for dest in NodeRole::ALL {
            if dest != self.role && dest.wants(topic) {
                self.shared.inboxes[slot(dest)].push(bytes.clone(), dest);
            }
        }
        Ok(())
    }

    fn recv_timeout(&mut self, timeout: Duration) -> Result<Option<Envelope>, WireError> {
        match self.shared.inboxes[slot(self.role)].pop_timeout(timeout) {
            Some(bytes) => decode(&bytes).map(Some),
            None => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{AckMsg, Payload, ShutdownMsg};

    fn ack(i: u32) -> Envelope {
        Envelope::new("e", f64::from(i), Payload::Ack(AckMsg { batch_index: i }))
    }

    #[test]
    fn routes_by_subscription_in_order() {
        let bus = InProcBus::new();
        let (mut analyst, mut controller, mut calibrator) =
            (bus.link(NodeRole::Analyst), bus.link(NodeRole::Controller), bus.link(NodeRole::Calibrator));
        for i in 0..3 {
            analyst.publish(&ack(i)).unwrap();
        }
        for i in 0..3 {
            assert_eq!(controller.try_recv().unwrap(), Some(ack(i)));
        }
        assert_eq!(controller.try_recv().unwrap(), None);
        assert_eq!(calibrator.try_recv().unwrap(), None);
        assert_eq!(analyst.try_recv().unwrap(), None);
    }

    #[test]
    fn overflow_drops_oldest() {
        let bus = InProcBus::new();
        let (mut analyst, mut controller) = (bus.link(NodeRole::Analyst), bus.link(NodeRole::Controller));
        let n = QUEUE_CAPACITY as u32 + 5;
        for i in 0..n {
            analyst.publish(&ack(i)).unwrap();
        }
        let got: Vec<_> = std::iter::from_fn(|| controller.try_recv().unwrap()).collect();
        assert_eq!(got.len(), QUEUE_CAPACITY);
        assert_eq!(got[0], ack(5));
        assert_eq!(got.last(), Some(&ack(n - 1)));
    }

    #[test]
    fn rejects_topics_outside_the_contract() {
        let bus = InProcBus::new();
        let mut controller = bus.link(NodeRole::Controller);
        assert!(matches!(controller.publish(&ack(0)), Err(WireError::TopologyViolation { .. })));
        assert!(bus.published().is_empty());
    }

    #[test]
    fn shutdown_reaches_everyone_else() {
        let bus = InProcBus::new();
        let mut links: Vec<_> = NodeRole::ALL.into_iter().map(|r| bus.link(r)).collect();
        let msg = Envelope::new(
            "e",
            1.0,
            Payload::Shutdown(ShutdownMsg { origin: NodeRole::Calibrator, reason: "done".into() }),
        );
        links[2].publish(&msg).unwrap();
        assert_eq!(links[0].try_recv().unwrap(), Some(msg.clone()));
        assert_eq!(links[1].try_recv().unwrap(), Some(msg));
        assert_eq!(links[2].try_recv().unwrap(), None);
    }

    #[test]
    fn blocked_topic_is_lost() {
        let bus = InProcBus::new();
        bus.block_topic(Topic::Ack);
        let (mut analyst, mut controller) = (bus.link(NodeRole::Analyst), bus.link(NodeRole::Controller));
        analyst.publish(&ack(1)).unwrap();
        assert_eq!(controller.recv_timeout(Duration::from_millis(5)).unwrap(), None);
    }
}
