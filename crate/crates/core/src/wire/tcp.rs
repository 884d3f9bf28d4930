//! Socket transport: each node listens on one endpoint and every node
//! connects to every other one.
//!
//! A node's endpoint is the address of the topic it owns (`trajectory` for
//! the controller, `scores` for the analyst, `params` for the calibrator);
//! `ack` and `shutdown` travel over the same endpoint. A connecting peer
//! first sends `{"hello":"<role>"}`; the publisher then forwards it the
//! topics that role subscribes to.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::bus::Inbox;
use super::{check_topology, decode, encode, Envelope, Link, NodeRole, WireError};

const RETRY_INTERVAL: Duration = Duration::from_millis(50);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SocketEndpoints {
    pub trajectory: String,
    pub scores: String,
    pub params: String,
}

impl Default for SocketEndpoints {
    fn default() -> Self {
        SocketEndpoints {
            trajectory: "127.0.0.1:47401".into(),
            scores: "127.0.0.1:47402".into(),
            params: "127.0.0.1:47403".into(),
        }
    }
}

impl SocketEndpoints {
    pub fn of(&self, role: NodeRole) -> &str {
        match role {
            NodeRole::Controller => &self.trajectory,
            NodeRole::Analyst => &self.scores,
            NodeRole::Calibrator => &self.params,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Hello {
    hello: NodeRole,
}

type Subscribers = Arc<Mutex<Vec<(NodeRole, TcpStream)>>>;

#[derive(Debug)]
pub struct TcpLink {
    role: NodeRole,
    subscribers: Subscribers,
    inbox: Arc<Inbox>,
}

fn transport(context: &str, e: impl std::fmt::Display) -> WireError {
    WireError::Transport(format!("{context}: {e}"))
}

impl TcpLink {
    /// Binds this role's endpoint, connects to the other two and waits until
    /// both have connected back, for at most `handshake_timeout`.
    pub fn open(role: NodeRole, endpoints: &SocketEndpoints, handshake_timeout: Duration) -> Result<Self, WireError> {
        let own = endpoints.of(role);
        let listener = TcpListener::bind(own).map_err(|e| transport(&format!("bind {own}"), e))?;
        let subscribers: Subscribers = Arc::default();
        let inbox = Arc::new(Inbox::default());
        spawn_acceptor(listener, Arc::clone(&subscribers));

        let deadline = Instant::now() + handshake_timeout;
        for peer in NodeRole::ALL.into_iter().filter(|&r| r != role) {
            let stream = connect_until(endpoints.of(peer), deadline)?;
            let mut hello = serde_json::to_vec(&Hello { hello: role }).expect("hello serialises");
            hello.push(b'\n');
            (&stream).write_all(&hello).map_err(|e| transport(&format!("hello to {peer}"), e))?;
            spawn_reader(stream, role, Arc::clone(&inbox));
        }
        loop {
            let ready = subscribers.lock().expect("subscriber lock").len();
            if ready >= NodeRole::ALL.len() - 1 {
                break;
            }
            if Instant::now() >= deadline {
                return Err(WireError::Transport(format!("{role}: only {ready} of 2 peers connected before timeout")));
            }
            thread::sleep(RETRY_INTERVAL / 5);
        }
        log::debug!("{role} link ready on {own}");
        Ok(TcpLink { role, subscribers, inbox })
    }
}

fn connect_until(addr: &str, deadline: Instant) -> Result<TcpStream, WireError> {
    loop {
        let attempt = addr
            .to_socket_addrs()
            .map_err(|e| transport(&format!("resolve {addr}"), e))?
            .find_map(|a| TcpStream::connect(a).ok());
        if let Some(s) = attempt {
            s.set_nodelay(true).ok();
            return Ok(s);
        }
        if Instant::now() >= deadline {
            return Err(WireError::Transport(format!("could not connect to {addr}")));
        }
        thread::sleep(RETRY_INTERVAL);
    }
}

fn spawn_acceptor(listener: TcpListener, subscribers: Subscribers) {
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let mut line = String::new();
            let Ok(reader) = stream.try_clone() else { continue };
            if BufReader::new(reader).read_line(&mut line).is_err() {
                continue;
            }
            match serde_json::from_str::<Hello>(line.trim_end()) {
                Ok(h) => {
                    stream.set_nodelay(true).ok();
                    subscribers.lock().expect("subscriber lock").push((h.hello, stream));
                }
                Err(e) => log::warn!("rejected peer without a valid hello: {e}"),
            }
        }
    });
}

fn spawn_reader(stream: TcpStream, owner: NodeRole, inbox: Arc<Inbox>) {
    thread::spawn(move || {
        let mut reader = BufReader::new(stream);
        let mut line = Vec::new();
        loop {
            line.clear();
            match reader.read_until(b'\n', &mut line) {
                Ok(0) | Err(_) => break,
                Ok(_) => inbox.push(line.clone(), owner),
            }
        }
    });
}

impl Link for TcpLink {
    fn role(&self) -> NodeRole {
        self.role
    }

    fn publish(&mut self, msg: &Envelope) -> Result<(), WireError> {
        let topic = msg.topic();
        check_topology(self.role, topic)?;
        let bytes = encode(msg);
        let mut subs = self.subscribers.lock().expect("subscriber lock");
        subs.retain_mut(|(peer, stream)| {
            if !peer.wants(topic) {
                return true;
            }
            match stream.write_all(&bytes) {
                Ok(()) => true,
                Err(e) => {
                    log::warn!("{}: dropping subscriber {peer}: {e}", self.role);
                    false
                }
            }
        });
        Ok(())
    }

    fn recv_timeout(&mut self, timeout: Duration) -> Result<Option<Envelope>, WireError> {
        match self.inbox.pop_timeout(timeout) {
            Some(bytes) => decode(&bytes).map(Some),
            None => Ok(None),
        }
    }
}
