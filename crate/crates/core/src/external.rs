//! Out-of-process bidders over newline-delimited JSON.
//!
//! Each external seller gets its own session, either a child process spoken
//! to over stdio or a TCP connection. Per timestep the arena sends a
//! `request`, waits up to `timeout_ms` for a matching `bids` reply, and after
//! resolution sends an `outcome`. A timeout, malformed reply or dead peer
//! makes the seller bid 0 for that timestep and counts one incident.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{Shutdown, TcpStream};
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::algorithms::{AuctionView, Bidder, BidderContext, TimestepContext, TimestepFeedback};
use crate::error::{ArenaError, Result};

fn default_timeout_ms() -> u64 {
    1000
}

/// How to reach an external bidder. Exactly one of `command` and `connect`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSpec {
    /// Program and arguments of a child process speaking the protocol on
    /// stdin/stdout.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Vec<String>>,
    /// `host:port` of a peer accepting one connection per seller.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub connect: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

impl ExternalSpec {
    pub fn command<S: Into<String>>(argv: impl IntoIterator<Item = S>) -> Self {
        Self { command: Some(argv.into_iter().map(Into::into).collect()), connect: None, timeout_ms: default_timeout_ms() }
    }

    pub fn connect(addr: impl Into<String>) -> Self {
        Self { command: None, connect: Some(addr.into()), timeout_ms: default_timeout_ms() }
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.command, &self.connect) {
            (Some(argv), None) if !argv.is_empty() => Ok(()),
            (Some(_), None) => Err(ArenaError::config("external: empty command")),
            (None, Some(_)) => Ok(()),
            _ => Err(ArenaError::config("external: set exactly one of `command` and `connect`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuctionItem {
    pub auction_id: u32,
    pub ctr: f64,
    pub cvr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BidItem {
    pub auction_id: u32,
    pub bid: f64,
}

/// One protocol line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Message {
    Request {
        timestep: u32,
        total_timesteps: u32,
        seller_id: u32,
        budget_left: f64,
        cpc_bound: f64,
        cpa_bound: f64,
        auctions: Vec<AuctionItem>,
    },
    Bids {
        timestep: u32,
        bids: Vec<BidItem>,
    },
    Outcome {
        timestep: u32,
        wins: u32,
        cost: f64,
        clicks: u32,
        conversions: u32,
    },
}

impl Message {
    pub fn to_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("messages always serialize");
        line.push('\n');
        line
    }
}

/// Serves the protocol on the peer side until the input closes. `policy`
/// maps each request to one bid per auction, in request order.
pub fn serve_peer<R, W, F>(input: R, mut output: W, mut policy: F) -> std::io::Result<()>
where
    R: BufRead,
    W: Write,
    F: FnMut(&Message) -> Vec<f64>,
{
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let msg: Message = serde_json::from_str(&line).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        if let Message::Request { timestep, ref auctions, .. } = msg {
            let values = policy(&msg);
            let bids = auctions.iter().zip(values).map(|(a, bid)| BidItem { auction_id: a.auction_id, bid }).collect();
            output.write_all(Message::Bids { timestep, bids }.to_line().as_bytes())?;
            output.flush()?;
        }
    }
    Ok(())
}

enum Inbound {
    Line(String),
    Closed,
}

enum Transport {
    Child(Child),
    Tcp(TcpStream),
}

/// A bidder whose decisions come from another process.
pub struct ExternalBidder {
    seller_id: u32,
    timeout: Duration,
    writer: Option<Box<dyn Write + Send>>,
    inbox: Receiver<Inbound>,
    transport: Transport,
    alive: bool,
    incidents: u64,
}

impl ExternalBidder {
    pub fn connect(spec: &ExternalSpec, ctx: &BidderContext) -> Result<Self> {
        spec.validate()?;
        let (tx, inbox) = mpsc::channel();
        let pump = move |reader: Box<dyn std::io::Read + Send>| {
            thread::spawn(move || {
                for line in BufReader::new(reader).lines() {
                    match line {
                        Ok(l) => {
                            if tx.send(Inbound::Line(l)).is_err() {
                                return;
                            }
                        }
                        Err(_) => break,
                    }
                }
                let _ = tx.send(Inbound::Closed);
            });
        };
        let (writer, transport): (Box<dyn Write + Send>, Transport) = if let Some(argv) = &spec.command {
            let mut child = Command::new(&argv[0])
                .args(&argv[1..])
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::inherit())
                .spawn()
                .map_err(|e| ArenaError::io(&argv[0], e))?;
            let stdin = child.stdin.take().expect("piped stdin");
            pump(Box::new(child.stdout.take().expect("piped stdout")));
            (Box::new(BufWriter::new(stdin)), Transport::Child(child))
        } else {
            let addr = spec.connect.as_deref().expect("validated");
            let stream = TcpStream::connect(addr).map_err(|e| ArenaError::io(addr, e))?;
            let _ = stream.set_nodelay(true);
            let read = stream.try_clone().map_err(|e| ArenaError::io(addr, e))?;
            let write = stream.try_clone().map_err(|e| ArenaError::io(addr, e))?;
            pump(Box::new(read));
            (Box::new(BufWriter::new(write)), Transport::Tcp(stream))
        };
        Ok(Self {
            seller_id: ctx.seller_id,
            timeout: Duration::from_millis(spec.timeout_ms),
            writer: Some(writer),
            inbox,
            transport,
            alive: true,
            incidents: 0,
        })
    }

    fn incident(&mut self, timestep: u32, what: &str) {
        self.incidents += 1;
        log::warn!("external seller {} timestep {timestep}: {what}; bidding 0", self.seller_id);
    }

    fn send(&mut self, msg: &Message) -> bool {
        let Some(w) = self.writer.as_mut() else { return false };
        let ok = w.write_all(msg.to_line().as_bytes()).and_then(|_| w.flush()).is_ok();
        if !ok {
            self.alive = false;
            self.writer = None;
        }
        ok
    }

    /// Waits for the reply to `timestep`, discarding stale ones.
    fn await_bids(&mut self, timestep: u32) -> std::result::Result<Vec<BidItem>, &'static str> {
        let deadline = Instant::now() + self.timeout;
        loop {
            let left = deadline.saturating_duration_since(Instant::now());
            match self.inbox.recv_timeout(left) {
                Ok(Inbound::Line(line)) => match serde_json::from_str::<Message>(&line) {
                    Ok(Message::Bids { timestep: t, bids }) if t == timestep => return Ok(bids),
                    Ok(Message::Bids { .. }) => continue,
                    Ok(_) => return Err("unexpected message type"),
                    Err(_) => return Err("malformed reply"),
                },
                Ok(Inbound::Closed) | Err(RecvTimeoutError::Disconnected) => {
                    self.alive = false;
                    return Err("peer closed the session");
                }
                Err(RecvTimeoutError::Timeout) => return Err("reply timed out"),
            }
        }
    }
}

impl Bidder for ExternalBidder {
    fn bid(&mut self, ctx: &TimestepContext, auctions: &[AuctionView], bids: &mut Vec<f64>) {
        let t = ctx.timestep;
        if !self.alive {
            bids.resize(auctions.len(), 0.0);
            self.incident(t, "peer is gone");
            return;
        }
        let request = Message::Request {
            timestep: t,
            total_timesteps: ctx.total_timesteps,
            seller_id: ctx.seller_id,
            budget_left: ctx.remaining_budget,
            cpc_bound: ctx.cpc_bound,
            cpa_bound: ctx.cpa_bound,
            auctions: auctions.iter().map(|a| AuctionItem { auction_id: a.auction_id, ctr: a.ctr, cvr: a.cvr }).collect(),
        };
        let reply = if self.send(&request) { self.await_bids(t) } else { Err("peer closed the session") };
        match reply {
            Ok(items) => {
                let by_id: HashMap<u32, f64> = items.into_iter().map(|b| (b.auction_id, b.bid)).collect();
                bids.extend(auctions.iter().map(|a| by_id.get(&a.auction_id).copied().unwrap_or(0.0)));
            }
            Err(what) => {
                bids.resize(auctions.len(), 0.0);
                self.incident(t, what);
            }
        }
    }

    fn observe(&mut self, _ctx: &TimestepContext, fb: &TimestepFeedback) {
        if self.alive {
            self.send(&Message::Outcome {
                timestep: fb.timestep,
                wins: fb.wins,
                cost: fb.cost,
                clicks: fb.clicks,
                conversions: fb.conversions,
            });
        }
    }

    fn incidents(&self) -> u64 {
        self.incidents
    }
}

impl Drop for ExternalBidder {
    fn drop(&mut self) {
        self.writer = None;
        match &mut self.transport {
            Transport::Child(child) => {
                let deadline = Instant::now() + Duration::from_millis(200);
                loop {
                    match child.try_wait() {
                        Ok(Some(_)) => return,
                        Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(2)),
                        _ => break,
                    }
                }
                let _ = child.kill();
                let _ = child.wait();
            }
            Transport::Tcp(stream) => {
                let _ = stream.shutdown(Shutdown::Both);
            }
        }
    }
}
