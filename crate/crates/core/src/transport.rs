//! Rank-to-rank byte transport.
//!
//! Delivery is reliable and ordered per sender/receiver pair. `LocalTransport`
//! connects simulated ranks living in one process; a message-passing backend only
//! needs to implement [`Transport`].

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("rank {0} is out of range")]
    BadRank(usize),
    #[error("rank {0} disconnected")]
    Disconnected(usize),
    #[error("timed out waiting for rank {0}")]
    Timeout(usize),
    #[error("root must supply the broadcast payload")]
    MissingPayload,
}

pub trait Transport: Send {
    fn rank(&self) -> usize;

    fn size(&self) -> usize;

    fn send(&self, to: usize, bytes: Vec<u8>) -> Result<(), TransportError>;

    /// Next message from `from`, blocking.
    fn receive(&self, from: usize) -> Result<Vec<u8>, TransportError>;

    /// Payload bytes handed to `send` so far.
    fn bytes_sent(&self) -> u64;

    fn is_root(&self) -> bool {
        self.rank() == 0
    }

    /// Root passes `Some(bytes)`; every rank returns the root's bytes.
    fn broadcast_from_root(&self, bytes: Option<Vec<u8>>) -> Result<Vec<u8>, TransportError> {
        if self.is_root() {
            let bytes = bytes.ok_or(TransportError::MissingPayload)?;
            for to in 1..self.size() {
                self.send(to, bytes.clone())?;
            }
            Ok(bytes)
        } else {
            self.receive(0)
        }
    }

    /// Root receives every rank's bytes in rank order; other ranks get `None`.
    fn gather_to_root(&self, bytes: Vec<u8>) -> Result<Option<Vec<Vec<u8>>>, TransportError> {
        if self.is_root() {
            let mut all = Vec::with_capacity(self.size());
            all.push(bytes);
            for from in 1..self.size() {
                all.push(self.receive(from)?);
            }
            Ok(Some(all))
        } else {
            self.send(0, bytes)?;
            Ok(None)
        }
    }
}

/// In-process transport over per-pair channels.
pub struct LocalTransport {
    rank: usize,
    outbound: Vec<Sender<Vec<u8>>>,
    inbound: Vec<Receiver<Vec<u8>>>,
    sent: AtomicU64,
    timeout: Option<Duration>,
}

impl LocalTransport {
    /// One connected endpoint per rank.
    pub fn world(size: usize) -> Vec<LocalTransport> {
        // channels[from][to]
        let mut senders: Vec<Vec<Option<Sender<Vec<u8>>>>> = (0..size).map(|_| vec![None; size]).collect();
        let mut receivers: Vec<Vec<Option<Receiver<Vec<u8>>>>> = (0..size).map(|_| vec![None; size]).collect();
        for from in 0..size {
            for to in 0..size {
                let (tx, rx) = unbounded();
                senders[from][to] = Some(tx);
                receivers[to][from] = Some(rx);
            }
        }
        senders
            .into_iter()
            .zip(receivers)
            .enumerate()
            .map(|(rank, (out, inb))| LocalTransport {
                rank,
                outbound: out.into_iter().map(Option::unwrap).collect(),
                inbound: inb.into_iter().map(Option::unwrap).collect(),
                sent: AtomicU64::new(0),
                timeout: None,
            })
            .collect()
    }

    /// Fail a `receive` after `timeout` instead of blocking forever.
    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = Some(timeout);
        self
    }

    pub fn reset_counter(&self) {
        self.sent.store(0, Ordering::Relaxed);
    }
}

impl Transport for LocalTransport {
    fn rank(&self) -> usize {
        self.rank
    }

    fn size(&self) -> usize {
        self.outbound.len()
    }

    fn send(&self, to: usize, bytes: Vec<u8>) -> Result<(), TransportError> {
        let tx = self.outbound.get(to).ok_or(TransportError::BadRank(to))?;
        let n = bytes.len() as u64;
        tx.send(bytes).map_err(|_| TransportError::Disconnected(to))?;
        self.sent.fetch_add(n, Ordering::Relaxed);
        Ok(())
    }

    fn receive(&self, from: usize) -> Result<Vec<u8>, TransportError> {
        let rx = self.inbound.get(from).ok_or(TransportError::BadRank(from))?;
        match self.timeout {
            None => rx.recv().map_err(|_| TransportError::Disconnected(from)),
            Some(t) => rx.recv_timeout(t).map_err(|e| match e {
                RecvTimeoutError::Timeout => TransportError::Timeout(from),
                RecvTimeoutError::Disconnected => TransportError::Disconnected(from),
            }),
        }
    }

    fn bytes_sent(&self) -> u64 {
        self.sent.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::thread;

    #[test]
    fn ordered_per_pair_delivery() {
        let mut world = LocalTransport::world(2);
        let b = world.pop().unwrap();
        let a = world.pop().unwrap();
        for i in 0..5u8 {
            a.send(1, vec![i]).unwrap();
        }
        for i in 0..5u8 {
            assert_eq!(b.receive(0).unwrap(), vec![i]);
        }
        assert_eq!(a.bytes_sent(), 5);
        assert_eq!(a.send(2, vec![]), Err(TransportError::BadRank(2)));
    }

    #[test]
    fn broadcast_and_gather() {
        let handles: Vec<_> = LocalTransport::world(4)
            .into_iter()
            .map(|t| {
                thread::spawn(move || {
                    let payload = t.is_root().then(|| b"scene".to_vec());
                    let got = t.broadcast_from_root(payload).unwrap();
                    assert_eq!(got, b"scene");
                    t.gather_to_root(vec![t.rank() as u8]).unwrap()
                })
            })
            .collect();
        let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        assert_eq!(results[0], Some(vec![vec![0], vec![1], vec![2], vec![3]]));
        assert!(results[1..].iter().all(Option::is_none));
    }

    #[test]
    fn dropped_peer_is_reported() {
        let mut world = LocalTransport::world(2);
        let b = world.pop().unwrap();
        drop(world);
        assert_eq!(b.receive(0), Err(TransportError::Disconnected(0)));
    }

    #[test]
    fn receive_timeout() {
        let mut world = LocalTransport::world(2);
        let b = world.pop().unwrap().with_timeout(Duration::from_millis(10));
        assert_eq!(b.receive(0), Err(TransportError::Timeout(0)));
        drop(world);
    }

    #[test]
    fn root_must_supply_broadcast() {
        let world = LocalTransport::world(1);
        assert_eq!(
            world[0].broadcast_from_root(None),
            Err(TransportError::MissingPayload)
        );
    }
}
