//! Shared registry of simulation sessions and client connections.

use insitu_core::protocol::{SessionInfo, SourceInfo};
use serde_json::json;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::{Arc, Mutex};
use tokio::sync::{mpsc, Notify};

pub type SessionId = u64;
pub type ClientId = u64;
pub type Line = Arc<str>;

/// One-slot mailbox holding only the newest frame for a client.
#[derive(Default)]
pub struct FrameSlot {
    latest: Mutex<Option<Line>>,
    notify: Notify,
}

impl FrameSlot {
    pub fn put(&self, line: Line) {
        *self.latest.lock().unwrap() = Some(line);
        self.notify.notify_one();
    }

    pub fn take(&self) -> Option<Line> {
        self.latest.lock().unwrap().take()
    }

    pub async fn ready(&self) {
        self.notify.notified().await
    }
}

struct ClientEntry {
    control: mpsc::UnboundedSender<Line>,
    frames: Arc<FrameSlot>,
    observing: Option<SessionId>,
}

struct SessionEntry {
    info: SessionInfo,
    to_sim: mpsc::UnboundedSender<Line>,
    last_frame: Option<Line>,
    observers: BTreeSet<ClientId>,
}

#[derive(Default)]
struct HubState {
    sessions: BTreeMap<SessionId, SessionEntry>,
    clients: HashMap<ClientId, ClientEntry>,
    next_session: SessionId,
    next_client: ClientId,
}

/// Routing table. Every method takes the lock briefly and never awaits while holding it.
pub struct Hub {
    state: Mutex<HubState>,
    max_clients: usize,
    token: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HubError {
    UnknownSession(SessionId),
    NotObserving,
    Unauthorized,
    SessionGone,
}

impl std::fmt::Display for HubError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HubError::UnknownSession(id) => write!(f, "no session {id}"),
            HubError::NotObserving => f.write_str("steering requires observing a session first"),
            HubError::Unauthorized => f.write_str("invalid or missing token"),
            HubError::SessionGone => f.write_str("session is no longer connected"),
        }
    }
}

impl Hub {
    pub fn new(max_clients: usize, token: Option<String>) -> Self {
        Self {
            state: Mutex::default(),
            max_clients,
            token,
        }
    }

    pub fn check_token(&self, presented: Option<&str>) -> Result<(), HubError> {
        match &self.token {
            Some(t) if presented != Some(t.as_str()) => Err(HubError::Unauthorized),
            _ => Ok(()),
        }
    }

    pub fn sessions(&self) -> Vec<SessionInfo> {
        self.state.lock().unwrap().sessions.values().map(|s| s.info.clone()).collect()
    }

    /// `{"type":"list","sessions":[...]}`
    pub fn list_line(&self) -> Line {
        Arc::from(json!({"type": "list", "sessions": self.sessions()}).to_string())
    }

    fn broadcast_list(&self) {
        let line = self.list_line();
        let state = self.state.lock().unwrap();
        for client in state.clients.values() {
            let _ = client.control.send(line.clone());
        }
    }

    pub fn add_session(
        &self,
        name: String,
        ranks: usize,
        sources: Vec<SourceInfo>,
        to_sim: mpsc::UnboundedSender<Line>,
    ) -> SessionId {
        let id = {
            let mut state = self.state.lock().unwrap();
            state.next_session += 1;
            let id = state.next_session;
            state.sessions.insert(
                id,
                SessionEntry {
                    info: SessionInfo {
                        id,
                        name,
                        ranks,
                        sources,
                    },
                    to_sim,
                    last_frame: None,
                    observers: BTreeSet::new(),
                },
            );
            id
        };
        self.broadcast_list();
        id
    }

    /// Drops the session, tells its observers and refreshes everybody's list.
    pub fn remove_session(&self, id: SessionId) {
        {
            let mut state = self.state.lock().unwrap();
            let Some(session) = state.sessions.remove(&id) else {
                return;
            };
            let line: Line = Arc::from(json!({"type": "exit", "session": id}).to_string());
            for cid in session.observers {
                if let Some(client) = state.clients.get_mut(&cid) {
                    client.observing = None;
                    let _ = client.control.send(line.clone());
                }
            }
        }
        self.broadcast_list();
    }

    /// Caches the frame and offers it to every observer's newest-frame slot.
    pub fn publish_frame(&self, id: SessionId, line: Line) -> usize {
        let mut state = self.state.lock().unwrap();
        let HubState { sessions, clients, .. } = &mut *state;
        let Some(session) = sessions.get_mut(&id) else {
            return 0;
        };
        session.last_frame = Some(line.clone());
        session.observers.retain(|cid| clients.get(cid).is_some_and(|c| !c.control.is_closed()));
        for cid in &session.observers {
            clients[cid].frames.put(line.clone());
        }
        session.observers.len()
    }

    /// Sends a notice (e.g. an error reported by the simulation) to the session's observers.
    pub fn notify_observers(&self, id: SessionId, line: Line) {
        let state = self.state.lock().unwrap();
        if let Some(session) = state.sessions.get(&id) {
            for cid in &session.observers {
                if let Some(client) = state.clients.get(cid) {
                    let _ = client.control.send(line.clone());
                }
            }
        }
    }

    /// Registers a client unless the limit is reached.
    pub fn add_client(&self, control: mpsc::UnboundedSender<Line>, frames: Arc<FrameSlot>) -> Option<ClientId> {
        let mut state = self.state.lock().unwrap();
        state.clients.retain(|_, c| !c.control.is_closed());
        if state.clients.len() >= self.max_clients {
            return None;
        }
        state.next_client += 1;
        let id = state.next_client;
        state.clients.insert(
            id,
            ClientEntry {
                control,
                frames,
                observing: None,
            },
        );
        Some(id)
    }

    pub fn remove_client(&self, id: ClientId) {
        let mut state = self.state.lock().unwrap();
        if let Some(client) = state.clients.remove(&id) {
            if let Some(sid) = client.observing {
                if let Some(session) = state.sessions.get_mut(&sid) {
                    session.observers.remove(&id);
                }
            }
        }
    }

    /// Subscribes the client to one session (leaving any previous one) and hands
    /// it the cached frame, if any.
    pub fn observe(&self, client: ClientId, session: SessionId) -> Result<(), HubError> {
        let mut state = self.state.lock().unwrap();
        if !state.sessions.contains_key(&session) {
            return Err(HubError::UnknownSession(session));
        }
        let previous = state.clients.get_mut(&client).and_then(|c| c.observing.replace(session));
        if let Some(prev) = previous {
            if let Some(s) = state.sessions.get_mut(&prev) {
                s.observers.remove(&client);
            }
        }
        let entry = state.sessions.get_mut(&session).expect("checked above");
        entry.observers.insert(client);
        let cached = entry.last_frame.clone();
        if let (Some(frame), Some(c)) = (cached, state.clients.get(&client)) {
            c.frames.put(frame);
        }
        Ok(())
    }

    /// Forwards a client's steering line, unchanged, to the observed simulation.
    pub fn steer(&self, client: ClientId, line: Line) -> Result<SessionId, HubError> {
        let state = self.state.lock().unwrap();
        let sid = state
            .clients
            .get(&client)
            .and_then(|c| c.observing)
            .ok_or(HubError::NotObserving)?;
        let session = state.sessions.get(&sid).ok_or(HubError::SessionGone)?;
        session.to_sim.send(line).map_err(|_| HubError::SessionGone)?;
        Ok(sid)
    }

    pub fn client_count(&self) -> usize {
        self.state.lock().unwrap().clients.len()
    }
}
