use crate::hub::{ClientId, FrameSlot, Hub, Line, SessionId};
use futures_util::stream::{SplitSink, SplitStream};
use futures_util::{SinkExt, StreamExt};
use insitu_core::protocol::{error_line, message_type, RegisterMessage, PROTOCOL_VERSION};
use serde_json::{json, Value};
use std::io;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::sync::Arc;
use std::time::Duration;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader, Lines};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::WebSocketStream;

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub bind: IpAddr,
    /// Port for simulation (rank 0) connections; 0 picks a free port.
    pub sim_port: u16,
    /// Port for clients, raw JSON lines or WebSocket; 0 picks a free port.
    pub client_port: u16,
    pub max_clients: usize,
    /// Shared secret required on `register` and `observe` when set.
    pub token: Option<String>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            sim_port: 2459,
            client_port: 2460,
            max_clients: 64,
            token: None,
        }
    }
}

/// A running gateway inside an existing tokio runtime.
pub struct Gateway {
    sim_addr: SocketAddr,
    client_addr: SocketAddr,
    hub: Arc<Hub>,
    tasks: Vec<JoinHandle<()>>,
}

impl Gateway {
    pub async fn start(config: GatewayConfig) -> io::Result<Gateway> {
        let sim_listener = TcpListener::bind((config.bind, config.sim_port)).await?;
        let client_listener = TcpListener::bind((config.bind, config.client_port)).await?;
        let hub = Arc::new(Hub::new(config.max_clients, config.token.clone()));
        let sim_addr = sim_listener.local_addr()?;
        let client_addr = client_listener.local_addr()?;
        tracing::info!(%sim_addr, %client_addr, "gateway listening");

        let sim_hub = hub.clone();
        let sim_task = tokio::spawn(async move {
            loop {
                match sim_listener.accept().await {
                    Ok((stream, peer)) => {
                        let hub = sim_hub.clone();
                        tokio::spawn(async move {
                            if let Err(e) = handle_simulation(stream, hub).await {
                                tracing::debug!(%peer, error = %e, "simulation connection ended");
                            }
                        });
                    }
                    Err(e) => tracing::warn!(error = %e, "accept on simulation port failed"),
                }
            }
        });
        let client_hub = hub.clone();
        let client_task = tokio::spawn(async move {
            loop {
                match client_listener.accept().await {
                    Ok((stream, peer)) => {
                        let hub = client_hub.clone();
                        tokio::spawn(async move {
                            if let Err(e) = handle_client(stream, hub).await {
                                tracing::debug!(%peer, error = %e, "client connection ended");
                            }
                        });
                    }
                    Err(e) => tracing::warn!(error = %e, "accept on client port failed"),
                }
            }
        });
        Ok(Gateway {
            sim_addr,
            client_addr,
            hub,
            tasks: vec![sim_task, client_task],
        })
    }

    pub fn sim_addr(&self) -> SocketAddr {
        self.sim_addr
    }

    pub fn client_addr(&self) -> SocketAddr {
        self.client_addr
    }

    pub fn hub(&self) -> &Arc<Hub> {
        &self.hub
    }

    /// Stops accepting connections. Established connections end with their peers.
    pub fn stop(&self) {
        for task in &self.tasks {
            task.abort();
        }
    }
}

impl Drop for Gateway {
    fn drop(&mut self) {
        self.stop();
    }
}

/// A gateway on its own thread and runtime, for synchronous callers.
pub struct GatewayThread {
    sim_addr: SocketAddr,
    client_addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl GatewayThread {
    pub fn start(config: GatewayConfig) -> io::Result<GatewayThread> {
        let (ready_tx, ready_rx) = std::sync::mpsc::channel();
        let (shutdown_tx, shutdown_rx) = oneshot::channel::<()>();
        let thread = std::thread::Builder::new().name("gateway".into()).spawn(move || {
            let runtime = match tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
            {
                Ok(rt) => rt,
                Err(e) => {
                    let _ = ready_tx.send(Err(e));
                    return;
                }
            };
            runtime.block_on(async move {
                match Gateway::start(config).await {
                    Ok(gw) => {
                        let _ = ready_tx.send(Ok((gw.sim_addr(), gw.client_addr())));
                        let _ = shutdown_rx.await;
                        gw.stop();
                    }
                    Err(e) => {
                        let _ = ready_tx.send(Err(e));
                    }
                }
            });
            runtime.shutdown_timeout(Duration::from_millis(200));
        })?;
        let (sim_addr, client_addr) = ready_rx
            .recv()
            .map_err(|_| io::Error::other("gateway thread exited during startup"))??;
        Ok(GatewayThread {
            sim_addr,
            client_addr,
            shutdown: Some(shutdown_tx),
            thread: Some(thread),
        })
    }

    pub fn sim_addr(&self) -> SocketAddr {
        self.sim_addr
    }

    pub fn client_addr(&self) -> SocketAddr {
        self.client_addr
    }
}

impl Drop for GatewayThread {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn strip_newline(mut line: String) -> String {
    if line.ends_with('\n') {
        line.pop();
        if line.ends_with('\r') {
            line.pop();
        }
    }
    line
}

async fn write_line(w: &mut OwnedWriteHalf, line: &str) -> io::Result<()> {
    let mut buf = Vec::with_capacity(line.len() + 1);
    buf.extend_from_slice(line.as_bytes());
    buf.push(b'\n');
    w.write_all(&buf).await
}

fn parse_register(value: &Value) -> Result<RegisterMessage, String> {
    if message_type(value) != Some("register") {
        return Err("first message must be a register message".into());
    }
    let msg: RegisterMessage = serde_json::from_value(value.clone()).map_err(|e| format!("malformed register: {e}"))?;
    if msg.protocol != PROTOCOL_VERSION {
        return Err(format!("unsupported protocol {}, expected {PROTOCOL_VERSION}", msg.protocol));
    }
    if msg.ranks == 0 {
        return Err("malformed register: ranks must be positive".into());
    }
    if let Some(bad) = msg.sources.iter().find(|s| !(1..=4).contains(&s.feature_dim)) {
        return Err(format!("malformed register: source '{}' has feature_dim {}", bad.name, bad.feature_dim));
    }
    Ok(msg)
}

/// One simulation: register, then frames in and steering out until it leaves.
async fn handle_simulation(stream: TcpStream, hub: Arc<Hub>) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let (read, mut write) = stream.into_split();
    let mut reader = BufReader::new(read);
    let mut line = String::new();
    if reader.read_line(&mut line).await? == 0 {
        return Ok(());
    }
    let register = serde_json::from_str::<Value>(&line)
        .map_err(|e| format!("invalid JSON: {e}"))
        .and_then(|v| parse_register(&v))
        .and_then(|m| match hub.check_token(m.token.as_deref()) {
            Ok(()) => Ok(m),
            Err(e) => Err(e.to_string()),
        });
    let register = match register {
        Ok(r) => r,
        Err(msg) => {
            write_line(&mut write, &error_line(&msg)).await?;
            write.shutdown().await?;
            return Ok(());
        }
    };

    let (to_sim, mut outbound) = mpsc::unbounded_channel::<Line>();
    let id = hub.add_session(register.name.clone(), register.ranks, register.sources.clone(), to_sim.clone());
    tracing::info!(session = id, name = %register.name, ranks = register.ranks, "simulation registered");
    write_line(&mut write, &json!({"type": "registered", "session": id}).to_string()).await?;

    let writer = tokio::spawn(async move {
        while let Some(line) = outbound.recv().await {
            if write_line(&mut write, &line).await.is_err() {
                break;
            }
        }
        let _ = write.shutdown().await;
    });

    let result = simulation_loop(&mut reader, &hub, id, &to_sim).await;
    hub.remove_session(id);
    drop(to_sim);
    let _ = writer.await;
    tracing::info!(session = id, "simulation left");
    result
}

async fn simulation_loop(
    reader: &mut BufReader<OwnedReadHalf>,
    hub: &Hub,
    id: SessionId,
    to_sim: &mpsc::UnboundedSender<Line>,
) -> io::Result<()> {
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).await? == 0 {
            return Ok(());
        }
        let text = strip_newline(std::mem::take(&mut line));
        if text.trim().is_empty() {
            continue;
        }
        let value = match serde_json::from_str::<Value>(&text) {
            Ok(v) => v,
            Err(e) => {
                let _ = to_sim.send(Arc::from(error_line(format!("invalid JSON: {e}"))));
                continue;
            }
        };
        match message_type(&value) {
            Some("frame") => {
                hub.publish_frame(id, Arc::from(text));
            }
            Some("error") => hub.notify_observers(id, Arc::from(text)),
            Some("exit") => return Ok(()),
            Some("register") => {
                let _ = to_sim.send(Arc::from(error_line("already registered on this connection")));
                return Ok(());
            }
            other => {
                let _ = to_sim.send(Arc::from(error_line(format!(
                    "unexpected message type {}",
                    other.unwrap_or("(none)")
                ))));
            }
        }
    }
}

enum Inbound {
    Tcp(Lines<BufReader<OwnedReadHalf>>),
    Ws(SplitStream<WebSocketStream<TcpStream>>),
}

impl Inbound {
    async fn next_line(&mut self) -> io::Result<Option<String>> {
        match self {
            Inbound::Tcp(lines) => lines.next_line().await,
            Inbound::Ws(stream) => loop {
                match stream.next().await {
                    None => return Ok(None),
                    Some(Err(e)) => return Err(io::Error::other(e)),
                    Some(Ok(Message::Text(t))) => return Ok(Some(t)),
                    Some(Ok(Message::Binary(b))) => {
                        return String::from_utf8(b)
                            .map(Some)
                            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
                    }
                    Some(Ok(Message::Close(_))) => return Ok(None),
                    Some(Ok(_)) => continue,
                }
            },
        }
    }
}

enum Outbound {
    Tcp(OwnedWriteHalf),
    Ws(SplitSink<WebSocketStream<TcpStream>, Message>),
}

impl Outbound {
    async fn send(&mut self, line: &str) -> io::Result<()> {
        match self {
            Outbound::Tcp(w) => write_line(w, line).await,
            Outbound::Ws(sink) => sink.send(Message::Text(line.to_string())).await.map_err(io::Error::other),
        }
    }

    async fn close(&mut self) {
        match self {
            Outbound::Tcp(w) => {
                let _ = w.shutdown().await;
            }
            Outbound::Ws(sink) => {
                let _ = sink.close().await;
            }
        }
    }
}

/// Whether the peer opened with an HTTP request, i.e. wants a WebSocket.
/// WebSocket clients speak first; a silent peer is a raw JSON-lines client.
async fn is_websocket(stream: &TcpStream) -> io::Result<bool> {
    match tokio::time::timeout(Duration::from_millis(250), sniff_http(stream)).await {
        Ok(result) => result,
        Err(_) => Ok(false),
    }
}

async fn sniff_http(stream: &TcpStream) -> io::Result<bool> {
    let mut buf = [0u8; 4];
    for _ in 0..50 {
        let n = stream.peek(&mut buf).await?;
        if n == 0 {
            return Ok(false);
        }
        if !b"GET ".starts_with(&buf[..n.min(4)]) {
            return Ok(false);
        }
        if n >= 4 {
            return Ok(true);
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    Ok(false)
}

async fn client_writer(mut out: Outbound, mut control: mpsc::UnboundedReceiver<Line>, frames: Arc<FrameSlot>) {
    loop {
        let line = tokio::select! {
            biased;
            msg = control.recv() => match msg {
                Some(line) => line,
                None => break,
            },
            _ = frames.ready() => match frames.take() {
                Some(line) => line,
                None => continue,
            },
        };
        if out.send(&line).await.is_err() {
            break;
        }
    }
    out.close().await;
}

async fn handle_client(stream: TcpStream, hub: Arc<Hub>) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let (mut inbound, outbound) = if is_websocket(&stream).await? {
        let ws = tokio_tungstenite::accept_async(stream).await.map_err(io::Error::other)?;
        let (sink, stream) = ws.split();
        (Inbound::Ws(stream), Outbound::Ws(sink))
    } else {
        let (read, write) = stream.into_split();
        (Inbound::Tcp(BufReader::new(read).lines()), Outbound::Tcp(write))
    };

    let (control_tx, control_rx) = mpsc::unbounded_channel::<Line>();
    let frames = Arc::new(FrameSlot::default());
    let Some(id) = hub.add_client(control_tx.clone(), frames.clone()) else {
        let mut out = outbound;
        let _ = out.send(&error_line("too many clients")).await;
        out.close().await;
        return Ok(());
    };
    let writer = tokio::spawn(client_writer(outbound, control_rx, frames));
    let result = client_loop(&mut inbound, &hub, id, &control_tx).await;
    hub.remove_client(id);
    drop(control_tx);
    let _ = writer.await;
    result
}

async fn client_loop(
    inbound: &mut Inbound,
    hub: &Hub,
    id: ClientId,
    reply: &mpsc::UnboundedSender<Line>,
) -> io::Result<()> {
    let send = |line: String| {
        let _ = reply.send(Arc::from(line));
    };
    while let Some(text) = inbound.next_line().await? {
        if text.trim().is_empty() {
            continue;
        }
        let value = match serde_json::from_str::<Value>(&text) {
            Ok(v) => v,
            Err(e) => {
                send(error_line(format!("invalid JSON: {e}")));
                continue;
            }
        };
        match message_type(&value) {
            Some("list") => {
                let _ = reply.send(hub.list_line());
            }
            Some("observe") => {
                let Some(session) = value.get("session").and_then(Value::as_u64) else {
                    send(error_line("observe needs a numeric session id"));
                    continue;
                };
                let token = value.get("token").and_then(Value::as_str);
                // Acknowledge before the cached frame so clients see them in that order.
                let known = hub.sessions().iter().any(|s| s.id == session);
                let result = hub.check_token(token).and_then(|_| {
                    if known {
                        send(json!({"type": "observe", "session": session}).to_string());
                    }
                    hub.observe(id, session)
                });
                if let Err(e) = result {
                    send(error_line(e));
                }
            }
            Some("steer") => {
                if value.get("payload").is_none() {
                    send(error_line("steer needs a payload"));
                    continue;
                }
                if let Err(e) = hub.steer(id, Arc::from(text)) {
                    send(error_line(e));
                }
            }
            Some("exit") => return Ok(()),
            other => send(error_line(format!("unexpected message type {}", other.unwrap_or("(none)")))),
        }
    }
    Ok(())
}
