//! Rank 0's connection to the gateway.

use super::pipeline::ChannelInbox;
use super::sink::FrameSink;
use crate::protocol::{message_type, FrameMessage, RegisterMessage};
use crossbeam_channel::unbounded;
use serde_json::Value;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::time::Duration;

/// Writing half of the gateway connection; frames and notices go out as JSON lines.
pub struct GatewayLink {
    writer: BufWriter<TcpStream>,
    session: u64,
    closed: bool,
}

impl GatewayLink {
    /// Registers the simulation and starts a reader that feeds steering lines into
    /// the returned inbox. Fails if the gateway does not acknowledge within `timeout`.
    pub fn connect(
        addr: impl ToSocketAddrs,
        register: &RegisterMessage,
        timeout: Duration,
    ) -> io::Result<(GatewayLink, ChannelInbox)> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let mut writer = BufWriter::new(stream.try_clone()?);
        serde_json::to_writer(&mut writer, register)?;
        writer.write_all(b"\n")?;
        writer.flush()?;

        stream.set_read_timeout(Some(timeout))?;
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "gateway closed during registration"));
        }
        let reply: Value = serde_json::from_str(&line).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let session = match message_type(&reply) {
            Some("registered") => reply.get("session").and_then(Value::as_u64).unwrap_or(0),
            _ => {
                return Err(io::Error::new(
                    io::ErrorKind::ConnectionRefused,
                    format!("registration rejected: {}", line.trim()),
                ))
            }
        };
        stream.set_read_timeout(None)?;

        let (tx, rx) = unbounded();
        std::thread::Builder::new()
            .name("gateway-reader".into())
            .spawn(move || {
                for line in reader.lines() {
                    let Ok(line) = line else { break };
                    if line.trim().is_empty() {
                        continue;
                    }
                    let kind = serde_json::from_str::<Value>(&line)
                        .ok()
                        .and_then(|v| message_type(&v).map(str::to_owned));
                    match kind.as_deref() {
                        Some("error") => tracing::warn!(line = %line, "gateway reported an error"),
                        // Everything else is steering; malformed lines are counted downstream.
                        _ => {
                            if tx.send(line).is_err() {
                                break;
                            }
                        }
                    }
                }
            })?;
        Ok((
            GatewayLink {
                writer,
                session,
                closed: false,
            },
            ChannelInbox(rx),
        ))
    }

    /// Session id assigned by the gateway.
    pub fn session(&self) -> u64 {
        self.session
    }

    fn write_line(&mut self, line: &[u8]) -> io::Result<()> {
        self.writer.write_all(line)?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()
    }
}

impl FrameSink for GatewayLink {
    fn deliver(&mut self, frame: &FrameMessage) -> io::Result<()> {
        let bytes = serde_json::to_vec(frame)?;
        self.write_line(&bytes)
    }

    fn notify(&mut self, line: &str) -> io::Result<()> {
        self.write_line(line.as_bytes())
    }

    fn close(&mut self) -> io::Result<()> {
        if self.closed {
            return Ok(());
        }
        self.closed = true;
        self.write_line(br#"{"type":"exit"}"#)?;
        self.writer.get_ref().shutdown(Shutdown::Write)
    }
}
