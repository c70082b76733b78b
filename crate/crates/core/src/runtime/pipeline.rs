use super::encode::{encode_frame, EncodeError};
use super::metadata::merge_metadata;
use super::scene::{SceneError, SceneState};
use super::sink::FrameSink;
use super::steering::{apply_steering, Control, SteeringReport};
use crate::composite::{binary_swap, visibility_order, CompositeError};
use crate::field::{FramePayload, GlobalVolume, LocalDomain, RegistryError, SourceDescriptor, SourceRegistry};
use crate::functor::FunctorRegistry;
use crate::image::LocalImage;
use crate::protocol::{error_line, FrameMessage, ImageEncoding, SourceInfo};
use crate::render::{render_local, RenderError};
use crate::scalar::Scalar;
use crate::transport::{Transport, TransportError};
use crossbeam_channel::Receiver;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Composite(#[from] CompositeError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("rank {rank} does not match the decomposition: {detail}")]
    Setup { rank: usize, detail: String },
    #[error("malformed control message: {0}")]
    Control(String),
}

/// Source of steering lines for rank 0, drained once per tick.
pub trait SteeringInbox: Send {
    fn drain(&mut self, tick: u64) -> Vec<String>;
}

/// Lines pushed by a live connection.
pub struct ChannelInbox(pub Receiver<String>);

impl SteeringInbox for ChannelInbox {
    fn drain(&mut self, _tick: u64) -> Vec<String> {
        self.0.try_iter().collect()
    }
}

/// Lines released at fixed ticks, e.g. a recorded transcript.
#[derive(Debug, Clone, Default)]
pub struct ScriptedInbox {
    entries: Vec<(u64, String)>,
}

impl ScriptedInbox {
    pub fn new(mut entries: Vec<(u64, String)>) -> Self {
        entries.sort_by_key(|(tick, _)| *tick);
        Self { entries }
    }
}

impl SteeringInbox for ScriptedInbox {
    fn drain(&mut self, tick: u64) -> Vec<String> {
        let due = self.entries.partition_point(|(t, _)| *t <= tick);
        self.entries.drain(..due).map(|(_, line)| line).collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EncoderOptions {
    pub encoding: ImageEncoding,
    pub quality: u8,
    /// Extra time spent before each encode; simulates a slow encoder or link.
    pub delay: Duration,
}

impl Default for EncoderOptions {
    fn default() -> Self {
        Self {
            encoding: ImageEncoding::RawRgba8,
            quality: 100,
            delay: Duration::ZERO,
        }
    }
}

/// Timestamps of one rendered frame on rank 0.
#[derive(Debug, Clone, Copy)]
pub struct FrameTiming {
    pub step: u64,
    pub render_start: Instant,
    pub render_end: Instant,
    pub composite_end: Instant,
    pub send_start: Option<Instant>,
    pub send_end: Option<Instant>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub step: u64,
    pub scene_version: u64,
    pub render_ms: f64,
    pub composite_ms: f64,
    /// Ray stations marched in this rank's brick.
    pub stations: u64,
    pub rays: u64,
    /// Bytes this rank put on the transport while compositing.
    pub composite_bytes: u64,
    /// Output dimension of every source's chain, as parsed on this rank.
    pub chain_dims: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FrameOutcome {
    Rendered(FrameReport),
    /// The scene was rejected; the previous one stays in effect.
    Aborted(String),
}

/// Rank 0's view of the current scene, shipped with every frame.
#[derive(Serialize, Deserialize)]
struct ScenePacket {
    abort: Option<String>,
    scene: SceneState,
}

/// Each rank's verdict on the broadcast scene.
#[derive(Serialize, Deserialize)]
struct Vote {
    error: Option<String>,
    digest: u64,
    chain_dims: Vec<usize>,
}

struct RootState {
    inbox: Box<dyn SteeringInbox>,
    pending: SceneState,
    sink: Arc<Mutex<Box<dyn FrameSink>>>,
    encoder: EncoderOptions,
    in_flight: Option<JoinHandle<()>>,
    timeline: Arc<Mutex<Vec<FrameTiming>>>,
    transcript: Vec<(u64, String)>,
    steering: SteeringReport,
    frames_sent: Arc<Mutex<u64>>,
    send_failures: Arc<Mutex<u64>>,
    aborted: u64,
}

/// Gateway-facing pieces owned by rank 0.
pub struct RootIo {
    pub inbox: Box<dyn SteeringInbox>,
    pub sink: Box<dyn FrameSink>,
    pub encoder: EncoderOptions,
}

/// Per-rank state of the frame pipeline.
pub struct RankRuntime<S: Scalar> {
    transport: Box<dyn Transport>,
    volume: GlobalVolume,
    domain: LocalDomain,
    registry: SourceRegistry<S>,
    descriptors: Vec<SourceDescriptor>,
    functors: FunctorRegistry<S>,
    max_chain_length: usize,
    scene: SceneState,
    control: Control,
    tick: u64,
    root: Option<RootState>,
    last_image: Option<Arc<LocalImage<S>>>,
    render_gate: Option<Arc<Mutex<()>>>,
}

fn digest(bytes: &[u8]) -> u64 {
    let mut h = DefaultHasher::new();
    bytes.hash(&mut h);
    h.finish()
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

impl<S: Scalar> RankRuntime<S> {
    /// `scene` is the initial scene; only rank 0's copy matters after the first frame.
    pub fn new(
        transport: Box<dyn Transport>,
        volume: GlobalVolume,
        registry: SourceRegistry<S>,
        functors: FunctorRegistry<S>,
        max_chain_length: usize,
        scene: SceneState,
        root_io: Option<RootIo>,
    ) -> Result<Self, RuntimeError> {
        let rank = transport.rank();
        if transport.size() != volume.rank_count() {
            return Err(RuntimeError::Setup {
                rank,
                detail: format!("{} transport ranks, {} bricks", transport.size(), volume.rank_count()),
            });
        }
        if transport.is_root() != root_io.is_some() {
            return Err(RuntimeError::Setup {
                rank,
                detail: "exactly rank 0 takes the gateway-facing endpoints".into(),
            });
        }
        let domain = volume.local_domain(rank).map_err(|e| RuntimeError::Setup {
            rank,
            detail: e.to_string(),
        })?;
        let descriptors: Vec<SourceDescriptor> = registry.descriptors().cloned().collect();
        let control = Control {
            period: scene.period.max(1),
            ..Control::default()
        };
        let root = root_io.map(|io| RootState {
            inbox: io.inbox,
            pending: scene.clone(),
            sink: Arc::new(Mutex::new(io.sink)),
            encoder: io.encoder,
            in_flight: None,
            timeline: Arc::default(),
            transcript: Vec::new(),
            steering: SteeringReport::default(),
            frames_sent: Arc::default(),
            send_failures: Arc::default(),
            aborted: 0,
        });
        Ok(Self {
            transport,
            volume,
            domain,
            registry,
            descriptors,
            functors,
            max_chain_length,
            scene,
            control,
            tick: 0,
            root,
            last_image: None,
            render_gate: None,
        })
    }

    pub fn rank(&self) -> usize {
        self.transport.rank()
    }

    pub fn is_root(&self) -> bool {
        self.root.is_some()
    }

    pub fn domain(&self) -> LocalDomain {
        self.domain
    }

    pub fn volume(&self) -> GlobalVolume {
        self.volume
    }

    pub fn registry(&self) -> &SourceRegistry<S> {
        &self.registry
    }

    /// Scene used by the last rendered frame.
    pub fn scene(&self) -> &SceneState {
        &self.scene
    }

    pub fn control(&self) -> Control {
        self.control
    }

    pub fn source_infos(&self) -> Vec<SourceInfo> {
        self.descriptors
            .iter()
            .map(|d| SourceInfo {
                name: d.name.clone(),
                feature_dim: d.feature_dim,
            })
            .collect()
    }

    /// Drains steering on rank 0 and agrees on the simulation control on all ranks.
    ///
    /// Call exactly once per iteration of the simulation loop, on every rank.
    pub fn sync_control(&mut self) -> Result<Control, RuntimeError> {
        let tick = self.tick;
        self.tick += 1;
        let infos = self.source_infos();
        let payload = match self.root.as_mut() {
            Some(root) => {
                let lines = root.inbox.drain(tick);
                root.transcript.extend(lines.iter().map(|l| (tick, l.clone())));
                let (pending, report) = apply_steering(&root.pending, &mut self.control, &infos, &lines);
                root.pending = pending;
                root.steering.absorb(report);
                Some(serde_json::to_vec(&self.control).expect("control serializes"))
            }
            None => None,
        };
        let bytes = self.transport.broadcast_from_root(payload)?;
        self.control = serde_json::from_slice(&bytes).map_err(|e| RuntimeError::Control(e.to_string()))?;
        Ok(self.control)
    }

    /// Consumes one step request from the agreed control; same answer on every rank.
    pub fn take_step(&mut self) -> bool {
        self.control.take_step()
    }

    /// Renders the current state: agree on the scene, update sources, render,
    /// composite, and on rank 0 hand the image to the background encoder.
    ///
    /// `metadata` is this rank's contribution to the frame's merged metadata.
    pub fn frame_pipeline(&mut self, payload: FramePayload, metadata: Value) -> Result<FrameOutcome, RuntimeError> {
        if let Some(root) = self.root.as_mut() {
            if let Some(handle) = root.in_flight.take() {
                let _ = handle.join();
            }
        }

        let packet = self.root.as_ref().map(|root| {
            let abort = root
                .pending
                .build(&self.descriptors, &self.functors, self.max_chain_length)
                .err()
                .map(|e| e.to_string());
            serde_json::to_vec(&ScenePacket {
                abort,
                scene: root.pending.clone(),
            })
            .expect("scene serializes")
        });
        let bytes = self.transport.broadcast_from_root(packet)?;
        let packet: ScenePacket = serde_json::from_slice(&bytes).map_err(|e| SceneError::Decode(e.to_string()))?;
        if let Some(reason) = packet.abort {
            return Ok(self.abort(reason));
        }

        let candidate = packet.scene;
        let built = candidate.build(&self.descriptors, &self.functors, self.max_chain_length);
        let vote = Vote {
            error: built.as_ref().err().map(|e| e.to_string()),
            digest: digest(&candidate.to_bytes()),
            chain_dims: built
                .as_ref()
                .map(|s| s.styles.iter().map(|st| st.chain.output_dim()).collect())
                .unwrap_or_default(),
        };
        let votes = self
            .transport
            .gather_to_root(serde_json::to_vec(&vote).expect("vote serializes"))?;
        let verdict = votes.map(|all| {
            let votes: Vec<Vote> = all
                .iter()
                .map(|b| serde_json::from_slice(b).unwrap_or(Vote {
                    error: Some("unreadable vote".into()),
                    digest: 0,
                    chain_dims: Vec::new(),
                }))
                .collect();
            let reason = votes
                .iter()
                .enumerate()
                .find_map(|(r, v)| v.error.as_ref().map(|e| format!("rank {r}: {e}")))
                .or_else(|| {
                    votes
                        .iter()
                        .any(|v| v.digest != votes[0].digest || v.chain_dims != votes[0].chain_dims)
                        .then(|| "ranks disagree on the scene".to_string())
                });
            serde_json::to_vec(&reason).expect("verdict serializes")
        });
        let verdict = self.transport.broadcast_from_root(verdict)?;
        let reason: Option<String> =
            serde_json::from_slice(&verdict).map_err(|e| SceneError::Decode(e.to_string()))?;
        if let Some(reason) = reason {
            return Ok(self.abort(reason));
        }
        let render_scene = built?;
        let chain_dims = vote.chain_dims;
        self.scene = candidate;

        let exclusive = self.render_gate.as_ref().map(|g| g.lock().unwrap_or_else(|e| e.into_inner()));
        let render_start = Instant::now();
        self.registry
            .update_sources(&render_scene.settings.active, &payload, &self.domain)?;
        let (local, stats) = render_local(&render_scene, &self.registry, self.domain, self.volume)?;
        let render_end = Instant::now();
        drop(exclusive);

        let order = visibility_order(&self.volume, &render_scene.camera);
        let before = self.transport.bytes_sent();
        let composite = binary_swap(self.transport.as_ref(), &local, &order)?;
        let composite_bytes = self.transport.bytes_sent() - before;
        let composite_end = Instant::now();

        let docs = self
            .transport
            .gather_to_root(serde_json::to_vec(&metadata).expect("metadata serializes"))?;

        let report = FrameReport {
            step: payload.step,
            scene_version: self.scene.version,
            render_ms: ms(render_end - render_start),
            composite_ms: ms(composite_end - render_end),
            stations: stats.stations,
            rays: stats.rays,
            composite_bytes,
            chain_dims,
        };

        if let (Some(root), Some(image), Some(docs)) = (self.root.as_mut(), composite, docs) {
            let image = Arc::new(image);
            self.last_image = Some(image.clone());
            let docs: Vec<Value> = docs
                .iter()
                .map(|b| serde_json::from_slice(b).unwrap_or(Value::Null))
                .collect();
            let merged = merge_metadata(&docs);
            let index = {
                let mut timeline = root.timeline.lock().unwrap();
                timeline.push(FrameTiming {
                    step: payload.step,
                    render_start,
                    render_end,
                    composite_end,
                    send_start: None,
                    send_end: None,
                });
                timeline.len() - 1
            };
            let (sink, timeline, options) = (root.sink.clone(), root.timeline.clone(), root.encoder);
            let (sent, failures) = (root.frames_sent.clone(), root.send_failures.clone());
            let step = payload.step;
            root.in_flight = Some(std::thread::spawn(move || {
                let send_start = Instant::now();
                std::thread::sleep(options.delay);
                let result = encode_frame(&image, options.encoding, options.quality)
                    .map_err(|e: EncodeError| std::io::Error::other(e))
                    .and_then(|encoded| {
                        let frame = FrameMessage::new(step, encoded, merged);
                        sink.lock().unwrap().deliver(&frame)
                    });
                match result {
                    Ok(()) => *sent.lock().unwrap() += 1,
                    Err(e) => {
                        *failures.lock().unwrap() += 1;
                        tracing::warn!(step, error = %e, "frame delivery failed");
                    }
                }
                let mut timeline = timeline.lock().unwrap();
                timeline[index].send_start = Some(send_start);
                timeline[index].send_end = Some(Instant::now());
            }));
        }
        Ok(FrameOutcome::Rendered(report))
    }

    fn abort(&mut self, reason: String) -> FrameOutcome {
        if let Some(root) = self.root.as_mut() {
            tracing::warn!(%reason, "frame aborted, keeping previous scene");
            root.aborted += 1;
            root.pending = SceneState {
                version: root.pending.version.max(self.scene.version),
                ..self.scene.clone()
            };
            if let Err(e) = root.sink.lock().unwrap().notify(&error_line(format!("frame aborted: {reason}"))) {
                tracing::warn!(error = %e, "could not report aborted frame");
            }
        }
        FrameOutcome::Aborted(reason)
    }

    /// Serializes the local render (source update and ray casting) with every other
    /// rank holding the same gate. In-process ranks on a host with fewer cores than
    /// ranks then report render times that reflect their own share of the work.
    pub fn set_render_gate(&mut self, gate: Arc<Mutex<()>>) {
        self.render_gate = Some(gate);
    }

    /// Full-precision composite of the last rendered frame; rank 0 only.
    pub fn last_image(&self) -> Option<&LocalImage<S>> {
        self.last_image.as_deref()
    }

    /// Waits for the frame in flight and closes the sink. Rank 0 only does work.
    pub fn finish(&mut self) -> RootSummary {
        let Some(root) = self.root.as_mut() else {
            return RootSummary::default();
        };
        if let Some(handle) = root.in_flight.take() {
            let _ = handle.join();
        }
        if let Err(e) = root.sink.lock().unwrap().close() {
            tracing::warn!(error = %e, "closing frame sink failed");
        }
        self.summary()
    }

    /// Counters kept by rank 0; empty elsewhere.
    pub fn summary(&self) -> RootSummary {
        match &self.root {
            None => RootSummary::default(),
            Some(root) => RootSummary {
                frames_sent: *root.frames_sent.lock().unwrap(),
                send_failures: *root.send_failures.lock().unwrap(),
                frames_aborted: root.aborted,
                steering: root.steering,
                transcript: root.transcript.clone(),
                timeline: root.timeline.lock().unwrap().clone(),
            },
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RootSummary {
    pub frames_sent: u64,
    pub send_failures: u64,
    pub frames_aborted: u64,
    pub steering: SteeringReport,
    /// Every steering line with the tick at which it was drained.
    pub transcript: Vec<(u64, String)>,
    pub timeline: Vec<FrameTiming>,
}
