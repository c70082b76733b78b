use crate::config::{format_transcript, parse_transcript, ConfigError, HarnessConfig};
use crate::sources::{publish, registry_of, share, toy_sources, Scratch, SOURCE_NAMES};
use crate::toy::ToyState;
use insitu_core::field::{FramePayload, Source};
use insitu_core::functor::{FunctorRegistry, DEFAULT_MAX_CHAIN_LENGTH};
use insitu_core::protocol::{RegisterMessage, SourceInfo};
use insitu_core::render::Camera;
use insitu_core::runtime::{
    ControlPoint, DirectorySink, EncoderOptions, FrameOutcome, FrameReport, FrameSink, GatewayLink, NullSink,
    RankRuntime, RootIo, RootSummary, RuntimeError, SceneState, ScriptedInbox, SourceScene, SteeringInbox,
    SteeringReport,
};
use insitu_core::transport::{LocalTransport, Transport};
use insitu_core::{Image, Real};
use serde::Serialize;
use serde_json::json;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("gateway: {0}")]
    Gateway(std::io::Error),
    #[error("output: {0}")]
    Output(std::io::Error),
    #[error("rank {rank}: {source}")]
    Rank { rank: usize, source: RuntimeError },
    #[error("rank {0} panicked")]
    Panic(usize),
}

/// Per-frame numbers, one entry per rank in the vectors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameMetrics {
    pub step: u64,
    pub scene_version: u64,
    pub render_ms: Vec<f64>,
    pub composite_ms: Vec<f64>,
    pub stations: Vec<u64>,
    pub rays: Vec<u64>,
    pub composite_bytes: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub name: String,
    pub ranks: usize,
    pub steps: u64,
    pub frames_rendered: u64,
    pub frames_sent: u64,
    pub frames_aborted: u64,
    pub send_failures: u64,
    /// Mean over frames and ranks of the local render time.
    pub mean_render_ms: f64,
    /// Mean over frames and ranks of the compositing time.
    pub mean_composite_ms: f64,
    /// Mean over frames and ranks of ray-march stations per rank.
    pub mean_stations: f64,
    pub steering: SteeringReport,
    pub frames: Vec<FrameMetrics>,
}

/// Everything a run leaves behind; metrics are what the binary prints.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Metrics,
    pub summary: RootSummary,
    /// Start of every simulation step on rank 0.
    pub step_starts: Vec<(u64, Instant)>,
    /// Full-precision frames from rank 0, when requested.
    pub images: Vec<(u64, Image)>,
}

type SourceMap = Arc<dyn Fn(usize, Box<dyn Source<Real>>) -> Box<dyn Source<Real>> + Send + Sync>;

/// Builder for one simulation run over in-process ranks.
pub struct Harness {
    config: HarnessConfig,
    io: Option<RootIo>,
    keep_images: bool,
    map_source: Option<SourceMap>,
}

impl Harness {
    pub fn new(config: HarnessConfig) -> Self {
        Self {
            config,
            io: None,
            keep_images: false,
            map_source: None,
        }
    }

    /// Replaces the endpoints derived from the config (gateway, transcript, output).
    pub fn with_io(mut self, io: RootIo) -> Self {
        self.io = Some(io);
        self
    }

    /// Keeps rank 0's unquantized composite of every frame in [`RunOutput::images`].
    pub fn keep_images(mut self, keep: bool) -> Self {
        self.keep_images = keep;
        self
    }

    /// Wraps every source before registration, e.g. to instrument it. Gets the rank.
    pub fn map_sources(
        mut self,
        f: impl Fn(usize, Box<dyn Source<Real>>) -> Box<dyn Source<Real>> + Send + Sync + 'static,
    ) -> Self {
        self.map_source = Some(Arc::new(f));
        self
    }

    pub fn run(self) -> Result<RunOutput, HarnessError> {
        let config = self.config;
        config.validate()?;
        let io = match self.io {
            Some(io) => io,
            None => root_io(&config)?,
        };
        let volume = config.volume()?;
        let scene = initial_scene(&config)?;
        let ranks = volume.rank_count();
        let exclusive = config.exclusive_render.unwrap_or_else(|| {
            ranks > std::thread::available_parallelism().map_or(1, |n| n.get())
        });
        let gate = exclusive.then(|| Arc::new(Mutex::new(())));

        let mut io = Some(io);
        let handles: Vec<_> = LocalTransport::world(ranks)
            .into_iter()
            .map(|transport| {
                let rank = transport.rank();
                let io = if rank == 0 { io.take() } else { None };
                let (config, scene, gate, map) = (config.clone(), scene.clone(), gate.clone(), self.map_source.clone());
                let keep = self.keep_images;
                std::thread::Builder::new()
                    .name(format!("rank-{rank}"))
                    .spawn(move || rank_main(transport, config, scene, io, gate, map, keep))
                    .expect("spawn rank thread")
            })
            .collect();

        let mut results = Vec::with_capacity(ranks);
        let mut first_error = None;
        for (rank, handle) in handles.into_iter().enumerate() {
            match handle.join() {
                Ok(Ok(r)) => results.push(r),
                Ok(Err(source)) => {
                    first_error.get_or_insert(HarnessError::Rank { rank, source });
                }
                Err(_) => {
                    first_error.get_or_insert(HarnessError::Panic(rank));
                }
            }
        }
        if let Some(e) = first_error {
            return Err(e);
        }

        let root = &results[0];
        if let Some(path) = &config.record_transcript {
            std::fs::write(path, format_transcript(&root.summary.transcript)).map_err(HarnessError::Output)?;
        }
        let frames = collect_frames(&results);
        let mean = |f: &dyn Fn(&FrameMetrics) -> Vec<f64>| {
            let all: Vec<f64> = frames.iter().flat_map(f).collect();
            if all.is_empty() {
                0.0
            } else {
                all.iter().sum::<f64>() / all.len() as f64
            }
        };
        let metrics = Metrics {
            name: config.name.clone(),
            ranks,
            steps: root.steps,
            frames_rendered: frames.len() as u64,
            frames_sent: root.summary.frames_sent,
            frames_aborted: root.summary.frames_aborted,
            send_failures: root.summary.send_failures,
            mean_render_ms: mean(&|f| f.render_ms.clone()),
            mean_composite_ms: mean(&|f| f.composite_ms.clone()),
            mean_stations: mean(&|f| f.stations.iter().map(|&s| s as f64).collect()),
            steering: root.summary.steering,
            frames,
        };
        let root = results.swap_remove(0);
        Ok(RunOutput {
            metrics,
            summary: root.summary,
            step_starts: root.step_starts,
            images: root.images,
        })
    }
}

/// Endpoints from the config: gateway link or headless directory, transcript or gateway steering.
pub fn root_io(config: &HarnessConfig) -> Result<RootIo, HarnessError> {
    let encoder = EncoderOptions {
        encoding: config.encoding,
        quality: config.quality,
        delay: Duration::from_millis(config.encode_delay_ms),
    };
    let scripted = match &config.transcript {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
                path: path.clone(),
                source,
            })?;
            Some(ScriptedInbox::new(parse_transcript(&text)?))
        }
        None => None,
    };
    let (sink, inbox): (Box<dyn FrameSink>, Box<dyn SteeringInbox>) = match &config.gateway {
        Some(addr) => {
            let mut register = RegisterMessage::new(&config.name, config.volume()?.rank_count(), source_infos());
            register.token = config.token.clone();
            let (link, inbox) =
                GatewayLink::connect(addr.as_str(), &register, Duration::from_secs(10)).map_err(HarnessError::Gateway)?;
            tracing::info!(session = link.session(), %addr, "registered with gateway");
            match scripted {
                Some(s) => (Box::new(link), Box::new(s)),
                None => (Box::new(link), Box::new(inbox)),
            }
        }
        None => {
            let sink: Box<dyn FrameSink> = match &config.output {
                Some(dir) => Box::new(DirectorySink::new(dir).map_err(HarnessError::Output)?),
                None => Box::new(NullSink),
            };
            (sink, Box::new(scripted.unwrap_or_else(|| ScriptedInbox::new(Vec::new()))))
        }
    };
    Ok(RootIo { inbox, sink, encoder })
}

pub fn source_infos() -> Vec<SourceInfo> {
    [(SOURCE_NAMES[0], 1), (SOURCE_NAMES[1], 3), (SOURCE_NAMES[2], 3)]
        .into_iter()
        .map(|(name, feature_dim)| SourceInfo {
            name: name.into(),
            feature_dim,
        })
        .collect()
}

pub fn camera(config: &HarnessConfig) -> Camera {
    let size = config.size.0.map(|n| n as f64);
    let center = size.map(|n| 0.5 * n);
    let diagonal = size.iter().map(|n| n * n).sum::<f64>().sqrt();
    let c = &config.camera;
    Camera::orbit(center, c.distance * diagonal, c.azimuth, c.elevation, config.image.0[0], config.image.0[1])
}

/// Scene the run starts from: toy-specific ranges and transfer functions.
pub fn initial_scene(config: &HarnessConfig) -> Result<SceneState, ConfigError> {
    let mut scene = SceneState::new(camera(config), SOURCE_NAMES.len());
    let toy = &config.toy;
    let contrast = toy.shear_contrast + toy.kick_contrast;
    let speed = (toy.shear_speed.powi(2) + toy.perturbation.powi(2)).sqrt();
    let point = |t, rgba| ControlPoint { t, rgba };
    scene.sources[0] = SourceScene {
        points: vec![
            point(0.0, [0.05, 0.1, 0.4, 0.0]),
            point(0.45, [0.1, 0.5, 0.8, 0.0]),
            point(0.7, [0.9, 0.8, 0.3, 0.04]),
            point(1.0, [1.0, 0.3, 0.1, 0.12]),
        ],
        ..SourceScene::ramp(1.0 - contrast, 1.0 + contrast, 0.1)
    };
    scene.sources[1] = SourceScene {
        chain: "length".into(),
        points: vec![point(0.0, [0.0; 4]), point(1.0, [0.3, 0.9, 0.5, 0.06])],
        ..SourceScene::ramp(0.0, speed, 0.06)
    };
    scene.sources[2] = SourceScene {
        chain: "length".into(),
        points: vec![point(0.0, [0.0; 4]), point(1.0, [0.9, 0.4, 1.0, 0.06])],
        ..SourceScene::ramp(0.0, speed * (1.0 + contrast), 0.06)
    };
    scene.active = config.active_ids()?;
    scene.step_length = config.step_length;
    scene.early_termination_alpha = config.early_termination;
    scene.period = config.period;
    Ok(scene)
}

struct RankResult {
    summary: RootSummary,
    steps: u64,
    reports: Vec<FrameReport>,
    step_starts: Vec<(u64, Instant)>,
    images: Vec<(u64, Image)>,
}

fn rank_main(
    transport: LocalTransport,
    config: HarnessConfig,
    scene: SceneState,
    io: Option<RootIo>,
    gate: Option<Arc<Mutex<()>>>,
    map: Option<SourceMap>,
    keep_images: bool,
) -> Result<RankResult, RuntimeError> {
    let rank = transport.rank();
    let volume = config.volume().expect("validated");
    let domain = volume.local_domain(rank).expect("rank within volume");
    let mut state = ToyState::new(config.toy, volume.size(), domain);
    let shared = share(state.clone());
    let scratch = Scratch::default();
    let sources = toy_sources(&shared, &scratch)
        .into_iter()
        .map(|s| match &map {
            Some(f) => f(rank, s),
            None => s,
        })
        .collect();
    let mut rt = RankRuntime::new(
        Box::new(transport),
        volume,
        registry_of(sources),
        FunctorRegistry::with_builtins(),
        DEFAULT_MAX_CHAIN_LENGTH,
        scene,
        io,
    )?;
    if let Some(gate) = gate {
        rt.set_render_gate(gate);
    }

    let mut result = RankResult {
        summary: RootSummary::default(),
        steps: 0,
        reports: Vec::new(),
        step_starts: Vec::new(),
        images: Vec::new(),
    };
    let mut idle_ticks = 0u64;
    let run = (|| -> Result<(), RuntimeError> {
        while result.steps < config.steps {
            let control = rt.sync_control()?;
            if control.exit {
                break;
            }
            if !rt.take_step() {
                // Paused: keep serving the frozen state at a slow pace. Every rank
                // counts the same ticks, so they agree on when to render.
                idle_ticks += 1;
                if idle_ticks.is_multiple_of(config.pause_frame_ticks) {
                    frame(&mut rt, &mut result, state.step, keep_images)?;
                }
                std::thread::sleep(Duration::from_millis(config.pause_tick_ms));
                continue;
            }
            idle_ticks = 0;
            result.step_starts.push((state.step + 1, Instant::now()));
            state = state.step_toy();
            publish(&shared, state.clone());
            result.steps += 1;
            if state.step.is_multiple_of(rt.control().period) {
                frame(&mut rt, &mut result, state.step, keep_images)?;
            }
        }
        Ok(())
    })();
    result.summary = rt.finish();
    run.map(|()| result)
}

fn frame(
    rt: &mut RankRuntime<Real>,
    result: &mut RankResult,
    step: u64,
    keep_images: bool,
) -> Result<(), RuntimeError> {
    let payload = FramePayload {
        step,
        time: step as f64,
    };
    let metadata = json!({
        "step": step,
        "ranks": [rt.rank()],
        "bricks": [{"rank": rt.rank(), "offset": rt.domain().offset, "size": rt.domain().size}],
    });
    match rt.frame_pipeline(payload, metadata)? {
        FrameOutcome::Rendered(report) => {
            result.reports.push(report);
            if keep_images {
                if let Some(image) = rt.last_image() {
                    result.images.push((step, image.clone()));
                }
            }
        }
        FrameOutcome::Aborted(reason) => tracing::warn!(step, %reason, "frame aborted"),
    }
    Ok(())
}

fn collect_frames(results: &[RankResult]) -> Vec<FrameMetrics> {
    let count = results.iter().map(|r| r.reports.len()).min().unwrap_or(0);
    (0..count)
        .map(|i| {
            let per_rank = |f: fn(&FrameReport) -> f64| results.iter().map(|r| f(&r.reports[i])).collect();
            let per_rank_u = |f: fn(&FrameReport) -> u64| results.iter().map(|r| f(&r.reports[i])).collect();
            let first = &results[0].reports[i];
            FrameMetrics {
                step: first.step,
                scene_version: first.scene_version,
                render_ms: per_rank(|r| r.render_ms),
                composite_ms: per_rank(|r| r.composite_ms),
                stations: per_rank_u(|r| r.stations),
                rays: per_rank_u(|r| r.rays),
                composite_bytes: per_rank_u(|r| r.composite_bytes),
            }
        })
        .collect()
}
