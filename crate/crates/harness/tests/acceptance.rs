//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the verdict lines are always
//! printed. A criterion listed in `KNOWN_UNATTAINABLE` still prints FAIL when it
//! fails but does not fail the run; everything else must pass.

use insitu_core::composite::{binary_swap, composite_sequential, VisibilityOrder};
use insitu_core::field::{FieldVector, FramePayload, Source, SourceDescriptor, SourceError};
use insitu_core::functor::{parse_chain, FunctorRegistry, DEFAULT_MAX_CHAIN_LENGTH};
use insitu_core::image::{LocalImage, Rgba};
use insitu_core::protocol::ImageEncoding;
use insitu_core::runtime::{base64_len, encode_frame, merge_metadata, EncoderOptions, MemorySink, RootIo, ScriptedInbox};
use insitu_core::transport::{LocalTransport, Transport};
use insitu_core::Real;
use insitu_gateway::{GatewayConfig, GatewayThread};
use insitu_sim::sources::SOURCE_NAMES;
use insitu_sim::{Harness, HarnessConfig, Pair, Triple};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::ExitCode;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

/// Criteria whose stated expectation cannot be met as written; see the detail line.
const KNOWN_UNATTAINABLE: &[&str] = &["functor-chains"];

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("decomposition-oracle", decomposition_oracle),
        ("binary-swap-equivalence", binary_swap_equivalence),
        ("functor-chains", functor_chains),
        ("no-touch", no_touch),
        ("metadata-merge", metadata_merge),
        ("scaling-trend", scaling_trend),
        ("pipeline-overlap", pipeline_overlap),
        ("protocol-round-trip", protocol_round_trip),
        ("base64-law", base64_law),
    ];
    // `cargo test -- <filter>` passes a name filter; `--list` and flags are ignored.
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut unexpected = 0;
    for (name, check) in criteria {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS {name} ({secs:.1} s): {detail}"),
            Err(detail) => {
                let known = KNOWN_UNATTAINABLE.contains(&name);
                println!("FAIL {name} ({secs:.1} s): {detail}{}", if known { " [documented]" } else { "" });
                if !known {
                    unexpected += 1;
                }
            }
        }
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{unexpected} criterion(s) failed");
        ExitCode::FAILURE
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn mem_io(config: &HarnessConfig, script: Vec<(u64, String)>, sink: MemorySink) -> RootIo {
    RootIo {
        inbox: Box::new(ScriptedInbox::new(script)),
        sink: Box::new(sink),
        encoder: EncoderOptions {
            encoding: config.encoding,
            quality: config.quality,
            delay: Duration::from_millis(config.encode_delay_ms),
        },
    }
}

/// 64³ volume, 480×270 image, every source active; 1, 2, 4 and 8 ranks.
fn decomposition_oracle() -> Check {
    let start = Instant::now();
    let mut reference: Option<LocalImage<Real>> = None;
    let mut worst: f64 = 0.0;
    for split in [[1, 1, 1], [2, 1, 1], [2, 2, 1], [2, 2, 2]] {
        let config = HarnessConfig {
            ranks: Triple(split),
            steps: 3,
            period: 3,
            active: SOURCE_NAMES.iter().map(|s| s.to_string()).collect(),
            ..HarnessConfig::default()
        };
        let out = Harness::new(config.clone())
            .with_io(mem_io(&config, vec![], MemorySink::new()))
            .keep_images(true)
            .run()
            .map_err(|e| e.to_string())?;
        let (_, image) = out.images.into_iter().next().ok_or("no frame rendered")?;
        ensure([image.width, image.height] == [480, 270], || "wrong image size".into())?;
        match &reference {
            None => reference = Some(image),
            Some(r) => worst = worst.max(image.max_abs_diff(r).map_err(|e| e.to_string())? as f64),
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= 1e-4, || format!("max channel difference {worst:e} > 1e-4"))?;
    ensure(secs < 60.0, || format!("took {secs:.1} s, limit 60 s"))?;
    Ok(format!("1/2/4/8 ranks, max channel difference {worst:.2e} <= 1e-4, {secs:.1} s < 60 s"))
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> LocalImage<f64> {
    let pixels = (0..w * h)
        .map(|_| {
            let a: f64 = if rng.gen_bool(0.2) { 0.0 } else { rng.gen() };
            Rgba::from_straight([rng.gen(), rng.gen(), rng.gen(), a])
        })
        .collect();
    LocalImage {
        width: w,
        height: h,
        pixels,
        order_key: 0,
    }
}

fn binary_swap_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut worst, mut worst_ratio) = (0.0f64, 0.0f64);
    for ranks in [2usize, 4, 8, 16] {
        for (w, h) in [(96, 54), (33, 17)] {
            let images: Vec<_> = (0..ranks).map(|_| random_image(&mut rng, w, h)).collect();
            let mut perm: Vec<usize> = (0..ranks).collect();
            perm.shuffle(&mut rng);
            let order = VisibilityOrder(perm);
            let expected = composite_sequential(&images, order.ranks()).map_err(|e| e.to_string())?;
            let handles: Vec<_> = LocalTransport::world(ranks)
                .into_iter()
                .map(|t| {
                    let (img, order) = (images[t.rank()].clone(), order.clone());
                    std::thread::spawn(move || {
                        let out = binary_swap(&t, &img, &order).map_err(|e| e.to_string());
                        (out, t.bytes_sent())
                    })
                })
                .collect();
            let image_bytes = images[0].byte_size() as f64;
            let mut composite = None;
            for h in handles {
                let (out, bytes) = h.join().map_err(|_| "rank panicked")?;
                worst_ratio = worst_ratio.max(bytes as f64 / image_bytes);
                if let Some(img) = out? {
                    composite = Some(img);
                }
            }
            let got = composite.ok_or("no composite on rank 0")?;
            worst = worst.max(got.max_abs_diff(&expected).map_err(|e| e.to_string())?);
        }
    }
    ensure(worst <= 1e-6, || format!("max difference {worst:e} > 1e-6"))?;
    ensure(worst_ratio <= 2.0, || format!("a rank sent {worst_ratio:.3}x the image size"))?;
    Ok(format!("R in 2,4,8,16: max diff {worst:.1e} <= 1e-6, max per-rank bytes {worst_ratio:.3}x image <= 2x"))
}

fn eval_chain(text: &str, input: &[f64]) -> Result<Vec<f64>, String> {
    let reg = FunctorRegistry::<f64>::with_builtins();
    let chain = parse_chain(text, &reg, &reg.limits(DEFAULT_MAX_CHAIN_LENGTH), input.len()).map_err(|e| e.to_string())?;
    Ok(chain.eval(&FieldVector::new(input)).as_slice().to_vec())
}

/// Independent arithmetic for one functor.
fn apply(name: &str, arg: &[f64], x: &[f64]) -> Vec<f64> {
    let a = |i: usize| if arg.len() == 1 { arg[0] } else { arg[i] };
    match name {
        "add" => x.iter().enumerate().map(|(i, v)| v + a(i)).collect(),
        "mul" => x.iter().enumerate().map(|(i, v)| v * a(i)).collect(),
        "pow" => x.iter().enumerate().map(|(i, v)| v.powf(a(i))).collect(),
        "length" => vec![x.iter().map(|v| v * v).sum::<f64>().sqrt()],
        "sum" => vec![x.iter().sum()],
        _ => unreachable!(),
    }
}

fn functor_chains() -> Check {
    let second = eval_chain("mul(0,1,0) | sum", &[7.0, 9.0, 2.0])?;
    ensure(second == [9.0], || format!("mul(0,1,0) | sum on (7,9,2) gave {second:?}, expected 9.0"))?;

    let reg = FunctorRegistry::<f64>::with_builtins();
    let limits = reg.limits(DEFAULT_MAX_CHAIN_LENGTH);
    let mut rng = ChaCha8Rng::seed_from_u64(0xc4a1);
    for case in 0..1000 {
        let dim = rng.gen_range(1..=4);
        let len = rng.gen_range(0..=DEFAULT_MAX_CHAIN_LENGTH);
        let mut d = dim;
        let mut steps: Vec<(&str, Vec<f64>)> = Vec::new();
        for _ in 0..len {
            let name = ["add", "mul", "length", "sum", "pow"][rng.gen_range(0..5)];
            let arg: Vec<f64> = match name {
                "length" | "sum" => Vec::new(),
                "pow" => (0..if rng.gen_bool(0.5) { 1 } else { d })
                    .map(|_| [0.0, 0.5, 1.0, 2.0, 3.0][rng.gen_range(0..5)])
                    .collect(),
                _ => (0..if rng.gen_bool(0.5) { 1 } else { d })
                    .map(|_| rng.gen_range(-400..=400) as f64 / 100.0)
                    .collect(),
            };
            if arg.is_empty() {
                d = 1;
            }
            steps.push((name, arg));
        }
        let text = steps
            .iter()
            .map(|(n, a)| {
                if a.is_empty() {
                    n.to_string()
                } else {
                    format!("{n}({})", a.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","))
                }
            })
            .collect::<Vec<_>>()
            .join(" | ");
        let input: Vec<f64> = (0..dim).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let chain = parse_chain(&text, &reg, &limits, dim).map_err(|e| format!("case {case}: {text}: {e}"))?;
        let got = chain.eval(&FieldVector::new(&input));
        let fold = steps.iter().fold(input.clone(), |x, (n, a)| apply(n, a, &x));
        let exact = got.dim() == fold.len()
            && got.as_slice().iter().zip(&fold).all(|(g, f)| g.to_bits() == f.to_bits() || (g.is_nan() && f.is_nan()));
        ensure(exact, || format!("case {case}: {text} on {input:?}: {:?} vs fold {fold:?}", got.as_slice()))?;
    }

    let first = eval_chain("mul(2,3,4) | add(1) | length", &[1.0, 1.0, 1.0])?;
    let stated = 5.0;
    if first.len() == 1 && (first[0] - stated).abs() < 1e-12 {
        return Ok("both worked chains and 1000 random chains match".into());
    }
    Err(format!(
        "mul(0,1,0) | sum -> 9 ok and 1000 random chains match the fold exactly, but \
         mul(2,3,4) | add(1) | length on (1,1,1) = |(3,4,5)| = {:.4} (sqrt 50), not the stated {stated}; \
         the stated value is arithmetically inconsistent with the chain",
        first[0]
    ))
}

struct Counted(Box<dyn Source<Real>>, Arc<AtomicU64>);

impl Source<Real> for Counted {
    fn descriptor(&self) -> &SourceDescriptor {
        self.0.descriptor()
    }

    fn update(&mut self, enabled: bool, payload: &FramePayload) -> Result<(), SourceError> {
        self.0.update(enabled, payload)
    }

    fn get(&self, index: [i64; 3]) -> FieldVector<Real> {
        self.1.fetch_add(1, Ordering::Relaxed);
        self.0.get(index)
    }
}

fn no_touch() -> Check {
    let n = SOURCE_NAMES.len();
    let mut checked = 0;
    for mask in 0..(1u32 << n) - 1 {
        let active: Vec<String> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| SOURCE_NAMES[i].into()).collect();
        let config = HarnessConfig {
            size: Triple([16; 3]),
            ranks: Triple([2, 2, 2]),
            steps: 2,
            period: 1,
            image: Pair([64, 40]),
            active: active.clone(),
            ..HarnessConfig::default()
        };
        let shared: Vec<Arc<AtomicU64>> = (0..n).map(|_| Arc::new(AtomicU64::new(0))).collect();
        let handles = shared.clone();
        let out = Harness::new(config.clone())
            .with_io(mem_io(&config, vec![], MemorySink::new()))
            .map_sources(move |_, source| {
                let id = SOURCE_NAMES.iter().position(|s| *s == source.descriptor().name).unwrap();
                Box::new(Counted(source, handles[id].clone()))
            })
            .run()
            .map_err(|e| e.to_string())?;
        ensure(out.metrics.frames_rendered == 2, || format!("{active:?}: frames not rendered"))?;
        for (i, c) in shared.iter().enumerate() {
            let reads = c.load(Ordering::Relaxed);
            if mask & (1 << i) == 0 {
                ensure(reads == 0, || format!("inactive {} read {reads} times with {active:?}", SOURCE_NAMES[i]))?;
            } else {
                ensure(reads > 0, || format!("active {} never read", SOURCE_NAMES[i]))?;
            }
        }
        checked += 1;
    }
    Ok(format!("{checked} strict subsets over 8 ranks: every inactive source sampled exactly 0 times"))
}

fn leaf() -> impl Strategy<Value = Value> {
    prop_oneof![
        any::<i32>().prop_map(Value::from),
        "[a-z]{0,5}".prop_map(Value::from),
        prop::collection::vec(any::<i16>().prop_map(Value::from), 0..4).prop_map(Value::Array),
    ]
}

fn doc() -> impl Strategy<Value = Value> {
    prop::collection::btree_map("[a-e]", leaf(), 0..5).prop_map(|m| Value::Object(m.into_iter().collect::<Map<_, _>>()))
}

fn metadata_merge() -> Check {
    let mut runner = TestRunner::new(Config {
        cases: 512,
        failure_persistence: None,
        ..Config::default()
    });
    runner
        .run(&prop::collection::vec(doc(), 0..6), |docs| {
            let merged = merge_metadata(&docs);
            for (key, value) in merged.as_object().unwrap() {
                let first = docs.iter().find_map(|d| d.get(key)).unwrap();
                if first.is_array() {
                    // Arrays concatenate across every document whose value is also an array.
                    let mut expected = Vec::new();
                    for d in &docs {
                        if let Some(Value::Array(a)) = d.get(key) {
                            expected.extend(a.iter().cloned());
                        }
                    }
                    prop_assert_eq!(value, &Value::Array(expected));
                } else {
                    prop_assert_eq!(value, first);
                }
            }
            Ok(())
        })
        .map_err(|e| format!("first-wins/concatenation: {e}"))?;
    runner
        .run(&(1usize..64), |n| {
            let docs: Vec<Value> = (0..n).map(|i| json!({ format!("k{i}"): i })).collect();
            prop_assert_eq!(merge_metadata(&docs).as_object().unwrap().len(), n);
            Ok(())
        })
        .map_err(|e| format!("distinct keys: {e}"))?;
    runner
        .run(&doc(), |d| {
            prop_assert_eq!(merge_metadata(std::slice::from_ref(&d)), d);
            Ok(())
        })
        .map_err(|e| format!("idempotence: {e}"))?;
    Ok("first-wins, array concatenation, N distinct keys -> N keys, idempotence: 512 cases each".into())
}

fn scaling_trend() -> Check {
    let mut rows = Vec::new();
    for n in [1usize, 2, 3] {
        let config = HarnessConfig {
            size: Triple([48; 3]),
            ranks: Triple([n; 3]),
            steps: 4,
            period: 1,
            image: Pair([320, 180]),
            active: vec!["density".into(), "velocity".into()],
            exclusive_render: Some(true),
            ..HarnessConfig::default()
        };
        let out = Harness::new(config.clone())
            .with_io(mem_io(&config, vec![], MemorySink::new()))
            .run()
            .map_err(|e| e.to_string())?;
        // Skip the first frame: it pays for thread-pool start-up and cold caches.
        let frames = &out.metrics.frames[1..];
        let cells = frames.len() as f64 * (n * n * n) as f64;
        let stations = frames.iter().flat_map(|f| &f.stations).sum::<u64>() as f64 / cells;
        let render = frames.iter().flat_map(|f| &f.render_ms).sum::<f64>() / cells;
        rows.push((n * n * n, stations, render));
    }
    let text = rows
        .iter()
        .map(|(r, s, t)| format!("{r} ranks: {s:.0} stations, {t:.2} ms"))
        .collect::<Vec<_>>()
        .join("; ");
    ensure(rows.windows(2).all(|w| w[1].1 <= w[0].1), || format!("stations increased: {text}"))?;
    ensure(rows[1].2 < rows[0].2, || format!("render time did not drop from 1 to 8 ranks: {text}"))?;
    Ok(format!("mean per rank {text}"))
}

fn pipeline_overlap() -> Check {
    let config = HarnessConfig {
        size: Triple([16; 3]),
        ranks: Triple([2, 1, 1]),
        steps: 5,
        period: 1,
        image: Pair([64, 40]),
        encode_delay_ms: 120,
        ..HarnessConfig::default()
    };
    let out = Harness::new(config.clone())
        .with_io(mem_io(&config, vec![], MemorySink::new()))
        .run()
        .map_err(|e| e.to_string())?;
    let timeline = &out.summary.timeline;
    ensure(timeline.len() == 5, || format!("{} frames timed", timeline.len()))?;
    let mut checked = 0;
    for pair in timeline.windows(2) {
        let (frame, next) = (&pair[0], &pair[1]);
        let send_end = frame.send_end.ok_or("frame never finished sending")?;
        let next_step = out
            .step_starts
            .iter()
            .find(|(s, _)| *s == frame.step + 1)
            .map(|(_, t)| *t)
            .ok_or("missing step start")?;
        ensure(next_step < send_end, || {
            format!("step {} started after frame {} was sent", frame.step + 1, frame.step)
        })?;
        ensure(next.render_start >= send_end, || {
            format!("frame {} rendered before frame {} was sent", next.step, frame.step)
        })?;
        checked += 1;
    }
    Ok(format!(
        "{checked} frame pairs with a 120 ms encoder: step S+1 starts before send S ends, render S+1 starts after"
    ))
}

struct Probe {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl Probe {
    fn connect(addr: std::net::SocketAddr) -> Result<Probe, String> {
        let stream = TcpStream::connect(addr).map_err(|e| e.to_string())?;
        stream.set_read_timeout(Some(Duration::from_secs(10))).map_err(|e| e.to_string())?;
        let writer = stream.try_clone().map_err(|e| e.to_string())?;
        Ok(Probe {
            reader: BufReader::new(stream),
            writer,
        })
    }

    fn send(&mut self, v: Value) -> Result<(), String> {
        writeln!(self.writer, "{v}").map_err(|e| e.to_string())
    }

    fn recv(&mut self, kind: &str) -> Result<Value, String> {
        loop {
            let mut line = String::new();
            if self.reader.read_line(&mut line).map_err(|e| format!("waiting for {kind}: {e}"))? == 0 {
                return Err(format!("connection closed waiting for {kind}"));
            }
            let v: Value = serde_json::from_str(&line).map_err(|e| e.to_string())?;
            if v["type"] == kind {
                return Ok(v);
            }
        }
    }
}

fn protocol_round_trip() -> Check {
    let gateway = GatewayThread::start(GatewayConfig {
        sim_port: 0,
        client_port: 0,
        ..GatewayConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let config = HarnessConfig {
        name: "acceptance".into(),
        size: Triple([16; 3]),
        ranks: Triple([2, 2, 1]),
        steps: 100_000,
        period: 1,
        image: Pair([32, 24]),
        gateway: Some(gateway.sim_addr().to_string()),
        encoding: ImageEncoding::RawRgba8,
        encode_delay_ms: 20,
        ..HarnessConfig::default()
    };
    let sim = std::thread::spawn(move || Harness::new(config).run());

    let mut probe = Probe::connect(gateway.client_addr())?;
    let deadline = Instant::now() + Duration::from_secs(20);
    let session = loop {
        probe.send(json!({"type": "list"}))?;
        let list = probe.recv("list")?;
        if let Some(s) = list["sessions"].as_array().and_then(|a| a.first()) {
            ensure(s["name"] == "acceptance" && s["ranks"] == 4, || format!("unexpected session {s}"))?;
            break s["id"].as_u64().ok_or("session without id")?;
        }
        ensure(Instant::now() < deadline, || "session never appeared".into())?;
        std::thread::sleep(Duration::from_millis(20));
    };
    // Let a few frames pass before joining so there is a cached one to receive.
    std::thread::sleep(Duration::from_millis(400));
    probe.send(json!({"type": "observe", "session": session}))?;
    probe.recv("observe")?;
    let cached = probe.recv("frame")?;
    let cached_step = cached["step"].as_u64().ok_or("frame without step")?;
    ensure(cached_step >= 1, || "cached frame has no step".into())?;
    let mut last = cached_step;
    while last < 3 {
        last = probe.recv("frame")?["step"].as_u64().unwrap_or(0);
    }
    probe.send(json!({"type": "steer", "payload": {"action": "exit"}}))?;
    let exit = probe.recv("exit")?;
    ensure(exit["session"] == session, || format!("exit notice {exit}"))?;
    let out = sim.join().map_err(|_| "harness panicked")?.map_err(|e| e.to_string())?;
    ensure(out.metrics.frames_sent >= 3, || format!("{} frames sent", out.metrics.frames_sent))?;
    ensure(out.metrics.steps < 100_000, || "exit was not honoured".into())?;
    Ok(format!(
        "registered session {session}, list seen, cached frame step {cached_step} on join, \
         exit steered after {} frames / {} steps",
        out.metrics.frames_sent, out.metrics.steps
    ))
}

fn base64_law() -> Check {
    let mut checked = 0;
    for (w, h) in [(1, 1), (2, 1), (3, 1), (5, 7), (64, 48), (480, 270), (17, 13)] {
        let image = LocalImage::<Real> {
            width: w,
            height: h,
            pixels: (0..w * h).map(|i| Rgba::new((i % 7) as Real / 7.0, 0.5, 0.25, 1.0)).collect(),
            order_key: 0,
        };
        let raw = encode_frame(&image, ImageEncoding::RawRgba8, 100).map_err(|e| e.to_string())?;
        let bytes = w * h * 4;
        ensure(raw.data.len() == 4 * bytes.div_ceil(3), || format!("{w}x{h}: {} chars", raw.data.len()))?;
        ensure(raw.data.len() == base64_len(bytes), || "base64_len disagrees".into())?;
        if bytes % 3 == 0 {
            let overhead = (raw.data.len() - bytes) as f64 / bytes as f64;
            ensure((overhead - 1.0 / 3.0).abs() < 1e-12, || format!("{w}x{h}: overhead {overhead}"))?;
        }
        checked += 1;
    }
    let frame = 480 * 270 * 4;
    Ok(format!(
        "{checked} sizes obey 4*ceil(n/3); 480x270 frame: {frame} bytes -> {} chars, overhead {:.1}%",
        base64_len(frame),
        100.0 * (base64_len(frame) - frame) as f64 / frame as f64
    ))
}
