mod common;

use common::*;
use insitu_core::field::{FramePayload, GlobalVolume};
use insitu_core::functor::{FunctorRegistry, DEFAULT_MAX_CHAIN_LENGTH};
use insitu_core::protocol::{FrameMessage, RegisterMessage};
use insitu_core::render::Camera;
use insitu_core::runtime::{
    decode_frame, ControlPoint, EncoderOptions, FrameOutcome, FrameReport, FrameSink, GatewayLink, MemorySink,
    RankRuntime, RootIo, RootSummary, SceneState, ScriptedInbox,
};
use insitu_core::transport::{LocalTransport, Transport};
use serde_json::json;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::time::{Duration, Instant};

struct Run {
    summary: RootSummary,
    frames: Vec<FrameMessage>,
    notes: Vec<String>,
    /// Per rank: frame outcomes in order.
    outcomes: Vec<Vec<FrameOutcome>>,
    /// Per rank: scene bytes after every rendered frame.
    scenes: Vec<Vec<Vec<u8>>>,
    steps: u64,
    step_starts: Vec<Instant>,
}

fn initial_scene() -> SceneState {
    let mut scene = SceneState::new(Camera::orbit([8.0; 3], 34.0, 0.5, 0.3, 32, 24), 2);
    scene.early_termination_alpha = 1.0;
    scene.sources[0].points = vec![
        ControlPoint { t: 0.0, rgba: [0.0, 0.0, 0.3, 0.0] },
        ControlPoint { t: 1.0, rgba: [1.0, 0.8, 0.2, 0.3] },
    ];
    scene.sources[1].chain = "length".into();
    scene.sources[1].max = 1.5;
    scene
}

fn run(split: [usize; 3], steps: u64, period: u64, script: Vec<(u64, String)>, delay: Duration) -> Run {
    let volume = GlobalVolume::new([16, 16, 16], split).unwrap();
    let sink = MemorySink::new();
    let mut scene = initial_scene();
    scene.period = period;
    let handles: Vec<_> = LocalTransport::world(volume.rank_count())
        .into_iter()
        .map(|t| {
            let (sink, scene, script) = (sink.clone(), scene.clone(), script.clone());
            std::thread::spawn(move || {
                let rank = t.rank();
                let domain = volume.local_domain(rank).unwrap();
                let io = (rank == 0).then(|| RootIo {
                    inbox: Box::new(ScriptedInbox::new(script)),
                    sink: Box::new(sink) as Box<dyn FrameSink>,
                    encoder: EncoderOptions { delay, ..EncoderOptions::default() },
                });
                let mut rt = RankRuntime::new(
                    Box::new(t),
                    volume,
                    registry_for::<f32>(domain),
                    FunctorRegistry::with_builtins(),
                    DEFAULT_MAX_CHAIN_LENGTH,
                    scene,
                    io,
                )
                .unwrap();
                let (mut outcomes, mut scenes, mut starts) = (Vec::new(), Vec::new(), Vec::new());
                let mut step = 0u64;
                while step < steps {
                    let control = rt.sync_control().unwrap();
                    if control.exit {
                        break;
                    }
                    if !rt.take_step() {
                        std::thread::sleep(Duration::from_millis(1));
                        continue;
                    }
                    starts.push(Instant::now());
                    step += 1;
                    if step.is_multiple_of(rt.control().period) {
                        let payload = FramePayload { step, time: step as f64 };
                        let meta = json!({"ranks": [rank], "step": step, "rank": rank});
                        let outcome = rt.frame_pipeline(payload, meta).unwrap();
                        if matches!(outcome, FrameOutcome::Rendered(_)) {
                            scenes.push(rt.scene().to_bytes());
                        }
                        outcomes.push(outcome);
                    }
                }
                let summary = rt.finish();
                (summary, outcomes, scenes, step, starts)
            })
        })
        .collect();
    let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    let mut run = Run {
        summary: results[0].0.clone(),
        frames: sink.frames(),
        notes: sink.notes(),
        outcomes: Vec::new(),
        scenes: Vec::new(),
        steps: results[0].3,
        step_starts: results[0].4.clone(),
    };
    for (_, outcomes, scenes, _, _) in results {
        run.outcomes.push(outcomes);
        run.scenes.push(scenes);
    }
    run
}

fn steer(payload: serde_json::Value) -> String {
    json!({"type": "steer", "payload": payload}).to_string()
}

fn reports(outcomes: &[FrameOutcome]) -> Vec<&FrameReport> {
    outcomes
        .iter()
        .filter_map(|o| match o {
            FrameOutcome::Rendered(r) => Some(r),
            FrameOutcome::Aborted(_) => None,
        })
        .collect()
}

#[test]
fn period_five_over_ten_steps_sends_two_frames() {
    let run = run([2, 2, 1], 10, 5, vec![], Duration::ZERO);
    assert_eq!(run.steps, 10);
    assert_eq!(run.summary.frames_sent, 2);
    let steps: Vec<u64> = run.frames.iter().map(|f| f.step).collect();
    assert_eq!(steps, vec![5, 10]);
}

#[test]
fn frames_sent_is_floor_of_steps_over_period() {
    for (steps, period) in [(7u64, 1u64), (7, 3), (9, 4), (3, 5)] {
        let run = run([2, 1, 1], steps, period, vec![], Duration::ZERO);
        assert_eq!(run.summary.frames_sent, steps / period, "steps {steps} period {period}");
    }
}

#[test]
fn scene_bytes_identical_on_every_rank() {
    let script = vec![
        (2, steer(json!({"action": "set_functor_chain", "source": "swirl", "chain": "mul(0,1,0) | sum"}))),
        (4, steer(json!({"action": "set_range", "source": "blobs", "min": 0.1, "max": 0.9}))),
    ];
    let run = run([2, 2, 2], 6, 1, script, Duration::ZERO);
    for rank in 1..8 {
        assert_eq!(run.scenes[rank], run.scenes[0], "rank {rank}");
    }
    let dims: Vec<Vec<Vec<usize>>> = run
        .outcomes
        .iter()
        .map(|o| reports(o).iter().map(|r| r.chain_dims.clone()).collect())
        .collect();
    assert!(dims.iter().all(|d| d == &dims[0]));
    let versions: Vec<u64> = reports(&run.outcomes[0]).iter().map(|r| r.scene_version).collect();
    assert!(versions.windows(2).all(|w| w[0] <= w[1]), "{versions:?}");
    assert_eq!(*versions.last().unwrap(), 2);
}

#[test]
fn invalid_chain_aborts_frame_and_keeps_scene() {
    let script = vec![(2, steer(json!({"action": "set_functor_chain", "source": "swirl", "chain": "mul(1,2) | sum"})))];
    let run = run([2, 1, 1], 5, 1, script, Duration::ZERO);
    for outcomes in &run.outcomes {
        assert_eq!(outcomes.len(), 5);
        assert!(matches!(outcomes[2], FrameOutcome::Aborted(_)), "{:?}", outcomes[2]);
        assert_eq!(outcomes.iter().filter(|o| matches!(o, FrameOutcome::Aborted(_))).count(), 1);
    }
    assert_eq!(run.summary.frames_aborted, 1);
    assert_eq!(run.summary.frames_sent, 4);
    assert!(run.notes.iter().any(|n| n.contains("\"type\":\"error\"") && n.contains("swirl")), "{:?}", run.notes);
    // The chain text never took effect.
    let last = SceneState::from_bytes(run.scenes[1].last().unwrap()).unwrap();
    assert_eq!(last.sources[1].chain, "length");
}

#[test]
fn metadata_is_merged_in_rank_order() {
    let run = run([2, 2, 1], 1, 1, vec![], Duration::ZERO);
    assert_eq!(run.frames[0].metadata, json!({"ranks": [0, 1, 2, 3], "step": 1, "rank": 0}));
}

#[test]
fn slow_encoder_overlaps_next_step_but_not_next_render() {
    let delay = Duration::from_millis(60);
    let run = run([2, 1, 1], 4, 1, vec![], delay);
    let timeline = &run.summary.timeline;
    assert_eq!(timeline.len(), 4);
    for s in 0..3 {
        let send_end = timeline[s].send_end.unwrap();
        // Step s + 2 (index s + 1) began while frame s was still being sent ...
        assert!(run.step_starts[s + 1] < send_end, "step {} did not overlap", s + 2);
        // ... but frame s + 1 was not rendered before that send finished.
        assert!(timeline[s + 1].render_start >= send_end);
        assert!(timeline[s].send_start.unwrap() >= timeline[s].composite_end);
    }
}

#[test]
fn exit_at_tick_three_stops_after_three_steps() {
    let run = run([1, 1, 1], 10, 1, vec![(3, steer(json!({"action": "exit"})))], Duration::ZERO);
    assert_eq!(run.steps, 3);
    assert_eq!(run.summary.frames_sent, 3);
}

#[test]
fn pause_and_step_requests() {
    let script = vec![
        (1, steer(json!({"action": "pause"}))),
        (5, steer(json!({"action": "step"}))),
        (9, steer(json!({"action": "resume"}))),
    ];
    let run = run([1, 1, 1], 4, 1, script.clone(), Duration::ZERO);
    assert_eq!(run.steps, 4);
    // Ticks 1..=4 held, tick 5 single-stepped, 6..=8 held again.
    assert_eq!(run.summary.transcript.len(), 3);
    assert_eq!(run.summary.transcript.iter().map(|t| t.0).collect::<Vec<_>>(), vec![1, 5, 9]);
}

#[test]
fn replay_yields_identical_frames() {
    let script = vec![
        (1, steer(json!({"action": "set_camera", "position": [30, 20, 10], "look_at": [8, 8, 8], "up": [0, 1, 0]}))),
        (3, steer(json!({"action": "set_active_sources", "sources": ["blobs"]}))),
    ];
    let a = run([2, 1, 2], 5, 1, script.clone(), Duration::ZERO);
    let b = run([2, 1, 2], 5, 1, a.summary.transcript.clone(), Duration::ZERO);
    assert_eq!(a.summary.transcript, script);
    assert_eq!(a.frames.len(), 5);
    for (x, y) in a.frames.iter().zip(&b.frames) {
        assert_eq!(serde_json::to_string(x).unwrap(), serde_json::to_string(y).unwrap());
    }
    assert_ne!(a.frames[0].image.data, a.frames[1].image.data, "camera change must show");
}

#[test]
fn decomposed_pipeline_matches_single_rank_frame() {
    let single = run([1, 1, 1], 1, 1, vec![], Duration::ZERO);
    let want = decode_frame(&single.frames[0].image).unwrap();
    for split in [[2, 1, 1], [2, 2, 1], [2, 2, 2]] {
        let multi = run(split, 1, 1, vec![], Duration::ZERO);
        let got = decode_frame(&multi.frames[0].image).unwrap();
        let worst = want.iter().zip(&got).map(|(a, b)| a.abs_diff(*b)).max().unwrap();
        assert!(worst <= 1, "split {split:?}: 8-bit difference {worst}");
    }
}

#[test]
fn gateway_link_registers_streams_and_relays_steering() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut writer = stream;
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        let register: serde_json::Value = serde_json::from_str(&line).unwrap();
        writer.write_all(b"{\"type\":\"registered\",\"session\":9}\n").unwrap();
        writer
            .write_all(format!("{}\n", steer(json!({"action": "pause"}))).as_bytes())
            .unwrap();
        let mut lines = Vec::new();
        for l in reader.lines() {
            lines.push(l.unwrap());
        }
        (register, lines)
    });
    let register = RegisterMessage::new("probe", 1, vec![]);
    let (mut link, inbox) = GatewayLink::connect(addr, &register, Duration::from_secs(5)).unwrap();
    assert_eq!(link.session(), 9);
    let got = inbox.0.recv_timeout(Duration::from_secs(5)).unwrap();
    assert_eq!(got, steer(json!({"action": "pause"})));
    let image = insitu_core::runtime::encode_frame(
        &insitu_core::image::LocalImage::<f32>::transparent(2, 1),
        insitu_core::protocol::ImageEncoding::RawRgba8,
        100,
    )
    .unwrap();
    link.deliver(&FrameMessage::new(3, image, json!({}))).unwrap();
    link.close().unwrap();
    let (reg_seen, lines) = server.join().unwrap();
    assert_eq!(reg_seen["type"], "register");
    assert_eq!(reg_seen["protocol"], 1);
    assert_eq!(lines.len(), 2);
    let frame: FrameMessage = serde_json::from_str(&lines[0]).unwrap();
    assert_eq!(frame.step, 3);
    assert_eq!(frame.image.data.len(), 12);
    assert_eq!(lines[1], r#"{"type":"exit"}"#);
}

#[test]
fn rejected_registration_is_an_error() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = std::thread::spawn(move || {
        let (mut stream, _) = listener.accept().unwrap();
        let mut line = String::new();
        BufReader::new(stream.try_clone().unwrap()).read_line(&mut line).unwrap();
        stream.write_all(b"{\"type\":\"error\",\"message\":\"bad token\"}\n").unwrap();
    });
    let register = RegisterMessage::new("probe", 1, vec![]);
    assert!(GatewayLink::connect(addr, &register, Duration::from_secs(5)).is_err());
    server.join().unwrap();
}

#[test]
fn setup_mismatch_is_reported() {
    let volume = GlobalVolume::new([8, 8, 8], [2, 1, 1]).unwrap();
    let t = LocalTransport::world(1).pop().unwrap();
    let domain = volume.local_domain(0).unwrap();
    let res = RankRuntime::new(
        Box::new(t),
        volume,
        registry_for::<f32>(domain),
        FunctorRegistry::with_builtins(),
        5,
        initial_scene(),
        None,
    );
    assert!(res.is_err());
}
