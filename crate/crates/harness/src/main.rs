use clap::Parser;
use insitu_core::protocol::ImageEncoding;
use insitu_sim::{Harness, HarnessConfig, Pair, Triple};
use std::path::PathBuf;
use std::process::ExitCode;
use tracing_subscriber::EnvFilter;

/// Runs the toy shear-flow simulation with in-situ rendering.
///
/// Settings come from the optional config file; flags override it. Metrics are
/// printed as JSON on standard output when the run ends.
#[derive(Debug, Parser)]
#[command(name = "insitu-sim", version)]
struct Args {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Session name shown to clients.
    #[arg(long)]
    name: Option<String>,
    /// Global grid size, N or AxBxC.
    #[arg(long)]
    size: Option<Triple>,
    /// Ranks per axis, N or AxBxC.
    #[arg(long)]
    ranks: Option<Triple>,
    #[arg(long)]
    steps: Option<u64>,
    /// Render every n-th step.
    #[arg(long)]
    period: Option<u64>,
    /// Image size, WxH.
    #[arg(long)]
    image: Option<Pair>,
    /// Gateway simulation port, host:port. Without it the run is headless.
    #[arg(long)]
    gateway: Option<String>,
    #[arg(long)]
    token: Option<String>,
    /// Directory for frame_<step>.png in headless mode.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Initially active sources, comma separated (density, velocity, current).
    #[arg(long, value_delimiter = ',')]
    active: Option<Vec<String>>,
    /// raw-rgba8 or png.
    #[arg(long, value_parser = parse_encoding)]
    encoding: Option<ImageEncoding>,
    /// 1..=100; lower values quantize more coarsely.
    #[arg(long)]
    quality: Option<u8>,
    /// Steering lines to replay, `<tick> <json>` per line.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Write the steering lines received to this file.
    #[arg(long)]
    record_transcript: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Delay before encoding each frame, in milliseconds.
    #[arg(long)]
    encode_delay_ms: Option<u64>,
    #[arg(long, default_value = "warn")]
    log_level: String,
}

fn parse_encoding(s: &str) -> Result<ImageEncoding, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown encoding '{s}'"))
}

impl Args {
    fn apply(self, c: &mut HarnessConfig) {
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field {
                    c.$field = v;
                }
            )*};
        }
        set!(name, size, ranks, steps, period, image, active, encoding, quality, encode_delay_ms);
        if self.gateway.is_some() {
            c.gateway = self.gateway;
        }
        if self.token.is_some() {
            c.token = self.token;
        }
        if self.output.is_some() {
            c.output = self.output;
        }
        if self.transcript.is_some() {
            c.transcript = self.transcript;
        }
        if self.record_transcript.is_some() {
            c.record_transcript = self.record_transcript;
        }
        if let Some(seed) = self.seed {
            c.toy.seed = seed;
        }
    }
}

fn main() -> ExitCode {
    let mut args = Args::parse();
    match EnvFilter::try_new(&args.log_level) {
        Ok(filter) => tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).init(),
        Err(e) => {
            eprintln!("invalid --log-level '{}': {e}", args.log_level);
            return ExitCode::from(2);
        }
    }
    let mut config = match args.config.take() {
        Some(path) => match HarnessConfig::load(&path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("{e}");
                return ExitCode::from(2);
            }
        },
        None => HarnessConfig::default(),
    };
    args.apply(&mut config);
    if let Err(e) = config.validate() {
        eprintln!("{e}");
        return ExitCode::from(2);
    }

    match Harness::new(config).run() {
        Ok(out) => {
            println!("{}", serde_json::to_string_pretty(&out.metrics).expect("metrics serialize"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("insitu-sim: {e}");
            ExitCode::FAILURE
        }
    }
}
