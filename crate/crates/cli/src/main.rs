//! `evflick` — synthesize, filter, and analyze event-camera streams.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

// `!(x > 0)` rejects NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Write as _;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use evflick_core::comb::{filter_stream_with, RunOptions};
use evflick_core::event::{
    self, parse_labels, serialize_stream, validate_monotone, write_labels, Event, PixelRect,
    SensorGeometry,
};
use evflick_core::metrics::{rate_map, snr_labeled, snr_masked};
use evflick_core::spectral::{bode_table, psd, reconstruct_zoh, write_bode_csv, write_psd_csv};
use evflick_core::synth::{default_scene, generate, parse_scene, write_scene};
use evflick_core::{FilterConfig, Label};

type F = f64;

#[derive(Parser)]
#[command(
    name = "evflick",
    about = "Flicker removal and analysis for event-camera streams"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter a stream through the comb cascade.
    Filter(FilterArgs),
    /// Generate a labeled synthetic stream (events + `.labels` sidecar).
    Synth(SynthArgs),
    /// Tabulate the analytic frequency response as CSV.
    Bode(BodeArgs),
    /// Reconstruct a region signal and estimate its PSD as CSV.
    Psd(PsdArgs),
    /// Per-pixel event-rate heat map (CSV + PGM).
    Heatmap(HeatmapArgs),
    /// Foreground/flicker SNR report.
    Snr(SnrArgs),
}

#[derive(Args)]
struct FilterCommon {
    /// Base (notch) frequency f0 in Hz.
    #[arg(long = "base-freq", default_value_t = 50.0)]
    base_freq: f64,
    /// Long-delay feedback gain rho1 in (0,1).
    #[arg(long, default_value_t = 0.6)]
    rho1: f64,
}

#[derive(Args)]
struct FilterArgs {
    input: PathBuf,
    output: PathBuf,
    #[command(flatten)]
    common: FilterCommon,
    /// Contrast threshold per input event (log-intensity units).
    #[arg(long, default_value_t = 1.0)]
    contrast: f64,
    /// Output sampler threshold; defaults to the contrast.
    #[arg(long)]
    theta: Option<f64>,
    /// Drain horizon after the last event, seconds; defaults to 5*tau1.
    #[arg(long)]
    drain: Option<f64>,
    /// Pixel shards processed by independent workers.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Sensor geometry as `WxH`; inferred from the stream when omitted.
    #[arg(long)]
    geometry: Option<String>,
}

#[derive(Args)]
struct SynthArgs {
    output: PathBuf,
    /// Scene description file; omit with --default.
    #[arg(long, conflicts_with = "use_default")]
    scene: Option<PathBuf>,
    /// Use the built-in default scene.
    #[arg(long = "default")]
    use_default: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the scene duration, seconds.
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Args)]
struct BodeArgs {
    output: PathBuf,
    #[command(flatten)]
    common: FilterCommon,
    #[arg(long, default_value_t = 1.0)]
    fmin: f64,
    #[arg(long, default_value_t = 5000.0)]
    fmax: f64,
    /// Points per decade.
    #[arg(long, default_value_t = 64)]
    ppd: usize,
}

#[derive(Args)]
struct PsdArgs {
    input: PathBuf,
    output: PathBuf,
    /// Pixel region `x,y,w,h` to average over.
    #[arg(long)]
    region: String,
    /// Reconstruction sample rate, Hz.
    #[arg(long, default_value_t = 1000.0)]
    rate: f64,
    #[arg(long, default_value_t = 0.0)]
    tstart: f64,
    #[arg(long)]
    tend: f64,
    /// Contrast step per event used for the staircase.
    #[arg(long, default_value_t = 1.0)]
    contrast: f64,
}

#[derive(Args)]
struct HeatmapArgs {
    input: PathBuf,
    /// Output base path; writes `<base>.csv` and `<base>.pgm`.
    output: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    tstart: f64,
    /// Accumulation window, seconds.
    #[arg(long, default_value_t = 0.03)]
    window: f64,
    /// Sensor geometry as `WxH`; inferred from the stream when omitted.
    #[arg(long)]
    geometry: Option<String>,
}

#[derive(Args)]
struct SnrArgs {
    input: PathBuf,
    /// Label sidecar file.
    #[arg(long, conflicts_with = "mask")]
    labels: Option<PathBuf>,
    /// Flicker-region mask `x,y,w,h`.
    #[arg(long)]
    mask: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    tstart: f64,
    #[arg(long, default_value_t = 0.03)]
    window: f64,
}

enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) => m,
        }
    }
}

fn data<E: std::fmt::Display>(err: E) -> CliError {
    CliError::Data(err.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("evflick: error: {}", err.message());
            ExitCode::from(err.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Filter(args) => cmd_filter(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Bode(args) => cmd_bode(args),
        Command::Psd(args) => cmd_psd(args),
        Command::Heatmap(args) => cmd_heatmap(args),
        Command::Snr(args) => cmd_snr(args),
    }
}

fn check_distinct(input: &Path, output: &Path) -> Result<(), CliError> {
    if input == output {
        return Err(CliError::Usage(format!(
            "output path {} must differ from the input",
            output.display()
        )));
    }
    Ok(())
}

fn parse_rect(spec: &str) -> Result<PixelRect, CliError> {
    let parts: Vec<&str> = spec.split(',').collect();
    if parts.len() != 4 {
        return Err(CliError::Usage(format!(
            "region {spec:?} must be `x,y,w,h`"
        )));
    }
    let nums: Result<Vec<u16>, _> = parts.iter().map(|p| p.trim().parse()).collect();
    let nums = nums.map_err(|_| CliError::Usage(format!("invalid region {spec:?}")))?;
    Ok(PixelRect::new(nums[0], nums[1], nums[2], nums[3]))
}

fn parse_geometry(spec: &str) -> Result<SensorGeometry, CliError> {
    let (w, h) = spec
        .split_once('x')
        .ok_or_else(|| CliError::Usage(format!("geometry {spec:?} must be `WxH`")))?;
    let w: u16 = w
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid geometry {spec:?}")))?;
    let h: u16 = h
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("invalid geometry {spec:?}")))?;
    SensorGeometry::new(w, h).map_err(|e| CliError::Usage(e.to_string()))
}

fn read_events(path: &Path, geometry: Option<SensorGeometry>) -> Result<Vec<Event<F>>, CliError> {
    let file =
        fs::File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    event::parse_stream(BufReader::new(file), geometry).map_err(data)
}

/// Smallest geometry covering every event, for commands run without `--geometry`.
fn infer_geometry(events: &[Event<F>]) -> SensorGeometry {
    let mut w = 1u16;
    let mut h = 1u16;
    for ev in events {
        w = w.max(ev.x.saturating_add(1));
        h = h.max(ev.y.saturating_add(1));
    }
    SensorGeometry::new(w, h).expect("nonzero by construction")
}

fn config_from(common: &FilterCommon) -> Result<FilterConfig<F>, CliError> {
    FilterConfig::new(common.base_freq, common.rho1).map_err(|e| CliError::Usage(e.to_string()))
}

fn config_header(cfg: &FilterConfig<F>) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "# config: f0={} Hz rho1={} rho2={} tau1={} s tau2={} s contrast={} theta={} prune_epsilon={}",
        cfg.base_frequency,
        cfg.rho1,
        cfg.rho2,
        cfg.tau1,
        cfg.tau2,
        cfg.contrast,
        cfg.sampler_threshold,
        cfg.prune_epsilon
    );
    s
}

fn write_file(
    path: &Path,
    body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<(), CliError> {
    let file =
        fs::File::create(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut writer = BufWriter::new(file);
    body(&mut writer).map_err(data)?;
    writer.flush().map_err(data)
}

fn cmd_filter(args: FilterArgs) -> Result<(), CliError> {
    check_distinct(&args.input, &args.output)?;
    if args.workers == 0 {
        return Err(CliError::Usage("--workers must be >= 1".into()));
    }
    let mut cfg = config_from(&args.common)?.with_contrast(args.contrast);
    if let Some(theta) = args.theta {
        cfg = cfg.with_sampler_threshold(theta);
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let geometry = args.geometry.as_deref().map(parse_geometry).transpose()?;
    let events = read_events(&args.input, geometry)?;
    let report = validate_monotone(&events);
    if let Some(idx) = report.first_violation {
        return Err(CliError::Data(format!(
            "input not time-sorted: event {} (t = {}) precedes its predecessor",
            idx + 1,
            events[idx].t
        )));
    }
    let geometry = geometry.unwrap_or_else(|| infer_geometry(&events));

    let header = config_header(&cfg);
    print!("{header}");
    println!(
        "# drain={} s workers={}",
        args.drain.unwrap_or(cfg.default_drain()),
        args.workers
    );

    let start = Instant::now();
    let options = RunOptions {
        drain: args.drain,
        workers: args.workers,
    };
    let filtered = filter_stream_with(&events, geometry, &cfg, options).map_err(data)?;
    let elapsed = start.elapsed();

    write_file(&args.output, |w| {
        write!(w, "# evflick filter\n{header}")?;
        serialize_stream(&filtered, w)
    })?;
    println!(
        "input events: {}  output events: {}  elapsed: {:.3} s",
        events.len(),
        filtered.len(),
        elapsed.as_secs_f64()
    );
    Ok(())
}

fn labels_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".labels");
    output.with_file_name(name)
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let mut scene = match (&args.scene, args.use_default) {
        (Some(path), false) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            parse_scene::<F>(&text).map_err(data)?
        }
        (None, true) => {
            let geometry = SensorGeometry::new(64, 64).unwrap();
            default_scene(geometry, args.duration.unwrap_or(1.5), args.seed)
        }
        _ => {
            return Err(CliError::Usage(
                "provide either --scene <file> or --default".into(),
            ))
        }
    };
    if args.scene.is_some() {
        scene.rng_seed = args.seed;
        if let Some(d) = args.duration {
            scene.duration = d;
        }
    }
    check_distinct(
        args.scene.as_deref().unwrap_or(Path::new("-")),
        &args.output,
    )?;

    let labeled = generate(&scene).map_err(data)?;
    let events: Vec<Event<F>> = labeled.iter().map(|e| e.event).collect();
    let labels: Vec<Label> = labeled.iter().map(|e| e.label).collect();

    let scene_text = write_scene(&scene);
    write_file(&args.output, |w| {
        writeln!(w, "# evflick synth")?;
        for line in scene_text.lines() {
            writeln!(w, "# {line}")?;
        }
        serialize_stream(&events, w)
    })?;
    write_file(&labels_path(&args.output), |w| write_labels(&labels, w))?;
    println!("events: {}  labels: {}", events.len(), labels.len());
    Ok(())
}

fn cmd_bode(args: BodeArgs) -> Result<(), CliError> {
    let cfg = config_from(&args.common)?;
    let rows = bode_table(&cfg, args.fmin, args.fmax, args.ppd)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let header = config_header(&cfg);
    write_file(&args.output, |w| {
        write!(w, "# evflick bode\n{header}")?;
        write_bode_csv(&rows, w)
    })?;
    println!("rows: {}", rows.len());
    Ok(())
}

fn cmd_psd(args: PsdArgs) -> Result<(), CliError> {
    check_distinct(&args.input, &args.output)?;
    let region = parse_rect(&args.region)?;
    if args.tend <= args.tstart {
        return Err(CliError::Usage("--tend must exceed --tstart".into()));
    }
    let events = read_events(&args.input, None)?;
    let signal = reconstruct_zoh(
        &events,
        region,
        args.rate,
        args.tstart,
        args.tend,
        args.contrast,
    )
    .map_err(data)?;
    let spectrum = psd(&signal, args.rate).map_err(data)?;
    write_file(&args.output, |w| {
        writeln!(w, "# evflick psd")?;
        writeln!(
            w,
            "# region={},{},{},{} rate={} window=[{}, {}) contrast={} taper={}",
            region.x,
            region.y,
            region.width,
            region.height,
            args.rate,
            args.tstart,
            args.tend,
            args.contrast,
            spectrum.window.taper
        )?;
        write_psd_csv(&spectrum, w)
    })?;
    println!("bins: {}", spectrum.frequencies.len());
    Ok(())
}

fn cmd_heatmap(args: HeatmapArgs) -> Result<(), CliError> {
    let geometry = args.geometry.as_deref().map(parse_geometry).transpose()?;
    let events = read_events(&args.input, geometry)?;
    let geometry = geometry.unwrap_or_else(|| infer_geometry(&events));
    let map = rate_map(&events, geometry, args.tstart, args.window)
        .map_err(|e| CliError::Usage(e.to_string()))?;

    let csv_path = args.output.with_extension("csv");
    let pgm_path = args.output.with_extension("pgm");
    check_distinct(&args.input, &csv_path)?;
    check_distinct(&args.input, &pgm_path)?;
    write_file(&csv_path, |w| {
        writeln!(
            w,
            "# evflick heatmap tstart={} window={}",
            args.tstart, args.window
        )?;
        map.write_csv(w)
    })?;
    write_file(&pgm_path, |w| map.write_pgm(w))?;
    println!(
        "wrote {} and {} (max rate {} ev/s)",
        csv_path.display(),
        pgm_path.display(),
        map.max()
    );
    Ok(())
}

fn cmd_snr(args: SnrArgs) -> Result<(), CliError> {
    let window = (args.tstart, args.tstart + args.window);
    if !(args.window > 0.0) {
        return Err(CliError::Usage("--window must be > 0".into()));
    }
    let events = read_events(&args.input, None)?;
    let report = match (&args.labels, &args.mask) {
        (Some(path), None) => {
            let file = fs::File::open(path)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            let labels = parse_labels(BufReader::new(file)).map_err(data)?;
            let labeled = event::attach_labels(events, labels).map_err(data)?;
            snr_labeled(&labeled, window)
        }
        (None, Some(mask)) => {
            let region = parse_rect(mask)?;
            snr_masked(&events, region, window)
        }
        _ => {
            return Err(CliError::Usage(
                "provide exactly one of --labels or --mask".into(),
            ))
        }
    };
    println!("{}", report.to_record());
    Ok(())
}
