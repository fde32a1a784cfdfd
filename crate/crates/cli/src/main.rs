use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fanmodem::{ambient_for_snr, Scheme};
use fanmodem_cli::commands::{self, parse_hex};
use fanmodem_cli::{ber_sweep, Axis, CliError, ExperimentConfig, Result};
use serde::Serialize;

/// Fan-noise acoustic modem.
///
/// Exit codes: 0 success (bit errors included), 1 I/O error, 2 configuration
/// error, 3 malformed input file, 4 no preamble found.
#[derive(Parser)]
#[command(name = "fanmodem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Frame a payload, write its RPM schedule and synthesize the recording.
    Encode(EncodeArgs),
    /// Decode a WAV recording.
    Receive(ReceiveArgs),
    /// Blade-pass frequency for each RPM.
    BpfTable(BpfArgs),
    /// Seeded loopback trials over one parameter.
    BerSweep(SweepArgs),
    /// List the bundled presets, or print one as TOML.
    Presets(PresetArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Bundled preset name (see `fanmodem presets`).
    #[arg(long)]
    preset: Option<String>,
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Source {
    fn load(&self) -> Result<ExperimentConfig> {
        match (&self.preset, &self.config) {
            (Some(name), _) => ExperimentConfig::preset(name),
            (None, Some(path)) => ExperimentConfig::load(path),
            (None, None) => unreachable!("clap requires one source"),
        }
    }
}

#[derive(Args)]
struct ChannelOverrides {
    /// Microphone distance in meters.
    #[arg(long)]
    distance: Option<f64>,
    /// Ambient noise amplitude.
    #[arg(long, conflicts_with = "snr_db")]
    noise: Option<f64>,
    /// Ambient noise set for this in-band SNR in dB.
    #[arg(long)]
    snr_db: Option<f64>,
    /// Noise seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Seconds of noise before the transmission starts.
    #[arg(long)]
    lead_in: Option<f64>,
}

impl ChannelOverrides {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<()> {
        let ch = &mut cfg.channel;
        if let Some(d) = self.distance {
            ch.distance = d;
        }
        if let Some(a) = self.noise {
            ch.ambient_noise_amplitude = a;
        }
        if let Some(s) = self.seed {
            ch.noise_seed = s;
        }
        if let Some(l) = self.lead_in {
            ch.lead_in = l;
        }
        if let Some(snr) = self.snr_db {
            ch.ambient_noise_amplitude = ambient_for_snr(&cfg.fan, &cfg.modulation, ch, snr);
        }
        cfg.channel.validate()?;
        Ok(())
    }
}

#[derive(Args)]
struct EncodeArgs {
    #[command(flatten)]
    source: Source,
    /// Payload file (raw bytes).
    #[arg(required_unless_present_any = ["hex", "replay"], conflicts_with_all = ["hex", "replay"])]
    payload: Option<PathBuf>,
    /// Payload as hex digits instead of a file.
    #[arg(long, conflicts_with = "replay")]
    hex: Option<String>,
    /// Synthesize an existing schedule file instead of a payload.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Output WAV file.
    #[arg(long)]
    wav: PathBuf,
    /// Output schedule file (JSON lines).
    #[arg(long)]
    schedule: Option<PathBuf>,
    #[command(flatten)]
    channel: ChannelOverrides,
    /// Print the summary as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ReceiveArgs {
    /// Recording to decode.
    wav: PathBuf,
    #[command(flatten)]
    source: Source,
    /// Decode as this scheme instead of the configured one.
    #[arg(long)]
    scheme: Option<Scheme>,
    /// File with the payload that was sent, for a bit-error count.
    #[arg(long, conflicts_with = "expect_hex")]
    expect: Option<PathBuf>,
    /// Sent payload as hex digits.
    #[arg(long)]
    expect_hex: Option<String>,
    /// Payload length in bytes, to drop the padding byte.
    #[arg(long)]
    length: Option<usize>,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
    /// Also write the JSON report to this file.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BpfArgs {
    /// Number of fan blades.
    #[arg(long, default_value_t = 7)]
    blades: u32,
    /// Speeds in RPM.
    #[arg(required = true, value_delimiter = ',')]
    rpm: Vec<f64>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: Source,
    /// Parameter to vary.
    #[arg(long, value_enum)]
    axis: Axis,
    /// Axis values (comma separated).
    #[arg(
        long,
        value_delimiter = ',',
        required_unless_present = "snr_db",
        conflicts_with = "snr_db"
    )]
    values: Vec<f64>,
    /// For the noise axis: in-band SNRs in dB, converted to noise amplitudes.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    snr_db: Vec<f64>,
    /// Override the number of trials (seeds base_seed + i).
    #[arg(long)]
    trials: Option<usize>,
    /// Write one JSON record per trial to this file.
    #[arg(long)]
    records: Option<PathBuf>,
    /// Print the summary as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct PresetArgs {
    /// Print this preset's TOML.
    #[arg(long)]
    show: Option<String>,
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Encode(a) => encode(a),
        Command::Receive(a) => receive(a),
        Command::BpfTable(a) => {
            let rows = commands::bpf_table(a.blades, &a.rpm)?;
            emit(a.json, &rows, || commands::bpf_text(&rows))
        }
        Command::BerSweep(a) => sweep(a),
        Command::Presets(a) => match a.show {
            Some(name) => {
                let (_, text) = fanmodem_cli::PRESETS
                    .iter()
                    .find(|(n, _)| *n == name)
                    .ok_or_else(|| CliError::Config(format!("unknown preset {name:?}")))?;
                out(text)
            }
            None => {
                let list = commands::presets();
                emit(a.json, &list, || commands::presets_text(&list))
            }
        },
    }
}

fn emit<T: Serialize>(json: bool, value: &T, text: impl FnOnce() -> String) -> Result<()> {
    if json {
        let mut s = serde_json::to_string_pretty(value).expect("reports always serialize");
        s.push('\n');
        out(&s)
    } else {
        out(&text())
    }
}

/// Writes to stdout; a closed pipe (`| head`) ends output quietly.
fn out(text: &str) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match stdout
        .write_all(text.as_bytes())
        .and_then(|_| stdout.flush())
    {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
            Err(CliError::Io(format!("stdout: {e}")))
        }
        _ => Ok(()),
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

fn encode(a: EncodeArgs) -> Result<()> {
    let mut cfg = a.source.load()?;
    a.channel.apply(&mut cfg)?;
    if let Some(schedule) = &a.replay {
        let seconds = commands::synthesize_schedule(schedule, &cfg, &a.wav)?;
        return out(&format!("recording length:  {seconds:.3} s\n"));
    }
    let payload = match (&a.payload, &a.hex) {
        (Some(p), _) => read_bytes(p)?,
        (None, Some(h)) => parse_hex(h)?,
        (None, None) => unreachable!("clap requires a payload"),
    };
    let summary = commands::encode(&payload, &cfg, &a.wav, a.schedule.as_deref())?;
    if let Some(w) = &summary.warning {
        eprintln!("warning: {w}");
    }
    emit(a.json, &summary, || {
        let text = summary.to_text();
        // the warning already went to stderr
        text.lines()
            .filter(|l| !l.starts_with("warning:"))
            .map(|l| format!("{l}\n"))
            .collect()
    })
}

fn receive(a: ReceiveArgs) -> Result<()> {
    let mut cfg = a.source.load()?;
    if a.scheme.is_some() {
        cfg.demod.scheme = a.scheme;
    }
    let expected = match (&a.expect, &a.expect_hex) {
        (Some(p), _) => Some(read_bytes(p)?),
        (None, Some(h)) => Some(parse_hex(h)?),
        (None, None) => None,
    };
    let report = commands::receive(&a.wav, &cfg, expected.as_deref(), a.length)?;
    if let Some(path) = &a.report {
        let json = serde_json::to_string_pretty(&report).expect("reports always serialize");
        std::fs::write(path, json + "\n").map_err(|e| CliError::io(path, e))?;
    }
    emit(a.json, &report, || report.to_text())?;
    if !report.synced {
        return Err(CliError::SyncNotFound(
            report
                .diagnostic
                .clone()
                .unwrap_or_else(|| "preamble not found".into()),
        ));
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let mut cfg = a.source.load()?;
    if let Some(n) = a.trials {
        if n < 1 {
            return Err(CliError::Config("--trials must be >= 1".into()));
        }
        let base = cfg.seeds.first().copied().unwrap_or(0);
        cfg.trials = n;
        cfg.seeds = (0..n as u64).map(|i| base + i).collect();
    }
    let values = if a.snr_db.is_empty() {
        a.values
    } else {
        if a.axis != Axis::Noise {
            return Err(CliError::Config(
                "--snr-db only applies to the noise axis".into(),
            ));
        }
        a.snr_db
            .iter()
            .map(|&s| ambient_for_snr(&cfg.fan, &cfg.modulation, &cfg.channel, s))
            .collect()
    };
    let report = match &a.records {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::io(path, e))?;
            let mut w = BufWriter::new(file);
            let report = ber_sweep(&cfg, a.axis, &values, Some(&mut w))?;
            w.flush().map_err(|e| CliError::io(path, e))?;
            report
        }
        None => ber_sweep(&cfg, a.axis, &values, None)?,
    };
    emit(a.json, &report, || commands::sweep_text(&report))
}
