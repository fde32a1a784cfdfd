//! The subcommands as library functions. Each returns a report that the
//! binary prints; text output uses fixed precision (seconds to 3 decimals,
//! frequencies and rates to 2, BER to 6, ASK energies to 4 significant digits).

use std::fmt::Write as _;
use std::path::Path;

use fanmodem::framing::frame_count;
use fanmodem::{
    bits_per_minute, decode_frames, demodulate, encode_frames, modulate, read_wav, synthesize,
    transmission_time, write_wav, CalibrationEstimate, Demodulation, FanSpec, FrameReport,
    RpmSchedule, SymbolDecision, Waveform,
};
use serde::Serialize;

use crate::config::{ExperimentConfig, PRESETS};
use crate::error::{CliError, Result};
use crate::schedule;
use crate::sweep::{count_bit_errors, SweepReport};

/// What `encode` produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EncodeSummary {
    pub payload_bytes: usize,
    pub frames: usize,
    pub bits: usize,
    pub transition_time: f64,
    pub symbol_duration: f64,
    /// `n * (TR + T)` seconds.
    pub transmission_time: f64,
    pub bits_per_minute: f64,
    /// Length of the written recording, lead-in included.
    pub wav_seconds: f64,
    pub warning: Option<String>,
}

impl EncodeSummary {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(w) = &self.warning {
            writeln!(s, "warning: {w}").unwrap();
        }
        writeln!(s, "payload bytes:     {}", self.payload_bytes).unwrap();
        writeln!(s, "frames:            {}", self.frames).unwrap();
        writeln!(s, "bits:              {}", self.bits).unwrap();
        writeln!(s, "TR:                {:.3} s", self.transition_time).unwrap();
        writeln!(s, "T:                 {:.3} s", self.symbol_duration).unwrap();
        writeln!(s, "transmission time: {:.3} s", self.transmission_time).unwrap();
        writeln!(s, "bit rate:          {:.2} bits/min", self.bits_per_minute).unwrap();
        writeln!(s, "recording length:  {:.3} s", self.wav_seconds).unwrap();
        s
    }
}

/// Frames `payload`, writes the RPM schedule as JSON lines and the
/// synthesized recording as WAV.
///
/// An empty payload gives an empty schedule, an empty recording and a warning.
pub fn encode(
    payload: &[u8],
    cfg: &ExperimentConfig,
    wav_path: &Path,
    schedule_path: Option<&Path>,
) -> Result<EncodeSummary> {
    let bits = encode_frames(payload);
    let tr = cfg.transition_time();
    let t = cfg.modulation.symbol_duration;
    let (schedule, audio, warning) = if bits.is_empty() {
        (
            RpmSchedule::default(),
            Waveform::new(cfg.channel.sample_rate, Vec::new()),
            Some("empty payload: nothing to transmit".to_string()),
        )
    } else {
        let schedule = modulate(&bits, &cfg.modulation, &cfg.fan)?;
        let audio = synthesize(&schedule, &cfg.fan, &cfg.channel)?.waveform;
        (schedule, audio, None)
    };
    if let Some(p) = schedule_path {
        schedule::write(&schedule, p)?;
    }
    write_wav(&audio, wav_path)?;
    Ok(EncodeSummary {
        payload_bytes: payload.len(),
        frames: frame_count(payload.len()),
        bits: bits.len(),
        transition_time: tr,
        symbol_duration: t,
        transmission_time: transmission_time(bits.len(), tr, t),
        bits_per_minute: bits_per_minute(tr, t),
        wav_seconds: audio.duration(),
        warning,
    })
}

/// Replays a schedule file through the channel simulator.
pub fn synthesize_schedule(
    schedule_path: &Path,
    cfg: &ExperimentConfig,
    wav_path: &Path,
) -> Result<f64> {
    let schedule = schedule::read(schedule_path)?;
    schedule
        .validate(&cfg.fan)
        .map_err(|e| CliError::Format(format!("{}: {e}", schedule_path.display())))?;
    let audio = synthesize(&schedule, &cfg.fan, &cfg.channel)?.waveform;
    write_wav(&audio, wav_path)?;
    Ok(audio.duration())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BitErrors {
    pub n_bits: usize,
    pub bit_errors: usize,
    pub ber: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameSummary {
    pub offset: f64,
    pub resynced: bool,
    pub calibration: CalibrationEstimate,
}

/// Everything `receive` learned from a recording.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReceiveReport {
    pub scheme: fanmodem::Scheme,
    pub synced: bool,
    pub sync_offset: Option<f64>,
    pub correlation: Option<f64>,
    pub calibration: Option<CalibrationEstimate>,
    pub frames: Vec<FrameSummary>,
    pub frame_report: FrameReport,
    pub bits: String,
    pub payload_hex: String,
    pub decisions: Vec<SymbolDecision>,
    pub errors: Option<BitErrors>,
    pub diagnostic: Option<String>,
}

impl ReceiveReport {
    fn new(
        out: &Demodulation,
        scheme: fanmodem::Scheme,
        expected: Option<&[u8]>,
        length: Option<usize>,
    ) -> Self {
        let decoded = decode_frames(&out.bits);
        let len = expected.map(<[u8]>::len).or(length);
        let payload = match len {
            Some(n) => decoded.payload(n),
            None => decoded.bytes(),
        };
        let errors = expected.map(|x| {
            let sent = encode_frames(x);
            let bit_errors = count_bit_errors(&sent, &out.bits);
            BitErrors {
                n_bits: sent.len(),
                bit_errors,
                ber: if sent.is_empty() {
                    0.0
                } else {
                    bit_errors as f64 / sent.len() as f64
                },
            }
        });
        ReceiveReport {
            scheme,
            synced: out.sync.is_some(),
            sync_offset: out.sync.map(|s| s.offset),
            correlation: out.sync.map(|s| s.correlation),
            calibration: out.sync.map(|s| s.calibration),
            frames: out
                .frames
                .iter()
                .map(|f| FrameSummary {
                    offset: f.offset,
                    resynced: f.resynced,
                    calibration: f.calibration,
                })
                .collect(),
            frame_report: decoded.report,
            bits: out.bits.to_string(),
            payload_hex: hex(&payload),
            decisions: out.decisions.clone(),
            errors,
            diagnostic: out.diagnostic.clone(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "scheme:      {}", self.scheme).unwrap();
        match (self.sync_offset, self.correlation, &self.calibration) {
            (Some(off), Some(r), Some(cal)) => {
                writeln!(s, "sync offset: {off:.3} s").unwrap();
                writeln!(s, "correlation: {r:.4}").unwrap();
                writeln!(s, "calibration: {}", calibration_text(cal)).unwrap();
            }
            _ => writeln!(s, "sync:        not found").unwrap(),
        }
        if let Some(d) = &self.diagnostic {
            writeln!(s, "diagnostic:  {d}").unwrap();
        }
        let r = &self.frame_report;
        writeln!(
            s,
            "frames:      {} ({} ok, {} bad preamble, {} trailing bits)",
            r.frames_total,
            r.frames_ok,
            r.errors.len(),
            r.trailing_bits
        )
        .unwrap();
        for e in &r.errors {
            writeln!(s, "  frame {} preamble {}", e.frame, e.found_preamble).unwrap();
        }
        for (i, f) in self.frames.iter().enumerate() {
            writeln!(
                s,
                "  frame {i} at {:.3} s, {}: {}",
                f.offset,
                if f.resynced {
                    "resynced"
                } else {
                    "carried over"
                },
                calibration_text(&f.calibration)
            )
            .unwrap();
        }
        writeln!(s, "bits:        {}", self.bits).unwrap();
        writeln!(s, "payload hex: {}", self.payload_hex).unwrap();
        if let Some(e) = &self.errors {
            writeln!(
                s,
                "bit errors:  {} / {} (BER {:.6})",
                e.bit_errors, e.n_bits, e.ber
            )
            .unwrap();
        }
        if !self.decisions.is_empty() {
            writeln!(s, "symbols:").unwrap();
            writeln!(s, "  index    time_s  bit  confidence").unwrap();
            for (i, d) in self.decisions.iter().enumerate() {
                writeln!(
                    s,
                    "  {i:5}  {:8.3}  {:3}  {:10.3}",
                    d.time_offset, d.bit as u8, d.confidence
                )
                .unwrap();
            }
        }
        s
    }
}

fn calibration_text(c: &CalibrationEstimate) -> String {
    match c {
        CalibrationEstimate::Ask { a0, a1 } => format!("a0 {a0:.4e}, a1 {a1:.4e}"),
        CalibrationEstimate::Fsk { f0, f1 } => format!("f0 {f0:.2} Hz, f1 {f1:.2} Hz"),
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Demodulates a WAV file. `expected` enables the bit-error count; `length`
/// (or the expected payload's length) trims the padding byte.
///
/// A recording without a preamble still yields a report; the caller decides
/// how to surface it (the binary exits with the sync-not-found code).
pub fn receive(
    wav_path: &Path,
    cfg: &ExperimentConfig,
    expected: Option<&[u8]>,
    length: Option<usize>,
) -> Result<ReceiveReport> {
    let audio = read_wav(wav_path)?;
    let demod = cfg.demod_config()?;
    let out = demodulate(&audio, &demod)?;
    Ok(ReceiveReport::new(&out, demod.scheme, expected, length))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BpfRow {
    pub rpm: f64,
    pub bpf_hz: f64,
    /// Nearest integer, halves away from zero.
    pub rounded_hz: i64,
}

/// Blade-pass frequency `n * R / 60` for each speed.
pub fn bpf_table(blade_count: u32, rpms: &[f64]) -> Result<Vec<BpfRow>> {
    if blade_count == 0 {
        return Err(CliError::Config("blade count must be >= 1".into()));
    }
    rpms.iter()
        .map(|&rpm| {
            if !(rpm >= 0.0 && rpm.is_finite()) {
                return Err(CliError::Config(format!("RPM must be >= 0, got {rpm}")));
            }
            let bpf = blade_count as f64 * rpm / 60.0;
            Ok(BpfRow {
                rpm,
                bpf_hz: bpf,
                rounded_hz: bpf.round() as i64,
            })
        })
        .collect()
}

pub fn bpf_text(rows: &[BpfRow]) -> String {
    let mut s = String::from("     rpm    bpf_hz  rounded\n");
    for r in rows {
        writeln!(s, "{:8.1}  {:8.2}  {:7}", r.rpm, r.bpf_hz, r.rounded_hz).unwrap();
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PresetInfo {
    pub name: String,
    pub scheme: fanmodem::Scheme,
    pub r0: f64,
    pub r1: f64,
    pub symbol_duration: f64,
    pub transition_time: f64,
    pub distance: f64,
    pub carrier_band: (f64, f64),
    pub tones_hz: (f64, f64),
    pub bits_per_minute: f64,
}

pub fn presets() -> Vec<PresetInfo> {
    PRESETS
        .iter()
        .map(|(name, _)| {
            let cfg = ExperimentConfig::preset(name).expect("bundled presets are valid");
            let m = cfg.modulation;
            let tr = cfg.transition_time();
            let fan: FanSpec = cfg.fan;
            PresetInfo {
                name: name.to_string(),
                scheme: m.scheme,
                r0: m.r0,
                r1: m.r1,
                symbol_duration: m.symbol_duration,
                transition_time: tr,
                distance: cfg.channel.distance,
                carrier_band: m.carrier_band,
                tones_hz: (fan.bpf(m.r0), fan.bpf(m.r1)),
                bits_per_minute: bits_per_minute(tr, m.symbol_duration),
            }
        })
        .collect()
}

pub fn presets_text(list: &[PresetInfo]) -> String {
    let mut s = String::from(
        "name    scheme    r0_rpm    r1_rpm   T_s  TR_s  dist_m   band_hz    f0_hz   f1_hz  bits/min\n",
    );
    for p in list {
        writeln!(
            s,
            "{:<6}  {:<6}  {:8.1}  {:8.1}  {:4.1}  {:4.1}  {:6.1}  {:>4.0}-{:<4.0}  {:7.2} {:7.2}  {:8.2}",
            p.name,
            p.scheme,
            p.r0,
            p.r1,
            p.symbol_duration,
            p.transition_time,
            p.distance,
            p.carrier_band.0,
            p.carrier_band.1,
            p.tones_hz.0,
            p.tones_hz.1,
            p.bits_per_minute
        )
        .unwrap();
    }
    s
}

pub fn sweep_text(report: &SweepReport) -> String {
    let mut s = format!(
        "axis {}\n{:>12}  {:>6}  {:>7}  {:>6}  {:>10}  {:>8}  {:>8}\n",
        report.axis.name(),
        "value",
        "trials",
        "bits",
        "errors",
        "mean_ber",
        "bits/min",
        "snr_db"
    );
    for p in &report.points {
        writeln!(
            s,
            "{:12.6}  {:6}  {:7}  {:6}  {:10.6}  {:8.2}  {:8.2}",
            p.value, p.trials, p.n_bits, p.bit_errors, p.mean_ber, p.bits_per_minute, p.snr_db
        )
        .unwrap();
    }
    s
}

/// Parses a hex string, ignoring whitespace.
pub fn parse_hex(text: &str) -> Result<Vec<u8>> {
    let digits: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
    if !digits.len().is_multiple_of(2) {
        return Err(CliError::Config(
            "hex payload needs an even number of digits".into(),
        ));
    }
    digits
        .chunks(2)
        .map(|p| {
            let s: String = p.iter().collect();
            u8::from_str_radix(&s, 16)
                .map_err(|_| CliError::Config(format!("invalid hex byte {s:?}")))
        })
        .collect()
}
