//! Seeded loopback trials and BER sweeps.

use std::io::Write;

use fanmodem::demod::Decimator;
use fanmodem::{
    bits_per_minute, demodulate, encode_frames, in_band_snr_db, modulate, synthesize_into,
    BitStream, ChannelConfig, DemodConfig, Demodulation, FanSpec, ModulationConfig, Waveform,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{demod_for, ExperimentConfig};
use crate::error::{CliError, Result};

/// The parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    /// Microphone distance in meters.
    Distance,
    /// Ambient noise amplitude.
    Noise,
    /// Hold time T in seconds.
    #[serde(rename = "T")]
    #[value(name = "T", alias = "t")]
    Hold,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Distance => "distance",
            Axis::Noise => "noise",
            Axis::Hold => "T",
        }
    }
}

/// One trial's outcome, as written to the record stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub axis: Axis,
    pub value: f64,
    pub seed: u64,
    pub n_bits: usize,
    pub bit_errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    pub trials: usize,
    pub n_bits: usize,
    pub bit_errors: usize,
    pub mean_ber: f64,
    pub bits_per_minute: f64,
    /// In-band SNR of the point's link; infinite without ambient noise.
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub axis: Axis,
    pub points: Vec<SweepPoint>,
}

/// Payload bytes drawn from `seed`.
pub fn payload_for_seed(seed: u64, len: usize) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random()).collect()
}

/// Positions where `got` differs from `sent`; missing bits count as errors
/// and extra received bits are ignored.
pub fn count_bit_errors(sent: &BitStream, got: &BitStream) -> usize {
    let got = got.bits();
    sent.iter()
        .enumerate()
        .filter(|&(i, b)| got.get(i) != Some(&b))
        .count()
}

/// Synthesis and decimation buffers reused across trials.
#[derive(Default)]
pub struct Link {
    audio: Vec<f32>,
    decimator: Option<((u32, u32), Decimator)>,
}

impl Link {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sends `bits` and returns the recording already resampled to
    /// `target_rate`, ready for any number of receivers at that rate.
    pub fn transmit(
        &mut self,
        bits: &BitStream,
        fan: &FanSpec,
        m: &ModulationConfig,
        ch: &ChannelConfig,
        target_rate: u32,
    ) -> Result<Waveform> {
        let schedule = modulate(bits, m, fan)?;
        synthesize_into(&schedule, fan, ch, &mut self.audio)?;
        let key = (ch.sample_rate, target_rate);
        if self.decimator.as_ref().is_none_or(|(k, _)| *k != key) {
            self.decimator = Some((key, Decimator::new(ch.sample_rate, target_rate)?));
        }
        let (_, dec) = self.decimator.as_mut().expect("set above");
        Ok(dec.process(&self.audio))
    }
}

/// One seeded loopback: random payload, noise seeded with `seed`.
pub fn run_trial(
    link: &mut Link,
    fan: &FanSpec,
    m: &ModulationConfig,
    ch: &ChannelConfig,
    demod: &DemodConfig,
    seed: u64,
    payload_bytes: usize,
) -> Result<(BitStream, Demodulation)> {
    let bits = encode_frames(&payload_for_seed(seed, payload_bytes));
    let ch = ChannelConfig {
        noise_seed: seed,
        ..*ch
    };
    let recording = link.transmit(&bits, fan, m, &ch, demod.target_rate)?;
    let out = demodulate(&recording, demod)?;
    Ok((bits, out))
}

/// Runs every seed at every axis value. Each record is written to `records`
/// as one JSON line as soon as it is known; the summary is computed from the
/// same records.
pub fn ber_sweep(
    cfg: &ExperimentConfig,
    axis: Axis,
    values: &[f64],
    mut records: Option<&mut dyn Write>,
) -> Result<SweepReport> {
    if cfg.payload_bytes == 0 {
        return Err(CliError::Config(
            "experiment.payload_bytes must be >= 1 for a sweep".into(),
        ));
    }
    let mut link = Link::new();
    let mut points = Vec::with_capacity(values.len());
    for &value in values {
        let (fan, m, ch) = apply(cfg, axis, value)?;
        let demod = demod_for(&fan, &m, &cfg.demod)?;
        let (mut n_bits, mut bit_errors) = (0, 0);
        for &seed in &cfg.seeds {
            let (sent, out) = run_trial(&mut link, &fan, &m, &ch, &demod, seed, cfg.payload_bytes)
                .map_err(|e| with_context(e, &format!("{} = {value}, seed {seed}", axis.name())))?;
            let rec = TrialRecord {
                axis,
                value,
                seed,
                n_bits: sent.len(),
                bit_errors: count_bit_errors(&sent, &out.bits),
            };
            if let Some(w) = records.as_mut() {
                let line = serde_json::to_string(&rec).expect("records always serialize");
                writeln!(w, "{line}").map_err(|e| CliError::Io(format!("records: {e}")))?;
            }
            n_bits += rec.n_bits;
            bit_errors += rec.bit_errors;
        }
        let tr = m.transition_time(&fan)?;
        points.push(SweepPoint {
            value,
            trials: cfg.seeds.len(),
            n_bits,
            bit_errors,
            mean_ber: bit_errors as f64 / n_bits as f64,
            bits_per_minute: bits_per_minute(tr, m.symbol_duration),
            snr_db: in_band_snr_db(&fan, &m, &ch),
        });
    }
    Ok(SweepReport { axis, points })
}

/// The link with the axis parameter set to `value`.
pub fn apply(
    cfg: &ExperimentConfig,
    axis: Axis,
    value: f64,
) -> Result<(FanSpec, ModulationConfig, ChannelConfig)> {
    let (fan, mut m, mut ch) = (cfg.fan, cfg.modulation, cfg.channel);
    match axis {
        Axis::Distance => ch.distance = value,
        Axis::Noise => ch.ambient_noise_amplitude = value,
        Axis::Hold => m.symbol_duration = value,
    }
    ch.validate()?;
    m.validate(&fan)?;
    Ok((fan, m, ch))
}

fn with_context(e: CliError, ctx: &str) -> CliError {
    match e {
        CliError::Io(s) => CliError::Io(format!("{ctx}: {s}")),
        CliError::Config(s) => CliError::Config(format!("{ctx}: {s}")),
        CliError::Format(s) => CliError::Format(format!("{ctx}: {s}")),
        CliError::SyncNotFound(s) => CliError::SyncNotFound(format!("{ctx}: {s}")),
    }
}
