//! Fan-noise synthesis and WAV I/O.

use std::f64::consts::TAU;
use std::io::ErrorKind;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dsp::Biquad;
use crate::error::{Error, Result};
use crate::fan::FanSpec;
use crate::modulator::{ModulationConfig, RpmSchedule};

/// Band of the broadband flow noise.
pub const BROADBAND_BAND: (f64, f64) = (100.0, 1000.0);

const BROADBAND_STREAM: u64 = 1;
const AMBIENT_STREAM: u64 = 2;
/// Samples between exact phase resynchronizations of the chirp oscillator.
const RESYNC: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub sample_rate: u32,
    /// Microphone distance in meters.
    pub distance: f64,
    pub harmonic_count: u32,
    /// Amplitude factor between consecutive harmonics.
    pub harmonic_rolloff: f64,
    /// RMS of the broadband flow noise relative to the fundamental's amplitude.
    pub broadband_level: f64,
    /// Standard deviation of the white ambient noise, in the same units as the fan amplitude.
    pub ambient_noise_amplitude: f64,
    pub noise_seed: u64,
    /// Seconds of recording (ambient noise only) before the fan starts signalling.
    pub lead_in: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        ChannelConfig {
            sample_rate: 44_100,
            distance: 1.0,
            harmonic_count: 3,
            harmonic_rolloff: 0.3,
            broadband_level: 0.05,
            ambient_noise_amplitude: 0.0,
            noise_seed: 0,
            lead_in: 0.0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::config("sample rate must be positive"));
        }
        if !(self.distance >= 0.0 && self.distance.is_finite()) {
            return Err(Error::config(format!(
                "distance must be >= 0, got {}",
                self.distance
            )));
        }
        if self.harmonic_count < 1 {
            return Err(Error::config("harmonic_count must be >= 1"));
        }
        for (name, v) in [
            ("harmonic_rolloff", self.harmonic_rolloff),
            ("broadband_level", self.broadband_level),
            ("ambient_noise_amplitude", self.ambient_noise_amplitude),
            ("lead_in", self.lead_in),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// In-band power of the ambient noise inside `band` (Hz), given its white spectrum.
    pub fn ambient_power_in_band(&self, band: (f64, f64)) -> f64 {
        let nyquist = self.sample_rate as f64 / 2.0;
        let width = (band.1.min(nyquist) - band.0.max(0.0)).max(0.0);
        self.ambient_noise_amplitude.powi(2) * width / nyquist
    }
}

/// Mean carrier power over ambient noise power inside the carrier band, in dB.
///
/// The carrier power is the average of the two steady tones' powers
/// `A(r)^2 / 2`; the noise power is the share of the white ambient noise
/// falling in the band.
pub fn in_band_snr_db(fan: &FanSpec, m: &ModulationConfig, ch: &ChannelConfig) -> f64 {
    let carrier = carrier_power(fan, m, ch);
    10.0 * (carrier / ch.ambient_power_in_band(m.carrier_band)).log10()
}

/// Ambient noise amplitude giving `snr_db` of in-band SNR for this link.
pub fn ambient_for_snr(
    fan: &FanSpec,
    m: &ModulationConfig,
    ch: &ChannelConfig,
    snr_db: f64,
) -> f64 {
    let unit = ChannelConfig {
        ambient_noise_amplitude: 1.0,
        ..*ch
    };
    let per_unit = unit.ambient_power_in_band(m.carrier_band);
    (carrier_power(fan, m, ch) / per_unit / 10f64.powf(snr_db / 10.0)).sqrt()
}

fn carrier_power(fan: &FanSpec, m: &ModulationConfig, ch: &ChannelConfig) -> f64 {
    let p = |rpm: f64| fan.amplitude_unchecked(rpm, ch.distance).powi(2) / 2.0;
    (p(m.r0) + p(m.r1)) / 2.0
}

/// Mono audio with samples in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub sample_rate: u32,
    pub samples: Vec<f32>,
}

impl Waveform {
    pub fn new(sample_rate: u32, samples: Vec<f32>) -> Self {
        Waveform {
            sample_rate,
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0f32, |m, s| m.max(s.abs()))
    }
}

/// Synthesized audio plus the global gain applied to keep it inside `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub waveform: Waveform,
    /// 1.0 unless the mix peaked above full scale; `raw = samples / gain`.
    pub gain: f64,
}

/// One stretch of linear RPM change (or a hold, when `slope == 0`).
struct Piece {
    t0: f64,
    t1: f64,
    rpm0: f64,
    /// RPM per second.
    slope: f64,
}

fn pieces(schedule: &RpmSchedule, fan: &FanSpec) -> Vec<Piece> {
    let mut out = Vec::with_capacity(2 * schedule.len());
    let mut rpm = schedule.segments[0].rpm;
    let mut t = 0.0;
    for seg in &schedule.segments {
        let end = t + seg.duration();
        let delta = seg.rpm - rpm;
        let settle = (delta.abs() / fan.slew_rate).min(seg.duration());
        if settle > 0.0 {
            let slope = fan.slew_rate.copysign(delta);
            out.push(Piece {
                t0: t,
                t1: t + settle,
                rpm0: rpm,
                slope,
            });
            rpm += slope * settle;
            if (rpm - seg.rpm).abs() < 1e-9 {
                rpm = seg.rpm;
            }
        }
        if end > t + settle {
            out.push(Piece {
                t0: t + settle,
                t1: end,
                rpm0: rpm,
                slope: 0.0,
            });
        }
        t = end;
    }
    out
}

/// Renders the sound of `fan` executing `schedule`, heard through `ch`.
///
/// The rotor follows the slew-limited trajectory of each segment and the tone
/// phase integrates the instantaneous blade-pass frequency, so transitions are
/// continuous chirps. Each harmonic `k` has amplitude `A(rpm, d) * rolloff^(k-1)`;
/// broadband flow noise (white Gaussian through a 100-1000 Hz bandpass) scales
/// with `A(rpm, d)`; white ambient noise is added on top. The mix is divided by
/// its peak if it exceeds full scale.
pub fn synthesize(schedule: &RpmSchedule, fan: &FanSpec, ch: &ChannelConfig) -> Result<Synthesis> {
    let mut samples = Vec::new();
    let gain = synthesize_into(schedule, fan, ch, &mut samples)?;
    Ok(Synthesis {
        waveform: Waveform::new(ch.sample_rate, samples),
        gain,
    })
}

/// [`synthesize`] into a caller-owned buffer, returning the gain. Reusing one
/// buffer across many renders avoids faulting in fresh memory each time.
pub fn synthesize_into(
    schedule: &RpmSchedule,
    fan: &FanSpec,
    ch: &ChannelConfig,
    out: &mut Vec<f32>,
) -> Result<f64> {
    if schedule.is_empty() {
        return Err(Error::domain("cannot synthesize an empty schedule"));
    }
    schedule.validate(fan)?;
    ch.validate()?;
    let fs = ch.sample_rate as f64;
    let max_rpm = schedule
        .segments
        .iter()
        .map(|s| s.rpm)
        .fold(f64::MIN, f64::max);
    let max_bpf = fan.bpf(max_rpm);
    if fs < 4.0 * max_bpf {
        return Err(Error::domain(format!(
            "sample rate {fs} Hz is below 4x the highest blade-pass frequency {max_bpf:.2} Hz"
        )));
    }
    // keep every rendered harmonic below 0.45 fs
    let harmonics = (1..=ch.harmonic_count)
        .take_while(|&k| k as f64 * max_bpf < 0.45 * fs)
        .count()
        .max(1);
    let weights: Vec<f64> = (0..harmonics)
        .map(|k| ch.harmonic_rolloff.powi(k as i32))
        .collect();

    let lead = (ch.lead_in * fs).round() as usize;
    let body = (schedule.duration() * fs).round() as usize;
    out.clear();
    out.resize(lead + body, 0.0);

    let osc = Oscillator {
        dt: 1.0 / fs,
        blades: fan.blade_count as f64 / 60.0,
        inv_ref: 1.0 / fan.ref_rpm,
        amp_scale: fan.ref_amplitude / ch.distance.max(1.0),
        weights: &weights,
    };
    let mut theta = 0.0f64;
    for piece in pieces(schedule, fan) {
        let i0 = ((piece.t0 * fs).ceil() as usize).min(body);
        let i1 = ((piece.t1 * fs).ceil() as usize).min(body);
        let mut i = i0;
        while i < i1 {
            let end = (i + RESYNC).min(i1);
            osc.render(&piece, theta, i, &mut out[lead + i..lead + end]);
            i = end;
        }
        theta = osc.phase(&piece, theta, piece.t1 - piece.t0) % TAU;
    }

    if ch.broadband_level > 0.0 {
        add_broadband(&mut out[lead..], schedule, fan, ch);
    }
    if ch.ambient_noise_amplitude > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(ch.noise_seed);
        rng.set_stream(AMBIENT_STREAM);
        for s in out.iter_mut() {
            let n: f64 = rng.sample(StandardNormal);
            *s += (ch.ambient_noise_amplitude * n) as f32;
        }
    }

    let peak = out.iter().fold(0f32, |m, s| m.max(s.abs()));
    Ok(if peak > 1.0 {
        let g = 1.0 / peak as f64;
        out.iter_mut().for_each(|s| *s = (*s as f64 * g) as f32);
        g
    } else {
        1.0
    })
}

/// Interleaved chirp oscillators: sample `n` of a block belongs to lane
/// `n % LANES`, and each lane advances by `LANES` samples per step, so the
/// lanes' phasor recursions are independent of each other.
const LANES: usize = 4;

struct Oscillator<'a> {
    dt: f64,
    blades: f64,
    inv_ref: f64,
    amp_scale: f64,
    weights: &'a [f64],
}

impl Oscillator<'_> {
    /// Tone phase `u` seconds into `piece`, which starts at phase `theta`.
    fn phase(&self, piece: &Piece, theta: f64, u: f64) -> f64 {
        let f0 = self.blades * piece.rpm0;
        let chirp = self.blades * piece.slope;
        theta + TAU * (f0 * u + 0.5 * chirp * u * u)
    }

    /// Fills `out` with samples `first..first + out.len()` of the recording,
    /// all inside `piece`. `out.len()` must not exceed `RESYNC`.
    fn render(&self, piece: &Piece, theta: f64, first: usize, out: &mut [f32]) {
        let dt = self.dt;
        let u = first as f64 * dt - piece.t0;
        let f0 = self.blades * piece.rpm0;
        let chirp = self.blades * piece.slope;
        let stride = LANES as f64 * dt;
        let (mut zs, mut zc, mut ws, mut wc) =
            ([0.0; LANES], [0.0; LANES], [0.0; LANES], [0.0; LANES]);
        for r in 0..LANES {
            let ur = u + r as f64 * dt;
            (zs[r], zc[r]) = self.phase(piece, theta, ur).sin_cos();
            let step = TAU * (f0 * stride + chirp * (ur * stride + 0.5 * stride * stride));
            (ws[r], wc[r]) = step.sin_cos();
        }
        let (bs, bc) = (TAU * chirp * stride * stride).sin_cos();
        let x0 = (piece.rpm0 + piece.slope * u) * self.inv_ref;
        let dx = piece.slope * dt * self.inv_ref;
        let ramp = piece.slope != 0.0;
        let hold_amp = self.amp_scale * x0 * x0 * x0.sqrt();

        let mut buf = [0f32; RESYNC];
        for (m, chunk) in buf[..out.len().div_ceil(LANES) * LANES]
            .chunks_exact_mut(LANES)
            .enumerate()
        {
            let mut amp = [hold_amp; LANES];
            if ramp {
                for (r, a) in amp.iter_mut().enumerate() {
                    let x = x0 + (m * LANES + r) as f64 * dx;
                    *a = self.amp_scale * x * x * x.sqrt();
                }
            }
            // sin(k th) by the recurrence s_{k+1} = 2 cos(th) s_k - s_{k-1}
            let mut acc = [0.0; LANES];
            let mut prev = [0.0; LANES];
            let mut cur = zs;
            for r in 0..LANES {
                acc[r] = self.weights[0] * cur[r];
            }
            for &w in &self.weights[1..] {
                for r in 0..LANES {
                    let next = 2.0 * zc[r] * cur[r] - prev[r];
                    prev[r] = cur[r];
                    cur[r] = next;
                    acc[r] += w * next;
                }
            }
            for r in 0..LANES {
                chunk[r] = (amp[r] * acc[r]) as f32;
                let s = zs[r] * wc[r] + zc[r] * ws[r];
                zc[r] = zc[r] * wc[r] - zs[r] * ws[r];
                zs[r] = s;
                let s = ws[r] * bc + wc[r] * bs;
                wc[r] = wc[r] * bc - ws[r] * bs;
                ws[r] = s;
            }
        }
        out.copy_from_slice(&buf[..out.len()]);
    }
}

fn add_broadband(body: &mut [f32], schedule: &RpmSchedule, fan: &FanSpec, ch: &ChannelConfig) {
    let fs = ch.sample_rate as f64;
    let make = || {
        (
            Biquad::highpass(BROADBAND_BAND.0, fs),
            Biquad::lowpass(BROADBAND_BAND.1, fs),
        )
    };
    // power gain of the cascade for unit white noise = energy of its impulse response
    let (mut hp, mut lp) = make();
    let mut energy = 0.0;
    for i in 0..(fs as usize) {
        let y = lp.process(hp.process(if i == 0 { 1.0 } else { 0.0 }));
        energy += y * y;
    }
    let norm = 1.0 / energy.sqrt();

    let (mut hp, mut lp) = make();
    let mut rng = ChaCha8Rng::seed_from_u64(ch.noise_seed);
    rng.set_stream(BROADBAND_STREAM);
    let fs_len = body.len();
    let inv_ref = 1.0 / fan.ref_rpm;
    let scale = norm * ch.broadband_level * fan.ref_amplitude / ch.distance.max(1.0);
    for piece in pieces(schedule, fan) {
        let i0 = ((piece.t0 * fs).ceil() as usize).min(fs_len);
        let i1 = ((piece.t1 * fs).ceil() as usize).min(fs_len);
        for (j, s) in body[i0..i1].iter_mut().enumerate() {
            let t = (i0 + j) as f64 / fs - piece.t0;
            let x = (piece.rpm0 + piece.slope * t) * inv_ref;
            let n: f64 = rng.sample(StandardNormal);
            let filtered = lp.process(hp.process(n));
            *s += (scale * x * x * x.sqrt() * filtered) as f32;
        }
    }
}

fn map_hound(path: &Path, err: hound::Error) -> Error {
    let path = path.to_path_buf();
    match err {
        // hound reports a short read of the header or data as `Other`
        hound::Error::IoError(e)
            if matches!(e.kind(), ErrorKind::UnexpectedEof | ErrorKind::Other) =>
        {
            Error::Format {
                path,
                reason: "file ends early (truncated header or data)".into(),
            }
        }
        hound::Error::IoError(source) => Error::Io { path, source },
        hound::Error::FormatError(reason) => Error::Format {
            path,
            reason: reason.into(),
        },
        hound::Error::Unsupported => Error::UnsupportedFormat {
            path,
            reason: "encoding not supported".into(),
        },
        other => Error::Format {
            path,
            reason: other.to_string(),
        },
    }
}

/// Writes mono 16-bit little-endian PCM; samples are rounded to the nearest step of 1/32767.
pub fn write_wav(w: &Waveform, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    {
        let mut i16_writer = writer.get_i16_writer(w.samples.len() as u32);
        for &s in &w.samples {
            i16_writer.write_sample(quantize(s));
        }
        i16_writer.flush().map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))
}

#[inline]
pub fn quantize(s: f32) -> i16 {
    (s.clamp(-1.0, 1.0) as f64 * 32767.0).round() as i16
}

/// Reads 16-bit PCM, mono or stereo (channels are averaged), scaled to `[-1, 1]`.
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader =
        hound::WavReader::new(std::io::BufReader::new(file)).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: format!(
                "{}-bit {:?} samples, expected 16-bit integer PCM",
                spec.bits_per_sample, spec.sample_format
            ),
        });
    }
    if !(1..=2).contains(&spec.channels) {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: format!("{} channels, expected mono or stereo", spec.channels),
        });
    }
    let raw = reader
        .into_samples::<i16>()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| map_hound(path, e))?;
    let scale = |v: i16| (v as f32 / 32767.0).max(-1.0);
    let samples = if spec.channels == 2 {
        raw.chunks_exact(2)
            .map(|c| (scale(c[0]) + scale(c[1])) * 0.5)
            .collect()
    } else {
        raw.into_iter().map(scale).collect()
    };
    Ok(Waveform::new(spec.sample_rate, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modulator::Segment;

    fn steady(rpm: f64, seconds: f64) -> RpmSchedule {
        RpmSchedule {
            segments: vec![Segment {
                rpm,
                hold_seconds: seconds,
                ramp_seconds: 0.0,
            }],
        }
    }

    fn quiet() -> ChannelConfig {
        ChannelConfig {
            harmonic_count: 1,
            broadband_level: 0.0,
            ..ChannelConfig::default()
        }
    }

    #[test]
    fn snr_helpers_invert_each_other() {
        let fan = FanSpec::default();
        let m = ModulationConfig {
            scheme: crate::modulator::Scheme::Fsk,
            r0: 4000.0,
            r1: 4250.0,
            symbol_duration: 0.0,
            carrier_band: (400.0, 600.0),
        };
        let ch = ChannelConfig::default();
        let amp = ambient_for_snr(&fan, &m, &ch, 10.0);
        let with = ChannelConfig {
            ambient_noise_amplitude: amp,
            ..ch
        };
        assert!((in_band_snr_db(&fan, &m, &with) - 10.0).abs() < 1e-9);
        // oracle: carrier (32^2 + 4250/4000^5 * 32^2) / 4, noise amp^2 * 200 / 22050
        let carrier = (1024.0 + 1024.0 * (4250.0f64 / 4000.0).powi(5)) / 4.0;
        let noise = amp * amp * 200.0 / 22_050.0;
        assert!((10.0 * (carrier / noise).log10() - 10.0).abs() < 1e-9);
        assert!(in_band_snr_db(&fan, &m, &ch).is_infinite());
    }

    #[test]
    fn measured_noise_matches_in_band_power() {
        let ch = ChannelConfig {
            ambient_noise_amplitude: 0.1,
            broadband_level: 0.0,
            harmonic_count: 1,
            noise_seed: 3,
            // far enough that the fan itself is negligible
            distance: 1e6,
            ..ChannelConfig::default()
        };
        let s = synthesize(&steady(1000.0, 4.0), &FanSpec::default(), &ch).unwrap();
        let ms = s
            .waveform
            .samples
            .iter()
            .map(|&v| (v as f64).powi(2))
            .sum::<f64>()
            / s.waveform.len() as f64;
        assert!((ms / 0.01 - 1.0).abs() < 0.02, "{ms}");
    }

    #[test]
    fn empty_schedule_rejected() {
        let r = synthesize(&RpmSchedule::default(), &FanSpec::default(), &quiet());
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn low_sample_rate_rejected() {
        let ch = ChannelConfig {
            sample_rate: 2000,
            ..quiet()
        };
        assert!(synthesize(&steady(4500.0, 1.0), &FanSpec::default(), &ch).is_err());
    }

    #[test]
    fn deterministic_with_seed() {
        let ch = ChannelConfig {
            ambient_noise_amplitude: 0.3,
            broadband_level: 0.1,
            noise_seed: 17,
            ..ChannelConfig::default()
        };
        let fan = FanSpec::default();
        let a = synthesize(&steady(1600.0, 0.5), &fan, &ch).unwrap();
        let b = synthesize(&steady(1600.0, 0.5), &fan, &ch).unwrap();
        assert_eq!(a.waveform, b.waveform);
        let c = synthesize(
            &steady(1600.0, 0.5),
            &fan,
            &ChannelConfig {
                noise_seed: 18,
                ..ch
            },
        )
        .unwrap();
        assert_ne!(a.waveform, c.waveform);
    }

    #[test]
    fn phase_matches_closed_form_on_a_hold() {
        // 1000 RPM, 7 blades, 1 m -> amplitude 1, tone 116.67 Hz, starting at phase 0
        let s = synthesize(&steady(1000.0, 1.0), &FanSpec::default(), &quiet()).unwrap();
        assert_eq!(s.gain, 1.0);
        let f = 7.0 * 1000.0 / 60.0;
        for i in [0usize, 1, 1023, 1024, 30_000, 44_099] {
            let want = (TAU * f * i as f64 / 44_100.0).sin();
            assert!((s.waveform.samples[i] as f64 - want).abs() < 1e-6, "i={i}");
        }
    }

    #[test]
    fn chirp_phase_is_continuous() {
        // ramp 1000 -> 1600 at 300 RPM/s: instantaneous frequency is linear in t
        let fan = FanSpec {
            slew_rate: 300.0,
            ..FanSpec::default()
        };
        let sched = RpmSchedule {
            segments: vec![
                Segment {
                    rpm: 1000.0,
                    hold_seconds: 0.5,
                    ramp_seconds: 0.0,
                },
                Segment {
                    rpm: 1600.0,
                    hold_seconds: 0.5,
                    ramp_seconds: 2.0,
                },
            ],
        };
        let s = synthesize(&sched, &fan, &quiet()).unwrap();
        let raw: Vec<f64> = s
            .waveform
            .samples
            .iter()
            .map(|&v| v as f64 / s.gain)
            .collect();
        let f0 = 7.0 * 1000.0 / 60.0;
        let k = 7.0 * 300.0 / 60.0;
        let phase = |t: f64| {
            if t < 0.5 {
                TAU * f0 * t
            } else {
                let u = (t - 0.5).min(2.0);
                let extra = (t - 2.5).max(0.0);
                TAU * (f0 * 0.5 + f0 * u + 0.5 * k * u * u + (f0 + k * 2.0) * extra)
            }
        };
        let amp = |t: f64| {
            let rpm = 1000.0 + 300.0 * (t - 0.5).clamp(0.0, 2.0);
            (rpm / 1000.0).powf(2.5)
        };
        for i in (0..raw.len()).step_by(997) {
            let t = i as f64 / 44_100.0;
            let want = amp(t) * phase(t).sin();
            assert!(
                (raw[i] - want).abs() < 1e-4 * amp(t),
                "t={t}: {} vs {want}",
                raw[i]
            );
        }
    }

    #[test]
    fn normalizes_above_full_scale() {
        let s = synthesize(&steady(4000.0, 0.2), &FanSpec::default(), &quiet()).unwrap();
        assert!(s.gain < 1.0);
        assert!(s.waveform.peak() <= 1.0);
        assert!((s.waveform.peak() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn lead_in_is_silent_without_ambient() {
        let ch = ChannelConfig {
            lead_in: 0.5,
            ..ChannelConfig::default()
        };
        let s = synthesize(&steady(1000.0, 0.5), &FanSpec::default(), &ch).unwrap();
        assert_eq!(s.waveform.len(), 44_100);
        assert!(s.waveform.samples[..22_050].iter().all(|&v| v == 0.0));
        assert!(s.waveform.samples[22_050..].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn wav_silence_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("silence.wav");
        write_wav(&Waveform::new(44_100, vec![0.0; 44_100]), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 44 + 88_200);
        assert_eq!(&bytes[0..4], b"RIFF");
        assert_eq!(&bytes[8..16], b"WAVEfmt ");
        assert_eq!(u16::from_le_bytes([bytes[20], bytes[21]]), 1); // PCM
        assert_eq!(u16::from_le_bytes([bytes[22], bytes[23]]), 1); // mono
        assert_eq!(
            u32::from_le_bytes(bytes[24..28].try_into().unwrap()),
            44_100
        );
        assert_eq!(u16::from_le_bytes([bytes[34], bytes[35]]), 16);
        assert_eq!(&bytes[36..40], b"data");
        assert_eq!(
            u32::from_le_bytes(bytes[40..44].try_into().unwrap()),
            88_200
        );
        assert!(bytes[44..].iter().all(|&b| b == 0));
    }

    #[test]
    fn wav_full_scale_endpoints() {
        assert_eq!(quantize(1.0), 32767);
        assert_eq!(quantize(-1.0), -32767);
        assert_eq!(quantize(2.0), 32767);
        assert_eq!(quantize(0.6 / 32767.0), 1);
        assert_eq!(quantize(0.4 / 32767.0), 0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fs.wav");
        write_wav(&Waveform::new(8000, vec![1.0]), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(i16::from_le_bytes([bytes[44], bytes[45]]), 32767);
    }

    #[test]
    fn truncated_header_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cut.wav");
        write_wav(&Waveform::new(8000, vec![0.1; 100]), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..20]).unwrap();
        let r = read_wav(&path);
        assert!(matches!(r, Err(Error::Format { .. })), "{r:?}");
        std::fs::write(&path, b"definitely not audio").unwrap();
        let r = read_wav(&path);
        assert!(matches!(r, Err(Error::Format { .. })), "{r:?}");
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            read_wav("/nonexistent/dir/x.wav"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn float_wav_is_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("float.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 8000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(&path, spec).unwrap();
        w.write_sample(0.5f32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(
            read_wav(&path),
            Err(Error::UnsupportedFormat { .. })
        ));
    }

    #[test]
    fn stereo_identical_channels_equal_mono() {
        let dir = tempfile::tempdir().unwrap();
        let mono_path = dir.path().join("m.wav");
        let stereo_path = dir.path().join("s.wav");
        let samples: Vec<f32> = (0..500).map(|i| ((i as f32) * 0.01).sin() * 0.8).collect();
        write_wav(&Waveform::new(8000, samples.clone()), &mono_path).unwrap();
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 8000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&stereo_path, spec).unwrap();
        for &s in &samples {
            w.write_sample(quantize(s)).unwrap();
            w.write_sample(quantize(s)).unwrap();
        }
        w.finalize().unwrap();
        assert_eq!(
            read_wav(&mono_path).unwrap(),
            read_wav(&stereo_path).unwrap()
        );
    }
}
