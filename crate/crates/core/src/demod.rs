//! Receiver chain: resample to a low rate, isolate the carrier band, reduce the
//! audio to a per-window feature track, lock onto the `1010` preamble and slice
//! symbols.
//!
//! The feature is in-band energy for ASK and tone frequency for FSK. ASK levels
//! are compared in `log10` energy, so the midpoint threshold sits halfway
//! between the two levels in dB.

use std::f64::consts::SQRT_2;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::channel::Waveform;
use crate::dsp::{bandpass_taps, filter_centered, hann, kaiser_length, tone_power, Resampler};
use crate::error::{Error, Result};
use crate::fan::FanSpec;
use crate::framing::{BitStream, FRAME_BITS, PREAMBLE};
use crate::modulator::{ModulationConfig, Scheme};

pub const DEFAULT_TARGET_RATE: u32 = 2000;
pub const DEFAULT_BAND: (f64, f64) = (100.0, 600.0);
pub const DEFAULT_SYNC_THRESHOLD: f64 = 0.9;

/// Half-width of a symbol's decision window as a fraction of the symbol period.
const DECISION_HALF_WIDTH: f64 = 0.3;
/// FSK windows whose two tone powers hold less than this share of the window's
/// power are treated as carrying no tone, unless noise alone would reach half
/// of it (see [`tone_share_floor`]).
const TONE_SHARE_FLOOR: f64 = 0.2;
/// Spectral peaks below this multiple of the in-band median are not a tone.
const PEAK_TO_MEDIAN_FLOOR: f64 = 10.0;
/// Floor applied before taking `log10` of an energy.
const ENERGY_FLOOR: f64 = 1e-30;
/// Smallest ASK contrast accepted as a preamble, in `log10` energy (0.1 dB).
const ASK_MIN_CONTRAST: f64 = 0.01;
/// Largest allowed gap between the two `1` (or the two `0`) preamble levels,
/// relative to the preamble contrast.
const CONSISTENCY: f64 = 0.2;
/// Largest allowed difference between the two halves of a preamble span,
/// relative to the preamble contrast, before noise allowance.
const STEP_LIMIT: f64 = 0.35;
/// Radius of the local search around each later frame's expected start, in symbol periods.
const RESYNC_RADIUS: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DemodConfig {
    pub scheme: Scheme,
    /// Analysis rate after decimation, in Hz.
    pub target_rate: u32,
    /// Bandpass edges in Hz.
    pub band: (f64, f64),
    /// Rotor transition time TR used by the transmitter, in seconds.
    pub transition: f64,
    /// Hold time T used by the transmitter, in seconds.
    pub hold: f64,
    /// Analysis window in seconds.
    pub window_length: f64,
    /// Step between analysis windows in seconds.
    pub hop: f64,
    /// Expected tone for a `0` (FSK only).
    pub expected_f0: Option<f64>,
    /// Expected tone for a `1` (FSK only).
    pub expected_f1: Option<f64>,
    /// Minimum normalized correlation with the preamble template.
    pub sync_threshold: f64,
}

impl DemodConfig {
    /// A receiver for `scheme` with default analysis windows and no tone hints.
    pub fn new(scheme: Scheme, band: (f64, f64), transition: f64, hold: f64) -> Self {
        let period = transition + hold;
        let window_length = default_window(scheme, period);
        DemodConfig {
            scheme,
            target_rate: DEFAULT_TARGET_RATE,
            band,
            transition,
            hold,
            window_length,
            hop: default_hop(window_length, period),
            expected_f0: None,
            expected_f1: None,
            sync_threshold: DEFAULT_SYNC_THRESHOLD,
        }
    }

    /// The receiver matching a transmitter: same timing and band, and for FSK
    /// the two blade-pass tones as hints.
    pub fn for_modulation(fan: &FanSpec, m: &ModulationConfig) -> Result<Self> {
        m.validate(fan)?;
        let tr = m.transition_time(fan)?;
        let cfg = DemodConfig::new(m.scheme, m.carrier_band, tr, m.symbol_duration);
        Ok(match m.scheme {
            Scheme::Ask => cfg,
            Scheme::Fsk => cfg.with_hints(fan.bpf(m.r0), fan.bpf(m.r1)),
        })
    }

    /// Sets the FSK tone hints and a window long enough to resolve them,
    /// at least `2 / |f1 - f0|`.
    pub fn with_hints(mut self, f0: f64, f1: f64) -> Self {
        self.expected_f0 = Some(f0);
        self.expected_f1 = Some(f1);
        // longer windows average more noise but only help where the tone holds still
        let period = self.symbol_period();
        self.window_length = (2.0 / (f1 - f0).abs()).max(0.5f64.min(self.hold / 16.0));
        self.hop = default_hop(self.window_length, period);
        self
    }

    /// Seconds per symbol, `TR + T`.
    pub fn symbol_period(&self) -> f64 {
        self.transition + self.hold
    }

    /// Offset of a symbol's decision instant from the start of its slot.
    ///
    /// The feature crosses the decision threshold halfway through each ramp, so
    /// a symbol's usable span runs from `TR/2` to `P + TR/2`; its center is
    /// `TR + T/2`.
    pub fn decision_epoch(&self) -> f64 {
        self.transition + self.hold / 2.0
    }

    fn hints(&self) -> Option<(f64, f64)> {
        self.expected_f0.zip(self.expected_f1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_rate == 0 {
            return Err(Error::config("target rate must be positive"));
        }
        let nyquist = self.target_rate as f64 / 2.0;
        let (lo, hi) = self.band;
        if !(lo > 0.0 && lo < hi && hi < nyquist) {
            return Err(Error::config(format!(
                "band ({lo}, {hi}) must satisfy 0 < low < high < {nyquist} Hz"
            )));
        }
        if !(self.transition >= 0.0 && self.hold >= 0.0) {
            return Err(Error::config("transition and hold times must be >= 0"));
        }
        let period = self.symbol_period();
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::config("symbol period TR + T must be positive"));
        }
        if !(self.window_length > 0.0 && self.window_length <= period) {
            return Err(Error::config(format!(
                "window length {} s must be in (0, symbol period {period} s]",
                self.window_length
            )));
        }
        if !(self.hop > 0.0 && self.hop <= self.window_length) {
            return Err(Error::config(format!(
                "hop {} s must be in (0, window length]",
                self.hop
            )));
        }
        if !(0.0..=1.0).contains(&self.sync_threshold) {
            return Err(Error::config("sync threshold must be in [0, 1]"));
        }
        match (self.expected_f0, self.expected_f1) {
            (None, None) => {}
            (Some(f0), Some(f1)) => {
                if !(f0 > 0.0 && f1 > 0.0 && f0 < nyquist && f1 < nyquist) || f0 == f1 {
                    return Err(Error::config(format!(
                        "tone hints ({f0}, {f1}) must be distinct and inside (0, {nyquist}) Hz"
                    )));
                }
                let needed = 2.0 / (f1 - f0).abs();
                if self.window_length < needed * (1.0 - 1e-9) {
                    return Err(Error::config(format!(
                        "window length {} s cannot resolve tones {f0} and {f1} Hz (needs {needed:.4} s)",
                        self.window_length
                    )));
                }
            }
            _ => {
                return Err(Error::config(
                    "give both expected_f0 and expected_f1 or neither",
                ))
            }
        }
        Ok(())
    }
}

fn default_window(scheme: Scheme, period: f64) -> f64 {
    match scheme {
        Scheme::Ask => 0.25f64.min(period / 4.0),
        Scheme::Fsk => 0.5f64.min(period / 4.0),
    }
}

fn default_hop(window: f64, period: f64) -> f64 {
    (window / 2.0).min(period / 50.0)
}

/// Symbol levels learned from a preamble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum CalibrationEstimate {
    /// Mean in-band energy of a `0` and a `1`.
    Ask { a0: f64, a1: f64 },
    /// Tone frequency of a `0` and a `1` in Hz.
    Fsk { f0: f64, f1: f64 },
}

impl CalibrationEstimate {
    fn from_working(scheme: Scheme, w0: f64, w1: f64) -> Self {
        match scheme {
            Scheme::Ask => CalibrationEstimate::Ask {
                a0: 10f64.powf(w0),
                a1: 10f64.powf(w1),
            },
            Scheme::Fsk => CalibrationEstimate::Fsk { f0: w0, f1: w1 },
        }
    }
}

/// One sliced symbol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymbolDecision {
    pub bit: bool,
    /// Vote margin `|n1 - n0| / (n1 + n0)` over the usable windows in the
    /// decision span.
    pub confidence: f64,
    /// Decision instant in seconds from the start of the recording.
    pub time_offset: f64,
}

/// A feature sampled on a regular grid; `NaN` marks windows with no usable tone.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    /// Center time of the first window, in seconds.
    pub start: f64,
    pub hop: f64,
    pub window: f64,
    pub values: Vec<f64>,
}

impl Track {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.start + i as f64 * self.hop
    }

    pub fn flagged(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }
}

/// Resamples to `target_rate` with anti-alias filtering; sample `m` of the
/// output sits at time `m / target_rate`, as in the input.
///
/// Large ratios go through an integer decimator first (80 dB, protecting
/// `[0, target/2]`), then a rational polyphase stage with a 60 dB lowpass at
/// `0.45 * target_rate`.
pub fn decimate(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == w.sample_rate {
        return Ok(w.clone());
    }
    Ok(Decimator::new(w.sample_rate, target_rate)?.process(&w.samples))
}

/// A reusable [`decimate`] for one pair of rates; keeps its filters and
/// intermediate buffer between calls.
pub struct Decimator {
    target_rate: u32,
    first: Option<Resampler>,
    last: Option<Resampler>,
    scratch: Vec<f32>,
}

impl Decimator {
    pub fn new(source_rate: u32, target_rate: u32) -> Result<Self> {
        if target_rate == 0 {
            return Err(Error::domain("target rate must be positive"));
        }
        if target_rate > source_rate {
            return Err(Error::domain(format!(
                "target rate {target_rate} Hz exceeds source rate {source_rate} Hz"
            )));
        }
        if target_rate == source_rate {
            return Ok(Decimator {
                target_rate,
                first: None,
                last: None,
                scratch: Vec::new(),
            });
        }
        let target = target_rate as f64;
        let limit = (source_rate as f64 / (3.0 * target)).floor() as u32;
        let d1 = (2..=limit.max(1))
            .rev()
            .find(|d| source_rate.is_multiple_of(*d))
            .unwrap_or(1);
        let mid_rate = source_rate / d1;
        let first = (d1 > 1).then(|| {
            Resampler::new(
                source_rate,
                mid_rate,
                mid_rate as f64 / 2.0,
                mid_rate as f64 - target,
                80.0,
            )
        });
        let last = Resampler::new(mid_rate, target_rate, 0.45 * target, 0.1 * target, 60.0);
        Ok(Decimator {
            target_rate,
            first,
            last: Some(last),
            scratch: Vec::new(),
        })
    }

    pub fn process(&mut self, x: &[f32]) -> Waveform {
        let mut out = Vec::new();
        match (&self.first, &self.last) {
            (Some(a), Some(b)) => {
                a.process_into(x, &mut self.scratch);
                b.process_into(&self.scratch, &mut out);
            }
            (None, Some(b)) => b.process_into(x, &mut out),
            _ => out.extend_from_slice(x),
        }
        Waveform::new(self.target_rate, out)
    }
}

/// Zero-phase linear-phase bandpass.
///
/// The passband is `[low, high]`; the stopband starts at `0.5 * low` below and
/// at `1.5 * high` (or Nyquist) above, with 60 dB attenuation.
pub fn bandpass(w: &Waveform, low: f64, high: f64) -> Result<Waveform> {
    let rate = w.sample_rate as f64;
    let nyquist = rate / 2.0;
    if !(low > 0.0 && low < high && high < nyquist) {
        return Err(Error::domain(format!(
            "band ({low}, {high}) must satisfy 0 < low < high < {nyquist} Hz"
        )));
    }
    let width = (0.5 * low).min(0.5 * high).min(nyquist - high);
    let len = kaiser_length(60.0, width / rate);
    let taps = bandpass_taps(
        (low - width / 2.0) / rate,
        (high + width / 2.0) / rate,
        len,
        60.0,
    );
    Ok(Waveform::new(
        w.sample_rate,
        filter_centered(&w.samples, &taps),
    ))
}

/// `decimate` followed by `bandpass` with the configured band.
pub fn front_end(w: &Waveform, cfg: &DemodConfig) -> Result<Waveform> {
    let d = decimate(w, cfg.target_rate)?;
    bandpass(&d, cfg.band.0, cfg.band.1)
}

struct Grid {
    window: usize,
    hop: usize,
    count: usize,
}

fn grid(w: &Waveform, cfg: &DemodConfig) -> Result<Grid> {
    let rate = w.sample_rate as f64;
    let window = ((cfg.window_length * rate - 1e-9).ceil() as usize).max(2);
    let hop = ((cfg.hop * rate).round() as usize).max(1);
    if window > w.len() {
        return Err(Error::domain(format!(
            "analysis window {:.3} s is longer than the signal ({:.3} s)",
            cfg.window_length,
            w.duration()
        )));
    }
    Ok(Grid {
        window,
        hop,
        count: (w.len() - window) / hop + 1,
    })
}

fn track_from(w: &Waveform, g: &Grid, values: Vec<f64>) -> Track {
    let rate = w.sample_rate as f64;
    Track {
        start: (g.window - 1) as f64 / 2.0 / rate,
        hop: g.hop as f64 / rate,
        window: g.window as f64 / rate,
        values,
    }
}

/// Mean-square amplitude of each analysis window.
pub fn band_energy_track(w: &Waveform, cfg: &DemodConfig) -> Result<Track> {
    let g = grid(w, cfg)?;
    let mut prefix = Vec::with_capacity(w.len() + 1);
    prefix.push(0.0f64);
    let mut acc = 0.0;
    for &s in &w.samples {
        acc += (s as f64) * (s as f64);
        prefix.push(acc);
    }
    let values = (0..g.count)
        .map(|i| {
            let a = i * g.hop;
            ((prefix[a + g.window] - prefix[a]) / g.window as f64).max(0.0)
        })
        .collect();
    Ok(track_from(w, &g, values))
}

/// Share of the window power the two tones must hold. White noise filling
/// `band` puts `1.5 / window / width` of its power into each Hann-windowed
/// tone; the floor stays at twice what the two tones pick up from noise alone
/// so that a quiet tone well above the noise is not discarded.
fn tone_share_floor(window_seconds: f64, band: (f64, f64)) -> f64 {
    let noise_share = 2.0 * 1.5 / window_seconds / (band.1 - band.0);
    TONE_SHARE_FLOOR.min(2.0 * noise_share)
}

/// Tone frequency in each analysis window, restricted to the configured band.
///
/// With tone hints the estimate is `f0 + (f1 - f0) * E1 / (E0 + E1)` from the
/// Hann-windowed powers at the two tones; the window is flagged (`NaN`) when
/// those powers hold under a fifth of the window's power, or under twice what
/// in-band noise alone would give them if that is less. Without hints it is
/// the interpolated FFT peak in the band, flagged when the peak is under ten
/// times the band's median bin.
pub fn dominant_frequency_track(w: &Waveform, cfg: &DemodConfig) -> Result<Track> {
    let g = grid(w, cfg)?;
    let rate = w.sample_rate as f64;
    let win = hann(g.window);
    let frames = (0..g.count).map(|i| &w.samples[i * g.hop..i * g.hop + g.window]);
    let values = match cfg.hints() {
        Some((f0, f1)) => {
            let floor = tone_share_floor(g.window as f64 / rate, cfg.band);
            frames
                .map(|x| {
                    let ms = x.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / x.len() as f64;
                    let e0 = tone_power(x, &win, rate, f0);
                    let e1 = tone_power(x, &win, rate, f1);
                    if ms == 0.0 || e0 + e1 <= floor * ms {
                        f64::NAN
                    } else {
                        f0 + (f1 - f0) * e1 / (e0 + e1)
                    }
                })
                .collect()
        }
        None => {
            let n_fft = (4 * g.window).next_power_of_two();
            let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
            let lo = ((cfg.band.0 * n_fft as f64 / rate).ceil() as usize).max(1);
            let hi = ((cfg.band.1 * n_fft as f64 / rate).floor() as usize).min(n_fft / 2 - 1);
            let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
            let mut power = vec![0.0; hi + 2];
            let mut sorted = Vec::with_capacity(hi + 1 - lo);
            frames
                .map(|x| {
                    buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
                    for (c, (&v, &h)) in buf.iter_mut().zip(x.iter().zip(&win)) {
                        c.re = (v * h) as f64;
                    }
                    fft.process(&mut buf);
                    for (k, p) in power.iter_mut().enumerate().skip(lo - 1) {
                        *p = buf[k].norm_sqr();
                    }
                    let peak = (lo..=hi)
                        .max_by(|&a, &b| power[a].total_cmp(&power[b]))
                        .expect("band holds at least one bin");
                    sorted.clear();
                    sorted.extend_from_slice(&power[lo..=hi]);
                    sorted.sort_by(f64::total_cmp);
                    let median = sorted[sorted.len() / 2];
                    if power[peak] == 0.0 || power[peak] < PEAK_TO_MEDIAN_FLOOR * median {
                        return f64::NAN;
                    }
                    // Gaussian interpolation on log power
                    let (a, b, c) = (
                        power[peak - 1].max(1e-300).ln(),
                        power[peak].ln(),
                        power[peak + 1].max(1e-300).ln(),
                    );
                    let den = a - 2.0 * b + c;
                    let delta = if den < 0.0 { 0.5 * (a - c) / den } else { 0.0 };
                    (peak as f64 + delta.clamp(-0.5, 0.5)) * rate / n_fft as f64
                })
                .collect()
        }
    };
    Ok(track_from(w, &g, values))
}

/// The track in the domain decisions are made in.
fn working_values(track: &Track, scheme: Scheme) -> Vec<f64> {
    match scheme {
        Scheme::Ask => track
            .values
            .iter()
            .map(|&v| v.max(ENERGY_FLOOR).log10())
            .collect(),
        Scheme::Fsk => track.values.clone(),
    }
}

/// Where a preamble was found and what it taught the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PreambleMatch {
    /// Start of the first preamble slot, in seconds from the start of the recording.
    pub offset: f64,
    pub calibration: CalibrationEstimate,
    /// Normalized correlation with the `1010` template; negative when a `1`
    /// shows up as the lower level.
    pub correlation: f64,
}

/// Prefix sums over the present (non-`NaN`) values of a track.
struct Prefix {
    sum: Vec<f64>,
    sq: Vec<f64>,
    count: Vec<u32>,
}

impl Prefix {
    fn new(values: &[f64]) -> Self {
        let n = values.len() + 1;
        let (mut sum, mut sq, mut count) = (
            Vec::with_capacity(n),
            Vec::with_capacity(n),
            Vec::with_capacity(n),
        );
        let (mut s, mut q, mut c) = (0.0, 0.0, 0u32);
        sum.push(s);
        sq.push(q);
        count.push(c);
        for &v in values {
            if !v.is_nan() {
                s += v;
                q += v * v;
                c += 1;
            }
            sum.push(s);
            sq.push(q);
            count.push(c);
        }
        Prefix { sum, sq, count }
    }

    /// `(present count, mean, standard deviation)` over indices `lo..hi`.
    fn stats(&self, lo: usize, hi: usize) -> (usize, f64, f64) {
        let n = (self.count[hi] - self.count[lo]) as usize;
        if n == 0 {
            return (0, f64::NAN, f64::NAN);
        }
        let mean = (self.sum[hi] - self.sum[lo]) / n as f64;
        let var = (self.sq[hi] - self.sq[lo]) / n as f64 - mean * mean;
        (n, mean, var.max(0.0).sqrt())
    }
}

/// Robust spread of single values, from differences `lag` samples apart so
/// that neighbours share no input; level changes between them are rare
/// enough for the median to ignore.
fn noise_spread(values: &[f64], lag: usize) -> f64 {
    let mut d: Vec<f64> = values
        .iter()
        .zip(values.iter().skip(lag))
        .map(|(a, b)| (a - b).abs())
        .filter(|x| !x.is_nan())
        .collect();
    if d.is_empty() {
        return 0.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    1.4826 * *m / SQRT_2
}

/// Symbol timing laid over a track.
struct Layout {
    start: f64,
    hop: f64,
    len: usize,
    period: f64,
    epoch: f64,
    half: f64,
    /// Track samples in a fully covered decision window.
    nominal: usize,
    /// Factor turning the spread of window values into the spread of their mean.
    mean_spread: f64,
    /// Sign the correlation must have, when the configuration fixes it.
    polarity: Option<bool>,
    /// Spread of one track value from noise alone.
    noise: f64,
    /// Factor turning that spread into the spread of a half-span mean.
    half_spread: f64,
    min_contrast: f64,
}

impl Layout {
    fn new(track: &Track, values: &[f64], cfg: &DemodConfig) -> Self {
        let period = cfg.symbol_period();
        let half = DECISION_HALF_WIDTH * period;
        let min_contrast = match (cfg.scheme, cfg.hints()) {
            (Scheme::Ask, _) => ASK_MIN_CONTRAST,
            (Scheme::Fsk, Some((f0, f1))) => 0.25 * (f1 - f0).abs(),
            (Scheme::Fsk, None) => 1.0 / track.window,
        };
        Layout {
            start: track.start,
            hop: track.hop,
            len: track.len(),
            period,
            epoch: cfg.decision_epoch(),
            half,
            nominal: (2.0 * half / track.hop).floor() as usize + 1,
            mean_spread: (track.window / (2.0 * half)).min(1.0).sqrt(),
            polarity: cfg.hints().map(|(f0, f1)| f1 > f0),
            noise: noise_spread(values, (track.window / track.hop).round().max(1.0) as usize),
            half_spread: (track.window / half).min(1.0).sqrt(),
            min_contrast,
        }
    }

    /// Track indices `lo..hi` whose window centers fall in `center ± half`.
    fn span(&self, center: f64) -> (usize, usize) {
        let a = ((center - self.half - self.start) / self.hop - 1e-9).ceil();
        let b = ((center + self.half - self.start) / self.hop + 1e-9).floor() + 1.0;
        let lo = a.clamp(0.0, self.len as f64) as usize;
        let hi = b.clamp(0.0, self.len as f64) as usize;
        (lo, hi.max(lo))
    }

    /// Slot start for which symbol 0's decision instant lands on track sample `j`.
    fn tau(&self, j: i64) -> f64 {
        self.start + j as f64 * self.hop - self.epoch
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    tau: f64,
    ncc: f64,
    contrast: f64,
    /// Mean working level of the `0` and `1` preamble symbols.
    levels: (f64, f64),
}

const TEMPLATE: [f64; 4] = [1.0, -1.0, 1.0, -1.0];

fn evaluate(prefix: &Prefix, lay: &Layout, tau: f64, threshold: f64) -> Option<Candidate> {
    debug_assert!(PREAMBLE.iter().zip(TEMPLATE).all(|(&b, t)| b == (t > 0.0)));
    let need = (lay.nominal / 2).max(1);
    let mut v = [0.0; 4];
    let mut spread = 0.0f64;
    let mut steps = [0.0; 4];
    for (k, slot) in v.iter_mut().enumerate() {
        let (lo, hi) = lay.span(tau + k as f64 * lay.period + lay.epoch);
        // a span cut off by the start of the recording would mix in whatever
        // preceded the transmission
        if (hi - lo) * 10 < lay.nominal * 9 {
            return None;
        }
        let (n, mean, sd) = prefix.stats(lo, hi);
        if n < need {
            return None;
        }
        *slot = mean;
        spread = spread.max(sd);
        let mid = (lo + hi) / 2;
        let (na, ma, _) = prefix.stats(lo, mid);
        let (nb, mb, _) = prefix.stats(mid, hi);
        if na == 0 || nb == 0 {
            return None;
        }
        steps[k] = (ma - mb).abs();
    }
    let mean = v.iter().sum::<f64>() / 4.0;
    let energy: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
    if !(energy > 0.0) {
        return None;
    }
    let ncc = TEMPLATE
        .iter()
        .zip(&v)
        .map(|(t, x)| t * (x - mean))
        .sum::<f64>()
        / (2.0 * energy.sqrt());
    let contrast = ((v[0] + v[2]) - (v[1] + v[3])) / 2.0;
    let consistent = (v[0] - v[2]).abs().max((v[1] - v[3]).abs())
        <= CONSISTENCY * contrast.abs() + 3.0 * SQRT_2 * lay.noise * lay.mean_spread;
    // a span straddling the start of the transmission shows a step between
    // its halves that a settled symbol does not
    let allowance = STEP_LIMIT * contrast.abs() + 3.0 * SQRT_2 * lay.noise * lay.half_spread;
    let settled = steps.iter().all(|&step| step <= allowance);
    let valid = ncc.abs() >= threshold
        && contrast.abs() >= lay.min_contrast
        && contrast.abs() >= 3.0 * spread * lay.mean_spread
        && consistent
        && settled
        && lay.polarity.is_none_or(|p| (ncc > 0.0) == p);
    valid.then_some(Candidate {
        tau,
        ncc,
        contrast,
        levels: ((v[1] + v[3]) / 2.0, (v[0] + v[2]) / 2.0),
    })
}

/// Center of the run of near-maximal contrast around the strongest candidate
/// of the given polarity among `cands[lo..hi]`.
fn peak(cands: &[Option<Candidate>], lo: usize, hi: usize, positive: bool) -> Option<usize> {
    let score = |i: usize| match cands[i] {
        Some(c) if (c.ncc > 0.0) == positive => c.contrast.abs(),
        _ => -1.0,
    };
    let best = (lo..hi).max_by(|&a, &b| score(a).total_cmp(&score(b)).then(b.cmp(&a)))?;
    let top = score(best);
    if top < 0.0 {
        return None;
    }
    let mut l = best;
    while l > lo && score(l - 1) >= 0.95 * top {
        l -= 1;
    }
    let mut r = best;
    while r + 1 < hi && score(r + 1) >= 0.95 * top {
        r += 1;
    }
    Some((l + r) / 2)
}

fn to_match(c: &Candidate, scheme: Scheme) -> PreambleMatch {
    PreambleMatch {
        offset: c.tau,
        calibration: CalibrationEstimate::from_working(scheme, c.levels.0, c.levels.1),
        correlation: c.ncc,
    }
}

fn search(values: &[f64], lay: &Layout, prefix: &Prefix, cfg: &DemodConfig) -> Option<Candidate> {
    if lay.len == 0 {
        return None;
    }
    let j0 = (lay.half / lay.hop).floor() as i64 - 1;
    let last = lay.start + (lay.len - 1) as f64 * lay.hop;
    let j1 = ((last - lay.half - 3.0 * lay.period - lay.start) / lay.hop).ceil() as i64 + 1;
    if j1 < j0 || values.is_empty() {
        return None;
    }
    let cands: Vec<Option<Candidate>> = (j0..=j1)
        .map(|j| evaluate(prefix, lay, lay.tau(j), cfg.sync_threshold))
        .collect();
    let best = cands
        .iter()
        .flatten()
        .map(|c| c.contrast.abs())
        .fold(0.0, f64::max);
    // the earliest strong lock is the transmission start; later ones are
    // alternations inside the payload
    let first = cands
        .iter()
        .position(|c| c.is_some_and(|c| c.contrast.abs() >= 0.5 * best))?;
    let positive = cands[first].expect("position found a candidate").ncc > 0.0;
    let reach = ((0.5 * lay.period / lay.hop).floor() as usize + 1).min(cands.len() - first);
    let idx = peak(&cands, first, first + reach, positive)?;
    cands[idx]
}

/// Locates the first `1010` preamble in `track` and calibrates the two levels.
///
/// Every start time on the track grid is scored by correlating the mean
/// feature over each of four consecutive decision spans with the `+ - + -`
/// template. A start qualifies when the correlation magnitude reaches the sync
/// threshold, the two `1` spans agree with each other (and the two `0` spans),
/// and the contrast clears the window-to-window spread. The earliest
/// qualifying start with at least half the strongest contrast wins, refined to
/// the middle of its contrast peak. Either polarity is accepted, and the
/// preamble itself says which level means `1`, except with FSK tone hints,
/// where the `1` must be on the side of `expected_f1`.
///
/// Returns `Ok(None)` when nothing qualifies.
pub fn detect_preamble(track: &Track, cfg: &DemodConfig) -> Result<Option<PreambleMatch>> {
    cfg.validate()?;
    let values = working_values(track, cfg.scheme);
    let lay = Layout::new(track, &values, cfg);
    let prefix = Prefix::new(&values);
    Ok(search(&values, &lay, &prefix, cfg).map(|c| to_match(&c, cfg.scheme)))
}

/// Timing and levels used for one 16-symbol frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameSync {
    /// Start of the frame's first slot, in seconds.
    pub offset: f64,
    pub calibration: CalibrationEstimate,
    /// Whether this frame's own preamble supplied the timing and levels; if
    /// not, the previous frame's levels and the nominal timing were reused.
    pub resynced: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demodulation {
    pub bits: BitStream,
    pub decisions: Vec<SymbolDecision>,
    pub sync: Option<PreambleMatch>,
    pub frames: Vec<FrameSync>,
    /// Why nothing was decoded, when that happens.
    pub diagnostic: Option<String>,
}

/// Full receiver chain on a recording.
///
/// Symbols are decided by majority over the track samples in each decision
/// span (the central 60% of the symbol, measured between threshold
/// crossings), each sample going to the nearer calibrated level with ties to
/// `1`. Every 16 symbols the next frame's preamble is searched for within a
/// quarter period of its nominal position and, if found, retimes and
/// recalibrates that frame. Decoding stops at the first decision span with
/// under a quarter of its windows usable: the end of the track, or a stretch
/// with no tone.
///
/// A recording without a detectable preamble yields an empty bit stream and a
/// diagnostic, not an error.
pub fn demodulate(w: &Waveform, cfg: &DemodConfig) -> Result<Demodulation> {
    cfg.validate()?;
    let filtered = front_end(w, cfg)?;
    let track = match cfg.scheme {
        Scheme::Ask => band_energy_track(&filtered, cfg),
        Scheme::Fsk => dominant_frequency_track(&filtered, cfg),
    };
    let track = match track {
        Ok(t) => t,
        Err(Error::Domain(msg)) => return Ok(not_found(msg)),
        Err(e) => return Err(e),
    };
    Ok(slice(&track, cfg))
}

fn not_found(msg: String) -> Demodulation {
    Demodulation {
        bits: BitStream::new(),
        decisions: Vec::new(),
        sync: None,
        frames: Vec::new(),
        diagnostic: Some(msg),
    }
}

/// Sync, recalibration and symbol decisions on a feature track.
pub fn slice(track: &Track, cfg: &DemodConfig) -> Demodulation {
    let values = working_values(track, cfg.scheme);
    let lay = Layout::new(track, &values, cfg);
    let prefix = Prefix::new(&values);
    let Some(first) = search(&values, &lay, &prefix, cfg) else {
        return not_found(format!(
            "preamble not found: no alignment reached correlation {:.2} with a consistent {} contrast \
             ({} of {} windows carried no tone)",
            cfg.sync_threshold,
            match cfg.scheme {
                Scheme::Ask => "energy",
                Scheme::Fsk => "frequency",
            },
            track.flagged(),
            track.len()
        ));
    };
    let positive = first.ncc > 0.0;
    let mut levels = first.levels;
    let mut bits = BitStream::new();
    let mut decisions = Vec::new();
    let mut frames = Vec::new();
    let min_cover = (lay.nominal / 4).max(1);
    let radius = (RESYNC_RADIUS * lay.period / lay.hop).floor() as i64;
    let mut frame_start = first.tau;
    for i in 0usize.. {
        let pos = i % FRAME_BITS;
        if pos == 0 {
            let frame = i / FRAME_BITS;
            let nominal = first.tau + (frame * FRAME_BITS) as f64 * lay.period;
            let found = if frame == 0 {
                Some(first)
            } else {
                let centre = ((nominal + lay.epoch - lay.start) / lay.hop).round() as i64;
                let cands: Vec<Option<Candidate>> = (centre - radius..=centre + radius)
                    .map(|j| evaluate(&prefix, &lay, lay.tau(j), cfg.sync_threshold))
                    .collect();
                peak(&cands, 0, cands.len(), positive).and_then(|k| cands[k])
            };
            frame_start = found.map_or(nominal, |c| c.tau);
            if let Some(c) = found {
                levels = c.levels;
            }
            frames.push(FrameSync {
                offset: frame_start,
                calibration: CalibrationEstimate::from_working(cfg.scheme, levels.0, levels.1),
                resynced: found.is_some(),
            });
        }
        let epoch = frame_start + pos as f64 * lay.period + lay.epoch;
        let (lo, hi) = lay.span(epoch);
        let (mut n0, mut n1) = (0usize, 0usize);
        for &v in values[lo..hi].iter().filter(|v| !v.is_nan()) {
            if (v - levels.1).abs() <= (v - levels.0).abs() {
                n1 += 1;
            } else {
                n0 += 1;
            }
        }
        let n = n0 + n1;
        if n < min_cover {
            if pos == 0 {
                frames.pop();
            }
            break;
        }
        let bit = n1 >= n0;
        let confidence = n1.abs_diff(n0) as f64 / n as f64;
        bits.push(bit);
        decisions.push(SymbolDecision {
            bit,
            confidence,
            time_offset: epoch,
        });
    }
    Demodulation {
        bits,
        decisions,
        sync: Some(to_match(&first, cfg.scheme)),
        frames,
        diagnostic: None,
    }
}

/// Frequency of the strongest bin of a Hann-windowed FFT of `x`, refined by
/// Gaussian interpolation. Used for tone checks on whole recordings.
pub fn peak_frequency(x: &[f32], sample_rate: f64) -> f64 {
    let n_fft = (x.len() * 4).next_power_of_two();
    let win = hann(x.len());
    let mut buf: Vec<Complex<f64>> = x
        .iter()
        .zip(&win)
        .map(|(&v, &h)| Complex::new((v * h) as f64, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(n_fft)
        .collect();
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);
    let p: Vec<f64> = buf[..n_fft / 2].iter().map(|c| c.norm_sqr()).collect();
    let k = (1..p.len() - 1)
        .max_by(|&a, &b| p[a].total_cmp(&p[b]))
        .unwrap_or(0);
    if k == 0 {
        return 0.0;
    }
    let (a, b, c) = (
        p[k - 1].max(1e-300).ln(),
        p[k].max(1e-300).ln(),
        p[k + 1].max(1e-300).ln(),
    );
    let den = a - 2.0 * b + c;
    let delta = if den < 0.0 { 0.5 * (a - c) / den } else { 0.0 };
    (k as f64 + delta.clamp(-0.5, 0.5)) * sample_rate / n_fft as f64
}

/// Root-mean-square amplitude of `x`.
pub fn rms(x: &[f32]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}
