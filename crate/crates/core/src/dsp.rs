//! Filter design and the small signal-processing kernels the receiver and the
//! channel simulator share.

use std::f64::consts::PI;

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= (half / k as f64).powi(2);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kaiser window shape parameter for a stopband attenuation of `atten_db`.
pub fn kaiser_beta(atten_db: f64) -> f64 {
    if atten_db > 50.0 {
        0.1102 * (atten_db - 8.7)
    } else if atten_db >= 21.0 {
        0.5842 * (atten_db - 21.0).powf(0.4) + 0.07886 * (atten_db - 21.0)
    } else {
        0.0
    }
}

/// Odd filter length meeting `atten_db` with a transition band of
/// `transition` cycles/sample (Kaiser's estimate).
pub fn kaiser_length(atten_db: f64, transition: f64) -> usize {
    let n = ((atten_db - 7.95) / (14.36 * transition)).ceil() as usize + 1;
    n.max(3) | 1
}

/// Kaiser window evaluated at offset `x` from the center of a window of half-width `half`.
#[inline]
fn kaiser_at(x: f64, half: f64, beta: f64, i0_beta: f64) -> f64 {
    let r = x / half;
    if r.abs() > 1.0 {
        0.0
    } else {
        bessel_i0(beta * (1.0 - r * r).sqrt()) / i0_beta
    }
}

#[inline]
fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Linear-phase bandpass taps for cutoffs `lo`/`hi` in cycles/sample.
pub fn bandpass_taps(lo: f64, hi: f64, len: usize, atten_db: f64) -> Vec<f64> {
    let beta = kaiser_beta(atten_db);
    let i0b = bessel_i0(beta);
    let half = (len - 1) as f64 / 2.0;
    (0..len)
        .map(|n| {
            let x = n as f64 - half;
            let ideal = 2.0 * hi * sinc(2.0 * hi * x) - 2.0 * lo * sinc(2.0 * lo * x);
            ideal * kaiser_at(x, half, beta, i0b)
        })
        .collect()
}

/// Zero-phase FIR: `taps` must have odd length; output is aligned with the input
/// and the signal is zero outside its ends.
pub fn filter_centered(x: &[f32], taps: &[f64]) -> Vec<f32> {
    let k = taps.len() / 2;
    let taps32: Vec<f32> = taps.iter().map(|&t| t as f32).collect();
    let mut padded = vec![0f32; x.len() + 2 * k];
    padded[k..k + x.len()].copy_from_slice(x);
    (0..x.len())
        .map(|i| dot(&padded[i..i + taps32.len()], &taps32))
        .collect()
}

#[inline]
fn dot(a: &[f32], b: &[f32]) -> f32 {
    // eight independent lanes so the loop vectorizes without reassociation
    let mut acc = [0f32; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Rational polyphase resampler with a Kaiser-windowed sinc kernel.
///
/// Output sample `m` sits exactly at input position `m * M / L`, so the
/// resampled signal keeps the input's time origin.
pub struct Resampler {
    up: usize,
    down: usize,
    half: usize,
    /// `up` rows of `2 * half + 2` taps; row `l` is the kernel for fractional phase `l / up`.
    table: Vec<f32>,
}

impl Resampler {
    /// `cutoff` and `transition` are in Hz relative to `rate_in`.
    pub fn new(rate_in: u32, rate_out: u32, cutoff: f64, transition: f64, atten_db: f64) -> Self {
        let g = gcd(rate_in as u64, rate_out as u64);
        let up = (rate_out as u64 / g) as usize;
        let down = (rate_in as u64 / g) as usize;
        let fc = cutoff / rate_in as f64;
        let len = kaiser_length(atten_db, transition / rate_in as f64);
        let half = (len - 1) / 2;
        let beta = kaiser_beta(atten_db);
        let i0b = bessel_i0(beta);
        let width = 2 * half + 2;
        let mut table = Vec::with_capacity(up * width);
        for l in 0..up {
            let phi = l as f64 / up as f64;
            let row: Vec<f64> = (0..width)
                .map(|jj| {
                    let tau = (jj as f64 - half as f64) - phi;
                    2.0 * fc * sinc(2.0 * fc * tau) * kaiser_at(tau, half as f64 + 1.0, beta, i0b)
                })
                .collect();
            let sum: f64 = row.iter().sum();
            table.extend(row.iter().map(|&v| (v / sum) as f32));
        }
        Resampler {
            up,
            down,
            half,
            table,
        }
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        if input_len == 0 {
            0
        } else {
            (input_len - 1) * self.up / self.down + 1
        }
    }

    pub fn process(&self, x: &[f32]) -> Vec<f32> {
        let mut out = Vec::new();
        self.process_into(x, &mut out);
        out
    }

    /// [`Resampler::process`] into a reusable buffer.
    pub fn process_into(&self, x: &[f32], out: &mut Vec<f32>) {
        let width = 2 * self.half + 2;
        let n_out = self.output_len(x.len());
        out.clear();
        out.reserve(n_out);
        for m in 0..n_out {
            let pos = m * self.down;
            let n = pos / self.up;
            let l = pos % self.up;
            let row = &self.table[l * width..(l + 1) * width];
            // taps cover input indices n - half ..= n + half + 1
            let start = n as isize - self.half as isize;
            let end = start + width as isize;
            let y = if start >= 0 && end as usize <= x.len() {
                dot(&x[start as usize..end as usize], row)
            } else {
                let mut s = 0f32;
                for (j, &c) in row.iter().enumerate() {
                    let i = start + j as isize;
                    if i >= 0 && (i as usize) < x.len() {
                        s += c * x[i as usize];
                    }
                }
                s
            };
            out.push(y);
        }
    }
}

/// Power of the `freq` component of `x` under a Hann window, scaled so that a
/// unit-amplitude sinusoid at `freq` reports 0.5 (its mean square).
pub fn tone_power(x: &[f32], window: &[f32], sample_rate: f64, freq: f64) -> f64 {
    let w = 2.0 * PI * freq / sample_rate;
    let coeff = 2.0 * w.cos();
    let (mut s1, mut s2) = (0f64, 0f64);
    let mut wsum = 0f64;
    for (&v, &h) in x.iter().zip(window) {
        let s0 = (v * h) as f64 + coeff * s1 - s2;
        s2 = s1;
        s1 = s0;
        wsum += h as f64;
    }
    let re = s1 - s2 * w.cos();
    let im = s2 * w.sin();
    let amp = 2.0 * (re * re + im * im).sqrt() / wsum;
    amp * amp / 2.0
}

pub fn hann(len: usize) -> Vec<f32> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| (0.5 - 0.5 * (2.0 * PI * n as f64 / (len - 1) as f64).cos()) as f32)
        .collect()
}

/// Direct-form-I biquad section.
#[derive(Debug, Clone, Copy)]
pub struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
}

impl Biquad {
    fn from_coeffs(b: [f64; 3], a0: f64, a: [f64; 2]) -> Self {
        Biquad {
            b: [b[0] / a0, b[1] / a0, b[2] / a0],
            a: [a[0] / a0, a[1] / a0],
            x1: 0.0,
            x2: 0.0,
            y1: 0.0,
            y2: 0.0,
        }
    }

    /// Second-order Butterworth lowpass.
    pub fn lowpass(cutoff: f64, sample_rate: f64) -> Self {
        let w0 = 2.0 * PI * cutoff / sample_rate;
        let alpha = w0.sin() / (2.0 * std::f64::consts::FRAC_1_SQRT_2);
        let c = w0.cos();
        Self::from_coeffs(
            [(1.0 - c) / 2.0, 1.0 - c, (1.0 - c) / 2.0],
            1.0 + alpha,
            [-2.0 * c, 1.0 - alpha],
        )
    }

    /// Second-order Butterworth highpass.
    pub fn highpass(cutoff: f64, sample_rate: f64) -> Self {
        let w0 = 2.0 * PI * cutoff / sample_rate;
        let alpha = w0.sin() / (2.0 * std::f64::consts::FRAC_1_SQRT_2);
        let c = w0.cos();
        Self::from_coeffs(
            [(1.0 + c) / 2.0, -(1.0 + c), (1.0 + c) / 2.0],
            1.0 + alpha,
            [-2.0 * c, 1.0 - alpha],
        )
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.b[1] * self.x1 + self.b[2] * self.x2
            - self.a[0] * self.y1
            - self.a[1] * self.y2;
        self.x2 = self.x1;
        self.x1 = x;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}
