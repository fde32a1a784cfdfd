#![allow(dead_code)]

use fanmodem::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `(name, fan, modulation)` for the four published operating points.
pub fn operating_points(scheme: Scheme) -> Vec<(&'static str, FanSpec, ModulationConfig)> {
    [
        ("fig7", 1000.0, 1600.0, 10.0, 60.0, (100.0, 250.0)),
        ("fig8", 4000.0, 4250.0, 0.0, 62.5, (400.0, 600.0)),
        ("fig9", 2000.0, 2500.0, 0.0, 500.0 / 6.0, (200.0, 350.0)),
        ("fig10", 4100.0, 4500.0, 0.0, 400.0 / 6.0, (400.0, 600.0)),
    ]
    .into_iter()
    .map(|(name, r0, r1, t, slew, band)| {
        let fan = FanSpec {
            slew_rate: slew,
            ..FanSpec::default()
        };
        let m = ModulationConfig {
            scheme,
            r0,
            r1,
            symbol_duration: t,
            carrier_band: band,
        };
        (name, fan, m)
    })
    .collect()
}

pub fn point(name: &str, scheme: Scheme) -> (FanSpec, ModulationConfig) {
    let (_, fan, m) = operating_points(scheme)
        .into_iter()
        .find(|(n, _, _)| *n == name)
        .expect("known operating point");
    (fan, m)
}

pub fn noiseless(distance: f64) -> ChannelConfig {
    ChannelConfig {
        distance,
        broadband_level: 0.0,
        ambient_noise_amplitude: 0.0,
        ..ChannelConfig::default()
    }
}

pub fn random_payload(seed: u64, len: usize) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random()).collect()
}

pub struct Trial {
    pub payload: Vec<u8>,
    pub sent: BitStream,
    pub out: Demodulation,
}

impl Trial {
    pub fn bit_errors(&self) -> usize {
        let got = self.out.bits.bits();
        self.sent
            .bits()
            .iter()
            .enumerate()
            .filter(|&(i, b)| got.get(i) != Some(b))
            .count()
    }

    pub fn decoded(&self) -> Vec<u8> {
        decode_frames(&self.out.bits).payload(self.payload.len())
    }
}

pub fn run(payload: &[u8], fan: &FanSpec, m: &ModulationConfig, ch: &ChannelConfig) -> Trial {
    let sent = encode_frames(payload);
    let schedule = modulate(&sent, m, fan).unwrap();
    let audio = synthesize(&schedule, fan, ch).unwrap().waveform;
    let cfg = DemodConfig::for_modulation(fan, m).unwrap();
    let out = demodulate(&audio, &cfg).unwrap();
    Trial {
        payload: payload.to_vec(),
        sent,
        out,
    }
}
