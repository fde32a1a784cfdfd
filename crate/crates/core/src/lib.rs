//! Fan-noise acoustic modem.
//!
//! A fan's blade-pass tone (`n * rpm / 60` Hz) carries bits: the transmitter
//! steps the fan between two speeds, the receiver tracks either the loudness
//! (ASK) or the pitch (FSK) of that tone in a microphone recording.
//!
//! The pipeline is [`framing::encode_frames`] → [`modulator::modulate`] →
//! [`channel::synthesize`] → [`demod::demodulate`] → [`framing::decode_frames`].

// `!(x > 0.0)` is used deliberately so that NaN fails the check
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod demod;
pub mod dsp;
pub mod error;
pub mod fan;
pub mod framing;
pub mod modulator;

pub use channel::{
    ambient_for_snr, in_band_snr_db, read_wav, synthesize, synthesize_into, write_wav,
    ChannelConfig, Synthesis, Waveform,
};
pub use demod::{
    demodulate, detect_preamble, CalibrationEstimate, DemodConfig, Demodulation, PreambleMatch,
    SymbolDecision, Track,
};
pub use error::{Error, Result};
pub use fan::{amplitude_at, blade_pass_frequency, transition_time, FanSpec, FanState};
pub use framing::{decode_frames, encode_frames, BitStream, FrameDecode, FrameReport};
pub use modulator::{
    bits_per_minute, invert_polarity, modulate, transmission_time, ModulationConfig, RpmSchedule,
    Scheme, Segment,
};
