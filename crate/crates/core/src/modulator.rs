//! Bits to fan-speed schedules.
//!
//! Both keying schemes drive the fan the same way: one fixed-length slot per
//! bit, at `r0` for `0` and `r1` for `1`. Whether the receiver looks at loudness
//! (ASK) or tone frequency (FSK) is purely a receiver choice.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fan::{transition_time as rotor_transition_time, FanSpec};
use crate::framing::BitStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Ask,
    Fsk,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Ask => "ask",
            Scheme::Fsk => "fsk",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ask" => Ok(Scheme::Ask),
            "fsk" => Ok(Scheme::Fsk),
            other => Err(Error::config(format!("unknown scheme {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulationConfig {
    pub scheme: Scheme,
    /// Commanded speed for a `0`.
    pub r0: f64,
    /// Commanded speed for a `1`.
    pub r1: f64,
    /// Hold time T at the commanded speed, in seconds.
    pub symbol_duration: f64,
    /// Expected acoustic band `(f_a, f_b)` in Hz.
    pub carrier_band: (f64, f64),
}

impl ModulationConfig {
    pub fn validate(&self, fan: &FanSpec) -> Result<()> {
        if self.r0 == self.r1 {
            return Err(Error::config("r0 and r1 must differ"));
        }
        fan.check_rpm(self.r0)
            .and_then(|_| fan.check_rpm(self.r1))
            .map_err(|e| Error::config(e.to_string()))?;
        if !(self.symbol_duration >= 0.0 && self.symbol_duration.is_finite()) {
            return Err(Error::config(format!(
                "symbol duration must be >= 0, got {}",
                self.symbol_duration
            )));
        }
        let (fa, fb) = self.carrier_band;
        if !(fa < fb) {
            return Err(Error::config(format!(
                "carrier band must satisfy f_a < f_b, got ({fa}, {fb})"
            )));
        }
        if self.scheme == Scheme::Fsk {
            for rpm in [self.r0, self.r1] {
                let tone = fan.bpf(rpm);
                if !(fa <= tone && tone <= fb) {
                    return Err(Error::config(format!(
                        "FSK tone {tone:.2} Hz for {rpm} RPM falls outside carrier band ({fa}, {fb})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn rpm_for(&self, bit: bool) -> f64 {
        if bit {
            self.r1
        } else {
            self.r0
        }
    }

    /// TR for this speed pair on `fan`.
    pub fn transition_time(&self, fan: &FanSpec) -> Result<f64> {
        rotor_transition_time(fan, self.r0, self.r1)
    }

    /// Seconds per bit, `TR + T`.
    pub fn symbol_period(&self, fan: &FanSpec) -> Result<f64> {
        Ok(self.transition_time(fan)? + self.symbol_duration)
    }
}

/// Swaps the speeds assigned to `0` and `1`.
pub fn invert_polarity(cfg: &ModulationConfig) -> ModulationConfig {
    ModulationConfig {
        r0: cfg.r1,
        r1: cfg.r0,
        ..*cfg
    }
}

/// One bit slot: the fan is commanded to `rpm`, given `ramp_seconds` to get
/// there, then held for `hold_seconds`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub rpm: f64,
    pub hold_seconds: f64,
    #[serde(default)]
    pub ramp_seconds: f64,
}

impl Segment {
    pub fn duration(&self) -> f64 {
        self.ramp_seconds + self.hold_seconds
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RpmSchedule {
    pub segments: Vec<Segment>,
}

impl RpmSchedule {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(Segment::duration).sum()
    }

    pub fn total_hold(&self) -> f64 {
        self.segments.iter().map(|s| s.hold_seconds).sum()
    }

    pub fn validate(&self, fan: &FanSpec) -> Result<()> {
        for (i, s) in self.segments.iter().enumerate() {
            fan.check_rpm(s.rpm)
                .map_err(|e| Error::domain(format!("segment {i}: {e}")))?;
            if !(s.hold_seconds >= 0.0 && s.ramp_seconds >= 0.0) || !s.duration().is_finite() {
                return Err(Error::domain(format!(
                    "segment {i}: durations must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }
}

/// One segment per bit: `(r_bit, TR, T)`.
///
/// Every slot reserves the full transition time TR even when the speed does not
/// change, so the symbol clock stays fixed at `TR + T` and equal neighbours are
/// never merged.
pub fn modulate(bits: &BitStream, cfg: &ModulationConfig, fan: &FanSpec) -> Result<RpmSchedule> {
    if bits.is_empty() {
        return Err(Error::domain("cannot modulate an empty bit stream"));
    }
    fan.check_rpm(cfg.r0)?;
    fan.check_rpm(cfg.r1)?;
    if !(cfg.symbol_duration >= 0.0) {
        return Err(Error::domain("symbol duration must be >= 0"));
    }
    let tr = cfg.transition_time(fan)?;
    Ok(RpmSchedule {
        segments: bits
            .iter()
            .map(|b| Segment {
                rpm: cfg.rpm_for(b),
                hold_seconds: cfg.symbol_duration,
                ramp_seconds: tr,
            })
            .collect(),
    })
}

/// `n * (TR + T)` seconds.
pub fn transmission_time(n_bits: usize, tr: f64, t: f64) -> f64 {
    n_bits as f64 * (tr + t)
}

/// Effective bits per minute for a given timing, `60 / (TR + T)`.
pub fn bits_per_minute(tr: f64, t: f64) -> f64 {
    60.0 / (tr + t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fan::amplitude_at;

    fn slow_fsk() -> ModulationConfig {
        ModulationConfig {
            scheme: Scheme::Fsk,
            r0: 1000.0,
            r1: 1600.0,
            symbol_duration: 5.0,
            carrier_band: (100.0, 250.0),
        }
    }

    #[test]
    fn alternating_bits_alternate_speeds() {
        let fan = FanSpec::default();
        let sched = modulate(&"101010".parse().unwrap(), &slow_fsk(), &fan).unwrap();
        let got: Vec<(f64, f64)> = sched
            .segments
            .iter()
            .map(|s| (s.rpm, s.hold_seconds))
            .collect();
        assert_eq!(
            got,
            vec![
                (1600.0, 5.0),
                (1000.0, 5.0),
                (1600.0, 5.0),
                (1000.0, 5.0),
                (1600.0, 5.0),
                (1000.0, 5.0)
            ]
        );
        assert_eq!(sched.total_hold(), 30.0);
    }

    #[test]
    fn single_zero() {
        let fan = FanSpec::default();
        let sched = modulate(&"0".parse().unwrap(), &slow_fsk(), &fan).unwrap();
        assert_eq!(sched.len(), 1);
        assert_eq!(sched.segments[0].rpm, 1000.0);
        assert_eq!(sched.segments[0].hold_seconds, 5.0);
    }

    #[test]
    fn zero_hold_keeps_transition_slot() {
        let fan = FanSpec::default();
        let cfg = ModulationConfig {
            scheme: Scheme::Fsk,
            r0: 4000.0,
            r1: 4250.0,
            symbol_duration: 0.0,
            carrier_band: (400.0, 600.0),
        };
        let sched = modulate(&"01010101".parse().unwrap(), &cfg, &fan).unwrap();
        assert_eq!(sched.len(), 8);
        assert!(sched.segments.iter().all(|s| s.hold_seconds == 0.0));
        assert!(sched.segments.iter().all(|s| s.ramp_seconds == 4.0));
        assert_eq!(sched.duration(), transmission_time(8, 4.0, 0.0));
    }

    #[test]
    fn empty_bits_rejected() {
        assert!(modulate(&BitStream::new(), &slow_fsk(), &FanSpec::default()).is_err());
    }

    #[test]
    fn out_of_range_rpm_rejected() {
        let cfg = ModulationConfig {
            r1: 5000.0,
            ..slow_fsk()
        };
        assert!(modulate(&"1".parse().unwrap(), &cfg, &FanSpec::default()).is_err());
    }

    #[test]
    fn transmission_times() {
        assert_eq!(transmission_time(8, 4.0, 0.0), 32.0);
        assert_eq!(transmission_time(0, 4.0, 7.0), 0.0);
        assert_eq!(transmission_time(8, 6.0, 0.0), 48.0);
        assert_eq!(bits_per_minute(4.0, 0.0), 15.0);
        assert_eq!(bits_per_minute(6.0, 0.0), 10.0);
    }

    #[test]
    fn polarity_swap() {
        let cfg = ModulationConfig {
            scheme: Scheme::Ask,
            r0: 3000.0,
            r1: 3500.0,
            symbol_duration: 5.0,
            carrier_band: (300.0, 450.0),
        };
        let inv = invert_polarity(&cfg);
        assert_eq!((inv.r0, inv.r1), (3500.0, 3000.0));
        assert_eq!(invert_polarity(&inv), cfg);
        let fan = FanSpec::default();
        let zero = amplitude_at(&fan, inv.rpm_for(false), 1.0).unwrap();
        let one = amplitude_at(&fan, inv.rpm_for(true), 1.0).unwrap();
        assert!(zero > one);
    }

    #[test]
    fn fsk_tones_must_sit_in_band() {
        let fan = FanSpec::default();
        assert!(slow_fsk().validate(&fan).is_ok());
        let bad = ModulationConfig {
            carrier_band: (100.0, 150.0),
            ..slow_fsk()
        };
        assert!(bad.validate(&fan).is_err());
        // ASK does not need the tones inside the band
        let ask = ModulationConfig {
            scheme: Scheme::Ask,
            ..bad
        };
        assert!(ask.validate(&fan).is_ok());
        let same = ModulationConfig {
            r1: 1000.0,
            ..slow_fsk()
        };
        assert!(same.validate(&fan).is_err());
    }

    proptest::proptest! {
        #[test]
        fn schedule_shape(bits in proptest::collection::vec(proptest::bool::ANY, 1..64), t in 0.0f64..20.0) {
            let fan = FanSpec::default();
            let cfg = ModulationConfig { symbol_duration: t, ..slow_fsk() };
            let stream = BitStream::from(bits.clone());
            let sched = modulate(&stream, &cfg, &fan).unwrap();
            proptest::prop_assert_eq!(sched.len(), bits.len());
            proptest::prop_assert!((sched.total_hold() - bits.len() as f64 * t).abs() < 1e-9);
            // injective: each bit is recoverable from its segment
            let back: Vec<bool> = sched.segments.iter().map(|s| s.rpm == cfg.r1).collect();
            proptest::prop_assert_eq!(back, bits);
        }
    }
}
