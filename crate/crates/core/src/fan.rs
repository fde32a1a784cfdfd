//! Acoustic model of a rotating fan.
//!
//! The fan's fundamental tone is its blade-pass frequency `n * R / 60`. Radiated
//! noise power grows with the fifth power of the rotation speed, so the sound
//! pressure amplitude grows as `R^2.5`, and it falls off as `1/d` with distance
//! (clamped at one meter). Speed changes are modeled as a linear ramp at a fixed
//! slew rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical description of a fan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FanSpec {
    pub blade_count: u32,
    pub rpm_min: f64,
    pub rpm_max: f64,
    /// RPM per second.
    pub slew_rate: f64,
    pub ref_rpm: f64,
    /// Linear sound-pressure amplitude at `ref_rpm`, one meter away.
    pub ref_amplitude: f64,
}

impl Default for FanSpec {
    /// Seven-blade chassis fan, 1000-4500 RPM, 62.5 RPM/s.
    fn default() -> Self {
        FanSpec {
            blade_count: 7,
            rpm_min: 1000.0,
            rpm_max: 4500.0,
            slew_rate: 62.5,
            ref_rpm: 1000.0,
            ref_amplitude: 1.0,
        }
    }
}

impl FanSpec {
    pub fn new(
        blade_count: u32,
        rpm_min: f64,
        rpm_max: f64,
        slew_rate: f64,
        ref_rpm: f64,
        ref_amplitude: f64,
    ) -> Result<Self> {
        let spec = FanSpec {
            blade_count,
            rpm_min,
            rpm_max,
            slew_rate,
            ref_rpm,
            ref_amplitude,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.blade_count < 2 {
            return Err(Error::config(format!(
                "fan needs at least 2 blades, got {}",
                self.blade_count
            )));
        }
        if !(self.rpm_min > 0.0 && self.rpm_min < self.rpm_max && self.rpm_max.is_finite()) {
            return Err(Error::config(format!(
                "fan RPM range must satisfy 0 < min < max, got [{}, {}]",
                self.rpm_min, self.rpm_max
            )));
        }
        if !(self.slew_rate > 0.0 && self.slew_rate.is_finite()) {
            return Err(Error::config(format!(
                "slew rate must be positive, got {}",
                self.slew_rate
            )));
        }
        if !(self.ref_amplitude > 0.0 && self.ref_amplitude.is_finite()) {
            return Err(Error::config(format!(
                "reference amplitude must be positive, got {}",
                self.ref_amplitude
            )));
        }
        if !(self.rpm_min <= self.ref_rpm && self.ref_rpm <= self.rpm_max) {
            return Err(Error::config(format!(
                "reference RPM {} outside fan range [{}, {}]",
                self.ref_rpm, self.rpm_min, self.rpm_max
            )));
        }
        Ok(())
    }

    /// Rejects commands outside `[rpm_min, rpm_max]`; out-of-range speeds are never clamped.
    pub fn check_rpm(&self, rpm: f64) -> Result<()> {
        if rpm.is_finite() && self.rpm_min <= rpm && rpm <= self.rpm_max {
            Ok(())
        } else {
            Err(Error::domain(format!(
                "{rpm} RPM outside fan range [{}, {}]",
                self.rpm_min, self.rpm_max
            )))
        }
    }

    /// Blade-pass frequency without range checks. Used on hot paths where the
    /// RPM has already been validated.
    #[inline]
    pub fn bpf(&self, rpm: f64) -> f64 {
        self.blade_count as f64 * rpm / 60.0
    }

    #[inline]
    pub(crate) fn amplitude_unchecked(&self, rpm: f64, distance: f64) -> f64 {
        let x = rpm / self.ref_rpm;
        self.ref_amplitude * x * x * x.sqrt() / distance.max(1.0)
    }
}

/// Blade-pass frequency `n * rpm / 60` in Hz. Zero RPM is allowed (a stopped fan).
pub fn blade_pass_frequency(spec: &FanSpec, rpm: f64) -> Result<f64> {
    if !(rpm >= 0.0 && rpm <= spec.rpm_max) {
        return Err(Error::domain(format!(
            "{rpm} RPM outside [0, {}]",
            spec.rpm_max
        )));
    }
    Ok(spec.bpf(rpm))
}

/// Sound-pressure amplitude `ref_amplitude * (rpm/ref_rpm)^2.5 / d` with `d` clamped to >= 1 m.
pub fn amplitude_at(spec: &FanSpec, rpm: f64, distance: f64) -> Result<f64> {
    spec.check_rpm(rpm)?;
    if distance.is_nan() || distance < 0.0 {
        return Err(Error::domain(format!(
            "distance must be >= 0, got {distance}"
        )));
    }
    Ok(spec.amplitude_unchecked(rpm, distance))
}

/// Rotor transition time `|r1 - r0| / slew_rate`. Symmetric in its arguments.
pub fn transition_time(spec: &FanSpec, r0: f64, r1: f64) -> Result<f64> {
    spec.check_rpm(r0)?;
    spec.check_rpm(r1)?;
    Ok((r1 - r0).abs() / spec.slew_rate)
}

/// Instantaneous speed of a fan and the speed it has been commanded to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FanState {
    pub current_rpm: f64,
    pub target_rpm: f64,
}

impl FanState {
    pub fn steady(rpm: f64) -> Self {
        FanState {
            current_rpm: rpm,
            target_rpm: rpm,
        }
    }

    /// Speed `t` seconds after the command, moving linearly at `slew` RPM/s and then holding.
    #[inline]
    pub fn rpm_after(&self, slew: f64, t: f64) -> f64 {
        let delta = self.target_rpm - self.current_rpm;
        let moved = (slew * t.max(0.0)).min(delta.abs());
        self.current_rpm + moved.copysign(delta)
    }

    /// Seconds until the target is reached.
    pub fn settle_time(&self, slew: f64) -> f64 {
        (self.target_rpm - self.current_rpm).abs() / slew
    }
}

/// RPM sampled every `tick` seconds over `[0, duration]` after commanding `target`.
///
/// The first sample is the current speed; the speed ramps linearly at the fan's slew
/// rate and holds once it reaches the target.
pub fn slew_trajectory(
    spec: &FanSpec,
    state: FanState,
    target: f64,
    duration: f64,
    tick: f64,
) -> Result<Vec<f64>> {
    spec.check_rpm(state.current_rpm)?;
    spec.check_rpm(target)?;
    if !(tick > 0.0 && tick.is_finite()) {
        return Err(Error::domain(format!("tick must be positive, got {tick}")));
    }
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(Error::domain(format!(
            "duration must be >= 0, got {duration}"
        )));
    }
    let commanded = FanState {
        current_rpm: state.current_rpm,
        target_rpm: target,
    };
    // Guard against 0.30000000000000004 / 0.1 style rounding dropping the last tick.
    let n = (duration / tick + 1e-9).floor() as usize + 1;
    Ok((0..n)
        .map(|i| commanded.rpm_after(spec.slew_rate, i as f64 * tick))
        .collect())
}
