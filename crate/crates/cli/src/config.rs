//! Run configuration. A TOML file with one table per concern; every key is
//! optional and falls back to the defaults below.
//!
//! Times are given in the same (arbitrary) unit and rates in its inverse.
//! Before a run everything is rescaled so that the emitter decay rate is one.

use delaynet::experiments::{DelayDemo, OracleCompare, RamseySetup, Truncation};
use delaynet::pulses::{ramsey_width, Regularization};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Keyword {
    Auto,
}

/// Pulse width: a number, or `"auto"` for the quarter-rotation width
/// `π^{3/2}/(8γn)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Width {
    Value(f64),
    Keyword(Keyword),
}

impl Default for Width {
    fn default() -> Self {
        Width::Keyword(Keyword::Auto)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Physics {
    /// Emitter decay rate.
    pub gamma: f64,
    /// Photons in the input Fock state.
    pub n: usize,
    /// Extra delay of the long interferometer arm.
    pub tau: f64,
    pub t_w: Width,
    /// Wait between the end of the input pulse and the release, in pulse widths.
    pub margin: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Physics { gamma: 1.0, n: 9, tau: 0.5, t_w: Width::default(), margin: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    pub steps_per_width: f64,
    pub epsilon: f64,
    pub threshold: f64,
    /// Photon-number window for the output analysis; absent means the exact
    /// excitation-number cap.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
}

impl Default for Numerics {
    fn default() -> Self {
        let reg = Regularization::default();
        Numerics { steps_per_width: 200.0, epsilon: reg.epsilon, threshold: reg.threshold, window: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scan {
    pub delta_min: f64,
    pub delta_max: f64,
    pub points: usize,
    /// `false` decouples the emitter in `intensity-scan`.
    pub with_atom: bool,
}

impl Default for Scan {
    fn default() -> Self {
        Scan { delta_min: -4.0, delta_max: 4.0, points: 81, with_atom: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Delay {
    pub t_w: f64,
    pub tau: f64,
    /// Time bins of the collision-model reference; zero skips it.
    pub oracle_bins: usize,
}

impl Default for Delay {
    fn default() -> Self {
        Delay { t_w: 1.0, tau: 3.0, oracle_bins: 200 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Oracle {
    pub t_w: f64,
    pub delta: f64,
    pub bins: usize,
    /// Decay time followed after the pulse, in `1/γ`.
    pub tail: f64,
    /// Largest accepted `|P_e^{vc} − P_e^{tb}|`.
    pub max_deviation: f64,
    /// Also run with twice as many bins and report whether the gap shrinks.
    pub refine: bool,
}

impl Default for Oracle {
    fn default() -> Self {
        Oracle { t_w: 1.0, delta: 0.0, bins: 200, tail: 3.0, max_deviation: 0.01, refine: true }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub physics: Physics,
    pub numerics: Numerics,
    pub scan: Scan,
    pub delay: Delay,
    pub oracle: Oracle,
}

fn finite(name: &str, x: f64) -> Result<(), ConfigError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(bad(format!("{name} must be finite, got {x}")))
    }
}

fn positive(name: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(bad(format!("{name} must be positive, got {x}")))
    }
}

fn non_negative(name: &str, x: f64) -> Result<(), ConfigError> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(bad(format!("{name} must be non-negative, got {x}")))
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Config, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.physics;
        non_negative("physics.gamma", p.gamma)?;
        non_negative("physics.tau", p.tau)?;
        non_negative("physics.margin", p.margin)?;
        if let Width::Value(w) = p.t_w {
            positive("physics.t_w", w)?;
        }
        let m = &self.numerics;
        if !(m.steps_per_width >= 1.0 && m.steps_per_width.is_finite()) {
            return Err(bad(format!("numerics.steps_per_width must be at least 1, got {}", m.steps_per_width)));
        }
        positive("numerics.epsilon", m.epsilon)?;
        non_negative("numerics.threshold", m.threshold)?;
        if let Some(w) = m.window {
            if w < 2 {
                return Err(bad(format!("numerics.window must be at least 2, got {w}")));
            }
        }
        let s = &self.scan;
        finite("scan.delta_min", s.delta_min)?;
        finite("scan.delta_max", s.delta_max)?;
        if s.delta_min > s.delta_max {
            return Err(bad("scan.delta_min exceeds scan.delta_max"));
        }
        if s.points == 0 {
            return Err(bad("scan.points must be at least 1"));
        }
        positive("delay.t_w", self.delay.t_w)?;
        non_negative("delay.tau", self.delay.tau)?;
        if self.delay.oracle_bins != 0 && self.delay.oracle_bins < delaynet::oracle::MIN_BINS {
            return Err(bad(format!("delay.oracle_bins must be 0 or at least {}", delaynet::oracle::MIN_BINS)));
        }
        let o = &self.oracle;
        positive("oracle.t_w", o.t_w)?;
        finite("oracle.delta", o.delta)?;
        non_negative("oracle.tail", o.tail)?;
        non_negative("oracle.max_deviation", o.max_deviation)?;
        if o.bins < delaynet::oracle::MIN_BINS {
            return Err(bad(format!("oracle.bins must be at least {}", delaynet::oracle::MIN_BINS)));
        }
        Ok(())
    }

    /// Unit of rate used internally: the decay rate, or one when it vanishes.
    pub fn rate_unit(&self) -> f64 {
        if self.physics.gamma > 0.0 {
            self.physics.gamma
        } else {
            1.0
        }
    }

    fn regularization(&self) -> Regularization {
        Regularization { epsilon: self.numerics.epsilon, threshold: self.numerics.threshold }
    }

    /// Detunings of the scan in units of `γ`.
    pub fn deltas(&self) -> Vec<f64> {
        let g = self.rate_unit();
        delaynet::experiments::symmetric_grid(self.scan.delta_min / g, self.scan.delta_max / g, self.scan.points)
    }

    /// Ramsey and output-analysis parameters in units of `γ`.
    pub fn ramsey_setup(&self) -> Result<RamseySetup, ConfigError> {
        if !(self.physics.gamma > 0.0) {
            return Err(bad("the Ramsey and intensity scans need physics.gamma > 0"));
        }
        let g = self.rate_unit();
        let mut setup = RamseySetup::new(self.physics.n);
        setup.tau = self.physics.tau * g;
        setup.margin = self.physics.margin;
        setup.reg = self.regularization();
        setup.steps_per_width = self.numerics.steps_per_width;
        setup.width = match self.physics.t_w {
            Width::Value(w) => Some(w * g),
            Width::Keyword(Keyword::Auto) => Some(ramsey_width(1.0, self.physics.n.max(1) as f64)),
        };
        setup.truncation = match self.numerics.window {
            Some(w) => Truncation::Window(w),
            None => Truncation::Cap,
        };
        Ok(setup)
    }

    pub fn delay_demo(&self) -> DelayDemo {
        let g = self.rate_unit();
        let mut demo = DelayDemo::new(self.delay.t_w * g, self.delay.tau * g);
        demo.reg = self.regularization();
        demo.steps_per_width = self.numerics.steps_per_width;
        demo
    }

    pub fn oracle_compare(&self, bins: usize) -> OracleCompare {
        let g = self.rate_unit();
        OracleCompare {
            width: self.oracle.t_w * g,
            gamma: self.physics.gamma / g,
            delta: self.oracle.delta / g,
            bins,
            reg: self.regularization(),
            steps_per_width: self.numerics.steps_per_width,
            tail: self.oracle.tail,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = Config::parse("").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.physics.t_w, Width::Keyword(Keyword::Auto));
    }

    #[test]
    fn round_trip() {
        let mut cfg = Config::default();
        cfg.physics.t_w = Width::Value(0.125);
        cfg.numerics.window = Some(4);
        cfg.scan.delta_min = -0.1;
        cfg.numerics.epsilon = 3.3e-7;
        let text = cfg.to_toml();
        assert_eq!(Config::parse(&text).unwrap(), cfg);
        let auto = Config::default().to_toml();
        assert!(auto.contains("t_w = \"auto\""), "{auto}");
        assert_eq!(Config::parse(&auto).unwrap(), Config::default());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(Config::parse("[physics]\ntau = -1.0").is_err());
        assert!(Config::parse("[physics]\nt_w = \"wide\"").is_err());
        assert!(Config::parse("[numerics]\nwindow = 1").is_err());
        assert!(Config::parse("[scan]\ndelta_min = 2.0\ndelta_max = 1.0").is_err());
        assert!(Config::parse("[scan]\nspan = 2.0").is_err());
        assert!(Config::parse("[oracle]\nbins = 10").is_err());
    }

    #[test]
    fn physical_units_are_rescaled() {
        let cfg =
            Config::parse("[physics]\ngamma = 2.0\ntau = 0.25\nt_w = 0.5\n[scan]\ndelta_min = -2.0\ndelta_max = 2.0\npoints = 3").unwrap();
        let s = cfg.ramsey_setup().unwrap();
        assert_eq!(s.tau, 0.5);
        assert_eq!(s.width, Some(1.0));
        assert_eq!(cfg.deltas(), vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn auto_width_uses_photon_number() {
        let cfg = Config::default();
        let w = cfg.ramsey_setup().unwrap().pulse_width();
        assert!((w - ramsey_width(1.0, 9.0)).abs() < 1e-15);
    }
}
