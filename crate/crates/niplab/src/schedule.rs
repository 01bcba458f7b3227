//! Scalar time schedules with exact derivatives, and their flag syntax:
//! `poly:c0,c1,...`, `exp:a,rate`, `sin:base,amp,freq`, `pwl:t0,v0;t1,v1;...`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{NipError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScheduleKind {
    /// Σ c_i t^i, coefficients low to high.
    Polynomial(Vec<f64>),
    /// a·e^{rate·t}
    Exponential { a: f64, rate: f64 },
    /// base + amp·sin(freq·t)
    Sinusoidal { base: f64, amp: f64, freq: f64 },
    /// Linear interpolation through (t, v) knots, constant outside.
    PiecewiseLinear(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub domain: (f64, f64),
}

impl Schedule {
    pub fn new(kind: ScheduleKind) -> Result<Self> {
        let domain = match &kind {
            ScheduleKind::Polynomial(c) if c.is_empty() => {
                return Err(NipError::InvalidConfig("polynomial schedule needs at least one coefficient".into()))
            }
            ScheduleKind::PiecewiseLinear(k) => {
                if k.len() < 2 {
                    return Err(NipError::InvalidConfig("piecewise-linear schedule needs at least two knots".into()));
                }
                if k.windows(2).any(|w| w[1].0 <= w[0].0) {
                    return Err(NipError::InvalidConfig("piecewise-linear knots must have increasing times".into()));
                }
                (k[0].0, k[k.len() - 1].0)
            }
            _ => (0.0, 1.0),
        };
        let all_finite = match &kind {
            ScheduleKind::Polynomial(c) => c.iter().all(|x| x.is_finite()),
            ScheduleKind::Exponential { a, rate } => a.is_finite() && rate.is_finite(),
            ScheduleKind::Sinusoidal { base, amp, freq } => base.is_finite() && amp.is_finite() && freq.is_finite(),
            ScheduleKind::PiecewiseLinear(k) => k.iter().all(|(t, v)| t.is_finite() && v.is_finite()),
        };
        if !all_finite {
            return Err(NipError::InvalidConfig("schedule parameters must be finite".into()));
        }
        Ok(Schedule { kind, domain })
    }

    pub fn constant(c: f64) -> Self {
        Schedule { kind: ScheduleKind::Polynomial(vec![c]), domain: (0.0, 1.0) }
    }

    pub fn polynomial(coeffs: &[f64]) -> Result<Self> {
        Self::new(ScheduleKind::Polynomial(coeffs.to_vec()))
    }

    pub fn with_domain(mut self, t0: f64, t1: f64) -> Result<Self> {
        if !(t0.is_finite() && t1.is_finite() && t1 >= t0) {
            return Err(NipError::InvalidConfig(format!("bad schedule domain [{t0}, {t1}]")));
        }
        self.domain = (t0, t1);
        Ok(self)
    }

    pub fn value(&self, t: f64) -> f64 {
        match &self.kind {
            ScheduleKind::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ci| acc * t + ci),
            ScheduleKind::Exponential { a, rate } => a * (rate * t).exp(),
            ScheduleKind::Sinusoidal { base, amp, freq } => base + amp * (freq * t).sin(),
            ScheduleKind::PiecewiseLinear(k) => {
                if t <= k[0].0 {
                    return k[0].1;
                }
                for w in k.windows(2) {
                    let ((t0, v0), (t1, v1)) = (w[0], w[1]);
                    if t <= t1 {
                        return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
                    }
                }
                k[k.len() - 1].1
            }
        }
    }

    pub fn derivative(&self, t: f64) -> Result<f64> {
        Ok(match &self.kind {
            ScheduleKind::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (i, &ci)| acc * t + i as f64 * ci),
            ScheduleKind::Exponential { a, rate } => a * rate * (rate * t).exp(),
            ScheduleKind::Sinusoidal { amp, freq, .. } => amp * freq * (freq * t).cos(),
            ScheduleKind::PiecewiseLinear(k) => {
                let interior = &k[1..k.len() - 1];
                if interior.iter().any(|(tk, _)| *tk == t) {
                    return Err(NipError::Derivative(format!("piecewise-linear schedule has a kink at t = {t}")));
                }
                if t < k[0].0 || t > k[k.len() - 1].0 {
                    return Ok(0.0);
                }
                let w = k.windows(2).find(|w| t <= w[1].0).unwrap_or(&k[k.len() - 2..]);
                (w[1].1 - w[0].1) / (w[1].0 - w[0].0)
            }
        })
    }

    pub fn second_derivative(&self, t: f64) -> Result<f64> {
        Ok(match &self.kind {
            ScheduleKind::Polynomial(c) => c
                .iter()
                .enumerate()
                .skip(2)
                .rev()
                .fold(0.0, |acc, (i, &ci)| acc * t + (i * (i - 1)) as f64 * ci),
            ScheduleKind::Exponential { a, rate } => a * rate * rate * (rate * t).exp(),
            ScheduleKind::Sinusoidal { amp, freq, .. } => -amp * freq * freq * (freq * t).sin(),
            ScheduleKind::PiecewiseLinear(_) => {
                return Err(NipError::Derivative("piecewise-linear schedules have no second derivative".into()))
            }
        })
    }

    /// Smallest sampled value over [t0, t1] (10³ interior points plus endpoints).
    pub fn min_on(&self, t0: f64, t1: f64) -> f64 {
        let n = 1000;
        let mut m = self.value(t0).min(self.value(t1));
        for i in 1..=n {
            let t = t0 + (t1 - t0) * i as f64 / (n + 1) as f64;
            m = m.min(self.value(t));
        }
        m
    }

    pub fn check_positive_on(&self, t0: f64, t1: f64, what: &str) -> Result<()> {
        let m = self.min_on(t0, t1);
        if m > 0.0 {
            Ok(())
        } else {
            Err(NipError::Domain(format!("{what} must stay positive on [{t0}, {t1}], minimum sampled value {m}")))
        }
    }

    pub fn check_positive(&self, what: &str) -> Result<()> {
        self.check_positive_on(self.domain.0, self.domain.1, what)
    }

    pub fn is_constant(&self) -> bool {
        match &self.kind {
            ScheduleKind::Polynomial(c) => c.iter().skip(1).all(|&x| x == 0.0),
            ScheduleKind::Exponential { a, rate } => *a == 0.0 || *rate == 0.0,
            ScheduleKind::Sinusoidal { amp, freq, .. } => *amp == 0.0 || *freq == 0.0,
            ScheduleKind::PiecewiseLinear(k) => k.iter().all(|(_, v)| *v == k[0].1),
        }
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| NipError::InvalidConfig(format!("cannot parse number '{}'", p.trim())))
        })
        .collect()
}

impl FromStr for Schedule {
    type Err = NipError;

    fn from_str(s: &str) -> Result<Self> {
        let (tag, body) = s
            .split_once(':')
            .ok_or_else(|| NipError::InvalidConfig(format!("schedule '{s}' lacks a 'kind:' prefix")))?;
        let kind = match tag.trim() {
            "poly" => ScheduleKind::Polynomial(parse_list(body)?),
            "exp" => match parse_list(body)?.as_slice() {
                [a, rate] => ScheduleKind::Exponential { a: *a, rate: *rate },
                _ => return Err(NipError::InvalidConfig("exp schedule takes a,rate".into())),
            },
            "sin" => match parse_list(body)?.as_slice() {
                [base, amp, freq] => ScheduleKind::Sinusoidal { base: *base, amp: *amp, freq: *freq },
                _ => return Err(NipError::InvalidConfig("sin schedule takes base,amp,freq".into())),
            },
            "pwl" => {
                let knots = body
                    .split(';')
                    .filter(|k| !k.trim().is_empty())
                    .map(|k| match parse_list(k)?.as_slice() {
                        [t, v] => Ok((*t, *v)),
                        _ => Err(NipError::InvalidConfig(format!("pwl knot '{k}' is not t,v"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                ScheduleKind::PiecewiseLinear(knots)
            }
            other => return Err(NipError::InvalidConfig(format!("unknown schedule kind '{other}'"))),
        };
        Schedule::new(kind)
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        match &self.kind {
            ScheduleKind::Polynomial(c) => write!(f, "poly:{}", join(c)),
            ScheduleKind::Exponential { a, rate } => write!(f, "exp:{a},{rate}"),
            ScheduleKind::Sinusoidal { base, amp, freq } => write!(f, "sin:{base},{amp},{freq}"),
            ScheduleKind::PiecewiseLinear(k) => {
                let s: Vec<String> = k.iter().map(|(t, v)| format!("{t},{v}")).collect();
                write!(f, "pwl:{}", s.join(";"))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn central(s: &Schedule, t: f64) -> f64 {
        let h = 1e-5;
        (s.value(t + h) - s.value(t - h)) / (2.0 * h)
    }

    #[test]
    fn parse_all_kinds() {
        let p: Schedule = "poly:1,0.5".parse().unwrap();
        assert_eq!(p.value(2.0), 2.0);
        let e: Schedule = "exp:2,0.5".parse().unwrap();
        assert!((e.value(2.0) - 2.0 * 1f64.exp()).abs() < 1e-14);
        let s: Schedule = "sin:1,0.1,1".parse().unwrap();
        assert!((s.value(0.5) - (1.0 + 0.1 * 0.5f64.sin())).abs() < 1e-15);
        let w: Schedule = "pwl:0,1;1,3;2,2".parse().unwrap();
        assert_eq!(w.value(0.5), 2.0);
        assert_eq!(w.value(1.5), 2.5);
        assert_eq!(w.domain, (0.0, 2.0));
    }

    #[test]
    fn parse_errors() {
        assert!("poly".parse::<Schedule>().is_err());
        assert!("exp:1".parse::<Schedule>().is_err());
        assert!("foo:1".parse::<Schedule>().is_err());
        assert!("pwl:0,1".parse::<Schedule>().is_err());
        assert!("pwl:1,1;0,2".parse::<Schedule>().is_err());
        assert!("poly:1,x".parse::<Schedule>().is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for text in ["poly:0.3,1,-0.5,0.2", "exp:1.5,-0.7", "sin:1,0.1,3"] {
            let s: Schedule = text.parse().unwrap();
            for &t in &[0.1, 0.4, 0.9] {
                assert!((s.derivative(t).unwrap() - central(&s, t)).abs() < 1e-8, "{text}");
                let h = 1e-4;
                let fd = (s.derivative(t + h).unwrap() - s.derivative(t - h).unwrap()) / (2.0 * h);
                assert!((s.second_derivative(t).unwrap() - fd).abs() < 1e-6, "{text}");
            }
        }
    }

    #[test]
    fn pwl_derivative_rules() {
        let w: Schedule = "pwl:0,1;1,3;2,2".parse().unwrap();
        assert_eq!(w.derivative(0.5).unwrap(), 2.0);
        assert_eq!(w.derivative(1.5).unwrap(), -1.0);
        assert!(w.derivative(1.0).is_err());
        assert!(w.second_derivative(0.5).is_err());
    }

    #[test]
    fn positivity_check() {
        let g: Schedule = "sin:1,0.1,1".parse().unwrap();
        assert!(g.check_positive_on(0.0, 1.0, "g").is_ok());
        let bad: Schedule = "poly:0.2,-1".parse().unwrap();
        assert!(bad.check_positive_on(0.0, 1.0, "g").is_err());
    }

    #[test]
    fn display_roundtrip() {
        for text in ["poly:1,0.5", "exp:2,0.5", "sin:1,0.1,1", "pwl:0,1;1,3"] {
            let s: Schedule = text.parse().unwrap();
            let back: Schedule = s.to_string().parse().unwrap();
            assert_eq!(s, back);
        }
    }
}
