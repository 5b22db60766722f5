//! Market and game constants shared by every stage of the solver.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Impact coefficients, penalties, initial holdings and horizon.
///
/// Index 0 refers to the institutional liquidator (major agent), index 1 to
/// the high-frequency trader (minor agent).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub lambda0: f64,
    pub lambda1: f64,
    pub kappa0: f64,
    pub kappa1: f64,
    pub alpha: f64,
    pub q0: f64,
    pub x0: f64,
    pub x1: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl ModelParams {
    /// Validates the positivity constraints and `2 alpha >= kappa1`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        lambda0: f64,
        lambda1: f64,
        kappa0: f64,
        kappa1: f64,
        alpha: f64,
        q0: f64,
        x0: f64,
        x1: f64,
        horizon: f64,
    ) -> Result<Self> {
        let p = ModelParams {
            lambda0,
            lambda1,
            kappa0,
            kappa1,
            alpha,
            q0,
            x0,
            x1,
            horizon,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        positive("lambda0", self.lambda0)?;
        positive("lambda1", self.lambda1)?;
        positive("kappa0", self.kappa0)?;
        positive("kappa1", self.kappa1)?;
        positive("alpha", self.alpha)?;
        positive("T", self.horizon)?;
        finite("q0", self.q0)?;
        finite("x0", self.x0)?;
        finite("x1", self.x1)?;
        if 2.0 * self.alpha < self.kappa1 {
            return Err(Error::param(
                "alpha",
                format!(
                    "terminal penalty must satisfy 2*alpha >= kappa1 (alpha={}, kappa1={})",
                    self.alpha, self.kappa1
                ),
            ));
        }
        Ok(())
    }

    /// Coupling constant `kappa1 kappa0 / (2 lambda0 lambda1)` of the Fredholm equation.
    pub fn coupling(&self) -> f64 {
        self.kappa1 * self.kappa0 / (2.0 * self.lambda0 * self.lambda1)
    }

    /// Terminal value of the Riccati gain, `-(2 alpha - kappa1) / (2 lambda1)`.
    pub fn riccati_terminal(&self) -> f64 {
        -(2.0 * self.alpha - self.kappa1) / (2.0 * self.lambda1)
    }

    /// `(2 alpha - kappa1) / 2`, the cross term of the minor agent's quadratic form.
    pub fn theta(&self) -> f64 {
        (2.0 * self.alpha - self.kappa1) / 2.0
    }

    /// Copy with a different horizon (used by the canned experiment configs).
    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }
}

/// Ornstein-Uhlenbeck signal and martingale price-noise parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalParams {
    pub m0: f64,
    pub beta: f64,
    pub sigma: f64,
    #[serde(rename = "M0")]
    pub price0: f64,
    #[serde(rename = "sigmaM")]
    pub sigma_m: f64,
}

impl SignalParams {
    pub fn new(m0: f64, beta: f64, sigma: f64, price0: f64, sigma_m: f64) -> Result<Self> {
        let s = SignalParams {
            m0,
            beta,
            sigma,
            price0,
            sigma_m,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        finite("m0", self.m0)?;
        positive("beta", self.beta)?;
        non_negative("sigma", self.sigma)?;
        finite("M0", self.price0)?;
        non_negative("sigmaM", self.sigma_m)?;
        Ok(())
    }

    /// Unconditional signal mean `m0 exp(-beta t)`.
    pub fn mean(&self, t: f64) -> f64 {
        self.m0 * (-self.beta * t).exp()
    }
}

/// Running inventory penalty of the minor agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum PenaltySpec {
    Zero,
    Constant {
        value: f64,
    },
    /// `c0 * frac(t / tau)^c1`, rising towards each multiple of `tau` from the left.
    Periodic {
        c0: f64,
        c1: f64,
        tau: f64,
    },
}

impl PenaltySpec {
    pub fn validate(&self, horizon: f64) -> Result<()> {
        match *self {
            PenaltySpec::Zero => Ok(()),
            PenaltySpec::Constant { value } => non_negative("value", value),
            PenaltySpec::Periodic { c0, c1, tau } => {
                positive("c0", c0)?;
                positive("c1", c1)?;
                positive("tau", tau)?;
                let periods = horizon / tau;
                if (periods - periods.round()).abs() > 1e-9 * periods.max(1.0) || periods < 0.5 {
                    return Err(Error::param(
                        "tau",
                        format!("horizon {horizon} is not an integer multiple of tau={tau}"),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Evaluates the penalty at `t`, rejecting times outside `[0, horizon]`.
    pub fn eval(&self, t: f64, horizon: f64) -> Result<f64> {
        if !(0.0..=horizon).contains(&t) {
            return Err(Error::OutOfDomain { t, horizon });
        }
        Ok(self.value(t))
    }

    /// Unchecked evaluation. Period boundaries map to zero.
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            PenaltySpec::Zero => 0.0,
            PenaltySpec::Constant { value } => value,
            PenaltySpec::Periodic { c0, c1, tau } => {
                let x = t / tau;
                periodic_shape(c0, c1, (x - snapped_floor(x)).max(0.0))
            }
        }
    }

    /// Value on the continuous branch that covers the open interval `(a, b)`.
    ///
    /// Differs from [`value`](Self::value) only at a period boundary that
    /// closes the interval, where the left limit `c0` is returned instead of 0.
    pub fn value_on_interval(&self, t: f64, a: f64, b: f64) -> f64 {
        match *self {
            PenaltySpec::Periodic { c0, c1, tau } => {
                let period = snapped_floor(0.5 * (a + b) / tau);
                let frac = (t / tau - period).clamp(0.0, 1.0);
                periodic_shape(c0, c1, frac)
            }
            _ => self.value(t),
        }
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            PenaltySpec::Zero => true,
            PenaltySpec::Constant { value } => value == 0.0,
            PenaltySpec::Periodic { .. } => false,
        }
    }
}

fn periodic_shape(c0: f64, c1: f64, frac: f64) -> f64 {
    c0 * frac.powf(c1)
}

/// `floor(x)` that treats values within rounding of an integer as that integer.
fn snapped_floor(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-10 * x.abs().max(1.0) {
        r
    } else {
        x.floor()
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(
            name,
            format!("must be finite and > 0, got {v}"),
        ))
    }
}

fn non_negative(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::param(
            name,
            format!("must be finite and >= 0, got {v}"),
        ))
    }
}

fn finite(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be finite, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn base() -> ModelParams {
        ModelParams::new(1.0, 1.0, 2.0, 2.0, 10.0, 10.0, 0.0, 0.0, 6.0).unwrap()
    }

    #[test]
    fn rejects_violated_terminal_penalty() {
        let err = ModelParams::new(1.0, 1.0, 2.0, 2.0, 0.9, 10.0, 0.0, 0.0, 6.0).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { name: "alpha", .. }));
        // boundary case 2 alpha == kappa1 is admissible
        assert!(ModelParams::new(1.0, 1.0, 2.0, 2.0, 1.0, 10.0, 0.0, 0.0, 6.0).is_ok());
    }

    #[test]
    fn rejects_non_positive_impact() {
        assert!(ModelParams::new(0.0, 1.0, 2.0, 2.0, 10.0, 10.0, 0.0, 0.0, 6.0).is_err());
        assert!(ModelParams::new(1.0, 1.0, 2.0, 2.0, 10.0, 10.0, 0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn derived_constants() {
        let p = base();
        assert_eq!(p.coupling(), 2.0);
        assert_eq!(p.riccati_terminal(), -9.0);
        assert_eq!(p.theta(), 9.0);
    }

    #[test]
    fn periodic_penalty_values() {
        let phi = PenaltySpec::Periodic {
            c0: 500.0,
            c1: 15.0,
            tau: 1.0,
        };
        assert_eq!(phi.eval(0.0, 5.0).unwrap(), 0.0);
        assert_eq!(phi.eval(0.5, 5.0).unwrap(), 500.0 * 0.5f64.powi(15));
        assert_eq!(phi.eval(3.0, 5.0).unwrap(), 0.0);
        // a node that lands a hair below the boundary still counts as the boundary
        assert_eq!(phi.value(3.0 - 1e-14), 0.0);
        assert!(phi.eval(5.5, 5.0).is_err());
        assert!(phi.eval(-0.1, 5.0).is_err());
    }

    #[test]
    fn left_limit_on_closing_interval() {
        let phi = PenaltySpec::Periodic {
            c0: 500.0,
            c1: 15.0,
            tau: 1.0,
        };
        assert_eq!(phi.value_on_interval(1.0, 0.99, 1.0), 500.0);
        assert_eq!(phi.value_on_interval(1.0, 1.0, 1.01), 0.0);
    }

    #[test]
    fn constant_and_zero() {
        let c = PenaltySpec::Constant { value: 1.0 };
        assert_eq!(c.eval(2.3, 6.0).unwrap(), 1.0);
        assert_eq!(PenaltySpec::Zero.eval(2.3, 6.0).unwrap(), 0.0);
    }

    #[test]
    fn periodic_requires_integer_number_of_periods() {
        let phi = PenaltySpec::Periodic {
            c0: 1.0,
            c1: 2.0,
            tau: 0.7,
        };
        assert!(phi.validate(5.0).is_err());
        assert!(phi.validate(2.1).is_ok());
    }

    #[test]
    fn signal_mean_decays() {
        let s = SignalParams::new(-0.5, 0.1, 4.0, 100.0, 1.0).unwrap();
        assert_eq!(s.mean(0.0), -0.5);
        approx::assert_relative_eq!(s.mean(100.0), -0.5 * (-10.0f64).exp());
        assert!(SignalParams::new(0.0, 0.0, 1.0, 100.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn penalty_is_non_negative_and_periodic(t in 0.0f64..3.999, c0 in 0.1f64..1000.0, c1 in 0.5f64..20.0) {
            let phi = PenaltySpec::Periodic { c0, c1, tau: 1.0 };
            let v = phi.value(t);
            prop_assert!(v >= 0.0);
            let w = phi.value(t + 1.0);
            prop_assert!((v - w).abs() <= 1e-9 * c0);
        }
    }
}
