use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateVariant {
    WhiteDiagonal,
    /// Noise `(G^{-r}+K₁)^{-2}` and prior `(G^{-t}+K₂)^{-l}`.
    Colored {
        r: f64,
        t: f64,
        l: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryParams {
    /// Ill-posedness exponent; 0 is the well-posed case.
    pub alpha: f64,
    pub delta: f64,
    /// Truth smoothness.
    pub gamma: f64,
    pub variant: RateVariant,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryRates {
    pub eps_exponent: f64,
    pub xi_exponent: f64,
    pub kn_exponent: f64,
    /// Smoothness entering the rate: `γ`, or `γ(1−r)/t` when colored.
    pub gamma_effective: f64,
}

impl TheoryParams {
    pub fn white(alpha: f64, delta: f64, gamma: f64) -> Self {
        Self {
            alpha,
            delta,
            gamma,
            variant: RateVariant::WhiteDiagonal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(LabError::param("alpha must be non-negative and finite"));
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(LabError::param("delta must be positive and finite"));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(LabError::param("gamma must be positive and finite"));
        }
        if let RateVariant::Colored { r, t, l } = self.variant {
            if !(r > 0.0 && r < 1.0) {
                return Err(LabError::param("colored variant requires r in (0, 1)"));
            }
            if !(t > 1.0 - r) {
                return Err(LabError::param("colored variant requires t > 1 - r"));
            }
            if !(l > 0.0 && l <= 2.0) {
                return Err(LabError::param("colored variant requires l in (0, 2]"));
            }
        }
        Ok(())
    }
}

pub fn theory_rates(params: &TheoryParams) -> Result<TheoryRates> {
    params.validate()?;
    let gamma_effective = match params.variant {
        RateVariant::WhiteDiagonal => params.gamma,
        RateVariant::Colored { r, t, .. } => params.gamma * (1.0 - r) / t,
    };
    let s = gamma_effective.min(params.delta);
    let denom = 2.0 * params.alpha + 2.0 * params.delta + 1.0;
    Ok(TheoryRates {
        eps_exponent: -(params.alpha + s) / denom,
        xi_exponent: -s / denom,
        kn_exponent: 1.0 / denom,
        gamma_effective,
    })
}
