use nalgebra::DVector;

use crate::error::{LabError, Result};

/// Parametric description of the singular values `ρ_k` of the forward map.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumFamily {
    /// Polynomial decay: `C₁(1+k²)^{-α/2} ≤ ρ_k ≤ C₂(1+k²)^{-α/2}`.
    Mild {
        alpha: f64,
        c1: f64,
        c2: f64,
    },
    /// Exponential decay:
    /// `C₁(1+k²)^{-α₁} e^{-2C₀k^{-β}} ≤ ρ_k ≤ C₂(1+k²)^{-α₂} e^{-2C₀k^{-β}}`.
    Severe {
        alpha1: f64,
        alpha2: f64,
        c0: f64,
        beta: f64,
        c1: f64,
        c2: f64,
    },
    Explicit {
        rho: Vec<f64>,
    },
}

impl SpectrumFamily {
    pub fn mild(alpha: f64) -> Self {
        SpectrumFamily::Mild {
            alpha,
            c1: 1.0,
            c2: 1.0,
        }
    }

    pub fn severe(alpha1: f64, alpha2: f64, c0: f64, beta: f64) -> Self {
        SpectrumFamily::Severe {
            alpha1,
            alpha2,
            c0,
            beta,
            c1: 1.0,
            c2: 1.0,
        }
    }

    pub fn is_severe(&self) -> bool {
        matches!(self, SpectrumFamily::Severe { .. })
    }

    /// Lower and upper envelope at 1-based index `k`, if the family has one.
    pub fn envelope(&self, k: usize) -> Option<(f64, f64)> {
        let kk = k as f64;
        let base = 1.0 + kk * kk;
        match *self {
            SpectrumFamily::Mild { alpha, c1, c2 } => {
                let s = base.powf(-alpha / 2.0);
                Some((c1 * s, c2 * s))
            }
            SpectrumFamily::Severe {
                alpha1,
                alpha2,
                c0,
                beta,
                c1,
                c2,
            } => {
                let e = (-2.0 * c0 * kk.powf(-beta)).exp();
                Some((c1 * base.powf(-alpha1) * e, c2 * base.powf(-alpha2) * e))
            }
            SpectrumFamily::Explicit { .. } => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(LabError::param(format!(
                    "{name} must be positive and finite, got {v}"
                )))
            }
        };
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(LabError::param(format!(
                    "{name} must be non-negative and finite, got {v}"
                )))
            }
        };
        match *self {
            SpectrumFamily::Mild { alpha, c1, c2 } => {
                nonneg("alpha", alpha)?;
                positive("c1", c1)?;
                positive("c2", c2)?;
                if c1 > c2 {
                    return Err(LabError::param("envelope constants require c1 <= c2"));
                }
            }
            SpectrumFamily::Severe {
                alpha1,
                alpha2,
                c0,
                beta,
                c1,
                c2,
            } => {
                nonneg("alpha1", alpha1)?;
                nonneg("alpha2", alpha2)?;
                positive("c0", c0)?;
                positive("c1", c1)?;
                positive("c2", c2)?;
                if !beta.is_finite() {
                    return Err(LabError::param("beta must be finite"));
                }
                if alpha1 < alpha2 {
                    return Err(LabError::param("severe envelope requires alpha1 >= alpha2"));
                }
                if c1 > c2 {
                    return Err(LabError::param("envelope constants require c1 <= c2"));
                }
            }
            SpectrumFamily::Explicit { .. } => {}
        }
        Ok(())
    }
}

/// Singular values `ρ_k` of `√(GᵀG)` on the truncated space; the SVD basis
/// `e_k` is implicit as the coordinate axes.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSpectrum {
    rho: DVector<f64>,
    family: SpectrumFamily,
}

/// Builds the representative spectrum of a family at truncation `n_dim`.
/// Parametric families use their upper envelope, so `C₁ = C₂ = 1` gives
/// `ρ_k = (1+k²)^{-α/2}` in the mild case.
pub fn make_spectrum(family: &SpectrumFamily, n_dim: usize) -> Result<OperatorSpectrum> {
    if n_dim == 0 {
        return Err(LabError::param("n_dim must be at least 1"));
    }
    family.validate()?;
    let rho = match family {
        SpectrumFamily::Explicit { rho } => {
            if rho.len() != n_dim {
                return Err(LabError::param(format!(
                    "explicit spectrum has {} values, expected {n_dim}",
                    rho.len()
                )));
            }
            DVector::from_column_slice(rho)
        }
        _ => DVector::from_iterator(
            n_dim,
            (1..=n_dim).map(|k| family.envelope(k).expect("parametric family").1),
        ),
    };
    OperatorSpectrum::from_parts(rho, family.clone())
}

impl OperatorSpectrum {
    fn from_parts(rho: DVector<f64>, family: SpectrumFamily) -> Result<Self> {
        for (i, &r) in rho.iter().enumerate() {
            if !(r > 0.0) || !r.is_finite() {
                return Err(LabError::param(format!(
                    "singular value rho_{} = {r:e} is not positive and finite (underflow?)",
                    i + 1
                )));
            }
            if i > 0 && r > rho[i - 1] {
                return Err(LabError::param(format!(
                    "singular values must be non-increasing: rho_{} > rho_{}",
                    i + 1,
                    i
                )));
            }
        }
        Ok(Self { rho, family })
    }

    pub fn explicit(rho: Vec<f64>) -> Result<Self> {
        let n = rho.len();
        make_spectrum(&SpectrumFamily::Explicit { rho }, n)
    }

    pub fn n_dim(&self) -> usize {
        self.rho.len()
    }

    pub fn rho(&self) -> &DVector<f64> {
        &self.rho
    }

    pub fn family(&self) -> &SpectrumFamily {
        &self.family
    }

    /// True when every stored `ρ_k` lies inside the family envelope.
    pub fn satisfies_envelope(&self) -> bool {
        self.rho
            .iter()
            .enumerate()
            .all(|(i, &r)| match self.family.envelope(i + 1) {
                Some((lo, hi)) => lo <= r && r <= hi,
                None => true,
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mild_alpha_one() {
        let s = make_spectrum(&SpectrumFamily::mild(1.0), 3).unwrap();
        let expected = [0.5f64.sqrt(), 0.2f64.sqrt(), 0.1f64.sqrt()];
        for (a, b) in s.rho().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((s.rho()[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((s.rho()[2] - 0.31623).abs() < 1e-5);
        assert!(s.satisfies_envelope());
    }

    #[test]
    fn mild_alpha_zero_is_flat() {
        let s = make_spectrum(&SpectrumFamily::mild(0.0), 17).unwrap();
        assert!(s.rho().iter().all(|&r| r == 1.0));
    }

    #[test]
    fn severe_exponential() {
        let s = make_spectrum(&SpectrumFamily::severe(0.0, 0.0, 1.0, -1.0), 2).unwrap();
        assert!((s.rho()[0] - (-2.0f64).exp()).abs() < 1e-16);
        assert!((s.rho()[1] - (-4.0f64).exp()).abs() < 1e-16);
        assert!(s.satisfies_envelope());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(make_spectrum(&SpectrumFamily::mild(-1.0), 3).is_err());
        assert!(make_spectrum(&SpectrumFamily::mild(1.0), 0).is_err());
        let bad_c = SpectrumFamily::Mild {
            alpha: 1.0,
            c1: 0.0,
            c2: 1.0,
        };
        assert!(make_spectrum(&bad_c, 3).is_err());
        assert!(make_spectrum(&SpectrumFamily::severe(1.0, 0.0, -1.0, -1.0), 3).is_err());
    }

    #[test]
    fn severe_underflow_is_reported() {
        // e^{-2k} underflows well before k = 1000.
        let err = make_spectrum(&SpectrumFamily::severe(0.0, 0.0, 1.0, -1.0), 1000).unwrap_err();
        assert!(matches!(err, LabError::Parameter(_)));
    }

    #[test]
    fn explicit_must_be_non_increasing() {
        assert!(OperatorSpectrum::explicit(vec![1.0, 2.0]).is_err());
        assert!(OperatorSpectrum::explicit(vec![1.0, 0.0]).is_err());
        assert!(OperatorSpectrum::explicit(vec![2.0, 1.0]).is_ok());
    }
}
