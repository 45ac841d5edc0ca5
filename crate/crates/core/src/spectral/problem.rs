use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, LabError, Result};
use crate::rng::{rng_from_seed, standard_normal_vector};

use super::coupling::OrthogonalCoupling;
use super::measure::{Basis, GaussianSequenceMeasure, NoiseModel};
use super::spectrum::OperatorSpectrum;

/// Operator, coupling, prior and noise on a common truncated space.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseProblem {
    operator: OperatorSpectrum,
    coupling: OrthogonalCoupling,
    prior: GaussianSequenceMeasure,
    noise: NoiseModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSample {
    /// Observation in e-coordinates.
    pub y: DVector<f64>,
    pub n_level: f64,
    pub u0: DVector<f64>,
    pub u0_basis: Basis,
    pub seed: u64,
}

impl InverseProblem {
    pub fn new(
        operator: OperatorSpectrum,
        coupling: OrthogonalCoupling,
        prior: GaussianSequenceMeasure,
        noise: NoiseModel,
    ) -> Result<Self> {
        let n = operator.n_dim();
        check_dim("coupling", coupling.n_dim(), n)?;
        check_dim("prior", prior.n_dim(), n)?;
        check_dim("noise", noise.n_dim(), n)?;
        if prior.basis() != Basis::Phi {
            return Err(LabError::param("prior must be expressed in the phi basis"));
        }
        // Dense noise is checked SPD at construction; diagonal noise has
        // positive variances by its own invariant.
        Ok(Self {
            operator,
            coupling,
            prior,
            noise,
        })
    }

    pub fn n_dim(&self) -> usize {
        self.operator.n_dim()
    }

    pub fn operator(&self) -> &OperatorSpectrum {
        &self.operator
    }

    pub fn rho(&self) -> &DVector<f64> {
        self.operator.rho()
    }

    pub fn coupling(&self) -> &OrthogonalCoupling {
        &self.coupling
    }

    pub fn prior(&self) -> &GaussianSequenceMeasure {
        &self.prior
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn with_noise(&self, noise: NoiseModel) -> Result<Self> {
        Self::new(
            self.operator.clone(),
            self.coupling.clone(),
            self.prior.clone(),
            noise,
        )
    }

    pub fn with_prior(&self, prior: GaussianSequenceMeasure) -> Result<Self> {
        Self::new(
            self.operator.clone(),
            self.coupling.clone(),
            prior,
            self.noise.clone(),
        )
    }

    /// e-coordinates of `G u`.
    pub fn forward_apply(&self, u: &DVector<f64>, basis: Basis) -> Result<DVector<f64>> {
        check_dim("forward_apply input", u.len(), self.n_dim())?;
        let ue = match basis {
            Basis::E => u.clone(),
            Basis::Phi => self.coupling.to_e(u),
        };
        Ok(ue.component_mul(self.rho()))
    }

    /// `diag(ρ)·T`, the forward map from φ- to e-coordinates.
    pub fn forward_matrix(&self) -> DMatrix<f64> {
        let mut m = self.coupling.t_matrix().clone();
        for (i, r) in self.rho().iter().enumerate() {
            m.row_mut(i).scale_mut(*r);
        }
        m
    }

    /// `y = G u0 + ζ^{1/2} z / √n` with `z` from the stream seeded by `seed`.
    pub fn simulate_data(&self, u0: &DVector<f64>, n_level: f64, seed: u64) -> Result<DataSample> {
        if !(n_level > 0.0) || !n_level.is_finite() {
            return Err(LabError::param("n_level must be positive and finite"));
        }
        let signal = self.forward_apply(u0, Basis::Phi)?;
        let z = standard_normal_vector(&mut rng_from_seed(seed), self.n_dim());
        let y = signal + self.noise.apply_sqrt(&z) / n_level.sqrt();
        Ok(DataSample {
            y,
            n_level,
            u0: u0.clone(),
            u0_basis: Basis::Phi,
            seed,
        })
    }

    /// `count × N` matrix whose rows are independent prior draws in
    /// φ-coordinates.
    pub fn sample_prior(&self, count: usize, seed: u64) -> Result<DMatrix<f64>> {
        if count == 0 {
            return Err(LabError::param("count must be at least 1"));
        }
        let mut rng = rng_from_seed(seed);
        let n = self.n_dim();
        let mut out = DMatrix::zeros(count, n);
        for i in 0..count {
            let draw = self.prior.sample(&mut rng);
            out.row_mut(i).copy_from(&draw.transpose());
        }
        Ok(out)
    }
}
