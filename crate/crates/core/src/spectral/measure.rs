use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, LabError, Result};
use crate::linalg::{symmetric_eigen_desc, SpdFactor};
use crate::rng::{rng_from_seed, LabRng};

use super::coupling::{make_coupling, CouplingKind, OrthogonalCoupling};
use super::spectrum::OperatorSpectrum;

/// Coordinate system a vector or measure is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    /// SVD basis of the forward map.
    E,
    /// Prior eigenbasis, the columns of the coupling.
    Phi,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeasureTag {
    /// `λ_k = (1+k²)^{-1/2-δ}`.
    PriorFamily {
        delta: f64,
    },
    ColoredNoise {
        r: f64,
    },
    HilbertScalePrior {
        t: f64,
        l: f64,
    },
    White,
    Explicit,
}

/// Centered Gaussian with independent coordinates along `basis`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSequenceMeasure {
    variances: DVector<f64>,
    basis: Basis,
    tag: MeasureTag,
}

impl GaussianSequenceMeasure {
    pub fn new(variances: DVector<f64>, basis: Basis, tag: MeasureTag) -> Result<Self> {
        if variances.is_empty() {
            return Err(LabError::param("measure needs at least one coordinate"));
        }
        if let Some((i, v)) = variances
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0) || !v.is_finite())
        {
            return Err(LabError::param(format!(
                "variance {} = {v} must be positive and finite",
                i + 1
            )));
        }
        Ok(Self {
            variances,
            basis,
            tag,
        })
    }

    pub fn explicit(variances: Vec<f64>, basis: Basis) -> Result<Self> {
        Self::new(DVector::from_vec(variances), basis, MeasureTag::Explicit)
    }

    pub fn prior_family(delta: f64, n_dim: usize) -> Result<Self> {
        if !delta.is_finite() {
            return Err(LabError::param("prior smoothness delta must be finite"));
        }
        let v = DVector::from_iterator(
            n_dim,
            (1..=n_dim).map(|k| (1.0 + (k * k) as f64).powf(-0.5 - delta)),
        );
        Self::new(v, Basis::Phi, MeasureTag::PriorFamily { delta })
    }

    pub fn white(n_dim: usize) -> Result<Self> {
        Self::new(
            DVector::from_element(n_dim, 1.0),
            Basis::E,
            MeasureTag::White,
        )
    }

    pub fn n_dim(&self) -> usize {
        self.variances.len()
    }

    pub fn variances(&self) -> &DVector<f64> {
        &self.variances
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn tag(&self) -> &MeasureTag {
        &self.tag
    }

    pub fn sample(&self, rng: &mut LabRng) -> DVector<f64> {
        DVector::from_iterator(
            self.n_dim(),
            self.variances
                .iter()
                .map(|v| v.sqrt() * rng.sample::<f64, _>(StandardNormal)),
        )
    }
}

/// Anything that can draw i.i.d. samples of the prior in φ-coordinates.
pub trait PriorSampler: Sync {
    fn n_dim(&self) -> usize;
    fn sample(&self, rng: &mut LabRng) -> DVector<f64>;
}

impl PriorSampler for GaussianSequenceMeasure {
    fn n_dim(&self) -> usize {
        GaussianSequenceMeasure::n_dim(self)
    }

    fn sample(&self, rng: &mut LabRng) -> DVector<f64> {
        GaussianSequenceMeasure::sample(self, rng)
    }
}

/// Law of the standardized coordinate of a [`ScaledProductPrior`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoordinateLaw {
    Gaussian,
    /// Laplace with unit variance.
    Laplace,
    /// Student t with `nu` degrees of freedom, unscaled.
    StudentT {
        nu: f64,
    },
}

/// Independent coordinates `√λ_j · X_j` with `X_j` drawn from `law`; a
/// non-Gaussian prior for the importance-sampling path.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledProductPrior {
    pub scales: DVector<f64>,
    pub law: CoordinateLaw,
}

impl ScaledProductPrior {
    pub fn new(variances: &DVector<f64>, law: CoordinateLaw) -> Result<Self> {
        if let CoordinateLaw::StudentT { nu } = law {
            if !(nu > 0.0) {
                return Err(LabError::param(
                    "Student t degrees of freedom must be positive",
                ));
            }
        }
        if variances.iter().any(|v| !(*v > 0.0)) {
            return Err(LabError::param("prior variances must be positive"));
        }
        Ok(Self {
            scales: variances.map(f64::sqrt),
            law,
        })
    }
}

impl PriorSampler for ScaledProductPrior {
    fn n_dim(&self) -> usize {
        self.scales.len()
    }

    fn sample(&self, rng: &mut LabRng) -> DVector<f64> {
        self.scales.map(|s| {
            let x = match self.law {
                CoordinateLaw::Gaussian => rng.sample::<f64, _>(StandardNormal),
                CoordinateLaw::Laplace => {
                    let u: f64 = rng.random_range(-0.5..0.5);
                    -u.signum() * (1.0 - 2.0 * u.abs()).ln() / std::f64::consts::SQRT_2
                }
                CoordinateLaw::StudentT { nu } => {
                    let z: f64 = rng.sample(StandardNormal);
                    let chi: f64 = rng.sample(rand_distr::ChiSquared::new(nu).expect("nu > 0"));
                    z / (chi / nu).sqrt()
                }
            };
            s * x
        })
    }
}

/// Dense SPD noise covariance with cached spectral factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNoise {
    cov: DMatrix<f64>,
    factor: SpdFactor,
    sqrt: DMatrix<f64>,
    inv_sqrt: DMatrix<f64>,
    inverse: DMatrix<f64>,
}

impl DenseNoise {
    pub fn new(cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != cov.ncols() {
            return Err(LabError::param("noise covariance must be square"));
        }
        let asym = (&cov - cov.transpose()).amax();
        if asym > 1e-10 * cov.amax().max(f64::MIN_POSITIVE) {
            return Err(LabError::param("noise covariance must be symmetric"));
        }
        let factor = SpdFactor::new(&cov)?;
        let sqrt = factor.power(0.5);
        let inv_sqrt = factor.power(-0.5);
        let inverse = factor.power(-1.0);
        Ok(Self {
            cov,
            factor,
            sqrt,
            inv_sqrt,
            inverse,
        })
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn factor(&self) -> &SpdFactor {
        &self.factor
    }

    pub fn sqrt(&self) -> &DMatrix<f64> {
        &self.sqrt
    }

    pub fn inv_sqrt(&self) -> &DMatrix<f64> {
        &self.inv_sqrt
    }

    pub fn inverse(&self) -> &DMatrix<f64> {
        &self.inverse
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseModel {
    /// Independent coordinates along e with the given variances.
    Diagonal(GaussianSequenceMeasure),
    Dense(DenseNoise),
}

impl NoiseModel {
    pub fn white(n_dim: usize) -> Result<Self> {
        Ok(NoiseModel::Diagonal(GaussianSequenceMeasure::white(n_dim)?))
    }

    pub fn diagonal(variances: Vec<f64>) -> Result<Self> {
        Ok(NoiseModel::Diagonal(GaussianSequenceMeasure::explicit(
            variances,
            Basis::E,
        )?))
    }

    pub fn dense(cov: DMatrix<f64>) -> Result<Self> {
        Ok(NoiseModel::Dense(DenseNoise::new(cov)?))
    }

    pub fn n_dim(&self) -> usize {
        match self {
            NoiseModel::Diagonal(m) => m.n_dim(),
            NoiseModel::Dense(d) => d.cov.nrows(),
        }
    }

    pub fn is_white(&self) -> bool {
        match self {
            NoiseModel::Diagonal(m) => m.variances().iter().all(|&v| v == 1.0),
            NoiseModel::Dense(_) => false,
        }
    }

    /// Dense covariance matrix `ζ`.
    pub fn covariance(&self) -> DMatrix<f64> {
        match self {
            NoiseModel::Diagonal(m) => DMatrix::from_diagonal(m.variances()),
            NoiseModel::Dense(d) => d.cov.clone(),
        }
    }

    /// Eigenvalues of `ζ` in non-increasing order.
    pub fn eigenvalues(&self) -> DVector<f64> {
        match self {
            NoiseModel::Diagonal(m) => {
                let mut v: Vec<f64> = m.variances().iter().copied().collect();
                v.sort_by(|a, b| b.total_cmp(a));
                DVector::from_vec(v)
            }
            NoiseModel::Dense(d) => d.factor.eigenvalues.clone(),
        }
    }

    pub fn condition_number(&self) -> f64 {
        let ev = self.eigenvalues();
        ev[0] / ev[ev.len() - 1]
    }

    /// `ζ^{1/2} x`.
    pub fn apply_sqrt(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            NoiseModel::Diagonal(m) => x.zip_map(m.variances(), |a, v| a * v.sqrt()),
            NoiseModel::Dense(d) => &d.sqrt * x,
        }
    }

    /// `ζ^{-1/2} x`.
    pub fn whiten(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            NoiseModel::Diagonal(m) => x.zip_map(m.variances(), |a, v| a / v.sqrt()),
            NoiseModel::Dense(d) => &d.inv_sqrt * x,
        }
    }

    /// `ζ^{-1/2} M`.
    pub fn whiten_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            NoiseModel::Diagonal(meas) => {
                let mut out = m.clone();
                for (i, v) in meas.variances().iter().enumerate() {
                    out.row_mut(i).unscale_mut(v.sqrt());
                }
                out
            }
            NoiseModel::Dense(d) => &d.inv_sqrt * m,
        }
    }

    /// `ζ^{1/2} M`.
    pub fn sqrt_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            NoiseModel::Diagonal(meas) => {
                let mut out = m.clone();
                for (i, v) in meas.variances().iter().enumerate() {
                    out.row_mut(i).scale_mut(v.sqrt());
                }
                out
            }
            NoiseModel::Dense(d) => &d.sqrt * m,
        }
    }

    /// Cameron-Martin pairing `⟨ζ^{-1/2}a, ζ^{-1/2}b⟩`.
    pub fn cm_inner(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        match self {
            NoiseModel::Diagonal(m) => a
                .iter()
                .zip(b.iter())
                .zip(m.variances().iter())
                .map(|((x, y), v)| x * y / v)
                .sum(),
            NoiseModel::Dense(d) => a.dot(&(&d.inverse * b)),
        }
    }

    pub fn cm_norm_sq(&self, a: &DVector<f64>) -> f64 {
        self.cm_inner(a, a)
    }
}

fn check_square(what: &str, m: &DMatrix<f64>, n: usize) -> Result<()> {
    check_dim(&format!("{what} rows"), m.nrows(), n)?;
    check_dim(&format!("{what} cols"), m.ncols(), n)
}

/// Noise covariance `ζ = (G^{-r} + K₁)^{-2}`.
pub fn colored_noise(spectrum: &OperatorSpectrum, r: f64, k1: &DMatrix<f64>) -> Result<NoiseModel> {
    let n = spectrum.n_dim();
    check_square("K1", k1, n)?;
    let mut base = k1.clone();
    for (i, rho) in spectrum.rho().iter().enumerate() {
        base[(i, i)] += rho.powf(-r);
    }
    let factor = SpdFactor::new(&base)?;
    let zeta = factor.power(-2.0);
    let noise = DenseNoise::new(zeta)?;
    Ok(NoiseModel::Dense(noise))
}

/// Gaussian measure view of a colored noise model: its eigenvalues, tagged.
pub fn colored_noise_measure(noise: &NoiseModel, r: f64) -> Result<GaussianSequenceMeasure> {
    GaussianSequenceMeasure::new(
        noise.eigenvalues(),
        Basis::E,
        MeasureTag::ColoredNoise { r },
    )
}

/// Prior covariance `𝒞 = (G^{-t} + K₂)^{-l}`, returned as its eigenbasis
/// (an explicit coupling) and eigenvalues in non-increasing order.
pub fn hilbert_scale_prior(
    spectrum: &OperatorSpectrum,
    t: f64,
    l: f64,
    k2: &DMatrix<f64>,
) -> Result<(OrthogonalCoupling, GaussianSequenceMeasure)> {
    let n = spectrum.n_dim();
    check_square("K2", k2, n)?;
    if !(l > 0.0) {
        return Err(LabError::param("Hilbert-scale exponent l must be positive"));
    }
    let mut base = k2.clone();
    for (i, rho) in spectrum.rho().iter().enumerate() {
        base[(i, i)] += rho.powf(-t);
    }
    let c = SpdFactor::new(&base)?.power(-l);
    let (vals, mut vecs) = symmetric_eigen_desc(&c)?;
    for mut col in vecs.column_iter_mut() {
        let idx = col.iamax();
        if col[idx] < 0.0 {
            col.neg_mut();
        }
    }
    let coupling = make_coupling(&CouplingKind::Explicit { t: vecs }, n, 0)?;
    let prior =
        GaussianSequenceMeasure::new(vals, Basis::Phi, MeasureTag::HilbertScalePrior { t, l })?;
    Ok((coupling, prior))
}

/// Seeded symmetric diagonally dominant matrix with entries of order
/// `scale`; a default instance for the `K₁`, `K₂` perturbations.
pub fn random_spd(n: usize, scale: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_from_seed(seed);
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..j {
            let v: f64 = rng.random_range(-1.0..1.0) * scale / n as f64;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    for i in 0..n {
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| m[(i, j)].abs()).sum();
        m[(i, i)] = off + scale * rng.random_range(0.5..1.0);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::spectrum::{make_spectrum, SpectrumFamily};

    #[test]
    fn prior_family_values() {
        let m = GaussianSequenceMeasure::prior_family(1.0, 2).unwrap();
        assert!((m.variances()[0] - 2f64.powf(-1.5)).abs() < 1e-15);
        assert!((m.variances()[1] - 5f64.powf(-1.5)).abs() < 1e-15);
    }

    #[test]
    fn zero_variance_rejected() {
        assert!(matches!(
            GaussianSequenceMeasure::explicit(vec![1.0, 0.0], Basis::Phi),
            Err(LabError::Parameter(_))
        ));
    }

    #[test]
    fn colored_noise_eigenvalues_positive() {
        let s = make_spectrum(&SpectrumFamily::mild(1.0), 6).unwrap();
        let k1 = random_spd(6, 0.3, 5);
        let noise = colored_noise(&s, 0.5, &k1).unwrap();
        let meas = colored_noise_measure(&noise, 0.5).unwrap();
        assert!(meas.variances().iter().all(|&v| v > 0.0));
        // Eigenvalues of ζ are the inverse squares of those of G^{-r}+K₁.
        let mut base = k1.clone();
        for i in 0..6 {
            base[(i, i)] += s.rho()[i].powf(-0.5);
        }
        let a = crate::linalg::eigenvalues_desc(&base).unwrap();
        for i in 0..6 {
            let expected = a[5 - i].powi(-2);
            assert!((meas.variances()[i] - expected).abs() < 1e-12 * expected.max(1.0));
        }
    }

    #[test]
    fn hilbert_scale_prior_diagonalizes() {
        let s = make_spectrum(&SpectrumFamily::mild(1.0), 5).unwrap();
        let k2 = random_spd(5, 0.2, 9);
        let (coupling, prior) = hilbert_scale_prior(&s, 1.0, 2.0, &k2).unwrap();
        let mut base = k2.clone();
        for i in 0..5 {
            base[(i, i)] += s.rho()[i].powf(-1.0);
        }
        let c = SpdFactor::new(&base).unwrap().power(-2.0);
        let t = coupling.t_matrix();
        let d = t.transpose() * c * t;
        for i in 0..5 {
            assert!((d[(i, i)] - prior.variances()[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn random_spd_is_spd_and_reproducible() {
        let a = random_spd(8, 1.0, 3);
        assert_eq!(a, random_spd(8, 1.0, 3));
        assert!(SpdFactor::new(&a).is_ok());
    }

    #[test]
    fn dense_noise_roundtrip() {
        let cov = random_spd(4, 1.0, 1);
        let noise = NoiseModel::dense(cov.clone()).unwrap();
        let x = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let back = noise.apply_sqrt(&noise.whiten(&x));
        assert!((back - &x).norm() < 1e-12);
        let cm = noise.cm_norm_sq(&x);
        assert!((cm - noise.whiten(&x).norm_squared()).abs() < 1e-10);
    }

    #[test]
    fn laplace_has_unit_variance() {
        let prior = ScaledProductPrior::new(&DVector::from_element(1, 1.0), CoordinateLaw::Laplace)
            .unwrap();
        let mut rng = rng_from_seed(4);
        let n = 40_000;
        let var: f64 = (0..n)
            .map(|_| prior.sample(&mut rng)[0].powi(2))
            .sum::<f64>()
            / n as f64;
        assert!((var - 1.0).abs() < 0.05);
    }
}
