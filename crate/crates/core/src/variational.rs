//! Gaussian variational family q(θ) = N(μ, CCᵀ), Gaussian priors, and
//! single-sample evidence lower bound estimates.
//!
//! The covariance is carried as its lower Cholesky factor C with positive
//! diagonal. Quadratic forms and log-determinants run through triangular
//! solves; Σ is materialized only when a caller asks for it. For
//! stochastic optimization the factor has a second view C' with logged
//! diagonal so that unconstrained updates keep the diagonal positive;
//! `vech` ordering is column-major over the lower triangle throughout.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Position of (i, j), i >= j, in column-major lower-triangle vech order.
#[inline]
pub fn vech_index(p: usize, i: usize, j: usize) -> usize {
    debug_assert!(j <= i && i < p);
    j * p - j * (j - 1) / 2 + (i - j)
}

/// Stack the lower triangle of a square matrix column by column.
pub fn vech(m: &DMatrix<f64>) -> DVector<f64> {
    let p = m.nrows();
    let mut out = DVector::zeros(p * (p + 1) / 2);
    for j in 0..p {
        for i in j..p {
            out[vech_index(p, i, j)] = m[(i, j)];
        }
    }
    out
}

/// Rebuild a lower-triangular matrix from its vech.
pub fn unvech_lower(v: &DVector<f64>, p: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(p, p);
    for j in 0..p {
        for i in j..p {
            m[(i, j)] = v[vech_index(p, i, j)];
        }
    }
    m
}

/// Gaussian prior θ ~ N(μ₀, Σ₀).
#[derive(Debug, Clone)]
pub struct GaussianPrior {
    mu0: DVector<f64>,
    sigma0: DMatrix<f64>,
    inv: DMatrix<f64>,
    log_det: f64,
}

impl GaussianPrior {
    pub fn new(mu0: DVector<f64>, sigma0: DMatrix<f64>) -> Result<Self> {
        let chol = nalgebra::Cholesky::new(sigma0.clone())
            .ok_or_else(|| Error::NotPositiveDefinite("prior covariance".into()))?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let inv = chol.inverse();
        Ok(GaussianPrior {
            mu0,
            sigma0,
            inv,
            log_det,
        })
    }

    /// The default vague prior N(0, σ² I).
    pub fn isotropic(p: usize, variance: f64) -> Self {
        GaussianPrior::new(DVector::zeros(p), DMatrix::identity(p, p) * variance)
            .expect("isotropic covariance is positive definite")
    }

    pub fn p(&self) -> usize {
        self.mu0.len()
    }

    pub fn mu0(&self) -> &DVector<f64> {
        &self.mu0
    }

    pub fn sigma0(&self) -> &DMatrix<f64> {
        &self.sigma0
    }

    pub fn inv_sigma0(&self) -> &DMatrix<f64> {
        &self.inv
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// (θ - μ₀)ᵀ Σ₀⁻¹ (θ - μ₀).
    pub fn quad_form(&self, theta: &DVector<f64>) -> f64 {
        let d = theta - &self.mu0;
        (&self.inv * &d).dot(&d)
    }

    pub fn log_density(&self, theta: &DVector<f64>) -> f64 {
        -0.5 * self.p() as f64 * (2.0 * std::f64::consts::PI).ln()
            - 0.5 * self.log_det
            - 0.5 * self.quad_form(theta)
    }

    /// ∇_θ log p(θ) = -Σ₀⁻¹(θ - μ₀).
    pub fn grad_log_density(&self, theta: &DVector<f64>) -> DVector<f64> {
        -(&self.inv * (theta - &self.mu0))
    }
}

/// Gaussian variational approximation with mean μ and lower Cholesky
/// factor C (positive diagonal) of the covariance.
#[derive(Debug, Clone)]
pub struct GaussianVariational {
    mu: DVector<f64>,
    c: DMatrix<f64>,
}

/// Gradients of log q at one point, for gradient checking and score-based
/// estimators.
pub struct LogQGrads {
    pub theta: DVector<f64>,
    pub mu: DVector<f64>,
    pub vech_c: DVector<f64>,
}

impl GaussianVariational {
    pub fn new(mu: DVector<f64>, c: DMatrix<f64>) -> Result<Self> {
        let p = mu.len();
        if c.nrows() != p || c.ncols() != p {
            return Err(Error::Config("Cholesky factor shape mismatch".into()));
        }
        for j in 0..p {
            if c[(j, j)] <= 0.0 || !c[(j, j)].is_finite() {
                return Err(Error::NotPositiveDefinite(
                    "variational Cholesky diagonal".into(),
                ));
            }
            for i in 0..j {
                if c[(i, j)] != 0.0 {
                    return Err(Error::Config("Cholesky factor is not lower-triangular".into()));
                }
            }
        }
        Ok(GaussianVariational { mu, c })
    }

    pub fn from_mean_cov(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let chol = nalgebra::Cholesky::new(sigma)
            .ok_or_else(|| Error::NotPositiveDefinite("variational covariance".into()))?;
        GaussianVariational::new(mu, chol.l())
    }

    /// N(center, s² I).
    pub fn isotropic(center: DVector<f64>, variance: f64) -> Self {
        let p = center.len();
        GaussianVariational::new(center, DMatrix::identity(p, p) * variance.sqrt())
            .expect("isotropic factor is valid")
    }

    pub fn p(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn sigma(&self) -> DMatrix<f64> {
        &self.c * self.c.transpose()
    }

    pub fn log_det_c(&self) -> f64 {
        self.c.diagonal().iter().map(|d| d.ln()).sum()
    }

    pub fn marginal_sd(&self, k: usize) -> f64 {
        self.c.row(k).norm()
    }

    /// θ = C s + μ (the reparameterization map).
    pub fn sample_theta(&self, s: &DVector<f64>) -> DVector<f64> {
        &self.c * s + &self.mu
    }

    /// Draw s ~ N(0, I) and return (s, Cs + μ).
    pub fn draw<R: Rng>(&self, rng: &mut R) -> (DVector<f64>, DVector<f64>) {
        let s = standard_normal_vector(self.p(), rng);
        let theta = self.sample_theta(&s);
        (s, theta)
    }

    /// C⁻¹ (θ - μ), the whitened coordinate of θ.
    pub fn whiten(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.c
            .solve_lower_triangular(&(theta - &self.mu))
            .expect("positive diagonal guarantees solvability")
    }

    /// C⁻ᵀ v.
    pub fn solve_ct(&self, v: &DVector<f64>) -> DVector<f64> {
        self.c
            .tr_solve_lower_triangular(v)
            .expect("positive diagonal guarantees solvability")
    }

    /// Exact multivariate normal log density.
    pub fn log_q(&self, theta: &DVector<f64>) -> f64 {
        let s = self.whiten(theta);
        -0.5 * self.p() as f64 * (2.0 * std::f64::consts::PI).ln() - self.log_det_c()
            - 0.5 * s.norm_squared()
    }

    /// Gradients of log q with respect to θ, μ and vech(C).
    pub fn log_q_grads(&self, theta: &DVector<f64>) -> LogQGrads {
        let p = self.p();
        let s = self.whiten(theta);
        let ct_inv_s = self.solve_ct(&s);
        let mut outer = &s * s.transpose();
        for k in 0..p {
            outer[(k, k)] -= 1.0;
        }
        let m = self
            .c
            .tr_solve_lower_triangular(&outer)
            .expect("triangular solve");
        LogQGrads {
            theta: -&ct_inv_s,
            mu: ct_inv_s,
            vech_c: vech(&m),
        }
    }

    /// vech(C') where C' has the log of C's diagonal and C's off-diagonal.
    pub fn to_log_diag(&self) -> DVector<f64> {
        let p = self.p();
        let mut v = vech(&self.c);
        for j in 0..p {
            let k = vech_index(p, j, j);
            v[k] = v[k].ln();
        }
        v
    }

    /// Rebuild from (μ, vech(C')). Inverse of [`Self::to_log_diag`].
    pub fn from_log_diag(mu: DVector<f64>, vech_cprime: &DVector<f64>) -> Result<Self> {
        let p = mu.len();
        let mut c = unvech_lower(vech_cprime, p);
        for j in 0..p {
            c[(j, j)] = c[(j, j)].exp();
        }
        GaussianVariational::new(mu, c)
    }

    /// Diagonal of D_C = diag(vech(C̃)): C's diagonal at diagonal vech
    /// positions, ones elsewhere. Chain rule factor between vech(C) and
    /// vech(C') gradients.
    pub fn d_c_diag(&self) -> DVector<f64> {
        let p = self.p();
        let mut d = DVector::from_element(p * (p + 1) / 2, 1.0);
        for j in 0..p {
            d[vech_index(p, j, j)] = self.c[(j, j)];
        }
        d
    }
}

/// A length-p vector of independent standard normals.
pub fn standard_normal_vector<R: Rng>(p: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_iterator(p, (0..p).map(|_| rng.sample::<f64, _>(StandardNormal)))
}

/// Single-sample lower bound estimate at θ = Cs + μ:
/// log-likelihood + log prior - log q(θ), with the Gaussian entropy terms
/// expanded so the 2π constants cancel explicitly.
pub fn elbo_at(
    q: &GaussianVariational,
    s: &DVector<f64>,
    theta: &DVector<f64>,
    loglik_at_theta: f64,
    prior: &GaussianPrior,
) -> f64 {
    let p = q.p() as f64;
    loglik_at_theta
        + prior.log_density(theta)
        + q.log_det_c()
        + 0.5 * s.norm_squared()
        + 0.5 * p * (2.0 * std::f64::consts::PI).ln()
}
