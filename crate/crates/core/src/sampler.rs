//! Network simulation from p(y|θ) and an exact enumeration oracle.
//!
//! The tie/no-tie sampler proposes toggles of a dyad drawn with equal
//! probability from the edge set or the non-edge set. The acceptance
//! ratio is the full Metropolis-Hastings ratio: the target part uses the
//! change statistic of the proposed dyad, and the proposal correction
//! accounts for the tie/no-tie set sizes changing with the toggle.

use nalgebra::{DMatrix, DVector};
use rand::RngExt;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::Network;
use crate::rng::derive_rng;
use crate::stats::{change_stats_into, suff_stats, ModelSpec, StatVector};

/// Controls for one simulation request: burn-in, thinning, number of
/// retained networks, root seed and the number of logical chains the
/// retained count is split over. The logical chain layout is part of the
/// sampling plan, so results are identical for any worker count.
#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub aux_iters: usize,
    pub thin: usize,
    pub count: usize,
    pub seed: u64,
    pub chains: usize,
}

impl SamplerConfig {
    pub fn new(aux_iters: usize, thin: usize, count: usize, seed: u64) -> Self {
        SamplerConfig {
            aux_iters,
            thin: thin.max(1),
            count: count.max(1),
            seed,
            chains: 1,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_chains(mut self, chains: usize) -> Self {
        self.chains = chains.max(1);
        self
    }

    pub fn with_count(mut self, count: usize) -> Self {
        self.count = count.max(1);
        self
    }
}

/// Sufficient statistics of networks simulated at one parameter value.
#[derive(Debug, Clone)]
pub struct StatSample {
    pub theta: DVector<f64>,
    /// count x p; row k is s(y_k).
    pub stats: DMatrix<f64>,
}

impl StatSample {
    pub fn count(&self) -> usize {
        self.stats.nrows()
    }

    pub fn mean(&self) -> DVector<f64> {
        self.stats.row_mean().transpose()
    }

    /// Sample covariance (denominator count - 1).
    pub fn covariance(&self) -> DMatrix<f64> {
        let k = self.stats.nrows();
        let mean = self.mean();
        let mut cov = DMatrix::zeros(self.stats.ncols(), self.stats.ncols());
        for r in 0..k {
            let d = self.stats.row(r).transpose() - &mean;
            cov += &d * d.transpose();
        }
        cov / (k.max(2) - 1) as f64
    }
}

/// A single tie/no-tie Metropolis-Hastings chain over networks, owning its
/// state so it can be stepped, retargeted (tempering) and warm-started.
pub struct TntChain {
    net: Network,
    spec: ModelSpec,
    theta: DVector<f64>,
    stats: DVector<f64>,
    delta: Vec<f64>,
    rng: ChaCha12Rng,
}

impl TntChain {
    pub fn new(
        net0: &Network,
        theta: DVector<f64>,
        spec: &ModelSpec,
        rng: ChaCha12Rng,
    ) -> Result<Self> {
        if theta.len() != spec.p() {
            return Err(Error::Config(format!(
                "theta has {} entries for {} terms",
                theta.len(),
                spec.p()
            )));
        }
        let stats = suff_stats(net0, spec)?;
        Ok(TntChain {
            net: net0.clone(),
            spec: spec.clone(),
            theta,
            stats,
            delta: vec![0.0; spec.p()],
            rng,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn stats(&self) -> &DVector<f64> {
        &self.stats
    }

    /// Retarget the chain (used between tempering rungs).
    pub fn set_theta(&mut self, theta: DVector<f64>) {
        debug_assert_eq!(theta.len(), self.spec.p());
        self.theta = theta;
    }

    /// Probability of proposing `dyad` in a state with `ne` edges; the
    /// empty proposal set falls back to a uniform dyad choice.
    fn proposal_prob(&self, is_edge: bool, ne: usize) -> f64 {
        let nd = self.net.dyad_count() as f64;
        let tie_part = if ne > 0 {
            if is_edge {
                0.5 / ne as f64
            } else {
                0.0
            }
        } else {
            0.5 / nd
        };
        let no_tie = self.net.dyad_count() - ne;
        let notie_part = if no_tie > 0 {
            if is_edge {
                0.0
            } else {
                0.5 / no_tie as f64
            }
        } else {
            0.5 / nd
        };
        tie_part + notie_part
    }

    /// One proposal/accept step. Returns true on acceptance.
    pub fn step(&mut self) -> bool {
        let n = self.net.n();
        let ne = self.net.edge_count();
        let nd = self.net.dyad_count();

        let pick_tie_set = self.rng.random::<bool>();
        let (i, j) = if pick_tie_set && ne > 0 {
            let (a, b) = self.net.edges()[self.rng.random_range(0..ne)];
            (a as usize, b as usize)
        } else if !pick_tie_set && ne == nd {
            // All edges present: non-edge set empty, fall back to uniform.
            let (a, b) = self.net.edges()[self.rng.random_range(0..ne)];
            (a as usize, b as usize)
        } else {
            // Uniform dyad, rejecting edges when the non-tie branch chose.
            loop {
                let i = self.rng.random_range(0..n);
                let j = self.rng.random_range(0..n);
                if i == j {
                    continue;
                }
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                if pick_tie_set || !self.net.has_edge(a, b) {
                    break (a, b);
                }
            }
        };

        change_stats_into(&self.net, i, j, &self.spec, &mut self.delta)
            .expect("valid dyad by construction");
        let dot: f64 = self
            .delta
            .iter()
            .zip(self.theta.iter())
            .map(|(d, t)| d * t)
            .sum();
        let is_edge = self.net.has_edge(i, j);
        let target = if is_edge { -dot } else { dot };

        let q_fwd = self.proposal_prob(is_edge, ne);
        let ne_after = if is_edge { ne - 1 } else { ne + 1 };
        let q_rev = self.proposal_prob(!is_edge, ne_after);
        let log_accept = target + q_rev.ln() - q_fwd.ln();

        if log_accept >= 0.0 || self.rng.random::<f64>().ln() < log_accept {
            self.net.toggle(i, j).expect("valid dyad");
            for (k, d) in self.delta.iter().enumerate() {
                if is_edge {
                    self.stats[k] -= d;
                } else {
                    self.stats[k] += d;
                }
            }
            true
        } else {
            false
        }
    }

    pub fn run(&mut self, iters: usize) {
        for _ in 0..iters {
            self.step();
        }
    }

    /// Burn `aux_iters`, then record the statistics of every `thin`-th
    /// state, `count` times.
    pub fn collect(&mut self, aux_iters: usize, thin: usize, count: usize) -> DMatrix<f64> {
        self.run(aux_iters);
        let mut out = DMatrix::zeros(count, self.spec.p());
        for k in 0..count {
            self.run(thin.max(1));
            for c in 0..self.spec.p() {
                out[(k, c)] = self.stats[c];
            }
        }
        out
    }
}

/// Simulate `cfg.count` networks from p(y|θ) starting at `net0` and return
/// their sufficient statistics. With `cfg.chains > 1` the count is split
/// over independent logical chains (seeds derived by chain index, results
/// merged in chain order), which parallelizes without changing output.
pub fn tnt_sample(
    net0: &Network,
    theta: &DVector<f64>,
    spec: &ModelSpec,
    cfg: &SamplerConfig,
) -> Result<StatSample> {
    let chains = cfg.chains.min(cfg.count).max(1);
    let counts: Vec<usize> = (0..chains)
        .map(|c| cfg.count / chains + usize::from(c < cfg.count % chains))
        .collect();

    let run_chain = |c: usize| -> Result<DMatrix<f64>> {
        let rng = derive_rng(cfg.seed, "tnt", c as u64);
        let mut chain = TntChain::new(net0, theta.clone(), spec, rng)?;
        Ok(chain.collect(cfg.aux_iters, cfg.thin, counts[c]))
    };

    let blocks: Vec<DMatrix<f64>> = if chains > 1 {
        (0..chains)
            .into_par_iter()
            .map(run_chain)
            .collect::<Result<Vec<_>>>()?
    } else {
        vec![run_chain(0)?]
    };

    let mut stats = DMatrix::zeros(cfg.count, spec.p());
    let mut row = 0;
    for block in blocks {
        for r in 0..block.nrows() {
            stats.row_mut(row).copy_from(&block.row(r));
            row += 1;
        }
    }
    Ok(StatSample {
        theta: theta.clone(),
        stats,
    })
}

const ENUM_MAX_NODES: usize = 5;

/// Sufficient statistics of every graph on n nodes (n <= 5), the basis of
/// the exact oracle: row g of `stats` is s(y) for the graph whose dyads
/// are the bits of g in canonical dyad order.
pub struct EnumTable {
    pub n: usize,
    pub stats: DMatrix<f64>,
}

impl EnumTable {
    pub fn build(n: usize, spec: &ModelSpec) -> Result<Self> {
        if n > ENUM_MAX_NODES {
            return Err(Error::TooLarge {
                what: "graph enumeration",
                n,
                max: ENUM_MAX_NODES,
            });
        }
        let dyads = crate::graph::DyadSet::all(n);
        let total = 1usize << dyads.len();
        let mut stats = DMatrix::zeros(total, spec.p());
        for mask in 0..total {
            let mut net = Network::empty(n);
            for (b, (i, j)) in dyads.iter().enumerate() {
                if mask >> b & 1 == 1 {
                    net.toggle(i, j)?;
                }
            }
            let s = suff_stats(&net, spec)?;
            for c in 0..spec.p() {
                stats[(mask, c)] = s[c];
            }
        }
        Ok(EnumTable { n, stats })
    }

    /// log z(θ) by summation over all graphs.
    pub fn log_z(&self, theta: &DVector<f64>) -> f64 {
        let scores = &self.stats * theta;
        log_sum_exp(scores.as_slice())
    }

    /// Exact E[s(y)] and cov[s(y)] under p(y|θ).
    pub fn moments(&self, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let p = self.stats.ncols();
        let scores = &self.stats * theta;
        let lse = log_sum_exp(scores.as_slice());
        let mut mean = DVector::zeros(p);
        let mut second = DMatrix::zeros(p, p);
        for g in 0..self.stats.nrows() {
            let w = (scores[g] - lse).exp();
            let row = self.stats.row(g).transpose();
            mean += w * &row;
            second += w * &row * row.transpose();
        }
        let cov = second - &mean * mean.transpose();
        (mean, cov)
    }

    /// Exact log likelihood θᵀ s(y) - log z(θ).
    pub fn log_lik(&self, s_y: &DVector<f64>, theta: &DVector<f64>) -> f64 {
        theta.dot(s_y) - self.log_z(theta)
    }

    /// Exact maximum likelihood estimate given observed statistics: a
    /// coarse grid scan refined by Newton on the exact likelihood surface.
    /// Errors when s(y) lies on the boundary of the convex hull (no MLE).
    pub fn exact_mle(&self, s_y: &DVector<f64>) -> Result<DVector<f64>> {
        let p = self.stats.ncols();
        let mut best = DVector::zeros(p);
        let mut best_ll = f64::NEG_INFINITY;
        let grid: Vec<f64> = (-8..=8).map(|k| k as f64 * 0.5).collect();
        let mut scan = vec![0usize; p];
        loop {
            let theta = DVector::from_iterator(p, scan.iter().map(|&g| grid[g]));
            let ll = self.log_lik(s_y, &theta);
            if ll > best_ll {
                best_ll = ll;
                best = theta;
            }
            let mut k = 0;
            loop {
                if k == p {
                    break;
                }
                scan[k] += 1;
                if scan[k] < grid.len() {
                    break;
                }
                scan[k] = 0;
                k += 1;
            }
            if k == p {
                break;
            }
        }
        // Newton refinement: gradient s(y) - E[s], Hessian -cov[s].
        let mut theta = best;
        for _ in 0..200 {
            let (mean, cov) = self.moments(&theta);
            let grad = s_y - &mean;
            if grad.amax() < 1e-12 {
                return Ok(theta);
            }
            let chol = nalgebra::Cholesky::new(cov)
                .ok_or_else(|| Error::Degenerate("singular exact covariance".into()))?;
            let step = chol.solve(&grad);
            let cap = 1.0 / step.amax().max(1.0);
            theta += step * cap.min(1.0);
            if theta.amax() > 50.0 {
                return Err(Error::Separation {
                    term: "exact MLE diverged".into(),
                });
            }
        }
        Err(Error::NonConvergence {
            what: "exact MLE".into(),
            iters: 200,
        })
    }

    /// Exact posterior density over a 1-D grid for single-parameter
    /// models, normalized to integrate to one. Returns (grid, density).
    pub fn posterior_grid_1d(
        &self,
        s_y: &DVector<f64>,
        prior: &crate::variational::GaussianPrior,
        lo: f64,
        hi: f64,
        points: usize,
    ) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(self.stats.ncols(), 1, "1-D grid needs a one-term model");
        let step = (hi - lo) / (points - 1) as f64;
        let grid: Vec<f64> = (0..points).map(|k| lo + step * k as f64).collect();
        let mut logd: Vec<f64> = grid
            .iter()
            .map(|&t| {
                let theta = DVector::from_element(1, t);
                self.log_lik(s_y, &theta) + prior.log_density(&theta)
            })
            .collect();
        let m = logd.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in logd.iter_mut() {
            *v = (*v - m).exp();
            total += *v;
        }
        total *= step;
        for v in logd.iter_mut() {
            *v /= total;
        }
        (grid, logd)
    }
}

/// Exact normalizing constant and moments on tiny graphs.
pub struct EnumOracle {
    pub log_z: f64,
    pub mean_stats: StatVector,
    pub cov_stats: DMatrix<f64>,
}

/// Enumerate all 2^{n(n-1)/2} graphs (n <= 5) and return exact
/// log z(θ), E[s(y)] and cov[s(y)].
pub fn enumerate_oracle(n: usize, theta: &DVector<f64>, spec: &ModelSpec) -> Result<EnumOracle> {
    let table = EnumTable::build(n, spec)?;
    let log_z = table.log_z(theta);
    let (mean_stats, cov_stats) = table.moments(theta);
    Ok(EnumOracle {
        log_z,
        mean_stats,
        cov_stats,
    })
}

/// max + log Σ exp(x - max), tolerating -inf entries.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
