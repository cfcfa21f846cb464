//! Sufficient statistics s(y) and per-dyad change statistics δ_s(y)_ij.
//!
//! Change statistics are the workhorse of everything downstream: the
//! sampler evaluates them millions of times, and the pseudolikelihood is a
//! logistic regression on them. They are computed incrementally from the
//! degree array and neighbor intersections, never by recomputing s(y).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{DyadSet, Network};

/// A single model term. Decay parameters are fixed constants, not
/// estimated.
#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    /// Number of edges.
    Edges,
    /// Geometrically weighted edgewise shared partners with decay φ_v.
    Gwesp(f64),
    /// Geometrically weighted degree with decay φ_u.
    Gwd(f64),
    /// Number of edges whose endpoints share the named attribute value.
    NodeMatch(String),
}

impl Term {
    pub fn label(&self) -> String {
        match self {
            Term::Edges => "edges".into(),
            Term::Gwesp(d) => format!("gwesp:{d}"),
            Term::Gwd(d) => format!("gwd:{d}"),
            Term::NodeMatch(a) => format!("nodematch:{a}"),
        }
    }

    fn parse(token: &str) -> Result<Term> {
        let token = token.trim();
        if token == "edges" {
            return Ok(Term::Edges);
        }
        if let Some(rest) = token.strip_prefix("gwesp:") {
            let d: f64 = rest
                .parse()
                .map_err(|_| Error::Config(format!("bad gwesp decay `{rest}`")))?;
            if !d.is_finite() || d < 0.0 {
                return Err(Error::Config(format!("gwesp decay must be >= 0, got {d}")));
            }
            return Ok(Term::Gwesp(d));
        }
        if let Some(rest) = token.strip_prefix("gwd:") {
            let d: f64 = rest
                .parse()
                .map_err(|_| Error::Config(format!("bad gwd decay `{rest}`")))?;
            if !d.is_finite() || d < 0.0 {
                return Err(Error::Config(format!("gwd decay must be >= 0, got {d}")));
            }
            return Ok(Term::Gwd(d));
        }
        if let Some(rest) = token.strip_prefix("nodematch:") {
            if rest.is_empty() {
                return Err(Error::Config("nodematch needs an attribute name".into()));
            }
            return Ok(Term::NodeMatch(rest.to_string()));
        }
        Err(Error::Config(format!("unknown term `{token}`")))
    }
}

/// Ordered list of model terms defining s(y) ∈ R^p.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    terms: Vec<Term>,
}

/// Vector of sufficient statistics (or change statistics) for one model.
pub type StatVector = DVector<f64>;

impl ModelSpec {
    pub fn new(terms: Vec<Term>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Config("model needs at least one term".into()));
        }
        Ok(ModelSpec { terms })
    }

    /// Parse a comma-separated term list, e.g.
    /// `edges,gwesp:0.2,gwd:0.8,nodematch:drugs`.
    pub fn parse(text: &str) -> Result<Self> {
        let terms = text
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(Term::parse)
            .collect::<Result<Vec<_>>>()?;
        ModelSpec::new(terms)
    }

    pub fn p(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn labels(&self) -> Vec<String> {
        self.terms.iter().map(Term::label).collect()
    }

    pub fn canonical_string(&self) -> String {
        self.labels().join(",")
    }

    /// True when the first term is the edge count (required by the
    /// edges-anchored tempering schedule and related machinery).
    pub fn edges_first(&self) -> bool {
        matches!(self.terms.first(), Some(Term::Edges))
    }

    /// Check that every attribute referenced by the spec exists on `net`.
    pub fn validate_for(&self, net: &Network) -> Result<()> {
        for term in &self.terms {
            if let Term::NodeMatch(name) = term {
                net.attribute(name)?;
            }
        }
        Ok(())
    }
}

/// Geometric weight e^φ {1 - (1 - e^{-φ})^ℓ} for counts at level ℓ >= 1;
/// zero at ℓ = 0.
#[inline]
fn gw_weight(decay: f64, level: usize) -> f64 {
    if level == 0 {
        return 0.0;
    }
    let base = 1.0 - (-decay).exp();
    decay.exp() * (1.0 - base.powi(level as i32))
}

/// Evaluate s(y) for `spec` on `net`.
pub fn suff_stats(net: &Network, spec: &ModelSpec) -> Result<StatVector> {
    spec.validate_for(net)?;
    let mut out = DVector::zeros(spec.p());
    for (k, term) in spec.terms().iter().enumerate() {
        out[k] = match term {
            Term::Edges => net.edge_count() as f64,
            Term::Gwd(decay) => (0..net.n()).map(|i| gw_weight(*decay, net.degree(i))).sum(),
            Term::Gwesp(decay) => net
                .edges()
                .iter()
                .map(|&(i, j)| gw_weight(*decay, net.shared_partners(i as usize, j as usize)))
                .sum(),
            Term::NodeMatch(name) => {
                let attr = net.attribute(name)?;
                net.edges()
                    .iter()
                    .filter(|&&(i, j)| attr[i as usize] == attr[j as usize])
                    .count() as f64
            }
        };
    }
    Ok(out)
}

/// Write δ_s(y)_ij = s(y with y_ij = 1) - s(y with y_ij = 0) into `out`,
/// holding the rest of the network fixed. The current state of dyad
/// (i, j) does not matter; counts are taken relative to the network with
/// that dyad absent.
pub fn change_stats_into(
    net: &Network,
    i: usize,
    j: usize,
    spec: &ModelSpec,
    out: &mut [f64],
) -> Result<()> {
    if i == j || i >= net.n() || j >= net.n() {
        return Err(Error::InvalidDyad { i, j });
    }
    debug_assert_eq!(out.len(), spec.p());
    let present = net.has_edge(i, j) as usize;
    for (k, term) in spec.terms().iter().enumerate() {
        out[k] = match term {
            Term::Edges => 1.0,
            Term::NodeMatch(name) => {
                let attr = net.attribute(name)?;
                (attr[i] == attr[j]) as usize as f64
            }
            Term::Gwd(decay) => {
                // Degrees of the endpoints with dyad (i, j) removed.
                let di = net.degree(i) - present;
                let dj = net.degree(j) - present;
                gw_weight(*decay, di + 1) - gw_weight(*decay, di) + gw_weight(*decay, dj + 1)
                    - gw_weight(*decay, dj)
            }
            Term::Gwesp(decay) => {
                // The new edge (i, j) arrives with sp(i, j) shared
                // partners, and for every common neighbor k the existing
                // edges (i, k) and (j, k) each gain one shared partner.
                // Intersection counts must exclude the (i, j) dyad itself.
                let mut delta = gw_weight(*decay, net.shared_partners(i, j));
                net.for_common_neighbors(i, j, |k| {
                    let sp_ik = net.shared_partners(i, k) - present;
                    let sp_jk = net.shared_partners(j, k) - present;
                    delta += gw_weight(*decay, sp_ik + 1) - gw_weight(*decay, sp_ik);
                    delta += gw_weight(*decay, sp_jk + 1) - gw_weight(*decay, sp_jk);
                });
                delta
            }
        };
    }
    Ok(())
}

/// Allocating convenience wrapper over [`change_stats_into`].
pub fn change_stats(net: &Network, i: usize, j: usize, spec: &ModelSpec) -> Result<StatVector> {
    let mut out = DVector::zeros(spec.p());
    change_stats_into(net, i, j, spec, out.as_mut_slice())?;
    Ok(out)
}

/// The |D| x p matrix of change statistics of the observed network, one
/// row per dyad in canonical order.
pub fn all_change_stats(net: &Network, spec: &ModelSpec) -> Result<DMatrix<f64>> {
    spec.validate_for(net)?;
    let dyads = DyadSet::all(net.n());
    let mut m = DMatrix::zeros(dyads.len(), spec.p());
    let mut row = vec![0.0; spec.p()];
    for (r, (i, j)) in dyads.iter().enumerate() {
        change_stats_into(net, i, j, spec, &mut row)?;
        for (c, v) in row.iter().enumerate() {
            m[(r, c)] = *v;
        }
    }
    Ok(m)
}

/// Dyad responses y_ij in canonical order.
pub fn dyad_responses(net: &Network) -> Vec<f64> {
    let dyads = DyadSet::all(net.n());
    dyads
        .iter()
        .map(|(i, j)| net.has_edge(i, j) as usize as f64)
        .collect()
}
