//! Revision protocols: switch rates between deterministic policies given the
//! current payoff vector and policy masses of one class.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    ImitativeViaComparison,
    SeparableExcessPayoff,
    ImpartialPairwiseComparison,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::ImitativeViaComparison => "imitative_via_comparison",
            Family::SeparableExcessPayoff => "separable_excess_payoff",
            Family::ImpartialPairwiseComparison => "impartial_pairwise_comparison",
        };
        f.write_str(s)
    }
}

/// `(payoffs, masses, class mass) -> rate matrix`.
pub type RateFn = dyn Fn(&DVector<f64>, &DVector<f64>, f64) -> DMatrix<f64> + Send + Sync;
/// Conditional imitation rates `r_{uu'}(payoffs)` of an imitative protocol.
pub type ConditionalFn = dyn Fn(&DVector<f64>, &DVector<f64>, f64) -> DMatrix<f64> + Send + Sync;

/// User-supplied protocol tagged with the family it claims to belong to.
/// Construct with [`CustomProtocol::register`], which checks the family axioms.
#[derive(Clone)]
pub struct CustomProtocol {
    pub name: String,
    pub family: Family,
    rate: Arc<RateFn>,
    conditional: Option<Arc<ConditionalFn>>,
}

impl fmt::Debug for CustomProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomProtocol")
            .field("name", &self.name)
            .field("family", &self.family)
            .finish()
    }
}

impl CustomProtocol {
    /// Registers a protocol after randomized axiom checks (`trials` draws per
    /// policy count in 2..=5, seeded).
    pub fn register<F>(
        name: impl Into<String>,
        family: Family,
        rate: F,
        conditional: Option<Arc<ConditionalFn>>,
        seed: u64,
    ) -> Result<Self>
    where
        F: Fn(&DVector<f64>, &DVector<f64>, f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        if family == Family::ImitativeViaComparison && conditional.is_none() {
            return Err(Error::AxiomViolation {
                family: family.to_string(),
                detail: "imitative protocols must supply conditional imitation rates".into(),
            });
        }
        let proto = CustomProtocol {
            name: name.into(),
            family,
            rate: Arc::new(rate),
            conditional,
        };
        check_family_axioms(&Protocol::Custom(proto.clone()), 200, seed)?;
        Ok(proto)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Protocol {
    /// Pairwise comparison: `rho_{uu'} = [pi_{u'} - pi_u]_+`.
    Smith,
    /// Excess payoff: `rho_{uu'} = [pi_{u'} - x.pi/m]_+`.
    Bnn,
    /// Imitation via comparison: `rho_{uu'} = (x_{u'}/m) [pi_{u'} - pi_u]_+`.
    #[serde(alias = "pairwise_proportional_imitation")]
    Ppi,
    #[serde(skip)]
    Custom(CustomProtocol),
}

impl Protocol {
    pub fn family(&self) -> Family {
        match self {
            Protocol::Smith => Family::ImpartialPairwiseComparison,
            Protocol::Bnn => Family::SeparableExcessPayoff,
            Protocol::Ppi => Family::ImitativeViaComparison,
            Protocol::Custom(c) => c.family,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Protocol::Smith => "smith",
            Protocol::Bnn => "bnn",
            Protocol::Ppi => "ppi",
            Protocol::Custom(c) => &c.name,
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "smith" => Ok(Protocol::Smith),
            "bnn" => Ok(Protocol::Bnn),
            "ppi" | "pairwise_proportional_imitation" => Ok(Protocol::Ppi),
            other => Err(Error::Parameter(format!("unknown protocol '{other}'"))),
        }
    }

    /// Writes the rate matrix into `out` (n x n). Diagonal entries are zeroed.
    pub fn rates_into(&self, pi: &[f64], x: &[f64], m: f64, out: &mut DMatrix<f64>) {
        let n = pi.len();
        match self {
            Protocol::Smith => {
                for u in 0..n {
                    for v in 0..n {
                        out[(u, v)] = (pi[v] - pi[u]).max(0.0);
                    }
                }
            }
            Protocol::Bnn => {
                let avg = pi.iter().zip(x).map(|(p, w)| p * w).sum::<f64>() / m;
                for v in 0..n {
                    let tau = (pi[v] - avg).max(0.0);
                    for u in 0..n {
                        out[(u, v)] = tau;
                    }
                }
            }
            Protocol::Ppi => {
                for u in 0..n {
                    for v in 0..n {
                        out[(u, v)] = x[v] / m * (pi[v] - pi[u]).max(0.0);
                    }
                }
            }
            Protocol::Custom(c) => {
                let r = (c.rate)(
                    &DVector::from_column_slice(pi),
                    &DVector::from_column_slice(x),
                    m,
                );
                out.copy_from(&r);
            }
        }
        for u in 0..n {
            out[(u, u)] = 0.0;
        }
    }

    pub fn rates(&self, pi: &DVector<f64>, x: &DVector<f64>, m: f64) -> DMatrix<f64> {
        let n = pi.len();
        let mut out = DMatrix::zeros(n, n);
        self.rates_into(pi.as_slice(), x.as_slice(), m, &mut out);
        out
    }

    /// Conditional imitation rates `r_{uu'}` for imitative protocols.
    pub fn conditional_rates(
        &self,
        pi: &DVector<f64>,
        x: &DVector<f64>,
        m: f64,
    ) -> Option<DMatrix<f64>> {
        match self {
            Protocol::Ppi => {
                let n = pi.len();
                Some(DMatrix::from_fn(n, n, |u, v| (pi[v] - pi[u]).max(0.0)))
            }
            Protocol::Custom(c) => c.conditional.as_ref().map(|f| f(pi, x, m)),
            _ => None,
        }
    }
}

/// Growth rates `G_u = sum_{u'} (x_{u'}/m) (r_{u'u} - r_{uu'})` of an imitative protocol.
pub fn growth_rates(
    protocol: &Protocol,
    pi: &DVector<f64>,
    x: &DVector<f64>,
    m: f64,
) -> Result<DVector<f64>> {
    if protocol.family() != Family::ImitativeViaComparison {
        return Err(Error::FamilyMismatch {
            expected: Family::ImitativeViaComparison.to_string(),
            found: protocol.family().to_string(),
        });
    }
    let r = protocol
        .conditional_rates(pi, x, m)
        .ok_or_else(|| Error::FamilyMismatch {
            expected: "conditional imitation rates".into(),
            found: "none".into(),
        })?;
    let n = pi.len();
    Ok(DVector::from_fn(n, |u, _| {
        (0..n)
            .map(|v| x[v] / m * (r[(v, u)] - r[(u, v)]))
            .sum::<f64>()
    }))
}

/// Randomized check of the axioms of the protocol's declared family.
pub fn check_family_axioms(protocol: &Protocol, trials: usize, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let family = protocol.family();
    let fail = |detail: String| Error::AxiomViolation {
        family: family.to_string(),
        detail,
    };
    for trial in 0..trials {
        let n = 2 + trial % 4;
        let m = rng.random_range(0.5..2.0);
        // coarse grid so ties occur
        let pi = DVector::from_fn(n, |_, _| (rng.random_range(-10..=10) as f64) * 0.1);
        let raw: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random::<f64>() })
            .collect();
        let total: f64 = raw.iter().sum();
        let x = if total > 0.0 {
            DVector::from_iterator(n, raw.iter().map(|v| v / total * m))
        } else {
            DVector::from_element(n, m / n as f64)
        };
        let rho = protocol.rates(&pi, &x, m);
        if rho.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(fail(format!("negative or non-finite rate at trial {trial}")));
        }
        match family {
            Family::ImpartialPairwiseComparison => {
                for u in 0..n {
                    for v in 0..n {
                        if u != v && ((rho[(u, v)] > 0.0) != (pi[v] > pi[u])) {
                            return Err(fail(format!(
                                "sign preservation fails for pair ({u}, {v}) at trial {trial}"
                            )));
                        }
                    }
                }
            }
            Family::SeparableExcessPayoff => {
                let avg = pi.dot(&x) / m;
                for v in 0..n {
                    let reference = (0..n).find(|&u| u != v).map(|u| rho[(u, v)]).unwrap();
                    for u in 0..n {
                        if u != v && (rho[(u, v)] - reference).abs() > 1e-12 {
                            return Err(fail(format!(
                                "rate into {v} depends on the origin policy at trial {trial}"
                            )));
                        }
                    }
                    let excess = pi[v] - avg;
                    if excess.abs() > 1e-12 && (reference > 0.0) != (excess > 0.0) {
                        return Err(fail(format!(
                            "rate into {v} does not follow the sign of its excess payoff"
                        )));
                    }
                }
            }
            Family::ImitativeViaComparison => {
                let r = protocol
                    .conditional_rates(&pi, &x, m)
                    .ok_or_else(|| fail("missing conditional rates".into()))?;
                for u in 0..n {
                    for v in 0..n {
                        if u == v {
                            continue;
                        }
                        if (rho[(u, v)] - x[v] / m * r[(u, v)]).abs() > 1e-12 {
                            return Err(fail(format!(
                                "rate ({u}, {v}) does not factor as (x/m) r at trial {trial}"
                            )));
                        }
                        for w in 0..n {
                            if w != u && pi[v] >= pi[w] && r[(u, v)] < r[(u, w)] - 1e-12 {
                                return Err(fail(format!(
                                    "conditional rates from {u} not monotone in payoff"
                                )));
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn smith_examples() {
        let z = Protocol::Smith.rates(&v(&[1.0, 1.0]), &v(&[0.5, 0.5]), 1.0);
        assert!(z.iter().all(|&e| e == 0.0));
        let r = Protocol::Smith.rates(&v(&[0.0, 2.0]), &v(&[0.5, 0.5]), 1.0);
        assert_eq!(r[(0, 1)], 2.0);
        assert_eq!(r[(1, 0)], 0.0);
    }

    #[test]
    fn bnn_examples() {
        let r = Protocol::Bnn.rates(&v(&[0.0, 2.0]), &v(&[0.5, 0.5]), 1.0);
        // mean payoff 1: only the better policy has positive excess
        assert_eq!(r[(0, 1)], 1.0);
        assert_eq!(r[(1, 0)], 0.0);
        let best = Protocol::Bnn.rates(&v(&[0.0, 2.0]), &v(&[0.0, 1.0]), 1.0);
        assert!(best.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn ppi_examples() {
        let r = Protocol::Ppi.rates(&v(&[0.0, 1.0]), &v(&[0.5, 0.5]), 1.0);
        assert_eq!(r[(0, 1)], 0.5);
        assert_eq!(r[(1, 0)], 0.0);
        let absent = Protocol::Ppi.rates(&v(&[0.0, 1.0, 3.0]), &v(&[0.5, 0.5, 0.0]), 1.0);
        assert!(absent.column(2).iter().all(|&e| e == 0.0));
        let g = growth_rates(&Protocol::Ppi, &v(&[0.0, 1.0]), &v(&[0.5, 0.5]), 1.0).unwrap();
        assert_eq!(g.as_slice(), &[-0.5, 0.5]);
    }

    #[test]
    fn growth_rates_reject_other_families() {
        let err = growth_rates(&Protocol::Smith, &v(&[0.0, 1.0]), &v(&[0.5, 0.5]), 1.0);
        assert!(matches!(err, Err(Error::FamilyMismatch { .. })));
    }

    #[test]
    fn shipped_protocols_satisfy_their_axioms() {
        for p in [Protocol::Smith, Protocol::Bnn, Protocol::Ppi] {
            check_family_axioms(&p, 300, 7).unwrap();
        }
    }

    #[test]
    fn custom_registration_checks_axioms() {
        // doubled Smith is still a pairwise comparison protocol
        let ok = CustomProtocol::register(
            "double_smith",
            Family::ImpartialPairwiseComparison,
            |pi, x, m| Protocol::Smith.rates(pi, x, m) * 2.0,
            None,
            3,
        );
        assert!(ok.is_ok());
        // BNN mislabelled as pairwise comparison fails sign preservation
        let bad = CustomProtocol::register(
            "bnn_as_pairwise",
            Family::ImpartialPairwiseComparison,
            |pi, x, m| Protocol::Bnn.rates(pi, x, m),
            None,
            3,
        );
        assert!(matches!(bad, Err(Error::AxiomViolation { .. })));
    }

    #[test]
    fn serde_names() {
        let p: Protocol = serde_json::from_str(r#"{"name":"bnn"}"#).unwrap();
        assert_eq!(p.name(), "bnn");
        let q: Protocol = serde_json::from_str(r#"{"name":"pairwise_proportional_imitation"}"#).unwrap();
        assert_eq!(q.family(), Family::ImitativeViaComparison);
    }
}
