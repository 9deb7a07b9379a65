//! Reward models r^c(s, a, sigma).
//!
//! Every model fills a `p x q` table (states by action alphabet) for one
//! class given the state-action distributions `sigma` of all classes. Entries
//! for actions unavailable at a state are never read.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reward closure signature: `(class, state, action, sigma_all_classes) -> reward`.
pub type RewardFn = dyn Fn(usize, usize, usize, &[DMatrix<f64>]) -> f64 + Send + Sync;

#[derive(Clone)]
pub struct CustomReward {
    pub name: String,
    pub func: Arc<RewardFn>,
}

impl CustomReward {
    pub fn new<F>(name: impl Into<String>, func: F) -> Self
    where
        F: Fn(usize, usize, usize, &[DMatrix<f64>]) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            func: Arc::new(func),
        }
    }
}

impl fmt::Debug for CustomReward {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomReward").field("name", &self.name).finish()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewardModel {
    /// Expected signal to interference-plus-noise ratio minus a power cost:
    /// `P_a / (noise + rate_state * slot * gain * sum_b P_b sigma[S, b]) - beta * P_a`.
    MacSinr {
        powers: Vec<f64>,
        noise: f64,
        gain: f64,
        slot: f64,
        rate_state: f64,
        beta: f64,
    },
    /// `base[s][a] - slope[a] * sigma[S, a]` with the action marginal of the own class.
    CongestionAffine { base: Vec<Vec<f64>>, slope: Vec<f64> },
    /// Fixed reward per (state, action).
    Table { values: Vec<Vec<f64>> },
    /// `base[s][a] + sum_{s', a'} coupling[(s, a)][(s', a')] sigma[s', a']`,
    /// flattened index `s + p * a`.
    Bilinear {
        base: Vec<Vec<f64>>,
        coupling: Vec<Vec<f64>>,
    },
    /// `factor * inner`.
    Scaled { factor: f64, inner: Box<RewardModel> },
    #[serde(skip)]
    Custom(CustomReward),
}

impl RewardModel {
    pub fn custom<F>(name: impl Into<String>, func: F) -> Self
    where
        F: Fn(usize, usize, usize, &[DMatrix<f64>]) -> f64 + Send + Sync + 'static,
    {
        RewardModel::Custom(CustomReward::new(name, func))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RewardModel::MacSinr { .. } => "mac_sinr",
            RewardModel::CongestionAffine { .. } => "congestion_affine",
            RewardModel::Table { .. } => "table",
            RewardModel::Bilinear { .. } => "bilinear",
            RewardModel::Scaled { .. } => "scaled",
            RewardModel::Custom(_) => "custom",
        }
    }

    /// Structural checks against the class dimensions.
    pub fn validate(&self, class: usize, p: usize, q: usize) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidGame(format!("class {class}: reward {what}")));
        let check_table = |t: &Vec<Vec<f64>>, name: &str| -> Result<()> {
            if t.len() != p || t.iter().any(|row| row.len() != q) {
                return bad(format!("{name} must be {p} x {q} (states x actions)"));
            }
            if t.iter().flatten().any(|v| !v.is_finite()) {
                return bad(format!("{name} has non-finite entries"));
            }
            Ok(())
        };
        match self {
            RewardModel::MacSinr {
                powers,
                noise,
                gain,
                slot,
                rate_state,
                beta,
            } => {
                if powers.len() != q {
                    return bad(format!("mac_sinr needs {q} powers, got {}", powers.len()));
                }
                if powers.iter().any(|&v| v < 0.0 || !v.is_finite()) {
                    return bad("mac_sinr powers must be nonnegative".into());
                }
                if !(*noise > 0.0) || !(*gain > 0.0) || !(*slot > 0.0) || !(*rate_state > 0.0) {
                    return bad("mac_sinr noise, gain, slot, rate_state must be positive".into());
                }
                if !(*beta >= 0.0) {
                    return bad("mac_sinr beta must be nonnegative".into());
                }
                Ok(())
            }
            RewardModel::CongestionAffine { base, slope } => {
                check_table(base, "base")?;
                if slope.len() != q || slope.iter().any(|v| !v.is_finite()) {
                    return bad(format!("slope must have {q} finite entries"));
                }
                Ok(())
            }
            RewardModel::Table { values } => check_table(values, "values"),
            RewardModel::Bilinear { base, coupling } => {
                check_table(base, "base")?;
                let d = p * q;
                if coupling.len() != d || coupling.iter().any(|row| row.len() != d) {
                    return bad(format!("coupling must be {d} x {d}"));
                }
                Ok(())
            }
            RewardModel::Scaled { factor, inner } => {
                if !factor.is_finite() {
                    return bad("scale factor must be finite".into());
                }
                inner.validate(class, p, q)
            }
            RewardModel::Custom(_) => Ok(()),
        }
    }

    /// Fill `out` (p x q) with rewards of class `class`.
    pub fn evaluate_into(&self, class: usize, sigma: &[DMatrix<f64>], out: &mut DMatrix<f64>) {
        let own = &sigma[class];
        let (p, q) = own.shape();
        match self {
            RewardModel::MacSinr {
                powers,
                noise,
                gain,
                slot,
                rate_state,
                beta,
            } => {
                let mut load = 0.0;
                for a in 0..q {
                    load += powers[a] * own.column(a).sum();
                }
                let denom = noise + rate_state * slot * gain * load;
                for a in 0..q {
                    let v = powers[a] / denom - beta * powers[a];
                    for s in 0..p {
                        out[(s, a)] = v;
                    }
                }
            }
            RewardModel::CongestionAffine { base, slope } => {
                for a in 0..q {
                    let load = slope[a] * own.column(a).sum();
                    for s in 0..p {
                        out[(s, a)] = base[s][a] - load;
                    }
                }
            }
            RewardModel::Table { values } => {
                for s in 0..p {
                    for a in 0..q {
                        out[(s, a)] = values[s][a];
                    }
                }
            }
            RewardModel::Bilinear { base, coupling } => {
                for a in 0..q {
                    for s in 0..p {
                        let row = &coupling[s + p * a];
                        let mut v = base[s][a];
                        for (k, w) in own.iter().enumerate() {
                            v += row[k] * w;
                        }
                        out[(s, a)] = v;
                    }
                }
            }
            RewardModel::Scaled { factor, inner } => {
                inner.evaluate_into(class, sigma, out);
                *out *= *factor;
            }
            RewardModel::Custom(c) => {
                for a in 0..q {
                    for s in 0..p {
                        out[(s, a)] = (c.func)(class, s, a, sigma);
                    }
                }
            }
        }
    }

    /// Whether the reward of a class reads only that class's distribution.
    pub fn is_own_class_only(&self) -> bool {
        match self {
            RewardModel::Scaled { inner, .. } => inner.is_own_class_only(),
            RewardModel::Custom(_) => false,
            _ => true,
        }
    }

    /// Derivative of the flattened reward table (index `s + p*a`) with respect
    /// to the own-class flattened distribution, when available in closed form.
    pub fn own_jacobian(&self, own: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        let (p, q) = own.shape();
        let d = p * q;
        match self {
            RewardModel::MacSinr {
                powers,
                noise,
                gain,
                slot,
                rate_state,
                ..
            } => {
                let k = rate_state * slot * gain;
                let load: f64 = (0..q).map(|a| powers[a] * own.column(a).sum()).sum();
                let denom = noise + k * load;
                let mut j = DMatrix::zeros(d, d);
                for a in 0..q {
                    let scale = -powers[a] * k / (denom * denom);
                    for s in 0..p {
                        for b in 0..q {
                            for s2 in 0..p {
                                j[(s + p * a, s2 + p * b)] = scale * powers[b];
                            }
                        }
                    }
                }
                Some(j)
            }
            RewardModel::CongestionAffine { slope, .. } => {
                let mut j = DMatrix::zeros(d, d);
                for a in 0..q {
                    for s in 0..p {
                        for s2 in 0..p {
                            j[(s + p * a, s2 + p * a)] = -slope[a];
                        }
                    }
                }
                Some(j)
            }
            RewardModel::Table { .. } => Some(DMatrix::zeros(d, d)),
            RewardModel::Bilinear { coupling, .. } => {
                Some(DMatrix::from_fn(d, d, |i, k| coupling[i][k]))
            }
            RewardModel::Scaled { factor, inner } => inner.own_jacobian(own).map(|j| j * *factor),
            RewardModel::Custom(_) => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mac_sinr_without_transmitters_gives_clean_channel() {
        let r = RewardModel::MacSinr {
            powers: vec![0.0, 1.0, 2.0],
            noise: 0.5,
            gain: 1.0,
            slot: 0.1,
            rate_state: 10.0,
            beta: 0.0,
        };
        let mut sigma = DMatrix::zeros(4, 3);
        sigma[(0, 0)] = 1.0;
        let mut out = DMatrix::zeros(4, 3);
        r.evaluate_into(0, &[sigma], &mut out);
        assert_eq!(out[(0, 0)], 0.0);
        assert!((out[(1, 1)] - 2.0).abs() < 1e-15);
        assert!((out[(2, 2)] - 4.0).abs() < 1e-15);
    }

    #[test]
    fn analytic_jacobians_match_differences() {
        let models = vec![
            RewardModel::MacSinr {
                powers: vec![0.0, 1.0, 2.0],
                noise: 0.1,
                gain: 1.0,
                slot: 0.1,
                rate_state: 10.0,
                beta: 1.0,
            },
            RewardModel::CongestionAffine {
                base: vec![vec![1.0, 2.0, 0.5]; 2],
                slope: vec![0.3, 1.0, 2.0],
            },
            RewardModel::Scaled {
                factor: -2.0,
                inner: Box::new(RewardModel::Bilinear {
                    base: vec![vec![0.0; 3]; 2],
                    coupling: (0..6).map(|i| (0..6).map(|k| (i * 7 + k) as f64 * 0.1).collect()).collect(),
                }),
            },
        ];
        let p = 2;
        let q = 3;
        let sigma = DMatrix::from_fn(p, q, |s, a| 0.1 + 0.05 * (s + 2 * a) as f64);
        for m in models {
            let j = m.own_jacobian(&sigma).unwrap();
            let h = 1e-6;
            for k in 0..p * q {
                let mut plus = sigma.clone();
                let mut minus = sigma.clone();
                plus[k] += h;
                minus[k] -= h;
                let mut rp = DMatrix::zeros(p, q);
                let mut rm = DMatrix::zeros(p, q);
                m.evaluate_into(0, &[plus], &mut rp);
                m.evaluate_into(0, &[minus], &mut rm);
                for i in 0..p * q {
                    let fd = (rp[i] - rm[i]) / (2.0 * h);
                    assert!((fd - j[(i, k)]).abs() < 1e-6, "{} {i} {k}", m.kind());
                }
            }
        }
    }

    #[test]
    fn serde_round_trip_uses_kind_tag() {
        let r = RewardModel::Table {
            values: vec![vec![1.0, 2.0]],
        };
        let js = serde_json::to_string(&r).unwrap();
        assert!(js.contains("\"kind\":\"table\""));
        let back: RewardModel = serde_json::from_str(&js).unwrap();
        assert_eq!(back.kind(), "table");
    }
}
