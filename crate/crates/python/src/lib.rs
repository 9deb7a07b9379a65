//! Python bindings. Vectors cross the boundary as lists of floats; reports
//! come back as plain dicts.

use std::path::PathBuf;

use mfg_evo::decomposition::{integrate_xz, Decomposition};
use mfg_evo::dynamics::{integrate, uniform_grid};
use mfg_evo::equilibrium::{dirichlet_masses, find_rest_points, SearchOptions};
use mfg_evo::finite_pop::{kl_divergence, simulate, FinitePopOptions, KL_SMOOTHING};
use mfg_evo::scenarios::{build_mac, build_random_game, MacParams, RandomGameConfig, RandomRewardKind};
use mfg_evo::spec_file::{emit_spec, load_spec, parse_spec, Format};
use mfg_evo::stability::msne_set::DEFAULT_ARGMAX_TOL;
use mfg_evo::stability::{build_msne_set, check_regular_ess_at, solve_boundary_layer_lyapunov, EssOptions};
use mfg_evo::{PiVariant, Protocol, RewardModel};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn err(e: mfg_evo::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn vec(v: Vec<f64>) -> DVector<f64> {
    DVector::from_vec(v)
}

fn list(v: &DVector<f64>) -> Vec<f64> {
    v.iter().cloned().collect()
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

/// Converts any serializable value through JSON into Python objects.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// A validated game with its enumerated policies and stationary distributions.
#[pyclass(name = "Game", module = "mfg_evo", frozen)]
pub struct PyGame {
    inner: mfg_evo::Game,
}

fn wrap(spec: mfg_evo::GameSpec) -> PyResult<PyGame> {
    Ok(PyGame {
        inner: mfg_evo::Game::new(spec).map_err(err)?,
    })
}

#[pymethods]
impl PyGame {
    /// Built-in multiple-access scenario with default constants.
    #[staticmethod]
    fn mac() -> PyResult<Self> {
        wrap(build_mac(&MacParams::default()).map_err(err)?)
    }

    /// Seeded random game; `kind` is "congestion" or "generic".
    #[staticmethod]
    #[pyo3(signature = (seed, kind = "congestion", classes = 1, protocol = "smith", max_policies = 8))]
    fn random(seed: u64, kind: &str, classes: usize, protocol: &str, max_policies: usize) -> PyResult<Self> {
        let kind = match kind {
            "congestion" => RandomRewardKind::Congestion,
            "generic" => RandomRewardKind::Generic,
            other => return Err(PyValueError::new_err(format!("unknown reward kind '{other}'"))),
        };
        let cfg = RandomGameConfig {
            classes,
            kind,
            max_policies,
            protocol: Protocol::from_name(protocol).map_err(err)?,
            ..RandomGameConfig::default()
        };
        wrap(build_random_game(seed, &cfg).map_err(err)?)
    }

    /// Loads a JSON or TOML spec file.
    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        wrap(load_spec(&path).map_err(err)?)
    }

    #[staticmethod]
    #[pyo3(signature = (text, format = "json"))]
    fn from_str(text: &str, format: &str) -> PyResult<Self> {
        let fmt = match format {
            "json" => Format::Json,
            "toml" => Format::Toml,
            other => return Err(PyValueError::new_err(format!("unknown format '{other}'"))),
        };
        wrap(parse_spec(text, fmt).map_err(err)?)
    }

    #[pyo3(signature = (format = "json"))]
    fn to_str(&self, format: &str) -> PyResult<String> {
        let fmt = if format == "toml" { Format::Toml } else { Format::Json };
        emit_spec(&self.inner.spec, fmt).map_err(err)
    }

    /// Same game with state rates rescaled to reach timescale ratio `eps`.
    fn with_epsilon(&self, eps: f64) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.with_epsilon(eps).map_err(err)?,
        })
    }

    /// Same game with every reward multiplied by -1.
    fn negated(&self) -> PyResult<Self> {
        let mut spec = self.inner.spec.clone();
        for c in &mut spec.classes {
            let inner = std::mem::replace(&mut c.reward, RewardModel::Table { values: vec![] });
            c.reward = RewardModel::Scaled {
                factor: -1.0,
                inner: Box::new(inner),
            };
        }
        wrap(spec)
    }

    #[getter]
    fn mu_len(&self) -> usize {
        self.inner.mu_len
    }

    #[getter]
    fn x_len(&self) -> usize {
        self.inner.x_len
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.spec.epsilon()
    }

    #[getter]
    fn masses(&self) -> Vec<f64> {
        self.inner.masses()
    }

    /// `class:policy` labels in the order of the policy-mass vector.
    fn policy_labels(&self) -> Vec<String> {
        let g = &self.inner;
        g.classes
            .iter()
            .zip(&g.spec.classes)
            .flat_map(|(cd, class)| cd.policies.iter().map(move |p| format!("{}:{}", class.name, p.describe(class))))
            .collect()
    }

    /// Equal mass on every (state, policy) cell of each class.
    fn uniform_cells(&self) -> Vec<f64> {
        let g = &self.inner;
        let mut mu = vec![0.0; g.mu_len];
        for (cd, class) in g.classes.iter().zip(&g.spec.classes) {
            let len = cd.mu_len();
            mu[cd.mu_offset..cd.mu_offset + len].fill(class.mass / len as f64);
        }
        mu
    }

    #[pyo3(signature = (seed = 0))]
    fn random_masses(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        list(&dirichlet_masses(&self.inner, &mut rng))
    }

    fn field(&self, mu: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(list(&self.inner.field(&vec(mu)).map_err(err)?))
    }

    fn reduced_field(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(list(&self.inner.reduced_field(&vec(x)).map_err(err)?))
    }

    fn payoff(&self, mu: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(list(&self.inner.payoff(&vec(mu)).map_err(err)?))
    }

    fn steady_state_payoff(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        Ok(list(&self.inner.steady_state_payoff(&vec(x)).map_err(err)?))
    }

    fn embed_stationary(&self, x: Vec<f64>) -> Vec<f64> {
        list(&self.inner.embed_stationary(&vec(x)))
    }

    fn policy_masses(&self, mu: Vec<f64>) -> Vec<f64> {
        list(&self.inner.policy_masses(&vec(mu)))
    }

    fn __repr__(&self) -> String {
        format!(
            "Game(classes={}, mu_len={}, x_len={}, epsilon={})",
            self.inner.classes.len(),
            self.inner.mu_len,
            self.inner.x_len,
            self.inner.spec.epsilon()
        )
    }
}

/// Integrates the master equation; returns `{"times", "states", "stats"}`.
#[pyfunction]
#[pyo3(signature = (game, mu0, t_end, samples = 101, tol = 1e-9))]
fn integrate_mf<'py>(
    py: Python<'py>,
    game: &PyGame,
    mu0: Vec<f64>,
    t_end: f64,
    samples: usize,
    tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let traj = integrate(&game.inner, &vec(mu0), t_end, &uniform_grid(t_end, samples), tol).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("times", traj.times.clone())?;
    out.set_item("states", traj.states.iter().map(list).collect::<Vec<_>>())?;
    out.set_item("stats", to_py(py, &traj.stats)?)?;
    Ok(out)
}

/// Slow/fast split of a population state: returns `(x, z)`.
#[pyfunction]
fn project(game: &PyGame, mu: Vec<f64>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let d = Decomposition::build(&game.inner).map_err(err)?;
    let (x, z) = d.project(&vec(mu));
    Ok((list(&x), list(&z)))
}

/// Integrates the coordinate form from `(x0, z0)`.
#[pyfunction]
#[pyo3(signature = (game, x0, z0, t_end, samples = 101, tol = 1e-9))]
fn integrate_coordinates<'py>(
    py: Python<'py>,
    game: &PyGame,
    x0: Vec<f64>,
    z0: Vec<f64>,
    t_end: f64,
    samples: usize,
    tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let d = Decomposition::build(&game.inner).map_err(err)?;
    let traj = integrate_xz(&game.inner, &d, &vec(x0), &vec(z0), t_end, &uniform_grid(t_end, samples), tol).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("times", traj.times.clone())?;
    out.set_item("x", traj.x.iter().map(list).collect::<Vec<_>>())?;
    out.set_item("z", traj.z.iter().map(list).collect::<Vec<_>>())?;
    Ok(out)
}

/// Basis identity residuals, timescale ratio and the boundary-layer Lyapunov solution.
#[pyfunction]
fn decomposition<'py>(py: Python<'py>, game: &PyGame) -> PyResult<Bound<'py, PyDict>> {
    let d = Decomposition::build(&game.inner).map_err(err)?;
    let lyap = solve_boundary_layer_lyapunov(&d, None).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("epsilon", d.epsilon)?;
    out.set_item("z_len", d.z_len)?;
    out.set_item("identities", to_py(py, &d.identity_report())?)?;
    out.set_item("q_bar_z", rows(&d.q_bar_z))?;
    out.set_item("lyapunov_p", rows(&lyap.p))?;
    out.set_item("lyapunov_residual", lyap.residual)?;
    out.set_item("lyapunov_lambda_min", lyap.lambda_min)?;
    Ok(out)
}

/// Multi-start rest-point search; one dict per distinct rest point.
#[pyfunction]
#[pyo3(signature = (game, starts = 8, seed = 0))]
fn find_equilibria<'py>(py: Python<'py>, game: &PyGame, starts: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let opts = SearchOptions {
        n_starts: starts,
        seed,
        ..SearchOptions::default()
    };
    let found = find_rest_points(&game.inner, &opts).map_err(err)?;
    to_py(py, &found.reports)
}

/// Stability certificate of the equilibrium set through `x`. `pi` is
/// "action" or "state_action"; the default follows the reward structure.
#[pyfunction]
#[pyo3(signature = (game, x, pi = None))]
fn check_ess<'py>(py: Python<'py>, game: &PyGame, x: Vec<f64>, pi: Option<&str>) -> PyResult<Bound<'py, PyDict>> {
    let g = &game.inner;
    let variant = match pi {
        Some("action") => PiVariant::Action,
        Some("state_action") => PiVariant::StateAction,
        Some(other) => return Err(PyValueError::new_err(format!("unknown reward-shaping map '{other}'"))),
        None => {
            let action_only = g
                .spec
                .classes
                .iter()
                .all(|c| matches!(c.reward, RewardModel::MacSinr { .. } | RewardModel::CongestionAffine { .. }));
            if action_only {
                PiVariant::Action
            } else {
                PiVariant::StateAction
            }
        }
    };
    let x = vec(x);
    let pi = g.pi_map(variant, None).map_err(err)?;
    let set = build_msne_set(g, &x, &pi, DEFAULT_ARGMAX_TOL).map_err(err)?;
    let cert = check_regular_ess_at(g, &set, &x, &EssOptions::default()).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("verdict", cert.verdict.to_string())?;
    out.set_item("reason", cert.reason.clone())?;
    out.set_item("set_dim", cert.set_dim)?;
    out.set_item("optimal", cert.optimal.clone())?;
    out.set_item("spectrum", list(&cert.spectrum))?;
    out.set_item("max_eigenvalue", cert.max_eigenvalue)?;
    out.set_item("g", rows(&cert.g))?;
    out.set_item(
        "null_residuals",
        cert.null_directions.iter().map(|n| n.pi_residual).collect::<Vec<_>>(),
    )?;
    out.set_item("witness_margin", cert.witness_margin)?;
    Ok(out)
}

/// Finite-population run from `mu0`; returns times, empirical states and
/// the divergence from the mean field at the same times.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (game, mu0, n, horizon = 5.0, grid = 51, seed = 0, tol = 1e-9))]
fn simulate_finite<'py>(
    py: Python<'py>,
    game: &PyGame,
    mu0: Vec<f64>,
    n: usize,
    horizon: f64,
    grid: usize,
    seed: u64,
    tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let mu0 = vec(mu0);
    let opts = FinitePopOptions {
        n,
        horizon,
        grid,
        seed,
        ..FinitePopOptions::default()
    };
    let traj = simulate(&game.inner, &mu0, &opts).map_err(err)?;
    let mf = integrate(&game.inner, &mu0, horizon, &uniform_grid(horizon, grid), tol).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("times", traj.times.clone())?;
    out.set_item("states", traj.states.iter().map(list).collect::<Vec<_>>())?;
    out.set_item("kl", traj.kl_series(&mf.states, KL_SMOOTHING))?;
    out.set_item("agents_per_class", traj.agents_per_class.clone())?;
    Ok(out)
}

/// Divergence of smoothed, normalized vectors.
#[pyfunction(name = "kl_divergence")]
#[pyo3(signature = (p, q, delta = KL_SMOOTHING))]
fn py_kl_divergence(p: Vec<f64>, q: Vec<f64>, delta: f64) -> f64 {
    kl_divergence(&p, &q, delta)
}

#[pymodule(name = "mfg_evo")]
fn mfg_evo_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGame>()?;
    m.add_function(wrap_pyfunction!(integrate_mf, m)?)?;
    m.add_function(wrap_pyfunction!(project, m)?)?;
    m.add_function(wrap_pyfunction!(integrate_coordinates, m)?)?;
    m.add_function(wrap_pyfunction!(decomposition, m)?)?;
    m.add_function(wrap_pyfunction!(find_equilibria, m)?)?;
    m.add_function(wrap_pyfunction!(check_ess, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_finite, m)?)?;
    m.add_function(wrap_pyfunction!(py_kl_divergence, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
