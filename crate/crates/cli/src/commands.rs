//! One function per subcommand. Each returns the paths it wrote.

use std::path::PathBuf;
use std::time::Instant;

use mfg_evo::decomposition::{integrate_xz, Decomposition};
use mfg_evo::dynamics::{integrate, uniform_grid, Trajectory};
use mfg_evo::equilibrium::{dirichlet_masses, find_rest_points, EquilibriumReport, RestPointSearch, SearchOptions};
use mfg_evo::finite_pop::{simulate, EmpiricalTrajectory, FinitePopOptions, KL_SMOOTHING};
use mfg_evo::scenarios::{build_mac, build_random_game, MacParams, RandomGameConfig, RandomRewardKind};
use mfg_evo::spec_file::{emit_spec, load_spec, Format};
use mfg_evo::stability::msne_set::DEFAULT_ARGMAX_TOL;
use mfg_evo::stability::{
    build_msne_set, check_regular_ess_at, solve_boundary_layer_lyapunov, ultimate_bound_experiment, EssCertificate,
    EssOptions, JacobianMode,
};
use mfg_evo::{Game, GameSpec, PiVariant, RewardModel};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::output::{ensure_dir, rows, write_csv, write_json, write_svg};
use crate::svg::{Panel, Series};
use crate::{CliError, CliResult, CommonArgs, FormatArg, PiArg};

pub const DEFAULT_TOL: f64 = 1e-9;
const DEFAULT_T_MF: f64 = 20.0;
const DEFAULT_T_FINITE: f64 = 5.0;
const DEFAULT_GRID_MF: usize = 201;
const DEFAULT_GRID_FINITE: usize = 51;
const EPS_SWEEP: [f64; 3] = [1e-1, 1e-2, 1e-3];
const SWEEP_HORIZON: f64 = 10.0;

/// Game selected by `--spec` or `--scenario`, with the timescale override applied.
pub fn load_game(common: &CommonArgs) -> CliResult<Game> {
    let spec = match (&common.spec, &common.scenario) {
        (Some(path), _) => load_spec(path)?,
        (None, name) => scenario_spec(name.as_deref().unwrap_or("mac"), common.seed)?,
    };
    let spec = match common.eps {
        Some(eps) => spec.with_epsilon(eps)?,
        None => spec,
    };
    Ok(Game::new(spec)?)
}

pub fn scenario_spec(name: &str, seed: u64) -> CliResult<GameSpec> {
    let random = |kind| {
        let cfg = RandomGameConfig {
            classes: 2,
            states: (1, 4),
            kind,
            max_policies: 8,
            ..RandomGameConfig::default()
        };
        build_random_game(seed, &cfg)
    };
    Ok(match name {
        "mac" => build_mac(&MacParams::default())?,
        "random-congestion" => random(RandomRewardKind::Congestion)?,
        "random-generic" => random(RandomRewardKind::Generic)?,
        other => {
            return Err(CliError::Usage(format!(
                "unknown scenario '{other}' (expected mac, random-congestion or random-generic)"
            )))
        }
    })
}

fn tolerance(common: &CommonArgs) -> CliResult<f64> {
    let tol = common.tol.unwrap_or(DEFAULT_TOL);
    if !(1e-12..=1e-3).contains(&tol) {
        return Err(CliError::Usage(format!("--tol {tol:e} outside [1e-12, 1e-3]")));
    }
    Ok(tol)
}

fn horizon(common: &CommonArgs, default: f64) -> CliResult<f64> {
    let t = common.t_max.unwrap_or(default);
    if !(t > 0.0 && t.is_finite()) {
        return Err(CliError::Usage(format!("--t-max must be positive, got {t}")));
    }
    Ok(t)
}

fn grid(common: &CommonArgs, default: usize) -> CliResult<usize> {
    let g = common.grid.unwrap_or(default);
    if g < 2 {
        return Err(CliError::Usage("--grid needs at least two points".into()));
    }
    Ok(g)
}

/// Equal mass on every (state, policy) cell of each class.
pub fn uniform_cells(game: &Game) -> DVector<f64> {
    let mut mu = DVector::zeros(game.mu_len);
    for (cd, class) in game.classes.iter().zip(&game.spec.classes) {
        let len = cd.mu_len();
        mu.rows_mut(cd.mu_offset, len).fill(class.mass / len as f64);
    }
    mu
}

pub fn mu_labels(game: &Game) -> Vec<String> {
    let mut out = Vec::with_capacity(game.mu_len);
    for (cd, class) in game.classes.iter().zip(&game.spec.classes) {
        for u in 0..cd.n {
            for s in 0..cd.p {
                out.push(format!("{}:{}:u{u}", class.name, class.states[s]));
            }
        }
    }
    out
}

pub fn x_labels(game: &Game) -> Vec<String> {
    let mut out = Vec::with_capacity(game.x_len);
    for (cd, class) in game.classes.iter().zip(&game.spec.classes) {
        for pol in &cd.policies {
            out.push(format!("{}:{}", class.name, pol.describe(class)));
        }
    }
    out
}

#[derive(Serialize)]
struct RunMeta<'a> {
    command: &'a str,
    version: &'a str,
    args: &'a CommonArgs,
    epsilon: f64,
    rate_state_min: f64,
    rate_revision_max: f64,
    tolerance: f64,
    seed: u64,
    wall_time_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    extra: Option<serde_json::Value>,
}

fn write_meta(
    common: &CommonArgs,
    command: &str,
    game: &Game,
    tol: f64,
    start: Instant,
    extra: Option<serde_json::Value>,
) -> CliResult<PathBuf> {
    let (rd, rr) = game.spec.rate_bounds();
    let meta = RunMeta {
        command,
        version: env!("CARGO_PKG_VERSION"),
        args: common,
        epsilon: game.spec.epsilon(),
        rate_state_min: rd,
        rate_revision_max: rr,
        tolerance: tol,
        seed: common.seed,
        wall_time_s: start.elapsed().as_secs_f64(),
        extra,
    };
    write_json(&common.out.join("meta.json"), &meta)
}

struct MeanField {
    traj: Trajectory,
    x: Vec<DVector<f64>>,
    z: Vec<DVector<f64>>,
}

fn mean_field(game: &Game, mu0: &DVector<f64>, t_end: f64, samples: &[f64], tol: f64) -> CliResult<MeanField> {
    let traj = integrate(game, mu0, t_end, samples, tol)?;
    let d = Decomposition::build(game)?;
    let (x, z) = traj.states.iter().map(|mu| d.project(mu)).unzip();
    Ok(MeanField { traj, x, z })
}

fn xz_panels(game: &Game, mf: &MeanField) -> Vec<Panel> {
    let labels = x_labels(game);
    let x_series = labels
        .iter()
        .enumerate()
        .map(|(i, name)| Series {
            name: name.clone(),
            points: mf.traj.times.iter().zip(&mf.x).map(|(&t, x)| (t, x[i])).collect(),
        })
        .collect();
    vec![
        Panel {
            title: "Policy masses".into(),
            x_label: "t".into(),
            y_label: "x".into(),
            log_y: false,
            series: x_series,
        },
        Panel {
            title: "Norm of the fast coordinate".into(),
            x_label: "t".into(),
            y_label: "|z|".into(),
            log_y: true,
            series: vec![Series {
                name: "|z|".into(),
                points: mf.traj.times.iter().zip(&mf.z).map(|(&t, z)| (t, z.norm())).collect(),
            }],
        },
    ]
}

pub fn simulate_mf(common: &CommonArgs) -> CliResult<Vec<PathBuf>> {
    let start = Instant::now();
    let game = load_game(common)?;
    let tol = tolerance(common)?;
    let t_end = horizon(common, DEFAULT_T_MF)?;
    let samples = uniform_grid(t_end, grid(common, DEFAULT_GRID_MF)?);
    ensure_dir(&common.out)?;

    let mu0 = uniform_cells(&game);
    let mf = mean_field(&game, &mu0, t_end, &samples, tol)?;
    let mut files = Vec::new();

    let mut header = vec!["t".to_string()];
    header.extend(mu_labels(&game));
    let data: Vec<Vec<f64>> = mf
        .traj
        .times
        .iter()
        .zip(&mf.traj.states)
        .map(|(&t, mu)| std::iter::once(t).chain(mu.iter().cloned()).collect())
        .collect();
    files.push(write_csv(&common.out.join("trajectory.csv"), &header, &data)?);

    let z_len = mf.z.first().map_or(0, |z| z.len());
    let mut header = vec!["t".to_string()];
    header.extend(x_labels(&game));
    header.extend((0..z_len).map(|k| format!("z{k}")));
    header.push("z_norm".into());
    let data: Vec<Vec<f64>> = (0..mf.traj.times.len())
        .map(|i| {
            std::iter::once(mf.traj.times[i])
                .chain(mf.x[i].iter().cloned())
                .chain(mf.z[i].iter().cloned())
                .chain(std::iter::once(mf.z[i].norm()))
                .collect()
        })
        .collect();
    files.push(write_csv(&common.out.join("xz.csv"), &header, &data)?);

    if common.plots {
        files.push(write_svg(&common.out.join("plot.svg"), &xz_panels(&game, &mf))?);
    }
    let (mass_err, min_coord) = mf.traj.invariant_errors(&game, true);
    let extra = json!({
        "horizon": t_end,
        "samples": samples.len(),
        "initial_state": "uniform over cells",
        "invariants": { "max_mass_error": mass_err, "min_coordinate": min_coord },
        "ode": mf.traj.stats,
    });
    files.push(write_meta(common, "simulate-mf", &game, tol, start, Some(extra))?);
    Ok(files)
}

fn search(game: &Game, common: &CommonArgs, starts: usize) -> CliResult<RestPointSearch> {
    let mut opts = SearchOptions {
        n_starts: starts.max(1),
        seed: common.seed,
        ..SearchOptions::default()
    };
    if let Some(t) = common.t_max {
        opts.t_max = t;
    }
    if let Some(tol) = common.tol {
        opts.integration_tol = tol;
    }
    Ok(find_rest_points(game, &opts)?)
}

pub fn find_msne(common: &CommonArgs, starts: usize) -> CliResult<Vec<PathBuf>> {
    let game = load_game(common)?;
    ensure_dir(&common.out)?;
    let found = search(&game, common, starts)?;
    let out = json!({
        "policies": x_labels(&game),
        "equilibria": found.reports,
        "starts": found.diagnostics,
    });
    Ok(vec![write_json(&common.out.join("equilibria.json"), &out)?])
}

/// Action marginal when every reward reads only action marginals, else the
/// full state-action distribution.
pub fn default_pi(game: &Game) -> PiVariant {
    let action_only = game
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

pub fn negated(spec: &GameSpec) -> GameSpec {
    let mut out = spec.clone();
    for c in &mut out.classes {
        let inner = std::mem::replace(&mut c.reward, RewardModel::Table { values: vec![] });
        c.reward = RewardModel::Scaled {
            factor: -1.0,
            inner: Box::new(inner),
        };
    }
    out
}

#[derive(Serialize)]
struct NullView {
    eigenvalue: f64,
    vector: Vec<f64>,
    pi_residual: f64,
}

/// Certificate with matrices as nested rows.
#[derive(Serialize)]
struct CertificateView<'a> {
    verdict: String,
    reason: &'a str,
    pi_variant: PiVariant,
    eval_point: Vec<f64>,
    policies: Vec<String>,
    optimal: &'a [Vec<usize>],
    argmax_tol: f64,
    set_dim: usize,
    set_basis: Vec<Vec<f64>>,
    set_pi_residual: f64,
    phi: Vec<Vec<f64>>,
    jacobian: Vec<Vec<f64>>,
    jacobian_analytic: bool,
    jacobian_consistency: f64,
    g: Vec<Vec<f64>>,
    spectrum: Vec<f64>,
    max_eigenvalue: f64,
    null_directions: Vec<NullView>,
    witness: Option<Vec<f64>>,
    witness_margin: f64,
    options: EssOptions,
}

fn certify(
    game: &Game,
    x: &DVector<f64>,
    variant: PiVariant,
    opts: &EssOptions,
) -> CliResult<(EssCertificate, serde_json::Value)> {
    let pi = game.pi_map(variant, None)?;
    let set = build_msne_set(game, x, &pi, DEFAULT_ARGMAX_TOL)?;
    let cert = check_regular_ess_at(game, &set, x, opts)?;
    let view = CertificateView {
        verdict: cert.verdict.to_string(),
        reason: &cert.reason,
        pi_variant: variant,
        eval_point: cert.eval_point.iter().cloned().collect(),
        policies: x_labels(game),
        optimal: &cert.optimal,
        argmax_tol: cert.argmax_tol,
        set_dim: cert.set_dim,
        set_basis: rows(&set.basis),
        set_pi_residual: set.pi_residual,
        phi: rows(&cert.phi),
        jacobian: rows(&cert.jacobian),
        jacobian_analytic: cert.jacobian_analytic,
        jacobian_consistency: cert.jacobian_consistency,
        g: rows(&cert.g),
        spectrum: cert.spectrum.iter().cloned().collect(),
        max_eigenvalue: cert.max_eigenvalue,
        null_directions: cert
            .null_directions
            .iter()
            .map(|n| NullView {
                eigenvalue: n.eigenvalue,
                vector: n.vector.iter().cloned().collect(),
                pi_residual: n.pi_residual,
            })
            .collect(),
        witness: cert.witness.as_ref().map(|w| w.iter().cloned().collect()),
        witness_margin: cert.witness_margin,
        options: *opts,
    };
    let value = serde_json::to_value(&view)?;
    Ok((cert, value))
}

/// Lowest-residual report that passed the equilibrium check.
fn best_equilibrium(reports: &[EquilibriumReport]) -> Option<&EquilibriumReport> {
    reports
        .iter()
        .filter(|r| r.is_msne)
        .min_by(|a, b| a.residual_reduced.total_cmp(&b.residual_reduced))
}

pub fn check_ess(
    common: &CommonArgs,
    x_star: Option<&[f64]>,
    negate_payoff: bool,
    pi: Option<PiArg>,
    starts: usize,
    jacobian: JacobianMode,
) -> CliResult<Vec<PathBuf>> {
    let game = load_game(common)?;
    ensure_dir(&common.out)?;
    let x = match x_star {
        Some(v) => {
            let x = DVector::from_column_slice(v);
            game.check_policy_masses(&x, 1e-6)?;
            x
        }
        None => {
            let reports = search(&game, common, starts)?.reports;
            best_equilibrium(&reports)
                .ok_or_else(|| CliError::Usage("rest-point search found no equilibrium to certify".into()))?
                .x_vector()
        }
    };
    let variant = match pi {
        Some(PiArg::Action) => PiVariant::Action,
        Some(PiArg::StateAction) => PiVariant::StateAction,
        None => default_pi(&game),
    };
    let target = if negate_payoff {
        Game::new(negated(&game.spec))?
    } else {
        game
    };
    let opts = EssOptions {
        jacobian,
        ..EssOptions::default()
    };
    let (_, mut view) = certify(&target, &x, variant, &opts)?;
    view["negated_payoff"] = json!(negate_payoff);
    Ok(vec![write_json(&common.out.join("certificate.json"), &view)?])
}

struct FiniteRun {
    n: usize,
    traj: EmpiricalTrajectory,
    kl: Vec<f64>,
}

fn finite_runs(
    game: &Game,
    mu0: &DVector<f64>,
    mf: &Trajectory,
    sizes: &[usize],
    t_end: f64,
    count: usize,
    seed: u64,
) -> CliResult<Vec<FiniteRun>> {
    sizes
        .par_iter()
        .map(|&n| {
            let traj = simulate(
                game,
                mu0,
                &FinitePopOptions {
                    n,
                    horizon: t_end,
                    grid: count,
                    seed,
                    ..FinitePopOptions::default()
                },
            )?;
            let kl = traj.kl_series(&mf.states, KL_SMOOTHING);
            Ok(FiniteRun { n, traj, kl })
        })
        .collect()
}

fn write_finite(
    common: &CommonArgs,
    game: &Game,
    times: &[f64],
    runs: &[FiniteRun],
    files: &mut Vec<PathBuf>,
) -> CliResult<()> {
    let mut header = vec!["n".to_string(), "t".to_string()];
    header.extend(mu_labels(game));
    let mut data = Vec::new();
    for run in runs {
        for (t, mu) in run.traj.times.iter().zip(&run.traj.states) {
            let mut row = vec![run.n as f64, *t];
            row.extend(mu.iter().cloned());
            data.push(row);
        }
    }
    files.push(write_csv(&common.out.join("empirical.csv"), &header, &data)?);

    let mut header = vec!["t".to_string()];
    header.extend(runs.iter().map(|r| format!("kl_n{}", r.n)));
    let data: Vec<Vec<f64>> = times
        .iter()
        .enumerate()
        .map(|(i, &t)| std::iter::once(t).chain(runs.iter().map(|r| r.kl[i])).collect())
        .collect();
    files.push(write_csv(&common.out.join("kl.csv"), &header, &data)?);

    let summary: Vec<_> = runs
        .iter()
        .map(|r| {
            json!({
                "n": r.n,
                "seed": r.traj.seed,
                "agents_per_class": r.traj.agents_per_class,
                "rate_bounds": r.traj.rate_bounds,
                "state_events": r.traj.state_events,
                "revision_events": r.traj.revision_events,
                "switches": r.traj.switches,
                "sup_kl": r.kl.iter().cloned().fold(0.0, f64::max),
            })
        })
        .collect();
    files.push(write_json(
        &common.out.join("finite.json"),
        &json!({ "kl_smoothing": KL_SMOOTHING, "runs": summary }),
    )?);

    if common.plots {
        let panel = Panel {
            title: "Divergence between empirical and mean field states".into(),
            x_label: "t".into(),
            y_label: "KL".into(),
            log_y: true,
            series: runs
                .iter()
                .map(|r| Series {
                    name: format!("N={}", r.n),
                    points: times.iter().cloned().zip(r.kl.iter().cloned()).collect(),
                })
                .collect(),
        };
        files.push(write_svg(&common.out.join("kl.svg"), &[panel])?);
    }
    Ok(())
}

pub fn simulate_finite(common: &CommonArgs, sizes: &[usize]) -> CliResult<Vec<PathBuf>> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(CliError::Usage("--n needs positive population sizes".into()));
    }
    let game = load_game(common)?;
    let tol = tolerance(common)?;
    let t_end = horizon(common, DEFAULT_T_FINITE)?;
    let count = grid(common, DEFAULT_GRID_FINITE)?;
    let times = uniform_grid(t_end, count);
    ensure_dir(&common.out)?;
    let mu0 = uniform_cells(&game);
    let mf = integrate(&game, &mu0, t_end, &times, tol)?;
    let runs = finite_runs(&game, &mu0, &mf, sizes, t_end, count, common.seed)?;
    let mut files = Vec::new();
    write_finite(common, &game, &times, &runs, &mut files)?;
    Ok(files)
}

pub fn dump_matrices(common: &CommonArgs) -> CliResult<Vec<PathBuf>> {
    let game = load_game(common)?;
    ensure_dir(&common.out)?;
    let d = Decomposition::build(&game)?;
    let classes: Vec<_> = game
        .classes
        .iter()
        .zip(&game.spec.classes)
        .map(|(cd, class)| {
            json!({
                "name": class.name,
                "policies": cd.policies.iter().map(|p| p.describe(class)).collect::<Vec<_>>(),
                "transitions": cd.chains.iter().map(|ch| rows(&ch.transition)).collect::<Vec<_>>(),
                "stationary": cd.chains.iter().map(|ch| ch.stationary.iter().cloned().collect::<Vec<_>>()).collect::<Vec<_>>(),
            })
        })
        .collect();
    let pi_state_action = game.pi_map(PiVariant::StateAction, None)?;
    let pi_action = game.pi_map(PiVariant::Action, None)?;
    let out = json!({
        "classes": classes,
        "pi_state_action": { "rows": pi_state_action.row_labels, "matrix": rows(&pi_state_action.matrix) },
        "pi_action": { "rows": pi_action.row_labels, "matrix": rows(&pi_action.matrix) },
        "b_sk": rows(&d.b_sk),
        "b_sbk": rows(&d.b_sbk),
        "b_ks": rows(&d.b_ks),
        "b_ksb": rows(&d.b_ksb),
        "q_bar_z": rows(&d.q_bar_z),
        "epsilon": d.epsilon,
        "identities": d.identity_report(),
    });
    Ok(vec![write_json(&common.out.join("matrices.json"), &out)?])
}

pub fn emit_scenario(common: &CommonArgs, format: FormatArg) -> CliResult<Vec<PathBuf>> {
    let game = load_game(common)?;
    ensure_dir(&common.out)?;
    let (fmt, name) = match format {
        FormatArg::Json => (Format::Json, "spec.json"),
        FormatArg::Toml => (Format::Toml, "spec.toml"),
    };
    let path = common.out.join(name);
    std::fs::write(&path, emit_spec(&game.spec, fmt)?)?;
    Ok(vec![path])
}

pub fn mac_demo(common: &CommonArgs, sizes: &[usize]) -> CliResult<Vec<PathBuf>> {
    let start = Instant::now();
    let game = load_game(common)?;
    let tol = tolerance(common)?;
    ensure_dir(&common.out)?;
    let mut files = Vec::new();

    let path = common.out.join("spec.json");
    std::fs::write(&path, emit_spec(&game.spec, Format::Json)?)?;
    files.push(path);

    let d = Decomposition::build(&game)?;
    let lyap = solve_boundary_layer_lyapunov(&d, None)?;
    files.push(write_json(
        &common.out.join("decomposition.json"),
        &json!({
            "epsilon": d.epsilon,
            "rate_state_min": d.rate_state_min,
            "rate_revision_max": d.rate_revision_max,
            "x_len": d.x_len,
            "z_len": d.z_len,
            "identities": d.identity_report(),
            "lyapunov": {
                "residual": lyap.residual,
                "lambda_min": lyap.lambda_min,
                "lambda_max": lyap.lambda_max,
                "max_real_eig": lyap.max_real_eig,
                "p": rows(&lyap.p),
            },
        }),
    )?);

    let reports = search(&game, common, 8)?.reports;
    files.push(write_json(
        &common.out.join("equilibria.json"),
        &json!({ "policies": x_labels(&game), "equilibria": reports }),
    )?);
    let best = best_equilibrium(&reports)
        .ok_or_else(|| CliError::Usage("rest-point search found no equilibrium to certify".into()))?;
    let (cert, view) = certify(&game, &best.x_vector(), default_pi(&game), &EssOptions::default())?;
    files.push(write_json(&common.out.join("certificate.json"), &view)?);

    // fast coordinate started at zero, so |z| reflects what the slow motion drives
    let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
    let x0 = dirichlet_masses(&game, &mut rng);
    let z0 = DVector::zeros(d.z_len);
    let sweep = ultimate_bound_experiment(&game, &EPS_SWEEP, &x0, &z0, SWEEP_HORIZON, tol)?;
    let header: Vec<String> = ["epsilon", "tail_sup_z", "steps", "rejected"].map(String::from).to_vec();
    let data: Vec<Vec<f64>> = sweep
        .iter()
        .map(|r| vec![r.epsilon, r.tail_sup, r.steps as f64, r.rejected as f64])
        .collect();
    files.push(write_csv(&common.out.join("eps_sweep.csv"), &header, &data)?);

    let t_end = horizon(common, DEFAULT_T_MF)?;
    let samples = uniform_grid(t_end, grid(common, DEFAULT_GRID_MF)?);
    let mu0 = uniform_cells(&game);
    let mf = mean_field(&game, &mu0, t_end, &samples, tol)?;

    let fin_t = DEFAULT_T_FINITE.min(t_end);
    let fin_times = uniform_grid(fin_t, DEFAULT_GRID_FINITE);
    let mf_fin = integrate(&game, &mu0, fin_t, &fin_times, tol)?;
    let runs = finite_runs(&game, &mu0, &mf_fin, sizes, fin_t, DEFAULT_GRID_FINITE, common.seed)?;
    write_finite(common, &game, &fin_times, &runs, &mut files)?;

    if common.plots {
        files.push(write_svg(&common.out.join("trajectory.svg"), &xz_panels(&game, &mf))?);
        let mut panels = Vec::new();
        for &eps in &EPS_SWEEP {
            let g = game.with_epsilon(eps)?;
            let dd = Decomposition::build(&g)?;
            let grid = uniform_grid(SWEEP_HORIZON, 401);
            let tr = integrate_xz(&g, &dd, &x0, &z0, SWEEP_HORIZON, &grid, tol)?;
            panels.push(Series {
                name: format!("eps={eps}"),
                points: tr.times.iter().zip(&tr.z).map(|(&t, z)| (t, z.norm())).collect(),
            });
        }
        files.push(write_svg(
            &common.out.join("eps_sweep.svg"),
            &[Panel {
                title: "Fast coordinate for shrinking timescale ratio".into(),
                x_label: "t".into(),
                y_label: "|z|".into(),
                log_y: true,
                series: panels,
            }],
        )?);
    }

    let extra = json!({
        "equilibria": reports.len(),
        "certified_point": best.x,
        "verdict": cert.verdict.to_string(),
        "spectrum": cert.spectrum.iter().cloned().collect::<Vec<_>>(),
        "sweep_x0": x0.iter().cloned().collect::<Vec<_>>(),
        "sweep": sweep,
        "population_sizes": sizes,
        "ode": mf.traj.stats,
    });
    files.push(write_meta(common, "mac-demo", &game, tol, start, Some(extra))?);
    Ok(files)
}
