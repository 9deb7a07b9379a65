//! Game data model, policy enumeration, per-policy chains and payoff maps.
//!
//! Flattened layouts used throughout the crate:
//! * population state `mu`: classes back to back; inside a class the block is a
//!   `p x n` column-major array, i.e. ordering `(s1,u1), (s2,u1), ..., (sp,un)`.
//! * policy masses `x` and payoffs: classes back to back, `n` entries each.
//! * state-action distributions `sigma`: one `p x q` matrix per class over the
//!   class's action alphabet; flattened index `s + p * a`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocols::Protocol;
use crate::reward::RewardModel;

pub const DEFAULT_POLICY_CAP: usize = 100_000;
pub const KERNEL_TOL: f64 = 1e-12;
pub const SIMPLEX_TOL: f64 = 1e-9;
pub const STATIONARY_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct ClassSpec {
    pub name: String,
    pub states: Vec<String>,
    /// Action alphabet of the class.
    pub actions: Vec<String>,
    /// Alphabet indices of the actions available at each state.
    pub available: Vec<Vec<usize>>,
    /// `kernel[s][k][s']`: probability of moving to `s'` when playing the
    /// `k`-th available action at `s`.
    pub kernel: Vec<Vec<Vec<f64>>>,
    pub reward: RewardModel,
    pub mass: f64,
    pub rate_state: f64,
    pub rate_revision: f64,
    pub protocol: Protocol,
}

impl ClassSpec {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn validate(&self, c: usize) -> Result<()> {
        let label = format!("class {c} ('{}')", self.name);
        let err = |msg: String| Err(Error::InvalidGame(format!("{label}: {msg}")));
        let p = self.states.len();
        let q = self.actions.len();
        if p == 0 {
            return err("needs at least one state".into());
        }
        if q == 0 {
            return err("needs at least one action".into());
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return err(format!("mass must be positive, got {}", self.mass));
        }
        if !(self.rate_state > 0.0 && self.rate_state.is_finite()) {
            return err(format!("rate_state must be positive, got {}", self.rate_state));
        }
        if !(self.rate_revision > 0.0 && self.rate_revision.is_finite()) {
            return err(format!(
                "rate_revision must be positive, got {}",
                self.rate_revision
            ));
        }
        if self.available.len() != p {
            return err(format!(
                "available actions listed for {} states, expected {p}",
                self.available.len()
            ));
        }
        if self.kernel.len() != p {
            return err(format!("kernel has {} state blocks, expected {p}", self.kernel.len()));
        }
        for s in 0..p {
            let state = &self.states[s];
            let avail = &self.available[s];
            if avail.is_empty() {
                return err(format!("state '{state}' has no available action"));
            }
            for (k, &a) in avail.iter().enumerate() {
                if a >= q {
                    return err(format!("state '{state}' lists unknown action index {a}"));
                }
                if avail[..k].contains(&a) {
                    return err(format!(
                        "state '{state}' lists action '{}' twice",
                        self.actions[a]
                    ));
                }
            }
            if self.kernel[s].len() != avail.len() {
                return err(format!(
                    "kernel at state '{state}' has {} rows, expected one per available action ({})",
                    self.kernel[s].len(),
                    avail.len()
                ));
            }
            for (k, row) in self.kernel[s].iter().enumerate() {
                let action = &self.actions[avail[k]];
                if row.len() != p {
                    return err(format!(
                        "kernel row (state '{state}', action '{action}') has length {}, expected {p}",
                        row.len()
                    ));
                }
                if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                    return err(format!(
                        "kernel row (state '{state}', action '{action}') has entries outside [0, 1]"
                    ));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > KERNEL_TOL {
                    return err(format!(
                        "kernel row (state '{state}', action '{action}') sums to {sum}, expected 1"
                    ));
                }
            }
        }
        self.reward.validate(c, p, q)
    }
}

#[derive(Clone, Debug)]
pub struct GameSpec {
    pub classes: Vec<ClassSpec>,
}

impl GameSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::InvalidGame("a game needs at least one class".into()));
        }
        for (c, class) in self.classes.iter().enumerate() {
            class.validate(c)?;
        }
        Ok(())
    }

    /// `(min_c R_d^c, max_c R_r^c)`.
    pub fn rate_bounds(&self) -> (f64, f64) {
        let rd = self
            .classes
            .iter()
            .map(|c| c.rate_state)
            .fold(f64::INFINITY, f64::min);
        let rr = self.classes.iter().map(|c| c.rate_revision).fold(0.0, f64::max);
        (rd, rr)
    }

    /// Timescale ratio of revision to state dynamics.
    pub fn epsilon(&self) -> f64 {
        let (rd, rr) = self.rate_bounds();
        rr / rd
    }

    /// Rescales every state rate by the same factor so that the timescale
    /// ratio becomes `eps`; ratios between classes are preserved.
    pub fn with_epsilon(&self, eps: f64) -> Result<GameSpec> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Parameter(format!("epsilon must be positive, got {eps}")));
        }
        let factor = self.epsilon() / eps;
        let mut out = self.clone();
        for c in &mut out.classes {
            c.rate_state *= factor;
        }
        Ok(out)
    }

    /// Divides all rates by the largest revision rate, so time is measured in
    /// units of the fastest revision clock.
    pub fn normalized(&self) -> GameSpec {
        let (_, rr) = self.rate_bounds();
        let mut out = self.clone();
        for c in &mut out.classes {
            c.rate_state /= rr;
            c.rate_revision /= rr;
        }
        out
    }

    pub fn total_mass(&self) -> f64 {
        self.classes.iter().map(|c| c.mass).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeterministicPolicy {
    pub index: usize,
    /// Alphabet index of the action played at each state.
    pub actions: Vec<usize>,
}

impl DeterministicPolicy {
    pub fn describe(&self, class: &ClassSpec) -> String {
        self.actions
            .iter()
            .enumerate()
            .map(|(s, &a)| format!("{}={}", class.states[s], class.actions[a]))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// All deterministic policies of a class, lexicographic over states with the
/// last state varying fastest and actions in their listed order.
pub fn enumerate_policies(
    class: &ClassSpec,
    class_index: usize,
    cap: usize,
) -> Result<Vec<DeterministicPolicy>> {
    let count = class
        .available
        .iter()
        .try_fold(1u128, |acc, a| acc.checked_mul(a.len() as u128))
        .unwrap_or(u128::MAX);
    if count > cap as u128 {
        return Err(Error::PolicyExplosion {
            class: class_index,
            count,
            cap,
        });
    }
    let p = class.available.len();
    let mut out = Vec::with_capacity(count as usize);
    let mut digits = vec![0usize; p];
    for index in 0..count as usize {
        out.push(DeterministicPolicy {
            index,
            actions: (0..p).map(|s| class.available[s][digits[s]]).collect(),
        });
        for s in (0..p).rev() {
            digits[s] += 1;
            if digits[s] < class.available[s].len() {
                break;
            }
            digits[s] = 0;
        }
    }
    Ok(out)
}

/// Row-stochastic transition matrix `P[s, s']` induced by a policy.
pub fn policy_transition(class: &ClassSpec, policy: &DeterministicPolicy) -> DMatrix<f64> {
    let p = class.num_states();
    DMatrix::from_fn(p, p, |s, s2| {
        let k = class.available[s]
            .iter()
            .position(|&a| a == policy.actions[s])
            .expect("policy action available");
        class.kernel[s][k][s2]
    })
}

/// Stationary distribution of a row-stochastic matrix via the bordered
/// least-squares system `[Q^T; 1^T] eta = [0; 1]`, `Q = P - I`.
pub fn stationary_distribution(transition: &DMatrix<f64>) -> Result<DVector<f64>> {
    let p = transition.nrows();
    let q = transition - DMatrix::identity(p, p);
    let mut bordered = DMatrix::zeros(p + 1, p);
    bordered.view_mut((0, 0), (p, p)).copy_from(&q.transpose());
    bordered.row_mut(p).fill(1.0);
    let mut rhs = DVector::zeros(p + 1);
    rhs[p] = 1.0;
    let svd = bordered.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 1e-10 * smax {
        return Err(Error::NotUnichain(format!(
            "zero eigenvalue of the generator is not simple (sigma_min/sigma_max = {:.3e})",
            smin / smax
        )));
    }
    let mut eta = svd
        .solve(&rhs, 0.0)
        .map_err(|e| Error::Numerical(format!("stationary solve failed: {e}")))?;
    let most_negative = eta.min();
    if most_negative < -1e-12 {
        return Err(Error::Numerical(format!(
            "stationary distribution has negative entry {most_negative:.3e}"
        )));
    }
    eta.apply(|v| *v = v.max(0.0));
    let total = eta.sum();
    eta /= total;
    let residual = (eta.transpose() * &q).amax();
    if residual > STATIONARY_TOL {
        return Err(Error::Numerical(format!(
            "stationary residual {residual:.3e} exceeds {STATIONARY_TOL:e}"
        )));
    }
    Ok(eta)
}

#[derive(Clone, Debug)]
pub struct PolicyChain {
    pub transition: DMatrix<f64>,
    /// Unit-rate generator `P - I`.
    pub generator: DMatrix<f64>,
    pub stationary: DVector<f64>,
}

impl PolicyChain {
    pub fn new(transition: DMatrix<f64>) -> Result<Self> {
        let p = transition.nrows();
        let stationary = stationary_distribution(&transition)?;
        let generator = &transition - DMatrix::identity(p, p);
        Ok(Self {
            transition,
            generator,
            stationary,
        })
    }
}

/// Compiled per-class data.
#[derive(Clone, Debug)]
pub struct ClassData {
    pub p: usize,
    pub q: usize,
    pub n: usize,
    pub mu_offset: usize,
    pub x_offset: usize,
    pub policies: Vec<DeterministicPolicy>,
    pub chains: Vec<PolicyChain>,
    /// State-action image of unit mass on each policy: `(p*q) x n`, row `s + p*a`.
    pub pi_state_action: DMatrix<f64>,
}

impl ClassData {
    pub fn mu_len(&self) -> usize {
        self.p * self.n
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PiVariant {
    StateAction,
    Action,
    Custom,
}

/// Linear map from policy masses to the distribution shaping rewards,
/// block-diagonal over classes.
#[derive(Clone, Debug)]
pub struct PiMap {
    pub variant: PiVariant,
    pub matrix: DMatrix<f64>,
    /// Human-readable label of every row, e.g. `class0:E/N` or `class0:L`.
    pub row_labels: Vec<String>,
    /// First row of each class block.
    pub row_offsets: Vec<usize>,
}

/// Scratch buffers for payoff evaluation.
#[derive(Clone, Debug)]
pub struct PayoffWorkspace {
    pub sigma: Vec<DMatrix<f64>>,
    pub tables: Vec<DMatrix<f64>>,
}

#[derive(Clone, Debug)]
pub struct Game {
    pub spec: GameSpec,
    pub classes: Vec<ClassData>,
    pub mu_len: usize,
    pub x_len: usize,
}

impl Game {
    pub fn new(spec: GameSpec) -> Result<Self> {
        Self::with_policy_cap(spec, DEFAULT_POLICY_CAP)
    }

    pub fn with_policy_cap(spec: GameSpec, cap: usize) -> Result<Self> {
        spec.validate()?;
        let mut classes = Vec::with_capacity(spec.classes.len());
        let (mut mu_offset, mut x_offset) = (0, 0);
        for (c, class) in spec.classes.iter().enumerate() {
            let policies = enumerate_policies(class, c, cap)?;
            let p = class.num_states();
            let q = class.num_actions();
            let n = policies.len();
            let mut chains = Vec::with_capacity(n);
            for pol in &policies {
                let chain = PolicyChain::new(policy_transition(class, pol)).map_err(|e| match e {
                    Error::NotUnichain(_) => Error::MultipleRecurrentClasses {
                        class: c,
                        policy: pol.index,
                    },
                    other => other,
                })?;
                chains.push(chain);
            }
            let mut pi_sa = DMatrix::zeros(p * q, n);
            for (u, pol) in policies.iter().enumerate() {
                for s in 0..p {
                    pi_sa[(s + p * pol.actions[s], u)] = chains[u].stationary[s];
                }
            }
            classes.push(ClassData {
                p,
                q,
                n,
                mu_offset,
                x_offset,
                policies,
                chains,
                pi_state_action: pi_sa,
            });
            mu_offset += p * n;
            x_offset += n;
        }
        Ok(Self {
            spec,
            classes,
            mu_len: mu_offset,
            x_len: x_offset,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_spec(&self, c: usize) -> &ClassSpec {
        &self.spec.classes[c]
    }

    pub fn masses(&self) -> Vec<f64> {
        self.spec.classes.iter().map(|c| c.mass).collect()
    }

    /// Same compiled structure with different rates (e.g. an epsilon sweep).
    pub fn with_spec_rates(&self, spec: &GameSpec) -> Result<Game> {
        if spec.classes.len() != self.spec.classes.len() {
            return Err(Error::InvalidGame("class count changed".into()));
        }
        let mut out = self.clone();
        for (dst, src) in out.spec.classes.iter_mut().zip(&spec.classes) {
            dst.rate_state = src.rate_state;
            dst.rate_revision = src.rate_revision;
        }
        Ok(out)
    }

    pub fn with_epsilon(&self, eps: f64) -> Result<Game> {
        self.with_spec_rates(&self.spec.with_epsilon(eps)?)
    }

    pub fn normalized(&self) -> Game {
        self.with_spec_rates(&self.spec.normalized())
            .expect("same class count")
    }

    pub fn workspace(&self) -> PayoffWorkspace {
        PayoffWorkspace {
            sigma: self
                .classes
                .iter()
                .map(|cd| DMatrix::zeros(cd.p, cd.q))
                .collect(),
            tables: self
                .classes
                .iter()
                .map(|cd| DMatrix::zeros(cd.p, cd.q))
                .collect(),
        }
    }

    /// State-action distributions `sigma^c[s, a] = sum_u mu^c[s, u] u(a|s)`.
    pub fn sigma_into(&self, mu: &[f64], sigma: &mut [DMatrix<f64>]) {
        for (c, cd) in self.classes.iter().enumerate() {
            let sg = &mut sigma[c];
            sg.fill(0.0);
            let block = &mu[cd.mu_offset..cd.mu_offset + cd.mu_len()];
            for (u, pol) in cd.policies.iter().enumerate() {
                for s in 0..cd.p {
                    sg[(s, pol.actions[s])] += block[s + cd.p * u];
                }
            }
        }
    }

    pub fn sigma(&self, mu: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let mut ws = self.workspace();
        self.sigma_into(mu.as_slice(), &mut ws.sigma);
        ws.sigma
    }

    /// Steady-state sigma of policy masses: `sigma^c = Pi_SA^c x^c`.
    pub fn sigma_from_masses_into(&self, x: &[f64], sigma: &mut [DMatrix<f64>]) {
        for (c, cd) in self.classes.iter().enumerate() {
            let sg = &mut sigma[c];
            sg.fill(0.0);
            for (u, pol) in cd.policies.iter().enumerate() {
                let xu = x[cd.x_offset + u];
                let eta = &cd.chains[u].stationary;
                for s in 0..cd.p {
                    sg[(s, pol.actions[s])] += eta[s] * xu;
                }
            }
        }
    }

    fn tables_from_sigma(&self, ws: &mut PayoffWorkspace) -> Result<()> {
        for (c, class) in self.spec.classes.iter().enumerate() {
            class
                .reward
                .evaluate_into(c, &ws.sigma, &mut ws.tables[c]);
            let cd = &self.classes[c];
            for s in 0..cd.p {
                for &a in &class.available[s] {
                    let v = ws.tables[c][(s, a)];
                    if !v.is_finite() {
                        return Err(Error::RewardEvaluation {
                            class: c,
                            state: s,
                            action: a,
                            reason: format!(
                                "non-finite reward {v} at state '{}', action '{}'",
                                class.states[s], class.actions[a]
                            ),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    fn payoff_from_tables(&self, ws: &PayoffWorkspace, out: &mut [f64]) {
        for (c, cd) in self.classes.iter().enumerate() {
            let table = &ws.tables[c];
            for (u, pol) in cd.policies.iter().enumerate() {
                let eta = &cd.chains[u].stationary;
                let mut f = 0.0;
                for s in 0..cd.p {
                    f += eta[s] * table[(s, pol.actions[s])];
                }
                out[cd.x_offset + u] = f;
            }
        }
    }

    /// Payoff of every policy against the current state-action distribution.
    pub fn payoff_into(&self, mu: &[f64], ws: &mut PayoffWorkspace, out: &mut [f64]) -> Result<()> {
        self.sigma_into(mu, &mut ws.sigma);
        self.tables_from_sigma(ws)?;
        self.payoff_from_tables(ws, out);
        Ok(())
    }

    pub fn payoff(&self, mu: &DVector<f64>) -> Result<DVector<f64>> {
        let mut ws = self.workspace();
        let mut out = DVector::zeros(self.x_len);
        self.payoff_into(mu.as_slice(), &mut ws, out.as_mut_slice())?;
        Ok(out)
    }

    /// Payoffs of the steady-state game, evaluated at the stationary
    /// embedding of `x`.
    pub fn steady_state_payoff_into(
        &self,
        x: &[f64],
        ws: &mut PayoffWorkspace,
        out: &mut [f64],
    ) -> Result<()> {
        self.sigma_from_masses_into(x, &mut ws.sigma);
        self.tables_from_sigma(ws)?;
        self.payoff_from_tables(ws, out);
        Ok(())
    }

    pub fn steady_state_payoff(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut ws = self.workspace();
        let mut out = DVector::zeros(self.x_len);
        self.steady_state_payoff_into(x.as_slice(), &mut ws, out.as_mut_slice())?;
        Ok(out)
    }

    /// Stationary embedding `mu[s, u] = eta^u(s) x_u`.
    pub fn embed_stationary(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut mu = DVector::zeros(self.mu_len);
        for cd in &self.classes {
            for u in 0..cd.n {
                let xu = x[cd.x_offset + u];
                for s in 0..cd.p {
                    mu[cd.mu_offset + s + cd.p * u] = cd.chains[u].stationary[s] * xu;
                }
            }
        }
        mu
    }

    /// Policy masses `x_u = mu[S, u]`.
    pub fn policy_masses(&self, mu: &DVector<f64>) -> DVector<f64> {
        let mut x = DVector::zeros(self.x_len);
        for cd in &self.classes {
            for u in 0..cd.n {
                let start = cd.mu_offset + cd.p * u;
                x[cd.x_offset + u] = mu.rows(start, cd.p).sum();
            }
        }
        x
    }

    /// Uniform policy masses embedded at their stationary state distributions.
    pub fn uniform_masses(&self) -> DVector<f64> {
        let mut x = DVector::zeros(self.x_len);
        for (cd, class) in self.classes.iter().zip(&self.spec.classes) {
            for u in 0..cd.n {
                x[cd.x_offset + u] = class.mass / cd.n as f64;
            }
        }
        x
    }

    fn check_blocks(
        &self,
        v: &DVector<f64>,
        len: usize,
        block: impl Fn(&ClassData) -> (usize, usize),
        tol: f64,
        what: &str,
    ) -> Result<()> {
        if v.len() != len {
            return Err(Error::Domain(format!(
                "{what} has length {}, expected {len}",
                v.len()
            )));
        }
        for (c, cd) in self.classes.iter().enumerate() {
            let (start, size) = block(cd);
            let seg = v.rows(start, size);
            let m = self.spec.classes[c].mass;
            if seg.iter().any(|e| !e.is_finite()) {
                return Err(Error::Domain(format!("{what} of class {c} has non-finite entries")));
            }
            let min = seg.min();
            if min < -tol {
                return Err(Error::Domain(format!(
                    "{what} of class {c} has negative entry {min:.3e}"
                )));
            }
            let sum = seg.sum();
            if (sum - m).abs() > tol * m.max(1.0) {
                return Err(Error::Domain(format!(
                    "{what} of class {c} sums to {sum}, expected mass {m}"
                )));
            }
        }
        Ok(())
    }

    pub fn check_population(&self, mu: &DVector<f64>, tol: f64) -> Result<()> {
        self.check_blocks(mu, self.mu_len, |cd| (cd.mu_offset, cd.mu_len()), tol, "population state")
    }

    pub fn check_policy_masses(&self, x: &DVector<f64>, tol: f64) -> Result<()> {
        self.check_blocks(x, self.x_len, |cd| (cd.x_offset, cd.n), tol, "policy masses")
    }

    /// Linear map from policy masses to the distribution shaping rewards.
    /// `custom` supplies, per class, a matrix applied to the flattened
    /// state-action distribution (index `s + p*a`); only used for
    /// [`PiVariant::Custom`].
    pub fn pi_map(&self, variant: PiVariant, custom: Option<&[DMatrix<f64>]>) -> Result<PiMap> {
        let mut blocks = Vec::with_capacity(self.classes.len());
        let mut labels = Vec::new();
        let mut offsets = Vec::new();
        let mut row = 0;
        for (c, cd) in self.classes.iter().enumerate() {
            let class = &self.spec.classes[c];
            let block = match variant {
                PiVariant::StateAction => {
                    for a in 0..cd.q {
                        for s in 0..cd.p {
                            labels.push(format!("{}:{}/{}", class.name, class.states[s], class.actions[a]));
                        }
                    }
                    cd.pi_state_action.clone()
                }
                PiVariant::Action => {
                    let mut m = DMatrix::zeros(cd.q, cd.n);
                    for a in 0..cd.q {
                        labels.push(format!("{}:{}", class.name, class.actions[a]));
                        for u in 0..cd.n {
                            m[(a, u)] = cd.pi_state_action.rows(cd.p * a, cd.p).column(u).sum();
                        }
                    }
                    m
                }
                PiVariant::Custom => {
                    let maps = custom.ok_or_else(|| {
                        Error::Parameter("custom pi map needs one matrix per class".into())
                    })?;
                    let l = maps.get(c).ok_or_else(|| {
                        Error::Parameter(format!("custom pi map missing for class {c}"))
                    })?;
                    if l.ncols() != cd.p * cd.q {
                        return Err(Error::Parameter(format!(
                            "custom pi map of class {c} needs {} columns",
                            cd.p * cd.q
                        )));
                    }
                    for r in 0..l.nrows() {
                        labels.push(format!("{}:f{r}", class.name));
                    }
                    l * &cd.pi_state_action
                }
            };
            offsets.push(row);
            row += block.nrows();
            blocks.push(block);
        }
        Ok(PiMap {
            variant,
            matrix: crate::linalg::block_diag(&blocks),
            row_labels: labels,
            row_offsets: offsets,
        })
    }
}
