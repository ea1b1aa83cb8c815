//! Dual-reward episodic MDPs, transfer policies and exact dynamic programming.
//!
//! Steps are indexed `0..horizon` throughout the crate; value tables carry an
//! extra row at `horizon` that is identically zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on probability rows and the initial distribution.
pub const PROB_TOL: f64 = 1e-9;

/// Two action values closer than this are treated as tied; ties go to the
/// smallest action index.
pub const TIE_TOL: f64 = 1e-12;

/// A finite-horizon MDP with separate agent and principal reward tables.
///
/// Transitions and rewards are stationary. The principal may additionally
/// collect `terminal_principal[s][a]` on the final step, which is how an
/// end-of-episode externality is expressed without time-indexed tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpDocument", into = "MdpDocument")]
pub struct FiniteMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    // [s][a][s']
    transition: Vec<f64>,
    // [s][a]
    reward_agent: Vec<f64>,
    reward_principal: Vec<f64>,
    terminal_principal: Option<Vec<f64>>,
    initial: Vec<f64>,
}

/// On-disk JSON layout of an MDP.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MdpDocument {
    #[serde(rename = "S")]
    pub s: usize,
    #[serde(rename = "A")]
    pub a: usize,
    #[serde(rename = "H")]
    pub h: usize,
    #[serde(rename = "P")]
    pub p: Vec<Vec<Vec<f64>>>,
    pub r_a: Vec<Vec<f64>>,
    pub r_p: Vec<Vec<f64>>,
    pub rho0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_p_terminal: Option<Vec<Vec<f64>>>,
}

impl TryFrom<MdpDocument> for FiniteMdp {
    type Error = Error;

    fn try_from(doc: MdpDocument) -> Result<Self> {
        let mdp = FiniteMdp::new(doc.h, doc.p, doc.r_a, doc.r_p, doc.rho0)?;
        if mdp.num_states != doc.s || mdp.num_actions != doc.a {
            return Err(Error::config(format!(
                "declared S={} A={} but tables are {}x{}",
                doc.s, doc.a, mdp.num_states, mdp.num_actions
            )));
        }
        match doc.r_p_terminal {
            Some(t) => mdp.with_terminal_principal(t),
            None => Ok(mdp),
        }
    }
}

impl From<FiniteMdp> for MdpDocument {
    fn from(m: FiniteMdp) -> Self {
        let (s, k) = (m.num_states, m.num_actions);
        let table = |v: &[f64]| v.chunks(k).map(<[f64]>::to_vec).collect::<Vec<_>>();
        MdpDocument {
            s,
            a: k,
            h: m.horizon,
            p: (0..s)
                .map(|si| (0..k).map(|a| m.next_dist(si, a).to_vec()).collect())
                .collect(),
            r_a: table(&m.reward_agent),
            r_p: table(&m.reward_principal),
            rho0: m.initial.clone(),
            r_p_terminal: m.terminal_principal.as_deref().map(table),
        }
    }
}

fn flatten_table(name: &str, rows: Vec<Vec<f64>>, s: usize, k: usize) -> Result<Vec<f64>> {
    if rows.len() != s || rows.iter().any(|r| r.len() != k) {
        return Err(Error::config(format!("{name} must be {s}x{k}")));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    if let Some(x) = flat.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(Error::config(format!("{name} entry {x} outside [0,1]")));
    }
    Ok(flat)
}

impl FiniteMdp {
    /// Builds and validates an MDP from nested tables, `p[s][a][s']`.
    pub fn new(
        horizon: usize,
        p: Vec<Vec<Vec<f64>>>,
        r_a: Vec<Vec<f64>>,
        r_p: Vec<Vec<f64>>,
        rho0: Vec<f64>,
    ) -> Result<Self> {
        let s = p.len();
        let k = p.first().map_or(0, Vec::len);
        if s == 0 || k == 0 || horizon == 0 {
            return Err(Error::config("S, A and H must all be positive"));
        }
        let mut transition = Vec::with_capacity(s * k * s);
        for (si, rows) in p.into_iter().enumerate() {
            if rows.len() != k {
                return Err(Error::config(format!("P[{si}] has {} actions, expected {k}", rows.len())));
            }
            for (a, row) in rows.into_iter().enumerate() {
                check_distribution(&format!("P[{si}][{a}]"), &row, s)?;
                transition.extend(row);
            }
        }
        check_distribution("rho0", &rho0, s)?;
        Ok(FiniteMdp {
            num_states: s,
            num_actions: k,
            horizon,
            transition,
            reward_agent: flatten_table("r_a", r_a, s, k)?,
            reward_principal: flatten_table("r_p", r_p, s, k)?,
            terminal_principal: None,
            initial: rho0,
        })
    }

    /// Attaches a final-step principal reward table `[s][a]` with entries in [0,1].
    pub fn with_terminal_principal(mut self, table: Vec<Vec<f64>>) -> Result<Self> {
        let flat = flatten_table("r_p_terminal", table, self.num_states, self.num_actions)?;
        self.terminal_principal = Some(flat);
        Ok(self)
    }

    /// Same MDP with the principal reward tables replaced.
    pub fn with_principal_rewards(mut self, r_p: Vec<Vec<f64>>) -> Result<Self> {
        self.reward_principal = flatten_table("r_p", r_p, self.num_states, self.num_actions)?;
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| Error::config(format!("{}: {}", e.path(), e.inner())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("MDP serialization cannot fail")
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial_distribution(&self) -> &[f64] {
        &self.initial
    }

    /// Distribution over next states after playing `a` in `s`.
    pub fn next_dist(&self, s: usize, a: usize) -> &[f64] {
        let n = self.num_states;
        let start = (s * self.num_actions + a) * n;
        &self.transition[start..start + n]
    }

    pub fn reward_agent(&self, s: usize, a: usize) -> f64 {
        self.reward_agent[s * self.num_actions + a]
    }

    /// Principal reward at `(s, a)` on step `h`, including any final-step term.
    pub fn reward_principal(&self, h: usize, s: usize, a: usize) -> f64 {
        let i = s * self.num_actions + a;
        let base = self.reward_principal[i];
        match &self.terminal_principal {
            Some(t) if h + 1 == self.horizon => base + t[i],
            _ => base,
        }
    }

    pub fn has_terminal_principal(&self) -> bool {
        self.terminal_principal.is_some()
    }

    pub fn agent_rewards(&self) -> RewardTable {
        RewardTable {
            num_states: self.num_states,
            num_actions: self.num_actions,
            step: self.reward_agent.clone(),
            final_step: None,
        }
    }

    pub fn principal_rewards(&self) -> RewardTable {
        RewardTable {
            num_states: self.num_states,
            num_actions: self.num_actions,
            step: self.reward_principal.clone(),
            final_step: self.terminal_principal.clone(),
        }
    }

    /// `r_a + r_p`, the reward whose optimum defines the welfare benchmark.
    pub fn welfare_rewards(&self) -> RewardTable {
        let step = self
            .reward_agent
            .iter()
            .zip(&self.reward_principal)
            .map(|(a, p)| a + p)
            .collect();
        RewardTable {
            num_states: self.num_states,
            num_actions: self.num_actions,
            step,
            final_step: self.terminal_principal.clone(),
        }
    }
}

fn check_distribution(name: &str, row: &[f64], n: usize) -> Result<()> {
    if row.len() != n {
        return Err(Error::config(format!("{name} has length {}, expected {n}", row.len())));
    }
    if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::config(format!("{name} has a negative or non-finite entry")));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > PROB_TOL {
        return Err(Error::config(format!("{name} sums to {total}, not 1")));
    }
    Ok(())
}

/// Per-(s,a) reward with an optional extra term paid only on the final step.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardTable {
    num_states: usize,
    num_actions: usize,
    step: Vec<f64>,
    final_step: Option<Vec<f64>>,
}

impl RewardTable {
    /// A stationary table from nested rows `[s][a]`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let s = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if s == 0 || k == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(Error::config("reward table must be a non-empty rectangle"));
        }
        Ok(RewardTable {
            num_states: s,
            num_actions: k,
            step: rows.into_iter().flatten().collect(),
            final_step: None,
        })
    }

    pub fn constant(num_states: usize, num_actions: usize, c: f64) -> Self {
        RewardTable {
            num_states,
            num_actions,
            step: vec![c; num_states * num_actions],
            final_step: None,
        }
    }

    pub fn get(&self, s: usize, a: usize, last_step: bool) -> f64 {
        let i = s * self.num_actions + a;
        match &self.final_step {
            Some(f) if last_step => self.step[i] + f[i],
            _ => self.step[i],
        }
    }

    /// Largest per-step reward, counting the final-step term.
    pub fn max_entry(&self) -> f64 {
        let base = self.step.iter().copied().fold(0.0, f64::max);
        match &self.final_step {
            Some(f) => self
                .step
                .iter()
                .zip(f)
                .map(|(a, b)| a + b)
                .fold(base, f64::max),
            None => base,
        }
    }

    fn entries(&self) -> impl Iterator<Item = &f64> {
        self.step.iter().chain(self.final_step.iter().flatten())
    }
}

/// Nonnegative payments `tau[h][s][a]` offered by the principal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransferDocument", into = "TransferDocument")]
pub struct TransferPolicy {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    payments: Vec<f64>,
}

/// JSON layout `{"tau": [[[f64]]]}` indexed `[h][s][a]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransferDocument {
    pub tau: Vec<Vec<Vec<f64>>>,
}

impl TryFrom<TransferDocument> for TransferPolicy {
    type Error = Error;

    fn try_from(doc: TransferDocument) -> Result<Self> {
        let h = doc.tau.len();
        let s = doc.tau.first().map_or(0, Vec::len);
        let k = doc.tau.first().and_then(|r| r.first()).map_or(0, Vec::len);
        if h == 0 || s == 0 || k == 0 {
            return Err(Error::config("tau must be a non-empty [h][s][a] table"));
        }
        let mut payments = Vec::with_capacity(h * s * k);
        for step in doc.tau {
            if step.len() != s || step.iter().any(|r| r.len() != k) {
                return Err(Error::config("tau rows are ragged"));
            }
            payments.extend(step.into_iter().flatten());
        }
        if payments.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::config("transfers must be finite and nonnegative"));
        }
        Ok(TransferPolicy {
            horizon: h,
            num_states: s,
            num_actions: k,
            payments,
        })
    }
}

impl From<TransferPolicy> for TransferDocument {
    fn from(t: TransferPolicy) -> Self {
        let tau = t
            .payments
            .chunks(t.num_states * t.num_actions)
            .map(|step| step.chunks(t.num_actions).map(<[f64]>::to_vec).collect())
            .collect();
        TransferDocument { tau }
    }
}

impl TransferPolicy {
    pub fn zeros(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        TransferPolicy {
            horizon,
            num_states,
            num_actions,
            payments: vec![0.0; horizon * num_states * num_actions],
        }
    }

    pub fn zeros_for(mdp: &FiniteMdp) -> Self {
        Self::zeros(mdp.horizon(), mdp.num_states(), mdp.num_actions())
    }

    /// Replicates one `[s][a]` table across every step.
    pub fn stationary(horizon: usize, table: &[Vec<f64>]) -> Result<Self> {
        let s = table.len();
        let k = table.first().map_or(0, Vec::len);
        if horizon == 0 || s == 0 || k == 0 || table.iter().any(|r| r.len() != k) {
            return Err(Error::config("stationary transfer table must be a non-empty rectangle"));
        }
        let one: Vec<f64> = table.iter().flatten().copied().collect();
        if one.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::config("transfers must be finite and nonnegative"));
        }
        Ok(TransferPolicy {
            horizon,
            num_states: s,
            num_actions: k,
            payments: one.repeat(horizon),
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn index(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.num_states + s) * self.num_actions + a
    }

    pub fn get(&self, h: usize, s: usize, a: usize) -> f64 {
        self.payments[self.index(h, s, a)]
    }

    /// Sets one payment. Negative or non-finite values are rejected.
    pub fn set(&mut self, h: usize, s: usize, a: usize, value: f64) -> Result<()> {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::input(format!("transfer {value} must be finite and nonnegative")));
        }
        let i = self.index(h, s, a);
        self.payments[i] = value;
        Ok(())
    }

    /// Payments offered over all actions at `(h, s)`.
    pub fn offered(&self, h: usize, s: usize) -> &[f64] {
        let start = self.index(h, s, 0);
        &self.payments[start..start + self.num_actions]
    }

    pub fn max_entry(&self) -> f64 {
        self.payments.iter().copied().fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor >= 0.0) {
            return Err(Error::input("transfer scale factor must be nonnegative"));
        }
        let mut out = self.clone();
        out.payments.iter_mut().for_each(|x| *x *= factor);
        Ok(out)
    }

    pub fn is_zero(&self) -> bool {
        self.payments.iter().all(|&x| x == 0.0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("transfer serialization cannot fail")
    }

    pub(crate) fn check_dims(&self, mdp: &FiniteMdp) -> Result<()> {
        if self.horizon != mdp.horizon()
            || self.num_states != mdp.num_states()
            || self.num_actions != mdp.num_actions()
        {
            return Err(Error::config(format!(
                "transfer policy is {}x{}x{} but the MDP is {}x{}x{}",
                self.horizon,
                self.num_states,
                self.num_actions,
                mdp.horizon(),
                mdp.num_states(),
                mdp.num_actions()
            )));
        }
        Ok(())
    }
}

/// Optimal finite-horizon values and the greedy policy.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueSolution {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    q: Vec<f64>,
    v: Vec<f64>,
    greedy: Vec<usize>,
}

impl ValueSolution {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q[(h * self.num_states + s) * self.num_actions + a]
    }

    pub fn q_row(&self, h: usize, s: usize) -> &[f64] {
        let start = (h * self.num_states + s) * self.num_actions;
        &self.q[start..start + self.num_actions]
    }

    /// `V_h(s)`; `h == horizon` is the zero terminal row.
    pub fn v(&self, h: usize, s: usize) -> f64 {
        self.v[h * self.num_states + s]
    }

    pub fn greedy(&self, h: usize, s: usize) -> usize {
        self.greedy[h * self.num_states + s]
    }

    pub fn greedy_policy(&self) -> DeterministicPolicy {
        DeterministicPolicy {
            num_states: self.num_states,
            actions: self.greedy.clone(),
        }
    }

    /// Expected value of step-0 values under `dist`.
    pub fn initial_value(&self, dist: &[f64]) -> f64 {
        dist.iter().enumerate().map(|(s, p)| p * self.v(0, s)).sum()
    }
}

/// Index of the largest entry, ties (within [`TIE_TOL`]) going to the smallest index.
pub fn argmax_lex(values: &[f64]) -> usize {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .position(|&x| x >= best - TIE_TOL)
        .unwrap_or(0)
}

/// Backward induction for an arbitrary step reward and transition model.
///
/// `reward(h, s, a)` may be negative; `next(s, a)` returns a distribution over
/// next states. Used directly by optimistic planners.
pub(crate) fn backward_induction<R, P>(
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    reward: R,
    next: P,
    cap: impl Fn(usize) -> f64,
) -> ValueSolution
where
    R: Fn(usize, usize, usize) -> f64,
    P: Fn(usize, usize) -> Vec<f64>,
{
    let (n, k) = (num_states, num_actions);
    let mut q = vec![0.0; horizon * n * k];
    let mut v = vec![0.0; (horizon + 1) * n];
    let mut greedy = vec![0; horizon * n];
    let dists: Vec<Vec<f64>> = (0..n * k).map(|i| next(i / k, i % k)).collect();
    for h in (0..horizon).rev() {
        let (cur, nxt) = v.split_at_mut((h + 1) * n);
        let v_next = &nxt[..n];
        for s in 0..n {
            let row = &mut q[(h * n + s) * k..(h * n + s + 1) * k];
            for (a, slot) in row.iter_mut().enumerate() {
                let cont: f64 = dists[s * k + a].iter().zip(v_next).map(|(p, x)| p * x).sum();
                *slot = reward(h, s, a) + cont;
            }
            let g = argmax_lex(row);
            greedy[h * n + s] = g;
            let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            cur[h * n + s] = best.min(cap(h));
        }
    }
    ValueSolution {
        horizon,
        num_states,
        num_actions,
        q,
        v,
        greedy,
    }
}

/// Exact optimal values of `reward + transfers` under the MDP's dynamics.
pub fn value_iteration(
    mdp: &FiniteMdp,
    reward: &RewardTable,
    transfers: Option<&TransferPolicy>,
) -> Result<ValueSolution> {
    if reward.num_states != mdp.num_states() || reward.num_actions != mdp.num_actions() {
        return Err(Error::config(format!(
            "reward table is {}x{} but the MDP is {}x{}",
            reward.num_states,
            reward.num_actions,
            mdp.num_states(),
            mdp.num_actions()
        )));
    }
    if reward.entries().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(Error::config("reward entries must be finite and nonnegative"));
    }
    if let Some(t) = transfers {
        t.check_dims(mdp)?;
    }
    let last = mdp.horizon() - 1;
    Ok(backward_induction(
        mdp.horizon(),
        mdp.num_states(),
        mdp.num_actions(),
        |h, s, a| reward.get(s, a, h == last) + transfers.map_or(0.0, |t| t.get(h, s, a)),
        |s, a| mdp.next_dist(s, a).to_vec(),
        |_| f64::INFINITY,
    ))
}

/// A non-stationary deterministic policy `actions[h][s]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeterministicPolicy {
    num_states: usize,
    actions: Vec<usize>,
}

impl DeterministicPolicy {
    pub fn new(num_states: usize, actions: Vec<usize>) -> Self {
        assert!(num_states > 0 && actions.len().is_multiple_of(num_states));
        DeterministicPolicy {
            num_states,
            actions,
        }
    }

    pub fn action(&self, h: usize, s: usize) -> usize {
        self.actions[h * self.num_states + s]
    }

    pub fn horizon(&self) -> usize {
        self.actions.len() / self.num_states
    }
}

/// A non-stationary stochastic policy `probs[h][s][a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticPolicy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl StochasticPolicy {
    pub fn from_fn(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        mut f: impl FnMut(usize, usize) -> Vec<f64>,
    ) -> Self {
        let mut probs = Vec::with_capacity(horizon * num_states * num_actions);
        for h in 0..horizon {
            for s in 0..num_states {
                let row = f(h, s);
                debug_assert_eq!(row.len(), num_actions);
                probs.extend(row);
            }
        }
        StochasticPolicy {
            num_states,
            num_actions,
            probs,
        }
    }

    pub fn from_deterministic(policy: &DeterministicPolicy, num_actions: usize) -> Self {
        Self::from_fn(policy.horizon(), policy.num_states, num_actions, |h, s| {
            let mut row = vec![0.0; num_actions];
            row[policy.action(h, s)] = 1.0;
            row
        })
    }

    pub fn probs(&self, h: usize, s: usize) -> &[f64] {
        let start = (h * self.num_states + s) * self.num_actions;
        &self.probs[start..start + self.num_actions]
    }
}

/// Values `V_h(s)` of a fixed policy for `reward + transfers`, by backward recursion.
pub fn evaluate_policy(
    mdp: &FiniteMdp,
    reward: &RewardTable,
    transfers: Option<&TransferPolicy>,
    policy: &StochasticPolicy,
) -> Vec<Vec<f64>> {
    let (n, hz) = (mdp.num_states(), mdp.horizon());
    let mut v = vec![vec![0.0; n]; hz + 1];
    for h in (0..hz).rev() {
        for s in 0..n {
            let mut acc = 0.0;
            for (a, &pa) in policy.probs(h, s).iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                let r = reward.get(s, a, h + 1 == hz) + transfers.map_or(0.0, |t| t.get(h, s, a));
                let cont: f64 = mdp.next_dist(s, a).iter().zip(&v[h + 1]).map(|(p, x)| p * x).sum();
                acc += pa * (r + cont);
            }
            v[h][s] = acc;
        }
    }
    v
}

/// Expected return of a policy from the initial distribution.
pub fn expected_return(
    mdp: &FiniteMdp,
    reward: &RewardTable,
    transfers: Option<&TransferPolicy>,
    policy: &StochasticPolicy,
) -> f64 {
    let v = evaluate_policy(mdp, reward, transfers, policy);
    mdp.initial_distribution()
        .iter()
        .zip(&v[0])
        .map(|(p, x)| p * x)
        .sum()
}

/// Expected return of a deterministic policy for an arbitrary step reward,
/// propagating the state distribution forward from the initial one.
pub fn evaluate_deterministic(
    mdp: &FiniteMdp,
    policy: &DeterministicPolicy,
    reward: impl Fn(usize, usize, usize) -> f64,
) -> f64 {
    let n = mdp.num_states();
    let mut dist = mdp.initial_distribution().to_vec();
    let mut total = 0.0;
    for h in 0..mdp.horizon() {
        let mut next = vec![0.0; n];
        for (s, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let a = policy.action(h, s);
            total += mass * reward(h, s, a);
            for (sp, p) in mdp.next_dist(s, a).iter().enumerate() {
                next[sp] += mass * p;
            }
        }
        dist = next;
    }
    total
}

/// One decision of an episode.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub h: usize,
    pub s: usize,
    pub a: usize,
}

fn check_trajectory(mdp: &FiniteMdp, trajectory: &[Step]) -> Result<()> {
    if trajectory.len() != mdp.horizon() {
        return Err(Error::input(format!(
            "trajectory has {} steps, horizon is {}",
            trajectory.len(),
            mdp.horizon()
        )));
    }
    for (i, st) in trajectory.iter().enumerate() {
        if st.h != i || st.s >= mdp.num_states() || st.a >= mdp.num_actions() {
            return Err(Error::input(format!("malformed step {i}: {st:?}")));
        }
    }
    Ok(())
}

/// Sum of both players' base rewards along a trajectory. Transfers never enter.
pub fn episode_welfare(mdp: &FiniteMdp, trajectory: &[Step]) -> Result<f64> {
    check_trajectory(mdp, trajectory)?;
    Ok(trajectory
        .iter()
        .map(|st| mdp.reward_agent(st.s, st.a) + mdp.reward_principal(st.h, st.s, st.a))
        .sum())
}

/// Agent return including the transfers received along the trajectory.
pub fn agent_return(mdp: &FiniteMdp, trajectory: &[Step], transfers: &TransferPolicy) -> Result<f64> {
    check_trajectory(mdp, trajectory)?;
    transfers.check_dims(mdp)?;
    Ok(trajectory
        .iter()
        .map(|st| mdp.reward_agent(st.s, st.a) + transfers.get(st.h, st.s, st.a))
        .sum())
}

/// Principal return net of the transfers paid along the trajectory.
pub fn principal_return(
    mdp: &FiniteMdp,
    trajectory: &[Step],
    transfers: &TransferPolicy,
) -> Result<f64> {
    check_trajectory(mdp, trajectory)?;
    transfers.check_dims(mdp)?;
    Ok(trajectory
        .iter()
        .map(|st| mdp.reward_principal(st.h, st.s, st.a) - transfers.get(st.h, st.s, st.a))
        .sum())
}

/// The welfare benchmark `W*` and a policy attaining it.
#[derive(Clone, Debug, PartialEq)]
pub struct WelfareOptimum {
    pub w_star: f64,
    pub policy: DeterministicPolicy,
    pub solution: ValueSolution,
}

/// Maximizes expected `r_a + r_p` over non-stationary policies.
pub fn optimal_welfare(mdp: &FiniteMdp) -> WelfareOptimum {
    let solution = value_iteration(mdp, &mdp.welfare_rewards(), None)
        .expect("welfare rewards are dimensioned to the MDP");
    WelfareOptimum {
        w_star: solution.initial_value(mdp.initial_distribution()),
        policy: solution.greedy_policy(),
        solution,
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn one_state(h: usize, r_a: Vec<f64>, r_p: Vec<f64>) -> FiniteMdp {
        let k = r_a.len();
        FiniteMdp::new(h, vec![vec![vec![1.0]; k]], vec![r_a], vec![r_p], vec![1.0]).unwrap()
    }

    /// Two-state deterministic chain: in s0, a0 pays 0.1 and stays, a1 pays
    /// 0 and moves to s1; in s1, a0 pays 1.0 and a1 pays 0.2, both stay.
    pub(crate) fn chain() -> FiniteMdp {
        FiniteMdp::new(
            2,
            vec![
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            ],
            vec![vec![0.1, 0.0], vec![1.0, 0.2]],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            vec![1.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn single_step_q_is_immediate_reward() {
        let m = one_state(1, vec![0.9, 0.3], vec![0.0, 0.0]);
        let sol = value_iteration(&m, &m.agent_rewards(), None).unwrap();
        assert_eq!(sol.q(0, 0, 0), 0.9);
        assert_eq!(sol.q(0, 0, 1), 0.3);
        assert_eq!(sol.v(0, 0), 0.9);
    }

    #[test]
    fn chain_backward_induction() {
        let m = chain();
        let sol = value_iteration(&m, &m.agent_rewards(), None).unwrap();
        assert!((sol.v(1, 0) - 0.1).abs() < 1e-12);
        assert!((sol.v(1, 1) - 1.0).abs() < 1e-12);
        assert!((sol.q(0, 0, 0) - 0.2).abs() < 1e-12);
        assert!((sol.q(0, 0, 1) - 1.0).abs() < 1e-12);
        assert_eq!(sol.greedy(0, 0), 1);
    }

    #[test]
    fn constant_reward_telescopes() {
        let m = chain();
        let sol = value_iteration(&m, &RewardTable::constant(2, 2, 0.25), None).unwrap();
        for h in 0..=2 {
            for s in 0..2 {
                assert!((sol.v(h, s) - (2 - h) as f64 * 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let m = chain();
        let bad = RewardTable::constant(3, 2, 0.0);
        assert!(matches!(value_iteration(&m, &bad, None), Err(Error::Config(_))));
        let t = TransferPolicy::zeros(1, 2, 2);
        assert!(matches!(
            value_iteration(&m, &m.agent_rewards(), Some(&t)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn welfare_examples() {
        let m = one_state(1, vec![0.4], vec![0.5]);
        let tr = [Step { h: 0, s: 0, a: 0 }];
        assert!((episode_welfare(&m, &tr).unwrap() - 0.9).abs() < 1e-15);

        let c = chain();
        let tr = [Step { h: 0, s: 0, a: 1 }, Step { h: 1, s: 1, a: 0 }];
        let zero = TransferPolicy::zeros_for(&c);
        assert_eq!(
            episode_welfare(&c, &tr).unwrap(),
            agent_return(&c, &tr, &zero).unwrap()
        );
        let mut t = zero.clone();
        t.set(0, 0, 1, 0.7).unwrap();
        let w = episode_welfare(&c, &tr).unwrap();
        let sum = agent_return(&c, &tr, &t).unwrap() + principal_return(&c, &tr, &t).unwrap();
        assert!((w - sum).abs() < 1e-12);
    }

    #[test]
    fn malformed_trajectory_rejected() {
        let c = chain();
        assert!(episode_welfare(&c, &[Step { h: 0, s: 0, a: 0 }]).is_err());
        let tr = [Step { h: 0, s: 0, a: 0 }, Step { h: 0, s: 0, a: 0 }];
        assert!(episode_welfare(&c, &tr).is_err());
        let tr = [Step { h: 0, s: 0, a: 5 }, Step { h: 1, s: 0, a: 0 }];
        assert!(episode_welfare(&c, &tr).is_err());
    }

    #[test]
    fn optimal_welfare_examples() {
        let m = one_state(3, vec![0.3, 0.6], vec![0.7, 0.4]);
        assert!((optimal_welfare(&m).w_star - 3.0).abs() < 1e-12);

        let c = chain();
        let opt = optimal_welfare(&c);
        assert!((opt.w_star - 1.0).abs() < 1e-12);
        assert_eq!(opt.policy.action(0, 0), 1);
        assert_eq!(opt.policy.action(1, 1), 0);

        let m = one_state(1, vec![0.9, 0.1, 0.5], vec![0.0, 0.8, 0.5]);
        assert_eq!(optimal_welfare(&m).policy.action(0, 0), 2);
    }

    #[test]
    fn ties_resolve_to_smallest_index() {
        assert_eq!(argmax_lex(&[0.5, 0.5, 0.2]), 0);
        assert_eq!(argmax_lex(&[0.1, 0.9, 0.9]), 1);
        assert_eq!(argmax_lex(&[0.9, 0.3 + 0.6]), 0);
    }

    #[test]
    fn invalid_mdps_rejected() {
        let bad_row = FiniteMdp::new(1, vec![vec![vec![0.5, 0.4]]; 2], vec![vec![0.0]; 2], vec![vec![0.0]; 2], vec![1.0, 0.0]);
        assert!(bad_row.is_err());
        let neg = FiniteMdp::new(1, vec![vec![vec![1.5, -0.5]]; 2], vec![vec![0.0]; 2], vec![vec![0.0]; 2], vec![1.0, 0.0]);
        assert!(neg.is_err());
        let big_reward = FiniteMdp::new(1, vec![vec![vec![1.0]]], vec![vec![1.2]], vec![vec![0.0]], vec![1.0]);
        assert!(big_reward.is_err());
        let bad_rho = FiniteMdp::new(1, vec![vec![vec![1.0]]], vec![vec![0.2]], vec![vec![0.0]], vec![0.9]);
        assert!(bad_rho.is_err());
    }

    #[test]
    fn json_round_trip_and_field_paths() {
        let c = chain().with_terminal_principal(vec![vec![0.5, 0.0], vec![0.0, 1.0]]).unwrap();
        let back = FiniteMdp::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        let text = r#"{"S":1,"A":1,"H":1,"P":[[[1.0]]],"r_a":[[0.1]],"r_p":[["x"]],"rho0":[1.0]}"#;
        let err = FiniteMdp::from_json(text).unwrap_err().to_string();
        assert!(err.contains("r_p"), "{err}");
        let plain = r#"{"S":1,"A":1,"H":2,"P":[[[1.0]]],"r_a":[[0.1]],"r_p":[[0.3]],"rho0":[1.0]}"#;
        let m = FiniteMdp::from_json(plain).unwrap();
        assert_eq!(m.horizon(), 2);
        assert!(!m.to_json().contains("r_p_terminal"));
    }

    #[test]
    fn terminal_reward_only_on_last_step() {
        let m = one_state(3, vec![0.0], vec![0.2])
            .with_terminal_principal(vec![vec![0.5]])
            .unwrap();
        assert_eq!(m.reward_principal(0, 0, 0), 0.2);
        assert_eq!(m.reward_principal(2, 0, 0), 0.7);
        assert!((optimal_welfare(&m).w_star - 1.1).abs() < 1e-12);
    }

    #[test]
    fn transfer_json_layout() {
        let t = TransferPolicy::stationary(2, &[vec![0.0, 0.5]]).unwrap();
        assert_eq!(t.to_json(), r#"{"tau":[[[0.0,0.5]],[[0.0,0.5]]]}"#);
        let back: TransferPolicy = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(back, t);
        assert!(serde_json::from_str::<TransferPolicy>(r#"{"tau":[[[-1.0]]]}"#).is_err());
    }

    #[test]
    fn stationary_transfers_replicate() {
        let t = TransferPolicy::stationary(4, &[vec![0.1, 0.2], vec![0.3, 0.0]]).unwrap();
        for h in 0..4 {
            assert_eq!(t.offered(h, 1), &[0.3, 0.0]);
            assert_eq!(t.get(h, 0, 1), t.get(0, 0, 1));
        }
        assert!(TransferPolicy::stationary(2, &[vec![-0.1]]).is_err());
    }
}
