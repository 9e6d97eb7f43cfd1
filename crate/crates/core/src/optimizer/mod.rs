//! Joint token/bandwidth/power allocation maximising semantic transmission
//! efficiency (STE): retained importance divided by straggler uplink latency.
//!
//! The solver alternates three blocks, each holding the others fixed:
//! power ([`power::solve_power`]), bandwidth ([`bandwidth::solve_bandwidth`])
//! and token budgets ([`budget::best_token_vector`]). A block's result is kept
//! only when it stays feasible and does not lower STE, so the trace is
//! monotone.

pub mod bandwidth;
pub mod budget;
pub mod power;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ModelError, OptimizeError};
use crate::model::{rate_unchecked, LinkState, SystemParams};
use crate::tokens::ImportanceProfile;

use bandwidth::{solve_bandwidth, BandwidthClient, BandwidthOutcome};
use budget::best_token_vector;
use power::{min_power, solve_power, uplink_energy};

/// Relative tolerance for floating-point rounding in constraint checks.
pub const CHECK_RTOL: f64 = 1e-12;
/// Absolute slack on the latency bound.
pub const TAU_SLACK: f64 = 1e-9;

/// One selected client as seen by the optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientTask {
    pub id: usize,
    pub link: LinkState,
    /// Standing time in coverage (s).
    pub standing: f64,
    /// Broadcast plus forward latency `T0` (s).
    pub base_latency: f64,
    pub importance: ImportanceProfile,
}

impl ClientTask {
    pub fn slack(&self) -> f64 {
        self.standing - self.base_latency
    }
}

/// A single round's allocation problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundProblem {
    pub params: SystemParams,
    pub clients: Vec<ClientTask>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverTolerances {
    pub eps_p: f64,
    pub eps_w: f64,
    pub eps_tau: f64,
    pub eps_k: usize,
    pub max_outer: usize,
}

impl Default for SolverTolerances {
    fn default() -> Self {
        Self {
            eps_p: 1e-6,
            eps_w: 1.0,
            eps_tau: 1e-6,
            eps_k: 0,
            max_outer: 50,
        }
    }
}

/// Which blocks of the alternating solver are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Full,
    /// Every client transmits at peak power.
    NoPower,
    /// Bandwidth stays at an equal split.
    NoBandwidth,
    /// Every client sends all `N` tokens.
    NoToken,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Full, Mode::NoPower, Mode::NoBandwidth, Mode::NoToken];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::NoPower => "no-power",
            Mode::NoBandwidth => "no-bandwidth",
            Mode::NoToken => "no-token",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode `{s}`"))
    }
}

/// Why a client does not take part in the uplink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    /// Failed the mobility screen.
    Mobility,
    /// No feasible starting point could be built with this client.
    Initialization,
    /// Power step found no feasible power.
    Power,
    /// Token step found no budget at or above `K_min`.
    Token,
}

impl ExclusionReason {
    pub fn code(self) -> &'static str {
        match self {
            ExclusionReason::Mobility => "mobility",
            ExclusionReason::Initialization => "infeasible_init",
            ExclusionReason::Power => "infeasible_power",
            ExclusionReason::Token => "infeasible_token",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientAllocation {
    pub id: usize,
    pub tokens: usize,
    pub bandwidth: f64,
    pub power: f64,
    pub feasible: bool,
    pub reason: Option<ExclusionReason>,
}

impl ClientAllocation {
    fn excluded(id: usize, reason: ExclusionReason) -> Self {
        Self {
            id,
            tokens: 0,
            bandwidth: 0.0,
            power: 0.0,
            feasible: false,
            reason: Some(reason),
        }
    }
}

/// Final per-client allocation for a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationDecision {
    /// Same order as the problem's clients.
    pub clients: Vec<ClientAllocation>,
    /// Straggler latency over feasible clients (s); zero when none are feasible.
    pub tau: f64,
    /// STE of the allocation; zero when no client is feasible.
    pub ste: f64,
}

impl AllocationDecision {
    pub fn feasible_count(&self) -> usize {
        self.clients.iter().filter(|c| c.feasible).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub ste: f64,
    pub tau: f64,
    pub tokens: Vec<usize>,
    pub bandwidth: Vec<f64>,
    pub power: Vec<f64>,
}

/// One entry per completed outer iteration.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub entries: Vec<TraceEntry>,
    /// STE at the starting point, before the first iteration.
    pub initial_ste: f64,
    pub converged: bool,
}

impl ConvergenceTrace {
    pub fn ste(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.ste).collect()
    }
}

/// STE from raw per-client retentions and latencies.
pub fn ste_value(retentions: &[f64], latencies: &[f64]) -> Result<f64, OptimizeError> {
    if retentions.is_empty() {
        return Err(OptimizeError::NoFeasibleClients);
    }
    if retentions.len() != latencies.len() {
        return Err(OptimizeError::LengthMismatch {
            what: "latencies",
            clients: retentions.len(),
            got: latencies.len(),
        });
    }
    let straggler = latencies.iter().copied().fold(0.0, f64::max);
    Ok(retentions.iter().sum::<f64>() / straggler)
}

/// Per-client uplink latency and energy for an allocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClientCost {
    pub latency: f64,
    pub energy: f64,
}

fn client_cost(alloc: &ClientAllocation, link: LinkState, params: &SystemParams) -> ClientCost {
    let bits = (alloc.tokens + 2) as f64 * params.bits_per_token();
    let rate = rate_unchecked(alloc.bandwidth, alloc.power, link.gain, params.noise_density);
    let latency = bits / rate;
    ClientCost {
        latency,
        energy: alloc.power * latency,
    }
}

/// Uplink cost of every feasible client, recomputed from the model.
pub fn decision_costs(
    problem: &RoundProblem,
    decision: &AllocationDecision,
) -> Result<Vec<Option<ClientCost>>, OptimizeError> {
    if decision.clients.len() != problem.clients.len() {
        return Err(OptimizeError::LengthMismatch {
            what: "allocations",
            clients: problem.clients.len(),
            got: decision.clients.len(),
        });
    }
    Ok(problem
        .clients
        .iter()
        .zip(&decision.clients)
        .map(|(t, a)| a.feasible.then(|| client_cost(a, t.link, &problem.params)))
        .collect())
}

/// STE over the feasible clients of a decision, recomputed from the model.
pub fn ste(problem: &RoundProblem, decision: &AllocationDecision) -> Result<f64, OptimizeError> {
    let costs = decision_costs(problem, decision)?;
    let mut retained = Vec::new();
    let mut latency = Vec::new();
    for ((task, alloc), cost) in problem.clients.iter().zip(&decision.clients).zip(costs) {
        if let Some(c) = cost {
            retained.push(
                task.importance
                    .prefix()
                    .get(alloc.tokens)
                    .copied()
                    .ok_or(ModelError::OutOfRange {
                        what: "token budget",
                        value: alloc.tokens as f64,
                        lo: 0.0,
                        hi: task.importance.len() as f64,
                    })?,
            );
            latency.push(c.latency);
        }
    }
    ste_value(&retained, &latency)
}

/// A violated constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub constraint: &'static str,
    pub client: Option<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.client {
            Some(id) => write!(f, "{} violated by client {}: {}", self.constraint, id, self.detail),
            None => write!(f, "{} violated: {}", self.constraint, self.detail),
        }
    }
}

fn within(value: f64, limit: f64) -> bool {
    value <= limit + CHECK_RTOL * limit.abs()
}

/// Check every constraint for each feasible client of `decision`.
pub fn check_feasibility(
    problem: &RoundProblem,
    decision: &AllocationDecision,
) -> Result<(), Violation> {
    let p = &problem.params;
    let costs = decision_costs(problem, decision).map_err(|e| Violation {
        constraint: "shape",
        client: None,
        detail: e.to_string(),
    })?;
    let mut total_w = 0.0;
    for ((task, a), cost) in problem.clients.iter().zip(&decision.clients).zip(costs) {
        let Some(cost) = cost else { continue };
        let fail = |constraint, detail: String| Violation {
            constraint,
            client: Some(task.id),
            detail,
        };
        if !(a.power >= 0.0 && within(a.power, p.max_power)) {
            return Err(fail("power", format!("p = {} not in [0, {}]", a.power, p.max_power)));
        }
        if !(a.bandwidth >= 0.0) {
            return Err(fail("bandwidth", format!("W = {}", a.bandwidth)));
        }
        if a.tokens < p.min_tokens || a.tokens > p.num_patches {
            return Err(fail("tokens", format!("K = {}", a.tokens)));
        }
        if !within(cost.energy, p.energy_budget) {
            return Err(fail(
                "energy",
                format!("E = {} > {}", cost.energy, p.energy_budget),
            ));
        }
        if !within(task.base_latency + cost.latency, task.standing) {
            return Err(fail(
                "standing",
                format!(
                    "T0 + T_U = {} > {}",
                    task.base_latency + cost.latency,
                    task.standing
                ),
            ));
        }
        if !(cost.latency <= decision.tau + TAU_SLACK) {
            return Err(fail(
                "round_latency",
                format!("T_U = {} > tau = {}", cost.latency, decision.tau),
            ));
        }
        total_w += a.bandwidth;
    }
    if !within(total_w, p.total_bandwidth) {
        return Err(Violation {
            constraint: "total_bandwidth",
            client: None,
            detail: format!("sum W = {} > {}", total_w, p.total_bandwidth),
        });
    }
    Ok(())
}

/// Working point over the active clients.
#[derive(Debug, Clone, PartialEq)]
struct State {
    tokens: Vec<usize>,
    bandwidth: Vec<f64>,
    power: Vec<f64>,
}

struct Solver<'a> {
    params: &'a SystemParams,
    tasks: Vec<&'a ClientTask>,
    tol: SolverTolerances,
    mode: Mode,
}

impl<'a> Solver<'a> {
    fn bits(&self, k: usize) -> f64 {
        (k + 2) as f64 * self.params.bits_per_token()
    }

    fn rate(&self, i: usize, w: f64, p: f64) -> f64 {
        rate_unchecked(w, p, self.tasks[i].link.gain, self.params.noise_density)
    }

    fn latencies(&self, s: &State) -> Vec<f64> {
        (0..self.tasks.len())
            .map(|i| self.bits(s.tokens[i]) / self.rate(i, s.bandwidth[i], s.power[i]))
            .collect()
    }

    fn ste(&self, s: &State) -> f64 {
        let retained: f64 = self
            .tasks
            .iter()
            .zip(&s.tokens)
            .map(|(t, &k)| t.importance.prefix()[k])
            .sum();
        retained / self.latencies(s).into_iter().fold(0.0, f64::max)
    }

    fn client_ok(&self, i: usize, k: usize, w: f64, p: f64) -> bool {
        let params = self.params;
        let task = self.tasks[i];
        if !(p > 0.0 && within(p, params.max_power) && w > 0.0) {
            return false;
        }
        if k < params.min_tokens || k > params.num_patches {
            return false;
        }
        let latency = self.bits(k) / self.rate(i, w, p);
        within(p * latency, params.energy_budget) && within(latency, task.slack())
    }

    fn feasible(&self, s: &State) -> bool {
        (0..self.tasks.len()).all(|i| self.client_ok(i, s.tokens[i], s.bandwidth[i], s.power[i]))
            && within(s.bandwidth.iter().sum(), self.params.total_bandwidth)
    }

    fn tau(&self, s: &State) -> f64 {
        self.latencies(s).into_iter().fold(0.0, f64::max)
    }

    fn power_step(&self, s: &State) -> Result<State, usize> {
        let mut next = s.clone();
        for i in 0..self.tasks.len() {
            let out = solve_power(
                self.bits(s.tokens[i]),
                s.bandwidth[i],
                self.tasks[i].link,
                self.tasks[i].slack(),
                self.params,
                self.tol.eps_p,
            );
            let current_ok = self.client_ok(i, s.tokens[i], s.bandwidth[i], s.power[i]);
            next.power[i] = match (out.power(), current_ok) {
                (Some(p), true) => p.max(s.power[i]),
                (Some(p), false) => p,
                (None, true) => s.power[i],
                (None, false) => return Err(i),
            };
        }
        Ok(next)
    }

    fn bandwidth_step(&self, s: &State) -> Option<State> {
        let clients: Vec<BandwidthClient> = self
            .tasks
            .iter()
            .enumerate()
            .map(|(i, t)| BandwidthClient {
                bits: self.bits(s.tokens[i]),
                power: s.power[i],
                link: t.link,
                standing: t.standing,
                base_latency: t.base_latency,
            })
            .collect();
        match solve_bandwidth(&clients, self.params, self.tol.eps_w, self.tol.eps_tau) {
            BandwidthOutcome::Allocated { bandwidth, .. } => Some(State {
                bandwidth,
                ..s.clone()
            }),
            BandwidthOutcome::Infeasible { .. } => None,
        }
    }

    /// Best `(K, p)` per client at the current bandwidth split.
    ///
    /// Unless power is pinned, each candidate budget gets the power the
    /// power step would pick for it, so token and power move together.
    fn token_step(&self, s: &State) -> Result<State, usize> {
        let params = self.params;
        let mut latency = Vec::with_capacity(self.tasks.len());
        let mut powers = Vec::with_capacity(self.tasks.len());
        for (i, task) in self.tasks.iter().enumerate() {
            let w = s.bandwidth[i];
            let mut lat_row = vec![None; params.num_patches + 1];
            let mut p_row = vec![s.power[i]; params.num_patches + 1];
            for k in params.min_tokens..=params.num_patches {
                let p = if self.mode == Mode::NoPower {
                    Some(s.power[i])
                } else {
                    solve_power(self.bits(k), w, task.link, task.slack(), params, self.tol.eps_p)
                        .power()
                };
                if let Some(p) = p.filter(|&p| self.client_ok(i, k, w, p)) {
                    lat_row[k] = Some(self.bits(k) / self.rate(i, w, p));
                    p_row[k] = p;
                }
            }
            if lat_row.iter().all(Option::is_none)
                && !self.client_ok(i, s.tokens[i], w, s.power[i])
            {
                return Err(i);
            }
            latency.push(lat_row);
            powers.push(p_row);
        }
        let importance: Vec<&ImportanceProfile> = self.tasks.iter().map(|t| &t.importance).collect();
        match best_token_vector(&latency, &importance) {
            Some((tokens, _)) => {
                let power = tokens.iter().zip(&powers).map(|(&k, row)| row[k]).collect();
                Ok(State {
                    tokens,
                    power,
                    bandwidth: s.bandwidth.clone(),
                })
            }
            None => Ok(s.clone()),
        }
    }

    fn trace_entry(&self, s: &State) -> TraceEntry {
        TraceEntry {
            ste: self.ste(s),
            tau: self.tau(s),
            tokens: s.tokens.clone(),
            bandwidth: s.bandwidth.clone(),
            power: s.power.clone(),
        }
    }
}

fn max_abs_diff<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x.into() - y.into()).abs())
        .fold(0.0, f64::max)
}

/// Starting point: smallest payload, equal split, just enough power.
///
/// Clients that cannot start are removed one at a time, weakest channel
/// first, until the rest can.
fn initial_point(
    params: &SystemParams,
    tasks: &mut Vec<&ClientTask>,
    mode: Mode,
    excluded: &mut Vec<(usize, ExclusionReason)>,
) -> Option<State> {
    let k0 = match mode {
        Mode::NoToken => params.num_patches,
        _ => params.min_tokens,
    };
    let bits = (k0 + 2) as f64 * params.bits_per_token();
    loop {
        if tasks.is_empty() {
            return None;
        }
        let w0 = params.total_bandwidth / tasks.len() as f64;
        let mut power = Vec::with_capacity(tasks.len());
        let mut bad = Vec::new();
        for (i, t) in tasks.iter().enumerate() {
            let p_min = min_power(bits, w0, t.link, t.slack(), params);
            let p0 = match mode {
                Mode::NoPower => params.max_power,
                _ => params.max_power.min(p_min),
            };
            let ok = p_min <= params.max_power
                && p0 > 0.0
                && within(uplink_energy(bits, w0, p0, t.link, params), params.energy_budget);
            if !ok {
                bad.push(i);
            }
            power.push(p0);
        }
        if bad.is_empty() {
            return Some(State {
                tokens: vec![k0; tasks.len()],
                bandwidth: vec![w0; tasks.len()],
                power,
            });
        }
        let worst = bad
            .into_iter()
            .min_by(|&a, &b| tasks[a].link.gain.total_cmp(&tasks[b].link.gain))
            .expect("non-empty");
        excluded.push((tasks[worst].id, ExclusionReason::Initialization));
        tasks.remove(worst);
    }
}

/// Run the alternating solver with all blocks active.
pub fn joint_optimize(
    problem: &RoundProblem,
    tol: &SolverTolerances,
) -> (AllocationDecision, ConvergenceTrace) {
    optimize_with_mode(problem, tol, Mode::Full)
}

/// Run the alternating solver with the blocks `mode` leaves active.
pub fn optimize_with_mode(
    problem: &RoundProblem,
    tol: &SolverTolerances,
    mode: Mode,
) -> (AllocationDecision, ConvergenceTrace) {
    let params = &problem.params;
    let mut excluded = Vec::new();
    let mut tasks: Vec<&ClientTask> = problem.clients.iter().collect();
    let mut trace = ConvergenceTrace::default();

    let Some(mut state) = initial_point(params, &mut tasks, mode, &mut excluded) else {
        return (assemble(problem, &[], None, &excluded, 0.0, 0.0), trace);
    };
    let mut solver = Solver {
        params,
        tasks,
        tol: *tol,
        mode,
    };
    trace.initial_ste = solver.ste(&state);

    let mut iter = 0;
    while iter < tol.max_outer {
        iter += 1;
        let prev = state.clone();
        let mut current = solver.ste(&state);

        if mode != Mode::NoPower {
            match solver.power_step(&state) {
                Ok(cand) => accept(&solver, &mut state, cand, &mut current),
                Err(i) => {
                    drop_client(&mut solver, &mut state, i, ExclusionReason::Power, &mut excluded);
                    if solver.tasks.is_empty() {
                        break;
                    }
                    current = solver.ste(&state);
                }
            }
        }
        if mode != Mode::NoBandwidth {
            if let Some(cand) = solver.bandwidth_step(&state) {
                accept(&solver, &mut state, cand, &mut current);
            }
        }
        if mode != Mode::NoToken {
            match solver.token_step(&state) {
                Ok(cand) => accept(&solver, &mut state, cand, &mut current),
                Err(i) => {
                    drop_client(&mut solver, &mut state, i, ExclusionReason::Token, &mut excluded);
                    if solver.tasks.is_empty() {
                        break;
                    }
                }
            }
        }

        trace.entries.push(solver.trace_entry(&state));
        if state.tokens.len() == prev.tokens.len()
            && max_abs_diff(&state.power, &prev.power) < tol.eps_p
            && max_abs_diff(&state.bandwidth, &prev.bandwidth) < tol.eps_w
            && state
                .tokens
                .iter()
                .zip(&prev.tokens)
                .all(|(a, b)| a.abs_diff(*b) <= tol.eps_k)
            && (solver.tau(&state) - solver.tau(&prev)).abs() < tol.eps_tau
        {
            trace.converged = true;
            break;
        }
    }

    if solver.tasks.is_empty() {
        return (assemble(problem, &[], None, &excluded, 0.0, 0.0), trace);
    }
    let tau = solver.tau(&state);
    let ste = solver.ste(&state);
    let ids: Vec<usize> = solver.tasks.iter().map(|t| t.id).collect();
    (
        assemble(problem, &ids, Some(&state), &excluded, tau, ste),
        trace,
    )
}

fn accept(solver: &Solver<'_>, state: &mut State, cand: State, current: &mut f64) {
    if solver.feasible(&cand) {
        let v = solver.ste(&cand);
        if v >= *current {
            *state = cand;
            *current = v;
        }
    }
}

fn drop_client(
    solver: &mut Solver<'_>,
    state: &mut State,
    i: usize,
    reason: ExclusionReason,
    excluded: &mut Vec<(usize, ExclusionReason)>,
) {
    excluded.push((solver.tasks[i].id, reason));
    solver.tasks.remove(i);
    state.tokens.remove(i);
    state.bandwidth.remove(i);
    state.power.remove(i);
}

fn assemble(
    problem: &RoundProblem,
    ids: &[usize],
    state: Option<&State>,
    excluded: &[(usize, ExclusionReason)],
    tau: f64,
    ste: f64,
) -> AllocationDecision {
    let clients = problem
        .clients
        .iter()
        .map(|t| {
            if let (Some(pos), Some(s)) = (ids.iter().position(|&id| id == t.id), state) {
                ClientAllocation {
                    id: t.id,
                    tokens: s.tokens[pos],
                    bandwidth: s.bandwidth[pos],
                    power: s.power[pos],
                    feasible: true,
                    reason: None,
                }
            } else {
                let reason = excluded
                    .iter()
                    .find(|(id, _)| *id == t.id)
                    .map(|&(_, r)| r)
                    .unwrap_or(ExclusionReason::Initialization);
                ClientAllocation::excluded(t.id, reason)
            }
        })
        .collect();
    AllocationDecision { clients, tau, ste }
}

