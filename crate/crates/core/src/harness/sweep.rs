//! Parameter sweeps over a fixed round problem, and small random instances
//! for oracle comparison.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;
use crate::model::{LinkState, SystemParams};
use crate::optimizer::{
    check_feasibility, optimize_with_mode, ste, AllocationDecision,
    ClientAllocation, ClientTask, RoundProblem, SolverTolerances,
};
use crate::oracle::{grid_joint_oracle, GridSpec};
use crate::tokens::synth_importance;

use super::config::ScenarioConfig;
use super::round::build_problem;
use super::scenario::{mix_seed, stream, Scenario};

/// The first round's screened problem for `cfg`.
pub fn first_round_problem(cfg: &ScenarioConfig) -> Result<RoundProblem, HarnessError> {
    cfg.validate()?;
    let mut scenario = Scenario::new(cfg.clone());
    let candidates = scenario.next_candidates();
    Ok(build_problem(&scenario.fleet, &candidates, cfg, 0)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub tokens: usize,
    pub ste: f64,
    /// Whether the common budget meets every constraint at this split.
    pub feasible: bool,
}

/// STE for a common token budget at an equal split and peak power.
pub fn sweep_ste_curve(
    problem: &RoundProblem,
    tokens: std::ops::RangeInclusive<usize>,
) -> Result<Vec<CurvePoint>, HarnessError> {
    let p = &problem.params;
    if problem.clients.is_empty() {
        return Err(HarnessError::Infeasible("no client passed selection".into()));
    }
    let share = p.total_bandwidth / problem.clients.len() as f64;
    tokens
        .map(|k| {
            let mut decision = AllocationDecision {
                clients: problem
                    .clients
                    .iter()
                    .map(|c| ClientAllocation {
                        id: c.id,
                        tokens: k,
                        bandwidth: share,
                        power: p.max_power,
                        feasible: true,
                        reason: None,
                    })
                    .collect(),
                tau: 0.0,
                ste: 0.0,
            };
            decision.tau = crate::optimizer::decision_costs(problem, &decision)?
                .into_iter()
                .flatten()
                .map(|c| c.latency)
                .fold(0.0, f64::max);
            let value = ste(problem, &decision)?;
            Ok(CurvePoint {
                tokens: k,
                ste: value,
                feasible: check_feasibility(problem, &decision).is_ok(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceCell {
    pub total_bandwidth: f64,
    pub energy_budget: f64,
    /// Mean token budget over selected clients; excluded clients count as zero.
    pub mean_tokens: f64,
    pub selected: usize,
    pub feasible: usize,
}

/// Mean token budget over a `W_tot` x `E_max` grid.
///
/// Each seed's first-round problem is built once from the base parameters;
/// only the two budgets change between cells.
pub fn sweep_resources(cfg: &ScenarioConfig) -> Result<Vec<ResourceCell>, HarnessError> {
    let problems: Vec<RoundProblem> = (0..cfg.sweep_seeds.max(1))
        .map(|s| {
            first_round_problem(&ScenarioConfig {
                seed: cfg.seed.wrapping_add(s),
                ..cfg.clone()
            })
        })
        .collect::<Result<_, _>>()?;
    let mut cells = Vec::new();
    for &w in &cfg.sweep_bandwidth {
        for &e in &cfg.sweep_energy {
            let mut tokens = 0usize;
            let mut selected = 0usize;
            let mut feasible = 0usize;
            for base in &problems {
                let problem = RoundProblem {
                    params: SystemParams {
                        total_bandwidth: w,
                        energy_budget: e,
                        ..base.params.clone()
                    },
                    clients: base.clients.clone(),
                };
                selected += problem.clients.len();
                if problem.clients.is_empty() {
                    continue;
                }
                let (d, _) = optimize_with_mode(&problem, &cfg.tolerances, cfg.mode);
                for a in d.clients.iter().filter(|a| a.feasible) {
                    tokens += a.tokens;
                    feasible += 1;
                }
            }
            cells.push(ResourceCell {
                total_bandwidth: w,
                energy_budget: e,
                mean_tokens: if selected > 0 {
                    tokens as f64 / selected as f64
                } else {
                    0.0
                },
                selected,
                feasible,
            });
        }
    }
    Ok(cells)
}

/// Random instance small enough for exhaustive search: at most three
/// clients and eight patches.
pub fn small_instance(seed: u64) -> RoundProblem {
    let mut rng = stream(seed, 7);
    let params = SystemParams {
        total_bandwidth: 1e5,
        batch_size: 4,
        embed_dim: 16,
        num_patches: rng.random_range(4..=8),
        min_tokens: 1,
        energy_budget: rng.random_range(2e-4..4e-3),
        ..SystemParams::default()
    };
    let n = rng.random_range(1..=3);
    let clients = (0..n)
        .map(|id| {
            let distance: f64 = rng.random_range(50.0..450.0);
            let base_latency = rng.random_range(0.0..0.5);
            ClientTask {
                id,
                link: LinkState {
                    gain: params.reference_gain * distance.powf(-params.path_exponent),
                },
                base_latency,
                standing: base_latency + rng.random_range(0.005..0.2),
                importance: synth_importance(mix_seed(&[seed, id as u64]), &params),
            }
        })
        .collect();
    RoundProblem { params, clients }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub instance: u64,
    pub clients: usize,
    pub solver_ste: f64,
    pub oracle_ste: f64,
    /// Solver STE over oracle STE.
    pub ratio: f64,
    /// The solver's decision passes the constraint closure check.
    pub closure: bool,
}

/// Coarse grid used for oracle comparisons.
pub fn coarse_grid(params: &SystemParams) -> GridSpec {
    GridSpec::for_params(params, 41, 25, 1e-2).expect("static grid is valid")
}

/// Compare the solver against the exhaustive oracle on `count` instances.
pub fn oracle_check(seed: u64, count: usize, tol: &SolverTolerances) -> Vec<OracleRow> {
    (0..count as u64)
        .filter_map(|i| {
            let instance = mix_seed(&[seed, i]);
            let problem = small_instance(instance);
            let oracle = grid_joint_oracle(&problem, &coarse_grid(&problem.params))?;
            let (d, _) = optimize_with_mode(&problem, tol, crate::optimizer::Mode::Full);
            Some(OracleRow {
                instance,
                clients: problem.clients.len(),
                solver_ste: d.ste,
                oracle_ste: oracle.ste,
                ratio: d.ste / oracle.ste,
                closure: d.feasible_count() > 0 && check_feasibility(&problem, &d).is_ok(),
            })
        })
        .collect()
}
