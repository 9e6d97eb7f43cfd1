//! One round of the workflow: screening, importance aggregation, allocation
//! and cost accounting.

use serde::{Deserialize, Serialize};

use crate::error::HarnessError;
use crate::mobility::select_clients;
use crate::model::{channel_gain, forward_latency, payload_bits, ClientProfile, SystemParams};
use crate::optimizer::{
    decision_costs, optimize_with_mode, AllocationDecision, ClientTask, ConvergenceTrace,
    ExclusionReason, Mode, RoundProblem, SolverTolerances,
};
use crate::tokens::{synth_importance_scaled, ImportanceProfile};

use super::config::ScenarioConfig;
use super::scenario::{mix_seed, Scenario};

/// One candidate's line in the round report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRow {
    pub client_id: usize,
    pub selected: bool,
    /// `ok` or an exclusion code.
    pub reason: String,
    pub tokens: Option<usize>,
    pub bandwidth: Option<f64>,
    pub power: Option<f64>,
    pub forward_latency: f64,
    pub uplink_latency: Option<f64>,
    pub uplink_energy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: usize,
    pub candidates: Vec<usize>,
    pub selected: Vec<usize>,
    pub rows: Vec<ClientRow>,
    pub decision: AllocationDecision,
    pub trace: ConvergenceTrace,
    pub downlink_delay: f64,
    pub tau: f64,
    pub ste: f64,
    /// Wall-clock length of the round (s).
    pub elapsed: f64,
}

/// Importance profile of one client in one round.
pub fn client_importance(
    round: usize,
    client: usize,
    cfg: &ScenarioConfig,
) -> ImportanceProfile {
    let scoring = SystemParams {
        embed_dim: cfg.score_dim,
        ..cfg.params.clone()
    };
    synth_importance_scaled(
        mix_seed(&[cfg.seed, round as u64, client as u64]),
        &scoring,
        cfg.attention_scale,
    )
}

/// Screened problem for `candidates`, plus the broadcast delay and any
/// clients turned away by the mobility screen.
pub fn build_problem(
    fleet: &[ClientProfile],
    candidates: &[usize],
    cfg: &ScenarioConfig,
    round: usize,
) -> Result<(RoundProblem, f64), HarnessError> {
    let params = &cfg.params;
    let profiles: Vec<ClientProfile> = candidates.iter().map(|&i| fleet[i].clone()).collect();
    let links: Vec<_> = profiles.iter().map(|c| channel_gain(c, params)).collect();
    let estimate = payload_bits(params.num_patches, params)?;
    let screen = select_clients(&profiles, &links, params, estimate)?;
    let clients = profiles
        .iter()
        .zip(&links)
        .filter(|(c, _)| screen.theta[&c.id])
        .map(|(c, &link)| ClientTask {
            id: c.id,
            link,
            standing: screen.standing[&c.id],
            base_latency: screen.base_latency[&c.id],
            importance: client_importance(round, c.id, cfg),
        })
        .collect();
    Ok((
        RoundProblem {
            params: params.clone(),
            clients,
        },
        screen.downlink_delay,
    ))
}

/// Run one round for `candidates` of `fleet`.
pub fn run_round(
    fleet: &[ClientProfile],
    candidates: &[usize],
    cfg: &ScenarioConfig,
    round: usize,
    mode: Mode,
    tol: &SolverTolerances,
) -> Result<RoundReport, HarnessError> {
    let params = &cfg.params;
    let (problem, downlink_delay) = build_problem(fleet, candidates, cfg, round)?;
    let (decision, trace) = if problem.clients.is_empty() {
        (
            AllocationDecision {
                clients: Vec::new(),
                tau: 0.0,
                ste: 0.0,
            },
            ConvergenceTrace::default(),
        )
    } else {
        optimize_with_mode(&problem, tol, mode)
    };
    let costs = decision_costs(&problem, &decision)?;

    let mut rows = Vec::with_capacity(candidates.len());
    let mut slowest_forward = 0.0f64;
    for &id in candidates {
        let t_f = forward_latency(&fleet[id], params);
        let pos = problem.clients.iter().position(|t| t.id == id);
        let row = match pos {
            None => ClientRow {
                client_id: id,
                selected: false,
                reason: ExclusionReason::Mobility.code().to_string(),
                tokens: None,
                bandwidth: None,
                power: None,
                forward_latency: t_f,
                uplink_latency: None,
                uplink_energy: None,
            },
            Some(i) => {
                let a = &decision.clients[i];
                match costs[i] {
                    Some(c) => {
                        slowest_forward = slowest_forward.max(t_f);
                        ClientRow {
                            client_id: id,
                            selected: true,
                            reason: "ok".to_string(),
                            tokens: Some(a.tokens),
                            bandwidth: Some(a.bandwidth),
                            power: Some(a.power),
                            forward_latency: t_f,
                            uplink_latency: Some(c.latency),
                            uplink_energy: Some(c.energy),
                        }
                    }
                    None => ClientRow {
                        client_id: id,
                        selected: true,
                        reason: a
                            .reason
                            .unwrap_or(ExclusionReason::Initialization)
                            .code()
                            .to_string(),
                        tokens: None,
                        bandwidth: None,
                        power: None,
                        forward_latency: t_f,
                        uplink_latency: None,
                        uplink_energy: None,
                    },
                }
            }
        };
        rows.push(row);
    }

    let elapsed = if decision.feasible_count() > 0 {
        downlink_delay + slowest_forward + decision.tau
    } else {
        params.latency_cap
    };
    Ok(RoundReport {
        round,
        candidates: candidates.to_vec(),
        selected: problem.clients.iter().map(|t| t.id).collect(),
        rows,
        tau: decision.tau,
        ste: decision.ste,
        decision,
        trace,
        downlink_delay,
        elapsed,
    })
}

/// Run every configured round in order.
pub fn run_simulation(cfg: &ScenarioConfig) -> Result<Vec<RoundReport>, HarnessError> {
    cfg.validate()?;
    let mut scenario = Scenario::new(cfg.clone());
    let mut reports = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        let candidates = scenario.next_candidates();
        let report = run_round(
            &scenario.fleet,
            &candidates,
            cfg,
            round,
            cfg.mode,
            &cfg.tolerances,
        )?;
        scenario.advance(report.elapsed);
        reports.push(report);
    }
    Ok(reports)
}
