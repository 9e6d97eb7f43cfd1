//! Token budgets at fixed rates.

use crate::model::SystemParams;
use crate::tokens::ImportanceProfile;

/// Relative slack on the latency-bound term, so a bound that was computed
/// from a token count maps back to that same count.
const TAU_ROUNDING: f64 = 1e-9;

/// Per-client inputs to the token step at fixed bandwidth and power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TokenClient {
    pub rate: f64,
    pub power: f64,
    pub standing: f64,
    pub base_latency: f64,
}

/// Largest integer token count meeting every per-client bound, or `None`
/// when that count falls below `K_min`.
///
/// Pass `tau = f64::INFINITY` for the energy/deadline cap alone.
pub fn max_tokens(client: &TokenClient, tau: f64, params: &SystemParams) -> Option<usize> {
    let beta = params.bits_per_token();
    let r = client.rate;
    if !(r > 0.0) {
        return None;
    }
    let energy = if client.power > 0.0 {
        params.energy_budget * r / (client.power * beta) - 2.0
    } else {
        f64::INFINITY
    };
    let deadline = (client.standing - client.base_latency) * r / beta - 2.0;
    let bound = tau * r / beta - 2.0;
    let bound = bound + TAU_ROUNDING * bound.abs().max(1.0);
    let cap = (params.num_patches as f64).min(energy).min(deadline).min(bound);
    if !(cap >= params.min_tokens as f64) {
        return None;
    }
    Some(cap.floor() as usize)
}

/// Closed-form token budget for each client at a common latency bound.
pub fn token_budget(
    clients: &[TokenClient],
    tau: f64,
    params: &SystemParams,
) -> Vec<Option<usize>> {
    clients.iter().map(|c| max_tokens(c, tau, params)).collect()
}

/// Token vector maximising retained importance per unit straggler latency.
///
/// `latency[m][k]` is client `m`'s uplink latency at budget `k`, or `None`
/// where `k` is infeasible. Every tabulated latency is tried as the common
/// bound; under it each client takes its most valuable feasible budget.
/// Returns the best vector with its efficiency, or `None` if no bound
/// leaves every client a feasible budget.
pub fn best_token_vector(
    latency: &[Vec<Option<f64>>],
    importance: &[&ImportanceProfile],
) -> Option<(Vec<usize>, f64)> {
    // per client: (latency, k) ascending, plus the best budget among each prefix
    let tables: Vec<(Vec<f64>, Vec<usize>)> = latency
        .iter()
        .zip(importance)
        .map(|(row, f)| {
            let mut pairs: Vec<(f64, usize)> = row
                .iter()
                .enumerate()
                .filter_map(|(k, l)| l.map(|l| (l, k)))
                .collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut best = Vec::with_capacity(pairs.len());
            let mut cur: Option<usize> = None;
            for &(_, k) in &pairs {
                if cur.is_none_or(|c| f.prefix()[k] > f.prefix()[c]) {
                    cur = Some(k);
                }
                best.push(cur.expect("set above"));
            }
            (pairs.into_iter().map(|p| p.0).collect(), best)
        })
        .collect();
    if tables.iter().any(|(l, _)| l.is_empty()) {
        return None;
    }

    let mut bounds: Vec<f64> = tables.iter().flat_map(|(l, _)| l.iter().copied()).collect();
    bounds.sort_by(f64::total_cmp);
    bounds.dedup();

    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut tokens = vec![0usize; tables.len()];
    'bounds: for &tau in &bounds {
        let mut retained = 0.0;
        let mut slowest = 0.0f64;
        for (m, (lat, pick)) in tables.iter().enumerate() {
            let j = lat.partition_point(|&l| l <= tau);
            if j == 0 {
                continue 'bounds;
            }
            let k = pick[j - 1];
            tokens[m] = k;
            retained += importance[m].prefix()[k];
            slowest = slowest.max(latency[m][k].expect("tabulated"));
        }
        let value = retained / slowest;
        if best.as_ref().is_none_or(|(_, b)| value > *b) {
            best = Some((tokens.clone(), value));
        }
    }
    best
}

/// Latency table for a client at fixed rate and power, feasible where
/// [`max_tokens`] allows.
pub fn fixed_rate_latencies(client: &TokenClient, params: &SystemParams) -> Vec<Option<f64>> {
    let cap = max_tokens(client, f64::INFINITY, params);
    let beta = params.bits_per_token();
    (0..=params.num_patches)
        .map(|k| {
            (k >= params.min_tokens && cap.is_some_and(|c| k <= c))
                .then(|| beta * (k + 2) as f64 / client.rate)
        })
        .collect()
}
