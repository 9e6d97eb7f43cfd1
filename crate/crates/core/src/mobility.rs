//! Mobility-aware client selection.
//!
//! A client is admitted to a round when the time it needs (broadcast,
//! forward pass and uplink) fits inside the time it is expected to stay in
//! coverage.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{
    downlink_broadcast_delay, forward_latency, uplink_rate, ClientProfile, LinkState, SystemParams,
};

/// Result of screening a candidate set for one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    /// Admitted client ids, in candidate order.
    pub selected: Vec<usize>,
    pub theta: BTreeMap<usize, bool>,
    pub standing: BTreeMap<usize, f64>,
    pub holding_estimate: BTreeMap<usize, f64>,
    /// `T0 = T_DL + T_F` per client.
    pub base_latency: BTreeMap<usize, f64>,
    /// Broadcast delay shared by all candidates.
    pub downlink_delay: f64,
}

/// Time left before the client crosses the coverage boundary, capped at `t_bar`.
pub fn standing_time(profile: &ClientProfile, params: &SystemParams) -> f64 {
    let remaining = (params.coverage_radius - profile.distance).max(0.0);
    if profile.velocity <= 0.0 {
        return params.latency_cap;
    }
    (remaining / profile.velocity).min(params.latency_cap)
}

pub fn holding_time(base_latency: f64, uplink_latency: f64) -> f64 {
    base_latency + uplink_latency
}

/// Screen `profiles` with a conservative uplink estimate.
///
/// The uplink time is estimated for `payload_estimate` bits at peak power
/// over an equal share of the total bandwidth.
pub fn select_clients(
    profiles: &[ClientProfile],
    links: &[LinkState],
    params: &SystemParams,
    payload_estimate: f64,
) -> Result<SelectionOutcome, ModelError> {
    if profiles.is_empty() {
        return Err(ModelError::NoEligibleClients);
    }
    if links.len() != profiles.len() {
        return Err(ModelError::Shape(format!(
            "{} profiles but {} links",
            profiles.len(),
            links.len()
        )));
    }
    let share = params.total_bandwidth / profiles.len() as f64;
    let uplink = links
        .iter()
        .map(|&l| {
            let r = uplink_rate(share, params.max_power, l, params)?;
            Ok(if r > 0.0 { payload_estimate / r } else { f64::INFINITY })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let downlink = downlink_broadcast_delay(params, links)?;
    Ok(select_with_estimates(profiles, params, downlink, &uplink))
}

/// Selection rule given explicit per-client uplink latency estimates.
pub fn select_with_estimates(
    profiles: &[ClientProfile],
    params: &SystemParams,
    downlink_delay: f64,
    uplink_estimates: &[f64],
) -> SelectionOutcome {
    let mut out = SelectionOutcome {
        selected: Vec::new(),
        theta: BTreeMap::new(),
        standing: BTreeMap::new(),
        holding_estimate: BTreeMap::new(),
        base_latency: BTreeMap::new(),
        downlink_delay,
    };
    for (c, &t_u) in profiles.iter().zip(uplink_estimates) {
        let t0 = downlink_delay + forward_latency(c, params);
        let standing = standing_time(c, params);
        let holding = holding_time(t0, t_u);
        let admit = holding <= standing;
        if admit {
            out.selected.push(c.id);
        }
        out.theta.insert(c.id, admit);
        out.standing.insert(c.id, standing);
        out.holding_estimate.insert(c.id, holding);
        out.base_latency.insert(c.id, t0);
    }
    out
}
