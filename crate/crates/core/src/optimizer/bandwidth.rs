//! Min-max latency bandwidth split via nested bisection.
//!
//! The outer search runs over the common latency bound `tau`; for each
//! candidate the inner search inverts the Shannon rate to find the least
//! bandwidth each client needs. `tau*` is the smallest bound whose total
//! demand fits in `W_tot`.

use serde::{Deserialize, Serialize};

use crate::model::{rate_asymptote, rate_unchecked, LinkState, SystemParams};

/// Lower end of the latency search (s).
pub const TAU_MIN: f64 = 1e-6;
/// Margin applied to the deadline/energy-implied latency for the upper end.
pub const TAU_MARGIN: f64 = 1.1;

/// Rate a client needs to meet the common bound, its energy budget and its deadline.
///
/// `None` when the deadline is already consumed by broadcast and compute.
pub fn required_rate(
    bits: f64,
    tau: f64,
    power: f64,
    energy_budget: f64,
    standing: f64,
    base_latency: f64,
) -> Option<f64> {
    let slack = standing - base_latency;
    if !(slack > 0.0) {
        return None;
    }
    Some((bits / tau).max(power * bits / energy_budget).max(bits / slack))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RateInversion {
    Bandwidth(f64),
    /// The target is at or above the infinite-bandwidth rate limit.
    Unattainable,
}

impl RateInversion {
    pub fn bandwidth(self) -> Option<f64> {
        match self {
            RateInversion::Bandwidth(w) => Some(w),
            RateInversion::Unattainable => None,
        }
    }
}

/// Least bandwidth with `uplink_rate(W, p) >= target`, to within `eps_w`.
///
/// The returned value always satisfies the rate target.
pub fn invert_rate(
    target: f64,
    power: f64,
    link: LinkState,
    params: &SystemParams,
    eps_w: f64,
) -> RateInversion {
    if target <= 0.0 {
        return RateInversion::Bandwidth(0.0);
    }
    if !(power > 0.0) || target >= rate_asymptote(power, link, params) {
        return RateInversion::Unattainable;
    }
    let rate = |w: f64| rate_unchecked(w, power, link.gain, params.noise_density);
    let mut hi = params.total_bandwidth;
    let mut grow = 0;
    while rate(hi) < target {
        hi *= 2.0;
        grow += 1;
        if grow > 200 || !hi.is_finite() {
            return RateInversion::Unattainable;
        }
    }
    let mut lo = 0.0;
    while hi - lo > eps_w {
        let mid = 0.5 * (lo + hi);
        if rate(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    RateInversion::Bandwidth(hi)
}

/// One client as seen by the bandwidth step: fixed payload and power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthClient {
    pub bits: f64,
    pub power: f64,
    pub link: LinkState,
    pub standing: f64,
    pub base_latency: f64,
}

impl BandwidthClient {
    fn slack(&self) -> f64 {
        self.standing - self.base_latency
    }

    /// Latency at which the bound stops being the binding rate requirement.
    fn floor_latency(&self, energy_budget: f64) -> f64 {
        (energy_budget / self.power).min(self.slack())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BandwidthOutcome {
    Allocated { bandwidth: Vec<f64>, tau: f64 },
    /// `client` is the index of a client that cannot be served at any bound, if one was found.
    Infeasible { client: Option<usize> },
}

fn min_bandwidths(
    clients: &[BandwidthClient],
    tau: f64,
    params: &SystemParams,
    eps_w: f64,
) -> Result<Vec<f64>, usize> {
    clients
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let r = required_rate(
                c.bits,
                tau,
                c.power,
                params.energy_budget,
                c.standing,
                c.base_latency,
            )
            .ok_or(i)?;
            invert_rate(r, c.power, c.link, params, eps_w)
                .bandwidth()
                .ok_or(i)
        })
        .collect()
}

/// Total bandwidth needed for common bound `tau`; infinite if some client
/// cannot be served at all.
pub fn bandwidth_demand(
    clients: &[BandwidthClient],
    tau: f64,
    params: &SystemParams,
    eps_w: f64,
) -> f64 {
    match min_bandwidths(clients, tau, params, eps_w) {
        Ok(w) => w.iter().sum(),
        Err(_) => f64::INFINITY,
    }
}

/// Smallest common latency bound that fits in `W_tot`, and the split that achieves it.
pub fn solve_bandwidth(
    clients: &[BandwidthClient],
    params: &SystemParams,
    eps_w: f64,
    eps_tau: f64,
) -> BandwidthOutcome {
    if clients.is_empty() {
        return BandwidthOutcome::Infeasible { client: None };
    }
    for (i, c) in clients.iter().enumerate() {
        if !(c.slack() > 0.0) || !(c.power > 0.0) {
            return BandwidthOutcome::Infeasible { client: Some(i) };
        }
    }
    let tau_max = TAU_MARGIN
        * clients
            .iter()
            .map(|c| c.floor_latency(params.energy_budget))
            .fold(0.0, f64::max);
    let w_tot = params.total_bandwidth;

    let at_max = match min_bandwidths(clients, tau_max, params, eps_w) {
        Ok(w) => w,
        Err(i) => return BandwidthOutcome::Infeasible { client: Some(i) },
    };
    if at_max.iter().sum::<f64>() > w_tot {
        return BandwidthOutcome::Infeasible { client: None };
    }
    if bandwidth_demand(clients, TAU_MIN, params, eps_w) <= w_tot {
        return BandwidthOutcome::Allocated {
            bandwidth: min_bandwidths(clients, TAU_MIN, params, eps_w).expect("finite demand"),
            tau: TAU_MIN,
        };
    }

    let (mut lo, mut hi) = (TAU_MIN, tau_max);
    let mut best = at_max;
    while hi - lo > eps_tau {
        let mid = 0.5 * (lo + hi);
        match min_bandwidths(clients, mid, params, eps_w) {
            Ok(w) if w.iter().sum::<f64>() <= w_tot => {
                hi = mid;
                best = w;
            }
            _ => lo = mid,
        }
    }
    BandwidthOutcome::Allocated {
        bandwidth: best,
        tau: hi,
    }
}
