//! Brute-force references for the solvers: grid searches over power and
//! over the joint (K, W, p) space for small instances, plus sequence shape
//! checks.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::model::{rate_unchecked, LinkState, SystemParams};
use crate::optimizer::power::{min_power, uplink_energy, PowerCase};
use crate::optimizer::{AllocationDecision, ClientAllocation, RoundProblem};

/// Bounds and point count for one grid axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, points: usize) -> Result<Self, ModelError> {
        let a = Self { lo, hi, points };
        a.validate()?;
        Ok(a)
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.points < 2 {
            return Err(ModelError::InvalidParam {
                name: "points",
                reason: format!("need at least 2 grid points, got {}", self.points),
            });
        }
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(ModelError::InvalidParam {
                name: "bounds",
                reason: format!("need lo < hi, got [{}, {}]", self.lo, self.hi),
            });
        }
        Ok(())
    }

    pub fn linear(&self) -> Vec<f64> {
        let n = self.points - 1;
        (0..=n)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / n as f64)
            .collect()
    }

    /// Log-spaced points; `lo` must be positive.
    pub fn log(&self) -> Vec<f64> {
        let (a, b) = (self.lo.ln(), self.hi.ln());
        let n = self.points - 1;
        let mut v: Vec<f64> = (0..=n)
            .map(|i| (a + (b - a) * i as f64 / n as f64).exp())
            .collect();
        v[0] = self.lo;
        v[n] = self.hi;
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Linear power grid.
    pub power: Axis,
    /// Logarithmic bandwidth grid.
    pub bandwidth: Axis,
}

impl GridSpec {
    /// Power grid over `[0, p_max]` and bandwidth grid over
    /// `[W_tot * min_fraction, W_tot]`.
    pub fn for_params(
        params: &SystemParams,
        power_points: usize,
        bandwidth_points: usize,
        min_fraction: f64,
    ) -> Result<Self, ModelError> {
        Ok(Self {
            power: Axis::new(0.0, params.max_power, power_points)?,
            bandwidth: Axis::new(
                params.total_bandwidth * min_fraction,
                params.total_bandwidth,
                bandwidth_points,
            )?,
        })
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.power.validate()?;
        self.bandwidth.validate()?;
        if !(self.bandwidth.lo > 0.0) {
            return Err(ModelError::InvalidParam {
                name: "bandwidth.lo",
                reason: "log grid needs a positive lower bound".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerOracle {
    pub power: Option<f64>,
    pub case: PowerCase,
    /// Spacing of the power grid.
    pub step: f64,
}

/// Largest grid power meeting the energy budget and the deadline.
pub fn grid_power_oracle(
    bits: f64,
    bandwidth: f64,
    link: LinkState,
    deadline: f64,
    params: &SystemParams,
    grid: &Axis,
) -> PowerOracle {
    let points = grid.linear();
    let step = (grid.hi - grid.lo) / (grid.points - 1) as f64;
    let p_min = min_power(bits, bandwidth, link, deadline, params);
    let energy_ok = |p: f64| uplink_energy(bits, bandwidth, p, link, params) <= params.energy_budget;

    let top = *points.last().expect("grid has points");
    let case = if energy_ok(top) {
        PowerCase::EnergyInactive
    } else if !points.iter().any(|&p| p > 0.0 && energy_ok(p)) {
        PowerCase::EnergyUnsatisfiable
    } else {
        PowerCase::EnergyRoot
    };
    let power = points
        .iter()
        .rev()
        .copied()
        .find(|&p| p > 0.0 && energy_ok(p) && p >= p_min);
    PowerOracle { power, case, step }
}

/// Exhaustive search over token vectors and the (W, p) grid.
///
/// For each client, token count and bandwidth the largest feasible grid
/// power is used, since it gives that client's lowest latency. The last
/// client takes the largest grid bandwidth that still fits. Ties keep the
/// lexicographically first decision. `None` if no grid point is feasible
/// for every client.
pub fn grid_joint_oracle(problem: &RoundProblem, grid: &GridSpec) -> Option<AllocationDecision> {
    grid.validate().ok()?;
    let params = &problem.params;
    let n = problem.clients.len();
    if n == 0 {
        return None;
    }
    let ws = grid.bandwidth.log();
    let ps: Vec<f64> = grid.power.linear().into_iter().filter(|&p| p > 0.0).collect();
    let beta = params.bits_per_token();
    let ks: Vec<usize> = (params.min_tokens..=params.num_patches).collect();

    // best[i][k][j] = (latency, power) at token ks[k], bandwidth ws[j]
    let best: Cells = problem
        .clients
        .iter()
        .map(|c| {
            let slack = c.standing - c.base_latency;
            ks.iter()
                .map(|&k| {
                    let bits = (k + 2) as f64 * beta;
                    ws.iter()
                        .map(|&w| {
                            ps.iter().rev().find_map(|&p| {
                                let lat =
                                    bits / rate_unchecked(w, p, c.link.gain, params.noise_density);
                                (p * lat <= params.energy_budget && lat <= slack)
                                    .then_some((lat, p))
                            })
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    let mut best_val = f64::NEG_INFINITY;
    let mut best_pick: Option<(Vec<usize>, Vec<usize>)> = None;
    let mut kidx = vec![0usize; n];
    loop {
        let retained: f64 = problem
            .clients
            .iter()
            .zip(&kidx)
            .map(|(c, &k)| c.importance.prefix()[ks[k]])
            .sum();
        let mut widx = vec![0usize; n];
        search_bandwidth(
            &best, &ws, &kidx, &mut widx, 0, 0.0, 0.0, retained, params.total_bandwidth,
            &mut best_val, &mut best_pick,
        );
        if !advance(&mut kidx, ks.len()) {
            break;
        }
    }

    let (kidx, widx) = best_pick?;
    let mut tau = 0.0f64;
    let clients = problem
        .clients
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let (lat, p) = best[i][kidx[i]][widx[i]].expect("picked cell is feasible");
            tau = tau.max(lat);
            ClientAllocation {
                id: c.id,
                tokens: ks[kidx[i]],
                bandwidth: ws[widx[i]],
                power: p,
                feasible: true,
                reason: None,
            }
        })
        .collect();
    Some(AllocationDecision {
        clients,
        tau,
        ste: best_val,
    })
}

type Cells = Vec<Vec<Vec<Option<(f64, f64)>>>>;

#[allow(clippy::too_many_arguments)]
fn search_bandwidth(
    best: &Cells,
    ws: &[f64],
    kidx: &[usize],
    widx: &mut Vec<usize>,
    i: usize,
    used: f64,
    slowest: f64,
    retained: f64,
    w_tot: f64,
    best_val: &mut f64,
    best_pick: &mut Option<(Vec<usize>, Vec<usize>)>,
) {
    let n = kidx.len();
    let remaining = w_tot - used;
    if i + 1 == n {
        // largest grid bandwidth that fits; latency is non-increasing in W
        let Some(j) = ws.iter().rposition(|&w| w <= remaining) else {
            return;
        };
        let Some((lat, _)) = best[i][kidx[i]][j] else {
            return;
        };
        let value = retained / slowest.max(lat);
        if value > *best_val {
            widx[i] = j;
            *best_val = value;
            *best_pick = Some((kidx.to_vec(), widx.clone()));
        }
        return;
    }
    for (j, &w) in ws.iter().enumerate() {
        if w > remaining {
            break;
        }
        if let Some((lat, _)) = best[i][kidx[i]][j] {
            widx[i] = j;
            search_bandwidth(
                best, ws, kidx, widx, i + 1, used + w, slowest.max(lat), retained, w_tot,
                best_val, best_pick,
            );
        }
    }
}

/// Odometer step in lexicographic order; `false` after the last vector.
fn advance(idx: &mut [usize], base: usize) -> bool {
    for d in (0..idx.len()).rev() {
        idx[d] += 1;
        if idx[d] < base {
            return true;
        }
        idx[d] = 0;
    }
    false
}

/// True if every step is strictly positive.
pub fn strictly_increasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] > w[0])
}

/// True if the sequence is non-decreasing with non-increasing first differences.
pub fn concave_non_decreasing(values: &[f64]) -> bool {
    let diffs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    diffs.iter().all(|&d| d >= 0.0) && diffs.windows(2).all(|d| d[1] <= d[0])
}
