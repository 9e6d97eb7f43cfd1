//! Per-client transmit power under peak-power, energy and deadline limits.

use serde::{Deserialize, Serialize};

use crate::model::{rate_unchecked, LinkState, SystemParams};

/// Smallest power that delivers `bits` over `bandwidth` within `deadline`.
///
/// `(N0 W / h) * (2^(S / (W T)) - 1)`; infinite for a non-positive deadline.
pub fn min_power(
    bits: f64,
    bandwidth: f64,
    link: LinkState,
    deadline: f64,
    params: &SystemParams,
) -> f64 {
    if !(deadline > 0.0) {
        return f64::INFINITY;
    }
    let exponent = bits * std::f64::consts::LN_2 / (bandwidth * deadline);
    params.noise_density * bandwidth / link.gain * exponent.exp_m1()
}

/// Uplink energy `p S / R(W, p)`; the `p -> 0` limit is `S ln2 N0 / h`.
pub fn uplink_energy(
    bits: f64,
    bandwidth: f64,
    power: f64,
    link: LinkState,
    params: &SystemParams,
) -> f64 {
    if power <= 0.0 {
        return bits * std::f64::consts::LN_2 * params.noise_density / link.gain;
    }
    power * bits / rate_unchecked(bandwidth, power, link.gain, params.noise_density)
}

/// Which branch of the energy analysis applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PowerCase {
    /// Energy budget holds even at peak power.
    EnergyInactive,
    /// No strictly positive power meets the energy budget.
    EnergyUnsatisfiable,
    /// Energy caps the power at an interior root of the feasibility function.
    EnergyRoot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PowerOutcome {
    Feasible { power: f64, case: PowerCase },
    Infeasible { case: PowerCase },
}

impl PowerOutcome {
    pub fn power(&self) -> Option<f64> {
        match *self {
            PowerOutcome::Feasible { power, .. } => Some(power),
            PowerOutcome::Infeasible { .. } => None,
        }
    }

    pub fn case(&self) -> PowerCase {
        match *self {
            PowerOutcome::Feasible { case, .. } | PowerOutcome::Infeasible { case } => case,
        }
    }
}

/// Energy feasibility function `ln(1 + phi p) - kappa p`; non-negative
/// exactly where the energy budget holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyMargin {
    pub phi: f64,
    pub kappa: f64,
}

impl EnergyMargin {
    pub fn new(bits: f64, bandwidth: f64, link: LinkState, params: &SystemParams) -> Self {
        Self {
            phi: link.gain / (params.noise_density * bandwidth),
            kappa: bits * std::f64::consts::LN_2 / (params.energy_budget * bandwidth),
        }
    }

    #[inline]
    pub fn eval(&self, power: f64) -> f64 {
        (self.phi * power).ln_1p() - self.kappa * power
    }
}

/// Largest feasible power, or infeasibility.
///
/// Peak power when the energy budget allows it; otherwise bisect the
/// energy margin on `[0, p_max]` and take the largest energy-feasible
/// power, provided it still meets the deadline.
pub fn solve_power(
    bits: f64,
    bandwidth: f64,
    link: LinkState,
    deadline: f64,
    params: &SystemParams,
    eps_p: f64,
) -> PowerOutcome {
    let p_max = params.max_power;
    let p_min = min_power(bits, bandwidth, link, deadline, params);

    if uplink_energy(bits, bandwidth, p_max, link, params) <= params.energy_budget {
        let case = PowerCase::EnergyInactive;
        return if p_max >= p_min {
            PowerOutcome::Feasible { power: p_max, case }
        } else {
            PowerOutcome::Infeasible { case }
        };
    }

    let margin = EnergyMargin::new(bits, bandwidth, link, params);
    if margin.kappa >= margin.phi {
        return PowerOutcome::Infeasible {
            case: PowerCase::EnergyUnsatisfiable,
        };
    }

    let (mut lo, mut hi) = (0.0, p_max);
    while hi - lo > eps_p {
        let mid = 0.5 * (lo + hi);
        if margin.eval(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let upper = p_max.min(lo);
    let case = PowerCase::EnergyRoot;
    if p_min > upper || upper <= 0.0 {
        PowerOutcome::Infeasible { case }
    } else {
        PowerOutcome::Feasible { power: upper, case }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Params where `h / (N0 W) = 1` for `W = 1`, `h = 1`.
    fn unit() -> SystemParams {
        SystemParams {
            noise_density: 1.0,
            ..SystemParams::default()
        }
    }

    #[test]
    fn min_power_examples() {
        let p = unit();
        let l = LinkState { gain: 1.0 };
        // S / (W T) = 1
        assert!((min_power(2.0, 1.0, l, 2.0, &p) - 1.0).abs() < 1e-12);
        assert!(min_power(1e-12, 1.0, l, 1.0, &p) < 1e-11);
        let l6 = LinkState { gain: 1e6 };
        let v = min_power(1e6, 1e6, l6, 2.0, &p);
        assert!((v - (2f64.sqrt() - 1.0)).abs() < 1e-12);
        assert!((v - 0.4142).abs() < 1e-4);
        assert_eq!(min_power(1.0, 1.0, l, 0.0, &p), f64::INFINITY);
    }

    #[test]
    fn huge_budget_gives_peak_power() {
        let p = SystemParams {
            energy_budget: 1e9,
            ..SystemParams::default()
        };
        let out = solve_power(1e6, 1e6, LinkState { gain: 1e-9 }, 10.0, &p, 1e-9);
        assert_eq!(
            out,
            PowerOutcome::Feasible {
                power: p.max_power,
                case: PowerCase::EnergyInactive
            }
        );
    }

    #[test]
    fn kappa_above_phi_is_infeasible() {
        // phi = 1 (h = N0 W), kappa = S ln2 / (E W) = 2
        let p = SystemParams {
            noise_density: 1.0,
            energy_budget: 1.0,
            max_power: 10.0,
            ..SystemParams::default()
        };
        let bits = 2.0 / std::f64::consts::LN_2;
        let out = solve_power(bits, 1.0, LinkState { gain: 1.0 }, 100.0, &p, 1e-9);
        assert_eq!(
            out,
            PowerOutcome::Infeasible {
                case: PowerCase::EnergyUnsatisfiable
            }
        );
    }

    #[test]
    fn interior_energy_root() {
        // phi = 2, kappa = 1: root of ln(1 + 2p) = p
        let p = SystemParams {
            noise_density: 0.5,
            energy_budget: 1.0,
            max_power: 10.0,
            ..SystemParams::default()
        };
        let bits = 1.0 / std::f64::consts::LN_2;
        let out = solve_power(bits, 1.0, LinkState { gain: 1.0 }, 1e3, &p, 1e-10);
        let PowerOutcome::Feasible { power, case } = out else {
            panic!("expected feasible, got {out:?}")
        };
        assert_eq!(case, PowerCase::EnergyRoot);
        // dense-scan reference for the positive root
        let margin = |x: f64| (2.0 * x).ln_1p() - x;
        let step = 1e-6;
        let mut x = step;
        while margin(x + step) >= 0.0 {
            x += step;
        }
        assert!((power - x).abs() <= step + 1e-10, "{power} vs {x}");
        assert!((power - 1.2564).abs() < 1e-4);
        // in units of phi * p the root sits at 2.5128
        assert!((2.0 * power - 2.5128).abs() < 2e-4);
    }

    #[test]
    fn deadline_above_energy_root_is_infeasible() {
        let p = SystemParams {
            noise_density: 0.5,
            energy_budget: 1.0,
            max_power: 10.0,
            ..SystemParams::default()
        };
        let bits = 1.0 / std::f64::consts::LN_2;
        // deadline so tight that p_min ~ 2^(bits / T) - 1 is far above the root
        let out = solve_power(bits, 1.0, LinkState { gain: 1.0 }, 0.2, &p, 1e-10);
        assert_eq!(
            out,
            PowerOutcome::Infeasible {
                case: PowerCase::EnergyRoot
            }
        );
    }

    #[test]
    fn margin_is_concave() {
        let m = EnergyMargin {
            phi: 3.0,
            kappa: 0.7,
        };
        let h = 1e-3;
        for i in 1..5000 {
            let x = i as f64 * h;
            let d2 = m.eval(x + h) - 2.0 * m.eval(x) + m.eval(x - h);
            assert!(d2 <= 1e-15);
        }
    }

    #[test]
    fn energy_limit_at_zero_power() {
        let p = SystemParams::default();
        let l = LinkState { gain: 1e-9 };
        let e0 = uplink_energy(1e6, 1e6, 0.0, l, &p);
        let e_small = uplink_energy(1e6, 1e6, 1e-12, l, &p);
        assert!((e_small / e0 - 1.0).abs() < 1e-3);
    }
}
