//! Physical-layer and compute-cost model.
//!
//! Path-loss channel gains, the downlink broadcast of the client-side model,
//! forward-pass latency, activation payload sizing and the Shannon-rate uplink
//! with its latency and energy. All functions are pure.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Convert a noise density given in dBm/Hz to W/Hz.
pub fn dbm_per_hz_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// `log2(1 + x)` computed through the natural log.
#[inline]
pub(crate) fn log2_1p(x: f64) -> f64 {
    x.ln_1p() / std::f64::consts::LN_2
}

/// System-wide constants shared by every client in a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SystemParams {
    /// Total uplink bandwidth `W_tot` (Hz). Also used for the downlink broadcast.
    pub total_bandwidth: f64,
    /// Noise power spectral density `N0` (W/Hz).
    pub noise_density: f64,
    /// Peak client transmit power (W).
    pub max_power: f64,
    /// Server downlink power (W).
    pub server_power: f64,
    /// Per-round client uplink energy budget (J).
    pub energy_budget: f64,
    /// Coverage radius `L` (m).
    pub coverage_radius: f64,
    /// Per-iteration latency cap `t_bar` (s).
    pub latency_cap: f64,
    /// Mini-batch size `B`.
    pub batch_size: usize,
    /// Embedding dimension `D`.
    pub embed_dim: usize,
    /// Number of patch tokens `N` per sample (CLS excluded).
    pub num_patches: usize,
    /// Bits per transmitted element `q0`.
    pub bits_per_element: u32,
    /// Minimum token budget `K_min`.
    pub min_tokens: usize,
    /// Size of the broadcast client-side model `s0` (bits).
    pub model_bits: f64,
    /// Path-loss exponent.
    pub path_exponent: f64,
    /// Channel gain at the 1 m reference distance.
    pub reference_gain: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            total_bandwidth: 50e6,
            noise_density: dbm_per_hz_to_watts(-174.0),
            max_power: 0.2,
            server_power: 1.0,
            energy_budget: 0.5,
            coverage_radius: 500.0,
            latency_cap: 30.0,
            batch_size: 64,
            embed_dim: 768,
            num_patches: 196,
            bits_per_element: 32,
            min_tokens: 1,
            model_bits: 58.2 * 8.0 * 1024.0 * 1024.0,
            path_exponent: 2.5,
            reference_gain: 1e-3,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("total_bandwidth", self.total_bandwidth),
            ("noise_density", self.noise_density),
            ("max_power", self.max_power),
            ("server_power", self.server_power),
            ("energy_budget", self.energy_budget),
            ("coverage_radius", self.coverage_radius),
            ("latency_cap", self.latency_cap),
            ("model_bits", self.model_bits),
            ("path_exponent", self.path_exponent),
            ("reference_gain", self.reference_gain),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::InvalidParam {
                    name,
                    reason: format!("must be finite and positive, got {v}"),
                });
            }
        }
        let counts = [
            ("batch_size", self.batch_size),
            ("embed_dim", self.embed_dim),
            ("num_patches", self.num_patches),
            ("bits_per_element", self.bits_per_element as usize),
            ("min_tokens", self.min_tokens),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(ModelError::InvalidParam {
                    name,
                    reason: "must be at least 1".into(),
                });
            }
        }
        if self.min_tokens > self.num_patches {
            return Err(ModelError::InvalidParam {
                name: "min_tokens",
                reason: format!(
                    "K_min = {} exceeds N = {}",
                    self.min_tokens, self.num_patches
                ),
            });
        }
        Ok(())
    }

    /// Bits carried by one token slot across the batch, `B * D * q0`.
    pub fn bits_per_token(&self) -> f64 {
        self.batch_size as f64 * self.embed_dim as f64 * self.bits_per_element as f64
    }
}

/// Per-client compute and mobility state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientProfile {
    pub id: usize,
    /// GPU clock (Hz).
    pub gpu_freq: f64,
    /// GPU core count.
    pub cores: f64,
    /// FLOPs per cycle per core.
    pub flops_per_cycle: f64,
    /// Radial velocity away from the server (m/s).
    pub velocity: f64,
    /// Radial distance from the server (m).
    pub distance: f64,
    /// Client-side model FLOPs per sample.
    pub client_flops: f64,
}

impl ClientProfile {
    pub fn validate(&self, params: &SystemParams) -> Result<(), ModelError> {
        for (name, v) in [
            ("gpu_freq", self.gpu_freq),
            ("cores", self.cores),
            ("flops_per_cycle", self.flops_per_cycle),
            ("client_flops", self.client_flops),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::InvalidParam {
                    name,
                    reason: format!("client {}: must be positive, got {v}", self.id),
                });
            }
        }
        if !(self.velocity.is_finite() && self.velocity >= 0.0) {
            return Err(ModelError::InvalidParam {
                name: "velocity",
                reason: format!("client {}: must be non-negative", self.id),
            });
        }
        if !(0.0..=params.coverage_radius).contains(&self.distance) {
            return Err(ModelError::OutOfRange {
                what: "distance",
                value: self.distance,
                lo: 0.0,
                hi: params.coverage_radius,
            });
        }
        Ok(())
    }
}

/// Large-scale channel state of one client (power gain, linear).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub gain: f64,
}

impl LinkState {
    pub fn new(gain: f64) -> Result<Self, ModelError> {
        if gain.is_finite() && gain > 0.0 {
            Ok(Self { gain })
        } else {
            Err(ModelError::InvalidParam {
                name: "gain",
                reason: format!("channel gain must be positive, got {gain}"),
            })
        }
    }
}

/// Path-loss gain `G0 * max(l, 1 m)^(-exponent)`.
pub fn channel_gain(profile: &ClientProfile, params: &SystemParams) -> LinkState {
    let d = profile.distance.max(1.0);
    LinkState {
        gain: params.reference_gain * d.powf(-params.path_exponent),
    }
}

/// Time to broadcast the client-side model to every link in `links`.
///
/// The broadcast rate is set by the weakest gain in the set.
pub fn downlink_broadcast_delay(
    params: &SystemParams,
    links: &[LinkState],
) -> Result<f64, ModelError> {
    let h_min = links
        .iter()
        .map(|l| l.gain)
        .fold(None, |acc: Option<f64>, g| Some(acc.map_or(g, |a| a.min(g))))
        .ok_or(ModelError::NoEligibleClients)?;
    let snr = params.server_power * h_min / (params.noise_density * params.total_bandwidth);
    let rate = params.total_bandwidth * log2_1p(snr);
    Ok(params.model_bits / rate)
}

/// Forward-pass latency over one mini-batch, `B * gamma_F / (f * C * D)`.
pub fn forward_latency(profile: &ClientProfile, params: &SystemParams) -> f64 {
    params.batch_size as f64 * profile.client_flops
        / (profile.gpu_freq * profile.cores * profile.flops_per_cycle)
}

/// Refined-activation payload for a token budget `k`: `B * (k + 2) * D * q0` bits.
pub fn payload_bits(k: usize, params: &SystemParams) -> Result<f64, ModelError> {
    if k < params.min_tokens || k > params.num_patches {
        return Err(ModelError::OutOfRange {
            what: "token budget",
            value: k as f64,
            lo: params.min_tokens as f64,
            hi: params.num_patches as f64,
        });
    }
    Ok((k + 2) as f64 * params.bits_per_token())
}

/// Shannon uplink rate `W * log2(1 + p h / (N0 W))` in bits/s.
pub fn uplink_rate(
    bandwidth: f64,
    power: f64,
    link: LinkState,
    params: &SystemParams,
) -> Result<f64, ModelError> {
    if !(bandwidth > 0.0) {
        return Err(ModelError::InvalidParam {
            name: "bandwidth",
            reason: format!("must be positive, got {bandwidth}"),
        });
    }
    if !(power >= 0.0) {
        return Err(ModelError::InvalidParam {
            name: "power",
            reason: format!("must be non-negative, got {power}"),
        });
    }
    Ok(rate_unchecked(bandwidth, power, link.gain, params.noise_density))
}

#[inline]
pub(crate) fn rate_unchecked(bandwidth: f64, power: f64, gain: f64, noise_density: f64) -> f64 {
    bandwidth * log2_1p(power * gain / (noise_density * bandwidth))
}

/// Limit of the uplink rate as bandwidth grows without bound, `p h / (N0 ln 2)`.
pub fn rate_asymptote(power: f64, link: LinkState, params: &SystemParams) -> f64 {
    power * link.gain / (params.noise_density * std::f64::consts::LN_2)
}

/// Uplink latency and energy for a payload of `bits`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UplinkCost {
    pub latency: f64,
    pub energy: f64,
}

pub fn uplink_cost(
    bits: f64,
    bandwidth: f64,
    power: f64,
    link: LinkState,
    params: &SystemParams,
) -> Result<UplinkCost, ModelError> {
    let rate = uplink_rate(bandwidth, power, link, params)?;
    if !(rate > 0.0) {
        return Err(ModelError::InfeasibleLink);
    }
    let latency = bits / rate;
    Ok(UplinkCost {
        latency,
        energy: power * latency,
    })
}
