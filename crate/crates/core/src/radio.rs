//! Link budget, Shannon capacity and the four-part message latency model.
//!
//! `noise_power_w` is total in-band noise power in watts, so SNR is
//! `P_t G_t G_r λ² / ((4π d)² N)` with consistent units.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Propagation speed used for both wavelength and propagation delay.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Co-located UAVs are clamped to this separation before evaluating SNR.
pub const MIN_LINK_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum RadioError {
    #[error("link distance must be positive, got {0} m")]
    ZeroDistance(f64),
    #[error("link capacity is zero; the link is unusable")]
    ZeroCapacity,
    #[error("radio parameter `{0}` must be strictly positive and finite")]
    InvalidParam(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkBudgetParams {
    pub tx_power_w: f64,
    pub tx_gain_dbi: f64,
    pub rx_gain_dbi: f64,
    pub carrier_hz: f64,
    pub noise_power_w: f64,
    pub bandwidth_hz: f64,
}

impl Default for LinkBudgetParams {
    /// 915 MHz, 1 W, 6 dBi at both ends, 10 MHz, 1e-13 W noise.
    fn default() -> Self {
        Self {
            tx_power_w: 1.0,
            tx_gain_dbi: 6.0,
            rx_gain_dbi: 6.0,
            carrier_hz: 915.0e6,
            noise_power_w: 1.0e-13,
            bandwidth_hz: 10.0e6,
        }
    }
}

impl LinkBudgetParams {
    pub fn validate(&self) -> Result<(), RadioError> {
        let pos = |v: f64, name| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(RadioError::InvalidParam(name))
            }
        };
        pos(self.tx_power_w, "tx_power_w")?;
        pos(self.carrier_hz, "carrier_hz")?;
        pos(self.noise_power_w, "noise_power_w")?;
        pos(self.bandwidth_hz, "bandwidth_hz")?;
        // Gains in dBi may be zero or negative; the linear ratio is still positive.
        if !self.tx_gain_dbi.is_finite() {
            return Err(RadioError::InvalidParam("tx_gain_dbi"));
        }
        if !self.rx_gain_dbi.is_finite() {
            return Err(RadioError::InvalidParam("rx_gain_dbi"));
        }
        Ok(())
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }
}

/// Per-node processing delay and inbound queue service rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeServiceProfile {
    pub proc_latency_s: f64,
    pub service_rate_msgs_per_s: f64,
}

impl NodeServiceProfile {
    /// Cluster preset from the latency table: 10 ms processing and a 1 ms
    /// queue entry, i.e. one queued message served per millisecond.
    pub fn table_preset() -> Self {
        Self { proc_latency_s: 0.010, service_rate_msgs_per_s: 1000.0 }
    }

    pub fn validate(&self) -> Result<(), RadioError> {
        if !(self.service_rate_msgs_per_s.is_finite() && self.service_rate_msgs_per_s > 0.0) {
            return Err(RadioError::InvalidParam("service_rate_msgs_per_s"));
        }
        if !(self.proc_latency_s.is_finite() && self.proc_latency_s >= 0.0) {
            return Err(RadioError::InvalidParam("proc_latency_s"));
        }
        Ok(())
    }

    pub fn service_time_s(&self) -> f64 {
        1.0 / self.service_rate_msgs_per_s
    }
}

impl Default for NodeServiceProfile {
    fn default() -> Self {
        Self::table_preset()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyBreakdown {
    pub proc_s: f64,
    pub queue_s: f64,
    pub trans_s: f64,
    pub prop_s: f64,
    pub total_s: f64,
}

impl LatencyBreakdown {
    pub fn from_parts(proc_s: f64, queue_s: f64, trans_s: f64, prop_s: f64) -> Self {
        Self { proc_s, queue_s, trans_s, prop_s, total_s: proc_s + queue_s + trans_s + prop_s }
    }
}

pub fn dbi_to_linear(gain_dbi: f64) -> f64 {
    10f64.powf(gain_dbi / 10.0)
}

pub fn snr(params: &LinkBudgetParams, distance_m: f64) -> Result<f64, RadioError> {
    if !(distance_m > 0.0) {
        return Err(RadioError::ZeroDistance(distance_m));
    }
    let lambda = params.wavelength_m();
    let gains = dbi_to_linear(params.tx_gain_dbi) * dbi_to_linear(params.rx_gain_dbi);
    let spread = 4.0 * std::f64::consts::PI * distance_m;
    Ok(params.tx_power_w * gains * lambda * lambda / (spread * spread * params.noise_power_w))
}

pub fn capacity(bandwidth_hz: f64, snr_ratio: f64) -> f64 {
    bandwidth_hz * (1.0 + snr_ratio).log2()
}

pub fn propagation_delay(distance_m: f64) -> f64 {
    distance_m / SPEED_OF_LIGHT
}

/// Latency of one message of `msg_bits` over a single hop of `distance_m`,
/// with `queue_len_msgs` already waiting at the receiver.
pub fn latency_components(
    msg_bits: u64,
    distance_m: f64,
    queue_len_msgs: f64,
    params: &LinkBudgetParams,
    service: &NodeServiceProfile,
) -> Result<LatencyBreakdown, RadioError> {
    let ratio = snr(params, distance_m)?;
    let cap = capacity(params.bandwidth_hz, ratio);
    if !(cap > 0.0) {
        return Err(RadioError::ZeroCapacity);
    }
    Ok(LatencyBreakdown::from_parts(
        service.proc_latency_s,
        queue_len_msgs / service.service_rate_msgs_per_s,
        msg_bits as f64 / cap,
        propagation_delay(distance_m),
    ))
}
