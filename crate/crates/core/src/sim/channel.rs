//! RSSI-driven link model: PHY rate, residual loss and retransmission rate.

use serde::{Deserialize, Serialize};

use crate::domain::{RSSI_CEIL_DBM, RSSI_FLOOR_DBM};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub phy_max_bps: f64,
    /// MAC efficiency: usable goodput as a fraction of the PHY rate.
    pub mac_efficiency: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            phy_max_bps: 144.0e6,
            mac_efficiency: 0.65,
        }
    }
}

impl ChannelConfig {
    pub fn phy_rate_bps(&self, rssi_dbm: f64) -> f64 {
        let r = clamp_rssi(rssi_dbm);
        self.phy_max_bps * ((r + 85.0) / 45.0).clamp(0.05, 1.0)
    }

    pub fn capacity_bps(&self, phy_rate_bps: f64) -> f64 {
        phy_rate_bps * self.mac_efficiency
    }
}

pub fn clamp_rssi(rssi_dbm: f64) -> f64 {
    rssi_dbm.clamp(RSSI_FLOOR_DBM, RSSI_CEIL_DBM)
}

/// Residual (post-retry) frame loss. Non-increasing in RSSI.
pub fn base_loss(rssi_dbm: f64) -> f64 {
    let r = clamp_rssi(rssi_dbm);
    0.001 + 0.4 / (1.0 + ((r + 88.0) / 3.0).exp())
}

/// Fraction of transmissions that are retries. Non-increasing in RSSI.
pub fn retx_rate(rssi_dbm: f64) -> f64 {
    let r = clamp_rssi(rssi_dbm);
    0.01 + 0.3 / (1.0 + ((r + 80.0) / 4.0).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maps_are_monotone_in_rssi() {
        let cfg = ChannelConfig::default();
        let mut prev = (f64::INFINITY, f64::INFINITY, 0.0);
        for i in 0..=150 {
            let rssi = -95.0 + i as f64 * 0.5;
            let cur = (base_loss(rssi), retx_rate(rssi), cfg.phy_rate_bps(rssi));
            assert!(cur.0 <= prev.0 && cur.1 <= prev.1 && cur.2 >= prev.2);
            prev = cur;
        }
    }

    #[test]
    fn capacity_below_phy_rate() {
        let cfg = ChannelConfig::default();
        let phy = cfg.phy_rate_bps(-60.0);
        assert!(cfg.capacity_bps(phy) <= phy);
    }
}
