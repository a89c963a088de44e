//! Horn-plot region of admissible (LOK, POS) pairs.
//!
//! With `l` the LOK, the admissible POS values are those whose distance from
//! 0.5 lies between an inner and an outer half-width:
//!
//! ```text
//! outer(l) = w0 + (0.5 − w0) · l
//! inner(l) = 0                                 if l ≤ l_mid
//!          = m_max · (l − l_mid) / (1 − l_mid)  otherwise
//! ```

use serde::{Deserialize, Serialize};

use super::KaraError;

/// Slack used when testing membership and comparing projection distances.
pub const REGION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HornPlotConfig {
    pub w0: f64,
    pub l_mid: f64,
    pub m_max: f64,
}

impl Default for HornPlotConfig {
    fn default() -> Self {
        Self {
            w0: 0.15,
            l_mid: 0.5,
            m_max: 0.45,
        }
    }
}

impl HornPlotConfig {
    pub fn validate(&self) -> Result<(), KaraError> {
        let ok = self.w0 > 0.0
            && self.w0 < 0.5
            && self.l_mid >= 0.0
            && self.l_mid < 1.0
            && self.m_max > 0.0
            && self.m_max <= 0.5
            && self.m_max <= self.outer(1.0);
        if ok {
            Ok(())
        } else {
            Err(KaraError::InvalidConfig(format!(
                "invalid horn-plot parameters {self:?}"
            )))
        }
    }

    pub fn outer(&self, lok: f64) -> f64 {
        self.w0 + (0.5 - self.w0) * lok
    }

    pub fn inner(&self, lok: f64) -> f64 {
        if lok <= self.l_mid {
            0.0
        } else {
            self.m_max * (lok - self.l_mid) / (1.0 - self.l_mid)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosRegion {
    pub lok: f64,
    /// One or two disjoint closed intervals in ascending order.
    pub intervals: Vec<(f64, f64)>,
}

impl PosRegion {
    pub fn contains(&self, pos: f64) -> bool {
        self.intervals
            .iter()
            .any(|&(lo, hi)| pos >= lo - REGION_TOL && pos <= hi + REGION_TOL)
    }

    /// Nearest admissible value. An equidistant tie goes to the candidate
    /// closer to 0.5, then to the smaller value.
    pub fn project(&self, pos: f64) -> f64 {
        if self.contains(pos) {
            return pos;
        }
        let mut best: Option<(f64, f64)> = None;
        for &(lo, hi) in &self.intervals {
            let p = pos.clamp(lo, hi);
            let d = (p - pos).abs();
            best = match best {
                None => Some((p, d)),
                Some((bp, bd)) => {
                    let (c, bc) = ((p - 0.5).abs(), (bp - 0.5).abs());
                    let better = d < bd - REGION_TOL
                        || ((d - bd).abs() <= REGION_TOL
                            && (c < bc - REGION_TOL || ((c - bc).abs() <= REGION_TOL && p < bp)));
                    if better {
                        Some((p, d))
                    } else {
                        Some((bp, bd))
                    }
                }
            };
        }
        best.map_or(pos, |b| b.0)
    }

    pub fn width(&self) -> f64 {
        self.intervals.iter().map(|(lo, hi)| hi - lo).sum()
    }
}

pub fn allowed_pos_region(lok: f64, config: &HornPlotConfig) -> Result<PosRegion, KaraError> {
    if !(0.0..=1.0).contains(&lok) {
        return Err(KaraError::InvalidLok(lok));
    }
    config.validate()?;
    let outer = config.outer(lok).min(0.5);
    let inner = config.inner(lok).min(outer);
    let intervals = if inner <= 0.0 {
        vec![(0.5 - outer, 0.5 + outer)]
    } else {
        vec![(0.5 - outer, 0.5 - inner), (0.5 + inner, 0.5 + outer)]
    };
    Ok(PosRegion { lok, intervals })
}
