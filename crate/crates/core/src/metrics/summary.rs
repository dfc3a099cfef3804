use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::MetricsError;
use crate::model::DeviceId;
use crate::sim::{RawCounters, Tally};

/// Below this many transmissions a device's estimates are flagged unreliable.
pub const MIN_TRANSMISSIONS: u64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    /// One group per independent replication.
    Replications,
    /// One group per batch of a single long run.
    BatchMeans,
}

/// Pooled point estimate with a Student-t interval from group means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Groups that contributed a value.
    pub groups: u32,
}

impl Estimate {
    pub fn half_width(&self) -> f64 {
        (self.ci_high - self.ci_low) / 2.0
    }

    pub fn contains(&self, x: f64) -> bool {
        self.ci_low <= x && x <= self.ci_high
    }

    /// Standard error implied by the interval at `confidence`.
    pub fn std_error(&self, confidence: f64) -> f64 {
        if self.groups < 2 {
            return 0.0;
        }
        self.half_width() / t_quantile(confidence, self.groups - 1)
    }

    fn from_groups(pooled: f64, groups: &[f64], confidence: f64) -> Estimate {
        let k = groups.len();
        if k < 2 {
            return Estimate { mean: pooled, ci_low: pooled, ci_high: pooled, groups: k as u32 };
        }
        let mean = groups.iter().sum::<f64>() / k as f64;
        let var = groups.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        let half = t_quantile(confidence, k as u32 - 1) * (var / k as f64).sqrt();
        Estimate { mean: pooled, ci_low: pooled - half, ci_high: pooled + half, groups: k as u32 }
    }
}

pub(crate) fn t_quantile(confidence: f64, dof: u32) -> f64 {
    let t = StudentsT::new(0.0, 1.0, dof as f64).expect("positive degrees of freedom");
    t.inverse_cdf(0.5 + confidence / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSim {
    pub device: DeviceId,
    pub arrivals: u64,
    pub transmissions: u64,
    pub successes: u64,
    pub adf: Option<Estimate>,
    /// Ticks.
    pub access_delay: Option<Estimate>,
    pub collision_prob: Option<Estimate>,
    /// Replaced packets per arrival.
    pub replacement_rate: f64,
    pub unreliable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSim {
    pub slot: usize,
    pub occurrences: u64,
    pub idle: Estimate,
    pub throughput: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub scenario_id: String,
    pub method: EstimateMethod,
    pub confidence: f64,
    pub replications: u32,
    pub horizon_slots: u64,
    pub measured_slots: u64,
    /// Slots with overlapping transmissions, whole runs including warm-up.
    pub collision_slots: u64,
    /// Mean super-cycle wall-clock length in ticks.
    pub frame_length: Option<Estimate>,
    pub devices: Vec<DeviceSim>,
    pub slots: Vec<SlotSim>,
}

impl SimReport {
    pub fn device(&self, id: DeviceId) -> Option<&DeviceSim> {
        self.devices.iter().find(|d| d.device == id)
    }

    /// Fails if any device has too few transmissions for its interval.
    pub fn require_sufficient(&self) -> Result<(), MetricsError> {
        let devices: Vec<DeviceId> = self.devices.iter().filter(|d| d.unreliable).map(|d| d.device).collect();
        if devices.is_empty() {
            Ok(())
        } else {
            Err(MetricsError::InsufficientData { devices })
        }
    }
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

/// Per-group ratio estimate; groups without a denominator are skipped.
fn estimate(groups: &[Tally], confidence: f64, f: impl Fn(&Tally) -> (f64, f64)) -> Option<Estimate> {
    let (mut num, mut den) = (0.0, 0.0);
    let mut values = Vec::with_capacity(groups.len());
    for g in groups {
        let (n, d) = f(g);
        num += n;
        den += d;
        if let Some(r) = ratio(n, d) {
            values.push(r);
        }
    }
    ratio(num, den).map(|pooled| Estimate::from_groups(pooled, &values, confidence))
}

/// Turns raw counters into estimates with `confidence` intervals.
///
/// With two or more runs each run is one group; a single run is split into
/// its batches. Point estimates are pooled ratios over all measured slots.
pub fn summarize(scenario_id: &str, runs: &[RawCounters], confidence: f64) -> Result<SimReport, MetricsError> {
    let Some(first) = runs.first() else {
        return Ok(SimReport {
            scenario_id: scenario_id.to_string(),
            method: EstimateMethod::Replications,
            confidence,
            replications: 0,
            horizon_slots: 0,
            measured_slots: 0,
            collision_slots: 0,
            frame_length: None,
            devices: Vec::new(),
            slots: Vec::new(),
        });
    };
    if runs.iter().any(|r| r.device_ids != first.device_ids || r.super_cycle != first.super_cycle) {
        return Err(MetricsError::InconsistentRuns);
    }
    let (method, groups): (EstimateMethod, Vec<Tally>) = if runs.len() >= 2 {
        (EstimateMethod::Replications, runs.iter().map(RawCounters::measured).collect())
    } else {
        (EstimateMethod::BatchMeans, first.batches.clone())
    };
    let mut total = Tally::new(first.device_ids.len(), first.super_cycle as usize);
    for g in &groups {
        total.add(g);
    }

    let devices = first
        .device_ids
        .iter()
        .enumerate()
        .map(|(i, &device)| {
            let t = &total.devices[i];
            DeviceSim {
                device,
                arrivals: t.arrivals,
                transmissions: t.transmissions,
                successes: t.successes(),
                adf: estimate(&groups, confidence, |g| (g.devices[i].adf_sum, g.devices[i].successes() as f64)),
                access_delay: estimate(&groups, confidence, |g| (g.devices[i].ad_sum, g.devices[i].successes() as f64)),
                collision_prob: estimate(&groups, confidence, |g| {
                    (g.devices[i].collided as f64, g.devices[i].transmissions as f64)
                }),
                replacement_rate: ratio(t.replacements as f64, t.arrivals as f64).unwrap_or(0.0),
                unreliable: t.transmissions < MIN_TRANSMISSIONS,
            }
        })
        .collect();

    let slots = (0..first.super_cycle as usize)
        .map(|s| {
            let idle = estimate(&groups, confidence, |g| (g.slots[s].idle as f64, g.slots[s].occurrences as f64))
                .unwrap_or(Estimate { mean: f64::NAN, ci_low: f64::NAN, ci_high: f64::NAN, groups: 0 });
            SlotSim { slot: s, occurrences: total.slots[s].occurrences, idle, throughput: 1.0 - idle.mean }
        })
        .collect();

    let cycle = first.super_cycle as f64;
    let frame_length = estimate(&groups, confidence, |g| (g.elapsed as f64 * cycle, g.slot_count as f64));

    Ok(SimReport {
        scenario_id: scenario_id.to_string(),
        method,
        confidence,
        replications: runs.len() as u32,
        horizon_slots: first.horizon_slots,
        measured_slots: total.slot_count,
        collision_slots: runs.iter().map(|r| r.collision_slots).sum(),
        frame_length,
        devices,
        slots,
    })
}
