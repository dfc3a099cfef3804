//! Arrival streams.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use super::rng::{device_stream, SimRng};
use crate::model::{ArrivalRate, DeviceId, Ticks, TrafficProcess};

/// The device's logical frame in nominal time: frame `k` spans
/// `[offset + k * period, offset + (k + 1) * period)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LogicalFrame {
    pub offset: Ticks,
    pub period: Ticks,
}

/// Lazily generated, non-decreasing arrival instants.
pub struct Arrivals {
    kind: Kind,
    rng: SimRng,
}

enum Kind {
    Poisson { exp: Option<Exp<f64>>, clock: f64 },
    Bernoulli { p: f64, frame: LogicalFrame, next_frame: u64 },
    Deterministic { period: u64, next: u64 },
    Trace { ticks: Vec<Ticks>, next: usize },
}

impl Arrivals {
    pub fn new(process: &TrafficProcess, rate: ArrivalRate, frame: LogicalFrame, rng: SimRng) -> Arrivals {
        let kind = match process {
            TrafficProcess::Poisson => {
                Kind::Poisson { exp: Exp::new(rate.per_tick()).ok().filter(|_| rate.per_tick() > 0.0), clock: 0.0 }
            }
            TrafficProcess::BernoulliPerFrame { p } => Kind::Bernoulli { p: p.clamp(0.0, 1.0), frame, next_frame: 0 },
            TrafficProcess::Deterministic { period, phase } => {
                Kind::Deterministic { period: period.0.max(1), next: phase.0 }
            }
            TrafficProcess::Trace(ticks) => Kind::Trace { ticks: ticks.clone(), next: 0 },
        };
        Arrivals { kind, rng }
    }
}

impl Iterator for Arrivals {
    type Item = Ticks;

    fn next(&mut self) -> Option<Ticks> {
        match &mut self.kind {
            Kind::Poisson { exp, clock } => {
                let exp = exp.as_ref()?;
                *clock += exp.sample(&mut self.rng);
                Some(Ticks(clock.floor() as u64))
            }
            Kind::Bernoulli { p, frame, next_frame } => {
                if *p <= 0.0 || frame.period.0 == 0 {
                    return None;
                }
                loop {
                    let k = *next_frame;
                    *next_frame += 1;
                    if self.rng.random_bool(*p) {
                        let phase = self.rng.random_range(0..frame.period.0);
                        return Some(Ticks(frame.offset.0 + k * frame.period.0 + phase));
                    }
                }
            }
            Kind::Deterministic { period, next } => {
                let t = *next;
                *next += *period;
                Some(Ticks(t))
            }
            Kind::Trace { ticks, next } => {
                let t = ticks.get(*next).copied();
                *next += 1;
                t
            }
        }
    }
}

/// All arrivals of one device strictly before `horizon`.
pub fn generate_traffic(
    process: &TrafficProcess,
    rate: ArrivalRate,
    frame: LogicalFrame,
    seed: u64,
    device: DeviceId,
    horizon: Ticks,
) -> Vec<Ticks> {
    Arrivals::new(process, rate, frame, device_stream(seed, device)).take_while(|t| *t < horizon).collect()
}
