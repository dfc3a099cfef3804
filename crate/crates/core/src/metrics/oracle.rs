//! Exact per-frame Markov chain for at most three devices sharing one slot
//! with Bernoulli-per-frame arrivals.
//!
//! The chain is observed at the start of each logical frame. In a frame each
//! device independently gets no arrival, an *early* one (before its sensing
//! window starts, so usable in this frame's slot) or a *late* one.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::model::{validate_scenario, DeviceId, Scenario, TrafficProcess};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleOptions {
    /// Largest queue per device represented in the buffered chain.
    pub cap: usize,
    /// Stationary mass allowed at the cap before the truncation is rejected.
    pub overflow_mass: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { cap: 4, overflow_mass: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleDevice {
    pub device: DeviceId,
    pub minislot: u32,
    /// Arrival probability per frame.
    pub p: f64,
    /// Probability an arrival is early, given one occurs.
    pub early: f64,
    /// Exact mean AD-F of transmitted packets.
    pub adf: f64,
    /// Fraction of arrivals that are eventually transmitted.
    pub delivered: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub buffered: bool,
    pub states: usize,
    pub idle: f64,
    pub devices: Vec<OracleDevice>,
}

impl OracleResult {
    pub fn device(&self, id: DeviceId) -> Option<&OracleDevice> {
        self.devices.iter().find(|d| d.device == id)
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    None,
    Early,
    Late,
}

const MODES: [Mode; 3] = [Mode::None, Mode::Early, Mode::Late];

struct Chain {
    /// Devices in mini-slot order.
    p: Vec<f64>,
    early: Vec<f64>,
    buffered: bool,
    radix: usize,
}

struct Step {
    winner: Option<usize>,
    next: Vec<usize>,
}

impl Chain {
    fn n(&self) -> usize {
        self.p.len()
    }

    fn states(&self) -> usize {
        self.radix.pow(self.n() as u32)
    }

    fn decode(&self, mut x: usize) -> Vec<usize> {
        (0..self.n())
            .map(|_| {
                let d = x % self.radix;
                x /= self.radix;
                d
            })
            .collect()
    }

    fn encode(&self, q: &[usize]) -> usize {
        q.iter().rev().fold(0, |acc, &d| acc * self.radix + d)
    }

    fn mode_prob(&self, j: usize, m: Mode) -> f64 {
        match m {
            Mode::None => 1.0 - self.p[j],
            Mode::Early => self.p[j] * self.early[j],
            Mode::Late => self.p[j] * (1.0 - self.early[j]),
        }
    }

    /// All arrival combinations with their probabilities; `fixed` pins one
    /// device's mode (probability factor 1).
    fn combos(&self, fixed: Option<(usize, Mode)>) -> Vec<(Vec<Mode>, f64)> {
        let mut out = vec![(Vec::new(), 1.0)];
        for j in 0..self.n() {
            let mut next = Vec::with_capacity(out.len() * 3);
            for (modes, prob) in &out {
                for m in MODES {
                    let pm = match fixed {
                        Some((i, f)) if i == j => {
                            if m != f {
                                continue;
                            }
                            1.0
                        }
                        _ => self.mode_prob(j, m),
                    };
                    if pm == 0.0 {
                        continue;
                    }
                    let mut v = modes.clone();
                    v.push(m);
                    next.push((v, prob * pm));
                }
            }
            out = next;
        }
        out
    }

    fn step(&self, x: &[usize], modes: &[Mode]) -> Step {
        let n = self.n();
        let mut q: Vec<usize> = (0..n)
            .map(|j| {
                let e = x[j] + usize::from(modes[j] == Mode::Early);
                if self.buffered {
                    e
                } else {
                    e.min(1)
                }
            })
            .collect();
        let winner = (0..n).find(|&j| q[j] > 0);
        if let Some(w) = winner {
            q[w] -= 1;
        }
        for j in 0..n {
            if modes[j] == Mode::Late {
                q[j] = if self.buffered { q[j] + 1 } else { 1 };
            }
            q[j] = q[j].min(self.radix - 1);
        }
        Step { winner, next: q }
    }

    fn stationary(&self) -> Result<DVector<f64>, MetricsError> {
        let n = self.states();
        let combos = self.combos(None);
        let mut a = DMatrix::<f64>::zeros(n, n);
        for s in 0..n {
            let x = self.decode(s);
            for (modes, prob) in &combos {
                let t = self.encode(&self.step(&x, modes).next);
                // row t of P^T
                a[(t, s)] += prob;
            }
            a[(s, s)] -= 1.0;
        }
        for s in 0..n {
            a[(n - 1, s)] = 1.0;
        }
        let mut b = DVector::<f64>::zeros(n);
        b[n - 1] = 1.0;
        a.lu().solve(&b).ok_or(MetricsError::Singular)
    }

    /// Exact mean AD-F of delivered packets of device `i` without buffers,
    /// plus the delivered fraction. A tagged packet is followed until it is
    /// sent or replaced.
    fn tagged(&self, i: usize, pi: &DVector<f64>) -> Result<(f64, f64), MetricsError> {
        let transient: Vec<usize> = (0..self.states()).filter(|&s| self.decode(s)[i] == 1).collect();
        let pos = |s: usize| transient.binary_search(&s).ok();
        let k = transient.len();
        let mut q = DMatrix::<f64>::zeros(k, k);
        let mut r = DVector::<f64>::zeros(k);
        let combos = self.combos(None);
        for (row, &s) in transient.iter().enumerate() {
            let x = self.decode(s);
            for (modes, prob) in &combos {
                if modes[i] == Mode::Early {
                    continue; // replaced before its slot
                }
                let st = self.step(&x, modes);
                if st.winner == Some(i) {
                    r[row] += prob;
                } else if modes[i] != Mode::Late {
                    let col = pos(self.encode(&st.next)).expect("tagged packet still waiting");
                    q[(row, col)] += prob;
                }
            }
        }
        let lu = (DMatrix::<f64>::identity(k, k) - &q).lu();
        let u = lu.solve(&r).ok_or(MetricsError::Singular)?;
        let g = lu.solve(&(&r + &q * &u)).ok_or(MetricsError::Singular)?;

        let (mut delivered, mut weighted) = (0.0, 0.0);
        for s in 0..self.states() {
            let x = self.decode(s);
            for mode in [Mode::Early, Mode::Late] {
                let w0 = pi[s] * self.mode_prob(i, mode);
                if w0 == 0.0 {
                    continue;
                }
                for (modes, prob) in self.combos(Some((i, mode))) {
                    let w = w0 * prob;
                    let st = self.step(&x, &modes);
                    if mode == Mode::Early && st.winner == Some(i) {
                        delivered += w;
                        weighted += w;
                        continue;
                    }
                    let col = pos(self.encode(&st.next)).expect("tagged packet waiting");
                    if mode == Mode::Early {
                        delivered += w * u[col];
                        weighted += w * (u[col] + g[col]);
                    } else {
                        delivered += w * u[col];
                        weighted += w * g[col];
                    }
                }
            }
        }
        Ok((weighted / delivered, delivered / self.p[i]))
    }
}

/// Exact stationary AD-F per device and slot idle probability.
///
/// Supports up to three devices placed in the same slot of one shared class
/// cycle, each with Bernoulli-per-frame traffic, without SyncCS or shared
/// mini-slots.
pub fn brute_force_oracle(s: &Scenario, opts: &OracleOptions) -> Result<OracleResult, MetricsError> {
    let unsupported = |m: &str| Err(MetricsError::Unsupported(m.to_string()));
    if !validate_scenario(s).is_ok() {
        return unsupported("scenario does not validate");
    }
    if s.devices.is_empty() || s.devices.len() > 3 {
        return unsupported("needs one to three devices");
    }
    if s.params.synccs || s.params.smsa {
        return unsupported("SyncCS and shared mini-slots are not modelled");
    }
    let first = s.assignment.of(s.devices[0].id).expect("validated");
    let cycle = s.params.cycle(s.devices[0].priority);
    let mut devs = Vec::new();
    for d in &s.devices {
        let e = s.assignment.of(d.id).expect("validated");
        if e.slot != first.slot || s.params.cycle(d.priority) != cycle {
            return unsupported("devices must share one slot and one cycle length");
        }
        let TrafficProcess::BernoulliPerFrame { p } = d.traffic else {
            return unsupported("traffic must be Bernoulli per frame");
        };
        let frame = s.params.class_frame(d.priority).as_f64();
        devs.push((e.minislot, d.id, p, s.params.sensing_offset(e.minislot).as_f64() / frame));
    }
    devs.sort_by_key(|d| d.0);

    let buffered = s.params.buffered;
    let chain = Chain {
        p: devs.iter().map(|d| d.2).collect(),
        early: devs.iter().map(|d| d.3).collect(),
        buffered,
        radix: if buffered { opts.cap + 1 } else { 2 },
    };
    let pi = chain.stationary()?;

    if buffered {
        let at_cap: f64 = (0..chain.states()).filter(|&x| chain.decode(x).contains(&opts.cap)).map(|x| pi[x]).sum();
        if at_cap > opts.overflow_mass {
            return Err(MetricsError::StateSpaceOverflow { cap: opts.cap, mass: at_cap });
        }
    }

    let combos = chain.combos(None);
    let mut idle = 0.0;
    let mut mean_queue = vec![0.0; chain.n()];
    for x in 0..chain.states() {
        let q = chain.decode(x);
        for (j, m) in mean_queue.iter_mut().enumerate() {
            *m += pi[x] * q[j] as f64;
        }
        for (modes, prob) in &combos {
            if chain.step(&q, modes).winner.is_none() {
                idle += pi[x] * prob;
            }
        }
    }

    let mut devices = Vec::with_capacity(devs.len());
    for (i, &(minislot, device, p, early)) in devs.iter().enumerate() {
        let (adf, delivered) = if p == 0.0 {
            (1.0, 1.0)
        } else if buffered {
            // every packet is eligible once per occurrence until it is sent
            ((mean_queue[i] + p * early) / p, 1.0)
        } else {
            chain.tagged(i, &pi)?
        };
        devices.push(OracleDevice { device, minislot, p, early, adf, delivered });
    }
    Ok(OracleResult { buffered, states: chain.states(), idle, devices })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;

    fn tiny(devs: &[(u32, f64)], buffered: bool) -> Scenario {
        let params = ProtocolParams {
            minislots: 4,
            minislot_len: Ticks(10_000),
            tx_len: Ticks(100_000),
            cycle_hp: 1,
            cycle_rp: 1,
            cycle_lp: 1,
            synccs: false,
            buffered,
            smsa: false,
        };
        let t_s = params.slot_len().as_f64() / 1e9;
        let mut devices = Vec::new();
        let mut entries = Vec::new();
        for (i, &(m, p)) in devs.iter().enumerate() {
            let id = DeviceId(i as u32);
            devices.push(DeviceSpec {
                id,
                priority: Priority::Low,
                rate: ArrivalRate(p / t_s),
                traffic: TrafficProcess::BernoulliPerFrame { p },
            });
            entries.push(AssignmentEntry { device: id, slot: 0, minislot: m });
        }
        Scenario {
            params,
            devices,
            assignment: Assignment { entries },
            qos: QosSpec::default(),
            run: RunControl::default(),
        }
    }

    #[test]
    fn single_device_is_never_blocked() {
        for buffered in [false, true] {
            let r = brute_force_oracle(&tiny(&[(1, 0.1)], buffered), &OracleOptions::default()).unwrap();
            assert!((r.devices[0].adf - 1.0).abs() < 1e-12);
            assert!((r.idle - 0.9).abs() < 1e-12);
        }
    }

    #[test]
    fn two_devices_no_buffer_near_theorem() {
        let r = brute_force_oracle(&tiny(&[(1, 0.1), (2, 0.1)], false), &OracleOptions::default()).unwrap();
        let t2 = r.devices[1].adf;
        assert!(t2 > 1.0 && ((t2 - 19.0 / 17.0) / t2).abs() < 0.10, "{t2}");
        assert!((r.devices[0].adf - 1.0).abs() < 1e-12);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let c = Chain { p: vec![0.2, 0.3, 0.1], early: vec![0.0, 0.05, 0.1], buffered: false, radix: 2 };
        let total: f64 = c.combos(None).iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-15);
        let pi = c.stationary().unwrap();
        assert!((pi.sum() - 1.0).abs() < 1e-12);
        assert!(pi.iter().all(|x| *x >= -1e-15));
    }

    #[test]
    fn buffered_idle_is_one_minus_load() {
        let r = brute_force_oracle(&tiny(&[(1, 0.1), (2, 0.1)], true), &OracleOptions::default());
        match r {
            Ok(r) => assert!((r.idle - 0.8).abs() < 1e-6),
            Err(MetricsError::StateSpaceOverflow { .. }) => {}
            Err(e) => panic!("{e}"),
        }
    }

    #[test]
    fn overflow_is_reported() {
        let r =
            brute_force_oracle(&tiny(&[(1, 0.45), (2, 0.45)], true), &OracleOptions { cap: 2, overflow_mass: 1e-9 });
        assert!(matches!(r, Err(MetricsError::StateSpaceOverflow { cap: 2, .. })));
    }

    #[test]
    fn unsupported_inputs() {
        let mut s = tiny(&[(1, 0.1)], false);
        s.devices[0].traffic = TrafficProcess::Poisson;
        assert!(matches!(brute_force_oracle(&s, &OracleOptions::default()), Err(MetricsError::Unsupported(_))));
    }
}
