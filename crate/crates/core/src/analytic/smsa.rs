//! Shared mini-slots: delays, collision probabilities and expected colliders
//! as a joint fixed point.

use serde::{Deserialize, Serialize};

use super::adf::{adf_step, buffered_base, buffered_correction};
use super::{effective_rate, AnalyticError, CollisionRate, MiniSlotLoad, SolverOptions, SHARED_RATE_RATIO_LIMIT};
use crate::model::DeviceId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmsaDevice {
    pub device: DeviceId,
    pub minislot: u32,
    pub lambda_norm: f64,
    /// Replacement-discounted rate (equal to `lambda_norm` with buffers).
    pub lambda_eff: f64,
    pub tau: f64,
    /// Probability of a collision given that the device transmits.
    pub collision_prob: f64,
    /// Expected number of simultaneous transmitters given that the device transmits.
    pub colliders: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmsaSolution {
    /// Mini-slot delay; for buffered slots the mean over the mini-slot's devices.
    pub tau: Vec<f64>,
    /// Aggregated channel-reaching rate per mini-slot, collisions counted once.
    pub agg_rate: Vec<f64>,
    /// Prefix sums of `agg_rate`.
    pub gamma: Vec<f64>,
    pub devices: Vec<SmsaDevice>,
    pub converged: bool,
    pub iterations: u32,
    pub residual: f64,
    pub warnings: Vec<String>,
}

impl SmsaSolution {
    pub fn idle_probability(&self) -> Result<f64, AnalyticError> {
        let idle = 1.0 - self.gamma.last().copied().unwrap_or(0.0);
        if idle < 0.0 {
            return Err(AnalyticError::NegativeIdle { value: idle });
        }
        Ok(idle)
    }

    pub fn device(&self, id: DeviceId) -> Option<&SmsaDevice> {
        self.devices.iter().find(|d| d.device == id)
    }
}

struct Pass {
    tau_cell: Vec<f64>,
    agg: Vec<f64>,
    gamma: Vec<f64>,
    tau_dev: Vec<f64>,
    eff: Vec<f64>,
    q: Vec<f64>,
    n: Vec<f64>,
}

fn collision_terms(
    cell: &[usize],
    rates: &[f64],
    tau: f64,
    rule: CollisionRate,
    q: &mut [f64],
    n: &mut [f64],
    minislot: u32,
) -> Result<(), AnalyticError> {
    for &i in cell {
        let mut survive = 1.0;
        let mut expected = 1.0;
        for &j in cell.iter().filter(|&&j| j != i) {
            let factor_rate = match rule {
                CollisionRate::Partner => rates[j],
                CollisionRate::Own => rates[i],
            };
            let factor = 1.0 - tau * factor_rate;
            if factor <= 0.0 {
                return Err(AnalyticError::Overload { minislot, denominator: factor });
            }
            survive *= factor;
            expected += tau * rates[j];
        }
        q[i] = 1.0 - survive;
        n[i] = expected;
    }
    Ok(())
}

fn solve(
    loads: &MiniSlotLoad,
    buffered: bool,
    opts: &SolverOptions,
    rule: CollisionRate,
) -> Result<SmsaSolution, AnalyticError> {
    let mut index = Vec::new();
    let mut rates = Vec::new();
    let mut cells: Vec<Vec<usize>> = Vec::with_capacity(loads.cells.len());
    for (m, cell) in loads.cells.iter().enumerate() {
        let mut ids = Vec::with_capacity(cell.len());
        for o in cell {
            ids.push(rates.len());
            rates.push(o.lambda_norm);
            index.push((o.device, m as u32 + 1));
        }
        cells.push(ids);
    }
    let count = rates.len();

    let pass = |q: &[f64], n: &[f64]| -> Result<Pass, AnalyticError> {
        let mslots = cells.len();
        let mut p = Pass {
            tau_cell: vec![0.0; mslots],
            agg: vec![0.0; mslots],
            gamma: vec![0.0; mslots],
            tau_dev: vec![0.0; count],
            eff: vec![0.0; count],
            q: vec![0.0; count],
            n: vec![1.0; count],
        };
        let mut gamma = 0.0;
        let mut hat = 1.0;
        for (m, cell) in cells.iter().enumerate() {
            let label = m as u32 + 1;
            // delay of the devices on this mini-slot
            let tau = if buffered {
                let mut sum = 0.0;
                for &i in cell {
                    let t = if m == 0 {
                        if rates[i] >= 2.0 {
                            return Err(AnalyticError::Overload { minislot: 1, denominator: 2.0 - rates[i] });
                        }
                        buffered_base(rates[i])
                    } else {
                        buffered_correction(hat, gamma, rates[i], label)?
                    };
                    p.tau_dev[i] = t;
                    sum += t;
                }
                if cell.is_empty() {
                    if m == 0 {
                        1.0
                    } else {
                        hat
                    }
                } else {
                    sum / cell.len() as f64
                }
            } else {
                for &i in cell {
                    p.tau_dev[i] = hat;
                }
                hat
            };
            let mut agg = 0.0;
            for &i in cell {
                p.eff[i] = if buffered { rates[i] } else { effective_rate(rates[i], tau) };
                agg += p.eff[i] * (1.0 - q[i] / n[i]);
            }
            gamma += agg;
            p.tau_cell[m] = tau;
            p.agg[m] = agg;
            p.gamma[m] = gamma;
            collision_terms(cell, &rates, tau, rule, &mut p.q, &mut p.n, label)?;
            if m + 1 < cells.len() {
                hat = adf_step(tau, agg, gamma, label + 1)?;
            }
        }
        Ok(p)
    };

    let mut q = vec![0.0; count];
    let mut n = vec![1.0; count];
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    let d = opts.damping;
    while iterations < opts.max_iter {
        iterations += 1;
        let p = pass(&q, &n)?;
        residual = 0.0;
        for i in 0..count {
            let nq = (1.0 - d) * q[i] + d * p.q[i];
            let nn = (1.0 - d) * n[i] + d * p.n[i];
            residual = f64::max(residual, (p.q[i] - q[i]).abs() / p.q[i].abs().max(1.0));
            residual = f64::max(residual, (p.n[i] - n[i]).abs() / p.n[i].abs().max(1.0));
            q[i] = nq;
            n[i] = nn;
        }
        if residual < opts.tol {
            break;
        }
    }
    if residual >= opts.tol {
        return Err(AnalyticError::NonConvergence { iterations, residual });
    }

    let p = pass(&q, &n)?;
    let mut warnings = Vec::new();
    if buffered {
        let mut cumulative = 0.0;
        for (m, cell) in cells.iter().enumerate() {
            cumulative += cell.iter().map(|&i| rates[i]).sum::<f64>();
            if cell.len() < 2 {
                continue;
            }
            for &i in cell {
                let ratio = rates[i] / cumulative;
                if ratio > SHARED_RATE_RATIO_LIMIT {
                    warnings.push(format!(
                        "device {} on shared mini-slot {}: rate is {:.3} of the cumulative rate; delays of devices sharing the mini-slot may differ",
                        index[i].0,
                        m + 1,
                        ratio
                    ));
                }
            }
        }
    }
    let devices = (0..count)
        .map(|i| SmsaDevice {
            device: index[i].0,
            minislot: index[i].1,
            lambda_norm: rates[i],
            lambda_eff: p.eff[i],
            tau: p.tau_dev[i],
            collision_prob: p.q[i],
            colliders: p.n[i],
        })
        .collect();
    Ok(SmsaSolution {
        tau: p.tau_cell,
        agg_rate: p.agg,
        gamma: p.gamma,
        devices,
        converged: true,
        iterations,
        residual,
        warnings,
    })
}

/// Fixed point of the shared-mini-slot system without buffers.
///
/// All devices of a mini-slot have the same delay. Each device's rate is
/// discounted for replacement and then for the share of its transmissions
/// that coincide with others (`1 - q/n`); collision terms start at `q = 0`,
/// `n = 1`.
pub fn smsa_solve_no_buffer(
    loads: &MiniSlotLoad,
    opts: &SolverOptions,
    rule: CollisionRate,
) -> Result<SmsaSolution, AnalyticError> {
    solve(loads, false, opts, rule)
}

/// Fixed point of the shared-mini-slot system with buffers. Devices sharing a
/// mini-slot get individual delays through their own rate in the correction
/// factor; collision estimates use the mini-slot mean delay.
pub fn smsa_solve_buffered(
    loads: &MiniSlotLoad,
    opts: &SolverOptions,
    rule: CollisionRate,
) -> Result<SmsaSolution, AnalyticError> {
    solve(loads, true, opts, rule)
}
