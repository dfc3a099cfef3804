use super::{effective_rate, AdfVector, AnalyticError, BufferedPrefactor, MiniSlotLoad};

/// One step of the mini-slot delay recursion.
///
/// Given the delay `tau` of mini-slot `m`, the per-frame rate `x` of that
/// mini-slot and the cumulative rate `gamma` of mini-slots `1..=m`, returns
/// the delay of mini-slot `m + 1`. `minislot` only labels errors.
pub fn adf_step(tau: f64, x: f64, gamma: f64, minislot: u32) -> Result<f64, AnalyticError> {
    let denominator = 1.0 - gamma - x;
    if denominator <= 0.0 || !denominator.is_finite() {
        return Err(AnalyticError::Overload { minislot, denominator });
    }
    let quadratic = -(1.0 - gamma) * x / 2.0 * tau * tau;
    let linear = (1.0 - gamma + x) * tau;
    let constant = -x * (1.0 + gamma) / 2.0;
    Ok((quadratic + linear + constant) / denominator)
}

/// Access delay in frames per mini-slot without buffers.
///
/// The first mini-slot never waits for another device, so its delay is one
/// frame. Each later mini-slot's delay follows from the one before it, with the
/// previous mini-slot's rate discounted by packet replacement at its own delay.
pub fn adf_no_buffer(loads: &MiniSlotLoad) -> Result<AdfVector, AnalyticError> {
    loads.check_exclusive()?;
    let n = loads.minislots();
    let mut out =
        AdfVector { tau: Vec::with_capacity(n), lambda_eff: Vec::with_capacity(n), gamma: Vec::with_capacity(n) };
    if n == 0 {
        return Ok(out);
    }
    let mut tau = 1.0;
    let mut gamma = 0.0;
    for m in 0..n {
        let x = effective_rate(loads.rate(m), tau);
        gamma += x;
        out.tau.push(tau);
        out.lambda_eff.push(x);
        out.gamma.push(gamma);
        if m + 1 < n {
            tau = adf_step(tau, x, gamma, m as u32 + 2)?;
        }
    }
    Ok(out)
}

/// First-mini-slot delay with a buffer, `1 + x / (2 (2 - x))`.
pub(crate) fn buffered_base(x: f64) -> f64 {
    1.0 + x / (2.0 * (2.0 - x))
}

/// Converts the delay of a packet that found its device empty into the
/// overall buffered delay via `(1 - g) / (1 - g - x) * (hat - 1) + 1`.
pub(crate) fn buffered_correction(
    hat: f64,
    gamma_before: f64,
    x_own: f64,
    minislot: u32,
) -> Result<f64, AnalyticError> {
    let denominator = 1.0 - gamma_before - x_own;
    if denominator <= 0.0 {
        return Err(AnalyticError::Overload { minislot, denominator });
    }
    Ok((1.0 - gamma_before) / denominator * (hat - 1.0) + 1.0)
}

/// Access delay in frames per mini-slot with buffers.
///
/// Rates are never discounted (no replacement). The recursion runs on the full
/// buffered delay of the previous mini-slot.
pub fn adf_buffered(loads: &MiniSlotLoad, prefactor: BufferedPrefactor) -> Result<AdfVector, AnalyticError> {
    loads.check_exclusive()?;
    let n = loads.minislots();
    let mut out =
        AdfVector { tau: Vec::with_capacity(n), lambda_eff: Vec::with_capacity(n), gamma: Vec::with_capacity(n) };
    if n == 0 {
        return Ok(out);
    }
    let rates: Vec<f64> = (0..n).map(|m| loads.rate(m)).collect();
    if rates[0] >= 2.0 {
        return Err(AnalyticError::Overload { minislot: 1, denominator: 2.0 - rates[0] });
    }
    let mut tau = buffered_base(rates[0]);
    let mut gamma = 0.0;
    for m in 0..n {
        let x = rates[m];
        gamma += x;
        out.tau.push(tau);
        out.lambda_eff.push(x);
        out.gamma.push(gamma);
        if m + 1 < n {
            let label = m as u32 + 2;
            let hat = adf_step(tau, x, gamma, label)?;
            let x_in_denominator = match prefactor {
                BufferedPrefactor::OwnRate => rates[m + 1],
                BufferedPrefactor::SensedRate => x,
            };
            tau = buffered_correction(hat, gamma, x_in_denominator, label)?;
        }
    }
    Ok(out)
}

/// Probability that no occupant of the slot transmits in it.
///
/// Buffered slots use raw rates; without buffers the effective rates in `adf`
/// are used, so that throughput `1 - idle` matches the delay recursion.
pub fn slot_idle_probability(loads: &MiniSlotLoad, buffered: bool, adf: &AdfVector) -> Result<f64, AnalyticError> {
    let busy: f64 = if buffered { loads.total() } else { adf.lambda_eff.iter().sum() };
    let idle = 1.0 - busy;
    if idle < 0.0 {
        return Err(AnalyticError::NegativeIdle { value: idle });
    }
    Ok(idle)
}
