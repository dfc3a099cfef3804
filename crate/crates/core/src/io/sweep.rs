use toml::Value;

use super::overrides::{parse_value, Override};
use super::IoError;

/// One sweep dimension: a dotted key and the values it takes.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<Value>,
}

/// Parses `key = logspace(a, b, n)`, `key = linspace(a, b, n)` (both
/// inclusive; logspace takes decimal exponents) or `key = [v1, v2, ...]`.
pub fn parse_axis(text: &str) -> Result<Axis, IoError> {
    let bad = || IoError::Axis(text.to_string());
    let (key, spec) = text.split_once('=').ok_or_else(bad)?;
    let key = key.trim().to_string();
    let spec = spec.trim();
    if key.is_empty() {
        return Err(bad());
    }
    let values = if let Some(args) = call(spec, "logspace").or_else(|| call(spec, "linspace")) {
        let nums: Vec<f64> =
            args.split(',').map(|a| a.trim().parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
        let [a, b, n] = nums[..] else { return Err(bad()) };
        if n < 1.0 || n.fract() != 0.0 {
            return Err(bad());
        }
        let n = n as usize;
        let at = |i: usize| if n == 1 { a } else { a + (b - a) * i as f64 / (n - 1) as f64 };
        let log = spec.starts_with("logspace");
        (0..n).map(|i| Value::Float(if log { 10f64.powf(at(i)) } else { at(i) })).collect()
    } else {
        match parse_value(spec) {
            Value::Array(a) if !a.is_empty() => a,
            _ => return Err(bad()),
        }
    };
    Ok(Axis { key, values })
}

fn call<'a>(spec: &'a str, name: &str) -> Option<&'a str> {
    spec.strip_prefix(name)?.trim_start().strip_prefix('(')?.strip_suffix(')')
}

/// Cartesian product of the axes, first axis slowest, as override sets.
pub fn grid(axes: &[Axis]) -> Vec<Vec<Override>> {
    let mut points: Vec<Vec<Override>> = vec![Vec::new()];
    for axis in axes {
        let path: Vec<String> = axis.key.split('.').map(str::to_string).collect();
        points = points
            .into_iter()
            .flat_map(|p| {
                let path = &path;
                axis.values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(Override { path: path.clone(), value: v.clone(), raw: format!("{}={}", axis.key, v) });
                    q
                })
            })
            .collect();
    }
    points
}
