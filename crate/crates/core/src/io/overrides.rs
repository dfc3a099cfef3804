use toml::{Table, Value};

use super::IoError;

/// `dotted.key=value`. A `*` segment matches every element of an array or
/// table; a numeric segment indexes an array.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
    /// The text as given, for manifests.
    pub raw: String,
}

/// Parses `key=value`. The value is read as a TOML value, falling back to a
/// bare string.
pub fn parse_override(text: &str) -> Result<Override, IoError> {
    let (key, value) = text.split_once('=').ok_or_else(|| IoError::Override(text.to_string()))?;
    let path: Vec<String> = key.trim().split('.').map(|s| s.trim().to_string()).collect();
    if path.iter().any(String::is_empty) {
        return Err(IoError::Override(text.to_string()));
    }
    Ok(Override { path, value: parse_value(value.trim()), raw: text.trim().to_string() })
}

pub(crate) fn parse_value(text: &str) -> Value {
    format!("v = {text}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(text.to_string()))
}

/// Applies overrides in order. Each must touch at least one existing
/// container; missing leaf keys are created.
pub fn apply_overrides(doc: &mut Table, overrides: &[Override]) -> Result<(), IoError> {
    for o in overrides {
        let mut root = Value::Table(std::mem::take(doc));
        let hits = set(&mut root, &o.path, &o.value);
        *doc = match root {
            Value::Table(t) => t,
            _ => unreachable!("root stays a table"),
        };
        if hits == 0 {
            return Err(IoError::Override(o.raw.clone()));
        }
    }
    Ok(())
}

fn set(node: &mut Value, path: &[String], value: &Value) -> usize {
    let (head, rest) = match path.split_first() {
        Some(x) => x,
        None => return 0,
    };
    match node {
        Value::Table(t) => {
            if head == "*" {
                return t.iter_mut().map(|(_, v)| descend(v, rest, value)).sum();
            }
            if rest.is_empty() {
                t.insert(head.clone(), value.clone());
                return 1;
            }
            let child = t.entry(head.clone()).or_insert_with(|| Value::Table(Table::new()));
            set(child, rest, value)
        }
        Value::Array(a) => {
            if head == "*" {
                return a.iter_mut().map(|v| descend(v, rest, value)).sum();
            }
            match head.parse::<usize>().ok().and_then(|i| a.get_mut(i)) {
                Some(v) => descend(v, rest, value),
                None => 0,
            }
        }
        _ => 0,
    }
}

fn descend(node: &mut Value, rest: &[String], value: &Value) -> usize {
    if rest.is_empty() {
        *node = value.clone();
        1
    } else {
        set(node, rest, value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc() -> Table {
        "[protocol]\nn_m = 4\n[[devices]]\nid = 0\nlambda_per_s = 1.0\n[[devices]]\nid = 1\nlambda_per_s = 2.0\n[run]\nseed = 1\n"
            .parse()
            .unwrap()
    }

    #[test]
    fn scalar_override() {
        let mut d = doc();
        apply_overrides(&mut d, &[parse_override("run.horizon_slots=1000").unwrap()]).unwrap();
        assert_eq!(d["run"]["horizon_slots"].as_integer(), Some(1000));
        assert_eq!(d["run"]["seed"].as_integer(), Some(1));
    }

    #[test]
    fn wildcard_and_index() {
        let mut d = doc();
        apply_overrides(&mut d, &[parse_override("devices.*.lambda_per_s = 5.5").unwrap()]).unwrap();
        assert!(d["devices"].as_array().unwrap().iter().all(|x| x["lambda_per_s"].as_float() == Some(5.5)));
        apply_overrides(&mut d, &[parse_override("devices.1.lambda_per_s=7.0").unwrap()]).unwrap();
        assert_eq!(d["devices"][1]["lambda_per_s"].as_float(), Some(7.0));
        assert_eq!(d["devices"][0]["lambda_per_s"].as_float(), Some(5.5));
    }

    #[test]
    fn values_are_typed() {
        assert_eq!(parse_override("protocol.synccs=true").unwrap().value, Value::Boolean(true));
        assert_eq!(parse_override("a=poisson").unwrap().value, Value::String("poisson".into()));
    }

    #[test]
    fn bad_overrides() {
        assert!(parse_override("nokey").is_err());
        assert!(parse_override(".x=1").is_err());
        let mut d = doc();
        assert!(apply_overrides(&mut d, &[parse_override("devices.9.id=1").unwrap()]).is_err());
    }
}
