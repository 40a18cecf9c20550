//! The `netpot-v1` JSON network format.

use serde_json::{json, Map, Value};

use super::{build_network, generate, GeneratorSpec, Network, Topology, VertexId};
use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "netpot-v1";

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn generator_value(spec: &GeneratorSpec) -> Value {
    let mut gen = Map::new();
    gen.insert("kind".into(), json!(spec.kind()));
    let params = match spec {
        GeneratorSpec::Line { conductances } if conductances.len() == 1 => json!({ "conductance": conductances[0] }),
        GeneratorSpec::Line { conductances } => json!({ "conductances": conductances }),
        GeneratorSpec::Tree { branching, lambda } => json!({ "branching": branching, "lambda": lambda }),
        GeneratorSpec::RandomConductanceGrid { low, high, .. } => json!({ "low": low, "high": high }),
        GeneratorSpec::Grid2d | GeneratorSpec::Ladder => json!({}),
    };
    gen.insert("params".into(), params);
    if let GeneratorSpec::RandomConductanceGrid { seed, .. } = spec {
        gen.insert("seed".into(), json!(seed));
    }
    Value::Object(gen)
}

/// Canonical serialization used for content hashing (name excluded).
pub(super) fn canonical_json(net: &Network) -> String {
    let mut obj = Map::new();
    obj.insert("format".into(), json!(FORMAT_TAG));
    obj.insert("root".into(), json!(net.root.to_string()));
    match &net.topology {
        Topology::Explicit(_) => {
            let edges: Vec<Value> =
                net.explicit_edges().unwrap_or_default().into_iter().map(|(u, v, c)| json!([u.to_string(), v.to_string(), c])).collect();
            obj.insert("edges".into(), Value::Array(edges));
        }
        Topology::Generated(spec) => {
            obj.insert("generator".into(), generator_value(spec));
        }
    }
    Value::Object(obj).to_string()
}

/// Serializes a network to `netpot-v1` JSON.
pub fn network_to_json(net: &Network) -> Value {
    let mut value: Value = serde_json::from_str(&canonical_json(net)).expect("canonical json parses");
    value["name"] = json!(net.name);
    value
}

fn get_f64(params: &Value, key: &str) -> Result<f64> {
    params.get(key).and_then(Value::as_f64).ok_or_else(|| fmt_err(format!("generator parameter {key:?} missing or not a number")))
}

fn parse_generator(gen: &Value) -> Result<GeneratorSpec> {
    let kind = gen.get("kind").and_then(Value::as_str).ok_or_else(|| fmt_err("generator.kind missing"))?;
    let empty = json!({});
    let params = gen.get("params").unwrap_or(&empty);
    let seed = gen.get("seed").and_then(Value::as_u64);
    Ok(match kind {
        "line" => {
            if let Some(list) = params.get("conductances").and_then(Value::as_array) {
                let conductances = list
                    .iter()
                    .map(|c| c.as_f64().ok_or_else(|| fmt_err("line conductances must be numbers")))
                    .collect::<Result<Vec<_>>>()?;
                GeneratorSpec::Line { conductances }
            } else {
                let c = params.get("conductance").and_then(Value::as_f64).unwrap_or(1.0);
                GeneratorSpec::Line { conductances: vec![c] }
            }
        }
        "grid2d" => GeneratorSpec::Grid2d,
        "ladder" => GeneratorSpec::Ladder,
        "tree" => {
            let branching = params.get("branching").and_then(Value::as_u64).ok_or_else(|| fmt_err("tree.branching missing"))?;
            GeneratorSpec::Tree {
                branching: u32::try_from(branching).map_err(|_| fmt_err("tree.branching too large"))?,
                lambda: get_f64(params, "lambda")?,
            }
        }
        "random-conductance-grid" => {
            GeneratorSpec::RandomConductanceGrid { seed: seed.unwrap_or(0), low: get_f64(params, "low")?, high: get_f64(params, "high")? }
        }
        other => return Err(Error::InvalidSpec(format!("unknown generator kind {other:?}"))),
    })
}

/// Parses a `netpot-v1` document.
pub fn network_from_json(value: &Value) -> Result<Network> {
    if value.get("format").and_then(Value::as_str) != Some(FORMAT_TAG) {
        return Err(fmt_err(format!("format must be {FORMAT_TAG:?}")));
    }
    let root: VertexId = value.get("root").and_then(Value::as_str).ok_or_else(|| fmt_err("root label missing"))?.parse()?;
    let net = match (value.get("edges"), value.get("generator")) {
        (Some(edges), None) => {
            let list = edges.as_array().ok_or_else(|| fmt_err("edges must be an array"))?;
            let mut parsed = Vec::with_capacity(list.len());
            for e in list {
                let triple = e.as_array().filter(|t| t.len() == 3).ok_or_else(|| fmt_err("edge must be [u, v, c]"))?;
                let label = |x: &Value| -> Result<VertexId> {
                    match x {
                        Value::String(s) => s.parse(),
                        Value::Number(n) => n.to_string().parse(),
                        _ => Err(fmt_err("edge endpoints must be labels")),
                    }
                };
                let c = triple[2].as_f64().ok_or_else(|| fmt_err("conductance must be a number"))?;
                parsed.push((label(&triple[0])?, label(&triple[1])?, c));
            }
            build_network(&parsed, root)?
        }
        (None, Some(gen)) => generate(parse_generator(gen)?, Some(root))?,
        _ => return Err(fmt_err("exactly one of `edges` or `generator` is required")),
    };
    Ok(match value.get("name").and_then(Value::as_str) {
        Some(name) => net.with_name(name),
        None => net,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_generator_and_edges() {
        let net = network_from_json(&json!({
            "format": "netpot-v1", "root": "L0.N0",
            "generator": {"kind": "tree", "params": {"branching": 2, "lambda": 0.5}}
        }))
        .unwrap();
        assert_eq!(net.generator(), Some(&GeneratorSpec::Tree { branching: 2, lambda: 0.5 }));

        let net = network_from_json(&json!({
            "format": "netpot-v1", "root": "0", "edges": [["0", "1", 1.0], ["1", "2", 2.5]]
        }))
        .unwrap();
        assert_eq!(net.vertex_count(), Some(3));
        let again = network_from_json(&network_to_json(&net)).unwrap();
        assert_eq!(again.hash(), net.hash());
    }

    #[test]
    fn rejects_malformed_documents() {
        assert!(network_from_json(&json!({"format": "other", "root": "0", "edges": []})).is_err());
        assert!(network_from_json(&json!({
            "format": "netpot-v1", "root": "0", "edges": [["0","1",1.0]],
            "generator": {"kind": "grid2d"}
        }))
        .is_err());
        assert!(network_from_json(&json!({
            "format": "netpot-v1", "root": "(0,0)", "generator": {"kind": "hexagonal"}
        }))
        .is_err());
    }

    #[test]
    fn hash_depends_on_content_only() {
        let a = generate(GeneratorSpec::Grid2d, None).unwrap();
        let b = generate(GeneratorSpec::Grid2d, None).unwrap().with_name("other");
        let c = generate(GeneratorSpec::Ladder, None).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
    }
}
