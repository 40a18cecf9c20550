//! Number formatting, atomic file output and the potential/measure JSON formats.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use netpot::{Ball64, Network, PotentialOnBall64, Tolerances, VertexId};
use serde_json::{json, Map, Value};

pub const POTENTIAL_FORMAT: &str = "netpot-potential-v1";
pub const MEASURE_FORMAT: &str = "netpot-measure-v1";

/// Decimal with 17 significant digits, which round-trips every `f64`.
/// Scientific notation outside `1e-5 ≤ |x| < 1e17`.
pub fn num(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return "0.0000000000000000".into();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..17).contains(&exp) {
        format!("{:.*}", (16 - exp) as usize, x)
    } else {
        format!("{x:.16e}")
    }
}

/// CSV text with a mandatory header row.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv { text: header.join(",") + "\n" }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.text += &fields.join(",");
        self.text.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.text.into_bytes()
    }
}

/// Pretty JSON with a trailing newline.
pub fn json_bytes(value: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("json values serialize");
    out.push(b'\n');
    out
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so the target is either absent, old, or complete.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn ball_value(ball: &Ball64) -> Value {
    json!({
        "root": ball.vertex(ball.root()).to_string(),
        "R": ball.radius(),
        "network_hash": ball.network_hash(),
        "ball_hash": ball.hash(),
    })
}

/// `netpot-potential-v1`: values and root distances keyed by label.
pub fn potential_json(h: &PotentialOnBall64, metadata: Value) -> Value {
    let ball = h.ball();
    let mut values = Map::new();
    let mut distances = Map::new();
    for (i, &x) in h.values().iter().enumerate() {
        let label = ball.vertex(i).to_string();
        values.insert(label.clone(), json!(x));
        distances.insert(label, json!(ball.distance(i)));
    }
    json!({
        "format": POTENTIAL_FORMAT,
        "ball": ball_value(ball),
        "values": values,
        "distances": distances,
        "mass": h.mass(),
        "metadata": metadata,
    })
}

/// `netpot-measure-v1`: weights of a probability measure on a sphere.
pub fn measure_json(ball: &Ball64, radius: usize, pairs: &[(usize, f64)], metadata: Value) -> Value {
    let weights: Map<String, Value> = pairs.iter().map(|&(i, w)| (ball.vertex(i).to_string(), json!(w))).collect();
    json!({
        "format": MEASURE_FORMAT,
        "ball": ball_value(ball),
        "radius": radius,
        "weights": weights,
        "metadata": metadata,
    })
}

fn check_format(value: &Value, format: &str) -> Result<()> {
    match value.get("format").and_then(Value::as_str) {
        Some(f) if f == format => Ok(()),
        Some(f) => bail!("expected format {format}, found {f}"),
        None => bail!("missing format tag, expected {format}"),
    }
}

fn labelled_numbers(value: &Value, key: &str) -> Result<BTreeMap<VertexId, f64>> {
    let obj = value.get(key).and_then(Value::as_object).with_context(|| format!("missing object `{key}`"))?;
    obj.iter()
        .map(|(k, v)| {
            let label: VertexId = k.parse()?;
            let x = v.as_f64().with_context(|| format!("`{key}.{k}` is not a number"))?;
            Ok((label, x))
        })
        .collect()
}

fn ball_radius(value: &Value) -> Result<usize> {
    let r = value.pointer("/ball/R").and_then(Value::as_u64).context("missing ball.R")?;
    Ok(r as usize)
}

/// `(value, distance)` pairs and the window radius, without the network.
pub fn potential_values(value: &Value) -> Result<(Vec<(f64, usize)>, usize)> {
    check_format(value, POTENTIAL_FORMAT)?;
    let values = labelled_numbers(value, "values")?;
    let distances = labelled_numbers(value, "distances")?;
    let pairs = values
        .iter()
        .map(|(label, &x)| {
            let d = distances.get(label).with_context(|| format!("no distance for {label}"))?;
            Ok((x, *d as usize))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((pairs, ball_radius(value)?))
}

/// Rebuilds the potential on its ball of `net`; the network hash must match.
pub fn load_potential(value: &Value, net: &Network, tolerances: &Tolerances) -> Result<PotentialOnBall64> {
    check_format(value, POTENTIAL_FORMAT)?;
    let hash = value.pointer("/ball/network_hash").and_then(Value::as_str).context("missing ball.network_hash")?;
    if hash != net.hash() {
        bail!("potential was computed on network {hash}, not {}", net.hash());
    }
    let mass = value.get("mass").and_then(Value::as_f64).context("missing mass")?;
    let values = labelled_numbers(value, "values")?;
    let ball = Arc::new(Ball64::extract(net, ball_radius(value)?)?);
    if values.len() != ball.len() {
        bail!("potential has {} values, ball has {} vertices", values.len(), ball.len());
    }
    let tabulated = (0..ball.len())
        .map(|i| {
            let v = ball.vertex(i);
            values.get(&v).copied().with_context(|| format!("no value for {v}"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PotentialOnBall64::new(ball, tabulated, mass, tolerances))
}

/// Measure weights as `(label, weight)`.
pub fn load_measure(value: &Value) -> Result<Vec<(VertexId, f64)>> {
    check_format(value, MEASURE_FORMAT)?;
    Ok(labelled_numbers(value, "weights")?.into_iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits() {
        assert_eq!(num(1.0), "1.0000000000000000");
        assert_eq!(num(0.5), "0.50000000000000000");
        assert_eq!(num(-12.25), "-12.250000000000000");
        assert_eq!(num(1e-9), "1.0000000000000001e-9");
        for x in [0.1, 1.0 / 3.0, 2.0f64.sqrt() * 1e10, 6.02e23, -7e-300, 123456.789] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x, "{}", num(x));
        }
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/out.txt");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
