use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use netpot::doob::{EscapeMode, Start, Target};
use netpot::network::network_from_json;
use netpot::network::network_to_json;
use netpot::potential::{sublevel_from_values, EscapeOptions, EscapeSchedule};
use netpot::solver::effective_resistance;
use netpot::{
    build_chain, conditioned_vs_hprocess, escape_construct, escape_statistic, exhaustion_limit, generate, m_curve, minimax, random_network,
    verify_suite, GeneratorSpec, GreenOperator64, Network, PotentialOnBall64, Tolerances,
};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::cache::{self, Cache, Outputs};
use crate::output::{
    json_bytes, load_measure, load_potential, measure_json, num, potential_json, potential_values, read_json, write_atomic, Csv,
};
use crate::{Cli, Command, Kind, Mode};

struct Ctx {
    tolerances: Tolerances,
    cache: Option<Cache>,
}

/// One command invocation: what it computes from and where results go.
struct Job<'a> {
    command: &'a str,
    network_hash: String,
    params: Value,
    /// Output roles and their paths. An `out` role without a path goes to
    /// standard output.
    paths: Vec<(&'a str, Option<&'a PathBuf>)>,
    cacheable: bool,
}

pub fn run(cli: &Cli) -> Result<bool> {
    let g = &cli.global;
    for (name, t) in [("solve-tol", g.solve_tol), ("identity-tol", g.identity_tol), ("lp-gap", g.lp_gap)] {
        if !(t > 0.0 && t.is_finite()) {
            bail!("--{name} must be positive, got {t}");
        }
    }
    let cache = if g.no_cache { None } else { default_cache_dir(g.cache_dir.clone()).map(Cache::new) };
    let ctx = Ctx { tolerances: g.tolerances(), cache };
    match &cli.command {
        Command::Gen { kind, conductance, branching, lambda, seed, low, high, index, vertices, name, out } => {
            let net = match kind {
                Kind::Random => random_network(*seed, *index, *vertices),
                _ => {
                    let spec = match kind {
                        Kind::Line => GeneratorSpec::Line { conductances: vec![*conductance] },
                        Kind::Grid2d => GeneratorSpec::Grid2d,
                        Kind::Tree => GeneratorSpec::Tree { branching: *branching, lambda: *lambda },
                        Kind::Ladder => GeneratorSpec::Ladder,
                        Kind::RandomGrid => GeneratorSpec::RandomConductanceGrid { seed: *seed, low: *low, high: *high },
                        Kind::Random => unreachable!(),
                    };
                    generate(spec, None)?
                }
            };
            let net = match name {
                Some(n) => net.with_name(n.clone()),
                None => net,
            };
            let job = Job {
                command: "gen",
                network_hash: net.hash().to_string(),
                params: json!({}),
                paths: vec![("out", out.as_ref())],
                cacheable: false,
            };
            execute(&ctx, job, |_| {
                let mut o = Outputs::default();
                o.file("out", json_bytes(&network_to_json(&net)));
                Ok(o)
            })
        }
        Command::Green { net, x, y, radii, tol, out } => {
            let network = load_network(net)?;
            let job = Job {
                command: "green",
                network_hash: network.hash().to_string(),
                params: json!({ "x": x.to_string(), "y": y.to_string(), "radii": radii, "tol": tol }),
                paths: vec![("out", out.as_ref())],
                cacheable: true,
            };
            execute(&ctx, job, |_| {
                let report = exhaustion_limit::<f64>(&network, x, y, radii, *tol, &ctx.tolerances)?;
                let mut csv = Csv::new(&["R", "g_value", "delta"]);
                for ((r, v), d) in report.radii.iter().zip(&report.values).zip(&report.deltas) {
                    let delta = if d.is_nan() { String::new() } else { num(*d) };
                    csv.row(&[r.to_string(), num(*v), delta]);
                }
                let mut o = Outputs::default();
                o.file("out", csv.into_bytes());
                if !report.converged {
                    o.stdout = format!("not converged: last delta exceeds {tol}\n");
                }
                Ok(o)
            })
        }
        Command::Dipole { net, big_r, y, eta, out } => {
            let network = load_network(net)?;
            let measure = match (y, eta) {
                (Some(v), _) => vec![(*v, 1.0)],
                (None, Some(path)) => load_measure(&read_json(path)?)?,
                (None, None) => unreachable!("clap requires one of --y and --eta"),
            };
            let params = json!({
                "R": big_r,
                "eta": measure.iter().map(|(v, w)| (v.to_string(), json!(w))).collect::<serde_json::Map<_, _>>(),
            });
            let job = Job {
                command: "dipole",
                network_hash: network.hash().to_string(),
                params,
                paths: vec![("out", out.as_ref())],
                cacheable: true,
            };
            execute(&ctx, job, |config| {
                let op = GreenOperator64::new(&network, *big_r, &ctx.tolerances)?;
                let ball = op.ball().clone();
                let pairs = measure.iter().map(|(v, w)| Ok((ball.locate(v)?, *w))).collect::<Result<Vec<_>>>()?;
                let values = op.dipole_mixture(&pairs)?;
                let f = PotentialOnBall64::new(ball, values, 1.0, &ctx.tolerances);
                let meta = json!({ "config": config, "boundary": "reflecting sphere, killed at the root" });
                let mut o = Outputs::default();
                o.file("out", json_bytes(&potential_json(&f, meta)));
                Ok(o)
            })
        }
        Command::Minimax { net, r, big_r, emit_psi, emit_eta, out } => {
            let network = load_network(net)?;
            let job = Job {
                command: "minimax",
                network_hash: network.hash().to_string(),
                params: json!({ "r": r, "R": big_r }),
                paths: vec![("out", out.as_ref()), ("psi", emit_psi.as_ref()), ("eta", emit_eta.as_ref())],
                cacheable: true,
            };
            execute(&ctx, job, |config| {
                let res = minimax::<f64>(&network, *r, *big_r, &ctx.tolerances)?;
                let certified = res.certified(&ctx.tolerances);
                if !certified {
                    log::warn!("duality gap {:e} exceeds the tolerance", res.gap);
                }
                let solver = json!({
                    "method": "double oracle over a double-double revised simplex",
                    "value": res.value,
                    "dual_value": res.dual_value,
                    "gap": res.gap,
                    "certified": certified,
                    "iterations": res.iterations,
                    "degenerate": res.degenerate,
                });
                let summary = json!({
                    "config": config,
                    "r": r,
                    "R": big_r,
                    "value": res.value,
                    "dual_value": res.dual_value,
                    "gap": res.gap,
                    "certified": certified,
                    "annulus_min": res.annulus_min,
                    "iterations": res.iterations,
                    "degenerate": res.degenerate,
                    "dropped_columns": res.dropped_columns,
                });
                let meta = json!({ "config": config, "solver": solver });
                let ball = res.psi.ball().clone();
                let mut o = Outputs::default();
                o.file("out", json_bytes(&summary));
                o.file("psi", json_bytes(&potential_json(&res.psi, meta.clone())));
                o.file("eta", json_bytes(&measure_json(&ball, *r, &res.eta.pairs(), meta)));
                Ok(o)
            })
        }
        Command::Mcurve { net, rmin, rmax, ratio, out } => {
            if *rmin == 0 || rmin > rmax {
                bail!("need 0 < rmin <= rmax, got {rmin} and {rmax}");
            }
            let network = load_network(net)?;
            let radii: Vec<usize> = std::iter::successors(Some(*rmin), |&r| Some(2 * r)).take_while(|&r| r <= *rmax).collect();
            let job = Job {
                command: "mcurve",
                network_hash: network.hash().to_string(),
                params: json!({ "radii": radii, "ratio": ratio }),
                paths: vec![("out", out.as_ref())],
                cacheable: true,
            };
            execute(&ctx, job, |_| {
                let curve = m_curve::<f64>(&network, &radii, *ratio, &ctx.tolerances)?;
                let mut csv = Csv::new(&["r", "R", "M", "gap", "iters"]);
                for row in &curve.rows {
                    csv.row(&[row.r.to_string(), row.big_r.to_string(), num(row.value), num(row.gap), row.iterations.to_string()]);
                }
                let mut o = Outputs::default();
                o.file("out", csv.into_bytes());
                Ok(o)
            })
        }
        Command::Escape { net, levels, weights, rmax, ratio, out, cert } => {
            let network = load_network(net)?;
            let job = Job {
                command: "escape",
                network_hash: network.hash().to_string(),
                params: json!({ "levels": levels, "weights": weights, "rmax": rmax, "ratio": ratio }),
                paths: vec![("out", Some(out)), ("cert", cert.as_ref())],
                cacheable: true,
            };
            execute(&ctx, job, |config| {
                let schedule = EscapeSchedule::Auto { levels: levels.clone(), weights: weights.clone(), r_max: *rmax };
                let options = EscapeOptions { ratio: *ratio, ..EscapeOptions::default() };
                let (h, certificate) = escape_construct::<f64>(&network, &schedule, &options, &ctx.tolerances)?;
                if !certificate.passed {
                    log::warn!("escape certificate failed");
                }
                let meta = json!({ "config": config, "certificate_passed": certificate.passed });
                let mut o = Outputs::default();
                o.file("out", json_bytes(&potential_json(&h, meta)));
                o.file("cert", json_bytes(&json!({ "config": config, "certificate": certificate })));
                Ok(o)
            })
        }
        Command::Sublevel { potential, levels, out } => {
            let doc = read_json(potential)?;
            let hash = doc.pointer("/ball/network_hash").and_then(Value::as_str).unwrap_or_default().to_string();
            let job = Job {
                command: "sublevel",
                network_hash: hash,
                params: json!({ "potential": file_hash(potential)?, "levels": levels }),
                paths: vec![("out", out.as_ref())],
                cacheable: false,
            };
            execute(&ctx, job, |_| {
                let (pairs, radius) = potential_values(&doc)?;
                let mut csv = Csv::new(&["level", "count", "max_distance", "window_complete"]);
                for row in sublevel_from_values(&pairs, radius, levels) {
                    csv.row(&[num(row.level), row.count.to_string(), row.max_distance.to_string(), row.window_complete.to_string()]);
                }
                let mut o = Outputs::default();
                o.file("out", csv.into_bytes());
                Ok(o)
            })
        }
        Command::Hsim { net, potential, ell, level, mode, samples, seed, start, out } => {
            let network = load_network(net)?;
            let doc = read_json(potential)?;
            let mode = match mode {
                Mode::Exact => EscapeMode::Exact,
                Mode::Mc => EscapeMode::MonteCarlo { samples: *samples, seed: *seed },
            };
            let mut params = json!({ "potential": file_hash(potential)?, "ell": ell, "M": level, "start": start });
            if let EscapeMode::MonteCarlo { samples, seed } = mode {
                params["samples"] = json!(samples);
                params["seed"] = json!(seed);
            }
            let job = Job {
                command: "hsim",
                network_hash: network.hash().to_string(),
                params,
                paths: vec![("out", out.as_ref())],
                cacheable: true,
            };
            execute(&ctx, job, |config| {
                let h = load_potential(&doc, &network, &ctx.tolerances)?;
                let chain = build_chain(&h)?;
                let start = if start == "initial" {
                    Start::Initial
                } else {
                    let v = start.parse().with_context(|| format!("start `{start}`"))?;
                    Start::Vertex(h.ball().locate(&v)?)
                };
                let stat = escape_statistic(&chain, start, *ell, *level, mode)?;
                let mut o = Outputs::default();
                o.file("out", json_bytes(&json!({ "config": config, "statistic": stat })));
                Ok(o)
            })
        }
        Command::Tv { net, potential, ell, targets, eta, out } => {
            if targets.is_empty() && eta.is_empty() {
                bail!("give --targets or --eta");
            }
            let network = load_network(net)?;
            let doc = read_json(potential)?;
            let measures = eta.iter().map(|p| load_measure(&read_json(p)?)).collect::<Result<Vec<_>>>()?;
            let params = json!({
                "potential": file_hash(potential)?,
                "ell": ell,
                "targets": targets.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
                "eta": eta.iter().map(|p| file_hash(p)).collect::<Result<Vec<_>>>()?,
            });
            let job = Job {
                command: "tv",
                network_hash: network.hash().to_string(),
                params,
                paths: vec![("out", out.as_ref())],
                cacheable: true,
            };
            execute(&ctx, job, |_| {
                let h = load_potential(&doc, &network, &ctx.tolerances)?;
                let ball = h.ball().clone();
                let op = GreenOperator64::from_ball(ball.clone(), &ctx.tolerances)?;
                let mut list = Vec::new();
                for v in targets {
                    list.push(Target::Vertex(ball.locate(v)?));
                }
                for m in &measures {
                    let pairs = m.iter().map(|(v, w)| Ok((ball.locate(v)?, *w))).collect::<Result<Vec<_>>>()?;
                    list.push(Target::Measure(pairs));
                }
                let report = conditioned_vs_hprocess(&op, &h, *ell, &list)?;
                let mut csv = Csv::new(&["target", "distance", "tv", "conditioned_mass", "h_mass"]);
                for row in &report.rows {
                    let target = if row.target.contains(',') { format!("\"{}\"", row.target) } else { row.target.clone() };
                    csv.row(&[target, row.distance.to_string(), num(row.tv), num(row.conditioned_mass), num(row.h_mass)]);
                }
                let mut o = Outputs::default();
                o.file("out", csv.into_bytes());
                Ok(o)
            })
        }
        Command::Resistance { net, radii, out } => {
            let network = load_network(net)?;
            let job = Job {
                command: "resistance",
                network_hash: network.hash().to_string(),
                params: json!({ "radii": radii }),
                paths: vec![("out", out.as_ref())],
                cacheable: true,
            };
            execute(&ctx, job, |_| {
                let mut csv = Csv::new(&["R", "resistance"]);
                for &r in radii {
                    csv.row(&[r.to_string(), num(effective_resistance::<f64>(&network, r, &ctx.tolerances)?)]);
                }
                let mut o = Outputs::default();
                o.file("out", csv.into_bytes());
                Ok(o)
            })
        }
        Command::Verify { net, seed, json: json_path } => {
            let network = load_network(net)?;
            let report = verify_suite(&network, &ctx.tolerances, *seed)?;
            let passed = report.passed;
            let job = Job {
                command: "verify",
                network_hash: network.hash().to_string(),
                params: json!({ "seed": seed }),
                paths: vec![("json", json_path.as_ref())],
                cacheable: false,
            };
            execute(&ctx, job, |config| {
                let mut o = Outputs { stdout: report.table(), ..Outputs::default() };
                o.file("json", json_bytes(&json!({ "config": config, "report": report })));
                Ok(o)
            })?;
            return Ok(passed);
        }
    }
    .map(|_| true)
}

fn default_cache_dir(flag: Option<PathBuf>) -> Option<PathBuf> {
    flag.or_else(|| std::env::var_os("XDG_CACHE_HOME").map(|d| PathBuf::from(d).join("netpot")))
        .or_else(|| std::env::var_os("HOME").map(|d| PathBuf::from(d).join(".cache").join("netpot")))
}

fn load_network(path: &Path) -> Result<Network> {
    let value = read_json(path)?;
    network_from_json(&value).with_context(|| format!("loading network {}", path.display()))
}

fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Runs `compute` or replays a cached result, then writes every output.
fn execute(ctx: &Ctx, job: Job, compute: impl FnOnce(&Value) -> Result<Outputs>) -> Result<()> {
    let config = json!({
        "command": job.command,
        "network_hash": job.network_hash,
        "params": job.params,
        "tolerances": ctx.tolerances,
        "version": env!("CARGO_PKG_VERSION"),
    });
    let key = cache::key(&config);
    let started = Instant::now();
    let cache = ctx.cache.as_ref().filter(|_| job.cacheable);
    let (outputs, hit) = match cache.and_then(|c| c.get(&key)) {
        Some(o) => {
            log::info!("cache hit {key}");
            (o, true)
        }
        None => {
            let o = compute(&config)?;
            if let Some(c) = cache {
                if let Err(e) = c.put(&key, &o) {
                    log::warn!("could not store cache entry in {}: {e:#}", c.dir().display());
                }
            }
            (o, false)
        }
    };
    let runtime_ms = started.elapsed().as_secs_f64() * 1e3;
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut stdout = String::new();
    for (role, bytes) in &outputs.files {
        match job.paths.iter().find(|p| p.0 == role).and_then(|p| p.1) {
            Some(path) => {
                write_atomic(path, bytes)?;
                let meta = json!({
                    "config": config,
                    "role": role,
                    "cache": if hit { "hit" } else { "miss" },
                    "cache_key": key,
                    "created_unix": created,
                    "runtime_ms": runtime_ms,
                });
                write_atomic(&sidecar(path), &json_bytes(&meta))?;
            }
            None if role == "out" => stdout += &String::from_utf8_lossy(bytes),
            None => {}
        }
    }
    stdout += &outputs.stdout;
    print!("{stdout}");
    Ok(())
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}
