use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};

use settlesim::bench::{bench_workload, run_bench};
use settlesim::config::{RunConfig, RunConfigError};
use settlesim::econ::{
    build_comparison_report, roi_table, simulate_baseline, BlockchainSummary, CostModel, EconError, Mode, RoiInput,
};
use settlesim::ledger::{encode_block_log, read_chain, verify_chain, write_json_export, Digest};
use settlesim::simnet::{run_simulation, run_workload, SimError, TraceSink};

use crate::Format;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

type Res<T = u8> = Result<T, Failure>;

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn internal(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

fn load_config(path: Option<&Path>) -> Res<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => RunConfig::load(p).map_err(|e| usage(e.to_string())),
    }
}

fn output_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    flag.or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os("SETTLESIM_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("settlesim-out"))
}

fn write_file(path: &Path, bytes: &[u8]) -> Res<()> {
    fs::write(path, bytes).map_err(|e| internal(format!("cannot write {}: {e}", path.display())))
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Res<()> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| internal(e.to_string()))?;
    s.push('\n');
    write_file(path, s.as_bytes())
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, x, out);
            }
        }
        Value::Array(a) => {
            for (i, x) in a.iter().enumerate() {
                flatten(&format!("{prefix}.{i}"), x, out);
            }
        }
        Value::String(s) => out.push((prefix.into(), s.clone())),
        other => out.push((prefix.into(), other.to_string())),
    }
}

fn csv_pairs(pairs: &[(String, String)]) -> Res<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["key", "value"]).map_err(|e| internal(e.to_string()))?;
    for (k, v) in pairs {
        w.write_record([k, v]).map_err(|e| internal(e.to_string()))?;
    }
    w.into_inner().map_err(|e| internal(e.to_string()))
}

fn parse_seeds(s: &str) -> Res<Vec<u64>> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| usage(format!("--seeds expects A..B, got {s:?}")))?;
    let a: u64 = a.trim().parse().map_err(|_| usage(format!("bad seed {a:?}")))?;
    let b: u64 = b.trim().parse().map_err(|_| usage(format!("bad seed {b:?}")))?;
    if a >= b {
        return Err(usage("--seeds range is empty"));
    }
    Ok((a..b).collect())
}

struct RunLine {
    line: String,
}

fn run_one(cfg: &RunConfig, dir: &Path) -> Res<RunLine> {
    fs::create_dir_all(dir).map_err(|e| usage(format!("cannot create {}: {e}", dir.display())))?;
    write_json(&dir.join("config.json"), cfg)?;
    let trace_path = dir.join("trace.jsonl");
    let trace = File::create(&trace_path).map_err(|e| internal(format!("{}: {e}", trace_path.display())))?;
    let start = Instant::now();
    let out = run_simulation(&cfg.sim(), TraceSink::Writer(Box::new(BufWriter::new(trace)))).map_err(|e| match e {
        SimError::Config(c) => usage(c.to_string()),
        other => internal(other.to_string()),
    })?;
    let elapsed = start.elapsed().as_secs_f64();

    for n in &out.nodes {
        let log = dir.join(format!("node-{}.sblk", n.index));
        write_file(&log, &encode_block_log(&n.chain))?;
        write_file(&log.with_extension("sblk.head"), format!("{}\n", n.chain.head().to_hex()).as_bytes())?;
        let mut export = Vec::new();
        write_json_export(&n.chain, &mut export).map_err(|e| internal(e.to_string()))?;
        write_file(&dir.join(format!("node-{}.jsonl", n.index)), &export)?;
    }

    let m = &out.metrics;
    let deterministic = json!({
        "seed": out.seed,
        "trace_digest": out.trace.digest.to_hex(),
        "trace_events": out.trace.len,
        "observer": out.observer,
        "metrics": m,
        "reconciliation": out.reconcile,
    });
    write_json(
        &dir.join("metrics.json"),
        &json!({ "run": deterministic, "wall_clock": { "elapsed_secs": elapsed } }),
    )?;
    let mut pairs = Vec::new();
    flatten("", &deterministic, &mut pairs);
    write_file(&dir.join("metrics.csv"), &csv_pairs(&pairs)?)?;
    write_json(&dir.join("summary.json"), &BlockchainSummary::from(&out))?;

    let line = format!(
        "seed {} trace {} blocks {} executed {} rejected {} unsettled {} e2e p50 {} ms reconcile {}",
        out.seed,
        out.trace.digest.to_hex(),
        m.blocks,
        m.txs_executed,
        m.txs_rejected,
        m.txs_unsettled,
        m.end_to_end_ms.p50,
        if out.reconcile.is_clean() {
            "clean".to_string()
        } else {
            format!("{} mismatches", out.reconcile.mismatches.len())
        },
    );
    Ok(RunLine { line })
}

pub fn run(config: Option<&Path>, seed: Option<u64>, seeds: Option<&str>, out: Option<PathBuf>) -> Res {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let dir = output_dir(out, &cfg);
    let Some(spec) = seeds else {
        let r = run_one(&cfg, &dir)?;
        println!("{}", r.line);
        println!("outputs in {}", dir.display());
        return Ok(0);
    };
    let results: Vec<(u64, Res<RunLine>)> = parse_seeds(spec)?
        .into_par_iter()
        .map(|s| {
            let mut c = cfg.clone();
            c.seed = s;
            (s, run_one(&c, &dir.join(format!("seed-{s}"))))
        })
        .collect();
    let mut code = 0;
    for (s, r) in results {
        match r {
            Ok(r) => println!("{}", r.line),
            Err(e) => {
                eprintln!("seed {s}: {}", e.message);
                code = code.max(e.code);
            }
        }
    }
    println!("outputs in {}/seed-*", dir.display());
    Ok(code)
}

fn head_anchor(ledger: &Path, explicit: Option<&str>) -> Res<Option<Digest>> {
    if let Some(h) = explicit {
        return Digest::from_hex(h.trim())
            .map(Some)
            .ok_or_else(|| usage(format!("--head is not a 64-digit hex digest: {h:?}")));
    }
    let name = ledger.to_string_lossy();
    let base = name.strip_suffix(".tampered").unwrap_or(&name);
    let sidecar = PathBuf::from(format!("{base}.head"));
    match fs::read_to_string(&sidecar) {
        Ok(s) => Digest::from_hex(s.trim())
            .map(Some)
            .ok_or_else(|| usage(format!("{} does not hold a hex digest", sidecar.display()))),
        Err(_) => Ok(None),
    }
}

pub fn verify(ledger: &Path, head: Option<&str>) -> Res {
    let bytes = fs::read(ledger).map_err(|e| usage(format!("cannot read {}: {e}", ledger.display())))?;
    let anchor = head_anchor(ledger, head)?;
    let chain = read_chain(&bytes, anchor).map_err(|e| usage(format!("{}: not a block log: {e}", ledger.display())))?;
    if anchor.is_none() {
        println!("note: no head digest given; the tip is trusted as read");
    }
    let v = verify_chain(&chain);
    if v.valid {
        println!("valid: {} blocks, head {}", chain.tip_height(), chain.head().to_hex());
        Ok(0)
    } else {
        println!(
            "tampered: first broken height {} ({:?})",
            v.first_broken_height.unwrap_or(0),
            v.broken_link_kind.expect("invalid verdict carries a kind")
        );
        Ok(1)
    }
}

pub fn tamper(ledger: &Path, height: u64, byte: usize) -> Res {
    let bytes = fs::read(ledger).map_err(|e| usage(format!("cannot read {}: {e}", ledger.display())))?;
    let chain = read_chain(&bytes, None).map_err(|e| usage(format!("{}: not a block log: {e}", ledger.display())))?;
    let bad = chain.tamper(height, byte).map_err(|e| usage(e.to_string()))?;
    let out = PathBuf::from(format!("{}.tampered", ledger.display()));
    write_file(&out, &encode_block_log(&bad))?;
    println!("flipped byte {byte} of block {height}; wrote {}", out.display());
    Ok(0)
}

fn econ_failure(e: EconError) -> Failure {
    usage(e.to_string())
}

pub fn baseline(config: Option<&Path>, seed: Option<u64>, out: Option<PathBuf>) -> Res {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let dir = output_dir(out, &cfg);
    let outcome =
        simulate_baseline(&run_workload(&cfg.sim()), &cfg.baseline_plan, cfg.seed).map_err(econ_failure)?;
    fs::create_dir_all(&dir).map_err(|e| usage(format!("cannot create {}: {e}", dir.display())))?;
    write_json(&dir.join("baseline.json"), &outcome)?;
    println!(
        "baseline: {} txs, mean cycle {:.2} days (min {:.2}, max {:.2}), {} discrepancies, {} disputes",
        outcome.txs,
        outcome.mean_cycle_days(),
        outcome.cycle_min_ms as f64 / 86_400_000.0,
        outcome.cycle_max_ms as f64 / 86_400_000.0,
        outcome.discrepancies.len(),
        outcome.disputes.disputes().len(),
    );
    Ok(0)
}

pub fn compare(sim: &Path, baseline_config: Option<&Path>, format: Format) -> Res {
    let run_cfg = RunConfig::load(&sim.join("config.json")).map_err(|e| match e {
        RunConfigError::Io { .. } => usage(format!("missing input: {e}")),
        other => usage(other.to_string()),
    })?;
    let summary_path = sim.join("summary.json");
    let text = fs::read_to_string(&summary_path)
        .map_err(|e| usage(format!("missing input: {}: {e}", summary_path.display())))?;
    let summary: BlockchainSummary =
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", summary_path.display())))?;
    let base_cfg = match baseline_config {
        Some(p) => load_config(Some(p))?,
        None => run_cfg.clone(),
    };
    let outcome = simulate_baseline(&run_workload(&run_cfg.sim()), &base_cfg.baseline_plan, run_cfg.seed)
        .map_err(econ_failure)?;
    let report = build_comparison_report(
        Some(&summary),
        Some(&outcome),
        &base_cfg.cost_model,
        &base_cfg.baseline_plan,
    )
    .map_err(econ_failure)?;
    let text = match format {
        Format::Csv => report.to_csv(),
        Format::Json => report.to_json(),
    }
    .map_err(|e| internal(e.to_string()))?;
    print!("{text}");
    if !text.ends_with('\n') {
        println!();
    }
    Ok(0)
}

pub fn roi(
    investment: Option<u64>,
    savings: Option<u64>,
    years: u32,
    discount: f64,
    table: bool,
    format: Format,
) -> Res {
    if table {
        let m = CostModel::default();
        let rows =
            roi_table(discount, m.headline(Mode::Traditional) - m.headline(Mode::Blockchain)).map_err(econ_failure)?;
        match format {
            Format::Json => println!("{}", serde_json::to_string_pretty(&rows).map_err(|e| internal(e.to_string()))?),
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                for r in &rows {
                    w.serialize(r).map_err(|e| internal(e.to_string()))?;
                }
                let bytes = w.into_inner().map_err(|e| internal(e.to_string()))?;
                print!("{}", String::from_utf8_lossy(&bytes));
            }
        }
        return Ok(0);
    }
    let input = RoiInput {
        investment: investment.ok_or_else(|| usage("--investment is required"))?,
        annual_savings: savings.ok_or_else(|| usage("--savings is required"))?,
        horizon_years: years,
        discount_rate: discount,
    };
    let r = settlesim::econ::roi(&input).map_err(econ_failure)?;
    let payback = *r.payback_years.numer() as f64 / *r.payback_years.denom() as f64;
    let v = json!({
        "payback_years": format!("{payback:.3}"),
        "payback_exact": format!("{}/{}", r.payback_years.numer(), r.payback_years.denom()),
        "npv": format!("{:.2}", r.npv),
        "npv_r0": r.npv_r0.to_string(),
        "discount_rate": discount,
        "years": years,
    });
    match format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&v).map_err(|e| internal(e.to_string()))?),
        Format::Csv => {
            let mut pairs = Vec::new();
            flatten("", &v, &mut pairs);
            print!("{}", String::from_utf8_lossy(&csv_pairs(&pairs)?));
        }
    }
    Ok(0)
}

pub fn bench(txs: u64, config: Option<&Path>) -> Res {
    if txs == 0 {
        return Err(usage("--txs must be at least 1"));
    }
    let cfg = load_config(config)?.sim();
    let r = run_bench(&cfg, bench_workload(&cfg, txs));
    println!(
        "{} txs in {} blocks, {:.3} s: {:.0} tx/s",
        r.ledger.txs, r.ledger.blocks, r.wall_secs, r.tx_per_sec
    );
    println!("head {} state {}", r.ledger.head.to_hex(), r.ledger.state.to_hex());
    let _ = std::io::stdout().flush();
    Ok(0)
}
