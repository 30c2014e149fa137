//! Subcommand bodies. Each returns the one-line summary on success.

use std::path::{Path, PathBuf};

use belm_core::analysis::{
    convergence_study, lte_study_on, perturbation_study, roundtrip_study, RoundtripReport,
};
use belm_core::coeffs::{
    belm2_optimal, belm3_optimal, belmk_optimal, stability_check, system_residual,
};
use belm_core::format::{fmt_g17, render_json, CsvTable};
use belm_core::rng::{self, streams};
use belm_core::{invert as invert_states, sample as sample_states, InversionSeed, Trajectory};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Analytic, Flags, Format, RunConfig};
use crate::CliError;

const DEFAULT_NS: [usize; 5] = [25, 50, 100, 200, 500];

fn default_hs() -> Vec<f64> {
    (0..8)
        .map(|k| 1e-3 * 10f64.powf(1.5 * k as f64 / 7.0))
        .collect()
}

fn render(table: &CsvTable, format: Format) -> String {
    match format {
        Format::Csv => table.render(),
        Format::Json => render_json(&table.to_json()),
    }
}

#[derive(Serialize)]
struct OutputRecord {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct Sidecar<'a> {
    command: &'a str,
    config: &'a RunConfig,
    outputs: Vec<OutputRecord>,
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

/// Sibling of the main artifact: `<stem>.<tag>.<ext>`.
fn companion_path(out: &Path, tag: &str, format: Format) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.{tag}.{}", format.extension()))
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// Writes every output, then the sidecar for the first (main) one.
fn publish(command: &str, cfg: &RunConfig, outputs: &[(PathBuf, String)]) -> Result<(), CliError> {
    let mut records = Vec::with_capacity(outputs.len());
    for (path, text) in outputs {
        write_file(path, text)?;
        records.push(OutputRecord {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(text.as_bytes())),
        });
    }
    let sidecar = Sidecar {
        command,
        config: cfg,
        outputs: records,
    };
    let json = serde_json::to_value(&sidecar).expect("sidecar serialization cannot fail");
    write_file(&sidecar_path(&outputs[0].0), &render_json(&json))
}

fn short(v: f64) -> String {
    format!("{v:.3e}")
}

pub fn coeffs(flags: Flags) -> Result<String, CliError> {
    let cfg = RunConfig::resolve(flags, "coeffs")?;
    let hs = &cfg.hs;
    let k = cfg.k.unwrap_or(hs.len());
    if k < 2 || hs.len() != k {
        return Err(CliError::Config(format!(
            "--hs must list exactly k >= 2 step sizes, got k = {k} and {} sizes",
            hs.len()
        )));
    }
    let c = match k {
        2 => belm2_optimal(hs[0], hs[1])?.into_k(),
        3 => belm3_optimal(hs[0], hs[1], hs[2])?,
        _ => belmk_optimal(hs)?,
    };
    let residual = system_residual(hs, &c)?;
    let mut header: Vec<String> = vec!["k".into()];
    header.extend((1..=k).map(|j| format!("h{j}")));
    header.extend((1..=k).map(|j| format!("a{j}")));
    header.extend((1..k).map(|j| format!("b{j}")));
    header.push("residual".into());
    let mut table = CsvTable::new(header);
    let mut row = vec![k.to_string()];
    row.extend(hs.iter().chain(&c.a).chain(&c.b).map(|v| fmt_g17(*v)));
    row.push(fmt_g17(residual));
    table.push(row);
    publish(
        "coeffs",
        &cfg,
        &[(cfg.out.clone(), render(&table, cfg.format))],
    )?;
    let fmt_list = |v: &[f64]| v.iter().map(|x| fmt_g17(*x)).collect::<Vec<_>>().join(",");
    Ok(format!(
        "coeffs: k={k} a=[{}] b=[{}] residual={} -> {}",
        fmt_list(&c.a),
        fmt_list(&c.b),
        short(residual),
        cfg.out.display()
    ))
}

fn publish_trajectory(command: &str, cfg: &RunConfig, traj: &Trajectory) -> Result<(), CliError> {
    publish(
        command,
        cfg,
        &[(cfg.out.clone(), render(&traj.to_table(), cfg.format))],
    )
}

pub fn sample(flags: Flags) -> Result<String, CliError> {
    let cfg = RunConfig::resolve(flags, "sample")?;
    let method = cfg.single_method()?;
    let schedule = cfg.schedule_for(cfg.steps)?;
    let predictor = cfg.predictor(&schedule)?;
    let x_n = rng::normal_vec(&mut rng::stream(cfg.seed, streams::START_STATES), cfg.dim);
    let traj = sample_states(method, &predictor, &schedule, &x_n)?;
    publish_trajectory("sample", &cfg, &traj)?;
    Ok(format!(
        "sample: {method} N={} d={} max|x_0|={} -> {}",
        schedule.steps(),
        cfg.dim,
        short(max_abs(traj.data_end())),
        cfg.out.display()
    ))
}

pub fn invert(flags: Flags) -> Result<String, CliError> {
    let cfg = RunConfig::resolve(flags, "invert")?;
    let method = cfg.single_method()?;
    let schedule = cfg.schedule_for(cfg.steps)?;
    let predictor = cfg.predictor(&schedule)?;
    let seed = match &cfg.input {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
            InversionSeed::from_csv(&text)?
        }
        None => InversionSeed::new(rng::normal_vec(
            &mut rng::stream(cfg.seed, streams::DATA_STATES),
            cfg.dim,
        )),
    };
    let traj = invert_states(method, &predictor, &schedule, &seed)?;
    publish_trajectory("invert", &cfg, &traj)?;
    Ok(format!(
        "invert: {method} N={} approximate={} max|x_N|={} -> {}",
        schedule.steps(),
        traj.approximate,
        short(max_abs(traj.noise_end())),
        cfg.out.display()
    ))
}

pub fn roundtrip(flags: Flags) -> Result<String, CliError> {
    let cfg = RunConfig::resolve(flags, "roundtrip")?;
    let methods = cfg.methods()?;
    let ns = if cfg.ns.is_empty() {
        vec![cfg.steps]
    } else {
        cfg.ns.clone()
    };
    let mut report = RoundtripReport::default();
    for &n in &ns {
        let schedule = cfg.schedule_for(n)?;
        let predictor = cfg.predictor(&schedule)?;
        report.extend(roundtrip_study(
            &methods, &predictor, &schedule, cfg.trials, cfg.seed,
        )?);
    }
    publish(
        "roundtrip",
        &cfg,
        &[(cfg.out.clone(), render(&report.to_table(), cfg.format))],
    )?;
    for note in &report.notes {
        eprintln!("note: {note}");
    }
    let parts: Vec<String> = methods
        .iter()
        .filter_map(|m| {
            report
                .max_rel_error(*m)
                .map(|e| format!("{m} max_rel_error={}", short(e)))
        })
        .collect();
    Ok(format!(
        "roundtrip: N={ns:?} trials={} {} -> {}",
        cfg.trials,
        parts.join(" "),
        cfg.out.display()
    ))
}

fn concat(tables: Vec<CsvTable>) -> CsvTable {
    let mut iter = tables.into_iter();
    let mut first = iter.next().expect("at least one method");
    for t in iter {
        first.rows.extend(t.rows);
    }
    first
}

fn order_text(order: Option<f64>) -> String {
    order.map_or_else(|| "skipped".to_string(), |o| format!("{o:.3}"))
}

pub fn convergence(flags: Flags) -> Result<String, CliError> {
    let cfg = RunConfig::resolve(flags, "convergence")?;
    let methods = cfg.methods()?;
    let ns = if cfg.ns.is_empty() {
        DEFAULT_NS.to_vec()
    } else {
        cfg.ns.clone()
    };
    let family = cfg.family()?;
    let problem = cfg.analytic(&family.build(ns[0].max(1))?)?;
    let x_n = rng::normal_vec(&mut rng::stream(cfg.seed, streams::START_STATES), cfg.dim);
    let mut tables = Vec::new();
    let mut parts = Vec::new();
    for &m in &methods {
        let report = match &problem {
            Analytic::Gaussian(p) => convergence_study(m, p, &family, &ns, &x_n)?,
            Analytic::Polynomial(p) => convergence_study(m, p, &family, &ns, &x_n)?,
        };
        parts.push(format!("{m} order={}", order_text(report.fitted_order)));
        tables.push(report.to_table());
    }
    publish(
        "convergence",
        &cfg,
        &[(cfg.out.clone(), render(&concat(tables), cfg.format))],
    )?;
    Ok(format!(
        "convergence: {} N={ns:?} {} -> {}",
        problem.label(),
        parts.join(" "),
        cfg.out.display()
    ))
}

pub fn lte(flags: Flags) -> Result<String, CliError> {
    let cfg = RunConfig::resolve(flags, "lte")?;
    let methods = cfg.methods()?;
    let hs = if cfg.hs.is_empty() {
        default_hs()
    } else {
        cfg.hs.clone()
    };
    let problem = cfg.analytic(&cfg.local_grid().schedule(1.0, 1)?)?;
    let grid = cfg.local_grid();
    let mut tables = Vec::new();
    let mut parts = Vec::new();
    for &m in &methods {
        let report = match &problem {
            Analytic::Gaussian(p) => lte_study_on(m, p, &hs, &grid)?,
            Analytic::Polynomial(p) => lte_study_on(m, p, &hs, &grid)?,
        };
        parts.push(format!("{m} order={}", order_text(report.fitted_order)));
        tables.push(report.to_table());
    }
    publish(
        "lte",
        &cfg,
        &[(cfg.out.clone(), render(&concat(tables), cfg.format))],
    )?;
    Ok(format!(
        "lte: {} {} -> {}",
        problem.label(),
        parts.join(" "),
        cfg.out.display()
    ))
}

pub fn stability(flags: Flags) -> Result<String, CliError> {
    let cfg = RunConfig::resolve(flags, "stability")?;
    let schedule = cfg.schedule_for(cfg.steps)?;
    let grid = schedule.grid();
    let report = stability_check(&grid)?;
    let mut table = CsvTable::new([
        "i",
        "h_i",
        "h_ip1",
        "step_ratio_sq",
        "norm",
        "eta",
        "passed",
    ]);
    for i in 1..grid.steps() {
        let (h, h_next) = (grid.h(i), grid.h(i + 1));
        table.push(vec![
            i.to_string(),
            fmt_g17(h),
            fmt_g17(h_next),
            fmt_g17((h / h_next).powi(2)),
            report
                .norms
                .get(i - 1)
                .map(|v| fmt_g17(*v))
                .unwrap_or_default(),
            fmt_g17(report.eta),
            report.passed.to_string(),
        ]);
    }
    let mut outputs = vec![(cfg.out.clone(), render(&table, cfg.format))];
    let max_norm = report.norms.iter().copied().fold(0.0, f64::max);
    let mut summary = format!(
        "stability: N={} eta={} max_norm={} passed={}",
        grid.steps(),
        short(report.eta),
        short(max_norm),
        report.passed
    );
    if let Some(reason) = &report.reason {
        summary.push_str(&format!(" ({reason})"));
    }
    if let Some(delta) = cfg.delta {
        let predictor = cfg.predictor(&schedule)?;
        let mut tables = Vec::new();
        for m in cfg.methods()? {
            let r = perturbation_study(m, &predictor, &schedule, delta, cfg.trials, cfg.seed)?;
            summary.push_str(&format!(" {m} K_hat={}", short(r.k_hat)));
            tables.push(r.to_table());
        }
        let path = companion_path(&cfg.out, "perturbation", cfg.format);
        outputs.push((path, render(&concat(tables), cfg.format)));
    }
    publish("stability", &cfg, &outputs)?;
    Ok(format!("{summary} -> {}", cfg.out.display()))
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}
