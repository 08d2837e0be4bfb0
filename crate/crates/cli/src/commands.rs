use std::collections::BTreeSet;

use qsure::calculus::{ito_limsup, write_convergence_csv, GridProcess, IntegralResult};
use qsure::gexpect::{g_expect, mean_and_stderr, robust_price, write_breakdown_csv, MonteCarloConfig, Target};
use qsure::measures::{generate_batch, write_driver_csv, DriverPath, PathStream};
use qsure::patching::{assign_typical, check_average_consistency, check_compatibility, patch};
use qsure::sde::{validate, QvMode};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{Integrand, RunConfig};
use crate::error::CliError;

/// Files produced by a command, plus the failure to report once they are
/// written.
#[derive(Default)]
pub struct Artifacts {
    pub files: Vec<(String, Vec<u8>)>,
    pub failure: Option<CliError>,
    pub headline: String,
}

impl Artifacts {
    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.files.push((name.to_owned(), bytes));
        Ok(())
    }

    fn bytes(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_owned(), bytes));
    }
}

#[derive(Serialize)]
struct Stats {
    mean: f64,
    stderr: Option<f64>,
    min: f64,
    max: f64,
}

fn stats(values: &[f64]) -> Option<Stats> {
    if values.is_empty() {
        return None;
    }
    let (mean, stderr) = if values.len() >= 2 {
        let (m, s) = mean_and_stderr(values);
        (m, Some(s))
    } else {
        (values[0], None)
    };
    Some(Stats {
        mean,
        stderr,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

fn file_stem(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}

fn family_batch(cfg: &RunConfig) -> Result<Vec<DriverPath<f64>>, CliError> {
    let fam = cfg.family()?;
    Ok(fam.members().iter().flat_map(|m| generate_batch(m, &cfg.grid, cfg.master_seed, cfg.n_paths)).collect())
}

fn grid_json(cfg: &RunConfig) -> serde_json::Value {
    json!({ "horizon": cfg.grid.horizon(), "steps": cfg.grid.steps() })
}

pub fn simulate(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let fam = cfg.family()?;
    let mut out = Artifacts::default();
    let mut names = BTreeSet::new();
    let mut members = Vec::new();
    for m in fam.members() {
        let name = format!("drivers_{}.csv", file_stem(&m.id));
        if !names.insert(name.clone()) {
            return Err(CliError::Config(format!("member ids collide on output file `{name}`")));
        }
        let paths = generate_batch(m, &cfg.grid, cfg.master_seed, cfg.n_paths);
        let mut csv = Vec::new();
        write_driver_csv(&paths, &mut csv)?;
        out.bytes(&name, csv);
        let qv: Vec<f64> = paths.iter().map(|p| p.terminal_qv()).collect();
        let b: Vec<f64> = paths.iter().map(|p| p.terminal()).collect();
        let bounds = m.spec.bounds();
        members.push(json!({
            "id": m.id,
            "spec": m.spec.to_string(),
            "bounds": [bounds.lower, bounds.upper],
            "file": name,
            "n_paths": paths.len(),
            "realized_qv_terminal": stats(&qv),
            "driver_terminal": stats(&b),
        }));
    }
    out.json(
        "simulate_summary.json",
        &json!({ "grid": grid_json(cfg), "master_seed": cfg.master_seed, "members": members }),
    )?;
    out.headline = format!("simulated {} path(s) under {} member(s)", cfg.n_paths, fam.len());
    Ok(out)
}

pub fn integrate(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let fam = cfg.family()?;
    let spec = &cfg.integrate;
    let member = match &spec.member {
        Some(id) => fam.get(id).ok_or_else(|| CliError::Config(format!("[integrate] names unknown member `{id}`")))?,
        None => &fam.members()[0],
    };
    let paths = generate_batch(member, &cfg.grid, cfg.master_seed, cfg.n_paths);
    let results: Vec<IntegralResult<f64>> = paths
        .par_iter()
        .map(|p| {
            let x = GridProcess::from_driver(p);
            let eta = match spec.integrand {
                Integrand::Driver => x.clone(),
                Integrand::Constant(c) => GridProcess::constant(x.grid().clone(), c),
            };
            ito_limsup(&eta, &x, spec.n_max, spec.tolerance)
        })
        .collect::<qsure::Result<_>>()?;

    let mut out = Artifacts::default();
    let indexed: Vec<(u64, &IntegralResult<f64>)> =
        paths.iter().zip(&results).map(|(p, r)| (p.provenance().path_index, r)).collect();
    let mut csv = Vec::new();
    write_convergence_csv(&indexed, &mut csv)?;
    out.bytes("convergence.csv", csv);

    let mut violations = 0usize;
    let per_path: Vec<_> = paths
        .iter()
        .zip(&results)
        .map(|(p, r)| {
            let bad = r.rows.iter().filter(|row| !row.within_bound()).count();
            violations += bad;
            json!({
                "path_id": p.path_id(),
                "converged": r.converged,
                "stabilized_at": r.stabilized_at,
                "final_cells": r.rows.last().map(|row| row.cells),
                "terminal": r.path.values().last(),
                "bound_violations": bad,
            })
        })
        .collect();
    let converged = results.iter().filter(|r| r.converged).count();
    out.json(
        "integrate_summary.json",
        &json!({
            "grid": grid_json(cfg),
            "member": member.id,
            "integrand": match spec.integrand { Integrand::Driver => "driver".to_owned(), Integrand::Constant(c) => format!("constant({c})") },
            "n_max": spec.n_max,
            "tolerance": spec.tolerance,
            "converged_paths": converged,
            "bound_violations": violations,
            "paths": per_path,
        }),
    )?;
    out.headline = format!("{converged}/{} path(s) converged, {violations} bound violation(s)", results.len());
    if violations > 0 {
        out.failure = Some(CliError::CheckFailed(format!("{violations} row(s) exceed the epsilon error bound")));
    }
    Ok(out)
}

pub fn compat(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let fam = cfg.family()?;
    let (coeffs, x0) = cfg.coefficients()?;
    let paths = family_batch(cfg)?;
    let records = assign_typical(fam, &paths, cfg.typical_tolerance);
    let report = check_compatibility(fam, coeffs, x0, &paths, cfg.typical_tolerance)?;
    let mut pass = report.pass;
    let mut headline = format!(
        "{} shared path(s), {} offending, max deviation {}",
        report.shared_paths, report.offending_paths, report.max_deviation
    );

    let average = match &cfg.average {
        None => None,
        Some(a) => {
            let (p, q) = (fam.get(&a.left), fam.get(&a.right));
            let (p, q) = p.zip(q).ok_or_else(|| CliError::Config("[average] names an unknown member".into()))?;
            let n = a.n_paths.unwrap_or(cfg.n_paths);
            let rep = check_average_consistency(p, q, coeffs, x0, &cfg.grid, n, cfg.master_seed, cfg.typical_tolerance)?;
            pass &= rep.pass;
            headline.push_str(&format!("; average {}: {}", rep.average_id, if rep.pass { "pass" } else { "FAIL" }));
            Some(rep)
        }
    };

    let mut out = Artifacts::default();
    out.json(
        "compat.json",
        &json!({
            "grid": grid_json(cfg),
            "coefficients": coeffs.name,
            "typical_set_sizes": records.iter().map(|r| json!({ "measure_id": r.measure_id, "paths": r.path_ids.len() })).collect::<Vec<_>>(),
            "shared_paths": report.shared_paths,
            "offending_paths": report.offending_paths,
            "max_deviation": report.max_deviation,
            "pass": report.pass,
            "pairs": report.pairs,
            "average": average,
        }),
    )?;
    out.headline = headline;
    if !pass {
        out.failure = Some(CliError::Compatibility(out.headline.clone()));
    }
    Ok(out)
}

pub fn patch_cmd(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let fam = cfg.family()?;
    let (coeffs, x0) = cfg.coefficients()?;
    let paths = family_batch(cfg)?;
    let mut out = Artifacts::default();
    match patch(fam, coeffs, x0, &paths, cfg.typical_tolerance) {
        Ok(table) => {
            let mut csv = Vec::new();
            table.write_csv(&mut csv)?;
            out.bytes("table.csv", csv);
            let residual = table.max_residual(coeffs, &paths);
            let summary = table.summary();
            out.headline = format!(
                "{} entr(ies), {} exceptional, max residual {residual}",
                summary.entries, summary.exceptional
            );
            out.json("table_summary.json", &json!({ "summary": summary, "max_residual": residual }))?;
            if residual != 0.0 {
                out.failure = Some(CliError::CheckFailed(format!("Euler residual {residual} on a table entry")));
            }
            Ok(out)
        }
        Err(qsure::Error::Conflict(details)) => {
            out.headline = format!("{} conflict(s)", details.len());
            out.json("conflicts.json", &json!({ "conflicts": details }))?;
            out.failure = Some(CliError::Conflict(out.headline.clone()));
            Ok(out)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn price(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let fam = cfg.family()?;
    let functional = cfg.functional()?;
    let mc = MonteCarloConfig {
        grid: cfg.grid.clone(),
        n_paths: cfg.n_paths,
        seed: cfg.master_seed,
        qv_mode: cfg.qv_mode,
        common_random_numbers: cfg.common_random_numbers,
    };
    let estimate = match functional.target {
        Target::State => {
            let (coeffs, x0) = cfg.coefficients()?;
            match cfg.qv_mode {
                QvMode::Pathwise => robust_price(fam, coeffs, x0, functional, &mc)?,
                QvMode::Generator => g_expect(fam, Some(coeffs), x0, functional, &mc)?,
            }
        }
        _ => g_expect(fam, None, 0.0, functional, &mc)?,
    };
    let mut out = Artifacts::default();
    out.json(
        "price.json",
        &json!({
            "functional": functional.description,
            "qv_mode": cfg.qv_mode,
            "common_random_numbers": cfg.common_random_numbers,
            "sup_value": estimate.sup_value,
            "argmax_id": estimate.argmax_id,
            "inf_value": estimate.inf_value,
            "argmin_id": estimate.argmin_id,
            "per_measure": estimate.per_measure,
        }),
    )?;
    let mut csv = Vec::new();
    write_breakdown_csv(&estimate.per_measure, &mut csv)?;
    out.bytes("breakdown.csv", csv);
    out.headline = format!(
        "sup {} at {}, inf {} at {}",
        estimate.sup_value, estimate.argmax_id, estimate.inf_value, estimate.argmin_id
    );
    Ok(out)
}

pub fn validate_cmd(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let (coeffs, _) = cfg.coefficients()?;
    let section = cfg.validate.as_ref().ok_or_else(|| CliError::Config("validate needs a [validate] section".into()))?;
    let mut stream = PathStream::new(cfg.master_seed, &format!("validate:{}", coeffs.name), 0);
    let report = validate(coeffs, section.domain, section.n_pairs, &mut stream)?;
    let mut out = Artifacts::default();
    out.json(
        "validate.json",
        &json!({
            "coefficients": coeffs.name,
            "params": coeffs.params,
            "declared_constant": coeffs.declared_constant,
            "domain": [section.domain.lo, section.domain.hi],
            "report": report,
        }),
    )?;
    let failed: Vec<&str> = report.sub_verdicts.iter().filter(|(_, ok)| !**ok).map(|(k, _)| k.as_str()).collect();
    out.headline = if report.pass {
        format!("{} passes ({} samples)", coeffs.name, report.sample_count)
    } else {
        format!("{} fails: {}", coeffs.name, failed.join(", "))
    };
    if !report.pass {
        out.failure = Some(CliError::CheckFailed(out.headline.clone()));
    }
    Ok(out)
}
