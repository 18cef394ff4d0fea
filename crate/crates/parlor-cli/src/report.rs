use std::path::Path;

use anyhow::{bail, Context, Result};
use parlor::newton::{IterationReport, NewtonState};

use crate::config::RunConfig;

/// CSV column order; `wall_time` is last and excluded from determinism
/// comparisons.
pub const CSV_HEADER: &str = "iteration,epsilon,residual_calls,precond_calls,\
normalized_cost_r,normalized_cost_p,iterate_rank,wall_time";

pub fn format_row(row: &IterationReport) -> String {
    format!(
        "{},{:.6e},{},{},{:.6e},{:.6e},{},{:.6}",
        row.iteration,
        row.epsilon,
        row.residual_calls,
        row.precond_calls,
        row.normalized_cost_r,
        row.normalized_cost_p,
        row.iterate_rank,
        row.wall_time,
    )
}

pub fn write_csv(path: &Path, config: &RunConfig, state: &NewtonState) -> Result<()> {
    let mut out = String::new();
    for line in config.echo_lines() {
        out.push_str("# ");
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in &state.reports {
        out.push_str(&format_row(row));
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

/// Prints the aligned per-iteration table.
pub fn print_table(state: &NewtonState) {
    println!(
        "{:>5}  {:>12}  {:>10}  {:>10}  {:>10}  {:>10}  {:>5}",
        "iter", "epsilon", "R calls", "P calls", "R cost", "P cost", "rank"
    );
    for row in &state.reports {
        println!(
            "{:>5}  {:>12.4e}  {:>10}  {:>10}  {:>10.3e}  {:>10.3e}  {:>5}",
            row.iteration,
            row.epsilon,
            row.residual_calls,
            row.precond_calls,
            row.normalized_cost_r,
            row.normalized_cost_p,
            row.iterate_rank,
        );
    }
}

/// A parsed run CSV: the config echo and the data rows.
#[derive(Debug, Clone)]
pub struct ParsedRun {
    pub config: Vec<(String, String)>,
    pub rows: Vec<IterationReport>,
}

impl ParsedRun {
    pub fn config_value(&self, key: &str) -> Option<&str> {
        self.config
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

pub fn parse_csv(path: &Path) -> Result<ParsedRun> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let mut config = Vec::new();
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.trim().split_once('=') {
                config.push((k.trim().to_string(), v.trim().to_string()));
            }
            continue;
        }
        if !saw_header {
            if line != CSV_HEADER {
                bail!(
                    "{}:{}: unexpected header {:?}",
                    path.display(),
                    lineno + 1,
                    line
                );
            }
            saw_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            bail!(
                "{}:{}: expected 8 fields, got {}",
                path.display(),
                lineno + 1,
                fields.len()
            );
        }
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .with_context(|| format!("{}:{}: bad {what} {:?}", path.display(), lineno + 1, s))
        };
        rows.push(IterationReport {
            iteration: fields[0]
                .parse()
                .with_context(|| format!("{}:{}: bad iteration", path.display(), lineno + 1))?,
            epsilon: parse_f(fields[1], "epsilon")?,
            residual_calls: fields[2]
                .parse()
                .with_context(|| format!("{}:{}: bad residual_calls", path.display(), lineno + 1))?,
            precond_calls: fields[3]
                .parse()
                .with_context(|| format!("{}:{}: bad precond_calls", path.display(), lineno + 1))?,
            normalized_cost_r: parse_f(fields[4], "normalized_cost_r")?,
            normalized_cost_p: parse_f(fields[5], "normalized_cost_p")?,
            iterate_rank: fields[6]
                .parse()
                .with_context(|| format!("{}:{}: bad iterate_rank", path.display(), lineno + 1))?,
            wall_time: parse_f(fields[7], "wall_time")?,
        });
    }
    if !saw_header {
        bail!("{}: no header row found", path.display());
    }
    Ok(ParsedRun { config, rows })
}
