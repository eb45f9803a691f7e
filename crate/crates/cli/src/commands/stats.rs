use std::path::{Path, PathBuf};

use depthmetric::stats::{analyze_metric, read_long_table, write_anova_csv, MetricAnalysis, FACTOR_NAMES};

use super::Globals;
use crate::config::{is_label, RunConfig, DEFAULT_LONG_TABLE};
use crate::error::CliError;
use crate::output::Staged;

pub fn anova_file(metric: &str) -> String {
    format!("anova_{metric}.csv")
}

/// Table to analyze: explicit path, else the run config's long table.
pub fn table_path(globals: &Globals, explicit: Option<PathBuf>) -> Result<PathBuf, CliError> {
    if let Some(p) = explicit {
        return Ok(p);
    }
    match &globals.config {
        Some(c) => Ok(RunConfig::load(c)?.long_table),
        None => Err(CliError::Usage(format!("give a long table path (e.g. {DEFAULT_LONG_TABLE}) or --config"))),
    }
}

pub fn format_p(p: f64) -> String {
    if p < 0.001 {
        "<0.001".into()
    } else {
        format!("{p:.3}")
    }
}

pub fn print_analysis(a: &MetricAnalysis) {
    let levels: Vec<String> =
        FACTOR_NAMES.iter().zip(&a.levels).map(|(name, l)| format!("{name}: {}|{}", l[0], l[1])).collect();
    let dropped = if a.dropped.is_empty() {
        "none".to_string()
    } else {
        a.dropped.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")
    };
    println!(
        "{}: ART ANOVA over {} tiles ({}); incomplete tiles dropped: {dropped}",
        a.metric,
        a.n_tiles,
        levels.join(", ")
    );
    println!("  {:<7} {:>12} {:>8} {:>8}", "effect", "F", "df", "p");
    for r in &a.rows {
        println!("  {:<7} {:>12.4} {:>8} {:>8}", r.effect.name(), r.f, format!("{},{}", r.df1, r.df2), format_p(r.p));
    }
}

pub fn run(globals: &Globals, table: Option<PathBuf>, metric: Option<String>) -> Result<(), CliError> {
    let path = table_path(globals, table)?;
    let table = read_long_table(&path)?;
    let metrics = match metric {
        Some(m) => vec![m],
        None => table.metrics(),
    };
    if metrics.is_empty() {
        return Err(CliError::config(&path, "long table has no records"));
    }
    let out_dir = globals.out.clone().unwrap_or_else(|| path.parent().unwrap_or(Path::new("")).to_path_buf());
    let mut analyses = Vec::new();
    for m in &metrics {
        if !is_label(m) {
            return Err(CliError::Usage(format!("metric name {m:?} is not a plain label")));
        }
        analyses.push(analyze_metric(&table, m)?);
    }
    let mut staged = Staged::new();
    for a in &analyses {
        staged.write(&out_dir.join(anova_file(&a.metric)), |w| Ok(write_anova_csv(&a.rows, w)?))?;
    }
    let written = staged.commit()?;
    for a in &analyses {
        print_analysis(a);
    }
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}
