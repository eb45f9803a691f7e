use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use depthmetric::stats::{analyze_metric, read_long_table, LongTable, FACTOR_NAMES};

use super::stats::format_p;
use super::{mm, Globals};
use crate::config::DEFAULT_LONG_TABLE;
use crate::error::CliError;
use crate::output::Staged;

pub const REPORT_FILE: &str = "report.csv";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation (0 for a single value).
    pub sd: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Summary {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        let sd = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
        Summary { n, mean, sd }
    }
}

/// Grand mean over tiles for every (metric, factor cell), replicates averaged.
pub fn condition_means(table: &LongTable) -> BTreeMap<(String, [String; 3]), Summary> {
    let mut groups: BTreeMap<(String, [String; 3]), Vec<f64>> = BTreeMap::new();
    for r in table.collapse_replicates().records() {
        groups.entry((r.metric.clone(), r.factors.clone())).or_default().push(r.value);
    }
    groups.into_iter().map(|(k, v)| (k, Summary::of(&v))).collect()
}

pub fn run(globals: &Globals, run_dir: Option<PathBuf>) -> Result<(), CliError> {
    let dir = run_dir.or_else(|| globals.out.clone()).unwrap_or_else(|| PathBuf::from("."));
    let table_path = dir.join(DEFAULT_LONG_TABLE);
    let table = read_long_table(&table_path)?;
    let means = condition_means(&table);

    let mut staged = Staged::new();
    staged.write(&dir.join(REPORT_FILE), |w| {
        writeln!(w, "metric,factorA,factorB,factorC,n_tiles,mean,sd")?;
        for ((metric, f), s) in &means {
            writeln!(w, "{metric},{},{},{},{},{},{}", f[0], f[1], f[2], s.n, s.mean, s.sd)?;
        }
        Ok(())
    })?;
    staged.commit()?;

    println!("report for {} ({} records)", table_path.display(), table.len());
    let collapsed = table.collapse_replicates();
    for metric in table.metrics() {
        println!();
        println!("{metric} (mm, mean ± SD over tiles)");
        for ((_, f), s) in means.iter().filter(|((m, _), _)| *m == metric) {
            println!("  {:<32} {:>8} ± {:<7} n={}", f.join("/"), mm(s.mean), mm(s.sd), s.n);
        }
        for (i, name) in FACTOR_NAMES.iter().enumerate() {
            let mut by_level: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
            for r in collapsed.records().iter().filter(|r| r.metric == metric) {
                by_level.entry(r.factors[i].as_str()).or_default().push(r.value);
            }
            let parts: Vec<String> = by_level
                .iter()
                .map(|(level, v)| {
                    let s = Summary::of(v);
                    format!("{level} {} ± {}", mm(s.mean), mm(s.sd))
                })
                .collect();
            println!("  factor {name}: {}", parts.join("; "));
        }
        match analyze_metric(&table, &metric) {
            Ok(a) => {
                let effects: Vec<String> = a
                    .rows
                    .iter()
                    .filter(|r| r.p < 0.05)
                    .map(|r| format!("{} (p {})", r.effect.name(), format_p(r.p)))
                    .collect();
                let shown = if effects.is_empty() { "none".to_string() } else { effects.join(", ") };
                println!("  significant effects at 0.05 ({} tiles): {shown}", a.n_tiles);
            }
            Err(e) => println!("  ANOVA not available: {e}"),
        }
    }
    eprintln!("wrote {}", dir.join(REPORT_FILE).display());
    Ok(())
}
