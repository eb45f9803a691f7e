//! Long-table CSV (`tile,factorA,factorB,factorC,metric,value[,replicate]`)
//! and ANOVA CSV (`effect,F,df1,df2,p`).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{AnovaRow, LongTable, Record, StatsError};

const HEADER: [&str; 6] = ["tile", "factorA", "factorB", "factorC", "metric", "value"];
const REPLICATE: &str = "replicate";

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> StatsError + '_ {
    move |source| StatsError::Io { path: path.to_path_buf(), source }
}

pub fn read_long_table(path: impl AsRef<Path>) -> Result<LongTable, StatsError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(io_error(path))?;
    read_long_table_from(BufReader::new(file)).map_err(|e| match e {
        StatsError::Parse { line, msg } => StatsError::Parse { line, msg: format!("{}: {msg}", path.display()) },
        other => other,
    })
}

/// The `replicate` column is optional; a header without it means no replicates.
pub fn read_long_table_from<R: Read>(r: R) -> Result<LongTable, StatsError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(r);
    let parse_err = |line: u64, msg: String| StatsError::Parse { line, msg };
    let headers = rdr.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let with_replicate = headers.len() == 7 && headers.get(6) == Some(REPLICATE);
    if headers.iter().take(6).ne(HEADER.iter().copied()) || !(headers.len() == 6 || with_replicate) {
        return Err(parse_err(1, format!("expected header `{}[,{REPLICATE}]`", HEADER.join(","))));
    }
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != headers.len() {
            return Err(parse_err(line, format!("expected {} fields, found {}", headers.len(), rec.len())));
        }
        let tile: u32 = rec[0].parse().map_err(|_| parse_err(line, format!("bad tile id `{}`", &rec[0])))?;
        let value: f64 = rec[5]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| parse_err(line, format!("bad value `{}`", &rec[5])))?;
        if (1..5).any(|i| rec[i].is_empty()) {
            return Err(parse_err(line, "empty factor level or metric".into()));
        }
        records.push(Record {
            tile,
            factors: [rec[1].to_string(), rec[2].to_string(), rec[3].to_string()],
            metric: rec[4].to_string(),
            value,
            replicate: with_replicate.then(|| rec[6].to_string()).filter(|s| !s.is_empty()),
        });
    }
    LongTable::new(records)
}

pub fn write_long_table(table: &LongTable, path: impl AsRef<Path>) -> Result<(), StatsError> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(io_error(path))?);
    write_long_table_to(table, &mut w).and_then(|_| w.flush()).map_err(io_error(path))
}

/// Adds the `replicate` column only when some record has one.
pub fn write_long_table_to<W: Write>(table: &LongTable, w: &mut W) -> std::io::Result<()> {
    let with_replicate = table.records().iter().any(|r| r.replicate.is_some());
    write!(w, "{}", HEADER.join(","))?;
    if with_replicate {
        write!(w, ",{REPLICATE}")?;
    }
    writeln!(w)?;
    for r in table.records() {
        write!(w, "{},{},{},{},{},{}", r.tile, r.factors[0], r.factors[1], r.factors[2], r.metric, r.value)?;
        if with_replicate {
            write!(w, ",{}", r.replicate.as_deref().unwrap_or(""))?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn write_anova_csv<W: Write>(rows: &[AnovaRow], w: &mut W) -> std::io::Result<()> {
    writeln!(w, "effect,F,df1,df2,p")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.effect.name(), r.f, r.df1, r.df2, r.p)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "tile,factorA,factorB,factorC,metric,value\n\
                          1,endo,abdomen,far,depth_accuracy,-0.001\n\
                          2,lidar,liver,close,time_variability,0.00036\n";

    #[test]
    fn round_trip() {
        let t = read_long_table_from(SAMPLE.as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        let mut out = Vec::new();
        write_long_table_to(&t, &mut out).unwrap();
        assert_eq!(read_long_table_from(out.as_slice()).unwrap(), t);
    }

    #[test]
    fn replicate_column() {
        let csv = "tile,factorA,factorB,factorC,metric,value,replicate\n1,a,b,c,m,1.0,left\n1,a,b,c,m,2.0,right\n";
        let t = read_long_table_from(csv.as_bytes()).unwrap();
        assert_eq!(t.records()[0].replicate.as_deref(), Some("left"));
        let mut out = Vec::new();
        write_long_table_to(&t, &mut out).unwrap();
        assert!(String::from_utf8(out).unwrap().starts_with("tile,factorA,factorB,factorC,metric,value,replicate\n"));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad = "tile,factorA,factorB,factorC,metric,value\n1,a,b,c,m,0.1\nx,a,b,c,m,0.2\n";
        match read_long_table_from(bad.as_bytes()) {
            Err(StatsError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(read_long_table_from("a,b\n".as_bytes()), Err(StatsError::Parse { line: 1, .. })));
    }
}
