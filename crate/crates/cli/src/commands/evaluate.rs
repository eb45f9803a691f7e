use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use depthmetric::errorfield::{write_metrics_csv, write_ppm, DistanceMode, MetricKind, ReferenceSurface};
use depthmetric::exec::Exec;
use depthmetric::maskpool::{write_tiles_csv, Footprint};
use depthmetric::meshio::{read_ply, MeshIoError, OcfHeader, OcfReader, OrganizedCloud};
use depthmetric::pipeline::{evaluate, pooled_records, recording_footprint, EvaluateOptions};
use depthmetric::stats::{read_long_table, write_long_table_to, LongTable};

use super::register::frame_registration;
use super::{mm, require_config, Globals};
use crate::config::{is_label, RunConfig};
use crate::error::CliError;
use crate::output::Staged;

pub const METRICS_FILE: &str = "metrics.csv";
pub const TILES_FILE: &str = "tiles.csv";
pub const FOOTPRINT_FILE: &str = "footprint.csv";

/// Streams the frames of an OCF file, attaching the path to any error.
fn frames_of<'a, R: BufRead + 'a>(
    mut reader: OcfReader<R>,
    path: &'a Path,
) -> impl Iterator<Item = Result<OrganizedCloud, MeshIoError>> + 'a {
    std::iter::from_fn(move || reader.next_frame().map(|r| r.map_err(|e| e.in_file(path))))
}

/// Factor levels from the recording's own labels: camera, tissue, zoom.
fn factors_from_header(header: &OcfHeader, path: &Path) -> Result<[String; 3], CliError> {
    let label = |key: &str| header.conditions.iter().find(|(k, _)| k == key).map(|(_, v)| v.clone());
    match (label("tissue"), label("zoom")) {
        (Some(tissue), Some(zoom)) if [&header.camera, &tissue, &zoom].iter().all(|l| is_label(l)) => {
            Ok([header.camera.clone(), tissue, zoom])
        }
        _ => Err(CliError::config(
            path,
            "frame file lacks usable `tissue`/`zoom` labels; set `factors` in the run config",
        )),
    }
}

/// Footprint of the partner camera's recording, if the run names one.
fn partner_footprint(
    cfg: &RunConfig,
    surface: &ReferenceSurface,
    mode: DistanceMode,
    exec: Exec,
) -> Result<Option<Footprint>, CliError> {
    let Some(partner_path) = &cfg.viewfield_partner else {
        return Ok(None);
    };
    let partner = RunConfig::load(partner_path)?;
    let same_mesh =
        |a: &Path, b: &Path| fs::canonicalize(a).ok().zip(fs::canonicalize(b).ok()).is_some_and(|(a, b)| a == b);
    if !same_mesh(&cfg.mesh, &partner.mesh) {
        return Err(CliError::config(partner_path, "view-field partner must use the same ground-truth mesh"));
    }
    let (registration, _) = frame_registration(&partner)?;
    let reader = OcfReader::open(&partner.frames)?;
    let footprint = recording_footprint(surface, frames_of(reader, &partner.frames), &registration, mode, exec)?;
    Ok(Some(footprint))
}

fn tile_mean(values: impl Iterator<Item = (u32, f64)>) -> Option<f64> {
    let (n, sum) = values.fold((0usize, 0.0), |(n, s), (_, v)| (n + 1, s + v));
    (n > 0).then(|| sum / n as f64)
}

pub fn run(globals: &Globals) -> Result<(), CliError> {
    let config_path = require_config(globals)?;
    let cfg = RunConfig::load(config_path)?;
    let out_dir = globals.out_dir(&cfg)?;
    let surface = ReferenceSurface::new(read_ply(&cfg.mesh)?);
    let (registration, _) = frame_registration(&cfg)?;
    let reader = OcfReader::open(&cfg.frames)?;
    let header = reader.header().clone();
    let factors = match &cfg.factors {
        Some(f) => f.clone(),
        None => factors_from_header(&header, &cfg.frames)?,
    };

    let exec = Exec::default();
    let mode = globals.distance_mode();
    let viewfield = if cfg.masks.viewfield && !globals.no_viewfield_mask {
        partner_footprint(&cfg, &surface, mode, exec)?
    } else {
        None
    };
    let viewfield_note = match (&viewfield, cfg.viewfield_partner.is_some()) {
        (Some(fp), _) => format!("view-field mask from partner ({} vertices)", fp.len()),
        (None, true) => "view-field mask disabled".to_string(),
        (None, false) => "no view-field partner".to_string(),
    };
    let options = EvaluateOptions {
        mode,
        content_mask: cfg.masks.content && !globals.no_content_mask,
        viewfield,
        tiles: cfg.tiles.into(),
        outlier_threshold: cfg.outlier_threshold,
        exec,
    };
    let eval = evaluate(&surface, frames_of(reader, &cfg.frames), &registration, &options)?;

    let existing = if cfg.long_table.exists() { read_long_table(&cfg.long_table)? } else { LongTable::default() };
    let incoming = pooled_records(&eval.pooled, &factors, cfg.replicate.as_deref());
    let table = existing.upsert(&incoming)?;

    let mut staged = Staged::new();
    staged.write(&out_dir.join(METRICS_FILE), |w| Ok(write_metrics_csv(&eval.fields, w)?))?;
    let range = cfg.heatmap_range_mm * 1e-3;
    for metric in MetricKind::ALL {
        let map = eval.fields.heatmap(metric, range);
        staged.write(&out_dir.join(format!("{}.ppm", metric.name())), |w| Ok(write_ppm(&map, w)?))?;
    }
    staged.write(&out_dir.join(TILES_FILE), |w| Ok(write_tiles_csv(&eval.pooled, w)?))?;
    staged.write(&out_dir.join(FOOTPRINT_FILE), |w| {
        writeln!(w, "vertex")?;
        for id in eval.footprint.sorted_ids() {
            writeln!(w, "{id}")?;
        }
        Ok(())
    })?;
    staged.write(&cfg.long_table, |w| Ok(write_long_table_to(&table, w)?))?;
    staged.commit()?;

    let (w, h) = (eval.raw_fields.width(), eval.raw_fields.height());
    println!(
        "evaluated {} frames of `{}` ({w}×{h}) as {} → {}",
        eval.frames,
        header.camera,
        factors.join("/"),
        out_dir.display()
    );
    println!(
        "  pixels: {} with metrics, {} kept after masking ({viewfield_note})",
        eval.raw_fields.valid_count(),
        eval.mask.count()
    );
    if eval.degenerate > 0 {
        println!("  degenerate nearest-vertex footprints: {} pixel-frames", eval.degenerate);
    }
    for metric in MetricKind::ALL {
        let grid = eval.pooled.get(metric);
        let mean = tile_mean(grid.values()).map_or("n/a".into(), mm);
        println!("  {:<17} {:>2}/{} tiles, mean {mean} mm", metric.name(), grid.present_count(), grid.tiles.len());
    }
    println!("  long table: {} ({} records)", cfg.long_table.display(), table.len());
    Ok(())
}
