use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use super::{group_cells, Direction, FoldStats, SelectionScores};
use crate::{Error, Result};

const KEY_COLUMNS: [&str; 4] = ["model", "dataset", "metric", "direction"];

/// Write a grid as `model,dataset,metric,direction,fold_1..fold_K`. Cells
/// without fold values are written in the summary form `...,mu,se` instead,
/// which requires every cell to be a summary.
pub fn write_grid<W: Write>(grid: &[FoldStats], out: W) -> Result<()> {
    let summary = grid.iter().all(|s| s.fold_values.is_empty());
    if !summary && grid.iter().any(|s| s.fold_values.is_empty()) {
        return Err(Error::Config("grid mixes raw fold values with summaries".into()));
    }
    let k = grid.iter().map(|s| s.fold_values.len()).max().unwrap_or(0);
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let mut header: Vec<String> = KEY_COLUMNS.iter().map(|s| s.to_string()).collect();
    if summary {
        header.extend(["mu".to_string(), "se".to_string()]);
    } else {
        header.extend((1..=k).map(|i| format!("fold_{i}")));
    }
    w.write_record(&header)?;
    for s in grid {
        let mut rec = vec![s.model.clone(), s.dataset.clone(), s.metric.clone(), s.direction.as_str().into()];
        if summary {
            rec.extend([s.mu.to_string(), s.se.to_string()]);
        } else {
            rec.extend(s.fold_values.iter().map(f64::to_string));
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<grid>", e))?;
    Ok(())
}

/// Read either grid form; raw fold values are summarised with
/// [`super::fold_stats`].
pub fn read_grid<R: Read>(input: R) -> Result<Vec<FoldStats>> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.len() < 5 || header[..4] != KEY_COLUMNS {
        return Err(Error::Parse {
            row: 0,
            detail: format!("grid header must start with {}", KEY_COLUMNS.join(",")),
        });
    }
    let summary = header[4..] == ["mu", "se"];
    let mut grid = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let bad = |detail: String| Error::Parse { row, detail };
        if rec.len() < 6 {
            return Err(bad(format!("expected at least 6 fields, got {}", rec.len())));
        }
        let direction: Direction = rec[3].parse().map_err(|e: Error| bad(e.to_string()))?;
        let nums = rec
            .iter()
            .skip(4)
            .filter(|f| !f.trim().is_empty())
            .map(|f| f.trim().parse::<f64>().map_err(|e| bad(format!("{f:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        let stats = if summary {
            if nums.len() != 2 {
                return Err(bad("summary rows need exactly mu and se".into()));
            }
            FoldStats::from_summary(&rec[0], &rec[1], &rec[2], direction, nums[0], nums[1])
        } else {
            super::fold_stats(&nums, &rec[0], &rec[1], &rec[2], direction)
        };
        grid.push(stats.map_err(|e| bad(e.to_string()))?);
    }
    Ok(grid)
}

pub fn save_grid(grid: &[FoldStats], path: &Path) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_grid(grid, std::io::BufWriter::new(f))
}

pub fn load_grid(path: &Path) -> Result<Vec<FoldStats>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_grid(std::io::BufReader::new(f))
}

/// Plain-text table: one block per metric, one row per (dataset, model),
/// followed by per-model totals.
pub fn render_table(grid: &[FoldStats], scores: &SelectionScores, complexity_order: &[String]) -> String {
    let cells = group_cells(grid);
    let mut metrics: Vec<&String> = Vec::new();
    let mut datasets: Vec<&String> = Vec::new();
    for s in grid {
        if !metrics.contains(&&s.metric) {
            metrics.push(&s.metric);
        }
        if !datasets.contains(&&s.dataset) {
            datasets.push(&s.dataset);
        }
    }
    let pos = |m: &str| complexity_order.iter().position(|x| x == m).unwrap_or(usize::MAX);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} {:<13} {:>10} {:>11} {:>23} {:>10} {:>5}",
        "dataset", "model", "mu", "se", "1se range", "p_ab", "psi"
    );
    for metric in metrics {
        let _ = writeln!(out, "-- {metric}");
        for d in &datasets {
            let Some(cell) = cells.get(&((*d).clone(), metric.clone())) else { continue };
            let mut cell = cell.clone();
            cell.sort_by_key(|s| pos(&s.model));
            for s in cell {
                let (lo, hi) = s.region();
                let pab = scores.p_ab_components[&s.model][*d][metric];
                let psi = scores.psi[&s.model][*d][metric];
                let _ = writeln!(
                    out,
                    "{:<8} {:<13} {:>10.4} {:>11.3e} [{:>9.4}, {:>9.4}] {:>9.2}% {:>5}",
                    d,
                    s.model,
                    s.mu,
                    s.se,
                    lo,
                    hi,
                    100.0 * pab,
                    psi
                );
            }
        }
    }
    let _ = writeln!(out, "-- totals");
    let mut models: Vec<&String> = scores.p_ab_total.keys().collect();
    models.sort_by_key(|m| pos(m));
    for m in models {
        let _ = writeln!(
            out,
            "{:<22} p_ab {:>9.2}%  p_1se {}",
            m,
            100.0 * scores.p_ab_total[m],
            scores.p_1se_total[m]
        );
    }
    out
}
