//! Result reporting: loss-curve grids, overlaid error histograms, FLD heat
//! grids, and the accuracy table — each as CSV (source of truth) plus a
//! derived static SVG. Emission is deterministic: identical results give
//! byte-identical files.

mod svg;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::anomaly::{histogram, ErrorDistribution, DEFAULT_HISTOGRAM_BINS};
use crate::error::{Error, Result};
use crate::sweep::{select_best, SelectCriterion, SweepRecord};
use crate::util::atomic_write;

use svg::{Frame, Svg, PALETTE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureKind {
    LossCurves,
    ErrorHistograms,
    FldGrid,
    AccuracyTable,
}

/// Panel layout for grid figures: rows are hidden-layer counts, columns are
/// feature dims, mirroring the sweep axes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FigureSpec {
    pub kind: FigureKind,
    pub hidden_layers: Vec<usize>,
    pub feature_dims: Vec<usize>,
    pub bins: usize,
}

impl FigureSpec {
    /// Layout derived from the grid points present in the records.
    pub fn from_records(kind: FigureKind, records: &[SweepRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Contract("no results to report".into()));
        }
        let ls: BTreeSet<usize> = records.iter().map(|r| r.point.hidden_layers).collect();
        let ps: BTreeSet<usize> = records.iter().map(|r| r.point.feature_dim).collect();
        Ok(FigureSpec {
            kind,
            hidden_layers: ls.into_iter().collect(),
            feature_dims: ps.into_iter().collect(),
            bins: DEFAULT_HISTOGRAM_BINS,
        })
    }

    /// The layout must cover exactly the grid points present.
    pub fn validate(&self, records: &[SweepRecord]) -> Result<()> {
        let ls: BTreeSet<usize> = records.iter().map(|r| r.point.hidden_layers).collect();
        let ps: BTreeSet<usize> = records.iter().map(|r| r.point.feature_dim).collect();
        let spec_ls: BTreeSet<usize> = self.hidden_layers.iter().copied().collect();
        let spec_ps: BTreeSet<usize> = self.feature_dims.iter().copied().collect();
        if ls != spec_ls || ps != spec_ps {
            return Err(Error::Contract(format!(
                "figure layout {:?}x{:?} does not cover result grid {:?}x{:?}",
                self.hidden_layers, self.feature_dims, ls, ps
            )));
        }
        Ok(())
    }
}

const PANEL_W: f64 = 220.0;
const PANEL_H: f64 = 150.0;
const MARGIN: f64 = 46.0;
const GAP: f64 = 16.0;

fn panel_frame(spec_rows: usize, row: usize, col: usize) -> (f64, f64) {
    let _ = spec_rows;
    let x = MARGIN + col as f64 * (PANEL_W + GAP);
    let y = MARGIN + row as f64 * (PANEL_H + GAP);
    (x, y)
}

fn figure_size(rows: usize, cols: usize) -> (f64, f64) {
    (
        MARGIN * 2.0 + cols as f64 * PANEL_W + (cols - 1) as f64 * GAP,
        MARGIN * 2.0 + rows as f64 * PANEL_H + (rows - 1) as f64 * GAP,
    )
}

/// First successful record at (L, p) with the lowest repeat index.
fn panel_record<'a>(records: &'a [SweepRecord], l: usize, p: usize) -> Option<&'a SweepRecord> {
    records
        .iter()
        .filter(|r| {
            r.point.hidden_layers == l && r.point.feature_dim == p && r.success().is_some()
        })
        .min_by_key(|r| r.point.repeat)
}

/// Per-grid-point loss CSVs plus one composite SVG grid of test/train loss
/// curves. Failed panels render a placeholder and are returned as warnings.
pub fn emit_loss_curves(
    records: &[SweepRecord],
    spec: &FigureSpec,
    out_dir: &Path,
) -> Result<(Vec<PathBuf>, Vec<String>)> {
    if records.is_empty() {
        return Err(Error::Contract("no results to report".into()));
    }
    spec.validate(records)?;
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut warnings = Vec::new();

    for record in records {
        let Some(success) = record.success() else {
            continue;
        };
        let name = format!(
            "loss_L{}_p{}_r{}.csv",
            record.point.hidden_layers, record.point.feature_dim, record.point.repeat
        );
        let path = out_dir.join(&name);
        crate::vae::write_loss_csv(&success.loss_history, &path)?;
        written.push(path);
    }

    let rows = spec.hidden_layers.len();
    let cols = spec.feature_dims.len();
    let (w, h) = figure_size(rows, cols);
    let mut svg = Svg::new(w, h);
    for (ri, &l) in spec.hidden_layers.iter().enumerate() {
        for (ci, &p) in spec.feature_dims.iter().enumerate() {
            let (px, py) = panel_frame(rows, ri, ci);
            svg.rect(px, py, PANEL_W, PANEL_H, "none", "#444444");
            svg.text(
                px + PANEL_W / 2.0,
                py - 4.0,
                9.0,
                "middle",
                &format!("L={l} p={p}"),
            );
            match panel_record(records, l, p) {
                Some(record) => {
                    let history = &record.success().expect("filtered").loss_history;
                    if history.epochs.is_empty() {
                        warnings.push(format!("empty loss history at L={l} p={p}"));
                        continue;
                    }
                    let y_max = history
                        .epochs
                        .iter()
                        .map(|e| e.train_loss.max(e.test_loss))
                        .fold(f64::MIN, f64::max);
                    let frame = Frame {
                        px,
                        py,
                        pw: PANEL_W,
                        ph: PANEL_H,
                        x_min: 0.0,
                        x_max: (history.epochs.len() - 1).max(1) as f64,
                        y_min: 0.0,
                        y_max: y_max.max(1e-12),
                    };
                    let train: Vec<(f64, f64)> = history
                        .epochs
                        .iter()
                        .map(|e| frame.map(e.epoch as f64, e.train_loss))
                        .collect();
                    let test: Vec<(f64, f64)> = history
                        .epochs
                        .iter()
                        .map(|e| frame.map(e.epoch as f64, e.test_loss))
                        .collect();
                    svg.polyline(&train, PALETTE[0], 1.0);
                    svg.polyline(&test, PALETTE[1], 1.0);
                    svg.text(
                        px + 3.0,
                        py + PANEL_H - 4.0,
                        7.0,
                        "start",
                        &format!("epochs={} min={:.4}", history.epochs.len(), history.best_test_loss()),
                    );
                }
                None => {
                    warnings.push(format!("no successful run at L={l} p={p}"));
                    svg.text(
                        px + PANEL_W / 2.0,
                        py + PANEL_H / 2.0,
                        9.0,
                        "middle",
                        "no data",
                    );
                }
            }
        }
    }
    svg.text(MARGIN, h - 10.0, 9.0, "start", "train");
    svg.line(MARGIN + 30.0, h - 13.0, MARGIN + 50.0, h - 13.0, PALETTE[0], 1.5);
    svg.text(MARGIN + 60.0, h - 10.0, 9.0, "start", "test");
    svg.line(MARGIN + 85.0, h - 13.0, MARGIN + 105.0, h - 13.0, PALETTE[1], 1.5);
    let path = out_dir.join("loss_curves.svg");
    atomic_write(&path, svg.finish().as_bytes())?;
    written.push(path);
    Ok((written, warnings))
}

/// Per-panel histogram CSVs (dataset, bin_left, count, density) over shared
/// 60-bin edges, plus one composite SVG of overlaid densities.
pub fn emit_error_histograms(
    records: &[SweepRecord],
    spec: &FigureSpec,
    out_dir: &Path,
) -> Result<(Vec<PathBuf>, Vec<String>)> {
    if records.is_empty() {
        return Err(Error::Contract("no results to report".into()));
    }
    spec.validate(records)?;
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let mut warnings = Vec::new();

    let rows = spec.hidden_layers.len();
    let cols = spec.feature_dims.len();
    let (w, h) = figure_size(rows, cols);
    let mut svg = Svg::new(w, h);
    let mut legend: Vec<String> = Vec::new();

    for (ri, &l) in spec.hidden_layers.iter().enumerate() {
        for (ci, &p) in spec.feature_dims.iter().enumerate() {
            let (px, py) = panel_frame(rows, ri, ci);
            svg.rect(px, py, PANEL_W, PANEL_H, "none", "#444444");
            svg.text(
                px + PANEL_W / 2.0,
                py - 4.0,
                9.0,
                "middle",
                &format!("L={l} p={p}"),
            );
            let Some(record) = panel_record(records, l, p) else {
                warnings.push(format!("no successful run at L={l} p={p}"));
                svg.text(px + PANEL_W / 2.0, py + PANEL_H / 2.0, 9.0, "middle", "no data");
                continue;
            };
            let success = record.success().expect("filtered");
            let dists: Vec<&ErrorDistribution> = success.distributions.iter().collect();
            let hist = histogram(&dists, spec.bins)?;

            // CSV: one file per panel.
            let mut csv = String::from("dataset,bin_left,count,density\n");
            for (di, dist) in dists.iter().enumerate() {
                for (bi, left) in hist.bin_left.iter().enumerate() {
                    csv.push_str(&format!(
                        "{},{},{},{}\n",
                        dist.dataset_id, left, hist.counts[di][bi], hist.densities[di][bi]
                    ));
                }
            }
            let csv_path = out_dir.join(format!("hist_L{l}_p{p}.csv"));
            atomic_write(&csv_path, csv.as_bytes())?;
            written.push(csv_path);

            // SVG: density step lines over shared edges.
            let d_max = hist
                .densities
                .iter()
                .flatten()
                .fold(0.0f64, |a, &b| a.max(b));
            let x_min = hist.bin_left[0];
            let x_max = hist.bin_left[spec.bins - 1] + hist.bin_width;
            let frame = Frame {
                px,
                py,
                pw: PANEL_W,
                ph: PANEL_H,
                x_min,
                x_max,
                y_min: 0.0,
                y_max: d_max.max(1e-12),
            };
            for (di, dist) in dists.iter().enumerate() {
                let mut pts = Vec::with_capacity(2 * spec.bins);
                for (bi, &left) in hist.bin_left.iter().enumerate() {
                    let d = hist.densities[di][bi];
                    pts.push(frame.map(left, d));
                    pts.push(frame.map(left + hist.bin_width, d));
                }
                svg.polyline(&pts, PALETTE[di % PALETTE.len()], 1.0);
                if !legend.contains(&dist.dataset_id) {
                    legend.push(dist.dataset_id.clone());
                }
            }
        }
    }
    for (i, id) in legend.iter().enumerate() {
        let x = MARGIN + i as f64 * 110.0;
        svg.line(x, h - 13.0, x + 18.0, h - 13.0, PALETTE[i % PALETTE.len()], 1.5);
        svg.text(x + 24.0, h - 10.0, 9.0, "start", id);
    }
    let path = out_dir.join("error_histograms.svg");
    atomic_write(&path, svg.finish().as_bytes())?;
    written.push(path);
    Ok((written, warnings))
}

/// FLD grid: per-repeat detail CSV, per-cell (mean over repeats) CSV, and a
/// min/max heat-grid SVG.
pub fn emit_fld_grid(records: &[SweepRecord], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::Contract("no results to report".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let spec = FigureSpec::from_records(FigureKind::FldGrid, records)?;
    let mut written = Vec::new();

    let mut detail = String::from(
        "hidden_layers,feature_dim,repeat,min_fld,min_dataset,max_fld,max_dataset\n",
    );
    for record in records {
        if let Some(s) = record.success() {
            detail.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                record.point.hidden_layers,
                record.point.feature_dim,
                record.point.repeat,
                s.min_max.min.s,
                s.min_max.min.pair.1,
                s.min_max.max.s,
                s.min_max.max.pair.1
            ));
        }
    }
    let detail_path = out_dir.join("fld_detail.csv");
    atomic_write(&detail_path, detail.as_bytes())?;
    written.push(detail_path);

    // Cell = mean over repeats.
    let mut cells = String::from("hidden_layers,feature_dim,min_fld,max_fld\n");
    let mut cell_values: Vec<(usize, usize, f64, f64)> = Vec::new();
    for &l in &spec.hidden_layers {
        for &p in &spec.feature_dims {
            let values: Vec<(&f64, &f64)> = records
                .iter()
                .filter(|r| r.point.hidden_layers == l && r.point.feature_dim == p)
                .filter_map(|r| r.success())
                .map(|s| (&s.min_max.min.s, &s.min_max.max.s))
                .collect();
            if values.is_empty() {
                continue;
            }
            let n = values.len() as f64;
            let min_mean = values.iter().map(|(a, _)| **a).sum::<f64>() / n;
            let max_mean = values.iter().map(|(_, b)| **b).sum::<f64>() / n;
            cells.push_str(&format!("{l},{p},{min_mean},{max_mean}\n"));
            cell_values.push((l, p, min_mean, max_mean));
        }
    }
    let cells_path = out_dir.join("fld_grid.csv");
    atomic_write(&cells_path, cells.as_bytes())?;
    written.push(cells_path);

    // Heat grids: left = min FLD, right = max FLD.
    let rows = spec.hidden_layers.len();
    let cols = spec.feature_dims.len();
    let cell = 52.0;
    let grid_w = cols as f64 * cell;
    let grid_h = rows as f64 * cell;
    let w = MARGIN * 2.0 + grid_w * 2.0 + 60.0;
    let h = MARGIN * 2.0 + grid_h;
    let mut svg = Svg::new(w, h);
    let hi = cell_values
        .iter()
        .flat_map(|(_, _, a, b)| [*a, *b])
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    for (gi, title) in ["minimum FLD", "maximum FLD"].iter().enumerate() {
        let ox = MARGIN + gi as f64 * (grid_w + 60.0);
        svg.text(ox + grid_w / 2.0, MARGIN - 8.0, 10.0, "middle", title);
        for (ri, &l) in spec.hidden_layers.iter().enumerate() {
            for (ci, &p) in spec.feature_dims.iter().enumerate() {
                let value = cell_values
                    .iter()
                    .find(|(cl, cp, _, _)| *cl == l && *cp == p)
                    .map(|(_, _, mn, mx)| if gi == 0 { *mn } else { *mx });
                let x = ox + ci as f64 * cell;
                let y = MARGIN + ri as f64 * cell;
                match value {
                    Some(v) => {
                        let t = (v / hi).clamp(0.0, 1.0);
                        let shade = (255.0 - t * 200.0) as u8;
                        let fill = format!("#{shade:02x}{shade:02x}ff");
                        svg.rect(x, y, cell, cell, &fill, "#333333");
                        svg.text(
                            x + cell / 2.0,
                            y + cell / 2.0 + 3.0,
                            8.0,
                            "middle",
                            &format!("{v:.3}"),
                        );
                    }
                    None => {
                        svg.rect(x, y, cell, cell, "#eeeeee", "#333333");
                    }
                }
                if gi == 0 && ci == 0 {
                    svg.text(x - 6.0, y + cell / 2.0 + 3.0, 8.0, "end", &format!("L={l}"));
                }
                if ri == rows - 1 {
                    svg.text(
                        x + cell / 2.0,
                        y + cell + 12.0,
                        8.0,
                        "middle",
                        &format!("{p}"),
                    );
                }
            }
        }
    }
    let svg_path = out_dir.join("fld_grid.svg");
    atomic_write(&svg_path, svg.finish().as_bytes())?;
    written.push(svg_path);
    Ok(written)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub model: String,
    pub accuracy: f64,
    pub type1_error: f64,
    pub type2_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub hidden_layers: usize,
    pub feature_dim: usize,
    pub rows: Vec<AccuracyRow>,
    pub average: AccuracyRow,
}

/// Average row over per-model rows.
pub fn average_row(rows: &[AccuracyRow]) -> AccuracyRow {
    let n = rows.len() as f64;
    AccuracyRow {
        model: "Average".into(),
        accuracy: rows.iter().map(|r| r.accuracy).sum::<f64>() / n,
        type1_error: rows.iter().map(|r| r.type1_error).sum::<f64>() / n,
        type2_error: rows.iter().map(|r| r.type2_error).sum::<f64>() / n,
    }
}

/// Accuracy table for the best grid point (max min-FLD): one row per seed
/// replicate plus the average row.
pub fn accuracy_table(records: &[SweepRecord]) -> Result<AccuracyTable> {
    let best = select_best(records, SelectCriterion::MaxMinFld)?;
    let (l, p) = (best.point.hidden_layers, best.point.feature_dim);
    let mut family: Vec<&SweepRecord> = records
        .iter()
        .filter(|r| {
            r.point.hidden_layers == l && r.point.feature_dim == p && r.success().is_some()
        })
        .collect();
    family.sort_by_key(|r| r.point.repeat);
    let rows: Vec<AccuracyRow> = family
        .iter()
        .map(|r| {
            let b = &r.success().expect("filtered").balanced.result;
            AccuracyRow {
                model: format!("Model {}", r.point.repeat + 1),
                accuracy: b.accuracy,
                type1_error: b.type1_rate,
                type2_error: b.type2_rate,
            }
        })
        .collect();
    if rows.is_empty() {
        return Err(Error::Contract("no successful rows for accuracy table".into()));
    }
    let average = average_row(&rows);
    Ok(AccuracyTable {
        hidden_layers: l,
        feature_dim: p,
        rows,
        average,
    })
}

pub fn emit_accuracy_table(records: &[SweepRecord], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::Contract("no results to report".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let table = accuracy_table(records)?;
    let mut csv = format!(
        "# best grid point: hidden_layers={}, feature_dim={}\nmodel,accuracy,type1_error,type2_error\n",
        table.hidden_layers, table.feature_dim
    );
    for row in table.rows.iter().chain(std::iter::once(&table.average)) {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            row.model, row.accuracy, row.type1_error, row.type2_error
        ));
    }
    let path = out_dir.join("accuracy_table.csv");
    atomic_write(&path, csv.as_bytes())?;
    Ok(vec![path])
}
