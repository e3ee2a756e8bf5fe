//! Report assembly: collects the pipeline's tables and renders static
//! SVG figures (plane scatter, logistic curves, entropy densities,
//! transition heatmaps, career trends, occupancy matrices, posterior
//! ridgelines).

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use crate::cli::RunConfig;
use crate::manifest::ManifestBuilder;
use crate::numeric::kde;
use crate::plane::SECTORS;
use crate::svg::{diverging_color, sequential_color, Scale, Svg};
use crate::{Error, Result};

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 300.0;
const MARGIN: f64 = 40.0;

fn read_csv_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::MalformedFile {
        path: path.into(),
        reason: e.to_string(),
    })?;
    let mut out = Vec::new();
    for row in reader.deserialize::<T>() {
        out.push(row.map_err(|e| Error::MalformedFile { path: path.into(), reason: e.to_string() })?);
    }
    Ok(out)
}

#[derive(Deserialize)]
struct SectorRow {
    researcher_id: String,
    #[allow(dead_code)]
    discipline: String,
    #[allow(dead_code)]
    year: i32,
    prestige_z: f64,
    productivity_z: f64,
    #[allow(dead_code)]
    sector: String,
}

fn fig_plane(sectors_path: &Path, tau: f64, out: &Path) -> Result<()> {
    let rows: Vec<SectorRow> = read_csv_rows(sectors_path)?;
    let mut svg = Svg::new(PANEL_W, PANEL_H);
    let lim = 8.0;
    let sx = Scale::new(-lim, lim, MARGIN, PANEL_W - 10.0);
    let sy = Scale::new(-lim, lim, PANEL_H - MARGIN, 10.0);

    // Axes at zero and outlier boundaries at tau.
    svg.line(sx.map(-lim), sy.map(0.0), sx.map(lim), sy.map(0.0), "#999999", 0.8);
    svg.line(sx.map(0.0), sy.map(-lim), sx.map(0.0), sy.map(lim), "#999999", 0.8);
    svg.line(sx.map(-lim), sy.map(tau), sx.map(lim), sy.map(tau), "#d08060", 0.8);
    svg.line(sx.map(tau), sy.map(-lim), sx.map(tau), sy.map(lim), "#d08060", 0.8);

    let step = (rows.len() / 20_000).max(1);
    for row in rows.iter().step_by(step) {
        let x = row.productivity_z.clamp(-lim, lim);
        let y = row.prestige_z.clamp(-lim, lim);
        svg.circle(sx.map(x), sy.map(y), 1.2, "#33557a", 0.35);
        let _ = &row.researcher_id;
    }
    svg.text(PANEL_W / 2.0 - 60.0, PANEL_H - 8.0, 10.0, "productivity z-score (P)");
    svg.text(6.0, 14.0, 10.0, "journal prestige z-score (I)");
    std::fs::write(out, svg.finish()).map_err(|e| Error::io(out, e))
}

fn fig_logistic(fits_path: &Path, out: &Path) -> Result<()> {
    let bytes = std::fs::read(fits_path).map_err(|e| Error::io(fits_path, e))?;
    let value: serde_json::Value = serde_json::from_slice(&bytes)
        .map_err(|e| Error::MalformedFile { path: fits_path.into(), reason: e.to_string() })?;

    let mut svg = Svg::new(PANEL_W, PANEL_H);
    let sx = Scale::new(0.0, 20.0, MARGIN, PANEL_W - 10.0);
    let sy = Scale::new(0.0, 1.0, PANEL_H - MARGIN, 10.0);
    svg.line(sx.map(0.0), sy.map(0.0), sx.map(20.0), sy.map(0.0), "#999999", 0.8);
    svg.line(sx.map(0.0), sy.map(0.0), sx.map(0.0), sy.map(1.0), "#999999", 0.8);

    let palette = ["#33557a", "#a04040", "#3a7a50", "#8060a0", "#b08030"];
    let mut color_idx = 0usize;
    let draw_fit = |fit: &serde_json::Value, color: &str, svg: &mut Svg| {
        let (Some(b0), Some(b1)) = (fit["intercept"].as_f64(), fit["slope"].as_f64()) else {
            return;
        };
        let points: Vec<(f64, f64)> = (0..=80)
            .map(|k| {
                let x = 20.0 * k as f64 / 80.0;
                (sx.map(x), sy.map(crate::stats::predict_probability(b0, b1, x)))
            })
            .collect();
        svg.polyline(&points, color, 1.4);
    };
    if let Some(per_disc) = value["hyperprolific_years_per_discipline"].as_object() {
        for (_, fit) in per_disc {
            draw_fit(fit, palette[color_idx % palette.len()], &mut svg);
            color_idx += 1;
        }
    }
    draw_fit(&value["hyperprolific_years_pooled"], "#444444", &mut svg);
    svg.text(PANEL_W / 2.0 - 90.0, PANEL_H - 8.0, 10.0, "hyperprolific career years");
    svg.text(6.0, 14.0, 10.0, "probability of being a perfectionist");
    std::fs::write(out, svg.finish()).map_err(|e| Error::io(out, e))
}

#[derive(Deserialize)]
struct EntropyRow {
    #[allow(dead_code)]
    researcher_id: String,
    #[allow(dead_code)]
    discipline: String,
    variant: String,
    #[allow(dead_code)]
    n_years_in_subset: usize,
    n_sectors_occupied: usize,
    entropy: f64,
}

fn fig_entropy(entropy_path: &Path, out: &Path) -> Result<()> {
    let rows: Vec<EntropyRow> = read_csv_rows(entropy_path)?;
    let mut grouped: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for row in &rows {
        // Mirror the published restriction: outlier researchers must
        // occupy more than one sector of the subset.
        if row.variant.starts_with("outlier") && row.n_sectors_occupied < 2 {
            continue;
        }
        grouped.entry(row.variant.clone()).or_default().push(row.entropy);
    }
    let mut svg = Svg::new(PANEL_W, PANEL_H);
    let sx = Scale::new(-0.05, 1.05, MARGIN, PANEL_W - 10.0);
    svg.line(sx.map(0.0), PANEL_H - MARGIN, sx.map(1.0), PANEL_H - MARGIN, "#999999", 0.8);
    let colors =
        BTreeMap::from([("outlier_all", "#8060a0"), ("outlier_no_both", "#3a7a50"), ("non_outlier", "#777777")]);
    let mut y_label = 16.0;
    for (variant, values) in &grouped {
        if values.len() < 3 {
            continue;
        }
        let (grid, density) = kde(values, 161);
        let dmax = density.iter().cloned().fold(f64::MIN, f64::max).max(1e-9);
        let sy = Scale::new(0.0, dmax * 1.1, PANEL_H - MARGIN, 14.0);
        let color = colors.get(variant.as_str()).copied().unwrap_or("#333333");
        let points: Vec<(f64, f64)> =
            grid.iter().zip(&density).map(|(x, d)| (sx.map(*x), sy.map(*d))).collect();
        svg.polyline(&points, color, 1.4);
        svg.text(PANEL_W - 150.0, y_label, 9.0, &format!("{variant} (n={})", values.len()));
        y_label += 12.0;
    }
    svg.text(PANEL_W / 2.0 - 60.0, PANEL_H - 8.0, 10.0, "normalized entropy");
    std::fs::write(out, svg.finish()).map_err(|e| Error::io(out, e))
}

fn read_matrix(path: &Path) -> Result<[[Option<f64>; 7]; 7]> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut matrix = [[None; 7]; 7];
    for (a, line) in text.lines().skip(1).enumerate().take(7) {
        for (b, cell) in line.split(',').skip(1).enumerate().take(7) {
            if !cell.is_empty() {
                matrix[a][b] = cell.parse::<f64>().ok();
            }
        }
    }
    Ok(matrix)
}

fn fig_transition_heatmap(excess_path: &Path, title: &str, out: &Path) -> Result<()> {
    let matrix = read_matrix(excess_path)?;
    let cell = 34.0;
    let x0 = 70.0;
    let y0 = 40.0;
    let mut svg = Svg::new(x0 + 7.0 * cell + 20.0, y0 + 7.0 * cell + 30.0);
    svg.text(10.0, 18.0, 11.0, title);
    let vmax = matrix
        .iter()
        .flatten()
        .filter_map(|v| *v)
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1e-9);
    for (a, row) in matrix.iter().enumerate() {
        svg.text(8.0, y0 + a as f64 * cell + cell * 0.65, 9.0, SECTORS[a].label());
        svg.text(x0 + a as f64 * cell + 4.0, y0 - 6.0, 9.0, SECTORS[a].label());
        for (b, value) in row.iter().enumerate() {
            let fill = match value {
                Some(v) => diverging_color(v / vmax),
                None => "#dddddd".to_string(),
            };
            svg.rect(x0 + b as f64 * cell, y0 + a as f64 * cell, cell - 1.0, cell - 1.0, &fill);
            if let Some(v) = value {
                svg.text(
                    x0 + b as f64 * cell + 2.0,
                    y0 + a as f64 * cell + cell * 0.65,
                    7.0,
                    &format!("{v:.2}"),
                );
            }
        }
    }
    std::fs::write(out, svg.finish()).map_err(|e| Error::io(out, e))
}

#[derive(Deserialize)]
struct TrendRow {
    discipline: String,
    age: i32,
    mean_productivity_z: f64,
    productivity_lo: f64,
    productivity_hi: f64,
    mean_prestige_z: f64,
    prestige_lo: f64,
    prestige_hi: f64,
    #[allow(dead_code)]
    n: usize,
}

fn fig_trends(trends_path: &Path, out: &Path) -> Result<()> {
    let rows: Vec<TrendRow> = read_csv_rows(trends_path)?;
    let mut by_disc: BTreeMap<String, Vec<&TrendRow>> = BTreeMap::new();
    for row in &rows {
        by_disc.entry(row.discipline.clone()).or_default().push(row);
    }
    let n = by_disc.len().max(1);
    let mut svg = Svg::new(PANEL_W, 20.0 + n as f64 * 180.0);
    for (panel, (disc, series)) in by_disc.iter().enumerate() {
        let top = 20.0 + panel as f64 * 180.0;
        let bottom = top + 150.0;
        let ages: Vec<i32> = series.iter().map(|r| r.age).collect();
        let (a0, a1) = (*ages.iter().min().unwrap_or(&1), *ages.iter().max().unwrap_or(&2));
        let lo = series
            .iter()
            .flat_map(|r| [r.productivity_lo, r.prestige_lo])
            .fold(f64::INFINITY, f64::min);
        let hi = series
            .iter()
            .flat_map(|r| [r.productivity_hi, r.prestige_hi])
            .fold(f64::NEG_INFINITY, f64::max);
        let sx = Scale::new(a0 as f64, a1 as f64, MARGIN, PANEL_W - 10.0);
        let sy = Scale::new(lo - 0.1, hi + 0.1, bottom, top + 12.0);
        svg.text(MARGIN, top + 10.0, 10.0, disc);
        svg.line(sx.map(a0 as f64), sy.map(0.0), sx.map(a1 as f64), sy.map(0.0), "#cccccc", 0.6);

        for (mean_of, lo_of, hi_of, color) in [
            (
                &(|r: &TrendRow| r.mean_productivity_z) as &dyn Fn(&TrendRow) -> f64,
                &(|r: &TrendRow| r.productivity_lo) as &dyn Fn(&TrendRow) -> f64,
                &(|r: &TrendRow| r.productivity_hi) as &dyn Fn(&TrendRow) -> f64,
                "#666666",
            ),
            (
                &(|r: &TrendRow| r.mean_prestige_z),
                &(|r: &TrendRow| r.prestige_lo),
                &(|r: &TrendRow| r.prestige_hi),
                "#a04040",
            ),
        ] {
            let upper: Vec<(f64, f64)> =
                series.iter().map(|r| (sx.map(r.age as f64), sy.map(hi_of(r)))).collect();
            let lower: Vec<(f64, f64)> =
                series.iter().map(|r| (sx.map(r.age as f64), sy.map(lo_of(r)))).collect();
            svg.band(&upper, &lower, color, 0.18);
            let line: Vec<(f64, f64)> =
                series.iter().map(|r| (sx.map(r.age as f64), sy.map(mean_of(r)))).collect();
            svg.polyline(&line, color, 1.4);
        }
    }
    svg.text(PANEL_W / 2.0 - 40.0, 20.0 + n as f64 * 180.0 - 6.0, 10.0, "career age");
    std::fs::write(out, svg.finish()).map_err(|e| Error::io(out, e))
}

#[derive(Deserialize)]
struct OccupancyRow {
    discipline: String,
    interval_index: u32,
    age_lo: i32,
    age_hi: i32,
    sector: String,
    fraction: f64,
    #[allow(dead_code)]
    n_researchers: usize,
}

fn fig_occupancy(occupancy_path: &Path, out: &Path) -> Result<()> {
    let rows: Vec<OccupancyRow> = read_csv_rows(occupancy_path)?;
    let mut by_disc: BTreeMap<String, Vec<&OccupancyRow>> = BTreeMap::new();
    for row in &rows {
        by_disc.entry(row.discipline.clone()).or_default().push(row);
    }
    let cell = 30.0;
    let panel_h = 8.0 * cell + 50.0;
    let n = by_disc.len().max(1);
    let mut svg = Svg::new(520.0, 10.0 + n as f64 * panel_h);
    for (panel, (disc, rows)) in by_disc.iter().enumerate() {
        let top = 10.0 + panel as f64 * panel_h;
        svg.text(10.0, top + 12.0, 11.0, disc);
        let x0 = 70.0;
        let y0 = top + 20.0;
        let columns: Vec<u32> = {
            let mut c: Vec<u32> = rows.iter().map(|r| r.interval_index).collect();
            c.sort_unstable();
            c.dedup();
            c
        };
        for (si, sector) in SECTORS.iter().enumerate() {
            svg.text(8.0, y0 + si as f64 * cell + cell * 0.65, 9.0, sector.label());
        }
        for (ci, col) in columns.iter().enumerate() {
            let sample = rows.iter().find(|r| r.interval_index == *col).unwrap();
            svg.text(
                x0 + ci as f64 * (cell + 14.0),
                y0 + 7.0 * cell + 14.0,
                8.0,
                &format!("{}-{}", sample.age_lo, sample.age_hi),
            );
            for (si, sector) in SECTORS.iter().enumerate() {
                let fraction = rows
                    .iter()
                    .find(|r| r.interval_index == *col && r.sector == sector.label())
                    .map(|r| r.fraction)
                    .unwrap_or(0.0);
                svg.rect(
                    x0 + ci as f64 * (cell + 14.0),
                    y0 + si as f64 * cell,
                    cell - 1.0,
                    cell - 1.0,
                    &sequential_color(fraction),
                );
            }
        }
    }
    std::fs::write(out, svg.finish()).map_err(|e| Error::io(out, e))
}

#[derive(Deserialize)]
struct DensityRow {
    discipline: String,
    model: String,
    parameter: String,
    x: f64,
    density: f64,
}

fn fig_posterior(density_path: &Path, parameter: &str, out: &Path) -> Result<()> {
    let rows: Vec<DensityRow> = read_csv_rows(density_path)?;
    let mut curves: BTreeMap<(String, String), Vec<(f64, f64)>> = BTreeMap::new();
    for row in &rows {
        if row.parameter == parameter {
            curves
                .entry((row.discipline.clone(), row.model.clone()))
                .or_default()
                .push((row.x, row.density));
        }
    }
    let disciplines: Vec<String> = {
        let mut d: Vec<String> = curves.keys().map(|(d, _)| d.clone()).collect();
        d.sort();
        d.dedup();
        d
    };
    let row_h = 90.0;
    let mut svg = Svg::new(PANEL_W, 30.0 + disciplines.len().max(1) as f64 * row_h);
    let x_lo = rows
        .iter()
        .filter(|r| r.parameter == parameter)
        .map(|r| r.x)
        .fold(f64::INFINITY, f64::min);
    let x_hi = rows
        .iter()
        .filter(|r| r.parameter == parameter)
        .map(|r| r.x)
        .fold(f64::NEG_INFINITY, f64::max);
    if !x_lo.is_finite() || !x_hi.is_finite() {
        // Nothing to plot (e.g. the age parameter without the age model).
        svg.text(20.0, 30.0, 10.0, &format!("no {parameter} densities"));
        return std::fs::write(out, svg.finish()).map_err(|e| Error::io(out, e));
    }
    let sx = Scale::new(x_lo, x_hi, MARGIN, PANEL_W - 12.0);
    for (ridge, disc) in disciplines.iter().enumerate() {
        let base = 30.0 + (ridge as f64 + 1.0) * row_h;
        svg.text(6.0, base - row_h * 0.5, 9.0, disc);
        svg.line(sx.map(x_lo), base, sx.map(x_hi), base, "#cccccc", 0.6);
        if x_lo < 0.0 && x_hi > 0.0 {
            svg.line(sx.map(0.0), base - row_h + 12.0, sx.map(0.0), base, "#bbbbbb", 0.6);
        }
        for (model, color) in [("without_age", "#33557a"), ("with_age", "#888888")] {
            if let Some(points) = curves.get(&(disc.clone(), model.to_string())) {
                let dmax =
                    points.iter().map(|(_, d)| *d).fold(f64::MIN, f64::max).max(1e-12);
                let line: Vec<(f64, f64)> = points
                    .iter()
                    .map(|(x, d)| (sx.map(*x), base - d / dmax * (row_h - 16.0)))
                    .collect();
                svg.polyline(&line, color, 1.3);
            }
        }
    }
    svg.text(PANEL_W / 2.0 - 20.0, 30.0 + disciplines.len().max(1) as f64 * row_h - 4.0, 10.0, parameter);
    std::fs::write(out, svg.finish()).map_err(|e| Error::io(out, e))
}

/// Assemble `<out>/report`: figures plus copies of the main tables.
pub fn write_report(cfg: &RunConfig) -> Result<()> {
    let dir = cfg.out.join("report");
    let tables = dir.join("tables");
    std::fs::create_dir_all(&tables).map_err(|e| Error::io(&tables, e))?;
    let mut manifest = ManifestBuilder::new(
        &cfg.out,
        "report",
        cfg.seed,
        serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null),
    );

    // Tables copied from upstream stages (each names its producer).
    let wanted: [(&str, &str, &str); 10] = [
        ("ingest", "inflation.csv", "ingest"),
        ("normalize", "career_norm.csv", "normalize"),
        ("classify", "sectors.csv", "classify"),
        ("classify", "categories.csv", "classify"),
        ("classify", "extreme_hyperprolific.csv", "classify"),
        ("transitions", "excess_non_outlier.csv", "transitions"),
        ("entropy", "entropy.csv", "entropy"),
        ("career", "trends.csv", "career"),
        ("career", "occupancy.csv", "career"),
        ("bayes", "density.csv", "bayes"),
    ];
    for (stage, file, producer) in wanted {
        let src = cfg.out.join(stage).join(file);
        if !src.exists() {
            return Err(Error::MissingArtifact { path: src, producer: producer.into() });
        }
        let dst = tables.join(format!("{stage}_{file}"));
        std::fs::copy(&src, &dst).map_err(|e| Error::io(&dst, e))?;
        manifest.input(&src)?;
        manifest.output(&dst)?;
    }
    // Optional outlier excess (absent when the group is empty).
    let outlier_excess = cfg.out.join("transitions").join("excess_outlier.csv");

    // Figures.
    let figures = [
        dir.join("fig_plane.svg"),
        dir.join("fig_logistic.svg"),
        dir.join("fig_entropy.svg"),
        dir.join("fig_transitions_non_outlier.svg"),
        dir.join("fig_trends.svg"),
        dir.join("fig_occupancy.svg"),
        dir.join("fig_posterior_mu_p.svg"),
        dir.join("fig_posterior_mu_a.svg"),
    ];
    fig_plane(&cfg.out.join("classify").join("sectors.csv"), cfg.tau, &figures[0])?;
    fig_logistic(&cfg.out.join("logistic").join("logistic_fits.json"), &figures[1])?;
    fig_entropy(&cfg.out.join("entropy").join("entropy.csv"), &figures[2])?;
    fig_transition_heatmap(
        &cfg.out.join("transitions").join("excess_non_outlier.csv"),
        "transition excess, non-outlier researchers",
        &figures[3],
    )?;
    if outlier_excess.exists() {
        fig_transition_heatmap(
            &outlier_excess,
            "transition excess, outlier researchers",
            &dir.join("fig_transitions_outlier.svg"),
        )?;
        manifest.output(&dir.join("fig_transitions_outlier.svg"))?;
    }
    fig_trends(&cfg.out.join("career").join("trends.csv"), &figures[4])?;
    fig_occupancy(&cfg.out.join("career").join("occupancy.csv"), &figures[5])?;
    fig_posterior(&cfg.out.join("bayes").join("density.csv"), "mu_p", &figures[6])?;
    fig_posterior(&cfg.out.join("bayes").join("density.csv"), "mu_a", &figures[7])?;

    for figure in &figures {
        manifest.output(figure)?;
    }
    manifest.write(&dir)?;
    println!("report: figures and tables in {}", dir.display());
    Ok(())
}
