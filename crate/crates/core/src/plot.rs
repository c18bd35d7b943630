//! SVG line charts from metrics CSVs.
//!
//! One chart per metric (reward, emission, cost): x is the training round,
//! y is the building-averaged, seed-averaged value, one colored series per
//! variant with a min/max band across seeds. SVG elements are written
//! directly, so output is deterministic and dependency-free.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::harness::{write_atomic, HarnessError, METRICS_HEADER};

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("{path}: line {line}: {reason}")]
    MalformedRow { path: String, line: usize, reason: String },
    #[error("{path}: missing or wrong header (expected `{METRICS_HEADER}`)")]
    BadHeader { path: String },
    #[error("no data rows to plot")]
    NoData,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Write(#[from] HarnessError),
}

/// One parsed metrics row.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedRow {
    pub variant: String,
    pub seed: u64,
    pub round: u32,
    pub building: usize,
    pub reward: f64,
    pub emission: f64,
    pub cost: f64,
}

/// The plottable metrics and their CSV columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Reward,
    Emission,
    Cost,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Reward, Metric::Emission, Metric::Cost];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Reward => "reward",
            Metric::Emission => "emission",
            Metric::Cost => "cost",
        }
    }

    fn of(self, row: &ParsedRow) -> f64 {
        match self {
            Metric::Reward => row.reward,
            Metric::Emission => row.emission,
            Metric::Cost => row.cost,
        }
    }
}

/// Parses one metrics CSV. `path` is used only for error messages.
pub fn parse_metrics_csv(text: &str, path: &str) -> Result<Vec<ParsedRow>, PlotError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == METRICS_HEADER => {}
        _ => return Err(PlotError::BadHeader { path: path.to_string() }),
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(PlotError::MalformedRow {
                path: path.to_string(),
                line: line_no,
                reason: format!("expected 7 fields, found {}", fields.len()),
            });
        }
        let bad = |what: &str| PlotError::MalformedRow {
            path: path.to_string(),
            line: line_no,
            reason: format!("unparsable {what}"),
        };
        rows.push(ParsedRow {
            variant: fields[0].to_string(),
            seed: fields[1].parse().map_err(|_| bad("seed"))?,
            round: fields[2].parse().map_err(|_| bad("round"))?,
            building: fields[3].parse().map_err(|_| bad("building"))?,
            reward: fields[4].parse().map_err(|_| bad("reward"))?,
            emission: fields[5].parse().map_err(|_| bad("emission"))?,
            cost: fields[6].parse().map_err(|_| bad("cost"))?,
        });
    }
    Ok(rows)
}

/// Canonical legend order and colors: Upperbound blue, FL green,
/// Ind. Agent red, FL Personalization orange.
const SERIES_ORDER: [(&str, &str, &str); 4] = [
    ("upperbound", "Upperbound", "#1f77b4"),
    ("fl", "FL", "#2ca02c"),
    ("ind-agent", "Ind. Agent", "#d62728"),
    ("fl-personalization", "FL Personalization", "#ff7f0e"),
];

const FALLBACK_COLORS: [&str; 4] = ["#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

struct SeriesPoint {
    round: u32,
    mean: f64,
    min: f64,
    max: f64,
}

/// Per variant: seed-averaged building means with min/max across seeds.
fn series_for(rows: &[ParsedRow], metric: Metric) -> Vec<(String, Vec<SeriesPoint>)> {
    // (variant, round, seed) -> building values
    let mut grouped: BTreeMap<(String, u32, u64), Vec<f64>> = BTreeMap::new();
    for row in rows {
        grouped
            .entry((row.variant.clone(), row.round, row.seed))
            .or_default()
            .push(metric.of(row));
    }
    // (variant, round) -> per-seed building means
    let mut by_round: BTreeMap<(String, u32), Vec<f64>> = BTreeMap::new();
    for ((variant, round, _seed), values) in grouped {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        by_round.entry((variant, round)).or_default().push(mean);
    }
    let mut series: BTreeMap<String, Vec<SeriesPoint>> = BTreeMap::new();
    for ((variant, round), seed_means) in by_round {
        let mean = seed_means.iter().sum::<f64>() / seed_means.len() as f64;
        let min = seed_means.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = seed_means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        series.entry(variant).or_default().push(SeriesPoint { round, mean, min, max });
    }

    // order by the canonical legend order, unknown variants afterwards
    let mut ordered = Vec::new();
    for (slug, _, _) in SERIES_ORDER {
        if let Some(points) = series.remove(slug) {
            ordered.push((slug.to_string(), points));
        }
    }
    ordered.extend(series);
    ordered
}

fn legend_entry(slug: &str, extra_index: usize) -> (&str, &str) {
    for (known, label, color) in SERIES_ORDER {
        if known == slug {
            return (label, color);
        }
    }
    ("", FALLBACK_COLORS[extra_index % FALLBACK_COLORS.len()])
}

fn format_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let magnitude = v.abs();
    if magnitude >= 1000.0 {
        format!("{v:.0}")
    } else if magnitude >= 10.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.2}")
    }
}

/// Renders one metric chart as a complete SVG document.
pub fn render_svg(rows: &[ParsedRow], metric: Metric) -> Result<String, PlotError> {
    if rows.is_empty() {
        return Err(PlotError::NoData);
    }
    let series = series_for(rows, metric);

    let (width, height) = (880.0, 560.0);
    let (left, right, top, bottom) = (80.0, 24.0, 56.0, 64.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;

    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for (_, points) in &series {
        for p in points {
            x_min = x_min.min(p.round as f64);
            x_max = x_max.max(p.round as f64);
            y_min = y_min.min(p.min);
            y_max = y_max.max(p.max);
        }
    }
    if x_min == x_max {
        x_min -= 1.0;
        x_max += 1.0;
    }
    let pad = ((y_max - y_min) * 0.05).max(1e-9);
    y_min -= pad;
    y_max += pad;

    let x_of = |round: f64| left + (round - x_min) / (x_max - x_min) * plot_w;
    let y_of = |v: f64| top + (y_max - v) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{width}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="26" font-family="sans-serif" font-size="18" text-anchor="middle">Mean test {} per round</text>"#,
        left + plot_w / 2.0,
        metric.name()
    );

    // axes and ticks
    let _ = writeln!(
        svg,
        r#"<line x1="{left:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
        top + plot_h,
        left + plot_w,
        top + plot_h
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{left:.2}" y1="{top:.2}" x2="{left:.2}" y2="{:.2}" stroke="black"/>"#,
        top + plot_h
    );
    for i in 0..=5 {
        let fx = x_min + (x_max - x_min) * i as f64 / 5.0;
        let x = x_of(fx);
        let _ = writeln!(
            svg,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
            top + plot_h,
            top + plot_h + 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="middle">{}</text>"#,
            top + plot_h + 20.0,
            format_tick(fx)
        );
        let fy = y_min + (y_max - y_min) * i as f64 / 5.0;
        let y = y_of(fy);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{left:.2}" y2="{y:.2}" stroke="black"/>"#,
            left - 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12" text-anchor="end">{}</text>"#,
            left - 9.0,
            y + 4.0,
            format_tick(fy)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="13" text-anchor="middle">round</text>"#,
        left + plot_w / 2.0,
        height - 18.0
    );

    // min/max bands, then lines on top
    for (i, (slug, points)) in series.iter().enumerate() {
        let (_, color) = legend_entry(slug, i);
        let mut band = String::new();
        for p in points {
            let _ = write!(band, "{:.2},{:.2} ", x_of(p.round as f64), y_of(p.max));
        }
        for p in points.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", x_of(p.round as f64), y_of(p.min));
        }
        let _ = writeln!(
            svg,
            r#"<polygon class="band" points="{}" fill="{color}" opacity="0.15"/>"#,
            band.trim_end()
        );
    }
    for (i, (slug, points)) in series.iter().enumerate() {
        let (_, color) = legend_entry(slug, i);
        let mut line = String::new();
        for p in points {
            let _ = write!(line, "{:.2},{:.2} ", x_of(p.round as f64), y_of(p.mean));
        }
        let _ = writeln!(
            svg,
            r#"<polyline class="series" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.trim_end()
        );
    }

    // legend
    let mut lx = left;
    for (i, (slug, _)) in series.iter().enumerate() {
        let (label, color) = legend_entry(slug, i);
        let label = if label.is_empty() { slug.as_str() } else { label };
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="40" x2="{:.2}" y2="40" stroke="{color}" stroke-width="3"/>"#,
            lx + 22.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="44" font-family="sans-serif" font-size="13">{label}</text>"#,
            lx + 27.0
        );
        lx += 34.0 + 7.6 * label.len() as f64;
    }

    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Reads the given metrics CSVs and writes `reward.svg`, `emission.svg`,
/// and `cost.svg` under `out_dir`. Nothing is written when there is no data.
pub fn plot_metrics(csv_paths: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>, PlotError> {
    let mut rows = Vec::new();
    for path in csv_paths {
        let text = std::fs::read_to_string(path).map_err(|source| PlotError::Io {
            path: path.display().to_string(),
            source,
        })?;
        rows.extend(parse_metrics_csv(&text, &path.display().to_string())?);
    }
    if rows.is_empty() {
        return Err(PlotError::NoData);
    }
    let mut written = Vec::new();
    for metric in Metric::ALL {
        let svg = render_svg(&rows, metric)?;
        let path = out_dir.join(format!("{}.svg", metric.name()));
        write_atomic(&path, svg.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(variant: &str, seed: u64, round: u32, building: usize, reward: f64) -> ParsedRow {
        ParsedRow {
            variant: variant.to_string(),
            seed,
            round,
            building,
            reward,
            emission: reward.abs() * 0.3,
            cost: reward.abs() * 0.2,
        }
    }

    #[test]
    fn empty_input_is_an_error_and_writes_nothing() {
        assert!(matches!(render_svg(&[], Metric::Reward), Err(PlotError::NoData)));
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("metrics_x.csv");
        std::fs::write(&csv, format!("{METRICS_HEADER}\n")).unwrap();
        let result = plot_metrics(&[csv], dir.path());
        assert!(matches!(result, Err(PlotError::NoData)));
        assert!(!dir.path().join("reward.svg").exists());
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let text = format!("{METRICS_HEADER}\nfl,1,10,0,-1.0,0.3,0.2\nfl,1,oops,0,-1.0,0.3,0.2\n");
        match parse_metrics_csv(&text, "m.csv") {
            Err(PlotError::MalformedRow { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected MalformedRow, got {other:?}"),
        }
        let text = format!("{METRICS_HEADER}\nfl,1,10\n");
        match parse_metrics_csv(&text, "m.csv") {
            Err(PlotError::MalformedRow { line, reason, .. }) => {
                assert_eq!(line, 2);
                assert!(reason.contains("7 fields"));
            }
            other => panic!("expected MalformedRow, got {other:?}"),
        }
    }

    #[test]
    fn single_seed_band_collapses_onto_the_line() {
        let rows = vec![
            row("fl", 1, 10, 0, -5.0),
            row("fl", 1, 10, 1, -7.0),
            row("fl", 1, 20, 0, -4.0),
            row("fl", 1, 20, 1, -6.0),
        ];
        let series = series_for(&rows, Metric::Reward);
        assert_eq!(series.len(), 1);
        for p in &series[0].1 {
            assert_eq!(p.min, p.max);
            assert_eq!(p.min, p.mean);
        }
        let svg = render_svg(&rows, Metric::Reward).unwrap();
        assert_eq!(svg.matches(r#"class="series""#).count(), 1);
    }

    #[test]
    fn four_variants_render_four_series() {
        let mut rows = Vec::new();
        for (i, variant) in ["upperbound", "fl", "ind-agent", "fl-personalization"]
            .into_iter()
            .enumerate()
        {
            for seed in [1, 2] {
                for round in [10, 20, 30] {
                    rows.push(row(variant, seed, round, 0, -5.0 - i as f64 - seed as f64 * 0.1));
                }
            }
        }
        let svg = render_svg(&rows, Metric::Reward).unwrap();
        assert_eq!(svg.matches(r#"class="series""#).count(), 4);
        assert_eq!(svg.matches(r#"class="band""#).count(), 4);
        for label in ["Upperbound", "FL", "Ind. Agent", "FL Personalization"] {
            assert!(svg.contains(label), "legend label {label} missing");
        }
    }

    #[test]
    fn plot_metrics_writes_all_three_charts() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("metrics_fl.csv");
        let mut text = String::from(METRICS_HEADER);
        text.push('\n');
        text.push_str("fl,1,10,0,-5.5,1.2,0.8\nfl,1,20,0,-4.5,1.0,0.7\n");
        std::fs::write(&csv, text).unwrap();
        let written = plot_metrics(&[csv], dir.path()).unwrap();
        assert_eq!(written.len(), 3);
        for path in written {
            let content = std::fs::read_to_string(path).unwrap();
            assert!(content.starts_with("<svg"));
            assert!(content.ends_with("</svg>\n"));
        }
    }
}
