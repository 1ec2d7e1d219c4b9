//! Static SVG charts for result tables. Hand-rolled polyline rendering so
//! the output is deterministic and dependency-free.

use crate::experiment::ResultTable;
use std::path::{Path, PathBuf};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;

struct Series<'a> {
    label: &'a str,
    points: Vec<(f64, f64)>,
}

fn fmt(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 0.01 && v.abs() < 10_000.0 {
        format!("{v:.4}").trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.3e}")
    }
}

fn line_chart(title: &str, x_label: &str, y_label: &str, series: &[Series<'_>], note: &str) -> String {
    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    let (x_min, x_max) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    let (y_min, y_max) = all
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    let y_min = y_min.min(0.0);
    let x_span = (x_max - x_min).max(1e-12);
    let y_span = (y_max - y_min).max(1e-12);
    let sx = |x: f64| MARGIN + (x - x_min) / x_span * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y_min) / y_span * (HEIGHT - 2.0 * MARGIN);

    let palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let mut body = String::new();
    body.push_str(&format!(
        "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">{title}</text>\n",
        WIDTH / 2.0
    ));
    // axes
    body.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN
    ));
    body.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{x_label}</text>\n",
        WIDTH / 2.0,
        HEIGHT - 16.0
    ));
    body.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 {})\">{y_label}</text>\n",
        HEIGHT / 2.0,
        HEIGHT / 2.0
    ));
    // axis extreme labels
    body.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">{}</text>\n",
        sx(x_min),
        HEIGHT - MARGIN + 16.0,
        fmt(x_min)
    ));
    body.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"middle\">{}</text>\n",
        sx(x_max),
        HEIGHT - MARGIN + 16.0,
        fmt(x_max)
    ));
    body.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{}</text>\n",
        MARGIN - 6.0,
        sy(y_min) + 4.0,
        fmt(y_min)
    ));
    body.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"10\" text-anchor=\"end\">{}</text>\n",
        MARGIN - 6.0,
        sy(y_max) + 4.0,
        fmt(y_max)
    ));

    for (si, s) in series.iter().enumerate() {
        let color = palette[si % palette.len()];
        if s.points.len() > 1 {
            let pts: Vec<String> =
                s.points.iter().map(|(x, y)| format!("{},{}", sx(*x), sy(*y))).collect();
            body.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                pts.join(" ")
            ));
        }
        for (x, y) in &s.points {
            body.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>\n",
                sx(*x),
                sy(*y)
            ));
        }
        body.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{color}\">{}</text>\n",
            WIDTH - MARGIN + 6.0,
            MARGIN + 14.0 * si as f64,
            s.label
        ));
    }
    body.push_str(&format!(
        "<text x=\"{}\" y=\"40\" text-anchor=\"middle\" font-size=\"11\" fill=\"#555\">{note}</text>\n",
        WIDTH / 2.0
    ));
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n{body}</svg>\n"
    )
}

fn monotone_note(values: &[f64]) -> &'static str {
    if values.len() < 2 {
        "single point"
    } else if values.windows(2).all(|w| w[1] < w[0]) {
        "trend: strictly decreasing in r"
    } else if values.windows(2).all(|w| w[1] <= w[0]) {
        "trend: nonincreasing in r"
    } else {
        "trend: not monotone"
    }
}

/// Writes gap-vs-r and idleness-vs-r charts. An empty table produces no
/// files and a warning on stderr.
pub fn emit_plots(table: &ResultTable, out_dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    if table.aggregates.is_empty() {
        eprintln!("emit_plots: empty result table, nothing to plot");
        return Ok(Vec::new());
    }
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    let gaps: Vec<(f64, f64)> = table
        .aggregates
        .iter()
        .filter_map(|a| a.abs_gap_to_hgi.map(|g| (a.r, g)))
        .collect();
    let inst: Vec<(f64, f64)> = table.aggregates.iter().map(|a| (a.r, a.mean_inst_gap)).collect();
    let mut series = Vec::new();
    if !gaps.is_empty() {
        series.push(Series { label: "|J - HGI|", points: gaps.clone() });
    }
    series.push(Series { label: "mean inst. gap", points: inst.clone() });
    let note_src: Vec<f64> = if gaps.is_empty() {
        inst.iter().map(|p| p.1).collect()
    } else {
        gaps.iter().map(|p| p.1).collect()
    };
    let svg = line_chart(
        "Cost gap vs traffic parameter",
        "r",
        "gap",
        &series,
        monotone_note(&note_src),
    );
    let path = out_dir.join("gap_vs_r.svg");
    std::fs::write(&path, svg)?;
    written.push(path);

    let n_res = table.aggregates[0].idle_fraction.len();
    let mut series = Vec::new();
    let labels: Vec<String> = (1..=n_res).map(|i| format!("resource {i}")).collect();
    for (i, label) in labels.iter().enumerate() {
        series.push(Series {
            label,
            points: table.aggregates.iter().map(|a| (a.r, a.idle_fraction[i])).collect(),
        });
    }
    let first_series: Vec<f64> = table.aggregates.iter().map(|a| a.idle_fraction[0]).collect();
    let svg = line_chart(
        "Idleness-while-loaded fraction vs traffic parameter",
        "r",
        "time fraction",
        &series,
        monotone_note(&first_series),
    );
    let path = out_dir.join("idleness_vs_r.svg");
    std::fs::write(&path, svg)?;
    written.push(path);

    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::CostEstimate;
    use crate::experiment::Aggregate;

    fn table(aggregates: Vec<Aggregate>) -> ResultTable {
        ResultTable {
            metric: "j_e",
            rows: Vec::new(),
            aggregates,
            hgi: Some(CostEstimate {
                value: 1.0,
                std_error: 0.01,
                replications: 4,
                horizon: 100.0,
                truncation_bound: 0.0,
            }),
            verdict: None,
        }
    }

    fn agg(r: f64, gap: f64, idle: f64) -> Aggregate {
        Aggregate {
            r,
            n: 4,
            j_mean: 1.0 + gap,
            j_std_error: 0.01,
            abs_gap_to_hgi: Some(gap),
            mean_inst_gap: gap / 2.0,
            idle_fraction: vec![idle, idle / 2.0],
        }
    }

    #[test]
    fn empty_table_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_plots(&table(Vec::new()), dir.path()).unwrap();
        assert!(files.is_empty());
    }

    #[test]
    fn single_point_chart() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_plots(&table(vec![agg(4.0, 0.5, 0.02)]), dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        let text = std::fs::read_to_string(&files[0]).unwrap();
        assert!(text.contains("single point"));
        assert!(text.starts_with("<svg"));
    }

    #[test]
    fn full_grid_gets_monotone_annotation() {
        let dir = tempfile::tempdir().unwrap();
        let aggs = vec![agg(4.0, 0.8, 0.04), agg(8.0, 0.5, 0.02), agg(16.0, 0.3, 0.01)];
        let files = emit_plots(&table(aggs), dir.path()).unwrap();
        let text = std::fs::read_to_string(&files[0]).unwrap();
        assert!(text.contains("strictly decreasing"));
        let text = std::fs::read_to_string(&files[1]).unwrap();
        assert!(text.contains("polyline"));
    }
}
