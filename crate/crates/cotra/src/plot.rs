//! Scatter plot of evaluation results: normalized reward against normalized
//! cost, rendered as a self-contained SVG string.
//!
//! The plot reads the metric CSVs the pipeline writes (`summary.csv` or
//! `ablation.csv`), groups points by their label column (policy or variant),
//! and draws the cost budget as a dashed vertical line at normalized cost 1 —
//! everything left of the line is safe.

use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

/// One plotted evaluation: a labeled (cost, reward) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotPoint {
    pub label: String,
    pub normalized_cost: f64,
    pub normalized_reward: f64,
}

/// Reads plot points from a pipeline metrics CSV. The file must carry
/// `normalized_reward` and `normalized_cost` columns plus a `policy` or
/// `variant` label column; `#` comment lines are skipped.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<PlotPoint>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));

    let (header_idx, header) = lines.next().ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        msg: "no header row".into(),
    })?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| columns.iter().position(|c| *c == name);
    let label_col = find("policy").or_else(|| find("variant"));
    let (Some(reward_col), Some(cost_col)) =
        (find("normalized_reward"), find("normalized_cost"))
    else {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: header_idx + 1,
            msg: "header must name normalized_reward and normalized_cost columns".into(),
        });
    };

    let mut points = Vec::new();
    for (idx, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let get = |col: usize| -> Result<f64> {
            fields
                .get(col)
                .and_then(|f| f.parse().ok())
                .ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    msg: format!("bad numeric field in `{line}`"),
                })
        };
        points.push(PlotPoint {
            label: label_col
                .and_then(|c| fields.get(c))
                .unwrap_or(&"run")
                .to_string(),
            normalized_reward: get(reward_col)?,
            normalized_cost: get(cost_col)?,
        });
    }
    if points.is_empty() {
        return Err(Error::Eval(format!("{} holds no data rows", path.display())));
    }
    Ok(points)
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 64.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 32.0;
const MARGIN_BOTTOM: f64 = 52.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

/// Nice-looking axis bounds: pad the data range and always include the
/// reference value (cost budget 1, or reward 0).
fn axis_range(values: impl Iterator<Item = f64>, include: f64) -> (f64, f64) {
    let mut lo = include;
    let mut hi = include;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let pad = ((hi - lo) * 0.08).max(0.05);
    (lo - pad, hi + pad)
}

/// Renders labeled points as an SVG scatter of normalized reward (y) versus
/// normalized cost (x) with a dashed vertical line at the cost budget, one
/// color per label, and a legend.
pub fn scatter_svg(points: &[PlotPoint], title: &str) -> Result<String> {
    if points.is_empty() {
        return Err(Error::Eval("nothing to plot".into()));
    }
    let (x_lo, x_hi) = axis_range(points.iter().map(|p| p.normalized_cost), 1.0);
    let (y_lo, y_hi) = axis_range(points.iter().map(|p| p.normalized_reward), 0.0);
    let x_px = |v: f64| MARGIN_LEFT + (v - x_lo) / (x_hi - x_lo) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT);
    let y_px = |v: f64| HEIGHT - MARGIN_BOTTOM - (v - y_lo) / (y_hi - y_lo) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM);

    let mut labels: Vec<&str> = Vec::new();
    for p in points {
        if !labels.contains(&p.label.as_str()) {
            labels.push(&p.label);
        }
    }

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="15" text-anchor="middle">{title}</text>"#,
        MARGIN_LEFT + (WIDTH - MARGIN_LEFT - MARGIN_RIGHT) / 2.0
    );

    // Axes with min/max tick labels.
    let (plot_left, plot_right) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
    let (plot_top, plot_bottom) = (MARGIN_TOP, HEIGHT - MARGIN_BOTTOM);
    let _ = writeln!(
        s,
        r##"<rect x="{plot_left}" y="{plot_top}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
        plot_right - plot_left,
        plot_bottom - plot_top
    );
    for (v, anchor) in [(x_lo, "start"), (x_hi, "end")] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="{anchor}">{v:.2}</text>"#,
            x_px(v),
            plot_bottom + 16.0
        );
    }
    for v in [y_lo, y_hi] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{v:.2}</text>"#,
            plot_left - 6.0,
            y_px(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle">normalized cost</text>"#,
        plot_left + (plot_right - plot_left) / 2.0,
        HEIGHT - 14.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{}" font-family="sans-serif" font-size="13" text-anchor="middle" transform="rotate(-90 18 {})">normalized reward</text>"#,
        plot_top + (plot_bottom - plot_top) / 2.0,
        plot_top + (plot_bottom - plot_top) / 2.0
    );

    // The cost budget: points left of this line satisfy the constraint.
    let budget_x = x_px(1.0);
    let _ = writeln!(
        s,
        r##"<line x1="{budget_x}" y1="{plot_top}" x2="{budget_x}" y2="{plot_bottom}" stroke="#d62728" stroke-dasharray="5,4"/>"##
    );
    let _ = writeln!(
        s,
        r##"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="#d62728">budget</text>"##,
        budget_x + 4.0,
        plot_top + 12.0
    );

    for p in points {
        let color_idx = labels.iter().position(|l| *l == p.label).unwrap_or(0);
        let color = PALETTE[color_idx % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4.5" fill="{color}" fill-opacity="0.75"/>"#,
            x_px(p.normalized_cost),
            y_px(p.normalized_reward)
        );
    }

    // Legend down the right margin.
    for (i, label) in labels.iter().enumerate() {
        let y = plot_top + 14.0 + i as f64 * 18.0;
        let color = PALETTE[i % PALETTE.len()];
        let _ = writeln!(
            s,
            r#"<circle cx="{}" cy="{}" r="4.5" fill="{color}"/>"#,
            plot_right + 16.0,
            y
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12">{label}</text>"#,
            plot_right + 26.0,
            y + 4.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_points() -> Vec<PlotPoint> {
        vec![
            PlotPoint { label: "trac".into(), normalized_cost: 0.2, normalized_reward: 0.8 },
            PlotPoint { label: "trac".into(), normalized_cost: 0.3, normalized_reward: 0.75 },
            PlotPoint { label: "bc_all".into(), normalized_cost: 2.5, normalized_reward: 0.4 },
        ]
    }

    #[test]
    fn svg_contains_points_budget_line_and_legend() {
        let svg = scatter_svg(&sample_points(), "demo").unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 3 + 2, "3 points + 2 legend dots");
        assert!(svg.contains("stroke-dasharray"), "budget line missing");
        assert!(svg.contains(">trac</text>") && svg.contains(">bc_all</text>"));
        assert!(svg.contains("normalized cost") && svg.contains("normalized reward"));
    }

    #[test]
    fn budget_line_sits_between_safe_and_unsafe_points() {
        let points = sample_points();
        let svg = scatter_svg(&points, "demo").unwrap();
        // Extract cx attributes in emission order: the two safe points must
        // be left of the budget line's x, the unsafe one right of it.
        let budget_x: f64 = svg
            .split("x1=\"")
            .nth(1)
            .and_then(|rest| rest.split('"').next())
            .unwrap()
            .parse()
            .unwrap();
        let cxs: Vec<f64> = svg
            .split("<circle cx=\"")
            .skip(1)
            .take(3)
            .map(|rest| rest.split('"').next().unwrap().parse().unwrap())
            .collect();
        assert!(cxs[0] < budget_x && cxs[1] < budget_x);
        assert!(cxs[2] > budget_x);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(scatter_svg(&[], "demo").is_err());
    }

    #[test]
    fn reads_summary_shaped_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.csv");
        std::fs::write(
            &path,
            "# format_version = 1\n# stage = summary\n\
             seed,policy,mean_return,mean_cost,normalized_reward,normalized_cost,safe\n\
             0,trac,2.1,2,0.81,0.25,true\n\
             0,bc_all,1.6,23,0.34,2.875,false\n",
        )
        .unwrap();
        let points = read_metrics_csv(&path).unwrap();
        assert_eq!(points.len(), 2);
        assert_eq!(points[0].label, "trac");
        assert_eq!(points[0].normalized_cost, 0.25);
        assert_eq!(points[1].normalized_reward, 0.34);
    }

    #[test]
    fn reads_ablation_shaped_csv_by_variant_column() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ablation.csv");
        std::fs::write(
            &path,
            "variant,seed,mean_return,mean_cost,normalized_reward,normalized_cost,safe\n\
             full,0,2.1,2,0.81,0.25,true\n\
             undesirable_only,0,-0.3,0,-1.5,0,true\n",
        )
        .unwrap();
        let points = read_metrics_csv(&path).unwrap();
        assert_eq!(points[1].label, "undesirable_only");
        assert_eq!(points[1].normalized_reward, -1.5);
    }

    #[test]
    fn missing_metric_columns_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "a,b\n1,2\n").unwrap();
        let err = read_metrics_csv(&path).unwrap_err();
        assert!(err.to_string().contains("normalized_reward"), "{err}");
    }

    #[test]
    fn header_only_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, "policy,normalized_reward,normalized_cost\n").unwrap();
        assert!(read_metrics_csv(&path).is_err());
    }
}
