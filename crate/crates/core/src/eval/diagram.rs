use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Numbers behind one critical-distance diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdDiagramData {
    pub models: Vec<String>,
    pub average_ranks: Vec<f64>,
    pub critical_distance: f64,
    /// Model indices sorted by ascending average rank.
    pub order: Vec<usize>,
    /// Connector bars: model indices per group, in rank order, each with ≥ 2 members.
    pub groups: Vec<Vec<usize>>,
}

impl CdDiagramData {
    pub fn new(models: &[String], average_ranks: &[f64], critical_distance: f64) -> Self {
        assert_eq!(
            models.len(),
            average_ranks.len(),
            "one average rank per model"
        );
        Self {
            models: models.to_vec(),
            average_ranks: average_ranks.to_vec(),
            critical_distance,
            order: rank_order(average_ranks),
            groups: cd_groups(average_ranks, critical_distance),
        }
    }
}

fn rank_order(ranks: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ranks.len()).collect();
    order.sort_by(|&a, &b| ranks[a].total_cmp(&ranks[b]).then(a.cmp(&b)));
    order
}

/// Transitive closure of `|r_i − r_j| ≤ cd` along the rank ordering: neighbours
/// in sorted order within `cd` share a group. Singletons are dropped.
pub fn cd_groups(average_ranks: &[f64], cd: f64) -> Vec<Vec<usize>> {
    let order = rank_order(average_ranks);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    for &i in &order {
        match current.last() {
            Some(&prev) if average_ranks[i] - average_ranks[prev] <= cd => current.push(i),
            _ => {
                if current.len() >= 2 {
                    groups.push(std::mem::take(&mut current));
                }
                current = vec![i];
            }
        }
    }
    if current.len() >= 2 {
        groups.push(current);
    }
    groups
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

const WIDTH: f64 = 720.0;
const MARGIN: f64 = 150.0;
const AXIS_Y: f64 = 70.0;
const ROW: f64 = 22.0;

/// Standalone SVG: a rank axis (1 on the left), a CD ruler, each model at its
/// average rank with a labelled elbow line, and one bar per group.
pub fn cd_diagram(data: &CdDiagramData) -> String {
    let k = data.models.len();
    let max_rank = data
        .average_ranks
        .iter()
        .copied()
        .fold(k.max(2) as f64, f64::max)
        .ceil();
    let x = |rank: f64| MARGIN + (rank - 1.0) / (max_rank - 1.0) * (WIDTH - 2.0 * MARGIN);
    let bars_y = AXIS_Y + 14.0;
    let labels_y = bars_y + 10.0 * data.groups.len() as f64 + 16.0;
    let left = k.div_ceil(2);
    let height = labels_y + ROW * left.max(k - left) as f64 + 20.0;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height:.0}" viewBox="0 0 {WIDTH} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    // CD ruler
    let cd_end = x(1.0 + data.critical_distance);
    let _ = writeln!(
        svg,
        r#"<g class="cd"><line x1="{:.2}" y1="20" x2="{cd_end:.2}" y2="20" stroke="black" stroke-width="1.5"/><line x1="{:.2}" y1="15" x2="{:.2}" y2="25" stroke="black"/><line x1="{cd_end:.2}" y1="15" x2="{cd_end:.2}" y2="25" stroke="black"/><text x="{:.2}" y="12" text-anchor="middle">CD = {:.3}</text></g>"#,
        x(1.0),
        x(1.0),
        x(1.0),
        (x(1.0) + cd_end) / 2.0,
        data.critical_distance
    );

    // rank axis
    let _ = write!(
        svg,
        r#"<g class="axis"><line x1="{:.2}" y1="{AXIS_Y}" x2="{:.2}" y2="{AXIS_Y}" stroke="black"/>"#,
        x(1.0),
        x(max_rank)
    );
    for r in 1..=max_rank as usize {
        let xr = x(r as f64);
        let _ = write!(
            svg,
            r#"<line x1="{xr:.2}" y1="{}" x2="{xr:.2}" y2="{AXIS_Y}" stroke="black"/><text x="{xr:.2}" y="{}" text-anchor="middle">{r}</text>"#,
            AXIS_Y - 6.0,
            AXIS_Y - 10.0
        );
    }
    svg.push_str("</g>\n");

    // models: best half labelled on the left, the rest on the right
    svg.push_str("<g class=\"models\">");
    for (pos, &m) in data.order.iter().enumerate() {
        let xr = x(data.average_ranks[m]);
        let (row, tx, anchor) = if pos < left {
            (pos, MARGIN - 40.0, "end")
        } else {
            (k - 1 - pos, WIDTH - MARGIN + 40.0, "start")
        };
        let y = labels_y + ROW * row as f64;
        let elbow = if anchor == "end" { tx + 4.0 } else { tx - 4.0 };
        let _ = write!(
            svg,
            r#"<polyline points="{xr:.2},{AXIS_Y} {xr:.2},{y:.2} {elbow:.2},{y:.2}" fill="none" stroke="black"/><text x="{tx:.2}" y="{:.2}" text-anchor="{anchor}">{} ({:.2})</text>"#,
            y + 4.0,
            escape(&data.models[m]),
            data.average_ranks[m]
        );
    }
    svg.push_str("</g>\n");

    svg.push_str("<g class=\"groups\">");
    for (g, group) in data.groups.iter().enumerate() {
        let lo = data.average_ranks[group[0]];
        let hi = data.average_ranks[*group.last().expect("groups are non-empty")];
        let y = bars_y + 10.0 * g as f64;
        let _ = write!(
            svg,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black" stroke-width="4"/>"#,
            x(lo) - 3.0,
            x(hi) + 3.0
        );
    }
    svg.push_str("</g>\n</svg>\n");
    svg
}
