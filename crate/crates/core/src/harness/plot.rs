//! Static SVG figures: smoothed reward curves, complementary CDFs of slice
//! satisfaction, and stacked partitions against traffic.

use std::fmt::Write as _;
use std::str::FromStr;

use super::experiment::RunSummary;
use crate::error::{Error, Result};

pub const SMOOTHING_WINDOW: usize = 50;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Named polyline in data coordinates.
type Curve = (String, Vec<(f64, f64)>);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    RewardCurve,
    SatisfactionCdf,
    ActionVsTraffic,
}

impl FromStr for PlotKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reward-curve" => Ok(PlotKind::RewardCurve),
            "satisfaction-cdf" => Ok(PlotKind::SatisfactionCdf),
            "action-vs-traffic" => Ok(PlotKind::ActionVsTraffic),
            other => Err(Error::Config(format!("unknown plot kind '{other}'"))),
        }
    }
}

/// Trailing moving average; the first points average what is available.
pub fn trailing_mean(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for (i, v) in values.iter().enumerate() {
        acc += v;
        if i >= window {
            acc -= values[i - window];
        }
        out.push(acc / (i + 1).min(window) as f64);
    }
    out
}

/// Points `(x, P[X >= x])` of the empirical survival function, starting at
/// `(0, 1)` for non-negative samples.
pub fn survival_curve(samples: &[f64]) -> Vec<(f64, f64)> {
    let mut xs: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite()).collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut pts = vec![(0.0, 1.0)];
    for (i, &x) in xs.iter().enumerate() {
        if i > 0 && xs[i - 1] == x {
            continue;
        }
        pts.push((x, (xs.len() - i) as f64 / n));
    }
    if let Some(&last) = xs.last() {
        pts.push((last, 0.0));
    }
    pts
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    left: f64,
    width: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let span = (self.x1 - self.x0).max(1e-12);
        self.left + (x - self.x0) / span * self.width
    }
    fn py(&self, y: f64) -> f64 {
        let span = (self.y1 - self.y0).max(1e-12);
        HEIGHT - MARGIN - (y - self.y0) / span * (HEIGHT - 2.0 * MARGIN)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn header(svg: &mut String, width: f64, title: &str) {
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{HEIGHT}" viewBox="0 0 {width} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect width="{width}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        width / 2.0,
        escape(title)
    );
}

fn axes(svg: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (l, r) = (f.left, f.left + f.width);
    let (t, b) = (MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        svg,
        r#"<path d="M{l},{t} L{l},{b} L{r},{b}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let fx = f.x0 + (f.x1 - f.x0) * i as f64 / 4.0;
        let fy = f.y0 + (f.y1 - f.y0) * i as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            f.px(fx),
            b + 14.0,
            fmt_tick(fx)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            l - 4.0,
            f.py(fy) + 4.0,
            fmt_tick(fy)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        l + f.width / 2.0,
        HEIGHT - 12.0,
        escape(xlabel)
    );
    let _ = writeln!(
        svg,
        r#"<text x="12" y="{:.1}" text-anchor="middle" transform="rotate(-90 12 {:.1})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(ylabel)
    );
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn polyline(svg: &mut String, f: &Frame, pts: &[(f64, f64)], color: &str) {
    let mut d = String::new();
    for (i, &(x, y)) in pts.iter().enumerate() {
        let _ = write!(
            d,
            "{}{:.2},{:.2}",
            if i == 0 { "M" } else { " L" },
            f.px(x),
            f.py(y)
        );
    }
    let _ = writeln!(
        svg,
        r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>"#
    );
}

fn legend(svg: &mut String, x: f64, entries: &[(String, &str)]) {
    for (i, (name, color)) in entries.iter().enumerate() {
        let y = MARGIN + 4.0 + 14.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<rect x="{x:.1}" y="{:.1}" width="10" height="10" fill="{color}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            y - 8.0,
            x + 14.0,
            y + 1.0,
            escape(name)
        );
    }
}

/// Mean trajectory over seeds (truncated to the shortest), smoothed.
fn mean_trajectory(summary: &RunSummary) -> Vec<f64> {
    let len = summary
        .runs
        .iter()
        .map(|r| r.reward_trajectory.len())
        .min()
        .unwrap_or(0);
    let raw: Vec<f64> = (0..len)
        .map(|i| {
            summary
                .runs
                .iter()
                .map(|r| r.reward_trajectory[i])
                .sum::<f64>()
                / summary.runs.len() as f64
        })
        .collect();
    trailing_mean(&raw, SMOOTHING_WINDOW)
}

pub fn reward_curve(summaries: &[RunSummary]) -> Result<String> {
    let curves: Vec<(String, Vec<f64>)> = summaries
        .iter()
        .map(|s| (format!("{} ({})", s.scheme, s.reward), mean_trajectory(s)))
        .filter(|(_, c)| !c.is_empty())
        .collect();
    if curves.is_empty() {
        return Err(Error::Contract("no reward trajectories to plot".into()));
    }
    let len = curves.iter().map(|(_, c)| c.len()).max().unwrap_or(1);
    let all = curves.iter().flat_map(|(_, c)| c.iter().copied());
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    let frame = Frame {
        x0: 0.0,
        x1: (len - 1).max(1) as f64,
        y0: lo.min(0.0),
        y1: hi.max(lo + 1e-6),
        left: MARGIN,
        width: WIDTH - 2.0 * MARGIN,
    };
    let mut svg = String::new();
    header(
        &mut svg,
        WIDTH,
        &format!("Reward (trailing mean, window {SMOOTHING_WINDOW})"),
    );
    axes(&mut svg, &frame, "step", "global reward");
    let mut entries = Vec::new();
    for (i, (name, c)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = c.iter().enumerate().map(|(t, &y)| (t as f64, y)).collect();
        polyline(&mut svg, &frame, &pts, color);
        entries.push((name.clone(), color));
    }
    legend(&mut svg, WIDTH - MARGIN - 150.0, &entries);
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn satisfaction_cdf(summaries: &[RunSummary]) -> Result<String> {
    let mut panels: [Vec<Curve>; 2] = [Vec::new(), Vec::new()];
    for s in summaries {
        let slices = s.runs.first().map_or(0, |r| r.throughput_samples.len());
        for n in 0..slices {
            for (p, pick) in [
                |r: &super::experiment::SeedSummary, n: usize| r.throughput_samples[n].clone(),
                |r: &super::experiment::SeedSummary, n: usize| r.delay_samples[n].clone(),
            ]
            .iter()
            .enumerate()
            {
                let pooled: Vec<f64> = s.runs.iter().flat_map(|r| pick(r, n)).collect();
                if !pooled.is_empty() {
                    panels[p].push((format!("{} slice {n}", s.scheme), survival_curve(&pooled)));
                }
            }
        }
    }
    if panels[0].is_empty() {
        return Err(Error::Contract("no satisfaction samples to plot".into()));
    }
    let total_width = 2.0 * WIDTH;
    let mut svg = String::new();
    header(
        &mut svg,
        total_width,
        "Complementary CDF of slice satisfaction",
    );
    for (p, (panel, label)) in panels
        .iter()
        .zip(["throughput satisfaction", "delay satisfaction"])
        .enumerate()
    {
        let x_hi = panel
            .iter()
            .flat_map(|(_, c)| c.iter().map(|&(x, _)| x))
            .fold(1.0f64, f64::max)
            .min(5.0);
        let frame = Frame {
            x0: 0.0,
            x1: x_hi,
            y0: 0.0,
            y1: 1.0,
            left: MARGIN + p as f64 * WIDTH,
            width: WIDTH - 2.0 * MARGIN,
        };
        axes(&mut svg, &frame, label, "P[X >= x]");
        let mut entries = Vec::new();
        for (i, (name, pts)) in panel.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let clipped: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x.min(x_hi), y)).collect();
            polyline(&mut svg, &frame, &clipped, color);
            entries.push((name.clone(), color));
        }
        legend(&mut svg, frame.left + frame.width - 130.0, &entries);
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Stacked per-slice shares of the first run's traced cell, with each
/// slice's demand share drawn as a dashed line on the same scale.
pub fn action_vs_traffic(summary: &RunSummary) -> Result<String> {
    let run = summary
        .runs
        .first()
        .ok_or_else(|| Error::Contract("summary has no runs".into()))?;
    let trace = &run.trace;
    if trace.actions.is_empty() {
        return Err(Error::Contract("trace is empty".into()));
    }
    let n = trace.actions[0].len();
    let steps = trace.actions.len();
    let frame = Frame {
        x0: 0.0,
        x1: (steps - 1).max(1) as f64,
        y0: 0.0,
        y1: 1.0,
        left: MARGIN,
        width: WIDTH - 2.0 * MARGIN,
    };
    let mut svg = String::new();
    header(
        &mut svg,
        WIDTH,
        &format!(
            "Partition of cell {} vs. traffic ({})",
            trace.cell, summary.scheme
        ),
    );
    axes(&mut svg, &frame, "evaluation step", "share");
    let mut lower = vec![0.0; steps];
    let mut entries = Vec::new();
    for slice in 0..n {
        let upper: Vec<f64> = (0..steps)
            .map(|i| lower[i] + trace.actions[i][slice])
            .collect();
        let mut d = String::new();
        for (i, u) in upper.iter().enumerate() {
            let _ = write!(
                d,
                "{}{:.2},{:.2}",
                if i == 0 { "M" } else { " L" },
                frame.px(i as f64),
                frame.py(*u)
            );
        }
        for i in (0..steps).rev() {
            let _ = write!(d, " L{:.2},{:.2}", frame.px(i as f64), frame.py(lower[i]));
        }
        let color = PALETTE[slice % PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<path d="{d} Z" fill="{color}" fill-opacity="0.45" stroke="none" data-slice="{slice}"/>"#
        );
        let demand: Vec<(f64, f64)> = (0..steps)
            .map(|i| (i as f64, trace.demand_share[i][slice]))
            .collect();
        let mut dd = String::new();
        for (i, &(x, y)) in demand.iter().enumerate() {
            let _ = write!(
                dd,
                "{}{:.2},{:.2}",
                if i == 0 { "M" } else { " L" },
                frame.px(x),
                frame.py(y)
            );
        }
        let _ = writeln!(
            svg,
            r#"<path d="{dd}" fill="none" stroke="{color}" stroke-dasharray="4 2"/>"#
        );
        entries.push((format!("slice {slice}"), color));
        lower = upper;
    }
    legend(&mut svg, WIDTH - MARGIN - 80.0, &entries);
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_plot(summaries: &[RunSummary], kind: PlotKind) -> Result<String> {
    if summaries.is_empty() {
        return Err(Error::Contract("no summaries to plot".into()));
    }
    match kind {
        PlotKind::RewardCurve => reward_curve(summaries),
        PlotKind::SatisfactionCdf => satisfaction_cdf(summaries),
        PlotKind::ActionVsTraffic => action_vs_traffic(&summaries[0]),
    }
}
