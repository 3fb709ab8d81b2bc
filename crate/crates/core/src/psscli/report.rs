//! CSV reports and the PSS-vs-step SVG.

use std::fmt::Write as _;

use crate::cotrainer::{
    RunReport, StrategyKind, StrategySummary, StudyReport, SweepRow, REFERENCE_PSS_COTRAIN,
    REFERENCE_PSS_SPATIALLY_GUIDED,
};
use crate::error::{Error, Result};

pub const REPORT_HEADER: &str = "step,pss,rank_spat,rank_act,grounding_mse,action_mse,strategy,seed";
pub const SUMMARY_HEADER: &str = "strategy,seeds,final_pss_mean,final_pss_std,avg_pss_mean,grounding_mse_mean,grounding_mse_std,action_mse_mean,action_mse_std";
pub const SWEEP_HEADER: &str = "ratio,grounding_mse,action_mse,final_pss";

/// 17 significant digits in scientific notation.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn report_csv(r: &RunReport) -> String {
    let mut out = String::with_capacity(96 * (r.samples.len() + 1));
    out.push_str(REPORT_HEADER);
    out.push('\n');
    for s in &r.samples {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.step,
            fmt_float(s.pss),
            s.rank_spat,
            s.rank_act,
            fmt_float(s.grounding_eval_mse),
            fmt_float(s.action_eval_mse),
            r.strategy.kind.name(),
            r.seed
        )
        .expect("writing to a String");
    }
    out
}

/// One parsed row of a report CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub step: usize,
    pub pss: f64,
    pub rank_spat: usize,
    pub rank_act: usize,
    pub grounding_mse: f64,
    pub action_mse: f64,
    pub strategy: StrategyKind,
    pub seed: u64,
}

pub fn parse_report_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(REPORT_HEADER) {
        return Err(Error::Format("report header mismatch".into()));
    }
    let bad = |n: usize, what: &str| Error::Format(format!("report line {}: bad {what}", n + 2));
    lines
        .enumerate()
        .map(|(n, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 8 {
                return Err(bad(n, "field count"));
            }
            Ok(ReportRow {
                step: f[0].parse().map_err(|_| bad(n, "step"))?,
                pss: f[1].parse().map_err(|_| bad(n, "pss"))?,
                rank_spat: f[2].parse().map_err(|_| bad(n, "rank_spat"))?,
                rank_act: f[3].parse().map_err(|_| bad(n, "rank_act"))?,
                grounding_mse: f[4].parse().map_err(|_| bad(n, "grounding_mse"))?,
                action_mse: f[5].parse().map_err(|_| bad(n, "action_mse"))?,
                strategy: StrategyKind::ALL
                    .into_iter()
                    .find(|k| k.name() == f[6])
                    .ok_or_else(|| bad(n, "strategy"))?,
                seed: f[7].parse().map_err(|_| bad(n, "seed"))?,
            })
        })
        .collect()
}

/// Starts with a `#` line carrying the large-backbone reference PSS values,
/// which the toy model is not expected to reproduce.
pub fn summary_csv(summary: &[StrategySummary]) -> String {
    let mut out = format!(
        "# reference pss at full scale, not reproducible here: cotrain {REFERENCE_PSS_COTRAIN}, spatially_guided {REFERENCE_PSS_SPATIALLY_GUIDED}\n"
    );
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for s in summary {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.kind.name(),
            s.seeds,
            fmt_float(s.final_pss_mean),
            fmt_float(s.final_pss_std),
            fmt_float(s.avg_pss_mean),
            fmt_float(s.grounding_mse_mean),
            fmt_float(s.grounding_mse_std),
            fmt_float(s.action_mse_mean),
            fmt_float(s.action_mse_std)
        )
        .expect("writing to a String");
    }
    out
}

/// Sweep rows averaged over seeds, one line per ratio in first-seen order.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    let mut ratios = Vec::new();
    for r in rows {
        if !ratios.contains(&r.ratio) {
            ratios.push(r.ratio);
        }
    }
    for ratio in ratios {
        let group: Vec<&SweepRow> = rows.iter().filter(|r| r.ratio == ratio).collect();
        let n = group.len() as f64;
        let avg = |f: fn(&SweepRow) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
        writeln!(
            out,
            "{},{},{},{}",
            ratio,
            fmt_float(avg(|r| r.grounding_mse)),
            fmt_float(avg(|r| r.action_mse)),
            fmt_float(avg(|r| r.final_pss))
        )
        .expect("writing to a String");
    }
    out
}

pub const SVG_WIDTH: f64 = 800.0;
pub const SVG_HEIGHT: f64 = 500.0;
const TICKS: usize = 10;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 60.0;
const COLORS: [&str; 3] = ["#1f77b4", "#ff7f0e", "#2ca02c"];

/// Mean PSS per probe step across seeds, skipping undefined samples.
pub fn mean_curve(study: &StudyReport, kind: StrategyKind) -> Vec<(usize, f64)> {
    let runs: Vec<&RunReport> = study.runs_for(kind).collect();
    let Some(first) = runs.first() else {
        return Vec::new();
    };
    first
        .samples
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let vals: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.samples.get(i))
                .filter(|x| !x.degenerate)
                .map(|x| x.pss)
                .collect();
            (!vals.is_empty()).then(|| (s.step, vals.iter().sum::<f64>() / vals.len() as f64))
        })
        .collect()
}

/// PSS against training step, one polyline per strategy.
pub fn pss_svg(study: &StudyReport) -> String {
    let curves: Vec<(StrategyKind, Vec<(usize, f64)>)> =
        StrategyKind::ALL.into_iter().map(|k| (k, mean_curve(study, k))).collect();
    let max_step = curves
        .iter()
        .flat_map(|(_, c)| c.iter().map(|p| p.0))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let (x0, x1) = (MARGIN_LEFT, SVG_WIDTH - MARGIN_RIGHT);
    let (y0, y1) = (SVG_HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);
    let sx = |step: f64| x0 + (x1 - x0) * step / max_step;
    let sy = |v: f64| y0 + (y1 - y0) * v;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);
    for t in 0..=TICKS {
        let frac = t as f64 / TICKS as f64;
        let x = x0 + (x1 - x0) * frac;
        let y = sy(frac);
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{y0}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, y0 + 5.0);
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y0 + 20.0,
            (max_step * frac).round() as u64
        );
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{frac:.1}</text>"#,
            x0 - 8.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">training step</text>"#,
        (x0 + x1) / 2.0,
        SVG_HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">PSS</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    for (i, (kind, curve)) in curves.iter().enumerate() {
        let pts: Vec<String> = curve
            .iter()
            .map(|(step, v)| format!("{:.2},{:.2}", sx(*step as f64), sy(*v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"><title>{}</title></polyline>"#,
            COLORS[i % COLORS.len()],
            pts.join(" "),
            kind.name()
        );
        let ly = y1 + 10.0 + 20.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{:.2}" y="{:.2}" width="18" height="4" fill="{}"/>"#,
            x1 + 15.0,
            ly - 2.0,
            COLORS[i % COLORS.len()]
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x1 + 40.0, ly + 4.0, kind.name());
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_is_seventeen_digits() {
        assert_eq!(fmt_float(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_float(0.0), "0.0000000000000000e0");
        assert_eq!(fmt_float(f64::NAN), "NaN");
        for v in [0.1, 1.0 / 3.0, 2.5e-300, -7.25] {
            assert_eq!(fmt_float(v).parse::<f64>().unwrap(), v);
        }
    }
}
