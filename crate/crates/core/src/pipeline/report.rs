use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::MetricsReport;
use crate::error::Result;

/// Metrics of every evaluated model on one test set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Horizon lead times in minutes.
    pub horizon_minutes: Vec<f64>,
    pub models: Vec<(String, MetricsReport)>,
}

impl Evaluation {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Persistence curves are identical across models; the first is used.
    fn persistence_mape(&self) -> Vec<Option<f64>> {
        self.models
            .first()
            .map(|(_, r)| r.horizons.iter().map(|h| Some(h.persistence_mape)).collect())
            .unwrap_or_default()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// `mape.csv`, `fs.csv`, `conditions.csv` and two SVG line plots.
pub fn write_report(eval: &Evaluation, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;

    let mut mape = csv::Writer::from_path(dir.join("mape.csv"))?;
    let mut fs = csv::Writer::from_path(dir.join("fs.csv"))?;
    let mut header = vec!["horizon".to_string(), "minutes".to_string()];
    header.extend(eval.models.iter().map(|(n, _)| n.clone()));
    let mut mape_header = header.clone();
    mape_header.push("persistence".into());
    mape.write_record(&mape_header)?;
    fs.write_record(&header)?;
    for (c, minutes) in eval.horizon_minutes.iter().enumerate() {
        let lead = vec![(c + 1).to_string(), minutes.to_string()];
        let mut m = lead.clone();
        let mut f = lead;
        for (_, r) in &eval.models {
            m.push(format!("{:.6}", r.horizons[c].mape));
            f.push(opt(r.horizons[c].fs));
        }
        m.push(eval.persistence_mape().get(c).copied().flatten().map(|v| format!("{v:.6}")).unwrap_or_default());
        mape.write_record(&m)?;
        fs.write_record(&f)?;
    }
    mape.flush()?;
    fs.flush()?;

    let mut cond = csv::Writer::from_path(dir.join("conditions.csv"))?;
    cond.write_record(["model", "condition", "samples", "horizon", "mape", "rmse", "fs", "persistence_mape"])?;
    for (name, r) in &eval.models {
        for (c, rows) in &r.per_condition {
            for h in rows {
                cond.write_record([
                    name.clone(),
                    c.to_string(),
                    h.samples.to_string(),
                    h.horizon.to_string(),
                    format!("{:.6}", h.mape),
                    format!("{:.6}", h.rmse),
                    opt(h.fs),
                    format!("{:.6}", h.persistence_mape),
                ])?;
            }
        }
    }
    cond.flush()?;

    let mut mape_series: Vec<(String, Vec<Option<f64>>)> = eval
        .models
        .iter()
        .map(|(n, r)| (n.clone(), r.horizons.iter().map(|h| Some(h.mape)).collect()))
        .collect();
    mape_series.push(("persistence".into(), eval.persistence_mape()));
    let fs_series: Vec<(String, Vec<Option<f64>>)> =
        eval.models.iter().map(|(n, r)| (n.clone(), r.horizons.iter().map(|h| h.fs).collect())).collect();
    std::fs::write(dir.join("mape.svg"), line_plot_svg("Testing MAPE", "MAPE (%)", &eval.horizon_minutes, &mape_series))?;
    std::fs::write(dir.join("fs.svg"), line_plot_svg("Forecasting skill", "FS (%)", &eval.horizon_minutes, &fs_series))?;
    Ok(())
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Marker-and-line plot of `series` against `x`, with a legend.
pub fn line_plot_svg(title: &str, y_label: &str, x: &[f64], series: &[(String, Vec<Option<f64>>)]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 170.0, 40.0, 50.0);
    let values: Vec<f64> = series.iter().flat_map(|(_, v)| v.iter().flatten().copied()).collect();
    let (mut lo, mut hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        (lo, hi) = (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let (x0, x1) = (x.first().copied().unwrap_or(0.0), x.last().copied().unwrap_or(1.0));
    let span = if x1 > x0 { x1 - x0 } else { 1.0 };
    let px = |v: f64| left + (v - x0) / span * (w - left - right);
    let py = |v: f64| top + (hi - v) / (hi - lo) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, (left + w - right) / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - left - right,
        h - top - bottom
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = py(v);
        let _ = writeln!(s, r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##, w - right);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.2}</text>"#, left - 6.0, y + 4.0);
    }
    for &v in x {
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{v}</text>"#, px(v), h - bottom + 18.0);
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Horizon (min)</text>"#, (left + w - right) / 2.0, h - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">{}</text>"#,
        (top + h - bottom) / 2.0,
        (top + h - bottom) / 2.0,
        escape(y_label)
    );
    for (k, (name, vals)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts: Vec<String> = x
            .iter()
            .zip(vals)
            .filter_map(|(&xv, v)| v.map(|v| format!("{:.2},{:.2}", px(xv), py(v))))
            .collect();
        let dash = if name == "persistence" { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#, pts.join(" "));
        for p in &pts {
            let (cx, cy) = p.split_once(',').unwrap_or(("0", "0"));
            let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
        }
        let ly = top + 14.0 + 18.0 * k as f64;
        let lx = w - right + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/>"#, lx + 22.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 28.0, ly + 4.0, escape(name));
    }
    s.push_str("</svg>\n");
    s
}
