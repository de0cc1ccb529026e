use std::fmt::Write as _;
use std::path::PathBuf;

use anopipe_core::classifier::EvalMetrics;
use anyhow::{Context, Result};

use crate::layout::Layout;
use crate::record::RunRecord;
use crate::stages::{ConversionStats, EvaluationReport, Variant};

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.digits$}"))
}

/// Paired bar chart of the per-class score histograms.
fn histogram_svg(m: &EvalMetrics) -> String {
    let (w, h, pad) = (360.0, 160.0, 24.0);
    let bins = m.histograms.normal.len();
    let peak = m
        .histograms
        .normal
        .iter()
        .chain(&m.histograms.anomaly)
        .copied()
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let slot = (w - 2.0 * pad) / bins as f64;
    let mut s = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = write!(s, r##"<line x1="{pad}" y1="{y}" x2="{x2}" y2="{y}" stroke="#444"/>"##, y = h - pad, x2 = w - pad);
    for (series, color, offset) in [(&m.histograms.normal, "#4a7ab5", 0.0), (&m.histograms.anomaly, "#c8553d", 0.5)] {
        for (b, &count) in series.iter().enumerate() {
            let bh = (h - 2.0 * pad) * count as f64 / peak;
            let x = pad + slot * (b as f64 + offset) + 1.0;
            let _ = write!(
                s,
                r#"<rect x="{x:.1}" y="{y:.1}" width="{bw:.1}" height="{bh:.1}" fill="{color}"><title>{count}</title></rect>"#,
                y = h - pad - bh,
                bw = slot / 2.0 - 2.0
            );
        }
    }
    for (x, label) in [(pad, "0"), (w / 2.0, "0.5"), (w - pad, "1")] {
        let _ = write!(s, r#"<text x="{x}" y="{y}" font-size="11" text-anchor="middle">{label}</text>"#, y = h - 8.0);
    }
    s.push_str("</svg>");
    s
}

/// Renders the comparison report from the recorded artifacts only.
pub fn render(l: &Layout, record: &RunRecord) -> Result<String> {
    let eval = EvaluationReport::load(&l.metrics())?;
    let stats: ConversionStats = serde_json::from_str(
        &std::fs::read_to_string(l.converted_stats()).with_context(|| format!("reading {}", l.converted_stats().display()))?,
    )?;
    let config: toml::Table = toml::from_str(&record.config).unwrap_or_default();
    let setting = |k: &str| config.get(k).map(|v| v.to_string()).unwrap_or_default();

    let mut h = String::new();
    h.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>Anomaly detector comparison</title>\n");
    h.push_str("<style>body{font-family:sans-serif;max-width:60em;margin:2em auto;color:#222}table{border-collapse:collapse}td,th{border:1px solid #bbb;padding:.3em .7em;text-align:right}th{background:#eee}td:first-child{text-align:left}img{margin:2px}</style>\n</head>\n<body>\n");
    h.push_str("<h1>Anomaly detector comparison: rendered vs translated training anomalies</h1>\n");
    let _ = writeln!(h, "<p>Preset {}, root seed {}.</p>", esc(&setting("preset")), esc(&setting("seed")));
    let _ = writeln!(
        h,
        "<p><strong>Test set substitution.</strong> The held-out anomalies are {} procedurally textured pseudo-real renders, not photographs; they stand in for real anomaly images so that ROC statistics are defined. Normal test images: {}.</p>",
        eval.n_anomaly, eval.n_normal
    );

    h.push_str("<h2>Detection</h2>\n<table id=\"auc\">\n<tr><th>model</th><th>training anomalies</th><th>ROC-AUC</th><th>TP</th><th>FP</th><th>TN</th><th>FN</th><th>accuracy @ 0.5</th></tr>\n");
    for (v, m) in &eval.variants {
        let c = &m.confusion;
        let acc = (c.tp + c.tn) as f64 / m.n.max(1) as f64;
        let source = match v {
            Variant::Cg => "rendered (cg_anomaly)",
            Variant::Gcgan => "translated (converted_anomaly)",
        };
        let auc = m.auc.map_or_else(|| "n/a".to_string(), |a| a.to_string());
        let _ = writeln!(
            h,
            "<tr class=\"model\"><td>{}</td><td>{source}</td><td class=\"auc\">{auc}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{acc:.3}</td></tr>",
            v.name(),
            c.tp,
            c.fp,
            c.tn,
            c.fn_
        );
    }
    h.push_str("</table>\n");

    h.push_str("<h2>Score distributions</h2>\n<p>Anomaly probability on the test set, 10 bins; blue normal, red anomaly.</p>\n");
    for (v, m) in &eval.variants {
        let _ = writeln!(h, "<h3>{}</h3>\n{}", v.name(), histogram_svg(m));
    }

    h.push_str("<h2>Translation</h2>\n<table>\n");
    let _ = writeln!(
        h,
        "<tr><th>quantity</th><th>value</th></tr>\n<tr><td>histogram distance, raw renders to pseudo-real reference</td><td>{:.4}</td></tr>\n<tr><td>histogram distance, translated to pseudo-real reference</td><td>{:.4}</td></tr>",
        stats.raw_cg_hist_distance, stats.converted_hist_distance
    );
    let _ = writeln!(
        h,
        "<tr><td>lever angle within {}&deg; of source</td><td>{} / {} ({:.1}%)</td></tr>\n<tr><td>median angle error (deg)</td><td>{}</td></tr>\n<tr><td>outputs without a measurable lever</td><td>{}</td></tr>\n</table>",
        stats.tolerance_deg,
        stats.preserved,
        stats.n,
        100.0 * stats.preserved_fraction,
        opt(stats.median_error_deg, 2),
        stats.undetected
    );

    h.push_str("<h2>Grad-CAM focus</h2>\n");
    if let Some(f) = &eval.focus {
        let _ = writeln!(
            h,
            "<p>Share of anomaly-class saliency inside the lever mask, over {} test anomalies. A uniform map would score the lever area fraction, median {}.</p>\n<table>\n<tr><th>model</th><th>median focus fraction</th></tr>",
            f.image_ids.len(),
            opt(f.median_lever_area_fraction, 4)
        );
        for (v, s) in &f.variants {
            let _ = writeln!(h, "<tr><td>{}</td><td>{}</td></tr>", v.name(), opt(s.median_focus_fraction, 4));
        }
        h.push_str("</table>\n<table>\n<tr><th>image</th>");
        for v in f.variants.keys() {
            let _ = write!(h, "<th>{}</th>", v.name());
        }
        h.push_str("</tr>\n");
        for id in f.image_ids.iter().take(6) {
            let _ = write!(h, "<tr><td>{}</td>", esc(id));
            for v in f.variants.keys() {
                let _ = write!(
                    h,
                    "<td><img src=\"../explain/overlays/{}.{}.gradcam.png\" width=\"128\" alt=\"\"></td>",
                    esc(id),
                    v.name()
                );
            }
            h.push_str("</tr>\n");
        }
        h.push_str("</table>\n");
    } else {
        h.push_str("<p>Not available.</p>\n");
    }

    h.push_str("<h2>Stages</h2>\n<table>\n<tr><th>stage</th><th>artifacts</th><th>config sha256</th></tr>\n");
    for stage in crate::stages::Stage::ALL[..8].iter().map(|s| s.name()) {
        if let Some(e) = record.latest(&stage) {
            let _ = writeln!(h, "<tr><td>{stage}</td><td>{}</td><td><code>{}</code></td></tr>", e.artifacts.len(), &e.config_sha256[..12]);
        }
    }
    h.push_str("</table>\n</body>\n</html>\n");
    Ok(h)
}

pub fn write_report(l: &Layout, record: &RunRecord) -> Result<PathBuf> {
    let html = render(l, record)?;
    let path = l.report();
    std::fs::create_dir_all(path.parent().unwrap())?;
    std::fs::write(&path, html)?;
    Ok(path)
}
