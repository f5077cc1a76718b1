//! CSV comparison tables: one row per (image, rate, method).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowLabel {
    pub image: String,
    pub rate: f64,
    pub method: String,
}

impl RowLabel {
    pub fn new(image: impl Into<String>, rate: f64, method: impl Into<String>) -> Self {
        Self {
            image: image.into(),
            rate,
            method: method.into(),
        }
    }
}

fn db(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.4}")
    }
}

/// Header `image,rate,method,psnr_db,ssim` followed by rows in input order.
pub fn compare_table(reports: &[MetricReport], labels: &[RowLabel]) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::Param("no reports to tabulate".into()));
    }
    if reports.len() != labels.len() {
        return Err(Error::Param(format!(
            "{} reports but {} labels",
            reports.len(),
            labels.len()
        )));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(["image", "rate", "method", "psnr_db", "ssim"]).map_err(csv_err)?;
    for (r, l) in reports.iter().zip(labels) {
        w.write_record([
            l.image.clone(),
            format!("{}", l.rate),
            l.method.clone(),
            db(r.psnr_db),
            format!("{:.4}", r.ssim),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rep(p: f64) -> MetricReport {
        MetricReport {
            psnr_db: p,
            ssim: 0.5,
            bits_per_dim: None,
        }
    }

    #[test]
    fn single_row() {
        let t = compare_table(&[rep(20.0)], &[RowLabel::new("a", 0.25, "ours")]).unwrap();
        assert_eq!(t, "image,rate,method,psnr_db,ssim\na,0.25,ours,20.0000,0.5000\n");
    }

    #[test]
    fn grid_keeps_order() {
        let mut reps = Vec::new();
        let mut labels = Vec::new();
        for rate in [0.1, 0.25] {
            for m in ["ours", "least_norm"] {
                reps.push(rep(f64::INFINITY));
                labels.push(RowLabel::new("img", rate, m));
            }
        }
        let t = compare_table(&reps, &labels).unwrap();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1], "img,0.1,ours,inf,0.5000");
        assert_eq!(lines[4], "img,0.25,least_norm,inf,0.5000");
    }

    #[test]
    fn errors() {
        assert!(matches!(compare_table(&[], &[]), Err(Error::Param(_))));
        assert!(compare_table(&[rep(1.0)], &[]).is_err());
    }
}
