use std::io::Write;

use serde::{Deserialize, Serialize};

use super::PixelStats;
use crate::error::Result;

pub const EVAL_SCHEMA: &str = "depthbench-eval/1";

/// How per-pixel errors are combined across a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Every valid pixel of every image weighs the same.
    #[default]
    PixelPooled,
    /// Metrics are computed per image, then averaged.
    PerImageMean,
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::PixelPooled => "pixel-pooled",
            Aggregation::PerImageMean => "per-image-mean",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub image_id: String,
    pub rmse: f64,
    pub si_rmse: f64,
    pub log10: f64,
    pub rel: f64,
    pub n_valid: usize,
}

impl ImageMetrics {
    pub(crate) fn from_stats(image_id: &str, s: &PixelStats) -> Self {
        Self {
            image_id: image_id.to_string(),
            rmse: s.rmse(),
            si_rmse: s.si_rmse(),
            log10: s.log10(),
            rel: s.rel(),
            n_valid: s.n,
        }
    }
}

/// Aggregate and per-image fidelity metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub aggregation: Aggregation,
    pub rmse: f64,
    pub si_rmse: f64,
    pub log10: f64,
    pub rel: f64,
    pub n_valid: usize,
    pub clamped_pixels: usize,
    pub per_image: Vec<ImageMetrics>,
}

/// Row id used for the aggregate line of the CSV form.
pub const AGGREGATE_ROW_ID: &str = "__aggregate__";

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// CSV form: a `#` schema line, then `image_id,rmse,si_rmse,log10,rel,n_valid`
    /// rows, one per image, closed by an [`AGGREGATE_ROW_ID`] row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# schema={} aggregation={} clamped_pixels={}",
            self.schema,
            self.aggregation.as_str(),
            self.clamped_pixels
        )
        .map_err(|e| crate::Error::io("<csv>", e))?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["image_id", "rmse", "si_rmse", "log10", "rel", "n_valid"])?;
        let aggregate = ImageMetrics {
            image_id: AGGREGATE_ROW_ID.to_string(),
            rmse: self.rmse,
            si_rmse: self.si_rmse,
            log10: self.log10,
            rel: self.rel,
            n_valid: self.n_valid,
        };
        for m in self.per_image.iter().chain(std::iter::once(&aggregate)) {
            w.write_record([
                m.image_id.clone(),
                m.rmse.to_string(),
                m.si_rmse.to_string(),
                m.log10.to_string(),
                m.rel.to_string(),
                m.n_valid.to_string(),
            ])?;
        }
        w.flush().map_err(|e| crate::Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}
