//! RMSE and MAE over prediction records.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::data::TrafficKind;
use crate::error::{Error, Result};

/// One prediction for one station and hour, in raw count space.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRecord {
    pub station: u64,
    pub hour: i64,
    pub actual: f64,
    pub predicted: f64,
}

impl PredictionRecord {
    pub fn error(&self) -> f64 {
        self.actual - self.predicted
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub variant: String,
    pub target: TrafficKind,
    pub rmse: f64,
    /// Mean of `|actual − predicted|`.
    pub mae: f64,
    /// RMSE per station, ascending by id.
    pub per_station: Vec<(u64, f64)>,
    pub stations: usize,
    pub records: usize,
}

/// `sqrt(Σe²/M)`
pub fn rmse(errors: &[f64]) -> f64 {
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

/// `Σ|e|/M`
pub fn mae(errors: &[f64]) -> f64 {
    errors.iter().map(|e| e.abs()).sum::<f64>() / errors.len() as f64
}

pub fn compute_metrics(records: &[PredictionRecord], variant: &str, target: TrafficKind) -> Result<MetricsReport> {
    if records.is_empty() {
        return Err(Error::Data("no prediction records to score".into()));
    }
    let errors: Vec<f64> = records.iter().map(PredictionRecord::error).collect();
    let mut by_station: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in records {
        by_station.entry(r.station).or_default().push(r.error());
    }
    let per_station: Vec<(u64, f64)> = by_station.iter().map(|(&s, e)| (s, rmse(e))).collect();
    Ok(MetricsReport {
        variant: variant.to_string(),
        target,
        rmse: rmse(&errors),
        mae: mae(&errors),
        stations: per_station.len(),
        per_station,
        records: records.len(),
    })
}

impl MetricsReport {
    /// `RMSE ≥ |Σe|/M`, which holds for any input by Cauchy-Schwarz.
    pub fn satisfies_lower_bound(&self, records: &[PredictionRecord]) -> bool {
        let m = records.len() as f64;
        let total: f64 = records.iter().map(PredictionRecord::error).sum();
        self.rmse >= 0.0 && self.rmse * (1.0 + 1e-12) >= total.abs() / m
    }

    /// JSON text with the fields in a fixed order.
    pub fn to_json(&self) -> String {
        let mut s = String::from("{\n");
        let _ = writeln!(s, "  \"variant\": \"{}\",", self.variant);
        let _ = writeln!(s, "  \"target\": \"{}\",", self.target);
        let _ = writeln!(s, "  \"rmse\": {},", self.rmse);
        let _ = writeln!(s, "  \"mae\": {},", self.mae);
        let _ = writeln!(s, "  \"stations\": {},", self.stations);
        let _ = writeln!(s, "  \"records\": {},", self.records);
        s.push_str("  \"per_station_rmse\": {");
        for (i, (id, v)) in self.per_station.iter().enumerate() {
            let sep = if i == 0 { "\n" } else { ",\n" };
            let _ = write!(s, "{sep}    \"{id}\": {v}");
        }
        s.push_str(if self.per_station.is_empty() { "}\n" } else { "\n  }\n" });
        s.push_str("}\n");
        s
    }
}
