//! Min-max scalings fitted on the training months and frozen afterwards.

use crate::container::{Container, NamedArray};
use crate::error::Result;

pub const PRECIPITATION_UPPER: f64 = 10.0;
pub const COORDINATE_UPPER: f64 = 100.0;

/// `upper · (x − min) / (max − min)`; a constant feature maps to 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
    pub upper: f64,
}

impl MinMax {
    /// Fit on `values`. Logs a warning when the feature is constant.
    pub fn fit(name: &str, values: impl IntoIterator<Item = f64>, upper: f64) -> Self {
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            min = min.min(v);
            max = max.max(v);
        }
        if !min.is_finite() {
            (min, max) = (0.0, 0.0);
        }
        if max == min {
            log::warn!("{name} is constant ({min}) over the fitting range; scaled to 0");
        }
        MinMax { min, max, upper }
    }

    pub fn is_degenerate(&self) -> bool {
        self.max == self.min
    }

    pub fn apply(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            0.0
        } else {
            self.upper * (x - self.min) / (self.max - self.min)
        }
    }

    fn entry(&self, name: &str) -> NamedArray {
        NamedArray::vector(name, vec![self.min, self.max, self.upper])
    }

    fn read(c: &Container, name: &str) -> Result<Self> {
        let e = c.require(name)?;
        match e.data.as_slice() {
            [min, max, upper] => Ok(MinMax { min: *min, max: *max, upper: *upper }),
            _ => Err(crate::error::Error::Format(format!("{name} must hold min, max, upper"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scaling {
    pub precipitation: MinMax,
    pub longitude: MinMax,
    pub latitude: MinMax,
}

impl Scaling {
    pub fn write_entries(&self, c: &mut Container) {
        c.push(self.precipitation.entry("scaling.precipitation"));
        c.push(self.longitude.entry("scaling.longitude"));
        c.push(self.latitude.entry("scaling.latitude"));
    }

    pub fn read_entries(c: &Container) -> Result<Self> {
        Ok(Scaling {
            precipitation: MinMax::read(c, "scaling.precipitation")?,
            longitude: MinMax::read(c, "scaling.longitude")?,
            latitude: MinMax::read(c, "scaling.latitude")?,
        })
    }
}
