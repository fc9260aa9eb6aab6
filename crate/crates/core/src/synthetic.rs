//! Deterministic synthetic data for tests, demos and smoke runs.

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::frames::{FrameSource, WindowSet};
use crate::data::registry::{Station, StationRegistry};
use crate::data::traffic::HourAxis;
use crate::data::{hour_index, parse_timestamp, Dataset};
use crate::error::Result;
use crate::tensor::Matrix;

/// Daily sinusoids with a phase per station plus a planted weather term.
///
/// `traffic_i(h) = 10 + 5·sin(2πh/24 + φ_i) + 2·w(h)` with
/// `w(h) = sin(2πh/30)`. Frames carry the traffic, `w` and the station's
/// normalized index, so `s = 3`; targets equal the traffic.
pub fn sinusoid(stations: usize, hours: usize, seed: u64) -> FrameSource {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phase: Vec<f64> = (0..stations)
        .map(|i| TAU * i as f64 / stations as f64 + rng.gen_range(-0.2..0.2))
        .collect();
    let w = |h: usize| (TAU * h as f64 / 30.0).sin();
    let traffic = Matrix::from_fn(hours, stations, |h, i| {
        10.0 + 5.0 * (TAU * h as f64 / 24.0 + phase[i]).sin() + 2.0 * w(h)
    });
    let hourly = Matrix::from_fn(hours, 1, |h, _| w(h));
    let statics = Matrix::from_fn(stations, 1, |i, _| i as f64 / stations as f64);
    FrameSource::new(traffic.clone(), hourly, statics, traffic).expect("consistent shapes")
}

/// Stations whose features drive the targets in [`planted`].
pub const RELEVANT_STATIONS: [usize; 2] = [0, 1];

/// Standard deviation of the irrelevant stations' channels in [`planted`].
pub const DISTRACTOR_SCALE: f64 = 3.0;

/// Only the first two stations' features predict the targets.
///
/// Each station has one feature, its traffic channel `x_i`. The relevant
/// stations' channels are smooth AR(1) series; the others are white noise
/// with standard deviation [`DISTRACTOR_SCALE`]. Station `j`'s target at hour `h` is
/// `5 + (1 + j/5)·x₀(h−1) + (1 − j/5)·x₁(h−1)`.
pub fn planted(stations: usize, hours: usize, seed: u64) -> FrameSource {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rho: f64 = 0.9;
    let innovation = (1.0 - rho * rho).sqrt();
    // uniform on [-√3, √3] has unit variance
    let mut noise = move || rng.gen_range(-3f64.sqrt()..3f64.sqrt());
    let mut x = Matrix::zeros(hours, stations);
    let mut state = vec![0.0; stations];
    for h in 0..hours {
        for (i, s) in state.iter_mut().enumerate() {
            *s = if RELEVANT_STATIONS.contains(&i) {
                rho * *s + innovation * noise()
            } else {
                DISTRACTOR_SCALE * noise()
            };
            x.set(h, i, *s);
        }
    }
    let targets = Matrix::from_fn(hours, stations, |h, j| {
        if h == 0 {
            return 5.0;
        }
        let a = 1.0 + j as f64 / 5.0;
        let b = 1.0 - j as f64 / 5.0;
        5.0 + a * x.get(h - 1, 0) + b * x.get(h - 1, 1)
    });
    FrameSource::new(x, Matrix::zeros(hours, 0), Matrix::zeros(stations, 0), targets).expect("consistent shapes")
}

/// Every window of a source, split chronologically: the first
/// `1 − test_fraction` of the windows train, the rest test.
pub fn chronological_split(
    source: FrameSource,
    encoder_steps: usize,
    decoder_steps: usize,
    test_fraction: f64,
) -> Result<(WindowSet, WindowSet)> {
    let span = encoder_steps + decoder_steps;
    let all: Vec<usize> = (0..=source.hours().saturating_sub(span)).collect();
    let n_test = (all.len() as f64 * test_fraction).floor() as usize;
    let (train, test) = all.split_at(all.len() - n_test);
    let src = Arc::new(source);
    Ok((
        WindowSet::new(src.clone(), train.to_vec(), encoder_steps, decoder_steps)?,
        WindowSet::new(src, test.to_vec(), encoder_steps, decoder_steps)?,
    ))
}

/// A complete processed dataset: `days` days of June 2019 for training and
/// of October 2019 for testing, station ids `100, 101, …`, integer counts
/// from daily sinusoids, smooth weather and a few POIs.
pub fn dataset(stations: usize, days: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = |s: &str| hour_index(&parse_timestamp(s).expect("literal timestamp"));
    let len = days as i64 * 24;
    let (june, october) = (start("2019-06-01 00:00:00"), start("2019-10-01 00:00:00"));
    let hours = HourAxis::new((june..june + len).chain(october..october + len).collect());
    let registry = StationRegistry::new(
        (0..stations)
            .map(|i| {
                let mut poi = [0u32; 13];
                for p in poi.iter_mut() {
                    *p = rng.gen_range(0..4);
                }
                Station {
                    id: 100 + i as u64,
                    lat: 40.70 + 0.01 * i as f64,
                    lon: -74.00 + 0.005 * i as f64,
                    poi,
                }
            })
            .collect(),
    )
    .expect("distinct ids");
    let phase: Vec<f64> = (0..stations).map(|_| rng.gen_range(0.0..TAU)).collect();
    let h = hours.len();
    let axis = hours.hours().to_vec();
    let wave = |r: usize, i: usize, shift: f64| {
        let t = axis[r] as f64;
        (6.0 + 5.0 * (TAU * t / 24.0 + phase[i] + shift).sin()).round().max(0.0)
    };
    let pickups = Matrix::from_fn(h, stations, |r, i| wave(r, i, 0.0));
    let dropoffs = Matrix::from_fn(h, stations, |r, i| wave(r, i, 0.7));
    let weather = Matrix::from_fn(h, 3, |r, j| {
        let t = axis[r] as f64;
        match j {
            0 => 70.0 + 8.0 * (TAU * t / 24.0).sin(),
            1 => 0.1 * (1.0 + (TAU * t / 50.0).sin()),
            _ => 5.0 + 2.0 * (TAU * t / 17.0).cos(),
        }
    });
    Dataset::new(registry, hours, pickups, dropoffs, weather, vec![201906], vec![201910])
        .expect("synthetic dataset is consistent")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinusoid_is_deterministic() {
        assert_eq!(sinusoid(5, 48, 3), sinusoid(5, 48, 3));
        assert_eq!(sinusoid(5, 48, 3).features_per_station(), 3);
    }

    #[test]
    fn planted_targets_follow_relevant_channels() {
        let src = planted(5, 50, 1);
        let x0 = src.traffic.get(9, 0);
        let x1 = src.traffic.get(9, 1);
        assert!((src.targets.get(10, 0) - (5.0 + x0 + x1)).abs() < 1e-12);
    }

    #[test]
    fn synthetic_dataset_has_train_and_test_windows() {
        let ds = dataset(3, 2, 0);
        let plan = ds.window_plan(12, 1, 0.2);
        assert_eq!(plan.train.len() + plan.validation.len(), 36);
        assert_eq!(plan.test.len(), 36);
    }
}
