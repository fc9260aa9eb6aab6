//! Model checkpoints: parameters, configuration and optimizer state in one
//! container file.
//!
//! Entry names: `config.*` scalars for the model configuration, one entry
//! per parameter under its own name, `<name>.m1` / `<name>.m2` for the Adam
//! moments, `adam.step`, `checkpoint.epoch` and `registry.ids` for the
//! station axis the model was trained on.

use std::path::Path;

use crate::attention::ContextMode;
use crate::container::{Container, NamedArray};
use crate::data::TrafficKind;
use crate::error::{Error, Result};
use crate::model::{Forecaster, ModelConfig};
use crate::optim::{AdamConfig, AdamState};
use crate::rnn::CellKind;

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Forecaster,
    pub adam: Option<AdamState>,
    pub station_ids: Vec<u64>,
    pub epoch: usize,
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn write_config(c: &mut Container, m: &ModelConfig) {
    let entries = [
        ("stations", m.stations as f64),
        ("features_per_station", m.features_per_station as f64),
        ("encoder_steps", m.encoder_steps as f64),
        ("decoder_steps", m.decoder_steps as f64),
        ("hidden", m.hidden as f64),
        ("layers", m.layers as f64),
        ("gru", flag(m.cell == CellKind::Gru)),
        ("attention", flag(m.attention)),
        ("dropoff", flag(m.target == TrafficKind::Dropoff)),
        ("dropout", m.dropout),
        ("spatial_width", m.spatial_width as f64),
        ("temporal_width", m.temporal_width as f64),
        ("hidden_only_context", flag(m.context == ContextMode::HiddenOnly)),
        ("forget_bias", m.forget_bias),
    ];
    for (k, v) in entries {
        c.push(NamedArray::scalar(format!("config.{k}"), v));
    }
}

fn read_config(c: &Container) -> Result<ModelConfig> {
    let get = |k: &str| c.scalar(&format!("config.{k}"));
    let count = |k: &str| get(k).map(|v| v as usize);
    let on = |k: &str| get(k).map(|v| v != 0.0);
    let m = ModelConfig {
        stations: count("stations")?,
        features_per_station: count("features_per_station")?,
        encoder_steps: count("encoder_steps")?,
        decoder_steps: count("decoder_steps")?,
        hidden: count("hidden")?,
        layers: count("layers")?,
        cell: if on("gru")? { CellKind::Gru } else { CellKind::Lstm },
        attention: on("attention")?,
        target: if on("dropoff")? { TrafficKind::Dropoff } else { TrafficKind::Pickup },
        dropout: get("dropout")?,
        spatial_width: count("spatial_width")?,
        temporal_width: count("temporal_width")?,
        context: if on("hidden_only_context")? {
            ContextMode::HiddenOnly
        } else {
            ContextMode::Concatenated
        },
        forget_bias: get("forget_bias")?,
    };
    m.validate()?;
    Ok(m)
}

impl Checkpoint {
    pub fn to_container(model: &Forecaster, adam: Option<&AdamState>, station_ids: &[u64], epoch: usize) -> Container {
        let mut c = Container::new();
        write_config(&mut c, &model.config);
        c.push(NamedArray::scalar("checkpoint.epoch", epoch as f64));
        c.push(NamedArray::vector(
            "registry.ids",
            station_ids.iter().map(|&id| id as f64).collect(),
        ));
        for (_, p) in model.params.iter() {
            c.push(NamedArray::matrix(p.name.clone(), &p.value));
        }
        if let Some(a) = adam {
            c.push(NamedArray::scalar("adam.step", a.step as f64));
            c.push(NamedArray::vector(
                "adam.config",
                vec![a.config.beta1, a.config.beta2, a.config.eps],
            ));
            for (((_, p), m1), m2) in model.params.iter().zip(&a.first).zip(&a.second) {
                c.push(NamedArray::matrix(format!("{}.m1", p.name), m1));
                c.push(NamedArray::matrix(format!("{}.m2", p.name), m2));
            }
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let config = read_config(c)?;
        let mut model = Forecaster::new(config, 0)?;
        let names: Vec<String> = model.params.iter().map(|(_, p)| p.name.clone()).collect();
        let values = names
            .iter()
            .map(|n| Ok((n.as_str(), c.require(n)?.to_matrix()?)))
            .collect::<Result<Vec<_>>>()?;
        model.load_values(values)?;
        let adam = match c.get("adam.step") {
            None => None,
            Some(step) => {
                let cfg = c.require("adam.config")?;
                let [beta1, beta2, eps] = cfg.data[..] else {
                    return Err(Error::Format("adam.config must hold beta1, beta2, eps".into()));
                };
                let mut a = AdamState::new(&model.params, AdamConfig { beta1, beta2, eps });
                a.step = step.data[0] as u64;
                for (i, n) in names.iter().enumerate() {
                    a.first[i] = c.require(&format!("{n}.m1"))?.to_matrix()?;
                    a.second[i] = c.require(&format!("{n}.m2"))?.to_matrix()?;
                    if a.first[i].shape() != model.params.get(model.params.id(n).expect("own name")).value.shape()
                        || a.second[i].shape() != a.first[i].shape()
                    {
                        return Err(Error::Format(format!("adam moments of {n} have the wrong shape")));
                    }
                }
                Some(a)
            }
        };
        let station_ids: Vec<u64> = c.require("registry.ids")?.data.iter().map(|&v| v as u64).collect();
        if station_ids.len() != model.config.stations {
            return Err(Error::Format("registry.ids disagrees with config.stations".into()));
        }
        Ok(Checkpoint {
            model,
            adam,
            station_ids,
            epoch: c.scalar("checkpoint.epoch")? as usize,
        })
    }

    pub fn save(path: &Path, model: &Forecaster, adam: Option<&AdamState>, station_ids: &[u64], epoch: usize) -> Result<()> {
        Self::to_container(model, adam, station_ids, epoch).write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::read(path)?)
    }
}
