use std::path::Path;

use anyhow::Context;
use bruno::config::{Config, DataConfig, DataSource};
use bruno::data::{load_idx, synth_exchangeable, DataKind, Dataset};
use bruno::model::BrunoModel;

use crate::{CliError, DataArgs};

pub fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn read_config(path: Option<&Path>) -> Result<Config, CliError> {
    let mut config = Config::default();
    if let Some(path) = path {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        config.apply_text(&text).map_err(usage)?;
    }
    Ok(config)
}

/// Applies `--key value` / `--key=value` pairs.
pub fn apply_overrides(config: &mut Config, args: &[String]) -> Result<(), CliError> {
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let key = arg
            .strip_prefix("--")
            .ok_or_else(|| CliError::Usage(format!("expected `--key value`, got `{arg}`")))?;
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k, v.to_string()),
            None => (
                key,
                it.next()
                    .ok_or_else(|| CliError::Usage(format!("missing value for `--{key}`")))?
                    .clone(),
            ),
        };
        config.set(&key.replace('-', "_"), &value).map_err(usage)?;
    }
    Ok(())
}

pub fn load_dataset(data: &DataConfig, dim: usize) -> Result<Dataset, CliError> {
    let dataset = match data.source {
        DataSource::Synthetic => synth_exchangeable(&data.synth(dim))?,
        DataSource::Idx => {
            if data.images.is_empty() || data.labels.is_empty() {
                return Err(CliError::Usage("IDX data needs both `images` and `labels`".into()));
            }
            load_idx(Path::new(&data.images), Path::new(&data.labels))
                .with_context(|| format!("loading {} / {}", data.images, data.labels))?
        }
    };
    Ok(if data.rotate { dataset.with_rotations()? } else { dataset })
}

/// Dataset for commands that evaluate an existing model.
pub fn eval_dataset(args: &DataArgs, model: &BrunoModel) -> Result<Dataset, CliError> {
    let dim = model.dim();
    let mut data = read_config(args.config.as_deref())?.data;
    if let (Some(images), Some(labels)) = (&args.images, &args.labels) {
        data.source = DataSource::Idx;
        data.images = images.display().to_string();
        data.labels = labels.display().to_string();
    }
    data.rotate |= args.rotate;
    let dataset = load_dataset(&data, dim)?;
    if dataset.dim() != dim {
        return Err(CliError::Usage(format!(
            "data has dimension {}, the model expects {dim}",
            dataset.dim()
        )));
    }
    let pixels = matches!(dataset.kind(), DataKind::Pixels { .. });
    if pixels != model.flow().preprocess().logit {
        let kind = |p: bool| if p { "pixel" } else { "real-valued" };
        return Err(CliError::Usage(format!(
            "data is {}, the model was trained on {} data",
            kind(pixels),
            kind(!pixels)
        )));
    }
    Ok(dataset)
}
