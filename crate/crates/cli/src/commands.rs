use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context};
use bruno::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use bruno::config::Config;
use bruno::data::{idx, DataKind, Dataset};
use bruno::flow::PreprocessConfig;
use bruno::image::emit_grid;
use bruno::model::{BrunoModel, ModelConfig, ModelError, Trainer};
use bruno::selftest::run_selftest;
use bruno::tasks::{
    anomaly_score, compare_modes, discriminative_finetune, few_shot_eval, latent_analysis, FinetuneConfig,
};
use ndarray::{concatenate, Array2, Axis};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{apply_overrides, eval_dataset, load_dataset, read_config, usage};
use crate::{Cli, CliError, Command};

pub fn run(cli: Cli) -> Result<(), CliError> {
    let seed = cli.seed;
    match cli.command {
        Command::Train {
            config,
            out,
            resume,
            overrides,
        } => train(resolve_config(config.as_deref(), &overrides, seed)?, &out, resume.as_deref()),
        Command::Compare { config, out, overrides } => {
            compare(resolve_config(config.as_deref(), &overrides, seed)?, &out)
        }
        Command::Sample {
            checkpoint,
            data,
            class,
            context,
            count,
            cols,
            out,
        } => {
            let model = load_model(&checkpoint)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
            let observed = if context > 0 {
                let class = class.ok_or_else(|| usage("--context needs --class"))?;
                let dataset = eval_dataset(&data, &model)?;
                let picks = pick_from_class(&dataset, class, context, &mut rng)?;
                dataset.prepare(&picks, model.flow().preprocess(), &mut rng)?
            } else {
                Array2::zeros((0, model.dim()))
            };
            let samples = model.sample_conditional(&observed, count, &mut rng)?;
            write_samples(&observed, &samples, cols, &out)
        }
        Command::Fewshot {
            checkpoint,
            data,
            n,
            k,
            episodes,
        } => {
            let model = load_model(&checkpoint)?;
            let dataset = eval_dataset(&data, &model)?;
            let r = few_shot_eval(&model, &dataset, n, k, episodes, seed.unwrap_or(0))?;
            println!(
                "accuracy {:.4} ± {:.4} ({n}-shot {k}-way, {} episodes)",
                r.accuracy, r.ci95, r.episodes
            );
            Ok(())
        }
        Command::Finetune {
            checkpoint,
            data,
            n,
            k,
            iterations,
            episodes_per_step,
            learning_rate,
            out,
        } => {
            let model = load_model(&checkpoint)?;
            let dataset = eval_dataset(&data, &model)?;
            let config = FinetuneConfig {
                iterations,
                episodes_per_step,
                learning_rate,
                seed: seed.unwrap_or(0),
                ..FinetuneConfig::default()
            };
            let (tuned, trace) = discriminative_finetune(&model, &dataset, n, k, &config)?;
            save_checkpoint(&Checkpoint::from_model(tuned), &out)?;
            fs::write(out.with_extension("csv"), trace_csv(&trace))?;
            if let Some(last) = trace.last() {
                println!("final episode loss {last}");
            }
            Ok(())
        }
        Command::Anomaly {
            checkpoint,
            data,
            stream,
            class,
            length,
            outlier_class,
            outlier_at,
            threshold,
            out,
        } => {
            let model = load_model(&checkpoint)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(0));
            let rows = match stream {
                Some(path) => {
                    let arr = idx::read_idx(&path).with_context(|| format!("reading {}", path.display()))?;
                    let count = arr.dims.first().copied().unwrap_or(0);
                    let items = arr.data.iter().map(|&b| b as f64).collect();
                    let dataset = Dataset::new(model.dim(), DataKind::Pixels { levels: 256 }, items, vec![0; count])?;
                    let all: Vec<usize> = (0..dataset.len()).collect();
                    dataset.prepare(&all, model.flow().preprocess(), &mut rng)?
                }
                None => {
                    let dataset = eval_dataset(&data, &model)?;
                    let mut picks = pick_from_class(&dataset, class, length, &mut rng)?;
                    if let Some(oc) = outlier_class {
                        let at = match outlier_at {
                            Some(at) if at <= length => at,
                            Some(at) => return Err(usage(format!("--outlier-at {at} exceeds --length {length}"))),
                            None => rng.random_range(6.min(length)..=length),
                        };
                        picks.insert(at, pick_from_class(&dataset, oc, 1, &mut rng)?[0]);
                        println!("planted item at position {at}");
                    }
                    dataset.prepare(&picks, model.flow().preprocess(), &mut rng)?
                }
            };
            let mut trace = anomaly_score(&model, &rows)?;
            if let Some(t) = threshold {
                trace = trace.with_threshold(t);
            }
            fs::write(&out, trace.to_csv())?;
            if let Some(i) = trace.argmin_from(1) {
                println!("lowest score {} at position {i}", trace.scores[i]);
            }
            Ok(())
        }
        Command::Analyze { checkpoint, out } => {
            let report = latent_analysis(&load_model(&checkpoint)?);
            match out {
                Some(dir) => {
                    fs::create_dir_all(&dir)?;
                    fs::write(dir.join("dims.csv"), report.rows_csv())?;
                    fs::write(dir.join("exceedance.csv"), report.exceedance_csv())?;
                }
                None => print!("{}\n{}", report.rows_csv(), report.exceedance_csv()),
            }
            Ok(())
        }
        Command::Selftest => {
            let checks = run_selftest(seed.unwrap_or(0));
            for c in &checks {
                println!("{} {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(CliError::Runtime(anyhow!("{failed} self-test check(s) failed")));
            }
            Ok(())
        }
    }
}

fn resolve_config(path: Option<&Path>, overrides: &[String], seed: Option<u64>) -> Result<Config, CliError> {
    let mut config = read_config(path)?;
    apply_overrides(&mut config, overrides)?;
    if let Some(seed) = seed {
        config.train.seed = seed;
    }
    config.train.validate().map_err(usage)?;
    Ok(config)
}

/// The configured architecture sized and preprocessed for `dataset`.
fn model_config(config: &Config, dataset: &Dataset) -> ModelConfig {
    let preprocess = match dataset.kind() {
        DataKind::Pixels { levels } => PreprocessConfig {
            num_levels: levels,
            logit: true,
            ..config.model.preprocess
        },
        DataKind::Real => PreprocessConfig::real(),
    };
    ModelConfig {
        dim: dataset.dim(),
        preprocess,
        ..config.model
    }
}

fn model_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

fn load_model(path: &Path) -> Result<BrunoModel, CliError> {
    Ok(load_checkpoint(path)
        .with_context(|| format!("loading {}", path.display()))?
        .model)
}

fn trace_csv(trace: &[f64]) -> String {
    let mut out = String::from("iteration,loss\n");
    for (i, l) in trace.iter().enumerate() {
        out.push_str(&format!("{},{l}\n", i + 1));
    }
    out
}

fn pick_from_class<R: Rng>(dataset: &Dataset, class: usize, count: usize, rng: &mut R) -> Result<Vec<usize>, CliError> {
    if class >= dataset.num_classes() {
        return Err(usage(format!("class {class} does not exist ({} classes)", dataset.num_classes())));
    }
    let items = dataset.class_items(class);
    if items.len() < count {
        return Err(usage(format!("class {class} has {} items, {count} requested", items.len())));
    }
    Ok(index::sample(rng, items.len(), count).into_iter().map(|i| items[i]).collect())
}

fn train(config: Config, out: &Path, resume: Option<&Path>) -> Result<(), CliError> {
    let dataset = load_dataset(&config.data, config.model.dim)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    fs::write(out.join("config.txt"), config.to_text())?;
    let tc = config.train;
    let mut trainer = match resume {
        Some(path) => {
            let ckpt = load_checkpoint(path).with_context(|| format!("loading {}", path.display()))?;
            if ckpt.model.dim() != dataset.dim() {
                return Err(usage("checkpoint and data dimensions differ"));
            }
            Trainer::resume(ckpt.into_trainer_state(tc.rms_decay, tc.rms_eps, tc.seed), tc)?
        }
        None => {
            let model = BrunoModel::new(model_config(&config, &dataset), &mut model_rng(tc.seed))?;
            Trainer::new(model, tc, &dataset)?
        }
    };
    while trainer.state().iteration < tc.iterations {
        match trainer.step(&dataset) {
            Ok(_) => {}
            Err(ModelError::Diverged { iteration, trace }) => {
                fs::write(out.join("loss.csv"), trace_csv(&trace))?;
                return Err(CliError::Runtime(anyhow!("training diverged at iteration {iteration}")));
            }
            Err(e) => return Err(e.into()),
        }
        let it = trainer.state().iteration;
        if config.checkpoint_every > 0 && it % config.checkpoint_every == 0 && it < tc.iterations {
            save_checkpoint(&Checkpoint::from_trainer(trainer.state()), &out.join(format!("model_{it}.ckpt")))?;
        }
    }
    let state = trainer.state();
    save_checkpoint(&Checkpoint::from_trainer(state), &out.join("model.ckpt"))?;
    fs::write(out.join("loss.csv"), trace_csv(&state.trace))?;
    match state.trace.last() {
        Some(loss) => println!("trained {} iterations, final loss {loss}", state.iteration),
        None => println!("wrote initial checkpoint"),
    }
    Ok(())
}

fn compare(config: Config, out: &Path) -> Result<(), CliError> {
    let dataset = load_dataset(&config.data, config.model.dim)?;
    let result = compare_modes(model_config(&config, &dataset), config.train, &dataset)?;
    fs::create_dir_all(out)?;
    for (name, outcome) in [("gp", &result.gp), ("tp", &result.tp)] {
        fs::write(out.join(format!("{name}_loss.csv")), outcome.to_csv())?;
        match outcome.diverged_at {
            Some(it) => println!("{name}: diverged at iteration {it}"),
            None => println!("{name}: final loss {}", outcome.trace.last().copied().unwrap_or(f64::NAN)),
        }
    }
    Ok(())
}

fn write_samples(observed: &Array2<f64>, samples: &Array2<f64>, cols: usize, out: &Path) -> Result<(), CliError> {
    let channels = match out.extension().and_then(|e| e.to_str()) {
        Some("pgm") => 1,
        Some("ppm") => 3,
        _ => {
            let mut text = (0..samples.ncols()).map(|d| format!("x{d}")).collect::<Vec<_>>().join(",");
            text.push('\n');
            for row in samples.outer_iter() {
                text.push_str(&row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
                text.push('\n');
            }
            fs::write(out, text)?;
            return Ok(());
        }
    };
    if cols == 0 {
        return Err(usage("--cols must be positive"));
    }
    // Conditioning items fill the first rows, samples start on a fresh row.
    let context_rows = observed.nrows().div_ceil(cols);
    let sample_rows = samples.nrows().div_ceil(cols);
    let blank = |n: usize| Array2::zeros((n, samples.ncols()));
    let tiles = concatenate(
        Axis(0),
        &[
            observed.view(),
            blank(context_rows * cols - observed.nrows()).view(),
            samples.view(),
            blank(sample_rows * cols - samples.nrows()).view(),
        ],
    )
    .map_err(|e| anyhow!(e))?;
    emit_grid(&tiles, context_rows + sample_rows, cols, channels, out).map_err(usage)?;
    Ok(())
}
