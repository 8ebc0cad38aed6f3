use std::path::{Path, PathBuf};

use devmimic::dataset::{Dataset, Split, Splits};
use devmimic::evaluation::{
    decomposed_table, experiment_table, heatmap, hello_table, hello_world, mimicry, mimicry_table,
    state_space_table, GroundTruth, MimicryRow, SequenceModel, Table,
};
use devmimic::machines::MachineKind;
use devmimic::pipeline::{dataset_path, read_splits, run_experiment, ExperimentSpec};
use devmimic::rnn::{Network, NetworkConfig};
use devmimic::training::{
    continue_to_mimicry, train, train_decomposed, DecomposedModel, StopReason, Trainer,
    TrainingConfig,
};
use devmimic::{Error, Result};
use sha2::{Digest, Sha256};

use crate::args::{Cli, Command, NetArgs, ParallelArgs, OUT_ENV};

const DEFAULT_TARGETS: [&str; 3] = ["115200,8n1", "9600,7e1", "2400,7o2"];

/// `--out`, then the spec file's `output_dir`, then `$DEVMIMIC_OUT`, then `out`.
fn out_dir(flag: Option<PathBuf>, from_spec: Option<PathBuf>) -> PathBuf {
    flag.or(from_spec)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Runs `f` on the calling thread, on a pool of `workers` threads, or on
/// the global pool.
fn with_parallelism<T: Send>(p: &ParallelArgs, f: impl FnOnce(bool) -> T + Send) -> Result<T> {
    match (p.serial, p.workers) {
        (true, _) => Ok(f(true)),
        (false, Some(0)) => Err(Error::Config("--workers must be at least 1".into())),
        (false, Some(n)) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(e.to_string()))?;
            Ok(pool.install(|| f(false)))
        }
        (false, None) => Ok(f(false)),
    }
}

fn network_config(kind: MachineKind, seed: u64, net: &NetArgs) -> NetworkConfig {
    let mut c = NetworkConfig::new(kind.input_width(), kind.output_width(), seed);
    if let Some(w) = net.hidden_width {
        c.hidden_width = w;
    }
    if let Some(l) = net.hidden_layers {
        c.hidden_layers = l;
    }
    c.bptt_window = net.bptt_window;
    c
}

fn load_model(spec: &str, kind: MachineKind) -> Result<Box<dyn SequenceModel>> {
    if spec == "ground-truth" {
        return Ok(Box::new(GroundTruth(kind)));
    }
    let path = Path::new(spec);
    if path.is_dir() {
        return Ok(Box::new(DecomposedModel::load(path)?));
    }
    let (net, _) = Network::<f32>::load_checkpoint(path)?;
    if net.config().input_width != kind.input_width() {
        return Err(Error::Shape {
            context: "model inputs",
            expected: kind.input_width(),
            actual: net.config().input_width,
        });
    }
    Ok(Box::new(net))
}

fn print_table(t: &Table) {
    print!("{}", t.to_text());
}

pub fn run(cli: Cli) -> Result<()> {
    let flag_out = cli.out;
    match cli.command {
        Command::Generate {
            machine,
            preset,
            seed,
        } => {
            let out = out_dir(flag_out, None);
            let splits = Splits::generate(machine, preset.sizes(), seed)?;
            for path in devmimic::pipeline::write_splits(&splits, &out)? {
                println!("{}  {}", sha256_file(&path)?, path.display());
            }
        }

        Command::Train {
            data,
            seed,
            net,
            training,
        } => {
            let out = out_dir(flag_out, None);
            let splits = read_splits(&data.data, data.machine)?;
            let mut config = TrainingConfig::default();
            training.apply(&mut config);
            let mut trainer =
                Trainer::from_config(network_config(data.machine, seed, &net), config)?;
            let record = train(&mut trainer, &splits);
            create_dir(&out)?;
            write(&out.join("run.csv"), record.to_csv())?;
            trainer
                .network
                .save_checkpoint(out.join("model.ckpt"), trainer.steps())?;
            println!(
                "{} seed={} epochs={} stop={} eval_loss={} eval_accuracy={} success={}",
                record.label,
                record.seed,
                record.epochs,
                record.stop_reason.label(),
                fmt(record.eval_loss),
                fmt(record.eval_accuracy),
                config.is_success(record.eval_loss)
            );
            if let StopReason::Aborted(msg) = &record.stop_reason {
                return Err(Error::NonFinite(msg.clone()));
            }
        }

        Command::Experiment {
            spec,
            machine,
            preset,
            seed,
            n_networks,
            parallel,
            training,
        } => {
            let mut s = match (&spec, machine) {
                (Some(path), _) => ExperimentSpec::load(path)?,
                (None, Some(m)) => ExperimentSpec::new(m),
                (None, None) => {
                    return Err(Error::Config("experiment needs --machine or --spec".into()))
                }
            };
            if let Some(m) = machine {
                s.machine = m;
            }
            if let Some(p) = preset {
                s.preset = p;
            }
            if let Some(v) = seed {
                s.seed = v;
            }
            if let Some(n) = n_networks {
                s.n_networks = n;
            }
            training.apply(&mut s.training);
            let out = out_dir(flag_out, s.output_dir.clone());
            let result = with_parallelism(&parallel, |serial| run_experiment(&s, &out, serial))??;
            print_table(&experiment_table(std::slice::from_ref(
                &result.experiment.summary,
            )));
            println!("wrote {} files to {}", result.files.len(), out.display());
        }

        Command::Mimic {
            data,
            checkpoint,
            seed,
            net,
            training,
        } => {
            let out = out_dir(flag_out, None);
            let splits = read_splits(&data.data, data.machine)?;
            let mut config = TrainingConfig::default();
            training.apply(&mut config);
            let (mut trainer, epochs, prior_steps) = match &checkpoint {
                Some(path) => {
                    let (network, steps) = Network::<f32>::load_checkpoint(path)?;
                    let per_epoch = splits.train.len().div_ceil(config.batch_size) as u64;
                    let trainer = Trainer::new(network, config)?;
                    (trainer, steps.div_ceil(per_epoch) as usize, steps)
                }
                None => {
                    let mut trainer =
                        Trainer::from_config(network_config(data.machine, seed, &net), config)?;
                    let record = train(&mut trainer, &splits);
                    if let StopReason::Aborted(msg) = record.stop_reason {
                        return Err(Error::NonFinite(msg));
                    }
                    create_dir(&out)?;
                    write(&out.join("run.csv"), record.to_csv())?;
                    (trainer, record.epochs, 0)
                }
            };
            let outcome = continue_to_mimicry(&mut trainer, &splits)?;
            let report = mimicry(&trainer.network, &splits.evaluation)?;
            create_dir(&out)?;
            write(&out.join("mimic.csv"), outcome.record.to_csv())?;
            trainer
                .network
                .save_checkpoint(out.join("model.ckpt"), prior_steps + trainer.steps())?;
            let row = MimicryRow {
                machine: data.machine,
                total_outputs: report.total_outputs,
                epochs,
                epochs_plus: (outcome.record.stop_reason != StopReason::BudgetExhausted)
                    .then_some(outcome.epochs_plus),
                accuracy: outcome.best_accuracy,
            };
            let table = mimicry_table(&[row]);
            write(&out.join("mimicry.csv"), table.to_csv())?;
            print_table(&table);
            if let StopReason::Aborted(msg) = &outcome.record.stop_reason {
                return Err(Error::NonFinite(msg.clone()));
            }
        }

        Command::Decompose {
            data,
            seed,
            parallel,
            training,
        } => {
            let out = out_dir(flag_out, None);
            let splits = read_splits(&data, MachineKind::SerialPort)?;
            let mut config = TrainingConfig::default();
            training.apply(&mut config);
            let (model, records) =
                with_parallelism(&parallel, |serial| train_decomposed(&splits, &config, seed, serial))??;
            model.save(out.join("parts"))?;
            for r in &records {
                write(&out.join(format!("{}.csv", r.label)), r.to_csv())?;
            }
            let table = decomposed_table(&records)?;
            write(&out.join("decomposed.csv"), table.to_csv())?;
            print_table(&table);

            let report = mimicry(&model, &splits.evaluation)?;
            let mut groups = Table::new(&["Output", "Correct", "Total", "Accuracy"]);
            for g in &report.groups {
                groups.push(vec![
                    g.name.clone(),
                    g.correct.to_string(),
                    g.total.to_string(),
                    format!("{:.4}%", 100.0 * g.accuracy()),
                ]);
            }
            write(&out.join("groups.csv"), groups.to_csv())?;
            print_table(&groups);
        }

        Command::Heatmap {
            data,
            model,
            sequence,
        } => {
            let out = out_dir(flag_out, None);
            let path = dataset_path(&data.data, data.machine, Split::Evaluation);
            let eval = Dataset::load(&path)?;
            let model = load_model(&model.model, data.machine)?;
            let seqs = match sequence {
                Some(i) if i >= eval.len() => {
                    return Err(Error::InvalidInput(format!(
                        "sequence {i} out of range, the evaluation split has {}",
                        eval.len()
                    )))
                }
                Some(i) => &eval.sequences[i..=i],
                None => &eval.sequences[..],
            };
            let map = heatmap(model.as_ref(), data.machine, seqs)?;
            create_dir(&out)?;
            write(&out.join("heatmap.csv"), map.to_csv())?;
            write(&out.join("heatmap.svg"), map.to_svg())?;
            let mut t = Table::new(&["Output", "Mean loss"]);
            for (label, m) in map.column_labels.iter().zip(map.column_means()) {
                t.push(vec![label.clone(), format!("{m:.6e}")]);
            }
            print_table(&t);
        }

        Command::Hello { model, targets } => {
            let model = load_model(&model.model, MachineKind::SerialPort)?;
            let targets = if targets.is_empty() {
                DEFAULT_TARGETS
                    .iter()
                    .map(|t| t.parse())
                    .collect::<Result<Vec<_>>>()?
            } else {
                targets
            };
            let rows = targets
                .iter()
                .map(|t| hello_world(model.as_ref(), t))
                .collect::<Result<Vec<_>>>()?;
            print_table(&hello_table(&rows));
        }

        Command::Statespace => print_table(&state_space_table()),

        Command::Report { dirs } => {
            for name in ["summary.csv", "mimicry.csv", "decomposed.csv", "groups.csv"] {
                let mut merged: Option<Table> = None;
                for dir in &dirs {
                    let path = dir.join(name);
                    if !path.is_file() {
                        continue;
                    }
                    let t = read_table(&path)?;
                    match &mut merged {
                        None => merged = Some(t),
                        Some(m) if m.headers == t.headers => m.rows.extend(t.rows),
                        Some(_) => {
                            return Err(Error::InvalidInput(format!(
                                "{} has different columns from earlier {name} files",
                                path.display()
                            )))
                        }
                    }
                }
                if let Some(t) = merged {
                    println!("{name}");
                    print_table(&t);
                    println!();
                }
            }
        }
    }
    Ok(())
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".into(), |x| format!("{x:.6}"))
}

fn read_table(path: &Path) -> Result<Table> {
    let bad = |e: csv::Error| Error::InvalidInput(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(bad)?;
    let headers: Vec<String> = r.headers().map_err(bad)?.iter().map(String::from).collect();
    let mut t = Table {
        headers,
        rows: Vec::new(),
    };
    for rec in r.records() {
        t.rows.push(rec.map_err(bad)?.iter().map(String::from).collect());
    }
    Ok(t)
}
