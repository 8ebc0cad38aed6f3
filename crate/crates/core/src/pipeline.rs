//! Stored experiment descriptions and the runner that turns one into files.
//!
//! A spec file is TOML:
//!
//! ```toml
//! machine = "xor"
//! preset = "desk"          # or "paper", or "256/64/32x64"
//! seed = 7                 # datasets use `seed`; network i uses `seed + i`
//! n_networks = 10
//! output_dir = "runs/xor"  # optional
//!
//! [training]               # any subset of the training options
//! max_epochs = 800
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{Preset, Split, Splits};
use crate::error::{Error, Result};
use crate::evaluation::experiment_table;
use crate::machines::MachineKind;
use crate::training::{experiment, Experiment, TrainingConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub machine: MachineKind,
    #[serde(default = "default_preset")]
    pub preset: Preset,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_networks")]
    pub n_networks: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub training: TrainingConfig,
}

fn default_preset() -> Preset {
    Preset::Desk
}

fn default_networks() -> usize {
    1
}

impl ExperimentSpec {
    pub fn new(machine: MachineKind) -> Self {
        Self {
            machine,
            preset: default_preset(),
            seed: 0,
            n_networks: default_networks(),
            output_dir: None,
            training: TrainingConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_networks == 0 {
            return Err(Error::Config("n_networks must be at least 1".into()));
        }
        let s = self.preset.sizes();
        if s.train == 0 || s.validation == 0 || s.evaluation == 0 || s.length == 0 {
            return Err(Error::Config(format!("preset {} has an empty split", self.preset)));
        }
        self.training.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec fields are always representable in TOML")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}

/// `<dir>/<machine>-<split>.bin`.
pub fn dataset_path(dir: &Path, kind: MachineKind, split: Split) -> PathBuf {
    dir.join(format!("{}-{}.bin", kind.slug(), split.slug()))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Generate the three splits and write them into `dir`. Returns the paths
/// in train, validation, evaluation order.
pub fn write_splits(splits: &Splits, dir: &Path) -> Result<Vec<PathBuf>> {
    create_dir(dir)?;
    Split::ALL
        .into_iter()
        .map(|split| {
            let path = dataset_path(dir, splits.kind(), split);
            splits.get(split).save(&path)?;
            Ok(path)
        })
        .collect()
}

/// Reads the three splits written by [`write_splits`].
pub fn read_splits(dir: &Path, kind: MachineKind) -> Result<Splits> {
    let load = |split| -> Result<_> {
        let path = dataset_path(dir, kind, split);
        let d = crate::dataset::Dataset::load(&path)?;
        if d.kind != kind || d.split != split {
            return Err(Error::InvalidInput(format!(
                "{} holds {} {} data",
                path.display(),
                d.kind,
                d.split
            )));
        }
        Ok(d)
    };
    Ok(Splits {
        train: load(Split::Train)?,
        validation: load(Split::Validation)?,
        evaluation: load(Split::Evaluation)?,
    })
}

/// Everything one experiment run wrote.
#[derive(Debug)]
pub struct ExperimentOutput {
    pub experiment: Experiment,
    /// Every file written, in creation order.
    pub files: Vec<PathBuf>,
}

/// Run a spec end to end and write into `out`:
///
/// ```text
/// spec.toml                   the resolved spec
/// data/<machine>-<split>.bin  datasets
/// seed-<s>/run.csv            per-epoch losses
/// seed-<s>/model.ckpt         final parameters
/// summary.csv                 aggregate row
/// validation_curves.csv       validation loss, one column per seed
/// ```
pub fn run_experiment(spec: &ExperimentSpec, out: &Path, serial: bool) -> Result<ExperimentOutput> {
    spec.validate()?;
    create_dir(out)?;
    let mut files = Vec::new();

    let spec_path = out.join("spec.toml");
    write(&spec_path, spec.to_toml())?;
    files.push(spec_path);

    let splits = Splits::generate(spec.machine, spec.preset.sizes(), spec.seed)?;
    files.extend(write_splits(&splits, &out.join("data"))?);

    let exp = experiment(&splits, spec.n_networks, spec.seed, &spec.training, serial)?;
    for ((record, net), &steps) in exp.records.iter().zip(&exp.networks).zip(&exp.steps) {
        let dir = out.join(format!("seed-{}", record.seed));
        create_dir(&dir)?;
        let csv = dir.join("run.csv");
        write(&csv, record.to_csv())?;
        let ckpt = dir.join("model.ckpt");
        net.save_checkpoint(&ckpt, steps)?;
        files.extend([csv, ckpt]);
    }
    let summary = out.join("summary.csv");
    write(&summary, experiment_table(std::slice::from_ref(&exp.summary)).to_csv())?;
    let curves = out.join("validation_curves.csv");
    write(&curves, exp.validation_curves_csv())?;
    files.extend([summary, curves]);

    Ok(ExperimentOutput {
        experiment: exp,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SplitSizes;

    #[test]
    fn toml_round_trip_and_defaults() {
        let spec = ExperimentSpec::from_toml("machine = \"xor\"\n").unwrap();
        assert_eq!(spec, ExperimentSpec::new(MachineKind::SimpleXor));

        let mut spec = ExperimentSpec::new(MachineKind::SerialPort);
        spec.preset = Preset::Custom(SplitSizes {
            train: 8,
            validation: 4,
            evaluation: 2,
            length: 16,
        });
        spec.seed = 42;
        spec.training.max_epochs = 9;
        spec.training.clip_norm = Some(1.0);
        spec.output_dir = Some("out/uart".into());
        let text = spec.to_toml();
        assert!(text.contains("preset = \"8/4/2x16\""), "{text}");
        assert!(text.contains("machine = \"uart\""), "{text}");
        assert_eq!(ExperimentSpec::from_toml(&text).unwrap(), spec);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(ExperimentSpec::from_toml("machine = \"toaster\"").is_err());
        assert!(ExperimentSpec::from_toml("machine = \"xor\"\nn_networks = 0").is_err());
        assert!(ExperimentSpec::from_toml("machine = \"xor\"\nbogus = 1").is_err());
        assert!(ExperimentSpec::from_toml("machine = \"xor\"\n[training]\npatience = 0").is_err());
        assert!(ExperimentSpec::from_toml("machine = \"xor\"\npreset = \"0/1/1x4\"").is_err());
    }

    #[test]
    fn splits_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let sizes = SplitSizes {
            train: 3,
            validation: 2,
            evaluation: 1,
            length: 5,
        };
        let splits = Splits::generate(MachineKind::Parity, sizes, 1).unwrap();
        let paths = write_splits(&splits, dir.path()).unwrap();
        assert!(paths[1].ends_with("parity-validation.bin"));
        assert_eq!(read_splits(dir.path(), MachineKind::Parity).unwrap(), splits);
        assert!(read_splits(dir.path(), MachineKind::SimpleXor).is_err());
    }
}
