use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use devmimic::dataset::Preset;
use devmimic::evaluation::LineSettings;
use devmimic::machines::MachineKind;
use devmimic::training::TrainingConfig;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "DEVMIMIC_OUT";

#[derive(Debug, Parser)]
#[command(name = "devmimic", version, about = "Learn functional models of peripheral devices")]
pub struct Cli {
    /// Output directory [default: $DEVMIMIC_OUT, else ./out].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write train/validation/evaluation datasets and print their SHA-256.
    Generate {
        #[arg(long)]
        machine: MachineKind,
        /// `paper`, `desk`, or `TRAIN/VAL/EVALxLENGTH`.
        #[arg(long, default_value = "desk")]
        preset: Preset,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train one network on generated datasets.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// Network initialization seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        training: TrainingArgs,
    },
    /// Train several seeds on freshly generated data and summarize them.
    Experiment {
        /// TOML experiment spec; flags override its values.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        machine: Option<MachineKind>,
        #[arg(long)]
        preset: Option<Preset>,
        /// Dataset seed; network i uses seed + i.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of networks.
        #[arg(long = "n")]
        n_networks: Option<usize>,
        #[command(flatten)]
        parallel: ParallelArgs,
        #[command(flatten)]
        training: TrainingArgs,
    },
    /// Train (or load) a network, then continue until exact mimicry.
    Mimic {
        #[command(flatten)]
        data: DataArgs,
        /// Start from this checkpoint instead of training from scratch.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        net: NetArgs,
        #[command(flatten)]
        training: TrainingArgs,
    },
    /// Train one network per UART output group.
    Decompose {
        /// Directory holding `uart-*.bin` datasets.
        #[arg(long)]
        data: PathBuf,
        /// Part i uses seed + i.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        parallel: ParallelArgs,
        #[command(flatten)]
        training: TrainingArgs,
    },
    /// Per-step, per-output loss of a model on the evaluation split.
    Heatmap {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Only this evaluation sequence.
        #[arg(long)]
        sequence: Option<usize>,
    },
    /// Program a UART model and send "Hello World!".
    Hello {
        #[command(flatten)]
        model: ModelArgs,
        /// Line settings such as `115200,8n1`; repeatable.
        #[arg(long = "target")]
        targets: Vec<LineSettings>,
    },
    /// Print input/output/internal state-space sizes for every machine.
    Statespace,
    /// Render the summary tables found in result directories.
    Report {
        /// Directories written by experiment, mimic, or decompose.
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub machine: MachineKind,
    /// Directory written by `generate`.
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// `ground-truth`, a checkpoint file, or a decomposed-model directory.
    #[arg(long, default_value = "ground-truth")]
    pub model: String,
}

#[derive(Debug, Args)]
pub struct NetArgs {
    /// Override the hidden width heuristic.
    #[arg(long)]
    pub hidden_width: Option<usize>,
    #[arg(long)]
    pub hidden_layers: Option<usize>,
    /// Truncate BPTT to windows of this many steps.
    #[arg(long)]
    pub bptt_window: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ParallelArgs {
    /// Train networks one after another on the calling thread.
    #[arg(long, conflicts_with = "workers")]
    pub serial: bool,
    /// Worker threads across networks.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Default, Args)]
pub struct TrainingArgs {
    #[arg(long)]
    pub epsilon_stop: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub success_threshold: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub mimicry_budget: Option<usize>,
    #[arg(long)]
    pub mimicry_patience: Option<usize>,
}

impl TrainingArgs {
    /// Overlay the flags that were given.
    pub fn apply(&self, c: &mut TrainingConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(
            epsilon_stop,
            patience,
            max_epochs,
            success_threshold,
            batch_size,
            learning_rate,
            mimicry_budget,
            mimicry_patience
        );
        if self.clip_norm.is_some() {
            c.clip_norm = self.clip_norm;
        }
    }
}
