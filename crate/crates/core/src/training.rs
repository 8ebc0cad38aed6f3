//! Training protocol: mini-batch Nadam epochs, the validation stopping rule,
//! multi-seed experiments, continuation to exact mimicry, and the
//! decomposed UART model.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Splits};
use crate::encoding::{EncodedSequence, UartGroup, UART_INPUT_WIDTH, UART_OUTPUT_WIDTH};
use crate::error::{Error, Result};
use crate::evaluation::{evaluation_loss, mimicry, SequenceModel};
use crate::machines::MachineKind;
use crate::rnn::{clip_global_norm, Nadam, NadamConfig, Network, NetworkConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Validation loss below which an epoch counts towards convergence.
    pub epsilon_stop: f64,
    /// Stop once more than this many consecutive epochs are below
    /// `epsilon_stop`.
    pub patience: usize,
    pub max_epochs: usize,
    /// Evaluation loss below which a run counts as a success.
    pub success_threshold: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Optional global-norm gradient clip.
    pub clip_norm: Option<f64>,
    /// Extra-epoch budget for mimicry continuation.
    pub mimicry_budget: usize,
    /// Consecutive perfect-accuracy epochs that end mimicry continuation.
    pub mimicry_patience: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epsilon_stop: 0.001,
            patience: 20,
            max_epochs: 4096,
            success_threshold: 0.05,
            batch_size: 32,
            learning_rate: 0.001,
            clip_norm: None,
            mimicry_budget: 4096,
            mimicry_patience: 20,
        }
    }
}

impl TrainingConfig {
    // Negated comparisons also reject NaN.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.epsilon_stop < self.success_threshold) {
            return fail("epsilon_stop must be below success_threshold");
        }
        if self.patience == 0 || self.mimicry_patience == 0 {
            return fail("patience must be at least 1");
        }
        if self.max_epochs == 0 {
            return fail("max_epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if matches!(self.clip_norm, Some(c) if !(c > 0.0)) {
            return fail("clip_norm must be positive");
        }
        Ok(())
    }

    pub fn stopping_rule(&self) -> StoppingRule {
        StoppingRule {
            epsilon: self.epsilon_stop,
            patience: self.patience,
            max_epochs: self.max_epochs,
        }
    }

    pub fn is_success(&self, eval_loss: Option<f64>) -> bool {
        matches!(eval_loss, Some(l) if l < self.success_threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    /// Validation loss stayed under epsilon for more than `patience` epochs.
    Converged,
    MaxEpochs,
    /// 100% decoded accuracy held for `mimicry_patience` epochs.
    PerfectMimicry,
    /// Mimicry budget ran out; the best parameters seen were restored.
    BudgetExhausted,
    /// Non-finite loss or gradient.
    Aborted(String),
}

impl StopReason {
    pub fn label(&self) -> &str {
        match self {
            StopReason::Converged => "converged",
            StopReason::MaxEpochs => "max-epochs",
            StopReason::PerfectMimicry => "perfect-mimicry",
            StopReason::BudgetExhausted => "budget-exhausted",
            StopReason::Aborted(_) => "aborted",
        }
    }
}

/// "Below `epsilon` for more than `patience` consecutive epochs, or
/// `max_epochs`, whichever comes first."
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppingRule {
    pub epsilon: f64,
    pub patience: usize,
    pub max_epochs: usize,
}

/// Streak state for a [`StoppingRule`].
#[derive(Debug, Clone)]
pub struct StopTracker {
    rule: StoppingRule,
    streak: usize,
    epoch: usize,
}

impl StopTracker {
    pub fn new(rule: StoppingRule) -> Self {
        Self {
            rule,
            streak: 0,
            epoch: 0,
        }
    }

    /// Record the next epoch's validation loss; returns why to stop, if so.
    pub fn observe(&mut self, val_loss: f64) -> Option<StopReason> {
        self.epoch += 1;
        if !val_loss.is_finite() {
            return Some(StopReason::Aborted(format!(
                "validation loss is {val_loss} at epoch {}",
                self.epoch
            )));
        }
        if val_loss < self.rule.epsilon {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        if self.streak > self.rule.patience {
            Some(StopReason::Converged)
        } else if self.epoch >= self.rule.max_epochs {
            Some(StopReason::MaxEpochs)
        } else {
            None
        }
    }
}

/// One epoch of training and the following validation pass.
pub trait EpochRunner {
    fn train_epoch(&mut self) -> Result<f64>;
    fn validation_loss(&mut self) -> Result<f64>;
}

/// Loss series and stop reason from [`run_protocol`].
#[derive(Debug, Clone, PartialEq)]
pub struct Progress {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub stop_reason: StopReason,
}

/// Run epochs until the stopping rule fires. Errors from the runner end the
/// run as [`StopReason::Aborted`] with the series so far preserved.
pub fn run_protocol(runner: &mut dyn EpochRunner, rule: StoppingRule) -> Progress {
    let mut tracker = StopTracker::new(rule);
    let mut p = Progress {
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        stop_reason: StopReason::MaxEpochs,
    };
    loop {
        let losses = runner
            .train_epoch()
            .and_then(|tl| runner.validation_loss().map(|vl| (tl, vl)));
        let (tl, vl) = match losses {
            Ok(v) => v,
            Err(e) => {
                p.stop_reason = StopReason::Aborted(e.to_string());
                return p;
            }
        };
        p.train_loss.push(tl);
        p.val_loss.push(vl);
        if let Some(reason) = tracker.observe(vl) {
            p.stop_reason = reason;
            return p;
        }
    }
}

/// A network with its optimizer state and shuffling stream.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub network: Network<f32>,
    pub config: TrainingConfig,
    optimizer: Nadam<f32>,
    rng: ChaCha8Rng,
    grads: Vec<f32>,
}

impl Trainer {
    /// Shuffling draws from ChaCha8 stream 1 of the network seed.
    pub fn new(network: Network<f32>, config: TrainingConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = Nadam::new(
            NadamConfig {
                learning_rate: config.learning_rate,
                ..NadamConfig::default()
            },
            network.param_count(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(network.config().seed);
        rng.set_stream(1);
        let grads = vec![0.0; network.param_count()];
        Ok(Self {
            network,
            config,
            optimizer,
            rng,
            grads,
        })
    }

    pub fn from_config(net: NetworkConfig, config: TrainingConfig) -> Result<Self> {
        Self::new(Network::init(net)?, config)
    }

    /// Optimizer updates applied so far.
    pub fn steps(&self) -> u64 {
        self.optimizer.t
    }

    fn check_widths(&self, data: &Dataset) -> Result<()> {
        let c = self.network.config();
        if data.input_width() != c.input_width {
            return Err(Error::shape("dataset inputs", c.input_width, data.input_width()));
        }
        if data.output_width() != c.output_width {
            return Err(Error::shape("dataset targets", c.output_width, data.output_width()));
        }
        Ok(())
    }

    /// One pass over `data` in shuffled mini-batches. Returns the mean
    /// per-sequence loss measured before each batch's update.
    pub fn train_epoch(&mut self, data: &Dataset) -> Result<f64> {
        self.check_widths(data)?;
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0f64;
        for batch in order.chunks(self.config.batch_size) {
            self.grads.iter_mut().for_each(|g| *g = 0.0);
            let weight = 1.0 / batch.len() as f32;
            for &i in batch {
                let pair = &data.sequences[i];
                let trace = self.network.forward(pair.inputs.values())?;
                let loss = self.network.accumulate_gradients(
                    &trace,
                    pair.targets.values(),
                    &mut self.grads,
                    weight,
                )?;
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("training loss {loss}")));
                }
                total += loss as f64;
            }
            if let Some(c) = self.config.clip_norm {
                clip_global_norm(&mut self.grads, c as f32);
            }
            self.optimizer.step(self.network.params_mut(), &self.grads)?;
        }
        Ok(total / data.len() as f64)
    }

    pub fn loss(&self, data: &Dataset) -> Result<f64> {
        self.check_widths(data)?;
        evaluation_loss(&self.network, data)
    }
}

struct SplitRunner<'a> {
    trainer: &'a mut Trainer,
    splits: &'a Splits,
}

impl EpochRunner for SplitRunner<'_> {
    fn train_epoch(&mut self) -> Result<f64> {
        self.trainer.train_epoch(&self.splits.train)
    }

    fn validation_loss(&mut self) -> Result<f64> {
        self.trainer.loss(&self.splits.validation)
    }
}

/// Everything recorded about one trained network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub label: String,
    pub seed: u64,
    pub param_count: usize,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Per-epoch decoded evaluation accuracy (mimicry continuation only).
    pub accuracy: Vec<f64>,
    pub stop_reason: StopReason,
    pub epochs: usize,
    pub eval_loss: Option<f64>,
    pub eval_accuracy: Option<f64>,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl RunRecord {
    pub fn final_val_loss(&self) -> Option<f64> {
        self.val_loss.last().copied()
    }

    /// `epoch,train_loss,val_loss,decoded_accuracy`; accuracy is blank when
    /// not measured.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss,decoded_accuracy\n");
        for e in 0..self.epochs {
            let acc = self
                .accuracy
                .get(e)
                .map_or(String::new(), |a| format!("{a:.9}"));
            let _ = writeln!(
                s,
                "{},{:.9e},{:.9e},{acc}",
                e + 1,
                self.train_loss[e],
                self.val_loss[e]
            );
        }
        s
    }
}

fn label_for(splits: &Splits, width: usize) -> String {
    let kind = splits.kind();
    if width == kind.output_width() {
        return kind.slug().to_string();
    }
    UartGroup::ALL
        .into_iter()
        .find(|g| g.width() == width)
        .map_or_else(|| kind.slug().to_string(), |g| g.slug().to_string())
}

/// Train until the stopping rule fires, then score on the evaluation split.
pub fn train(trainer: &mut Trainer, splits: &Splits) -> RunRecord {
    let start = Instant::now();
    let rule = trainer.config.stopping_rule();
    let progress = run_protocol(&mut SplitRunner { trainer, splits }, rule);
    let (eval_loss, eval_accuracy) = if matches!(progress.stop_reason, StopReason::Aborted(_)) {
        (None, None)
    } else {
        let loss = evaluation_loss(&trainer.network, &splits.evaluation).ok();
        let acc = mimicry(&trainer.network, &splits.evaluation)
            .ok()
            .map(|r| r.accuracy);
        (loss.filter(|l| l.is_finite()), acc)
    };
    RunRecord {
        label: label_for(splits, trainer.network.config().output_width),
        seed: trainer.network.config().seed,
        param_count: trainer.network.param_count(),
        epochs: progress.val_loss.len(),
        train_loss: progress.train_loss,
        val_loss: progress.val_loss,
        accuracy: Vec::new(),
        stop_reason: progress.stop_reason,
        eval_loss,
        eval_accuracy,
        wall_time: start.elapsed(),
    }
}

/// Aggregate columns for one machine's experiment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub machine: MachineKind,
    pub runs: usize,
    pub param_count: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_epochs: f64,
    pub median_epochs: f64,
    /// Mean evaluation loss over successful runs.
    pub mean_eval_loss: Option<f64>,
    /// Mean evaluation loss over every run that finished.
    pub mean_eval_loss_all: Option<f64>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    })
}

impl ExperimentSummary {
    pub fn from_records(
        machine: MachineKind,
        records: &[RunRecord],
        config: &TrainingConfig,
    ) -> Self {
        let successful: Vec<f64> = records
            .iter()
            .filter(|r| config.is_success(r.eval_loss))
            .filter_map(|r| r.eval_loss)
            .collect();
        let all: Vec<f64> = records.iter().filter_map(|r| r.eval_loss).collect();
        let epochs: Vec<f64> = records.iter().map(|r| r.epochs as f64).collect();
        Self {
            machine,
            runs: records.len(),
            param_count: records.first().map_or(0, |r| r.param_count),
            successes: successful.len(),
            success_rate: successful.len() as f64 / records.len().max(1) as f64,
            mean_epochs: mean(&epochs).unwrap_or(0.0),
            median_epochs: median(&epochs).unwrap_or(0.0),
            mean_eval_loss: mean(&successful),
            mean_eval_loss_all: mean(&all),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub records: Vec<RunRecord>,
    pub networks: Vec<Network<f32>>,
    /// Optimizer updates applied to each network.
    pub steps: Vec<u64>,
    pub summary: ExperimentSummary,
}

impl Experiment {
    /// Validation loss per epoch, one column per seed; blank after a run
    /// stopped.
    pub fn validation_curves_csv(&self) -> String {
        let mut s = String::from("epoch");
        for r in &self.records {
            let _ = write!(s, ",seed_{}", r.seed);
        }
        s.push('\n');
        let longest = self.records.iter().map(|r| r.epochs).max().unwrap_or(0);
        for e in 0..longest {
            let _ = write!(s, "{}", e + 1);
            for r in &self.records {
                match r.val_loss.get(e) {
                    Some(v) => {
                        let _ = write!(s, ",{v:.9e}");
                    }
                    None => s.push(','),
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Train `n_networks` networks with seeds `base_seed + i` on the same data.
/// Runs execute in parallel unless `serial` is set; results are identical
/// either way because every run owns its state.
pub fn experiment(
    splits: &Splits,
    n_networks: usize,
    base_seed: u64,
    config: &TrainingConfig,
    serial: bool,
) -> Result<Experiment> {
    if n_networks == 0 {
        return Err(Error::Config("experiment needs at least one network".into()));
    }
    config.validate()?;
    let kind = splits.kind();
    let one = |i: usize| -> Result<(RunRecord, Network<f32>, u64)> {
        let seed = base_seed.wrapping_add(i as u64);
        let net = NetworkConfig::new(kind.input_width(), kind.output_width(), seed);
        let mut trainer = Trainer::from_config(net, *config)?;
        let record = train(&mut trainer, splits);
        let steps = trainer.steps();
        Ok((record, trainer.network, steps))
    };
    let runs: Vec<_> = if serial {
        (0..n_networks).map(one).collect::<Result<_>>()?
    } else {
        (0..n_networks).into_par_iter().map(one).collect::<Result<_>>()?
    };
    let mut out = Experiment {
        records: Vec::with_capacity(n_networks),
        networks: Vec::with_capacity(n_networks),
        steps: Vec::with_capacity(n_networks),
        summary: ExperimentSummary::from_records(kind, &[], config),
    };
    for (r, n, s) in runs {
        out.records.push(r);
        out.networks.push(n);
        out.steps.push(s);
    }
    out.summary = ExperimentSummary::from_records(kind, &out.records, config);
    Ok(out)
}

/// Result of continuing training until exact mimicry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MimicryOutcome {
    pub record: RunRecord,
    /// Best decoded evaluation accuracy seen (including before training).
    pub best_accuracy: f64,
    /// Extra epochs needed to first reach the best accuracy.
    pub epochs_plus: usize,
}

/// Keep training until decoded evaluation accuracy is 100% for
/// `mimicry_patience` consecutive checks (the check before the first extra
/// epoch counts), or the extra-epoch budget runs out. On budget exhaustion
/// the best parameters seen are restored.
pub fn continue_to_mimicry(trainer: &mut Trainer, splits: &Splits) -> Result<MimicryOutcome> {
    let start = Instant::now();
    let patience = trainer.config.mimicry_patience;
    let budget = trainer.config.mimicry_budget;
    let accuracy = |t: &Trainer| mimicry(&t.network, &splits.evaluation).map(|r| r.accuracy);

    let mut best = accuracy(trainer)?;
    let mut best_epoch = 0;
    let mut best_params = trainer.network.params().to_vec();
    let mut streak = usize::from(best == 1.0);
    let mut record = RunRecord {
        label: label_for(splits, trainer.network.config().output_width),
        seed: trainer.network.config().seed,
        param_count: trainer.network.param_count(),
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        accuracy: Vec::new(),
        stop_reason: StopReason::BudgetExhausted,
        epochs: 0,
        eval_loss: None,
        eval_accuracy: None,
        wall_time: Duration::ZERO,
    };
    let mut stopped = streak >= patience;
    for epoch in 1..=budget {
        if stopped {
            break;
        }
        let step = trainer
            .train_epoch(&splits.train)
            .and_then(|tl| trainer.loss(&splits.validation).map(|vl| (tl, vl)));
        let (tl, vl) = match step {
            Ok(v) if v.1.is_finite() => v,
            Ok(v) => {
                record.stop_reason = StopReason::Aborted(format!("validation loss {}", v.1));
                break;
            }
            Err(e) => {
                record.stop_reason = StopReason::Aborted(e.to_string());
                break;
            }
        };
        let acc = accuracy(trainer)?;
        record.train_loss.push(tl);
        record.val_loss.push(vl);
        record.accuracy.push(acc);
        if acc > best {
            best = acc;
            best_epoch = epoch;
            best_params.copy_from_slice(trainer.network.params());
        }
        streak = if acc == 1.0 { streak + 1 } else { 0 };
        stopped = streak >= patience;
    }
    if stopped {
        record.stop_reason = StopReason::PerfectMimicry;
    } else {
        trainer.network.params_mut().copy_from_slice(&best_params);
    }
    record.epochs = record.val_loss.len();
    record.eval_loss = evaluation_loss(&trainer.network, &splits.evaluation).ok();
    record.eval_accuracy = Some(accuracy(trainer)?);
    record.wall_time = start.elapsed();
    Ok(MimicryOutcome {
        record,
        best_accuracy: best,
        epochs_plus: best_epoch,
    })
}

/// One network per UART output group; predictions concatenate back into the
/// standard 22-wide layout.
#[derive(Debug, Clone)]
pub struct DecomposedModel {
    pub parts: Vec<(UartGroup, Network<f32>)>,
}

/// Hidden width of the monolithic UART network, kept by every part.
pub fn decomposed_hidden_width() -> usize {
    NetworkConfig::new(UART_INPUT_WIDTH, UART_OUTPUT_WIDTH, 0).hidden_width
}

impl DecomposedModel {
    pub fn part(&self, group: UartGroup) -> Option<&Network<f32>> {
        self.parts.iter().find(|(g, _)| *g == group).map(|(_, n)| n)
    }

    /// Writes `<group>.ckpt` for each part into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (g, net) in &self.parts {
            net.save_checkpoint(dir.join(format!("{}.ckpt", g.slug())), 0)?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let parts = UartGroup::ALL
            .into_iter()
            .map(|g| {
                let (net, _) = Network::load_checkpoint(dir.join(format!("{}.ckpt", g.slug())))?;
                if net.config().output_width != g.width() {
                    return Err(Error::shape("decomposed part", g.width(), net.config().output_width));
                }
                Ok((g, net))
            })
            .collect::<Result<_>>()?;
        Ok(Self { parts })
    }
}

impl SequenceModel for DecomposedModel {
    fn output_width(&self) -> usize {
        self.parts.iter().map(|(_, n)| n.config().output_width).sum()
    }

    fn predict(&self, inputs: &EncodedSequence) -> Result<EncodedSequence> {
        let outs = self
            .parts
            .iter()
            .map(|(_, n)| n.predict(inputs))
            .collect::<Result<Vec<_>>>()?;
        EncodedSequence::concat_columns(&outs)
    }
}

/// Train one network per UART output group on column-sliced targets.
/// Part `i` uses seed `seed + i`.
pub fn train_decomposed(
    splits: &Splits,
    config: &TrainingConfig,
    seed: u64,
    serial: bool,
) -> Result<(DecomposedModel, Vec<RunRecord>)> {
    if splits.kind() != MachineKind::SerialPort {
        return Err(Error::InvalidInput(format!(
            "decomposed training needs UART data, got {}",
            splits.kind()
        )));
    }
    config.validate()?;
    let hidden = decomposed_hidden_width();
    let one = |(i, g): (usize, UartGroup)| -> Result<(UartGroup, Network<f32>, RunRecord)> {
        let sliced = splits.slice_targets(g.columns());
        let net = NetworkConfig::new(UART_INPUT_WIDTH, g.width(), seed.wrapping_add(i as u64))
            .with_hidden_width(hidden);
        let mut trainer = Trainer::from_config(net, *config)?;
        let record = train(&mut trainer, &sliced);
        Ok((g, trainer.network, record))
    };
    let groups = UartGroup::ALL.into_iter().enumerate();
    let parts: Vec<_> = if serial {
        groups.map(one).collect::<Result<_>>()?
    } else {
        groups
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(one)
            .collect::<Result<_>>()?
    };
    let mut model = DecomposedModel { parts: Vec::new() };
    let mut records = Vec::new();
    for (g, net, rec) in parts {
        model.parts.push((g, net));
        records.push(rec);
    }
    Ok((model, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SplitSizes;

    /// Independent scan: first epoch at which the trailing run of
    /// sub-epsilon losses exceeds `patience`, else `max_epochs`.
    fn scan(series: &[f64], eps: f64, patience: usize, max: usize) -> usize {
        let mut run = 0;
        for (i, &v) in series.iter().enumerate().take(max) {
            run = if v < eps { run + 1 } else { 0 };
            if run == patience + 1 {
                return i + 1;
            }
        }
        max
    }

    struct Scripted {
        series: Vec<f64>,
        at: usize,
    }

    impl EpochRunner for Scripted {
        fn train_epoch(&mut self) -> Result<f64> {
            Ok(0.0)
        }
        fn validation_loss(&mut self) -> Result<f64> {
            let v = self.series[self.at.min(self.series.len() - 1)];
            self.at += 1;
            Ok(v)
        }
    }

    #[test]
    fn stop_rule_needs_more_than_patience() {
        let rule = StoppingRule {
            epsilon: 0.001,
            patience: 3,
            max_epochs: 100,
        };
        let mut r = Scripted {
            series: vec![0.0005; 10],
            at: 0,
        };
        let p = run_protocol(&mut r, rule);
        assert_eq!(p.val_loss.len(), 4);
        assert_eq!(p.stop_reason, StopReason::Converged);
    }

    #[test]
    fn stop_rule_resets_on_spike() {
        let rule = StoppingRule {
            epsilon: 0.001,
            patience: 2,
            max_epochs: 100,
        };
        let series = vec![0.0001, 0.0001, 0.01, 0.0001, 0.0001, 0.0001, 0.5];
        let p = run_protocol(&mut Scripted { series: series.clone(), at: 0 }, rule);
        assert_eq!(p.val_loss.len(), scan(&series, 0.001, 2, 100));
        assert_eq!(p.val_loss.len(), 6);
    }

    #[test]
    fn max_epochs_when_never_converged() {
        let rule = StoppingRule {
            epsilon: 0.001,
            patience: 20,
            max_epochs: 7,
        };
        let p = run_protocol(&mut Scripted { series: vec![0.2], at: 0 }, rule);
        assert_eq!(p.val_loss.len(), 7);
        assert_eq!(p.stop_reason, StopReason::MaxEpochs);
    }

    #[test]
    fn nan_validation_aborts() {
        let rule = TrainingConfig::default().stopping_rule();
        let p = run_protocol(
            &mut Scripted {
                series: vec![0.1, f64::NAN],
                at: 0,
            },
            rule,
        );
        assert_eq!(p.val_loss.len(), 2);
        assert!(matches!(p.stop_reason, StopReason::Aborted(_)));
    }

    #[test]
    fn config_validation() {
        assert!(TrainingConfig::default().validate().is_ok());
        let bad = TrainingConfig {
            epsilon_stop: 0.1,
            ..TrainingConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainingConfig {
            patience: 0,
            ..TrainingConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn success_is_a_threshold() {
        let c = TrainingConfig::default();
        assert!(c.is_success(Some(0.049)));
        assert!(!c.is_success(Some(0.05)));
        assert!(!c.is_success(None));
    }

    fn record(eval: Option<f64>, epochs: usize) -> RunRecord {
        RunRecord {
            label: "x".into(),
            seed: 0,
            param_count: 10,
            train_loss: vec![0.1; epochs],
            val_loss: vec![0.1; epochs],
            accuracy: vec![],
            stop_reason: StopReason::MaxEpochs,
            epochs,
            eval_loss: eval,
            eval_accuracy: None,
            wall_time: Duration::ZERO,
        }
    }

    #[test]
    fn summary_means() {
        let c = TrainingConfig::default();
        let recs = [record(Some(0.01), 10), record(Some(0.03), 20), record(Some(0.2), 40), record(None, 3)];
        let s = ExperimentSummary::from_records(MachineKind::Parity, &recs, &c);
        assert_eq!(s.successes, 2);
        assert_eq!(s.success_rate, 0.5);
        assert!((s.mean_eval_loss.unwrap() - 0.02).abs() < 1e-15);
        assert!((s.mean_eval_loss_all.unwrap() - 0.08).abs() < 1e-15);
        assert_eq!(s.median_epochs, 15.0);
        let none = ExperimentSummary::from_records(MachineKind::Parity, &[record(Some(0.3), 1)], &c);
        assert_eq!(none.mean_eval_loss, None);
    }

    #[test]
    fn run_csv_shape() {
        let mut r = record(Some(0.1), 3);
        r.accuracy = vec![0.5, 0.75, 1.0];
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().nth(3).unwrap().ends_with(",1.000000000"));
    }

    fn tiny_splits(kind: MachineKind) -> Splits {
        Splits::generate(
            kind,
            SplitSizes {
                train: 8,
                validation: 4,
                evaluation: 4,
                length: 12,
            },
            3,
        )
        .unwrap()
    }

    #[test]
    fn training_is_deterministic() {
        let splits = tiny_splits(MachineKind::SimpleXor);
        let cfg = TrainingConfig {
            max_epochs: 3,
            batch_size: 4,
            ..TrainingConfig::default()
        };
        let run = || {
            let mut t = Trainer::from_config(NetworkConfig::new(9, 1, 11), cfg).unwrap();
            let r = train(&mut t, &splits);
            (r.train_loss, r.val_loss, t.network.params().to_vec())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn width_mismatch_aborts_with_record() {
        let splits = tiny_splits(MachineKind::EightBit);
        let mut t = Trainer::from_config(NetworkConfig::new(9, 1, 1), TrainingConfig::default()).unwrap();
        let r = train(&mut t, &splits);
        assert!(matches!(r.stop_reason, StopReason::Aborted(_)));
        assert_eq!(r.epochs, 0);
        assert_eq!(r.eval_loss, None);
    }

    #[test]
    fn experiment_serial_and_parallel_agree() {
        let splits = tiny_splits(MachineKind::SingleInvert);
        let cfg = TrainingConfig {
            max_epochs: 2,
            batch_size: 4,
            ..TrainingConfig::default()
        };
        let a = experiment(&splits, 3, 5, &cfg, true).unwrap();
        let b = experiment(&splits, 3, 5, &cfg, false).unwrap();
        let seeds: Vec<u64> = a.records.iter().map(|r| r.seed).collect();
        assert_eq!(seeds, vec![5, 6, 7]);
        for (x, y) in a.records.iter().zip(&b.records) {
            assert_eq!(x.val_loss, y.val_loss);
        }
        assert_eq!(a.validation_curves_csv().lines().count(), 3);
        assert!(experiment(&splits, 0, 5, &cfg, true).is_err());
    }

    #[test]
    fn decomposed_rejects_simple_machines() {
        let splits = tiny_splits(MachineKind::Parity);
        assert!(train_decomposed(&splits, &TrainingConfig::default(), 1, true).is_err());
    }

    #[test]
    fn decomposed_slices_and_widths() {
        let splits = tiny_splits(MachineKind::SerialPort);
        let cfg = TrainingConfig {
            max_epochs: 1,
            batch_size: 8,
            ..TrainingConfig::default()
        };
        let (model, records) = train_decomposed(&splits, &cfg, 1, true).unwrap();
        let widths: Vec<usize> = model.parts.iter().map(|(_, n)| n.config().output_width).collect();
        assert_eq!(widths, vec![5, 4, 3, 1, 1, 8]);
        assert!(model.parts.iter().all(|(_, n)| n.config().hidden_width == 23));
        assert_eq!(model.output_width(), 22);
        let pred = model.predict(&splits.evaluation.sequences[0].inputs).unwrap();
        assert_eq!(pred.width(), 22);
        assert_eq!(records[1].label, "wordlen");
    }

    /// One GRU unit that copies latch 0: the update gate opens only when
    /// latch 0 is addressed, the candidate is +1 for set and -1 for clear,
    /// and the readout maps h > 0.5 to 1.
    fn latch_echo(k: f32) -> Network<f32> {
        let cfg = NetworkConfig::new(9, 1, 0)
            .with_hidden_width(1)
            .with_hidden_layers(1);
        let mut net = Network::<f32>::zeros(cfg).unwrap();
        let layout = net.layout().clone();
        let (w, b) = (layout.layers[0].w.offset, layout.layers[0].b.offset);
        let p = net.params_mut();
        p[w + 1] = k; // W_z, latch-0 one-hot
        p[b] = -k / 2.0; // b_z
        p[w + 2 * 9] = 2.0 * k; // W_h, set flag
        p[b + 2] = -k; // b_h
        p[layout.readout_w.offset] = k;
        p[layout.readout_b.offset] = -k / 2.0;
        net
    }

    #[test]
    fn hand_built_network_remembers() {
        use crate::encoding::encode_simple_command;
        use crate::machines::SimpleCommand;
        let net = latch_echo(30.0);
        let mut xs = Vec::new();
        for c in [
            SimpleCommand::set(0),
            SimpleCommand::set(3),
            SimpleCommand::clear(5),
            SimpleCommand::clear(0),
            SimpleCommand::set(7),
        ] {
            xs.extend(encode_simple_command(c.unwrap()));
        }
        let out = net.forward(&xs).unwrap().outputs().to_vec();
        let bits: Vec<bool> = out.iter().map(|&y| y >= 0.5).collect();
        assert_eq!(bits, [true, true, true, false, false]);
    }

    #[test]
    fn perfect_weights_stop_after_patience_plus_one() {
        let splits = Splits::generate(
            MachineKind::SingleDirect,
            SplitSizes {
                train: 16,
                validation: 8,
                evaluation: 8,
                length: 32,
            },
            2,
        )
        .unwrap();
        let net = latch_echo(30.0);
        assert!(mimicry(&net, &splits.evaluation).unwrap().is_perfect());
        let cfg = TrainingConfig::default();
        let mut t = Trainer::new(net, cfg).unwrap();
        let r = train(&mut t, &splits);
        assert_eq!(r.stop_reason, StopReason::Converged);
        assert_eq!(r.epochs, cfg.patience + 1);
        assert_eq!(r.val_loss.len(), r.epochs);
        assert!(cfg.is_success(r.eval_loss));

        let m = continue_to_mimicry(&mut t, &splits).unwrap();
        assert_eq!(m.epochs_plus, 0);
        assert_eq!(m.best_accuracy, 1.0);
        assert_eq!(m.record.stop_reason, StopReason::PerfectMimicry);
        assert_eq!(m.record.epochs, cfg.mimicry_patience - 1);
    }
}
