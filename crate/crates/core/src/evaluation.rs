//! Exact-mimicry scoring, per-output loss heatmaps, the "Hello World!"
//! demonstration, and report tables.

use std::fmt::Write as _;
use std::ops::Range;

use serde::Serialize;

use crate::dataset::{Dataset, SequencePair};
use crate::encoding::{
    decode_uart_output, encode_pair, encode_uart_command, reported_baud, EncodedSequence, UartGroup,
    UART_OUTPUT_WIDTH,
};
use crate::error::{Error, Result};
use crate::machines::{
    divisor_for_baud, encode_lcr, run_sequence, state_space, MachineKind, Parity,
    StopBits, UartCommand, WordLength, LCR_DLAB, REG_IER_DLM, REG_LCR, REG_THR_DLL,
};
use crate::rnn::{msle_elements, Network};
use crate::training::{ExperimentSummary, RunRecord};

/// Anything that maps an encoded input sequence to encoded outputs.
pub trait SequenceModel: Sync {
    fn output_width(&self) -> usize;
    fn predict(&self, inputs: &EncodedSequence) -> Result<EncodedSequence>;
}

impl SequenceModel for Network<f32> {
    fn output_width(&self) -> usize {
        self.config().output_width
    }

    fn predict(&self, inputs: &EncodedSequence) -> Result<EncodedSequence> {
        Network::predict(self, inputs)
    }
}

/// The simulated device itself, used as a perfect reference model.
#[derive(Debug, Clone, Copy)]
pub struct GroundTruth(pub MachineKind);

impl SequenceModel for GroundTruth {
    fn output_width(&self) -> usize {
        self.0.output_width()
    }

    fn predict(&self, inputs: &EncodedSequence) -> Result<EncodedSequence> {
        let kind = self.0;
        let cmds = inputs
            .rows()
            .map(|r| crate::encoding::decode_command(kind, r))
            .collect::<Result<Vec<_>>>()?;
        let outputs = run_sequence(kind, &cmds)?;
        Ok(encode_pair(kind, &cmds, &outputs)?.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Decode {
    OneHot,
    Baud,
    Bits,
}

/// A decoded output: a name, its columns, and how it decodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputGroup {
    pub name: String,
    pub columns: Range<usize>,
    decode: Decode,
}

/// Output groups covering columns `cols` of a machine's output vector.
/// Simple machines have one group per bit; the UART range must align with
/// whole [`UartGroup`]s.
pub fn output_groups(kind: MachineKind, cols: Range<usize>) -> Result<Vec<OutputGroup>> {
    if cols.end > kind.output_width() || cols.is_empty() {
        return Err(Error::shape("output columns", kind.output_width(), cols.end));
    }
    if kind.is_simple() {
        return Ok(cols
            .clone()
            .map(|c| OutputGroup {
                name: format!("out{c}"),
                columns: c - cols.start..c - cols.start + 1,
                decode: Decode::Bits,
            })
            .collect());
    }
    let mut groups = Vec::new();
    for g in UartGroup::ALL {
        let gc = g.columns();
        if gc.start >= cols.start && gc.end <= cols.end {
            groups.push(OutputGroup {
                name: g.slug().to_string(),
                columns: gc.start - cols.start..gc.end - cols.start,
                decode: match g {
                    UartGroup::Parity | UartGroup::WordLength | UartGroup::StopBits => {
                        Decode::OneHot
                    }
                    UartGroup::Baud => Decode::Baud,
                    UartGroup::Tx | UartGroup::Data => Decode::Bits,
                },
            });
        } else if gc.start < cols.end && gc.end > cols.start {
            return Err(Error::InvalidInput(format!(
                "columns {cols:?} split the {} group",
                g.slug()
            )));
        }
    }
    Ok(groups)
}

fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Returns `(group correct, matching values)` for one time step.
fn score_group(g: &OutputGroup, pred: &[f32], truth: &[f32]) -> (bool, usize) {
    let p = &pred[g.columns.clone()];
    let y = &truth[g.columns.clone()];
    match g.decode {
        Decode::OneHot => {
            let ok = argmax(p) == argmax(y);
            (ok, if ok { p.len() } else { 0 })
        }
        Decode::Baud => {
            let ok = reported_baud(p[0]) == reported_baud(y[0]);
            (ok, ok as usize)
        }
        Decode::Bits => {
            let hits = p
                .iter()
                .zip(y)
                .filter(|(&a, &b)| (a >= 0.5) == (b >= 0.5))
                .count();
            (hits == p.len(), hits)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupScore {
    pub name: String,
    pub correct: usize,
    pub total: usize,
}

impl GroupScore {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

/// Decoded accuracy of a model against ground truth.
///
/// `total_outputs` counts output values (`width x length x sequences`); a
/// one-hot group contributes its full width when its argmax is right, baud
/// contributes 1 when the reported integer matches exactly, and binary
/// fields count bit by bit. `groups` scores each decoded output as a unit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MimicryReport {
    pub total_outputs: usize,
    pub correct_outputs: usize,
    pub accuracy: f64,
    pub groups: Vec<GroupScore>,
}

impl MimicryReport {
    pub fn is_perfect(&self) -> bool {
        self.correct_outputs == self.total_outputs
    }

    pub fn group(&self, name: &str) -> Option<&GroupScore> {
        self.groups.iter().find(|g| g.name == name)
    }

    /// Total and correct decoded outputs counting each group once per step.
    pub fn group_totals(&self) -> (usize, usize) {
        self.groups
            .iter()
            .fold((0, 0), |(t, c), g| (t + g.total, c + g.correct))
    }
}

/// Score predictions against targets for a contiguous column range of a
/// machine's outputs.
pub fn score_predictions<'a>(
    kind: MachineKind,
    cols: Range<usize>,
    pairs: impl IntoIterator<Item = (&'a EncodedSequence, &'a EncodedSequence)>,
) -> Result<MimicryReport> {
    let groups = output_groups(kind, cols.clone())?;
    let width = cols.len();
    let mut scores: Vec<GroupScore> = groups
        .iter()
        .map(|g| GroupScore {
            name: g.name.clone(),
            correct: 0,
            total: 0,
        })
        .collect();
    let (mut total, mut correct) = (0, 0);
    for (pred, truth) in pairs {
        if pred.width() != width || truth.width() != width {
            return Err(Error::shape("mimicry outputs", width, pred.width()));
        }
        if pred.steps() != truth.steps() {
            return Err(Error::shape("mimicry steps", truth.steps(), pred.steps()));
        }
        for (p, y) in pred.rows().zip(truth.rows()) {
            for (g, s) in groups.iter().zip(&mut scores) {
                let (ok, hits) = score_group(g, p, y);
                s.total += 1;
                s.correct += ok as usize;
                correct += hits;
            }
            total += width;
        }
    }
    Ok(MimicryReport {
        total_outputs: total,
        correct_outputs: correct,
        accuracy: if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        },
        groups: scores,
    })
}

/// Decode every predicted output on a dataset and compare with ground truth.
pub fn mimicry(model: &dyn SequenceModel, data: &Dataset) -> Result<MimicryReport> {
    let width = data.output_width();
    if model.output_width() != width {
        return Err(Error::shape("model output", width, model.output_width()));
    }
    let cols = if width == data.kind.output_width() {
        0..width
    } else {
        target_columns(data.kind, width)?
    };
    let preds = data
        .sequences
        .iter()
        .map(|p| model.predict(&p.inputs))
        .collect::<Result<Vec<_>>>()?;
    score_predictions(
        data.kind,
        cols,
        preds.iter().zip(data.sequences.iter().map(|p| &p.targets)),
    )
}

/// Column range of a sliced UART target of the given width.
fn target_columns(kind: MachineKind, width: usize) -> Result<Range<usize>> {
    if kind.is_simple() {
        return Err(Error::shape("simple machine outputs", kind.output_width(), width));
    }
    let matches: Vec<UartGroup> = UartGroup::ALL
        .into_iter()
        .filter(|g| g.width() == width)
        .collect();
    match matches[..] {
        [g] => Ok(g.columns()),
        _ => Err(Error::InvalidInput(format!(
            "ambiguous sliced UART target of width {width}"
        ))),
    }
}

/// Mean MSLE of a model over a dataset.
pub fn evaluation_loss(model: &dyn SequenceModel, data: &Dataset) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for p in &data.sequences {
        let pred = model.predict(&p.inputs)?;
        for e in msle_elements(pred.values(), p.targets.values())? {
            sum += e as f64;
            n += 1;
        }
    }
    Ok(sum / n.max(1) as f64)
}

/// Per-(step, output) squared log errors averaged over sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct LossHeatmap {
    pub steps: usize,
    pub width: usize,
    /// Row-major `steps x width`.
    pub values: Vec<f64>,
    pub column_labels: Vec<String>,
}

fn column_labels(kind: MachineKind, width: usize) -> Vec<String> {
    if kind.is_simple() || width != UART_OUTPUT_WIDTH {
        return (0..width).map(|i| format!("out{i}")).collect();
    }
    UartGroup::ALL
        .iter()
        .flat_map(|g| {
            let n = g.width();
            (0..n).map(move |i| {
                if n == 1 {
                    g.slug().to_string()
                } else {
                    format!("{}{i}", g.slug())
                }
            })
        })
        .collect()
}

/// Loss heatmap of a model over the given sequences.
pub fn heatmap(
    model: &dyn SequenceModel,
    kind: MachineKind,
    sequences: &[SequencePair],
) -> Result<LossHeatmap> {
    let first = sequences
        .first()
        .ok_or_else(|| Error::InvalidInput("heatmap needs at least one sequence".into()))?;
    let steps = first.targets.steps();
    let width = first.targets.width();
    let mut values = vec![0.0f64; steps * width];
    for p in sequences {
        let pred = model.predict(&p.inputs)?;
        if pred.steps() != steps || p.targets.steps() != steps {
            return Err(Error::shape("heatmap steps", steps, pred.steps()));
        }
        for (v, e) in values
            .iter_mut()
            .zip(msle_elements(pred.values(), p.targets.values())?)
        {
            *v += e as f64;
        }
    }
    let n = sequences.len() as f64;
    values.iter_mut().for_each(|v| *v /= n);
    Ok(LossHeatmap {
        steps,
        width,
        values,
        column_labels: column_labels(kind, width),
    })
}

impl LossHeatmap {
    pub fn at(&self, t: usize, col: usize) -> f64 {
        self.values[t * self.width + col]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn column_means(&self) -> Vec<f64> {
        (0..self.width)
            .map(|c| (0..self.steps).map(|t| self.at(t, c)).sum::<f64>() / self.steps as f64)
            .collect()
    }

    /// `step,<label>...` with one row per command.
    pub fn to_csv(&self) -> String {
        let mut s = format!("step,{}\n", self.column_labels.join(","));
        for t in 0..self.steps {
            let row: Vec<String> = (0..self.width).map(|c| format!("{:e}", self.at(t, c))).collect();
            let _ = writeln!(s, "{t},{}", row.join(","));
        }
        s
    }

    /// Grid with outputs on x and commands on y; darker cells have lower
    /// loss on a linear grayscale ramp scaled to the largest cell.
    pub fn to_svg(&self) -> String {
        let cell_w = 16;
        let cell_h = if self.steps > 256 { 1 } else { 4 };
        let label_h = 60;
        let w = self.width * cell_w;
        let h = self.steps * cell_h + label_h;
        let max = self.values.iter().cloned().fold(0.0f64, f64::max);
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" shape-rendering=\"crispEdges\">\n"
        );
        for (c, label) in self.column_labels.iter().enumerate() {
            let x = c * cell_w + cell_w / 2;
            let _ = writeln!(
                s,
                "<text x=\"{x}\" y=\"{}\" font-size=\"9\" transform=\"rotate(-90 {x} {})\">{label}</text>",
                label_h - 4,
                label_h - 4
            );
        }
        for t in 0..self.steps {
            for c in 0..self.width {
                let v = self.at(t, c);
                let shade = if max > 0.0 {
                    (255.0 * v / max).round() as u8
                } else {
                    0
                };
                let _ = writeln!(
                    s,
                    "<rect x=\"{}\" y=\"{}\" width=\"{cell_w}\" height=\"{cell_h}\" fill=\"rgb({shade},{shade},{shade})\"/>",
                    c * cell_w,
                    label_h + t * cell_h
                );
            }
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Line settings such as `115200,8n1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LineSettings {
    pub baud: u32,
    pub word_length: WordLength,
    pub parity: Parity,
    pub stop_bits: StopBits,
}

impl LineSettings {
    pub fn label(&self) -> String {
        format!(
            "{},{}{}{}",
            self.baud,
            self.word_length.bits(),
            self.parity.letter(),
            self.stop_bits.label()
        )
    }
}

impl std::str::FromStr for LineSettings {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("bad line settings {s:?}, expected e.g. 115200,8n1"));
        let (baud, rest) = s.split_once(',').ok_or_else(bad)?;
        let baud = baud.trim().parse().map_err(|_| bad())?;
        let rest = rest.trim();
        let mut chars = rest.chars();
        let word_length = chars
            .next()
            .and_then(|c| c.to_digit(10))
            .and_then(|d| WordLength::from_bits(d as u8))
            .ok_or_else(bad)?;
        let parity = chars.next().and_then(Parity::from_letter).ok_or_else(bad)?;
        let stop_bits = match chars.as_str() {
            "1" => StopBits::One,
            "1.5" => StopBits::OneAndHalf,
            "2" => StopBits::Two,
            _ => return Err(bad()),
        };
        Ok(Self {
            baud,
            word_length,
            parity,
            stop_bits,
        })
    }
}

pub const HELLO_TEXT: &str = "Hello World!";

/// Programming sequence: set DLAB, write the divisor, select the line
/// format (clearing DLAB), then write each character of `text` to THR.
pub fn hello_program(target: &LineSettings, text: &str) -> Result<Vec<UartCommand>> {
    let divisor = divisor_for_baud(target.baud).ok_or_else(|| {
        Error::InvalidInput(format!(
            "baud {} is not 115200/d for any 16-bit divisor d",
            target.baud
        ))
    })?;
    let lcr = encode_lcr(target.word_length, target.stop_bits, target.parity)?;
    let [dll, dlm] = divisor.to_le_bytes();
    let mut cmds = vec![
        UartCommand::write(REG_LCR, LCR_DLAB)?,
        UartCommand::write(REG_THR_DLL, dll)?,
        UartCommand::write(REG_IER_DLM, dlm)?,
        UartCommand::write(REG_LCR, lcr)?,
    ];
    for b in text.bytes() {
        cmds.push(UartCommand::write(REG_THR_DLL, b)?);
    }
    Ok(cmds)
}

/// One row of a "Hello World!" table: what the model reports after being
/// programmed for `target` and asked to send the text.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HelloRow {
    pub target: String,
    /// Reported baud of the final frame, unclamped.
    pub baud: i64,
    pub word_length: u8,
    pub parity: Parity,
    pub stop_bits: StopBits,
    pub output: String,
}

pub fn hello_world(model: &dyn SequenceModel, target: &LineSettings) -> Result<HelloRow> {
    if model.output_width() != UART_OUTPUT_WIDTH {
        return Err(Error::shape("hello model output", UART_OUTPUT_WIDTH, model.output_width()));
    }
    let cmds = hello_program(target, HELLO_TEXT)?;
    let inputs = EncodedSequence::from_rows(
        MachineKind::SerialPort.input_width(),
        cmds.iter().map(|&c| encode_uart_command(c)),
    )?;
    let outputs = model.predict(&inputs)?;
    let mut text = String::new();
    let mut last = None;
    for row in outputs.rows() {
        let frame = decode_uart_output(row)?;
        if frame.tx {
            text.push(frame.data as char);
        }
        last = Some((frame, reported_baud(row[UartGroup::Baud.columns().start])));
    }
    let (frame, baud) = last.expect("program is never empty");
    Ok(HelloRow {
        target: target.label(),
        baud,
        word_length: frame.word_length.bits(),
        parity: frame.parity,
        stop_bits: frame.stop_bits,
        output: text,
    })
}

/// A rendered table with a fixed column order.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Table {
    pub fn new(headers: &[&str]) -> Self {
        Self {
            headers: headers.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for row in std::iter::once(&self.headers).chain(&self.rows) {
            let cells: Vec<String> = row.iter().map(|c| csv_cell(c)).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let widths: Vec<usize> = (0..self.headers.len())
            .map(|c| {
                std::iter::once(&self.headers)
                    .chain(&self.rows)
                    .map(|r| r[c].chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |row: &Vec<String>| {
            row.iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut s = line(&self.headers);
        s.push('\n');
        s.push_str(
            &widths
                .iter()
                .map(|&w| "-".repeat(w))
                .collect::<Vec<_>>()
                .join("  "),
        );
        s.push('\n');
        for r in &self.rows {
            s.push_str(&line(r));
            s.push('\n');
        }
        s
    }
}

/// Formats an optional mean, `N/A` when absent.
pub fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "N/A".to_string(), |x| format!("{x:.digits$}"))
}

/// Columns: Machine, # Params, Epochs, % Success, Eval Loss, Eval Loss (all).
/// Epochs is the mean over runs; Eval Loss averages successful runs only.
pub fn experiment_table(summaries: &[ExperimentSummary]) -> Table {
    let mut t = Table::new(&[
        "Machine",
        "# Params",
        "Epochs",
        "% Success",
        "Eval Loss",
        "Eval Loss (all)",
    ]);
    for s in summaries {
        t.push(vec![
            s.machine.display_name().to_string(),
            s.param_count.to_string(),
            format!("{:.0}", s.mean_epochs),
            format!("{:.0}", 100.0 * s.success_rate),
            fmt_opt(s.mean_eval_loss, 4),
            fmt_opt(s.mean_eval_loss_all, 4),
        ]);
    }
    t
}

/// One row of the exact-mimicry table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MimicryRow {
    pub machine: MachineKind,
    pub total_outputs: usize,
    /// Epochs of the original protocol run.
    pub epochs: usize,
    /// Extra epochs to the best accuracy; `None` when the budget ran out.
    pub epochs_plus: Option<usize>,
    pub accuracy: f64,
}

/// Columns: Machine, # Outputs, Epochs, Epochs+, Accuracy.
pub fn mimicry_table(rows: &[MimicryRow]) -> Table {
    let mut t = Table::new(&["Machine", "# Outputs", "Epochs", "Epochs+", "Accuracy"]);
    for r in rows {
        t.push(vec![
            r.machine.display_name().to_string(),
            r.total_outputs.to_string(),
            r.epochs.to_string(),
            r.epochs_plus.map_or_else(|| "N/A".to_string(), |e| e.to_string()),
            format!("{:.4}%", 100.0 * r.accuracy),
        ]);
    }
    t
}

/// Columns: Output, Encoding, Output Size, Epochs, Val. Loss. `records`
/// are the decomposed runs in [`UartGroup::ALL`] order.
pub fn decomposed_table(records: &[RunRecord]) -> Result<Table> {
    if records.len() != UartGroup::ALL.len() {
        return Err(Error::shape("decomposed records", UartGroup::ALL.len(), records.len()));
    }
    let mut t = Table::new(&["Output", "Encoding", "Output Size", "Epochs", "Val. Loss"]);
    for (g, r) in UartGroup::ALL.into_iter().zip(records) {
        t.push(vec![
            g.label().to_string(),
            g.encoding().to_string(),
            g.width().to_string(),
            r.epochs.to_string(),
            fmt_opt(r.final_val_loss(), 6),
        ]);
    }
    Ok(t)
}

pub fn hello_table(rows: &[HelloRow]) -> Table {
    let mut t = Table::new(&["Target", "Baudrate", "Wordlen", "Parity", "Sbits", "Output"]);
    for r in rows {
        t.push(vec![
            r.target.clone(),
            r.baud.to_string(),
            r.word_length.to_string(),
            r.parity.label().to_string(),
            r.stop_bits.label().to_string(),
            r.output.clone(),
        ]);
    }
    t
}

pub fn state_space_table() -> Table {
    let mut t = Table::new(&["Machine", "Input", "Output", "Internal"]);
    for kind in MachineKind::ALL {
        let s = state_space(kind);
        t.push(vec![
            kind.display_name().to_string(),
            format!("2^{}", s.input_bits),
            format!("2^{}", s.output_bits),
            format!("2^{}", s.internal_bits),
        ]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate, generate_split, Split};

    #[test]
    fn ground_truth_is_perfect() {
        for kind in MachineKind::ALL {
            let d = generate(kind, 3, 40, 5).unwrap();
            let r = mimicry(&GroundTruth(kind), &d).unwrap();
            assert!(r.is_perfect(), "{kind}");
            assert_eq!(r.total_outputs, kind.output_width() * 40 * 3);
            assert_eq!(r.accuracy, 1.0);
        }
    }

    #[test]
    fn uart_groups_cover_the_vector() {
        let g = output_groups(MachineKind::SerialPort, 0..22).unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g.iter().map(|g| g.columns.len()).sum::<usize>(), 22);
        let wl = output_groups(MachineKind::SerialPort, 5..9).unwrap();
        assert_eq!(wl.len(), 1);
        assert_eq!(wl[0].columns, 0..4);
        assert!(output_groups(MachineKind::SerialPort, 5..8).is_err());
    }

    struct Perturbed<'a> {
        inner: GroundTruth,
        hits: &'a [(usize, usize)],
    }

    impl SequenceModel for Perturbed<'_> {
        fn output_width(&self) -> usize {
            self.inner.output_width()
        }
        fn predict(&self, inputs: &EncodedSequence) -> Result<EncodedSequence> {
            let mut out = self.inner.predict(inputs)?;
            for &(t, c) in self.hits {
                let v = &mut out.row_mut(t)[c];
                *v = 1.0 - *v;
            }
            Ok(out)
        }
    }

    #[test]
    fn perturbation_lowers_accuracy_monotonically() {
        let kind = MachineKind::SerialPort;
        let d = generate(kind, 1, 30, 2).unwrap();
        let mut hits = Vec::new();
        let mut prev = 1.0;
        // Flip data bits then tx one cell at a time.
        for (t, c) in [(3, 15), (4, 20), (7, 13), (9, 14)] {
            hits.push((t, c));
            let r = mimicry(
                &Perturbed {
                    inner: GroundTruth(kind),
                    hits: &hits,
                },
                &d,
            )
            .unwrap();
            assert!(r.accuracy < prev);
            prev = r.accuracy;
        }
    }

    #[test]
    fn onehot_and_baud_scoring() {
        let kind = MachineKind::SerialPort;
        let d = generate(kind, 1, 10, 4).unwrap();
        // Baud off by one unit of 1/115200.
        let model = Perturbed {
            inner: GroundTruth(kind),
            hits: &[],
        };
        let r = mimicry(&model, &d).unwrap();
        assert!(r.is_perfect());
        let mut pred = d.sequences[0].targets.clone();
        pred.row_mut(2)[12] += 1.0 / 115_200.0;
        pred.row_mut(5)[0..5].copy_from_slice(&[0.0, 0.0, 0.0, 0.9, 0.1]);
        let r = score_predictions(kind, 0..22, [(&pred, &d.sequences[0].targets)]).unwrap();
        assert_eq!(r.group("baud").unwrap().correct, 9);
        assert_eq!(r.total_outputs - r.correct_outputs, 1 + 5);
    }

    #[test]
    fn heatmap_of_perfect_model_is_zero() {
        let kind = MachineKind::SerialPort;
        let d = generate_split(kind, Split::Evaluation, 2, 16, 1).unwrap();
        let h = heatmap(&GroundTruth(kind), kind, &d.sequences).unwrap();
        assert!(h.values.iter().all(|&v| v == 0.0));
        assert_eq!(h.column_labels.len(), 22);
        assert_eq!(h.column_labels[12], "baud");
        assert!(h.to_svg().contains("rgb(0,0,0)"));
    }

    #[test]
    fn heatmap_mean_equals_evaluation_loss() {
        let kind = MachineKind::EightBit;
        let d = generate(kind, 3, 20, 8).unwrap();
        let net = Network::<f32>::init(crate::rnn::NetworkConfig::new(9, 8, 1)).unwrap();
        let h = heatmap(&net, kind, &d.sequences).unwrap();
        let loss = evaluation_loss(&net, &d).unwrap();
        assert!((h.mean() - loss).abs() / loss < 1e-5);
        assert!(h.values.iter().all(|&v| v >= 0.0));
        assert_eq!(h.to_csv().lines().count(), 21);
    }

    #[test]
    fn settings_parse_and_label() {
        let s: LineSettings = "2400,7o2".parse().unwrap();
        assert_eq!(s.baud, 2400);
        assert_eq!(s.word_length, WordLength::Seven);
        assert_eq!(s.parity, Parity::Odd);
        assert_eq!(s.stop_bits, StopBits::Two);
        assert_eq!(s.label(), "2400,7o2");
        assert!("9600,9n1".parse::<LineSettings>().is_err());
        assert!("9600".parse::<LineSettings>().is_err());
        assert_eq!("300,5n1.5".parse::<LineSettings>().unwrap().stop_bits, StopBits::OneAndHalf);
    }

    #[test]
    fn hello_ground_truth_rows() {
        let model = GroundTruth(MachineKind::SerialPort);
        let row = hello_world(&model, &"115200,8n1".parse().unwrap()).unwrap();
        assert_eq!(row.output, "Hello World!");
        assert_eq!((row.baud, row.word_length), (115_200, 8));
        assert_eq!((row.parity, row.stop_bits), (Parity::None, StopBits::One));

        let row = hello_world(&model, &"2400,7o2".parse().unwrap()).unwrap();
        assert_eq!((row.baud, row.word_length), (2400, 7));
        assert_eq!((row.parity, row.stop_bits), (Parity::Odd, StopBits::Two));
        let prog = hello_program(&"2400,7o2".parse().unwrap(), "").unwrap();
        assert_eq!(prog[1].data, 48);
    }

    #[test]
    fn hello_rejects_unreachable_baud() {
        let model = GroundTruth(MachineKind::SerialPort);
        assert!(hello_world(&model, &"50000,8n1".parse().unwrap()).is_err());
        assert!(hello_world(&GroundTruth(MachineKind::Parity), &"9600,8n1".parse().unwrap()).is_err());
    }

    #[test]
    fn tables_render() {
        let t = state_space_table();
        assert_eq!(t.headers, ["Machine", "Input", "Output", "Internal"]);
        assert_eq!(t.rows[5], ["SerialPortMachine", "2^12", "2^37", "2^37"]);
        assert!(t.to_text().lines().nth(1).unwrap().starts_with("---"));
        assert_eq!(fmt_opt(None, 3), "N/A");
        let mut q = Table::new(&["a"]);
        q.push(vec!["x,y".into()]);
        assert_eq!(q.to_csv(), "a\n\"x,y\"\n");
    }

    #[test]
    fn report_tables() {
        use crate::training::TrainingConfig;
        let s = ExperimentSummary::from_records(MachineKind::Parity, &[], &TrainingConfig::default());
        let t = experiment_table(&[s]);
        assert_eq!(
            t.headers,
            ["Machine", "# Params", "Epochs", "% Success", "Eval Loss", "Eval Loss (all)"]
        );
        assert_eq!(t.rows[0][4], "N/A");

        let t = mimicry_table(&[MimicryRow {
            machine: MachineKind::SerialPort,
            total_outputs: 2_883_584,
            epochs: 4096,
            epochs_plus: None,
            accuracy: 0.5,
        }]);
        assert_eq!(t.headers, ["Machine", "# Outputs", "Epochs", "Epochs+", "Accuracy"]);
        assert_eq!(t.rows[0][3], "N/A");
        assert_eq!(t.rows[0][4], "50.0000%");

        assert!(decomposed_table(&[]).is_err());
    }
}
