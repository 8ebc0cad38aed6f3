//! Conversion between symbolic commands/outputs and network vectors.
//!
//! Layouts (all values in `[0, 1]`, binary fields big-endian):
//!
//! | vector        | width | layout                                                  |
//! |---------------|-------|---------------------------------------------------------|
//! | simple input  | 9     | `[set?, one-hot index 0..8]`                            |
//! | simple output | 8 / 1 | one value per output bit                                |
//! | UART input    | 12    | `[write?, reg b2 b1 b0, data b7..b0]` (data 0 on reads) |
//! | UART output   | 22    | parity(5) word(4) stop(3) baud tx data(8)               |
//!
//! Parity order is None, Odd, Even, High, Low; word length 5, 6, 7, 8; stop
//! bits 1, 1.5, 2. Baud is `baud / 115200`.

use std::ops::Range;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::machines::{
    Action, Command, MachineKind, OutputFrame, Parity, SimpleCommand, StopBits, UartCommand,
    UartFrame, UartOp, WordLength, UART_CLOCK,
};

pub const SIMPLE_INPUT_WIDTH: usize = 9;
pub const UART_INPUT_WIDTH: usize = 12;
pub const UART_OUTPUT_WIDTH: usize = 22;

/// One of the six observable UART outputs and its columns in the 22-wide
/// output vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum UartGroup {
    Parity,
    WordLength,
    StopBits,
    Baud,
    Tx,
    Data,
}

impl UartGroup {
    pub const ALL: [UartGroup; 6] = [
        UartGroup::Parity,
        UartGroup::WordLength,
        UartGroup::StopBits,
        UartGroup::Baud,
        UartGroup::Tx,
        UartGroup::Data,
    ];

    pub fn columns(self) -> Range<usize> {
        match self {
            UartGroup::Parity => 0..5,
            UartGroup::WordLength => 5..9,
            UartGroup::StopBits => 9..12,
            UartGroup::Baud => 12..13,
            UartGroup::Tx => 13..14,
            UartGroup::Data => 14..22,
        }
    }

    pub fn width(self) -> usize {
        self.columns().len()
    }

    pub fn label(self) -> &'static str {
        match self {
            UartGroup::Parity => "Parity",
            UartGroup::WordLength => "Word Length",
            UartGroup::StopBits => "Stop Bits",
            UartGroup::Baud => "Baud Rate",
            UartGroup::Tx => "Tx",
            UartGroup::Data => "Data",
        }
    }

    pub fn encoding(self) -> &'static str {
        match self {
            UartGroup::Parity | UartGroup::WordLength | UartGroup::StopBits => "one-hot",
            UartGroup::Baud => "float",
            UartGroup::Tx => "true/false",
            UartGroup::Data => "binary",
        }
    }

    pub fn slug(self) -> &'static str {
        match self {
            UartGroup::Parity => "parity",
            UartGroup::WordLength => "wordlen",
            UartGroup::StopBits => "stop",
            UartGroup::Baud => "baud",
            UartGroup::Tx => "tx",
            UartGroup::Data => "data",
        }
    }
}

/// A `(time_steps x width)` row-major matrix of `f32` values.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSequence {
    width: usize,
    values: Vec<f32>,
}

impl EncodedSequence {
    pub fn new(width: usize, values: Vec<f32>) -> Result<Self> {
        if width == 0 || !values.len().is_multiple_of(width) {
            return Err(Error::shape("encoded sequence", width, values.len()));
        }
        Ok(Self { width, values })
    }

    pub fn zeros(steps: usize, width: usize) -> Self {
        Self {
            width,
            values: vec![0.0; steps * width],
        }
    }

    pub fn from_rows<I, R>(width: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[f32]>,
    {
        let mut values = Vec::new();
        for row in rows {
            let row = row.as_ref();
            if row.len() != width {
                return Err(Error::shape("encoded row", width, row.len()));
            }
            values.extend_from_slice(row);
        }
        Self::new(width, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn steps(&self) -> usize {
        self.values.len() / self.width
    }

    pub fn row(&self, t: usize) -> &[f32] {
        &self.values[t * self.width..(t + 1) * self.width]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f32] {
        &mut self.values[t * self.width..(t + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.values.chunks_exact(self.width)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Columns `cols` of every row, as a new sequence.
    pub fn slice_columns(&self, cols: Range<usize>) -> EncodedSequence {
        let width = cols.len();
        let values = self
            .rows()
            .flat_map(|r| r[cols.clone()].iter().copied())
            .collect();
        EncodedSequence { width, values }
    }

    /// Concatenate sequences of equal length column-wise.
    pub fn concat_columns(parts: &[EncodedSequence]) -> Result<EncodedSequence> {
        let steps = parts.first().map_or(0, |p| p.steps());
        if let Some(p) = parts.iter().find(|p| p.steps() != steps) {
            return Err(Error::shape("column concat", steps, p.steps()));
        }
        let width = parts.iter().map(|p| p.width).sum();
        let mut values = Vec::with_capacity(steps * width);
        for t in 0..steps {
            for p in parts {
                values.extend_from_slice(p.row(t));
            }
        }
        Self::new(width, values)
    }
}

fn flag(b: bool) -> f32 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn push_bits(out: &mut Vec<f32>, value: u32, bits: u32) {
    out.extend((0..bits).rev().map(|i| flag(value >> i & 1 == 1)));
}

fn threshold(x: f32) -> bool {
    x >= 0.5
}

fn bits_to_u8(raw: &[f32]) -> u8 {
    raw.iter().fold(0u8, |acc, &x| acc << 1 | threshold(x) as u8)
}

/// Index of the largest element; ties go to the lowest index.
fn argmax(raw: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in raw.iter().enumerate().skip(1) {
        if x > raw[best] {
            best = i;
        }
    }
    best
}

fn one_hot(out: &mut Vec<f32>, index: usize, width: usize) {
    out.extend((0..width).map(|i| flag(i == index)));
}

pub fn encode_simple_command(cmd: SimpleCommand) -> [f32; SIMPLE_INPUT_WIDTH] {
    let mut v = [0.0; SIMPLE_INPUT_WIDTH];
    v[0] = flag(cmd.action == Action::Set);
    v[1 + cmd.index() as usize] = 1.0;
    v
}

pub fn encode_uart_command(cmd: UartCommand) -> [f32; UART_INPUT_WIDTH] {
    let mut v = Vec::with_capacity(UART_INPUT_WIDTH);
    v.push(flag(cmd.op == UartOp::Write));
    push_bits(&mut v, cmd.register() as u32, 3);
    let data = match cmd.op {
        UartOp::Write => cmd.data,
        UartOp::Read => 0,
    };
    push_bits(&mut v, data as u32, 8);
    v.try_into().expect("uart command width")
}

pub fn encode_command(cmd: &Command) -> Vec<f32> {
    match cmd {
        Command::Simple(c) => encode_simple_command(*c).to_vec(),
        Command::Uart(c) => encode_uart_command(*c).to_vec(),
    }
}

/// Recover a simple command from its exact encoding.
pub fn decode_simple_command(raw: &[f32]) -> Result<SimpleCommand> {
    if raw.len() != SIMPLE_INPUT_WIDTH {
        return Err(Error::shape("simple command", SIMPLE_INPUT_WIDTH, raw.len()));
    }
    let hot: Vec<usize> = (0..8).filter(|&i| raw[1 + i] == 1.0).collect();
    if hot.len() != 1 {
        return Err(Error::InvalidInput(format!(
            "selector is not one-hot: {:?}",
            &raw[1..]
        )));
    }
    let action = if threshold(raw[0]) {
        Action::Set
    } else {
        Action::Clear
    };
    SimpleCommand::new(action, hot[0] as u8)
}

/// Recover a UART command from its encoding (reads decode with data 0).
pub fn decode_uart_command(raw: &[f32]) -> Result<UartCommand> {
    if raw.len() != UART_INPUT_WIDTH {
        return Err(Error::shape("uart command", UART_INPUT_WIDTH, raw.len()));
    }
    let op = if threshold(raw[0]) {
        UartOp::Write
    } else {
        UartOp::Read
    };
    UartCommand::new(op, bits_to_u8(&raw[1..4]), bits_to_u8(&raw[4..12]))
}

pub fn decode_command(kind: MachineKind, raw: &[f32]) -> Result<Command> {
    if kind.is_simple() {
        decode_simple_command(raw).map(Command::Simple)
    } else {
        decode_uart_command(raw).map(Command::Uart)
    }
}

pub fn encode_simple_output(bits: &[bool]) -> Vec<f32> {
    bits.iter().map(|&b| flag(b)).collect()
}

pub fn encode_uart_output(frame: &UartFrame) -> Result<[f32; UART_OUTPUT_WIDTH]> {
    if frame.baud > UART_CLOCK {
        return Err(Error::InvalidInput(format!(
            "baud {} outside 0..={UART_CLOCK}",
            frame.baud
        )));
    }
    let mut v = Vec::with_capacity(UART_OUTPUT_WIDTH);
    one_hot(&mut v, frame.parity.index(), 5);
    one_hot(&mut v, frame.word_length.index(), 4);
    one_hot(&mut v, frame.stop_bits.index(), 3);
    v.push((frame.baud as f64 / UART_CLOCK as f64) as f32);
    v.push(flag(frame.tx));
    push_bits(&mut v, frame.data as u32, 8);
    Ok(v.try_into().expect("uart output width"))
}

pub fn encode_output(frame: &OutputFrame) -> Result<Vec<f32>> {
    match frame {
        OutputFrame::Bits(bits) => Ok(encode_simple_output(bits)),
        OutputFrame::Uart(f) => encode_uart_output(f).map(|v| v.to_vec()),
    }
}

pub fn decode_simple_output(raw: &[f32], width: usize) -> Result<Vec<bool>> {
    if raw.len() != width {
        return Err(Error::shape("simple output", width, raw.len()));
    }
    Ok(raw.iter().map(|&x| threshold(x)).collect())
}

/// Baud as reported for comparison: `round(raw * 115200)` with no clamping,
/// so overshoot such as 115285 stays visible.
pub fn reported_baud(raw_baud: f32) -> i64 {
    (raw_baud as f64 * UART_CLOCK as f64).round() as i64
}

/// Decode a raw 22-wide network output into a frame. Total over all inputs:
/// one-hot groups take the argmax, flags and data bits threshold at 0.5, and
/// baud is clamped to `[0, 1]` before rescaling.
pub fn decode_uart_output(raw: &[f32]) -> Result<UartFrame> {
    if raw.len() != UART_OUTPUT_WIDTH {
        return Err(Error::shape("uart output", UART_OUTPUT_WIDTH, raw.len()));
    }
    let col = |g: UartGroup| &raw[g.columns()];
    let baud_raw = col(UartGroup::Baud)[0];
    // NaN clamps to 0.
    let clamped = if baud_raw >= 0.0 { baud_raw.min(1.0) } else { 0.0 };
    Ok(UartFrame {
        parity: Parity::ALL[argmax(col(UartGroup::Parity))],
        word_length: WordLength::ALL[argmax(col(UartGroup::WordLength))],
        stop_bits: StopBits::ALL[argmax(col(UartGroup::StopBits))],
        baud: reported_baud(clamped) as u32,
        tx: threshold(col(UartGroup::Tx)[0]),
        data: bits_to_u8(col(UartGroup::Data)),
    })
}

/// Decode a raw output row for any machine.
pub fn decode_output(kind: MachineKind, raw: &[f32]) -> Result<OutputFrame> {
    if kind.is_simple() {
        decode_simple_output(raw, kind.output_width()).map(OutputFrame::Bits)
    } else {
        decode_uart_output(raw).map(OutputFrame::Uart)
    }
}

/// Encode a full command sequence and its outputs.
pub fn encode_pair(
    kind: MachineKind,
    cmds: &[Command],
    outputs: &[OutputFrame],
) -> Result<(EncodedSequence, EncodedSequence)> {
    let inputs = EncodedSequence::from_rows(kind.input_width(), cmds.iter().map(encode_command))?;
    let targets = EncodedSequence::from_rows(
        kind.output_width(),
        outputs
            .iter()
            .map(encode_output)
            .collect::<Result<Vec<_>>>()?,
    )?;
    Ok((inputs, targets))
}
