//! Deterministic simulators for the six test devices.
//!
//! Every machine is a latched-input transducer: each command updates the
//! internal state and the machine emits one output frame computed from the
//! updated state. The five simple machines share an 8-latch state and differ
//! only in how the latches map onto outputs. The serial port is a 16550 UART
//! model that simulates the transmit path and line configuration only.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The six simulated devices, in order of increasing complexity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MachineKind {
    EightBit,
    SingleDirect,
    SingleInvert,
    SimpleXor,
    Parity,
    SerialPort,
}

impl MachineKind {
    pub const ALL: [MachineKind; 6] = [
        MachineKind::EightBit,
        MachineKind::SingleDirect,
        MachineKind::SingleInvert,
        MachineKind::SimpleXor,
        MachineKind::Parity,
        MachineKind::SerialPort,
    ];

    pub const SIMPLE: [MachineKind; 5] = [
        MachineKind::EightBit,
        MachineKind::SingleDirect,
        MachineKind::SingleInvert,
        MachineKind::SimpleXor,
        MachineKind::Parity,
    ];

    pub fn is_simple(self) -> bool {
        self != MachineKind::SerialPort
    }

    /// Width of the encoded command vector.
    pub fn input_width(self) -> usize {
        match self {
            MachineKind::SerialPort => 12,
            _ => 9,
        }
    }

    /// Width of the encoded output vector.
    pub fn output_width(self) -> usize {
        match self {
            MachineKind::EightBit => 8,
            MachineKind::SerialPort => 22,
            _ => 1,
        }
    }

    /// Number of distinct commands the machine accepts.
    pub fn command_space(self) -> usize {
        match self {
            MachineKind::SerialPort => 2 * 8 * 256,
            _ => 2 * 8,
        }
    }

    /// Short identifier used on the command line and in file headers.
    pub fn slug(self) -> &'static str {
        match self {
            MachineKind::EightBit => "eightbit",
            MachineKind::SingleDirect => "direct",
            MachineKind::SingleInvert => "invert",
            MachineKind::SimpleXor => "xor",
            MachineKind::Parity => "parity",
            MachineKind::SerialPort => "uart",
        }
    }

    /// Display name used in report tables.
    pub fn display_name(self) -> &'static str {
        match self {
            MachineKind::EightBit => "EightBitMachine",
            MachineKind::SingleDirect => "SingleDirectMachine",
            MachineKind::SingleInvert => "SingleInvertMachine",
            MachineKind::SimpleXor => "SimpleXORMachine",
            MachineKind::Parity => "ParityMachine",
            MachineKind::SerialPort => "SerialPortMachine",
        }
    }
}

impl fmt::Display for MachineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl From<MachineKind> for String {
    fn from(k: MachineKind) -> String {
        k.slug().to_string()
    }
}

impl TryFrom<String> for MachineKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for MachineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        let key = key.strip_suffix("machine").unwrap_or(&key);
        match key {
            "eightbit" | "eight" | "8bit" => Ok(MachineKind::EightBit),
            "direct" | "singledirect" => Ok(MachineKind::SingleDirect),
            "invert" | "singleinvert" => Ok(MachineKind::SingleInvert),
            "xor" | "simplexor" => Ok(MachineKind::SimpleXor),
            "parity" => Ok(MachineKind::Parity),
            "uart" | "serial" | "serialport" | "16550" => Ok(MachineKind::SerialPort),
            _ => Err(Error::InvalidInput(format!("unknown machine {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Set,
    Clear,
}

/// Set or clear one of the eight latched inputs of a simple machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SimpleCommand {
    pub action: Action,
    index: u8,
}

impl SimpleCommand {
    pub fn new(action: Action, index: u8) -> Result<Self> {
        if index > 7 {
            return Err(Error::InvalidInput(format!(
                "latch index {index} out of range 0..=7"
            )));
        }
        Ok(Self { action, index })
    }

    pub fn set(index: u8) -> Result<Self> {
        Self::new(Action::Set, index)
    }

    pub fn clear(index: u8) -> Result<Self> {
        Self::new(Action::Clear, index)
    }

    pub fn index(&self) -> u8 {
        self.index
    }

    /// Dense code in `0..16`: bit 3 is the action (1 = set), bits 0-2 the index.
    pub fn code(&self) -> usize {
        let action = match self.action {
            Action::Set => 8,
            Action::Clear => 0,
        };
        action | self.index as usize
    }

    pub fn from_code(code: usize) -> Self {
        let action = if code & 8 != 0 {
            Action::Set
        } else {
            Action::Clear
        };
        Self {
            action,
            index: (code & 7) as u8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UartOp {
    Read,
    Write,
}

/// A register access on the UART. `data` is carried for reads too but ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UartCommand {
    pub op: UartOp,
    register: u8,
    pub data: u8,
}

impl UartCommand {
    pub fn new(op: UartOp, register: u8, data: u8) -> Result<Self> {
        if register > 7 {
            return Err(Error::InvalidInput(format!(
                "register offset {register} out of range 0..=7"
            )));
        }
        Ok(Self { op, register, data })
    }

    pub fn write(register: u8, data: u8) -> Result<Self> {
        Self::new(UartOp::Write, register, data)
    }

    pub fn read(register: u8) -> Result<Self> {
        Self::new(UartOp::Read, register, 0)
    }

    pub fn register(&self) -> u8 {
        self.register
    }

    /// Dense code in `0..4096`: bit 11 is the op (1 = write), bits 8-10 the
    /// register, bits 0-7 the data byte.
    pub fn code(&self) -> usize {
        let op = match self.op {
            UartOp::Write => 1 << 11,
            UartOp::Read => 0,
        };
        op | (self.register as usize) << 8 | self.data as usize
    }

    pub fn from_code(code: usize) -> Self {
        let op = if code & (1 << 11) != 0 {
            UartOp::Write
        } else {
            UartOp::Read
        };
        Self {
            op,
            register: ((code >> 8) & 7) as u8,
            data: (code & 0xff) as u8,
        }
    }
}

/// Eight latched input bits; bit `i` holds latch `i`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct SimpleState {
    pub latches: u8,
}

impl SimpleState {
    pub fn latch(&self, index: usize) -> bool {
        self.latches >> index & 1 == 1
    }
}

/// Apply one command to a simple machine and return the new state and output.
pub fn simple_step(
    kind: MachineKind,
    state: SimpleState,
    cmd: SimpleCommand,
) -> Result<(SimpleState, Vec<bool>)> {
    if !kind.is_simple() {
        return Err(Error::InvalidInput(format!(
            "{kind} does not accept set/clear commands"
        )));
    }
    let mask = 1u8 << cmd.index;
    let latches = match cmd.action {
        Action::Set => state.latches | mask,
        Action::Clear => state.latches & !mask,
    };
    let next = SimpleState { latches };
    Ok((next, simple_output(kind, next)))
}

fn simple_output(kind: MachineKind, state: SimpleState) -> Vec<bool> {
    match kind {
        MachineKind::EightBit => (0..8).map(|i| state.latch(i)).collect(),
        MachineKind::SingleDirect => vec![state.latch(0)],
        MachineKind::SingleInvert => vec![!state.latch(0)],
        MachineKind::SimpleXor => vec![state.latch(0) ^ state.latch(1)],
        MachineKind::Parity => vec![state.latches.count_ones() % 2 == 1],
        MachineKind::SerialPort => unreachable!("serial port has no latch output"),
    }
}

pub const UART_CLOCK: u32 = 115_200;

pub const REG_THR_DLL: u8 = 0;
pub const REG_IER_DLM: u8 = 1;
pub const REG_FCR: u8 = 2;
pub const REG_LCR: u8 = 3;
pub const REG_MCR: u8 = 4;
pub const REG_LSR: u8 = 5;
pub const REG_MSR: u8 = 6;
pub const REG_SCR: u8 = 7;

pub const LCR_DLAB: u8 = 0x80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WordLength {
    Five,
    Six,
    Seven,
    Eight,
}

impl WordLength {
    pub const ALL: [WordLength; 4] = [
        WordLength::Five,
        WordLength::Six,
        WordLength::Seven,
        WordLength::Eight,
    ];

    pub fn bits(self) -> u8 {
        self.index() as u8 + 5
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_bits(bits: u8) -> Option<Self> {
        match bits {
            5..=8 => Some(Self::ALL[(bits - 5) as usize]),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StopBits {
    One,
    OneAndHalf,
    Two,
}

impl StopBits {
    pub const ALL: [StopBits; 3] = [StopBits::One, StopBits::OneAndHalf, StopBits::Two];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            StopBits::One => "1",
            StopBits::OneAndHalf => "1.5",
            StopBits::Two => "2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parity {
    None,
    Odd,
    Even,
    High,
    Low,
}

impl Parity {
    pub const ALL: [Parity; 5] = [
        Parity::None,
        Parity::Odd,
        Parity::Even,
        Parity::High,
        Parity::Low,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Parity::None => "None",
            Parity::Odd => "Odd",
            Parity::Even => "Even",
            Parity::High => "High",
            Parity::Low => "Low",
        }
    }

    /// Single-letter code used in settings notation such as `8n1`.
    pub fn letter(self) -> char {
        match self {
            Parity::None => 'n',
            Parity::Odd => 'o',
            Parity::Even => 'e',
            Parity::High => 'h',
            Parity::Low => 'l',
        }
    }

    pub fn from_letter(c: char) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.letter() == c.to_ascii_lowercase())
    }
}

/// Line configuration decoded from an LCR value.
pub fn decode_lcr(lcr: u8) -> (WordLength, StopBits, Parity) {
    let word = WordLength::ALL[(lcr & 0b11) as usize];
    let stop = match (lcr & 0b100 != 0, word) {
        (false, _) => StopBits::One,
        (true, WordLength::Five) => StopBits::OneAndHalf,
        (true, _) => StopBits::Two,
    };
    let parity = if lcr & 0b1000 == 0 {
        Parity::None
    } else {
        match (lcr & 0b1_0000 != 0, lcr & 0b10_0000 != 0) {
            (false, false) => Parity::Odd,
            (true, false) => Parity::Even,
            (false, true) => Parity::High,
            (true, true) => Parity::Low,
        }
    };
    (word, stop, parity)
}

/// LCR value (DLAB clear) that selects the given line configuration.
///
/// Fails for 1.5 stop bits with a word length other than five, which the
/// hardware cannot express.
pub fn encode_lcr(word: WordLength, stop: StopBits, parity: Parity) -> Result<u8> {
    let stop_bit = match (stop, word) {
        (StopBits::One, _) => 0,
        (StopBits::OneAndHalf, WordLength::Five) => 0b100,
        (StopBits::Two, w) if w != WordLength::Five => 0b100,
        _ => {
            return Err(Error::InvalidInput(format!(
                "{} stop bits not available with {}-bit words",
                stop.label(),
                word.bits()
            )))
        }
    };
    let parity_bits = match parity {
        Parity::None => 0,
        Parity::Odd => 0b00_1000,
        Parity::Even => 0b01_1000,
        Parity::High => 0b10_1000,
        Parity::Low => 0b11_1000,
    };
    Ok(word.index() as u8 | stop_bit | parity_bits)
}

/// Baud rate produced by a 16-bit divisor; divisor 0 reports 0.
pub fn baud_for_divisor(divisor: u16) -> u32 {
    if divisor == 0 {
        0
    } else {
        UART_CLOCK / divisor as u32
    }
}

/// Smallest divisor producing exactly `baud`, if any.
pub fn divisor_for_baud(baud: u32) -> Option<u16> {
    if baud == 0 {
        return Some(0);
    }
    if baud > UART_CLOCK {
        return None;
    }
    // floor(C / d) == b  <=>  C / (b + 1) < d <= C / b
    let d = UART_CLOCK / (baud + 1) + 1;
    (d <= u16::MAX as u32 && UART_CLOCK / d == baud).then_some(d as u16)
}

/// Visible register file plus the divisor latch pair shadowed behind DLAB.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct UartState {
    pub registers: [u8; 8],
    pub dll: u8,
    pub dlm: u8,
}

impl UartState {
    pub fn lcr(&self) -> u8 {
        self.registers[REG_LCR as usize]
    }

    pub fn dlab(&self) -> bool {
        self.lcr() & LCR_DLAB != 0
    }

    pub fn divisor(&self) -> u16 {
        u16::from_le_bytes([self.dll, self.dlm])
    }

    fn frame(&self, tx: Option<u8>) -> UartFrame {
        let (word_length, stop_bits, parity) = decode_lcr(self.lcr());
        UartFrame {
            word_length,
            baud: baud_for_divisor(self.divisor()),
            stop_bits,
            parity,
            tx: tx.is_some(),
            data: tx.unwrap_or(0),
        }
    }
}

/// Observable UART output for one time step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UartFrame {
    pub word_length: WordLength,
    pub baud: u32,
    pub stop_bits: StopBits,
    pub parity: Parity,
    pub tx: bool,
    pub data: u8,
}

impl UartFrame {
    /// Checks the frame invariants the device itself guarantees.
    pub fn validate(&self) -> Result<()> {
        if self.baud > UART_CLOCK {
            return Err(Error::InvalidInput(format!(
                "baud {} exceeds {UART_CLOCK}",
                self.baud
            )));
        }
        if self.stop_bits == StopBits::OneAndHalf && self.word_length != WordLength::Five {
            return Err(Error::InvalidInput(
                "1.5 stop bits require 5-bit words".into(),
            ));
        }
        if !self.tx && self.data != 0 {
            return Err(Error::InvalidInput("data present without tx".into()));
        }
        Ok(())
    }
}

/// Apply one register access to the UART.
pub fn uart_step(state: UartState, cmd: UartCommand) -> (UartState, UartFrame) {
    let mut next = state;
    let mut tx = None;
    if cmd.op == UartOp::Write {
        match (cmd.register, state.dlab()) {
            (REG_THR_DLL, true) => next.dll = cmd.data,
            (REG_IER_DLM, true) => next.dlm = cmd.data,
            (REG_THR_DLL, false) => tx = Some(cmd.data),
            (reg, _) => next.registers[reg as usize] = cmd.data,
        }
    }
    (next, next.frame(tx))
}

/// Input to any machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Command {
    Simple(SimpleCommand),
    Uart(UartCommand),
}

/// Output of any machine for one step.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum OutputFrame {
    Bits(Vec<bool>),
    Uart(UartFrame),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MachineState {
    Simple(SimpleState),
    Uart(UartState),
}

/// A device instance that can be stepped one command at a time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Machine {
    kind: MachineKind,
    state: MachineState,
}

impl Machine {
    pub fn new(kind: MachineKind) -> Self {
        let state = if kind.is_simple() {
            MachineState::Simple(SimpleState::default())
        } else {
            MachineState::Uart(UartState::default())
        };
        Self { kind, state }
    }

    pub fn kind(&self) -> MachineKind {
        self.kind
    }

    pub fn step(&mut self, cmd: &Command) -> Result<OutputFrame> {
        match (&mut self.state, cmd) {
            (MachineState::Simple(state), Command::Simple(c)) => {
                let (next, bits) = simple_step(self.kind, *state, *c)?;
                *state = next;
                Ok(OutputFrame::Bits(bits))
            }
            (MachineState::Uart(state), Command::Uart(c)) => {
                let (next, frame) = uart_step(*state, *c);
                *state = next;
                Ok(OutputFrame::Uart(frame))
            }
            _ => Err(Error::InvalidInput(format!(
                "command {cmd:?} is not valid for {}",
                self.kind
            ))),
        }
    }
}

/// Run a command sequence through a freshly reset machine.
pub fn run_sequence(kind: MachineKind, cmds: &[Command]) -> Result<Vec<OutputFrame>> {
    let mut machine = Machine::new(kind);
    cmds.iter().map(|c| machine.step(c)).collect()
}

/// Log2 magnitudes of a machine's input, output, and internal state spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StateSpace {
    pub input_bits: u32,
    pub output_bits: u32,
    pub internal_bits: u32,
}

/// Approximate state-space magnitudes, as powers of two.
///
/// For the simple machines the input magnitude is the encoded command width,
/// the output magnitude the number of output bits, and the internal magnitude
/// the number of latches that can influence the output, found by flipping
/// each latch in every reachable state. The UART figures are the published
/// approximations for the full register model.
pub fn state_space(kind: MachineKind) -> StateSpace {
    if !kind.is_simple() {
        return StateSpace {
            input_bits: kind.input_width() as u32,
            output_bits: 37,
            internal_bits: 37,
        };
    }
    let relevant = (0..8)
        .filter(|&latch| {
            (0..=255u8).any(|latches| {
                let a = simple_output(kind, SimpleState { latches });
                let b = simple_output(
                    kind,
                    SimpleState {
                        latches: latches ^ (1 << latch),
                    },
                );
                a != b
            })
        })
        .count() as u32;
    StateSpace {
        input_bits: kind.input_width() as u32,
        output_bits: kind.output_width() as u32,
        internal_bits: relevant,
    }
}
