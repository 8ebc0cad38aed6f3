//! Observation datasets: uniformly random command sequences paired with the
//! ground-truth device outputs.
//!
//! # Generation
//!
//! Each sequence draws from its own ChaCha8 stream: the generator is seeded
//! with `ChaCha8Rng::seed_from_u64(seed)` and the stream id is
//! `split_tag << 32 | sequence_index` (train = 0, validation = 1,
//! evaluation = 2). Every command consumes one `next_u32()`; the low bits
//! select the command code (`& 15` for simple machines, `& 4095` for the
//! UART; both spaces are powers of two, so the draw is exactly uniform).
//! Codes map to commands through [`SimpleCommand::from_code`] and
//! [`UartCommand::from_code`].
//!
//! # File format
//!
//! One ASCII header line:
//!
//! ```text
//! devmimic-dataset 1 machine=parity split=train input_width=9 output_width=1 sequences=2 length=4 seed=7
//! ```
//!
//! followed by the payload: for each sequence in order, the input rows then
//! the target rows, row-major, as little-endian `f32`.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{decode_command, encode_pair, EncodedSequence};
use crate::error::{Error, FormatError, Result};
use crate::machines::{run_sequence, Command, MachineKind, SimpleCommand, UartCommand};

pub const DATASET_MAGIC: &str = "devmimic-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Evaluation,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Evaluation];

    fn tag(self) -> u64 {
        self as u64
    }

    pub fn slug(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Evaluation => "evaluation",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|x| x.slug() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown split {s:?}")))
    }
}

/// Sequence counts per split and the shared sequence length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub validation: usize,
    pub evaluation: usize,
    pub length: usize,
}

impl SplitSizes {
    /// 4096 / 1024 / 128 sequences of 1024 commands.
    pub const PAPER: SplitSizes = SplitSizes {
        train: 4096,
        validation: 1024,
        evaluation: 128,
        length: 1024,
    };

    /// 256 / 64 / 32 sequences of 64 commands; trains in seconds.
    pub const DESK: SplitSizes = SplitSizes {
        train: 256,
        validation: 64,
        evaluation: 32,
        length: 64,
    };

    pub fn count(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Validation => self.validation,
            Split::Evaluation => self.evaluation,
        }
    }
}

/// Named dataset presets. Serialized in the [`FromStr`] notation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Preset {
    Paper,
    Desk,
    Custom(SplitSizes),
}

impl Preset {
    pub fn sizes(&self) -> SplitSizes {
        match self {
            Preset::Paper => SplitSizes::PAPER,
            Preset::Desk => SplitSizes::DESK,
            Preset::Custom(s) => *s,
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Preset::Paper => f.write_str("paper"),
            Preset::Desk => f.write_str("desk"),
            Preset::Custom(s) => write!(f, "{}/{}/{}x{}", s.train, s.validation, s.evaluation, s.length),
        }
    }
}

impl From<Preset> for String {
    fn from(p: Preset) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for Preset {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Preset {
    type Err = Error;

    /// `paper`, `desk`, or `TRAIN/VAL/EVAL x LENGTH` such as `64/16/8x32`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => return Ok(Preset::Paper),
            "desk" => return Ok(Preset::Desk),
            _ => {}
        }
        let bad = || Error::InvalidInput(format!("unknown preset {s:?}"));
        let (counts, length) = s.split_once('x').ok_or_else(bad)?;
        let counts: Vec<usize> = counts
            .split('/')
            .map(|c| c.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [train, validation, evaluation] = counts[..] else {
            return Err(bad());
        };
        let length = length.trim().parse().map_err(|_| bad())?;
        Ok(Preset::Custom(SplitSizes {
            train,
            validation,
            evaluation,
            length,
        }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequencePair {
    pub inputs: EncodedSequence,
    pub targets: EncodedSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kind: MachineKind,
    pub split: Split,
    pub seed: u64,
    pub sequence_length: usize,
    pub sequences: Vec<SequencePair>,
}

/// Train, validation, and evaluation datasets for one machine.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub validation: Dataset,
    pub evaluation: Dataset,
}

impl Splits {
    pub fn generate(kind: MachineKind, sizes: SplitSizes, seed: u64) -> Result<Self> {
        let make = |split| generate_split(kind, split, sizes.count(split), sizes.length, seed);
        Ok(Self {
            train: make(Split::Train)?,
            validation: make(Split::Validation)?,
            evaluation: make(Split::Evaluation)?,
        })
    }

    pub fn kind(&self) -> MachineKind {
        self.train.kind
    }

    pub fn get(&self, split: Split) -> &Dataset {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Evaluation => &self.evaluation,
        }
    }

    /// Replace every target with the given column range.
    pub fn slice_targets(&self, cols: std::ops::Range<usize>) -> Splits {
        Splits {
            train: self.train.slice_targets(cols.clone()),
            validation: self.validation.slice_targets(cols.clone()),
            evaluation: self.evaluation.slice_targets(cols),
        }
    }
}

/// The random command stream for one sequence.
pub fn sequence_commands(
    kind: MachineKind,
    split: Split,
    seed: u64,
    index: usize,
    length: usize,
) -> Vec<Command> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(split.tag() << 32 | index as u64);
    let mask = kind.command_space() as u32 - 1;
    (0..length)
        .map(|_| {
            let code = (rng.next_u32() & mask) as usize;
            if kind.is_simple() {
                Command::Simple(SimpleCommand::from_code(code))
            } else {
                Command::Uart(UartCommand::from_code(code))
            }
        })
        .collect()
}

/// Generate one split of `n_sequences` sequences of `length` commands.
pub fn generate_split(
    kind: MachineKind,
    split: Split,
    n_sequences: usize,
    length: usize,
    seed: u64,
) -> Result<Dataset> {
    if n_sequences == 0 || length == 0 {
        return Err(Error::Config(format!(
            "dataset needs at least one sequence and one step (got {n_sequences} x {length})"
        )));
    }
    let sequences = (0..n_sequences)
        .into_par_iter()
        .map(|i| {
            let cmds = sequence_commands(kind, split, seed, i, length);
            let outputs = run_sequence(kind, &cmds)?;
            let (inputs, targets) = encode_pair(kind, &cmds, &outputs)?;
            Ok(SequencePair { inputs, targets })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        kind,
        split,
        seed,
        sequence_length: length,
        sequences,
    })
}

/// Generate a training split.
pub fn generate(kind: MachineKind, n_sequences: usize, length: usize, seed: u64) -> Result<Dataset> {
    generate_split(kind, Split::Train, n_sequences, length, seed)
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn input_width(&self) -> usize {
        self.sequences
            .first()
            .map_or(self.kind.input_width(), |p| p.inputs.width())
    }

    pub fn output_width(&self) -> usize {
        self.sequences
            .first()
            .map_or(self.kind.output_width(), |p| p.targets.width())
    }

    /// Decode the stored inputs back into commands.
    pub fn commands(&self, index: usize) -> Result<Vec<Command>> {
        self.sequences[index]
            .inputs
            .rows()
            .map(|r| decode_command(self.kind, r))
            .collect()
    }

    fn slice_targets(&self, cols: std::ops::Range<usize>) -> Dataset {
        Dataset {
            sequences: self
                .sequences
                .iter()
                .map(|p| SequencePair {
                    inputs: p.inputs.clone(),
                    targets: p.targets.slice_columns(cols.clone()),
                })
                .collect(),
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> Dataset {
        Dataset {
            kind: self.kind,
            split: self.split,
            seed: self.seed,
            sequence_length: self.sequence_length,
            sequences: Vec::new(),
        }
    }

    fn header(&self) -> String {
        format!(
            "{DATASET_MAGIC} {DATASET_VERSION} machine={} split={} input_width={} output_width={} sequences={} length={} seed={}\n",
            self.kind.slug(),
            self.split,
            self.input_width(),
            self.output_width(),
            self.len(),
            self.sequence_length,
            self.seed
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = self.header();
        let floats: usize = self
            .sequences
            .iter()
            .map(|p| p.inputs.values().len() + p.targets.values().len())
            .sum();
        let mut out = Vec::with_capacity(header.len() + 4 * floats);
        out.extend_from_slice(header.as_bytes());
        for p in &self.sequences {
            for x in p.inputs.values().iter().chain(p.targets.values()) {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|kind| Error::format(path, kind))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Dataset, FormatError> {
        let header = Header::parse(bytes, DATASET_MAGIC, DATASET_VERSION)?;
        let kind: MachineKind = header
            .get("machine")?
            .parse()
            .map_err(|e: Error| FormatError::Header(e.to_string()))?;
        let split: Split = header
            .get("split")?
            .parse()
            .map_err(|e: Error| FormatError::Header(e.to_string()))?;
        let input_width = header.usize("input_width")?;
        let output_width = header.usize("output_width")?;
        if input_width != kind.input_width() {
            return Err(FormatError::Width {
                field: "input_width",
                found: input_width,
                expected: kind.input_width(),
            });
        }
        // Decomposed targets are column slices, so only bound the width.
        if output_width == 0 || output_width > kind.output_width() {
            return Err(FormatError::Width {
                field: "output_width",
                found: output_width,
                expected: kind.output_width(),
            });
        }
        let count = header.usize("sequences")?;
        let length = header.usize("length")?;
        let seed = header.u64("seed")?;

        let floats = count
            .checked_mul(length)
            .and_then(|n| n.checked_mul(input_width + output_width))
            .ok_or_else(|| FormatError::Header("payload size overflows".into()))?;
        let payload = read_f32_payload(&bytes[header.len..], floats)?;

        let per_seq = length * (input_width + output_width);
        let sequences = payload
            .chunks_exact(per_seq.max(1))
            .take(count)
            .map(|chunk| {
                let (inp, tgt) = chunk.split_at(length * input_width);
                SequencePair {
                    inputs: EncodedSequence::new(input_width, inp.to_vec()).expect("width > 0"),
                    targets: EncodedSequence::new(output_width, tgt.to_vec()).expect("width > 0"),
                }
            })
            .collect();
        Ok(Dataset {
            kind,
            split,
            seed,
            sequence_length: length,
            sequences,
        })
    }

    /// One row per time step: `sequence,step,in_0..,out_0..`.
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let ins: Vec<String> = (0..self.input_width()).map(|i| format!("in_{i}")).collect();
        let outs: Vec<String> = (0..self.output_width())
            .map(|i| format!("out_{i}"))
            .collect();
        writeln!(w, "sequence,step,{},{}", ins.join(","), outs.join(","))?;
        for (s, p) in self.sequences.iter().enumerate() {
            for (t, (i, o)) in p.inputs.rows().zip(p.targets.rows()).enumerate() {
                let cells: Vec<String> = i.iter().chain(o).map(|x| x.to_string()).collect();
                writeln!(w, "{s},{t},{}", cells.join(","))?;
            }
        }
        Ok(())
    }
}

/// Parsed `magic version key=value ...` header line shared by datasets and
/// checkpoints.
pub(crate) struct Header {
    fields: Vec<(String, String)>,
    /// Header length in bytes including the newline.
    pub len: usize,
}

impl Header {
    pub fn parse(bytes: &[u8], magic: &'static str, version: u32) -> Result<Header, FormatError> {
        if !bytes.starts_with(magic.as_bytes()) {
            return Err(FormatError::BadMagic { expected: magic });
        }
        let end = bytes
            .iter()
            .take(4096)
            .position(|&b| b == b'\n')
            .ok_or_else(|| FormatError::Header("missing newline".into()))?;
        let line = std::str::from_utf8(&bytes[..end])
            .map_err(|_| FormatError::Header("header is not utf-8".into()))?;
        let mut tokens = line.split_ascii_whitespace();
        if tokens.next() != Some(magic) {
            return Err(FormatError::BadMagic { expected: magic });
        }
        let found = tokens.next().unwrap_or("");
        if found.parse::<u32>().ok() != Some(version) {
            return Err(FormatError::Version {
                found: found.to_string(),
                expected: version,
            });
        }
        let fields = tokens
            .map(|t| {
                t.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| FormatError::Header(format!("bad field {t:?}")))
            })
            .collect::<Result<_, _>>()?;
        Ok(Header {
            fields,
            len: end + 1,
        })
    }

    pub fn get(&self, key: &str) -> Result<&str, FormatError> {
        self.fields
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| FormatError::Header(format!("missing field {key}")))
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<T, FormatError> {
        let v = self.get(key)?;
        v.parse()
            .map_err(|_| FormatError::Header(format!("bad value for {key}: {v:?}")))
    }

    pub fn usize(&self, key: &str) -> Result<usize, FormatError> {
        self.parsed(key)
    }

    pub fn u64(&self, key: &str) -> Result<u64, FormatError> {
        self.parsed(key)
    }
}

pub(crate) fn read_f32_payload(bytes: &[u8], floats: usize) -> Result<Vec<f32>, FormatError> {
    let expected = floats
        .checked_mul(4)
        .ok_or_else(|| FormatError::Header("payload size overflows".into()))?;
    if bytes.len() < expected {
        return Err(FormatError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(FormatError::Trailing(bytes.len() - expected));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}
