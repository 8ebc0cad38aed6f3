//! Multi-layer GRU sequence network, written from scratch.
//!
//! The network stacks `hidden_layers` GRU layers of equal width followed by a
//! logistic readout applied at every time step. All parameters live in one
//! flat vector; [`Layout`] records where each block sits. Per layer the block
//! order is `W_z W_r W_h U_z U_r U_h b_z b_r b_h` (the three `W` blocks form
//! one `3n x in` row-major matrix, likewise `U` is `3n x n` and `b` is `3n`),
//! then the readout weight (`out x n`) and bias (`out`).

mod backward;
mod checkpoint;
mod gru;
mod loss;
mod nadam;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoding::EncodedSequence;
use crate::error::{Error, Result};

pub use backward::Gradients;
pub use checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gru::{gru_step, sigmoid, GruLayer};
pub use loss::{msle, msle_elements, msle_grad};
pub use nadam::{clip_global_norm, Nadam, NadamConfig};

/// Floating-point element type of a network (`f32` for training, `f64` for
/// gradient checks).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Debug
    + Default
    + Send
    + Sync
    + 'static
{
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable constant")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub const DEFAULT_HIDDEN_LAYERS: usize = 4;

/// Topology and initialization seed of a network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_width: usize,
    pub output_width: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
    pub seed: u64,
    /// Truncate backpropagation through time to windows of this many steps.
    /// `None` backpropagates through the whole sequence.
    pub bptt_window: Option<usize>,
}

impl NetworkConfig {
    /// Four hidden layers of width `max(input, output) + 1`.
    pub fn new(input_width: usize, output_width: usize, seed: u64) -> Self {
        Self {
            input_width,
            output_width,
            hidden_layers: DEFAULT_HIDDEN_LAYERS,
            hidden_width: input_width.max(output_width) + 1,
            seed,
            bptt_window: None,
        }
    }

    pub fn with_hidden_width(mut self, hidden_width: usize) -> Self {
        self.hidden_width = hidden_width;
        self
    }

    pub fn with_hidden_layers(mut self, hidden_layers: usize) -> Self {
        self.hidden_layers = hidden_layers;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let zero = [
            ("input_width", self.input_width),
            ("output_width", self.output_width),
            ("hidden_layers", self.hidden_layers),
            ("hidden_width", self.hidden_width),
        ]
        .into_iter()
        .find(|&(_, v)| v == 0);
        if let Some((name, _)) = zero {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.bptt_window == Some(0) {
            return Err(Error::Config("bptt_window must be at least 1".into()));
        }
        Ok(())
    }

    /// Closed form: `sum_l 3n(in_l + n + 1) + out(n + 1)` where `in_0` is the
    /// input width and `in_l = n` above the first layer.
    pub fn param_count(&self) -> usize {
        let n = self.hidden_width;
        let first = 3 * n * (self.input_width + n + 1);
        let rest = (self.hidden_layers - 1) * 3 * n * (2 * n + 1);
        first + rest + self.output_width * (n + 1)
    }
}

/// A contiguous parameter block in the flat vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Block {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerLayout {
    pub input_width: usize,
    /// Input weights for all three gates, `3n x input_width`.
    pub w: Block,
    /// Recurrent weights for all three gates, `3n x n`.
    pub u: Block,
    /// Biases for all three gates, `3n`.
    pub b: Block,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub hidden: usize,
    pub layers: Vec<LayerLayout>,
    pub readout_w: Block,
    pub readout_b: Block,
    pub total: usize,
}

impl Layout {
    pub fn new(config: &NetworkConfig) -> Self {
        let n = config.hidden_width;
        let mut offset = 0;
        let mut block = |rows, cols| {
            let b = Block { offset, rows, cols };
            offset += rows * cols;
            b
        };
        let layers = (0..config.hidden_layers)
            .map(|l| {
                let input_width = if l == 0 { config.input_width } else { n };
                LayerLayout {
                    input_width,
                    w: block(3 * n, input_width),
                    u: block(3 * n, n),
                    b: block(3 * n, 1),
                }
            })
            .collect();
        let readout_w = block(config.output_width, n);
        let readout_b = block(config.output_width, 1);
        Self {
            hidden: n,
            layers,
            readout_w,
            readout_b,
            total: offset,
        }
    }

    /// Named per-gate blocks in storage order, for diagnostics and checks.
    pub fn named_blocks(&self) -> Vec<(String, Block)> {
        let n = self.hidden;
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            for (prefix, blk) in [("W", layer.w), ("U", layer.u), ("b", layer.b)] {
                for (g, gate) in ["z", "r", "h"].iter().enumerate() {
                    out.push((
                        format!("layer{l}.{prefix}_{gate}"),
                        Block {
                            offset: blk.offset + g * n * blk.cols,
                            rows: n,
                            cols: blk.cols,
                        },
                    ));
                }
            }
        }
        out.push(("readout.W".into(), self.readout_w));
        out.push(("readout.b".into(), self.readout_b));
        out
    }

    /// Name of the block containing flat index `i`.
    pub fn block_name(&self, i: usize) -> String {
        self.named_blocks()
            .into_iter()
            .find(|(_, b)| b.range().contains(&i))
            .map_or_else(|| format!("index {i}"), |(name, b)| format!("{name}[{}]", i - b.offset))
    }
}

/// Per-layer hidden vectors; zero at the start of every sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState<T> {
    pub layers: Vec<Vec<T>>,
}

impl<T: Scalar> HiddenState<T> {
    pub fn zeros(config: &NetworkConfig) -> Self {
        Self {
            layers: vec![vec![T::zero(); config.hidden_width]; config.hidden_layers],
        }
    }
}

/// Activations retained by a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    pub(crate) version: u64,
    pub(crate) steps: usize,
    pub(crate) inputs: Vec<T>,
    /// Per layer, `steps x n` of hidden outputs, update gates, reset gates and
    /// candidate states.
    pub(crate) h: Vec<Vec<T>>,
    pub(crate) z: Vec<Vec<T>>,
    pub(crate) r: Vec<Vec<T>>,
    pub(crate) hc: Vec<Vec<T>>,
    pub(crate) outputs: Vec<T>,
}

impl<T: Scalar> Trace<T> {
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// `steps x output_width` readout values.
    pub fn outputs(&self) -> &[T] {
        &self.outputs
    }
}

/// A GRU network: configuration plus flat parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    config: NetworkConfig,
    layout: Layout,
    params: Vec<T>,
    /// Bumped on every parameter mutation so stale traces are detected.
    version: u64,
}

/// Uniform in `[-1, 1)` from 53 random mantissa bits.
fn unit_symmetric(rng: &mut ChaCha8Rng) -> f64 {
    let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    2.0 * u - 1.0
}

impl<T: Scalar> Network<T> {
    /// Glorot-uniform weights drawn in storage order from
    /// `ChaCha8Rng::seed_from_u64(seed)`, zero biases. Each gate's `W` and `U`
    /// block uses its own fan-in/fan-out.
    pub fn init(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = vec![T::zero(); layout.total];
        let mut fill = |blk: Block, fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut params[blk.range()] {
                *p = T::lit(unit_symmetric(&mut rng) * limit);
            }
        };
        let n = layout.hidden;
        for layer in &layout.layers {
            fill(layer.w, layer.input_width, n);
            fill(layer.u, n, n);
        }
        fill(layout.readout_w, n, config.output_width);
        Ok(Self {
            config,
            layout,
            params,
            version: 0,
        })
    }

    pub fn from_params(config: NetworkConfig, params: Vec<T>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(Error::shape("network parameters", layout.total, params.len()));
        }
        Ok(Self {
            config,
            layout,
            params,
            version: 0,
        })
    }

    /// All-zero parameters.
    pub fn zeros(config: NetworkConfig) -> Result<Self> {
        let total = Layout::new(&config).total;
        Self::from_params(config, vec![T::zero(); total])
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding traces.
    pub fn params_mut(&mut self) -> &mut [T] {
        self.version += 1;
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn layer(&self, l: usize) -> GruLayer<'_, T> {
        let ll = &self.layout.layers[l];
        GruLayer {
            input_width: ll.input_width,
            hidden: self.layout.hidden,
            w: &self.params[ll.w.range()],
            u: &self.params[ll.u.range()],
            b: &self.params[ll.b.range()],
        }
    }

    /// Convert to another precision, keeping configuration and values.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            config: self.config,
            layout: self.layout.clone(),
            params: self
                .params
                .iter()
                .map(|p| U::from_f64(p.to_f64().unwrap()).unwrap())
                .collect(),
            version: 0,
        }
    }

    fn readout_into(&self, h: &[T], out: &mut [T]) {
        let n = self.layout.hidden;
        let w = &self.params[self.layout.readout_w.range()];
        let b = &self.params[self.layout.readout_b.range()];
        for (o, y) in out.iter_mut().enumerate() {
            let row = &w[o * n..(o + 1) * n];
            let a = b[o] + row.iter().zip(h).map(|(&w, &h)| w * h).sum::<T>();
            *y = sigmoid(a);
        }
    }

    /// Advance a streaming hidden state by one input row and return the output.
    pub fn step(&self, state: &mut HiddenState<T>, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.config.input_width {
            return Err(Error::shape("network input", self.config.input_width, x.len()));
        }
        let mut input = x.to_vec();
        for (l, h) in state.layers.iter_mut().enumerate() {
            *h = gru_step(&self.layer(l), &input, h)?;
            input.clone_from(h);
        }
        let mut out = vec![T::zero(); self.config.output_width];
        self.readout_into(&input, &mut out);
        Ok(out)
    }

    /// Run a whole sequence (`steps x input_width`, row-major) from a zero
    /// hidden state and keep every activation needed by [`Network::backward`].
    pub fn forward(&self, inputs: &[T]) -> Result<Trace<T>> {
        let iw = self.config.input_width;
        if !inputs.len().is_multiple_of(iw) {
            return Err(Error::shape("network input", iw, inputs.len() % iw));
        }
        let steps = inputs.len() / iw;
        let n = self.layout.hidden;
        let nl = self.config.hidden_layers;
        let ow = self.config.output_width;
        let buf = || vec![vec![T::zero(); steps * n]; nl];
        let mut trace = Trace {
            version: self.version,
            steps,
            inputs: inputs.to_vec(),
            h: buf(),
            z: buf(),
            r: buf(),
            hc: buf(),
            outputs: vec![T::zero(); steps * ow],
        };
        let zeros = vec![T::zero(); n];
        let mut scratch = gru::Scratch::new(n);
        for t in 0..steps {
            for l in 0..nl {
                let layer = self.layer(l);
                let (below, rest) = trace.h.split_at_mut(l);
                let x = if l == 0 {
                    &inputs[t * iw..(t + 1) * iw]
                } else {
                    &below[l - 1][t * n..(t + 1) * n]
                };
                let hl = &mut rest[0];
                let (prev, cur) = hl.split_at_mut(t * n);
                let h_prev = if t == 0 { &zeros[..] } else { &prev[(t - 1) * n..] };
                let rng = 0..n;
                gru::forward_into(
                    &layer,
                    x,
                    h_prev,
                    &mut scratch,
                    &mut trace.z[l][t * n..][rng.clone()],
                    &mut trace.r[l][t * n..][rng.clone()],
                    &mut trace.hc[l][t * n..][rng.clone()],
                    &mut cur[rng],
                );
            }
            let top = &trace.h[nl - 1][t * n..(t + 1) * n];
            let mut out = vec![T::zero(); ow];
            self.readout_into(top, &mut out);
            trace.outputs[t * ow..(t + 1) * ow].copy_from_slice(&out);
        }
        Ok(trace)
    }
}

impl Network<f32> {
    /// Forward pass over an encoded sequence, returning the outputs and trace.
    pub fn forward_sequence(&self, inputs: &EncodedSequence) -> Result<(EncodedSequence, Trace<f32>)> {
        if inputs.width() != self.config.input_width {
            return Err(Error::shape(
                "network input",
                self.config.input_width,
                inputs.width(),
            ));
        }
        let trace = self.forward(inputs.values())?;
        let outputs = EncodedSequence::new(self.config.output_width, trace.outputs.clone())?;
        Ok((outputs, trace))
    }

    pub fn predict(&self, inputs: &EncodedSequence) -> Result<EncodedSequence> {
        self.forward_sequence(inputs).map(|(o, _)| o)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(layers: usize) -> NetworkConfig {
        NetworkConfig::new(3, 2, 5).with_hidden_width(4).with_hidden_layers(layers)
    }

    #[test]
    fn heuristic_width() {
        assert_eq!(NetworkConfig::new(9, 8, 0).hidden_width, 10);
        assert_eq!(NetworkConfig::new(9, 1, 0).hidden_width, 10);
        assert_eq!(NetworkConfig::new(12, 22, 0).hidden_width, 23);
        assert_eq!(NetworkConfig::new(12, 22, 0).hidden_layers, 4);
    }

    #[test]
    fn param_count_matches_layout() {
        for cfg in [
            NetworkConfig::new(9, 8, 0),
            NetworkConfig::new(9, 1, 0),
            NetworkConfig::new(12, 22, 0),
            tiny(1),
            tiny(3),
        ] {
            assert_eq!(cfg.param_count(), Layout::new(&cfg).total);
        }
        // 3*10*(9+10+1) + 3*3*10*21 + 8*11
        assert_eq!(NetworkConfig::new(9, 8, 0).param_count(), 2578);
    }

    #[test]
    fn named_blocks_tile_the_vector() {
        let layout = Layout::new(&tiny(2));
        let mut next = 0;
        for (_, b) in layout.named_blocks() {
            assert_eq!(b.offset, next);
            next += b.len();
        }
        assert_eq!(next, layout.total);
        assert_eq!(layout.block_name(0), "layer0.W_z[0]");
    }

    #[test]
    fn zero_widths_are_rejected() {
        let mut cfg = tiny(1);
        cfg.hidden_width = 0;
        assert!(matches!(Network::<f32>::init(cfg), Err(Error::Config(_))));
        assert!(Network::<f32>::init(NetworkConfig::new(0, 1, 0)).is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = NetworkConfig::new(9, 8, 42);
        let a = Network::<f32>::init(cfg).unwrap();
        let b = Network::<f32>::init(cfg).unwrap();
        assert_eq!(a.params(), b.params());
        let c = Network::<f32>::init(cfg.with_seed(43)).unwrap();
        assert_ne!(a.params(), c.params());

        let layout = a.layout();
        let n = layout.hidden as f64;
        let check = |blk: Block, fan_in: f64, fan_out: f64| {
            let limit = (6.0 / (fan_in + fan_out)).sqrt() as f32;
            assert!(a.params()[blk.range()].iter().all(|p| p.abs() <= limit));
        };
        for l in &layout.layers {
            check(l.w, l.input_width as f64, n);
            check(l.u, n, n);
            assert!(a.params()[l.b.range()].iter().all(|&p| p == 0.0));
        }
        check(layout.readout_w, n, 8.0);
    }

    #[test]
    fn zero_network_outputs_half() {
        let net = Network::<f32>::zeros(NetworkConfig::new(9, 8, 0)).unwrap();
        let inputs = EncodedSequence::new(9, vec![1.0; 9 * 5]).unwrap();
        let (out, _) = net.forward_sequence(&inputs).unwrap();
        assert_eq!((out.steps(), out.width()), (5, 8));
        assert!(out.values().iter().all(|&y| y == 0.5));
    }

    #[test]
    fn forward_rejects_wrong_width() {
        let net = Network::<f32>::init(NetworkConfig::new(9, 1, 0)).unwrap();
        let inputs = EncodedSequence::new(12, vec![0.0; 24]).unwrap();
        assert!(net.forward_sequence(&inputs).is_err());
    }

    #[test]
    fn single_step_equals_layer_chain() {
        let net = Network::<f64>::init(tiny(3)).unwrap();
        let x = [0.3, -0.7, 1.0];
        let trace = net.forward(&x).unwrap();

        // Chain gru_step through the layers and apply the readout by hand.
        let mut h = x.to_vec();
        for l in 0..3 {
            h = gru_step(&net.layer(l), &h, &[0.0; 4]).unwrap();
        }
        let layout = net.layout();
        let w = &net.params()[layout.readout_w.range()];
        let b = &net.params()[layout.readout_b.range()];
        for o in 0..2 {
            let a: f64 = b[o] + (0..4).map(|j| w[o * 4 + j] * h[j]).sum::<f64>();
            let y = 1.0 / (1.0 + (-a).exp());
            assert!((trace.outputs()[o] - y).abs() < 1e-12);
        }
    }

    #[test]
    fn streaming_matches_forward() {
        let net = Network::<f32>::init(tiny(2)).unwrap();
        let inputs: Vec<f32> = (0..15).map(|i| (i % 4) as f32 * 0.25).collect();
        let trace = net.forward(&inputs).unwrap();
        let mut state = HiddenState::zeros(net.config());
        for t in 0..5 {
            let y = net.step(&mut state, &inputs[t * 3..(t + 1) * 3]).unwrap();
            assert_eq!(y.as_slice(), &trace.outputs()[t * 2..(t + 1) * 2]);
        }
    }

    #[test]
    fn outputs_in_open_unit_interval() {
        let net = Network::<f32>::init(NetworkConfig::new(12, 22, 3)).unwrap();
        let inputs: Vec<f32> = (0..12 * 20).map(|i| ((i * 7) % 5) as f32).collect();
        let trace = net.forward(&inputs).unwrap();
        assert!(trace.outputs().iter().all(|&y| y > 0.0 && y < 1.0));
    }
}
