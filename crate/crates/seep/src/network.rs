//! Dense feed-forward networks with a scalar head.
//!
//! The parameter vector is flat so optimizers can treat the model as a plain
//! `R^P -> R` function. Layout, fixed and relied on by checkpoints and the
//! batch replay engine: for each layer in order, the weight matrix in
//! neuron-major order (all inputs of neuron 0, then neuron 1, ...), followed
//! by that layer's biases. The final layer has no activation.
//!
//! Checkpoint format (binary, little-endian):
//!
//! ```text
//! bytes 0..5   magic "SPNN1"
//! u32          input_dim
//! u32          hidden_layers
//! u32          width
//! u32          activation (0 tanh, 1 sigmoid, 2 elu, 3 relu, 4 identity)
//! u32          output_dim
//! u64          init seed (record-keeping only)
//! u64          parameter count
//! f64 * count  flat parameters
//! ```
//!
//! Inputs are physical coordinates; training and evaluation first map them to
//! [-1, 1] with a [`Normalizer`] built from the domain's bounding box, so that
//! e.g. a 240 m wide dam foundation does not saturate tanh. The chain-rule
//! factors of that affine map enter through the jet seeds, so jets always
//! report derivatives with respect to the *physical* coordinates.

use crate::autodiff::{
    activation_scalars, apply_chain, Activation, AdError, Jet2, Tape, Var,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid network config: {0}")]
    BadConfig(String),
    #[error("parameter vector has length {got}, expected {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid checkpoint: {0}")]
    BadCheckpoint(String),
}

// ── Configuration ───────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub input_dim: usize,
    pub hidden_layers: usize,
    /// Neurons per hidden layer (all hidden layers share one width).
    pub width: usize,
    pub activation: Activation,
    pub output_dim: usize,
}

impl NetConfig {
    pub fn new(input_dim: usize, hidden_layers: usize, width: usize, activation: Activation) -> Self {
        NetConfig {
            input_dim,
            hidden_layers,
            width,
            activation,
            output_dim: 1,
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if self.input_dim == 0 {
            return Err(NetError::BadConfig("input_dim must be at least 1".into()));
        }
        if self.hidden_layers == 0 {
            return Err(NetError::BadConfig(
                "at least one hidden layer is required".into(),
            ));
        }
        if self.width == 0 {
            return Err(NetError::BadConfig("width must be at least 1".into()));
        }
        if self.output_dim != 1 {
            return Err(NetError::BadConfig(
                "only scalar-output networks are supported".into(),
            ));
        }
        Ok(())
    }

    /// (fan_in, fan_out) per layer, input to head.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_layers + 1);
        dims.push((self.input_dim, self.width));
        for _ in 1..self.hidden_layers {
            dims.push((self.width, self.width));
        }
        dims.push((self.width, self.output_dim));
        dims
    }

    pub fn n_params(&self) -> usize {
        self.layer_dims()
            .iter()
            .map(|&(nin, nout)| nin * nout + nout)
            .sum()
    }

    fn layer_offset(&self, layer: usize) -> usize {
        self.layer_dims()[..layer]
            .iter()
            .map(|&(nin, nout)| nin * nout + nout)
            .sum()
    }

    /// Flat index of weight (layer, neuron, input).
    pub fn weight_index(&self, layer: usize, neuron: usize, input: usize) -> usize {
        let (nin, nout) = self.layer_dims()[layer];
        assert!(neuron < nout && input < nin, "weight index out of range");
        self.layer_offset(layer) + neuron * nin + input
    }

    /// Flat index of bias (layer, neuron).
    pub fn bias_index(&self, layer: usize, neuron: usize) -> usize {
        let (nin, nout) = self.layer_dims()[layer];
        assert!(neuron < nout, "bias index out of range");
        self.layer_offset(layer) + nin * nout + neuron
    }
}

// ── Parameters ──────────────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub config: NetConfig,
    pub theta: Vec<f64>,
}

impl NetworkParams {
    /// Glorot-uniform weights, U(-sqrt(6/(n_in+n_out)), +sqrt(6/(n_in+n_out)));
    /// zero biases. Bit-deterministic for a given (config, seed).
    pub fn init(config: NetConfig, seed: u64) -> NetworkParams {
        config.validate().expect("init requires a valid config");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = Vec::with_capacity(config.n_params());
        for (nin, nout) in config.layer_dims() {
            let limit = (6.0 / (nin + nout) as f64).sqrt();
            for _ in 0..nin * nout {
                theta.push(rng.gen_range(-limit..limit));
            }
            theta.extend(std::iter::repeat_n(0.0, nout));
        }
        NetworkParams { config, theta }
    }

    pub fn zeros(config: NetConfig) -> NetworkParams {
        config.validate().expect("zeros requires a valid config");
        let n = config.n_params();
        NetworkParams {
            config,
            theta: vec![0.0; n],
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.theta.clone()
    }

    pub fn unflatten(config: NetConfig, theta: Vec<f64>) -> Result<NetworkParams, NetError> {
        if theta.len() != config.n_params() {
            return Err(NetError::LengthMismatch {
                expected: config.n_params(),
                got: theta.len(),
            });
        }
        Ok(NetworkParams { config, theta })
    }

    pub fn weight(&self, layer: usize, neuron: usize, input: usize) -> f64 {
        self.theta[self.config.weight_index(layer, neuron, input)]
    }

    pub fn bias(&self, layer: usize, neuron: usize) -> f64 {
        self.theta[self.config.bias_index(layer, neuron)]
    }

    /// Plain evaluation of the head value. Performs the same floating-point
    /// operations in the same order as the tape recording, so values agree
    /// bit for bit with [`ParamLeaves::forward_value`].
    pub fn forward(&self, x: &[f64]) -> f64 {
        forward_flat(&self.config, &self.theta, x)
    }

    /// Registers every parameter as a trainable tape leaf, in flat order.
    pub fn register_leaves(&self, tape: &mut Tape) -> ParamLeaves {
        let vars = self.theta.iter().map(|&v| tape.leaf(v)).collect();
        ParamLeaves {
            config: self.config,
            vars,
        }
    }
}

/// Head value for a flat parameter slice (shared by `forward` and the
/// optimizer-side evaluations that work on raw vectors).
pub fn forward_flat(config: &NetConfig, theta: &[f64], x: &[f64]) -> f64 {
    assert_eq!(
        x.len(),
        config.input_dim,
        "input has {} coordinates, network expects {}",
        x.len(),
        config.input_dim
    );
    assert_eq!(theta.len(), config.n_params(), "parameter length mismatch");
    let dims = config.layer_dims();
    let last = dims.len() - 1;
    let mut cur = x.to_vec();
    let mut off = 0;
    for (li, &(nin, nout)) in dims.iter().enumerate() {
        let mut next = Vec::with_capacity(nout);
        for j in 0..nout {
            let w = &theta[off + j * nin..off + (j + 1) * nin];
            let mut s = 0.0;
            for k in 0..nin {
                s += w[k] * cur[k];
            }
            s += theta[off + nin * nout + j];
            next.push(if li == last {
                s
            } else {
                config.activation.eval(s)
            });
        }
        off += nin * nout + nout;
        cur = next;
    }
    cur[0]
}

// ── Tape-recorded forwards ──────────────────────────────────────────────

/// Network parameters registered on a tape.
pub struct ParamLeaves {
    config: NetConfig,
    vars: Vec<Var>,
}

/// Value plus first and second derivatives along several directions at once.
/// The value channel and per-neuron activation scalars are recorded once and
/// shared by all directions, which is what makes multi-direction residuals
/// cheaper than stacking independent jets.
pub struct MultiJet {
    pub value: Var,
    pub d1: Vec<Var>,
    pub d2: Vec<Var>,
}

impl MultiJet {
    /// An input coordinate with the given first-derivative seed per direction
    /// (second-derivative seeds are zero: coordinates are affine in
    /// themselves).
    pub fn seed_input(tape: &mut Tape, value: Var, seeds: &[f64]) -> MultiJet {
        let d1 = seeds.iter().map(|&s| tape.constant(s)).collect();
        let d2 = seeds.iter().map(|_| tape.constant(0.0)).collect();
        MultiJet { value, d1, d2 }
    }

    pub fn jet(&self, dir: usize) -> Jet2 {
        Jet2 {
            value: self.value,
            d1: self.d1[dir],
            d2: self.d2[dir],
        }
    }
}

impl ParamLeaves {
    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Records the head value only (used by boundary terms that never
    /// differentiate in space).
    pub fn forward_value(&self, tape: &mut Tape, inputs: &[Var]) -> Result<Var, AdError> {
        assert_eq!(inputs.len(), self.config.input_dim, "input arity mismatch");
        let dims = self.config.layer_dims();
        let last = dims.len() - 1;
        let mut cur = inputs.to_vec();
        let mut off = 0;
        for (li, &(nin, nout)) in dims.iter().enumerate() {
            let mut next = Vec::with_capacity(nout);
            for j in 0..nout {
                let w = &self.vars[off + j * nin..off + (j + 1) * nin];
                let s = tape.dot(w, &cur);
                let s = tape.add(s, self.vars[off + nin * nout + j]);
                next.push(if li == last {
                    s
                } else {
                    record_value_activation(tape, self.config.activation, s)?
                });
            }
            off += nin * nout + nout;
            cur = next;
        }
        Ok(cur[0])
    }

    /// Records the head value with first and second derivatives along every
    /// direction the inputs were seeded with.
    pub fn forward_multijet(
        &self,
        tape: &mut Tape,
        inputs: &[MultiJet],
    ) -> Result<MultiJet, AdError> {
        assert_eq!(inputs.len(), self.config.input_dim, "input arity mismatch");
        let ndir = inputs.first().map_or(0, |m| m.d1.len());
        for m in inputs {
            assert_eq!(m.d1.len(), ndir, "ragged direction counts across inputs");
            assert_eq!(m.d2.len(), ndir, "ragged direction counts across inputs");
        }

        let dims = self.config.layer_dims();
        let last = dims.len() - 1;
        let mut vals: Vec<Var> = inputs.iter().map(|m| m.value).collect();
        let mut d1: Vec<Vec<Var>> = (0..ndir)
            .map(|d| inputs.iter().map(|m| m.d1[d]).collect())
            .collect();
        let mut d2: Vec<Vec<Var>> = (0..ndir)
            .map(|d| inputs.iter().map(|m| m.d2[d]).collect())
            .collect();

        let mut off = 0;
        for (li, &(nin, nout)) in dims.iter().enumerate() {
            let mut nvals = Vec::with_capacity(nout);
            let mut nd1: Vec<Vec<Var>> = vec![Vec::with_capacity(nout); ndir];
            let mut nd2: Vec<Vec<Var>> = vec![Vec::with_capacity(nout); ndir];
            for j in 0..nout {
                let w = &self.vars[off + j * nin..off + (j + 1) * nin];
                let s = tape.dot(w, &vals);
                let s = tape.add(s, self.vars[off + nin * nout + j]);
                if li == last {
                    nvals.push(s);
                    for dir in 0..ndir {
                        nd1[dir].push(tape.dot(w, &d1[dir]));
                        nd2[dir].push(tape.dot(w, &d2[dir]));
                    }
                } else {
                    let (a, ap, app) = activation_scalars(tape, self.config.activation, s)?;
                    nvals.push(a);
                    for dir in 0..ndir {
                        let sd1 = tape.dot(w, &d1[dir]);
                        let sd2 = tape.dot(w, &d2[dir]);
                        let out = apply_chain(
                            tape,
                            a,
                            ap,
                            app,
                            Jet2 {
                                value: s,
                                d1: sd1,
                                d2: sd2,
                            },
                        );
                        nd1[dir].push(out.d1);
                        nd2[dir].push(out.d2);
                    }
                }
            }
            off += nin * nout + nout;
            vals = nvals;
            d1 = nd1;
            d2 = nd2;
        }
        Ok(MultiJet {
            value: vals[0],
            d1: d1.iter().map(|col| col[0]).collect(),
            d2: d2.iter().map(|col| col[0]).collect(),
        })
    }

    /// Head value with derivatives along one input coordinate, at a concrete
    /// point. The value component equals `forward` exactly.
    pub fn forward_jet(
        &self,
        tape: &mut Tape,
        x: &[f64],
        direction: usize,
    ) -> Result<Jet2, AdError> {
        assert!(
            direction < self.config.input_dim,
            "direction {direction} out of range for {} inputs",
            self.config.input_dim
        );
        let inputs: Vec<MultiJet> = x
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let val = tape.constant(v);
                MultiJet::seed_input(tape, val, &[if i == direction { 1.0 } else { 0.0 }])
            })
            .collect();
        let mj = self.forward_multijet(tape, &inputs)?;
        Ok(mj.jet(0))
    }
}

fn record_value_activation(tape: &mut Tape, act: Activation, s: Var) -> Result<Var, AdError> {
    match act {
        Activation::Identity => Ok(s),
        Activation::Tanh => Ok(tape.tanh(s)),
        Activation::Sigmoid => Ok(tape.sigmoid(s)),
        Activation::Elu => {
            if tape.value(s) >= 0.0 {
                Ok(s)
            } else {
                let e = tape.exp(s);
                Ok(tape.addc(e, -1.0))
            }
        }
        Activation::Relu => Err(AdError::JetUnsupported("relu")),
    }
}

// ── Input normalization ─────────────────────────────────────────────────

/// Affine map of each physical coordinate to [-1, 1] over the domain's
/// bounding box. Applied identically at training and evaluation; the jet
/// seeds carry its slope so derivatives stay physical.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Normalizer {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Normalizer {
        assert_eq!(lo.len(), hi.len(), "bound arity mismatch");
        for i in 0..lo.len() {
            assert!(
                hi[i] > lo[i],
                "degenerate bounding box on coordinate {i}: [{}, {}]",
                lo[i],
                hi[i]
            );
        }
        Normalizer { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// d(normalized)/d(physical) for coordinate `i`.
    pub fn slope(&self, i: usize) -> f64 {
        2.0 / (self.hi[i] - self.lo[i])
    }

    fn offset(&self, i: usize) -> f64 {
        -(self.lo[i] + self.hi[i]) / (self.hi[i] - self.lo[i])
    }

    pub fn map1(&self, i: usize, x: f64) -> f64 {
        x * self.slope(i) + self.offset(i)
    }

    pub fn map_point(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim(), "point arity mismatch");
        (0..x.len()).map(|i| self.map1(i, x[i])).collect()
    }

    /// Records the map on a tape (same two operations as `map1`, so recorded
    /// values match the plain evaluation exactly).
    pub fn record(&self, tape: &mut Tape, coords: &[Var]) -> Vec<Var> {
        assert_eq!(coords.len(), self.dim(), "point arity mismatch");
        coords
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let scaled = tape.scale(c, self.slope(i));
                tape.addc(scaled, self.offset(i))
            })
            .collect()
    }

    /// Normalizes raw coordinate vars and seeds one derivative direction per
    /// entry of `dirs` (each entry names the physical coordinate to
    /// differentiate along). The seeds fold in the map's slope, so the
    /// network's jets report d/dx_physical.
    pub fn record_multijet_inputs(
        &self,
        tape: &mut Tape,
        coords: &[Var],
        dirs: &[usize],
    ) -> Vec<MultiJet> {
        let mapped = self.record(tape, coords);
        mapped
            .iter()
            .enumerate()
            .map(|(i, &u)| {
                let seeds: Vec<f64> = dirs
                    .iter()
                    .map(|&d| if d == i { self.slope(i) } else { 0.0 })
                    .collect();
                MultiJet::seed_input(tape, u, &seeds)
            })
            .collect()
    }
}

// ── Checkpoints ─────────────────────────────────────────────────────────

fn activation_code(act: Activation) -> u32 {
    match act {
        Activation::Tanh => 0,
        Activation::Sigmoid => 1,
        Activation::Elu => 2,
        Activation::Relu => 3,
        Activation::Identity => 4,
    }
}

fn activation_from_code(code: u32) -> Option<Activation> {
    Some(match code {
        0 => Activation::Tanh,
        1 => Activation::Sigmoid,
        2 => Activation::Elu,
        3 => Activation::Relu,
        4 => Activation::Identity,
        _ => return None,
    })
}

const CHECKPOINT_MAGIC: &[u8; 5] = b"SPNN1";

pub fn save_checkpoint(
    path: &Path,
    config: &NetConfig,
    seed: u64,
    theta: &[f64],
) -> Result<(), NetError> {
    if theta.len() != config.n_params() {
        return Err(NetError::LengthMismatch {
            expected: config.n_params(),
            got: theta.len(),
        });
    }
    let mut bytes = Vec::with_capacity(5 + 4 * 5 + 8 * 2 + 8 * theta.len());
    bytes.extend_from_slice(CHECKPOINT_MAGIC);
    for v in [
        config.input_dim as u32,
        config.hidden_layers as u32,
        config.width as u32,
        activation_code(config.activation),
        config.output_dim as u32,
    ] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes.extend_from_slice(&seed.to_le_bytes());
    bytes.extend_from_slice(&(theta.len() as u64).to_le_bytes());
    for v in theta {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(NetConfig, u64, Vec<f64>), NetError> {
    let bytes = std::fs::read(path)?;
    let mut r = ByteReader {
        buf: &bytes,
        pos: 0,
    };
    if r.take(5)? != CHECKPOINT_MAGIC {
        return Err(NetError::BadCheckpoint("bad magic".into()));
    }
    let input_dim = r.u32()? as usize;
    let hidden_layers = r.u32()? as usize;
    let width = r.u32()? as usize;
    let act_code = r.u32()?;
    let output_dim = r.u32()? as usize;
    let seed = r.u64()?;
    let count = r.u64()? as usize;
    let activation = activation_from_code(act_code)
        .ok_or_else(|| NetError::BadCheckpoint(format!("unknown activation code {act_code}")))?;
    let config = NetConfig {
        input_dim,
        hidden_layers,
        width,
        activation,
        output_dim,
    };
    config
        .validate()
        .map_err(|e| NetError::BadCheckpoint(e.to_string()))?;
    if count != config.n_params() {
        return Err(NetError::BadCheckpoint(format!(
            "parameter count {count} does not match the config's {}",
            config.n_params()
        )));
    }
    let mut theta = Vec::with_capacity(count);
    for _ in 0..count {
        theta.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
    }
    if r.pos != bytes.len() {
        return Err(NetError::BadCheckpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok((config, seed, theta))
}

struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetError> {
        if self.pos + n > self.buf.len() {
            return Err(NetError::BadCheckpoint("file truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NetError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
