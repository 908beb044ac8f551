//! Reverse-mode automatic differentiation on a flat Wengert tape, plus
//! second-order jets propagated *through* tape scalars.
//!
//! Every scalar lives on a [`Tape`] as a node identified by a [`Var`] handle.
//! Recording an operation computes the primal value eagerly and stores the
//! operands; [`Tape::backward`] replays the records in reverse, accumulating
//! adjoints, and returns the gradient of a root scalar with respect to every
//! trainable leaf in registration order. The sweep never mutates the tape, so
//! repeated sweeps (or sweeps from different roots) are independent.
//!
//! Second derivatives use forward jets over tape scalars: a [`Jet2`] carries
//! (value, d1, d2) along one input direction, each component itself a tape
//! scalar. Propagating a jet through the network records the directional
//! first and second derivatives as ordinary tape nodes, so a PDE residual
//! assembled from jet components can in turn be differentiated with respect
//! to the network parameters by the reverse sweep. This is the piece that
//! makes a mean-squared-residual loss trainable.

use thiserror::Error;

/// Handle to a scalar node on a [`Tape`]. Only valid on the tape that
/// created it; handles are never invalidated (tapes only grow).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Var(pub(crate) u32);

impl Var {
    /// Node index, stable for the lifetime of the tape.
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdError {
    #[error("division by zero at tape node {node}")]
    DivisionByZero { node: usize },
    #[error("activation `{0}` has no usable second derivative for jets: d2 is 0 almost everywhere, which would silently null the equation residual")]
    JetUnsupported(&'static str),
}

/// One recorded operation. The record index doubles as the node id.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Op {
    /// Trainable leaf: receives a slot in the gradient.
    Leaf,
    /// Non-trainable leaf (sample coordinates, seeds, fixed data).
    Const,
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Div(u32, u32),
    Neg(u32),
    Square(u32),
    Exp(u32),
    Tanh(u32),
    Sigmoid(u32),
    PowI(u32, i32),
    /// a * c with an immediate constant; a fused `Mul` by a `Const`.
    Scale(u32, f64),
    /// a + c with an immediate constant; a fused `Add` with a `Const`.
    AddC(u32, f64),
    /// Sum of `n` nodes listed in the argument pool at `args`.
    Sum { args: u32, n: u32 },
    /// Dot product of two `n`-node lists in the argument pool: sum a_i * b_i.
    Dot { a: u32, b: u32, n: u32 },
}

/// Flat Wengert tape. Rebuilt for every training step; a reverse sweep
/// leaves it unchanged.
#[derive(Default)]
pub struct Tape {
    pub(crate) ops: Vec<Op>,
    pub(crate) vals: Vec<f64>,
    pub(crate) pool: Vec<u32>,
    pub(crate) trainable: Vec<u32>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Number of trainable leaves registered so far (the gradient length).
    pub fn trainable_count(&self) -> usize {
        self.trainable.len()
    }

    pub fn value(&self, v: Var) -> f64 {
        self.vals[v.index()]
    }

    fn push(&mut self, op: Op, val: f64) -> Var {
        let id = self.ops.len() as u32;
        self.ops.push(op);
        self.vals.push(val);
        Var(id)
    }

    /// Register a trainable leaf. Gradient entries follow registration order.
    pub fn leaf(&mut self, value: f64) -> Var {
        let v = self.push(Op::Leaf, value);
        self.trainable.push(v.0);
        v
    }

    /// Register a non-trainable leaf.
    pub fn constant(&mut self, value: f64) -> Var {
        self.push(Op::Const, value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Add(a.0, b.0), self.vals[a.index()] + self.vals[b.index()])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Sub(a.0, b.0), self.vals[a.index()] - self.vals[b.index()])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.push(Op::Mul(a.0, b.0), self.vals[a.index()] * self.vals[b.index()])
    }

    /// Division; the only arithmetic op with a data-dependent failure mode.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, AdError> {
        let den = self.vals[b.index()];
        if den == 0.0 {
            return Err(AdError::DivisionByZero { node: b.index() });
        }
        Ok(self.push(Op::Div(a.0, b.0), self.vals[a.index()] / den))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.push(Op::Neg(a.0), -self.vals[a.index()])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let x = self.vals[a.index()];
        self.push(Op::Square(a.0), x * x)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.push(Op::Exp(a.0), self.vals[a.index()].exp())
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.push(Op::Tanh(a.0), self.vals[a.index()].tanh())
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let x = self.vals[a.index()];
        self.push(Op::Sigmoid(a.0), sigmoid(x))
    }

    /// Integer power x^n (f64 semantics; a negative exponent at x = 0 yields
    /// an infinity that the training loop's finite-loss check catches).
    pub fn powi(&mut self, a: Var, n: i32) -> Var {
        self.push(Op::PowI(a.0, n), self.vals[a.index()].powi(n))
    }

    /// a * c for a plain constant c.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.push(Op::Scale(a.0, c), self.vals[a.index()] * c)
    }

    /// a + c for a plain constant c.
    pub fn addc(&mut self, a: Var, c: f64) -> Var {
        self.push(Op::AddC(a.0, c), self.vals[a.index()] + c)
    }

    /// n-ary sum, accumulated in argument order.
    pub fn sum(&mut self, xs: &[Var]) -> Var {
        let start = self.pool.len() as u32;
        self.pool.extend(xs.iter().map(|v| v.0));
        let mut acc = 0.0;
        for v in xs {
            acc += self.vals[v.index()];
        }
        self.push(
            Op::Sum {
                args: start,
                n: xs.len() as u32,
            },
            acc,
        )
    }

    /// Dot product sum_i a_i * b_i, accumulated in argument order.
    pub fn dot(&mut self, a: &[Var], b: &[Var]) -> Var {
        assert_eq!(a.len(), b.len(), "dot: operand lists must match in length");
        let astart = self.pool.len() as u32;
        self.pool.extend(a.iter().map(|v| v.0));
        let bstart = self.pool.len() as u32;
        self.pool.extend(b.iter().map(|v| v.0));
        let mut acc = 0.0;
        for i in 0..a.len() {
            acc += self.vals[a[i].index()] * self.vals[b[i].index()];
        }
        self.push(
            Op::Dot {
                a: astart,
                b: bstart,
                n: a.len() as u32,
            },
            acc,
        )
    }

    /// Reverse sweep from `root`: returns d(root)/d(leaf) for every trainable
    /// leaf, in registration order. The tape is left unchanged, so the sweep
    /// can be repeated and always yields identical results.
    pub fn backward(&self, root: Var) -> Vec<f64> {
        let mut adj = vec![0.0; self.vals.len()];
        self.sweep(root, &mut adj);
        self.trainable.iter().map(|&i| adj[i as usize]).collect()
    }

    /// Reverse sweep returning the full adjoint vector (one entry per node).
    pub fn adjoints(&self, root: Var) -> Vec<f64> {
        let mut adj = vec![0.0; self.vals.len()];
        self.sweep(root, &mut adj);
        adj
    }

    fn sweep(&self, root: Var, adj: &mut [f64]) {
        adj[root.index()] = 1.0;
        for i in (0..self.ops.len()).rev() {
            let g = adj[i];
            if g == 0.0 {
                continue;
            }
            match self.ops[i] {
                Op::Leaf | Op::Const => {}
                Op::Add(a, b) => {
                    adj[a as usize] += g;
                    adj[b as usize] += g;
                }
                Op::Sub(a, b) => {
                    adj[a as usize] += g;
                    adj[b as usize] -= g;
                }
                Op::Mul(a, b) => {
                    adj[a as usize] += g * self.vals[b as usize];
                    adj[b as usize] += g * self.vals[a as usize];
                }
                Op::Div(a, b) => {
                    let inv = 1.0 / self.vals[b as usize];
                    adj[a as usize] += g * inv;
                    adj[b as usize] -= g * self.vals[i] * inv;
                }
                Op::Neg(a) => adj[a as usize] -= g,
                Op::Square(a) => adj[a as usize] += g * 2.0 * self.vals[a as usize],
                Op::Exp(a) => adj[a as usize] += g * self.vals[i],
                Op::Tanh(a) => {
                    let t = self.vals[i];
                    adj[a as usize] += g * (1.0 - t * t);
                }
                Op::Sigmoid(a) => {
                    let s = self.vals[i];
                    adj[a as usize] += g * s * (1.0 - s);
                }
                Op::PowI(a, n) => {
                    let x = self.vals[a as usize];
                    adj[a as usize] += g * n as f64 * x.powi(n - 1);
                }
                Op::Scale(a, c) => adj[a as usize] += g * c,
                Op::AddC(a, _) => adj[a as usize] += g,
                Op::Sum { args, n } => {
                    for k in 0..n as usize {
                        adj[self.pool[args as usize + k] as usize] += g;
                    }
                }
                Op::Dot { a, b, n } => {
                    for k in 0..n as usize {
                        let ia = self.pool[a as usize + k] as usize;
                        let ib = self.pool[b as usize + k] as usize;
                        adj[ia] += g * self.vals[ib];
                        adj[ib] += g * self.vals[ia];
                    }
                }
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// ── Activations ─────────────────────────────────────────────────────────

/// Hidden-layer activation. `Identity` exists for linear-network regression
/// tests; `Relu` is accepted for plain forward evaluation but rejected for
/// jets (its second derivative is 0 almost everywhere, which would null the
/// equation residual instead of enforcing it).
#[derive(Clone, Copy, PartialEq, Eq, Debug, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Elu,
    Relu,
    Identity,
}

impl Activation {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Elu => {
                if x >= 0.0 {
                    x
                } else {
                    x.exp() - 1.0
                }
            }
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    pub fn supports_jets(self) -> bool {
        !matches!(self, Activation::Relu)
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Elu => "elu",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "tanh" => Activation::Tanh,
            "sigmoid" => Activation::Sigmoid,
            "elu" => Activation::Elu,
            "relu" => Activation::Relu,
            "identity" => Activation::Identity,
            _ => return None,
        })
    }
}

// ── Second-order jets over tape scalars ─────────────────────────────────

/// Value plus first and second directional derivative along one input
/// direction. Each component is a tape scalar, so everything downstream of a
/// jet remains differentiable with respect to the trainable leaves.
#[derive(Clone, Copy, Debug)]
pub struct Jet2 {
    pub value: Var,
    pub d1: Var,
    pub d2: Var,
}

impl Jet2 {
    /// A jet with zero derivatives (an input held fixed in this direction).
    pub fn constant(tape: &mut Tape, value: Var) -> Jet2 {
        let zero = tape.constant(0.0);
        Jet2 {
            value,
            d1: zero,
            d2: zero,
        }
    }

    /// Seed jet for an input coordinate: d1 is the (constant) rate of change
    /// of this scalar along the probing direction, d2 = 0.
    pub fn seed(tape: &mut Tape, value: Var, d1: f64) -> Jet2 {
        let d1 = tape.constant(d1);
        let zero = tape.constant(0.0);
        Jet2 {
            value,
            d1,
            d2: zero,
        }
    }
}

/// Affine combination of jets: out = sum_i w_i * x_i + b. Linear, so each
/// component is the same dot product over the corresponding input components;
/// an affine-only chain keeps d2 exactly zero.
pub fn jet_affine(tape: &mut Tape, w: &[Var], b: Var, x: &[Jet2]) -> Jet2 {
    assert_eq!(w.len(), x.len(), "jet_affine: weight/input length mismatch");
    let values: Vec<Var> = x.iter().map(|j| j.value).collect();
    let d1s: Vec<Var> = x.iter().map(|j| j.d1).collect();
    let d2s: Vec<Var> = x.iter().map(|j| j.d2).collect();
    let s = tape.dot(w, &values);
    let value = tape.add(s, b);
    let d1 = tape.dot(w, &d1s);
    let d2 = tape.dot(w, &d2s);
    Jet2 { value, d1, d2 }
}

/// Scalar activation applied to a jet. With a'(s), a''(s) the activation's
/// derivatives at the pre-activation value:
///
/// ```text
/// out.d1 = a'(s) * s.d1
/// out.d2 = a''(s) * s.d1^2 + a'(s) * s.d2     (chain rule, second order)
/// ```
///
/// `Elu` at exactly 0 takes the right-sided derivatives (a' = 1, a'' = 0).
pub fn jet_activate(tape: &mut Tape, act: Activation, s: Jet2) -> Result<Jet2, AdError> {
    match act {
        Activation::Identity => Ok(s),
        Activation::Elu if tape.value(s.value) >= 0.0 => Ok(s),
        _ => {
            let (value, ap, app) = activation_scalars(tape, act, s.value)?;
            Ok(apply_chain(tape, value, ap, app, s))
        }
    }
}

/// Records the activation value and its first two derivatives at `s`, shared
/// by every derivative direction flowing through the same neuron.
pub(crate) fn activation_scalars(
    tape: &mut Tape,
    act: Activation,
    s: Var,
) -> Result<(Var, Var, Var), AdError> {
    match act {
        Activation::Relu => Err(AdError::JetUnsupported("relu")),
        Activation::Identity => {
            let one = tape.constant(1.0);
            let zero = tape.constant(0.0);
            Ok((s, one, zero))
        }
        Activation::Tanh => {
            let t = tape.tanh(s);
            let t2 = tape.square(t);
            let neg_t2 = tape.scale(t2, -1.0);
            let ap = tape.addc(neg_t2, 1.0); // 1 - t^2
            let t_ap = tape.mul(t, ap);
            let app = tape.scale(t_ap, -2.0); // -2 t (1 - t^2)
            Ok((t, ap, app))
        }
        Activation::Sigmoid => {
            let sg = tape.sigmoid(s);
            let neg_sg = tape.scale(sg, -1.0);
            let one_m = tape.addc(neg_sg, 1.0); // 1 - s
            let ap = tape.mul(sg, one_m); // s(1-s)
            let neg2 = tape.scale(sg, -2.0);
            let one_m2 = tape.addc(neg2, 1.0); // 1 - 2s
            let app = tape.mul(ap, one_m2); // s(1-s)(1-2s)
            Ok((sg, ap, app))
        }
        Activation::Elu => {
            // Branches on the recorded value; at exactly 0 the right-sided
            // derivatives apply (a' = 1, a'' = 0).
            if tape.value(s) >= 0.0 {
                let one = tape.constant(1.0);
                let zero = tape.constant(0.0);
                Ok((s, one, zero))
            } else {
                let e = tape.exp(s);
                let value = tape.addc(e, -1.0);
                // a' = a'' = e^s on the negative branch.
                Ok((value, e, e))
            }
        }
    }
}

/// Records d1/d2 of the second-order chain rule given the activation value
/// and its two derivative scalars.
pub(crate) fn apply_chain(tape: &mut Tape, value: Var, ap: Var, app: Var, s: Jet2) -> Jet2 {
    let d1 = tape.mul(ap, s.d1);
    let d1sq = tape.square(s.d1);
    let curv = tape.mul(app, d1sq);
    let lin = tape.mul(ap, s.d2);
    let d2 = tape.add(curv, lin);
    Jet2 { value, d1, d2 }
}

// Jet arithmetic used by manufactured-solution tests and the free-surface
// terms: products and squares follow the Leibniz rule to second order.

/// (f g)'' = f'' g + 2 f' g' + f g''
pub fn jet_mul(tape: &mut Tape, a: Jet2, b: Jet2) -> Jet2 {
    let value = tape.mul(a.value, b.value);
    let a1b = tape.mul(a.d1, b.value);
    let ab1 = tape.mul(a.value, b.d1);
    let d1 = tape.add(a1b, ab1);
    let a2b = tape.mul(a.d2, b.value);
    let a1b1 = tape.mul(a.d1, b.d1);
    let cross = tape.scale(a1b1, 2.0);
    let ab2 = tape.mul(a.value, b.d2);
    let s = tape.add(a2b, cross);
    let d2 = tape.add(s, ab2);
    Jet2 { value, d1, d2 }
}

/// (f^2)'' = 2 f'^2 + 2 f f''
pub fn jet_square(tape: &mut Tape, a: Jet2) -> Jet2 {
    let value = tape.square(a.value);
    let aa1 = tape.mul(a.value, a.d1);
    let d1 = tape.scale(aa1, 2.0);
    let d1sq = tape.square(a.d1);
    let aa2 = tape.mul(a.value, a.d2);
    let s = tape.add(d1sq, aa2);
    let d2 = tape.scale(s, 2.0);
    Jet2 { value, d1, d2 }
}

pub fn jet_add(tape: &mut Tape, a: Jet2, b: Jet2) -> Jet2 {
    Jet2 {
        value: tape.add(a.value, b.value),
        d1: tape.add(a.d1, b.d1),
        d2: tape.add(a.d2, b.d2),
    }
}

pub fn jet_sub(tape: &mut Tape, a: Jet2, b: Jet2) -> Jet2 {
    Jet2 {
        value: tape.sub(a.value, b.value),
        d1: tape.sub(a.d1, b.d1),
        d2: tape.sub(a.d2, b.d2),
    }
}

pub fn jet_scale(tape: &mut Tape, a: Jet2, c: f64) -> Jet2 {
    Jet2 {
        value: tape.scale(a.value, c),
        d1: tape.scale(a.d1, c),
        d2: tape.scale(a.d2, c),
    }
}
