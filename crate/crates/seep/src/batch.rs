//! Lane-batched replay of a recorded tape.
//!
//! A training step evaluates the same small computation (network + equation
//! residual) at thousands of collocation points. Rebuilding a scalar tape per
//! point spends most of its time on bookkeeping, so the loss evaluator instead
//! records the computation *once* for a representative point -- with the
//! per-point inputs marked as slots -- compiles it to a [`Template`], and
//! replays it over lanes of points. Values and adjoints are stored per node as
//! rows of lanes, which turns the inner loops into contiguous array arithmetic
//! the autovectorizer handles well.
//!
//! Semantics are identical to evaluating the scalar tape once per lane and
//! summing per-leaf adjoints over lanes; the physics tests pin that
//! equivalence. Determinism: lanes are processed in index order and parameter
//! adjoints accumulate in reverse-record order, so a replay is bit-reproducible.

use crate::autodiff::{Op, Tape, Var};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CompileError {
    #[error("slot {0} does not refer to a constant leaf")]
    SlotNotConst(usize),
    #[error("slot {0} is listed twice")]
    SlotDuplicate(usize),
    #[error("the root must be a computed node, not a trainable leaf")]
    RootIsParam,
}

/// Where an operand lives during replay.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Src {
    /// Lane row (per-point value).
    Row(u32),
    /// Broadcast trainable parameter, read straight from the parameter slice.
    Param(u32),
}

#[derive(Clone, Copy, Debug)]
enum BinKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug)]
enum UnKind {
    Neg,
    Square,
    Exp,
    Tanh,
    Sigmoid,
}

#[derive(Clone, Copy, Debug)]
enum BOp {
    Bin { kind: BinKind, dst: u32, a: Src, b: Src },
    Un { kind: UnKind, dst: u32, a: Src },
    PowI { dst: u32, a: Src, n: i32 },
    Scale { dst: u32, a: Src, c: f64 },
    AddC { dst: u32, a: Src, c: f64 },
    Sum { dst: u32, args: u32, n: u32 },
    /// Dot of a contiguous parameter range with a list of rows: the network
    /// layer kernel and the hot path of every replay.
    DotPR { dst: u32, p0: u32, rows: u32, n: u32 },
    /// Fully general dot via `src_list` (both operand lists).
    DotG { dst: u32, a: u32, b: u32, n: u32 },
}

/// A compiled tape ready for lane replay.
pub struct Template {
    bops: Vec<BOp>,
    src_list: Vec<Src>,
    row_list: Vec<u32>,
    const_rows: Vec<(u32, f64)>,
    slot_rows: Vec<u32>,
    n_rows: usize,
    n_params: usize,
    root_row: u32,
}

/// Reusable value/adjoint storage for one template.
pub struct BatchExec {
    rows: Vec<f64>,
    adj: Vec<f64>,
    cap: usize,
}

impl Template {
    /// Compiles the prefix of `tape` ending at `root`. `slots` are constant
    /// leaves that will be refilled with per-point data at replay time; every
    /// trainable leaf becomes a broadcast parameter.
    pub fn compile(tape: &Tape, slots: &[Var], root: Var) -> Result<Template, CompileError> {
        let end = root.index() + 1;
        let mut param_slot = vec![u32::MAX; end];
        for (slot, &node) in tape.trainable.iter().enumerate() {
            if (node as usize) < end {
                param_slot[node as usize] = slot as u32;
            }
        }
        let mut slot_of_node = vec![u32::MAX; end];
        for (i, v) in slots.iter().enumerate() {
            if v.index() >= end || !matches!(tape.ops[v.index()], Op::Const) {
                return Err(CompileError::SlotNotConst(i));
            }
            if slot_of_node[v.index()] != u32::MAX {
                return Err(CompileError::SlotDuplicate(i));
            }
            slot_of_node[v.index()] = i as u32;
        }

        let mut refs: Vec<Src> = Vec::with_capacity(end);
        let mut t = Template {
            bops: Vec::new(),
            src_list: Vec::new(),
            row_list: Vec::new(),
            const_rows: Vec::new(),
            slot_rows: vec![u32::MAX; slots.len()],
            n_rows: 0,
            n_params: tape.trainable.len(),
            root_row: 0,
        };
        let new_row = |t: &mut Template| {
            let r = t.n_rows as u32;
            t.n_rows += 1;
            r
        };

        for i in 0..end {
            let src = match tape.ops[i] {
                Op::Leaf => Src::Param(param_slot[i]),
                Op::Const => {
                    let r = new_row(&mut t);
                    if slot_of_node[i] != u32::MAX {
                        t.slot_rows[slot_of_node[i] as usize] = r;
                    } else {
                        t.const_rows.push((r, tape.vals[i]));
                    }
                    Src::Row(r)
                }
                op => {
                    let r = new_row(&mut t);
                    t.push_op(op, r, &refs, tape);
                    Src::Row(r)
                }
            };
            refs.push(src);
        }
        match refs[root.index()] {
            Src::Row(r) => t.root_row = r,
            Src::Param(_) => return Err(CompileError::RootIsParam),
        }
        Ok(t)
    }

    fn push_op(&mut self, op: Op, dst: u32, refs: &[Src], tape: &Tape) {
        let bop = match op {
            Op::Leaf | Op::Const => unreachable!("leaves handled by the caller"),
            Op::Add(a, b) => BOp::Bin {
                kind: BinKind::Add,
                dst,
                a: refs[a as usize],
                b: refs[b as usize],
            },
            Op::Sub(a, b) => BOp::Bin {
                kind: BinKind::Sub,
                dst,
                a: refs[a as usize],
                b: refs[b as usize],
            },
            Op::Mul(a, b) => BOp::Bin {
                kind: BinKind::Mul,
                dst,
                a: refs[a as usize],
                b: refs[b as usize],
            },
            Op::Div(a, b) => BOp::Bin {
                kind: BinKind::Div,
                dst,
                a: refs[a as usize],
                b: refs[b as usize],
            },
            Op::Neg(a) => BOp::Un {
                kind: UnKind::Neg,
                dst,
                a: refs[a as usize],
            },
            Op::Square(a) => BOp::Un {
                kind: UnKind::Square,
                dst,
                a: refs[a as usize],
            },
            Op::Exp(a) => BOp::Un {
                kind: UnKind::Exp,
                dst,
                a: refs[a as usize],
            },
            Op::Tanh(a) => BOp::Un {
                kind: UnKind::Tanh,
                dst,
                a: refs[a as usize],
            },
            Op::Sigmoid(a) => BOp::Un {
                kind: UnKind::Sigmoid,
                dst,
                a: refs[a as usize],
            },
            Op::PowI(a, n) => BOp::PowI {
                dst,
                a: refs[a as usize],
                n,
            },
            Op::Scale(a, c) => BOp::Scale {
                dst,
                a: refs[a as usize],
                c,
            },
            Op::AddC(a, c) => BOp::AddC {
                dst,
                a: refs[a as usize],
                c,
            },
            Op::Sum { args, n } => {
                let start = self.src_list.len() as u32;
                for k in 0..n as usize {
                    let node = tape.pool[args as usize + k] as usize;
                    self.src_list.push(refs[node]);
                }
                BOp::Sum { dst, args: start, n }
            }
            Op::Dot { a, b, n } => {
                // Detect the layer pattern: contiguous parameters dotted with
                // rows. Everything else takes the generic path.
                let nn = n as usize;
                let a_nodes = &tape.pool[a as usize..a as usize + nn];
                let b_nodes = &tape.pool[b as usize..b as usize + nn];
                let mut p0 = None;
                let mut fast = nn > 0;
                for (k, &an) in a_nodes.iter().enumerate() {
                    match refs[an as usize] {
                        Src::Param(p) => {
                            if k == 0 {
                                p0 = Some(p);
                            } else if p != p0.unwrap() + k as u32 {
                                fast = false;
                                break;
                            }
                        }
                        Src::Row(_) => {
                            fast = false;
                            break;
                        }
                    }
                }
                if fast {
                    for &bn in b_nodes {
                        if !matches!(refs[bn as usize], Src::Row(_)) {
                            fast = false;
                            break;
                        }
                    }
                }
                if fast {
                    let start = self.row_list.len() as u32;
                    for &bn in b_nodes {
                        match refs[bn as usize] {
                            Src::Row(r) => self.row_list.push(r),
                            Src::Param(_) => unreachable!(),
                        }
                    }
                    BOp::DotPR {
                        dst,
                        p0: p0.unwrap(),
                        rows: start,
                        n,
                    }
                } else {
                    let astart = self.src_list.len() as u32;
                    for &an in a_nodes {
                        self.src_list.push(refs[an as usize]);
                    }
                    let bstart = self.src_list.len() as u32;
                    for &bn in b_nodes {
                        self.src_list.push(refs[bn as usize]);
                    }
                    BOp::DotG {
                        dst,
                        a: astart,
                        b: bstart,
                        n,
                    }
                }
            }
        };
        self.bops.push(bop);
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn n_slots(&self) -> usize {
        self.slot_rows.len()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// Allocates replay storage for chunks of up to `cap` lanes.
    pub fn new_exec(&self, cap: usize) -> BatchExec {
        let mut exec = BatchExec {
            rows: vec![0.0; self.n_rows * cap],
            adj: vec![0.0; self.n_rows * cap],
            cap,
        };
        for &(r, v) in &self.const_rows {
            let off = r as usize * cap;
            exec.rows[off..off + cap].fill(v);
        }
        exec
    }

    /// Replays the template over one chunk of lanes.
    ///
    /// `slot_cols[s]` holds the per-lane values of slot `s` (all columns the
    /// same length `b <= cap`). Appends the root's per-lane values to
    /// `roots_out`, and accumulates `seed * d(root_lane)/d(param)` summed over
    /// lanes into `grad`.
    pub fn run_chunk(
        &self,
        params: &[f64],
        slot_cols: &[&[f64]],
        seed: f64,
        exec: &mut BatchExec,
        grad: &mut [f64],
        roots_out: &mut Vec<f64>,
    ) {
        assert_eq!(params.len(), self.n_params, "parameter count mismatch");
        assert_eq!(grad.len(), self.n_params, "gradient length mismatch");
        assert_eq!(slot_cols.len(), self.slot_rows.len(), "slot count mismatch");
        let b = slot_cols.first().map_or(0, |c| c.len());
        assert!(b > 0 && b <= exec.cap, "chunk size {b} out of range");
        let cap = exec.cap;

        for (s, col) in slot_cols.iter().enumerate() {
            assert_eq!(col.len(), b, "ragged slot columns");
            let off = self.slot_rows[s] as usize * cap;
            exec.rows[off..off + b].copy_from_slice(col);
        }

        self.forward(params, exec, b);

        let roff = self.root_row as usize * cap;
        roots_out.extend_from_slice(&exec.rows[roff..roff + b]);

        exec.adj.fill(0.0);
        exec.adj[roff..roff + b].fill(seed);
        self.backward(params, exec, b, grad);
    }

    fn forward(&self, params: &[f64], exec: &mut BatchExec, b: usize) {
        let cap = exec.cap;
        for op in &self.bops {
            let dst = op_dst(op) as usize * cap;
            let (lo, hi) = exec.rows.split_at_mut(dst);
            let d = &mut hi[..b];
            match *op {
                BOp::Bin { kind, a, b: bb, .. } => {
                    let fa = arg(lo, params, cap, b, a);
                    let fb = arg(lo, params, cap, b, bb);
                    match kind {
                        BinKind::Add => bin(d, fa, fb, |x, y| x + y),
                        BinKind::Sub => bin(d, fa, fb, |x, y| x - y),
                        BinKind::Mul => bin(d, fa, fb, |x, y| x * y),
                        BinKind::Div => bin(d, fa, fb, |x, y| x / y),
                    }
                }
                BOp::Un { kind, a, .. } => {
                    let fa = arg(lo, params, cap, b, a);
                    match kind {
                        UnKind::Neg => un(d, fa, |x| -x),
                        UnKind::Square => un(d, fa, |x| x * x),
                        UnKind::Exp => un(d, fa, f64::exp),
                        UnKind::Tanh => un(d, fa, f64::tanh),
                        UnKind::Sigmoid => un(d, fa, |x| 1.0 / (1.0 + (-x).exp())),
                    }
                }
                BOp::PowI { a, n, .. } => {
                    let fa = arg(lo, params, cap, b, a);
                    un(d, fa, |x| x.powi(n));
                }
                BOp::Scale { a, c, .. } => {
                    let fa = arg(lo, params, cap, b, a);
                    un(d, fa, |x| x * c);
                }
                BOp::AddC { a, c, .. } => {
                    let fa = arg(lo, params, cap, b, a);
                    un(d, fa, |x| x + c);
                }
                BOp::Sum { args, n, .. } => {
                    d.fill(0.0);
                    for k in 0..n as usize {
                        match arg(lo, params, cap, b, self.src_list[args as usize + k]) {
                            ArgVal::R(r) => {
                                for l in 0..b {
                                    d[l] += r[l];
                                }
                            }
                            ArgVal::S(v) => {
                                for x in d.iter_mut() {
                                    *x += v;
                                }
                            }
                        }
                    }
                }
                BOp::DotPR { p0, rows, n, .. } => {
                    // Register-tiled: accumulators for a block of lanes stay
                    // in registers across the whole weight loop instead of
                    // re-streaming the destination row once per weight. Each
                    // lane still sums over k in the same order, so results
                    // are bit-identical to the naive loop.
                    let w = &params[p0 as usize..p0 as usize + n as usize];
                    let rl = &self.row_list[rows as usize..rows as usize + n as usize];
                    const TILE: usize = 16;
                    let mut l0 = 0;
                    while l0 + TILE <= b {
                        let mut acc = [0.0f64; TILE];
                        for (k, &wk) in w.iter().enumerate() {
                            let roff = rl[k] as usize * cap + l0;
                            let r = &lo[roff..roff + TILE];
                            for j in 0..TILE {
                                acc[j] += wk * r[j];
                            }
                        }
                        d[l0..l0 + TILE].copy_from_slice(&acc);
                        l0 += TILE;
                    }
                    if l0 < b {
                        d[l0..].fill(0.0);
                        for (k, &wk) in w.iter().enumerate() {
                            let roff = rl[k] as usize * cap;
                            let r = &lo[roff + l0..roff + b];
                            for (x, &rv) in d[l0..].iter_mut().zip(r) {
                                *x += wk * rv;
                            }
                        }
                    }
                }
                BOp::DotG { a, b: bb, n, .. } => {
                    d.fill(0.0);
                    for k in 0..n as usize {
                        let fa = arg(lo, params, cap, b, self.src_list[a as usize + k]);
                        let fb = arg(lo, params, cap, b, self.src_list[bb as usize + k]);
                        match (fa, fb) {
                            (ArgVal::R(x), ArgVal::R(y)) => {
                                for l in 0..b {
                                    d[l] += x[l] * y[l];
                                }
                            }
                            (ArgVal::R(x), ArgVal::S(v)) | (ArgVal::S(v), ArgVal::R(x)) => {
                                for l in 0..b {
                                    d[l] += v * x[l];
                                }
                            }
                            (ArgVal::S(x), ArgVal::S(y)) => {
                                let v = x * y;
                                for t in d.iter_mut() {
                                    *t += v;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    fn backward(&self, params: &[f64], exec: &mut BatchExec, b: usize, grad: &mut [f64]) {
        let cap = exec.cap;
        let rows = &exec.rows;
        for op in self.bops.iter().rev() {
            let dst_row = op_dst(op) as usize;
            let doff = dst_row * cap;
            let (alo, ahi) = exec.adj.split_at_mut(doff);
            let g = &ahi[..b];
            match *op {
                BOp::Bin { kind, a, b: bb, .. } => match kind {
                    BinKind::Add => {
                        acc(alo, grad, cap, b, a, |l| g[l]);
                        acc(alo, grad, cap, b, bb, |l| g[l]);
                    }
                    BinKind::Sub => {
                        acc(alo, grad, cap, b, a, |l| g[l]);
                        acc(alo, grad, cap, b, bb, |l| -g[l]);
                    }
                    BinKind::Mul => {
                        let av = arg(rows, params, cap, b, a);
                        let bv = arg(rows, params, cap, b, bb);
                        acc(alo, grad, cap, b, a, |l| g[l] * bv.at(l));
                        acc(alo, grad, cap, b, bb, |l| g[l] * av.at(l));
                    }
                    BinKind::Div => {
                        let bv = arg(rows, params, cap, b, bb);
                        let dv = &rows[doff..doff + b];
                        acc(alo, grad, cap, b, a, |l| g[l] / bv.at(l));
                        acc(alo, grad, cap, b, bb, |l| -g[l] * dv[l] / bv.at(l));
                    }
                },
                BOp::Un { kind, a, .. } => {
                    let dv = &rows[doff..doff + b];
                    match kind {
                        UnKind::Neg => acc(alo, grad, cap, b, a, |l| -g[l]),
                        UnKind::Square => {
                            let av = arg(rows, params, cap, b, a);
                            acc(alo, grad, cap, b, a, |l| 2.0 * g[l] * av.at(l));
                        }
                        UnKind::Exp => acc(alo, grad, cap, b, a, |l| g[l] * dv[l]),
                        UnKind::Tanh => acc(alo, grad, cap, b, a, |l| g[l] * (1.0 - dv[l] * dv[l])),
                        UnKind::Sigmoid => {
                            acc(alo, grad, cap, b, a, |l| g[l] * dv[l] * (1.0 - dv[l]))
                        }
                    }
                }
                BOp::PowI { a, n, .. } => {
                    let av = arg(rows, params, cap, b, a);
                    acc(alo, grad, cap, b, a, |l| {
                        g[l] * n as f64 * av.at(l).powi(n - 1)
                    });
                }
                BOp::Scale { a, c, .. } => acc(alo, grad, cap, b, a, |l| g[l] * c),
                BOp::AddC { a, .. } => acc(alo, grad, cap, b, a, |l| g[l]),
                BOp::Sum { args, n, .. } => {
                    for k in 0..n as usize {
                        acc(alo, grad, cap, b, self.src_list[args as usize + k], |l| g[l]);
                    }
                }
                BOp::DotPR { p0, rows: rl, n, .. } => {
                    for k in 0..n as usize {
                        let roff = self.row_list[rl as usize + k] as usize * cap;
                        let w = params[p0 as usize + k];
                        let rv = &rows[roff..roff + b];
                        let ga = &mut alo[roff..roff + b];
                        for l in 0..b {
                            ga[l] += w * g[l];
                        }
                        grad[p0 as usize + k] += lane_dot(g, rv);
                    }
                }
                BOp::DotG { a, b: bb, n, .. } => {
                    for k in 0..n as usize {
                        let sa = self.src_list[a as usize + k];
                        let sb = self.src_list[bb as usize + k];
                        let av = arg(rows, params, cap, b, sa);
                        let bv = arg(rows, params, cap, b, sb);
                        acc(alo, grad, cap, b, sa, |l| g[l] * bv.at(l));
                        acc(alo, grad, cap, b, sb, |l| g[l] * av.at(l));
                    }
                }
            }
        }
    }
}

fn op_dst(op: &BOp) -> u32 {
    match *op {
        BOp::Bin { dst, .. }
        | BOp::Un { dst, .. }
        | BOp::PowI { dst, .. }
        | BOp::Scale { dst, .. }
        | BOp::AddC { dst, .. }
        | BOp::Sum { dst, .. }
        | BOp::DotPR { dst, .. }
        | BOp::DotG { dst, .. } => dst,
    }
}

/// Dot product over lanes with eight running partials, so the reduction
/// vectorizes instead of serializing on one accumulator. The partial order is
/// fixed, which keeps replays bit-reproducible.
#[inline(always)]
fn lane_dot(a: &[f64], b: &[f64]) -> f64 {
    const LANES: usize = 8;
    let n = a.len().min(b.len());
    let mut acc = [0.0f64; LANES];
    let mut l = 0;
    while l + LANES <= n {
        for j in 0..LANES {
            acc[j] += a[l + j] * b[l + j];
        }
        l += LANES;
    }
    while l < n {
        acc[l % LANES] += a[l] * b[l];
        l += 1;
    }
    let q = [acc[0] + acc[1], acc[2] + acc[3], acc[4] + acc[5], acc[6] + acc[7]];
    (q[0] + q[1]) + (q[2] + q[3])
}

/// Operand view during replay: a lane row or a broadcast scalar.
#[derive(Clone, Copy)]
enum ArgVal<'a> {
    R(&'a [f64]),
    S(f64),
}

impl ArgVal<'_> {
    #[inline(always)]
    fn at(&self, l: usize) -> f64 {
        match *self {
            ArgVal::R(r) => r[l],
            ArgVal::S(v) => v,
        }
    }
}

#[inline(always)]
fn arg<'a>(lo: &'a [f64], params: &'a [f64], cap: usize, b: usize, s: Src) -> ArgVal<'a> {
    match s {
        Src::Row(r) => {
            let off = r as usize * cap;
            ArgVal::R(&lo[off..off + b])
        }
        Src::Param(p) => ArgVal::S(params[p as usize]),
    }
}

#[inline(always)]
fn bin(d: &mut [f64], a: ArgVal, b: ArgVal, f: impl Fn(f64, f64) -> f64) {
    match (a, b) {
        (ArgVal::R(x), ArgVal::R(y)) => {
            for l in 0..d.len() {
                d[l] = f(x[l], y[l]);
            }
        }
        (ArgVal::R(x), ArgVal::S(v)) => {
            for l in 0..d.len() {
                d[l] = f(x[l], v);
            }
        }
        (ArgVal::S(v), ArgVal::R(y)) => {
            for l in 0..d.len() {
                d[l] = f(v, y[l]);
            }
        }
        (ArgVal::S(x), ArgVal::S(y)) => d.fill(f(x, y)),
    }
}

#[inline(always)]
fn un(d: &mut [f64], a: ArgVal, f: impl Fn(f64) -> f64) {
    match a {
        ArgVal::R(x) => {
            for l in 0..d.len() {
                d[l] = f(x[l]);
            }
        }
        ArgVal::S(v) => d.fill(f(v)),
    }
}

/// Adds a per-lane contribution to an operand's adjoint: lane-wise for rows,
/// lane-summed into the gradient for parameters.
#[inline(always)]
fn acc(
    alo: &mut [f64],
    grad: &mut [f64],
    cap: usize,
    b: usize,
    target: Src,
    f: impl Fn(usize) -> f64,
) {
    match target {
        Src::Row(r) => {
            let off = r as usize * cap;
            let row = &mut alo[off..off + b];
            for (l, x) in row.iter_mut().enumerate() {
                *x += f(l);
            }
        }
        Src::Param(p) => {
            // Eight fixed-order partials, same reasoning as `lane_dot`.
            const LANES: usize = 8;
            let mut a = [0.0f64; LANES];
            let mut l = 0;
            while l + LANES <= b {
                for j in 0..LANES {
                    a[j] += f(l + j);
                }
                l += LANES;
            }
            while l < b {
                a[l % LANES] += f(l);
                l += 1;
            }
            let q = [a[0] + a[1], a[2] + a[3], a[4] + a[5], a[6] + a[7]];
            grad[p as usize] += (q[0] + q[1]) + (q[2] + q[3]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{jet_activate, jet_affine, Activation, Jet2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Records tanh(w1*x + w2*s + b)^2 with one slot `s`; exercises dot,
    /// activation, square, and both param and slot adjoints.
    fn little_net(x: f64, s0: f64, w: &[f64; 3]) -> (Tape, Var, Var) {
        let mut tape = Tape::new();
        let w1 = tape.leaf(w[0]);
        let w2 = tape.leaf(w[1]);
        let b = tape.leaf(w[2]);
        let xc = tape.constant(x);
        let s = tape.constant(s0);
        let d = tape.dot(&[w1, w2], &[xc, s]);
        let pre = tape.add(d, b);
        let t = tape.tanh(pre);
        let out = tape.square(t);
        (tape, s, out)
    }

    #[test]
    fn replay_matches_scalar_tape_per_lane() {
        let w = [0.7, -1.2, 0.25];
        let (tape, slot, root) = little_net(0.4, 0.0, &w);
        let template = Template::compile(&tape, &[slot], root).unwrap();
        assert_eq!(template.n_params(), 3);

        let svals = [-1.0, -0.3, 0.2, 0.9, 1.7];
        let mut exec = template.new_exec(8);
        let mut grad = vec![0.0; 3];
        let mut roots = Vec::new();
        template.run_chunk(&w, &[&svals], 1.0, &mut exec, &mut grad, &mut roots);

        let mut want_grad = vec![0.0; 3];
        for (lane, &sv) in svals.iter().enumerate() {
            let (stape, _, sroot) = little_net(0.4, sv, &w);
            assert_eq!(
                roots[lane],
                stape.value(sroot),
                "lane {lane} value must equal the scalar evaluation exactly"
            );
            let g = stape.backward(sroot);
            for i in 0..3 {
                want_grad[i] += g[i];
            }
        }
        for i in 0..3 {
            assert!(
                (grad[i] - want_grad[i]).abs() <= 1e-13 * (1.0 + want_grad[i].abs()),
                "param {i}: batch {} vs scalar-summed {}",
                grad[i],
                want_grad[i]
            );
        }
    }

    #[test]
    fn replay_is_bit_deterministic() {
        let w = [0.7, -1.2, 0.25];
        let (tape, slot, root) = little_net(0.4, 0.0, &w);
        let template = Template::compile(&tape, &[slot], root).unwrap();
        let svals: Vec<f64> = (0..100).map(|i| (i as f64) * 0.017 - 0.8).collect();

        let run = || {
            let mut exec = template.new_exec(32);
            let mut grad = vec![0.0; 3];
            let mut roots = Vec::new();
            for chunk in svals.chunks(32) {
                template.run_chunk(&w, &[chunk], 0.5, &mut exec, &mut grad, &mut roots);
            }
            (grad, roots)
        };
        let (g1, r1) = run();
        let (g2, r2) = run();
        assert_eq!(g1, g2);
        assert_eq!(r1, r2);
    }

    #[test]
    fn every_op_kind_replays_like_the_scalar_tape() {
        // One tape exercising each op; two slots, three params.
        let build = |p: &[f64; 3], s: &[f64; 2]| -> (Tape, Vec<Var>, Var) {
            let mut tape = Tape::new();
            let a = tape.leaf(p[0]);
            let b = tape.leaf(p[1]);
            let c = tape.leaf(p[2]);
            let s0 = tape.constant(s[0]);
            let s1 = tape.constant(s[1]);
            let m = tape.mul(a, s0);
            let shifted = tape.addc(s1, 0.5);
            let q = tape.div(m, shifted).unwrap();
            let tamed = tape.tanh(q);
            let tamed = tape.scale(tamed, 0.8);
            let e = tape.exp(tamed);
            let t = tape.tanh(e);
            let sg = tape.sigmoid(b);
            let pw = tape.powi(sg, 3);
            let sc = tape.scale(pw, -1.7);
            let ng = tape.neg(sc);
            let su = tape.sum(&[t, ng, c]);
            let d = tape.dot(&[a, b, c], &[s0, s1, su]);
            let sq = tape.square(d);
            let sb = tape.sub(sq, m);
            let root = tape.addc(sb, 0.125);
            (tape, vec![s0, s1], root)
        };

        let p = [0.8, -0.4, 1.3];
        let slots_a = [0.6, 1.1];
        let (tape, slots, root) = build(&p, &slots_a);
        let template = Template::compile(&tape, &slots, root).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cols: Vec<[f64; 2]> = (0..37)
            .map(|_| [rng.gen_range(0.1..1.5), rng.gen_range(0.5..2.0)])
            .collect();
        let c0: Vec<f64> = cols.iter().map(|c| c[0]).collect();
        let c1: Vec<f64> = cols.iter().map(|c| c[1]).collect();

        let mut exec = template.new_exec(64);
        let mut grad = vec![0.0; 3];
        let mut roots = Vec::new();
        template.run_chunk(&p, &[&c0, &c1], 1.0, &mut exec, &mut grad, &mut roots);

        let mut want = vec![0.0; 3];
        for (lane, c) in cols.iter().enumerate() {
            let (stape, _, sroot) = build(&p, c);
            let sval = stape.value(sroot);
            assert!(
                (roots[lane] - sval).abs() <= 1e-14 * (1.0 + sval.abs()),
                "lane {lane}: {} vs {}",
                roots[lane],
                sval
            );
            let g = stape.backward(sroot);
            for i in 0..3 {
                want[i] += g[i];
            }
        }
        for i in 0..3 {
            assert!(
                (grad[i] - want[i]).abs() <= 1e-12 * (1.0 + want[i].abs()),
                "param {i}: {} vs {}",
                grad[i],
                want[i]
            );
        }
    }

    #[test]
    fn jet_template_gradients_match_scalar_backward() {
        // A one-hidden-layer jet network with the coordinate as a slot: the
        // shape the physics evaluator compiles.
        let build = |w: &[f64], x0: f64| -> (Tape, Var, Var) {
            let mut tape = Tape::new();
            let wv: Vec<Var> = w[..4].iter().map(|&v| tape.leaf(v)).collect();
            let b0 = tape.leaf(w[4]);
            let b1 = tape.leaf(w[5]);
            let x = tape.constant(x0);
            let jx = Jet2::seed(&mut tape, x, 1.0);
            let h0 = jet_affine(&mut tape, &wv[..2], b0, &[jx, jx]);
            let a0 = jet_activate(&mut tape, Activation::Tanh, h0).unwrap();
            let out = jet_affine(&mut tape, &wv[2..4], b1, &[a0, a0]);
            let r = tape.square(out.d2);
            (tape, x, r)
        };
        let w = [0.5, -0.7, 1.1, 0.3, 0.1, -0.2];
        let (tape, slot, root) = build(&w, 0.0);
        let template = Template::compile(&tape, &[slot], root).unwrap();

        let xs = [0.3, -0.9, 1.4];
        let mut exec = template.new_exec(4);
        let mut grad = vec![0.0; 6];
        let mut roots = Vec::new();
        template.run_chunk(&w, &[&xs], 1.0, &mut exec, &mut grad, &mut roots);

        let mut want = vec![0.0; 6];
        for (lane, &x) in xs.iter().enumerate() {
            let (stape, _, sroot) = build(&w, x);
            assert_eq!(roots[lane], stape.value(sroot));
            let g = stape.backward(sroot);
            for i in 0..6 {
                want[i] += g[i];
            }
        }
        for i in 0..6 {
            assert!(
                (grad[i] - want[i]).abs() <= 1e-12 * (1.0 + want[i].abs()),
                "param {i}: {} vs {}",
                grad[i],
                want[i]
            );
        }
    }

    #[test]
    fn compile_rejects_bad_slots() {
        let mut tape = Tape::new();
        // Const first: compilation truncates the tape at the root, so the
        // slot must already exist when the root is an early node.
        let c = tape.constant(2.0);
        let a = tape.leaf(1.0);
        let r = tape.mul(a, c);
        assert!(
            matches!(
                Template::compile(&tape, &[a], r),
                Err(CompileError::SlotNotConst(0))
            ),
            "trainable leaves cannot be slots"
        );
        assert!(matches!(
            Template::compile(&tape, &[c, c], r),
            Err(CompileError::SlotDuplicate(1))
        ));
        assert!(matches!(
            Template::compile(&tape, &[c], a),
            Err(CompileError::RootIsParam)
        ));
    }
}
