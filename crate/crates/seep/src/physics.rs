//! Physics-informed loss for seepage problems.
//!
//! The trained network approximates hydraulic head; its fitness is the sum of
//! mean-squared penalty terms: the PDE residual at interior collocation
//! points, head and flux mismatches on the boundary, the initial condition
//! for transient runs, and the kinematic conditions on a free surface. Every
//! term is recorded on a tape, so one backward pass yields the exact gradient
//! with respect to all trainable parameters.
//!
//! Two evaluation routes produce the same loss. [`loss_total`] records each
//! collocation point on a caller-supplied tape and is the reference
//! semantics. [`LossEvaluator`] compiles one point of each term category into
//! a batch template and replays it across all points of that category, which
//! is what makes full training runs affordable; its agreement with the scalar
//! route is pinned by tests.

use crate::autodiff::{AdError, Activation, Jet2, Tape, Var};
use crate::batch::{BatchExec, CompileError, Template};
use crate::geometry::{
    self, BcKind, BoundaryPoint, Curve, Domain, GeometryError, SamplePlan, SampleSet,
};
use crate::network::{NetConfig, NetworkParams, Normalizer, ParamLeaves};
use crate::numerics::pairwise_sum;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PhysicsError {
    #[error("conductivity must be positive, got kx = {0}, ky = {1}")]
    BadConductivity(f64, f64),
    #[error("storage coefficient must be positive for transient problems, got {0}")]
    BadStorage(f64),
    #[error("transient problems need a domain with a time horizon and an initial head")]
    MissingTransientData,
    #[error("the loss needs at least one interior collocation point")]
    NoInteriorPoints,
    #[error("samples contain {0} points but no surface model was supplied")]
    MissingSurfaceModel(&'static str),
    #[error("collocation point ({0}, {1}) lies outside the domain")]
    PointOutsideDomain(f64, f64),
    #[error("batched evaluation does not support the {0} activation")]
    UnsupportedActivation(&'static str),
    #[error("network input arity {got} does not match the problem's {want}")]
    InputArity { got: usize, want: usize },
    #[error("domain {0} has no free-surface and seepage-face segments")]
    NotAFreeSurfaceDomain(&'static str),
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

// ── Problem definition ──────────────────────────────────────────────────

/// Multipliers on the loss terms. The defaults keep every term at unit
/// weight; they exist so experiments can rebalance without touching code.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossWeights {
    pub f: f64,
    pub bc: f64,
    pub ic: f64,
    pub fs: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { f: 1.0, bc: 1.0, ic: 1.0, fs: 1.0 }
    }
}

/// A seepage boundary-value problem: the governing equation's coefficients
/// plus the domain carrying its boundary conditions.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub kx: f64,
    pub ky: f64,
    /// Specific storage; only meaningful when `transient` is set.
    pub ss: f64,
    pub transient: bool,
    /// Constant multiplier applied to the raw residual, see
    /// [`conditioning_scale`].
    pub residual_scale: f64,
    pub weights: LossWeights,
    pub domain: Domain,
}

impl ProblemSpec {
    pub fn steady(domain: Domain, kx: f64, ky: f64) -> Result<ProblemSpec, PhysicsError> {
        if !(kx > 0.0) || !(ky > 0.0) {
            return Err(PhysicsError::BadConductivity(kx, ky));
        }
        Ok(ProblemSpec {
            kx,
            ky,
            ss: 0.0,
            transient: false,
            residual_scale: 1.0,
            weights: LossWeights::default(),
            domain,
        })
    }

    pub fn transient(
        domain: Domain,
        kx: f64,
        ky: f64,
        ss: f64,
    ) -> Result<ProblemSpec, PhysicsError> {
        if !(kx > 0.0) || !(ky > 0.0) {
            return Err(PhysicsError::BadConductivity(kx, ky));
        }
        if !(ss > 0.0) {
            return Err(PhysicsError::BadStorage(ss));
        }
        if domain.horizon.is_none() || domain.initial_head.is_none() {
            return Err(PhysicsError::MissingTransientData);
        }
        Ok(ProblemSpec {
            kx,
            ky,
            ss,
            transient: true,
            residual_scale: 1.0,
            weights: LossWeights::default(),
            domain,
        })
    }

    pub fn with_residual_scale(mut self, scale: f64) -> ProblemSpec {
        self.residual_scale = scale;
        self
    }

    /// Network input arity: (x, y) or (x, y, t).
    pub fn input_dim(&self) -> usize {
        if self.transient { 3 } else { 2 }
    }

    /// Input normalizer over the domain's bounding box (and time horizon).
    pub fn normalizer(&self) -> Normalizer {
        let mut lo = vec![self.domain.lo[0], self.domain.lo[1]];
        let mut hi = vec![self.domain.hi[0], self.domain.hi[1]];
        if self.transient {
            lo.push(0.0);
            hi.push(self.domain.horizon.expect("transient spec keeps a horizon"));
        }
        Normalizer::new(lo, hi)
    }
}

/// Residual multiplier that keeps the PDE term visible next to the boundary
/// terms.
///
/// Head mismatches enter the loss at the scale of the head values themselves,
/// while second derivatives of a head field spanning H metres over a domain
/// of half-width R are of order H / R². With a small conductivity in front,
/// the raw squared residual can sit ten or more orders of magnitude below the
/// boundary term, so the optimizer would satisfy the boundary data and leave
/// the equation unenforced. Multiplying the residual by R² / k (R = half the
/// shorter box side) restores head units without changing the equation's
/// zero set, exactly like solving the nondimensionalized equation.
pub fn conditioning_scale(domain: &Domain, k: f64) -> f64 {
    let r = 0.5 * (domain.hi[0] - domain.lo[0]).min(domain.hi[1] - domain.lo[1]);
    r * r / k
}

// ── PDE residual ────────────────────────────────────────────────────────

fn assemble_residual(tape: &mut Tape, spec: &ProblemSpec, hxx: Var, hyy: Var, ht: Option<Var>) -> Var {
    let a = tape.scale(hxx, spec.kx);
    let b = tape.scale(hyy, spec.ky);
    let mut r = tape.add(a, b);
    if let Some(ht) = ht {
        let ht = tape.scale(ht, spec.ss);
        r = tape.sub(r, ht);
    }
    tape.scale(r, spec.residual_scale)
}

/// Residual assembled from precomputed directional jets: `jx`, `jy` carry the
/// second space derivatives and `ht` the first time derivative (None for
/// steady problems). Lets a hand-built field stand in for the network.
pub fn pde_residual_from_jets(
    tape: &mut Tape,
    spec: &ProblemSpec,
    jx: Jet2,
    jy: Jet2,
    ht: Option<Var>,
) -> Var {
    assemble_residual(tape, spec, jx.d2, jy.d2, ht)
}

fn record_residual(
    tape: &mut Tape,
    h: &ParamLeaves,
    norm: &Normalizer,
    spec: &ProblemSpec,
    coords: &[Var],
) -> Result<Var, AdError> {
    let dirs: &[usize] = if spec.transient { &[0, 1, 2] } else { &[0, 1] };
    let inputs = norm.record_multijet_inputs(tape, coords, dirs);
    let mj = h.forward_multijet(tape, &inputs)?;
    let ht = if spec.transient { Some(mj.d1[2]) } else { None };
    Ok(assemble_residual(tape, spec, mj.d2[0], mj.d2[1], ht))
}

/// Records the PDE residual of the network at one interior point, `[x, y]`
/// or `[x, y, t]`. The result stays differentiable with respect to the
/// network's parameter leaves.
pub fn pde_residual(
    tape: &mut Tape,
    h: &ParamLeaves,
    norm: &Normalizer,
    spec: &ProblemSpec,
    point: &[f64],
) -> Result<Var, PhysicsError> {
    if point.len() != spec.input_dim() {
        return Err(PhysicsError::InputArity { got: point.len(), want: spec.input_dim() });
    }
    if !spec.domain.contains([point[0], point[1]]) {
        return Err(PhysicsError::PointOutsideDomain(point[0], point[1]));
    }
    let coords: Vec<Var> = point.iter().map(|&c| tape.constant(c)).collect();
    Ok(record_residual(tape, h, norm, spec, &coords)?)
}

// ── Per-point recorders shared by both evaluation routes ────────────────

fn record_dirichlet_sq(
    tape: &mut Tape,
    h: &ParamLeaves,
    norm: &Normalizer,
    coords: &[Var],
    g: Var,
) -> Result<Var, AdError> {
    let mapped = norm.record(tape, coords);
    let hv = h.forward_value(tape, &mapped)?;
    let d = tape.sub(hv, g);
    Ok(tape.square(d))
}

fn record_neumann_sq(
    tape: &mut Tape,
    h: &ParamLeaves,
    norm: &Normalizer,
    coords: &[Var],
    normal: [Var; 2],
    f: Var,
) -> Result<Var, AdError> {
    let inputs = norm.record_multijet_inputs(tape, coords, &[0, 1]);
    let mj = h.forward_multijet(tape, &inputs)?;
    let gx = tape.mul(mj.d1[0], normal[0]);
    let gy = tape.mul(mj.d1[1], normal[1]);
    let gn = tape.add(gx, gy);
    let d = tape.sub(gn, f);
    Ok(tape.square(d))
}

/// One-sided smooth ramp: coincides with the identity well above zero and
/// vanishes well below. Built from ops the batch engine replays; the
/// transition has width ~2/RAMP_SHARPNESS around zero, which is sharp enough
/// that the spurious penalty just inside the admissible region stays below
/// 1e-4 of a squared metre.
const RAMP_SHARPNESS: f64 = 40.0;

fn smooth_ramp(tape: &mut Tape, z: Var) -> Var {
    let s = tape.scale(z, RAMP_SHARPNESS);
    let sig = tape.sigmoid(s);
    tape.mul(z, sig)
}

/// Records the surface height and its x-derivative at `x`. The form
/// eta(x) = h_up + x * N(x) pins eta(0) to the upstream head exactly, for
/// any parameters of the correction net N.
pub fn record_eta(
    tape: &mut Tape,
    eta: &ParamLeaves,
    eta_norm: &Normalizer,
    h_up: f64,
    x: Var,
) -> Result<(Var, Var), AdError> {
    let inputs = eta_norm.record_multijet_inputs(tape, &[x], &[0]);
    let mj = eta.forward_multijet(tape, &inputs)?;
    let xn = tape.mul(x, mj.value);
    let e = tape.addc(xn, h_up);
    let xp = tape.mul(x, mj.d1[0]);
    let ep = tape.add(mj.value, xp);
    Ok((e, ep))
}

/// Free-surface network registered on the same tape as the head network, so
/// one backward pass covers both parameter sets.
pub struct SurfaceCoupling<'a> {
    pub eta: &'a ParamLeaves,
    pub eta_norm: &'a Normalizer,
    pub h_up: f64,
    pub h_down: f64,
}

/// Everything the surface asks of one station x: head equals elevation,
/// no flow crosses the surface, the elevation stays inside (h_down, h_up],
/// and the profile does not climb. The last two are hinge penalties that
/// vanish on admissible profiles; the monotonicity hinge encodes that a
/// phreatic line dropping from the upstream to the downstream level cannot
/// locally rise, which stops early training from wandering into folded
/// profiles that the flow terms alone are too weak to rule out.
fn record_surface_station(
    tape: &mut Tape,
    h: &ParamLeaves,
    norm: &Normalizer,
    fs: &SurfaceCoupling<'_>,
    x: Var,
) -> Result<Var, AdError> {
    let (e, ep) = record_eta(tape, fs.eta, fs.eta_norm, fs.h_up, x)?;

    let inputs = norm.record_multijet_inputs(tape, &[x, e], &[0, 1]);
    let mj = h.forward_multijet(tape, &inputs)?;

    let d = tape.sub(mj.value, e);
    let head_sq = tape.square(d);

    // Outward normal is proportional to (-eta', 1); squaring lets the
    // normalization enter as a division by 1 + eta'^2, no square root needed.
    let slip = tape.mul(mj.d1[0], ep);
    let flux = tape.sub(mj.d1[1], slip);
    let flux_sq = tape.square(flux);
    let ep_sq = tape.square(ep);
    let denom = tape.addc(ep_sq, 1.0);
    let flux_term = tape.div(flux_sq, denom).expect("1 + eta'^2 is at least one");

    let over = tape.addc(e, -fs.h_up);
    let over = smooth_ramp(tape, over);
    let over_sq = tape.square(over);
    let neg_e = tape.neg(e);
    let under = tape.addc(neg_e, fs.h_down);
    let under = smooth_ramp(tape, under);
    let under_sq = tape.square(under);
    let climb = smooth_ramp(tape, ep);
    let climb_sq = tape.square(climb);

    Ok(tape.sum(&[head_sq, flux_term, over_sq, under_sq, climb_sq]))
}

fn record_seepage_sq(
    tape: &mut Tape,
    h: &ParamLeaves,
    norm: &Normalizer,
    x: Var,
    y: Var,
) -> Result<Var, AdError> {
    let mapped = norm.record(tape, &[x, y]);
    let hv = h.forward_value(tape, &mapped)?;
    let d = tape.sub(hv, y);
    Ok(tape.square(d))
}

// ── Loss assembly ───────────────────────────────────────────────────────

/// Collocation counts behind each mean in the breakdown.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TermCounts {
    pub interior: usize,
    pub dirichlet: usize,
    pub neumann: usize,
    pub initial: usize,
    pub surface: usize,
    pub seepage: usize,
}

/// Loss terms as plain numbers. Term fields hold unweighted means; `total`
/// applies the problem's weights. Terms a problem does not have stay absent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub loss_f: f64,
    pub loss_bc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_ic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss_fs: Option<f64>,
    pub total: f64,
    pub counts: TermCounts,
}

/// Loss terms as tape scalars, from the scalar evaluation route.
#[derive(Debug)]
pub struct LossVars {
    pub loss_f: Var,
    pub loss_bc: Var,
    pub loss_ic: Option<Var>,
    pub loss_fs: Option<Var>,
    pub total: Var,
    pub counts: TermCounts,
}

impl LossVars {
    pub fn breakdown(&self, tape: &Tape) -> LossBreakdown {
        LossBreakdown {
            loss_f: tape.value(self.loss_f),
            loss_bc: tape.value(self.loss_bc),
            loss_ic: self.loss_ic.map(|v| tape.value(v)),
            loss_fs: self.loss_fs.map(|v| tape.value(v)),
            total: tape.value(self.total),
            counts: self.counts,
        }
    }
}

fn mean_var(tape: &mut Tape, terms: &[Var]) -> Var {
    if terms.is_empty() {
        return tape.constant(0.0);
    }
    let s = tape.sum(terms);
    tape.scale(s, 1.0 / terms.len() as f64)
}

/// Records the full training loss on `tape`, one collocation point at a
/// time. This is the reference semantics the batched evaluator must match;
/// for production training loops prefer [`LossEvaluator`].
pub fn loss_total(
    tape: &mut Tape,
    h: &ParamLeaves,
    norm: &Normalizer,
    spec: &ProblemSpec,
    samples: &SampleSet,
    fs: Option<&SurfaceCoupling<'_>>,
) -> Result<LossVars, PhysicsError> {
    if samples.interior.is_empty() {
        return Err(PhysicsError::NoInteriorPoints);
    }

    let mut counts = TermCounts::default();

    let mut residual_sq = Vec::with_capacity(samples.interior.len());
    for p in &samples.interior {
        let point: &[f64] = if spec.transient { &p[..] } else { &p[..2] };
        let coords: Vec<Var> = point.iter().map(|&c| tape.constant(c)).collect();
        let r = record_residual(tape, h, norm, spec, &coords)?;
        residual_sq.push(tape.square(r));
    }
    counts.interior = residual_sq.len();

    let mut dirichlet_sq = Vec::new();
    let mut neumann_sq = Vec::new();
    let mut station_terms = Vec::new();
    let mut seepage_sq = Vec::new();
    for bp in &samples.boundary {
        let seg = &spec.domain.segments[bp.segment];
        match seg.bc {
            BcKind::Dirichlet(g) => {
                let coords = boundary_coords(tape, spec, bp);
                let gv = tape.constant(g);
                dirichlet_sq.push(record_dirichlet_sq(tape, h, norm, &coords, gv)?);
            }
            BcKind::Neumann(f) => {
                let coords = boundary_coords(tape, spec, bp);
                let nx = tape.constant(bp.normal[0]);
                let ny = tape.constant(bp.normal[1]);
                let fv = tape.constant(f);
                neumann_sq.push(record_neumann_sq(tape, h, norm, &coords, [nx, ny], fv)?);
            }
            BcKind::FreeSurface => {
                let fs = fs.ok_or(PhysicsError::MissingSurfaceModel("free-surface"))?;
                let x = tape.constant(bp.xy[0]);
                station_terms.push(record_surface_station(tape, h, norm, fs, x)?);
            }
            BcKind::SeepageFace => {
                if fs.is_none() {
                    return Err(PhysicsError::MissingSurfaceModel("seepage-face"));
                }
                let x = tape.constant(bp.xy[0]);
                let y = tape.constant(bp.xy[1]);
                seepage_sq.push(record_seepage_sq(tape, h, norm, x, y)?);
            }
        }
    }
    counts.dirichlet = dirichlet_sq.len();
    counts.neumann = neumann_sq.len();
    counts.surface = station_terms.len();
    counts.seepage = seepage_sq.len();

    let loss_f = mean_var(tape, &residual_sq);
    let dir_mean = mean_var(tape, &dirichlet_sq);
    let neu_mean = mean_var(tape, &neumann_sq);
    let loss_bc = tape.add(dir_mean, neu_mean);

    let loss_ic = if spec.transient {
        let h0 = spec.domain.initial_head.expect("transient spec keeps an initial head");
        let mut ic_sq = Vec::with_capacity(samples.initial.len());
        for p in &samples.initial {
            let coords = [
                tape.constant(p[0]),
                tape.constant(p[1]),
                tape.constant(0.0),
            ];
            let gv = tape.constant(h0(*p));
            ic_sq.push(record_dirichlet_sq(tape, h, norm, &coords, gv)?);
        }
        counts.initial = ic_sq.len();
        Some(mean_var(tape, &ic_sq))
    } else {
        None
    };

    let loss_fs = if fs.is_some() {
        let st = mean_var(tape, &station_terms);
        let sp = mean_var(tape, &seepage_sq);
        Some(tape.add(st, sp))
    } else {
        None
    };

    let w = spec.weights;
    let mut total = tape.scale(loss_f, w.f);
    let bc_w = tape.scale(loss_bc, w.bc);
    total = tape.add(total, bc_w);
    if let Some(ic) = loss_ic {
        let ic_w = tape.scale(ic, w.ic);
        total = tape.add(total, ic_w);
    }
    if let Some(fsv) = loss_fs {
        let fs_w = tape.scale(fsv, w.fs);
        total = tape.add(total, fs_w);
    }

    Ok(LossVars { loss_f, loss_bc, loss_ic, loss_fs, total, counts })
}

fn boundary_coords(tape: &mut Tape, spec: &ProblemSpec, bp: &BoundaryPoint) -> Vec<Var> {
    let mut coords = vec![tape.constant(bp.xy[0]), tape.constant(bp.xy[1])];
    if spec.transient {
        coords.push(tape.constant(bp.t));
    }
    coords
}

// ── Free-surface model ──────────────────────────────────────────────────

/// Learned phreatic-surface height for unconfined problems. The correction
/// net maps x alone; the hard constraint in [`record_eta`] keeps the
/// upstream end pinned.
#[derive(Clone, Debug)]
pub struct FreeSurfaceModel {
    pub net: NetworkParams,
    pub norm: Normalizer,
    pub h_up: f64,
    pub h_down: f64,
    /// Interior and surface points are redrawn every this many optimizer
    /// steps while the surface estimate moves.
    pub resample_every: usize,
}

pub const DEFAULT_RESAMPLE_EVERY: usize = 100;

impl FreeSurfaceModel {
    /// Builds the model for a domain with free-surface and seepage-face
    /// segments, reading the upstream and downstream heads off its Dirichlet
    /// segments.
    pub fn new(
        domain: &Domain,
        hidden_layers: usize,
        width: usize,
        seed: u64,
    ) -> Result<FreeSurfaceModel, PhysicsError> {
        let has_fs = domain.segments.iter().any(|s| s.bc == BcKind::FreeSurface);
        let has_sf = domain.segments.iter().any(|s| s.bc == BcKind::SeepageFace);
        if !has_fs || !has_sf {
            return Err(PhysicsError::NotAFreeSurfaceDomain(domain.name));
        }
        let dirichlet: Vec<f64> = domain
            .segments
            .iter()
            .filter_map(|s| match s.bc {
                BcKind::Dirichlet(g) => Some(g),
                _ => None,
            })
            .collect();
        let h_up = dirichlet.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let h_down = dirichlet.iter().cloned().fold(f64::INFINITY, f64::min);
        let cfg = NetConfig::new(1, hidden_layers, width, Activation::Tanh);
        Ok(FreeSurfaceModel {
            net: NetworkParams::init(cfg, seed),
            norm: Normalizer::new(vec![domain.lo[0]], vec![domain.hi[0]]),
            h_up,
            h_down,
            resample_every: DEFAULT_RESAMPLE_EVERY,
        })
    }

    /// Surface height before clamping.
    pub fn eta_raw(&self, x: f64) -> f64 {
        self.h_up + x * self.net.forward(&[self.norm.map1(0, x)])
    }

    /// Surface height clamped to the physically admissible band; sampling
    /// uses this so collocation points never leave the water body even while
    /// the net's estimate is out of range (the loss hinge pulls it back).
    pub fn eta(&self, x: f64) -> f64 {
        self.eta_raw(x).clamp(self.h_down, self.h_up)
    }

    /// d(eta)/dx of the unclamped surface, by differentiating the net.
    pub fn eta_prime(&self, x: f64) -> f64 {
        let mut tape = Tape::new();
        let leaves = self.net.register_leaves(&mut tape);
        let xv = tape.constant(x);
        let (_, ep) = record_eta(&mut tape, &leaves, &self.norm, self.h_up, xv)
            .expect("tanh surface net records jets");
        tape.value(ep)
    }
}

/// Redraws collocation points for the current surface estimate: interior
/// points fill the water body under eta, the seepage face runs from the
/// downstream head up to eta at the face, and surface stations sit on the
/// estimate itself. Deterministic in (seed, step), so a training run can be
/// replayed exactly.
pub fn resample_free_domain(
    fs: &FreeSurfaceModel,
    domain: &Domain,
    plan: &SamplePlan,
    seed: u64,
    step: usize,
) -> Result<SampleSet, GeometryError> {
    // Streams 4 and 5 continue the numbering used by the static sampler;
    // the step index keeps redraws along one run independent.
    let stream = |region: u64| (region << 48) | step as u64;
    let nudge = geometry::ENDPOINT_NUDGE;

    let mut set = SampleSet {
        seed,
        interior: Vec::with_capacity(plan.interior),
        boundary: Vec::with_capacity(plan.boundary),
        initial: Vec::new(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream(4));
    for _ in 0..plan.interior {
        let x = rng.gen_range(domain.lo[0]..domain.hi[0]);
        let u: f64 = rng.gen();
        let yhat = nudge + u * (1.0 - 2.0 * nudge);
        set.interior.push([x, yhat * fs.eta(x), 0.0]);
    }

    // Segment lengths under the current surface: the seepage face is the
    // wetted part of the downstream wall, the surface is measured by its x
    // extent.
    let lengths: Vec<f64> = domain
        .segments
        .iter()
        .map(|seg| match seg.bc {
            BcKind::SeepageFace => (seepage_top(fs, seg) - fs.h_down).max(0.0),
            BcKind::FreeSurface => domain.hi[0] - domain.lo[0],
            _ => seg.curve.length(),
        })
        .collect();
    let counts = match &plan.per_segment {
        Some(c) => {
            if c.len() != domain.segments.len() {
                return Err(GeometryError::PlanMismatch {
                    expected: domain.segments.len(),
                    got: c.len(),
                });
            }
            c.clone()
        }
        None => geometry::allocate_by_length(plan.boundary, &lengths),
    };

    rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream(5));
    for (si, seg) in domain.segments.iter().enumerate() {
        for _ in 0..counts[si] {
            let u: f64 = rng.gen();
            let u = nudge + u * (1.0 - 2.0 * nudge);
            let bp = match seg.bc {
                BcKind::SeepageFace => {
                    let x = seepage_x(seg);
                    let y = fs.h_down + u * (seepage_top(fs, seg) - fs.h_down);
                    let (_, normal) = seg.point_and_normal(0.5);
                    BoundaryPoint { segment: si, xy: [x, y], t: 0.0, normal }
                }
                BcKind::FreeSurface => {
                    let x = domain.lo[0] + u * (domain.hi[0] - domain.lo[0]);
                    let ep = fs.eta_prime(x);
                    let len = ep.hypot(1.0);
                    BoundaryPoint {
                        segment: si,
                        xy: [x, fs.eta(x)],
                        t: 0.0,
                        normal: [-ep / len, 1.0 / len],
                    }
                }
                _ => {
                    let (xy, normal) = seg.point_and_normal(u);
                    BoundaryPoint { segment: si, xy, t: 0.0, normal }
                }
            };
            set.boundary.push(bp);
        }
    }

    Ok(set)
}

fn seepage_x(seg: &geometry::BoundarySegment) -> f64 {
    match seg.curve {
        Curve::Line { a, b } => {
            assert!(
                (a[0] - b[0]).abs() < 1e-12,
                "seepage face must be a vertical wall, got x from {} to {}",
                a[0],
                b[0]
            );
            a[0]
        }
        Curve::Arc { .. } => panic!("seepage face must be a straight wall"),
    }
}

fn seepage_top(fs: &FreeSurfaceModel, seg: &geometry::BoundarySegment) -> f64 {
    fs.eta(seepage_x(seg))
}

// ── Batched evaluator ───────────────────────────────────────────────────

/// Lanes processed per replay chunk. Fixed so gradient accumulation order,
/// and with it the training trajectory, never depends on sample counts.
const CHUNK: usize = 128;

struct Category {
    template: Template,
    exec: Option<BatchExec>,
    cols: Vec<Vec<f64>>,
}

impl Category {
    fn new(template: Template) -> Category {
        let cols = vec![Vec::new(); template.n_slots()];
        Category { template, exec: None, cols }
    }

    fn clear(&mut self) {
        for c in &mut self.cols {
            c.clear();
        }
    }

    fn finish_fill(&mut self) {
        let n = self.cols[0].len();
        self.exec = if n == 0 {
            None
        } else {
            Some(self.template.new_exec(n.min(CHUNK)))
        };
    }

    fn len(&self) -> usize {
        self.cols[0].len()
    }

    /// Mean of the per-point roots; accumulates `weight * d(mean)/d(theta)`.
    fn run(&mut self, theta: &[f64], weight: f64, grad: &mut [f64], roots: &mut Vec<f64>) -> f64 {
        let n = self.len();
        if n == 0 {
            return 0.0;
        }
        let exec = self.exec.as_mut().expect("finish_fill allocated an exec");
        roots.clear();
        let seed = weight / n as f64;
        let mut at = 0;
        while at < n {
            let b = (n - at).min(CHUNK);
            let slices: Vec<&[f64]> = self.cols.iter().map(|c| &c[at..at + b]).collect();
            self.template.run_chunk(theta, &slices, seed, exec, grad, roots);
            at += b;
        }
        pairwise_sum(roots) / n as f64
    }
}

struct EtaSetup {
    cfg: NetConfig,
    norm: Normalizer,
    h_up: f64,
    h_down: f64,
}

/// Compiled batched loss: one template per term category, replayed over all
/// points of that category. Construction compiles the templates;
/// [`set_samples`](LossEvaluator::set_samples) swaps collocation data in and
/// out without recompiling, which is what the free-surface resampling loop
/// does every few optimizer steps.
pub struct LossEvaluator {
    spec: ProblemSpec,
    n_h: usize,
    n_params: usize,
    interior: Category,
    dirichlet: Category,
    neumann: Category,
    initial: Option<Category>,
    surface: Option<Category>,
    seepage: Option<Category>,
    counts: TermCounts,
    roots: Vec<f64>,
}

impl LossEvaluator {
    pub fn new(
        spec: &ProblemSpec,
        h_cfg: &NetConfig,
        fs: Option<&FreeSurfaceModel>,
    ) -> Result<LossEvaluator, PhysicsError> {
        if h_cfg.input_dim != spec.input_dim() {
            return Err(PhysicsError::InputArity {
                got: h_cfg.input_dim,
                want: spec.input_dim(),
            });
        }
        for act in std::iter::once(h_cfg.activation)
            .chain(fs.iter().map(|f| f.net.config.activation))
        {
            // Replay freezes the recording's control flow, so activations
            // whose recording branches on the input value are out.
            if !matches!(act, Activation::Tanh | Activation::Sigmoid | Activation::Identity) {
                return Err(PhysicsError::UnsupportedActivation(act.name()));
            }
        }

        let norm = spec.normalizer();
        let dim = spec.input_dim();
        let eta = fs.map(|f| EtaSetup {
            cfg: f.net.config,
            norm: f.norm.clone(),
            h_up: f.h_up,
            h_down: f.h_down,
        });

        // Every template registers the head leaves, then the surface leaves,
        // so parameter indices agree across categories and with the packed
        // vector the optimizer sees.
        let record = |build: &dyn Fn(
            &mut Tape,
            &ParamLeaves,
            Option<&SurfaceCoupling<'_>>,
            &mut Vec<Var>,
        )
            -> Result<Var, AdError>|
         -> Result<Template, PhysicsError> {
            let mut tape = Tape::new();
            let h_leaves = NetworkParams::zeros(*h_cfg).register_leaves(&mut tape);
            let eta_leaves = eta
                .as_ref()
                .map(|e| NetworkParams::zeros(e.cfg).register_leaves(&mut tape));
            let coupling = eta.as_ref().map(|e| SurfaceCoupling {
                eta: eta_leaves.as_ref().unwrap(),
                eta_norm: &e.norm,
                h_up: e.h_up,
                h_down: e.h_down,
            });
            let mut slots = Vec::new();
            let root = build(&mut tape, &h_leaves, coupling.as_ref(), &mut slots)?;
            Ok(Template::compile(&tape, &slots, root)?)
        };

        let spec_c = spec.clone();
        let norm_c = norm.clone();
        let interior = record(&|tape, h, _, slots| {
            for _ in 0..dim {
                slots.push(tape.constant(0.25));
            }
            let r = record_residual(tape, h, &norm_c, &spec_c, slots)?;
            Ok(tape.square(r))
        })?;

        let dirichlet = record(&|tape, h, _, slots| {
            for _ in 0..dim {
                slots.push(tape.constant(0.25));
            }
            let g = tape.constant(0.0);
            slots.push(g);
            record_dirichlet_sq(tape, h, &norm_c, &slots[..dim].to_vec(), g)
        })?;

        let neumann = record(&|tape, h, _, slots| {
            for _ in 0..dim {
                slots.push(tape.constant(0.25));
            }
            let coords = slots[..dim].to_vec();
            let nx = tape.constant(1.0);
            let ny = tape.constant(0.0);
            let f = tape.constant(0.0);
            slots.extend_from_slice(&[nx, ny, f]);
            record_neumann_sq(tape, h, &norm_c, &coords, [nx, ny], f)
        })?;

        let initial = if spec.transient {
            Some(Category::new(record(&|tape, h, _, slots| {
                let x = tape.constant(0.25);
                let y = tape.constant(0.25);
                let g = tape.constant(0.0);
                slots.extend_from_slice(&[x, y, g]);
                let t0 = tape.constant(0.0);
                record_dirichlet_sq(tape, h, &norm_c, &[x, y, t0], g)
            })?))
        } else {
            None
        };

        let (surface, seepage) = if let Some(f) = fs {
            let sx = seepage_x(
                spec.domain
                    .segments
                    .iter()
                    .find(|s| s.bc == BcKind::SeepageFace)
                    .expect("free-surface problems keep a seepage face"),
            );
            let surface = record(&|tape, h, coupling, slots| {
                let x = tape.constant(0.25);
                slots.push(x);
                record_surface_station(tape, h, &norm_c, coupling.unwrap(), x)
            })?;
            let seepage = record(&|tape, h, _, slots| {
                let y = tape.constant(f.h_down);
                slots.push(y);
                let xv = tape.constant(sx);
                record_seepage_sq(tape, h, &norm_c, xv, y)
            })?;
            (Some(Category::new(surface)), Some(Category::new(seepage)))
        } else {
            (None, None)
        };

        let n_h = h_cfg.n_params();
        let n_params = n_h + eta.as_ref().map_or(0, |e| e.cfg.n_params());
        Ok(LossEvaluator {
            spec: spec.clone(),
            n_h,
            n_params,
            interior: Category::new(interior),
            dirichlet: Category::new(dirichlet),
            neumann: Category::new(neumann),
            initial,
            surface,
            seepage,
            counts: TermCounts::default(),
            roots: Vec::new(),
        })
    }

    /// Total trainable parameters: head net plus surface net where present.
    /// The packed vector is the head parameters followed by the surface's.
    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// Length of the head-network prefix of the packed parameter vector.
    pub fn n_head_params(&self) -> usize {
        self.n_h
    }

    pub fn counts(&self) -> TermCounts {
        self.counts
    }

    pub fn set_samples(&mut self, samples: &SampleSet) -> Result<(), PhysicsError> {
        if samples.interior.is_empty() {
            return Err(PhysicsError::NoInteriorPoints);
        }
        let transient = self.spec.transient;
        let dim = self.spec.input_dim();

        self.interior.clear();
        for p in &samples.interior {
            for d in 0..dim {
                self.interior.cols[d].push(p[d]);
            }
        }

        self.dirichlet.clear();
        self.neumann.clear();
        if let Some(s) = &mut self.surface {
            s.clear();
        }
        if let Some(s) = &mut self.seepage {
            s.clear();
        }
        for bp in &samples.boundary {
            let seg = &self.spec.domain.segments[bp.segment];
            match seg.bc {
                BcKind::Dirichlet(g) => {
                    self.dirichlet.cols[0].push(bp.xy[0]);
                    self.dirichlet.cols[1].push(bp.xy[1]);
                    if transient {
                        self.dirichlet.cols[2].push(bp.t);
                    }
                    self.dirichlet.cols[dim].push(g);
                }
                BcKind::Neumann(f) => {
                    self.neumann.cols[0].push(bp.xy[0]);
                    self.neumann.cols[1].push(bp.xy[1]);
                    if transient {
                        self.neumann.cols[2].push(bp.t);
                    }
                    self.neumann.cols[dim].push(bp.normal[0]);
                    self.neumann.cols[dim + 1].push(bp.normal[1]);
                    self.neumann.cols[dim + 2].push(f);
                }
                BcKind::FreeSurface => {
                    let s = self
                        .surface
                        .as_mut()
                        .ok_or(PhysicsError::MissingSurfaceModel("free-surface"))?;
                    s.cols[0].push(bp.xy[0]);
                }
                BcKind::SeepageFace => {
                    let s = self
                        .seepage
                        .as_mut()
                        .ok_or(PhysicsError::MissingSurfaceModel("seepage-face"))?;
                    s.cols[0].push(bp.xy[1]);
                }
            }
        }

        if let Some(ic) = &mut self.initial {
            ic.clear();
            let h0 = self
                .spec
                .domain
                .initial_head
                .expect("transient spec keeps an initial head");
            for p in &samples.initial {
                ic.cols[0].push(p[0]);
                ic.cols[1].push(p[1]);
                ic.cols[2].push(h0(*p));
            }
        }

        self.interior.finish_fill();
        self.dirichlet.finish_fill();
        self.neumann.finish_fill();
        if let Some(c) = &mut self.initial {
            c.finish_fill();
        }
        if let Some(c) = &mut self.surface {
            c.finish_fill();
        }
        if let Some(c) = &mut self.seepage {
            c.finish_fill();
        }

        self.counts = TermCounts {
            interior: self.interior.len(),
            dirichlet: self.dirichlet.len(),
            neumann: self.neumann.len(),
            initial: self.initial.as_ref().map_or(0, Category::len),
            surface: self.surface.as_ref().map_or(0, Category::len),
            seepage: self.seepage.as_ref().map_or(0, Category::len),
        };
        Ok(())
    }

    /// Loss and gradient at `theta`. `grad` is overwritten with the gradient
    /// of the weighted total.
    pub fn eval(&mut self, theta: &[f64], grad: &mut [f64]) -> LossBreakdown {
        assert_eq!(theta.len(), self.n_params, "packed parameter length mismatch");
        assert_eq!(grad.len(), self.n_params, "gradient buffer length mismatch");
        grad.fill(0.0);
        let w = self.spec.weights;
        let roots = &mut self.roots;

        let loss_f = self.interior.run(theta, w.f, grad, roots);
        let dir = self.dirichlet.run(theta, w.bc, grad, roots);
        let neu = self.neumann.run(theta, w.bc, grad, roots);
        let loss_bc = dir + neu;
        let loss_ic = self
            .initial
            .as_mut()
            .map(|c| c.run(theta, w.ic, grad, roots));
        let loss_fs = match (&mut self.surface, &mut self.seepage) {
            (Some(su), Some(se)) => {
                Some(su.run(theta, w.fs, grad, roots) + se.run(theta, w.fs, grad, roots))
            }
            _ => None,
        };

        let mut total = w.f * loss_f + w.bc * loss_bc;
        if let Some(ic) = loss_ic {
            total += w.ic * ic;
        }
        if let Some(fsv) = loss_fs {
            total += w.fs * fsv;
        }
        LossBreakdown { loss_f, loss_bc, loss_ic, loss_fs, total, counts: self.counts }
    }
}

// ── Tests ───────────────────────────────────────────────────────────────
