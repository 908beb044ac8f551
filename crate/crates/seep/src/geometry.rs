//! Benchmark domains, boundary segmentation, and seeded collocation samplers.
//!
//! Domains are immutable descriptions: a bounding box, a membership shape,
//! and boundary segments that each carry a parametric curve, an outward
//! normal, and a boundary-condition kind. Samplers draw interior points by
//! rejection over the box and boundary points uniformly in arc length, with
//! per-purpose ChaCha streams so the same seed reproduces the same points no
//! matter what else consumed randomness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("rejection sampling accepted {accepted} of {proposals} proposals; the domain is too thin for box rejection")]
    RejectionTooLow { accepted: usize, proposals: usize },
    #[error("per-segment plan lists {got} counts for {expected} segments")]
    PlanMismatch { expected: usize, got: usize },
    #[error("bad points file: {0}")]
    BadCsv(String),
}

// ── Curves and segments ─────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Curve {
    Line {
        a: [f64; 2],
        b: [f64; 2],
    },
    /// Circle section swept from `theta0` to `theta1` (radians).
    Arc {
        center: [f64; 2],
        radius: f64,
        theta0: f64,
        theta1: f64,
    },
}

impl Curve {
    pub fn length(&self) -> f64 {
        match *self {
            Curve::Line { a, b } => ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt(),
            Curve::Arc { radius, theta0, theta1, .. } => radius * (theta1 - theta0).abs(),
        }
    }

    /// Point at arc-length fraction `t` in [0, 1].
    pub fn point_at(&self, t: f64) -> [f64; 2] {
        match *self {
            Curve::Line { a, b } => [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])],
            Curve::Arc { center, radius, theta0, theta1 } => {
                let th = theta0 + t * (theta1 - theta0);
                [center[0] + radius * th.cos(), center[1] + radius * th.sin()]
            }
        }
    }
}

/// Boundary condition attached to a segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BcKind {
    /// Prescribed head, h = value.
    Dirichlet(f64),
    /// Prescribed outward normal gradient, dh/dn = value.
    Neumann(f64),
    /// Phreatic line: h = y and dh/dn = 0, position found during training.
    FreeSurface,
    /// Exit face above tailwater: h = y where water seeps out.
    SeepageFace,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundarySegment {
    pub name: &'static str,
    pub curve: Curve,
    pub bc: BcKind,
    /// Flips the default normal; every builtin is probe-tested so the sign
    /// always points out of the flow region.
    outward_sign: f64,
}

impl BoundarySegment {
    pub fn new(name: &'static str, curve: Curve, bc: BcKind, outward_sign: f64) -> Self {
        BoundarySegment {
            name,
            curve,
            bc,
            outward_sign,
        }
    }

    /// Position and outward unit normal at arc-length fraction `t`.
    pub fn point_and_normal(&self, t: f64) -> ([f64; 2], [f64; 2]) {
        match self.curve {
            Curve::Line { a, b } => {
                let p = self.curve.point_at(t);
                let len = self.curve.length();
                let d = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
                // Right-hand perpendicular of the travel direction.
                let n = [d[1] * self.outward_sign, -d[0] * self.outward_sign];
                (p, n)
            }
            Curve::Arc { theta0, theta1, .. } => {
                let th = theta0 + t * (theta1 - theta0);
                let p = self.curve.point_at(t);
                (p, [th.cos() * self.outward_sign, th.sin() * self.outward_sign])
            }
        }
    }
}

// ── Domains ─────────────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape {
    Box,
    BoxMinusDisk { center: [f64; 2], radius: f64 },
}

#[derive(Clone, Debug)]
pub struct Domain {
    pub name: &'static str,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub shape: Shape,
    pub segments: Vec<BoundarySegment>,
    /// Time horizon [0, T] for transient problems.
    pub horizon: Option<f64>,
    /// Initial head h(x, y, 0) for transient problems.
    pub initial_head: Option<fn([f64; 2]) -> f64>,
}

impl Domain {
    pub fn contains(&self, p: [f64; 2]) -> bool {
        let in_box = p[0] >= self.lo[0]
            && p[0] <= self.hi[0]
            && p[1] >= self.lo[1]
            && p[1] <= self.hi[1];
        match self.shape {
            Shape::Box => in_box,
            Shape::BoxMinusDisk { center, radius } => {
                let d2 = (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2);
                in_box && d2 >= radius * radius
            }
        }
    }

    pub fn boundary_length(&self) -> f64 {
        self.segments.iter().map(|s| s.curve.length()).sum()
    }

    pub fn segment_index(&self, name: &str) -> Option<usize> {
        self.segments.iter().position(|s| s.name == name)
    }
}

/// Square plate with a circular opening: [-1,1]^2 minus the radius-0.5 disk
/// at the origin. Heads are fixed on the top edge (0.4), bottom edge (0.3),
/// and the opening rim (0.8); the side walls are impermeable.
pub fn plate_with_hole() -> Domain {
    use std::f64::consts::PI;
    let segments = vec![
        BoundarySegment::new(
            "top",
            Curve::Line { a: [-1.0, 1.0], b: [1.0, 1.0] },
            BcKind::Dirichlet(0.4),
            -1.0,
        ),
        BoundarySegment::new(
            "bottom",
            Curve::Line { a: [-1.0, -1.0], b: [1.0, -1.0] },
            BcKind::Dirichlet(0.3),
            1.0,
        ),
        BoundarySegment::new(
            "left",
            Curve::Line { a: [-1.0, -1.0], b: [-1.0, 1.0] },
            BcKind::Neumann(0.0),
            -1.0,
        ),
        BoundarySegment::new(
            "right",
            Curve::Line { a: [1.0, -1.0], b: [1.0, 1.0] },
            BcKind::Neumann(0.0),
            1.0,
        ),
        // Outward from the flow region means into the opening.
        BoundarySegment::new(
            "hole",
            Curve::Arc { center: [0.0, 0.0], radius: 0.5, theta0: 0.0, theta1: 2.0 * PI },
            BcKind::Dirichlet(0.8),
            -1.0,
        ),
    ];
    Domain {
        name: "plate-with-hole",
        lo: [-1.0, -1.0],
        hi: [1.0, 1.0],
        shape: Shape::BoxMinusDisk { center: [0.0, 0.0], radius: 0.5 },
        segments,
        horizon: None,
        initial_head: None,
    }
}

/// Permeable layer under a dam: [0,240] x [0,80]. The top edge carries the
/// reservoir head (80 m) for x in [0,80], the impervious dam base for
/// x in [80,160], and the tailwater head (20 m) for x in [160,240]; the other
/// walls are impermeable.
pub fn dam_foundation() -> Domain {
    let segments = vec![
        BoundarySegment::new(
            "upstream",
            Curve::Line { a: [0.0, 80.0], b: [80.0, 80.0] },
            BcKind::Dirichlet(80.0),
            -1.0,
        ),
        BoundarySegment::new(
            "base",
            Curve::Line { a: [80.0, 80.0], b: [160.0, 80.0] },
            BcKind::Neumann(0.0),
            -1.0,
        ),
        BoundarySegment::new(
            "downstream",
            Curve::Line { a: [160.0, 80.0], b: [240.0, 80.0] },
            BcKind::Dirichlet(20.0),
            -1.0,
        ),
        BoundarySegment::new(
            "left",
            Curve::Line { a: [0.0, 0.0], b: [0.0, 80.0] },
            BcKind::Neumann(0.0),
            -1.0,
        ),
        BoundarySegment::new(
            "right",
            Curve::Line { a: [240.0, 0.0], b: [240.0, 80.0] },
            BcKind::Neumann(0.0),
            1.0,
        ),
        BoundarySegment::new(
            "bottom",
            Curve::Line { a: [0.0, 0.0], b: [240.0, 0.0] },
            BcKind::Neumann(0.0),
            1.0,
        ),
    ];
    Domain {
        name: "dam-foundation",
        lo: [0.0, 0.0],
        hi: [240.0, 80.0],
        shape: Shape::Box,
        segments,
        horizon: None,
        initial_head: None,
    }
}

/// Rectangular earth dam with an unknown phreatic line: 4 m wide, upstream
/// water level 6 m, tailwater 1 m. The static description uses the initial
/// flat surface estimate (top at y = 6); training re-samples the moving parts
/// as the surface estimate evolves.
pub fn rect_dam_free_surface() -> Domain {
    let segments = vec![
        BoundarySegment::new(
            "upstream",
            Curve::Line { a: [0.0, 0.0], b: [0.0, 6.0] },
            BcKind::Dirichlet(6.0),
            -1.0,
        ),
        BoundarySegment::new(
            "downstream",
            Curve::Line { a: [4.0, 0.0], b: [4.0, 1.0] },
            BcKind::Dirichlet(1.0),
            1.0,
        ),
        BoundarySegment::new(
            "seepage",
            Curve::Line { a: [4.0, 1.0], b: [4.0, 6.0] },
            BcKind::SeepageFace,
            1.0,
        ),
        BoundarySegment::new(
            "bottom",
            Curve::Line { a: [0.0, 0.0], b: [4.0, 0.0] },
            BcKind::Neumann(0.0),
            1.0,
        ),
        BoundarySegment::new(
            "surface",
            Curve::Line { a: [0.0, 6.0], b: [4.0, 6.0] },
            BcKind::FreeSurface,
            -1.0,
        ),
    ];
    Domain {
        name: "rect-dam-free-surface",
        lo: [0.0, 0.0],
        hi: [4.0, 6.0],
        shape: Shape::Box,
        segments,
        horizon: None,
        initial_head: None,
    }
}

fn transient_square_initial_head(p: [f64; 2]) -> f64 {
    if p[0] < 1.0 {
        0.0
    } else {
        3.0 * (p[0] - 1.0)
    }
}

/// Transient flow in a 2 x 2 square over t in [0, 1]: head 0 on the left
/// edge, 3 on the right, impermeable top and bottom, and a piecewise-linear
/// initial head (0 up to x = 1, then ramping to 3).
pub fn transient_square() -> Domain {
    let segments = vec![
        BoundarySegment::new(
            "left",
            Curve::Line { a: [0.0, 0.0], b: [0.0, 2.0] },
            BcKind::Dirichlet(0.0),
            -1.0,
        ),
        BoundarySegment::new(
            "right",
            Curve::Line { a: [2.0, 0.0], b: [2.0, 2.0] },
            BcKind::Dirichlet(3.0),
            1.0,
        ),
        BoundarySegment::new(
            "top",
            Curve::Line { a: [0.0, 2.0], b: [2.0, 2.0] },
            BcKind::Neumann(0.0),
            -1.0,
        ),
        BoundarySegment::new(
            "bottom",
            Curve::Line { a: [0.0, 0.0], b: [2.0, 0.0] },
            BcKind::Neumann(0.0),
            1.0,
        ),
    ];
    Domain {
        name: "transient-square",
        lo: [0.0, 0.0],
        hi: [2.0, 2.0],
        shape: Shape::Box,
        segments,
        horizon: Some(1.0),
        initial_head: Some(transient_square_initial_head),
    }
}

// ── Sampling ────────────────────────────────────────────────────────────

#[derive(Clone, Debug, PartialEq)]
pub struct SamplePlan {
    pub interior: usize,
    pub boundary: usize,
    /// Initial-time points; ignored for steady domains.
    pub initial: usize,
    /// Overrides the length-proportional boundary allocation.
    pub per_segment: Option<Vec<usize>>,
}

impl SamplePlan {
    pub fn new(interior: usize, boundary: usize, initial: usize) -> Self {
        SamplePlan {
            interior,
            boundary,
            initial,
            per_segment: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryPoint {
    pub segment: usize,
    pub xy: [f64; 2],
    pub t: f64,
    pub normal: [f64; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub seed: u64,
    /// Interior collocation points, [x, y, t] (t stays 0 for steady runs).
    pub interior: Vec<[f64; 3]>,
    pub boundary: Vec<BoundaryPoint>,
    /// Spatial points carrying the initial condition at t = 0.
    pub initial: Vec<[f64; 2]>,
}

/// Keeps boundary parameters off segment endpoints so corner points never
/// appear in a sample.
pub(crate) const ENDPOINT_NUDGE: f64 = 1e-9;

/// Largest-remainder allocation of `total` across weights.
pub(crate) fn allocate_by_length(total: usize, lengths: &[f64]) -> Vec<usize> {
    let lsum: f64 = lengths.iter().sum();
    let quotas: Vec<f64> = lengths.iter().map(|l| total as f64 * l / lsum).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.sort_by(|&i, &j| {
        let fi = quotas[i] - quotas[i].floor();
        let fj = quotas[j] - quotas[j].floor();
        fj.partial_cmp(&fi).unwrap().then(i.cmp(&j))
    });
    for k in 0..total - assigned {
        counts[order[k]] += 1;
    }
    counts
}

/// Draws a full collocation set. Stream discipline: interior, boundary, and
/// initial points come from separate ChaCha streams of the same seed.
pub fn sample(domain: &Domain, plan: &SamplePlan, seed: u64) -> Result<SampleSet, GeometryError> {
    let mut set = SampleSet {
        seed,
        interior: Vec::with_capacity(plan.interior),
        boundary: Vec::with_capacity(plan.boundary),
        initial: Vec::new(),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    sample_interior_into(domain, plan.interior, &mut rng, |p, t| {
        set.interior.push([p[0], p[1], t])
    })?;

    rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let lengths: Vec<f64> = domain.segments.iter().map(|s| s.curve.length()).collect();
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
        None => allocate_by_length(plan.boundary, &lengths),
    };
    for (si, seg) in domain.segments.iter().enumerate() {
        for _ in 0..counts[si] {
            let u: f64 = rng.gen();
            let t_par = ENDPOINT_NUDGE + u * (1.0 - 2.0 * ENDPOINT_NUDGE);
            let (xy, normal) = seg.point_and_normal(t_par);
            let t = match domain.horizon {
                Some(horizon) => rng.gen_range(0.0..horizon),
                None => 0.0,
            };
            set.boundary.push(BoundaryPoint {
                segment: si,
                xy,
                t,
                normal,
            });
        }
    }

    if domain.horizon.is_some() && plan.initial > 0 {
        rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(3);
        let mut pts = Vec::with_capacity(plan.initial);
        sample_interior_into(domain, plan.initial, &mut rng, |p, _| pts.push(p))?;
        set.initial = pts;
    }

    Ok(set)
}

fn sample_interior_into(
    domain: &Domain,
    count: usize,
    rng: &mut ChaCha8Rng,
    mut push: impl FnMut([f64; 2], f64),
) -> Result<(), GeometryError> {
    let mut accepted = 0usize;
    let mut proposals = 0usize;
    while accepted < count {
        proposals += 1;
        if proposals >= 1_000_000 && (accepted as f64) < 0.01 * proposals as f64 {
            return Err(GeometryError::RejectionTooLow {
                accepted,
                proposals,
            });
        }
        let p = [
            rng.gen_range(domain.lo[0]..domain.hi[0]),
            rng.gen_range(domain.lo[1]..domain.hi[1]),
        ];
        if domain.contains(p) {
            let t = match domain.horizon {
                Some(horizon) => rng.gen_range(0.0..horizon),
                None => 0.0,
            };
            push(p, t);
            accepted += 1;
        }
    }
    Ok(())
}

// ── Points file (CSV) ───────────────────────────────────────────────────

impl SampleSet {
    /// Debug/replay export. Steady columns: region,x,y,nx,ny; transient runs
    /// add t after y. Floats print in shortest round-trip form, so an
    /// exported set re-imports bit-identically.
    pub fn to_csv(&self, domain: &Domain) -> String {
        let transient = domain.horizon.is_some();
        let mut out = String::new();
        out.push_str(&format!("# seed {}\n", self.seed));
        out.push_str(if transient {
            "region,x,y,t,nx,ny\n"
        } else {
            "region,x,y,nx,ny\n"
        });
        for p in &self.interior {
            if transient {
                out.push_str(&format!("interior,{:?},{:?},{:?},,\n", p[0], p[1], p[2]));
            } else {
                out.push_str(&format!("interior,{:?},{:?},,\n", p[0], p[1]));
            }
        }
        for b in &self.boundary {
            let name = domain.segments[b.segment].name;
            if transient {
                out.push_str(&format!(
                    "{name},{:?},{:?},{:?},{:?},{:?}\n",
                    b.xy[0], b.xy[1], b.t, b.normal[0], b.normal[1]
                ));
            } else {
                out.push_str(&format!(
                    "{name},{:?},{:?},{:?},{:?}\n",
                    b.xy[0], b.xy[1], b.normal[0], b.normal[1]
                ));
            }
        }
        for p in &self.initial {
            out.push_str(&format!("initial,{:?},{:?},0.0,,\n", p[0], p[1]));
        }
        out
    }

    pub fn from_csv(domain: &Domain, text: &str) -> Result<SampleSet, GeometryError> {
        let transient = domain.horizon.is_some();
        let want_cols = if transient { 6 } else { 5 };
        let mut seed = 0u64;
        let mut set = SampleSet {
            seed,
            interior: Vec::new(),
            boundary: Vec::new(),
            initial: Vec::new(),
        };
        let mut saw_header = false;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("# seed ") {
                seed = rest
                    .trim()
                    .parse()
                    .map_err(|_| GeometryError::BadCsv(format!("line {}: bad seed", lineno + 1)))?;
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            if !saw_header {
                saw_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != want_cols {
                return Err(GeometryError::BadCsv(format!(
                    "line {}: {} columns, expected {want_cols}",
                    lineno + 1,
                    fields.len()
                )));
            }
            let num = |s: &str, what: &str| -> Result<f64, GeometryError> {
                s.parse().map_err(|_| {
                    GeometryError::BadCsv(format!("line {}: bad {what} `{s}`", lineno + 1))
                })
            };
            let region = fields[0];
            let x = num(fields[1], "x")?;
            let y = num(fields[2], "y")?;
            let t = if transient { num(fields[3], "t")? } else { 0.0 };
            let (nx_s, ny_s) = if transient {
                (fields[4], fields[5])
            } else {
                (fields[3], fields[4])
            };
            match region {
                "interior" => set.interior.push([x, y, t]),
                "initial" => set.initial.push([x, y]),
                name => {
                    let segment = domain.segment_index(name).ok_or_else(|| {
                        GeometryError::BadCsv(format!("line {}: unknown region `{name}`", lineno + 1))
                    })?;
                    set.boundary.push(BoundaryPoint {
                        segment,
                        xy: [x, y],
                        t,
                        normal: [num(nx_s, "nx")?, num(ny_s, "ny")?],
                    });
                }
            }
        }
        set.seed = seed;
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plate_membership() {
        let d = plate_with_hole();
        assert!(!d.contains([0.0, 0.0]), "the opening is not flow region");
        assert!(d.contains([0.9, 0.9]));
        assert!(d.contains([0.5, 0.0]), "rim points count as closure");
        assert!(!d.contains([1.1, 0.0]));
    }

    #[test]
    fn plate_hole_normal_points_into_the_opening() {
        let d = plate_with_hole();
        let hole = &d.segments[d.segment_index("hole").unwrap()];
        // Parameter 0 on the full circle is the point (0.5, 0).
        let (p, n) = hole.point_and_normal(0.0);
        assert!((p[0] - 0.5).abs() < 1e-12 && p[1].abs() < 1e-12);
        assert!((n[0] + 1.0).abs() < 1e-12 && n[1].abs() < 1e-12);
    }

    #[test]
    fn dam_monitor_points_lie_on_the_base_segment() {
        let d = dam_foundation();
        let base = &d.segments[d.segment_index("base").unwrap()];
        for &x in &[100.0, 120.0, 140.0] {
            let t = (x - 80.0) / 80.0;
            let (p, n) = base.point_and_normal(t);
            assert_eq!(p, [x, 80.0]);
            assert_eq!(n, [0.0, 1.0], "top edge normal is straight up");
        }
        assert!(matches!(base.bc, BcKind::Neumann(v) if v == 0.0));
    }

    #[test]
    fn dam_top_edge_split_carries_the_reservoir_and_tailwater_heads() {
        let d = dam_foundation();
        let up = &d.segments[d.segment_index("upstream").unwrap()];
        let down = &d.segments[d.segment_index("downstream").unwrap()];
        assert_eq!(up.bc, BcKind::Dirichlet(80.0));
        assert_eq!(down.bc, BcKind::Dirichlet(20.0));
        assert_eq!(up.curve.length(), 80.0);
        assert_eq!(down.curve.length(), 80.0);
    }

    #[test]
    fn free_surface_dam_segments() {
        let d = rect_dam_free_surface();
        assert_eq!(
            d.segments[d.segment_index("upstream").unwrap()].bc,
            BcKind::Dirichlet(6.0)
        );
        assert_eq!(
            d.segments[d.segment_index("downstream").unwrap()].bc,
            BcKind::Dirichlet(1.0)
        );
        assert_eq!(
            d.segments[d.segment_index("seepage").unwrap()].bc,
            BcKind::SeepageFace
        );
        assert_eq!(
            d.segments[d.segment_index("surface").unwrap()].bc,
            BcKind::FreeSurface
        );
        let (_, n) = d.segments[d.segment_index("bottom").unwrap()].point_and_normal(0.5);
        assert_eq!(n, [0.0, -1.0]);
    }

    #[test]
    fn transient_initial_head_branches() {
        let d = transient_square();
        let h0 = d.initial_head.unwrap();
        assert_eq!(h0([0.5, 1.3]), 0.0);
        assert_eq!(h0([2.0, 0.1]), 3.0);
        assert_eq!(h0([1.0, 1.9]), 0.0, "both branches agree at the knee");
        assert_eq!(h0([1.5, 0.0]), 1.5);
        assert_eq!(d.horizon, Some(1.0));
    }

    #[test]
    fn interior_samples_satisfy_the_predicate() {
        let d = plate_with_hole();
        let set = sample(&d, &SamplePlan::new(1000, 0, 0), 7).unwrap();
        assert_eq!(set.interior.len(), 1000);
        for p in &set.interior {
            assert!(
                p[0] * p[0] + p[1] * p[1] >= 0.25,
                "({}, {}) fell in the opening",
                p[0],
                p[1]
            );
            assert!(p[0].abs() <= 1.0 && p[1].abs() <= 1.0);
            assert_eq!(p[2], 0.0, "steady samples carry t = 0");
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let d = transient_square();
        let plan = SamplePlan::new(200, 120, 80);
        let a = sample(&d, &plan, 99).unwrap();
        let b = sample(&d, &plan, 99).unwrap();
        let c = sample(&d, &plan, 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn dam_top_segments_get_equal_thirds() {
        let d = dam_foundation();
        // Total boundary 640; picking a multiple keeps every quota integral.
        let set = sample(&d, &SamplePlan::new(0, 640, 0), 3).unwrap();
        let mut per = vec![0usize; d.segments.len()];
        for b in &set.boundary {
            per[b.segment] += 1;
        }
        let up = d.segment_index("upstream").unwrap();
        let base = d.segment_index("base").unwrap();
        let down = d.segment_index("downstream").unwrap();
        assert_eq!(per[up], 80);
        assert_eq!(per[base], 80);
        assert_eq!(per[down], 80);
        assert_eq!(set.boundary.len(), 640);
    }

    #[test]
    fn boundary_counts_match_the_plan_with_remainders() {
        let d = plate_with_hole();
        // Lengths 2,2,2,2,pi: deliberately non-integral quotas.
        let set = sample(&d, &SamplePlan::new(0, 1000, 0), 11).unwrap();
        assert_eq!(set.boundary.len(), 1000);
        let mut per = vec![0usize; d.segments.len()];
        for b in &set.boundary {
            per[b.segment] += 1;
        }
        let total_len = d.boundary_length();
        for (si, seg) in d.segments.iter().enumerate() {
            let expect = 1000.0 * seg.curve.length() / total_len;
            assert!(
                (per[si] as f64 - expect).abs() <= 1.0,
                "{}: {} points for a quota of {expect}",
                seg.name,
                per[si]
            );
        }
    }

    #[test]
    fn outward_normal_probes() {
        // p + eps*n leaves the region, p - eps*n stays inside, for every
        // boundary sample of every builtin.
        let eps = 1e-6;
        for d in [
            plate_with_hole(),
            dam_foundation(),
            rect_dam_free_surface(),
            transient_square(),
        ] {
            let set = sample(&d, &SamplePlan::new(0, 400, 0), 13).unwrap();
            for b in &set.boundary {
                let out = [b.xy[0] + eps * b.normal[0], b.xy[1] + eps * b.normal[1]];
                let inn = [b.xy[0] - eps * b.normal[0], b.xy[1] - eps * b.normal[1]];
                assert!(
                    !d.contains(out),
                    "{}/{}: outward probe from ({}, {}) stayed inside",
                    d.name,
                    d.segments[b.segment].name,
                    b.xy[0],
                    b.xy[1]
                );
                assert!(
                    d.contains(inn),
                    "{}/{}: inward probe from ({}, {}) left the region",
                    d.name,
                    d.segments[b.segment].name,
                    b.xy[0],
                    b.xy[1]
                );
                let len = (b.normal[0].powi(2) + b.normal[1].powi(2)).sqrt();
                assert!((len - 1.0).abs() < 1e-12, "normals are unit length");
            }
        }
    }

    #[test]
    fn boundary_coverage_tracks_length_fractions() {
        let d = plate_with_hole();
        let n = 100_000;
        let set = sample(&d, &SamplePlan::new(0, n, 0), 5).unwrap();
        let mut per = vec![0usize; d.segments.len()];
        for b in &set.boundary {
            per[b.segment] += 1;
        }
        let total_len = d.boundary_length();
        for (si, seg) in d.segments.iter().enumerate() {
            let p = seg.curve.length() / total_len;
            let mean = n as f64 * p;
            let sigma = (n as f64 * p * (1.0 - p)).sqrt();
            // Deterministic allocation puts counts essentially on the mean;
            // 3 sigma is the contract.
            assert!(
                (per[si] as f64 - mean).abs() <= 3.0 * sigma,
                "{}: {} of {n} for fraction {p}",
                seg.name,
                per[si]
            );
        }
    }

    #[test]
    fn transient_samples_cover_space_and_time() {
        let d = transient_square();
        let set = sample(&d, &SamplePlan::new(500, 200, 300), 21).unwrap();
        assert_eq!(set.initial.len(), 300);
        let mut t_min = f64::INFINITY;
        let mut t_max = f64::NEG_INFINITY;
        for p in &set.interior {
            assert!(p[2] >= 0.0 && p[2] < 1.0);
            t_min = t_min.min(p[2]);
            t_max = t_max.max(p[2]);
        }
        assert!(t_min < 0.1 && t_max > 0.9, "time range barely covered");
        for b in &set.boundary {
            assert!(b.t >= 0.0 && b.t < 1.0);
        }
        for p in &set.initial {
            assert!(d.contains(*p));
        }
    }

    #[test]
    fn rejection_guard_reports_thin_domains() {
        // A box minus a disk that swallows all but the corner slivers.
        let mut d = plate_with_hole();
        d.shape = Shape::BoxMinusDisk { center: [0.0, 0.0], radius: 1.41 };
        let err = sample(&d, &SamplePlan::new(10_000, 0, 0), 1).unwrap_err();
        assert!(matches!(err, GeometryError::RejectionTooLow { .. }));
    }

    #[test]
    fn per_segment_override_is_validated() {
        let d = dam_foundation();
        let mut plan = SamplePlan::new(0, 0, 0);
        plan.per_segment = Some(vec![1, 2, 3]);
        assert!(matches!(
            sample(&d, &plan, 1),
            Err(GeometryError::PlanMismatch { expected: 6, got: 3 })
        ));
        plan.per_segment = Some(vec![5, 0, 0, 0, 0, 2]);
        let set = sample(&d, &plan, 1).unwrap();
        assert_eq!(set.boundary.len(), 7);
        assert_eq!(set.boundary.iter().filter(|b| b.segment == 0).count(), 5);
        assert_eq!(set.boundary.iter().filter(|b| b.segment == 5).count(), 2);
    }

    #[test]
    fn csv_round_trips_bit_exactly() {
        let steady = dam_foundation();
        let a = sample(&steady, &SamplePlan::new(50, 30, 0), 17).unwrap();
        let text = a.to_csv(&steady);
        let b = SampleSet::from_csv(&steady, &text).unwrap();
        assert_eq!(a, b);

        let trans = transient_square();
        let a = sample(&trans, &SamplePlan::new(40, 25, 15), 23).unwrap();
        let text = a.to_csv(&trans);
        let b = SampleSet::from_csv(&trans, &text).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_rejects_malformed_rows() {
        let d = dam_foundation();
        let text = "# seed 1\nregion,x,y,nx,ny\nnowhere,1.0,2.0,0.0,1.0\n";
        let err = SampleSet::from_csv(&d, text).unwrap_err();
        assert!(err.to_string().contains("unknown region"));
        let text = "# seed 1\nregion,x,y,nx,ny\ninterior,1.0\n";
        let err = SampleSet::from_csv(&d, text).unwrap_err();
        assert!(err.to_string().contains("columns"));
    }

    #[test]
    fn segments_tile_the_boundary_without_gaps() {
        // Walk each builtin's segments and confirm endpoints meet.
        for d in [dam_foundation(), rect_dam_free_surface(), transient_square()] {
            for seg in &d.segments {
                let s = seg.curve.point_at(0.0);
                let e = seg.curve.point_at(1.0);
                // Every endpoint must coincide with some other segment's
                // endpoint (closed boundary).
                for p in [s, e] {
                    let hits = d
                        .segments
                        .iter()
                        .flat_map(|o| [o.curve.point_at(0.0), o.curve.point_at(1.0)])
                        .filter(|q| (q[0] - p[0]).abs() < 1e-12 && (q[1] - p[1]).abs() < 1e-12)
                        .count();
                    assert!(
                        hits >= 2,
                        "{}/{}: endpoint ({}, {}) is dangling",
                        d.name,
                        seg.name,
                        p[0],
                        p[1]
                    );
                }
            }
        }
    }
}
