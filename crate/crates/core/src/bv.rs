//! Right-continuous test functions of bounded variation on the workload axis.
//!
//! A [`BVFunctional`] is a piecewise closed-form continuous part plus a finite
//! set of atoms (jumps). Everything a derivative estimator needs is exact:
//! point evaluation, the mass of a single atom, the measure of a half-open
//! interval, and the primitive. The continuous part is built from increment
//! shapes, so the function is automatically continuous across segment
//! boundaries and satisfies f(0) = 0 before the stored constant offset;
//! offsets cancel in every estimator, so they are kept out of the shape data.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum BvError {
    #[error("interval bounds out of order: a = {a} > b = {b}")]
    IntervalOrder { a: f64, b: f64 },
    #[error("atom at w = {loc} must have strictly positive location")]
    AtomAtOrigin { loc: f64 },
    #[error("atom locations must be finite, strictly increasing; bad entry at w = {loc}")]
    AtomOrder { loc: f64 },
    #[error("atom at w = {loc} has zero or non-finite mass")]
    BadAtomMass { loc: f64 },
    #[error("non-decreasing functional declared but atom at w = {loc} has negative mass")]
    NegativeAtomMass { loc: f64 },
    #[error("non-decreasing functional declared but segment {index} decreases")]
    DecreasingSegment { index: usize },
    #[error("segment starts must begin at 0 and strictly increase; bad segment {index}")]
    SegmentOrder { index: usize },
    #[error("tabulated shape needs >= 2 points, t strictly increasing from 0, v starting at 0")]
    BadTabulated,
    #[error("operation requires an atom-free functional")]
    HasAtoms,
    #[error("operation requires a non-decreasing functional")]
    NotMonotone,
}

/// Increment shape of one segment: the continuous part gains `g(t)` after
/// local time `t` inside the segment, with `g(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    /// Flat: g = 0.
    Constant,
    /// g = slope * t.
    Linear { slope: f64 },
    /// g = lin * t + quad * t^2.
    Quadratic { lin: f64, quad: f64 },
    /// g = coeff * (e^{rate t} - 1).
    ExpLinear { coeff: f64, rate: f64 },
    /// Piecewise-linear through (t_j, v_j); t_0 = 0, v_0 = 0, flat past the
    /// last knot.
    Tabulated { points: Vec<(f64, f64)> },
}

impl Shape {
    /// Increment after local time t >= 0.
    fn value(&self, t: f64) -> f64 {
        match self {
            Shape::Constant => 0.0,
            Shape::Linear { slope } => slope * t,
            Shape::Quadratic { lin, quad } => lin * t + quad * t * t,
            Shape::ExpLinear { coeff, rate } => {
                if *rate == 0.0 {
                    0.0
                } else {
                    coeff * ((rate * t).exp() - 1.0)
                }
            }
            Shape::Tabulated { points } => {
                let last = points.len() - 1;
                if t >= points[last].0 {
                    return points[last].1;
                }
                let j = points.partition_point(|p| p.0 <= t) - 1;
                let (t0, v0) = points[j];
                let (t1, v1) = points[j + 1];
                v0 + (v1 - v0) * (t - t0) / (t1 - t0)
            }
        }
    }

    /// Exact integral of the increment over [0, t].
    fn integral(&self, t: f64) -> f64 {
        match self {
            Shape::Constant => 0.0,
            Shape::Linear { slope } => slope * t * t / 2.0,
            Shape::Quadratic { lin, quad } => lin * t * t / 2.0 + quad * t * t * t / 3.0,
            Shape::ExpLinear { coeff, rate } => {
                if *rate == 0.0 {
                    0.0
                } else {
                    coeff * ((rate * t).exp() - 1.0) / rate - coeff * t
                }
            }
            Shape::Tabulated { points } => {
                let mut acc = 0.0;
                for w in points.windows(2) {
                    let (t0, v0) = w[0];
                    let (t1, v1) = w[1];
                    if t <= t0 {
                        return acc;
                    }
                    let hi = t.min(t1);
                    let slope = (v1 - v0) / (t1 - t0);
                    let dt = hi - t0;
                    // trapezoid: integral of v0 + slope*(u - t0) over [t0, hi]
                    acc += v0 * dt + slope * dt * dt / 2.0;
                }
                let (tl, vl) = *points.last().unwrap();
                if t > tl {
                    acc += vl * (t - tl);
                }
                acc
            }
        }
    }

    /// Monotone direction over [0, len): +1 non-decreasing, -1 non-increasing,
    /// 0 flat, None if mixed (only quadratics and tables can mix).
    fn direction(&self, len: f64) -> Option<i8> {
        fn sign(x: f64) -> i8 {
            if x > 0.0 {
                1
            } else if x < 0.0 {
                -1
            } else {
                0
            }
        }
        match self {
            Shape::Constant => Some(0),
            Shape::Linear { slope } => Some(sign(*slope)),
            Shape::Quadratic { lin, quad } => {
                let d0 = sign(*lin);
                let d1 = if len.is_finite() {
                    // the derivative at the far end; rounding dust near a
                    // vertex must not flip the monotonicity verdict
                    let end = lin + 2.0 * quad * len;
                    if end.abs() <= 1e-9 * (lin.abs() + (2.0 * quad * len).abs()) {
                        0
                    } else {
                        sign(end)
                    }
                } else {
                    sign(*quad)
                };
                match (d0, d1) {
                    (a, 0) => Some(a),
                    (0, b) => Some(b),
                    (a, b) if a == b => Some(a),
                    _ => None,
                }
            }
            Shape::ExpLinear { coeff, rate } => Some(sign(coeff * *rate)),
            Shape::Tabulated { points } => {
                let mut dir = 0i8;
                for w in points.windows(2) {
                    let s = sign(w[1].1 - w[0].1);
                    if s == 0 {
                        continue;
                    }
                    if dir == 0 {
                        dir = s;
                    } else if dir != s {
                        return None;
                    }
                }
                Some(dir)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    /// Workload at which the segment begins; segments run to the next start.
    pub start: f64,
    pub shape: Shape,
}

impl Segment {
    pub fn new(start: f64, shape: Shape) -> Self {
        Segment { start, shape }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Nondecreasing,
    /// Signed atoms and slopes allowed; the functional is the difference of
    /// two non-decreasing parts, recoverable via [`BVFunctional::monotone_parts`].
    DifferenceOfMonotone,
}

#[derive(Debug, Clone)]
pub struct BVFunctional {
    kind: Kind,
    segments: Vec<Segment>,
    /// Continuous-part value at each segment start (cumulative increments).
    bases: Vec<f64>,
    /// Integral of the continuous part up to each segment start.
    prim_bases: Vec<f64>,
    /// Sorted (location, mass), locations strictly positive.
    atoms: Vec<(f64, f64)>,
    /// Prefix sums of atom masses.
    atom_prefix: Vec<f64>,
    offset: f64,
    atom_tol: f64,
}

impl BVFunctional {
    /// Build from raw parts. Segments are increment shapes between strictly
    /// increasing starts (a flat prefix is implied if the first start is
    /// positive); atoms are (location, mass) with location > 0.
    pub fn from_parts(
        kind: Kind,
        mut segments: Vec<Segment>,
        atoms: Vec<(f64, f64)>,
        offset: f64,
    ) -> Result<Self, BvError> {
        if segments.is_empty() {
            segments.push(Segment::new(0.0, Shape::Constant));
        }
        if segments[0].start > 0.0 {
            segments.insert(0, Segment::new(0.0, Shape::Constant));
        }
        for (i, seg) in segments.iter().enumerate() {
            let ok_start = if i == 0 {
                seg.start == 0.0
            } else {
                seg.start.is_finite() && seg.start > segments[i - 1].start
            };
            if !ok_start {
                return Err(BvError::SegmentOrder { index: i });
            }
            if let Shape::Tabulated { points } = &seg.shape {
                let ascending = points.windows(2).all(|w| w[1].0 > w[0].0);
                if points.len() < 2
                    || points[0] != (0.0, 0.0)
                    || !ascending
                    || points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite())
                {
                    return Err(BvError::BadTabulated);
                }
            }
        }
        let mut prev = 0.0;
        for &(loc, mass) in &atoms {
            if !(loc > 0.0) || !loc.is_finite() {
                return Err(BvError::AtomAtOrigin { loc });
            }
            if loc <= prev {
                return Err(BvError::AtomOrder { loc });
            }
            if mass == 0.0 || !mass.is_finite() {
                return Err(BvError::BadAtomMass { loc });
            }
            if kind == Kind::Nondecreasing && mass < 0.0 {
                return Err(BvError::NegativeAtomMass { loc });
            }
            prev = loc;
        }
        if kind == Kind::Nondecreasing {
            for (i, seg) in segments.iter().enumerate() {
                let len = segments
                    .get(i + 1)
                    .map(|s| s.start - seg.start)
                    .unwrap_or(f64::INFINITY);
                if seg.shape.direction(len).map_or(true, |d| d < 0) {
                    return Err(BvError::DecreasingSegment { index: i });
                }
            }
        }

        let mut bases = Vec::with_capacity(segments.len());
        let mut prim_bases = Vec::with_capacity(segments.len());
        let mut base = 0.0;
        let mut prim = 0.0;
        for (i, seg) in segments.iter().enumerate() {
            bases.push(base);
            prim_bases.push(prim);
            if let Some(next) = segments.get(i + 1) {
                let len = next.start - seg.start;
                prim += base * len + seg.shape.integral(len);
                base += seg.shape.value(len);
            }
        }
        let mut atom_prefix = Vec::with_capacity(atoms.len() + 1);
        atom_prefix.push(0.0);
        let mut sum = 0.0;
        for &(_, m) in &atoms {
            sum += m;
            atom_prefix.push(sum);
        }
        Ok(BVFunctional {
            kind,
            segments,
            bases,
            prim_bases,
            atoms,
            atom_prefix,
            offset,
            atom_tol: 0.0,
        })
    }

    /// f(w) = w.
    pub fn identity() -> Self {
        Self::from_parts(
            Kind::Nondecreasing,
            vec![Segment::new(0.0, Shape::Linear { slope: 1.0 })],
            vec![],
            0.0,
        )
        .expect("identity is well-formed")
    }

    /// f(w) = 1 when w >= threshold, else 0. Requires threshold > 0.
    pub fn indicator(threshold: f64) -> Result<Self, BvError> {
        Self::from_parts(Kind::Nondecreasing, vec![], vec![(threshold, 1.0)], 0.0)
    }

    /// f(w) = max(w - knee, 0).
    pub fn ramp(knee: f64) -> Result<Self, BvError> {
        let segments = if knee > 0.0 {
            vec![
                Segment::new(0.0, Shape::Constant),
                Segment::new(knee, Shape::Linear { slope: 1.0 }),
            ]
        } else {
            vec![Segment::new(0.0, Shape::Linear { slope: 1.0 })]
        };
        Self::from_parts(Kind::Nondecreasing, segments, vec![], 0.0)
    }

    /// f(w) = c.
    pub fn constant(c: f64) -> Self {
        Self::from_parts(Kind::Nondecreasing, vec![], vec![], c).expect("constant is well-formed")
    }

    /// f(w) = w^2 / 2 (primitive of the identity).
    pub fn half_square() -> Self {
        Self::from_parts(
            Kind::Nondecreasing,
            vec![Segment::new(0.0, Shape::Quadratic { lin: 0.0, quad: 0.5 })],
            vec![],
            0.0,
        )
        .expect("half_square is well-formed")
    }

    /// Opt-in absolute tolerance for atom-location matching in
    /// [`Self::atom_mass`]. The default of zero (exact equality) is right for
    /// workloads that hit atoms through exact arithmetic; a tolerance is for
    /// experiments with accumulated float error.
    pub fn with_atom_tolerance(mut self, tol: f64) -> Self {
        self.atom_tol = tol.max(0.0);
        self
    }

    pub fn kind(&self) -> Kind {
        self.kind
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn has_atoms(&self) -> bool {
        !self.atoms.is_empty()
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    fn segment_index(&self, w: f64) -> usize {
        self.segments.partition_point(|s| s.start <= w) - 1
    }

    fn continuous_value(&self, w: f64) -> f64 {
        let i = self.segment_index(w);
        self.bases[i] + self.segments[i].shape.value(w - self.segments[i].start)
    }

    /// f(w), right-continuous everywhere. Defined for w >= 0; negative
    /// arguments are clamped to 0.
    pub fn eval(&self, w: f64) -> f64 {
        let w = w.max(0.0);
        let cum_atoms = self.atom_prefix[self.atoms.partition_point(|a| a.0 <= w)];
        self.offset + self.continuous_value(w) + cum_atoms
    }

    /// Mass of the atom at w, zero when w is not an atom location. Matching
    /// is exact unless an atom tolerance was set.
    pub fn atom_mass(&self, w: f64) -> f64 {
        if self.atoms.is_empty() {
            return 0.0;
        }
        let i = self.atoms.partition_point(|a| a.0 < w);
        let mut best: Option<(f64, f64)> = None;
        for j in [i.wrapping_sub(1), i] {
            if let Some(&(loc, mass)) = self.atoms.get(j) {
                let d = (loc - w).abs();
                if d <= self.atom_tol && best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, mass));
                }
            }
        }
        best.map_or(0.0, |(_, m)| m)
    }

    /// Measure of the half-open interval (a, b]: continuous variation plus
    /// the atoms inside. Computed from the segment shapes directly, not as
    /// eval(b) - eval(a).
    pub fn interval_mass(&self, a: f64, b: f64) -> Result<f64, BvError> {
        if a > b {
            return Err(BvError::IntervalOrder { a, b });
        }
        let (a, b) = (a.max(0.0), b.max(0.0));
        let mut cont = 0.0;
        let ia = self.segment_index(a);
        let ib = self.segment_index(b);
        for i in ia..=ib {
            let seg = &self.segments[i];
            let lo = a.max(seg.start);
            let hi = if i < ib { self.segments[i + 1].start } else { b };
            cont += seg.shape.value(hi - seg.start) - seg.shape.value(lo - seg.start);
        }
        let lo_idx = self.atoms.partition_point(|at| at.0 <= a);
        let hi_idx = self.atoms.partition_point(|at| at.0 <= b);
        Ok(cont + (self.atom_prefix[hi_idx] - self.atom_prefix[lo_idx]))
    }

    /// F(w) = integral of f over [0, w], exact per segment; each atom
    /// contributes its step, mass * (w - location)^+.
    pub fn primitive(&self, w: f64) -> f64 {
        let w = w.max(0.0);
        let i = self.segment_index(w);
        let seg = &self.segments[i];
        let t = w - seg.start;
        let cont = self.prim_bases[i] + self.bases[i] * t + seg.shape.integral(t);
        let steps: f64 = self
            .atoms
            .iter()
            .take_while(|(loc, _)| *loc < w)
            .map(|(loc, m)| m * (w - loc))
            .sum();
        self.offset * w + cont + steps
    }

    /// The derivative f' as its own functional, with atoms of f' at the kinks
    /// of f. Requires a non-decreasing, atom-free f.
    pub fn formal_derivative(&self) -> Result<BVFunctional, BvError> {
        if self.has_atoms() {
            return Err(BvError::HasAtoms);
        }
        if self.kind != Kind::Nondecreasing {
            return Err(BvError::NotMonotone);
        }
        // Flatten to (global start, value at start, increment shape of f').
        let mut pieces: Vec<(f64, f64, Shape)> = Vec::new();
        for (i, seg) in self.segments.iter().enumerate() {
            match &seg.shape {
                Shape::Constant => pieces.push((seg.start, 0.0, Shape::Constant)),
                Shape::Linear { slope } => pieces.push((seg.start, *slope, Shape::Constant)),
                Shape::Quadratic { lin, quad } => pieces.push((
                    seg.start,
                    *lin,
                    if *quad == 0.0 {
                        Shape::Constant
                    } else {
                        Shape::Linear { slope: 2.0 * quad }
                    },
                )),
                Shape::ExpLinear { coeff, rate } => pieces.push((
                    seg.start,
                    coeff * rate,
                    Shape::ExpLinear {
                        coeff: coeff * rate,
                        rate: *rate,
                    },
                )),
                Shape::Tabulated { points } => {
                    for w in points.windows(2) {
                        let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                        pieces.push((seg.start + w[0].0, slope, Shape::Constant));
                    }
                    // flat beyond the last knot, unless the segment ends first
                    let tail = seg.start + points.last().unwrap().0;
                    let seg_end = self.segments.get(i + 1).map(|s| s.start);
                    if seg_end.map_or(true, |e| tail < e) {
                        pieces.push((tail, 0.0, Shape::Constant));
                    }
                }
            }
        }
        let offset = pieces[0].1;
        let mut segments = Vec::with_capacity(pieces.len());
        let mut atoms: Vec<(f64, f64)> = Vec::new();
        let mut carried = offset;
        for (j, (start, value_at_start, shape)) in pieces.iter().enumerate() {
            if *start > 0.0 {
                let jump = value_at_start - carried;
                if jump != 0.0 {
                    atoms.push((*start, jump));
                }
            }
            segments.push(Segment::new(*start, shape.clone()));
            let end = pieces.get(j + 1).map(|p| p.0);
            carried = match end {
                Some(e) => value_at_start + shape.value(e - start),
                None => *value_at_start,
            };
        }
        let monotone = atoms.iter().all(|&(_, m)| m > 0.0)
            && segments.iter().enumerate().all(|(i, seg)| {
                let len = segments
                    .get(i + 1)
                    .map(|s| s.start - seg.start)
                    .unwrap_or(f64::INFINITY);
                seg.shape.direction(len).map_or(false, |d| d >= 0)
            });
        let kind = if monotone {
            Kind::Nondecreasing
        } else {
            Kind::DifferenceOfMonotone
        };
        BVFunctional::from_parts(kind, segments, atoms, offset)
    }

    /// Split into non-decreasing parts (plus, minus) with f = plus - minus.
    /// The offset rides on the plus part.
    pub fn monotone_parts(&self) -> (BVFunctional, BVFunctional) {
        fn negate(shape: &Shape) -> Shape {
            match shape {
                Shape::Constant => Shape::Constant,
                Shape::Linear { slope } => Shape::Linear { slope: -slope },
                Shape::Quadratic { lin, quad } => Shape::Quadratic {
                    lin: -lin,
                    quad: -quad,
                },
                Shape::ExpLinear { coeff, rate } => Shape::ExpLinear {
                    coeff: -coeff,
                    rate: *rate,
                },
                Shape::Tabulated { points } => Shape::Tabulated {
                    points: points.iter().map(|&(t, v)| (t, -v)).collect(),
                },
            }
        }
        // Split each segment into monotone runs of (global start, shape).
        let mut runs: Vec<(f64, Shape)> = Vec::new();
        for (i, seg) in self.segments.iter().enumerate() {
            let len = self
                .segments
                .get(i + 1)
                .map(|s| s.start - seg.start)
                .unwrap_or(f64::INFINITY);
            match &seg.shape {
                Shape::Quadratic { lin, quad } if seg.shape.direction(len).is_none() => {
                    // vertex of lin*t + quad*t^2 sits strictly inside
                    let v = -lin / (2.0 * quad);
                    runs.push((seg.start, seg.shape.clone()));
                    runs.push((
                        seg.start + v,
                        Shape::Quadratic {
                            lin: 0.0,
                            quad: *quad,
                        },
                    ));
                }
                Shape::Tabulated { points } => {
                    for w in points.windows(2) {
                        let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0);
                        runs.push((seg.start + w[0].0, Shape::Linear { slope }));
                    }
                    let tail = seg.start + points.last().unwrap().0;
                    if len.is_infinite() || tail < seg.start + len {
                        runs.push((tail, Shape::Constant));
                    }
                }
                _ => runs.push((seg.start, seg.shape.clone())),
            }
        }
        let mut plus_segs = Vec::with_capacity(runs.len());
        let mut minus_segs = Vec::with_capacity(runs.len());
        for (j, (start, shape)) in runs.iter().enumerate() {
            let len = runs
                .get(j + 1)
                .map(|r| r.0 - start)
                .unwrap_or(f64::INFINITY);
            let dir = shape.direction(len).unwrap_or(0);
            if dir >= 0 {
                plus_segs.push(Segment::new(*start, shape.clone()));
                minus_segs.push(Segment::new(*start, Shape::Constant));
            } else {
                plus_segs.push(Segment::new(*start, Shape::Constant));
                minus_segs.push(Segment::new(*start, negate(shape)));
            }
        }
        let plus_atoms: Vec<_> = self.atoms.iter().filter(|a| a.1 > 0.0).copied().collect();
        let minus_atoms: Vec<_> = self
            .atoms
            .iter()
            .filter(|a| a.1 < 0.0)
            .map(|&(loc, m)| (loc, -m))
            .collect();
        let plus =
            BVFunctional::from_parts(Kind::Nondecreasing, plus_segs, plus_atoms, self.offset)
                .expect("plus part is non-decreasing by construction");
        let minus = BVFunctional::from_parts(Kind::Nondecreasing, minus_segs, minus_atoms, 0.0)
            .expect("minus part is non-decreasing by construction");
        (plus, minus)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indicator_is_cadlag_at_the_jump() {
        let f = BVFunctional::indicator(0.3).unwrap();
        assert_eq!(f.eval(0.3), 1.0);
        assert_eq!(f.eval(0.29), 0.0);
        assert_eq!(f.eval(1.0), 1.0);
    }

    #[test]
    fn identity_at_zero() {
        assert_eq!(BVFunctional::identity().eval(0.0), 0.0);
        assert_eq!(BVFunctional::identity().eval(2.5), 2.5);
    }

    #[test]
    fn atom_mass_lookup() {
        let f = BVFunctional::indicator(0.3).unwrap();
        assert_eq!(f.atom_mass(0.3), 1.0);
        assert_eq!(f.atom_mass(0.3000001), 0.0);
        assert_eq!(BVFunctional::identity().atom_mass(5.0), 0.0);

        let g = BVFunctional::from_parts(
            Kind::Nondecreasing,
            vec![],
            vec![(1.0, 0.5), (2.0, 0.25)],
            0.0,
        )
        .unwrap();
        assert_eq!(g.atom_mass(2.0), 0.25);
        assert_eq!(g.atom_mass(1.5), 0.0);
    }

    #[test]
    fn atom_mass_with_tolerance() {
        let f = BVFunctional::indicator(1.0).unwrap().with_atom_tolerance(1e-9);
        assert_eq!(f.atom_mass(1.0 + 4e-10), 1.0);
        assert_eq!(f.atom_mass(1.0 - 4e-10), 1.0);
        assert_eq!(f.atom_mass(1.0 + 1e-8), 0.0);
    }

    #[test]
    fn interval_mass_examples() {
        let ind = BVFunctional::indicator(0.3).unwrap();
        assert_eq!(ind.interval_mass(0.0, 0.5).unwrap(), 1.0);
        assert_eq!(ind.interval_mass(0.4, 0.4).unwrap(), 0.0);
        let id = BVFunctional::identity();
        assert!((id.interval_mass(1.0, 3.0).unwrap() - 2.0).abs() < 1e-15);
        assert!(id.interval_mass(3.0, 1.0).is_err());
    }

    #[test]
    fn primitive_examples() {
        let id = BVFunctional::identity();
        assert!((id.primitive(2.0) - 2.0).abs() < 1e-15);
        assert_eq!(id.primitive(0.0), 0.0);
        let ind = BVFunctional::indicator(0.3).unwrap();
        assert!((ind.primitive(1.0) - 0.7).abs() < 1e-15);
        assert_eq!(ind.primitive(0.2), 0.0);
    }

    #[test]
    fn primitive_of_half_square_is_cubic() {
        let f = BVFunctional::half_square();
        assert!((f.primitive(2.0) - 8.0 / 6.0).abs() < 1e-12);
        assert!((f.eval(3.0) - 4.5).abs() < 1e-15);
    }

    #[test]
    fn derivative_of_identity_is_one() {
        let d = BVFunctional::identity().formal_derivative().unwrap();
        assert_eq!(d.eval(0.0), 1.0);
        assert_eq!(d.eval(7.0), 1.0);
        assert!(!d.has_atoms());
    }

    #[test]
    fn derivative_of_square_is_linear() {
        let f = BVFunctional::from_parts(
            Kind::Nondecreasing,
            vec![Segment::new(0.0, Shape::Quadratic { lin: 0.0, quad: 1.0 })],
            vec![],
            0.0,
        )
        .unwrap();
        let d = f.formal_derivative().unwrap();
        assert!(!d.has_atoms());
        assert!((d.eval(3.0) - 6.0).abs() < 1e-12);
        assert_eq!(d.eval(0.0), 0.0);
    }

    #[test]
    fn derivative_of_ramp_is_indicator() {
        // checked against finite differences of the ramp away from the kink
        let f = BVFunctional::ramp(1.0).unwrap();
        let h = 1e-6;
        for w in [0.5, 2.0] {
            let fd = (f.eval(w + h) - f.eval(w - h)) / (2.0 * h);
            let expect = if w > 1.0 { 1.0 } else { 0.0 };
            assert!((fd - expect).abs() < 1e-9);
        }
        let d = f.formal_derivative().unwrap();
        assert_eq!(d.atom_mass(1.0), 1.0);
        assert_eq!(d.eval(0.5), 0.0);
        assert_eq!(d.eval(1.0), 1.0);
    }

    #[test]
    fn derivative_rejects_atoms() {
        let f = BVFunctional::indicator(0.5).unwrap();
        assert_eq!(f.formal_derivative().unwrap_err(), BvError::HasAtoms);
    }

    #[test]
    fn atoms_must_sit_strictly_inside_the_domain() {
        assert!(BVFunctional::indicator(0.0).is_err());
        assert!(BVFunctional::indicator(-1.0).is_err());
    }

    #[test]
    fn nondecreasing_kind_rejects_signed_data() {
        let err = BVFunctional::from_parts(
            Kind::Nondecreasing,
            vec![Segment::new(0.0, Shape::Linear { slope: -1.0 })],
            vec![],
            0.0,
        );
        assert_eq!(err.unwrap_err(), BvError::DecreasingSegment { index: 0 });
        let err = BVFunctional::from_parts(Kind::Nondecreasing, vec![], vec![(1.0, -0.5)], 0.0);
        assert_eq!(err.unwrap_err(), BvError::NegativeAtomMass { loc: 1.0 });
    }

    #[test]
    fn monotone_parts_recompose() {
        // w - ramp(1) with a signed atom pair
        let f = BVFunctional::from_parts(
            Kind::DifferenceOfMonotone,
            vec![
                Segment::new(0.0, Shape::Linear { slope: 1.0 }),
                Segment::new(1.0, Shape::Linear { slope: -0.5 }),
                Segment::new(2.0, Shape::Quadratic { lin: -1.0, quad: 0.5 }),
            ],
            vec![(0.5, 2.0), (1.5, -1.0)],
            0.25,
        )
        .unwrap();
        let (plus, minus) = f.monotone_parts();
        assert_eq!(plus.kind(), Kind::Nondecreasing);
        assert_eq!(minus.kind(), Kind::Nondecreasing);
        let mut w = 0.0;
        while w < 6.0 {
            let got = plus.eval(w) - minus.eval(w);
            assert!(
                (got - f.eval(w)).abs() < 1e-12,
                "w = {w}: {got} vs {}",
                f.eval(w)
            );
            w += 0.0625;
        }
        assert!((plus.atom_mass(0.5) - 2.0).abs() < 1e-15);
        assert!((minus.atom_mass(1.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tabulated_shape_evaluates_and_integrates() {
        let f = BVFunctional::from_parts(
            Kind::Nondecreasing,
            vec![Segment::new(
                0.0,
                Shape::Tabulated {
                    points: vec![(0.0, 0.0), (1.0, 2.0), (3.0, 3.0)],
                },
            )],
            vec![],
            0.0,
        )
        .unwrap();
        assert!((f.eval(0.5) - 1.0).abs() < 1e-15);
        assert!((f.eval(2.0) - 2.5).abs() < 1e-15);
        assert!((f.eval(10.0) - 3.0).abs() < 1e-15);
        // by hand: int_0^2 = (0..1: t*2 -> 1) + (1..2: 2 + 0.5(t-1) -> 2.25) = 3.25
        assert!((f.primitive(2.0) - 3.25).abs() < 1e-12);
        let d = f.formal_derivative().unwrap();
        assert_eq!(d.eval(0.5), 2.0);
        assert_eq!(d.eval(2.0), 0.5);
        assert_eq!(d.eval(5.0), 0.0);
        assert!((d.atom_mass(1.0) - (0.5 - 2.0)).abs() < 1e-15);
    }

    #[test]
    fn offset_rides_on_eval_and_primitive() {
        let f = BVFunctional::constant(3.0);
        assert_eq!(f.eval(0.0), 3.0);
        assert_eq!(f.eval(9.0), 3.0);
        assert!((f.primitive(2.0) - 6.0).abs() < 1e-15);
    }
}
