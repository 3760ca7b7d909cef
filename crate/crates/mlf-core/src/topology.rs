//! Heegaard-diagram bookkeeping for the fiber of a Lefschetz fibration on
//! the cotangent bundle of a closed 3-manifold, and the double-of-fiber check.

use std::fmt::Write as _;

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fibration::{project_to_fiber, FibrationMap, LyapunovKind};
use crate::geometry::{GFn, PhasePoint, PhaseScalar};
use crate::sampling::{rng, unit_vector};

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("curves {0} and {1} are tangent at ({2:.6}, {3:.6}); reposition them")]
    Tangency(String, String, f64, f64),
    #[error("invalid curve {0}: {1}")]
    InvalidCurve(String, String),
    #[error("{0}")]
    Inconsistent(String),
    #[error("double check: {0}")]
    Double(String),
}

/// A closed straight curve of slope `(p, q)` on the square torus piece
/// `piece` of the surface, through `(offset, offset)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCurve {
    pub name: String,
    pub piece: usize,
    pub slope: (i32, i32),
    pub offset: f64,
}

impl SurfaceCurve {
    /// Vertex list in `[0,1]²` split into segments at the square's sides.
    pub fn segments(&self) -> Vec<[(f64, f64); 2]> {
        let (p, q) = (self.slope.0 as f64, self.slope.1 as f64);
        let mut out = Vec::new();
        let mut t = 0.0;
        let start = (self.offset, self.offset);
        // crossing parameters of the lifted line with the integer grid
        let mut cuts: Vec<f64> = Vec::new();
        for (d, s) in [(p, start.0), (q, start.1)] {
            if d != 0.0 {
                let k = d.abs() as i64;
                for m in 1..=k {
                    let target = if d > 0.0 { s.floor() + m as f64 } else { s.ceil() - m as f64 };
                    cuts.push((target - s) / d);
                }
            }
        }
        cuts.push(1.0);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        for &c in &cuts {
            if c <= t {
                continue;
            }
            let a = (start.0 + p * t, start.1 + q * t);
            let b = (start.0 + p * c, start.1 + q * c);
            let mid = (0.5 * (a.0 + b.0), 0.5 * (a.1 + b.1));
            let sh = (mid.0.floor(), mid.1.floor());
            out.push([(a.0 - sh.0, a.1 - sh.1), (b.0 - sh.0, b.1 - sh.1)]);
            t = c;
        }
        out
    }

    /// Unit normal (conormal direction) of the curve.
    pub fn conormal(&self) -> (f64, f64) {
        let (p, q) = (self.slope.0 as f64, self.slope.1 as f64);
        let l = p.hypot(q);
        (-q / l, p / l)
    }

    fn validate(&self) -> Result<(), TopologyError> {
        let (p, q) = self.slope;
        if p == 0 && q == 0 {
            return Err(TopologyError::InvalidCurve(self.name.clone(), "zero slope".into()));
        }
        if gcd(p.unsigned_abs(), q.unsigned_abs()) != 1 {
            return Err(TopologyError::InvalidCurve(self.name.clone(), "slope is not primitive".into()));
        }
        if !(0.0..1.0).contains(&self.offset) {
            return Err(TopologyError::InvalidCurve(self.name.clone(), "offset outside [0,1)".into()));
        }
        Ok(())
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// `α` and `β` curve systems on a genus-`g` surface built from `g` square
/// torus pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceCurveSystem {
    pub genus: usize,
    pub alpha: Vec<SurfaceCurve>,
    pub beta: Vec<SurfaceCurve>,
}

impl SurfaceCurveSystem {
    /// `α_j` horizontal and `β_j` vertical on piece `j`.
    pub fn standard(genus: usize) -> Self {
        let mk = |n: &str, j: usize, s: (i32, i32), o: f64| SurfaceCurve { name: format!("{n}{}", j + 1), piece: j, slope: s, offset: o };
        Self {
            genus,
            alpha: (0..genus).map(|j| mk("alpha", j, (1, 0), 0.3)).collect(),
            beta: (0..genus).map(|j| mk("beta", j, (0, 1), 0.6)).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.alpha.len() != self.genus || self.beta.len() != self.genus {
            return Err(TopologyError::Inconsistent(format!("genus {} needs {} curves of each kind", self.genus, self.genus)));
        }
        for c in self.alpha.iter().chain(&self.beta) {
            c.validate()?;
            if c.piece >= self.genus {
                return Err(TopologyError::InvalidCurve(c.name.clone(), format!("no piece {}", c.piece)));
            }
        }
        Ok(())
    }
}

/// Signed crossing data of two curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Crossings {
    pub count: usize,
    pub algebraic: i64,
}

fn cross(a: (f64, f64), b: (f64, f64)) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

/// Crossings of two closed curves by segment intersection on the square.
pub fn intersect_pair(a: &SurfaceCurve, b: &SurfaceCurve) -> Result<(Crossings, Option<String>), TopologyError> {
    if a.piece != b.piece {
        return Ok((Crossings { count: 0, algebraic: 0 }, None));
    }
    if a.slope == b.slope || a.slope == (-b.slope.0, -b.slope.1) {
        if (a.offset - b.offset).abs() < 1e-12 {
            return Err(TopologyError::Tangency(a.name.clone(), b.name.clone(), a.offset, a.offset));
        }
        return Ok((Crossings { count: 0, algebraic: 0 }, Some(format!("{} and {} are parallel", a.name, b.name))));
    }
    let tol = 1e-12;
    let mut count = 0;
    let mut algebraic = 0i64;
    for s in a.segments() {
        for t in b.segments() {
            let d1 = (s[1].0 - s[0].0, s[1].1 - s[0].1);
            let d2 = (t[1].0 - t[0].0, t[1].1 - t[0].1);
            let den = cross(d1, d2);
            let w = (t[0].0 - s[0].0, t[0].1 - s[0].1);
            if den.abs() < tol {
                continue;
            }
            let u = cross(w, d2) / den;
            let v = cross(w, d1) / den;
            if u < -tol || u > 1.0 + tol || v < -tol || v > 1.0 + tol {
                continue;
            }
            let near_end = |x: f64| x.abs() < 1e-9 || (x - 1.0).abs() < 1e-9;
            let pt = (s[0].0 + u * d1.0, s[0].1 + u * d1.1);
            if near_end(u) || near_end(v) {
                return Err(TopologyError::Tangency(a.name.clone(), b.name.clone(), pt.0, pt.1));
            }
            count += 1;
            algebraic += if den > 0.0 { 1 } else { -1 };
        }
    }
    Ok((Crossings { count, algebraic }, None))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionMatrix {
    /// `[i][j]` for `α_i ∩ β_j`.
    pub entries: Vec<Vec<Crossings>>,
    pub warnings: Vec<String>,
}

/// `|α_i ∩ β_j|` with signs; checks the `α`'s and the `β`'s are disjoint.
pub fn intersect_curves(sys: &SurfaceCurveSystem) -> Result<IntersectionMatrix, TopologyError> {
    sys.validate()?;
    let mut warnings = Vec::new();
    for fam in [&sys.alpha, &sys.beta] {
        for i in 0..fam.len() {
            for j in i + 1..fam.len() {
                let (c, w) = intersect_pair(&fam[i], &fam[j])?;
                if c.count > 0 {
                    return Err(TopologyError::Inconsistent(format!("{} meets {}", fam[i].name, fam[j].name)));
                }
                warnings.extend(w);
            }
        }
    }
    let mut entries = Vec::new();
    for a in &sys.alpha {
        let mut row = Vec::new();
        for b in &sys.beta {
            let (c, w) = intersect_pair(a, b)?;
            warnings.extend(w);
            row.push(c);
        }
        entries.push(row);
    }
    Ok(IntersectionMatrix { entries, warnings })
}

/// One attaching curve `SN*c` component: the curve with the conormal of
/// the given side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Handle {
    pub label: String,
    pub curve: SurfaceCurve,
    pub side: i8,
    /// Framing relative to the conormal framing.
    pub framing: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VanishingCycleRecord {
    /// Morse index of the critical point.
    pub index: usize,
    pub label: String,
    /// Piece of `T*Q` in the cycle: a conormal `N*c` or the zero section.
    pub conormal: String,
    pub handles: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandleDiagram {
    /// `DT*Q` with `Q` of this genus.
    pub genus: usize,
    pub handles: Vec<Handle>,
    pub records: Vec<VanishingCycleRecord>,
    pub intersections: IntersectionMatrix,
}

/// Two handles per curve, one record per curve and the two zero-section
/// records of the extremal points.
pub fn build_handle_diagram(sys: &SurfaceCurveSystem) -> Result<HandleDiagram, TopologyError> {
    let intersections = intersect_curves(sys)?;
    let mut handles = Vec::new();
    let mut records = vec![VanishingCycleRecord { index: 0, label: "min".into(), conormal: "zero section".into(), handles: vec![] }];
    for (index, fam) in [(1, &sys.alpha), (2, &sys.beta)] {
        for c in fam.iter() {
            let mut hs = Vec::new();
            for side in [1i8, -1] {
                hs.push(handles.len());
                let s = if side > 0 { "+" } else { "-" };
                handles.push(Handle { label: format!("SN*{}{s}", c.name), curve: c.clone(), side, framing: 0 });
            }
            records.push(VanishingCycleRecord { index, label: c.name.clone(), conormal: format!("N*{}", c.name), handles: hs });
        }
    }
    records.push(VanishingCycleRecord { index: 3, label: "max".into(), conormal: "zero section".into(), handles: vec![] });
    Ok(HandleDiagram { genus: sys.genus, handles, records, intersections })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EulerReport {
    pub chi_q: i64,
    pub handles: i64,
    pub chi_f: i64,
    pub crit_count: i64,
    /// `χ(F) − #crit`, which must equal `χ(T*M) = 0`.
    pub chi_tm: i64,
    pub records_partition_handles: bool,
    pub pass: bool,
}

pub fn euler_check(d: &HandleDiagram) -> Result<EulerReport, TopologyError> {
    let g = d.genus as i64;
    let chi_q = 2 - 2 * g;
    let handles = d.handles.len() as i64;
    let chi_f = chi_q + handles;
    let crit_count = d.records.len() as i64;
    let mut seen = vec![0usize; d.handles.len()];
    for r in &d.records {
        for &h in &r.handles {
            seen[h] += 1;
        }
    }
    let part = seen.iter().all(|&c| c == 1) && d.records.iter().all(|r| r.handles.len() == if r.conormal.starts_with("N*") { 2 } else { 0 });
    let rep = EulerReport { chi_q, handles, chi_f, crit_count, chi_tm: chi_f - crit_count, records_partition_handles: part, pass: handles == 4 * g && chi_f == 2 + 2 * g && chi_f - crit_count == 0 && part };
    if !rep.pass {
        return Err(TopologyError::Inconsistent(format!("{rep:?}")));
    }
    Ok(rep)
}

/// Smallest distance in `ST*Q` between samples of different attaching
/// curves, with base distance on the torus piece and the conormal as the
/// fiber coordinate.
pub fn attaching_curve_separation(d: &HandleDiagram, per_curve: usize) -> f64 {
    let samples: Vec<(usize, usize, f64, f64, (f64, f64))> = d
        .handles
        .iter()
        .enumerate()
        .flat_map(|(i, h)| {
            let (p, q) = (h.curve.slope.0 as f64, h.curve.slope.1 as f64);
            let n = h.curve.conormal();
            let s = h.side as f64;
            (0..per_curve).map(move |k| {
                let t = k as f64 / per_curve as f64;
                (i, h.curve.piece, (h.curve.offset + p * t).rem_euclid(1.0), (h.curve.offset + q * t).rem_euclid(1.0), (s * n.0, s * n.1))
            })
        })
        .collect();
    let wrap = |x: f64| {
        let d = (x).rem_euclid(1.0);
        d.min(1.0 - d)
    };
    let mut best = f64::INFINITY;
    for a in &samples {
        for b in &samples {
            if a.0 >= b.0 || a.1 != b.1 {
                continue;
            }
            let dq = wrap(a.2 - b.2).hypot(wrap(a.3 - b.3));
            let dn = (a.4 .0 - b.4 .0).hypot(a.4 .1 - b.4 .1);
            best = best.min(dq.hypot(dn));
        }
    }
    best
}

/// Structured text of the diagram: one line per handle with its vertex list.
pub fn diagram_text(d: &HandleDiagram) -> String {
    let mut s = format!("genus {}\nhandles {}\n", d.genus, d.handles.len());
    for h in &d.handles {
        let _ = write!(s, "handle {} piece {} side {} framing {} vertices", h.label, h.curve.piece, h.side, h.framing);
        for seg in h.curve.segments() {
            let _ = write!(s, " ({:.6},{:.6})-({:.6},{:.6})", seg[0].0, seg[0].1, seg[1].0, seg[1].1);
        }
        s.push('\n');
    }
    for r in &d.records {
        let _ = writeln!(s, "record {} index {} piece {} handles {:?}", r.label, r.index, r.conormal, r.handles);
    }
    s
}

/// Square pieces side by side with the `α` (red) and `β` (blue) curves.
pub fn diagram_svg(sys: &SurfaceCurveSystem) -> String {
    let size = 200.0;
    let pad = 20.0;
    let w = pad + sys.genus.max(1) as f64 * (size + pad);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{:.0}\" viewBox=\"0 0 {w:.0} {:.0}\">\n",
        size + 2.0 * pad,
        size + 2.0 * pad
    );
    for j in 0..sys.genus {
        let x0 = pad + j as f64 * (size + pad);
        let _ = writeln!(s, "<rect x=\"{x0:.1}\" y=\"{pad:.1}\" width=\"{size:.1}\" height=\"{size:.1}\" fill=\"none\" stroke=\"black\"/>");
    }
    for (fam, color) in [(&sys.alpha, "red"), (&sys.beta, "blue")] {
        for c in fam.iter() {
            let x0 = pad + c.piece as f64 * (size + pad);
            for seg in c.segments() {
                let _ = writeln!(
                    s,
                    "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"{color}\" stroke-width=\"2\"/>",
                    x0 + seg[0].0 * size,
                    pad + (1.0 - seg[0].1) * size,
                    x0 + seg[1].0 * size,
                    pad + (1.0 - seg[1].1) * size
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleReport {
    pub u: f64,
    pub samples: usize,
    /// Whether every sample of `F_u` lies in `{r ≥ δ}`.
    pub homogeneous: bool,
    /// Smallest `|p|` over samples.
    pub min_radius: f64,
    pub max_g_ratio: f64,
    /// Extremes of `f_∞` at the projections.
    pub f_inf_min: f64,
    pub f_inf_max: f64,
    pub single_signed: bool,
    /// Largest number of radial roots of `f = u` on one ray.
    pub max_roots_per_ray: usize,
}

/// Samples `F_u` by projection, pushes the samples radially to the sphere
/// bundle and checks `g = 0`, the sign of `f_∞` and uniqueness of the radial
/// root of `f = u`.
pub fn double_check(fm: &FibrationMap, u: f64, samples: usize, seed: u64) -> Result<DoubleReport, TopologyError> {
    let LyapunovKind::Assembled(al) = fm.kind else {
        return Err(TopologyError::Double("needs the assembled Lyapunov function".into()));
    };
    let ms = &fm.ms;
    let top = ms.critical_points.iter().map(|c| c.value.abs()).fold(0.0, f64::max);
    if !(u.abs() > top) {
        return Err(TopologyError::Double(format!("|u| = {} does not exceed max |phi| = {top}", u.abs())));
    }
    let n = ms.dim();
    let nb = ms.base_sample_dim();
    let mut g = rng(seed, 131);
    let w = Complex::new(u, 0.0);
    let mut pts = Vec::new();
    let mut tries = 0;
    while pts.len() < samples && tries < 20 * samples {
        tries += 1;
        let cube: Vec<f64> = (0..nb).map(|_| rand::Rng::gen::<f64>(&mut g)).collect();
        let (chart, q) = ms.sample_base(&cube);
        let dir = unit_vector(&mut g, n);
        let r = rand::Rng::gen_range(&mut g, 0.5..4.0) * u.abs() / al.cutoff.c;
        let p = ms.covector_of_length(chart, &q, &dir, r);
        if let Some(y) = project_to_fiber(fm, &PhasePoint::in_chart(q, p, chart), w) {
            pts.push(y);
        }
    }
    if pts.is_empty() {
        return Err(TopologyError::Double("no fiber samples".into()));
    }
    let mut rep = DoubleReport {
        u,
        samples: pts.len(),
        homogeneous: true,
        min_radius: f64::INFINITY,
        max_g_ratio: 0.0,
        f_inf_min: f64::INFINITY,
        f_inf_max: f64::NEG_INFINITY,
        single_signed: true,
        max_roots_per_ray: 0,
    };
    for y in &pts {
        let r = ms.manifold.covector_norm2(y.chart, &y.q, &y.p).sqrt();
        rep.min_radius = rep.min_radius.min(r);
        rep.homogeneous &= r >= al.cutoff.delta;
        let ph: Vec<f64> = y.p.iter().map(|v| v / r).collect();
        let gv = GFn.eval(ms, y.chart, &y.q, &ph);
        rep.max_g_ratio = rep.max_g_ratio.max(gv.abs());
        let fi = al.slope.eval(ms, y.chart, &y.q, &ph);
        rep.f_inf_min = rep.f_inf_min.min(fi);
        rep.f_inf_max = rep.f_inf_max.max(fi);
        // sign changes of r ↦ f_r − u along the ray
        let r_hi = 4.0 * r;
        let steps = 4000;
        let mut roots = 0;
        let mut prev = fm.kind.eval(ms, y.chart, &y.q, &vec![0.0; n]) - u;
        for k in 1..=steps {
            let s = r_hi * k as f64 / steps as f64;
            let p: Vec<f64> = ph.iter().map(|v| v * s).collect();
            let cur = fm.kind.eval(ms, y.chart, &y.q, &p) - u;
            if cur == 0.0 || cur.signum() != prev.signum() {
                roots += 1;
            }
            prev = cur;
        }
        rep.max_roots_per_ray = rep.max_roots_per_ray.max(roots);
    }
    rep.single_signed = rep.f_inf_min * u.signum() > 0.0 && rep.f_inf_max * u.signum() > 0.0;
    if rep.max_roots_per_ray > 1 {
        return Err(TopologyError::Double(format!("{} radial roots on one ray", rep.max_roots_per_ray)));
    }
    Ok(rep)
}
