use std::cmp::Ordering;

use rayon::prelude::*;

use super::{count_knots, prune, BasisFunction, Direction, Factor, MarsModel, MarsOptions};
use crate::error::{Error, Result};
use crate::tobit::DesignMatrix;

/// A new column is usable when its component orthogonal to the current
/// basis keeps at least this share of its squared norm.
const DEGENERATE_TOL: f64 = 1e-12;
/// Candidates whose RSS reductions differ by less than this share of the
/// total sum of squares count as tied.
const TIE_TOL: f64 = 1e-12;
/// Growth stops once RSS falls below this share of the total sum of squares.
const EXACT_FIT_TOL: f64 = 1e-20;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Take {
    Linear,
    Both,
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    reduction: f64,
    var: usize,
    /// `-inf` for linear terms so they win ties against hinges.
    knot: f64,
    parent: usize,
    take: Take,
}

impl Candidate {
    fn beats(&self, other: &Candidate, tol: f64) -> bool {
        if self.reduction > other.reduction + tol {
            return true;
        }
        if self.reduction < other.reduction - tol {
            return false;
        }
        let key = |c: &Candidate| (c.var, c.knot, c.parent);
        let (a, b) = (key(self), key(other));
        match a.0.cmp(&b.0) {
            Ordering::Equal => match a.1.partial_cmp(&b.1) {
                Some(Ordering::Equal) | None => a.2 < b.2,
                Some(o) => o == Ordering::Less,
            },
            o => o == Ordering::Less,
        }
    }
}

fn pick(best: &mut Option<Candidate>, c: Candidate, tol: f64) {
    if !(c.reduction.is_finite() && c.reduction > 0.0) {
        return;
    }
    if best.is_none_or(|b| c.beats(&b, tol)) {
        *best = Some(c);
    }
}

/// Running sums over a set of rows, centred at `c` for accuracy.
#[derive(Clone)]
struct Sums {
    a0: f64,
    a1: f64,
    a2: f64,
    r0: f64,
    r1: f64,
    q0: Vec<f64>,
    q1: Vec<f64>,
}

impl Sums {
    fn new(k: usize) -> Self {
        Self {
            a0: 0.0,
            a1: 0.0,
            a2: 0.0,
            r0: 0.0,
            r1: 0.0,
            q0: vec![0.0; k],
            q1: vec![0.0; k],
        }
    }

    fn add(&mut self, b: f64, xc: f64, r: f64, q: &[Vec<f64>], i: usize) {
        let bb = b * b;
        self.a0 += bb;
        self.a1 += bb * xc;
        self.a2 += bb * xc * xc;
        self.r0 += r * b;
        self.r1 += r * b * xc;
        for (k, qk) in q.iter().enumerate() {
            let qb = qk[i] * b;
            self.q0[k] += qb;
            self.q1[k] += qb * xc;
        }
    }
}

struct State<'a> {
    x: &'a DesignMatrix,
    order: Vec<Vec<usize>>,
    basis: Vec<BasisFunction>,
    columns: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    r: Vec<f64>,
    minspan: usize,
    endspan: usize,
}

impl State<'_> {
    fn value(&self, i: usize, var: usize) -> f64 {
        self.x.matrix()[(i, var)]
    }

    /// Best candidate built on `parent` and `var`.
    fn search(&self, parent: usize, var: usize, single_only: bool, tol: f64) -> Option<Candidate> {
        let b = &self.columns[parent];
        let k = self.q.len();
        let mut best = None;

        // Linear term parent * x.
        {
            let (mut ww, mut rw) = (0.0, 0.0);
            let mut qw = vec![0.0; k];
            for (i, &bi) in b.iter().enumerate() {
                if bi == 0.0 {
                    continue;
                }
                let w = bi * self.value(i, var);
                ww += w * w;
                rw += self.r[i] * w;
                for (acc, qk) in qw.iter_mut().zip(&self.q) {
                    *acc += qk[i] * w;
                }
            }
            let g = ww - qw.iter().map(|v| v * v).sum::<f64>();
            if ww > 0.0 && g > DEGENERATE_TOL * ww {
                let c = Candidate {
                    reduction: rw * rw / g,
                    var,
                    knot: f64::NEG_INFINITY,
                    parent,
                    take: Take::Linear,
                };
                pick(&mut best, c, tol);
            }
        }

        let rows: Vec<usize> = self.order[var].iter().copied().filter(|&i| b[i] != 0.0).collect();
        if rows.len() < 2 {
            return best;
        }
        // Knots keep at least `endspan` rows on each side.
        let sorted: Vec<f64> = rows.iter().map(|&i| self.value(i, var)).collect();
        if sorted.len() < 2 * self.endspan {
            return best;
        }
        let lo = sorted[self.endspan - 1];
        let hi = sorted[sorted.len() - self.endspan];
        let mut distinct = sorted.clone();
        distinct.dedup();
        let knots: Vec<f64> = distinct
            .iter()
            .step_by(self.minspan)
            .copied()
            .filter(|&v| v >= lo && v < hi)
            .collect();
        if knots.is_empty() {
            return best;
        }
        let centre = rows.iter().map(|&i| self.value(i, var)).sum::<f64>() / rows.len() as f64;

        // Sums over rows with x <= t (prefix) and x > t (suffix) at each knot.
        let mut prefix = Vec::with_capacity(knots.len());
        let mut acc = Sums::new(k);
        let mut pos = 0;
        for &t in &knots {
            while pos < rows.len() && self.value(rows[pos], var) <= t {
                let i = rows[pos];
                acc.add(b[i], self.value(i, var) - centre, self.r[i], &self.q, i);
                pos += 1;
            }
            prefix.push(acc.clone());
        }
        let mut suffix = vec![Sums::new(0); knots.len()];
        let mut acc = Sums::new(k);
        let mut pos = rows.len();
        for (slot, &t) in knots.iter().enumerate().rev() {
            while pos > 0 && self.value(rows[pos - 1], var) > t {
                let i = rows[pos - 1];
                acc.add(b[i], self.value(i, var) - centre, self.r[i], &self.q, i);
                pos -= 1;
            }
            suffix[slot] = acc.clone();
        }

        for (slot, &t) in knots.iter().enumerate() {
            let (p, s) = (&prefix[slot], &suffix[slot]);
            let tc = t - centre;
            let uu = s.a2 - 2.0 * tc * s.a1 + tc * tc * s.a0;
            let vv = p.a2 - 2.0 * tc * p.a1 + tc * tc * p.a0;
            let ru = s.r1 - tc * s.r0;
            let rv = tc * p.r0 - p.r1;
            let (mut g11, mut g22, mut g12) = (uu, vv, 0.0);
            for j in 0..k {
                let qu = s.q1[j] - tc * s.q0[j];
                let qv = tc * p.q0[j] - p.q1[j];
                g11 -= qu * qu;
                g22 -= qv * qv;
                g12 -= qu * qv;
            }
            let ok_u = uu > 0.0 && g11 > DEGENERATE_TOL * uu;
            let ok_v = vv > 0.0 && g22 > DEGENERATE_TOL * vv;
            let red_u = if ok_u { ru * ru / g11 } else { 0.0 };
            let red_v = if ok_v { rv * rv / g22 } else { 0.0 };
            let det = g11 * g22 - g12 * g12;
            let (reduction, take) = if ok_u && ok_v && !single_only && det > DEGENERATE_TOL * g11 * g22 {
                ((g22 * ru * ru - 2.0 * g12 * ru * rv + g11 * rv * rv) / det, Take::Both)
            } else if red_u >= red_v {
                (red_u, Take::Plus)
            } else {
                (red_v, Take::Minus)
            };
            let c = Candidate {
                reduction,
                var,
                knot: t,
                parent,
                take,
            };
            pick(&mut best, c, tol);
        }
        best
    }

    /// Orthogonalizes `col` against the current basis and, if it is not
    /// degenerate, appends it.
    fn push(&mut self, function: BasisFunction, col: Vec<f64>) -> bool {
        let norm0: f64 = col.iter().map(|v| v * v).sum();
        let mut v = col.clone();
        for _ in 0..2 {
            for q in &self.q {
                let c: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(vi, qi)| *vi -= c * qi);
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum();
        if !(norm0 > 0.0 && norm > DEGENERATE_TOL * norm0) {
            return false;
        }
        let s = norm.sqrt();
        v.iter_mut().for_each(|x| *x /= s);
        let c: f64 = v.iter().zip(&self.r).map(|(a, b)| a * b).sum();
        self.r.iter_mut().zip(&v).for_each(|(ri, qi)| *ri -= c * qi);
        self.q.push(v);
        self.basis.push(function);
        self.columns.push(col);
        true
    }

    fn child(&self, parent: usize, factor: Factor) -> (BasisFunction, Vec<f64>) {
        let mut f = self.basis[parent].clone();
        f.factors.push(factor);
        let col = self.columns[parent]
            .iter()
            .enumerate()
            .map(|(i, &b)| b * factor.apply(self.value(i, factor.var())))
            .collect();
        (f, col)
    }
}

/// Friedman's end-span rule `3 - log2(0.05 / p)`, rounded up.
fn default_endspan(p: usize) -> usize {
    (3.0 - (0.05 / p as f64).log2()).ceil() as usize
}

pub(crate) fn check_inputs(x: &DesignMatrix, y: &[f64]) -> Result<()> {
    if y.len() != x.nrows() {
        return Err(Error::Shape {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateData("response has non-finite values".into()));
    }
    Ok(())
}

/// Greedy forward growth. Each step adds the parent/variable/knot
/// combination (a mirrored hinge pair, or a linear term) that most reduces
/// the residual sum of squares.
pub fn forward_pass(x: &DesignMatrix, y: &[f64], options: &MarsOptions) -> Result<MarsModel> {
    check_inputs(x, y)?;
    let n = x.nrows();
    if options.max_terms == 0 {
        return Err(Error::Config("max_terms must be at least 1".into()));
    }
    if n <= options.max_terms {
        return Err(Error::TooFewObservations {
            needed: options.max_terms + 1,
            have: n,
        });
    }
    if !(options.penalty_d.is_finite() && options.penalty_d >= 0.0) {
        return Err(Error::Config(format!("penalty_d must be >= 0, got {}", options.penalty_d)));
    }
    if options.minspan == Some(0) || options.endspan == Some(0) {
        return Err(Error::Config("minspan and endspan must be at least 1".into()));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::DegenerateResponse("response is constant".into()));
    }

    let p = x.ncols();
    let order = (0..p)
        .map(|j| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| x.matrix()[(a, j)].total_cmp(&x.matrix()[(b, j)]).then(a.cmp(&b)));
            idx
        })
        .collect();
    let mean = y.iter().sum::<f64>() / n as f64;
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    let mut state = State {
        x,
        order,
        basis: vec![BasisFunction::intercept()],
        columns: vec![vec![1.0; n]],
        q: vec![vec![inv_sqrt_n; n]],
        r: y.iter().map(|v| v - mean).collect(),
        minspan: options.minspan.unwrap_or(n.div_ceil(50)),
        endspan: options.endspan.unwrap_or_else(|| default_endspan(p)),
    };
    let tss: f64 = state.r.iter().map(|v| v * v).sum();
    let mut rss = tss;
    let mut path = vec![rss];
    let tol = TIE_TOL * tss;

    while state.basis.len() < options.max_terms && rss > EXACT_FIT_TOL * tss {
        let single_only = options.max_terms - state.basis.len() == 1;
        let jobs: Vec<(usize, usize)> = (0..state.basis.len())
            .filter(|&m| state.basis[m].degree() < options.max_degree)
            .flat_map(|m| (0..p).map(move |v| (m, v)))
            .filter(|&(m, v)| options.allow_self_product || !state.basis[m].uses_var(v))
            .collect();
        let found: Vec<Option<Candidate>> = jobs
            .par_iter()
            .map(|&(m, v)| state.search(m, v, single_only, tol))
            .collect();
        let mut best = None;
        for c in found.into_iter().flatten() {
            pick(&mut best, c, tol);
        }
        let Some(best) = best else { break };
        if best.reduction < options.forward_threshold * tss {
            break;
        }
        let hinge = |direction| Factor::Hinge {
            var: best.var,
            direction,
            knot: best.knot,
        };
        let factors = match best.take {
            Take::Linear => vec![Factor::Linear { var: best.var }],
            Take::Both => vec![hinge(Direction::Plus), hinge(Direction::Minus)],
            Take::Plus => vec![hinge(Direction::Plus)],
            Take::Minus => vec![hinge(Direction::Minus)],
        };
        let mut added = false;
        for f in factors {
            if state.basis.len() >= options.max_terms {
                break;
            }
            let (function, col) = state.child(best.parent, f);
            added |= state.push(function, col);
        }
        if !added {
            break;
        }
        rss = state.r.iter().map(|v| v * v).sum();
        path.push(rss);
    }

    let mut model = prune::refit(
        x.names().to_vec(),
        state.basis,
        &state.columns.iter().map(Vec::as_slice).collect::<Vec<_>>(),
        y,
        options,
    )?;
    model.forward_rss = path;
    debug_assert_eq!(model.n_knots(), count_knots(&model.basis));
    Ok(model)
}
