//! Chord-length parameterized cubic splines, natural or periodic.

use thiserror::Error;

use crate::model::{Point, Vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplineError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("points {0} and {1} coincide")]
    DuplicatePoint(usize, usize),
    #[error("non-finite input point {0}")]
    NonFinite(usize),
}

/// Cubic `a + b t + c t^2 + d t^3` on one segment, `t` local to the knot.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Cubic {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

impl Cubic {
    fn eval(&self, t: f64) -> f64 {
        self.a + t * (self.b + t * (self.c + t * self.d))
    }
    fn d1(&self, t: f64) -> f64 {
        self.b + t * (2.0 * self.c + 3.0 * t * self.d)
    }
    fn d2(&self, t: f64) -> f64 {
        2.0 * self.c + 6.0 * t * self.d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spline2D {
    /// Cumulative chord length at every knot; for closed splines the last
    /// knot is the return to the first point.
    pub knots: Vec<f64>,
    cx: Vec<Cubic>,
    cy: Vec<Cubic>,
    pub closed: bool,
    /// Arc length table: (parameter, arc) pairs on a dense grid.
    arc_table: Vec<(f64, f64)>,
}

/// Solves a tridiagonal system in place (Thomas algorithm). `a` is the
/// sub-diagonal (a[0] unused), `c` the super-diagonal (c[n-1] unused).
pub fn solve_tridiagonal(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Vec<f64> {
    let n = b.len();
    if n == 0 {
        return Vec::new();
    }
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    dp[0] = d[0] / b[0];
    for i in 1..n {
        let m = b[i] - a[i] * cp[i - 1];
        cp[i] = if i + 1 < n { c[i] / m } else { 0.0 };
        dp[i] = (d[i] - a[i] * dp[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x
}

/// Cyclic tridiagonal solve via Sherman-Morrison. `a[0]` couples row 0 to
/// the last unknown and `c[n-1]` couples the last row to the first.
pub fn solve_cyclic_tridiagonal(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Vec<f64> {
    let n = b.len();
    if n == 1 {
        return vec![d[0] / (b[0] + a[0] + c[0])];
    }
    if n == 2 {
        // direct 2x2 with both couplings folded in
        let (m00, m01) = (b[0], c[0] + a[0]);
        let (m10, m11) = (a[1] + c[1], b[1]);
        let det = m00 * m11 - m01 * m10;
        return vec![(d[0] * m11 - m01 * d[1]) / det, (m00 * d[1] - m10 * d[0]) / det];
    }
    let alpha = c[n - 1];
    let beta = a[0];
    let gamma = -b[0];
    let mut bb = b.to_vec();
    bb[0] -= gamma;
    bb[n - 1] -= alpha * beta / gamma;
    let x = solve_tridiagonal(a, &bb, c, d);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = solve_tridiagonal(a, &bb, c, &u);
    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect()
}

/// Second derivatives of a natural spline through `(s, y)`.
fn natural_moments(s: &[f64], y: &[f64]) -> Vec<f64> {
    let n = s.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    let k = n - 2;
    let (mut a, mut b, mut c, mut d) = (vec![0.0; k], vec![0.0; k], vec![0.0; k], vec![0.0; k]);
    for j in 0..k {
        let i = j + 1;
        let h0 = s[i] - s[i - 1];
        let h1 = s[i + 1] - s[i];
        a[j] = h0;
        b[j] = 2.0 * (h0 + h1);
        c[j] = h1;
        d[j] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
    }
    let inner = solve_tridiagonal(&a, &b, &c, &d);
    m[1..n - 1].copy_from_slice(&inner);
    m
}

/// Second derivatives of a periodic spline. `s` has one more entry than
/// `y`: the closing knot.
fn periodic_moments(s: &[f64], y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let h = |i: usize| s[i + 1] - s[i];
    let (mut a, mut b, mut c, mut d) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 0..n {
        let hp = h((i + n - 1) % n);
        let hn = h(i);
        let yp = y[(i + n - 1) % n];
        let yn = y[(i + 1) % n];
        a[i] = hp;
        b[i] = 2.0 * (hp + hn);
        c[i] = hn;
        d[i] = 6.0 * ((yn - y[i]) / hn - (y[i] - yp) / hp);
    }
    solve_cyclic_tridiagonal(&a, &b, &c, &d)
}

fn cubics(s: &[f64], y: &[f64], m: &[f64]) -> Vec<Cubic> {
    (0..s.len() - 1)
        .map(|i| {
            let h = s[i + 1] - s[i];
            let (y0, y1) = (y[i], y[(i + 1) % y.len()]);
            let (m0, m1) = (m[i], m[(i + 1) % m.len()]);
            Cubic {
                a: y0,
                b: (y1 - y0) / h - h * (2.0 * m0 + m1) / 6.0,
                c: 0.5 * m0,
                d: (m1 - m0) / (6.0 * h),
            }
        })
        .collect()
}

const ARC_SUBSTEPS: usize = 32;

impl Spline2D {
    /// Interpolating spline. Open splines need at least 2 points (2 gives a
    /// straight segment); closed splines need 3.
    pub fn fit(points: &[Point], closed: bool) -> Result<Self, SplineError> {
        let needed = if closed { 3 } else { 2 };
        if points.len() < needed {
            return Err(SplineError::TooFewPoints {
                needed,
                got: points.len(),
            });
        }
        for (i, p) in points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(SplineError::NonFinite(i));
            }
        }
        let n = points.len();
        let nseg = if closed { n } else { n - 1 };
        let mut knots = Vec::with_capacity(nseg + 1);
        knots.push(0.0);
        for i in 0..nseg {
            let h = (points[(i + 1) % n] - points[i]).norm();
            if h <= 1e-9 {
                return Err(SplineError::DuplicatePoint(i, (i + 1) % n));
            }
            knots.push(knots[i] + h);
        }
        let xs: Vec<f64> = points.iter().map(|p| p.x).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.y).collect();
        let (mx, my) = if closed {
            (periodic_moments(&knots, &xs), periodic_moments(&knots, &ys))
        } else {
            (natural_moments(&knots, &xs), natural_moments(&knots, &ys))
        };
        let mut sp = Spline2D {
            cx: cubics(&knots, &xs, &mx),
            cy: cubics(&knots, &ys, &my),
            knots,
            closed,
            arc_table: Vec::new(),
        };
        sp.arc_table = sp.build_arc_table();
        Ok(sp)
    }

    /// Fit requiring the 3-point minimum for both open and closed splines.
    pub fn fit_strict(points: &[Point], closed: bool) -> Result<Self, SplineError> {
        if points.len() < 3 {
            return Err(SplineError::TooFewPoints {
                needed: 3,
                got: points.len(),
            });
        }
        Self::fit(points, closed)
    }

    pub fn param_length(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    pub fn arc_length(&self) -> f64 {
        self.arc_table.last().map_or(0.0, |e| e.1)
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let total = self.param_length();
        let s = if self.closed {
            s.rem_euclid(total)
        } else {
            s.clamp(0.0, total)
        };
        let i = match self.knots.binary_search_by(|k| k.partial_cmp(&s).unwrap()) {
            Ok(i) => i.min(self.cx.len() - 1),
            Err(i) => i.saturating_sub(1).min(self.cx.len() - 1),
        };
        (i, s - self.knots[i])
    }

    pub fn eval(&self, s: f64) -> Point {
        let (i, t) = self.locate(s);
        Point::new(self.cx[i].eval(t), self.cy[i].eval(t))
    }

    pub fn derivative(&self, s: f64) -> Vector {
        let (i, t) = self.locate(s);
        Vector::new(self.cx[i].d1(t), self.cy[i].d1(t))
    }

    pub fn second_derivative(&self, s: f64) -> Vector {
        let (i, t) = self.locate(s);
        Vector::new(self.cx[i].d2(t), self.cy[i].d2(t))
    }

    /// Signed curvature, positive when turning left.
    pub fn curvature(&self, s: f64) -> f64 {
        let d1 = self.derivative(s);
        let d2 = self.second_derivative(s);
        let den = d1.norm().powi(3);
        if den < 1e-12 {
            return 0.0;
        }
        (d1.x * d2.y - d1.y * d2.x) / den
    }

    fn build_arc_table(&self) -> Vec<(f64, f64)> {
        let mut table = Vec::with_capacity(self.cx.len() * ARC_SUBSTEPS + 1);
        table.push((0.0, 0.0));
        let mut arc = 0.0;
        for i in 0..self.cx.len() {
            let h = self.knots[i + 1] - self.knots[i];
            let dt = h / ARC_SUBSTEPS as f64;
            for k in 0..ARC_SUBSTEPS {
                // Simpson on each sub-interval
                let t0 = k as f64 * dt;
                let speed = |t: f64| self.cx[i].d1(t).hypot(self.cy[i].d1(t));
                arc += dt / 6.0 * (speed(t0) + 4.0 * speed(t0 + 0.5 * dt) + speed(t0 + dt));
                table.push((self.knots[i] + t0 + dt, arc));
            }
        }
        table
    }

    /// Parameter at arc length `a` (clamped, or wrapped for closed).
    pub fn param_at_arc(&self, a: f64) -> f64 {
        let total = self.arc_length();
        let a = if self.closed {
            a.rem_euclid(total)
        } else {
            a.clamp(0.0, total)
        };
        let idx = self.arc_table.partition_point(|e| e.1 < a);
        if idx == 0 {
            return 0.0;
        }
        if idx >= self.arc_table.len() {
            return self.param_length();
        }
        let (s0, a0) = self.arc_table[idx - 1];
        let (s1, a1) = self.arc_table[idx];
        if a1 - a0 <= 0.0 {
            return s0;
        }
        s0 + (s1 - s0) * (a - a0) / (a1 - a0)
    }

    /// `n` points at equal arc-length fractions. Open splines include both
    /// ends; closed splines stop one step short of the start.
    pub fn sample_uniform(&self, n: usize) -> Vec<Point> {
        if n == 0 {
            return Vec::new();
        }
        let total = self.arc_length();
        let denom = if self.closed { n as f64 } else { (n.max(2) - 1) as f64 };
        (0..n)
            .map(|i| self.eval(self.param_at_arc(total * i as f64 / denom)))
            .collect()
    }
}
