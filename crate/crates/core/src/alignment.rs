//! Known-map alignment: a 2x2 transform from two correspondences, refined
//! by random hill descent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::model::{ConeColor, Point};

#[derive(Debug, Error, Clone, Copy, PartialEq)]
pub enum AlignmentError {
    #[error("observed pair is collinear with the origin (g = {0})")]
    Degenerate(f64),
    #[error("reference map has no cone of the observed colors")]
    EmptyReference,
    #[error("no observed cones")]
    NoObservations,
}

/// `[[a, b], [c, d]]`, no translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform2x2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Transform2x2 {
    pub const IDENTITY: Self = Self {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
    };

    pub fn rotation(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self { a: c, b: -s, c: s, d: c }
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det.abs() < 1e-12 {
            return None;
        }
        Some(Self {
            a: self.d / det,
            b: -self.b / det,
            c: -self.c / det,
            d: self.a / det,
        })
    }

    fn entries(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    fn from_entries(e: [f64; 4]) -> Self {
        Self {
            a: e[0],
            b: e[1],
            c: e[2],
            d: e[3],
        }
    }
}

pub fn apply(t: &Transform2x2, p: &Point) -> Point {
    Point::new(t.a * p.x + t.b * p.y, t.c * p.x + t.d * p.y)
}

/// Closed-form transform taking `obs[i]` to `reference[i]`.
pub fn estimate_transform(obs: [Point; 2], reference: [Point; 2]) -> Result<Transform2x2, AlignmentError> {
    let (xc, yc) = (obs[0].x, obs[0].y);
    let (xc1, yc1) = (obs[1].x, obs[1].y);
    let (xt, yt) = (reference[0].x, reference[0].y);
    let (xt1, yt1) = (reference[1].x, reference[1].y);
    let g = xc * yc1 - xc1 * yc;
    if g.abs() < 1e-12 {
        return Err(AlignmentError::Degenerate(g));
    }
    Ok(Transform2x2 {
        a: (xt * yc1 - xt1 * yc) / g,
        b: (xc * xt1 - xc1 * xt) / g,
        c: -(yc * yt1 - yc1 * yt) / g,
        d: (xc * yt1 - xc1 * yt) / g,
    })
}

/// Distance from each transformed observation to its nearest same-colored
/// reference cone.
pub fn residuals(t: &Transform2x2, observed: &[(ConeColor, Point)], reference: &[(ConeColor, Point)]) -> Result<Vec<f64>, AlignmentError> {
    if observed.is_empty() {
        return Err(AlignmentError::NoObservations);
    }
    observed
        .iter()
        .map(|(color, p)| {
            let q = apply(t, p);
            reference
                .iter()
                .filter(|(c, _)| c == color)
                .map(|(_, r)| (r - q).norm())
                .min_by(f64::total_cmp)
                .ok_or(AlignmentError::EmptyReference)
        })
        .collect()
}

/// `sum_i 1 / (d_i - d_min + 1)`.
pub fn objective_from_residuals(d: &[f64]) -> f64 {
    let d_min = d.iter().copied().fold(f64::INFINITY, f64::min);
    d.iter().map(|di| 1.0 / (di - d_min + 1.0)).sum()
}

pub fn objective(t: &Transform2x2, observed: &[(ConeColor, Point)], reference: &[(ConeColor, Point)]) -> Result<f64, AlignmentError> {
    Ok(objective_from_residuals(&residuals(t, observed, reference)?))
}

/// Acceptance criterion for refinement steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RefineMode {
    /// Minimize the mean residual.
    #[default]
    Residual,
    /// Minimize the printed objective.
    Objective,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineParams {
    pub iterations: usize,
    pub step_sigma: f64,
    /// Multiplicative decay of the step per iteration.
    pub decay: f64,
    pub mode: RefineMode,
}

impl Default for RefineParams {
    fn default() -> Self {
        Self {
            iterations: 2000,
            step_sigma: 0.01,
            decay: 0.999,
            mode: RefineMode::Residual,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    pub t: Transform2x2,
    pub residuals: Vec<f64>,
    pub objective_value: f64,
}

impl AlignmentResult {
    pub fn mean_residual(&self) -> f64 {
        self.residuals.iter().sum::<f64>() / self.residuals.len() as f64
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Perturbs the best transform with Gaussian noise on every entry and keeps
/// strict improvements. Deterministic for a given seed.
pub fn refine(
    t0: &Transform2x2,
    observed: &[(ConeColor, Point)],
    reference: &[(ConeColor, Point)],
    seed: u64,
    params: &RefineParams,
) -> Result<AlignmentResult, AlignmentError> {
    let score = |d: &[f64]| match params.mode {
        RefineMode::Residual => mean(d),
        RefineMode::Objective => objective_from_residuals(d),
    };
    let mut best = *t0;
    let mut best_d = residuals(&best, observed, reference)?;
    let mut best_score = score(&best_d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sigma = params.step_sigma;
    for _ in 0..params.iterations {
        let mut e = best.entries();
        for v in &mut e {
            let z: f64 = rng.sample(StandardNormal);
            *v += sigma * z;
        }
        let cand = Transform2x2::from_entries(e);
        let d = residuals(&cand, observed, reference)?;
        let s = score(&d);
        if s < best_score {
            best = cand;
            best_d = d;
            best_score = s;
        }
        sigma *= params.decay;
    }
    Ok(AlignmentResult {
        t: best,
        objective_value: objective_from_residuals(&best_d),
        residuals: best_d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_from_unit_vectors() {
        let t = estimate_transform([Point::new(1.0, 0.0), Point::new(0.0, 1.0)], [Point::new(1.0, 0.0), Point::new(0.0, 1.0)]).unwrap();
        assert_eq!(t, Transform2x2::IDENTITY);
    }

    #[test]
    fn quarter_turn() {
        let obs = [Point::new(2.0, 1.0), Point::new(-1.0, 3.0)];
        let rot = |p: Point| Point::new(-p.y, p.x);
        let t = estimate_transform(obs, [rot(obs[0]), rot(obs[1])]).unwrap();
        let expect = Transform2x2 { a: 0.0, b: -1.0, c: 1.0, d: 0.0 };
        for (x, y) in t.entries().iter().zip(expect.entries()) {
            assert!((x - y).abs() < 1e-12);
        }
        for i in 0..2 {
            assert!((apply(&t, &obs[i]) - rot(obs[i])).norm() < 1e-12);
        }
    }

    #[test]
    fn collinear_pair_is_degenerate() {
        let r = estimate_transform([Point::new(1.0, 1.0), Point::new(2.0, 2.0)], [Point::new(0.0, 1.0), Point::new(1.0, 0.0)]);
        assert!(matches!(r, Err(AlignmentError::Degenerate(_))));
    }

    #[test]
    fn apply_basics() {
        let p = Point::new(1.0, 1.0);
        assert_eq!(apply(&Transform2x2::IDENTITY, &p), p);
        let two = Transform2x2 { a: 2.0, b: 0.0, c: 0.0, d: 2.0 };
        assert_eq!(apply(&two, &p), Point::new(2.0, 2.0));
    }

    #[test]
    fn objective_examples() {
        assert_eq!(objective_from_residuals(&[0.0, 0.0, 0.0]), 3.0);
        assert_eq!(objective_from_residuals(&[0.0, 1.0]), 1.5);
        let reference = vec![(ConeColor::Blue, Point::new(0.0, 5.0))];
        for t in [Transform2x2::IDENTITY, Transform2x2::rotation(1.0)] {
            let v = objective(&t, &[(ConeColor::Blue, Point::new(3.0, 2.0))], &reference).unwrap();
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn residuals_use_matching_color() {
        let reference = vec![(ConeColor::Blue, Point::new(0.0, 5.0)), (ConeColor::Yellow, Point::new(0.0, 1.0))];
        let d = residuals(&Transform2x2::IDENTITY, &[(ConeColor::Blue, Point::new(0.0, 1.0))], &reference).unwrap();
        assert_eq!(d, vec![4.0]);
        assert!(matches!(
            residuals(&Transform2x2::IDENTITY, &[(ConeColor::OrangeStart, Point::origin())], &reference),
            Err(AlignmentError::EmptyReference)
        ));
    }

    fn ring() -> Vec<(ConeColor, Point)> {
        (0..12)
            .map(|i| {
                let a = i as f64 * 0.5;
                let c = if i % 2 == 0 { ConeColor::Blue } else { ConeColor::Yellow };
                (c, Point::new(10.0 * a.cos() + 3.0, 7.0 * a.sin() + 9.0))
            })
            .collect()
    }

    #[test]
    fn zero_iterations_returns_input() {
        let reference = ring();
        let t0 = Transform2x2::rotation(0.05);
        let r = refine(&t0, &reference, &reference, 1, &RefineParams { iterations: 0, ..Default::default() }).unwrap();
        assert_eq!(r.t, t0);
    }

    #[test]
    fn exact_start_stays_exact() {
        let reference = ring();
        let r = refine(&Transform2x2::IDENTITY, &reference, &reference, 3, &RefineParams::default()).unwrap();
        assert_eq!(r.t, Transform2x2::IDENTITY);
        assert!(r.residuals.iter().all(|&d| d == 0.0));
        assert_eq!(r.objective_value, 12.0);
    }

    #[test]
    fn refinement_improves_perturbed_start() {
        let reference = ring();
        let t0 = Transform2x2 { a: 1.02, b: -0.03, c: 0.02, d: 0.99 };
        let before = mean(&residuals(&t0, &reference, &reference).unwrap());
        for seed in 0..10 {
            let params = RefineParams { iterations: 500, ..Default::default() };
            let r = refine(&t0, &reference, &reference, seed, &params).unwrap();
            assert!(r.mean_residual() < before);
            assert_eq!(r, refine(&t0, &reference, &reference, seed, &params).unwrap());
        }
    }

    #[test]
    fn inverse_round_trip() {
        let t = Transform2x2 { a: 1.2, b: 0.3, c: -0.4, d: 0.9 };
        let p = Point::new(3.0, -2.0);
        assert!((apply(&t.inverse().unwrap(), &apply(&t, &p)) - p).norm() < 1e-12);
    }
}
