//! Natural cubic spline through actuated-joint waypoints, time-scaled from
//! per-joint velocity and acceleration limits.

use crate::crane::Vec5;
use crate::error::{Error, Result};

/// Shortest segment duration, used when consecutive waypoints coincide.
const MIN_SEGMENT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSpline {
    knots: Vec<f64>,
    values: Vec<Vec5>,
    /// Second derivatives at the knots; zero at both ends.
    curvature: Vec<Vec5>,
}

impl ReferenceSpline {
    /// Natural cubic spline through `values` at strictly increasing `knots`.
    pub fn new(knots: Vec<f64>, values: Vec<Vec5>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Reference("no waypoints".into()));
        }
        if knots.len() != values.len() {
            return Err(Error::Reference(format!("{} knots for {} waypoints", knots.len(), values.len())));
        }
        if knots.iter().chain(values.iter().flat_map(|v| v.iter())).any(|x| !x.is_finite()) {
            return Err(Error::Reference("non-finite knot or waypoint".into()));
        }
        if knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Reference("knot times must be strictly increasing".into()));
        }
        let curvature = natural_curvature(&knots, &values);
        Ok(Self { knots, values, curvature })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn waypoints(&self) -> &[Vec5] {
        &self.values
    }

    pub fn start(&self) -> f64 {
        self.knots[0]
    }

    pub fn end(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    /// Segment index and local offsets, or `None` outside the domain.
    fn locate(&self, tau: f64) -> Option<usize> {
        if self.knots.len() < 2 || tau <= self.start() || tau >= self.end() {
            return None;
        }
        let i = self.knots.partition_point(|&k| k <= tau) - 1;
        Some(i.min(self.knots.len() - 2))
    }

    /// `q_{A,d}(τ)`; clamps to the end waypoints outside the domain.
    pub fn eval(&self, tau: f64) -> Vec5 {
        match self.locate(tau) {
            None if tau <= self.start() => self.values[0],
            None => *self.values.last().unwrap(),
            Some(i) => {
                let (t0, t1) = (self.knots[i], self.knots[i + 1]);
                let h = t1 - t0;
                let (a, b) = (t1 - tau, tau - t0);
                let (m0, m1) = (self.curvature[i], self.curvature[i + 1]);
                let (y0, y1) = (self.values[i], self.values[i + 1]);
                m0 * (a * a * a / (6.0 * h))
                    + m1 * (b * b * b / (6.0 * h))
                    + (y0 / h - m0 * (h / 6.0)) * a
                    + (y1 / h - m1 * (h / 6.0)) * b
            }
        }
    }

    /// `dq_{A,d}/dτ`; zero outside the domain where the spline is held.
    pub fn derivative(&self, tau: f64) -> Vec5 {
        match self.locate(tau) {
            None => Vec5::zeros(),
            Some(i) => {
                let (t0, t1) = (self.knots[i], self.knots[i + 1]);
                let h = t1 - t0;
                let (a, b) = (t1 - tau, tau - t0);
                let (m0, m1) = (self.curvature[i], self.curvature[i + 1]);
                let (y0, y1) = (self.values[i], self.values[i + 1]);
                -m0 * (a * a / (2.0 * h)) + m1 * (b * b / (2.0 * h)) + (y1 - y0) / h - (m1 - m0) * (h / 6.0)
            }
        }
    }

    pub fn second_derivative(&self, tau: f64) -> Vec5 {
        match self.locate(tau) {
            None => Vec5::zeros(),
            Some(i) => {
                let (t0, t1) = (self.knots[i], self.knots[i + 1]);
                let h = t1 - t0;
                self.curvature[i] * ((t1 - tau) / h) + self.curvature[i + 1] * ((tau - t0) / h)
            }
        }
    }
}

/// Tridiagonal solve for the knot second derivatives with zero end curvature.
fn natural_curvature(t: &[f64], y: &[Vec5]) -> Vec<Vec5> {
    let n = t.len();
    let mut m = vec![Vec5::zeros(); n];
    if n < 3 {
        return m;
    }
    // Thomas algorithm on the interior unknowns 1..n-1
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![Vec5::zeros(); n];
    for i in 1..n - 1 {
        let h0 = t[i] - t[i - 1];
        let h1 = t[i + 1] - t[i];
        let diag = 2.0 * (h0 + h1);
        let rhs = ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0) * 6.0;
        let lower = if i > 1 { h0 } else { 0.0 };
        let denom = diag - lower * c_prime[i - 1];
        c_prime[i] = h1 / denom;
        d_prime[i] = (rhs - d_prime[i - 1] * lower) / denom;
    }
    for i in (1..n - 1).rev() {
        m[i] = d_prime[i] - m[i + 1] * c_prime[i];
    }
    m
}

/// Segment duration so that a rest-to-rest cubic over the segment stays
/// within the velocity and acceleration limits on every joint.
pub fn segment_duration(delta: &Vec5, v_limit: &Vec5, a_limit: &Vec5) -> f64 {
    (0..5)
        .map(|j| {
            let d = delta[j].abs();
            (1.5 * d / v_limit[j]).max((6.0 * d / a_limit[j]).sqrt())
        })
        .fold(MIN_SEGMENT, f64::max)
}

/// Time-scaled natural spline through `waypoints`, starting at τ = 0.
pub fn plan_reference(waypoints: &[Vec5], v_limit: &Vec5, a_limit: &Vec5) -> Result<ReferenceSpline> {
    if waypoints.is_empty() {
        return Err(Error::Reference("no waypoints".into()));
    }
    if v_limit.iter().chain(a_limit.iter()).any(|&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::Reference("velocity and acceleration limits must be positive".into()));
    }
    let mut knots = Vec::with_capacity(waypoints.len());
    knots.push(0.0);
    for w in waypoints.windows(2) {
        let last = *knots.last().unwrap();
        knots.push(last + segment_duration(&(w[1] - w[0]), v_limit, a_limit));
    }
    ReferenceSpline::new(knots, waypoints.to_vec())
}
