//! Natural cubic spline on strictly increasing, possibly non-uniform knots.
//!
//! Outside the knot range the first and last interval polynomials are
//! continued as-is, so extrapolation is cubic.

#[derive(Debug, Clone, PartialEq)]
pub struct NaturalSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots; zero at both ends.
    m: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum SplineError {
    #[error("spline needs at least 3 knots, got {0}")]
    TooFewKnots(usize),
    #[error("knot abscissae must be finite and strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("x and y lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
}

impl NaturalSpline {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self, SplineError> {
        let n = x.len();
        if n != y.len() {
            return Err(SplineError::LengthMismatch(n, y.len()));
        }
        if n < 3 {
            return Err(SplineError::TooFewKnots(n));
        }
        for i in 1..n {
            if !(x[i] > x[i - 1]) || !x[i].is_finite() {
                return Err(SplineError::NotIncreasing(i));
            }
        }

        // Tridiagonal system for the interior second derivatives (Thomas algorithm).
        let interior = n - 2;
        let mut diag = vec![0.0; interior];
        let mut upper = vec![0.0; interior];
        let mut rhs = vec![0.0; interior];
        for k in 0..interior {
            let i = k + 1;
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            diag[k] = 2.0 * (h0 + h1);
            upper[k] = h1;
            rhs[k] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
        }
        for k in 1..interior {
            let lower = x[k + 1] - x[k];
            let w = lower / diag[k - 1];
            diag[k] -= w * upper[k - 1];
            rhs[k] -= w * rhs[k - 1];
        }
        let mut m = vec![0.0; n];
        for k in (0..interior).rev() {
            let next = if k + 1 < interior { m[k + 2] } else { 0.0 };
            m[k + 1] = (rhs[k] - upper[k] * next) / diag[k];
        }

        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    pub fn x_min(&self) -> f64 {
        self.x[0]
    }

    pub fn x_max(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    /// Index of the interval whose polynomial is used at `t`.
    fn interval(&self, t: f64) -> usize {
        let last = self.x.len() - 2;
        if t <= self.x[0] {
            return 0;
        }
        if t >= self.x[last + 1] {
            return last;
        }
        // partition_point gives the first knot strictly greater than t
        let upper = self.x.partition_point(|&xi| xi <= t);
        (upper - 1).min(last)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let i = self.interval(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let i = self.interval(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        (self.y[i + 1] - self.y[i]) / h - (3.0 * a * a - 1.0) * h * self.m[i] / 6.0
            + (3.0 * b * b - 1.0) * h * self.m[i + 1] / 6.0
    }

    pub fn second_derivative(&self, t: f64) -> f64 {
        let i = self.interval(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.m[i] + b * self.m[i + 1]
    }
}
