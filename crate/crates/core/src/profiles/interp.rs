//! Shape-preserving cubic Hermite interpolation on tabulated profiles.

/// Piecewise cubic Hermite interpolant with Fritsch–Carlson limited slopes.
///
/// Outside the node range the interpolant is constant (end values), which
/// matches the constant end states of every wave profile.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneCubic {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
    uniform_step: Option<f64>,
}

impl MonotoneCubic {
    /// Interpolant with slopes estimated from the data (PCHIP).
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Self {
        let n = x.len();
        assert!(n >= 2 && y.len() == n, "need matching node arrays of length >= 2");
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] > 0.0 {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        d[0] = end_slope(h[0], h.get(1).copied().unwrap_or(h[0]), delta[0], delta.get(1).copied().unwrap_or(delta[0]));
        d[n - 1] = end_slope(
            h[n - 2],
            if n > 2 { h[n - 3] } else { h[n - 2] },
            delta[n - 2],
            if n > 2 { delta[n - 3] } else { delta[n - 2] },
        );
        Self::finish(x, y, d)
    }

    /// Interpolant with prescribed node derivatives, limited to keep monotone data monotone.
    pub fn with_slopes(x: Vec<f64>, y: Vec<f64>, mut d: Vec<f64>) -> Self {
        let n = x.len();
        assert!(n >= 2 && y.len() == n && d.len() == n);
        for i in 0..n - 1 {
            let delta = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
            if delta == 0.0 {
                continue;
            }
            let (a, b) = (d[i] / delta, d[i + 1] / delta);
            let r = a * a + b * b;
            if r > 9.0 {
                let t = 3.0 / r.sqrt();
                d[i] = t * a * delta;
                d[i + 1] = t * b * delta;
            }
        }
        Self::finish(x, y, d)
    }

    fn finish(x: Vec<f64>, y: Vec<f64>, d: Vec<f64>) -> Self {
        let n = x.len();
        let step = (x[n - 1] - x[0]) / (n - 1) as f64;
        let uniform = x
            .iter()
            .enumerate()
            .all(|(i, xi)| (xi - (x[0] + i as f64 * step)).abs() <= 1e-9 * step.abs().max(1.0));
        Self { x, y, d, uniform_step: uniform.then_some(step) }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    fn locate(&self, t: f64) -> usize {
        let n = self.x.len();
        if let Some(h) = self.uniform_step {
            let i = ((t - self.x[0]) / h).floor() as isize;
            let mut i = i.clamp(0, n as isize - 2) as usize;
            // guard against rounding at cell edges
            while i > 0 && t < self.x[i] {
                i -= 1;
            }
            while i + 2 < n && t >= self.x[i + 1] {
                i += 1;
            }
            i
        } else {
            match self.x.partition_point(|xi| *xi <= t) {
                0 => 0,
                p => (p - 1).min(n - 2),
            }
        }
    }

    /// Value and first derivative at `t`.
    pub fn eval_with_derivative(&self, t: f64) -> (f64, f64) {
        let n = self.x.len();
        if t <= self.x[0] {
            return (self.y[0], 0.0);
        }
        if t >= self.x[n - 1] {
            return (self.y[n - 1], 0.0);
        }
        let i = self.locate(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let (y0, y1, d0, d1) = (self.y[i], self.y[i + 1], self.d[i] * h, self.d[i + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let value = h00 * y0 + h10 * d0 + h01 * y1 + h11 * d1;
        let dh00 = 6.0 * s2 - 6.0 * s;
        let dh10 = 3.0 * s2 - 4.0 * s + 1.0;
        let dh01 = -6.0 * s2 + 6.0 * s;
        let dh11 = 3.0 * s2 - 2.0 * s;
        let deriv = (dh00 * y0 + dh10 * d0 + dh01 * y1 + dh11 * d1) / h;
        (value, deriv)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eval_with_derivative(t).0
    }
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if s * d0 <= 0.0 {
        0.0
    } else if d0 * d1 <= 0.0 && s.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_cubic_with_exact_slopes() {
        let x: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|t| t * t * t).collect();
        let d: Vec<f64> = x.iter().map(|t| 3.0 * t * t).collect();
        let p = MonotoneCubic::with_slopes(x, y, d);
        for t in [0.05, 0.33, 0.71, 0.99] {
            assert!((p.eval(t) - t * t * t).abs() < 1e-14);
        }
    }

    #[test]
    fn preserves_monotone_steps() {
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|t| if *t < 10.0 { 0.0 } else { 1.0 }).collect();
        let p = MonotoneCubic::new(x, y);
        let mut prev = p.eval(0.0);
        for i in 0..=1900 {
            let v = p.eval(i as f64 * 0.01);
            assert!(v >= prev - 1e-15 && (0.0..=1.0).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn clamps_outside_range() {
        let p = MonotoneCubic::new(vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 4.0]);
        assert_eq!(p.eval_with_derivative(-5.0), (1.0, 0.0));
        assert_eq!(p.eval_with_derivative(7.0), (4.0, 0.0));
    }
}
