//! Natural cubic splines for the reference path and spline obstacles.

/// Natural cubic spline through `(t_i, x_i)`, extended linearly outside the
/// knot range so that the slope stays continuous.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    t: Vec<f64>,
    x: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    /// Knot times must increase strictly; at least two knots.
    pub fn new(t: &[f64], x: &[f64]) -> Result<Self, String> {
        let n = t.len();
        if n < 2 || x.len() != n {
            return Err(format!("{n} knot times for {} values", x.len()));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err("knot times must increase strictly".into());
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // tridiagonal system for the interior second derivatives (Thomas)
            let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                diag[i] = 2.0 * (h[i] + h[i + 1]);
                rhs[i] = 6.0 * ((x[i + 2] - x[i + 1]) / h[i + 1] - (x[i + 1] - x[i]) / h[i]);
            }
            for i in 1..k {
                let w = h[i] / diag[i - 1];
                diag[i] -= w * h[i];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - h[i + 1] * m[i + 2]) / diag[i];
            }
        }
        Ok(Self {
            t: t.to_vec(),
            x: x.to_vec(),
            m,
        })
    }

    /// Value and first derivative.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let n = self.t.len();
        let i = self.t.partition_point(|ti| *ti <= t).clamp(1, n - 1) - 1;
        let tc = t.clamp(self.t[0], self.t[n - 1]);
        let (value, slope) = self.eval_segment(i, tc);
        (value + slope * (t - tc), slope)
    }

    fn eval_segment(&self, i: usize, t: f64) -> (f64, f64) {
        let h = self.t[i + 1] - self.t[i];
        let a = (self.t[i + 1] - t) / h;
        let b = (t - self.t[i]) / h;
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        let value = a * self.x[i] + b * self.x[i + 1] + ((a.powi(3) - a) * m0 + (b.powi(3) - b) * m1) * h * h / 6.0;
        let slope = (self.x[i + 1] - self.x[i]) / h + ((1.0 - 3.0 * a * a) * m0 + (3.0 * b * b - 1.0) * m1) * h / 6.0;
        (value, slope)
    }

    pub fn start(&self) -> f64 {
        self.t[0]
    }

    pub fn end(&self) -> f64 {
        self.t[self.t.len() - 1]
    }
}

/// Planar path through `[t, x, y]` waypoints.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarSpline {
    x: CubicSpline,
    y: CubicSpline,
}

impl PlanarSpline {
    pub fn new(waypoints: &[[f64; 3]]) -> Result<Self, String> {
        let t: Vec<f64> = waypoints.iter().map(|w| w[0]).collect();
        let x: Vec<f64> = waypoints.iter().map(|w| w[1]).collect();
        let y: Vec<f64> = waypoints.iter().map(|w| w[2]).collect();
        Ok(Self {
            x: CubicSpline::new(&t, &x)?,
            y: CubicSpline::new(&t, &y)?,
        })
    }

    /// Position and velocity.
    pub fn eval(&self, t: f64) -> ([f64; 2], [f64; 2]) {
        let (x, dx) = self.x.eval(t);
        let (y, dy) = self.y.eval(t);
        ([x, y], [dx, dy])
    }

    pub fn start(&self) -> f64 {
        self.x.start()
    }

    pub fn end(&self) -> f64 {
        self.x.end()
    }
}
