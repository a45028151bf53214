//! Ground-truth obstacle motion.

use super::config::{ObstacleConfig, ObstacleMotion};
use super::reference::PlanarSpline;

#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleTruth {
    motion: ObstacleMotion,
    spline: Option<PlanarSpline>,
    /// Radius of the disk swept by the body over all attitudes.
    pub body_radius: f64,
}

impl ObstacleTruth {
    pub fn new(cfg: &ObstacleConfig) -> Result<Self, String> {
        let spline = match &cfg.motion {
            ObstacleMotion::WaypointSpline { waypoints } => Some(PlanarSpline::new(waypoints)?),
            _ => None,
        };
        Ok(Self {
            motion: cfg.motion.clone(),
            spline,
            body_radius: cfg.semi_axes[0].max(cfg.semi_axes[1]),
        })
    }

    pub fn position(&self, t: f64) -> [f64; 2] {
        self.state(t).0
    }

    pub fn velocity(&self, t: f64) -> [f64; 2] {
        self.state(t).1
    }

    fn state(&self, t: f64) -> ([f64; 2], [f64; 2]) {
        match &self.motion {
            ObstacleMotion::Circular {
                center,
                radius,
                omega,
                phase,
            } => {
                let (s, c) = (phase + omega * t).sin_cos();
                (
                    [center[0] + radius * c, center[1] + radius * s],
                    [-radius * omega * s, radius * omega * c],
                )
            }
            ObstacleMotion::CubicPolynomial { coefficients } => {
                let mut p = [0.0; 2];
                let mut v = [0.0; 2];
                for (axis, c) in coefficients.iter().enumerate() {
                    p[axis] = c[0] + t * (c[1] + t * (c[2] + t * c[3]));
                    v[axis] = c[1] + t * (2.0 * c[2] + 3.0 * t * c[3]);
                }
                (p, v)
            }
            ObstacleMotion::WaypointSpline { .. } => {
                self.spline.as_ref().expect("spline built for waypoint motion").eval(t)
            }
        }
    }

    /// Largest speed over `[t0, t1]`, sampled every 10 ms.
    pub fn max_speed(&self, t0: f64, t1: f64) -> f64 {
        if let ObstacleMotion::Circular { radius, omega, .. } = &self.motion {
            return radius * omega.abs();
        }
        let n = ((t1 - t0) / 0.01).ceil().max(1.0) as usize;
        (0..=n)
            .map(|i| {
                let v = self.velocity(t0 + (t1 - t0) * i as f64 / n as f64);
                v[0].hypot(v[1])
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth(motion: ObstacleMotion) -> ObstacleTruth {
        ObstacleTruth::new(&ObstacleConfig {
            motion,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn circular_motion() {
        let o = truth(ObstacleMotion::Circular {
            center: [1.0, 2.0],
            radius: 5.0,
            omega: 0.1,
            phase: 0.0,
        });
        assert_eq!(o.position(0.0), [6.0, 2.0]);
        assert!((o.max_speed(0.0, 10.0) - 0.5).abs() < 1e-15);
        assert_eq!(o.body_radius, 0.8);
        let t = 7.3;
        let v = o.velocity(t);
        let (a, b) = (o.position(t + 1e-6), o.position(t - 1e-6));
        assert!((v[0] - (a[0] - b[0]) / 2e-6).abs() < 1e-7);
        assert!((v[1] - (a[1] - b[1]) / 2e-6).abs() < 1e-7);
    }

    #[test]
    fn cubic_motion() {
        let o = truth(ObstacleMotion::CubicPolynomial {
            coefficients: [[1.0, 0.2, 0.0, -0.001], [0.0, 0.0, 0.01, 0.0]],
        });
        let p = o.position(2.0);
        assert!((p[0] - (1.0 + 0.4 - 0.008)).abs() < 1e-14 && (p[1] - 0.04).abs() < 1e-14);
        let v = o.velocity(2.0);
        assert!((v[0] - (0.2 - 0.012)).abs() < 1e-14 && (v[1] - 0.04).abs() < 1e-14);
    }
}
