use crate::error::{Error, Result};

/// Uniform partition of `[0, T]` with `T = n_steps·dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        Ok(Self { dt, n_steps })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn t_final(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    /// `t_n = n·dt`.
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(|n| self.time(n))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_arithmetic() {
        let g = TimeGrid::new(0.008, 250).unwrap();
        assert!((g.t_final() - 2.0).abs() < 1e-12);
        assert_eq!(g.times().count(), 251);
        assert!(TimeGrid::new(0.0, 3).is_err());
        assert_eq!(TimeGrid::new(0.1, 0).unwrap().t_final(), 0.0);
    }
}
