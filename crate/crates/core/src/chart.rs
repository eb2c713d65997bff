use rand::Rng;

use crate::error::{Error, Result};

/// A named coordinate chart with an axis-aligned box domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    name: String,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Chart {
    pub fn new(name: impl Into<String>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), found: upper.len() });
        }
        if lower.is_empty() {
            return Err(Error::InvalidParameter("chart of dimension 0".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidParameter("chart box has an empty side".into()));
        }
        Ok(Self { name: name.into(), lower, upper })
    }

    /// The cube `[-half_width, half_width]^dim`.
    pub fn cube(name: impl Into<String>, dim: usize, half_width: f64) -> Result<Self> {
        Self::new(name, vec![-half_width; dim], vec![half_width; dim])
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    /// Distance from `x` to the nearest face of the box; negative outside.
    pub fn margin(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| (v - l).min(u - v))
            .fold(f64::INFINITY, f64::min)
    }

    /// Grows every side symmetrically by `fraction` of its half-width.
    pub fn inflated(&self, fraction: f64) -> Self {
        let (lower, upper) = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| {
                let pad = 0.5 * (u - l) * fraction;
                (l - pad, u + pad)
            })
            .unzip();
        Self { name: self.name.clone(), lower, upper }
    }

    /// Sub-box `[lower, upper]` with the same name.
    pub fn with_bounds(&self, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        Self::new(self.name.clone(), lower, upper)
    }

    /// Uniform sample from the box shrunk by `shrink` on every side.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, shrink: f64) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| rng.gen_range((l + shrink)..(u - shrink)))
            .collect()
    }

    /// Tensor grid with `per_axis` nodes per axis, endpoints included.
    pub fn grid(&self, per_axis: usize) -> Vec<Vec<f64>> {
        let per_axis = per_axis.max(1);
        let dim = self.dim();
        let total = per_axis.pow(dim as u32);
        (0..total)
            .map(|mut k| {
                (0..dim)
                    .map(|axis| {
                        let i = k % per_axis;
                        k /= per_axis;
                        if per_axis == 1 {
                            0.5 * (self.lower[axis] + self.upper[axis])
                        } else {
                            let s = i as f64 / (per_axis - 1) as f64;
                            self.lower[axis] + s * (self.upper[axis] - self.lower[axis])
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margin_and_inflation() {
        let c = Chart::cube("c", 2, 1.0).unwrap();
        assert_eq!(c.margin(&[0.5, 0.0]), 0.5);
        assert!(c.margin(&[1.5, 0.0]) < 0.0);
        let big = c.inflated(0.1);
        assert!((big.upper()[0] - 1.1).abs() < 1e-15);
        assert!(big.contains(&[1.05, -1.05]));
    }

    #[test]
    fn grid_covers_corners() {
        let c = Chart::cube("c", 2, 1.0).unwrap();
        let g = c.grid(3);
        assert_eq!(g.len(), 9);
        assert!(g.contains(&vec![-1.0, -1.0]) && g.contains(&vec![1.0, 1.0]) && g.contains(&vec![0.0, 0.0]));
    }

    #[test]
    fn rejects_empty_side() {
        assert!(Chart::new("bad", vec![0.0], vec![0.0]).is_err());
    }
}
