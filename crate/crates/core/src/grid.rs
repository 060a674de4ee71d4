//! Spatial grid and multi-component field storage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary treatment for a truncated line domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Boundary {
    /// Plain periodic wrap; defects then come in source/sink pairs.
    Periodic,
    /// Zero-flux in the comoving frame approximated by a sponge layer that
    /// relaxes the solution toward a reference far-field state near the
    /// domain edges. Outgoing group velocities make the core insensitive
    /// to the details of this layer.
    FarFieldNeumann {
        /// Width of the sponge layer at each edge.
        sponge_width: f64,
        /// Relaxation rate inside the sponge.
        sponge_strength: f64,
    },
}

/// Uniform grid on `[-L, L)` with `N` points.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Grid1D {
    pub half_length: f64,
    pub n_points: usize,
    pub bc: Boundary,
}

impl Grid1D {
    pub fn periodic(half_length: f64, n_points: usize) -> Result<Self> {
        Self::new(half_length, n_points, Boundary::Periodic)
    }

    pub fn new(half_length: f64, n_points: usize, bc: Boundary) -> Result<Self> {
        if !(half_length > 0.0) || !half_length.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grid half-length must be positive, got {half_length}"
            )));
        }
        if n_points < 16 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 16 points, got {n_points}"
            )));
        }
        if n_points % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "grid size must be even for the spectral operators, got {n_points}"
            )));
        }
        Ok(Grid1D {
            half_length,
            n_points,
            bc,
        })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_length / self.n_points as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.half_length + i as f64 * self.spacing()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n_points).map(|i| self.x(i)).collect()
    }

    /// Index of the grid node nearest to `x` (periodic wrap).
    pub fn nearest_index(&self, x: f64) -> usize {
        let h = self.spacing();
        let len = 2.0 * self.half_length;
        let mut r = (x + self.half_length).rem_euclid(len);
        if !r.is_finite() {
            r = 0.0;
        }
        ((r / h).round() as usize) % self.n_points
    }
}

/// An `n_comp`-component real field sampled on a grid, stored component-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    n_comp: usize,
    len: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(n_comp: usize, len: usize) -> Self {
        Field {
            n_comp,
            len,
            data: vec![0.0; n_comp * len],
        }
    }

    pub fn from_fn(n_comp: usize, len: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut out = Field::zeros(n_comp, len);
        for c in 0..n_comp {
            for i in 0..len {
                out.data[c * len + i] = f(c, i);
            }
        }
        out
    }

    pub fn n_comp(&self) -> usize {
        self.n_comp
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn comp(&self, c: usize) -> &[f64] {
        &self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn comp_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.len..(c + 1) * self.len]
    }

    pub fn get(&self, c: usize, i: usize) -> f64 {
        self.data[c * self.len + i]
    }

    pub fn set(&mut self, c: usize, i: usize, v: f64) {
        self.data[c * self.len + i] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn l2_norm(&self, h: f64) -> f64 {
        (self.data.iter().map(|v| v * v).sum::<f64>() * h).sqrt()
    }

    /// Discrete L^2 inner product with mesh weight `h`.
    pub fn inner(&self, other: &Field, h: f64) -> f64 {
        debug_assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * h
    }

    pub fn axpy(&mut self, alpha: f64, other: &Field) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in self.data.iter_mut() {
            *a *= alpha;
        }
    }

    /// Pointwise values of all components at node `i`.
    pub fn at(&self, i: usize, buf: &mut [f64]) {
        for c in 0..self.n_comp {
            buf[c] = self.data[c * self.len + i];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spacing_and_nodes() {
        let g = Grid1D::periodic(10.0, 64).unwrap();
        assert!((g.spacing() - 20.0 / 64.0).abs() < 1e-15);
        assert!((g.x(0) + 10.0).abs() < 1e-15);
        assert!((g.x(32) - 0.0).abs() < 1e-12);
        assert_eq!(g.nearest_index(0.0), 32);
        assert_eq!(g.nearest_index(-10.0), 0);
        // periodic wrap: x = L maps to the first node
        assert_eq!(g.nearest_index(10.0), 0);
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(Grid1D::periodic(10.0, 8).is_err());
        assert!(Grid1D::periodic(-1.0, 64).is_err());
        assert!(Grid1D::periodic(10.0, 65).is_err());
    }

    #[test]
    fn field_layout_roundtrip() {
        let f = Field::from_fn(2, 4, |c, i| (10 * c + i) as f64);
        assert_eq!(f.comp(0), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(f.comp(1), &[10.0, 11.0, 12.0, 13.0]);
        let mut buf = [0.0; 2];
        f.at(2, &mut buf);
        assert_eq!(buf, [2.0, 12.0]);
    }
}
