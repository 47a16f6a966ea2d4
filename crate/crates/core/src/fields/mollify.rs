use super::{ScalarField, StaggeredGrid, VectorField};
use crate::error::{Result, SimError};

/// Wendland C2 bump sampled on the grid lattice and renormalized to unit
/// mass. Sampling a radial profile at symmetric offsets keeps the discrete
/// kernel symmetric, so its first moments vanish exactly.
#[derive(Debug, Clone)]
pub struct MollifierKernel {
    pub radius: f64,
    /// `(di, dj, weight)` with `weight > 0`.
    stencil: Vec<(isize, isize, f64)>,
}

fn wendland(q: f64) -> f64 {
    if q >= 1.0 {
        0.0
    } else {
        (1.0 - q).powi(4) * (4.0 * q + 1.0)
    }
}

impl MollifierKernel {
    pub fn new(grid: &StaggeredGrid, radius: f64) -> Result<Self> {
        let min = 2.0 * grid.dx.max(grid.dy);
        if !(radius >= min) {
            return Err(SimError::KernelUnresolved { r: radius, min });
        }
        let ri = (radius / grid.dx).ceil() as isize;
        let rj = (radius / grid.dy).ceil() as isize;
        let mut stencil = Vec::new();
        for dj in -rj..=rj {
            for di in -ri..=ri {
                let d = ((di as f64 * grid.dx).powi(2) + (dj as f64 * grid.dy).powi(2)).sqrt();
                let w = wendland(d / radius);
                if w > 0.0 {
                    stencil.push((di, dj, w));
                }
            }
        }
        let total: f64 = stencil.iter().map(|s| s.2).sum();
        for s in &mut stencil {
            s.2 /= total;
        }
        Ok(Self { radius, stencil })
    }

    pub fn weights(&self) -> impl Iterator<Item = (isize, isize, f64)> + '_ {
        self.stencil.iter().copied()
    }

    pub fn weight_sum(&self) -> f64 {
        self.stencil.iter().map(|s| s.2).sum()
    }

    /// Largest offset in stencil units along x and y.
    pub fn reach(&self) -> (isize, isize) {
        self.stencil.iter().fold((0, 0), |(a, b), s| (a.max(s.0.abs()), b.max(s.1.abs())))
    }
}

/// Discrete convolution with zero extension outside the sample lattice.
pub fn mollify(f: &ScalarField, kernel: &MollifierKernel) -> ScalarField {
    let (w, h) = (f.width() as isize, f.height() as isize);
    let mut out = ScalarField::zeros(f.grid, f.loc);
    for j in 0..h {
        for i in 0..w {
            let mut s = 0.0;
            for (di, dj, wt) in kernel.weights() {
                let (ii, jj) = (i + di, j + dj);
                if ii >= 0 && ii < w && jj >= 0 && jj < h {
                    s += wt * f.at(ii as usize, jj as usize);
                }
            }
            out.set(i as usize, j as usize, s);
        }
    }
    out
}

pub fn mollify_vector(u: &VectorField, kernel: &MollifierKernel) -> VectorField {
    VectorField { ux: mollify(&u.ux, kernel), uy: mollify(&u.uy, kernel), traces: u.traces.clone() }
}
