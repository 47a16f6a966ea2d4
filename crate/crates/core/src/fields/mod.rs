//! Staggered (MAC) grid containers.
//!
//! Layout: scalars at cell centers, `u_x` on x-faces, `u_y` on y-faces,
//! shear quantities on nodes. Storage is row-major with `j` (the y index)
//! as the slow index. Tangential wall values of a velocity field live in
//! [`WallTraces`], sampled at the wall nodes; they act as Dirichlet data for
//! every stencil that needs a ghost value.
//!
//! Tensor fields are stored at cell centers: the diagonal entries come from
//! face differences, the shear entry is computed on nodes and averaged to
//! the center from the four corners.

mod mollify;
mod ops;
mod snapshot;

pub use mollify::{mollify, mollify_vector, MollifierKernel};
pub use ops::{
    divergence, face_gradient, integrate, laplacian_neumann, node_shear, sym_gradient, sym_gradient_norm_sq,
};
pub use snapshot::{read_snapshot, write_snapshot, write_vtk};

use crate::error::{Result, SimError};

pub const DIM: usize = 2;

pub type Point = [f64; DIM];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Location {
    Center,
    XFace,
    YFace,
    Node,
}

impl Location {
    pub fn tag(self) -> &'static str {
        match self {
            Location::Center => "center",
            Location::XFace => "xface",
            Location::YFace => "yface",
            Location::Node => "node",
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        match s {
            "center" => Some(Location::Center),
            "xface" => Some(Location::XFace),
            "yface" => Some(Location::YFace),
            "node" => Some(Location::Node),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaggeredGrid {
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

impl StaggeredGrid {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 8 || ny < 8 {
            return Err(SimError::InvalidParams(format!(
                "grid must have at least 8 cells per direction, got {nx}x{ny}"
            )));
        }
        if !(lx > 0.0 && ly > 0.0) {
            return Err(SimError::InvalidParams("domain extents must be positive".into()));
        }
        Ok(Self { nx, ny, dx: lx / nx as f64, dy: ly / ny as f64 })
    }

    pub fn lx(&self) -> f64 {
        self.dx * self.nx as f64
    }

    pub fn ly(&self) -> f64 {
        self.dy * self.ny as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn min_spacing(&self) -> f64 {
        self.dx.min(self.dy)
    }

    pub fn shape(&self, loc: Location) -> (usize, usize) {
        match loc {
            Location::Center => (self.nx, self.ny),
            Location::XFace => (self.nx + 1, self.ny),
            Location::YFace => (self.nx, self.ny + 1),
            Location::Node => (self.nx + 1, self.ny + 1),
        }
    }

    pub fn len(&self, loc: Location) -> usize {
        let (w, h) = self.shape(loc);
        w * h
    }

    /// Physical coordinates of sample `(i, j)` at `loc`.
    pub fn position(&self, loc: Location, i: usize, j: usize) -> Point {
        let (ox, oy) = match loc {
            Location::Center => (0.5, 0.5),
            Location::XFace => (0.0, 0.5),
            Location::YFace => (0.5, 0.0),
            Location::Node => (0.0, 0.0),
        };
        [(i as f64 + ox) * self.dx, (j as f64 + oy) * self.dy]
    }

    /// Distance from `p` to the rectangle boundary.
    pub fn wall_distance(&self, p: Point) -> f64 {
        p[0].min(self.lx() - p[0]).min(p[1]).min(self.ly() - p[1])
    }

    /// Quadrature weight of a sample; boundary faces and wall nodes carry
    /// the part of their control volume that lies inside the domain.
    pub fn weight(&self, loc: Location, i: usize, j: usize) -> f64 {
        let v = self.cell_volume();
        let half_x = |i: usize| if i == 0 || i == self.nx { 0.5 } else { 1.0 };
        let half_y = |j: usize| if j == 0 || j == self.ny { 0.5 } else { 1.0 };
        match loc {
            Location::Center => v,
            Location::XFace => v * half_x(i),
            Location::YFace => v * half_y(j),
            Location::Node => v * half_x(i) * half_y(j),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: StaggeredGrid,
    pub loc: Location,
    pub data: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: StaggeredGrid, loc: Location) -> Self {
        Self::constant(grid, loc, 0.0)
    }

    pub fn constant(grid: StaggeredGrid, loc: Location, c: f64) -> Self {
        Self { grid, loc, data: vec![c; grid.len(loc)] }
    }

    pub fn from_fn(grid: StaggeredGrid, loc: Location, f: impl Fn(Point) -> f64) -> Self {
        let (w, h) = grid.shape(loc);
        let mut data = Vec::with_capacity(w * h);
        for j in 0..h {
            for i in 0..w {
                data.push(f(grid.position(loc, i, j)));
            }
        }
        Self { grid, loc, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.grid.shape(self.loc).0
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.grid.shape(self.loc).1
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.width() + i
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.width() + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let w = self.width();
        self.data[j * w + i] = v;
    }

    pub fn position(&self, k: usize) -> Point {
        let w = self.width();
        self.grid.position(self.loc, k % w, k / w)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, loc: self.loc, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.loc, other.loc);
        Self {
            grid: self.grid,
            loc: self.loc,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Bilinear interpolation on this field's lattice, clamped at the edges.
    pub fn sample(&self, p: Point) -> f64 {
        let g = &self.grid;
        let (ox, oy) = match self.loc {
            Location::Center => (0.5, 0.5),
            Location::XFace => (0.0, 0.5),
            Location::YFace => (0.5, 0.0),
            Location::Node => (0.0, 0.0),
        };
        let (w, h) = (self.width(), self.height());
        let locate = |x: f64, n: usize| -> (usize, f64) {
            let s = x.clamp(0.0, (n - 1) as f64);
            let i = (s.floor() as usize).min(n - 2);
            (i, s - i as f64)
        };
        let (i, fx) = locate(p[0] / g.dx - ox, w);
        let (j, fy) = locate(p[1] / g.dy - oy, h);
        let a = self.at(i, j) * (1.0 - fx) + self.at(i + 1, j) * fx;
        let b = self.at(i, j + 1) * (1.0 - fx) + self.at(i + 1, j + 1) * fx;
        a * (1.0 - fy) + b * fy
    }
}

/// Tangential velocity prescribed on the four walls, sampled at wall nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct WallTraces {
    /// `u_x` on `y = 0`, length `nx + 1`.
    pub bottom: Vec<f64>,
    /// `u_x` on `y = Ly`, length `nx + 1`.
    pub top: Vec<f64>,
    /// `u_y` on `x = 0`, length `ny + 1`.
    pub left: Vec<f64>,
    /// `u_y` on `x = Lx`, length `ny + 1`.
    pub right: Vec<f64>,
}

impl WallTraces {
    pub fn zeros(grid: &StaggeredGrid) -> Self {
        Self {
            bottom: vec![0.0; grid.nx + 1],
            top: vec![0.0; grid.nx + 1],
            left: vec![0.0; grid.ny + 1],
            right: vec![0.0; grid.ny + 1],
        }
    }

    pub fn from_fn(grid: &StaggeredGrid, f: impl Fn(Point) -> [f64; 2]) -> Self {
        let (lx, ly) = (grid.lx(), grid.ly());
        Self {
            bottom: (0..=grid.nx).map(|i| f([i as f64 * grid.dx, 0.0])[0]).collect(),
            top: (0..=grid.nx).map(|i| f([i as f64 * grid.dx, ly])[0]).collect(),
            left: (0..=grid.ny).map(|j| f([0.0, j as f64 * grid.dy])[1]).collect(),
            right: (0..=grid.ny).map(|j| f([lx, j as f64 * grid.dy])[1]).collect(),
        }
    }

    fn zip(&self, o: &Self, f: impl Fn(f64, f64) -> f64 + Copy) -> Self {
        let z = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect();
        Self {
            bottom: z(&self.bottom, &o.bottom),
            top: z(&self.top, &o.top),
            left: z(&self.left, &o.left),
            right: z(&self.right, &o.right),
        }
    }
}

/// Face-centered velocity with its tangential wall data.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    pub ux: ScalarField,
    pub uy: ScalarField,
    pub traces: WallTraces,
}

impl VectorField {
    pub fn zeros(grid: StaggeredGrid) -> Self {
        Self {
            ux: ScalarField::zeros(grid, Location::XFace),
            uy: ScalarField::zeros(grid, Location::YFace),
            traces: WallTraces::zeros(&grid),
        }
    }

    pub fn from_fn(grid: StaggeredGrid, f: impl Fn(Point) -> [f64; 2]) -> Self {
        Self {
            ux: ScalarField::from_fn(grid, Location::XFace, |p| f(p)[0]),
            uy: ScalarField::from_fn(grid, Location::YFace, |p| f(p)[1]),
            traces: WallTraces::from_fn(&grid, &f),
        }
    }

    pub fn grid(&self) -> StaggeredGrid {
        self.ux.grid
    }

    pub fn max_abs(&self) -> f64 {
        self.ux.max_abs().max(self.uy.max_abs())
    }

    pub fn is_finite(&self) -> bool {
        self.ux.is_finite() && self.uy.is_finite()
    }

    pub fn zip_map(&self, o: &Self, f: impl Fn(f64, f64) -> f64 + Copy) -> Self {
        Self { ux: self.ux.zip_map(&o.ux, f), uy: self.uy.zip_map(&o.uy, f), traces: self.traces.zip(&o.traces, f) }
    }

    pub fn sub(&self, o: &Self) -> Self {
        self.zip_map(o, |a, b| a - b)
    }

    pub fn add(&self, o: &Self) -> Self {
        self.zip_map(o, |a, b| a + b)
    }

    /// Bilinear velocity at an arbitrary point.
    pub fn sample(&self, p: Point) -> [f64; 2] {
        [self.ux.sample(p), self.uy.sample(p)]
    }

    /// Velocity interpolated to the cell center `(i, j)`.
    pub fn center_value(&self, i: usize, j: usize) -> [f64; 2] {
        [0.5 * (self.ux.at(i, j) + self.ux.at(i + 1, j)), 0.5 * (self.uy.at(i, j) + self.uy.at(i, j + 1))]
    }
}

/// Symmetric 2x2 tensor per cell center.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    pub xx: ScalarField,
    pub xy: ScalarField,
    pub yy: ScalarField,
}

impl TensorField {
    pub fn zeros(grid: StaggeredGrid) -> Self {
        Self {
            xx: ScalarField::zeros(grid, Location::Center),
            xy: ScalarField::zeros(grid, Location::Center),
            yy: ScalarField::zeros(grid, Location::Center),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.xx.max_abs().max(self.xy.max_abs()).max(self.yy.max_abs())
    }

    /// Tensor at an arbitrary point, bilinear in each component.
    pub fn sample(&self, p: Point) -> [[f64; 2]; 2] {
        let xy = self.xy.sample(p);
        [[self.xx.sample(p), xy], [xy, self.yy.sample(p)]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_coarse_meshes() {
        assert!(StaggeredGrid::new(4, 16, 1.0, 1.0).is_err());
        let g = StaggeredGrid::new(16, 32, 2.0, 1.0).unwrap();
        assert_eq!(g.dx * 16.0, 2.0);
        assert_eq!(g.shape(Location::XFace), (17, 32));
        assert_eq!(g.shape(Location::YFace), (16, 33));
    }

    #[test]
    fn bilinear_sample_reproduces_affine_fields() {
        let g = StaggeredGrid::new(10, 12, 1.0, 1.2).unwrap();
        for loc in [Location::Center, Location::XFace, Location::YFace, Location::Node] {
            let f = ScalarField::from_fn(g, loc, |p| 2.0 * p[0] - 3.0 * p[1] + 0.5);
            let p = [0.437, 0.611];
            assert!((f.sample(p) - (2.0 * p[0] - 3.0 * p[1] + 0.5)).abs() < 1e-12);
        }
    }
}
