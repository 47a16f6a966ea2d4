//! Domain, boundary data, cut-offs and signed distances.

mod extension;
mod shapes;

pub use extension::{build_extension, check_extension, ExtensionCheck, ExtensionReport};
pub use shapes::{erode, polygon_is_simple, polygon_signed_distance, signed_distance_primitive, Shape};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::fields::{Point, StaggeredGrid, VectorField};

/// Rectangle `[0, lx] x [0, ly]` with collision margin `h` and the collar
/// width used by the boundary-velocity extension (support inside
/// `U_{2 collar}`, nonnegative divergence in `U_{collar}`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub lx: f64,
    pub ly: f64,
    pub h: f64,
    pub collar: f64,
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lx > 0.0 && self.ly > 0.0) {
            return Err(SimError::InvalidParams("domain extents must be positive".into()));
        }
        let half = 0.5 * self.lx.min(self.ly);
        if !(self.h > 0.0) || 2.0 * self.h >= half {
            return Err(SimError::CollarTooWide { collar: 2.0 * self.h, half_width: half });
        }
        if !(self.collar > 0.0) || 2.0 * self.collar > half {
            return Err(SimError::CollarTooWide { collar: 2.0 * self.collar, half_width: half });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Wall {
    Left,
    Right,
    Bottom,
    Top,
}

impl Wall {
    pub const ALL: [Wall; 4] = [Wall::Left, Wall::Right, Wall::Bottom, Wall::Top];

    /// Outward unit normal.
    pub fn normal(self) -> [f64; 2] {
        match self {
            Wall::Left => [-1.0, 0.0],
            Wall::Right => [1.0, 0.0],
            Wall::Bottom => [0.0, -1.0],
            Wall::Top => [0.0, 1.0],
        }
    }
}

/// A face of the MAC grid lying on the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryFace {
    pub wall: Wall,
    /// Index along the wall (row for left/right, column for bottom/top).
    pub along: usize,
    /// Adjacent interior cell.
    pub cell: (usize, usize),
    pub center: Point,
    /// Face length.
    pub area: f64,
}

/// Boundary faces in a fixed order: left, right, bottom, top.
pub fn boundary_faces(grid: &StaggeredGrid) -> Vec<BoundaryFace> {
    let (nx, ny) = (grid.nx, grid.ny);
    let mut out = Vec::with_capacity(2 * (nx + ny));
    for j in 0..ny {
        let y = (j as f64 + 0.5) * grid.dy;
        out.push(BoundaryFace { wall: Wall::Left, along: j, cell: (0, j), center: [0.0, y], area: grid.dy });
    }
    for j in 0..ny {
        let y = (j as f64 + 0.5) * grid.dy;
        out.push(BoundaryFace {
            wall: Wall::Right,
            along: j,
            cell: (nx - 1, j),
            center: [grid.lx(), y],
            area: grid.dy,
        });
    }
    for i in 0..nx {
        let x = (i as f64 + 0.5) * grid.dx;
        out.push(BoundaryFace { wall: Wall::Bottom, along: i, cell: (i, 0), center: [x, 0.0], area: grid.dx });
    }
    for i in 0..nx {
        let x = (i as f64 + 0.5) * grid.dx;
        out.push(BoundaryFace { wall: Wall::Top, along: i, cell: (i, ny - 1), center: [x, grid.ly()], area: grid.dx });
    }
    out
}

/// Velocity stored on a boundary face of `u`.
pub fn face_velocity(u: &VectorField, f: &BoundaryFace) -> [f64; 2] {
    let g = u.grid();
    match f.wall {
        Wall::Left => [u.ux.at(0, f.along), 0.5 * (u.traces.left[f.along] + u.traces.left[f.along + 1])],
        Wall::Right => [u.ux.at(g.nx, f.along), 0.5 * (u.traces.right[f.along] + u.traces.right[f.along + 1])],
        Wall::Bottom => [0.5 * (u.traces.bottom[f.along] + u.traces.bottom[f.along + 1]), u.uy.at(f.along, 0)],
        Wall::Top => [0.5 * (u.traces.top[f.along] + u.traces.top[f.along + 1]), u.uy.at(f.along, g.ny)],
    }
}

/// Splits faces into inflow (`u_B . n < 0`) and outflow (`u_B . n >= 0`).
pub fn classify_boundary(u_b: &[[f64; 2]], normals: &[[f64; 2]]) -> (Vec<bool>, Vec<bool>) {
    assert_eq!(u_b.len(), normals.len());
    let inflow: Vec<bool> = u_b.iter().zip(normals).map(|(u, n)| u[0] * n[0] + u[1] * n[1] < 0.0).collect();
    let outflow = inflow.iter().map(|b| !b).collect();
    (inflow, outflow)
}

/// Prescribed boundary velocity and density together with the interior
/// extension `u_inf`.
#[derive(Debug, Clone)]
pub struct BoundaryData {
    pub faces: Vec<BoundaryFace>,
    /// Boundary normal faces and wall traces carry `u_B`; interior faces are zero.
    pub u_b: VectorField,
    /// `u_B . n` per face.
    pub q: Vec<f64>,
    pub rho_b: Vec<f64>,
    pub in_mask: Vec<bool>,
    pub out_mask: Vec<bool>,
    pub u_inf: VectorField,
    pub extension: ExtensionReport,
}

impl BoundaryData {
    pub fn new(
        domain: &DomainSpec,
        grid: StaggeredGrid,
        u_b: impl Fn(Wall, Point) -> [f64; 2],
        rho_b: impl Fn(Wall, Point) -> f64,
    ) -> Result<Self> {
        domain.validate()?;
        let faces = boundary_faces(&grid);
        let mut field = VectorField::zeros(grid);
        for f in &faces {
            let v = u_b(f.wall, f.center);
            match f.wall {
                Wall::Left => field.ux.set(0, f.along, v[0]),
                Wall::Right => field.ux.set(grid.nx, f.along, v[0]),
                Wall::Bottom => field.uy.set(f.along, 0, v[1]),
                Wall::Top => field.uy.set(f.along, grid.ny, v[1]),
            }
        }
        for i in 0..=grid.nx {
            let x = i as f64 * grid.dx;
            field.traces.bottom[i] = u_b(Wall::Bottom, [x, 0.0])[0];
            field.traces.top[i] = u_b(Wall::Top, [x, grid.ly()])[0];
        }
        for j in 0..=grid.ny {
            let y = j as f64 * grid.dy;
            field.traces.left[j] = u_b(Wall::Left, [0.0, y])[1];
            field.traces.right[j] = u_b(Wall::Right, [grid.lx(), y])[1];
        }
        let rho: Vec<f64> = faces.iter().map(|f| rho_b(f.wall, f.center)).collect();
        let (u_inf, extension) = build_extension(&field, domain.collar)?;
        let mut bd = Self {
            faces,
            u_b: field,
            q: Vec::new(),
            rho_b: rho,
            in_mask: Vec::new(),
            out_mask: Vec::new(),
            u_inf,
            extension,
        };
        bd.reclassify();
        bd.check_density()?;
        Ok(bd)
    }

    fn reclassify(&mut self) {
        let vel: Vec<[f64; 2]> = self.faces.iter().map(|f| face_velocity(&self.u_b, f)).collect();
        let normals: Vec<[f64; 2]> = self.faces.iter().map(|f| f.wall.normal()).collect();
        self.q = vel.iter().zip(&normals).map(|(u, n)| u[0] * n[0] + u[1] * n[1]).collect();
        let (i, o) = classify_boundary(&vel, &normals);
        self.in_mask = i;
        self.out_mask = o;
    }

    fn check_density(&self) -> Result<()> {
        for (k, r) in self.rho_b.iter().enumerate() {
            if !(r.is_finite() && *r >= 0.0) || (self.in_mask[k] && *r <= 0.0) {
                return Err(SimError::InvalidParams(format!(
                    "boundary density {r} at face {k} must be positive on inflow faces"
                )));
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> StaggeredGrid {
        self.u_b.grid()
    }

    /// Replaces the boundary density (time-dependent data).
    pub fn set_rho_b(&mut self, rho_b: impl Fn(Wall, Point) -> f64) -> Result<()> {
        self.rho_b = self.faces.iter().map(|f| rho_b(f.wall, f.center)).collect();
        self.check_density()
    }

    /// Smallest boundary density on the inflow part.
    pub fn rho_b_lower(&self) -> f64 {
        self.rho_b.iter().zip(&self.in_mask).filter(|(_, m)| **m).map(|(r, _)| *r).fold(f64::INFINITY, f64::min)
    }

    /// Overwrites the boundary normal faces and wall traces of `u` with `u_B`.
    pub fn apply_dirichlet(&self, u: &mut VectorField) {
        let g = self.grid();
        for j in 0..g.ny {
            u.ux.set(0, j, self.u_b.ux.at(0, j));
            u.ux.set(g.nx, j, self.u_b.ux.at(g.nx, j));
        }
        for i in 0..g.nx {
            u.uy.set(i, 0, self.u_b.uy.at(i, 0));
            u.uy.set(i, g.ny, self.u_b.uy.at(i, g.ny));
        }
        u.traces = self.u_b.traces.clone();
    }
}

/// `C^2` cut-off: zero within `inner` of the wall, one beyond `outer`,
/// quintic smoothstep in between.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffProfile {
    pub inner: f64,
    pub outer: f64,
}

impl CutoffProfile {
    /// Profile vanishing on `U_{h/2}` and equal to one outside `U_h`.
    pub fn for_margin(h: f64) -> Self {
        Self { inner: 0.5 * h, outer: h }
    }

    pub fn value(&self, wall_distance: f64) -> f64 {
        let t = ((wall_distance - self.inner) / (self.outer - self.inner)).clamp(0.0, 1.0);
        t * t * t * (t * (6.0 * t - 15.0) + 10.0)
    }

    /// Derivative with respect to the wall distance.
    pub fn slope(&self, wall_distance: f64) -> f64 {
        let w = self.outer - self.inner;
        let t = (wall_distance - self.inner) / w;
        if !(0.0..=1.0).contains(&t) {
            return 0.0;
        }
        30.0 * t * t * (t - 1.0) * (t - 1.0) / w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_examples() {
        let (i, o) = classify_boundary(&[[0.2, 0.0], [0.2, 0.0], [0.0, 0.0]], &[[-1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(i, vec![true, false, false]);
        assert_eq!(o, vec![false, true, true]);
    }

    #[test]
    fn classification_partitions_every_face() {
        let d = DomainSpec { lx: 1.0, ly: 1.0, h: 0.1, collar: 0.05 };
        let g = StaggeredGrid::new(32, 32, 1.0, 1.0).unwrap();
        let bd = BoundaryData::new(&d, g, |_, p| [(p[1] * 9.0).sin(), (p[0] * 5.0).cos()], |_, _| 1.0).unwrap();
        assert_eq!(bd.in_mask.len(), 4 * 32);
        assert!(bd.in_mask.iter().zip(&bd.out_mask).all(|(a, b)| a ^ b));
    }

    #[test]
    fn cutoff_is_zero_inside_and_one_outside() {
        let c = CutoffProfile::for_margin(0.1);
        assert_eq!(c.value(0.0), 0.0);
        assert_eq!(c.value(0.05), 0.0);
        assert_eq!(c.value(0.1), 1.0);
        assert_eq!(c.value(0.7), 1.0);
        let mut prev = 0.0;
        for k in 0..=100 {
            let v = c.value(0.05 + 0.05 * k as f64 / 100.0);
            assert!((0.0..=1.0).contains(&v) && v >= prev);
            prev = v;
        }
        // C1 at the ends
        assert!(c.slope(0.05).abs() < 1e-12 && c.slope(0.1).abs() < 1e-12);
    }

    #[test]
    fn domain_rejects_wide_collars() {
        let d = DomainSpec { lx: 1.0, ly: 1.0, h: 0.3, collar: 0.05 };
        assert!(matches!(d.validate(), Err(SimError::CollarTooWide { .. })));
        let d = DomainSpec { lx: 1.0, ly: 1.0, h: 0.1, collar: 0.3 };
        assert!(matches!(d.validate(), Err(SimError::CollarTooWide { .. })));
    }

    #[test]
    fn inflow_density_must_be_positive() {
        let d = DomainSpec { lx: 1.0, ly: 1.0, h: 0.1, collar: 0.05 };
        let g = StaggeredGrid::new(16, 16, 1.0, 1.0).unwrap();
        let r = BoundaryData::new(&d, g, |w, _| if w == Wall::Left { [0.2, 0.0] } else { [0.0, 0.0] }, |_, _| 0.0);
        assert!(r.is_err());
    }
}
