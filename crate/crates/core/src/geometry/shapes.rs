use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::fields::Point;

/// Primitive solid shapes. Signed distances are positive inside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Shape {
    Disc {
        center: Point,
        radius: f64,
    },
    /// Rectangle with half-widths `half`, rotated by `angle` about its center.
    Rectangle {
        center: Point,
        half: [f64; 2],
        angle: f64,
    },
}

impl Shape {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Shape::Disc { radius, .. } if !(radius > 0.0 && radius.is_finite()) => {
                Err(SimError::InvalidShape(format!("disc radius {radius} must be positive")))
            }
            Shape::Rectangle { half, .. } if !(half[0] > 0.0 && half[1] > 0.0) => {
                Err(SimError::InvalidShape(format!("rectangle half-widths {half:?} must be positive")))
            }
            _ => Ok(()),
        }
    }

    pub fn center(&self) -> Point {
        match *self {
            Shape::Disc { center, .. } | Shape::Rectangle { center, .. } => center,
        }
    }

    /// Radius of the largest inscribed disc.
    pub fn inradius(&self) -> f64 {
        match *self {
            Shape::Disc { radius, .. } => radius,
            Shape::Rectangle { half, .. } => half[0].min(half[1]),
        }
    }

    /// Largest distance from the center to the boundary.
    pub fn circumradius(&self) -> f64 {
        match *self {
            Shape::Disc { radius, .. } => radius,
            Shape::Rectangle { half, .. } => half[0].hypot(half[1]),
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Shape::Disc { radius, .. } => std::f64::consts::PI * radius * radius,
            Shape::Rectangle { half, .. } => 4.0 * half[0] * half[1],
        }
    }

    /// The same shape with its center moved to `center` and rotated to `angle`.
    pub fn placed(&self, center: Point, angle: f64) -> Shape {
        match *self {
            Shape::Disc { radius, .. } => Shape::Disc { center, radius },
            Shape::Rectangle { half, .. } => Shape::Rectangle { center, half, angle },
        }
    }

    /// Distance from the shape to the rectangle `[0,lx] x [0,ly]` boundary,
    /// assuming the shape lies inside.
    pub fn wall_clearance(&self, lx: f64, ly: f64) -> f64 {
        match *self {
            Shape::Disc { center, radius } => center[0].min(lx - center[0]).min(center[1]).min(ly - center[1]) - radius,
            Shape::Rectangle { center, half, angle } => {
                let (s, c) = angle.sin_cos();
                let ex = (c * half[0]).abs() + (s * half[1]).abs();
                let ey = (s * half[0]).abs() + (c * half[1]).abs();
                (center[0] - ex).min(lx - center[0] - ex).min(center[1] - ey).min(ly - center[1] - ey)
            }
        }
    }
}

pub fn signed_distance_primitive(p: Point, shape: &Shape) -> f64 {
    match *shape {
        Shape::Disc { center, radius } => radius - (p[0] - center[0]).hypot(p[1] - center[1]),
        Shape::Rectangle { center, half, angle } => {
            let (s, c) = angle.sin_cos();
            let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
            let q = [(c * dx + s * dy).abs() - half[0], (-s * dx + c * dy).abs() - half[1]];
            let outside = q[0].max(0.0).hypot(q[1].max(0.0));
            let inside = q[0].max(q[1]).min(0.0);
            -(outside + inside)
        }
    }
}

/// Open `r`-erosion `{x in S : dist(x, dS) > r}`.
pub fn erode(shape: &Shape, r: f64) -> Result<Shape> {
    shape.validate()?;
    if !(r >= 0.0) {
        return Err(SimError::InvalidShape(format!("erosion radius {r} must be nonnegative")));
    }
    let inradius = shape.inradius();
    if r >= inradius {
        return Err(SimError::ErosionEmpty { r, inradius });
    }
    Ok(match *shape {
        Shape::Disc { center, radius } => Shape::Disc { center, radius: radius - r },
        Shape::Rectangle { center, half, angle } => {
            Shape::Rectangle { center, half: [half[0] - r, half[1] - r], angle }
        }
    })
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (ex, ey) = (b[0] - a[0], b[1] - a[1]);
    let len2 = ex * ex + ey * ey;
    let t = if len2 > 0.0 { (((p[0] - a[0]) * ex + (p[1] - a[1]) * ey) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p[0] - a[0] - t * ex).hypot(p[1] - a[1] - t * ey)
}

/// Signed distance to a closed polygon, positive inside (even-odd rule).
pub fn polygon_signed_distance(p: Point, verts: &[Point]) -> f64 {
    let n = verts.len();
    let mut d = f64::INFINITY;
    let mut inside = false;
    for k in 0..n {
        let a = verts[k];
        let b = verts[(k + 1) % n];
        d = d.min(segment_distance(p, a, b));
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    if inside {
        d
    } else {
        -d
    }
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p[0] >= a[0].min(b[0]) && p[0] <= a[0].max(b[0]) && p[1] >= a[1].min(b[1]) && p[1] <= a[1].max(b[1])
}

fn segments_touch(a: Point, b: Point, c: Point, d: Point) -> bool {
    let (o1, o2, o3, o4) = (orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b));
    if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

/// True when no two non-adjacent edges of the closed polygon meet.
pub fn polygon_is_simple(verts: &[Point]) -> bool {
    let n = verts.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let (a, b) = (verts[i], verts[(i + 1) % n]);
        for j in i + 1..n {
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            let (c, d) = (verts[j], verts[(j + 1) % n]);
            if segments_touch(a, b, c, d) {
                return false;
            }
        }
    }
    true
}
