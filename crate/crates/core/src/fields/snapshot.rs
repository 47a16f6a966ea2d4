//! Plain structured-grid snapshots.
//!
//! ```text
//! nx <cells in x>
//! ny <cells in y>
//! dx <spacing>
//! dy <spacing>
//! location <center|xface|yface|node>
//! <row j = 0: values separated by single spaces>
//! ...
//! ```
//!
//! Values use Rust's shortest round-trip formatting, so a read after a
//! write restores every bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Location, ScalarField, StaggeredGrid};
use crate::error::{Result, SimError};

pub fn write_snapshot(path: &Path, f: &ScalarField) -> Result<()> {
    let g = f.grid;
    let mut s = String::new();
    let _ = writeln!(s, "nx {}", g.nx);
    let _ = writeln!(s, "ny {}", g.ny);
    let _ = writeln!(s, "dx {:?}", g.dx);
    let _ = writeln!(s, "dy {:?}", g.dy);
    let _ = writeln!(s, "location {}", f.loc.tag());
    for row in f.data.chunks(f.width()) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<ScalarField> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let mut header = |key: &str| -> Result<String> {
        let line = lines.next().ok_or_else(|| SimError::Io(format!("snapshot truncated before `{key}`")))?;
        let (k, v) = line.split_once(' ').ok_or_else(|| SimError::Io(format!("malformed header line `{line}`")))?;
        if k != key {
            return Err(SimError::Io(format!("expected `{key}`, found `{k}`")));
        }
        Ok(v.trim().to_string())
    };
    let parse_err = |e: &dyn std::fmt::Display| SimError::Io(format!("snapshot parse: {e}"));
    let nx: usize = header("nx")?.parse().map_err(|e| parse_err(&e))?;
    let ny: usize = header("ny")?.parse().map_err(|e| parse_err(&e))?;
    let dx: f64 = header("dx")?.parse().map_err(|e| parse_err(&e))?;
    let dy: f64 = header("dy")?.parse().map_err(|e| parse_err(&e))?;
    let tag = header("location")?;
    let loc = Location::from_tag(&tag).ok_or_else(|| SimError::Io(format!("unknown location `{tag}`")))?;
    let grid = StaggeredGrid { nx, ny, dx, dy };
    let mut data = Vec::with_capacity(grid.len(loc));
    for line in lines {
        for tok in line.split_whitespace() {
            data.push(tok.parse::<f64>().map_err(|e| parse_err(&e))?);
        }
    }
    if data.len() != grid.len(loc) {
        return Err(SimError::Io(format!("snapshot has {} values, expected {}", data.len(), grid.len(loc))));
    }
    Ok(ScalarField { grid, loc, data })
}

/// Legacy VTK image data (ASCII). Cell-centered fields become CELL_DATA on
/// the node lattice; other locations are written as POINT_DATA on their own
/// lattice with the matching origin shift.
pub fn write_vtk(path: &Path, name: &str, f: &ScalarField) -> Result<()> {
    let g = f.grid;
    let mut s = String::new();
    let _ = writeln!(s, "# vtk DataFile Version 3.0\n{name}\nASCII\nDATASET STRUCTURED_POINTS");
    let (w, h) = (f.width(), f.height());
    match f.loc {
        Location::Center => {
            let _ = writeln!(s, "DIMENSIONS {} {} 1", g.nx + 1, g.ny + 1);
            let _ = writeln!(s, "ORIGIN 0 0 0\nSPACING {:?} {:?} 1", g.dx, g.dy);
            let _ = writeln!(s, "CELL_DATA {}", w * h);
        }
        loc => {
            let o = g.position(loc, 0, 0);
            let _ = writeln!(s, "DIMENSIONS {w} {h} 1");
            let _ = writeln!(s, "ORIGIN {:?} {:?} 0\nSPACING {:?} {:?} 1", o[0], o[1], g.dx, g.dy);
            let _ = writeln!(s, "POINT_DATA {}", w * h);
        }
    }
    let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
    for v in &f.data {
        let _ = writeln!(s, "{v:?}");
    }
    fs::write(path, s)?;
    Ok(())
}
