//! Field files and CSV tables.
//!
//! Binary layout (little-endian): the magic `HLFIELD1`, a `u32` dimension,
//! then per axis a `u64` node count and the `f64` lower bound, upper bound and
//! spacing, then one mask byte per node (0 or 1), then the node values as
//! `f64` in row-major order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{BoxDomain, Grid, GridFunction};

pub const FIELD_MAGIC: &[u8; 8] = b"HLFIELD1";

pub fn field_to_bytes(u: &GridFunction) -> Vec<u8> {
    let g = u.grid();
    let mut out = Vec::with_capacity(12 + 32 * g.dim() + 9 * g.len());
    out.extend_from_slice(FIELD_MAGIC);
    out.extend_from_slice(&(g.dim() as u32).to_le_bytes());
    for k in 0..g.dim() {
        out.extend_from_slice(&(g.counts()[k] as u64).to_le_bytes());
        out.extend_from_slice(&g.lower()[k].to_le_bytes());
        out.extend_from_slice(&g.upper()[k].to_le_bytes());
        out.extend_from_slice(&g.spacing()[k].to_le_bytes());
    }
    out.extend(u.mask().iter().map(|&m| m as u8));
    for v in u.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn field_from_bytes(buf: &[u8]) -> Result<GridFunction> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != FIELD_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let dim = r.u32()? as usize;
    if dim == 0 || dim > 16 {
        return Err(Error::Format(format!("unsupported dimension {dim}")));
    }
    let (mut counts, mut lower, mut upper, mut spacing) = (vec![], vec![], vec![], vec![]);
    for _ in 0..dim {
        counts.push(usize::try_from(r.u64()?).map_err(|_| Error::Format("count overflow".into()))?);
        lower.push(r.f64()?);
        upper.push(r.f64()?);
        spacing.push(r.f64()?);
    }
    let domain = BoxDomain::new(lower, upper).map_err(|e| Error::Format(e.to_string()))?;
    let grid = Grid::new(domain, counts).map_err(|e| Error::Format(e.to_string()))?;
    if grid.spacing() != spacing.as_slice() {
        return Err(Error::Format("spacing does not match bounds and counts".into()));
    }
    let n = grid.len();
    let mask = r
        .take(n)?
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(Error::Format(format!("bad mask byte {b}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let values = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    if r.pos != buf.len() {
        return Err(Error::Format(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    GridFunction::with_mask(grid, values, mask)
}

pub fn write_field(path: &Path, u: &GridFunction) -> Result<()> {
    fs::write(path, field_to_bytes(u))?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<GridFunction> {
    field_from_bytes(&fs::read(path)?)
}

/// One row per node: coordinates, mask flag, value. Floats use the shortest
/// representation that parses back to the same bits.
pub fn field_to_csv(u: &GridFunction) -> String {
    let g = u.grid();
    let mut s = String::new();
    for k in 0..g.dim() {
        let _ = write!(s, "x{k},");
    }
    s.push_str("mask,value\n");
    let mut x = vec![0.0; g.dim()];
    for node in 0..g.len() {
        g.coords_into(node, &mut x);
        for v in &x {
            let _ = write!(s, "{v:?},");
        }
        let _ = writeln!(s, "{},{:?}", u.mask()[node] as u8, u.value(node));
    }
    s
}

/// Header line plus rows.
pub fn table_to_csv(header: &[&str], rows: &[Vec<f64>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}
