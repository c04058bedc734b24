//! On-disk formats: trajectory CSV, text snapshots, check records and the
//! run manifest.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::CheckReport;
use crate::error::{Error, Result};
use crate::grid::{ConeGrid, DiscreteOperators, TipBc};
use crate::stepper::Row;

pub const TRAJECTORY_HEADER: &str = "step,t,dt,J,I,S,H2,Linf";
pub const SNAPSHOT_VERSION: u32 = 1;

pub fn write_trajectory_csv<W: Write>(mut w: W, rows: &[Row]) -> Result<()> {
    writeln!(w, "{TRAJECTORY_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.step, r.t, r.dt, r.j, r.i, r.s, r.h2, r.linf
        )?;
    }
    Ok(())
}

fn parse_f64(field: &str, line: usize) -> Result<f64> {
    field.trim().parse().map_err(|_| Error::Parse(format!("line {line}: bad number `{field}`")))
}

pub fn read_trajectory_csv<R: BufRead>(r: R) -> Result<Vec<Row>> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty trajectory file".into()))??;
    if header.trim() != TRAJECTORY_HEADER {
        return Err(Error::Parse(format!("unexpected trajectory header `{header}`")));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(Error::Parse(format!("line {}: expected 8 fields, got {}", n + 2, f.len())));
        }
        let step = f[0].trim().parse().map_err(|_| Error::Parse(format!("line {}: bad step `{}`", n + 2, f[0])))?;
        rows.push(Row {
            step,
            t: parse_f64(f[1], n + 2)?,
            dt: parse_f64(f[2], n + 2)?,
            j: parse_f64(f[3], n + 2)?,
            i: parse_f64(f[4], n + 2)?,
            s: parse_f64(f[5], n + 2)?,
            h2: parse_f64(f[6], n + 2)?,
            linf: parse_f64(f[7], n + 2)?,
        });
    }
    Ok(rows)
}

/// Header of a text snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotHeader {
    pub version: u32,
    pub depth: f64,
    pub ns: usize,
    pub ntheta: usize,
    pub tip_bc: TipBc,
    pub t: f64,
}

impl SnapshotHeader {
    pub fn for_grid(grid: &ConeGrid, t: f64) -> Self {
        SnapshotHeader {
            version: SNAPSHOT_VERSION,
            depth: grid.depth(),
            ns: grid.ns(),
            ntheta: grid.ntheta(),
            tip_bc: grid.tip_bc(),
            t,
        }
    }

    /// Whether the snapshot was taken on a grid of this shape.
    pub fn matches(&self, grid: &ConeGrid) -> bool {
        self.depth == grid.depth()
            && self.ns == grid.ns()
            && self.ntheta == grid.ntheta()
            && self.tip_bc == grid.tip_bc()
    }

    fn node_count(&self) -> usize {
        let rows = match self.tip_bc {
            TipBc::NeumannTip => self.ns,
            TipBc::DirichletTip => self.ns - 1,
        };
        rows * self.ntheta
    }
}

pub fn write_snapshot<W: Write>(mut w: W, header: &SnapshotHeader, values: &[f64]) -> Result<()> {
    if values.len() != header.node_count() {
        return Err(Error::ShapeMismatch { expected: header.node_count(), got: values.len() });
    }
    writeln!(w, "version {}", header.version)?;
    writeln!(w, "L {:.16e}", header.depth)?;
    writeln!(w, "Ns {}", header.ns)?;
    writeln!(w, "Ntheta {}", header.ntheta)?;
    writeln!(w, "tip_bc {}", header.tip_bc)?;
    writeln!(w, "t {:.16e}", header.t)?;
    for v in values {
        writeln!(w, "{v:.16e}")?;
    }
    Ok(())
}

pub fn read_snapshot<R: BufRead>(r: R) -> Result<(SnapshotHeader, Vec<f64>)> {
    let mut lines = r.lines();
    let mut field = |key: &str| -> Result<String> {
        let line = lines.next().ok_or_else(|| Error::Parse(format!("snapshot ends before `{key}`")))??;
        let (k, v) = line.split_once(' ').ok_or_else(|| Error::Parse(format!("snapshot header line `{line}`")))?;
        if k != key {
            return Err(Error::Parse(format!("expected `{key}`, found `{k}`")));
        }
        Ok(v.trim().to_string())
    };
    let bad = |what: &str, v: &str| Error::Parse(format!("snapshot {what} `{v}`"));
    let version: u32 = field("version").and_then(|v| v.parse().map_err(|_| bad("version", &v)))?;
    if version != SNAPSHOT_VERSION {
        return Err(Error::Unsupported(format!("snapshot version {version}")));
    }
    let depth: f64 = field("L").and_then(|v| v.parse().map_err(|_| bad("L", &v)))?;
    let ns: usize = field("Ns").and_then(|v| v.parse().map_err(|_| bad("Ns", &v)))?;
    let ntheta: usize = field("Ntheta").and_then(|v| v.parse().map_err(|_| bad("Ntheta", &v)))?;
    let tip_bc: TipBc = field("tip_bc")?.parse()?;
    let t: f64 = field("t").and_then(|v| v.parse().map_err(|_| bad("t", &v)))?;
    let header = SnapshotHeader { version, depth, ns, ntheta, tip_bc, t };
    if ns < 4 || ntheta < 4 {
        return Err(Error::UndersizedGrid(format!("snapshot grid {ns} x {ntheta}")));
    }
    let mut values = Vec::with_capacity(header.node_count());
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        values.push(line.trim().parse().map_err(|_| bad("value", &line))?);
    }
    if values.len() != header.node_count() {
        return Err(Error::ShapeMismatch { expected: header.node_count(), got: values.len() });
    }
    Ok((header, values))
}

pub fn write_checks_jsonl<W: Write>(mut w: W, reports: &[CheckReport]) -> Result<()> {
    for r in reports {
        writeln!(w, "{}", r.to_record())?;
    }
    Ok(())
}

pub fn read_checks_jsonl<R: BufRead>(r: R) -> Result<Vec<CheckReport>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(CheckReport::from_record(&line)?);
        }
    }
    Ok(out)
}

/// SHA-256 of the lumped mass and of the stiffness pattern with values,
/// both over little-endian bytes.
pub fn operator_checksums(ops: &DiscreteOperators) -> (String, String) {
    let mut m = Sha256::new();
    for v in ops.mass() {
        m.update(v.to_le_bytes());
    }
    let mut k = Sha256::new();
    let stiff = ops.stiffness();
    for i in 0..stiff.dim() {
        for (j, v) in stiff.row(i) {
            k.update((i as u64).to_le_bytes());
            k.update((j as u64).to_le_bytes());
            k.update(v.to_le_bytes());
        }
    }
    (hex::encode(m.finalize()), hex::encode(k.finalize()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    #[serde(rename = "L")]
    pub depth: f64,
    #[serde(rename = "Ns")]
    pub ns: usize,
    #[serde(rename = "Ntheta")]
    pub ntheta: usize,
    pub tip_bc: TipBc,
    pub measure: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub grid: GridRecord,
    pub mass_sha256: String,
    pub stiffness_sha256: String,
    pub outcome: String,
    pub failure: Option<String>,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(
        grid: &ConeGrid,
        ops: &DiscreteOperators,
        outcome: String,
        failure: Option<String>,
        files: Vec<String>,
    ) -> Self {
        let (mass_sha256, stiffness_sha256) = operator_checksums(ops);
        Manifest {
            version: 1,
            grid: GridRecord {
                depth: grid.depth(),
                ns: grid.ns(),
                ntheta: grid.ntheta(),
                tip_bc: grid.tip_bc(),
                measure: grid.measure(),
                nodes: grid.len(),
            },
            mass_sha256,
            stiffness_sha256,
            outcome,
            failure,
            files,
        }
    }
}
