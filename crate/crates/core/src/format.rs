//! File formats: chain files (JSON) and run-length encoded cell sets.
//!
//! Doubles are printed in shortest round-trip form, so writing and reading a
//! chain reproduces every coefficient bit for bit.

use serde::{Deserialize, Serialize};

use crate::chain::{Chain, Component};
use crate::poly::BihomPoly;
use crate::relation::CellSet;
use crate::sphere::{AtlasGrid, C64};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentFile {
    bidegree: [usize; 2],
    coeffs: Vec<Vec<[f64; 2]>>,
    mult: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainFile {
    components: Vec<ComponentFile>,
}

/// Byte offset of a 1-based (line, column) position.
fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let start: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    (start + column.saturating_sub(1)).min(text.len())
}

/// Offset of the `k`-th component's `"bidegree"` key, for shape errors that
/// serde cannot locate.
fn component_offset(text: &str, k: usize) -> usize {
    text.match_indices("\"bidegree\"")
        .nth(k)
        .map_or(0, |(i, _)| i)
}

pub fn parse_chain(text: &str) -> Result<Chain> {
    let file: ChainFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    if file.components.is_empty() {
        return Err(Error::Parse {
            offset: 0,
            message: "chain has no components".into(),
        });
    }
    let mut comps = Vec::with_capacity(file.components.len());
    for (k, c) in file.components.iter().enumerate() {
        let bad = |message: String| Error::Parse {
            offset: component_offset(text, k),
            message: format!("component {k}: {message}"),
        };
        let [dz, dw] = c.bidegree;
        if c.coeffs.len() != dz + 1 || c.coeffs.iter().any(|r| r.len() != dw + 1) {
            return Err(bad(format!(
                "coefficient table must be {} rows of {} entries",
                dz + 1,
                dw + 1
            )));
        }
        if c.coeffs.iter().flatten().flatten().any(|x| !x.is_finite()) {
            return Err(bad("non-finite coefficient".into()));
        }
        let rows: Vec<Vec<C64>> = c
            .coeffs
            .iter()
            .map(|r| r.iter().map(|&[re, im]| C64::new(re, im)).collect())
            .collect();
        let poly = BihomPoly::from_rows(&rows).map_err(|e| bad(e.to_string()))?;
        if (poly.dz(), poly.dw()) != (dz, dw) {
            return Err(bad(format!(
                "declared bidegree ({dz}, {dw}) but coefficients have ({}, {})",
                poly.dz(),
                poly.dw()
            )));
        }
        comps.push(Component { poly, mult: c.mult });
    }
    Chain::from_user(comps)
}

pub fn write_chain(c: &Chain) -> String {
    let file = ChainFile {
        components: c
            .components()
            .iter()
            .map(|comp| ComponentFile {
                bidegree: [comp.poly.dz(), comp.poly.dw()],
                coeffs: comp
                    .poly
                    .rows()
                    .iter()
                    .map(|r| r.iter().map(|z| [z.re, z.im]).collect())
                    .collect(),
                mult: comp.mult,
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&file).expect("chain serializes");
    s.push('\n');
    s
}

pub const CELLSET_FORMAT: &str = "corrdyn-cellset/1";

/// Run-length encoded bitmap. Runs alternate starting with absent cells, in
/// cell index order; the grid header fixes the index layout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSetFile {
    pub format: String,
    pub grid: usize,
    pub cells: usize,
    pub runs: Vec<usize>,
}

pub fn encode_cellset(s: &CellSet) -> CellSetFile {
    let mut runs = Vec::new();
    let mut cur = false;
    let mut len = 0;
    for &b in s.bits() {
        if b == cur {
            len += 1;
        } else {
            runs.push(len);
            cur = b;
            len = 1;
        }
    }
    runs.push(len);
    CellSetFile {
        format: CELLSET_FORMAT.into(),
        grid: s.grid().resolution(),
        cells: s.bits().len(),
        runs,
    }
}

pub fn decode_cellset(f: &CellSetFile) -> Result<CellSet> {
    if f.format != CELLSET_FORMAT {
        return Err(Error::InvalidInput(format!("unknown cell set format {:?}", f.format)));
    }
    if f.grid == 0 {
        return Err(Error::InvalidInput("grid resolution must be positive".into()));
    }
    let grid = AtlasGrid::new(f.grid);
    if f.cells != grid.num_cells() || f.runs.iter().sum::<usize>() != f.cells {
        return Err(Error::GridMismatch);
    }
    let mut bits = Vec::with_capacity(f.cells);
    for (k, &r) in f.runs.iter().enumerate() {
        bits.extend(std::iter::repeat_n(k % 2 == 1, r));
    }
    CellSet::from_bits(&grid, bits)
}
