//! Plain-text dump of an assembled linear system for offline debugging.
//!
//! Format (documented in `docs/formats.md`): a header line
//! `n <N> block <B> cells <n_cells> wells <n_wells>`, one line `A <row> <col>
//! <value>` per nonzero matrix scalar, then one line `b <row> <value>` per
//! right-hand-side entry. Indices are zero-based.

use super::block::BlockMatrix;
use crate::scalar::{to_f64, Scalar};
use std::io::{self, BufRead, Write};

pub fn write_system<S: Scalar, W: Write>(
    out: &mut W,
    a: &BlockMatrix<S>,
    b: &[S],
) -> io::Result<()> {
    let csr = a.to_scalar_csr();
    writeln!(out, "n {} block {} cells {} wells {}", csr.n, super::block::BLOCK, a.n_cells, a.n_wells)?;
    for row in 0..csr.n {
        for p in csr.row_ptr[row]..csr.row_ptr[row + 1] {
            let v = csr.vals[p];
            if v != S::zero() {
                writeln!(out, "A {} {} {:.17e}", row, csr.col_idx[p], to_f64(v))?;
            }
        }
    }
    for (row, v) in b.iter().enumerate() {
        writeln!(out, "b {} {:.17e}", row, to_f64(*v))?;
    }
    Ok(())
}

/// A system read back from the dump format, in triplet form.
#[derive(Debug, Clone)]
pub struct DumpedSystem {
    pub n: usize,
    pub block: usize,
    pub n_cells: usize,
    pub n_wells: usize,
    pub triplets: Vec<(usize, usize, f64)>,
    pub rhs: Vec<f64>,
}

pub fn read_system<R: BufRead>(input: R) -> io::Result<DumpedSystem> {
    let bad = |msg: &str| io::Error::new(io::ErrorKind::InvalidData, msg.to_string());
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| bad("empty dump"))??;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 8 || toks[0] != "n" || toks[2] != "block" || toks[4] != "cells" || toks[6] != "wells" {
        return Err(bad("malformed dump header"));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| bad("bad integer in header"));
    let n = parse(toks[1])?;
    let block = parse(toks[3])?;
    let n_cells = parse(toks[5])?;
    let n_wells = parse(toks[7])?;
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0f64; n];
    for line in lines {
        let line = line?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["A", r, c, v] => {
                let r: usize = r.parse().map_err(|_| bad("bad row index"))?;
                let c: usize = c.parse().map_err(|_| bad("bad col index"))?;
                let v: f64 = v.parse().map_err(|_| bad("bad value"))?;
                triplets.push((r, c, v));
            }
            ["b", r, v] => {
                let r: usize = r.parse().map_err(|_| bad("bad rhs index"))?;
                rhs[r] = v.parse().map_err(|_| bad("bad rhs value"))?;
            }
            [] => {}
            _ => return Err(bad("unrecognized dump line")),
        }
    }
    Ok(DumpedSystem { n, block, n_cells, n_wells, triplets, rhs })
}
