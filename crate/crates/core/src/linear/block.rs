//! Block-compressed sparse Jacobian storage.
//!
//! Cell rows hold dense 4x4 blocks in sorted column order with a cached
//! diagonal; well bottom-hole-pressure unknowns append after all cell blocks
//! as sparse border rows/columns plus a dense diagonal entry. Unknown
//! ordering inside a cell is (p_f, s_wf, p_m, s_wm); global ordering is cell
//! by cell, wells last.

use crate::scalar::Scalar;
use rayon::prelude::*;

/// Unknowns (and equations) per cell.
pub const BLOCK: usize = 4;

/// Fixed block-row chunking shared by assembly, SpMV and the preconditioners.
///
/// Partition boundaries are derived from the grid (contiguous slabs in the
/// slowest axis), never from the active worker count, which keeps every
/// result bitwise reproducible at any thread count. `chunk_ranges` is a finer
/// fixed split used where numerical results do not depend on the grouping.
#[derive(Clone, Debug)]
pub struct Partitioning {
    pub n_cells: usize,
    pub n_wells: usize,
    /// Coarse, numerics-affecting partitions (cell index ranges).
    pub parts: Vec<std::ops::Range<usize>>,
    /// Fine work-splitting chunks (cell index ranges).
    pub chunks: Vec<std::ops::Range<usize>>,
}

impl Partitioning {
    /// Slab partitioning for an nx*ny*nz grid: one part per group of k-layers
    /// (at most `max_parts`), fine chunks of roughly `chunk_cells` cells.
    pub fn for_grid(nx: usize, ny: usize, nz: usize, n_wells: usize, parts_override: Option<usize>) -> Self {
        let n_cells = nx * ny * nz;
        let plane = nx * ny;
        let p = parts_override.unwrap_or_else(|| nz.clamp(1, 16));
        let p = p.clamp(1, nz.max(1));
        let mut parts = Vec::with_capacity(p);
        let mut start_layer = 0usize;
        for i in 0..p {
            let end_layer = start_layer + (nz - start_layer) / (p - i);
            parts.push(start_layer * plane..end_layer * plane);
            start_layer = end_layer;
        }
        parts.retain(|r| !r.is_empty());
        if parts.is_empty() {
            parts.push(0..n_cells);
        }

        let chunk_cells = 512usize;
        let mut chunks = Vec::new();
        let mut c = 0;
        while c < n_cells {
            let end = (c + chunk_cells).min(n_cells);
            chunks.push(c..end);
            c = end;
        }
        if chunks.is_empty() {
            chunks.push(0..0);
        }
        Partitioning { n_cells, n_wells, parts, chunks }
    }

    #[allow(clippy::single_range_in_vec_init)]
    pub fn single(n_cells: usize, n_wells: usize) -> Self {
        Partitioning {
            n_cells,
            n_wells,
            parts: vec![0..n_cells],
            chunks: vec![0..n_cells],
        }
    }

    /// Scalar-row ranges of the coarse partitions; well rows attach to the
    /// last partition.
    pub fn scalar_parts(&self) -> Vec<std::ops::Range<usize>> {
        let n = self.n_cells * BLOCK + self.n_wells;
        let mut out: Vec<_> = self.parts.iter().map(|r| r.start * BLOCK..r.end * BLOCK).collect();
        if let Some(last) = out.last_mut() {
            last.end = n;
        }
        out
    }
}

/// Block-sparse matrix with well borders. Row-major dense 4x4 payloads.
#[derive(Clone, Debug)]
pub struct BlockMatrix<S> {
    pub n_cells: usize,
    pub n_wells: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    diag_idx: Vec<usize>,
    blocks: Vec<[S; BLOCK * BLOCK]>,
    /// Per well: perforated cells (sorted) and d(cell residual)/d(p_bh).
    well_col_cells: Vec<Vec<usize>>,
    well_col_blocks: Vec<Vec<[S; BLOCK]>>,
    /// Per well: d(well residual)/d(cell unknowns), same cell order.
    well_row_blocks: Vec<Vec<[S; BLOCK]>>,
    /// d(well residual)/d(p_bh).
    well_diag: Vec<S>,
}

impl<S: Scalar> BlockMatrix<S> {
    /// Build the sparsity once from the cell adjacency and well perforation
    /// lists; values start at zero and are refilled each assembly.
    pub fn from_pattern(
        n_cells: usize,
        neighbors: &[Vec<usize>],
        well_cells: &[Vec<usize>],
    ) -> Self {
        assert_eq!(neighbors.len(), n_cells);
        let mut row_ptr = Vec::with_capacity(n_cells + 1);
        let mut col_idx = Vec::new();
        let mut diag_idx = Vec::with_capacity(n_cells);
        row_ptr.push(0);
        for (i, nbrs) in neighbors.iter().enumerate() {
            let mut cols: Vec<usize> = nbrs.clone();
            cols.push(i);
            cols.sort_unstable();
            cols.dedup();
            let diag_pos = cols.binary_search(&i).expect("diagonal present");
            diag_idx.push(col_idx.len() + diag_pos);
            col_idx.extend_from_slice(&cols);
            row_ptr.push(col_idx.len());
        }
        let blocks = vec![[S::zero(); BLOCK * BLOCK]; col_idx.len()];
        let mut well_col_cells = Vec::with_capacity(well_cells.len());
        let mut well_col_blocks = Vec::with_capacity(well_cells.len());
        let mut well_row_blocks = Vec::with_capacity(well_cells.len());
        for cells in well_cells {
            let mut sorted = cells.clone();
            sorted.sort_unstable();
            sorted.dedup();
            well_col_blocks.push(vec![[S::zero(); BLOCK]; sorted.len()]);
            well_row_blocks.push(vec![[S::zero(); BLOCK]; sorted.len()]);
            well_col_cells.push(sorted);
        }
        BlockMatrix {
            n_cells,
            n_wells: well_cells.len(),
            row_ptr,
            col_idx,
            diag_idx,
            blocks,
            well_col_cells,
            well_col_blocks,
            well_row_blocks,
            well_diag: vec![S::zero(); well_cells.len()],
        }
    }

    #[inline]
    pub fn n_unknowns(&self) -> usize {
        self.n_cells * BLOCK + self.n_wells
    }

    pub fn zero_values(&mut self) {
        for b in self.blocks.iter_mut() {
            *b = [S::zero(); BLOCK * BLOCK];
        }
        for w in self.well_col_blocks.iter_mut().chain(self.well_row_blocks.iter_mut()) {
            for b in w.iter_mut() {
                *b = [S::zero(); BLOCK];
            }
        }
        for d in self.well_diag.iter_mut() {
            *d = S::zero();
        }
    }

    #[inline]
    pub fn row_cols(&self, row: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[row]..self.row_ptr[row + 1]]
    }

    /// Iterate (column, block) pairs of one cell row in column order.
    #[inline]
    pub fn row_blocks(&self, row: usize) -> impl Iterator<Item = (usize, &[S; BLOCK * BLOCK])> {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        self.col_idx[range.clone()].iter().copied().zip(self.blocks[range].iter())
    }

    #[inline]
    fn block_pos(&self, row: usize, col: usize) -> Option<usize> {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        self.col_idx[range.clone()].binary_search(&col).ok().map(|p| range.start + p)
    }

    #[inline]
    pub fn block(&self, row: usize, col: usize) -> Option<&[S; BLOCK * BLOCK]> {
        self.block_pos(row, col).map(|p| &self.blocks[p])
    }

    #[inline]
    pub fn block_mut(&mut self, row: usize, col: usize) -> &mut [S; BLOCK * BLOCK] {
        let p = self.block_pos(row, col).expect("block in pattern");
        &mut self.blocks[p]
    }

    #[inline]
    pub fn diag_block(&self, row: usize) -> &[S; BLOCK * BLOCK] {
        &self.blocks[self.diag_idx[row]]
    }

    #[inline]
    pub fn diag_block_mut(&mut self, row: usize) -> &mut [S; BLOCK * BLOCK] {
        &mut self.blocks[self.diag_idx[row]]
    }

    pub fn well_perf_cells(&self, w: usize) -> &[usize] {
        &self.well_col_cells[w]
    }

    /// d(residual of `cell`)/d(p_bh of well `w`).
    pub fn well_col_mut(&mut self, w: usize, cell: usize) -> &mut [S; BLOCK] {
        let p = self.well_col_cells[w].binary_search(&cell).expect("perforated cell");
        &mut self.well_col_blocks[w][p]
    }

    /// d(residual of well `w`)/d(unknowns of `cell`).
    pub fn well_row_mut(&mut self, w: usize, cell: usize) -> &mut [S; BLOCK] {
        let p = self.well_col_cells[w].binary_search(&cell).expect("perforated cell");
        &mut self.well_row_blocks[w][p]
    }

    pub fn well_diag_mut(&mut self, w: usize) -> &mut S {
        &mut self.well_diag[w]
    }

    pub fn well_diag(&self, w: usize) -> S {
        self.well_diag[w]
    }

    /// Left-multiply every cell block row by its own dense 4x4 transform,
    /// including the well border entries; used by the decoupling operation.
    /// Parallel over fixed block-row chunks.
    pub fn scale_rows_by(&mut self, transforms: &[[S; BLOCK * BLOCK]]) {
        debug_assert_eq!(transforms.len(), self.n_cells);
        const CELLS_PER_CHUNK: usize = 256;
        let row_ptr = &self.row_ptr;
        let mut jobs: Vec<(usize, &mut [[S; BLOCK * BLOCK]])> = Vec::new();
        {
            let mut rest: &mut [[S; BLOCK * BLOCK]] = &mut self.blocks;
            let mut consumed = 0usize;
            let mut cell = 0usize;
            while cell < self.n_cells {
                let hi = (cell + CELLS_PER_CHUNK).min(self.n_cells);
                let lo_off = row_ptr[cell];
                let hi_off = row_ptr[hi];
                let (_, t) = rest.split_at_mut(lo_off - consumed);
                let (mine, t2) = t.split_at_mut(hi_off - lo_off);
                jobs.push((cell, mine));
                rest = t2;
                consumed = hi_off;
                cell = hi;
            }
        }
        jobs.into_par_iter().for_each(|(cell_lo, chunk)| {
            let base = row_ptr[cell_lo];
            let cell_hi = (cell_lo + CELLS_PER_CHUNK).min(self.n_cells);
            for cell in cell_lo..cell_hi {
                let m = &transforms[cell];
                for p in row_ptr[cell]..row_ptr[cell + 1] {
                    let b = &mut chunk[p - base];
                    *b = mat4_mul(m, b);
                }
            }
        });
        // well border columns, handful of entries
        for w in 0..self.n_wells {
            for (p, &cell) in self.well_col_cells[w].iter().enumerate() {
                let m = &transforms[cell];
                let col = self.well_col_blocks[w][p];
                let mut out = [S::zero(); BLOCK];
                for (r, o) in out.iter_mut().enumerate() {
                    let mut acc = S::zero();
                    for k in 0..BLOCK {
                        acc += m[r * BLOCK + k] * col[k];
                    }
                    *o = acc;
                }
                self.well_col_blocks[w][p] = out;
            }
        }
    }

    /// Divide well row `w` by its diagonal entry, normalizing it to one.
    pub fn scale_well_row(&mut self, w: usize, inv: S) {
        for b in self.well_row_blocks[w].iter_mut() {
            for v in b.iter_mut() {
                *v *= inv;
            }
        }
        self.well_diag[w] *= inv;
    }

    /// y = A x, block kernels, parallel over the fine chunk ranges.
    pub fn spmv(&self, x: &[S], y: &mut [S], part: &Partitioning) {
        debug_assert_eq!(x.len(), self.n_unknowns());
        debug_assert_eq!(y.len(), self.n_unknowns());
        let nb = self.n_cells * BLOCK;
        let (y_cells, y_wells) = y.split_at_mut(nb);

        let row_ptr = &self.row_ptr;
        let col_idx = &self.col_idx;
        let blocks = &self.blocks;
        // cell rows in parallel; each chunk owns a disjoint slice of y
        let chunk_slices: Vec<(&std::ops::Range<usize>, &mut [S])> = {
            let mut slices = Vec::with_capacity(part.chunks.len());
            let mut rest = y_cells;
            let mut pos = 0usize;
            for r in &part.chunks {
                let take = (r.end - r.start) * BLOCK;
                let (head, tail) = rest.split_at_mut(take);
                debug_assert_eq!(pos, r.start * BLOCK);
                pos += take;
                slices.push((r, head));
                rest = tail;
            }
            slices
        };
        chunk_slices.into_par_iter().for_each(|(range, y_chunk)| {
            for cell in range.clone() {
                let mut acc = [S::zero(); BLOCK];
                for p in row_ptr[cell]..row_ptr[cell + 1] {
                    let j = col_idx[p];
                    let b = &blocks[p];
                    let xj = &x[j * BLOCK..(j + 1) * BLOCK];
                    for (r, a) in acc.iter_mut().enumerate() {
                        let mut s = S::zero();
                        for c in 0..BLOCK {
                            s += b[r * BLOCK + c] * xj[c];
                        }
                        *a += s;
                    }
                }
                for w in 0..self.n_wells {
                    if let Ok(p) = self.well_col_cells[w].binary_search(&cell) {
                        let col = &self.well_col_blocks[w][p];
                        let xw = x[nb + w];
                        for (r, a) in acc.iter_mut().enumerate() {
                            *a += col[r] * xw;
                        }
                    }
                }
                let off = (cell - range.start) * BLOCK;
                y_chunk[off..off + BLOCK].copy_from_slice(&acc);
            }
        });

        // well rows, sequential (few of them)
        for w in 0..self.n_wells {
            let mut acc = self.well_diag[w] * x[nb + w];
            for (p, &cell) in self.well_col_cells[w].iter().enumerate() {
                let rowb = &self.well_row_blocks[w][p];
                let xj = &x[cell * BLOCK..(cell + 1) * BLOCK];
                for c in 0..BLOCK {
                    acc += rowb[c] * xj[c];
                }
            }
            y_wells[w] = acc;
        }
    }

    /// Disjoint mutable views over the cell rows of the given chunks, for
    /// parallel assembly. Chunks must be ascending and non-overlapping.
    pub fn cell_rows_chunks<'m>(&'m mut self, chunks: &[std::ops::Range<usize>]) -> Vec<CellRowsMut<'m, S>> {
        let row_ptr = &self.row_ptr;
        let col_idx = &self.col_idx;
        let diag_idx = &self.diag_idx;
        let mut views = Vec::with_capacity(chunks.len());
        let mut rest: &'m mut [[S; BLOCK * BLOCK]] = &mut self.blocks;
        let mut consumed = 0usize;
        for range in chunks {
            let lo = row_ptr[range.start];
            let hi = row_ptr[range.end];
            let (_, tail) = rest.split_at_mut(lo - consumed);
            let (mine, tail2) = tail.split_at_mut(hi - lo);
            views.push(CellRowsMut {
                range: range.clone(),
                base: lo,
                row_ptr,
                col_idx,
                diag_idx,
                blocks: mine,
            });
            rest = tail2;
            consumed = hi;
        }
        views
    }

    /// Dense expansion, for tests and tiny systems only.
    pub fn to_dense(&self) -> Vec<Vec<S>> {
        let n = self.n_unknowns();
        let nb = self.n_cells * BLOCK;
        let mut out = vec![vec![S::zero(); n]; n];
        for row in 0..self.n_cells {
            for p in self.row_ptr[row]..self.row_ptr[row + 1] {
                let col = self.col_idx[p];
                let b = &self.blocks[p];
                for r in 0..BLOCK {
                    for c in 0..BLOCK {
                        out[row * BLOCK + r][col * BLOCK + c] = b[r * BLOCK + c];
                    }
                }
            }
        }
        for w in 0..self.n_wells {
            for (p, &cell) in self.well_col_cells[w].iter().enumerate() {
                for r in 0..BLOCK {
                    out[cell * BLOCK + r][nb + w] = self.well_col_blocks[w][p][r];
                }
                for c in 0..BLOCK {
                    out[nb + w][cell * BLOCK + c] = self.well_row_blocks[w][p][c];
                }
            }
            out[nb + w][nb + w] = self.well_diag[w];
        }
        out
    }

    /// Scalar CSR expansion of the full bordered system, rows sorted by
    /// column. Used by the ILU(0) smoother, the pressure-system extraction
    /// and the debug dump. Cell rows fill in parallel over fixed chunks.
    pub fn to_scalar_csr(&self) -> super::ilu::ScalarCsr<S> {
        let n = self.n_unknowns();
        let nb = self.n_cells * BLOCK;
        // map cell -> (well, perf position) pairs for border columns
        let mut cell_wells: Vec<Vec<(usize, usize)>> = vec![Vec::new(); self.n_cells];
        for w in 0..self.n_wells {
            for (p, &c) in self.well_col_cells[w].iter().enumerate() {
                cell_wells[c].push((w, p));
            }
        }
        let mut row_ptr = vec![0usize; n + 1];
        for cell in 0..self.n_cells {
            let len = (self.row_ptr[cell + 1] - self.row_ptr[cell]) * BLOCK + cell_wells[cell].len();
            for r in 0..BLOCK {
                row_ptr[cell * BLOCK + r + 1] = len;
            }
        }
        for w in 0..self.n_wells {
            row_ptr[nb + w + 1] = self.well_col_cells[w].len() * BLOCK + 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let total = row_ptr[n];
        let mut col_idx = vec![0usize; total];
        let mut vals = vec![S::zero(); total];

        // disjoint output slices per fixed cell chunk
        const CELLS_PER_CHUNK: usize = 256;
        let mut jobs: Vec<(usize, &mut [usize], &mut [S])> = Vec::new();
        {
            let mut rest_c: &mut [usize] = &mut col_idx;
            let mut rest_v: &mut [S] = &mut vals;
            let mut consumed = 0usize;
            let mut cell = 0usize;
            while cell < self.n_cells {
                let hi = (cell + CELLS_PER_CHUNK).min(self.n_cells);
                let lo_off = row_ptr[cell * BLOCK];
                let hi_off = row_ptr[hi * BLOCK];
                let (_, tc) = rest_c.split_at_mut(lo_off - consumed);
                let (mc, tc2) = tc.split_at_mut(hi_off - lo_off);
                let (_, tv) = rest_v.split_at_mut(lo_off - consumed);
                let (mv, tv2) = tv.split_at_mut(hi_off - lo_off);
                jobs.push((cell, mc, mv));
                rest_c = tc2;
                rest_v = tv2;
                consumed = hi_off;
                cell = hi;
            }
        }
        jobs.into_par_iter().for_each(|(cell_lo, chunk_cols, chunk_vals)| {
            let base = row_ptr[cell_lo * BLOCK];
            let cell_hi = (cell_lo + CELLS_PER_CHUNK).min(self.n_cells);
            let mut k = 0usize;
            for cell in cell_lo..cell_hi {
                debug_assert_eq!(base + k, row_ptr[cell * BLOCK]);
                for r in 0..BLOCK {
                    for p in self.row_ptr[cell]..self.row_ptr[cell + 1] {
                        let col = self.col_idx[p];
                        let b = &self.blocks[p];
                        for c in 0..BLOCK {
                            chunk_cols[k] = col * BLOCK + c;
                            chunk_vals[k] = b[r * BLOCK + c];
                            k += 1;
                        }
                    }
                    for &(w, p) in &cell_wells[cell] {
                        chunk_cols[k] = nb + w;
                        chunk_vals[k] = self.well_col_blocks[w][p][r];
                        k += 1;
                    }
                }
            }
        });
        for w in 0..self.n_wells {
            let mut k = row_ptr[nb + w];
            for (p, &cell) in self.well_col_cells[w].iter().enumerate() {
                for c in 0..BLOCK {
                    col_idx[k] = cell * BLOCK + c;
                    vals[k] = self.well_row_blocks[w][p][c];
                    k += 1;
                }
            }
            col_idx[k] = nb + w;
            vals[k] = self.well_diag[w];
        }
        super::ilu::ScalarCsr::from_sorted(n, row_ptr, col_idx, vals)
    }
}

/// Mutable window onto a contiguous range of cell block rows.
pub struct CellRowsMut<'m, S> {
    pub range: std::ops::Range<usize>,
    base: usize,
    row_ptr: &'m [usize],
    col_idx: &'m [usize],
    diag_idx: &'m [usize],
    blocks: &'m mut [[S; BLOCK * BLOCK]],
}

impl<'m, S: Scalar> CellRowsMut<'m, S> {
    pub fn block_mut(&mut self, row: usize, col: usize) -> &mut [S; BLOCK * BLOCK] {
        debug_assert!(self.range.contains(&row));
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        let p = self.col_idx[range.clone()]
            .binary_search(&col)
            .map(|p| range.start + p)
            .expect("block in pattern");
        &mut self.blocks[p - self.base]
    }

    pub fn diag_mut(&mut self, row: usize) -> &mut [S; BLOCK * BLOCK] {
        debug_assert!(self.range.contains(&row));
        &mut self.blocks[self.diag_idx[row] - self.base]
    }
}

/// c = a * b for row-major 4x4 blocks.
pub fn mat4_mul<S: Scalar>(a: &[S; BLOCK * BLOCK], b: &[S; BLOCK * BLOCK]) -> [S; BLOCK * BLOCK] {
    let mut c = [S::zero(); BLOCK * BLOCK];
    for r in 0..BLOCK {
        for k in 0..BLOCK {
            let aik = a[r * BLOCK + k];
            if aik == S::zero() {
                continue;
            }
            for j in 0..BLOCK {
                c[r * BLOCK + j] += aik * b[k * BLOCK + j];
            }
        }
    }
    c
}

/// Deterministic pseudo-random filler for test systems.
#[cfg(test)]
pub(crate) fn lcg(seed: &mut u64) -> f64 {
    *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    ((*seed >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
}

/// Random diagonally dominant bordered block system on a 1D chain; shared by
/// the decoupling, GMRES and CPR tests.
#[cfg(test)]
pub(crate) fn random_system(n_cells: usize, n_wells: usize, seed: u64) -> (BlockMatrix<f64>, Vec<f64>) {
    let mut s = seed;
    let neighbors: Vec<Vec<usize>> = (0..n_cells)
        .map(|i| {
            let mut v = Vec::new();
            if i > 0 {
                v.push(i - 1);
            }
            if i + 1 < n_cells {
                v.push(i + 1);
            }
            v
        })
        .collect();
    let wells: Vec<Vec<usize>> = (0..n_wells).map(|w| vec![w % n_cells]).collect();
    let mut a = BlockMatrix::from_pattern(n_cells, &neighbors, &wells);
    for row in 0..n_cells {
        let cols: Vec<usize> = a.row_cols(row).to_vec();
        for col in cols {
            let b = a.block_mut(row, col);
            for v in b.iter_mut() {
                *v = lcg(&mut s) * 0.3;
            }
        }
        let d = a.diag_block_mut(row);
        for i in 0..4 {
            d[i * 4 + i] += 3.0; // diagonal dominance
        }
    }
    for w in 0..n_wells {
        let cell = w % n_cells;
        for v in a.well_col_mut(w, cell).iter_mut() {
            *v = lcg(&mut s) * 0.2;
        }
        for v in a.well_row_mut(w, cell).iter_mut() {
            *v = lcg(&mut s) * 0.2;
        }
        *a.well_diag_mut(w) = 2.0 + lcg(&mut s).abs();
    }
    let b: Vec<f64> = (0..a.n_unknowns()).map(|_| lcg(&mut s)).collect();
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity() -> [f64; 16] {
        let mut m = [0.0; 16];
        for i in 0..4 {
            m[i * 4 + i] = 1.0;
        }
        m
    }

    #[test]
    fn spmv_zero_and_identity() {
        let (a, _) = random_system(3, 1, 7);
        let part = Partitioning::single(3, 1);
        let n = a.n_unknowns();
        let mut y = vec![1.0; n];
        a.spmv(&vec![0.0; n], &mut y, &part);
        assert!(y.iter().all(|&v| v == 0.0));

        let mut ident = BlockMatrix::from_pattern(2, &[vec![], vec![]], &[]);
        *ident.diag_block_mut(0) = identity();
        *ident.diag_block_mut(1) = identity();
        let x: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let mut y = vec![0.0; 8];
        ident.spmv(&x, &mut y, &Partitioning::single(2, 0));
        assert_eq!(x, y);
    }

    #[test]
    fn spmv_matches_dense() {
        let (a, _) = random_system(2, 1, 42);
        let part = Partitioning::single(2, 1);
        let n = a.n_unknowns();
        let x: Vec<f64> = (0..n).map(|i| (i as f64) * 0.37 - 1.0).collect();
        let mut y = vec![0.0; n];
        a.spmv(&x, &mut y, &part);
        let dense = a.to_dense();
        for r in 0..n {
            let mut acc = 0.0;
            for c in 0..n {
                acc += dense[r][c] * x[c];
            }
            assert!((acc - y[r]).abs() < 1e-13, "row {r}: {acc} vs {}", y[r]);
        }
    }

    #[test]
    fn scalar_csr_matches_dense() {
        let (a, _) = random_system(3, 2, 11);
        let csr = a.to_scalar_csr();
        let dense = a.to_dense();
        let n = a.n_unknowns();
        for r in 0..n {
            for c in 0..n {
                assert!((csr.get(r, c).unwrap_or(0.0) - dense[r][c]).abs() < 1e-15);
            }
        }
    }
}
