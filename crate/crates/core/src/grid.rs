//! Structured Cartesian dual-continuum grid.
//!
//! Cells carry properties for both continua: the fracture network, which owns
//! all cell-to-cell connections, and the matrix, which connects only to its
//! co-located fracture cell through a shape factor. Depth increases downward;
//! natural ordering is `idx = i + nx * (j + ny * k)`.

use crate::props::{RockCompressibility, UnitConstants};
use crate::scalar::{lit, Scalar};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid dimensions must be >= 1 (got {0} x {1} x {2})")]
    EmptyDims(usize, usize, usize),
    #[error("non-positive cell size on axis {axis:?} at index {index}")]
    NonPositiveSize { axis: Axis, index: usize },
    #[error("axis size array on {axis:?} has length {got}, expected {expected}")]
    SizeArrayLength { axis: Axis, got: usize, expected: usize },
    #[error("non-positive fracture spacing on axis {0:?}")]
    NonPositiveSpacing(Axis),
    #[error("negative permeability in cell {0}")]
    NegativePermeability(usize),
    #[error("property array has length {got}, expected {expected} cells")]
    CellArrayLength { got: usize, expected: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

/// Grid geometry: cell counts, per-axis sizes and the depth of the top-layer
/// cell faces. `top_depth` is the depth of the top face of layer k = 0; the
/// deck layer converts a center-referenced TOPS value before building.
#[derive(Clone, Debug)]
pub struct GridDims<S> {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dx: Vec<S>,
    pub dy: Vec<S>,
    pub dz: Vec<S>,
    pub top_depth: S,
}

impl<S: Scalar> GridDims<S> {
    /// Uniform cell sizes on every axis.
    pub fn uniform(nx: usize, ny: usize, nz: usize, dx: S, dy: S, dz: S, top_depth: S) -> Self {
        GridDims {
            nx,
            ny,
            nz,
            dx: vec![dx; nx],
            dy: vec![dy; ny],
            dz: vec![dz; nz],
            top_depth,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(GridError::EmptyDims(self.nx, self.ny, self.nz));
        }
        for (axis, arr, n) in [
            (Axis::X, &self.dx, self.nx),
            (Axis::Y, &self.dy, self.ny),
            (Axis::Z, &self.dz, self.nz),
        ] {
            if arr.len() != n {
                return Err(GridError::SizeArrayLength { axis, got: arr.len(), expected: n });
            }
            for (i, &v) in arr.iter().enumerate() {
                if !(v > S::zero()) {
                    return Err(GridError::NonPositiveSize { axis, index: i });
                }
            }
        }
        Ok(())
    }
}

/// Shape-factor model for matrix-fracture exchange.
#[derive(Clone, Copy, Debug)]
pub enum ShapeFactorModel<S> {
    /// Gilman-Kazemi: sigma = 4 (1/Lx² + 1/Ly² + 1/Lz²) over the active axes.
    Kazemi,
    /// Warren-Root: sigma = 4 n (n + 2) / L² with `sets` fracture sets and a
    /// representative spacing `spacing`.
    WarrenRoot { sets: u32, spacing: S },
    /// Direct per-deck value, 1/ft².
    Direct(S),
}

/// How the matrix permeability entering the transfer coefficient is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransferPerm {
    /// Matrix x-permeability (default).
    XDir,
    /// Arithmetic average of the three matrix permeabilities.
    Average,
}

/// Per-continuum, per-cell rock description.
#[derive(Clone, Copy, Debug)]
pub struct ContinuumRock<S> {
    /// Permeability along x, y, z in mD.
    pub perm: [S; 3],
    pub rock: RockCompressibility<S>,
}

/// One interior face of the fracture continuum.
#[derive(Clone, Copy, Debug)]
pub struct Connection<S> {
    pub cell_i: usize,
    pub cell_j: usize,
    /// Geometric transmissibility including the Darcy constant, so that
    /// `trans * (k_r rho / mu) * dPhi` is a mass rate.
    pub trans: S,
    pub axis: Axis,
}

/// Immutable simulation grid shared read-only by all workers.
#[derive(Clone, Debug)]
pub struct Grid<S> {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dx: Vec<S>,
    pub dy: Vec<S>,
    pub dz: Vec<S>,
    /// Bulk cell volume, ft³.
    pub volume: Vec<S>,
    /// Cell-center depth, ft, increasing with k.
    pub depth: Vec<S>,
    pub matrix: Vec<ContinuumRock<S>>,
    pub fracture: Vec<ContinuumRock<S>>,
    /// Shape factor per cell, 1/ft².
    pub sigma: Vec<S>,
    /// darcy * sigma * k_m * V per cell; multiplies mobility and the
    /// matrix-fracture pressure difference to give a mass rate.
    pub transfer_coeff: Vec<S>,
    pub connections: Vec<Connection<S>>,
    /// Face indices incident to each cell, for cell-wise assembly.
    pub cell_connections: Vec<Vec<usize>>,
}

impl<S: Scalar> Grid<S> {
    #[inline]
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    #[inline]
    pub fn ijk(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.nx;
        let j = (idx / self.nx) % self.ny;
        let k = idx / (self.nx * self.ny);
        (i, j, k)
    }

    /// Cell sizes along each axis, ft.
    pub fn cell_sizes(&self, idx: usize) -> [S; 3] {
        let (i, j, k) = self.ijk(idx);
        [self.dx[i], self.dy[j], self.dz[k]]
    }
}

/// Two-point flux transmissibility of one face, with harmonic permeability
/// averaging; mD·ft scaled by the Darcy constant. A zero permeability on
/// either side seals the face.
pub fn face_transmissibility<S: Scalar>(
    d_i: S,
    d_j: S,
    k_i: S,
    k_j: S,
    area: S,
    units: &UnitConstants<S>,
) -> S {
    if !(k_i > S::zero()) || !(k_j > S::zero()) {
        return S::zero();
    }
    let two = lit::<S>(2.0);
    let half_i = d_i / (two * k_i * area);
    let half_j = d_j / (two * k_j * area);
    units.darcy / (half_i + half_j)
}

/// Shape factor, 1/ft². For the Kazemi form an axis is inactive (no fracture
/// set normal to it) when its spacing is `None`.
pub fn shape_factor<S: Scalar>(
    model: ShapeFactorModel<S>,
    spacing: [Option<S>; 3],
) -> Result<S, GridError> {
    match model {
        ShapeFactorModel::Direct(v) => Ok(v),
        ShapeFactorModel::WarrenRoot { sets, spacing } => {
            if !(spacing > S::zero()) {
                return Err(GridError::NonPositiveSpacing(Axis::X));
            }
            let n = lit::<S>(sets as f64);
            Ok(lit::<S>(4.0) * n * (n + lit(2.0)) / (spacing * spacing))
        }
        ShapeFactorModel::Kazemi => {
            let mut sum = S::zero();
            for (axis, l) in [Axis::X, Axis::Y, Axis::Z].into_iter().zip(spacing) {
                if let Some(l) = l {
                    if !(l > S::zero()) {
                        return Err(GridError::NonPositiveSpacing(axis));
                    }
                    sum += S::one() / (l * l);
                }
            }
            Ok(lit::<S>(4.0) * sum)
        }
    }
}

/// Inputs to [`build_grid`] beyond the geometry: per-cell rock for both
/// continua and the matrix-fracture exchange description.
pub struct GridProps<S> {
    pub matrix: Vec<ContinuumRock<S>>,
    pub fracture: Vec<ContinuumRock<S>>,
    pub shape_factor: ShapeFactorModel<S>,
    /// Fracture spacing per axis; `None` entries are inactive axes. When the
    /// whole field is `None` the cell dimensions are used.
    pub spacing: Option<[Option<S>; 3]>,
    pub transfer_perm: TransferPerm,
}

pub fn build_grid<S: Scalar>(
    dims: &GridDims<S>,
    props: GridProps<S>,
    units: &UnitConstants<S>,
) -> Result<Grid<S>, GridError> {
    dims.validate()?;
    let n = dims.n_cells();
    for (name_len, expected) in [(props.matrix.len(), n), (props.fracture.len(), n)] {
        if name_len != expected {
            return Err(GridError::CellArrayLength { got: name_len, expected });
        }
    }
    for (idx, c) in props.matrix.iter().chain(props.fracture.iter()).enumerate() {
        if c.perm.iter().any(|&k| k < S::zero()) {
            return Err(GridError::NegativePermeability(idx % n));
        }
    }

    let (nx, ny, nz) = (dims.nx, dims.ny, dims.nz);
    let half = lit::<S>(0.5);

    // cell-center depths: top face + cumulative dz + half the local dz
    let mut layer_depth = Vec::with_capacity(nz);
    let mut cum = dims.top_depth;
    for k in 0..nz {
        layer_depth.push(cum + half * dims.dz[k]);
        cum += dims.dz[k];
    }

    let mut volume = vec![S::zero(); n];
    let mut depth = vec![S::zero(); n];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = i + nx * (j + ny * k);
                volume[idx] = dims.dx[i] * dims.dy[j] * dims.dz[k];
                depth[idx] = layer_depth[k];
            }
        }
    }

    // interior faces, each appearing exactly once, fracture continuum only
    let mut connections = Vec::new();
    let index = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let a = index(i, j, k);
                if i + 1 < nx {
                    let b = index(i + 1, j, k);
                    let area = dims.dy[j] * dims.dz[k];
                    let t = face_transmissibility(
                        dims.dx[i],
                        dims.dx[i + 1],
                        props.fracture[a].perm[0],
                        props.fracture[b].perm[0],
                        area,
                        units,
                    );
                    connections.push(Connection { cell_i: a, cell_j: b, trans: t, axis: Axis::X });
                }
                if j + 1 < ny {
                    let b = index(i, j + 1, k);
                    let area = dims.dx[i] * dims.dz[k];
                    let t = face_transmissibility(
                        dims.dy[j],
                        dims.dy[j + 1],
                        props.fracture[a].perm[1],
                        props.fracture[b].perm[1],
                        area,
                        units,
                    );
                    connections.push(Connection { cell_i: a, cell_j: b, trans: t, axis: Axis::Y });
                }
                if k + 1 < nz {
                    let b = index(i, j, k + 1);
                    let area = dims.dx[i] * dims.dy[j];
                    let t = face_transmissibility(
                        dims.dz[k],
                        dims.dz[k + 1],
                        props.fracture[a].perm[2],
                        props.fracture[b].perm[2],
                        area,
                        units,
                    );
                    connections.push(Connection { cell_i: a, cell_j: b, trans: t, axis: Axis::Z });
                }
            }
        }
    }

    let mut cell_connections = vec![Vec::new(); n];
    for (ci, c) in connections.iter().enumerate() {
        cell_connections[c.cell_i].push(ci);
        cell_connections[c.cell_j].push(ci);
    }

    let mut sigma = vec![S::zero(); n];
    let mut transfer_coeff = vec![S::zero(); n];
    for idx in 0..n {
        let (i, j, k) = {
            let i = idx % nx;
            let j = (idx / nx) % ny;
            let k = idx / (nx * ny);
            (i, j, k)
        };
        let spacing = match props.spacing {
            Some(s) => s,
            None => [Some(dims.dx[i]), Some(dims.dy[j]), Some(dims.dz[k])],
        };
        let sig = shape_factor(props.shape_factor, spacing)?;
        let km = match props.transfer_perm {
            TransferPerm::XDir => props.matrix[idx].perm[0],
            TransferPerm::Average => {
                let p = &props.matrix[idx].perm;
                (p[0] + p[1] + p[2]) / lit(3.0)
            }
        };
        sigma[idx] = sig;
        transfer_coeff[idx] = units.darcy * sig * km * volume[idx];
    }

    Ok(Grid {
        nx,
        ny,
        nz,
        dx: dims.dx.clone(),
        dy: dims.dy.clone(),
        dz: dims.dz.clone(),
        volume,
        depth,
        matrix: props.matrix,
        fracture: props.fracture,
        sigma,
        transfer_coeff,
        connections,
        cell_connections,
    })
}
