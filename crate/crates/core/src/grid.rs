//! Spatial domain and its uniform node lattice.
//!
//! A [`Domain`] is a 1D interval or a 2D box, optionally restricted by a mask.
//! A [`Grid`] places `n` interior nodes per axis at spacing `extent / (n + 1)`;
//! the outer layer of the box and every masked-out node act as homogeneous
//! Dirichlet boundary. Masks give staircase approximations of arbitrary
//! (possibly disconnected or multiply connected) domains.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// Coordinates of a node. The second entry is zero in 1D.
pub type Point = [f64; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("bad resolution: {0}")]
    BadResolution(String),
    #[error("no interior node survives masking")]
    EmptyInterior,
}

/// Marks which lattice nodes belong to the domain.
#[derive(Clone)]
pub enum Mask {
    /// One flag per lattice node, x fastest. The shape must match the grid resolution.
    Bitmap {
        shape: Vec<usize>,
        inside: Vec<bool>,
    },
    /// Evaluated at node coordinates (a slice of length `dimension`).
    Predicate(Arc<dyn Fn(&[f64]) -> bool + Send + Sync>),
}

impl fmt::Debug for Mask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mask::Bitmap { shape, inside } => f
                .debug_struct("Bitmap")
                .field("shape", shape)
                .field("inside", &inside.iter().filter(|b| **b).count())
                .finish(),
            Mask::Predicate(_) => f.write_str("Predicate(..)"),
        }
    }
}

impl Mask {
    pub fn predicate<F>(f: F) -> Self
    where
        F: Fn(&[f64]) -> bool + Send + Sync + 'static,
    {
        Mask::Predicate(Arc::new(f))
    }

    /// Parses a raster of rows, lowest `y` first; `#`/`1` mark nodes inside the domain.
    pub fn from_rows<S: AsRef<str>>(rows: &[S]) -> Result<Self, GridError> {
        let ny = rows.len();
        if ny == 0 {
            return Err(GridError::InvalidDomain("mask raster has no rows".into()));
        }
        let nx = rows[0].as_ref().chars().count();
        let mut inside = Vec::with_capacity(nx * ny);
        for (r, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.chars().count() != nx {
                return Err(GridError::InvalidDomain(format!(
                    "mask row {r} has {} cells, expected {nx}",
                    row.chars().count()
                )));
            }
            for c in row.chars() {
                match c {
                    '#' | '1' => inside.push(true),
                    '.' | '0' => inside.push(false),
                    other => {
                        return Err(GridError::InvalidDomain(format!(
                            "unexpected mask character {other:?} in row {r}"
                        )))
                    }
                }
            }
        }
        let shape = if ny == 1 { vec![nx] } else { vec![nx, ny] };
        Ok(Mask::Bitmap { shape, inside })
    }
}

#[derive(Debug, Clone)]
pub struct Domain {
    dimension: usize,
    bounds: Vec<(f64, f64)>,
    mask: Option<Mask>,
}

impl Domain {
    pub fn new(bounds: Vec<(f64, f64)>, mask: Option<Mask>) -> Result<Self, GridError> {
        let dimension = bounds.len();
        if !(1..=2).contains(&dimension) {
            return Err(GridError::InvalidDomain(format!(
                "dimension must be 1 or 2, got {dimension}"
            )));
        }
        for (axis, &(lo, hi)) in bounds.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() || hi <= lo {
                return Err(GridError::InvalidDomain(format!(
                    "axis {axis} has non-positive extent ({lo}, {hi})"
                )));
            }
        }
        if let Some(Mask::Bitmap { shape, .. }) = &mask {
            if shape.len() != dimension {
                return Err(GridError::InvalidDomain(format!(
                    "mask is {}-dimensional but the box is {dimension}-dimensional",
                    shape.len()
                )));
            }
        }
        Ok(Self {
            dimension,
            bounds,
            mask,
        })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self, GridError> {
        Self::new(vec![(lo, hi)], None)
    }

    pub fn rectangle(x: (f64, f64), y: (f64, f64)) -> Result<Self, GridError> {
        Self::new(vec![x, y], None)
    }

    pub fn with_mask(self, mask: Mask) -> Result<Self, GridError> {
        Self::new(self.bounds, Some(mask))
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn mask(&self) -> Option<&Mask> {
        self.mask.as_ref()
    }

    pub fn is_masked(&self) -> bool {
        self.mask.is_some()
    }
}

/// Stencil neighbour of an interior node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Neighbor {
    Interior(usize),
    Boundary,
}

#[derive(Debug, Clone)]
pub struct Grid {
    domain: Domain,
    nodes_per_axis: Vec<usize>,
    spacing: Vec<f64>,
    /// interior index -> lattice index
    lattice_of: Vec<usize>,
    /// lattice index -> interior index
    interior_of: Vec<Option<usize>>,
}

impl Grid {
    pub fn new(domain: Domain, nodes_per_axis: &[usize]) -> Result<Self, GridError> {
        build_grid(domain, nodes_per_axis)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dimension(&self) -> usize {
        self.domain.dimension
    }

    pub fn nodes_per_axis(&self) -> &[usize] {
        &self.nodes_per_axis
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Number of interior nodes (unknowns).
    pub fn len(&self) -> usize {
        self.lattice_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice_of.is_empty()
    }

    /// Midpoint-rule weight of a single node.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    fn lattice_shape(&self) -> [usize; 2] {
        [
            self.nodes_per_axis[0],
            self.nodes_per_axis.get(1).copied().unwrap_or(1),
        ]
    }

    /// Lattice position `(ix, iy)` of an interior node; `iy = 0` in 1D.
    pub fn lattice_position(&self, index: usize) -> [usize; 2] {
        let nx = self.nodes_per_axis[0];
        let l = self.lattice_of[index];
        [l % nx, l / nx]
    }

    /// Interior index at a lattice position, or `None` for boundary / outside positions.
    pub fn index_at(&self, ix: isize, iy: isize) -> Option<usize> {
        let [nx, ny] = self.lattice_shape();
        if ix < 0 || iy < 0 || ix as usize >= nx || iy as usize >= ny {
            return None;
        }
        self.interior_of[ix as usize + nx * iy as usize]
    }

    /// Neighbour of `index` displaced by `(dx, dy)` lattice steps.
    pub fn neighbor(&self, index: usize, dx: isize, dy: isize) -> Neighbor {
        let [ix, iy] = self.lattice_position(index);
        match self.index_at(ix as isize + dx, iy as isize + dy) {
            Some(j) => Neighbor::Interior(j),
            None => Neighbor::Boundary,
        }
    }

    pub fn coordinates(&self, index: usize) -> Point {
        let pos = self.lattice_position(index);
        let mut p = [0.0; 2];
        for axis in 0..self.dimension() {
            let (lo, _) = self.domain.bounds[axis];
            p[axis] = lo + (pos[axis] + 1) as f64 * self.spacing[axis];
        }
        p
    }

    /// Samples `f` at every interior node.
    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        let dim = self.dimension();
        (0..self.len())
            .map(|i| f(&self.coordinates(i)[..dim]))
            .collect()
    }

    /// Midpoint-rule integral of nodal values over the domain.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() * self.cell_volume()
    }

    /// Connected components of the interior node graph under the axis-aligned stencil.
    /// Returns a label per node and the number of components.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let n = self.len();
        let mut label = vec![usize::MAX; n];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = count;
            queue.push_back(start);
            while let Some(i) = queue.pop_front() {
                for (dx, dy) in self.axis_offsets() {
                    if let Neighbor::Interior(j) = self.neighbor(i, dx, dy) {
                        if label[j] == usize::MAX {
                            label[j] = count;
                            queue.push_back(j);
                        }
                    }
                }
            }
            count += 1;
        }
        (label, count)
    }

    fn axis_offsets(&self) -> Vec<(isize, isize)> {
        if self.dimension() == 1 {
            vec![(-1, 0), (1, 0)]
        } else {
            vec![(-1, 0), (1, 0), (0, -1), (0, 1)]
        }
    }
}

/// Builds the interior-node lattice of `domain` with `nodes_per_axis` nodes along each axis.
pub fn build_grid(domain: Domain, nodes_per_axis: &[usize]) -> Result<Grid, GridError> {
    let dim = domain.dimension;
    if nodes_per_axis.len() != dim {
        return Err(GridError::BadResolution(format!(
            "expected {dim} node counts, got {}",
            nodes_per_axis.len()
        )));
    }
    if let Some(axis) = nodes_per_axis.iter().position(|&n| n < 1) {
        return Err(GridError::BadResolution(format!(
            "axis {axis} has fewer than one node"
        )));
    }
    let spacing: Vec<f64> = domain
        .bounds
        .iter()
        .zip(nodes_per_axis)
        .map(|(&(lo, hi), &n)| (hi - lo) / (n + 1) as f64)
        .collect();

    let nx = nodes_per_axis[0];
    let ny = nodes_per_axis.get(1).copied().unwrap_or(1);
    if let Some(Mask::Bitmap { shape, .. }) = &domain.mask {
        if shape.as_slice() != nodes_per_axis {
            return Err(GridError::BadResolution(format!(
                "mask raster has shape {shape:?} but the grid has {nodes_per_axis:?} nodes"
            )));
        }
    }

    let mut lattice_of = Vec::new();
    let mut interior_of = vec![None; nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            let l = ix + nx * iy;
            let keep = match &domain.mask {
                None => true,
                Some(Mask::Bitmap { inside, .. }) => inside[l],
                Some(Mask::Predicate(pred)) => {
                    let mut p = [0.0; 2];
                    p[0] = domain.bounds[0].0 + (ix + 1) as f64 * spacing[0];
                    if dim == 2 {
                        p[1] = domain.bounds[1].0 + (iy + 1) as f64 * spacing[1];
                    }
                    pred(&p[..dim])
                }
            };
            if keep {
                interior_of[l] = Some(lattice_of.len());
                lattice_of.push(l);
            }
        }
    }
    if lattice_of.is_empty() {
        return Err(GridError::EmptyInterior);
    }
    Ok(Grid {
        domain,
        nodes_per_axis: nodes_per_axis.to_vec(),
        spacing,
        lattice_of,
        interior_of,
    })
}
