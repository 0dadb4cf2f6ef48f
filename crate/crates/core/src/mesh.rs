//! Cartesian element mesh with duplicated interface nodes, the vertical-strip
//! subdomain decomposition, and the interface inclusion map `E`.
//!
//! Global node numbering is element-major with element index
//! `ix * m_z + iz`, and within an element the local index is `a * n + b` where
//! `a` runs along x and `b` along z (z fastest). Each subdomain therefore
//! owns a contiguous range of `n² m_z` nodes.

use crate::error::{check_len, Error, Result};
use crate::gll::GllBasis;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Face {
    West,
    East,
    South,
    North,
}

impl Face {
    pub const ALL: [Face; 4] = [Face::West, Face::East, Face::South, Face::North];

    pub fn index(self) -> usize {
        match self {
            Face::West => 0,
            Face::East => 1,
            Face::South => 2,
            Face::North => 3,
        }
    }

    pub fn opposite(self) -> Face {
        match self {
            Face::West => Face::East,
            Face::East => Face::West,
            Face::South => Face::North,
            Face::North => Face::South,
        }
    }

    /// Outward normal `(n_x, n_z)`.
    pub fn normal(self) -> (f64, f64) {
        match self {
            Face::West => (-1.0, 0.0),
            Face::East => (1.0, 0.0),
            Face::South => (0.0, -1.0),
            Face::North => (0.0, 1.0),
        }
    }

    /// Local node index of the `t`-th node along this face (bottom-to-top or
    /// left-to-right).
    pub fn local_node(self, n: usize, t: usize) -> usize {
        match self {
            Face::West => t,
            Face::East => (n - 1) * n + t,
            Face::South => t * n,
            Face::North => t * n + n - 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub basis: GllBasis,
    pub n: usize,
    pub mx: usize,
    pub mz: usize,
    /// Domain extent along x, meters.
    pub lx: f64,
    /// Domain extent along z, meters.
    pub lz: f64,
    pub hx: f64,
    pub hz: f64,
    coords: Vec<[f64; 2]>,
    neighbors: Vec<[Option<usize>; 4]>,
}

impl Mesh {
    pub fn new(n: usize, mx: usize, mz: usize, lx: f64, lz: f64) -> Result<Self> {
        if mx == 0 || mz == 0 {
            return Err(Error::InvalidMesh(format!(
                "element counts must be positive (m_x={mx}, m_z={mz})"
            )));
        }
        if !(lx > 0.0 && lz > 0.0 && lx.is_finite() && lz.is_finite()) {
            return Err(Error::InvalidMesh(format!(
                "extents must be positive (l_x={lx}, l_z={lz})"
            )));
        }
        let basis = GllBasis::new(n).map_err(|e| Error::InvalidMesh(e.to_string()))?;
        let hx = lx / mx as f64;
        let hz = lz / mz as f64;
        let nn = n * n;
        let ne = mx * mz;
        let mut coords = Vec::with_capacity(nn * ne);
        let mut neighbors = Vec::with_capacity(ne);
        let xi = basis.nodes().to_vec();
        for ix in 0..mx {
            for iz in 0..mz {
                let x0 = ix as f64 * hx;
                let z0 = iz as f64 * hz;
                for a in 0..n {
                    for b in 0..n {
                        coords.push([x0 + 0.5 * (xi[a] + 1.0) * hx, z0 + 0.5 * (xi[b] + 1.0) * hz]);
                    }
                }
                neighbors.push([
                    (ix > 0).then(|| (ix - 1) * mz + iz),
                    (ix + 1 < mx).then(|| (ix + 1) * mz + iz),
                    (iz > 0).then(|| ix * mz + iz - 1),
                    (iz + 1 < mz).then(|| ix * mz + iz + 1),
                ]);
            }
        }
        Ok(Self {
            basis,
            n,
            mx,
            mz,
            lx,
            lz,
            hx,
            hz,
            coords,
            neighbors,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.n * self.n * self.mx * self.mz
    }

    pub fn num_elements(&self) -> usize {
        self.mx * self.mz
    }

    /// Element aspect ratio `h_x / h_z`.
    pub fn aspect_ratio(&self) -> f64 {
        self.hx / self.hz
    }

    pub fn element_index(&self, ix: usize, iz: usize) -> usize {
        ix * self.mz + iz
    }

    /// `(ix, iz)` of an element.
    pub fn element_position(&self, e: usize) -> (usize, usize) {
        (e / self.mz, e % self.mz)
    }

    pub fn node_index(&self, e: usize, local: usize) -> usize {
        e * self.n * self.n + local
    }

    pub fn element_of_node(&self, node: usize) -> usize {
        node / (self.n * self.n)
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn neighbor(&self, e: usize, face: Face) -> Option<usize> {
        self.neighbors[e][face.index()]
    }

    /// Nodes per subdomain strip.
    pub fn strip_size(&self) -> usize {
        self.n * self.n * self.mz
    }

    pub fn subdomain_of_element(&self, e: usize) -> usize {
        e / self.mz
    }

    /// Evaluates a function at every node.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.coords.iter().map(|&[x, z]| f(x, z)).collect()
    }
}

/// One interface between strips `j` and `j + 1`.
#[derive(Clone, Debug)]
pub struct Interface {
    /// East-edge nodes of strip `j`, bottom-to-top.
    pub left: Vec<usize>,
    /// West-edge nodes of strip `j + 1`, bottom-to-top.
    pub right: Vec<usize>,
    /// Mean x-coordinate; kept for diagnostics only.
    pub mean_x: f64,
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub interfaces: Vec<Interface>,
    /// Nodes per interface side, `n m_z`.
    pub side_len: usize,
    /// Global node index of each interface unknown; interface `j` occupies
    /// `[2 j h, 2 (j + 1) h)` with the left side first.
    nodes: Vec<usize>,
    num_nodes: usize,
}

impl Decomposition {
    pub fn new(mesh: &Mesh) -> Self {
        let (n, mz) = (mesh.n, mesh.mz);
        let side_len = n * mz;
        let mut interfaces = Vec::with_capacity(mesh.mx.saturating_sub(1));
        let mut nodes = Vec::with_capacity(2 * side_len * mesh.mx.saturating_sub(1));
        for j in 0..mesh.mx.saturating_sub(1) {
            let mut left = Vec::with_capacity(side_len);
            let mut right = Vec::with_capacity(side_len);
            for iz in 0..mz {
                let el = mesh.element_index(j, iz);
                let er = mesh.element_index(j + 1, iz);
                for t in 0..n {
                    left.push(mesh.node_index(el, Face::East.local_node(n, t)));
                    right.push(mesh.node_index(er, Face::West.local_node(n, t)));
                }
            }
            let mean_x = left.iter().chain(&right).map(|&i| mesh.coords()[i][0]).sum::<f64>() / (2 * side_len) as f64;
            nodes.extend_from_slice(&left);
            nodes.extend_from_slice(&right);
            interfaces.push(Interface { left, right, mean_x });
        }
        Self {
            interfaces,
            side_len,
            nodes,
            num_nodes: mesh.num_nodes(),
        }
    }

    /// Total interface unknowns `k = 2 n m_z (m_x - 1)`.
    pub fn k(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_interfaces(&self) -> usize {
        self.interfaces.len()
    }

    pub fn interface_len(&self) -> usize {
        2 * self.side_len
    }

    pub fn interface_range(&self, j: usize) -> std::ops::Range<usize> {
        let w = self.interface_len();
        j * w..(j + 1) * w
    }

    pub fn left_range(&self, j: usize) -> std::ops::Range<usize> {
        let s = j * self.interface_len();
        s..s + self.side_len
    }

    pub fn right_range(&self, j: usize) -> std::ops::Range<usize> {
        let s = j * self.interface_len() + self.side_len;
        s..s + self.side_len
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn coarse_coordinates(&self) -> Vec<f64> {
        self.interfaces.iter().map(|i| i.mean_x).collect()
    }

    /// Inclusion `E v`: scatter interface values to their nodes.
    pub fn apply_e(&self, v: &[f64]) -> Result<Vec<f64>> {
        check_len("apply_E", self.k(), v.len())?;
        let mut out = vec![0.0; self.num_nodes];
        for (&node, &val) in self.nodes.iter().zip(v) {
            out[node] = val;
        }
        Ok(out)
    }

    /// Restriction `Eᵀ u`: gather interface values.
    pub fn apply_et(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len("apply_Et", self.num_nodes, u.len())?;
        Ok(self.nodes.iter().map(|&i| u[i]).collect())
    }
}
