//! 3D grid geometry: extents, row-major indexing, and the 6-neighborhood
//! edge system shared by the energy model and the metrics.
//!
//! Memory order is row-major with x fastest, then y, then z. Multi-channel
//! volumes keep the channel as the outermost (slowest) dimension so that each
//! class map is one contiguous block.

use crate::error::{Error, Result};

/// Voxel grid extent plus physical voxel spacing in millimeters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dims {
    x: usize,
    y: usize,
    z: usize,
    spacing_mm: [f64; 3],
}

impl Dims {
    /// All counts must be at least 1 and all spacings strictly positive.
    pub fn new(x: usize, y: usize, z: usize, spacing_mm: [f64; 3]) -> Result<Self> {
        if x == 0 || y == 0 || z == 0 {
            return Err(Error::Parameter(format!(
                "voxel counts must be >= 1, got {x}x{y}x{z}"
            )));
        }
        if spacing_mm.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::Parameter(format!(
                "voxel spacing must be finite and positive, got {spacing_mm:?}"
            )));
        }
        // Guards headers crafted to wrap the size arithmetic.
        if x.checked_mul(y).and_then(|v| v.checked_mul(z)).is_none() {
            return Err(Error::Parameter(format!(
                "voxel count {x}x{y}x{z} overflows"
            )));
        }
        Ok(Self {
            x,
            y,
            z,
            spacing_mm,
        })
    }

    /// Unit spacing shorthand used all over the tests.
    pub fn isotropic(x: usize, y: usize, z: usize) -> Result<Self> {
        Self::new(x, y, z, [1.0; 3])
    }

    pub fn x(&self) -> usize {
        self.x
    }

    pub fn y(&self) -> usize {
        self.y
    }

    pub fn z(&self) -> usize {
        self.z
    }

    pub fn extent(&self) -> [usize; 3] {
        [self.x, self.y, self.z]
    }

    pub fn spacing_mm(&self) -> [f64; 3] {
        self.spacing_mm
    }

    pub fn voxel_count(&self) -> usize {
        self.x * self.y * self.z
    }

    /// Number of undirected 6-neighborhood edges:
    /// `(x-1)yz + x(y-1)z + xy(z-1)`.
    pub fn edge_count(&self) -> usize {
        let (x, y, z) = (self.x, self.y, self.z);
        (x - 1) * y * z + x * (y - 1) * z + x * y * (z - 1)
    }

    pub fn contains(&self, coord: [usize; 3]) -> bool {
        coord[0] < self.x && coord[1] < self.y && coord[2] < self.z
    }

    /// Same voxel counts; spacing is not compared.
    pub fn same_extent(&self, other: &Dims) -> bool {
        self.extent() == other.extent()
    }

    /// Row-major linear index, x fastest. The coordinate must be in bounds.
    #[inline]
    pub fn linear_index(&self, coord: [usize; 3]) -> usize {
        debug_assert!(self.contains(coord));
        coord[0] + self.x * (coord[1] + self.y * coord[2])
    }

    /// Bounds-checked variant of [`Dims::linear_index`].
    pub fn checked_index(&self, coord: [usize; 3]) -> Result<usize> {
        if self.contains(coord) {
            Ok(self.linear_index(coord))
        } else {
            Err(Error::OutOfBounds {
                coord,
                extent: self.extent(),
            })
        }
    }

    /// Inverse of [`Dims::linear_index`].
    #[inline]
    pub fn coord_of(&self, index: usize) -> [usize; 3] {
        debug_assert!(index < self.voxel_count());
        let x = index % self.x;
        let rest = index / self.x;
        [x, rest % self.y, rest / self.y]
    }

    /// In-bounds face neighbors of `coord`, in -x,+x,-y,+y,-z,+z order.
    pub fn neighbors6(&self, coord: [usize; 3]) -> impl Iterator<Item = [usize; 3]> {
        let [x, y, z] = coord;
        let extent = self.extent();
        let candidates: [Option<[usize; 3]>; 6] = [
            x.checked_sub(1).map(|x| [x, y, z]),
            (x + 1 < extent[0]).then_some([x + 1, y, z]),
            y.checked_sub(1).map(|y| [x, y, z]),
            (y + 1 < extent[1]).then_some([x, y + 1, z]),
            z.checked_sub(1).map(|z| [x, y, z]),
            (z + 1 < extent[2]).then_some([x, y, z + 1]),
        ];
        candidates.into_iter().flatten()
    }

    /// All undirected 6-neighborhood edges as linear index pairs `(i, j)`
    /// with `i < j`, ordered by `i` first and `j` second. This is the
    /// canonical edge order every edge-indexed container in the crate uses.
    pub fn edges(&self) -> EdgeIter {
        EdgeIter {
            nx: self.x,
            ny: self.y,
            nz: self.z,
            dxy: self.x * self.y,
            coord: [0, 0, 0],
            idx: 0,
            dir: 0,
            remaining: self.edge_count(),
        }
    }

    /// Edges whose lower endpoint lies in slice `z`, in canonical order.
    /// Used to carve the global edge range into per-slice chunks.
    pub(crate) fn slice_edge_count(&self, z: usize) -> usize {
        let within = (self.x - 1) * self.y + self.x * (self.y - 1);
        if z + 1 < self.z {
            within + self.x * self.y
        } else {
            within
        }
    }
}

/// Iterator over the canonical edge order. See [`Dims::edges`].
pub struct EdgeIter {
    nx: usize,
    ny: usize,
    nz: usize,
    dxy: usize,
    coord: [usize; 3],
    idx: usize,
    dir: u8,
    remaining: usize,
}

impl Iterator for EdgeIter {
    type Item = (usize, usize);

    fn next(&mut self) -> Option<(usize, usize)> {
        loop {
            if self.remaining == 0 {
                return None;
            }
            let [x, y, z] = self.coord;
            let out = match self.dir {
                0 => (x + 1 < self.nx).then(|| (self.idx, self.idx + 1)),
                1 => (y + 1 < self.ny).then(|| (self.idx, self.idx + self.nx)),
                _ => (z + 1 < self.nz).then(|| (self.idx, self.idx + self.dxy)),
            };
            if self.dir < 2 {
                self.dir += 1;
            } else {
                self.dir = 0;
                self.idx += 1;
                self.coord[0] += 1;
                if self.coord[0] == self.nx {
                    self.coord[0] = 0;
                    self.coord[1] += 1;
                    if self.coord[1] == self.ny {
                        self.coord[1] = 0;
                        self.coord[2] += 1;
                    }
                }
            }
            if let Some(edge) = out {
                self.remaining -= 1;
                return Some(edge);
            }
        }
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        (self.remaining, Some(self.remaining))
    }
}

impl ExactSizeIterator for EdgeIter {}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_index_examples() {
        let d = Dims::isotropic(4, 4, 4).unwrap();
        assert_eq!(d.linear_index([0, 0, 0]), 0);
        assert_eq!(d.linear_index([1, 0, 0]), 1);
        let d = Dims::isotropic(4, 5, 6).unwrap();
        assert_eq!(d.linear_index([1, 2, 3]), 69);
    }

    #[test]
    fn checked_index_rejects_out_of_bounds() {
        let d = Dims::isotropic(2, 2, 2).unwrap();
        assert!(matches!(
            d.checked_index([2, 0, 0]),
            Err(Error::OutOfBounds { .. })
        ));
        assert!(d.checked_index([1, 1, 1]).is_ok());
    }

    #[test]
    fn neighbor_counts() {
        let d = Dims::isotropic(5, 5, 5).unwrap();
        assert_eq!(d.neighbors6([2, 2, 2]).count(), 6);
        assert_eq!(d.neighbors6([0, 0, 0]).count(), 3);
        let single = Dims::isotropic(1, 1, 1).unwrap();
        assert_eq!(single.neighbors6([0, 0, 0]).count(), 0);
    }

    #[test]
    fn degenerate_dims_rejected() {
        assert!(Dims::isotropic(0, 3, 3).is_err());
        assert!(Dims::new(2, 2, 2, [1.0, 0.0, 1.0]).is_err());
        assert!(Dims::new(2, 2, 2, [1.0, -1.0, 1.0]).is_err());
        assert!(Dims::new(2, 2, 2, [1.0, f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn edge_iter_matches_neighbor_enumeration() {
        for (nx, ny, nz) in [(1, 1, 1), (2, 1, 1), (3, 4, 2), (4, 4, 4), (1, 5, 1)] {
            let d = Dims::isotropic(nx, ny, nz).unwrap();
            let mut expected = Vec::new();
            for idx in 0..d.voxel_count() {
                let c = d.coord_of(idx);
                for n in d.neighbors6(c) {
                    let j = d.linear_index(n);
                    if j > idx {
                        expected.push((idx, j));
                    }
                }
            }
            expected.sort_unstable();
            let got: Vec<_> = d.edges().collect();
            let mut sorted = got.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, expected);
            assert_eq!(got.len(), d.edge_count());
            // Canonical order is already sorted by (i, j).
            assert_eq!(got, sorted);
        }
    }

    #[test]
    fn slice_edge_counts_sum_to_total() {
        for (nx, ny, nz) in [(3, 4, 5), (1, 1, 3), (2, 2, 1)] {
            let d = Dims::isotropic(nx, ny, nz).unwrap();
            let sum: usize = (0..nz).map(|z| d.slice_edge_count(z)).sum();
            assert_eq!(sum, d.edge_count());
        }
    }

    proptest! {
        #[test]
        fn linear_index_is_a_bijection(
            nx in 1usize..=8, ny in 1usize..=8, nz in 1usize..=8
        ) {
            let d = Dims::isotropic(nx, ny, nz).unwrap();
            for idx in 0..d.voxel_count() {
                let c = d.coord_of(idx);
                prop_assert!(d.contains(c));
                prop_assert_eq!(d.linear_index(c), idx);
            }
        }

        #[test]
        fn neighbors_are_symmetric(
            nx in 1usize..=6, ny in 1usize..=6, nz in 1usize..=6
        ) {
            let d = Dims::isotropic(nx, ny, nz).unwrap();
            for idx in 0..d.voxel_count() {
                let c = d.coord_of(idx);
                for n in d.neighbors6(c) {
                    prop_assert!(d.neighbors6(n).any(|m| m == c));
                }
            }
        }

        #[test]
        fn edge_count_closed_form(
            nx in 1usize..=6, ny in 1usize..=6, nz in 1usize..=6
        ) {
            let d = Dims::isotropic(nx, ny, nz).unwrap();
            let enumerated = d.edges().count();
            let (x, y, z) = (nx, ny, nz);
            prop_assert_eq!(enumerated, 3 * x * y * z - x * y - y * z - x * z);
            prop_assert_eq!(enumerated, d.edge_count());
        }
    }
}
