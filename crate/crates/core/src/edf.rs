//! Voxel occupancy grid and truncated Euclidean distance field.
//!
//! Distances are measured between voxel centers and truncated at `d_max`.
//! Updates are incremental: after a set of voxels changes occupancy, only the
//! block within `d_max` of the changes is recomputed, with an exact separable
//! squared-distance transform seeded from every obstacle that can influence
//! that block. The result is identical to the brute-force field.

use std::fmt::Write as _;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type VoxelIndex = [usize; 3];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelGrid {
    origin: Vector3<f64>,
    resolution: f64,
    dims: [usize; 3],
    occupied: Vec<bool>,
}

impl VoxelGrid {
    /// Empty grid whose minimum corner sits at `origin`.
    pub fn new(origin: Vector3<f64>, resolution: f64, dims: [usize; 3]) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::InvalidGrid(format!("resolution must be positive, got {resolution}")));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidGrid(format!("dims must be >= 1, got {dims:?}")));
        }
        if !origin.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite origin".into()));
        }
        let n = dims[0] * dims[1] * dims[2];
        Ok(Self { origin, resolution, dims, occupied: vec![false; n] })
    }

    pub fn origin(&self) -> Vector3<f64> {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }

    /// Upper corner of the mapped volume.
    pub fn max_corner(&self) -> Vector3<f64> {
        self.origin + Vector3::from_fn(|a, _| self.dims[a] as f64 * self.resolution)
    }

    pub fn contains_point(&self, p: &Vector3<f64>) -> bool {
        let hi = self.max_corner();
        (0..3).all(|a| p[a] >= self.origin[a] && p[a] <= hi[a])
    }

    #[inline]
    pub fn linear(&self, v: VoxelIndex) -> usize {
        v[0] + self.dims[0] * (v[1] + self.dims[1] * v[2])
    }

    #[inline]
    pub fn unlinear(&self, i: usize) -> VoxelIndex {
        let x = i % self.dims[0];
        let r = i / self.dims[0];
        [x, r % self.dims[1], r / self.dims[1]]
    }

    pub fn center(&self, v: VoxelIndex) -> Vector3<f64> {
        self.origin + Vector3::from_fn(|a, _| (v[a] as f64 + 0.5) * self.resolution)
    }

    /// Voxel whose cell contains `p`, if any.
    pub fn voxel_at(&self, p: &Vector3<f64>) -> Option<VoxelIndex> {
        if !self.contains_point(p) {
            return None;
        }
        let idx: [usize; 3] = std::array::from_fn(|a| {
            let f = ((p[a] - self.origin[a]) / self.resolution).floor() as usize;
            f.min(self.dims[a] - 1)
        });
        Some(idx)
    }

    pub fn is_occupied(&self, v: VoxelIndex) -> bool {
        self.occupied[self.linear(v)]
    }

    /// Sets one voxel; returns whether its state changed.
    pub fn set(&mut self, v: VoxelIndex, occupied: bool) -> bool {
        let i = self.linear(v);
        let changed = self.occupied[i] != occupied;
        self.occupied[i] = occupied;
        changed
    }

    pub fn occupied_voxels(&self) -> Vec<VoxelIndex> {
        self.occupied
            .iter()
            .enumerate()
            .filter(|(_, o)| **o)
            .map(|(i, _)| self.unlinear(i))
            .collect()
    }

    /// Index range of voxel centers inside `[lo, hi]` along axis `a`.
    fn center_range(&self, a: usize, lo: f64, hi: f64) -> Option<(usize, usize)> {
        let c = |i: i64| self.origin[a] + (i as f64 + 0.5) * self.resolution;
        let guess_lo = ((lo - self.origin[a]) / self.resolution - 0.5).ceil() as i64 - 1;
        let guess_hi = ((hi - self.origin[a]) / self.resolution - 0.5).floor() as i64 + 1;
        let n = self.dims[a] as i64;
        let mut first = guess_lo.max(0);
        while first < n && c(first) < lo {
            first += 1;
        }
        let mut last = guess_hi.min(n - 1);
        while last >= 0 && c(last) > hi {
            last -= 1;
        }
        (first <= last && first < n && last >= 0).then_some((first as usize, last as usize))
    }

    /// Marks every voxel whose center lies in the closed box `[min, max]` and
    /// returns exactly the voxels whose state changed.
    pub fn set_box_obstacle(
        &mut self,
        min_corner: &Vector3<f64>,
        max_corner: &Vector3<f64>,
        occupied: bool,
    ) -> Vec<VoxelIndex> {
        let mut changed = Vec::new();
        let ranges: Option<Vec<(usize, usize)>> =
            (0..3).map(|a| self.center_range(a, min_corner[a], max_corner[a])).collect();
        let Some(r) = ranges else { return changed };
        for z in r[2].0..=r[2].1 {
            for y in r[1].0..=r[1].1 {
                for x in r[0].0..=r[0].1 {
                    if self.set([x, y, z], occupied) {
                        changed.push([x, y, z]);
                    }
                }
            }
        }
        changed
    }

    /// Plain-text dump: origin, resolution, dims, then one occupied voxel
    /// index triple per line.
    pub fn to_dump(&self) -> String {
        let mut out = String::new();
        let o = self.origin;
        let occ = self.occupied_voxels();
        let _ = writeln!(out, "origin {:?} {:?} {:?}", o.x, o.y, o.z);
        let _ = writeln!(out, "resolution {:?}", self.resolution);
        let _ = writeln!(out, "dims {} {} {}", self.dims[0], self.dims[1], self.dims[2]);
        let _ = writeln!(out, "occupied {}", occ.len());
        for v in occ {
            let _ = writeln!(out, "{} {} {}", v[0], v[1], v[2]);
        }
        out
    }

    pub fn from_dump(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut header = |key: &str, count: usize| -> Result<(usize, Vec<String>)> {
            let (n, line) = lines.next().ok_or_else(|| Error::GridDump(format!("missing `{key}` line")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(Error::GridDump(format!("line {n}: expected `{key}`")));
            }
            let vals: Vec<String> = parts.map(str::to_owned).collect();
            if vals.len() != count {
                return Err(Error::GridDump(format!("line {n}: `{key}` takes {count} values")));
            }
            Ok((n, vals))
        };
        let num = |n: usize, s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| Error::GridDump(format!("line {n}: bad number `{s}`")))
        };
        let int = |n: usize, s: &str| -> Result<usize> {
            s.parse::<usize>().map_err(|_| Error::GridDump(format!("line {n}: bad integer `{s}`")))
        };
        let (n, o) = header("origin", 3)?;
        let origin = Vector3::new(num(n, &o[0])?, num(n, &o[1])?, num(n, &o[2])?);
        let (n, r) = header("resolution", 1)?;
        let resolution = num(n, &r[0])?;
        let (n, d) = header("dims", 3)?;
        let dims = [int(n, &d[0])?, int(n, &d[1])?, int(n, &d[2])?];
        let (n, c) = header("occupied", 1)?;
        let count = int(n, &c[0])?;
        let mut grid = Self::new(origin, resolution, dims).map_err(|e| Error::GridDump(e.to_string()))?;
        let mut seen = 0;
        for (n, line) in lines {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(Error::GridDump(format!("line {n}: expected three voxel indices")));
            }
            let v = [int(n, parts[0])?, int(n, parts[1])?, int(n, parts[2])?];
            if (0..3).any(|a| v[a] >= dims[a]) {
                return Err(Error::GridDump(format!("line {n}: voxel {v:?} outside dims {dims:?}")));
            }
            grid.set(v, true);
            seen += 1;
        }
        if seen != count {
            return Err(Error::GridDump(format!("header announces {count} voxels, found {seen}")));
        }
        Ok(grid)
    }
}

/// Truncated Euclidean distance field over a [`VoxelGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelEdf {
    grid: VoxelGrid,
    dist: Vec<f64>,
    d_max: f64,
}

pub const DEFAULT_D_MAX: f64 = 2.0;

impl VoxelEdf {
    /// Builds the exact field for the grid's current occupancy.
    pub fn new(grid: VoxelGrid, d_max: f64) -> Result<Self> {
        if !(d_max > 0.0 && d_max.is_finite()) {
            return Err(Error::InvalidGrid(format!("d_max must be positive, got {d_max}")));
        }
        let n = grid.len();
        let mut edf = Self { grid, dist: vec![d_max; n], d_max };
        let d = edf.grid.dims;
        edf.recompute_block([0, 0, 0], [d[0] - 1, d[1] - 1, d[2] - 1]);
        Ok(edf)
    }

    pub fn grid(&self) -> &VoxelGrid {
        &self.grid
    }

    /// Mutable access to occupancy. Callers must pass the returned change set
    /// to [`VoxelEdf::update_incremental`] before querying again.
    pub fn grid_mut(&mut self) -> &mut VoxelGrid {
        &mut self.grid
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    pub fn distances(&self) -> &[f64] {
        &self.dist
    }

    pub fn voxel_distance(&self, v: VoxelIndex) -> f64 {
        self.dist[self.grid.linear(v)]
    }

    /// Sets box occupancy and updates the field in one go.
    pub fn set_box_obstacle(&mut self, min: &Vector3<f64>, max: &Vector3<f64>, occupied: bool) -> Vec<VoxelIndex> {
        let changed = self.grid.set_box_obstacle(min, max, occupied);
        self.update_incremental(&changed);
        changed
    }

    /// Re-establishes the field after the voxels in `changed` flipped
    /// occupancy in the grid.
    pub fn update_incremental(&mut self, changed: &[VoxelIndex]) {
        if changed.is_empty() {
            return;
        }
        let mut lo = changed[0];
        let mut hi = changed[0];
        for v in changed {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        let reach = (self.d_max / self.grid.resolution).ceil() as usize;
        let d = self.grid.dims;
        let blo: [usize; 3] = std::array::from_fn(|a| lo[a].saturating_sub(reach));
        let bhi: [usize; 3] = std::array::from_fn(|a| (hi[a] + reach).min(d[a] - 1));
        self.recompute_block(blo, bhi);
    }

    /// Exact recomputation of every voxel in `[lo, hi]`. Obstacles up to
    /// `reach` voxels beyond the block are included as seeds, which covers
    /// every obstacle closer than `d_max` to a voxel of the block.
    fn recompute_block(&mut self, lo: [usize; 3], hi: [usize; 3]) {
        let reach = (self.d_max / self.grid.resolution).ceil() as usize;
        let d = self.grid.dims;
        let slo: [usize; 3] = std::array::from_fn(|a| lo[a].saturating_sub(reach));
        let shi: [usize; 3] = std::array::from_fn(|a| (hi[a] + reach).min(d[a] - 1));
        let n: [usize; 3] = std::array::from_fn(|a| shi[a] - slo[a] + 1);
        let local = |x: usize, y: usize, z: usize| x + n[0] * (y + n[1] * z);

        let mut sq = vec![INF; n[0] * n[1] * n[2]];
        for z in 0..n[2] {
            for y in 0..n[1] {
                for x in 0..n[0] {
                    if self.grid.is_occupied([slo[0] + x, slo[1] + y, slo[2] + z]) {
                        sq[local(x, y, z)] = 0.0;
                    }
                }
            }
        }

        let longest = n[0].max(n[1]).max(n[2]);
        let mut line = vec![0.0; longest];
        let mut scratch = Envelope::with_capacity(longest);
        for axis in 0..3 {
            let (u, v) = match axis {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            for j in 0..n[v] {
                for i in 0..n[u] {
                    let at = |t: usize| {
                        let mut c = [0; 3];
                        c[axis] = t;
                        c[u] = i;
                        c[v] = j;
                        local(c[0], c[1], c[2])
                    };
                    let len = n[axis];
                    let mut any = false;
                    for t in 0..len {
                        line[t] = sq[at(t)];
                        any |= line[t] < INF;
                    }
                    if !any {
                        continue;
                    }
                    scratch.transform(&mut line[..len]);
                    for t in 0..len {
                        sq[at(t)] = line[t];
                    }
                }
            }
        }

        let res = self.grid.resolution;
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    let s = sq[local(x - slo[0], y - slo[1], z - slo[2])];
                    let dist = if s >= INF { self.d_max } else { (res * s.sqrt()).min(self.d_max) };
                    let idx = self.grid.linear([x, y, z]);
                    self.dist[idx] = dist;
                }
            }
        }
    }

    /// Trilinear interpolation of the voxel-center distances. Points outside
    /// the mapped volume are treated as free space at `d_max`.
    pub fn query_distance(&self, p: &Vector3<f64>) -> f64 {
        self.query(p).0
    }

    /// Analytic gradient of the trilinear interpolant (zero outside the grid).
    pub fn query_gradient(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.query(p).1
    }

    /// Distance and gradient in one pass.
    pub fn query(&self, p: &Vector3<f64>) -> (f64, Vector3<f64>) {
        if !self.grid.contains_point(p) {
            return (self.d_max, Vector3::zeros());
        }
        let g = &self.grid;
        let mut i0 = [0usize; 3];
        let mut i1 = [0usize; 3];
        let mut t = [0.0f64; 3];
        let mut live = [false; 3];
        for a in 0..3 {
            if g.dims[a] == 1 {
                continue;
            }
            let s = (p[a] - g.origin[a]) / g.resolution - 0.5;
            let base = (s.floor().max(0.0) as usize).min(g.dims[a] - 2);
            let frac = s - base as f64;
            i0[a] = base;
            i1[a] = base + 1;
            t[a] = frac.clamp(0.0, 1.0);
            live[a] = (0.0..=1.0).contains(&frac);
        }
        let v = |x: usize, y: usize, z: usize| self.dist[g.linear([x, y, z])];
        let c000 = v(i0[0], i0[1], i0[2]);
        let c100 = v(i1[0], i0[1], i0[2]);
        let c010 = v(i0[0], i1[1], i0[2]);
        let c110 = v(i1[0], i1[1], i0[2]);
        let c001 = v(i0[0], i0[1], i1[2]);
        let c101 = v(i1[0], i0[1], i1[2]);
        let c011 = v(i0[0], i1[1], i1[2]);
        let c111 = v(i1[0], i1[1], i1[2]);
        let [tx, ty, tz] = t;
        let lerp = |a: f64, b: f64, s: f64| a + (b - a) * s;
        let c00 = lerp(c000, c100, tx);
        let c10 = lerp(c010, c110, tx);
        let c01 = lerp(c001, c101, tx);
        let c11 = lerp(c011, c111, tx);
        let c0 = lerp(c00, c10, ty);
        let c1 = lerp(c01, c11, ty);
        let value = lerp(c0, c1, tz);

        let inv = 1.0 / g.resolution;
        let dx = lerp(lerp(c100 - c000, c110 - c010, ty), lerp(c101 - c001, c111 - c011, ty), tz);
        let dy = lerp(c10 - c00, c11 - c01, tz);
        let dz = c1 - c0;
        let grad = Vector3::new(
            if live[0] { dx * inv } else { 0.0 },
            if live[1] { dy * inv } else { 0.0 },
            if live[2] { dz * inv } else { 0.0 },
        );
        (value, grad)
    }
}

/// Reference field: for every voxel, the minimum center-to-center distance to
/// any occupied voxel, truncated at `d_max`. Each obstacle only visits the
/// voxels within `d_max` of it; everything farther is at `d_max` anyway.
pub fn compute_edf_bruteforce(grid: &VoxelGrid, d_max: f64) -> Result<VoxelEdf> {
    if !(d_max > 0.0 && d_max.is_finite()) {
        return Err(Error::InvalidGrid(format!("d_max must be positive, got {d_max}")));
    }
    let mut dist = vec![d_max; grid.len()];
    let reach = (d_max / grid.resolution).ceil() as usize;
    let d = grid.dims;
    for o in grid.occupied_voxels() {
        let lo: [usize; 3] = std::array::from_fn(|a| o[a].saturating_sub(reach));
        let hi: [usize; 3] = std::array::from_fn(|a| (o[a] + reach).min(d[a] - 1));
        for z in lo[2]..=hi[2] {
            for y in lo[1]..=hi[1] {
                for x in lo[0]..=hi[0] {
                    let i = grid.linear([x, y, z]);
                    // integer lattice offsets keep the squared distance exact
                    let sq: usize = [x, y, z].iter().zip(o).map(|(&c, oc)| c.abs_diff(oc).pow(2)).sum();
                    let r = (grid.resolution * (sq as f64).sqrt()).min(d_max);
                    if r < dist[i] {
                        dist[i] = r;
                    }
                }
            }
        }
    }
    Ok(VoxelEdf { grid: grid.clone(), dist, d_max })
}

const INF: f64 = 1e20;

/// Lower envelope of parabolas for the 1-D squared distance transform
/// (Felzenszwalb & Huttenlocher).
struct Envelope {
    v: Vec<usize>,
    z: Vec<f64>,
    out: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Self { v: vec![0; n], z: vec![0.0; n + 1], out: vec![0.0; n] }
    }

    fn transform(&mut self, f: &mut [f64]) {
        let n = f.len();
        let (v, z) = (&mut self.v, &mut self.z);
        let mut k = 0usize;
        let mut started = false;
        for q in 0..n {
            if f[q] >= INF {
                continue;
            }
            if !started {
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                started = true;
                continue;
            }
            let qf = q as f64;
            loop {
                let p = v[k] as f64;
                let s = ((f[q] + qf * qf) - (f[v[k]] + p * p)) / (2.0 * (qf - p));
                if s <= z[k] && k > 0 {
                    k -= 1;
                    continue;
                }
                if s <= z[k] {
                    // replaces the only parabola
                    v[0] = q;
                    z[0] = f64::NEG_INFINITY;
                    z[1] = f64::INFINITY;
                    break;
                }
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
        if !started {
            return;
        }
        let mut k = 0usize;
        for q in 0..n {
            let qf = q as f64;
            while z[k + 1] < qf {
                k += 1;
            }
            let p = v[k] as f64;
            self.out[q] = (qf - p) * (qf - p) + f[v[k]];
        }
        f.copy_from_slice(&self.out[..n]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> VoxelGrid {
        VoxelGrid::new(Vector3::zeros(), 0.1, [n, n, n]).unwrap()
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(VoxelGrid::new(Vector3::zeros(), 0.0, [2, 2, 2]).is_err());
        assert!(VoxelGrid::new(Vector3::zeros(), 0.1, [2, 0, 2]).is_err());
    }

    #[test]
    fn index_mapping_round_trips() {
        let g = VoxelGrid::new(Vector3::new(-1.0, 2.0, 0.5), 0.2, [5, 7, 3]).unwrap();
        for i in 0..g.len() {
            let v = g.unlinear(i);
            assert_eq!(g.linear(v), i);
            assert_eq!(g.voxel_at(&g.center(v)), Some(v));
        }
    }

    #[test]
    fn sub_voxel_box_marks_one_voxel() {
        let mut g = grid(10);
        let c = g.center([3, 4, 5]);
        let d = Vector3::repeat(0.01);
        let changed = g.set_box_obstacle(&(c - d), &(c + d), true);
        assert_eq!(changed, vec![[3, 4, 5]]);
    }

    #[test]
    fn box_insertion_is_idempotent() {
        let mut g = grid(10);
        let lo = Vector3::new(0.2, 0.2, 0.2);
        let hi = Vector3::new(0.5, 0.6, 0.4);
        assert!(!g.set_box_obstacle(&lo, &hi, true).is_empty());
        assert!(g.set_box_obstacle(&lo, &hi, true).is_empty());
    }

    #[test]
    fn metre_cube_counts_a_thousand_voxels() {
        let mut g = grid(20);
        let lo = Vector3::new(0.5, 0.5, 0.5);
        let hi = Vector3::new(1.5, 1.5, 1.5);
        let changed = g.set_box_obstacle(&lo, &hi, true);
        // counting oracle over every center
        let expect = (0..g.len())
            .filter(|&i| {
                let c = g.center(g.unlinear(i));
                (0..3).all(|a| c[a] >= lo[a] && c[a] <= hi[a])
            })
            .count();
        assert_eq!(expect, 1000);
        assert_eq!(changed.len(), expect);
    }

    #[test]
    fn box_outside_grid_changes_nothing() {
        let mut g = grid(10);
        let changed = g.set_box_obstacle(&Vector3::repeat(5.0), &Vector3::repeat(6.0), true);
        assert!(changed.is_empty());
    }

    #[test]
    fn empty_grid_is_d_max_everywhere() {
        let e = compute_edf_bruteforce(&grid(6), 2.0).unwrap();
        assert!(e.distances().iter().all(|&d| d == 2.0));
        let f = VoxelEdf::new(grid(6), 2.0).unwrap();
        assert!(f.distances().iter().all(|&d| d == 2.0));
    }

    #[test]
    fn axis_aligned_distance() {
        let mut g = grid(10);
        g.set([2, 5, 5], true);
        let e = compute_edf_bruteforce(&g, 2.0).unwrap();
        assert!((e.voxel_distance([5, 5, 5]) - 0.3).abs() < 1e-12);
        let f = VoxelEdf::new(g, 2.0).unwrap();
        assert!((f.voxel_distance([5, 5, 5]) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn two_seeds_take_the_pointwise_minimum() {
        let mut a = grid(12);
        a.set([1, 2, 3], true);
        let mut b = grid(12);
        b.set([9, 8, 4], true);
        let mut both = grid(12);
        both.set([1, 2, 3], true);
        both.set([9, 8, 4], true);
        let ea = compute_edf_bruteforce(&a, 2.0).unwrap();
        let eb = compute_edf_bruteforce(&b, 2.0).unwrap();
        let e = VoxelEdf::new(both, 2.0).unwrap();
        for i in 0..e.distances().len() {
            let m = ea.distances()[i].min(eb.distances()[i]);
            assert!((e.distances()[i] - m).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_change_set_leaves_field_bitwise_unchanged() {
        let mut g = grid(8);
        g.set([4, 4, 4], true);
        let mut e = VoxelEdf::new(g, 2.0).unwrap();
        let before = e.distances().to_vec();
        e.update_incremental(&[]);
        assert!(before.iter().zip(e.distances()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn interpolation_identities() {
        let mut g = grid(10);
        g.set([2, 2, 2], true);
        let e = VoxelEdf::new(g, 2.0).unwrap();
        let c = e.grid().center([5, 3, 4]);
        assert!((e.query_distance(&c) - e.voxel_distance([5, 3, 4])).abs() < 1e-15);
        let mid = (e.grid().center([5, 3, 4]) + e.grid().center([6, 3, 4])) * 0.5;
        let mean = 0.5 * (e.voxel_distance([5, 3, 4]) + e.voxel_distance([6, 3, 4]));
        assert!((e.query_distance(&mid) - mean).abs() < 1e-12);
        assert_eq!(e.query_distance(&Vector3::new(-1.0, 0.5, 0.5)), 2.0);
        assert_eq!(e.query_gradient(&Vector3::new(-1.0, 0.5, 0.5)), Vector3::zeros());
    }

    #[test]
    fn uniform_field_has_zero_gradient() {
        let e = VoxelEdf::new(grid(6), 2.0).unwrap();
        assert_eq!(e.query_gradient(&Vector3::new(0.23, 0.31, 0.27)), Vector3::zeros());
    }

    #[test]
    fn linear_cell_gives_constant_slope() {
        // obstacle plane at x = 0 makes distances linear in x near the axis
        let mut g = VoxelGrid::new(Vector3::zeros(), 0.1, [10, 3, 3]).unwrap();
        for y in 0..3 {
            for z in 0..3 {
                g.set([0, y, z], true);
            }
        }
        let e = VoxelEdf::new(g, 2.0).unwrap();
        let grad = e.query_gradient(&Vector3::new(0.42, 0.15, 0.15));
        assert!((grad - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn dump_round_trip_and_diagnostics() {
        let mut g = VoxelGrid::new(Vector3::new(-0.3, 0.1, 2.0), 0.2, [4, 5, 6]).unwrap();
        g.set([1, 2, 3], true);
        g.set([3, 4, 5], true);
        let text = g.to_dump();
        assert_eq!(VoxelGrid::from_dump(&text).unwrap(), g);
        let bad = text.replace("3 4 5", "3 9 5");
        assert!(matches!(VoxelGrid::from_dump(&bad), Err(Error::GridDump(m)) if m.contains("outside")));
        let short = text.replace("occupied 2", "occupied 3");
        assert!(VoxelGrid::from_dump(&short).is_err());
    }
}
