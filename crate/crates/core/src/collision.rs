//! Sphere decomposition of the three collision links and their signed
//! distances against a [`VoxelEdf`].
//!
//! Each collision link is the segment between two points rigidly attached to
//! (possibly different) link frames. Attaching the arm's far end to the
//! telescope frame makes the sphere count follow the telescope stroke.

use nalgebra::{SMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::crane::{joint_frames, point_jacobian, CraneParams, JointFrame, Vec7, N_JOINTS};
use crate::edf::VoxelEdf;
use crate::error::{Error, Result};

pub const N_COLLISION_LINKS: usize = 3;

/// A point fixed in the frame of `link`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Attachment {
    pub link: usize,
    pub offset: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollisionLink {
    pub start: Attachment,
    pub end: Attachment,
    /// Sphere radius before voxel inflation (m).
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollisionGeometry {
    /// Target spacing between neighbouring sphere centers (m).
    pub spacing: f64,
    pub boom: CollisionLink,
    pub arm: CollisionLink,
    /// Pendulum and gripper body as one rigid link hanging from the arm tip.
    pub gripper: CollisionLink,
}

impl Default for CollisionGeometry {
    fn default() -> Self {
        let at = |link, x, y, z| Attachment { link, offset: Vector3::new(x, y, z) };
        Self {
            spacing: 0.4,
            boom: CollisionLink { start: at(1, 0.0, 0.0, 0.0), end: at(1, 4.0, 0.0, 0.0), radius: 0.25 },
            arm: CollisionLink { start: at(2, 0.0, 0.0, 0.0), end: at(3, 3.0, 0.0, 0.0), radius: 0.20 },
            gripper: CollisionLink { start: at(6, 0.0, 0.0, 0.0), end: at(6, 0.0, 0.0, -1.2), radius: 0.45 },
        }
    }
}

impl CollisionGeometry {
    pub fn links(&self) -> [&CollisionLink; N_COLLISION_LINKS] {
        [&self.boom, &self.arm, &self.gripper]
    }

    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        if !(self.spacing > 0.0 && self.spacing.is_finite()) {
            issues.push(format!("spacing must be positive, got {}", self.spacing));
        }
        for (name, l) in ["boom", "arm", "gripper"].iter().zip(self.links()) {
            if !(l.radius > 0.0 && l.radius.is_finite()) {
                issues.push(format!("{name}: radius must be positive, got {}", l.radius));
            } else if 0.5 * self.spacing > l.radius {
                issues.push(format!("{name}: radius {} leaves gaps at spacing {}", l.radius, self.spacing));
            }
            for a in [l.start, l.end] {
                if a.link >= N_JOINTS {
                    issues.push(format!("{name}: attachment link {} out of range", a.link));
                }
                if !a.offset.iter().all(|v| v.is_finite()) {
                    issues.push(format!("{name}: non-finite attachment offset"));
                }
            }
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(issues.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub center: Vector3<f64>,
    pub radius: f64,
    /// Position of the center along its segment, 0 at the start attachment.
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphereSet {
    pub links: [Vec<Sphere>; N_COLLISION_LINKS],
}

impl SphereSet {
    pub fn max_radius(&self) -> f64 {
        self.links.iter().flatten().map(|s| s.radius).fold(0.0, f64::max)
    }
}

fn endpoints(frames: &[JointFrame; N_JOINTS], link: &CollisionLink) -> (Vector3<f64>, Vector3<f64>) {
    (frames[link.start.link].to_world(&link.start.offset), frames[link.end.link].to_world(&link.end.offset))
}

/// Number of spheres for a segment of length `len`.
pub fn sphere_count(len: f64, spacing: f64) -> usize {
    // guard against 3.0/0.4 landing a hair above an integer
    ((len / spacing) - 1e-9).ceil().max(0.0) as usize + 1
}

fn spheres_on(frames: &[JointFrame; N_JOINTS], link: &CollisionLink, spacing: f64, inflation: f64) -> Vec<Sphere> {
    let (a, b) = endpoints(frames, link);
    let m = sphere_count((b - a).norm(), spacing);
    (0..m)
        .map(|j| {
            let s = if m == 1 { 0.0 } else { j as f64 / (m - 1) as f64 };
            Sphere { center: a.lerp(&b, s), radius: link.radius + inflation, fraction: s }
        })
        .collect()
}

/// Spheres covering boom, arm and gripper at configuration `q`. Radii are
/// inflated by half the voxel size to absorb the center-to-center distance
/// discretization.
pub fn decompose_links(params: &CraneParams, geom: &CollisionGeometry, q: &Vec7, resolution: f64) -> SphereSet {
    let frames = joint_frames(params, q);
    let inflation = 0.5 * resolution;
    SphereSet { links: geom.links().map(|l| spheres_on(&frames, l, geom.spacing, inflation)) }
}

/// `min_j d(p_j) − r_j` and the index of the minimizing sphere (lowest index
/// on ties).
pub fn link_signed_distance(edf: &VoxelEdf, spheres: &[Sphere]) -> (f64, usize) {
    assert!(!spheres.is_empty(), "collision link without spheres");
    let mut best = (f64::INFINITY, 0);
    for (j, s) in spheres.iter().enumerate() {
        let sd = edf.query_distance(&s.center) - s.radius;
        if sd < best.0 {
            best = (sd, j);
        }
    }
    best
}

/// Position Jacobian of a sphere center at `fraction` along `link`.
fn sphere_jacobian(frames: &[JointFrame; N_JOINTS], link: &CollisionLink, fraction: f64) -> SMatrix<f64, 3, N_JOINTS> {
    let (a, b) = endpoints(frames, link);
    let ja = point_jacobian(frames, link.start.link, &a);
    let jb = point_jacobian(frames, link.end.link, &b);
    ja * (1.0 - fraction) + jb * fraction
}

/// Signed distance and its gradient with respect to `q`, for one link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkDistance {
    pub sd: f64,
    pub sphere: usize,
    pub gradient: Vec7,
}

/// All three link distances with gradients from a single kinematics pass.
pub fn link_distances(
    edf: &VoxelEdf,
    params: &CraneParams,
    geom: &CollisionGeometry,
    q: &Vec7,
) -> [LinkDistance; N_COLLISION_LINKS] {
    let frames = joint_frames(params, q);
    let inflation = 0.5 * edf.grid().resolution();
    let links = geom.links();
    std::array::from_fn(|i| {
        let spheres = spheres_on(&frames, links[i], geom.spacing, inflation);
        let (sd, j) = link_signed_distance(edf, &spheres);
        let grad_p = edf.query_gradient(&spheres[j].center);
        let gradient = if grad_p == Vector3::zeros() {
            Vec7::zeros()
        } else {
            sphere_jacobian(&frames, links[i], spheres[j].fraction).transpose() * grad_p
        };
        LinkDistance { sd, sphere: j, gradient }
    })
}

/// `∂sd_i/∂q` through the currently minimizing sphere of link `link`.
pub fn signed_distance_gradient(
    edf: &VoxelEdf,
    params: &CraneParams,
    geom: &CollisionGeometry,
    q: &Vec7,
    link: usize,
) -> Vec7 {
    link_distances(edf, params, geom, q)[link].gradient
}

/// `[sd_1, sd_2, sd_3]` at `q`.
pub fn signed_distances(edf: &VoxelEdf, params: &CraneParams, geom: &CollisionGeometry, q: &Vec7) -> [f64; 3] {
    let set = decompose_links(params, geom, q, edf.grid().resolution());
    set.links.each_ref().map(|s| link_signed_distance(edf, s).0)
}
