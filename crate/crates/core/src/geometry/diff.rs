//! Tape-differentiable counterparts of the geometry operations.
//!
//! These mirror the plain functions in the parent module but build their
//! arithmetic on a [`Tape`], so gradients flow from reprojection losses back
//! through projection, triangulation, and frame normalization into the 2-D
//! detections. Camera parameters enter as constants.

use nalgebra::Vector3;

use crate::error::Result;
use crate::tensor::{Tape, Tensor, Var};

use super::CameraParams;

/// Scale a small vector by a scalar node (broadcast via repetition).
pub fn vec_scale(tape: &mut Tape, v: Var, s: Var) -> Result<Var> {
    let n = tape.values(v).len();
    let reps = vec![s; n];
    let expanded = tape.concat(&reps)?;
    tape.mul(v, expanded)
}

/// Divide a small vector elementwise by a scalar node.
pub fn vec_div_scalar(tape: &mut Tape, v: Var, s: Var) -> Result<Var> {
    let n = tape.values(v).len();
    let reps = vec![s; n];
    let expanded = tape.concat(&reps)?;
    tape.div(v, expanded)
}

fn component(tape: &mut Tape, v: Var, idx: usize) -> Result<Var> {
    tape.slice(v, idx, &[1])
}

fn cross3(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let ax = component(tape, a, 0)?;
    let ay = component(tape, a, 1)?;
    let az = component(tape, a, 2)?;
    let bx = component(tape, b, 0)?;
    let by = component(tape, b, 1)?;
    let bz = component(tape, b, 2)?;
    let t1 = tape.mul(ay, bz)?;
    let t2 = tape.mul(az, by)?;
    let cx = tape.sub(t1, t2)?;
    let t3 = tape.mul(az, bx)?;
    let t4 = tape.mul(ax, bz)?;
    let cy = tape.sub(t3, t4)?;
    let t5 = tape.mul(ax, by)?;
    let t6 = tape.mul(ay, bx)?;
    let cz = tape.sub(t5, t6)?;
    tape.concat(&[cx, cy, cz])
}

fn matrix3_leaf(tape: &mut Tape, m: &nalgebra::Matrix3<f64>) -> Var {
    let mut values = Vec::with_capacity(9);
    for r in 0..3 {
        for c in 0..3 {
            values.push(m[(r, c)]);
        }
    }
    tape.leaf(Tensor::new(vec![3, 3], values).expect("3x3"))
}

fn vector3_leaf(tape: &mut Tape, v: &Vector3<f64>) -> Var {
    tape.leaf(Tensor::from_vec(vec![v.x, v.y, v.z]))
}

/// Pinhole projection of a world point node `[3]` into pixels `[2]`.
///
/// The caller is responsible for checking depth validity beforehand (the
/// value-level check lives in [`super::project`]).
pub fn project_t(tape: &mut Tape, cam: &CameraParams, x: Var) -> Result<Var> {
    let r = matrix3_leaf(tape, &cam.r);
    let t = vector3_leaf(tape, &cam.t);
    let k = matrix3_leaf(tape, &cam.k);
    let rx = tape.matmul(r, x)?;
    let xc = tape.add(rx, t)?;
    let uvw = tape.matmul(k, xc)?;
    let u = component(tape, uvw, 0)?;
    let v = component(tape, uvw, 1)?;
    let w = component(tape, uvw, 2)?;
    let pu = tape.div(u, w)?;
    let pv = tape.div(v, w)?;
    tape.concat(&[pu, pv])
}

/// Two-view DLT triangulation on the tape: observations `z_i`, `z_j` are
/// `[2]` nodes; the output is the `[3]` world point. Solves the same
/// normal equations as [`super::triangulate_dlt`], via Cramer's rule.
pub fn triangulate_dlt_t(
    tape: &mut Tape,
    z_i: Var,
    z_j: Var,
    cam_i: &CameraParams,
    cam_j: &CameraParams,
) -> Result<Var> {
    // Four DLT rows; each row r gives entries e[r][0..3] and rhs b[r].
    let mut entries: Vec<[Var; 3]> = Vec::with_capacity(4);
    let mut rhs: Vec<Var> = Vec::with_capacity(4);
    for (cam, z) in [(cam_i, z_i), (cam_j, z_j)] {
        let m = cam.projection_rows();
        for (coord_idx, row) in [(0usize, &m[0]), (1usize, &m[1])] {
            let coord = component(tape, z, coord_idx)?;
            let mut row_entries = [coord; 3];
            for (col, entry) in row_entries.iter_mut().enumerate() {
                // coord * m3[col] - row[col]
                let scaled = tape.scalar_mul(coord, m[2][col]);
                *entry = tape.add_const(scaled, -row[col]);
            }
            entries.push(row_entries);
            // row[3] is constant, so rhs = -coord * m3[3] + row[3]
            let scaled = tape.scalar_mul(coord, -m[2][3]);
            rhs.push(tape.add_const(scaled, row[3]));
        }
    }

    // Columns of the 4x3 design matrix as [4] nodes.
    let mut cols = Vec::with_capacity(3);
    for c in 0..3 {
        let col = tape.concat(&[entries[0][c], entries[1][c], entries[2][c], entries[3][c]])?;
        cols.push(col);
    }
    let b = tape.concat(&rhs)?;

    // Normal equations N x = c with N = A^T A (symmetric).
    let mut n = [[None; 3]; 3];
    for r in 0..3 {
        for c in r..3 {
            let v = tape.dot(cols[r], cols[c])?;
            n[r][c] = Some(v);
            n[c][r] = Some(v);
        }
    }
    let n = n.map(|row| row.map(|v| v.expect("filled")));
    let c_vec = [
        tape.dot(cols[0], b)?,
        tape.dot(cols[1], b)?,
        tape.dot(cols[2], b)?,
    ];

    let det = det3(tape, &n)?;
    let mut solution = Vec::with_capacity(3);
    for col in 0..3 {
        let mut replaced = n;
        for row in 0..3 {
            replaced[row][col] = c_vec[row];
        }
        let d = det3(tape, &replaced)?;
        solution.push(tape.div(d, det)?);
    }
    tape.concat(&solution)
}

fn det3(tape: &mut Tape, m: &[[Var; 3]; 3]) -> Result<Var> {
    let m1122 = tape.mul(m[1][1], m[2][2])?;
    let m1221 = tape.mul(m[1][2], m[2][1])?;
    let c0 = tape.sub(m1122, m1221)?;
    let m1022 = tape.mul(m[1][0], m[2][2])?;
    let m1220 = tape.mul(m[1][2], m[2][0])?;
    let c1 = tape.sub(m1022, m1220)?;
    let m1021 = tape.mul(m[1][0], m[2][1])?;
    let m1120 = tape.mul(m[1][1], m[2][0])?;
    let c2 = tape.sub(m1021, m1120)?;
    let t0 = tape.mul(m[0][0], c0)?;
    let t1 = tape.mul(m[0][1], c1)?;
    let t2 = tape.mul(m[0][2], c2)?;
    let d = tape.sub(t0, t1)?;
    tape.add(d, t2)
}

/// Canonical body frame of a 3-D point set, kept on the tape so the frame
/// itself is differentiated. Mirrors [`super::normalize_pose`].
pub struct CanonicalFrame {
    pub origin: Var,
    pub x_axis: Var,
    pub y_axis: Var,
    pub z_axis: Var,
    /// Spine length node (`[1]`), i.e. the inverse of the transform scale.
    pub spine_len: Var,
}

impl CanonicalFrame {
    /// Map one world point node into canonical coordinates.
    pub fn to_canonical(&self, tape: &mut Tape, point: Var) -> Result<Var> {
        let q = tape.sub(point, self.origin)?;
        let dx = tape.dot(q, self.x_axis)?;
        let dy = tape.dot(q, self.y_axis)?;
        let dz = tape.dot(q, self.z_axis)?;
        let coords = tape.concat(&[dx, dy, dz])?;
        vec_div_scalar(tape, coords, self.spine_len)
    }

    /// Map one canonical point node back to world coordinates.
    pub fn to_world(&self, tape: &mut Tape, point: Var) -> Result<Var> {
        let cx = tape.slice(point, 0, &[1])?;
        let cy = tape.slice(point, 1, &[1])?;
        let cz = tape.slice(point, 2, &[1])?;
        let sx = vec_scale(tape, self.x_axis, cx)?;
        let sy = vec_scale(tape, self.y_axis, cy)?;
        let sz = vec_scale(tape, self.z_axis, cz)?;
        let sum = tape.add(sx, sy)?;
        let local = tape.add(sum, sz)?;
        let scaled = vec_scale(tape, local, self.spine_len)?;
        tape.add(scaled, self.origin)
    }
}

/// Build the canonical frame from the designated triple of world points
/// `(spine base, spine top, shoulder)`, each a `[3]` node.
pub fn canonical_frame_t(tape: &mut Tape, spine_base: Var, spine_top: Var, shoulder: Var) -> Result<CanonicalFrame> {
    let spine = tape.sub(spine_top, spine_base)?;
    let spine_len = tape.l2_norm(spine);
    let x_axis = vec_div_scalar(tape, spine, spine_len)?;

    let limb = tape.sub(shoulder, spine_top)?;
    let along = tape.dot(limb, x_axis)?;
    let proj = vec_scale(tape, x_axis, along)?;
    let y_raw = tape.sub(limb, proj)?;
    let y_len = tape.l2_norm(y_raw);
    let y_axis = vec_div_scalar(tape, y_raw, y_len)?;

    let z_axis = cross3(tape, x_axis, y_axis)?;
    Ok(CanonicalFrame { origin: spine_base, x_axis, y_axis, z_axis, spine_len })
}
