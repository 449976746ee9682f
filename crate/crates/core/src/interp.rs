//! Point sampling and geometric warps of volumes and masks.
//!
//! Continuous indices address voxel centers: index `i` is the center of voxel
//! `i`. Physical coordinates used by [`Affine`] are millimetres relative to the
//! volume center, axis order `(z, y, x)`.

use crate::volume::{BinaryMask, Volume};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Coordinates outside the grid read the nearest edge voxel.
    Clamp,
    /// Voxels outside the grid read as zero.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    #[default]
    Trilinear,
    Nearest,
}

impl std::str::FromStr for Interpolation {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s {
            "trilinear" | "linear" => Ok(Interpolation::Trilinear),
            "nearest" => Ok(Interpolation::Nearest),
            other => Err(crate::error::Error::Config(format!(
                "unknown interpolation '{other}'"
            ))),
        }
    }
}

#[inline]
fn read(v: &Volume, idx: [i64; 3], boundary: Boundary) -> f64 {
    let s = v.shape();
    let mut c = [0usize; 3];
    for a in 0..3 {
        let n = s[a] as i64;
        if idx[a] < 0 || idx[a] >= n {
            match boundary {
                Boundary::Zero => return 0.0,
                Boundary::Clamp => c[a] = idx[a].clamp(0, n - 1) as usize,
            }
        } else {
            c[a] = idx[a] as usize;
        }
    }
    v.get(c[0], c[1], c[2])
}

/// Trilinear sample at continuous index `p = (z, y, x)`.
pub fn sample_trilinear(v: &Volume, p: [f64; 3], boundary: Boundary) -> f64 {
    let base = [p[0].floor(), p[1].floor(), p[2].floor()];
    let f = [p[0] - base[0], p[1] - base[1], p[2] - base[2]];
    let b = [base[0] as i64, base[1] as i64, base[2] as i64];
    let mut acc = 0.0;
    for dz in 0..2 {
        let wz = if dz == 0 { 1.0 - f[0] } else { f[0] };
        if wz == 0.0 {
            continue;
        }
        for dy in 0..2 {
            let wy = if dy == 0 { 1.0 - f[1] } else { f[1] };
            if wy == 0.0 {
                continue;
            }
            for dx in 0..2 {
                let wx = if dx == 0 { 1.0 - f[2] } else { f[2] };
                if wx == 0.0 {
                    continue;
                }
                acc += wz * wy * wx * read(v, [b[0] + dz, b[1] + dy, b[2] + dx], boundary);
            }
        }
    }
    acc
}

/// Nearest-neighbour sample; halves round up.
pub fn sample_nearest(v: &Volume, p: [f64; 3], boundary: Boundary) -> f64 {
    let idx = [
        (p[0] + 0.5).floor() as i64,
        (p[1] + 0.5).floor() as i64,
        (p[2] + 0.5).floor() as i64,
    ];
    read(v, idx, boundary)
}

pub fn sample(v: &Volume, p: [f64; 3], mode: Interpolation, boundary: Boundary) -> f64 {
    match mode {
        Interpolation::Trilinear => sample_trilinear(v, p, boundary),
        Interpolation::Nearest => sample_nearest(v, p, boundary),
    }
}

type Mat3 = [[f64; 3]; 3];

fn matmul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn transpose(a: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

/// Exact sine/cosine for multiples of 90°, `sin_cos` otherwise.
fn sin_cos_deg(deg: f64) -> (f64, f64) {
    let quarter = deg / 90.0;
    if quarter == quarter.round() {
        match (quarter.round() as i64).rem_euclid(4) {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        deg.to_radians().sin_cos()
    }
}

/// Rotation by Euler angles in degrees about the z, y and x axes, applied
/// x first, then y, then z.
pub fn rotation_matrix(rot_deg: [f64; 3]) -> Mat3 {
    // axis order of coordinates is (z, y, x)
    let (sz, cz) = sin_cos_deg(rot_deg[0]);
    let (sy, cy) = sin_cos_deg(rot_deg[1]);
    let (sx, cx) = sin_cos_deg(rot_deg[2]);
    // rotation about z mixes (y, x)
    let rz = [[1.0, 0.0, 0.0], [0.0, cz, -sz], [0.0, sz, cz]];
    // rotation about y mixes (z, x)
    let ry = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
    // rotation about x mixes (z, y)
    let rx = [[cx, -sx, 0.0], [sx, cx, 0.0], [0.0, 0.0, 1.0]];
    matmul(&rz, &matmul(&ry, &rx))
}

/// `p ↦ M·p + t` in physical coordinates about the volume center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub matrix: Mat3,
    pub offset: [f64; 3],
}

impl Affine {
    pub fn identity() -> Self {
        Self {
            matrix: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            offset: [0.0; 3],
        }
    }

    pub fn rigid(rot_deg: [f64; 3], trans_mm: [f64; 3]) -> Self {
        Self {
            matrix: rotation_matrix(rot_deg),
            offset: trans_mm,
        }
    }

    /// Scale, then rotate, then translate.
    pub fn scale_rotate_translate(scale: [f64; 3], rot_deg: [f64; 3], trans_mm: [f64; 3]) -> Self {
        let s = [
            [scale[0], 0.0, 0.0],
            [0.0, scale[1], 0.0],
            [0.0, 0.0, scale[2]],
        ];
        Self {
            matrix: matmul(&rotation_matrix(rot_deg), &s),
            offset: trans_mm,
        }
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let m = &self.matrix;
        [
            m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2] + self.offset[0],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2] + self.offset[1],
            m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2] + self.offset[2],
        ]
    }

    /// Inverse map; uses the transpose when the matrix is orthonormal.
    pub fn inverse(&self) -> Self {
        let m = &self.matrix;
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
        let mtm = matmul(&transpose(m), m);
        let orthonormal = (0..3).all(|i| {
            (0..3).all(|j| (mtm[i][j] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12)
        });
        let inv = if orthonormal {
            transpose(m)
        } else {
            let mut inv = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                    let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                    inv[i][j] = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / det;
                }
            }
            inv
        };
        let t = self.offset;
        let neg = [
            -(inv[0][0] * t[0] + inv[0][1] * t[1] + inv[0][2] * t[2]),
            -(inv[1][0] * t[0] + inv[1][1] * t[1] + inv[1][2] * t[2]),
            -(inv[2][0] * t[0] + inv[2][1] * t[1] + inv[2][2] * t[2]),
        ];
        Self {
            matrix: inv,
            offset: neg,
        }
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }
}

fn warp_points(
    shape: [usize; 3],
    spacing: [f64; 3],
    forward: &Affine,
    mut visit: impl FnMut(usize, [f64; 3]),
) {
    let inv = forward.inverse();
    let center = [
        (shape[0] as f64 - 1.0) / 2.0,
        (shape[1] as f64 - 1.0) / 2.0,
        (shape[2] as f64 - 1.0) / 2.0,
    ];
    let mut i = 0;
    for z in 0..shape[0] {
        for y in 0..shape[1] {
            for x in 0..shape[2] {
                let p = [
                    (z as f64 - center[0]) * spacing[0],
                    (y as f64 - center[1]) * spacing[1],
                    (x as f64 - center[2]) * spacing[2],
                ];
                let q = inv.apply(p);
                visit(
                    i,
                    [
                        q[0] / spacing[0] + center[0],
                        q[1] / spacing[1] + center[1],
                        q[2] / spacing[2] + center[2],
                    ],
                );
                i += 1;
            }
        }
    }
}

/// Moves image content by `forward`: `out(p) = v(forward⁻¹(p))`.
pub fn warp_volume(v: &Volume, forward: &Affine, mode: Interpolation, boundary: Boundary) -> Volume {
    if forward.is_identity() {
        return v.clone();
    }
    let mut out = vec![0.0; v.len()];
    warp_points(v.shape(), v.spacing(), forward, |i, q| {
        out[i] = sample(v, q, mode, boundary);
    });
    v.with_data(out).expect("same geometry")
}

/// Nearest-neighbour warp of a mask; outside the grid is background.
pub fn warp_mask(m: &BinaryMask, forward: &Affine) -> BinaryMask {
    if forward.is_identity() {
        return m.clone();
    }
    let src = m.to_volume();
    let mut out = vec![false; m.len()];
    warp_points(m.shape(), m.spacing(), forward, |i, q| {
        out[i] = sample_nearest(&src, q, Boundary::Zero) > 0.5;
    });
    BinaryMask::new(out, m.shape(), m.spacing()).expect("same geometry")
}
