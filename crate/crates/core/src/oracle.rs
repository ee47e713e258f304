//! Brute-force reference for the toy model, written directly from the boolean
//! equations. Shares nothing with the table compiler or the forward recursion.

use crate::scm::{Intervention, ScmTemplate};

pub const P_UZ: f64 = 0.6;
pub const P_UX: f64 = 0.11;
pub const P_UXY: f64 = 0.51;
pub const P_UY: f64 = 0.15;

/// Per-slice intervention on the toy model.
#[derive(Clone, Copy, Debug, Default)]
pub struct ToyDo {
    pub z: Option<i64>,
    pub x: Option<i64>,
}

impl ToyDo {
    pub fn from_pairs(pairs: &[(&str, i64)]) -> Self {
        let mut d = ToyDo::default();
        for &(n, v) in pairs {
            match n {
                "Z" => d.z = Some(v),
                "X" => d.x = Some(v),
                _ => panic!("toy oracle intervenes on Z or X only"),
            }
        }
        d
    }

    pub fn from_intervention(t: &ScmTemplate, iv: &Intervention) -> Self {
        let pairs: Vec<(&str, i64)> = iv.iter().map(|(v, x)| (t.name(v), x)).collect();
        Self::from_pairs(&pairs)
    }
}

/// `E[Y_T]` for `T = per_slice.len() - 1`, summing over all 2^(4(T+1)) exogenous draws.
pub fn toy_mean(per_slice: &[ToyDo]) -> f64 {
    let slices = per_slice.len();
    let bits = 4 * slices;
    let mut total = 0.0;
    for assignment in 0u64..(1u64 << bits) {
        let bit = |k: usize| ((assignment >> k) & 1) as i64;
        let mut p = 1.0;
        let (mut z, mut x, mut y) = (0i64, 0i64, 0i64);
        for (s, d) in per_slice.iter().enumerate() {
            let (uz, ux, uxy, uy) = (bit(4 * s), bit(4 * s + 1), bit(4 * s + 2), bit(4 * s + 3));
            for (u, q) in [(uz, P_UZ), (ux, P_UX), (uxy, P_UXY), (uy, P_UY)] {
                p *= if u == 1 { q } else { 1.0 - q };
            }
            let (nz, nx, ny);
            if s == 0 {
                nz = d.z.unwrap_or(uz);
                nx = d.x.unwrap_or(ux ^ uxy ^ nz);
                ny = 1 ^ uy ^ uxy ^ nx;
            } else {
                nz = d.z.unwrap_or(uz & z);
                nx = d.x.unwrap_or(ux ^ uxy ^ nz ^ x);
                ny = 1 ^ uy ^ uxy ^ (nx & y);
            }
            z = nz;
            x = nx;
            y = ny;
        }
        total += p * y as f64;
    }
    total
}

/// Observational joint of `(Z_0, X_0, Y_0)`, indexed `z*4 + x*2 + y`.
pub fn toy_slice0_joint() -> [f64; 8] {
    let mut j = [0.0; 8];
    for a in 0u32..16 {
        let b = |k: u32| i64::from((a >> k) & 1);
        let (uz, ux, uxy, uy) = (b(0), b(1), b(2), b(3));
        let mut p = 1.0;
        for (u, q) in [(uz, P_UZ), (ux, P_UX), (uxy, P_UXY), (uy, P_UY)] {
            p *= if u == 1 { q } else { 1.0 - q };
        }
        let z = uz;
        let x = ux ^ uxy ^ z;
        let y = 1 ^ uy ^ uxy ^ x;
        j[(z * 4 + x * 2 + y) as usize] += p;
    }
    j
}
