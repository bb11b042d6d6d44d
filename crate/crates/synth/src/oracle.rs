//! Definitional brute-force references. Nothing here calls the fast paths
//! they are compared against.

use egomem_core::geometry::{PinholeIntrinsics, PoseSE3, Vec3};
use egomem_core::memory::SpatialMemory;
use num_bigint::{BigInt, Sign};
use num_traits::{Signed, ToPrimitive, Zero};

/// Marks a pixel no voxel projects onto.
pub const UNASSIGNED: u32 = u32::MAX;

/// Smallest camera depth a voxel may have to be drawn.
const ORACLE_Z_MIN: f64 = 1e-4;

/// Per-pixel index of the nearest RGB voxel whose center projects into that
/// pixel (radius 0). Ties in depth keep the lower voxel index.
pub fn oracle_splat(mem: &SpatialMemory, pose: &PoseSE3, intr: &PinholeIntrinsics) -> Vec<u32> {
    let (w, h) = (intr.width, intr.height);
    // world -> camera: R^T (p - t), written out by hand.
    let r = pose.rotation;
    let t = pose.translation;
    let cam: Vec<Option<(f64, f64, f64)>> = mem
        .rgb_voxels
        .iter()
        .map(|v| {
            let d = [v.center.x - t.x, v.center.y - t.y, v.center.z - t.z];
            let c: [f64; 3] =
                std::array::from_fn(|i| r[(0, i)] * d[0] + r[(1, i)] * d[1] + r[(2, i)] * d[2]);
            if !(c[2] > ORACLE_Z_MIN) {
                return None;
            }
            let u = intr.fx * c[0] / c[2] + intr.cx;
            let v = intr.fy * c[1] / c[2] + intr.cy;
            (u >= 0.0 && u < w as f64 && v >= 0.0 && v < h as f64).then_some((u, v, c[2]))
        })
        .collect();
    let mut out = vec![UNASSIGNED; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut best: Option<(f64, u32)> = None;
            for (i, c) in cam.iter().enumerate() {
                let Some((u, v, z)) = *c else { continue };
                if u.floor() as usize != x || v.floor() as usize != y {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bz, _)) => z < bz,
                };
                if better {
                    best = Some((z, i as u32));
                }
            }
            if let Some((_, i)) = best {
                out[y * w + x] = i;
            }
        }
    }
    out
}

/// One pooled voxel: floor index, center and mean payload.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleVoxel {
    pub index: [i64; 3],
    pub center: [f64; 3],
    pub payload: Vec<f64>,
}

/// `x = m * 2^-1074` exactly, for finite `x`.
fn to_fixed(x: f64) -> BigInt {
    assert!(x.is_finite(), "oracle payloads must be finite");
    if x == 0.0 {
        return BigInt::zero();
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 {
        Sign::Minus
    } else {
        Sign::Plus
    };
    let exp = ((bits >> 52) & 0x7FF) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mant, e) = if exp == 0 {
        (frac, 1 - 1075)
    } else {
        (frac | (1 << 52), exp - 1075)
    };
    let shift = (e + 1074) as usize;
    BigInt::from_biguint(sign, num_bigint::BigUint::from(mant) << shift)
}

/// Nearest `f64` (ties to even) to `s * 2^-1074`.
fn from_fixed(s: &BigInt) -> f64 {
    if s.is_zero() {
        return 0.0;
    }
    let neg = s.is_negative();
    let mag = s.abs().to_biguint().expect("absolute value");
    let bits = mag.bits() as i64;
    let (mant, shift) = if bits <= 53 {
        (mag.to_u64().expect("fits"), 0i64)
    } else {
        let k = (bits - 53) as usize;
        let q = &mag >> k;
        let rem = &mag - (&q << k);
        let half = num_bigint::BigUint::from(1u8) << (k - 1);
        let mut q = q.to_u64().expect("53 bits");
        if rem > half || (rem == half && q & 1 == 1) {
            q += 1;
        }
        (q, k as i64)
    };
    let e = shift - 1074;
    let v = if e >= -1022 {
        mant as f64 * 2f64.powi(e as i32)
    } else {
        // Two exact scalings keep every intermediate representable.
        mant as f64 * 2f64.powi((e + 600) as i32) * 2f64.powi(-600)
    };
    if neg {
        -v
    } else {
        v
    }
}

/// Correctly rounded sum via exact integer arithmetic.
pub fn oracle_sum(values: &[f64]) -> f64 {
    let total: BigInt = values.iter().map(|&v| to_fixed(v)).sum();
    from_fixed(&total)
}

/// Naive pooling: for each point not yet claimed, scan all points for the
/// same floor index; payload is the correctly rounded sum divided by count.
pub fn oracle_voxel_pool(
    positions: &[Vec3],
    payloads: &[Vec<f64>],
    voxel_size: f64,
) -> Vec<OracleVoxel> {
    let idx: Vec<[i64; 3]> = positions
        .iter()
        .map(|p| {
            [
                (p.x / voxel_size).floor() as i64,
                (p.y / voxel_size).floor() as i64,
                (p.z / voxel_size).floor() as i64,
            ]
        })
        .collect();
    let dim = payloads.first().map_or(0, Vec::len);
    let mut out = Vec::new();
    for i in 0..positions.len() {
        if (0..i).any(|j| idx[j] == idx[i]) {
            continue;
        }
        let members: Vec<usize> = (0..positions.len()).filter(|&j| idx[j] == idx[i]).collect();
        let payload = (0..dim)
            .map(|k| {
                let vals: Vec<f64> = members.iter().map(|&j| payloads[j][k]).collect();
                oracle_sum(&vals) / members.len() as f64
            })
            .collect();
        let c = idx[i].map(|n| (n as f64 + 0.5) * voxel_size);
        out.push(OracleVoxel {
            index: idx[i],
            center: c,
            payload,
        });
    }
    out.sort_by_key(|a| a.index);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use egomem_core::memory::RgbVoxel;

    #[test]
    fn fixed_point_round_trip() {
        for x in [1.0, -0.1, 5e-324, 1e300, 0.3, -2.5e-310] {
            assert_eq!(from_fixed(&to_fixed(x)), x);
        }
    }

    #[test]
    fn sum_is_correctly_rounded() {
        assert_eq!(oracle_sum(&[0.1, 0.2]), 0.30000000000000004);
        assert_eq!(oracle_sum(&[1e16, 1.0, -1e16]), 1.0);
        assert_eq!(oracle_sum(&[1.0, 1e-16, 1e-16]), 1.0000000000000002);
        // Exact tie 1 + 2^-53 rounds to even.
        assert_eq!(oracle_sum(&[1.0, 2f64.powi(-53)]), 1.0);
    }

    #[test]
    fn pool_single_and_shared() {
        let one = oracle_voxel_pool(&[Vec3::new(0.002, 0.0, 0.0)], &[vec![0.25, 1.0]], 0.01);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].payload, vec![0.25, 1.0]);
        let two = oracle_voxel_pool(
            &[Vec3::new(0.002, 0.0, 0.0), Vec3::new(0.008, 0.0, 0.0)],
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            0.01,
        );
        assert_eq!(two[0].payload, vec![0.5, 0.5]);
    }

    #[test]
    fn splat_empty_and_single() {
        let intr = PinholeIntrinsics::new(10.0, 10.0, 4.5, 4.5, 10, 10).unwrap();
        let mut mem = SpatialMemory::empty(0.01, 0.02);
        assert!(oracle_splat(&mem, &PoseSE3::identity(), &intr)
            .iter()
            .all(|&i| i == UNASSIGNED));
        mem.rgb_voxels.push(RgbVoxel {
            center: Vec3::new(0.0, 0.0, 2.0),
            color: [1.0, 0.0, 0.0],
        });
        let ids = oracle_splat(&mem, &PoseSE3::identity(), &intr);
        assert_eq!(ids.iter().filter(|&&i| i != UNASSIGNED).count(), 1);
        assert_eq!(ids[4 * 10 + 4], 0);
    }
}
