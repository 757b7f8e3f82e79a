//! Cosine/angle kernels on raw (unnormalized) vectors and the tangent
//! gradients of the cosine with respect to either argument.
//!
//! For `cos θ = <x, w> / (|x| |w|)`:
//!
//! ```text
//! d cos / dx = (w/|w| - cos θ · x/|x|) / |x|
//! d cos / dw = (x/|x| - cos θ · w/|w|) / |w|
//! ```
//!
//! Both gradients are orthogonal to the vector being differentiated and have
//! magnitude `sin θ / |·|`.

use crate::error::{Error, Result};

/// Norms below this are rejected by every operation that needs a direction.
pub const MIN_NORM: f64 = 1e-12;

/// Dimension from which dot products switch to compensated accumulation.
pub const COMPENSATED_DOT_MIN_DIM: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnglePair {
    /// Cosine clamped into `[-1, 1]`.
    pub cosine: f64,
    /// `acos(cosine)`, in `[0, π]`.
    pub theta: f64,
}

impl AnglePair {
    pub fn from_cosine(raw: f64) -> Self {
        let cosine = raw.clamp(-1.0, 1.0);
        AnglePair {
            cosine,
            theta: cosine.acos(),
        }
    }
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Dot product accumulated with error-free transforms (Ogita–Rump–Oishi
/// `Dot2`): the result is as accurate as if computed in twice the working
/// precision and then rounded.
pub fn dot_compensated(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let mut sum = 0.0;
    let mut err = 0.0;
    for (&a, &b) in u.iter().zip(v) {
        let p = a * b;
        let ep = a.mul_add(b, -p);
        let (s, es) = two_sum(sum, p);
        sum = s;
        err += es + ep;
    }
    sum + err
}

/// Dot product; plain accumulation below [`COMPENSATED_DOT_MIN_DIM`],
/// compensated above.
#[inline]
pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    if u.len() >= COMPENSATED_DOT_MIN_DIM {
        dot_compensated(u, v)
    } else {
        u.iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

#[inline]
pub fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}

/// Norm of `u`, or [`Error::DegenerateVector`] if it is too small to define a direction.
pub fn checked_norm(u: &[f64]) -> Result<f64> {
    let n = norm(u);
    if !n.is_finite() || n < MIN_NORM {
        return Err(Error::DegenerateVector { norm: n });
    }
    Ok(n)
}

fn check_dims(u: &[f64], v: &[f64]) -> Result<()> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    if u.is_empty() {
        return Err(Error::spec("vectors must have at least one component"));
    }
    Ok(())
}

/// Unit direction of `u` together with its norm.
pub fn unit(u: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = checked_norm(u)?;
    Ok((u.iter().map(|c| c / n).collect(), n))
}

/// Raw (unclamped) cosine between two directions.
fn raw_cosine(u: &[f64], v: &[f64]) -> Result<(f64, f64, f64)> {
    check_dims(u, v)?;
    let nu = checked_norm(u)?;
    let nv = checked_norm(v)?;
    Ok((dot(u, v) / (nu * nv), nu, nv))
}

pub fn cosine_angle(u: &[f64], v: &[f64]) -> Result<AnglePair> {
    let (c, _, _) = raw_cosine(u, v)?;
    Ok(AnglePair::from_cosine(c))
}

/// Tangent combination `(target_unit - cos · base_unit) / base_norm`.
///
/// Shared by the scalar kernels and the batched loss code so that both
/// evaluate the same expression.
#[inline]
pub(crate) fn tangent_into(
    out: &mut [f64],
    target_unit: &[f64],
    base_unit: &[f64],
    cosine: f64,
    base_norm: f64,
    scale: f64,
) {
    let f = scale / base_norm;
    for ((o, &t), &b) in out.iter_mut().zip(target_unit).zip(base_unit) {
        *o += f * (t - cosine * b);
    }
}

fn cos_gradient(base: &[f64], other: &[f64]) -> Result<Vec<f64>> {
    let (c, nb, no) = raw_cosine(base, other)?;
    let base_unit: Vec<f64> = base.iter().map(|v| v / nb).collect();
    let other_unit: Vec<f64> = other.iter().map(|v| v / no).collect();
    let mut g = vec![0.0; base.len()];
    tangent_into(&mut g, &other_unit, &base_unit, c, nb, 1.0);
    Ok(g)
}

/// Gradient of `cos θ(x, w)` with respect to `x`.
pub fn dcos_dx(x: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    cos_gradient(x, w)
}

/// Gradient of `cos θ(x, w)` with respect to `w`.
pub fn dcos_dw(x: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    cos_gradient(w, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn random_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn identical_and_orthogonal_basis_vectors() {
        let e1 = [1.0, 0.0];
        let e2 = [0.0, 1.0];
        let p = cosine_angle(&e1, &e1).unwrap();
        assert_eq!(p.cosine, 1.0);
        assert_eq!(p.theta, 0.0);
        let q = cosine_angle(&e1, &e2).unwrap();
        assert_eq!(q.cosine, 0.0);
        assert_eq!(q.theta, FRAC_PI_2);
    }

    #[test]
    fn rejects_degenerate_and_mismatched() {
        assert!(matches!(
            cosine_angle(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::DegenerateVector { .. })
        ));
        assert!(matches!(
            dcos_dx(&[1e-13, 0.0], &[1.0, 0.0]),
            Err(Error::DegenerateVector { .. })
        ));
        assert!(matches!(
            cosine_angle(&[1.0], &[1.0, 0.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn clamps_rounded_cosine() {
        // 0.1 * 3 style rounding can push the raw ratio past 1.
        let u = [0.1, 0.2, 0.3];
        let v = [0.1 * 3.0, 0.2 * 3.0, 0.3 * 3.0];
        let p = cosine_angle(&u, &v).unwrap();
        assert!(p.cosine <= 1.0 && p.cosine >= -1.0);
        assert!(!p.theta.is_nan());
        assert_eq!(AnglePair::from_cosine(1.0 + 1e-15).cosine, 1.0);
        assert_eq!(AnglePair::from_cosine(-1.0 - 1e-15).theta, std::f64::consts::PI);
    }

    #[test]
    fn gradient_closed_cases() {
        assert_eq!(dcos_dx(&[2.0, 0.0], &[3.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(dcos_dx(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), vec![0.0, 1.0]);
        assert_eq!(dcos_dw(&[1.0, 0.0], &[5.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(dcos_dw(&[0.0, 1.0], &[1.0, 0.0]).unwrap(), vec![0.0, 1.0]);
    }

    /// Independent recomputation: twice-precision dot via error-free
    /// products summed in a separate Kahan–Babuška loop.
    fn oracle_cosine(u: &[f64], v: &[f64]) -> f64 {
        fn acc(a: &[f64], b: &[f64]) -> f64 {
            let (mut s, mut c) = (0.0f64, 0.0f64);
            for (&x, &y) in a.iter().zip(b) {
                let p = x * y;
                let e = x.mul_add(y, -p);
                for term in [p, e] {
                    let t = s + term;
                    c += if s.abs() >= term.abs() {
                        (s - t) + term
                    } else {
                        (term - t) + s
                    };
                    s = t;
                }
            }
            s + c
        }
        acc(u, v) / (acc(u, u).sqrt() * acc(v, v).sqrt())
    }

    #[test]
    fn cosine_matches_extended_precision_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = random_vec(&mut rng, 16);
        let v = random_vec(&mut rng, 16);
        let got = cosine_angle(&u, &v).unwrap().cosine;
        assert!((got - oracle_cosine(&u, &v)).abs() <= 1e-15);
    }

    #[test]
    fn compensated_dot_recovers_cancellation() {
        let u = [1e16, 1.0, -1e16];
        let v = [1.0, 1.0, 1.0];
        assert_eq!(dot_compensated(&u, &v), 1.0);
        let long: Vec<f64> = (0..300).map(|i| [1e16, 1.0, -1e16][i % 3]).collect();
        let ones = vec![1.0; 300];
        let plain: f64 = long.iter().zip(&ones).map(|(a, b)| a * b).sum();
        assert_eq!(plain, 0.0);
        assert_eq!(dot(&long, &ones), 100.0);
    }

    fn fd_cos_grad(x: &[f64], w: &[f64], wrt_x: bool) -> Vec<f64> {
        let h = 1e-6;
        let n = if wrt_x { x.len() } else { w.len() };
        (0..n)
            .map(|k| {
                let (mut xp, mut xm, mut wp, mut wm) = (x.to_vec(), x.to_vec(), w.to_vec(), w.to_vec());
                if wrt_x {
                    xp[k] += h;
                    xm[k] -= h;
                } else {
                    wp[k] += h;
                    wm[k] -= h;
                }
                let fp = cosine_angle(&xp, &wp).unwrap().cosine;
                let fm = cosine_angle(&xm, &wm).unwrap().cosine;
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x = random_vec(&mut rng, 8);
            let w = random_vec(&mut rng, 8);
            for wrt_x in [true, false] {
                let g = if wrt_x { dcos_dx(&x, &w) } else { dcos_dw(&x, &w) }.unwrap();
                let fd = fd_cos_grad(&x, &w, wrt_x);
                let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for (a, b) in g.iter().zip(&fd) {
                    let rel = (a - b).abs() / a.abs().max(b.abs()).max(1e-3 * scale);
                    assert!(rel <= 1e-6, "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn magnitude_law_and_tangency() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in [2, 8, 64, 300] {
            for _ in 0..50 {
                let x = random_vec(&mut rng, d);
                let w = random_vec(&mut rng, d);
                let g = dcos_dx(&x, &w).unwrap();
                let theta = cosine_angle(&x, &w).unwrap().theta;
                assert!((norm(&g) * norm(&x) - theta.sin()).abs() <= 1e-10);
                assert!(dot(&g, &x).abs() <= 1e-10 * norm(&g) * norm(&x));
                let gw = dcos_dw(&x, &w).unwrap();
                assert!(dot(&gw, &w).abs() <= 1e-10 * norm(&gw) * norm(&w));
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn angle_is_scale_invariant(
            u in proptest::collection::vec(-10.0f64..10.0, 5),
            v in proptest::collection::vec(-10.0f64..10.0, 5),
            alpha in 0.01f64..100.0,
            beta in 0.01f64..100.0,
        ) {
            proptest::prop_assume!(norm(&u) > 1e-3 && norm(&v) > 1e-3);
            let base = cosine_angle(&u, &v).unwrap();
            let su: Vec<f64> = u.iter().map(|c| c * alpha).collect();
            let sv: Vec<f64> = v.iter().map(|c| c * beta).collect();
            let scaled = cosine_angle(&su, &sv).unwrap();
            proptest::prop_assert!((base.cosine - scaled.cosine).abs() <= 1e-14);
            proptest::prop_assert!(scaled.cosine.abs() <= 1.0);
        }
    }
}
