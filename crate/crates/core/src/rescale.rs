//! Gradient re-scale functions for the intra-class and inter-class terms.
//!
//! Sigmoid family:
//!
//! ```text
//! r_intra(θ) = s / (1 + exp(-k (θ - a)))
//! r_inter(θ) = s / (1 + exp( k (θ - b)))
//! ```
//!
//! The piecewise family is the step limit `k → ∞`
//! (`s · sign(max(θ - a, 0))`, `s · sign(max(b - θ, 0))`) and the constant
//! family applies no re-scaling at all. The effective tangent speed of a
//! sample is `v(θ) = r(θ) · sin θ`.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

/// Default gradient scale.
pub const DEFAULT_SCALE: f64 = 64.0;
/// Default sigmoid slope.
pub const DEFAULT_SLOPE: f64 = 80.0;

/// Number of grid points used by [`check_curve_properties`].
pub const PROPERTY_GRID_POINTS: usize = 10_001;
/// A v-curve is "suppressed" where it falls below this fraction of `s`.
pub const SUPPRESSION_FRACTION: f64 = 0.01;
/// Minimum width (radians) for a suppression interval to count.
///
/// An unscaled `s · sin θ` curve is already below `0.01 s` on
/// `[0, asin 0.01) ≈ [0, 0.01)`; requiring five times that separates real
/// suppression from the trivial `sin θ` vanishing at the origin.
pub const MIN_SUPPRESSION_WIDTH: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "cli", derive(serde::Deserialize, serde::Serialize))]
#[cfg_attr(feature = "cli", serde(rename_all = "lowercase"))]
pub enum RescaleFamily {
    Sigmoid,
    Piecewise,
    Constant,
}

impl RescaleFamily {
    pub fn name(self) -> &'static str {
        match self {
            RescaleFamily::Sigmoid => "sigmoid",
            RescaleFamily::Piecewise => "piecewise",
            RescaleFamily::Constant => "constant",
        }
    }
}

impl std::str::FromStr for RescaleFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(RescaleFamily::Sigmoid),
            "piecewise" => Ok(RescaleFamily::Piecewise),
            "constant" => Ok(RescaleFamily::Constant),
            other => Err(Error::spec(format!("unknown re-scale family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RescaleSpec {
    pub family: RescaleFamily,
    /// Upper asymptote / gradient scale.
    pub s: f64,
    /// Sigmoid slope; unused by the other families.
    pub k: f64,
    /// Intra-class cutoff angle (radians).
    pub a: f64,
    /// Inter-class cutoff angle (radians).
    pub b: f64,
}

impl RescaleSpec {
    pub fn sigmoid(s: f64, k: f64, a: f64, b: f64) -> Self {
        RescaleSpec {
            family: RescaleFamily::Sigmoid,
            s,
            k,
            a,
            b,
        }
    }

    pub fn piecewise(s: f64, a: f64, b: f64) -> Self {
        RescaleSpec {
            family: RescaleFamily::Piecewise,
            s,
            k: DEFAULT_SLOPE,
            a,
            b,
        }
    }

    pub fn constant(s: f64) -> Self {
        RescaleSpec {
            family: RescaleFamily::Constant,
            s,
            k: DEFAULT_SLOPE,
            a: 0.9,
            b: 1.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(Error::spec(format!("scale s must be positive, got {}", self.s)));
        }
        if self.family == RescaleFamily::Sigmoid && !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::spec(format!("slope k must be positive, got {}", self.k)));
        }
        if self.family != RescaleFamily::Constant {
            if !(self.a > 0.0 && self.a < FRAC_PI_2) {
                return Err(Error::spec(format!("cutoff a must lie in (0, pi/2), got {}", self.a)));
            }
            if !(self.b > 0.0 && self.b <= FRAC_PI_2) {
                return Err(Error::spec(format!("cutoff b must lie in (0, pi/2], got {}", self.b)));
            }
        }
        Ok(())
    }

    /// Intra-class re-scale coefficient at angle `theta`.
    pub fn r_intra(&self, theta: f64) -> f64 {
        match self.family {
            RescaleFamily::Sigmoid => scaled_sigmoid(self.s, self.k * (theta - self.a)),
            RescaleFamily::Piecewise => self.s * step(theta - self.a),
            RescaleFamily::Constant => self.s,
        }
    }

    /// Inter-class re-scale coefficient at angle `theta`.
    pub fn r_inter(&self, theta: f64) -> f64 {
        match self.family {
            RescaleFamily::Sigmoid => scaled_sigmoid(self.s, self.k * (self.b - theta)),
            RescaleFamily::Piecewise => self.s * step(self.b - theta),
            RescaleFamily::Constant => self.s,
        }
    }

    pub fn v_intra(&self, theta: f64) -> f64 {
        self.r_intra(theta) * theta.sin()
    }

    pub fn v_inter(&self, theta: f64) -> f64 {
        self.r_inter(theta) * theta.sin()
    }
}

impl Default for RescaleSpec {
    fn default() -> Self {
        RescaleSpec::sigmoid(DEFAULT_SCALE, DEFAULT_SLOPE, 0.9, 1.2)
    }
}

/// `s / (1 + exp(-z))` without ever exponentiating a positive argument.
#[inline]
fn scaled_sigmoid(s: f64, z: f64) -> f64 {
    if z >= 0.0 {
        s / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        s * e / (1.0 + e)
    }
}

/// `sign(max(t, 0))`: 1 for positive `t`, else 0.
#[inline]
fn step(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub theta: f64,
    pub v_intra: f64,
    pub v_inter: f64,
}

/// Uniform grid over `[0, π/2]` inclusive.
pub fn theta_grid(num_points: usize) -> Result<Vec<f64>> {
    if num_points < 2 {
        return Err(Error::spec("a curve needs at least two points"));
    }
    let step = FRAC_PI_2 / (num_points - 1) as f64;
    Ok((0..num_points)
        .map(|i| {
            if i + 1 == num_points {
                FRAC_PI_2
            } else {
                i as f64 * step
            }
        })
        .collect())
}

/// Tangent-speed curves `v_intra(θ)`, `v_inter(θ)` sampled on `[0, π/2]`.
pub fn v_curves(spec: &RescaleSpec, num_points: usize) -> Result<Vec<CurvePoint>> {
    spec.validate()?;
    Ok(theta_grid(num_points)?
        .into_iter()
        .map(|theta| CurvePoint {
            theta,
            v_intra: spec.v_intra(theta),
            v_inter: spec.v_inter(theta),
        })
        .collect())
}

/// Outcome of checking the three shape requirements on a spec's v-curves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePropertyReport {
    /// `v_intra ≥ 0` and nondecreasing on the grid.
    pub intra_monotone: bool,
    /// `v_inter ≥ 0` on the grid.
    pub inter_nonnegative: bool,
    /// Both suppression intervals are at least [`MIN_SUPPRESSION_WIDTH`] wide.
    pub suppression: bool,
    /// Width of `[0, t)` on which `v_intra < 0.01 s`.
    pub intra_suppression_width: f64,
    /// Width of `(t, π/2]` on which `v_inter < 0.01 s`.
    pub inter_suppression_width: f64,
}

impl CurvePropertyReport {
    pub fn all_hold(&self) -> bool {
        self.intra_monotone && self.inter_nonnegative && self.suppression
    }
}

/// Locate the threshold crossing between `lo` (suppressed) and `hi` (not).
fn bisect(mut lo: f64, mut hi: f64, suppressed: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if suppressed(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // boundary is the first non-suppressed point
    hi
}

pub fn check_curve_properties(spec: &RescaleSpec) -> Result<CurvePropertyReport> {
    spec.validate()?;
    let grid = theta_grid(PROPERTY_GRID_POINTS)?;
    let intra: Vec<f64> = grid.iter().map(|&t| spec.v_intra(t)).collect();
    let inter: Vec<f64> = grid.iter().map(|&t| spec.v_inter(t)).collect();

    let intra_monotone = intra.iter().all(|&v| v >= 0.0) && intra.windows(2).all(|w| w[1] >= w[0]);
    let inter_nonnegative = inter.iter().all(|&v| v >= 0.0);

    let threshold = SUPPRESSION_FRACTION * spec.s;
    let intra_suppressed = |t: f64| spec.v_intra(t) < threshold;
    let inter_suppressed = |t: f64| spec.v_inter(t) < threshold;

    let intra_suppression_width = match intra.iter().position(|&v| v >= threshold) {
        None => FRAC_PI_2,
        Some(0) => 0.0,
        Some(i) => bisect(grid[i - 1], grid[i], intra_suppressed),
    };
    let inter_suppression_width = match inter.iter().rposition(|&v| v >= threshold) {
        None => FRAC_PI_2,
        Some(i) if i + 1 == grid.len() => 0.0,
        Some(i) => {
            // mirror so that `lo` is the suppressed side
            let t = bisect(-grid[i + 1], -grid[i], |m| inter_suppressed(-m));
            FRAC_PI_2 + t
        }
    };

    Ok(CurvePropertyReport {
        intra_monotone,
        inter_nonnegative,
        suppression: intra_suppression_width >= MIN_SUPPRESSION_WIDTH
            && inter_suppression_width >= MIN_SUPPRESSION_WIDTH,
        intra_suppression_width,
        inter_suppression_width,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn steep_sigmoid(a: f64, b: f64) -> RescaleSpec {
        RescaleSpec::sigmoid(64.0, 80.0, a, b)
    }

    #[test]
    fn sigmoid_midpoints_are_exact() {
        let spec = steep_sigmoid(0.90, 1.20);
        assert_eq!(spec.r_intra(0.90), 32.0);
        assert_eq!(spec.r_inter(1.20), 32.0);
    }

    #[test]
    fn sigmoid_tails() {
        let spec = steep_sigmoid(0.90, 1.20);
        // 64 / (1 + e^72) evaluated as 64 e^-72 / (1 + e^-72)
        let r0 = spec.r_intra(0.0);
        let oracle = 64.0 * (-72.0f64).exp();
        assert!(r0 < 1e-28);
        assert!((r0 - oracle).abs() <= 1e-15 * oracle);
        let rpi = spec.r_inter(FRAC_PI_2);
        let oracle = 64.0 * (-80.0 * (FRAC_PI_2 - 1.20)).exp();
        assert!(rpi < 1e-10);
        assert!((rpi - oracle).abs() <= 1e-12 * oracle);
        // naive evaluation would overflow here
        assert!(spec.r_inter(std::f64::consts::PI * 4.0).is_finite());
        assert!(spec.r_intra(-20.0).is_finite());
    }

    #[test]
    fn piecewise_and_constant() {
        let spec = RescaleSpec::piecewise(64.0, 0.90, 1.30);
        assert_eq!(spec.r_intra(0.89), 0.0);
        assert_eq!(spec.r_intra(0.91), 64.0);
        assert_eq!(spec.r_intra(0.90), 0.0);
        assert_eq!(spec.r_inter(1.29), 64.0);
        assert_eq!(spec.r_inter(1.31), 0.0);
        let c = RescaleSpec::constant(64.0);
        for t in [0.0, 0.3, 1.2, 3.0] {
            assert_eq!(c.r_intra(t), 64.0);
            assert_eq!(c.r_inter(t), 64.0);
        }
    }

    #[test]
    fn v_curve_values() {
        let spec = steep_sigmoid(0.90, 1.20);
        assert!((spec.v_intra(0.90) - 32.0 * 0.90f64.sin()).abs() < 1e-12);
        assert!((spec.v_intra(0.90) - 25.066).abs() < 1e-3);
        assert!((spec.v_inter(1.20) - 29.825).abs() < 1e-3);
        let pts = v_curves(&spec, 11).unwrap();
        assert_eq!(pts.len(), 11);
        assert_eq!(pts[0].theta, 0.0);
        assert_eq!(pts[0].v_intra, 0.0);
        assert_eq!(pts[0].v_inter, 0.0);
        assert_eq!(pts[10].theta, FRAC_PI_2);
        assert!(v_curves(&spec, 1).is_err());
    }

    #[test]
    fn validation() {
        assert!(steep_sigmoid(0.9, 1.2).validate().is_ok());
        assert!(steep_sigmoid(0.0, 1.2).validate().is_err());
        assert!(steep_sigmoid(FRAC_PI_2, 1.2).validate().is_err());
        assert!(steep_sigmoid(0.9, FRAC_PI_2).validate().is_ok());
        assert!(steep_sigmoid(0.9, 1.6).validate().is_err());
        assert!(RescaleSpec::sigmoid(0.0, 80.0, 0.9, 1.2).validate().is_err());
        assert!(RescaleSpec::sigmoid(64.0, -1.0, 0.9, 1.2).validate().is_err());
        // a above b is allowed
        assert!(steep_sigmoid(1.3, 1.2).validate().is_ok());
    }

    #[test]
    fn curve_properties_sigmoid() {
        let rep = check_curve_properties(&steep_sigmoid(0.90, 1.20)).unwrap();
        assert!(rep.all_hold(), "{rep:?}");
        assert!(rep.intra_suppression_width > 0.8 && rep.intra_suppression_width < 0.9);
    }

    #[test]
    fn curve_properties_constant_fail_suppression() {
        let rep = check_curve_properties(&RescaleSpec::constant(64.0)).unwrap();
        assert!(rep.intra_monotone);
        assert!(rep.inter_nonnegative);
        assert!(!rep.suppression);
        assert!((rep.intra_suppression_width - 0.01f64.asin()).abs() < 1e-9);
        assert_eq!(rep.inter_suppression_width, 0.0);
    }

    #[test]
    fn curve_properties_piecewise() {
        let rep = check_curve_properties(&RescaleSpec::piecewise(64.0, 0.90, 1.30)).unwrap();
        assert!(rep.all_hold(), "{rep:?}");
        assert!((rep.intra_suppression_width - 0.90).abs() < 1e-12);
        assert!((rep.inter_suppression_width - (FRAC_PI_2 - 1.30)).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn sigmoid_range_and_monotonicity(
            a in 0.05f64..1.5, b in 0.05f64..1.57, k in 0.5f64..200.0,
            t1 in 0.0f64..std::f64::consts::PI, t2 in 0.0f64..std::f64::consts::PI,
        ) {
            let spec = RescaleSpec::sigmoid(64.0, k, a, b);
            for t in [t1, t2] {
                let ri = spec.r_intra(t);
                let re = spec.r_inter(t);
                proptest::prop_assert!((0.0..=64.0).contains(&ri));
                proptest::prop_assert!((0.0..=64.0).contains(&re));
            }
            let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
            proptest::prop_assert!(spec.r_intra(lo) <= spec.r_intra(hi));
            proptest::prop_assert!(spec.r_inter(lo) >= spec.r_inter(hi));
        }

        #[test]
        fn intra_inter_mirror_symmetry(a in 0.1f64..1.4, b in 0.1f64..1.5, t in -1.0f64..1.0) {
            let spec = RescaleSpec::sigmoid(64.0, 80.0, a, b);
            let lhs = spec.r_intra(a + t);
            let rhs = spec.r_inter(b - t);
            proptest::prop_assert!((lhs - rhs).abs() <= 1e-14 * spec.s, "{} vs {}", lhs, rhs);
        }
    }
}
