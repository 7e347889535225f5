use serde::{Deserialize, Serialize};

use crate::Scalar;

/// Base nonlinearity `ρ` from which the per-unit variants are built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BaseActivation {
    #[default]
    Relu,
    /// GELU held constant left of its minimum, which keeps it nondecreasing.
    Gelu,
}

/// Point where GELU attains its minimum (`Φ(x) + x φ(x) = 0`).
pub const GELU_ARGMIN: f64 = -0.751_791_524_693_564_5;

/// Per-unit shape of a monotone layer's activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitShape {
    /// `ρ(x)`
    Convex,
    /// `−ρ(−x)`
    Concave,
    /// `ρ(x+1) − ρ(1)` for `x < 0`, `ρ(1) − ρ(1−x)` for `x ≥ 0`
    Bounded,
    /// identity, for output layers
    Linear,
}

impl BaseActivation {
    /// `(ρ(x), ρ'(x))`, with the derivative at a kink taken from the flat side.
    fn eval<T: Scalar>(self, x: T) -> (T, T) {
        match self {
            BaseActivation::Relu => {
                if x > T::zero() {
                    (x, T::one())
                } else {
                    (T::zero(), T::zero())
                }
            }
            BaseActivation::Gelu => {
                let x = x.max(T::of(GELU_ARGMIN));
                let cdf = x.norm_cdf();
                let slope = if x > T::of(GELU_ARGMIN) {
                    cdf + x * x.norm_pdf()
                } else {
                    T::zero()
                };
                (x * cdf, slope)
            }
        }
    }
}

impl UnitShape {
    /// Activation value and derivative for one unit.
    pub fn apply<T: Scalar>(self, base: BaseActivation, x: T) -> (T, T) {
        match self {
            UnitShape::Linear => (x, T::one()),
            UnitShape::Convex => base.eval(x),
            UnitShape::Concave => {
                let (v, d) = base.eval(-x);
                (-v, d)
            }
            UnitShape::Bounded => {
                let (rho1, _) = base.eval(T::one());
                if x < T::zero() {
                    let (v, d) = base.eval(x + T::one());
                    (v - rho1, d)
                } else {
                    let (v, d) = base.eval(T::one() - x);
                    (rho1 - v, d)
                }
            }
        }
    }

    /// Even split of hidden units among convex, concave and bounded shapes.
    pub fn assignment(units: usize) -> Vec<UnitShape> {
        const SHAPES: [UnitShape; 3] = [UnitShape::Convex, UnitShape::Concave, UnitShape::Bounded];
        (0..units).map(|k| SHAPES[k % 3]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHAPES: [UnitShape; 4] = [
        UnitShape::Convex,
        UnitShape::Concave,
        UnitShape::Bounded,
        UnitShape::Linear,
    ];

    #[test]
    fn gelu_argmin_is_stationary() {
        let x = GELU_ARGMIN;
        let d = libm::erf(x / 2f64.sqrt()) * 0.5
            + 0.5
            + x * (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        assert!(d.abs() < 1e-14);
    }

    #[test]
    fn all_shapes_nondecreasing_with_matching_derivative() {
        for base in [BaseActivation::Relu, BaseActivation::Gelu] {
            for shape in SHAPES {
                let mut prev = f64::NEG_INFINITY;
                for k in 0..2001 {
                    let x = -5.0 + 0.005 * k as f64 + 1e-4;
                    let (v, d) = shape.apply(base, x);
                    assert!(v >= prev, "{base:?} {shape:?} at {x}");
                    assert!(d >= 0.0);
                    let h = 1e-7;
                    let fd = (shape.apply(base, x + h).0 - shape.apply(base, x - h).0) / (2.0 * h);
                    assert!(
                        (fd - d).abs() < 1e-5,
                        "{base:?} {shape:?} at {x}: {fd} vs {d}"
                    );
                    prev = v;
                }
            }
        }
    }

    #[test]
    fn relu_bounded_is_hard_tanh() {
        for x in [-3.0, -1.0, -0.25, 0.0, 0.6, 1.0, 7.0] {
            let (v, _) = UnitShape::Bounded.apply(BaseActivation::Relu, x);
            assert_eq!(v, f64::clamp(x, -1.0, 1.0));
        }
    }

    #[test]
    fn even_assignment() {
        let a = UnitShape::assignment(50);
        let count = |s| a.iter().filter(|&&u| u == s).count();
        assert_eq!(count(UnitShape::Convex), 17);
        assert_eq!(count(UnitShape::Concave), 17);
        assert_eq!(count(UnitShape::Bounded), 16);
    }
}
