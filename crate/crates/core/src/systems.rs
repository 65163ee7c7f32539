//! Built-in controlled maps.

use nalgebra::{DMatrix, DVector};

use crate::map::ControlledMap;

pub const LOGISTIC: &str = "logistic";
pub const CUBIC_SHIFT: &str = "cubic-shift";
pub const RADIAL_CUBIC_2D: &str = "radial-cubic-2d";

pub const NAMES: [&str; 3] = [LOGISTIC, CUBIC_SHIFT, RADIAL_CUBIC_2D];

/// `x ↦ α x (1 − x)`
pub fn logistic() -> ControlledMap {
    ControlledMap::new(LOGISTIC, 1, 1, |x, a| {
        DVector::from_element(1, a[0] * x[0] * (1.0 - x[0]))
    })
    .with_jacobian(|x, a| DMatrix::from_element(1, 1, a[0] * (1.0 - 2.0 * x[0])))
}

/// `x ↦ (x − α)³ + α`
pub fn cubic_shift() -> ControlledMap {
    ControlledMap::new(CUBIC_SHIFT, 1, 1, |x, a| {
        let u = x[0] - a[0];
        DVector::from_element(1, u * u * u + a[0])
    })
    .with_jacobian(|x, a| {
        let u = x[0] - a[0];
        DMatrix::from_element(1, 1, 3.0 * u * u)
    })
}

/// `(x, y) ↦ ((x − α)s + α, (y − α)s + α)` with `s = (x − α)² + (y − α)²`.
pub fn radial_cubic_2d() -> ControlledMap {
    ControlledMap::new(RADIAL_CUBIC_2D, 2, 1, |x, a| {
        let (u, v) = (x[0] - a[0], x[1] - a[0]);
        let s = u * u + v * v;
        DVector::from_column_slice(&[u * s + a[0], v * s + a[0]])
    })
    .with_jacobian(|x, a| {
        let (u, v) = (x[0] - a[0], x[1] - a[0]);
        let s = u * u + v * v;
        DMatrix::from_row_slice(2, 2, &[s + 2.0 * u * u, 2.0 * u * v, 2.0 * u * v, s + 2.0 * v * v])
    })
}

/// Scalar polynomial map with a scalar control,
/// `f(x, α) = Σᵢ Σⱼ c[i][j] αʲ xⁱ`.
pub fn polynomial(name: impl Into<String>, coefficients: Vec<Vec<f64>>) -> ControlledMap {
    let eval_coeffs = coefficients.clone();
    ControlledMap::new(name, 1, 1, move |x, a| {
        let powers = power_coefficients(&eval_coeffs, a[0]);
        DVector::from_element(1, horner(&powers, x[0]))
    })
    .with_jacobian(move |x, a| {
        let powers = power_coefficients(&coefficients, a[0]);
        let derivative: Vec<f64> = powers
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, c)| i as f64 * c)
            .collect();
        DMatrix::from_element(1, 1, horner(&derivative, x[0]))
    })
}

fn power_coefficients(coefficients: &[Vec<f64>], alpha: f64) -> Vec<f64> {
    coefficients.iter().map(|row| horner(row, alpha)).collect()
}

fn horner(coefficients: &[f64], t: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

pub fn by_name(name: &str) -> Option<ControlledMap> {
    match name {
        LOGISTIC => Some(logistic()),
        CUBIC_SHIFT => Some(cubic_shift()),
        RADIAL_CUBIC_2D => Some(radial_cubic_2d()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{finite_difference_jacobian, jacobian_x};
    use proptest::prelude::*;

    fn relative_gap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).amax() / a.amax().max(1.0)
    }

    proptest! {
        #[test]
        fn logistic_jacobian_matches_finite_differences(x in -2.0..2.0f64, a in -4.0..4.0f64) {
            let map = logistic();
            let (x, a) = (DVector::from_element(1, x), DVector::from_element(1, a));
            let exact = jacobian_x(&map, &x, &a).unwrap();
            prop_assert!(relative_gap(&exact, &finite_difference_jacobian(&map, &x, &a)) < 1e-6);
        }

        #[test]
        fn cubic_jacobian_matches_finite_differences(x in -3.0..3.0f64, a in -3.0..3.0f64) {
            let map = cubic_shift();
            let (x, a) = (DVector::from_element(1, x), DVector::from_element(1, a));
            let exact = jacobian_x(&map, &x, &a).unwrap();
            prop_assert!(relative_gap(&exact, &finite_difference_jacobian(&map, &x, &a)) < 1e-6);
        }

        #[test]
        fn radial_jacobian_matches_finite_differences(
            x in -2.0..2.0f64, y in -2.0..2.0f64, a in -2.0..2.0f64,
        ) {
            let map = radial_cubic_2d();
            let (x, a) = (DVector::from_column_slice(&[x, y]), DVector::from_element(1, a));
            let exact = jacobian_x(&map, &x, &a).unwrap();
            prop_assert!(relative_gap(&exact, &finite_difference_jacobian(&map, &x, &a)) < 1e-6);
        }

        #[test]
        fn polynomial_reproduces_logistic(x in -2.0..2.0f64, a in -4.0..4.0f64) {
            let poly = polynomial("poly-logistic", vec![vec![0.0], vec![0.0, 1.0], vec![0.0, -1.0]]);
            let (x, a) = (DVector::from_element(1, x), DVector::from_element(1, a));
            let lhs = poly.eval(&x, &a)[0];
            let rhs = logistic().eval(&x, &a)[0];
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1.0));
            let jl = jacobian_x(&poly, &x, &a).unwrap()[(0, 0)];
            let jr = jacobian_x(&logistic(), &x, &a).unwrap()[(0, 0)];
            prop_assert!((jl - jr).abs() <= 1e-12 * jr.abs().max(1.0));
        }
    }

    #[test]
    fn eval_is_deterministic() {
        for name in NAMES {
            let map = by_name(name).unwrap();
            let x = DVector::from_element(map.state_dim(), 0.3141);
            let a = DVector::from_element(map.control_dim(), 1.7);
            assert_eq!(map.eval(&x, &a), map.eval(&x, &a));
        }
        assert!(by_name("henon").is_none());
    }
}
