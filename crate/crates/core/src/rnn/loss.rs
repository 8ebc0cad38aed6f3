use super::Scalar;
use crate::error::{Error, Result};

/// Squared log error of one element; predictions are clamped below at 0.
#[inline]
pub fn msle_element<T: Scalar>(predicted: T, target: T) -> T {
    let d = target.ln_1p() - predicted.max(T::zero()).ln_1p();
    d * d
}

/// Elementwise squared log errors.
pub fn msle_elements<T: Scalar>(predicted: &[T], target: &[T]) -> Result<Vec<T>> {
    if predicted.len() != target.len() {
        return Err(Error::shape("msle", target.len(), predicted.len()));
    }
    Ok(predicted
        .iter()
        .zip(target)
        .map(|(&p, &y)| msle_element(p, y))
        .collect())
}

/// Mean squared logarithmic error, `mean((ln(1+y) - ln(1+max(p,0)))^2)`.
pub fn msle<T: Scalar>(predicted: &[T], target: &[T]) -> Result<T> {
    if predicted.is_empty() {
        return Err(Error::shape("msle", 1, 0));
    }
    let terms = msle_elements(predicted, target)?;
    let n = T::from_usize(terms.len()).unwrap();
    Ok(terms.into_iter().sum::<T>() / n)
}

/// Derivative of `scale * sum((ln(1+y) - ln(1+p))^2)` with respect to `p`.
#[inline]
pub fn msle_grad<T: Scalar>(predicted: T, target: T, scale: T) -> T {
    if predicted < T::zero() {
        return T::zero();
    }
    let two = T::one() + T::one();
    -two * scale * (target.ln_1p() - predicted.ln_1p()) / (T::one() + predicted)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_zero() {
        let y = [0.0f64, 0.25, 1.0];
        assert_eq!(msle(&y, &y).unwrap(), 0.0);
    }

    #[test]
    fn closed_form_single_element() {
        let l = msle(&[0.0f64], &[1.0]).unwrap();
        assert!((l - 0.480_453).abs() < 1e-6);
        assert!((l - std::f64::consts::LN_2.powi(2)).abs() < 1e-15);
    }

    #[test]
    fn order_invariant() {
        let p = [0.1f64, 0.9, 0.4, 0.3];
        let y = [0.0f64, 1.0, 1.0, 0.0];
        let l1 = msle(&p, &y).unwrap();
        let l2 = msle(&[p[3], p[1], p[0], p[2]], &[y[3], y[1], y[0], y[2]]).unwrap();
        assert!((l1 - l2).abs() < 1e-15);
    }

    #[test]
    fn negative_predictions_clamp() {
        assert_eq!(
            msle(&[-3.0f64], &[0.0]).unwrap(),
            msle(&[0.0f64], &[0.0]).unwrap()
        );
        assert_eq!(msle_grad(-0.5f64, 1.0, 1.0), 0.0);
    }

    #[test]
    fn shape_mismatch() {
        assert!(msle(&[0.0f32], &[0.0, 1.0]).is_err());
        assert!(msle::<f32>(&[], &[]).is_err());
    }

    #[test]
    fn gradient_matches_difference_quotient() {
        let (p, y) = (0.3f64, 0.8);
        let h = 1e-6;
        let fd = (msle_element(p + h, y) - msle_element(p - h, y)) / (2.0 * h);
        assert!((msle_grad(p, y, 1.0) - fd).abs() < 1e-8);
    }
}
