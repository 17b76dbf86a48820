use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Root-relative error per channel,
/// `e_i = sqrt(Σ_k (x_i[k] − x̂_i[k])² / Σ_k x_i[k]²)`.
///
/// A channel whose truth has zero energy has no defined error and yields
/// `None`.
pub fn relative_error<T: Scalar>(truth: &DMatrix<T>, predicted: &DMatrix<T>) -> Result<Vec<Option<f64>>> {
    if truth.shape() != predicted.shape() {
        return Err(Error::dims(
            "relative error operands",
            format!("{:?}", truth.shape()),
            format!("{:?}", predicted.shape()),
        ));
    }
    Ok((0..truth.nrows())
        .map(|i| {
            let (mut num, mut den) = (0.0, 0.0);
            for k in 0..truth.ncols() {
                let x = truth[(i, k)].as_f64();
                let e = x - predicted[(i, k)].as_f64();
                num += e * e;
                den += x * x;
            }
            (den > 0.0).then(|| (num / den).sqrt())
        })
        .collect())
}

/// Mean of the defined entries, `None` when there are none.
pub fn mean_defined(errors: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = errors.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 0 { 0.5 * (v[mid - 1] + v[mid]) } else { v[mid] })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        let x = DMatrix::from_row_slice(1, 2, &[1.0, 2.0]);
        let e = relative_error(&x, &DMatrix::from_row_slice(1, 2, &[0.0, 2.0])).unwrap();
        assert!((e[0].unwrap() - (0.2f64).sqrt()).abs() < 1e-15);
        assert_eq!(relative_error(&x, &x).unwrap(), vec![Some(0.0)]);
        assert_eq!(relative_error(&x, &DMatrix::zeros(1, 2)).unwrap(), vec![Some(1.0)]);
    }

    #[test]
    fn zero_energy_channel_is_undefined() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]);
        let e = relative_error(&x, &DMatrix::zeros(2, 2)).unwrap();
        assert_eq!(e[0], None);
        assert_eq!(mean_defined(&e), Some(1.0));
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }
}
