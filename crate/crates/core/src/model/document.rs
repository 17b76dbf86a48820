//! JSON representation of [`ModelParams`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ModelParams;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const PARAMS_FORMAT: &str = "fracnet.params/1";

/// Row-major dense matrix with explicit shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixDoc {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixDoc {
    pub fn from_matrix<T: Scalar>(m: &DMatrix<T>) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)].as_f64());
            }
        }
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn to_matrix<T: Scalar>(&self) -> Result<DMatrix<T>> {
        if self.rows * self.cols != self.data.len() {
            return Err(Error::Format(format!(
                "matrix declares {}x{} but holds {} values",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_iterator(
            self.rows,
            self.cols,
            self.data.iter().map(|&v| T::lit(v)),
        ))
    }
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsDocument {
    pub format_version: String,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub alpha_obs: Vec<f64>,
    pub alpha_lat: Vec<f64>,
    pub A11: MatrixDoc,
    pub A12: MatrixDoc,
    pub A21: MatrixDoc,
    pub A22: MatrixDoc,
    pub B1: MatrixDoc,
    pub B2: MatrixDoc,
    pub Sigma1: MatrixDoc,
    pub Sigma2: MatrixDoc,
}

impl ParamsDocument {
    pub fn from_params<T: Scalar>(p: &ModelParams<T>) -> Self {
        Self {
            format_version: PARAMS_FORMAT.to_string(),
            n: p.n(),
            m: p.m(),
            p: p.p(),
            alpha_obs: p.alpha_obs.iter().map(|v| v.as_f64()).collect(),
            alpha_lat: p.alpha_lat.iter().map(|v| v.as_f64()).collect(),
            A11: MatrixDoc::from_matrix(&p.a11),
            A12: MatrixDoc::from_matrix(&p.a12),
            A21: MatrixDoc::from_matrix(&p.a21),
            A22: MatrixDoc::from_matrix(&p.a22),
            B1: MatrixDoc::from_matrix(&p.b1),
            B2: MatrixDoc::from_matrix(&p.b2),
            Sigma1: MatrixDoc::from_matrix(&p.sigma1),
            Sigma2: MatrixDoc::from_matrix(&p.sigma2),
        }
    }

    pub fn to_params<T: Scalar>(&self) -> Result<ModelParams<T>> {
        if self.format_version != PARAMS_FORMAT {
            return Err(Error::Format(format!(
                "unsupported params format {:?} (expected {PARAMS_FORMAT:?})",
                self.format_version
            )));
        }
        let params = ModelParams {
            a11: self.A11.to_matrix()?,
            a12: self.A12.to_matrix()?,
            a21: self.A21.to_matrix()?,
            a22: self.A22.to_matrix()?,
            b1: self.B1.to_matrix()?,
            b2: self.B2.to_matrix()?,
            sigma1: self.Sigma1.to_matrix()?,
            sigma2: self.Sigma2.to_matrix()?,
            alpha_obs: self.alpha_obs.iter().map(|&v| T::lit(v)).collect(),
            alpha_lat: self.alpha_lat.iter().map(|&v| T::lit(v)).collect(),
        };
        if (params.n(), params.m(), params.p()) != (self.n, self.m, self.p) {
            return Err(Error::dims(
                "params header (n, m, p)",
                format!("{:?}", (self.n, self.m, self.p)),
                format!("{:?}", (params.n(), params.m(), params.p())),
            ));
        }
        params.validate()?;
        Ok(params)
    }
}

impl<T: Scalar> ModelParams<T> {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ParamsDocument::from_params(self))
            .expect("params document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ParamsDocument = serde_json::from_str(text)?;
        doc.to_params()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    proptest! {
        #[test]
        fn json_roundtrip_is_bit_exact(seed in any::<u64>(), n in 1usize..4, m in 0usize..3, p in 0usize..3) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let alpha_obs = (0..n).map(|i| 0.1 + 0.37 * i as f64).collect();
            let alpha_lat = (0..m).map(|i| 1.0 / (3.0 + i as f64)).collect();
            let mut params = ModelParams::<f64>::random(alpha_obs, alpha_lat, p, 1.0, &mut rng);
            params.sigma1 *= 1.0 / 3.0;
            let back = ModelParams::<f64>::from_json(&params.to_json()).unwrap();
            prop_assert_eq!(
                params.a12.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                back.a12.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
            prop_assert_eq!(back, params);
        }
    }

    #[test]
    fn rejects_unknown_keys_and_bad_version() {
        let params = ModelParams::<f64>::zeros(vec![0.5], vec![], 0);
        let mut v: serde_json::Value = serde_json::from_str(&params.to_json()).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(ModelParams::<f64>::from_json(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&params.to_json()).unwrap();
        v["format_version"] = serde_json::json!("other/9");
        assert!(ModelParams::<f64>::from_json(&v.to_string()).is_err());
    }
}
