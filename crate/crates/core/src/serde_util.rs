//! JSON encodings for complex matrices.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;

/// Row-major real and imaginary parts of a complex matrix.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MatrixJson {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn from_matrix(m: &CMatrix) -> Self {
        let (re, im) = split_parts(m);
        Self { re, im }
    }

    pub fn to_matrix(&self) -> Result<CMatrix> {
        join_parts(&self.re, &self.im)
    }
}

pub fn split_parts(m: &CMatrix) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let re = (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)].re).collect()).collect();
    let im = (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)].im).collect()).collect();
    (re, im)
}

pub fn join_parts(re: &[Vec<f64>], im: &[Vec<f64>]) -> Result<CMatrix> {
    let rows = re.len();
    let cols = re.first().map_or(0, Vec::len);
    if im.len() != rows
        || re.iter().any(|r| r.len() != cols)
        || im.iter().any(|r| r.len() != cols)
    {
        return Err(Error::Shape("real and imaginary parts must be equal-sized rectangles".into()));
    }
    Ok(CMatrix::from_fn(rows, cols, |i, j| Complex64::new(re[i][j], im[i][j])))
}

/// Serde adapter for `CMatrix` fields, encoded as [`MatrixJson`].
pub mod matrix {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixJson::from_matrix(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<CMatrix, D::Error> {
        let json = MatrixJson::deserialize(d)?;
        json.to_matrix().map_err(serde::de::Error::custom)
    }
}

pub mod matrix_vec {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(ms: &[CMatrix], s: S) -> std::result::Result<S::Ok, S::Error> {
        ms.iter().map(MatrixJson::from_matrix).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Vec<CMatrix>, D::Error> {
        let json = Vec::<MatrixJson>::deserialize(d)?;
        json.iter().map(|m| m.to_matrix().map_err(serde::de::Error::custom)).collect()
    }
}
