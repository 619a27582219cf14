//! Matrices on the wire: `{"rows": r, "cols": c, "data": [row-major entries]}`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::numeric::Mat;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl JsonMatrix {
    pub fn to_matrix(&self) -> Result<Mat> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::dim(format!(
                "matrix declares {}x{} but carries {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(Mat::from_row_slice(self.rows, self.cols, &self.data))
    }
}

impl From<&Mat> for JsonMatrix {
    fn from(m: &Mat) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                data.push(m[(i, j)]);
            }
        }
        JsonMatrix {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

/// `#[serde(with = "matrix_json")]` adapter for `DMatrix<f64>` fields.
pub fn serialize<S: Serializer>(m: &Mat, s: S) -> std::result::Result<S::Ok, S::Error> {
    JsonMatrix::from(m).serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Mat, D::Error> {
    let jm = JsonMatrix::deserialize(d)?;
    jm.to_matrix().map_err(serde::de::Error::custom)
}

/// Same adapter for `Option<DMatrix<f64>>`.
pub mod opt {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Option<Mat>, s: S) -> std::result::Result<S::Ok, S::Error> {
        m.as_ref().map(JsonMatrix::from).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<Option<Mat>, D::Error> {
        Option::<JsonMatrix>::deserialize(d)?
            .map(|jm| jm.to_matrix().map_err(serde::de::Error::custom))
            .transpose()
    }
}
