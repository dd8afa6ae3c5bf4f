use crate::numcore::Tensor2;
use crate::{Error, Result};

/// Row-aligned observed modality, missing modality and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub xo: Tensor2,
    pub xm: Tensor2,
    pub y: Tensor2,
    pub ids: Vec<String>,
}

impl Batch {
    pub fn new(xo: Tensor2, xm: Tensor2, y: Tensor2, ids: Vec<String>) -> Result<Self> {
        let n = xo.rows();
        if xm.rows() != n || y.rows() != n || ids.len() != n || y.cols() != 1 {
            return Err(Error::dim(
                "Batch",
                format!(
                    "xo {:?}, xm {:?}, y {:?}, {} ids",
                    xo.shape(),
                    xm.shape(),
                    y.shape(),
                    ids.len()
                ),
            ));
        }
        if let Some(v) = y.data().iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Err(Error::Validation(format!("label {v} is not 0 or 1")));
        }
        Ok(Self { xo, xm, y, ids })
    }

    pub fn len(&self) -> usize {
        self.xo.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> Vec<u8> {
        self.y.data().iter().map(|&v| v as u8).collect()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            xo: self.xo.select_rows(idx),
            xm: self.xm.select_rows(idx),
            y: self.y.select_rows(idx),
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
        }
    }
}
