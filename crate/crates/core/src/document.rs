//! JSON interchange documents, discriminated by a `"kind"` field.

use serde::{Deserialize, Serialize};

use crate::banded::{BandedGeneratorForm, BandedMatrix};
use crate::block::{BlockGeneratorForm, BlockTridiagonalMatrix};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::scalar::{ScalarGeneratorForm, TridiagonalMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Document {
    Dense(DenseMatrix),
    ScalarGenerator(ScalarGeneratorForm),
    Tridiagonal(TridiagonalMatrix),
    Band(BandedGeneratorForm),
    BandInverse(BandedMatrix),
    Block(BlockGeneratorForm),
    BlockTridiagonal(BlockTridiagonalMatrix),
}

impl Document {
    pub fn kind(&self) -> &'static str {
        match self {
            Document::Dense(_) => "dense",
            Document::ScalarGenerator(_) => "scalar_generator",
            Document::Tridiagonal(_) => "tridiagonal",
            Document::Band(_) => "band",
            Document::BandInverse(_) => "band_inverse",
            Document::Block(_) => "block",
            Document::BlockTridiagonal(_) => "block_tridiagonal",
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("bad document: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("documents always serialize")
    }
}
