//! The style metric: cosine similarity of eval-mode embeddings and the
//! derived distance (1 - similarity) used in reports.

use serde::{Deserialize, Serialize};

use crate::error::{TensorError, TrainError};
use crate::model::StyleModel;
use crate::style::StyledImage;
use crate::tensor::tape_norm_eps;
use crate::trainer::embed_batch;

/// One scored pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StyleComparison {
    pub image_a_id: String,
    pub image_b_id: String,
    pub similarity: f64,
    pub distance: f64,
}

/// Cosine of two embedding vectors in a fixed evaluation order, so
/// similarity(a, b) == similarity(b, a) exactly.
pub fn embedding_cosine(a: &[f32], b: &[f32]) -> Result<f64, TensorError> {
    let mut dot = 0.0f64;
    let mut na2 = 0.0f64;
    let mut nb2 = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        dot += x as f64 * y as f64;
        na2 += (x as f64).powi(2);
        nb2 += (y as f64).powi(2);
    }
    let na = na2.sqrt();
    let nb = nb2.sqrt();
    let floor = tape_norm_eps();
    if na < floor || nb < floor {
        return Err(TensorError::NormUnderflow { row: 0, floor });
    }
    Ok(dot / (na * nb))
}

/// Similarity of two styled images under a trained encoder.
pub fn stylex_similarity(
    model: &mut StyleModel,
    a: &StyledImage,
    b: &StyledImage,
) -> Result<f64, TrainError> {
    let embeddings = embed_batch(model, &[a.clone(), b.clone()])?;
    Ok(embedding_cosine(&embeddings[0], &embeddings[1])?)
}

/// Distance form used in reports: 1 - similarity, in [0, 2].
pub fn stylex_distance(
    model: &mut StyleModel,
    a: &StyledImage,
    b: &StyledImage,
) -> Result<f64, TrainError> {
    Ok(1.0 - stylex_similarity(model, a, b)?)
}

/// Symmetric pairwise distances with image identifiers.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    pub ids: Vec<String>,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ids.len() + j]
    }

    /// CSV with a header row/column of image ids.
    pub fn to_csv(&self) -> String {
        let n = self.ids.len();
        let mut out = String::from("id");
        for id in &self.ids {
            out.push(',');
            out.push_str(id);
        }
        out.push('\n');
        for i in 0..n {
            out.push_str(&self.ids[i]);
            for j in 0..n {
                out.push(',');
                out.push_str(&format!("{}", self.get(i, j)));
            }
            out.push('\n');
        }
        out
    }
}

/// Identifier used for matrix headers and report rows.
pub fn image_id(image: &StyledImage) -> String {
    format!("{}_content{}", image.style_id, image.content_id)
}

/// Embed every image once and score all pairs; the matrix is exactly
/// symmetric with a zero-by-construction evaluation on the diagonal.
pub fn distance_matrix(
    model: &mut StyleModel,
    images: &[StyledImage],
) -> Result<DistanceMatrix, TrainError> {
    if images.is_empty() {
        return Err(TrainError::Data(crate::error::DataError::EmptyPairRequest));
    }
    let embeddings = embed_batch(model, images)?;
    let n = images.len();
    let mut values = vec![0.0f64; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = 1.0 - embedding_cosine(&embeddings[i], &embeddings[j])?;
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
        values[i * n + i] = 1.0 - embedding_cosine(&embeddings[i], &embeddings[i])?;
    }
    Ok(DistanceMatrix {
        ids: images.iter().map(image_id).collect(),
        values,
    })
}
