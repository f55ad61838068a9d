use crate::error::{Error, Result};
use crate::linalg::{dot, norm};

/// Cosine similarity of a visual and a textual embedding; 0 if either is zero.
pub fn cross_modal_similarity(visual: &[f64], text: &[f64]) -> Result<f64> {
    if visual.len() != text.len() {
        return Err(Error::Shape(format!(
            "visual dim {} != text dim {}",
            visual.len(),
            text.len()
        )));
    }
    let denom = norm(visual) * norm(text);
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((dot(visual, text) / denom).clamp(-1.0, 1.0))
}
