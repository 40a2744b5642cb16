//! The closed caption tag vocabulary used by the text conditioner.

use crate::error::{MatError, Result};

/// Every tag a caption may contain. Closed and enumerable; the DiT's text
/// embedding table is sized to this list.
pub const VOCAB: &[&str] = &[
    // generator families
    "checker", "stripes", "bricks", "bumpy", "metal",
    // colors
    "red", "green", "blue", "white", "black", "gray", "yellow", "brown", "purple", "steel",
    "copper", "gold",
    // finishes
    "polished", "glossy", "smooth", "matte", "rough",
    // nouns
    "surface", "wall", "floor", "plate", "tile",
];

pub fn vocab_size() -> usize {
    VOCAB.len()
}

pub fn tag_id(tag: &str) -> Result<usize> {
    VOCAB
        .iter()
        .position(|&t| t == tag)
        .ok_or_else(|| MatError::UnknownTag(tag.to_string()))
}

/// Split a caption into tag ids; every word must be in the vocabulary.
pub fn tokenize(caption: &str) -> Result<Vec<usize>> {
    let ids: Result<Vec<usize>> = caption.split_whitespace().map(tag_id).collect();
    let ids = ids?;
    if ids.is_empty() {
        return Err(MatError::Contract("empty caption".to_string()));
    }
    Ok(ids)
}

/// Finish word for a roughness level.
pub fn finish_word(roughness: f32) -> &'static str {
    match roughness {
        r if r < 0.25 => "polished",
        r if r < 0.45 => "glossy",
        r if r < 0.65 => "smooth",
        r if r < 0.85 => "matte",
        _ => "rough",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_is_closed() {
        assert!(tokenize("checker black white matte").is_ok());
        assert!(matches!(
            tokenize("checker chartreuse"),
            Err(MatError::UnknownTag(t)) if t == "chartreuse"
        ));
    }

    #[test]
    fn all_vocab_words_tokenize_to_unique_ids() {
        let mut seen = std::collections::BTreeSet::new();
        for w in VOCAB {
            assert!(seen.insert(tag_id(w).unwrap()));
        }
    }
}
