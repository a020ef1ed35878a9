use sha2::{Digest, Sha256};

use super::{EmbedError, EmbeddingBackend};

/// Deterministic offline embeddings: a bag of hashed token vectors.
///
/// Each whitespace token maps to a pseudo-random unit vector derived from
/// `sha256(token || counter)`; a text embeds as the L2-normalized sum of its
/// token vectors. Texts that share tokens therefore have higher cosine.
#[derive(Debug, Clone)]
pub struct MockBackend {
    dim: usize,
    id: String,
}

impl MockBackend {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self {
            dim,
            id: format!("mock-sha256-d{dim}"),
        }
    }

    /// Unit vector for one token.
    pub fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim);
        let mut counter: u32 = 0;
        while out.len() < self.dim {
            let mut h = Sha256::new();
            h.update(token.as_bytes());
            h.update(counter.to_le_bytes());
            let block = h.finalize();
            for chunk in block.chunks_exact(4) {
                if out.len() == self.dim {
                    break;
                }
                let u = u32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
                out.push(u as f64 / 2_147_483_648.0 - 1.0);
            }
            counter += 1;
        }
        let n = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        out.iter().map(|x| x / n).collect()
    }
}

impl EmbeddingBackend for MockBackend {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn normalizes(&self) -> bool {
        true
    }

    fn is_remote(&self) -> bool {
        false
    }

    fn embed_text(&self, joined: &str) -> Result<Vec<f64>, EmbedError> {
        let mut sum = vec![0.0; self.dim];
        let mut any = false;
        for tok in joined.split_whitespace() {
            any = true;
            for (s, t) in sum.iter_mut().zip(self.token_vector(tok)) {
                *s += t;
            }
        }
        if !any {
            return Err(EmbedError::EmptyText);
        }
        let n = sum.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(EmbedError::Domain(format!(
                "tokens of {joined:?} cancel out"
            )));
        }
        Ok(sum.into_iter().map(|x| x / n).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_norm_and_dim() {
        let b = MockBackend::new(64);
        let v = b.embed_text("happy person").unwrap();
        assert_eq!(v.len(), 64);
        let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_across_instances() {
        assert_eq!(
            MockBackend::new(16).embed_text("happy").unwrap(),
            MockBackend::new(16).embed_text("happy").unwrap()
        );
    }

    #[test]
    fn components_in_range() {
        let v = MockBackend::new(100).token_vector("x");
        assert!(v.iter().all(|x| x.abs() <= 1.0));
    }

    #[test]
    fn empty_text_rejected() {
        assert!(matches!(
            MockBackend::new(8).embed_text("  "),
            Err(EmbedError::EmptyText)
        ));
    }
}
