//! Frozen similarity functions: raw dot product and a stacked
//! cross-attention relevance score.

use super::ScoreError;

pub const DEFAULT_SCA_TEMPERATURE: f64 = 0.1;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

pub fn dot_score(text: &[f64], span: &[f64]) -> Result<f64, ScoreError> {
    if text.len() != span.len() {
        return Err(ScoreError::DimensionMismatch {
            expected: (text.len(), text.len()),
            got: (text.len(), span.len()),
        });
    }
    Ok(dot(text, span))
}

/// Fixed linear map applied to text vectors before a dot product, for
/// when text and video embeddings live in different spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct TextProjection {
    pub rows: usize,
    pub cols: usize,
    /// `rows x cols` row-major; maps a `cols`-dim text vector to `rows` dims.
    pub matrix: Vec<f64>,
}

impl TextProjection {
    pub fn apply(&self, text: &[f64]) -> Result<Vec<f64>, ScoreError> {
        if text.len() != self.cols || self.matrix.len() != self.rows * self.cols {
            return Err(ScoreError::DimensionMismatch {
                expected: (self.cols, self.rows),
                got: (text.len(), self.matrix.len() / self.cols.max(1)),
            });
        }
        Ok(self.matrix.chunks_exact(self.cols).map(|row| dot(row, text)).collect())
    }
}

/// Stacked cross attention, text-to-image direction, averaged over words.
///
/// Frames are L2-normalized first. For each word, frames are weighted by a
/// softmax of their cosine with the word divided by `temperature`; the
/// word's relevance is its cosine with the weighted frame sum. The score is
/// the mean relevance.
pub fn sca_score(words: &[Vec<f64>], frames: &[Vec<f64>], temperature: f64) -> Result<f64, ScoreError> {
    if words.is_empty() || frames.is_empty() {
        return Err(ScoreError::EmptyInput);
    }
    let dim = words[0].len();
    if let Some(bad) = words.iter().chain(frames).find(|v| v.len() != dim) {
        return Err(ScoreError::DimensionMismatch {
            expected: (dim, dim),
            got: (dim, bad.len()),
        });
    }
    let frames: Vec<Vec<f64>> = frames
        .iter()
        .map(|f| {
            let n = dot(f, f).sqrt();
            if n == 0.0 {
                f.clone()
            } else {
                f.iter().map(|x| x / n).collect()
            }
        })
        .collect();
    let mut total = 0.0;
    let mut logits = vec![0.0; frames.len()];
    let mut attended = vec![0.0; dim];
    for word in words {
        for (l, f) in logits.iter_mut().zip(&frames) {
            *l = cosine(word, f) / temperature;
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for l in logits.iter_mut() {
            *l = (*l - max).exp();
            z += *l;
        }
        attended.iter_mut().for_each(|a| *a = 0.0);
        for (weight, f) in logits.iter().zip(&frames) {
            for (a, x) in attended.iter_mut().zip(f) {
                *a += weight / z * x;
            }
        }
        total += cosine(word, &attended);
    }
    Ok(total / words.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dot_examples() {
        assert_eq!(dot_score(&[0.6, 0.8], &[0.6, 0.8]).unwrap(), 1.0);
        assert_eq!(dot_score(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert_eq!(dot_score(&[1.0, 2.0], &[3.0, -1.0]).unwrap(), 1.0);
        assert!(dot_score(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn projection_then_dot() {
        let p = TextProjection {
            rows: 2,
            cols: 3,
            matrix: vec![1.0, 0.0, 0.0, 0.0, 1.0, 1.0],
        };
        assert_eq!(p.apply(&[2.0, 3.0, 4.0]).unwrap(), vec![2.0, 7.0]);
        assert!(p.apply(&[1.0]).is_err());
    }

    #[test]
    fn sca_singletons_reduce_to_cosine() {
        let w = vec![vec![1.0, 2.0, 0.5]];
        let f = vec![vec![-0.3, 1.0, 2.0]];
        assert!((sca_score(&w, &f, 0.1).unwrap() - cosine(&w[0], &f[0])).abs() < 1e-15);
    }

    #[test]
    fn sca_orthogonal_is_zero() {
        let words = vec![vec![0.0, 0.0, 0.0, 1.0]];
        let frames = vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]];
        assert!(sca_score(&words, &frames, 0.1).unwrap().abs() < 1e-15);
    }

    #[test]
    fn sca_rejects_empty() {
        assert!(matches!(sca_score(&[], &[vec![1.0]], 0.1), Err(ScoreError::EmptyInput)));
        assert!(matches!(sca_score(&[vec![1.0]], &[], 0.1), Err(ScoreError::EmptyInput)));
    }

    /// Independent recomputation: explicit softmax, then cosine.
    fn sca_oracle(words: &[Vec<f64>], frames: &[Vec<f64>], temp: f64) -> f64 {
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let cos = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (norm(a) * norm(b));
        let frames: Vec<Vec<f64>> = frames.iter().map(|f| f.iter().map(|x| x / norm(f)).collect()).collect();
        let mut rel = Vec::new();
        for e in words {
            let exps: Vec<f64> = frames.iter().map(|f| (cos(e, f) / temp).exp()).collect();
            let z: f64 = exps.iter().sum();
            let a: Vec<f64> = (0..e.len())
                .map(|d| frames.iter().zip(&exps).map(|(f, w)| w / z * f[d]).sum())
                .collect();
            rel.push(cos(e, &a));
        }
        rel.iter().sum::<f64>() / rel.len() as f64
    }

    #[test]
    fn sca_matches_oracle() {
        let words = vec![vec![0.2, -1.0, 0.7, 0.1], vec![1.5, 0.3, -0.2, 0.9]];
        let frames = vec![
            vec![0.5, 0.5, -0.5, 1.0],
            vec![-1.0, 0.2, 0.3, 0.0],
            vec![0.9, -0.4, 0.8, 0.6],
        ];
        let got = sca_score(&words, &frames, 0.1).unwrap();
        assert!((got - sca_oracle(&words, &frames, 0.1)).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn sca_frame_rescaling_invariant(
            words in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 4), 1..4),
            frames in proptest::collection::vec(proptest::collection::vec(-1.0f64..1.0, 4), 1..5),
            which in 0usize..5,
            scale in 0.01f64..100.0,
        ) {
            prop_assume!(frames.iter().all(|f| f.iter().any(|x| x.abs() > 1e-3)));
            let base = sca_score(&words, &frames, 0.1).unwrap();
            let mut scaled = frames.clone();
            let i = which % scaled.len();
            scaled[i].iter_mut().for_each(|x| *x *= scale);
            prop_assert!((sca_score(&words, &scaled, 0.1).unwrap() - base).abs() < 1e-9);
        }

        #[test]
        fn dot_is_linear_in_text(t in proptest::collection::vec(-5.0f64..5.0, 3), v in proptest::collection::vec(-5.0f64..5.0, 3), a in -3.0f64..3.0) {
            let scaled: Vec<f64> = t.iter().map(|x| a * x).collect();
            prop_assert!((dot_score(&scaled, &v).unwrap() - a * dot_score(&t, &v).unwrap()).abs() < 1e-9);
        }
    }
}
