//! Soft-margin RBF support vector machine for short/long duration
//! classification, trained with SMO using maximal-violating-pair working
//! set selection with second-order gain.

use super::LocalizeError;
use crate::interval::DurationClass;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"SVM1";
const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub c: f64,
    /// RBF width; `None` uses `1 / (dim * variance of the training features)`.
    pub gamma: Option<f64>,
    /// Stop once the maximal KKT violation falls below this.
    pub tolerance: f64,
    /// Iteration cap, in multiples of the training-set size.
    pub max_passes: usize,
    /// Scale each sample's C inversely to its class frequency.
    pub balanced: bool,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: None,
            tolerance: 1e-3,
            max_passes: 100,
            balanced: true,
        }
    }
}

pub fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// `1 / (dim * var)` over every feature value; 1 when the variance is 0.
pub fn scale_gamma(x: &[Vec<f64>]) -> f64 {
    let dim = x.first().map_or(0, Vec::len);
    let n = (x.len() * dim) as f64;
    if n == 0.0 {
        return 1.0;
    }
    let mean = x.iter().flatten().sum::<f64>() / n;
    let var = x.iter().flatten().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (dim as f64 * var)
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DurationClassifier {
    pub dim: usize,
    pub gamma: f64,
    pub bias: f64,
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i`, with `y = +1` for short and `-1` for long.
    pub alphas: Vec<f64>,
}

/// Solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmTrainReport {
    pub iterations: usize,
    /// Final maximal violating pair gap.
    pub kkt_gap: f64,
    pub converged: bool,
    pub n_support: usize,
    /// Per-sample box bounds `C * class_weight(y_i)`.
    pub upper_bounds: Vec<f64>,
    /// Dual variables for every training sample, all `>= 0`.
    pub dual: Vec<f64>,
}

fn label(c: DurationClass) -> f64 {
    match c {
        DurationClass::Short => 1.0,
        DurationClass::Long => -1.0,
    }
}

/// Trains on text vectors labelled short or long.
pub fn train_duration_clf(
    x: &[Vec<f64>],
    classes: &[DurationClass],
    cfg: &SvmConfig,
) -> Result<(DurationClassifier, SvmTrainReport), LocalizeError> {
    assert_eq!(x.len(), classes.len(), "one class per sample");
    let n = x.len();
    let dim = x.first().map_or(0, Vec::len);
    if let Some(bad) = x.iter().find(|v| v.len() != dim) {
        return Err(LocalizeError::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    let n_short = classes.iter().filter(|&&c| c == DurationClass::Short).count();
    if n_short == 0 || n_short == n {
        return Err(LocalizeError::SingleClass);
    }
    let y: Vec<f64> = classes.iter().map(|&c| label(c)).collect();
    let (w_pos, w_neg) = if cfg.balanced {
        (n as f64 / (2.0 * n_short as f64), n as f64 / (2.0 * (n - n_short) as f64))
    } else {
        (1.0, 1.0)
    };
    let upper: Vec<f64> = y
        .iter()
        .map(|&yi| cfg.c * if yi > 0.0 { w_pos } else { w_neg })
        .collect();
    let gamma = cfg.gamma.unwrap_or_else(|| scale_gamma(x));

    let k: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| rbf(&x[i], &x[j], gamma))
        .collect();
    let kij = |i: usize, j: usize| k[i * n + j];

    let mut alpha = vec![0.0; n];
    // Gradient of 0.5 a'Qa - e'a with Q_ij = y_i y_j K_ij.
    let mut grad = vec![-1.0; n];
    let is_upper = |a: &[f64], t: usize| a[t] >= upper[t];
    let is_lower = |a: &[f64], t: usize| a[t] <= 0.0;

    let max_iter = cfg.max_passes.max(1) * n.max(1);
    let mut iterations = 0;
    let mut gap = f64::INFINITY;
    while iterations < max_iter {
        // i: maximal violator in I_up.
        let mut g_max = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            let in_up = if y[t] > 0.0 { !is_upper(&alpha, t) } else { !is_lower(&alpha, t) };
            if in_up && -y[t] * grad[t] >= g_max {
                g_max = -y[t] * grad[t];
                i_sel = Some(t);
            }
        }
        // j: best second-order gain in I_low.
        let mut g_max2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut best_obj = f64::INFINITY;
        if let Some(i) = i_sel {
            for t in 0..n {
                let in_low = if y[t] > 0.0 { !is_lower(&alpha, t) } else { !is_upper(&alpha, t) };
                if !in_low {
                    continue;
                }
                let v = y[t] * grad[t];
                g_max2 = g_max2.max(v);
                let diff = g_max + v;
                if diff > 0.0 {
                    let quad = kij(i, i) + kij(t, t) - 2.0 * kij(i, t);
                    let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= best_obj {
                        best_obj = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        gap = g_max + g_max2;
        let (Some(i), Some(j)) = (i_sel, j_sel) else {
            break;
        };
        if gap < cfg.tolerance {
            break;
        }
        iterations += 1;

        let (ci, cj) = (upper[i], upper[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qij = y[i] * y[j] * kij(i, j);
        if y[i] != y[j] {
            let quad = (kij(i, i) + kij(j, j) + 2.0 * qij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let quad = (kij(i, i) + kij(j, j) - 2.0 * qij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[i] * y[t] * kij(i, t) * di + y[j] * y[t] * kij(j, t) * dj;
        }
    }

    // Offset from free vectors, or the midpoint of the feasible range.
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if is_upper(&alpha, t) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if is_lower(&alpha, t) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            sum_free += yg;
            n_free += 1;
        }
    }
    let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };

    let mut support_vectors = Vec::new();
    let mut alphas = Vec::new();
    for t in 0..n {
        if alpha[t] > 0.0 {
            support_vectors.push(x[t].clone());
            alphas.push(alpha[t] * y[t]);
        }
    }
    let clf = DurationClassifier {
        dim,
        gamma,
        bias: -rho,
        support_vectors,
        alphas,
    };
    let report = SvmTrainReport {
        iterations,
        kkt_gap: gap,
        converged: gap < cfg.tolerance,
        n_support: clf.alphas.len(),
        upper_bounds: upper,
        dual: alpha,
    };
    Ok((clf, report))
}

impl DurationClassifier {
    pub fn decision_value(&self, x: &[f64]) -> Result<f64, LocalizeError> {
        if x.len() != self.dim {
            return Err(LocalizeError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(self
            .support_vectors
            .iter()
            .zip(&self.alphas)
            .map(|(sv, a)| a * rbf(sv, x, self.gamma))
            .sum::<f64>()
            + self.bias)
    }

    /// Short when the decision value is `>= 0`; a value of exactly zero
    /// goes to the short class.
    pub fn predict(&self, x: &[f64]) -> Result<DurationClass, LocalizeError> {
        Ok(if self.decision_value(x)? >= 0.0 {
            DurationClass::Short
        } else {
            DurationClass::Long
        })
    }

    pub fn write(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.alphas.len() as u32).to_le_bytes())?;
        w.write_all(&self.gamma.to_le_bytes())?;
        w.write_all(&self.bias.to_le_bytes())?;
        for (sv, a) in self.support_vectors.iter().zip(&self.alphas) {
            w.write_all(&a.to_le_bytes())?;
            for &x in sv {
                w.write_all(&(x as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a checkpoint; support vectors come back rounded to `f32`.
    pub fn read(mut r: impl Read) -> Result<Self, LocalizeError> {
        let bad = |m: &str| LocalizeError::BadCheckpoint(m.to_string());
        let mut head = [0u8; 28];
        r.read_exact(&mut head).map_err(|_| bad("truncated header"))?;
        if &head[..4] != MAGIC {
            return Err(bad("bad magic"));
        }
        let dim = u32::from_le_bytes(head[4..8].try_into().expect("4 bytes")) as usize;
        let n_sv = u32::from_le_bytes(head[8..12].try_into().expect("4 bytes")) as usize;
        let gamma = f64::from_le_bytes(head[12..20].try_into().expect("8 bytes"));
        let bias = f64::from_le_bytes(head[20..28].try_into().expect("8 bytes"));
        let mut support_vectors = Vec::with_capacity(n_sv);
        let mut alphas = Vec::with_capacity(n_sv);
        let mut buf = vec![0u8; 8 + 4 * dim];
        for _ in 0..n_sv {
            r.read_exact(&mut buf).map_err(|_| bad("truncated support vector"))?;
            alphas.push(f64::from_le_bytes(buf[..8].try_into().expect("8 bytes")));
            support_vectors.push(
                buf[8..]
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                    .collect(),
            );
        }
        Ok(Self {
            dim,
            gamma,
            bias,
            support_vectors,
            alphas,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), LocalizeError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, LocalizeError> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
