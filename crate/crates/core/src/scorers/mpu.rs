//! Multimodal processing unit: project text and span vectors into a shared
//! space, fuse them by sum, product and a fully connected layer over the
//! concatenation, and squash a single logit through a sigmoid.

use super::ScoreError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"SCR1";
const VERSION_TANH: u32 = 1;
const VERSION_LINEAR: u32 = 2;

/// Nonlinearity applied after the two input projections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProjectionActivation {
    #[default]
    Tanh,
    /// Plain linear maps.
    Identity,
}

impl ProjectionActivation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Self::Tanh => x.tanh(),
            Self::Identity => x,
        }
    }

    /// Derivative expressed through the activation output.
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Self::Tanh => 1.0 - y * y,
            Self::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MpuDims {
    pub text_dim: usize,
    pub video_dim: usize,
    pub hidden: usize,
}

/// Offsets of each tensor inside the flat parameter vector, in checkpoint
/// order: `w_t, b_t, w_v, b_v, w_cat, b_cat, w_out, b_out`.
#[derive(Debug, Clone, Copy)]
struct Layout {
    w_t: usize,
    b_t: usize,
    w_v: usize,
    b_v: usize,
    w_cat: usize,
    b_cat: usize,
    w_out: usize,
    b_out: usize,
    total: usize,
}

impl Layout {
    fn new(d: MpuDims) -> Self {
        let h = d.hidden;
        let w_t = 0;
        let b_t = w_t + d.text_dim * h;
        let w_v = b_t + h;
        let b_v = w_v + d.video_dim * h;
        let w_cat = b_v + h;
        let b_cat = w_cat + 2 * h * h;
        let w_out = b_cat + h;
        let b_out = w_out + 3 * h;
        Self {
            w_t,
            b_t,
            w_v,
            b_v,
            w_cat,
            b_cat,
            w_out,
            b_out,
            total: b_out + 1,
        }
    }
}

/// All learnable MPU weights in one flat vector.
///
/// Matrices are row-major with the input index as the row:
/// `w_t` is `text_dim x hidden`, `w_v` is `video_dim x hidden`,
/// `w_cat` is `2*hidden x hidden`; `w_out` has `3*hidden` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerParams {
    dims: MpuDims,
    activation: ProjectionActivation,
    values: Vec<f64>,
}

/// Intermediate activations kept for the backward pass.
struct Trace {
    u: Vec<f64>,
    w: Vec<f64>,
    h: Vec<f64>,
    logit: f64,
}

fn affine_into(out: &mut [f64], x: &[f64], weights: &[f64], bias: &[f64]) {
    let n = out.len();
    out.copy_from_slice(bias);
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        let row = &weights[i * n..(i + 1) * n];
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += xi * wv;
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of `sigmoid(logit)` against `label`, computed from
/// the logit for stability.
pub fn bce_with_logit(logit: f64, label: f64) -> f64 {
    logit.max(0.0) - label * logit + (-logit.abs()).exp().ln_1p()
}

impl ScorerParams {
    pub fn zeros(dims: MpuDims, activation: ProjectionActivation) -> Self {
        Self {
            dims,
            activation,
            values: vec![0.0; Layout::new(dims).total],
        }
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases.
    pub fn init(dims: MpuDims, activation: ProjectionActivation, seed: u64) -> Self {
        let mut p = Self::zeros(dims, activation);
        let l = p.layout();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = dims.hidden;
        let blocks = [
            (l.w_t, l.w_v, dims.text_dim),
            (l.w_v, l.w_cat, dims.video_dim),
            (l.w_cat, l.w_out, 2 * h),
            (l.w_out, l.total, 3 * h),
        ];
        for (lo, hi, fan_in) in blocks {
            let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
            for v in &mut p.values[lo..hi] {
                *v = rng.random_range(-bound..bound);
            }
        }
        p
    }

    fn layout(&self) -> Layout {
        Layout::new(self.dims)
    }

    pub fn dims(&self) -> MpuDims {
        self.dims
    }

    pub fn activation(&self) -> ProjectionActivation {
        self.activation
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn num_params(&self) -> usize {
        self.values.len()
    }

    pub fn w_t(&self) -> &[f64] {
        let l = self.layout();
        &self.values[l.w_t..l.b_t]
    }
    pub fn b_t(&self) -> &[f64] {
        let l = self.layout();
        &self.values[l.b_t..l.w_v]
    }
    pub fn w_v(&self) -> &[f64] {
        let l = self.layout();
        &self.values[l.w_v..l.b_v]
    }
    pub fn b_v(&self) -> &[f64] {
        let l = self.layout();
        &self.values[l.b_v..l.w_cat]
    }
    pub fn w_cat(&self) -> &[f64] {
        let l = self.layout();
        &self.values[l.w_cat..l.b_cat]
    }
    pub fn b_cat(&self) -> &[f64] {
        let l = self.layout();
        &self.values[l.b_cat..l.w_out]
    }
    pub fn w_out(&self) -> &[f64] {
        let l = self.layout();
        &self.values[l.w_out..l.b_out]
    }
    pub fn b_out(&self) -> f64 {
        self.values[self.layout().b_out]
    }

    fn check_dims(&self, text: &[f64], span: &[f64]) -> Result<(), ScoreError> {
        if text.len() != self.dims.text_dim || span.len() != self.dims.video_dim {
            return Err(ScoreError::DimensionMismatch {
                expected: (self.dims.text_dim, self.dims.video_dim),
                got: (text.len(), span.len()),
            });
        }
        Ok(())
    }

    fn trace(&self, text: &[f64], span: &[f64]) -> Trace {
        let l = self.layout();
        let h = self.dims.hidden;
        let v = &self.values;
        let mut u = vec![0.0; h];
        let mut w = vec![0.0; h];
        affine_into(&mut u, text, &v[l.w_t..l.b_t], &v[l.b_t..l.w_v]);
        affine_into(&mut w, span, &v[l.w_v..l.b_v], &v[l.b_v..l.w_cat]);
        for x in u.iter_mut().chain(w.iter_mut()) {
            *x = self.activation.apply(*x);
        }
        let concat: Vec<f64> = u.iter().chain(&w).copied().collect();
        let mut hid = vec![0.0; h];
        affine_into(&mut hid, &concat, &v[l.w_cat..l.b_cat], &v[l.b_cat..l.w_out]);
        hid.iter_mut().for_each(|x| *x = x.tanh());

        let w_out = &v[l.w_out..l.b_out];
        let mut logit = v[l.b_out];
        for k in 0..h {
            logit += w_out[k] * (u[k] + w[k]) + w_out[h + k] * (u[k] * w[k]) + w_out[2 * h + k] * hid[k];
        }
        Trace { u, w, h: hid, logit }
    }

    /// Pre-sigmoid score.
    pub fn logit(&self, text: &[f64], span: &[f64]) -> Result<f64, ScoreError> {
        self.check_dims(text, span)?;
        Ok(self.trace(text, span).logit)
    }

    /// Similarity in (0, 1).
    pub fn forward(&self, text: &[f64], span: &[f64]) -> Result<f64, ScoreError> {
        self.logit(text, span).map(sigmoid)
    }

    /// Adds `dlogit * d(logit)/d(params)` for one example into `grad`.
    fn backprop(&self, text: &[f64], span: &[f64], t: &Trace, dlogit: f64, grad: &mut [f64]) {
        let l = self.layout();
        let h = self.dims.hidden;
        let v = &self.values;
        let w_out = &v[l.w_out..l.b_out];

        grad[l.b_out] += dlogit;
        let mut du = vec![0.0; h];
        let mut dw = vec![0.0; h];
        let mut dh_pre = vec![0.0; h];
        for k in 0..h {
            let (uk, wk, hk) = (t.u[k], t.w[k], t.h[k]);
            grad[l.w_out + k] += dlogit * (uk + wk);
            grad[l.w_out + h + k] += dlogit * uk * wk;
            grad[l.w_out + 2 * h + k] += dlogit * hk;
            let d_sum = dlogit * w_out[k];
            let d_prod = dlogit * w_out[h + k];
            du[k] = d_sum + d_prod * wk;
            dw[k] = d_sum + d_prod * uk;
            dh_pre[k] = dlogit * w_out[2 * h + k] * (1.0 - hk * hk);
        }

        // Fully connected layer over concat(u, w).
        let w_cat = &v[l.w_cat..l.b_cat];
        for j in 0..2 * h {
            let cj = if j < h { t.u[j] } else { t.w[j - h] };
            let row = &w_cat[j * h..(j + 1) * h];
            let mut back = 0.0;
            for k in 0..h {
                grad[l.w_cat + j * h + k] += cj * dh_pre[k];
                back += row[k] * dh_pre[k];
            }
            if j < h {
                du[j] += back;
            } else {
                dw[j - h] += back;
            }
        }
        for k in 0..h {
            grad[l.b_cat + k] += dh_pre[k];
        }

        for k in 0..h {
            du[k] *= self.activation.grad_from_output(t.u[k]);
            dw[k] *= self.activation.grad_from_output(t.w[k]);
            grad[l.b_t + k] += du[k];
            grad[l.b_v + k] += dw[k];
        }
        for (i, &x) in text.iter().enumerate() {
            for k in 0..h {
                grad[l.w_t + i * h + k] += x * du[k];
            }
        }
        for (i, &x) in span.iter().enumerate() {
            for k in 0..h {
                grad[l.w_v + i * h + k] += x * dw[k];
            }
        }
    }

    /// Mean cross-entropy over `batch` and its exact gradient, laid out like
    /// [`ScorerParams::values`].
    pub fn loss_and_gradients<'a, I>(&self, batch: I) -> Result<(f64, Vec<f64>), ScoreError>
    where
        I: IntoIterator<Item = (&'a [f64], &'a [f64], f64)>,
    {
        let mut grad = vec![0.0; self.values.len()];
        let mut loss = 0.0;
        let mut n = 0usize;
        let mut pending = Vec::new();
        for (text, span, label) in batch {
            self.check_dims(text, span)?;
            let t = self.trace(text, span);
            loss += bce_with_logit(t.logit, label);
            pending.push((text, span, label, t));
            n += 1;
        }
        if n == 0 {
            return Ok((0.0, grad));
        }
        let scale = 1.0 / n as f64;
        for (text, span, label, t) in &pending {
            let dlogit = (sigmoid(t.logit) - label) * scale;
            self.backprop(text, span, t, dlogit, &mut grad);
        }
        Ok((loss * scale, grad))
    }

    pub fn write(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        let version = match self.activation {
            ProjectionActivation::Tanh => VERSION_TANH,
            ProjectionActivation::Identity => VERSION_LINEAR,
        };
        for x in [version, self.dims.text_dim as u32, self.dims.video_dim as u32, self.dims.hidden as u32] {
            w.write_all(&x.to_le_bytes())?;
        }
        for &x in &self.values {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a checkpoint. Weights come back rounded to `f32`.
    pub fn read(mut r: impl Read) -> Result<Self, ScoreError> {
        let bad = |m: String| ScoreError::BadCheckpoint(m);
        let mut head = [0u8; 20];
        r.read_exact(&mut head).map_err(|_| bad("truncated header".into()))?;
        if &head[..4] != MAGIC {
            return Err(bad("bad magic".into()));
        }
        let word = |i: usize| u32::from_le_bytes(head[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes"));
        let activation = match word(0) {
            VERSION_TANH => ProjectionActivation::Tanh,
            VERSION_LINEAR => ProjectionActivation::Identity,
            v => return Err(bad(format!("unsupported version {v}"))),
        };
        let dims = MpuDims {
            text_dim: word(1) as usize,
            video_dim: word(2) as usize,
            hidden: word(3) as usize,
        };
        let mut p = Self::zeros(dims, activation);
        let mut buf = vec![0u8; p.values.len() * 4];
        r.read_exact(&mut buf).map_err(|_| bad("truncated weights".into()))?;
        for (v, chunk) in p.values.iter_mut().zip(buf.chunks_exact(4)) {
            *v = f32::from_le_bytes(chunk.try_into().expect("4 bytes")) as f64;
        }
        if p.values.iter().any(|v| !v.is_finite()) {
            return Err(bad("non-finite weight".into()));
        }
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<(), ScoreError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ScoreError> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
