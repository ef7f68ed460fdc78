//! Tiny trainable fully-convolutional denoiser with manual backprop.
//!
//! Three 3×3 convolution layers with periodic padding and tanh between
//! them: channels 3 → 8 → 8 → 1, where the input stacks the data plane with
//! two constant time channels `√α_t` and `√(1−α_t)`. Fully convolutional,
//! so any H×W with H, W ≥ 3 is accepted, and periodic padding makes the net
//! exactly translation-equivariant — the two properties the guidance
//! algebra needs from a learned predictor. Gradients are hand-derived and
//! gated by a central-finite-difference check in the tests.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::predictors::Predictor;
use crate::rng::RngStream;
use crate::schedule::NoiseSchedule;

const K: usize = 3; // kernel edge
const C_IN: usize = 3; // data plane + 2 time channels
const C_MID: usize = 8;

const W1_LEN: usize = C_MID * C_IN * K * K; // 216
const B1_LEN: usize = C_MID;
const W2_LEN: usize = C_MID * C_MID * K * K; // 576
const B2_LEN: usize = C_MID;
const W3_LEN: usize = C_MID * K * K; // 72, single output channel
const B3_LEN: usize = 1;

const W1_OFF: usize = 0;
const B1_OFF: usize = W1_OFF + W1_LEN;
const W2_OFF: usize = B1_OFF + B1_LEN;
const B2_OFF: usize = W2_OFF + W2_LEN;
const W3_OFF: usize = B2_OFF + B2_LEN;
const B3_OFF: usize = W3_OFF + W3_LEN;

/// Total parameter count: 216 + 8 + 576 + 8 + 72 + 1.
pub const CONV_PARAM_COUNT: usize = B3_OFF + B3_LEN;

/// Parameter-file header: magic, format version, parameter count.
/// Layout (16 bytes, little-endian):
///   bytes 0..4   magic `b"UGCD"`
///   bytes 4..8   version `u32` = 1
///   bytes 8..16  parameter count `u64` = 881
/// followed by `count` IEEE-754 `f64` values, little-endian, in layer order
/// w1, b1, w2, b2, w3, b3 (weights indexed `[out][in][ky][kx]` row-major).
const PARAM_MAGIC: &[u8; 4] = b"UGCD";
const PARAM_VERSION: u32 = 1;

/// Trainable 3-layer convolutional noise predictor.
pub struct ConvDenoiser {
    params: Vec<f64>,
    schedule: NoiseSchedule,
}

/// Cross-correlation with periodic padding:
/// `out[o,y,x] = bias[o] + Σ_{i,dy,dx} wgt[o,i,dy,dx]·inp[i,(y+dy−1)%h,(x+dx−1)%w]`.
fn conv_layer(
    inp: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    wgt: &[f64],
    bias: &[f64],
    cout: usize,
    out: &mut [f64],
) {
    let hw = h * w;
    for o in 0..cout {
        for y in 0..h {
            for x in 0..w {
                let mut acc = bias[o];
                for i in 0..cin {
                    for dy in 0..K {
                        let sy = (y + dy + h - 1) % h;
                        for dx in 0..K {
                            let sx = (x + dx + w - 1) % w;
                            acc += wgt[((o * cin + i) * K + dy) * K + dx] * inp[i * hw + sy * w + sx];
                        }
                    }
                }
                out[o * hw + y * w + x] = acc;
            }
        }
    }
}

/// Accumulates layer gradients given the output gradient `gout`; also
/// accumulates the input gradient when `dinp` is provided.
#[allow(clippy::too_many_arguments)]
fn conv_layer_backward(
    inp: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    wgt: &[f64],
    cout: usize,
    gout: &[f64],
    dwgt: &mut [f64],
    dbias: &mut [f64],
    mut dinp: Option<&mut [f64]>,
) {
    let hw = h * w;
    for o in 0..cout {
        for y in 0..h {
            for x in 0..w {
                let g = gout[o * hw + y * w + x];
                dbias[o] += g;
                for i in 0..cin {
                    for dy in 0..K {
                        let sy = (y + dy + h - 1) % h;
                        for dx in 0..K {
                            let sx = (x + dx + w - 1) % w;
                            let widx = ((o * cin + i) * K + dy) * K + dx;
                            dwgt[widx] += g * inp[i * hw + sy * w + sx];
                            if let Some(di) = dinp.as_deref_mut() {
                                di[i * hw + sy * w + sx] += wgt[widx] * g;
                            }
                        }
                    }
                }
            }
        }
    }
}

struct ForwardCache {
    a0: Vec<f64>, // input with time channels, 3·hw
    a1: Vec<f64>, // tanh activations, 8·hw
    a2: Vec<f64>, // tanh activations, 8·hw
    out: Vec<f64>, // linear head, hw
}

impl ConvDenoiser {
    /// Fresh denoiser with small random weights and zero biases;
    /// deterministic given the stream.
    pub fn new_random(schedule: NoiseSchedule, rng: &mut RngStream) -> ConvDenoiser {
        let mut params = vec![0.0; CONV_PARAM_COUNT];
        let scale1 = 1.0 / ((C_IN * K * K) as f64).sqrt();
        let scale23 = 1.0 / ((C_MID * K * K) as f64).sqrt();
        for i in 0..W1_LEN {
            params[W1_OFF + i] = scale1 * rng.next_normal();
        }
        for i in 0..W2_LEN {
            params[W2_OFF + i] = scale23 * rng.next_normal();
        }
        for i in 0..W3_LEN {
            params[W3_OFF + i] = scale23 * rng.next_normal();
        }
        ConvDenoiser { params, schedule }
    }

    /// Builds from an explicit flat parameter vector.
    pub fn from_params(schedule: NoiseSchedule, params: Vec<f64>) -> Result<ConvDenoiser> {
        if params.len() != CONV_PARAM_COUNT {
            return Err(Error::BadParamFile(format!(
                "expected {CONV_PARAM_COUNT} parameters, got {}",
                params.len()
            )));
        }
        if !params.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("convolutional parameters".into()));
        }
        Ok(ConvDenoiser { params, schedule })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Overwrites one parameter (finite-difference probes in tests).
    pub fn set_param(&mut self, idx: usize, value: f64) {
        self.params[idx] = value;
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    fn check_shape(&self, x: &Field) -> Result<(usize, usize)> {
        if x.channels() != 1 || x.dims().len() != 2 {
            return Err(Error::UnsupportedShape {
                got: x.shape_string(),
                family: self.shape_family(),
            });
        }
        let (h, w) = (x.dims()[0], x.dims()[1]);
        if h < K || w < K {
            return Err(Error::UnsupportedShape {
                got: x.shape_string(),
                family: self.shape_family(),
            });
        }
        Ok((h, w))
    }

    fn forward_cached(&self, data: &[f64], h: usize, w: usize, t: usize) -> Result<ForwardCache> {
        let a = self.schedule.alpha(t)?;
        let hw = h * w;
        let mut a0 = vec![0.0; C_IN * hw];
        a0[..hw].copy_from_slice(data);
        a0[hw..2 * hw].fill(a.sqrt());
        a0[2 * hw..].fill((1.0 - a).sqrt());

        let p = &self.params;
        let mut a1 = vec![0.0; C_MID * hw];
        conv_layer(&a0, C_IN, h, w, &p[W1_OFF..B1_OFF], &p[B1_OFF..W2_OFF], C_MID, &mut a1);
        for v in a1.iter_mut() {
            *v = v.tanh();
        }
        let mut a2 = vec![0.0; C_MID * hw];
        conv_layer(&a1, C_MID, h, w, &p[W2_OFF..B2_OFF], &p[B2_OFF..W3_OFF], C_MID, &mut a2);
        for v in a2.iter_mut() {
            *v = v.tanh();
        }
        let mut out = vec![0.0; hw];
        conv_layer(&a2, C_MID, h, w, &p[W3_OFF..B3_OFF], &p[B3_OFF..], 1, &mut out);
        Ok(ForwardCache { a0, a1, a2, out })
    }

    /// Forward pass as a field operation.
    pub fn forward(&self, x: &Field, t: usize) -> Result<Field> {
        let (h, w) = self.check_shape(x)?;
        let cache = self.forward_cached(x.data(), h, w, t)?;
        Field::from_vec(1, &[h, w], cache.out)
    }

    /// Mean per-entry squared prediction error over corruption triples
    /// `(x₀, t, ε)`, with `x_t = √α·x₀ + √(1−α)·ε` formed internally.
    pub fn loss(&self, batch: &[(Field, usize, Field)]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InvalidDimension("empty training batch".into()));
        }
        let mut total = 0.0;
        for (x0, t, eps) in batch {
            let (h, w) = self.check_shape(x0)?;
            let a = self.schedule.alpha(*t)?;
            let xt: Vec<f64> = x0
                .data()
                .iter()
                .zip(eps.data())
                .map(|(&s, &e)| a.sqrt() * s + (1.0 - a).sqrt() * e)
                .collect();
            let cache = self.forward_cached(&xt, h, w, *t)?;
            let hw = (h * w) as f64;
            total += cache
                .out
                .iter()
                .zip(eps.data())
                .map(|(&o, &e)| (o - e) * (o - e))
                .sum::<f64>()
                / hw;
        }
        let loss = total / batch.len() as f64;
        if !loss.is_finite() {
            return Err(Error::NonFinite("training loss".into()));
        }
        Ok(loss)
    }

    /// Loss and its exact gradient with respect to every parameter.
    pub fn grad(&self, batch: &[(Field, usize, Field)]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::InvalidDimension("empty training batch".into()));
        }
        let p = &self.params;
        let mut grad = vec![0.0; CONV_PARAM_COUNT];
        let mut total = 0.0;
        let bsz = batch.len() as f64;
        for (x0, t, eps) in batch {
            let (h, w) = self.check_shape(x0)?;
            let hw = h * w;
            let a = self.schedule.alpha(*t)?;
            let xt: Vec<f64> = x0
                .data()
                .iter()
                .zip(eps.data())
                .map(|(&s, &e)| a.sqrt() * s + (1.0 - a).sqrt() * e)
                .collect();
            let cache = self.forward_cached(&xt, h, w, *t)?;
            total += cache
                .out
                .iter()
                .zip(eps.data())
                .map(|(&o, &e)| (o - e) * (o - e))
                .sum::<f64>()
                / hw as f64;

            // d loss / d out for this item.
            let g3: Vec<f64> = cache
                .out
                .iter()
                .zip(eps.data())
                .map(|(&o, &e)| 2.0 * (o - e) / (hw as f64 * bsz))
                .collect();

            let (dw3, rest) = grad[W3_OFF..].split_at_mut(W3_LEN);
            let db3 = rest;
            let mut da2 = vec![0.0; C_MID * hw];
            conv_layer_backward(
                &cache.a2,
                C_MID,
                h,
                w,
                &p[W3_OFF..B3_OFF],
                1,
                &g3,
                dw3,
                db3,
                Some(&mut da2),
            );

            // Through tanh: dz = da ⊙ (1 − a²).
            for (g, &act) in da2.iter_mut().zip(&cache.a2) {
                *g *= 1.0 - act * act;
            }
            let (dw2, db2) = {
                let slice = &mut grad[W2_OFF..W3_OFF];
                let (a, b) = slice.split_at_mut(W2_LEN);
                (a, b)
            };
            let mut da1 = vec![0.0; C_MID * hw];
            conv_layer_backward(
                &cache.a1,
                C_MID,
                h,
                w,
                &p[W2_OFF..B2_OFF],
                C_MID,
                &da2,
                dw2,
                db2,
                Some(&mut da1),
            );

            for (g, &act) in da1.iter_mut().zip(&cache.a1) {
                *g *= 1.0 - act * act;
            }
            let (dw1, db1) = {
                let slice = &mut grad[W1_OFF..W2_OFF];
                let (a, b) = slice.split_at_mut(W1_LEN);
                (a, b)
            };
            conv_layer_backward(
                &cache.a0,
                C_IN,
                h,
                w,
                &p[W1_OFF..B1_OFF],
                C_MID,
                &da1,
                dw1,
                db1,
                None,
            );
        }
        let loss = total / bsz;
        if !loss.is_finite() {
            return Err(Error::NonFinite("training loss".into()));
        }
        Ok((loss, grad))
    }

    /// One gradient-descent update. Returns the loss at the incoming
    /// parameters; `learn_rate = 0` reports the loss and changes nothing.
    pub fn train_step(&mut self, batch: &[(Field, usize, Field)], learn_rate: f64) -> Result<f64> {
        let (loss, grad) = self.grad(batch)?;
        for (p, g) in self.params.iter_mut().zip(&grad) {
            *p -= learn_rate * g;
        }
        if !self.params.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("parameters after update".into()));
        }
        Ok(loss)
    }

    /// Writes the documented parameter-file format (16-byte header +
    /// little-endian doubles).
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(PARAM_MAGIC)?;
        f.write_all(&PARAM_VERSION.to_le_bytes())?;
        f.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for v in &self.params {
            f.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a parameter file written by [`ConvDenoiser::save`].
    pub fn load(path: &Path, schedule: NoiseSchedule) -> Result<ConvDenoiser> {
        let mut f = std::fs::File::open(path)?;
        let mut header = [0u8; 16];
        f.read_exact(&mut header)?;
        if &header[0..4] != PARAM_MAGIC {
            return Err(Error::BadParamFile("bad magic".into()));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != PARAM_VERSION {
            return Err(Error::BadParamFile(format!("unsupported version {version}")));
        }
        let count = u64::from_le_bytes(header[8..16].try_into().unwrap()) as usize;
        if count != CONV_PARAM_COUNT {
            return Err(Error::BadParamFile(format!(
                "expected {CONV_PARAM_COUNT} parameters, file declares {count}"
            )));
        }
        let mut bytes = Vec::new();
        f.read_to_end(&mut bytes)?;
        if bytes.len() != count * 8 {
            return Err(Error::BadParamFile(format!(
                "expected {} payload bytes, got {}",
                count * 8,
                bytes.len()
            )));
        }
        let params: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        ConvDenoiser::from_params(schedule, params)
    }
}

impl Predictor for ConvDenoiser {
    fn predict(&self, x: &Field, t: usize, cond: Option<u32>) -> Result<Field> {
        if let Some(label) = cond {
            return Err(Error::UnknownCondition {
                label,
                known: "(none; conv denoiser is unconditional)".into(),
            });
        }
        self.forward(x, t)
    }

    fn shape_family(&self) -> String {
        "single channel, two axes, each length >= 3".into()
    }
}
