//! A two-hidden-layer perceptron noise predictor with hand-written backprop.
//!
//! The network body maps `(x_t, x̂₀, emb(t))` to a raw vector `r`; a fixed
//! preconditioning head turns `r` into both predictions:
//!
//! ```text
//! den = a² + σ²                  (a = α(1−η), b = αη x̂₀)
//! x_θ = a (x_t − b) / den + σ / √den · r
//! ε̂   = σ (x_t − b) / den − a / √den · r
//! ```
//!
//! which is finite at the pivot (`a = 0`) and at `t = 0` (`σ = 0`), and
//! satisfies `x_t = a x_θ + b + σ ε̂` exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Predictor;
use crate::error::{DosError, Result};
use crate::schedule::DoSSchedule;
use crate::state::StateBatch;

/// Number of sinusoidal time frequencies.
pub const TIME_FREQUENCIES: usize = 8;

const MAGIC: &[u8; 8] = b"DOSMLP01";

#[inline]
fn silu(z: f64) -> f64 {
    z / (1.0 + (-z).exp())
}

#[inline]
fn silu_grad(z: f64) -> f64 {
    let s = 1.0 / (1.0 + (-z).exp());
    s * (1.0 + z * (1.0 - s))
}

/// JSON header stored in front of the parameter block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpHeader {
    pub d: usize,
    #[serde(rename = "W")]
    pub width: usize,
    #[serde(rename = "K")]
    pub freqs: usize,
    pub seed: u64,
    pub loss: f64,
    pub n_params: usize,
    pub schedule: DoSSchedule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyMlp {
    d: usize,
    width: usize,
    freqs: usize,
    params: Vec<f64>,
    schedule: DoSSchedule,
    seed: u64,
    loss: f64,
}

struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    end: usize,
}

/// Activations kept for the backward pass of one sample.
struct Tape {
    input: Vec<f64>,
    z1: Vec<f64>,
    a1: Vec<f64>,
    z2: Vec<f64>,
    a2: Vec<f64>,
}

/// Head coefficients at one time.
#[derive(Clone, Copy)]
struct Head {
    shift: f64,
    data_skip: f64,
    data_out: f64,
    noise_skip: f64,
    noise_out: f64,
}

impl Head {
    fn at(s: &DoSSchedule, t: f64) -> Self {
        let p = s.point(t);
        let den = p.scale * p.scale + p.sigma * p.sigma;
        let root = den.sqrt();
        Head {
            shift: p.alpha * p.eta,
            data_skip: p.scale / den,
            data_out: p.sigma / root,
            noise_skip: p.sigma / den,
            noise_out: -p.scale / root,
        }
    }
}

impl TinyMlp {
    pub fn new(
        d: usize,
        width: usize,
        freqs: usize,
        schedule: DoSSchedule,
        seed: u64,
    ) -> Result<Self> {
        if d == 0 || width == 0 {
            return Err(DosError::Argument("mlp needs d >= 1 and width >= 1".into()));
        }
        let mut net = Self {
            d,
            width,
            freqs,
            params: Vec::new(),
            schedule,
            seed,
            loss: f64::NAN,
        };
        let lay = net.layout();
        net.params = vec![0.0; lay.end];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = net.input_dim();
        let mut fill =
            |range: std::ops::Range<usize>, fan_in: usize, gain: f64, params: &mut [f64]| {
                let dist = Normal::new(0.0, gain / (fan_in as f64).sqrt()).unwrap();
                for p in &mut params[range] {
                    *p = dist.sample(&mut rng);
                }
            };
        fill(lay.w1..lay.b1, input, 1.0, &mut net.params);
        fill(lay.w2..lay.b2, width, 1.0, &mut net.params);
        fill(lay.w3..lay.b3, width, 0.1, &mut net.params);
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        2 * self.d + 2 * self.freqs
    }

    fn layout(&self) -> Layout {
        let (i, w, d) = (self.input_dim(), self.width, self.d);
        let w1 = 0;
        let b1 = w1 + w * i;
        let w2 = b1 + w;
        let b2 = w2 + w * w;
        let w3 = b2 + w;
        let b3 = w3 + d * w;
        Layout {
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            end: b3 + d,
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn freqs(&self) -> usize {
        self.freqs
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn recorded_loss(&self) -> f64 {
        self.loss
    }

    pub fn set_recorded_loss(&mut self, loss: f64) {
        self.loss = loss;
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn embed(&self, t: f64, out: &mut Vec<f64>) {
        for k in 0..self.freqs {
            let w = (1u64 << k) as f64 * t;
            out.push(w.sin());
            out.push(w.cos());
        }
    }

    fn body(&self, x: &[f64], xhat: &[f64], t: f64) -> (Vec<f64>, Tape) {
        let lay = self.layout();
        let p = &self.params;
        let mut input = Vec::with_capacity(self.input_dim());
        input.extend_from_slice(x);
        input.extend_from_slice(xhat);
        self.embed(t, &mut input);
        let dense = |w: usize, b: usize, rows: usize, v: &[f64]| -> Vec<f64> {
            let cols = v.len();
            (0..rows)
                .map(|r| {
                    let row = &p[w + r * cols..w + (r + 1) * cols];
                    p[b + r] + row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect()
        };
        let z1 = dense(lay.w1, lay.b1, self.width, &input);
        let a1: Vec<f64> = z1.iter().map(|&z| silu(z)).collect();
        let z2 = dense(lay.w2, lay.b2, self.width, &a1);
        let a2: Vec<f64> = z2.iter().map(|&z| silu(z)).collect();
        let r = dense(lay.w3, lay.b3, self.d, &a2);
        (
            r,
            Tape {
                input,
                z1,
                a1,
                z2,
                a2,
            },
        )
    }

    /// Accumulate ∂L/∂θ given ∂L/∂r for one sample.
    fn backward(&self, tape: &Tape, d_r: &[f64], grad: &mut [f64]) {
        let lay = self.layout();
        let p = &self.params;
        let (w, d) = (self.width, self.d);
        let mut d_a2 = vec![0.0; w];
        for o in 0..d {
            grad[lay.b3 + o] += d_r[o];
            for k in 0..w {
                grad[lay.w3 + o * w + k] += d_r[o] * tape.a2[k];
                d_a2[k] += p[lay.w3 + o * w + k] * d_r[o];
            }
        }
        let d_z2: Vec<f64> = d_a2
            .iter()
            .zip(&tape.z2)
            .map(|(g, &z)| g * silu_grad(z))
            .collect();
        let mut d_a1 = vec![0.0; w];
        for o in 0..w {
            grad[lay.b2 + o] += d_z2[o];
            let row = lay.w2 + o * w;
            for k in 0..w {
                grad[row + k] += d_z2[o] * tape.a1[k];
                d_a1[k] += p[row + k] * d_z2[o];
            }
        }
        let d_z1: Vec<f64> = d_a1
            .iter()
            .zip(&tape.z1)
            .map(|(g, &z)| g * silu_grad(z))
            .collect();
        let cols = tape.input.len();
        for o in 0..w {
            grad[lay.b1 + o] += d_z1[o];
            let row = lay.w1 + o * cols;
            for k in 0..cols {
                grad[row + k] += d_z1[o] * tape.input[k];
            }
        }
    }

    fn check(&self, x_t: &StateBatch, xhat0: &StateBatch) -> Result<()> {
        x_t.check_shape(xhat0, "mlp")?;
        if x_t.dim() != self.d {
            return Err(DosError::Argument(format!(
                "mlp expects dimension {}, got {}",
                self.d,
                x_t.dim()
            )));
        }
        Ok(())
    }

    fn predict_with(
        &self,
        x_t: &StateBatch,
        xhat0: &StateBatch,
        t: f64,
        pick: impl Fn(&Head) -> (f64, f64),
    ) -> Result<StateBatch> {
        self.check(x_t, xhat0)?;
        self.schedule.at(t)?;
        let head = Head::at(&self.schedule, t);
        let (skip, out) = pick(&head);
        let mut res = x_t.clone();
        for i in 0..x_t.len() {
            let (r, _) = self.body(x_t.row(i), xhat0.row(i), t);
            let xh = xhat0.row(i);
            for (j, v) in res.row_mut(i).iter_mut().enumerate() {
                *v = skip * (*v - head.shift * xh[j]) + out * r[j];
            }
        }
        Ok(res)
    }

    /// Mean squared noise-prediction error and its gradient, with a separate
    /// time per row.
    pub fn loss_and_grad(
        &self,
        x_t: &StateBatch,
        xhat0: &StateBatch,
        times: &[f64],
        eps: &StateBatch,
    ) -> Result<(f64, Vec<f64>)> {
        self.check(x_t, xhat0)?;
        x_t.check_shape(eps, "mlp loss")?;
        if times.len() != x_t.len() {
            return Err(DosError::Argument("one time per row required".into()));
        }
        let n = x_t.len() as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let mut d_r = vec![0.0; self.d];
        for i in 0..x_t.len() {
            let head = Head::at(&self.schedule, times[i]);
            let (r, tape) = self.body(x_t.row(i), xhat0.row(i), times[i]);
            for j in 0..self.d {
                let pred = head.noise_skip * (x_t.row(i)[j] - head.shift * xhat0.row(i)[j])
                    + head.noise_out * r[j];
                let err = pred - eps.row(i)[j];
                loss += err * err;
                d_r[j] = 2.0 * err * head.noise_out / n;
            }
            self.backward(&tape, &d_r, &mut grad);
        }
        Ok((loss / n, grad))
    }

    /// Loss only, for finite-difference checks and evaluation.
    pub fn loss(
        &self,
        x_t: &StateBatch,
        xhat0: &StateBatch,
        times: &[f64],
        eps: &StateBatch,
    ) -> Result<f64> {
        self.check(x_t, xhat0)?;
        let mut loss = 0.0;
        for i in 0..x_t.len() {
            let head = Head::at(&self.schedule, times[i]);
            let (r, _) = self.body(x_t.row(i), xhat0.row(i), times[i]);
            for j in 0..self.d {
                let pred = head.noise_skip * (x_t.row(i)[j] - head.shift * xhat0.row(i)[j])
                    + head.noise_out * r[j];
                let err = pred - eps.row(i)[j];
                loss += err * err;
            }
        }
        Ok(loss / x_t.len() as f64)
    }

    pub fn header(&self) -> MlpHeader {
        MlpHeader {
            d: self.d,
            width: self.width,
            freqs: self.freqs,
            seed: self.seed,
            loss: self.loss,
            n_params: self.params.len(),
            schedule: self.schedule,
        }
    }

    /// `MAGIC | u64 header length | JSON header | f64 LE parameters`.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header())?;
        let mut out = Vec::with_capacity(16 + header.len() + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| DosError::Config(format!("predictor file: {m}"));
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic"));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes
            .get(16..16 + len)
            .ok_or_else(|| bad("truncated header"))?;
        let header: MlpHeader = serde_json::from_slice(body)?;
        let mut net = TinyMlp {
            d: header.d,
            width: header.width,
            freqs: header.freqs,
            params: Vec::new(),
            schedule: header.schedule,
            seed: header.seed,
            loss: header.loss,
        };
        let expect = net.layout().end;
        if expect != header.n_params {
            return Err(bad("parameter count does not match architecture"));
        }
        let raw = &bytes[16 + len..];
        if raw.len() != 8 * expect {
            return Err(bad("parameter block has wrong length"));
        }
        net.params = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if net.params.iter().any(|p| !p.is_finite()) {
            return Err(bad("non-finite parameter"));
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

impl Predictor for TinyMlp {
    fn schedule(&self) -> &DoSSchedule {
        &self.schedule
    }

    fn predict_noise(&self, x_t: &StateBatch, xhat0: &StateBatch, t: f64) -> Result<StateBatch> {
        self.predict_with(x_t, xhat0, t, |h| (h.noise_skip, h.noise_out))
    }

    fn predict_data(&self, x_t: &StateBatch, xhat0: &StateBatch, t: f64) -> Result<StateBatch> {
        self.predict_with(x_t, xhat0, t, |h| (h.data_skip, h.data_out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::NoiseStreams;
    use crate::prediction::{data_to_noise, noise_to_data};

    fn net() -> TinyMlp {
        TinyMlp::new(
            2,
            16,
            TIME_FREQUENCIES,
            DoSSchedule::with_t1(0.5).unwrap(),
            3,
        )
        .unwrap()
    }

    #[test]
    fn heads_are_consistent_and_finite_at_pivot() {
        let net = net();
        let s = net.schedule;
        let mut ns = NoiseStreams::new(1, 5);
        let (x, xh) = (ns.standard_normal(2), ns.standard_normal(2));
        for t in [0.05, 0.3, 0.49] {
            let e = net.predict_noise(&x, &xh, t).unwrap();
            let d = net.predict_data(&x, &xh, t).unwrap();
            assert!(noise_to_data(&e, &x, &xh, t, &s).unwrap().max_abs_diff(&d) < 1e-9);
            assert!(data_to_noise(&d, &x, &xh, t, &s).unwrap().max_abs_diff(&e) < 1e-9);
        }
        assert!(net.predict_data(&x, &xh, 0.5).unwrap().is_finite());
        assert!(net.predict_noise(&x, &xh, 0.0).unwrap().is_finite());
    }

    #[test]
    fn serialization_is_bit_exact() {
        let mut net = net();
        net.set_recorded_loss(0.125);
        let back = TinyMlp::from_bytes(&net.to_bytes().unwrap()).unwrap();
        assert_eq!(back, net);
        let x = StateBatch::from_rows(&[vec![0.1, -0.7]]).unwrap();
        let a = net.predict_noise(&x, &x, 0.2).unwrap();
        let b = back.predict_noise(&x, &x, 0.2).unwrap();
        assert_eq!(a.as_slice()[0].to_bits(), b.as_slice()[0].to_bits());
        let mut bytes = net.to_bytes().unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(TinyMlp::from_bytes(&bytes).is_err());
        assert!(TinyMlp::from_bytes(b"nonsense").is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut net = net();
        let mut ns = NoiseStreams::new(9, 6);
        let (x, xh, e) = (
            ns.standard_normal(2),
            ns.standard_normal(2),
            ns.standard_normal(2),
        );
        let times = [0.01, 0.1, 0.2, 0.3, 0.4, 0.49];
        let (_, grad) = net.loss_and_grad(&x, &xh, &times, &e).unwrap();
        let n = net.params().len();
        for k in (0..n).step_by(n / 40) {
            let h = 1e-6;
            let orig = net.params()[k];
            net.params_mut()[k] = orig + h;
            let up = net.loss(&x, &xh, &times, &e).unwrap();
            net.params_mut()[k] = orig - h;
            let down = net.loss(&x, &xh, &times, &e).unwrap();
            net.params_mut()[k] = orig;
            let fd = (up - down) / (2.0 * h);
            let scale = fd.abs().max(grad[k].abs()).max(1e-8);
            assert!(
                (fd - grad[k]).abs() / scale < 1e-4,
                "param {k}: {fd} vs {}",
                grad[k]
            );
        }
    }
}
