use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, Array3, ArrayView2, ArrayView3, Axis};
use rand::{Rng, RngCore};

use super::params::REGULARIZED;
use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Activations kept from a training-mode forward pass. Row blocks are time-major:
/// row `t * batch + b` holds step `t` of sample `b`.
#[derive(Clone, Debug)]
pub struct ForwardCache<F> {
    batch: usize,
    steps: usize,
    patches: Array2<F>,
    conv_pre: Array2<F>,
    conv_mask: Option<Array2<F>>,
    lstm_in: Array2<F>,
    gates: Array2<F>,
    cells: Array2<F>,
    cell_tanh: Array2<F>,
    hidden: Array2<F>,
    head_mask: Option<Array2<F>>,
    head_in: Array2<F>,
    /// Softmax output, `batch x classes`.
    pub probs: Array2<F>,
}

fn sigmoid<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

fn check_input<F>(cfg: &ModelConfig, x: &ArrayView3<F>) -> Result<()> {
    let (_, t, f) = x.dim();
    if t != cfg.input_steps || f != cfg.input_features {
        return Err(Error::ShapeMismatch {
            expected: format!("B x {} x {}", cfg.input_steps, cfg.input_features),
            actual: format!("{:?}", x.dim()),
        });
    }
    Ok(())
}

/// Inverted dropout mask: 0 with probability `p`, else `1 / (1 - p)`.
fn dropout_mask<F: Scalar>(shape: (usize, usize), p: f64, rng: &mut dyn RngCore) -> Array2<F> {
    let keep = F::of(1.0 / (1.0 - p));
    Array2::from_shape_simple_fn(shape, || {
        if rng.random::<f64>() < p {
            F::zero()
        } else {
            keep
        }
    })
}

fn run<F: Scalar>(
    params: &ModelParams<F>,
    cfg: &ModelConfig,
    x: ArrayView3<F>,
    mut rng: Option<&mut dyn RngCore>,
) -> Result<ForwardCache<F>> {
    check_input(cfg, &x)?;
    let b = x.dim().0;
    let k = cfg.conv_kernel;
    let nf = cfg.input_features;
    let steps = cfg.conv_steps();
    let h = cfg.lstm_units;
    let g4 = 4 * h;

    // im2col, time-major
    let mut patches = Array2::<F>::zeros((steps * b, k * nf));
    for t in 0..steps {
        for bi in 0..b {
            let mut row = patches.row_mut(t * b + bi);
            let src = x.slice(s![bi, t..t + k, ..]);
            for (dst, &v) in row.iter_mut().zip(src.iter()) {
                *dst = v;
            }
        }
    }
    let mut conv_pre = patches.dot(&params.conv_kernel);
    conv_pre += &params.conv_bias;
    let mut lstm_in = conv_pre.mapv(|v| v.max(F::zero()));
    let conv_mask = match rng.as_deref_mut() {
        Some(r) if cfg.dropout_post_cnn > 0.0 => {
            let m = dropout_mask(lstm_in.dim(), cfg.dropout_post_cnn, r);
            lstm_in *= &m;
            Some(m)
        }
        _ => None,
    };

    // gate pre-activations from the inputs for every step at once
    let mut gates = lstm_in.dot(&params.lstm_input);
    gates += &params.lstm_bias;
    let mut cells = Array2::<F>::zeros((steps * b, h));
    let mut cell_tanh = Array2::<F>::zeros((steps * b, h));
    let mut hidden = Array2::<F>::zeros((steps * b, h));

    for t in 0..steps {
        let rows = t * b..(t + 1) * b;
        if t > 0 {
            let (prev, mut cur) = (
                hidden.slice(s![(t - 1) * b..t * b, ..]),
                gates.slice_mut(s![rows.clone(), ..]),
            );
            general_mat_mul(F::one(), &prev, &params.lstm_recurrent, F::one(), &mut cur);
        }
        let gs = &mut gates.as_slice_mut().expect("standard layout")[t * b * g4..(t + 1) * b * g4];
        let cs_all = cells.as_slice_mut().expect("standard layout");
        let (cs_prev, cs_cur) = cs_all.split_at_mut(t * b * h);
        let cs_prev = if t > 0 { Some(&cs_prev[(t - 1) * b * h..]) } else { None };
        let cs_cur = &mut cs_cur[..b * h];
        let tc = &mut cell_tanh.as_slice_mut().expect("standard layout")[t * b * h..(t + 1) * b * h];
        let hs = &mut hidden.as_slice_mut().expect("standard layout")[t * b * h..(t + 1) * b * h];
        for bi in 0..b {
            let z = &mut gs[bi * g4..(bi + 1) * g4];
            for j in 0..h {
                let i_g = sigmoid(z[j]);
                let f_g = sigmoid(z[h + j]);
                let c_g = z[2 * h + j].tanh();
                let o_g = sigmoid(z[3 * h + j]);
                z[j] = i_g;
                z[h + j] = f_g;
                z[2 * h + j] = c_g;
                z[3 * h + j] = o_g;
                let c_prev = cs_prev.map_or(F::zero(), |p| p[bi * h + j]);
                let c = f_g * c_prev + i_g * c_g;
                let th = c.tanh();
                cs_cur[bi * h + j] = c;
                tc[bi * h + j] = th;
                hs[bi * h + j] = o_g * th;
            }
        }
    }

    let mut head_in = hidden.slice(s![(steps - 1) * b.., ..]).to_owned();
    let head_mask = match rng {
        Some(r) if cfg.dropout_post_lstm > 0.0 => {
            let m = dropout_mask(head_in.dim(), cfg.dropout_post_lstm, r);
            head_in *= &m;
            Some(m)
        }
        _ => None,
    };
    let mut probs = head_in.dot(&params.dense_kernel);
    probs += &params.dense_bias;
    for mut row in probs.rows_mut() {
        let max = row.fold(F::neg_infinity(), |a, &v| a.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }

    Ok(ForwardCache {
        batch: b,
        steps,
        patches,
        conv_pre,
        conv_mask,
        lstm_in,
        gates,
        cells,
        cell_tanh,
        hidden,
        head_mask,
        head_in,
        probs,
    })
}

/// Training-mode forward pass: dropout masks are drawn from `rng` and everything the
/// backward pass needs is cached.
pub fn forward_train<F: Scalar>(
    params: &ModelParams<F>,
    cfg: &ModelConfig,
    x: ArrayView3<F>,
    rng: &mut dyn RngCore,
) -> Result<ForwardCache<F>> {
    run(params, cfg, x, Some(rng))
}

/// Inference-mode forward pass (no dropout). Returns `batch x classes` probabilities.
pub fn forward_infer<F: Scalar>(
    params: &ModelParams<F>,
    cfg: &ModelConfig,
    x: ArrayView3<F>,
) -> Result<Array2<F>> {
    Ok(run(params, cfg, x, None)?.probs)
}

const LOG_FLOOR: f64 = 1e-12;

/// Mean (optionally class-weighted) cross-entropy plus `l2_lambda` times the sum of
/// squared kernel weights. Biases are not penalized.
pub fn loss<F: Scalar>(
    probs: ArrayView2<F>,
    labels: &[usize],
    params: &ModelParams<F>,
    l2_lambda: f64,
    class_weights: Option<&[F]>,
) -> Result<F> {
    if probs.nrows() != labels.len() {
        return Err(Error::LengthMismatch {
            left: probs.nrows(),
            right: labels.len(),
        });
    }
    let floor = F::of(LOG_FLOOR);
    let mut ce = F::zero();
    for (row, &y) in probs.rows().into_iter().zip(labels) {
        let w = class_weights.map_or(F::one(), |cw| cw[y]);
        ce -= w * row[y].max(floor).ln();
    }
    let n = F::of(labels.len().max(1) as f64);
    Ok(ce / n + F::of(l2_lambda) * params.l2_sum())
}

/// Analytic gradient of [`loss`] with respect to every parameter, replaying the
/// dropout masks stored in `cache`.
pub fn backward<F: Scalar>(
    params: &ModelParams<F>,
    cfg: &ModelConfig,
    cache: &ForwardCache<F>,
    labels: &[usize],
    class_weights: Option<&[F]>,
) -> Result<ModelParams<F>> {
    let b = cache.batch;
    if labels.len() != b {
        return Err(Error::LengthMismatch {
            left: b,
            right: labels.len(),
        });
    }
    let h = cfg.lstm_units;
    let g4 = 4 * h;
    let steps = cache.steps;
    let n = F::of(b as f64);
    let two_lambda = F::of(2.0 * cfg.l2_lambda);

    let mut dlogits = cache.probs.clone();
    for (mut row, &y) in dlogits.rows_mut().into_iter().zip(labels) {
        row[y] -= F::one();
        let w = class_weights.map_or(F::one(), |cw| cw[y]);
        row.mapv_inplace(|v| v * w / n);
    }

    let mut grads = ModelParams::zeros(cfg);
    grads.dense_kernel = cache.head_in.t().dot(&dlogits);
    grads.dense_bias = dlogits.sum_axis(Axis(0));

    let mut dh = dlogits.dot(&params.dense_kernel.t());
    if let Some(m) = &cache.head_mask {
        dh *= m;
    }

    let mut dz = Array2::<F>::zeros((steps * b, g4));
    let mut dc = vec![F::zero(); b * h];
    let one = F::one();
    for t in (0..steps).rev() {
        let gs = &cache.gates.as_slice().expect("standard layout")[t * b * g4..(t + 1) * b * g4];
        let cs = cache.cells.as_slice().expect("standard layout");
        let tc = &cache.cell_tanh.as_slice().expect("standard layout")[t * b * h..(t + 1) * b * h];
        let dzs = &mut dz.as_slice_mut().expect("standard layout")[t * b * g4..(t + 1) * b * g4];
        let dhs = dh.as_slice().expect("standard layout");
        for bi in 0..b {
            let z = &gs[bi * g4..(bi + 1) * g4];
            let d = &mut dzs[bi * g4..(bi + 1) * g4];
            for j in 0..h {
                let (i_g, f_g, c_g, o_g) = (z[j], z[h + j], z[2 * h + j], z[3 * h + j]);
                let th = tc[bi * h + j];
                let c_prev = if t > 0 {
                    cs[((t - 1) * b + bi) * h + j]
                } else {
                    F::zero()
                };
                let dht = dhs[bi * h + j];
                let d_o = dht * th;
                let dct = dc[bi * h + j] + dht * o_g * (one - th * th);
                dc[bi * h + j] = dct * f_g;
                d[j] = dct * c_g * i_g * (one - i_g);
                d[h + j] = dct * c_prev * f_g * (one - f_g);
                d[2 * h + j] = dct * i_g * (one - c_g * c_g);
                d[3 * h + j] = d_o * o_g * (one - o_g);
            }
        }
        if t > 0 {
            dh = dz
                .slice(s![t * b..(t + 1) * b, ..])
                .dot(&params.lstm_recurrent.t());
        }
    }

    if steps > 1 {
        grads.lstm_recurrent = cache
            .hidden
            .slice(s![..(steps - 1) * b, ..])
            .t()
            .dot(&dz.slice(s![b.., ..]));
    }
    grads.lstm_input = cache.lstm_in.t().dot(&dz);
    grads.lstm_bias = dz.sum_axis(Axis(0));

    let mut dconv = dz.dot(&params.lstm_input.t());
    if let Some(m) = &cache.conv_mask {
        dconv *= m;
    }
    ndarray::Zip::from(&mut dconv)
        .and(&cache.conv_pre)
        .for_each(|d, &pre| {
            if pre <= F::zero() {
                *d = F::zero();
            }
        });
    grads.conv_kernel = cache.patches.t().dot(&dconv);
    grads.conv_bias = dconv.sum_axis(Axis(0));

    if cfg.l2_lambda > 0.0 {
        let ps = params.slices();
        for ((g, p), reg) in grads.slices_mut().into_iter().zip(ps).zip(REGULARIZED) {
            if reg {
                for (gv, &pv) in g.iter_mut().zip(p) {
                    *gv += two_lambda * pv;
                }
            }
        }
    }
    Ok(grads)
}

/// Copies standardized windows into a `batch x steps x features` tensor.
pub fn batch_from_windows<'a, F: Scalar>(
    windows: impl ExactSizeIterator<Item = ArrayView2<'a, f64>>,
    steps: usize,
    features: usize,
) -> Result<Array3<F>> {
    let mut out = Array3::<F>::zeros((windows.len(), steps, features));
    for (mut dst, w) in out.outer_iter_mut().zip(windows) {
        if w.dim() != (steps, features) {
            return Err(Error::ShapeMismatch {
                expected: format!("{steps}x{features}"),
                actual: format!("{:?}", w.dim()),
            });
        }
        ndarray::Zip::from(&mut dst)
            .and(&w)
            .for_each(|d, &v| *d = F::of(v));
    }
    Ok(out)
}

/// One classified window.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub confidence: f64,
    pub probabilities: Vec<f64>,
}

impl Prediction {
    /// Argmax with ties resolved toward the higher class index (higher risk).
    pub fn from_probs(probs: &[f64]) -> Prediction {
        let mut class = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p >= probs[class] {
                class = i;
            }
        }
        Prediction {
            class,
            confidence: probs[class],
            probabilities: probs.to_vec(),
        }
    }
}

/// Inference on an already assembled batch.
pub fn predict_batch<F: Scalar>(
    params: &ModelParams<F>,
    cfg: &ModelConfig,
    x: ArrayView3<F>,
) -> Result<Vec<Prediction>> {
    let probs = forward_infer(params, cfg, x)?;
    Ok(probs
        .rows()
        .into_iter()
        .map(|r| Prediction::from_probs(&r.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>()))
        .collect())
}

const PREDICT_CHUNK: usize = 256;

/// Classifies standardized windows in fixed-size chunks.
pub fn predict<'a, F: Scalar>(
    params: &ModelParams<F>,
    cfg: &ModelConfig,
    windows: &[ArrayView2<'a, f64>],
) -> Result<Vec<Prediction>> {
    let mut out = Vec::with_capacity(windows.len());
    for chunk in windows.chunks(PREDICT_CHUNK) {
        let x: Array3<F> = batch_from_windows(
            chunk.iter().cloned(),
            cfg.input_steps,
            cfg.input_features,
        )?;
        out.extend(predict_batch(params, cfg, x.view())?);
    }
    Ok(out)
}
