//! The four architecture variants, their parameters and forward graphs.
//!
//! Frames are rows throughout: a spectrogram enters as `[T, F]`, the BLSTM
//! produces `[T, 2H]` (forward and backward states concatenated), the
//! convolution `[T, N]`, attention keeps its input width, and the head maps
//! each frame to one score.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, SCORING_SCALE};

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::Spectrogram;
use crate::tensor::{Tape, Tensor, Var};

pub use crate::tensor::mean_of;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// BLSTM -> Dense -> frame score
    #[serde(rename = "Baseline1")]
    Baseline1,
    /// BLSTM -> 1DCNN -> Dense -> frame score
    #[serde(rename = "L_1DCNN")]
    L1dcnn,
    /// BLSTM -> attention -> Dense -> frame score
    #[serde(rename = "L_ATT")]
    LAtt,
    /// BLSTM -> 1DCNN -> attention -> Dense -> frame score
    #[serde(rename = "LC_ATT")]
    LcAtt,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Baseline1, Variant::L1dcnn, Variant::LAtt, Variant::LcAtt];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::Baseline1 => "Baseline1",
            Variant::L1dcnn => "L_1DCNN",
            Variant::LAtt => "L_ATT",
            Variant::LcAtt => "LC_ATT",
        }
    }

    pub fn has_conv(self) -> bool {
        matches!(self, Variant::L1dcnn | Variant::LcAtt)
    }

    pub fn has_attention(self) -> bool {
        matches!(self, Variant::LAtt | Variant::LcAtt)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_uppercase().replace('-', "_");
        match norm.as_str() {
            "BASELINE1" | "BASELINE" => Ok(Variant::Baseline1),
            "L_1DCNN" => Ok(Variant::L1dcnn),
            "L_ATT" => Ok(Variant::LAtt),
            "LC_ATT" => Ok(Variant::LcAtt),
            _ => Err(Error::Config(format!(
                "unknown variant {s:?} (expected Baseline1, L_1DCNN, L_ATT or LC_ATT)"
            ))),
        }
    }
}

/// Layer widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    /// Spectrogram bins per frame.
    pub input: usize,
    /// Hidden units per LSTM direction; the BLSTM output is twice this.
    pub lstm_hidden: usize,
    pub conv_kernels: usize,
    pub attention_width: usize,
    pub dense: usize,
}

impl Dims {
    /// 257 bins, 2 x 100 BLSTM, 250 kernels, attention width 32, dense 50.
    pub const FULL: Dims = Dims {
        input: 257,
        lstm_hidden: 100,
        conv_kernels: 250,
        attention_width: 32,
        dense: 50,
    };

    /// Desk-scale widths used for the synthetic experiments.
    pub const REDUCED: Dims = Dims {
        input: 257,
        lstm_hidden: 16,
        conv_kernels: 32,
        attention_width: 8,
        dense: 50,
    };

    pub fn blstm_out(&self) -> usize {
        2 * self.lstm_hidden
    }

    /// Width of the sequence entering the dense head.
    pub fn head_in(&self, variant: Variant) -> usize {
        if variant.has_conv() {
            self.conv_kernels
        } else {
            self.blstm_out()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Layer {
    Blstm,
    Conv,
    Attention,
    Dense,
    FrameScore,
}

impl Layer {
    pub fn label(self) -> &'static str {
        match self {
            Layer::Blstm => "BLSTM",
            Layer::Conv => "1DCNN",
            Layer::Attention => "ATT",
            Layer::Dense => "Dense",
            Layer::FrameScore => "Frame_score",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    Glorot { fan_in: usize, fan_out: usize },
    Zeros,
    /// LSTM bias: zero except the forget-gate block.
    LstmBias { hidden: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub layer: Layer,
    init: Init,
}

/// Ordered parameter layout of a variant.
pub fn param_specs(variant: Variant, dims: &Dims) -> Vec<ParamSpec> {
    let h = dims.lstm_hidden;
    let d = dims.input;
    let spec = |name, shape: Vec<usize>, layer, init| ParamSpec {
        name,
        shape,
        layer,
        init,
    };
    let mut out = Vec::new();
    for (w_ih, w_hh, b) in [
        ("blstm.fwd.w_ih", "blstm.fwd.w_hh", "blstm.fwd.bias"),
        ("blstm.bwd.w_ih", "blstm.bwd.w_hh", "blstm.bwd.bias"),
    ] {
        out.push(spec(w_ih, vec![4 * h, d], Layer::Blstm, Init::Glorot { fan_in: d, fan_out: 4 * h }));
        out.push(spec(w_hh, vec![4 * h, h], Layer::Blstm, Init::Glorot { fan_in: h, fan_out: 4 * h }));
        out.push(spec(b, vec![4 * h], Layer::Blstm, Init::LstmBias { hidden: h }));
    }
    let mut width = dims.blstm_out();
    if variant.has_conv() {
        let n = dims.conv_kernels;
        out.push(spec(
            "conv.kernel",
            vec![n, width, 3],
            Layer::Conv,
            Init::Glorot {
                fan_in: width * 3,
                fan_out: n * 3,
            },
        ));
        out.push(spec("conv.bias", vec![n], Layer::Conv, Init::Zeros));
        width = n;
    }
    if variant.has_attention() {
        let a = dims.attention_width;
        let g = Init::Glorot {
            fan_in: width,
            fan_out: a,
        };
        out.push(spec("att.w_frame", vec![width, a], Layer::Attention, g));
        out.push(spec("att.w_context", vec![width, a], Layer::Attention, g));
        out.push(spec("att.bias", vec![a], Layer::Attention, Init::Zeros));
        out.push(spec(
            "att.w_score",
            vec![1, a],
            Layer::Attention,
            Init::Glorot { fan_in: a, fan_out: 1 },
        ));
        out.push(spec("att.bias_score", vec![1], Layer::Attention, Init::Zeros));
    }
    out.push(spec(
        "dense.weight",
        vec![width, dims.dense],
        Layer::Dense,
        Init::Glorot {
            fan_in: width,
            fan_out: dims.dense,
        },
    ));
    out.push(spec("dense.bias", vec![dims.dense], Layer::Dense, Init::Zeros));
    out.push(spec(
        "frame_score.weight",
        vec![dims.dense, 1],
        Layer::FrameScore,
        Init::Glorot {
            fan_in: dims.dense,
            fan_out: 1,
        },
    ));
    out.push(spec("frame_score.bias", vec![1], Layer::FrameScore, Init::Zeros));
    out
}

/// Closed-form parameter counts.
pub mod counts {
    /// Both directions, one bias vector per gate block.
    pub fn blstm(input: usize, hidden: usize) -> usize {
        2 * 4 * (input * hidden + hidden * hidden + hidden)
    }

    pub fn conv(in_channels: usize, kernels: usize, width: usize) -> usize {
        kernels * (in_channels * width + 1)
    }

    pub fn attention(channels: usize, width: usize) -> usize {
        2 * channels * width + width + width + 1
    }

    pub fn dense(inputs: usize, outputs: usize) -> usize {
        inputs * outputs + outputs
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParamCounts {
    pub per_layer: Vec<(Layer, usize)>,
    pub total: usize,
}

impl ParamCounts {
    pub fn layer(&self, layer: Layer) -> Option<usize> {
        self.per_layer.iter().find(|(l, _)| *l == layer).map(|(_, n)| *n)
    }
}

/// All learnable tensors of one variant, in [`param_specs`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    variant: Variant,
    dims: Dims,
    specs: Vec<ParamSpec>,
    tensors: Vec<Tensor>,
}

/// Weights of one LSTM direction. Gate blocks are stacked in the order
/// input, forget, cell, output along the first axis.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCellParams {
    /// `[4H, D]`
    pub w_ih: Tensor,
    /// `[4H, H]`
    pub w_hh: Tensor,
    /// `[4H]`
    pub bias: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// `[C, A]`, applied to the frame being re-weighted.
    pub w_frame: Tensor,
    /// `[C, A]`, applied to each context frame.
    pub w_context: Tensor,
    /// `[A]`
    pub bias: Tensor,
    /// `[1, A]`
    pub w_score: Tensor,
    /// `[1]`
    pub bias_score: Tensor,
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases, LSTM forget-gate bias 1.
    ///
    /// Values are drawn in single precision so checkpoints store them exactly.
    pub fn init(variant: Variant, dims: Dims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let specs = param_specs(variant, &dims);
        let tensors = specs
            .iter()
            .map(|s| {
                let n: usize = s.shape.iter().product();
                let data = match s.init {
                    Init::Glorot { fan_in, fan_out } => {
                        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
                        (0..n).map(|_| rng.gen_range(-limit..limit) as f64).collect()
                    }
                    Init::Zeros => vec![0.0; n],
                    Init::LstmBias { hidden } => {
                        let mut b = vec![0.0; n];
                        b[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
                        b
                    }
                };
                Tensor::new(s.shape.clone(), data).expect("spec shape")
            })
            .collect();
        Self {
            variant,
            dims,
            specs,
            tensors,
        }
    }

    /// Assembles parameters from tensors listed in [`param_specs`] order.
    pub fn from_tensors(variant: Variant, dims: Dims, tensors: Vec<Tensor>) -> Result<Self> {
        let specs = param_specs(variant, &dims);
        if specs.len() != tensors.len() {
            return Err(Error::Shape {
                op: "model params",
                detail: format!("{} tensors for {} parameters", tensors.len(), specs.len()),
            });
        }
        for (s, t) in specs.iter().zip(&tensors) {
            if s.shape != t.shape() {
                return Err(Error::Shape {
                    op: "model params",
                    detail: format!("{} has shape {:?}, expected {:?}", s.name, t.shape(), s.shape),
                });
            }
        }
        Ok(Self {
            variant,
            dims,
            specs,
            tensors,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn dims(&self) -> &Dims {
        &self.dims
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.specs
            .iter()
            .position(|s| s.name == name)
            .map(|i| &self.tensors[i])
    }

    fn cloned(&self, name: &str) -> Tensor {
        self.get(name).cloned().expect("parameter present for this variant")
    }

    pub fn lstm(&self, backward: bool) -> LstmCellParams {
        let dir = if backward { "bwd" } else { "fwd" };
        LstmCellParams {
            w_ih: self.cloned(&format!("blstm.{dir}.w_ih")),
            w_hh: self.cloned(&format!("blstm.{dir}.w_hh")),
            bias: self.cloned(&format!("blstm.{dir}.bias")),
        }
    }

    pub fn attention(&self) -> Option<AttentionParams> {
        self.variant.has_attention().then(|| AttentionParams {
            w_frame: self.cloned("att.w_frame"),
            w_context: self.cloned("att.w_context"),
            bias: self.cloned("att.bias"),
            w_score: self.cloned("att.w_score"),
            bias_score: self.cloned("att.bias_score"),
        })
    }

    pub fn count(&self) -> ParamCounts {
        let mut per_layer: Vec<(Layer, usize)> = Vec::new();
        for (s, t) in self.specs.iter().zip(&self.tensors) {
            match per_layer.last_mut() {
                Some((l, n)) if *l == s.layer => *n += t.len(),
                _ => per_layer.push((s.layer, t.len())),
            }
        }
        let total = per_layer.iter().map(|(_, n)| n).sum();
        ParamCounts { per_layer, total }
    }

    /// Rounds every value to the nearest single-precision number.
    pub fn round_to_f32(&mut self) {
        for t in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
    }

    /// Records every tensor as a tape leaf, in spec order.
    pub fn bind(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.leaf(t.clone())).collect()
    }
}

/// Pure count over a parameter set.
pub fn count_params(params: &ModelParams) -> ParamCounts {
    params.count()
}

/// Per-frame scores and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreOutput {
    pub frame_scores: Vec<f64>,
    pub utterance_score: f64,
}

impl ScoreOutput {
    pub fn from_frames(frame_scores: Vec<f64>) -> Self {
        let utterance_score = mean_of(&frame_scores);
        Self {
            frame_scores,
            utterance_score,
        }
    }
}

/// Graph nodes produced by [`build_graph`].
#[derive(Debug, Clone, Copy)]
pub struct GraphOutput {
    /// `[T, 1]`
    pub frame_scores: Var,
    /// Scalar mean of `frame_scores`.
    pub utterance_score: Var,
    /// `[T, T]` attention weights, for variants with attention.
    pub attention: Option<Var>,
}

/// One LSTM direction over `x: [T, D]`; returns the hidden state of every
/// frame in time order.
pub fn lstm_graph(
    tape: &mut Tape,
    x: Var,
    w_ih: Var,
    w_hh: Var,
    bias: Var,
    reverse: bool,
) -> Result<Vec<Var>> {
    let steps = tape.value(x).rows();
    let h = tape.value(w_hh).cols();
    let projected = tape.matmul_t(x, w_ih)?;
    let projected = tape.add(projected, bias)?;
    let mut outputs: Vec<Option<Var>> = vec![None; steps];
    let mut state: Option<(Var, Var)> = None;
    let order: Box<dyn Iterator<Item = usize>> = if reverse {
        Box::new((0..steps).rev())
    } else {
        Box::new(0..steps)
    };
    for t in order {
        let mut gates = tape.slice_rows(projected, t, 1)?;
        if let Some((h_prev, _)) = state {
            let rec = tape.matmul_t(h_prev, w_hh)?;
            gates = tape.add(gates, rec)?;
        }
        let i = tape.slice_cols(gates, 0, h)?;
        let i = tape.sigmoid(i)?;
        let f = tape.slice_cols(gates, h, h)?;
        let f = tape.sigmoid(f)?;
        let g = tape.slice_cols(gates, 2 * h, h)?;
        let g = tape.tanh(g)?;
        let o = tape.slice_cols(gates, 3 * h, h)?;
        let o = tape.sigmoid(o)?;
        let ig = tape.mul(i, g)?;
        let c = match state {
            Some((_, c_prev)) => {
                let kept = tape.mul(f, c_prev)?;
                tape.add(kept, ig)?
            }
            None => ig,
        };
        let c_act = tape.tanh(c)?;
        let h_new = tape.mul(o, c_act)?;
        outputs[t] = Some(h_new);
        state = Some((h_new, c));
    }
    Ok(outputs.into_iter().map(|o| o.expect("every step visited")).collect())
}

/// Forward and backward LSTM passes concatenated per frame: `[T, 2H]`.
pub fn blstm_graph(tape: &mut Tape, x: Var, fwd: [Var; 3], bwd: [Var; 3]) -> Result<Var> {
    let f = lstm_graph(tape, x, fwd[0], fwd[1], fwd[2], false)?;
    let b = lstm_graph(tape, x, bwd[0], bwd[1], bwd[2], true)?;
    let f = tape.stack_rows(&f)?;
    let b = tape.stack_rows(&b)?;
    tape.concat_cols(f, b)
}

/// Frame-to-frame attention over `h: [T, C]`.
///
/// For every pair of frames `(t, u)` the score is
/// `sigmoid(w_score . tanh(W_frame^T h_t + W_context^T h_u + b) + b_score)`;
/// each row of scores is softmax-normalised over `u` (including `u = t`) and
/// the output frame is the weighted sum of all input frames. Returns the
/// `[T, C]` output and the `[T, T]` weights.
pub fn attention_graph(tape: &mut Tape, h: Var, p: [Var; 5]) -> Result<(Var, Var)> {
    let [w_frame, w_context, bias, w_score, bias_score] = p;
    let steps = tape.value(h).rows();
    let query = tape.matmul(h, w_frame)?;
    let context = tape.matmul(h, w_context)?;
    let pairs = tape.pairwise_add(query, context)?;
    let pairs = tape.add(pairs, bias)?;
    let pairs = tape.tanh(pairs)?;
    let e = tape.matmul_t(pairs, w_score)?;
    let e = tape.add(e, bias_score)?;
    let e = tape.sigmoid(e)?;
    let e = tape.reshape(e, &[steps, steps])?;
    let weights = tape.softmax(e, 1)?;
    let out = tape.matmul(weights, h)?;
    Ok((out, weights))
}

/// Full model graph for a `[T, F]` input using parameter leaves from
/// [`ModelParams::bind`].
pub fn build_graph(
    tape: &mut Tape,
    variant: Variant,
    params: &[Var],
    input: Var,
) -> Result<GraphOutput> {
    let mut next = params.iter().copied();
    let mut take = || {
        next.next().ok_or(Error::Shape {
            op: "build_graph",
            detail: "too few parameter tensors".into(),
        })
    };
    let fwd = [take()?, take()?, take()?];
    let bwd = [take()?, take()?, take()?];
    let mut h = blstm_graph(tape, input, fwd, bwd)?;
    if variant.has_conv() {
        let (kernel, bias) = (take()?, take()?);
        h = tape.conv1d_same(h, kernel, bias)?;
        h = tape.relu(h)?;
    }
    let mut attention = None;
    if variant.has_attention() {
        let p = [take()?, take()?, take()?, take()?, take()?];
        let (l, w) = attention_graph(tape, h, p)?;
        h = l;
        attention = Some(w);
    }
    let (dw, db, fw, fb) = (take()?, take()?, take()?, take()?);
    let d = tape.matmul(h, dw)?;
    let d = tape.add(d, db)?;
    let d = tape.relu(d)?;
    let s = tape.matmul(d, fw)?;
    let frame_scores = tape.add(s, fb)?;
    let utterance_score = tape.mean(frame_scores)?;
    Ok(GraphOutput {
        frame_scores,
        utterance_score,
        attention,
    })
}

/// Spectrogram as a `[T, F]` tensor.
pub fn input_tensor(spec: &Spectrogram) -> Tensor {
    Tensor::new(vec![spec.frames(), spec.bins()], spec.as_frame_major().to_vec())
        .expect("spectrogram dimensions")
}

fn check_input(params: &ModelParams, x: &Tensor) -> Result<()> {
    if x.shape().len() != 2 || x.cols() != params.dims.input || x.rows() == 0 {
        return Err(Error::Shape {
            op: "forward",
            detail: format!(
                "input {:?}, model expects [T, {}] with T >= 1",
                x.shape(),
                params.dims.input
            ),
        });
    }
    Ok(())
}

/// Scores a `[T, F]` feature matrix.
pub fn forward_tensor(params: &ModelParams, x: &Tensor) -> Result<ScoreOutput> {
    Ok(forward_detailed(params, x)?.0)
}

/// Scores plus the attention weights (variants with attention only).
pub fn forward_detailed(params: &ModelParams, x: &Tensor) -> Result<(ScoreOutput, Option<Tensor>)> {
    check_input(params, x)?;
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let input = tape.leaf(x.clone());
    let out = build_graph(&mut tape, params.variant, &vars, input)?;
    let scores = ScoreOutput::from_frames(tape.value(out.frame_scores).data().to_vec());
    debug_assert_eq!(scores.utterance_score, tape.value(out.utterance_score).data()[0]);
    Ok((scores, out.attention.map(|a| tape.value(a).clone())))
}

pub fn forward(params: &ModelParams, spec: &Spectrogram) -> Result<ScoreOutput> {
    forward_tensor(params, &input_tensor(spec))
}

/// BLSTM output `[T, 2H]` for `x: [T, D]`.
pub fn blstm_forward(fwd: &LstmCellParams, bwd: &LstmCellParams, x: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let x = tape.leaf(x.clone());
    let mut bind = |p: &LstmCellParams| {
        [
            tape.leaf(p.w_ih.clone()),
            tape.leaf(p.w_hh.clone()),
            tape.leaf(p.bias.clone()),
        ]
    };
    let (f, b) = (bind(fwd), bind(bwd));
    let out = blstm_graph(&mut tape, x, f, b)?;
    Ok(tape.value(out).clone())
}

/// Attention output `[T, C]` and weights `[T, T]` for `h: [T, C]`.
pub fn attention_forward(p: &AttentionParams, h: &Tensor) -> Result<(Tensor, Tensor)> {
    let mut tape = Tape::new();
    let h = tape.leaf(h.clone());
    let vars = [
        tape.leaf(p.w_frame.clone()),
        tape.leaf(p.w_context.clone()),
        tape.leaf(p.bias.clone()),
        tape.leaf(p.w_score.clone()),
        tape.leaf(p.bias_score.clone()),
    ];
    let (l, w) = attention_graph(&mut tape, h, vars)?;
    Ok((tape.value(l).clone(), tape.value(w).clone()))
}

/// Width-3 "same" convolution of `x: [T, C]` with `kernel: [N, C, 3]`.
pub fn conv1d_forward(x: &Tensor, kernel: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let x = tape.leaf(x.clone());
    let k = tape.leaf(kernel.clone());
    let b = tape.leaf(bias.clone());
    let y = tape.conv1d_same(x, k, b)?;
    Ok(tape.value(y).clone())
}
