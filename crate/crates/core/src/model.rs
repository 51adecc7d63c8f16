//! HM-BiTCN: stacked bidirectional dilated causal convolution blocks.
//!
//! The public input layout is `B×T×C`. An optional CIF front end is applied
//! to the raw input, which is then transposed to `B×C×T` for the convolution
//! stack. The head is a global average over time followed by one linear layer.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cif::{apply_cif_graph, constrain_coefficients, CifConfig};
use crate::error::{config, dim, Error, Result};
use crate::io::write_atomic;
use crate::rng;
use crate::tensor::{check_gradients, Graph, Tensor, Var};

pub const PARAMS_MAGIC: &[u8; 4] = b"HMBT";
pub const PARAMS_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DirectionMode {
    Forward,
    Backward,
    #[default]
    Both,
}

impl DirectionMode {
    pub const ALL: [DirectionMode; 3] = [DirectionMode::Forward, DirectionMode::Backward, DirectionMode::Both];

    pub fn label(self) -> &'static str {
        match self {
            DirectionMode::Forward => "forward",
            DirectionMode::Backward => "backward",
            DirectionMode::Both => "both",
        }
    }
}

impl std::str::FromStr for DirectionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "forward" => Ok(DirectionMode::Forward),
            "backward" => Ok(DirectionMode::Backward),
            "both" => Ok(DirectionMode::Both),
            other => Err(Error::Argument(format!("unknown direction mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HmBiTcnConfig {
    pub input_channels: usize,
    pub kernel_size: usize,
    pub channel_widths: Vec<usize>,
    /// One dilation per block; must not increase from block to block.
    pub dilation_schedule: Vec<usize>,
    #[serde(default)]
    pub direction_mode: DirectionMode,
    pub num_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cif: Option<CifConfig>,
}

impl HmBiTcnConfig {
    /// Three blocks of width 16 with dilations 4, 2, 1 and kernel size 3.
    pub fn desk_default(input_channels: usize, num_classes: usize) -> Self {
        Self {
            input_channels,
            kernel_size: 3,
            channel_widths: vec![16, 16, 16],
            dilation_schedule: vec![4, 2, 1],
            direction_mode: DirectionMode::Both,
            num_classes,
            cif: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channel_widths.is_empty() {
            return config("at least one block is required");
        }
        if self.channel_widths.len() != self.dilation_schedule.len() {
            return config("channel_widths and dilation_schedule must have equal length");
        }
        if self.kernel_size == 0 || self.input_channels == 0 {
            return config("kernel_size and input_channels must be positive");
        }
        if self.channel_widths.contains(&0) || self.dilation_schedule.contains(&0) {
            return config("channel widths and dilations must be positive");
        }
        if self.dilation_schedule.windows(2).any(|w| w[1] > w[0]) {
            return config(format!(
                "dilation schedule {:?} must be nonincreasing",
                self.dilation_schedule
            ));
        }
        if self.num_classes < 2 {
            return config("num_classes must be at least 2");
        }
        if let Some(cif) = &self.cif {
            cif.validate(self.input_channels)?;
        }
        Ok(())
    }

    /// Dilation of every individual convolution layer (two per block).
    pub fn conv_layer_dilations(&self) -> Vec<usize> {
        self.dilation_schedule.iter().flat_map(|&d| [d, d]).collect()
    }

    /// SHA-256 of the JSON encoding; binds a parameter file to its architecture.
    pub fn digest(&self) -> [u8; 32] {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        let mut out = [0u8; 32];
        out.copy_from_slice(&Sha256::digest(&bytes));
        out
    }
}

/// Pair of independent causal convolutions, one run on the time-reversed input.
#[derive(Clone, Debug, PartialEq)]
pub struct BiCausalConv {
    pub kernel_size: usize,
    pub dilation_forward: usize,
    pub dilation_backward: usize,
    pub forward_weight: Tensor,
    pub forward_bias: Tensor,
    pub backward_weight: Tensor,
    pub backward_bias: Tensor,
}

impl BiCausalConv {
    /// Fan-in uniform initialisation in `±√(1/(C_in·k))`.
    pub fn init<R: Rng + ?Sized>(c_in: usize, c_out: usize, k: usize, dilation: usize, rng: &mut R) -> Self {
        let bound = (1.0 / (c_in * k) as f64).sqrt();
        Self {
            kernel_size: k,
            dilation_forward: dilation,
            dilation_backward: dilation,
            forward_weight: Tensor::uniform(vec![c_out, c_in, k], bound, rng),
            forward_bias: Tensor::uniform(vec![c_out], bound, rng),
            backward_weight: Tensor::uniform(vec![c_out, c_in, k], bound, rng),
            backward_bias: Tensor::uniform(vec![c_out], bound, rng),
        }
    }

    pub fn zeros(c_in: usize, c_out: usize, k: usize, dilation: usize) -> Self {
        Self {
            kernel_size: k,
            dilation_forward: dilation,
            dilation_backward: dilation,
            forward_weight: Tensor::zeros(vec![c_out, c_in, k]),
            forward_bias: Tensor::zeros(vec![c_out]),
            backward_weight: Tensor::zeros(vec![c_out, c_in, k]),
            backward_bias: Tensor::zeros(vec![c_out]),
        }
    }

    pub fn in_channels(&self) -> usize {
        self.forward_weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.forward_weight.shape()[0]
    }

    /// Same layer with the forward and backward kernels exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            kernel_size: self.kernel_size,
            dilation_forward: self.dilation_backward,
            dilation_backward: self.dilation_forward,
            forward_weight: self.backward_weight.clone(),
            forward_bias: self.backward_bias.clone(),
            backward_weight: self.forward_weight.clone(),
            backward_bias: self.forward_bias.clone(),
        }
    }

    fn tensors(&self) -> [&Tensor; 4] {
        [&self.forward_weight, &self.forward_bias, &self.backward_weight, &self.backward_bias]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 4] {
        [
            &mut self.forward_weight,
            &mut self.forward_bias,
            &mut self.backward_weight,
            &mut self.backward_bias,
        ]
    }

    fn structure(&self, vars: &mut impl Iterator<Item = Var>) -> BoundBiConv {
        let mut next = || vars.next().expect("one leaf per parameter tensor");
        BoundBiConv {
            forward_weight: next(),
            forward_bias: next(),
            backward_weight: next(),
            backward_bias: next(),
            dilation_forward: self.dilation_forward,
            dilation_backward: self.dilation_backward,
        }
    }

    pub fn bind(&self, g: &mut Graph) -> BoundBiConv {
        let vars: Vec<Var> = self.tensors().iter().map(|t| g.param((*t).clone())).collect();
        self.structure(&mut vars.into_iter())
    }

    /// Value-only evaluation on `B×C_in×T` input.
    pub fn forward(&self, x: &Tensor, mode: DirectionMode) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let xv = g.constant(x.clone());
        let y = bidirectional_causal_conv(&mut g, xv, &bound, mode)?;
        Ok(g.value(y).clone())
    }
}

/// Graph handles of a [`BiCausalConv`].
#[derive(Clone, Copy, Debug)]
pub struct BoundBiConv {
    pub forward_weight: Var,
    pub forward_bias: Var,
    pub backward_weight: Var,
    pub backward_bias: Var,
    pub dilation_forward: usize,
    pub dilation_backward: usize,
}

/// Forward branch `conv(x)`, backward branch `flip(conv(flip(x)))`, or their sum.
pub fn bidirectional_causal_conv(g: &mut Graph, x: Var, layer: &BoundBiConv, mode: DirectionMode) -> Result<Var> {
    let forward = |g: &mut Graph| g.conv1d_causal(x, layer.forward_weight, layer.forward_bias, layer.dilation_forward);
    let backward = |g: &mut Graph| -> Result<Var> {
        let flipped = g.flip_time(x)?;
        let y = g.conv1d_causal(flipped, layer.backward_weight, layer.backward_bias, layer.dilation_backward)?;
        g.flip_time(y)
    };
    match mode {
        DirectionMode::Forward => forward(g),
        DirectionMode::Backward => backward(g),
        DirectionMode::Both => {
            let yf = forward(g)?;
            let yb = backward(g)?;
            g.add(yf, yb)
        }
    }
}

/// Pointwise (kernel 1) convolution on the residual path.
#[derive(Clone, Debug, PartialEq)]
pub struct Projector {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Projector {
    /// Ones on the diagonal up to `min(C_in, C_out)`, zero bias.
    pub fn identity_like(c_in: usize, c_out: usize) -> Self {
        let mut weight = Tensor::zeros(vec![c_out, c_in, 1]);
        for i in 0..c_in.min(c_out) {
            weight.data_mut()[i * c_in + i] = 1.0;
        }
        Self {
            weight,
            bias: Tensor::zeros(vec![c_out]),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiDilatedBlock {
    pub conv1: BiCausalConv,
    pub conv2: BiCausalConv,
    pub residual_projector: Option<Projector>,
    pub is_final: bool,
}

impl BiDilatedBlock {
    pub fn init<R: Rng + ?Sized>(c_in: usize, c_out: usize, k: usize, dilation: usize, is_final: bool, rng: &mut R) -> Self {
        let conv1 = BiCausalConv::init(c_in, c_out, k, dilation, rng);
        let conv2 = BiCausalConv::init(c_out, c_out, k, dilation, rng);
        Self {
            conv1,
            conv2,
            residual_projector: (c_in != c_out || is_final).then(|| Projector::identity_like(c_in, c_out)),
            is_final,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.conv1.in_channels()
    }

    pub fn out_channels(&self) -> usize {
        self.conv2.out_channels()
    }

    fn tensors(&self) -> Vec<&Tensor> {
        let mut v: Vec<&Tensor> = self.conv1.tensors().into_iter().chain(self.conv2.tensors()).collect();
        if let Some(p) = &self.residual_projector {
            v.push(&p.weight);
            v.push(&p.bias);
        }
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v: Vec<&mut Tensor> = self
            .conv1
            .tensors_mut()
            .into_iter()
            .chain(self.conv2.tensors_mut())
            .collect();
        if let Some(p) = &mut self.residual_projector {
            v.push(&mut p.weight);
            v.push(&mut p.bias);
        }
        v
    }

    fn structure(&self, vars: &mut impl Iterator<Item = Var>) -> BoundBlock {
        let conv1 = self.conv1.structure(vars);
        let conv2 = self.conv2.structure(vars);
        let projector = self.residual_projector.as_ref().map(|_| {
            let w = vars.next().expect("projector weight leaf");
            let b = vars.next().expect("projector bias leaf");
            (w, b)
        });
        BoundBlock { conv1, conv2, projector }
    }

    pub fn bind(&self, g: &mut Graph) -> BoundBlock {
        let vars: Vec<Var> = self.tensors().into_iter().map(|t| g.param(t.clone())).collect();
        self.structure(&mut vars.into_iter())
    }

    /// Value-only evaluation on `B×C×T` input.
    pub fn forward(&self, x: &Tensor, mode: DirectionMode) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let xv = g.constant(x.clone());
        let (_, y) = block_forward(&mut g, xv, &bound, mode)?;
        Ok(g.value(y).clone())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundBlock {
    pub conv1: BoundBiConv,
    pub conv2: BoundBiConv,
    pub projector: Option<(Var, Var)>,
}

/// `biconv₂(GELU(biconv₁(GELU(x)))) + residual(x)`.
///
/// Returns the output of the first bidirectional convolution alongside the
/// block output so probes can inspect both convolution layers.
pub fn block_forward(g: &mut Graph, x: Var, block: &BoundBlock, mode: DirectionMode) -> Result<(Var, Var)> {
    let residual = match block.projector {
        Some((w, b)) => g.conv1d_causal(x, w, b, 1)?,
        None => x,
    };
    let h = g.gelu(x)?;
    let first = bidirectional_causal_conv(g, h, &block.conv1, mode)?;
    let h = g.gelu(first)?;
    let second = bidirectional_causal_conv(g, h, &block.conv2, mode)?;
    let out = g.add(second, residual)?;
    Ok((first, out))
}

/// Full classifier: CIF front end, convolution blocks, pooled linear head.
#[derive(Clone, Debug, PartialEq)]
pub struct HmBiTcn {
    config: HmBiTcnConfig,
    pub blocks: Vec<BiDilatedBlock>,
    pub head_weight: Tensor,
    pub head_bias: Tensor,
    /// `(a, b)` as trainable one-element tensors when the CIF mode is learnable.
    pub cif_coefficients: Option<(Tensor, Tensor)>,
}

/// Graph handles of a bound [`HmBiTcn`].
pub struct BoundModel {
    pub blocks: Vec<BoundBlock>,
    pub head_weight: Var,
    pub head_bias: Var,
    pub cif: Option<(Var, Var)>,
    /// Every parameter leaf, in [`HmBiTcn::parameters`] order.
    pub params: Vec<Var>,
}

impl HmBiTcn {
    pub fn new(config: HmBiTcnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::seeded(seed);
        let k = config.kernel_size;
        let mut blocks = Vec::with_capacity(config.channel_widths.len());
        let mut c_in = config.input_channels;
        let last = config.channel_widths.len() - 1;
        for (i, (&c_out, &d)) in config.channel_widths.iter().zip(&config.dilation_schedule).enumerate() {
            blocks.push(BiDilatedBlock::init(c_in, c_out, k, d, i == last, &mut rng));
            c_in = c_out;
        }
        let bound = (1.0 / c_in as f64).sqrt();
        let head_weight = Tensor::uniform(vec![config.num_classes, c_in], bound, &mut rng);
        let head_bias = Tensor::uniform(vec![config.num_classes], bound, &mut rng);
        let cif_coefficients = config
            .cif
            .as_ref()
            .filter(|c| c.coefficient_mode.is_learnable())
            .map(|c| (Tensor::scalar(c.a), Tensor::scalar(c.b)));
        Ok(Self {
            config,
            blocks,
            head_weight,
            head_bias,
            cif_coefficients,
        })
    }

    pub fn config(&self) -> &HmBiTcnConfig {
        &self.config
    }

    /// Every trainable tensor in a fixed order: blocks (conv1 forward weight,
    /// bias, backward weight, bias; conv2 likewise; projector weight, bias),
    /// then head weight and bias, then learnable CIF `a`, `b`.
    pub fn parameters(&self) -> Vec<&Tensor> {
        let mut v: Vec<&Tensor> = self.blocks.iter().flat_map(|b| b.tensors()).collect();
        v.push(&self.head_weight);
        v.push(&self.head_bias);
        if let Some((a, b)) = &self.cif_coefficients {
            v.push(a);
            v.push(b);
        }
        v
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v: Vec<&mut Tensor> = self.blocks.iter_mut().flat_map(|b| b.tensors_mut()).collect();
        v.push(&mut self.head_weight);
        v.push(&mut self.head_bias);
        if let Some((a, b)) = &mut self.cif_coefficients {
            v.push(a);
            v.push(b);
        }
        v
    }

    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            for conv in ["conv1", "conv2"] {
                for p in ["forward_weight", "forward_bias", "backward_weight", "backward_bias"] {
                    names.push(format!("block{i}.{conv}.{p}"));
                }
            }
            if b.residual_projector.is_some() {
                names.push(format!("block{i}.projector.weight"));
                names.push(format!("block{i}.projector.bias"));
            }
        }
        names.push("head.weight".into());
        names.push("head.bias".into());
        if self.cif_coefficients.is_some() {
            names.push("cif.a".into());
            names.push("cif.b".into());
        }
        names
    }

    /// Total scalar count of all stored parameters.
    pub fn count_parameters(&self) -> usize {
        self.parameters().iter().map(|t| t.numel()).sum()
    }

    /// Scalars that actually influence the output under the configured direction mode.
    pub fn count_active_parameters(&self) -> usize {
        let unused: usize = match self.config.direction_mode {
            DirectionMode::Both => 0,
            _ => self
                .blocks
                .iter()
                .flat_map(|b| [&b.conv1, &b.conv2])
                .map(|c| c.forward_weight.numel() + c.forward_bias.numel())
                .sum(),
        };
        self.count_parameters() - unused
    }

    /// Current CIF coefficients, learnable or fixed.
    pub fn cif_values(&self) -> Option<(f64, f64)> {
        match (&self.config.cif, &self.cif_coefficients) {
            (_, Some((a, b))) => Some((a.data()[0], b.data()[0])),
            (Some(c), None) => Some((c.a, c.b)),
            (None, None) => None,
        }
    }

    /// Projects learnable CIF coefficients back onto their sign constraint.
    pub fn project_constraints(&mut self) {
        if let (Some(cfg), Some((a, b))) = (&self.config.cif, &mut self.cif_coefficients) {
            let (pa, pb) = constrain_coefficients(a.data()[0], b.data()[0], cfg.coefficient_mode);
            a.data_mut()[0] = pa;
            b.data_mut()[0] = pb;
        }
    }

    /// Creates one parameter leaf per tensor of [`HmBiTcn::parameters`].
    pub fn bind(&self, g: &mut Graph) -> BoundModel {
        let vars: Vec<Var> = self.parameters().into_iter().map(|t| g.param(t.clone())).collect();
        self.bind_vars(g, &vars).expect("leaf count matches parameters")
    }

    /// Structures caller-provided leaves, one per tensor of [`HmBiTcn::parameters`]
    /// in the same order. Fixed CIF coefficients become constants.
    pub fn bind_vars(&self, g: &mut Graph, vars: &[Var]) -> Result<BoundModel> {
        let expected = self.parameters().len();
        if vars.len() != expected {
            return Err(Error::Argument(format!("expected {expected} parameter leaves, got {}", vars.len())));
        }
        let mut it = vars.iter().copied();
        let blocks = self.blocks.iter().map(|b| b.structure(&mut it)).collect();
        let head_weight = it.next().expect("head weight leaf");
        let head_bias = it.next().expect("head bias leaf");
        let cif = match (&self.config.cif, &self.cif_coefficients) {
            (_, Some(_)) => Some((it.next().expect("cif a leaf"), it.next().expect("cif b leaf"))),
            (Some(c), None) => Some((g.constant(Tensor::scalar(c.a)), g.constant(Tensor::scalar(c.b)))),
            (None, None) => None,
        };
        Ok(BoundModel {
            blocks,
            head_weight,
            head_bias,
            cif,
            params: vars.to_vec(),
        })
    }

    /// Worst relative error between reverse-mode and central-difference
    /// gradients of the mean cross-entropy, per named parameter tensor.
    pub fn gradient_check(&self, x: &Tensor, labels: &[usize], h: f64) -> Result<Vec<(String, f64)>> {
        let params: Vec<Tensor> = self.parameters().into_iter().cloned().collect();
        let errors = check_gradients(
            |g, vars| {
                let bound = self.bind_vars(g, vars)?;
                let xv = g.constant(x.clone());
                let logits = self.forward_graph(g, &bound, xv)?;
                g.softmax_cross_entropy(logits, labels)
            },
            &params,
            h,
        )?;
        Ok(self.parameter_names().into_iter().zip(errors).collect())
    }

    /// Applies the CIF front end (if any) and transposes `B×T×C → B×C×T`.
    pub fn network_input(&self, g: &mut Graph, bound: &BoundModel, x: Var) -> Result<Var> {
        let (_, _, c) = g.value(x).dims3()?;
        if c != self.config.input_channels {
            return dim(format!(
                "model expects {} channels, input has {c}",
                self.config.input_channels
            ));
        }
        let fused = match (&self.config.cif, bound.cif) {
            (Some(cfg), Some((a, b))) => apply_cif_graph(g, x, a, b, cfg)?,
            _ => x,
        };
        g.swap_last_two(fused)
    }

    /// Records the forward pass of `B×T×C` input and returns `B×K` logits.
    pub fn forward_graph(&self, g: &mut Graph, bound: &BoundModel, x: Var) -> Result<Var> {
        let mut h = self.network_input(g, bound, x)?;
        let mode = self.config.direction_mode;
        for block in &bound.blocks {
            h = block_forward(g, h, block, mode)?.1;
        }
        let pooled = g.global_avg_pool_time(h)?;
        g.linear(pooled, bound.head_weight, bound.head_bias)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let xv = g.constant(x.clone());
        let logits = self.forward_graph(&mut g, &bound, xv)?;
        Ok(g.value(logits).clone())
    }

    /// Mean cross-entropy and its gradient for every parameter, in
    /// [`HmBiTcn::parameters`] order.
    pub fn loss_and_gradients(&self, x: &Tensor, labels: &[usize]) -> Result<(f64, Vec<Vec<f64>>)> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let xv = g.constant(x.clone());
        let logits = self.forward_graph(&mut g, &bound, xv)?;
        let loss = g.softmax_cross_entropy(logits, labels)?;
        g.backward(loss)?;
        let grads = bound
            .params
            .iter()
            .map(|&v| {
                g.grad(v)
                    .map(<[f64]>::to_vec)
                    .unwrap_or_else(|| vec![0.0; g.value(v).numel()])
            })
            .collect();
        Ok((g.value(loss).item()?, grads))
    }

    /// Output of every convolution layer (two per block) for network-level
    /// `B×C×T` input, i.e. after CIF and transposition. The second entry of
    /// each block includes the residual path.
    pub fn conv_layer_outputs(&self, x: &Tensor, mode: DirectionMode) -> Result<Vec<Tensor>> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g);
        let mut h = g.constant(x.clone());
        let mut out = Vec::with_capacity(2 * bound.blocks.len());
        for block in &bound.blocks {
            let (first, second) = block_forward(&mut g, h, block, mode)?;
            out.push(g.value(first).clone());
            out.push(g.value(second).clone());
            h = second;
        }
        Ok(out)
    }

    pub fn save_params(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(40 + 8 * self.count_parameters());
        buf.extend_from_slice(PARAMS_MAGIC);
        buf.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.config.digest());
        for t in self.parameters() {
            for v in t.data() {
                buf.write_all(&v.to_le_bytes()).expect("writing to Vec");
            }
        }
        write_atomic(path, &buf)
    }

    /// Loads parameters saved by [`HmBiTcn::save_params`] for the same config.
    pub fn load_params(config: HmBiTcnConfig, path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let bad = |msg: &str| Error::Format {
            path: path.to_path_buf(),
            msg: msg.into(),
        };
        if bytes.len() < 40 || &bytes[..4] != PARAMS_MAGIC {
            return Err(bad("missing HMBT header"));
        }
        if u32::from_le_bytes(bytes[4..8].try_into().unwrap()) != PARAMS_VERSION {
            return Err(bad("unsupported parameter file version"));
        }
        if bytes[8..40] != config.digest() {
            return Err(bad("config digest does not match"));
        }
        let mut model = Self::new(config, 0)?;
        let body = &bytes[40..];
        if body.len() != 8 * model.count_parameters() {
            return Err(bad("parameter count does not match config"));
        }
        let mut values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        for t in model.parameters_mut() {
            for slot in t.data_mut() {
                *slot = values.next().expect("length checked");
            }
        }
        if !model.parameters().iter().all(|t| t.is_finite()) {
            return Err(bad("non-finite parameter"));
        }
        Ok(model)
    }
}

/// `r_l = k + (k − 1)·Σ_{j<l} d_j` for 1-based layer `l`.
pub fn receptive_field_closed_form(kernel_size: usize, dilations: &[usize], layer: usize) -> usize {
    let sum: usize = dilations.iter().take(layer.saturating_sub(1)).sum();
    kernel_size + (kernel_size - 1) * sum
}

/// `1 + (k − 1)·Σ_{j≤l} d_j`: the span of `l` stacked causal dilated convolutions.
pub fn receptive_field_stacked(kernel_size: usize, dilations: &[usize], layer: usize) -> usize {
    let sum: usize = dilations.iter().take(layer).sum();
    1 + (kernel_size - 1) * sum
}

/// Input positions whose perturbation changes the output of convolution
/// layer `layer` (1-based, two per block) at time `t`, for a random
/// network-level `1×C×len` input.
pub fn influencing_positions(
    model: &HmBiTcn,
    layer: usize,
    mode: DirectionMode,
    len: usize,
    t: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let layers = 2 * model.blocks.len();
    if layer == 0 || layer > layers {
        return Err(Error::Argument(format!("layer {layer} outside 1..={layers}")));
    }
    if t >= len {
        return Err(Error::Argument(format!("probe time {t} outside a length-{len} input")));
    }
    let c = model.blocks[0].in_channels();
    let mut rng = rng::seeded(seed);
    let x = Tensor::uniform(vec![1, c, len], 1.0, &mut rng);
    let probe = |x: &Tensor| -> Result<Vec<f64>> {
        let out = model.conv_layer_outputs(x, mode)?.swap_remove(layer - 1);
        let (_, ch, _) = out.dims3()?;
        Ok((0..ch).map(|o| out.at3(0, o, t)).collect())
    };
    let base = probe(&x)?;
    let mut hits = Vec::new();
    for t0 in 0..len {
        let mut px = x.clone();
        for ch in 0..c {
            px.data_mut()[ch * len + t0] += 1.0;
        }
        if probe(&px)? != base {
            hits.push(t0);
        }
    }
    Ok(hits)
}

/// Forward-branch receptive field measured by perturbation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReceptiveFieldProbe {
    /// `t − t_min + 1`, where `t_min` is the earliest influencing position.
    pub span: usize,
    /// Number of influencing positions; below `span` when dilated taps leave gaps.
    pub count: usize,
}

/// Probes layer `layer` at `t = len − 1` in forward-only mode.
pub fn receptive_field_empirical(model: &HmBiTcn, layer: usize, len: usize, seed: u64) -> Result<ReceptiveFieldProbe> {
    let t = len.saturating_sub(1);
    let hits = influencing_positions(model, layer, DirectionMode::Forward, len, t, seed)?;
    Ok(ReceptiveFieldProbe {
        span: hits.first().map_or(0, |&first| t - first + 1),
        count: hits.len(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingReport {
    pub parameters: usize,
    pub active_parameters: usize,
    pub batch: usize,
    pub length: usize,
    pub forward_ms: f64,
    pub forward_backward_ms: f64,
}

/// Mean wall-clock time of a forward pass and of forward+backward over `reps` runs.
pub fn timing_report(cfg: &HmBiTcnConfig, batch: usize, length: usize, reps: usize) -> Result<TimingReport> {
    let model = HmBiTcn::new(cfg.clone(), 0)?;
    let mut rng = rng::seeded(1);
    let x = Tensor::uniform(vec![batch, length, cfg.input_channels], 1.0, &mut rng);
    let labels: Vec<usize> = (0..batch).map(|i| i % cfg.num_classes).collect();
    let reps = reps.max(1);
    let start = Instant::now();
    for _ in 0..reps {
        model.forward(&x)?;
    }
    let forward_ms = start.elapsed().as_secs_f64() * 1e3 / reps as f64;
    let start = Instant::now();
    for _ in 0..reps {
        model.loss_and_gradients(&x, &labels)?;
    }
    let forward_backward_ms = start.elapsed().as_secs_f64() * 1e3 / reps as f64;
    Ok(TimingReport {
        parameters: model.count_parameters(),
        active_parameters: model.count_active_parameters(),
        batch,
        length,
        forward_ms,
        forward_backward_ms,
    })
}
