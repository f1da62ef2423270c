//! Small fully-connected networks with hand-written backpropagation.
//!
//! Everything is double precision. Weight matrices are stored `in×out`, so a
//! layer computes `act(x · W + b)` for a row vector `x`.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Linear => z,
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative with respect to the pre-activation, given both the
    /// pre-activation `z` and the output `y`.
    fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Linear => "linear",
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "linear" => Some(Activation::Linear),
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub w: Matrix,
    pub b: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(w: Matrix, b: Vec<f64>, activation: Activation) -> Result<Self> {
        if b.len() != w.cols() {
            return Err(Error::shape("DenseLayer::new (bias)", w.cols(), b.len()));
        }
        Ok(DenseLayer { w, b, activation })
    }

    /// Uniform initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn random<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, activation: Activation, rng: &mut R) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut w = Matrix::zeros(fan_in, fan_out);
        for v in w.as_mut_slice() {
            *v = rng.random_range(-bound..=bound);
        }
        let b = (0..fan_out).map(|_| rng.random_range(-bound..=bound)).collect();
        DenseLayer { w, b, activation }
    }

    pub fn in_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.w.cols()
    }

    fn is_finite(&self) -> bool {
        self.w.is_finite() && self.b.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
}

/// Cached per-layer quantities from a forward pass, reused across calls.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    input: Vec<f64>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.post.last().map_or(&[][..], |v| v.as_slice())
    }
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::shape("Mlp::new", "at least one layer", 0));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::shape(
                    "Mlp::new (layer chaining)",
                    pair[0].out_dim(),
                    pair[1].in_dim(),
                ));
            }
        }
        Ok(Mlp { layers })
    }

    /// `sizes = [in, h1, ..., out]`; hidden layers use `hidden`, the last
    /// layer uses `output`.
    pub fn random<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, output: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                DenseLayer::random(sizes[i], sizes[i + 1], act, rng)
            })
            .collect();
        Mlp { layers }
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    /// Replaces one layer, checking it still chains with its neighbours.
    pub fn replace_layer(&mut self, idx: usize, layer: DenseLayer) -> Result<()> {
        if idx > 0 && self.layers[idx - 1].out_dim() != layer.in_dim() {
            return Err(Error::shape(
                "Mlp::replace_layer",
                self.layers[idx - 1].out_dim(),
                layer.in_dim(),
            ));
        }
        if idx + 1 < self.layers.len() && self.layers[idx + 1].in_dim() != layer.out_dim() {
            return Err(Error::shape(
                "Mlp::replace_layer",
                self.layers[idx + 1].in_dim(),
                layer.out_dim(),
            ));
        }
        self.layers[idx] = layer;
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.layers.iter().map(|l| l.w.shape()).collect()
    }

    pub fn same_architecture(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.w.shape() == b.w.shape() && a.activation == b.activation)
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(DenseLayer::is_finite)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.as_slice().len() + l.b.len()).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut trace = Trace::default();
        self.forward_trace(x, &mut trace)?;
        Ok(trace.post.pop().unwrap_or_default())
    }

    /// Forward pass that records pre- and post-activations for a later
    /// [`backward_trace`](Self::backward_trace).
    pub fn forward_trace(&self, x: &[f64], trace: &mut Trace) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::shape("Mlp::forward", self.input_dim(), x.len()));
        }
        let n = self.layers.len();
        trace.pre.resize_with(n, Vec::new);
        trace.post.resize_with(n, Vec::new);
        trace.input.clear();
        trace.input.extend_from_slice(x);
        for (i, layer) in self.layers.iter().enumerate() {
            let (before, rest) = trace.post.split_at_mut(i);
            let input: &[f64] = if i == 0 { &trace.input } else { &before[i - 1] };
            let pre = &mut trace.pre[i];
            pre.clear();
            pre.extend_from_slice(&layer.b);
            for (k, &xk) in input.iter().enumerate() {
                if xk == 0.0 {
                    continue;
                }
                for (p, &wk) in pre.iter_mut().zip(layer.w.row(k)) {
                    *p += xk * wk;
                }
            }
            let post = &mut rest[0];
            post.clear();
            post.extend(pre.iter().map(|&z| layer.activation.apply(z)));
        }
        Ok(())
    }

    /// Accumulates into `grads` the gradient of `upstream · output` with
    /// respect to every parameter, for the sample recorded in `trace`, and
    /// returns the gradient with respect to the input.
    pub fn backward_trace(&self, trace: &Trace, upstream: &[f64], grads: &mut GradientSet) -> Result<Vec<f64>> {
        if upstream.len() != self.output_dim() {
            return Err(Error::shape("Mlp::backward", self.output_dim(), upstream.len()));
        }
        if trace.post.len() != self.layers.len() {
            return Err(Error::shape(
                "Mlp::backward (trace)",
                self.layers.len(),
                trace.post.len(),
            ));
        }
        grads.check_shapes(self)?;
        let mut delta: Vec<f64> = upstream.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            for ((d, &z), &y) in delta.iter_mut().zip(&trace.pre[i]).zip(&trace.post[i]) {
                *d *= layer.activation.derivative(z, y);
            }
            let input: &[f64] = if i == 0 { &trace.input } else { &trace.post[i - 1] };
            let g = &mut grads.layers[i];
            for (k, &xk) in input.iter().enumerate() {
                if xk == 0.0 {
                    continue;
                }
                for (gw, &d) in g.dw.row_mut(k).iter_mut().zip(&delta) {
                    *gw += xk * d;
                }
            }
            for (gb, &d) in g.db.iter_mut().zip(&delta) {
                *gb += d;
            }
            let mut next = vec![0.0; layer.in_dim()];
            for (k, nk) in next.iter_mut().enumerate() {
                *nk = layer.w.row(k).iter().zip(&delta).map(|(w, d)| w * d).sum();
            }
            delta = next;
        }
        Ok(delta)
    }

    /// Gradients of `upstream · net(x)` for a single sample. Returns the
    /// parameter gradients and the input gradient.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<(GradientSet, Vec<f64>)> {
        let mut trace = Trace::default();
        self.forward_trace(x, &mut trace)?;
        let mut grads = GradientSet::zeros_like(self);
        let dx = self.backward_trace(&trace, upstream, &mut grads)?;
        Ok((grads, dx))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub dw: Matrix,
    pub db: Vec<f64>,
}

/// Per-layer weight and bias gradients, shape-matched to an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGrad>,
}

impl GradientSet {
    pub fn zeros_like(net: &Mlp) -> Self {
        GradientSet {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    dw: Matrix::zeros(l.in_dim(), l.out_dim()),
                    db: vec![0.0; l.out_dim()],
                })
                .collect(),
        }
    }

    fn check_shapes(&self, net: &Mlp) -> Result<()> {
        let ok = self.layers.len() == net.layers.len()
            && self
                .layers
                .iter()
                .zip(&net.layers)
                .all(|(g, l)| g.dw.shape() == l.w.shape() && g.db.len() == l.b.len());
        if ok {
            Ok(())
        } else {
            Err(Error::shape(
                "GradientSet",
                format!("{:?}", net.shapes()),
                format!("{:?}", self.layers.iter().map(|g| g.dw.shape()).collect::<Vec<_>>()),
            ))
        }
    }

    pub fn zero(&mut self) {
        for g in &mut self.layers {
            g.dw.as_mut_slice().iter_mut().for_each(|v| *v = 0.0);
            g.db.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.layers {
            g.dw.as_mut_slice().iter_mut().for_each(|v| *v *= s);
            g.db.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|g| g.dw.is_finite() && g.db.iter().all(|v| v.is_finite()))
    }

    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|g| g.dw.as_slice().iter().all(|&v| v == 0.0) && g.db.iter().all(|&v| v == 0.0))
    }

    fn zeros_for_layer(layer: &DenseLayer) -> LayerGrad {
        LayerGrad {
            dw: Matrix::zeros(layer.in_dim(), layer.out_dim()),
            db: vec![0.0; layer.out_dim()],
        }
    }
}

/// Adam moment estimates. Each layer keeps its own step counter so that a
/// layer whose moments are reset restarts its bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub steps: Vec<u64>,
    pub m: GradientSet,
    pub v: GradientSet,
}

impl AdamState {
    pub fn new(net: &Mlp) -> Self {
        AdamState {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: vec![0; net.layers.len()],
            m: GradientSet::zeros_like(net),
            v: GradientSet::zeros_like(net),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Optimizer {
    Sgd,
    Adam(AdamState),
}

impl Optimizer {
    pub fn adam(net: &Mlp) -> Self {
        Optimizer::Adam(AdamState::new(net))
    }

    /// Zeroes the moment state of layer `idx` and resizes it to the layer's
    /// current shape. Used after layer surgery.
    pub fn reset_layer(&mut self, net: &Mlp, idx: usize) {
        if let Optimizer::Adam(state) = self {
            let layer = &net.layers[idx];
            state.m.layers[idx] = GradientSet::zeros_for_layer(layer);
            state.v.layers[idx] = GradientSet::zeros_for_layer(layer);
            state.steps[idx] = 0;
        }
    }
}

/// One descent step: `params -= lr · step(g)`.
pub fn apply_gradients(
    net: &mut Mlp,
    grads: &GradientSet,
    optimizer: &mut Optimizer,
    learning_rate: f64,
) -> Result<()> {
    grads.check_shapes(net)?;
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradients"));
    }
    match optimizer {
        Optimizer::Sgd => {
            for (layer, g) in net.layers.iter_mut().zip(&grads.layers) {
                for (w, d) in layer.w.as_mut_slice().iter_mut().zip(g.dw.as_slice()) {
                    *w -= learning_rate * d;
                }
                for (b, d) in layer.b.iter_mut().zip(&g.db) {
                    *b -= learning_rate * d;
                }
            }
        }
        Optimizer::Adam(state) => {
            state.m.check_shapes(net)?;
            let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
            for (i, layer) in net.layers.iter_mut().enumerate() {
                state.steps[i] += 1;
                let t = state.steps[i] as i32;
                let c1 = 1.0 - b1.powi(t);
                let c2 = 1.0 - b2.powi(t);
                let g = &grads.layers[i];
                let m = &mut state.m.layers[i];
                let v = &mut state.v.layers[i];
                let params = layer.w.as_mut_slice().iter_mut().chain(layer.b.iter_mut());
                let gs = g.dw.as_slice().iter().chain(&g.db);
                let ms = m.dw.as_mut_slice().iter_mut().chain(m.db.iter_mut());
                let vs = v.dw.as_mut_slice().iter_mut().chain(v.db.iter_mut());
                for (((p, &gi), mi), vi) in params.zip(gs).zip(ms).zip(vs) {
                    *mi = b1 * *mi + (1.0 - b1) * gi;
                    *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                    let mhat = *mi / c1;
                    let vhat = *vi / c2;
                    *p -= learning_rate * mhat / (vhat.sqrt() + eps);
                }
            }
        }
    }
    if !net.is_finite() {
        return Err(Error::NonFinite("parameters after update"));
    }
    Ok(())
}

/// `target ← tau·online + (1 − tau)·target` for every parameter.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if !target.same_architecture(online) {
        return Err(Error::shape(
            "soft_update",
            format!("{:?}", online.shapes()),
            format!("{:?}", target.shapes()),
        ));
    }
    for (t, o) in target.layers.iter_mut().zip(&online.layers) {
        for (tw, &ow) in t.w.as_mut_slice().iter_mut().zip(o.w.as_slice()) {
            *tw = tau * ow + (1.0 - tau) * *tw;
        }
        for (tb, &ob) in t.b.iter_mut().zip(&o.b) {
            *tb = tau * ob + (1.0 - tau) * *tb;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Text checkpoint format
//
//   net <layer-count>
//   layer <in> <out> <activation>
//   w <in*out values, row-major>
//   b <out values>
//   ... (one layer/w/b triple per layer)
//   optimizer sgd
//   | optimizer adam <beta1> <beta2> <eps>
//   |   adam <step> then lines mw, mb, vw, vb per layer
//   endnet
//
// Values are written in `{:e}` form, which round-trips exactly.
// ---------------------------------------------------------------------------

fn push_values(out: &mut String, tag: &str, values: &[f64]) {
    out.push_str(tag);
    for v in values {
        let _ = write!(out, " {v:e}");
    }
    out.push('\n');
}

/// Serializes a network and its optimizer state.
pub fn write_net(out: &mut String, net: &Mlp, optimizer: &Optimizer) {
    let _ = writeln!(out, "net {}", net.layers.len());
    for layer in &net.layers {
        let _ = writeln!(
            out,
            "layer {} {} {}",
            layer.in_dim(),
            layer.out_dim(),
            layer.activation.name()
        );
        push_values(out, "w", layer.w.as_slice());
        push_values(out, "b", &layer.b);
    }
    match optimizer {
        Optimizer::Sgd => out.push_str("optimizer sgd\n"),
        Optimizer::Adam(s) => {
            let _ = writeln!(out, "optimizer adam {:e} {:e} {:e}", s.beta1, s.beta2, s.eps);
            for i in 0..net.layers.len() {
                let _ = writeln!(out, "adam {}", s.steps[i]);
                push_values(out, "mw", s.m.layers[i].dw.as_slice());
                push_values(out, "mb", &s.m.layers[i].db);
                push_values(out, "vw", s.v.layers[i].dw.as_slice());
                push_values(out, "vb", &s.v.layers[i].db);
            }
        }
    }
    out.push_str("endnet\n");
}

/// Line cursor used by the checkpoint readers.
pub struct LineReader<'a> {
    lines: std::iter::Peekable<std::str::Lines<'a>>,
    line_no: usize,
}

impl<'a> LineReader<'a> {
    pub fn new(text: &'a str) -> Self {
        LineReader {
            lines: text.lines().peekable(),
            line_no: 0,
        }
    }

    /// Next non-empty line split into (tag, rest-tokens).
    pub fn next_tagged(&mut self, expected: &str) -> Result<Vec<&'a str>> {
        loop {
            let line = self
                .lines
                .next()
                .ok_or_else(|| Error::Checkpoint(format!("unexpected end of file, expected '{expected}'")))?;
            self.line_no += 1;
            let mut tokens = line.split_whitespace();
            let Some(tag) = tokens.next() else { continue };
            if tag != expected {
                return Err(Error::Checkpoint(format!(
                    "line {}: expected '{expected}', found '{tag}'",
                    self.line_no
                )));
            }
            return Ok(tokens.collect());
        }
    }

    pub fn is_exhausted(&mut self) -> bool {
        while let Some(line) = self.lines.peek() {
            if line.trim().is_empty() {
                self.lines.next();
            } else {
                return false;
            }
        }
        true
    }
}

pub(crate) fn parse_f64s(tokens: &[&str], expected: usize, what: &str) -> Result<Vec<f64>> {
    if tokens.len() != expected {
        return Err(Error::Checkpoint(format!(
            "{what}: expected {expected} values, found {}",
            tokens.len()
        )));
    }
    tokens
        .iter()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Checkpoint(format!("{what}: bad number '{t}'")))
        })
        .collect()
}

pub(crate) fn parse_usize(token: Option<&&str>, what: &str) -> Result<usize> {
    token
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Checkpoint(format!("bad or missing {what}")))
}

/// Reads a network written by [`write_net`].
pub fn read_net(reader: &mut LineReader<'_>) -> Result<(Mlp, Optimizer)> {
    let header = reader.next_tagged("net")?;
    let n = parse_usize(header.first(), "layer count")?;
    let mut layers = Vec::with_capacity(n);
    for _ in 0..n {
        let spec = reader.next_tagged("layer")?;
        let fan_in = parse_usize(spec.first(), "layer input size")?;
        let fan_out = parse_usize(spec.get(1), "layer output size")?;
        let act = spec
            .get(2)
            .and_then(|s| Activation::from_name(s))
            .ok_or_else(|| Error::Checkpoint("bad activation".into()))?;
        let w = parse_f64s(&reader.next_tagged("w")?, fan_in * fan_out, "weights")?;
        let b = parse_f64s(&reader.next_tagged("b")?, fan_out, "bias")?;
        layers.push(DenseLayer::new(Matrix::from_vec(fan_in, fan_out, w)?, b, act)?);
    }
    let net = Mlp::new(layers).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let opt_line = reader.next_tagged("optimizer")?;
    let optimizer = match opt_line.first().copied() {
        Some("sgd") => Optimizer::Sgd,
        Some("adam") => {
            let hyper = parse_f64s(&opt_line[1..], 3, "adam hyperparameters")?;
            let mut state = AdamState::new(&net);
            state.beta1 = hyper[0];
            state.beta2 = hyper[1];
            state.eps = hyper[2];
            for i in 0..n {
                let (fi, fo) = net.layers[i].w.shape();
                state.steps[i] = parse_usize(reader.next_tagged("adam")?.first(), "adam step")? as u64;
                let mw = parse_f64s(&reader.next_tagged("mw")?, fi * fo, "adam m (weights)")?;
                let mb = parse_f64s(&reader.next_tagged("mb")?, fo, "adam m (bias)")?;
                let vw = parse_f64s(&reader.next_tagged("vw")?, fi * fo, "adam v (weights)")?;
                let vb = parse_f64s(&reader.next_tagged("vb")?, fo, "adam v (bias)")?;
                state.m.layers[i] = LayerGrad {
                    dw: Matrix::from_vec(fi, fo, mw)?,
                    db: mb,
                };
                state.v.layers[i] = LayerGrad {
                    dw: Matrix::from_vec(fi, fo, vw)?,
                    db: vb,
                };
            }
            Optimizer::Adam(state)
        }
        other => {
            return Err(Error::Checkpoint(format!("unknown optimizer {other:?}")));
        }
    };
    reader.next_tagged("endnet")?;
    Ok((net, optimizer))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_net(ws: &[f64], act: Activation) -> Mlp {
        Mlp::new(
            ws.iter()
                .map(|&w| DenseLayer::new(Matrix::from_rows(&[&[w]]), vec![0.0], act).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn forward_examples() {
        let id = Mlp::new(vec![DenseLayer::new(
            Matrix::identity(2),
            vec![0.0; 2],
            Activation::Linear,
        )
        .unwrap()])
        .unwrap();
        assert_eq!(id.forward(&[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);

        let relu = Mlp::new(vec![DenseLayer::new(
            Matrix::identity(2),
            vec![0.0; 2],
            Activation::Relu,
        )
        .unwrap()])
        .unwrap();
        assert_eq!(relu.forward(&[-1.0, 2.0]).unwrap(), vec![0.0, 2.0]);

        let two = scalar_net(&[2.0, 3.0], Activation::Linear);
        assert_eq!(two.forward(&[1.5]).unwrap(), vec![9.0]);

        assert!(two.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn layers_must_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = DenseLayer::random(3, 4, Activation::Relu, &mut rng);
        let b = DenseLayer::random(5, 1, Activation::Linear, &mut rng);
        assert!(Mlp::new(vec![a, b]).is_err());
        assert!(Mlp::new(vec![]).is_err());
    }

    #[test]
    fn backward_scalar_example() {
        let net = scalar_net(&[3.0], Activation::Linear);
        let (g, dx) = net.backward(&[2.0], &[1.0]).unwrap();
        assert_eq!(g.layers[0].dw.as_slice(), &[2.0]);
        assert_eq!(g.layers[0].db, vec![1.0]);
        assert_eq!(dx, vec![3.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Mlp::random(&[4, 8, 3], Activation::Tanh, Activation::Linear, &mut rng);
        let (g, dx) = net.backward(&[0.1, -0.2, 0.3, 0.4], &[0.0; 3]).unwrap();
        assert!(g.is_zero());
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sgd_step_examples() {
        let mut net = scalar_net(&[1.0], Activation::Linear);
        let mut g = GradientSet::zeros_like(&net);
        g.layers[0].dw[(0, 0)] = 0.5;
        apply_gradients(&mut net, &g, &mut Optimizer::Sgd, 0.1).unwrap();
        assert!((net.layers()[0].w[(0, 0)] - 0.95).abs() < 1e-15);

        let before = net.clone();
        apply_gradients(&mut net, &GradientSet::zeros_like(&before), &mut Optimizer::Sgd, 0.1).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn adam_first_step_is_about_learning_rate() {
        let mut net = scalar_net(&[1.0], Activation::Linear);
        let mut opt = Optimizer::adam(&net);
        let mut g = GradientSet::zeros_like(&net);
        g.layers[0].dw[(0, 0)] = 1.0;
        apply_gradients(&mut net, &g, &mut opt, 1e-3).unwrap();
        // m̂ = 1, v̂ = 1 → step = lr / (1 + eps)
        let expected = 1.0 - 1e-3 / (1.0 + 1e-8);
        assert!((net.layers()[0].w[(0, 0)] - expected).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradients_are_rejected() {
        let mut net = scalar_net(&[1.0], Activation::Linear);
        let mut g = GradientSet::zeros_like(&net);
        g.layers[0].db[0] = f64::NAN;
        assert!(matches!(
            apply_gradients(&mut net, &g, &mut Optimizer::Sgd, 0.1),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn soft_update_examples() {
        let online = scalar_net(&[1.0], Activation::Linear);
        let mut target = scalar_net(&[0.0], Activation::Linear);
        soft_update(&mut target, &online, 1e-3).unwrap();
        assert!((target.layers()[0].w[(0, 0)] - 0.001).abs() < 1e-15);

        let mut t1 = scalar_net(&[5.0], Activation::Linear);
        soft_update(&mut t1, &online, 1.0).unwrap();
        assert_eq!(t1, online);

        let mut t0 = scalar_net(&[5.0], Activation::Linear);
        soft_update(&mut t0, &online, 0.0).unwrap();
        assert_eq!(t0, scalar_net(&[5.0], Activation::Linear));

        let mut wrong = scalar_net(&[1.0, 1.0], Activation::Linear);
        assert!(soft_update(&mut wrong, &online, 0.5).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut net = Mlp::random(&[3, 5, 2], Activation::Relu, Activation::Linear, &mut rng);
        let mut opt = Optimizer::adam(&net);
        let (g, _) = net.backward(&[0.3, -0.7, 1.1], &[1.0, -2.0]).unwrap();
        apply_gradients(&mut net, &g, &mut opt, 1e-2).unwrap();

        let mut text = String::new();
        write_net(&mut text, &net, &opt);
        let mut reader = LineReader::new(&text);
        let (net2, opt2) = read_net(&mut reader).unwrap();
        assert_eq!(net, net2);
        assert_eq!(opt, opt2);
        assert!(reader.is_exhausted());
    }

    #[test]
    fn truncated_checkpoint_fails() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::random(&[2, 2], Activation::Relu, Activation::Linear, &mut rng);
        let mut text = String::new();
        write_net(&mut text, &net, &Optimizer::Sgd);
        let cut = &text[..text.len() / 2];
        assert!(read_net(&mut LineReader::new(cut)).is_err());
    }
}
