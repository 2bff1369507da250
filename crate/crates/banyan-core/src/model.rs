//! Learnable parameters and message passing over an induced graph.
//!
//! An embedding is a flat vector of `D = U * K` scalars laid out
//! channel-major: channel `k` occupies `[k*U, (k+1)*U)`. The compose and
//! decompose functions act per channel with weights shared across all
//! channels and tree positions. Two parameterisations exist: dense
//! (concatenate-and-project linear maps) and diagonal (elementwise
//! sigmoid-gated sums).

use rand::Rng;
use serde::Serialize;

use crate::config::{EmbeddingConfig, FunctionKind};
use crate::corpus::TokenId;
use crate::num::Real;
use crate::structure::{Encoder, EntangledGraph, Side};

/// One embedding value: `K` channels of `U` dimensions, stored flat.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelEmbedding<F = f32> {
    pub values: Vec<F>,
}

impl<F: Real> ChannelEmbedding<F> {
    pub fn new(values: Vec<F>) -> Self {
        Self { values }
    }

    pub fn flat(&self) -> &[F] {
        &self.values
    }
}

/// Numerically-stable logistic function.
#[inline]
pub fn sigmoid<F: Real>(x: F) -> F {
    let x = x.into_f64();
    let s = if x >= 0.0 { 1.0 / (1.0 + (-x).exp()) } else { let e = x.exp(); e / (1.0 + e) };
    F::from_f64(s)
}

/// Cosine similarity over flattened embeddings, accumulated in f64 and
/// clamped to [-1, 1]. A zero-norm input yields 0 so degenerate
/// embeddings never outrank a genuinely similar pair.
pub fn cosine<F: Real>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    let mut dot = 0.0f64;
    let mut na = 0.0f64;
    let mut nb = 0.0f64;
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x.into_f64(), y.into_f64());
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return F::zero();
    }
    F::from_f64((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Compose/decompose weights for one of the two parameterisations.
///
/// Doubling as the gradient container: shapes are identical by
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub enum FunctionParams<F> {
    Dense {
        /// [2U, U] row-major.
        compose_w: Vec<F>,
        /// [U].
        compose_b: Vec<F>,
        /// [U, 2U] row-major.
        decompose_w: Vec<F>,
        /// [2U].
        decompose_b: Vec<F>,
    },
    Diag {
        /// [U] each; squashed through a sigmoid before use.
        compose_gate_l: Vec<F>,
        compose_gate_r: Vec<F>,
        compose_b: Vec<F>,
        decompose_gate_l: Vec<F>,
        decompose_gate_r: Vec<F>,
        decompose_b_l: Vec<F>,
        decompose_b_r: Vec<F>,
    },
}

impl<F: Real> FunctionParams<F> {
    pub fn kind(&self) -> FunctionKind {
        match self {
            FunctionParams::Dense { .. } => FunctionKind::Dense,
            FunctionParams::Diag { .. } => FunctionKind::Diag,
        }
    }

    pub fn zeros(kind: FunctionKind, u: usize) -> Self {
        match kind {
            FunctionKind::Dense => FunctionParams::Dense {
                compose_w: vec![F::zero(); 2 * u * u],
                compose_b: vec![F::zero(); u],
                decompose_w: vec![F::zero(); 2 * u * u],
                decompose_b: vec![F::zero(); 2 * u],
            },
            FunctionKind::Diag => FunctionParams::Diag {
                compose_gate_l: vec![F::zero(); u],
                compose_gate_r: vec![F::zero(); u],
                compose_b: vec![F::zero(); u],
                decompose_gate_l: vec![F::zero(); u],
                decompose_gate_r: vec![F::zero(); u],
                decompose_b_l: vec![F::zero(); u],
                decompose_b_r: vec![F::zero(); u],
            },
        }
    }

    /// Tensors in serialization order.
    pub fn tensors(&self) -> Vec<(&'static str, &[F])> {
        match self {
            FunctionParams::Dense { compose_w, compose_b, decompose_w, decompose_b } => vec![
                ("compose_w", compose_w.as_slice()),
                ("compose_b", compose_b.as_slice()),
                ("decompose_w", decompose_w.as_slice()),
                ("decompose_b", decompose_b.as_slice()),
            ],
            FunctionParams::Diag {
                compose_gate_l,
                compose_gate_r,
                compose_b,
                decompose_gate_l,
                decompose_gate_r,
                decompose_b_l,
                decompose_b_r,
            } => vec![
                ("compose_gate_l", compose_gate_l.as_slice()),
                ("compose_gate_r", compose_gate_r.as_slice()),
                ("compose_b", compose_b.as_slice()),
                ("decompose_gate_l", decompose_gate_l.as_slice()),
                ("decompose_gate_r", decompose_gate_r.as_slice()),
                ("decompose_b_l", decompose_b_l.as_slice()),
                ("decompose_b_r", decompose_b_r.as_slice()),
            ],
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Vec<F>)> {
        match self {
            FunctionParams::Dense { compose_w, compose_b, decompose_w, decompose_b } => vec![
                ("compose_w", compose_w),
                ("compose_b", compose_b),
                ("decompose_w", decompose_w),
                ("decompose_b", decompose_b),
            ],
            FunctionParams::Diag {
                compose_gate_l,
                compose_gate_r,
                compose_b,
                decompose_gate_l,
                decompose_gate_r,
                decompose_b_l,
                decompose_b_r,
            } => vec![
                ("compose_gate_l", compose_gate_l),
                ("compose_gate_r", compose_gate_r),
                ("compose_b", compose_b),
                ("decompose_gate_l", decompose_gate_l),
                ("decompose_gate_r", decompose_gate_r),
                ("decompose_b_l", decompose_b_l),
                ("decompose_b_r", decompose_b_r),
            ],
        }
    }
}

/// Merge two spans into one embedding. `left`/`right` are full flat
/// embeddings; output has the same shape.
pub fn compose<F: Real>(
    cfg: &EmbeddingConfig,
    functions: &FunctionParams<F>,
    left: &[F],
    right: &[F],
) -> Vec<F> {
    let (u, d) = (cfg.channel_size, cfg.dim());
    assert_eq!(left.len(), d, "left operand has wrong dimension");
    assert_eq!(right.len(), d, "right operand has wrong dimension");
    let mut out = vec![F::zero(); d];
    match functions {
        FunctionParams::Dense { compose_w, compose_b, .. } => {
            for k in 0..cfg.channels {
                let base = k * u;
                for j in 0..u {
                    let mut acc = compose_b[j];
                    for a in 0..u {
                        acc = acc + left[base + a] * compose_w[a * u + j];
                        acc = acc + right[base + a] * compose_w[(u + a) * u + j];
                    }
                    out[base + j] = acc;
                }
            }
        }
        FunctionParams::Diag { compose_gate_l, compose_gate_r, compose_b, .. } => {
            for k in 0..cfg.channels {
                let base = k * u;
                for j in 0..u {
                    out[base + j] = left[base + j] * sigmoid(compose_gate_l[j])
                        + right[base + j] * sigmoid(compose_gate_r[j])
                        + compose_b[j];
                }
            }
        }
    }
    out
}

/// Split a span embedding into left and right child messages.
pub fn decompose<F: Real>(
    cfg: &EmbeddingConfig,
    functions: &FunctionParams<F>,
    parent: &[F],
) -> (Vec<F>, Vec<F>) {
    let (u, d) = (cfg.channel_size, cfg.dim());
    assert_eq!(parent.len(), d, "parent has wrong dimension");
    let mut left = vec![F::zero(); d];
    let mut right = vec![F::zero(); d];
    match functions {
        FunctionParams::Dense { decompose_w, decompose_b, .. } => {
            for k in 0..cfg.channels {
                let base = k * u;
                for j in 0..2 * u {
                    let mut acc = decompose_b[j];
                    for a in 0..u {
                        acc = acc + parent[base + a] * decompose_w[a * 2 * u + j];
                    }
                    if j < u {
                        left[base + j] = acc;
                    } else {
                        right[base + j - u] = acc;
                    }
                }
            }
        }
        FunctionParams::Diag {
            decompose_gate_l, decompose_gate_r, decompose_b_l, decompose_b_r, ..
        } => {
            for k in 0..cfg.channels {
                let base = k * u;
                for j in 0..u {
                    left[base + j] = parent[base + j] * sigmoid(decompose_gate_l[j]) + decompose_b_l[j];
                    right[base + j] = parent[base + j] * sigmoid(decompose_gate_r[j]) + decompose_b_r[j];
                }
            }
        }
    }
    (left, right)
}

/// All learnable tensors: the embedding matrix, the dembedding matrix,
/// and the compose/decompose functions.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<F = f32> {
    pub config: EmbeddingConfig,
    pub vocab_size: usize,
    /// [V, D] row-major embedding matrix.
    pub embed: Vec<F>,
    /// [D, V] row-major dembedding matrix.
    pub dembed: Vec<F>,
    pub functions: FunctionParams<F>,
}

impl<F: Real> Parameters<F> {
    /// Fresh parameters: embedding matrices uniform in `[-init_range,
    /// init_range]`, diagonal gates at 0 (a neutral sigmoid of 0.5),
    /// dense weights uniform like the embeddings, biases 0.
    pub fn init(
        config: EmbeddingConfig,
        vocab_size: usize,
        kind: FunctionKind,
        init_range: f64,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(vocab_size >= 1, "vocabulary must be non-empty");
        let d = config.dim();
        let mut sample = |n: usize| -> Vec<F> {
            (0..n).map(|_| F::from_f64(rng.gen_range(-init_range..=init_range))).collect()
        };
        let embed = sample(vocab_size * d);
        let dembed = sample(d * vocab_size);
        let u = config.channel_size;
        let functions = match kind {
            FunctionKind::Dense => FunctionParams::Dense {
                compose_w: sample(2 * u * u),
                compose_b: vec![F::zero(); u],
                decompose_w: sample(2 * u * u),
                decompose_b: vec![F::zero(); 2 * u],
            },
            FunctionKind::Diag => FunctionParams::zeros(FunctionKind::Diag, u),
        };
        Self { config, vocab_size, embed, dembed, functions }
    }

    /// Same shapes, all zeros. Gradient buffers are built this way.
    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config,
            vocab_size: self.vocab_size,
            embed: vec![F::zero(); self.embed.len()],
            dembed: vec![F::zero(); self.dembed.len()],
            functions: FunctionParams::zeros(self.functions.kind(), self.config.channel_size),
        }
    }

    pub fn cast<G: Real>(&self) -> Parameters<G> {
        fn conv<F: Real, G: Real>(v: &[F]) -> Vec<G> {
            v.iter().map(|&x| G::from_f64(x.into_f64())).collect()
        }
        let functions = match &self.functions {
            FunctionParams::Dense { compose_w, compose_b, decompose_w, decompose_b } => {
                FunctionParams::Dense {
                    compose_w: conv(compose_w),
                    compose_b: conv(compose_b),
                    decompose_w: conv(decompose_w),
                    decompose_b: conv(decompose_b),
                }
            }
            FunctionParams::Diag {
                compose_gate_l,
                compose_gate_r,
                compose_b,
                decompose_gate_l,
                decompose_gate_r,
                decompose_b_l,
                decompose_b_r,
            } => FunctionParams::Diag {
                compose_gate_l: conv(compose_gate_l),
                compose_gate_r: conv(compose_gate_r),
                compose_b: conv(compose_b),
                decompose_gate_l: conv(decompose_gate_l),
                decompose_gate_r: conv(decompose_gate_r),
                decompose_b_l: conv(decompose_b_l),
                decompose_b_r: conv(decompose_b_r),
            },
        };
        Parameters {
            config: self.config,
            vocab_size: self.vocab_size,
            embed: conv(&self.embed),
            dembed: conv(&self.dembed),
            functions,
        }
    }

    /// All tensors in checkpoint order: embed, functions, dembed.
    pub fn tensors(&self) -> Vec<(&'static str, &[F])> {
        let mut out = vec![("embed", self.embed.as_slice())];
        out.extend(self.functions.tensors());
        out.push(("dembed", self.dembed.as_slice()));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Vec<F>)> {
        let mut out: Vec<(&'static str, &mut Vec<F>)> = vec![("embed", &mut self.embed)];
        out.extend(self.functions.tensors_mut());
        out.push(("dembed", &mut self.dembed));
        out
    }

    pub fn non_embedding_scalars(&self) -> usize {
        self.functions.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn embedding_scalars(&self) -> usize {
        self.embed.len() + self.dembed.len()
    }

    /// Leaf embedding: the token's row of the embedding matrix.
    pub fn embed_token(&self, token: TokenId) -> Vec<F> {
        let d = self.config.dim();
        let row = token as usize;
        assert!(row < self.vocab_size, "token id {token} out of range");
        self.embed[row * d..(row + 1) * d].to_vec()
    }

    pub fn compose(&self, left: &[F], right: &[F]) -> Vec<F> {
        compose(&self.config, &self.functions, left, right)
    }

    pub fn decompose(&self, parent: &[F]) -> (Vec<F>, Vec<F>) {
        decompose(&self.config, &self.functions, parent)
    }

    /// Token logits from a (downward) embedding.
    pub fn dembed(&self, down: &[F]) -> Vec<F> {
        let d = self.config.dim();
        let v = self.vocab_size;
        assert_eq!(down.len(), d, "embedding has wrong dimension");
        let mut logits = vec![F::zero(); v];
        for (i, &x) in down.iter().enumerate() {
            let row = &self.dembed[i * v..(i + 1) * v];
            for (l, &w) in logits.iter_mut().zip(row) {
                *l = *l + x * w;
            }
        }
        logits
    }
}

/// Adapter so induction and the eval-mode passes run straight off the
/// parameters.
pub struct ModelEncoder<'a, F> {
    pub params: &'a Parameters<F>,
}

impl<F: Real> Encoder<F> for ModelEncoder<'_, F> {
    fn leaf(&self, token: TokenId) -> Vec<F> {
        self.params.embed_token(token)
    }
    fn compose(&self, left: &[F], right: &[F]) -> Vec<F> {
        self.params.compose(left, right)
    }
}

/// Upward embeddings for every node, computed through an arbitrary
/// encoder in topological order. Dedup means each node is composed
/// exactly once, so upward embeddings are non-contextual by construction.
pub fn upward_with<F: Real>(graph: &EntangledGraph, encoder: &impl Encoder<F>) -> Vec<Vec<F>> {
    let mut up: Vec<Vec<F>> = vec![Vec::new(); graph.nodes.len()];
    for &id in &graph.topo_up {
        up[id] = match graph.nodes[id].children {
            None => encoder.leaf(graph.nodes[id].token.expect("leaf token")),
            Some((l, r)) => encoder.compose(&up[l], &up[r]),
        };
    }
    up
}

/// Eval-mode upward pass off the model parameters.
pub fn upward_pass<F: Real>(graph: &EntangledGraph, params: &Parameters<F>) -> Vec<Vec<F>> {
    upward_with(graph, &ModelEncoder { params })
}

/// Eval-mode downward pass: roots start from their upward embedding and
/// every node resolves to the occurrence-weighted mean of the messages
/// its contexts send it (a node that roots `r` sentences counts its own
/// upward embedding with weight `r`).
///
/// Messages are accumulated in f64, root contribution first and then
/// parents in ascending (parent, side) order, so results are
/// deterministic.
pub fn downward_pass<F: Real>(
    graph: &EntangledGraph,
    up: &[Vec<F>],
    params: &Parameters<F>,
) -> Vec<Vec<F>> {
    let d = params.config.dim();
    let n = graph.nodes.len();
    let mut down: Vec<Vec<F>> = vec![Vec::new(); n];
    let mut messages: Vec<Option<(Vec<F>, Vec<F>)>> = vec![None; n];
    let mut acc = vec![0.0f64; d];

    for &id in graph.topo_up.iter().rev() {
        let node = &graph.nodes[id];
        let total = node.root_count as f64
            + node.parents.iter().map(|c| c.count as f64).sum::<f64>();
        debug_assert!(total > 0.0, "node {id} has no context");
        acc.iter_mut().for_each(|a| *a = 0.0);
        if node.root_count > 0 {
            let w = node.root_count as f64;
            for (a, &v) in acc.iter_mut().zip(&up[id]) {
                *a += w * v.into_f64();
            }
        }
        for ctx in &node.parents {
            if messages[ctx.parent].is_none() {
                messages[ctx.parent] = Some(params.decompose(&down[ctx.parent]));
            }
            let (left, right) = messages[ctx.parent].as_ref().unwrap();
            let msg = match ctx.side {
                Side::Left => left,
                Side::Right => right,
            };
            let w = ctx.count as f64;
            for (a, &v) in acc.iter_mut().zip(msg) {
                *a += w * v.into_f64();
            }
        }
        down[id] = acc.iter().map(|&a| F::from_f64(a / total)).collect();
    }
    down
}
