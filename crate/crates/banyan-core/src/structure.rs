//! Structure induction over a batch of token sequences.
//!
//! Two variants share one graph container:
//!
//! * [`induce_entangled`] greedily merges the most cosine-similar adjacent
//!   frontier pair anywhere in the batch, deduplicating nodes by their span
//!   signature so every distinct span exists exactly once. Repeated spans
//!   accumulate multiple parent contexts instead of duplicate nodes.
//! * [`induce_sentential`] builds an independent binary tree per sentence
//!   with no sharing at all (the classic per-sentence baseline).
//!
//! Merges never cross sentence boundaries; the "global" aspect of the
//! entangled frontier is the shared signature table plus the rule that one
//! merge step rewrites *every* occurrence of the chosen pair.

use std::collections::HashMap;

use serde::Serialize;

use crate::corpus::{Batch, TokenId};
use crate::model::cosine;
use crate::num::Real;

/// Canonical identity of a span: the token ids it covers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct SpanSignature(pub Vec<TokenId>);

impl SpanSignature {
    pub fn leaf(token: TokenId) -> Self {
        Self(vec![token])
    }

    /// Signature of a composition: left ids followed by right ids.
    pub fn join(left: &SpanSignature, right: &SpanSignature) -> Self {
        let mut ids = Vec::with_capacity(left.0.len() + right.0.len());
        ids.extend_from_slice(&left.0);
        ids.extend_from_slice(&right.0);
        Self(ids)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Which child slot a node occupies under a parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// One distinct context a node occurs in: a parent, the side under it, and
/// how many batch occurrences that context covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParentContext {
    pub parent: usize,
    pub side: Side,
    pub count: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphNode {
    pub id: usize,
    pub signature: SpanSignature,
    /// `None` for leaves, `(left, right)` node ids otherwise.
    pub children: Option<(usize, usize)>,
    /// Distinct parent contexts, sorted by (parent, side).
    pub parents: Vec<ParentContext>,
    /// Token id when this node is a leaf.
    pub token: Option<TokenId>,
    /// How many batch sentences reduce to exactly this node.
    pub root_count: u32,
}

impl GraphNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }
}

/// Deduplicated DAG of spans induced over one batch.
#[derive(Debug, Clone, Serialize)]
pub struct EntangledGraph {
    pub nodes: Vec<GraphNode>,
    /// Distinct whole-sentence nodes, in order of first appearance. A root
    /// may still have parents when one sentence is a span of another.
    pub roots: Vec<usize>,
    /// Per-sentence root node id.
    pub sentence_roots: Vec<usize>,
    /// Node ids with every child preceding its parents.
    pub topo_up: Vec<usize>,
    /// `leaf_occurrences[s][i]` is the leaf node at position `i` of
    /// sentence `s`.
    pub leaf_occurrences: Vec<Vec<usize>>,
}

impl EntangledGraph {
    pub fn count_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    /// Structural sanity checks used by tests and the export path.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.nodes.len();
        if self.topo_up.len() != n {
            return Err("topo_up must cover every node".into());
        }
        let mut seen = vec![false; n];
        for &id in &self.topo_up {
            if let Some((l, r)) = self.nodes[id].children {
                if !seen[l] || !seen[r] {
                    return Err(format!("node {id} appears before a child in topo_up"));
                }
            }
            seen[id] = true;
        }
        for node in &self.nodes {
            match node.children {
                Some((l, r)) => {
                    let joined =
                        SpanSignature::join(&self.nodes[l].signature, &self.nodes[r].signature);
                    if joined != node.signature {
                        return Err(format!("node {} signature is not the join of its children", node.id));
                    }
                    if node.token.is_some() {
                        return Err(format!("internal node {} carries a token", node.id));
                    }
                }
                None => {
                    if node.signature.len() != 1 || node.token.is_none() {
                        return Err(format!("leaf {} must cover exactly one token", node.id));
                    }
                }
            }
            if node.root_count == 0 && node.parents.is_empty() {
                return Err(format!("node {} is neither a root nor a child", node.id));
            }
        }
        for (s, occ) in self.leaf_occurrences.iter().enumerate() {
            let root = &self.nodes[self.sentence_roots[s]];
            let ids: Vec<TokenId> =
                occ.iter().map(|&leaf| self.nodes[leaf].token.expect("leaf")).collect();
            if root.signature.0 != ids {
                return Err(format!("sentence {s} root signature does not spell the sentence"));
            }
        }
        Ok(())
    }
}

/// Provides the embeddings that drive merge decisions: leaf lookups and
/// the composition applied when two spans merge.
pub trait Encoder<F: Real> {
    fn leaf(&self, token: TokenId) -> Vec<F>;
    fn compose(&self, left: &[F], right: &[F]) -> Vec<F>;
}

/// Location of an adjacent frontier pair: `(sentence, index)` where the
/// pair spans frontier slots `index` and `index + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairPos {
    pub sentence: usize,
    pub index: usize,
}

/// Most-similar adjacent pair across all sentences, given per-sentence
/// pair similarities. Ties break to the smallest (sentence, index).
pub fn argmax_adjacent<F: Real>(pair_sims: &[Vec<F>]) -> Option<PairPos> {
    let mut best: Option<(PairPos, F)> = None;
    for (sentence, sims) in pair_sims.iter().enumerate() {
        for (index, &sim) in sims.iter().enumerate() {
            let better = match best {
                None => true,
                Some((_, best_sim)) => sim > best_sim,
            };
            if better {
                best = Some((PairPos { sentence, index }, sim));
            }
        }
    }
    best.map(|(pos, _)| pos)
}

struct Builder<F: Real> {
    nodes: Vec<GraphNode>,
    embeddings: Vec<Vec<F>>,
}

impl<F: Real> Builder<F> {
    fn new() -> Self {
        Self { nodes: Vec::new(), embeddings: Vec::new() }
    }

    fn add_leaf(&mut self, token: TokenId, embedding: Vec<F>) -> usize {
        let id = self.nodes.len();
        self.nodes.push(GraphNode {
            id,
            signature: SpanSignature::leaf(token),
            children: None,
            parents: Vec::new(),
            token: Some(token),
            root_count: 0,
        });
        self.embeddings.push(embedding);
        id
    }

    fn add_composition(&mut self, left: usize, right: usize, embedding: Vec<F>) -> usize {
        let id = self.nodes.len();
        let signature =
            SpanSignature::join(&self.nodes[left].signature, &self.nodes[right].signature);
        self.nodes.push(GraphNode {
            id,
            signature,
            children: Some((left, right)),
            parents: Vec::new(),
            token: None,
            root_count: 0,
        });
        self.embeddings.push(embedding);
        id
    }

    fn add_context(&mut self, child: usize, parent: usize, side: Side) {
        let parents = &mut self.nodes[child].parents;
        match parents.iter_mut().find(|c| c.parent == parent && c.side == side) {
            Some(ctx) => ctx.count += 1,
            None => parents.push(ParentContext { parent, side, count: 1 }),
        }
    }

    fn finish(mut self, frontiers: &[Vec<usize>], leaf_occurrences: Vec<Vec<usize>>) -> EntangledGraph {
        let mut roots = Vec::new();
        let mut sentence_roots = Vec::with_capacity(frontiers.len());
        for frontier in frontiers {
            debug_assert_eq!(frontier.len(), 1);
            let root = frontier[0];
            sentence_roots.push(root);
            if self.nodes[root].root_count == 0 {
                roots.push(root);
            }
            self.nodes[root].root_count += 1;
        }
        // Deterministic downward aggregation order.
        for node in &mut self.nodes {
            node.parents.sort_by_key(|c| (c.parent, c.side));
        }
        let topo_up = (0..self.nodes.len()).collect();
        EntangledGraph { nodes: self.nodes, roots, sentence_roots, topo_up, leaf_occurrences }
    }
}

fn pair_sims<F: Real>(builder: &Builder<F>, frontier: &[usize]) -> Vec<F> {
    frontier
        .windows(2)
        .map(|w| cosine(&builder.embeddings[w[0]], &builder.embeddings[w[1]]))
        .collect()
}

/// Induce the batch-wide deduplicated DAG.
///
/// Leaves are deduplicated across the batch at initialisation (one node
/// per distinct token id). Each step merges the most similar adjacent
/// pair; every occurrence of that pair across all frontiers collapses in
/// the same step (left-to-right, non-overlapping within a sentence), and
/// a pair whose joint signature already has a node reuses it.
pub fn induce_entangled<F: Real>(batch: &Batch, encoder: &impl Encoder<F>) -> EntangledGraph {
    let mut builder = Builder::new();
    let mut leaf_by_token: HashMap<TokenId, usize> = HashMap::new();
    let mut sig_table: HashMap<SpanSignature, usize> = HashMap::new();

    let mut frontiers: Vec<Vec<usize>> = Vec::with_capacity(batch.sequences.len());
    let mut leaf_occurrences: Vec<Vec<usize>> = Vec::with_capacity(batch.sequences.len());
    for seq in &batch.sequences {
        let ids: Vec<usize> = seq
            .ids
            .iter()
            .map(|&tok| {
                *leaf_by_token.entry(tok).or_insert_with(|| {
                    let id = builder.add_leaf(tok, encoder.leaf(tok));
                    sig_table.insert(SpanSignature::leaf(tok), id);
                    id
                })
            })
            .collect();
        frontiers.push(ids.clone());
        leaf_occurrences.push(ids);
    }

    let mut sims: Vec<Vec<F>> = frontiers.iter().map(|f| pair_sims(&builder, f)).collect();

    while let Some(pos) = argmax_adjacent(&sims) {
        let left = frontiers[pos.sentence][pos.index];
        let right = frontiers[pos.sentence][pos.index + 1];
        let joint = SpanSignature::join(
            &builder.nodes[left].signature,
            &builder.nodes[right].signature,
        );
        let parent = match sig_table.get(&joint) {
            Some(&existing) => existing,
            None => {
                let emb = encoder.compose(&builder.embeddings[left], &builder.embeddings[right]);
                let id = builder.add_composition(left, right, emb);
                sig_table.insert(joint, id);
                id
            }
        };

        // Rewrite every occurrence of (left, right) in one step.
        for s in 0..frontiers.len() {
            let frontier = &frontiers[s];
            if frontier.len() < 2 {
                continue;
            }
            let mut replaced = Vec::new();
            let mut j = 0;
            let mut touched = false;
            while j < frontier.len() {
                if j + 1 < frontier.len() && frontier[j] == left && frontier[j + 1] == right {
                    replaced.push(parent);
                    builder.add_context(left, parent, Side::Left);
                    builder.add_context(right, parent, Side::Right);
                    touched = true;
                    j += 2;
                } else {
                    replaced.push(frontier[j]);
                    j += 1;
                }
            }
            if touched {
                frontiers[s] = replaced;
                sims[s] = pair_sims(&builder, &frontiers[s]);
            }
        }
    }

    builder.finish(&frontiers, leaf_occurrences)
}

/// Induce one independent binary tree per sentence with no node sharing:
/// every token occurrence and every composition is its own node.
pub fn induce_sentential<F: Real>(batch: &Batch, encoder: &impl Encoder<F>) -> EntangledGraph {
    let mut builder = Builder::new();
    let mut frontiers: Vec<Vec<usize>> = Vec::with_capacity(batch.sequences.len());
    let mut leaf_occurrences: Vec<Vec<usize>> = Vec::with_capacity(batch.sequences.len());

    for seq in &batch.sequences {
        let ids: Vec<usize> =
            seq.ids.iter().map(|&tok| builder.add_leaf(tok, encoder.leaf(tok))).collect();
        leaf_occurrences.push(ids.clone());
        let mut frontier = ids;
        let mut sims = pair_sims(&builder, &frontier);
        while let Some(pos) = argmax_adjacent(std::slice::from_ref(&sims)) {
            let left = frontier[pos.index];
            let right = frontier[pos.index + 1];
            let emb = encoder.compose(&builder.embeddings[left], &builder.embeddings[right]);
            let parent = builder.add_composition(left, right, emb);
            builder.add_context(left, parent, Side::Left);
            builder.add_context(right, parent, Side::Right);
            frontier.splice(pos.index..pos.index + 2, [parent]);
            sims = pair_sims(&builder, &frontier);
        }
        frontiers.push(frontier);
    }

    builder.finish(&frontiers, leaf_occurrences)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::TokenSequence;

    /// Test encoder with hand-picked leaf vectors; composition is
    /// elementwise addition so pair similarities stay hand-computable.
    struct FixedEncoder {
        leaves: HashMap<TokenId, Vec<f64>>,
    }

    impl FixedEncoder {
        fn new(leaves: &[(TokenId, &[f64])]) -> Self {
            Self { leaves: leaves.iter().map(|(t, v)| (*t, v.to_vec())).collect() }
        }
    }

    impl Encoder<f64> for FixedEncoder {
        fn leaf(&self, token: TokenId) -> Vec<f64> {
            self.leaves[&token].clone()
        }
        fn compose(&self, left: &[f64], right: &[f64]) -> Vec<f64> {
            left.iter().zip(right).map(|(a, b)| a + b).collect()
        }
    }

    /// Deterministic pseudo-random encoder for property tests.
    struct HashEncoder;

    impl Encoder<f64> for HashEncoder {
        fn leaf(&self, token: TokenId) -> Vec<f64> {
            let mut state = token as u64 ^ 0x5851_f42d_4c95_7f2d;
            (0..4)
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
                })
                .collect()
        }
        fn compose(&self, left: &[f64], right: &[f64]) -> Vec<f64> {
            left.iter().zip(right).map(|(a, b)| 0.7 * a + 0.3 * b + 0.01).collect()
        }
    }

    fn batch(sentences: &[&[TokenId]]) -> Batch {
        Batch::from_sequences(
            sentences.iter().map(|ids| TokenSequence::new(ids.to_vec()).unwrap()).collect(),
        )
    }

    #[test]
    fn duplicate_sentences_share_everything() {
        let b = batch(&[&[1, 2], &[1, 2]]);
        let g = induce_entangled(&b, &HashEncoder);
        g.validate().unwrap();
        assert_eq!(g.count_nodes(), 3);
        assert_eq!(g.roots.len(), 1);
        let root = &g.nodes[g.roots[0]];
        assert_eq!(root.root_count, 2);
        // Both occurrences collapse in one step: each child context counts 2.
        let (l, r) = root.children.unwrap();
        assert_eq!(g.nodes[l].parents, vec![ParentContext { parent: root.id, side: Side::Left, count: 2 }]);
        assert_eq!(g.nodes[r].parents, vec![ParentContext { parent: root.id, side: Side::Right, count: 2 }]);
    }

    #[test]
    fn single_token_sentence_is_its_own_root() {
        let g = induce_entangled(&batch(&[&[5]]), &HashEncoder);
        g.validate().unwrap();
        assert_eq!(g.count_nodes(), 1);
        assert_eq!(g.roots, vec![0]);
        assert!(g.nodes[0].is_leaf());
    }

    #[test]
    fn sentential_never_shares() {
        let b = batch(&[&[1, 2], &[1, 2]]);
        let g = induce_sentential(&b, &HashEncoder);
        g.validate().unwrap();
        assert_eq!(g.count_nodes(), 6);
        assert_eq!(g.roots.len(), 2);
    }

    #[test]
    fn sentential_node_count_identity() {
        let b = batch(&[&[1, 2, 3], &[4], &[5, 6, 7, 8, 9]]);
        let g = induce_sentential(&b, &HashEncoder);
        let expected: usize = b.sequences.iter().map(|s| 2 * s.len() - 1).sum();
        assert_eq!(g.count_nodes(), expected);
    }

    #[test]
    fn all_distinct_tokens_entangle_nothing() {
        let b = batch(&[&[1, 2, 3], &[4, 5]]);
        let ent = induce_entangled(&b, &HashEncoder);
        let sen = induce_sentential(&b, &HashEncoder);
        assert_eq!(ent.count_nodes(), sen.count_nodes());
    }

    #[test]
    fn argmax_prefers_leftmost_on_ties() {
        let sims = vec![vec![0.1, 0.9, 0.9]];
        assert_eq!(argmax_adjacent(&sims), Some(PairPos { sentence: 0, index: 1 }));
        let single = vec![vec![0.4]];
        assert_eq!(argmax_adjacent(&single), Some(PairPos { sentence: 0, index: 0 }));
        let across = vec![vec![0.9], vec![0.9]];
        assert_eq!(argmax_adjacent(&across), Some(PairPos { sentence: 0, index: 0 }));
        assert_eq!(argmax_adjacent::<f64>(&[vec![], vec![]]), None);
    }

    #[test]
    fn golden_merge_sequence_from_rigged_cosines() {
        // cos(a,b) = 0, cos(b,c) ~ 0.894, cos(c,d) = 0 so the merge order
        // is (b,c), then (a,bc) by the leftmost zero-tie, then the root.
        let enc = FixedEncoder::new(&[
            (1, &[1.0, 0.0, 0.0, 0.0]),
            (2, &[0.0, 1.0, 0.0, 0.0]),
            (3, &[0.0, 1.0, 0.5, 0.0]),
            (4, &[0.0, 0.0, 0.0, 1.0]),
        ]);
        let g = induce_entangled(&batch(&[&[1, 2, 3, 4]]), &enc);
        g.validate().unwrap();
        assert_eq!(g.count_nodes(), 7);
        let root = &g.nodes[g.roots[0]];
        assert_eq!(root.signature.0, vec![1, 2, 3, 4]);
        let (abc, d) = root.children.unwrap();
        assert_eq!(g.nodes[d].token, Some(4));
        let (a, bc) = g.nodes[abc].children.unwrap();
        assert_eq!(g.nodes[a].token, Some(1));
        let (b, c) = g.nodes[bc].children.unwrap();
        assert_eq!(g.nodes[b].token, Some(2));
        assert_eq!(g.nodes[c].token, Some(3));
    }

    #[test]
    fn shared_prefix_collects_two_contexts() {
        // "p q x" / "p q y": (p,q) merges first in both sentences, after
        // which the shared node gains one left-context per final merge.
        let enc = FixedEncoder::new(&[
            (1, &[1.0, 0.0, 0.0, 0.0]),
            (2, &[1.0, 0.2, 0.0, 0.0]),
            (3, &[0.0, 0.0, 1.0, 0.0]),
            (4, &[0.0, 0.0, 0.0, 1.0]),
        ]);
        let g = induce_entangled(&batch(&[&[1, 2, 3], &[1, 2, 4]]), &enc);
        g.validate().unwrap();
        assert_eq!(g.count_nodes(), 7);
        let pq = g.nodes.iter().find(|n| n.signature.0 == vec![1, 2]).unwrap();
        assert_eq!(pq.parents.len(), 2);
        assert!(pq.parents.iter().all(|c| c.side == Side::Left && c.count == 1));
        assert_eq!(g.roots.len(), 2);
    }

    #[test]
    fn overlapping_occurrences_replace_left_to_right() {
        let g = induce_entangled(&batch(&[&[7, 7, 7]]), &HashEncoder);
        g.validate().unwrap();
        // One shared leaf, the pair node, and the sentence root.
        assert_eq!(g.count_nodes(), 3);
        let pair = g.nodes.iter().find(|n| n.signature.0 == vec![7, 7]).unwrap();
        let leaf = &g.nodes[g.leaf_occurrences[0][0]];
        // Leaf occurs under the pair on both sides and under the root.
        assert!(leaf.parents.iter().any(|c| c.parent == pair.id && c.side == Side::Left));
        assert!(leaf.parents.iter().any(|c| c.parent == pair.id && c.side == Side::Right));
    }

    #[test]
    fn whole_sentence_nested_in_another_still_roots() {
        // "a b" is both a full sentence and a span of "a b c".
        let enc = FixedEncoder::new(&[
            (1, &[1.0, 0.0, 0.0, 0.0]),
            (2, &[1.0, 0.1, 0.0, 0.0]),
            (3, &[0.0, 0.0, 1.0, 0.0]),
        ]);
        let g = induce_entangled(&batch(&[&[1, 2, 3], &[1, 2]]), &enc);
        g.validate().unwrap();
        assert_eq!(g.roots.len(), 2);
        let ab = g.nodes.iter().find(|n| n.signature.0 == vec![1, 2]).unwrap();
        assert_eq!(ab.root_count, 1);
        assert_eq!(ab.parents.len(), 1);
    }

    #[test]
    fn induction_is_deterministic() {
        let b = batch(&[&[1, 2, 3, 1, 2], &[2, 2, 4], &[1]]);
        let g1 = induce_entangled(&b, &HashEncoder);
        let g2 = induce_entangled(&b, &HashEncoder);
        assert_eq!(g1.to_json(), g2.to_json());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;
        use std::collections::HashSet;

        fn batches() -> impl Strategy<Value = Batch> {
            proptest::collection::vec(proptest::collection::vec(0u32..8, 1..8), 1..6)
                .prop_map(|sentences| {
                    Batch::from_sequences(
                        sentences.into_iter().map(|ids| TokenSequence::new(ids).unwrap()).collect(),
                    )
                })
        }

        proptest! {
            #[test]
            fn entangled_signatures_are_unique(b in batches()) {
                let g = induce_entangled(&b, &HashEncoder);
                let sigs: HashSet<_> = g.nodes.iter().map(|n| n.signature.clone()).collect();
                prop_assert_eq!(sigs.len(), g.nodes.len());
            }

            #[test]
            fn graphs_validate_and_cover_every_position(b in batches()) {
                for g in [induce_entangled(&b, &HashEncoder), induce_sentential(&b, &HashEncoder)] {
                    prop_assert!(g.validate().is_ok());
                    prop_assert_eq!(g.leaf_occurrences.len(), b.sequences.len());
                    for (s, seq) in b.sequences.iter().enumerate() {
                        prop_assert_eq!(g.leaf_occurrences[s].len(), seq.len());
                        for (i, &leaf) in g.leaf_occurrences[s].iter().enumerate() {
                            prop_assert_eq!(g.nodes[leaf].token, Some(seq.ids[i]));
                        }
                    }
                }
            }

            #[test]
            fn entangled_never_exceeds_sentential(b in batches()) {
                let ent = induce_entangled(&b, &HashEncoder);
                let sen = induce_sentential(&b, &HashEncoder);
                prop_assert!(ent.count_nodes() <= sen.count_nodes());
                let expected: usize = b.sequences.iter().map(|s| 2 * s.len() - 1).sum();
                prop_assert_eq!(sen.count_nodes(), expected);
            }
        }
    }
}
