//! Context structure for multi-hop reasoning: supporting documents interleaved
//! with noise, relative orders over the supporting documents, and the
//! repetition augmentation with its order-coverage guarantee.
//!
//! A context is a document sequence `(n_0, d_1, n_1, ..., d_k, n_k)` where the
//! `d_i` are the k supporting documents of a reasoning chain and each `n_i` is
//! a run of zero or more noisy documents. Repeating the whole context k times
//! makes every relative order of the supporting documents reachable as an
//! increasing subsequence; [`verify_order_coverage`] checks that exhaustively
//! and [`extract_order_witness`] produces the explicit selection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Enumeration guard: orders are enumerated exhaustively, so k is capped well
/// below where k! becomes unreasonable. Experiments never exceed k = 5.
pub const MAX_ENUMERABLE_K: usize = 8;

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("document {0} is not a supporting document")]
    RoleError(String),
    #[error("cannot enumerate orders for k = {0}; supported range is 1..={MAX_ENUMERABLE_K}")]
    CardinalityGuard(usize),
    #[error("repetition count must be at least 1")]
    InvalidRepetition,
    #[error("canonical witness needs one repetition block per supporting document: k_hat = {k_hat} < k = {k}")]
    WitnessUnavailable { k_hat: usize, k: usize },
    #[error("invalid document: {0}")]
    InvalidDocument(String),
    #[error("invalid context: {0}")]
    InvalidContext(String),
}

/// Whether a document carries a step of the gold reasoning chain or is a
/// distractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Supporting,
    Noisy,
}

/// One unit of context text.
///
/// Supporting documents carry a 1-based `hop_index` giving their position in
/// the gold reasoning chain (hop 1 is the first reasoning step from the
/// question). Noisy documents never carry one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Document {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub text: String,
    pub role: Role,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hop_index: Option<usize>,
}

impl Document {
    pub fn supporting(
        id: impl Into<String>,
        text: impl Into<String>,
        hop_index: usize,
    ) -> Result<Self, ContextError> {
        Self::new(id, None, text, Role::Supporting, Some(hop_index))
    }

    pub fn noisy(id: impl Into<String>, text: impl Into<String>) -> Result<Self, ContextError> {
        Self::new(id, None, text, Role::Noisy, None)
    }

    pub fn new(
        id: impl Into<String>,
        title: Option<String>,
        text: impl Into<String>,
        role: Role,
        hop_index: Option<usize>,
    ) -> Result<Self, ContextError> {
        let doc = Document {
            id: id.into(),
            title,
            text: text.into(),
            role,
            hop_index,
        };
        doc.validate()?;
        Ok(doc)
    }

    fn validate(&self) -> Result<(), ContextError> {
        if self.text.trim().is_empty() {
            return Err(ContextError::InvalidDocument(format!(
                "document '{}' has empty text",
                self.id
            )));
        }
        match (self.role, self.hop_index) {
            (Role::Supporting, None) => Err(ContextError::InvalidDocument(format!(
                "supporting document '{}' is missing hop_index",
                self.id
            ))),
            (Role::Supporting, Some(0)) => Err(ContextError::InvalidDocument(format!(
                "supporting document '{}' has hop_index 0; hop indices are 1-based",
                self.id
            ))),
            (Role::Noisy, Some(_)) => Err(ContextError::InvalidDocument(format!(
                "noisy document '{}' must not carry hop_index",
                self.id
            ))),
            _ => Ok(()),
        }
    }
}

impl<'de> Deserialize<'de> for Document {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            id: String,
            #[serde(default)]
            title: Option<String>,
            text: String,
            role: Role,
            #[serde(default)]
            hop_index: Option<usize>,
        }
        let raw = Raw::deserialize(deserializer)?;
        Document::new(raw.id, raw.title, raw.text, raw.role, raw.hop_index)
            .map_err(serde::de::Error::custom)
    }
}

/// An ordered document sequence. Presentation order is meaningful and is
/// preserved by serialization.
///
/// The distinct supporting hop indices must form exactly `{1..k}`. A context
/// built from a sample holds one document per hop; a context produced by
/// [`repeat_context`] holds several copies per hop, which later selection
/// treats as interchangeable (unselected copies count as noise).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct ContextSpec {
    documents: Vec<Document>,
}

impl ContextSpec {
    pub fn new(documents: Vec<Document>) -> Result<Self, ContextError> {
        for doc in &documents {
            doc.validate()?;
        }
        let mut hops: Vec<usize> = documents.iter().filter_map(|d| d.hop_index).collect();
        hops.sort_unstable();
        hops.dedup();
        for (i, hop) in hops.iter().enumerate() {
            if *hop != i + 1 {
                return Err(ContextError::InvalidContext(format!(
                    "supporting hop indices must cover 1..=k without gaps; found {hops:?}"
                )));
            }
        }
        Ok(ContextSpec { documents })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    /// Number of distinct supporting documents (distinct hop indices).
    pub fn k(&self) -> usize {
        let mut hops: Vec<usize> = self.documents.iter().filter_map(|d| d.hop_index).collect();
        hops.sort_unstable();
        hops.dedup();
        hops.len()
    }

    /// True when every hop index occurs exactly once (a non-repeated context).
    pub fn has_unique_supporting(&self) -> bool {
        self.documents
            .iter()
            .filter(|d| d.role == Role::Supporting)
            .count()
            == self.k()
    }

    /// Supporting documents in gold (hop index) order. Errors when some hop
    /// occurs more than once, since "the" document per hop is then ambiguous.
    pub fn gold_supporting(&self) -> Result<Vec<Document>, ContextError> {
        if !self.has_unique_supporting() {
            return Err(ContextError::InvalidContext(
                "context holds repeated supporting documents; no unique gold order".into(),
            ));
        }
        let mut gold: Vec<Document> = self
            .documents
            .iter()
            .filter(|d| d.role == Role::Supporting)
            .cloned()
            .collect();
        gold.sort_by_key(|d| d.hop_index);
        Ok(gold)
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        #[derive(Serialize)]
        struct Wire<'a> {
            documents: &'a [Document],
        }
        serde_json::to_string(&Wire {
            documents: &self.documents,
        })
    }

    pub fn from_json(json: &str) -> Result<Self, ContextError> {
        #[derive(Deserialize)]
        struct Wire {
            documents: Vec<Document>,
        }
        let wire: Wire =
            serde_json::from_str(json).map_err(|e| ContextError::InvalidContext(e.to_string()))?;
        ContextSpec::new(wire.documents)
    }
}

impl<'de> Deserialize<'de> for ContextSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let documents = Vec::<Document>::deserialize(deserializer)?;
        ContextSpec::new(documents).map_err(serde::de::Error::custom)
    }
}

/// A relative order of the k supporting documents: a bijection on `{1..k}`.
/// `mapping[i]` is the hop index presented at position i+1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OrderPermutation {
    mapping: Vec<usize>,
}

impl OrderPermutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self, ContextError> {
        if mapping.is_empty() {
            return Err(ContextError::InvalidPermutation("mapping is empty".into()));
        }
        let k = mapping.len();
        let mut seen = vec![false; k + 1];
        for &v in &mapping {
            if v == 0 || v > k {
                return Err(ContextError::InvalidPermutation(format!(
                    "value {v} out of range 1..={k}"
                )));
            }
            if seen[v] {
                return Err(ContextError::InvalidPermutation(format!(
                    "value {v} repeated"
                )));
            }
            seen[v] = true;
        }
        Ok(OrderPermutation { mapping })
    }

    pub fn identity(k: usize) -> Result<Self, ContextError> {
        Self::new((1..=k).collect())
    }

    pub fn k(&self) -> usize {
        self.mapping.len()
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }

    pub fn is_identity(&self) -> bool {
        self.mapping.iter().enumerate().all(|(i, &v)| v == i + 1)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0usize; self.mapping.len()];
        for (i, &v) in self.mapping.iter().enumerate() {
            inv[v - 1] = i + 1;
        }
        OrderPermutation { mapping: inv }
    }

    /// Compact display form, e.g. `(2,1,3)`.
    pub fn label(&self) -> String {
        let parts: Vec<String> = self.mapping.iter().map(|v| v.to_string()).collect();
        format!("({})", parts.join(","))
    }
}

impl std::fmt::Display for OrderPermutation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.label())
    }
}

/// Proof object for order membership of a repeated context: k strictly
/// increasing positions into the augmented document sequence, one per
/// repetition block, selecting the supporting documents in the witnessed
/// order. `repetition_of[i]` is the 1-based block the i-th selection was
/// drawn from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderWitness {
    pub positions: Vec<usize>,
    pub repetition_of: Vec<usize>,
}

impl OrderWitness {
    /// Check the witness against the augmented context it indexes into:
    /// positions strictly increase and select exactly the supporting
    /// documents with hop indices `sigma(1), ..., sigma(k)` in that order.
    pub fn verify(&self, augmented: &ContextSpec, sigma: &OrderPermutation) -> bool {
        if self.positions.len() != sigma.k() || self.repetition_of.len() != sigma.k() {
            return false;
        }
        let docs = augmented.documents();
        let mut prev: Option<usize> = None;
        for (i, &pos) in self.positions.iter().enumerate() {
            if let Some(p) = prev {
                if pos <= p {
                    return false;
                }
            }
            prev = Some(pos);
            let doc = match docs.get(pos) {
                Some(d) => d,
                None => return false,
            };
            if doc.role != Role::Supporting || doc.hop_index != Some(sigma.mapping()[i]) {
                return false;
            }
        }
        true
    }
}

/// Present supporting documents under an order: returns
/// `(d_{sigma(1)}, ..., d_{sigma(k)})` where the input sequence is `(d_1, ..., d_k)`.
pub fn apply_order(
    supporting: &[Document],
    sigma: &OrderPermutation,
) -> Result<Vec<Document>, ContextError> {
    if supporting.len() != sigma.k() {
        return Err(ContextError::InvalidPermutation(format!(
            "permutation over {} values applied to {} documents",
            sigma.k(),
            supporting.len()
        )));
    }
    if let Some(bad) = supporting.iter().find(|d| d.role != Role::Supporting) {
        return Err(ContextError::RoleError(bad.id.clone()));
    }
    Ok(sigma
        .mapping()
        .iter()
        .map(|&v| supporting[v - 1].clone())
        .collect())
}

/// All k! orders in lexicographic order of their mapping.
pub fn enumerate_orders(k: usize) -> Result<Vec<OrderPermutation>, ContextError> {
    if k == 0 || k > MAX_ENUMERABLE_K {
        return Err(ContextError::CardinalityGuard(k));
    }
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    let mut used = vec![false; k + 1];
    fn build(
        k: usize,
        current: &mut Vec<usize>,
        used: &mut [bool],
        out: &mut Vec<OrderPermutation>,
    ) {
        if current.len() == k {
            out.push(OrderPermutation {
                mapping: current.clone(),
            });
            return;
        }
        for v in 1..=k {
            if !used[v] {
                used[v] = true;
                current.push(v);
                build(k, current, used, out);
                current.pop();
                used[v] = false;
            }
        }
    }
    build(k, &mut current, &mut used, &mut out);
    Ok(out)
}

/// Assemble a context: supporting documents in `sigma` order with the noisy
/// documents distributed over the k+1 gap slots (before, between, after) by a
/// PRNG seeded with `interleave_seed`. Noise placement is uniform per
/// document; relative order of noisy documents sharing a slot follows input
/// order.
pub fn build_context(
    supporting: &[Document],
    noisy: &[Document],
    sigma: &OrderPermutation,
    interleave_seed: u64,
) -> Result<ContextSpec, ContextError> {
    use rand::Rng;
    use rand::SeedableRng;

    let ordered = apply_order(supporting, sigma)?;
    if let Some(bad) = noisy.iter().find(|d| d.role != Role::Noisy) {
        return Err(ContextError::RoleError(bad.id.clone()));
    }
    let k = ordered.len();
    let mut slots: Vec<Vec<Document>> = vec![Vec::new(); k + 1];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(interleave_seed);
    for doc in noisy {
        let slot = rng.gen_range(0..=k);
        slots[slot].push(doc.clone());
    }
    let mut documents = Vec::with_capacity(ordered.len() + noisy.len());
    documents.extend(slots[0].iter().cloned());
    for (i, doc) in ordered.into_iter().enumerate() {
        documents.push(doc);
        documents.extend(slots[i + 1].iter().cloned());
    }
    ContextSpec::new(documents)
}

/// Replace the supporting documents of a context in presentation order with
/// the gold documents permuted by `sigma`, leaving every noisy document where
/// it is. The i-th supporting slot receives the document of hop `sigma(i)`.
pub fn reorder_supporting(
    context: &ContextSpec,
    sigma: &OrderPermutation,
) -> Result<ContextSpec, ContextError> {
    let gold = context.gold_supporting()?;
    if gold.len() != sigma.k() {
        return Err(ContextError::InvalidPermutation(format!(
            "permutation over {} values applied to context with k = {}",
            sigma.k(),
            gold.len()
        )));
    }
    let mut slot = 0usize;
    let documents = context
        .documents()
        .iter()
        .map(|d| {
            if d.role == Role::Supporting {
                let doc = gold[sigma.mapping()[slot] - 1].clone();
                slot += 1;
                doc
            } else {
                d.clone()
            }
        })
        .collect();
    ContextSpec::new(documents)
}

/// Membership in the order set of `sigma`: true iff some strictly increasing
/// selection of positions picks one copy of each supporting document in
/// `sigma` order. Copies introduced by repetition are interchangeable;
/// unselected copies count as noise.
pub fn is_in_order_set(context: &ContextSpec, sigma: &OrderPermutation) -> bool {
    if sigma.k() != context.k() {
        return false;
    }
    // Greedy matching of the hop sequence against the supporting subsequence
    // is sound and complete for subsequence containment.
    let mut wanted = sigma.mapping().iter();
    let mut next = wanted.next();
    for doc in context.documents() {
        match next {
            Some(&hop) if doc.hop_index == Some(hop) => next = wanted.next(),
            Some(_) => {}
            None => break,
        }
    }
    next.is_none()
}

/// The repetition augmentation: the context concatenated with itself `k_hat`
/// times. `k_hat == 1` returns an equal context.
pub fn repeat_context(context: &ContextSpec, k_hat: usize) -> Result<ContextSpec, ContextError> {
    if k_hat == 0 {
        return Err(ContextError::InvalidRepetition);
    }
    let mut documents = Vec::with_capacity(context.len() * k_hat);
    for _ in 0..k_hat {
        documents.extend(context.documents().iter().cloned());
    }
    // Concatenation of a valid context cannot invalidate the hop cover.
    Ok(ContextSpec { documents })
}

/// True iff the `k_hat`-repeated context belongs to every order set, checked
/// exhaustively over all k! orders. Always true when `k_hat >= k`.
pub fn verify_order_coverage(context: &ContextSpec, k_hat: usize) -> Result<bool, ContextError> {
    let orders = enumerate_orders(context.k())?;
    let repeated = repeat_context(context, k_hat)?;
    Ok(orders.iter().all(|sigma| is_in_order_set(&repeated, sigma)))
}

/// The canonical order witness: the document of hop `sigma(i)` selected from
/// the i-th repetition block. Requires `k_hat >= k` so every block is
/// available; when fewer blocks exist a witness may still exist but this
/// construction does not apply (use [`is_in_order_set`] for bare existence).
pub fn extract_order_witness(
    context: &ContextSpec,
    k_hat: usize,
    sigma: &OrderPermutation,
) -> Result<OrderWitness, ContextError> {
    if k_hat == 0 {
        return Err(ContextError::InvalidRepetition);
    }
    let k = context.k();
    if sigma.k() != k {
        return Err(ContextError::InvalidPermutation(format!(
            "permutation over {} values applied to context with k = {}",
            sigma.k(),
            k
        )));
    }
    if k_hat < k {
        return Err(ContextError::WitnessUnavailable { k_hat, k });
    }
    let block_len = context.len();
    let mut positions = Vec::with_capacity(k);
    let mut repetition_of = Vec::with_capacity(k);
    for (i, &hop) in sigma.mapping().iter().enumerate() {
        let in_block = context
            .documents()
            .iter()
            .position(|d| d.hop_index == Some(hop))
            .ok_or_else(|| {
                ContextError::InvalidContext(format!("no supporting document with hop {hop}"))
            })?;
        positions.push(i * block_len + in_block);
        repetition_of.push(i + 1);
    }
    Ok(OrderWitness {
        positions,
        repetition_of,
    })
}
