//! Fuzzy cognitive map engine.
//!
//! Concepts are split into stem nodes (motivation, ability, peripheral cue
//! and the six elaboration factors) and leaf nodes (scenario events feeding
//! the factors). Edges are stored as a sparse adjacency list. One round
//! updates every non-clamped concept with at least one incoming edge to
//! `threshold(Σ w_ji · v_j)` using the previous round's values. Leaves have
//! no incoming edges and stay clamped for the whole evaluation.
//!
//! [`FcmModel::evaluate`] iterates to a fixed point or a cycle. When every
//! stem fed by a leaf is fed *only* by leaves, the leaf-to-factor sub-maps
//! settle after the first round, so later rounds touch the stem-induced main
//! map only. Otherwise it falls back to full iteration. Both paths produce
//! the same trajectory.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::{self, DocumentError};

pub const DEFAULT_MAX_ROUNDS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FcmError {
    #[error(transparent)]
    Document(#[from] DocumentError),
    #[error("invariant violated: {message} ({})", ids.join(", "))]
    Invariant { message: String, ids: Vec<String> },
    #[error("threshold input is not finite: {0}")]
    NonFiniteInput(f64),
    #[error("activation vector has {got} entries, model has {expected} concepts")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown leaf `{0}`")]
    UnknownLeaf(String),
    #[error("`{0}` is not a leaf and cannot be clamped")]
    NonLeafClamp(String),
    #[error("activation {value} for `{id}` is outside [-1, 1]")]
    OutOfRange { id: String, value: f64 },
}

impl FcmError {
    fn invariant(message: impl Into<String>, ids: impl IntoIterator<Item = impl Into<String>>) -> Self {
        FcmError::Invariant {
            message: message.into(),
            ids: ids.into_iter().map(Into::into).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConceptRole {
    Stem,
    Leaf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StemKind {
    Motivation,
    Ability,
    PeripheralCue,
    Factor,
}

/// The six elaboration-likelihood factors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    PersonalRelevance,
    PersonalResponsibility,
    NeedForCognition,
    PriorKnowledge,
    Distraction,
    Repetition,
}

impl Factor {
    pub const ALL: [Factor; 6] = [
        Factor::PersonalRelevance,
        Factor::PersonalResponsibility,
        Factor::NeedForCognition,
        Factor::PriorKnowledge,
        Factor::Distraction,
        Factor::Repetition,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalConcept {
    pub id: String,
    pub name: String,
    pub role: ConceptRole,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stem_kind: Option<StemKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor_name: Option<Factor>,
}

impl CausalConcept {
    pub fn stem(id: &str, kind: Option<StemKind>, factor: Option<Factor>) -> Self {
        Self {
            id: id.to_string(),
            name: id.to_string(),
            role: ConceptRole::Stem,
            stem_kind: kind,
            factor_name: factor,
        }
    }

    pub fn leaf(id: &str) -> Self {
        Self {
            id: id.to_string(),
            name: id.to_string(),
            role: ConceptRole::Leaf,
            stem_kind: None,
            factor_name: None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.role == ConceptRole::Leaf
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FcmMode {
    /// Full stem-set and leaf rules apply.
    Pta,
    /// Plain FCM: only edge and leaf-input rules apply.
    Generic,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    #[default]
    Trivalent,
}

impl Threshold {
    pub fn apply(self, x: f64) -> Result<f64, FcmError> {
        match self {
            Threshold::Trivalent => threshold_trivalent(x),
        }
    }
}

/// -1 for `x <= -0.5`, 1 for `x >= 0.5`, 0 in between.
pub fn threshold_trivalent(x: f64) -> Result<f64, FcmError> {
    if !x.is_finite() {
        return Err(FcmError::NonFiniteInput(x));
    }
    Ok(if x <= -0.5 {
        -1.0
    } else if x >= 0.5 {
        1.0
    } else {
        0.0
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub from: String,
    pub to: String,
    pub weight: f64,
}

/// Sparse out-edge lists, indexed by concept position.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdjacencyList {
    out_edges: Vec<Vec<(usize, f64)>>,
}

impl AdjacencyList {
    pub fn out_edges(&self, source: usize) -> &[(usize, f64)] {
        &self.out_edges[source]
    }

    pub fn edge_count(&self) -> usize {
        self.out_edges.iter().map(Vec::len).sum()
    }

    fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.out_edges
            .iter()
            .enumerate()
            .flat_map(|(s, outs)| outs.iter().map(move |&(t, w)| (s, t, w)))
    }
}

/// Activation values aligned with the model's concept order, plus the set of
/// clamped (held) concepts.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationVector {
    values: Vec<f64>,
    clamped: Vec<bool>,
}

impl ActivationVector {
    pub fn zeros(model: &FcmModel) -> Self {
        Self {
            values: vec![0.0; model.len()],
            clamped: vec![false; model.len()],
        }
    }

    /// Build from raw values. Every value must lie in [-1, 1].
    pub fn from_values(model: &FcmModel, values: Vec<f64>) -> Result<Self, FcmError> {
        if values.len() != model.len() {
            return Err(FcmError::DimensionMismatch {
                expected: model.len(),
                got: values.len(),
            });
        }
        for (c, v) in model.concepts.iter().zip(&values) {
            check_range(&c.id, *v)?;
        }
        Ok(Self {
            clamped: vec![false; values.len()],
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn is_clamped(&self, index: usize) -> bool {
        self.clamped[index]
    }

    pub fn get(&self, model: &FcmModel, id: &str) -> Option<f64> {
        model.index_of(id).map(|i| self.values[i])
    }

    pub fn set(&mut self, model: &FcmModel, id: &str, value: f64) -> Result<(), FcmError> {
        let i = model
            .index_of(id)
            .ok_or_else(|| FcmError::UnknownLeaf(id.to_string()))?;
        check_range(id, value)?;
        self.values[i] = value;
        Ok(())
    }

    /// Hold a leaf fixed at `value`.
    pub fn clamp(&mut self, model: &FcmModel, id: &str, value: f64) -> Result<(), FcmError> {
        let i = model
            .index_of(id)
            .ok_or_else(|| FcmError::UnknownLeaf(id.to_string()))?;
        if !model.concepts[i].is_leaf() {
            return Err(FcmError::NonLeafClamp(id.to_string()));
        }
        check_range(id, value)?;
        self.values[i] = value;
        self.clamped[i] = true;
        Ok(())
    }

    /// Values keyed by concept id.
    pub fn to_map(&self, model: &FcmModel) -> BTreeMap<String, f64> {
        model
            .concepts
            .iter()
            .zip(&self.values)
            .map(|(c, v)| (c.id.clone(), *v))
            .collect()
    }
}

fn check_range(id: &str, value: f64) -> Result<(), FcmError> {
    if value.is_finite() && (-1.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(FcmError::OutOfRange {
            id: id.to_string(),
            value,
        })
    }
}

/// Edge-visit counters collected by [`FcmModel::evaluate_with`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct EvalStats {
    /// Whether the main-map-only iteration was used after round 1.
    pub decomposed: bool,
    /// Edge visits performed in each round.
    pub edge_visits_per_round: Vec<usize>,
    /// Visits of edges whose source is a leaf, in rounds 2 and later.
    pub leaf_edge_visits_after_first_round: usize,
}

impl EvalStats {
    pub fn total_edge_visits(&self) -> usize {
        self.edge_visits_per_round.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcmResult {
    pub final_state: ActivationVector,
    pub rounds: usize,
    pub converged: bool,
    pub cycle_detected: bool,
    pub stats: EvalStats,
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    /// Starting activations. Defaults to all zeros. Leaf entries are
    /// overwritten by the clamped activations.
    pub initial: Option<ActivationVector>,
    /// Overrides the model's round cap.
    pub max_rounds: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcmModel {
    pub mode: FcmMode,
    pub concepts: Vec<CausalConcept>,
    pub edges: AdjacencyList,
    pub threshold: Threshold,
    pub max_rounds: usize,
    index: HashMap<String, usize>,
    in_degree: Vec<usize>,
    plan: Plan,
}

/// Precomputed split into sub-maps and main map.
#[derive(Debug, Clone, Default, PartialEq)]
struct Plan {
    decomposable: bool,
    /// For each sub-map head (a stem fed by leaves): its leaf in-edges.
    sub_maps: Vec<(usize, Vec<(usize, f64)>)>,
    /// In-edges from stems, for every stem with at least one.
    main_in: Vec<(usize, Vec<(usize, f64)>)>,
}

impl FcmModel {
    /// Build and validate a model from concepts and edges.
    pub fn new(
        mode: FcmMode,
        concepts: Vec<CausalConcept>,
        edges: Vec<EdgeSpec>,
        threshold: Threshold,
        max_rounds: usize,
    ) -> Result<Self, FcmError> {
        let mut index = HashMap::new();
        for (i, c) in concepts.iter().enumerate() {
            if index.insert(c.id.clone(), i).is_some() {
                return Err(FcmError::invariant("duplicate concept id", [c.id.as_str()]));
            }
        }
        for c in &concepts {
            check_concept(mode, c)?;
        }
        if mode == FcmMode::Pta {
            check_stem_set(&concepts)?;
        }
        if max_rounds == 0 {
            return Err(FcmError::invariant("max_rounds must be positive", Vec::<String>::new()));
        }

        let n = concepts.len();
        let mut out_edges = vec![Vec::new(); n];
        let mut in_degree = vec![0; n];
        let mut seen = std::collections::HashSet::new();
        for e in &edges {
            let (Some(&s), Some(&t)) = (index.get(&e.from), index.get(&e.to)) else {
                return Err(FcmError::invariant(
                    "edge endpoint is not a concept",
                    [e.from.as_str(), e.to.as_str()],
                ));
            };
            if !e.weight.is_finite() || !(-1.0..=1.0).contains(&e.weight) || e.weight == 0.0 {
                return Err(FcmError::invariant(
                    format!("edge weight {} must be nonzero and within [-1, 1]", e.weight),
                    [e.from.as_str(), e.to.as_str()],
                ));
            }
            if !seen.insert((s, t)) {
                return Err(FcmError::invariant("duplicate edge", [e.from.as_str(), e.to.as_str()]));
            }
            out_edges[s].push((t, e.weight));
            in_degree[t] += 1;
        }

        for (i, c) in concepts.iter().enumerate() {
            if c.is_leaf() && in_degree[i] > 0 {
                return Err(FcmError::invariant("leaf has incoming edges", [c.id.as_str()]));
            }
            if mode == FcmMode::Pta && c.is_leaf() {
                let feeds_factor = out_edges[i]
                    .iter()
                    .any(|&(t, _)| concepts[t].stem_kind == Some(StemKind::Factor));
                if !feeds_factor {
                    return Err(FcmError::invariant("leaf does not feed any factor", [c.id.as_str()]));
                }
            }
        }

        let edges = AdjacencyList { out_edges };
        let plan = Plan::build(&concepts, &edges);
        Ok(Self {
            mode,
            concepts,
            edges,
            threshold,
            max_rounds,
            index,
            in_degree,
            plan,
        })
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn concept(&self, id: &str) -> Option<&CausalConcept> {
        self.index_of(id).map(|i| &self.concepts[i])
    }

    pub fn in_degree(&self, index: usize) -> usize {
        self.in_degree[index]
    }

    /// Weight of the edge `from -> to`, if present.
    pub fn weight(&self, from: &str, to: &str) -> Option<f64> {
        let (s, t) = (self.index_of(from)?, self.index_of(to)?);
        self.edges.out_edges(s).iter().find(|(x, _)| *x == t).map(|(_, w)| *w)
    }

    pub fn leaf_ids(&self) -> impl Iterator<Item = &str> {
        self.concepts.iter().filter(|c| c.is_leaf()).map(|c| c.id.as_str())
    }

    /// Index of the unique stem of the given kind, if any.
    pub fn stem_index(&self, kind: StemKind) -> Option<usize> {
        self.concepts.iter().position(|c| c.stem_kind == Some(kind))
    }

    pub fn factor_index(&self, factor: Factor) -> Option<usize> {
        self.concepts.iter().position(|c| c.factor_name == Some(factor))
    }

    /// True when the main-map-only optimization applies.
    pub fn is_decomposable(&self) -> bool {
        self.plan.decomposable
    }

    /// All edges as specs, in adjacency order.
    pub fn edge_specs(&self) -> Vec<EdgeSpec> {
        self.edges
            .iter()
            .map(|(s, t, w)| EdgeSpec {
                from: self.concepts[s].id.clone(),
                to: self.concepts[t].id.clone(),
                weight: w,
            })
            .collect()
    }

    fn check_dim(&self, v: &ActivationVector) -> Result<(), FcmError> {
        if v.len() != self.len() {
            return Err(FcmError::DimensionMismatch {
                expected: self.len(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// One synchronous update over the full graph.
    pub fn step(&self, v: &ActivationVector) -> Result<ActivationVector, FcmError> {
        let mut visits = 0;
        self.full_step(v, &mut visits)
    }

    fn full_step(&self, v: &ActivationVector, visits: &mut usize) -> Result<ActivationVector, FcmError> {
        self.check_dim(v)?;
        let mut sums = vec![0.0; self.len()];
        for (s, t, w) in self.edges.iter() {
            sums[t] += w * v.values[s];
            *visits += 1;
        }
        let mut next = v.clone();
        for (i, sum) in sums.into_iter().enumerate() {
            if !v.clamped[i] && self.in_degree[i] > 0 {
                next.values[i] = self.threshold.apply(sum)?;
            }
        }
        Ok(next)
    }

    /// Round 1 of the decomposed evaluation: every sub-map head from its
    /// leaves plus one main-map pass.
    fn sub_and_main_step(&self, v: &ActivationVector, visits: &mut usize) -> Result<ActivationVector, FcmError> {
        let mut next = v.clone();
        for (head, in_edges) in &self.plan.sub_maps {
            let mut sum = 0.0;
            for &(leaf, w) in in_edges {
                sum += w * v.values[leaf];
                *visits += 1;
            }
            next.values[*head] = self.threshold.apply(sum)?;
        }
        self.main_pass(v, &mut next, visits)?;
        Ok(next)
    }

    fn main_step(&self, v: &ActivationVector, visits: &mut usize) -> Result<ActivationVector, FcmError> {
        let mut next = v.clone();
        self.main_pass(v, &mut next, visits)?;
        Ok(next)
    }

    fn main_pass(&self, v: &ActivationVector, next: &mut ActivationVector, visits: &mut usize) -> Result<(), FcmError> {
        for (target, in_edges) in &self.plan.main_in {
            let mut sum = 0.0;
            for &(src, w) in in_edges {
                sum += w * v.values[src];
                *visits += 1;
            }
            next.values[*target] = self.threshold.apply(sum)?;
        }
        Ok(())
    }

    /// Same update as [`step`](Self::step), computed through a dense
    /// matrix-vector product. Used as an independent check of the sparse path.
    #[allow(clippy::needless_range_loop)]
    pub fn dense_oracle_step(&self, v: &ActivationVector) -> Result<ActivationVector, FcmError> {
        self.check_dim(v)?;
        let n = self.len();
        let mut matrix = vec![vec![0.0; n]; n];
        for (i, outs) in self.edges.out_edges.iter().enumerate() {
            for &(j, w) in outs {
                matrix[i][j] = w;
            }
        }
        let mut next = v.clone();
        for j in 0..n {
            let has_input = (0..n).any(|i| matrix[i][j] != 0.0);
            if v.clamped[j] || !has_input {
                continue;
            }
            let raw: f64 = (0..n).map(|i| matrix[i][j] * v.values[i]).sum();
            next.values[j] = self.threshold.apply(raw)?;
        }
        Ok(next)
    }

    /// Clamp the given leaves and iterate from all zeros.
    pub fn evaluate(&self, leaf_activations: &BTreeMap<String, f64>) -> Result<FcmResult, FcmError> {
        self.evaluate_with(leaf_activations, &EvalOptions::default())
    }

    pub fn evaluate_with(
        &self,
        leaf_activations: &BTreeMap<String, f64>,
        options: &EvalOptions,
    ) -> Result<FcmResult, FcmError> {
        let mut v = match &options.initial {
            Some(init) => {
                self.check_dim(init)?;
                init.clone()
            }
            None => ActivationVector::zeros(self),
        };
        for (i, c) in self.concepts.iter().enumerate() {
            if c.is_leaf() {
                v.clamped[i] = true;
            }
        }
        for (id, value) in leaf_activations {
            match self.concept(id) {
                None => return Err(FcmError::UnknownLeaf(id.clone())),
                Some(c) if !c.is_leaf() => return Err(FcmError::NonLeafClamp(id.clone())),
                Some(_) => v.clamp(self, id, *value)?,
            }
        }

        let max_rounds = options.max_rounds.unwrap_or(self.max_rounds);
        let decomposed = self.plan.decomposable;
        let mut stats = EvalStats {
            decomposed,
            ..EvalStats::default()
        };
        let mut history: Vec<Vec<f64>> = vec![v.values.clone()];
        let mut round = 0;
        loop {
            round += 1;
            let mut visits = 0;
            let next = match (decomposed, round) {
                (false, _) => self.full_step(&v, &mut visits)?,
                (true, 1) => self.sub_and_main_step(&v, &mut visits)?,
                (true, _) => self.main_step(&v, &mut visits)?,
            };
            stats.edge_visits_per_round.push(visits);
            if round > 1 && !decomposed {
                stats.leaf_edge_visits_after_first_round += self.leaf_edge_count();
            }
            let converged = next.values == v.values;
            let cycle = !converged && history[..history.len() - 1].contains(&next.values);
            v = next;
            if converged || cycle || round >= max_rounds {
                return Ok(FcmResult {
                    final_state: v,
                    rounds: round,
                    converged,
                    cycle_detected: cycle,
                    stats,
                });
            }
            history.push(v.values.clone());
        }
    }

    fn leaf_edge_count(&self) -> usize {
        self.concepts
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_leaf())
            .map(|(i, _)| self.edges.out_edges(i).len())
            .sum()
    }

    /// Canonical JSON document for this model.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            mode: FcmMode,
            concepts: &'a [CausalConcept],
            edges: Vec<EdgeSpec>,
            threshold: Threshold,
            max_rounds: usize,
        }
        let mut out = serde_json::to_string_pretty(&Doc {
            mode: self.mode,
            concepts: &self.concepts,
            edges: self.edge_specs(),
            threshold: self.threshold,
            max_rounds: self.max_rounds,
        })
        .expect("fcm serialization is infallible");
        out.push('\n');
        out
    }
}

impl Plan {
    fn build(concepts: &[CausalConcept], edges: &AdjacencyList) -> Self {
        let n = concepts.len();
        let mut leaf_in: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut stem_in: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (s, t, w) in edges.iter() {
            if concepts[s].is_leaf() {
                leaf_in[t].push((s, w));
            } else {
                stem_in[t].push((s, w));
            }
        }
        // Exact only if no sub-map head also listens to another stem.
        let decomposable = (0..n).all(|i| leaf_in[i].is_empty() || stem_in[i].is_empty());
        Plan {
            decomposable,
            sub_maps: leaf_in.into_iter().enumerate().filter(|(_, e)| !e.is_empty()).collect(),
            main_in: stem_in.into_iter().enumerate().filter(|(_, e)| !e.is_empty()).collect(),
        }
    }
}

fn check_concept(mode: FcmMode, c: &CausalConcept) -> Result<(), FcmError> {
    let id = [c.id.as_str()];
    match c.role {
        ConceptRole::Leaf if c.stem_kind.is_some() || c.factor_name.is_some() => {
            Err(FcmError::invariant("leaf concepts carry no stem kind or factor", id))
        }
        ConceptRole::Stem if mode == FcmMode::Pta && c.stem_kind.is_none() => {
            Err(FcmError::invariant("stem concept needs a stem_kind", id))
        }
        _ if (c.stem_kind == Some(StemKind::Factor)) != c.factor_name.is_some() && mode == FcmMode::Pta => Err(
            FcmError::invariant("factor_name is required exactly for factor stems", id),
        ),
        _ if c.factor_name.is_some() && c.stem_kind != Some(StemKind::Factor) => {
            Err(FcmError::invariant("factor_name on a non-factor concept", id))
        }
        _ => Ok(()),
    }
}

fn check_stem_set(concepts: &[CausalConcept]) -> Result<(), FcmError> {
    let stems: Vec<&CausalConcept> = concepts.iter().filter(|c| !c.is_leaf()).collect();
    let count_kind = |k: StemKind| stems.iter().filter(|c| c.stem_kind == Some(k)).count();
    for (kind, label) in [
        (StemKind::Motivation, "motivation"),
        (StemKind::Ability, "ability"),
        (StemKind::PeripheralCue, "peripheral_cue"),
    ] {
        match count_kind(kind) {
            1 => {}
            0 => return Err(FcmError::invariant("missing stem node", [label])),
            _ => return Err(FcmError::invariant("stem node declared more than once", [label])),
        }
    }
    for factor in Factor::ALL {
        let label = serde_json::to_value(factor).expect("factor names serialize");
        let label = label.as_str().unwrap_or_default().to_string();
        match stems.iter().filter(|c| c.factor_name == Some(factor)).count() {
            1 => {}
            0 => return Err(FcmError::invariant("missing stem node", [label])),
            _ => return Err(FcmError::invariant("stem node declared more than once", [label])),
        }
    }
    if stems.len() != 9 {
        return Err(FcmError::invariant(
            format!("expected 9 stem nodes, found {}", stems.len()),
            stems.iter().map(|c| c.id.clone()).collect::<Vec<_>>(),
        ));
    }
    Ok(())
}

/// Parse an FCM document and validate every model invariant.
pub fn parse_fcm(document: &str) -> Result<FcmModel, FcmError> {
    let value = schema::parse_value(document)?;
    let obj = schema::as_object(&value, "")?;
    schema::expect_fields(
        obj,
        "",
        &["mode", "concepts", "edges"],
        &["threshold", "max_rounds", "description"],
    )?;
    schema::expect_each(
        obj,
        "",
        "concepts",
        &["id", "name", "role"],
        &["stem_kind", "factor_name"],
    )?;
    schema::expect_each(obj, "", "edges", &["from", "to", "weight"], &[])?;

    let mode: FcmMode = schema::from_value(obj["mode"].clone(), "/mode")?;
    let concepts: Vec<CausalConcept> = schema::from_value(obj["concepts"].clone(), "/concepts")?;
    let edges: Vec<EdgeSpec> = schema::from_value(obj["edges"].clone(), "/edges")?;
    let threshold = match obj.get("threshold") {
        Some(v) => schema::from_value(v.clone(), "/threshold")?,
        None => Threshold::Trivalent,
    };
    let max_rounds = match obj.get("max_rounds") {
        Some(v) => schema::from_value(v.clone(), "/max_rounds")?,
        None => DEFAULT_MAX_ROUNDS,
    };
    FcmModel::new(mode, concepts, edges, threshold, max_rounds)
}
