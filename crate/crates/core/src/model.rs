//! Graphs, reservoirs, model specifications and state containers.
//!
//! Vertex ids are opaque strings mapped to dense indices `0..|V|`; every
//! state vector in the crate is indexed by those dense indices.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{check_shape, Error, Result};

/// Opaque vertex identifier. JSON accepts strings or integers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct VertexId(pub String);

impl VertexId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for VertexId {
    fn from(s: &str) -> Self {
        VertexId(s.to_string())
    }
}

impl From<String> for VertexId {
    fn from(s: String) -> Self {
        VertexId(s)
    }
}

impl From<usize> for VertexId {
    fn from(i: usize) -> Self {
        VertexId(i.to_string())
    }
}

impl AsRef<str> for VertexId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl<'de> Deserialize<'de> for VertexId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Str(String),
        }
        Ok(match Raw::deserialize(d)? {
            Raw::Int(i) => VertexId(i.to_string()),
            Raw::Str(s) => VertexId(s),
        })
    }
}

/// An undirected edge between dense indices `a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Validated weighted graph with reservoir couplings.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    vertices: Vec<VertexId>,
    index: HashMap<VertexId, usize>,
    edges: Vec<Edge>,
    couplings: Vec<f64>,
    neighbors: Vec<Vec<(usize, f64)>>,
}

fn check_weight(what: impl FnOnce() -> String, w: f64) -> Result<()> {
    if w >= 0.0 && w.is_finite() {
        Ok(())
    } else {
        Err(Error::NegativeWeight { what: what(), weight: w })
    }
}

/// Build and validate a graph.
///
/// Each undirected edge is stored once; giving both orientations is allowed
/// only with identical weights. The subgraph of positive-weight edges must be
/// connected. Vertices absent from `couplings` get coupling 0.
pub fn build_graph<V, E, C>(vertices: &[V], edges: &[(E, E, f64)], couplings: &[(C, f64)]) -> Result<Graph>
where
    V: AsRef<str>,
    E: AsRef<str>,
    C: AsRef<str>,
{
    let mut ids = Vec::with_capacity(vertices.len());
    let mut index = HashMap::with_capacity(vertices.len());
    for v in vertices {
        let id = VertexId::from(v.as_ref());
        if index.insert(id.clone(), ids.len()).is_some() {
            return Err(Error::DuplicateVertex(id.0));
        }
        ids.push(id);
    }
    if ids.is_empty() {
        return Err(Error::InvalidParameter("graph needs at least one vertex".into()));
    }
    let lookup = |s: &str| -> Result<usize> {
        index.get(&VertexId::from(s)).copied().ok_or_else(|| Error::UnknownVertex(s.to_string()))
    };

    let mut seen: HashMap<(usize, usize), f64> = HashMap::new();
    let mut stored = Vec::new();
    for (x, y, w) in edges {
        let (i, j) = (lookup(x.as_ref())?, lookup(y.as_ref())?);
        check_weight(|| format!("edge ({}, {})", x.as_ref(), y.as_ref()), *w)?;
        if i == j {
            return Err(Error::SelfLoop(x.as_ref().to_string()));
        }
        let key = (i.min(j), i.max(j));
        match seen.get(&key) {
            Some(&prev) if prev == *w => continue,
            Some(_) => return Err(Error::AsymmetricEdge(x.as_ref().to_string(), y.as_ref().to_string())),
            None => {
                seen.insert(key, *w);
                stored.push(Edge { a: key.0, b: key.1, weight: *w });
            }
        }
    }

    let mut coupling = vec![0.0; ids.len()];
    let mut coupled = vec![false; ids.len()];
    for (v, c) in couplings {
        let i = lookup(v.as_ref())?;
        check_weight(|| format!("coupling of {}", v.as_ref()), *c)?;
        if coupled[i] && coupling[i] != *c {
            return Err(Error::InvalidParameter(format!("conflicting couplings for vertex {}", v.as_ref())));
        }
        coupled[i] = true;
        coupling[i] = *c;
    }

    let mut neighbors = vec![Vec::new(); ids.len()];
    for e in stored.iter().filter(|e| e.weight > 0.0) {
        neighbors[e.a].push((e.b, e.weight));
        neighbors[e.b].push((e.a, e.weight));
    }

    let mut reached = vec![false; ids.len()];
    let mut queue = VecDeque::from([0usize]);
    reached[0] = true;
    while let Some(i) = queue.pop_front() {
        for &(j, _) in &neighbors[i] {
            if !reached[j] {
                reached[j] = true;
                queue.push_back(j);
            }
        }
    }
    if let Some(missing) = reached.iter().position(|r| !r) {
        return Err(Error::NotIrreducible(ids[missing].0.clone(), ids[0].0.clone()));
    }

    Ok(Graph { vertices: ids, index, edges: stored, couplings: coupling, neighbors })
}

impl Graph {
    /// Chain `1 – 2 – … – n` with unit bulk weights and coupling `c` at both
    /// ends. For `n = 1` the single site carries coupling `c` and is meant to
    /// host both end reservoirs.
    pub fn chain(n: usize, c: f64) -> Result<Graph> {
        if n == 0 {
            return Err(Error::InvalidParameter("chain needs at least one site".into()));
        }
        let ids: Vec<String> = (1..=n).map(|i| i.to_string()).collect();
        let edges: Vec<(String, String, f64)> = (1..n).map(|i| (i.to_string(), (i + 1).to_string(), 1.0)).collect();
        let couplings = vec![("1".to_string(), c), (n.to_string(), c)];
        build_graph(&ids, &edges, &couplings)
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn vertices(&self) -> &[VertexId] {
        &self.vertices
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(&VertexId::from(id)).copied()
    }

    /// All stored edges, including zero-weight ones.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edges with strictly positive weight.
    pub fn active_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| e.weight > 0.0)
    }

    /// Symmetric weight lookup; 0 for absent pairs.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.neighbors.get(i).and_then(|ns| ns.iter().find(|(k, _)| *k == j)).map_or(0.0, |&(_, w)| w)
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    /// Sum of incident edge weights at `i`.
    pub fn degree_weight(&self, i: usize) -> f64 {
        self.neighbors[i].iter().map(|(_, w)| w).sum()
    }

    pub fn coupling(&self, i: usize) -> f64 {
        self.couplings[i]
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    /// Edge triples in the id space, suitable for [`build_graph`].
    pub fn edge_triples(&self) -> Vec<(VertexId, VertexId, f64)> {
        self.edges.iter().map(|e| (self.vertices[e.a].clone(), self.vertices[e.b].clone(), e.weight)).collect()
    }

    /// Coupling pairs in the id space, suitable for [`build_graph`].
    pub fn coupling_pairs(&self) -> Vec<(VertexId, f64)> {
        self.vertices.iter().cloned().zip(self.couplings.iter().copied()).collect()
    }
}

/// Process family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Family {
    KmpDiscrete,
    KmpContinuous,
    HarmonicDiscrete,
    HarmonicContinuous,
    HiddenKmp,
    HiddenHarmonic,
    Sip,
    Bep,
    Irw,
    IrwFlow,
}

impl Family {
    pub const ALL: [Family; 10] = [
        Family::KmpDiscrete,
        Family::KmpContinuous,
        Family::HarmonicDiscrete,
        Family::HarmonicContinuous,
        Family::HiddenKmp,
        Family::HiddenHarmonic,
        Family::Sip,
        Family::Bep,
        Family::Irw,
        Family::IrwFlow,
    ];

    pub fn state_kind(self) -> StateKind {
        match self {
            Family::KmpDiscrete | Family::HarmonicDiscrete | Family::Sip | Family::Irw => StateKind::Counts,
            Family::KmpContinuous | Family::HarmonicContinuous | Family::Bep | Family::IrwFlow => StateKind::Masses,
            Family::HiddenKmp | Family::HiddenHarmonic => StateKind::Thetas,
        }
    }

    /// Families whose reservoirs carry `(alpha, gamma)` rather than `theta_star`.
    pub fn uses_rate_reservoirs(self) -> bool {
        matches!(self, Family::Sip | Family::Bep | Family::Irw | Family::IrwFlow)
    }

    /// Families with infinite jump activity that need an epsilon truncation.
    pub fn needs_epsilon(self) -> bool {
        matches!(self, Family::HarmonicContinuous | Family::HiddenHarmonic)
    }

    /// Families simulated event by event.
    pub fn is_jump_process(self) -> bool {
        !matches!(self, Family::Bep | Family::IrwFlow)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::KmpDiscrete => "KMP_DISCRETE",
            Family::KmpContinuous => "KMP_CONTINUOUS",
            Family::HarmonicDiscrete => "HARMONIC_DISCRETE",
            Family::HarmonicContinuous => "HARMONIC_CONTINUOUS",
            Family::HiddenKmp => "HIDDEN_KMP",
            Family::HiddenHarmonic => "HIDDEN_HARMONIC",
            Family::Sip => "SIP",
            Family::Bep => "BEP",
            Family::Irw => "IRW",
            Family::IrwFlow => "IRW_FLOW",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Input mechanism of continuous harmonic reservoirs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum HarmonicReservoirKind {
    /// Deterministic target with input measure `u^{-1} e^{-u} du`.
    #[default]
    Standard,
    /// Random reservoir mass `Y ~ Gamma(2s, theta*)` moved with bulk fractions.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaReservoir {
    pub theta_star: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateReservoir {
    pub alpha: f64,
    pub gamma: f64,
}

/// A reservoir attached to a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReservoirSpec {
    Theta(ThetaReservoir),
    Rates(RateReservoir),
}

impl ReservoirSpec {
    pub fn theta(theta_star: f64) -> Self {
        ReservoirSpec::Theta(ThetaReservoir { theta_star })
    }

    pub fn rates(alpha: f64, gamma: f64) -> Self {
        ReservoirSpec::Rates(RateReservoir { alpha, gamma })
    }

    pub fn theta_star(&self) -> Option<f64> {
        match self {
            ReservoirSpec::Theta(t) => Some(t.theta_star),
            ReservoirSpec::Rates(_) => None,
        }
    }

    pub fn alpha_gamma(&self) -> Option<(f64, f64)> {
        match self {
            ReservoirSpec::Rates(r) => Some((r.alpha, r.gamma)),
            ReservoirSpec::Theta(_) => None,
        }
    }
}

/// One reservoir or several reservoirs sharing a vertex (each driven at rate `c(i)`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReservoirSlot {
    One(ReservoirSpec),
    Many(Vec<ReservoirSpec>),
}

impl ReservoirSlot {
    pub fn to_vec(&self) -> Vec<ReservoirSpec> {
        match self {
            ReservoirSlot::One(r) => vec![*r],
            ReservoirSlot::Many(rs) => rs.clone(),
        }
    }
}

/// Unvalidated model specification.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub family: Family,
    pub two_s: f64,
    pub reservoirs: BTreeMap<VertexId, Vec<ReservoirSpec>>,
    pub harmonic_reservoir_kind: HarmonicReservoirKind,
}

impl ModelSpec {
    pub fn new(family: Family, two_s: f64) -> Self {
        ModelSpec {
            family,
            two_s,
            reservoirs: BTreeMap::new(),
            harmonic_reservoir_kind: HarmonicReservoirKind::Standard,
        }
    }

    pub fn with_reservoir(mut self, vertex: impl Into<VertexId>, spec: ReservoirSpec) -> Self {
        self.reservoirs.entry(vertex.into()).or_default().push(spec);
        self
    }

    pub fn with_kind(mut self, kind: HarmonicReservoirKind) -> Self {
        self.harmonic_reservoir_kind = kind;
        self
    }
}

/// Non-fatal findings attached to a validated model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ModelWarning {
    /// `alpha >= gamma` at a SIP/BEP reservoir site.
    NoFiniteStationarySingleSiteLaw { vertex: VertexId },
}

/// Graph plus a specification that has passed [`validate_model`].
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    graph: Graph,
    spec: ModelSpec,
    dense_reservoirs: Vec<Vec<ReservoirSpec>>,
    warnings: Vec<ModelWarning>,
}

fn mismatch(v: &VertexId, reason: impl Into<String>) -> Error {
    Error::ReservoirMismatch { vertex: v.0.clone(), reason: reason.into() }
}

/// Check a specification against a graph.
pub fn validate_model(graph: &Graph, spec: ModelSpec) -> Result<Model> {
    check_shape(spec.two_s)?;
    let mut dense = vec![Vec::new(); graph.len()];
    for (v, list) in &spec.reservoirs {
        let i = graph.index_of(v.as_str()).ok_or_else(|| Error::UnknownVertex(v.0.clone()))?;
        if !list.is_empty() {
            dense[i] = list.clone();
        }
    }
    let mut warnings = Vec::new();
    for (i, list) in dense.iter().enumerate() {
        let v = &graph.vertices()[i];
        let c = graph.coupling(i);
        if c > 0.0 && list.is_empty() {
            return Err(mismatch(v, "positive coupling without reservoir"));
        }
        if c == 0.0 && !list.is_empty() {
            return Err(mismatch(v, "reservoir on a vertex with zero coupling"));
        }
        if !list.is_empty() && spec.family == Family::HarmonicDiscrete {
            return Err(mismatch(v, "no reservoir generator is defined for HARMONIC_DISCRETE"));
        }
        for r in list {
            match (spec.family.uses_rate_reservoirs(), r) {
                (true, ReservoirSpec::Rates(rr)) => {
                    let ok = |x: f64| x > 0.0 && x.is_finite();
                    if !ok(rr.alpha) || !ok(rr.gamma) {
                        return Err(mismatch(v, "alpha and gamma must be positive"));
                    }
                }
                (false, ReservoirSpec::Theta(t)) => {
                    if !(t.theta_star >= 0.0 && t.theta_star.is_finite()) {
                        return Err(mismatch(v, "theta_star must be nonnegative"));
                    }
                }
                (true, _) => return Err(mismatch(v, format!("{} needs (alpha, gamma) reservoirs", spec.family))),
                (false, _) => return Err(mismatch(v, format!("{} needs theta_star reservoirs", spec.family))),
            }
        }
        if matches!(spec.family, Family::Sip | Family::Bep) && !list.is_empty() {
            let (a, g) = list.iter().filter_map(|r| r.alpha_gamma()).fold((0.0, 0.0), |s, r| (s.0 + r.0, s.1 + r.1));
            if a >= g {
                warnings.push(ModelWarning::NoFiniteStationarySingleSiteLaw { vertex: v.clone() });
            }
        }
    }
    Ok(Model { graph: graph.clone(), spec, dense_reservoirs: dense, warnings })
}

impl Model {
    /// Convenience: validate `spec` on `graph`.
    pub fn new(graph: &Graph, spec: ModelSpec) -> Result<Model> {
        validate_model(graph, spec)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn family(&self) -> Family {
        self.spec.family
    }

    pub fn two_s(&self) -> f64 {
        self.spec.two_s
    }

    pub fn harmonic_reservoir_kind(&self) -> HarmonicReservoirKind {
        self.spec.harmonic_reservoir_kind
    }

    pub fn reservoirs_at(&self, i: usize) -> &[ReservoirSpec] {
        &self.dense_reservoirs[i]
    }

    pub fn has_reservoirs(&self) -> bool {
        self.dense_reservoirs.iter().any(|r| !r.is_empty())
    }

    pub fn warnings(&self) -> &[ModelWarning] {
        &self.warnings
    }

    /// Same graph and reservoirs, different family (re-validated).
    pub fn with_family(&self, family: Family) -> Result<Model> {
        let mut spec = self.spec.clone();
        spec.family = family;
        validate_model(&self.graph, spec)
    }

    /// Parse and validate a JSON model description.
    pub fn from_json(text: &str) -> Result<Model> {
        let desc: ModelDescription = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        desc.into_model()
    }

    pub fn to_description(&self) -> ModelDescription {
        ModelDescription {
            vertices: self.graph.vertices().to_vec(),
            edges: self.graph.edge_triples(),
            couplings: self.graph.coupling_pairs().into_iter().filter(|(_, c)| *c > 0.0).collect(),
            family: self.spec.family,
            two_s: self.spec.two_s,
            reservoirs: self
                .spec
                .reservoirs
                .iter()
                .map(|(k, v)| {
                    let slot = if v.len() == 1 { ReservoirSlot::One(v[0]) } else { ReservoirSlot::Many(v.clone()) };
                    (k.0.clone(), slot)
                })
                .collect(),
            harmonic_reservoir_kind: self.spec.harmonic_reservoir_kind,
        }
    }
}

/// JSON form of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDescription {
    pub vertices: Vec<VertexId>,
    pub edges: Vec<(VertexId, VertexId, f64)>,
    #[serde(default)]
    pub couplings: Vec<(VertexId, f64)>,
    pub family: Family,
    pub two_s: f64,
    #[serde(default)]
    pub reservoirs: BTreeMap<String, ReservoirSlot>,
    #[serde(default)]
    pub harmonic_reservoir_kind: HarmonicReservoirKind,
}

impl ModelDescription {
    pub fn into_model(self) -> Result<Model> {
        let graph = build_graph(&self.vertices, &self.edges, &self.couplings)?;
        let reservoirs = self.reservoirs.iter().map(|(k, v)| (VertexId::from(k.as_str()), v.to_vec())).collect();
        let spec = ModelSpec {
            family: self.family,
            two_s: self.two_s,
            reservoirs,
            harmonic_reservoir_kind: self.harmonic_reservoir_kind,
        };
        validate_model(&graph, spec)
    }
}

/// Tag of a [`StateVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StateKind {
    Counts,
    Masses,
    Thetas,
}

impl fmt::Display for StateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StateKind::Counts => "COUNTS",
            StateKind::Masses => "MASSES",
            StateKind::Thetas => "THETAS",
        })
    }
}

/// A configuration indexed by dense vertex index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StateVector {
    Counts(Vec<u64>),
    Masses(Vec<f64>),
    Thetas(Vec<f64>),
}

impl StateVector {
    pub fn kind(&self) -> StateKind {
        match self {
            StateVector::Counts(_) => StateKind::Counts,
            StateVector::Masses(_) => StateKind::Masses,
            StateVector::Thetas(_) => StateKind::Thetas,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            StateVector::Counts(v) => v.len(),
            StateVector::Masses(v) | StateVector::Thetas(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Component `i` as a real number.
    pub fn get(&self, i: usize) -> f64 {
        match self {
            StateVector::Counts(v) => v[i] as f64,
            StateVector::Masses(v) | StateVector::Thetas(v) => v[i],
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }

    pub fn total(&self) -> f64 {
        (0..self.len()).map(|i| self.get(i)).sum()
    }

    /// Zero state of the given kind.
    pub fn zeros(kind: StateKind, n: usize) -> StateVector {
        match kind {
            StateKind::Counts => StateVector::Counts(vec![0; n]),
            StateKind::Masses => StateVector::Masses(vec![0.0; n]),
            StateKind::Thetas => StateVector::Thetas(vec![0.0; n]),
        }
    }

    /// Real components must be finite and nonnegative.
    pub fn validate(&self) -> Result<()> {
        match self {
            StateVector::Counts(_) => Ok(()),
            StateVector::Masses(v) | StateVector::Thetas(v) => {
                match v.iter().position(|x| !(*x >= 0.0 && x.is_finite())) {
                    Some(i) => Err(Error::NegativeState(i)),
                    None => Ok(()),
                }
            }
        }
    }

    pub(crate) fn expect_kind(&self, kind: StateKind, n: usize) -> Result<()> {
        if self.kind() != kind {
            return Err(Error::KindMismatch { expected: kind.to_string(), found: self.kind().to_string() });
        }
        if self.len() != n {
            return Err(Error::InvalidParameter(format!("state has {} components, graph has {}", self.len(), n)));
        }
        self.validate()
    }
}

/// Finite-support multi-index over dense vertex indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DualIndex(pub Vec<u32>);

impl DualIndex {
    pub fn zeros(n: usize) -> Self {
        DualIndex(vec![0; n])
    }

    /// Unit index at site `i`.
    pub fn unit(n: usize, i: usize) -> Self {
        let mut xi = vec![0; n];
        xi[i] = 1;
        DualIndex(xi)
    }

    pub fn order(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn as_state(&self) -> StateVector {
        StateVector::Counts(self.0.iter().map(|&k| k as u64).collect())
    }
}
