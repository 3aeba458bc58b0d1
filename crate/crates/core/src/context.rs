//! Conceptual-space context maps.
//!
//! A context view becomes a vector whose first `C` dimensions mark which
//! object categories were recognised in the scene and whose last `L`
//! dimensions one-hot encode the location. Fetch queries set only the
//! requested category and compare on that dimension alone.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cluster::{ActivationReport, CategoryNetwork, LearnOutcome};
use crate::decay::DecayConfig;
use crate::error::{invalid, Error, Result};
use crate::feature::FeatureVector;
use crate::memory::{MemoryKind, MemoryStore};

pub type LocationId = u32;

/// Append-only mapping from object label to category dimension.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelIndex {
    labels: Vec<String>,
    #[serde(skip)]
    lookup: BTreeMap<String, usize>,
}

impl LabelIndex {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the existing dimension for `label`, or assigns the next one.
    pub fn register(&mut self, label: &str, capacity: usize) -> Result<usize> {
        if let Some(&i) = self.lookup.get(label) {
            return Ok(i);
        }
        if label.is_empty() {
            return Err(Error::EmptyLabel);
        }
        if self.labels.len() >= capacity {
            return Err(Error::IndexFull(capacity));
        }
        let i = self.labels.len();
        self.labels.push(label.to_string());
        self.lookup.insert(label.to_string(), i);
        Ok(i)
    }

    pub fn get(&self, label: &str) -> Option<usize> {
        self.lookup.get(label).copied()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Version of the index; grows by one per registered label.
    pub fn version(&self) -> usize {
        self.labels.len()
    }

    /// Rebuilds the lookup table after deserialization.
    pub fn rebuilt(labels: Vec<String>) -> Result<Self> {
        let mut idx = Self::new();
        for l in labels {
            if idx.lookup.contains_key(&l) {
                return Err(invalid("label_index", format!("duplicate label `{l}`")));
            }
            idx.register(&l, usize::MAX)?;
        }
        Ok(idx)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresenceMode {
    #[default]
    Binary,
    Count,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextSpaceConfig {
    /// Number of object-category dimensions reserved in every map.
    pub category_capacity: usize,
    /// Number of location dimensions; location ids must be below this.
    pub location_capacity: usize,
    /// Value of the active location dimension.
    pub lambda: f64,
    #[serde(default)]
    pub presence: PresenceMode,
}

impl Default for ContextSpaceConfig {
    fn default() -> Self {
        Self {
            category_capacity: 48,
            location_capacity: 16,
            lambda: 1.0,
            presence: PresenceMode::Binary,
        }
    }
}

impl ContextSpaceConfig {
    pub fn dim(&self) -> usize {
        self.category_capacity + self.location_capacity
    }

    pub fn validate(&self) -> Result<()> {
        if self.category_capacity == 0 || self.location_capacity == 0 {
            return Err(invalid("context capacity", "must be positive"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(invalid("lambda", "must be positive"));
        }
        Ok(())
    }

    fn check_location(&self, location: LocationId) -> Result<()> {
        if (location as usize) < self.location_capacity {
            Ok(())
        } else {
            Err(Error::UnknownLocation(location))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptualMap {
    pub category_dims: Vec<f64>,
    pub location_dims: Vec<f64>,
    /// True where a dimension takes part in distances.
    pub mask: Vec<bool>,
    pub index_version: usize,
}

impl ConceptualMap {
    pub fn empty(cfg: &ContextSpaceConfig, index_version: usize) -> Self {
        Self {
            category_dims: vec![0.0; cfg.category_capacity],
            location_dims: vec![0.0; cfg.location_capacity],
            mask: vec![true; cfg.dim()],
            index_version,
        }
    }

    pub fn is_fully_masked(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    pub fn to_feature(&self) -> FeatureVector {
        let mut v = self.category_dims.clone();
        v.extend_from_slice(&self.location_dims);
        FeatureVector::new(v).expect("conceptual map entries are finite")
    }

    pub fn location(&self) -> Option<LocationId> {
        self.location_dims
            .iter()
            .position(|&v| v != 0.0)
            .map(|i| i as LocationId)
    }
}

/// Classifies every scene view through the object network and encodes the
/// recognised categories plus the location. Returns the per-view predictions
/// so misrecognitions stay visible.
pub fn build_context_map(
    scene: &[FeatureVector],
    location: LocationId,
    object_net: &CategoryNetwork,
    index: &LabelIndex,
    now: f64,
    decay: &DecayConfig,
    cfg: &ContextSpaceConfig,
) -> Result<(ConceptualMap, Vec<String>)> {
    if object_net.is_empty() {
        return Err(Error::NoObjectsTaught);
    }
    cfg.check_location(location)?;
    let mut map = ConceptualMap::empty(cfg, index.version());
    let mut predicted = Vec::with_capacity(scene.len());
    for view in scene {
        let (label, _) = object_net.classify(view, now, decay)?;
        let dim = index
            .get(&label)
            .ok_or_else(|| Error::UnknownLabel(label.clone()))?;
        if dim >= cfg.category_capacity {
            return Err(Error::IndexFull(cfg.category_capacity));
        }
        match cfg.presence {
            PresenceMode::Binary => map.category_dims[dim] = 1.0,
            PresenceMode::Count => map.category_dims[dim] += 1.0,
        }
        predicted.push(label);
    }
    map.location_dims[location as usize] = cfg.lambda;
    Ok((map, predicted))
}

/// Trains the context network on a fully masked map.
pub fn teach_context(store: &mut MemoryStore, name: &str, map: &ConceptualMap) -> Result<LearnOutcome> {
    if !map.is_fully_masked() {
        return Err(invalid("map", "teaching requires every dimension unmasked"));
    }
    store.learn(MemoryKind::Context, name, &map.to_feature())
}

/// One candidate answer of a fetch query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextCandidate {
    pub cluster_id: u64,
    pub context: String,
    pub location: LocationId,
    pub activation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchQuery {
    pub context: String,
    pub location: LocationId,
    pub report: ActivationReport,
    /// Candidates in decreasing activation, one per distinct location.
    pub ranked: Vec<ContextCandidate>,
}

/// The query map for one object label: only its category dimension is set
/// and only that dimension is unmasked.
pub fn query_map(object_label: &str, index: &LabelIndex, cfg: &ContextSpaceConfig) -> Result<ConceptualMap> {
    let dim = index
        .get(object_label)
        .ok_or_else(|| Error::UnknownLabel(object_label.to_string()))?;
    if dim >= cfg.category_capacity {
        return Err(Error::IndexFull(cfg.category_capacity));
    }
    let mut map = ConceptualMap::empty(cfg, index.version());
    map.category_dims[dim] = 1.0;
    map.mask.iter_mut().for_each(|m| *m = false);
    map.mask[dim] = true;
    Ok(map)
}

/// Predicts where an object is most likely found.
pub fn masked_fetch_query(
    store: &MemoryStore,
    object_label: &str,
    index: &LabelIndex,
    cfg: &ContextSpaceConfig,
) -> Result<FetchQuery> {
    let map = query_map(object_label, index, cfg)?;
    let net = &store.context_net;
    if net.is_empty() {
        return Err(Error::EmptyNetwork);
    }
    let report = net.score(&map.to_feature(), Some(&map.mask), store.clock(), &store.config().ltm_decay)?;

    let mut ranked: Vec<ContextCandidate> = Vec::new();
    for s in report.ranked() {
        let cluster = net.cluster(s.cluster_id).expect("scored cluster exists");
        let location = decode_location(&cluster.centroid, cfg);
        if ranked.iter().any(|c| c.location == location) {
            continue;
        }
        ranked.push(ContextCandidate {
            cluster_id: s.cluster_id,
            context: s.label.clone(),
            location,
            activation: s.activation,
        });
    }
    let best = ranked[0].clone();
    debug_assert_eq!(best.cluster_id, report.winner_id);
    Ok(FetchQuery {
        context: best.context,
        location: best.location,
        report,
        ranked,
    })
}

/// Argmax over the location block of a context centroid (lowest id on ties).
pub fn decode_location(centroid: &FeatureVector, cfg: &ContextSpaceConfig) -> LocationId {
    let loc = &centroid.as_slice()[cfg.category_capacity..];
    let mut best = 0;
    for i in 1..loc.len() {
        if loc[i] > loc[best] {
            best = i;
        }
    }
    best as LocationId
}
