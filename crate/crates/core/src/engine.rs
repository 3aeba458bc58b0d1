//! One teaching session: memory, world and label index behind a single
//! mutation surface shared by the scenario runner and the HTTP service.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cluster::LearnOutcome;
use crate::context::{self, build_context_map, ContextSpaceConfig, LabelIndex, LocationId};
use crate::error::{invalid, Error, Result};
use crate::home::{execute_fetch, FetchOptions, FetchResult, ViewConfig, World, WorldDef, WorldOp};
use crate::memory::{MemoryConfig, MemoryKind, MemoryStore};

pub const MEMORY_SNAPSHOT_SCHEMA: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    #[serde(default)]
    pub views: ViewConfig,
    #[serde(default)]
    pub memory: MemoryConfig,
    #[serde(default)]
    pub context: ContextSpaceConfig,
    #[serde(default)]
    pub fetch: FetchOptions,
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        self.memory.validate()?;
        self.context.validate()?;
        if self.views.dim == 0 {
            return Err(invalid("views.dim", "must be positive"));
        }
        if !(self.views.sigma >= 0.0 && self.views.sigma.is_finite()) {
            return Err(invalid("views.sigma", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeachObjectOutcome {
    pub label: String,
    pub views_used: usize,
    pub clusters_after: usize,
    pub recruited: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeachContextOutcome {
    pub predicted_objects: Vec<String>,
    pub outcome: LearnOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub label: String,
    pub clusters: usize,
    pub effective_weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightBin {
    pub upper: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub clock: f64,
    pub object_labels: Vec<LabelSummary>,
    pub context_labels: Vec<LabelSummary>,
    pub object_clusters: usize,
    pub context_clusters: usize,
    pub weight_histogram: Vec<WeightBin>,
    pub stm_size: usize,
    pub label_index: Vec<String>,
    pub placements: BTreeMap<String, LocationId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemorySnapshot {
    pub schema: u32,
    pub label_index: Vec<String>,
    pub context: ContextSpaceConfig,
    pub store: MemoryStore,
}

#[derive(Debug, Clone)]
pub struct Engine {
    config: EngineConfig,
    store: MemoryStore,
    world: World,
    index: LabelIndex,
}

impl Engine {
    pub fn new(config: EngineConfig, world: WorldDef, seed: u64) -> Result<Self> {
        config.validate()?;
        let store = MemoryStore::new(config.views.dim, config.context.dim(), config.memory.clone())?;
        for l in &world.locations {
            if l.id as usize >= config.context.location_capacity {
                return Err(invalid(
                    "locations",
                    format!("location id {} exceeds capacity {}", l.id, config.context.location_capacity),
                ));
            }
        }
        let world = World::new(world, config.views, seed)?;
        Ok(Self {
            config,
            store,
            world,
            index: LabelIndex::new(),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn store(&self) -> &MemoryStore {
        &self.store
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn world_mut(&mut self) -> &mut World {
        &mut self.world
    }

    pub fn index(&self) -> &LabelIndex {
        &self.index
    }

    pub fn clock(&self) -> f64 {
        self.store.clock()
    }

    pub fn set_fallback(&mut self, on: bool) {
        self.config.fetch.fallback = on;
    }

    /// Shows `n_views` fresh views of an instance under the given label
    /// (the instance's own label when `None`).
    pub fn teach_object(&mut self, instance: &str, label: Option<&str>, n_views: usize) -> Result<TeachObjectOutcome> {
        if n_views == 0 {
            return Err(invalid("n_views", "must be >= 1"));
        }
        let label = match label {
            Some(l) => l.to_string(),
            None => self
                .world
                .label_of(instance)
                .ok_or_else(|| Error::UnknownInstance(instance.to_string()))?
                .to_string(),
        };
        if label.is_empty() {
            return Err(Error::EmptyLabel);
        }
        if !self.world.has_instance(instance) {
            return Err(Error::UnknownInstance(instance.to_string()));
        }
        self.index.register(&label, self.config.context.category_capacity)?;
        let mut recruited = Vec::with_capacity(n_views);
        for _ in 0..n_views {
            let view = self.world.draw_view(instance)?;
            recruited.push(self.store.learn(MemoryKind::Object, &label, &view)?.recruited());
        }
        Ok(TeachObjectOutcome {
            clusters_after: self.store.object_net.cluster_count(&label),
            views_used: n_views,
            label,
            recruited,
        })
    }

    /// Shows one view of a context: fresh views of the listed instances are
    /// recognised, encoded with the location, and taught under `name`.
    pub fn teach_context(&mut self, name: &str, location: LocationId, scene: &[String]) -> Result<TeachContextOutcome> {
        if !self.world.has_location(location) {
            return Err(Error::UnknownLocation(location));
        }
        for id in scene {
            if !self.world.has_instance(id) {
                return Err(Error::UnknownInstance(id.clone()));
            }
        }
        if self.store.object_net.is_empty() {
            return Err(Error::NoObjectsTaught);
        }
        let views = scene
            .iter()
            .map(|id| self.world.draw_view(id))
            .collect::<Result<Vec<_>>>()?;
        let (map, predicted_objects) = build_context_map(
            &views,
            location,
            &self.store.object_net,
            &self.index,
            self.store.clock(),
            &self.store.config().ltm_decay,
            &self.config.context,
        )?;
        let outcome = context::teach_context(&mut self.store, name, &map)?;
        Ok(TeachContextOutcome {
            predicted_objects,
            outcome,
        })
    }

    pub fn fetch(&mut self, label: &str) -> Result<FetchResult> {
        execute_fetch(
            &mut self.world,
            &mut self.store,
            &self.index,
            label,
            &self.config.context,
            self.config.fetch,
        )
    }

    /// Where the context network currently expects `label`.
    pub fn locate(&self, label: &str) -> Result<context::FetchQuery> {
        context::masked_fetch_query(&self.store, label, &self.index, &self.config.context)
    }

    /// Advances the clock, then evicts faded STM entries and prunes LTM.
    pub fn advance_clock(&mut self, days: f64) -> Result<f64> {
        let clock = self.store.advance_clock(days)?;
        self.store.stm_sweep()?;
        self.store.prune_ltm()?;
        Ok(clock)
    }

    pub fn mutate(&mut self, op: &WorldOp) -> Result<()> {
        self.world.mutate(op)
    }

    pub fn summary(&self) -> StateSummary {
        let now = self.store.clock();
        let decay = self.store.config().ltm_decay;
        let labels = |kind: MemoryKind| -> Vec<LabelSummary> {
            let net = self.store.net(kind);
            net.labels()
                .iter()
                .map(|l| {
                    let effective_weights: Vec<f64> = net
                        .clusters()
                        .iter()
                        .filter(|c| &c.label == l)
                        .map(|c| c.effective_weight(now, &decay).unwrap_or(0.0))
                        .collect();
                    LabelSummary {
                        label: l.clone(),
                        clusters: effective_weights.len(),
                        effective_weights,
                    }
                })
                .collect()
        };
        let object_labels = labels(MemoryKind::Object);
        let context_labels = labels(MemoryKind::Context);
        let uppers = [Some(0.5), Some(1.0), Some(2.0), Some(4.0), Some(8.0), None];
        let mut weight_histogram: Vec<WeightBin> = uppers.iter().map(|&upper| WeightBin { upper, count: 0 }).collect();
        for w in object_labels
            .iter()
            .chain(&context_labels)
            .flat_map(|l| l.effective_weights.iter())
        {
            let bin = uppers.iter().position(|u| u.is_none_or(|u| *w < u)).unwrap();
            weight_histogram[bin].count += 1;
        }
        StateSummary {
            clock: now,
            object_clusters: self.store.object_net.clusters().len(),
            context_clusters: self.store.context_net.clusters().len(),
            object_labels,
            context_labels,
            weight_histogram,
            stm_size: self.store.stm().len(),
            label_index: self.index.labels().to_vec(),
            placements: self.world.placements().clone(),
        }
    }

    pub fn snapshot(&self) -> MemorySnapshot {
        MemorySnapshot {
            schema: MEMORY_SNAPSHOT_SCHEMA,
            label_index: self.index.labels().to_vec(),
            context: self.config.context,
            store: self.store.clone(),
        }
    }

    /// Replaces memory and label index with a snapshot; the world is untouched.
    pub fn load_snapshot(&mut self, snap: MemorySnapshot) -> Result<()> {
        if snap.schema != MEMORY_SNAPSHOT_SCHEMA {
            return Err(Error::SnapshotVersion(snap.schema));
        }
        if snap.context != self.config.context {
            return Err(invalid("context", "snapshot was taken with a different context layout"));
        }
        if snap.store.object_net.dim() != self.config.views.dim {
            return Err(Error::DimensionMismatch {
                expected: self.config.views.dim,
                actual: snap.store.object_net.dim(),
            });
        }
        snap.store.check_invariants()?;
        self.index = LabelIndex::rebuilt(snap.label_index)?;
        self.config.memory = snap.store.config().clone();
        self.store = snap.store;
        Ok(())
    }
}
