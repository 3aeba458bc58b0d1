//! Long-term memory (the object and context networks, slow fading) plus a
//! short-term instance buffer with fast fading and threshold consolidation.

use serde::{Deserialize, Serialize};

use crate::cluster::{CategoryNetwork, LearnOutcome, NetworkConfig};
use crate::decay::{effective_weight, push_event, DecayConfig};
use crate::error::{invalid, Error, Result};
use crate::feature::{l1, FeatureVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryKind {
    Object,
    Context,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StmEntry {
    pub feature: FeatureVector,
    pub label: String,
    pub kind: MemoryKind,
    pub encounter_weight: f64,
    pub activation_events: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemoryConfig {
    /// Consolidation threshold on the faded encounter weight.
    pub gamma: f64,
    pub ltm_decay: DecayConfig,
    pub stm_decay: DecayConfig,
    pub stm_evict_floor: f64,
    /// 0 disables LTM pruning.
    pub ltm_prune_floor: f64,
    /// L1 radius within which an observation counts as the same instance.
    pub stm_match_radius: f64,
    pub object_net: NetworkConfig,
    pub context_net: NetworkConfig,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            gamma: 3.0,
            ltm_decay: DecayConfig::ltm(),
            stm_decay: DecayConfig::stm(),
            stm_evict_floor: 1e-4,
            ltm_prune_floor: 0.0,
            stm_match_radius: 2.0,
            object_net: NetworkConfig::objects(),
            context_net: NetworkConfig::contexts(),
        }
    }
}

impl MemoryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 1.0 && self.gamma.is_finite()) {
            return Err(invalid("gamma", "must be > 1"));
        }
        self.ltm_decay.validate()?;
        self.stm_decay.validate()?;
        if self.stm_evict_floor.is_nan() || self.stm_evict_floor < 0.0 {
            return Err(invalid("stm_evict_floor", "must be >= 0"));
        }
        if self.ltm_prune_floor.is_nan() || self.ltm_prune_floor < 0.0 {
            return Err(invalid("ltm_prune_floor", "must be >= 0"));
        }
        if self.stm_match_radius.is_nan() || self.stm_match_radius < 0.0 {
            return Err(invalid("stm_match_radius", "must be >= 0"));
        }
        self.object_net.validate()?;
        self.context_net.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StmOutcome {
    Buffered,
    Reinforced { encounter_weight: f64 },
    Consolidated { label: String, ltm: LearnOutcome },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryStore {
    pub object_net: CategoryNetwork,
    pub context_net: CategoryNetwork,
    stm: Vec<StmEntry>,
    clock: f64,
    config: MemoryConfig,
}

impl MemoryStore {
    pub fn new(object_dim: usize, context_dim: usize, config: MemoryConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            object_net: CategoryNetwork::new(object_dim, config.object_net)?,
            context_net: CategoryNetwork::new(context_dim, config.context_net)?,
            stm: Vec::new(),
            clock: 0.0,
            config,
        })
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn config(&self) -> &MemoryConfig {
        &self.config
    }

    pub fn stm(&self) -> &[StmEntry] {
        &self.stm
    }

    pub fn net(&self, kind: MemoryKind) -> &CategoryNetwork {
        match kind {
            MemoryKind::Object => &self.object_net,
            MemoryKind::Context => &self.context_net,
        }
    }

    fn net_mut(&mut self, kind: MemoryKind) -> &mut CategoryNetwork {
        match kind {
            MemoryKind::Object => &mut self.object_net,
            MemoryKind::Context => &mut self.context_net,
        }
    }

    /// Teaches LTM directly at the current clock.
    pub fn learn(&mut self, kind: MemoryKind, label: &str, x: &FeatureVector) -> Result<LearnOutcome> {
        let now = self.clock;
        let decay = self.config.ltm_decay;
        self.net_mut(kind).learn_one(label, x, now, &decay)
    }

    /// Records one encounter in STM, consolidating into LTM once the
    /// instance's faded encounter weight exceeds `gamma`.
    pub fn stm_observe(
        &mut self,
        feature: &FeatureVector,
        label: &str,
        kind: MemoryKind,
    ) -> Result<StmOutcome> {
        feature.expect_dim(self.net(kind).dim())?;
        let now = self.clock;
        let radius = self.config.stm_match_radius;
        let mut best: Option<(usize, f64)> = None;
        for (i, e) in self.stm.iter().enumerate() {
            if e.kind != kind {
                continue;
            }
            let d = l1(e.feature.as_slice(), feature.as_slice());
            if d <= radius && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        let Some((i, _)) = best else {
            self.stm.push(StmEntry {
                feature: feature.clone(),
                label: label.to_string(),
                kind,
                encounter_weight: 1.0,
                activation_events: vec![now],
            });
            return Ok(StmOutcome::Buffered);
        };

        let decay = self.config.stm_decay;
        let entry = &mut self.stm[i];
        let w = effective_weight(entry.encounter_weight, &entry.activation_events, now, &decay)? + 1.0;
        entry.encounter_weight = w;
        push_event(&mut entry.activation_events, now, decay.max_events);
        if w <= self.config.gamma {
            return Ok(StmOutcome::Reinforced { encounter_weight: w });
        }
        let entry = self.stm.remove(i);
        let ltm = self.learn(entry.kind, &entry.label, &entry.feature)?;
        Ok(StmOutcome::Consolidated {
            label: entry.label,
            ltm,
        })
    }

    /// Drops STM entries whose faded weight fell below the eviction floor.
    pub fn stm_sweep(&mut self) -> Result<usize> {
        let now = self.clock;
        let decay = self.config.stm_decay;
        let floor = self.config.stm_evict_floor;
        let weights = self
            .stm
            .iter()
            .map(|e| effective_weight(e.encounter_weight, &e.activation_events, now, &decay))
            .collect::<Result<Vec<_>>>()?;
        let before = self.stm.len();
        let mut it = weights.iter();
        self.stm.retain(|_| *it.next().unwrap() >= floor);
        Ok(before - self.stm.len())
    }

    /// Prunes both LTM networks with the configured floor (no-op at 0).
    pub fn prune_ltm(&mut self) -> Result<usize> {
        let now = self.clock;
        let decay = self.config.ltm_decay;
        let floor = self.config.ltm_prune_floor;
        Ok(self.object_net.prune(now, &decay, floor)? + self.context_net.prune(now, &decay, floor)?)
    }

    /// Moves simulated time forward. Decay itself is evaluated lazily.
    pub fn advance_clock(&mut self, delta_days: f64) -> Result<f64> {
        if !(delta_days > 0.0 && delta_days.is_finite()) {
            return Err(invalid("delta_days", format!("must be positive, got {delta_days}")));
        }
        self.clock += delta_days;
        Ok(self.clock)
    }

    pub fn effective_weight_of(&self, kind: MemoryKind, cluster_id: u64) -> Option<f64> {
        let c = self.net(kind).cluster(cluster_id)?;
        c.effective_weight(self.clock, &self.config.ltm_decay).ok()
    }

    pub(crate) fn check_invariants(&self) -> Result<()> {
        for e in &self.stm {
            if e.activation_events.last().copied().unwrap_or(0.0) > self.clock {
                return Err(Error::FutureEvent {
                    event: *e.activation_events.last().unwrap(),
                    now: self.clock,
                });
            }
        }
        Ok(())
    }
}
