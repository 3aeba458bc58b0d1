//! Label-partitioned cluster network.
//!
//! Each cluster responds to an input with activation `exp(-d / w)` where `d`
//! is the L1 distance to its centroid and `w` its faded weight. The winning
//! cluster's output is damped by the activations of its competitors; a
//! training sample whose winner output falls below `tau` recruits a new
//! cluster, otherwise the winner absorbs it as a weighted running mean.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::decay::{effective_weight, push_event, DecayConfig};
use crate::error::{invalid, Error, Result};
use crate::feature::{l1, masked_l1, FeatureVector};

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: u64,
    pub label: String,
    pub centroid: FeatureVector,
    pub raw_weight: f64,
    /// Activation timestamps in days, oldest first.
    pub activation_events: Vec<f64>,
}

impl Cluster {
    pub fn effective_weight(&self, now: f64, decay: &DecayConfig) -> Result<f64> {
        effective_weight(self.raw_weight, &self.activation_events, now, decay)
    }

    pub fn last_event(&self) -> f64 {
        self.activation_events.last().copied().unwrap_or(f64::NEG_INFINITY)
    }
}

/// Which clusters compete for a training sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceScope {
    #[default]
    WithinLabel,
    AllLabels,
}

/// What happens to a winner's event history when it absorbs a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryMode {
    /// Replace the history with the single current timestamp.
    #[default]
    Reset,
    /// Append the current timestamp, keeping up to `max_events`.
    Append,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// Recruitment threshold on the winner output.
    pub tau: f64,
    /// Inhibition exponent.
    pub beta: f64,
    #[serde(default)]
    pub distance_scope: DistanceScope,
    #[serde(default)]
    pub history: HistoryMode,
}

impl NetworkConfig {
    pub const OBJECT_TAU: f64 = 0.0003;
    pub const CONTEXT_TAU: f64 = 0.13;

    pub fn with_tau(tau: f64) -> Self {
        Self {
            tau,
            beta: 1.0,
            distance_scope: DistanceScope::WithinLabel,
            history: HistoryMode::Reset,
        }
    }

    pub fn objects() -> Self {
        Self::with_tau(Self::OBJECT_TAU)
    }

    pub fn contexts() -> Self {
        Self::with_tau(Self::CONTEXT_TAU)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(invalid("tau", format!("must lie in (0, 1], got {}", self.tau)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(invalid("beta", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterScore {
    pub cluster_id: u64,
    pub label: String,
    pub distance: f64,
    pub effective_weight: f64,
    pub activation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationReport {
    pub scores: Vec<ClusterScore>,
    pub winner_id: u64,
    pub winner_output: f64,
}

impl ActivationReport {
    pub fn winner(&self) -> &ClusterScore {
        self.scores
            .iter()
            .find(|s| s.cluster_id == self.winner_id)
            .expect("winner is always among the scores")
    }

    /// Scores sorted by activation, highest first; ties by cluster id.
    pub fn ranked(&self) -> Vec<&ClusterScore> {
        let mut v: Vec<_> = self.scores.iter().collect();
        v.sort_by(|a, b| {
            b.activation
                .total_cmp(&a.activation)
                .then(a.cluster_id.cmp(&b.cluster_id))
        });
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnOutcome {
    Recruited {
        cluster_id: u64,
        /// Winner output that triggered recruitment, if any cluster competed.
        winner_output: Option<f64>,
    },
    Updated {
        cluster_id: u64,
        winner_output: f64,
    },
}

impl LearnOutcome {
    pub fn recruited(&self) -> bool {
        matches!(self, LearnOutcome::Recruited { .. })
    }

    pub fn cluster_id(&self) -> u64 {
        match *self {
            LearnOutcome::Recruited { cluster_id, .. } | LearnOutcome::Updated { cluster_id, .. } => {
                cluster_id
            }
        }
    }
}

/// `exp(-d / w)` with `d` the L1 distance between centroid and input.
pub fn activation(centroid: &FeatureVector, effective_weight: f64, x: &FeatureVector) -> Result<f64> {
    if effective_weight.is_nan() || effective_weight <= 0.0 {
        return Err(Error::NonPositiveWeight(effective_weight));
    }
    let d = centroid.l1_distance(x)?;
    Ok(activation_from_distance(d, effective_weight))
}

fn activation_from_distance(d: f64, w: f64) -> f64 {
    if w > 0.0 {
        (-d / w).exp()
    } else if d == 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Picks the strongest activation (lowest index on ties) and returns it
/// together with its inhibited output `H_w^beta / sum_s H_s^beta * H_w`.
pub fn winner_output(activations: &[f64], beta: f64) -> Result<(usize, f64)> {
    if activations.is_empty() {
        return Err(Error::EmptyActivations);
    }
    let mut best = 0;
    for (i, &a) in activations.iter().enumerate().skip(1) {
        if a > activations[best] {
            best = i;
        }
    }
    Ok((best, inhibited_output(activations, best, beta)))
}

fn inhibited_output(activations: &[f64], winner: usize, beta: f64) -> f64 {
    let hw = activations[winner];
    if activations.len() == 1 {
        return hw;
    }
    let denom: f64 = activations.iter().map(|a| a.powf(beta)).sum();
    if denom == 0.0 {
        return 0.0;
    }
    hw.powf(beta) / denom * hw
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryNetwork {
    dim: usize,
    config: NetworkConfig,
    clusters: Vec<Cluster>,
    labels: BTreeSet<String>,
    next_id: u64,
    last_time: f64,
}

impl CategoryNetwork {
    pub fn new(dim: usize, config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        if dim == 0 {
            return Err(invalid("dim", "must be positive"));
        }
        Ok(Self {
            dim,
            config,
            clusters: Vec::new(),
            labels: BTreeSet::new(),
            next_id: 0,
            last_time: f64::NEG_INFINITY,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn labels(&self) -> &BTreeSet<String> {
        &self.labels
    }

    pub fn knows(&self, label: &str) -> bool {
        self.labels.contains(label)
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn cluster_count(&self, label: &str) -> usize {
        self.clusters.iter().filter(|c| c.label == label).count()
    }

    pub fn cluster(&self, id: u64) -> Option<&Cluster> {
        self.clusters.iter().find(|c| c.id == id)
    }

    /// Time of the most recent event recorded anywhere in the network.
    pub fn last_time(&self) -> f64 {
        self.last_time
    }

    /// Trains on one labelled sample.
    ///
    /// The order of samples matters: the same multiset fed in a different
    /// order can yield different clusters.
    pub fn learn_one(
        &mut self,
        label: &str,
        x: &FeatureVector,
        now: f64,
        decay: &DecayConfig,
    ) -> Result<LearnOutcome> {
        if label.is_empty() {
            return Err(Error::EmptyLabel);
        }
        x.expect_dim(self.dim)?;
        if now < self.last_time {
            return Err(Error::TimeRegression {
                now,
                last: self.last_time,
            });
        }

        let competitors: Vec<usize> = match self.config.distance_scope {
            DistanceScope::WithinLabel => self
                .clusters
                .iter()
                .enumerate()
                .filter(|(_, c)| c.label == label)
                .map(|(i, _)| i)
                .collect(),
            DistanceScope::AllLabels => (0..self.clusters.len()).collect(),
        };
        let has_label = self.clusters.iter().any(|c| c.label == label);
        if competitors.is_empty() || !has_label {
            let id = self.recruit(label, x, now);
            return Ok(LearnOutcome::Recruited {
                cluster_id: id,
                winner_output: None,
            });
        }

        let mut weights = Vec::with_capacity(competitors.len());
        let mut acts = Vec::with_capacity(competitors.len());
        for &i in &competitors {
            let c = &self.clusters[i];
            let w = c.effective_weight(now, decay)?;
            acts.push(activation_from_distance(l1(c.centroid.as_slice(), x.as_slice()), w));
            weights.push(w);
        }
        let local = argmax_by_id(&acts, |k| self.clusters[competitors[k]].id);
        let h_out = inhibited_output(&acts, local, self.config.beta);
        let winner = competitors[local];

        if h_out < self.config.tau || self.clusters[winner].label != label {
            let id = self.recruit(label, x, now);
            return Ok(LearnOutcome::Recruited {
                cluster_id: id,
                winner_output: Some(h_out),
            });
        }

        let w = weights[local];
        let max_events = decay.max_events;
        let history = self.config.history;
        let c = &mut self.clusters[winner];
        let centroid: Vec<f64> = c
            .centroid
            .as_slice()
            .iter()
            .zip(x.as_slice())
            .map(|(ci, xi)| (w * ci + xi) / (w + 1.0))
            .collect();
        c.centroid = FeatureVector::new(centroid)?;
        c.raw_weight = w + 1.0;
        match history {
            HistoryMode::Reset => c.activation_events = vec![now],
            HistoryMode::Append => push_event(&mut c.activation_events, now, max_events),
        }
        self.last_time = now;
        Ok(LearnOutcome::Updated {
            cluster_id: c.id,
            winner_output: h_out,
        })
    }

    fn recruit(&mut self, label: &str, x: &FeatureVector, now: f64) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.clusters.push(Cluster {
            id,
            label: label.to_string(),
            centroid: x.clone(),
            raw_weight: 1.0,
            activation_events: vec![now],
        });
        self.labels.insert(label.to_string());
        self.last_time = now;
        id
    }

    /// Scores every cluster against `x`; distances are restricted to `mask`
    /// when given. Read-only.
    pub fn score(
        &self,
        x: &FeatureVector,
        mask: Option<&[bool]>,
        now: f64,
        decay: &DecayConfig,
    ) -> Result<ActivationReport> {
        if self.clusters.is_empty() {
            return Err(Error::EmptyNetwork);
        }
        x.expect_dim(self.dim)?;
        if let Some(m) = mask {
            if m.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    actual: m.len(),
                });
            }
        }
        let mut scores = Vec::with_capacity(self.clusters.len());
        for c in &self.clusters {
            let w = c.effective_weight(now, decay)?;
            let d = match mask {
                Some(m) => masked_l1(c.centroid.as_slice(), x.as_slice(), m),
                None => l1(c.centroid.as_slice(), x.as_slice()),
            };
            scores.push(ClusterScore {
                cluster_id: c.id,
                label: c.label.clone(),
                distance: d,
                effective_weight: w,
                activation: activation_from_distance(d, w),
            });
        }
        let acts: Vec<f64> = scores.iter().map(|s| s.activation).collect();
        let win = argmax_by_id(&acts, |k| scores[k].cluster_id);
        let winner_output = inhibited_output(&acts, win, self.config.beta);
        Ok(ActivationReport {
            winner_id: scores[win].cluster_id,
            winner_output,
            scores,
        })
    }

    /// Label of the globally winning cluster across all labels.
    pub fn classify(
        &self,
        x: &FeatureVector,
        now: f64,
        decay: &DecayConfig,
    ) -> Result<(String, ActivationReport)> {
        let report = self.score(x, None, now, decay)?;
        Ok((report.winner().label.clone(), report))
    }

    /// Removes clusters whose effective weight fell below `floor`, always
    /// keeping the strongest cluster of every label.
    pub fn prune(&mut self, now: f64, decay: &DecayConfig, floor: f64) -> Result<usize> {
        if floor.is_nan() || floor <= 0.0 {
            return Ok(0);
        }
        let weights = self
            .clusters
            .iter()
            .map(|c| c.effective_weight(now, decay))
            .collect::<Result<Vec<_>>>()?;
        let mut keep = vec![true; self.clusters.len()];
        for label in &self.labels {
            let idx: Vec<usize> = (0..self.clusters.len())
                .filter(|&i| &self.clusters[i].label == label)
                .collect();
            let strongest = idx
                .iter()
                .copied()
                .max_by(|&a, &b| weights[a].total_cmp(&weights[b]).then(b.cmp(&a)));
            for &i in &idx {
                if weights[i] < floor && Some(i) != strongest {
                    keep[i] = false;
                }
            }
        }
        let before = self.clusters.len();
        let mut it = keep.iter();
        self.clusters.retain(|_| *it.next().unwrap());
        Ok(before - self.clusters.len())
    }

    pub fn snapshot(&self) -> NetworkSnapshot {
        NetworkSnapshot {
            version: SNAPSHOT_VERSION,
            network: self.clone(),
        }
    }

    pub fn from_snapshot(snapshot: NetworkSnapshot) -> Result<Self> {
        if snapshot.version != SNAPSHOT_VERSION {
            return Err(Error::SnapshotVersion(snapshot.version));
        }
        let net = snapshot.network;
        net.config.validate()?;
        let mut ids = BTreeSet::new();
        for c in &net.clusters {
            c.centroid.expect_dim(net.dim)?;
            if !net.labels.contains(&c.label) {
                return Err(Error::UnknownLabel(c.label.clone()));
            }
            if !ids.insert(c.id) {
                return Err(invalid("clusters", format!("duplicate cluster id {}", c.id)));
            }
        }
        Ok(net)
    }
}

/// Index of the largest value; ties go to the smallest id.
fn argmax_by_id(values: &[f64], id_of: impl Fn(usize) -> u64) -> usize {
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] > values[best] || (values[i] == values[best] && id_of(i) < id_of(best)) {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSnapshot {
    pub version: u32,
    pub network: CategoryNetwork,
}
