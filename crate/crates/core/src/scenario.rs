//! Scenario scripts: the teaching protocol (increments of teaching, world
//! changes and fetch tests) plus the world it runs in.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::context::LocationId;
use crate::engine::EngineConfig;
use crate::home::{ErrorProbs, InstanceDef, Location, TimeModel, WorldDef, WorldOp};

pub const SCENARIO_SCHEMA: u32 = 1;

/// A rejected scenario, located by a JSON path such as
/// `increments[3].teach_objects[0].n_views`.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
    #[error("cannot read scenario: {0}")]
    Io(String),
}

impl ScenarioError {
    fn at(path: impl Into<String>, reason: impl Into<String>) -> Self {
        ScenarioError::Invalid {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub fn path(&self) -> Option<&str> {
        match self {
            ScenarioError::Invalid { path, .. } => Some(path),
            ScenarioError::Io(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeachObject {
    pub instance: String,
    /// Defaults to the instance's own label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub n_views: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeachContext {
    pub name: String,
    pub location: LocationId,
    pub scene: Vec<String>,
    /// Number of views of this scene to teach.
    #[serde(default = "one")]
    pub n_views: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Increment {
    /// Days added to the clock before this increment's teaching.
    #[serde(default)]
    pub clock_advance: f64,
    #[serde(default)]
    pub teach_objects: Vec<TeachObject>,
    #[serde(default)]
    pub teach_contexts: Vec<TeachContext>,
    /// Applied after teaching, before the fetch tests.
    #[serde(default)]
    pub world_ops: Vec<WorldOp>,
    #[serde(default)]
    pub fetch_tests: Vec<String>,
}

fn default_runs() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    pub schema: u32,
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    pub world: WorldDef,
    #[serde(default)]
    pub config: EngineConfig,
    pub increments: Vec<Increment>,
    /// Last increment (1-based) whose teaching the joint baseline sees and
    /// whose fetch tests it repeats; defaults to the last increment that
    /// teaches objects.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jt_cutoff: Option<usize>,
}

impl ScenarioScript {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let script: ScenarioScript = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ScenarioError::at(if path == "." { "(root)".to_string() } else { path }, e.into_inner().to_string())
        })?;
        script.validate()?;
        Ok(script)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }

    /// Increment index (0-based) the joint baseline stops at.
    pub fn jt_cutoff_index(&self) -> usize {
        match self.jt_cutoff {
            Some(k) => k - 1,
            None => self
                .increments
                .iter()
                .rposition(|i| !i.teach_objects.is_empty())
                .unwrap_or(0),
        }
    }

    /// Checks everything that can be checked without running: references,
    /// counts and parameter ranges, replaying world ops to track which
    /// instances exist at each increment.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema != SCENARIO_SCHEMA {
            return Err(ScenarioError::at("schema", format!("unsupported schema {}, expected {SCENARIO_SCHEMA}", self.schema)));
        }
        if self.runs == 0 {
            return Err(ScenarioError::at("runs", "must be >= 1"));
        }
        if self.increments.is_empty() {
            return Err(ScenarioError::at("increments", "must not be empty"));
        }
        if let Some(k) = self.jt_cutoff {
            if k == 0 || k > self.increments.len() {
                return Err(ScenarioError::at("jt_cutoff", format!("must be in 1..={}", self.increments.len())));
            }
        }
        self.config
            .validate()
            .map_err(|e| ScenarioError::at("config", e.to_string()))?;
        self.world
            .error_probs
            .validate()
            .map_err(|e| ScenarioError::at("world.error_probs", e.to_string()))?;

        let locations: BTreeSet<LocationId> = self.world.locations.iter().map(|l| l.id).collect();
        for (i, l) in self.world.locations.iter().enumerate() {
            if l.id as usize >= self.config.context.location_capacity {
                return Err(ScenarioError::at(
                    format!("world.locations[{i}].id"),
                    format!("exceeds location capacity {}", self.config.context.location_capacity),
                ));
            }
        }
        if locations.len() != self.world.locations.len() {
            return Err(ScenarioError::at("world.locations", "duplicate location id"));
        }
        if !locations.contains(&self.world.base_station) {
            return Err(ScenarioError::at("world.base_station", "unknown location"));
        }
        let mut instances: BTreeMap<String, String> = BTreeMap::new();
        for (i, inst) in self.world.instances.iter().enumerate() {
            let p = format!("world.instances[{i}]");
            if inst.label.is_empty() {
                return Err(ScenarioError::at(format!("{p}.label"), "must not be empty"));
            }
            if instances.insert(inst.id.clone(), inst.label.clone()).is_some() {
                return Err(ScenarioError::at(format!("{p}.id"), format!("duplicate instance `{}`", inst.id)));
            }
            if let Some(loc) = inst.location {
                if !locations.contains(&loc) {
                    return Err(ScenarioError::at(format!("{p}.location"), format!("unknown location {loc}")));
                }
            }
        }

        let mut taught: BTreeSet<String> = BTreeSet::new();
        for (k, inc) in self.increments.iter().enumerate() {
            let p = format!("increments[{k}]");
            if !(inc.clock_advance >= 0.0 && inc.clock_advance.is_finite()) {
                return Err(ScenarioError::at(format!("{p}.clock_advance"), "must be a finite number >= 0"));
            }
            for (j, t) in inc.teach_objects.iter().enumerate() {
                let q = format!("{p}.teach_objects[{j}]");
                let Some(label) = instances.get(&t.instance) else {
                    return Err(ScenarioError::at(format!("{q}.instance"), format!("unknown instance `{}`", t.instance)));
                };
                if t.n_views == 0 {
                    return Err(ScenarioError::at(format!("{q}.n_views"), "must be >= 1"));
                }
                let label = t.label.as_ref().unwrap_or(label);
                if label.is_empty() {
                    return Err(ScenarioError::at(format!("{q}.label"), "must not be empty"));
                }
                taught.insert(label.clone());
            }
            for (j, c) in inc.teach_contexts.iter().enumerate() {
                let q = format!("{p}.teach_contexts[{j}]");
                if c.name.is_empty() {
                    return Err(ScenarioError::at(format!("{q}.name"), "must not be empty"));
                }
                if !locations.contains(&c.location) {
                    return Err(ScenarioError::at(format!("{q}.location"), format!("unknown location {}", c.location)));
                }
                if c.n_views == 0 {
                    return Err(ScenarioError::at(format!("{q}.n_views"), "must be >= 1"));
                }
                if taught.is_empty() {
                    return Err(ScenarioError::at(q, "contexts need at least one taught object"));
                }
                for (s, id) in c.scene.iter().enumerate() {
                    if !instances.contains_key(id) {
                        return Err(ScenarioError::at(format!("{q}.scene[{s}]"), format!("unknown instance `{id}`")));
                    }
                }
            }
            for (j, op) in inc.world_ops.iter().enumerate() {
                let q = format!("{p}.world_ops[{j}]");
                match op {
                    WorldOp::Move { instance, location } => {
                        if !instances.contains_key(instance) {
                            return Err(ScenarioError::at(format!("{q}.instance"), format!("unknown instance `{instance}`")));
                        }
                        if !locations.contains(location) {
                            return Err(ScenarioError::at(format!("{q}.location"), format!("unknown location {location}")));
                        }
                    }
                    WorldOp::Remove { instance } => {
                        if instances.remove(instance).is_none() {
                            return Err(ScenarioError::at(format!("{q}.instance"), format!("unknown instance `{instance}`")));
                        }
                    }
                    WorldOp::Add {
                        instance,
                        label,
                        location,
                        ..
                    } => {
                        if !locations.contains(location) {
                            return Err(ScenarioError::at(format!("{q}.location"), format!("unknown location {location}")));
                        }
                        if label.is_empty() {
                            return Err(ScenarioError::at(format!("{q}.label"), "must not be empty"));
                        }
                        if instances.insert(instance.clone(), label.clone()).is_some() {
                            return Err(ScenarioError::at(format!("{q}.instance"), format!("duplicate instance `{instance}`")));
                        }
                    }
                }
            }
            for (j, label) in inc.fetch_tests.iter().enumerate() {
                if !instances.values().any(|l| l == label) && !taught.contains(label) {
                    return Err(ScenarioError::at(format!("{p}.fetch_tests[{j}]"), format!("label `{label}` is not defined in the world")));
                }
            }
        }
        Ok(())
    }
}

const KITCHEN_OBJECTS: [&str; 13] = [
    "cup", "plate", "bowl", "fork", "spoon", "knife", "mug", "kettle", "pan", "spatula", "sponge", "jar", "bottle",
];
const OFFICE_OBJECTS: [&str; 7] = ["stapler", "notebook", "pen", "scissors", "tape", "mouse", "calculator"];

const DINING: LocationId = 0;
const KITCHEN: LocationId = 1;
const OFFICE: LocationId = 2;

/// The 16-increment household protocol: 20 objects (13 kitchen, 7 office),
/// two teachable contexts and a dining-area base station. Increments 1-10
/// introduce objects and contexts; 11-16 move objects around and re-teach.
pub fn default_scenario() -> ScenarioScript {
    let mut instances = Vec::new();
    for (i, l) in KITCHEN_OBJECTS.iter().enumerate() {
        instances.push(instance(l, 100 + i as u64, KITCHEN));
    }
    for (i, l) in OFFICE_OBJECTS.iter().enumerate() {
        instances.push(instance(l, 200 + i as u64, OFFICE));
    }
    let world = WorldDef {
        locations: vec![
            Location { id: DINING, name: "dining area".into(), x: 0.0, y: 0.0 },
            Location { id: KITCHEN, name: "kitchen".into(), x: 6.5, y: 0.0 },
            Location { id: OFFICE, name: "office".into(), x: 0.0, y: 6.5 },
        ],
        base_station: DINING,
        instances,
        error_probs: ErrorProbs::NONE,
        time_model: TimeModel::default(),
    };

    // (kitchen objects, office objects) introduced per increment, and
    // whether that increment also teaches contexts.
    let plan: [(&[&str], &[&str], bool); 10] = [
        (&["cup", "plate"], &["stapler"], true),
        (&["bowl", "fork"], &["notebook"], true),
        (&["spoon", "knife"], &[], false),
        (&[], &[], true),
        (&["mug", "kettle"], &["pen"], true),
        (&["pan"], &["scissors"], false),
        (&[], &[], true),
        (&["spatula", "sponge"], &["tape"], true),
        (&["jar"], &["mouse"], true),
        (&["bottle"], &["calculator"], true),
    ];

    let mut present: Vec<(&str, LocationId)> = Vec::new();
    let mut in_context: Vec<(&str, LocationId)> = Vec::new();
    let mut increments = Vec::new();

    for (k, (kitchen, office, contexts)) in plan.iter().enumerate() {
        let mut inc = Increment {
            clock_advance: if k == 0 { 0.0 } else { 1.0 },
            ..Default::default()
        };
        for (j, l) in kitchen.iter().chain(office.iter()).enumerate() {
            inc.teach_objects.push(TeachObject {
                instance: l.to_string(),
                label: None,
                n_views: 5 + (k + 2 * j) % 6,
            });
        }
        present.extend(kitchen.iter().map(|l| (*l, KITCHEN)));
        present.extend(office.iter().map(|l| (*l, OFFICE)));
        if *contexts {
            inc.teach_contexts = context_views(&present, 3);
            in_context = present.clone();
        }
        inc.fetch_tests = balanced_tests(&in_context, k, 5);
        increments.push(inc);
    }

    // Increments 11-16: no new objects. Objects are cleared away and the
    // user shows each context again as it now looks.
    let removals: [&[&str]; 6] = [&["kettle"], &["tape"], &["sponge", "jar"], &["mouse"], &["pan"], &["calculator"]];
    for (k, gone) in removals.iter().enumerate() {
        let mut inc = Increment {
            clock_advance: 1.0,
            ..Default::default()
        };
        for id in gone.iter() {
            inc.world_ops.push(WorldOp::Remove {
                instance: id.to_string(),
            });
        }
        present.retain(|(l, _)| !gone.contains(l));
        inc.teach_contexts = context_views(&present, 1);
        inc.fetch_tests = balanced_tests(&present, 10 + k, 7);
        increments.push(inc);
    }

    ScenarioScript {
        schema: SCENARIO_SCHEMA,
        seed: 2024,
        runs: 5,
        world,
        config: EngineConfig::default(),
        increments,
        jt_cutoff: None,
    }
}

fn instance(label: &str, seed: u64, location: LocationId) -> InstanceDef {
    InstanceDef {
        id: label.to_string(),
        label: label.to_string(),
        seed,
        embeddings: None,
        location: Some(location),
    }
}

fn context_views(present: &[(&str, LocationId)], n_views: usize) -> Vec<TeachContext> {
    [("kitchen", KITCHEN), ("office", OFFICE)]
        .iter()
        .filter_map(|(name, loc)| {
            let scene: Vec<String> = present
                .iter()
                .filter(|(_, at)| at == loc)
                .map(|(l, _)| l.to_string())
                .collect();
            (!scene.is_empty()).then(|| TeachContext {
                name: name.to_string(),
                location: *loc,
                scene,
                n_views,
            })
        })
        .collect()
}

/// `n` fetch targets alternating between the kitchen and the office, each
/// side cycling through its objects from an increment-dependent offset.
fn balanced_tests(candidates: &[(&str, LocationId)], increment: usize, n: usize) -> Vec<String> {
    let side = |loc| -> Vec<&str> { candidates.iter().filter(|(_, at)| *at == loc).map(|(l, _)| *l).collect() };
    let (kitchen, office) = (side(KITCHEN), side(OFFICE));
    let mut out = Vec::with_capacity(n);
    let (mut ki, mut oi) = (increment * 3, increment * 2);
    for i in 0..n {
        let use_office = (i + increment) % 2 == 1 && !office.is_empty() || kitchen.is_empty();
        if use_office {
            if office.is_empty() {
                break;
            }
            out.push(office[oi % office.len()].to_string());
            oi += 1;
        } else {
            out.push(kitchen[ki % kitchen.len()].to_string());
            ki += 1;
        }
    }
    out
}
