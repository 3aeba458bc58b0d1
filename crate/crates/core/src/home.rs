//! Simulated home: locations, object placements, seeded perception, and the
//! fetch pipeline (query, navigate, perceive, pick, return) with injected
//! perception, manipulation and navigation failures.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::context::{build_context_map, masked_fetch_query, ContextSpaceConfig, LabelIndex, LocationId};
use crate::error::{invalid, Error, Result};
use crate::feature::{load_embeddings, make_category_model, mix, sample_view, FeatureVector, SyntheticCategoryModel};
use crate::memory::{MemoryKind, MemoryStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Location {
    pub id: LocationId,
    pub name: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDef {
    pub id: String,
    pub label: String,
    /// Seed of the synthetic category model.
    #[serde(default)]
    pub seed: u64,
    /// Replay recorded embeddings (lines whose label matches) instead of
    /// synthesising views.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    /// Initial placement; `None` leaves the instance off the map.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<LocationId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorProbs {
    /// Per object and perception pass.
    pub p_detect_fail: f64,
    /// Per pick.
    pub p_manip_fail: f64,
    /// Per navigation leg.
    pub p_nav_fail: f64,
    /// Per place at the base station.
    #[serde(default)]
    pub p_place_fail: f64,
}

impl ErrorProbs {
    pub const NONE: ErrorProbs = ErrorProbs {
        p_detect_fail: 0.0,
        p_manip_fail: 0.0,
        p_nav_fail: 0.0,
        p_place_fail: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_detect_fail", self.p_detect_fail),
            ("p_manip_fail", self.p_manip_fail),
            ("p_nav_fail", self.p_nav_fail),
            ("p_place_fail", self.p_place_fail),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(name, format!("probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

impl Default for ErrorProbs {
    fn default() -> Self {
        Self {
            p_detect_fail: 0.05,
            p_manip_fail: 0.08,
            p_nav_fail: 0.02,
            p_place_fail: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeModel {
    pub sec_per_meter: f64,
    pub sec_perceive: f64,
    pub sec_manip: f64,
    pub sec_fixed: f64,
}

impl Default for TimeModel {
    fn default() -> Self {
        Self {
            sec_per_meter: 4.0,
            sec_perceive: 5.0,
            sec_manip: 15.0,
            sec_fixed: 10.0,
        }
    }
}

impl TimeModel {
    /// Error-free single trip to a location `distance` meters from base.
    pub fn single_trip(&self, distance: f64) -> f64 {
        2.0 * distance * self.sec_per_meter + self.sec_perceive + 2.0 * self.sec_manip + self.sec_fixed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldDef {
    pub locations: Vec<Location>,
    pub base_station: LocationId,
    pub instances: Vec<InstanceDef>,
    #[serde(default)]
    pub error_probs: ErrorProbs,
    #[serde(default)]
    pub time_model: TimeModel,
}

impl WorldDef {
    pub fn location(&self, id: LocationId) -> Option<&Location> {
        self.locations.iter().find(|l| l.id == id)
    }

    pub fn instance(&self, id: &str) -> Option<&InstanceDef> {
        self.instances.iter().find(|i| i.id == id)
    }

    pub fn distance(&self, a: LocationId, b: LocationId) -> Option<f64> {
        let (a, b) = (self.location(a)?, self.location(b)?);
        Some((a.x - b.x).hypot(a.y - b.y))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum WorldOp {
    Move {
        instance: String,
        location: LocationId,
    },
    Remove {
        instance: String,
    },
    Add {
        instance: String,
        label: String,
        #[serde(default)]
        seed: u64,
        location: LocationId,
    },
}

#[derive(Debug, Clone)]
enum ViewSource {
    Synthetic(SyntheticCategoryModel),
    Recorded(Vec<FeatureVector>),
}

#[derive(Debug, Clone)]
struct Instance {
    label: String,
    source: ViewSource,
    views_drawn: u64,
}

/// Perception and view-synthesis settings shared by every instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewConfig {
    pub dim: usize,
    pub sigma: f64,
    /// L2-normalise every view before it reaches the learner.
    #[serde(default)]
    pub normalize: bool,
}

impl Default for ViewConfig {
    fn default() -> Self {
        Self {
            dim: crate::feature::DEFAULT_DIM,
            sigma: 0.05,
            normalize: false,
        }
    }
}

/// Mutable world state for one session or run.
#[derive(Debug, Clone)]
pub struct World {
    def: WorldDef,
    views: ViewConfig,
    instances: BTreeMap<String, Instance>,
    placements: BTreeMap<String, LocationId>,
    robot_pose: LocationId,
    rng: ChaCha8Rng,
    view_base: u64,
}

impl World {
    pub fn new(def: WorldDef, views: ViewConfig, seed: u64) -> Result<Self> {
        def.error_probs.validate()?;
        if def.location(def.base_station).is_none() {
            return Err(Error::UnknownLocation(def.base_station));
        }
        let mut seen = std::collections::BTreeSet::new();
        for l in &def.locations {
            if !seen.insert(l.id) {
                return Err(invalid("locations", format!("duplicate location id {}", l.id)));
            }
        }
        let mut world = Self {
            robot_pose: def.base_station,
            def: WorldDef {
                instances: Vec::new(),
                ..def.clone()
            },
            views,
            instances: BTreeMap::new(),
            placements: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(mix(&[seed, 0x0057_4f52_4c44])),
            // Each run sees a different slice of every instance's view stream.
            view_base: mix(&[seed, 0x5649_4557]) >> 24,
        };
        for inst in &def.instances {
            world.insert_instance(inst.clone())?;
        }
        Ok(world)
    }

    fn insert_instance(&mut self, def: InstanceDef) -> Result<()> {
        if self.instances.contains_key(&def.id) {
            return Err(Error::DuplicateInstance(def.id));
        }
        if let Some(loc) = def.location {
            self.check_location(loc)?;
        }
        let source = match &def.embeddings {
            Some(path) => {
                let records: Vec<FeatureVector> = load_embeddings(path, self.views.dim)?
                    .into_iter()
                    .filter(|r| r.label == def.label)
                    .map(|r| r.vector)
                    .collect();
                if records.is_empty() {
                    return Err(invalid(
                        "embeddings",
                        format!("no vectors labelled `{}` in {}", def.label, path.display()),
                    ));
                }
                ViewSource::Recorded(records)
            }
            None => ViewSource::Synthetic(make_category_model(&def.label, def.seed, self.views.sigma, self.views.dim)?),
        };
        self.instances.insert(
            def.id.clone(),
            Instance {
                label: def.label.clone(),
                source,
                views_drawn: 0,
            },
        );
        if let Some(loc) = def.location {
            self.placements.insert(def.id.clone(), loc);
        }
        self.def.instances.push(def);
        Ok(())
    }

    fn check_location(&self, id: LocationId) -> Result<()> {
        self.def
            .location(id)
            .map(|_| ())
            .ok_or(Error::UnknownLocation(id))
    }

    pub fn def(&self) -> &WorldDef {
        &self.def
    }

    pub fn error_probs(&self) -> ErrorProbs {
        self.def.error_probs
    }

    pub fn set_error_probs(&mut self, p: ErrorProbs) -> Result<()> {
        p.validate()?;
        self.def.error_probs = p;
        Ok(())
    }

    pub fn time_model(&self) -> &TimeModel {
        &self.def.time_model
    }

    pub fn placements(&self) -> &BTreeMap<String, LocationId> {
        &self.placements
    }

    pub fn robot_pose(&self) -> LocationId {
        self.robot_pose
    }

    pub fn label_of(&self, instance: &str) -> Option<&str> {
        self.instances.get(instance).map(|i| i.label.as_str())
    }

    pub fn has_instance(&self, instance: &str) -> bool {
        self.instances.contains_key(instance)
    }

    pub fn has_location(&self, id: LocationId) -> bool {
        self.def.location(id).is_some()
    }

    pub fn instances_at(&self, location: LocationId) -> Vec<&str> {
        self.placements
            .iter()
            .filter(|(_, &l)| l == location)
            .map(|(i, _)| i.as_str())
            .collect()
    }

    /// Locations currently holding an instance with this label.
    pub fn locations_of_label(&self, label: &str) -> Vec<LocationId> {
        let mut v: Vec<LocationId> = self
            .placements
            .iter()
            .filter(|(i, _)| self.label_of(i) == Some(label))
            .map(|(_, &l)| l)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn label_exists(&self, label: &str) -> bool {
        self.instances.values().any(|i| i.label == label)
    }

    /// Draws the next view of an instance; advances that instance's view counter.
    pub fn draw_view(&mut self, instance: &str) -> Result<FeatureVector> {
        let normalize = self.views.normalize;
        let base = self.view_base;
        let inst = self
            .instances
            .get_mut(instance)
            .ok_or_else(|| Error::UnknownInstance(instance.to_string()))?;
        let k = inst.views_drawn;
        inst.views_drawn += 1;
        let v = match &inst.source {
            ViewSource::Synthetic(model) => sample_view(model, base.wrapping_add(k)),
            ViewSource::Recorded(records) => records[((base.wrapping_add(k)) % records.len() as u64) as usize].clone(),
        };
        Ok(if normalize { v.l2_normalized() } else { v })
    }

    /// Views of the instances placed at `location`, each detected with
    /// probability `1 - p_detect_fail`. Missed instances are listed separately.
    pub fn perceive(&mut self, location: LocationId) -> Result<Perception> {
        self.check_location(location)?;
        let p = self.def.error_probs.p_detect_fail;
        let here: Vec<String> = self.instances_at(location).into_iter().map(String::from).collect();
        let mut perception = Perception::default();
        for id in here {
            if self.rng.random::<f64>() < p {
                perception.missed.push(id);
            } else {
                let v = self.draw_view(&id)?;
                perception.views.push((id, v));
            }
        }
        Ok(perception)
    }

    pub fn mutate(&mut self, op: &WorldOp) -> Result<()> {
        match op {
            WorldOp::Move { instance, location } => {
                if !self.instances.contains_key(instance) {
                    return Err(Error::UnknownInstance(instance.clone()));
                }
                self.check_location(*location)?;
                self.placements.insert(instance.clone(), *location);
            }
            WorldOp::Remove { instance } => {
                if self.instances.remove(instance).is_none() {
                    return Err(Error::UnknownInstance(instance.clone()));
                }
                self.placements.remove(instance);
                self.def.instances.retain(|i| &i.id != instance);
            }
            WorldOp::Add {
                instance,
                label,
                seed,
                location,
            } => {
                self.check_location(*location)?;
                self.insert_instance(InstanceDef {
                    id: instance.clone(),
                    label: label.clone(),
                    seed: *seed,
                    embeddings: None,
                    location: Some(*location),
                })?;
            }
        }
        Ok(())
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.random::<f64>() < p
    }

    fn leg_distance(&self, a: LocationId, b: LocationId) -> f64 {
        self.def.distance(a, b).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Perception {
    pub views: Vec<(String, FeatureVector)>,
    pub missed: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    None,
    WrongContext,
    Misclassified,
    DetectFail,
    ManipFail,
    NavFail,
    Absent,
}

impl FailureKind {
    /// Failures caused by the plumbing rather than by what was learned.
    pub fn is_non_learning(self) -> bool {
        matches!(self, FailureKind::DetectFail | FailureKind::ManipFail | FailureKind::NavFail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LegKind {
    Query,
    Navigate,
    Perceive,
    Pick,
    Return,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub kind: LegKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub location: Option<LocationId>,
    pub time: f64,
    pub ok: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub instance: String,
    pub true_label: String,
    pub predicted: String,
    pub activation: f64,
    pub location: LocationId,
    pub feature: FeatureVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchResult {
    pub requested: String,
    pub predicted_context: Option<(String, LocationId)>,
    /// Whether the first predicted location held the requested object;
    /// `None` when the object is nowhere in the world or no query ran.
    pub context_correct: Option<bool>,
    pub legs: Vec<Leg>,
    pub success: bool,
    pub failure_kind: FailureKind,
    pub execution_time: f64,
    pub observations: Vec<Observation>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FetchOptions {
    /// On a miss, try the next-ranked distinct location instead of failing.
    #[serde(default)]
    pub fallback: bool,
}

/// Runs one fetch task end to end. Perceived views are forwarded to STM.
pub fn execute_fetch(
    world: &mut World,
    store: &mut MemoryStore,
    index: &LabelIndex,
    label: &str,
    ctx: &ContextSpaceConfig,
    opts: FetchOptions,
) -> Result<FetchResult> {
    let mut result = FetchResult {
        requested: label.to_string(),
        predicted_context: None,
        context_correct: None,
        legs: Vec::new(),
        success: false,
        failure_kind: FailureKind::Absent,
        execution_time: 0.0,
        observations: Vec::new(),
    };
    if !store.object_net.knows(label) || index.get(label).is_none() || store.context_net.is_empty() {
        return Ok(result);
    }
    let tm = *world.time_model();
    let probs = world.error_probs();
    let base = world.def.base_station;

    let query = masked_fetch_query(store, label, index, ctx)?;
    let truth = world.locations_of_label(label);
    result.predicted_context = Some((query.context.clone(), query.location));
    result.context_correct = (!truth.is_empty()).then(|| truth.contains(&query.location));
    result.legs.push(Leg {
        kind: LegKind::Query,
        location: Some(query.location),
        time: tm.sec_fixed,
        ok: true,
        note: format!("{} at location {}", query.context, query.location),
    });

    let targets: Vec<(String, LocationId)> = if opts.fallback {
        query.ranked.iter().map(|c| (c.context.clone(), c.location)).collect()
    } else {
        vec![(query.context.clone(), query.location)]
    };

    let mut pos = base;
    let mut picked: Option<Observation> = None;
    let mut failure = FailureKind::WrongContext;
    for (context_name, target) in targets {
        let dist = world.leg_distance(pos, target);
        let nav_ok = !world.chance(probs.p_nav_fail);
        result.legs.push(Leg {
            kind: LegKind::Navigate,
            location: Some(target),
            time: dist * tm.sec_per_meter,
            ok: nav_ok,
            note: if nav_ok { format!("{dist:.2} m") } else { "navigation failed".into() },
        });
        if !nav_ok {
            return Ok(finish(result, FailureKind::NavFail, world, base));
        }
        pos = target;

        let perception = world.perceive(target)?;
        let mut here = Vec::with_capacity(perception.views.len());
        for (instance, view) in perception.views {
            let (predicted, report) = store.object_net.classify(&view, store.clock(), &store.config().ltm_decay)?;
            here.push(Observation {
                true_label: world.label_of(&instance).unwrap_or_default().to_string(),
                instance,
                predicted,
                activation: report.winner().activation,
                location: target,
                feature: view,
            });
        }
        for obs in &here {
            store.stm_observe(&obs.feature, &obs.predicted, MemoryKind::Object)?;
        }
        let scene: Vec<FeatureVector> = here.iter().map(|o| o.feature.clone()).collect();
        let (map, _) = build_context_map(&scene, target, &store.object_net, index, store.clock(), &store.config().ltm_decay, ctx)?;
        store.stm_observe(&map.to_feature(), &context_name, MemoryKind::Context)?;

        let candidate = here
            .iter()
            .filter(|o| o.predicted == label)
            .fold(None::<&Observation>, |best, o| match best {
                Some(b) if b.activation >= o.activation => Some(b),
                _ => Some(o),
            })
            .cloned();
        let present_here = world
            .instances_at(target)
            .into_iter()
            .any(|i| world.label_of(i) == Some(label));
        let detected_here = here.iter().any(|o| o.true_label == label);
        result.legs.push(Leg {
            kind: LegKind::Perceive,
            location: Some(target),
            time: tm.sec_perceive,
            ok: candidate.is_some(),
            note: if candidate.is_some() {
                format!("{} objects seen, {label} found", here.len())
            } else if !present_here {
                "object absent".into()
            } else if detected_here {
                format!("{label} not recognised")
            } else {
                format!("{label} not detected")
            },
        });
        result.observations.extend(here);

        if let Some(c) = candidate {
            picked = Some(c);
            break;
        }
        failure = if !present_here {
            if world.label_exists(label) {
                FailureKind::WrongContext
            } else {
                FailureKind::Absent
            }
        } else if detected_here {
            FailureKind::Misclassified
        } else {
            FailureKind::DetectFail
        };
    }

    let Some(picked) = picked else {
        return Ok(finish(result, failure, world, base));
    };

    let pick_ok = !world.chance(probs.p_manip_fail);
    result.legs.push(Leg {
        kind: LegKind::Pick,
        location: Some(pos),
        time: tm.sec_manip,
        ok: pick_ok,
        note: if pick_ok { format!("picked {}", picked.instance) } else { "grasp failed".into() },
    });
    if !pick_ok {
        return Ok(finish(result, FailureKind::ManipFail, world, base));
    }

    let dist = world.leg_distance(pos, base);
    let nav_ok = !world.chance(probs.p_nav_fail);
    let place_ok = nav_ok && !world.chance(probs.p_place_fail);
    result.legs.push(Leg {
        kind: LegKind::Return,
        location: Some(base),
        time: dist * tm.sec_per_meter + if nav_ok { tm.sec_manip } else { 0.0 },
        ok: nav_ok && place_ok,
        note: if !nav_ok {
            "navigation failed".into()
        } else if !place_ok {
            "place failed".into()
        } else {
            "placed at base".into()
        },
    });
    let kind = if !nav_ok {
        FailureKind::NavFail
    } else if !place_ok {
        FailureKind::ManipFail
    } else if picked.true_label != label {
        FailureKind::Misclassified
    } else {
        FailureKind::None
    };
    Ok(finish(result, kind, world, base))
}

fn finish(mut r: FetchResult, kind: FailureKind, world: &mut World, base: LocationId) -> FetchResult {
    r.failure_kind = kind;
    r.success = kind == FailureKind::None;
    r.execution_time = r.legs.iter().map(|l| l.time).sum();
    world.robot_pose = base;
    r
}
