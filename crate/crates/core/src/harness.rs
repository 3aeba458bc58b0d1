//! Runs scenario scripts: incremental teaching with periodic fetch tests,
//! the joint-training baseline, and aggregation over independent runs.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::engine::Engine;
use crate::error::Result;
use crate::feature::mix;
use crate::home::{FailureKind, FetchResult};
use crate::scenario::{Increment, ScenarioScript, TeachContext, TeachObject};

/// Raw counts for one increment of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IncrementMetrics {
    pub object_correct: usize,
    pub object_total: usize,
    pub context_correct: usize,
    pub context_total: usize,
    pub task_success: usize,
    pub task_total: usize,
    pub manip_errors: usize,
    pub percept_errors: usize,
    pub nav_errors: usize,
    pub wrong_context: usize,
    pub misclassified: usize,
    pub absent: usize,
    /// Sum of execution times over successful fetches.
    pub exec_time_sum: f64,
    pub object_labels: usize,
    pub context_clusters: usize,
}

impl IncrementMetrics {
    pub fn record(&mut self, r: &FetchResult, is_taught: impl Fn(&str) -> bool) {
        self.task_total += 1;
        for o in &r.observations {
            if is_taught(&o.true_label) {
                self.object_total += 1;
                self.object_correct += usize::from(o.predicted == o.true_label);
            }
        }
        if let Some(ok) = r.context_correct {
            self.context_total += 1;
            self.context_correct += usize::from(ok);
        }
        match r.failure_kind {
            FailureKind::None => {
                self.task_success += 1;
                self.exec_time_sum += r.execution_time;
            }
            FailureKind::ManipFail => self.manip_errors += 1,
            FailureKind::DetectFail => self.percept_errors += 1,
            FailureKind::NavFail => self.nav_errors += 1,
            FailureKind::WrongContext => self.wrong_context += 1,
            FailureKind::Misclassified => self.misclassified += 1,
            FailureKind::Absent => self.absent += 1,
        }
    }

    pub fn object_acc(&self) -> Option<f64> {
        pct(self.object_correct, self.object_total)
    }

    pub fn context_acc(&self) -> Option<f64> {
        pct(self.context_correct, self.context_total)
    }

    pub fn task_acc(&self) -> Option<f64> {
        pct(self.task_success, self.task_total)
    }

    pub fn mean_exec_time(&self) -> Option<f64> {
        (self.task_success > 0).then(|| self.exec_time_sum / self.task_success as f64)
    }

    /// Failures not explained by an error column.
    pub fn learning_failures(&self) -> usize {
        self.wrong_context + self.misclassified + self.absent
    }
}

fn pct(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

/// Mean and population standard deviation over the runs where a value exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Option<Stat> {
        let v: Vec<f64> = values.into_iter().flatten().collect();
        if v.is_empty() {
            return None;
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Some(Stat {
            mean,
            std: var.sqrt(),
            n: v.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// 1-based increment number (the cutoff increment for the joint baseline).
    pub increment: usize,
    pub labels: usize,
    pub object_acc: Option<Stat>,
    pub context_acc: Option<Stat>,
    pub task_acc: Option<Stat>,
    pub exec_time: Option<Stat>,
    pub manip_errors: Option<Stat>,
    pub percept_errors: Option<Stat>,
    pub nav_errors: Option<Stat>,
}

/// Wall-clock cost of learning and recognition, kept apart from the
/// deterministic metrics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub max_increment_teach_secs: f64,
    /// Views taught in the increment that took longest.
    pub max_increment_views: usize,
    pub max_classify_secs: f64,
    pub classify_calls: usize,
}

impl Timing {
    fn merge(self, o: Timing) -> Timing {
        let (secs, views) = if o.max_increment_teach_secs > self.max_increment_teach_secs {
            (o.max_increment_teach_secs, o.max_increment_views)
        } else {
            (self.max_increment_teach_secs, self.max_increment_views)
        };
        Timing {
            max_increment_teach_secs: secs,
            max_increment_views: views,
            max_classify_secs: self.max_classify_secs.max(o.max_classify_secs),
            classify_calls: self.classify_calls + o.classify_calls,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// True for the joint-training baseline.
    pub joint: bool,
    pub runs: usize,
    pub rows: Vec<ReportRow>,
    /// `per_run[r][k]` holds run `r`, increment `k`.
    pub per_run: Vec<Vec<IncrementMetrics>>,
    pub timing: Timing,
}

impl RunReport {
    pub fn empty() -> Self {
        Self {
            joint: false,
            runs: 0,
            rows: Vec::new(),
            per_run: Vec::new(),
            timing: Timing::default(),
        }
    }

    fn from_runs(per_run: Vec<Vec<IncrementMetrics>>, timing: Timing, joint: bool, numbering: impl Fn(usize) -> usize) -> Self {
        let n_rows = per_run.first().map_or(0, Vec::len);
        let rows = (0..n_rows)
            .map(|k| {
                let col = |f: &dyn Fn(&IncrementMetrics) -> Option<f64>| Stat::of(per_run.iter().map(|r| f(&r[k])));
                ReportRow {
                    increment: numbering(k),
                    labels: per_run.iter().map(|r| r[k].object_labels).max().unwrap_or(0),
                    object_acc: col(&|m| m.object_acc()),
                    context_acc: col(&|m| m.context_acc()),
                    task_acc: col(&|m| m.task_acc()),
                    exec_time: col(&|m| m.mean_exec_time()),
                    manip_errors: col(&|m| Some(m.manip_errors as f64)),
                    percept_errors: col(&|m| Some(m.percept_errors as f64)),
                    nav_errors: col(&|m| Some(m.nav_errors as f64)),
                }
            })
            .collect();
        Self {
            joint,
            runs: per_run.len(),
            rows,
            per_run,
            timing,
        }
    }
}

pub fn run_seed(script_seed: u64, run: usize) -> u64 {
    mix(&[script_seed, run as u64, 0x52554e])
}

/// Runs every increment of the script `script.runs` times from scratch.
pub fn run_scenario(script: &ScenarioScript) -> Result<RunReport> {
    let outcomes: Vec<(Vec<IncrementMetrics>, Timing)> = (0..script.runs)
        .into_par_iter()
        .map(|r| run_once(script, run_seed(script.seed, r)))
        .collect::<Result<_>>()?;
    let timing = outcomes.iter().fold(Timing::default(), |a, (_, t)| a.merge(*t));
    let per_run = outcomes.into_iter().map(|(m, _)| m).collect();
    Ok(RunReport::from_runs(per_run, timing, false, |k| k + 1))
}

/// One run, with the engine handed to `inspect` after every increment.
pub fn run_once_with(
    script: &ScenarioScript,
    seed: u64,
    mut inspect: impl FnMut(usize, &Engine),
) -> Result<(Vec<IncrementMetrics>, Timing)> {
    let mut engine = Engine::new(script.config.clone(), script.world.clone(), seed)?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(mix(&[seed, 0x004f_5244_4552]));
    let mut timing = Timing::default();
    let mut out = Vec::with_capacity(script.increments.len());
    for (k, inc) in script.increments.iter().enumerate() {
        if inc.clock_advance > 0.0 {
            engine.advance_clock(inc.clock_advance)?;
        }
        let started = Instant::now();
        let views = teach(&mut engine, inc.teach_objects.iter(), inc.teach_contexts.iter(), &mut order_rng)?;
        let secs = started.elapsed().as_secs_f64();
        if secs > timing.max_increment_teach_secs {
            timing.max_increment_teach_secs = secs;
            timing.max_increment_views = views;
        }
        for op in &inc.world_ops {
            engine.mutate(op)?;
        }
        probe_classify(&engine, &mut timing)?;
        let mut m = IncrementMetrics::default();
        for label in &inc.fetch_tests {
            let r = engine.fetch(label)?;
            let net = &engine.store().object_net;
            m.record(&r, |l| net.knows(l));
        }
        m.object_labels = engine.store().object_net.labels().len();
        m.context_clusters = engine.store().context_net.clusters().len();
        inspect(k, &engine);
        out.push(m);
    }
    Ok((out, timing))
}

fn run_once(script: &ScenarioScript, seed: u64) -> Result<(Vec<IncrementMetrics>, Timing)> {
    run_once_with(script, seed, |_, _| {})
}

/// Number of fetches the joint baseline performs.
pub const JT_FETCHES: usize = 15;

/// Teaches everything up to the cutoff increment at clock 0, then repeats
/// that increment's fetch tests for [`JT_FETCHES`] fetches.
pub fn run_joint_baseline(script: &ScenarioScript) -> Result<RunReport> {
    let cutoff = script.jt_cutoff_index();
    let outcomes: Vec<(IncrementMetrics, Timing)> = (0..script.runs)
        .into_par_iter()
        .map(|r| joint_once(script, cutoff, run_seed(script.seed, r)))
        .collect::<Result<_>>()?;
    let timing = outcomes.iter().fold(Timing::default(), |a, (_, t)| a.merge(*t));
    let per_run = outcomes.into_iter().map(|(m, _)| vec![m]).collect();
    Ok(RunReport::from_runs(per_run, timing, true, |_| cutoff + 1))
}

fn joint_once(script: &ScenarioScript, cutoff: usize, seed: u64) -> Result<(IncrementMetrics, Timing)> {
    let mut engine = Engine::new(script.config.clone(), script.world.clone(), seed)?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(mix(&[seed, 0x004f_5244_4552]));
    let included = &script.increments[..=cutoff];
    let mut timing = Timing::default();
    let started = Instant::now();
    let views = teach(
        &mut engine,
        included.iter().flat_map(|i| i.teach_objects.iter()),
        included.iter().flat_map(|i| i.teach_contexts.iter()),
        &mut order_rng,
    )?;
    timing.max_increment_teach_secs = started.elapsed().as_secs_f64();
    timing.max_increment_views = views;
    for op in included.iter().flat_map(|i: &Increment| i.world_ops.iter()) {
        engine.mutate(op)?;
    }
    probe_classify(&engine, &mut timing)?;
    let tests = &script.increments[cutoff].fetch_tests;
    let mut m = IncrementMetrics::default();
    if !tests.is_empty() {
        for i in 0..JT_FETCHES {
            let r = engine.fetch(&tests[i % tests.len()])?;
            let net = &engine.store().object_net;
            m.record(&r, |l| net.knows(l));
        }
    }
    m.object_labels = engine.store().object_net.labels().len();
    m.context_clusters = engine.store().context_net.clusters().len();
    Ok((m, timing))
}

/// Objects first, then contexts, each group in a shuffled order.
/// Returns the number of views taught.
fn teach<'a>(
    engine: &mut Engine,
    objects: impl Iterator<Item = &'a TeachObject>,
    contexts: impl Iterator<Item = &'a TeachContext>,
    rng: &mut ChaCha8Rng,
) -> Result<usize> {
    let mut objects: Vec<&TeachObject> = objects.collect();
    let mut contexts: Vec<&TeachContext> = contexts.collect();
    objects.shuffle(rng);
    contexts.shuffle(rng);
    let mut views = 0;
    for t in objects {
        engine.teach_object(&t.instance, t.label.as_deref(), t.n_views)?;
        views += t.n_views;
    }
    for c in contexts {
        for _ in 0..c.n_views {
            engine.teach_context(&c.name, c.location, &c.scene)?;
        }
        views += c.n_views;
    }
    Ok(views)
}

/// Times one recognition against the current object network using a stored
/// centroid as the probe, leaving world and memory untouched.
fn probe_classify(engine: &Engine, timing: &mut Timing) -> Result<()> {
    let store = engine.store();
    let Some(c) = store.object_net.clusters().last() else {
        return Ok(());
    };
    let probe = c.centroid.clone();
    let started = Instant::now();
    store.object_net.classify(&probe, store.clock(), &store.config().ltm_decay)?;
    let secs = started.elapsed().as_secs_f64();
    timing.max_classify_secs = timing.max_classify_secs.max(secs);
    timing.classify_calls += 1;
    Ok(())
}

/// Joint baseline minus incremental at the cutoff increment, in percentage
/// points for task accuracy and seconds for execution time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JtDelta {
    pub increment: usize,
    pub task_acc: Option<f64>,
    pub exec_time: Option<f64>,
}

pub fn jt_delta(incremental: &RunReport, joint: &RunReport) -> Option<JtDelta> {
    let jt = joint.rows.first()?;
    let inc = incremental.rows.iter().find(|r| r.increment == jt.increment)?;
    let diff = |a: Option<Stat>, b: Option<Stat>| Some(a?.mean - b?.mean);
    Some(JtDelta {
        increment: jt.increment,
        task_acc: diff(jt.task_acc, inc.task_acc),
        exec_time: diff(jt.exec_time, inc.exec_time),
    })
}
