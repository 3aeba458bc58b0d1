//! The single teaching session behind the service and its event log.

use serde::{Deserialize, Serialize};

use icl_core::context::LocationId;
use icl_core::engine::{MemorySnapshot, StateSummary, TeachContextOutcome, TeachObjectOutcome};
use icl_core::home::{FetchResult, WorldDef, WorldOp};
use icl_core::{Engine, EngineConfig, Error, Result};

/// Everything needed to rebuild a session from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInit {
    pub config: EngineConfig,
    pub world: WorldDef,
    pub seed: u64,
}

/// A state-changing request, as recorded in the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Operation {
    TeachObject {
        label: String,
        instance_id: String,
        n_views: usize,
    },
    TeachContext {
        name: String,
        location_id: LocationId,
        scene: Vec<String>,
    },
    Fetch {
        label: String,
    },
    AdvanceClock {
        days: f64,
    },
    Mutate {
        op: WorldOp,
    },
    LoadSnapshot {
        snapshot: Box<MemorySnapshot>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    TeachObject(TeachObjectOutcome),
    TeachContext(TeachContextOutcome),
    Fetch(Box<FetchResult>),
    Clock { clock: f64 },
    Mutated,
    Loaded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    /// Session clock after the operation.
    pub clock: f64,
    pub operation: Operation,
    pub outcome: Outcome,
}

#[derive(Debug)]
pub struct Session {
    init: SessionInit,
    engine: Engine,
    log: Vec<LogEntry>,
}

impl Session {
    pub fn new(init: SessionInit) -> Result<Self> {
        let engine = Engine::new(init.config.clone(), init.world.clone(), init.seed)?;
        Ok(Self {
            init,
            engine,
            log: Vec::new(),
        })
    }

    pub fn init(&self) -> &SessionInit {
        &self.init
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn clock(&self) -> f64 {
        self.engine.clock()
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn summary(&self) -> StateSummary {
        self.engine.summary()
    }

    pub fn snapshot(&self) -> MemorySnapshot {
        self.engine.snapshot()
    }

    /// Applies an operation; successful ones are appended to the log.
    pub fn apply(&mut self, operation: Operation) -> Result<Outcome> {
        let outcome = match &operation {
            Operation::TeachObject {
                label,
                instance_id,
                n_views,
            } => {
                if label.is_empty() {
                    return Err(Error::EmptyLabel);
                }
                Outcome::TeachObject(self.engine.teach_object(instance_id, Some(label), *n_views)?)
            }
            Operation::TeachContext {
                name,
                location_id,
                scene,
            } => {
                if name.is_empty() {
                    return Err(Error::EmptyLabel);
                }
                Outcome::TeachContext(self.engine.teach_context(name, *location_id, scene)?)
            }
            Operation::Fetch { label } => {
                if !self.engine.store().object_net.knows(label) {
                    return Err(Error::UnknownLabel(label.clone()));
                }
                Outcome::Fetch(Box::new(self.engine.fetch(label)?))
            }
            Operation::AdvanceClock { days } => Outcome::Clock {
                clock: self.engine.advance_clock(*days)?,
            },
            Operation::Mutate { op } => {
                self.engine.mutate(op)?;
                Outcome::Mutated
            }
            Operation::LoadSnapshot { snapshot } => {
                self.engine.load_snapshot((**snapshot).clone())?;
                Outcome::Loaded
            }
        };
        self.log.push(LogEntry {
            seq: self.log.len() as u64,
            clock: self.engine.clock(),
            operation,
            outcome: outcome.clone(),
        });
        Ok(outcome)
    }
}

/// Rebuilds a session by re-applying every logged operation in order.
pub fn replay(init: SessionInit, log: &[LogEntry]) -> Result<Session> {
    let mut session = Session::new(init)?;
    for entry in log {
        session.apply(entry.operation.clone())?;
    }
    Ok(session)
}
