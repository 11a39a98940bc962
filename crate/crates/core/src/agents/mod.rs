//! Message-driven agent runtime: one Editor, one Arguer and one Supervisor.
//!
//! The Editor is the only writer of the catalog; the Arguer computes over
//! immutable snapshots; the Supervisor owns the append-only anomaly log.
//! Each agent drains its own mailbox serially. Every failure reported to a
//! caller is first recorded by the Supervisor, so by the time an error reply
//! arrives its anomaly is already visible.
//!
//! ```
//! use decisio_core::agents::Runtime;
//! use decisio_core::domains::evm_pack;
//! use decisio_core::registry::Catalog;
//!
//! # tokio::runtime::Builder::new_current_thread().build().unwrap().block_on(async {
//! let runtime = Runtime::start(Catalog::new());
//! let client = runtime.client();
//! let outcomes = client.load_pack(evm_pack()).await.unwrap();
//! assert!(outcomes.iter().all(|o| o.result.is_ok()));
//! assert!(runtime.anomalies(None).is_empty());
//! # });
//! ```

mod runtime;

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compute::{ComputeError, ReportEntry};
use crate::domains::{EntryError, EntryOutcome, FormulaError, IndicatorEntry, ModelEntry, Pack};
use crate::registry::{IndexDefinition, IndexValue, PeriodKey, RegistryError};
use crate::viz::{Mode, VisualizationDescriptor};

pub use runtime::{Client, Runtime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentRole {
    Supervisor,
    Editor,
    Arguer,
}

impl fmt::Display for AgentRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentRole::Supervisor => "supervisor",
            AgentRole::Editor => "editor",
            AgentRole::Arguer => "arguer",
        })
    }
}

/// Originator of a message: an agent, or an external client (the human
/// decision maker reaching the system through the API or CLI).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    Agent(AgentRole),
    Client(u64),
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::Agent(role) => role.fmt(f),
            Party::Client(id) => write!(f, "client-{id}"),
        }
    }
}

/// A definition in pack-entry form, for replacement requests.
#[derive(Debug, Clone, PartialEq)]
pub enum DefinitionEntry {
    Index(IndexDefinition),
    Model(ModelEntry),
    Indicator(IndicatorEntry),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    RegisterIndex(IndexDefinition),
    RegisterModel(ModelEntry),
    RegisterIndicator(IndicatorEntry),
    ReplaceDefinition { id: String, entry: DefinitionEntry },
    SetIndexValue(IndexValue),
    LoadPack(Pack),
    ComputeRequest {
        ids: Vec<String>,
        period: PeriodKey,
        mode: Option<Mode>,
    },
    SeriesRequest {
        id: String,
        from: PeriodKey,
        to: PeriodKey,
    },
    Anomaly(AnomalyRecord),

    ComputeResponse(Vec<ReportEntry>),
    SeriesResponse(VisualizationDescriptor),
    PackLoaded(Vec<EntryOutcome>),
    Ack(u64),
    Rejected(Fault),
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::RegisterIndex(_) => "register_index",
            Payload::RegisterModel(_) => "register_model",
            Payload::RegisterIndicator(_) => "register_indicator",
            Payload::ReplaceDefinition { .. } => "replace_definition",
            Payload::SetIndexValue(_) => "set_index_value",
            Payload::LoadPack(_) => "load_pack",
            Payload::ComputeRequest { .. } => "compute_request",
            Payload::SeriesRequest { .. } => "series_request",
            Payload::Anomaly(_) => "anomaly",
            Payload::ComputeResponse(_) => "compute_response",
            Payload::SeriesResponse(_) => "series_response",
            Payload::PackLoaded(_) => "pack_loaded",
            Payload::Ack(_) => "ack",
            Payload::Rejected(_) => "rejected",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentMessage {
    /// Strictly increasing per sender.
    pub msg_id: u64,
    pub sender: Party,
    /// An agent for requests; the original sender for replies.
    pub recipient: Party,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Fault {
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Compute(#[from] ComputeError),
    #[error("protocol error: {0}")]
    Protocol(String),
}

impl From<EntryError> for Fault {
    fn from(e: EntryError) -> Self {
        match e {
            EntryError::Formula(e) => Fault::Formula(e),
            EntryError::Registry(e) => Fault::Registry(e),
        }
    }
}

impl Fault {
    pub fn category(&self) -> Category {
        match self {
            Fault::Formula(_) | Fault::Registry(_) => Category::Validation,
            Fault::Compute(_) => Category::Evaluation,
            Fault::Protocol(_) => Category::Protocol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Validation,
    Evaluation,
    Protocol,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Category::Validation => "validation",
            Category::Evaluation => "evaluation",
            Category::Protocol => "protocol",
        })
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "validation" => Ok(Category::Validation),
            "evaluation" => Ok(Category::Evaluation),
            "protocol" => Ok(Category::Protocol),
            other => Err(format!("unknown anomaly category '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyRecord {
    /// Assigned by the Supervisor: 1, 2, 3, ...
    pub seq: u64,
    pub source: AgentRole,
    /// The request that failed, as numbered by its sender.
    pub original_sender: Party,
    pub original_msg_id: u64,
    pub category: Category,
    pub detail: String,
    pub timestamp: DateTime<Utc>,
}

impl AnomalyRecord {
    pub fn new(source: AgentRole, original: &AgentMessage, category: Category, detail: impl Into<String>) -> Self {
        AnomalyRecord {
            seq: 0,
            source,
            original_sender: original.sender,
            original_msg_id: original.msg_id,
            category,
            detail: detail.into(),
            timestamp: Utc::now(),
        }
    }
}

/// The Supervisor's append-only log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SupervisorLog {
    records: Vec<AnomalyRecord>,
}

impl SupervisorLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuild a log from persisted records, renumbering them densely.
    pub fn restore(records: impl IntoIterator<Item = AnomalyRecord>) -> Self {
        let mut log = Self::new();
        for r in records {
            log.record_anomaly(r);
        }
        log
    }

    /// Append `record` under the next sequence number and return it.
    pub fn record_anomaly(&mut self, mut record: AnomalyRecord) -> u64 {
        record.seq = self.records.len() as u64 + 1;
        self.records.push(record);
        self.records.len() as u64
    }

    pub fn list_anomalies(&self, category: Option<Category>) -> Vec<AnomalyRecord> {
        self.records
            .iter()
            .filter(|r| category.is_none_or(|c| r.category == c))
            .cloned()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}
