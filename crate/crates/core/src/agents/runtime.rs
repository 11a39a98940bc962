use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use tokio::sync::{mpsc, oneshot};

use super::{
    AgentMessage, AgentRole, AnomalyRecord, Category, DefinitionEntry, Fault, Party, Payload, SupervisorLog,
};
use crate::compute::{compute_report, compute_series, ReportEntry};
use crate::domains::{apply_pack, EntryOutcome, IndicatorEntry, ModelEntry, Pack};
use crate::registry::{Catalog, Definition, IndexDefinition, IndexValue, PeriodKey};
use crate::viz::{Mode, VisualizationDescriptor};

const MAILBOX: usize = 64;

struct Envelope {
    msg: AgentMessage,
    /// Set when the message broke the protocol before reaching the agent.
    violation: Option<String>,
    reply: oneshot::Sender<AgentMessage>,
}

struct Shared {
    catalog: RwLock<Arc<Catalog>>,
    log: RwLock<SupervisorLog>,
}

impl Shared {
    fn snapshot(&self) -> Arc<Catalog> {
        Arc::clone(&self.catalog.read().expect("catalog lock"))
    }
}

struct Inner {
    editor: mpsc::Sender<Envelope>,
    arguer: mpsc::Sender<Envelope>,
    supervisor: mpsc::Sender<Envelope>,
    shared: Arc<Shared>,
    last_ids: Mutex<HashMap<Party, u64>>,
    next_client: AtomicU64,
}

/// Handle to a running group of agents. Cheap to clone.
///
/// Must be started inside a tokio runtime; the agents stop once every handle
/// and client has been dropped.
#[derive(Clone)]
pub struct Runtime {
    inner: Arc<Inner>,
}

impl Runtime {
    pub fn start(catalog: Catalog) -> Runtime {
        Self::start_with(catalog, SupervisorLog::new())
    }

    pub fn start_with(catalog: Catalog, log: SupervisorLog) -> Runtime {
        let shared = Arc::new(Shared {
            catalog: RwLock::new(Arc::new(catalog)),
            log: RwLock::new(log),
        });
        let (sup_tx, sup_rx) = mpsc::channel(MAILBOX);
        let (ed_tx, ed_rx) = mpsc::channel(MAILBOX);
        let (ar_tx, ar_rx) = mpsc::channel(MAILBOX);
        tokio::spawn(supervisor(sup_rx, Arc::clone(&shared)));
        tokio::spawn(editor(ed_rx, Mailer::new(AgentRole::Editor, sup_tx.clone()), Arc::clone(&shared)));
        tokio::spawn(arguer(ar_rx, Mailer::new(AgentRole::Arguer, sup_tx.clone()), Arc::clone(&shared)));
        Runtime {
            inner: Arc::new(Inner {
                editor: ed_tx,
                arguer: ar_tx,
                supervisor: sup_tx,
                shared,
                last_ids: Mutex::new(HashMap::new()),
                next_client: AtomicU64::new(1),
            }),
        }
    }

    /// A new external client with its own message numbering.
    pub fn client(&self) -> Client {
        Client {
            runtime: self.clone(),
            party: Party::Client(self.inner.next_client.fetch_add(1, Ordering::Relaxed)),
            next_id: tokio::sync::Mutex::new(0),
        }
    }

    pub fn snapshot(&self) -> Arc<Catalog> {
        self.inner.shared.snapshot()
    }

    pub fn anomalies(&self, category: Option<Category>) -> Vec<AnomalyRecord> {
        self.inner.shared.log.read().expect("log lock").list_anomalies(category)
    }

    /// Deliver `msg` to its recipient and wait for the single reply.
    ///
    /// A `msg_id` that does not increase for its sender, or a recipient that
    /// is not an agent, is answered with a protocol rejection and logged.
    pub async fn dispatch(&self, msg: AgentMessage) -> AgentMessage {
        let mut violation = None;
        {
            let mut ids = self.inner.last_ids.lock().expect("id table lock");
            let last = ids.entry(msg.sender).or_insert(0);
            if msg.msg_id <= *last {
                violation = Some(format!(
                    "msg_id {} from {} does not follow {}",
                    msg.msg_id, msg.sender, *last
                ));
            } else {
                *last = msg.msg_id;
            }
        }
        let mailbox = match msg.recipient {
            Party::Agent(AgentRole::Editor) => &self.inner.editor,
            Party::Agent(AgentRole::Arguer) => &self.inner.arguer,
            Party::Agent(AgentRole::Supervisor) => &self.inner.supervisor,
            Party::Client(_) => {
                violation.get_or_insert_with(|| format!("recipient {} is not an agent", msg.recipient));
                &self.inner.supervisor
            }
        };
        let (tx, rx) = oneshot::channel();
        let fallback = AgentMessage {
            msg_id: 0,
            sender: msg.recipient,
            recipient: msg.sender,
            payload: Payload::Rejected(Fault::Protocol("agent unavailable".into())),
        };
        let envelope = Envelope {
            msg,
            violation,
            reply: tx,
        };
        if mailbox.send(envelope).await.is_err() {
            return fallback;
        }
        rx.await.unwrap_or(fallback)
    }
}

/// An external client. Requests from one client are dispatched one at a
/// time, so its replies arrive in request order.
pub struct Client {
    runtime: Runtime,
    party: Party,
    next_id: tokio::sync::Mutex<u64>,
}

impl Client {
    pub fn party(&self) -> Party {
        self.party
    }

    pub async fn send(&self, recipient: AgentRole, payload: Payload) -> AgentMessage {
        let mut next = self.next_id.lock().await;
        *next += 1;
        let msg = AgentMessage {
            msg_id: *next,
            sender: self.party,
            recipient: Party::Agent(recipient),
            payload,
        };
        self.runtime.dispatch(msg).await
    }

    async fn acked(&self, recipient: AgentRole, payload: Payload) -> Result<(), Fault> {
        match self.send(recipient, payload).await.payload {
            Payload::Ack(_) => Ok(()),
            other => Err(unexpected(other)),
        }
    }

    pub async fn register_index(&self, def: IndexDefinition) -> Result<(), Fault> {
        self.acked(AgentRole::Editor, Payload::RegisterIndex(def)).await
    }

    pub async fn register_model(&self, entry: ModelEntry) -> Result<(), Fault> {
        self.acked(AgentRole::Editor, Payload::RegisterModel(entry)).await
    }

    pub async fn register_indicator(&self, entry: IndicatorEntry) -> Result<(), Fault> {
        self.acked(AgentRole::Editor, Payload::RegisterIndicator(entry)).await
    }

    pub async fn replace_definition(&self, id: impl Into<String>, entry: DefinitionEntry) -> Result<(), Fault> {
        let payload = Payload::ReplaceDefinition { id: id.into(), entry };
        self.acked(AgentRole::Editor, payload).await
    }

    pub async fn set_index_value(&self, value: IndexValue) -> Result<(), Fault> {
        self.acked(AgentRole::Editor, Payload::SetIndexValue(value)).await
    }

    pub async fn load_pack(&self, pack: Pack) -> Result<Vec<EntryOutcome>, Fault> {
        match self.send(AgentRole::Editor, Payload::LoadPack(pack)).await.payload {
            Payload::PackLoaded(outcomes) => Ok(outcomes),
            other => Err(unexpected(other)),
        }
    }

    pub async fn compute(
        &self,
        ids: Vec<String>,
        period: PeriodKey,
        mode: Option<Mode>,
    ) -> Result<Vec<ReportEntry>, Fault> {
        let payload = Payload::ComputeRequest { ids, period, mode };
        match self.send(AgentRole::Arguer, payload).await.payload {
            Payload::ComputeResponse(entries) => Ok(entries),
            other => Err(unexpected(other)),
        }
    }

    pub async fn series(
        &self,
        id: impl Into<String>,
        from: PeriodKey,
        to: PeriodKey,
    ) -> Result<VisualizationDescriptor, Fault> {
        let payload = Payload::SeriesRequest { id: id.into(), from, to };
        match self.send(AgentRole::Arguer, payload).await.payload {
            Payload::SeriesResponse(d) => Ok(d),
            other => Err(unexpected(other)),
        }
    }
}

fn unexpected(payload: Payload) -> Fault {
    match payload {
        Payload::Rejected(fault) => fault,
        other => Fault::Protocol(format!("unexpected reply {}", other.kind())),
    }
}

/// Outgoing side of an agent: numbers its messages and reports anomalies.
struct Mailer {
    role: AgentRole,
    next_id: u64,
    supervisor: mpsc::Sender<Envelope>,
}

impl Mailer {
    fn new(role: AgentRole, supervisor: mpsc::Sender<Envelope>) -> Self {
        Mailer {
            role,
            next_id: 0,
            supervisor,
        }
    }

    fn next(&mut self) -> u64 {
        self.next_id += 1;
        self.next_id
    }

    fn reply(&mut self, to: &AgentMessage, payload: Payload) -> AgentMessage {
        AgentMessage {
            msg_id: self.next(),
            sender: Party::Agent(self.role),
            recipient: to.sender,
            payload,
        }
    }

    /// Send an anomaly to the Supervisor and wait until it is recorded.
    async fn report(&mut self, original: &AgentMessage, category: Category, detail: String) {
        let record = AnomalyRecord::new(self.role, original, category, detail);
        let (tx, rx) = oneshot::channel();
        let msg = AgentMessage {
            msg_id: self.next(),
            sender: Party::Agent(self.role),
            recipient: Party::Agent(AgentRole::Supervisor),
            payload: Payload::Anomaly(record),
        };
        let envelope = Envelope {
            msg,
            violation: None,
            reply: tx,
        };
        if self.supervisor.send(envelope).await.is_ok() {
            let _ = rx.await;
        }
    }

    /// Reject `msg`, recording the fault first.
    async fn reject(&mut self, msg: &AgentMessage, fault: Fault) -> AgentMessage {
        self.report(msg, fault.category(), fault.to_string()).await;
        self.reply(msg, Payload::Rejected(fault))
    }
}

fn refused(role: AgentRole, msg: &AgentMessage) -> Fault {
    Fault::Protocol(format!("{role} does not accept {} from {}", msg.payload.kind(), msg.sender))
}

async fn supervisor(mut rx: mpsc::Receiver<Envelope>, shared: Arc<Shared>) {
    let role = AgentRole::Supervisor;
    let mut next_id = 0;
    while let Some(Envelope { msg, violation, reply }) = rx.recv().await {
        let fault = match (&violation, &msg.payload, msg.sender) {
            (Some(v), _, _) => Some(Fault::Protocol(v.clone())),
            (None, Payload::Anomaly(_), Party::Agent(_)) => None,
            _ => Some(refused(role, &msg)),
        };
        let payload = {
            let mut log = shared.log.write().expect("log lock");
            match (fault, &msg.payload) {
                (None, Payload::Anomaly(record)) => {
                    log.record_anomaly(record.clone());
                    Payload::Ack(msg.msg_id)
                }
                (fault, _) => {
                    let fault = fault.unwrap_or_else(|| refused(role, &msg));
                    log.record_anomaly(AnomalyRecord::new(role, &msg, fault.category(), fault.to_string()));
                    Payload::Rejected(fault)
                }
            }
        };
        next_id += 1;
        let _ = reply.send(AgentMessage {
            msg_id: next_id,
            sender: Party::Agent(role),
            recipient: msg.sender,
            payload,
        });
    }
}

/// Copy-on-write update: readers keep their snapshot, the new catalog is
/// published only when `f` succeeds.
fn mutate<T, E>(shared: &Shared, f: impl FnOnce(&mut Catalog) -> Result<T, E>) -> Result<T, E> {
    let mut next = Catalog::clone(&shared.snapshot());
    let out = f(&mut next)?;
    *shared.catalog.write().expect("catalog lock") = Arc::new(next);
    Ok(out)
}

async fn editor(mut rx: mpsc::Receiver<Envelope>, mut mailer: Mailer, shared: Arc<Shared>) {
    while let Some(Envelope { msg, violation, reply }) = rx.recv().await {
        let result: Result<Payload, Fault> = match (&violation, &msg.payload) {
            (Some(v), _) => Err(Fault::Protocol(v.clone())),
            (None, Payload::RegisterIndex(def)) => mutate(&shared, |c| c.register_index(def.clone()))
                .map(|_| Payload::Ack(msg.msg_id))
                .map_err(Fault::from),
            (None, Payload::RegisterModel(entry)) => entry
                .to_definition()
                .map_err(Fault::from)
                .and_then(|d| mutate(&shared, |c| c.register_model(d)).map_err(Fault::from))
                .map(|_| Payload::Ack(msg.msg_id)),
            (None, Payload::RegisterIndicator(entry)) => entry
                .to_definition()
                .map_err(Fault::from)
                .and_then(|d| mutate(&shared, |c| c.register_indicator(d)).map_err(Fault::from))
                .map(|_| Payload::Ack(msg.msg_id)),
            (None, Payload::ReplaceDefinition { id, entry }) => {
                let def = match entry {
                    DefinitionEntry::Index(d) => Ok(Definition::Index(d.clone())),
                    DefinitionEntry::Model(e) => e.to_definition().map(Definition::Model),
                    DefinitionEntry::Indicator(e) => e.to_definition().map(Definition::Indicator),
                };
                def.map_err(Fault::from)
                    .and_then(|d| mutate(&shared, |c| c.replace_definition(id, d)).map_err(Fault::from))
                    .map(|_| Payload::Ack(msg.msg_id))
            }
            (None, Payload::SetIndexValue(v)) => mutate(&shared, |c| c.set_index_value(v.clone()))
                .map(|_| Payload::Ack(msg.msg_id))
                .map_err(Fault::from),
            (None, Payload::LoadPack(pack)) => {
                let outcomes =
                    mutate(&shared, |c| Ok::<_, Fault>(apply_pack(c, pack))).expect("pack application is infallible");
                for o in &outcomes {
                    if let Err(e) = &o.result {
                        let fault = Fault::from(e.clone());
                        mailer.report(&msg, fault.category(), format!("{}: {fault}", o.id)).await;
                    }
                }
                Ok(Payload::PackLoaded(outcomes))
            }
            (None, _) => Err(refused(AgentRole::Editor, &msg)),
        };
        let out = match result {
            Ok(payload) => mailer.reply(&msg, payload),
            Err(fault) => mailer.reject(&msg, fault).await,
        };
        let _ = reply.send(out);
    }
}

async fn arguer(mut rx: mpsc::Receiver<Envelope>, mut mailer: Mailer, shared: Arc<Shared>) {
    while let Some(Envelope { msg, violation, reply }) = rx.recv().await {
        let result = match (&violation, &msg.payload) {
            (Some(v), _) => Err(Fault::Protocol(v.clone())),
            (None, Payload::ComputeRequest { ids, period, mode }) => {
                let entries = compute_report(&shared.snapshot(), ids, period, *mode);
                for entry in &entries {
                    if let Err(e) = &entry.outcome {
                        mailer
                            .report(&msg, Category::Evaluation, format!("{}: {e}", entry.id))
                            .await;
                    }
                }
                Ok(Payload::ComputeResponse(entries))
            }
            (None, Payload::SeriesRequest { id, from, to }) => compute_series(&shared.snapshot(), id, from, to)
                .map(Payload::SeriesResponse)
                .map_err(Fault::from),
            (None, _) => Err(refused(AgentRole::Arguer, &msg)),
        };
        let out = match result {
            Ok(payload) => mailer.reply(&msg, payload),
            Err(fault) => mailer.reject(&msg, fault).await,
        };
        let _ = reply.send(out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compute::ComputeError;
    use crate::domains::evm_pack;
    use crate::expr::EvalError;
    use crate::registry::RegistryError;

    fn period() -> PeriodKey {
        "2024-03".parse().unwrap()
    }

    async fn evm_runtime(values: &[(&str, f64)]) -> Runtime {
        let rt = Runtime::start(Catalog::new());
        let client = rt.client();
        let out = client.load_pack(evm_pack()).await.unwrap();
        assert!(out.iter().all(|o| o.result.is_ok()));
        for (id, v) in values {
            client
                .set_index_value(IndexValue {
                    index_id: id.to_string(),
                    period: period(),
                    value: *v,
                })
                .await
                .unwrap();
        }
        rt
    }

    fn model(id: &str, src: &str) -> ModelEntry {
        ModelEntry {
            id: id.into(),
            label: id.into(),
            expression: src.into(),
            unit: "u".into(),
        }
    }

    #[tokio::test]
    async fn valid_registration_is_acked_silently() {
        let rt = evm_runtime(&[]).await;
        rt.client().register_model(model("CPI2", "EV / AC")).await.unwrap();
        assert!(rt.anomalies(None).is_empty());
        assert!(rt.snapshot().model("CPI2").is_some());
    }

    #[tokio::test]
    async fn failed_registration_logs_one_validation_anomaly() {
        let rt = evm_runtime(&[]).await;
        let before = rt.snapshot().fingerprint();
        let err = rt.client().register_model(model("M", "X + 1")).await.unwrap_err();
        assert!(matches!(err, Fault::Registry(RegistryError::UnknownDependency { .. })));
        let log = rt.anomalies(None);
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].category, Category::Validation);
        assert_eq!(log[0].source, AgentRole::Editor);
        assert_eq!(rt.snapshot().fingerprint(), before);
    }

    #[tokio::test]
    async fn parse_error_is_a_validation_anomaly() {
        let rt = evm_runtime(&[]).await;
        let err = rt.client().register_model(model("M", "EV +")).await.unwrap_err();
        assert!(matches!(err, Fault::Formula(_)));
        assert_eq!(rt.anomalies(Some(Category::Validation)).len(), 1);
    }

    #[tokio::test]
    async fn compute_through_arguer() {
        let rt = evm_runtime(&[("EV", 400.0), ("AC", 450.0), ("PV", 500.0), ("BAC", 1000.0)]).await;
        let entries = rt
            .client()
            .compute(vec!["CV".into()], period(), None)
            .await
            .unwrap();
        let report = entries[0].outcome.as_ref().unwrap();
        assert_eq!(report.value, -50.0);
        assert!(rt.anomalies(None).is_empty());
    }

    #[tokio::test]
    async fn division_by_zero_is_an_evaluation_anomaly() {
        let rt = evm_runtime(&[("EV", 400.0), ("AC", 0.0)]).await;
        let before = rt.snapshot().fingerprint();
        let entries = rt
            .client()
            .compute(vec!["CV".into(), "CPI_I".into()], period(), None)
            .await
            .unwrap();
        assert!(entries[0].outcome.is_ok());
        assert!(matches!(
            entries[1].outcome,
            Err(ComputeError::Evaluation {
                source: EvalError::DivisionByZero { .. },
                ..
            })
        ));
        let eval = rt.anomalies(Some(Category::Evaluation));
        assert_eq!(eval.len(), 1);
        assert_eq!(eval[0].source, AgentRole::Arguer);
        assert_eq!(rt.snapshot().fingerprint(), before);
    }

    #[tokio::test]
    async fn misrouted_payload_is_a_protocol_anomaly() {
        let rt = evm_runtime(&[]).await;
        let client = rt.client();
        let reply = client
            .send(
                AgentRole::Editor,
                Payload::ComputeRequest {
                    ids: vec![],
                    period: period(),
                    mode: None,
                },
            )
            .await;
        assert!(matches!(reply.payload, Payload::Rejected(Fault::Protocol(_))));
        assert_eq!(reply.recipient, client.party());
        let forged = client
            .send(AgentRole::Supervisor, Payload::Anomaly(rt.anomalies(None)[0].clone()))
            .await;
        assert!(matches!(forged.payload, Payload::Rejected(Fault::Protocol(_))));
        let log = rt.anomalies(Some(Category::Protocol));
        assert_eq!(log.iter().map(|r| r.seq).collect::<Vec<_>>(), [1, 2]);
    }

    #[tokio::test]
    async fn stale_msg_id_is_rejected() {
        let rt = Runtime::start(Catalog::new());
        let msg = |id| AgentMessage {
            msg_id: id,
            sender: Party::Client(99),
            recipient: Party::Agent(AgentRole::Arguer),
            payload: Payload::ComputeRequest {
                ids: vec![],
                period: period(),
                mode: None,
            },
        };
        assert!(matches!(rt.dispatch(msg(5)).await.payload, Payload::ComputeResponse(_)));
        assert!(matches!(rt.dispatch(msg(5)).await.payload, Payload::Rejected(Fault::Protocol(_))));
        assert!(matches!(rt.dispatch(msg(6)).await.payload, Payload::ComputeResponse(_)));
        assert_eq!(rt.anomalies(Some(Category::Protocol)).len(), 1);
    }

    #[tokio::test]
    async fn replies_to_a_client_are_numbered_by_the_agent() {
        let rt = Runtime::start(Catalog::new());
        let client = rt.client();
        let a = client.send(AgentRole::Arguer, Payload::ComputeRequest { ids: vec![], period: period(), mode: None }).await;
        let b = client.send(AgentRole::Arguer, Payload::ComputeRequest { ids: vec![], period: period(), mode: None }).await;
        assert!(b.msg_id > a.msg_id);
        assert_eq!(a.sender, Party::Agent(AgentRole::Arguer));
    }

    #[tokio::test(flavor = "multi_thread", worker_threads = 4)]
    async fn concurrent_failures_get_dense_seqs() {
        let rt = evm_runtime(&[]).await;
        let mut tasks = Vec::new();
        for i in 0..100 {
            let client = rt.client();
            tasks.push(tokio::spawn(async move {
                client.register_model(model(&format!("M{i}"), "Missing + 1")).await
            }));
        }
        for t in tasks {
            assert!(t.await.unwrap().is_err());
        }
        let seqs: Vec<u64> = rt.anomalies(None).iter().map(|r| r.seq).collect();
        assert_eq!(seqs, (1..=100).collect::<Vec<_>>());
    }

    #[tokio::test]
    async fn failed_pack_entries_are_logged() {
        let rt = Runtime::start(Catalog::new());
        let mut pack = evm_pack();
        pack.models.push(model("LOOP_A", "LOOP_B + 1"));
        pack.models.push(model("LOOP_B", "LOOP_A + 1"));
        let out = rt.client().load_pack(pack).await.unwrap();
        assert_eq!(out.iter().filter(|o| o.result.is_err()).count(), 2);
        assert_eq!(rt.anomalies(Some(Category::Validation)).len(), 2);
        assert!(rt.snapshot().indicator("CV").is_some());
    }

    #[tokio::test]
    async fn replace_keeps_dependents() {
        let rt = evm_runtime(&[("EV", 400.0), ("AC", 450.0), ("BAC", 1000.0)]).await;
        let client = rt.client();
        client
            .replace_definition("CPI", DefinitionEntry::Model(model("CPI", "EV/AC")))
            .await
            .unwrap();
        let err = client
            .replace_definition("CPI", DefinitionEntry::Model(model("CPI", "EAC_CPI + 1")))
            .await
            .unwrap_err();
        assert!(matches!(err, Fault::Registry(RegistryError::CycleDetected { .. })));
        let entries = client.compute(vec!["EAC_I".into()], period(), None).await.unwrap();
        assert!((entries[0].outcome.as_ref().unwrap().value - 1125.0).abs() < 1e-9);
    }
}
