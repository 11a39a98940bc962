//! `decisio` command line.
//!
//! Each invocation loads the state file (a pack document extended with the
//! stored index values and the anomaly log), runs one command through the
//! agent runtime and writes the state back. Exit status is 0 on success,
//! 1 when a domain error was reported and 2 on usage errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use decisio_core::agents::{AnomalyRecord, Category, Client, Runtime, SupervisorLog};
use decisio_core::domains::{apply_pack, evm_pack, load_pack, turc_pack, Pack};
use decisio_core::registry::csv::read_values;
use decisio_core::registry::{Catalog, IndexValue, PeriodKey, TierFilter};
use decisio_core::viz::{render_text, Mode};

pub const STATE_ENV: &str = "DECISIO_STATE";
pub const DEFAULT_STATE: &str = "decisio-state.json";

#[derive(Debug, Parser)]
#[command(name = "decisio", version, about = "Decision-support engine: packs, index values and indicators")]
struct Cli {
    /// State file holding definitions, values and the anomaly log.
    #[arg(long, global = true, env = STATE_ENV, default_value = DEFAULT_STATE)]
    state: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Register every entry of a pack file (or `builtin:evm`, `builtin:turc`).
    LoadPack { path: String },
    /// Store one index value.
    SetIndex {
        id: String,
        period: PeriodKey,
        #[arg(allow_negative_numbers = true)]
        value: f64,
    },
    /// Store index values from a CSV file with header `index_id,period,value`.
    ImportValues { path: PathBuf },
    /// Compute indicators for one period and render them.
    Compute {
        #[arg(required = true)]
        ids: Vec<String>,
        #[arg(long)]
        period: PeriodKey,
        #[arg(long)]
        mode: Option<Mode>,
    },
    /// Histogram of one indicator over a period range.
    Series { id: String, from: PeriodKey, to: PeriodKey },
    /// List registered services.
    List {
        #[arg(default_value = "all")]
        tier: TierFilter,
    },
    /// Show the anomaly log.
    Anomalies {
        #[arg(long)]
        category: Option<Category>,
    },
    /// Serve the HTTP API over the current state.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Pack file to load before serving.
        #[arg(long)]
        pack: Option<String>,
    },
}

/// On-disk state: a pack document plus the anomaly log.
#[derive(Debug, Serialize, Deserialize)]
struct StateFile {
    #[serde(flatten)]
    pack: Pack,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    anomalies: Vec<AnomalyRecord>,
}

/// A failure to report on one line.
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

/// Run one command; returns the process exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                write!(out, "{rendered}")
            } else {
                write!(err, "{rendered}")
            };
            return code;
        }
    };
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return 1;
        }
    };
    match rt.block_on(execute(cli, out, err)) {
        Ok(code) => code,
        Err(Failure(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
    }
}

fn read_state(path: &Path) -> Result<(Catalog, SupervisorLog), Failure> {
    if !path.exists() {
        return Ok((Catalog::new(), SupervisorLog::new()));
    }
    let text = fs::read_to_string(path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    let state: StateFile =
        serde_json::from_str(&text).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
    let mut catalog = Catalog::new();
    if let Some(bad) = apply_pack(&mut catalog, &state.pack)
        .into_iter()
        .find_map(|o| o.result.err().map(|e| format!("{}: {e}", o.id)))
    {
        return Err(Failure(format!("{}: inconsistent state: {bad}", path.display())));
    }
    Ok((catalog, SupervisorLog::restore(state.anomalies)))
}

fn write_state(path: &Path, runtime: &Runtime) -> Result<(), Failure> {
    let state = StateFile {
        pack: Pack::from_catalog(&runtime.snapshot(), "state"),
        anomalies: runtime.anomalies(None),
    };
    let text = serde_json::to_string_pretty(&state)? + "\n";
    fs::write(path, text).map_err(|e| Failure(format!("{}: {e}", path.display())))
}

fn resolve_pack(spec: &str) -> Result<Pack, Failure> {
    Ok(match spec {
        "builtin:evm" => evm_pack(),
        "builtin:turc" => turc_pack(),
        path => load_pack(path)?,
    })
}

/// Load `pack` through the Editor; one error line per rejected entry.
async fn load(client: &Client, pack: Pack, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let name = pack.name.clone();
    let outcomes = client.load_pack(pack).await?;
    let mut rejected = 0;
    for o in &outcomes {
        if let Err(e) = &o.result {
            rejected += 1;
            writeln!(err, "error: {}: {e}", o.id)?;
        }
    }
    writeln!(
        out,
        "loaded pack '{name}': {} entries applied, {rejected} rejected",
        outcomes.len() - rejected
    )?;
    Ok(if rejected == 0 { 0 } else { 1 })
}

async fn execute(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let (catalog, log) = read_state(&cli.state)?;
    let runtime = Runtime::start_with(catalog, log);
    let client = runtime.client();
    let code = match cli.command {
        Command::LoadPack { path } => load(&client, resolve_pack(&path)?, out, err).await?,
        Command::SetIndex { id, period, value } => {
            let v = IndexValue {
                index_id: id.clone(),
                period: period.clone(),
                value,
            };
            match client.set_index_value(v).await {
                Ok(()) => {
                    writeln!(out, "{id}@{period} = {value}")?;
                    0
                }
                Err(e) => {
                    writeln!(err, "error: {e}")?;
                    1
                }
            }
        }
        Command::ImportValues { path } => {
            let file = fs::File::open(&path).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
            let values = read_values(file).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
            let count = values.len();
            let mut pack = Pack::empty("import");
            pack.values = values;
            let outcomes = client.load_pack(pack).await?;
            let mut code = 0;
            for o in &outcomes {
                if let Err(e) = &o.result {
                    code = 1;
                    writeln!(err, "error: {}: {e}", o.id)?;
                }
            }
            if code == 0 {
                writeln!(out, "imported {count} values")?;
            }
            code
        }
        Command::Compute { ids, period, mode } => {
            let mut code = 0;
            for entry in client.compute(ids, period, mode).await? {
                match entry.outcome {
                    Ok(report) => {
                        for line in render_text(&report.descriptor) {
                            writeln!(out, "{line}")?;
                        }
                    }
                    Err(e) => {
                        code = 1;
                        writeln!(err, "error: {}: {e}", entry.id)?;
                    }
                }
            }
            code
        }
        Command::Series { id, from, to } => match client.series(id, from, to).await {
            Ok(descriptor) => {
                for line in render_text(&descriptor) {
                    writeln!(out, "{line}")?;
                }
                0
            }
            Err(e) => {
                writeln!(err, "error: {e}")?;
                1
            }
        },
        Command::List { tier } => {
            for e in runtime.snapshot().list_services(tier) {
                writeln!(out, "{:<9} {:<18} {} [{}]", e.tier.to_string(), e.id, e.label, e.unit)?;
            }
            0
        }
        Command::Anomalies { category } => {
            for r in runtime.anomalies(category) {
                writeln!(
                    out,
                    "#{} {} {} {} ({} msg {}): {}",
                    r.seq,
                    r.timestamp.format("%Y-%m-%dT%H:%M:%SZ"),
                    r.category,
                    r.source,
                    r.original_sender,
                    r.original_msg_id,
                    r.detail
                )?;
            }
            0
        }
        Command::Serve { addr, pack } => {
            if let Some(spec) = pack {
                load(&client, resolve_pack(&spec)?, out, err).await?;
            }
            writeln!(out, "listening on http://{addr}")?;
            out.flush()?;
            decisio_service::serve(addr, runtime.clone()).await?;
            return Ok(0);
        }
    };
    write_state(&cli.state, &runtime)?;
    Ok(code)
}
