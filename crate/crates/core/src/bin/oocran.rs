use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use oocran::api::{ApiClient, ClientError, ServerConfig, SwapRequest};
use oocran::ids::{NsId, VnfId};
use oocran::model::{NsDescriptor, NsState};
use oocran::planner::{plan_vwi, SwapStrategy, TimeModel, VwiDescriptor};
use oocran::scenario::Scenario;
use oocran::sim::simulate;

#[derive(Parser)]
#[command(name = "oocran", version, about = "Orchestrate virtualized wireless networks")]
struct Cli {
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    json: bool,
    #[arg(long, global = true, env = "OOCRAN_URL", default_value = "http://127.0.0.1:8000")]
    url: String,
    #[arg(long, global = true, env = "OOCRAN_TOKEN")]
    token: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Table,
    Linear,
}

#[derive(Subcommand)]
enum Command {
    /// Run the REST service.
    Serve {
        #[arg(long, env = "OOCRAN_PORT", default_value_t = 8000)]
        port: u16,
        #[arg(long, env = "OOCRAN_SECRET", hide_env_values = true)]
        secret: String,
        #[arg(long, env = "OOCRAN_SCENARIO")]
        scenario: Option<PathBuf>,
    },
    /// Deploy a network service from a descriptor file (TOML or JSON).
    Deploy {
        #[arg(short = 'f', long = "file")]
        file: PathBuf,
        /// Wait until the service is ACTIVE or FAILED.
        #[arg(long)]
        wait: bool,
        #[arg(long, default_value_t = 120.0)]
        timeout: f64,
    },
    /// Delete a network service.
    Delete { ns_id: NsId },
    /// Show one network service, or list them all.
    Status { ns_id: Option<NsId> },
    /// Plan a VWI for a coverage target.
    Plan {
        #[arg(long)]
        area: f64,
        #[arg(long, default_value_t = 30.0)]
        radius: f64,
        #[arg(long, value_enum, default_value_t = Model::Linear)]
        model: Model,
        /// Compute locally instead of asking the service.
        #[arg(long)]
        local: bool,
    },
    /// Replace a running VWI.
    Swap {
        ns_id: NsId,
        #[arg(long)]
        strategy: SwapStrategy,
        /// VWI or service descriptor of the replacement.
        #[arg(short = 'f', long = "file")]
        file: Option<PathBuf>,
        /// Traffic demand for REPOSITORY swaps, as key=value.
        #[arg(long = "demand", value_parser = parse_demand)]
        demand: Vec<(String, f64)>,
    },
    /// Print the stored samples of one metric.
    Metrics {
        vnf_id: VnfId,
        metric: String,
    },
    /// Run a scenario timeline in virtual time and print the event log.
    Simulate {
        #[arg(short = 'f', long = "file")]
        file: PathBuf,
        #[arg(long)]
        until: f64,
    },
}

fn parse_demand(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or("expected key=value")?;
    let v: f64 = v.parse().map_err(|_| format!("`{v}` is not a number"))?;
    Ok((k.to_string(), v))
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Client(#[from] ClientError),
    #[error("{}: {source}", path.display())]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Other(String),
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn is_json(path: &Path, text: &str) -> bool {
    path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{')
}

fn load_descriptor(path: &Path) -> Result<NsDescriptor, CliError> {
    let text = read(path)?;
    let parsed = if is_json(path, &text) {
        NsDescriptor::from_json_str(&text)
    } else {
        NsDescriptor::from_toml_str(&text)
    };
    parsed.map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

fn emit<T: Serialize>(json: bool, value: &T, text: impl FnOnce() -> String) {
    if json {
        println!("{}", serde_json::to_string_pretty(value).unwrap_or_default());
    } else {
        print!("{}", text());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let client = || ApiClient::new(cli.url.clone(), cli.token.clone());
    match cli.command {
        Command::Serve { port, secret, scenario } => {
            let mut cfg = ServerConfig::from_env().unwrap_or_else(|_| ServerConfig::new(secret.clone()));
            cfg.port = port;
            cfg.secret = secret;
            cfg.scenario = scenario;
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Other(e.to_string()))?;
            rt.block_on(oocran::api::serve(cfg)).map_err(|e| CliError::Other(e.to_string()))?;
        }
        Command::Deploy { file, wait, timeout } => {
            let desc = load_descriptor(&file)?;
            let c = client();
            let mut view = c.create_ns(&desc)?;
            if wait {
                let deadline = Instant::now() + Duration::from_secs_f64(timeout);
                while !matches!(view.ns.state, NsState::Active | NsState::Failed) {
                    if Instant::now() > deadline {
                        return Err(CliError::Other(format!("{} still {} after {timeout} s", view.ns.id, view.ns.state)));
                    }
                    std::thread::sleep(Duration::from_millis(100));
                    view = c.get_ns(view.ns.id)?;
                }
            }
            emit(cli.json, &view, || format!("{} {}\n", view.ns.id, view.ns.state));
            if view.ns.state == NsState::Failed {
                return Err(CliError::Other(format!("{} FAILED", view.ns.id)));
            }
        }
        Command::Delete { ns_id } => {
            let view = client().delete_ns(ns_id)?;
            emit(cli.json, &view, || format!("{} {}\n", view.ns.id, view.ns.state));
        }
        Command::Status { ns_id } => {
            let views = match ns_id {
                Some(id) => vec![client().get_ns(id)?],
                None => client().list_nss()?,
            };
            emit(cli.json, &views, || {
                views
                    .iter()
                    .map(|v| format!("{} {} {} vnfs={}\n", v.ns.id, v.ns.descriptor.name, v.ns.state, v.vnfs.len()))
                    .collect()
            });
        }
        Command::Plan {
            area,
            radius,
            model,
            local,
        } => {
            let mut vwi = VwiDescriptor::new("plan", area);
            vwi.cell_radius_m = radius;
            let plan = if local {
                let tm = match model {
                    Model::Table => TimeModel::reference_table(),
                    Model::Linear => TimeModel::reference_linear(),
                };
                plan_vwi(&vwi, &tm).map_err(|e| CliError::Other(e.to_string()))?
            } else {
                let model = match model {
                    Model::Table => "table",
                    Model::Linear => "linear",
                };
                let path = format!("/vwis/plan?model={model}");
                let v = client().request(reqwest::Method::POST, &path, Some(&vwi), None)?;
                serde_json::from_value(v["plan"].clone()).map_err(|e| CliError::Other(e.to_string()))?
            };
            emit(cli.json, &plan, || {
                format!(
                    "n_enodebs: {}\ncovered_area_m2: {:.1}\nestimated_setup_s: {:.2}\n",
                    plan.n_enodebs, plan.covered_area_m2, plan.estimated_setup_s
                )
            });
        }
        Command::Swap {
            ns_id,
            strategy,
            file,
            demand,
        } => {
            let mut req = SwapRequest {
                strategy,
                vwi: None,
                descriptor: None,
                demand: demand.into_iter().collect::<BTreeMap<_, _>>(),
            };
            if let Some(path) = file {
                let text = read(&path)?;
                let vwi = if is_json(&path, &text) {
                    serde_json::from_str::<VwiDescriptor>(&text).ok()
                } else {
                    VwiDescriptor::from_toml_str(&text).ok()
                };
                match vwi {
                    Some(v) => req.vwi = Some(v),
                    None => req.descriptor = Some(load_descriptor(&path)?),
                }
            }
            let report = client().swap(ns_id, &req)?;
            emit(cli.json, &report, || {
                format!(
                    "{} {:?} {:?} old={} new={}\n",
                    report.swap_id,
                    report.strategy,
                    report.status,
                    report.old_ns,
                    report.new_ns.map(|n| n.to_string()).unwrap_or_else(|| "-".into())
                )
            });
        }
        Command::Metrics { vnf_id, metric } => {
            let samples = client().metrics(vnf_id, &metric)?;
            emit(cli.json, &samples, || {
                samples.iter().map(|s| format!("{} {}\n", s.ts, s.value)).collect()
            });
        }
        Command::Simulate { file, until } => {
            let sc = Scenario::load(&file).map_err(|e| CliError::Other(e.to_string()))?;
            let report = simulate(&sc, until).map_err(|e| CliError::Other(e.to_string()))?;
            emit(cli.json, &report, || report.event_log());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
