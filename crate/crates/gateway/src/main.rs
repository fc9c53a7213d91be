use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pfg_core::catalog::{load_catalog, save_catalog};
use pfg_core::extractor::DocumentFormat;
use pfg_core::session::{parse_ndjson, ExportFormat, Session};
use pfg_gateway::{bootstrap, ingest_file, router, App, Config};

#[derive(Parser)]
#[command(name = "pfg", version, about = "Paste-driven data integration gateway")]
struct Cli {
    /// Flat key=value config file; PFG_* variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Catalog file, overriding the config's `catalog` key.
    #[arg(long, global = true)]
    catalog: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        listen: Option<String>,
    },
    /// Add documents to the catalog file as sources.
    Ingest {
        files: Vec<PathBuf>,
        /// csv, tsv or html; guessed from the extension otherwise.
        #[arg(long)]
        format: Option<DocumentFormat>,
    },
    /// Print the source graph in DOT.
    DumpGraph,
    /// Rebuild a session from its NDJSON log and print the resulting grid.
    ReplayLog {
        log: PathBuf,
        /// Catalog the session started from; defaults to the configured one.
        #[arg(long)]
        initial: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        export: ExportFormat,
    },
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    let mut config = Config::load(cli.config.as_deref())?;
    if let Some(c) = cli.catalog {
        config.catalog = Some(c);
    }
    match cli.command {
        Command::Serve { listen } => {
            if let Some(l) = listen {
                config.listen = l;
            }
            let app = App::from_config(config)?;
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&app.config.listen).await?;
                log::info!("listening on {}", listener.local_addr()?);
                axum::serve(listener, router(app))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await
            })?;
        }
        Command::Ingest { files, format } => {
            let path = config.catalog.clone().ok_or("ingest needs a catalog file (--catalog or `catalog =`)")?;
            let (mut catalog, _) = bootstrap(&config)?;
            for f in &files {
                let id = ingest_file(&mut catalog, f, format, config.tau_type)?;
                let rows = catalog.table(&id).map_or(0, |t| t.len());
                let types: Vec<String> = catalog.source(&id).map_or(Vec::new(), |d| {
                    d.schema
                        .iter()
                        .map(|a| match &a.semantic_type {
                            Some(t) => format!("{}:{t}", a.name),
                            None => a.name.clone(),
                        })
                        .collect()
                });
                println!("{id}\t{rows} rows\t{}", types.join(", "));
            }
            save_catalog(&catalog, &path)?;
        }
        Command::DumpGraph => {
            let (catalog, _) = bootstrap(&config)?;
            print!("{}", catalog.graph.to_dot());
        }
        Command::ReplayLog { log, initial, export } => {
            let (mut catalog, services) = bootstrap(&config)?;
            if let Some(p) = initial {
                catalog = load_catalog(&p)?;
            }
            let events = parse_ndjson(&std::fs::read_to_string(&log)?)?;
            let session = Session::replay(catalog, config.session_config(), &services, &events)?;
            eprintln!(
                "replayed {} events: {:?} mode, {} rows",
                events.len(),
                session.state.mode,
                session.state.output.rows.len()
            );
            std::io::stdout().write_all(&session.export(export)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("pfg: {e}");
            ExitCode::FAILURE
        }
    }
}
