//! Command-line front end: corpus-driven generation, evaluation, schematic
//! rendering, and benchmark tables.

mod artifacts;
mod bench;
mod catalog;
mod config;
mod corpus;
mod svg;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use layoutforge_core::gateway::{Gateway, GatewayMode, API_KEY_ENV};
use layoutforge_core::grounding::GroundingConfig;
use layoutforge_core::metrics::{build_report, layout_render_text, semantic_scores_llm, DEFAULT_TAU};
use layoutforge_core::scene::Boundary;
use layoutforge_core::validation::{run_closed_loop, LoopConfig};

use artifacts::{write_json, write_used_cassette, LayoutFile};
use catalog::{build_scene, SizeCatalog};
use config::{FileConfig, DEFAULT_BOUNDARY_D, DEFAULT_BOUNDARY_W, DEFAULT_ENDPOINT};
use corpus::{find_scenario, load_corpus};

#[derive(Parser)]
#[command(name = "layoutforge", version, about = "Slow-fast tabletop layout synthesis")]
struct Cli {
    /// Key-value config file (flags > environment > file)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
struct GatewayArgs {
    /// Gateway mode: live | record | replay | mock
    #[arg(long, env = "LAYOUTFORGE_MODE")]
    mode: Option<String>,
    /// Cassette path (replay source; record/mock recording target)
    #[arg(long, env = "LAYOUTFORGE_CASSETTE")]
    cassette: Option<PathBuf>,
    /// Scripted policy id for mock mode (standard, picky, skipchain,
    /// omit:NAME, forget:NAME, judge:P,A, garbage)
    #[arg(long)]
    policy: Option<String>,
    /// Chat-completion endpoint for live/record modes
    #[arg(long)]
    endpoint: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline for one corpus case and write run artifacts
    Generate {
        /// Scenario key, e.g. Dining_Table
        scenario: String,
        /// Case index within the scenario (0-based)
        case: usize,
        #[command(flatten)]
        gateway: GatewayArgs,
        #[arg(long, env = "LAYOUTFORGE_SEED")]
        seed: Option<u64>,
        /// Output directory (default runs/<scenario>-<case>)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Corpus JSON path (default: bundled corpus)
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Size catalog JSON path (default: bundled catalog)
        #[arg(long)]
        sizes: Option<PathBuf>,
        /// Surface extents in cm, e.g. 140x70
        #[arg(long)]
        boundary: Option<String>,
        #[arg(long)]
        population: Option<usize>,
        #[arg(long)]
        generations: Option<u32>,
        /// IoU collision threshold for the metric report
        #[arg(long)]
        tau: Option<f64>,
        /// Also ask the gateway for judged Pos./Ali. scores
        #[arg(long)]
        judge: bool,
    },
    /// Compute the metric report for an existing layout.json
    Evaluate {
        layout: PathBuf,
        #[arg(long)]
        tau: Option<f64>,
        /// Where to write metrics.json (default: next to the layout)
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        gateway: GatewayArgs,
        #[arg(long)]
        judge: bool,
    },
    /// Render a layout.json to a schematic top-down SVG
    Render {
        layout: PathBuf,
        /// Where to write the SVG (default: next to the layout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a directory of layouts grouped by scenario, or verify PSF
    /// arithmetic against published component values
    Bench {
        /// Directory containing <scenario>/<layout>.json files
        #[arg(long)]
        dir: Option<PathBuf>,
        /// CSV of published values: method,cf,ib,pos,ali,fc,psf
        #[arg(long)]
        psf_check: Option<PathBuf>,
        /// Where to write the results CSV
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        tau: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let file_cfg = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Generate {
            scenario,
            case,
            gateway,
            seed,
            out,
            corpus,
            sizes,
            boundary,
            population,
            generations,
            tau,
            judge,
        } => cmd_generate(
            &file_cfg, scenario, case, gateway, seed, out, corpus, sizes, boundary, population,
            generations, tau, judge,
        ),
        Command::Evaluate {
            layout,
            tau,
            out,
            gateway,
            judge,
        } => cmd_evaluate(&file_cfg, &layout, tau, out, gateway, judge),
        Command::Render { layout, out } => cmd_render(&layout, out),
        Command::Bench {
            dir,
            psf_check,
            out,
            tau,
        } => cmd_bench(&file_cfg, dir, psf_check, out, tau),
    }
}

fn build_gateway(args: &GatewayArgs, file_cfg: &FileConfig) -> Result<Gateway> {
    let mode = args
        .mode
        .clone()
        .or_else(|| file_cfg.mode.clone())
        .context("no gateway mode given; pass --mode live|record|replay|mock")?;
    let cassette = args.cassette.clone().or_else(|| file_cfg.cassette.clone());
    let policy = args
        .policy
        .clone()
        .or_else(|| file_cfg.policy.clone())
        .unwrap_or_else(|| "standard".to_string());
    let endpoint = args
        .endpoint
        .clone()
        .or_else(|| file_cfg.endpoint.clone())
        .unwrap_or_else(|| DEFAULT_ENDPOINT.to_string());
    let gateway = match mode.as_str() {
        "live" => Gateway::new(&GatewayMode::Live {
            endpoint,
            api_key_env: API_KEY_ENV.to_string(),
        })?,
        "replay" => {
            let cassette = cassette.context("--mode replay requires --cassette PATH")?;
            Gateway::new(&GatewayMode::Replay { cassette })?
        }
        "record" => {
            let cassette = cassette.context("--mode record requires --cassette PATH")?;
            Gateway::new(&GatewayMode::Record {
                cassette,
                endpoint,
                api_key_env: API_KEY_ENV.to_string(),
            })?
        }
        "mock" => match cassette {
            // a cassette in mock mode records the session for later replay
            Some(path) => Gateway::mock_recording(&policy, &path)?,
            None => Gateway::mock(&policy)?,
        },
        other => bail!("unknown gateway mode '{other}' (live|record|replay|mock)"),
    };
    Ok(gateway)
}

fn parse_boundary(spec: Option<&str>, file_cfg: &FileConfig) -> Result<Boundary> {
    if let Some(spec) = spec {
        let (w, d) = spec
            .split_once('x')
            .with_context(|| format!("boundary '{spec}' must look like 140x70"))?;
        let boundary = Boundary::new(w.trim().parse()?, d.trim().parse()?);
        boundary.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        return Ok(boundary);
    }
    Ok(Boundary::new(
        file_cfg.boundary_width.unwrap_or(DEFAULT_BOUNDARY_W),
        file_cfg.boundary_depth.unwrap_or(DEFAULT_BOUNDARY_D),
    ))
}

#[allow(clippy::too_many_arguments)]
fn cmd_generate(
    file_cfg: &FileConfig,
    scenario_key: String,
    case_index: usize,
    gateway_args: GatewayArgs,
    seed: Option<u64>,
    out: Option<PathBuf>,
    corpus_path: Option<PathBuf>,
    sizes_path: Option<PathBuf>,
    boundary_spec: Option<String>,
    population: Option<usize>,
    generations: Option<u32>,
    tau: Option<f64>,
    judge: bool,
) -> Result<ExitCode> {
    let out_dir = out
        .or_else(|| file_cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from(format!("runs/{scenario_key}-{case_index}")));
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;

    let outcome = (|| -> Result<ExitCode> {
        let corpus = load_corpus(corpus_path.as_deref())?;
        let scenario = find_scenario(&corpus, &scenario_key)?;
        let display_name = scenario.scene.clone();
        let sizes = SizeCatalog::load(sizes_path.as_deref())?;
        let boundary = parse_boundary(boundary_spec.as_deref(), file_cfg)?;
        let seed = seed.or(file_cfg.seed).unwrap_or(0);
        let scene = build_scene(scenario, case_index, &sizes, boundary, seed)?;

        let gateway = build_gateway(&gateway_args, file_cfg)?;
        let mut ground_cfg = GroundingConfig {
            rng_seed: seed,
            ..GroundingConfig::default()
        };
        if let Some(p) = population.or(file_cfg.population) {
            ground_cfg.population = p;
        }
        if let Some(g) = generations.or(file_cfg.generations) {
            ground_cfg.generations = g;
        }

        let mut report =
            run_closed_loop(&scene, &layoutforge_core::relations::builtin_library(), &gateway, &LoopConfig::default(), &ground_cfg)
                .map_err(|e| anyhow::anyhow!("{e}"))?;

        let tau = tau.or(file_cfg.tau).unwrap_or(DEFAULT_TAU);
        let judged = if judge {
            let text = layout_render_text(&report.final_layout);
            Some(
                semantic_scores_llm(&text, &scene.instruction, &gateway)
                    .map_err(|e| anyhow::anyhow!("{e}"))?,
            )
        } else {
            None
        };
        if judge || tau != DEFAULT_TAU {
            report.metrics = build_report(
                &report.final_layout,
                &scene.boundary,
                &scene.object_names(),
                tau,
                judged,
            )
            .map_err(|e| anyhow::anyhow!("{e}"))?;
            report.fingerprints = gateway.fingerprints_used();
        }

        let layout_file =
            LayoutFile::from_layout(&report.final_layout, &scene.boundary, &scene.object_names());
        layout_file.save(&out_dir.join("layout.json"))?;
        write_json(&report.metrics, &out_dir.join("metrics.json"))?;
        write_json(&report, &out_dir.join("report.json"))?;
        std::fs::write(out_dir.join("layout.svg"), svg::render_svg(&layout_file))
            .with_context(|| "cannot write layout.svg")?;
        write_used_cassette(&gateway.entries_used(), &out_dir.join("run.cassette.jsonl"))?;

        println!(
            "{display_name} ({scenario_key}[{case_index}]): solved={} rounds={} CF={:.1} IB={:.1} FC={:.1} -> {}",
            report.solved,
            report.rounds_used,
            report.metrics.cf,
            report.metrics.ib,
            report.metrics.fc,
            out_dir.display()
        );
        Ok(if report.solved {
            ExitCode::SUCCESS
        } else {
            ExitCode::from(2)
        })
    })();

    if let Err(e) = &outcome {
        // leave a diagnostic report for harnesses even on failure
        let diagnostic = serde_json::json!({ "error": format!("{e:#}") });
        let _ = write_json(&diagnostic, &out_dir.join("report.json"));
    }
    outcome
}

fn cmd_evaluate(
    file_cfg: &FileConfig,
    layout_path: &Path,
    tau: Option<f64>,
    out: Option<PathBuf>,
    gateway_args: GatewayArgs,
    judge: bool,
) -> Result<ExitCode> {
    let file = LayoutFile::load(layout_path)?;
    let layout = file.to_layout()?;
    let tau = tau.or(file_cfg.tau).unwrap_or(DEFAULT_TAU);
    let judged = if judge {
        let gateway = build_gateway(&gateway_args, file_cfg)?;
        let text = layout_render_text(&layout);
        let instruction = format!("Evaluate the arrangement of: {}", file.requested.join(", "));
        Some(semantic_scores_llm(&text, &instruction, &gateway).map_err(|e| anyhow::anyhow!("{e}"))?)
    } else {
        None
    };
    let report = build_report(&layout, &file.boundary, &file.requested, tau, judged)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let out_path = out.unwrap_or_else(|| {
        layout_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("metrics.json")
    });
    write_json(&report, &out_path)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(ExitCode::SUCCESS)
}

fn cmd_render(layout_path: &Path, out: Option<PathBuf>) -> Result<ExitCode> {
    let file = LayoutFile::load(layout_path)?;
    let out_path = out.unwrap_or_else(|| {
        layout_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join("layout.svg")
    });
    std::fs::write(&out_path, svg::render_svg(&file))
        .with_context(|| format!("cannot write {}", out_path.display()))?;
    println!("wrote {}", out_path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_bench(
    file_cfg: &FileConfig,
    dir: Option<PathBuf>,
    psf_check: Option<PathBuf>,
    out: Option<PathBuf>,
    tau: Option<f64>,
) -> Result<ExitCode> {
    if let Some(csv) = psf_check {
        let rows = bench::psf_check(&csv)?;
        let mut all_pass = true;
        println!("{:<14} {:>9} {:>9} {:>7}  verdict", "method", "computed", "expected", "diff");
        for row in &rows {
            all_pass &= row.pass;
            println!(
                "{:<14} {:>9.2} {:>9.1} {:>7.3}  {}",
                row.method,
                row.computed,
                row.expected,
                (row.computed - row.expected).abs(),
                if row.pass { "PASS" } else { "FAIL" }
            );
        }
        return Ok(if all_pass {
            ExitCode::SUCCESS
        } else {
            ExitCode::from(1)
        });
    }
    let dir = dir.context("bench needs --dir DIR or --psf-check CSV")?;
    let tau = tau.or(file_cfg.tau).unwrap_or(DEFAULT_TAU);
    let rows = bench::bench_directory(&dir, tau)?;
    print!("{}", bench::format_table(&rows));
    if let Some(out) = out {
        std::fs::write(&out, bench::format_csv(&rows))
            .with_context(|| format!("cannot write {}", out.display()))?;
        println!("wrote {}", out.display());
    }
    Ok(ExitCode::SUCCESS)
}
