//! `dwmerge`: merge two star-schema warehouses stored as CSV directories.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::Value;

use dwmerge::dimension_merge::ConflictPolicy;
use dwmerge::generator::{generate_pair, write_pair, GenError, GenSpec, Shape};
use dwmerge::io::{load_dw, load_schema, load_user_map, write_dw, write_report, IoError, LoadOptions};
use dwmerge::matching::{match_schemas, MatchError, MatchMode, MatcherConfig};
use dwmerge::star_merge::{merge_stars, MergeConfig};
use dwmerge::MergeError;

const EXIT_LOAD: u8 = 2;
const EXIT_UNMERGEABLE: u8 = 3;
const EXIT_INVARIANT: u8 = 4;
const EXIT_USAGE: u8 = 5;

#[derive(Debug, Parser)]
#[command(name = "dwmerge", version, about = "Merge two star-schema data warehouses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Merge two warehouses into a star or a constellation.
    Merge {
        dw1: PathBuf,
        dw2: PathBuf,
        out: PathBuf,
        #[command(flatten)]
        opts: MergeOpts,
        /// Report location [default: <OUT>/report.json]
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Print the attribute and measure correspondences without merging.
    Match {
        dw1: PathBuf,
        dw2: PathBuf,
        #[command(flatten)]
        opts: MergeOpts,
    },
    /// Load a warehouse and report integrity violations.
    Validate {
        dw: PathBuf,
        #[arg(long)]
        strict: bool,
    },
    /// Generate a seeded pair of overlapping warehouses.
    Gen {
        out1: PathBuf,
        out2: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Rows of every dimension in the underlying world.
        #[arg(long, default_value_t = 1000)]
        dim_size: usize,
        /// Fraction of world keys each warehouse samples.
        #[arg(long, default_value_t = 0.75)]
        overlap: f64,
        #[arg(long, default_value_t = 10_000)]
        fact_rows: usize,
        #[arg(long, value_enum, default_value_t = ShapeArg::Exp1)]
        shape: ShapeArg,
        /// Manifest location [default: <OUT1>/manifest.json]
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct MergeOpts {
    /// `exact` or `edit:<k>` (Levenshtein distance at most k).
    #[arg(long, default_value = "exact", value_parser = parse_matcher)]
    matcher: MatchMode,
    /// User correspondence file (`pair|forbid Owner.attr Owner.attr`).
    #[arg(long)]
    map: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ConflictArg::Left)]
    conflict: ConflictArg,
    /// Joined rows needed before a functional dependency is accepted.
    #[arg(long, default_value_t = 1)]
    min_support: u64,
    /// Keep every hierarchy.
    #[arg(long)]
    no_prune: bool,
    /// Maximum merged chains per sub-hierarchy pair.
    #[arg(long, default_value_t = 16)]
    chain_cap: usize,
    /// Duplicate ids and fact key tuples fail the load.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ConflictArg {
    Left,
    Right,
    Error,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ShapeArg {
    Exp1,
    Exp2,
    Customer,
}

fn parse_matcher(s: &str) -> Result<MatchMode, String> {
    match s.split_once(':') {
        None if s == "exact" => Ok(MatchMode::Exact),
        Some(("edit", k)) => {
            k.parse().map(|max| MatchMode::EditDistance { max }).map_err(|_| format!("bad edit distance `{k}`"))
        }
        _ => Err(format!("expected `exact` or `edit:<k>`, got `{s}`")),
    }
}

impl MergeOpts {
    fn load_options(&self) -> LoadOptions {
        LoadOptions { strict: self.strict }
    }

    fn config(&self) -> Result<MergeConfig> {
        let mut cfg = MergeConfig::default();
        cfg.matcher.mode = self.matcher;
        if let Some(path) = &self.map {
            cfg.matcher = MatcherConfig { mode: self.matcher, user_map: None }.with_user_map(load_user_map(path)?);
        }
        cfg.dimension.conflict = match self.conflict {
            ConflictArg::Left => ConflictPolicy::Left,
            ConflictArg::Right => ConflictPolicy::Right,
            ConflictArg::Error => ConflictPolicy::Error,
        };
        cfg.dimension.hierarchy.min_support = self.min_support;
        cfg.dimension.hierarchy.chain_cap = self.chain_cap;
        cfg.prune = !self.no_prune;
        Ok(cfg)
    }
}

fn cmd_merge(dw1: &Path, dw2: &Path, out: &Path, opts: &MergeOpts, report: Option<PathBuf>) -> Result<()> {
    let cfg = opts.config()?;
    let s1 = load_dw(dw1, opts.load_options())?;
    let s2 = load_dw(dw2, opts.load_options())?;
    let mut result = merge_stars(&s1, &s2, &cfg)?;
    let config = &mut result.report.config;
    config.insert("strict".into(), Value::Bool(opts.strict));
    if let Some(map) = &opts.map {
        config.insert("mapFile".into(), Value::String(map.display().to_string()));
    }
    write_dw(&result.schema, out)?;
    let report_path = report.unwrap_or_else(|| out.join("report.json"));
    write_report(&result.report, &report_path)?;
    info!("wrote {} and {}", out.display(), report_path.display());
    let r = &result.report;
    println!(
        "{:?} `{}`: {} tables, {} filled cells, {} conflicts, {} pruned hierarchies",
        r.output,
        r.name,
        r.tables.len(),
        r.filled_cells,
        r.conflicts.len(),
        r.pruned_hierarchies.len()
    );
    Ok(())
}

fn cmd_match(dw1: &Path, dw2: &Path, opts: &MergeOpts) -> Result<()> {
    let cfg = opts.config()?;
    let s1 = load_dw(dw1, opts.load_options())?;
    let s2 = load_dw(dw2, opts.load_options())?;
    let matches = match_schemas(&s1, &s2, &cfg.matcher)?;
    for c in matches.all() {
        println!("{c}");
    }
    Ok(())
}

fn cmd_validate(dw: &Path, strict: bool) -> Result<()> {
    let schema = load_schema(dw, LoadOptions { strict })?;
    let (facts, dims) = match &schema {
        dwmerge::model::Schema::Star(s) => (1, s.dimensions.len()),
        dwmerge::model::Schema::Constellation(c) => (c.facts.len(), c.dimensions.len()),
    };
    println!("{}: valid ({facts} facts, {dims} dimensions)", dw.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen(
    out1: &Path,
    out2: &Path,
    seed: u64,
    dim_size: usize,
    overlap: f64,
    fact_rows: usize,
    shape: ShapeArg,
    manifest: Option<PathBuf>,
) -> Result<()> {
    let shape = match shape {
        ShapeArg::Exp1 => Shape::Exp1,
        ShapeArg::Exp2 => Shape::Exp2,
        ShapeArg::Customer => Shape::Customer,
    };
    let pair = generate_pair(&GenSpec::shape(shape, seed, dim_size, overlap, fact_rows))?;
    let manifest = manifest.unwrap_or_else(|| out1.join("manifest.json"));
    write_pair(&pair, out1, out2, &manifest)?;
    println!("wrote {}, {} and {}", out1.display(), out2.display(), manifest.display());
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<MergeError>() {
        return match e {
            MergeError::Invariant(_) | MergeError::KeyAlignment(_) | MergeError::Model(_) => EXIT_INVARIANT,
            MergeError::Match(_) => EXIT_LOAD,
            _ => EXIT_UNMERGEABLE,
        };
    }
    if err.is::<GenError>() {
        return EXIT_USAGE;
    }
    if err.is::<IoError>() || err.is::<MatchError>() {
        return EXIT_LOAD;
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Merge { dw1, dw2, out, opts, report } => cmd_merge(&dw1, &dw2, &out, &opts, report),
        Command::Match { dw1, dw2, opts } => cmd_match(&dw1, &dw2, &opts),
        Command::Validate { dw, strict } => cmd_validate(&dw, strict),
        Command::Gen { out1, out2, seed, dim_size, overlap, fact_rows, shape, manifest } => {
            cmd_gen(&out1, &out2, seed, dim_size, overlap, fact_rows, shape, manifest)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // library errors already embed their sources
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
