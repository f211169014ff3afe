mod error;
mod files;
mod metrics_run;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gesteval::alignment::ScoreConfig;
use gesteval::analysis::{self, pairwise_to_csv, report_to_csv};
use gesteval::juice::{free_text_to_csv, profiles_to_csv, JuiceNormalization};
use gesteval::metrics::kendall_tau;
use gesteval::model::{serialize_log, RatingReport, Registry, ResampleUnit, Segment, StudyKind, StudyLog};
use gesteval::rating::EloConfig;
use gesteval::simulate::{
    simulate_alignment_votes, simulate_realism_votes, simulate_sessions, PlantedTruth, TakerBehaviour,
};
use gesteval::study::{build_plan, select_segments, PlanRequest, SegmentPolicy, StudyPlan};

use crate::error::CliError;
use crate::files::{emit, read_structured, read_text};

#[derive(Parser)]
#[command(name = "gesteval", version, about = "Gesture evaluation studies: plans, simulation, ratings and metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment screening and selection.
    #[command(subcommand)]
    Segments(SegmentsCmd),
    /// Study plans.
    #[command(subcommand)]
    Study(StudyCmd),
    /// Synthetic votes from planted ground truth.
    #[command(subcommand)]
    Simulate(SimulateCmd),
    /// Realism leaderboards.
    #[command(subcommand)]
    Rank(RankCmd),
    /// Appropriateness scores.
    #[command(subcommand)]
    Score(ScoreCmd),
    /// Rationale reports.
    #[command(subcommand)]
    Report(ReportCmd),
    /// Automatic motion metrics.
    #[command(subcommand)]
    Metrics(MetricsCmd),
    /// Kendall's tau-b between two per-condition tables.
    Correlate(CorrelateArgs),
}

#[derive(Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
enum Format {
    #[default]
    Csv,
    Json,
    Line,
}

#[derive(Args)]
struct Output {
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum SegmentsCmd {
    /// Pick per-speaker quotas of segments that pass screening.
    Select {
        /// Registry JSON whose segments are the candidates.
        #[arg(long)]
        registry: PathBuf,
        /// Selection policy (JSON or TOML); defaults apply when omitted.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Subcommand)]
enum StudyCmd {
    /// Build a plan: stimuli, mismatch assignment and task pool.
    Build {
        /// Plan request (JSON or TOML).
        #[arg(long)]
        request: PathBuf,
        /// Overrides the request's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Kind {
    Realism,
    Alignment,
}

impl From<Kind> for StudyKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Realism => StudyKind::Realism,
            Kind::Alignment => StudyKind::Alignment,
        }
    }
}

#[derive(Subcommand)]
enum SimulateCmd {
    /// Votes drawn directly from the planted truth, as a log.
    Votes {
        /// Planted truth (JSON or TOML).
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, value_enum)]
        kind: Kind,
        /// Realism: votes per condition pair.
        #[arg(long, default_value_t = 100)]
        votes_per_pair: usize,
        /// Alignment: takers per condition.
        #[arg(long, default_value_t = 50)]
        takers: usize,
        /// Alignment: pages per taker.
        #[arg(long, default_value_t = 21)]
        pages: usize,
        /// Overrides the truth's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the synthetic registry.
        #[arg(long)]
        registry_out: Option<PathBuf>,
    },
    /// Run simulated takers through scheduled sessions of a plan.
    Sessions {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, default_value_t = 100)]
        sessions: usize,
        /// Taker behaviour (JSON or TOML).
        #[arg(long)]
        behaviour: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Bootstrap {
    /// Log (JSON lines); `-` reads stdin.
    #[arg(long)]
    log: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    n_bootstrap: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, value_enum)]
    resample: Option<Unit>,
    /// Also write the pairwise table as CSV.
    #[arg(long)]
    pairwise_out: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Unit {
    Battles,
    Takers,
}

impl From<Unit> for ResampleUnit {
    fn from(u: Unit) -> Self {
        match u {
            Unit::Battles => ResampleUnit::Battles,
            Unit::Takers => ResampleUnit::Takers,
        }
    }
}

#[derive(Subcommand)]
enum RankCmd {
    /// Bradley-Terry Elo with bootstrap intervals and corrected pairwise tests.
    Elo {
        #[command(flatten)]
        args: Bootstrap,
        /// Add Wald intervals from the observed information.
        #[arg(long)]
        wald: bool,
    },
}

#[derive(Subcommand)]
enum ScoreCmd {
    /// Matched-preference scores with bootstrap intervals.
    Alignment {
        #[command(flatten)]
        args: Bootstrap,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Norm {
    NonTie,
    OptionShare,
}

#[derive(Subcommand)]
enum ReportCmd {
    /// Per-condition rationale profiles.
    Juice {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, value_enum)]
        kind: Kind,
        /// Registry JSON, for the mocap opponent filter.
        #[arg(long, conflicts_with = "plan")]
        registry: Option<PathBuf>,
        /// Plan JSON; its registry is used.
        #[arg(long)]
        plan: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Norm::NonTie)]
        normalization: Norm,
        /// Also write the verbatim "Other" texts as CSV.
        #[arg(long)]
        free_text_out: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Subcommand)]
enum MetricsCmd {
    /// Compute metrics for every system in a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Args)]
struct CorrelateArgs {
    /// CSV with a `condition` column.
    #[arg(long)]
    x: PathBuf,
    #[arg(long, default_value = "estimate")]
    x_column: String,
    #[arg(long)]
    y: PathBuf,
    #[arg(long)]
    y_column: String,
    /// Join column.
    #[arg(long, default_value = "condition")]
    key: String,
    #[command(flatten)]
    output: Output,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gesteval: {}: {e}", e.label());
            e.exit_code()
        }
    }
}

fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Segments(SegmentsCmd::Select {
            registry,
            policy,
            seed,
            output,
        }) => {
            let reg: Registry = read_structured(&registry)?;
            let policy: SegmentPolicy = match policy {
                Some(p) => read_structured(&p)?,
                None => SegmentPolicy::default(),
            };
            policy.validate()?;
            let picked = select_segments(&reg.segments, &policy, seed)?;
            let text = match output.format {
                Format::Json => serde_json::to_string_pretty(&picked)?,
                Format::Csv => segments_csv(&picked),
                Format::Line => picked
                    .iter()
                    .map(|s| format!("{} {} {:.2}-{:.2}s", s.speaker_id, s.id, s.start_s, s.end_s))
                    .collect::<Vec<_>>()
                    .join("\n"),
            };
            emit(output.out.as_deref(), &text)
        }
        Command::Study(StudyCmd::Build { request, seed, out }) => {
            let mut req: PlanRequest = read_structured(&request)?;
            if let Some(s) = seed {
                req.seed = s;
            }
            let plan = build_plan(req)?;
            eprintln!(
                "study {}: {} conditions, {} segments, {} tasks",
                plan.study_id,
                plan.conditions.len(),
                plan.segments.len(),
                plan.pool.len()
            );
            emit(out.as_deref(), &serde_json::to_string_pretty(&plan)?)
        }
        Command::Simulate(SimulateCmd::Votes {
            truth,
            kind,
            votes_per_pair,
            takers,
            pages,
            seed,
            out,
            registry_out,
        }) => {
            let mut truth: PlantedTruth = read_structured(&truth)?;
            if let Some(s) = seed {
                truth.rng_seed = s;
            }
            let sim = match kind {
                Kind::Realism => simulate_realism_votes(&truth, votes_per_pair)?,
                Kind::Alignment => simulate_alignment_votes(&truth, takers, pages)?,
            };
            if let Some(p) = registry_out {
                emit(Some(&p), &serde_json::to_string_pretty(&sim.registry)?)?;
            }
            emit(out.as_deref(), &serialize_log(&sim.entries)?)
        }
        Command::Simulate(SimulateCmd::Sessions {
            plan,
            truth,
            sessions,
            behaviour,
            seed,
            out,
        }) => {
            let plan: StudyPlan = read_structured(&plan)?;
            plan.validate()?;
            let truth: PlantedTruth = read_structured(&truth)?;
            let behaviour: TakerBehaviour = match behaviour {
                Some(p) => read_structured(&p)?,
                None => TakerBehaviour::default(),
            };
            let mut scheduler = plan.scheduler()?;
            let entries = simulate_sessions(&mut scheduler, sessions, &truth, &behaviour, seed)?;
            emit(out.as_deref(), &serialize_log(&entries)?)
        }
        Command::Rank(RankCmd::Elo { args, wald }) => {
            let log = load_log(&args.log)?;
            let d = EloConfig::default();
            let cfg = EloConfig {
                rng_seed: args.seed,
                n_bootstrap: args.n_bootstrap,
                alpha: args.alpha,
                resample: args.resample.map_or(d.resample, Into::into),
                wald,
                ..d
            };
            let report = analysis::leaderboard_from_log(&log, &cfg)?;
            write_report(&report, &args)
        }
        Command::Score(ScoreCmd::Alignment { args }) => {
            let log = load_log(&args.log)?;
            let d = ScoreConfig::default();
            let cfg = ScoreConfig {
                rng_seed: args.seed,
                n_bootstrap: args.n_bootstrap,
                alpha: args.alpha,
                resample: args.resample.map_or(d.resample, Into::into),
            };
            let report = analysis::appropriateness_from_log(&log, &cfg)?;
            write_report(&report, &args)
        }
        Command::Report(ReportCmd::Juice {
            log,
            kind,
            registry,
            plan,
            normalization,
            free_text_out,
            output,
        }) => {
            let log = load_log(&log)?;
            let registry = match (registry, plan) {
                (Some(r), _) => read_structured(&r)?,
                (None, Some(p)) => read_structured::<StudyPlan>(&p)?.registry,
                (None, None) => Registry::default(),
            };
            let norm = match normalization {
                Norm::NonTie => JuiceNormalization::NonTieComparisons,
                Norm::OptionShare => JuiceNormalization::OptionShare,
            };
            let profiles = analysis::juice_from_log(&log, kind.into(), &registry, norm)?;
            if let Some(p) = free_text_out {
                let text = free_text_to_csv(&profiles).map_err(analysis::AnalysisError::from)?;
                emit(Some(&p), &text)?;
            }
            let text = match output.format {
                Format::Json => serde_json::to_string(&profiles)?,
                Format::Csv => profiles_to_csv(&profiles).map_err(analysis::AnalysisError::from)?,
                Format::Line => profiles
                    .iter()
                    .flat_map(|p| {
                        p.rows.iter().map(move |r| {
                            format!("{} {} win={:.3} loss={:.3}", p.condition, r.option.code(), r.win_fraction, r.loss_fraction)
                        })
                    })
                    .collect::<Vec<_>>()
                    .join("\n"),
            };
            emit(output.out.as_deref(), &text)
        }
        Command::Metrics(MetricsCmd::Run { config, output }) => {
            let table = metrics_run::run(&config)?;
            let text = match output.format {
                Format::Json => serde_json::to_string_pretty(&table)?,
                Format::Csv => metrics_run::to_csv(&table),
                Format::Line => table
                    .iter()
                    .flat_map(|(s, row)| row.iter().map(move |(m, v)| format!("{s} {m} {v:.6}")))
                    .collect::<Vec<_>>()
                    .join("\n"),
            };
            emit(output.out.as_deref(), &text)
        }
        Command::Correlate(args) => correlate(args),
    }
}

fn load_log(path: &Path) -> Result<StudyLog, CliError> {
    let text = read_text(path)?;
    StudyLog::parse(&text).map_err(|e| CliError::from(e).context(path.display()))
}

fn write_report(report: &RatingReport, args: &Bootstrap) -> Result<(), CliError> {
    if let Some(p) = &args.pairwise_out {
        emit(Some(p), &pairwise_to_csv(report))?;
    }
    let text = match args.output.format {
        // Compact, byte-for-byte what the service returns.
        Format::Json => serde_json::to_string(report)?,
        Format::Csv => report_to_csv(report),
        Format::Line => {
            let mut rows: Vec<_> = report.conditions.iter().collect();
            rows.sort_by(|a, b| b.point_estimate.total_cmp(&a.point_estimate));
            rows.iter()
                .enumerate()
                .map(|(i, c)| {
                    format!(
                        "{:>2}. {} {:.3} [{:.3}, {:.3}]",
                        i + 1,
                        c.condition,
                        c.point_estimate,
                        c.ci_low,
                        c.ci_high
                    )
                })
                .collect::<Vec<_>>()
                .join("\n")
        }
    };
    emit(args.output.out.as_deref(), &text)
}

fn segments_csv(segments: &[Segment]) -> String {
    let mut out = String::from("segment,speaker,start_s,end_s,duration_s\n");
    for s in segments {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            gesteval::stats::csv_field(s.id.as_str()),
            gesteval::stats::csv_field(&s.speaker_id),
            s.start_s,
            s.end_s,
            s.duration_s()
        ));
    }
    out
}

fn column(path: &Path, key: &str, col: &str) -> Result<BTreeMap<String, f64>, CliError> {
    let text = read_text(path)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Validation(format!("{}: no column {name:?}", path.display())))
    };
    let (ki, ci) = (find(key)?, find(col)?);
    let mut out = BTreeMap::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let v: f64 = rec[ci].trim().parse().map_err(|e| {
            CliError::Validation(format!("{}: row {}: {col}: {e}", path.display(), line + 2))
        })?;
        if out.insert(rec[ki].to_string(), v).is_some() {
            return Err(CliError::Validation(format!("{}: duplicate key {}", path.display(), &rec[ki])));
        }
    }
    Ok(out)
}

fn correlate(args: CorrelateArgs) -> Result<(), CliError> {
    let xs = column(&args.x, &args.key, &args.x_column)?;
    let ys = column(&args.y, &args.key, &args.y_column)?;
    let (keys, pairs): (Vec<&String>, Vec<(f64, f64)>) =
        xs.iter().filter_map(|(k, x)| ys.get(k).map(|y| (k, (*x, *y)))).unzip();
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let tau = kendall_tau(&x, &y)?;
    let text = match args.output.format {
        Format::Csv => format!("n,tau_b\n{},{tau}\n", keys.len()),
        Format::Json => serde_json::json!({ "n": keys.len(), "tau_b": tau, "keys": keys }).to_string(),
        Format::Line => format!("tau_b = {tau:.6} over {} conditions", keys.len()),
    };
    emit(args.output.out.as_deref(), &text)
}
