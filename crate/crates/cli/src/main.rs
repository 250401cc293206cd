//! Command-line front end: reliability, reproducibility, power, scorecard,
//! simulation, and validation over the long-format annotation CSV.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use annostab_core::agreement::DistanceFunction;
use annostab_core::dataset::{load_dataset, load_schema, write_dataset, AnnotationDataset};
use annostab_core::report::{
    analyze, write_iqv_boxplot_json, write_iqv_csv, write_power_csv, write_stability_csv,
    write_xrr_matrix_csv, AnalysisOptions, AnalysisReport,
};
use annostab_core::scorecard::{render_text, BandConfig};
use annostab_core::synthetic::load_spec;
use annostab_core::{Error, StabilityMethod};

#[derive(Parser)]
#[command(
    name = "annostab",
    version,
    about = "Audit the reliability and reproducibility of human-annotated datasets"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum DistanceArg {
    Nominal,
    Ordinal,
    Interval,
    Masi,
}

/// Flags shared by every analysis command.
#[derive(Args)]
struct CommonArgs {
    /// Long-format ratings CSV (repetition_id,item_id,rater_id,value).
    data: PathBuf,

    /// JSON value-schema sidecar.
    #[arg(long)]
    schema: PathBuf,

    /// Master seed for every random draw (tie breaks, bootstrap).
    #[arg(long, env = "ANNOSTAB_SEED", default_value_t = 0)]
    seed: u64,

    /// Bootstrap runs per rater count.
    #[arg(long, default_value_t = annostab_core::power::DEFAULT_RUNS)]
    runs: usize,

    /// Stability threshold on the bootstrap standard deviation.
    #[arg(long, default_value_t = annostab_core::power::DEFAULT_SIGMA0)]
    sigma0: f64,

    /// Significance level for every hypothesis test.
    #[arg(long, default_value_t = annostab_core::power::DEFAULT_SIGNIFICANCE)]
    alpha_level: f64,

    /// Override the schema-derived agreement distance.
    #[arg(long, value_enum)]
    distance: Option<DistanceArg>,

    /// JSON file with custom band cutoffs.
    #[arg(long)]
    bands: Option<PathBuf>,

    /// Write stdout output to this file instead.
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Subcommand)]
enum Command {
    /// Per-repetition agreement and variability.
    Reliability {
        #[command(flatten)]
        common: CommonArgs,
        /// Per-item IQV table (item_id,iqv); repetition id is appended to
        /// the file stem when the dataset has several repetitions.
        #[arg(long)]
        iqv_csv: Option<PathBuf>,
        /// Boxplot-ready JSON summary of the per-item IQV distribution.
        #[arg(long)]
        iqv_boxplot_json: Option<PathBuf>,
    },
    /// Pairwise stability and cross-replication reliability.
    Reproduce {
        #[command(flatten)]
        common: CommonArgs,
        /// Pairwise stability table CSV.
        #[arg(long)]
        stability_csv: Option<PathBuf>,
        /// Square xRR matrix CSV (diagonal: per-repetition agreement).
        #[arg(long)]
        xrr_matrix_csv: Option<PathBuf>,
    },
    /// Bootstrap power analysis over rater counts.
    Power {
        #[command(flatten)]
        common: CommonArgs,
        /// Per-rater-count boxplot CSV
        /// (k,min,q1,median,mean,q3,max,std,p_value,accepted).
        #[arg(long)]
        per_k_csv: Option<PathBuf>,
    },
    /// Full pipeline with the banded scorecard.
    Scorecard {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Generate a synthetic dataset from a population spec.
    Simulate {
        /// JSON population spec.
        #[arg(long = "spec")]
        spec: PathBuf,
        /// Number of repetitions to simulate.
        #[arg(long, default_value_t = 2)]
        repetitions: usize,
        /// Seed override for the spec.
        #[arg(long, env = "ANNOSTAB_SEED")]
        seed: Option<u64>,
        /// Output ratings CSV (canonical ordering).
        #[arg(long)]
        out: PathBuf,
        /// Also write the value schema next to the data.
        #[arg(long)]
        schema_out: Option<PathBuf>,
    },
    /// Check a dataset against its schema and report basic counts.
    Validate {
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Degenerate(_) => 3u8,
                _ => 2u8,
            })
        }
    }
}

fn options_from(common: &CommonArgs, with_power: bool, with_pairs: bool)
    -> Result<AnalysisOptions, Error>
{
    let bands = match &common.bands {
        Some(path) => BandConfig::load(path)?,
        None => BandConfig::default(),
    };
    Ok(AnalysisOptions {
        seed: common.seed,
        runs: common.runs,
        sigma0: common.sigma0,
        significance: common.alpha_level,
        distance: None, // resolved against the schema in load()
        bands,
        with_power,
        with_pairs,
    })
}

fn load(common: &CommonArgs) -> Result<AnnotationDataset, Error> {
    let schema = load_schema(&common.schema)?;
    load_dataset(&common.data, &schema)
}

fn resolve_distance(
    common: &CommonArgs,
    dataset: &AnnotationDataset,
) -> Option<DistanceFunction> {
    common.distance.map(|d| match d {
        DistanceArg::Nominal => DistanceFunction::Nominal,
        DistanceArg::Ordinal => DistanceFunction::Ordinal(dataset.schema.clone()),
        DistanceArg::Interval => DistanceFunction::Interval,
        DistanceArg::Masi => DistanceFunction::Masi,
    })
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Reliability { common, iqv_csv, iqv_boxplot_json } => {
            let dataset = load(&common)?;
            let mut options = options_from(&common, false, false)?;
            options.distance = resolve_distance(&common, &dataset);
            let report = analyze(&dataset, &options)?;
            for (pattern, write_one) in [
                (&iqv_csv, true),
                (&iqv_boxplot_json, false),
            ] {
                if let Some(path) = pattern {
                    for rep in &report.repetitions {
                        let target = per_rep_path(path, &rep.id, report.repetitions.len() > 1);
                        let file = std::fs::File::create(&target)?;
                        if write_one {
                            write_iqv_csv(rep, file)?;
                        } else {
                            write_iqv_boxplot_json(rep, file)?;
                        }
                    }
                }
            }
            emit(&common, &report, render_reliability)?;
            finish(&report)
        }
        Command::Reproduce { common, stability_csv, xrr_matrix_csv } => {
            let dataset = load(&common)?;
            if dataset.repetitions.len() < 2 {
                return Err(Error::InvalidInput(
                    "reproducibility needs at least 2 repetitions".into(),
                ));
            }
            let mut options = options_from(&common, false, true)?;
            options.distance = resolve_distance(&common, &dataset);
            let report = analyze(&dataset, &options)?;
            if let Some(path) = &stability_csv {
                write_stability_csv(&report, std::fs::File::create(path)?)?;
            }
            if let Some(path) = &xrr_matrix_csv {
                write_xrr_matrix_csv(&report, std::fs::File::create(path)?)?;
            }
            emit(&common, &report, render_reproduce)?;
            finish(&report)
        }
        Command::Power { common, per_k_csv } => {
            let dataset = load(&common)?;
            let mut options = options_from(&common, true, false)?;
            options.distance = resolve_distance(&common, &dataset);
            let report = analyze(&dataset, &options)?;
            if report.repetitions.iter().all(|r| r.power.is_none()) {
                return Err(Error::Degenerate(
                    "power analysis produced no usable bootstrap distribution".into(),
                ));
            }
            if let Some(path) = &per_k_csv {
                for rep in &report.repetitions {
                    if let Some(power) = &rep.power {
                        let target = per_rep_path(path, &rep.id, report.repetitions.len() > 1);
                        write_power_csv(power, std::fs::File::create(&target)?)?;
                    }
                }
            }
            emit(&common, &report, render_power)?;
            finish(&report)
        }
        Command::Scorecard { common } => {
            let dataset = load(&common)?;
            let mut options = options_from(&common, true, dataset.repetitions.len() > 1)?;
            options.distance = resolve_distance(&common, &dataset);
            let report = analyze(&dataset, &options)?;
            emit(&common, &report, render_scorecard)?;
            finish(&report)
        }
        Command::Simulate { spec, repetitions, seed, out, schema_out } => {
            let mut population = load_spec(&spec)?;
            if let Some(seed) = seed {
                population.seed = seed;
            }
            let dataset = annostab_core::generate(&population, repetitions)?;
            write_dataset(&dataset, std::fs::File::create(&out)?)?;
            if let Some(path) = &schema_out {
                std::fs::write(path, serde_json::to_string_pretty(&dataset.schema)?)?;
            }
            eprintln!(
                "wrote {} ratings across {} repetitions to {}",
                dataset.repetitions.iter().map(|r| r.n_ratings()).sum::<usize>(),
                dataset.repetitions.len(),
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { data, schema } => {
            let schema = load_schema(&schema)?;
            let dataset = load_dataset(&data, &schema)?;
            dataset.validate()?;
            println!("ok: {} repetitions, {} items, {} ratings",
                dataset.repetitions.len(),
                dataset.items.len(),
                dataset.repetitions.iter().map(|r| r.n_ratings()).sum::<usize>());
            for rep in &dataset.repetitions {
                println!(
                    "  {}: {} items, {} raters, {} ratings",
                    rep.id,
                    rep.ratings.len(),
                    rep.raters().len(),
                    rep.n_ratings()
                );
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Degenerate-only analyses still print their report but exit with 3.
fn finish(report: &AnalysisReport) -> Result<ExitCode, Error> {
    if report.degenerate_only() {
        eprintln!("warning: no chance-corrected statistic is defined for this dataset");
        Ok(ExitCode::from(3))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

/// Inserts the repetition id before the extension when disambiguation is
/// needed (several repetitions sharing one export flag).
fn per_rep_path(path: &Path, rep_id: &str, multi: bool) -> PathBuf {
    if !multi {
        return path.to_path_buf();
    }
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    let ext = path
        .extension()
        .map(|e| format!(".{}", e.to_string_lossy()))
        .unwrap_or_default();
    path.with_file_name(format!("{stem}_{rep_id}{ext}"))
}

fn emit(
    common: &CommonArgs,
    report: &AnalysisReport,
    render_csv_or_text: fn(&AnalysisReport, Format) -> String,
) -> Result<(), Error> {
    let body = match common.format {
        Format::Json => report.to_json(),
        other => render_csv_or_text(report, other),
    };
    match &common.out {
        Some(path) => {
            let mut file = std::fs::File::create(path)?;
            file.write_all(body.as_bytes())?;
            if !body.ends_with('\n') {
                file.write_all(b"\n")?;
            }
        }
        None => println!("{}", body.trim_end()),
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "undefined".into())
}

fn render_reliability(report: &AnalysisReport, format: Format) -> String {
    let mut out = String::new();
    if format == Format::Csv {
        out.push_str("repetition_id,alpha,kappa,mstd,stdd,iqv_median,n_items,n_raters\n");
        for rep in &report.repetitions {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                rep.id,
                rep.alpha.as_ref().map(|a| a.coefficient.to_string()).unwrap_or_default(),
                rep.kappa.as_ref().map(|k| k.coefficient.to_string()).unwrap_or_default(),
                rep.variability.mstd.map(|v| v.to_string()).unwrap_or_default(),
                rep.variability.stdd.map(|v| v.to_string()).unwrap_or_default(),
                rep.variability
                    .iqv_summary
                    .as_ref()
                    .map(|s| s.median.to_string())
                    .unwrap_or_default(),
                rep.n_items,
                rep.n_raters,
            ));
        }
        return out;
    }
    out.push_str(&format!("study: {} ({} distance)\n", report.study, report.config.distance));
    for rep in &report.repetitions {
        out.push_str(&format!(
            "repetition {}: {} items, {} raters, {} ratings\n",
            rep.id, rep.n_items, rep.n_raters, rep.n_ratings
        ));
        out.push_str(&format!(
            "  agreement alpha = {}\n",
            fmt_opt(rep.alpha.as_ref().map(|a| a.coefficient))
        ));
        if let Some(kappa) = &rep.kappa {
            out.push_str(&format!("  weighted kappa  = {:.4}\n", kappa.coefficient));
        }
        for (category, entry) in &rep.per_category_alpha {
            match entry {
                annostab_core::report::CategoryAlpha::Ok(a) => out.push_str(&format!(
                    "  alpha[{category}] = {:.4}\n",
                    a.coefficient
                )),
                annostab_core::report::CategoryAlpha::Degenerate { reason } => {
                    out.push_str(&format!("  alpha[{category}] = undefined ({reason})\n"))
                }
            }
        }
        if let (Some(mstd), Some(stdd)) = (rep.variability.mstd, rep.variability.stdd) {
            out.push_str(&format!("  MSTD = {mstd:.4}, STDD = {stdd:.4}\n"));
        }
        if let Some(summary) = &rep.variability.iqv_summary {
            out.push_str(&format!(
                "  IQV: min {:.3}, q1 {:.3}, median {:.3}, q3 {:.3}, max {:.3}\n",
                summary.min, summary.q1, summary.median, summary.q3, summary.max
            ));
        }
    }
    push_diagnostics(&mut out, report);
    out
}

fn render_reproduce(report: &AnalysisReport, format: Format) -> String {
    let mut out = String::new();
    if format == Format::Csv {
        out.push_str(
            "repetition_a,repetition_b,method,statistic,df,p_value,log10_p,n,\
             xrr,normalized_xrr\n",
        );
        for pair in &report.pairs {
            let (method, stat, df, p, lp, n) = match &pair.stability {
                Some(s) => (
                    match s.method {
                        StabilityMethod::Spearman => "spearman",
                        StabilityMethod::Chi2Independence => "chi2_independence",
                    },
                    s.statistic.to_string(),
                    s.df.map(|d| d.to_string()).unwrap_or_default(),
                    s.p.p.to_string(),
                    s.p.log10p.to_string(),
                    s.n.to_string(),
                ),
                None => ("", String::new(), String::new(), String::new(), String::new(), String::new()),
            };
            out.push_str(&format!(
                "{},{},{method},{stat},{df},{p},{lp},{n},{},{}\n",
                pair.pair.0,
                pair.pair.1,
                pair.xrr.as_ref().map(|x| x.xrr.to_string()).unwrap_or_default(),
                pair.normalized_xrr.map(|x| x.to_string()).unwrap_or_default(),
            ));
        }
        return out;
    }
    out.push_str(&format!("study: {} ({} distance)\n", report.study, report.config.distance));
    for pair in &report.pairs {
        out.push_str(&format!("pair {} vs {}:\n", pair.pair.0, pair.pair.1));
        match &pair.stability {
            Some(s) => {
                let label = match s.method {
                    StabilityMethod::Spearman => "spearman rho",
                    StabilityMethod::Chi2Independence => "chi-squared",
                };
                out.push_str(&format!(
                    "  {label} = {:.4} (p = {:.3e}, log10 p = {:.2}, n = {})\n",
                    s.statistic, s.p.p, s.p.log10p, s.n
                ));
            }
            None => out.push_str("  stability: undefined\n"),
        }
        match &pair.xrr {
            Some(x) => {
                out.push_str(&format!(
                    "  xRR = {:.4} (d_o = {:.4}, d_e = {:.4})\n",
                    x.xrr, x.cross_observed_disagreement, x.cross_expected_disagreement
                ));
                if let Some(norm) = pair.normalized_xrr {
                    out.push_str(&format!("  normalized xRR = {norm:.4}\n"));
                }
            }
            None => out.push_str("  xRR: undefined\n"),
        }
    }
    push_diagnostics(&mut out, report);
    out
}

fn render_power(report: &AnalysisReport, format: Format) -> String {
    let mut out = String::new();
    if format == Format::Csv {
        out.push_str("repetition_id,k,mean,std,chi2_stat,p_value,accepted,degenerate_runs\n");
        for rep in &report.repetitions {
            if let Some(power) = &rep.power {
                for entry in &power.per_k {
                    out.push_str(&format!(
                        "{},{},{},{},{},{},{},{}\n",
                        rep.id,
                        entry.k,
                        entry.mean,
                        entry.std,
                        entry.chi2_stat,
                        entry.p_value,
                        entry.accepted,
                        entry.n_degenerate_runs
                    ));
                }
            }
        }
        return out;
    }
    for rep in &report.repetitions {
        let Some(power) = &rep.power else {
            out.push_str(&format!("repetition {}: power analysis not available\n", rep.id));
            continue;
        };
        out.push_str(&format!(
            "repetition {}: optimal rater count = {}\n",
            rep.id,
            power
                .optimal_k
                .map(|k| k.to_string())
                .unwrap_or_else(|| "not reached".into())
        ));
        for entry in &power.per_k {
            out.push_str(&format!(
                "  k = {:2}: mean alpha {:.4}, std {:.4}, p {:.3}, {}{}\n",
                entry.k,
                entry.mean,
                entry.std,
                entry.p_value,
                if entry.accepted { "accepted" } else { "rejected" },
                if entry.unreliable { " (unreliable: many degenerate runs)" } else { "" }
            ));
        }
    }
    push_diagnostics(&mut out, report);
    out
}

fn render_scorecard(report: &AnalysisReport, format: Format) -> String {
    if format == Format::Csv {
        let mut out = String::new();
        out.push_str("row,agreement,variability,power,stability,replicability\n");
        for rep in &report.scorecard.per_repetition {
            out.push_str(&format!(
                "{},{},{},{},,\n",
                rep.repetition,
                rep.agreement,
                rep.variability,
                rep.optimal_k.map(|k| k.to_string()).unwrap_or_else(|| "not computed".into()),
            ));
        }
        for pair in &report.scorecard.per_pair {
            out.push_str(&format!(
                "{} & {},,,,{},{}\n",
                pair.pair.0, pair.pair.1, pair.stability, pair.replicability
            ));
        }
        let overall = &report.scorecard.overall;
        out.push_str(&format!(
            "overall,{},{},{},{},{}\n",
            overall.agreement, overall.variability, overall.power, overall.stability,
            overall.replicability
        ));
        return out;
    }
    render_text(&report.scorecard)
}

fn push_diagnostics(out: &mut String, report: &AnalysisReport) {
    if !report.diagnostics.is_empty() {
        out.push_str("diagnostics:\n");
        for d in &report.diagnostics {
            out.push_str(&format!("  - {d}\n"));
        }
    }
}
