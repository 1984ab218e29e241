mod suites;

use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use infofair::lp::LpStatus;
use infofair::optimize::{FairnessMetric, Objective, OptimizationSpec};
use infofair::policy::curves_csv;
use infofair::refinement::{merge_from_samples, parse_samples, SampleBudget};
use infofair::synth::demo_instance;
use infofair::{load_population, Error, Group, ImpactParams, Instance64, Scope, Scopes};
use infofair_service::ops;

const EXIT_VIOLATION: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser)]
#[command(name = "infofair", version, about = "Information-theoretic audits and fair threshold policies")]
struct Cli {
    /// Human-readable tables instead of JSON.
    #[arg(long, global = true)]
    pretty: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibration and information content per group.
    Audit {
        population: PathBuf,
        /// Defaults to every declared predictor.
        #[arg(long)]
        predictor: Option<String>,
        #[arg(long, value_name = "A|B|all")]
        group: Option<Scope>,
        /// Predictor to measure information loss against.
        #[arg(long)]
        reference: Option<String>,
    },
    /// Merge two calibrated predictors.
    Merge {
        population: PathBuf,
        #[arg(long)]
        z: String,
        #[arg(long)]
        q: String,
        #[arg(long)]
        per_group: bool,
        /// Write the population file extended by the merged predictor.
        #[arg(long)]
        out: Option<PathBuf>,
        /// `cell_id,y` records; estimates crossed-cell means instead of
        /// reading the true risks.
        #[arg(long, requires_all = ["alpha", "delta"])]
        samples: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        delta: Option<f64>,
        /// Smallest crossed-cell mass the sample budget is sized for.
        #[arg(long, default_value_t = 0.1)]
        gamma: f64,
    },
    /// Solve one constrained threshold program.
    Optimize(OptimizeArgs),
    /// Threshold curves of one group as CSV.
    Sweep {
        population: PathBuf,
        #[arg(long)]
        predictor: String,
        #[arg(long, value_name = "A|B")]
        group: Group,
        #[arg(long, default_value_t = ops::DEFAULT_CURVE_POINTS)]
        points: usize,
    },
    /// Run a seeded property suite.
    Verify {
        #[arg(long, value_enum)]
        suite: suites::Suite,
        #[arg(long, default_value_t = 100)]
        seeds: u64,
    },
    /// Print a built-in instance as a population file.
    Demo {
        #[arg(long, value_parser = ["figure1", "caution", "groupwise"])]
        name: String,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Utility,
    Disparity,
    Impact,
    Combo,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Beta,
    Tpr,
    Fpr,
}

#[derive(clap::Args)]
struct OptimizeArgs {
    population: PathBuf,
    #[arg(long)]
    predictor: String,
    #[arg(long, value_enum)]
    objective: ObjectiveArg,
    #[arg(long = "h", value_enum, default_value = "beta")]
    metric: MetricArg,
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    #[arg(long = "t-impact", default_value_t = -1.0, allow_negative_numbers = true)]
    t_impact: f64,
    #[arg(long = "t-utility", default_value_t = -1.0, allow_negative_numbers = true)]
    t_utility: f64,
    #[arg(long)]
    tau_u: f64,
    #[arg(long)]
    tau_l: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_u: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_i: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda_b: f64,
}

impl OptimizeArgs {
    fn spec(&self) -> OptimizationSpec {
        let objective = match self.objective {
            ObjectiveArg::Utility => Objective::UtilityMax,
            ObjectiveArg::Disparity => Objective::DisparityMin,
            ObjectiveArg::Impact => Objective::ImpactMax,
            ObjectiveArg::Combo => Objective::WeightedCombo {
                lambda_u: self.lambda_u,
                lambda_i: self.lambda_i,
                lambda_b: self.lambda_b,
            },
        };
        let metric = match self.metric {
            MetricArg::Beta => FairnessMetric::SelectionRate,
            MetricArg::Tpr => FairnessMetric::Tpr,
            MetricArg::Fpr => FairnessMetric::Fpr,
        };
        OptimizationSpec::new(objective, metric, ImpactParams::new(self.tau_u, self.tau_l))
            .with_eps(self.eps)
            .with_impact_floor(self.t_impact)
            .with_utility_floor(self.t_utility)
    }
}

/// A failure that ends the run with a specific exit code.
enum Failure {
    Input(String, String),
    Exit(u8),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Input(e.kind().to_string(), e.to_string())
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Input("io".into(), format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| io_failure(path, e))
}

fn load(path: &Path) -> Result<Instance64, Failure> {
    Ok(load_population::<f64>(&read(path)?)?)
}

fn emit<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("output serializes"));
}

fn num(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.6}"))
}

/// Left-aligned columns separated by two spaces.
fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(header.to_vec());
    for row in rows {
        line(row.iter().map(String::as_str).collect());
    }
    out
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Audit {
            population,
            predictor,
            group,
            reference,
        } => {
            let instance = load(&population)?;
            let report = ops::audit(&instance, predictor.as_deref(), group, reference.as_deref())?;
            if !cli.pretty {
                emit(&report);
                return Ok(());
            }
            let mut rows = Vec::new();
            for p in &report.predictors {
                for s in &p.scopes {
                    let info = s.information.as_ref();
                    rows.push(vec![
                        p.predictor.clone(),
                        s.scope.to_string(),
                        s.calibration.is_calibrated.to_string(),
                        num(info.map(|i| i.content)),
                        num(info.map(|i| i.entropic_content)),
                        num(info.and_then(|i| i.loss_vs.as_ref()).map(|l| l.loss.value)),
                    ]);
                }
            }
            print!(
                "{}",
                table(&["predictor", "scope", "calibrated", "content", "entropic", "loss"], &rows)
            );
        }
        Command::Merge {
            population,
            z,
            q,
            per_group,
            out,
            samples,
            alpha,
            delta,
            gamma,
        } => {
            let instance = load(&population)?;
            let (extended, merged) = match samples {
                None => ops::merge(&instance, &z, &q, per_group)?,
                Some(path) => {
                    let draws = parse_samples(&read(&path)?)?;
                    let budget = SampleBudget::new(
                        alpha.expect("clap requires alpha"),
                        gamma,
                        delta.expect("clap requires delta"),
                    )?;
                    let scopes = if per_group { Scopes::PerGroup } else { Scopes::All };
                    let zp = ops::predictor(&instance, &z)?;
                    let qp = ops::predictor(&instance, &q)?;
                    let report = merge_from_samples(&instance.population, &zp, &qp, &draws, budget, scopes)?;
                    let name = report.result.name().to_string();
                    let extended = instance.clone().with_predictor(report.result.clone());
                    (extended, ops::Merged { predictor: name, report })
                }
            };
            if let Some(path) = &out {
                std::fs::write(path, extended.to_json() + "\n").map_err(|e| io_failure(path, e))?;
            }
            if cli.pretty {
                let r = &merged.report;
                let rows = vec![
                    vec!["I(z)".into(), num(Some(r.info_before.z))],
                    vec!["I(q)".into(), num(Some(r.info_before.q))],
                    vec!["I(merged)".into(), num(Some(r.info_after))],
                    vec!["guaranteed".into(), num(Some(r.guaranteed_gain))],
                    vec!["D_R(q;z)".into(), num(Some(r.distances.from_q_to_z))],
                    vec!["D_R(z;q)".into(), num(Some(r.distances.from_z_to_q))],
                    vec!["crossed cells".into(), r.crossed_cells.len().to_string()],
                ];
                println!("merged predictor {}", merged.predictor);
                print!("{}", table(&["quantity", "value"], &rows));
            } else {
                emit(&merged);
            }
        }
        Command::Optimize(args) => {
            let instance = load(&args.population)?;
            let spec = args.spec();
            let result = ops::optimize(&instance, &args.predictor, &spec)?;
            if cli.pretty {
                println!("{}: {}", spec.label(), result.status);
                if let Some(v) = result.value {
                    println!("value {v:.6}");
                }
                if let Some(inf) = &result.infeasibility {
                    println!("{}", inf.reason);
                }
                if let (Some(t), Some(stats)) = (&result.as_threshold, &result.threshold_stats) {
                    let rows: Vec<Vec<String>> = stats
                        .groups
                        .iter()
                        .map(|g| {
                            let th = t.get(g.group);
                            vec![
                                g.group.to_string(),
                                num(Some(th.tau)),
                                num(Some(th.p)),
                                num(Some(g.beta)),
                                num(g.tpr),
                                num(g.fpr),
                                num(Some(g.utility)),
                                num(Some(g.impact)),
                            ]
                        })
                        .collect();
                    print!(
                        "{}",
                        table(&["group", "tau", "p", "beta", "tpr", "fpr", "utility", "impact"], &rows)
                    );
                }
            } else {
                emit(&result);
            }
            if result.status != LpStatus::Optimal {
                return Err(Failure::Exit(EXIT_INFEASIBLE));
            }
        }
        Command::Sweep {
            population,
            predictor,
            group,
            points,
        } => {
            let instance = load(&population)?;
            let curves = ops::curves(&instance, &predictor, group, points)?;
            if cli.pretty {
                let rows: Vec<Vec<String>> = curves
                    .rows
                    .iter()
                    .map(|r| vec![num(Some(r.beta)), num(r.tpr), num(r.fpr), num(r.ppv)])
                    .collect();
                print!("{}", table(&["beta", "tpr", "fpr", "ppv"], &rows));
            } else {
                print!("{}", curves_csv(&curves.rows));
            }
        }
        Command::Verify { suite, seeds } => {
            let report = suites::run(suite, seeds)?;
            if cli.pretty {
                println!(
                    "{} {}: {}",
                    if report.passed { "PASS" } else { "FAIL" },
                    report.suite,
                    report.summary
                );
                for f in &report.failures {
                    println!("  seed {}: {}", f.seed, f.message);
                }
            } else {
                emit(&report);
            }
            if !report.passed {
                return Err(Failure::Exit(EXIT_VIOLATION));
            }
        }
        Command::Demo { name } => {
            println!("{}", demo_instance::<f64>(&name)?.to_json());
        }
        Command::Serve { port, host } => {
            let addr = SocketAddr::new(host, port);
            let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Input("io".into(), e.to_string()))?;
            runtime
                .block_on(infofair_service::serve(addr))
                .map_err(|e| Failure::Input("io".into(), format!("{addr}: {e}")))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Exit(code)) => ExitCode::from(code),
        Err(Failure::Input(kind, message)) => {
            eprintln!("{}", serde_json::json!({"error": kind, "message": message}));
            ExitCode::from(EXIT_USAGE)
        }
    }
}
