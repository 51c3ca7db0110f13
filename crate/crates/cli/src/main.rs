use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;
use spherelab::acceptance;
use spherelab::immersion::Profile;
use spherelab::operators::DEFAULT_MARGIN;
use spherelab::rigidity::IntersectionParams;
use spherelab::scenario::{
    self, parse_angle, Angle, FamilySpec, Operation, Outputs, RotationSpec, Scenario, Tolerances, EXIT_OK,
    EXIT_SCHEMA,
};
use spherelab::DEFAULT_RESOLUTION;

#[derive(Parser)]
#[command(name = "spherelab")]
#[command(about = "Hypersurfaces of round spheres: curvature, translates, duals, flows and covering counts")]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a JSON scenario file
    Run {
        scenario: PathBuf,
        /// Directory for report.json, samples.csv and track.jsonl
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Override the scenario resolution
        #[arg(long)]
        resolution: Option<usize>,
        /// Print the full JSON report instead of a summary
        #[arg(long)]
        json: bool,
    },
    /// Principal curvatures, J(f) and the convexity hypotheses
    Analyze(OneShot),
    /// Normal translate by r, then analyze
    Translate {
        #[command(flatten)]
        shot: OneShot,
        /// Translation distance (number or multiple of pi such as 0.25pi)
        #[arg(long = "by", value_parser = parse_angle, allow_hyphen_values = true)]
        by: f64,
    },
    /// Dual hypersurface, then analyze
    Dual(OneShot),
    /// Moebius contraction toward the image circumcenter
    MoebiusFlow {
        #[command(flatten)]
        shot: OneShot,
        #[arg(long, default_value_t = 0.05)]
        s_min: f64,
        #[arg(long, default_value_t = 0.05)]
        step: f64,
        /// Also test each stage for embeddedness
        #[arg(long)]
        embedding: bool,
    },
    /// The zeta flow of a locally convex hemispherical immersion
    ZetaFlow {
        #[command(flatten)]
        shot: OneShot,
        #[arg(long, default_value_t = spherelab::homotopy::DEFAULT_STEPS)]
        steps: usize,
    },
    /// Monitored deformation of a convex immersion to a round sphere
    Deform(OneShot),
    /// Self-intersection search and multiplicity
    CheckEmbedding(OneShot),
    /// Components of the preimage of the image under a deck group
    Quotient {
        #[command(flatten)]
        shot: OneShot,
        /// trivial | antipodal | lens:p,q
        #[arg(long)]
        deck: String,
    },
    /// Run the acceptance battery and print a pass/fail table
    VerifySuite {
        #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
        resolution: usize,
        /// Run only these criteria
        #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u32).range(1..=13))]
        only: Vec<u32>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Round,
    Clifford,
    RadialGraph,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Zonal,
    Quadrupole,
    Mixed,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Profile {
        match p {
            ProfileArg::Zonal => Profile::Zonal,
            ProfileArg::Quadrupole => Profile::Quadrupole,
            ProfileArg::Mixed => Profile::Mixed,
        }
    }
}

#[derive(Args)]
struct OneShot {
    #[arg(long, value_enum, default_value = "round")]
    family: Family,
    /// Dimension of the hypersurface (round and radial-graph)
    #[arg(long, default_value_t = 2)]
    n: usize,
    /// Radius of the round family
    #[arg(long, value_parser = parse_angle, default_value = "0.25pi", allow_hyphen_values = true)]
    r: f64,
    /// Rotate the round family by a seeded random rotation
    #[arg(long)]
    random_rotation: bool,
    /// Squeeze factor precomposed on the round family's domain
    #[arg(long)]
    squeeze: Option<f64>,
    /// Clifford winding numbers
    #[arg(long, default_value_t = 1)]
    a: u32,
    #[arg(long, default_value_t = 1)]
    b: u32,
    /// Base radius of the radial graph
    #[arg(long, value_parser = parse_angle, default_value = "0.25pi")]
    r0: f64,
    /// Perturbation amplitude of the radial graph
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    #[arg(long, value_enum, default_value = "mixed")]
    profile: ProfileArg,
    /// Samples per chart axis
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    resolution: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Precondition margin for curvature and radius tests
    #[arg(long, default_value_t = DEFAULT_MARGIN)]
    margin: f64,
    /// Self-intersection distance threshold
    #[arg(long, default_value_t = IntersectionParams::default().eps)]
    intersect_eps: f64,
    /// Minimum parameter separation of a self-intersection, in grid hops
    #[arg(long, default_value_t = IntersectionParams::default().delta_hops)]
    delta_hops: f64,
    /// Write report.json, samples.csv and track.jsonl to this directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the full JSON report instead of a summary
    #[arg(long)]
    json: bool,
}

impl OneShot {
    fn family_spec(&self) -> FamilySpec {
        match self.family {
            Family::Round => FamilySpec::Round {
                n: self.n,
                r: Angle(self.r),
                rotation: self.random_rotation.then(|| RotationSpec::Named("random".into())),
                squeeze: self.squeeze,
            },
            Family::Clifford => FamilySpec::Clifford { a: self.a, b: self.b },
            Family::RadialGraph => FamilySpec::RadialGraph {
                n: self.n,
                r0: Angle(self.r0),
                eps: self.eps,
                profile: self.profile.into(),
            },
        }
    }

    fn scenario(&self, name: &str, operations: Vec<Operation>) -> Scenario {
        let mut s = Scenario::new(name, self.family_spec(), operations);
        s.resolution = self.resolution;
        s.seed = self.seed;
        s.tolerances = Tolerances {
            eps: self.intersect_eps,
            delta_hops: self.delta_hops,
            margin: self.margin,
        };
        s
    }

    fn run(&self, name: &str, operations: Vec<Operation>) -> ExitCode {
        let s = self.scenario(name, operations);
        execute(&s, self.out.as_deref(), self.json)
    }
}

fn execute(s: &Scenario, out: Option<&Path>, json: bool) -> ExitCode {
    let outcome = scenario::run(s);
    if let Some(dir) = out {
        if let Err(e) = outcome.write(dir, &s.outputs) {
            eprintln!("error: cannot write outputs to {}: {e}", dir.display());
            return ExitCode::from(scenario::EXIT_NUMERIC as u8);
        }
    }
    if json {
        println!("{}", outcome.report_json());
    } else {
        for r in &outcome.report.results {
            println!("{}", summarize(&r.op, &r.data));
        }
        for d in &outcome.report.diagnostics {
            eprintln!("{}: {}", d.kind, d.message);
        }
        println!("status: {}", outcome.report.status);
    }
    ExitCode::from(outcome.exit_code() as u8)
}

fn num(v: &Value) -> String {
    match v.as_f64() {
        Some(x) => format!("{x:.9}"),
        None => v.to_string(),
    }
}

fn summarize(op: &str, d: &Value) -> String {
    match op {
        "analyze" => format!(
            "analyze: J = [{}, {}] width {} | kappa in [{}, {}] | locally convex {} | l = {}",
            num(&d["J"]["lo"]),
            num(&d["J"]["hi"]),
            num(&d["J"]["width"]),
            num(&d["min_kappa"]),
            num(&d["max_kappa"]),
            d["locally_convex"],
            d["l_count"],
        ),
        "check-embedding" => format!(
            "check-embedding: embedded {} | m = {} | clusters {} | suspects {}",
            d["embedded"],
            d["m"],
            d["clusters"].as_array().map_or(0, Vec::len),
            d["suspects"],
        ),
        "quotient" | "assert-quotient" => format!(
            "{op}: k = {} | |G_C| = {} | |Gamma| = {} | k*|G_C| = |Gamma|: {}",
            d["k"], d["gc_order"], d["gamma_order"], d["identity_holds"],
        ),
        "moebius-flow" => {
            let mu: Vec<String> = d["entries"]
                .as_array()
                .map(|es| es.iter().map(|e| format!("{:.4}", e["mu"].as_f64().unwrap_or(f64::NAN))).collect())
                .unwrap_or_default();
            format!(
                "moebius-flow: mu = [{}] | strictly increasing {}",
                mu.join(", "),
                d["strictly_increasing"]
            )
        }
        _ => format!("{op}: {d}"),
    }
}

fn main() -> ExitCode {
    scenario::configure_threads();
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario: path,
            out,
            resolution,
            json,
        } => match Scenario::from_path(&path) {
            Ok(mut s) => {
                if let Some(res) = resolution {
                    s.resolution = res;
                }
                execute(&s, Some(&out), json)
            }
            Err(e) => {
                let report = scenario::schema_failure(&e.to_string());
                let _ = std::fs::create_dir_all(&out);
                let text = serde_json::to_string_pretty(&report).expect("report serializes");
                let _ = std::fs::write(out.join(Outputs::default().report), text + "\n");
                eprintln!("{e}");
                ExitCode::from(EXIT_SCHEMA as u8)
            }
        },
        Command::Analyze(shot) => shot.run("analyze", vec![Operation::Analyze {}]),
        Command::Translate { shot, by } => {
            shot.run("translate", vec![Operation::Translate { r: Angle(by) }, Operation::Analyze {}])
        }
        Command::Dual(shot) => shot.run("dual", vec![Operation::Dual {}, Operation::Analyze {}]),
        Command::MoebiusFlow {
            shot,
            s_min,
            step,
            embedding,
        } => shot.run(
            "moebius-flow",
            vec![Operation::MoebiusFlow {
                s_min,
                step,
                embedding,
            }],
        ),
        Command::ZetaFlow { shot, steps } => shot.run("zeta-flow", vec![Operation::ZetaFlow { steps }]),
        Command::Deform(shot) => shot.run("deform", vec![Operation::Deform {}]),
        Command::CheckEmbedding(shot) => shot.run("check-embedding", vec![Operation::CheckEmbedding {}]),
        Command::Quotient { shot, deck } => shot.run("quotient", vec![Operation::Quotient { deck }]),
        Command::VerifySuite { resolution, only } => {
            let report = if only.is_empty() {
                acceptance::run_suite_with(resolution, |c| {
                    eprintln!("criterion {:>2} {}", c.id, if c.passed { "PASS" } else { "FAIL" });
                })
            } else {
                let results: Vec<_> = only.iter().map(|&id| acceptance::run_criterion(id, resolution)).collect();
                acceptance::SuiteReport {
                    resolution,
                    total_seconds: results.iter().map(|r| r.seconds).sum(),
                    all_passed: results.iter().all(|r| r.passed),
                    results,
                }
            };
            print!("{}", report.table());
            if report.all_passed {
                ExitCode::from(EXIT_OK as u8)
            } else {
                ExitCode::from(scenario::EXIT_ASSERTION as u8)
            }
        }
    }
}
