use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use slabwave::config::RunConfig;
use slabwave::fields::Field2D;
use slabwave::geometry::Boundary;
use slabwave::pipeline::{self, Setup};
use slabwave::radcheck::{rung_boundaries, FluxReport};
use slabwave::{Error, Result};
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Guided modes, Green's functions and radiation certificates for
/// stratified-media Helmholtz problems.
#[derive(Parser)]
#[command(name = "slabwave", version)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// TOML run configuration.
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Args)]
struct RadcheckArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Field container: one total field, or the radiating part plus every guided part.
    #[arg(long, required = true)]
    field: Vec<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Guided modes of the profile.
    Modes(ConfigArg),
    /// Green's function and its parts on a lattice of observers.
    GreenEval(ConfigArg),
    /// Fixed-point solve of the perturbed problem.
    Solve(ConfigArg),
    /// Support of source and perturbation.
    VerifyH1(ConfigArg),
    /// Operator norm of the perturbation.
    VerifyH2(ConfigArg),
    /// Decay of the perturbation.
    VerifyH3(ConfigArg),
    /// Radiation certificate of sampled fields.
    Radcheck(RadcheckArgs),
    /// modes, solve, decomposition and radiation certificate.
    Pipeline(ConfigArg),
}

const CERTIFICATION_FAIL: u8 = 4;

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    metadata: Metadata,
    report: &'a T,
}

#[derive(Serialize)]
struct Metadata {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
}

struct Out {
    dir: PathBuf,
    command: &'static str,
}

impl Out {
    fn new(cfg: &RunConfig, command: &'static str) -> Result<Self> {
        fs::create_dir_all(&cfg.output_dir)?;
        Ok(Self { dir: cfg.output_dir.clone(), command })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.path(name))?))
    }

    /// Writes `name` and echoes it on stdout.
    fn json<T: Serialize>(&self, name: &str, report: &T) -> Result<()> {
        let env = Envelope {
            metadata: Metadata { tool: "slabwave", version: env!("CARGO_PKG_VERSION"), command: self.command },
            report,
        };
        let text = serde_json::to_string_pretty(&env).map_err(|e| Error::Format(e.to_string()))?;
        fs::write(self.path(name), format!("{text}\n"))?;
        println!("{text}");
        Ok(())
    }

    fn field(&self, stem: &str, f: &Field2D, csv: bool) -> Result<()> {
        f.write_binary(self.create(&format!("{stem}.bin"))?)?;
        if csv {
            f.write_csv(self.create(&format!("{stem}.csv"))?)?;
        }
        Ok(())
    }

    fn flux_csvs(&self, prefix: &str, reports: &[FluxReport]) -> Result<()> {
        for r in reports {
            let name = serde_json::to_value(r.variant).ok().and_then(|v| v.as_str().map(String::from));
            r.write_csv(self.create(&format!("{prefix}_{}.csv", name.unwrap_or_default()))?)?;
        }
        Ok(())
    }
}

fn load(arg: &ConfigArg) -> Result<RunConfig> {
    RunConfig::load(&arg.config)
}

fn read_field(path: &Path) -> Result<Field2D> {
    let f = File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    Field2D::read_binary(std::io::BufReader::new(f))
}

fn certified(pass: bool) -> ExitCode {
    if pass {
        ExitCode::SUCCESS
    } else {
        eprintln!("certification FAIL");
        ExitCode::from(CERTIFICATION_FAIL)
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Modes(a) => {
            let cfg = load(&a)?;
            let s = pipeline::setup(&cfg)?;
            Out::new(&cfg, "modes")?.json("modes.json", &pipeline::modes_report(&s))?;
        }
        Command::GreenEval(a) => {
            let cfg = load(&a)?;
            let s = pipeline::setup(&cfg)?;
            let out = Out::new(&cfg, "green-eval")?;
            let rows = pipeline::green_eval(&cfg, &s, out.create("green.csv")?)?;
            eprintln!("wrote {rows} rows to {}", out.path("green.csv").display());
        }
        Command::Solve(a) => {
            let cfg = load(&a)?;
            let s = pipeline::setup(&cfg)?;
            let pb = pipeline::prepare(&cfg, &s)?;
            let (report, uniqueness) = pipeline::solve(&cfg, &pb)?;
            let out = Out::new(&cfg, "solve")?;
            out.field("solution", &report.solution, true)?;
            #[derive(Serialize)]
            struct SolveOut<'a> {
                solve: &'a slabwave::scatter::SolveReport,
                uniqueness: Option<slabwave::scatter::UniquenessCheck>,
                p_scale: f64,
            }
            out.json("solve.json", &SolveOut { solve: &report, uniqueness, p_scale: pb.p_scale })?;
        }
        Command::VerifyH1(a) => {
            let cfg = load(&a)?;
            let profile = cfg.profile.build()?;
            let report = pipeline::verify_sampled(&cfg, &profile, false)?;
            Out::new(&cfg, "verify-h1")?.json("h1.json", &report)?;
        }
        Command::VerifyH2(a) => {
            let cfg = load(&a)?;
            let s = pipeline::setup(&cfg)?;
            let pb = pipeline::prepare(&cfg, &s)?;
            let report = pipeline::hypotheses(&cfg, &s, &pb, false)?;
            Out::new(&cfg, "verify-h2")?.json("h2.json", &report)?;
        }
        Command::VerifyH3(a) => {
            let cfg = load(&a)?;
            let profile = cfg.profile.build()?;
            let report = pipeline::verify_sampled(&cfg, &profile, true)?;
            Out::new(&cfg, "verify-h3")?.json("h3.json", &report)?;
        }
        Command::Radcheck(a) => {
            let cfg = load(&a.config)?;
            let s: Setup = pipeline::setup(&cfg)?;
            let fields = a.field.iter().map(|p| read_field(p)).collect::<Result<Vec<_>>>()?;
            let comps = pipeline::components(fields, &s.modes)?;
            let reports = pipeline::certify_sampled(&cfg, &s, comps)?;
            let out = Out::new(&cfg, "radcheck")?;
            out.flux_csvs("radcheck", &reports)?;
            if let (Some(r), Some(&v)) = (cfg.radcheck.radii(s.profile.k).last(), cfg.radcheck.variants.first()) {
                let (st, sq) = rung_boundaries(*r, &s.profile, &cfg.radcheck.settings(v))?;
                fs::write(out.path("boundary_stadium.csv"), st.to_csv())?;
                fs::write(out.path("boundary_square.csv"), sq.to_csv())?;
            }
            out.json("radcheck.json", &reports)?;
            return Ok(certified(reports.iter().all(|r| r.pass)));
        }
        Command::Pipeline(a) => {
            let cfg = load(&a)?;
            let (summary, fields) = pipeline::pipeline(&cfg)?;
            let out = Out::new(&cfg, "pipeline")?;
            out.field("solution", &fields[0], true)?;
            for (l, f) in fields[1..].iter().enumerate() {
                out.field(&format!("u{l}"), f, false)?;
            }
            out.flux_csvs("radcheck", &summary.certificates)?;
            out.flux_csvs("incoming", &summary.incoming_controls)?;
            out.json("summary.json", &summary)?;
            return Ok(certified(summary.pass));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
