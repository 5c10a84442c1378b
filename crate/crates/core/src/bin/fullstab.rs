use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;

use fullstab::cone::{active_set, critical_cone, polar_cone, tangent_cone};
use fullstab::config::{self, RunConfig};
use fullstab::error::{Error, Result};
use fullstab::harness::certify_with_table;
use fullstab::model::{parse_model, ParametricModel};
use fullstab::monotone::{check_localization_estimate, estimate_from_inverse, estimate_moduli, GraphSample};
use fullstab::report::render_text;
use fullstab::solver::{solve_faces, solve_projected, SearchBox, SolveOutcome, Step, X_RADIUS};

#[derive(Parser)]
#[command(name = "fullstab", version, about = "Full stability certification for parametric variational conditions")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every check and emit a stability report.
    Certify(CertifyArgs),
    /// Solve the variational condition at one (v, p).
    Solve(SolveArgs),
    /// Estimate monotonicity moduli of a sampled graph (CSV u1..un,v1..vn).
    ProbeMonotone(ProbeArgs),
    /// Tangent, critical and polar cone generators at the reference point.
    Cones(ConesArgs),
    /// Render a JSON report as text.
    Report { json: PathBuf },
}

#[derive(Args)]
struct CertifyArgs {
    model: PathBuf,
    #[arg(long, default_value_t = fullstab::kkt::CRCQ_ETA)]
    eta: f64,
    #[arg(long, default_value_t = config::RHO_V)]
    rho_v: f64,
    #[arg(long, default_value_t = config::RHO_P)]
    rho_p: f64,
    #[arg(long, default_value_t = config::SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = config::SEED)]
    seed: u64,
    #[arg(long, default_value_t = fullstab::second_order::TAU_PD)]
    tol_pd: f64,
    #[arg(long, default_value_t = fullstab::cone::TAU_ACT)]
    tol_act: f64,
    /// Write the JSON report here (stdout otherwise).
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write the localization table as CSV.
    #[arg(long)]
    csv_table: Option<PathBuf>,
    /// Print the text rendering instead of JSON on stdout.
    #[arg(long)]
    text: bool,
}

impl CertifyArgs {
    fn config(&self) -> RunConfig {
        RunConfig {
            eta: self.eta,
            rho_v: self.rho_v,
            rho_p: self.rho_p,
            samples: self.samples,
            seed: self.seed,
            tol_pd: self.tol_pd,
            tol_act: self.tol_act,
            ..RunConfig::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SolveMethod {
    Faces,
    Projected,
}

#[derive(Args)]
struct SolveArgs {
    model: PathBuf,
    /// Canonical parameter, comma separated (reference v by default).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    v: Option<Vec<f64>>,
    /// Basic parameter, comma separated (reference p by default).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    p: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "faces")]
    method: SolveMethod,
    /// Half-width of the search box around the reference x.
    #[arg(long, default_value_t = X_RADIUS)]
    radius: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
}

#[derive(Args)]
struct ProbeArgs {
    csv: PathBuf,
    /// Also test the localization estimate at this modulus.
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long, default_value_t = config::TOL_PAIR)]
    tol: f64,
}

#[derive(Args)]
struct ConesArgs {
    model: PathBuf,
    #[arg(long, default_value_t = fullstab::cone::TAU_ACT)]
    tol_act: f64,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn load(path: &Path) -> Result<(ParametricModel, String)> {
    let text = read(path)?;
    Ok((parse_model(&text)?, text))
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn certify(a: &CertifyArgs) -> Result<i32> {
    let (model, text) = load(&a.model)?;
    let (report, table) = certify_with_table(&model, &a.config(), &text)?;
    if let Some(path) = &a.csv_table {
        match &table {
            Some(t) => t.write_csv(fs::File::create(path)?)?,
            None => eprintln!("no localization table was built; {} not written", path.display()),
        }
    }
    let body = report.to_json();
    match &a.json {
        Some(path) => fs::write(path, &body)?,
        None if !a.text => print!("{body}"),
        None => {}
    }
    if a.text {
        print!("{}", report.to_text());
    }
    Ok(report.status.exit_code())
}

#[derive(Serialize)]
struct SolveReport {
    v: Vec<f64>,
    p: Vec<f64>,
    solutions: Vec<SolveOutcome>,
    singular_faces: usize,
}

fn solve(a: &SolveArgs) -> Result<i32> {
    let (model, _) = load(&a.model)?;
    let r = model.reference();
    let pick = |given: &Option<Vec<f64>>, reference: Option<DVector<f64>>, what: &str, len: usize| -> Result<DVector<f64>> {
        let v = match (given, reference) {
            (Some(v), _) => DVector::from_vec(v.clone()),
            (None, Some(r)) => r,
            (None, None) if len == 0 => DVector::zeros(0),
            (None, None) => return Err(Error::InvalidArgument(format!("--{what} is required without a reference line"))),
        };
        if v.len() != len {
            return Err(Error::Dimension(format!("--{what} has {} entries, expected {len}", v.len())));
        }
        Ok(v)
    };
    let v = pick(&a.v, r.map(|r| r.v_f64()), "v", model.n())?;
    let p = pick(&a.p, r.map(|r| r.p_f64()), "p", model.d())?;
    let center = r.map(|r| r.x_f64()).unwrap_or_else(|| DVector::zeros(model.n()));
    let (solutions, singular_faces) = match a.method {
        SolveMethod::Faces => {
            let found = solve_faces(&model, &v, &p, &SearchBox { center, radius: a.radius })?;
            (found.solutions, found.singular_faces)
        }
        SolveMethod::Projected => (vec![solve_projected(&model, &v, &p, &center, Step::Default, a.max_iter)?], 0),
    };
    print!(
        "{}",
        json(&SolveReport {
            v: v.iter().copied().collect(),
            p: p.iter().copied().collect(),
            solutions,
            singular_faces,
        })
    );
    Ok(0)
}

fn probe(a: &ProbeArgs) -> Result<i32> {
    let sample = GraphSample::from_csv(fs::File::open(&a.csv)?)?;
    let direct = estimate_moduli(&sample)?;
    let inverse = estimate_from_inverse(&sample, a.tol)?;
    let violations = a.kappa.map(|k| check_localization_estimate(&sample, k, a.tol));
    print!(
        "{}",
        json(&serde_json::json!({
            "points": sample.len(),
            "verdict": direct.verdict(),
            "direct": direct,
            "inverse": inverse,
            "localization_violations": violations,
        }))
    );
    Ok(0)
}

fn cones(a: &ConesArgs) -> Result<i32> {
    let (model, _) = load(&a.model)?;
    let r = model.require_reference()?;
    let (x, p) = (r.x_f64(), r.p_f64());
    let active = active_set(&model, x.as_slice(), p.as_slice(), a.tol_act)?;
    let t = tangent_cone(&model, &x, &p, &active)?;
    let k = critical_cone(&t, &r.v_hat_f64())?;
    let out = std::io::stdout();
    let mut out = out.lock();
    for (name, cone) in [("tangent", &t), ("critical", &k), ("critical-polar", &polar_cone(&k))] {
        writeln!(out, "# {name}")?;
        cone.generators().write_csv(model.n(), &mut out)?;
    }
    Ok(0)
}

fn report(path: &Path) -> Result<i32> {
    let value: serde_json::Value = serde_json::from_str(&read(path)?)?;
    print!("{}", render_text(&value));
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.cmd {
        Cmd::Certify(a) => certify(a),
        Cmd::Solve(a) => solve(a),
        Cmd::ProbeMonotone(a) => probe(a),
        Cmd::Cones(a) => cones(a),
        Cmd::Report { json } => report(json),
    };
    match outcome {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
