use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use blockdesign::config::{FamilyName, FileConfig};
use blockdesign::criteria::{lower_bound_rate, summarize, worst_case_box, worst_case_continuous};
use blockdesign::design::{
    cov_empirical, enumerate_design, find_perfect_balance, CovMatrix, DesignFamily, DesignSpec,
    DEFAULT_ENUMERATION_CAP,
};
use blockdesign::exec::set_threads;
use blockdesign::response::ResponseKind;
use blockdesign::seed::{derive_seed, stream_rng};
use blockdesign::sim::{self, AllocationPlan, RowSetup};
use blockdesign::verify::{run_all, run_suite, Suite, VerifyOptions};
use blockdesign::Error;

#[derive(Parser)]
#[command(name = "blockdesign", version, about = "Two-arm experimental designs and their MSE criteria")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a design and summarize its assignment covariance.
    Design(DesignArgs),
    /// Tabulate the design criteria over block counts.
    Criteria(CriteriaArgs),
    /// Run the Monte Carlo grid and write CSV.
    Simulate(SimulateArgs),
    /// Run the oracle suites.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Crd,
    Block,
    Pb,
}

#[derive(Clone, Copy, ValueEnum)]
enum Covariates {
    Uniform,
    Exponential,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Text,
}

#[derive(Args, Default)]
struct Common {
    /// TOML configuration file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    threads: Option<usize>,
    /// Half-sample size; the experiment has 2n subjects.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long = "nT")]
    n_t: Option<usize>,
    #[arg(long = "B")]
    blocks: Option<usize>,
    #[arg(long, value_parser = parse_kind)]
    kind: Option<ResponseKind>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, value_enum)]
    covariates: Option<Covariates>,
}

#[derive(Args)]
struct DesignArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum)]
    family: Option<Family>,
    /// List the full support instead of sampling from it.
    #[arg(long)]
    enumerate: bool,
    /// Number of sampled allocations to print.
    #[arg(long, default_value_t = 3)]
    samples: usize,
}

#[derive(Args)]
struct CriteriaArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    cq: Option<f64>,
    /// Box bound for count and survival worst cases.
    #[arg(long = "M")]
    m: Option<f64>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long = "Ny")]
    n_y: Option<usize>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    cq: Option<f64>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    /// Run one suite only.
    #[arg(long, value_parser = parse_suite)]
    suite: Option<Suite>,
    #[arg(long, hide = true)]
    mutate_closed_form: Option<f64>,
}

fn parse_kind(s: &str) -> Result<ResponseKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Design(a) => cmd_design(a),
        Command::Criteria(a) => cmd_criteria(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

/// Config file with the shared flags applied on top.
fn resolve(common: &Common) -> Result<FileConfig, Error> {
    let mut c = match &common.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    macro_rules! set {
        ($($field:ident <- $value:expr),* $(,)?) => {
            $(if let Some(v) = $value { c.$field = Some(v); })*
        };
    }
    set!(
        seed <- common.seed,
        n <- common.n,
        n_t <- common.n_t,
        blocks <- common.blocks,
        kind <- common.kind,
        p <- common.p,
        threads <- common.threads,
        covariate_dist <- common.covariates.map(|c| match c {
            Covariates::Uniform => "uniform".to_string(),
            Covariates::Exponential => "exponential".to_string(),
        }),
    );
    if let Some(t) = c.threads {
        if t == 0 {
            return Err(Error::InvalidParameter("--threads must be positive".into()));
        }
        set_threads(t);
    }
    Ok(c)
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Error> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|()| stdout.flush())
                .map_err(|source| Error::Io {
                    path: PathBuf::from("<stdout>"),
                    source,
                })
        }
    }
}

fn fmt_allocation(w: &[i8]) -> String {
    w.iter().map(|&x| if x > 0 { '+' } else { '-' }).collect()
}

/// Subject means of the configured model, used to pick a perfect-balance pair.
fn subject_means(c: &FileConfig) -> Result<Vec<f64>, Error> {
    let sim = c.sim_config()?;
    let kind = c.kind.unwrap_or(ResponseKind::Continuous);
    let p = c.p.unwrap_or(1);
    let plan = AllocationPlan {
        control: 1,
        treated: 1,
        blocks: vec![],
    };
    Ok(RowSetup::new(&sim, kind, p, &plan)?.profile.mu)
}

fn perfect_balance(c: &FileConfig) -> Result<DesignSpec, Error> {
    let arms = c.arms()?;
    if !arms.is_equal() {
        return Err(Error::Unsupported(
            "perfect-balance pairs need equal allocation".into(),
        ));
    }
    let mu = subject_means(c)?;
    let mut rng = stream_rng(derive_seed(c.seed_or_default(), &["balance"]), 0);
    let found = find_perfect_balance(&mu, &arms, 16, &mut rng)?;
    DesignSpec::perfect_balance_pair(found.allocation)
}

fn cmd_design(a: DesignArgs) -> Outcome {
    let mut c = resolve(&a.common)?;
    if let Some(f) = a.family {
        c.family = Some(match f {
            Family::Crd => FamilyName::Crd,
            Family::Block => FamilyName::Block,
            Family::Pb => FamilyName::Pb,
        });
    }
    let spec = match c.family {
        Some(FamilyName::Pb) => perfect_balance(&c)?,
        _ => c.design()?,
    };
    let arms = *spec.arms();
    let mut text = String::new();
    let mut line = |s: String| {
        text.push_str(&s);
        text.push('\n');
    };
    line(format!(
        "# design {} 2n={} n_T={} n_C={} seed={}",
        spec.label(),
        arms.total(),
        arms.n_treated(),
        arms.n_control(),
        c.seed_or_default()
    ));
    if let DesignFamily::Block(s) = spec.family() {
        line(format!(
            "# blocks {} of size {} with {} treated each",
            s.count(),
            s.block_size(),
            s.treated_per_block()
        ));
        for (b, cell) in s.blocks().iter().enumerate() {
            line(format!("# block {b}: {cell:?}"));
        }
    }
    let cov = spec.covariance()?;
    line(format!(
        "# E[W] = {} per subject; diag(Σ_W) = {}; λ_max = {}; ‖Σ_W‖_F = {}",
        spec.mean()?[0],
        cov.diagonal()[0],
        worst_case_continuous(&cov),
        cov.frobenius_norm_sq().sqrt()
    ));
    if a.enumerate {
        let full = enumerate_design(&spec, DEFAULT_ENUMERATION_CAP)?;
        let support = full.support().unwrap_or_default();
        let err = (cov_empirical(&full)?.dense() - cov.dense()).amax();
        line(format!("# support {} allocations; max |Σ_emp - Σ_closed| = {err:e}", support.len()));
        line("allocation,probability".into());
        for (w, p) in support {
            line(format!("{},{p}", fmt_allocation(w.entries())));
        }
    } else {
        let mut rng = stream_rng(derive_seed(c.seed_or_default(), &["design", "samples"]), 0);
        line("allocation".into());
        for _ in 0..a.samples {
            line(fmt_allocation(spec.sample(&mut rng).entries()));
        }
    }
    emit(&a.common.out, &text)?;
    Ok(())
}

fn cmd_criteria(a: CriteriaArgs) -> Outcome {
    let mut c = resolve(&a.common)?;
    if let Some(v) = a.cq {
        c.c_q = Some(v);
    }
    if let Some(v) = a.m {
        c.m = Some(v);
    }
    let sim = c.sim_config()?;
    let kind = c.kind.unwrap_or(ResponseKind::Continuous);
    let p = c.p.unwrap_or(1);
    let arms = c.arms()?;
    let mut plan = AllocationPlan::admissible(arms.n(), arms.n_control(), arms.n_treated())?;
    if let Some(b) = c.blocks {
        plan.blocks = vec![b];
    }
    let setup = RowSetup::new(&sim, kind, p, &plan)?;
    let box_bound = match kind {
        ResponseKind::Continuous => None,
        ResponseKind::Incidence | ResponseKind::Proportion => Some(1.0 / arms.r() + 1.0 / arms.r_tilde()),
        ResponseKind::Count | ResponseKind::Survival => Some(c.m.unwrap_or(1.0)),
    };
    let worst = |cov: &CovMatrix| -> Result<f64, Error> {
        match box_bound {
            None => Ok(worst_case_continuous(cov)),
            Some(m) => worst_case_box(cov, m),
        }
    };
    let mut designs: Vec<(String, String, CovMatrix)> = setup
        .designs
        .iter()
        .map(|(b, cov)| (format!("BL({b})"), b.to_string(), cov.clone()))
        .collect();
    if arms.is_equal() && c.blocks.is_none() {
        let mut rng = stream_rng(derive_seed(sim.seed, &["balance"]), 0);
        let w = find_perfect_balance(&setup.profile.mu, &arms, 16, &mut rng)?.allocation;
        designs.push(("PB".into(), String::new(), CovMatrix::rank_one(w.to_f64())));
    }
    let header = ["design", "B", "B1", "B2", "S", "R", "mean_mse", "var_mse", "Q_q", "worst_case"];
    let mut rows = Vec::new();
    for (label, b, cov) in &designs {
        let s = summarize(&setup.profile, cov, &arms, sim.c_q)?;
        let wc = worst(cov)?;
        rows.push(vec![
            label.clone(),
            b.clone(),
            s.terms.b1.to_string(),
            s.terms.b2.to_string(),
            s.terms.s.to_string(),
            s.terms.r.to_string(),
            s.mean_mse.to_string(),
            s.var_mse.to_string(),
            s.q_q.to_string(),
            wc.to_string(),
        ]);
    }
    let bound = lower_bound_rate(&setup.profile, arms.r(), arms.r_tilde(), sim.c_q, arms.n());
    let mut text = format!(
        "# kind={kind} p={p} 2n={} n_T={} c_q={} seed={} kappa_Z={} c_Z={} lower_bound={bound}\n",
        arms.total(),
        arms.n_treated(),
        sim.c_q,
        sim.seed,
        setup.profile.kappa_z,
        setup.profile.c_z
    );
    match a.format {
        Format::Csv => {
            text.push_str(&header.join(","));
            text.push('\n');
            for r in &rows {
                text.push_str(&r.join(","));
                text.push('\n');
            }
        }
        Format::Text => {
            let mut cells = vec![header.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
            cells.extend(rows.iter().map(|r| {
                r.iter()
                    .enumerate()
                    .map(|(i, v)| match v.parse::<f64>() {
                        Ok(x) if i >= 2 => format!("{x:.6e}"),
                        _ => v.clone(),
                    })
                    .collect()
            }));
            let widths: Vec<usize> = (0..header.len())
                .map(|j| cells.iter().map(|r| r[j].len()).max().unwrap_or(0))
                .collect();
            for r in cells {
                let padded: Vec<String> = r.iter().zip(&widths).map(|(v, w)| format!("{v:>w$}")).collect();
                text.push_str(padded.join("  ").trim_end());
                text.push('\n');
            }
        }
    }
    emit(&a.common.out, &text)?;
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> Outcome {
    let mut c = resolve(&a.common)?;
    if let Some(v) = a.n_y {
        c.n_y = Some(v);
    }
    if let Some(v) = a.q {
        c.q = Some(v);
    }
    if let Some(v) = a.cq {
        c.c_q = Some(v);
    }
    let config = c.sim_config()?;
    let rows = sim::run_grid(&config)?;
    match &a.common.out {
        Some(path) => {
            sim::write_csv(&rows, path)?;
            let meta = sim::write_meta(&config, path)?;
            eprintln!("wrote {} rows to {} ({})", rows.len(), path.display(), meta.display());
        }
        None => emit(&None, &sim::to_csv_string(&rows)?)?,
    }
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> Outcome {
    let c = resolve(&a.common)?;
    let opts = VerifyOptions {
        seed: c.seed_or_default(),
        mutate_closed_form: a.mutate_closed_form,
        ..VerifyOptions::default()
    };
    let reports = match a.suite {
        Some(s) => vec![run_suite(s, &opts)],
        None => run_all(&opts),
    };
    let mut text = String::new();
    for r in &reports {
        text.push_str(&r.to_string());
        text.push('\n');
    }
    emit(&a.common.out, &text)?;
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.suite.name()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Runtime(format!("failed suites: {}", failed.join(", "))))
    }
}
