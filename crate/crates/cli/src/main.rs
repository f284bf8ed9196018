mod report;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use polarq::algebra::{Quasigroup, QuasigroupFile};
use polarq::dmc::{mutual_information, Dmc, DmcFile};
use polarq::linmac::{
    is_consistent, lin_rate_region, loss_report, mask_coords, sufficient_preservation, BinaryState, LinearMixture,
    MixtureFile, DEFAULT_CLOSURE_LIMIT, DEFAULT_EVOLVE_RESOLUTION,
};
use polarq::macpolar::{
    construct_mac_code, mac_simulate, mac_survey, MacChannel, MacConstructOptions, MacFile, RowPolicy,
};
use polarq::polarcode::{construct_code, simulate, CodeConfig, ConstructOptions};
use polarq::polarize::{survey, SurveyConfig, SurveyMode, DEFAULT_DELTA};
use report::{emit, header, json_document, json_payload, num, opt_num, parse_json, read_file, CliError, CsvReport};

#[derive(Parser)]
#[command(name = "polarq", version, about = "Polarization experiments over quasigroups, MACs and linear mixtures")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify the synthetic channels of a single-user channel
    Survey(SurveyArgs),
    /// Build or simulate a polar code
    #[command(subcommand)]
    Code(CodeCommand),
    /// Classify the synthetic channels of a MAC
    MacSurvey(MacSurveyArgs),
    /// Build a MAC polar code, optionally simulating it
    MacCode(MacCodeArgs),
    /// Closed-form analysis of mixtures of linear channels
    #[command(subcommand)]
    Linmac(LinmacCommand),
}

#[derive(Subcommand)]
enum CodeCommand {
    /// Construct a code and write it as JSON
    Build(CodeBuildArgs),
    /// Simulate a stored code over a channel and write a CSV report
    Simulate(CodeSimulateArgs),
}

#[derive(Subcommand)]
enum LinmacCommand {
    /// Averaged state trajectory of a binary two-user mixture (CSV)
    Evolve(EvolveArgs),
    /// Per-subset consistency report (JSON)
    Consistency(ConsistencyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Mc,
}

#[derive(Clone, Copy, ValueEnum)]
enum RowsArg {
    First,
    Last,
}

#[derive(Args)]
struct PolarArgs {
    /// Number of polarization steps n (block length 2^n)
    #[arg(long, default_value_t = 8)]
    depth: u32,
    /// Exact channel transforms or Monte Carlo genie estimates
    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    mode: ModeArg,
    /// Classification tolerance on mutual information (bits)
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    delta: f64,
    /// Monte Carlo samples per branch (mc mode only)
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
}

impl PolarArgs {
    fn mode(&self) -> SurveyMode {
        match self.mode {
            ModeArg::Exact => SurveyMode::Exact,
            ModeArg::Mc => SurveyMode::MonteCarlo { samples: self.samples },
        }
    }

    fn echo(&self) -> Vec<(&'static str, String)> {
        let mut v = vec![
            ("depth", self.depth.to_string()),
            (
                "mode",
                match self.mode {
                    ModeArg::Exact => "exact".to_string(),
                    ModeArg::Mc => "mc".to_string(),
                },
            ),
            ("delta", num(self.delta)),
        ];
        if matches!(self.mode, ModeArg::Mc) {
            v.push(("samples", self.samples.to_string()));
        }
        v
    }
}

#[derive(Args)]
struct SurveyArgs {
    /// Channel JSON file or built-in (BEC:eps, BSC:p, identity:n, useless:n)
    #[arg(long)]
    channel: String,
    /// Quasigroup JSON file or built-in (Zn:k, XOR:k, twisted:n); defaults to Zn over the input alphabet
    #[arg(long)]
    quasigroup: Option<String>,
    /// Survey this many uniformly drawn branches instead of all 2^n
    #[arg(long)]
    branches: Option<usize>,
    #[command(flatten)]
    polar: PolarArgs,
}

#[derive(Args)]
struct CodeBuildArgs {
    #[arg(long)]
    channel: String,
    #[arg(long)]
    quasigroup: Option<String>,
    /// Freeze branches whose projected Bhattacharyya parameter is not below this
    #[arg(long, default_value_t = 1e-3)]
    z_threshold: f64,
    #[command(flatten)]
    polar: PolarArgs,
}

#[derive(Args)]
struct CodeSimulateArgs {
    /// Code JSON written by `code build`
    #[arg(long)]
    code: PathBuf,
    #[arg(long)]
    channel: String,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MacSurveyArgs {
    /// MAC JSON file or built-in (adder:p, adder:p:m, perfect:q1,q2,..., useless:q1,q2,...)
    #[arg(long)]
    channel: String,
    #[arg(long)]
    branches: Option<usize>,
    #[command(flatten)]
    polar: PolarArgs,
}

#[derive(Args)]
struct MacCodeArgs {
    #[arg(long)]
    channel: String,
    #[arg(long, default_value_t = 1e-3)]
    z_threshold: f64,
    /// Simulated blocks; 0 skips simulation
    #[arg(long, default_value_t = 0)]
    trials: usize,
    /// Which users of a prime block carry information on a branch
    #[arg(long, value_enum, default_value_t = RowsArg::First)]
    rows: RowsArg,
    #[command(flatten)]
    polar: PolarArgs,
}

#[derive(Args)]
struct EvolveArgs {
    /// Mixture JSON over F_2^2 with two users
    #[arg(long, conflicts_with = "state", required_unless_present = "state")]
    mixture: Option<PathBuf>,
    /// Initial weights p0,p1,p2,p3,p4 on {0}, <10>, <01>, <11>, F_2^2
    #[arg(long)]
    state: Option<String>,
    #[arg(long, default_value_t = 40)]
    depth: u32,
    /// Log-grid resolution for merging states; 0 keeps every state
    #[arg(long, default_value_t = DEFAULT_EVOLVE_RESOLUTION)]
    resolution: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ConsistencyArgs {
    #[arg(long)]
    mixture: PathBuf,
    /// Maximum closure size
    #[arg(long, default_value_t = DEFAULT_CLOSURE_LIMIT)]
    limit: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_channel(spec: &str) -> Result<Dmc, CliError> {
    if let Ok(p) = Dmc::builtin(spec) {
        return Ok(p);
    }
    parse_json::<DmcFile, Dmc, _>(&read_file(Path::new(spec))?, spec)
}

fn load_quasigroup(spec: Option<&str>, q: usize) -> Result<Quasigroup, CliError> {
    let Some(spec) = spec else { return Ok(Quasigroup::cyclic(q)) };
    if let Ok(g) = Quasigroup::builtin(spec) {
        return Ok(g);
    }
    parse_json::<QuasigroupFile, Quasigroup, _>(&read_file(Path::new(spec))?, spec)
}

fn parse_list(s: &str) -> Option<Vec<usize>> {
    s.split(',').map(|v| v.trim().parse().ok()).collect()
}

fn load_mac(spec: &str) -> Result<MacChannel, CliError> {
    if let Some((kind, arg)) = spec.split_once(':') {
        let built = match kind {
            "adder" => {
                let (p, m) = arg.split_once(':').unwrap_or((arg, "2"));
                match (p.parse(), m.parse()) {
                    (Ok(p), Ok(m)) => Some(MacChannel::adder(p, m)),
                    _ => None,
                }
            }
            "perfect" => parse_list(arg).map(|u| MacChannel::perfect(&u)),
            "useless" => parse_list(arg).map(|u| MacChannel::useless(&u)),
            _ => None,
        };
        if let Some(ch) = built {
            return Ok(ch?);
        }
    }
    parse_json::<MacFile, MacChannel, _>(&read_file(Path::new(spec))?, spec)
}

fn load_mixture(path: &Path) -> Result<LinearMixture, CliError> {
    parse_json::<MixtureFile, LinearMixture, _>(&read_file(path)?, &path.display().to_string())
}

fn cmd_survey(a: &SurveyArgs) -> Result<String, CliError> {
    let p = load_channel(&a.channel)?;
    let g = load_quasigroup(a.quasigroup.as_deref(), p.inputs())?;
    let mut cfg = SurveyConfig::new(a.polar.depth, a.polar.mode());
    cfg.delta = a.polar.delta;
    cfg.branch_sample = a.branches;
    cfg.seed = a.polar.seed;
    let s = survey(&p, &g, &cfg)?;

    let mut echo = vec![
        ("channel", a.channel.clone()),
        ("quasigroup", a.quasigroup.clone().unwrap_or(format!("Zn:{}", p.inputs()))),
    ];
    echo.extend(a.polar.echo());
    if let Some(b) = a.branches {
        echo.push(("branches", b.to_string()));
    }
    let mut r = CsvReport::new(
        header("survey", a.polar.seed, &echo),
        &[
            "branch_index",
            "signs",
            "mode",
            "samples",
            "mutual_info_bits",
            "matched_partition",
            "partition_info_bits",
            "z_projected",
        ],
    );
    for b in &s.reports {
        r.row([
            b.signs.index().to_string(),
            b.signs.to_string(),
            b.mode.to_string(),
            b.samples.to_string(),
            num(b.mutual_info),
            b.matched_partition.as_ref().map(|h| h.partition().signature()).unwrap_or_default(),
            opt_num(b.partition_info),
            opt_num(b.z_projected),
        ]);
    }
    r.footer("branches", s.reports.len().to_string());
    r.footer("classified_fraction", num(s.classified_fraction));
    r.footer("mean_info_bits", num(s.mean_info));
    r.footer("base_info_bits", num(s.base.mutual_info));
    r.footer("rate_bits", num(s.rate));
    Ok(r.finish())
}

fn cmd_code_build(a: &CodeBuildArgs) -> Result<String, CliError> {
    let p = load_channel(&a.channel)?;
    let g = load_quasigroup(a.quasigroup.as_deref(), p.inputs())?;
    let opts = ConstructOptions {
        delta: a.polar.delta,
        z_threshold: a.z_threshold,
        mode: a.polar.mode(),
        seed: a.polar.seed,
        ..ConstructOptions::default()
    };
    let code = construct_code(&p, &g, a.polar.depth, &opts)?;
    let mut echo = vec![
        ("channel", a.channel.clone()),
        ("quasigroup", a.quasigroup.clone().unwrap_or(format!("Zn:{}", p.inputs()))),
    ];
    echo.extend(a.polar.echo());
    echo.push(("z_threshold", num(a.z_threshold)));
    Ok(json_document(&header("code build", a.polar.seed, &echo), "code", &code.to_json()))
}

fn cmd_code_simulate(a: &CodeSimulateArgs) -> Result<String, CliError> {
    let origin = a.code.display().to_string();
    let code = CodeConfig::from_json(&json_payload(&read_file(&a.code)?, "code", &origin)?)?;
    let p = load_channel(&a.channel)?;
    let rep = simulate(&code, &p, a.trials, a.seed)?;
    let echo = [("code", origin), ("channel", a.channel.clone()), ("trials", a.trials.to_string())];
    let mut r = CsvReport::new(
        header("code simulate", a.seed, &echo),
        &["trials", "block_error_rate", "symbol_error_rate", "stderr", "union_bound", "rate_bits"],
    );
    r.row([
        rep.trials.to_string(),
        num(rep.block_error_rate),
        num(rep.symbol_error_rate),
        num(rep.stderr),
        num(rep.union_bound),
        num(code.rate_bits),
    ]);
    Ok(r.finish())
}

fn cmd_mac_survey(a: &MacSurveyArgs) -> Result<String, CliError> {
    let p = load_mac(&a.channel)?;
    let mut cfg = SurveyConfig::new(a.polar.depth, a.polar.mode());
    cfg.delta = a.polar.delta;
    cfg.branch_sample = a.branches;
    cfg.seed = a.polar.seed;
    let s = mac_survey(&p, &cfg)?;
    let mut echo = vec![("channel", a.channel.clone())];
    echo.extend(a.polar.echo());
    if let Some(b) = a.branches {
        echo.push(("branches", b.to_string()));
    }
    let mut r = CsvReport::new(
        header("mac-survey", a.polar.seed, &echo),
        &["branch_index", "signs", "mutual_info_bits", "matrix", "lrank", "projected_info_bits", "z_projected"],
    );
    for b in &s.reports {
        r.row([
            b.signs.index().to_string(),
            b.signs.to_string(),
            num(b.mutual_info),
            b.matrix.as_ref().map(|m| m.signature()).unwrap_or_default(),
            opt_num(b.lrank),
            opt_num(b.info_projected),
            opt_num(b.z_projected),
        ]);
    }
    r.footer("branches", s.reports.len().to_string());
    r.footer("classified_fraction", num(s.classified_fraction));
    r.footer("mean_info_bits", num(s.mean_info));
    r.footer("base_info_bits", num(mutual_information(p.channel())));
    r.footer("sum_rate_bits", num(s.sum_rate));
    Ok(r.finish())
}

#[derive(serde::Serialize)]
#[serde(rename_all = "camelCase")]
struct SimulationJson {
    trials: usize,
    block_error_rate: f64,
    symbol_error_rate: f64,
    stderr: f64,
    union_bound: f64,
}

fn cmd_mac_code(a: &MacCodeArgs) -> Result<String, CliError> {
    let p = load_mac(&a.channel)?;
    let opts = MacConstructOptions {
        delta: a.polar.delta,
        z_threshold: a.z_threshold,
        mode: a.polar.mode(),
        seed: a.polar.seed,
        policy: match a.rows {
            RowsArg::First => RowPolicy::FirstRows,
            RowsArg::Last => RowPolicy::LastRows,
        },
    };
    let code = construct_mac_code(&p, a.polar.depth, &opts)?;
    let sim = if a.trials > 0 {
        let r = mac_simulate(&code, &p, a.trials, a.polar.seed)?;
        Some(SimulationJson {
            trials: r.trials,
            block_error_rate: r.block_error_rate,
            symbol_error_rate: r.symbol_error_rate,
            stderr: r.stderr,
            union_bound: r.union_bound,
        })
    } else {
        None
    };
    let mut echo = vec![("channel", a.channel.clone())];
    echo.extend(a.polar.echo());
    echo.push(("z_threshold", num(a.z_threshold)));
    echo.push(("trials", a.trials.to_string()));
    let body = format!(
        "{{\"code\": {},\n\"simulation\": {}}}",
        code.to_json(),
        serde_json::to_string_pretty(&sim).expect("serialisable")
    );
    Ok(json_document(&header("mac-code", a.polar.seed, &echo), "macCode", &body))
}

fn parse_state(s: &str) -> Result<BinaryState, CliError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Parse(format!("--state {s}: {e}")))?;
    let arr: [f64; 5] = v.try_into().map_err(|_| CliError::Parse(format!("--state {s}: expected five weights")))?;
    Ok(BinaryState::new(arr)?)
}

fn cmd_linmac_evolve(a: &EvolveArgs) -> Result<String, CliError> {
    let (st, source) = match (&a.mixture, &a.state) {
        (Some(path), _) => (BinaryState::from_mixture(&load_mixture(path)?)?, ("mixture", path.display().to_string())),
        (None, Some(s)) => (parse_state(s)?, ("state", s.clone())),
        (None, None) => return Err(CliError::Parse("one of --mixture or --state is required".into())),
    };
    let rep = loss_report(&st, a.depth, a.resolution);
    let echo = [source, ("depth", a.depth.to_string()), ("resolution", num(a.resolution))];
    let mut r =
        CsvReport::new(header("linmac evolve", 0, &echo), &["n", "p0", "p1", "p2", "p3", "p4", "I1", "I2", "Isum"]);
    for (n, s) in rep.trajectory.iter().enumerate() {
        let mut row = vec![n.to_string()];
        row.extend(s.0.iter().map(|&v| num(v)));
        row.extend([num(s.i1()), num(s.i2()), num(s.isum())]);
        r.row(row);
    }
    r.footer("analytic_loss", rep.analytic_loss.to_string());
    r.footer("maximal_loss_detected", rep.maximal_loss_detected.to_string());
    r.footer("converged", rep.converged.to_string());
    if !rep.analytic_loss {
        r.note("p3 > max(p1,p2): whether p3 survives here is an open conjecture; the trajectory is exploratory evidence only");
    }
    Ok(r.finish())
}

#[derive(serde::Serialize)]
#[serde(rename_all = "camelCase")]
struct SubsetReport {
    subset: Vec<usize>,
    info: f64,
    consistent: bool,
    witness: Option<[Vec<Vec<usize>>; 2]>,
    sufficient_witness: Option<Vec<Vec<usize>>>,
}

#[derive(serde::Serialize)]
#[serde(rename_all = "camelCase")]
struct ConsistencyReport {
    closure_size: usize,
    subsets: Vec<SubsetReport>,
    note: &'static str,
}

fn cmd_linmac_consistency(a: &ConsistencyArgs) -> Result<String, CliError> {
    let mix = load_mixture(&a.mixture)?;
    let set = mix.subspaces();
    let closure = polarq::linmac::closure(&set, a.limit)?;
    let m = mix.users();
    let mut subsets = Vec::new();
    for mask in 1..1usize << m {
        let c = is_consistent(&set, mask, a.limit)?;
        let vs = sufficient_preservation(&set, mask)?;
        subsets.push(SubsetReport {
            subset: mask_coords(mask, m).iter().map(|k| k + 1).collect(),
            info: lin_rate_region(&mix, mask)?,
            consistent: c.consistent,
            witness: c.witness.map(|(x, y)| [x.basis().to_vec(), y.basis().to_vec()]),
            sufficient_witness: vs.map(|v| v.basis().to_vec()),
        });
    }
    let rep = ConsistencyReport {
        closure_size: closure.len(),
        subsets,
        note: "info is in base-q units; a missing sufficientWitness does not imply loss (conjectured only)",
    };
    let echo = [("mixture", a.mixture.display().to_string()), ("limit", a.limit.to_string())];
    let body = serde_json::to_string_pretty(&rep).expect("serialisable");
    Ok(json_document(&header("linmac consistency", 0, &echo), "consistency", &body))
}

fn run(cli: &Cli) -> Result<(String, Option<&PathBuf>), CliError> {
    Ok(match &cli.command {
        Command::Survey(a) => (cmd_survey(a)?, a.polar.out.as_ref()),
        Command::Code(CodeCommand::Build(a)) => (cmd_code_build(a)?, a.polar.out.as_ref()),
        Command::Code(CodeCommand::Simulate(a)) => (cmd_code_simulate(a)?, a.out.as_ref()),
        Command::MacSurvey(a) => (cmd_mac_survey(a)?, a.polar.out.as_ref()),
        Command::MacCode(a) => (cmd_mac_code(a)?, a.polar.out.as_ref()),
        Command::Linmac(LinmacCommand::Evolve(a)) => (cmd_linmac_evolve(a)?, a.out.as_ref()),
        Command::Linmac(LinmacCommand::Consistency(a)) => (cmd_linmac_consistency(a)?, a.out.as_ref()),
    })
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = run(&cli).and_then(|(text, out)| emit(out, &text));
    if let Err(e) = result {
        eprintln!("polarq: {e}");
        std::process::exit(e.exit_code());
    }
}
