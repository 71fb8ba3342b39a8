//! Command-line front end. Every subcommand is deterministic given its
//! flags: replica RNG streams derive from (seed, replica), worker threads
//! only change wall time, and rows are written in index order.
//!
//! Exit codes: 0 success, 1 error, 2 when the only result is Inconclusive
//! (so pipelines can tell "undecided" from "failed").

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::classifier::{
    classify_full, Budget, Classification, ExtReal, Label, Regime, RuleKind, SeriesKind,
    SeriesStatus, SeriesVerdict, ADMISSIBILITY_HORIZON,
};
use crate::error::{Error, Result};
use crate::oracle;
use crate::simulator::{
    couple, simulate, simulate_grafted, CapPolicy, GraftedTree, LeafCount, SampleConfig,
    SimOptions, TrajectorySummary,
};
use crate::transitions::{ModelSpec, TransitionModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "combwalk",
    version,
    about = "Persistent-walk toolkit: exact tails, recurrence classification, Monte Carlo, couplings, grafted context trees"
)]
pub struct Cli {
    #[command(flatten)]
    globals: Globals,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Globals {
    /// Master seed; replica streams derive from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted. Sweeps resume from this file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for replica/grid fan-out (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Cap on series terms and mean-scan length.
    #[arg(long, global = true)]
    budget_terms: Option<u64>,
    /// Wall-clock cap in seconds for classification work.
    #[arg(long, global = true)]
    budget_seconds: Option<f64>,
    /// JSON config file whose fields override the flags above.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

/// On-disk form of the global knobs. Fields present in the file win over
/// command-line flags, so a checked-in config fully pins an experiment.
#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    schema: Option<u32>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    threads: Option<usize>,
    budget_terms: Option<u64>,
    budget_seconds: Option<f64>,
}

#[derive(Debug, Clone)]
struct Resolved {
    seed: u64,
    out: Option<PathBuf>,
    threads: Option<usize>,
    budget: Budget,
}

fn resolve(g: &Globals) -> Result<Resolved> {
    let mut seed = g.seed;
    let mut out = g.out.clone();
    let mut threads = g.threads;
    let mut terms = g.budget_terms;
    let mut seconds = g.budget_seconds;
    if let Some(path) = &g.config {
        let text = fs::read_to_string(path)?;
        let fc: FileConfig = serde_json::from_str(&text)?;
        if let Some(v) = fc.schema {
            if v != 1 {
                return Err(Error::Config(format!("unsupported config schema {v}, expected 1")));
            }
        }
        if let Some(v) = fc.seed {
            seed = v;
        }
        if let Some(v) = fc.out {
            out = Some(v);
        }
        if let Some(v) = fc.threads {
            threads = Some(v);
        }
        if let Some(v) = fc.budget_terms {
            terms = Some(v);
        }
        if let Some(v) = fc.budget_seconds {
            seconds = Some(v);
        }
    }
    let mut budget = Budget::default();
    if let Some(t) = terms {
        budget.max_terms = t;
    }
    if let Some(s) = seconds {
        budget.max_seconds = s;
    }
    Ok(Resolved { seed, out, threads, budget })
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decide recurrence/transience and print the evidence blob.
    Classify(ClassifyArgs),
    /// Tabulate switch rates, run-length tails, and truncated means as CSV.
    Tails(TailsArgs),
    /// Monte Carlo walk replicas, one CSV row each.
    Simulate(SimulateArgs),
    /// Pathwise order check between a lower and an upper model.
    Couple(CoupleArgs),
    /// Exact small-horizon law (walk pmf, or pair-skeleton pmf).
    Oracle(OracleArgs),
    /// Simulate a grafted context tree; report per-leaf switch statistics.
    Graft(GraftArgs),
    /// Classify every point of a parameter grid into a resumable CSV.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    /// Model descriptor: inline JSON or a path to a JSON file.
    #[arg(long)]
    model: String,
}

#[derive(Args, Debug)]
struct TailsArgs {
    #[arg(long)]
    model: String,
    /// Largest run length tabulated.
    #[arg(long)]
    max_n: u64,
    /// Emit every stride-th row (n = 1, 1+stride, ...).
    #[arg(long, default_value_t = 1)]
    stride: u64,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum CapPolicyArg {
    /// Refuse runs longer than the cap.
    Abort,
    /// Record capped runs at the cap length and count them.
    Clamp,
}

impl From<CapPolicyArg> for CapPolicy {
    fn from(p: CapPolicyArg) -> Self {
        match p {
            CapPolicyArg::Abort => CapPolicy::Abort,
            CapPolicyArg::Clamp => CapPolicy::ClampCounted,
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    model: String,
    #[arg(long)]
    steps: u64,
    #[arg(long, default_value_t = 1)]
    replicas: u64,
    /// Longest run a single draw may produce.
    #[arg(long)]
    run_cap: Option<u64>,
    #[arg(long, value_enum, default_value_t = CapPolicyArg::Abort)]
    cap_policy: CapPolicyArg,
    /// Write full position paths here as JSON lines (one per replica).
    #[arg(long)]
    store_path: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CoupleArgs {
    /// Model expected to stay pathwise below.
    #[arg(long)]
    model_low: String,
    /// Model expected to stay pathwise above.
    #[arg(long)]
    model_high: String,
    #[arg(long)]
    steps: u64,
    #[arg(long, default_value_t = 1)]
    replicas: u64,
    #[arg(long)]
    run_cap: Option<u64>,
    #[arg(long, value_enum, default_value_t = CapPolicyArg::Abort)]
    cap_policy: CapPolicyArg,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long)]
    model: String,
    /// Walk horizon for the step-law pmf.
    #[arg(long, conflicts_with = "pairs")]
    steps: Option<u64>,
    /// Number of down-up pairs: switches to the skeleton law.
    #[arg(long, requires = "run_cap")]
    pairs: Option<u64>,
    /// Run-length truncation for the skeleton law.
    #[arg(long)]
    run_cap: Option<u64>,
}

#[derive(Args, Debug)]
struct GraftArgs {
    /// Grafted-tree descriptor: inline JSON or a path.
    #[arg(long)]
    tree: String,
    /// Print the bounding models as JSON and exit.
    #[arg(long, default_value_t = false)]
    bounds: bool,
    #[arg(long, required_unless_present = "bounds")]
    steps: Option<u64>,
    #[arg(long, default_value_t = 1)]
    replicas: u64,
    #[arg(long)]
    run_cap: Option<u64>,
    #[arg(long, value_enum, default_value_t = CapPolicyArg::Abort)]
    cap_policy: CapPolicyArg,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Model template: JSON with "$name" placeholder strings.
    #[arg(long)]
    template: String,
    /// Axes: JSON object mapping placeholder names to value arrays.
    #[arg(long)]
    axes: String,
}

/// Parse argv, run, and translate everything into the exit-code contract.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let failed = e.use_stderr();
            let _ = e.print();
            return if failed { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn execute(cli: Cli) -> Result<i32> {
    let g = resolve(&cli.globals)?;
    match &cli.command {
        Command::Classify(a) => cmd_classify(&g, a),
        Command::Tails(a) => cmd_tails(&g, a),
        Command::Simulate(a) => cmd_simulate(&g, a),
        Command::Couple(a) => cmd_couple(&g, a),
        Command::Oracle(a) => cmd_oracle(&g, a),
        Command::Graft(a) => cmd_graft(&g, a),
        Command::Sweep(a) => cmd_sweep(&g, a),
    }
}

/// Accept inline JSON (starts with '{' or '[') or a file path.
fn load_json<T: DeserializeOwned>(source: &str) -> Result<T> {
    let text = if source.trim_start().starts_with(['{', '[']) {
        source.to_string()
    } else {
        fs::read_to_string(source)?
    };
    Ok(serde_json::from_str(&text)?)
}

fn load_model(source: &str) -> Result<TransitionModel> {
    TransitionModel::from_spec(load_json::<ModelSpec>(source)?)
}

fn open_sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(fs::File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

/// Run `f` on a dedicated pool when --threads is given, otherwise on the
/// global one. Results never depend on the pool: order is restored by index.
fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn sample_config(run_cap: Option<u64>, policy: CapPolicyArg) -> SampleConfig {
    let mut cfg = SampleConfig::default();
    if let Some(c) = run_cap {
        cfg.run_cap = c;
    }
    cfg.cap_policy = policy.into();
    cfg
}

fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

fn ext_str(e: &ExtReal) -> String {
    match e {
        ExtReal::Finite { value } => num(*value),
        ExtReal::PlusInfinite => "inf".into(),
        ExtReal::MinusInfinite => "-inf".into(),
        ExtReal::Undefined => "undefined".into(),
        ExtReal::Inconclusive => "inconclusive".into(),
    }
}

fn status_str(s: SeriesStatus) -> &'static str {
    match s {
        SeriesStatus::Finite => "finite",
        SeriesStatus::Infinite => "infinite",
        SeriesStatus::Inconclusive => "inconclusive",
    }
}

fn rule_line(v: &SeriesVerdict) -> String {
    let which = match v.which {
        SeriesKind::J => "J",
        SeriesKind::K => "K",
        SeriesKind::Ktilde => "K~",
    };
    let rule = match v.rule {
        RuleKind::Analytic => "exponent rule",
        RuleKind::Numeric => "streamed partial sums",
    };
    format!(
        "{which}({}|{}) {} by {} at horizon {}: {}",
        v.pair.0,
        v.pair.1,
        status_str(v.status),
        rule,
        v.horizon,
        v.detail
    )
}

#[derive(Serialize)]
struct EvidenceHorizons {
    admissibility: u64,
    series: Vec<u64>,
}

#[derive(Serialize)]
struct Evidence<'a> {
    label: Label,
    regime: Regime,
    drift: &'a Option<crate::classifier::DriftReport>,
    #[serde(rename = "J_ud")]
    j_ud: &'a Option<SeriesVerdict>,
    #[serde(rename = "J_du")]
    j_du: &'a Option<SeriesVerdict>,
    #[serde(rename = "K_ud")]
    k_ud: &'a Option<SeriesVerdict>,
    #[serde(rename = "K_du")]
    k_du: &'a Option<SeriesVerdict>,
    horizons: EvidenceHorizons,
    rules: Vec<String>,
    notes: &'a [String],
}

impl<'a> Evidence<'a> {
    fn from(c: &'a Classification) -> Self {
        let verdicts = [&c.j_up_given_down, &c.j_down_given_up, &c.k_up_given_down, &c.k_down_given_up];
        Evidence {
            label: c.label,
            regime: c.regime,
            drift: &c.drift,
            j_ud: &c.j_up_given_down,
            j_du: &c.j_down_given_up,
            k_ud: &c.k_up_given_down,
            k_du: &c.k_down_given_up,
            horizons: EvidenceHorizons {
                admissibility: ADMISSIBILITY_HORIZON,
                series: verdicts.iter().filter_map(|v| v.as_ref().map(|x| x.horizon)).collect(),
            },
            rules: verdicts.iter().filter_map(|v| v.as_ref().map(|x| rule_line(x))).collect(),
        notes: &c.notes,
        }
    }
}

fn cmd_classify(g: &Resolved, a: &ClassifyArgs) -> Result<i32> {
    let model = load_model(&a.model)?;
    let c = classify_full(&model, &g.budget)?;
    println!("label: {}", c.label);
    let blob = serde_json::to_string_pretty(&Evidence::from(&c))?;
    match &g.out {
        Some(p) => fs::write(p, blob + "\n")?,
        None => println!("{blob}"),
    }
    Ok(if c.label == Label::Inconclusive { EXIT_INCONCLUSIVE } else { EXIT_OK })
}

fn cmd_tails(g: &Resolved, a: &TailsArgs) -> Result<i32> {
    if a.stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    if a.max_n == 0 {
        return Err(Error::Config("max_n must be at least 1".into()));
    }
    let model = load_model(&a.model)?;
    let mut w = csv::Writer::from_writer(open_sink(&g.out)?);
    w.write_record([
        "n",
        "alpha_up",
        "alpha_down",
        "tail_up",
        "tail_down",
        "trunc_mean_up",
        "trunc_mean_down",
    ])?;
    use crate::transitions::Direction::{Down, Up};
    let mut n = 1u64;
    while n <= a.max_n {
        w.write_record([
            n.to_string(),
            num(model.alpha(Up, n)),
            num(model.alpha(Down, n)),
            num(model.tail(Up, n)),
            num(model.tail(Down, n)),
            num(model.truncated_mean(Up, n)),
            num(model.truncated_mean(Down, n)),
        ])?;
        n += a.stride;
    }
    w.flush()?;
    Ok(EXIT_OK)
}

fn cmd_simulate(g: &Resolved, a: &SimulateArgs) -> Result<i32> {
    let model = load_model(&a.model)?;
    let opts = SimOptions {
        store_path: a.store_path.is_some(),
        sample: sample_config(a.run_cap, a.cap_policy),
    };
    let seed = g.seed;
    let runs: Vec<Result<TrajectorySummary>> = with_pool(g.threads, || {
        (0..a.replicas)
            .into_par_iter()
            .map(|r| simulate(&model, a.steps, seed, r, &opts))
            .collect()
    })?;
    let mut w = csv::Writer::from_writer(open_sink(&g.out)?);
    w.write_record([
        "replica",
        "seed",
        "final_position",
        "drift_estimate",
        "sign_changes_M",
        "returns_to_origin",
        "min_pos",
        "max_pos",
    ])?;
    let mut paths: Option<fs::File> = match &a.store_path {
        Some(p) => Some(fs::File::create(p)?),
        None => None,
    };
    for row in runs {
        let s = row?;
        w.write_record([
            s.replica.to_string(),
            s.seed.to_string(),
            s.final_position.to_string(),
            num(s.final_position as f64 / s.steps as f64),
            s.sign_changes_m.to_string(),
            s.returns_to_origin.to_string(),
            s.min_pos.to_string(),
            s.max_pos.to_string(),
        ])?;
        if let (Some(f), Some(pos)) = (paths.as_mut(), &s.positions) {
            let line = serde_json::to_string(&json!({ "replica": s.replica, "positions": pos }))?;
            writeln!(f, "{line}")?;
        }
    }
    w.flush()?;
    Ok(EXIT_OK)
}

fn cmd_couple(g: &Resolved, a: &CoupleArgs) -> Result<i32> {
    let low = load_model(&a.model_low)?;
    let high = load_model(&a.model_high)?;
    let cfg = sample_config(a.run_cap, a.cap_policy);
    let seed = g.seed;
    let outcomes = with_pool(g.threads, || {
        (0..a.replicas)
            .into_par_iter()
            .map(|r| couple(&low, &high, a.steps, seed, r, &cfg))
            .collect::<Vec<_>>()
    })?;
    let mut w = csv::Writer::from_writer(open_sink(&g.out)?);
    w.write_record([
        "replica",
        "seed",
        "steps",
        "violations",
        "first_violation",
        "final_low",
        "final_high",
        "min_gap",
    ])?;
    for row in outcomes {
        let o = row?;
        w.write_record([
            o.replica.to_string(),
            o.seed.to_string(),
            o.steps.to_string(),
            o.violations.to_string(),
            o.first_violation.map(|v| v.to_string()).unwrap_or_default(),
            o.final_low.to_string(),
            o.final_high.to_string(),
            o.min_gap.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(EXIT_OK)
}

fn write_distribution(
    sink: &mut Box<dyn Write>,
    header: &Value,
    dist: &oracle::ExactDistribution,
) -> Result<()> {
    writeln!(sink, "{}", serde_json::to_string(header)?)?;
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["position", "probability"])?;
    for (x, p) in &dist.pmf {
        w.write_record([x.to_string(), num(*p)])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_oracle(g: &Resolved, a: &OracleArgs) -> Result<i32> {
    let model = load_model(&a.model)?;
    let mut sink = open_sink(&g.out)?;
    if let Some(pairs) = a.pairs {
        let cap = a.run_cap.expect("clap enforces run_cap with pairs");
        let dist = oracle::exact_skeleton_pmf(&model, pairs, cap)?;
        let header = json!({
            "law": "skeleton",
            "pairs": dist.horizon,
            "run_cap": cap,
            "retained_mass": dist.retained_mass,
            "mean": dist.mean(),
        });
        write_distribution(&mut sink, &header, &dist)?;
        return Ok(EXIT_OK);
    }
    let steps = a
        .steps
        .ok_or_else(|| Error::Config("either --steps or --pairs is required".into()))?;
    let dist = oracle::exact_pmf(&model, steps)?;
    let header = json!({
        "law": "walk",
        "steps": dist.horizon,
        "retained_mass": dist.retained_mass,
        "mean": dist.mean(),
        "return_prob": oracle::exact_return_prob(&model, steps)?,
    });
    write_distribution(&mut sink, &header, &dist)?;
    Ok(EXIT_OK)
}

fn cmd_graft(g: &Resolved, a: &GraftArgs) -> Result<i32> {
    let tree: GraftedTree = load_json(&a.tree)?;
    tree.validate()?;
    if a.bounds {
        let (lower, upper) = tree.graft_bounds()?;
        let blob = serde_json::to_string_pretty(&json!({
            "lower": lower.spec(),
            "upper": upper.spec(),
        }))?;
        match &g.out {
            Some(p) => fs::write(p, blob + "\n")?,
            None => println!("{blob}"),
        }
        return Ok(EXIT_OK);
    }
    let steps = a.steps.expect("clap enforces steps unless --bounds");
    let opts = SimOptions {
        store_path: false,
        sample: sample_config(a.run_cap, a.cap_policy),
    };
    let seed = g.seed;
    let runs: Vec<Result<(TrajectorySummary, Vec<LeafCount>)>> = with_pool(g.threads, || {
        (0..a.replicas)
            .into_par_iter()
            .map(|r| simulate_grafted(&tree, steps, seed, r, &opts))
            .collect()
    })?;
    // Aggregate leaf statistics across replicas; q is a property of the
    // leaf, so it is constant within a key.
    let mut leaves: BTreeMap<(String, u64, String), (f64, u64, u64)> = BTreeMap::new();
    let mut finals = Vec::with_capacity(runs.len());
    for row in runs {
        let (summary, counts) = row?;
        finals.push(summary.final_position);
        for c in counts {
            let e = leaves
                .entry((c.direction.to_string(), c.run_length, c.path.clone()))
                .or_insert((c.q, 0, 0));
            e.1 += c.visits;
            e.2 += c.switches;
        }
    }
    let mut sink = open_sink(&g.out)?;
    let header = json!({
        "steps": steps,
        "replicas": a.replicas,
        "final_positions": finals,
    });
    writeln!(sink, "{}", serde_json::to_string(&header)?)?;
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["direction", "run_length", "path", "q", "visits", "switches", "frequency"])?;
    for ((dir, n, path), (q, visits, switches)) in &leaves {
        let freq = if *visits > 0 {
            num(*switches as f64 / *visits as f64)
        } else {
            String::new()
        };
        w.write_record([
            dir.clone(),
            n.to_string(),
            path.clone(),
            num(*q),
            visits.to_string(),
            switches.to_string(),
            freq,
        ])?;
    }
    w.flush()?;
    Ok(EXIT_OK)
}

/// Replace every string equal to "$name" anywhere in the template.
fn substitute(v: &mut Value, name: &str, value: &Value) {
    match v {
        Value::String(s) if s.as_str() == format!("${name}") => *v = value.clone(),
        Value::Array(items) => {
            for item in items {
                substitute(item, name, value);
            }
        }
        Value::Object(map) => {
            for (_k, item) in map.iter_mut() {
                substitute(item, name, value);
            }
        }
        _ => {}
    }
}

fn find_placeholder(v: &Value) -> Option<&str> {
    match v {
        Value::String(s) if s.starts_with('$') => Some(s),
        Value::Array(items) => items.iter().find_map(find_placeholder),
        Value::Object(map) => map.values().find_map(find_placeholder),
        _ => None,
    }
}

fn axis_cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

const SWEEP_FIXED_COLUMNS: [&str; 15] = [
    "label",
    "regime",
    "drift_t",
    "drift_m",
    "drift_s",
    "j_ud_status",
    "j_ud_partial",
    "j_du_status",
    "j_du_partial",
    "k_ud_status",
    "k_ud_partial",
    "k_du_status",
    "k_du_partial",
    "notes",
    "error",
];

fn sweep_result_cells(point: Value, budget: &Budget) -> Vec<String> {
    let mut cells = vec![String::new(); SWEEP_FIXED_COLUMNS.len()];
    let err_slot = SWEEP_FIXED_COLUMNS.len() - 1;
    if let Some(p) = find_placeholder(&point) {
        cells[err_slot] = format!("unresolved placeholder {p}");
        return cells;
    }
    let spec: ModelSpec = match serde_json::from_value(point) {
        Ok(s) => s,
        Err(e) => {
            cells[err_slot] = format!("descriptor: {e}");
            return cells;
        }
    };
    let model = match TransitionModel::from_spec(spec) {
        Ok(m) => m,
        Err(e) => {
            cells[err_slot] = e.to_string();
            return cells;
        }
    };
    let c = match classify_full(&model, budget) {
        Ok(c) => c,
        Err(e) => {
            cells[err_slot] = e.to_string();
            return cells;
        }
    };
    cells[0] = c.label.to_string();
    cells[1] = match c.regime {
        Regime::DefinedDrift => "defined_drift".into(),
        Regime::UndefinedDrift => "undefined_drift".into(),
    };
    if let Some(d) = &c.drift {
        cells[2] = ext_str(&d.drift_t);
        cells[3] = ext_str(&d.drift_m);
        cells[4] = ext_str(&d.drift_s);
    }
    let series = [
        (&c.j_up_given_down, 5usize),
        (&c.j_down_given_up, 7),
        (&c.k_up_given_down, 9),
        (&c.k_down_given_up, 11),
    ];
    for (v, slot) in series {
        if let Some(v) = v {
            cells[slot] = status_str(v.status).to_string();
            cells[slot + 1] = num(v.partial_sum);
        }
    }
    cells[13] = c.notes.join("; ");
    cells
}

fn cmd_sweep(g: &Resolved, a: &SweepArgs) -> Result<i32> {
    let template: Value = load_json(&a.template)?;
    let axes: BTreeMap<String, Vec<Value>> = load_json(&a.axes)?;
    let names: Vec<&String> = axes.keys().collect();
    let sizes: Vec<u64> = names.iter().map(|n| axes[*n].len() as u64).collect();
    let total: u64 = sizes.iter().try_fold(1u64, |acc, s| acc.checked_mul(*s)).ok_or_else(
        || Error::Config("grid size overflows".into()),
    )?;

    let mut header: Vec<String> = vec!["grid_index".into()];
    header.extend(names.iter().map(|n| n.to_string()));
    header.extend(SWEEP_FIXED_COLUMNS.iter().map(|s| s.to_string()));

    // The output CSV doubles as the resume journal: rows already present
    // are trusted and skipped.
    let mut done: Vec<bool> = vec![false; total as usize];
    let mut append = false;
    if let Some(path) = &g.out {
        if path.exists() {
            let mut r = csv::Reader::from_path(path)?;
            let have: Vec<String> = r.headers()?.iter().map(|s| s.to_string()).collect();
            if have != header {
                return Err(Error::Config(format!(
                    "existing sweep file {} has different columns; refusing to mix schemas",
                    path.display()
                )));
            }
            for rec in r.records() {
                let rec = rec?;
                let idx: u64 = rec
                    .get(0)
                    .unwrap_or("")
                    .parse()
                    .map_err(|_| Error::Config("sweep journal has a malformed grid_index".into()))?;
                if idx < total {
                    done[idx as usize] = true;
                }
            }
            append = true;
        }
    }

    // Materialize the pending grid points in index order; the last axis
    // varies fastest.
    let mut pending: Vec<(u64, Vec<String>, Value)> = Vec::new();
    for idx in 0..total {
        if done[idx as usize] {
            continue;
        }
        let mut rem = idx;
        let mut coords = vec![0u64; names.len()];
        for i in (0..names.len()).rev() {
            coords[i] = rem % sizes[i];
            rem /= sizes[i];
        }
        let mut point = template.clone();
        let mut cells = Vec::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            let value = &axes[*name][coords[i] as usize];
            substitute(&mut point, name, value);
            cells.push(axis_cell(value));
        }
        pending.push((idx, cells, point));
    }

    let budget = g.budget;
    let results: Vec<(u64, Vec<String>, Vec<String>)> = with_pool(g.threads, || {
        pending
            .into_par_iter()
            .map(|(idx, cells, point)| {
                let res = sweep_result_cells(point, &budget);
                (idx, cells, res)
            })
            .collect()
    })?;

    let sink: Box<dyn Write> = match &g.out {
        Some(p) => {
            let f = fs::OpenOptions::new().create(true).append(true).open(p)?;
            Box::new(f)
        }
        None => Box::new(io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    if !append {
        w.write_record(&header)?;
    }
    let mut labels_seen = 0u64;
    let mut inconclusive_seen = 0u64;
    for (idx, axis_cells, result_cells) in results {
        if !result_cells[0].is_empty() {
            labels_seen += 1;
            if result_cells[0] == Label::Inconclusive.to_string() {
                inconclusive_seen += 1;
            }
        }
        let mut rec = vec![idx.to_string()];
        rec.extend(axis_cells);
        rec.extend(result_cells);
        w.write_record(&rec)?;
        w.flush()?;
    }
    w.flush()?;
    Ok(if labels_seen > 0 && labels_seen == inconclusive_seen {
        EXIT_INCONCLUSIVE
    } else {
        EXIT_OK
    })
}
