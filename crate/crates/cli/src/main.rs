//! Command-line workbench: load combinatorially presented systems, run the
//! partition/itinerary/spectral analyses, and emit reports with re-checkable
//! certificates.
//!
//! Exit codes: 0 — analysis completed (verdicts are data, not exit codes);
//! 1 — input error; 2 — internal invariant violation (a certificate failed
//! its own re-check).

mod report;

use clap::{Parser, Subcommand};
use report::Report;
use serde::Deserialize;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use zerodim::cech::{
    self, coboundary_solve_level, coboundary_solve_shift, recheck_certificate, CoboundaryOutcome,
    EigenvalueCertificate, LevelFunction,
};
use zerodim::dynamics::{FiniteSystem, StateSet};
use zerodim::expansion::{self, Lambda};
use zerodim::inverse_limit::InverseSystem;
use zerodim::partition::{self, EpsilonOutcome, PartitionError, SystemHandle};
use zerodim::scalar::{parse_complex, LambdaValue};
use zerodim::shift::{word_string, ClopenSet, ClopenSetDoc, ItineraryReport, ShiftSpace};

#[derive(Parser)]
#[command(
    name = "zerodim",
    version,
    about = "Dynamics on totally disconnected spaces, presented combinatorially"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a system document and run the full analysis pipeline.
    Analyze {
        /// System document (JSON: {"kind", "name", "payload"}).
        file: PathBuf,
        /// Comma-separated ε values for the dynamical ε-partition search.
        #[arg(long, value_delimiter = ',')]
        eps: Vec<f64>,
        /// Clopen set (shift kind: ClopenSet JSON) for a binary itinerary report.
        #[arg(long)]
        set: Option<String>,
        /// Largest cylinder length scanned by the eigenvalue certificate.
        #[arg(long, default_value_t = 8)]
        max_res: usize,
        /// Largest order tried by root-of-unity checks.
        #[arg(long, default_value_t = 64)]
        s_max: usize,
        /// Write the full JSON report here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Sparse-expansion arithmetic: the r(λ) threshold and the brute-force
    /// separation verifier.
    Expansion {
        #[command(subcommand)]
        action: ExpansionAction,
    },
    /// Solvability of ψ∘f − λψ = χ_V across resolutions.
    Coboundary {
        file: PathBuf,
        /// λ as `a+bi` (integers, fractions, or decimals).
        #[arg(long)]
        lambda: String,
        /// The set V: StateSet JSON for finite/tower kinds, ClopenSet JSON
        /// for the shift kind.
        #[arg(long)]
        set: String,
        /// Highest cylinder resolution for shift solves.
        #[arg(long, default_value_t = 8)]
        max_res: usize,
        /// Tower level to solve at (default: deepest).
        #[arg(long)]
        level: Option<usize>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Search for a dynamical ε-partition.
    Partition {
        file: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Emit the odometer (adding machine) tower over the given bases.
    Odometer {
        /// Comma-separated digit bases, fastest first (e.g. 2,3,2).
        #[arg(long, value_delimiter = ',', required = true)]
        bases: Vec<u64>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ExpansionAction {
    /// Least r with 1/a + 2/a^r < 1, a = max(|λ|, 1/|λ|).
    R {
        #[arg(long)]
        lambda: String,
    },
    /// Enumerate S_r words of a given length and verify pairwise separation.
    Verify {
        #[arg(long)]
        r: usize,
        #[arg(long)]
        lambda: String,
        #[arg(long)]
        len: usize,
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

enum CliError {
    Input(String),
    Internal(String),
}

impl CliError {
    fn input(err: impl ToString) -> Self {
        CliError::Input(err.to_string())
    }
}

impl From<PartitionError> for CliError {
    fn from(e: PartitionError) -> Self {
        CliError::Input(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(msg)) => {
            eprintln!("input error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("internal invariant violation: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze {
            file,
            eps,
            set,
            max_res,
            s_max,
            json,
        } => cmd_analyze(&file, &eps, set.as_deref(), max_res, s_max, json.as_deref()),
        Command::Expansion { action } => cmd_expansion(action),
        Command::Coboundary {
            file,
            lambda,
            set,
            max_res,
            level,
            json,
        } => cmd_coboundary(&file, &lambda, &set, max_res, level, json.as_deref()),
        Command::Partition { file, eps, json } => cmd_partition(&file, eps, json.as_deref()),
        Command::Odometer { bases, json } => cmd_odometer(&bases, json.as_deref()),
    }
}

/// JSON envelope for system inputs.
#[derive(Debug, Deserialize)]
struct SystemDocument {
    kind: String,
    #[serde(default)]
    name: String,
    payload: Value,
}

enum LoadedSystem {
    Finite(FiniteSystem),
    Tower(InverseSystem),
    Shift(ShiftSpace),
}

impl LoadedSystem {
    fn kind(&self) -> &'static str {
        match self {
            LoadedSystem::Finite(_) => "finite",
            LoadedSystem::Tower(_) => "inverse_limit",
            LoadedSystem::Shift(_) => "shift",
        }
    }

    fn handle(&self) -> SystemHandle<'_> {
        match self {
            LoadedSystem::Finite(f) => SystemHandle::Finite(f),
            LoadedSystem::Tower(t) => SystemHandle::Tower(t),
            LoadedSystem::Shift(s) => SystemHandle::Shift(s),
        }
    }
}

fn load_system(path: &PathBuf) -> Result<(LoadedSystem, String, Vec<u8>), CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let doc: SystemDocument = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let sys = match doc.kind.as_str() {
        "finite" => LoadedSystem::Finite(
            serde_json::from_value(doc.payload).map_err(CliError::input)?,
        ),
        "inverse_limit" => {
            let tower: InverseSystem =
                serde_json::from_value(doc.payload).map_err(CliError::input)?;
            let v = tower.validate();
            if let Some(violation) = v.commutation {
                return Err(CliError::Input(format!(
                    "tower diagram does not commute at level {}, state {}",
                    violation.level, violation.state
                )));
            }
            LoadedSystem::Tower(tower)
        }
        "shift" => LoadedSystem::Shift(
            serde_json::from_value(doc.payload).map_err(CliError::input)?,
        ),
        other => {
            return Err(CliError::Input(format!(
                "unknown kind `{other}` (expected finite | inverse_limit | shift)"
            )))
        }
    };
    Ok((sys, doc.name, bytes))
}

fn parse_lambda(s: &str) -> Result<LambdaValue, CliError> {
    Ok(LambdaValue::Exact(
        parse_complex(s).map_err(CliError::input)?,
    ))
}

fn emit(report: &Report, json: Option<&std::path::Path>) -> Result<(), CliError> {
    if let Some(path) = json {
        std::fs::write(path, report.to_json())
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
    }
    for w in &report.warnings {
        println!("warning: {w}");
    }
    Ok(())
}

fn epsilon_results(
    handle: &SystemHandle<'_>,
    eps_list: &[f64],
    report: &mut Report,
) -> Result<Vec<Value>, CliError> {
    let mut out = Vec::new();
    for &eps in eps_list {
        if eps <= 0.0 || eps.is_nan() {
            return Err(CliError::Input(format!("ε must be positive, got {eps}")));
        }
        let entry = match partition::find_dynamical_epsilon_partition(handle, eps) {
            Ok(EpsilonOutcome::Partition(p)) => {
                json!({"eps": eps, "status": "partition", "blocks": p.block_count(), "partition": p})
            }
            Ok(EpsilonOutcome::Nonexistence(cert)) => {
                report.warn(format!(
                    "ε = {eps}: no dynamical ε-partition exists (branching itineraries at cylinder length {})",
                    cert.cylinder_length
                ));
                json!({"eps": eps, "status": "nonexistence", "certificate": cert})
            }
            Err(PartitionError::DepthExceeded { depth, needed }) => {
                report.warn(format!(
                    "ε = {eps}: tower depth {depth} below the level {needed} needed — not a nonexistence claim"
                ));
                json!({"eps": eps, "status": "depth_exceeded", "depth": depth, "needed_level": needed})
            }
            Err(e) => return Err(e.into()),
        };
        out.push(entry);
    }
    Ok(out)
}

fn certificate_value(
    handle: &SystemHandle<'_>,
    cert: &EigenvalueCertificate,
) -> Result<Value, CliError> {
    let ok = recheck_certificate(handle, cert).map_err(CliError::input)?;
    if !ok {
        return Err(CliError::Internal(
            "eigenvalue certificate failed its re-check".into(),
        ));
    }
    let mut v = serde_json::to_value(cert).expect("certificate serializes");
    v.as_object_mut()
        .expect("object")
        .insert("rechecked".into(), Value::Bool(true));
    Ok(v)
}

fn itinerary_value(report: &ItineraryReport) -> Value {
    match report {
        ItineraryReport::Finite(its) => json!({
            "kind": "FINITE",
            "itineraries": its
                .iter()
                .map(|(pre, per)| json!({"preperiod": pre, "period": per}))
                .collect::<Vec<_>>(),
        }),
        ItineraryReport::Infinite(w) => json!({
            "kind": "INFINITE",
            "witness": w,
        }),
    }
}

fn function_value(f: &LevelFunction) -> Value {
    match &f.keys {
        Some(keys) => {
            let map: BTreeMap<String, String> = keys
                .iter()
                .zip(f.values.iter())
                .map(|(w, v)| (word_string(w), v.to_string()))
                .collect();
            json!({"context": f.context, "values": map})
        }
        None => {
            let vals: Vec<String> = f.values.iter().map(|v| v.to_string()).collect();
            json!({"context": f.context, "values": vals})
        }
    }
}

fn cmd_analyze(
    file: &PathBuf,
    eps: &[f64],
    set: Option<&str>,
    max_res: usize,
    s_max: usize,
    json: Option<&std::path::Path>,
) -> Result<(), CliError> {
    let (sys, name, bytes) = load_system(file)?;
    if set.is_some() && !matches!(sys, LoadedSystem::Shift(_)) {
        return Err(CliError::Input(
            "--set itinerary reports apply to shift documents".into(),
        ));
    }
    let mut report = Report::new("analyze")
        .with_file(&file.display().to_string(), &bytes)
        .flag("max_res", max_res)
        .flag("s_max", s_max);
    if !eps.is_empty() {
        report = report.flag(
            "eps",
            eps.iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
    }
    let handle = sys.handle();
    let mut results = serde_json::Map::new();
    results.insert("kind".into(), json!(sys.kind()));
    results.insert("name".into(), json!(name));

    match &sys {
        LoadedSystem::Finite(f) => {
            let sp = cech::spectrum(f);
            let verified = sp.roots.iter().all(|r| {
                matches!(
                    cech::root_of_unity_check(&LambdaValue::Approx(r.to_c64()), s_max),
                    Ok(cech::RootCheck::Root { order }) if r.order % order == 0
                )
            });
            if !verified {
                return Err(CliError::Internal(
                    "structural spectrum failed the root-of-unity re-check".into(),
                ));
            }
            results.insert("size".into(), json!(f.size()));
            results.insert(
                "cycle_lengths".into(),
                json!(f.cycles().iter().map(Vec::len).collect::<Vec<_>>()),
            );
            results.insert("eventual_image".into(), json!(f.eventual_image()));
            results.insert("spectrum".into(), json!(sp));
            results.insert("spectrum_verified".into(), json!(true));
            let cert = cech::eigenvalue_certificate_finite(f).map_err(CliError::input)?;
            results.insert("certificate".into(), certificate_value(&handle, &cert)?);
            println!(
                "finite system `{name}`: {} states, cycle lengths {:?}, certificate NONE",
                f.size(),
                f.cycles().iter().map(Vec::len).collect::<Vec<_>>()
            );
        }
        LoadedSystem::Tower(t) => {
            let validation = t.validate();
            if !validation.non_surjective_bond_targets.is_empty() {
                report.warn(format!(
                    "bonds into levels {:?} are not surjective; those levels are not genuine quotients",
                    validation.non_surjective_bond_targets
                ));
            }
            results.insert("depth".into(), json!(t.depth()));
            results.insert(
                "level_sizes".into(),
                json!(t.levels().iter().map(FiniteSystem::size).collect::<Vec<_>>()),
            );
            results.insert("validation".into(), json!(validation));
            let spectra: Vec<Value> = t
                .levels()
                .iter()
                .enumerate()
                .map(|(i, f)| json!({"level": i + 1, "spectrum": cech::spectrum(f)}))
                .collect();
            results.insert("level_spectra".into(), Value::Array(spectra));
            let deepest = t.level(t.depth()).map_err(CliError::input)?;
            report.warn(format!(
                "ω-limit kinds are verdicts at depth {} (the tower is a truncation)",
                t.depth()
            ));
            let mut omegas = Vec::new();
            for s in 0..deepest.size().min(4) {
                let thread = t.thread_through(s).map_err(CliError::input)?;
                let class = t.omega_limit_class(&thread).map_err(CliError::input)?;
                omegas.push(json!({
                    "deepest_state": s,
                    "kind": class.kind,
                    "periods": class.periods,
                }));
            }
            results.insert("omega_classes".into(), Value::Array(omegas));
            let cert = cech::eigenvalue_certificate_tower(t).map_err(CliError::input)?;
            results.insert("certificate".into(), certificate_value(&handle, &cert)?);
            println!(
                "tower `{name}`: depth {}, level sizes {:?}, certificate NONE",
                t.depth(),
                t.levels().iter().map(FiniteSystem::size).collect::<Vec<_>>()
            );
        }
        LoadedSystem::Shift(s) => {
            results.insert("alphabet".into(), json!(s.alphabet()));
            results.insert("empty".into(), json!(s.is_empty()));
            if s.is_empty() {
                report.warn("the trimmed shift space is empty; skipping the analyses");
            } else {
                let entropy = s.entropy().map_err(CliError::input)?;
                results.insert("entropy".into(), json!(entropy));
                let cert =
                    cech::eigenvalue_certificate_shift(s, max_res).map_err(CliError::input)?;
                let verdict = cert.verdict;
                results.insert("certificate".into(), certificate_value(&handle, &cert)?);
                if let Some(raw) = set {
                    let doc: ClopenSetDoc =
                        serde_json::from_str(raw).map_err(CliError::input)?;
                    let u = ClopenSet::from_doc(s, &doc).map_err(CliError::input)?;
                    let rep = s.binary_itinerary_finiteness(&u).map_err(CliError::input)?;
                    results.insert("set_itineraries".into(), itinerary_value(&rep));
                }
                println!(
                    "shift `{name}`: alphabet {}, entropy {entropy:.10}, certificate {verdict:?}",
                    s.alphabet(),
                );
            }
        }
    }
    let empty_shift = matches!(&sys, LoadedSystem::Shift(s) if s.is_empty());
    if !eps.is_empty() && !empty_shift {
        let entries = epsilon_results(&handle, eps, &mut report)?;
        for e in &entries {
            println!(
                "ε = {}: {}",
                e["eps"],
                e["status"].as_str().unwrap_or("unknown")
            );
        }
        results.insert("epsilon_partitions".into(), Value::Array(entries));
    }
    report.results = Value::Object(results);
    emit(&report, json)
}

fn cmd_expansion(action: ExpansionAction) -> Result<(), CliError> {
    match action {
        ExpansionAction::R { lambda } => {
            let lam = Lambda::new(parse_lambda(&lambda)?).map_err(CliError::input)?;
            let r = expansion::r_of_lambda(&lam);
            let mut report = Report::new("expansion r").flag("lambda", &lambda);
            report.results = json!({"r": r, "effective_modulus": lam.effective_modulus()});
            println!("r(λ) = {r}");
            emit(&report, None)
        }
        ExpansionAction::Verify {
            r,
            lambda,
            len,
            json,
        } => {
            let lam = Lambda::new(parse_lambda(&lambda)?).map_err(CliError::input)?;
            let rep = expansion::uniqueness_bruteforce(r, &lam, len).map_err(CliError::input)?;
            let mut report = Report::new("expansion verify")
                .flag("r", r)
                .flag("lambda", &lambda)
                .flag("len", len);
            println!(
                "S_{r} words of length {len}: {} ({} pairs) — min_gap {:.6e} vs 2·tail {:.6e}: {:?}",
                rep.word_count,
                rep.pairs_checked,
                rep.min_gap,
                2.0 * rep.tail_bound,
                rep.verdict
            );
            report.results = serde_json::to_value(&rep).expect("report serializes");
            emit(&report, json.as_deref())
        }
    }
}

fn cmd_coboundary(
    file: &PathBuf,
    lambda: &str,
    set: &str,
    max_res: usize,
    level: Option<usize>,
    json: Option<&std::path::Path>,
) -> Result<(), CliError> {
    let (sys, name, bytes) = load_system(file)?;
    let lam = parse_lambda(lambda)?;
    if lam.is_zero() {
        return Err(CliError::Input(
            "λ = 0 is excluded by the coboundary hypothesis".into(),
        ));
    }
    let mut report = Report::new("coboundary")
        .with_file(&file.display().to_string(), &bytes)
        .flag("lambda", lambda)
        .flag("set", set)
        .flag("max_res", max_res);
    let mut results = serde_json::Map::new();
    results.insert("kind".into(), json!(sys.kind()));
    results.insert("name".into(), json!(name));

    match &sys {
        LoadedSystem::Finite(f) => {
            let v: StateSet = serde_json::from_str(set).map_err(CliError::input)?;
            let out = coboundary_solve_level(f, &lam, &v).map_err(CliError::input)?;
            results.insert("outcome".into(), outcome_value(&out));
            print_outcome("level 1", &out);
        }
        LoadedSystem::Tower(t) => {
            let n = level.unwrap_or(t.depth());
            let f = t.level(n).map_err(CliError::input)?;
            let v: StateSet = serde_json::from_str(set).map_err(CliError::input)?;
            let out = coboundary_solve_level(f, &lam, &v).map_err(CliError::input)?;
            results.insert("level".into(), json!(n));
            results.insert("outcome".into(), outcome_value(&out));
            print_outcome(&format!("level {n}"), &out);
        }
        LoadedSystem::Shift(s) => {
            let doc: ClopenSetDoc = serde_json::from_str(set).map_err(CliError::input)?;
            let v = ClopenSet::from_doc(s, &doc).map_err(CliError::input)?;
            let mut table = Vec::new();
            let mut all_infeasible = true;
            for m in v.length()..=max_res.max(v.length()) {
                let out = coboundary_solve_shift(s, &lam, &v, m).map_err(CliError::input)?;
                all_infeasible &= !out.is_solution();
                print_outcome(&format!("resolution {m}"), &out);
                table.push(json!({"resolution": m, "outcome": outcome_value(&out)}));
            }
            results.insert("resolutions".into(), Value::Array(table));
            // An unbroken infeasible streak is explained by the itinerary
            // structure of the same set.
            let itineraries = s.binary_itinerary_finiteness(&v).map_err(CliError::input)?;
            if all_infeasible && !itineraries.is_finite() {
                report.warn(
                    "infeasible at every tested resolution; consistent with the infinite binary itinerary report for this set",
                );
            }
            results.insert("set_itineraries".into(), itinerary_value(&itineraries));
        }
    }
    report.results = Value::Object(results);
    emit(&report, json)
}

fn outcome_value(out: &CoboundaryOutcome) -> Value {
    match out {
        CoboundaryOutcome::Solution(f) => json!({"status": "solution", "psi": function_value(f)}),
        CoboundaryOutcome::Infeasible(w) => json!({"status": "infeasible", "witness": w}),
    }
}

fn print_outcome(label: &str, out: &CoboundaryOutcome) {
    match out {
        CoboundaryOutcome::Solution(f) => {
            let shown: Vec<String> = f.values.iter().take(8).map(|v| v.to_string()).collect();
            println!(
                "{label}: solution ψ = [{}{}]",
                shown.join(", "),
                if f.values.len() > 8 { ", …" } else { "" }
            );
        }
        CoboundaryOutcome::Infeasible(w) => {
            println!("{label}: INFEASIBLE ({})", w.description);
        }
    }
}

fn cmd_partition(
    file: &PathBuf,
    eps: f64,
    json: Option<&std::path::Path>,
) -> Result<(), CliError> {
    let (sys, name, bytes) = load_system(file)?;
    let mut report = Report::new("partition")
        .with_file(&file.display().to_string(), &bytes)
        .flag("eps", eps);
    if matches!(&sys, LoadedSystem::Shift(s) if s.is_empty()) {
        report.warn("the trimmed shift space is empty; nothing to partition");
        report.results = json!({"kind": sys.kind(), "name": name, "empty": true});
        println!("`{name}`: empty space");
        return emit(&report, json);
    }
    let handle = sys.handle();
    let entries = epsilon_results(&handle, &[eps], &mut report)?;
    println!(
        "`{name}` at ε = {eps}: {}",
        entries[0]["status"].as_str().unwrap_or("unknown")
    );
    report.results = json!({"kind": sys.kind(), "name": name, "epsilon_partitions": entries});
    emit(&report, json)
}

fn cmd_odometer(bases: &[u64], json: Option<&std::path::Path>) -> Result<(), CliError> {
    let odo = InverseSystem::odometer(bases).map_err(CliError::input)?;
    let mut report = Report::new("odometer").flag(
        "bases",
        bases
            .iter()
            .map(|b| b.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    let doc = json!({
        "kind": "inverse_limit",
        "name": format!(
            "odometer({})",
            bases.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(",")
        ),
        "payload": odo,
    });
    report.results = doc.clone();
    println!("{}", serde_json::to_string_pretty(&doc).expect("serializes"));
    emit(&report, json)
}
