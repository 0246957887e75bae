//! `bz`: oracle queries, Boltzmann sampling, verification and size tuning.
//!
//! Exit codes: 0 success, 2 divergent OGF, 3 invalid specification or
//! automaton, 4 parameter out of range, 1 anything else.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use bz_core::exp_sampler::{ExponentialGenerator, SpecGenerator};
use bz_core::oracle::{self, EgfOracle, EvalResult, Verdict};
use bz_core::ord_transform::{self, Strategy};
use bz_core::rng::RandomSource;
use bz_core::spec::{load_spec, ClassId, ValidatedSpec};
use bz_core::stats::{self, SuiteOptions, Target};
use bz_core::words::{self, Dfa, ShuffleLanguage, WordGenerator};
use bz_core::Error;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "bz", version, about = "Exponential and ordinary Boltzmann samplers")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate generating functions, growth and mean size at x.
    Oracle {
        #[command(flatten)]
        input: SpecInput,
        #[arg(long, allow_negative_numbers = true)]
        x: f64,
        /// Coefficient order for the series routes.
        #[arg(long, default_value_t = oracle::DEFAULT_ORDER)]
        order: usize,
        #[command(flatten)]
        out: Output,
    },
    /// Draw objects as JSON Lines.
    Sample {
        #[command(flatten)]
        input: SpecInput,
        #[command(flatten)]
        draw: DrawArgs,
        /// Resample objects larger than this (conditions the law on n <= ceiling).
        #[arg(long)]
        ceiling: Option<usize>,
        #[command(flatten)]
        out: Output,
    },
    /// Run the verification suite; nonzero exit if a check fails.
    Check {
        #[command(flatten)]
        input: SpecInput,
        #[command(flatten)]
        check: CheckArgs,
        #[command(flatten)]
        out: Output,
    },
    /// Find x whose ordinary mean size is the target.
    Tune {
        #[command(flatten)]
        input: SpecInput,
        #[arg(long, allow_negative_numbers = true)]
        target: f64,
        #[command(flatten)]
        out: Output,
    },
    /// Word languages given by automata (two automata: their shuffle).
    Words {
        #[command(subcommand)]
        cmd: WordsCmd,
    },
}

#[derive(Subcommand)]
enum WordsCmd {
    /// Draw accepted words (or interleavings) as JSON Lines.
    Sample {
        #[command(flatten)]
        input: DfaInput,
        #[command(flatten)]
        draw: DrawArgs,
        #[command(flatten)]
        out: Output,
    },
    /// Exact counts a_0..a_order.
    Count {
        #[command(flatten)]
        input: DfaInput,
        #[arg(long, default_value_t = 16)]
        order: usize,
        #[command(flatten)]
        out: Output,
    },
    /// Run the verification suite on the language.
    Check {
        #[command(flatten)]
        input: DfaInput,
        #[command(flatten)]
        check: CheckArgs,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Args)]
struct SpecInput {
    /// Specification file.
    spec: PathBuf,
    /// Class to use (default: the first defined).
    #[arg(long)]
    class: Option<String>,
}

#[derive(Args)]
struct DfaInput {
    /// Automaton JSON file.
    #[arg(long)]
    dfa: PathBuf,
    /// Second automaton; the language becomes the shuffle of both.
    #[arg(long)]
    shuffle: Option<PathBuf>,
}

#[derive(Args)]
struct DrawArgs {
    #[arg(long, allow_negative_numbers = true)]
    x: f64,
    #[arg(long, value_enum, default_value_t = Mode::Ord)]
    mode: Mode,
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Falls back to BZ_SEED, then to fresh entropy; always echoed.
    #[arg(long, env = "BZ_SEED")]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = StrategyArg::Mixture)]
    strategy: StrategyArg,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, allow_negative_numbers = true)]
    x: f64,
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    #[arg(long, env = "BZ_SEED")]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct Output {
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write here instead of standard output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Mode {
    Exp,
    Ord,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Mixture,
    Invcdf,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Mixture => Strategy::Mixture,
            StrategyArg::Invcdf => Strategy::InverseCdf,
        }
    }
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Format {
    Json,
    Text,
}

enum Failure {
    Core(Error),
    Io(String),
    /// Report already written; only the exit code remains.
    Exit(u8),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

type Run<T = ()> = Result<T, Failure>;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::DivergentOgf { .. } => 2,
        Error::Syntax { .. } | Error::UnknownName { .. } | Error::IllFounded { .. } | Error::InvalidDfa(_) => 3,
        Error::Domain(_) | Error::EgfDivergent { .. } | Error::Unachievable { .. } => 4,
        _ => 1,
    }
}

fn read(path: &Path) -> Run<String> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

/// Run metadata echoed in every document.
struct Meta {
    seed: Option<u64>,
    hash: String,
}

impl Meta {
    fn new(config: Value, inputs: &[&str], seed: Option<u64>) -> Self {
        let mut h = Sha256::new();
        h.update(config.to_string().as_bytes());
        for text in inputs {
            h.update((text.len() as u64).to_le_bytes());
            h.update(text.as_bytes());
        }
        let hash = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Meta { seed, hash }
    }

    fn stamp(&self, mut doc: Map<String, Value>) -> Value {
        doc.insert("seed".into(), json!(self.seed));
        doc.insert("config_hash".into(), json!(self.hash));
        doc.insert("version".into(), json!(VERSION));
        Value::Object(doc)
    }

    fn header(&self) -> String {
        let seed = self.seed.map_or("none".to_string(), |s| s.to_string());
        format!("# seed={seed} config_hash={} version={VERSION}", self.hash)
    }
}

fn writer(out: &Output) -> Run<Box<dyn Write>> {
    Ok(match &out.output {
        Some(p) => Box::new(BufWriter::new(
            fs::File::create(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn obj(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("document literals are objects"),
    }
}

fn eval_json(r: &EvalResult) -> Value {
    serde_json::to_value(r).expect("plain data")
}

fn load_class(input: &SpecInput) -> Run<(String, ValidatedSpec, ClassId)> {
    let text = read(&input.spec)?;
    let spec = load_spec(&text)?;
    let class = spec.resolve(input.class.as_deref())?;
    Ok((text, spec, class))
}

fn check_x(x: f64, positive: bool) -> Run {
    let ok = x.is_finite() && if positive { x > 0.0 } else { x >= 0.0 };
    if !ok {
        let need = if positive { "positive" } else { "nonnegative" };
        return Err(Error::Domain(format!("x must be a finite {need} real, got {x}")).into());
    }
    Ok(())
}

// ---------------------------------------------------------------------------

fn cmd_oracle(input: &SpecInput, x: f64, order: usize, out: &Output) -> Run {
    let (text, spec, class) = load_class(input)?;
    let meta = Meta::new(
        json!({"command": "oracle", "class": spec.name(class), "x": x, "order": order}),
        &[&text],
        None,
    );
    check_x(x, false)?;
    let oracle = EgfOracle::new(spec.clone());
    let egf = oracle.egf_eval(class, x, 1e-13)?;
    let coeffs = oracle::egf_coeffs(&spec, class, order)?;
    let growth = oracle::growth_estimate(&coeffs);

    let mut doc = obj(json!({
        "class": spec.name(class),
        "x": x,
        "egf": eval_json(&egf),
        "growth": growth,
        "coefficients": coeffs.counts().iter().take(16).map(|a| a.to_string()).collect::<Vec<_>>(),
    }));
    let ogf = oracle::ogf_eval_series(&coeffs, &growth, x).and_then(|s| {
        let tol = 1e-10 * s.value.max(1.0);
        let l = oracle::ogf_eval_laplace(|y| Ok(oracle.egf_eval(class, y, 1e-13)?.value), x, tol)?;
        let m = oracle::expected_size_ordinary(&coeffs, &growth, x)?;
        Ok((s, l, m))
    });
    let failure = match &ogf {
        Ok((s, l, m)) => {
            doc.insert("ogf".into(), eval_json(s));
            doc.insert("ogf_laplace".into(), eval_json(l));
            doc.insert("agree".into(), json!(s.agrees_with(l)));
            doc.insert("expected_size".into(), eval_json(m));
            None
        }
        Err(e) => {
            doc.insert("ogf".into(), Value::Null);
            doc.insert("error".into(), json!({"kind": e.kind(), "message": e.to_string()}));
            Some(e)
        }
    };
    let mut w = writer(out)?;
    match out.format {
        Format::Json => writeln!(w, "{}", meta.stamp(doc))?,
        Format::Text => {
            writeln!(w, "{}", meta.header())?;
            writeln!(w, "class {}  x = {x}", spec.name(class))?;
            writeln!(w, "egf  {} ± {:e} ({:?})", egf.value, egf.error, egf.method)?;
            match &ogf {
                Ok((s, l, m)) => {
                    writeln!(w, "ogf  {} ± {:e} (series)", s.value, s.error)?;
                    writeln!(w, "ogf  {} ± {:e} (laplace)", l.value, l.error)?;
                    writeln!(w, "mean size  {} ± {:e}", m.value, m.error)?;
                }
                Err(e) => writeln!(w, "ogf  unavailable: {} ({})", e, e.kind())?,
            }
        }
    }
    w.flush()?;
    match failure {
        Some(e) => {
            eprintln!("bz: {}: {e}", e.kind());
            Err(Failure::Exit(exit_code(e)))
        }
        None => Ok(()),
    }
}

/// Streams `count` draws, one document per line.
fn emit_draws<G: ExponentialGenerator>(
    generator: G,
    draw: &DrawArgs,
    meta: &Meta,
    seed: u64,
    out: &Output,
    render: impl Fn(&G::Object) -> (Value, String),
) -> Run {
    check_x(draw.x, true)?;
    if draw.count == 0 {
        return Err(Error::Domain("count must be at least 1".into()).into());
    }
    let mut w = writer(out)?;
    if out.format == Format::Text {
        writeln!(w, "{}", meta.header())?;
    }
    let line = |w: &mut Box<dyn Write>, i: usize, o: &G::Object, u: Option<f64>| -> Run {
        let (v, t) = render(o);
        match out.format {
            Format::Json => {
                let mut doc = obj(json!({"index": i, "size": G::object_size(o)}));
                if let Some(u) = u {
                    doc.insert("u".into(), json!(u));
                    doc.insert("x_effective".into(), json!(draw.x * u));
                }
                doc.extend(obj(v));
                writeln!(w, "{}", meta.stamp(doc))?;
            }
            Format::Text => match u {
                Some(u) => writeln!(w, "{}\t{}\t{u:.6}\t{t}", i, G::object_size(o))?,
                None => writeln!(w, "{}\t{}\t{t}", i, G::object_size(o))?,
            },
        }
        Ok(())
    };
    match draw.mode {
        Mode::Exp => {
            let mut rng = RandomSource::new(seed);
            for (i, o) in generator.sample_many(draw.x, draw.count, &mut rng)?.iter().enumerate() {
                line(&mut w, i, o, None)?;
            }
        }
        Mode::Ord => {
            let mut s = ord_transform::build_ordinary(generator, draw.x, draw.strategy.into(), RandomSource::new(seed))?;
            for i in 0..draw.count {
                let d = s.sample()?;
                line(&mut w, i, &d.object, Some(d.u))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Exp => "exp",
        Mode::Ord => "ord",
    }
}

fn draw_config(command: &str, draw: &DrawArgs, seed: u64) -> Value {
    json!({
        "command": command,
        "x": draw.x,
        "mode": mode_name(draw.mode),
        "count": draw.count,
        "seed": seed,
        "strategy": Strategy::from(draw.strategy),
    })
}

fn cmd_sample(input: &SpecInput, draw: &DrawArgs, ceiling: Option<usize>, out: &Output) -> Run {
    let (text, spec, class) = load_class(input)?;
    let seed = draw.seed.unwrap_or_else(rand::random);
    let mut config = obj(draw_config("sample", draw, seed));
    config.insert("class".into(), json!(spec.name(class)));
    config.insert("ceiling".into(), json!(ceiling));
    let meta = Meta::new(Value::Object(config), &[&text], Some(seed));
    let g = SpecGenerator::new(spec, class).with_ceiling(ceiling);
    emit_draws(g, draw, &meta, seed, out, |o| {
        let mut v = o.to_json();
        v["term"] = json!(o.term());
        (v, o.term())
    })
}

fn check_exit(report: &stats::Report) -> Run {
    if report.passed() {
        Ok(())
    } else if report.failed_on_divergence_only() {
        Err(Failure::Exit(2))
    } else {
        Err(Failure::Exit(1))
    }
}

fn emit_report(report: &stats::Report, meta: &Meta, out: &Output, x: f64, target: &str) -> Run {
    let mut w = writer(out)?;
    match out.format {
        Format::Json => {
            let mut doc = obj(serde_json::to_value(report).expect("plain data"));
            doc.insert("x".into(), json!(x));
            doc.insert("target".into(), json!(target));
            writeln!(w, "{}", meta.stamp(doc))?;
        }
        Format::Text => {
            writeln!(w, "{}", meta.header())?;
            writeln!(w, "target {target}  x = {x}  trials = {}", report.trials)?;
            for c in &report.checks {
                let status = match c.status {
                    stats::Status::Pass => "PASS",
                    stats::Status::Fail => "FAIL",
                    stats::Status::Skipped => "SKIP",
                };
                writeln!(w, "{status} {}: {}", c.name, c.detail)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn run_check(target: &Target, name: &str, inputs: &[&str], extra: Value, check: &CheckArgs, out: &Output) -> Run {
    check_x(check.x, false)?;
    let seed = check.seed.unwrap_or_else(rand::random);
    let mut config = obj(extra);
    config.insert("x".into(), json!(check.x));
    config.insert("trials".into(), json!(check.trials));
    config.insert("seed".into(), json!(seed));
    config.insert("workers".into(), json!(check.workers));
    let meta = Meta::new(Value::Object(config), inputs, Some(seed));
    let opts = SuiteOptions {
        workers: check.workers,
        ..SuiteOptions::default()
    };
    let report = stats::run_check_suite_with(target, check.x, check.trials, seed, &opts);
    emit_report(&report, &meta, out, check.x, name)?;
    check_exit(&report)
}

fn cmd_check(input: &SpecInput, check: &CheckArgs, out: &Output) -> Run {
    let (text, spec, class) = load_class(input)?;
    let name = spec.name(class).to_string();
    let target = Target::Spec { spec, class };
    run_check(&target, &name, &[&text], json!({"command": "check", "class": name}), check, out)
}

/// Bisection for `E[N](x) = target` on `[0, 0.95 / R]`.
fn cmd_tune(input: &SpecInput, target: f64, out: &Output) -> Run {
    let (text, spec, class) = load_class(input)?;
    let meta = Meta::new(json!({"command": "tune", "class": spec.name(class), "target": target}), &[&text], None);
    if !(target >= 0.0 && target.is_finite()) {
        return Err(Error::Domain(format!("target mean size must be a finite nonnegative real, got {target}")).into());
    }
    let mut coeffs = oracle::egf_coeffs(&spec, class, oracle::DEFAULT_ORDER)?;
    let mut growth = oracle::growth_estimate(&coeffs);
    let r = match growth.verdict {
        Verdict::AtMostExponential(r) => r,
        Verdict::Superexponential => {
            return Err(Error::DivergentOgf {
                x: 0.0,
                detail: "coefficients grow superexponentially; A(x) diverges for every x > 0".into(),
            }
            .into())
        }
        Verdict::Inconclusive => return Err(Error::InconclusiveGrowth("cannot bound the radius".into()).into()),
    };
    let x_max = if r == 0.0 { 1.0 } else { oracle::SAFETY / r };
    // enough coefficients that the mean at the boundary is sharp
    if let Some(n) = growth.order_for_tail(x_max, 1e-12) {
        let n = n.min(ord_transform::N_MAX);
        if n > coeffs.order() {
            coeffs = oracle::egf_coeffs(&spec, class, n)?;
            growth = oracle::growth_estimate(&coeffs);
        }
    }
    let mean = |x: f64| oracle::expected_size_ordinary(&coeffs, &growth, x).map(|m| m.value);
    let lo_mean = mean(0.0).or_else(|_| mean(1e-9 * x_max))?;
    let hi_mean = mean(x_max)?;
    if target > hi_mean * 1.01 || target < lo_mean * 0.99 - 1e-12 {
        return Err(Error::Unachievable {
            target,
            max: hi_mean,
        }
        .into());
    }
    let (mut lo, mut hi) = (0.0, x_max);
    let mut x = if target <= lo_mean { 0.0 } else { x_max };
    if target > lo_mean && target < hi_mean {
        for _ in 0..200 {
            x = 0.5 * (lo + hi);
            let m = mean(x)?;
            if (m - target).abs() <= 1e-6 * target.max(1e-300) {
                break;
            }
            if m < target {
                lo = x;
            } else {
                hi = x;
            }
        }
    }
    let achieved = mean(x)?;
    let doc = obj(json!({
        "class": spec.name(class),
        "target": target,
        "x": x,
        "expected_size": achieved,
        "x_max": x_max,
        "max_mean": hi_mean,
    }));
    let mut w = writer(out)?;
    match out.format {
        Format::Json => writeln!(w, "{}", meta.stamp(doc))?,
        Format::Text => {
            writeln!(w, "{}", meta.header())?;
            writeln!(w, "x = {x}  (mean size {achieved}, target {target}; boundary x = {x_max}, mean {hi_mean})")?;
        }
    }
    w.flush()?;
    Ok(())
}

enum Language {
    Single(Dfa),
    Shuffle(Dfa, Dfa),
}

fn load_language(input: &DfaInput) -> Run<(Vec<String>, Language)> {
    let a = read(&input.dfa)?;
    let left = Dfa::from_json(&a)?;
    Ok(match &input.shuffle {
        None => (vec![a], Language::Single(left)),
        Some(p) => {
            let b = read(p)?;
            let right = Dfa::from_json(&b)?;
            (vec![a, b], Language::Shuffle(left, right))
        }
    })
}

fn cmd_words_sample(input: &DfaInput, draw: &DrawArgs, out: &Output) -> Run {
    let (texts, lang) = load_language(input)?;
    let seed = draw.seed.unwrap_or_else(rand::random);
    let mut config = obj(draw_config("words sample", draw, seed));
    config.insert("shuffle".into(), json!(input.shuffle.is_some()));
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let meta = Meta::new(Value::Object(config), &refs, Some(seed));
    match lang {
        Language::Single(d) => emit_draws(WordGenerator::new(d), draw, &meta, seed, out, |o| (o.to_json(), o.to_string())),
        Language::Shuffle(l, r) => emit_draws(ShuffleLanguage::new(l, r), draw, &meta, seed, out, |o| {
            let v = o.to_json();
            let t = format!("{} ({} + {}, {})", v["word"].as_str().unwrap_or(""), o.left, o.right, v["pattern"].as_str().unwrap_or(""));
            (v, t)
        }),
    }
}

fn cmd_words_count(input: &DfaInput, order: usize, out: &Output) -> Run {
    let (texts, lang) = load_language(input)?;
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let meta = Meta::new(
        json!({"command": "words count", "order": order, "shuffle": input.shuffle.is_some()}),
        &refs,
        None,
    );
    let coeffs = match lang {
        Language::Single(d) => words::count_words(&d, order),
        Language::Shuffle(l, r) => ShuffleLanguage::new(l, r).coefficients(order)?,
    };
    let counts: Vec<String> = coeffs.counts().iter().map(|a| a.to_string()).collect();
    let mut w = writer(out)?;
    match out.format {
        Format::Json => writeln!(w, "{}", meta.stamp(obj(json!({"order": order, "counts": counts}))))?,
        Format::Text => {
            writeln!(w, "{}", meta.header())?;
            for (n, a) in counts.iter().enumerate() {
                writeln!(w, "{n}\t{a}")?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_words_check(input: &DfaInput, check: &CheckArgs, out: &Output) -> Run {
    let (texts, lang) = load_language(input)?;
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let (target, name) = match lang {
        Language::Single(d) => (Target::Words(d), "words"),
        Language::Shuffle(l, r) => (Target::Shuffle(l, r), "shuffle"),
    };
    run_check(&target, name, &refs, json!({"command": "words check", "language": name}), check, out)
}

fn dispatch(cli: &Cli) -> Run {
    match &cli.cmd {
        Cmd::Oracle { input, x, order, out } => cmd_oracle(input, *x, *order, out),
        Cmd::Sample {
            input,
            draw,
            ceiling,
            out,
        } => cmd_sample(input, draw, *ceiling, out),
        Cmd::Check { input, check, out } => cmd_check(input, check, out),
        Cmd::Tune { input, target, out } => cmd_tune(input, *target, out),
        Cmd::Words { cmd } => match cmd {
            WordsCmd::Sample { input, draw, out } => cmd_words_sample(input, draw, out),
            WordsCmd::Count { input, order, out } => cmd_words_count(input, *order, out),
            WordsCmd::Check { input, check, out } => cmd_words_check(input, check, out),
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors are invalid parameters
            return ExitCode::from(if e.use_stderr() { 4 } else { 0 });
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Core(e)) => {
            eprintln!("bz: {}: {e}", e.kind());
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Io(msg)) => {
            eprintln!("bz: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Exit(code)) => ExitCode::from(code),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inputs_are_length_prefixed() {
        let a = Meta::new(json!({}), &["ab", "c"], None);
        let b = Meta::new(json!({}), &["a", "bc"], None);
        assert_ne!(a.hash, b.hash);
        assert_eq!(a.hash, Meta::new(json!({}), &["ab", "c"], Some(3)).hash);
    }

    #[test]
    fn stamp_and_header() {
        let m = Meta::new(json!({"x": 0.5}), &[], Some(11));
        let doc = m.stamp(obj(json!({"size": 2})));
        assert_eq!(doc["seed"], 11);
        assert_eq!(doc["size"], 2);
        assert_eq!(doc["version"], VERSION);
        assert!(m.header().starts_with("# seed=11 config_hash="));
        assert!(Meta::new(json!({}), &[], None).header().starts_with("# seed=none "));
    }

    #[test]
    fn error_classes_map_to_exit_codes() {
        assert_eq!(exit_code(&Error::DivergentOgf { x: 0.5, detail: String::new() }), 2);
        assert_eq!(exit_code(&Error::InvalidDfa("partial".into())), 3);
        assert_eq!(exit_code(&Error::Domain("x < 0".into())), 4);
        assert_eq!(exit_code(&Error::EmptyLanguage), 1);
    }

    #[test]
    fn command_line_shapes() {
        let cli = Cli::try_parse_from(["bz", "sample", "a.bz", "--x", "0.3", "--strategy", "invcdf", "--seed", "2"]).unwrap();
        match cli.cmd {
            Cmd::Sample { draw, .. } => {
                assert_eq!(draw.seed, Some(2));
                assert_eq!(Strategy::from(draw.strategy), Strategy::InverseCdf);
            }
            _ => panic!("parsed the wrong subcommand"),
        }
        assert!(Cli::try_parse_from(["bz", "sample", "a.bz"]).is_err());
    }
}
