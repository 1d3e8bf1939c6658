//! Command-line front end for the `dmtl` engine.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use clap::{Parser, Subcommand, ValueEnum};
use dmtl::engine::{dred_update, materialise, rematerialise, EngineError, UpdateReport};
use dmtl::oracle::pointwise_oracle;
use dmtl::periodic::{difference_witness, PeriodicMaterialisation};
use dmtl::syntax::{parse_dataset, parse_fact, parse_number, parse_program, Program};
use dmtl::{FactStore, Interval};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_BUDGET: i32 = 2;
pub const EXIT_NOT_ENTAILED: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Parser, Debug)]
#[command(name = "dmtl", version, about = "Periodic materialisation and incremental maintenance for metric temporal Datalog")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Materialise a program over a dataset into a `.pmat` file.
    Materialize {
        #[arg(long)]
        program: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output file; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply a deletion and an insertion to an existing materialisation.
    Update {
        #[arg(long)]
        program: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        mat: PathBuf,
        #[arg(long)]
        remove: Option<PathBuf>,
        #[arg(long)]
        add: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write a stats record to the file, or to stdout without a value.
        #[arg(long, num_args = 0..=1)]
        stats: Option<Option<PathBuf>>,
        /// Write the updated dataset here.
        #[arg(long)]
        data_out: Option<PathBuf>,
        /// Write the overdeleted, rederived and added stores into this directory.
        #[arg(long)]
        stages: Option<PathBuf>,
    },
    /// Exit 0 iff two `.pmat` files have the same unfolding.
    Diff { a: PathBuf, b: PathBuf },
    /// Exit 0 if the materialisation entails the fact, 3 if not.
    Entail {
        #[arg(long)]
        mat: PathBuf,
        fact: String,
    },
    /// Naive fixpoint restricted to a window, printed as a dataset.
    Oracle {
        #[arg(long)]
        program: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, num_args = 2, value_names = ["FROM", "TO"], allow_hyphen_values = true, required = true)]
        window: Vec<String>,
        #[arg(long, default_value_t = 10_000)]
        rounds: usize,
    },
    /// Time updates on a generated scenario.
    Bench {
        #[arg(long, value_enum, default_value_t = Scenario::Example1)]
        scenario: Scenario,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value_t = Mode::Dred)]
        mode: Mode,
        #[arg(long, default_value_t = 1)]
        repeat: usize,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    Example1,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Dred,
    Remat,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Dred => "dred",
            Mode::Remat => "remat",
        })
    }
}

/// One run, rendered as a space-separated `key=value` line.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsRecord {
    pub scenario: String,
    pub mode: String,
    pub n: usize,
    pub overdelete_ms: f64,
    pub rederive_ms: f64,
    pub insert_ms: f64,
    pub total_ms: f64,
    pub d: usize,
    pub r: usize,
    pub a: usize,
    pub rounds_d: usize,
    pub rounds_r: usize,
    pub rounds_a: usize,
    pub core_facts: usize,
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

impl StatsRecord {
    pub fn from_report(scenario: &str, n: usize, report: &UpdateReport, core_facts: usize) -> Self {
        StatsRecord {
            scenario: scenario.to_string(),
            mode: Mode::Dred.to_string(),
            n,
            overdelete_ms: ms(report.overdelete.duration),
            rederive_ms: ms(report.rederive.duration),
            insert_ms: ms(report.insert.duration),
            total_ms: ms(report.total_duration()),
            d: report.d_count(),
            r: report.r_count(),
            a: report.a_count(),
            rounds_d: report.overdelete.rounds,
            rounds_r: report.rederive.rounds,
            rounds_a: report.insert.rounds,
            core_facts,
        }
    }

    pub fn remat(scenario: &str, n: usize, elapsed: Duration, core_facts: usize) -> Self {
        StatsRecord {
            scenario: scenario.to_string(),
            mode: Mode::Remat.to_string(),
            n,
            overdelete_ms: 0.0,
            rederive_ms: 0.0,
            insert_ms: 0.0,
            total_ms: ms(elapsed),
            d: 0,
            r: 0,
            a: 0,
            rounds_d: 0,
            rounds_r: 0,
            rounds_a: 0,
            core_facts,
        }
    }
}

impl fmt::Display for StatsRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "scenario={} mode={} n={} overdelete_ms={:.3} rederive_ms={:.3} insert_ms={:.3} total_ms={:.3} \
             D={} R={} A={} rounds_D={} rounds_R={} rounds_A={} core_facts={}",
            self.scenario,
            self.mode,
            self.n,
            self.overdelete_ms,
            self.rederive_ms,
            self.insert_ms,
            self.total_ms,
            self.d,
            self.r,
            self.a,
            self.rounds_d,
            self.rounds_r,
            self.rounds_a,
            self.core_facts
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StatsParseError(pub String);

impl fmt::Display for StatsParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "bad stats record: {}", self.0)
    }
}

impl std::error::Error for StatsParseError {}

impl FromStr for StatsRecord {
    type Err = StatsParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut map = std::collections::HashMap::new();
        for kv in s.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| StatsParseError(kv.to_string()))?;
            map.insert(k, v);
        }
        let get = |k: &str| map.get(k).copied().ok_or_else(|| StatsParseError(format!("missing {k}")));
        let num = |k: &str| -> Result<usize, StatsParseError> {
            get(k)?.parse().map_err(|_| StatsParseError(format!("bad {k}")))
        };
        let float = |k: &str| -> Result<f64, StatsParseError> {
            get(k)?.parse().map_err(|_| StatsParseError(format!("bad {k}")))
        };
        Ok(StatsRecord {
            scenario: get("scenario")?.to_string(),
            mode: get("mode")?.to_string(),
            n: num("n")?,
            overdelete_ms: float("overdelete_ms")?,
            rederive_ms: float("rederive_ms")?,
            insert_ms: float("insert_ms")?,
            total_ms: float("total_ms")?,
            d: num("D")?,
            r: num("R")?,
            a: num("A")?,
            rounds_d: num("rounds_D")?,
            rounds_r: num("rounds_R")?,
            rounds_a: num("rounds_A")?,
            core_facts: num("core_facts")?,
        })
    }
}

/// The rule of the scaling scenario.
pub const EXAMPLE1_RULE: &str = "BOXPLUS[0,1] R(?x) :- BOXMINUS[9,10] R(?x)";

/// `{R(a_i)@[0,1] : 0 < i < n}`, plus the deletion `R(a_1)@[0,1]` and the insertion `R(a_n)@[0,1]`.
pub fn example1_family(n: usize) -> (Program, FactStore, FactStore, FactStore) {
    let p = parse_program(EXAMPLE1_RULE).expect("fixed rule parses");
    let fact = |i: usize| parse_fact(&format!("R(a{i})@[0,1]")).expect("generated fact parses");
    let e = FactStore::from_facts((1..n).map(fact)).expect("single arity");
    let minus = FactStore::from_facts([fact(1)]).expect("single arity");
    let plus = FactStore::from_facts([fact(n)]).expect("single arity");
    (p, e, minus, plus)
}

enum Failure {
    Exit(i32, String),
}

type Outcome = Result<i32, Failure>;

fn fail(msg: impl fmt::Display) -> Failure {
    Failure::Exit(EXIT_FAIL, msg.to_string())
}

fn budget(e: EngineError) -> Failure {
    Failure::Exit(EXIT_BUDGET, e.to_string())
}

pub fn load_program(path: &Path) -> Result<Program, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    parse_program(&text).map_err(|e| format!("{}:{e}", path.display()))
}

pub fn load_dataset(path: &Path) -> Result<FactStore, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let facts = parse_dataset(&text).map_err(|e| format!("{}:{e}", path.display()))?;
    FactStore::from_facts(facts).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn load_pmat(path: &Path) -> Result<PeriodicMaterialisation, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    PeriodicMaterialisation::parse(&text).map_err(|e| format!("{}:{e}", path.display()))
}

fn write_to(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| fail(format!("{}: {e}", p.display()))),
        None => out.write_all(text.as_bytes()).map_err(fail),
    }
}

/// Parses `args` (including the program name) and runs the command; returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() { write!(err, "{e}") } else { write!(out, "{e}") };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(Failure::Exit(code, msg)) => {
            let _ = writeln!(err, "dmtl: {msg}");
            code
        }
    }
}

fn execute(cmd: Command, out: &mut dyn Write) -> Outcome {
    match cmd {
        Command::Materialize { program, data, out: path } => {
            let p = load_program(&program).map_err(fail)?;
            let e = load_dataset(&data).map_err(fail)?;
            let m = materialise(&p, &e).map_err(budget)?;
            write_to(path.as_deref(), &m.to_string(), out)?;
            Ok(EXIT_OK)
        }
        Command::Update { program, data, mat, remove, add, out: path, stats, data_out, stages } => {
            let p = load_program(&program).map_err(fail)?;
            let e = load_dataset(&data).map_err(fail)?;
            let m = load_pmat(&mat).map_err(fail)?;
            let minus = match remove {
                Some(r) => load_dataset(&r).map_err(fail)?,
                None => FactStore::new(),
            };
            let plus = match add {
                Some(a) => load_dataset(&a).map_err(fail)?,
                None => FactStore::new(),
            };
            let n = e.fact_count();
            let (m, new_e, report) = dred_update(&p, e, m, &minus, &plus).map_err(budget)?;
            write_to(path.as_deref(), &m.to_string(), out)?;
            if let Some(d) = data_out {
                write_to(Some(&d), &new_e.to_string(), out)?;
            }
            if let Some(dir) = stages {
                fs::create_dir_all(&dir).map_err(|e| fail(format!("{}: {e}", dir.display())))?;
                write_to(Some(&dir.join("deleted.data")), &report.deleted.to_string(), out)?;
                write_to(Some(&dir.join("rederived.data")), &report.rederived.to_string(), out)?;
                write_to(Some(&dir.join("added.data")), &report.added.to_string(), out)?;
            }
            if let Some(target) = stats {
                let line = format!("{}\n", StatsRecord::from_report("update", n, &report, m.fact_count()));
                write_to(target.as_deref(), &line, out)?;
            }
            Ok(EXIT_OK)
        }
        Command::Diff { a, b } => {
            let ma = load_pmat(&a).map_err(fail)?;
            let mb = load_pmat(&b).map_err(fail)?;
            match difference_witness(&ma, &mb) {
                None => Ok(EXIT_OK),
                Some((in_a, f)) => {
                    let (yes, no) = if in_a { (&a, &b) } else { (&b, &a) };
                    writeln!(out, "{f} holds in {} but not in {}", yes.display(), no.display()).map_err(fail)?;
                    Ok(EXIT_FAIL)
                }
            }
        }
        Command::Entail { mat, fact } => {
            let m = load_pmat(&mat).map_err(fail)?;
            let f = parse_fact(&fact).map_err(|e| fail(format!("fact: {e}")))?;
            Ok(if dmtl::entails(&m, &f) { EXIT_OK } else { EXIT_NOT_ENTAILED })
        }
        Command::Oracle { program, data, window, rounds } => {
            let p = load_program(&program).map_err(fail)?;
            let e = load_dataset(&data).map_err(fail)?;
            let bound = |s: &str| parse_number(s).ok_or_else(|| Failure::Exit(EXIT_USAGE, format!("bad window bound {s:?}")));
            let (lo, hi) = (bound(&window[0])?, bound(&window[1])?);
            if lo > hi {
                return Err(Failure::Exit(EXIT_USAGE, "window is empty".into()));
            }
            let result = pointwise_oracle(&p, &e, &Interval::closed(lo, hi), rounds);
            if result.budget_exceeded {
                return Err(Failure::Exit(EXIT_BUDGET, format!("no fixpoint within {rounds} rounds")));
            }
            write!(out, "{}", result.store).map_err(fail)?;
            Ok(EXIT_OK)
        }
        Command::Bench { scenario: Scenario::Example1, n, mode, repeat } => {
            let (p, e, minus, plus) = example1_family(n);
            let base = materialise(&p, &e).map_err(budget)?;
            for _ in 0..repeat {
                let record = match mode {
                    Mode::Dred => {
                        let (m, _, report) = dred_update(&p, e.clone(), base.clone(), &minus, &plus).map_err(budget)?;
                        StatsRecord::from_report("example1", n, &report, m.fact_count())
                    }
                    Mode::Remat => {
                        let started = Instant::now();
                        let new_e = e.difference(&minus).union(&plus);
                        let m = rematerialise(&p, &new_e).map_err(budget)?;
                        StatsRecord::remat("example1", n, started.elapsed(), m.fact_count())
                    }
                };
                writeln!(out, "{record}").map_err(fail)?;
            }
            Ok(EXIT_OK)
        }
    }
}
