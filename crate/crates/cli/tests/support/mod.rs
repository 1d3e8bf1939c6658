//! Random bounded programs and datasets for the acceptance suite.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use dmtl::syntax::{parse_dataset, parse_program, Program};
use dmtl::FactStore;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use rand::SeedableRng;
pub type Rng8 = ChaCha8Rng;

const PREDICATES: [&str; 3] = ["P", "Q", "S"];
const CONSTANTS: [&str; 3] = ["c1", "c2", "c3"];
const VARS: [&str; 2] = ["?x", "?y"];

pub struct Case {
    pub program: Program,
    pub program_text: String,
    pub data: FactStore,
    pub minus: FactStore,
    pub plus: FactStore,
}

fn window(rng: &mut Rng8) -> String {
    let a = rng.gen_range(0..=5);
    let b = rng.gen_range(a..=5);
    if a == b {
        return format!("[{a},{a}]");
    }
    let lo = if rng.gen_bool(0.75) { '[' } else { '(' };
    let hi = if rng.gen_bool(0.75) { ']' } else { ')' };
    format!("{lo}{a},{b}{hi}")
}

fn atom(rng: &mut Rng8, arities: &[usize], npred: usize, allow_const: bool) -> String {
    let pred = rng.gen_range(0..npred);
    let arity = arities[pred];
    if arity == 0 {
        return PREDICATES[pred].to_string();
    }
    let args: Vec<String> = (0..arity)
        .map(|_| {
            if allow_const && rng.gen_bool(0.15) {
                CONSTANTS.choose(rng).unwrap().to_string()
            } else {
                VARS.choose(rng).unwrap().to_string()
            }
        })
        .collect();
    format!("{}({})", PREDICATES[pred], args.join(","))
}

fn literal(rng: &mut Rng8, arities: &[usize], npred: usize) -> String {
    let a = atom(rng, arities, npred, true);
    match rng.gen_range(0..9) {
        0 | 1 | 2 => a,
        3 => format!("DIAMONDMINUS{} {a}", window(rng)),
        4 => format!("DIAMONDPLUS{} {a}", window(rng)),
        5 => format!("BOXMINUS{} {a}", window(rng)),
        6 => format!("BOXPLUS{} {a}", window(rng)),
        k => {
            let b = atom(rng, arities, npred, true);
            let op = if k == 7 { "SINCE" } else { "UNTIL" };
            format!("{b} {op}{} {a}", window(rng))
        }
    }
}

fn rule(rng: &mut Rng8, arities: &[usize], npred: usize) -> String {
    let head = atom(rng, arities, npred, false);
    let head = match rng.gen_range(0..4) {
        0 => format!("BOXPLUS{} {head}", window(rng)),
        1 => format!("BOXMINUS{} {head}", window(rng)),
        _ => head,
    };
    let body: Vec<String> = (0..rng.gen_range(1..=2)).map(|_| literal(rng, arities, npred)).collect();
    format!("{head} :- {}", body.join(", "))
}

fn fact(rng: &mut Rng8, arities: &[usize], npred: usize) -> String {
    let pred = rng.gen_range(0..npred);
    let args: Vec<&str> = (0..arities[pred]).map(|_| *CONSTANTS.choose(rng).unwrap()).collect();
    let a = if args.is_empty() { PREDICATES[pred].to_string() } else { format!("{}({})", PREDICATES[pred], args.join(",")) };
    let lo = rng.gen_range(0..=20);
    let hi = rng.gen_range(lo..=(lo + 6).min(20));
    let interval = if lo == hi {
        format!("[{lo},{lo}]")
    } else {
        let l = if rng.gen_bool(0.8) { '[' } else { '(' };
        let h = if rng.gen_bool(0.8) { ']' } else { ')' };
        format!("{l}{lo},{hi}{h}")
    };
    format!("{a}@{interval}\n")
}

fn store(text: &str) -> FactStore {
    FactStore::from_facts(parse_dataset(text).expect("generated dataset parses")).expect("arities agree")
}

/// A random bounded program with data and an update, deterministic in `seed`.
pub fn random_case(seed: u64) -> Case {
    let mut rng = Rng8::seed_from_u64(seed);
    let npred = rng.gen_range(1..=3);
    let arities: Vec<usize> = (0..npred).map(|_| rng.gen_range(0..=2)).collect();
    let nrules = rng.gen_range(1..=3);
    let mut rules = Vec::new();
    while rules.len() < nrules {
        let r = rule(&mut rng, &arities, npred);
        if parse_program(&r).is_ok() {
            rules.push(r);
        }
    }
    let program_text = rules.join("\n") + "\n";
    let program = parse_program(&program_text).expect("rules were checked one by one");

    let data_text: String = (0..rng.gen_range(1..=15)).map(|_| fact(&mut rng, &arities, npred)).collect();
    let data = store(&data_text);

    let facts: Vec<_> = data.facts().collect();
    let mut minus_text = String::new();
    for _ in 0..rng.gen_range(0..=3) {
        let f = facts.choose(&mut rng).unwrap();
        let (lo, hi) = (f.interval.lo().clone(), f.interval.hi().clone());
        let span = (&hi - &lo).to_integer().try_into().unwrap_or(0i64);
        let a = rng.gen_range(0..=span);
        let b = rng.gen_range(a..=span);
        let l = &lo + dmtl::Time::from_integer(a.into());
        let h = &lo + dmtl::Time::from_integer(b.into());
        minus_text.push_str(&format!("{}@[{l},{h}]\n", f.atom));
    }
    let plus_text: String = (0..rng.gen_range(0..=3)).map(|_| fact(&mut rng, &arities, npred)).collect();
    Case { program, program_text, data, minus: store(&minus_text), plus: store(&plus_text) }
}

/// A fresh path under the system temp directory.
pub fn temp_path(name: &str) -> PathBuf {
    static COUNTER: AtomicUsize = AtomicUsize::new(0);
    let dir = std::env::temp_dir().join(format!("dmtl-tests-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(format!("{}-{name}", COUNTER.fetch_add(1, Ordering::Relaxed)))
}

/// Runs the CLI in-process; returns the exit code and captured stdout.
pub fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = dmtl_cli::run(std::iter::once("dmtl").chain(args.iter().copied()), &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}
