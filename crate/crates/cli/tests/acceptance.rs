//! Acceptance suite: prints one PASS/FAIL line per criterion and fails if any criterion fails.

mod support;

use std::time::{Duration, Instant};

use dmtl::engine::{dred_update, materialise, materialise_with, rematerialise, SaturationBudget};
use dmtl::oracle::stable_oracle;
use dmtl::periodic::{is_saturated, periodic_minus, periodic_union, PeriodicMaterialisation};
use dmtl::syntax::{parse_dataset, parse_interval, parse_program};
use dmtl::{FactStore, Interval, Time};
use dmtl_cli::{example1_family, StatsRecord, EXAMPLE1_RULE};
use rand::Rng;
use support::{cli, random_case, temp_path, Case, Rng8, SeedableRng};

const CORPUS: u64 = 100;

fn t(x: i64) -> Time {
    Time::from_integer(x.into())
}

struct Outcome {
    failures: Vec<String>,
    note: String,
}

impl Outcome {
    fn new() -> Self {
        Outcome { failures: Vec::new(), note: String::new() }
    }
}

fn corpus() -> Vec<Case> {
    (0..CORPUS).map(random_case).collect()
}

fn write(name: &str, text: &str) -> String {
    let p = temp_path(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn a1(cases: &[Case]) -> Outcome {
    let mut o = Outcome::new();
    let started = Instant::now();
    let mut agreed = 0;
    for (i, c) in cases.iter().enumerate() {
        let run = || -> Result<(PeriodicMaterialisation, PeriodicMaterialisation), String> {
            let m = materialise(&c.program, &c.data).map_err(|e| e.to_string())?;
            let (m2, e2, _) = dred_update(&c.program, c.data.clone(), m, &c.minus, &c.plus).map_err(|e| e.to_string())?;
            let remat = rematerialise(&c.program, &e2).map_err(|e| e.to_string())?;
            Ok((m2, remat))
        };
        match run() {
            Ok((dred, remat)) => {
                let a = write("dred.pmat", &dred.to_string());
                let b = write("remat.pmat", &remat.to_string());
                let (code, out, err) = cli(&["diff", &a, &b]);
                if code == 0 {
                    agreed += 1;
                } else {
                    o.failures.push(format!("case {i}: diff exit {code}: {}{}\n{}", out.trim(), err.trim(), c.program_text));
                }
            }
            Err(e) => o.failures.push(format!("case {i}: {e}")),
        }
    }
    let elapsed = started.elapsed();
    if elapsed > Duration::from_secs(60) {
        o.failures.push(format!("took {elapsed:?}"));
    }
    o.note = format!("{agreed}/{} cases agree in {:.2?}", cases.len(), elapsed);
    o
}

fn a2() -> Outcome {
    let mut o = Outcome::new();
    let started = Instant::now();
    let p = parse_program(EXAMPLE1_RULE).unwrap();
    let e = FactStore::from_facts(parse_dataset("R(a1)@[0,1]").unwrap()).unwrap();
    if *p.depth() != t(11) {
        o.failures.push(format!("depth {}", p.depth()));
    }
    match materialise(&p, &e) {
        Err(err) => o.failures.push(err.to_string()),
        Ok(m) => {
            let (l, r) = (m.left().cloned(), m.right().cloned());
            match (l, r) {
                (Some(l), Some(r)) => {
                    if !is_saturated(&p, &e, m.core(), &l, &r) {
                        o.failures.push(format!("periods {l} {r} fail the saturation checks"));
                    }
                    if r.len() != t(10) {
                        o.failures.push(format!("right period {r} has length {}", r.len()));
                    }
                    o.note = format!("periods {l} {r}");
                }
                _ => o.failures.push("missing period".into()),
            }
            let w = parse_interval("[-50,50]").unwrap();
            match stable_oracle(&p, &e, &w, &t(44), 10_000, 4) {
                Some(oracle) if oracle == m.unfold_window(&w) => {}
                Some(_) => o.failures.push("unfolding on [-50,50] differs from the oracle".into()),
                None => o.failures.push("oracle did not stabilise".into()),
            }
        }
    }
    let elapsed = started.elapsed();
    if elapsed > Duration::from_secs(5) {
        o.failures.push(format!("took {elapsed:?}"));
    }
    o.note = format!("{} in {elapsed:.2?}", o.note);
    o
}

fn extent(m: &PeriodicMaterialisation) -> (Time, Time, Time) {
    let (mut lo, mut hi) = m.core().span().unwrap_or((t(0), t(0)));
    let mut len = t(1);
    if let Some(l) = m.left() {
        lo = lo.min(l.lo().clone());
        len = len.max(l.len());
    }
    if let Some(r) = m.right() {
        hi = hi.max(r.hi().clone());
        len = len.max(r.len());
    }
    (lo, hi, len)
}

fn random_window(rng: &mut Rng8, a: &PeriodicMaterialisation, b: &PeriodicMaterialisation) -> Interval<Time> {
    let (lo1, hi1, len1) = extent(a);
    let (lo2, hi2, len2) = extent(b);
    let len = len1.max(len2);
    let reach = &len * t(3) + t(rng.gen_range(0..20));
    let lo = lo1.min(lo2) - &reach - t(rng.gen_range(0..10));
    let hi = hi1.max(hi2) + &reach + t(rng.gen_range(0..10));
    Interval::closed(lo, hi)
}

fn a3() -> Outcome {
    let mut o = Outcome::new();
    let started = Instant::now();
    let mut rng = Rng8::seed_from_u64(7);
    let mut pairs = 0;
    let mut seed = 1000;
    while pairs < 200 {
        seed += 1;
        let c1 = random_case(seed);
        let c2 = random_case(seed + 50_000);
        let (Ok(m1), Ok(m2)) = (materialise(&c1.program, &c1.data), materialise(&c2.program, &c2.data)) else {
            o.failures.push(format!("seed {seed}: materialisation failed"));
            continue;
        };
        let sub_data: FactStore = {
            let facts: Vec<_> = c1.data.facts().filter(|_| rng.gen_bool(0.5)).collect();
            FactStore::from_facts(facts).unwrap()
        };
        let Ok(sub) = materialise(&c1.program, &sub_data) else {
            o.failures.push(format!("seed {seed}: sub-materialisation failed"));
            continue;
        };
        pairs += 1;
        let union = periodic_union(m1.clone(), m2.clone());
        let minus = periodic_minus(m1.clone(), sub.clone());
        for _ in 0..10 {
            let w = random_window(&mut rng, &m1, &m2);
            if union.unfold_window(&w) != m1.unfold_window(&w).union(&m2.unfold_window(&w)) {
                o.failures.push(format!("seed {seed}: union differs on {w}"));
            }
            let w = random_window(&mut rng, &m1, &sub);
            if minus.unfold_window(&w) != m1.unfold_window(&w).difference(&sub.unfold_window(&w)) {
                o.failures.push(format!("seed {seed}: minus differs on {w}"));
            }
        }
    }
    let elapsed = started.elapsed();
    if elapsed > Duration::from_secs(60) {
        o.failures.push(format!("took {elapsed:?}"));
    }
    o.note = format!("{pairs} pairs x 10 windows in {elapsed:.2?}");
    o
}

/// Engine against the oracle on `[-10, 30]`, for the original and the updated dataset.
fn a4(cases: &[Case]) -> Outcome {
    let mut o = Outcome::new();
    let started = Instant::now();
    let inner = parse_interval("[-10,30]").unwrap();
    let mut checks = 0;
    for (i, c) in cases.iter().enumerate() {
        let budget = SaturationBudget::for_inputs(&c.program, &c.data, None);
        let Ok((m, rounds)) = materialise_with(&c.program, &c.data, &budget) else {
            o.failures.push(format!("case {i}: materialisation failed"));
            continue;
        };
        let Ok((m2, e2, _)) = dred_update(&c.program, c.data.clone(), m.clone(), &c.minus, &c.plus) else {
            o.failures.push(format!("case {i}: update failed"));
            continue;
        };
        for (label, m, e) in [("initial", &m, &c.data), ("updated", &m2, &e2)] {
            let period = m.right().map(|r| r.len()).unwrap_or_else(|| t(1));
            let margin = (t(4 * rounds.max(1) as i64) * c.program.depth()).max(t(4) * period).max(t(1));
            match stable_oracle(&c.program, e, &inner, &margin, 100_000, 3) {
                Some(want) if want == m.unfold_window(&inner) => checks += 1,
                Some(want) => o.failures.push(format!(
                    "case {i} ({label}): engine and oracle differ\n{}engine:\n{}oracle:\n{}",
                    c.program_text,
                    m.unfold_window(&inner),
                    want
                )),
                None => o.failures.push(format!("case {i} ({label}): oracle did not stabilise")),
            }
        }
    }
    o.note = format!("{checks} window checks in {:.2?}", started.elapsed());
    o
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let started = Instant::now();
    let v = f();
    (v, started.elapsed())
}

fn a5() -> Outcome {
    let mut o = Outcome::new();
    let started = Instant::now();
    let mut counts = Vec::new();
    let mut speedup = 0.0;
    for n in [100usize, 1000, 10_000] {
        let (p, e, minus, plus) = example1_family(n);
        let m = materialise(&p, &e).unwrap();
        let mut dred = Vec::new();
        let mut remat = Vec::new();
        for _ in 0..3 {
            let (e1, m1) = (e.clone(), m.clone());
            let (res, dt) = timed(|| dred_update(&p, e1, m1, &minus, &plus));
            let (m2, e2, report) = res.unwrap();
            dred.push(dt);
            counts.push((n, report.d_count(), report.a_count()));
            if n == 10_000 {
                let (r, rt) = timed(|| rematerialise(&p, &e2));
                if !dmtl::equivalent(&m2, &r.unwrap()) {
                    o.failures.push(format!("n={n}: update and rematerialisation differ"));
                }
                remat.push(rt);
            }
        }
        if n == 10_000 {
            dred.sort();
            remat.sort();
            speedup = remat[1].as_secs_f64() / dred[1].as_secs_f64();
            if speedup < 5.0 {
                o.failures.push(format!("speedup {speedup:.1}x at n={n}"));
            }
        }
    }
    let (d0, a0) = (counts[0].1, counts[0].2);
    for &(n, d, a) in &counts {
        if (d, a) != (d0, a0) {
            o.failures.push(format!("n={n}: |D|={d} |A|={a}, expected {d0} and {a0}"));
        }
    }
    let elapsed = started.elapsed();
    if elapsed > Duration::from_secs(120) {
        o.failures.push(format!("took {elapsed:?}"));
    }
    o.note = format!("|D|={d0} |A|={a0} for every n; speedup {speedup:.1}x at n=10000; {elapsed:.2?}");
    o
}

fn a6() -> Outcome {
    let mut o = Outcome::new();
    let (p, e, minus, plus) = example1_family(20);
    let program = write("ex1.dl", &format!("{p}"));
    let data = write("ex1.data", &e.to_string());
    let mat = temp_path("ex1.pmat");
    let mat_s = mat.to_string_lossy().into_owned();
    let (code, _, err) = cli(&["materialize", "--program", &program, "--data", &data, "--out", &mat_s]);
    if code != 0 {
        o.failures.push(format!("materialize exit {code}: {err}"));
        return o;
    }
    let old = dmtl_cli::load_pmat(&mat).unwrap();
    let scenarios = [("delete-only", Some(&minus), None), ("insert-only", None, Some(&plus)), ("mixed", Some(&minus), Some(&plus))];
    for (name, rm, add) in scenarios {
        let out = temp_path("new.pmat");
        let stats = temp_path("stats.txt");
        let stages = temp_path("stages");
        let (out_s, stats_s, stages_s) =
            (out.to_string_lossy().into_owned(), stats.to_string_lossy().into_owned(), stages.to_string_lossy().into_owned());
        let mut args = vec!["update", "--program", &program, "--data", &data, "--mat", &mat_s, "--out", &out_s];
        let rm_path = rm.map(|s| write("minus.data", &s.to_string()));
        let add_path = add.map(|s| write("plus.data", &s.to_string()));
        if let Some(r) = &rm_path {
            args.extend(["--remove", r]);
        }
        if let Some(a) = &add_path {
            args.extend(["--add", a]);
        }
        args.extend(["--stats", &stats_s, "--stages", &stages_s]);
        let (code, _, err) = cli(&args);
        if code != 0 {
            o.failures.push(format!("{name}: update exit {code}: {err}"));
            continue;
        }
        let record: StatsRecord = match std::fs::read_to_string(&stats).unwrap().trim().parse() {
            Ok(r) => r,
            Err(e) => {
                o.failures.push(format!("{name}: {e}"));
                continue;
            }
        };
        let load = |f: &str| dmtl_cli::load_dataset(&stages.join(f)).unwrap();
        let (d, r, a) = (load("deleted.data"), load("rederived.data"), load("added.data"));
        let new = dmtl_cli::load_pmat(&out).unwrap();
        if (record.d, record.r, record.a) != (d.fact_count(), r.fact_count(), a.fact_count()) {
            o.failures.push(format!("{name}: counts {}/{}/{} do not match the stage stores", record.d, record.r, record.a));
        }
        let stage_sum = record.overdelete_ms + record.rederive_ms + record.insert_ms;
        if (stage_sum - record.total_ms).abs() > 0.01 {
            o.failures.push(format!("{name}: stage times sum to {stage_sum}, total {}", record.total_ms));
        }
        if record.core_facts != new.fact_count() {
            o.failures.push(format!("{name}: core_facts {} but output has {}", record.core_facts, new.fact_count()));
        }
        if rm.is_none() && (record.d, record.r) != (0, 0) {
            o.failures.push(format!("{name}: nonzero deletion counts"));
        }
        if add.is_none() && record.a != 0 {
            o.failures.push(format!("{name}: nonzero insertion count"));
        }
        // On the data span every stage period lies outside, so the stores add up exactly.
        let w = parse_interval("[0,1]").unwrap();
        let rebuilt = old.unfold_window(&w).difference(&d.project(&w)).union(&r.project(&w)).union(&a.project(&w));
        if rebuilt != new.unfold_window(&w) {
            o.failures.push(format!("{name}: (old - D) + R + A differs from the output on {w}"));
        }
        if !d.is_subset(&old.unfold_window(&d.span().map(|(l, h)| Interval::closed(l, h)).unwrap_or(w.clone()))) {
            o.failures.push(format!("{name}: D is not part of the old materialisation"));
        }
    }
    o.note = "delete-only, insert-only, mixed".into();
    o
}

fn main() {
    let cases = corpus();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("A1 update equals rematerialisation", Box::new(|| a1(&cases))),
        ("A2 scaling example reproduction", Box::new(a2)),
        ("A3 periodic union and difference", Box::new(a3)),
        ("A4 engine against the window oracle", Box::new(|| a4(&cases))),
        ("A5 incrementality trend", Box::new(a5)),
        ("A6 stage report shape", Box::new(a6)),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let o = run();
        if o.failures.is_empty() {
            println!("PASS {name}: {}", o.note);
        } else {
            failed += 1;
            println!("FAIL {name}: {} ({} failures)", o.note, o.failures.len());
            for f in o.failures.iter().take(5) {
                println!("    {f}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
