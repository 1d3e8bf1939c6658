use dmtl::engine::{dred_update, entails, materialise, rematerialise};
use dmtl::oracle::stable_oracle;
use dmtl::periodic::{aln, equivalent, ext, left_period, pds, periodic_minus, periodic_union, right_period, End};
use dmtl::syntax::{parse_dataset, parse_fact, parse_interval, parse_program, Program};
use dmtl::{FactStore, Interval, PeriodicMaterialisation, Time};

const RULE: &str = "BOXPLUS[0,1] R(?x) :- BOXMINUS[9,10] R(?x)";

fn t(x: i64) -> Time {
    Time::from_integer(x.into())
}

fn q(n: i64, d: i64) -> Time {
    Time::new(n.into(), d.into())
}

fn iv(text: &str) -> Interval<Time> {
    parse_interval(text).unwrap()
}

fn store(text: &str) -> FactStore {
    FactStore::from_facts(parse_dataset(text).unwrap()).unwrap()
}

fn example() -> Program {
    parse_program(RULE).unwrap()
}

fn windows() -> Vec<Interval<Time>> {
    ["[-60,-20]", "[-20,20]", "[0,50]", "[20,90]", "[-100,100]"].iter().map(|w| iv(w)).collect()
}

fn same_unfolding(a: &PeriodicMaterialisation, b: &PeriodicMaterialisation) -> bool {
    windows().iter().all(|w| a.unfold_window(w) == b.unfold_window(w))
}

/// Right-periodic fact R@[c,c+1/4] repeating every `len` from `c`.
fn periodic_r(c: Time, len: Time) -> PeriodicMaterialisation {
    let d = &c + &len;
    let core = FactStore::from_facts([dmtl::Fact::new(
        dmtl::GroundAtom::parse_like("R", &[]),
        Interval::new(c.clone(), false, &c + q(1, 4), true).unwrap(),
    )])
    .unwrap();
    PeriodicMaterialisation::new(core, None, Some(right_period(c, d))).unwrap()
}

#[test]
fn unfolding_reads_periods() {
    let m = materialise(&example(), &store("R(a1)@[0,1]")).unwrap();
    assert_eq!(m.unfold_window(&iv("[38,45]")), store("R(a1)@[40,41]"));
    assert!(entails(&m, &parse_fact("R(a1)@[30,31]").unwrap()));
    assert!(entails(&m, &parse_fact("R(a1)@[1000,1001]").unwrap()));
    assert!(!entails(&m, &parse_fact("R(a1)@[-30,-29]").unwrap()));
    assert!(!entails(&m, &parse_fact("R(a1)@[0,11]").unwrap()));
    assert!(!entails(&m, &parse_fact("Z(a1)@[0,0]").unwrap()));

    let inside = iv("[2,8]");
    assert_eq!(m.unfold_window(&inside), m.core().project(&inside));
    let b = PeriodicMaterialisation::bounded(store("R@[0,1]"));
    assert_eq!(b.unfold_window(&iv("[-50,50]")), store("R@[0,1]"));
}

#[test]
fn lcm_extension() {
    let (a, b) = ext(periodic_r(t(0), t(2)), periodic_r(t(0), t(3)), End::Right).unwrap();
    assert_eq!(a.right().unwrap().len(), t(6));
    assert_eq!(b.right().unwrap().len(), t(6));
    assert!(same_unfolding(&a, &periodic_r(t(0), t(2))));
    assert!(same_unfolding(&b, &periodic_r(t(0), t(3))));

    let (a, _) = ext(periodic_r(t(0), t(4)), periodic_r(t(1), t(4)), End::Right).unwrap();
    assert_eq!(a.right().unwrap().len(), t(4));

    let (a, b) = ext(periodic_r(t(0), q(1, 2)), periodic_r(t(0), q(1, 3)), End::Right).unwrap();
    assert_eq!(a.right().unwrap().len(), t(1));
    assert_eq!(b.right().unwrap().len(), t(1));
    assert!(same_unfolding(&a, &periodic_r(t(0), q(1, 2))));
}

#[test]
fn alignment() {
    let m1 = periodic_r(t(24), t(10));
    let m2 = periodic_r(t(14), t(10));
    let (a, b, at) = aln(m1.clone(), m2.clone(), End::Right).unwrap();
    assert_eq!(at, right_period(t(24), t(34)));
    assert_eq!(a.right(), Some(&at));
    assert_eq!(b.right(), Some(&at));
    assert!(same_unfolding(&a, &m1));
    assert!(same_unfolding(&b, &m2));

    let bare = PeriodicMaterialisation::bounded(store("R@[0,1]"));
    let (_, b, at) = aln(m1.clone(), bare.clone(), End::Right).unwrap();
    assert_eq!(b.right(), Some(&at));
    assert!(b.period_content(End::Right).is_empty());
    assert!(same_unfolding(&b, &bare));

    assert!(aln(bare.clone(), bare, End::Left).is_err());
}

#[test]
fn sub_materialisation_difference() {
    let p = example();
    let m1 = materialise(&p, &store("R(a1)@[0,1]\nR(a2)@[0,1]")).unwrap();
    let m2 = materialise(&p, &store("R(a1)@[0,1]")).unwrap();
    let only_a2 = materialise(&p, &store("R(a2)@[0,1]")).unwrap();
    let m3 = periodic_minus(m1.clone(), m2.clone());
    let w = iv("[-50,50]");
    let got = m3.unfold_window(&w);
    assert!(got.atoms().all(|a| a.to_string() == "R(a2)"));
    assert_eq!(got, only_a2.unfold_window(&w));

    assert!(equivalent(&periodic_minus(m1.clone(), PeriodicMaterialisation::bounded(FactStore::new())), &m1));
    let none = periodic_minus(m1.clone(), m1.clone());
    assert!(windows().iter().all(|w| none.unfold_window(w).is_empty()));

    let back = periodic_union(m3, m2);
    assert!(equivalent(&back, &m1));
    let plain = periodic_union(
        PeriodicMaterialisation::bounded(store("R(a)@[0,1]")),
        PeriodicMaterialisation::bounded(store("R(b)@[3,4]")),
    );
    assert_eq!(plain.core(), &store("R(a)@[0,1]\nR(b)@[3,4]"));
    assert!(plain.left().is_none() && plain.right().is_none());
}

#[test]
fn equivalence_checks() {
    let p = example();
    let m = materialise(&p, &store("R(a1)@[0,1]")).unwrap();
    assert!(equivalent(&m, &m));
    let mut core = m.core().clone();
    core.insert_fact(parse_fact("R(a1)@[5,5]").unwrap()).unwrap();
    let perturbed = PeriodicMaterialisation::new(core, m.left().cloned(), m.right().cloned()).unwrap();
    assert!(!equivalent(&m, &perturbed));
}

#[test]
fn period_search_cases() {
    let p = example();
    let e = store("R(a1)@[0,1]");
    let inside = store("R(a1)@[0,0]");
    assert!(pds(&p, &e, None, None, &FactStore::new(), &inside).is_none());

    let (l, r) = pds(&p, &e, None, None, &FactStore::new(), &FactStore::new()).unwrap();
    assert!(l.hi() < &t(0) && r.lo() > &t(1));

    let flat = parse_program("Q(?x) :- P(?x)").unwrap();
    let m = materialise(&flat, &store("P(a)@[0,1]")).unwrap();
    assert!(m.period_content(End::Left).is_empty() && m.period_content(End::Right).is_empty());
    assert_eq!(m.core(), &store("P(a)@[0,1]\nQ(a)@[0,1]"));
}

#[test]
fn materialise_small_cases() {
    assert!(materialise(&example(), &FactStore::new()).unwrap().core().is_empty());
    let p = parse_program("R(?u,?y) :- P(?s,?x), DIAMONDMINUS[0,2] L(?u,?x), P(?s,?y)").unwrap();
    let e = store("P(s1,x1)@[0,5]\nL(u1,x1)@[1,1]\nP(s1,y1)@[0,5]");
    let m = materialise(&p, &e).unwrap();
    let w = iv("[-20,30]");
    let o = stable_oracle(&p, &e, &w, &t(10), 100, 3).unwrap();
    assert_eq!(m.unfold_window(&w), o);
    assert!(entails(&m, &parse_fact("R(u1,y1)@[1,3]").unwrap()));
}

#[test]
fn update_small_cases() {
    let p = example();
    let e = store("R(a1)@[0,1]\nR(a2)@[0,1]");
    let m = materialise(&p, &e).unwrap();

    let (m2, e2, rep) = dred_update(&p, e.clone(), m.clone(), &FactStore::new(), &FactStore::new()).unwrap();
    assert!(equivalent(&m2, &m));
    assert_eq!(e2, e);
    assert_eq!((rep.d_count(), rep.r_count(), rep.a_count()), (0, 0, 0));

    let one = store("R(a1)@[0,1]");
    let m1 = materialise(&p, &one).unwrap();
    let (gone, e2, _) = dred_update(&p, one.clone(), m1, &one, &FactStore::new()).unwrap();
    assert!(e2.is_empty());
    assert!(windows().iter().all(|w| gone.unfold_window(w).is_empty()));

    assert!(equivalent(&rematerialise(&p, &e).unwrap(), &m));

    // nothing depends on Q, and the deleted middle has no other support
    let p = parse_program("S(?x) :- DIAMONDMINUS[0,1] Q(?x)").unwrap();
    let e = store("Q(a)@[0,4]");
    let m = materialise(&p, &e).unwrap();
    let minus = store("Q(a)@[1,2]");
    let (m2, e2, rep) = dred_update(&p, e, m, &minus, &FactStore::new()).unwrap();
    assert!(rep.deleted.intervals_of(&dmtl::GroundAtom::parse_like("Q", &["a"])) == minus.intervals_of(&dmtl::GroundAtom::parse_like("Q", &["a"])));
    assert!(equivalent(&m2, &rematerialise(&p, &e2).unwrap()));
    let w = iv("[-10,10]");
    assert_eq!(m2.unfold_window(&w), stable_oracle(&p, &e2, &w, &t(10), 100, 3).unwrap());
}

#[test]
fn left_periods_are_half_open() {
    assert!(left_period(t(-24), t(-23)).lo_closed());
    assert!(!left_period(t(-24), t(-23)).hi_closed());
    assert!(PeriodicMaterialisation::new(FactStore::new(), Some(iv("[0,1]")), None).is_err());
}

#[test]
fn deletion_drops_self_supported_facts() {
    let cases = [
        ("P :- P UNTIL[0,1] P\nBOXMINUS[0,0] P :- P", "P@(3,6)\nP@(6,20]", "P@[3,5]"),
        ("Q :- Q SINCE[0,5] S(?y)", "P@[1,6]\nP@(16,19)\nS(c2)@[11,14]", "P@[5,6]\nS(c2)@[12,14]"),
        (
            "BOXMINUS[2,5] P :- DIAMONDPLUS[2,5] P, DIAMONDMINUS[5,5] Q(?y,?y)\nP :- DIAMONDPLUS[0,1] P",
            "P@[8,8]\nQ(c1,c1)@[20,20]\nQ(c2,c2)@[14,19)\nQ(c3,c1)@[2,6]",
            "P@[8,8]",
        ),
    ];
    let w = iv("[-20,40]");
    for (rules, data, minus) in cases {
        let p = parse_program(rules).unwrap();
        let e = store(data);
        let m = materialise(&p, &e).unwrap();
        let (m2, e2, _) = dred_update(&p, e, m, &store(minus), &FactStore::new()).unwrap();
        assert!(equivalent(&m2, &rematerialise(&p, &e2).unwrap()), "{rules}");
        assert_eq!(m2.unfold_window(&w), stable_oracle(&p, &e2, &w, &t(40), 1000, 3).unwrap(), "{rules}");
    }
}
