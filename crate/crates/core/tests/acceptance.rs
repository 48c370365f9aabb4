//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits nonzero
//! when a deterministic criterion fails. Wall-clock ordering is reported but
//! does not gate, since it depends on the host.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

use hofforge::ast::sexp::{parse_program, ParseOptions, Program};
use hofforge::ast::{hof_count, ElemKind, Expr};
use hofforge::enumerate::{enumerate_all, matvec_family, prepare, SubdivMode, Variant};
use hofforge::exec::{
    evaluate, oracle_dot, oracle_matmul, oracle_matvec, random_inputs, run, simulate_nest, time_variant, CacheConfig,
    Inputs,
};
use hofforge::layout::{format_chain, LayoutOp, Shape};
use hofforge::lower::lower;
use hofforge::rewrite::{apply_rule, fuse_fixpoint, Rule, RuleError};

type Outcome = Result<String, String>;

/// Number, name, check, and whether a failure fails the run.
type Criterion = (u8, &'static str, fn() -> Outcome, bool);

fn programs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../programs")
}

fn load(name: &str, n: usize, kind: ElemKind) -> Program {
    let path = programs_dir().join(name);
    let src = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    parse_program(&src, &ParseOptions::with_size(n).kind(kind)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn variants(p: &Program, mode: SubdivMode, b: usize) -> Vec<Variant> {
    let (e, _) = prepare(&p.expr, &mode.plan(b), &p.env).expect("prepare");
    enumerate_all(&e, &p.env).expect("enumerate").variants
}

fn by_spine<'v>(vs: &'v [Variant], spine: &str) -> &'v Variant {
    vs.iter().find(|v| v.spine_string() == spine).unwrap_or_else(|| panic!("no variant {spine}"))
}

fn variant_counts() -> Outcome {
    let t = Instant::now();
    let p = load("matmul.hof", 8, ElemKind::Int);
    let naive = variants(&p, SubdivMode::None, 2).len();
    let split = variants(&p, SubdivMode::Rnz, 2).len();
    let took = t.elapsed();
    ensure(naive == 6 && split == 12, || format!("counts {naive} and {split}"))?;
    ensure(took < Duration::from_secs(1), || format!("took {took:?}"))?;
    Ok(format!("6 and 12 variants in {took:.2?}"))
}

// Independent oracles for the two fused-expression programs.

fn oracle_sum_matvec(ins: &Inputs<i64>) -> Vec<i64> {
    let (a, b, v, u) = (&ins["A"], &ins["B"], &ins["v"], &ins["u"]);
    let [cols, rows] = a.shape().extents()[..] else { panic!("A is a matrix") };
    (0..rows)
        .map(|i| {
            (0..cols).fold(0i64, |s, j| {
                let m = a.get(&[j, i]).unwrap().wrapping_add(b.get(&[j, i]).unwrap());
                let w = v.get(&[j]).unwrap().wrapping_add(u.get(&[j]).unwrap());
                s.wrapping_add(m.wrapping_mul(w))
            })
        })
        .collect()
}

fn oracle_scaled_matmul(ins: &Inputs<i64>) -> Vec<i64> {
    let (a, b, g) = (&ins["A"], &ins["B"], &ins["g"]);
    let [inner, rows] = a.shape().extents()[..] else { panic!("A is a matrix") };
    let cols = b.shape().extents()[0];
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for k in 0..cols {
            out.push((0..inner).fold(0i64, |s, j| {
                let x = a.get(&[j, i]).unwrap().wrapping_mul(b.get(&[k, j]).unwrap());
                s.wrapping_add(x.wrapping_mul(g.get(&[j]).unwrap()))
            }));
        }
    }
    out
}

fn oracle(name: &str, ins: &Inputs<i64>) -> Vec<i64> {
    match name {
        "dot.hof" => vec![oracle_dot(&ins["u"], &ins["v"]).unwrap()],
        "matvec.hof" => oracle_matvec(&ins["A"], &ins["u"]).unwrap(),
        "matmul.hof" => oracle_matmul(&ins["A"], &ins["B"]).unwrap(),
        "sum_matvec.hof" => oracle_sum_matvec(ins),
        "scaled_matmul.hof" => oracle_scaled_matmul(ins),
        _ => unreachable!(),
    }
}

fn every_rule(block: usize) -> Vec<Rule> {
    let mut rules: Vec<Rule> = Rule::NAMES.iter().filter_map(|n| Rule::from_name(n, block)).collect();
    rules.extend((0..4).map(Rule::FuseNzipNzip));
    rules
}

fn semantic_preservation() -> Outcome {
    const PROGRAMS: [&str; 5] = ["dot.hof", "matvec.hof", "matmul.hof", "sum_matvec.hof", "scaled_matmul.hof"];
    const PER_SIZE: u64 = 25;
    let t = Instant::now();
    let mut comparisons = 0usize;
    let mut instances = 0usize;
    for name in PROGRAMS {
        let mut per_program = 0;
        for n in [2, 4, 6, 8] {
            let p = load(name, n, ElemKind::Int);
            let mut cands: Vec<(String, Expr, bool)> = Vec::new();
            for rule in every_rule(2) {
                for (e, step) in apply_rule(rule, &p.expr, &p.env) {
                    cands.push((format!("{rule} at {step}"), e, false));
                }
            }
            for mode in [SubdivMode::None, SubdivMode::Rnz] {
                for v in variants(&p, mode, 2) {
                    cands.push((v.spine_string(), v.expr, true));
                }
            }
            for k in 0..PER_SIZE {
                let ins: Inputs<i64> = random_inputs(&p.env, 7919 * n as u64 + k);
                let want = oracle(name, &ins);
                ensure(evaluate(&p.expr, &ins).unwrap().to_vec() == want, || format!("{name}: source disagrees"))?;
                for (what, e, lowered) in &cands {
                    let got = evaluate(e, &ins).map_err(|err| format!("{name} {what}: {err}"))?.to_vec();
                    ensure(got == want, || format!("{name} N={n}: {what}"))?;
                    if *lowered {
                        let nest = lower(e, &p.env).map_err(|err| format!("{name} {what}: {err}"))?;
                        let ran = run(&nest, &ins).map_err(|err| format!("{name} {what}: {err}"))?.to_vec();
                        ensure(ran == want, || format!("{name} N={n}: lowered {what}"))?;
                    }
                    comparisons += 1;
                }
                per_program += 1;
            }
        }
        ensure(per_program >= 100, || format!("{name}: only {per_program} instances"))?;
        instances += per_program;
    }
    let took = t.elapsed();
    ensure(took < Duration::from_secs(60), || format!("took {took:?}"))?;
    Ok(format!("{comparisons} comparisons over {instances} instances in {took:.2?}"))
}

fn matvec_six_cases() -> Outcome {
    let src = "(input A ((6,1),(4,6))) (input u ((6,1))) (map (lam (r) (rnz + * r u)) A)";
    let p = parse_program(src, &ParseOptions::default()).unwrap();
    let family = matvec_family(&p.expr, 2, &p.env).map_err(|e| e.to_string())?;
    let expected = [
        ("1a", "subdiv 0 2 A", "subdiv 0 2 u"),
        ("1b", "flip 1 2 (subdiv 0 2 A)", "subdiv 0 2 u"),
        ("1c", "flip 0 1 (flip 1 2 (subdiv 0 2 A))", "subdiv 0 2 u"),
        ("2a", "subdiv 0 2 (flip 0 1 A)", "u"),
        ("2b", "flip 1 2 (subdiv 0 2 (flip 0 1 A))", "u"),
        ("2c", "flip 0 1 (flip 1 2 (subdiv 0 2 (flip 0 1 A)))", "u"),
    ];
    ensure(family.len() == 6, || format!("{} cases", family.len()))?;
    let ins: Inputs<i64> = random_inputs(&p.env, 11);
    let want = oracle_matvec(&ins["A"], &ins["u"]).unwrap();
    let mut acc = Vec::new();
    for (v, (id, a, u)) in family.iter().zip(expected) {
        let chain = |n: &str| format_chain(n, v.input_layouts.get(n).map_or(&[][..], |c| &c[..]));
        ensure(v.id == id && chain("A") == a && chain("u") == u, || {
            format!("{}: {} / {}", v.id, chain("A"), chain("u"))
        })?;
        ensure(evaluate(&v.expr, &ins).unwrap().to_vec() == want, || format!("{id} evaluates wrong"))?;
        let nest = lower(&v.expr, &p.env).map_err(|e| e.to_string())?;
        ensure(run(&nest, &ins).unwrap().to_vec() == want, || format!("{id} runs wrong"))?;
        acc.push(nest.acc_elems());
    }
    ensure(acc[..3] == [1, 4, 4], || format!("accumulators {acc:?}"))?;
    Ok(format!("chains match, accumulator elements 1a/1b/1c = {:?}", &acc[..3]))
}

fn fusion() -> Outcome {
    let t = Instant::now();
    let eq = load("sum_matvec.hof", 4, ElemKind::Int);
    let before = hof_count(&eq.expr);
    let fused = hof_count(&fuse_fixpoint(&eq.expr));
    ensure(fused == 2, || format!("sum_matvec fuses {before} -> {fused}"))?;
    let chain = "(input v ((8,1))) \
        (map (lam (x) (+ x 1)) (map (lam (x) (* x 2)) (map (lam (x) (- x 3)) (map (lam (x) (* x x)) (map (lam (x) (+ x x)) v)))))";
    let p = parse_program(chain, &ParseOptions::default()).unwrap();
    let chain_fused = hof_count(&fuse_fixpoint(&p.expr));
    ensure(chain_fused == 1, || format!("map chain fuses to {chain_fused}"))?;
    for name in ["dot.hof", "matvec.hof", "matmul.hof", "scaled_matmul.hof"] {
        let p = load(name, 4, ElemKind::Int);
        fuse_fixpoint(&p.expr);
    }
    let took = t.elapsed();
    ensure(took < Duration::from_secs(1), || format!("took {took:?}"))?;
    Ok(format!("sum_matvec {before} -> {fused} HoFs, 5-map chain -> {chain_fused}, in {took:.2?}"))
}

fn locality_by_simulation() -> Outcome {
    let p = load("matmul.hof", 512, ElemKind::Float);
    let vs = variants(&p, SubdivMode::None, 16);
    let misses = |spine: &str| -> Result<u64, String> {
        let nest = lower(&by_spine(&vs, spine).expr, &p.env).map_err(|e| e.to_string())?;
        Ok(simulate_nest(&nest, CacheConfig::default(), None).map_err(|e| e.to_string())?.total.misses)
    };
    let best = misses("mapA,rnz,mapB")?;
    let naive = misses("mapA,mapB,rnz")?;
    let worst = misses("mapB,rnz,mapA")?;
    let msg = format!("misses {best} < {naive} < {worst}");
    ensure(best < naive && naive < worst, || msg.clone())?;
    Ok(msg)
}

/// Median runtime in ms of every variant, keyed by spine.
fn timings(p: &Program, mode: SubdivMode, ins: &Inputs<f64>) -> Result<Vec<(String, f64)>, String> {
    variants(p, mode, 16)
        .iter()
        .map(|v| {
            let nest = lower(&v.expr, &p.env).map_err(|e| e.to_string())?;
            Ok((v.spine_string(), time_variant(&nest, ins, 5).map_err(|e| e.to_string())?))
        })
        .collect()
}

fn wall_clock_ordering() -> Outcome {
    let t = Instant::now();
    let p = load("matmul.hof", 512, ElemKind::Float);
    let ins: Inputs<f64> = random_inputs(&p.env, 1);
    let plain = timings(&p, SubdivMode::None, &ins)?;
    let split = timings(&p, SubdivMode::Rnz, &ins)?;
    let naive = plain.iter().find(|(s, _)| s == "mapA,mapB,rnz").unwrap().1;
    let (best_spine, best) = split.iter().min_by(|a, b| a.1.total_cmp(&b.1)).cloned().unwrap();
    let (worst_spine, worst) =
        plain.iter().filter(|(s, _)| s.starts_with("mapB")).max_by(|a, b| a.1.total_cmp(&b.1)).cloned().unwrap();
    let took = t.elapsed();
    let msg = format!(
        "best {best_spine} {best:.1} ms, naive {naive:.1} ms, worst {worst_spine} {worst:.1} ms; \
         speedups {:.2}x and {:.2}x (need 2x and 1.5x); {took:.0?}",
        naive / best,
        worst / naive
    );
    ensure(naive >= 2.0 * best && worst >= 1.5 * naive && took < Duration::from_secs(900), || msg.clone())?;
    Ok(msg)
}

fn layout_algebra() -> Outcome {
    let subdivided = Shape::row_major(&[15, 8])
        .and_then(|s| s.subdiv(0, 3))
        .and_then(|s| s.subdiv(2, 2))
        .and_then(|s| s.flip(1, 2))
        .map_err(|e| e.to_string())?;
    ensure(subdivided.to_string() == "((3,1),(2,15),(5,3),(4,30))", || format!("got {subdivided}"))?;
    let plain = Shape::row_major(&[3, 2, 5, 4]).unwrap();
    ensure(plain.to_string() == "((3,1),(2,3),(5,6),(4,30))", || format!("got {plain}"))?;

    let offsets = |s: &Shape| {
        let mut v: Vec<usize> = s.offsets().collect();
        v.sort_unstable();
        v
    };
    // Random row-major shapes, then a random flip so strides are not monotone.
    let shapes = (prop::collection::vec(1usize..=12, 1..=4), any::<(u8, u8)>()).prop_map(|(ex, (a, b))| {
        let s = Shape::row_major(&ex).unwrap();
        let r = s.rank();
        s.flip(a as usize % r, b as usize % r).unwrap()
    });
    let mut runner = TestRunner::new(Config { cases: 512, failure_persistence: None, ..Config::default() });
    let cases = std::cell::Cell::new(0usize);
    runner
        .run(&shapes, |s| {
            let base = offsets(&s);
            for d in 0..s.rank() {
                let e = s.dims()[d].extent;
                for b in (1..=e).filter(|b| e % b == 0) {
                    let sub = s.subdiv(d, b).unwrap();
                    prop_assert_eq!(sub.flatten(d).unwrap(), s.clone());
                    prop_assert_eq!(offsets(&sub), base.clone());
                }
                for d2 in 0..s.rank() {
                    let f = s.flip(d, d2).unwrap();
                    prop_assert_eq!(f.flip(d, d2).unwrap(), s.clone());
                    prop_assert_eq!(f.clone(), s.flip(d2, d).unwrap());
                    prop_assert_eq!(offsets(&f), base.clone());
                }
            }
            let op = LayoutOp::Flip { a: 0, b: s.rank() - 1 };
            prop_assert_eq!(op.apply(&op.apply(&s).unwrap()).unwrap(), s.clone());
            cases.set(cases.get() + 1);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("120-element example exact, {} random shapes", cases.get()))
}

fn exchange_side_conditions() -> Outcome {
    let env = "(input A ((4,1),(4,4))) (input B ((4,1),(4,4))) (input u ((4,1))) (input v ((4,1)))";
    let nested = |outer: &str, inner: &str| {
        let src = format!("{env} (rnz {outer} (lam (ra rb) (rnz {inner} * ra rb)) A B)");
        parse_program(&src, &ParseOptions::default()).unwrap()
    };
    let fires = |p: &Program, rule: Rule| !apply_rule(rule, &p.expr, &p.env).is_empty();
    ensure(fires(&nested("+", "+"), Rule::ExchangeRnzRnz), || "(+, *) refused".into())?;
    for (outer, inner) in [("-", "-"), ("/", "/"), ("+", "max"), ("max", "+")] {
        ensure(!fires(&nested(outer, inner), Rule::ExchangeRnzRnz), || format!("({outer}, {inner}) fired"))?;
    }
    for op in ["-", "/"] {
        let src = format!("{env} (rnz {op} * u v)");
        let p = parse_program(&src, &ParseOptions::default()).unwrap();
        let r = Rule::SubdivideRnz(2).apply(&p.expr, &hofforge::ast::Scope::new(&p.env));
        ensure(matches!(r, Err(RuleError::SideCondition(_))), || format!("subdivide_rnz with {op}: {r:?}"))?;
    }
    let dot = parse_program(&format!("{env} (rnz + * u v)"), &ParseOptions::default()).unwrap();
    ensure(fires(&dot, Rule::SubdivideRnz(2)), || "subdivide_rnz refused +".into())?;
    Ok("rnz exchange fires for (+,*), refuses -, /, mixed; subdivision refuses -, /".into())
}

fn main() {
    let criteria: [Criterion; 8] = [
        (1, "variant counts", variant_counts, true),
        (2, "semantic preservation", semantic_preservation, true),
        (3, "matvec six cases", matvec_six_cases, true),
        (4, "fusion", fusion, true),
        (5, "locality by cache simulation", locality_by_simulation, true),
        (6, "wall-clock ordering", wall_clock_ordering, false),
        (7, "layout algebra", layout_algebra, true),
        (8, "exchange side conditions", exchange_side_conditions, true),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut gating_failures = 0;
    for (id, name, check, gating) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str()) || f == &id.to_string()) {
            continue;
        }
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or(p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("PASS {id} {name}: {detail}"),
            Err(detail) => {
                let note = if gating { "" } else { " (host-dependent, not gating)" };
                println!("FAIL {id} {name}: {detail}{note}");
                gating_failures += usize::from(gating);
            }
        }
    }
    if gating_failures > 0 {
        std::process::exit(1);
    }
}
