use proptest::prelude::*;

use hofforge::ast::sexp::{parse_program, program_to_string, ParseOptions};
use hofforge::ast::{alpha_canonicalize, hof_count};
use hofforge::enumerate::{enumerate_all, prepare, SubdivMode};
use hofforge::exec::{checksum, evaluate, oracle_matmul, random_inputs, run, Inputs};
use hofforge::layout::{LayoutOp, View};
use hofforge::lower::lower;
use hofforge::rewrite::fuse_fixpoint;

const OPS: [&str; 4] = ["+", "-", "*", "max"];

/// A pipeline of unary maps and zips with `v` over `u`, optionally summed.
fn pipeline(stages: &[(u8, u8, i8)], reduce: bool) -> String {
    let mut e = "u".to_string();
    for &(kind, op, c) in stages {
        let op = OPS[op as usize % OPS.len()];
        e = if kind % 2 == 0 {
            format!("(map (lam (x) ({op} x {c})) {e})")
        } else {
            format!("(zip (lam (x y) ({op} y x)) {e} v)")
        };
    }
    if reduce {
        e = format!("(reduce + {e})");
    }
    format!("(input u ((N,1))) (input v ((N,1))) {e}")
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn fusion_preserves_meaning(
        stages in prop::collection::vec((any::<u8>(), any::<u8>(), -3i8..=3), 1..6),
        reduce: bool,
        n in 1usize..9,
        seed: u64,
    ) {
        let p = parse_program(&pipeline(&stages, reduce), &ParseOptions::with_size(n)).unwrap();
        let ins: Inputs<i64> = random_inputs(&p.env, seed);
        let fused = fuse_fixpoint(&p.expr);
        prop_assert_eq!(hof_count(&fused), 1);
        let want = evaluate(&p.expr, &ins).unwrap();
        prop_assert_eq!(evaluate(&fused, &ins).unwrap().to_vec(), want.to_vec());
        let ran = run(&lower(&fused, &p.env).unwrap(), &ins).unwrap();
        prop_assert_eq!(checksum(&ran), checksum(&want));
    }

    #[test]
    fn printing_round_trips(stages in prop::collection::vec((any::<u8>(), any::<u8>(), -3i8..=3), 1..6), reduce: bool) {
        let p = parse_program(&pipeline(&stages, reduce), &ParseOptions::with_size(4)).unwrap();
        let again = parse_program(&program_to_string(&p), &ParseOptions::default()).unwrap();
        prop_assert_eq!(alpha_canonicalize(&again.expr), alpha_canonicalize(&p.expr));
        prop_assert_eq!(again.env, p.env);
    }

    #[test]
    fn rectangular_matmul_variants_agree(m in 1usize..5, k in 1usize..4, n in 1usize..5, seed: u64) {
        let src = String::from(
            "(input A ((K,1),(M,K))) (input B ((N,1),(K,N)))
             (map (lam (ra) (map (lam (cb) (rnz + * ra cb)) (flip 0 1 B))) A)"
        );
        let mut opts = ParseOptions::default();
        opts.sizes.extend([("M".to_string(), m), ("K".to_string(), 2 * k), ("N".to_string(), n)]);
        let p = parse_program(&src, &opts).unwrap();
        let ins: Inputs<i64> = random_inputs(&p.env, seed);
        let want = oracle_matmul(&ins["A"], &ins["B"]).unwrap();
        let (e, _) = prepare(&p.expr, &SubdivMode::Rnz.plan(2), &p.env).unwrap();
        let vs = enumerate_all(&e, &p.env).unwrap().variants;
        prop_assert_eq!(vs.len(), 12);
        for v in vs {
            prop_assert_eq!(evaluate(&v.expr, &ins).unwrap().to_vec(), want.clone());
            prop_assert_eq!(run(&lower(&v.expr, &p.env).unwrap(), &ins).unwrap().to_vec(), want.clone());
        }
    }

    #[test]
    fn view_relayouts_keep_elements(rows in 1usize..7, cols in 1usize..7, b in 1usize..4) {
        let data: Vec<i64> = (0..(rows * cols) as i64).collect();
        let v = View::from_vec(data.clone(), &[cols, rows]).unwrap();
        let t = v.relayout(LayoutOp::Flip { a: 0, b: 1 }).unwrap();
        prop_assert_eq!(t.relayout(LayoutOp::Flip { a: 1, b: 0 }).unwrap().to_vec(), data.clone());
        if cols % b == 0 {
            let s = v.relayout(LayoutOp::Subdiv { dim: 0, block: b }).unwrap();
            prop_assert_eq!(s.to_vec(), data.clone());
            prop_assert_eq!(s.relayout(LayoutOp::Flatten { dim: 0 }).unwrap().to_vec(), data.clone());
        }
        // flattening a transposed view materializes it in logical order
        let f = t.relayout(LayoutOp::Flatten { dim: 0 }).unwrap();
        prop_assert_eq!(f.to_vec(), t.to_vec());
    }
}
