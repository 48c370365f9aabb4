//! Command-line front end: parse, rewrite, enumerate, lower, execute and
//! report.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::ast::sexp::{parse_program, program_to_string, ParseOptions, Program};
use crate::ast::{infer_shape, ElemKind, Expr, PrimOp};
use crate::enumerate::{enumerate_all, extract_spine, matvec_family, prepare, SubdivMode, SubdivPlan, Variant};
use crate::exec::{
    checksum, evaluate, random_inputs, run, seed_from_env, simulate_nest, CacheConfig, Executable, Inputs,
};
use crate::layout::format_chain;
use crate::lower::lower;
use crate::rewrite::{apply_rule, fuse_fixpoint_traced, rewrite_at, RewriteStep, Rule};

#[derive(Debug, Parser)]
#[command(name = "hofforge", version, about = "Rewrite-driven optimizer for map/zip/reduce array programs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Time and cache-simulate every rearrangement; prints CSV.
    Bench(BenchArgs),
    /// Compare every rule site and every variant against the interpreter.
    Check(CheckArgs),
    /// List the rearrangements of a program.
    Enumerate(EnumerateArgs),
    /// Apply one rule and print the result.
    Rewrite(RewriteArgs),
    /// Lower to a loop nest.
    Lower(LowerArgs),
    /// Print the spine, shapes and rewrite chain of each variant.
    Explain(ExplainArgs),
}

#[derive(Debug, Args)]
pub struct ProgramArgs {
    /// S-expression program file.
    #[arg(value_name = "PROGRAM")]
    pub input: PathBuf,
    /// Value of the size symbol `N`.
    #[arg(long, default_value_t = 8)]
    pub size: usize,
}

#[derive(Debug, Args)]
pub struct CacheArgs {
    #[arg(long = "cache-line", default_value_t = 64)]
    pub line: usize,
    #[arg(long = "cache-kib", default_value_t = 32)]
    pub kib: usize,
    #[arg(long = "cache-ways", default_value_t = 8)]
    pub ways: usize,
    /// Capacity of an optional second level in KiB.
    #[arg(long = "l2-kib")]
    pub l2_kib: Option<usize>,
}

impl CacheArgs {
    fn configs(&self) -> (CacheConfig, Option<CacheConfig>) {
        let l1 = CacheConfig {
            line_bytes: self.line,
            capacity_bytes: self.kib * 1024,
            associativity: self.ways,
            element_bytes: 8,
        };
        (l1, self.l2_kib.map(|k| CacheConfig { capacity_bytes: k * 1024, ..l1 }))
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// S-expression program file.
    #[arg(value_name = "PROGRAM")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 512)]
    pub size: usize,
    #[arg(long, default_value_t = 16)]
    pub block: usize,
    /// none, rnz, maps, rnz2 or all.
    #[arg(long, default_value = "none")]
    pub subdiv: String,
    /// Timed runs per variant after one warm-up; 0 skips timing.
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// Skip the cache simulation.
    #[arg(long)]
    pub no_cache: bool,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Keep enumeration order instead of sorting by time.
    #[arg(long)]
    pub no_sort: bool,
    #[command(flatten)]
    pub cache: CacheArgs,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// S-expression program file.
    #[arg(value_name = "PROGRAM")]
    pub input: PathBuf,
    /// Values of `N`, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "2,4,6,8")]
    pub sizes: Vec<usize>,
    /// Random instances per size.
    #[arg(long, default_value_t = 4)]
    pub instances: usize,
    /// Block size for subdivision rules.
    #[arg(long, default_value_t = 2)]
    pub block: usize,
    /// Corrupt the output of the named rule (negative control).
    #[arg(long)]
    pub mutate: Option<String>,
}

#[derive(Debug, Args)]
pub struct EnumerateArgs {
    #[command(flatten)]
    pub program: ProgramArgs,
    /// Subdivide the innermost reduction by this block.
    #[arg(long = "subdiv-rnz")]
    pub subdiv_rnz: Option<usize>,
    /// Subdivide every map by this block.
    #[arg(long = "subdiv-maps")]
    pub subdiv_maps: Option<usize>,
    /// Named subdivision mode, as for bench.
    #[arg(long, conflicts_with_all = ["subdiv_rnz", "subdiv_maps"])]
    pub subdiv: Option<String>,
    #[arg(long, default_value_t = 2)]
    pub block: usize,
}

#[derive(Debug, Args)]
pub struct RewriteArgs {
    #[command(flatten)]
    pub program: ProgramArgs,
    /// Rule name, or `fuse` for the fusion fixpoint.
    #[arg(long)]
    pub rule: String,
    /// Block size or argument position of the rule.
    #[arg(long, default_value_t = 2)]
    pub param: usize,
    /// Site as child indices, comma separated; default is the first site.
    #[arg(long, value_delimiter = ',')]
    pub path: Option<Vec<usize>>,
    /// Reapply at the first site until no site matches.
    #[arg(long)]
    pub fixpoint: bool,
}

#[derive(Debug, Args)]
pub struct LowerArgs {
    #[command(flatten)]
    pub program: ProgramArgs,
    /// Print the full loop nest.
    #[arg(long)]
    pub dump: bool,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub program: ProgramArgs,
    #[arg(long, default_value_t = 2)]
    pub block: usize,
}

/// Exit status for semantic mismatches.
pub const EXIT_MISMATCH: u8 = 1;
/// Exit status for usage, parse and other input errors.
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Mismatch(String),
}

type Outcome = Result<String, Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

pub fn load(path: &Path, size: usize, kind: ElemKind) -> Result<Program, Failure> {
    let src = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    parse_program(&src, &ParseOptions::with_size(size).kind(kind)).map_err(|e| usage(format!("{}:{e}", path.display())))
}

fn mode(name: &str) -> Result<SubdivMode, Failure> {
    SubdivMode::from_name(name)
        .ok_or_else(|| usage(format!("unknown subdivision `{name}`; expected one of {}", SubdivMode::NAMES.join(", "))))
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantReport {
    pub variant_id: usize,
    pub spine: String,
    pub layouts: String,
    pub checksum: String,
    pub median_ms: Option<f64>,
    pub misses: Option<u64>,
    pub hits: Option<u64>,
    pub acc_elems: usize,
}

pub const CSV_HEADER: [&str; 8] = ["variant_id", "spine", "layouts", "checksum", "median_ms", "misses", "hits", "acc_elems"];

pub fn bench_reports(args: &BenchArgs) -> Result<Vec<VariantReport>, Failure> {
    let p = load(&args.input, args.size, ElemKind::Float)?;
    let plan = mode(&args.subdiv)?.plan(args.block);
    let (e, _) = prepare(&p.expr, &plan, &p.env).map_err(usage)?;
    let variants = enumerate_all(&e, &p.env).map_err(usage)?.variants;
    let inputs = random_inputs::<f64>(&p.env, seed_from_env());
    let (l1, l2) = args.cache.configs();
    l1.validate().map_err(usage)?;
    let mut rows = Vec::with_capacity(variants.len());
    for (k, v) in variants.iter().enumerate() {
        let nest = lower(&v.expr, &p.env).map_err(usage)?;
        let mut exe = Executable::new(&nest, &inputs).map_err(usage)?;
        let median_ms = (args.repeats > 0).then(|| exe.time(args.repeats));
        if args.repeats == 0 {
            exe.execute();
        }
        let out = exe.output().map_err(usage)?;
        let stats = if args.no_cache { None } else { Some(simulate_nest(&nest, l1, l2).map_err(usage)?) };
        rows.push(VariantReport {
            variant_id: k + 1,
            spine: v.labels.join(" "),
            layouts: v.layouts_string(),
            checksum: checksum(&out),
            median_ms,
            misses: stats.as_ref().map(|s| s.total.misses),
            hits: stats.as_ref().map(|s| s.total.hits),
            acc_elems: nest.acc_elems(),
        });
    }
    if !args.no_sort && args.repeats > 0 {
        rows.sort_by(|a, b| a.median_ms.unwrap_or(0.0).total_cmp(&b.median_ms.unwrap_or(0.0)));
    }
    Ok(rows)
}

pub fn write_csv<W: std::io::Write>(rows: &[VariantReport], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER)?;
    let opt = |x: Option<String>| x.unwrap_or_default();
    for r in rows {
        out.write_record([
            r.variant_id.to_string(),
            r.spine.clone(),
            r.layouts.clone(),
            r.checksum.clone(),
            opt(r.median_ms.map(|m| format!("{m:.3}"))),
            opt(r.misses.map(|m| m.to_string())),
            opt(r.hits.map(|h| h.to_string())),
            r.acc_elems.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn bench(args: &BenchArgs) -> Outcome {
    let rows = bench_reports(args)?;
    let mut buf = Vec::new();
    write_csv(&rows, &mut buf).map_err(usage)?;
    match &args.csv {
        Some(path) => {
            std::fs::write(path, &buf).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            Ok(format!("wrote {} rows to {}\n", rows.len(), path.display()))
        }
        None => Ok(String::from_utf8(buf).expect("csv is utf-8")),
    }
}

/// First `+` to `-`, else first `*` to `+`.
fn corrupt(e: &Expr) -> Expr {
    fn swap(e: &Expr, from: PrimOp, to: PrimOp, done: &mut bool) -> Expr {
        if *done {
            return e.clone();
        }
        match e {
            Expr::Prim(op, xs) if *op == from => {
                *done = true;
                Expr::Prim(to, xs.clone())
            }
            _ => e.map_children(|c| swap(c, from, to, done)),
        }
    }
    let mut done = false;
    let out = swap(e, PrimOp::Add, PrimOp::Sub, &mut done);
    if done {
        return out;
    }
    swap(e, PrimOp::Mul, PrimOp::Add, &mut done)
}

fn check_rules(block: usize) -> Vec<Rule> {
    let mut rules: Vec<Rule> = Rule::NAMES
        .iter()
        .filter(|n| !matches!(**n, "fuse_nzip_nzip" | "subdivide_map" | "subdivide_rnz"))
        .filter_map(|n| Rule::from_name(n, 0))
        .collect();
    rules.extend((0..4).map(Rule::FuseNzipNzip));
    rules.extend([Rule::SubdivideMap(block), Rule::SubdivideRnz(block)]);
    rules
}

/// Candidates compared against the source program at one size.
fn candidates(p: &Program, block: usize, mutate: Option<&str>) -> Vec<(String, Expr, bool)> {
    let mut out = Vec::new();
    for rule in check_rules(block) {
        for (e, step) in apply_rule(rule, &p.expr, &p.env) {
            let e = if mutate == Some(rule.name()) { corrupt(&e) } else { e };
            out.push((format!("rule {rule} at {step}"), e, false));
        }
    }
    for m in [SubdivMode::None, SubdivMode::Rnz] {
        let Ok((e, _)) = prepare(&p.expr, &m.plan(block), &p.env) else { continue };
        let Ok(all) = enumerate_all(&e, &p.env) else { continue };
        for v in all.variants {
            out.push((format!("variant {} (subdiv {})", v.spine_string(), m.name()), v.expr, true));
        }
    }
    out
}

fn check(args: &CheckArgs) -> Outcome {
    if let Some(m) = &args.mutate {
        if !Rule::NAMES.contains(&m.as_str()) {
            return Err(usage(format!("unknown rule `{m}`")));
        }
    }
    let mut sizes = args.sizes.clone();
    sizes.sort_unstable();
    let mut report = String::new();
    let mut checked = 0usize;
    let seed = seed_from_env();
    for &n in &sizes {
        let p = load(&args.input, n, ElemKind::Int)?;
        let cands = candidates(&p, args.block, args.mutate.as_deref());
        for k in 0..args.instances {
            let inputs: Inputs<i64> = random_inputs(&p.env, seed.wrapping_add(1000 * k as u64));
            let reference = evaluate(&p.expr, &inputs).map_err(usage)?;
            for (what, e, lowered) in &cands {
                let got = evaluate(e, &inputs).map_err(|err| Failure::Mismatch(format!("{what}: {err}")))?;
                let mut ok = got.shape().extents() == reference.shape().extents() && got.to_vec() == reference.to_vec();
                if ok && *lowered {
                    let nest = lower(e, &p.env).map_err(|err| Failure::Mismatch(format!("{what}: {err}")))?;
                    let ran = run(&nest, &inputs).map_err(|err| Failure::Mismatch(format!("{what}: {err}")))?;
                    ok = ran.to_vec() == reference.to_vec();
                }
                if !ok {
                    return Err(Failure::Mismatch(format!("FAIL {what}: mismatch at N={n}, instance {k}")));
                }
                checked += 1;
            }
        }
        let _ = writeln!(report, "N={n}: {} candidates x {} instances ok", cands.len(), args.instances);
    }
    let _ = writeln!(report, "PASS {checked} comparisons");
    Ok(report)
}

fn enumerate(args: &EnumerateArgs) -> Outcome {
    let p = load(&args.program.input, args.program.size, ElemKind::Int)?;
    let plan = match &args.subdiv {
        Some(m) => mode(m)?.plan(args.block),
        None => SubdivPlan { maps: args.subdiv_maps, rnz: args.subdiv_rnz, rnz_again: None },
    };
    let (e, _) = prepare(&p.expr, &plan, &p.env).map_err(usage)?;
    let all = enumerate_all(&e, &p.env).map_err(usage)?;
    let mut out = String::new();
    for v in &all.variants {
        let _ = writeln!(out, "{}\t{}\t{}", v.labels.join(" "), v.layouts_string(), v.digest());
    }
    if all.blocked > 0 {
        let _ = writeln!(out, "; {} permutations blocked by side conditions", all.blocked);
    }
    Ok(out)
}

fn rewrite(args: &RewriteArgs) -> Outcome {
    let p = load(&args.program.input, args.program.size, ElemKind::Int)?;
    let mut steps: Vec<RewriteStep> = Vec::new();
    let mut cur = p.expr.clone();
    if args.rule == "fuse" {
        let (e, s) = fuse_fixpoint_traced(&cur);
        cur = e;
        steps = s;
    } else {
        let rule = Rule::from_name(&args.rule, args.param).ok_or_else(|| {
            usage(format!("unknown rule `{}`; expected fuse or one of {}", args.rule, Rule::NAMES.join(", ")))
        })?;
        // bounded because exchanges alone never reach a fixed point
        for _ in 0..if args.fixpoint { 1000 } else { 1 } {
            let next = match &args.path {
                Some(path) => rewrite_at(rule, &cur, path, &p.env).ok(),
                None => apply_rule(rule, &cur, &p.env).into_iter().next(),
            };
            let Some((e, step)) = next else { break };
            cur = e;
            steps.push(step);
        }
        if steps.is_empty() {
            return Err(usage(format!("rule {rule} matches no site")));
        }
    }
    let mut out = String::new();
    for s in &steps {
        let _ = writeln!(out, "{s}");
    }
    out.push_str(&program_to_string(&Program { env: p.env, expr: cur }));
    Ok(out)
}

fn lower_cmd(args: &LowerArgs) -> Outcome {
    let p = load(&args.program.input, args.program.size, ElemKind::Int)?;
    let (e, _) = prepare(&p.expr, &SubdivPlan::default(), &p.env).map_err(usage)?;
    let nest = lower(&e, &p.env).map_err(usage)?;
    if args.dump {
        return Ok(nest.dump());
    }
    Ok(format!(
        "loops {}\nregisters {}\naccumulators {}\nacc_elems {}\n",
        nest.loops,
        nest.registers,
        nest.accumulators.len(),
        nest.acc_elems()
    ))
}

fn explain_variant(out: &mut String, v: &Variant) {
    let _ = writeln!(out, "  {}  [{}]", v.labels.join(" "), v.layouts_string());
    for s in &v.steps {
        let _ = writeln!(out, "    {s}");
    }
}

fn explain(args: &ExplainArgs) -> Outcome {
    let p = load(&args.program.input, args.program.size, ElemKind::Int)?;
    let mut out = String::new();
    for (name, ty) in &p.env {
        let _ = writeln!(out, "input {name} {}", ty.shape);
    }
    let result = infer_shape(&p.expr, &p.env).map_err(usage)?;
    let _ = writeln!(out, "result {}", result.shape);
    let (e, prep) = prepare(&p.expr, &SubdivPlan::default(), &p.env).map_err(usage)?;
    for s in &prep {
        let _ = writeln!(out, "fuse {s}");
    }
    let spine = extract_spine(&e).map_err(usage)?;
    let _ = writeln!(out, "spine {}", spine.labels().join(" "));
    let all = enumerate_all(&e, &p.env).map_err(usage)?;
    let _ = writeln!(out, "variants {}", all.variants.len());
    for v in &all.variants {
        explain_variant(&mut out, v);
    }
    if let Ok(fam) = matvec_family(&p.expr, args.block, &p.env) {
        let _ = writeln!(out, "matvec family (block {})", args.block);
        for v in &fam {
            let chains: Vec<String> = v.input_layouts.iter().map(|(n, c)| format_chain(n, c)).collect();
            let _ = writeln!(out, "  {}: {}  [{}]", v.id, v.labels.join(" "), chains.join("; "));
        }
    }
    Ok(out)
}

pub fn execute(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Bench(a) => bench(a),
        Command::Check(a) => check(a),
        Command::Enumerate(a) => enumerate(a),
        Command::Rewrite(a) => rewrite(a),
        Command::Lower(a) => lower_cmd(a),
        Command::Explain(a) => explain(a),
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(text) => {
            let mut stdout = std::io::stdout().lock();
            let _ = stdout.write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Mismatch(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(EXIT_MISMATCH)
        }
    }
}
