//! Acceptance suite. Prints one line per criterion and exits nonzero if any
//! criterion fails. All comparisons are exact symbolic equalities; the only
//! tolerances are the wall-clock budgets shown on each line.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use antifield::bv::{
    boundary_condition_check, bv_lagrangian, extract_tensors, independence_check,
    master_equation_check, noether_combinations, ActionInputs, BVAction, BvError, TensorSet,
};
use antifield::constraint_algebra::{
    closure_residual, structure_functions, Model, Provenance, StructureData, DEFAULT_SEED,
};
use antifield::expr::{Expr, Family, Parity, Side, Symbol, SymbolTable};
use antifield::localfn::JetContext;
use antifield::pullback::{
    build_pullback_zero, p_tensors_closed, pullback_k, recursive_expand, w_times_r, PullbackExpansion,
};
use antifield_cli::model_file::load_model;
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixture_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn load(name: &str) -> Model {
    load_model(&fixture_path(name))
        .and_then(|f| f.model(DEFAULT_SEED, None))
        .unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// Everything downstream of a validated model.
struct Pipeline {
    model: Model,
    structure: StructureData,
    exp: PullbackExpansion,
}

impl Pipeline {
    fn new(model: Model, want_j: bool) -> Result<Self, String> {
        let structure = structure_functions(&model, want_j).map_err(|e| e.to_string())?;
        let pz = build_pullback_zero(&model).map_err(|e| e.to_string())?;
        let exp = recursive_expand(&model, &structure, &pz, 3).map_err(|e| e.to_string())?;
        Ok(Pipeline {
            model,
            structure,
            exp,
        })
    }

    fn inputs(&self) -> ActionInputs<'_> {
        ActionInputs::gather(&self.model, &self.structure, &self.exp)
    }

    fn action(&self) -> Result<BVAction, String> {
        bv_lagrangian(&self.inputs()).map_err(|e| e.to_string())
    }

    fn tensors(&self, action: &BVAction) -> Result<TensorSet, String> {
        extract_tensors(&self.inputs(), action, 3).map_err(|e| e.to_string())
    }

    fn master_and_boundary(&self, action: &BVAction) -> Result<(), String> {
        let report = master_equation_check(action, &self.inputs(), 2).map_err(|e| e.to_string())?;
        if let Some(v) = report.violation() {
            return Err(v.to_string());
        }
        let b = boundary_condition_check(action, &self.inputs(), self.model.l0());
        b.violation().map_or(Ok(()), |v| Err(v.to_string()))
    }
}

fn fixtures() -> Vec<(&'static str, Model)> {
    ["m1.toml", "m2.toml", "m3.toml", "m4.toml"]
        .into_iter()
        .map(|f| (f, load(f)))
        .collect()
}

const GENERATED: u64 = 20;

fn generated() -> Vec<(String, Model)> {
    (0..GENERATED)
        .map(|seed| {
            let lm = common::momentum_linear(seed);
            (lm.spec.name.clone(), Model::new(lm.spec).expect("generated models are valid"))
        })
        .collect()
}

fn all_models() -> Vec<(String, Model)> {
    fixtures()
        .into_iter()
        .map(|(n, m)| (n.to_string(), m))
        .chain(generated())
        .collect()
}

fn sign(odd: bool) -> Expr {
    if odd {
        Expr::int(-1)
    } else {
        Expr::one()
    }
}

fn parts(e: &Expr) -> [(Expr, bool); 2] {
    [
        (e.filter(|m| m.parity() == Parity::Even), false),
        (e.filter(|m| m.parity() == Parity::Odd), true),
    ]
}

/// Criterion 1: graded commutation, nilpotency, Leibniz rules, odd
/// derivative anticommutation, round trip and additive gradings.
fn kernel_suite() -> Outcome {
    const CASES: usize = 1000;
    let table = SymbolTable::new(2, 2);
    let mut rng = common::rng(0xa19e);
    let mut checked = 0usize;
    for case in 0..CASES {
        let a = common::random_expr(&mut rng);
        let b = common::random_expr(&mut rng);
        let s = common::POOL[rng.gen_range(0..6)]();
        let fail = |what: &str| format!("case {case}: {what} fails for a = {a}, b = {b}, s = {s}");
        for (ap, ao) in parts(&a) {
            for (bp, bo) in parts(&b) {
                ensure(&ap * &bp == &(&bp * &ap) * &sign(ao && bo), || fail("graded commutation"))?;
                let so = s.is_odd();
                let left = (&ap * &bp).partial(s, Side::Left);
                let expected = &ap.partial(s, Side::Left) * &bp
                    + &sign(ao && so) * &(&ap * &bp.partial(s, Side::Left));
                ensure(left == expected, || fail("left Leibniz"))?;
                let right = (&ap * &bp).partial(s, Side::Right);
                let expected = &ap * &bp.partial(s, Side::Right)
                    + &sign(bo && so) * &(&ap.partial(s, Side::Right) * &bp);
                ensure(right == expected, || fail("right Leibniz"))?;
            }
            if ao {
                ensure((&ap * &ap).is_zero(), || fail("nilpotency"))?;
            }
        }
        let (x, y) = (Symbol::ghost(1), Symbol::qs(1));
        for side in [Side::Left, Side::Right] {
            let xy = a.partial(y, side).partial(x, side);
            let yx = a.partial(x, side).partial(y, side);
            ensure(xy == -yx, || fail("odd derivative anticommutation"))?;
        }
        let printed = table.print(&a);
        ensure(table.parse(&printed).as_ref() == Ok(&a), || fail("parse/print round trip"))?;
        for (ma, _) in a.terms() {
            for (mb, _) in b.terms() {
                if let Some((_, p)) = ma.mul(mb) {
                    ensure(
                        p.ghost_number() == ma.ghost_number() + mb.ghost_number()
                            && p.antighost_number() == ma.antighost_number() + mb.antighost_number(),
                        || fail("additive grading"),
                    )?;
                }
            }
        }
        checked += 1;
    }
    Ok(format!("{checked} seeded expressions, 0 failures"))
}

fn all_zero(tables: &[(&str, Option<&antifield::table::Table>)]) -> Result<(), String> {
    for (name, t) in tables {
        let t = t.ok_or_else(|| format!("{name} missing"))?;
        ensure(t.is_zero(), || format!("{name} is not zero: {:?}", t.nonzero().len()))?;
    }
    Ok(())
}

/// Criterion 2: the abelian fixture.
fn abelian_fixture() -> Outcome {
    let p = Pipeline::new(load("m1.toml"), true)?;
    let s = &p.structure;
    all_zero(&[("C", Some(s.c())), ("V", Some(s.v())), ("J", s.j())])?;
    let action = p.action()?;
    let t = p.tensors(&action)?;
    for (ix, e) in t.r.indices().into_iter().map(|ix| (ix.clone(), t.r.get(&ix).clone())) {
        let expected = if ix[0] == ix[1] { Expr::one() } else { Expr::zero() };
        ensure(e == expected, || format!("R{ix:?} = {e}"))?;
    }
    all_zero(&[("T", t.t.as_ref()), ("E", t.e.as_ref()), ("D", t.d.as_ref()), ("M", t.m.as_ref())])?;
    ensure(t.mismatches.is_empty(), || format!("{:?}", t.mismatches))?;
    p.master_and_boundary(&action)?;
    Ok("C=V=J=0, R identity pattern, T=E=D=M=0, master through order 2, boundary conditions".into())
}

/// Criterion 3: the nonabelian fixture.
fn nonabelian_fixture() -> Outcome {
    let p = Pipeline::new(load("m2.toml"), true)?;
    let c = p.structure.c();
    ensure(p.structure.c_provenance() == Provenance::Solved, || "C not solved".into())?;
    ensure(*c.get(&[0, 0, 1]) == Expr::int(-1), || format!("C[1][1][2] = {}", c.get(&[0, 0, 1])))?;
    ensure(c.nonzero().len() == 2, || "unexpected C entries".into())?;
    ensure(closure_residual(&p.model, c, 0, 1).map_err(|e| e.to_string())?.is_zero(), || {
        "closure residual nonzero".into()
    })?;
    let action = p.action()?;
    let t = p.tensors(&action)?;
    let tt = t.t.as_ref().ok_or("T missing")?;
    ensure(*tt.get(&[0, 0, 1]) == Expr::int(-1), || format!("T[1][1][2] = {}", tt.get(&[0, 0, 1])))?;
    all_zero(&[("E", t.e.as_ref()), ("D", t.d.as_ref()), ("M", t.m.as_ref())])?;
    ensure(t.mismatches.is_empty(), || format!("{:?}", t.mismatches))?;
    ensure(t.symmetry_defects().is_empty(), || format!("{:?}", t.symmetry_defects()))?;
    ensure(action.l.contains(|s| s.family() == Family::GhostStar), || "no ghost-antifield sector".into())?;
    let report = master_equation_check(&action, &p.inputs(), 2).map_err(|e| e.to_string())?;
    let order2 = &report.orders[2];
    let cs_part = order2
        .residual
        .filter(|m| m.symbols().any(|(s, _)| s.family() == Family::GhostStar));
    ensure(cs_part.is_zero() && order2.passes(), || format!("order 2: {}", order2.residual))?;
    p.master_and_boundary(&action)?;
    let ind = independence_check(&p.model, &p.structure, &p.exp).map_err(|e| e.to_string())?;
    ensure(ind.identical_under_j_shift && ind.passes(), || format!("{ind:?}"))?;
    Ok("C1_12 = -1 solved and verified, T1_12 = -1, E=D=M=0, master incl. ghost-antifield sector, J-shift invariant".into())
}

/// Criteria 4 and 5: recursion against the closed formulas, vanishing of
/// the extended constraints, and the Noether identity.
fn oracle_equivalence() -> Outcome {
    let models = all_models();
    let mut count = 0;
    for (name, model) in &models {
        let structure = structure_functions(model, false).map_err(|e| format!("{name}: {e}"))?;
        let pz = build_pullback_zero(model).map_err(|e| format!("{name}: {e}"))?;
        let closed = p_tensors_closed(model.g(), &pz);
        for order in 1..=2 {
            let exp = recursive_expand(model, &structure, &pz, order).map_err(|e| format!("{name}: {e}"))?;
            ensure(exp.p.qs_c == closed.qs_c, || format!("{name}: first-order table differs at order {order}"))?;
            if order == 2 {
                ensure(exp.p.qs_qs_cc == closed.qs_qs_cc, || format!("{name}: second-order table differs"))?;
            }
            for (mu, g) in model.g().iter().enumerate() {
                let k = pullback_k(g, &exp, Some(order)).map_err(|e| e.to_string())?;
                ensure(k.is_zero(), || format!("{name}: extended G{} = {k}", mu + 1))?;
            }
        }
        count += 1;
    }
    Ok(format!("{count} models ({} fixtures + {GENERATED} generated)", models.len() as u64 - GENERATED))
}

fn noether() -> Outcome {
    let models = all_models();
    for (name, model) in &models {
        let pz = build_pullback_zero(model).map_err(|e| format!("{name}: {e}"))?;
        let ctx = JetContext::new(model.n(), model.m());
        let l0 = model.l0().ok_or_else(|| format!("{name}: no L0"))?;
        for (mu, c) in noether_combinations(l0, &pz.r, &ctx).map_err(|e| e.to_string())?.iter().enumerate() {
            ensure(ctx.is_total_derivative(c).map_err(|e| e.to_string())?, || {
                format!("{name}: generator {} gives {c}", mu + 1)
            })?;
        }
    }
    Ok(format!("{} models, every combination a total derivative", models.len()))
}

/// Criterion 6: W R = 0, the boundary term, and the provenance audit.
fn structural_claims() -> Outcome {
    let models = all_models();
    for (name, model) in models {
        let p = Pipeline::new(model, false).map_err(|e| format!("{name}: {e}"))?;
        ensure(w_times_r(&p.exp.zero).is_zero(), || format!("{name}: W R != 0"))?;
        let action = p.action()?;
        let report = master_equation_check(&action, &p.inputs(), 2).map_err(|e| e.to_string())?;
        ensure(report.boundary_vanishes_without_ghosts, || format!("{name}: boundary term survives"))?;
        for o in &report.orders {
            ensure(o.total_derivative && o.boundary_residual.is_zero(), || {
                format!("{name}: order {} residual {} / {}", o.order, o.residual, o.boundary_residual)
            })?;
        }
        ensure(!ActionInputs::CONSUMED.iter().any(|c| *c == "V" || *c == "J"), || "inputs list V or J".into())?;
        let ind = independence_check(&p.model, &p.structure, &p.exp).map_err(|e| e.to_string())?;
        ensure(ind.passes() && ind.structure_reads == ["C"], || format!("{name}: {ind:?}"))?;
    }
    Ok("W R = 0, boundary term reconstructed with zero remainder, V and J never read".into())
}

/// Runs the binary on a canned fault and returns the failing check with the
/// lowest antighost order among the master/pullback/boundary checks.
fn cli_fault(file: &str, expected_check: &str, expected_order: u64) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_antifield"))
        .args(["master", fixture_path(file).to_str().unwrap(), "--format", "json"])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.code() == Some(1), || format!("{file}: exit {:?}", out.status.code()))?;
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    let located = v["checks"].as_array().unwrap().iter().find(|c| {
        c["status"] == "fail" && c["order"].is_u64() && c["name"] != "structure.closure"
    });
    let located = located.ok_or_else(|| format!("{file}: no localized failure"))?;
    ensure(
        located["name"] == expected_check && located["order"] == expected_order,
        || format!("{file}: located {} at {}", located["name"], located["order"]),
    )
}

/// Criterion 7: canned corruptions must be detected at the right order.
fn fault_injection() -> Outcome {
    let cases = [
        ("m1_corrupt_c.toml", "master.total_derivative", 1),
        ("m2_flipped_c.toml", "master.total_derivative", 1),
        ("m3_corrupt_c.toml", "master.total_derivative", 1),
        ("m1_bad_flp.toml", "pullback.zero", 0),
        ("m2_bad_lambda.toml", "pullback.zero", 0),
        ("m1_bad_l0.toml", "boundary.l0", 0),
    ];
    for (file, check, order) in cases {
        cli_fault(file, check, order)?;
    }
    // Sign of the generator tensor R flipped inside the action: the order-0
    // Noether identity is linear in R and still holds, the closure relation
    // with T at order 1 does not.
    let p = Pipeline::new(load("m2.toml"), false)?;
    let action = p.action()?;
    let r_sector = action.l.filter(|m| {
        m.odd().iter().filter(|s| s.family() == Family::CoordStar).count() == 1
            && m.antighost_number() == 1
    });
    let corrupted = BVAction {
        l: &action.l - &r_sector.scale(&antifield::expr::rat(2, 1)),
        ..action.clone()
    };
    let report = master_equation_check(&corrupted, &p.inputs(), 2).map_err(|e| e.to_string())?;
    ensure(report.orders[0].passes(), || "flipped R already fails at order 0".into())?;
    match report.violation() {
        Some(BvError::MasterEquationViolation { order: 1, .. }) => {}
        other => return Err(format!("flipped R: {other:?}")),
    }
    Ok(format!("{} CLI cases exit 1 at the expected order, flipped R detected at order 1", cases.len()))
}

fn main() {
    let criteria: [Criterion; 7] = [
        (1, "kernel algebra suite", Duration::from_secs(5), kernel_suite),
        (2, "abelian fixture", Duration::from_secs(2), abelian_fixture),
        (3, "nonabelian fixture", Duration::from_secs(5), nonabelian_fixture),
        (4, "oracle equivalence", Duration::from_secs(60), oracle_equivalence),
        (5, "Noether identity", Duration::from_secs(60), noether),
        (6, "structural claims", Duration::from_secs(60), structural_claims),
        (7, "fault injection", Duration::from_secs(60), fault_injection),
    ];
    let mut failed = 0;
    for (id, title, budget, run) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|d| {
            if elapsed > budget {
                Err(format!("{d}; over budget"))
            } else {
                Ok(d)
            }
        });
        let (status, detail) = match &outcome {
            Ok(d) => ("PASS", d.as_str()),
            Err(e) => ("FAIL", e.as_str()),
        };
        println!(
            "[{status}] criterion {id}: {title} | tolerance: exact | {:.2}s of {}s | {detail}",
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
        if outcome.is_err() {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} of 7 criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all 7 criteria passed");
}
