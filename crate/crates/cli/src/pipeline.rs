//! Command orchestration: runs the core stages in order and records every
//! outcome as a check. Verification failures end up in the report; malformed
//! input is returned as an error.

use antifield::bv::{
    boundary_condition_check, bv_lagrangian, extract_tensors, independence_check,
    master_equation_check, noether_combinations, ActionInputs, BvError, TensorSet,
};
use antifield::constraint_algebra::{
    hamiltonian_structure, structure_functions, AlgebraError, Model, Provenance, StructureData,
};
use antifield::expr::{Expr, SymbolTable};
use antifield::localfn::JetContext;
use antifield::pullback::{
    build_pullback_zero, pullback_k, recursive_expand, PullbackError, PullbackExpansion, MAX_ORDER,
};
use antifield::table::{entry_key, Table};
use thiserror::Error;

use crate::model_file::{ModelFile, ModelFileError};
use crate::report::{Check, Entries, PullbackSection, Report, StructureSection, TensorSection};

pub const DEFAULT_MAX_ORDER: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Check,
    Tensors,
    Master,
    Report,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Tensors => "tensors",
            Command::Master => "master",
            Command::Report => "report",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Options {
    pub max_order: Option<u32>,
    pub degree_bound: Option<u32>,
    pub seed: u64,
    pub want_j: bool,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            max_order: None,
            degree_bound: None,
            seed: antifield::constraint_algebra::DEFAULT_SEED,
            want_j: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum InputError {
    #[error(transparent)]
    File(#[from] ModelFileError),
    #[error("{0}")]
    Unsupported(String),
}

fn entries(name: &str, t: &Table, table: &SymbolTable) -> Entries {
    Entries(
        t.nonzero()
            .into_iter()
            .map(|(ix, e)| (entry_key(name, &ix), table.print(e)))
            .collect(),
    )
}

struct Run<'a> {
    model: &'a Model,
    report: Report,
}

impl Run<'_> {
    fn print(&self, e: &Expr) -> String {
        self.model.symbols().print(e)
    }

    fn push(&mut self, c: Check) {
        self.report.push(c);
    }

    fn failed(&self) -> bool {
        self.report.first_failure().is_some()
    }

    fn structure(&mut self, want_j: bool) -> Result<Option<StructureData>, InputError> {
        let data = match structure_functions(self.model, want_j) {
            Ok(s) => {
                let how = match s.c_provenance() {
                    Provenance::Supplied => "supplied structure functions verified",
                    Provenance::Solved => "structure functions solved and verified",
                };
                self.push(Check::pass("structure.closure", None).with_message(how));
                self.push(Check::pass("structure.hamiltonian", None));
                if want_j {
                    self.push(Check::pass("structure.jacobi", None));
                }
                s
            }
            Err(AlgebraError::VerificationFailure {
                alpha,
                beta,
                residual,
            }) => {
                self.push(
                    Check::fail("structure.closure", None)
                        .with_residual(residual)
                        .with_message(format!(
                            "VerificationFailure: supplied C fails the closure of G{alpha} and G{beta}"
                        )),
                );
                // Keep going with the supplied C so the downstream checks
                // localize the damage.
                let c = self.model.supplied_c().expect("only supplied C is verified").clone();
                match hamiltonian_structure(self.model) {
                    Ok(v) => {
                        self.push(Check::pass("structure.hamiltonian", None));
                        StructureData::new(c, v, None, Provenance::Supplied)
                    }
                    Err(e) => return self.algebra_failure("structure.hamiltonian", e),
                }
            }
            Err(e) => return self.algebra_failure("structure.closure", e),
        };
        let table = self.model.symbols();
        self.report.structure = Some(StructureSection {
            provenance: match data.c_provenance() {
                Provenance::Supplied => "supplied",
                Provenance::Solved => "solved",
            },
            c: entries("C", data.c(), table),
            v: entries("V", data.v(), table),
            j: data.j().map(|j| entries("J", j, table)),
        });
        data.reset_reads();
        Ok(Some(data))
    }

    fn algebra_failure(&mut self, name: &str, e: AlgebraError) -> Result<Option<StructureData>, InputError> {
        match e {
            AlgebraError::NonCanonicalSymbol(_) => Err(InputError::Unsupported(e.to_string())),
            e => {
                let kind = match e {
                    AlgebraError::FirstClassViolation { .. } => "FirstClassViolation",
                    AlgebraError::NoDecomposition { .. } => "NoDecomposition",
                    _ => "VerificationFailure",
                };
                self.push(Check::fail(name, None).with_message(format!("{kind}: {e}")));
                Ok(None)
            }
        }
    }

    fn pullback(&mut self, structure: &StructureData, order: u32) -> Result<Option<PullbackExpansion>, InputError> {
        let pz = match build_pullback_zero(self.model) {
            Ok(pz) => pz,
            Err(e) => return self.pullback_failure(e),
        };
        self.push(Check::pass("pullback.zero", Some(0)).with_message(pz.source.as_str()));
        self.report.pullback = Some(PullbackSection {
            source: pz.source.as_str(),
            flp: pz.flp.iter().map(|e| self.print(e)).collect(),
            lambda: pz.lambda.iter().map(|e| self.print(e)).collect(),
        });
        let exp = match recursive_expand(self.model, structure, &pz, order) {
            Ok(exp) => exp,
            Err(e) => return self.pullback_failure(e),
        };
        self.push(Check::pass("pullback.expansion", Some(order)));
        let mut residual = Expr::zero();
        for g in self.model.g() {
            residual += pullback_k(g, &exp, Some(order)).map_err(|e| InputError::Unsupported(e.to_string()))?;
        }
        let check = Check::from_bool("pullback.constraints_vanish", Some(order), residual.is_zero());
        self.push(if residual.is_zero() {
            check
        } else {
            check.with_residual(self.print(&residual))
        });
        Ok(Some(exp))
    }

    fn pullback_failure(&mut self, e: PullbackError) -> Result<Option<PullbackExpansion>, InputError> {
        match e {
            PullbackError::PullbackInconsistent {
                relation,
                ref index,
                ref residual,
            } => {
                let c = Check::fail("pullback.zero", Some(0))
                    .with_residual(residual.clone())
                    .with_message(format!("PullbackInconsistent: {relation} at {index}"));
                self.push(c);
                Ok(None)
            }
            PullbackError::RecursionInconsistent { order, ref residual, .. } => {
                let c = Check::fail("pullback.expansion", Some(order))
                    .with_residual(residual.clone())
                    .with_message(e.to_string());
                self.push(c);
                Ok(None)
            }
            e => Err(InputError::Unsupported(e.to_string())),
        }
    }

    fn tensors(&mut self, tensors: &TensorSet) {
        let order_of = |t: &str| match t {
            "S0" => 0,
            "R" => 1,
            "T" | "E" => 2,
            _ => 3,
        };
        let names = ["S0", "R", "T", "E", "D", "M"];
        let present: Vec<&str> = names
            .into_iter()
            .filter(|n| match *n {
                "S0" | "R" => true,
                "T" => tensors.t.is_some(),
                "E" => tensors.e.is_some(),
                "D" => tensors.d.is_some(),
                _ => tensors.m.is_some(),
            })
            .collect();
        for name in present {
            let check = Check::pass(format!("tensors.{name}"), Some(order_of(name)));
            let check = match tensors.mismatches.iter().find(|m| m.tensor == name) {
                Some(m) => Check {
                    status: crate::report::Status::Fail,
                    ..check
                }
                .with_residual(self.print(&m.residual))
                .with_message("closed formula disagrees with the action"),
                None => check,
            };
            self.push(check);
        }
        let defects = tensors.symmetry_defects();
        let check = Check::from_bool("tensors.symmetry", None, defects.is_empty());
        self.push(match defects.first() {
            None => check,
            Some((name, ix)) => check.with_message(format!(
                "{} breaks antisymmetry ({} entries)",
                entry_key(name, ix),
                defects.len()
            )),
        });
        let t = self.model.symbols();
        self.report.tensors = Some(TensorSection {
            s0: self.print(&tensors.s0),
            r: entries("R", &tensors.r, t),
            t: tensors.t.as_ref().map(|x| entries("T", x, t)),
            e: tensors.e.as_ref().map(|x| entries("E", x, t)),
            d: tensors.d.as_ref().map(|x| entries("D", x, t)),
            m: tensors.m.as_ref().map(|x| entries("M", x, t)),
        });
    }

    fn master(&mut self, inputs: &ActionInputs, action: &antifield::bv::BVAction, order: u32) -> Result<(), InputError> {
        let report = master_equation_check(action, inputs, order - 1).map_err(bv_input)?;
        for o in &report.orders {
            let c = Check::from_bool("master.total_derivative", Some(o.order), o.total_derivative);
            self.push(if o.total_derivative {
                c.with_message(if o.identically_zero {
                    "integrand vanishes identically"
                } else {
                    "integrand is a total derivative"
                })
            } else {
                c.with_residual(self.print(&o.residual))
                    .with_message("MasterEquationViolation")
            });
            let ok = o.boundary_residual.is_zero();
            let c = Check::from_bool("master.boundary_term", Some(o.order), ok);
            self.push(if ok {
                c
            } else {
                c.with_residual(self.print(&o.boundary_residual))
                    .with_message("operator-form integrand differs from the time derivative of the boundary term")
            });
        }
        let c = Check::from_bool(
            "master.boundary_vanishes_without_ghosts",
            None,
            report.boundary_vanishes_without_ghosts,
        );
        self.push(c.with_message(format!("boundary term {}", self.print(&report.boundary_term))));

        let b = boundary_condition_check(action, inputs, self.model.l0());
        let push_residual = |run: &mut Self, name: &str, order: u32, r: &Expr| {
            let c = Check::from_bool(name, Some(order), r.is_zero());
            run.push(if r.is_zero() {
                c
            } else {
                c.with_residual(run.print(r)).with_message("BoundaryConditionViolation")
            });
        };
        push_residual(self, "boundary.s0", 0, &b.s0_residual);
        if let Some(r) = &b.lagrangian_residual {
            push_residual(self, "boundary.l0", 0, r);
        }
        let gens: Expr = b.generator_residuals.iter().map(|(_, r)| r.clone()).sum();
        let c = Check::from_bool("boundary.generators", Some(1), b.generator_residuals.is_empty());
        self.push(if b.generator_residuals.is_empty() {
            c
        } else {
            let ((i, mu), _) = b.generator_residuals[0];
            c.with_residual(self.print(&gens))
                .with_message(format!("BoundaryConditionViolation at R[{}][{}]", i + 1, mu + 1))
        });

        let ctx = JetContext::new(self.model.n(), self.model.m());
        let s0 = action.without_antifields();
        let l0 = self.model.l0().unwrap_or(&s0);
        let combos = noether_combinations(l0, &inputs.expansion.zero.r, &ctx).map_err(|e| InputError::Unsupported(e.to_string()))?;
        let mut failing = None;
        for (mu, c) in combos.iter().enumerate() {
            if !ctx.is_total_derivative(c).map_err(|e| InputError::Unsupported(e.to_string()))? {
                failing = Some((mu, c));
                break;
            }
        }
        let check = Check::from_bool("noether", Some(0), failing.is_none());
        self.push(match failing {
            None => check,
            Some((mu, c)) => check
                .with_residual(self.print(c))
                .with_message(format!("generator {} is not a gauge symmetry of L0", mu + 1)),
        });
        Ok(())
    }
}

fn bv_input(e: BvError) -> InputError {
    InputError::Unsupported(e.to_string())
}

/// Runs `command` on a parsed model file.
pub fn run(command: Command, file: &ModelFile, opts: &Options) -> Result<Report, InputError> {
    let order = opts.max_order.or(file.max_order).unwrap_or(DEFAULT_MAX_ORDER);
    if order > MAX_ORDER {
        return Err(InputError::Unsupported(format!(
            "--max-order {order} exceeds the supported maximum {MAX_ORDER}"
        )));
    }
    if command != Command::Check && order == 0 {
        return Err(InputError::Unsupported(format!(
            "`{}` needs --max-order of at least 1",
            command.as_str()
        )));
    }
    let model = file.model(opts.seed, opts.degree_bound)?;
    let mut run = Run {
        model: &model,
        report: Report::new(model.name().to_string(), command.as_str(), order),
    };
    let want_j = opts.want_j || command == Command::Report;
    let Some(structure) = run.structure(want_j)? else {
        return Ok(run.report);
    };
    let Some(exp) = run.pullback(&structure, order)? else {
        return Ok(run.report);
    };
    if command == Command::Check {
        return Ok(run.report);
    }
    let inputs = ActionInputs::gather(&model, &structure, &exp);
    let action = bv_lagrangian(&inputs).map_err(bv_input)?;
    run.push(Check::from_bool("action.grading", None, action.is_graded()));
    run.report.action = Some(run.print(&action.l));
    if matches!(command, Command::Tensors | Command::Report) {
        let tensors = extract_tensors(&inputs, &action, order.min(3)).map_err(bv_input)?;
        run.tensors(&tensors);
    }
    if matches!(command, Command::Master | Command::Report) {
        run.master(&inputs, &action, order)?;
    }
    if command == Command::Report && !run.failed() {
        let ind = independence_check(&model, &structure, &exp).map_err(bv_input)?;
        let reads = ind.structure_reads.join(", ");
        let audit_ok = !ind.structure_reads.iter().any(|r| *r == "V" || *r == "J");
        run.push(
            Check::from_bool("independence.audit", None, audit_ok)
                .with_message(format!("action assembly read structure tables: [{reads}]")),
        );
        run.push(Check::from_bool("independence.j_shift", None, ind.identical_under_j_shift));
        run.push(Check::from_bool("independence.v_shift", None, ind.identical_under_v_shift));
    }
    Ok(run.report)
}
