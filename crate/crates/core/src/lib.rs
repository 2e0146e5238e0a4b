pub mod expr;
pub mod linsolve;
pub mod localfn;
pub mod table;
pub mod constraint_algebra;
pub mod bv;
pub mod pullback;
