//! Backward reachable sets of perturbed linear time-invariant systems.
//!
//! Minimal (AE) and maximal (EA) backward reachable sets are approximated
//! from inside and outside with zonotopes, constrained zonotopes and
//! H-polytopes. All runtime grows polynomially with the state dimension.

pub mod lp;
pub mod geomsets;
pub mod linflow;
pub mod backward;
pub mod oracle;
