pub mod set_calculus;
