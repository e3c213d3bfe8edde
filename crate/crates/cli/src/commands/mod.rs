pub mod eval;
pub mod inspect;
pub mod run;
pub mod tools;
