pub mod eval;
pub mod fit;
pub mod plan;
pub mod run;
pub mod simulate;
pub mod tune;
