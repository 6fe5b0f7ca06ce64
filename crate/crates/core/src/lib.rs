pub mod algebra;
pub mod bdd;
pub mod dual;
pub mod model;
pub mod pipeline;
pub mod primal;
pub mod testkit;
