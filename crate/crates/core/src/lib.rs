pub mod linalg;
pub mod polynomial;
pub mod plant;
pub mod trajectory;
pub mod estimator;
pub mod controller;
pub mod simulation;
