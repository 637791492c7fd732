//! Independent checks of assembled solutions: PDE residuals, integral
//! functionals and their evolution laws, and the inequalities used for
//! global existence and blow-up.

pub mod functionals;
pub mod inequalities;
pub mod residual;
pub mod separated;

pub use functionals::{
    functional_identities, functionals, Extras, FunctionalSnapshot, IdentityRow, IdentityTable, QuadSpec, SeparatedForm,
};
pub use inequalities::{
    field_bounds, lemma51_check, lemma51_constant, singularity_criterion, singularity_from_snapshot, Lemma51Report,
    SingularityInput, SingularityReport,
};
pub use residual::{
    pde_residual, ConstantState, Forcing, GasState, LevelReport, NodeResidual, PointEval, ResidualGrid, ResidualReport,
    Sample,
};
pub use separated::SeparatedSolution;
