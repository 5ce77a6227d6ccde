//! Reference results computed without sampling: closed-form harmonic
//! partition functions and pair distributions, and exact diagonalization of
//! the two-electron quantum dot.

pub mod dot_ed;
mod dot_polar;
pub mod harmonic;
pub mod quadrature;

pub use dot_ed::{
    dot_connected_ratio, dot_exact_diagonalize, dot_exact_diagonalize_converged, dot_exact_diagonalize_in, dot_free_energy,
    dot_thermal_energy, EdBasis, Level, Parity, SpectrumTable, SpinState, CONVERGENCE_TOLERANCE, DEFAULT_CUTOFF,
};
pub use harmonic::{
    harmonic_pair_distribution, harmonic_pair_distribution_discrete, harmonic_partition,
    harmonic_partition_discrete, HarmonicPairDistribution, HarmonicPartition,
};
