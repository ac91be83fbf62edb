//! Analysis of dynamics on compact, totally disconnected spaces that are
//! presented combinatorially.
//!
//! Two presentations are supported:
//!
//! * finite towers ([`inverse_limit::InverseSystem`]): an inverse sequence of
//!   finite dynamical systems with commuting bonding maps, truncated at a
//!   finite depth. Points are threads through the tower; the space is the
//!   inverse limit.
//! * vertex subshifts of finite type ([`shift::ShiftSpace`]): right-infinite
//!   walks on a finite 0/1 transition matrix, with the shift map.
//!
//! On top of those the crate provides the clopen partition calculus
//! ([`partition`]): dynamical partitions, common refinements, refinement from
//! itineraries, extension of partitions from invariant subsystems and to
//! preimages, and the search for dynamical ε-partitions. The [`cech`] module
//! computes the degree-zero pullback action on locally constant functions,
//! structural spectra (roots of unity), solvability of the coboundary
//! equation `ψ∘f − λψ = χ_V`, and eigenvalue certificates that realize the
//! dichotomy between the two presentations: towers never carry eigenvalues of
//! modulus ∉ {0, 1}, while shifts with branching itinerary behaviour carry
//! all of them. The [`expansion`] module verifies, by exhaustive enumeration
//! with rigorous tail bounds, that sparse binary expansions in base λ are
//! injective once the sparsity threshold `r(λ)` is met.
//!
//! Metric conventions, fixed once for the whole crate:
//!
//! * towers: `d(x, y) = 2^{-min{n ≥ 1 : π_n(x) ≠ π_n(y)}}`; the level-n
//!   cylinder partition has mesh ≤ 2^{-n};
//! * shifts: `d(x, y) = 2^{-min{k : x_k ≠ y_k}}`; a length-m cylinder is
//!   assigned the diameter bound 2^{-(m-1)}.
//!
//! All diameter decisions reduce to integer exponent comparisons; no
//! floating-point geometry is involved.
//!
//! ```
//! use zerodim::cech::{eigenvalue_certificate_shift, eigenvalue_certificate_tower, CertificateVerdict};
//! use zerodim::inverse_limit::InverseSystem;
//! use zerodim::shift::ShiftSpace;
//!
//! // The dyadic adding machine admits dynamical ε-partitions at every scale,
//! // so no eigenvalue of modulus ∉ {0, 1} occurs.
//! let odometer = InverseSystem::odometer(&[2, 2, 2]).unwrap();
//! let cert = eigenvalue_certificate_tower(&odometer).unwrap();
//! assert_eq!(cert.verdict, CertificateVerdict::NoneAre);
//!
//! // The golden-mean shift branches, so every such eigenvalue occurs.
//! let gm = ShiftSpace::golden_mean();
//! let cert = eigenvalue_certificate_shift(&gm, 4).unwrap();
//! assert_eq!(cert.verdict, CertificateVerdict::AllNonunitModuliAreEigenvalues);
//! assert!(gm.entropy().unwrap() > 0.0);
//! ```

// Indexed loops are the clearer form in the elimination and transfer-count
// kernels (lockstep indexing, in-place row updates).
#![allow(clippy::needless_range_loop)]

pub mod cech;
pub mod dynamics;
pub mod expansion;
pub mod inverse_limit;
pub mod partition;
pub mod scalar;
pub mod shift;

pub use dynamics::{FiniteSystem, StateSet};
pub use inverse_limit::{InverseSystem, Thread};
pub use shift::{ClopenSet, ShiftSpace};

#[cfg(test)]
mod concurrency_contract {
    // Every analysis type is an immutable value; concurrent reads are safe.
    const fn assert_send_sync<T: Send + Sync>() {}

    #[test]
    fn analysis_types_are_send_sync() {
        assert_send_sync::<crate::FiniteSystem>();
        assert_send_sync::<crate::StateSet>();
        assert_send_sync::<crate::InverseSystem>();
        assert_send_sync::<crate::ShiftSpace>();
        assert_send_sync::<crate::ClopenSet>();
        assert_send_sync::<crate::partition::ClopenPartition>();
        assert_send_sync::<crate::cech::EigenvalueCertificate>();
        assert_send_sync::<crate::scalar::LambdaValue>();
    }
}
