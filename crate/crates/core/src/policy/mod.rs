//! The mixture-of-experts policy.
//!
//! `K` Gaussian experts over MP parameters, each with a context-conditioned
//! mean network and a shared (context-independent) Cholesky factor, plus
//! `K` scalar energy networks whose softmax over an environment-sampled
//! context batch forms the per-expert curriculum distribution. The prior
//! over experts is uniform; gating and responsibilities follow from Bayes'
//! rule with batch-estimated normalizers.

mod mixture;

pub use mixture::{
    CurriculumDist, Expert, MixturePolicy, PolicySnapshot, ENERGY_CLAMP, LOG_FLOOR,
};

pub(crate) use mixture::curriculum_from_energies as mixture_curriculum_from_energies;
