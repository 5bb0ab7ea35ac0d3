"""Location-privacy preserving mobility: models, metrics, synthesis."""

from .mdp import (Mdp, StateMeta, ActionMeta, NonErgodicError, NotUnichainError,
                  make_mdp, induce_chain, stationary_distribution, average_cost,
                  occupancy_from_policy, policy_from_theta, uniform_policy, simulate)
from .metrics import PrivacySpec, entropy, expected_inference_error, max_dp_ratio
from .synthesis import (InfeasibleSynthesisError, SynthesisResult,
                        synthesize_unconstrained, synthesize_eps_private,
                        synthesize_asymptotic, verify_invariance, theorem1_certificate)

__all__ = [
    "Mdp", "StateMeta", "ActionMeta", "NonErgodicError", "NotUnichainError",
    "make_mdp", "induce_chain", "stationary_distribution", "average_cost",
    "occupancy_from_policy", "policy_from_theta", "uniform_policy", "simulate",
    "PrivacySpec", "entropy", "expected_inference_error", "max_dp_ratio",
    "InfeasibleSynthesisError", "SynthesisResult", "synthesize_unconstrained",
    "synthesize_eps_private", "synthesize_asymptotic", "verify_invariance",
    "theorem1_certificate",
]

__version__ = "0.1.0"
