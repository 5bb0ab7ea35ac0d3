"""Per-step obfuscation mechanisms and their closed-loop demonstrations.

Each mechanism designs one step's conditional distribution over cloaking
actions given the true state, against the adversary's current belief. The
demonstrations propagate both the true user distribution and the adversary
belief under the designed mechanisms and log the privacy metrics.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adversary import belief_update
from .mdp import Mdp
from .metrics import validate_distance_matrix
from .optim import FwResult, LinearProgram, maximize_concave, solve_lp

LOG_FLOOR = 1e-300


class MechanismInfeasibleError(RuntimeError):
    """No per-step mechanism satisfies the requested constraints."""


def step_user(mdp: Mdp, p: np.ndarray, f: np.ndarray):
    """Advance the true state distribution one step under mechanism f.

    Returns (p_next, action_dist); the action marginal is what the adversary
    observes in expectation.
    """
    p = np.asarray(p, dtype=float)
    f = np.asarray(f, dtype=float)
    action_dist = f.T @ p
    p_next = np.einsum("s,sa,asn->n", p, f, mdp.transition)
    return p_next, action_dist


def uniform_mechanism(mdp: Mdp) -> np.ndarray:
    """Equal probability over the available actions of each state."""
    f = np.zeros((mdp.n_states, mdp.n_actions))
    for s, acts in enumerate(mdp.available):
        f[s, list(acts)] = 1.0 / len(acts)
    return f


def _pairs(mdp: Mdp):
    return [(s, a) for s in range(mdp.n_states) for a in mdp.available[s]]


def _row_constraints(mdp: Mdp, pairs):
    """Row-stochasticity of the mechanism over its available pairs."""
    a_eq = np.zeros((mdp.n_states, len(pairs)))
    for k, (s, _) in enumerate(pairs):
        a_eq[s, k] = 1.0
    return a_eq, np.ones(mdp.n_states)


def _posterior_map(mdp: Mdp, belief: np.ndarray, p_user: np.ndarray, pairs) -> np.ndarray:
    """Matrix Phi with posterior = Phi^T f_vec for the flattened mechanism."""
    w = np.einsum("aqr,q->ar", mdp.transition, belief)  # w[a, j] = (T_a^T b)(j)
    phi = np.zeros((len(pairs), mdp.n_states))
    for k, (s, a) in enumerate(pairs):
        phi[k] = p_user[s] * w[a]
    return phi


def _expand(mdp: Mdp, pairs, f_vec: np.ndarray) -> np.ndarray:
    f = np.zeros((mdp.n_states, mdp.n_actions))
    for k, (s, a) in enumerate(pairs):
        f[s, a] = max(float(f_vec[k]), 0.0)
    # exact row normalization against solver dust
    f /= f.sum(axis=1, keepdims=True)
    return f


def max_entropy_mechanism(mdp: Mdp, belief: np.ndarray, p_user: np.ndarray,
                          gap_tol: float = 1e-6, max_iter: int = 500):
    """Mechanism maximizing the Shannon entropy of the next adversary belief.

    The posterior is affine in the mechanism, so this is concave; solved by
    the conditional-gradient loop seeded at the uniform mechanism. Returns
    (f, FwResult).
    """
    pairs = _pairs(mdp)
    phi = _posterior_map(mdp, belief, np.asarray(p_user, dtype=float), pairs)
    a_eq, b_eq = _row_constraints(mdp, pairs)

    def posterior(f_vec):
        post = phi.T @ f_vec
        return post / post.sum()

    def fun(f_vec):
        b = posterior(f_vec)
        pos = b > 0.0
        return float(-np.sum(b[pos] * np.log(b[pos])))

    def grad(f_vec):
        b = np.maximum(phi.T @ f_vec, LOG_FLOOR)
        return phi @ (-(1.0 + np.log(b)))

    x0 = np.array([1.0 / len(mdp.available[s]) for s, _ in pairs])
    fw = maximize_concave(fun, grad, LinearProgram(np.zeros(len(pairs)), a_eq=a_eq, b_eq=b_eq),
                          x0=x0, gap_tol=gap_tol, max_iter=max_iter)
    return _expand(mdp, pairs, fw.x), fw


def max_inference_error_mechanism(mdp: Mdp, belief: np.ndarray, p_user: np.ndarray,
                                  distance: np.ndarray):
    """Mechanism maximizing the adversary's next-step expected inference error.

    The inner minimum over estimates makes the objective piecewise linear and
    concave; solved exactly as an epigraph LP over (mechanism, tau).
    """
    distance = validate_distance_matrix(distance)
    pairs = _pairs(mdp)
    phi = _posterior_map(mdp, belief, np.asarray(p_user, dtype=float), pairs)
    a_eq, b_eq = _row_constraints(mdp, pairs)
    n, np_ = mdp.n_states, len(pairs)
    # tau <= sum_j post(j) d(j, shat) for every estimate shat
    cols = phi @ distance  # cols[k, shat]
    a_ub = np.hstack([-cols.T, np.ones((n, 1))])
    a_eq_full = np.hstack([a_eq, np.zeros((n, 1))])
    c = np.zeros(np_ + 1)
    c[-1] = -1.0
    sol = solve_lp(LinearProgram(c, a_ub=a_ub, b_ub=np.zeros(n),
                                 a_eq=a_eq_full, b_eq=b_eq))
    if sol.status != "optimal":
        raise RuntimeError(f"inference-error LP unexpectedly {sol.status}")
    return _expand(mdp, pairs, sol.x[:np_]), float(sol.x[-1])


def dp_mechanism(mdp: Mdp, belief: np.ndarray, p_user: np.ndarray, eps_dp: float):
    """Cheapest mechanism keeping all pairwise belief ratios within e^eps_dp.

    Minimizes the expected quality loss subject to
    post(i) b(j) <= e^eps post(j) b(i) for every ordered state pair; raises
    MechanismInfeasibleError when no mechanism satisfies the constraints.
    """
    if eps_dp <= 0.0:
        raise ValueError("eps_dp must be positive")
    belief = np.asarray(belief, dtype=float)
    p_user = np.asarray(p_user, dtype=float)
    pairs = _pairs(mdp)
    phi = _posterior_map(mdp, belief, p_user, pairs)
    a_eq, b_eq = _row_constraints(mdp, pairs)
    n = mdp.n_states
    bound = float(np.exp(eps_dp))
    rows = []
    for i in range(n):
        for j in range(n):
            if i != j:
                rows.append(phi[:, i] * belief[j] - bound * phi[:, j] * belief[i])
    a_ub = np.array(rows)
    c = np.array([p_user[s] * mdp.utility[s, a] for s, a in pairs])
    sol = solve_lp(LinearProgram(c, a_ub=a_ub, b_ub=np.zeros(len(rows)),
                                 a_eq=a_eq, b_eq=b_eq))
    if sol.status != "optimal":
        raise MechanismInfeasibleError(
            f"no mechanism keeps belief ratios within e^{eps_dp:g} ({sol.status})")
    return _expand(mdp, pairs, sol.x)


@dataclass
class BaselineRollout:
    kind: str
    beliefs: np.ndarray         # (horizon + 1, n)
    user: np.ndarray            # (horizon + 1, n)
    mechanisms: list[np.ndarray]
    losses: np.ndarray          # (horizon,) expected quality loss per step
    diagnostics: dict = field(default_factory=dict)


def run_baseline(mdp: Mdp, kind: str, b0: np.ndarray, p0: np.ndarray, horizon: int,
                 distance: np.ndarray | None = None, eps_dp: float | None = None,
                 fw_gap_tol: float = 1e-6, fw_max_iter: int = 500) -> BaselineRollout:
    """Closed-loop demonstration of one per-step mechanism family.

    kind is "max_entropy", "max_inference_error" or "dp"; the latter two need
    `distance` and `eps_dp` respectively.
    """
    n = mdp.n_states
    beliefs = np.empty((horizon + 1, n))
    user = np.empty((horizon + 1, n))
    beliefs[0] = np.asarray(b0, dtype=float)
    user[0] = np.asarray(p0, dtype=float)
    mechanisms: list[np.ndarray] = []
    losses = np.empty(horizon)
    gaps = []
    for t in range(horizon):
        b, p = beliefs[t], user[t]
        if kind == "max_entropy":
            f, fw = max_entropy_mechanism(mdp, b, p, gap_tol=fw_gap_tol, max_iter=fw_max_iter)
            gaps.append(fw.gap)
        elif kind == "max_inference_error":
            if distance is None:
                raise ValueError("max_inference_error needs a distance matrix")
            f, _ = max_inference_error_mechanism(mdp, b, p, distance)
        elif kind == "dp":
            if eps_dp is None:
                raise ValueError("dp needs eps_dp")
            f = dp_mechanism(mdp, b, p, eps_dp)
        else:
            raise ValueError(f"unknown baseline kind {kind!r}")
        mechanisms.append(f)
        p_next, action_dist = step_user(mdp, p, f)
        losses[t] = float(np.einsum("s,sa,sa->", p, f, mdp.utility))
        beliefs[t + 1] = belief_update(mdp, b, action_dist)
        user[t + 1] = p_next / p_next.sum()
    diag = {"fw_gaps": gaps} if gaps else {}
    return BaselineRollout(kind, beliefs, user, mechanisms, losses, diag)
