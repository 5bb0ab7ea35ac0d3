"""Policy synthesis with privacy guarantees.

The verification side asks whether the safe belief region (secret mass at
most epsilon) is invariant under the adversary's belief chain; a one-row
linear certificate is equivalent to that invariance and stays linear in the
occupancy measure, so optimal all-time private policies come out of a single
LP. The asymptotic variant only pins the limit belief and is bilinear, so it
runs a seeded multi-start alternation between the policy LP and the exact
stationary belief.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adversary import adversary_matrix, stationary_belief
from .mdp import (Mdp, NonErgodicError, NotUnichainError, average_cost,
                  check_unichain_exhaustive, occupancy_from_policy, policy_from_theta)
from .metrics import PrivacySpec
from .optim import LinearProgram, LpSolution, solve_lp

VERIFY_SLACK = 1e-9


class InfeasibleSynthesisError(RuntimeError):
    """No policy attains the requested privacy level."""

    def __init__(self, message: str, diagnosis: dict | None = None):
        super().__init__(message)
        self.diagnosis = diagnosis or {}


@dataclass
class InvarianceVerdict:
    invariant: bool
    optimum: float                 # worst one-step secret mass reachable from the safe set
    witness: np.ndarray | None     # safe belief escaping the set when not invariant


@dataclass
class Certificate:
    z: float
    beta: np.ndarray
    margin: float                  # smallest row slack of the linear condition


@dataclass
class SynthesisResult:
    mode: str
    theta: np.ndarray
    policy: np.ndarray
    p_inf: np.ndarray
    average_cost: float
    epsilon: float | None = None
    secret_states: tuple[int, ...] | None = None
    certificate: Certificate | None = None
    b_inf: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)


def secret_inflow(chain: np.ndarray, spec: PrivacySpec) -> np.ndarray:
    """Per-state one-step probability of landing in the secret set."""
    chain = np.asarray(chain, dtype=float)
    sel = spec.selector(chain.shape[0])
    return chain @ sel


def verify_invariance(chain: np.ndarray, spec: PrivacySpec) -> InvarianceVerdict:
    """Exact worst-case check of safe-set invariance.

    Maximizes the next-step secret mass over all safe beliefs; the set is
    invariant exactly when that optimum stays at or below epsilon.
    """
    chain = np.asarray(chain, dtype=float)
    n = chain.shape[0]
    sel = spec.selector(n)
    inflow = secret_inflow(chain, spec)
    sol = solve_lp(LinearProgram(-inflow, a_ub=sel[None, :], b_ub=[spec.epsilon],
                                 a_eq=np.ones((1, n)), b_eq=[1.0]))
    if sol.status != "optimal":
        raise RuntimeError(f"invariance LP unexpectedly {sol.status}")
    worst = -sol.objective
    invariant = worst <= spec.epsilon + VERIFY_SLACK
    return InvarianceVerdict(invariant, worst, None if invariant else sol.x)


def theorem1_certificate(chain: np.ndarray, spec: PrivacySpec) -> Certificate | None:
    """Linear invariance certificate (z, beta), or None when none exists.

    Searches the scalar multiplier z >= 0 maximizing the smallest slack of
    the row condition; by LP duality that slack is epsilon minus the worst
    reachable secret mass, so existence coincides with verify_invariance.
    """
    chain = np.asarray(chain, dtype=float)
    n = chain.shape[0]
    sel = spec.selector(n)
    eps = spec.epsilon
    inflow = secret_inflow(chain, spec)
    # variables (z, t): maximize t s.t. t + (eps - sel_j) z <= eps - inflow_j
    rows = np.column_stack([eps - sel, np.ones(n)])
    sol = solve_lp(LinearProgram(np.array([0.0, -1.0]), a_ub=rows, b_ub=eps - inflow,
                                 lb=np.array([0.0, -np.inf])))
    if sol.status != "optimal":
        raise RuntimeError(f"certificate LP unexpectedly {sol.status}")
    z, t = float(sol.x[0]), float(sol.x[1])
    if t < -VERIFY_SLACK:
        return None
    beta = np.maximum(eps - eps * z + z * sel - inflow, 0.0)
    return Certificate(z, beta, t)


def certificate_margin(chain: np.ndarray, spec: PrivacySpec, cert: Certificate) -> float:
    """Smallest slack of the certificate rows; nonnegative means valid."""
    sel = spec.selector(np.asarray(chain).shape[0])
    rows = -spec.epsilon * cert.z + cert.z * sel - secret_inflow(chain, spec) \
        - cert.beta + spec.epsilon
    return float(rows.min())


def _theta_pairs(mdp: Mdp) -> list[tuple[int, int]]:
    return [(s, a) for s in range(mdp.n_states) for a in mdp.available[s]]


def _base_constraints(mdp: Mdp, pairs, n_extra: int):
    """Stationarity and normalization rows over [theta_pairs | extras]."""
    n = mdp.n_states
    nv = len(pairs) + n_extra
    a_eq = np.zeros((n + 1, nv))
    b_eq = np.zeros(n + 1)
    for k, (s, a) in enumerate(pairs):
        for sp in range(n):
            a_eq[sp, k] -= mdp.transition[a, s, sp]
        a_eq[s, k] += 1.0
        a_eq[n, k] = 1.0
    b_eq[n] = 1.0
    return a_eq, b_eq


def _unpack_theta(mdp: Mdp, pairs, x: np.ndarray) -> np.ndarray:
    theta = np.zeros((mdp.n_states, mdp.n_actions))
    for k, (s, a) in enumerate(pairs):
        theta[s, a] = max(float(x[k]), 0.0)
    return theta / theta.sum()


def _require_unichain(mdp: Mdp, check: bool, diagnostics: dict, budget: int = 20_000):
    if not check:
        diagnostics["unichain"] = "skipped"
        return
    report = check_unichain_exhaustive(mdp, budget=budget)
    diagnostics["unichain"] = report.status
    if report.status == "not_unichain":
        raise NotUnichainError(f"deterministic policy {report.witness} induces a reducible chain")


def _finish(mdp: Mdp, mode: str, theta: np.ndarray, diagnostics: dict, **kw) -> SynthesisResult:
    policy, p_inf = policy_from_theta(theta, mdp.available)
    return SynthesisResult(mode=mode, theta=theta, policy=policy, p_inf=p_inf,
                           average_cost=average_cost(mdp, theta),
                           diagnostics=diagnostics, **kw)


def synthesize_unconstrained(mdp: Mdp, check_unichain: bool = True) -> SynthesisResult:
    """Minimum average quality loss with no privacy constraint."""
    diagnostics: dict = {}
    _require_unichain(mdp, check_unichain, diagnostics)
    pairs = _theta_pairs(mdp)
    a_eq, b_eq = _base_constraints(mdp, pairs, 0)
    c = np.array([mdp.utility[s, a] for s, a in pairs])
    sol = solve_lp(LinearProgram(c, a_eq=a_eq, b_eq=b_eq))
    if sol.status != "optimal":
        raise InfeasibleSynthesisError(f"occupancy LP {sol.status}")
    diagnostics.update(lp_status=sol.status, lp_iterations=sol.iterations)
    theta = _unpack_theta(mdp, pairs, sol.x)
    return _finish(mdp, "unconstrained", theta, diagnostics)


def synthesize_eps_private(mdp: Mdp, spec: PrivacySpec,
                           check_unichain: bool = True) -> SynthesisResult:
    """Minimum-loss policy whose safe belief set is invariant at all times.

    One LP over the occupancy measure, the certificate multiplier z and the
    row slacks; the belief chain is linear in the occupancy action marginals,
    so the certificate rows stay linear. Infeasibility is reported with the
    tightest violated row to guide relaxing epsilon.
    """
    diagnostics: dict = {}
    _require_unichain(mdp, check_unichain, diagnostics)
    n, m = mdp.n_states, mdp.n_actions
    sel = spec.selector(n)
    eps = spec.epsilon
    pairs = _theta_pairs(mdp)
    nv = len(pairs) + 1  # theta pairs then z
    a_eq, b_eq = _base_constraints(mdp, pairs, 1)
    # inflow coefficient of pair (s, a) on certificate row j: T[a](j, secret)
    g = np.einsum("aqr,r->aq", mdp.transition, sel)  # g[a, j]
    a_ub = np.zeros((n, nv))
    for k, (s, a) in enumerate(pairs):
        a_ub[:, k] = g[a]
    a_ub[:, -1] = eps - sel
    b_ub = np.full(n, eps)
    c = np.array([mdp.utility[s, a] for s, a in pairs] + [0.0])
    sol = solve_lp(LinearProgram(c, a_ub=a_ub, b_ub=b_ub, a_eq=a_eq, b_eq=b_eq))
    if sol.status != "optimal":
        diagnosis = _diagnose_infeasible(mdp, pairs, a_eq, b_eq, a_ub, b_ub, sel, eps)
        raise InfeasibleSynthesisError(
            f"no policy makes the safe belief set invariant at epsilon={eps:g} "
            f"(tightest row: state {diagnosis['worst_row']}, "
            f"violation {diagnosis['worst_violation']:.3g})", diagnosis)
    diagnostics.update(lp_status=sol.status, lp_iterations=sol.iterations)
    theta = _unpack_theta(mdp, pairs, sol.x)
    z = float(sol.x[-1])
    chain = adversary_matrix(mdp, theta)
    beta = np.maximum(eps - eps * z + z * sel - secret_inflow(chain, spec), 0.0)
    cert = Certificate(z, beta, certificate_margin(chain, spec, Certificate(z, beta, 0.0)))
    result = _finish(mdp, "eps_private", theta, diagnostics, epsilon=eps,
                     secret_states=spec.secret_states, certificate=cert,
                     b_inf=_try_stationary(chain))
    _post_verify(mdp, result, spec, diagnostics)
    return result


def _try_stationary(chain: np.ndarray) -> np.ndarray | None:
    try:
        return stationary_belief(chain)
    except NonErgodicError:
        return None


def _post_verify(mdp: Mdp, result: SynthesisResult, spec: PrivacySpec, diagnostics: dict):
    """The returned policy's own belief chain must pass the exact check."""
    try:
        theta = occupancy_from_policy(mdp, result.policy)
    except NonErgodicError:
        theta = result.theta
    verdict = verify_invariance(adversary_matrix(mdp, theta), spec)
    diagnostics["post_verify_optimum"] = verdict.optimum
    if verdict.optimum > spec.epsilon + 1e-7:
        raise RuntimeError("synthesized policy failed the invariance re-check; "
                           f"worst mass {verdict.optimum:.12g} vs epsilon {spec.epsilon:g}")


def _diagnose_infeasible(mdp, pairs, a_eq, b_eq, a_ub, b_ub, sel, eps) -> dict:
    """Re-solve with elastic certificate rows to find the tightest violation."""
    n = a_ub.shape[0]
    nv = a_ub.shape[1]
    a_ub_el = np.hstack([a_ub, -np.eye(n)])
    a_eq_el = np.hstack([a_eq, np.zeros((a_eq.shape[0], n))])
    c = np.concatenate([np.zeros(nv), np.ones(n)])
    sol = solve_lp(LinearProgram(c, a_ub=a_ub_el, b_ub=b_ub, a_eq=a_eq_el, b_eq=b_eq))
    if sol.status != "optimal":
        return {"worst_row": -1, "worst_violation": float("nan"), "elastic_status": sol.status}
    v = sol.x[nv:]
    worst = int(np.argmax(v))
    return {"worst_row": worst, "worst_violation": float(v[worst]),
            "violations": v.copy(), "elastic_status": "optimal"}


def synthesize_asymptotic(mdp: Mdp, spec: PrivacySpec, n_starts: int = 16, seed: int = 0,
                          max_rounds: int = 200, margin: float = 1e-3,
                          check_unichain: bool = True) -> SynthesisResult:
    """Minimum-loss policy whose limit belief keeps the secret mass below epsilon.

    The limit-belief constraint couples the policy and its stationary belief
    bilinearly, so each start alternates (i) an LP in the occupancy measure
    and a safe belief variable, with the belief chain applied to the previous
    belief iterate and an L1 penalty tying the two, and (ii) the exact
    stationary belief of the freshly synthesized chain. The small margin
    keeps successful limits strictly inside the safe region.
    """
    diagnostics: dict = {"starts": [], "margin": margin}
    _require_unichain(mdp, check_unichain, diagnostics)
    n, m = mdp.n_states, mdp.n_actions
    sel = spec.selector(n)
    eps_eff = spec.epsilon - margin
    if eps_eff <= 0.0:
        raise ValueError("margin leaves no feasible belief region")
    pairs = _theta_pairs(mdp)
    np_ = len(pairs)
    nv = np_ + 2 * n  # theta pairs, belief b, residual slack r
    a_eq_base, b_eq_base = _base_constraints(mdp, pairs, 2 * n)
    # belief simplex and safety rows
    b_simplex = np.zeros((1, nv))
    b_simplex[0, np_:np_ + n] = 1.0
    a_eq = np.vstack([a_eq_base, b_simplex])
    b_eq = np.concatenate([b_eq_base, [1.0]])
    safety = np.zeros((1, nv))
    safety[0, np_:np_ + n] = sel
    u_pairs = np.array([mdp.utility[s, a] for s, a in pairs])
    lam = 100.0 * (1.0 + float(np.abs(u_pairs).max()))
    c = np.concatenate([u_pairs, np.zeros(n), lam * np.ones(n)])
    rng = np.random.default_rng(seed)
    best: SynthesisResult | None = None
    for start in range(n_starts):
        if start == 0:
            b_hat = np.full(n, 1.0 / n)
        else:
            b_hat = rng.dirichlet(np.ones(n))
        b_hat = _project_safe(b_hat, sel, eps_eff)
        info = {"rounds": 0, "status": "running"}
        theta = None
        for rounds in range(1, max_rounds + 1):
            info["rounds"] = rounds
            # (T[a]^T b_hat)(j): coefficient of theta(s, a) on belief row j
            w = np.einsum("aqr,q->ar", mdp.transition, b_hat)  # w[a, j]
            fix = np.zeros((n, nv))
            for k, (s, a) in enumerate(pairs):
                fix[:, k] = w[a]
            resid_up = np.hstack([fix[:, :np_], -np.eye(n), -np.eye(n)])
            resid_dn = np.hstack([-fix[:, :np_], np.eye(n), -np.eye(n)])
            a_ub = np.vstack([safety, resid_up, resid_dn])
            b_ub = np.concatenate([[eps_eff], np.zeros(2 * n)])
            sol = solve_lp(LinearProgram(c, a_ub=a_ub, b_ub=b_ub, a_eq=a_eq, b_eq=b_eq))
            if sol.status != "optimal":
                info["status"] = f"lp_{sol.status}"
                break
            theta = _unpack_theta(mdp, pairs, sol.x)
            try:
                b_next = stationary_belief(adversary_matrix(mdp, theta))
            except NonErgodicError:
                info["status"] = "non_ergodic"
                break
            delta = float(np.abs(b_next - b_hat).sum())
            b_hat = b_next
            if delta <= 1e-9:
                info["status"] = "converged"
                break
        else:
            info["status"] = "round_cap"
        if theta is None:
            diagnostics["starts"].append(info)
            continue
        chain = adversary_matrix(mdp, theta)
        b_inf = _try_stationary(chain)
        if b_inf is None:
            diagnostics["starts"].append(info)
            continue
        residual = float(np.abs(chain.T @ b_inf - b_inf).sum())
        mass = float(sel @ b_inf)
        v = average_cost(mdp, theta)
        info.update(residual=residual, secret_mass=mass, cost=v)
        diagnostics["starts"].append(info)
        feasible = residual <= 1e-7 and mass <= eps_eff + 1e-6
        if feasible and (best is None or v < best.average_cost):
            best = _finish(mdp, "asymptotic", theta, dict(diagnostics),
                           epsilon=spec.epsilon, secret_states=spec.secret_states,
                           b_inf=b_inf)
            best.diagnostics["residual"] = residual
            best.diagnostics["secret_mass_inf"] = mass
    if best is None:
        raise InfeasibleSynthesisError(
            f"no start reached a safe limit belief at epsilon={spec.epsilon:g} "
            "(asymptotic feasibility unknown)", {"starts": diagnostics["starts"]})
    best.diagnostics["starts"] = diagnostics["starts"]
    return best


def _project_safe(b: np.ndarray, sel: np.ndarray, eps_eff: float) -> np.ndarray:
    """Scale secret mass down to half the budget when a draw starts unsafe."""
    mass = float(sel @ b)
    if mass <= eps_eff:
        return b
    target = 0.5 * eps_eff
    secret = sel > 0.0
    out = b.copy()
    out[secret] *= target / mass
    rest = out[~secret].sum()
    if rest > 0.0:
        out[~secret] *= (1.0 - target) / rest
    else:
        out[~secret] = (1.0 - target) / (~secret).sum()
    return out
