"""Shared helpers: brute-force oracles and random-instance factories."""
from itertools import combinations, islice

import numpy as np

from lppm.mdp import make_mdp


def brute_force_lp(c, a_ub, b_ub):
    """Exhaustive vertex enumeration for min c.x, a_ub x <= b_ub, x >= 0.

    Enumerates basic solutions of the slack-extended system [A | I] y = b in
    batches. The caller must supply a bounded feasible region (add an
    explicit sum bound row if needed).
    """
    a_ub = np.asarray(a_ub, dtype=float)
    b_ub = np.asarray(b_ub, dtype=float)
    m, n = a_ub.shape
    full = np.hstack([a_ub, np.eye(m)])
    cost = np.concatenate([c, np.zeros(m)])
    best = np.inf
    combos = combinations(range(n + m), m)
    while True:
        block = np.array(list(islice(combos, 100_000)))
        if block.size == 0:
            break
        mats = full[:, block].transpose(1, 0, 2)     # (n_block, m, m)
        ok = np.abs(np.linalg.det(mats)) > 1e-10
        if not ok.any():
            continue
        rhs = np.broadcast_to(b_ub, (int(ok.sum()), m))[..., None]
        sols = np.linalg.solve(mats[ok], rhs)[..., 0]
        feas = np.all(sols >= -1e-9, axis=1)
        if feas.any():
            vals = np.einsum("ij,ij->i", sols[feas], cost[block[ok][feas]])
            best = min(best, float(vals.min()))
    return None if best == np.inf else best


def random_bounded_lp(rng, max_vars=30, max_rows=5):
    """Feasible bounded LP with a known interior point; returns (c, a_ub, b_ub)."""
    n = int(rng.integers(2, max_vars + 1))
    m = int(rng.integers(2, max_rows + 1))
    a = rng.normal(size=(m, n))
    x0 = rng.random(n)
    b = a @ x0 + rng.random(m) * 0.5
    a = np.vstack([a, np.ones(n)])
    b = np.concatenate([b, [x0.sum() + 5.0]])
    c = rng.normal(size=n)
    return c, a, b


def random_dense_mdp(rng, n_states=4, n_actions=3, meta=False):
    """Fully-available MDP with Dirichlet rows; ergodic under every policy."""
    transition = rng.dirichlet(np.ones(n_states), size=(n_actions, n_states))
    utility = rng.uniform(1.0, 5.0, size=(n_states, n_actions))
    available = tuple(tuple(range(n_actions)) for _ in range(n_states))
    p0 = rng.dirichlet(np.ones(n_states))
    return make_mdp(transition, utility, available, p0)


def random_chain(rng, n):
    return rng.dirichlet(np.ones(n), size=n)


def sample_safe_beliefs(rng, n, secret, epsilon, count):
    """Random beliefs with secret mass <= epsilon (over-mass draws rescaled).

    Rescaled rows land exactly on the secret-mass boundary, which is the
    interesting place for invariance checks.
    """
    secret = list(secret)
    rest = [s for s in range(n) if s not in secret]
    b = rng.dirichlet(np.ones(n), size=count)
    mass = b[:, secret].sum(axis=1)
    over = np.nonzero(mass > epsilon)[0]
    b[np.ix_(over, secret)] *= (epsilon / mass[over])[:, None]
    rest_mass = b[np.ix_(over, rest)].sum(axis=1)
    b[np.ix_(over, rest)] *= ((1.0 - epsilon) / rest_mass)[:, None]
    return b
