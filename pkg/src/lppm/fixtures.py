"""Built-in demonstration model: a six-library campus with six cloaking regions.

States sit on a two-row grid 300 m apart; each cloaking region is usable
from the libraries it was drawn around, and picking a region at a library it
does not contain is not offered (those pairs carry the sentinel loss). The
walk structure: from each library the user stays or moves to the depicted
neighbors uniformly, independent of the cloak chosen among the usable ones.
"""
from __future__ import annotations

import numpy as np

from .geo import offset_latlon
from .mdp import ActionMeta, Mdp, StateMeta, make_mdp

CAMPUS_REF = (40.0, -75.0)
STATE_RADIUS_M = 30.0

# planar layout in meters: top row s5 s2 s1, bottom row s6 s4 s3
_STATE_XY = [(600.0, 300.0), (300.0, 300.0), (600.0, 0.0),
             (300.0, 0.0), (0.0, 300.0), (0.0, 0.0)]
_ACTION_XY = [(600.0, 150.0), (200.0, 200.0), (0.0, 150.0),
              (400.0, 100.0), (500.0, 200.0), (150.0, 0.0)]
_ACTION_RADIUS_M = [60.0, 75.0, 50.0, 90.0, 55.0, 65.0]

# usable cloaking regions per library and the successor set of the walk
CAMPUS_AVAILABLE = ((0, 4), (1, 3, 4), (0, 3, 4), (1, 3, 5), (1, 2), (2, 5))
CAMPUS_SUCCESSORS = ((0, 1, 2), (0, 1, 2, 4), (1, 2, 3), (2, 3, 4), (3, 4, 5), (3, 4, 5))

CAMPUS_SECRET_STATE = 3  # s4


def campus() -> Mdp:
    """The six-state campus fixture."""
    n = len(_STATE_XY)
    m = len(_ACTION_XY)
    transition = np.zeros((m, n, n))
    for s, succ in enumerate(CAMPUS_SUCCESSORS):
        row = np.zeros(n)
        row[list(succ)] = 1.0 / len(succ)
        for a in CAMPUS_AVAILABLE[s]:
            transition[a, s] = row
    utility = np.zeros((n, m))
    for s in range(n):
        for a in CAMPUS_AVAILABLE[s]:
            utility[s, a] = (_ACTION_RADIUS_M[a] / STATE_RADIUS_M) ** 2
    p0 = np.zeros(n)
    p0[0] = 1.0
    state_meta = []
    for s, (x, y) in enumerate(_STATE_XY):
        lat, lon = offset_latlon(*CAMPUS_REF, x, y)
        state_meta.append(StateMeta(f"s{s + 1}", lat, lon, np.pi * STATE_RADIUS_M ** 2))
    action_meta = []
    for a, (x, y) in enumerate(_ACTION_XY):
        lat, lon = offset_latlon(*CAMPUS_REF, x, y)
        action_meta.append(ActionMeta("abcdef"[a], lat, lon, _ACTION_RADIUS_M[a]))
    return make_mdp(transition, utility, CAMPUS_AVAILABLE, p0,
                    state_meta=state_meta, action_meta=action_meta)
