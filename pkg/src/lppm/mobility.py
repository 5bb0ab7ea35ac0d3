"""From raw GPS traces to a cloaking MDP.

Stages: stationary-point filtering, density-joinable clustering into points
of interest, k-anonymous cloaking circles over the POIs, empirical visit
transitions, and assembly of the mobility MDP with area-ratio quality
losses. Every stage is deterministic given the input order.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .geo import haversine_m, step_distances_m
from .mdp import ActionMeta, Mdp, StateMeta, make_mdp

MIN_STATE_RADIUS_M = 10.0   # floor for POI areas so loss ratios stay bounded
COVER_TOL_M = 1e-6


class EmptyPoiError(RuntimeError):
    """The trace yields no point of interest at the given parameters."""


@dataclass
class ClusterParams:
    min_speed_mps: float = 1.0
    max_radius_m: float = 100.0
    min_dist_m: float = 500.0
    min_stay_h: float = 1.0
    k_anonymity: int = 2
    u_bar: float | None = None

    def __post_init__(self):
        if self.min_speed_mps < 0 or self.max_radius_m <= 0 or self.min_dist_m < 0 \
                or self.min_stay_h < 0 or self.k_anonymity < 1:
            raise ValueError("cluster parameters out of range")
        if self.u_bar is not None and self.u_bar <= 0:
            raise ValueError("u_bar must be positive when given")


@dataclass
class TraceDataset:
    lat: np.ndarray
    lon: np.ndarray
    t: np.ndarray           # epoch seconds, strictly increasing
    user: str = "user0"
    n_skipped: int = 0

    def __len__(self):
        return self.lat.size


@dataclass
class PoiCluster:
    lat: float
    lon: float
    radius_m: float
    stay_hours: float
    members: tuple[int, ...] = ()

    @property
    def n_points(self) -> int:
        return len(self.members)

    @property
    def area_m2(self) -> float:
        return math.pi * max(self.radius_m, MIN_STATE_RADIUS_M) ** 2


@dataclass
class CloakRegion:
    lat: float
    lon: float
    radius_m: float
    covered: tuple[int, ...]


def parse_traces(path, fmt: str | None = None, user: str | None = None) -> TraceDataset:
    """Load one user's trace from a csv or a Geolife plt file.

    csv: header line, then rows lat,lon,timestamp with the timestamp in epoch
    seconds. plt: six header lines, latitude and longitude in the first two
    fields, date and time in the sixth and seventh (UTC). Malformed rows and
    rows breaking the strictly-increasing time order are skipped and counted.
    """
    path = Path(path)
    if fmt is None:
        fmt = "plt" if path.suffix.lower() == ".plt" else "csv"
    if fmt not in ("csv", "plt"):
        raise ValueError(f"unknown trace format {fmt!r}")
    lat, lon, t = [], [], []
    skipped = 0
    with open(path) as fh:
        lines = fh.readlines()
    start = 6 if fmt == "plt" else 1
    for line in lines[start:]:
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        try:
            if fmt == "plt":
                la, lo = float(parts[0]), float(parts[1])
                stamp = datetime.strptime(parts[5] + " " + parts[6], "%Y-%m-%d %H:%M:%S")
                ts = stamp.replace(tzinfo=timezone.utc).timestamp()
            else:
                la, lo, ts = float(parts[0]), float(parts[1]), float(parts[2])
        except (ValueError, IndexError):
            skipped += 1
            continue
        if not (math.isfinite(la) and math.isfinite(lo) and math.isfinite(ts)) \
                or abs(la) > 90.0 or abs(lo) > 180.0 or (t and ts <= t[-1]):
            skipped += 1
            continue
        lat.append(la)
        lon.append(lo)
        t.append(ts)
    if not lat:
        warnings.warn(f"no valid samples in {path} ({skipped} rows skipped)")
    return TraceDataset(np.array(lat), np.array(lon), np.array(t),
                        user=user or path.stem, n_skipped=skipped)


def stationary_flags(traces: TraceDataset, params: ClusterParams) -> np.ndarray:
    """Mark samples whose arrival speed is at most the stationarity threshold.

    The first sample has no arrival speed and never counts as stationary;
    with a zero threshold only exact zero-velocity repeats survive.
    """
    flags = np.zeros(len(traces), dtype=bool)
    if len(traces) < 2:
        return flags
    dist = step_distances_m(traces.lat, traces.lon)
    dt = np.diff(traces.t)
    speed = np.divide(dist, dt, out=np.full_like(dist, np.inf), where=dt > 0)
    flags[1:] = speed <= params.min_speed_mps
    return flags


def extract_pois(traces: TraceDataset, params: ClusterParams):
    """Cluster the stationary samples into dwell-filtered points of interest.

    Returns (pois, assignment) where assignment maps each sample index to its
    retained POI index or -1. Clustering joins each stationary point to the
    first cluster whose running centroid lies within max_radius_m; clusters
    closer than min_dist_m are then merged pairwise until none remain; dwell
    time accumulates over gaps between consecutive stationary samples,
    attributed to the earlier sample's cluster, and clusters dwelling less
    than min_stay_h are dropped.
    """
    flags = stationary_flags(traces, params)
    idxs = np.nonzero(flags)[0]
    # greedy join to the first near cluster, running centroids
    sums = []        # [lat_sum, lon_sum, count]
    members = []     # sample indices per cluster
    label = np.full(len(traces), -1, dtype=int)
    for i in idxs:
        la, lo = float(traces.lat[i]), float(traces.lon[i])
        target = -1
        for c, (sla, slo, cnt) in enumerate(sums):
            if haversine_m(la, lo, sla / cnt, slo / cnt) <= params.max_radius_m:
                target = c
                break
        if target < 0:
            sums.append([la, lo, 1.0])
            members.append([int(i)])
            target = len(sums) - 1
        else:
            sums[target][0] += la
            sums[target][1] += lo
            sums[target][2] += 1.0
            members[target].append(int(i))
        label[i] = target
    # merge clusters with centroids closer than min_dist_m
    merged = True
    while merged and len(sums) > 1:
        merged = False
        for i in range(len(sums)):
            for j in range(i + 1, len(sums)):
                ci = (sums[i][0] / sums[i][2], sums[i][1] / sums[i][2])
                cj = (sums[j][0] / sums[j][2], sums[j][1] / sums[j][2])
                if haversine_m(*ci, *cj) < params.min_dist_m:
                    sums[i] = [sums[i][0] + sums[j][0], sums[i][1] + sums[j][1],
                               sums[i][2] + sums[j][2]]
                    members[i].extend(members[j])
                    del sums[j], members[j]
                    label[label == j] = i
                    label[label > j] -= 1
                    merged = True
                    break
            if merged:
                break
    # dwell time per cluster: gaps between consecutive stationary samples,
    # attributed to the earlier sample's cluster
    stay_s = np.zeros(len(sums))
    for i in idxs:
        if i + 1 < len(traces) and flags[i + 1] and label[i] >= 0:
            stay_s[label[i]] += traces.t[i + 1] - traces.t[i]
    keep = [c for c in range(len(sums)) if stay_s[c] / 3600.0 >= params.min_stay_h]
    pois = []
    assignment = np.full(len(traces), -1, dtype=int)
    for new_c, c in enumerate(keep):
        cla = sums[c][0] / sums[c][2]
        clo = sums[c][1] / sums[c][2]
        radius = max((haversine_m(traces.lat[i], traces.lon[i], cla, clo)
                      for i in members[c]), default=0.0)
        pois.append(PoiCluster(cla, clo, radius, stay_s[c] / 3600.0,
                               tuple(members[c])))
        assignment[members[c]] = new_c
    return pois, assignment


def build_cloaks(pois: list[PoiCluster], params: ClusterParams) -> list[CloakRegion]:
    """k-anonymous cloaking circles: one candidate per POI, duplicates removed.

    Each candidate centers at the mean of the anchor POI and its k-1 nearest
    POIs (centroid distance, ties toward the lower index) with the smallest
    radius covering every seed POI's whole disk; the covered set is then
    recomputed geometrically, so a circle may pick up more than k POIs.
    """
    n = len(pois)
    k = params.k_anonymity
    if k > n:
        raise ValueError(f"k-anonymity {k} exceeds the number of POIs {n}")
    regions: list[CloakRegion] = []
    seen: set[tuple[int, ...]] = set()
    for i, poi in enumerate(pois):
        dist = sorted((haversine_m(poi.lat, poi.lon, q.lat, q.lon), j)
                      for j, q in enumerate(pois) if j != i)
        seeds = [i] + [j for _, j in dist[:k - 1]]
        cla = sum(pois[j].lat for j in seeds) / len(seeds)
        clo = sum(pois[j].lon for j in seeds) / len(seeds)
        radius = max(haversine_m(cla, clo, pois[j].lat, pois[j].lon) + pois[j].radius_m
                     for j in seeds)
        covered = tuple(j for j, q in enumerate(pois)
                        if haversine_m(cla, clo, q.lat, q.lon) + q.radius_m
                        <= radius + COVER_TOL_M)
        if covered not in seen:
            seen.add(covered)
            regions.append(CloakRegion(cla, clo, radius, covered))
    return regions


def estimate_transitions(traces: TraceDataset, pois: list[PoiCluster],
                         params: ClusterParams):
    """Empirical POI transition matrix from the visit sequence.

    Stationary samples map to the nearest POI whose disk contains them (else
    unassigned); maximal runs of one POI, broken by unassigned samples, form
    visits, and consecutive visits (same POI allowed after a break) are
    counted as transitions. Rows never visited as a source self-loop.
    Returns (counts, p).
    """
    n = len(pois)
    flags = stationary_flags(traces, params)
    seq = []
    for i in np.nonzero(flags)[0]:
        best = None
        for j, poi in enumerate(pois):
            d = haversine_m(traces.lat[i], traces.lon[i], poi.lat, poi.lon)
            if d <= poi.radius_m + COVER_TOL_M and (best is None or d < best[0]):
                best = (d, j)
        seq.append(-1 if best is None else best[1])
    visits = []
    prev = -1
    for s in seq:
        if s < 0:
            prev = -1
            continue
        if s != prev:
            visits.append(s)
        prev = s
    counts = np.zeros((n, n))
    for a, b in zip(visits[:-1], visits[1:]):
        counts[a, b] += 1.0
    p = np.zeros((n, n))
    for i in range(n):
        total = counts[i].sum()
        if total > 0:
            p[i] = counts[i] / total
        else:
            p[i, i] = 1.0
    return counts, p


def assemble_mdp(pois: list[PoiCluster], cloaks: list[CloakRegion], p: np.ndarray,
                 params: ClusterParams, start_state: int = 0) -> Mdp:
    """Put the pipeline products together into the mobility MDP.

    Choosing cloak a at a covered POI s moves the user along the empirical
    row p(s, .) and costs the area ratio of the cloak disk to the POI disk;
    POI radii are floored at 10 m so the ratio stays finite.
    """
    n, m = len(pois), len(cloaks)
    available = tuple(tuple(a for a, cl in enumerate(cloaks) if s in cl.covered)
                      for s in range(n))
    for s, acts in enumerate(available):
        if not acts:
            raise ValueError(f"POI {s} is covered by no cloaking region")
    transition = np.zeros((m, n, n))
    utility = np.zeros((n, m))
    for a, cl in enumerate(cloaks):
        for s in cl.covered:
            transition[a, s] = p[s]
            utility[s, a] = (cl.radius_m / max(pois[s].radius_m, MIN_STATE_RADIUS_M)) ** 2
    p0 = np.zeros(n)
    p0[start_state] = 1.0
    state_meta = [StateMeta(f"s{i + 1}", poi.lat, poi.lon, poi.area_m2)
                  for i, poi in enumerate(pois)]
    action_meta = [ActionMeta(f"a{i + 1}", cl.lat, cl.lon, cl.radius_m)
                   for i, cl in enumerate(cloaks)]
    return make_mdp(transition, utility, available, p0, u_bar=params.u_bar,
                    state_meta=state_meta, action_meta=action_meta)


def build_model_from_traces(path, params: ClusterParams, fmt: str | None = None,
                            start_state: int = 0):
    """Full pipeline: parse, cluster, cloak, estimate, assemble.

    Returns (mdp, pois, cloaks, diagnostics); raises EmptyPoiError when no
    POI survives the dwell filter.
    """
    traces = parse_traces(path, fmt=fmt)
    pois, _ = extract_pois(traces, params)
    if not pois:
        raise EmptyPoiError(f"no POI extracted from {path} at the given parameters")
    cloaks = build_cloaks(pois, params)
    counts, p = estimate_transitions(traces, pois, params)
    mdp = assemble_mdp(pois, cloaks, p, params, start_state=start_state)
    diag = {"n_samples": len(traces), "n_skipped": traces.n_skipped,
            "n_pois": len(pois), "n_cloaks": len(cloaks),
            "visit_transitions": int(counts.sum())}
    return mdp, pois, cloaks, diag


def write_poi_summary(path, pois: list[PoiCluster], cloaks: list[CloakRegion]) -> None:
    """Summary table of POIs and cloaks: id, lat, lon, radius, stay_hours, covered_pois."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "lat", "lon", "radius", "stay_hours", "covered_pois"])
        for i, poi in enumerate(pois):
            writer.writerow([f"s{i + 1}", format(poi.lat, ".17g"), format(poi.lon, ".17g"),
                             format(poi.radius_m, ".17g"), format(poi.stay_hours, ".17g"), ""])
        for i, cl in enumerate(cloaks):
            writer.writerow([f"a{i + 1}", format(cl.lat, ".17g"), format(cl.lon, ".17g"),
                             format(cl.radius_m, ".17g"), "",
                             " ".join(f"s{j + 1}" for j in cl.covered)])
