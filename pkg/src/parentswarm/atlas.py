"""Constraint atlas of the abstract space.

An abstract point (M1, J_s) is absolutely constrained (A_A) when its whole
preimage under the abstraction map lies in the box |p_i| <= L/2, partially
constrained (A_P) when only part of it does, and unconstrained (A_U) when none
of it does. Points with an empty real preimage are reported as infeasible and
folded into A_U in summaries.

Geometry used throughout: with w_i = sqrt(m_i) p_i the preimage is the
intersection of the sphere |w|^2 = J_s with the hyperplane sqrt(m).w = M1, i.e.
an (N-2)-sphere of squared radius J_s - M1^2/sum(m) centred on the uniform
configuration p_i = M1/sum(m).
"""

from __future__ import annotations

import itertools
import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .control import ManifoldSpec
from .errors import EmptyPreimage

A_A, A_P, A_U, UNCERTAIN, INFEASIBLE = "A_A", "A_P", "A_U", "boundary-uncertain", "infeasible"
LABELS = (A_A, A_P, A_U, UNCERTAIN, INFEASIBLE)

DEFAULT_BUDGET = 20_000
MIN_FOUND = 30
MAX_EDGE_DIM = 12
FEAS_TOL = 1e-12


# --------------------------------------------------------------------------- geometry

def _masses(masses) -> np.ndarray:
    m = np.asarray(masses, dtype=float).ravel()
    if m.size == 0:
        raise ValueError("need at least one member")
    if np.any(m <= 0):
        raise ValueError("masses must be positive")
    return m


def abstract_of(masses, P) -> np.ndarray:
    """(M1, J_s) rows for position rows P."""
    m = _masses(masses)
    P = np.atleast_2d(P)
    return np.stack([P @ m, (P * P) @ m], axis=1)


def preimage_gap(a, masses) -> float:
    """J_s - M1^2/sum(m): squared radius of the preimage sphere in weighted coordinates."""
    m = _masses(masses)
    M1, J = float(a[0]), float(a[1])
    return J - M1 * M1 / m.sum()


def _check_feasible(a, m):
    M1, J = float(a[0]), float(a[1])
    gap = J - M1 * M1 / m.sum()
    scale = max(J, M1 * M1 / m.sum(), 1e-300)
    if J < 0 or gap < -FEAS_TOL * scale:
        raise EmptyPreimage(f"({M1:.6g}, {J:.6g}) has no real preimage")
    return max(gap, 0.0)


def preimage_extent(a, masses) -> np.ndarray:
    """Per-coordinate [min, max] of p over the full real preimage, shape (N, 2)."""
    m = _masses(masses)
    gap = _check_feasible(a, m)
    S = m.sum()
    c = float(a[0]) / S
    if m.size == 1:
        return np.array([[c, c]])
    half = math.sqrt(gap) * np.sqrt(np.maximum(1.0 / m - 1.0 / S, 0.0))
    return np.stack([c - half, c + half], axis=1)


def containment_margin(a, masses, L: float) -> float:
    """L/2 minus the largest |p_i| on the preimage; positive iff the preimage is inside the box."""
    ext = preimage_extent(a, masses)
    return 0.5 * L - float(np.max(np.abs(ext)))


def max_inertia_on_slice(M1: float, masses, L: float) -> float:
    """max sum(m p^2) over the box slice sum(m p) = M1, or -inf if the slice is empty.

    The maximum of a convex function over a polytope sits on a vertex, and every
    vertex of the slice has at most one coordinate off the box corners.
    """
    m = _masses(masses)
    h = 0.5 * L
    n = m.size
    if abs(M1) > h * m.sum() * (1 + 1e-12):
        return -math.inf
    if n == 1:
        return m[0] * (M1 / m[0]) ** 2
    best = -math.inf
    signs = np.array(list(itertools.product((-1.0, 1.0), repeat=n - 1)))
    for k in range(n):
        others = np.delete(m, k)
        pk = (M1 - h * signs @ others) / m[k]
        ok = np.abs(pk) <= h * (1 + 1e-12)
        if np.any(ok):
            best = max(best, float(np.max(h * h * others.sum() + m[k] * pk[ok] ** 2)))
    return best


def exact_label(a, masses, L: float) -> str:
    """Exact label for moderate N by the sphere-extent and slice-maximum tests."""
    m = _masses(masses)
    try:
        margin = containment_margin(a, m, L)
    except EmptyPreimage:
        return INFEASIBLE
    if margin >= 0:
        return A_A
    jmax = max_inertia_on_slice(float(a[0]), m, L)
    return A_P if float(a[1]) <= jmax * (1 + 1e-12) else A_U


# --------------------------------------------------------------------------- hypercube edges

def map_hypercube_edges(masses, L: float, samples_per_edge: int = 20) -> list[np.ndarray]:
    """Images of the edges of [-L/2, L/2]^N as (samples_per_edge, 2) polylines."""
    m = _masses(masses)
    n = m.size
    if n > MAX_EDGE_DIM:
        raise ValueError(f"edge enumeration is limited to N <= {MAX_EDGE_DIM}")
    h = 0.5 * L
    s = np.linspace(-h, h, max(2, int(samples_per_edge)))
    out = []
    for k in range(n):
        for corner in itertools.product((-h, h), repeat=n - 1):
            P = np.empty((s.size, n))
            P[:, np.arange(n) != k] = corner
            P[:, k] = s
            out.append(abstract_of(m, P))
    return out


# --------------------------------------------------------------------------- sampler

@dataclass(frozen=True)
class Classification:
    label: str
    confidence: float
    found: int
    inside: int
    margin: float = math.nan


def point_seed(a, seed: int) -> np.random.SeedSequence:
    """Seed stream tied to the exact coordinates of `a` and the global seed."""
    words = struct.unpack("<4I", struct.pack("<2d", float(a[0]), float(a[1])))
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *words])


def _solve_pair(m1, m2, M, J):
    """Real solutions of m1 x + m2 y = M, m1 x^2 + m2 y^2 = J (vectorized)."""
    A = m1 + m1 * m1 / m2
    B = -2.0 * M * m1 / m2
    C = M * M / m2 - J
    disc = B * B - 4.0 * A * C
    ok = disc >= 0
    r = np.sqrt(np.where(ok, disc, 0.0))
    x1 = (-B + r) / (2.0 * A)
    x2 = (-B - r) / (2.0 * A)
    y1 = (M - m1 * x1) / m2
    y2 = (M - m1 * x2) / m2
    return ok, (x1, y1), (x2, y2)


def sample_preimage(a, masses, budget: int = DEFAULT_BUDGET, rng=None) -> np.ndarray:
    """Points of the real preimage, found by fixing coordinates 3..N and solving for the first two.

    The fixed coordinates are drawn uniformly over the preimage's own coordinate
    ranges, so points outside the box are reachable.
    """
    m = _masses(masses)
    _check_feasible(a, m)
    M1, J = float(a[0]), float(a[1])
    n = m.size
    if n == 1:
        return np.array([[M1 / m[0]]])
    rng = np.random.default_rng(rng)
    if n == 2:
        ok, s1, s2 = _solve_pair(m[0], m[1], np.array([M1]), np.array([J]))
        pts = np.array([[s1[0][0], s1[1][0]], [s2[0][0], s2[1][0]]])
        return pts if ok[0] else np.empty((0, 2))
    ext = preimage_extent(a, m)[2:]
    Q = rng.uniform(ext[:, 0], ext[:, 1], size=(int(budget), n - 2))
    mr = m[2:]
    Mr = M1 - Q @ mr
    Jr = J - (Q * Q) @ mr
    ok, s1, s2 = _solve_pair(m[0], m[1], Mr, Jr)
    ok &= Jr >= 0
    half = int(budget) // 2
    pts = np.concatenate([
        np.column_stack([s1[0][:half], s1[1][:half], Q[:half]])[ok[:half]],
        np.column_stack([s2[0][half:], s2[1][half:], Q[half:]])[ok[half:]],
    ])
    return pts


def classify_point(a, masses, L: float, budget: int = DEFAULT_BUDGET, seed: int = 0,
                   min_found: int = MIN_FOUND) -> Classification:
    """Label one abstract point. Raises EmptyPreimage when it has no real preimage."""
    m = _masses(masses)
    h = 0.5 * L
    margin = containment_margin(a, m, L)
    if m.size <= 2:
        pts = sample_preimage(a, m)
        inside = int(np.sum(np.all(np.abs(pts) <= h, axis=1)))
        label = A_A if margin >= 0 else (A_P if inside else A_U)
        return Classification(label, 1.0, len(pts), inside, margin)
    pts = sample_preimage(a, m, budget, np.random.default_rng(point_seed(a, seed)))
    found = len(pts)
    inside = int(np.sum(np.all(np.abs(pts) <= h, axis=1))) if found else 0
    if margin >= 0:
        return Classification(A_A, 1.0, found, inside, margin)
    if found < min_found:
        return Classification(UNCERTAIN, 0.5, found, inside, margin)
    if inside == 0:
        return Classification(A_U, 1.0 - 1.0 / (found + 1), found, inside, margin)
    if inside <= 2:
        return Classification(UNCERTAIN, 0.5, found, inside, margin)
    return Classification(A_P, 1.0, found, inside, margin)


def summary_label(label: str) -> str:
    """Ternary label with infeasible folded into A_U."""
    return A_U if label == INFEASIBLE else label


# --------------------------------------------------------------------------- grid

@dataclass
class AtlasGrid:
    M1: np.ndarray
    J_s: np.ndarray
    labels: np.ndarray        # (len(J_s), len(M1)) of str
    confidence: np.ndarray
    found: np.ndarray
    header: dict = field(default_factory=dict)

    def counts(self) -> dict:
        vals, cnt = np.unique(self.labels, return_counts=True)
        return {str(v): int(c) for v, c in zip(vals, cnt)}

    def rows(self):
        for j, J in enumerate(self.J_s):
            for i, M in enumerate(self.M1):
                yield float(M), float(J), str(self.labels[j, i]), float(self.confidence[j, i])

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("# " + json.dumps(self.header) + "\n")
            fh.write("M1,J_s,label,confidence\n")
            for M, J, lab, conf in self.rows():
                fh.write(f"{M!r},{J!r},{lab},{conf!r}\n")


def read_atlas_csv(path) -> tuple[dict, list[tuple]]:
    with open(path) as fh:
        first = fh.readline()
        header = json.loads(first[2:]) if first.startswith("# ") else {}
        fh.readline()
        rows = []
        for line in fh:
            M, J, lab, conf = line.rstrip("\n").split(",")
            rows.append((float(M), float(J), lab, float(conf)))
    return header, rows


def atlas_grid(masses, L: float, M1_range: Sequence[float], J_range: Sequence[float],
               n_M1: int = 50, n_J: int = 50, budget: int = DEFAULT_BUDGET, seed: int = 0,
               threads: int = 1) -> AtlasGrid:
    m = _masses(masses)
    Ms = np.linspace(M1_range[0], M1_range[1], int(n_M1))
    Js = np.linspace(J_range[0], J_range[1], int(n_J))
    labels = np.empty((Js.size, Ms.size), dtype=object)
    conf = np.zeros((Js.size, Ms.size))
    found = np.zeros((Js.size, Ms.size), dtype=int)

    def row(j):
        for i, M in enumerate(Ms):
            try:
                c = classify_point((M, Js[j]), m, L, budget, seed)
                labels[j, i], conf[j, i], found[j, i] = c.label, c.confidence, c.found
            except EmptyPreimage:
                labels[j, i], conf[j, i], found[j, i] = INFEASIBLE, 1.0, 0

    if threads <= 1:
        for j in range(Js.size):
            row(j)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(row, range(Js.size)))
    header = {"masses": m.tolist(), "L": L, "seed": int(seed), "budget": int(budget),
              "M1_range": list(map(float, M1_range)), "J_range": list(map(float, J_range)),
              "n_M1": int(n_M1), "n_J": int(n_J)}
    return AtlasGrid(Ms, Js, labels, conf, found, header)


def default_ranges(masses, L: float, pad: float = 0.1) -> tuple[list, list]:
    """Grid ranges covering the image of the box with a margin."""
    m = _masses(masses)
    h = 0.5 * L
    Mmax = h * m.sum() * (1 + pad)
    Jmax = h * h * m.sum() * (1 + pad)
    return [-Mmax, Mmax], [0.0, Jmax]


# --------------------------------------------------------------------------- manifold certificate

@dataclass
class ManifoldCertificate:
    passed: bool
    worst_margin: float
    worst_tau: float
    certified_tau: float
    points: list

    def to_dict(self) -> dict:
        return {"pass": bool(self.passed), "worst_margin": _finite(self.worst_margin),
                "worst_tau": self.worst_tau, "certified_tau": self.certified_tau,
                "points": self.points}


def _finite(x):
    return float(x) if math.isfinite(x) else None


def certify_manifold(manifold: ManifoldSpec, masses, L: float, n_tau: int = 101, g: float = 9.81,
                     budget: int = DEFAULT_BUDGET, seed: int = 0) -> ManifoldCertificate:
    """Check sampled manifold points for membership in A_A.

    A point passes when it is labelled A_A with a positive containment margin
    (metres) and lies strictly above the feasibility boundary (a zero gap means
    the preimage is the singular all-equal configuration). `certified_tau` is
    the largest |tau| such that every sampled point with smaller |tau| passes.
    """
    m = _masses(masses)
    taus = np.linspace(-manifold.tau_max, manifold.tau_max, int(n_tau))
    points = []
    worst, worst_tau = math.inf, math.nan
    for tau in taus:
        a = (float(tau) / g, float(manifold.J_sd(tau)))
        gap = preimage_gap(a, m)
        try:
            c = classify_point(a, m, L, budget, seed)
            label, margin = c.label, c.margin
        except EmptyPreimage:
            label, margin = INFEASIBLE, -math.inf
        sing_tol = 1e-12 * max(abs(a[1]), 1e-300)
        point_ok = label == A_A and margin > 0 and gap > sing_tol
        points.append({"tau": float(tau), "M1": a[0], "J_s": a[1], "label": label,
                       "margin": _finite(margin), "gap": gap, "pass": bool(point_ok)})
        score = margin if gap > sing_tol else min(margin, 0.0)
        if score < worst:
            worst, worst_tau = score, float(tau)
    order = np.argsort(np.abs(taus), kind="stable")
    certified = -math.inf
    for k in order:
        if not points[k]["pass"]:
            break
        certified = round(abs(float(taus[k])), 12)
    ok = all(p["pass"] for p in points)
    return ManifoldCertificate(ok, float(worst), worst_tau,
                               certified if math.isfinite(certified) else None, points)


# --------------------------------------------------------------------------- brute-force oracle

def position_grid_oracle(masses, L: float, M1_edges: np.ndarray, J_edges: np.ndarray,
                         n: int = 400, outer: Optional[float] = None, n_outer: int = 800) -> np.ndarray:
    """Two-member oracle: bin images of a dense position grid into abstract cells.

    Cells hit only from inside the box are A_A, from both sides A_P, only from
    outside A_U, never hit infeasible.
    """
    m = _masses(masses)
    if m.size != 2:
        raise ValueError("the position-grid oracle is for two members")
    h = 0.5 * L
    if outer is None:
        outer = 1.05 * math.sqrt(J_edges[-1] / m.min())

    def hits(P):
        A = abstract_of(m, P)
        H, _, _ = np.histogram2d(A[:, 1], A[:, 0], bins=[J_edges, M1_edges])
        return H > 0

    g = np.linspace(-h, h, n)
    X, Y = np.meshgrid(g, g)
    inside = hits(np.column_stack([X.ravel(), Y.ravel()]))
    go = np.linspace(-outer, outer, n_outer)
    X, Y = np.meshgrid(go, go)
    P = np.column_stack([X.ravel(), Y.ravel()])
    P = P[np.any(np.abs(P) > h, axis=1)]
    outside = hits(P)
    lab = np.full(inside.shape, INFEASIBLE, dtype=object)
    lab[inside & ~outside] = A_A
    lab[inside & outside] = A_P
    lab[~inside & outside] = A_U
    return lab
