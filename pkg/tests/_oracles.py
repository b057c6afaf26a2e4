"""Shared oracle helpers for the test suite."""

import numpy as np

from parentswarm import atlas as atl


def pair_atlas_agreement(masses=(1.0, 1.0), L=1.0, cells=50, seed=0):
    """Fraction of non-boundary cells where the atlas matches the position-grid oracle.

    The atlas is evaluated at cell centres. A cell is boundary when any of its
    eight neighbours carries a different oracle label, or it lies on the grid edge.
    """
    Mr, Jr = atl.default_ranges(masses, L)
    M_edges = np.linspace(Mr[0], Mr[1], cells + 1)
    J_edges = np.linspace(Jr[0], Jr[1], cells + 1)
    Mc = 0.5 * (M_edges[1:] + M_edges[:-1])
    Jc = 0.5 * (J_edges[1:] + J_edges[:-1])
    grid = atl.atlas_grid(masses, L, (Mc[0], Mc[-1]), (Jc[0], Jc[-1]), cells, cells, seed=seed)
    oracle = atl.position_grid_oracle(masses, L, M_edges, J_edges)
    labels = np.vectorize(atl.summary_label)(grid.labels)
    ref = np.vectorize(atl.summary_label)(oracle)
    boundary = np.zeros(ref.shape, bool)
    for dj in (-1, 0, 1):
        for di in (-1, 0, 1):
            boundary |= np.roll(np.roll(ref, dj, 0), di, 1) != ref
    boundary[[0, -1], :] = True
    boundary[:, [0, -1]] = True
    keep = ~boundary
    return float(np.mean(labels[keep] == ref[keep])), int(keep.sum())
