"""Force and torque balance diagnostics on the staircase particle interfaces.

Interfaces are the mesh edges between a solid and a fluid element. The
traction is taken from the fluid-side element stress with the P1 pressure
sampled by two-point Gauss quadrature along each edge.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .numerics.mesh import Mesh

_LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])
_GAUSS = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])


@lru_cache(maxsize=16)
def _edge_pairs(mesh: Mesh):
    nodes = mesh.elements[:, _LOCAL_EDGES]  # (ne, 3, 2)
    lo, hi = nodes.min(axis=2), nodes.max(axis=2)
    key = (lo * mesh.n_nodes + hi).ravel()
    order = np.argsort(key, kind="stable")
    ks = key[order]
    dup = np.flatnonzero(ks[1:] == ks[:-1])
    first, second = order[dup], order[dup + 1]
    return np.stack([first // 3, first % 3], axis=1), np.stack([second // 3, second % 3], axis=1)


def interface_edges(mesh: Mesh, solid: np.ndarray):
    """(solid element, local edge, fluid element) triples of interface edges."""
    a, b = _edge_pairs(mesh)
    sa, sb = solid[a[:, 0]], solid[b[:, 0]]
    one = sa & ~sb
    two = sb & ~sa
    se = np.concatenate([a[one, 0], b[two, 0]])
    sl = np.concatenate([a[one, 1], b[two, 1]])
    fe = np.concatenate([b[one, 0], a[two, 0]])
    return se, sl, fe


def balance_integrals(mesh: Mesh, solid, stress, pressure, centers, particle_id=None):
    """Net force (n_particles, 2) and torque (n_particles,) on each particle.

    ``stress`` is the per-element stress without the pressure part; the
    traction on the solid boundary is ``(stress_f - p I) n`` with ``n``
    pointing out of the solid. ``centers`` (n_particles, 2) are the torque
    reference points; ``particle_id`` maps solid elements to particles
    (a single particle when omitted).
    """
    se, sl, fe = interface_edges(mesh, solid)
    v = mesh.vertex_coords[se]
    loc = _LOCAL_EDGES[sl]
    xa = np.take_along_axis(v, loc[:, :1, None], axis=1)[:, 0]
    xb = np.take_along_axis(v, loc[:, 1:, None], axis=1)[:, 0]
    t = xb - xa
    n = np.column_stack([t[:, 1], -t[:, 0]])  # outward for ccw triangles, |n| = edge length
    na = mesh.elements[se, loc[:, 0]]
    nb = mesh.elements[se, loc[:, 1]]
    p = np.asarray(pressure)
    sig = np.asarray(stress)[fe]
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    pid = np.zeros(se.size, dtype=np.int64) if particle_id is None else np.asarray(particle_id)[se]
    force = np.zeros((centers.shape[0], 2))
    torque = np.zeros(centers.shape[0])
    for s in _GAUSS:
        ps = (1 - s) * p[na] + s * p[nb]
        trac = 0.5 * (np.einsum("emn,en->em", sig, n) - ps[:, None] * n)
        x = xa + s * t
        r = x - centers[pid]
        if mesh.periodic:
            r -= np.round(r / mesh.length) * mesh.length
        np.add.at(force, pid, trac)
        np.add.at(torque, pid, r[:, 0] * trac[:, 1] - r[:, 1] * trac[:, 0])
    return force, torque
