"""Quadrature rules on the reference triangle and the unit interval.

Triangle rules are returned in barycentric form with weights normalised to
sum to one, so an integral over a physical triangle ``T`` is
``area(T) * sum(w * f(points))``.
"""
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi

# Symmetric rules (degree of exactness -> orbits of (barycentric point, weight)).
_SYMMETRIC = {
    1: [((1 / 3, 1 / 3, 1 / 3), 1.0)],
    2: [((2 / 3, 1 / 6, 1 / 6), 1 / 3)],
    4: [
        ((0.108103018168070, 0.445948490915965, 0.445948490915965), 0.223381589678011),
        ((0.816847572980459, 0.091576213509771, 0.091576213509771), 0.109951743655322),
    ],
    5: [
        ((1 / 3, 1 / 3, 1 / 3), 0.225),
        ((0.059715871789770, 0.470142064105115, 0.470142064105115), 0.132394152788506),
        ((0.797426985353087, 0.101286507323456, 0.101286507323456), 0.125939180544827),
    ],
}


def _expand_orbit(point, weight):
    a, b, c = point
    if a == b == c:
        return [point], [weight]
    # two equal coordinates: three distinct permutations
    pts = [(a, b, c), (b, a, c), (b, c, a)]
    return pts, [weight] * 3


def _collapsed_rule(degree):
    """Conical product of Gauss-Legendre and Gauss-Jacobi(1, 0) rules."""
    k = (degree + 2) // 2
    t, wt = np.polynomial.legendre.leggauss(k)
    xi, wxi = (t + 1) / 2, wt / 2
    s, ws = roots_jacobi(k, 1.0, 0.0)
    eta, weta = (s + 1) / 2, ws / 4
    X, E = np.meshgrid(xi, eta, indexing="ij")
    W = np.outer(wxi, weta)
    x = (X * (1 - E)).ravel()
    y = E.ravel()
    w = W.ravel()
    bary = np.column_stack([1 - x - y, x, y])
    return bary, w / w.sum()


@lru_cache(maxsize=None)
def triangle_rule(order):
    """Return ``(bary, weights)`` exact for polynomials of degree ``order``.

    ``bary`` has shape ``(nq, 3)``; ``weights`` sum to one.
    """
    if order < 1:
        raise ValueError(f"quadrature order must be >= 1, got {order}")
    exact = next((d for d in sorted(_SYMMETRIC) if d >= order), None)
    if exact is None:
        bary, w = _collapsed_rule(order)
    else:
        pts, ws = [], []
        for point, weight in _SYMMETRIC[exact]:
            p, q = _expand_orbit(point, weight)
            pts += p
            ws += q
        bary, w = np.array(pts), np.array(ws)
        w = w / w.sum()
    bary.setflags(write=False)
    w.setflags(write=False)
    return bary, w


@lru_cache(maxsize=None)
def line_rule(order):
    """Gauss-Legendre rule on [0, 1] exact to degree ``order``; weights sum to one."""
    k = max(1, (order + 2) // 2)
    t, w = np.polynomial.legendre.leggauss(k)
    s = (t + 1) / 2
    w = w / 2
    s.setflags(write=False)
    w.setflags(write=False)
    return s, w


def graded_line_rule(order, breaks, levels=36, ratio=0.5):
    """Composite Gauss rule on [0, 1] refined geometrically toward ``breaks``.

    Every point in ``breaks`` (inside [0, 1]) becomes a subinterval end, and
    the subintervals touching it are split into ``levels`` pieces whose width
    shrinks by ``ratio`` toward that point. Suited to integrands that are
    smooth except for a thin layer at known locations.

    Returns ``(s, w)`` with weights summing to one.
    """
    s0, w0 = line_rule(order)
    pts = np.unique(np.clip(np.concatenate([[0.0, 1.0], np.asarray(breaks, float)]), 0, 1))
    sing = set(np.clip(np.asarray(breaks, float), 0, 1).tolist())
    cuts = []
    for lo, hi in zip(pts[:-1], pts[1:]):
        if hi - lo <= 0:
            continue
        inner = [lo, hi]
        length = hi - lo
        if hi in sing:
            inner += [hi - length * ratio**j for j in range(1, levels + 1)]
        if lo in sing:
            inner += [lo + length * ratio**j for j in range(1, levels + 1)]
        cuts.append(np.unique(inner))
    edges = np.unique(np.concatenate(cuts))
    lo, hi = edges[:-1], edges[1:]
    width = hi - lo
    s = (lo[:, None] + width[:, None] * s0[None, :]).ravel()
    w = (width[:, None] * w0[None, :]).ravel()
    return s, w
