"""Interface extraction, initial data, and plot-ready series.

CSV files written here start with a ``# <schema> v<version>`` comment line.
"""
import csv
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import directed_hausdorff

from .discrete import discrete_energy, mass

LEVELSET_SCHEMA = "stochch-levelset v1"
MASS_SCHEMA = "stochch-mass v1"
ENERGY_SCHEMA = "stochch-energy v1"

TEST2_ELLIPSES = [((0.0, 0.0), 0.6, 0.2)]
TEST3_ELLIPSES = [((-0.2, 0.0), 0.15, 0.45), ((0.2, 0.0), 0.15, 0.45)]


def ellipse_signed_distance(points, center, a, b, iters=60):
    """Signed distance to the ellipse ``(x-c1)^2/a^2 + (y-c2)^2/b^2 = 1``.

    Negative inside. The closest point is found per point by a safeguarded
    Newton iteration on the angular parameter in the first quadrant, where
    the stationarity condition has a single root off the axes; points on an
    axis are resolved in closed form.
    """
    p = np.asarray(points, dtype=float) - np.asarray(center, dtype=float)
    shape = p.shape[:-1]
    p = p.reshape(-1, 2)
    x, y = np.abs(p[:, 0]), np.abs(p[:, 1])

    def g(t):
        return (a * a - b * b) * np.sin(t) * np.cos(t) - x * a * np.sin(t) + y * b * np.cos(t)

    def dg(t):
        return (a * a - b * b) * np.cos(2 * t) - x * a * np.cos(t) - y * b * np.sin(t)

    # g(0) = y b >= 0 and g(pi/2) = -x a <= 0
    lo = np.zeros_like(x)
    hi = np.full_like(x, np.pi / 2)
    t = np.arctan2(a * y, b * x)
    for _ in range(iters):
        gt = g(t)
        pos = gt > 0
        lo = np.where(pos, t, lo)
        hi = np.where(pos, hi, t)
        d = dg(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            tn = t - gt / d
        bad = ~np.isfinite(tn) | (tn <= lo) | (tn >= hi)
        tn = np.where(bad, 0.5 * (lo + hi), tn)
        if np.all(np.abs(tn - t) < 1e-15):
            t = tn
            break
        t = tn
    # on an axis the condition degenerates; the root sits off the axis when
    # the point is close enough to the center
    c2 = a * a - b * b
    on_x = (y == 0) & (c2 > 0) & (a * x < c2)
    t = np.where(on_x, np.arccos(np.clip(a * x / np.where(c2 > 0, c2, 1.0), -1, 1)), t)
    on_y = (x == 0) & (c2 < 0) & (b * y < -c2)
    t = np.where(on_y, np.arcsin(np.clip(-b * y / np.where(c2 < 0, c2, -1.0), -1, 1)), t)
    t = np.where((y == 0) & ~on_x, 0.0, t)
    t = np.where((x == 0) & (y > 0) & ~on_y, np.pi / 2, t)
    dist = np.hypot(x - a * np.cos(t), y - b * np.sin(t))
    inside = (x / a) ** 2 + (y / b) ** 2 < 1.0
    return np.where(inside, -dist, dist).reshape(shape)


def signed_distance(points, ellipses):
    """Minimum of the signed distances to several ellipses."""
    d = [ellipse_signed_distance(points, c, a, b) for c, a, b in ellipses]
    return np.minimum.reduce(d)


def tanh_profile(ellipses, epsilon):
    """Pointwise initial data ``tanh(d0 / (sqrt(2) eps))``."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")

    def u0(x):
        return np.tanh(signed_distance(x, ellipses) / (np.sqrt(2.0) * epsilon))

    return u0


def signed_distance_initializer(preset, epsilon):
    """Initial data for the single-ellipse ("test2") or two-ellipse ("test3") runs."""
    table = {"test2": TEST2_ELLIPSES, "test3": TEST3_ELLIPSES}
    if preset not in table:
        raise ValueError(f"unknown preset {preset!r}; expected one of {sorted(table)}")
    return tanh_profile(table[preset], epsilon)


def smooth_initializer(x):
    """Polynomial initial data of the convergence study."""
    x1, x2 = x[..., 0], x[..., 1]
    return x1**2 * (1 - x1) ** 2 * x2**2 * (1 - x2**2)


@dataclass
class LevelSet:
    segments: np.ndarray  # (ns, 2, 2)
    time: float = 0.0

    def __len__(self):
        return len(self.segments)

    def points(self, per_segment=3):
        """Sample points along the segments (endpoints included)."""
        if not len(self.segments):
            return np.empty((0, 2))
        s = np.linspace(0.0, 1.0, per_segment)
        a, b = self.segments[:, 0], self.segments[:, 1]
        return (a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]).reshape(-1, 2)


def mean_field(fields):
    """Coefficient-wise average of realizations (summed in the given order)."""
    fields = [np.asarray(f, dtype=float) for f in fields]
    if not fields:
        raise ValueError("mean_field needs at least one realization")
    n = fields[0].shape
    acc = np.zeros(n)
    for f in fields:
        if f.shape != n:
            raise ValueError(f"mesh mismatch: field of shape {f.shape}, expected {n}")
        acc += f
    return acc / len(fields)


def extract_zero_level_set(field, mesh, time=0.0):
    """Marching triangles on the P1 field; one segment per crossed triangle."""
    f = np.asarray(field, dtype=float)
    if f.shape != (mesh.n_vertices,):
        raise ValueError(f"field must have length {mesh.n_vertices}")
    f = np.where(f == 0.0, 1e-14, f)
    ft = f[mesh.triangles]
    pos = ft > 0
    npos = pos.sum(axis=1)
    cut = (npos == 1) | (npos == 2)
    if not cut.any():
        return LevelSet(np.empty((0, 2, 2)), time)
    tri = np.flatnonzero(cut)
    ft, pos, P = ft[tri], pos[tri], mesh.corners[tri]
    # the vertex whose sign differs from the other two
    odd = np.where(npos[tri] == 1, np.argmax(pos, axis=1), np.argmin(pos, axis=1))
    k = np.arange(len(tri))
    i1, i2 = (odd + 1) % 3, (odd + 2) % 3
    fo = ft[k, odd]

    def crossing(j):
        fj = ft[k, j]
        s = fo / (fo - fj)
        return P[k, odd] + s[:, None] * (P[k, j] - P[k, odd])

    segs = np.stack([crossing(i1), crossing(i2)], axis=1)
    return LevelSet(segs, time)


def values_on_segments(level_set, field, mesh):
    """P1 field values at the segment endpoints, shape (ns, 2)."""
    pts = level_set.segments.reshape(-1, 2)
    return evaluate_p1(mesh, field, pts).reshape(-1, 2)


def evaluate_p1(mesh, field, pts):
    """Evaluate a P1 field on a structured mesh at arbitrary points."""
    n = mesh.n
    if not n:
        raise ValueError("point evaluation requires a structured mesh")
    u = np.asarray(field, dtype=float)
    p = (np.asarray(pts, dtype=float) + 1.0) / mesh.h_axis
    cell = np.clip(np.floor(p).astype(np.int64), 0, n - 1)
    xi, eta = (p - cell).T
    i, j = cell.T
    v00 = j * (n + 1) + i
    u00, u10 = u[v00], u[v00 + 1]
    u01, u11 = u[v00 + n + 1], u[v00 + n + 2]
    return np.where(
        xi >= eta,
        u00 + xi * (u10 - u00) + eta * (u11 - u10),
        u00 + eta * (u01 - u00) + xi * (u11 - u01),
    )


def hausdorff_distance(a, b):
    """Symmetric Hausdorff distance between two level sets (sampled)."""
    pa, pb = a.points(), b.points()
    if not len(pa) and not len(pb):
        return 0.0
    if not len(pa) or not len(pb):
        return float("inf")
    return max(directed_hausdorff(pa, pb)[0], directed_hausdorff(pb, pa)[0])


def mass_series(ops, fields):
    """``(u, 1)`` for each field in order."""
    return np.array([mass(ops, f) for f in fields])


def energy_series(ops, fields, epsilon):
    return np.array([discrete_energy(ops, f, epsilon) for f in fields])


def _write(path, schema, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(f"# {schema}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_level_sets_csv(path, level_sets):
    rows = []
    for ls in level_sets:
        for (x1a, x2a), (x1b, x2b) in ls.segments:
            rows.append((ls.time, x1a, x2a, x1b, x2b))
    _write(path, LEVELSET_SCHEMA, ["t", "x1a", "x2a", "x1b", "x2b"], rows)


def write_mass_csv(path, times, masses):
    _write(path, MASS_SCHEMA, ["t", "mass"], zip(times, masses))


def write_energy_csv(path, times, energy, stderr):
    _write(path, ENERGY_SCHEMA, ["t", "energy", "stderr"], zip(times, energy, stderr))
