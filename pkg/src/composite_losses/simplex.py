"""Probability-simplex geometry.

Validated points of the n-simplex, the projection that drops the last
coordinate to work in n-1 free dimensions, interior sampling, and the
deterministic grids the convexity checkers quantify over.

The dropped coordinate is always the last class. Sticking to one
convention matters: the projected unit vector of the last class is the
zero vector, and the gradient identities downstream depend on it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError

# Defect tolerance on sum-to-one; constructors renormalize below it.
VALIDATION_TOL = 1e-12


@dataclass(frozen=True)
class ProbVector:
    """A point of the n-simplex: nonnegative entries summing to one."""

    p: np.ndarray

    def __init__(self, p):
        p = np.asarray(p, dtype=float).reshape(-1).copy()
        if p.size < 2:
            raise DimensionError("a probability vector needs at least 2 classes")
        if np.any(p < -VALIDATION_TOL) or np.any(p > 1.0 + VALIDATION_TOL):
            raise ConfigurationError(f"components outside [0, 1]: {p.tolist()}")
        total = float(p.sum())
        if abs(total - 1.0) > VALIDATION_TOL:
            raise ConfigurationError(
                f"components sum to {total!r}, more than {VALIDATION_TOL:g} from 1")
        p = np.clip(p / total, 0.0, 1.0)
        p.flags.writeable = False
        object.__setattr__(self, "p", p)

    @property
    def n(self) -> int:
        return self.p.size

    def is_interior(self, margin: float = 0.0) -> bool:
        return bool(np.all(self.p > margin))

    def to_json(self) -> dict:
        return {"n": self.n, "p": self.p.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "ProbVector":
        vec = cls(obj["p"])
        if "n" in obj and int(obj["n"]) != vec.n:
            raise ConfigurationError(
                f"declared n={obj['n']} does not match {vec.n} components")
        return vec


@dataclass(frozen=True)
class ProjectedProb:
    """A point of the simplex bottom: first n-1 coordinates of a ProbVector.

    The dropped last coordinate is recovered as 1 minus the sum.
    """

    pt: np.ndarray

    def __init__(self, pt):
        pt = np.asarray(pt, dtype=float).reshape(-1).copy()
        if pt.size < 1:
            raise DimensionError("projected points need n >= 2, i.e. at least 1 coordinate")
        if np.any(pt < -VALIDATION_TOL):
            raise ConfigurationError(f"negative component in {pt.tolist()}")
        if float(pt.sum()) > 1.0 + VALIDATION_TOL:
            raise ConfigurationError(
                f"components sum to {float(pt.sum())!r} > 1")
        pt = np.clip(pt, 0.0, None)
        pt.flags.writeable = False
        object.__setattr__(self, "pt", pt)

    @property
    def n(self) -> int:
        return self.pt.size + 1

    @property
    def last(self) -> float:
        return 1.0 - float(self.pt.sum())

    @property
    def interior(self) -> bool:
        return bool(np.all(self.pt > 0.0) and float(self.pt.sum()) < 1.0)

    def is_interior(self, margin: float = 0.0) -> bool:
        return bool(np.all(self.pt > margin) and float(self.pt.sum()) < 1.0 - margin)

    def to_json(self) -> dict:
        return {"n": self.n, "p_projected": self.pt.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "ProjectedProb":
        point = cls(obj["p_projected"])
        if "n" in obj and int(obj["n"]) != point.n:
            raise ConfigurationError(
                f"declared n={obj['n']} does not match {point.n + 0} classes")
        return point


def project(p: ProbVector) -> ProjectedProb:
    """Drop the last coordinate."""
    return ProjectedProb(p.p[:-1])


def lift(pt: ProjectedProb) -> ProbVector:
    """Append 1 - sum, inverting project exactly."""
    return ProbVector(np.append(pt.pt, pt.last))


def lift_array(pt: np.ndarray) -> np.ndarray:
    """Array version of lift for hot paths; no validation."""
    pt = np.asarray(pt, dtype=float)
    last = 1.0 - pt.sum(axis=-1, keepdims=True)
    return np.concatenate([pt, last], axis=-1)


def projected_unit(i: int, n: int) -> np.ndarray:
    """The i-th projected unit vector e_i in n-1 dimensions (0-based i).

    The last class (i = n-1) maps to the zero vector.
    """
    if not 0 <= i < n:
        raise DimensionError(f"class index {i} out of range for n={n}")
    e = np.zeros(n - 1)
    if i < n - 1:
        e[i] = 1.0
    return e


def clamp_interior(pt: np.ndarray, margin: float) -> np.ndarray:
    """Pull a near-boundary projected point to the margin-interior.

    Components are floored at margin and the full vector renormalized so
    the implied last coordinate also clears the margin. Points already
    interior at the margin pass through unchanged (bitwise, including in
    batches: only violating rows are touched).
    """
    pt = np.asarray(pt, dtype=float)
    full = lift_array(pt)
    bad = np.any(full < margin, axis=-1)
    if not np.any(bad):
        return pt
    fixed = np.clip(full, margin, None)
    fixed = fixed / fixed.sum(axis=-1, keepdims=True)
    if pt.ndim == 1:
        return fixed[..., :-1]
    out = pt.copy()
    out[bad] = fixed[bad, :-1]
    return out


def interior_grid(n: int, resolution: int, margin: float) -> list[ProjectedProb]:
    """Deterministic lattice of strictly interior projected points.

    Per-axis points are evenly spaced from margin to 1 - margin
    (resolution + 1 of them, so spacing <= 1/resolution), filtered to the
    simplex bottom with total mass at most 1 - margin; the barycenter is
    always included. Order is lexicographic, which downstream worst-witness
    tie-breaking relies on.
    """
    if n < 2:
        raise DimensionError("n must be at least 2")
    if resolution < 1:
        raise ConfigurationError("resolution must be a positive integer")
    if not 0.0 < margin < 1.0 / n:
        raise ConfigurationError(
            f"margin {margin!r} infeasible for n={n}; need 0 < margin < 1/n")
    axis = np.linspace(margin, 1.0 - margin, resolution + 1)
    points: list[ProjectedProb] = []
    if n == 2:
        for a in axis:
            points.append(ProjectedProb([a]))
    else:
        mesh = np.meshgrid(*([axis] * (n - 1)), indexing="ij")
        coords = np.stack([m.ravel() for m in mesh], axis=-1)
        keep = coords.sum(axis=1) <= 1.0 - margin + 1e-15
        for row in coords[keep]:
            points.append(ProjectedProb(row))
    barycenter = np.full(n - 1, 1.0 / n)
    if not any(np.array_equal(pt.pt, barycenter) for pt in points):
        points.append(ProjectedProb(barycenter))
    return points


def sample_interior(rng: np.random.Generator, n: int, count: int,
                    margin: float = 0.01) -> np.ndarray:
    """Seeded interior samples of the simplex bottom, shape (count, n-1).

    Rejection sampling of flat Dirichlet draws until every class
    probability clears the margin.
    """
    if not 0.0 < margin < 1.0 / n:
        raise ConfigurationError(
            f"margin {margin!r} infeasible for n={n}; need 0 < margin < 1/n")
    out = np.empty((count, n - 1))
    filled = 0
    while filled < count:
        batch = rng.dirichlet(np.ones(n), size=max(count - filled, 16))
        good = batch[np.all(batch >= margin, axis=1)]
        take = min(good.shape[0], count - filled)
        out[filled:filled + take] = good[:take, :-1]
        filled += take
    return out
