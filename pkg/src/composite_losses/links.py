"""Invertible link functions between the simplex bottom and a prediction set.

A link carries a forward map, its inverse, and both Jacobians; whichever
side has no closed form is obtained numerically (flagged on the link).
Four constructions are provided:

* the identity link on the simplex bottom itself;
* the canonical link of a strictly proper loss, the negated Bayes-risk
  gradient, whose Jacobian is the negated Bayes Hessian;
* margin links induced by a strictly convex decreasing scalar function
  phi, with inverse p_i proportional to 1/phi'(v_i) on the zero-sum
  hyperplane (phi = exp reproduces softmax);
* convex combinations of basis inverse links, invertible whenever every
  basis inverse is strictly monotone.

Zero-sum-hyperplane links are parameterized internally by their first
n-1 coordinates, so every Jacobian in sight is square of size n-1;
``embed`` recovers the full zero-sum vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError, EvaluationDomainError
from .losses import ProperLoss, verify_properness
from .numerics import (
    DEFAULT_TOLERANCES,
    ToleranceConfig,
    fourth_order_partial,
    solve_monotone,
)
from .simplex import lift_array, sample_interior

# Open-box slack for inverse links that diverge at a coordinate bound.
_BOX_SLACK = 1e-9


class Link:
    """Base class; subclasses fill in whichever maps they know in closed form."""

    hyperplane = False
    jacobian_is_analytic = False
    box_upper: float | None = None

    def __init__(self, n: int, name: str, cfg: ToleranceConfig = DEFAULT_TOLERANCES):
        if n < 2:
            raise DimensionError("a link needs at least 2 classes")
        self.n = n
        self.name = name
        self.cfg = cfg

    # -- maps ---------------------------------------------------------------

    def forward(self, pt) -> np.ndarray:
        raise NotImplementedError

    def inverse(self, v) -> np.ndarray:
        raise NotImplementedError

    def inverse_batch(self, preds: np.ndarray) -> np.ndarray:
        preds = np.asarray(preds, dtype=float)
        return np.stack([self.inverse(preds[k]) for k in range(preds.shape[0])])

    # -- Jacobians ------------------------------------------------------------

    def inverse_jacobian(self, v) -> np.ndarray:
        """Jacobian of the inverse map at v; defaults to a stencil on inverse."""
        v = np.asarray(v, dtype=float)
        cols = [fourth_order_partial(self.inverse, v, j, self.cfg.jac_step)
                for j in range(v.size)]
        return np.stack(cols, axis=1)

    def jacobian(self, pt) -> np.ndarray:
        """Jacobian of the forward map; defaults to inverting the inverse side."""
        return np.linalg.inv(self.inverse_jacobian(self.forward(pt)))

    def _inverse_jacobian_batch(self, preds: np.ndarray,
                                points: np.ndarray | None = None) -> np.ndarray:
        preds = np.asarray(preds, dtype=float)
        return np.stack([self.inverse_jacobian(preds[k]) for k in range(preds.shape[0])])

    # -- geometry helpers -----------------------------------------------------

    def embed(self, v) -> np.ndarray:
        """Full prediction vector; identity unless the link lives on a hyperplane."""
        return np.asarray(v, dtype=float)

    def contains(self, v) -> bool:
        v = np.asarray(v, dtype=float)
        if not np.all(np.isfinite(v)):
            return False
        if self.box_upper is not None:
            return bool(np.all(self.embed(v) < self.box_upper - _BOX_SLACK))
        return True

    def sample_predictions(self, rng: np.random.Generator, count: int,
                           margin: float = 0.05) -> np.ndarray:
        """Seeded valid predictions, by default forward images of interior points."""
        points = sample_interior(rng, self.n, count, margin)
        return np.stack([self.forward(points[k]) for k in range(count)])


class IdentityLink(Link):
    """Predictions are projected probabilities themselves."""

    jacobian_is_analytic = True

    def __init__(self, n: int, cfg: ToleranceConfig = DEFAULT_TOLERANCES):
        super().__init__(n, f"identity(n={n})", cfg)

    def _validate(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.n - 1:
            raise DimensionError(f"expected {self.n - 1} coordinates, got {x.size}")
        if np.any(x <= 0.0) or float(x.sum()) >= 1.0:
            raise EvaluationDomainError(
                f"point {x.tolist()} is not interior to the simplex bottom")
        return x.copy()

    def forward(self, pt) -> np.ndarray:
        return self._validate(pt)

    def inverse(self, v) -> np.ndarray:
        return self._validate(v)

    def inverse_batch(self, preds) -> np.ndarray:
        preds = np.asarray(preds, dtype=float)
        if np.any(preds <= 0.0) or np.any(preds.sum(axis=1) >= 1.0):
            raise EvaluationDomainError("batch contains non-interior predictions")
        return preds.copy()

    def jacobian(self, pt) -> np.ndarray:
        return np.eye(self.n - 1)

    def inverse_jacobian(self, v) -> np.ndarray:
        return np.eye(self.n - 1)

    def _inverse_jacobian_batch(self, preds, points=None) -> np.ndarray:
        m = np.asarray(preds).shape[0]
        return np.repeat(np.eye(self.n - 1)[None], m, axis=0)

    def sample_predictions(self, rng, count, margin=0.05) -> np.ndarray:
        return sample_interior(rng, self.n, count, margin)


class CanonicalLink(Link):
    """The link matched to a loss: forward is the negated Bayes-risk gradient.

    Construction verifies strict properness by sampling; the inverse is a
    damped Newton solve seeded at the barycenter, with the negated Bayes
    Hessian as the exact Jacobian.
    """

    def __init__(self, loss: ProperLoss, cfg: ToleranceConfig = DEFAULT_TOLERANCES,
                 properness_trials: int = 256):
        super().__init__(loss.n, f"canonical[{loss.name}]", cfg)
        self.loss = loss
        self.jacobian_is_analytic = loss.hessian_is_analytic
        report = verify_properness(loss, trials=properness_trials, seed=7_2024)
        if not report.passed or report.max_violation >= 0.0:
            raise ConfigurationError(
                f"{loss.name} is not strictly proper on sampled pairs "
                f"(max violation {report.max_violation:.3e}); "
                "the canonical link requires strict properness")

    def forward(self, pt) -> np.ndarray:
        return -self.loss.bayes_gradient(np.asarray(pt, dtype=float))

    def jacobian(self, pt) -> np.ndarray:
        return -self.loss.bayes_hessian(np.asarray(pt, dtype=float))

    def _strict_forward(self, pt) -> np.ndarray:
        # Solver probe: reject non-interior iterates so damping kicks in
        # instead of the clamped Bayes surface flattening the residual.
        if np.any(pt <= 0.0) or float(pt.sum()) >= 1.0:
            raise EvaluationDomainError("probe left the open simplex bottom")
        return self.forward(pt)

    def inverse(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float).reshape(-1)
        barycenter = np.full(self.n - 1, 1.0 / self.n)
        return solve_monotone(self._strict_forward, v, barycenter, self.cfg,
                              jac=self.jacobian)

    def inverse_jacobian(self, v) -> np.ndarray:
        return np.linalg.inv(self.jacobian(self.inverse(v)))

    def _inverse_jacobian_batch(self, preds, points=None) -> np.ndarray:
        if points is not None and self.loss.hessian_is_analytic:
            return np.linalg.inv(-self.loss.bayes_hessian_batch(points))
        return super()._inverse_jacobian_batch(preds, points)


@dataclass(frozen=True)
class PhiSpec:
    """A strictly convex, strictly decreasing scalar function and its slope.

    ``valid_upper`` bounds the arguments where phi' stays negative (None
    when the whole real line works). Construction spot-checks both shape
    properties on a seeded grid.
    """

    name: str
    phi: callable
    dphi: callable
    valid_upper: float | None = None

    def __post_init__(self):
        hi = 0.5 if self.valid_upper is None else self.valid_upper - 0.05
        grid = np.linspace(hi - 6.0, hi, 97)
        slopes = np.asarray(self.dphi(grid), dtype=float)
        if not np.all(slopes < 0.0):
            raise ConfigurationError(
                f"phi {self.name!r} is not strictly decreasing on its domain")
        vals = np.asarray(self.phi(grid), dtype=float)
        secants = np.diff(vals) / np.diff(grid)
        if not np.all(np.diff(secants) > 0.0):
            raise ConfigurationError(
                f"phi {self.name!r} is not strictly convex on its domain")


PHI_EXP = PhiSpec(name="exp", phi=lambda t: np.exp(-np.asarray(t, dtype=float)),
                  dphi=lambda t: -np.exp(-np.asarray(t, dtype=float)))
PHI_SQUARED = PhiSpec(name="squared",
                      phi=lambda t: (1.0 - np.asarray(t, dtype=float)) ** 2,
                      dphi=lambda t: -2.0 * (1.0 - np.asarray(t, dtype=float)),
                      valid_upper=1.0)

PHI_CATALOGUE = {"exp": PHI_EXP, "squared": PHI_SQUARED}


class _HyperplaneLink(Link):
    """Shared machinery for links whose inverse is explicit on the zero-sum set."""

    hyperplane = True

    def embed(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        return np.concatenate([v, -v.sum(axis=-1, keepdims=True)], axis=-1) \
            if v.ndim > 1 else np.append(v, -v.sum())

    def inverse_full(self, v_full) -> np.ndarray:
        """Full class probabilities from a full (not necessarily zero-sum) vector."""
        raise NotImplementedError

    def inverse(self, v) -> np.ndarray:
        return self.inverse_full(self.embed(np.asarray(v, dtype=float).reshape(-1)))[:-1]

    def inverse_batch(self, preds) -> np.ndarray:
        preds = np.asarray(preds, dtype=float)
        return self.inverse_full(self.embed(preds))[..., :-1]

    def _inverse_jacobian_batch(self, preds, points=None) -> np.ndarray:
        preds = np.asarray(preds, dtype=float)
        m, nt = preds.shape
        h = self.cfg.jac_step
        jac = np.empty((m, nt, nt))
        for j in range(nt):
            step = np.zeros(nt)
            step[j] = h
            jac[:, :, j] = (8.0 * (self.inverse_batch(preds + step)
                                   - self.inverse_batch(preds - step))
                            - (self.inverse_batch(preds + 2 * step)
                               - self.inverse_batch(preds - 2 * step))) / (12.0 * h)
        return jac

    def inverse_jacobian(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float).reshape(-1)
        return self._inverse_jacobian_batch(v[None])[0]

    def forward(self, pt) -> np.ndarray:
        pt = np.asarray(pt, dtype=float).reshape(-1)
        return solve_monotone(self.inverse, pt, np.zeros(self.n - 1), self.cfg,
                              jac=self.inverse_jacobian)

    def sample_predictions(self, rng, count, margin=0.05) -> np.ndarray:
        raw = rng.standard_normal((count, self.n))
        raw -= raw.mean(axis=1, keepdims=True)
        if self.box_upper is not None:
            cap = 0.9 * (self.box_upper - _BOX_SLACK)
            peak = raw.max(axis=1)
            hot = peak > cap
            raw[hot] *= (cap / peak[hot])[:, None]
        return raw[:, :-1]

    def _check_box(self, v_full: np.ndarray) -> None:
        if self.box_upper is not None and np.any(
                v_full >= self.box_upper - _BOX_SLACK):
            raise EvaluationDomainError(
                f"prediction has a coordinate at or beyond the open bound "
                f"{self.box_upper - _BOX_SLACK!r} of {self.name}")


class PhiLink(_HyperplaneLink):
    """Margin link induced by phi: class i gets weight 1/phi'(v_i), normalized."""

    def __init__(self, spec: PhiSpec, n: int, cfg: ToleranceConfig = DEFAULT_TOLERANCES):
        super().__init__(n, f"phi[{spec.name}](n={n})", cfg)
        self.spec = spec
        self.box_upper = spec.valid_upper

    def inverse_full(self, v_full) -> np.ndarray:
        v_full = np.asarray(v_full, dtype=float)
        self._check_box(v_full)
        raw = 1.0 / np.asarray(self.spec.dphi(v_full), dtype=float)
        probs = raw / raw.sum(axis=-1, keepdims=True)
        if np.any(probs <= 0.0):
            raise EvaluationDomainError(
                f"{self.name} produced a non-positive probability at {v_full.tolist()}")
        return probs


class MixtureLink(_HyperplaneLink):
    """Convex combination of basis inverse links over a shared domain.

    The inverse is the weighted sum of basis inverses; the forward map is
    its numerical inversion seeded at the barycenter image. Bases with a
    weight of exactly zero are never evaluated, so a vertex mixture is a
    behavioral copy of its basis link.
    """

    def __init__(self, basis: list[Link], alpha,
                 cfg: ToleranceConfig = DEFAULT_TOLERANCES, name: str | None = None):
        alpha = np.asarray(alpha, dtype=float).reshape(-1)
        if alpha.size != len(basis) or len(basis) == 0:
            raise ConfigurationError("alpha must assign one weight per basis link")
        if np.any(alpha < 0.0) or abs(float(alpha.sum()) - 1.0) > 1e-12:
            raise ConfigurationError("alpha must be a probability vector")
        ns = {link.n for link in basis}
        if len(ns) != 1:
            raise DimensionError("basis links must share the class count")
        if not all(isinstance(link, _HyperplaneLink) for link in basis):
            raise ConfigurationError(
                "mixture links require basis links on the zero-sum hyperplane")
        n = ns.pop()
        if name is None:
            parts = ",".join(f"{a:g}*{b.name}" for a, b in zip(alpha, basis))
            name = f"mixture[{parts}]"
        super().__init__(n, name, cfg)
        self.basis = tuple(basis)
        self.alpha = alpha
        active_caps = [b.box_upper for a, b in zip(alpha, basis)
                       if a > 0.0 and b.box_upper is not None]
        self.box_upper = min(active_caps) if active_caps else None

    def inverse_full(self, v_full) -> np.ndarray:
        v_full = np.asarray(v_full, dtype=float)
        total = None
        for a, link in zip(self.alpha, self.basis):
            if a == 0.0:
                continue
            term = a * link.inverse_full(v_full)
            total = term if total is None else total + term
        defect = np.abs(total.sum(axis=-1) - 1.0).max()
        if defect > 1e-9 or np.any(total < 0.0):
            raise EvaluationDomainError(
                f"combined inverse left the simplex (sum defect {defect:.3e})")
        return total


@dataclass(frozen=True)
class MonotonicityReport:
    """Sampled strict-monotonicity check of an inverse link."""

    passed: bool
    min_inner: float
    witness_u: np.ndarray | None
    witness_v: np.ndarray | None
    trials: int
    seed: int


def verify_strict_monotonicity(link: Link, trials: int = 1000,
                               seed: int = 0) -> MonotonicityReport:
    """Minimum of (inv(u) - inv(v)) . (u - v) over seeded pairs u != v.

    Positive everywhere sampled is required to pass. For hyperplane links
    the inner product is taken in the full embedded coordinates with full
    probability vectors, matching the monotonicity that makes convex
    combinations invertible.
    """
    rng = np.random.default_rng(seed)
    us = link.sample_predictions(rng, trials)
    vs = link.sample_predictions(rng, trials)
    pu = link.inverse_batch(us)
    pv = link.inverse_batch(vs)
    if link.hyperplane:
        dv = link.embed(us) - link.embed(vs)
        dp = lift_array(pu) - lift_array(pv)
    else:
        dv = us - vs
        dp = pu - pv
    inner = (dv * dp).sum(axis=1)
    distinct = np.any(dv != 0.0, axis=1)
    inner = inner[distinct]
    if inner.size == 0:
        raise ConfigurationError("all sampled pairs were identical")
    worst = int(np.argmin(inner))
    idx = np.flatnonzero(distinct)[worst]
    return MonotonicityReport(passed=bool(inner[worst] > 0.0),
                              min_inner=float(inner[worst]),
                              witness_u=us[idx], witness_v=vs[idx],
                              trials=trials, seed=seed)


@dataclass(frozen=True)
class LinkFamily:
    """Strictly monotone basis inverse links plus mixture weights."""

    basis: tuple
    alpha: np.ndarray
    reports: tuple

    @property
    def n(self) -> int:
        return self.basis[0].n


def make_link_family(basis: list[Link], alpha, cfg: ToleranceConfig = DEFAULT_TOLERANCES,
                     trials: int = 1000, seed: int = 0) -> LinkFamily:
    """Validate a basis by sampled strict monotonicity and attach weights."""
    reports = []
    for link in basis:
        report = verify_strict_monotonicity(link, trials=trials, seed=seed)
        if not report.passed:
            raise ConfigurationError(
                f"basis link {link.name} failed strict monotonicity "
                f"(min inner product {report.min_inner:.3e} over {trials} pairs)")
        reports.append(report)
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    if alpha.size != len(basis):
        raise ConfigurationError("alpha must assign one weight per basis link")
    return LinkFamily(basis=tuple(basis), alpha=alpha, reports=tuple(reports))


def identity_link(n: int, cfg: ToleranceConfig = DEFAULT_TOLERANCES) -> IdentityLink:
    return IdentityLink(n, cfg)


def canonical_link(loss: ProperLoss,
                   cfg: ToleranceConfig = DEFAULT_TOLERANCES) -> CanonicalLink:
    return CanonicalLink(loss, cfg)


def phi_link(spec: PhiSpec, n: int,
             cfg: ToleranceConfig = DEFAULT_TOLERANCES) -> PhiLink:
    return PhiLink(spec, n, cfg)


def combine(family: LinkFamily, cfg: ToleranceConfig = DEFAULT_TOLERANCES) -> MixtureLink:
    return MixtureLink(list(family.basis), family.alpha, cfg)


class CustomLink(Link):
    """A link assembled from callables; mainly for tests and experiments."""

    def __init__(self, n: int, name: str, forward_fn, inverse_fn,
                 jacobian_fn=None, inverse_jacobian_fn=None, sampler=None,
                 cfg: ToleranceConfig = DEFAULT_TOLERANCES):
        super().__init__(n, name, cfg)
        self._forward_fn = forward_fn
        self._inverse_fn = inverse_fn
        self._jacobian_fn = jacobian_fn
        self._inverse_jacobian_fn = inverse_jacobian_fn
        self._sampler = sampler
        self.jacobian_is_analytic = jacobian_fn is not None

    def forward(self, pt) -> np.ndarray:
        return np.atleast_1d(np.asarray(self._forward_fn(np.asarray(pt, dtype=float)),
                                        dtype=float))

    def inverse(self, v) -> np.ndarray:
        return np.atleast_1d(np.asarray(self._inverse_fn(np.asarray(v, dtype=float)),
                                        dtype=float))

    def jacobian(self, pt) -> np.ndarray:
        if self._jacobian_fn is None:
            return super().jacobian(pt)
        return np.atleast_2d(np.asarray(self._jacobian_fn(np.asarray(pt, dtype=float)),
                                        dtype=float))

    def inverse_jacobian(self, v) -> np.ndarray:
        if self._inverse_jacobian_fn is None:
            return super().inverse_jacobian(v)
        return np.atleast_2d(np.asarray(self._inverse_jacobian_fn(
            np.asarray(v, dtype=float)), dtype=float))

    def sample_predictions(self, rng, count, margin=0.05) -> np.ndarray:
        if self._sampler is not None:
            return np.asarray(self._sampler(rng, count), dtype=float)
        return super().sample_predictions(rng, count, margin)
