"""Proper losses over the probability simplex.

A proper loss is a vector of partial losses whose expected value under
the true class distribution is minimized by predicting that distribution.
This module provides the built-in losses (logarithmic and square in two
scalings), properness verification, the binary weight function
w(p) = -L''(p) read off the Bayes-risk curvature, and reconstruction of a
binary loss from a weight function via the integral representation

    lambda_1(p) = int_p^{1-eps} (1-t) w(t) dt,
    lambda_2(p) = int_eps^p     t w(t) dt,

which vanishes at the confident-correct end and has Bayes curvature -w.

Partial losses take projected points (first n-1 coordinates) and lift
internally; partial evaluation is exact, so e.g. log loss returns +inf at
a boundary point. The Bayes-surface evaluators (risk, gradient, Hessian)
instead clamp near-boundary probes to the configured interior margin so
finite-difference probes never fall off the simplex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.interpolate import BPoly

from .errors import ConfigurationError, DimensionError
from .numerics import (
    DEFAULT_TOLERANCES,
    ToleranceConfig,
    central_gradient,
    central_hessian,
    quad_integrate,
)
from .simplex import ProbVector, clamp_interior, lift_array, project, sample_interior


def _logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


def _expit(s):
    s = np.asarray(s, dtype=float)
    return 0.5 * (1.0 + np.tanh(0.5 * s))


class ProperLoss:
    """Base class: partial losses plus the projected Bayes-risk surface.

    Subclasses must provide ``partials``. The Bayes surface defaults to
    the properness identity (risk at p equals p dot partials at p) with
    finite-difference gradient/Hessian fallbacks; built-ins override with
    closed forms and set the analytic flags.
    """

    gradient_is_analytic = False
    hessian_is_analytic = False

    def __init__(self, n: int, name: str, cfg: ToleranceConfig = DEFAULT_TOLERANCES):
        if n < 2:
            raise DimensionError("a loss needs at least 2 classes")
        self.n = n
        self.name = name
        self.cfg = cfg

    # -- partial losses ----------------------------------------------------

    def partials(self, pt) -> np.ndarray:
        """All n partial losses at a projected point; +inf allowed at the boundary."""
        raise NotImplementedError

    def partial(self, i: int, pt) -> float:
        if not 0 <= i < self.n:
            raise DimensionError(f"class index {i} out of range for n={self.n}")
        return float(self.partials(pt)[i])

    def partials_batch(self, points: np.ndarray, classes: np.ndarray) -> np.ndarray:
        """Per-example partial loss of the given class; default loops."""
        points = np.asarray(points, dtype=float)
        classes = np.asarray(classes)
        return np.array([self.partials(points[k])[classes[k]]
                         for k in range(points.shape[0])])

    # -- Bayes-risk surface (clamped evaluation) ----------------------------

    def _clamped(self, pt) -> np.ndarray:
        return clamp_interior(np.asarray(pt, dtype=float), self.cfg.interior_margin)

    def bayes_risk(self, pt) -> float:
        pt = self._clamped(pt)
        full = lift_array(pt)
        return float(full @ self.partials(pt))

    def bayes_gradient(self, pt) -> np.ndarray:
        return central_gradient(self.bayes_risk, self._clamped(pt), self.cfg)

    def bayes_hessian(self, pt) -> np.ndarray:
        return central_hessian(self.bayes_risk, self._clamped(pt), self.cfg)

    def bayes_hessian_batch(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        return np.stack([self.bayes_hessian(points[k]) for k in range(points.shape[0])])

    # -- binary weight -------------------------------------------------------

    def binary_weight(self) -> "BinaryWeight":
        """The weight w(p) = -L''(p); binary losses only."""
        if self.n != 2:
            raise DimensionError(
                f"the weight function is defined for n=2, not n={self.n}")

        def w(p):
            p = np.asarray(p, dtype=float)
            flat = np.atleast_1d(p)
            vals = np.array([-self.bayes_hessian(np.array([x]))[0, 0] for x in flat])
            return vals.reshape(p.shape) if p.shape else float(vals[0])

        return BinaryWeight(fn=w, name=f"weight[{self.name}]")


@dataclass(frozen=True)
class BinaryWeight:
    """A positive weight function on (0, 1), with optional derivative."""

    fn: Callable
    name: str = "w"
    dfn: Callable | None = None

    def __call__(self, p):
        return self.fn(p)

    def derivative(self, p, step: float = 1e-5):
        """w'(p), analytic when registered, else a fourth-order stencil."""
        if self.dfn is not None:
            return self.dfn(p)
        p = np.asarray(p, dtype=float)
        h = np.minimum(step, 0.2 * np.minimum(p, 1.0 - p))
        return (8.0 * (self.fn(p + h) - self.fn(p - h))
                - (self.fn(p + 2 * h) - self.fn(p - 2 * h))) / (12.0 * h)

    @property
    def normalized(self) -> bool:
        return abs(float(self.fn(0.5)) - 1.0) <= 1e-9


# ---------------------------------------------------------------------------
# built-in losses
# ---------------------------------------------------------------------------


class LogLoss(ProperLoss):
    """Logarithmic loss, partial i is -log p_i. Strictly proper."""

    gradient_is_analytic = True
    hessian_is_analytic = True

    def __init__(self, n: int, cfg: ToleranceConfig = DEFAULT_TOLERANCES):
        super().__init__(n, f"log(n={n})", cfg)

    def partials(self, pt) -> np.ndarray:
        full = lift_array(np.asarray(pt, dtype=float))
        with np.errstate(divide="ignore"):
            return -np.log(full)

    def partials_batch(self, points, classes):
        full = lift_array(np.asarray(points, dtype=float))
        picked = full[np.arange(full.shape[0]), np.asarray(classes)]
        with np.errstate(divide="ignore"):
            return -np.log(picked)

    def bayes_risk(self, pt) -> float:
        full = lift_array(self._clamped(pt))
        return float(-(full * np.log(full)).sum())

    def bayes_gradient(self, pt) -> np.ndarray:
        full = lift_array(self._clamped(pt))
        return np.log(full[-1]) - np.log(full[:-1])

    def bayes_hessian(self, pt) -> np.ndarray:
        full = lift_array(self._clamped(pt))
        return -(np.diag(1.0 / full[:-1]) + np.ones((self.n - 1,) * 2) / full[-1])

    def bayes_hessian_batch(self, points) -> np.ndarray:
        full = lift_array(clamp_interior(np.asarray(points, dtype=float),
                                         self.cfg.interior_margin))
        m, nt = full.shape[0], self.n - 1
        hess = np.repeat((1.0 / full[:, -1])[:, None, None], nt, axis=1).repeat(nt, axis=2)
        idx = np.arange(nt)
        hess[:, idx, idx] += 1.0 / full[:, :-1]
        return -hess

    def binary_weight(self) -> BinaryWeight:
        if self.n != 2:
            return super().binary_weight()

        def w(p):
            p = np.asarray(p, dtype=float)
            return 1.0 / (p * (1.0 - p))

        def dw(p):
            p = np.asarray(p, dtype=float)
            return -(1.0 - 2.0 * p) / (p * (1.0 - p)) ** 2

        return BinaryWeight(fn=w, dfn=dw, name="weight[log]")


class SquareLoss(ProperLoss):
    """Square loss in two scalings.

    'brier' is the per-class sum of squares, lambda_i(q) = sum_j
    (1[j=i] - q_j)^2, defined for any n. 'unit_weight' is the binary
    scaling lambda_1(p) = (1-p)^2/2, lambda_2(p) = p^2/2 whose weight is
    identically 1 and whose Bayes Hessian is -1; it does not have an
    agreed multiclass normalization, so it is restricted to n = 2.
    """

    SCALINGS = ("brier", "unit_weight")

    gradient_is_analytic = True
    hessian_is_analytic = True

    def __init__(self, n: int, scaling: str = "brier",
                 cfg: ToleranceConfig = DEFAULT_TOLERANCES):
        if scaling not in self.SCALINGS:
            raise ConfigurationError(
                f"unknown square-loss scaling {scaling!r}; options: {self.SCALINGS}")
        if scaling == "unit_weight" and n != 2:
            raise ConfigurationError(
                "the unit_weight scaling is defined only for n=2")
        super().__init__(n, f"square[{scaling}](n={n})", cfg)
        self.scaling = scaling

    def partials(self, pt) -> np.ndarray:
        pt = np.asarray(pt, dtype=float)
        if self.scaling == "unit_weight":
            p = pt[0]
            return np.array([0.5 * (1.0 - p) ** 2, 0.5 * p ** 2])
        q = lift_array(pt)
        return float(q @ q) - 2.0 * q + 1.0

    def partials_batch(self, points, classes):
        points = np.asarray(points, dtype=float)
        classes = np.asarray(classes)
        if self.scaling == "unit_weight":
            p = points[:, 0]
            return np.where(classes == 0, 0.5 * (1.0 - p) ** 2, 0.5 * p ** 2)
        q = lift_array(points)
        picked = q[np.arange(q.shape[0]), classes]
        return (q * q).sum(axis=1) - 2.0 * picked + 1.0

    def bayes_risk(self, pt) -> float:
        full = lift_array(self._clamped(pt))
        if self.scaling == "unit_weight":
            return float(0.5 * full[0] * full[1])
        return float(1.0 - full @ full)

    def bayes_gradient(self, pt) -> np.ndarray:
        full = lift_array(self._clamped(pt))
        if self.scaling == "unit_weight":
            return np.array([0.5 * (1.0 - 2.0 * full[0])])
        return -2.0 * full[:-1] + 2.0 * full[-1]

    def bayes_hessian(self, pt) -> np.ndarray:
        nt = self.n - 1
        if self.scaling == "unit_weight":
            return np.array([[-1.0]])
        return -2.0 * (np.eye(nt) + np.ones((nt, nt)))

    def bayes_hessian_batch(self, points) -> np.ndarray:
        m = np.asarray(points).shape[0]
        return np.repeat(self.bayes_hessian(np.asarray(points)[0])[None], m, axis=0)

    def binary_weight(self) -> BinaryWeight:
        if self.n != 2:
            return super().binary_weight()
        value = 1.0 if self.scaling == "unit_weight" else 4.0

        def w(p):
            return np.full_like(np.asarray(p, dtype=float), value)

        def dw(p):
            return np.zeros_like(np.asarray(p, dtype=float))

        return BinaryWeight(fn=w, dfn=dw, name=f"weight[{self.name}]")


class CallableLoss(ProperLoss):
    """A loss assembled from user-supplied callables.

    Handy for tests and experiments (including deliberately broken
    losses). Only ``partials_fn`` is required; analytic surface pieces
    are optional and flagged.
    """

    def __init__(self, n: int, name: str, partials_fn: Callable,
                 bayes_gradient_fn: Callable | None = None,
                 bayes_hessian_fn: Callable | None = None,
                 cfg: ToleranceConfig = DEFAULT_TOLERANCES):
        super().__init__(n, name, cfg)
        self._partials_fn = partials_fn
        self._grad_fn = bayes_gradient_fn
        self._hess_fn = bayes_hessian_fn
        self.gradient_is_analytic = bayes_gradient_fn is not None
        self.hessian_is_analytic = bayes_hessian_fn is not None

    def partials(self, pt) -> np.ndarray:
        return np.asarray(self._partials_fn(np.asarray(pt, dtype=float)), dtype=float)

    def bayes_gradient(self, pt) -> np.ndarray:
        if self._grad_fn is None:
            return super().bayes_gradient(pt)
        return np.asarray(self._grad_fn(self._clamped(pt)), dtype=float)

    def bayes_hessian(self, pt) -> np.ndarray:
        if self._hess_fn is None:
            return super().bayes_hessian(pt)
        return np.asarray(self._hess_fn(self._clamped(pt)), dtype=float)


class WeightIntegralLoss(ProperLoss):
    """Binary loss reconstructed from a weight function.

    Partials are tabulated at Chebyshev-Lobatto nodes in the logit
    coordinate (uniform resolution toward both endpoints) by cumulative
    adaptive quadrature, then interpolated with quintic Hermite pieces
    built from the exact first and second derivatives

        lambda_1' = -(1-p) w,  lambda_2' = p w,
        lambda_1'' = w - (1-p) w',  lambda_2'' = w + p w'.

    Exact derivative data keeps the interpolant shape-faithful and keeps
    finite differences of the Bayes risk consistent with w. The node
    count doubles (up to a cap) while the midpoint interpolation error
    estimate exceeds 1e-6; the achieved estimate is kept in
    ``interp_error``. Evaluation outside the truncated interval
    [eps, 1-eps] clamps to it.
    """

    gradient_is_analytic = True
    hessian_is_analytic = True

    _REFINE_LIMIT = 4096

    def __init__(self, weight: BinaryWeight, cfg: ToleranceConfig = DEFAULT_TOLERANCES,
                 name: str | None = None, nodes: int = 512):
        super().__init__(2, name or f"from_weight[{weight.name}]", cfg)
        self.weight = weight
        self.eps = cfg.interior_margin
        probe = np.linspace(0.05, 0.95, 19)
        if np.any(np.asarray(weight(probe)) <= 0.0):
            raise ConfigurationError(f"weight {weight.name} is not positive on (0, 1)")
        count = nodes
        while True:
            self._build(count)
            if self.interp_error <= 1e-6 or count >= self._REFINE_LIMIT:
                break
            count *= 2
        self.node_count = count

    def _build(self, count: int) -> None:
        w = self.weight
        s_hi = float(_logit(1.0 - self.eps))
        s_nodes = s_hi * np.cos(np.pi * np.arange(count, -1, -1) / count)
        p_nodes = _expit(s_nodes)
        p_nodes[0] = self.eps
        p_nodes[-1] = 1.0 - self.eps

        seg_cfg = self.cfg.updated(
            quad_tol=max(self.cfg.quad_tol / count, 1e-14))
        lam2 = np.zeros(count + 1)
        for k in range(count):
            lam2[k + 1] = lam2[k] + quad_integrate(
                lambda t: t * float(w(t)), p_nodes[k], p_nodes[k + 1], seg_cfg)
        lam1 = np.zeros(count + 1)
        for k in range(count - 1, -1, -1):
            lam1[k] = lam1[k + 1] + quad_integrate(
                lambda t: (1.0 - t) * float(w(t)), p_nodes[k], p_nodes[k + 1], seg_cfg)

        w_vals = np.asarray(w(p_nodes), dtype=float)
        dw_vals = self._weight_slope(p_nodes, s_nodes)
        pq = p_nodes * (1.0 - p_nodes)
        # chain rule into the logit coordinate: d/ds = p(1-p) d/dp
        d1_l1 = -(1.0 - p_nodes) * w_vals
        d1_l2 = p_nodes * w_vals
        d2_l1 = w_vals - (1.0 - p_nodes) * dw_vals
        d2_l2 = w_vals + p_nodes * dw_vals
        curve = pq * (1.0 - 2.0 * p_nodes)
        self._spline1 = BPoly.from_derivatives(
            s_nodes, np.stack([lam1, d1_l1 * pq, d2_l1 * pq ** 2 + d1_l1 * curve], axis=1))
        self._spline2 = BPoly.from_derivatives(
            s_nodes, np.stack([lam2, d1_l2 * pq, d2_l2 * pq ** 2 + d1_l2 * curve], axis=1))
        self._s_bounds = (s_nodes[0], s_nodes[-1])
        self._p_nodes = p_nodes
        self.interp_error = self._midpoint_error(s_nodes, p_nodes, lam2, seg_cfg)

    def _weight_slope(self, p_nodes, s_nodes) -> np.ndarray:
        if self.weight.dfn is not None:
            return np.asarray(self.weight.dfn(p_nodes), dtype=float)
        # Stencil in the logit coordinate: safe arbitrarily close to 0/1.
        h = 1e-3
        w_of_s = lambda s: np.asarray(self.weight(_expit(s)), dtype=float)
        dw_ds = (8.0 * (w_of_s(s_nodes + h) - w_of_s(s_nodes - h))
                 - (w_of_s(s_nodes + 2 * h) - w_of_s(s_nodes - 2 * h))) / (12.0 * h)
        return dw_ds / (p_nodes * (1.0 - p_nodes))

    def _midpoint_error(self, s_nodes, p_nodes, lam2, seg_cfg) -> float:
        mids = 0.5 * (s_nodes[:-1] + s_nodes[1:])
        p_mids = _expit(mids)
        worst = 0.0
        for k in range(mids.size):
            direct = lam2[k] + quad_integrate(
                lambda t: t * float(self.weight(t)), p_nodes[k], p_mids[k], seg_cfg)
            worst = max(worst, abs(direct - float(self._spline2(mids[k]))))
        return worst

    def _s(self, p):
        p = np.clip(np.asarray(p, dtype=float), self.eps, 1.0 - self.eps)
        return np.clip(_logit(p), self._s_bounds[0], self._s_bounds[1])

    def partials(self, pt) -> np.ndarray:
        s = self._s(np.asarray(pt, dtype=float)[0])
        return np.array([float(self._spline1(s)), float(self._spline2(s))])

    def partials_batch(self, points, classes):
        s = self._s(np.asarray(points, dtype=float)[:, 0])
        return np.where(np.asarray(classes) == 0, self._spline1(s), self._spline2(s))

    def bayes_gradient(self, pt) -> np.ndarray:
        lam = self.partials(self._clamped(pt))
        return np.array([lam[0] - lam[1]])

    def bayes_hessian(self, pt) -> np.ndarray:
        p = self._clamped(pt)[0]
        return np.array([[-float(self.weight(p))]])

    def bayes_hessian_batch(self, points) -> np.ndarray:
        p = clamp_interior(np.asarray(points, dtype=float),
                           self.cfg.interior_margin)[:, 0]
        return -np.asarray(self.weight(p), dtype=float)[:, None, None]

    def binary_weight(self) -> BinaryWeight:
        return self.weight


# ---------------------------------------------------------------------------
# module operations
# ---------------------------------------------------------------------------


def make_log_loss(n: int, cfg: ToleranceConfig = DEFAULT_TOLERANCES) -> LogLoss:
    return LogLoss(n, cfg)


def make_square_loss(n: int, scaling: str = "brier",
                     cfg: ToleranceConfig = DEFAULT_TOLERANCES) -> SquareLoss:
    return SquareLoss(n, scaling, cfg)


def binary_weight(loss: ProperLoss) -> BinaryWeight:
    return loss.binary_weight()


def from_binary_weight(weight: BinaryWeight,
                       cfg: ToleranceConfig = DEFAULT_TOLERANCES,
                       name: str | None = None, nodes: int = 512) -> WeightIntegralLoss:
    return WeightIntegralLoss(weight, cfg, name=name, nodes=nodes)


def conditional_risk(loss: ProperLoss, p, q) -> float:
    """Expected loss of predicting q when the truth is p.

    Returns +inf (a value, not an error) when some partial loss diverges
    at q for a class that p gives positive probability; classes with zero
    probability contribute nothing even if their partial diverges.
    """
    p = p if isinstance(p, ProbVector) else ProbVector(p)
    q = q if isinstance(q, ProbVector) else ProbVector(q)
    if p.n != q.n or p.n != loss.n:
        raise DimensionError("p, q and the loss must share the class count")
    lam = loss.partials(project(q).pt)
    active = p.p > 0.0
    if np.any(np.isinf(lam[active])):
        return math.inf
    return float(p.p[active] @ lam[active])


@dataclass(frozen=True)
class PropernessReport:
    """Outcome of sampled properness verification."""

    passed: bool
    max_violation: float
    witness_p: np.ndarray | None
    witness_q: np.ndarray | None
    trials: int
    seed: int
    tolerance: float = 1e-9


def verify_properness(loss: ProperLoss, trials: int = 1000,
                      seed: int = 0) -> PropernessReport:
    """Sampled check that L(p, p) <= L(p, q) over seeded interior pairs.

    Reports the largest violation L(p, p) - L(p, q); the loss passes when
    it stays at or below 1e-9. A strictly proper loss shows strictly
    negative values on distinct pairs.
    """
    rng = np.random.default_rng(seed)
    ps = sample_interior(rng, loss.n, trials, margin=1e-4)
    qs = sample_interior(rng, loss.n, trials, margin=1e-4)
    worst = -math.inf
    witness = (None, None)
    for k in range(trials):
        p = ProbVector(lift_array(ps[k]))
        q = ProbVector(lift_array(qs[k]))
        violation = conditional_risk(loss, p, p) - conditional_risk(loss, p, q)
        if violation > worst:
            worst = violation
            witness = (p.p, q.p)
    return PropernessReport(passed=worst <= 1e-9, max_violation=worst,
                            witness_p=witness[0], witness_q=witness[1],
                            trials=trials, seed=seed)


# Registered weight functions addressable from JSON specs; no expression
# parsing, parameters only.
def _weight_constant(params: dict) -> BinaryWeight:
    value = float(params.get("value", 1.0))
    if value <= 0.0:
        raise ConfigurationError("constant weight must be positive")
    return BinaryWeight(
        fn=lambda p: np.full_like(np.asarray(p, dtype=float), value),
        dfn=lambda p: np.zeros_like(np.asarray(p, dtype=float)),
        name=f"constant({value:g})")


def _weight_log(params: dict) -> BinaryWeight:
    scale = float(params.get("scale", 1.0))
    if scale <= 0.0:
        raise ConfigurationError("log weight scale must be positive")

    def w(p):
        p = np.asarray(p, dtype=float)
        return scale / (p * (1.0 - p))

    def dw(p):
        p = np.asarray(p, dtype=float)
        return -scale * (1.0 - 2.0 * p) / (p * (1.0 - p)) ** 2

    return BinaryWeight(fn=w, dfn=dw, name=f"log(scale={scale:g})")


WEIGHT_CATALOGUE: dict[str, Callable[[dict], BinaryWeight]] = {
    "constant": _weight_constant,
    "log": _weight_log,
}


def weight_from_catalogue(kind: str, params: dict | None = None) -> BinaryWeight:
    if kind not in WEIGHT_CATALOGUE:
        raise ConfigurationError(
            f"unknown weight kind {kind!r}; registered: {sorted(WEIGHT_CATALOGUE)}")
    return WEIGHT_CATALOGUE[kind](params or {})
