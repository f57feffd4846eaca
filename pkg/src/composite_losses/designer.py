"""Designer for strongly convex binary proper losses.

Pick a slope function u confined to the band -1/p <= u(p) <= 1/(1-p) and
a modulus c; then

    w(p) = (1 - c) exp( int_{1/2}^p u(t) dt ) + c

is a weight function whose loss is c-strongly convex, normalized so
w(1/2) = 1 exactly (anchoring the integral at one half eliminates the
free constant). The loss itself is reconstructed from w through the
integral representation, and the result is certified at the requested
modulus and checked for properness before it is handed back.

Slope functions come from a registered catalogue (constants, the
log-loss slope, the two band envelopes); there is no expression parser.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .convexity import ConvexityReport, binary_iff_check, default_grid
from .errors import ConfigurationError, DesignError
from .losses import (
    BinaryWeight,
    PropernessReport,
    WeightIntegralLoss,
    from_binary_weight,
    verify_properness,
)
from .numerics import DEFAULT_TOLERANCES, ToleranceConfig, quad_integrate

_TABLE_NODES = 1024


def _logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


def _expit(s):
    s = np.asarray(s, dtype=float)
    return 0.5 * (1.0 + np.tanh(0.5 * s))


@dataclass(frozen=True)
class USpec:
    """A registered slope function u on (0, 1)."""

    name: str
    u: Callable
    params: dict = field(default_factory=dict)


def _u_zero(params: dict) -> USpec:
    return USpec("zero", lambda p: np.zeros_like(np.asarray(p, dtype=float)))


def _u_constant(params: dict) -> USpec:
    value = float(params.get("value", 0.0))
    return USpec(f"constant({value:g})",
                 lambda p: np.full_like(np.asarray(p, dtype=float), value),
                 {"value": value})


def _u_log(params: dict) -> USpec:
    # Slope of log(w) for the normalized log-loss weight 1/(4p(1-p)).
    def u(p):
        p = np.asarray(p, dtype=float)
        return (2.0 * p - 1.0) / (p * (1.0 - p))

    return USpec("log", u)


def _u_upper_envelope(params: dict) -> USpec:
    def u(p):
        p = np.asarray(p, dtype=float)
        return 1.0 / (1.0 - p)

    return USpec("upper_envelope", u)


def _u_lower_envelope(params: dict) -> USpec:
    def u(p):
        p = np.asarray(p, dtype=float)
        return -1.0 / p

    return USpec("lower_envelope", u)


U_CATALOGUE: dict[str, Callable[[dict], USpec]] = {
    "zero": _u_zero,
    "constant": _u_constant,
    "log": _u_log,
    "upper_envelope": _u_upper_envelope,
    "lower_envelope": _u_lower_envelope,
}


def u_from_catalogue(kind: str, params: dict | None = None) -> USpec:
    if kind not in U_CATALOGUE:
        raise ConfigurationError(
            f"unknown slope function {kind!r}; registered: {sorted(U_CATALOGUE)}")
    return U_CATALOGUE[kind](params or {})


@dataclass(frozen=True)
class DesignSpec:
    """A slope function, the target modulus, and the boundary truncation."""

    u: USpec
    modulus: float
    eps: float = DEFAULT_TOLERANCES.interior_margin
    name: str | None = None

    def __post_init__(self):
        if not 0.0 <= self.modulus <= 1.0:
            raise ConfigurationError(
                f"modulus must lie in [0, 1], got {self.modulus!r}")
        if not 0.0 < self.eps < 0.5:
            raise ConfigurationError("eps must lie in (0, 1/2)")

    @property
    def label(self) -> str:
        return self.name or f"designed[u={self.u.name}, c={self.modulus:g}]"


@dataclass(frozen=True)
class UValidationReport:
    passed: bool
    worst_margin: float
    witness_p: float | None
    grid_size: int


def _default_u_grid(eps: float) -> np.ndarray:
    # Uniform in the logit coordinate so both endpoint regions are probed.
    hi = _logit(1.0 - max(eps, 1e-6))
    return _expit(np.linspace(-hi, hi, 801))


def validate_u(spec: DesignSpec, grid=None) -> UValidationReport:
    """Check the band -1/p <= u(p) <= 1/(1-p) at every grid point.

    The worst margin is the smallest slack to either bound; boundary
    functions sit at exactly zero, which passes.
    """
    ps = _default_u_grid(spec.eps) if grid is None else np.asarray(grid, dtype=float)
    vals = np.asarray(spec.u.u(ps), dtype=float)
    slack = np.minimum(vals + 1.0 / ps, 1.0 / (1.0 - ps) - vals)
    idx = int(np.argmin(slack))
    worst = float(slack[idx])
    return UValidationReport(passed=worst >= -1e-12, worst_margin=worst,
                             witness_p=float(ps[idx]), grid_size=ps.size)


def weight_from_u(spec: DesignSpec,
                  cfg: ToleranceConfig = DEFAULT_TOLERANCES) -> BinaryWeight:
    """Build the weight (1 - c) exp(int_{1/2}^p u) + c.

    The integral of u is tabulated once by cumulative adaptive quadrature
    over Chebyshev-Lobatto nodes in the logit coordinate, anchored to 0
    at p = 1/2 so w(1/2) = 1 identically, and interpolated with cubic
    Hermite pieces whose slopes are u itself. The weight derivative
    w' = (1 - c) exp(int u) u comes along analytically.
    """
    report = validate_u(spec)
    if not report.passed:
        raise ConfigurationError(
            f"slope function {spec.u.name} leaves the admissible band: "
            f"margin {report.worst_margin:.3e} at p = {report.witness_p:.6g}")
    c = spec.modulus
    u = spec.u.u
    eps = spec.eps
    s_hi = float(_logit(1.0 - eps))
    count = _TABLE_NODES
    s_nodes = s_hi * np.cos(np.pi * np.arange(count, -1, -1) / count)
    s_nodes[count // 2] = 0.0
    p_nodes = _expit(s_nodes)
    p_nodes[count // 2] = 0.5

    seg_cfg = cfg.updated(quad_tol=max(cfg.quad_tol / count, 1e-14))
    integral = np.zeros(count + 1)
    mid = count // 2
    for k in range(mid, count):
        integral[k + 1] = integral[k] + quad_integrate(
            lambda t: float(u(t)), p_nodes[k], p_nodes[k + 1], seg_cfg)
    for k in range(mid - 1, -1, -1):
        integral[k] = integral[k + 1] + quad_integrate(
            lambda t: float(u(t)), p_nodes[k + 1], p_nodes[k], seg_cfg)

    dvals = np.asarray(u(p_nodes), dtype=float) * p_nodes * (1.0 - p_nodes)
    table = CubicHermiteSpline(s_nodes, integral, dvals)
    bounds = (s_nodes[0], s_nodes[-1])

    def cumulative(p):
        p = np.clip(np.asarray(p, dtype=float), eps, 1.0 - eps)
        return table(np.clip(_logit(p), bounds[0], bounds[1]))

    def w(p):
        return (1.0 - c) * np.exp(cumulative(p)) + c

    def dw(p):
        p_arr = np.clip(np.asarray(p, dtype=float), eps, 1.0 - eps)
        return (1.0 - c) * np.exp(cumulative(p_arr)) * np.asarray(u(p_arr), dtype=float)

    return BinaryWeight(fn=w, dfn=dw, name=f"design[u={spec.u.name}, c={c:g}]")


@dataclass(frozen=True)
class DesignResult:
    loss: WeightIntegralLoss
    weight: BinaryWeight
    convexity: ConvexityReport
    properness: PropernessReport


def design_loss(spec: DesignSpec, cfg: ToleranceConfig = DEFAULT_TOLERANCES,
                grid=None) -> DesignResult:
    """Full pipeline: validate u, build w, reconstruct, certify.

    Raises DesignError when the reconstructed loss misses the requested
    modulus on the certification grid or fails sampled properness; the
    failing report rides on the exception.
    """
    weight = weight_from_u(spec, cfg)
    loss = from_binary_weight(weight, cfg, name=spec.label)
    if grid is None:
        grid = default_grid(2)
    convexity = binary_iff_check(weight, spec.modulus, grid, cfg)
    if not convexity.certified:
        raise DesignError(
            f"designed loss {spec.label} failed certification at modulus "
            f"{spec.modulus:g} (worst slack {convexity.min_shifted_eig:.3e} at "
            f"p = {convexity.witness.point[0]:.6g})",
            report=convexity)
    properness = verify_properness(loss, trials=1000, seed=11)
    if not properness.passed:
        raise DesignError(
            f"designed loss {spec.label} failed properness "
            f"(max violation {properness.max_violation:.3e})",
            report=properness)
    return DesignResult(loss=loss, weight=weight, convexity=convexity,
                        properness=properness)
