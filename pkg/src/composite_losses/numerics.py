"""Shared numerical kernels.

Finite differences, adaptive Simpson quadrature, shifted-eigenvalue tests
and a damped root finder for strictly monotone maps. Everything here is
pure: results depend only on the arguments, so concurrent use is safe.

Symmetric matrices are represented as plain ``numpy`` arrays; use
``symmetrize`` / ``asymmetry_norm`` when an operation only guarantees
symmetry up to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import (
    AccuracyError,
    ConfigurationError,
    ConvergenceError,
    EvaluationDomainError,
)

# Subdivision budget for adaptive quadrature, counted in accepted or split
# intervals. Generous: weight functions with integrable endpoint blowups
# need a few thousand intervals at tight tolerances.
_QUAD_MAX_INTERVALS = 500_000


@dataclass(frozen=True)
class ToleranceConfig:
    """Numerical tolerances threaded through every module.

    fd_step / hessian_step are the central-difference steps of the
    gradient and Hessian oracles. jac_step and kappa_step control the
    internal fourth-order stencils used for link Jacobians and for the
    derivative of the curvature ratio; they are wider than fd_step
    because those stencils difference already-differenced quantities.
    """

    fd_step: float = 1e-6
    hessian_step: float = 1e-4
    jac_step: float = 1e-3
    kappa_step: float = 1e-3
    psd_tol: float = 1e-9
    quad_tol: float = 1e-10
    root_tol: float = 1e-10
    max_iter: int = 100
    interior_margin: float = 1e-7

    def __post_init__(self):
        for field in ("fd_step", "hessian_step", "jac_step", "kappa_step",
                      "quad_tol", "root_tol", "interior_margin"):
            if not getattr(self, field) > 0.0:
                raise ConfigurationError(f"{field} must be > 0")
        if self.psd_tol < 0.0:
            raise ConfigurationError("psd_tol must be >= 0")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be a positive integer")

    def updated(self, **kwargs) -> "ToleranceConfig":
        return replace(self, **kwargs)


DEFAULT_TOLERANCES = ToleranceConfig()


def _checked_eval(f: Callable, x: np.ndarray) -> float:
    value = float(f(x))
    if not math.isfinite(value):
        raise EvaluationDomainError(
            f"non-finite value {value!r} at probe {np.asarray(x).tolist()}")
    return value


def central_gradient(f: Callable[[np.ndarray], float], x,
                     cfg: ToleranceConfig = DEFAULT_TOLERANCES) -> np.ndarray:
    """Central-difference gradient of a scalar map on R^d.

    Component k is (f(x + h e_k) - f(x - h e_k)) / (2h) with h = fd_step.
    Raises EvaluationDomainError, naming the probe, if f is non-finite at
    any probe point.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    h = cfg.fd_step
    grad = np.empty(x.size)
    for k in range(x.size):
        step = np.zeros_like(x)
        step[k] = h
        grad[k] = (_checked_eval(f, x + step) - _checked_eval(f, x - step)) / (2.0 * h)
    return grad


def central_hessian(f: Callable[[np.ndarray], float], x,
                    cfg: ToleranceConfig = DEFAULT_TOLERANCES) -> np.ndarray:
    """Second-difference Hessian of a scalar map, symmetrized as (H + H')/2.

    Uses step hessian_step; probes live within a ball of radius 2h of x.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    d = x.size
    h = cfg.hessian_step
    hess = np.empty((d, d))
    f0 = _checked_eval(f, x)
    for j in range(d):
        ej = np.zeros(d)
        ej[j] = h
        hess[j, j] = (_checked_eval(f, x + ej) - 2.0 * f0 + _checked_eval(f, x - ej)) / h ** 2
    for j in range(d):
        ej = np.zeros(d)
        ej[j] = h
        for k in range(j + 1, d):
            ek = np.zeros(d)
            ek[k] = h
            val = (_checked_eval(f, x + ej + ek) - _checked_eval(f, x + ej - ek)
                   - _checked_eval(f, x - ej + ek) + _checked_eval(f, x - ej - ek)) / (4.0 * h ** 2)
            hess[j, k] = val
            hess[k, j] = val
    return symmetrize(hess)


def fourth_order_partial(f: Callable[[np.ndarray], np.ndarray], x, j: int,
                         h: float) -> np.ndarray:
    """Fourth-order central estimate of the partial of a vector map.

    Five-point stencil (8(f+ - f-) - (f++ - f--)) / (12h). Used where the
    differenced quantity is itself computed numerically and a second-order
    stencil would lose too much to truncation.
    """
    x = np.asarray(x, dtype=float)
    step = np.zeros_like(x)
    step[j] = h
    f_p1 = np.asarray(f(x + step), dtype=float)
    f_m1 = np.asarray(f(x - step), dtype=float)
    f_p2 = np.asarray(f(x + 2.0 * step), dtype=float)
    f_m2 = np.asarray(f(x - 2.0 * step), dtype=float)
    return (8.0 * (f_p1 - f_m1) - (f_p2 - f_m2)) / (12.0 * h)


def symmetrize(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


def asymmetry_norm(m: np.ndarray) -> float:
    m = np.asarray(m, dtype=float)
    return float(np.linalg.norm(m - m.T))


def min_shifted_eigenvalue(m, c: float) -> float:
    """Smallest eigenvalue of M - c I for symmetric M.

    M dominates c I (in the semidefinite order) iff the returned value is
    >= -psd_tol for the caller's tolerance. Input is symmetrized first;
    a matrix that is asymmetric beyond rounding is rejected.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ConfigurationError(f"expected a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.abs(m).max()))
    if asymmetry_norm(m) > 1e-8 * scale:
        raise ConfigurationError("matrix is not symmetric")
    shifted = symmetrize(m) - c * np.eye(m.shape[0])
    return float(np.linalg.eigvalsh(shifted).min())


def quad_integrate(g: Callable[[float], float], a: float, b: float,
                   cfg: ToleranceConfig = DEFAULT_TOLERANCES) -> float:
    """Adaptive Simpson integral of g over [a, b] to absolute tolerance.

    Orientation follows the usual sign convention: integrating from b to a
    negates the result. Non-finite probes raise EvaluationDomainError; an
    exhausted subdivision budget raises AccuracyError carrying the best
    estimate accumulated so far.
    """
    a = float(a)
    b = float(b)
    if a == b:
        return 0.0
    sign = 1.0
    lo, hi = a, b
    if hi < lo:
        lo, hi = hi, lo
        sign = -1.0

    def probe(t: float) -> float:
        value = float(g(t))
        if not math.isfinite(value):
            raise EvaluationDomainError(f"non-finite integrand value at t={t!r}")
        return value

    def simpson(x0, x2, f0, f1, f2):
        return (x2 - x0) / 6.0 * (f0 + 4.0 * f1 + f2)

    mid = 0.5 * (lo + hi)
    f_lo, f_mid, f_hi = probe(lo), probe(mid), probe(hi)
    whole = simpson(lo, hi, f_lo, f_mid, f_hi)
    stack = [(lo, hi, f_lo, f_mid, f_hi, whole, cfg.quad_tol)]
    total = 0.0
    used = 0
    while stack:
        x0, x2, f0, f1, f2, s, tol = stack.pop()
        used += 1
        if used > _QUAD_MAX_INTERVALS:
            best = total + s + sum(item[5] for item in stack)
            raise AccuracyError(
                "quadrature subdivision budget exhausted before reaching "
                f"tolerance {cfg.quad_tol:g} on [{a:g}, {b:g}]",
                best_estimate=sign * best)
        xm = 0.5 * (x0 + x2)
        # Interval too narrow to split in double precision: accept as is.
        if xm <= x0 or xm >= x2:
            total += s
            continue
        xl = 0.5 * (x0 + xm)
        xr = 0.5 * (xm + x2)
        fl = probe(xl)
        fr = probe(xr)
        s_left = simpson(x0, xm, f0, fl, f1)
        s_right = simpson(xm, x2, f1, fr, f2)
        err = s_left + s_right - s
        if abs(err) <= 15.0 * tol:
            total += s_left + s_right + err / 15.0
        else:
            half = 0.5 * tol
            stack.append((x0, xm, f0, fl, f1, s_left, half))
            stack.append((xm, x2, f1, fr, f2, s_right, half))
    return sign * total


def _fd_jacobian(F: Callable, x: np.ndarray, residual: np.ndarray) -> np.ndarray:
    d = x.size
    jac = np.empty((residual.size, d))
    for j in range(d):
        step = np.zeros(d)
        step[j] = 1e-6 * max(1.0, abs(x[j]))
        jac[:, j] = (np.asarray(F(x + step), dtype=float)
                     - np.asarray(F(x - step), dtype=float)) / (2.0 * step[j])
    return jac


def solve_monotone(F: Callable[[np.ndarray], np.ndarray], target, x0,
                   cfg: ToleranceConfig = DEFAULT_TOLERANCES,
                   jac: Callable[[np.ndarray], np.ndarray] | None = None) -> np.ndarray:
    """Solve F(x) = target for a strictly monotone map F.

    Damped Newton iteration on the residual. Steps that leave the domain
    of F (signalled by EvaluationDomainError from a probe) are halved; if
    damping floors out on domain errors alone the domain error is raised,
    otherwise exhausting the iteration budget raises ConvergenceError
    carrying the residual. Strict monotonicity makes the root unique, so
    any converged answer is the answer.
    """
    target = np.asarray(target, dtype=float).reshape(-1)
    x = np.asarray(x0, dtype=float).reshape(-1).copy()
    if x.size != target.size:
        raise ConfigurationError("x0 and target must have the same dimension")
    residual = np.asarray(F(x), dtype=float) - target
    res_norm = float(np.linalg.norm(residual))
    for _ in range(cfg.max_iter):
        if res_norm <= cfg.root_tol:
            return x
        jmat = np.atleast_2d(np.asarray(jac(x) if jac is not None
                                        else _fd_jacobian(F, x, residual), dtype=float))
        try:
            delta = np.linalg.solve(jmat, -residual)
        except np.linalg.LinAlgError:
            raise ConvergenceError(
                "singular Jacobian encountered while inverting a monotone map",
                residual=res_norm, iterate=x)
        scale = 1.0
        accepted = False
        domain_only = True
        while scale >= 2.0 ** -50:
            cand = x + scale * delta
            try:
                cand_res = np.asarray(F(cand), dtype=float) - target
            except EvaluationDomainError:
                scale *= 0.5
                continue
            domain_only = False
            cand_norm = float(np.linalg.norm(cand_res))
            if cand_norm <= (1.0 - 1e-4 * scale) * res_norm or cand_norm <= cfg.root_tol:
                x, residual, res_norm = cand, cand_res, cand_norm
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            if domain_only:
                raise EvaluationDomainError(
                    "every damped step left the domain of the map being inverted")
            raise ConvergenceError(
                "damping floored out without residual decrease",
                residual=res_norm, iterate=x)
    if res_norm <= cfg.root_tol:
        return x
    raise ConvergenceError(
        f"no convergence within {cfg.max_iter} iterations "
        f"(residual {res_norm:.3e} > root_tol {cfg.root_tol:g})",
        residual=res_norm, iterate=x)
