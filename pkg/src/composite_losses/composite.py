"""Composite losses: a proper loss evaluated through an inverse link.

For ell_i(v) = lambda_i(inv(v)) the derivatives close over the curvature
ratio kappa(p) = -HL(p) [Dpsi(p)]^{-1}, the Bayes-risk curvature relative
to the link's rate of change:

    grad ell_i(v) = (p - e_i)' kappa(p),
    hess ell_i(v) = -((e_i - p)' (x) I) D[kappa(inv(v))] + kappa(p)' [Dpsi(p)]^{-1},

with e_i the projected unit vector (zero for the last class). Under the
canonical link kappa is the identity, the derivative term vanishes, and
the Hessian collapses to [-HL(p)]^{-1}; the binary case has scalar closed
forms. The derivative of kappa is taken by a fourth-order stencil in v
and contracted exactly, and the assembled Hessian is returned as its
symmetric part with the asymmetry tracked as a diagnostic.

The sign conventions above are pinned by the log-loss/logit oracle
d(-log sigma(v))/dv = sigma(v) - 1 and by requiring positive curvature
for convex composites.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError, AccuracyError
from .links import IdentityLink, Link
from .losses import ProperLoss
from .numerics import (
    DEFAULT_TOLERANCES,
    ToleranceConfig,
    asymmetry_norm,
    fourth_order_partial,
    symmetrize,
)
from .simplex import projected_unit


@dataclass(frozen=True)
class LossEvalPoint:
    """A prediction, its inverse-link image, and the per-class loss values."""

    v: np.ndarray
    pt: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class BinaryDerivatives:
    """Scalar first and second derivatives of a binary composite loss."""

    l1_prime: float
    l2_prime: float
    l1_second: float
    l2_second: float
    kappa: float
    kappa_prime: float
    p: float


@dataclass(frozen=True)
class CanonicalDerivatives:
    gradient: np.ndarray
    hessian: np.ndarray


class CompositeLoss:
    """A (proper loss, link) pair with exact derivative evaluators."""

    def __init__(self, loss: ProperLoss, link: Link,
                 cfg: ToleranceConfig = DEFAULT_TOLERANCES):
        if loss.n != link.n:
            raise DimensionError(
                f"loss has n={loss.n} but link has n={link.n}")
        self.loss = loss
        self.link = link
        self.cfg = cfg
        self.name = f"{loss.name} o {link.name}"

    @property
    def n(self) -> int:
        return self.loss.n

    # -- evaluation -----------------------------------------------------------

    def eval(self, v) -> np.ndarray:
        """All n partial losses at prediction v."""
        pt = self.link.inverse(np.asarray(v, dtype=float))
        return self.loss.partials(pt)

    def eval_point(self, v) -> LossEvalPoint:
        v = np.asarray(v, dtype=float).reshape(-1)
        pt = self.link.inverse(v)
        return LossEvalPoint(v=v, pt=pt, values=self.loss.partials(pt))

    # -- curvature ratio --------------------------------------------------------

    def _inverse_jac(self, v, pt) -> np.ndarray:
        # [Dpsi(pt)]^{-1} equals the inverse-map Jacobian at v; take
        # whichever side the link knows analytically.
        if self.link.jacobian_is_analytic:
            return np.linalg.inv(self.link.jacobian(pt))
        return self.link.inverse_jacobian(v)

    def kappa(self, pt=None, v=None) -> np.ndarray:
        """kappa(p) = -HL(p) [Dpsi(p)]^{-1}; supply the point, prediction, or both."""
        if pt is None and v is None:
            raise ConfigurationError("kappa needs a point or a prediction")
        if pt is None:
            pt = self.link.inverse(np.asarray(v, dtype=float))
        pt = np.asarray(pt, dtype=float)
        if v is None and not self.link.jacobian_is_analytic:
            v = self.link.forward(pt)
        minus_h = -self.loss.bayes_hessian(pt)
        if self.link.jacobian_is_analytic:
            return minus_h @ np.linalg.inv(self.link.jacobian(pt))
        return minus_h @ self.link.inverse_jacobian(np.asarray(v, dtype=float))

    def _kappa_at_prediction(self, v) -> np.ndarray:
        pt = self.link.inverse(v)
        return -self.loss.bayes_hessian(pt) @ self._inverse_jac(v, pt)

    # -- gradients ----------------------------------------------------------------

    def gradient_rows(self, preds: np.ndarray, classes) -> np.ndarray:
        """Per-example gradient of the loss of the given class, shape (m, n-1).

        This is the single gradient code path: the scalar ``gradient``
        delegates here, and the boosting harness consumes it in bulk.
        """
        preds = np.atleast_2d(np.asarray(preds, dtype=float))
        classes = np.asarray(classes, dtype=int).reshape(-1)
        if classes.size != preds.shape[0]:
            raise DimensionError("one class index per prediction row required")
        if np.any(classes < 0) or np.any(classes >= self.n):
            raise DimensionError(f"class indices out of range for n={self.n}")
        points = self.link.inverse_batch(preds)
        minus_h = -self.loss.bayes_hessian_batch(points)
        inv_jac = self.link._inverse_jacobian_batch(preds, points=points)
        units = np.zeros_like(points)
        small = classes < self.n - 1
        units[np.flatnonzero(small), classes[small]] = 1.0
        rows = np.einsum("mi,mik->mk", points - units, minus_h)
        return np.einsum("mk,mkj->mj", rows, inv_jac)

    def gradient(self, v, i: int) -> np.ndarray:
        """Gradient of ell_i at v: (p - e_i)' kappa(p)."""
        return self.gradient_rows(np.asarray(v, dtype=float)[None], [i])[0]

    def gradient_all(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float).reshape(-1)
        preds = np.repeat(v[None], self.n, axis=0)
        return self.gradient_rows(preds, np.arange(self.n))

    # -- Hessians -------------------------------------------------------------------

    def _kappa_pieces(self, v):
        v = np.asarray(v, dtype=float).reshape(-1)
        pt = self.link.inverse(v)
        inv_jac = self._inverse_jac(v, pt)
        kap = -self.loss.bayes_hessian(pt) @ inv_jac
        dkap = [fourth_order_partial(self._kappa_at_prediction, v, j, self.cfg.kappa_step)
                for j in range(v.size)]
        return pt, inv_jac, kap, dkap

    def hessian_all(self, v) -> np.ndarray:
        """Hessians of every ell_i at v, shape (n, n-1, n-1), symmetrized."""
        pt, inv_jac, kap, dkap = self._kappa_pieces(v)
        base = kap.T @ inv_jac
        out = np.empty((self.n, pt.size, pt.size))
        for i in range(self.n):
            direction = projected_unit(i, self.n) - pt
            contraction = np.stack([dk @ direction for dk in dkap], axis=1)
            raw = base - contraction
            self._check_asymmetry(raw)
            out[i] = symmetrize(raw)
        return out

    def hessian(self, v, i: int) -> np.ndarray:
        if not 0 <= i < self.n:
            raise DimensionError(f"class index {i} out of range for n={self.n}")
        return self.hessian_all(v)[i]

    def _check_asymmetry(self, raw: np.ndarray) -> None:
        gap = asymmetry_norm(raw)
        limit = 1e-6 * max(float(np.linalg.norm(raw)), 1e-3)
        if gap > limit:
            raise AccuracyError(
                f"Hessian asymmetry {gap:.3e} exceeds {limit:.3e}; "
                "the derivative stencil is unreliable at this point")

    def curvature_inequality_sides(self, v):
        """Both sides of the strong-convexity matrix inequality, symmetrized.

        Returns (lhs, rhs) with lhs[i] the contracted kappa-derivative
        term for class i and rhs the kappa' [Dpsi]^{-1} term; the loss is
        c-strongly convex at v iff lhs[i] <= rhs - cI for every class.
        The class-i Hessian equals rhs - lhs[i].
        """
        pt, inv_jac, kap, dkap = self._kappa_pieces(v)
        rhs = symmetrize(kap.T @ inv_jac)
        lhs = np.empty((self.n, pt.size, pt.size))
        for i in range(self.n):
            direction = projected_unit(i, self.n) - pt
            lhs[i] = symmetrize(np.stack([dk @ direction for dk in dkap], axis=1))
        return lhs, rhs

    # -- binary closed forms ------------------------------------------------------

    def binary_derivatives(self, v) -> BinaryDerivatives:
        """First and second derivatives of both partial losses, n = 2 only.

        kappa'(p) is analytic through the registered weight derivative for
        the identity link; otherwise it is recovered from the v-slope of
        kappa via the chain rule.
        """
        if self.n != 2:
            raise DimensionError("binary derivatives require n=2")
        v = np.asarray(v, dtype=float).reshape(-1)
        pt = self.link.inverse(v)
        p = float(pt[0])
        psi_prime = float(self.link.jacobian(pt)[0, 0])
        w = float(-self.loss.bayes_hessian(pt)[0, 0])
        kap = w / psi_prime
        if isinstance(self.link, IdentityLink):
            kap_prime = float(self.loss.binary_weight().derivative(p))
        else:
            scalar_kappa = lambda vv: self._kappa_at_prediction(vv).reshape(1)
            dk_dv = float(fourth_order_partial(scalar_kappa, v, 0,
                                               self.cfg.kappa_step)[0])
            kap_prime = dk_dv * psi_prime
        return BinaryDerivatives(
            l1_prime=-(1.0 - p) * kap,
            l2_prime=p * kap,
            l1_second=(-(1.0 - p) * kap_prime + kap) / psi_prime,
            l2_second=(p * kap_prime + kap) / psi_prime,
            kappa=kap, kappa_prime=kap_prime, p=p)

    # -- canonical fast path ---------------------------------------------------------

    def canonical_fast(self, v, i: int) -> CanonicalDerivatives:
        """Closed forms valid only under the canonical link.

        gradient = p - e_i and hessian = [-HL(p)]^{-1}. Misuse (kappa not
        within 1e-6 of the identity) is rejected.
        """
        if not 0 <= i < self.n:
            raise DimensionError(f"class index {i} out of range for n={self.n}")
        v = np.asarray(v, dtype=float).reshape(-1)
        pt = self.link.inverse(v)
        kap = self.kappa(pt=pt, v=v)
        deviation = float(np.abs(kap - np.eye(pt.size)).max())
        if deviation > 1e-6:
            raise ConfigurationError(
                f"canonical_fast misuse: kappa deviates from identity by "
                f"{deviation:.3e} for link {self.link.name}")
        return CanonicalDerivatives(
            gradient=pt - projected_unit(i, self.n),
            hessian=np.linalg.inv(-self.loss.bayes_hessian(pt)))
