"""
Averaged operators and their inexact counterparts.

An averaged map is the convex combination ``F = (1 - alpha) I + alpha T``
of the identity and a non-expansive base map ``T``. Maps act on 1-D
``numpy`` arrays; the norm is the Euclidean 2-norm throughout.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonFiniteOutput


# ---------------------------------------------------------------------------
# operator classes

@dataclass(frozen=True)
class NonExpansive:
    """1-Lipschitz map."""

    @property
    def lipschitz(self):
        return 1.0


@dataclass(frozen=True)
class Contraction:
    """Lipschitz map with modulus ``L`` in ``[0, 1)``."""

    L: float

    def __post_init__(self):
        if not 0.0 <= self.L < 1.0:
            raise ValueError(f"contraction modulus must lie in [0, 1), got {self.L}")

    @property
    def lipschitz(self):
        return float(self.L)


@dataclass(frozen=True)
class Averaged:
    """``alpha``-averaged map; non-expansive as a whole."""

    alpha: float

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"averaging parameter must lie in (0, 1), got {self.alpha}")

    @property
    def lipschitz(self):
        return 1.0


def as_point(x, dim=None):
    """Return ``x`` as a finite float vector, checking its dimension."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.ndim != 1:
        raise DimensionMismatch(f"points must be 1-D vectors, got shape {x.shape}")
    if dim is not None and x.shape[0] != dim:
        raise DimensionMismatch(f"expected a point in R^{dim}, got R^{x.shape[0]}")
    return x


def _checked(y, x, name):
    y = np.asarray(y, dtype=float)
    if y.ndim == 0:
        y = y.reshape(1)
    if y.shape != x.shape:
        raise DimensionMismatch(f"{name} mapped R^{x.shape[0]} to shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise NonFiniteOutput(f"{name} produced a non-finite value")
    return y


def _check_alpha(alpha):
    alpha = float(alpha)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"averaging parameter must lie in (0, 1), got {alpha}")
    return alpha


# ---------------------------------------------------------------------------
# exact averaged maps

class AveragedMap:
    """
    Averaged map ``F = (1 - alpha) I + alpha T``.

    The map can be described either by its base ``T`` or by a ``direct``
    evaluation of ``F`` itself (useful when ``F`` is a projected gradient
    step or a composition). When only ``direct`` is given the base map is
    recovered as ``T(x) = (F(x) - (1 - alpha) x) / alpha``.

    Parameters
    ----------
    alpha : float
        Averaging parameter in ``(0, 1)``.
    base : callable, optional
        The non-expansive base map ``T``.
    direct : callable, optional
        Direct evaluation of ``F``. Takes precedence over ``base`` when
        evaluating the map.
    domain : FeasibleSet, optional
        Set the map is declared on. ``None`` means the whole space.
    op_class : NonExpansive, Contraction or Averaged, optional
        Lipschitz metadata for ``F``; defaults to non-expansive.
    dim : int, optional
        Dimension of the iterate, checked on every application.
    name : str, optional
        Used in error messages.
    """

    error_bound = 0.0

    def __init__(self, alpha, base=None, *, direct=None, domain=None,
                 op_class=None, dim=None, name=None):
        if base is None and direct is None:
            raise ValueError("an averaged map needs a base map or a direct evaluation")
        self.alpha = _check_alpha(alpha)
        self._base = base
        self._direct = direct
        self.domain = domain
        self.op_class = op_class if op_class is not None else NonExpansive()
        self.dim = dim
        self.name = name or getattr(base, "__name__", None) or "averaged map"

    def __repr__(self):
        return f"AveragedMap(alpha={self.alpha:.6g}, name={self.name!r}, class={self.op_class})"

    def __call__(self, x):
        return apply_averaged(self, x)

    @property
    def lipschitz(self):
        return self.op_class.lipschitz

    @property
    def exact(self):
        return self

    def base_at(self, x):
        """Evaluate the base map ``T`` at ``x``."""
        x = as_point(x, self.dim)
        if self._base is not None:
            return _checked(self._base(x), x, self.name)
        return self.base_from(x, self(x))

    def base_from(self, x, fx):
        """Recover ``T(x)`` from an already computed ``F(x)``."""
        if self._base is not None:
            return self.base_at(x)
        return (fx - (1.0 - self.alpha) * x) / self.alpha

    def residual(self, x):
        """Fixed-point residual ``||x - F(x)||``."""
        x = as_point(x, self.dim)
        return float(np.linalg.norm(x - self(x)))

    def base_residual(self, x):
        """Fixed-point residual of the base map, ``||x - T(x)||``."""
        x = as_point(x, self.dim)
        return float(np.linalg.norm(x - self.base_at(x)))


def apply_averaged(F, x):
    """Return ``(1 - alpha) x + alpha T(x)`` (or the direct form of ``F``)."""
    x = as_point(x, F.dim)
    if F._direct is not None:
        return _checked(F._direct(x), x, F.name)
    Tx = _checked(F._base(x), x, F.name)
    return _checked((1.0 - F.alpha) * x + F.alpha * Tx, x, F.name)


# ---------------------------------------------------------------------------
# inexact maps

class InexactOracle:
    """
    Approximate base map ``T_hat`` with a certified error bound.

    ``error_bound`` must dominate ``||T(x) - T_hat(x)||`` over the domain.
    When the exact map is attached (``exact``) the bound can be checked
    with :meth:`certify`.
    """

    def __init__(self, approx, error_bound, exact=None, domain=None, name=None):
        error_bound = float(error_bound)
        if not np.isfinite(error_bound) or error_bound < 0:
            raise ValueError(f"error bound must be finite and non-negative, got {error_bound}")
        self.approx = approx
        self.error_bound = error_bound
        self.exact = exact
        self.domain = domain
        self.name = name or "inexact oracle"

    def __call__(self, x):
        x = as_point(x)
        return _checked(self.approx(x), x, self.name)

    def deviation(self, x):
        """Measured ``||T(x) - T_hat(x)||``; needs the exact map."""
        if self.exact is None:
            raise ValueError("deviation needs the exact map attached")
        x = as_point(x)
        return float(np.linalg.norm(_checked(self.exact(x), x, self.name) - self(x)))

    def certify(self, points, rtol=1e-9, atol=1e-12):
        """
        Check the declared bound (and domain membership) on sample points.

        Returns the largest measured deviation; raises ``AssertionError``
        if the bound is exceeded or ``T_hat(x)`` leaves the domain.
        """
        worst = 0.0
        for x in points:
            dev = self.deviation(x)
            worst = max(worst, dev)
            if dev > self.error_bound * (1 + rtol) + atol:
                raise AssertionError(
                    f"{self.name}: deviation {dev:.6e} exceeds certified bound {self.error_bound:.6e}")
            if self.domain is not None and not self.domain.contains(self(x), tol=1e-8):
                raise AssertionError(f"{self.name}: approximate map leaves its domain")
        return worst


class InexactAveragedMap:
    """
    Inexact averaged map ``F_hat = (1 - alpha) I + alpha T_hat``.

    ``exact`` is the matching exact :class:`AveragedMap` when it is known
    (test mode); the tracker records residuals against it. ``direct`` is an
    optional direct evaluation of ``F_hat``.
    """

    def __init__(self, alpha, oracle, *, exact=None, direct=None, domain=None,
                 op_class=None, dim=None, name=None):
        self.alpha = _check_alpha(alpha)
        self.oracle = oracle
        if exact is None and oracle.exact is not None:
            exact = AveragedMap(self.alpha, oracle.exact, domain=domain,
                                op_class=op_class, dim=dim, name=name)
        self.exact = exact
        self._direct = direct
        self.domain = domain if domain is not None else oracle.domain
        self.op_class = op_class if op_class is not None else (
            exact.op_class if exact is not None else NonExpansive())
        self.dim = dim
        self.name = name or oracle.name

    def __repr__(self):
        return (f"InexactAveragedMap(alpha={self.alpha:.6g}, "
                f"error_bound={self.error_bound:.6g}, name={self.name!r})")

    def __call__(self, x):
        return apply_inexact_averaged(self, x)

    @property
    def error_bound(self):
        return self.oracle.error_bound

    @property
    def lipschitz(self):
        return self.op_class.lipschitz


def apply_inexact_averaged(Fhat, x):
    """Return ``(1 - alpha) x + alpha T_hat(x)``."""
    x = as_point(x, Fhat.dim)
    if Fhat._direct is not None:
        return _checked(Fhat._direct(x), x, Fhat.name)
    Tx = Fhat.oracle(x)
    return _checked((1.0 - Fhat.alpha) * x + Fhat.alpha * Tx, x, Fhat.name)


# ---------------------------------------------------------------------------
# composition

def composed_alpha(alpha1, alpha2):
    """Averaging parameter of the composition of an alpha1- and an alpha2-averaged map."""
    alpha1, alpha2 = _check_alpha(alpha1), _check_alpha(alpha2)
    return (alpha1 + alpha2 - 2.0 * alpha1 * alpha2) / (1.0 - alpha1 * alpha2)


def compose_averaged(F1, F2, name=None):
    """
    Averaged map ``x -> F1(F2(x))``.

    The composed evaluation is the sequential application of ``F2`` then
    ``F1``; the averaging parameter follows :func:`composed_alpha`.
    """
    if F1.dim is not None and F2.dim is not None and F1.dim != F2.dim:
        raise DimensionMismatch(f"cannot compose maps on R^{F1.dim} and R^{F2.dim}")
    L = F1.lipschitz * F2.lipschitz
    op_class = Contraction(L) if L < 1.0 else NonExpansive()

    def composed(x):
        return F1(F2(x))

    return AveragedMap(composed_alpha(F1.alpha, F2.alpha), direct=composed,
                       domain=F2.domain, op_class=op_class,
                       dim=F1.dim if F1.dim is not None else F2.dim,
                       name=name or f"({F1.name}) o ({F2.name})")


# ---------------------------------------------------------------------------
# diagnostics

def convex_combination_identity(x, y, theta):
    """
    Both sides of ``||(1-t)x + t y||^2 = (1-t)||x||^2 + t||y||^2 - t(1-t)||x-y||^2``.

    Returns ``(lhs, rhs)``.
    """
    x, y = as_point(x), as_point(y)
    if x.shape != y.shape:
        raise DimensionMismatch(f"points of different dimension: {x.shape} vs {y.shape}")
    theta = float(theta)
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    lhs = float(np.sum(((1.0 - theta) * x + theta * y) ** 2))
    rhs = float((1.0 - theta) * np.dot(x, x) + theta * np.dot(y, y)
                - theta * (1.0 - theta) * np.sum((x - y) ** 2))
    return lhs, rhs


def identity_tolerance(x, y):
    """Tolerance ``64 eps max(1, ||x||^2, ||y||^2)`` for :func:`convex_combination_identity`."""
    eps = np.finfo(float).eps
    return 64 * eps * max(1.0, float(np.dot(x, x)), float(np.dot(y, y)))


def empirical_lipschitz(F, pairs):
    """
    Largest ratio ``||F(x) - F(y)|| / ||x - y||`` over the sample pairs.

    Coincident pairs are skipped. The result is a lower bound on the true
    Lipschitz modulus of ``F``.
    """
    best = None
    for x, y in pairs:
        x, y = as_point(x), as_point(y)
        d = np.linalg.norm(x - y)
        if d == 0.0:
            continue
        ratio = np.linalg.norm(F(x) - F(y)) / d
        best = ratio if best is None else max(best, ratio)
    if best is None:
        raise ValueError("all sample pairs are coincident")
    return float(best)
