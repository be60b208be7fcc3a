"""
Multi-point (zeroth-order) gradient estimation with a certified error bound.

The estimator averages antipodal central differences along random unit
directions,

    y = (d / N) * sum_i (f(x + delta u_i) - f(x - delta u_i)) / (2 delta) * u_i,

with ``N = n_evals // 2`` directions. Writing ``D = (d / N) sum_i u_i u_i^T``,
the deviation from the true gradient splits into a direction-sampling part
``(D - I) grad f(x)`` and a finite-difference part bounded through the third
derivative. Both are computable from the drawn directions, which gives the
certified bound returned alongside the estimate.
"""

import numpy as np

from .errors import DomainViolation


def sphere_directions(rng, count, dim):
    """``count`` unit vectors drawn uniformly on the sphere in ``R^dim``."""
    u = rng.standard_normal((count, dim))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def certified_error(directions, delta, grad_bound, third_bound=0.0):
    """
    Deterministic bound on ``||y - grad f(x)||`` for the given directions.

    Parameters
    ----------
    directions : ndarray, shape (N, d)
        Unit directions used by the estimator.
    delta : float
        Smoothing radius.
    grad_bound : float
        Bound on ``||grad f||`` over the points where the estimate is used.
    third_bound : float
        Bound on ``|D^3 f(x)[u, u, u]|`` for unit ``u`` over the segments
        ``[x - delta u, x + delta u]``.
    """
    if grad_bound is None:
        return np.inf
    N, d = directions.shape
    D = (d / N) * directions.T @ directions
    sampling = np.linalg.norm(D - np.eye(d), 2) * grad_bound
    finite_diff = d * delta ** 2 * third_bound / 6.0
    return float(sampling + finite_diff)


def bandit_gradient(value, x, delta, n_evals, rng=None, *, directions=None,
                    grad_bound=None, third_bound=0.0, in_domain=None):
    """
    Multi-point bandit gradient estimate of ``value`` at ``x``.

    Either ``rng`` or pre-drawn ``directions`` must be supplied. Returns
    ``(estimate, e_y)``; ``e_y`` is ``inf`` when no gradient bound is given.
    ``in_domain`` is an optional predicate on evaluation points; a failing
    point raises :class:`DomainViolation`.
    """
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if n_evals < 2:
        raise ValueError(f"at least two evaluations are needed, got {n_evals}")
    x = np.asarray(x, dtype=float)
    d = x.size
    if directions is None:
        if rng is None:
            raise ValueError("need a generator or pre-drawn directions")
        directions = sphere_directions(rng, n_evals // 2, d)
    N = directions.shape[0]
    est = np.zeros(d)
    for u in directions:
        xp, xm = x + delta * u, x - delta * u
        if in_domain is not None and not (in_domain(xp) and in_domain(xm)):
            raise DomainViolation(f"bandit evaluation point outside the function domain (delta={delta})")
        est += (value(xp) - value(xm)) / (2.0 * delta) * u
    est *= d / N
    return est, certified_error(directions, delta, grad_bound, third_bound)
