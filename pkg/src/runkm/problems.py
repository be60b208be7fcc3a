"""
Time-varying convex problems written as (inexact) averaged operators.

A gradient step ``I - nu grad f`` with ``nu in (0, 2/K)`` is
``nu K / 2``-averaged with base ``I - (2/K) grad f``. Projected gradient and
forward-backward steps ``prox(x - nu y)`` compose that step with a
1/2-averaged proximal map and are ``1 / (2 - nu K / 2)``-averaged. A gradient
estimate ``y`` within ``e_y`` of the true gradient perturbs the base map by at
most ``(2 nu - nu^2 K / 2) e_y``.
"""

import numpy as np

from .bandit import bandit_gradient, certified_error, sphere_directions
from .errors import ConvergenceError, UncertifiedOracle
from .operators import (AveragedMap, Contraction, InexactAveragedMap, InexactOracle,
                        NonExpansive, as_point)
from .rng import step_rng
from .sets import Box, FullSpace
from .tracker import OperatorSequence


# ---------------------------------------------------------------------------
# smooth part

class SmoothConvexFunction:
    """
    Convex function with ``K``-Lipschitz gradient.

    Parameters
    ----------
    value, gradient : callable
    K : float
        Smoothness constant (Lipschitz constant of the gradient), ``> 0``.
    k : float
        Strong convexity constant; 0 for merely convex functions.
    """

    def __init__(self, value, gradient, K, k=0.0, dim=None, name=None):
        if K <= 0:
            raise ValueError(f"smoothness constant must be positive, got {K}")
        if not 0 <= k <= K:
            raise ValueError(f"need 0 <= k <= K, got k={k}, K={K}")
        self._value = value
        self._gradient = gradient
        self.K = float(K)
        self.k = float(k)
        self.dim = dim
        self.name = name or "f"

    def value(self, x):
        return float(self._value(np.asarray(x, dtype=float)))

    def gradient(self, x):
        return np.asarray(self._gradient(np.asarray(x, dtype=float)), dtype=float)


class Quadratic(SmoothConvexFunction):
    """``f(x) = 1/2 (x - c)^T Q (x - c)`` with ``Q`` symmetric positive semidefinite."""

    def __init__(self, Q, center, name=None):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        Q = 0.5 * (Q + Q.T)
        eig = np.linalg.eigvalsh(Q)
        if eig[0] < -1e-12 * max(1.0, eig[-1]):
            raise ValueError("Q must be positive semidefinite")
        self.Q = Q
        self.center = as_point(center, Q.shape[0])
        super().__init__(self._val, self._grad, K=float(eig[-1]), k=float(max(eig[0], 0.0)),
                         dim=Q.shape[0], name=name or "quadratic")

    def _val(self, x):
        d = x - self.center
        return 0.5 * d @ self.Q @ d

    def _grad(self, x):
        return self.Q @ (x - self.center)


def check_smoothness(f, points, rng=None):
    """
    Sample check of the declared constants.

    Returns ``(max gradient Lipschitz ratio, min strong-monotonicity ratio)``
    over consecutive pairs of ``points``; the first should not exceed ``f.K``
    and the second should not fall below ``f.k``.
    """
    pts = [np.asarray(p, dtype=float) for p in points]
    lip, mono = 0.0, np.inf
    for x, y in zip(pts[:-1], pts[1:]):
        d = x - y
        nd = d @ d
        if nd == 0:
            continue
        g = f.gradient(x) - f.gradient(y)
        lip = max(lip, np.linalg.norm(g) / np.sqrt(nd))
        mono = min(mono, (g @ d) / nd)
    return lip, mono


# ---------------------------------------------------------------------------
# nonsmooth part

class ZeroFunction:
    name = "zero"

    def value(self, x):
        return 0.0

    def prox(self, y, nu):
        return np.array(y, dtype=float)


class L1Norm:
    """``g(x) = weight * ||x||_1``."""

    def __init__(self, weight=1.0):
        self.weight = float(weight)
        self.name = f"{self.weight:g}*l1"

    def value(self, x):
        return self.weight * float(np.sum(np.abs(x)))

    def prox(self, y, nu):
        y = np.asarray(y, dtype=float)
        return np.sign(y) * np.maximum(np.abs(y) - nu * self.weight, 0.0)


class SquaredNorm:
    """``g(x) = weight / 2 * ||x||^2``."""

    def __init__(self, weight=1.0):
        self.weight = float(weight)
        self.name = f"{self.weight:g}/2*sq"

    def value(self, x):
        return 0.5 * self.weight * float(np.dot(x, x))

    def prox(self, y, nu):
        return np.asarray(y, dtype=float) / (1.0 + nu * self.weight)


class ConvexFunction:
    """
    User-supplied convex term for :func:`prox`.

    Supply ``prox(y, nu)`` when it is known in closed form, otherwise a
    ``gradient`` with Lipschitz constant ``smoothness``.
    """

    def __init__(self, value, prox=None, gradient=None, smoothness=None, name="g"):
        if prox is None and (gradient is None or smoothness is None):
            raise ValueError("need a prox, or a gradient with its Lipschitz constant")
        self._value = value
        self._prox = prox
        self._gradient = gradient
        self.smoothness = smoothness
        self.name = name

    def value(self, x):
        return float(self._value(np.asarray(x, dtype=float)))

    @property
    def has_prox(self):
        return self._prox is not None

    def prox(self, y, nu):
        if self._prox is None:
            raise NotImplementedError
        return np.asarray(self._prox(np.asarray(y, dtype=float), nu), dtype=float)

    def gradient(self, x):
        return np.asarray(self._gradient(np.asarray(x, dtype=float)), dtype=float)


def prox(g, X, nu, y, tol=1e-10, max_iter=100_000):
    """
    ``argmin_{x in X} g(x) + ||x - y||^2 / (2 nu)``.

    Closed forms are used for the zero function, the l1 norm and the squared
    norm (alone, or on a box where the problem separates). Otherwise a
    prox-friendly ``g`` is combined with the projection onto ``X`` through
    the Dykstra-like proximal splitting, and a smooth ``g`` is handled by
    projected gradient on the strongly convex objective.

    Raises
    ------
    ConvergenceError
        When the inner solver does not reach ``tol`` within ``max_iter``.
    """
    if nu <= 0:
        raise ValueError(f"nu must be positive, got {nu}")
    y = np.asarray(y, dtype=float)
    full = X is None or isinstance(X, FullSpace)
    if g is None or isinstance(g, ZeroFunction):
        return y.copy() if full else X.project(y)
    closed = isinstance(g, (L1Norm, SquaredNorm)) or getattr(g, "has_prox", False)
    if full and closed:
        return g.prox(y, nu)
    if isinstance(X, Box) and isinstance(g, (L1Norm, SquaredNorm)):
        return np.clip(g.prox(y, nu), X.lo, X.hi)
    if closed:
        return _dykstra_prox(g, X, nu, y, tol, max_iter)
    return _projected_gradient_prox(g, X, nu, y, tol, max_iter)


def _dykstra_prox(g, X, nu, y, tol, max_iter):
    x = y.copy()
    p = np.zeros_like(y)
    q = np.zeros_like(y)
    for k in range(1, max_iter + 1):
        z = g.prox(x + p, nu)
        p = x + p - z
        x_new = X.project(z + q)
        q = z + q - x_new
        scale = max(1.0, np.linalg.norm(x_new))
        done = np.linalg.norm(x_new - x) <= tol * scale and np.linalg.norm(x_new - z) <= tol * scale
        x = x_new
        if done:
            return x
    raise ConvergenceError("proximal splitting did not converge", float(np.linalg.norm(x - z)), max_iter)


def _projected_gradient_prox(g, X, nu, y, tol, max_iter):
    step = 1.0 / (g.smoothness + 1.0 / nu)
    x = y.copy() if X is None else X.project(y)
    for k in range(1, max_iter + 1):
        grad = g.gradient(x) + (x - y) / nu
        x_new = x - step * grad
        if X is not None:
            x_new = X.project(x_new)
        moved = np.linalg.norm(x_new - x)
        x = x_new
        if moved <= tol * max(1.0, np.linalg.norm(x)):
            return x
    raise ConvergenceError("projected-gradient prox did not converge", float(moved), max_iter)


# ---------------------------------------------------------------------------
# gradient oracles

class ExactGradient:
    """Returns the true gradient; certified error 0."""

    def at_step(self, f, t):
        return f.gradient, 0.0


class NoisyGradient:
    """
    True gradient plus a bounded perturbation held fixed within each step.

    The perturbation of step ``t`` is drawn from the counter-based stream
    ``(seed, t)``; its norm is ``e_y`` when ``exact_magnitude`` is set and
    uniform in ``[0, e_y]`` otherwise.
    """

    def __init__(self, e_y, seed=0, exact_magnitude=False):
        if e_y < 0 or not np.isfinite(e_y):
            raise ValueError(f"noise level must be finite and non-negative, got {e_y}")
        self.e_y = float(e_y)
        self.seed = seed
        self.exact_magnitude = exact_magnitude

    def noise(self, dim, t):
        rng = step_rng(self.seed, t)
        u = sphere_directions(rng, 1, dim)[0]
        mag = self.e_y if self.exact_magnitude else self.e_y * rng.uniform()
        return mag * u

    def at_step(self, f, t):
        n = self.noise(f.dim, t)

        def grad(x):
            return f.gradient(x) + n

        return grad, self.e_y


class BanditGradient:
    """
    Zeroth-order estimate from ``n_evals`` function values per query.

    Directions are frozen per step so the resulting map is deterministic
    within a step. The function must expose ``gradient_bound`` (and
    ``third_derivative_bound`` for non-quadratic functions) for the error to
    be certified.
    """

    def __init__(self, delta, n_evals, seed=0):
        if delta <= 0 or n_evals < 2:
            raise ValueError("need delta > 0 and n_evals >= 2")
        self.delta = float(delta)
        self.n_evals = int(n_evals)
        self.seed = seed

    def at_step(self, f, t):
        G = getattr(f, "gradient_bound", None)
        C3 = getattr(f, "third_derivative_bound", 0.0)
        dirs = sphere_directions(step_rng(self.seed, t), self.n_evals // 2, f.dim)
        e_y = certified_error(dirs, self.delta, G, C3)

        def grad(x):
            return bandit_gradient(f.value, x, self.delta, self.n_evals, directions=dirs,
                                   grad_bound=G, third_bound=C3)[0]

        return grad, e_y


# ---------------------------------------------------------------------------
# operators

def _check_step(f, nu):
    if not 0 < nu < 2.0 / f.K:
        raise ValueError(f"step nu={nu} outside (0, 2/K) = (0, {2.0 / f.K:.6g}); the map is not averaged")


def gradient_modulus(nu, K, k):
    """Lipschitz modulus ``max(|1 - nu k|, |1 - nu K|)`` of ``I - nu grad f``."""
    return max(abs(1.0 - nu * k), abs(1.0 - nu * K))


def gradient_modulus_min(nu, K, k):
    """The ``min`` variant of :func:`gradient_modulus`, kept for comparison only."""
    return min(abs(1.0 - nu * k), abs(1.0 - nu * K))


def _op_class(f, nu):
    L = gradient_modulus(nu, f.K, f.k)
    return Contraction(L) if f.k > 0 and L < 1.0 else NonExpansive()


def gradient_step_averaged(f, nu):
    """
    ``I - nu grad f`` as an averaged map with ``alpha = nu K / 2`` and
    base ``T = I - (2 / K) grad f``.
    """
    _check_step(f, nu)
    K = f.K

    def base(x):
        return x - (2.0 / K) * f.gradient(x)

    return AveragedMap(nu * K / 2.0, base, op_class=_op_class(f, nu), dim=f.dim,
                       name=f"gradient step on {f.name}")


def error_transfer_unconstrained(e_y, K):
    """Base-map error ``2 e_y / K`` of an unconstrained gradient step."""
    if e_y < 0 or K <= 0:
        raise ValueError("need e_y >= 0 and K > 0")
    return 2.0 * e_y / K


def error_transfer(e_y, nu, K):
    """Base-map error ``(2 nu - nu^2 K / 2) e_y`` of a projected / forward-backward step."""
    return (2.0 * nu - nu * nu * K / 2.0) * e_y


def forward_backward_alpha(nu, K):
    return 1.0 / (2.0 - nu * K / 2.0)


def forward_backward_operator(f, g, X, nu, oracle=None, t=1, domain=None, name=None):
    """
    Step ``x -> prox_{g, X, nu}(x - nu y)`` with ``y`` from ``oracle``.

    Returns an :class:`AveragedMap` for exact gradients and an
    :class:`InexactAveragedMap` (with the exact map attached) otherwise.
    ``alpha = 1 / (2 - nu K / 2)``; the certified base-map error is
    ``(2 nu - nu^2 K / 2) e_y``. ``domain`` is the set the iterate may
    occupy when the map is applied (the whole space when ``None``); it is
    not ``X`` in general, since the iterate comes from the previous step's
    feasible set.
    """
    _check_step(f, nu)
    X = X if X is not None else FullSpace(f.dim)
    alpha = forward_backward_alpha(nu, f.K)
    op_class = _op_class(f, nu)
    name = name or ("projected gradient" if g is None or isinstance(g, ZeroFunction) else "forward-backward")

    def step(x):
        return prox(g, X, nu, x - nu * f.gradient(x))

    exact = AveragedMap(alpha, direct=step, domain=domain, op_class=op_class, dim=f.dim, name=name)
    if oracle is None or isinstance(oracle, ExactGradient):
        return exact

    grad_hat, e_y = oracle.at_step(f, t)
    if not np.isfinite(e_y):
        raise UncertifiedOracle(f"{type(oracle).__name__} provides no finite error bound")

    def step_hat(x):
        return prox(g, X, nu, x - nu * grad_hat(x))

    def base(x):
        return ((alpha - 1.0) / alpha) * x + step(x) / alpha

    def base_hat(x):
        return -((1.0 - alpha) / alpha) * x + step_hat(x) / alpha

    orc = InexactOracle(base_hat, error_transfer(e_y, nu, f.K), exact=base, domain=domain,
                        name=f"inexact {name}")
    return InexactAveragedMap(alpha, orc, exact=exact, direct=step_hat, domain=domain,
                              op_class=op_class, dim=f.dim, name=f"inexact {name}")


def projected_gradient_operator(f, X, nu, oracle=None, t=1, domain=None):
    """``x -> proj_X(x - nu y)``; see :func:`forward_backward_operator`."""
    return forward_backward_operator(f, None, X, nu, oracle, t, domain)


def averaged_form(F, x):
    """Evaluate ``(1 - alpha) x + alpha T(x)`` through the base map explicitly."""
    x = as_point(x)
    return (1.0 - F.alpha) * x + F.alpha * F.base_at(x)


# ---------------------------------------------------------------------------
# time-varying problems

class TimeVaryingProblem:
    """
    Sequence ``f_1..f_{T+1}`` (smooth), optional nonsmooth ``g`` and sets.

    The last function only defines the terminal fixed point. ``fixed_points``
    holds closed-form minimizers when they are known.
    """

    def __init__(self, functions, sets=None, g=None, fixed_points=None, domain=None, name=None):
        self.functions = list(functions)
        if len(self.functions) < 2:
            raise ValueError("need at least one step plus the terminal function")
        if sets is None or not isinstance(sets, (list, tuple)):
            sets = [sets] * len(self.functions)
        self.sets = list(sets)
        self.g = g
        self.fixed_points = None if fixed_points is None else np.asarray(fixed_points, float)
        self.domain = domain
        self.name = name or "time-varying problem"

    @property
    def horizon(self):
        return len(self.functions) - 1

    @property
    def dim(self):
        return self.functions[0].dim

    def operators(self, nu, oracle=None):
        """:class:`OperatorSequence` of forward-backward steps for every time step."""
        maps = [forward_backward_operator(f, self.g, X, nu, oracle, t=t + 1, domain=self.domain)
                for t, (f, X) in enumerate(zip(self.functions[:-1], self.sets[:-1]))]
        terminal = forward_backward_operator(self.functions[-1], self.g, self.sets[-1], nu,
                                             domain=self.domain)
        return OperatorSequence(maps, terminal=terminal)


def random_spd(m, K, k, rng):
    """Symmetric matrix with spectrum in ``[k, K]`` hitting both ends."""
    if m == 1:
        return np.array([[K]])
    A = rng.standard_normal((m, m))
    U, R = np.linalg.qr(A)
    U = U * np.sign(np.diag(R))
    spec = np.concatenate([[k, K], rng.uniform(k, K, m - 2)])
    return (U * spec) @ U.T


def quadratic_tracking_problem(centers, Q, constraint=None, g=None, name=None):
    """Quadratics ``1/2 (x - c_t)^T Q (x - c_t)`` for the given center path."""
    C = np.atleast_2d(np.asarray(centers, dtype=float))
    if C.shape[0] == 1 and np.ndim(centers) == 1:
        C = C.T
    fs = [Quadratic(Q, c, name=f"f_{t + 1}") for t, c in enumerate(C)]
    unconstrained = (constraint is None or isinstance(constraint, FullSpace)) and g is None
    k = fs[0].k
    fp = C if unconstrained and k > 0 else None
    return TimeVaryingProblem(fs, sets=constraint, g=g, fixed_points=fp,
                              name=name or "quadratic tracking")


def make_drifting_quadratic(m, drift, K, k, T, seed=0, center0=None, constraint=None, g=None):
    """
    ``f_t(x) = 1/2 (x - c_t)^T Q (x - c_t)`` with ``c_{t+1} = c_t + drift``.

    ``Q`` is a random orthogonal conjugation of a spectrum in ``[k, K]``
    (both ends attained). Produces ``T + 1`` functions; without constraint
    and nonsmooth term the fixed points are the centers, so the drift is
    ``||drift||`` at every step.
    """
    if not 0 < k <= K:
        raise ValueError(f"need 0 < k <= K, got k={k}, K={K}")
    rng = np.random.default_rng(seed)
    Q = random_spd(m, K, k, rng)
    drift = np.broadcast_to(np.asarray(drift, dtype=float), (m,))
    c0 = np.zeros(m) if center0 is None else as_point(center0, m)
    centers = c0 + np.arange(T + 1)[:, None] * drift
    prob = quadratic_tracking_problem(centers, Q, constraint, g, name="drifting quadratic")
    prob.Q = Q
    return prob
