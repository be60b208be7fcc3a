"""
Closed convex sets and Euclidean projections onto them.

Box, ball, simplex and single halfspaces are projected in closed form.
Intersections are handled by Dykstra's alternating projections, and
polyhedra given by linear (in)equalities by an exact dense QP solve.
"""

import numpy as np

from .errors import ConvergenceError, EmptySetError


class FeasibleSet:
    """Base class; subclasses implement :meth:`project`."""

    dim = None

    def project(self, y):
        raise NotImplementedError

    def contains(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        return bool(np.linalg.norm(self.project(x) - x) <= tol * max(1.0, np.linalg.norm(x)))

    def __and__(self, other):
        return Intersection([self, other])


class FullSpace(FeasibleSet):
    """The whole of ``R^m``."""

    def __init__(self, dim=None):
        self.dim = dim

    def __repr__(self):
        return "FullSpace()"

    def project(self, y):
        return np.array(y, dtype=float)

    def contains(self, x, tol=0.0):
        return bool(np.all(np.isfinite(x)))


class Box(FeasibleSet):
    """``{x : lo <= x <= hi}``; bounds may be infinite."""

    def __init__(self, lo, hi):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        if np.any(self.lo > self.hi):
            raise EmptySetError("box with lo > hi")
        self.dim = self.lo.size if self.lo.ndim else None

    def __repr__(self):
        return f"Box(lo={self.lo}, hi={self.hi})"

    def project(self, y):
        return np.clip(np.asarray(y, dtype=float), self.lo, self.hi)


class Ball(FeasibleSet):
    """Euclidean ball ``{x : ||x - center|| <= radius}``."""

    def __init__(self, center, radius):
        if radius < 0:
            raise EmptySetError("ball with negative radius")
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        self.dim = self.center.size

    def __repr__(self):
        return f"Ball(center={self.center}, radius={self.radius})"

    def project(self, y):
        y = np.asarray(y, dtype=float)
        d = y - self.center
        n = np.linalg.norm(d)
        if n <= self.radius:
            return y.copy()
        return self.center + d * (self.radius / n)


def project_simplex(y, scale=1.0):
    """Projection onto ``{x >= 0, sum(x) = scale}`` by sorting."""
    y = np.asarray(y, dtype=float)
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - scale
    k = np.arange(1, y.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    tau = css[rho] / (rho + 1)
    return np.maximum(y - tau, 0.0)


class Simplex(FeasibleSet):
    """Scaled probability simplex ``{x >= 0, sum(x) = scale}``."""

    def __init__(self, scale=1.0, dim=None):
        if scale <= 0:
            raise EmptySetError("simplex needs a positive scale")
        self.scale = float(scale)
        self.dim = dim

    def __repr__(self):
        return f"Simplex(scale={self.scale})"

    def project(self, y):
        return project_simplex(y, self.scale)


class Halfspace(FeasibleSet):
    """``{x : a^T x <= b}``."""

    def __init__(self, a, b):
        self.a = np.asarray(a, dtype=float)
        self.b = float(b)
        nrm = float(self.a @ self.a)
        if nrm == 0.0:
            if self.b < 0:
                raise EmptySetError("halfspace 0^T x <= b with b < 0")
        self._nrm2 = nrm
        self.dim = self.a.size

    def __repr__(self):
        return f"Halfspace(a={self.a}, b={self.b})"

    def project(self, y):
        y = np.asarray(y, dtype=float)
        if self._nrm2 == 0.0:
            return y.copy()
        excess = self.a @ y - self.b
        if excess <= 0:
            return y.copy()
        return y - (excess / self._nrm2) * self.a


class Affine(FeasibleSet):
    """Affine subspace ``{x : A x = b}`` (projection through a pseudo-inverse)."""

    def __init__(self, A, b):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.b = np.asarray(b, dtype=float)
        self._pinv = np.linalg.pinv(self.A)
        x0 = self._pinv @ self.b
        if np.linalg.norm(self.A @ x0 - self.b) > 1e-9 * max(1.0, np.linalg.norm(self.b)):
            raise EmptySetError("inconsistent linear equalities")
        self.dim = self.A.shape[1]

    def project(self, y):
        y = np.asarray(y, dtype=float)
        return y - self._pinv @ (self.A @ y - self.b)


def dykstra(sets, y, tol=1e-10, max_sweeps=10_000):
    """
    Dykstra's algorithm for the projection onto an intersection.

    Stops when one full sweep moves the iterate by less than
    ``tol * max(1, ||x||)`` and every set is satisfied to the same
    tolerance. Raises :class:`EmptySetError` when the sweeps stall at a
    point that is still far from one of the sets, and
    :class:`ConvergenceError` when the cap is hit otherwise.
    """
    x = np.array(y, dtype=float)
    incr = [np.zeros_like(x) for _ in sets]
    for sweep in range(1, max_sweeps + 1):
        x_old = x
        for i, S in enumerate(sets):
            z = S.project(x + incr[i])
            incr[i] = x + incr[i] - z
            x = z
        scale = max(1.0, np.linalg.norm(x))
        if np.linalg.norm(x - x_old) <= tol * scale:
            gap = max(np.linalg.norm(S.project(x) - x) for S in sets)
            if gap <= 10 * tol * scale:
                return x
    gap = max(np.linalg.norm(S.project(x) - x) for S in sets)
    if gap > 1e-6 * max(1.0, np.linalg.norm(x)):
        raise EmptySetError(f"intersection appears empty: feasibility gap {gap:.3e} "
                            f"after {max_sweeps} Dykstra sweeps")
    raise ConvergenceError("Dykstra projection did not converge", gap, max_sweeps)


class Intersection(FeasibleSet):
    """Intersection of closed convex sets, projected with Dykstra's algorithm."""

    def __init__(self, sets, tol=1e-10, max_sweeps=10_000):
        flat = []
        for S in sets:
            flat.extend(S.sets if isinstance(S, Intersection) else [S])
        if not flat:
            raise ValueError("empty list of sets")
        self.sets = flat
        self.tol = tol
        self.max_sweeps = max_sweeps
        dims = {S.dim for S in flat if S.dim is not None}
        self.dim = dims.pop() if len(dims) == 1 else None

    def __repr__(self):
        return f"Intersection({self.sets})"

    def project(self, y):
        return dykstra(self.sets, y, self.tol, self.max_sweeps)

    def contains(self, x, tol=1e-9):
        return all(S.contains(x, tol) for S in self.sets)


class HalfspaceIntersection(Intersection):
    """Polyhedron ``{x : a_i^T x <= b_i}`` given as a list of halfspaces."""

    def __init__(self, halfspaces, tol=1e-10, max_sweeps=10_000):
        super().__init__(list(halfspaces), tol, max_sweeps)


class Polyhedron(FeasibleSet):
    """
    ``{x : A_eq x = b_eq, A_ub x <= b_ub}`` projected by an exact QP solve.

    Uses the Goldfarb-Idnani dual active-set method from ``quadprog``;
    dependent equality rows are removed at construction.
    """

    def __init__(self, A_eq=None, b_eq=None, A_ub=None, b_ub=None, dim=None):
        mats = [M for M in (A_eq, A_ub) if M is not None]
        if dim is None:
            if not mats:
                raise ValueError("polyhedron needs constraints or an explicit dim")
            dim = np.atleast_2d(mats[0]).shape[1]
        self.dim = dim
        if A_eq is not None:
            A_eq, b_eq = _independent_rows(np.atleast_2d(np.asarray(A_eq, float)),
                                           np.asarray(b_eq, float))
        else:
            A_eq, b_eq = np.zeros((0, dim)), np.zeros(0)
        if A_ub is not None:
            A_ub, b_ub = np.atleast_2d(np.asarray(A_ub, float)), np.asarray(b_ub, float)
        else:
            A_ub, b_ub = np.zeros((0, dim)), np.zeros(0)
        self.A_eq, self.b_eq, self.A_ub, self.b_ub = A_eq, b_eq, A_ub, b_ub
        # quadprog convention: C^T x >= b, equalities first
        self._C = np.vstack([A_eq, -A_ub]).T.copy()
        self._b = np.concatenate([b_eq, -b_ub])
        self._meq = A_eq.shape[0]
        self._G = np.eye(dim)

    def __repr__(self):
        return f"Polyhedron(dim={self.dim}, n_eq={self._meq}, n_ub={self.A_ub.shape[0]})"

    def project(self, y):
        from quadprog import solve_qp

        y = np.asarray(y, dtype=float)
        if self._C.shape[1] == 0:
            return y.copy()
        try:
            x = solve_qp(self._G, y, self._C, self._b, self._meq)[0]
        except ValueError as err:
            raise EmptySetError(f"polyhedron projection failed: {err}") from err
        return x

    def violation(self, x):
        """Largest constraint violation at ``x``."""
        x = np.asarray(x, dtype=float)
        v = 0.0
        if self.A_eq.size:
            v = max(v, float(np.max(np.abs(self.A_eq @ x - self.b_eq))))
        if self.A_ub.size:
            v = max(v, float(np.max(self.A_ub @ x - self.b_ub)))
        return v

    def contains(self, x, tol=1e-9):
        return self.violation(x) <= tol * max(1.0, float(np.linalg.norm(x)))


def _independent_rows(A, b, rtol=1e-10):
    q, r, piv = _qr_pivot(A.T)
    diag = np.abs(np.diag(r)) if r.size else np.zeros(0)
    rank = int(np.sum(diag > rtol * (diag[0] if diag.size else 1.0)))
    keep = np.sort(piv[:rank])
    A_red, b_red = A[keep], b[keep]
    # the dropped rows must be implied by the kept ones
    if rank < A.shape[0]:
        x0 = np.linalg.lstsq(A_red, b_red, rcond=None)[0]
        if np.linalg.norm(A @ x0 - b) > 1e-9 * max(1.0, np.linalg.norm(b)):
            raise EmptySetError("inconsistent linear equalities")
    return A_red, b_red


def _qr_pivot(M):
    from scipy.linalg import qr

    return qr(M, mode="economic", pivoting=True)


def project(X, y):
    """Euclidean projection of ``y`` onto the set ``X``."""
    return X.project(y)
