"""
Running (inexact) Krasnosel'skii-Mann iteration and its tracking guarantees.

Indexing convention: one map application per time step,
``x_{t+1} = F_hat_t(x_t)`` for ``t = 1..T``, so a run of horizon ``T``
stores iterates ``x_1..x_{T+1}``. Arrays are 0-based: ``iterates[t - 1]``
is ``x_t`` and per-step quantities ``q[t - 1]`` belong to step ``t``.

The residual bound (sum of weighted squared residuals against the initial
distance plus accumulated error/drift terms) and the tracking bound (the
unrolled contraction recursion) are evaluated pathwise from the constants
recorded during the run, so every run carries its own certificate.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DomainViolation
from .operators import Contraction, as_point

LEDGER_RTOL = 1e-7


# ---------------------------------------------------------------------------
# sequences and runs

class OperatorSequence:
    """
    Time-indexed maps ``F_1..F_T`` plus optional per-step constants.

    Each entry is an :class:`~runkm.operators.AveragedMap` or an
    :class:`~runkm.operators.InexactAveragedMap`. ``terminal`` is the exact
    map ``F_{T+1}``; it is never applied but pins down ``x*_{T+1}`` and thus
    the last drift ``sigma_T``. ``M`` optionally fixes the image bounds
    instead of measuring them along the run.
    """

    def __init__(self, maps, terminal=None, M=None):
        self.maps = list(maps)
        if not self.maps:
            raise ValueError("empty operator sequence")
        self.terminal = terminal
        self.M = None if M is None else np.broadcast_to(np.asarray(M, float), (len(self.maps),)).copy()
        self.validate()

    @classmethod
    def constant(cls, F, horizon):
        return cls([F] * horizon, terminal=getattr(F, "exact", F))

    def __len__(self):
        return len(self.maps)

    def __getitem__(self, i):
        return self.maps[i]

    def __iter__(self):
        return iter(self.maps)

    def at(self, t):
        """Map of time step ``t`` (1-based)."""
        return self.maps[t - 1]

    @property
    def alphas(self):
        return np.array([F.alpha for F in self.maps])

    @property
    def error_bounds(self):
        return np.array([F.error_bound for F in self.maps])

    @property
    def lipschitz(self):
        return np.array([F.lipschitz for F in self.maps])

    def validate(self):
        a, L, e = self.alphas, self.lipschitz, self.error_bounds
        if np.any((a <= 0) | (a >= 1)):
            raise ValueError("every alpha_t must lie in (0, 1)")
        if np.any((L < 0) | (L > 1)):
            raise ValueError("every Lipschitz modulus L_t must lie in [0, 1]")
        if np.any(~np.isfinite(e)) or np.any(e < 0):
            raise ValueError("every error bound e_T,t must be finite and non-negative")
        if self.M is not None and np.any(~np.isfinite(self.M)):
            raise ValueError("every image bound M_t must be finite")


@dataclass
class TrackingRun:
    """Everything recorded along one run of the running KM iteration."""

    iterates: np.ndarray            # (T+1, m): x_1..x_{T+1}
    residual_F: np.ndarray          # (T,): ||x_t - F_t(x_t)||
    residual_T: np.ndarray          # (T,): ||x_t - T_t(x_t)||
    alpha: np.ndarray               # (T,)
    e_T: np.ndarray                 # (T,) certified ||T_t - T_hat_t||
    L: np.ndarray                   # (T,) Lipschitz modulus of F_t
    M: np.ndarray                   # (T,) image bounds
    deviation: np.ndarray           # (T,) measured ||T_hat_t(x_t) - T_t(x_t)||, nan if unknown
    fixed_points: np.ndarray = None  # (T+1, m): x*_1..x*_{T+1}
    sigma: np.ndarray = None        # (T,): ||x*_{t+1} - x*_t||
    tracking_error: np.ndarray = None  # (T+1,): ||x_t - x*_t||
    exact_residuals: bool = True
    fixed_point_residual: float = 0.0  # max_t ||x*_t - F_t(x*_t)||
    meta: dict = field(default_factory=dict)

    @property
    def horizon(self):
        return self.residual_F.size

    @property
    def initial_distance(self):
        if self.tracking_error is None:
            raise ValueError("run has no fixed points; the bound ledger needs x*_1")
        return float(self.tracking_error[0])


def drift_sequence(fixed_points):
    """``sigma_t = ||x*_{t+1} - x*_t||`` for consecutive fixed points."""
    P = np.asarray(fixed_points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if P.shape[0] < 2:
        raise ValueError("need at least two fixed points")
    return np.linalg.norm(np.diff(P, axis=0), axis=1)


def fixed_point_oracle(F, x0, tol=1e-11, max_iter=1_000_000):
    """
    Fixed point of ``F`` by batch iteration, to residual ``||x - F(x)|| <= tol``.

    Contractions are iterated directly (Banach-Picard); other averaged maps
    run the KM iteration with relaxation 1/2 on their base map,
    ``x <- (x + T(x)) / 2``.
    """
    x = as_point(x0, F.dim).copy()
    picard = isinstance(F.op_class, Contraction)
    res = np.inf
    for k in range(max_iter + 1):
        Fx = F(x)
        res = float(np.linalg.norm(x - Fx))
        if res <= tol:
            return x
        if k == max_iter:
            break
        x = Fx if picard else x + (Fx - x) / (2.0 * F.alpha)
    raise ConvergenceError("fixed-point oracle hit max_iter", res, max_iter)


def run_inexact_km(seq, x1, *, fixed_points=None, fixed_point_tol=1e-11,
                   fixed_point_max_iter=1_000_000, domain_tol=1e-8):
    """
    Run ``x_{t+1} = (1 - alpha_t) x_t + alpha_t T_hat_t(x_t)`` over the sequence.

    Residuals are measured against the exact map when it is attached and
    against the approximate one otherwise. Fixed points are taken from
    ``fixed_points`` (``T`` or ``T + 1`` points) or computed with
    :func:`fixed_point_oracle`, warm-started from the previous one.

    Raises
    ------
    DomainViolation
        If an iterate is outside the declared domain of the map applied to it.
    """
    T = len(seq)
    x = as_point(x1).copy()
    m = x.size
    X = np.empty((T + 1, m))
    X[0] = x
    res_F, res_T, dev = np.empty(T), np.empty(T), np.full(T, np.nan)
    norm_F, norm_Fhat = np.empty(T), np.empty(T)
    exact_all = True
    for t in range(T):
        step = seq[t]
        if step.domain is not None and not step.domain.contains(x, tol=domain_tol):
            raise DomainViolation(f"iterate x_{t + 1} is outside the domain of F_{t + 1} ({step.name})",
                                  step=t + 1)
        x_next = step(x)
        exact = step.exact
        a = step.alpha
        if exact is None:
            exact_all = False
            Fx = x_next
            Tx = (x_next - (1.0 - a) * x) / a
        else:
            Fx = x_next if exact is step else exact(x)
            Tx = exact.base_from(x, Fx)
            dev[t] = 0.0 if exact is step else np.linalg.norm(x_next - Fx) / a
        res_F[t] = np.linalg.norm(x - Fx)
        res_T[t] = np.linalg.norm(x - Tx)
        norm_F[t] = np.linalg.norm(Fx)
        norm_Fhat[t] = np.linalg.norm(x_next)
        X[t + 1] = x = x_next

    run = TrackingRun(iterates=X, residual_F=res_F, residual_T=res_T,
                      alpha=seq.alphas, e_T=seq.error_bounds, L=seq.lipschitz,
                      M=np.empty(T), deviation=dev, exact_residuals=exact_all)

    P = _fixed_points(seq, fixed_points, exact_all, fixed_point_tol, fixed_point_max_iter, X[0])
    if P is not None:
        run.fixed_points = P
        run.sigma = drift_sequence(P)
        run.tracking_error = np.linalg.norm(X - P, axis=1)
        if exact_all:
            maps = [F.exact for F in seq] + ([seq.terminal] if seq.terminal is not None else [])
            run.fixed_point_residual = max(float(np.linalg.norm(p - F(p))) for p, F in zip(P, maps))
    if seq.M is not None:
        run.M = seq.M.copy()
    else:
        bound = np.maximum(norm_F, norm_Fhat)
        if P is not None:
            bound = np.maximum(bound, np.linalg.norm(P[:-1], axis=1))
        run.M = 1.1 * bound
    return run


def _fixed_points(seq, given, exact_all, tol, max_iter, x1):
    T = len(seq)
    if given is not None:
        P = np.asarray(given, dtype=float)
        if P.ndim == 1:
            P = P[:, None]
        if P.shape[0] == T:
            P = np.vstack([P, P[-1]])
        if P.shape[0] != T + 1:
            raise ValueError(f"expected {T} or {T + 1} fixed points, got {P.shape[0]}")
        return P
    if not exact_all:
        return None
    pts = []
    guess = x1
    for F in seq:
        guess = fixed_point_oracle(F.exact, guess, tol, max_iter)
        pts.append(guess)
    if seq.terminal is not None:
        pts.append(fixed_point_oracle(seq.terminal, guess, tol, max_iter))
    else:
        pts.append(pts[-1])
    return np.array(pts)


# ---------------------------------------------------------------------------
# bound ledgers

def _exceeds(lhs, rhs, scale, rtol=LEDGER_RTOL, atol=0.0):
    """Elementwise ``lhs > rhs`` beyond a relative (and absolute) allowance."""
    return lhs - rhs > rtol * np.maximum(scale, 1e-300) + atol


def distance_floor(run):
    """
    Absolute accuracy of the measured distances ``||x_t - x*_t||``.

    Rounding contributes ``64 eps`` times the size of the iterates; fixed
    points that are only approximate (residual ``rho``) add ``rho / (1 - L)``
    for contractive sequences and ``rho`` otherwise.
    """
    eps = np.finfo(float).eps
    scale = max(1.0, float(np.max(np.abs(run.iterates))) * np.sqrt(run.iterates.shape[1]))
    if run.fixed_points is not None:
        scale = max(scale, float(np.max(np.linalg.norm(run.fixed_points, axis=1))))
    rho = run.fixed_point_residual
    L = float(run.L.max())
    return 64 * eps * scale + (rho / (1.0 - L) if L < 1.0 else rho)


@dataclass
class ResidualBounds:
    """Evaluated residual bounds (non-expansive / averaged setting)."""

    r: np.ndarray               # per-step r_t
    lhs_terms: np.ndarray       # alpha_t (1 - alpha_t) ||x_t - T_t x_t||^2
    cum_lhs: np.ndarray
    cum_rhs: np.ndarray
    initial_sq_distance: float
    r_sup: float                # r built from the supremal constants
    weighted_mean: float        # mean of lhs_terms (same for the F-form)
    mean_rhs: float             # ||x_1 - x*_1||^2 / T + r_sup
    mean_sq_residual_T: float
    mean_sq_residual_F: float
    alpha_check: float          # inf_t alpha_t (1 - alpha_t)
    alpha_bar: float            # inf_t (1 - alpha_t) / alpha_t
    mean_residual_T_bound: float
    mean_residual_F_bound: float
    asymptotic_bound: float     # r_sup / alpha_bar
    descent_slack: np.ndarray   # per-step rhs - lhs of the one-step inequality
    ok_cumulative: bool
    ok_mean: bool
    ok_descent: bool
    first_violation: int = None  # 1-based step of the first cumulative violation

    @property
    def satisfied(self):
        return self.ok_cumulative and self.ok_mean and self.ok_descent

    @property
    def slack(self):
        return float(self.cum_rhs[-1] - self.cum_lhs[-1])

    @property
    def relative_slack(self):
        return self.slack / max(abs(self.cum_rhs[-1]), 1e-300)


def theorem1_ledger(run):
    """
    Residual bounds for a run.

    ``r_t = alpha_t e_t (4 M_t + alpha_t e_t) + sigma_t (4 M_t + sigma_t)`` and,
    for every prefix ``T'``,
    ``sum_{t<=T'} alpha_t (1-alpha_t) ||x_t - T_t x_t||^2 <= ||x_1 - x*_1||^2 + sum_{t<=T'} r_t``.
    Mean forms use ``r`` built from the supremal constants.
    """
    if run.tracking_error is None or run.sigma is None:
        raise ValueError("the residual ledger needs fixed points (x*_1 and the drift sequence)")
    a, e, M, s = run.alpha, run.e_T, run.M, run.sigma
    T = run.horizon
    d0sq = run.initial_distance ** 2
    r = a * e * (4 * M + a * e) + s * (4 * M + s)
    lhs_terms = a * (1 - a) * run.residual_T ** 2
    cum_lhs = np.cumsum(lhs_terms)
    cum_rhs = d0sq + np.cumsum(r)
    bad = _exceeds(cum_lhs, cum_rhs, np.maximum(cum_lhs, cum_rhs))
    first = int(np.argmax(bad)) + 1 if bad.any() else None

    a_sup, e_sup, M_sup, s_sup = a.max(), e.max(), M.max(), s.max()
    r_sup = float(a_sup * e_sup * (4 * M_sup + a_sup * e_sup) + s_sup * (4 * M_sup + s_sup))
    mean_rhs = d0sq / T + r_sup
    weighted_T = float(cum_lhs[-1] / T)
    weighted_F = float(np.mean((1 - a) / a * run.residual_F ** 2))
    alpha_check = float(np.min(a * (1 - a)))
    alpha_bar = float(np.min((1 - a) / a))
    msq_T = float(np.mean(run.residual_T ** 2))
    msq_F = float(np.mean(run.residual_F ** 2))
    bound_T = mean_rhs / alpha_check
    bound_F = mean_rhs / alpha_bar
    ok_mean = not any(_exceeds(np.array([weighted_T, weighted_F, msq_T, msq_F]),
                               np.array([mean_rhs, mean_rhs, bound_T, bound_F]),
                               np.array([mean_rhs, mean_rhs, bound_T, bound_F])))

    d = run.tracking_error
    descent_rhs = d[:-1] ** 2 - d[1:] ** 2 + r
    descent_slack = descent_rhs - lhs_terms
    scale = np.maximum.reduce([d[:-1] ** 2, d[1:] ** 2, lhs_terms, r])
    h = distance_floor(run)
    atol = 2 * h * (2 * float(d.max()) + h)
    ok_descent = not _exceeds(lhs_terms, descent_rhs, scale, atol=atol).any()

    return ResidualBounds(r=r, lhs_terms=lhs_terms, cum_lhs=cum_lhs, cum_rhs=cum_rhs,
                          initial_sq_distance=d0sq, r_sup=r_sup,
                          weighted_mean=max(weighted_T, weighted_F), mean_rhs=mean_rhs,
                          mean_sq_residual_T=msq_T, mean_sq_residual_F=msq_F,
                          alpha_check=alpha_check, alpha_bar=alpha_bar,
                          mean_residual_T_bound=bound_T, mean_residual_F_bound=bound_F,
                          asymptotic_bound=r_sup / alpha_bar, descent_slack=descent_slack,
                          ok_cumulative=not bad.any(), ok_mean=ok_mean, ok_descent=ok_descent,
                          first_violation=first)


def contraction_coefficient(L, t, tau):
    """``c^(t, tau)``: product of ``L_{tau+1}..L_t`` (1 when ``tau == t``); ``L`` is 1-based."""
    if not 0 <= tau <= t:
        raise ValueError("need 0 <= tau <= t")
    L = np.asarray(L, dtype=float)
    return float(np.prod(L[tau:t]))


@dataclass
class TrackingBounds:
    """Evaluated tracking bounds (contractive setting)."""

    bound: np.ndarray          # (T,): bound on ||x_{t+1} - x*_{t+1}||, t = 1..T
    measured: np.ndarray       # (T,): ||x_{t+1} - x*_{t+1}||
    recursion_slack: np.ndarray  # (T,): L_t d_t + a_t e_t + s_t - d_{t+1}
    L_sup: float
    gamma: float = None        # sup(alpha) sup(e) + sup(sigma), contractive case only
    ball: float = None         # gamma / (1 - L_sup)
    ok_per_step: bool = True
    ok_recursion: bool = True
    first_violation: int = None

    @property
    def satisfied(self):
        return self.ok_per_step and self.ok_recursion

    @property
    def min_slack(self):
        return float(np.min(self.bound - self.measured))


def theorem2_ledger(run):
    """
    Per-step tracking bound
    ``||x_{t+1} - x*_{t+1}|| <= c^(t,0) ||x_1 - x*_1|| + sum_tau c^(t,tau) (alpha_tau e_tau + sigma_tau)``,
    the one-step recursion behind it, and the asymptotic ball
    ``gamma / (1 - L)`` when ``L = sup L_t < 1``.
    """
    if run.tracking_error is None or run.sigma is None:
        raise ValueError("the tracking ledger needs fixed points")
    a, e, s, L = run.alpha, run.e_T, run.sigma, run.L
    d = run.tracking_error
    T = run.horizon
    bound = np.empty(T)
    b = d[0]
    for t in range(T):
        b = L[t] * b + a[t] * e[t] + s[t]
        bound[t] = b
    measured = d[1:]
    rec_rhs = L * d[:-1] + a * e + s
    h = distance_floor(run)
    per_bad = _exceeds(measured, bound, np.maximum(measured, bound), atol=2 * h)
    rec_bad = _exceeds(measured, rec_rhs, np.maximum(measured, rec_rhs), atol=2 * h)
    bad = per_bad | rec_bad
    L_sup = float(L.max())
    out = TrackingBounds(bound=bound, measured=measured, recursion_slack=rec_rhs - measured,
                         L_sup=L_sup, ok_per_step=not per_bad.any(), ok_recursion=not rec_bad.any(),
                         first_violation=int(np.argmax(bad)) + 1 if bad.any() else None)
    if L_sup < 1.0:
        out.gamma = float(a.max() * e.max() + s.max())
        out.ball = out.gamma / (1.0 - L_sup)
    return out


@dataclass
class BoundLedger:
    """Both ledgers for one run."""

    residual: ResidualBounds
    tracking: TrackingBounds

    @property
    def satisfied(self):
        return self.residual.satisfied and self.tracking.satisfied

    def violations(self):
        """List of ``(bound name, first violating step)`` pairs."""
        out = []
        R, K = self.residual, self.tracking
        if not R.ok_cumulative:
            out.append(("residual_cumulative", R.first_violation))
        if not R.ok_descent:
            out.append(("residual_descent", int(np.argmin(R.descent_slack)) + 1))
        if not R.ok_mean:
            out.append(("residual_mean", len(R.r)))
        if not K.satisfied:
            out.append(("tracking", K.first_violation))
        return out


def bound_ledger(run):
    return BoundLedger(theorem1_ledger(run), theorem2_ledger(run))


# ---------------------------------------------------------------------------
# vanishing errors / drift

@dataclass
class CorollaryReport:
    prefixes: np.ndarray
    mean_error: np.ndarray       # (sum_{t<=p} e_t) / p over dyadic prefixes
    mean_drift: np.ndarray       # (sum_{t<=p} sigma_t) / p
    errors_vanish: bool
    drift_vanishes: bool
    mean_sq_residual_T: float
    mean_sq_residual_F: float
    bound_T: float               # sigma (4M + sigma) / inf alpha(1-alpha)
    bound_F: float               # sigma (4M + sigma) / inf (1-alpha)/alpha
    terminal_residual_T: float
    terminal_residual_F: float
    terminal_tracking_error: float
    tracking_ball: float = None  # sigma / (1 - L) for contractive runs

    @property
    def residual_bounds_hold(self):
        return self.mean_sq_residual_T <= self.bound_T and self.mean_sq_residual_F <= self.bound_F


def _decays(means):
    if np.all(means == 0):
        return True
    tail = means[-3:]
    non_increasing = np.all(np.diff(tail) <= 1e-12 * max(tail.max(), 1e-300))
    return bool(non_increasing and means[-1] <= 0.5 * means[:-1].max())


def corollary_checks(run):
    """
    Empirical check of the vanishing-error and vanishing-drift regimes.

    Reports prefix means of the error bounds and drifts over dyadic
    prefixes, whether each decays, the mean squared residuals against
    ``sigma (4M + sigma)`` scaled by ``1 / inf alpha(1-alpha)`` and
    ``1 / inf (1-alpha)/alpha``, and, for contractive runs, the terminal
    tracking error against ``sigma / (1 - L)``.
    """
    T = run.horizon
    if T < 10:
        raise ValueError("corollary checks need a horizon of at least 10 steps")
    if run.sigma is None:
        raise ValueError("corollary checks need fixed points")
    prefixes = 2 ** np.arange(int(np.log2(T)) + 1)
    if prefixes[-1] != T:
        prefixes = np.append(prefixes, T)
    ce, cs = np.cumsum(run.e_T), np.cumsum(run.sigma)
    mean_e = ce[prefixes - 1] / prefixes
    mean_s = cs[prefixes - 1] / prefixes
    a = run.alpha
    sigma, M = float(run.sigma.max()), float(run.M.max())
    base = sigma * (4 * M + sigma)
    rep = CorollaryReport(
        prefixes=prefixes, mean_error=mean_e, mean_drift=mean_s,
        errors_vanish=_decays(mean_e), drift_vanishes=_decays(mean_s),
        mean_sq_residual_T=float(np.mean(run.residual_T ** 2)),
        mean_sq_residual_F=float(np.mean(run.residual_F ** 2)),
        bound_T=base / float(np.min(a * (1 - a))),
        bound_F=base / float(np.min((1 - a) / a)),
        terminal_residual_T=float(run.residual_T[-1]),
        terminal_residual_F=float(run.residual_F[-1]),
        terminal_tracking_error=float(run.tracking_error[-1]))
    L = float(run.L.max())
    if L < 1.0:
        rep.tracking_ball = sigma / (1.0 - L)
    return rep
