"""
Time-varying network utility maximization.

Two traffic flows share a 6-node, 8-link directed network. The decision
vector stacks the flow rates and the per-flow link rates,

    x = (z_1, z_2, r^1_1..r^1_8, r^2_1..r^2_8),

and each step minimizes ``-sum_s kappa_s log(1 + z_s) + a_t^T (r^1 + r^2)``
subject to flow conservation ``B r^s = z_s (e_src - e_dst)``, non-negativity,
and ``r^1 + r^2 <= c_t - w_t`` per link, where ``c_t = log2(1 + p h)`` is the
link capacity and ``w_t`` the exogenous (uncontrollable) load.

Links (1-based node labels)::

    index  0    1    2    3    4    5    6    7
    link   1-2  2-3  1-5  5-3  4-5  5-6  3-4  6-1

Flow 1 (1 -> 3) can use path A = 1-2-3 or path B = 1-5-3; flow 2 (4 -> 6)
uses path C = 4-5-6. The three paths are link-disjoint, so the optimum
separates per flow and follows from water-filling along the cheapest paths.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .bandit import certified_error, sphere_directions, bandit_gradient
from .errors import DomainViolation, EmptySetError
from .operators import AveragedMap, InexactAveragedMap, InexactOracle, NonExpansive
from .problems import error_transfer, forward_backward_alpha
from .rng import step_rng
from .sets import Box, Polyhedron
from .tracker import OperatorSequence, drift_sequence

N_NODES = 6
LINKS = ((1, 2), (2, 3), (1, 5), (5, 3), (4, 5), (5, 6), (3, 4), (6, 1))
FLOWS = ((1, 3), (4, 6))
PATHS = (((0, 1), (2, 3)), ((4, 5),))   # link indices per candidate path, per flow
W_MEAN = np.array([0.2, 0.3, 0.3, 0.4, 0.5, 0.2, 0.1, 0.4])
KAPPA = np.array([3.2, 2.6])
COST = np.array([0.30, 0.30, 0.65, 0.63, 0.45, 0.45, 0.50, 0.50])


@dataclass(frozen=True)
class Network:
    """Topology, routing matrix and flow endpoints."""

    n_nodes: int
    links: tuple
    flows: tuple
    paths: tuple
    routing: np.ndarray = field(repr=False)   # (n_nodes, n_links), +1 at tail, -1 at head

    @property
    def n_links(self):
        return len(self.links)

    @property
    def n_flows(self):
        return len(self.flows)

    @property
    def dim(self):
        return self.n_flows * (1 + self.n_links)

    def demand(self, s):
        """Node vector ``e_src - e_dst`` of flow ``s``."""
        b = np.zeros(self.n_nodes)
        src, dst = self.flows[s]
        b[src - 1], b[dst - 1] = 1.0, -1.0
        return b

    def split(self, x):
        """``(z, r)`` with ``r`` of shape ``(n_flows, n_links)``."""
        x = np.asarray(x, dtype=float)
        return x[:self.n_flows], x[self.n_flows:].reshape(self.n_flows, self.n_links)

    def stack(self, z, r):
        return np.concatenate([np.asarray(z, float), np.asarray(r, float).ravel()])

    def net_flow(self, r):
        """Net outflow per node for each flow, shape ``(n_flows, n_nodes)``."""
        return np.asarray(r, float) @ self.routing.T

    def link_load(self, r):
        return np.asarray(r, float).sum(axis=0)

    def path_rates_to_links(self, rates):
        """Link rates ``(n_flows, n_links)`` from per-flow lists of path rates."""
        r = np.zeros((self.n_flows, self.n_links))
        for s, (paths, pr) in enumerate(zip(self.paths, rates)):
            for path, q in zip(paths, pr):
                r[s, list(path)] += q
        return r


def build_network():
    """The fixed 6-node, 8-link network with flows 1 -> 3 and 4 -> 6."""
    R = np.zeros((N_NODES, len(LINKS)))
    for j, (i, k) in enumerate(LINKS):
        R[i - 1, j] = 1.0
        R[k - 1, j] = -1.0
    net = Network(N_NODES, LINKS, FLOWS, PATHS, R)
    for s, paths in enumerate(PATHS):
        for path in paths:
            r = np.zeros((net.n_flows, net.n_links))
            r[s, list(path)] = 1.0
            if not np.allclose(net.net_flow(r)[s], net.demand(s)):
                raise AssertionError(f"path {path} does not connect flow {s + 1}")
    return net


# ---------------------------------------------------------------------------
# random variation

@dataclass(frozen=True)
class VariationConfig:
    """
    Variances of the per-step random draws and bandit settings.

    ``cost_var`` is the variance of the log of the multiplicative cost
    perturbation. ``n_evals = 0`` selects exact gradients.
    """

    v_c: float = 0.0
    v_p: float = 0.0
    v_w: float = 0.0
    cost_var: float = 0.0
    delta: float = 0.05
    n_evals: int = 0
    seed: int = 0

    def __post_init__(self):
        for name in ("v_c", "v_p", "v_w", "cost_var"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.delta <= 0:
            raise ValueError("bandit radius must be positive")
        if self.n_evals and self.n_evals < 2:
            raise ValueError("bandit estimation needs at least 2 evaluations")

    @classmethod
    def scaled(cls, scale, **kw):
        """All four variances equal to ``scale``."""
        return cls(v_c=scale, v_p=scale, v_w=scale, cost_var=scale, **kw)


@dataclass(frozen=True)
class LinkState:
    gain: np.ndarray
    power: np.ndarray

    @property
    def capacity(self):
        return np.log2(1.0 + self.power * self.gain)


@dataclass(frozen=True)
class TrafficState:
    load: np.ndarray       # exogenous load per link
    cost: np.ndarray       # a_t, per link
    kappa: np.ndarray


def _standard_draws(seed, t, n_links, n_nodes):
    rng = step_rng(seed, t)
    return {"g": rng.standard_normal((2, n_links)), "p": rng.standard_normal(n_nodes),
            "w": rng.standard_normal(n_links), "a": rng.standard_normal(n_links)}


def sample_timestep(net, cfg, t, kappa=KAPPA, cost=COST, w_mean=W_MEAN):
    """
    Link and traffic state of step ``t``.

    The channel coefficient is ``(1 + sqrt(v_c) xi_1) + j (1 + sqrt(v_c) xi_2)``
    with gain ``h = |g|^2``; the power of each node is ``N(1, v_p)``, shared by
    its outgoing links; loads are ``N(w_mean, v_w)``; costs are multiplied by
    ``exp(sqrt(cost_var) xi - cost_var / 2)``. Powers and loads are clamped at
    zero. Draws come from the stream ``(cfg.seed, t)`` and are scaled by the
    standard deviations, so configurations differing only in variances share
    the underlying random numbers.
    """
    n = _standard_draws(cfg.seed, t, net.n_links, net.n_nodes)
    g = 1.0 + np.sqrt(cfg.v_c) * n["g"]
    gain = g[0] ** 2 + g[1] ** 2
    node_power = np.maximum(1.0 + np.sqrt(cfg.v_p) * n["p"], 0.0)
    power = node_power[[i - 1 for i, _ in net.links]]
    load = np.maximum(w_mean + np.sqrt(cfg.v_w) * n["w"], 0.0)
    a = cost * np.exp(np.sqrt(cfg.cost_var) * n["a"] - cfg.cost_var / 2.0)
    return LinkState(gain, power), TrafficState(load, a, np.asarray(kappa, float))


# ---------------------------------------------------------------------------
# per-step problem

class NetworkUtility:
    """
    ``f(x) = -sum_s kappa_s log(1 + z_s) + a^T sum_s r^s``.

    The gradient is ``kappa``-Lipschitz on ``z >= 0``, so ``K = max kappa``.
    ``gradient_bound`` and ``third_derivative_bound`` certify bandit
    estimates of the utility part.
    """

    def __init__(self, net, traffic, delta=0.0):
        self.net = net
        self.kappa = np.asarray(traffic.kappa, float)
        self.cost = np.asarray(traffic.cost, float)
        self.K = float(np.max(self.kappa))
        self.k = 0.0
        self.dim = net.dim
        self.name = "network utility"
        self.gradient_bound = float(np.linalg.norm(self.kappa))
        self.third_derivative_bound = 2.0 * self.K / (1.0 - delta) ** 3 if delta < 1 else np.inf

    def utility(self, z):
        """``-sum_s kappa_s log(1 + z_s)``; needs ``z > -1``."""
        z = np.asarray(z, float)
        if np.any(z <= -1.0):
            raise DomainViolation("log utility evaluated at a rate <= -1")
        return float(-np.sum(self.kappa * np.log1p(z)))

    def utility_gradient(self, z):
        z = np.asarray(z, float)
        if np.any(z <= -1.0):
            raise DomainViolation("log utility evaluated at a rate <= -1")
        return -self.kappa / (1.0 + z)

    def value(self, x):
        z, r = self.net.split(x)
        return self.utility(z) + float(self.cost @ r.sum(axis=0))

    def gradient(self, x):
        z, _ = self.net.split(x)
        return np.concatenate([self.utility_gradient(z), np.tile(self.cost, self.net.n_flows)])


def utility_gradient(z, kappa, cost, n_flows=2):
    """Gradient ``(-kappa / (1 + z), a, ..., a)`` of the per-step objective."""
    z = np.asarray(z, float)
    if np.any(z <= -1.0):
        raise DomainViolation("log utility evaluated at a rate <= -1")
    return np.concatenate([-np.asarray(kappa, float) / (1.0 + z), np.tile(cost, n_flows)])


def feasible_set(net, links, traffic):
    """
    Polyhedron of step ``t``.

    Raises
    ------
    EmptySetError
        When some link's capacity is below its exogenous load.
    """
    spare = links.capacity - traffic.load
    bad = np.nonzero(spare < 0)[0]
    if bad.size:
        j = bad[0]
        i, k = net.links[j]
        raise EmptySetError(f"link {i}->{k} (index {j}) infeasible: capacity "
                            f"{links.capacity[j]:.4g} below exogenous load {traffic.load[j]:.4g}")
    S, L, d = net.n_flows, net.n_links, net.dim
    A_eq = np.zeros((S * net.n_nodes, d))
    for s in range(S):
        rows = slice(s * net.n_nodes, (s + 1) * net.n_nodes)
        A_eq[rows, S + s * L:S + (s + 1) * L] = net.routing
        A_eq[rows, s] = -net.demand(s)
    A_ub = np.vstack([-np.eye(d), np.hstack([np.zeros((L, S)), np.tile(np.eye(L), S)])])
    b_ub = np.concatenate([np.zeros(d), spare])
    P = Polyhedron(A_eq, np.zeros(S * net.n_nodes), A_ub, b_ub)
    P.spare = spare
    return P


def optimal_point(net, links, traffic):
    """
    Closed-form minimizer by water-filling along the cheapest paths.

    For each flow the paths are filled in order of cost; the flow rate is the
    point where the marginal utility ``kappa / (1 + z)`` meets the marginal
    path cost, or a capacity breakpoint.
    """
    spare = links.capacity - traffic.load
    z = np.zeros(net.n_flows)
    rates = []
    for s, paths in enumerate(net.paths):
        costs = np.array([traffic.cost[list(p)].sum() for p in paths])
        caps = np.array([spare[list(p)].min() for p in paths])
        order = np.argsort(costs, kind="stable")
        kap = traffic.kappa[s]
        filled, zs = 0.0, None
        for j in order:
            target = kap / costs[j] - 1.0
            if target <= filled:
                zs = filled
                break
            if target <= filled + caps[j]:
                zs = target
                break
            filled += caps[j]
        z[s] = filled if zs is None else zs
        pr = np.zeros(len(paths))
        left = z[s]
        for j in order:
            pr[j] = min(left, caps[j])
            left -= pr[j]
        rates.append(pr)
    return net.stack(z, net.path_rates_to_links(rates))


class NetworkScenario:
    """
    Sequence of network problems driven by :class:`VariationConfig`.

    Parameters
    ----------
    cfg : VariationConfig
    horizon : int
        Number of steps ``T``; ``T + 1`` problem snapshots are drawn.
    nu : float, optional
        Step size; defaults to ``1.8 / K``.
    """

    def __init__(self, cfg, horizon, nu=None, kappa=KAPPA, cost=COST, w_mean=W_MEAN):
        self.cfg = cfg
        self.horizon = int(horizon)
        self.net = build_network()
        self.kappa = np.asarray(kappa, float)
        self.K = float(np.max(self.kappa))
        self.nu = 1.8 / self.K if nu is None else float(nu)
        if not 0 < self.nu < 2.0 / self.K:
            raise ValueError(f"step nu={self.nu} outside (0, 2/K) = (0, {2.0 / self.K:.6g})")
        self.states = [sample_timestep(self.net, cfg, t, kappa, cost, w_mean)
                       for t in range(1, self.horizon + 2)]
        self._sets = [None] * len(self.states)
        self._opt = None

    def feasible_set(self, t):
        """``X_t`` for ``t = 1..T+1``."""
        if self._sets[t - 1] is None:
            self._sets[t - 1] = feasible_set(self.net, *self.states[t - 1])
        return self._sets[t - 1]

    def function(self, t):
        return NetworkUtility(self.net, self.states[t - 1][1], self.cfg.delta)

    @property
    def fixed_points(self):
        """Closed-form minimizers ``x*_1..x*_{T+1}``."""
        if self._opt is None:
            self._opt = np.array([optimal_point(self.net, *st) for st in self.states])
        return self._opt

    def drift(self):
        return drift_sequence(self.fixed_points)

    def relative_variation(self):
        """``max_t ||x*_{t+1} - x*_t|| / ||x*_t||``."""
        P = self.fixed_points
        return float(np.max(self.drift() / np.linalg.norm(P[:-1], axis=1)))

    def operator(self, t, exact=False):
        """Projected-gradient map of step ``t`` (bandit-estimated unless ``exact``)."""
        f = self.function(t)
        X = self.feasible_set(t)
        nu = self.nu
        alpha = forward_backward_alpha(nu, f.K)
        domain = Box(np.zeros(f.dim), np.full(f.dim, np.inf))

        def step(x):
            return X.project(x - nu * f.gradient(x))

        F = AveragedMap(alpha, direct=step, domain=domain, op_class=NonExpansive(),
                        dim=f.dim, name=f"network step {t}")
        if exact or not self.cfg.n_evals:
            return F
        S = self.net.n_flows
        dirs = sphere_directions(step_rng(self.cfg.seed, t, 1), self.cfg.n_evals // 2, S)
        e_y = certified_error(dirs, self.cfg.delta, f.gradient_bound, f.third_derivative_bound)

        def grad_hat(x):
            z, _ = self.net.split(x)
            gz = bandit_gradient(f.utility, z, self.cfg.delta, self.cfg.n_evals, directions=dirs,
                                 in_domain=lambda v: bool(np.all(v > -1.0)))[0]
            return np.concatenate([gz, np.tile(f.cost, S)])

        def step_hat(x):
            return X.project(x - nu * grad_hat(x))

        def base(x):
            return ((alpha - 1.0) / alpha) * x + step(x) / alpha

        def base_hat(x):
            return ((alpha - 1.0) / alpha) * x + step_hat(x) / alpha

        orc = InexactOracle(base_hat, error_transfer(e_y, nu, f.K), exact=base, domain=domain,
                            name=f"bandit network step {t}")
        return InexactAveragedMap(alpha, orc, exact=F, direct=step_hat, domain=domain,
                                  op_class=NonExpansive(), dim=f.dim, name=orc.name)

    def operators(self, exact=False):
        maps = [self.operator(t, exact) for t in range(1, self.horizon + 1)]
        return OperatorSequence(maps, terminal=self.operator(self.horizon + 1, exact=True))


# ---------------------------------------------------------------------------
# variance presets

def calibrate_scale(target_sigma, horizon=1000, seed=0, lo=0.0, hi=0.05, rtol=0.01,
                    max_iter=60, **kw):
    """
    Variance scale ``s`` (all variances equal to ``s``) whose sup drift
    ``max_t ||x*_{t+1} - x*_t||`` over ``horizon`` steps matches ``target_sigma``.

    Bisection on ``s``; draws are shared across trial scales so the sup drift
    is monotone in practice. Scales that make some step infeasible count as
    too large.
    """
    def sup_drift(s):
        try:
            sc = NetworkScenario(VariationConfig.scaled(s, seed=seed), horizon, **kw)
            return float(np.max(sc.drift()))
        except EmptySetError:
            return np.inf

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        val = sup_drift(mid)
        if abs(val - target_sigma) <= rtol * target_sigma:
            return mid
        if val > target_sigma:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


# Scales found with :func:`calibrate_scale` at horizon 1000, seed 0.
PRESETS = {
    0.03: 1.8596649169921875e-06,
    0.7: 0.0011718750000000002,
}


def preset(sigma, **kw):
    """:class:`VariationConfig` for one of the calibrated drift levels."""
    if sigma not in PRESETS:
        raise KeyError(f"no preset for sigma={sigma}; available: {sorted(PRESETS)}")
    return VariationConfig.scaled(PRESETS[sigma], **kw)


def with_bandit(cfg, n_evals, delta=None):
    return replace(cfg, n_evals=int(n_evals), delta=cfg.delta if delta is None else delta)
