"""
With a single exact map the cumulative bound collapses to the classical
``||x_1 - x*||^2 / (T lambda (1 - lambda))`` rate for the mean squared residual.
"""

import numpy as np

from runkm import Box, Quadratic, projected_gradient_operator, run_inexact_km, theorem1_ledger
from runkm.problems import random_spd
from runkm.tracker import OperatorSequence

rng = np.random.default_rng(0)
f = Quadratic(random_spd(3, 2.0, 0.0, rng), 2 * rng.standard_normal(3))
F = projected_gradient_operator(f, Box(-np.ones(3), np.ones(3)), 0.6)
x1 = np.array([1.0, -1.0, 0.5])
for T in (10, 100, 1000):
    run = run_inexact_km(OperatorSequence.constant(F, T), x1, fixed_point_tol=1e-13,
                         fixed_point_max_iter=10 ** 6)
    R = theorem1_ledger(run)
    print(f"T={T:5d}  mean ||x - T x||^2 = {R.mean_sq_residual_T:.3e}  bound = {R.mean_residual_T_bound:.3e}")
