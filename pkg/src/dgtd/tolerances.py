"""Numerical tolerances shared by constructors, oracles and tests."""

ROW_SUM = 1e-12
STATIONARY_RESIDUAL = 1e-10
RANK_RATIO = 1e-10
CONNECTIVITY = 1e-10
PROJECTION = 1e-10
BELLMAN_RESIDUAL = 1e-10
LINEAR_SOLVE = 1e-8
KKT = 1e-8
DIVERGENCE_BOUND = 1e12
