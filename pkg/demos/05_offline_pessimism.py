"""
Offline learning with a pessimistic penalty
===========================================

With a fixed dataset, subtract the bonus instead of adding it. Pairs with no
data get the largest penalty, so the planner stays on covered actions, and the
planned value tends to under-estimate the true return.
"""

from lvrep_pomdp.agent import (AgentConfig, collect_offline_datasets, evaluate_policy,
                               optimal_window_policy, run_offline)
from lvrep_pomdp.pomdp import WindowPolicy, WindowSpace, flip

pomdp = flip(1.0, horizon=2)
space = WindowSpace(2, 2, 1)

for name, behaviour, n in (("uniform data", WindowPolicy.uniform(space, 2), 1000),
                           ("optimal data", optimal_window_policy(pomdp, 1).policy, 5000)):
    ds = collect_offline_datasets(pomdp, behaviour, 1, n, seed=0)
    res = run_offline(ds, pomdp.reward, AgentConfig(L=1, m=2), space)
    mean, se = evaluate_policy(pomdp, res.policy, 10_000, seed=1)
    print(f"{name}: planned {res.pessimistic_value:.3f}, true {mean:.3f} +- {se:.3f}")
