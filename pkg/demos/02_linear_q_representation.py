"""
Q-functions that are linear in p(z | x, a)
==========================================

For an L-decodable POMDP, Q^pi_h(x, a) - r(o_h, a) is an inner product between
the next-state distribution given the window and a per-step weight vector.
We check this by brute force, then recover the same Q-values by least-squares
policy evaluation on exhaustive data.
"""

import numpy as np

from lvrep_pomdp.latent import exact_latent_model
from lvrep_pomdp.linear_value import (backward_lspe, exhaustive_lrollouts, full_q,
                                      verify_linear_representability)
from lvrep_pomdp.pomdp import (WindowPolicy, WindowSpace, exact_value_iteration, gridmask, lock,
                               window_q_values)

pomdp = lock(L=2, code_length=3)
space = WindowSpace(pomdp.n_obs, pomdp.n_actions, 2)
policy = WindowPolicy.random_stochastic(space, pomdp.horizon, seed=0)

exact = exact_value_iteration(pomdp, policy)
print(f"v^pi = {exact.value:.4f}")
for h in range(pomdp.horizon):
    rep = verify_linear_representability(pomdp, policy, 2, h, exact=exact)
    print(f"step {h}: {rep.n_points:2d} (window, action) pairs, max residual {rep.max_residual:.1e}")

# With the next hidden state as the latent, the fit is only exact when the
# continuation value is a function of that state. In GRIDMASK the policy at
# step 1 reads a window that still contains o_0 and a_0, so two histories that
# share s_1 can continue differently and a residual remains at step 0.
g = gridmask()
gsp = WindowSpace(g.n_obs, g.n_actions, 2)
gpol = WindowPolicy.random_stochastic(gsp, g.horizon, seed=0)
print("GRIDMASK residuals:",
      [f"{verify_linear_representability(g, gpol, 2, h).max_residual:.3f}" for h in range(g.horizon)])

# LSPE with exact features and every segment weighted by its probability
# reproduces the exact window Q-values.
model = exact_latent_model(pomdp, 2)
weights = backward_lspe(exhaustive_lrollouts(pomdp, policy, 2), model, pomdp.reward, 2, ridge=1e-10)
errors = [abs(full_q(model, pomdp.reward, weights[h], x, a) - q)
          for (h, x, a), q in window_q_values(exact, 2).items()]
print(f"LSPE vs exact Q: max error {max(errors):.1e}")
