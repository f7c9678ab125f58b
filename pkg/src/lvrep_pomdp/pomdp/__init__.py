"""Tabular POMDPs, exact belief filtering, windows, simulation and brute-force oracles."""

from .fixtures import flip, gridmask, lock, make_fixture
from .io import dump_policy, dump_pomdp, load_policy, load_pomdp
from .model import (TabularPomdp, belief_init, belief_update, belief_update_batch, obs_prob,
                    obs_prob_batch)
from .oracle import (ExactValues, HistoryNode, build_history_tree, decodability_gap,
                     decodability_gaps, exact_value_iteration, window_beliefs, window_q_values)
from .simulate import EpisodeBatch, Trajectory, monte_carlo_value, sample_episode, sample_episodes
from .windows import (PAD, Window, WindowPolicy, WindowSpace, initial_window, window_from_history,
                      window_shift, windows_of_trajectory)
