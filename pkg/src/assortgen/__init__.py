"""Degree-preserving graph ensembles under assortativity constraints.

Two samplers over the configuration space of a fixed degree sequence:

- a Metropolis-Hastings chain whose stationary distribution softly constrains
  assortativity through a conjugate parameter (canonical ensemble), and
- a policy- or greedy-guided rewiring engine that drives every sample into a
  hard tolerance window around the target (microcanonical ensemble),

plus generators, structural metrics, PPO training for the policy, and an
experiment CLI that exports plot-ready CSV/JSON.
"""

__version__ = "0.1.0"

from .graph import Graph, from_edge_list, randomize_configuration  # noqa: F401
from .generators import ModelSpec, generate, spec_for_mean_degree  # noqa: F401
from .metrics import assortativity, clustering, feasible_range, k_sum  # noqa: F401
from .rewire import DegreeSequenceContext, RewiringAction  # noqa: F401
