"""Constraint-conditioned quiet locomotion at desk scale: a surrogate
impact-walker environment, PID-Lagrangian PPO with decomposed critics,
Pareto trade-off evaluation, SPL audio analysis, and a live steering service.
"""

__version__ = "0.1.0"
