"""Scenario-based robust design optimization toolkit.

Computes risk-averse and risk-agnostic optimal designs from datasets of
(possibly perturbed) uncertainty scenarios and evaluates their reliability
and robustness by Monte Carlo analysis.
"""

__version__ = "0.1.0"
