"""Numerical tolerances shared by the solvers, checks and audits."""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    feasibility: float = 1e-9
    fixed_point: float = 1e-8
    audit: float = 1e-7
    solve: float = 1e-9
    probability: float = 1e-12


DEFAULT = Tolerances()


def projection_accuracy(t: int, floor: float = 1e-12) -> float:
    """Accuracy target for the t-th approximate projection, t^(-5/2) floored."""
    return max(float(t) ** -2.5, floor)
