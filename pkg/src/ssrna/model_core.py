"""Deterministic two-strand replication model: parameters, equilibria, diagnostics.

The state is a pair (p, m) of genomic and antigenomic RNA concentrations.
Antigenomic templates amplify genomic strands at rate r, genomic strands
amplify antigenomic ones at rate alpha*r, both throttled by the shared
cellular carrying capacity K; each strand degrades linearly (delta, sigma).
alpha interpolates between stamping-machine-like replication (alpha -> 0)
and purely geometric replication (alpha = 1).

Units are consistent but unnamed: rates are 1/time, K is a molecule count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

from .errors import ParameterError

__all__ = [
    "State",
    "ModelParams",
    "EquilibriumKind",
    "Equilibrium",
    "validate_params",
    "basic_reproduction_number",
    "origin_equilibrium",
    "positive_equilibrium",
    "mixed_sign_equilibrium",
    "vector_field",
    "divergence",
]

# Relative tolerance below which the mixed-sign equilibrium is treated as
# singular (its coordinates diverge when R0 approaches r/delta).
SINGULARITY_RTOL = 1e-12


class State(NamedTuple):
    """Instantaneous strand concentrations."""

    p: float  # genomic
    m: float  # antigenomic


@dataclass(frozen=True)
class ModelParams:
    """Replication rates and capacity of the within-cell model.

    Use :func:`validate_params` to construct checked instances.  The inverse
    capacity ``b`` is always derived from K and can never be set on its own.
    """

    r: float      # genomic amplification rate (1/time)
    alpha: float  # antigenomic rate fraction, in (0, 1]
    delta: float  # genomic degradation rate (1/time)
    sigma: float  # antigenomic degradation rate (1/time)
    K: float      # cellular carrying capacity (molecules)

    @property
    def b(self) -> float:
        """Inverse carrying capacity 1/K."""
        return 1.0 / self.K


class EquilibriumKind(Enum):
    ORIGIN = "origin"
    POSITIVE = "positive"
    MIXED_SIGN = "mixed_sign"


@dataclass(frozen=True)
class Equilibrium:
    """A classified fixed point of the deterministic model.

    ``exists`` records admissibility: the coexistence point requires R0 > 1,
    the mixed-sign point is singular at R0 = r/delta.  Inadmissible points
    still carry their formal coordinates, which are useful for understanding
    the global phase portrait.
    """

    kind: EquilibriumKind
    p_star: float
    m_star: float
    exists: bool

    @property
    def state(self) -> State:
        return State(self.p_star, self.m_star)


def _positive_finite(name: str, value: float) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise ParameterError(f"{name} must be a number, got {value!r}") from None
    if not math.isfinite(v) or v <= 0.0:
        raise ParameterError(f"{name} must be a positive finite number, got {value!r}")
    return v


def validate_params(r: float, alpha: float, delta: float, sigma: float, K: float) -> ModelParams:
    """Check the five raw rates and return a ModelParams with b derived as 1/K.

    Raises ParameterError naming the offending field.
    """
    r = _positive_finite("r", r)
    delta = _positive_finite("delta", delta)
    sigma = _positive_finite("sigma", sigma)
    K = _positive_finite("K", K)
    try:
        a = float(alpha)
    except (TypeError, ValueError):
        raise ParameterError(f"alpha must be a number, got {alpha!r}") from None
    if not math.isfinite(a) or not 0.0 < a <= 1.0:
        raise ParameterError(f"alpha must lie in (0, 1], got {alpha!r}")
    return ModelParams(r=r, alpha=a, delta=delta, sigma=sigma, K=K)


def basic_reproduction_number(params: ModelParams) -> float:
    """Average number of RNA copies produced per RNA while p + m << K.

    Computed as r*sqrt(alpha/(delta*sigma)); the virus persists within the
    cell only when this exceeds one.
    """
    return params.r * math.sqrt(params.alpha / (params.delta * params.sigma))


def origin_equilibrium() -> Equilibrium:
    """The virus-free fixed point at (0, 0); always present."""
    return Equilibrium(EquilibriumKind.ORIGIN, 0.0, 0.0, True)


def positive_equilibrium(params: ModelParams) -> Equilibrium:
    """Coexistence fixed point; admissible (exists=True) iff R0 > 1.

    For R0 <= 1 the formal coordinates are still reported: both vanish at
    R0 = 1, where this point merges with the origin in a saddle-node, and
    turn negative below it.  At an admissible point p* + m* = K*(R0-1)/R0.
    """
    r0 = basic_reproduction_number(params)
    ratio = params.delta / params.r
    den = params.b * (1.0 + ratio * r0)
    p_star = (1.0 - 1.0 / r0) / den
    m_star = ratio * (r0 - 1.0) / den
    return Equilibrium(EquilibriumKind.POSITIVE, p_star, m_star, exists=r0 > 1.0)


def mixed_sign_equilibrium(params: ModelParams) -> Equilibrium:
    """Opposite-sign fixed point; never biologically relevant.

    The coordinates diverge as R0 approaches r/delta; within SINGULARITY_RTOL
    of that point the equilibrium is reported with exists=False and the
    limiting infinite coordinates.  Otherwise p and m have opposite signs:
    p > 0 > m for R0 < r/delta and p < 0 < m for R0 > r/delta.
    """
    r0 = basic_reproduction_number(params)
    ratio = params.delta / params.r
    gap = 1.0 - ratio * r0
    if abs(gap) <= SINGULARITY_RTOL * (ratio * r0):
        sign = 1.0 if gap >= 0.0 else -1.0
        return Equilibrium(EquilibriumKind.MIXED_SIGN, sign * math.inf, -sign * math.inf, False)
    den = params.b * gap
    p = (1.0 + 1.0 / r0) / den
    m = -ratio * (r0 + 1.0) / den
    return Equilibrium(EquilibriumKind.MIXED_SIGN, p, m, True)


def vector_field(params: ModelParams, s: State) -> tuple[float, float]:
    """Time derivative (dp/dt, dm/dt) of the replication system at state s."""
    p, m = s
    unfilled = 1.0 - (p + m) / params.K  # shared capacity throttle
    dp = params.r * m * unfilled - params.delta * p
    dm = params.alpha * params.r * p * unfilled - params.sigma * m
    return dp, dm


def divergence(params: ModelParams, s: State) -> float:
    """Divergence of the vector field; strictly negative wherever p, m >= 0.

    Its negativity rules out closed orbits in the phase-space triangle.
    """
    p, m = s
    return -(params.r / params.K) * (m + params.alpha * p) - params.delta - params.sigma
