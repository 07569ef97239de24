"""Heuristics mapping the Gibbs inverse temperatures to interpretable
probabilities and back.

An inverse temperature tau translates into the probability
h = 1 / (1 + exp(-tau)) that a single edge slot keeps its status across one
prior layer, and into an expected total structural Hamming distance
P^2 (1 - h).  These identities are exact for the unconstrained edge-wise
prior; under the in-degree-restricted space the engine normalizes over, the
induced per-edge probability deviates slightly, so the mapping is a
heuristic there rather than an identity.  Sensitivity sweeps are the
recommended companion check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

__all__ = [
    "ElicitationResult",
    "h_from_temperature",
    "temperature_from_h",
    "expected_shd",
    "two_step_elicitation",
]


@dataclass(frozen=True)
class ElicitationResult:
    """A coherent bundle of hyperparameters and their probability readings.
    Fields are None when the corresponding layer was not elicited."""

    h_eta: Optional[float] = None
    h_lambda: Optional[float] = None
    eta: Optional[float] = None
    lam: Optional[float] = None
    expected_shd_latent: Optional[float] = None
    expected_shd_individual: Optional[float] = None

    def to_json_dict(self) -> dict:
        def enc(x):
            if x is None:
                return None
            if math.isinf(x):
                return "inf"
            return x

        return {
            "h_eta": enc(self.h_eta),
            "h_lambda": enc(self.h_lambda),
            "eta": enc(self.eta),
            "lambda": enc(self.lam),
            "expected_shd_latent": enc(self.expected_shd_latent),
            "expected_shd_individual": enc(self.expected_shd_individual),
        }


def h_from_temperature(tau: float) -> float:
    """Probability of maintaining one edge slot's status across a Gibbs
    layer with inverse temperature tau: 1 / (1 + exp(-tau)) in [0.5, 1]."""
    if math.isnan(tau) or tau < 0:
        raise ValueError(f"inverse temperature must be >= 0, got {tau}")
    if math.isinf(tau):
        return 1.0
    return 1.0 / (1.0 + math.exp(-tau))


def temperature_from_h(h: float) -> float:
    """Inverse of `h_from_temperature`: the logit log(h / (1 - h))."""
    if not 0.5 <= h < 1.0:
        raise ValueError(f"edge-retention probability must lie in [0.5, 1), got {h}")
    return math.log(h / (1.0 - h))


def expected_shd(P: int, h: float) -> float:
    """Expected total structural Hamming distance across one prior layer
    over all P^2 edge slots: P^2 (1 - h)."""
    if P <= 0:
        raise ValueError(f"P must be positive, got {P}")
    if not 0.5 <= h <= 1.0:
        raise ValueError(f"edge-retention probability must lie in [0.5, 1], got {h}")
    return P * P * (1.0 - h)


def two_step_elicitation(s1: float, s2: float) -> ElicitationResult:
    """Derive (h_lambda, h_eta) from two answers about observable pairs:
    s1 the probability that an edge slot agrees between two individual
    networks, s2 the probability that an individual network agrees with the
    prior network.

    Inverts s1 = 1 - 2 h_lambda + 2 h_lambda^2 as
    h_lambda = (1 + sqrt(2 s1 - 1)) / 2, then solves
    s2 = 1 - h_lambda - h_eta + 2 h_lambda h_eta for
    h_eta = (s2 + h_lambda - 1) / (2 h_lambda - 1).  s1 assumes a uniform
    prior on the latent network, so the pair is heuristic when the prior
    layer is informative.
    """
    if not 0.5 <= s1 <= 1.0:
        raise ValueError(f"s1 must lie in [0.5, 1], got {s1} (no real solution below 0.5)")
    if not 0.0 <= s2 <= 1.0:
        raise ValueError(f"s2 must lie in [0, 1], got {s2}")
    h_lambda = 0.5 * (1.0 + math.sqrt(2.0 * s1 - 1.0))
    if h_lambda == 0.5:
        if s2 != 0.5:
            raise ValueError(
                f"inconsistent inputs: s1={s1} forces h_lambda=0.5, under which "
                f"s2 must be 0.5, got {s2}"
            )
        h_eta = 0.5
    else:
        h_eta = (s2 + h_lambda - 1.0) / (2.0 * h_lambda - 1.0)
    if not 0.5 <= h_eta <= 1.0:
        raise ValueError(
            f"elicited h_eta = {h_eta} falls outside [0.5, 1]; "
            f"inputs (s1={s1}, s2={s2}) are not jointly consistent"
        )
    lam = math.inf if h_lambda == 1.0 else temperature_from_h(h_lambda)
    eta = math.inf if h_eta == 1.0 else temperature_from_h(h_eta)
    return ElicitationResult(h_eta=h_eta, h_lambda=h_lambda, eta=eta, lam=lam)
