"""Exact joint model averaging over the restricted parent-set space.

Produces posterior edge-inclusion marginals for the shared latent network
and for every individual network.  The computation runs in three cached
phases per target variable: (I) mix each individual's parent-set scores
through the individual-given-latent coupling, (II) form each individual's
normalized parent-set posterior with the remaining individuals summed out,
(III) reduce parent-set posteriors to edge marginals.  Interchanging the
sum over joint assignments with the product over individuals is what makes
the cost polynomial; the brute-force enumeration in `popnets.oracle`
computes the un-interchanged form for testing.

Everything is accumulated in natural-log space with max subtraction; the
dominant inner products mix max-subtracted exponentials through a
precomputed coupling kernel (entries in (0, 1]) by matrix product, so they
can neither overflow nor lose the dominant terms.  Infinite inverse
temperatures are honored analytically: the corresponding coupling collapses
to a point mass instead of ever multiplying an infinity.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from . import _parallel
from .graphs import Network, ParentSpace
from .likelihood import PhiPolicy, ScoreTable

__all__ = [
    "Hyperparameters",
    "EdgePosterior",
    "PhaseCache",
    "make_posterior",
    "phase1_cache",
    "latent_edge_marginals",
    "individual_edge_marginals",
    "run",
    "feature_statistics",
    "sum_product_identity_check",
    "save_posterior_json",
    "load_posterior_json",
    "save_posterior_csv",
]

# Relative slack under which sum-excluding-one falls back to a direct re-sum;
# plain subtraction is ill-conditioned when one term carries the whole total.
_EXCLUDE_RESUM_RTOL = 1e-12


@dataclass(frozen=True)
class Hyperparameters:
    """Inverse temperatures of the two prior layers, the in-degree cap, and
    the g-prior scale policy.  ``eta`` couples the latent network to the
    prior network, ``lam`` couples each individual network to the latent
    one; ``math.inf`` is honored as an exact limit."""

    eta: float
    lam: float
    c: int
    phi_policy: PhiPolicy = field(default_factory=PhiPolicy)

    def __post_init__(self) -> None:
        for name in ("eta", "lam"):
            v = getattr(self, name)
            if math.isnan(v) or v < 0:
                raise ValueError(f"{name} must be >= 0 (inf allowed), got {v}")
        if self.c < 0:
            raise ValueError(f"in-degree cap must be >= 0, got {self.c}")


@dataclass(frozen=True)
class EdgePosterior:
    """Posterior edge-inclusion probabilities.  ``latent[i-1, p-1]`` is the
    probability of edge i -> p in the latent network; ``individual[j]`` the
    same for individual j; ``features`` is the elementwise absolute
    difference between the two."""

    latent: np.ndarray      # (P, P)
    individual: np.ndarray  # (J, P, P)
    features: np.ndarray    # (J, P, P)

    @property
    def num_variables(self) -> int:
        return self.latent.shape[0]

    @property
    def num_individuals(self) -> int:
        return self.individual.shape[0]


def make_posterior(latent: np.ndarray, individual: np.ndarray) -> EdgePosterior:
    latent = np.asarray(latent, dtype=np.float64)
    individual = np.asarray(individual, dtype=np.float64)
    features = np.abs(individual - latent[None, :, :])
    return EdgePosterior(latent=latent, individual=individual, features=features)


def feature_statistics(posterior: EdgePosterior) -> np.ndarray:
    """Per-individual |individual marginal - latent marginal| matrices,
    ranking candidate individual-specific edge differences."""
    return np.abs(posterior.individual - posterior.latent[None, :, :])


@dataclass(frozen=True)
class PhaseCache:
    """Intermediate caches: ``phase1[p, j, t]`` is the log evidence of
    individual j's data at target p+1 given latent parent set t;
    ``phase2[p, j, s]`` is individual j's normalized log posterior over its
    own parent sets (exponentials sum to 1 over s)."""

    phase1: np.ndarray  # (P, J, M)
    phase2: np.ndarray  # (P, J, M)


def _coupling_kernel(space: ParentSpace, lam: float) -> np.ndarray:
    """(M, M) matrix of linear coupling weights exp(-lam * shd(s, t)),
    shared across targets; the dominant inner product of the phased sums is
    then a matrix product against this kernel."""
    return np.exp(-lam * space.shd_matrix.astype(np.float64))


def _check_inputs(scores: ScoreTable, space: ParentSpace, prior: Network) -> None:
    if scores.num_variables != space.P:
        raise ValueError(f"score table has P={scores.num_variables}, space has P={space.P}")
    if scores.num_sets != space.size:
        raise ValueError(f"score table has M={scores.num_sets}, space has M={space.size}")
    if scores.space_hash != space.canonical_hash:
        raise ValueError("score table was built against a different parent-set space")
    if prior.num_vertices != space.P:
        raise ValueError(f"prior network has P={prior.num_vertices}, space has P={space.P}")


def _phase1_block(v: np.ndarray, kernel: np.ndarray, log_z: np.ndarray) -> np.ndarray:
    """Phase I for one target, all individuals at once: the log of
    exp(scores) mixed through the coupling kernel, normalized per anchor.

    Rows are max-subtracted before exponentiation; kernel entries lie in
    (0, 1], so the products cannot overflow and dropped terms are below
    double-precision resolution of the dominant one.
    """
    vmax = v.max(axis=1, keepdims=True)
    with np.errstate(divide="ignore"):
        return np.log(np.exp(v - vmax) @ kernel) + vmax - log_z


def _excluding_one(phase1_p: np.ndarray, total: np.ndarray, j: int) -> np.ndarray:
    """Sum of phase-1 terms over individuals other than j, by subtraction
    with a direct re-sum wherever cancellation would dominate."""
    excl = total - phase1_p[j]
    if phase1_p.shape[0] > 1:
        risky = np.abs(excl) <= _EXCLUDE_RESUM_RTOL * np.abs(total)
        if np.any(risky):
            others = np.delete(phase1_p, j, axis=0)
            excl = excl.copy()
            excl[risky] = others[:, risky].sum(axis=0)
    return excl


def _target_posterior(payload, p: int):
    """Latent and individual posteriors for one target variable.

    Returns (latent column over sources, per-individual columns, phase-1
    block, phase-2 block).  Pure function of the payload; safe to run
    concurrently across targets.
    """
    (
        log_scores,
        prior_d0,
        prior_adjacency,
        kernel,
        log_z,
        eta,
        lam,
        membership,
    ) = payload
    J = log_scores.shape[0]
    M = log_z.shape[0]
    lam_is_inf = math.isinf(lam)
    v = log_scores[:, p, :]

    if lam_is_inf:
        phase1 = v.copy()  # point-mass coupling: the mixture is the score itself
    else:
        phase1 = _phase1_block(v, kernel, log_z)
    d0 = prior_d0[p]
    phase2 = np.empty((J, M))

    if math.isinf(eta):
        # the latent network is exactly the prior network (which may carry
        # more parents than the cap admits); each individual couples to it
        # directly and inference decouples across individuals
        latent_col = prior_adjacency[:, p].astype(np.float64)
        latent_logw = np.where(d0 == d0.min(), 0.0, -np.inf)
        latent_logw = latent_logw - logsumexp(latent_logw)
        if lam_is_inf:
            phase2[:] = latent_logw[None, :]
            individual_cols = np.repeat(latent_col[None, :], J, axis=0)
        else:
            logq = v - lam * d0[None, :]
            phase2[:] = logq - logsumexp(logq, axis=1, keepdims=True)
            individual_cols = np.exp(phase2) @ membership
        return latent_col, individual_cols, phase1, phase2

    w0 = -eta * d0
    total = phase1.sum(axis=0)
    latent_logw = w0 + total
    latent_logw = latent_logw - logsumexp(latent_logw)
    latent_col = membership.T @ np.exp(latent_logw)

    if lam_is_inf:
        # individual networks coincide with the latent one exactly in this
        # limit; copy rather than recompute so the equality is bit-exact
        phase2[:] = latent_logw[None, :]
        individual_cols = np.repeat(latent_col[None, :], J, axis=0)
    else:
        mix = np.empty((J, M))
        for j in range(J):
            mix[j] = _excluding_one(phase1, total, j)
        mix += (w0 - log_z)[None, :]
        mix_max = mix.max(axis=1, keepdims=True)
        with np.errstate(divide="ignore"):
            logq = v + np.log(np.exp(mix - mix_max) @ kernel) + mix_max
        phase2[:] = logq - logsumexp(logq, axis=1, keepdims=True)
        individual_cols = np.exp(phase2) @ membership
    return latent_col, individual_cols, phase1, phase2


def _payload(scores: ScoreTable, space: ParentSpace, hp: Hyperparameters, prior: Network):
    if math.isinf(hp.lam):
        kernel = None
        log_z = np.zeros(space.size)
    else:
        if np.exp(-hp.lam) == 0.0:
            raise ValueError(
                f"finite lambda = {hp.lam} underflows the coupling kernel; "
                "use math.inf for the point-mass limit"
            )
        kernel = _coupling_kernel(space, hp.lam)
        log_z = np.log(kernel.sum(axis=0))
    d0 = np.stack([space.shd_to(mask).astype(np.float64) for mask in prior.parents])
    return (
        scores.log_scores,
        d0,
        prior.adjacency(),
        kernel,
        log_z,
        hp.eta,
        hp.lam,
        space.membership,
    )


def run(
    scores: ScoreTable,
    space: ParentSpace,
    hp: Hyperparameters,
    prior: Network,
    workers: int = 1,
) -> tuple[EdgePosterior, PhaseCache]:
    """Full exact inference pass: edge marginals for the latent network and
    every individual network, plus the phase caches.

    Targets are independent; ``workers > 1`` maps them over a forked pool.
    Results are bit-identical for any worker count.
    """
    _check_inputs(scores, space, prior)
    J, P, M = scores.log_scores.shape
    payload = _payload(scores, space, hp, prior)
    results = _parallel.parallel_map(_target_posterior, payload, range(P), workers)

    latent = np.empty((P, P))
    individual = np.empty((J, P, P))
    phase1 = np.empty((P, J, M))
    phase2 = np.empty((P, J, M))
    for p, (latent_col, individual_cols, ph1, ph2) in zip(range(P), results):
        latent[:, p] = latent_col
        individual[:, :, p] = individual_cols
        phase1[p] = ph1
        phase2[p] = ph2
    return make_posterior(latent, individual), PhaseCache(phase1=phase1, phase2=phase2)


def phase1_cache(scores: ScoreTable, space: ParentSpace, hp: Hyperparameters) -> np.ndarray:
    """(P, J, M) cache of log evidence values given each latent anchor set."""
    if scores.space_hash != space.canonical_hash:
        raise ValueError("score table was built against a different parent-set space")
    J, P, M = scores.log_scores.shape
    if math.isinf(hp.lam):
        return np.ascontiguousarray(scores.log_scores.transpose(1, 0, 2))
    kernel = _coupling_kernel(space, hp.lam)
    log_z = np.log(kernel.sum(axis=0))
    out = np.empty((P, J, M))
    for p in range(P):
        out[p] = _phase1_block(scores.log_scores[:, p, :], kernel, log_z)
    return out


def latent_edge_marginals(
    scores: ScoreTable,
    space: ParentSpace,
    hp: Hyperparameters,
    prior: Network,
    workers: int = 1,
) -> np.ndarray:
    """(P, P) matrix of posterior latent edge-inclusion probabilities."""
    posterior, _ = run(scores, space, hp, prior, workers=workers)
    return posterior.latent


def individual_edge_marginals(
    scores: ScoreTable,
    space: ParentSpace,
    hp: Hyperparameters,
    prior: Network,
    workers: int = 1,
) -> np.ndarray:
    """(J, P, P) stack of posterior individual edge-inclusion probabilities."""
    posterior, _ = run(scores, space, hp, prior, workers=workers)
    return posterior.individual


def sum_product_identity_check(factors: Sequence[np.ndarray]) -> tuple[float, float]:
    """Evaluate both sides of the sum-product interchange on finite
    nonnegative weight vectors: the sum over the full product domain of the
    factor product, and the product of the per-factor sums.  Self-test
    utility; the two values must agree up to rounding."""
    factors = [np.asarray(f, dtype=np.float64).ravel() for f in factors]
    if not factors:
        raise ValueError("need at least one factor")
    for f in factors:
        if f.size == 0:
            raise ValueError("factors must be nonempty")
        if not np.all(np.isfinite(f)) or np.any(f < 0):
            raise ValueError("factors must be finite and nonnegative")
    lhs = 0.0
    for combo in itertools.product(*(range(f.size) for f in factors)):
        term = 1.0
        for f, i in zip(factors, combo):
            term *= f[i]
        lhs += term
    rhs = 1.0
    for f in factors:
        rhs *= math.fsum(f)
    return lhs, float(rhs)


# ---------------------------------------------------------------------------
# Posterior serialization: a JSON document with the three probability blocks,
# and a flat CSV (scope,individual,source,target,probability).
# ---------------------------------------------------------------------------


def _hp_json(hp: Hyperparameters) -> dict:
    return {
        "eta": "inf" if math.isinf(hp.eta) else hp.eta,
        "lambda": "inf" if math.isinf(hp.lam) else hp.lam,
        "c": hp.c,
        "phi_mode": hp.phi_policy.mode,
        "phi_value": hp.phi_policy.fixed_value,
    }


def save_posterior_json(
    posterior: EdgePosterior,
    path,
    hp: Hyperparameters | None = None,
    estimator: str | None = None,
    score_cache_hash: str | None = None,
    individual_ids: Sequence[str] | None = None,
) -> None:
    obj = {
        "estimator": estimator,
        "latent": posterior.latent.tolist(),
        "individual": [m.tolist() for m in posterior.individual],
        "features": [m.tolist() for m in posterior.features],
        "hyperparameters": _hp_json(hp) if hp is not None else None,
        "score_cache_hash": score_cache_hash,
        "individual_ids": list(individual_ids) if individual_ids else None,
    }
    with open(path, "w") as fh:
        json.dump(obj, fh)
        fh.write("\n")


def load_posterior_json(path) -> tuple[EdgePosterior, dict]:
    """Read a posterior document; returns the posterior and the raw metadata
    (estimator tag, hyperparameters, hashes, ids)."""
    with open(path) as fh:
        obj = json.load(fh)
    posterior = EdgePosterior(
        latent=np.array(obj["latent"], dtype=np.float64),
        individual=np.array(obj["individual"], dtype=np.float64),
        features=np.array(obj["features"], dtype=np.float64),
    )
    meta = {k: obj.get(k) for k in ("estimator", "hyperparameters", "score_cache_hash", "individual_ids")}
    return posterior, meta


def save_posterior_csv(
    posterior: EdgePosterior, path, individual_ids: Sequence[str] | None = None
) -> None:
    P = posterior.num_variables
    J = posterior.num_individuals
    ids = list(individual_ids) if individual_ids else [f"ind{j + 1}" for j in range(J)]
    with open(path, "w") as fh:
        fh.write("scope,individual,source,target,probability\n")
        for i in range(P):
            for p in range(P):
                fh.write(f"latent,,{i + 1},{p + 1},{posterior.latent[i, p]:.17g}\n")
        for j in range(J):
            for i in range(P):
                for p in range(P):
                    fh.write(
                        f"individual,{ids[j]},{i + 1},{p + 1},{posterior.individual[j, i, p]:.17g}\n"
                    )
        for j in range(J):
            for i in range(P):
                for p in range(P):
                    fh.write(
                        f"feature,{ids[j]},{i + 1},{p + 1},{posterior.features[j, i, p]:.17g}\n"
                    )
