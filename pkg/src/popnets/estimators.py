"""The estimators compared in the study, behind one uniform interface.

Every estimator returns an EdgePosterior (latent matrix, per-individual
matrices, feature statistics).  The joint estimator runs the full
hierarchical model; the aggregated and independent estimators are its exact
infinite-temperature limits and reuse the same engine path, so the limit
coherence is bit-exact.  The empirical estimator chains the two; monolithic
pools all data into one pseudo-individual; the correlation baseline ranks
edges by absolute lagged Pearson coefficients (rank scores, not
probabilities); the prior-only baseline propagates the Gibbs priors with no
data term.
"""

from __future__ import annotations

import math
from dataclasses import replace
from enum import Enum
from typing import Optional

import numpy as np

from . import engine
from .data import IndividualData, PopulationDataset
from .engine import EdgePosterior, Hyperparameters, make_posterior
from .graphs import Network, ParentSpace, enumerate_parent_space
from .likelihood import ScoreTable, build_score_table

__all__ = [
    "EstimatorKind",
    "run_jni",
    "run_ani",
    "run_ini",
    "run_eni",
    "run_monolithic",
    "run_correlation",
    "run_prior_only",
    "run_estimator",
    "zero_score_table",
]


class EstimatorKind(str, Enum):
    JNI = "jni"
    ANI = "ani"
    INI = "ini"
    ENI = "eni"
    MONOLITHIC = "monolithic"
    CORRELATION = "correlation"
    PRIOR = "prior"


def _space_and_scores(
    data: PopulationDataset,
    hp: Hyperparameters,
    space: Optional[ParentSpace],
    scores: Optional[ScoreTable],
    workers: int,
) -> tuple[ParentSpace, ScoreTable]:
    if space is None:
        space = enumerate_parent_space(data.num_variables, hp.c)
    if scores is None:
        scores = build_score_table(data, space, hp.phi_policy, workers=workers)
    return space, scores


def run_jni(
    data: PopulationDataset,
    prior: Network,
    hp: Hyperparameters,
    *,
    space: Optional[ParentSpace] = None,
    scores: Optional[ScoreTable] = None,
    workers: int = 1,
) -> EdgePosterior:
    """Joint inference over the latent network and all individual networks."""
    space, scores = _space_and_scores(data, hp, space, scores, workers)
    posterior, _ = engine.run(scores, space, hp, prior, workers=workers)
    return posterior


def run_ani(
    data: PopulationDataset,
    prior: Network,
    hp: Hyperparameters,
    *,
    space: Optional[ParentSpace] = None,
    scores: Optional[ScoreTable] = None,
    workers: int = 1,
) -> EdgePosterior:
    """Aggregated inference: one shared network, per-individual parameters.
    Exactly the lam -> inf limit of the joint estimator; individual
    marginals equal the latent ones."""
    return run_jni(
        data, prior, replace(hp, lam=math.inf), space=space, scores=scores, workers=workers
    )


def run_ini(
    data: PopulationDataset,
    prior: Network,
    hp: Hyperparameters,
    *,
    space: Optional[ParentSpace] = None,
    scores: Optional[ScoreTable] = None,
    workers: int = 1,
) -> EdgePosterior:
    """Independent per-individual inference against the prior network
    (the eta -> inf limit), with the latent estimate taken as the unweighted
    average of the individual marginals."""
    posterior = run_jni(
        data, prior, replace(hp, eta=math.inf), space=space, scores=scores, workers=workers
    )
    return make_posterior(posterior.individual.mean(axis=0), posterior.individual)


def run_eni(
    data: PopulationDataset,
    prior: Network,
    hp: Hyperparameters,
    threshold: float = 0.5,
    *,
    space: Optional[ParentSpace] = None,
    scores: Optional[ScoreTable] = None,
    workers: int = 1,
) -> EdgePosterior:
    """Empirical two-step estimator: estimate the latent network by
    aggregation, threshold its marginals to a point network, then rerun
    independent inference with that network as the prior.  The 0.5 default
    is the median-probability convention."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {threshold}")
    space, scores = _space_and_scores(data, hp, space, scores, workers)
    first = run_ani(data, prior, hp, space=space, scores=scores, workers=workers)
    point = Network.from_adjacency((first.latent > threshold).astype(np.uint8))
    return run_ini(data, point, hp, space=space, scores=scores, workers=workers)


def _pooled_individual(data: PopulationDataset) -> PopulationDataset:
    courses = tuple(c for ind in data.individuals for c in ind.courses)
    pooled = IndividualData(individual_id="pooled", courses=courses)
    return PopulationDataset(individuals=(pooled,), variable_names=data.variable_names)


def run_monolithic(
    data: PopulationDataset,
    prior: Network,
    hp: Hyperparameters,
    *,
    workers: int = 1,
) -> EdgePosterior:
    """Naive pooling: concatenate every individual's courses into one
    pseudo-individual (one network, one parameter set) and run
    single-network inference against the prior at inverse temperature eta.
    Intervention annotations ride along per course.  The single inferred
    matrix is reported for the latent network and for every individual."""
    pooled = _pooled_individual(data)
    space = enumerate_parent_space(data.num_variables, hp.c)
    scores = build_score_table(pooled, space, hp.phi_policy, workers=workers)
    posterior, _ = engine.run(scores, space, replace(hp, lam=math.inf), prior, workers=workers)
    individual = np.repeat(posterior.latent[None, :, :], data.num_individuals, axis=0)
    return make_posterior(posterior.latent, individual)


def run_correlation(data: PopulationDataset) -> EdgePosterior:
    """Absolute lagged Pearson correlation baseline.

    For individual j, the score of edge (i, p) is |corr(y_i(t-1), y_p(t))|
    pooled over that individual's transitions; the latent score is the mean
    across individuals.  Scores are rank statistics in [0, 1], not
    probabilities.  Interventions are ignored; a zero-variance predictor or
    response scores 0.
    """
    mats = []
    for ind in data.individuals:
        for course in ind.courses:
            if course.num_timepoints < 3:
                raise ValueError(
                    f"individual {ind.individual_id}: correlation baseline needs "
                    f"courses with at least 3 time points, got {course.num_timepoints}"
                )
        lagged = np.concatenate([c.values[:-1] for c in ind.courses], axis=0)
        current = np.concatenate([c.values[1:] for c in ind.courses], axis=0)
        x = lagged - lagged.mean(axis=0)
        y = current - current.mean(axis=0)
        cross = x.T @ y
        norm = np.sqrt((x * x).sum(axis=0))[:, None] * np.sqrt((y * y).sum(axis=0))[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(norm > 0.0, cross / norm, 0.0)
        mats.append(np.clip(np.abs(r), 0.0, 1.0))
    individual = np.stack(mats)
    return make_posterior(individual.mean(axis=0), individual)


def zero_score_table(space: ParentSpace, num_individuals: int) -> ScoreTable:
    """An all-zero score table: the no-data limit in which the likelihood
    cancels and the engine returns pure prior marginals."""
    return ScoreTable(
        log_scores=np.zeros((num_individuals, space.P, space.size)),
        c=space.c,
        space_hash=space.canonical_hash,
        individual_ids=tuple(f"ind{j + 1}" for j in range(num_individuals)),
    )


def run_prior_only(
    prior: Network,
    hp: Hyperparameters,
    num_individuals: int = 1,
    *,
    workers: int = 1,
) -> EdgePosterior:
    """Analytic prior marginals on the restricted space, with no data term.

    The latent marginal of slot (i, p) is the probability that i is a parent
    of p under the eta-layer Gibbs prior; individual marginals additionally
    propagate the lam layer.  Computed exactly by running the engine on an
    all-zero score table.
    """
    space = enumerate_parent_space(prior.num_vertices, hp.c)
    scores = zero_score_table(space, num_individuals)
    posterior, _ = engine.run(scores, space, hp, prior, workers=workers)
    return posterior


def run_estimator(
    kind: EstimatorKind,
    data: PopulationDataset,
    prior: Network,
    hp: Hyperparameters,
    *,
    threshold: float = 0.5,
    space: Optional[ParentSpace] = None,
    scores: Optional[ScoreTable] = None,
    workers: int = 1,
) -> EdgePosterior:
    """Dispatch a named estimator.  The correlation baseline ignores the
    prior and hyperparameters; prior-only ignores the observations."""
    kind = EstimatorKind(kind)
    if kind is EstimatorKind.JNI:
        return run_jni(data, prior, hp, space=space, scores=scores, workers=workers)
    if kind is EstimatorKind.ANI:
        return run_ani(data, prior, hp, space=space, scores=scores, workers=workers)
    if kind is EstimatorKind.INI:
        return run_ini(data, prior, hp, space=space, scores=scores, workers=workers)
    if kind is EstimatorKind.ENI:
        return run_eni(
            data, prior, hp, threshold, space=space, scores=scores, workers=workers
        )
    if kind is EstimatorKind.MONOLITHIC:
        return run_monolithic(data, prior, hp, workers=workers)
    if kind is EstimatorKind.CORRELATION:
        return run_correlation(data)
    if kind is EstimatorKind.PRIOR:
        return run_prior_only(prior, hp, data.num_individuals, workers=workers)
    raise ValueError(f"unknown estimator kind {kind!r}")
