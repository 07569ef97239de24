"""Brute-force reference implementations for tests.

`brute_force_marginals` enumerates every joint assignment of the latent and
individual parent sets for one target and accumulates posterior mass
directly, without the sum-product interchange used by the engine, so the two
paths share no structural shortcut.  `dense_marginal_likelihood` rebuilds
the closed-form score through explicit projection matrices instead of
orthonormal bases.  Both are exponential or cubic by construction and never
run on the inference path.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.special import logsumexp

from .engine import Hyperparameters
from .graphs import Network, ParentSpace
from .likelihood import RANK_RTOL, NumericalDegeneracyError, RegressionView, ScoreTable

__all__ = ["brute_force_marginals", "dense_marginal_likelihood", "MAX_JOINT_ASSIGNMENTS"]

MAX_JOINT_ASSIGNMENTS = 10**7


def _assignments(M: int, J: int, t_candidates, lam_is_inf: bool):
    """Yield (t, individual assignment tuple) over the joint space."""
    if lam_is_inf:
        for t in t_candidates:
            yield t, (t,) * J
    else:
        for t in t_candidates:
            for assign in itertools.product(range(M), repeat=J):
                yield t, assign


def brute_force_marginals(
    scores: ScoreTable,
    space: ParentSpace,
    hp: Hyperparameters,
    prior: Network,
    target: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact latent and individual edge marginals for one target variable by
    exhaustive enumeration of all M^(J+1) joint parent-set assignments.

    Returns (latent row of length P, (J, P) individual rows), where entry
    i-1 is the posterior probability that vertex i is a parent of ``target``.
    Mass is accumulated in extended-precision linear space after a global
    max subtraction.
    """
    J = scores.num_individuals
    M = space.size
    P = space.P
    if not 1 <= target <= P:
        raise ValueError(f"target {target} outside 1..{P}")
    lam_is_inf = math.isinf(hp.lam)
    joint_size = M if lam_is_inf else M ** (J + 1)
    if joint_size > MAX_JOINT_ASSIGNMENTS:
        raise ValueError(
            f"joint space of {joint_size} assignments exceeds the "
            f"{MAX_JOINT_ASSIGNMENTS} enumeration guard"
        )

    v = scores.log_scores[:, target - 1, :]
    d0 = space.shd_to(prior.parents[target - 1]).astype(np.float64)
    if math.isinf(hp.eta):
        # latent network pinned to the prior network itself; individuals
        # decouple and weigh their own parent sets against the full anchor
        latent_row = prior.adjacency()[:, target - 1].astype(np.float64)
        individual_rows = np.empty((J, P))
        if lam_is_inf:
            individual_rows[:] = latent_row[None, :]
        else:
            for j in range(J):
                w = v[j] - hp.lam * d0
                w = np.exp(np.asarray(w - w.max(), dtype=np.longdouble))
                probs = np.asarray(w / w.sum(), dtype=np.float64)
                individual_rows[j] = space.membership.T @ probs
        return latent_row, individual_rows

    w0 = -hp.eta * d0
    t_candidates = list(range(M))
    if lam_is_inf:
        neg_kernel = None
        log_z = np.zeros(M)
    else:
        neg_kernel = -hp.lam * space.shd_matrix.astype(np.float64)
        log_z = logsumexp(neg_kernel, axis=0)

    def log_mass(t: int, assign) -> float:
        lm = w0[t] - J * log_z[t]
        if lam_is_inf:
            for j in range(J):
                lm += v[j, t]
        else:
            for j, s in enumerate(assign):
                lm += v[j, s] + neg_kernel[s, t]
        return lm

    top = max(log_mass(t, assign) for t, assign in _assignments(M, J, t_candidates, lam_is_inf))

    member = space.membership.astype(np.longdouble)
    total = np.longdouble(0.0)
    latent_acc = np.zeros(P, dtype=np.longdouble)
    individual_acc = np.zeros((J, P), dtype=np.longdouble)
    for t, assign in _assignments(M, J, t_candidates, lam_is_inf):
        w = np.exp(np.longdouble(log_mass(t, assign) - top))
        total += w
        latent_acc += w * member[t]
        for j, s in enumerate(assign):
            individual_acc[j] += w * member[s]
    return (
        np.asarray(latent_acc / total, dtype=np.float64),
        np.asarray(individual_acc / total, dtype=np.float64),
    )


def _rank(X: np.ndarray) -> int:
    if X.shape[1] == 0:
        return 0
    s = np.linalg.svd(X, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > RANK_RTOL * s[0]))


def _projector(X: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto the column space, via the pseudo-inverse of
    the Gram matrix (tolerance 1e-12 on its singular values)."""
    n = X.shape[0]
    if X.shape[1] == 0:
        return np.zeros((n, n))
    gram = X.T @ X
    return X @ np.linalg.pinv(gram, rcond=1e-12) @ X.T

def dense_marginal_likelihood(view: RegressionView, phi: float) -> float:
    """The closed-form log score evaluated through explicit dense projection
    matrices, with the final quadratic form accumulated in extended
    precision.  Cross-check for the orthonormal-basis implementation."""
    if not phi > 0:
        raise ValueError(f"phi must be positive, got {phi}")
    y = np.asarray(view.response, dtype=np.float64)
    n = y.shape[0]
    X0 = np.asarray(view.common_design, dtype=np.float64)
    Xg = np.asarray(view.model_design, dtype=np.float64)
    P0 = _projector(X0)
    a = _rank(X0)
    Xt = (np.eye(n) - P0) @ Xg
    Pg = _projector(Xt)
    b = _rank(Xt)
    u = phi / (1.0 + phi)
    middle = (np.eye(n) - P0 - u * Pg).astype(np.longdouble)
    quad = float(y.astype(np.longdouble) @ (middle @ y.astype(np.longdouble)))
    if not quad > 0.0:
        raise NumericalDegeneracyError(
            f"residual quadratic form {quad} is not positive"
        )
    return float(-0.5 * b * np.log1p(phi) - 0.5 * (n - a) * np.log(quad))
