"""Regression formulation of the local time-course likelihood and its
closed-form marginal under a g-prior.

Each (individual, target variable, parent set) triple defines a linear
regression: the response stacks the target's observations across courses,
the common design holds intercept indicators for initial and post-initial
rows (plus intervention fixed-effect indicators), and the model design holds
the lagged values of the parents, zeroed on initial rows.  The marginal
likelihood over coefficients, intercepts and noise scale has the closed form

    log ML = -(b/2) log(1 + phi) - ((n - a)/2) log(y' (I - P0 - u PG) y)

with u = phi / (phi + 1), P0 the projection onto the common design's column
space, PG the projection onto the column space of the orthogonalized model
design (I - P0) X_G, a and b the effective ranks of the two designs, up to
an additive constant shared by all parent sets of a fixed (individual,
target) pair.  Projections are computed through rank-revealing
orthonormal bases rather than explicit projection matrices.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence, Union

import numpy as np

from . import _parallel
from .data import IndividualData, PopulationDataset
from .graphs import ParentSpace, set_members

__all__ = [
    "NumericalDegeneracyError",
    "PhiPolicy",
    "RegressionView",
    "ScoreTable",
    "build_regression_view",
    "log_marginal_likelihood",
    "select_phi",
    "build_score_table",
    "save_score_table",
    "load_score_table",
    "dump_score_table_csv",
]

RANK_RTOL = 1e-10
PHI_MIN = 1e-6
PHI_MAX = 1e6

ParentsLike = Union[int, Iterable[int]]


class NumericalDegeneracyError(ArithmeticError):
    """Residual quadratic form of the marginal likelihood is not positive."""


@dataclass(frozen=True)
class PhiPolicy:
    """How the g-prior scale is chosen: per-model empirical Bayes (the
    default) or a fixed value.  Bounds keep the shrinkage factor sane."""

    mode: str = "empirical_bayes"
    fixed_value: float | None = None
    phi_min: float = PHI_MIN
    phi_max: float = PHI_MAX

    def __post_init__(self) -> None:
        if self.mode not in ("empirical_bayes", "fixed"):
            raise ValueError(f"unknown phi mode {self.mode!r}")
        if self.mode == "fixed":
            if self.fixed_value is None or not self.fixed_value > 0:
                raise ValueError("fixed phi policy needs fixed_value > 0")
        if not 0 < self.phi_min <= self.phi_max:
            raise ValueError("need 0 < phi_min <= phi_max")


@dataclass(frozen=True)
class RegressionView:
    """Design matrices and response for one (individual, target, parent set)."""

    response: np.ndarray       # (n,)
    common_design: np.ndarray  # (n, a)
    model_design: np.ndarray   # (n, b)

    @property
    def num_rows(self) -> int:
        return self.response.shape[0]

    @property
    def a(self) -> int:
        return self.common_design.shape[1]

    @property
    def b(self) -> int:
        return self.model_design.shape[1]


def _as_mask(parents: ParentsLike, P: int) -> int:
    if isinstance(parents, (int, np.integer)):
        mask = int(parents)
        if mask < 0 or mask >> P:
            raise ValueError(f"parent mask {mask} outside vertex universe 1..{P}")
        return mask
    mask = 0
    for v in parents:
        v = int(v)
        if not 1 <= v <= P:
            raise ValueError(f"parent vertex {v} outside 1..{P}")
        mask |= 1 << (v - 1)
    return mask


def _stacked_designs(data: IndividualData) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[tuple[slice, int | None]]]:
    """Stack all courses of one individual.

    Returns (responses (n, P), base common design (n, 2), lag matrix (n, P),
    course layout).  The lag matrix holds y_i(t-1) on post-initial rows and
    zeros on initial rows; within an intervened course the target's predictor
    column is zeroed (perfect-out).  The course layout records each course's
    row slice and intervention target for fixed-effect columns.
    """
    P = data.num_variables
    blocks_y, blocks_lag, blocks_x0 = [], [], []
    layout: list[tuple[slice, int | None]] = []
    start = 0
    for course in data.courses:
        vals = course.values
        n_e = vals.shape[0]
        lag = np.zeros((n_e, P))
        lag[1:] = vals[:-1]
        if course.intervention_target is not None:
            lag[:, course.intervention_target - 1] = 0.0
        x0 = np.zeros((n_e, 2))
        x0[0, 0] = 1.0
        x0[1:, 1] = 1.0
        blocks_y.append(vals)
        blocks_lag.append(lag)
        blocks_x0.append(x0)
        layout.append((slice(start, start + n_e), course.intervention_target))
        start += n_e
    return (
        np.concatenate(blocks_y, axis=0),
        np.concatenate(blocks_x0, axis=0),
        np.concatenate(blocks_lag, axis=0),
        layout,
    )


def _common_design_for_target(
    base: np.ndarray, layout: Sequence[tuple[slice, int | None]], target: int
) -> np.ndarray:
    """Base intercept columns plus one fixed-effect indicator per course
    whose intervention hits the target variable (1 on that course's
    post-initial rows)."""
    fe_cols = []
    n = base.shape[0]
    for rows, itarget in layout:
        if itarget == target:
            col = np.zeros(n)
            col[rows] = 1.0
            col[rows.start] = 0.0  # initial row stays out of the fixed effect
            fe_cols.append(col)
    if not fe_cols:
        return base
    return np.column_stack([base] + fe_cols)


def build_regression_view(data: IndividualData, target: int, parents: ParentsLike) -> RegressionView:
    """Assemble the regression view for one (individual, target, parent set).

    Rows stack all courses in order.  Intervention handling: within a course
    whose target is v, the predictor column for v is zeroed everywhere, and
    when the response variable is v itself the common design gains one
    fixed-effect indicator column for that course.
    """
    P = data.num_variables
    if not 1 <= target <= P:
        raise ValueError(f"target {target} outside 1..{P}")
    mask = _as_mask(parents, P)
    members = set_members(mask)
    ys, base, lag, layout = _stacked_designs(data)
    response = ys[:, target - 1].copy()
    common = _common_design_for_target(base, layout, target)
    cols = [m - 1 for m in members]
    model = lag[:, cols] if cols else np.zeros((response.shape[0], 0))
    return RegressionView(response=response, common_design=common, model_design=model)


def _orthonormal_cols(X: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the column space of X, rank-detected at relative
    tolerance RANK_RTOL on the singular values."""
    if X.shape[1] == 0:
        return np.zeros((X.shape[0], 0))
    U, s, _ = np.linalg.svd(X, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((X.shape[0], 0))
    rank = int(np.sum(s > RANK_RTOL * s[0]))
    return U[:, :rank]


def _view_quadratics(view: RegressionView) -> tuple[int, int, int, float, float]:
    """Reduce a view to (n, a, b, Q, R) with a, b effective ranks,
    Q = y'(I-P0)y and R = y'PG y."""
    y = np.asarray(view.response, dtype=np.float64)
    n = y.shape[0]
    U0 = _orthonormal_cols(np.asarray(view.common_design, dtype=np.float64))
    a = U0.shape[1]
    if n <= a + 1:
        raise ValueError(f"need n > a + 1 rows, got n={n}, a={a}")
    y_t = y - U0 @ (U0.T @ y)
    Q = float(y_t @ y_t)
    Xg = np.asarray(view.model_design, dtype=np.float64)
    X_t = Xg - U0 @ (U0.T @ Xg) if Xg.shape[1] else Xg
    Ug = _orthonormal_cols(X_t)
    b = Ug.shape[1]
    z = Ug.T @ y_t
    R = float(z @ z)
    return n, a, b, Q, R


def _log_ml(n: int, a: int, b: int, Q: float, R: float, phi: float) -> float:
    u = phi / (1.0 + phi)
    residual = Q - u * R
    if not residual > 0.0:
        raise NumericalDegeneracyError(
            f"residual quadratic form {residual} is not positive (Q={Q}, R={R}, phi={phi})"
        )
    return -0.5 * b * np.log1p(phi) - 0.5 * (n - a) * np.log(residual)


def log_marginal_likelihood(view: RegressionView, phi: float) -> float:
    """Closed-form log marginal likelihood of a view at g-prior scale phi,
    up to a constant shared by all parent sets of the same (individual,
    target) pair.  Rank-deficient designs are projected onto their actual
    column spaces, with dimensions replaced by effective ranks."""
    if not phi > 0:
        raise ValueError(f"phi must be positive, got {phi}")
    n, a, b, Q, R = _view_quadratics(view)
    return _log_ml(n, a, b, Q, R, phi)


def _phi_scalar(n: int, a: int, b: int, Q: float, R: float, policy: PhiPolicy) -> float:
    if policy.mode == "fixed":
        return float(policy.fixed_value)
    if b == 0 or R <= 0.0:
        return policy.phi_min
    den = ((n - a) - b) * R
    num = (n - a) * R - b * Q
    if den <= 0.0:
        return policy.phi_min
    u = num / den
    if u <= 0.0:
        return policy.phi_min
    if u >= 1.0:
        return policy.phi_max
    return float(min(max(u / (1.0 - u), policy.phi_min), policy.phi_max))


def select_phi(view: RegressionView, policy: PhiPolicy) -> float:
    """Per-model g-prior scale.

    Under empirical Bayes this maximizes the closed-form marginal likelihood
    in u = phi/(1+phi): the interior stationary point is
    u* = ((n-a)R - bQ) / (((n-a) - b) R), mapped back to phi and clamped to
    the policy bounds; when u* does not exist or is non-positive the lower
    bound is returned.
    """
    return _phi_scalar(*_view_quadratics(view), policy)


def _phi_vector(n: int, a: int, b: np.ndarray, Q: float, R: np.ndarray, policy: PhiPolicy) -> np.ndarray:
    if policy.mode == "fixed":
        return np.full(b.shape, float(policy.fixed_value))
    with np.errstate(divide="ignore", invalid="ignore"):
        den = ((n - a) - b) * R
        num = (n - a) * R - b * Q
        u = np.where(den > 0.0, num / den, -np.inf)
    phi = np.full(b.shape, policy.phi_min)
    hi = u >= 1.0
    mid = (u > 0.0) & ~hi
    phi[hi] = policy.phi_max
    phi[mid] = np.clip(u[mid] / (1.0 - u[mid]), policy.phi_min, policy.phi_max)
    phi[(b == 0) | (R <= 0.0)] = policy.phi_min
    return phi


@dataclass(frozen=True, eq=False)
class ScoreTable:
    """Cached log marginal likelihoods, indexed (individual, target variable,
    parent-set position in the canonical space order)."""

    log_scores: np.ndarray  # (J, P, M)
    c: int
    space_hash: str
    individual_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.log_scores.ndim != 3:
            raise ValueError("log_scores must be (J, P, M)")
        if len(self.individual_ids) != self.log_scores.shape[0]:
            raise ValueError("individual_ids length must match J")
        if not np.all(np.isfinite(self.log_scores)):
            raise ValueError("score table entries must be finite")
        self.log_scores.setflags(write=False)

    @property
    def num_individuals(self) -> int:
        return self.log_scores.shape[0]

    @property
    def num_variables(self) -> int:
        return self.log_scores.shape[1]

    @property
    def num_sets(self) -> int:
        return self.log_scores.shape[2]

    @cached_property
    def table_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.space_hash.encode())
        h.update(np.ascontiguousarray(self.log_scores, dtype="<f8").tobytes())
        return h.hexdigest()


def _score_block(payload, jp: tuple[int, int]) -> np.ndarray:
    """Scores for one (individual index, target index) pair over all sets."""
    data, space, policy = payload
    j, p_idx = jp
    individual = data.individuals[j]
    target = p_idx + 1
    ys, base, lag, layout = _stacked_designs(individual)
    common = _common_design_for_target(base, layout, target)
    y = ys[:, p_idx]
    n = y.shape[0]
    U0 = _orthonormal_cols(common)
    a = U0.shape[1]
    if n <= a + 1:
        raise ValueError(
            f"individual {individual.individual_id}, target {target}: "
            f"need n > a + 1 rows, got n={n}, a={a}"
        )
    y_t = y - U0 @ (U0.T @ y)
    Q = float(y_t @ y_t)
    lag_t = lag - U0 @ (U0.T @ lag)

    M = space.size
    out = np.empty(M)
    groups: dict[int, list[int]] = {}
    for s, members in enumerate(space.member_tuples):
        groups.setdefault(len(members), []).append(s)
    for k, positions in groups.items():
        if k == 0:
            out[positions] = _log_ml(n, a, 0, Q, 0.0, policy.phi_min if policy.mode != "fixed" else policy.fixed_value)
            continue
        cols = np.array(
            [[v - 1 for v in space.member_tuples[s]] for s in positions], dtype=np.intp
        )
        designs = np.ascontiguousarray(lag_t[:, cols].transpose(1, 0, 2))  # (N, n, k)
        U, svals, _ = np.linalg.svd(designs, full_matrices=False)
        smax = svals[:, :1]
        keep = svals > RANK_RTOL * np.where(smax > 0, smax, 1.0)
        z = np.einsum("mnk,n->mk", U, y_t)
        R = np.sum(z * z * keep, axis=1)
        b = keep.sum(axis=1)
        phi = _phi_vector(n, a, b, Q, R, policy)
        residual = Q - (phi / (1.0 + phi)) * R
        bad = np.flatnonzero(~(residual > 0.0))
        if bad.size:
            s = positions[int(bad[0])]
            raise NumericalDegeneracyError(
                f"individual {individual.individual_id}, target {target}, "
                f"parent set {space.member_tuples[s]}: residual quadratic form "
                f"{residual[bad[0]]} is not positive"
            )
        out[positions] = -0.5 * b * np.log1p(phi) - 0.5 * (n - a) * np.log(residual)
    return out


def build_score_table(
    data: PopulationDataset,
    space: ParentSpace,
    policy: PhiPolicy = PhiPolicy(),
    workers: int = 1,
) -> ScoreTable:
    """One log marginal likelihood per (individual, target, parent set).

    Cells are independent; ``workers > 1`` computes (individual, target)
    blocks in a forked pool with a deterministic write layout.
    """
    if data.num_variables != space.P:
        raise ValueError(
            f"dataset has P={data.num_variables} but space has P={space.P}"
        )
    J, P, M = data.num_individuals, data.num_variables, space.size
    tasks = [(j, p) for j in range(J) for p in range(P)]
    blocks = _parallel.parallel_map(_score_block, (data, space, policy), tasks, workers)
    table = np.empty((J, P, M))
    for (j, p), block in zip(tasks, blocks):
        table[j, p] = block
    if not np.all(np.isfinite(table)):
        j, p, s = np.argwhere(~np.isfinite(table))[0]
        raise NumericalDegeneracyError(
            f"non-finite score at individual {data.individuals[j].individual_id}, "
            f"target {p + 1}, parent set {space.member_tuples[s]}"
        )
    return ScoreTable(
        log_scores=table,
        c=space.c,
        space_hash=space.canonical_hash,
        individual_ids=tuple(ind.individual_id for ind in data.individuals),
    )


_CACHE_MAGIC = b"PNSCORE1"


def save_score_table(table: ScoreTable, path) -> None:
    """Binary score cache: fixed header (P, J, c, canonical-order hash) and a
    little-endian float64 payload in (J, P, M) order."""
    header = struct.pack(
        "<8sIIII64s",
        _CACHE_MAGIC,
        table.num_variables,
        table.num_individuals,
        table.c,
        table.num_sets,
        table.space_hash.encode(),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(table.log_scores, dtype="<f8").tobytes())


def load_score_table(path, individual_ids: Sequence[str] | None = None) -> ScoreTable:
    with open(path, "rb") as fh:
        raw = fh.read()
    head_size = struct.calcsize("<8sIIII64s")
    if len(raw) < head_size:
        raise ValueError(f"{path}: truncated score cache")
    magic, P, J, c, M, hash_bytes = struct.unpack("<8sIIII64s", raw[:head_size])
    if magic != _CACHE_MAGIC:
        raise ValueError(f"{path}: not a score cache file")
    payload = np.frombuffer(raw[head_size:], dtype="<f8")
    if payload.size != J * P * M:
        raise ValueError(f"{path}: payload size {payload.size} != J*P*M = {J * P * M}")
    ids = tuple(individual_ids) if individual_ids else tuple(f"ind{j + 1}" for j in range(J))
    return ScoreTable(
        log_scores=payload.reshape(J, P, M).astype(np.float64),
        c=int(c),
        space_hash=hash_bytes.decode(),
        individual_ids=ids,
    )


def dump_score_table_csv(table: ScoreTable, path) -> None:
    with open(path, "w") as fh:
        fh.write("individual,target,set_index,log_score\n")
        for j, ind_id in enumerate(table.individual_ids):
            for p in range(table.num_variables):
                for s in range(table.num_sets):
                    fh.write(f"{ind_id},{p + 1},{s},{table.log_scores[j, p, s]:.17g}\n")
