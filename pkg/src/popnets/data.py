"""Interventional multi-individual time-course data: containers, file I/O,
and the synthetic population generator.

A dataset holds J individuals, each observed through one or more time
courses of the same P variables.  A course may carry a single intervention
target that is inhibited for the whole course.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .graphs import Network

__all__ = [
    "TimeCourse",
    "IndividualData",
    "PopulationDataset",
    "GenerationRegime",
    "GroundTruth",
    "DatasetFormatError",
    "generate_population",
    "contaminate",
    "spectral_radius",
    "load_dataset",
    "save_dataset",
    "load_ground_truth",
    "save_ground_truth",
]


class DatasetFormatError(ValueError):
    """Raised when a dataset file does not conform to the documented schema."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeCourse:
    """One time course: an (n, P) matrix of observations, rows ordered by
    time, plus an optional whole-course intervention target (1-based)."""

    values: np.ndarray
    intervention_target: Optional[int] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _readonly(self.values))
        if self.values.ndim != 2:
            raise ValueError("time-course values must be a 2-d array")
        n, P = self.values.shape
        if n < 2:
            raise ValueError(f"a time course needs at least 2 time points, got {n}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("time-course values must be finite")
        v = self.intervention_target
        if v is not None and not 1 <= v <= P:
            raise ValueError(f"intervention target {v} outside 1..{P}")

    @property
    def num_timepoints(self) -> int:
        return self.values.shape[0]

    @property
    def num_variables(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class IndividualData:
    """All courses observed on one individual."""

    individual_id: str
    courses: tuple[TimeCourse, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "courses", tuple(self.courses))
        if not self.courses:
            raise ValueError("an individual needs at least one time course")
        P = self.courses[0].num_variables
        if any(c.num_variables != P for c in self.courses):
            raise ValueError("all courses of an individual must share P")

    @property
    def num_variables(self) -> int:
        return self.courses[0].num_variables

    @property
    def num_samples(self) -> int:
        """Total row count across courses."""
        return sum(c.num_timepoints for c in self.courses)


@dataclass(frozen=True)
class PopulationDataset:
    """A population of individuals sharing the same P variables."""

    individuals: tuple[IndividualData, ...]
    variable_names: Optional[tuple[str, ...]] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "individuals", tuple(self.individuals))
        if not self.individuals:
            raise ValueError("dataset needs at least one individual")
        P = self.individuals[0].num_variables
        if any(ind.num_variables != P for ind in self.individuals):
            raise ValueError("all individuals must share P")
        if self.variable_names is not None:
            names = tuple(self.variable_names)
            if len(names) != P:
                raise ValueError("variable_names length must equal P")
            object.__setattr__(self, "variable_names", names)

    @property
    def num_variables(self) -> int:
        return self.individuals[0].num_variables

    @property
    def num_individuals(self) -> int:
        return len(self.individuals)


@dataclass(frozen=True)
class GenerationRegime:
    """Parameters of the synthetic data-generating process."""

    J: int
    n: int
    E: int
    P: int
    sigma: float
    rho: float
    h_eta: float
    h_lambda: float
    interventions: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("J", "n", "E", "P"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be a positive integer")
        if self.n < 2:
            raise ValueError("n must be >= 2 (at least one transition)")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if not 0 < self.rho <= self.P:
            raise ValueError("rho must satisfy 0 < rho/P <= 1")
        for name in ("h_eta", "h_lambda"):
            h = getattr(self, name)
            if not 0.5 <= h <= 1.0:
                raise ValueError(f"{name} must lie in [0.5, 1]")
        if self.seed < 0:
            raise ValueError("seed must be a non-negative integer")


@dataclass(frozen=True)
class GroundTruth:
    """Networks and regression parameters behind a generated dataset."""

    latent: Network
    individuals: tuple[Network, ...]
    prior: Network
    betas: tuple[np.ndarray, ...]  # (P, P) each; betas[j][i-1, p-1] multiplies y_i(t-1) in y_p(t)
    alphas: tuple[np.ndarray, ...]  # (P,) each

    def __post_init__(self) -> None:
        object.__setattr__(self, "individuals", tuple(self.individuals))
        object.__setattr__(self, "betas", tuple(_readonly(b) for b in self.betas))
        object.__setattr__(self, "alphas", tuple(_readonly(a) for a in self.alphas))


def spectral_radius(matrix: np.ndarray, tol: float = 1e-12, max_iter: int = 1000) -> float:
    """Largest eigenvalue modulus, by power iteration with a dense fallback.

    Power iteration stops when successive estimates agree to relative ``tol``;
    it fails to settle when the dominant eigenvalues are a complex pair, in
    which case the dense eigenvalue routine decides.
    """
    A = np.asarray(matrix, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if not np.any(A):
        return 0.0
    rng = np.random.default_rng(0)
    x = rng.standard_normal(A.shape[0])
    x /= np.linalg.norm(x)
    estimate = 0.0
    for _ in range(max_iter):
        y = A @ x
        norm = np.linalg.norm(y)
        if norm == 0.0:
            break  # hit the nilpotent kernel; dense routine decides
        x = y / norm
        if abs(norm - estimate) <= tol * max(norm, 1e-300):
            return float(norm)
        estimate = norm
    return float(np.max(np.abs(np.linalg.eigvals(A))))


def _flip_status(adj: np.ndarray, keep_prob: float, rng: np.random.Generator) -> np.ndarray:
    """Keep each edge-slot status with probability keep_prob, else flip it."""
    keep = rng.random(adj.shape) < keep_prob
    return np.where(keep, adj, 1 - adj).astype(np.uint8)


def generate_population(regime: GenerationRegime) -> tuple[PopulationDataset, GroundTruth]:
    """Draw a latent network, individual variations, parameters, a prior
    network, and autoregressive time courses.

    All randomness comes from one generator seeded with ``regime.seed``; the
    draw order is fixed (latent edges, per-individual edge retentions, betas,
    alphas, prior retentions, initial conditions, noise, intervention
    targets) so that fixtures stay stable across runs.

    The latent network is edge-wise independent with inclusion probability
    rho/P over all P*P directed slots (self-loops included).  Each individual
    keeps each slot status independently with probability h_lambda; the prior
    network keeps each slot status with probability h_eta.  Nonzero
    coefficients are drawn from the two-component mixture
    0.5*N(-1, 0.1^2) + 0.5*N(1, 0.1^2) and each coefficient matrix is then
    divided by its spectral radius (skipped when the radius is 0).  Courses
    follow y(t) = alpha + y(t-1) @ beta + noise from y(1) ~ N(0, I).  Under
    interventions each course gets a uniform random target whose outgoing
    coefficients are zeroed for the whole course; the target's own trajectory
    is generated normally with a zero fixed effect.
    """
    J, n, E, P = regime.J, regime.n, regime.E, regime.P
    rng = np.random.default_rng(regime.seed)

    latent_adj = (rng.random((P, P)) < regime.rho / P).astype(np.uint8)
    individual_adjs = [_flip_status(latent_adj, regime.h_lambda, rng) for _ in range(J)]

    betas = []
    for j in range(J):
        sign = np.where(rng.random((P, P)) < 0.5, -1.0, 1.0)
        coeff = sign + rng.normal(0.0, 0.1, size=(P, P))
        beta = coeff * individual_adjs[j]
        radius = spectral_radius(beta)
        if radius > 0.0:
            beta = beta / radius
        betas.append(beta)

    alphas = [rng.standard_normal(P) for _ in range(J)]
    prior_adj = _flip_status(latent_adj, regime.h_eta, rng)
    initials = rng.standard_normal((J, E, P))
    noise = regime.sigma * rng.standard_normal((J, E, n - 1, P))
    if regime.interventions:
        targets = rng.integers(1, P + 1, size=(J, E))
    else:
        targets = None

    individuals = []
    for j in range(J):
        courses = []
        for e in range(E):
            target = int(targets[j, e]) if targets is not None else None
            beta = betas[j]
            if target is not None:
                beta = beta.copy()
                beta[target - 1, :] = 0.0  # remove the inhibited variable's outgoing influence
            values = np.empty((n, P))
            values[0] = initials[j, e]
            for t in range(1, n):
                values[t] = alphas[j] + values[t - 1] @ beta + noise[j, e, t - 1]
            courses.append(TimeCourse(values=values, intervention_target=target))
        individuals.append(IndividualData(individual_id=f"ind{j + 1}", courses=tuple(courses)))

    truth = GroundTruth(
        latent=Network.from_adjacency(latent_adj),
        individuals=tuple(Network.from_adjacency(a) for a in individual_adjs),
        prior=Network.from_adjacency(prior_adj),
        betas=tuple(betas),
        alphas=tuple(alphas),
    )
    return PopulationDataset(individuals=tuple(individuals)), truth


def contaminate(data: PopulationDataset, seed: int) -> PopulationDataset:
    """Outlier-and-batch-effect corruption of a dataset.

    Adds i.i.d. noise from the mixture 0.95*N(0, 0.1^2) + 0.05*N(0, 10^2) to
    every observation (draws in dataset order), then replaces one uniformly
    chosen individual's entire data with standard Gaussian white noise.
    Returns a new dataset; the input is untouched.
    """
    rng = np.random.default_rng(seed)
    noisy = []
    for ind in data.individuals:
        courses = []
        for course in ind.courses:
            shape = course.values.shape
            scale = np.where(rng.random(shape) < 0.05, 10.0, 0.1)
            values = course.values + scale * rng.standard_normal(shape)
            courses.append(TimeCourse(values=values, intervention_target=course.intervention_target))
        noisy.append(IndividualData(individual_id=ind.individual_id, courses=tuple(courses)))

    victim = int(rng.integers(data.num_individuals))
    blank_courses = []
    for course in noisy[victim].courses:
        values = rng.standard_normal(course.values.shape)
        blank_courses.append(TimeCourse(values=values, intervention_target=course.intervention_target))
    noisy[victim] = IndividualData(
        individual_id=noisy[victim].individual_id, courses=tuple(blank_courses)
    )
    return PopulationDataset(individuals=tuple(noisy), variable_names=data.variable_names)


# ---------------------------------------------------------------------------
# File formats.
#
# CSV schema: header `individual,course,time,intervention_target,v1,...,vP`;
# time is 1-based and contiguous within a course; intervention_target is 0
# for none and must be constant within a course.  The JSON format mirrors
# PopulationDataset directly.
# ---------------------------------------------------------------------------

_FMT = "%.17g"


def save_dataset(data: PopulationDataset, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".json":
        _save_dataset_json(data, path)
    else:
        _save_dataset_csv(data, path)


def load_dataset(path) -> PopulationDataset:
    path = Path(path)
    if path.suffix.lower() == ".json":
        return _load_dataset_json(path)
    return _load_dataset_csv(path)


def _save_dataset_csv(data: PopulationDataset, path: Path) -> None:
    P = data.num_variables
    names = data.variable_names or tuple(f"v{i}" for i in range(1, P + 1))
    with open(path, "w") as fh:
        fh.write("individual,course,time,intervention_target," + ",".join(names) + "\n")
        for ind in data.individuals:
            for e, course in enumerate(ind.courses, start=1):
                target = course.intervention_target or 0
                for t in range(course.num_timepoints):
                    row = course.values[t]
                    fh.write(
                        f"{ind.individual_id},{e},{t + 1},{target},"
                        + ",".join(_FMT % x for x in row)
                        + "\n"
                    )


def _load_dataset_csv(path: Path) -> PopulationDataset:
    with open(path) as fh:
        lines = fh.read().splitlines()
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise DatasetFormatError(f"{path}: no data rows")
    header = lines[0].split(",")
    if len(header) < 5 or header[:4] != ["individual", "course", "time", "intervention_target"]:
        raise DatasetFormatError(
            f"{path}: row 1: header must start with individual,course,time,intervention_target"
        )
    names = tuple(h.strip() for h in header[4:])
    P = len(names)
    if len(lines) == 1:
        raise DatasetFormatError(f"{path}: no data rows")

    # (individual, course) -> {time: (row values, target)}; insertion order kept
    courses: dict[tuple[str, int], dict[int, tuple[list[float], int]]] = {}
    order: list[str] = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != 4 + P:
            raise DatasetFormatError(
                f"{path}: row {lineno}: expected {4 + P} fields, got {len(fields)}"
            )
        ind_id = fields[0]
        try:
            course_id = int(fields[1])
            time = int(fields[2])
            target = int(fields[3])
            values = [float(x) for x in fields[4:]]
        except ValueError as exc:
            raise DatasetFormatError(f"{path}: row {lineno}: {exc}") from None
        if target < 0 or target > P:
            raise DatasetFormatError(
                f"{path}: row {lineno}: intervention target {target} outside 0..{P}"
            )
        if ind_id not in order:
            order.append(ind_id)
        key = (ind_id, course_id)
        rows = courses.setdefault(key, {})
        if time in rows:
            raise DatasetFormatError(f"{path}: row {lineno}: duplicate time {time}")
        rows[time] = (values, target)

    individuals = []
    for ind_id in order:
        ind_courses = []
        for (iid, course_id), rows in courses.items():
            if iid != ind_id:
                continue
            times = sorted(rows)
            if times != list(range(1, len(times) + 1)):
                raise DatasetFormatError(
                    f"{path}: individual {ind_id} course {course_id}: "
                    f"time indices {times} are not contiguous from 1"
                )
            targets = {rows[t][1] for t in times}
            if len(targets) != 1:
                raise DatasetFormatError(
                    f"{path}: individual {ind_id} course {course_id}: "
                    "intervention target varies within the course"
                )
            target = targets.pop()
            values = np.array([rows[t][0] for t in times])
            try:
                ind_courses.append(
                    TimeCourse(values=values, intervention_target=target or None)
                )
            except ValueError as exc:
                raise DatasetFormatError(
                    f"{path}: individual {ind_id} course {course_id}: {exc}"
                ) from None
        individuals.append(IndividualData(individual_id=ind_id, courses=tuple(ind_courses)))
    return PopulationDataset(individuals=tuple(individuals), variable_names=names)


def _dataset_json_dict(data: PopulationDataset) -> dict:
    return {
        "P": data.num_variables,
        "variable_names": list(data.variable_names) if data.variable_names else None,
        "individuals": [
            {
                "id": ind.individual_id,
                "courses": [
                    {
                        "intervention_target": c.intervention_target,
                        "values": c.values.tolist(),
                    }
                    for c in ind.courses
                ],
            }
            for ind in data.individuals
        ],
    }


def _save_dataset_json(data: PopulationDataset, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(_dataset_json_dict(data), fh)
        fh.write("\n")


def _load_dataset_json(path: Path) -> PopulationDataset:
    with open(path) as fh:
        obj = json.load(fh)
    try:
        individuals = tuple(
            IndividualData(
                individual_id=str(ind["id"]),
                courses=tuple(
                    TimeCourse(
                        values=np.array(c["values"], dtype=np.float64),
                        intervention_target=c["intervention_target"],
                    )
                    for c in ind["courses"]
                ),
            )
            for ind in obj["individuals"]
        )
        names = obj.get("variable_names")
        return PopulationDataset(
            individuals=individuals,
            variable_names=tuple(names) if names else None,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"{path}: {exc}") from None


def save_ground_truth(truth: GroundTruth, path) -> None:
    obj = {
        "latent": truth.latent.to_json_dict(),
        "individuals": [g.to_json_dict() for g in truth.individuals],
        "prior": truth.prior.to_json_dict(),
        "betas": [b.tolist() for b in truth.betas],
        "alphas": [a.tolist() for a in truth.alphas],
    }
    with open(path, "w") as fh:
        json.dump(obj, fh)
        fh.write("\n")


def load_ground_truth(path) -> GroundTruth:
    with open(path) as fh:
        obj = json.load(fh)
    return GroundTruth(
        latent=Network.from_json_dict(obj["latent"]),
        individuals=tuple(Network.from_json_dict(g) for g in obj["individuals"]),
        prior=Network.from_json_dict(obj["prior"]),
        betas=tuple(np.array(b) for b in obj["betas"]),
        alphas=tuple(np.array(a) for a in obj["alphas"]),
    )
