"""Scoring estimator output against ground truth, and batch experiments.

Three tasks are scored with the area under the ROC curve over edge
rankings: recovering the latent network, recovering the individual networks
(AUR averaged over individuals), and detecting individual-specific features
(edges in the symmetric difference between an individual network and the
latent one, ranked by the feature statistics).  Sweeps expand a master seed
deterministically into per-replicate seeds, so a rerun reproduces every
dataset and every number.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .data import GenerationRegime, GroundTruth, contaminate, generate_population
from .engine import EdgePosterior, Hyperparameters
from .estimators import EstimatorKind, run_estimator
from .graphs import enumerate_parent_space
from .likelihood import PhiPolicy, build_score_table

__all__ = [
    "TASKS",
    "UndefinedAurError",
    "aur",
    "task_aur",
    "analytic_prior_baseline",
    "AurReport",
    "RegimeSweep",
    "replicate_seeds",
    "run_sweep",
    "write_sweep_ledger",
    "write_sweep_summary",
    "sensitivity_grid",
    "write_grid_gnuplot",
]

TASKS = ("latent", "individual", "feature")

_SCORE_BASED = {
    EstimatorKind.JNI,
    EstimatorKind.ANI,
    EstimatorKind.INI,
    EstimatorKind.ENI,
}


class UndefinedAurError(ValueError):
    """AUR is undefined without at least one positive and one negative."""


def aur(scores, truth) -> float:
    """Area under the ROC curve of a score ranking against binary labels:
    the probability that a random positive outscores a random negative,
    ties counting one half.  Computed by the rank-sum identity."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    t = np.asarray(truth).ravel().astype(bool)
    if s.shape != t.shape:
        raise ValueError(f"scores shape {s.shape} != labels shape {t.shape}")
    n_pos = int(t.sum())
    n_neg = t.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAurError(
            f"AUR undefined with {n_pos} positives and {n_neg} negatives"
        )
    ranks = rankdata(s)
    return float((ranks[t].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def task_aur(
    posterior: EdgePosterior,
    truth: GroundTruth,
    task: str,
    feature_mode: str = "pooled",
) -> float:
    """AUR of a posterior on one task.

    latent: latent marginals against the true latent network over all P^2
    slots.  individual: mean over individuals of their marginal AURs;
    individuals whose network leaves the AUR undefined are skipped with a
    warning.  feature: feature statistics against indicators of the
    symmetric difference between each individual network and the latent one,
    pooled over (individual, source, target) by default or averaged per
    individual with ``feature_mode="per_individual"``.
    """
    if task == "latent":
        return aur(posterior.latent, truth.latent.adjacency())
    if task == "individual":
        values = []
        for j, net in enumerate(truth.individuals):
            try:
                values.append(aur(posterior.individual[j], net.adjacency()))
            except UndefinedAurError as exc:
                warnings.warn(f"individual {j + 1}: {exc}; skipped", stacklevel=2)
        if not values:
            raise UndefinedAurError("no individual network admits an AUR")
        return float(np.mean(values))
    if task == "feature":
        latent_adj = truth.latent.adjacency()
        labels = np.stack([net.adjacency() ^ latent_adj for net in truth.individuals])
        if feature_mode == "pooled":
            return aur(posterior.features, labels)
        if feature_mode == "per_individual":
            values = []
            for j in range(labels.shape[0]):
                try:
                    values.append(aur(posterior.features[j], labels[j]))
                except UndefinedAurError as exc:
                    warnings.warn(f"individual {j + 1}: {exc}; skipped", stacklevel=2)
            if not values:
                raise UndefinedAurError("no individual admits a feature AUR")
            return float(np.mean(values))
        raise ValueError(f"unknown feature mode {feature_mode!r}")
    raise ValueError(f"unknown task {task!r}")


def analytic_prior_baseline(h_eta: float, h_lambda: float, task: str) -> Optional[float]:
    """Mean AUR attained by prior-only inference: h_eta on the latent task
    and 1 - h_eta - h_lambda + 2 h_eta h_lambda on the individual task.
    The feature task has no analytic baseline (returns None)."""
    for name, h in (("h_eta", h_eta), ("h_lambda", h_lambda)):
        if not 0.0 <= h <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {h}")
    if task == "latent":
        return h_eta
    if task == "individual":
        return 1.0 - h_eta - h_lambda + 2.0 * h_eta * h_lambda
    if task == "feature":
        return None
    raise ValueError(f"unknown task {task!r}")


@dataclass(frozen=True)
class AurReport:
    task: str
    estimator: EstimatorKind
    mean_aur: float
    std_error: float
    replicates: int
    regime_index: int = 0


@dataclass(frozen=True)
class RegimeSweep:
    """A batch experiment: regimes x estimators x replicates, with the
    inference settings shared across cells."""

    regimes: tuple[GenerationRegime, ...]
    estimators: tuple[EstimatorKind, ...]
    replicates: int
    master_seed: int
    eta: float = 1.0
    lam: float = 4.0
    c: int = 3
    eni_threshold: float = 0.5
    phi_policy: PhiPolicy = field(default_factory=PhiPolicy)
    contaminate: bool = False
    feature_mode: str = "pooled"

    def __post_init__(self) -> None:
        object.__setattr__(self, "regimes", tuple(self.regimes))
        object.__setattr__(
            self, "estimators", tuple(EstimatorKind(e) for e in self.estimators)
        )
        if self.replicates <= 0:
            raise ValueError("replicates must be positive")

    @property
    def hyperparameters(self) -> Hyperparameters:
        return Hyperparameters(eta=self.eta, lam=self.lam, c=self.c, phi_policy=self.phi_policy)


def replicate_seeds(master_seed: int, regime_index: int, replicate: int) -> tuple[int, int]:
    """Deterministic (generation seed, contamination seed) for one cell."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(regime_index, replicate))
    gen, contam = ss.generate_state(2)
    return int(gen), int(contam)


def _sweep_cell(sweep: RegimeSweep, regime_index: int, replicate: int, workers: int):
    """All (estimator, task) AUR values for one generated dataset."""
    regime = sweep.regimes[regime_index]
    gen_seed, contam_seed = replicate_seeds(sweep.master_seed, regime_index, replicate)
    data, truth = generate_population(replace(regime, seed=gen_seed))
    if sweep.contaminate:
        data = contaminate(data, contam_seed)
    hp = sweep.hyperparameters
    space = None
    scores = None
    rows = []
    for estimator in sweep.estimators:
        if estimator in _SCORE_BASED and scores is None:
            space = enumerate_parent_space(regime.P, sweep.c)
            scores = build_score_table(data, space, sweep.phi_policy, workers=workers)
        try:
            posterior = run_estimator(
                estimator,
                data,
                truth.prior,
                hp,
                threshold=sweep.eni_threshold,
                space=space,
                scores=scores,
                workers=workers,
            )
        except Exception as exc:
            for task in TASKS:
                rows.append((estimator, task, None, f"{type(exc).__name__}: {exc}"))
            continue
        for task in TASKS:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    value = task_aur(posterior, truth, task, sweep.feature_mode)
                rows.append((estimator, task, value, None))
            except UndefinedAurError as exc:
                rows.append((estimator, task, None, str(exc)))
    return rows


def run_sweep(
    sweep: RegimeSweep,
    workers: int = 1,
    ledger_path=None,
    summary_path=None,
    verbose: bool = False,
) -> list[AurReport]:
    """Run every (regime, replicate, estimator, task) cell and aggregate to
    mean AUR with standard errors.  Undefined or failed cells are excluded
    from the aggregates; their count is reported in the ledger as empty AUR
    fields.  Fully deterministic given the sweep definition."""
    ledger_rows = []
    values: dict[tuple[int, EstimatorKind, str], list[float]] = {}
    skipped: dict[tuple[int, EstimatorKind, str], int] = {}
    for regime_index, regime in enumerate(sweep.regimes):
        for replicate in range(sweep.replicates):
            for estimator, task, value, note in _sweep_cell(
                sweep, regime_index, replicate, workers
            ):
                ledger_rows.append(
                    _ledger_row(regime, estimator, task, replicate, value, note)
                )
                key = (regime_index, estimator, task)
                if value is None:
                    skipped[key] = skipped.get(key, 0) + 1
                else:
                    values.setdefault(key, []).append(value)
        if verbose:
            print(f"regime {regime_index + 1}/{len(sweep.regimes)} done")

    reports = []
    for regime_index in range(len(sweep.regimes)):
        for estimator in sweep.estimators:
            for task in TASKS:
                key = (regime_index, estimator, task)
                vals = values.get(key, [])
                n_skip = skipped.get(key, 0)
                if n_skip:
                    warnings.warn(
                        f"regime {regime_index}, {estimator.value}, {task}: "
                        f"{n_skip} replicate(s) excluded",
                        stacklevel=2,
                    )
                if not vals:
                    continue
                arr = np.array(vals)
                stderr = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
                reports.append(
                    AurReport(
                        task=task,
                        estimator=estimator,
                        mean_aur=float(arr.mean()),
                        std_error=stderr,
                        replicates=arr.size,
                        regime_index=regime_index,
                    )
                )
    if ledger_path is not None:
        write_sweep_ledger(ledger_rows, ledger_path)
    if summary_path is not None:
        write_sweep_summary(sweep, reports, summary_path)
    return reports


_REGIME_COLS = ("J", "n", "E", "P", "sigma", "rho", "h_eta", "h_lambda", "interventions")


def _ledger_row(regime, estimator, task, replicate, value, note):
    return {
        "J": regime.J,
        "n": regime.n,
        "E": regime.E,
        "P": regime.P,
        "sigma": regime.sigma,
        "rho": regime.rho,
        "h_eta": regime.h_eta,
        "h_lambda": regime.h_lambda,
        "interventions": int(regime.interventions),
        "estimator": estimator.value,
        "task": task,
        "replicate": replicate,
        "aur": value,
        "note": note or "",
    }


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return "%.17g" % x
    return str(x)


def write_sweep_ledger(rows: Sequence[dict], path) -> None:
    cols = _REGIME_COLS + ("estimator", "task", "replicate", "aur", "note")
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in rows:
            fields = [_fmt(row[c]) for c in cols]
            fields[-1] = fields[-1].replace(",", ";").replace("\n", " ")
            fh.write(",".join(fields) + "\n")


def write_sweep_summary(sweep: RegimeSweep, reports: Sequence[AurReport], path) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(_REGIME_COLS) + ",estimator,task,mean_aur,std_error,replicates\n")
        for report in reports:
            regime = sweep.regimes[report.regime_index]
            fh.write(
                ",".join(
                    _fmt(v)
                    for v in (
                        regime.J,
                        regime.n,
                        regime.E,
                        regime.P,
                        regime.sigma,
                        regime.rho,
                        regime.h_eta,
                        regime.h_lambda,
                        int(regime.interventions),
                        report.estimator.value,
                        report.task,
                        report.mean_aur,
                        report.std_error,
                        report.replicates,
                    )
                )
                + "\n"
            )


def sensitivity_grid(
    regime: GenerationRegime,
    etas: Sequence[float],
    lams: Sequence[float],
    replicates: int,
    master_seed: int,
    c: int = 3,
    estimator: EstimatorKind = EstimatorKind.JNI,
    task: str = "latent",
    phi_policy: PhiPolicy = PhiPolicy(),
    workers: int = 1,
) -> np.ndarray:
    """Mean AUR over replicates at every (eta, lambda) grid point.

    The score table is built once per replicate and shared across the grid,
    so the grid cost is pure inference.
    """
    out = np.zeros((len(etas), len(lams)))
    space = enumerate_parent_space(regime.P, c)
    for replicate in range(replicates):
        gen_seed, _ = replicate_seeds(master_seed, 0, replicate)
        data, truth = generate_population(replace(regime, seed=gen_seed))
        scores = build_score_table(data, space, phi_policy, workers=workers)
        for ei, eta in enumerate(etas):
            for li, lam in enumerate(lams):
                hp = Hyperparameters(eta=eta, lam=lam, c=c, phi_policy=phi_policy)
                posterior = run_estimator(
                    estimator, data, truth.prior, hp,
                    space=space, scores=scores, workers=workers,
                )
                out[ei, li] += task_aur(posterior, truth, task)
    return out / replicates


def write_grid_gnuplot(etas: Sequence[float], lams: Sequence[float], values: np.ndarray, path) -> None:
    """Write an (eta, lambda, value) surface as gnuplot-style blocks: one
    line per point, blank line between eta blocks."""
    with open(path, "w") as fh:
        fh.write("# eta lambda mean_aur\n")
        for ei, eta in enumerate(etas):
            for li, lam in enumerate(lams):
                fh.write(f"{_fmt(float(eta))} {_fmt(float(lam))} {_fmt(float(values[ei, li]))}\n")
            fh.write("\n")
