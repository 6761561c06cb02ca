"""ROC-AUC, score gaps, timing overhead and the eigen-solver scaling probe."""
from __future__ import annotations

import gc
import json
import time
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata

MIN_TIMING = 1e-4


class MetricError(ValueError):
    pass


def _check_labels(labels) -> np.ndarray:
    labels = np.asarray(labels)
    if not np.all((labels == 0) | (labels == 1)):
        raise MetricError("labels must be 0/1")
    if labels.sum() == 0 or labels.sum() == labels.size:
        raise MetricError("metric undefined: labels contain a single class")
    return labels.astype(bool)


def roc_auc(scores, labels) -> float:
    """Probability a random anomaly outranks a random normal node, ties counted as 1/2.

    Computed from the Mann-Whitney rank sum with average ranks for ties.
    """
    scores = np.asarray(scores, dtype=np.float64)
    pos = _check_labels(labels)
    if scores.shape != pos.shape:
        raise MetricError("scores and labels differ in length")
    ranks = rankdata(scores, method="average")
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_auc_bruteforce(scores, labels) -> float:
    """O(P*N) pairwise count; the reference for :func:`roc_auc`."""
    scores = np.asarray(scores, dtype=np.float64)
    pos = _check_labels(labels)
    wins = 0.0
    for a in scores[pos]:
        for b in scores[~pos]:
            if a > b:
                wins += 1.0
            elif a == b:
                wins += 0.5
    return wins / (pos.sum() * (~pos).sum())


def score_gap(scores, labels):
    """(mean anomalous score, mean normal score, difference)."""
    scores = np.asarray(scores, dtype=np.float64)
    pos = _check_labels(labels)
    mean_a = float(scores[pos].mean())
    mean_n = float(scores[~pos].mean())
    return mean_a, mean_n, mean_a - mean_n


def minmax(scores) -> np.ndarray:
    scores = np.asarray(scores, dtype=np.float64)
    lo, hi = scores.min(), scores.max()
    if hi == lo:
        return np.zeros_like(scores)
    return (scores - lo) / (hi - lo)


@dataclass
class EvalReport:
    roc_auc: float
    mean_anomalous: float
    mean_normal: float
    gap: float
    train_seconds: float
    eigen_seconds: Optional[float]
    seed: int
    t: int = 0
    method: str = ""
    dataset: str = ""
    normalized_gap: Optional[float] = None

    def to_dict(self) -> dict:
        out = asdict(self)
        if self.eigen_seconds is None:
            del out["eigen_seconds"]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def csv_row(self) -> list:
        """Fields in the batch order method,dataset,seed,t,auc,gap,train_s,eigen_s."""
        return [
            self.method,
            self.dataset,
            self.seed,
            self.t,
            repr(self.roc_auc),
            repr(self.gap),
            f"{self.train_seconds:.6f}",
            "" if self.eigen_seconds is None else f"{self.eigen_seconds:.6f}",
        ]


BATCH_HEADER = ["method", "dataset", "seed", "t", "auc", "gap", "train_s", "eigen_s"]


def evaluate(scores, labels, *, train_seconds=0.0, eigen_seconds=None, seed=0, t=0, method="", dataset="") -> EvalReport:
    mean_a, mean_n, gap = score_gap(scores, labels)
    _, _, ngap = score_gap(minmax(scores), labels)
    return EvalReport(
        roc_auc=roc_auc(scores, labels),
        mean_anomalous=mean_a,
        mean_normal=mean_n,
        gap=gap,
        train_seconds=float(train_seconds),
        eigen_seconds=None if eigen_seconds is None else float(eigen_seconds),
        seed=int(seed),
        t=int(t),
        method=method,
        dataset=dataset,
        normalized_gap=ngap,
    )


@dataclass
class Overhead:
    relative: float
    vanilla_seconds: float
    augmented_seconds: float
    eigen_seconds: float


def overhead_report(vanilla: EvalReport, augmented: EvalReport) -> Overhead:
    """Relative extra wall time of the augmented pipeline: (eigen + train)_aug / train_vanilla - 1."""
    if vanilla.train_seconds <= 0:
        raise MetricError("vanilla training time must be positive")
    eigen = augmented.eigen_seconds or 0.0
    total = augmented.train_seconds + eigen
    return Overhead(total / vanilla.train_seconds - 1.0, vanilla.train_seconds, total, eigen)


def fit_loglog_slope(sizes: Sequence[float], times: Sequence[float]) -> float:
    """Least-squares slope of log(time) against log(size)."""
    x = np.log(np.asarray(sizes, dtype=np.float64))
    y = np.log(np.asarray(times, dtype=np.float64))
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


@dataclass
class ScalingResult:
    sizes: list
    median_seconds: list
    slope: float


def scaling_probe(sizes, t: int = 10, avg_degree: float = 10.0, seeds=(0, 1, 2), blocks: int = 10, tol: float = 1e-10):
    """Time ``top_eigenpairs`` on SBM graphs of growing size and fit the log-log slope.

    Graph generation is excluded from the timing; only the eigen solve is measured.
    """
    from .graph import generate_synthetic, sbm_for_degree
    from .spectral import top_eigenpairs

    sizes = list(sizes)
    seeds = list(seeds)
    if len(sizes) < 3:
        raise MetricError("scaling probe needs at least 3 sizes")
    if len(seeds) < 2:
        raise MetricError("scaling probe needs at least 2 seeds per size")
    medians = []
    for n in sizes:
        p_in, p_out = sbm_for_degree(n, avg_degree, blocks)
        timings = []
        for seed in seeds:
            g = generate_synthetic(n, blocks, p_in, p_out, 1, seed=seed).graph
            start = time.perf_counter()
            top_eigenpairs(g, t, tol, seed=seed)
            timings.append(time.perf_counter() - start)
        med = float(np.median(timings))
        if med < MIN_TIMING:
            raise MetricError(f"eigen time {med:.2e}s at n={n} is below timer resolution; use larger sizes")
        medians.append(med)
    return ScalingResult(sizes, medians, fit_loglog_slope(sizes, medians))


@dataclass
class OverheadResult:
    relative: float
    vanilla_seconds: list
    augmented_seconds: list
    eigen_seconds: list


def overhead_probe(n: int = 10_000, avg_degree: float = 10.0, t: int = 10, d: int = 32, runs: int = 3,
                   blocks: int = 10, epochs: int = 100, seed: int = 0, model: str = "dominant"):
    """Median wall time of augmented (eigen + train) against vanilla training on one SBM graph.

    Vanilla and augmented runs are interleaved, alternating which goes first, so
    drift in machine load and allocator state hits both sides.
    """
    from .alloc import pin_allocator
    from .graph import generate_synthetic, sbm_for_degree
    from .models import TrainConfig, train

    if runs < 1:
        raise MetricError("runs must be >= 1")
    pin_allocator()  # page-fault churn otherwise dominates the run-to-run spread
    p_in, p_out = sbm_for_degree(n, avg_degree, blocks)
    data = generate_synthetic(n, blocks, p_in, p_out, d, seed=seed)
    vanilla_cfg = TrainConfig(model=model, epochs=epochs, seed=seed)
    aug_cfg = TrainConfig(model=model, epochs=epochs, seed=seed, t=t, eigen_scale="unit_rms")
    van, aug, eig = [], [], []
    for i in range(runs):
        order = (vanilla_cfg, aug_cfg) if i % 2 == 0 else (aug_cfg, vanilla_cfg)
        for cfg in order:
            gc.collect()
            res = train(data, cfg).scores
            if cfg is vanilla_cfg:
                van.append(res.train_seconds)
            else:
                aug.append(res.train_seconds + res.eigen_seconds)
                eig.append(res.eigen_seconds)
    rel = float(np.median(aug) / np.median(van) - 1.0)
    return OverheadResult(rel, van, aug, eig)
