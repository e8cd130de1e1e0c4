"""Experiment runner: end-to-end pipelines over simulated data with
reproducible seeds, paired algorithm comparisons, and the minimal-k search.

Outputs are deterministic byte for byte for a given config: records carry
no wall-clock fields (timings go to the in-memory records and stderr only)
and the JSON summary is key-sorted.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from kslog.averaging import G_STAR, GridParams
from kslog.distances import DistanceTable, uncorrected_table
from kslog.errors import ConfigError, ReconstructionFailure
from kslog.forests import forest_reconstruct
from kslog.homogeneous import reconstruct_homogeneous
from kslog.models import resolve_model
from kslog.simulate import sample_alignment
from kslog.trees import (Phylogeny, UnrootedTopology, homogeneous_phylogeny,
                         random_grid_phylogeny, random_ultrametric_phylogeny,
                         rf_distance)
from kslog.wpgma import wpgma

__all__ = ["SPEC_VERSION", "ExperimentConfig", "ExperimentRecord",
           "run_experiment", "compare_algorithms", "calibrate_min_k",
           "write_records_csv", "summary_json", "neighbor_joining",
           "sign_test_p"]

SPEC_VERSION = "1"

_FAMILIES = ("homogeneous", "random", "ultrametric")
_ALGORITHMS = ("cherry", "forest", "wpgma", "nj")


@dataclass(frozen=True)
class ExperimentConfig:
    model: str = "cfn"
    family: str = "homogeneous"
    levels: int | None = None
    n_leaves: int | None = None
    edge_length: float | None = None
    edge_min: float = 0.1
    edge_max: float = 0.3
    delta: float = 0.05
    k: tuple = (1000,)
    replicates: int = 10
    seed: int = 0
    algorithm: str = "cherry"
    diameter: float | None = None
    band: float = 6.0
    gamma: float = 3.5

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)  # type: ignore[attr-defined]
        extra = set(obj) - known - {"spec_version"}
        if extra:
            raise ConfigError(f"unknown config fields: {sorted(extra)}")
        kwargs = {k: v for k, v in obj.items() if k in known}
        if "k" in kwargs:
            kwargs["k"] = tuple(kwargs["k"])
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def validate(self):
        problems = []
        if self.family not in _FAMILIES:
            problems.append(f"family: must be one of {_FAMILIES}")
        if self.algorithm not in _ALGORITHMS:
            problems.append(f"algorithm: must be one of {_ALGORITHMS}")
        if self.family == "homogeneous":
            if self.levels is None or self.levels < 2:
                problems.append("levels: required (>= 2) for the homogeneous family")
        elif self.n_leaves is None or self.n_leaves < 4:
            problems.append("n_leaves: required (>= 4) for this family")
        if not self.k or any(int(x) < 1 for x in self.k):
            problems.append("k: needs positive site counts")
        if self.replicates < 0:
            problems.append("replicates: must be >= 0")
        if not 0.0 < self.delta <= self.edge_min <= self.edge_max:
            problems.append("delta/edge_min/edge_max: need 0 < delta <= edge_min <= edge_max")
        if self.algorithm in ("cherry", "forest") and self.edge_max >= G_STAR:
            problems.append(
                f"edge_max: must be below ln(sqrt(2)) ~ {G_STAR:.4f} "
                "for the averaging pipeline")
        if self.edge_length is not None:
            m = round(self.edge_length / self.delta)
            if abs(self.edge_length - m * self.delta) > 1e-9:
                problems.append("edge_length: must be a multiple of delta")
            if not self.edge_min - 1e-12 <= self.edge_length <= self.edge_max + 1e-12:
                problems.append("edge_length: outside [edge_min, edge_max]")
        if self.algorithm == "cherry" and self.family != "homogeneous":
            problems.append("algorithm: cherry requires the homogeneous family")
        if problems:
            raise ConfigError("; ".join(problems))

    def grid_params(self) -> GridParams:
        return GridParams.defaults(self.delta, self.edge_min, self.edge_max,
                                   diameter=self.diameter, band=self.band)

    def tree_for(self, replicate: int) -> Phylogeny:
        if self.family == "homogeneous":
            if self.edge_length is not None:
                return homogeneous_phylogeny(self.levels, self.edge_length)
            rng = _rng(self.seed, replicate, 1)
            lo = math.ceil(self.edge_min / self.delta - 1e-9)
            hi = math.floor(self.edge_max / self.delta + 1e-9)
            n_edges = 2 ** (self.levels + 1) - 2
            lengths = rng.integers(lo, hi + 1, size=n_edges) * self.delta
            return homogeneous_phylogeny(self.levels, lengths)
        if self.family == "random":
            return random_grid_phylogeny(self.n_leaves, self.delta,
                                         self.edge_min, self.edge_max,
                                         _rng(self.seed, replicate, 2))
        return random_ultrametric_phylogeny(self.n_leaves, self.edge_min,
                                            self.edge_max,
                                            _rng(self.seed, replicate, 3))

    def as_dict(self) -> dict:
        out = asdict(self)
        out["k"] = list(self.k)
        out["spec_version"] = SPEC_VERSION
        return out


def _rng(seed: int, replicate: int, tag: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(tag, replicate)))


@dataclass
class ExperimentRecord:
    seed: int
    replicate: int
    n: int
    k: int
    algorithm: str
    rf: int              # -1 when the driver declared failure
    success: bool
    failure: str = ""
    wall_time_s: float = 0.0


# ----------------------------------------------------------------------
# Single replicates
# ----------------------------------------------------------------------

def neighbor_joining(tau: np.ndarray) -> UnrootedTopology:
    """Textbook agglomeration on plain leaf distances: the leaf-only
    baseline. Saturated entries are capped just above the largest finite
    one."""
    tau = np.asarray(tau, dtype=np.float64)
    n = tau.shape[0]
    if n < 4:
        raise ValueError("need at least 4 leaves")
    size = 2 * n - 2
    d = np.zeros((size, size))
    d[:n, :n] = tau
    finite = d[:n, :n][np.isfinite(tau)]
    cap = (float(finite.max()) if finite.size else 0.0) + 1.0
    d[:n, :n][~np.isfinite(tau)] = cap
    nodes = list(range(n))
    label = {i: i for i in range(n)}
    nxt = n
    edges = []
    while len(nodes) > 3:
        m = len(nodes)
        sub = d[np.ix_(nodes, nodes)]
        tot = sub.sum(axis=1)
        best = None
        for i in range(m):
            for j in range(i + 1, m):
                q = (m - 2) * sub[i, j] - tot[i] - tot[j]
                key = (q, label[nodes[i]], label[nodes[j]])
                if best is None or key < best[0]:
                    best = (key, i, j)
        _, i, j = best
        a, b = nodes[i], nodes[j]
        u = nxt
        nxt += 1
        edges.append((a, u))
        edges.append((b, u))
        for t in nodes:
            if t not in (a, b):
                d[t, u] = d[u, t] = 0.5 * (d[a, t] + d[b, t] - d[a, b])
        label[u] = min(label[a], label[b])
        nodes = [t for t in nodes if t not in (a, b)] + [u]
    hub = nxt
    for t in nodes:
        edges.append((t, hub))
    return UnrootedTopology(n, edges)


def run_replicate(config: ExperimentConfig, k: int, replicate: int,
                  algorithm: str | None = None,
                  alignment=None, tree=None) -> ExperimentRecord:
    algorithm = algorithm or config.algorithm
    t0 = time.perf_counter()
    if tree is None:
        tree = config.tree_for(replicate)
    truth = tree.unrooted()
    model = resolve_model(config.model)
    if alignment is None:
        alignment = sample_alignment(tree, model, k, config.seed, replicate)
    params = config.grid_params()
    failure = ""
    rf = -1
    try:
        if algorithm == "cherry":
            result = reconstruct_homogeneous(
                DistanceTable.from_alignment(alignment, model), params)
            topo = result.topology
        elif algorithm == "forest":
            topo = forest_reconstruct(
                DistanceTable.from_alignment(alignment, model), params).topology
        elif algorithm == "wpgma":
            topo = wpgma(uncorrected_table(alignment, model)).topology()
        elif algorithm == "nj":
            topo = neighbor_joining(
                DistanceTable.from_alignment(alignment, model).tau)
        else:
            raise ConfigError(f"algorithm: unknown {algorithm!r}")
        rf = rf_distance(topo, truth)
    except ReconstructionFailure as exc:
        failure = str(exc)
    return ExperimentRecord(
        seed=config.seed, replicate=replicate, n=tree.n_leaves, k=k,
        algorithm=algorithm, rf=rf, success=(rf == 0), failure=failure,
        wall_time_s=time.perf_counter() - t0)


# ----------------------------------------------------------------------
# Experiment drivers
# ----------------------------------------------------------------------

def _pool_size() -> int:
    env = os.environ.get("KSLOG_THREADS", "")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def run_experiment(config: ExperimentConfig):
    """All (k, replicate) cells; records come back in deterministic order
    regardless of pool scheduling."""
    config.validate()
    jobs = [(k, rep) for k in config.k for rep in range(config.replicates)]
    records: list[ExperimentRecord] = []
    if jobs:
        with ThreadPoolExecutor(max_workers=_pool_size()) as pool:
            records = list(pool.map(
                lambda kr: run_replicate(config, kr[0], kr[1]), jobs))
    return records, summarize(config, records)


def wilson_interval(successes: int, total: int, z: float = 1.96):
    if total == 0:
        return (0.0, 1.0)
    p = successes / total
    denom = 1.0 + z * z / total
    center = (p + z * z / (2 * total)) / denom
    half = z * math.sqrt(p * (1 - p) / total + z * z / (4 * total * total)) / denom
    return (max(0.0, center - half), min(1.0, center + half))


def summarize(config: ExperimentConfig, records) -> dict:
    cells = []
    for k in config.k:
        cell = [r for r in records if r.k == k]
        succ = sum(1 for r in cell if r.success)
        lo, hi = wilson_interval(succ, len(cell))
        cells.append({
            "k": int(k),
            "replicates": len(cell),
            "successes": succ,
            "rate": succ / len(cell) if cell else None,
            "wilson_low": lo,
            "wilson_high": hi,
            "failures": sum(1 for r in cell if r.failure),
        })
    return {"spec_version": SPEC_VERSION, "config": config.as_dict(),
            "cells": cells}


def write_records_csv(records, fh):
    """Per-replicate records; no timing columns so reruns are byte-identical."""
    fh.write("spec_version,seed,replicate,n,k,algorithm,rf,success,failure\n")
    for r in records:
        failure = r.failure.replace(",", ";").replace("\n", " ")
        fh.write(f"{SPEC_VERSION},{r.seed},{r.replicate},{r.n},{r.k},"
                 f"{r.algorithm},{r.rf},{int(r.success)},{failure}\n")


def summary_json(summary: dict) -> str:
    return json.dumps(summary, sort_keys=True, indent=2) + "\n"


def compare_algorithms(config: ExperimentConfig, algorithms=None) -> dict:
    """Run several algorithms on identical alignments (paired design)."""
    config.validate()
    algorithms = list(algorithms or ("cherry", "nj", "wpgma"))
    model = resolve_model(config.model)
    out: dict = {alg: [] for alg in algorithms}
    for k in config.k:
        for rep in range(config.replicates):
            tree = config.tree_for(rep)
            aln = sample_alignment(tree, model, k, config.seed, rep)
            for alg in algorithms:
                rec = run_replicate(config, k, rep, algorithm=alg,
                                    alignment=aln, tree=tree)
                out[alg].append(rec)
    rates = {alg: (sum(r.success for r in recs) / len(recs) if recs else None)
             for alg, recs in out.items()}
    return {"records": out, "rates": rates}


def sign_test_p(wins: int, losses: int) -> float:
    """One-sided sign test: probability of >= wins successes among
    wins + losses fair coin flips."""
    n = wins + losses
    if n == 0:
        return 1.0
    total = 0.0
    for x in range(wins, n + 1):
        total += math.comb(n, x)
    return total / 2.0 ** n


def calibrate_min_k(config: ExperimentConfig, target: float = 0.8,
                    k_start: int = 250, k_max: int = 2_000_000,
                    refine_steps: int = 3) -> dict:
    """Smallest site count reaching the target success rate.

    Doubling search from the base brackets the threshold, then a few
    bisection steps shrink the factor-2 granularity. The search never
    reports below its base (nothing smaller was certified); every probe
    reuses the config's replicate count and seeds.
    """
    def rate(k: int) -> float:
        recs = [run_replicate(config, k, rep) for rep in range(config.replicates)]
        return sum(r.success for r in recs) / len(recs)

    probes = {}
    k = k_start
    while k <= k_max:
        probes[k] = rate(k)
        if probes[k] >= target:
            break
        k *= 2
    else:
        return {"k_min": None, "probes": probes, "target": target}
    if k == k_start:
        return {"k_min": k_start, "probes": probes, "target": target}
    lo, hi = k // 2, k
    for _ in range(refine_steps):
        if hi - lo <= max(1, k_start // 8):
            break
        mid = (lo + hi) // 2
        probes[mid] = rate(mid)
        if probes[mid] >= target:
            hi = mid
        else:
            lo = mid
    return {"k_min": hi, "probes": dict(sorted(probes.items())),
            "target": target}
