"""Pairwise correlation matrices and distance estimators.

Reconstruction algorithms see data only through these tables; alignments
never cross the module boundary into the reconstruction code.

The eigenvector estimator works in the multiplicative domain: the table
stores the raw quadratic form ``nu' F nu`` per pair, whose expectation is
``exp(-t)`` at separation t. The distance view maps nonpositive values to
+inf ("saturated": the pair looks infinitely far).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from kslog.models import RateModel
from kslog.simulate import Alignment, sigma_view
from kslog.trees import Phylogeny

__all__ = ["CorrelationMatrix", "DistanceTable", "correlation_matrix",
           "tau_hat_eigen", "cfn_distance", "logdet_distance",
           "uncorrected_distance", "uncorrected_table",
           "write_distance_csv", "read_distance_csv"]


@dataclass(frozen=True)
class CorrelationMatrix:
    """Empirical joint frequency table between two leaves."""

    f_hat: np.ndarray
    k: int

    def __post_init__(self):
        if np.any(self.f_hat < 0):
            raise ValueError("negative frequency")
        if abs(float(self.f_hat.sum()) - 1.0) > 1e-12:
            raise ValueError("frequencies must sum to 1")
        self.f_hat.setflags(write=False)

    @property
    def transposed(self) -> "CorrelationMatrix":
        return CorrelationMatrix(self.f_hat.T.copy(), self.k)


def correlation_matrix(alignment: Alignment, a: int, b: int) -> CorrelationMatrix:
    """Exact count ratios of joint states at leaves a and b."""
    if a == b:
        raise ValueError("correlation matrix requires two distinct leaves")
    phi = alignment.phi
    codes = alignment.states[:, a].astype(np.int64) * phi \
        + alignment.states[:, b]
    counts = np.bincount(codes, minlength=phi * phi).reshape(phi, phi)
    return CorrelationMatrix(counts / alignment.k, alignment.k)


def tau_hat_eigen(f_hat, model: RateModel) -> float:
    """-log of the eigenvector quadratic form; +inf when it is nonpositive."""
    if isinstance(f_hat, CorrelationMatrix):
        f_hat = f_hat.f_hat
    val = float(model.nu @ f_hat @ model.nu)
    if val <= 0.0:
        return math.inf
    return -math.log(val)


def cfn_distance(f_hat) -> float:
    """Two-state flip-count estimator: -ln(1 - 2 * off-diagonal mass)."""
    if isinstance(f_hat, CorrelationMatrix):
        f_hat = f_hat.f_hat
    if f_hat.shape != (2, 2):
        raise ValueError("the two-state estimator requires phi == 2")
    arg = 1.0 - 2.0 * float(f_hat[0, 1] + f_hat[1, 0])
    if arg <= 0.0:
        return math.inf
    return -math.log(arg)


def logdet_distance(f_hat) -> float:
    """-ln |det F|; +inf when the determinant vanishes."""
    if isinstance(f_hat, CorrelationMatrix):
        f_hat = f_hat.f_hat
    det = abs(float(np.linalg.det(f_hat)))
    if det == 0.0:
        return math.inf
    return -math.log(det)


def uncorrected_distance(f_hat, model: RateModel) -> float:
    """(1 - nu' F nu) / 2: always finite, used by the clock pipeline."""
    if isinstance(f_hat, CorrelationMatrix):
        f_hat = f_hat.f_hat
    return 0.5 * (1.0 - float(model.nu @ f_hat @ model.nu))


class DistanceTable:
    """All-pairs eigenvector estimates over the leaves.

    ``expneg[a, b]`` holds the raw quadratic form, equal by rearrangement to
    the site average of sigma_a * sigma_b; it may be negative for saturated
    pairs. ``tau`` is the distance view with +inf at saturation and a zero
    diagonal by convention.
    """

    __slots__ = ("expneg", "estimator")

    def __init__(self, expneg: np.ndarray, estimator: str = "eigen"):
        expneg = np.asarray(expneg, dtype=np.float64)
        if expneg.ndim != 2 or expneg.shape[0] != expneg.shape[1]:
            raise ValueError("expneg must be square")
        expneg.setflags(write=False)
        self.expneg = expneg
        self.estimator = estimator

    @property
    def n(self) -> int:
        return self.expneg.shape[0]

    @property
    def tau(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(self.expneg > 0.0, -np.log(np.maximum(self.expneg, 1e-300)),
                           np.inf)
        np.fill_diagonal(out, 0.0)
        return out

    @classmethod
    def from_alignment(cls, alignment: Alignment, model: RateModel) -> "DistanceTable":
        """One matrix product computes every pair's quadratic form exactly:
        nu' F nu rearranges to the site average of the sigma products."""
        sig = sigma_view(alignment, model)
        expneg = (sig.T @ sig) / alignment.k
        np.fill_diagonal(expneg, 1.0)
        return cls(expneg)

    @classmethod
    def exact(cls, tree: Phylogeny) -> "DistanceTable":
        """Oracle table: exp(-true path length) for every leaf pair."""
        expneg = np.exp(-tree.leaf_metric())
        return cls(expneg.copy())


def uncorrected_table(alignment: Alignment, model: RateModel) -> np.ndarray:
    """(1 - nu' F nu)/2 for every leaf pair; zero diagonal."""
    sig = sigma_view(alignment, model)
    omega = (sig.T @ sig) / alignment.k
    out = 0.5 * (1.0 - omega)
    np.fill_diagonal(out, 0.0)
    return out


def write_distance_csv(values: np.ndarray, estimator: str, fh):
    """Rows a,b,estimator,value over unordered pairs; +inf as "inf"."""
    values = np.asarray(values)
    fh.write("a,b,estimator,value\n")
    n = values.shape[0]
    for a in range(n):
        for b in range(a + 1, n):
            v = float(values[a, b])
            text = "inf" if math.isinf(v) else repr(v)
            fh.write(f"{a},{b},{estimator},{text}\n")


def read_distance_csv(fh) -> tuple[str, np.ndarray]:
    """Inverse of write_distance_csv: (estimator, symmetric value matrix)."""
    header = fh.readline().strip()
    if header != "a,b,estimator,value":
        raise ValueError("unexpected distance CSV header")
    rows = []
    estimator = "eigen"
    for line in fh:
        if not line.strip():
            continue
        a, b, estimator, value = line.strip().split(",")
        rows.append((int(a), int(b), math.inf if value == "inf" else float(value)))
    if not rows:
        raise ValueError("distance CSV has no pairs")
    n = max(max(a, b) for a, b, _ in rows) + 1
    values = np.zeros((n, n))
    for a, b, v in rows:
        values[a, b] = values[b, a] = v
    return estimator, values
