"""Exponential distance averaging between internal vertices, the grid
distorted metric, three-point weight estimation, and the flow-variance
machinery that certifies the averaging estimator.

Averaging works in the multiplicative domain: a distance between the roots
of two disjoint subtrees is estimated by a weighted average of exp(-leaf
distance) terms, with weights that undo the decay from each root down to
its leaves. With flow weights this is algebraically identical to the site
average of reconstructed ancestral signals, which is what makes the whole
pipeline distance-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from kslog._kernels import INF_GRID
from kslog.models import RateModel
from kslog.trees import Phylogeny

__all__ = ["G_STAR", "INF_GRID", "GridParams", "round_to_grid", "grid_index",
           "DistortedValue", "distorted_value", "distorted_grid",
           "tau_bar", "exp_tau_bar", "three_point_weight",
           "EdgeWeightTable", "FlowSpec", "excess_variance_closed",
           "excess_variance_recursive", "kesten_stigum_excess_bound",
           "ancestral_signal", "concentration_constant"]

# critical edge-length threshold: linear ancestral estimators keep root
# information only below it
G_STAR = math.log(math.sqrt(2.0))

_EPS = 1e-12


@dataclass(frozen=True)
class GridParams:
    """Grid and radius parameters for the distorted metric.

    delta: discretization step; every true edge length is a multiple.
    edge_min / edge_max: bounds on true edge lengths (the four-point
    threshold is edge_min / 2).
    diameter: radius within which deep distances must be computed.
    band: multiplicative slack of the radius test (must exceed 5).
    """

    delta: float
    edge_min: float
    edge_max: float
    diameter: float
    band: float = 6.0

    @classmethod
    def defaults(cls, delta: float, edge_min: float, edge_max: float,
                 diameter: float | None = None, band: float = 6.0):
        if diameter is None:
            diameter = 4.0 * edge_max + delta
        return cls(delta=delta, edge_min=edge_min, edge_max=edge_max,
                   diameter=diameter, band=band)

    def __post_init__(self):
        if not 0.0 < self.delta <= self.edge_min <= self.edge_max:
            raise ValueError("need 0 < delta <= edge_min <= edge_max")
        if self.band <= 5.0:
            raise ValueError("band must exceed 5")
        if self.diameter <= 4.0 * self.edge_max:
            raise ValueError("diameter must exceed 4 * edge_max")

    @property
    def sd_limit(self) -> float:
        """Acceptance threshold of the radius test on rounded averages."""
        return self.diameter + math.log(self.band / 3.0)

    def require_kesten_stigum(self):
        if self.edge_max >= G_STAR:
            raise ValueError(
                f"edge_max {self.edge_max} is not below ln(sqrt(2)) "
                f"~ {G_STAR:.4f}; the averaging pipeline needs shorter edges")


def round_to_grid(z: float, delta: float) -> float:
    """Closest multiple of delta; exact half-way points round up."""
    if z < 0:
        raise ValueError("z must be nonnegative")
    if delta <= 0:
        raise ValueError("delta must be positive")
    return grid_index(z, delta) * delta


def grid_index(z: float, delta: float) -> int:
    return math.floor(z / delta + 0.5)


@dataclass(frozen=True)
class DistortedValue:
    """A grid distance: an exact multiple of delta, or infinite.

    ``sd`` mirrors finiteness: the radius test accepted the pair exactly
    when the value is finite.
    """

    index: int
    delta: float

    @property
    def is_finite(self) -> bool:
        return self.index < INF_GRID

    @property
    def sd(self) -> int:
        return 1 if self.is_finite else 0

    @property
    def value(self) -> float:
        return self.index * self.delta if self.is_finite else math.inf


def distorted_value(tau_bar_value: float, params: GridParams) -> DistortedValue:
    """Round the averaged distance to the grid and apply the radius test."""
    if math.isinf(tau_bar_value):
        return DistortedValue(INF_GRID, params.delta)
    m = max(0, grid_index(tau_bar_value, params.delta))
    if m * params.delta <= params.sd_limit + _EPS:
        return DistortedValue(m, params.delta)
    return DistortedValue(INF_GRID, params.delta)


def distorted_grid(expneg: np.ndarray, params: GridParams) -> np.ndarray:
    """Vectorized distorted metric over a matrix of raw multiplicative
    averages: int64 grid indices with INF_GRID where saturated or out of
    radius. The diagonal is infinite (a vertex has no distance to itself
    in the tests that consume this)."""
    expneg = np.asarray(expneg, dtype=np.float64)
    out = np.full(expneg.shape, INF_GRID, dtype=np.int64)
    pos = expneg > 0.0
    tau = -np.log(np.where(pos, expneg, 1.0))
    m = np.maximum(np.floor(tau / params.delta + 0.5), 0.0).astype(np.int64)
    ok = pos & (m * params.delta <= params.sd_limit + _EPS)
    out[ok] = m[ok]
    np.fill_diagonal(out, INF_GRID)
    return out


# ----------------------------------------------------------------------
# Exponential averaging
# ----------------------------------------------------------------------

def exp_tau_bar(table, leaves_a, weights_a, leaves_b, weights_b) -> float:
    """Raw weighted average of exp(-leaf distance) terms, compensated
    summation. Weights must already combine the flow with the inverse
    root-to-leaf decay."""
    la = list(leaves_a)
    lb = list(leaves_b)
    if set(la) & set(lb):
        raise ValueError("leaf sets must be disjoint")
    expneg = table.expneg if hasattr(table, "expneg") else np.asarray(table)
    terms = []
    for a, wa in zip(la, weights_a):
        row = expneg[a]
        for b, wb in zip(lb, weights_b):
            terms.append(wa * wb * row[b])
    return math.fsum(terms)


def tau_bar(table, leaves_a, weights_a=None, leaves_b=None, weights_b=None) -> float:
    """Averaged distance estimate; +inf when the average is nonpositive.

    With singleton leaf sets and unit weights this reduces to the plain
    pairwise estimate.
    """
    if weights_a is None:
        weights_a = [1.0] * len(list(leaves_a))
    if weights_b is None:
        weights_b = [1.0] * len(list(leaves_b))
    avg = exp_tau_bar(table, leaves_a, weights_a, leaves_b, weights_b)
    if avg <= 0.0:
        return math.inf
    return -math.log(avg)


def three_point_weight(d_ab: float, d_ac: float, d_bc: float) -> float:
    """exp(-(d(a,b) + d(a,c) - d(b,c)) / 2): the decay from a to the
    meeting point of the three vertices. All inputs must be finite; the
    caller picks a different witness otherwise."""
    if math.isinf(d_ab) or math.isinf(d_ac) or math.isinf(d_bc):
        raise ValueError("three-point estimate needs three finite distances")
    return math.exp(-0.5 * (d_ab + d_ac - d_bc))


# ----------------------------------------------------------------------
# Edge weights and flows
# ----------------------------------------------------------------------

class EdgeWeightTable:
    """Per-edge decay factors theta = exp(-length) with path products.

    Edges are identified by their child vertex. Path products are valid
    between any two vertices (decay is multiplicative along paths).
    """

    def __init__(self, tree: Phylogeny, theta: dict[int, float]):
        for e, th in theta.items():
            if not 0.0 < th < 1.0:
                raise ValueError(f"theta for edge {e} must lie in (0, 1)")
        self.tree = tree
        self._theta = dict(theta)

    @classmethod
    def from_true(cls, tree: Phylogeny) -> "EdgeWeightTable":
        theta = {v: math.exp(-float(tree.edge_length[v]))
                 for v in range(tree.n_vertices) if v != tree.root}
        return cls(tree, theta)

    def theta(self, edge: int) -> float:
        return self._theta[edge]

    def path_product(self, u: int, v: int) -> float:
        if u == v:
            return 1.0
        out = 1.0
        for e in self.tree.path_edges(u, v):
            out *= self._theta[e]
        return out


@dataclass(frozen=True)
class FlowSpec:
    """A unit flow from a root to the leaves below it: per-leaf weights."""

    leaf_weight: dict

    def __post_init__(self):
        if any(w < 0 for w in self.leaf_weight.values()):
            raise ValueError("flow weights must be nonnegative")
        if abs(math.fsum(self.leaf_weight.values()) - 1.0) > 1e-9:
            raise ValueError("flow must carry unit mass")

    @classmethod
    def homogeneous(cls, tree: Phylogeny, root: int) -> "FlowSpec":
        """Weight 2**(-edge depth below the root) per leaf."""
        depth = {root: 0}
        stack = [root]
        weights = {}
        while stack:
            u = stack.pop()
            if not tree.children[u]:
                weights[u] = 2.0 ** (-depth[u])
            for c in tree.children[u]:
                depth[c] = depth[u] + 1
                stack.append(c)
        return cls(weights)

    def vertex_flow(self, tree: Phylogeny, root: int) -> dict:
        """Flow through each vertex below the root (sum of leaf weights)."""
        out = {}

        def walk(u):
            if not tree.children[u]:
                out[u] = self.leaf_weight.get(u, 0.0)
            else:
                out[u] = sum(walk(c) for c in tree.children[u])
            return out[u]

        walk(root)
        return out


def _check_flow(tree: Phylogeny, root: int, flow: FlowSpec):
    leaves = set(tree.leaves_below(root))
    extra = set(flow.leaf_weight) - leaves
    missing = leaves - set(flow.leaf_weight)
    if extra or missing:
        raise ValueError("flow does not match the leaves below the root")


def excess_variance_closed(tree: Phylogeny, root: int, flow: FlowSpec) -> float:
    """Variance excess of the flow-weighted ancestral estimator, as the
    closed sum over vertices below the root."""
    _check_flow(tree, root, flow)
    psi = flow.vertex_flow(tree, root)
    metric = tree.tree_metric()
    total = []
    stack = list(tree.children[root])
    while stack:
        x = stack.pop()
        stack.extend(tree.children[x])
        theta_x = math.exp(-float(tree.edge_length[x]))
        big_theta = math.exp(-float(metric[root, x]))
        total.append((1.0 - theta_x ** 2) * (psi[x] / big_theta) ** 2)
    return math.fsum(total)


def excess_variance_recursive(tree: Phylogeny, root: int, flow: FlowSpec) -> float:
    """Same quantity by the leaf-up recursion."""
    _check_flow(tree, root, flow)
    psi = flow.vertex_flow(tree, root)

    def k_of(u):
        if not tree.children[u]:
            return 0.0
        acc = 0.0
        for v in tree.children[u]:
            theta_e = math.exp(-float(tree.edge_length[v]))
            ratio = 0.0 if psi[u] == 0.0 else (psi[v] / psi[u]) / theta_e
            acc += ((1.0 - theta_e ** 2) + k_of(v)) * ratio ** 2
        return acc

    return k_of(root)


def kesten_stigum_excess_bound(edge_max: float) -> float:
    """Uniform bound on the variance excess for homogeneous flows when all
    edges are below the critical length."""
    if edge_max >= G_STAR:
        raise ValueError("bound requires edge_max < ln(sqrt(2))")
    return 1.0 / (1.0 - math.exp(-2.0 * (G_STAR - edge_max)))


def ancestral_signal(full_states: np.ndarray, model: RateModel,
                     tree: Phylogeny, root: int, flow: FlowSpec,
                     weights: EdgeWeightTable) -> np.ndarray:
    """Per-site flow-weighted average of leaf signals, rescaled by the
    inverse decay to the root. Testing aid: conditioning checks need the
    vertex states, which reconstruction never sees."""
    _check_flow(tree, root, flow)
    leaves = list(tree.leaves_below(root))
    coeff = np.array([flow.leaf_weight[x] / weights.path_product(root, x)
                      for x in leaves])
    sig = model.nu[np.asarray(full_states)[:, leaves]]
    return sig @ coeff


def concentration_constant(model: RateModel, edge_min: float) -> float:
    """Curvature constant of the exponential-moment bound for the
    ancestral estimator, valid for all edges of length >= edge_min."""
    nb = model.nu_bar
    c_star = (1.0 + 1e-6) * max(4.0 * nb, nb * nb * math.exp(2.0 * nb))
    return c_star / -math.expm1(-2.0 * edge_min)
