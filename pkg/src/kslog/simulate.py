"""Draw i.i.d. site columns from the Markov model on a tree.

Randomness is counter-based: every uniform is a hash of
(master seed, replicate, site, vertex), so alignments are reproducible
regardless of generation order and alignments for growing site counts
share their common prefix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from kslog import _kernels
from kslog.models import RateModel, transition
from kslog.trees import Phylogeny

__all__ = ["Alignment", "FullSamples", "sample_alignment", "sigma_view",
           "dump_alignment", "load_alignment"]


@dataclass(frozen=True)
class Alignment:
    """Leaf states for k sites: array of shape (k, n) with values in 0..phi-1."""

    states: np.ndarray
    phi: int
    seed: int
    replicate: int

    @property
    def k(self) -> int:
        return self.states.shape[0]

    @property
    def n(self) -> int:
        return self.states.shape[1]

    def __post_init__(self):
        if self.states.size and (self.states.min() < 0
                                 or self.states.max() >= self.phi):
            raise ValueError("states out of range")
        self.states.setflags(write=False)


@dataclass(frozen=True)
class FullSamples:
    """States at every vertex for k sites, shape (k, n_vertices)."""

    states: np.ndarray
    phi: int
    seed: int
    replicate: int

    def __post_init__(self):
        self.states.setflags(write=False)


def _edge_cum_rows(tree: Phylogeny, model: RateModel) -> np.ndarray:
    """Cumulative transition rows per vertex; rows cached per distinct length."""
    nv = tree.n_vertices
    phi = model.phi
    out = np.zeros((nv, phi, phi), dtype=np.float64)
    cache: dict[float, np.ndarray] = {}
    for v in range(nv):
        if v == tree.root:
            continue
        t = float(tree.edge_length[v])
        if t not in cache:
            cum = np.cumsum(transition(model, t).matrix, axis=1)
            cum[:, -1] = 1.0
            cache[t] = cum
        out[v] = cache[t]
    return out


def sample_alignment(tree: Phylogeny, model: RateModel, k: int, seed: int,
                     replicate: int = 0, full: bool = False):
    """Sample an alignment of k sites; optionally also return the vertex
    states (for oracle checks that condition on internal states)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    root_cum = np.cumsum(model.pi)
    root_cum[-1] = 1.0
    states = _kernels.sample_states(
        seed, replicate, int(k),
        np.asarray(tree.topo_order(), dtype=np.int32),
        tree.parent, root_cum, _edge_cum_rows(tree, model))
    aln = Alignment(states=states[:, : tree.n_leaves].copy(), phi=model.phi,
                    seed=seed, replicate=replicate)
    if full:
        return aln, FullSamples(states=states, phi=model.phi, seed=seed,
                                replicate=replicate)
    return aln


def sigma_view(states_or_alignment, model: RateModel) -> np.ndarray:
    """Second-eigenvector view of states: elementwise nu lookup."""
    if isinstance(states_or_alignment, (Alignment, FullSamples)):
        states = states_or_alignment.states
    else:
        states = np.asarray(states_or_alignment)
    return model.nu[states]


def dump_alignment(alignment: Alignment, fh):
    """One line per leaf, states as space-separated integers."""
    for leaf in range(alignment.n):
        fh.write(" ".join(str(int(s)) for s in alignment.states[:, leaf]))
        fh.write("\n")


def load_alignment(fh, phi: int) -> Alignment:
    rows = [np.array(line.split(), dtype=np.int8)
            for line in fh if line.strip()]
    if not rows:
        raise ValueError("empty alignment dump")
    states = np.stack(rows, axis=1)
    return Alignment(states=states, phi=phi, seed=-1, replicate=-1)
