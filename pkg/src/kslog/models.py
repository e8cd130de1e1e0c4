"""Reversible rate matrices, their spectral data, and transition matrices.

Models are normalized so the second eigenvalue of the rate matrix is -1,
which puts edge lengths in units where the pairwise signal between vertices
at distance t decays exactly like exp(-t).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["RateModel", "TransitionMatrix", "build_model", "transition",
           "cfn_model", "binary_asymmetric_model", "resolve_model",
           "load_model_file"]

_STRUCT_TOL = 1e-10


@dataclass(frozen=True)
class RateModel:
    """A reversible rate matrix with stationary distribution and spectral data.

    ``q`` is rescaled so the eigenvalues satisfy
    ``0 = lam[0] > lam[1] = -1 >= lam[2] >= ...``. ``nu`` is the right
    eigenvector for eigenvalue -1, normalized to ``sum(pi * nu**2) == 1``
    with its lowest-index nonzero entry positive.
    """

    phi: int
    q: np.ndarray
    pi: np.ndarray
    eigenvalues: np.ndarray
    nu: np.ndarray
    _basis: np.ndarray = field(repr=False)      # orthonormal eigenvectors of the
    _sqrt_pi: np.ndarray = field(repr=False)    # pi-symmetrized rate matrix

    @property
    def nu_bar(self) -> float:
        return float(np.max(np.abs(self.nu)))

    @property
    def pi_bar(self) -> float:
        return float(np.min(self.pi))

    def sigma(self, states) -> np.ndarray:
        """Map states to their nu entries."""
        return self.nu[np.asarray(states)]


@dataclass(frozen=True)
class TransitionMatrix:
    matrix: np.ndarray
    t: float


def build_model(q_raw, pi) -> RateModel:
    """Validate and normalize a reversible rate matrix.

    Checks positive off-diagonal rates, zero row sums, reversibility with
    respect to ``pi``, and a simple (multiplicity-one) second eigenvalue;
    rescales time so that eigenvalue equals -1.
    """
    q = np.array(q_raw, dtype=np.float64)
    pi = np.array(pi, dtype=np.float64)
    phi = q.shape[0]
    if q.shape != (phi, phi):
        raise ValueError("rate matrix must be square")
    if pi.shape != (phi,):
        raise ValueError("stationary distribution has wrong length")
    if np.any(pi <= 0.0):
        raise ValueError("stationary distribution must be strictly positive")
    if abs(pi.sum() - 1.0) > _STRUCT_TOL:
        raise ValueError("stationary distribution must sum to 1")
    off = q[~np.eye(phi, dtype=bool)]
    if np.any(off <= 0.0):
        raise ValueError("off-diagonal rates must be positive")
    if np.max(np.abs(q.sum(axis=1))) > _STRUCT_TOL:
        raise ValueError("rate matrix rows must sum to 0")
    balance = pi[:, None] * q - (pi[:, None] * q).T
    if np.max(np.abs(balance)) > _STRUCT_TOL:
        raise ValueError("rate matrix is not reversible for this distribution")

    # pi-symmetrization: diag(sqrt(pi)) Q diag(1/sqrt(pi)) is symmetric
    sqrt_pi = np.sqrt(pi)
    sym = sqrt_pi[:, None] * q / sqrt_pi[None, :]
    sym = 0.5 * (sym + sym.T)
    w, u = np.linalg.eigh(sym)
    order = np.argsort(-w, kind="stable")
    w = w[order]
    u = u[:, order]
    lam2 = w[1]
    if lam2 >= -_STRUCT_TOL:
        raise ValueError("second eigenvalue must be negative")
    if phi > 2 and abs(w[2] - lam2) <= 1e-9 * abs(lam2):
        raise ValueError("second eigenvalue has multiplicity > 1; "
                         "the eigenvector estimator is ill-defined")

    scale = -1.0 / lam2
    q = q * scale
    w = w * scale
    w[0] = 0.0
    nu = u[:, 1] / sqrt_pi
    # unit eigh column already gives sum(pi * nu**2) == 1; fix the sign
    nz = np.nonzero(np.abs(nu) > 1e-12)[0]
    if nz.size and nu[nz[0]] < 0:
        nu = -nu
        u = u.copy()
        u[:, 1] = -u[:, 1]
    for arr in (q, pi, w, nu, u, sqrt_pi):
        arr.setflags(write=False)
    return RateModel(phi=phi, q=q, pi=pi, eigenvalues=w, nu=nu,
                     _basis=u, _sqrt_pi=sqrt_pi)


def transition(model: RateModel, t: float) -> TransitionMatrix:
    """Transition matrix exp(t * Q) via the spectral decomposition."""
    if t < 0:
        raise ValueError("elapsed length must be nonnegative")
    u = model._basis
    expw = np.exp(model.eigenvalues * t)
    sym = (u * expw) @ u.T
    m = sym / model._sqrt_pi[:, None] * model._sqrt_pi[None, :]
    m.setflags(write=False)
    return TransitionMatrix(matrix=m, t=float(t))


# ----------------------------------------------------------------------
# Built-in models and file format
# ----------------------------------------------------------------------

def cfn_model() -> RateModel:
    """Two-state symmetric model; nu = (1, -1)."""
    return build_model([[-0.5, 0.5], [0.5, -0.5]], [0.5, 0.5])


def binary_asymmetric_model(pi_plus: float) -> RateModel:
    """Two-state chain with stationary distribution (pi_plus, 1 - pi_plus)."""
    if not 0.0 < pi_plus < 1.0:
        raise ValueError("pi_plus must lie strictly between 0 and 1")
    pi_minus = 1.0 - pi_plus
    q = [[-pi_minus, pi_minus], [pi_plus, -pi_plus]]
    return build_model(q, [pi_plus, pi_minus])


def load_model_file(path) -> RateModel:
    """Load a model from a JSON object {"phi": .., "pi": [..], "Q": [[..]]}."""
    with open(path) as fh:
        obj = json.load(fh)
    for key in ("phi", "pi", "Q"):
        if key not in obj:
            raise ValueError(f"model file missing field {key!r}")
    if len(obj["pi"]) != obj["phi"] or len(obj["Q"]) != obj["phi"]:
        raise ValueError("model file dimensions do not match phi")
    return build_model(obj["Q"], obj["pi"])


def resolve_model(spec: str) -> RateModel:
    """Resolve a CLI model spec: a built-in name or a JSON file path."""
    if spec == "cfn":
        return cfn_model()
    if spec.startswith("binary-asymmetric:"):
        return binary_asymmetric_model(float(spec.split(":", 1)[1]))
    return load_model_file(spec)
