"""Discretized cyclic random walk and its exact quantum model.

The walk lives on a ring of circumference one: Y_{t+1} = frac(Y_t + X) with
i.i.d. shift X ~ Q.  Positions are discretized to N = 2**n sites y_m = m/N,
each collecting the interval of points within 1/(2N) of it, which turns the
walk into a circulant Markov chain.  The quantum model stores one memory
state per site, with overlaps fixed by the transition probabilities; the
coupling unitary emits the next site as the output symbol.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import ndtr

from . import qcore
from .rqm import Rqm

ATOL_MASS = 1e-9


@dataclass(frozen=True)
class WrappedGaussian:
    mean: float
    sigma: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class UniformInterval:
    a: float
    b: float

    def __post_init__(self):
        if not (0.0 <= self.a < self.b <= 1.0):
            raise ValueError("need 0 <= a < b <= 1 in ring units")


@dataclass(frozen=True)
class PointMass:
    x0: float


@dataclass(frozen=True)
class Table:
    probs: tuple[float, ...]

    def __post_init__(self):
        if any(p < 0 for p in self.probs):
            raise ValueError("table probabilities must be nonnegative")
        if abs(sum(self.probs) - 1.0) > 1e-12:
            raise ValueError("table probabilities must sum to 1")


ShiftDistribution = WrappedGaussian | UniformInterval | PointMass | Table


def parse_shift(spec: dict) -> ShiftDistribution:
    """Build a shift distribution from a {kind, ...} mapping (config surface)."""
    kind = spec.get("kind")
    params = {k: v for k, v in spec.items() if k != "kind"}
    try:
        if kind == "wrapped-gaussian":
            return WrappedGaussian(float(params["mean"]), float(params["sigma"]))
        if kind == "uniform-interval":
            return UniformInterval(float(params["a"]), float(params["b"]))
        if kind == "point-mass":
            return PointMass(float(params["x0"]))
        if kind == "table":
            return Table(tuple(float(p) for p in params["probs"]))
    except KeyError as exc:
        raise ValueError(f"shift kind {kind!r} missing parameter {exc}") from exc
    raise ValueError(f"unknown shift kind {kind!r}")


def shift_to_dict(q: ShiftDistribution) -> dict:
    if isinstance(q, WrappedGaussian):
        return {"kind": "wrapped-gaussian", "mean": q.mean, "sigma": q.sigma}
    if isinstance(q, UniformInterval):
        return {"kind": "uniform-interval", "a": q.a, "b": q.b}
    if isinstance(q, PointMass):
        return {"kind": "point-mass", "x0": q.x0}
    return {"kind": "table", "probs": list(q.probs)}


def _check_n_sites(n_sites: int) -> None:
    if n_sites < 2 or n_sites & (n_sites - 1):
        raise ValueError("n_sites must be a power of 2, >= 2")


def discretize_shift(q: ShiftDistribution, n_sites: int) -> np.ndarray:
    """Probability that frac(X) falls in each site interval (m/N - 1/2N, m/N + 1/2N)."""
    _check_n_sites(n_sites)
    n = n_sites
    h = 0.5 / n
    centers = np.arange(n) / n

    if isinstance(q, Table):
        if len(q.probs) != n:
            raise ValueError(f"table length {len(q.probs)} does not match n_sites {n}")
        masses = np.array(q.probs, dtype=float)
    elif isinstance(q, PointMass):
        m = int(np.floor((q.x0 % 1.0) * n + 0.5)) % n
        masses = np.zeros(n)
        masses[m] = 1.0
    elif isinstance(q, UniformInterval):
        masses = np.array(
            [_arc_overlap(c - h, c + h, q.a, q.b) for c in centers]
        ) / (q.b - q.a)
    else:
        # wrapped Gaussian: sum exact normal-CDF masses over enough integer images
        j_max = int(np.ceil(6.0 * q.sigma)) + 2
        js = np.arange(-j_max, j_max + 1)
        lo = (centers[:, None] - h + js[None, :] - q.mean) / q.sigma
        hi = (centers[:, None] + h + js[None, :] - q.mean) / q.sigma
        masses = (ndtr(hi) - ndtr(lo)).sum(axis=1)

    total = masses.sum()
    if abs(total - 1.0) > ATOL_MASS:
        raise qcore.NumericalError(f"offset masses sum to {total}, not 1")
    return masses


def _arc_overlap(lo: float, hi: float, a: float, b: float) -> float:
    """Length of the intersection of the arc (lo, hi) with [a, b] on the unit ring."""
    length = 0.0
    for shift in (-1.0, 0.0, 1.0):
        s, e = lo + shift, hi + shift
        length += max(0.0, min(e, b) - max(s, a))
    return length


def transition_matrix(masses: np.ndarray) -> np.ndarray:
    """Circulant column-stochastic matrix p[k, j] = q_{(k - j) mod N}."""
    masses = np.asarray(masses, dtype=float)
    n = len(masses)
    p = np.stack([np.roll(masses, j) for j in range(n)], axis=1)
    validate_transition(p)
    return p


def validate_transition(p: np.ndarray, atol: float = 1e-10) -> None:
    n = p.shape[0]
    if p.shape != (n, n):
        raise ValueError("transition matrix must be square")
    if p.min() < -atol:
        raise ValueError("transition probabilities must be nonnegative")
    if np.abs(p.sum(axis=0) - 1.0).max() > atol:
        raise ValueError("transition matrix must be column-stochastic")
    base = p[:, 0]
    for j in range(n):
        if np.abs(p[:, j] - np.roll(base, j)).max() > atol:
            raise ValueError("transition matrix is not circulant")


def gram_matrix(p: np.ndarray) -> np.ndarray:
    """Overlaps of the quantum memory states: G = Mᵀ M with M = sqrt(p) entrywise."""
    m = np.sqrt(np.clip(p, 0.0, None))
    g = m.T @ m
    return g


def memory_states(g: np.ndarray) -> np.ndarray:
    """Columns are memory states |σ_j⟩ with ⟨σ_i|σ_j⟩ = G_ij, via eigendecomposition."""
    vals, vecs = np.linalg.eigh(g)
    if vals.min() < -qcore.ATOL_EIG_NEG:
        raise ValueError("Gram matrix is not positive semidefinite")
    vals = np.clip(vals, 0.0, None)
    return (np.sqrt(vals)[:, None] * qcore.dagger(vecs)).astype(complex)


def build_model(p: np.ndarray) -> Rqm:
    """Exact quantum model of the walk: U(|σ_j⟩|0⟩) = Σ_k √(p_kj) |σ_k⟩|k⟩.

    The map is inner-product preserving on its defined sector because the
    next memory state depends on the output alone; it is realized on a
    column-pivoted QR basis of the (possibly rank-deficient) domain span and
    completed to a unitary.
    """
    validate_transition(p)
    n_sites = p.shape[0]
    _check_n_sites(n_sites)
    n_mem = int(np.log2(n_sites))
    g = gram_matrix(p)
    sig = memory_states(g)  # (dim, site)

    dom = np.zeros((n_sites * n_sites, n_sites), dtype=complex)
    dom[0::n_sites, :] = sig  # |σ_j⟩ ⊗ |0⟩ in layout [memory, output]
    img = np.einsum("ix,xj->ixj", sig, np.sqrt(p)).reshape(n_sites * n_sites, n_sites)

    # Orthonormalize the (often rank-deficient) domain span through the Gram
    # eigenbasis: D Φ_a / sqrt(λ_a) is conditioned like sqrt(λ_max/λ_a), which
    # keeps the sector action accurate even for strongly overlapping states.
    vals, phi = np.linalg.eigh(g)
    keep = vals > 1e-12 * vals.max()
    coeff = phi[:, keep] / np.sqrt(vals[keep])[None, :]
    q_dom = dom @ coeff
    q_img = img @ coeff

    gram_err = np.linalg.norm(qcore.dagger(q_img) @ q_img - np.eye(int(keep.sum())))
    if gram_err > 1e-7:
        raise qcore.NumericalError(
            f"image Gram deviates from domain Gram by {gram_err:.2e}; "
            "isometry condition violated"
        )
    q_dom, _ = scipy.linalg.polar(q_dom)
    q_img, _ = scipy.linalg.polar(q_img)

    u_dom = qcore.complete_isometry(q_dom)
    u_img = qcore.complete_isometry(q_img)
    u = u_img @ qcore.dagger(u_dom)
    return Rqm(n_mem=n_mem, d_out=n_sites, u=u)


def default_sigma(n_sites: int) -> float:
    """Default wrapped-Gaussian width for the sweep family: half a site spacing."""
    return 1.0 / (2.0 * n_sites)
