"""Recurrent quantum models: step dynamics, Kraus form, stationarity, sampling.

A model is a fixed coupling unitary on (memory ⊗ output).  One step applies
the unitary to the current memory joined with a fresh |0⟩ output register,
measures the output in the computational basis and resets it.  Output symbols
are the indices 0 .. d_out-1 of the output register's basis states.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg

from . import qcore

ATOL_KRAUS = 1e-10


@dataclass(frozen=True)
class Rqm:
    """Coupling unitary over n_mem memory qubits and a d_out-dim output register."""

    n_mem: int
    d_out: int
    u: np.ndarray

    def __post_init__(self):
        if self.n_mem < 1:
            raise ValueError("need at least one memory qubit")
        if self.d_out < 2 or self.d_out & (self.d_out - 1):
            raise ValueError("output alphabet size must be a power of 2, >= 2")
        d = self.dim_mem * self.d_out
        if self.u.shape != (d, d):
            raise ValueError(f"coupling unitary must be {d}x{d}")
        qcore.assert_unitary(self.u, what="coupling unitary")

    @property
    def dim_mem(self) -> int:
        return 2**self.n_mem

    @property
    def dim_total(self) -> int:
        return self.dim_mem * self.d_out

    def apply(self, joint_state: np.ndarray) -> np.ndarray:
        """Black-box application of the coupling unitary to a joint state."""
        return self.u @ joint_state

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_mem": self.n_mem,
                "d_out": self.d_out,
                "u": _complex_to_pairs(self.u),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "Rqm":
        d = json.loads(text)
        return cls(int(d["n_mem"]), int(d["d_out"]), _pairs_to_complex(d["u"]))


@dataclass(frozen=True)
class KrausFamily:
    """Memory-space operators A^x with sum_x (A^x)† A^x = I."""

    operators: np.ndarray  # shape (d_out, dim_mem, dim_mem)

    def __post_init__(self):
        ops = self.operators
        if ops.ndim != 3 or ops.shape[1] != ops.shape[2]:
            raise ValueError("operators must be a stack of square matrices")
        comp = np.einsum("xij,xik->jk", ops.conj(), ops)
        if np.linalg.norm(comp - np.eye(ops.shape[1])) > ATOL_KRAUS * max(1.0, ops.shape[1]):
            raise ValueError("Kraus completeness violated")

    @property
    def d_out(self) -> int:
        return self.operators.shape[0]

    @property
    def dim_mem(self) -> int:
        return self.operators.shape[1]

    def channel(self, rho: np.ndarray) -> np.ndarray:
        """The memory channel eps(rho) = sum_x A^x rho (A^x)†."""
        return np.einsum("xij,jk,xlk->il", self.operators, rho, self.operators.conj())

    def superoperator(self) -> np.ndarray:
        """Dense matrix of the channel acting on row-major vec(rho)."""
        return sum(np.kron(a, a.conj()) for a in self.operators)


def kraus_from_unitary(model: Rqm) -> KrausFamily:
    """Slice A^x = (I ⊗ ⟨x|) U (I ⊗ |0⟩) out of the coupling unitary."""
    dm, do = model.dim_mem, model.d_out
    u4 = model.u.reshape(dm, do, dm, do)
    ops = np.ascontiguousarray(np.transpose(u4[:, :, :, 0], (1, 0, 2)))
    return KrausFamily(ops)


def step(
    kraus: KrausFamily, mem: np.ndarray, rng: np.random.Generator
) -> tuple[int, np.ndarray, float]:
    """Sample one output symbol and the post-measurement memory state."""
    amps = kraus.operators @ mem  # (d_out, dim_mem)
    probs = np.einsum("xi,xi->x", amps, amps.conj()).real
    total = probs.sum()
    if total < 1e-14:
        raise qcore.NumericalError("all outcome probabilities vanish; corrupted model")
    probs = np.clip(probs, 0.0, None)
    x = int(rng.choice(kraus.d_out, p=probs / probs.sum()))
    p = float(probs[x])
    return x, amps[x] / np.sqrt(p), p


@dataclass(frozen=True)
class MemoryEnsemble:
    """K sampled stationary memory states with their generating histories."""

    n_mem: int
    d_out: int
    states: np.ndarray  # (k, 2**n_mem)
    histories: tuple[tuple[int, ...], ...]
    burn_in: int
    seed: int

    def __post_init__(self):
        if self.states.shape[0] != len(self.histories):
            raise ValueError("states/histories length mismatch")
        if self.states.size:
            norms = np.linalg.norm(self.states, axis=1)
            if np.abs(norms - 1.0).max() > qcore.ATOL_STATE:
                raise ValueError("ensemble states must be normalized")

    @property
    def k(self) -> int:
        return self.states.shape[0]

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_mem": self.n_mem,
                "d_out": self.d_out,
                "seed": self.seed,
                "burn_in": self.burn_in,
                "states": [_complex_to_pairs(s) for s in self.states],
                "histories": [list(h) for h in self.histories],
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "MemoryEnsemble":
        d = json.loads(text)
        k = len(d["states"])
        dim = 2 ** int(d["n_mem"])
        states = (
            np.stack([_pairs_to_complex_vec(s) for s in d["states"]])
            if k
            else np.zeros((0, dim), dtype=complex)
        )
        return cls(
            n_mem=int(d["n_mem"]),
            d_out=int(d["d_out"]),
            states=states,
            histories=tuple(tuple(int(x) for x in h) for h in d["histories"]),
            burn_in=int(d["burn_in"]),
            seed=int(d["seed"]),
        )


def sample_memory_ensemble(model: Rqm, k: int, burn_in: int, seed: int) -> MemoryEnsemble:
    """Run k independent trajectories from |0...0⟩ and keep the post-burn-in states.

    Each trajectory draws its generator from an independently spawned seed, so
    results are reproducible and order-deterministic.
    """
    if burn_in < 1:
        raise ValueError("burn_in must be >= 1")
    kraus = kraus_from_unitary(model)
    dim = model.dim_mem
    states = np.zeros((k, dim), dtype=complex)
    histories = []
    children = np.random.SeedSequence(seed).spawn(k)
    for i in range(k):
        rng = np.random.default_rng(children[i])
        mem = qcore.basis_state(dim, 0)
        hist = []
        for _ in range(burn_in):
            x, mem, _ = step(kraus, mem, rng)
            hist.append(x)
        states[i] = mem
        histories.append(tuple(hist))
    return MemoryEnsemble(
        n_mem=model.n_mem,
        d_out=model.d_out,
        states=states,
        histories=tuple(histories),
        burn_in=burn_in,
        seed=seed,
    )


class StationaryState(NamedTuple):
    rho: np.ndarray
    degenerate: bool


def exact_stationary(kraus: KrausFamily, atol: float = 1e-9) -> StationaryState:
    """Fixed point of the memory channel.

    With a degenerate fixed-point space the returned state is the projection
    of |0⟩⟨0| onto that space (the Cesàro limit of iterating the channel from
    |0⟩⟨0|), and the degeneracy is flagged.
    """
    dim = kraus.dim_mem
    phi = kraus.superoperator()
    w, vl, vr = scipy.linalg.eig(phi, left=True, right=True)
    cluster = np.flatnonzero(np.abs(w - 1.0) <= atol)
    if len(cluster) == 0:
        raise qcore.NumericalError("channel has no eigenvalue-1 fixed point")
    if len(cluster) == 1:
        rho = vr[:, cluster[0]].reshape(dim, dim)
        degenerate = False
    else:
        r = vr[:, cluster]
        l = vl[:, cluster]
        proj_coeff = np.linalg.solve(qcore.dagger(l) @ r, qcore.dagger(l))
        rho0 = np.zeros(dim * dim, dtype=complex)
        rho0[0] = 1.0  # vec(|0><0|)
        rho = (r @ (proj_coeff @ rho0)).reshape(dim, dim)
        degenerate = True
    rho = (rho + qcore.dagger(rho)) / 2.0
    tr = np.trace(rho).real
    if abs(tr) < 1e-12:
        raise qcore.NumericalError("stationary candidate has vanishing trace")
    rho = rho / tr
    vals, vecs = np.linalg.eigh(rho)
    if vals.min() < -qcore.ATOL_EIG_NEG:
        raise qcore.NumericalError("stationary state significantly non-positive")
    rho = (vecs * np.clip(vals, 0.0, None)) @ qcore.dagger(vecs)
    rho /= np.trace(rho).real
    residual = np.linalg.norm(kraus.channel(rho) - rho)
    if residual > atol:
        raise qcore.NumericalError(f"stationary residual {residual:.2e} exceeds {atol}")
    return StationaryState(rho, degenerate)


def cq(rho_m: np.ndarray) -> float:
    """Statistical complexity: von Neumann entropy of the stationary memory state."""
    return qcore.von_neumann_entropy(rho_m)


def _complex_to_pairs(a: np.ndarray):
    if a.ndim == 1:
        return [[float(z.real), float(z.imag)] for z in a]
    return [[[float(z.real), float(z.imag)] for z in row] for row in a]


def _pairs_to_complex(rows) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in rows])


def _pairs_to_complex_vec(pairs) -> np.ndarray:
    return np.array([complex(re, im) for re, im in pairs])
