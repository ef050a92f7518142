"""Layered hardware-efficient circuit used for both the decoupling unitary
and the reduced update unitary.

Structure: an initial row of U3 rotations on every qubit, then per layer a
row of U3 rotations plus a nearest-neighbour chain of n_qubits-1 entangling
blocks, each block a CNOT followed by U3 on both touched qubits.  The chain
runs up the register on odd layers and back down (with flipped CNOT
orientation) on even layers, so repeated layers entangle in both directions.

Parameter total: n_qubits * (3 + 9 * n_layers) - 6 * n_layers.

Qubit 0 is the most significant (leftmost) tensor factor throughout.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import qcore


@dataclass(frozen=True)
class AnsatzSpec:
    n_qubits: int
    n_layers: int

    def __post_init__(self):
        if self.n_qubits < 1 or self.n_layers < 0:
            raise ValueError("need n_qubits >= 1 and n_layers >= 0")

    @property
    def dim(self) -> int:
        return 2**self.n_qubits


def param_count(spec: AnsatzSpec) -> int:
    return spec.n_qubits * (3 + 9 * spec.n_layers) - 6 * spec.n_layers


@dataclass(frozen=True)
class Gate:
    kind: str  # "u3" | "cnot"
    qubits: tuple[int, ...]
    params: tuple[int, int] | None  # [start, stop) slice into the parameter vector


def circuit_gates(spec: AnsatzSpec) -> tuple[Gate, ...]:
    """Gate sequence in application order, with parameter slices."""
    n = spec.n_qubits
    gates: list[Gate] = []
    off = 0

    def u3_on(q: int):
        nonlocal off
        gates.append(Gate("u3", (q,), (off, off + 3)))
        off += 3

    for q in range(n):
        u3_on(q)
    for layer in range(1, spec.n_layers + 1):
        for q in range(n):
            u3_on(q)
        if layer % 2 == 1:
            pairs = [(i, i + 1) for i in range(n - 1)]
        else:
            pairs = [(i + 1, i) for i in reversed(range(n - 1))]
        for c, t in pairs:
            gates.append(Gate("cnot", (c, t), None))
            u3_on(c)
            u3_on(t)
    assert off == param_count(spec)
    return tuple(gates)


def u3(theta: float, phi: float, lam: float) -> np.ndarray:
    """U3(θ,φ,λ) = [[cos θ/2, -e^{iλ} sin θ/2], [e^{iφ} sin θ/2, e^{i(φ+λ)} cos θ/2]]."""
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    return np.array(
        [
            [c, -np.exp(1j * lam) * s],
            [np.exp(1j * phi) * s, np.exp(1j * (phi + lam)) * c],
        ]
    )


@lru_cache(maxsize=None)
def _cnot_embedded(n: int, control: int, target: int) -> np.ndarray:
    layout = qcore.SubsystemLayout(tuple([2] * n))
    p0 = np.diag([1.0, 0.0]).astype(complex)
    p1 = np.diag([0.0, 1.0]).astype(complex)
    x = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    return qcore.embed_operator(p0, layout, [control]) + qcore.embed_operator(
        p1, layout, [control]
    ) @ qcore.embed_operator(x, layout, [target])


def _u3_embedded(n: int, q: int, angles: np.ndarray) -> np.ndarray:
    g = u3(*angles)
    return qcore.kron_all(np.eye(2**q), g, np.eye(2 ** (n - 1 - q)))


def _random_params_count(count: int, rng, scale, uniform_2pi):
    if uniform_2pi:
        return rng.uniform(0.0, 2.0 * np.pi, size=count)
    return rng.uniform(-scale, scale, size=count)


def random_params(
    spec: AnsatzSpec,
    rng: np.random.Generator,
    scale: float = 0.1,
    uniform_2pi: bool = False,
) -> np.ndarray:
    """Near-identity initialization by default; full-range angles on request."""
    return _random_params_count(param_count(spec), rng, scale, uniform_2pi)


def gate_matrices(spec: AnsatzSpec, theta: np.ndarray) -> list[np.ndarray]:
    """Full-dimension matrix for every gate, in application order."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (param_count(spec),):
        raise ValueError(
            f"parameter vector has length {theta.shape}, expected {param_count(spec)}"
        )
    n = spec.n_qubits
    mats = []
    for g in circuit_gates(spec):
        if g.kind == "cnot":
            mats.append(_cnot_embedded(n, *g.qubits))
        else:
            a, b = g.params
            mats.append(_u3_embedded(n, g.qubits[0], theta[a:b]))
    return mats


def build_unitary(spec: AnsatzSpec, theta: np.ndarray) -> np.ndarray:
    """Dense matrix of the full circuit."""
    u = np.eye(spec.dim, dtype=complex)
    for m in gate_matrices(spec, theta):
        u = m @ u
    return u


def prefix_suffix(mats: list[np.ndarray]) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """prefix[j] = product of gates before j, suffix[j] = product of gates after j."""
    dim = mats[0].shape[0]
    eye = np.eye(dim, dtype=complex)
    pre = [eye]
    for m in mats[:-1]:
        pre.append(m @ pre[-1])
    suf = [eye]
    for m in reversed(mats[1:]):
        suf.append(suf[-1] @ m)
    suf.reverse()
    return pre, suf


def shifted_unitaries(spec: AnsatzSpec, theta: np.ndarray, shift: float = np.pi / 2):
    """Yield (param index, U(θ_k + shift), U(θ_k - shift)) for every parameter.

    Uses cached prefix/suffix products, so each shifted circuit costs two
    matrix products instead of a full rebuild.
    """
    theta = np.asarray(theta, dtype=float)
    mats = gate_matrices(spec, theta)
    pre, suf = prefix_suffix(mats)
    n = spec.n_qubits
    for j, g in enumerate(circuit_gates(spec)):
        if g.kind != "u3":
            continue
        a, b = g.params
        for local in range(3):
            plus = theta[a:b].copy()
            plus[local] += shift
            minus = theta[a:b].copy()
            minus[local] -= shift
            up = suf[j] @ _u3_embedded(n, g.qubits[0], plus) @ pre[j]
            um = suf[j] @ _u3_embedded(n, g.qubits[0], minus) @ pre[j]
            yield a + local, up, um


def shifted_products(
    spec: AnsatzSpec,
    theta: np.ndarray,
    rhs: np.ndarray,
    shift: float = np.pi / 2,
):
    """Yield (param index, U(θ_k+shift) @ rhs, U(θ_k-shift) @ rhs).

    One matrix product per shifted circuit: the prefix product is applied to
    ``rhs`` once per gate and the suffix product folded in afterwards.
    """
    theta = np.asarray(theta, dtype=float)
    mats = gate_matrices(spec, theta)
    pre, suf = prefix_suffix(mats)
    n = spec.n_qubits
    pre_rhs = None
    for j, g in enumerate(circuit_gates(spec)):
        if g.kind != "u3":
            pre_rhs = None
            continue
        pre_rhs = pre[j] @ rhs
        a, b = g.params
        for local in range(3):
            plus = theta[a:b].copy()
            plus[local] += shift
            minus = theta[a:b].copy()
            minus[local] -= shift
            up = suf[j] @ (_u3_embedded(n, g.qubits[0], plus) @ pre_rhs)
            um = suf[j] @ (_u3_embedded(n, g.qubits[0], minus) @ pre_rhs)
            yield a + local, up, um


def gradient(spec: AnsatzSpec, theta: np.ndarray, cost, shift: float = np.pi / 2) -> np.ndarray:
    """Two-point parameter-shift gradient of ``cost(unitary)``.

    Exact whenever the cost is linear in the conjugation action U · U†
    (every angle enters such costs with trigonometric degree one).  Costs
    that are nonlinear in the circuit-dependent states need the chain-rule
    decomposition used by the training module.
    """
    theta = np.asarray(theta, dtype=float)
    grad = np.zeros(len(theta))
    for k, up, um in shifted_unitaries(spec, theta, shift):
        grad[k] = (cost(up) - cost(um)) / 2.0
    return grad
