"""Dense complex linear algebra and subsystem primitives.

Everything in this package works on plain numpy arrays: state vectors are
1-d complex arrays, operators and density matrices 2-d.  Tensor factors are
always ordered [memory factors ..., output factor] and carried around as an
explicit :class:`SubsystemLayout`; no function infers an ordering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

ATOL_UNITARY = 1e-10
ATOL_STATE = 1e-10
ATOL_EIG_NEG = 1e-9  # density-matrix eigenvalues may dip this far below 0

# dense full-spectrum eigensolves up to this dimension, iterative above
DENSE_EIG_MAX_DIM = 1024


class NumericalError(RuntimeError):
    """An operation failed to meet its numerical contract."""


def dagger(m: np.ndarray) -> np.ndarray:
    return m.conj().T


def basis_state(dim: int, index: int) -> np.ndarray:
    e = np.zeros(dim, dtype=complex)
    e[index] = 1.0
    return e


def is_unitary(m: np.ndarray, atol: float = ATOL_UNITARY) -> bool:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    d = m.shape[0]
    return bool(np.linalg.norm(dagger(m) @ m - np.eye(d)) <= atol * max(1.0, d))


def assert_unitary(m: np.ndarray, atol: float = ATOL_UNITARY, what: str = "matrix") -> None:
    if not is_unitary(m, atol):
        raise ValueError(f"{what} is not unitary within {atol}")


def normalize_state(psi: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(psi)
    if n < 1e-14:
        raise ValueError("cannot normalize a (near-)zero vector")
    return psi / n


def assert_density_matrix(rho: np.ndarray, atol: float = ATOL_STATE) -> None:
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError("density matrix must be square")
    if np.linalg.norm(rho - dagger(rho)) > atol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > atol:
        raise ValueError("density matrix trace differs from 1")
    if np.linalg.eigvalsh(rho).min() < -ATOL_EIG_NEG:
        raise ValueError("density matrix has a significantly negative eigenvalue")


@dataclass(frozen=True)
class SubsystemLayout:
    """Explicit tensor-factor dimensions, optionally with named factors."""

    dims: tuple[int, ...]
    names: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        if not self.dims or any(d < 1 for d in self.dims):
            raise ValueError("all factor dimensions must be >= 1")
        for name, idx in self.names:
            if not 0 <= idx < len(self.dims):
                raise ValueError(f"named factor {name!r} out of range")

    @classmethod
    def of(cls, *dims: int, **names: int) -> "SubsystemLayout":
        return cls(tuple(dims), tuple(names.items()))

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def index(self, name: str) -> int:
        for n, i in self.names:
            if n == name:
                return i
        raise KeyError(name)


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product, leftmost factor most significant."""
    return np.kron(a, b)


def kron_all(*factors: np.ndarray) -> np.ndarray:
    out = factors[0]
    for f in factors[1:]:
        out = np.kron(out, f)
    return out


def apply_on_subsystems(
    u: np.ndarray,
    state: np.ndarray,
    layout: SubsystemLayout,
    targets: list[int] | tuple[int, ...],
) -> np.ndarray:
    """Apply ``u`` to the named tensor factors of ``state``.

    ``u`` must act on the product of the target dimensions, with its own
    factor order equal to the order of ``targets``.
    """
    targets = list(targets)
    dims = layout.dims
    if state.shape != (layout.dim,):
        raise ValueError("state dimension does not match layout")
    d_t = int(np.prod([dims[t] for t in targets]))
    if u.shape != (d_t, d_t):
        raise ValueError(f"operator dim {u.shape} does not match targets {targets}")
    psi = state.reshape(dims)
    k = len(targets)
    u_t = u.reshape([dims[t] for t in targets] * 2)
    out = np.tensordot(u_t, psi, axes=(list(range(k, 2 * k)), targets))
    # tensordot puts the k output axes first; return them to their slots
    out = np.moveaxis(out, list(range(k)), targets)
    return out.reshape(-1)


def embed_operator(
    u: np.ndarray,
    layout: SubsystemLayout,
    targets: list[int] | tuple[int, ...],
) -> np.ndarray:
    """Dense matrix form of ``u`` acting on ``targets``, identity elsewhere."""
    targets = list(targets)
    dims = layout.dims
    rest = [i for i in range(len(dims)) if i not in targets]
    d_rest = int(np.prod([dims[i] for i in rest])) if rest else 1
    big = np.kron(u, np.eye(d_rest))  # factor order [targets..., rest...]
    perm = targets + rest
    idx = np.arange(layout.dim).reshape(dims).transpose(perm).ravel()
    p = np.eye(layout.dim)[idx]  # p @ psi == psi[idx]
    return p.T @ big @ p


def partial_trace(
    rho: np.ndarray,
    layout: SubsystemLayout,
    keep: list[int] | tuple[int, ...],
) -> np.ndarray:
    """Trace out every factor not in ``keep``; kept factors stay in layout order."""
    dims = list(layout.dims)
    if rho.shape != (layout.dim, layout.dim):
        raise ValueError("density matrix dimension does not match layout")
    keep_set = set(keep)
    traced = [i for i in range(len(dims)) if i not in keep_set]
    t = rho.reshape(dims + dims)
    for ax in sorted(traced, reverse=True):
        t = np.trace(t, axis1=ax, axis2=ax + len(dims))
        dims.pop(ax)
    d = int(np.prod(dims)) if dims else 1
    return t.reshape(d, d)


def purity(rho: np.ndarray) -> float:
    return float(np.vdot(rho, rho).real)


def cosine_similarity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Tr[rho sigma] / sqrt(Tr[rho^2] Tr[sigma^2]); standard fidelity on pure pairs."""
    if rho.shape != sigma.shape:
        raise ValueError("states must have equal dimensions")
    pr, ps = purity(rho), purity(sigma)
    if pr <= 1e-300 or ps <= 1e-300:
        raise ValueError("cosine similarity undefined for zero-purity input")
    overlap = np.vdot(sigma, rho).real  # Tr[rho sigma] for Hermitian inputs
    return float(overlap / np.sqrt(pr * ps))


def von_neumann_entropy(rho: np.ndarray) -> float:
    """Entropy in bits; eigenvalues below 1e-12 are dropped, tiny negatives clamped."""
    vals = np.linalg.eigvalsh(rho)
    vals = np.clip(vals, 0.0, None)
    vals = vals[vals > 1e-12]
    return max(0.0, float(-(vals * np.log2(vals)).sum()))


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    vals = np.linalg.eigvalsh(rho - sigma)
    return float(0.5 * np.abs(vals).sum())


def leading_eigenpair(
    m: np.ndarray | scipy.sparse.linalg.LinearOperator,
    *,
    dense_dim_max: int = DENSE_EIG_MAX_DIM,
    n_iterative: int = 6,
) -> tuple[complex, np.ndarray]:
    """Eigenvalue of largest magnitude and a matching right eigenvector.

    Dense full-spectrum solve up to ``dense_dim_max``; ARPACK above that
    (and for implicit operators), falling back to dense on non-convergence
    when the matrix is explicit.
    """
    dim = m.shape[0]
    explicit = isinstance(m, np.ndarray)
    if explicit and dim <= dense_dim_max:
        return _leading_dense(m)
    try:
        k = min(n_iterative, dim - 2)
        vals, vecs = scipy.sparse.linalg.eigs(m, k=max(k, 1), which="LM", tol=1e-12)
        i = int(np.argmax(np.abs(vals)))
        return complex(vals[i]), vecs[:, i]
    except scipy.sparse.linalg.ArpackError as exc:
        if explicit:
            return _leading_dense(m)
        raise NumericalError(f"iterative eigensolve did not converge: {exc}") from exc


def _leading_dense(m: np.ndarray) -> tuple[complex, np.ndarray]:
    vals, vecs = np.linalg.eig(m)
    i = int(np.argmax(np.abs(vals)))
    lam, v = complex(vals[i]), vecs[:, i]
    res = np.linalg.norm(m @ v - lam * v) / np.linalg.norm(v)
    if res > 1e-9 * max(1.0, abs(lam)):
        raise NumericalError(f"leading eigenpair residual {res:.2e} too large")
    return lam, v


def eigenvalue_gap_degenerate(values: np.ndarray, rtol: float = 1e-9) -> bool:
    """True when two eigenvalue magnitudes tie for the lead within ``rtol``."""
    mags = np.sort(np.abs(np.asarray(values)))[::-1]
    if len(mags) < 2 or mags[0] == 0.0:
        return len(mags) >= 2
    return bool(mags[0] - mags[1] <= rtol * mags[0])


def complete_isometry(columns: np.ndarray | list[np.ndarray]) -> np.ndarray:
    """Extend orthonormal columns to a full unitary whose first k columns they are."""
    c = np.asarray(columns, dtype=complex)
    if c.ndim == 1:
        c = c[:, None]
    elif isinstance(columns, (list, tuple)):
        c = np.stack([np.asarray(v, dtype=complex) for v in columns], axis=1)
    dim, k = c.shape
    if k > dim:
        raise ValueError("more columns than the space dimension")
    gram = dagger(c) @ c
    if np.linalg.norm(gram - np.eye(k)) > ATOL_UNITARY * max(1.0, dim):
        raise ValueError("input columns are not orthonormal")
    if k == dim:
        return c.copy()
    comp = scipy.linalg.null_space(dagger(c))
    u = np.hstack([c, comp])
    assert_unitary(u, what="completed isometry")
    return u


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR with phase fixing."""
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(g)
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases


def random_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return normalize_state(v)


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ dagger(g)
    return rho / np.trace(rho).real
