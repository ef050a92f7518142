"""Variational truncation of a uniform MPS to a smaller bond dimension.

The comparison baseline: gauge the target into mixed canonical form, then
alternate leading-eigenvector solves of the mixed transfer operators with
projections of the target's center tensors onto the reduced bond space,
re-extracting canonical reduced tensors by polar splits, until the
self-consistency scalar Δ drops below threshold.  Random restarts control
local-optimum variance; the restart with the best per-site overlap wins.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import qcore
from .qfdr import UniformMps

STALL_PATIENCE = 50


class NonInjectiveError(RuntimeError):
    """Transfer fixed point is rank-deficient; caller may perturb the input."""


@dataclass(frozen=True)
class CanonicalForms:
    """Left/right/mixed gauge tensors of one uniform MPS."""

    a_l: np.ndarray  # (d_out, D, D), sum_x a_l† a_l = I
    a_r: np.ndarray  # (d_out, D, D), sum_x a_r a_r† = I
    a_c: np.ndarray  # (d_out, D, D), a_c = a_l c = c a_r
    c: np.ndarray  # (D, D), ||c||_F = 1
    degenerate: bool  # leading transfer eigenvalue magnitude was degenerate

    @property
    def bond_dim(self) -> int:
        return self.c.shape[0]

    @property
    def d_out(self) -> int:
        return self.a_l.shape[0]


def _transfer_superoperator(tensors: np.ndarray) -> np.ndarray:
    return sum(np.kron(a, a.conj()) for a in tensors)


def _positive_fixed_point(e: np.ndarray, dim: int) -> tuple[float, np.ndarray, bool]:
    """Leading positive eigenvalue of a CP-map superoperator and a PSD fixed point.

    With a degenerate leading magnitude, returns the spectral projection of
    the maximally mixed state onto the eigenvalue-λ space (the Cesàro limit
    of iterating from I/D) and flags the degeneracy.
    """
    w, vl, vr = scipy.linalg.eig(e, left=True, right=True)
    sr = np.abs(w).max()
    lead = np.flatnonzero(np.abs(w) >= sr * (1.0 - 1e-9))
    degenerate = len(lead) > 1
    real_lead = [i for i in lead if abs(w[i].imag) <= 1e-9 * max(sr, 1.0) and w[i].real > 0]
    if not real_lead:
        raise qcore.NumericalError("no positive leading transfer eigenvalue")
    lam = float(np.mean([w[i].real for i in real_lead]))
    cluster = np.flatnonzero(np.abs(w - lam) <= 1e-9 * max(lam, 1.0))
    if len(cluster) == 1:
        m = vr[:, cluster[0]].reshape(dim, dim)
    else:
        r = vr[:, cluster]
        l = vl[:, cluster]
        start = np.eye(dim, dtype=complex).reshape(-1) / dim
        m = (r @ np.linalg.solve(qcore.dagger(l) @ r, qcore.dagger(l) @ start)).reshape(
            dim, dim
        )
    m = (m + qcore.dagger(m)) / 2.0
    tr = np.trace(m).real
    if abs(tr) < 1e-12:
        raise qcore.NumericalError("transfer fixed point has vanishing trace")
    m = m / tr
    return lam, m, degenerate


def _psd_square_root(m: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    """Return (L, L_inv) with m = L† L for Hermitian PSD full-rank m."""
    vals, vecs = np.linalg.eigh(m)
    if vals.min() < -qcore.ATOL_EIG_NEG:
        raise qcore.NumericalError(f"{what} fixed point significantly non-positive")
    vals = np.clip(vals, 0.0, None)
    if vals.min() <= 1e-12 * vals.max():
        raise NonInjectiveError(f"{what} fixed point is rank-deficient")
    root = np.sqrt(vals)
    l = root[:, None] * qcore.dagger(vecs)
    l_inv = vecs * (1.0 / root)[None, :]
    return l, l_inv


def canonicalize(a: UniformMps | np.ndarray) -> CanonicalForms:
    """Gauge a uniform MPS into left/right/mixed canonical form.

    Accepts raw tensors (not necessarily Kraus-complete); the overall scale
    is normalized away so the leading transfer eigenvalue becomes 1.
    Degenerate leading transfer magnitude is flagged, not fatal.
    """
    tensors = a.tensors if isinstance(a, UniformMps) else np.asarray(a, dtype=complex)
    d = tensors.shape[1]
    e = _transfer_superoperator(tensors)
    lam_r, r_fix, deg_r = _positive_fixed_point(e, d)
    lam_l, l_fix, deg_l = _positive_fixed_point(e.conj().T, d)
    lam = 0.5 * (lam_r + lam_l)
    tensors = tensors / np.sqrt(lam)

    l_root, l_root_inv = _psd_square_root(l_fix, "left")  # l = L† L
    r_vals, r_vecs = np.linalg.eigh(r_fix)
    if np.clip(r_vals, 0, None).min() <= 1e-12 * r_vals.max():
        raise NonInjectiveError("right fixed point is rank-deficient")
    r_root = r_vecs * np.sqrt(np.clip(r_vals, 0.0, None))[None, :]  # r = R R†
    r_root_inv = (1.0 / np.sqrt(np.clip(r_vals, 1e-300, None)))[:, None] * qcore.dagger(
        r_vecs
    )

    a_l = np.einsum("ij,xjk,kl->xil", l_root, tensors, l_root_inv)
    a_r = np.einsum("ij,xjk,kl->xil", r_root_inv, tensors, r_root)
    c = l_root @ r_root
    c = c / np.linalg.norm(c)
    a_c = np.einsum("xij,jk->xik", a_l, c)
    return CanonicalForms(a_l=a_l, a_r=a_r, a_c=a_c, c=c, degenerate=deg_r or deg_l)


def mixed_transfer(a: CanonicalForms, b: CanonicalForms, side: str) -> np.ndarray:
    """Overlap transfer Ē = Σ_x A^x ⊗ conj(B̃^x) in the requested gauge."""
    if a.d_out != b.d_out:
        raise ValueError("MPS must share an output alphabet")
    if side == "left":
        return sum(np.kron(x, y.conj()) for x, y in zip(a.a_l, b.a_l))
    if side == "right":
        return sum(np.kron(x, y.conj()) for x, y in zip(a.a_r, b.a_r))
    raise ValueError("side must be 'left' or 'right'")


def _phase_fixed(v: np.ndarray) -> np.ndarray:
    v = v / np.linalg.norm(v)
    pivot = v[np.argmax(np.abs(v))]
    return v * (abs(pivot) / pivot)


@dataclass
class TruncationState:
    """One iteration snapshot of the reduced tensors and gauges."""

    a_c: np.ndarray  # (d_out, d̃, d̃) updated center, already divided by eta
    c: np.ndarray  # (d̃, d̃)
    a_l: np.ndarray
    a_r: np.ndarray
    eta: complex
    g_l: np.ndarray  # (d̃, d)
    g_r: np.ndarray  # (d, d̃)
    delta: float
    iteration: int


def delta_value(a_c: np.ndarray, a_l: np.ndarray, c: np.ndarray) -> float:
    """Mixed-gauge self-consistency: Frobenius norm of (a_c − a_l c) over symbols."""
    diff = a_c - np.einsum("xij,jk->xik", a_l, c)
    return float(np.linalg.norm(diff))


def delta(state: TruncationState) -> float:
    """Convergence scalar of one iteration snapshot (center already eta-scaled)."""
    return delta_value(state.a_c, state.a_l, state.c)


def _extract_left_right(a_c: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Polar splits: a_l from stack(a_c) c†, a_r from c† hstack(a_c)."""
    d_out, dt, _ = a_c.shape
    tall = a_c.reshape(d_out * dt, dt)
    u_l, _ = scipy.linalg.polar(tall @ qcore.dagger(c))
    wide = np.concatenate([a_c[x] for x in range(d_out)], axis=1)
    u_r, _ = scipy.linalg.polar(qcore.dagger(c) @ wide)
    a_l = u_l.reshape(d_out, dt, dt)
    a_r = np.stack([u_r[:, x * dt : (x + 1) * dt] for x in range(d_out)])
    return a_l, a_r


@dataclass
class TruncationResult:
    mps: UniformMps
    per_site_overlap: float
    delta: float
    iterations: int
    converged: bool
    seed: int
    d: int
    d_tilde: int
    overlap_history: np.ndarray
    delta_history: np.ndarray
    restart_deltas: tuple[float, ...] = ()  # final delta of every restart

    def to_json(self) -> str:
        return json.dumps(
            {
                "d": self.d,
                "d_tilde": self.d_tilde,
                "seed": self.seed,
                "iterations": self.iterations,
                "final_delta": self.delta,
                "per_site_overlap": self.per_site_overlap,
                "converged": self.converged,
            }
        )


def _gauge_eigenpairs(e_l: np.ndarray, e_r: np.ndarray) -> tuple[complex, np.ndarray, np.ndarray]:
    """Leading left eigenvector of Ē_l and the Ē_r right eigenvector of the
    same eigenvalue (the two transfers share a spectrum)."""
    eta, v_l = qcore.leading_eigenpair(e_l.T)
    w, vecs = np.linalg.eig(e_r)
    j = int(np.argmin(np.abs(w - eta)))
    return complex(eta), v_l, vecs[:, j]


def _truncate_once(
    target: CanonicalForms,
    d_tilde: int,
    delta_thresh: float,
    max_iter: int,
    rng: np.random.Generator,
):
    d_out = target.d_out
    init = rng.normal(size=(d_out, d_tilde, d_tilde)) + 1j * rng.normal(
        size=(d_out, d_tilde, d_tilde)
    )
    try:
        reduced = canonicalize(init)
    except (NonInjectiveError, qcore.NumericalError):
        return None, None, None

    a_l, a_r = reduced.a_l, reduced.a_r
    best: TruncationState | None = None
    overlap_hist, delta_hist = [], []
    for it in range(1, max_iter + 1):
        e_l = sum(np.kron(x, y.conj()) for x, y in zip(target.a_l, a_l))
        e_r = sum(np.kron(x, y.conj()) for x, y in zip(target.a_r, a_r))
        eta, v_l, v_r = _gauge_eigenpairs(e_l, e_r)
        if abs(eta) < 1e-14:
            return None, None, None  # effectively orthogonal pair; hopeless restart
        g_l = _phase_fixed(v_l).reshape(target.bond_dim, d_tilde).T
        g_r = _phase_fixed(v_r).reshape(target.bond_dim, d_tilde)

        # the site projection grows by eta relative to the bond projection,
        # so only the center tensor is divided by it
        a_c = np.einsum("ai,xij,jb->xab", g_l, target.a_c, g_r) / eta
        c = g_l @ target.c @ g_r
        scale = np.linalg.norm(c)
        if scale < 1e-14:
            return None, None, None
        a_c, c = a_c / scale, c / scale
        a_l, a_r = _extract_left_right(a_c, c)
        dlt = delta_value(a_c, a_l, c)

        overlap_hist.append(abs(eta))
        delta_hist.append(dlt)
        state = TruncationState(
            a_c=a_c, c=c, a_l=a_l, a_r=a_r, eta=eta, g_l=g_l, g_r=g_r,
            delta=dlt, iteration=it,
        )
        if best is None or dlt < best.delta:
            best = state
        if dlt < delta_thresh:
            break
        if it - best.iteration > STALL_PATIENCE:
            break  # oscillating above threshold; keep the best iterate
    return best, np.array(overlap_hist), np.array(delta_hist)


def truncate(
    a: UniformMps,
    d_tilde: int,
    delta_thresh: float = 1e-8,
    max_iter: int = 500,
    restarts: int = 20,
    seed: int = 0,
) -> TruncationResult:
    """Best-of-restarts variational truncation of ``a`` to bond ``d_tilde``.

    Returns the reduced MPS in left-canonical form (hence Kraus-complete).
    Non-convergence within ``max_iter`` is reported via ``converged=False``
    on the best iterate rather than raised.
    """
    if d_tilde < 1 or d_tilde > a.bond_dim:
        raise ValueError("need 1 <= d_tilde <= bond dimension")
    target = canonicalize(a)
    children = np.random.SeedSequence([seed, 0x7472]).spawn(restarts)
    best: TruncationState | None = None
    best_hists = (None, None)
    best_seed = -1
    restart_deltas = []
    for i in range(restarts):
        rng = np.random.default_rng(children[i])
        state, ov_hist, dl_hist = _truncate_once(target, d_tilde, delta_thresh, max_iter, rng)
        if state is None:
            restart_deltas.append(float("nan"))
            continue
        restart_deltas.append(float(state.delta))
        if best is None or abs(state.eta) > abs(best.eta):
            best, best_hists, best_seed = state, (ov_hist, dl_hist), i
    if best is None:
        raise qcore.NumericalError("every truncation restart failed to initialize")
    return TruncationResult(
        mps=UniformMps(best.a_l),
        per_site_overlap=float(abs(best.eta)),
        delta=float(best.delta),
        iterations=best.iteration,
        converged=bool(best.delta < delta_thresh),
        seed=best_seed,
        d=a.bond_dim,
        d_tilde=d_tilde,
        overlap_history=best_hists[0],
        delta_history=best_hists[1],
        restart_deltas=tuple(restart_deltas),
    )
