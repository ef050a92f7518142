"""Combined-cost evaluation and optimization of the two compression circuits.

Given a black-box target model and an ensemble of sampled memory states, a
decoupling circuit V rotates the memory so that the last (n - ñ) qubits
(the trash register) factor into |0...0⟩, and a reduced circuit Ũ on the
retained memory plus the output register emulates one step of the target.
Both are trained jointly against

    C(θ1, θ2) = -(1/K) Σ_i [ α D_i + β F_i ]

where D_i is the trash-register |0⟩ population after V and F_i the cosine
similarity between the Ũ†-recovered one-step state and the reference state.

The target is consumed only through applying its unitary to explicit joint
states (once per ensemble member) and, upstream, trajectory sampling; the
trainer never inspects the matrix.

Gradients use the parameter-shift rule: every circuit-dependent state has
trigonometric degree one in each angle, so two-point ±π/2 shifts give the
exact state derivatives, which are chain-ruled through the scalar cost.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.optimize

from . import ansatz, qcore
from .ansatz import AnsatzSpec
from .rqm import MemoryEnsemble, Rqm

DEDUP_ATOL = 1e-13


@dataclass(frozen=True)
class ReductionProblem:
    """Everything needed to compress ``target`` to ``n_reduced`` memory qubits."""

    target: Rqm
    ensemble: MemoryEnsemble
    n_reduced: int
    v_spec: AnsatzSpec
    u_spec: AnsatzSpec
    alpha: float = 1.0
    beta: float = 1.0
    seed: int = 0

    def __post_init__(self):
        n = self.target.n_mem
        if not 1 <= self.n_reduced < n:
            raise ValueError("need 1 <= n_reduced < n_mem")
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("cost weights must be positive")
        if self.v_spec.n_qubits != n:
            raise ValueError("decoupling circuit must act on all memory qubits")
        out_qubits = int(np.log2(self.target.d_out))
        if self.u_spec.n_qubits != self.n_reduced + out_qubits:
            raise ValueError("reduced circuit must act on retained memory + output")
        if self.ensemble.n_mem != n or self.ensemble.d_out != self.target.d_out:
            raise ValueError("ensemble does not match the target model")
        if self.ensemble.k == 0:
            raise ValueError("ensemble is empty")

    @property
    def n_params(self) -> tuple[int, int]:
        return ansatz.param_count(self.v_spec), ansatz.param_count(self.u_spec)


def decoupling_fidelity(v: np.ndarray, s: np.ndarray, n_reduced: int) -> float:
    """Population of |0...0⟩ on the trash register of V|s⟩.

    The trash register is the last (n - ñ) memory qubits; equals 1 exactly
    when V|s⟩ is a product (retained ⊗ |0...0⟩) state.
    """
    dim = len(s)
    d_ret = 2**n_reduced
    w = (v @ s).reshape(d_ret, dim // d_ret)
    return float((np.abs(w[:, 0]) ** 2).sum())


def reduced_state(target: Rqm, v: np.ndarray, s: np.ndarray, n_reduced: int) -> np.ndarray:
    """One target step from |s⟩, decoupled by V, trash traced out."""
    joint = np.kron(s, qcore.basis_state(target.d_out, 0))
    phi = target.apply(joint)
    chi = (v @ phi.reshape(target.dim_mem, target.d_out)).reshape(
        2**n_reduced, target.dim_mem // 2**n_reduced, target.d_out
    )
    rho = np.einsum("atx,bty->axby", chi, chi.conj())
    d_red = 2**n_reduced * target.d_out
    return rho.reshape(d_red, d_red)


def reference_state(v: np.ndarray, s: np.ndarray, n_reduced: int, d_out: int) -> np.ndarray:
    """Retained part of V|s⟩⟨s|V† joined with a fresh |0⟩⟨0| output register."""
    d_ret = 2**n_reduced
    w = (v @ s).reshape(d_ret, len(s) // d_ret)
    tau = w @ qcore.dagger(w)
    out0 = np.zeros((d_out, d_out), dtype=complex)
    out0[0, 0] = 1.0
    return np.kron(tau, out0)


def dynamical_fidelity(u_tilde: np.ndarray, rho_i: np.ndarray, sigma_i: np.ndarray) -> float:
    """Cosine similarity between the Ũ†-recovered state and the reference state."""
    recovered = qcore.dagger(u_tilde) @ rho_i @ u_tilde
    return qcore.cosine_similarity(recovered, sigma_i)


def _dedup_states(states: np.ndarray, atol: float = DEDUP_ATOL):
    """Collapse ensemble states equal up to global phase into (uniques, weights)."""
    uniques: list[np.ndarray] = []
    weights: list[int] = []
    for s in states:
        for i, u in enumerate(uniques):
            ov = np.vdot(u, s)
            if abs(ov) >= 1.0 - 1e-9 and np.abs(s - (ov / abs(ov)) * u).max() <= atol:
                weights[i] += 1
                break
        else:
            uniques.append(s)
            weights.append(1)
    return np.stack(uniques), np.array(weights, dtype=float)


class CostEvaluator:
    """Batched evaluation of the combined cost and its exact gradient.

    Precomputes the target's action on every (deduplicated) ensemble member;
    afterwards cost and gradient never touch the target again.  Shifted
    circuits are processed in chunks so the per-parameter work is a handful
    of large contractions instead of many tiny ones.
    """

    def __init__(self, problem: ReductionProblem, chunk_pairs: int = 32):
        self.problem = problem
        self.chunk_pairs = chunk_pairs
        t = problem.target
        self.n = t.n_mem
        self.nr = problem.n_reduced
        self.d_ret = 2**self.nr
        self.d_trash = t.dim_mem // self.d_ret
        self.d_out = t.d_out
        self.d_red = self.d_ret * self.d_out

        states, weights = _dedup_states(problem.ensemble.states)
        self.states = states.T.copy()  # (dim_mem, M)
        self.weights = weights
        self.total_weight = weights.sum()
        self.m = len(weights)
        out0 = qcore.basis_state(self.d_out, 0)
        joints = np.stack([np.kron(s, out0) for s in states])
        phi = np.stack([t.apply(j) for j in joints])  # (M, dim_mem * d_out)
        # memory-factor matrix form of the evolved states, so V applies by one matmul
        phi_mem = phi.reshape(self.m, t.dim_mem, self.d_out).transpose(1, 0, 2)
        self.v_rhs = np.concatenate(
            [self.states, phi_mem.reshape(t.dim_mem, self.m * self.d_out)], axis=1
        )
        # Ũ enters only through its out=0 column block
        self.u_rhs = np.eye(2 ** problem.u_spec.n_qubits, dtype=complex)[:, :: self.d_out]

    # -- forward pieces ---------------------------------------------------

    def _parts(self, applied: np.ndarray):
        """Per-member (D, tau, rho) from a stack of V-applied right-hand sides."""
        s, _, _ = applied.shape
        m, r, t, o = self.m, self.d_ret, self.d_trash, self.d_out
        w = applied[:, :, :m].transpose(0, 2, 1).reshape(s * m, r, t)
        d = (np.abs(w[:, :, 0]) ** 2).sum(axis=1).reshape(s, m)
        tau = (w @ w.conj().transpose(0, 2, 1)).reshape(s, m, r, r)
        chi = (
            applied[:, :, m:]
            .reshape(s, r * t, m, o)
            .transpose(0, 2, 1, 3)
            .reshape(s * m, r, t, o)
            .transpose(0, 1, 3, 2)
            .reshape(s * m, r * o, t)
        )
        rho = (chi @ chi.conj().transpose(0, 2, 1)).reshape(s, m, self.d_red, self.d_red)
        return d, tau, rho

    def _numerators(self, u0: np.ndarray, rho: np.ndarray, tau: np.ndarray) -> np.ndarray:
        """Tr[Ũ† rho_i Ũ sigma_i] for a stack of out=0 column blocks."""
        t1 = np.matmul(rho[None], u0[:, None])  # (S, M, dr, r)
        t2 = np.matmul(u0.conj().transpose(0, 2, 1)[:, None], t1)  # (S, M, r, r)
        return np.einsum("smab,mba->sm", t2, tau).real

    def components(self, theta1: np.ndarray, theta2: np.ndarray):
        """Per-member decoupling and dynamical fidelities (D_i, F_i)."""
        v = ansatz.build_unitary(self.problem.v_spec, theta1)
        u_t = ansatz.build_unitary(self.problem.u_spec, theta2)
        d, tau, rho = self._parts((v @ self.v_rhs)[None])
        d, tau, rho = d[0], tau[0], rho[0]
        a = np.einsum("mij,mij->m", rho, rho.conj()).real
        b = np.einsum("mij,mij->m", tau, tau.conj()).real
        n_num = self._numerators(u_t[:, :: self.d_out][None], rho, tau)[0]
        f = n_num / np.sqrt(a * b)
        return d, f

    def cost(self, theta1: np.ndarray, theta2: np.ndarray) -> float:
        d, f = self.components(theta1, theta2)
        per = self.problem.alpha * d + self.problem.beta * f
        return float(-(self.weights @ per) / self.total_weight)

    def mean_fidelities(self, theta1: np.ndarray, theta2: np.ndarray) -> tuple[float, float]:
        d, f = self.components(theta1, theta2)
        wt = self.weights / self.total_weight
        return float(wt @ d), float(wt @ f)

    # -- gradient ---------------------------------------------------------

    def cost_and_grad(self, theta1: np.ndarray, theta2: np.ndarray):
        """Combined cost and its exact parameter-shift gradient (θ1 then θ2)."""
        prob = self.problem
        alpha, beta = prob.alpha, prob.beta
        wt = self.weights / self.total_weight

        v = ansatz.build_unitary(prob.v_spec, theta1)
        u_t = ansatz.build_unitary(prob.u_spec, theta2)
        u0 = u_t[:, :: self.d_out]

        d, tau, rho = self._parts((v @ self.v_rhs)[None])
        d, tau, rho = d[0], tau[0], rho[0]
        a = np.einsum("mij,mij->m", rho, rho.conj()).real
        b = np.einsum("mij,mij->m", tau, tau.conj()).real
        n_num = self._numerators(u0[None], rho, tau)[0]
        sqrt_ab = np.sqrt(a * b)
        f = n_num / sqrt_ab
        cost = float(-(wt @ (alpha * d + beta * f)))

        # fixed-circuit intermediates for the θ1 chain rule
        kappa = np.einsum("ia,mab,jb->mij", u0, tau, u0.conj())  # Ũ0 τ Ũ0†
        mu = np.einsum("ca,mcd,db->mab", u0.conj(), rho, u0)  # Ũ0† ρ Ũ0

        grad1 = np.zeros(len(theta1))
        for idx, stack in _chunked_shift_stacks(
            prob.v_spec, theta1, self.v_rhs, self.chunk_pairs
        ):
            dall, tall, rall = self._parts(stack)
            dd = (dall[0::2] - dall[1::2]) / 2.0
            dtau = (tall[0::2] - tall[1::2]) / 2.0
            drho = (rall[0::2] - rall[1::2]) / 2.0
            dn = (
                np.einsum("kmij,mij->km", drho, kappa.conj()).real
                + np.einsum("mab,kmab->km", mu, dtau.conj()).real
            )
            da = 2.0 * np.einsum("kmij,mij->km", drho, rho.conj()).real
            db = 2.0 * np.einsum("kmab,mab->km", dtau, tau.conj()).real
            df = dn / sqrt_ab - (f / 2.0) * (da / a + db / b)
            grad1[idx] = -((alpha * dd + beta * df) @ wt)

        grad2 = np.zeros(len(theta2))
        for idx, stack in _chunked_shift_stacks(
            prob.u_spec, theta2, self.u_rhs, self.chunk_pairs
        ):
            nums = self._numerators(stack, rho, tau)
            dn = (nums[0::2] - nums[1::2]) / 2.0
            grad2[idx] = -(beta * (dn / sqrt_ab) @ wt)

        return cost, np.concatenate([grad1, grad2])


def _chunked_shift_stacks(spec, theta, rhs, chunk_pairs):
    """Group shifted-circuit products into (param indices, stacked ±pairs)."""
    idx, mats = [], []
    for k, up, um in ansatz.shifted_products(spec, theta, rhs):
        idx.append(k)
        mats.append(up)
        mats.append(um)
        if len(idx) == chunk_pairs:
            yield np.array(idx), np.stack(mats)
            idx, mats = [], []
    if idx:
        yield np.array(idx), np.stack(mats)


def combined_cost(problem: ReductionProblem, theta1: np.ndarray, theta2: np.ndarray) -> float:
    """C(θ1, θ2) = -(1/K) Σ_i [α D_i + β F_i]; deterministic, in [-(α+β), 0]."""
    return CostEvaluator(problem).cost(theta1, theta2)


def combined_cost_gradient(
    problem: ReductionProblem, theta1: np.ndarray, theta2: np.ndarray
) -> np.ndarray:
    """Exact parameter-shift gradient of the combined cost, θ1 block then θ2."""
    _, g = CostEvaluator(problem).cost_and_grad(theta1, theta2)
    return g


@dataclass
class TrainResult:
    theta1: np.ndarray
    theta2: np.ndarray
    cost_trace: np.ndarray
    d_bar: float
    f_bar: float
    iterations: int
    converged: bool
    restarts_used: int = 0

    @property
    def final_cost(self) -> float:
        return float(self.cost_trace[-1])


class _WindowConverged(Exception):
    pass


def train(
    problem: ReductionProblem,
    max_iter: int = 2000,
    tol_cost: float = 1e-9,
    tol_grad: float = 1e-7,
    window: int = 5,
    max_restarts: int = 3,
    init_scale: float = 0.1,
    two_phase: bool = False,
    theta0: np.ndarray | None = None,
) -> TrainResult:
    """Minimize the combined cost with L-BFGS (history 10, strong Wolfe).

    Convergence: |ΔC| < tol_cost over a window of accepted steps, or gradient
    ∞-norm < tol_grad, or the iteration cap.  A line-search failure restarts
    from the best point with perturbed parameters, up to ``max_restarts``
    times, after which the best-so-far is returned with converged=False.

    ``two_phase=True`` first optimizes the decoupling angles against the
    decoupling term alone, then both blocks against the full cost (ablation
    mode).  ``theta0`` resumes from a previous parameter vector.
    """
    ev = CostEvaluator(problem)
    p1, p2 = problem.n_params
    rng = np.random.default_rng(np.random.SeedSequence([problem.seed, 0x7261]))
    if theta0 is None:
        theta0 = np.concatenate(
            [
                ansatz.random_params(problem.v_spec, rng, scale=init_scale),
                ansatz.random_params(problem.u_spec, rng, scale=init_scale),
            ]
        )
    else:
        theta0 = np.asarray(theta0, dtype=float).copy()
        if len(theta0) != p1 + p2:
            raise ValueError("theta0 length does not match the circuit specs")

    if two_phase:
        theta0[:p1] = _optimize_decoupling(ev, theta0[:p1], max_iter, tol_grad)

    best = {"x": theta0.copy(), "c": np.inf}
    trace: list[float] = []

    def objective(x):
        c, g = ev.cost_and_grad(x[:p1], x[p1:])
        if two_phase:
            g = g.copy()
            g[:p1] = 0.0  # decoupling block frozen in phase two
        if c < best["c"]:
            best["c"], best["x"] = c, x.copy()
        return c, g

    def callback(xk):
        c = ev.cost(xk[:p1], xk[p1:])
        trace.append(c)
        if len(trace) > window and abs(trace[-1 - window] - trace[-1]) < tol_cost:
            raise _WindowConverged

    converged = False
    iterations = 0
    restarts = 0
    x_start = theta0
    while True:
        window_hit = False
        try:
            res = scipy.optimize.minimize(
                objective,
                x_start,
                jac=True,
                method="L-BFGS-B",
                options={
                    "maxiter": max(max_iter - iterations, 1),
                    "maxcor": 10,
                    "ftol": 0.0,
                    "gtol": tol_grad,
                },
                callback=callback,
            )
            iterations += int(res.nit)
            line_search_failed = res.status == 2
        except _WindowConverged:
            window_hit = True
            iterations = len(trace)
            line_search_failed = False
        if window_hit or not line_search_failed or iterations >= max_iter:
            converged = window_hit or not line_search_failed or iterations >= max_iter
            break
        if restarts >= max_restarts:
            converged = False
            break
        restarts += 1
        x_start = best["x"] + rng.normal(scale=0.01, size=len(theta0))

    x = best["x"]
    if not trace or ev.cost(x[:p1], x[p1:]) < trace[-1]:
        trace.append(ev.cost(x[:p1], x[p1:]))
    d_bar, f_bar = ev.mean_fidelities(x[:p1], x[p1:])
    return TrainResult(
        theta1=x[:p1],
        theta2=x[p1:],
        cost_trace=np.array(trace),
        d_bar=d_bar,
        f_bar=f_bar,
        iterations=iterations,
        converged=converged,
        restarts_used=restarts,
    )


def _optimize_decoupling(ev: CostEvaluator, theta1: np.ndarray, max_iter: int, tol_grad: float):
    """Phase one of the two-phase mode: maximize the mean decoupling term."""
    prob = ev.problem
    wt = ev.weights / ev.total_weight

    def objective(t1):
        grad = np.zeros(len(t1))
        v = ansatz.build_unitary(prob.v_spec, t1)
        d, _, _ = ev._parts((v @ ev.v_rhs)[None])
        for idx, stack in _chunked_shift_stacks(prob.v_spec, t1, ev.v_rhs, ev.chunk_pairs):
            dall, _, _ = ev._parts(stack)
            grad[idx] = -((dall[0::2] - dall[1::2]) / 2.0) @ wt
        return float(-(d[0] @ wt)), grad

    res = scipy.optimize.minimize(
        objective,
        theta1,
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_iter, "maxcor": 10, "gtol": tol_grad},
    )
    return res.x


@dataclass(frozen=True)
class PlantedTarget:
    """Exactly compressible target: a qubit permutation, a block unitary, nothing else."""

    model: Rqm
    w: np.ndarray
    qubit_perm: tuple[int, ...]


def planted_target(
    n_mem: int, n_reduced: int, out_qubits: int = 1, seed: int = 0
) -> PlantedTarget:
    """Build U = P† (W ⊗ I_trash) P with a random memory-qubit permutation P.

    The global optimum of the combined cost is exactly -(α+β): the inverse
    permutation decouples the trash register and W reproduces the dynamics.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x504c]))
    d_out = 2**out_qubits
    w = qcore.random_unitary(2**n_reduced * d_out, rng)
    perm = tuple(rng.permutation(n_mem).tolist())

    idx = np.arange(2**n_mem).reshape([2] * n_mem).transpose(perm).ravel()
    p_mem = np.eye(2**n_mem)[idx].astype(complex)
    p_full = np.kron(p_mem, np.eye(d_out))

    layout = qcore.SubsystemLayout.of(2**n_reduced, 2 ** (n_mem - n_reduced), d_out)
    core = qcore.embed_operator(w, layout, [0, 2])
    u = qcore.dagger(p_full) @ core @ p_full
    model = Rqm(n_mem=n_mem, d_out=d_out, u=u)
    return PlantedTarget(model=model, w=w, qubit_perm=perm)
