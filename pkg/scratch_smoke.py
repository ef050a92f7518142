"""Dev smoke checks (not part of the deliverable)."""
import numpy as np

from rqmcompress import qcore, rqm, cyclicwalk, ansatz, training, qfdr, baseline

rng = np.random.default_rng(0)

print("== qcore ==")
lay = qcore.SubsystemLayout.of(2, 2, 2)
psi = qcore.random_state(8, rng)
u = qcore.random_unitary(2, rng)
out = qcore.apply_on_subsystems(u, psi, lay, [1])
dense = qcore.kron_all(np.eye(2), u, np.eye(2)) @ psi
print("apply-mid err:", np.abs(out - dense).max())
u2 = qcore.random_unitary(4, rng)
out2 = qcore.apply_on_subsystems(u2, psi, lay, [2, 0])
dense2 = qcore.embed_operator(u2, lay, [2, 0]) @ psi
print("apply-perm err:", np.abs(out2 - dense2).max())

rho = qcore.random_density(4, rng)
lay2 = qcore.SubsystemLayout.of(2, 2)
pt = qcore.partial_trace(rho, lay2, [0])
oracle = np.array([[sum(rho[2*i+k, 2*j+k] for k in range(2)) for j in range(2)] for i in range(2)])
print("ptrace err:", np.abs(pt - oracle).max())
print("cos(I/2,|0><0|):", qcore.cosine_similarity(np.eye(2)/2, np.diag([1.0, 0.0]).astype(complex)))

print("== cyclic walk ==")
q = cyclicwalk.discretize_shift(cyclicwalk.WrappedGaussian(0.0, 0.05), 8)
print("gauss masses sum:", q.sum())
p = cyclicwalk.transition_matrix(q)
model = cyclicwalk.build_model(p)
print("built model n=3; unitary ok")
sig = cyclicwalk.memory_states(cyclicwalk.gram_matrix(p))
g = cyclicwalk.gram_matrix(p)
print("gram reproduction err:", np.abs(qcore.dagger(sig) @ sig - g).max())
# Eq action check
err = 0.0
for j in range(8):
    dom = np.kron(sig[:, j], qcore.basis_state(8, 0))
    img = sum(np.sqrt(p[k, j]) * np.kron(sig[:, k], qcore.basis_state(8, k)) for k in range(8))
    err = max(err, np.abs(model.u @ dom - img).max())
print("sector action err:", err)
st = rqm.exact_stationary(rqm.kraus_from_unitary(model))
print("stationary degenerate:", st.degenerate, "cq:", rqm.cq(st.rho), "n:", 3)

# identity transition
p_id = cyclicwalk.transition_matrix(cyclicwalk.discretize_shift(cyclicwalk.PointMass(0.0), 4))
m_id = cyclicwalk.build_model(p_id)
for j in range(4):
    v = m_id.u @ np.kron(qcore.basis_state(4, j), qcore.basis_state(4, 0))
    expect = np.kron(qcore.basis_state(4, j), qcore.basis_state(4, j))
    assert np.abs(v - expect).max() < 1e-9, (j, v)
print("identity-walk sector action ok")
stp = rqm.exact_stationary(rqm.kraus_from_unitary(m_id))
print("perm-walk stationary = I/N err:", np.abs(stp.rho - np.eye(4)/4).max(), "flag:", stp.degenerate)

print("== ansatz ==")
for (n, L, expect) in [(2, 1, 18), (3, 2, 51), (1, 0, 3)]:
    got = ansatz.param_count(ansatz.AnsatzSpec(n, L))
    print(f"params({n},{L}) = {got} expect {expect}")
spec = ansatz.AnsatzSpec(2, 1)
u0 = ansatz.build_unitary(spec, np.zeros(18))
cnot = np.eye(4)[[0, 1, 3, 2]]
print("zero-angle == CNOT01:", np.abs(u0 - cnot).max())
spec3 = ansatz.AnsatzSpec(3, 2)
th = ansatz.random_params(spec3, rng, uniform_2pi=True)
uu = ansatz.build_unitary(spec3, th)
print("unitarity err:", np.linalg.norm(qcore.dagger(uu) @ uu - np.eye(8)))
# gradient example: <0|U† Z U|0> for single u3 (t,0,0) → derivative -sin t
spec1 = ansatz.AnsatzSpec(1, 0)
z = np.diag([1.0, -1.0]).astype(complex)
e0 = qcore.basis_state(2, 0)
cost = lambda u: float((qcore.dagger(e0) @ qcore.dagger(u) @ z @ u @ e0).real)
t = np.pi / 3
gr = ansatz.gradient(spec1, np.array([t, 0.0, 0.0]), cost)
print("dcost/dt at pi/3:", gr[0], "expect", -np.sin(t))

print("== training cost vs naive ==")
target = training.planted_target(2, 1, out_qubits=1, seed=1)
ens = rqm.sample_memory_ensemble(target.model, k=24, burn_in=12, seed=3)
prob = training.ReductionProblem(
    target=target.model, ensemble=ens, n_reduced=1,
    v_spec=ansatz.AnsatzSpec(2, 2), u_spec=ansatz.AnsatzSpec(2, 2), seed=0,
)
rng2 = np.random.default_rng(7)
th1 = ansatz.random_params(prob.v_spec, rng2, uniform_2pi=True)
th2 = ansatz.random_params(prob.u_spec, rng2, uniform_2pi=True)
c_fast = training.combined_cost(prob, th1, th2)

def naive_cost(problem, th1, th2):
    v = ansatz.build_unitary(problem.v_spec, th1)
    ut = ansatz.build_unitary(problem.u_spec, th2)
    t = problem.target
    n, nr, do = t.n_mem, problem.n_reduced, t.d_out
    lay_mem = qcore.SubsystemLayout.of(2**nr, 2**(n-nr))
    lay_full = qcore.SubsystemLayout.of(2**nr, 2**(n-nr), do)
    tot = 0.0
    for s in problem.ensemble.states:
        vs = v @ s
        rho_mem = np.outer(vs, vs.conj())
        tau = qcore.partial_trace(rho_mem, lay_mem, [0])
        trash = qcore.partial_trace(rho_mem, lay_mem, [1])
        d_i = trash[0, 0].real
        joint = np.kron(s, qcore.basis_state(do, 0))
        phi = t.u @ joint
        chi = qcore.kron(v, np.eye(do)) @ phi
        rho_i = qcore.partial_trace(np.outer(chi, chi.conj()), lay_full, [0, 2])
        out0 = np.zeros((do, do), dtype=complex); out0[0, 0] = 1
        sigma_i = np.kron(tau, out0)
        rec = qcore.dagger(ut) @ rho_i @ ut
        f_i = qcore.cosine_similarity(rec, sigma_i)
        tot += problem.alpha * d_i + problem.beta * f_i
    return -tot / len(problem.ensemble.states)

c_naive = naive_cost(prob, th1, th2)
print("cost fast vs naive:", c_fast, c_naive, "diff:", abs(c_fast - c_naive))

print("== gradient vs finite differences ==")
ev = training.CostEvaluator(prob)
c0, g = ev.cost_and_grad(th1, th2)
x = np.concatenate([th1, th2])
h = 1e-5
idxs = rng2.choice(len(x), size=8, replace=False)
fd = []
for i in idxs:
    xp = x.copy(); xp[i] += h
    xm = x.copy(); xm[i] -= h
    fd.append((ev.cost(xp[:len(th1)], xp[len(th1):]) - ev.cost(xm[:len(th1)], xm[len(th1):])) / (2*h))
fd = np.array(fd)
print("grad err (sampled):", np.abs(g[idxs] - fd).max(), "scale:", np.abs(fd).max())

print("== qfdr ==")
a = qfdr.mps_from_model(model)  # N=8 walk
r_aa = qfdr.qfdr(a, a)
print("qfdr(a,a):", r_aa.r_f)

q4 = cyclicwalk.discretize_shift(cyclicwalk.WrappedGaussian(0.0, 0.125), 4)
p4 = cyclicwalk.transition_matrix(q4)
m4 = cyclicwalk.build_model(p4)
a4 = qfdr.mps_from_model(m4)
print("== baseline truncate N=4 σ=0.125 to bond 2 ==")
res = baseline.truncate(a4, 2, seed=0, restarts=6, max_iter=300)
print("overlap:", res.per_site_overlap, "delta:", res.delta, "iters:", res.iterations, "conv:", res.converged)
r = qfdr.qfdr(a4, res.mps)
print("qfdr(target, truncated):", r.r_f, "lams:", r.lambda_ab, r.lambda_aa, r.lambda_bb)
bf = qfdr.brute_force_rate(a4, res.mps, 6)
print("brute slopes:", bf.slopes)
print("slope_5 vs r_f:", bf.slopes[4], r.r_f, "diff:", abs(bf.slopes[4] - r.r_f))

print("== baseline d~=d recovery ==")
res_full = baseline.truncate(a4, 4, seed=0, restarts=3, max_iter=500, delta_thresh=1e-10)
print("delta:", res_full.delta, "conv:", res_full.converged, "overlap:", res_full.per_site_overlap)
r_full = qfdr.qfdr(a4, res_full.mps)
print("qfdr(a, recovered):", r_full.r_f)
