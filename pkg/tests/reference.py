"""Independent reference computations used as test oracles.

Nothing here imports the package: chains, discriminants, hitting times,
the dense walk operator and phase estimation are rebuilt from their
definitions with plain numpy so that agreement is meaningful.
"""

import math

import numpy as np

# criterion number -> summary line, printed at the end of the session
ACCEPTANCE_LINES = {}


def random_reversible(n, rng, lazy=True, density=0.3):
    """``P = w / rowsum(w)`` for a random symmetric weight matrix on a connected graph."""
    w = np.zeros((n, n))
    order = rng.permutation(n)
    for i in range(1, n):
        a, b = order[i], order[rng.integers(i)]
        w[a, b] = w[b, a] = rng.uniform(0.2, 1.0)
    extra = np.triu(rng.random((n, n)) < density, 1)
    w = np.where(extra & (w == 0), rng.uniform(0.2, 1.0, (n, n)), w)
    w = np.maximum(w, w.T)
    w[np.diag_indices(n)] += rng.uniform(0.2, 1.0, n)
    P = w / w.sum(axis=1, keepdims=True)
    return 0.5 * (np.eye(n) + P) if lazy else P


def stationary(P):
    vals, vecs = np.linalg.eig(P.T)
    v = np.real(vecs[:, np.argmin(np.abs(vals - 1.0))])
    return v / v.sum()


def random_marked(P, rng, max_p_M=0.5):
    """Nonempty marked mask with ``p_M <= max_p_M``."""
    n = P.shape[0]
    pi = stationary(P)
    while True:
        m = int(rng.integers(1, max(1, n // 3) + 1))
        mask = np.zeros(n, dtype=bool)
        mask[rng.choice(n, size=m, replace=False)] = True
        if pi[mask].sum() <= max_p_M:
            return mask


def mask_of(members, n):
    mask = np.zeros(n, dtype=bool)
    mask[list(members)] = True
    return mask


def interpolated(P, mask, s):
    absorbing = P.copy()
    absorbing[mask] = 0.0
    absorbing[mask, np.flatnonzero(mask)] = 1.0
    return (1.0 - s) * P + s * absorbing


def discriminant(P):
    return np.sqrt(P * P.T)


def unmarked_state(P, mask):
    pi = stationary(P)
    u = np.where(mask, 0.0, np.sqrt(pi))
    return u / np.linalg.norm(u)


def hitting_time_matrix(P, mask):
    """``<U|(I - D_UU)^-1|U>`` by explicit inversion on the unmarked block."""
    keep = ~mask
    D = discriminant(P)[np.ix_(keep, keep)]
    u = unmarked_state(P, mask)[keep]
    return float(u @ np.linalg.inv(np.eye(keep.sum()) - D) @ u)


def hitting_time_spectral(P, mask, s):
    """``sum_{k != top} <v_k|U>^2 / (1 - lambda_k)`` from a fresh eigendecomposition of ``D(s)``."""
    lam, vec = np.linalg.eigh(discriminant(interpolated(P, mask, s)))
    alpha = vec.T @ unmarked_state(P, mask)
    return float(np.sum(alpha[:-1] ** 2 / (1.0 - lam[:-1])))


def sin2_theta(p_M, s):
    return p_M / (1.0 - s * (1.0 - p_M))


def s_of(p_star):
    return 1.0 - p_star / (1.0 - p_star)


def delta_sum(phi, t):
    """``|2^-t sum_l e^{i phi l} |`` as a literal sum."""
    N = 2**t
    return abs(np.exp(1j * phi * np.arange(N)).sum()) / N


def dense_walk(P):
    """``W = V^dagger Shift V ref_X`` with a QR-completed ``V`` (not the package's completion)."""
    n = P.shape[0]
    V = np.zeros((n * n, n * n))
    for x in range(n):
        first = np.sqrt(P[x])
        M = np.column_stack([first, np.eye(n)])
        q, _ = np.linalg.qr(M)
        q = q[:, :n] * np.sign(q[:, 0] @ first)
        V[x * n:(x + 1) * n, x * n:(x + 1) * n] = q
    S = np.eye(n * n)
    support = (P > 0) | (P.T > 0)
    for x in range(n):
        for y in range(n):
            if x < y and support[x, y]:
                S[[x * n + y, y * n + x]] = S[[y * n + x, x * n + y]]
    X = np.zeros(n * n)
    X[np.arange(n) * n] = 1.0
    ref = 2.0 * np.diag(X) - np.eye(n * n)
    return V.T @ S @ V @ ref


def walk_space(W, n):
    """Orthonormal basis of the smallest invariant subspace containing every ``|x>|0>``."""
    X = np.zeros((n * n, n))
    X[np.arange(n) * n, np.arange(n)] = 1.0
    basis = X
    while True:
        grown = np.hstack([basis, W @ basis, W.conj().T @ basis])
        u, sv, _ = np.linalg.svd(grown, full_matrices=False)
        rank = int((sv > 1e-9 * sv[0]).sum())
        if rank == basis.shape[1]:
            return u[:, :rank]
        basis = u[:, :rank]


def phase_estimation_joint(W, t, psi, n):
    """Joint law of (ancilla m, vertex x) from ``2^-t sum_l e^{-2 pi i l m / 2^t} W^l psi``."""
    N = 2**t
    powers = [psi.astype(complex)]
    for _ in range(N - 1):
        powers.append(W @ powers[-1])
    stack = np.array(powers)
    ks = np.arange(N)
    F = np.exp(-2j * np.pi * np.outer(ks, ks) / N) / N
    out = F @ stack
    probs = np.abs(out.reshape(N, n, n)) ** 2
    return probs.sum(axis=2)


def grid_chain(side):
    """Simple random walk on the torus with one self-loop: 1/5 to each of 5 moves."""
    n = side * side
    P = np.zeros((n, n))
    for i in range(side):
        for j in range(side):
            x = i * side + j
            for di, dj in ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)):
                y = ((i + di) % side) * side + (j + dj) % side
                P[x, y] += 0.2
    return P


def t_for(ht):
    return math.ceil(math.log2(10.0 * math.sqrt(ht)))
