"""Linear algebra for semistable continuous-time LTI systems.

A semistable matrix has semisimple zero eigenvalues and every other
eigenvalue in the open left half plane.  Gramians of such systems only
exist on the stable invariant subspace, so everything here works on the
decomposition ``A = Ubar Abar Vbar^T + u_max (.) v_max^T``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import IllConditioned, NotPSD, NotSemistable, NotStable, SolveFailed

KRONECKER_MAX_DIM = 30


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LtiSystem:
    """State-space model ``x' = (A + B K C) x + d``, ``y = C x``.

    ``B`` and ``K`` default to an empty actuation channel, in which case the
    closed-loop matrix equals ``A``.
    """

    A: np.ndarray
    C: np.ndarray
    B: np.ndarray = None
    K: np.ndarray = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        C = np.asarray(self.C, dtype=float).reshape(-1, n)
        B = np.zeros((n, 0)) if self.B is None else np.asarray(self.B, dtype=float).reshape(n, -1)
        p = B.shape[1]
        K = np.zeros((p, C.shape[0])) if self.K is None else np.asarray(self.K, dtype=float)
        if K.shape != (p, C.shape[0]):
            raise ValueError(f"K must be {p}x{C.shape[0]}, got {K.shape}")
        for name, mat in (("A", A), ("B", B), ("K", K), ("C", C)):
            if not np.all(np.isfinite(mat)):
                raise ValueError(f"{name} has non-finite entries")
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "B", _frozen(B))
        object.__setattr__(self, "K", _frozen(K))
        object.__setattr__(self, "C", _frozen(C))

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.C.shape[0]

    @property
    def p(self):
        return self.B.shape[1]

    @property
    def Acl(self):
        """Closed-loop matrix ``A + B K C``."""
        if self.p == 0:
            return self.A
        return self.A + self.B @ self.K @ self.C

    def with_outputs(self, C):
        """Autonomous system with the closed loop folded into ``A`` and new outputs."""
        return LtiSystem(self.Acl, C)


@dataclass(frozen=True)
class SubspaceDecomposition:
    U_bar: np.ndarray
    V_bar: np.ndarray
    A_bar: np.ndarray
    u_max: np.ndarray
    v_max: np.ndarray

    @property
    def z(self):
        return self.u_max.shape[1]

    @property
    def n(self):
        return self.U_bar.shape[0]


@dataclass(frozen=True)
class Gramian:
    W: np.ndarray
    side: str
    W_bar: np.ndarray = field(repr=False)


def default_tol_zero(A):
    return 1e-7 * max(np.linalg.norm(A, 2), 1.0)


def _null_basis(M, tol):
    _, s, vh = np.linalg.svd(M)
    rank = int(np.sum(s > tol))
    return vh[rank:].T


def stable_subspace(sys_or_A, tol_zero=None):
    """Split the state space into the zero-mode and the stable invariant subspace.

    Returns a ``SubspaceDecomposition`` with ``Vbar^T Ubar = I``,
    ``A Ubar = Ubar Abar`` and ``v_max^T u_max = I``.
    """
    A = sys_or_A.Acl if isinstance(sys_or_A, LtiSystem) else np.atleast_2d(np.asarray(sys_or_A, float))
    n = A.shape[0]
    if tol_zero is None:
        tol_zero = default_tol_zero(A)

    eig = np.linalg.eigvals(A)
    is_zero = np.abs(eig) <= tol_zero
    bad = eig[(~is_zero) & (eig.real > -tol_zero)]
    if bad.size:
        raise NotSemistable(f"eigenvalues with nonnegative real part: {bad}")
    z = int(is_zero.sum())

    if z == 0:
        I = np.eye(n)
        return SubspaceDecomposition(_frozen(I), _frozen(I), _frozen(A), _frozen(np.zeros((n, 0))),
                                     _frozen(np.zeros((n, 0))))

    u_max = _null_basis(A, tol_zero)
    v_max = _null_basis(A.T, tol_zero)
    if u_max.shape[1] != z or v_max.shape[1] != z:
        raise NotSemistable(
            f"zero eigenvalue is defective: algebraic multiplicity {z}, "
            f"geometric multiplicity {u_max.shape[1]}")
    # v_max^T u_max = I
    G = v_max.T @ u_max
    if np.linalg.cond(G) > 1e12:
        raise NotSemistable("left and right zero-mode bases are (numerically) orthogonal")
    v_max = v_max @ np.linalg.inv(G).T

    if z == n:
        empty = np.zeros((n, 0))
        return SubspaceDecomposition(_frozen(empty), _frozen(empty), _frozen(np.zeros((0, 0))),
                                     _frozen(u_max), _frozen(v_max))

    # ordered real Schur form: nonzero eigenvalues first
    _, Z, sdim = sla.schur(A, output="real", sort=lambda re, im: np.hypot(re, im) > tol_zero)
    if sdim != n - z:
        raise NotSemistable(f"Schur reordering found {sdim} stable eigenvalues, expected {n - z}")
    U_bar = Z[:, :sdim]
    if np.linalg.cond(np.hstack([U_bar, u_max])) > 1e12:
        raise IllConditioned("eigenvector basis condition number exceeds 1e12")

    # Vbar spans the orthogonal complement of u_max, scaled so that Vbar^T Ubar = I
    N = _null_basis(u_max.T, 0.5)
    M = N.T @ U_bar
    if np.linalg.cond(M) > 1e12:
        raise IllConditioned("stable subspace nearly contains the zero mode")
    V_bar = N @ np.linalg.inv(M).T
    A_bar = V_bar.T @ A @ U_bar
    return SubspaceDecomposition(_frozen(U_bar), _frozen(V_bar), _frozen(A_bar),
                                 _frozen(u_max), _frozen(v_max))


def lyapunov_residual(A, W, Q):
    """Relative residual of ``A W + W A^T + Q = 0``."""
    R = A @ W + W @ A.T + Q
    scale = np.linalg.norm(A) * np.linalg.norm(W) + np.linalg.norm(Q)
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(R) / scale)


def solve_lyapunov_kron(A, Q):
    """Dense vectorized solve of ``A W + W A^T + Q = 0``.

    ``vec(A W + W A^T) = (I kron A + A kron I) vec(W)``.
    """
    A = np.atleast_2d(np.asarray(A, float))
    Q = np.atleast_2d(np.asarray(Q, float))
    k = A.shape[0]
    I = np.eye(k)
    M = np.kron(I, A) + np.kron(A, I)
    try:
        w = np.linalg.solve(M, -Q.reshape(-1, order="F"))
    except np.linalg.LinAlgError as exc:
        raise SolveFailed(str(exc)) from exc
    W = w.reshape(k, k, order="F")
    return 0.5 * (W + W.T)


def solve_lyapunov(A_bar, Q, method="schur"):
    """Solve ``A_bar W + W A_bar^T + Q = 0`` for strictly stable ``A_bar``.

    ``method`` is ``"schur"`` (Bartels-Stewart) or ``"kron"``. The Schur
    solve falls back to the Kronecker form for small systems when its
    residual is poor.
    """
    A = np.atleast_2d(np.asarray(A_bar, float))
    Q = np.atleast_2d(np.asarray(Q, float))
    k = A.shape[0]
    if k == 0:
        return np.zeros((0, 0))
    if Q.shape != (k, k):
        raise ValueError(f"Q must be {k}x{k}, got {Q.shape}")
    if np.max(np.linalg.eigvals(A).real) >= 0:
        raise NotStable("A_bar has an eigenvalue with nonnegative real part")
    Q = 0.5 * (Q + Q.T)

    if method == "kron":
        return solve_lyapunov_kron(A, Q)
    if method != "schur":
        raise ValueError(f"unknown method {method!r}")

    try:
        W = sla.solve_continuous_lyapunov(A, -Q)
    except (np.linalg.LinAlgError, ValueError) as exc:
        if k > KRONECKER_MAX_DIM:
            raise SolveFailed(str(exc)) from exc
        return solve_lyapunov_kron(A, Q)
    W = 0.5 * (W + W.T)
    if not np.all(np.isfinite(W)) or lyapunov_residual(A, W, Q) > 1e-10:
        if k > KRONECKER_MAX_DIM:
            raise SolveFailed("Schur solve residual above 1e-10")
        W = solve_lyapunov_kron(A, Q)
    return W


def semistable_gramian(sys, side="observability", dec=None, method="schur"):
    """Gramian of a semistable system restricted to its stable subspace.

    The observability Gramian is lifted as ``Vbar Wbar Vbar^T`` so that
    ``x0^T W x0`` is the output energy from ``x0``; the controllability
    Gramian (identity disturbance input) as ``Ubar Wbar Ubar^T``.
    """
    if dec is None:
        dec = stable_subspace(sys)
    Ub, Vb, Ab = dec.U_bar, dec.V_bar, dec.A_bar
    if side == "observability":
        CU = sys.C @ Ub
        W_bar = solve_lyapunov(Ab.T, CU.T @ CU, method=method)
        W = Vb @ W_bar @ Vb.T
    elif side == "controllability":
        W_bar = solve_lyapunov(Ab, Vb.T @ Vb, method=method)
        W = Ub @ W_bar @ Ub.T
    else:
        raise ValueError(f"side must be 'observability' or 'controllability', got {side!r}")
    return Gramian(_frozen(0.5 * (W + W.T)), side, _frozen(W_bar))


def psd_factor(W, rtol=1e-12, neg_tol=1e-10):
    """Return ``W_L`` with ``W = W_L W_L^T`` and rank-many columns.

    Uses the symmetric eigendecomposition, so it works for rank-deficient
    ``W`` where a triangular Cholesky factorization would break down.
    """
    W = W.W if isinstance(W, Gramian) else np.atleast_2d(np.asarray(W, float))
    if W.size == 0:
        return np.zeros((W.shape[0], 0))
    W = 0.5 * (W + W.T)
    lam, Q = np.linalg.eigh(W)
    scale = max(np.abs(lam).max(), np.finfo(float).tiny)
    if lam.min() < -neg_tol * scale:
        raise NotPSD(f"eigenvalue {lam.min():.3e} below -{neg_tol:g}*||W||")
    keep = lam > rtol * scale
    # descending order, deterministic sign (largest-magnitude entry positive)
    idx = np.flatnonzero(keep)[::-1]
    Qk = Q[:, idx]
    signs = np.sign(Qk[np.argmax(np.abs(Qk), axis=0), np.arange(Qk.shape[1])])
    signs[signs == 0] = 1.0
    return Qk * signs * np.sqrt(lam[idx])


def h2_norm(A, B, C):
    """H2 norm of the strictly stable realization ``C (sI - A)^{-1} B``."""
    A = np.atleast_2d(np.asarray(A, float))
    B = np.asarray(B, float).reshape(A.shape[0], -1)
    C = np.asarray(C, float).reshape(-1, A.shape[0])
    Wc = solve_lyapunov(A, B @ B.T)
    return float(np.sqrt(max(np.trace(C @ Wc @ C.T), 0.0)))


def stable_part(sys, dec=None):
    """Stable-subspace realization ``(Abar, Vbar^T, C Ubar)`` of ``g(s) = C (sI - A)^{-1}``."""
    if dec is None:
        dec = stable_subspace(sys)
    return dec.A_bar, dec.V_bar.T, sys.C @ dec.U_bar


@dataclass(frozen=True)
class ObservabilityResult:
    rank: int
    is_observable: bool
    unobservable_eigenvalues: np.ndarray
    min_singular_values: np.ndarray

    def __bool__(self):
        return self.is_observable


def observability_rank(A, C_sub, tol=1e-9, eigenvalues=None):
    """PBH observability test.

    For each eigenvalue ``lam`` of ``A`` the numerical rank of
    ``[A - lam I; C_sub]`` is taken with threshold ``tol * sigma_max``.
    ``rank`` is the minimum over eigenvalues.
    """
    A = np.atleast_2d(np.asarray(A, float))
    n = A.shape[0]
    if n == 0:
        return ObservabilityResult(0, True, np.zeros(0, complex), np.zeros(0))
    C_sub = np.asarray(C_sub, float).reshape(-1, n)
    lams = np.linalg.eigvals(A) if eigenvalues is None else np.asarray(eigenvalues)
    ranks, smins, unobs = [], [], []
    I = np.eye(n)
    for lam in lams:
        M = np.vstack([A - lam * I, C_sub.astype(complex)])
        s = np.linalg.svd(M, compute_uv=False)
        if s.size == 0 or s[0] == 0:
            r = 0
            smin = 0.0
        else:
            r = int(np.sum(s > tol * s[0]))
            smin = float(s[n - 1] / s[0]) if s.size >= n else 0.0
        ranks.append(r)
        smins.append(smin)
        if r < n:
            unobs.append(lam)
    rank = min(ranks)
    return ObservabilityResult(rank, rank == n, np.array(unobs, complex), np.array(smins))
