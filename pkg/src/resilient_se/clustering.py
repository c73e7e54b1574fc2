"""Output clustering on the Gramian similarity factor.

Row ``i`` of ``Phi`` is a static fingerprint of output ``i``: for any
coefficients ``p``, ``||p_j Phi_i - p_i Phi_j||`` equals the H2 norm of
``p_j g_i - p_i g_j`` restricted to the stable subspace, where ``g`` is the
disturbance-to-output transfer matrix.  Outputs whose rows are nearly
parallel respond nearly proportionally and are grouped together.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AllMeasurementsAttacked, DegenerateCluster, UncoveredCluster, ZeroRow
from .lti import psd_factor, solve_lyapunov, stable_subspace

ZERO_ROW_RTOL = 1e-10


@dataclass(frozen=True)
class SimilarityFactor:
    Phi: np.ndarray
    row_norms: np.ndarray

    @property
    def m(self):
        return self.Phi.shape[0]

    def zero_rows(self, rtol=ZERO_ROW_RTOL):
        scale = self.row_norms.max() if self.row_norms.size else 0.0
        return np.flatnonzero(self.row_norms <= rtol * scale) if scale > 0 else np.arange(self.m)


def compute_phi(sys, dec=None, method="schur"):
    """``Phi = (C Ubar) F`` with ``F F^T`` the reduced controllability Gramian.

    ``Abar Wc + Wc Abar^T + Vbar^T Vbar = 0`` (disturbance enters every state
    with unit gain).
    """
    if dec is None:
        dec = stable_subspace(sys)
    Vt = dec.V_bar.T
    Wc = solve_lyapunov(dec.A_bar, Vt @ Vt.T, method=method)
    Phi = (sys.C @ dec.U_bar) @ psd_factor(Wc)
    return SimilarityFactor(Phi, np.linalg.norm(Phi, axis=1))


def _unit_rows(phi):
    norms = phi.row_norms
    with np.errstate(invalid="ignore", divide="ignore"):
        return phi.Phi / norms[:, None]


def dissimilarity(phi, i, j):
    """Sign-invariant distance between the directions of rows ``i`` and ``j``."""
    if i == j:
        return 0.0
    zero = set(phi.zero_rows().tolist())
    for k in (i, j):
        if k in zero:
            raise ZeroRow(f"row {k} of Phi is zero")
    a = phi.Phi[i] / phi.row_norms[i]
    b = phi.Phi[j] / phi.row_norms[j]
    return float(min(np.linalg.norm(a - b), np.linalg.norm(a + b)))


def pairwise_dissimilarity(phi, rows=None):
    """Matrix of ``dissimilarity`` over ``rows`` (default: all nonzero rows)."""
    if rows is None:
        rows = np.setdiff1d(np.arange(phi.m), phi.zero_rows())
    U = _unit_rows(phi)[rows]
    diff = np.linalg.norm(U[:, None, :] - U[None, :, :], axis=2)
    summ = np.linalg.norm(U[:, None, :] + U[None, :, :], axis=2)
    D = np.minimum(diff, summ)
    np.fill_diagonal(D, 0.0)
    return D


@dataclass(frozen=True)
class Merge:
    height: float
    left: tuple
    right: tuple


def complete_linkage(D):
    """Greedy agglomeration with complete linkage.

    Returns the merge sequence over local indices ``0..len(D)-1``.  A merged
    cluster lives in the slot of its smallest member, so the row-major
    ``argmin`` resolves ties toward the lowest-index pair.
    """
    D = np.asarray(D, float)
    n = D.shape[0]
    link = D.copy()
    np.fill_diagonal(link, np.inf)
    members = {i: (i,) for i in range(n)}
    merges = []
    for _ in range(n - 1):
        a, b = divmod(int(np.argmin(link)), n)
        merges.append(Merge(float(link[a, b]), members[a], members[b]))
        row = np.maximum(link[a], link[b])
        link[a, :] = row
        link[:, a] = row
        link[a, a] = np.inf
        link[b, :] = np.inf
        link[:, b] = np.inf
        members[a] = tuple(sorted(members[a] + members.pop(b)))
    return merges


def _cut(n_items, merges, n_merges):
    parent = list(range(n_items))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for mg in merges[:n_merges]:
        ra, rb = find(mg.left[0]), find(mg.right[0])
        parent[max(ra, rb)] = min(ra, rb)
    groups = {}
    for i in range(n_items):
        groups.setdefault(find(i), []).append(i)
    return sorted(tuple(g) for g in groups.values())


@dataclass(frozen=True)
class ClusterSet:
    clusters: tuple  # tuple of sorted index tuples, ordered by smallest member
    p: tuple  # unit-norm coefficient vector per cluster
    theta: float
    Pi: np.ndarray = field(repr=False)
    trusted: tuple = ()
    uncovered: tuple = ()  # cluster numbers without a trusted member
    silent: int = None  # cluster number holding zero rows of Phi, if any

    @property
    def K(self):
        return len(self.clusters)

    @property
    def m(self):
        return self.Pi.shape[1]

    def cluster_of(self, i):
        for k, c in enumerate(self.clusters):
            if i in c:
                return k
        raise IndexError(i)

    @property
    def covered(self):
        return not self.uncovered


class Dendrogram:
    """Complete-linkage hierarchy over the nonzero rows of ``Phi``."""

    def __init__(self, phi):
        self.phi = phi
        self.silent_rows = tuple(int(i) for i in phi.zero_rows())
        self.rows = np.setdiff1d(np.arange(phi.m), self.silent_rows)
        self.D = pairwise_dissimilarity(phi, self.rows)
        self.merges = complete_linkage(self.D)
        self.heights = np.array([mg.height for mg in self.merges])

    def partition(self, n_merges):
        local = _cut(len(self.rows), self.merges, n_merges)
        return [tuple(int(self.rows[i]) for i in g) for g in local]

    def merges_at(self, theta):
        return int(np.searchsorted(self.heights, theta, side="right"))

    def cluster_set(self, n_merges, trusted=(), theta=None):
        groups = self.partition(n_merges)
        if theta is None:
            theta = float(self.heights[n_merges - 1]) if n_merges > 0 else 0.0
        return make_cluster_set(self.phi, groups, theta, trusted, self.silent_rows)


def make_cluster_set(phi, groups, theta, trusted=(), silent_rows=()):
    groups = [tuple(sorted(int(i) for i in g)) for g in groups if len(g)]
    silent_rows = tuple(sorted(int(i) for i in silent_rows))
    if silent_rows:
        groups.append(silent_rows)
    groups.sort()
    silent = groups.index(silent_rows) if silent_rows else None
    p = []
    for k, g in enumerate(groups):
        if k == silent:
            p.append(np.full(len(g), 1.0 / np.sqrt(len(g))))
        else:
            p.append(cluster_coefficients(phi, g))
    trusted = tuple(sorted(int(i) for i in trusted))
    tset = set(trusted)
    uncovered = tuple(k for k, g in enumerate(groups) if k != silent and not tset.intersection(g))
    Pi = build_pi(groups, p, phi.m)
    return ClusterSet(tuple(groups), tuple(p), float(theta), Pi, trusted, uncovered, silent)


def form_clusters(phi, theta, trusted=()):
    """Partition outputs so that every intra-cluster pair has ``dissimilarity <= theta``."""
    dg = Dendrogram(phi)
    return dg.cluster_set(dg.merges_at(theta), trusted, theta=theta)


def clusters_for_k(phi, K, trusted=(), dendrogram=None):
    """Cut the hierarchy at ``K`` clusters (the silent cluster, if any, counts)."""
    dg = dendrogram or Dendrogram(phi)
    extra = 1 if dg.silent_rows else 0
    n_active = len(dg.rows)
    target = int(np.clip(K - extra, 1 if n_active else 0, n_active))
    return dg.cluster_set(n_active - target, trusted)


def min_theta_for_coverage(phi, trusted, dendrogram=None):
    """Smallest merge height at which every (non-silent) cluster has a trusted member."""
    trusted = set(int(i) for i in trusted)
    if not trusted:
        raise ValueError("trusted set must be nonempty")
    dg = dendrogram or Dendrogram(phi)

    def covered(n_merges):
        return all(trusted.intersection(g) for g in dg.partition(n_merges))

    # coverage is monotone along the nested hierarchy
    lo, hi = 0, len(dg.merges)
    if covered(lo):
        return 0.0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if covered(mid):
            hi = mid
        else:
            lo = mid
    return float(dg.heights[hi - 1])


def cluster_coefficients(phi, cluster):
    """Unit vector ``p`` of the best rank-one fit ``Phi[cluster] ~ p phibar``."""
    cluster = list(cluster)
    if not cluster:
        raise DegenerateCluster("empty cluster")
    sub = phi.Phi[cluster]
    scale = phi.row_norms.max() if phi.row_norms.size else 0.0
    if scale == 0 or np.linalg.norm(sub) <= ZERO_ROW_RTOL * scale:
        raise DegenerateCluster(f"cluster {cluster} has a numerically zero Phi block")
    if len(cluster) == 1:
        return np.array([1.0])
    u, _, _ = np.linalg.svd(sub, full_matrices=False)
    p = u[:, 0].copy()
    first = np.flatnonzero(np.abs(p) > 1e-14)[0]
    if p[first] < 0:
        p = -p
    return p / np.linalg.norm(p)


def build_pi(clusters, p, m):
    """Aggregation matrix: row ``k`` carries ``p_k`` on the members of cluster ``k``."""
    Pi = np.zeros((len(clusters), m))
    for k, (c, pk) in enumerate(zip(clusters, p)):
        Pi[k, list(c)] = pk
    return Pi


def projector(cs):
    """``Pi^T Pi``, the orthogonal projector onto the cluster space."""
    return cs.Pi.T @ cs.Pi


def augmented_order(m, attacked):
    """Row order of the augmented matrix: trusted indices, then attacked."""
    attacked = sorted(set(int(i) for i in attacked))
    trusted = [i for i in range(m) if i not in set(attacked)]
    return trusted, attacked


def augment_measurement_matrix(C, Pi, attacked):
    """Stack trusted rows of ``C`` over the attacked rows of ``Pi^T Pi C``."""
    C = np.asarray(C, float)
    trusted, attacked = augmented_order(C.shape[0], attacked)
    if not trusted:
        raise AllMeasurementsAttacked("no trusted measurement left")
    if not attacked:
        return C.copy()
    PC = Pi.T @ (Pi @ C)
    return np.vstack([C[trusted], PC[attacked]])


def surrogate_matrix(cs, attacked):
    """``S`` with ``ybar_A = S y``; columns of attacked measurements are zero.

    For attacked ``i`` in cluster ``k`` with trusted members ``T_k``:
    ``ybar_i = p_i * sum_{j in T_k} p_j y_j / sum_{j in T_k} p_j^2``.
    """
    attacked = sorted(set(int(i) for i in attacked))
    aset = set(attacked)
    S = np.zeros((len(attacked), cs.m))
    for row, i in enumerate(attacked):
        k = cs.cluster_of(i)
        members = cs.clusters[k]
        pk = dict(zip(members, cs.p[k]))
        T = [j for j in members if j not in aset]
        if not T:
            raise UncoveredCluster(f"cluster {k} containing attacked measurement {i} has no trusted member")
        denom = sum(pk[j] ** 2 for j in T)
        if denom <= 1e-24:
            raise UncoveredCluster(f"trusted members of cluster {k} all have zero coefficient")
        for j in T:
            S[row, j] = pk[i] * pk[j] / denom
    return S


def surrogate_outputs(cs, y_tilde, attacked):
    """Surrogate values at the attacked indices (sorted) from trusted data only.

    ``y_tilde`` has length ``m`` (or shape ``(m, T)``); attacked entries are
    never read.
    """
    S = surrogate_matrix(cs, attacked)
    y = np.array(y_tilde, dtype=float)
    y[sorted(set(int(i) for i in attacked))] = 0.0
    return S @ y


@dataclass(frozen=True)
class ApproximationError:
    per_measurement: np.ndarray  # NaN where the signal is identically zero
    aggregate: float


def approximation_error(y, cs, zero_tol=1e-12):
    """Relative RMS error of ``Pi^T Pi y`` against ``y`` per measurement.

    ``y`` is a ``(T, m)`` array of deviation signals, or a simulation result;
    for the latter the output Gram ``sum_t y y^T`` accumulated at every
    integration step is used, so decimated recording does not bias the
    result.
    """
    M = getattr(y, "output_gram", None)
    if M is None:
        Y = np.asarray(getattr(y, "y", y), float)
        M = Y.T @ Y
    return approximation_error_from_gram(M, cs, zero_tol)


def approximation_error_from_gram(M, cs, zero_tol=1e-12):
    """Same as ``approximation_error`` from ``M = sum_t y(t) y(t)^T``."""
    M = np.asarray(M, float)
    E = np.eye(cs.m) - projector(cs)
    num = np.maximum(np.einsum("ij,jk,ik->i", E, M, E), 0.0)
    den = np.diag(M).copy()
    per = np.full(cs.m, np.nan)
    ok = np.sqrt(np.maximum(den, 0.0)) > zero_tol
    per[ok] = np.sqrt(num[ok] / den[ok])
    agg = float(np.mean(per[ok])) if ok.any() else float("nan")
    return ApproximationError(per, agg)


def max_intra_dissimilarity(phi, cs):
    out = []
    for k, c in enumerate(cs.clusters):
        if k == cs.silent or len(c) < 2:
            out.append(0.0)
            continue
        D = pairwise_dissimilarity(phi, np.array(c))
        out.append(float(D.max()))
    return out


def zero_mode_alignment(cs, C, u_max):
    """``||(I - Pi^T Pi) C u_max|| / ||C u_max||``; zero when the zero-mode
    output direction lies in the row space of ``Pi``."""
    if u_max.shape[1] == 0:
        return 0.0
    w = C @ u_max
    nw = np.linalg.norm(w)
    if nw == 0:
        return 0.0
    return float(np.linalg.norm(w - cs.Pi.T @ (cs.Pi @ w)) / nw)


def cluster_report(cs, phi, labels=None, C=None, dec=None):
    """JSON-ready summary of a ``ClusterSet``."""
    labels = labels or [str(i) for i in range(cs.m)]
    tset = set(cs.trusted)
    dmax = max_intra_dissimilarity(phi, cs)
    clusters = []
    for k, (c, pk) in enumerate(zip(cs.clusters, cs.p)):
        clusters.append({
            "id": k,
            "members": [labels[i] for i in c],
            "indices": list(c),
            "coefficients": [float(v) for v in pk],
            "trusted_members": [labels[i] for i in c if i in tset],
            "covered": k not in cs.uncovered,
            "silent": k == cs.silent,
            "max_pairwise_dissimilarity": dmax[k],
        })
    PPt = cs.Pi @ cs.Pi.T
    diag = {"pi_unitarity_error": float(np.abs(PPt - np.eye(cs.K)).max()) if cs.K else 0.0}
    if C is not None and dec is not None:
        diag["zero_mode_misalignment"] = zero_mode_alignment(cs, C, dec.u_max)
    return {
        "K": cs.K,
        "m": cs.m,
        "theta": cs.theta,
        "all_covered": cs.covered,
        "uncovered": list(cs.uncovered),
        "clusters": clusters,
        "diagnostics": diag,
    }
