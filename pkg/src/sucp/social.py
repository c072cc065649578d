"""Social influence: visit profiles, user similarity, the fused friendship graph
and personalized PageRank scoring of unvisited POIs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .data import FriendshipEdgeList, InteractionMatrix


@dataclass(frozen=True)
class ProfileVector:
    user: int
    pois: np.ndarray
    weights: np.ndarray

    def as_dict(self) -> dict:
        return {int(p): float(w) for p, w in zip(self.pois, self.weights)}


@dataclass(frozen=True, eq=False)
class SocialGraph:
    """Row-stochastic user transition matrix (rows of isolated users are empty)."""

    P: sp.csr_matrix
    beta: float

    @property
    def m(self) -> int:
        return self.P.shape[0]

    def out_edges(self, u: int) -> dict:
        s, e = self.P.indptr[u], self.P.indptr[u + 1]
        return {int(v): float(w) for v, w in zip(self.P.indices[s:e], self.P.data[s:e])}

    def dangling(self) -> np.ndarray:
        return np.diff(self.P.indptr) == 0


@dataclass(frozen=True)
class PPRParams:
    damping: float = 0.85
    tol: float = 1e-8
    max_iter: int = 100
    top_t: int | None = 1000


@dataclass(frozen=True)
class PPRVector:
    source: int
    scores: np.ndarray
    converged: bool
    iterations: int

    def __getitem__(self, v: int) -> float:
        return float(self.scores[v])


@dataclass(frozen=True)
class SocialScoreRow:
    user: int
    scores: dict

    def get(self, poi: int) -> float:
        return self.scores.get(poi, 0.0)


def build_profile(u: int, R: InteractionMatrix) -> ProfileVector:
    pois = R.visited(u)
    freq = R.csr.data[R.csr.indptr[u]:R.csr.indptr[u + 1]]
    total = freq.sum()
    if total <= 0:
        raise ValueError(f"user {u} has no check-ins")
    return ProfileVector(u, pois.copy(), freq / total)


def _unit_profiles(R: InteractionMatrix) -> sp.csr_matrix:
    # cosine is scale invariant, so L2-normalizing raw counts equals normalizing profiles
    W = R.row_normalized()
    norms = np.sqrt(np.asarray(W.multiply(W).sum(axis=1)).ravel())
    inv = np.divide(1.0, norms, out=np.zeros_like(norms), where=norms > 0)
    return sp.csr_matrix(sp.diags(inv) @ W)


def profile_similarity(u: int, v: int, R: InteractionMatrix) -> float:
    a = R.row_normalized()
    x, y = a[u], a[v]
    nx = np.sqrt(x.multiply(x).sum())
    ny = np.sqrt(y.multiply(y).sum())
    if nx == 0 or ny == 0:
        return 0.0
    return float(min(1.0, x.multiply(y).sum() / (nx * ny)))


def similarity_matrix(R: InteractionMatrix, min_common: int = 1) -> sp.csr_matrix:
    """Cosine similarity of all user pairs sharing >= ``min_common`` POIs, zero diagonal."""
    Q = _unit_profiles(R)
    S = sp.csr_matrix(Q @ Q.T)
    if min_common > 1:
        B = (R.csr > 0).astype(float)
        common = sp.csr_matrix(B @ B.T)
        S = S.multiply(common >= min_common).tocsr()
    S.setdiag(0.0)
    S.eliminate_zeros()
    S.data = np.minimum(S.data, 1.0)
    return S


def average_friend_similarity(R: InteractionMatrix, edges: FriendshipEdgeList) -> float:
    if len(edges) == 0:
        raise ValueError("no friendship edges")
    Q = _unit_profiles(R)
    a, b = edges.edges[:, 0], edges.edges[:, 1]
    sims = np.asarray(Q[a].multiply(Q[b]).sum(axis=1)).ravel()
    return float(np.clip(sims, 0.0, 1.0).mean())


def build_social_graph(R: InteractionMatrix, edges: FriendshipEdgeList, beta: float,
                       min_common: int = 1) -> SocialGraph:
    """Fuse explicit friends and similar users into transition weights.

    With both kinds of neighbours, explicit friends share ``1 - beta`` uniformly
    and similar users share ``beta`` in proportion to similarity.  A user with
    only one kind gives that kind the full unit of mass.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    m = R.shape[0]
    A = edges.adjacency(m)
    S = similarity_matrix(R, min_common=min_common)
    n_f = np.diff(A.indptr).astype(float)
    s_u = np.asarray(S.sum(axis=1)).ravel()
    has_f = n_f > 0
    has_s = s_u > 0
    both = has_f & has_s
    w_f = np.where(both, 1.0 - beta, 1.0) * has_f
    w_s = np.where(both, beta, 1.0) * has_s
    f_scale = np.divide(w_f, n_f, out=np.zeros(m), where=has_f)
    s_scale = np.divide(w_s, s_u, out=np.zeros(m), where=has_s)
    P = sp.diags(f_scale) @ A + sp.diags(s_scale) @ S
    P = sp.csr_matrix(P)
    P.eliminate_zeros()
    P.sort_indices()
    return SocialGraph(P, beta)


def ppr_batch(graph: SocialGraph, sources, params: PPRParams = PPRParams()) -> tuple[np.ndarray, np.ndarray, int]:
    """Personalized PageRank for several sources at once.

    Returns ``(pi, converged, iterations)`` where ``pi`` is ``(len(sources), m)``.
    Mass reaching a user without out-edges teleports back to the source.
    """
    d = params.damping
    if not 0.0 < d < 1.0:
        raise ValueError("damping must lie in (0, 1)")
    sources = np.asarray(sources, dtype=np.int64)
    b, m = len(sources), graph.m
    rows = np.arange(b)
    E = np.zeros((b, m))
    E[rows, sources] = 1.0
    dangling = graph.dangling()
    PT = graph.P.T.tocsr()
    pi = E.copy()
    converged = np.zeros(b, dtype=bool)
    it = 0
    for it in range(1, params.max_iter + 1):
        nxt = (PT @ pi.T).T * d
        nxt[rows, sources] += 1.0 - d + d * pi[:, dangling].sum(axis=1)
        delta = np.abs(nxt - pi).sum(axis=1)
        pi = nxt
        converged = delta < params.tol
        if converged.all():
            break
    return pi, converged, it


def personalized_pagerank(graph: SocialGraph, source: int, damping: float = 0.85,
                          tol: float = 1e-8, max_iter: int = 100) -> PPRVector:
    pi, conv, it = ppr_batch(graph, [source], PPRParams(damping, tol, max_iter, None))
    return PPRVector(source, pi[0], bool(conv[0]), it)


def truncate_top(pi: np.ndarray, t: int | None) -> np.ndarray:
    """Zero all but the ``t`` largest entries of each row."""
    if t is None or t >= pi.shape[1]:
        return pi
    out = np.zeros_like(pi)
    idx = np.argpartition(-pi, t - 1, axis=1)[:, :t]
    r = np.arange(pi.shape[0])[:, None]
    out[r, idx] = pi[r, idx]
    return out


def social_score_block(users, graph: SocialGraph, R: InteractionMatrix,
                       params: PPRParams = PPRParams(), NM: sp.csr_matrix | None = None) -> np.ndarray:
    """Dense ``(len(users), n)`` social scores; POIs a user visited are zero."""
    users = np.asarray(users, dtype=np.int64)
    if NM is None:
        NM = R.row_normalized()
    pi, _, _ = ppr_batch(graph, users, params)
    pi = truncate_top(pi, params.top_t)
    pi[np.arange(len(users)), users] = 0.0
    S = np.asarray((NM.T @ pi.T).T)
    sub = R.csr[users]
    S[np.repeat(np.arange(len(users)), np.diff(sub.indptr)), sub.indices] = 0.0
    return S


def social_scores(u: int, graph: SocialGraph, R: InteractionMatrix,
                  params: PPRParams = PPRParams()) -> SocialScoreRow:
    row = social_score_block([u], graph, R, params)[0]
    nz = np.flatnonzero(row)
    return SocialScoreRow(u, {int(l): float(row[l]) for l in nz})
