"""Positional and structural node encodings that need no training.

Three encodings are provided: Laplacian eigenvectors, random-walk return
probabilities and a truncated SVD of the weight matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .errors import GraphError, SpectralError
from .graph import CommuteGraph

DENSE_LIMIT = 512
EIG_TOL = 1e-10
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    values: np.ndarray
    method_tag: str = ""
    node_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] < 1:
            raise ValueError(f"embedding must be a 2-D array with d >= 1, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("embedding contains non-finite entries")
        if self.node_ids is not None and len(self.node_ids) != v.shape[0]:
            raise ValueError("node_ids length does not match embedding rows")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]


def _fix_signs(vecs):
    # largest-magnitude entry of every column made positive; first index wins ties
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def normalized_laplacian(g: CommuteGraph) -> sp.csr_matrix:
    """``I - D^-1/2 W D^-1/2``; rows and columns of isolated nodes are all zero."""
    deg = g.degrees()
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    s = sp.diags(inv_sqrt) @ g.weights @ sp.diags(inv_sqrt)
    lap = sp.diags(nz.astype(float)) - s
    lap = lap.tocsr()
    # enforce exact symmetry lost to rounding in the two diagonal scalings
    return ((lap + lap.T) * 0.5).tocsr()


def laplacian_spectrum(g: CommuteGraph, d: int):
    """Eigenpairs for the ``d`` smallest non-trivial eigenvalues of the normalized Laplacian.

    Trivial pairs are the zero eigenvalues, one per connected component
    (isolated nodes count as components). The spectrum of a disconnected graph
    is the union of its components' spectra, so the returned vectors live on
    single components whenever the eigenvalues are distinct.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvectors as columns.
    """
    n = g.n
    if d < 1:
        raise GraphError("d must be >= 1")
    if d >= n:
        raise GraphError(f"d must be smaller than the node count ({d} >= {n})")
    n_comp, _ = connected_components(g.weights, directed=False)
    if d > n - n_comp:
        raise GraphError(
            f"graph has {n_comp} components, leaving only {n - n_comp} non-trivial eigenpairs (< d={d})"
        )
    lap = normalized_laplacian(g)
    want = n_comp + d

    if n <= DENSE_LIMIT or want >= n - 1:
        vals, vecs = np.linalg.eigh(lap.toarray())
        vals, vecs = vals[:want], vecs[:, :want]
    else:
        # spectrum lies in [0, 2]; the smallest of L are the largest of 2I - L
        shifted = (2.0 * sp.identity(n, format="csr") - lap).tocsr()
        v0 = np.full(n, 1.0 / np.sqrt(n))
        try:
            mu, vecs = spla.eigsh(shifted, k=want, which="LA", tol=EIG_TOL, maxiter=10 * n, v0=v0)
        except spla.ArpackNoConvergence as exc:
            res = _max_residual(lap, 2.0 - exc.eigenvalues, exc.eigenvectors) if len(exc.eigenvalues) else None
            raise SpectralError("Lanczos eigensolver did not converge", res) from exc
        vals = 2.0 - mu
        order = np.argsort(vals, kind="stable")
        vals, vecs = vals[order], vecs[:, order]

    vals, vecs = vals[n_comp:], vecs[:, n_comp:]
    vecs = _fix_signs(vecs / np.linalg.norm(vecs, axis=0))
    res = _max_residual(lap, vals, vecs)
    if res > RESIDUAL_TOL:
        raise SpectralError("eigenpairs failed the residual check", res)
    return vals, vecs


def _max_residual(lap, vals, vecs):
    r = lap @ vecs - vecs * vals
    return float(np.max(np.linalg.norm(r, axis=0)))


def laplacian_eigen_encoding(g: CommuteGraph, d: int) -> EmbeddingMatrix:
    _, vecs = laplacian_spectrum(g, d)
    return EmbeddingMatrix(vecs, "le", g.node_ids)


def random_walk_encoding(g: CommuteGraph, d: int) -> EmbeddingMatrix:
    """Column ``k`` (1-based) holds the k-step return probability ``diag(P^k)``, ``P = D^-1 W``.

    ``P`` is similar to the symmetric ``S = D^-1/2 W D^-1/2``, so
    ``diag(P^k) = diag(S^k) = (Q**2) @ lam**k`` after one eigendecomposition.
    Isolated nodes get an all-zero row.
    """
    if d < 1:
        raise GraphError("d must be >= 1")
    deg = g.degrees()
    nz = deg > 0
    inv_sqrt = np.zeros_like(deg)
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    s = g.dense() * inv_sqrt[:, None] * inv_sqrt[None, :]
    s = (s + s.T) * 0.5
    lam, q = np.linalg.eigh(s)
    q2 = q * q
    powers = lam[None, :] ** np.arange(1, d + 1)[:, None]
    out = q2 @ powers.T
    out[~nz] = 0.0
    # one-step return needs a self-loop, and the graph has none
    out[:, 0] = 0.0
    # odd-length closed walks do not exist in bipartite components; make that exact
    out[np.ix_(_bipartite_nodes(g), np.arange(0, d, 2))] = 0.0
    np.clip(out, 0.0, 1.0, out=out)
    return EmbeddingMatrix(out, "rw", g.node_ids)


def _bipartite_nodes(g: CommuteGraph) -> np.ndarray:
    """Boolean mask of nodes lying in a 2-colourable connected component."""
    n_comp, comp = connected_components(g.weights, directed=False)
    colour = np.full(g.n, -1)
    for root in (np.flatnonzero(comp == c)[0] for c in range(n_comp)):
        order, pred = breadth_first_order(g.weights, root, directed=False)
        colour[root] = 0
        for v in order[1:]:
            colour[v] = 1 - colour[pred[v]]
    coo = g.weights.tocoo()
    clash = colour[coo.row] == colour[coo.col]
    ok = np.ones(n_comp, dtype=bool)
    ok[comp[coo.row[clash]]] = False
    return ok[comp]


def truncated_svd(w, d: int):
    """Rank-``d`` SVD ``(U, sigma, Vt)`` with non-increasing singular values."""
    n = min(w.shape)
    if d < 1 or d > n:
        raise GraphError(f"d must lie in [1, {n}], got {d}")
    if n <= DENSE_LIMIT or d >= n - 1:
        dense = w.toarray() if sp.issparse(w) else np.asarray(w, dtype=float)
        u, s, vt = np.linalg.svd(dense)
        u, s, vt = u[:, :d], s[:d], vt[:d]
    else:
        v0 = np.full(n, 1.0 / np.sqrt(n))
        try:
            u, s, vt = spla.svds(sp.csr_matrix(w), k=d, tol=EIG_TOL, maxiter=10 * n, v0=v0)
        except spla.ArpackNoConvergence as exc:
            raise SpectralError("truncated SVD did not converge") from exc
        order = np.argsort(-s, kind="stable")
        u, s, vt = u[:, order], s[order], vt[order]
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs, s, vt * signs[:, None]


def svd_encoding(g: CommuteGraph, d: int) -> EmbeddingMatrix:
    """Rows of ``U_d diag(sqrt(sigma_d))`` from the rank-d SVD of the weight matrix."""
    if d > g.n:
        raise GraphError(f"d must not exceed the node count ({d} > {g.n})")
    u, s, _ = truncated_svd(g.weights, d)
    return EmbeddingMatrix(u * np.sqrt(s), "svd", g.node_ids)


def svd_reconstruction_error(g: CommuteGraph, d: int) -> float:
    u, s, vt = truncated_svd(g.weights, d)
    return float(np.linalg.norm(g.dense() - (u * s) @ vt))
