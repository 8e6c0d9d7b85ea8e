"""Dirichlet spectra of the Anderson Hamiltonian H = Delta + V on finite
subsets of Z^d.

Conventions.  The lattice Laplacian is the unnormalized neighbor sum,
(Delta f)(z) = sum_{|y-z|_1 = 1} [f(y) - f(z)], and the Dirichlet
restriction to a domain zeroes functions outside it, so

    (H phi)(z) = sum_{y ~ z, y in domain} phi(y) - 2d phi(z) + V(z) phi(z).

The principal eigenvalue is computed by shifted power iteration (shift
sigma = min V - 4d - 1 makes the operator positive definite with the
target as dominant eigenvalue), refined by occasional Rayleigh-quotient
steps; top-k eigenpairs come from deflation.  A dense symmetric solver
serves as the ground-truth oracle on small instances.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    ConvergenceError,
    InvalidParameterError,
    ResourceError,
)
from .potential import Window

DENSE_CAP_DEFAULT = 2000
_RQI_CAP = 600          # inverse-iteration sweeps only below this size


# ── domains ──────────────────────────────────────────────────────────────

class LatticeDomain:
    """A finite set of Z^d sites with nearest-neighbor adjacency.

    Sites are stored in lexicographic order; ``neighbors`` maps each site
    to the indices of its in-domain neighbors (-1 marks an exterior one,
    which under Dirichlet conditions contributes nothing).
    """

    def __init__(self, sites):
        sites = np.asarray(sites, dtype=np.int64)
        if sites.ndim == 1:
            sites = sites[:, None]
        if sites.ndim != 2 or sites.shape[0] == 0:
            raise InvalidParameterError("domain needs a non-empty (n, d) site array")
        order = np.lexsort(tuple(sites[:, k] for k in range(sites.shape[1] - 1, -1, -1)))
        sites = sites[order]
        if sites.shape[0] > 1 and np.any(np.all(np.diff(sites, axis=0) == 0, axis=1)):
            raise InvalidParameterError("duplicate sites in domain")
        self.sites = sites
        self.n = sites.shape[0]
        self.dim = sites.shape[1]
        self._index = {tuple(s): i for i, s in enumerate(sites.tolist())}
        self.neighbors = self._build_neighbors()

    @classmethod
    def from_box(cls, window: Window) -> "LatticeDomain":
        return cls(window.sites())

    @classmethod
    def from_sites(cls, sites) -> "LatticeDomain":
        return cls(np.asarray(list(sites), dtype=np.int64))

    def _build_neighbors(self) -> np.ndarray:
        nbr = np.full((self.n, 2 * self.dim), -1, dtype=np.int64)
        idx = self._index
        for i, s in enumerate(self.sites.tolist()):
            col = 0
            for k in range(self.dim):
                for step in (-1, 1):
                    t = list(s)
                    t[k] += step
                    nbr[i, col] = idx.get(tuple(t), -1)
                    col += 1
        return nbr

    def index_of(self, site) -> int:
        try:
            return self._index[tuple(int(c) for c in site)]
        except KeyError:
            raise InvalidParameterError(f"site {tuple(site)} not in domain") from None

    def contains(self, site) -> bool:
        return tuple(int(c) for c in site) in self._index

    @cached_property
    def exterior_degree(self) -> np.ndarray:
        """Number of exterior neighbors per site (for exit-rate formulas)."""
        return (self.neighbors < 0).sum(axis=1).astype(np.int64)

    @cached_property
    def components(self) -> list:
        """Connected components as lists of site indices (deterministic order)."""
        seen = np.zeros(self.n, dtype=bool)
        comps = []
        for start in range(self.n):
            if seen[start]:
                continue
            stack = [start]
            seen[start] = True
            comp = []
            while stack:
                i = stack.pop()
                comp.append(i)
                for j in self.neighbors[i]:
                    if j >= 0 and not seen[j]:
                        seen[j] = True
                        stack.append(int(j))
            comps.append(np.array(sorted(comp), dtype=np.int64))
        return comps

    def is_connected(self) -> bool:
        return len(self.components) == 1


# ── operator application and dense assembly ──────────────────────────────

def apply_hamiltonian(domain: LatticeDomain, V, phi) -> np.ndarray:
    """(Delta + V) phi with Dirichlet zero outside the domain."""
    V = np.asarray(V, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if V.shape != (domain.n,) or phi.shape != (domain.n,):
        raise InvalidParameterError("V and phi must be per-site vectors on the domain")
    padded = np.append(phi, 0.0)
    out = padded[domain.neighbors].sum(axis=1)
    out += (V - 2.0 * domain.dim) * phi
    return out


def dense_matrix(domain: LatticeDomain, V) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    H = np.zeros((domain.n, domain.n))
    np.fill_diagonal(H, V - 2.0 * domain.dim)
    for i in range(domain.n):
        for j in domain.neighbors[i]:
            if j >= 0:
                H[i, j] += 1.0
    return H


def dense_oracle(domain: LatticeDomain, V, cap=DENSE_CAP_DEFAULT):
    """All eigenpairs by a direct symmetric solver, non-increasing order.

    Returns (lams, vecs) with vecs[:, k] the k-th eigenfunction.  Ground
    truth for the iterative routines; refuses domains above the cap.
    """
    if domain.n > cap:
        raise ResourceError(f"dense oracle cap {cap} exceeded ({domain.n} sites)")
    H = dense_matrix(domain, V)
    lams, vecs = np.linalg.eigh(H)
    return lams[::-1].copy(), vecs[:, ::-1].copy()


# ── eigenpairs ───────────────────────────────────────────────────────────

@dataclass
class EigenPair:
    lam: float
    phi: np.ndarray
    domain: LatticeDomain
    residual: float
    iterations: int


def _apply_block(domain, V, Q):
    """(Delta + V) applied to each column of Q under Dirichlet conditions."""
    padded = np.vstack([Q, np.zeros((1, Q.shape[1]))])
    out = padded[domain.neighbors].sum(axis=1)
    out += (V - 2.0 * domain.dim)[:, None] * Q
    return out


def _start_block(V, comp, b):
    """Deterministic (m, b) start: indicators of the b largest-potential
    sites plus a dense low-amplitude dither so no eigenvector of a crafted
    symmetric instance can be exactly orthogonal to the block."""
    m = len(comp)
    order = np.argsort(-V[comp], kind="stable")[:b]
    Q = np.zeros((m, b))
    for j, i in enumerate(order):
        Q[i, j] = 1.0
        Q[:, j] += 1e-6 * np.cos(0.7 * (j + 1) * (np.arange(m) + 1.0))
    return Q


def _subspace_on_component(domain, V, comp, k, tol, max_iter):
    """Top-k eigenpairs of H restricted to a connected component.

    Block subspace iteration with Rayleigh-Ritz extraction each sweep.
    On small components the sweep operator is the inverse of (H - tau) for
    a tau strictly above the spectrum: |lam - tau| is then monotone in
    lam, so the iteration is globally attracted to the true top block even
    when eigenvectors are sharply localized far from any start indicator.
    Large components fall back to matrix-free positive-shifted power
    sweeps.  Returns (lams desc, vectors (m, k) in comp coordinates,
    residual, iterations).
    """
    V = np.asarray(V, dtype=float)
    m = len(comp)
    k = min(k, m)
    b = min(m, k + 2)

    sub = LatticeDomain(domain.sites[comp]) if len(comp) < domain.n else domain
    Vc = V[comp]
    Q, _ = np.linalg.qr(_start_block(V, comp, b))
    best_res = np.inf

    if m <= _RQI_CAP:
        # lam_1 < max V holds strictly on any finite domain, so this tau
        # dominates the whole spectrum and the factored matrix is
        # negative definite (never singular); one inverse serves all sweeps
        tau = float(Vc.max()) + 0.25
        Ainv = np.linalg.inv(dense_matrix(sub, Vc) - tau * np.eye(m))

        def sweep(Q):
            return Ainv @ Q
    else:
        sigma = float(Vc.min()) - 4.0 * domain.dim - 1.0

        def sweep(Q):
            return _apply_block(sub, Vc, Q) - sigma * Q

    for it in range(1, max_iter + 1):
        Q, _ = np.linalg.qr(sweep(Q))
        Z = _apply_block(sub, Vc, Q)
        S = Q.T @ Z
        S = 0.5 * (S + S.T)
        theta, U = np.linalg.eigh(S)
        theta = theta[::-1]
        U = U[:, ::-1]
        P = Q @ U
        R = Z @ U - P * theta
        res = np.linalg.norm(R[:, :k], axis=0)
        worst = float(res.max())
        best_res = min(best_res, worst)
        if worst <= tol:
            return theta[:k], P[:, :k], worst, it
    raise ConvergenceError(
        f"eigensolve did not reach tol {tol} in {max_iter} iterations",
        residual=best_res,
    )


def principal_eig(domain: LatticeDomain, V, tol=1e-10, max_iter=100_000) -> EigenPair:
    """Largest Dirichlet eigenvalue with a non-negative eigenfunction.

    Deterministic: fixed start vector (indicator of the argmax of V,
    lexicographic tie-break), one power iteration per connected component,
    and the best component wins.  The returned phi is non-negative; on a
    connected domain it is strictly positive.
    """
    V = np.asarray(V, dtype=float)
    if V.shape != (domain.n,):
        raise InvalidParameterError("V must be a per-site vector on the domain")
    best = None
    for comp in domain.components:
        lams, vecs, res, it = _subspace_on_component(domain, V, comp, 1, tol, max_iter)
        if best is None or lams[0] > best[0]:
            best = (float(lams[0]), comp, vecs[:, 0], res, it)
    lam, comp, local, res, it = best
    x = np.zeros(domain.n)
    x[comp] = local
    # orient and clip: the Perron vector of the shifted operator is
    # non-negative; round-off may leave sign dust of order tol
    if x.sum() < 0:
        x = -x
    if np.any(x < -1e-8):
        raise ConvergenceError("principal eigenvector failed the sign test")
    x = np.clip(x, 0.0, None)
    x /= np.linalg.norm(x)
    return EigenPair(lam=lam, phi=x, domain=domain, residual=res, iterations=it)


def top_k_eigs(domain: LatticeDomain, V, k, tol=1e-10, max_iter=100_000) -> list:
    """k largest eigenpairs, non-increasing, orthonormal eigenfunctions."""
    V = np.asarray(V, dtype=float)
    if not (1 <= k <= domain.n):
        raise InvalidParameterError(f"k must be in [1, {domain.n}], got {k}")
    pool = []
    for comp in domain.components:
        lams, vecs, res, it = _subspace_on_component(
            domain, V, comp, min(k, len(comp)), tol, max_iter
        )
        for i in range(len(lams)):
            x = np.zeros(domain.n)
            x[comp] = vecs[:, i]
            pool.append(EigenPair(lam=float(lams[i]), phi=x, domain=domain,
                                  residual=res, iterations=it))
    # merge component spectra; vectors from different components have
    # disjoint support, so orthonormality survives the merge
    pool.sort(key=lambda p: -p.lam)
    return pool[:k]
