"""Orthogonal matching pursuit over a uniform angular grid."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..channel import DEFAULT_SPACING, array_response
from ..errors import DomainError, ShapeError

log = logging.getLogger(__name__)

COND_WARN = 1e10


@dataclass(frozen=True)
class AngularDictionary:
    grid: np.ndarray  # (G,) angles in (-pi/2, pi/2)
    a_t: np.ndarray  # (N_t, G)
    a_r: np.ndarray  # (N_r, G)

    @property
    def size(self) -> int:
        return self.grid.size

    def atoms(self) -> np.ndarray:
        """``vec(a_r,j a_t,i^H) = conj(a_t,i) kron a_r,j`` for atom ``k = i G + j``; shape ``(N_r N_t, G^2)``."""
        g = self.size
        n_r, n_t = self.a_r.shape[0], self.a_t.shape[0]
        return np.einsum("ti,rj->trij", np.conj(self.a_t), self.a_r).reshape(n_t * n_r, g * g)

    def atom_angles(self, k):
        k = np.asarray(k)
        return self.grid[k % self.size], self.grid[k // self.size]  # (aoa, aod)


def angular_dictionary(n_t: int, n_r: int, grid_size: int | None = None, spacing: float = DEFAULT_SPACING
                       ) -> AngularDictionary:
    g = grid_size or 2 * max(n_t, n_r)
    grid = -np.pi / 2 + np.pi * (np.arange(g) + 0.5) / g
    return AngularDictionary(grid, array_response(n_t, grid, spacing).T, array_response(n_r, grid, spacing).T)


def sensing_matrix(x_pilot, f_list, w_list) -> np.ndarray:
    """Rows map ``vec(H)`` to ``vec(Y)``: block ``l`` is ``(F_l x_l)^T kron W_l^H``."""
    x_pilot, f_list, w_list = map(np.asarray, (x_pilot, f_list, w_list))
    L = x_pilot.shape[1]
    if f_list.shape[0] != L or w_list.shape[0] != L:
        raise ShapeError("pilot length mismatch")
    blocks = []
    for l in range(L):
        t = f_list[l] @ x_pilot[:, l]
        blocks.append(np.kron(t[None, :], np.conj(w_list[l]).T))
    return np.concatenate(blocks, axis=0)


@dataclass
class OmpResult:
    h_hat: np.ndarray  # (N_r, N_t)
    atoms: list  # selected atom indices in selection order
    coeffs: np.ndarray  # gains of the selected atoms
    residuals: list  # residual norm before the first and after every step


def omp_estimate(y, phi: np.ndarray, dictionary: AngularDictionary, sparsity: int, noise_floor: float = 0.0,
                 atoms: np.ndarray | None = None) -> OmpResult:
    """Greedy sparse recovery of ``H`` from ``vec(Y) = Phi vec(H) + n``.

    ``y`` is the column-major ``vec`` of the received pilots. Each step picks
    the atom best correlated with the residual (normalized columns), refits
    all selected gains by least squares, and stops at ``sparsity`` atoms or
    once the residual norm is at or below ``noise_floor``.
    """
    if sparsity < 1:
        raise DomainError("sparsity must be >= 1")
    y = np.asarray(y, dtype=complex).ravel()
    psi = dictionary.atoms() if atoms is None else atoms
    a = phi @ psi
    if a.shape[0] != y.size:
        raise ShapeError(f"sensing rows {a.shape[0]} != observations {y.size}")
    n_r, n_t = dictionary.a_r.shape[0], dictionary.a_t.shape[0]
    col = np.linalg.norm(a, axis=0)
    col = np.where(col > 0, col, np.inf)
    r = y.copy()
    sel: list[int] = []
    c = np.zeros(0, dtype=complex)
    res = [float(np.linalg.norm(r))]
    while len(sel) < sparsity and res[-1] > noise_floor:
        score = np.abs(a.conj().T @ r) / col
        score[sel] = -1.0
        k = int(np.argmax(score))
        if score[k] <= 0:
            break
        sel.append(k)
        a_s = a[:, sel]
        s = np.linalg.svd(a_s, compute_uv=False)
        if s[-1] == 0 or s[0] / s[-1] > COND_WARN:
            log.warning("OMP refit is ill-conditioned (cond %.3g); using the pseudo-inverse",
                        np.inf if s[-1] == 0 else s[0] / s[-1])
        c = np.linalg.pinv(a_s) @ y
        r = y - a_s @ c
        res.append(float(np.linalg.norm(r)))
    h_vec = psi[:, sel] @ c if sel else np.zeros(n_r * n_t, dtype=complex)
    return OmpResult(h_vec.reshape(n_t, n_r).T, sel, c, res)
