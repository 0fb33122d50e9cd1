"""Minimum-variation objective for the electric potentials."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def potential_variation(phi) -> float:
    """``J = sum_n sum_I (phi_n^I - phi_{n-1}^I)^2`` for ``phi`` of shape (N+1, n_elec)."""
    phi = np.asarray(phi, float)
    return float(np.sum(np.diff(phi, axis=0) ** 2))


def potential_variation_gradient(phi) -> np.ndarray:
    phi = np.asarray(phi, float)
    d = np.diff(phi, axis=0)
    g = np.zeros_like(phi)
    g[1:] += 2.0 * d
    g[:-1] -= 2.0 * d
    return g


def potential_variation_hessian(N: int, n_elec: int):
    """Constant Hessian in time-major ordering ``[phi_0, phi_1, ..., phi_N]``."""
    main = np.full(N + 1, 2.0)
    main[1:-1] = 4.0
    if N == 0:
        main[:] = 0.0
    D = sp.diags([main, np.full(N, -2.0), np.full(N, -2.0)], [0, -1, 1])
    return sp.kron(D, sp.identity(n_elec), format="csr")
