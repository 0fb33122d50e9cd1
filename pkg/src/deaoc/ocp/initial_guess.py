"""Initial guesses for the transcribed problem."""

from __future__ import annotations

import numpy as np

from .transcription import NlpProblem


def node_pattern(system, odd, even) -> np.ndarray:
    """Electrical values per beam node: ``odd`` for nodes 1,3,5,... and ``even``
    for nodes 2,4,6,... (numbered from 1 within each beam)."""
    L = system.layout
    out = np.zeros((L.n_beam_nodes, 3))
    for name in L.beam_names:
        for local, node in enumerate(L.beam_nodes(name)):
            out[node] = odd if local % 2 == 0 else even
    return out


def initial_guess(problem: NlpProblem, target_q, odd=(1.0, 0.0, 0.0), even=(1.0, 0.0, 0.0)) -> np.ndarray:
    """Linear mechanical interpolation from ``q0`` to ``target_q``, constant
    electrical node pattern for ``n >= 1``, zero multipliers and charges."""
    if target_q is None:
        raise ValueError("initial guess needs a target pose")
    s, N = problem.system, problem.N
    L = s.layout
    target_q = np.asarray(target_q, float)
    if target_q.shape != (L.n_q,):
        raise ValueError(f"target pose has shape {target_q.shape}, expected ({L.n_q},)")
    q0 = problem.q0bar
    q = np.zeros((N + 1, L.n_q))
    pattern = node_pattern(s, np.asarray(odd, float), np.asarray(even, float)).ravel()
    for n in range(N + 1):
        w = n / N
        q[n] = (1.0 - w) * q0 + w * target_q
        if n > 0:
            q[n][L.elec_idx] = pattern
    q[0] = q0
    dec = problem.dec
    return dec.pack(q, np.zeros((N, L.n_ext)), np.zeros((N, L.n_contact)), np.zeros((N, L.n_charge)))
