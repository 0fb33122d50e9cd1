"""Bend a clamped beam into a prescribed pose with the least change of potentials.

Run:  python3 demos/cantilever_bend.py
"""

import numpy as np

from deaoc import config, integrator, runs

doc = config.load(config.bundled_configs()["cantilever"])
setup, x, report = runs.optimize(doc)
print(f"solver: {report.status} after {report.iterations} iterations, J = {report.objective:.3e}")

traj = setup.problem.to_trajectory(x)
layout = setup.system.layout
phi = traj.q[:, layout.charge_idx]
print("electrode potentials per step (V), first four electrodes:")
for n, row in enumerate(phi):
    print(f"  t = {n * traj.dt:.2f} ms  " + "  ".join(f"{v:8.2f}" for v in row[:4]))

# The optimal charges reproduce the motion when fed back into the forward integrator,
# starting from the optimized initial potentials.
bd = setup.boundary
replay = integrator.simulate(setup.system, traj.q[0], traj.N, traj.dt, p0=bd.p0, charges=lambda n: traj.Q[n])
print(f"replay deviation: {np.max(np.abs(replay.q - traj.q)):.2e}")
tip = 15 * (layout.n_beam_nodes - 1)
print("tip position at the end:", np.round(traj.q[-1, tip:tip + 3], 4))
