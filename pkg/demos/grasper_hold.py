"""Two clamped beams pick up a cylinder and hold it at a target position.

Prints the contact multipliers over time: pairs become active as the beams
close in and the final step shows the holding contacts.

Run:  python3 demos/grasper_hold.py
"""

import numpy as np

from deaoc import config, runs

setup, x, report = runs.optimize(config.load(config.bundled_configs()["grasper"]))
p = setup.problem
print(f"solver: {report.status}, {report.iterations} iterations, min gap {p.gaps(x).min():.1e}")

lam = x[p.lamc_index].reshape(p.N, -1)
names = setup.system.layout.contact_names
for n, row in enumerate(lam):
    active = [f"{names[k]} {row[k]:.3f}" for k in np.flatnonzero(row < -1e-6)]
    print(f"interval {n}: " + (", ".join(active) if active else "no contact force"))

q = p.dec.unpack(x)[0]
for idx, target in setup.boundary.final.coordinates:
    print(f"final cylinder coordinate {q[-1, idx]:.8f} (target {target})")
