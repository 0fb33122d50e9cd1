"""Two initializations of the crawling worm lead to two different gaits.

Both runs must bring the left cube to x = 2 mm; the contraction guess and the
bending guess end in distinct local optima.  Each guess is the forward run
under the corresponding potential pattern.

Run:  python3 demos/worm_initialization.py
"""

import numpy as np

from deaoc import config, runs

shapes = {}
for name in ("worm_contraction", "worm_bending"):
    setup, x, report = runs.optimize(config.load(config.bundled_configs()[name]))
    q = setup.problem.dec.unpack(x)[0]
    L = setup.system.layout
    idx, target = setup.boundary.final.coordinates[0]
    print(f"{name}: {report.status}, J = {report.objective:.4g}, final cube x = {q[-1, idx]:.8f} (target {target})")
    mid = 15 * (L.n_beam_nodes // 2)
    print(f"  largest lift of the middle node: {np.max(q[:, mid + 2] - q[0, mid + 2]):.3f} mm")
    shapes[name] = q[:, [15 * i + k for i in range(L.n_beam_nodes) for k in range(3)]]

a, b = shapes.values()
print(f"relative difference of nodal paths: {np.linalg.norm(a - b) / np.linalg.norm(a):.1%}")
