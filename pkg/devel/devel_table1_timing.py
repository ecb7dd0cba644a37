"""
Time the IIR solver over the reference grid, serially and with a process pool.

Useful to pick SWEEP['workers'] on a new machine.
"""

import time
from ouestimation import experiments

specs = experiments.table1_specs()

for workers in [1, None]:
    tstart = time.perf_counter()
    results = [experiments.grid_search(spec, workers=workers) for spec in specs]
    elapsed = time.perf_counter() - tstart
    npoints = sum(len(res.records) for res in results)
    print(f"workers={workers}: {npoints} points in {elapsed:.1f} s")

result = experiments.merge_results(results)
print(result.argmins[['scheme', 'theta', 'epsilon', 'ell', 'n', 'lambda_star']])
for message in experiments.table1_discrepancies(result.argmins):
    print(f"Differs: {message}")
