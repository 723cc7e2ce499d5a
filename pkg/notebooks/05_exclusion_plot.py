"""
Exclusion regions from the bundled records
==========================================

Turns the synthetic experiment records into excluded (rC, lambda) regions,
checks the presets against them, and writes a log-log SVG.
"""

import sys

from collapse_sim.exclusion import (
    combine,
    default_rc_grid,
    dp_exclude_from_heating,
    exclude,
    is_excluded,
    load_records,
    region_plot,
    synthetic_records_path,
)
from collapse_sim.physics import PRESETS

records = load_records(synthetic_records_path())
grid = default_rc_grid()
regions = combine([exclude(r, grid) for r in records])

for r in records:
    print(f"{r.kind:26s} {r.label}")

# which record binds where
prev = None
for rc, lam, src in zip(regions.rC_samples, regions.combined_boundary, regions.binding_source):
    if src != prev:
        print(f"from rC = {rc:.2e} m the bound is set by {src!r} (lambda* = {lam:.2e} 1/s)")
        prev = src

for name, p in PRESETS.items():
    if p.model == "CSL":
        print(f"{name}: excluded = {is_excluded(p.params, regions)}")

for r in records:
    if r.kind == "heating-bound":
        b = dp_exclude_from_heating(r, [1e-16, 1e-5])
        print(f"DP, {r.label}: R0 < {b.r0_star:.3e} m excluded" if not b.empty else f"DP, {r.label}: nothing excluded")

out = sys.argv[1] if len(sys.argv) > 1 else "exclusion.svg"
with open(out, "w") as fh:
    fh.write(region_plot(regions, "synthetic records"))
print("wrote", out)
