"""The bundled time-course pipeline, driven through the library API.

Runs a shortened version of the `wen-rat` preset (background-cluster prior,
piecewise-linear time design over 9 points, 112 items) and prints the
resulting cluster structure and its agreement with the bundled class labels.
The full-length schedule is the CLI route:

    echo '{"preset": "wen-rat"}' > rat.json
    cdpmix run --config rat.json --out runs/rat
"""

import collections
import os
import tempfile

from cdpmix import pipeline

out_dir = os.path.join(tempfile.gettempdir(), "cdpmix-rat-demo")
config = pipeline.parse_config({
    "preset": "wen-rat",
    "sweeps": 2000,        # the preset's full schedule is 20000 / 10000
    "burn_in": 1000,
    "seed": 42,
    "out": out_dir,
})
print(f"dataset: {config.dataset.n} items x {config.dataset.n_samples} time points")
print(f"model:   {config.model}")
manifest = pipeline.run_pipeline(config)
print(f"estimate: {manifest['estimate']['clusters']} clusters "
      f"(loss {manifest['estimate']['loss']:.1f}, "
      f"strategy {manifest['estimate']['strategy']})")
print(f"artifacts in {out_dir}: {', '.join(manifest['artifacts'])}")

with open(os.path.join(out_dir, "assignments.csv")) as fh:
    rows = [line.strip().split(",") for line in fh.readlines()[1:]]
sizes = collections.Counter(r[1] for r in rows)
background = [r[0] for r in rows if r[2] == "0"]
print(f"cluster sizes: {dict(sorted(sizes.items()))}")
print(f"{len(background)} items assigned to the background colour")

print("\ncluster-by-class counts (from crosstab.csv):")
with open(os.path.join(out_dir, "crosstab.csv")) as fh:
    lines = fh.readlines()[1:]
table = collections.defaultdict(dict)
for line in lines:
    _, cluster, category, count = line.strip().split(",")
    table[cluster][category] = int(count)
categories = sorted({c for row in table.values() for c in row})
print("  cluster " + " ".join(f"{c:>7}" for c in categories))
for cluster in sorted(table, key=int):
    print(f"  {cluster:>7} " + " ".join(f"{table[cluster].get(c, 0):>7}"
                                        for c in categories))
