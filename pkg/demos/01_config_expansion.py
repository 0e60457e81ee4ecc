"""Walkthrough: from an experiment file to concrete pipelines.

Shows the value-expansion grammar, the cartesian pipeline product, labels,
grouping keys and content hashes, and the JSON persistence round-trip.
"""

import tempfile

from gridrun import expand_values, generate_pipelines, load_pipelines, parse_config, persist_pipelines

print("== value expansion grammar ==")
for raw in ("5", "{2-4},8", "{3, 5}, 8", "True, False", "normalisation, standardisation"):
    print(f"  {raw!r:38} -> {expand_values(raw)}")

CONFIG = """
[MONITOR]
nb_processus = 2
multiplicity = 2

[PROCESS]
lr = 1e-2
epochs = 40
loss_function = MSELoss
data_scheme = dataset_generator
pipeline_scheme = mlp
run_files_path = .runs

[dataset_gen]
type = dataset_generator
class = dataset_generator
batch_size = 32
data_size = 500
train_prop = 0.8
d_in = 4
key = data_{class}

[mlp_funnel]
type = mlp
class = mlp_funnel
length = {2-3}
width = 2, 4
key = mlp_{class}

[mlp_brick]
type = mlp
class = mlp_brick
length = 2
width = {2-4}
key = mlp_{class}
"""

cfg = parse_config(CONFIG)
pipelines = generate_pipelines(cfg)

print("\n== cartesian product ==")
print(f"  funnel: 2 lengths x 2 widths = 4; brick: 1 length x 3 widths = 3")
print(f"  data (1) x mlp (4 + 3)      = {len(pipelines)} pipelines")

print("\n== labels, keys, hashes ==")
for p in pipelines:
    print(f"  {p.pipeline_hash}  {p.label:45}  keys={sorted(p.keys)}")

with tempfile.TemporaryDirectory() as out:
    persist_pipelines(out, pipelines, monitor=cfg.monitor)
    again = load_pipelines(out)
    print(f"\n== persistence ==\n  wrote and re-read {len(again)} pipelines, "
          f"equal: {again == pipelines}")
