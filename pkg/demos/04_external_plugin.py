"""Walkthrough: the cross-language worker protocol.

A pipeline whose stage class is not built-in is delegated to the external
program named by path_to_class, which speaks the same stdin/stdout JSON
protocol.  This demo drives the bundled TypeScript linear-model plugin
(build it first: cd plugin-ts && npm install && npm run build).
"""

import shutil
import sys
from pathlib import Path

from gridrun import generate_pipelines, init_db, parse_config, schedule

PLUGIN = Path(__file__).parent.parent / "plugin-ts" / "dist" / "plugin.js"
if not PLUGIN.exists():
    sys.exit("plugin not built; run: cd plugin-ts && npm install && npm run build")

OUT = Path(__file__).parent / "output" / "plugin"
shutil.rmtree(OUT, ignore_errors=True)
OUT.mkdir(parents=True)

cfg = parse_config(f"""
[MONITOR]
nb_processus = 2
multiplicity = 2

[PROCESS]
lr = 5e-2
epochs = 25
loss_function = MSELoss
data_scheme = dataset_generator
pipeline_scheme = mlp
run_files_path = {OUT / "artifacts"}

[dataset_gen]
type = dataset_generator
class = dataset_generator
data_size = 400
train_prop = 0.8
d_in = 3
noise_sigma = 0.05
key = data_{{class}}

[ts_linear]
type = mlp
class = ts_linear
path_to_class = {PLUGIN}
key = mlp_{{class}}
""")

db = init_db(OUT / "runs.db")
summary = schedule(generate_pipelines(cfg), cfg.monitor, db, global_seed=7)
print(f"plugin sweep summary: {summary}")

for record in db.query_runs("status = 'done'", with_meta=True):
    print(f"  {record.run_id}  {record.label}")
    print(f"    nb_params={record.nb_params}  final_test={record.final_test_loss:.5f}  "
          f"slope={record.slope_mean:+.2e}")
print("\nthese records are schema-identical to built-in trainer records:")
print("indicators, keys and info fields all flow through the same protocol")
db.close()
