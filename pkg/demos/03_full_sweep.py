"""Walkthrough: the whole workflow in one sitting.

Generates a small funnel-vs-brick sweep, runs it in a 2-process pool,
queries the store, resumes the still-improving runs, and renders plots.
Everything lands under demos/output/.
"""

import shutil
from pathlib import Path

from gridrun import generate_pipelines, init_db, parse_config, read_curve, rerun, save_lossplots, save_metaplots, schedule

OUT = Path(__file__).parent / "output" / "sweep"
shutil.rmtree(OUT, ignore_errors=True)
OUT.mkdir(parents=True)

cfg = parse_config(f"""
[MONITOR]
nb_processus = 2
multiplicity = 3
cache_database_path = {OUT / "cache"}
cache_size = 16M

[PROCESS]
lr = 1e-2
epochs = 60
loss_function = MSELoss
data_scheme = dataset_generator
pipeline_scheme = mlp
run_files_path = {OUT / "artifacts"}

[dataset_gen]
type = dataset_generator
class = dataset_generator
batch_size = 50
data_size = 600
train_prop = 0.9
d_in = 4
noise_sigma = 0.05
key = data_{{class}}

[mlp_funnel]
type = mlp
class = mlp_funnel
length = {{2-3}}
width = 2, 4
key = mlp_{{class}}

[mlp_brick]
type = mlp
class = mlp_brick
length = {{2-3}}
width = 2, 4
key = mlp_{{class}}
""")

pipelines = generate_pipelines(cfg)
print(f"generated {len(pipelines)} pipelines x multiplicity "
      f"{cfg.monitor.multiplicity} = {len(pipelines) * cfg.monitor.multiplicity} runs")

db = init_db(OUT / "runs.db")
summary = schedule(pipelines, cfg.monitor, db, global_seed=42)
print(f"schedule summary: {summary}")

improving = db.query_runs("status = 'done' AND slope_mean < -1e-5")
print(f"{len(improving)} runs still improving; resuming them for 30 epochs")
print(rerun(db, cfg.monitor, "slope_mean < -1e-5", 30, global_seed=42))

done = db.query_runs("status = 'done'")
best = sorted(done, key=lambda r: r.final_test_loss)[:3]
print("\nbest three runs by test loss:")
for record in best:
    print(f"  {record.final_test_loss:.5f}  {record.label} "
          f"[{record.epochs} epochs, {record.nb_params} params]")

records = db.query_runs("status = 'done'", with_meta=True)
save_lossplots(best, [read_curve(r.curve_path) for r in best], OUT / "plots")
manifest = save_metaplots(
    records,
    """
[global]
file_title = sweep

[plot_1]
abscissae = nb_params
ordinates = test_loss
include_keys = class
include_values = [mlp_funnel, mlp_brick]
excludes = width, length
plot_type = line
errorbars_style = filled

[plot_2]
abscissae = width
ordinates = overfitting
plot_type = violin
excludes = width, length
""",
    OUT / "plots",
    dump_csv=True,
)
db.close()
print(f"\nwrote {sum(1 for p in manifest['plots'] if p['file'])} comparison plots "
      f"and 3 loss plots under {OUT / 'plots'}")
