"""Acceptance suite: one test per release criterion, each printing a PASS
line with its headline numbers when it holds.  Tolerances are pinned here
and nowhere else."""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from gridrun.analysis import (
    PlotSpec,
    Series,
    SeriesPoint,
    gaussian_kde,
    render_metaplot,
    save_metaplots,
)
from gridrun.cli import main as cli_main
from gridrun.config import parse_config
from gridrun.indicators import (
    LossCurve,
    compute_all,
    overfitting,
    read_curve,
    slope_stats,
    trainability,
)
from gridrun.pipelines import generate_pipelines
from gridrun.runner import rerun, schedule
from gridrun.store import init_db
from gridrun.trainer import (
    AdamState,
    MlpModel,
    adam_step,
    build_mlp,
    forward,
    gen_dataset,
    grad,
    load_checkpoint,
    make_checkpoint,
    save_checkpoint,
    train_epochs,
)

from test_indicators import literal_reference
from test_pipelines import enumerate_by_hand
from test_trainer import finite_difference_grads, max_relative_error

DATA = Path(__file__).parent / "data"
FIXTURES = Path(__file__).parent / "fixtures"


def ok(name: str, detail: str = "") -> None:
    print(f"PASS: {name}" + (f" ({detail})" if detail else ""), flush=True)


def desk_sweep_config(run_dir, cache_dir=None, nb_processus=2) -> str:
    cache = (
        f"cache_database_path = {cache_dir}\ncache_size = 64M" if cache_dir else ""
    )
    return f"""
[MONITOR]
nb_processus = {nb_processus}
multiplicity = 4
{cache}

[PROCESS]
lr = 1e-2
epochs = 200
loss_function = MSELoss
data_scheme = dataset_generator
pipeline_scheme = mlp
run_files_path = {run_dir}

[dataset_gen]
type = dataset_generator
class = dataset_generator
batch_size = 100
data_size = 1000
train_prop = 0.9
d_in = 4
noise_sigma = 0.05
key = data_{{class}}

[mlp_funnel]
type = mlp
class = mlp_funnel
length = 5, {{6-8}}
width = {{2-4}}
key = mlp_{{class}}

[mlp_brick]
type = mlp
class = mlp_brick
length = 5, 6, 7, 8
width = {{2-4}}
key = mlp_{{class}}
"""


class TestCartesianExpansion:
    def test_full_sweep_gen_and_schedule(self, full_sweep_text, tmp_path):
        started = time.monotonic()
        cfg_path = tmp_path / "exp.ini"
        cfg_path.write_text(full_sweep_text)
        out = tmp_path / "pipes"

        assert cli_main(["gen", "-c", str(cfg_path), "-o", str(out)]) == 0
        files = [p for p in out.glob("*.json") if p.name != "manifest.json"]
        assert len(files) == 576

        cfg = parse_config(full_sweep_text)
        oracle = enumerate_by_hand(cfg)
        assert len(oracle) == 576

        db = init_db(tmp_path / "runs.db")
        summary = schedule(generate_pipelines(cfg), cfg.monitor, db)
        count = db.conn.execute("SELECT COUNT(*) FROM runs").fetchone()[0]
        db.close()
        assert count == 2304
        assert summary["total"] == 2304

        elapsed = time.monotonic() - started
        assert elapsed < 5.0
        ok(
            "cartesian expansion",
            f"576 pipeline files, 2304 run records, {elapsed:.2f}s",
        )


class TestLabelFamily:
    def test_funnel_family_exact_labels(self, tmp_path):
        text = f"""
[MONITOR]

[PROCESS]
lr = 1e-2
epochs = 10
pipeline_scheme = mlp
run_files_path = {tmp_path}

[mlp_funnel]
type = mlp
class = mlp_funnel
length = 4
width = {{2-4}},8
"""
        labels = [p.label for p in generate_pipelines(parse_config(text))]
        assert labels == [
            "mlp_funnel(4,2)",
            "mlp_funnel(4,3)",
            "mlp_funnel(4,4)",
            "mlp_funnel(4,8)",
        ]
        ok("label family", ", ".join(labels))


class TestIndicatorKernel:
    def test_kernel_suite(self):
        # constant curve
        constant = LossCurve(train=[3.0] * 40, test=[3.0] * 40)
        assert overfitting(constant) == 0.0
        assert slope_stats(constant) == (0.0, 0.0, 0.0)
        assert trainability(constant) == pytest.approx(40 * 3.0, abs=1e-12)

        # linear curve, this spec's per-epoch normalization
        linear = LossCurve(
            train=[10 - 0.01 * e for e in range(1, 101)],
            test=[10 - 0.01 * e for e in range(1, 101)],
        )
        slope_mean, _, _ = slope_stats(linear)
        assert abs(slope_mean - (-0.01)) < 1e-15

        # overfitting hand example
        hand = LossCurve(train=[1.0, 0.5, 0.2], test=[1.1, 0.6, 0.4])
        assert abs(overfitting(hand) - 0.2 / 0.9) < 1e-12

        # 1000 random curves vs the literal index-by-index re-implementation
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(1000):
            n = int(rng.integers(4, 240))
            train = np.abs(rng.normal(1.0, 0.5, size=n)).tolist()
            curve = LossCurve(train=train, test=train)
            got = slope_stats(curve)
            want = literal_reference(train)
            worst = max(worst, max(abs(g - w) for g, w in zip(got, want)))
        assert worst < 1e-12
        ok("indicator kernel", f"1000 random curves, max deviation {worst:.2e}")


class TestGradientCheck:
    def test_hundred_random_mlps(self):
        started = time.monotonic()
        rng = np.random.default_rng(7)
        worst = 0.0
        for i in range(100):
            n_layers = int(rng.integers(1, 4))
            dims = [int(rng.integers(2, 17)) for _ in range(n_layers + 1)]
            model = build_mlp(
                "brick", length=1, width=1, d_in=dims[0], d_out=dims[-1], seed=i
            )
            # reshape to the drawn layer sizes
            layers = []
            for a, b in zip(dims[:-1], dims[1:]):
                W = rng.uniform(-0.8, 0.8, size=(a, b))
                bias = rng.uniform(-0.3, 0.3, size=b)
                layers.append([W, bias])
            model = MlpModel(layers=layers)
            X = rng.uniform(-1, 1, size=(int(rng.integers(1, 9)), dims[0]))
            Y = rng.uniform(-1, 1, size=(X.shape[0], dims[-1]))
            analytic = grad(model, X, Y)
            numeric = finite_difference_grads(model, X, Y, h=1e-5)
            worst = max(worst, max_relative_error(analytic, numeric))
        elapsed = time.monotonic() - started
        assert worst < 1e-4
        assert elapsed < 30.0
        ok("gradient check", f"100 models, max rel err {worst:.2e}, {elapsed:.1f}s")


class TestOptimizerSanity:
    def test_adam_on_quadratic(self):
        model = MlpModel(layers=[[np.array([[1.0]]), np.zeros(1)]])
        state = AdamState.for_model(model)
        for step in range(1, 2001):
            g = [[2.0 * model.layers[0][0], np.zeros(1)]]
            adam_step(state, model, g, lr=1e-2)
            if abs(model.layers[0][0][0, 0]) < 1e-3:
                break
        theta = abs(model.layers[0][0][0, 0])
        assert theta < 1e-3 and step <= 2000
        ok("optimizer sanity", f"|theta|={theta:.2e} after {step} steps")


class TestDeskSweep:
    def test_end_to_end(self, tmp_path):
        started = time.monotonic()

        def run_once(side: str):
            root = tmp_path / side
            root.mkdir()
            cfg = parse_config(
                desk_sweep_config(root / "artifacts", cache_dir=root / "cache")
            )
            pipelines = generate_pipelines(cfg)
            assert len(pipelines) == 24
            db = init_db(root / "runs.db")
            summary = schedule(pipelines, cfg.monitor, db, global_seed=2024)
            return db, summary

        db, summary = run_once("first")
        assert summary == {"done": 96, "failed": 0, "total": 96}

        records = db.query_runs("status = 'done'", with_meta=True)
        assert len(records) == 96
        for record in records:
            for value in (
                record.final_train_loss,
                record.final_test_loss,
                record.overfitting,
                record.slope_mean,
                record.slope_sigma_plus,
                record.slope_sigma_minus,
                record.trainability,
            ):
                assert value is not None and math.isfinite(value)
            assert 0.0 <= record.overfitting <= 1.0
            assert record.epochs == 200

        # bitwise reproduction under the same global seed
        db2, summary2 = run_once("second")
        assert summary2 == {"done": 96, "failed": 0, "total": 96}
        first = {r.run_id: Path(r.curve_path).read_bytes() for r in records}
        second = {
            r.run_id: Path(r.curve_path).read_bytes()
            for r in db2.query_runs("status = 'done'")
        }
        db2.close()
        assert first == second

        # comparison plot: per-point mean/std recomputable from the database
        plot_cfg = """
[global]
file_title = desk

[plot_1]
abscissae = nb_params
ordinates = test_loss
include_keys = class
include_values = [mlp_funnel, mlp_brick]
excludes = width, length
plot_type = line
errorbars_style = bars
"""
        plots_dir = tmp_path / "plots"
        manifest = save_metaplots(records, plot_cfg, plots_dir, dump_csv=True)
        assert manifest["plots"][0]["file"] == "desk_plot_1.svg"
        assert manifest["plots"][0]["series"] == 2
        svg = (plots_dir / "desk_plot_1.svg").read_text()
        assert 'class="mean series-0"' in svg and 'class="mean series-1"' in svg

        by_group: dict = {}
        for record in records:
            key = (record.info["class"], record.nb_params)
            by_group.setdefault(key, []).append(record.final_test_loss)
        csv_rows = (plots_dir / "desk_plot_1.csv").read_text().splitlines()[1:]
        assert len(csv_rows) == len(by_group)
        for row in csv_rows:
            series_label, abscissa, mean_s, std_s, n_s = row.rsplit(",", 4)
            cls = "mlp_funnel" if "funnel" in series_label else "mlp_brick"
            samples = by_group[(cls, int(abscissa))]
            assert int(n_s) == len(samples)
            assert abs(float(mean_s) - np.mean(samples)) < 1e-12
            assert abs(float(std_s) - np.std(samples)) < 1e-12

        db.close()
        elapsed = time.monotonic() - started
        assert elapsed < 300.0
        ok(
            "end-to-end desk sweep",
            f"96+96 runs done, bitwise reproducible, {elapsed:.0f}s",
        )


class TestRerunContract:
    def test_resume_extends_and_recomputes(self, tmp_path):
        cfg = parse_config(
            desk_sweep_config(tmp_path / "artifacts").replace(
                "epochs = 200", "epochs = 20"
            )
        )
        pipeline = generate_pipelines(cfg)[0]
        db = init_db(tmp_path / "runs.db")
        schedule([pipeline], cfg.monitor, db, global_seed=5)
        before = db.query_runs("status = 'done'")
        assert len(before) == 4  # multiplicity

        summary = rerun(db, cfg.monitor, "1=1", 12, global_seed=5)
        assert summary == {"rerun": 4, "done": 4, "failed": 0}
        for record in db.query_runs("status = 'done'"):
            assert record.epochs == 32
            curve = read_curve(record.curve_path)
            assert curve.n == 32
            epochs_column = [
                int(line.split(",")[0])
                for line in Path(record.curve_path).read_text().splitlines()[1:]
            ]
            assert epochs_column == list(range(1, 33))
            assert record.trainability == pytest.approx(sum(curve.train), rel=1e-12)
            assert record.final_train_loss == curve.train[-1]
        db.close()

        # checkpoint fidelity: save -> load -> forward is bit-identical
        ds = gen_dataset({"data_size": 64, "d_in": 3, "batch_size": 8,
                          "train_prop": 0.75}, seed=3)
        model = build_mlp("funnel", 3, 2, 3, 1, seed=4)
        adam = AdamState.for_model(model)
        rng = np.random.default_rng(5)
        train_epochs(model, adam, ds, rng, epochs=5, lr=1e-2)
        ckpt_path = tmp_path / "ckpt.json"
        save_checkpoint(ckpt_path, make_checkpoint(model, adam, rng, 5, "c.csv"))
        loaded, _, _, _ = load_checkpoint(ckpt_path)
        assert np.array_equal(forward(model, ds.test_X), forward(loaded, ds.test_X))
        ok("rerun contract", "20+12 epochs, indicators over full curve, bit-exact checkpoint")


class TestFaultIsolation:
    def test_single_diverged_run(self, tmp_path):
        run_dir = tmp_path / "artifacts"
        good_cfg = parse_config(
            desk_sweep_config(run_dir).replace("epochs = 200", "epochs = 5")
        )
        good = generate_pipelines(good_cfg)[:15]
        nan_cfg = parse_config(f"""
[MONITOR]
nb_processus = 2

[PROCESS]
lr = 1e-2
epochs = 5
pipeline_scheme = custom
run_files_path = {run_dir}

[naughty]
type = custom
class = emits_nan
path_to_class = {FIXTURES / "nan_plugin.py"}
""")
        bad = generate_pipelines(nan_cfg)
        monitor = parse_config(
            desk_sweep_config(run_dir).replace("multiplicity = 4", "multiplicity = 1")
        ).monitor
        db = init_db(tmp_path / "runs.db")
        summary = schedule(good + bad, monitor, db, global_seed=3)
        assert summary == {"done": 15, "failed": 1, "total": 16}

        failed = db.query_runs("status = 'failed'")
        assert len(failed) == 1
        assert failed[0].failure_reason == "diverged"
        assert failed[0].pipeline_hash == bad[0].pipeline_hash
        for col in ("final_train_loss", "overfitting", "trainability"):
            assert getattr(failed[0], col) is None

        done = db.query_runs("status = 'done'")
        assert len(done) == 15
        for record in done:
            assert record.final_train_loss is not None
        counts = db.status_counts()
        assert counts == {"pending": 0, "running": 0, "done": 15, "failed": 1}
        db.close()
        ok("fault isolation", "1 diverged, 15 siblings done, store consistent")


class TestKdeNormalization:
    def test_every_rendered_violin_integrates_to_one(self):
        rng = np.random.default_rng(11)
        series = [
            Series(
                "spread",
                [
                    SeriesPoint(1.0, rng.normal(0.5, 0.2, 40).tolist(), 0.5, 0.2),
                    SeriesPoint(2.0, rng.uniform(100, 200, 7).tolist(), 150.0, 30.0),
                    SeriesPoint(3.0, [4.2, 4.2, 4.2], 4.2, 0.0),
                ],
            ),
            Series(
                "pairs",
                [
                    SeriesPoint(1.0, [0.001, 0.002], 0.0015, 0.0005),
                    SeriesPoint(2.0, [-5.0, 5.0], 0.0, 5.0),
                    SeriesPoint(3.0, [7.0], 7.0, 0.0),  # dot fallback, no KDE
                ],
            ),
        ]
        spec = PlotSpec(name="p", abscissae="x", ordinates="y", plot_type="violin")
        svg = render_metaplot(series, spec)
        assert 'class="violin series-0"' in svg
        assert 'class="violin-dot series-1"' in svg

        checked = 0
        for s in series:
            for point in s.points:
                if len(point.samples) < 2:
                    continue  # rendered as a dot, not a violin
                grid, density = gaussian_kde(point.samples)
                integral = float(np.trapezoid(density, grid))
                assert 0.995 <= integral <= 1.0
                checked += 1
        assert checked == 5
        ok("kde normalization", f"{checked} violins, integrals within [0.995, 1.0]")
