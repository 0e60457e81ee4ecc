"""Built-in worker: executes one pipeline as an isolated process.

Reads a single run command from stdin, replies with info/epoch events and
one terminal event on stdout (see protocol.py), and logs to stderr.  Data
stages run in declaration order, each receiving the previous stage's
output plus the merged info of everything before it; the last data stage
must yield the train/test dataset.  Model stages compose into one MLP by
stacking their layers.  The final checkpoint makes the run bit-exactly
resumable.

Service configuration that is not part of a pipeline's identity (dataset
seed, cache location) arrives through environment variables, mirroring
how resource tokens are handed over.
"""

from __future__ import annotations

import io
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import trainer
from .cache import BlobCache
from .errors import GridrunError
from .indicators import LossCurve, read_curve, write_curve
from .protocol import (
    ENV_CACHE_PATH,
    ENV_CACHE_SIZE,
    ENV_DATASET_SEED,
    ProtocolError,
    encode,
    parse_line,
    validate_run_command,
)
from .util import content_hash, stable_seed

log = logging.getLogger("gridrun.worker")

BUILTIN_DATA_CLASSES = ("dataset_generator", "transform")
BUILTIN_MODEL_CLASSES = {"mlp_funnel": "funnel", "mlp_brick": "brick"}


def is_builtin_class(class_name: str) -> bool:
    return class_name in BUILTIN_DATA_CLASSES or class_name in BUILTIN_MODEL_CLASSES


class StageResolutionError(GridrunError):
    pass


# ---------------------------------------------------------------------------
# Dataset blob (cache payload): arrays plus the per-stage info events


def dataset_to_blob(ds: trainer.Dataset, stage_infos: list) -> bytes:
    buf = io.BytesIO()
    meta = {
        "n_train": ds.n_train,
        "batch_size": ds.batch_size,
        "info": ds.info,
        "stage_infos": stage_infos,
    }
    np.savez(buf, X=ds.X, Y=ds.Y, meta=np.array(json.dumps(meta)))
    return buf.getvalue()


def dataset_from_blob(raw: bytes) -> tuple[trainer.Dataset, list]:
    with np.load(io.BytesIO(raw), allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        ds = trainer.Dataset(
            X=data["X"],
            Y=data["Y"],
            n_train=meta["n_train"],
            batch_size=meta["batch_size"],
            info=meta["info"],
        )
    return ds, meta["stage_infos"]


def _run_data_stages(stages: list[dict], dataset_seed: int) -> tuple[trainer.Dataset, list]:
    """Execute the data stages in order; returns the final dataset and the
    (section, fields) info list they published."""
    ds = None
    merged_info: dict = {}
    stage_infos = []
    for stage in stages:
        cls = stage["class"]
        params = dict(stage["params"])
        if cls == "dataset_generator":
            ds = trainer.gen_dataset(params, seed=dataset_seed)
            fields = {**params, **ds.info}
        elif cls == "transform":
            if ds is None:
                raise StageResolutionError(
                    f"[{stage['section']}] transform has no dataset to act on"
                )
            style = params.get("style")
            ds = trainer.transform(ds, str(style))
            fields = {**params}
        else:
            raise StageResolutionError(f"unknown data class {cls!r}")
        merged_info.update(fields)
        stage_infos.append([stage["section"], fields])
    if ds is None:
        raise StageResolutionError("pipeline has no dataset-producing stage")
    ds.info = merged_info
    return ds, stage_infos


def _build_dataset(pipeline: dict, dataset_seed: int) -> tuple[trainer.Dataset, list]:
    """Build the dataset, going through the shared blob cache when one is
    configured in the environment."""
    data_types = set(pipeline["process"]["data_scheme"])
    data_stages = [s for s in pipeline["stages"] if s["type"] in data_types]

    cache_root = os.environ.get(ENV_CACHE_PATH)
    cache_size = int(os.environ.get(ENV_CACHE_SIZE, "0"))
    if not cache_root or cache_size <= 0:
        return _run_data_stages(data_stages, dataset_seed)

    cache = BlobCache(cache_root, cache_size)
    key = content_hash({"data_stages": data_stages, "dataset_seed": dataset_seed})
    blob_path = cache.fetch_or_build(
        key,
        lambda: dataset_to_blob(*_run_data_stages(data_stages, dataset_seed)),
    )
    return dataset_from_blob(blob_path.read_bytes())


def _compose_model(
    model_stages: list[dict], d_in: int, d_out: int, seed: int
) -> trainer.MlpModel:
    """Build and stack the model stages; hidden activations stay ReLU, only
    the very last layer is identity."""
    layers = []
    current_in = d_in
    for i, stage in enumerate(model_stages):
        cls = stage["class"]
        kind = BUILTIN_MODEL_CLASSES.get(cls)
        if kind is None:
            raise StageResolutionError(f"unknown model class {cls!r}")
        params = stage["params"]
        model = trainer.build_mlp(
            kind,
            length=int(params.get("length", 1)),
            width=int(params.get("width", 1)),
            d_in=current_in,
            d_out=d_out,
            seed=stable_seed(seed, "init", i),
        )
        layers.extend(model.layers)
        current_in = model.d_out
    if not layers:
        raise StageResolutionError("pipeline has no model stage")
    first = model_stages[0]["params"]
    return trainer.MlpModel(
        layers=layers,
        kind=BUILTIN_MODEL_CLASSES[model_stages[0]["class"]],
        length=int(first.get("length", 1)),
        width=int(first.get("width", 1)),
    )


def run_worker(cmd: dict, emit) -> None:
    """Execute one validated run command, emitting protocol events."""
    pipeline = cmd["pipeline"]
    process = pipeline["process"]
    seed = cmd["seed"]
    dataset_seed = int(os.environ.get(ENV_DATASET_SEED, str(seed)))

    for stage in pipeline["stages"]:
        if not is_builtin_class(stage["class"]):
            raise StageResolutionError(
                f"class {stage['class']!r} is not a built-in stage"
            )
    if cmd["loss_function"] != "MSELoss":
        raise StageResolutionError(
            f"built-in trainer only implements MSELoss, got {cmd['loss_function']!r}"
        )

    run_dir = Path(process["run_files_path"])
    run_dir.mkdir(parents=True, exist_ok=True)

    ds, stage_infos = _build_dataset(pipeline, dataset_seed)
    for section, fields in stage_infos:
        emit({"event": "info", "stage": section, "fields": fields})

    model_types = set(process["pipeline_scheme"])
    model_stages = [s for s in pipeline["stages"] if s["type"] in model_types]

    d_in = int(ds.info["input_shape"])
    d_out = int(ds.info["output_shape"])

    if cmd.get("resume_from"):
        model, adam, rng, ckpt = trainer.load_checkpoint(cmd["resume_from"])
        start_epoch = int(ckpt["epoch"])
        curve_path = Path(ckpt["curve_path"])
        checkpoint_path = Path(cmd["resume_from"])
        old_curve = read_curve(curve_path)
        history_train, history_test = list(old_curve.train), list(old_curve.test)
    else:
        model = _compose_model(model_stages, d_in, d_out, seed)
        adam = trainer.AdamState.for_model(model)
        rng = np.random.default_rng(stable_seed(seed, "train"))
        start_epoch = 0
        base = f"{pipeline['hash']}_{seed:016x}"
        curve_path = run_dir / f"{base}.curve.csv"
        checkpoint_path = run_dir / f"{base}.ckpt.json"
        history_train, history_test = [], []

    total_params = trainer.count_params(model)
    for i, stage in enumerate(model_stages):
        fields = {**stage["params"], "class": stage["class"]}
        if i == len(model_stages) - 1:
            fields["nb_params"] = total_params
        emit({"event": "info", "stage": stage["section"], "fields": fields})

    log.info(
        "training %s: %d params, %d epochs from epoch %d",
        pipeline["label"], total_params, cmd["epochs"], start_epoch,
    )

    def on_epoch(e: int, train_loss: float, test_loss: float) -> None:
        emit(
            {
                "event": "epoch",
                "epoch": e,
                "train_loss": train_loss,
                "test_loss": test_loss,
            }
        )

    new_curve = trainer.train_epochs(
        model,
        adam,
        ds,
        rng,
        epochs=cmd["epochs"],
        lr=float(cmd["lr"]),
        start_epoch=start_epoch,
        on_epoch=on_epoch,
    )
    if new_curve is not None:
        history_train.extend(new_curve.train)
        history_test.extend(new_curve.test)

    write_curve(curve_path, LossCurve(train=history_train, test=history_test))
    ckpt = trainer.make_checkpoint(
        model,
        adam,
        rng,
        epoch=start_epoch + cmd["epochs"],
        curve_path=str(curve_path),
    )
    trainer.save_checkpoint(checkpoint_path, ckpt)
    emit({"event": "done", "checkpoint": str(checkpoint_path), "curve": str(curve_path)})


def main(stdin=None, stdout=None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=os.environ.get("GRIDRUN_LOG_LEVEL", "INFO"),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout

    def emit(message: dict) -> None:
        stdout.write(encode(message) + "\n")
        stdout.flush()

    line = stdin.readline()
    try:
        cmd = validate_run_command(parse_line(line))
    except ProtocolError as exc:
        emit({"event": "error", "message": f"bad run command: {exc}"})
        return 1
    try:
        run_worker(cmd, emit)
    except trainer.DivergedError as exc:
        log.error("run diverged: %s", exc)
        emit({"event": "error", "message": "diverged"})
        return 1
    except GridrunError as exc:
        log.error("run failed: %s", exc)
        emit({"event": "error", "message": str(exc)})
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        log.exception("unexpected worker failure")
        emit({"event": "error", "message": f"internal: {exc}"})
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
