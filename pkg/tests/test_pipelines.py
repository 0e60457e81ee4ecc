import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridrun.config import ConfigSpec, MonitorParams, ProcessParams, StageSection, parse_config
from gridrun.pipelines import (
    CorruptPipelineFile,
    ExplosionGuard,
    StageInstance,
    UnknownPlaceholder,
    generate_pipelines,
    load_pipelines,
    make_pipeline,
    persist_pipelines,
    pipeline_label,
    render_key,
)

FUNNEL_FAMILY = """
[MONITOR]

[PROCESS]
lr = 1e-2
epochs = 10
pipeline_scheme = mlp

[mlp_funnel]
type = mlp
class = mlp_funnel
path_to_class = ./mlp.py
length = 4
width = {2-4},8
"""


def enumerate_by_hand(cfg: ConfigSpec):
    """Independent nested-loop oracle: explicit recursion over slots,
    sections and parameter positions, no itertools."""
    slots = cfg.process.scheme

    def section_choices(section):
        names = list(section.params.keys())

        def rec(i):
            if i == len(names):
                return [{}]
            tails = rec(i + 1)
            out = []
            for value in section.params[names[i]]:
                for tail in tails:
                    combo = {names[i]: value}
                    combo.update(tail)
                    out.append(combo)
            return out

        return [(section.section_name, choice) for choice in rec(0)]

    def rec_slots(i):
        if i == len(slots):
            return [[]]
        tails = rec_slots(i + 1)
        out = []
        for section in cfg.sections_for_type(slots[i]):
            for choice in section_choices(section):
                for tail in tails:
                    out.append([choice] + tail)
        return out

    return rec_slots(0)


class TestGenerate:
    def test_full_sweep_is_576(self, full_sweep_text):
        cfg = parse_config(full_sweep_text)
        oracle = enumerate_by_hand(cfg)
        assert len(oracle) == 576
        pipelines = generate_pipelines(cfg)
        assert len(pipelines) == 576
        got = [[(s.section_name, s.params) for s in p.stages] for p in pipelines]
        want = [[(name, params) for name, params in combo] for combo in oracle]
        assert got == want

    def test_single_scalar_section(self):
        cfg = parse_config(FUNNEL_FAMILY.replace("{2-4},8", "2"))
        assert len(generate_pipelines(cfg)) == 1

    def test_funnel_family_labels(self):
        cfg = parse_config(FUNNEL_FAMILY)
        labels = [p.label for p in generate_pipelines(cfg)]
        assert labels == [
            "mlp_funnel(4,2)",
            "mlp_funnel(4,3)",
            "mlp_funnel(4,4)",
            "mlp_funnel(4,8)",
        ]

    def test_explosion_guard(self, full_sweep_text):
        cfg = parse_config(full_sweep_text)
        with pytest.raises(ExplosionGuard):
            generate_pipelines(cfg, limit=100)

    def test_determinism_byte_identical(self, full_sweep_text, tmp_path):
        cfg = parse_config(full_sweep_text)
        dirs = []
        for name in ("a", "b"):
            out = tmp_path / name
            persist_pipelines(out, generate_pipelines(cfg))
            dirs.append(out)
        files_a = sorted(p.name for p in dirs[0].iterdir())
        files_b = sorted(p.name for p in dirs[1].iterdir())
        assert files_a == files_b
        for name in files_a:
            assert (dirs[0] / name).read_bytes() == (dirs[1] / name).read_bytes()

    def test_hashes_unique(self, full_sweep_text):
        cfg = parse_config(full_sweep_text)
        pipelines = generate_pipelines(cfg)
        assert len({p.pipeline_hash for p in pipelines}) == len(pipelines)

    @settings(max_examples=30, deadline=None)
    @given(st.data())
    def test_count_law_random_configs(self, data):
        n_types = data.draw(st.integers(1, 3))
        sections = []
        scheme = []
        expected = 1
        for t in range(n_types):
            type_name = f"type{t}"
            scheme.append(type_name)
            n_sections = data.draw(st.integers(1, 2))
            type_total = 0
            for s in range(n_sections):
                n_params = data.draw(st.integers(0, 3))
                params = {}
                combos = 1
                for p in range(n_params):
                    values = data.draw(
                        st.lists(st.integers(0, 9), min_size=1, max_size=3)
                    )
                    params[f"p{p}"] = values
                    combos *= len(values)
                sections.append(
                    StageSection(
                        section_name=f"sec{t}_{s}",
                        stage_type=type_name,
                        class_name=f"cls{t}_{s}",
                        params=params,
                    )
                )
                type_total += combos
            expected *= type_total
        cfg = ConfigSpec(
            monitor=MonitorParams(),
            process=ProcessParams(lr=0.1, epochs=10, pipeline_scheme=scheme),
            sections=sections,
        )
        pipelines = generate_pipelines(cfg)
        assert len(pipelines) == expected
        assert len(enumerate_by_hand(cfg)) == expected


class TestLabelsAndKeys:
    def test_zero_param_label(self):
        stage = StageInstance("readout_1", "readout", "simple_readout")
        assert pipeline_label([stage]) == "readout_1()"

    def test_two_stage_label(self):
        stages = [
            StageInstance(
                "convolution", "convolution", "convolution",
                params={"pooling": True, "nb_convolution": 3},
            ),
            StageInstance(
                "mlp_brick", "mlp", "mlp_brick", params={"length": 5, "width": 2}
            ),
        ]
        assert pipeline_label(stages) == "convolution(True,3)|mlp_brick(5,2)"

    def test_render_key_class(self):
        stage = StageInstance("mlp_funnel", "mlp", "mlp_funnel")
        assert render_key("mlp_{class}", stage) == "mlp_mlp_funnel"

    def test_render_key_verbatim(self):
        stage = StageInstance("x", "mlp", "y")
        assert render_key("no_placeholders", stage) == "no_placeholders"

    def test_render_key_param(self):
        stage = StageInstance("x", "mlp", "y", params={"width": 8})
        assert render_key("w{width}", stage) == "w8"

    def test_render_key_unknown(self):
        stage = StageInstance("x", "mlp", "y")
        with pytest.raises(UnknownPlaceholder):
            render_key("{nope}", stage)


class TestPersistence:
    def test_roundtrip(self, full_sweep_text, tmp_path):
        cfg = parse_config(full_sweep_text)
        pipelines = generate_pipelines(cfg)
        persist_pipelines(tmp_path, pipelines)
        loaded = load_pipelines(tmp_path)
        assert loaded == pipelines

    def test_empty_list(self, tmp_path):
        manifest = persist_pipelines(tmp_path, [])
        assert manifest["pipelines"] == []
        assert load_pipelines(tmp_path) == []

    def test_manifest_monitor_roundtrip(self, full_sweep_text, tmp_path):
        cfg = parse_config(full_sweep_text)
        persist_pipelines(tmp_path, [], monitor=cfg.monitor)
        from gridrun.pipelines import load_manifest_monitor

        assert load_manifest_monitor(tmp_path) == cfg.monitor

    def test_tampered_file(self, tmp_path):
        process = ProcessParams(lr=0.1, epochs=10, pipeline_scheme=["mlp"])
        pipeline = make_pipeline(
            [StageInstance("m", "mlp", "mlp_brick", params={"length": 2, "width": 2})],
            process,
        )
        persist_pipelines(tmp_path, [pipeline])
        target = tmp_path / f"{pipeline.pipeline_hash}.json"
        data = json.loads(target.read_text())
        data["stages"][0]["params"]["length"] = 99
        target.write_text(json.dumps(data))
        with pytest.raises(CorruptPipelineFile):
            load_pipelines(tmp_path)
