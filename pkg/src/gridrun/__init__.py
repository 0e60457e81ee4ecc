"""gridrun: declarative hyperparameter sweeps over training pipelines.

An experiment INI file expands into the cartesian set of concrete
pipelines; a bounded pool of worker processes trains them; six
convergence/overfitting indicators per run land in a SQLite database; and
the analysis layer renders per-run loss plots and grouped comparison plots
as SVG.
"""

from .config import (
    ConfigSpec,
    MonitorParams,
    ProcessParams,
    StageSection,
    expand_values,
    parse_config,
    parse_config_file,
    parse_size,
    serialize_config,
)
from .errors import GridrunError
from .indicators import (
    IndicatorSet,
    LossCurve,
    compute_all,
    overfitting,
    read_curve,
    slope_stats,
    trainability,
    write_curve,
)
from .pipelines import (
    PipelineSpec,
    StageInstance,
    generate_pipelines,
    load_pipelines,
    persist_pipelines,
    pipeline_label,
    render_key,
)
from .runner import RunContext, execute_pipeline, rerun, schedule
from .store import RunRecord, Store, init_db
from .analysis import (
    PlotSpec,
    Series,
    gaussian_kde,
    parse_plot_config,
    render_lossplot,
    render_metaplot,
    save_lossplots,
    save_metaplots,
    select_and_group,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigSpec",
    "GridrunError",
    "IndicatorSet",
    "LossCurve",
    "MonitorParams",
    "PipelineSpec",
    "PlotSpec",
    "ProcessParams",
    "RunContext",
    "RunRecord",
    "Series",
    "StageInstance",
    "StageSection",
    "Store",
    "compute_all",
    "execute_pipeline",
    "expand_values",
    "gaussian_kde",
    "generate_pipelines",
    "init_db",
    "load_pipelines",
    "overfitting",
    "parse_config",
    "parse_config_file",
    "parse_plot_config",
    "parse_size",
    "persist_pipelines",
    "pipeline_label",
    "read_curve",
    "render_key",
    "render_lossplot",
    "render_metaplot",
    "rerun",
    "save_lossplots",
    "save_metaplots",
    "schedule",
    "select_and_group",
    "serialize_config",
    "slope_stats",
    "trainability",
    "write_curve",
]
