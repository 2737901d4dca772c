from .ablation import ABLATION_IDS, ablation_config, ablation_delta, config_diff
from .pipeline import STAGES, Pipeline, RunManifest, run_pipeline
from .presets import D1_LAMBDAS, VARIANT_ORDER, Preset, desk_preset, get_preset, paper_preset
from .report import emit_report, metric_table
