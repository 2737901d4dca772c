"""Plot-ready and table-shaped CSV reports."""

import csv
import io
from pathlib import Path
from typing import Optional

from ..metrics import GLOBAL_METRICS, LOCAL_METRICS, METRIC_NAMES, summary_csv
from .ablation import DESCRIPTIONS

MODEL_LABELS = {"lstm": "LSTM", "transformer": "Transformer", "hybrid": "Hybrid"}


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def _write(path: Path, rows) -> Path:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def metric_table(summaries: dict, metrics=METRIC_NAMES, aggregate: str = "mean") -> list:
    """Rows ``metric, <model>...`` of one aggregate; columns follow ``summaries`` order."""
    models = list(summaries)
    rows = [["metric", *(MODEL_LABELS.get(m, m) for m in models)]]
    for name in metrics:
        rows.append([name, *(_fmt(summaries[m][name][aggregate]) for m in models)])
    return rows


def emit_report(summaries: dict, train_logs: dict, out_dir, evaluations: Optional[dict] = None,
                param_counts: Optional[dict] = None, ablations: Optional[dict] = None) -> list:
    """Write the report CSVs and return their paths.

    ``summaries`` maps model name to :func:`metrics.summarize` output;
    ``evaluations`` maps model name to ``{"test_loss", "test_acc"}``;
    ``param_counts`` maps model name to ``{layer: (instantiated, formula)}``;
    ``ablations`` maps variant id to ``{"lambda", "delta", "params", "test_loss",
    "test_acc", "summary"}``.
    """
    if not summaries:
        raise ValueError("report needs at least one summary")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [
        _write(out / "table_metrics.csv", metric_table(summaries)),
        _write(out / "table_local.csv", metric_table(summaries, LOCAL_METRICS)),
        _write(out / "table_global.csv", metric_table(summaries, GLOBAL_METRICS)),
    ]
    for model, summary in summaries.items():
        p = out / f"summary_{model}.csv"
        p.write_text(summary_csv(summary), encoding="utf-8")
        written.append(p)

    evaluations = evaluations or {}
    rows = [["model", "epochs", "best_epoch", "best_val_loss", "test_loss", "test_acc", "stop_reason"]]
    for model, log in train_logs.items():
        best = next((r for r in log.records if r.epoch == log.best_epoch), None)
        ev = evaluations.get(model, {})
        rows.append([model, len(log.records), log.best_epoch, _fmt(best.val_loss if best else None),
                     _fmt(ev.get("test_loss")), _fmt(ev.get("test_acc")), log.stop_reason])
    written.append(_write(out / "training.csv", rows))

    if param_counts:
        rows = [["model", "layer", "instantiated", "formula", "difference"]]
        for model, layers in param_counts.items():
            total_i = total_f = 0
            for layer, (inst, formula) in layers.items():
                rows.append([model, layer, inst, formula, inst - formula])
                total_i += inst
                total_f += formula
            rows.append([model, "total", total_i, total_f, total_i - total_f])
        written.append(_write(out / "param_counts.csv", rows))

    if ablations:
        base_acc = ablations.get("Base", {}).get("test_acc")
        rows = [["variant", "description", "delta", "params", "test_loss", "test_acc",
                 "test_acc_vs_base", *METRIC_NAMES]]
        for vid, res in ablations.items():
            delta = ";".join(f"{k}={v}" for k, v in sorted(res["delta"].items()))
            diff = None if base_acc is None else res["test_acc"] - base_acc
            rows.append([vid, DESCRIPTIONS.get(vid, ""), delta, res["params"], _fmt(res["test_loss"]),
                         _fmt(res["test_acc"]), _fmt(diff),
                         *(_fmt(res["summary"][m]["mean"]) for m in METRIC_NAMES)])
        written.append(_write(out / "ablation.csv", rows))
        written.extend(_l2_figures(ablations, out))
    return written


def _l2_figures(ablations: dict, out: Path) -> list:
    sweep = sorted(((res["lambda"], vid) for vid, res in ablations.items()
                    if vid.startswith("D1")), key=lambda t: t[0])
    if not sweep:
        return []
    acc = [["lambda", "variant", "test_accuracy", "test_loss"]]
    local = [["lambda", "variant", *LOCAL_METRICS]]
    glob = [["lambda", "variant", *GLOBAL_METRICS]]
    for lam, vid in sweep:
        res = ablations[vid]
        acc.append([_fmt(lam), vid, _fmt(res["test_acc"]), _fmt(res["test_loss"])])
        local.append([_fmt(lam), vid, *(_fmt(res["summary"][m]["mean"]) for m in LOCAL_METRICS)])
        glob.append([_fmt(lam), vid, *(_fmt(res["summary"][m]["mean"]) for m in GLOBAL_METRICS)])
    return [_write(out / "fig_l2_accuracy.csv", acc), _write(out / "fig_l2_local.csv", local),
            _write(out / "fig_l2_global.csv", glob)]
