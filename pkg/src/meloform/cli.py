"""Command-line entry point.

Every stage subcommand works inside one run directory (``--out``) and
records its inputs and outputs in ``manifest.json`` there; ``pipeline``
runs all of them.  ``generate`` also works standalone from a checkpoint
and a seed file.

Exit codes: 0 on success, 2 for invalid input or configuration, 3 when a
run aborts (for example a non-finite loss).
"""

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .corpus import SeedSet
from .errors import (
    BadRatios,
    CorpusError,
    ExperimentError,
    KernError,
    MeloformError,
    UnknownSeedToken,
)
from .experiment.pipeline import STAGES, Pipeline
from .experiment.presets import VARIANT_ORDER, Preset, get_preset
from .generator import GenerationConfig, generate_batch, write_generation
from .trainer import TrainConfig, load_model

log = logging.getLogger("meloform")

VALIDATION_ERRORS = (ValueError, KeyError, FileNotFoundError, KernError, CorpusError,
                     ExperimentError, UnknownSeedToken, BadRatios)


def apply_overrides(preset: Preset, overrides: dict) -> Preset:
    """Overlay a JSON override document on a preset.

    Recognized keys: ``corpus_cap``, ``seeds_per_split``, ``prefix_len``,
    ``ablations``, ``models`` and ``training`` (``{variant: {field: value}}``)
    and ``generation`` (``{field: value}``).
    """
    known = {"corpus_cap", "seeds_per_split", "prefix_len", "ablations", "models", "training", "generation"}
    unknown = set(overrides) - known
    if unknown:
        raise ValueError(f"unknown override keys: {sorted(unknown)}")
    models = dict(preset.models)
    for variant, fields in overrides.get("models", {}).items():
        if variant not in models:
            raise ValueError(f"unknown model variant {variant!r}")
        models[variant] = type(models[variant]).from_dict({**models[variant].to_dict(), **fields})
    training = dict(preset.training)
    for variant, fields in overrides.get("training", {}).items():
        if variant not in training:
            raise ValueError(f"unknown model variant {variant!r}")
        training[variant] = TrainConfig.from_dict({**training[variant].to_dict(), **fields})
    generation = preset.generation
    if "generation" in overrides:
        generation = dataclasses.replace(generation, **overrides["generation"])
    simple = {k: overrides[k] for k in ("corpus_cap", "prefix_len") if k in overrides}
    for k in ("seeds_per_split", "ablations"):
        if k in overrides:
            simple[k] = tuple(overrides[k])
    return dataclasses.replace(preset, models=models, training=training, generation=generation, **simple)


def _common(p: argparse.ArgumentParser):
    p.add_argument("--preset", default="desk", choices=("desk", "paper"))
    p.add_argument("--config", type=Path, help="JSON file with preset overrides")
    p.add_argument("--seed", type=int, default=1, help="master seed")
    p.add_argument("--out", type=Path, required=True, help="run directory")
    p.add_argument("--corpus", type=Path, help="directory of .krn files (required for --preset paper)")
    p.add_argument("--variant", action="append", choices=VARIANT_ORDER,
                   help="model variant(s) to include; repeatable, default all")
    p.add_argument("--ablations", help="comma-separated ablation ids, default from the preset")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="meloform", description="symbolic melody modelling experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in (*STAGES, "pipeline"):
        p = sub.add_parser(stage, help=f"run the {stage} stage" if stage != "pipeline" else "run every stage")
        _common(p)
        if stage == "pipeline":
            p.add_argument("--skip-ablate", action="store_true")
        if stage == "generate":
            p.add_argument("--ckpt", type=Path, help="standalone mode: checkpoint to sample from")
            p.add_argument("--seeds", type=Path, help="standalone mode: seed file (split, id, tokens)")
            p.add_argument("--tau", type=float, help="sampling temperature")
            p.add_argument("--n", type=int, help="number of seeds to use (default all)")
            p.add_argument("--max-steps", type=int)
    return parser


def _preset(args) -> Preset:
    preset = get_preset(args.preset)
    if args.config is not None:
        preset = apply_overrides(preset, json.loads(args.config.read_text(encoding="utf-8")))
    return preset


def _standalone_generate(args, preset: Preset) -> dict:
    if args.ckpt is None or args.seeds is None:
        raise ValueError("standalone generation needs both --ckpt and --seeds")
    params, cfg, vocab, _ = load_model(args.ckpt)
    seeds = SeedSet.read(args.seeds)
    if args.n is not None:
        if not 0 < args.n <= len(seeds):
            raise ValueError(f"--n must be in 1..{len(seeds)}")
        seeds = SeedSet(seeds.seeds[: args.n])
    gcfg = preset.generation
    changes = {"seed": args.seed}
    if args.tau is not None:
        changes["temperature"] = args.tau
    if args.max_steps is not None:
        changes["max_steps"] = args.max_steps
    gcfg = dataclasses.replace(gcfg, **changes)
    if gcfg.temperature <= 0:
        raise ValueError("temperature must be positive")
    melodies = generate_batch(params, cfg, vocab, [s.tokens for s in seeds.seeds], gcfg)
    write_generation(melodies, seeds, gcfg, args.out, extra={"checkpoint": str(args.ckpt)})
    return {"generate": "ran", "melodies": len(melodies)}


def run(argv=None) -> dict:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    preset = _preset(args)
    if args.command == "generate" and (args.ckpt is not None or args.seeds is not None):
        return _standalone_generate(args, preset)
    if args.command == "generate" and (args.tau is not None or args.max_steps is not None):
        fields = {"generation": {k: v for k, v in (("temperature", args.tau), ("max_steps", args.max_steps))
                                 if v is not None}}
        preset = apply_overrides(preset, fields)
    ablations = args.ablations.split(",") if args.ablations else None
    pipe = Pipeline(args.out, preset, args.seed, args.corpus, args.variant or VARIANT_ORDER, ablations)
    if args.command == "pipeline":
        stages = [s for s in STAGES if not (args.skip_ablate and s == "ablate")]
    else:
        stages = [args.command]
    pipe.save_manifest()
    return {s: pipe.run_stage(s) for s in stages}


def main(argv=None) -> int:
    try:
        result = run(argv)
    except SystemExit as exc:  # argparse
        return int(exc.code or 0)
    except VALIDATION_ERRORS as exc:
        print(f"meloform: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (MeloformError, FloatingPointError, MemoryError) as exc:
        print(f"meloform: aborted: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    print(json.dumps(result, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
