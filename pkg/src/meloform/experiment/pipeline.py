"""Stage-by-stage experiment orchestration inside one run directory.

Layout of a run directory::

    manifest.json                 run identity plus per-stage input/output hashes
    preprocess/                   datasets, vocabulary, split, seeds, reference
    train/<variant>/              checkpoints, logs, test evaluation, parameter counts
    generate/<variant>/           one token file per melody plus manifest.json
    evaluate/<variant>/           per-melody metrics.csv and summary.csv
    ablate/<id>/                  the same three steps for each ablation variant
    report/                       table, summary and figure CSVs

A stage is skipped when its recorded input hash (configuration plus the
output hashes of the stages it reads) is unchanged and every recorded
output still hashes to the recorded value.  A recorded output whose bytes
changed raises :class:`HashMismatch`.  ``timing.json`` files hold wall-clock
times and are not hashed.
"""

import hashlib
import json
import logging
import shutil
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from ..corpus import (
    SeedSet,
    Vocabulary,
    build_vocabulary,
    encode_score,
    extract_seeds,
    join_songs,
    known_sequences,
    make_windows,
    read_dataset_file,
    split_dataset,
    write_dataset_file,
)
from ..errors import EmptyCorpus, ExperimentError, HashMismatch, MissingArtifact
from ..generator import generate_batch, read_generation, sanitize, write_generation
from ..kern import load_directory
from ..metrics import ReferenceDistribution, build_reference, evaluate_melodies, read_summary_csv
from ..models import build_model, expected_param_counts, layer_param_counts
from ..trainer import TrainLog, evaluate, load_model, train
from .ablation import ablation_config, ablation_delta
from .presets import VARIANT_ORDER, Preset
from .report import emit_report

STAGES = ("preprocess", "train", "generate", "evaluate", "ablate", "report")
DEPENDS = {
    "preprocess": (),
    "train": ("preprocess",),
    "generate": ("preprocess", "train"),
    "evaluate": ("preprocess", "generate"),
    "ablate": ("preprocess", "train", "generate", "evaluate"),
    "report": ("preprocess", "train", "evaluate"),
}
UNHASHED = {"timing.json"}

log = logging.getLogger("meloform.pipeline")


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    return sha256_bytes(Path(path).read_bytes())


def hash_tree(root: Path, base: Path) -> dict:
    out = {}
    for p in sorted(root.rglob("*")):
        if p.is_file() and p.name not in UNHASHED and not p.name.endswith(".tmp"):
            out[p.relative_to(base).as_posix()] = sha256_file(p)
    return out


def _json_hash(obj) -> str:
    return sha256_bytes(json.dumps(obj, sort_keys=True).encode("utf-8"))


def _dump(path: Path, obj):
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


@dataclass
class RunManifest:
    run_id: str
    preset: str
    master_seed: int
    config_hash: str
    corpus: str
    dataset_hash: str = ""
    seed_set_hash: str = ""
    stages: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


class Pipeline:
    def __init__(self, run_dir, preset: Preset, seed: int = 1, corpus=None,
                 variants: Sequence[str] = VARIANT_ORDER, ablations: Optional[Sequence[str]] = None):
        self.run_dir = Path(run_dir)
        self.preset = preset
        self.seed = int(seed)
        self.corpus = Path(corpus) if corpus is not None else None
        self.variants = tuple(v for v in VARIANT_ORDER if v in variants)
        self.ablations = tuple(ablations) if ablations is not None else tuple(preset.ablations)
        for vid in self.ablations:
            ablation_delta(vid, preset.models["hybrid"])  # validates ids early
        corpus_tag = "bundled:desk_corpus" if self.corpus is None else self.corpus.name
        config = {"preset": preset.to_dict(), "seed": self.seed, "variants": list(self.variants),
                  "ablations": list(self.ablations), "corpus": corpus_tag}
        self.config_hash = _json_hash(config)
        path = self.run_dir / "manifest.json"
        if path.exists():
            self.manifest = RunManifest.from_json(path.read_text(encoding="utf-8"))
            if self.manifest.config_hash != self.config_hash:
                raise ExperimentError(f"{self.run_dir} holds a run with a different configuration")
        else:
            self.manifest = RunManifest(f"{preset.name}-s{self.seed}-{self.config_hash[:12]}",
                                        preset.name, self.seed, self.config_hash, corpus_tag)
        self._data = None

    # bookkeeping ----------------------------------------------------------------
    def save_manifest(self):
        self.run_dir.mkdir(parents=True, exist_ok=True)
        (self.run_dir / "manifest.json").write_text(self.manifest.to_json(), encoding="utf-8")

    def verify_stage(self, name: str):
        rec = self.manifest.stages.get(name)
        if rec is None:
            raise MissingArtifact(f"stage {name!r} has not been run in {self.run_dir}")
        for rel, digest in rec["outputs"].items():
            p = self.run_dir / rel
            if not p.exists():
                raise MissingArtifact(f"{rel} is missing; rerun stage {name!r}")
            if sha256_file(p) != digest:
                raise HashMismatch(f"{rel} does not match the hash recorded by stage {name!r}")

    def _inputs_hash(self, name: str) -> str:
        upstream = {up: self.manifest.stages[up]["outputs"] for up in DEPENDS[name]}
        if name == "report" and "ablate" in self.manifest.stages:
            upstream["ablate"] = self.manifest.stages["ablate"]["outputs"]
        return _json_hash({"stage": name, "config": self.config_hash, "upstream": upstream})

    def run_stage(self, name: str) -> str:
        """Run one stage unless it is current; returns ``"ran"`` or ``"skipped"``."""
        if name not in STAGES:
            raise ExperimentError(f"unknown stage {name!r}")
        for up in DEPENDS[name]:
            self.verify_stage(up)
        if name == "report" and "ablate" in self.manifest.stages:
            self.verify_stage("ablate")
        inputs = self._inputs_hash(name)
        rec = self.manifest.stages.get(name)
        if rec is not None and rec["inputs"] == inputs:
            try:
                self.verify_stage(name)
                return "skipped"
            except MissingArtifact:
                pass
        stage_dir = self.run_dir / name
        if stage_dir.exists():
            shutil.rmtree(stage_dir)
        stage_dir.mkdir(parents=True)
        t0 = time.perf_counter()
        getattr(self, f"_stage_{name}")(stage_dir)
        log.info("stage %s finished in %.1f s", name, time.perf_counter() - t0)
        self.manifest.stages[name] = {"inputs": inputs, "outputs": hash_tree(stage_dir, self.run_dir)}
        self.save_manifest()
        return "ran"

    def run(self, stages: Sequence[str] = STAGES) -> dict:
        self.save_manifest()
        return {s: self.run_stage(s) for s in stages}

    # data ------------------------------------------------------------------------
    @property
    def pre(self) -> Path:
        return self.run_dir / "preprocess"

    def data(self):
        if self._data is None:
            vocab = Vocabulary.from_json((self.pre / "vocab.json").read_text(encoding="utf-8"))
            windows = {}
            for split in ("train", "val", "test"):
                songs = read_dataset_file(self.pre / f"{split}_dataset")
                windows[split] = make_windows(join_songs(songs), vocab)
            self._data = (vocab, windows)
        return self._data

    # stages -----------------------------------------------------------------------
    def _stage_preprocess(self, d: Path):
        corpus = self.corpus
        if corpus is None:
            if self.preset.name != "desk":
                raise MissingArtifact(f"preset {self.preset.name!r} needs a corpus directory")
            from .presets import desk_corpus_path
            corpus = desk_corpus_path()
        if not corpus.is_dir():
            raise MissingArtifact(f"corpus directory {corpus} does not exist")
        scores, report = load_directory(corpus, limit=self.preset.corpus_cap)
        if not scores:
            raise EmptyCorpus(f"no usable songs under {corpus}")
        (d / "parse_report.json").write_text(report.to_json(), encoding="utf-8")
        encoded = {s.source_id: encode_score(s) for s in scores}
        split = split_dataset(sorted(encoded), seed=self.seed)
        (d / "split.json").write_text(split.to_json(), encoding="utf-8")
        train_seqs = [encoded[i] for i in split.train]
        vocab = build_vocabulary(train_seqs)
        (d / "vocab.json").write_text(vocab.to_json(), encoding="utf-8")
        dropped = {}
        for name, ids in (("train", split.train), ("val", split.val), ("test", split.test)):
            seqs = [encoded[i] for i in ids]
            kept, gone = known_sequences(seqs, vocab)
            dropped[name] = [ids[i] for i in gone]
            write_dataset_file(kept, d / f"{name}_dataset")
        seeds = extract_seeds(split, encoded, self.preset.seeds_per_split, self.preset.prefix_len,
                              seed=self.seed, vocab=vocab)
        seeds.write(d / "seeds.tsv")
        ref = build_reference(train_seqs)
        (d / "reference.json").write_text(ref.to_json(), encoding="utf-8")
        _dump(d / "summary.json", {
            "songs": len(encoded), "vocab_size": len(vocab),
            "split_sizes": {k: len(getattr(split, k)) for k in ("train", "val", "test")},
            "dropped_unknown_symbols": dropped, "seed_counts": seeds.counts(),
        })
        self.manifest.dataset_hash = _json_hash([sha256_file(d / f"{s}_dataset")
                                                 for s in ("train", "val", "test")])
        self.manifest.seed_set_hash = sha256_file(d / "seeds.tsv")
        self._data = None

    def _train_one(self, cfg, tcfg, d: Path) -> dict:
        vocab, w = self.data()
        params = build_model(cfg, self.seed)
        params, log = train(params, cfg, w["train"], w["val"], tcfg, run_dir=d, vocab=vocab)
        test_loss, test_acc = evaluate(params, cfg, w["test"])
        counts = layer_param_counts(params)
        formula = expected_param_counts(cfg)
        result = {"test_loss": test_loss, "test_acc": test_acc, "params": sum(counts.values()),
                  "param_counts": {k: [counts[k], formula.get(k, 0)] for k in counts}}
        (d / "model_config.json").write_text(cfg.to_json(), encoding="utf-8")
        _dump(d / "test_eval.json", result)
        return result

    def _stage_train(self, d: Path):
        vocab, _ = self.data()
        for v in self.variants:
            self._train_one(self.preset.model_config(v, len(vocab)),
                            self.preset.train_config(v, self.seed), d / v)

    def _generate_one(self, ckpt: Path, d: Path, label: str):
        seeds = SeedSet.read(self.pre / "seeds.tsv")
        params, cfg, vocab, _ = load_model(ckpt)
        gcfg = self._gen_config()
        melodies = generate_batch(params, cfg, vocab, [s.tokens for s in seeds.seeds], gcfg)
        write_generation(melodies, seeds, gcfg, d, extra={
            "model": label, "seed_set_sha256": sha256_file(self.pre / "seeds.tsv"),
            "checkpoint_sha256": sha256_file(ckpt)})

    def _gen_config(self):
        from dataclasses import replace
        return replace(self.preset.generation, seed=self.seed)

    def _stage_generate(self, d: Path):
        for v in self.variants:
            self._generate_one(self.run_dir / "train" / v / "best.ckpt", d / v, v)

    def _evaluate_one(self, gen_dir: Path, d: Path):
        ref = ReferenceDistribution.from_json((self.pre / "reference.json").read_text(encoding="utf-8"))
        tokens = [sanitize(t) for t in read_generation(gen_dir)]
        evaluate_melodies(tokens, ref, d)

    def _stage_evaluate(self, d: Path):
        for v in self.variants:
            self._evaluate_one(self.run_dir / "generate" / v, d / v)

    def _stage_ablate(self, d: Path):
        vocab, _ = self.data()
        base = self.preset.model_config("hybrid", len(vocab))
        tcfg = self.preset.train_config("hybrid", self.seed)
        for vid in self.ablations:
            cfg = ablation_config(vid, base)
            vd = d / vid
            vd.mkdir(parents=True)
            delta = ablation_delta(vid, base)
            if cfg == base and "hybrid" in self.variants:
                res = json.loads((self.run_dir / "train" / "hybrid" / "test_eval.json").read_text())
                shutil.copyfile(self.run_dir / "evaluate" / "hybrid" / "summary.csv", vd / "summary.csv")
                reused = "hybrid"
            else:
                res = self._train_one(cfg, tcfg, vd / "train")
                self._generate_one(vd / "train" / "best.ckpt", vd / "generate", vid)
                self._evaluate_one(vd / "generate", vd / "evaluate")
                shutil.copyfile(vd / "evaluate" / "summary.csv", vd / "summary.csv")
                reused = None
            _dump(vd / "result.json", {"id": vid, "lambda": cfg.l2_lambda, "delta": delta,
                                       "params": res["params"], "test_loss": res["test_loss"],
                                       "test_acc": res["test_acc"], "reused_from": reused})

    def _stage_report(self, d: Path):
        summaries, logs, evals, counts = {}, {}, {}, {}
        for v in self.variants:
            summaries[v] = read_summary_csv(self.run_dir / "evaluate" / v / "summary.csv")
            tdir = self.run_dir / "train" / v
            logs[v] = TrainLog.from_dict(json.loads((tdir / "train_log.json").read_text()))
            res = json.loads((tdir / "test_eval.json").read_text())
            evals[v] = res
            counts[v] = {k: tuple(x) for k, x in res["param_counts"].items()}
        ablations = None
        if "ablate" in self.manifest.stages:
            ablations = {}
            for vid in self.ablations:
                vd = self.run_dir / "ablate" / vid
                res = json.loads((vd / "result.json").read_text())
                res["summary"] = read_summary_csv(vd / "summary.csv")
                ablations[vid] = res
        emit_report(summaries, logs, d, evals, counts, ablations)


def run_pipeline(run_dir, preset: Preset, seed: int = 1, stages: Sequence[str] = STAGES,
                 corpus=None, variants: Sequence[str] = VARIANT_ORDER,
                 ablations: Optional[Sequence[str]] = None) -> dict:
    """Run ``stages`` in order inside ``run_dir``; returns ``{stage: "ran" | "skipped"}``."""
    pipe = Pipeline(run_dir, preset, seed, corpus, variants, ablations)
    return pipe.run(stages)
