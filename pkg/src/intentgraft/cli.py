"""Command-line pipeline: fixture, ingest, transform, stats, train, predict,
eval, analyze, icl-eval.

Every run takes an optional JSON config (``--config``); explicit flags
override file values, and the merged effective config lands in the run
manifest together with input/output checksums and wall time. Outputs are
written atomically. Exit codes: 0 success, 1 I/O failure, 2 validation
failure, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

import intentgraft
from intentgraft.analysis import (
    cooccurrence,
    cooccurrence_distance,
    dbscan,
    embed_2d,
    family_recovery,
)
from intentgraft.corpus import (
    Corpus,
    FixtureSpec,
    corpus_stats,
    generate_fixture,
    load_corpus,
    save_corpus,
)
from intentgraft.encoder import EncoderConfig
from intentgraft.errors import (
    DivergenceError,
    IntentgraftError,
    ParseError,
    TransportError,
    ValidationError,
)
from intentgraft.fileio import atomic_write_text, read_json, sha256_file, write_json
from intentgraft.icl import (
    GenerationParams,
    HttpChatTransport,
    MockTransport,
    run_icl_eval,
    sample_eval_subset,
)
from intentgraft.labels import FamilyRegistry
from intentgraft.losses import LossConfig
from intentgraft.metrics import MetricAccumulator
from intentgraft.model import TrainConfig, load_model, predict_batch, save_model, train
from intentgraft.plots import cluster_scatter, cooccurrence_heatmap, training_curves
from intentgraft.transforms import EntitySplit, TransformPlan, VersionTarget, run_transform


def _fail(msg: str, code: int) -> int:
    print(f"intentgraft: error: {msg}", file=sys.stderr)
    return code


def _merge_config(args: argparse.Namespace, keys: dict[str, object]) -> dict:
    """File config first, explicit flags on top; unknown file keys rejected."""
    cfg = dict(keys)
    if getattr(args, "config", None):
        file_cfg = read_json(args.config)
        unknown = set(file_cfg) - set(keys)
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in keys:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _require(cfg: dict, *names: str) -> None:
    missing = [n for n in names if cfg.get(n) is None]
    if missing:
        raise ValidationError(f"missing required settings: {missing}")


def _write_manifest(
    out_dir: Path, command: str, cfg: dict, inputs: list[Path], outputs: list[Path], t0: float
) -> None:
    manifest = {
        "tool_version": intentgraft.__version__,
        "command": command,
        "config": {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(cfg.items())},
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {p.name: sha256_file(p) for p in outputs},
        "wall_time_s": round(time.monotonic() - t0, 3),
    }
    write_json(out_dir / "manifest.json", manifest)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_fixture(args: argparse.Namespace) -> int:
    t0 = time.monotonic()
    cfg = _merge_config(
        args,
        {
            "families": 9,
            "versioned": 6,
            "splits": 3,
            "composite_pairs": 3,
            "records_per_intent": 417,
            "vocab_per_family": 24,
            "seed": 0,
            "out_dir": "fixture",
        },
    )
    spec = FixtureSpec(
        family_count=cfg["families"],
        versioned_count=cfg["versioned"],
        entity_split_count=cfg["splits"],
        composite_pairs=cfg["composite_pairs"],
        records_per_intent=cfg["records_per_intent"],
        vocab_per_family=cfg["vocab_per_family"],
        seed=cfg["seed"],
    )
    train_c, valid_c, test_c = generate_fixture(spec)
    out = Path(cfg["out_dir"])
    outputs = []
    for c, stem in ((train_c, "train"), (valid_c, "valid"), (test_c, "test")):
        path = out / f"{stem}.jsonl"
        save_corpus(c, path)
        outputs.append(path)
    plan = TransformPlan(
        version_targets=tuple(VersionTarget(intent=i) for i in spec.versioned_intents),
        entity_splits=tuple(
            EntitySplit(intent=i, entity_type=FixtureSpec.pivot_entity_type(i))
            for i in spec.split_intents
        ),
        composite_split=spec.composite_pairs > 0,
        seed=cfg["seed"],
    )
    plan_path = out / "plan.json"
    write_json(plan_path, plan.to_json())
    outputs.append(plan_path)
    _write_manifest(out, "fixture", cfg, [], outputs, t0)
    print(f"fixture: {len(train_c)} train / {len(valid_c)} valid / {len(test_c)} test records")
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    t0 = time.monotonic()
    cfg = _merge_config(args, {"input": None, "split": None, "seed": None, "out_dir": "ingested"})
    _require(cfg, "input", "split")
    c = load_corpus(cfg["input"], cfg["split"])
    out = Path(cfg["out_dir"])
    path = out / f"{cfg['split']}.jsonl"
    save_corpus(c, path)
    stats_path = out / "stats.json"
    write_json(stats_path, corpus_stats(c).to_json())
    _write_manifest(out, "ingest", cfg, [Path(cfg["input"])], [path, stats_path], t0)
    print(f"ingest: {len(c)} records, {len(c.inventory)} labels")
    return 0


def cmd_transform(args: argparse.Namespace) -> int:
    t0 = time.monotonic()
    cfg = _merge_config(
        args, {"train": None, "valid": None, "test": None, "plan": None, "seed": None, "out_dir": "transformed"}
    )
    _require(cfg, "train", "valid", "test", "plan")
    train_c = load_corpus(cfg["train"], "train")
    valid_c = load_corpus(cfg["valid"], "valid")
    test_c = load_corpus(cfg["test"], "test")
    plan = TransformPlan.from_json(read_json(cfg["plan"]))
    if cfg.get("seed") is not None:
        plan = dataclasses.replace(plan, seed=int(cfg["seed"]))
    result = run_transform(train_c, valid_c, test_c, plan)
    out = Path(cfg["out_dir"])
    outputs = []
    for c, stem in ((result.train, "train"), (result.valid, "valid"), (result.test, "test")):
        path = out / f"{stem}.jsonl"
        save_corpus(c, path)
        outputs.append(path)
    reg_path = out / "registry.json"
    write_json(reg_path, result.registry.to_json())
    stats_path = out / "stats.json"
    write_json(stats_path, result.stats.to_json())
    outputs += [reg_path, stats_path]
    inputs = [Path(cfg[k]) for k in ("train", "valid", "test", "plan")]
    _write_manifest(out, "transform", cfg, inputs, outputs, t0)
    s = result.stats
    print(
        f"transform: VC-N={s.vc_n} VC-R={s.vc_r:.1f}% MF-N={s.mf_n} MF-R={s.mf_r:.1f}% "
        f"Total={s.total_labels}"
    )
    return 0


def cmd_stats(args: argparse.Namespace) -> int:
    t0 = time.monotonic()
    cfg = _merge_config(args, {"corpus": None, "split": "train", "seed": None, "out_dir": "stats"})
    _require(cfg, "corpus")
    c = load_corpus(cfg["corpus"], cfg["split"])
    out = Path(cfg["out_dir"])
    path = out / "stats.json"
    write_json(path, corpus_stats(c).to_json())
    _write_manifest(out, "stats", cfg, [Path(cfg["corpus"])], [path], t0)
    print(json.dumps(corpus_stats(c).to_json(), indent=2)[:2000])
    return 0


def _train_one(
    train_c: Corpus,
    valid_c: Corpus,
    encoder_cfg: EncoderConfig,
    loss_cfg: LossConfig,
    train_cfg: TrainConfig,
    out: Path,
) -> list[Path]:
    params, history = train(train_c, valid_c, encoder_cfg, loss_cfg, train_cfg)
    json_path, bin_path = save_model(params, out / "model", loss_cfg, train_cfg)
    hist_path = out / "history.json"
    write_json(hist_path, history.to_json())
    png_path = out / "history.png"
    training_curves(history, png_path)
    return [json_path, bin_path, hist_path, png_path]


def _eval_model(stem: Path, corpus: Corpus) -> dict:
    params = load_model(stem)
    preds = predict_batch(params, [r.text for r in corpus.records])
    acc = MetricAccumulator.for_inventory(params.inventory)
    for pred, rec in zip(preds, corpus.records):
        acc.accumulate(pred, set(rec.labels))
    return acc.finalize().to_json()


def cmd_train(args: argparse.Namespace) -> int:
    t0 = time.monotonic()
    cfg = _merge_config(
        args,
        {
            "train": None,
            "valid": None,
            "eval_corpus": None,
            "encoder": {},
            "loss": {},
            "train_cfg": {},
            "seed": None,
            "seeds": None,
            "out_dir": "model",
        },
    )
    _require(cfg, "train", "valid")
    train_c = load_corpus(cfg["train"], "train")
    valid_c = load_corpus(cfg["valid"], "valid")
    encoder_cfg = EncoderConfig(**{**EncoderConfig().to_json(), **cfg["encoder"]})
    loss_cfg = LossConfig(**{**LossConfig().to_json(), **cfg["loss"]})
    base_train = {**TrainConfig().to_json(), **cfg["train_cfg"]}
    out = Path(cfg["out_dir"])
    inputs = [Path(cfg["train"]), Path(cfg["valid"])]

    seeds: list[int] | None = None
    if cfg.get("seeds"):
        raw = cfg["seeds"]
        seeds = [int(x) for x in (raw.split(",") if isinstance(raw, str) else raw)]
    if seeds is None:
        seed = int(cfg["seed"]) if cfg.get("seed") is not None else int(base_train.get("seed", 0))
        train_cfg = TrainConfig(**{**base_train, "seed": seed})
        outputs = _train_one(train_c, valid_c, encoder_cfg, loss_cfg, train_cfg, out)
        _write_manifest(out, "train", cfg, inputs, outputs, t0)
        print(f"train: model written to {out}")
        return 0

    eval_path = cfg.get("eval_corpus") or cfg["valid"]
    eval_split = "valid" if eval_path == cfg["valid"] else "test"
    eval_c = load_corpus(eval_path, eval_split)
    rows = []
    outputs = []
    for seed in seeds:
        seed_dir = out / f"seed_{seed}"
        train_cfg = TrainConfig(**{**base_train, "seed": seed})
        outputs += _train_one(train_c, valid_c, encoder_cfg, loss_cfg, train_cfg, seed_dir)
        row = {"seed": seed, **_eval_model(seed_dir / "model", eval_c)}
        rows.append(row)
    median = {
        key: float(np.median([row[key] for row in rows]))
        for key in ("precision", "recall", "f1", "em")
    }
    report_path = out / "metrics_by_seed.json"
    write_json(report_path, {"seeds": seeds, "rows": rows, "median": median})
    outputs.append(report_path)
    if eval_path != cfg["valid"]:
        inputs.append(Path(eval_path))
    _write_manifest(out, "train", cfg, inputs, outputs, t0)
    print(f"train: {len(seeds)} seeds, median F1 {median['f1']:.2f}")
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    t0 = time.monotonic()
    cfg = _merge_config(args, {"model": None, "corpus": None, "split": "test", "seed": None, "out_dir": "predictions"})
    _require(cfg, "model", "corpus")
    params = load_model(Path(cfg["model"]))
    c = load_corpus(cfg["corpus"], cfg["split"])
    preds = predict_batch(params, [r.text for r in c.records])
    out = Path(cfg["out_dir"])
    path = out / "predictions.jsonl"
    lines = [
        json.dumps({"id": rec.id, "labels": sorted(pred)}, ensure_ascii=False)
        for rec, pred in zip(c.records, preds)
    ]
    atomic_write_text(path, "\n".join(lines) + "\n")
    inputs = [Path(cfg["corpus"]), Path(cfg["model"]).with_suffix(".json"), Path(cfg["model"]).with_suffix(".bin")]
    _write_manifest(out, "predict", cfg, inputs, [path], t0)
    print(f"predict: {len(preds)} records")
    return 0


def _load_predictions(path: str | Path) -> dict[str, set[str]]:
    preds: dict[str, set[str]] = {}
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"{path}:{line_no}: invalid JSON: {e.msg}") from e
            if "id" not in obj or "labels" not in obj:
                raise ParseError(f"{path}:{line_no}: prediction lines need 'id' and 'labels'")
            preds[str(obj["id"])] = set(obj["labels"])
    return preds


def cmd_eval(args: argparse.Namespace) -> int:
    t0 = time.monotonic()
    cfg = _merge_config(args, {"predictions": None, "gold": None, "split": "test", "seed": None, "out_dir": "evaluation"})
    _require(cfg, "predictions", "gold")
    gold_c = load_corpus(cfg["gold"], cfg["split"])
    preds = _load_predictions(cfg["predictions"])
    acc = MetricAccumulator.for_inventory(gold_c.inventory)
    for rec in gold_c.records:
        if rec.id not in preds:
            raise ValidationError(f"prediction file is missing record id {rec.id!r}")
        acc.accumulate(preds[rec.id], set(rec.labels))
    report = acc.finalize()
    out = Path(cfg["out_dir"])
    path = out / "metrics.json"
    write_json(
        path,
        {**report.to_json(), "per_label": [r.to_json() for r in acc.per_label_report()]},
    )
    _write_manifest(out, "eval", cfg, [Path(cfg["predictions"]), Path(cfg["gold"])], [path], t0)
    r = report.to_json()
    print(f"eval: P={r['precision']} R={r['recall']} F1={r['f1']} EM={r['em']}")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    t0 = time.monotonic()
    cfg = _merge_config(
        args,
        {
            "predictions": None,
            "corpus": None,
            "registry": None,
            "split": "test",
            "seed": None,
            "eps": 0.5,
            "min_pts": 2,
            "out_dir": "analysis",
        },
    )
    _require(cfg, "predictions", "corpus", "registry")
    gold_c = load_corpus(cfg["corpus"], cfg["split"])
    registry = FamilyRegistry.from_json(read_json(cfg["registry"]))
    preds_by_id = _load_predictions(cfg["predictions"])
    predictions = []
    for rec in gold_c.records:
        if rec.id not in preds_by_id:
            raise ValidationError(f"prediction file is missing record id {rec.id!r}")
        predictions.append(preds_by_id[rec.id])

    inventory = gold_c.inventory
    C = cooccurrence(predictions, inventory)
    D = cooccurrence_distance(C)
    assignment = dbscan(D, eps=float(cfg["eps"]), min_pts=int(cfg["min_pts"]))
    coords = embed_2d(D)
    report = family_recovery(assignment, inventory, registry)

    out = Path(cfg["out_dir"])
    cooc_path = out / "cooccurrence.csv"
    rows = ["row_label,col_label,count"]
    for i, a in enumerate(inventory):
        for j, b in enumerate(inventory):
            rows.append(f"{a},{b},{C[i, j]}")
    atomic_write_text(cooc_path, "\n".join(rows) + "\n")

    coords_path = out / "coords.csv"
    rows = ["label,x,y"]
    for i, lab in enumerate(inventory):
        rows.append(f"{lab},{coords[i, 0]:.12g},{coords[i, 1]:.12g}")
    atomic_write_text(coords_path, "\n".join(rows) + "\n")

    clusters_path = out / "clusters.json"
    write_json(
        clusters_path,
        {
            "eps": float(cfg["eps"]),
            "min_pts": int(cfg["min_pts"]),
            "assignment": {lab: int(assignment[i]) for i, lab in enumerate(inventory)},
        },
    )
    analysis_path = out / "analysis.json"
    write_json(analysis_path, {"family_recovery": report.to_json()})

    heatmap_path = out / "heatmap.png"
    cooccurrence_heatmap(C, inventory, heatmap_path)
    scatter_path = out / "clusters.png"
    cluster_scatter(coords, assignment, inventory, scatter_path)

    outputs = [cooc_path, coords_path, clusters_path, analysis_path, heatmap_path, scatter_path]
    inputs = [Path(cfg["predictions"]), Path(cfg["corpus"]), Path(cfg["registry"])]
    _write_manifest(out, "analyze", cfg, inputs, outputs, t0)
    print(f"analyze: family recovery {report.rate:.2f}")
    return 0


def cmd_icl_eval(args: argparse.Namespace) -> int:
    t0 = time.monotonic()
    cfg = _merge_config(
        args,
        {
            "train": None,
            "test": None,
            "n": 100,
            "seed": 0,
            "transport": "mock",
            "fixture_file": None,
            "url": None,
            "model": "gpt-3.5-turbo",
            "temperature": 0.0,
            "max_tokens": 64,
            "max_in_flight": 1,
            "out_dir": "icl",
        },
    )
    _require(cfg, "train", "test")
    train_c = load_corpus(cfg["train"], "train")
    test_c = load_corpus(cfg["test"], "test")
    n = min(int(cfg["n"]), len(test_c.records))
    subset = sample_eval_subset(test_c, n, int(cfg["seed"]))
    if cfg["transport"] == "mock":
        _require(cfg, "fixture_file")
        transport = MockTransport.from_fixture_file(cfg["fixture_file"])
    elif cfg["transport"] == "http":
        _require(cfg, "url")
        transport = HttpChatTransport(url=cfg["url"], model=cfg["model"])
    else:
        raise ValidationError(f"unknown transport {cfg['transport']!r}")
    params = GenerationParams(temperature=float(cfg["temperature"]), max_tokens=int(cfg["max_tokens"]))
    result = run_icl_eval(
        transport, train_c, subset, train_c.inventory, params, max_in_flight=int(cfg["max_in_flight"])
    )
    out = Path(cfg["out_dir"])
    metrics_path = out / "icl_metrics.json"
    write_json(metrics_path, {**result.report.to_json(), "failures": result.failures})
    transcript_path = out / "transcript.jsonl"
    atomic_write_text(
        transcript_path,
        "\n".join(json.dumps(e, ensure_ascii=False, sort_keys=True) for e in result.transcript) + "\n",
    )
    inputs = [Path(cfg["train"]), Path(cfg["test"])]
    if cfg.get("fixture_file"):
        inputs.append(Path(cfg["fixture_file"]))
    _write_manifest(out, "icl-eval", cfg, inputs, [metrics_path, transcript_path], t0)
    r = result.report.to_json()
    print(f"icl-eval: P={r['precision']} R={r['recall']} F1={r['f1']} EM={r['em']} failures={result.failures}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")
    p.add_argument("--seed", type=int, help="seed for the run's stochastic stages")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="intentgraft", description=__doc__)
    parser.add_argument("--version", action="version", version=intentgraft.__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fixture", help="generate a synthetic corpus and matching plan")
    _add_common(p)
    p.add_argument("--families", type=int)
    p.add_argument("--versioned", type=int)
    p.add_argument("--splits", type=int)
    p.add_argument("--composite-pairs", dest="composite_pairs", type=int)
    p.add_argument("--records-per-intent", dest="records_per_intent", type=int)
    p.add_argument("--vocab-per-family", dest="vocab_per_family", type=int)
    p.set_defaults(func=cmd_fixture)

    p = sub.add_parser("ingest", help="validate and normalize a corpus file")
    _add_common(p)
    p.add_argument("--input")
    p.add_argument("--split", choices=("train", "valid", "test"))
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("transform", help="apply a transformation plan")
    _add_common(p)
    p.add_argument("--train")
    p.add_argument("--valid")
    p.add_argument("--test")
    p.add_argument("--plan")
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("stats", help="corpus statistics")
    _add_common(p)
    p.add_argument("--corpus")
    p.add_argument("--split", choices=("train", "valid", "test"))
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train a classifier")
    _add_common(p)
    p.add_argument("--train")
    p.add_argument("--valid")
    p.add_argument("--eval-corpus", dest="eval_corpus")
    p.add_argument("--seeds", help="comma-separated seeds; reports per-seed metrics and the median")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict label sets for a corpus")
    _add_common(p)
    p.add_argument("--model", help="model path stem (without .json/.bin)")
    p.add_argument("--corpus")
    p.add_argument("--split", choices=("train", "valid", "test"))
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="score predictions against gold labels")
    _add_common(p)
    p.add_argument("--predictions")
    p.add_argument("--gold")
    p.add_argument("--split", choices=("train", "valid", "test"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("analyze", help="co-occurrence, clustering, family recovery")
    _add_common(p)
    p.add_argument("--predictions")
    p.add_argument("--corpus")
    p.add_argument("--registry")
    p.add_argument("--split", choices=("train", "valid", "test"))
    p.add_argument("--eps", type=float)
    p.add_argument("--min-pts", dest="min_pts", type=int)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("icl-eval", help="in-context-learning evaluation")
    _add_common(p)
    p.add_argument("--train")
    p.add_argument("--test")
    p.add_argument("--n", type=int)
    p.add_argument("--transport", choices=("mock", "http"))
    p.add_argument("--fixture-file", dest="fixture_file")
    p.add_argument("--url")
    p.add_argument("--model")
    p.add_argument("--max-in-flight", dest="max_in_flight", type=int)
    p.set_defaults(func=cmd_icl_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as e:
        return _fail(str(e), 3)
    except (ValidationError, ParseError) as e:
        return _fail(str(e), 2)
    except TransportError as e:
        return _fail(str(e), 1)
    except FileNotFoundError as e:
        return _fail(f"file not found: {e.filename}", 1)
    except OSError as e:
        return _fail(str(e), 1)
    except IntentgraftError as e:
        return _fail(str(e), 2)


if __name__ == "__main__":
    sys.exit(main())
