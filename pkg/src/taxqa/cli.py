"""Command-line entry points.

Subcommands: build, taxomps, eval, metrics, analyze, validate-dump. Options
resolve in three layers: built-in defaults, then a JSON config file given
with --config, then explicit flags. Every manifest and metrics file is
stamped with a digest of the resolved settings and the seeds in effect.

Exit codes: 0 success, 2 configuration error (bad flags, missing paths,
unusable config), 3 endpoint failure after retries, 4 data error (parse or
validation failures in inputs).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

from . import dumps as dumps_mod
from . import metrics as metrics_mod
from . import questgen, repranalysis
from .evalclient import (
    EndpointConfig,
    EndpointError,
    EvalError,
    load_eval_run,
    run_eval,
    save_eval_run,
)
from .metrics import MetricsError
from .questgen import QuestgenError
from .scene import SceneError, load_scene_graphs
from .taxonomy import TaxonomyError, load_taxonomy

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ENDPOINT = 3
EXIT_DATA = 4


class ConfigError(Exception):
    pass


def _require_file(path: str | None, what: str) -> Path:
    if not path:
        raise ConfigError(f"missing required {what}")
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{what} not found: {p}")
    return p


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    return doc


def _resolve(args: argparse.Namespace, config: dict, defaults: dict) -> dict:
    """defaults < config file < explicit flags; flags left at None defer."""
    settings = dict(defaults)
    for key in defaults:
        if key in config:
            settings[key] = config[key]
    for key in defaults:
        flag = getattr(args, key, None)
        if flag is not None:
            settings[key] = flag
    return settings


def _config_digest(settings: dict) -> str:
    blob = json.dumps(settings, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _write_json(path: Path, doc: dict) -> None:
    repranalysis.write_report_json(path, doc)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_build(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    settings = _resolve(
        args,
        config,
        {
            "taxonomy": None,
            "scenes": None,
            "out": None,
            "seed": 0,
            "quota": questgen.DEFAULT_SCENE_QUOTA,
            "jobs": 1,
            "attribute_classes": None,
        },
    )
    taxonomy_path = _require_file(settings["taxonomy"], "taxonomy file")
    scenes_path = _require_file(settings["scenes"], "scene graph file")
    if not settings["out"]:
        raise ConfigError("missing required output directory")
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)

    taxonomy = load_taxonomy(taxonomy_path)
    scenes = load_scene_graphs(scenes_path)
    attr_classes = None
    if settings["attribute_classes"]:
        attr_path = _require_file(settings["attribute_classes"], "attribute class file")
        attr_classes = json.loads(attr_path.read_text(encoding="utf-8"))
    instances, manifest = questgen.build_dataset(
        scenes,
        taxonomy,
        seed=int(settings["seed"]),
        quota=int(settings["quota"]),
        attribute_classes=attr_classes,
        jobs=int(settings["jobs"]),
    )
    questgen.write_dataset(out / "dataset.jsonl", instances)
    manifest["config_digest"] = _config_digest(settings)
    manifest["dataset_digest"] = questgen.dataset_digest(instances)
    _write_json(out / "dataset.manifest.json", manifest)
    print(f"wrote {len(instances)} instances to {out / 'dataset.jsonl'}")
    return EXIT_OK


def cmd_taxomps(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    settings = _resolve(args, config, {"taxonomy": None, "out": None, "seed": 0})
    taxonomy_path = _require_file(settings["taxonomy"], "taxonomy file")
    if not settings["out"]:
        raise ConfigError("missing required output directory")
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)

    taxonomy = load_taxonomy(taxonomy_path)
    instances = questgen.generate_taxomps(taxonomy, seed=int(settings["seed"]))
    questgen.write_dataset(out / "taxomps.jsonl", instances)
    manifest = {
        "seed": int(settings["seed"]),
        "n_pairs": len(instances),
        "n_questions": len(instances) * (1 + questgen.NEGATIVES_PER_QUESTION),
        "config_digest": _config_digest(settings),
        "dataset_digest": questgen.dataset_digest(instances),
    }
    _write_json(out / "taxomps.manifest.json", manifest)
    print(f"wrote {len(instances)} membership probes to {out / 'taxomps.jsonl'}")
    return EXIT_OK


def _metrics_outputs(out: Path, run, settings: dict) -> None:
    instance_set = run.instance_set()
    report = metrics_mod.metrics_report(instance_set)
    doc = {
        "run_id": run.run_id,
        "mode": run.mode,
        "model": run.model_name,
        "dataset_digest": run.dataset_digest,
        "config_digest": _config_digest(settings),
        "metrics": report.to_dict(),
        "per_depth": {str(k): v for k, v in metrics_mod.per_depth_accuracy(instance_set).items()},
    }
    _write_json(out / "metrics.json", doc)
    with (out / "per_hypernym.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["hypernym", "conditional_accuracy"])
        for hyper, acc in metrics_mod.per_hypernym_conditional(instance_set).items():
            writer.writerow([hyper, f"{acc:.10g}"])
    with (out / "per_pair.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["hyponym", "hypernym", "conditional_accuracy"])
        for (hypo, hyper), acc in metrics_mod.pair_conditional_accuracy(instance_set).items():
            writer.writerow([hypo, hyper, f"{acc:.10g}"])


def cmd_eval(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    settings = _resolve(
        args,
        config,
        {
            "dataset": None,
            "endpoint": None,
            "model": None,
            "out": None,
            "mode": "text",
            "max_in_flight": 4,
            "timeout": 60.0,
            "retries": 3,
            "top_k": 20,
            "system_prompt": None,
            "decision": "argmax",
            "decision_seed": 0,
            "run_id": "run",
            "api_key": None,
        },
    )
    dataset_path = _require_file(settings["dataset"], "dataset file")
    if not settings["endpoint"]:
        raise ConfigError("missing required endpoint URL")
    if not settings["model"]:
        raise ConfigError("missing required model name")
    if not settings["out"]:
        raise ConfigError("missing required output directory")
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)

    instances = questgen.read_dataset(dataset_path)
    try:
        cfg = EndpointConfig(
            base_url=settings["endpoint"],
            model_name=settings["model"],
            api_key=settings["api_key"],
            max_in_flight=int(settings["max_in_flight"]),
            timeout=float(settings["timeout"]),
            retries=int(settings["retries"]),
            logprob_top_k=int(settings["top_k"]),
            system_prompt=settings["system_prompt"],
            decision=settings["decision"],
            decision_seed=int(settings["decision_seed"]),
        )
    except EvalError as exc:
        raise ConfigError(str(exc)) from exc
    run = run_eval(
        instances,
        cfg,
        mode=settings["mode"],
        checkpoint_path=out / "checkpoint.jsonl",
        run_id=settings["run_id"],
    )
    save_eval_run(out / "run.json", run)
    stamp = dict(settings)
    stamp.pop("api_key", None)  # never persist credentials
    _metrics_outputs(out, run, stamp)
    print(f"scored {len(run.records)} questions; outputs in {out}")
    return EXIT_OK


def cmd_metrics(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    settings = _resolve(args, config, {"run": None, "out": None})
    run_path = _require_file(settings["run"], "run file")
    if not settings["out"]:
        raise ConfigError("missing required output directory")
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)
    run = load_eval_run(run_path)
    _metrics_outputs(out, run, settings)
    print(f"metrics written to {out / 'metrics.json'}")
    return EXIT_OK


_REPORTS = ("rsa", "delta", "odds", "separability", "visual")


def cmd_analyze(args: argparse.Namespace) -> int:
    config = _load_config(args.config)
    settings = _resolve(
        args,
        config,
        {
            "dumps": None,
            "taxonomy": None,
            "out": None,
            "run": None,
            "membership": None,
            "reports": "rsa,delta,odds,separability,visual",
            "seed": 0,
            "subsets": 100,
            "subset_size": 100,
            "ridge": None,
            "include_leaf_images": False,
        },
    )
    dumps_dir = _require_file(settings["dumps"], "dumps directory")
    taxonomy_path = _require_file(settings["taxonomy"], "taxonomy file")
    if not settings["out"]:
        raise ConfigError("missing required output directory")
    out = Path(settings["out"])
    out.mkdir(parents=True, exist_ok=True)

    wanted = [r.strip() for r in str(settings["reports"]).split(",") if r.strip()]
    unknown = [r for r in wanted if r not in _REPORTS]
    if unknown:
        raise ConfigError(f"unknown reports {unknown}; valid: {', '.join(_REPORTS)}")

    taxonomy = load_taxonomy(taxonomy_path)
    by_role = dumps_mod.load_dumps_by_role(dumps_dir)
    run = None
    if settings["run"]:
        run = load_eval_run(_require_file(settings["run"], "run file"))

    def need_two(role: str):
        found = by_role[role]
        if len(found) != 2:
            raise repranalysis.AnalysisError(
                f"report needs exactly two {role} dumps, found {len(found)}"
            )
        return found[0], found[1]

    written: list[str] = []
    for report in wanted:
        if report == "rsa":
            a, b = need_two("unembedding")
            repranalysis.hierarchy_rsa_report(
                a,
                b,
                taxonomy,
                subsets=int(settings["subsets"]),
                subset_size=int(settings["subset_size"]),
                seed=int(settings["seed"]),
                ridge=None if settings["ridge"] is None else float(settings["ridge"]),
                out_dir=out,
            )
            written.append("hierarchy_rsa.json")
        elif report == "delta":
            a, b = need_two("static")
            repranalysis.static_delta_report(
                a, b, taxonomy, seed=int(settings["seed"]), out_dir=out
            )
            written.append("static_delta.json")
        elif report == "odds":
            if run is None:
                raise ConfigError("the odds report requires --run")
            layer_dumps = by_role["layerwise_contextual"]
            if not layer_dumps:
                raise repranalysis.AnalysisError("no layerwise_contextual dumps found")
            repranalysis.layerwise_odds_report(layer_dumps, run, out_dir=out)
            written.append("layerwise_odds.json")
        elif report == "separability":
            found = by_role["question_final"]
            if not found:
                raise repranalysis.AnalysisError("no question_final dumps found")
            for dump in found:
                repranalysis.separability_report(dump, out_dir=out)
                written.append(f"separability_{dump.manifest.model_id}.json")
        elif report == "visual":
            if run is None:
                raise ConfigError("the visual report requires --run")
            if not settings["membership"]:
                raise ConfigError("the visual report requires --membership")
            membership_path = _require_file(settings["membership"], "membership file")
            membership = json.loads(membership_path.read_text(encoding="utf-8"))
            found = by_role["vision_patch"]
            if not found:
                raise repranalysis.AnalysisError("no vision_patch dumps found")
            pair_cond = metrics_mod.pair_conditional_accuracy(run.instance_set())
            repranalysis.visual_similarity_report(
                found[0],
                membership,
                pair_cond,
                include_leaf_images=bool(settings["include_leaf_images"]),
                out_dir=out,
            )
            written.append("visual_similarity.json")
    stamp = dict(settings)
    stamp["config_digest"] = _config_digest(settings)
    stamp["reports_written"] = written
    _write_json(out / "analyze.manifest.json", stamp)
    print(f"wrote {len(written)} reports to {out}")
    return EXIT_OK


def cmd_validate_dump(args: argparse.Namespace) -> int:
    if not args.paths:
        raise ConfigError("no dump paths given")
    for path in args.paths:
        manifest = dumps_mod.validate_dump(path)
        rows, cols = manifest.dims
        print(f"OK {path} role={manifest.role} model={manifest.model_id} dims={rows}x{cols}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taxqa",
        description="Taxonomy-sensitive QA synthesis, evaluation, and analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="JSON file of option defaults")

    p = sub.add_parser("build", help="synthesize a dataset from scene graphs")
    common(p)
    p.add_argument("--taxonomy")
    p.add_argument("--scenes")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--quota", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--attribute-classes", dest="attribute_classes")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("taxomps", help="generate taxonomy membership probes")
    common(p)
    p.add_argument("--taxonomy")
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_taxomps)

    p = sub.add_parser("eval", help="score a dataset against an endpoint")
    common(p)
    p.add_argument("--dataset")
    p.add_argument("--endpoint")
    p.add_argument("--model")
    p.add_argument("--out")
    p.add_argument("--mode", choices=("text", "question_only", "vqa"))
    p.add_argument("--max-in-flight", dest="max_in_flight", type=int)
    p.add_argument("--timeout", type=float)
    p.add_argument("--retries", type=int)
    p.add_argument("--top-k", dest="top_k", type=int)
    p.add_argument("--system-prompt", dest="system_prompt")
    p.add_argument("--decision", choices=("argmax", "sample"))
    p.add_argument("--decision-seed", dest="decision_seed", type=int)
    p.add_argument("--run-id", dest="run_id")
    p.add_argument("--api-key", dest="api_key")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("metrics", help="recompute metrics from a run file")
    common(p)
    p.add_argument("--run")
    p.add_argument("--out")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("analyze", help="representation reports over dumps")
    common(p)
    p.add_argument("--dumps")
    p.add_argument("--taxonomy")
    p.add_argument("--out")
    p.add_argument("--run")
    p.add_argument("--membership")
    p.add_argument("--reports")
    p.add_argument("--seed", type=int)
    p.add_argument("--subsets", type=int)
    p.add_argument("--subset-size", dest="subset_size", type=int)
    p.add_argument("--ridge", type=float)
    p.add_argument(
        "--include-leaf-images", dest="include_leaf_images", action="store_const", const=True
    )
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("validate-dump", help="check dump manifests and payloads")
    p.add_argument("paths", nargs="*")
    p.set_defaults(func=cmd_validate_dump)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses its own exit codes
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EndpointError as exc:
        print(f"endpoint error: {exc}", file=sys.stderr)
        return EXIT_ENDPOINT
    except (
        TaxonomyError,
        SceneError,
        QuestgenError,
        MetricsError,
        EvalError,
        dumps_mod.DumpError,
        repranalysis.AnalysisError,
        json.JSONDecodeError,
        KeyError,
        ValueError,
    ) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
