"""Command-line pipeline: evolve, sample, verify, filter, sft, pairs, eval,
report, or any ordered subset via `pipeline`.

Each stage reads the previous stage's JSONL artifact and writes one output
plus a manifest (config fingerprint + input hash + counts). Re-running an
unchanged stage is a no-op. Exit codes: 0 ok, 2 config error, 3 stage
failure, 4 schema violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import augment, prefs
from .client import CachingClient, HttpChatClient, MockClient, ResponseCache, RetryingClient
from .config import ConfigError, PipelineConfig, load_config
from .evaluation import (
    EvalConfig,
    FewShot,
    GradedResult,
    GREEDY,
    NUCLEUS,
    aggregate_metrics,
    check_report_identity,
    grade_prediction,
    write_report,
)
from .jsonl import (
    combined_digest,
    read_jsonl,
    stage_is_current,
    write_jsonl_atomic,
    write_manifest,
)
from .records import (
    SchemaError,
    answer_to_json,
    item_from_json,
    path_from_json,
    prediction_from_json,
    verdict_to_json,
)
from .verify import FilterPolicy, MathItem, equation_list_key, verify_response

log = logging.getLogger(__name__)

STAGES = ("evolve", "sample", "verify", "filter", "sft", "pairs",
          "eval", "report")

STAGE_OUTPUTS = {
    "evolve": "evolved.jsonl",
    "sample": "paths.jsonl",
    "verify": "verdicts.jsonl",
    "filter": "filtered.jsonl",
    "sft": "sft.jsonl",
    "pairs": "pairs.jsonl",
    "eval": "graded.jsonl",
    "report": "report",
}

STAGE_INPUTS = {
    "verify": "paths.jsonl",
    "filter": "verdicts.jsonl",
    "sft": "filtered.jsonl",
    "pairs": "verdicts.jsonl",
    "report": "graded.jsonl",
}


def _pmap(fn, seq, workers: int):
    if workers <= 1:
        return [fn(x) for x in seq]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, seq))


def _load_items(cfg: PipelineConfig) -> dict[str, MathItem]:
    if not cfg.dataset:
        raise ConfigError("this stage needs a dataset (set [paths].dataset or --dataset)")
    items: dict[str, MathItem] = {}
    for lineno, record in read_jsonl(cfg.dataset):
        try:
            item = item_from_json(record)
        except (SchemaError, ValueError) as err:
            raise SchemaError(f"{cfg.dataset}:{lineno}: {err}") from None
        if item.id in items:
            raise SchemaError(f"{cfg.dataset}:{lineno}: duplicate item id {item.id!r}")
        items[item.id] = item
    return items


def _build_client(cfg: PipelineConfig):
    if cfg.mock_client:
        client = RetryingClient(MockClient.from_file(cfg.mock_client),
                                retries=cfg.endpoint.retries, backoff_base=0.0)
    elif cfg.endpoint.base_url:
        client = HttpChatClient(cfg.endpoint)
    else:
        raise ConfigError("no client: configure [client].base_url or pass --mock-client")
    if cfg.cache_dir:
        client = CachingClient(client, ResponseCache(cfg.cache_dir))
    return client


def _in_path(cfg: PipelineConfig, stage: str, override) -> str:
    if override:
        return str(override)
    if stage in ("evolve", "sample"):
        if not cfg.dataset:
            raise ConfigError(f"{stage} reads the dataset; none configured")
        return cfg.dataset
    if stage == "eval":
        if not cfg.predictions:
            raise ConfigError("eval reads a predictions file; none configured")
        return cfg.predictions
    return str(Path(cfg.output_dir) / STAGE_INPUTS[stage])


def _out_path(cfg: PipelineConfig, stage: str, override) -> str:
    if override:
        return str(override)
    return str(Path(cfg.output_dir) / STAGE_OUTPUTS[stage])


def _input_digest(cfg: PipelineConfig, stage: str, in_path: str) -> str:
    paths = [in_path]
    if stage in ("verify", "filter", "sft", "pairs", "eval") and cfg.dataset:
        paths.append(cfg.dataset)
    if stage in ("evolve", "sample") and cfg.mock_client:
        paths.append(cfg.mock_client)
    return combined_digest(paths)


# --------------------------------------------------------------------------
# stages

def run_evolve(cfg: PipelineConfig, in_path: str, out_path: str) -> dict:
    items = _load_items(cfg)
    client = _build_client(cfg)
    records, skipped = [], 0
    for item in items.values():
        for mode in cfg.evolve_modes:
            try:
                records.extend(_evolve_one(cfg, client, item, mode))
            except augment.EvolutionParseError as err:
                log.warning("evolve(%s) failed on %s: %s", mode, item.id, err)
                skipped += 1
    count = write_jsonl_atomic(out_path, records)
    return {"read": len(items), "written": count, "parse_failures": skipped}


def _evolve_one(cfg: PipelineConfig, client, item: MathItem, mode: str) -> list[dict]:
    from .client import CompletionRequest, Message

    def ask(prompt: str) -> str:
        request = CompletionRequest(
            endpoint_id=cfg.endpoint.endpoint_id, model_id=cfg.model_id,
            messages=(Message("user", prompt),),
            temperature=cfg.temperature, top_p=cfg.top_p,
            max_tokens=cfg.max_tokens, n_samples=1)
        return client.complete(request).texts[0]

    if mode == "depth":
        decompose = augment.build_evolution_prompt("depth-decompose", item)
        subs = augment.parse_numbered_list(ask(decompose.rendered_prompt))
        enhance = augment.build_evolution_prompt("depth-enhance", subs)
        harder = augment.parse_numbered_list(ask(enhance.rendered_prompt))
        return [{
            "id": f"{item.id}/depth/{i}",
            "question": question,
            "language": item.language,
            "provenance": {"mode": "depth", "parent_id": item.id,
                           "template_id": enhance.template_id,
                           "model_id": cfg.model_id},
        } for i, question in enumerate(harder)]
    if mode == "breadth":
        mutate = augment.build_evolution_prompt("breadth-mutate", item,
                                                scope=cfg.scope)
        question = ask(mutate.rendered_prompt).strip()
        if not question:
            raise augment.EvolutionParseError("empty mutation reply")
        return [{
            "id": f"{item.id}/breadth/0",
            "question": question,
            "language": item.language,
            "provenance": {"mode": "breadth", "parent_id": item.id,
                           "template_id": mutate.template_id,
                           "scope": cfg.scope, "model_id": cfg.model_id},
        }]
    raise ConfigError(f"unknown evolve mode {mode!r}")


def run_sample(cfg: PipelineConfig, in_path: str, out_path: str) -> dict:
    items = _load_items(cfg)
    client = _build_client(cfg)
    patterns = cfg.patterns()
    library = (augment.PromptLibrary(cfg.prompt_library)
               if cfg.prompt_library else None)
    params = augment.SamplingParams(temperature=cfg.temperature,
                                    top_p=cfg.top_p,
                                    max_tokens=cfg.max_tokens)

    def sample_one(item: MathItem) -> list[dict]:
        paths = augment.sample_responses(
            client, item, k=cfg.k, strategy=cfg.strategy, params=params,
            patterns=patterns, model_id=cfg.model_id,
            endpoint_id=cfg.endpoint.endpoint_id,
            prompt_library=library, prompt_id=cfg.prompt_id)
        return [{"item_id": item.id, "text": p.text,
                 "gen": {"model_id": p.gen.model_id, "strategy": p.gen.strategy,
                         "temperature": p.gen.temperature,
                         "prompt_id": p.gen.prompt_id}}
                for p in paths]

    batches = _pmap(sample_one, list(items.values()), cfg.workers)
    records = [record for batch in batches for record in batch]
    count = write_jsonl_atomic(out_path, records)
    return {"read": len(items), "written": count}


def run_verify(cfg: PipelineConfig, in_path: str, out_path: str) -> dict:
    items = _load_items(cfg)
    patterns = cfg.patterns()
    tol = cfg.tolerance()
    rows = list(read_jsonl(in_path))

    def verify_one(row):
        lineno, record = row
        item_id, path = path_from_json(record, patterns)
        if item_id not in items:
            raise SchemaError(f"{in_path}:{lineno}: unknown item id {item_id!r}")
        verdict = verify_response(items[item_id], path, tol)
        out = dict(record)
        out["verdict"] = verdict_to_json(verdict)
        return out

    records = _pmap(verify_one, rows, cfg.workers)
    count = write_jsonl_atomic(out_path, records)
    return {"read": len(rows), "written": count}


def _record_passes(item: MathItem, verdict: dict, strict: bool) -> bool:
    calc_ok = bool(verdict.get("calc_correct"))
    if strict:
        calc_ok = calc_ok and not any(
            e.get("verdict", "").startswith("indeterminate")
            for e in verdict.get("equations", []))
    if item.multi_answer:
        return calc_ok
    return calc_ok and bool(verdict.get("answer_correct"))


def run_filter(cfg: PipelineConfig, in_path: str, out_path: str) -> dict:
    items = _load_items(cfg)
    patterns = cfg.patterns()
    kept = []
    read = 0
    for lineno, record in read_jsonl(in_path):
        read += 1
        verdict = record.get("verdict")
        if not isinstance(verdict, dict):
            raise SchemaError(f"{in_path}:{lineno}: missing verdict (run verify first)")
        item_id = record.get("item_id")
        if item_id not in items:
            raise SchemaError(f"{in_path}:{lineno}: unknown item id {item_id!r}")
        if _record_passes(items[item_id], verdict, cfg.strict_calc):
            kept.append(record)
    if cfg.dedup == "by-equation-list":
        seen: set = set()
        deduped = []
        for record in kept:
            _, path = path_from_json(record, patterns)
            key = (record["item_id"], equation_list_key(path))
            if key in seen:
                continue
            seen.add(key)
            deduped.append(record)
        kept = deduped
    count = write_jsonl_atomic(out_path, kept)
    return {"read": read, "written": count}


def run_sft(cfg: PipelineConfig, in_path: str, out_path: str) -> dict:
    items = _load_items(cfg)
    patterns = cfg.patterns()
    records = []
    for lineno, record in read_jsonl(in_path):
        item_id, path = path_from_json(record, patterns)
        if item_id not in items:
            raise SchemaError(f"{in_path}:{lineno}: unknown item id {item_id!r}")
        sft = augment.build_sft_record(items[item_id], path)
        records.append({
            "instruction": sft.instruction,
            "response": sft.response,
            "meta_prompt_id": sft.meta_prompt_id,
            "rendered": sft.render(),
            "provenance": sft.provenance,
        })
    count = write_jsonl_atomic(out_path, records)
    return {"read": len(records), "written": count}


def run_pairs(cfg: PipelineConfig, in_path: str, out_path: str) -> dict:
    items = _load_items(cfg)
    patterns = cfg.patterns()
    tol = cfg.tolerance()
    policy = FilterPolicy(strict_calc=cfg.strict_calc)
    by_item: dict[str, list] = {}
    read = 0
    for lineno, record in read_jsonl(in_path):
        read += 1
        item_id, path = path_from_json(record, patterns)
        if item_id not in items:
            raise SchemaError(f"{in_path}:{lineno}: unknown item id {item_id!r}")
        by_item.setdefault(item_id, []).append(path)
    records = []
    for item_id, item in items.items():
        paths = by_item.get(item_id, [])
        candidates = [(p, verify_response(item, p, tol)) for p in paths]
        pairs = prefs.build_preference_pairs(item, candidates,
                                             cap=cfg.pair_cap, policy=policy)
        records.extend(prefs.pair_to_json(pair) for pair in pairs)
    count = write_jsonl_atomic(out_path, records)
    return {"read": read, "written": count}


def _eval_config(cfg: PipelineConfig) -> EvalConfig:
    decoding = GREEDY if cfg.eval_decoding == "greedy" else NUCLEUS
    shots: tuple[FewShot, ...] = ()
    if cfg.shots_file:
        shots = tuple(FewShot(question=r["question"],
                              rationale=r.get("rationale", ""),
                              answer=str(r["answer"]))
                      for _, r in read_jsonl(cfg.shots_file))
    return EvalConfig(decoding=decoding, max_tokens=cfg.max_tokens,
                      prompting=cfg.eval_prompting, shots=shots,
                      patterns=cfg.patterns(), tol=cfg.tolerance())


def run_eval(cfg: PipelineConfig, in_path: str, out_path: str) -> dict:
    items = _load_items(cfg)
    eval_config = _eval_config(cfg)
    rows = list(read_jsonl(in_path))

    def grade_one(row):
        lineno, record = row
        item_id, prediction = prediction_from_json(record)
        if item_id not in items:
            raise SchemaError(f"{in_path}:{lineno}: unknown item id {item_id!r}")
        graded = grade_prediction(items[item_id], prediction, eval_config)
        return {"item_id": graded.item_id, "prediction": graded.prediction,
                "extracted": answer_to_json(graded.extracted),
                "correct": graded.correct, "facets": graded.facets,
                "note": graded.note}

    records = _pmap(grade_one, rows, cfg.workers)
    count = write_jsonl_atomic(out_path, records)
    return {"read": len(rows), "written": count,
            "eval_fingerprint": eval_config.fingerprint()}


def run_report(cfg: PipelineConfig, in_path: str, out_path: str) -> dict:
    graded = []
    for lineno, record in read_jsonl(in_path):
        graded.append(GradedResult(
            item_id=str(record.get("item_id", "")),
            prediction=record.get("prediction", ""),
            extracted=None,
            correct=bool(record.get("correct")),
            facets=record.get("facets") or {},
            note=record.get("note", "")))
    if not graded:
        raise SchemaError(f"{in_path}: no graded records")
    report = aggregate_metrics(graded, fingerprint=cfg.fingerprint())
    check_report_identity(report, graded)
    written = []
    for fmt in ("json", "csv", "plot-data"):
        written.extend(write_report(report, fmt, out_path))
    return {"read": len(graded), "written": len(written),
            "pass@1": float(report.overall)}


RUNNERS = {
    "evolve": run_evolve,
    "sample": run_sample,
    "verify": run_verify,
    "filter": run_filter,
    "sft": run_sft,
    "pairs": run_pairs,
    "eval": run_eval,
    "report": run_report,
}


def run_stage(cfg: PipelineConfig, stage: str,
              in_override=None, out_override=None,
              force: bool = False) -> dict:
    in_path = _in_path(cfg, stage, in_override)
    out_path = _out_path(cfg, stage, out_override)
    if not Path(in_path).exists():
        raise ConfigError(f"{stage}: input does not exist: {in_path}")
    digest = _input_digest(cfg, stage, in_path)
    fingerprint = cfg.fingerprint()
    if not force and stage_is_current(out_path, fingerprint, digest):
        return {"stage": stage, "out": out_path, "skipped": True}
    counts = RUNNERS[stage](cfg, in_path, out_path)
    write_manifest(out_path, stage, fingerprint, digest, counts)
    return {"stage": stage, "out": out_path, "skipped": False, **counts}


# --------------------------------------------------------------------------
# entry point

def _add_common_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="TOML config file")
    parser.add_argument("--in", dest="in_path", help="stage input path")
    parser.add_argument("--out", dest="out_path", help="stage output path")
    parser.add_argument("--dataset", help="dataset JSONL (items)")
    parser.add_argument("--predictions", help="predictions JSONL for eval")
    parser.add_argument("--output-dir", help="artifact directory")
    parser.add_argument("--cache-dir", help="completion cache directory")
    parser.add_argument("--mock-client", help="scripted mock client JSON")
    parser.add_argument("--seed", type=int, help="run seed")
    parser.add_argument("--workers", type=int, help="parallel workers")
    parser.add_argument("--strict-calc", action="store_true", default=None,
                        help="indeterminate equations fail the filter too")
    parser.add_argument("--force", action="store_true",
                        help="run even if the manifest says up to date")
    parser.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mathforge",
        description="Math-instruction data pipeline and evaluation harness")
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        p = sub.add_parser(stage, help=f"run the {stage} stage")
        _add_common_flags(p)
    p = sub.add_parser("pipeline", help="run an ordered list of stages")
    p.add_argument("stages", help="comma-separated stage list, "
                                  "e.g. sample,verify,filter,sft,pairs")
    _add_common_flags(p)
    return parser


def _config_from_args(args) -> PipelineConfig:
    overrides = {
        "dataset": args.dataset,
        "predictions": args.predictions,
        "output_dir": args.output_dir,
        "cache_dir": args.cache_dir,
        "mock_client": args.mock_client,
        "seed": args.seed,
        "workers": args.workers,
        "strict_calc": args.strict_calc,
    }
    return load_config(args.config, **overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "pipeline":
        stages = [s.strip() for s in args.stages.split(",") if s.strip()]
        unknown = [s for s in stages if s not in STAGES]
        if unknown:
            _fail("pipeline", ConfigError(f"unknown stages: {unknown}"))
            return 2
    else:
        stages = [args.command]
    try:
        cfg = _config_from_args(args)
    except ConfigError as err:
        _fail("config", err)
        return 2
    multi = len(stages) > 1
    for stage in stages:
        try:
            summary = run_stage(
                cfg, stage,
                in_override=None if multi else args.in_path,
                out_override=None if multi else args.out_path,
                force=args.force)
        except ConfigError as err:
            _fail(stage, err)
            return 2
        except SchemaError as err:
            _fail(stage, err)
            return 4
        except Exception as err:  # noqa: BLE001 - stage failures become exit 3
            _fail(stage, err)
            return 3
        if summary.get("skipped"):
            print(f"[{stage}] up to date, skipped ({summary['out']})")
        else:
            detail = ", ".join(f"{k}={v}" for k, v in summary.items()
                               if k not in ("stage", "out", "skipped"))
            print(f"[{stage}] wrote {summary['out']} ({detail})")
    return 0


def _fail(stage: str, err: Exception) -> None:
    record = {"error": {"stage": stage, "type": type(err).__name__,
                        "message": str(err)}}
    print(json.dumps(record, ensure_ascii=False), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
