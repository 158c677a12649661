"""Command-line entry points.

Subcommands:

  detect          extract graphs and score a dataset, one report per passage
  evaluate        compare reports against gold labels (AUC-PR, correlations)
  sweep           re-evaluate with sample-count prefixes 1..n
  correct         rewrite passages guided by detection flags and judge them
  export-dot      render one scored report as a Graphviz digraph
  record-session  run detection against a live endpoint and record the
                  exchanges for offline replay

All outputs are deterministic given the same inputs and recorded
sessions: files are written with sorted keys, stable ordering and no
timestamps, so replayed runs are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

from .config import RunConfig, api_key_from_env, load_config
from .correction import (
    CorrectionMode,
    CorrectionRun,
    EmptyRun,
    MalformedCorrection,
    correction_report,
    run_correction,
)
from .dataset import SchemaMismatch, load_dataset
from .dot import export_dot
from .evaluation import (
    IdMismatch,
    MISSING_EXCLUDE,
    MISSING_IMPUTE_ZERO,
    evaluate_reports,
    sentence_items,
    sweep_samples,
)
from .extraction import ExtractionFailed, KgExtractor, PassageExtraction
from .kg import EmptyTermError
from .llm import (
    CorruptSession,
    HttpBackend,
    LlmClient,
    LlmError,
    ResponseCache,
    load_session,
    record_session,
)
from .metrics import ConstantInput, DegenerateLabels, auc_pr, random_baseline
from .scoring import NoSamplesError, ScoreReport, score_instance

_USER_ERRORS = (
    ValueError,
    LlmError,
    ExtractionFailed,
    SchemaMismatch,
    IdMismatch,
    DegenerateLabels,
    ConstantInput,
    EmptyTermError,
    NoSamplesError,
    EmptyRun,
    MalformedCorrection,
    CorruptSession,
    OSError,
)


def _write_json(path: Path, obj) -> None:
    # atomic write so a crashed run never leaves a truncated report
    text = json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    _write_text(path, text)


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


_OVERRIDE_KEYS = (
    "endpoint",
    "detection_model",
    "correction_model",
    "judge_model",
    "max_tokens",
    "n_samples",
    "scorer",
    "aggregation",
    "fact_threshold",
    "sentence_threshold",
    "dot_threshold",
    "missing_mode",
    "seed",
    "max_calls",
)


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {k: getattr(args, k, None) for k in _OVERRIDE_KEYS}
    if getattr(args, "impute_missing", False):
        overrides["missing_mode"] = MISSING_IMPUTE_ZERO
    return load_config(getattr(args, "config", None), overrides)


def _build_client(config: RunConfig, args: argparse.Namespace) -> LlmClient:
    replay = getattr(args, "replay", None)
    if replay:
        backend = load_session(replay)
    else:
        backend = HttpBackend(
            config.endpoint, api_key=api_key_from_env(), timeout=config.timeout
        )
    cache_path = getattr(args, "cache", None)
    cache = ResponseCache(cache_path) if cache_path else None
    return LlmClient(
        backend,
        cache=cache,
        max_calls=config.max_calls,
        max_in_flight=config.max_in_flight,
    )


def _load_reports(reports_dir: str) -> list[ScoreReport]:
    paths = sorted(Path(reports_dir).glob("*.report.json"))
    if not paths:
        raise ValueError(f"no *.report.json files in {reports_dir}")
    reports = []
    for p in paths:
        with p.open("r", encoding="utf-8") as fh:
            reports.append(ScoreReport.from_dict(json.load(fh)))
    return reports


def _load_extractions(extractions_dir: str) -> list[PassageExtraction]:
    paths = sorted(Path(extractions_dir).glob("*.extraction.json"))
    if not paths:
        raise ValueError(f"no *.extraction.json files in {extractions_dir}")
    extractions = []
    for p in paths:
        with p.open("r", encoding="utf-8") as fh:
            extractions.append(PassageExtraction.from_dict(json.load(fh)))
    return extractions


def cmd_detect(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    instances = load_dataset(args.dataset)
    client = _build_client(config, args)
    extractor = KgExtractor(client, config.detection_params())
    out = Path(args.out_dir)

    failures: dict[str, str] = {}
    rows = []
    for inst in instances:
        try:
            extraction = extractor.extract_all(inst)
            report = score_instance(
                extraction,
                config.scorer,
                config.aggregation,
                client=client,
                params=config.detection_params(),
                n_samples=config.n_samples,
            )
        except _USER_ERRORS as exc:
            failures[inst.id] = str(exc)
            continue
        _write_json(out / "extractions" / f"{inst.id}.extraction.json", extraction.to_dict())
        _write_json(out / "reports" / f"{inst.id}.report.json", report.to_dict())
        rows.append(
            {
                "id": inst.id,
                "passage_score": report.passage_score,
                "passage_fact_mean": report.passage_fact_mean,
                "kg_size_score": report.kg_size_score,
                "sentence_scores": report.sentence_scores,
                "facts": sum(len(r) for r in report.sentence_facts),
            }
        )

    summary = {
        "scorer": config.scorer,
        "aggregation": config.aggregation,
        "n_samples": config.n_samples,
        "detection_model": config.detection_model,
        "instances": rows,
        "failed": sorted(failures),
    }
    _write_json(out / "summary.json", summary)
    if getattr(args, "record", None):
        record_session(client.exchanges, args.record)
    if failures:
        _write_json(out / "failures.json", failures)
        print(f"detect: {len(failures)} of {len(instances)} instances failed", file=sys.stderr)
        return 1
    print(f"detect: scored {len(rows)} instances into {out}")
    return 0


def cmd_record_session(args: argparse.Namespace) -> int:
    if not args.record:
        raise ValueError("record-session requires --record PATH")
    if getattr(args, "replay", None):
        raise ValueError("record-session records from a live endpoint; drop --replay")
    return cmd_detect(args)


def _metric_rows(result_dict: dict) -> list[dict]:
    rows = []
    for level in ("sentence", "passage"):
        block = result_dict.get(level)
        if not block:
            continue
        for metric in ("auc_pr", "pearson", "spearman"):
            value = block.get(metric)
            if value is None:
                continue
            rows.append(
                {
                    "level": level,
                    "metric": metric,
                    "value": value,
                    "n": block["n"],
                    "n_excluded": block["n_excluded"],
                }
            )
    return rows


def _csv_text(rows: list[dict], fieldnames: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def cmd_evaluate(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    instances = load_dataset(args.dataset)
    reports = _load_reports(args.reports)
    result = evaluate_reports(reports, instances, config.missing_mode)
    out = Path(args.out_dir)

    payload: dict = {"evaluation": result.to_dict(), "n_reports": len(reports)}
    rows = _metric_rows(payload["evaluation"])
    if args.with_random_baseline:
        scores, labels, excluded = sentence_items(reports, instances, config.missing_mode)
        rnd = auc_pr(random_baseline(len(labels), config.seed), labels)
        payload["random_baseline"] = {
            "auc_pr": rnd,
            "seed": config.seed,
            "n": len(labels),
            "n_excluded": excluded,
        }
        rows.append(
            {
                "level": "sentence",
                "metric": "auc_pr_random_baseline",
                "value": rnd,
                "n": len(labels),
                "n_excluded": excluded,
            }
        )
    _write_json(out / "metrics.json", payload)
    _write_text(
        out / "metrics.csv",
        _csv_text(rows, ["level", "metric", "value", "n", "n_excluded"]),
    )
    for row in rows:
        print(f"{row['level']:>8}  {row['metric']:<24} {row['value']:.6f}  (n={row['n']})")
    print(f"missing-score policy: {result.missing_mode}")
    return 0


def _parse_n_values(args: argparse.Namespace, max_n: int) -> list[int]:
    if args.n_values:
        return [int(x) for x in args.n_values.split(",") if x.strip()]
    return list(range(1, max_n + 1))


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    instances = load_dataset(args.dataset)
    extractions = _load_extractions(args.extractions)
    client = None
    if config.scorer != "frequency":
        client = _build_client(config, args)
    max_n = min(len(e.samples) for e in extractions)
    n_values = _parse_n_values(args, max_n)

    points = sweep_samples(
        extractions,
        instances,
        config.scorer,
        config.aggregation,
        n_values,
        client=client,
        params=config.detection_params() if client else None,
        missing_mode=config.missing_mode,
    )
    out = Path(args.out_dir)
    _write_json(
        out / "sweep.json",
        {
            "scorer": config.scorer,
            "aggregation": config.aggregation,
            "missing_mode": config.missing_mode,
            "points": [p.to_dict() for p in points],
        },
    )
    rows = []
    for p in points:
        row: dict = {"n": p.n}
        row["sentence_auc_pr"] = p.sentence.auc_pr if p.sentence else None
        row["passage_pearson"] = p.passage.pearson if p.passage else None
        row["passage_spearman"] = p.passage.spearman if p.passage else None
        rows.append(row)
    _write_text(
        out / "sweep.csv",
        _csv_text(rows, ["n", "sentence_auc_pr", "passage_pearson", "passage_spearman"]),
    )
    if getattr(args, "record", None):
        record_session(client.exchanges if client else [], args.record)
    print(f"sweep: {len(points)} points into {out}")
    return 0


def _render_comparison(reports_by_mode: dict) -> str:
    headers = ["mode", "factual", "non_factual", "refused", "d_factual", "d_non_factual", "d_refused"]
    lines = ["  ".join(f"{h:>14}" for h in headers)]
    for mode, rep in reports_by_mode.items():
        props = rep["proportions"]
        deltas = rep.get("relative_deltas") or {}

        def fmt_delta(key: str) -> str:
            value = deltas.get(key)
            return f"{value * 100:+.1f}%" if value is not None else "-"

        cells = [
            mode,
            f"{props['factual']:.4f}",
            f"{props['non_factual']:.4f}",
            f"{props['refused']:.4f}",
            fmt_delta("factual"),
            fmt_delta("non_factual"),
            fmt_delta("refused"),
        ]
        lines.append("  ".join(f"{c:>14}" for c in cells))
    return "\n".join(lines) + "\n"


def cmd_correct(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    instances = load_dataset(args.dataset)
    reports = {r.instance_id: r for r in _load_reports(args.reports)}
    client = _build_client(config, args)

    modes = [CorrectionMode(m.strip()) for m in args.modes.split(",") if m.strip()]
    if CorrectionMode.BASELINE not in modes:
        modes.insert(0, CorrectionMode.BASELINE)

    failures: dict[str, str] = {}
    runs: dict[str, list[CorrectionRun]] = {m.value: [] for m in modes}
    for inst in instances:
        report = reports.get(inst.id)
        if report is None:
            failures[inst.id] = "no report for instance"
            continue
        try:
            for mode in modes:
                threshold = None
                if mode is CorrectionMode.SENTENCE:
                    threshold = config.sentence_threshold
                elif mode is CorrectionMode.FACT:
                    threshold = config.fact_threshold
                runs[mode.value].append(
                    run_correction(
                        inst,
                        report,
                        mode,
                        client,
                        config.correction_params(),
                        config.judge_params(),
                        threshold=threshold,
                    )
                )
        except _USER_ERRORS as exc:
            failures[inst.id] = str(exc)

    out = Path(args.out_dir)
    pooled = {
        mode: [j for run in mode_runs for j in run.judgments]
        for mode, mode_runs in runs.items()
    }
    baseline_judgments = pooled.get(CorrectionMode.BASELINE.value, [])
    comparison: dict[str, dict] = {}
    for mode in modes:
        rep = correction_report(pooled[mode.value], baseline_judgments, mode.value)
        comparison[mode.value] = rep.to_dict()

    _write_json(
        out / "correction_runs.json",
        {mode: [r.to_dict() for r in mode_runs] for mode, mode_runs in runs.items()},
    )
    _write_json(out / "correction_report.json", comparison)
    table = _render_comparison(comparison)
    _write_text(out / "comparison.txt", table)
    print(table, end="")
    if getattr(args, "record", None):
        record_session(client.exchanges, args.record)
    if failures:
        _write_json(out / "failures.json", failures)
        print(f"correct: {len(failures)} instances failed", file=sys.stderr)
        return 1
    return 0


def cmd_export_dot(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    with Path(args.report).open("r", encoding="utf-8") as fh:
        report = ScoreReport.from_dict(json.load(fh))
    text = export_dot(report, threshold=config.dot_threshold)
    if args.out:
        _write_text(Path(args.out), text)
    else:
        print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="factscan",
        description="Fact-level hallucination detection by cross-sample consistency",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (keys = RunConfig fields)")
    common.add_argument("--seed", type=int, help="seed for all randomness in the run")

    llm_flags = argparse.ArgumentParser(add_help=False)
    llm_flags.add_argument("--endpoint", help="OpenAI-compatible endpoint base URL")
    llm_flags.add_argument("--replay", help="replay a recorded session file (offline)")
    llm_flags.add_argument("--record", help="record all exchanges to a session file")
    llm_flags.add_argument("--cache", help="persistent response cache file")
    llm_flags.add_argument("--max-calls", type=int, help="abort after this many backend calls")

    detect_flags = argparse.ArgumentParser(add_help=False)
    detect_flags.add_argument("--dataset", required=True, help="dataset JSON file")
    detect_flags.add_argument("--out-dir", required=True, help="output directory")
    detect_flags.add_argument("--scorer", choices=["frequency", "llm_kg", "llm_text"])
    detect_flags.add_argument("--aggregation", choices=["mean", "max"])
    detect_flags.add_argument("--n-samples", type=int, help="score with the first N samples")
    detect_flags.add_argument("--detection-model")
    detect_flags.add_argument("--max-tokens", type=int)

    p = sub.add_parser(
        "detect", parents=[common, llm_flags, detect_flags], help="score a dataset"
    )
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser(
        "record-session",
        parents=[common, llm_flags, detect_flags],
        help="run detection live and record a replayable session",
    )
    p.set_defaults(func=cmd_record_session)

    p = sub.add_parser("evaluate", parents=[common], help="metrics against gold labels")
    p.add_argument("--dataset", required=True)
    p.add_argument("--reports", required=True, help="directory of *.report.json files")
    p.add_argument("--out-dir", required=True)
    p.add_argument(
        "--impute-missing",
        action="store_true",
        help="score missing sentences as 0.0 instead of excluding them",
    )
    p.add_argument("--with-random-baseline", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser(
        "sweep", parents=[common, llm_flags], help="metrics vs number of samples"
    )
    p.add_argument("--dataset", required=True)
    p.add_argument("--extractions", required=True, help="directory of *.extraction.json files")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--scorer", choices=["frequency", "llm_kg", "llm_text"])
    p.add_argument("--aggregation", choices=["mean", "max"])
    p.add_argument("--n-values", help="comma-separated sample counts (default 1..max)")
    p.add_argument("--impute-missing", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser(
        "correct", parents=[common, llm_flags], help="rewrite flagged passages and judge them"
    )
    p.add_argument("--dataset", required=True)
    p.add_argument("--reports", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument(
        "--modes",
        default="baseline,sentence,fact",
        help="comma-separated subset of baseline,sentence,fact",
    )
    p.add_argument("--fact-threshold", type=float, dest="fact_threshold")
    p.add_argument("--sentence-threshold", type=float, dest="sentence_threshold")
    p.add_argument("--correction-model", dest="correction_model")
    p.add_argument("--judge-model", dest="judge_model")
    p.set_defaults(func=cmd_correct)

    p = sub.add_parser("export-dot", parents=[common], help="render a report as Graphviz DOT")
    p.add_argument("--report", required=True, help="a *.report.json file")
    p.add_argument("--threshold", type=float, dest="dot_threshold")
    p.add_argument("--out", help="output file (default stdout)")
    p.set_defaults(func=cmd_export_dot)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
