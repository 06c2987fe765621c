"""Command-line interface.

Subcommands cover the pipeline end to end: ingest a corpus, build an
index cache, judge single sentences, export training records, evaluate
labeled sets and generation models, serve the moderation gateway, and
benchmark audit latency.

Exit codes: 0 success, 1 operational error (missing file, bad data,
backend down), 2 usage error. Reports are JSON with sorted keys; the only
run-dependent field is meta.created, so mock-backend runs are otherwise
byte-reproducible.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import statistics
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from ._wire import RetryPolicy
from .backends import MockRuleBackend, RemoteChatBackend, RemoteChatConfig
from .detector import Detector
from .embeddings import LocalHashingEmbedder
from .errors import BiasGateError
from .evalharness import ReplayGenerator, evaluate_generation, evaluate_labeled
from .gateway import Gateway, GatewayConfig, create_app
from .knowledge import AliasMap, KnowledgeBase, append, ingest, load, save
from .labels import load_generation_tasks, load_labeled, load_replay, read_corpus_csv
from .prompting import PromptConfig, build_training_records, write_training_records
from .retrieval import build_index, load_index, save_index
from .templates import load_templates

log = logging.getLogger(__name__)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _flatten(value: dict, prefix: str = "") -> list[tuple[str, str]]:
    rows: list[tuple[str, str]] = []
    for key in sorted(value):
        child = value[key]
        name = f"{prefix}{key}"
        if isinstance(child, dict):
            rows.extend(_flatten(child, name + "."))
        else:
            rows.append((name, json.dumps(child, ensure_ascii=False, sort_keys=True)))
    return rows


def _emit(payload: dict, fmt: str) -> None:
    """JSON by default; --format csv flattens to key,value rows."""
    if fmt == "csv":
        writer = csv.writer(sys.stdout)
        writer.writerow(("key", "value"))
        writer.writerows(_flatten(payload))
    else:
        print(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False))


def _print_json(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False))


def _write_or_print(payload: dict, path: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _meta(args: argparse.Namespace) -> dict:
    config = {
        key: value
        for key, value in sorted(vars(args).items())
        if key not in ("func", "verbose") and not callable(value)
    }
    return {"created": _now(), "tool": "biasgate", "version": __version__, "config": config}


def _aliases(args: argparse.Namespace) -> AliasMap:
    return AliasMap.load(args.aliases) if args.aliases else AliasMap.default()


def _templates(args: argparse.Namespace):
    return load_templates(args.templates)


def _prompt_config(args: argparse.Namespace) -> PromptConfig:
    return PromptConfig(
        use_retrieval=args.use_retrieval,
        use_steps=args.use_steps,
        use_demo=args.use_demo,
        k=args.k,
    )


def _backend(args: argparse.Namespace, kb: KnowledgeBase):
    if args.backend == "mock":
        return MockRuleBackend(kb, _templates(args))
    config = RemoteChatConfig.from_env(
        url=args.chat_url or None,
        model=args.chat_model or None,
        temperature=args.temperature,
        max_tokens=args.max_tokens,
        timeout=args.timeout,
        retry=RetryPolicy(retries=args.retries, backoff_s=args.backoff, jitter=args.jitter),
    )
    if not config.url or not config.model:
        raise BiasGateError(
            "remote backend needs --chat-url and --chat-model "
            "(or BIASGATE_CHAT_URL / BIASGATE_CHAT_MODEL)"
        )
    return RemoteChatBackend(config)


def _detector(args: argparse.Namespace) -> Detector:
    kb = load(args.kb)
    embedder = LocalHashingEmbedder()
    index = load_index(args.index) if getattr(args, "index", None) else build_index(kb, embedder)
    return Detector(
        kb,
        index,
        _backend(args, kb),
        config=_prompt_config(args),
        embedder=embedder,
        templates=_templates(args),
        aliases=_aliases(args),
    )


def cmd_ingest(args: argparse.Namespace) -> int:
    records = read_corpus_csv(args.input, args.statement_col, args.type_col)
    aliases = _aliases(args)
    if args.append:
        kb, report = append(load(args.out), records, aliases)
    else:
        kb, report = ingest(records, aliases)
    save(kb, args.out)
    _emit(
        {
            "kb": args.out,
            "entries": len(kb),
            "version": kb.version,
            "by_type": {t.value: c for t, c in kb.counts_by_type.items()},
            "report": report.as_dict(),
        },
        args.format,
    )
    return 0


def cmd_index(args: argparse.Namespace) -> int:
    kb = load(args.kb)
    index = build_index(kb, LocalHashingEmbedder())
    save_index(index, args.out)
    _emit(
        {
            "out": args.out,
            "rows": len(index),
            "kb_version": index.kb_version,
            "embedder": index.embedder_id,
        },
        args.format,
    )
    return 0


def cmd_detect(args: argparse.Namespace) -> int:
    detector = _detector(args)
    result = detector.detect(args.text)
    payload = result.as_dict()
    payload["completion"] = result.completion
    _emit(payload, args.format)
    return 0


def cmd_traindata(args: argparse.Namespace) -> int:
    detector = _detector(args)  # reuses kb/index/prompt wiring; backend unused
    examples = load_labeled(args.labeled, detector.aliases)
    records, skipped = build_training_records(
        examples,
        detector.kb,
        detector.index,
        config=detector.config,
        templates=detector.templates,
        embedder=detector.embedder,
    )
    write_training_records(records, args.out)
    _emit(
        {
            "out": args.out,
            "records": len(records),
            "skipped": [{"id": s.id, "reason": s.reason} for s in skipped],
        },
        args.format,
    )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    detector = _detector(args)
    examples = load_labeled(args.labeled, detector.aliases)
    report, items = evaluate_labeled(examples, detector, max_workers=args.max_workers)
    payload = {"meta": _meta(args), "metrics": report.as_dict()}
    _write_or_print(payload, args.report)
    if args.items:
        rows = [item.as_dict() for item in items]
        with open(args.items, "w", newline="", encoding="utf-8") as handle:
            writer = csv.DictWriter(handle, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
    return 0


def cmd_gen_eval(args: argparse.Namespace) -> int:
    detector = _detector(args)
    tasks = load_generation_tasks(args.tasks)
    generator = ReplayGenerator(load_replay(args.replay))
    report = evaluate_generation(tasks, generator, detector)
    payload = {"meta": _meta(args), "generation": report.as_dict()}
    _write_or_print(payload, args.report)
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    detector = _detector(args)
    if not detector.kb.entries:
        raise BiasGateError("cannot benchmark against an empty knowledge base")
    statements = [entry.statement for entry in detector.kb.entries]
    latencies = []
    for i in range(args.n):
        text = f"someone online claims that {statements[i % len(statements)]}"
        latencies.append(detector.detect(text).latency_ms)
    latencies.sort()
    _emit(
        {
            "n": args.n,
            "mean_ms": statistics.fmean(latencies),
            "p50_ms": latencies[len(latencies) // 2],
            "p95_ms": latencies[min(len(latencies) - 1, int(len(latencies) * 0.95))],
            "max_ms": latencies[-1],
        },
        args.format,
    )
    return 0


def build_gateway(args: argparse.Namespace) -> Gateway:
    kb = load(args.kb)
    embedder = LocalHashingEmbedder()
    index = load_index(args.index) if getattr(args, "index", None) else build_index(kb, embedder)
    templates = _templates(args)

    if args.backend == "mock":
        def judge_factory(snapshot: KnowledgeBase):
            return MockRuleBackend(snapshot, templates)
    else:
        remote = _backend(args, kb)

        def judge_factory(snapshot: KnowledgeBase):
            return remote

    upstream = None
    if args.upstream_url:
        upstream = RemoteChatBackend(
            RemoteChatConfig.from_env(
                url=args.upstream_url,
                model=args.upstream_model or "default",
                timeout=args.timeout,
                retry=RetryPolicy(
                    retries=args.retries, backoff_s=args.backoff, jitter=args.jitter
                ),
            )
        )

    config = GatewayConfig(
        block_message=args.block_message,
        audit_only=args.audit_only,
        fail_open=args.fail_open,
        prompt=_prompt_config(args),
        kb_path=args.kb,
        audit_log_path=args.audit_log,
        max_concurrent=args.max_concurrent,
    )
    return Gateway(
        kb,
        index,
        judge_factory,
        upstream=upstream,
        config=config,
        embedder=embedder,
        templates=templates,
        aliases=_aliases(args),
    )


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    app = create_app(build_gateway(args))
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="file of key=value defaults for any flag")
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("--aliases", help="bias-type alias file (default: packaged)")
    common.add_argument("--templates", help="template file (default: packaged)")
    common.add_argument(
        "--format", choices=("json", "csv"), default="json",
        help="summary output format (reports are always JSON)",
    )

    kbp = argparse.ArgumentParser(add_help=False)
    kbp.add_argument(
        "--kb",
        required="BIASGATE_KB" not in os.environ,
        default=os.environ.get("BIASGATE_KB"),
        help="knowledge-base file (env: BIASGATE_KB)",
    )
    kbp.add_argument("--index", help="prebuilt index cache (default: build in memory)")

    prompt = argparse.ArgumentParser(add_help=False)
    prompt.add_argument("--k", type=int, default=5, help="references per prompt")
    prompt.add_argument(
        "--no-retrieval", dest="use_retrieval", action="store_false", default=True
    )
    prompt.add_argument("--no-steps", dest="use_steps", action="store_false", default=True)
    prompt.add_argument("--no-demo", dest="use_demo", action="store_false", default=True)

    backend = argparse.ArgumentParser(add_help=False)
    backend.add_argument("--backend", choices=("mock", "remote"), default="mock")
    backend.add_argument("--chat-url", default="")
    backend.add_argument("--chat-model", default="")
    backend.add_argument("--temperature", type=float, default=0.0)
    backend.add_argument("--max-tokens", type=int, default=512)
    backend.add_argument("--timeout", type=float, default=30.0)
    backend.add_argument("--retries", type=int, default=2)
    backend.add_argument("--backoff", type=float, default=0.5)
    backend.add_argument("--no-jitter", dest="jitter", action="store_false", default=True)

    parser = argparse.ArgumentParser(
        prog="biasgate",
        description="Retrieval-grounded bias detection and moderation toolkit",
    )
    parser.add_argument("--version", action="version", version=f"biasgate {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="build a knowledge base from CSV")
    p.add_argument("--input", required=True, help="CSV with statement and type columns")
    p.add_argument("--statement-col", default="statement")
    p.add_argument("--type-col", default="bias_type")
    p.add_argument("--out", required=True, help="knowledge-base file to write")
    p.add_argument("--append", action="store_true", help="append to an existing base")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("index", parents=[common], help="write an index cache")
    p.add_argument("--kb", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser(
        "detect", parents=[common, kbp, prompt, backend], help="judge one sentence"
    )
    p.add_argument("--text", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser(
        "traindata",
        parents=[common, kbp, prompt, backend],
        help="export instruction-tuning records from labeled examples",
    )
    p.add_argument("--labeled", required=True, help="labeled JSONL")
    p.add_argument("--out", required=True, help="training JSONL to write")
    p.set_defaults(func=cmd_traindata)

    p = sub.add_parser(
        "eval", parents=[common, kbp, prompt, backend], help="score a labeled set"
    )
    p.add_argument("--labeled", required=True)
    p.add_argument("--report", help="write the JSON report here (default: stdout)")
    p.add_argument("--items", help="write per-item rows to this CSV")
    p.add_argument("--max-workers", type=int, default=4)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser(
        "gen-eval",
        parents=[common, kbp, prompt, backend],
        help="audit a generation model from a replay file",
    )
    p.add_argument("--tasks", required=True, help="generation tasks JSONL")
    p.add_argument("--replay", required=True, help="canned responses JSONL")
    p.add_argument("--report", help="write the JSON report here (default: stdout)")
    p.set_defaults(func=cmd_gen_eval)

    p = sub.add_parser(
        "serve", parents=[common, kbp, prompt, backend], help="run the moderation gateway"
    )
    listen = os.environ.get("BIASGATE_LISTEN", "127.0.0.1:8080")
    default_host, _, default_port = listen.rpartition(":")
    p.add_argument("--host", default=default_host or "127.0.0.1")
    p.add_argument("--port", type=int, default=int(default_port or 8080))
    p.add_argument("--block-message", default=GatewayConfig().block_message)
    p.add_argument("--audit-only", action="store_true")
    p.add_argument("--fail-open", action="store_true")
    p.add_argument("--audit-log", help="append JSONL audit records here")
    p.add_argument(
        "--upstream-url",
        default=os.environ.get("BIASGATE_UPSTREAM_URL", ""),
        help="generation backend to moderate (env: BIASGATE_UPSTREAM_URL)",
    )
    p.add_argument("--upstream-model", default="")
    p.add_argument("--max-concurrent", type=int, default=None)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser(
        "bench", parents=[common, kbp, prompt, backend], help="measure audit latency"
    )
    p.add_argument("--n", type=int, default=100)
    p.set_defaults(func=cmd_bench)

    return parser


def _coerce(raw: str, current) -> object:
    if isinstance(current, bool):
        lowered = raw.strip().lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise BiasGateError(f"bad boolean {raw!r} in config file")
    if isinstance(current, int) and not isinstance(current, bool):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    return raw


# Flags that appear on the command line only in negated form.
_NEGATED_FLAGS = {
    "use_retrieval": "--no-retrieval",
    "use_steps": "--no-steps",
    "use_demo": "--no-demo",
    "jitter": "--no-jitter",
}


def _overlay_config(args: argparse.Namespace, argv: list[str]) -> None:
    """Apply config-file values to flags not given on the command line."""
    if not getattr(args, "config", None):
        return
    for lineno, line in enumerate(Path(args.config).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise BiasGateError(f"config line {lineno}: expected key=value")
        key = key.strip().replace("-", "_")
        value = value.strip()
        if not hasattr(args, key):
            raise BiasGateError(f"config line {lineno}: unknown setting {key!r}")
        flags = ["--" + key.replace("_", "-")]
        if key in _NEGATED_FLAGS:
            flags.append(_NEGATED_FLAGS[key])
        if any(
            token == flag or token.startswith(flag + "=")
            for token in argv
            for flag in flags
        ):
            continue
        setattr(args, key, _coerce(value, getattr(args, key)))


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose > 1 else
        logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        _overlay_config(args, argv)
        return args.func(args)
    except BiasGateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
