"""Command-line entry point.

Exit codes: 0 success, 1 user error (bad flags, missing files, invalid
input), 2 gateway or protocol failure, 130 interrupted.
"""

from __future__ import annotations

import argparse
import json
import logging
import random
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from . import analytics, corpus, dataset, evaluator, humaneval
from .config import RunConfig
from .errors import EmosynthError, GatewayError, ProtocolError
from .gateway import STAGES
from .pipeline.journal import Journal
from .pipeline.runner import PipelineRunner
from .pipeline.stages import Stages

log = logging.getLogger("emosynth")

EXIT_USER = 1
EXIT_GATEWAY = 2


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit 2; 2 is reserved for gateway failures
        self.print_usage(sys.stderr)
        self.exit(EXIT_USER, f"{self.prog}: error: {message}\n")


def _emit(text: str) -> None:
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _table(rows, header: Sequence[str]) -> str:
    def cell(v):
        if v is None:
            return "-"
        return f"{v:.6g}" if isinstance(v, float) else str(v)

    return "\n".join(["\t".join(header)] + ["\t".join(cell(v) for v in r) for r in rows])


def _config(args) -> RunConfig:
    return RunConfig.load(getattr(args, "config", None))


def _stage_list(text: str) -> tuple[str, ...]:
    stages = tuple(s.strip() for s in text.split(",") if s.strip())
    bad = [s for s in stages if s not in STAGES]
    if bad or not stages:
        raise argparse.ArgumentTypeError(f"stages must be a comma list drawn from {','.join(STAGES)}")
    return stages


def _unit_float(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError("expected a value in [0, 1]")
    return v


# -- subcommands -----------------------------------------------------------


def cmd_ingest(args) -> int:
    report = corpus.ingest(args.source, args.out)
    _emit(f"count={report.count} skipped={report.skipped} duplicates={report.duplicates} out={args.out}")
    return 0


def cmd_run(args) -> int:
    overrides: dict = {"run": {}}
    if args.workers is not None:
        overrides["run"]["workers"] = args.workers
    if args.max_actors is not None:
        overrides["run"]["max_actors"] = args.max_actors
    if args.sample is not None:
        overrides["run"]["sample"] = args.sample
    cfg = RunConfig.load(args.config, overrides)
    run_dir = Path(args.run_dir) if args.run_dir else cfg.run_dir(args.corpus)
    journal_path = run_dir / "journal.jsonl"
    if journal_path.exists() and journal_path.stat().st_size and not args.resume:
        if not args.overwrite:
            raise UsageError(f"{journal_path} exists; pass --resume to continue or --overwrite to start over")
        journal_path.unlink()
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.yaml").write_text(cfg.dump(), encoding="utf-8")

    plots = corpus.load_corpus(args.corpus)
    n = cfg["run"]["sample"]
    if n is not None:
        plots = corpus.sample(plots, int(n), int(cfg["seeds"]["sample"]), cfg["run"]["sample_strategy"])
    gateway = cfg.gateway()
    stages = Stages(gateway, cfg.taxonomy(), cfg.prompts(), cfg.generation_params())
    with Journal(journal_path) as journal:
        for lineno in journal.bad_lines:
            log.warning("journal line %d is corrupt; ignored", lineno)
        runner = PipelineRunner(stages, journal, cfg.run_options(args.stages))
        report = runner.run(plots)
    lines = [f"run_dir={run_dir}", f"plots={len(plots)}", f"gateway_calls={gateway.calls}"] + report.lines()
    lines += [f"unknown_label.{k}={v}" for k, v in report.unknown_labels.most_common()]
    if args.format == "table":
        rows = [(s, *(report.counts[s][k] for k in ("ok", "empty", "error", "cached", "skipped"))) for s in STAGES]
        _emit(f"run_dir\t{run_dir}\ngateway_calls\t{gateway.calls}")
        _emit(_table(rows, ["stage", "ok", "empty", "error", "cached", "skipped"]))
    else:
        _emit("\n".join(lines))
    if report.gateway_errors:
        log.error("%d stage calls failed at the gateway; rerun with --resume to retry them", report.gateway_errors)
        return EXIT_GATEWAY
    return 0


def _journal_path(args) -> Path:
    if args.journal:
        return Path(args.journal)
    if args.run_dir:
        return Path(args.run_dir) / "journal.jsonl"
    raise UsageError("pass --journal or --run-dir")


def cmd_assemble(args) -> int:
    jp = _journal_path(args)
    if not jp.exists():
        raise FileNotFoundError(f"journal not found: {jp}")
    cfg = _config(args)
    threshold = args.threshold if args.threshold is not None else float(cfg["thresholds"]["expressiveness"])
    inclusive = False if args.strict else bool(cfg["thresholds"]["inclusive"])
    report = dataset.assemble(jp, args.out, args.quarantine, threshold, inclusive)
    if args.format == "table":
        _emit(_table([l.split("=", 1) for l in report.lines()], ["metric", "value"]))
    else:
        _emit("\n".join(report.lines()))
    return 0


def cmd_split(args) -> int:
    examples = dataset.load_dataset(args.dataset)
    manifest = dataset.split(examples, args.scheme, args.seed, grouped=not args.ungrouped, stratify=args.stratify)
    manifest.write(args.out)
    sizes = manifest.sizes()
    if args.format == "table":
        _emit(_table(sizes.items(), ["split", "size"]))
    else:
        _emit(" ".join(f"{k}={v}" for k, v in sizes.items()) + f" out={args.out}")
    return 0


def cmd_stats(args) -> int:
    report = dataset.stats(dataset.load_dataset(args.dataset), _config(args).taxonomy())
    if args.format == "table":
        _emit(_table(report.rows(), ["metric", "key", "value"]))
    else:
        _emit(report.summary())
    return 0


def cmd_analyze(args) -> int:
    cfg = _config(args)
    examples = dataset.load_dataset(args.dataset)
    if args.emotion:
        examples = [e for e in examples if e.primary_emotion == args.emotion]
    embed = analytics.EmbeddingCache(cfg.gateway())
    seed = args.seed if args.seed is not None else int(cfg["seeds"]["analytics"])
    rows = []
    for pairing in args.pairing or analytics.PAIRINGS:
        try:
            rows.append(analytics.similarity_stats(pairing, examples, embed, args.sample, seed))
        except EmosynthError as exc:
            if args.pairing:
                raise
            log.info("skipping pairing %s: %s", pairing, exc)
    out = []
    if args.format == "table":
        out.append(_table([(s.pairing, s.mean, s.std, s.q99, s.sample_size) for s in rows],
                          ["pairing", "mean", "std", "q99", "n"]))
    else:
        out += [s.summary() for s in rows]
    if args.topics:
        threshold = args.edge_threshold if args.edge_threshold is not None else float(cfg["thresholds"]["edge"])
        graph = analytics.build_topic_graph(examples, embed.embed, threshold, args.text_field)
        sizes = graph.sizes()
        out.append(f"topics nodes={len(graph.nodes)} edges={len(graph.edges)} communities={graph.n_communities} "
                   f"modularity={graph.modularity:.4f} largest={max(sizes.values())}")
        if args.export_dir:
            d = Path(args.export_dir)
            d.mkdir(parents=True, exist_ok=True)
            (d / "edges.txt").write_text(graph.edge_list(), encoding="utf-8")
            (d / "membership.csv").write_text(graph.membership_csv(), encoding="utf-8")
            (d / "exemplars.json").write_text(json.dumps(graph.exemplars(), indent=1, ensure_ascii=False) + "\n",
                                              encoding="utf-8")
    _emit("\n".join(out))
    return 0


def cmd_markers(args) -> int:
    cfg = _config(args)
    rows = analytics.rows_from_examples(dataset.load_dataset(args.dataset))
    vocab = None
    if args.vocabulary:
        vocab = [w.strip() for w in Path(args.vocabulary).read_text(encoding="utf-8").split() if w.strip()]
    removal = args.removal if args.removal is not None else float(cfg["thresholds"]["removal"])
    cooccur = args.cooccur if args.cooccur is not None else float(cfg["thresholds"]["cooccur"])
    lex = analytics.extract_markers(rows, removal, cooccur, vocab, cfg.taxonomy())
    if args.format == "table":
        groups = [g.name for g in cfg.taxonomy().groups]
        body = [(e.word, e.occurrences, e.removed, e.removal_ratio, ";".join(e.emotions),
                 *(e.group_strength[g] for g in groups)) for e in lex.entries]
        _emit(_table(body, ["word", "occurrences", "removed", "removal_ratio", "emotions", *groups]))
    else:
        _emit("\n".join(f"marker={e.word} ratio={e.removal_ratio:.3f} n={e.occurrences} "
                        f"emotions={','.join(e.emotions) or '-'}" for e in lex.entries) or "markers=0")
    return 0


def cmd_dedup(args) -> int:
    cfg = _config(args)
    cutoff = args.cutoff if args.cutoff is not None else float(cfg["thresholds"]["dedup"])
    result = analytics.near_duplicate_filter(dataset.load_dataset(args.dataset), cfg.gateway(), cutoff, args.text_field)
    if args.out:
        Path(args.out).write_text("".join(f"{i}\n" for i in result.retained), encoding="utf-8")
    if args.format == "table":
        _emit(_table(result.dropped, ["dropped", "kept", "similarity"]))
    else:
        _emit("\n".join(result.lines()))
    return 0


def _matrix(args) -> evaluator.PredictionMatrix:
    if args.task:
        return evaluator.read_task_matrix(args.predictions, evaluator.load_task(args.task))
    return evaluator.PredictionMatrix.read(args.predictions)


def cmd_eval_sweep(args) -> int:
    result = evaluator.sweep_boundary(_matrix(args))
    if args.curve:
        Path(args.curve).write_text(result.curve_csv(), encoding="utf-8")
    _emit(result.report.format(args.format))
    return 0


def cmd_eval_score(args) -> int:
    m = _matrix(args)
    expected = None if args.task else _config(args).taxonomy().names
    _emit(evaluator.score(m, args.boundary, expected).format(args.format))
    return 0


def cmd_humaneval_gen(args) -> int:
    cfg = _config(args)
    seed = args.seed if args.seed is not None else int(cfg["seeds"]["humaneval"])
    examples = sorted(dataset.load_dataset(args.dataset), key=lambda e: e.example_id)
    if args.n is not None:
        if not 1 <= args.n <= len(examples):
            raise UsageError(f"--n must lie in [1, {len(examples)}]")
        examples = random.Random(seed).sample(examples, args.n)
    result = humaneval.generate_tasks(examples, cfg.taxonomy(), seed, args.ranked_fraction, args.show_context)
    humaneval.write_tasks(result.tasks, args.tasks, args.answers)
    ranked = sum(t.ranked_block for t in result.tasks)
    if args.format == "table":
        _emit(_table([("tasks", len(result.tasks)), ("ranked", ranked), ("skipped", len(result.skipped))],
                     ["metric", "value"]))
    else:
        _emit(f"tasks={len(result.tasks)} ranked={ranked} skipped={len(result.skipped)}")
    return 0


def cmd_humaneval_score(args) -> int:
    report = humaneval.score(humaneval.read_results(args.results), humaneval.read_answers(args.answers),
                             exclude_neutral=not args.include_neutral, fleiss=args.fleiss)
    for a in report.excluded_annotators:
        log.warning("annotator %s shares no task with another annotator; excluded from kappa", a)
    _emit(report.format(args.format))
    return 0


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--format", choices=("table", "lines"), default="lines")
    common.add_argument("--log-level", default="WARNING")

    p = Parser(prog="emosynth", description="Emotion dataset synthesis and analysis toolkit")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=Parser)

    s = sub.add_parser("ingest", parents=[common], help="build a corpus file from plots")
    s.add_argument("source")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("run", parents=[common], help="run the synthesis stages")
    s.add_argument("--corpus", required=True)
    s.add_argument("--stages", type=_stage_list, default=STAGES)
    s.add_argument("--resume", action="store_true")
    s.add_argument("--overwrite", action="store_true")
    s.add_argument("--run-dir")
    s.add_argument("--sample", type=int)
    s.add_argument("--max-actors", type=int)
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("assemble", parents=[common], help="collect journal records into a dataset")
    s.add_argument("--journal")
    s.add_argument("--run-dir")
    s.add_argument("--out", required=True)
    s.add_argument("--quarantine")
    s.add_argument("--threshold", type=_unit_float)
    s.add_argument("--strict", action="store_true", help="keep labels strictly above the threshold")
    s.set_defaults(func=cmd_assemble)

    s = sub.add_parser("split", parents=[common], help="train/dev/test manifest")
    s.add_argument("dataset")
    s.add_argument("--scheme", choices=sorted(dataset.SCHEMES), default="80-10-10")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--ungrouped", action="store_true")
    s.add_argument("--stratify", action="store_true")
    s.set_defaults(func=cmd_split)

    s = sub.add_parser("stats", parents=[common], help="label distribution statistics")
    s.add_argument("dataset")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("analyze", parents=[common], help="similarity statistics and topic graph")
    s.add_argument("dataset")
    s.add_argument("--pairing", action="append", choices=analytics.PAIRINGS)
    s.add_argument("--sample", type=int, default=10_000)
    s.add_argument("--seed", type=int)
    s.add_argument("--emotion", help="restrict to one primary emotion")
    s.add_argument("--topics", action="store_true")
    s.add_argument("--edge-threshold", type=float)
    s.add_argument("--text-field", default="utterance_orig", choices=analytics.topics.TEXT_FIELDS)
    s.add_argument("--export-dir")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("markers", parents=[common], help="marker words removed by rewriting")
    s.add_argument("dataset")
    s.add_argument("--removal", type=_unit_float)
    s.add_argument("--cooccur", type=_unit_float)
    s.add_argument("--vocabulary", help="whitespace-separated word list to restrict the output")
    s.set_defaults(func=cmd_markers)

    s = sub.add_parser("dedup", parents=[common], help="near-duplicate filter")
    s.add_argument("dataset")
    s.add_argument("--cutoff", type=float)
    s.add_argument("--text-field", default="utterance_orig", choices=analytics.topics.TEXT_FIELDS)
    s.add_argument("--out")
    s.set_defaults(func=cmd_dedup)

    for name, func, help_ in (("eval-sweep", cmd_eval_sweep, "choose the lower boundary on a dev file"),
                              ("eval-score", cmd_eval_score, "score a test file at a boundary")):
        s = sub.add_parser(name, parents=[common], help=help_)
        s.add_argument("predictions")
        s.add_argument("--task", help="task mapping name (isear, emocontext) or YAML path")
        if name == "eval-sweep":
            s.add_argument("--curve", help="write the precision-recall table here")
        else:
            s.add_argument("--boundary", type=_unit_float, required=True)
        s.set_defaults(func=func)

    s = sub.add_parser("humaneval-gen", parents=[common], help="multiple-choice annotation tasks")
    s.add_argument("dataset")
    s.add_argument("--tasks", required=True)
    s.add_argument("--answers", required=True)
    s.add_argument("--n", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--ranked-fraction", type=_unit_float, default=0.2)
    s.add_argument("--show-context", action="store_true")
    s.set_defaults(func=cmd_humaneval_gen)

    s = sub.add_parser("humaneval-score", parents=[common], help="agreement and accuracy of annotations")
    s.add_argument("results")
    s.add_argument("--answers", required=True)
    s.add_argument("--include-neutral", action="store_true")
    s.add_argument("--fleiss", action="store_true")
    s.set_defaults(func=cmd_humaneval_score)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
        format="level=%(levelname)s logger=%(name)s msg=%(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (GatewayError, ProtocolError) as exc:
        log.error("%s", exc)
        return EXIT_GATEWAY
    except (UsageError, EmosynthError, FileNotFoundError, IsADirectoryError, ValueError, KeyError) as exc:
        sys.stderr.write(f"emosynth {args.command}: error: {exc}\n")
        return EXIT_USER
    except KeyboardInterrupt:
        sys.stderr.write("interrupted; completed stage records are in the journal\n")
        return 130


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
