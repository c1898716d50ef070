"""Command-line entry point: ``phonofix <group> <action> ...``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import multiprocessing
import os
import sys
from typing import List, Optional, Sequence

from .align import ConfusionModel, channel_logprob, estimate_confusion
from .decoder import DecodeError, decode_mbest
from .graph import GraphError, build_graph
from .lexicon import LexiconError, OOVError, load_lexicon
from .metrics import corpus_wer, oracle_wer, wer
from .ngram import ARPAFormatError, load_arpa, save_arpa, train_ngram
from .records import DataError, Hypothesis, UtteranceRecord, combine_kbest, dumps_records, read_records, record_to_json
from .rescorer.features import GROUPS, FeatureContext, extract_features
from .rescorer.model import RescorerModel, TrainConfig, TrainingError, TrainingExample, best_index, train_mwer

OUTPUT_ENV = "PHONOFIX_OUTPUT_DIR"
DEFAULT_OUTPUT = "phonofix-out"

log = logging.getLogger("phonofix")

DATA_ERRORS = (LexiconError, OOVError, ARPAFormatError, DataError, GraphError, DecodeError, TrainingError,
               json.JSONDecodeError, OSError, KeyError, ValueError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# --- helpers -------------------------------------------------------------------


def _read_lines(path: str) -> List[str]:
    if path == "-":
        return sys.stdin.read().splitlines()
    with open(path, encoding="utf-8") as f:
        return f.read().splitlines()


def _emit(text: str, path: Optional[str]) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)


def _read_pairs(path: str):
    """``observed<TAB>reference`` phone sequences, one pair per line."""
    pairs = []
    for lineno, line in enumerate(_read_lines(path), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError("expected 'observed<TAB>reference'", path, lineno)
        pairs.append((tuple(parts[0].split()), tuple(parts[1].split())))
    return pairs


def _context(args) -> FeatureContext:
    lex = load_lexicon(args.lexicon)
    cm = ConfusionModel.load(args.confusion)
    return FeatureContext(lex, cm, [load_arpa(p) for p in args.lm])


def _kbest(rec: UtteranceRecord, n: int) -> List[Hypothesis]:
    if rec.kbest is None:
        raise DataError(f"record {rec.id!r} has no kbest; run 'ptt decode' first")
    return rec.kbest


def _examples(records: Sequence[UtteranceRecord], ctx: FeatureContext, n: int):
    out = []
    for rec in records:
        if rec.reference is None:
            raise DataError(f"record {rec.id!r} has no reference")
        hyps = _kbest(rec, n)
        out.append((rec, hyps, extract_features(hyps, rec.obs, ctx), [wer(h.words, rec.reference) for h in hyps]))
    return out


def _train_config(args, mask=()) -> TrainConfig:
    return TrainConfig(lr=args.lr, batch_size=args.batch_size, epochs=args.epochs, seed=args.seed, l2=args.l2,
                       mask=tuple(mask))


# --- subcommands --------------------------------------------------------------


def cmd_lexicon_validate(args) -> int:
    lex = load_lexicon(args.lexicon)
    variants = sum(len(v) for _, v in lex.items())
    print(f"ok\twords={len(lex)}\tvariants={variants}\tphones={len(lex.inventory)}")
    return 0


def cmd_lm_train(args) -> int:
    corpus = [line for line in _read_lines(args.corpus) if line.strip()]
    lm = train_ngram(corpus, order=args.order)
    if args.output in (None, "-"):
        from .ngram import format_arpa

        sys.stdout.write(format_arpa(lm))
    else:
        save_arpa(lm, args.output)
    return 0


def cmd_lm_score(args) -> int:
    lm = load_arpa(args.lm)
    out = []
    for line in _read_lines(args.text):
        out.append(f"{lm.sequence_logprob(line.split())!r}\t{line}\n")
    _emit("".join(out), args.output)
    return 0


def cmd_confusion_estimate(args) -> int:
    inventory = list(load_lexicon(args.lexicon).inventory) if args.lexicon else None
    cm = estimate_confusion(_read_pairs(args.pairs), inventory=inventory, floor=args.floor)
    _emit(cm.to_json(), args.output)
    return 0


def cmd_confusion_apply(args) -> int:
    cm = ConfusionModel.load(args.confusion)
    out = [f"{channel_logprob(cm, obs, ref)!r}\n" for obs, ref in _read_pairs(args.pairs)]
    _emit("".join(out), args.output)
    return 0


def _graph(args):
    lex, lm = load_lexicon(args.lexicon), load_arpa(args.lm)
    words = sorted(w for w in lm.vocab if w in lex) if args.lm_vocab_only else None
    return build_graph(lex, lm, order=args.order, words=words)


def cmd_graph_build(args) -> int:
    g = _graph(args)
    print(f"nodes={len(g.nodes)}\tarcs={g.num_arcs}\tfinals={len(g.finals)}\twords={len(g.words)}")
    if args.output:
        _emit(g.dump(), args.output)
    return 0


def cmd_graph_dump(args) -> int:
    _emit(_graph(args).dump(), args.output)
    return 0


_DECODE_STATE = {}


def _decode_one(rec: UtteranceRecord) -> UtteranceRecord:
    g, cm, a = _DECODE_STATE["graph"], _DECODE_STATE["cm"], _DECODE_STATE["args"]
    alts = decode_mbest(g, cm, rec.obs, beam=a.beam, m=a.m, max_consecutive_deletions=a.max_deletions)
    rec.kbest = combine_kbest(rec.asr_nbest, alts, n=a.n, m=a.m)
    return rec


def cmd_ptt_decode(args) -> int:
    records = read_records(args.input)
    _DECODE_STATE.update(graph=_graph(args), cm=ConfusionModel.load(args.confusion), args=args)
    if args.jobs > 1 and len(records) > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(args.jobs) as pool:
            out = pool.map(_decode_one, records, chunksize=max(1, len(records) // (4 * args.jobs)))
    else:
        out = [_decode_one(r) for r in records]
    _emit(dumps_records(out), args.output)
    return 0


def cmd_rescore_train(args) -> int:
    ctx = _context(args)
    data = _examples(read_records(args.input), ctx, args.n)
    model = train_mwer([TrainingExample(f, w) for _, _, f, w in data], _train_config(args, args.mask or ()))
    _emit(model.to_json(), args.output)
    return 0


def cmd_rescore_apply(args) -> int:
    ctx = _context(args)
    model = RescorerModel.load(args.model)
    lines = []
    for rec in read_records(args.input):
        hyps = _kbest(rec, 1)
        chosen = hyps[best_index(model.scores(extract_features(hyps, rec.obs, ctx)).tolist())]
        doc = record_to_json(rec)
        doc["output"] = " ".join(chosen.words)
        doc["output_source"] = chosen.source
        lines.append(json.dumps(doc, ensure_ascii=False) + "\n")
    _emit("".join(lines), args.output)
    return 0


def cmd_rescore_ablate(args) -> int:
    ctx = _context(args)
    train = _examples(read_records(args.input), ctx, 1)
    test = _examples(read_records(args.test), ctx, 1)
    masks = [("full", ())] + [(f"-{g}", (g,)) for g in GROUPS] + [("-lm", ("interp-lm", "component-lm"))]
    rows = ["mask\twer\n"]
    for name, mask in masks:
        model = train_mwer([TrainingExample(f, w) for _, _, f, w in train], _train_config(args, mask))
        chosen = [h[best_index(model.scores(f).tolist())].words for _, h, f, _ in test]
        rows.append(f"{name}\t{corpus_wer(zip(chosen, (r.reference for r, _, _, _ in test))):.4f}\n")
    _emit("".join(rows), args.output)
    return 0


def cmd_evaluate(args) -> int:
    if args.kbest:
        recs = read_records(args.kbest)
        missing = [r.id for r in recs if r.reference is None or r.kbest is None]
        if missing:
            raise DataError(f"record {missing[0]!r} needs reference and kbest", args.kbest)
        base = corpus_wer((r.kbest[0].words, r.reference) for r in recs)
        orc = oracle_wer(([h.words for h in r.kbest], r.reference) for r in recs)
        _emit(f"WER {base:.4f}\nORACLE {orc:.4f}\nUTTERANCES {len(recs)}\n", args.output)
        return 0
    if not (args.hyp and args.ref):
        raise UsageError("evaluate needs --hyp and --ref, or --kbest")
    hyps, refs = _read_lines(args.hyp), _read_lines(args.ref)
    if len(hyps) != len(refs):
        raise DataError(f"{len(hyps)} hypotheses for {len(refs)} references", args.hyp)
    score = corpus_wer((h.split(), r.split()) for h, r in zip(hyps, refs))
    _emit(f"WER {score:.4f}\nUTTERANCES {len(refs)}\n", args.output)
    return 0


def _set_override(cfg: dict, item: str) -> None:
    key, sep, value = item.partition("=")
    if not sep:
        raise UsageError(f"--set expects key=value, got {item!r}")
    target = cfg
    parts = key.split(".")
    for p in parts[:-1]:
        if p not in target or not isinstance(target[p], dict):
            raise UsageError(f"unknown config key {key!r}")
        target = target[p]
    if parts[-1] not in target:
        raise UsageError(f"unknown config key {key!r}")
    try:
        target[parts[-1]] = json.loads(value)
    except json.JSONDecodeError:
        target[parts[-1]] = value


def cmd_simulate(args) -> int:
    from .sim.benchmark import aggregate, report_json, report_table, run_benchmark
    from .sim.scenario import ScenarioConfig

    base = ScenarioConfig().to_dict()
    if args.config:
        with open(args.config, encoding="utf-8") as f:
            base.update(json.load(f))
    for item in args.set or ():
        _set_override(base, item)
    out = args.out or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT
    seeds = [args.seed + i for i in range(args.seeds)]
    reports = []
    for seed in seeds:
        cfg = ScenarioConfig.from_dict({**base, "seed": seed})
        log.info("config %s", cfg.to_json())
        target = out if len(seeds) == 1 else os.path.join(out, f"seed-{seed}")
        res = run_benchmark(cfg, out_dir=target)
        reports.append(res.report)
        sys.stdout.write(report_table(res.report))
        log.info("seed %d runtime %.1fs", seed, res.runtime)
    if len(seeds) > 1:
        summary = aggregate(reports)
        with open(os.path.join(out, "summary.json"), "w", encoding="utf-8", newline="\n") as f:
            f.write(report_json(summary))
        sys.stdout.write(report_json(summary))
    return 0


# --- parser ---------------------------------------------------------------------


def _add_decode_flags(p) -> None:
    p.add_argument("--lexicon", required=True)
    p.add_argument("--lm", required=True, help="ARPA LM used as the decoding graph's G")
    p.add_argument("--order", type=int, default=None)
    p.add_argument("--lm-vocab-only", action="store_true", help="restrict the graph to words the LM has seen")


def _add_feature_flags(p) -> None:
    p.add_argument("--lexicon", required=True)
    p.add_argument("--confusion", required=True)
    p.add_argument("--lm", action="append", required=True, help="component LM (repeat per component)")


def _add_train_flags(p) -> None:
    d = TrainConfig()
    p.add_argument("--lr", type=float, default=d.lr)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--l2", type=float, default=d.l2)
    p.add_argument("--seed", type=int, default=d.seed)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="phonofix", description="Phonetic correction of voice-search ASR output.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="group", required=True, parser_class=_Parser)

    g = sub.add_parser("lexicon").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = g.add_parser("validate")
    p.add_argument("lexicon")
    p.set_defaults(func=cmd_lexicon_validate)

    g = sub.add_parser("lm").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = g.add_parser("train")
    p.add_argument("corpus")
    p.add_argument("-o", "--output")
    p.add_argument("--order", type=int, default=2)
    p.set_defaults(func=cmd_lm_train)
    p = g.add_parser("score")
    p.add_argument("lm")
    p.add_argument("text")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_lm_score)

    g = sub.add_parser("confusion").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = g.add_parser("estimate")
    p.add_argument("pairs", help="observed<TAB>reference per line")
    p.add_argument("--lexicon")
    p.add_argument("--floor", type=float, default=1e-6)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_confusion_estimate)
    p = g.add_parser("apply")
    p.add_argument("confusion")
    p.add_argument("pairs")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_confusion_apply)

    g = sub.add_parser("graph").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = g.add_parser("build")
    _add_decode_flags(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_graph_build)
    p = g.add_parser("dump")
    _add_decode_flags(p)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_graph_dump)

    g = sub.add_parser("ptt").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = g.add_parser("decode")
    _add_decode_flags(p)
    p.add_argument("--confusion", required=True)
    p.add_argument("input")
    p.add_argument("-o", "--output")
    p.add_argument("--beam", type=int, default=15)
    p.add_argument("--m", type=int, default=10)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--max-deletions", type=int, default=5)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_ptt_decode)

    g = sub.add_parser("rescore").add_subparsers(dest="action", required=True, parser_class=_Parser)
    p = g.add_parser("train")
    _add_feature_flags(p)
    _add_train_flags(p)
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--mask", action="append", choices=GROUPS)
    p.add_argument("input")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_rescore_train)
    p = g.add_parser("apply")
    _add_feature_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("input")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_rescore_apply)
    p = g.add_parser("ablate")
    _add_feature_flags(p)
    _add_train_flags(p)
    p.add_argument("input", help="training records")
    p.add_argument("--test", required=True)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_rescore_ablate)

    p = sub.add_parser("evaluate")
    p.add_argument("--hyp")
    p.add_argument("--ref")
    p.add_argument("--kbest", help="JSONL records with kbest and reference")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    p.add_argument("--config", help="JSON file with ScenarioConfig overrides")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
    p.set_defaults(func=cmd_simulate)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    resolved = {k: v for k, v in vars(args).items() if k != "func"}
    print(f"phonofix: config {json.dumps(resolved, sort_keys=True)}", file=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"phonofix: {exc}", file=sys.stderr)
        return 1
    except BrokenPipeError:
        # reader went away (e.g. piped into head); not an error
        sys.stdout = None
        return 0
    except DATA_ERRORS as exc:
        print(f"phonofix: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
