"""Command-line surface: parse, eval, report, decode, train-lm, build-pseudo.

JSON is the canonical report format and is always dumped with sorted keys,
so identical inputs and flags produce byte-identical output; CSV is a flat
projection of the same numbers. Exit codes follow sysexits conventions:
0 success, 2 tagging diagnostics in strict mode, 64 usage, 74 unreadable
or malformed input files, 1 other toolkit errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import shlex
import sys
from fractions import Fraction
from pathlib import Path

from . import __version__
from .alignment import mention_decoding_flags, word_align
from .ctc import beam_decode, greedy_decode, read_posteriors
from .errors import (
    ConfigError,
    DuplicateLabel,
    MalformedTagging,
    ManifestError,
    NoGroundTruthEntities,
    ToolkitError,
)
from .lm import ArpaLm, train_arpa
from .nermetrics import (
    DISCARD,
    LabelMapping,
    map_labels,
    match_tuples,
    micro_prf,
)
from .pipeline import (
    CAPABILITIES,
    CommandBackend,
    MethodRun,
    METHODS,
    MockBackend,
    read_gazetteer,
    read_manifest,
    read_references,
    run_method,
    write_manifest,
)
from .tagformat import TagMap, parse_tagged
from .taxonomy import aggregate, categorize

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_DIAGNOSTICS = 2
EXIT_USAGE = 64
EXIT_IO = 74

_METRIC_ORDER = ("f1", "precision", "recall", "wer", "ne_acc")


class _Parser(argparse.ArgumentParser):
    """argparse with sysexits-style usage failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _default_tagmap_path():
    return Path(__file__).resolve().parent / "data" / "tagmap_fine.cfg"


def _find_config(name):
    """Resolve a config argument: literal path first, then NERKIT_CONFIG."""
    path = Path(name)
    if path.exists():
        return path
    root = os.environ.get("NERKIT_CONFIG")
    if root:
        candidate = Path(root) / name
        if candidate.exists():
            return candidate
    return path


def _load_tagmap(args):
    if args.tagmap:
        return TagMap.from_file(_find_config(args.tagmap))
    return TagMap.from_file(_default_tagmap_path())


def _policy(args):
    return "strict" if args.strict else "recover"


def _num(value):
    if value is None:
        return None
    if isinstance(value, Fraction):
        return float(value)
    return value


def _csv_cell(value):
    if value is None:
        return "n/a"
    if isinstance(value, bool):
        return "true" if value else "false"
    return value


def _dump_json(payload):
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _dump_csv(header, rows):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_csv_cell(cell) for cell in row])
    return buffer.getvalue()


def _emit(args, payload, csv_header, csv_rows):
    if args.format == "json":
        text = _dump_json(payload)
    else:
        text = _dump_csv(csv_header, csv_rows)
    if getattr(args, "output", None):
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _print_error(detail):
    sys.stderr.write(_dump_json({"error": detail}))


def _mention_dict(mention):
    return {
        "phrase": mention.phrase,
        "start_word": mention.start_word,
        "tag": mention.tag,
        "word_count": mention.word_count,
    }


def _diag_dict(diag):
    return {"kind": diag.kind, "tag": diag.tag, "word_index": diag.word_index}


# ----------------------------------------------------------------- eval


def _read_pred_file(path):
    """utt_id<TAB>tagged_text lines; the tagged text may be empty."""
    preds = {}
    with open(path, "r", encoding="utf-8") as fh:
        for number, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if "\t" not in line:
                raise ManifestError(f"{path}:{number}: expected utt_id<TAB>tagged_text")
            utt_id, tagged = line.split("\t", 1)
            if utt_id in preds:
                raise ManifestError(f"{path}:{number}: duplicate utt_id {utt_id}")
            preds[utt_id] = tagged
    return preds


def _apply_mapping(mentions, mapping):
    if mapping is None:
        return list(mentions)
    return [m for m in map_labels(mentions, mapping) if m.tag != DISCARD]


def build_eval_report(gt_manifest, pred_map, tagmap, mapping=None, policy="recover",
                      config_echo=None):
    """Assemble the full evaluation report dict for one gt/pred corpus.

    Strict policy propagates MalformedTagging (annotated with the utt_id);
    recover policy folds repairs into the diagnostics section instead.
    """
    matches = []
    traces = []
    edit_cost = 0
    ref_words = 0
    ne_flags = []
    diagnostics = {}
    gt_count = 0
    pred_count = 0

    def parse_side(utt_id, side, tagged):
        try:
            plain, mentions, diags = parse_tagged(tagged, tagmap, policy=policy)
        except MalformedTagging as exc:
            exc.utt_id = utt_id
            raise
        if diags:
            diagnostics.setdefault(utt_id, {})[side] = [_diag_dict(d) for d in diags]
        return plain, mentions

    for record in gt_manifest:
        if record.tagged_text:
            plain, parsed = parse_side(record.utt_id, "gt", record.tagged_text)
            ref_text = record.text or plain
            gt_mentions = list(record.mentions) or parsed
        else:
            ref_text = record.text
            gt_mentions = list(record.mentions)
        hyp_text, pred_mentions = parse_side(
            record.utt_id, "pred", pred_map.get(record.utt_id, "")
        )
        gt_mentions = _apply_mapping(gt_mentions, mapping)
        pred_mentions = _apply_mapping(pred_mentions, mapping)
        gt_count += len(gt_mentions)
        pred_count += len(pred_mentions)
        matches.append(match_tuples(gt_mentions, pred_mentions))
        alignment = word_align(ref_text.split(), hyp_text.split())
        edit_cost += alignment.cost
        ref_words += len(ref_text.split())
        ne_flags.extend(mention_decoding_flags(ref_text, gt_mentions, hyp_text))
        traces.extend(
            categorize(
                ref_text, gt_mentions, hyp_text, pred_mentions,
                tagmap=tagmap, utt_id=record.utt_id,
            )
        )

    scores = micro_prf(matches)
    wer_value = Fraction(edit_cost, ref_words) if ref_words else None
    ne_value = Fraction(sum(ne_flags), len(ne_flags)) if ne_flags else None
    try:
        categories = aggregate(traces).as_dict()
    except NoGroundTruthEntities:
        categories = None

    return {
        "schema_version": SCHEMA_VERSION,
        "command": "eval",
        "toolkit_version": __version__,
        "config": config_echo or {},
        "utterances": len(gt_manifest),
        "f1": scores.f1,
        "precision": scores.precision,
        "recall": scores.recall,
        "degenerate": scores.degenerate,
        "wer": _num(wer_value),
        "ne_acc": _num(ne_value),
        "counts": {
            "edit_cost": edit_cost,
            "fn": scores.false_negative,
            "fp": scores.false_positive,
            "gt_mentions": gt_count,
            "ne_correct": sum(ne_flags),
            "ne_mentions": len(ne_flags),
            "pred_mentions": pred_count,
            "ref_words": ref_words,
            "tp": scores.true_positive,
        },
        "categories": categories,
        "diagnostics": diagnostics,
        "unmatched_pred_ids": sorted(set(pred_map) - set(gt_manifest.utt_ids)),
    }


def _eval_csv_rows(report):
    rows = [(metric, report[metric]) for metric in _METRIC_ORDER]
    rows.append(("degenerate", report["degenerate"]))
    for key, value in report["counts"].items():
        rows.append((f"count.{key}", value))
    if report["categories"]:
        for category, rate in sorted(report["categories"]["rates"].items()):
            rows.append((f"rate.{category}", rate))
        for category, count in sorted(report["categories"]["counts"].items()):
            rows.append((f"count.{category}", count))
    return rows


def cmd_eval(args):
    tagmap = _load_tagmap(args)
    mapping = (
        LabelMapping.from_file(_find_config(args.label_map))
        if args.label_map
        else None
    )
    gt = read_manifest(args.gt, role="dev")
    preds = _read_pred_file(args.pred)
    config_echo = {
        "gt": str(args.gt),
        "label_map": str(args.label_map) if args.label_map else None,
        "policy": _policy(args),
        "pred": str(args.pred),
        "tagmap": str(args.tagmap) if args.tagmap else "builtin:fine",
    }
    try:
        report = build_eval_report(
            gt, preds, tagmap, mapping, policy=_policy(args), config_echo=config_echo
        )
    except MalformedTagging as exc:
        _print_error(
            {
                "kind": exc.kind,
                "type": "MalformedTagging",
                "utt_id": getattr(exc, "utt_id", ""),
                "word_index": exc.word_index,
            }
        )
        return EXIT_DIAGNOSTICS
    _emit(args, report, ("metric", "value"), _eval_csv_rows(report))
    return EXIT_OK


# ----------------------------------------------------------------- report


def cmd_report(args):
    seen = set()
    rows = []
    for item in args.item:
        parts = item.split(":", 2)
        if len(parts) != 3:
            raise ToolkitError(f"--item needs METHOD:DATA_TYPE:PATH, got {item!r}")
        method, data_type, path = parts
        label = (method, data_type)
        if label in seen:
            raise DuplicateLabel(f"duplicate report label {method}:{data_type}")
        seen.add(label)
        try:
            with open(path, "r", encoding="utf-8") as fh:
                report = json.load(fh)
        except ValueError as exc:
            raise ManifestError(f"{path}: not a JSON report: {exc}") from None
        for metric in _METRIC_ORDER:
            rows.append(
                {
                    "data_type": data_type,
                    "method": method,
                    "metric": metric,
                    "value": report.get(metric),
                }
            )
        categories = report.get("categories") or {}
        for category, rate in sorted(categories.get("rates", {}).items()):
            rows.append(
                {
                    "data_type": data_type,
                    "method": method,
                    "metric": f"rate.{category}",
                    "value": rate,
                }
            )
    payload = {
        "command": "report",
        "rows": rows,
        "schema_version": SCHEMA_VERSION,
        "toolkit_version": __version__,
    }
    csv_rows = [
        (row["method"], row["data_type"], row["metric"], row["value"]) for row in rows
    ]
    _emit(args, payload, ("method", "data_type", "metric", "value"), csv_rows)
    return EXIT_OK


# ----------------------------------------------------------------- parse


def cmd_parse(args):
    tagmap = _load_tagmap(args)
    with open(args.input, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    out_lines = []
    for number, line in enumerate(lines, start=1):
        try:
            plain, mentions, diags = parse_tagged(line, tagmap, policy=_policy(args))
        except MalformedTagging as exc:
            _print_error(
                {
                    "kind": exc.kind,
                    "line": number,
                    "type": "MalformedTagging",
                    "word_index": exc.word_index,
                }
            )
            return EXIT_DIAGNOSTICS
        out_lines.append(
            {
                "diagnostics": [_diag_dict(d) for d in diags],
                "line": number,
                "mentions": [_mention_dict(m) for m in mentions],
                "plain_text": plain,
            }
        )
    payload = {
        "command": "parse",
        "lines": out_lines,
        "schema_version": SCHEMA_VERSION,
        "toolkit_version": __version__,
    }
    csv_rows = [
        (entry["line"], m["tag"], m["phrase"], m["start_word"], m["word_count"])
        for entry in out_lines
        for m in entry["mentions"]
    ]
    _emit(args, payload, ("line", "tag", "phrase", "start_word", "word_count"), csv_rows)
    return EXIT_OK


# ----------------------------------------------------------------- decode


def cmd_decode(args):
    post = read_posteriors(args.posteriors)
    if args.greedy:
        payload = {
            "command": "decode",
            "mode": "greedy",
            "schema_version": SCHEMA_VERSION,
            "text": greedy_decode(post),
            "toolkit_version": __version__,
        }
        _emit(args, payload, ("rank", "score", "text"), [(1, None, payload["text"])])
        return EXIT_OK
    lm = ArpaLm.read_arpa(args.lm) if args.lm else None
    tagmap = TagMap.from_file(_find_config(args.tagmap)) if args.tagmap else None
    results = beam_decode(
        post,
        args.beam,
        lm=lm,
        alpha=args.alpha,
        beta=args.beta,
        tagmap=tagmap,
        nbest=args.nbest,
    )
    nbest = [
        {"rank": rank, "score": score, "text": text}
        for rank, (text, score) in enumerate(results, start=1)
        if math.isfinite(score)
    ]
    payload = {
        "command": "decode",
        "mode": "beam",
        "nbest": nbest,
        "params": {
            "alpha": args.alpha,
            "beam": args.beam,
            "beta": args.beta,
            "lm": str(args.lm) if args.lm else None,
        },
        "schema_version": SCHEMA_VERSION,
        "toolkit_version": __version__,
    }
    csv_rows = [(e["rank"], e["score"], e["text"]) for e in nbest]
    _emit(args, payload, ("rank", "score", "text"), csv_rows)
    return EXIT_OK


# ----------------------------------------------------------------- train-lm


def cmd_train_lm(args):
    corpus = []
    for path in args.corpus:
        with open(path, "r", encoding="utf-8") as fh:
            corpus.extend(line for line in fh.read().splitlines() if line.strip())
    lm = train_arpa(
        corpus, order=args.order, smoothing=args.smoothing,
        closed_vocab=args.closed_vocab,
    )
    lm.write_arpa(args.arpa)
    payload = {
        "command": "train_lm",
        "ngram_counts": {str(k): len(lm.entries(k)) for k in range(1, lm.order + 1)},
        "order": lm.order,
        "schema_version": SCHEMA_VERSION,
        "sentences": len(corpus),
        "smoothing": args.smoothing,
        "toolkit_version": __version__,
        "vocab_size": lm.vocab_size,
    }
    csv_rows = [
        ("order", lm.order),
        ("vocab_size", lm.vocab_size),
        ("sentences", len(corpus)),
    ] + [
        (f"ngrams.{k}", len(lm.entries(k))) for k in range(1, lm.order + 1)
    ]
    _emit(args, payload, ("key", "value"), csv_rows)
    return EXIT_OK


# ----------------------------------------------------------------- build-pseudo


def _noise_triple(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("noise must be sub,del,ins")
    try:
        return tuple(float(part) for part in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad noise rates {text!r}") from None


def cmd_build_pseudo(args):
    tagmap = _load_tagmap(args)
    manifest = read_manifest(args.input, role="ext")
    ftune = read_manifest(args.ftune, role="fine-tune") if args.ftune else None
    if args.backend_cmd:
        capabilities = tuple(args.capabilities.split(",")) if args.capabilities else CAPABILITIES
        backend = CommandBackend(shlex.split(args.backend_cmd), capabilities)
    else:
        backend = MockBackend(
            noise=args.noise,
            seed=args.seed,
            references=read_references(args.mock_refs) if args.mock_refs else {},
            gazetteer=read_gazetteer(args.gazetteer) if args.gazetteer else (),
            tagmap=tagmap,
        )
    backends = {capability: backend for capability in backend.capabilities}
    result = run_method(
        MethodRun(args.method, manifest, backends, tagmap=tagmap,
                  ftune=ftune, jobs=args.jobs)
    )
    write_manifest(result.pseudo_manifest, args.out_manifest)
    if args.out_lm:
        Path(args.out_lm).write_text(
            "".join(line + "\n" for line in result.lm_corpus), encoding="utf-8"
        )
    payload = dict(result.provenance)
    payload["command"] = "build_pseudo"
    payload["toolkit_version"] = __version__
    if args.out_prov:
        Path(args.out_prov).write_text(_dump_json(payload), encoding="utf-8")
    csv_rows = [
        ("method", payload["method"]),
        ("data_type", payload["data_type"]),
        ("input_records", payload["input_records"]),
        ("output_records", payload["output_records"]),
        ("dropped_records", payload["dropped_records"]),
        ("lm_lines", payload["lm_lines"]),
    ]
    _emit(args, payload, ("key", "value"), csv_rows)
    return EXIT_OK


# ----------------------------------------------------------------- parser


def build_parser():
    parser = _Parser(prog="nerkit", description=__doc__)
    parser.add_argument("--version", action="version", version=f"nerkit {__version__}")
    sub = parser.add_subparsers(dest="subcommand", metavar="command")

    out_flags = _Parser(add_help=False)
    out_flags.add_argument("-o", "--output", help="write the report here instead of stdout")
    out_flags.add_argument(
        "--format", choices=("json", "csv"), default="json",
        help="report format (json is canonical)",
    )

    tag_flags = _Parser(add_help=False)
    tag_flags.add_argument("--tagmap", help="tag map config (default: built-in fine set)")
    mode = tag_flags.add_mutually_exclusive_group()
    mode.add_argument("--strict", action="store_true",
                      help="fail on malformed tagging")
    mode.add_argument("--recover", action="store_true",
                      help="repair malformed tagging and report diagnostics (default)")

    p_parse = sub.add_parser("parse", parents=[out_flags, tag_flags],
                             help="parse tagged transcripts, one per line")
    p_parse.add_argument("input")
    p_parse.set_defaults(func=cmd_parse)

    p_eval = sub.add_parser("eval", parents=[out_flags, tag_flags],
                            help="score predicted tagged transcripts against a manifest")
    p_eval.add_argument("--gt", required=True, help="ground-truth manifest TSV")
    p_eval.add_argument("--pred", required=True, help="utt_id<TAB>tagged_text file")
    p_eval.add_argument("--label-map", help="fine-to-combined label map config")
    p_eval.set_defaults(func=cmd_eval)

    p_report = sub.add_parser("report", parents=[out_flags],
                              help="flatten labeled eval reports into grouped rows")
    p_report.add_argument(
        "--item", action="append", required=True,
        help="METHOD:DATA_TYPE:PATH, repeatable, labels must be unique",
    )
    p_report.set_defaults(func=cmd_report)

    p_decode = sub.add_parser("decode", parents=[out_flags, tag_flags],
                              help="decode a posterior matrix file")
    p_decode.add_argument("posteriors")
    p_decode.add_argument("--greedy", action="store_true", help="best path instead of beam")
    p_decode.add_argument("--beam", type=int, default=500)
    p_decode.add_argument("--alpha", type=float, default=1.0, help="LM weight")
    p_decode.add_argument("--beta", type=float, default=0.5, help="word insertion bonus")
    p_decode.add_argument("--lm", help="ARPA LM for shallow fusion")
    p_decode.add_argument("--nbest", type=int, default=10)
    p_decode.set_defaults(func=cmd_decode)

    p_lm = sub.add_parser("train-lm", parents=[out_flags],
                          help="train a back-off n-gram LM and write ARPA")
    p_lm.add_argument("corpus", nargs="+", help="text files, one sentence per line")
    p_lm.add_argument("--arpa", required=True, help="ARPA output path")
    p_lm.add_argument("--order", type=int, default=4)
    p_lm.add_argument("--smoothing", choices=("kneser_ney", "witten_bell"),
                      default="kneser_ney")
    p_lm.add_argument("--closed-vocab", action="store_true")
    p_lm.set_defaults(func=cmd_train_lm)

    p_pseudo = sub.add_parser("build-pseudo", parents=[out_flags, tag_flags],
                              help="run a pseudo-labeling method over a manifest")
    p_pseudo.add_argument("--method", required=True, choices=METHODS)
    p_pseudo.add_argument("--input", required=True, help="external-data manifest TSV")
    p_pseudo.add_argument("--ftune", help="labeled manifest merged in, labels win")
    p_pseudo.add_argument("--out-manifest", required=True)
    p_pseudo.add_argument("--out-lm", help="write the LM corpus here")
    p_pseudo.add_argument("--out-prov", help="write provenance JSON here")
    p_pseudo.add_argument("--backend-cmd", help="external NDJSON backend command")
    p_pseudo.add_argument("--capabilities",
                          help="comma list the command backend supports")
    p_pseudo.add_argument("--mock-refs", help="audio_ref<TAB>text hidden references")
    p_pseudo.add_argument("--gazetteer", help="phrase<TAB>TAG entities for mock tagging")
    p_pseudo.add_argument("--noise", type=_noise_triple, default=(0.0, 0.0, 0.0),
                          help="mock sub,del,ins rates")
    p_pseudo.add_argument("--seed", type=int, default=0)
    p_pseudo.add_argument("--jobs", type=int, default=1)
    p_pseudo.set_defaults(func=cmd_build_pseudo)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.error("a command is required")
    try:
        return args.func(args)
    except (ManifestError, ConfigError) as exc:
        _print_error({"message": str(exc), "type": type(exc).__name__})
        return EXIT_IO
    except FileNotFoundError as exc:
        _print_error({"message": str(exc), "type": "FileNotFound"})
        return EXIT_IO
    except OSError as exc:
        _print_error({"message": str(exc), "type": "IOError"})
        return EXIT_IO
    except ToolkitError as exc:
        _print_error({"message": str(exc), "type": type(exc).__name__})
        return 1
