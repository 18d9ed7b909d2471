"""Eval and decode mirrors that go through the command line tool.

Each call lays the inputs out in a private temp directory under fixed
file names, runs `python -m nerkit` there, and parses the JSON that
comes back. Fixed names keep the echoed config deterministic, so a
mirror result dumped with sorted keys is byte-identical to what the
tool itself writes for the same data. A failed run raises BoundError
carrying the tool's exit code and its error payload.
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

from nerkit.errors import ConfigError, MalformedTagging, ManifestError, ToolkitError

from .handles import BoundHandle, decoder_settings, raw_of


class BoundError(Exception):
    """Mirror of a core failure; code matches the tool's exit code."""

    def __init__(self, code, error_type, message, detail=None):
        super().__init__(message)
        self.code = code
        self.error_type = error_type
        self.detail = detail


def code_for_error(exc):
    """(exit code, type name) the tool would report for this exception."""
    if isinstance(exc, MalformedTagging):
        return 2, "MalformedTagging"
    if isinstance(exc, (ManifestError, ConfigError)):
        return 74, type(exc).__name__
    if isinstance(exc, FileNotFoundError):
        return 74, "FileNotFound"
    if isinstance(exc, OSError):
        return 74, "IOError"
    if isinstance(exc, ToolkitError):
        return 1, type(exc).__name__
    return None, None


def _run_cli(argv, cwd):
    proc = subprocess.run(
        [sys.executable, "-m", "nerkit", *argv],
        cwd=cwd,
        capture_output=True,
        text=True,
        timeout=600,
    )
    if proc.returncode == 0:
        return json.loads(proc.stdout)
    try:
        detail = json.loads(proc.stderr)["error"]
    except (ValueError, KeyError):
        raise BoundError(
            proc.returncode, "UsageError", proc.stderr.strip() or "tool failed"
        ) from None
    raise BoundError(
        proc.returncode,
        detail.get("type", "ToolkitError"),
        detail.get("message", proc.stderr.strip()),
        detail=detail,
    )


def _materialize(workdir, name, source):
    """Copy a handle's bytes or a file's bytes to workdir/name."""
    if isinstance(source, BoundHandle):
        data = raw_of(source, source.kind)
    else:
        data = Path(source).read_bytes()
    (workdir / name).write_bytes(data)
    return name


def bind_eval(gt_records, pred_records, config=None):
    """Scoring report for (utt_id, tagged_text) record pairs.

    Identical to running the eval command on manifests holding the same
    records. config keys: tagmap, label_map (handle or path), policy.
    """
    config = dict(config or {})
    with tempfile.TemporaryDirectory(prefix="nkbind-") as tmp:
        workdir = Path(tmp)
        gt_lines = ["utt_id\taudio_ref\ttext\ttagged_text\tmentions_json"]
        gt_lines += [f"{utt_id}\t\t\t{tagged}\t" for utt_id, tagged in gt_records]
        (workdir / "gt.tsv").write_text("\n".join(gt_lines) + "\n", encoding="utf-8")
        pred_lines = [f"{utt_id}\t{tagged}" for utt_id, tagged in pred_records]
        (workdir / "pred.tsv").write_text(
            "".join(line + "\n" for line in pred_lines), encoding="utf-8"
        )
        argv = ["eval", "--gt", "gt.tsv", "--pred", "pred.tsv"]
        if config.get("tagmap") is not None:
            argv += ["--tagmap", _materialize(workdir, "tagmap.cfg", config["tagmap"])]
        if config.get("label_map") is not None:
            argv += [
                "--label-map",
                _materialize(workdir, "label_map.cfg", config["label_map"]),
            ]
        policy = config.get("policy")
        if policy is not None:
            if policy not in ("strict", "recover"):
                raise BoundError(64, "UsageError", f"unknown policy {policy!r}")
            argv.append(f"--{policy}")
        return _run_cli(argv, workdir)


def _write_posteriors(workdir, frames, alphabet):
    rows = [list(map(float, row)) for row in frames]
    if not rows or any(len(row) != len(alphabet) for row in rows):
        raise BoundError(
            1, "ToolkitError",
            f"posterior shape mismatch: {len(rows)} frames for {len(alphabet)} symbols",
        )
    symbols = " ".join("<sp>" if s == " " else s for s in alphabet)
    lines = [f"{len(rows)} {len(alphabet)}", symbols]
    lines += [" ".join(format(value, ".17g") for value in row) for row in rows]
    (workdir / "posteriors.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return "posteriors.txt"


def bind_decode(frames, alphabet, config=None, lm=None, tagmap=None):
    """Decode a T x V posterior matrix exactly as the decode command would.

    The matrix is serialized once into the documented text format; that
    copy is the price of keeping this boundary process-separated.
    """
    settings = decoder_settings(config)
    with tempfile.TemporaryDirectory(prefix="nkbind-") as tmp:
        workdir = Path(tmp)
        argv = ["decode", _write_posteriors(workdir, frames, alphabet)]
        if settings["greedy"]:
            argv.append("--greedy")
        else:
            argv += [
                "--beam", str(settings["beam"]),
                "--alpha", repr(float(settings["alpha"])),
                "--beta", repr(float(settings["beta"])),
                "--nbest", str(settings["nbest"]),
            ]
            if lm is not None:
                argv += ["--lm", _materialize(workdir, "lm.arpa", lm)]
            if tagmap is not None:
                argv += ["--tagmap", _materialize(workdir, "tagmap.cfg", tagmap)]
        return _run_cli(argv, workdir)
