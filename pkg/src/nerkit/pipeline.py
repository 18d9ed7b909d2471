"""Pseudo-labeling methods over pluggable labeling backends.

Seven dataset-to-dataset transformations turn an external manifest into a
pseudo-labeled training manifest plus, for the methods that feed a decoding
LM, a corpus of tagged texts. Labeling work is delegated to backends typed
by capability (transcribe, tag_text, e2e_ner); a deterministic mock backend
stands in for the neural models at desk scale, and a command backend wraps
any external process speaking newline-delimited JSON.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import random
import subprocess
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone

from .errors import (
    BackendFailure,
    IncompatibleMethod,
    ManifestError,
    ToolkitError,
)
from .tagformat import EntityMention, encode_tagged, parse_tagged

log = logging.getLogger("nerkit.pipeline")

UNLABELED_SPEECH = "Un-Sp"
UNLABELED_TEXT = "Un-Txt"
TRANSCRIBED_SPEECH = "Sp-Txt"
MIXED = "mixed"

TRANSCRIBE = "transcribe"
TAG_TEXT = "tag_text"
E2E_NER = "e2e_ner"
CAPABILITIES = (TRANSCRIBE, TAG_TEXT, E2E_NER)

# method: (required data type, backend capabilities in invocation order,
#          whether tagged outputs feed an LM corpus)
_METHOD_TABLE = {
    "SelfTrain-ASR": (UNLABELED_SPEECH, (TRANSCRIBE,), False),
    "SelfTrain-txtNER": (UNLABELED_TEXT, (TAG_TEXT,), False),
    "Pre-ASR": (TRANSCRIBED_SPEECH, (), False),
    "SelfTrain-E2E": (UNLABELED_SPEECH, (E2E_NER,), True),
    "Distill-Pipeline": (UNLABELED_SPEECH, (TRANSCRIBE, TAG_TEXT), True),
    "Distill-txtNER-lm": (UNLABELED_TEXT, (TAG_TEXT,), True),
    "Distill-txtNER": (TRANSCRIBED_SPEECH, (TAG_TEXT,), True),
}
METHODS = tuple(_METHOD_TABLE)
DATA_TYPES = (UNLABELED_SPEECH, UNLABELED_TEXT, TRANSCRIBED_SPEECH)

MANIFEST_HEADER = ("utt_id", "audio_ref", "text", "tagged_text", "mentions_json")

_BATCH = 64


@dataclasses.dataclass(frozen=True)
class ManifestRecord:
    utt_id: str
    audio_ref: str = ""
    text: str = ""
    tagged_text: str = ""
    mentions: tuple = ()

    def __post_init__(self):
        if not self.utt_id:
            raise ManifestError("record without utt_id")
        if not self.audio_ref and not self.text and not self.tagged_text:
            raise ManifestError(f"{self.utt_id}: needs audio_ref or text")
        if self.mentions and not self.text:
            raise ManifestError(f"{self.utt_id}: mentions without text")
        words = self.text.split()
        for mention in self.mentions:
            got = " ".join(words[mention.start_word : mention.end_word])
            if got != mention.phrase:
                raise ManifestError(
                    f"{self.utt_id}: mention {mention.phrase!r} does not match "
                    f"text words {got!r}"
                )


class Manifest:
    """Ordered records with unique utt_ids plus a split role marker."""

    def __init__(self, records, role="ext"):
        self.records = tuple(records)
        self.role = role
        seen = set()
        for record in self.records:
            if record.utt_id in seen:
                raise ManifestError(f"duplicate utt_id {record.utt_id}")
            seen.add(record.utt_id)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __eq__(self, other):
        return (
            isinstance(other, Manifest)
            and self.records == other.records
            and self.role == other.role
        )

    @property
    def utt_ids(self):
        return tuple(record.utt_id for record in self.records)

    @property
    def data_type(self):
        kinds = set()
        for record in self.records:
            if record.audio_ref and record.text:
                kinds.add(TRANSCRIBED_SPEECH)
            elif record.audio_ref:
                kinds.add(UNLABELED_SPEECH)
            else:
                kinds.add(UNLABELED_TEXT)
        if len(kinds) == 1:
            return kinds.pop()
        return MIXED


def _mentions_to_json(mentions):
    if not mentions:
        return ""
    payload = [
        {
            "phrase": m.phrase,
            "start_word": m.start_word,
            "tag": m.tag,
            "word_count": m.word_count,
        }
        for m in mentions
    ]
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def _mentions_from_json(blob, utt_id):
    if not blob:
        return ()
    try:
        payload = json.loads(blob)
        return tuple(
            EntityMention(
                item["tag"], item["phrase"], item["start_word"], item["word_count"]
            )
            for item in payload
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise ManifestError(f"{utt_id}: bad mentions_json: {exc}") from None


def write_manifest(manifest, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(MANIFEST_HEADER) + "\n")
        for record in manifest:
            fields = (
                record.utt_id,
                record.audio_ref,
                record.text,
                record.tagged_text,
                _mentions_to_json(record.mentions),
            )
            for field in fields:
                if "\t" in field or "\n" in field:
                    raise ManifestError(
                        f"{record.utt_id}: field contains a tab or newline"
                    )
            fh.write("\t".join(fields) + "\n")


def read_manifest(path, role="ext"):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or tuple(lines[0].split("\t")) != MANIFEST_HEADER:
        raise ManifestError(f"{path}: missing or wrong manifest header")
    records = []
    for number, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != len(MANIFEST_HEADER):
            raise ManifestError(f"{path}:{number}: expected 5 fields, got {len(fields)}")
        utt_id, audio_ref, text, tagged_text, mentions_json = fields
        records.append(
            ManifestRecord(
                utt_id,
                audio_ref,
                text,
                tagged_text,
                _mentions_from_json(mentions_json, utt_id),
            )
        )
    return Manifest(records, role=role)


# ------------------------------------------------------------- backends


class MockBackend:
    """Deterministic stand-in for the neural labeling models.

    transcribe looks the hidden reference text up by audio_ref and pushes
    it through a single-roll noise channel (substitute, delete, or insert,
    mutually exclusive per word). tag_text marks entities by greedy
    longest-match against a gazetteer of (phrase, tag) pairs and returns
    tagged text. e2e_ner composes the two. Outputs depend only on
    (seed, utt_id, payload), never on invocation order.
    """

    def __init__(
        self,
        capabilities=CAPABILITIES,
        noise=(0.0, 0.0, 0.0),
        seed=0,
        references=None,
        gazetteer=(),
        tagmap=None,
        lexicon=None,
    ):
        sub, dele, ins = noise
        for rate in noise:
            if not 0.0 <= rate < 1.0:
                raise ToolkitError(f"noise rate {rate} outside [0, 1)")
        if sub + dele + ins >= 1.0:
            raise ToolkitError("noise rates must sum below 1")
        self.capabilities = frozenset(capabilities)
        self.noise = (sub, dele, ins)
        self.seed = seed
        self.references = dict(references or {})
        # longest phrases first so multiword entries win over their prefixes
        self.gazetteer = tuple(
            sorted(gazetteer, key=lambda pair: (-len(pair[0].split()), pair[0]))
        )
        self.tagmap = tagmap
        if lexicon is None:
            pool = set()
            for text in self.references.values():
                pool.update(text.split())
            lexicon = sorted(pool) or ["yes", "no"]
        if len(lexicon) < 2:
            lexicon = list(lexicon) + ["no"]
        self.lexicon = tuple(lexicon)
        self.identity = f"mock(seed={seed},noise={sub},{dele},{ins})"

    def _perturb(self, rng, words):
        sub, dele, ins = self.noise
        out = []
        for word in words:
            roll = rng.random()
            if roll < sub:
                out.append(self._other_word(rng, word))
            elif roll < sub + dele:
                continue
            elif roll < sub + dele + ins:
                out.append(word)
                out.append(rng.choice(self.lexicon))
            else:
                out.append(word)
        return " ".join(out)

    def _other_word(self, rng, word):
        pick = rng.choice(self.lexicon)
        if pick == word:
            pick = self.lexicon[(self.lexicon.index(pick) + 1) % len(self.lexicon)]
        return pick

    def _tag(self, text):
        if self.tagmap is None:
            raise BackendFailure("mock tag_text needs a tagmap")
        words = text.split()
        mentions = []
        i = 0
        while i < len(words):
            hit = None
            for phrase, tag in self.gazetteer:
                phrase_words = phrase.split()
                if words[i : i + len(phrase_words)] == phrase_words:
                    hit = EntityMention(tag, phrase, i, len(phrase_words))
                    break
            if hit is not None:
                mentions.append(hit)
                i = hit.end_word
            else:
                i += 1
        return encode_tagged(text, mentions, self.tagmap)

    def run(self, capability, requests):
        if capability not in self.capabilities:
            raise BackendFailure(f"mock backend lacks capability {capability}")
        results = {}
        for request_id, payload in requests:
            rng = random.Random(f"{self.seed}:{request_id}")
            if capability == TRANSCRIBE:
                reference = self.references.get(payload)
                if reference is None:
                    continue
                results[request_id] = self._perturb(rng, reference.split())
            elif capability == TAG_TEXT:
                results[request_id] = self._tag(payload)
            else:
                reference = self.references.get(payload)
                if reference is None:
                    continue
                results[request_id] = self._tag(self._perturb(rng, reference.split()))
        return results


def mock_backend(capability, noise=(0.0, 0.0, 0.0), seed=0, **kwargs):
    """Backend exposing a single capability; see MockBackend for the rest."""
    if capability not in CAPABILITIES:
        raise ToolkitError(f"unknown capability {capability!r}")
    return MockBackend(capabilities=(capability,), noise=noise, seed=seed, **kwargs)


class CommandBackend:
    """External labeling process speaking newline-delimited JSON.

    Each batch spawns the command once, writes one {"id", "capability",
    "in"} object per line to stdin, and expects one {"id", "out", "ok"}
    object per line on stdout. Records that come back with ok false, or
    not at all, are dropped by the caller; a process that fails outright
    raises BackendFailure.
    """

    def __init__(self, argv, capabilities, identity=None):
        if not argv:
            raise ToolkitError("command backend needs a command")
        self.argv = tuple(argv)
        self.capabilities = frozenset(capabilities)
        self.identity = identity or " ".join(self.argv)

    def run(self, capability, requests):
        if capability not in self.capabilities:
            raise BackendFailure(f"{self.identity} lacks capability {capability}")
        stdin = "".join(
            json.dumps({"id": rid, "capability": capability, "in": payload}) + "\n"
            for rid, payload in requests
        )
        try:
            proc = subprocess.run(
                list(self.argv),
                input=stdin,
                capture_output=True,
                text=True,
                timeout=600,
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise BackendFailure(f"{self.identity}: {exc}") from None
        results = {}
        bad_lines = 0
        for line in proc.stdout.splitlines():
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                rid = record["id"]
                if record.get("ok", False):
                    results[rid] = str(record["out"])
            except (ValueError, KeyError, TypeError):
                bad_lines += 1
        if bad_lines:
            log.warning("%s: skipped %d unparseable lines", self.identity, bad_lines)
        if proc.returncode != 0 and not results:
            raise BackendFailure(
                f"{self.identity}: exit {proc.returncode}: {proc.stderr.strip()[:200]}"
            )
        return results


def _invoke(backend, capability, requests, jobs):
    """Batch requests through a backend, merging results by id."""
    if not requests:
        return {}
    batches = [requests[i : i + _BATCH] for i in range(0, len(requests), _BATCH)]
    results = {}
    if jobs > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for chunk in pool.map(lambda b: backend.run(capability, b), batches):
                results.update(chunk)
    else:
        for batch in batches:
            results.update(backend.run(capability, batch))
    if not results:
        raise BackendFailure(
            f"{getattr(backend, 'identity', backend)}: no records survived "
            f"{capability} over {len(requests)} inputs"
        )
    return results


# ------------------------------------------------------------- methods


@dataclasses.dataclass
class MethodRun:
    method: str
    manifest: Manifest
    backends: dict = dataclasses.field(default_factory=dict)
    tagmap: object = None
    ftune: Manifest = None
    jobs: int = 1


@dataclasses.dataclass
class MethodResult:
    pseudo_manifest: Manifest
    lm_corpus: tuple
    provenance: dict


def _timestamp():
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is not None:
        moment = datetime.fromtimestamp(int(epoch), tz=timezone.utc)
    else:
        moment = datetime.now(tz=timezone.utc)
    return moment.isoformat(timespec="seconds")


def run_method(run):
    """Execute one pseudo-labeling method over an external-data manifest.

    Returns a MethodResult whose manifest holds the pseudo-labeled records
    (merged with run.ftune when given, original labels winning on utt_id
    collisions), whose lm_corpus holds tagged texts for the methods that
    retrain a decoding LM, and whose provenance maps the run for audit.
    """
    if run.method not in _METHOD_TABLE:
        raise IncompatibleMethod(
            f"unknown method {run.method!r}; expected one of {', '.join(METHODS)}"
        )
    required_type, capabilities, wants_lm = _METHOD_TABLE[run.method]
    actual_type = run.manifest.data_type
    if actual_type != required_type:
        raise IncompatibleMethod(
            f"{run.method} needs {required_type} data, manifest holds {actual_type}"
        )
    for capability in capabilities:
        backend = run.backends.get(capability)
        if backend is None:
            raise IncompatibleMethod(f"{run.method} needs a {capability} backend")
        if capability not in backend.capabilities:
            raise IncompatibleMethod(
                f"bound backend cannot {capability} for {run.method}"
            )
    if run.tagmap is None and any(c in (TAG_TEXT, E2E_NER) for c in capabilities):
        raise ToolkitError(f"{run.method} needs a tagmap to parse tagged outputs")

    source = {record.utt_id: record for record in run.manifest}
    order = run.manifest.utt_ids
    dropped = []
    diagnostics = {}
    records = []
    lm_corpus = []

    def parse_mentions(utt_id, tagged):
        plain, mentions, diags = parse_tagged(tagged, run.tagmap, policy="recover")
        if diags:
            diagnostics[utt_id] = [
                {"kind": d.kind, "tag": d.tag, "word_index": d.word_index}
                for d in diags
            ]
        return plain, tuple(mentions)

    if run.method == "Pre-ASR":
        records = list(run.manifest)
    elif run.method == "SelfTrain-ASR":
        requests = [(record.utt_id, record.audio_ref) for record in run.manifest]
        texts = _invoke(run.backends[TRANSCRIBE], TRANSCRIBE, requests, run.jobs)
        for utt_id in order:
            if utt_id not in texts:
                dropped.append(utt_id)
                continue
            original = source[utt_id]
            records.append(
                ManifestRecord(utt_id, original.audio_ref, text=texts[utt_id])
            )
    elif run.method in ("SelfTrain-txtNER", "Distill-txtNER-lm", "Distill-txtNER"):
        requests = [(record.utt_id, record.text) for record in run.manifest]
        tagged = _invoke(run.backends[TAG_TEXT], TAG_TEXT, requests, run.jobs)
        for utt_id in order:
            if utt_id not in tagged:
                dropped.append(utt_id)
                continue
            original = source[utt_id]
            plain, mentions = parse_mentions(utt_id, tagged[utt_id])
            if wants_lm:
                lm_corpus.append(tagged[utt_id])
            if run.method == "Distill-txtNER-lm":
                continue
            records.append(
                ManifestRecord(
                    utt_id,
                    original.audio_ref,
                    text=plain,
                    tagged_text=tagged[utt_id],
                    mentions=mentions,
                )
            )
    elif run.method == "SelfTrain-E2E":
        requests = [(record.utt_id, record.audio_ref) for record in run.manifest]
        tagged = _invoke(run.backends[E2E_NER], E2E_NER, requests, run.jobs)
        for utt_id in order:
            if utt_id not in tagged:
                dropped.append(utt_id)
                continue
            plain, mentions = parse_mentions(utt_id, tagged[utt_id])
            lm_corpus.append(tagged[utt_id])
            records.append(
                ManifestRecord(
                    utt_id,
                    source[utt_id].audio_ref,
                    text=plain,
                    tagged_text=tagged[utt_id],
                    mentions=mentions,
                )
            )
    else:  # Distill-Pipeline
        requests = [(record.utt_id, record.audio_ref) for record in run.manifest]
        texts = _invoke(run.backends[TRANSCRIBE], TRANSCRIBE, requests, run.jobs)
        survivors = [utt_id for utt_id in order if utt_id in texts]
        dropped.extend(utt_id for utt_id in order if utt_id not in texts)
        tag_requests = [(utt_id, texts[utt_id]) for utt_id in survivors]
        tagged = _invoke(run.backends[TAG_TEXT], TAG_TEXT, tag_requests, run.jobs)
        for utt_id in survivors:
            if utt_id not in tagged:
                dropped.append(utt_id)
                continue
            plain, mentions = parse_mentions(utt_id, tagged[utt_id])
            lm_corpus.append(tagged[utt_id])
            records.append(
                ManifestRecord(
                    utt_id,
                    source[utt_id].audio_ref,
                    text=plain,
                    tagged_text=tagged[utt_id],
                    mentions=mentions,
                )
            )

    pseudo = Manifest(records, role="pseudo")
    collisions = []
    if run.ftune is not None:
        merged, collisions = _merge(run.ftune, pseudo)
        pseudo = merged

    provenance = {
        "schema_version": 1,
        "method": run.method,
        "data_type": required_type,
        "backends": {
            capability: run.backends[capability].identity
            for capability in capabilities
        },
        "mode": "transfer" if run.method == "Pre-ASR" else "pseudo-label",
        "input_records": len(run.manifest),
        "output_records": len(pseudo),
        "dropped_records": len(dropped),
        "dropped_ids": sorted(dropped),
        "diagnostics": diagnostics,
        "lm_lines": len(lm_corpus),
        "merged_ftune_records": len(run.ftune) if run.ftune is not None else 0,
        "collisions": collisions,
        "generated_at": _timestamp(),
    }
    if dropped:
        log.warning("%s: dropped %d of %d records", run.method, len(dropped), len(order))
    return MethodResult(pseudo, tuple(lm_corpus), provenance)


def _merge(ftune, pseudo):
    taken = {record.utt_id for record in ftune}
    collisions = sorted(
        record.utt_id for record in pseudo if record.utt_id in taken
    )
    for utt_id in collisions:
        log.info("merge: keeping original labels for %s", utt_id)
    extra = sorted(
        (record for record in pseudo if record.utt_id not in taken),
        key=lambda record: record.utt_id,
    )
    return Manifest(list(ftune) + extra, role="merged"), collisions


def merge_datasets(ftune, pseudo):
    """Union of the labeled set and a pseudo-labeled set.

    Original labels win on utt_id collision; output keeps ftune order first,
    then the remaining pseudo records sorted by utt_id.
    """
    merged, _collisions = _merge(ftune, pseudo)
    return merged


def read_gazetteer(path):
    """phrase<TAB>TAG lines; # comments and blank lines ignored."""
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for number, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            if "\t" not in line:
                raise ToolkitError(f"{path}:{number}: expected phrase<TAB>TAG")
            phrase, tag = line.split("\t", 1)
            entries.append((phrase.strip(), tag.strip()))
    return tuple(entries)


def read_references(path):
    """audio_ref<TAB>text lines mapping audio to hidden reference texts."""
    references = {}
    with open(path, "r", encoding="utf-8") as fh:
        for number, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if "\t" not in line:
                raise ToolkitError(f"{path}:{number}: expected audio_ref<TAB>text")
            audio_ref, text = line.split("\t", 1)
            references[audio_ref] = text
    return references
