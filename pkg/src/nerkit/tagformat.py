"""Encoding and parsing of transcripts with inline entity delimiters.

An entity phrase is wrapped between a tag-specific opening character and a
shared closing character, all space-separated from the surrounding words:

    the $ irish ] system works within ... dictated by the % eu ]

Plain transcript text is limited to lowercase letters, digits, spaces and
apostrophes, so any delimiter character sits outside that alphabet and can
never be confused with a word.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import (
    ConfigError,
    InvalidMention,
    MalformedTagging,
    OverlapError,
    UnknownTag,
)

PLAIN_ALPHABET = frozenset("abcdefghijklmnopqrstuvwxyz0123456789 '")

DEFAULT_CLOSE = "]"

# Diagnostic kinds emitted by recover-mode parsing.
UNCLOSED = "unclosed"
STRAY_CLOSE = "stray_close"
NESTED_OPEN = "nested_open"
EMPTY_SPAN = "empty_span"


def read_config_pairs(path):
    """Read a two-column config file into an ordered list of (key, value).

    Lines are `key<TAB>value`; runs of spaces also accepted as the
    separator. Blank lines and `#` comments are skipped. Used for tag maps
    and label maps alike.
    """
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t") if "\t" in line else line.split(None, 1)
            if len(parts) != 2 or not parts[0] or not parts[1].strip():
                raise ConfigError(f"{path}:{lineno}: expected `key<TAB>value`, got {raw!r}")
            pairs.append((parts[0].strip(), parts[1].strip()))
    return pairs


class TagMap:
    """Assignment of opening delimiter characters to tag names.

    Parameters
    ----------
    entries : iterable of (tag_name, open_char)
        Tag names must be nonempty and unique; open characters must be
        single printable characters outside the plain-text alphabet and
        pairwise distinct.
    close_char : str
        Shared closing delimiter, subject to the same character rules.
    """

    def __init__(self, entries, close_char=DEFAULT_CLOSE):
        self._open_by_tag = {}
        self._tag_by_open = {}
        self.close_char = close_char
        self._check_char(close_char, "close_char")
        for tag, char in entries:
            if not tag:
                raise ConfigError("empty tag name")
            if tag in self._open_by_tag:
                raise ConfigError(f"duplicate tag name {tag!r}")
            self._check_char(char, f"tag {tag!r}")
            if char == close_char:
                raise ConfigError(f"tag {tag!r} reuses the close character {char!r}")
            if char in self._tag_by_open:
                raise ConfigError(f"open character {char!r} assigned twice")
            self._open_by_tag[tag] = char
            self._tag_by_open[char] = tag

    @staticmethod
    def _check_char(char, what):
        if len(char) != 1 or not char.isprintable():
            raise ConfigError(f"{what}: delimiter must be one printable character, got {char!r}")
        if char in PLAIN_ALPHABET:
            raise ConfigError(f"{what}: delimiter {char!r} collides with the plain-text alphabet")

    @classmethod
    def from_file(cls, path):
        """Load from a config file of `TAG<TAB>char` lines plus one `CLOSE<TAB>char` line."""
        entries = []
        close_char = DEFAULT_CLOSE
        saw_close = False
        for key, value in read_config_pairs(path):
            if key == "CLOSE":
                if saw_close:
                    raise ConfigError(f"{path}: CLOSE given twice")
                close_char = value
                saw_close = True
            else:
                entries.append((key, value))
        return cls(entries, close_char)

    @property
    def tags(self):
        return tuple(self._open_by_tag)

    @property
    def delimiter_chars(self):
        """All delimiter characters, close included."""
        return frozenset(self._tag_by_open) | {self.close_char}

    def open_char(self, tag):
        try:
            return self._open_by_tag[tag]
        except KeyError:
            raise UnknownTag(f"tag {tag!r} not in tag map") from None

    def tag_for(self, char):
        """Tag name for an opening character, or None."""
        return self._tag_by_open.get(char)

    def __contains__(self, tag):
        return tag in self._open_by_tag

    def __eq__(self, other):
        return (
            isinstance(other, TagMap)
            and self._open_by_tag == other._open_by_tag
            and self.close_char == other.close_char
        )

    def __repr__(self):
        return f"TagMap({list(self._open_by_tag.items())!r}, close_char={self.close_char!r})"


@dataclass(frozen=True, order=True)
class EntityMention:
    """One entity occurrence inside a plain transcript.

    `phrase` must equal the transcript words
    [start_word, start_word + word_count) joined by single spaces.
    """

    tag: str
    phrase: str
    start_word: int
    word_count: int

    def __post_init__(self):
        if self.word_count < 1:
            raise InvalidMention(f"word_count must be positive, got {self.word_count}")
        if self.start_word < 0:
            raise InvalidMention(f"start_word must be nonnegative, got {self.start_word}")
        if len(self.phrase.split()) != self.word_count:
            raise InvalidMention(
                f"phrase {self.phrase!r} has {len(self.phrase.split())} words, "
                f"word_count says {self.word_count}"
            )

    @property
    def end_word(self):
        return self.start_word + self.word_count

    def words(self):
        return self.phrase.split()


@dataclass(frozen=True)
class Diagnostic:
    """One recovery event from parse_tagged.

    word_index is the position in the recovered plain transcript where the
    event was resolved; tag is set when a span was involved.
    """

    kind: str
    word_index: int
    tag: str | None = None


@dataclass(frozen=True)
class TaggedTranscript:
    """A tagged character sequence plus the recovery events behind it."""

    text: str
    diagnostics: tuple = field(default_factory=tuple)


def _check_mentions(words, mentions, tagmap):
    ordered = sorted(mentions, key=lambda m: (m.start_word, m.end_word))
    prev_end = 0
    for mention in ordered:
        if mention.tag not in tagmap:
            raise UnknownTag(f"tag {mention.tag!r} not in tag map")
        if mention.start_word < prev_end:
            raise OverlapError(f"mention {mention.phrase!r} overlaps an earlier mention")
        if mention.end_word > len(words):
            raise InvalidMention(f"mention {mention.phrase!r} runs past the transcript end")
        span = " ".join(words[mention.start_word : mention.end_word])
        if span != mention.phrase:
            raise InvalidMention(
                f"mention phrase {mention.phrase!r} does not match transcript span {span!r}"
            )
        prev_end = mention.end_word
    return ordered


def encode_tagged(plain_text, mentions, tagmap):
    """Wrap each mention of a plain transcript in its tag delimiters.

    Parameters
    ----------
    plain_text : str
        Whitespace-tokenized transcript; canonicalized on the way in.
    mentions : list of EntityMention
        Non-overlapping spans into the transcript words.
    tagmap : TagMap

    Returns
    -------
    str
        The tagged transcript in canonical form: single spaces, delimiters
        as standalone tokens.
    """
    words = plain_text.split()
    ordered = _check_mentions(words, mentions, tagmap)
    out = []
    index = 0
    for mention in ordered:
        out.extend(words[index : mention.start_word])
        out.append(tagmap.open_char(mention.tag))
        out.extend(words[mention.start_word : mention.end_word])
        out.append(tagmap.close_char)
        index = mention.end_word
    out.extend(words[index:])
    return " ".join(out)


def _tokenize(tagged, tagmap):
    """Split into words and standalone delimiter tokens.

    Delimiters glued to words are accepted and separated out.
    """
    specials = tagmap.delimiter_chars
    tokens = []
    word = []
    for char in tagged:
        if char in specials:
            if word:
                tokens.append("".join(word))
                word = []
            tokens.append(char)
        elif char.isspace():
            if word:
                tokens.append("".join(word))
                word = []
        else:
            word.append(char)
    if word:
        tokens.append("".join(word))
    return tokens


def parse_tagged(tagged, tagmap, policy="strict"):
    """Parse a tagged transcript back into plain text and mentions.

    Parameters
    ----------
    tagged : str
    tagmap : TagMap
    policy : {"strict", "recover"}
        strict raises MalformedTagging on any irregularity. recover always
        succeeds: an unclosed span is closed at the end of the utterance, a
        stray close is dropped, a nested open closes the outer span first,
        and a span with no words is dropped. Each repair is reported as a
        Diagnostic.

    Returns
    -------
    (plain_text, mentions, diagnostics)
        plain_text has all delimiters removed and whitespace canonicalized;
        mentions are sorted, non-overlapping EntityMention values.
    """
    if policy not in ("strict", "recover"):
        raise ValueError(f"policy must be 'strict' or 'recover', got {policy!r}")
    strict = policy == "strict"

    words = []
    mentions = []
    diagnostics = []
    open_tag = None
    span_start = 0

    def fail_or_note(kind, tag=None):
        if strict:
            raise MalformedTagging(kind, len(words))
        diagnostics.append(Diagnostic(kind, len(words), tag))

    def close_span(tag):
        if len(words) == span_start:
            fail_or_note(EMPTY_SPAN, tag)
            return
        phrase = " ".join(words[span_start : len(words)])
        mentions.append(EntityMention(tag, phrase, span_start, len(words) - span_start))

    for token in _tokenize(tagged, tagmap):
        if token == tagmap.close_char:
            if open_tag is None:
                fail_or_note(STRAY_CLOSE)
            else:
                close_span(open_tag)
                open_tag = None
        elif tagmap.tag_for(token) is not None:
            if open_tag is not None:
                fail_or_note(NESTED_OPEN, open_tag)
                close_span(open_tag)
            open_tag = tagmap.tag_for(token)
            span_start = len(words)
        else:
            words.append(token)

    if open_tag is not None:
        fail_or_note(UNCLOSED, open_tag)
        close_span(open_tag)

    return " ".join(words), mentions, diagnostics


def strip_tags(tagged, tagmap):
    """Plain text of a tagged transcript; total, never raises."""
    plain, _, _ = parse_tagged(tagged, tagmap, policy="recover")
    return plain
