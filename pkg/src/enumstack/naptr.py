"""Naming-authority-pointer records: parsing, selection, URI rewriting.

A record carries (order, preference, flags, service, regexp, replacement)
plus a visibility marker. Selection filters by service and visibility and
sorts ascending by (order, preference), stably. Terminal records (flag
``u``) rewrite the ``+``-prefixed number into a URI through an anchored
extended-regular-expression substitution; one terminal level is supported
and replacement-domain chains are represented but never followed.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from .e164 import E164Number
from .errors import (
    BadBackreference,
    BadDelimiter,
    BadFlags,
    BadInteger,
    FieldConflict,
    FieldCount,
    FlagRegexpConflict,
    NoMatch,
)

_MAX_FIELD = 65535
_TOKEN_RE = re.compile(r'"([^"]*)"|(\S+)')


class Visibility(Enum):
    """Record exposure: restricted records are hidden from public queries."""

    PUBLIC = "public"
    RESTRICTED = "restricted"


def _split_regexp(regexp: str) -> tuple[str, str]:
    """Split a substitution expression into (pattern, replacement).

    The first character is the delimiter; it must occur exactly three
    times unescaped, first and last.
    """
    if len(regexp) < 3:
        raise BadDelimiter(f"substitution expression too short: {regexp!r}")
    delim = regexp[0]
    if delim.isalnum() or delim == "\\":
        raise BadDelimiter(f"bad delimiter {delim!r}")
    positions = []
    escaped = False
    for i, ch in enumerate(regexp):
        if escaped:
            escaped = False
            continue
        if ch == "\\":
            escaped = True
            continue
        if ch == delim:
            positions.append(i)
    if len(positions) != 3 or positions[0] != 0 or positions[-1] != len(regexp) - 1:
        raise BadDelimiter(f"delimiter {delim!r} must appear exactly 3 times in {regexp!r}")
    pattern = regexp[1 : positions[1]]
    replacement = regexp[positions[1] + 1 : -1]
    # The delimiter may appear inside either part only escaped; unescape it.
    pattern = pattern.replace("\\" + delim, delim)
    replacement = replacement.replace("\\" + delim, delim)
    return pattern, replacement


@dataclass(frozen=True)
class NaptrRecord:
    """One naming-authority-pointer entry for a telephone number."""

    order: int
    preference: int
    flags: str
    service: str
    regexp: str = ""
    replacement: str = "."
    visibility: Visibility = Visibility.PUBLIC

    def __post_init__(self) -> None:
        for name, value in (("order", self.order), ("preference", self.preference)):
            if not isinstance(value, int) or not 0 <= value <= _MAX_FIELD:
                raise BadInteger(f"{name} {value!r} outside 0..{_MAX_FIELD}")
        if self.flags not in ("", "u"):
            raise BadFlags(f"unsupported flags {self.flags!r}")
        has_regexp = bool(self.regexp)
        has_replacement = self.replacement not in ("", ".")
        if self.flags == "u" and not has_regexp:
            raise FlagRegexpConflict("'u' flag requires a substitution expression")
        if has_regexp == has_replacement:
            raise FieldConflict(
                "exactly one of regexp / replacement must be non-empty"
            )
        if has_regexp:
            pattern, _ = _split_regexp(self.regexp)
            try:
                re.compile(pattern)
            except re.error as exc:
                raise BadDelimiter(f"unparseable pattern {pattern!r}: {exc}") from exc

    @property
    def terminal(self) -> bool:
        """True when this record rewrites directly to a URI."""
        return self.flags == "u"

    def sort_key(self) -> tuple[int, int]:
        return (self.order, self.preference)

    def merge_key(self) -> tuple[str, int, int]:
        return (self.service.lower(), self.order, self.preference)


@dataclass(frozen=True)
class ServiceSelector:
    """Matches a record's service field; ``*`` matches everything."""

    service: str = "*"

    @property
    def wildcard(self) -> bool:
        return self.service == "*"

    def matches(self, service: str) -> bool:
        return self.wildcard or self.service.lower() == service.lower()


@dataclass(frozen=True)
class NaptrRecordSet:
    """All records for one number; a number's set lives at one registrar."""

    number: E164Number
    records: tuple[NaptrRecord, ...] = field(default_factory=tuple)

    def __len__(self) -> int:
        return len(self.records)


# ---------------------------------------------------------------- zone-line format


def parse_record(text: str, visibility: Visibility = Visibility.PUBLIC) -> NaptrRecord:
    """Parse one zone-file-style line.

    Expected shape::

        100 10 "u" "E2U+sip" "!^.*$!sip:info@example.com!" .

    Six whitespace-separated fields; flags, service and regexp are quoted;
    replacement is a bare domain or ``.``.
    """
    tokens: list[tuple[str, bool]] = []
    pos = 0
    stripped = text.strip()
    while pos < len(stripped):
        m = _TOKEN_RE.match(stripped, pos)
        if m is None:
            raise FieldCount(f"unterminated quote in {text!r}")
        quoted = m.group(1) is not None
        tokens.append((m.group(1) if quoted else m.group(2), quoted))
        pos = m.end()
        while pos < len(stripped) and stripped[pos].isspace():
            pos += 1
    if len(tokens) != 6:
        raise FieldCount(f"expected 6 fields, got {len(tokens)}: {text!r}")
    for idx in (2, 3, 4):
        if not tokens[idx][1]:
            raise FieldCount(f"field {idx + 1} must be quoted in {text!r}")
    try:
        order = int(tokens[0][0])
        preference = int(tokens[1][0])
    except ValueError as exc:
        raise BadInteger(f"bad integer field in {text!r}") from exc
    return NaptrRecord(
        order=order,
        preference=preference,
        flags=tokens[2][0],
        service=tokens[3][0],
        regexp=tokens[4][0],
        replacement=tokens[5][0],
        visibility=visibility,
    )


def render_record(rec: NaptrRecord) -> str:
    """Inverse of :func:`parse_record` (visibility is carried separately)."""
    return (
        f'{rec.order} {rec.preference} "{rec.flags}" "{rec.service}" '
        f'"{rec.regexp}" {rec.replacement or "."}'
    )


def parse_stored_line(text: str) -> NaptrRecord:
    """Parse a stored record line: optional visibility token, then zone line."""
    head, _, rest = text.strip().partition(" ")
    if head in (Visibility.PUBLIC.value, Visibility.RESTRICTED.value):
        return parse_record(rest, visibility=Visibility(head))
    return parse_record(text)


def render_stored_line(rec: NaptrRecord) -> str:
    return f"{rec.visibility.value} {render_record(rec)}"


# ---------------------------------------------------------------- operations


def select(
    record_set: NaptrRecordSet,
    selector: ServiceSelector = ServiceSelector(),
    requester_visibility: Visibility = Visibility.PUBLIC,
) -> list[NaptrRecord]:
    """Filter by service and visibility, sort ascending by (order, preference).

    The sort is stable: records with equal keys keep insertion order.
    Restricted records never show up for public requesters.
    """
    allowed = (
        lambda r: r.visibility is Visibility.PUBLIC
        or requester_visibility is Visibility.RESTRICTED
    )
    filtered = [r for r in record_set.records if selector.matches(r.service) and allowed(r)]
    return sorted(filtered, key=NaptrRecord.sort_key)


def apply_regexp(rec: NaptrRecord, subject: str | E164Number) -> str:
    """Rewrite *subject* (the ``+``-prefixed number) into a URI.

    Capture groups ``\\1``..``\\9`` in the replacement are substituted
    from the pattern match. Raises :class:`NoMatch` when the pattern does
    not match and :class:`BadBackreference` for a group the pattern lacks.
    """
    if isinstance(subject, E164Number):
        subject = subject.render()
    pattern_text, replacement = _split_regexp(rec.regexp)
    pattern = re.compile(pattern_text)
    m = pattern.search(subject)
    if m is None:
        raise NoMatch(f"{pattern_text!r} does not match {subject!r}")
    out: list[str] = []
    i = 0
    while i < len(replacement):
        ch = replacement[i]
        if ch == "\\" and i + 1 < len(replacement):
            nxt = replacement[i + 1]
            if nxt.isdigit():
                k = int(nxt)
                if k == 0 or k > pattern.groups:
                    raise BadBackreference(
                        f"\\{k} exceeds {pattern.groups} capture group(s)"
                    )
                out.append(m.group(k) or "")
            else:
                out.append(nxt)
            i += 2
            continue
        out.append(ch)
        i += 1
    return "".join(out)


def resolve_record_set(
    record_set: NaptrRecordSet,
    selector: ServiceSelector,
    subject: str | E164Number,
    requester_visibility: Visibility = Visibility.PUBLIC,
) -> tuple[list[str], list[str]]:
    """Select, then rewrite every terminal record to a URI.

    Returns ``(uris, warnings)``. Non-terminal records are skipped (the
    chain is not followed); a rewrite failure skips that record with a
    warning instead of aborting the set.
    """
    uris: list[str] = []
    warnings: list[str] = []
    for rec in select(record_set, selector, requester_visibility):
        if not rec.terminal:
            continue
        try:
            uris.append(apply_regexp(rec, subject))
        except (NoMatch, BadBackreference) as exc:
            warnings.append(
                f"skipped {rec.service} ({rec.order},{rec.preference}): "
                f"{type(exc).__name__}"
            )
    return uris, warnings
