"""Situation records and their canonical XML encoding.

Encoding is byte-stable: fixed element order, coordinates and timestamp
with three decimals, no whitespace between elements. Records are quantized
to that resolution on construction so ``parse(encode(r)) == r`` holds.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass
from xml.sax.saxutils import escape, quoteattr

from .errors import XmlInvalidStatus, XmlMalformed

STATUSES = ("green", "yellow", "red")
_FIELDS = ("location", "status", "timestamp", "short", "detail")
# XML 1.0 parsers normalize CR to LF unless it is a character reference
_TEXT_ENTITIES = {"\r": "&#13;"}


def _check_text(label: str, s: str):
    if not isinstance(s, str):
        raise TypeError(f"{label} must be text")
    for ch in s:
        o = ord(ch)
        if (o < 0x20 and ch not in "\t\n\r") or 0xD800 <= o <= 0xDFFF or o in (0xFFFE, 0xFFFF):
            raise ValueError(f"{label} contains a character XML cannot carry: {ch!r}")


@dataclass(frozen=True)
class SituationRecord:
    x: float
    y: float
    status: str
    timestamp: float
    short_msg: str = ""
    detail_msg: str = ""

    def __post_init__(self):
        if self.status not in STATUSES:
            raise XmlInvalidStatus(f"status {self.status!r} is not one of {STATUSES}")
        if self.timestamp < 0:
            raise ValueError("timestamp must be >= 0")
        _check_text("short_msg", self.short_msg)
        _check_text("detail_msg", self.detail_msg)
        object.__setattr__(self, "x", round(float(self.x), 3) + 0.0)
        object.__setattr__(self, "y", round(float(self.y), 3) + 0.0)
        object.__setattr__(self, "timestamp", round(float(self.timestamp), 3) + 0.0)

    @property
    def location(self) -> tuple[float, float]:
        return (self.x, self.y)


def encode_situation(rec: SituationRecord) -> str:
    return (
        "<situation>"
        f"<location x={quoteattr(f'{rec.x:.3f}')} y={quoteattr(f'{rec.y:.3f}')}/>"
        f"<status>{rec.status}</status>"
        f"<timestamp>{rec.timestamp:.3f}</timestamp>"
        f"<short>{escape(rec.short_msg, _TEXT_ENTITIES)}</short>"
        f"<detail>{escape(rec.detail_msg, _TEXT_ENTITIES)}</detail>"
        "</situation>"
    )


def _number(text, what: str) -> float:
    try:
        return float(text)
    except (TypeError, ValueError) as exc:
        raise XmlMalformed(f"{what} is not a number: {text!r}") from exc


def parse_situation(text: str) -> SituationRecord:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise XmlMalformed(f"not well-formed: {exc}") from exc
    if root.tag != "situation":
        raise XmlMalformed(f"root element is <{root.tag}>, expected <situation>")
    children = list(root)
    if [c.tag for c in children] != list(_FIELDS):
        raise XmlMalformed(f"expected children {_FIELDS}, got {tuple(c.tag for c in children)}")
    loc, status, ts, short, detail = children
    if set(loc.attrib) != {"x", "y"}:
        raise XmlMalformed("location needs exactly the x and y attributes")
    status_text = status.text or ""
    if status_text not in STATUSES:
        raise XmlInvalidStatus(f"status {status_text!r} is not one of {STATUSES}")
    try:
        return SituationRecord(
            _number(loc.attrib["x"], "x"),
            _number(loc.attrib["y"], "y"),
            status_text,
            _number(ts.text, "timestamp"),
            short.text or "",
            detail.text or "",
        )
    except ValueError as exc:
        if isinstance(exc, XmlMalformed):
            raise
        raise XmlMalformed(str(exc)) from exc
