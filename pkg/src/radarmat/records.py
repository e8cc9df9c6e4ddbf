"""
Line-oriented `key = value` records.

Every machine-readable artifact of radarmat (radar configurations, calibrations,
EM parameter sets, verdicts and run reports) is written as one or more blocks of
`key = value` lines; blocks are separated by a blank line. Lines starting with
`#` are comments.
"""

import math
import string
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import InvalidConfigError

# every character str.splitlines() breaks on, plus the escape character
_ESCAPES = {"\\": "\\\\", "\n": "\\n", "\r": "\\r"}
_ESCAPES.update(
    {ch: f"\\u{ord(ch):04x}" for ch in "\x0b\x0c\x1c\x1d\x1e\x85\u2028\u2029"}
)
_UNESCAPES = {"n": "\n", "r": "\r"}


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if value is None:
        return ""
    if isinstance(value, (list, tuple, set, frozenset)):
        return ", ".join(format_value(v) for v in value)
    return "".join(_ESCAPES.get(ch, ch) for ch in str(value))


def unescape(text: str) -> str:
    out = []
    chars = iter(text)
    for ch in chars:
        if ch == "\\":
            nxt = next(chars, "")
            if nxt == "u":
                code = "".join(next(chars, "") for _ in range(4))
                if len(code) == 4 and all(c in string.hexdigits for c in code):
                    out.append(chr(int(code, 16)))
                else:
                    out.append("u" + code)
            else:
                out.append(_UNESCAPES.get(nxt, nxt))
        else:
            out.append(ch)
    return "".join(out)


def format_record(fields: Mapping[str, Any]) -> str:
    return "".join(f"{key} = {format_value(value)}\n" for key, value in fields.items())


def format_records(blocks: Iterable[Mapping[str, Any]]) -> str:
    return "\n".join(format_record(block) for block in blocks)


def parse_records(text: str) -> list[dict[str, str]]:
    blocks: list[dict[str, str]] = []
    current: dict[str, str] = {}
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line:
            if current:
                blocks.append(current)
                current = {}
            continue
        if line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise InvalidConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if key in current:
            raise InvalidConfigError(f"line {lineno}: duplicate key '{key}'")
        current[key] = unescape(value.strip())
    if current:
        blocks.append(current)
    return blocks


def parse_record(text: str) -> dict[str, str]:
    blocks = parse_records(text)
    if len(blocks) != 1:
        raise InvalidConfigError(f"expected exactly one record, found {len(blocks)}")
    return blocks[0]


def read_record(path: Path | str) -> dict[str, str]:
    return parse_record(Path(path).read_text(encoding="utf-8"))


def write_record(path: Path | str, fields: Mapping[str, Any]) -> None:
    Path(path).write_text(format_record(fields), encoding="utf-8")
