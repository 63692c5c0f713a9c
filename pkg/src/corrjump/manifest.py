"""Plain-text run manifests: nested sections of key-value pairs.

The on-disk format is a single UTF-8 file of bracketed section headers whose
dotted path addresses a nested dict, followed by ``key = value`` lines::

    [run]
    seed = 42
    [windows.1996-12-31.depositories.hn]
    omega = 4.1e-07
    a = [0.01, -0.02]

Supported scalar values are ints, floats (repr round-trip), booleans,
double-quoted strings, and flat lists of scalars. Path components and keys
containing anything outside ``[A-Za-z0-9_.-]`` are double-quoted. The same
reader backs the CLI's declarative config files.
"""

from __future__ import annotations

import re
from typing import Any

from .errors import ParseError

_BARE = re.compile(r"^[A-Za-z0-9_/\-]+$")
_SECTION = re.compile(r"^\[(.+)\]$")


def _format_scalar(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    text = str(value)
    if _BARE.match(text) and text not in ("true", "false"):
        return text
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _format_path_part(part: str) -> str:
    return part if _BARE.match(part) else _format_scalar(part)


def _parse_scalar(token: str) -> Any:
    token = token.strip()
    if token.startswith('"'):
        if not token.endswith('"') or len(token) < 2:
            raise ParseError(f"unterminated string: {token!r}")
        return token[1:-1].replace('\\"', '"').replace("\\\\", "\\")
    if token == "true":
        return True
    if token == "false":
        return False
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        return token


def _split_list(body: str) -> list[str]:
    items, depth, current = [], 0, []
    in_string = False
    for ch in body:
        if ch == '"':
            in_string = not in_string
        if ch == "," and depth == 0 and not in_string:
            items.append("".join(current))
            current = []
            continue
        current.append(ch)
    if current and "".join(current).strip():
        items.append("".join(current))
    return items


def dumps(data: dict) -> str:
    """Serialize a nested dict of sections and scalar/list leaves."""
    lines: list[str] = []

    def emit(path: list[str], node: dict) -> None:
        leaves = {k: v for k, v in node.items() if not isinstance(v, dict)}
        subs = {k: v for k, v in node.items() if isinstance(v, dict)}
        if path and (leaves or not subs):
            lines.append("[" + ".".join(_format_path_part(p) for p in path) + "]")
        for key, value in leaves.items():
            if isinstance(value, (list, tuple)):
                body = ", ".join(_format_scalar(v) for v in value)
                lines.append(f"{key} = [{body}]")
            else:
                lines.append(f"{key} = {_format_scalar(value)}")
        for key, value in subs.items():
            emit(path + [str(key)], value)

    emit([], data)
    return "\n".join(lines) + "\n"


def loads(text: str) -> dict:
    """Parse text produced by :func:`dumps` back into nested dicts."""
    root: dict = {}
    section = root
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        header = _SECTION.match(line)
        if header:
            section = root
            for part in _split_path(header.group(1), lineno):
                section = section.setdefault(part, {})
                if not isinstance(section, dict):
                    raise ParseError(f"line {lineno}: section path collides with a key")
            continue
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip().strip('"')
        value = value.strip()
        if value.startswith("[") and value.endswith("]"):
            section[key] = [_parse_scalar(t) for t in _split_list(value[1:-1])]
        else:
            section[key] = _parse_scalar(value)
    return root


def _split_path(path: str, lineno: int) -> list[str]:
    parts: list[str] = []
    current: list[str] = []
    in_string = False
    for ch in path:
        if ch == '"':
            in_string = not in_string
            continue
        if ch == "." and not in_string:
            parts.append("".join(current))
            current = []
            continue
        current.append(ch)
    if in_string:
        raise ParseError(f"line {lineno}: unterminated quoted section part")
    parts.append("".join(current))
    if any(not p for p in parts):
        raise ParseError(f"line {lineno}: empty section path component")
    return parts


def dump(data: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(data))


def load(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read())
