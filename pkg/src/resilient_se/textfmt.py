"""Sectioned plain-text format used by grid and scenario files.

::

    # comment
    [system]
    base_mva = 100

    [branches]
    from  to  b
    1     2   71.94

A section holds either ``key = value`` lines or a whitespace table whose
first row names the columns.  Which one is decided by the reader.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .errors import ParseError


@dataclass
class Section:
    name: str
    line: int
    lines: list = field(default_factory=list)  # (lineno, text)


def read_sections(text, path=None):
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]") or len(line) < 3:
                raise ParseError(f"malformed section header {raw.strip()!r}", lineno, path)
            name = line[1:-1].strip().lower()
            if name in sections:
                raise ParseError(f"duplicate section [{name}]", lineno, path)
            current = sections[name] = Section(name, lineno)
            continue
        if current is None:
            raise ParseError("content before the first [section] header", lineno, path)
        current.lines.append((lineno, line))
    return sections


def key_values(section, path=None, allowed=None):
    """Return ``{key: (lineno, value_string)}``."""
    out = {}
    for lineno, line in section.lines:
        if "=" not in line:
            raise ParseError(f"[{section.name}] expected 'key = value', got {line!r}", lineno, path)
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ParseError(f"[{section.name}] empty key", lineno, path)
        if allowed is not None and key not in allowed:
            raise ParseError(f"[{section.name}] unknown key {key!r}; allowed: {sorted(allowed)}", lineno, path)
        if key in out:
            raise ParseError(f"[{section.name}] duplicate key {key!r}", lineno, path)
        out[key] = (lineno, value)
    return out


def table(section, required, optional=(), path=None):
    """Return a list of ``(lineno, {column: token})`` rows."""
    if not section.lines:
        return []
    head_line, head = section.lines[0]
    columns = head.split()
    missing = [c for c in required if c not in columns]
    if missing:
        raise ParseError(f"[{section.name}] header lacks column(s) {missing}", head_line, path)
    unknown = [c for c in columns if c not in required and c not in optional]
    if unknown:
        raise ParseError(f"[{section.name}] unknown column(s) {unknown}", head_line, path)
    rows = []
    for lineno, line in section.lines[1:]:
        tokens = line.split()
        if len(tokens) != len(columns):
            raise ParseError(
                f"[{section.name}] expected {len(columns)} fields ({' '.join(columns)}), got {len(tokens)}",
                lineno, path)
        rows.append((lineno, dict(zip(columns, tokens))))
    return rows


def to_float(token, lineno, what, path=None):
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"{what}: cannot parse {token!r} as a number", lineno, path) from None


def to_int(token, lineno, what, path=None):
    try:
        return int(token)
    except ValueError:
        raise ParseError(f"{what}: cannot parse {token!r} as an integer", lineno, path) from None


def fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_key_values(name, items):
    lines = [f"[{name}]"]
    lines += [f"{k} = {fmt(v)}" for k, v in items]
    return "\n".join(lines) + "\n"


def write_table(name, columns, rows):
    cells = [list(columns)] + [[fmt(v) for v in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(columns))]
    lines = [f"[{name}]"]
    for r in cells:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip())
    return "\n".join(lines) + "\n"
