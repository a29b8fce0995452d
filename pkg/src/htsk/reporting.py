"""Deterministic artifact emission: canonical JSON, config hashes, CSV.

Artifacts must be byte-identical across reruns and worker counts, so JSON is
rendered by a small canonical serializer (sorted keys, LF newlines, floats at
17 significant digits so values round-trip exactly) instead of whatever the
stdlib encoder feels like doing, and CSV rows quote per RFC 4180.
"""

from __future__ import annotations

import csv
import hashlib
import io
import math
from typing import Iterable, Sequence


def float17(x: float) -> str:
    return format(float(x), ".17g")


def _render(obj, out: list, indent: int) -> None:
    pad = "  " * indent
    if obj is None:
        out.append("null")
    elif isinstance(obj, bool):
        out.append("true" if obj else "false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        if math.isfinite(obj):
            out.append(float17(obj))
        else:
            out.append(f'"{obj!r}"')  # inf/nan are not JSON; stringify explicitly
    elif isinstance(obj, str):
        out.append(_quote(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        keys = sorted(obj, key=str)
        for i, key in enumerate(keys):
            out.append(f"{pad}  {_quote(str(key))}: ")
            _render(obj[key], out, indent + 1)
            out.append(",\n" if i < len(keys) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
            return
        out.append("[\n")
        for i, item in enumerate(obj):
            out.append(pad + "  ")
            _render(item, out, indent + 1)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(pad + "]")
    elif hasattr(obj, "item"):  # numpy scalar
        _render(obj.item(), out, indent)
    else:
        raise TypeError(f"cannot serialize {type(obj)!r}")


def _quote(s: str) -> str:
    escaped = (
        s.replace("\\", "\\\\")
        .replace('"', '\\"')
        .replace("\n", "\\n")
        .replace("\r", "\\r")
        .replace("\t", "\\t")
    )
    return f'"{escaped}"'


def canonical_json(obj) -> str:
    out: list = []
    _render(obj, out, 0)
    out.append("\n")
    return "".join(out)


def config_hash(config: dict) -> str:
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def write_json(path, obj) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(canonical_json(obj))


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([float17(v) if isinstance(v, float) else v for v in row])


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([float17(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()
