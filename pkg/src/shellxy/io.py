"""Artifact serialization: canonical JSON, CSV tables, atomic writes, hashing."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile


def canonical_json(obj):
    """Deterministic JSON text (sorted keys, shortest round-trip floats)."""
    return json.dumps(obj, sort_keys=True, indent=1, ensure_ascii=True)


def config_hash(cfg):
    return hashlib.sha256(canonical_json(cfg).encode("ascii")).hexdigest()


def atomic_write_text(path, text):
    """Write via a temp file in the same directory, then rename."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    atomic_write_text(path, canonical_json(obj) + "\n")


def write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for x in row:
            if isinstance(x, float):
                cells.append(f"{x:.17g}")
            else:
                cells.append(str(x))
        lines.append(",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")
