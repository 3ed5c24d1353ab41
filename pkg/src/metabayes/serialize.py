"""Canonical JSON serialization, hashing, and atomic file writes."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile


def canonical_json(obj) -> str:
    """Serialize ``obj`` to a canonical JSON string.

    Keys are sorted and separators are compact so that equal objects
    always produce identical strings, which makes the output suitable
    for hashing.

    Parameters
    ----------
    obj : object
        Any JSON-serializable object.

    Returns
    -------
    str
        The canonical JSON encoding.
    """
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def canonical_hash(obj, length: int = 12) -> str:
    """Hex digest of the canonical JSON encoding of ``obj``.

    Parameters
    ----------
    obj : object
        Any JSON-serializable object.
    length : int, optional
        Number of hex characters to keep (default 12).

    Returns
    -------
    str
        Prefix of the SHA-256 hex digest.
    """
    digest = hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()
    return digest[:length]


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` to ``path`` atomically.

    The content is first written to a temporary file in the same
    directory and then moved into place, so readers never observe a
    partially written file.
    """
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
