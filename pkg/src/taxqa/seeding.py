"""Deterministic seed derivation.

Python's builtin hash() is salted per process, so derived seeds must come
from a content hash to keep runs reproducible across processes and machines.
"""
from __future__ import annotations

import hashlib


def stable_seed(*parts: object) -> int:
    """64-bit seed derived from the string forms of the parts."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")
