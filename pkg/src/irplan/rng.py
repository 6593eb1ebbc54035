"""Hash-derived seed streams, so substreams never depend on scheduling order."""

from __future__ import annotations

import hashlib
import random


def derive_seed(base: int, *path: object) -> int:
    key = ":".join([str(int(base))] + [str(p) for p in path])
    return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:8], "big")


def substream(base: int, *path: object) -> random.Random:
    return random.Random(derive_seed(base, *path))
