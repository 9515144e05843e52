"""Small shared helpers."""

import hashlib


def subseed(seed: int, label: str) -> int:
    """Derive a named child seed from a master seed.

    Each pipeline stage (initialization, held-out splitting, ...) draws from
    its own named stream, so changing one stage's consumption of randomness
    cannot silently shift another's.
    """
    digest = hashlib.sha256(f"{seed}:{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")
