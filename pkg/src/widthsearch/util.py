"""Shared plumbing: seeded RNG substreams, canonical JSON, thread control."""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Iterable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "WIDTHSEARCH_THREADS"


def substream(root_seed: int, name: str) -> np.random.Generator:
    """Named, counter-free RNG substream derived from one root seed.

    Streams with distinct names are statistically independent, and the
    derivation does not depend on call order or thread scheduling.
    """
    tag = int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([int(root_seed), tag]))


def thread_count() -> int:
    """Parallelism cap from the WIDTHSEARCH_THREADS environment variable."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    n = int(raw)
    if n < 1:
        raise ValueError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return n


def ordered_map(fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
    """Map `fn` over `items`, possibly in parallel, preserving input order.

    Results are identical regardless of the thread count: jobs are
    independent and the reduce is by input index.
    """
    n = thread_count()
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items))


def canonical_json(obj: Any) -> str:
    """Deterministic JSON encoding (sorted keys, minimal separators)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(obj: Any) -> str:
    """Stable hex digest of a JSON-serializable configuration."""
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:16]


def check_artifact_hash(found: str | None, expected: str, path: str) -> None:
    """Reject artifacts produced under a different configuration."""
    if found != expected:
        raise ValueError(
            f"{path}: artifact config hash {found!r} does not match run hash {expected!r}"
        )


def derive_seed(root_seed: int, name: str) -> int:
    """Deterministic integer sub-seed for components that take plain seeds."""
    payload = f"{int(root_seed)}:{name}".encode("utf-8")
    return int.from_bytes(hashlib.sha256(payload).digest()[:4], "little")
