"""Channel assignment principles for weight-sharing width training.

Given a layer with physical width W and a sampled width c, a principle
decides which channel index intervals realize c. The unilateral rule takes
the leftmost c channels only. The bilateral rule takes both the leftmost and
the rightmost c channels (as a multiset, so overlapping middle channels
count twice), which equalizes how often each channel position is trained
across the width grid. The base-width variant couples the two sides around
an always-present core of the first and last base channels.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .space import LayerSpec, SearchSpace

UA = "ua"
BC = "bc"
BCV2 = "bcv2"

EXACT_FAIR = "exact_fair"
PAPER_LITERAL = "paper_literal"

_KINDS = (UA, BC, BCV2)
_OVERLAPS = (EXACT_FAIR, PAPER_LITERAL)

Interval = tuple[int, int]


@dataclass(frozen=True)
class IndexAssignment:
    """The channel intervals (1-indexed, inclusive) realizing one width.

    The trained channel multiset is the union of left and right with
    repetition; right is None under the unilateral principle.
    """

    left: Interval
    right: Interval | None

    def intervals(self) -> tuple[Interval, ...]:
        return (self.left,) if self.right is None else (self.left, self.right)

    def multiset_size(self) -> int:
        return sum(hi - lo + 1 for lo, hi in self.intervals())


@dataclass(frozen=True)
class Principle:
    """Which channel sides get trained, and how the physical layer is sized.

    kind "ua" trains the left side only; "bc" trains left and right over a
    physical width equal to the layer's max width; "bcv2" trains left and
    right over a widened layer that keeps a base core always present.

    overlap_mode applies to bcv2 only. "exact_fair" sizes the shared layer
    at max_width + base_width, so over a full sweep of the grid every
    channel is trained the same number of times. "paper_literal" shaves one
    grid step off that; the resulting counts deviate by exactly 1 around
    the base channels, and the deviation is surfaced by the audit rather
    than hidden.
    """

    kind: str = BC
    overlap_mode: str = EXACT_FAIR

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown principle kind {self.kind!r}")
        if self.overlap_mode not in _OVERLAPS:
            raise ValueError(f"unknown overlap mode {self.overlap_mode!r}")

    def physical_width(self, spec: LayerSpec) -> int:
        """Channel count the shared layer must physically allocate."""
        if self.kind in (UA, BC):
            return spec.max_width
        if spec.base_width == 0:
            raise ValueError("the base-width principle needs base_width > 0")
        if self.overlap_mode == EXACT_FAIR:
            return spec.max_width + spec.base_width
        return spec.max_width + spec.base_width - spec.step

    def bilateral(self) -> bool:
        return self.kind in (BC, BCV2)

    def _assignment(self, spec: LayerSpec, c: int) -> IndexAssignment:
        left = (1, c)
        if self.kind == UA:
            return IndexAssignment(left=left, right=None)
        w = self.physical_width(spec)
        return IndexAssignment(left=left, right=(w - c + 1, w))

    def indices(self, spec: LayerSpec, c: int) -> IndexAssignment:
        """Intervals for a grid width; off-grid widths are rejected."""
        if c not in spec.grid:
            raise ValueError(f"width {c} not on grid {spec.grid}")
        return self._assignment(spec, c)

    def side_slices(self, spec: LayerSpec, c: int) -> tuple[slice, ...]:
        """0-indexed python slices matching indices(); used by the network."""
        return tuple(slice(lo - 1, hi)
                     for lo, hi in self.indices(spec, c).intervals())


def cardinality_audit(principle: Principle, spec: LayerSpec,
                      width_set: Sequence[int] | None = None) -> np.ndarray:
    """Per-channel training counts summed over a set of widths.

    counts[ch-1] is how many widths in the set include physical channel ch,
    counted with multiplicity (a bilateral overlap counts twice). The
    default width set is the layer's grid; an explicit set may instead be
    any widths in the valid range, e.g. the full ungrouped range, which the
    fairness checks sweep regardless of grid step.
    """
    if width_set is None:
        width_set = spec.grid
    if len(width_set) == 0:
        raise ValueError("width_set must be non-empty")
    low = spec.base_width if spec.base_width > 0 else 1
    w = principle.physical_width(spec)
    counts = np.zeros(w, dtype=np.int64)
    for c in width_set:
        if not low <= c <= spec.max_width:
            raise ValueError(f"width {c} outside valid range [{low}, {spec.max_width}]")
        for lo, hi in principle._assignment(spec, int(c)).intervals():
            counts[lo - 1:hi] += 1
    return counts


def audit_report(principle: Principle, space: SearchSpace) -> dict:
    """JSON-friendly per-layer channel coverage over each layer's grid."""
    layers = []
    for i, spec in enumerate(space.layers):
        counts = cardinality_audit(principle, spec)
        layers.append(
            {
                "layer": i,
                "physical_width": int(principle.physical_width(spec)),
                "counts": counts.tolist(),
                "min": int(counts.min()),
                "max": int(counts.max()),
                "constant": bool((counts == counts[0]).all()),
            }
        )
    return {
        "principle": principle.kind,
        "overlap_mode": principle.overlap_mode,
        "layers": layers,
    }


def audit_csv(principle: Principle, spec: LayerSpec,
              width_set: Sequence[int] | None = None) -> str:
    """Per-channel counts as two-column CSV text (channel, count)."""
    counts = cardinality_audit(principle, spec, width_set)
    lines = ["channel,count"]
    lines += [f"{ch},{int(n)}" for ch, n in enumerate(counts, start=1)]
    return "\n".join(lines) + "\n"
