"""Width search space: per-layer grids, complements, and the FLOPs model.

A network width is a tuple of per-layer channel counts. Each layer draws its
candidates from an arithmetic grid between a base width and the layer's
maximum width; layers may be tied so they always receive equal widths. FLOPs
of a width are read from a per-connection lookup table covering every grid
pair, so budget checks are exact integer sums.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

Width = tuple[int, ...]


@dataclass(frozen=True)
class LayerSpec:
    """One searchable layer: max width, base width, and grid resolution.

    With base_width == 0 the grid is ``{d, 2d, ..., max_width}`` where
    ``d = max_width / grid_count``; with base_width > 0 it is
    ``{base_width + j*d : j = 0..grid_count-1}`` with
    ``d = (max_width - base_width) / (grid_count - 1)``. Both require the
    step to be a positive integer.
    """

    max_width: int
    base_width: int = 0
    grid_count: int = 1
    tie_group: str | None = None

    def __post_init__(self) -> None:
        if self.max_width < 1:
            raise ValueError(f"max_width must be >= 1, got {self.max_width}")
        if not 0 <= self.base_width < self.max_width:
            raise ValueError(
                f"base_width must satisfy 0 <= base < max, got "
                f"base={self.base_width} max={self.max_width}"
            )
        if self.grid_count < 1:
            raise ValueError(f"grid_count must be >= 1, got {self.grid_count}")
        self.step  # validate divisibility at construction

    @property
    def step(self) -> int:
        """Grid step d; raises for non-divisible (max, base, count) combos."""
        if self.base_width == 0:
            q, r = divmod(self.max_width, self.grid_count)
        else:
            if self.grid_count == 1:
                raise ValueError(
                    "grid_count == 1 requires base_width == 0 (step undefined)"
                )
            q, r = divmod(self.max_width - self.base_width, self.grid_count - 1)
        if r != 0 or q <= 0:
            raise ValueError(
                f"grid step for (max={self.max_width}, base={self.base_width}, "
                f"count={self.grid_count}) is not a positive integer"
            )
        return q

    @property
    def grid(self) -> tuple[int, ...]:
        return build_grid(self)


def build_grid(spec: LayerSpec) -> tuple[int, ...]:
    """Sorted candidate widths for one layer."""
    d = spec.step
    if spec.base_width == 0:
        return tuple(j * d for j in range(1, spec.grid_count + 1))
    return tuple(spec.base_width + j * d for j in range(spec.grid_count))


@dataclass(frozen=True)
class SearchSpace:
    """An ordered stack of searchable layers between fixed input/output dims."""

    layers: tuple[LayerSpec, ...]
    input_dim: int
    output_dim: int

    def __post_init__(self) -> None:
        if isinstance(self.layers, list):
            object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError("search space needs at least one layer")
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be >= 1")
        for group, members in self.tie_groups().items():
            grids = {self.layers[i].grid for i in members}
            if len(grids) > 1:
                raise ValueError(f"tied layers in group {group!r} have unequal grids")

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def grids(self) -> list[tuple[int, ...]]:
        return [spec.grid for spec in self.layers]

    def tie_groups(self) -> dict[str, list[int]]:
        """Mapping tie-group name -> member layer indices (untied omitted)."""
        groups: dict[str, list[int]] = {}
        for i, spec in enumerate(self.layers):
            if spec.tie_group is not None:
                groups.setdefault(spec.tie_group, []).append(i)
        return groups

    def genes(self) -> list[list[int]]:
        """Independent decision positions: tied layers collapse to one gene."""
        seen: dict[str, int] = {}
        out: list[list[int]] = []
        for i, spec in enumerate(self.layers):
            if spec.tie_group is None:
                out.append([i])
            elif spec.tie_group not in seen:
                seen[spec.tie_group] = len(out)
                out.append([i])
            else:
                out[seen[spec.tie_group]].append(i)
        return out

    def size(self) -> int:
        """Number of distinct widths (ties collapse factors)."""
        n = 1
        for gene in self.genes():
            n *= self.layers[gene[0]].grid_count
        return n

    def validate(self, width: Sequence[int]) -> Width:
        """Check grid membership and tie equality; returns the width tuple."""
        w = tuple(int(c) for c in width)
        if len(w) != self.num_layers:
            raise ValueError(f"width has {len(w)} entries, expected {self.num_layers}")
        for i, (c, spec) in enumerate(zip(w, self.layers)):
            if c not in spec.grid:
                raise ValueError(f"layer {i}: width {c} not on grid {spec.grid}")
        for group, members in self.tie_groups().items():
            if len({w[i] for i in members}) > 1:
                raise ValueError(f"tied layers {members} ({group!r}) have unequal widths")
        return w

    def enumerate_widths(self) -> Iterator[Width]:
        """All widths in the space, lexicographic by gene grids."""
        genes = self.genes()
        for combo in itertools.product(*(self.layers[g[0]].grid for g in genes)):
            w = [0] * self.num_layers
            for gene, c in zip(genes, combo):
                for i in gene:
                    w[i] = c
            yield tuple(w)

    def max_width_vector(self) -> Width:
        return tuple(spec.max_width for spec in self.layers)

    def min_width_vector(self) -> Width:
        return tuple(spec.grid[0] for spec in self.layers)

    def to_json(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "layers": [
                {
                    "max_width": s.max_width,
                    "base_width": s.base_width,
                    "grid_count": s.grid_count,
                    "tie_group": s.tie_group,
                }
                for s in self.layers
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SearchSpace":
        layers = tuple(
            LayerSpec(
                max_width=e["max_width"],
                base_width=e.get("base_width", 0),
                grid_count=e["grid_count"],
                tie_group=e.get("tie_group"),
            )
            for e in obj["layers"]
        )
        return cls(layers=layers, input_dim=obj["input_dim"], output_dim=obj["output_dim"])


def complement(width: Sequence[int], space: SearchSpace) -> Width:
    """Partner width trained alongside `width` so channel coverage balances.

    Per layer: with a base width, ``c -> max + base - c`` (a grid involution);
    without one, ``c -> max - c`` except that the full width maps to itself,
    since width 0 is not a network.
    """
    w = space.validate(width)
    out = []
    for c, spec in zip(w, space.layers):
        if spec.base_width > 0:
            out.append(spec.max_width + spec.base_width - c)
        elif c == spec.max_width:
            out.append(c)
        else:
            out.append(spec.max_width - c)
    return space.validate(out)


class FlopsTable:
    """Exact FLOPs lookup per dense connection and grid width pair.

    A space with L searchable layers has L+1 connections: input -> layer 1,
    layer i -> layer i+1, layer L -> output. Entry (conn, c_in, c_out) holds
    the integer FLOPs of that connection at those widths.
    """

    def __init__(self, space: SearchSpace, tables: list[dict[tuple[int, int], int]]):
        if len(tables) != space.num_layers + 1:
            raise ValueError(
                f"need {space.num_layers + 1} connection tables, got {len(tables)}"
            )
        self.space = space
        self.tables = tables
        for conn, (cins, couts) in enumerate(self._grid_pairs(space)):
            for ci in cins:
                for co in couts:
                    f = tables[conn].get((ci, co))
                    if f is None:
                        raise ValueError(f"connection {conn}: missing entry ({ci},{co})")
                    if f < 0:
                        raise ValueError(f"connection {conn}: negative FLOPs at ({ci},{co})")
            # cost must not drop when either endpoint widens
            for co in couts:
                col = [tables[conn][(ci, co)] for ci in sorted(cins)]
                if any(b < a for a, b in zip(col, col[1:])):
                    raise ValueError(f"connection {conn}: FLOPs decrease in input width")
            for ci in cins:
                row = [tables[conn][(ci, co)] for co in sorted(couts)]
                if any(b < a for a, b in zip(row, row[1:])):
                    raise ValueError(f"connection {conn}: FLOPs decrease in output width")

    @staticmethod
    def _grid_pairs(space: SearchSpace) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
        grids = space.grids()
        pairs = [((space.input_dim,), grids[0])]
        pairs += [(grids[i], grids[i + 1]) for i in range(space.num_layers - 1)]
        pairs.append((grids[-1], (space.output_dim,)))
        return pairs

    @classmethod
    def from_dense(cls, space: SearchSpace) -> "FlopsTable":
        """Dense multiply+add convention: F = 2 * c_in * c_out."""
        tables = []
        for cins, couts in cls._grid_pairs(space):
            tables.append({(ci, co): 2 * ci * co for ci in cins for co in couts})
        return cls(space, tables)

    def connection_flops(self, conn: int, c_in: int, c_out: int) -> int:
        try:
            return self.tables[conn][(c_in, c_out)]
        except KeyError:
            raise ValueError(
                f"connection {conn}: no FLOPs entry for widths ({c_in},{c_out})"
            ) from None

    def total(self, width: Sequence[int]) -> int:
        w = self.space.validate(width)
        chain = (self.space.input_dim,) + w + (self.space.output_dim,)
        return sum(
            self.connection_flops(i, chain[i], chain[i + 1]) for i in range(len(chain) - 1)
        )

    def max_total(self) -> int:
        return self.total(self.space.max_width_vector())

    def min_total(self) -> int:
        return self.total(self.space.min_width_vector())

    def to_json(self) -> dict:
        return {
            "space": self.space.to_json(),
            "connections": [
                sorted([ci, co, f] for (ci, co), f in table.items())
                for table in self.tables
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FlopsTable":
        space = SearchSpace.from_json(obj["space"])
        tables = [
            {(int(ci), int(co)): int(f) for ci, co, f in entries}
            for entries in obj["connections"]
        ]
        return cls(space, tables)


def flops(width: Sequence[int], table: FlopsTable) -> int:
    """Total FLOPs of a width; a missing table entry is a construction bug."""
    return table.total(width)


def sample_uniform(space: SearchSpace, rng: np.random.Generator) -> Width:
    """One width drawn uniformly per gene (tied layers drawn once)."""
    w = [0] * space.num_layers
    for gene in space.genes():
        grid = space.layers[gene[0]].grid
        c = int(grid[rng.integers(len(grid))])
        for i in gene:
            w[i] = c
    return tuple(w)


def save_space(space: SearchSpace, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(space.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_space(path: str) -> SearchSpace:
    with open(path, encoding="utf-8") as fh:
        return SearchSpace.from_json(json.load(fh))


def save_flops(table: FlopsTable, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(table.to_json(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_flops(path: str) -> FlopsTable:
    with open(path, encoding="utf-8") as fh:
        return FlopsTable.from_json(json.load(fh))
