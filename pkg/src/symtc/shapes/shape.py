"""Multi-object landmark shapes: named closed polygons in pixel coordinates (x, y)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LUMBAR_OBJECTS = ("L1", "L2", "L3", "L4", "L5", "S1", "D1", "D2", "D3", "D4", "D5")
VERTEBRAE = frozenset(("L1", "L2", "L3", "L4", "L5", "S1"))


class TopologyError(ValueError):
    pass


@dataclass
class Shape:
    names: tuple[str, ...]
    polygons: list[np.ndarray]

    def __post_init__(self):
        self.names = tuple(self.names)
        self.polygons = [np.asarray(p, dtype=np.float64).reshape(-1, 2) for p in self.polygons]
        if len(self.names) != len(self.polygons):
            raise TopologyError(f"{len(self.names)} names for {len(self.polygons)} polygons")
        if len(set(self.names)) != len(self.names):
            raise TopologyError("duplicate object names")

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(len(p) for p in self.polygons)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.polygons[self.names.index(name)]

    def points(self) -> np.ndarray:
        """All landmarks stacked, (K, 2)."""
        if not self.polygons:
            return np.zeros((0, 2))
        return np.concatenate(self.polygons, axis=0)

    def to_vector(self) -> np.ndarray:
        return self.points().ravel()

    @classmethod
    def from_vector(cls, vec, names, counts) -> "Shape":
        pts = np.asarray(vec, dtype=np.float64).reshape(-1, 2)
        if len(pts) != sum(counts):
            raise TopologyError(f"vector holds {len(pts)} points, topology expects {sum(counts)}")
        splits = np.cumsum(counts)[:-1]
        return cls(names, np.split(pts, splits))

    def with_points(self, pts) -> "Shape":
        return Shape.from_vector(pts, self.names, self.counts)

    def translated(self, dx: float, dy: float) -> "Shape":
        return self.with_points(self.points() + np.array([dx, dy]))

    def same_topology(self, other: "Shape") -> bool:
        return self.names == other.names and self.counts == other.counts

    def check_topology(self, other: "Shape", what: str = "shape") -> None:
        if self.names != other.names:
            raise TopologyError(f"{what}: object order {other.names} != {self.names}")
        for name, a, b in zip(self.names, self.counts, other.counts):
            if a != b:
                raise TopologyError(f"{what}: object {name} has {b} points, expected {a}")

    def to_dict(self) -> dict:
        return {"objects": [{"name": n, "points": p.tolist()} for n, p in zip(self.names, self.polygons)]}

    @classmethod
    def from_dict(cls, d: dict) -> "Shape":
        objs = d["objects"]
        return cls([o["name"] for o in objs], [np.asarray(o["points"], dtype=np.float64) for o in objs])

    def __eq__(self, other) -> bool:
        return (isinstance(other, Shape) and self.same_topology(other)
                and all(np.array_equal(a, b) for a, b in zip(self.polygons, other.polygons)))


def _segments_cross(p1, p2, p3, p4) -> bool:
    def orient(a, b, c):
        return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))

    def on_seg(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    d1, d2, d3, d4 = orient(p3, p4, p1), orient(p3, p4, p2), orient(p1, p2, p3), orient(p1, p2, p4)
    if d1 * d2 < 0 and d3 * d4 < 0:
        return True
    return ((d1 == 0 and on_seg(p3, p4, p1)) or (d2 == 0 and on_seg(p3, p4, p2))
            or (d3 == 0 and on_seg(p1, p2, p3)) or (d4 == 0 and on_seg(p1, p2, p4)))


def self_intersections(poly) -> list[tuple[int, int]]:
    """Pairs of non-adjacent edge indices that touch or cross."""
    poly = np.asarray(poly, dtype=np.float64)
    n = len(poly)
    hits = []
    for i in range(n):
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]):
                hits.append((i, j))
    return hits


def check_simple(shape: Shape) -> dict[str, list[tuple[int, int]]]:
    """Per-object self-intersections; an empty dict means every polygon is simple."""
    return {n: hits for n, p in zip(shape.names, shape.polygons) if (hits := self_intersections(p))}
