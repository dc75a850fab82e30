"""Variant grouping: single-linkage clustering on the distance 1 - |correlation|.

Cutting a single-linkage dendrogram at a fixed height equals taking connected
components of the graph with an edge wherever the distance is below the
cutoff, so the implementation is a union-find over thresholded pairs. Any two
features in different output groups have |correlation| <= 1 - cutoff.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corr import CorrelationMatrix, ValidationError


@dataclass(frozen=True, eq=False)
class GroupStructure:
    """Partition of features 0..p-1 into G groups.

    Group ids are canonical: ordered by smallest member index, members sorted
    ascending.
    """

    assignment: np.ndarray
    members: tuple = field(default=())
    G: int = 0

    def __post_init__(self):
        raw = np.ascontiguousarray(self.assignment, dtype=np.int64)
        if raw.ndim != 1 or raw.shape[0] < 1:
            raise ValidationError("assignment must be a nonempty vector of group ids")
        ids, canon = np.unique(raw, return_inverse=True)
        # relabel so that group id order follows smallest member index
        first_seen = np.full(ids.shape[0], raw.shape[0], dtype=np.int64)
        for j in range(raw.shape[0] - 1, -1, -1):
            first_seen[canon[j]] = j
        order = np.argsort(first_seen, kind="stable")
        relabel = np.empty_like(order)
        relabel[order] = np.arange(order.shape[0])
        canon = relabel[canon]
        members = tuple(
            tuple(int(i) for i in np.flatnonzero(canon == g)) for g in range(ids.shape[0])
        )
        canon.flags.writeable = False
        object.__setattr__(self, "assignment", canon)
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "G", int(ids.shape[0]))

    @property
    def p(self) -> int:
        return self.assignment.shape[0]

    def sizes(self) -> np.ndarray:
        return np.array([len(m) for m in self.members], dtype=np.int64)


def singleton_groups(p: int) -> GroupStructure:
    return GroupStructure(np.arange(p))


@dataclass(frozen=True)
class ClusterConfig:
    cutoff: float = 0.25
    linkage: str = "single"

    def __post_init__(self):
        if not 0.0 < self.cutoff <= 1.0:
            raise ValidationError(f"cutoff must be in (0, 1], got {self.cutoff}")
        if self.linkage != "single":
            raise ValidationError(f"only single linkage is supported, got {self.linkage!r}")


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, i: int) -> int:
        parent = self.parent
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(self, i: int, j: int) -> None:
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            # anchor to the smaller root so labels stay order-stable
            if rj < ri:
                ri, rj = rj, ri
            self.parent[rj] = ri


def cluster(sigma: CorrelationMatrix, config: ClusterConfig = ClusterConfig()) -> GroupStructure:
    """Groups = connected components of {(i, j) : 1 - |sigma_ij| < cutoff}."""
    p = sigma.p
    dist = 1.0 - np.abs(sigma.values)
    ii, jj = np.nonzero(np.triu(dist < config.cutoff, k=1))
    uf = _UnionFind(p)
    for i, j in zip(ii.tolist(), jj.tolist()):
        uf.union(i, j)
    roots = np.array([uf.find(i) for i in range(p)], dtype=np.int64)
    return GroupStructure(roots)


def save_groups(path, groups: GroupStructure) -> None:
    """CSV with header feature_index,group_id, or JSON by extension."""
    path = Path(path)
    if path.suffix == ".csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["feature_index", "group_id"])
            for idx, gid in enumerate(groups.assignment.tolist()):
                writer.writerow([idx, gid])
    elif path.suffix == ".json":
        payload = {
            "G": groups.G,
            "assignment": groups.assignment.tolist(),
            "members": [list(m) for m in groups.members],
        }
        path.write_text(json.dumps(payload, indent=2) + "\n")
    else:
        raise ValidationError(f"unsupported group file extension: {path.suffix!r}")


def load_groups(path) -> GroupStructure:
    path = Path(path)
    if path.suffix == ".csv":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValidationError(f"empty group file: {path}")
        assignment = np.full(len(rows), -1, dtype=np.int64)
        for row in rows:
            assignment[int(row["feature_index"])] = int(row["group_id"])
        if np.any(assignment < 0):
            raise ValidationError("group assignment does not cover all feature indices")
        return GroupStructure(assignment)
    if path.suffix == ".json":
        payload = json.loads(path.read_text())
        return GroupStructure(np.asarray(payload["assignment"], dtype=np.int64))
    raise ValidationError(f"unsupported group file extension: {path.suffix!r}")
