"""Directed networks, restricted parent-set spaces, and structural Hamming
distances.

Vertices are labelled 1..P in every public interface.  A parent set is stored
as an integer bitmask (bit v-1 set when vertex v is a parent), so the
structural Hamming distance between two sets is the popcount of an XOR.
Self-loops are legal edges everywhere: an edge p -> p relates p at time t-1
to p at time t, so the static projection of the graph may be cyclic.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "parent_set",
    "set_members",
    "shd",
    "log_prior_weight",
    "Network",
    "ParentSpace",
    "enumerate_parent_space",
    "parent_space_size",
    "load_network",
    "save_network",
    "write_edge_csv",
]


def parent_set(members: Iterable[int], num_vertices: int) -> int:
    """Build a parent-set bitmask from 1-based vertex labels."""
    mask = 0
    for v in members:
        v = int(v)
        if not 1 <= v <= num_vertices:
            raise ValueError(f"vertex {v} outside 1..{num_vertices}")
        bit = 1 << (v - 1)
        if mask & bit:
            raise ValueError(f"duplicate vertex {v} in parent set")
        mask |= bit
    return mask


def set_members(mask: int) -> tuple[int, ...]:
    """Return the 1-based vertex labels of a parent-set bitmask, ascending."""
    if mask < 0:
        raise ValueError("negative parent-set mask")
    out = []
    v = 1
    while mask:
        if mask & 1:
            out.append(v)
        mask >>= 1
        v += 1
    return tuple(out)


def shd(a: int, b: int) -> int:
    """Structural Hamming distance between two parent sets: |a symdiff b|."""
    return (int(a) ^ int(b)).bit_count()


def log_prior_weight(candidate: int, anchor: int, inverse_temperature: float) -> float:
    """Unnormalized Gibbs log weight -tau * shd(candidate, anchor).

    Used for both prior layers: tau=eta couples the latent network to the
    prior network, tau=lambda couples each individual network to the latent
    one.  tau=0 gives a uniform weight; tau=inf gives a point mass (0 at the
    anchor, -inf elsewhere).  Normalization over the restricted space is the
    caller's business.
    """
    if not inverse_temperature >= 0.0:
        raise ValueError(f"inverse temperature must be >= 0, got {inverse_temperature}")
    d = shd(candidate, anchor)
    if d == 0:
        return 0.0
    if math.isinf(inverse_temperature):
        return -math.inf
    return -inverse_temperature * d


@dataclass(frozen=True)
class Network:
    """A directed graph on ``num_vertices`` vertices, stored per-vertex as
    parent-set bitmasks (``parents[p-1]`` is the parent set of vertex p)."""

    num_vertices: int
    parents: tuple[int, ...]

    def __post_init__(self) -> None:
        P = self.num_vertices
        if P <= 0:
            raise ValueError("num_vertices must be positive")
        if len(self.parents) != P:
            raise ValueError(f"expected {P} parent sets, got {len(self.parents)}")
        full = (1 << P) - 1
        for p, mask in enumerate(self.parents, start=1):
            if mask < 0 or mask & ~full:
                raise ValueError(f"parent set of vertex {p} contains vertices outside 1..{P}")

    @classmethod
    def empty(cls, num_vertices: int) -> "Network":
        return cls(num_vertices, (0,) * num_vertices)

    @classmethod
    def complete(cls, num_vertices: int) -> "Network":
        full = (1 << num_vertices) - 1
        return cls(num_vertices, (full,) * num_vertices)

    @classmethod
    def from_parent_lists(cls, num_vertices: int, lists: Sequence[Iterable[int]]) -> "Network":
        return cls(num_vertices, tuple(parent_set(m, num_vertices) for m in lists))

    @classmethod
    def from_adjacency(cls, adj: np.ndarray) -> "Network":
        """Build from a (P, P) 0/1 matrix with adj[i, p] = 1 iff edge i+1 -> p+1."""
        adj = np.asarray(adj)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValueError("adjacency must be a square matrix")
        P = adj.shape[0]
        masks = []
        for p in range(P):
            mask = 0
            for i in range(P):
                if adj[i, p]:
                    mask |= 1 << i
            masks.append(mask)
        return cls(P, tuple(masks))

    def adjacency(self) -> np.ndarray:
        """(P, P) uint8 matrix with entry [i-1, p-1] = 1 iff edge i -> p."""
        P = self.num_vertices
        adj = np.zeros((P, P), dtype=np.uint8)
        for p, mask in enumerate(self.parents):
            for i in set_members(mask):
                adj[i - 1, p] = 1
        return adj

    def parent_lists(self) -> list[list[int]]:
        return [list(set_members(m)) for m in self.parents]

    @property
    def num_edges(self) -> int:
        return sum(m.bit_count() for m in self.parents)

    def edges(self) -> list[tuple[int, int]]:
        """All (source, target) pairs, 1-based, target-major order."""
        return [(i, p + 1) for p, mask in enumerate(self.parents) for i in set_members(mask)]

    def to_json_dict(self) -> dict:
        return {"P": self.num_vertices, "parents": self.parent_lists()}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "Network":
        return cls.from_parent_lists(int(obj["P"]), obj["parents"])


def shd_network(a: Network, b: Network) -> int:
    """Total structural Hamming distance, summed over per-vertex parent sets."""
    if a.num_vertices != b.num_vertices:
        raise ValueError(
            f"vertex-count mismatch: {a.num_vertices} vs {b.num_vertices}"
        )
    return sum(shd(x, y) for x, y in zip(a.parents, b.parents))


def save_network(net: Network, path) -> None:
    with open(path, "w") as fh:
        json.dump(net.to_json_dict(), fh, indent=1)
        fh.write("\n")


def load_network(path) -> Network:
    with open(path) as fh:
        return Network.from_json_dict(json.load(fh))


def write_edge_csv(net: Network, path) -> None:
    """Edge-list CSV (source,target) for interchange with plotting tools."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source", "target"])
        writer.writerows(net.edges())


def parent_space_size(P: int, c: int) -> int:
    """Number of parent sets of size <= c over P vertices."""
    return sum(math.comb(P, k) for k in range(c + 1))


@dataclass(frozen=True, eq=False)
class ParentSpace:
    """All parent sets over {1..P} with cardinality <= c, canonically ordered
    by cardinality then lexicographically on the sorted member tuple.

    The order is deterministic and identical across runs; score caches and
    posterior arrays are indexed by position in this order.
    """

    P: int
    c: int
    masks: np.ndarray  # (M,) uint64, read-only

    @property
    def size(self) -> int:
        return int(self.masks.shape[0])

    def __len__(self) -> int:
        return self.size

    @cached_property
    def index(self) -> dict[int, int]:
        return {int(m): i for i, m in enumerate(self.masks)}

    @cached_property
    def member_tuples(self) -> tuple[tuple[int, ...], ...]:
        return tuple(set_members(int(m)) for m in self.masks)

    @cached_property
    def membership(self) -> np.ndarray:
        """(M, P) float64 indicator matrix: entry [s, i-1] = 1 iff i in set s."""
        out = np.zeros((self.size, self.P), dtype=np.float64)
        for s, members in enumerate(self.member_tuples):
            for v in members:
                out[s, v - 1] = 1.0
        out.setflags(write=False)
        return out

    @cached_property
    def shd_matrix(self) -> np.ndarray:
        """(M, M) int16 matrix of pairwise structural Hamming distances."""
        x = self.masks
        d = np.bitwise_count(x[:, None] ^ x[None, :]).astype(np.int16)
        d.setflags(write=False)
        return d

    def shd_to(self, anchor: int) -> np.ndarray:
        """(M,) distances from every set in the space to an arbitrary mask."""
        if anchor < 0 or anchor >> self.P:
            raise ValueError(f"anchor mask outside vertex universe 1..{self.P}")
        return np.bitwise_count(self.masks ^ np.uint64(anchor)).astype(np.int16)

    @cached_property
    def canonical_hash(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.P}:{self.c}:".encode())
        h.update(self.masks.tobytes())
        return h.hexdigest()


def enumerate_parent_space(P: int, c: int) -> ParentSpace:
    """Enumerate every parent set of cardinality <= c in canonical order.

    Self-loop candidates (p in its own parent set) are included: the edge
    p -> p crosses time slices and is meaningful.
    """
    if P <= 0:
        raise ValueError(f"P must be positive, got {P}")
    if c < 0 or c > P:
        raise ValueError(f"in-degree cap must satisfy 0 <= c <= P, got c={c}, P={P}")
    if P > 63:
        raise ValueError("bitmask representation supports at most 63 vertices")
    masks = [
        sum(1 << (v - 1) for v in combo)
        for k in range(c + 1)
        for combo in itertools.combinations(range(1, P + 1), k)
    ]
    arr = np.array(masks, dtype=np.uint64)
    arr.setflags(write=False)
    return ParentSpace(P=P, c=c, masks=arr)
