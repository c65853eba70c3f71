"""Imperative union-find reference implementations.

``NaiveUF`` follows the textbook pseudo-code without optimizations:
find walks to the root without mutating, link points one root at the
other.  ``RankUF`` adds union-by-rank and full path compression (the
recursive find rewrites every node on the path).  Both count the number
of parent-following steps taken by find, which is the cost measure the
benchmarks compare against.

``BruteForcePartition`` is an independent check that knows nothing about
trees: it keeps an explicit list of disjoint sets and does linear scans,
so it is only used at test scale.
"""

from __future__ import annotations


class UnionFindError(Exception):
    """Contract violation: unknown element or duplicate make."""


class NaiveUF:
    def __init__(self):
        self.p: dict = {}
        self.find_steps = 0

    def make(self, x):
        if x in self.p:
            raise UnionFindError(f"element {x!r} already made")
        self.p[x] = x

    def find(self, x):
        # Iterative transcription of: if x != p[x] then return find(p[x])
        # else return x.  (No mutation.)
        if x not in self.p:
            raise UnionFindError(f"element {x!r} not made")
        p = self.p
        while x != p[x]:
            self.find_steps += 1
            x = p[x]
        return x

    def find_recursive(self, x):
        if x not in self.p:
            raise UnionFindError(f"element {x!r} not made")
        if x != self.p[x]:
            self.find_steps += 1
            return self.find_recursive(self.p[x])
        return x

    def link(self, x, y):
        if x != y:
            self.p[y] = x

    def union(self, x, y):
        self.link(self.find(x), self.find(y))


class RankUF:
    def __init__(self, iterative_find: bool = False):
        self.p: dict = {}
        self.rank: dict = {}
        self.find_steps = 0
        self.iterative_find = iterative_find

    def make(self, x):
        if x in self.p:
            raise UnionFindError(f"element {x!r} already made")
        self.p[x] = x
        self.rank[x] = 0

    def find(self, x):
        if x not in self.p:
            raise UnionFindError(f"element {x!r} not made")
        if self.iterative_find:
            return self._find_two_pass(x)
        return self._find_recursive(x)

    def _find_recursive(self, x):
        # if x != p[x] then p[x] <- find(p[x]); return p[x]
        if x != self.p[x]:
            self.find_steps += 1
            self.p[x] = self._find_recursive(self.p[x])
        return self.p[x]

    def _find_two_pass(self, x):
        p = self.p
        root = x
        while root != p[root]:
            self.find_steps += 1
            root = p[root]
        while x != root:
            p[x], x = root, p[x]
        return root

    def link(self, x, y):
        if x != y:
            if self.rank[x] >= self.rank[y]:
                self.p[y] = x
                self.rank[x] = max(self.rank[x], self.rank[y] + 1)
            else:
                self.p[x] = y

    def union(self, x, y):
        self.link(self.find(x), self.find(y))

    def root_ranks(self) -> dict:
        """Rank of every current root (ranks of non-roots are stale)."""
        return {x: self.rank[x] for x in self.p if self.p[x] == x}


class BruteForcePartition:
    """Replays operations against an explicit list of disjoint sets."""

    def __init__(self):
        self.sets: list[set] = []

    def make(self, x):
        for s in self.sets:
            if x in s:
                raise UnionFindError(f"element {x!r} already made")
        self.sets.append({x})

    def _locate(self, x) -> set:
        for s in self.sets:
            if x in s:
                return s
        raise UnionFindError(f"element {x!r} not made")

    def find(self, x) -> frozenset:
        """The set containing x (there is no distinguished representative)."""
        return frozenset(self._locate(x))

    def union(self, x, y):
        sx = self._locate(x)
        sy = self._locate(y)
        if sx is not sy:
            sx.update(sy)
            self.sets.remove(sy)

    def same_set(self, x, y) -> bool:
        return y in self._locate(x)

    def partition(self) -> frozenset:
        return frozenset(frozenset(s) for s in self.sets)

    def apply(self, op):
        kind = op[0]
        if kind == "make":
            self.make(op[1])
        elif kind == "union":
            self.union(op[1], op[2])
        elif kind == "find":
            self._locate(op[1])
        else:
            raise ValueError(f"unknown op {op!r}")


def bf_partition(ops) -> frozenset:
    """Replay an operation sequence and return the resulting partition."""
    bf = BruteForcePartition()
    for op in ops:
        bf.apply(op)
    return bf.partition()


def apply_op(uf, op):
    """Apply a workload op to a NaiveUF or RankUF instance."""
    kind = op[0]
    if kind == "make":
        uf.make(op[1])
    elif kind == "union":
        uf.union(op[1], op[2])
    elif kind == "find":
        uf.find(op[1])
    else:
        raise ValueError(f"unknown op {op!r}")
