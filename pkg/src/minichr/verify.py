"""Step-by-step equivalence checking of the rule programs against the
imperative references.

For one seed the battery runs four computations in lockstep over a random
workload: the basic variant against the naive reference, the rank variant
against the optimized reference, and both against the brute-force
partition.  After every single operation it compares parent maps, root
ranks, per-operation find step counts, and the induced partition, and can
additionally check the structural invariants (forest shape, rank bounds,
path compression, monotone ranks, no leftover operation constraints).

The first mismatch is reported as a :class:`Divergence` with enough
context to replay it; ``minimize_ops`` shrinks a failing operation list
to a smaller witness by greedily dropping operations.
"""

from __future__ import annotations

from dataclasses import dataclass

from .bench import SplitMix64, element_name, gen_random_workload
from .oracle import BruteForcePartition, NaiveUF, RankUF
from .programs import ForestViolation, UfSession


@dataclass
class Divergence:
    seed: int
    op_index: int
    op: tuple
    kind: str
    message: str

    def describe(self) -> str:
        return (f"seed {self.seed}, op {self.op_index} {self.op}: "
                f"{self.kind}: {self.message}")


@dataclass
class SeedReport:
    seed: int
    ops: list
    divergence: Divergence | None
    ops_checked: int = 0


def mixed_random_ops(n: int, op_count: int, seed: int) -> list[tuple]:
    """N makes followed by op_count randomly interleaved unions and finds."""
    rng = SplitMix64(seed)
    ops: list[tuple] = [("make", element_name(i)) for i in range(1, n + 1)]
    for _ in range(op_count):
        if rng.next() % 2 == 0:
            a = rng.next() % n
            b = rng.next() % n
            ops.append(("union", element_name(a + 1), element_name(b + 1)))
        else:
            c = rng.next() % n
            ops.append(("find", element_name(c + 1)))
    return ops


def _partition_matches(roots: dict, bf: BruteForcePartition) -> bool:
    # Each brute-force set must map onto exactly one distinct root.
    claimed = set()
    for s in bf.sets:
        it = iter(s)
        first = roots[next(it)]
        for x in it:
            if roots[x] != first:
                return False
        if first in claimed:
            return False
        claimed.add(first)
    return True


def _tree_sizes(roots: dict) -> dict:
    sizes: dict = {}
    for x in roots:
        r = roots[x]
        sizes[r] = sizes.get(r, 0) + 1
    return sizes


def _heights(parents: dict, roots: dict) -> dict:
    depth: dict = {}
    depth_get = depth.get
    for x in parents:
        if x in depth:
            continue
        path = []
        cur = x
        d = None
        while True:
            p = parents[cur]
            if p == cur:
                d = depth_get(cur)
                if d is None:
                    depth[cur] = d = 0
                break
            path.append(cur)
            cur = p
            d = depth_get(cur)
            if d is not None:
                break
        for y in reversed(path):
            d += 1
            depth[y] = d
    heights: dict = {}
    for x, d in depth.items():
        r = roots[x]
        if d > heights.get(r, 0):
            heights[r] = d
    return heights


def _path_to_root(parents: dict, x) -> list:
    path = []
    while parents[x] != x:
        path.append(x)
        x = parents[x]
    return path


class _SeedChecker:
    def __init__(self, seed: int, ops, *, check_invariants: bool,
                 store_mode: str, swap_link_rules: bool):
        self.seed = seed
        self.ops = ops
        self.check_invariants = check_invariants
        self.basic = UfSession("basic", store_mode=store_mode)
        self.naive = NaiveUF()
        self.rank = UfSession("rank", store_mode=store_mode,
                              swap_link_rules=swap_link_rules)
        self.rank_oracle = RankUF()
        self.bf = BruteForcePartition()
        self.prev_root_ranks: dict = {}
        self.prev_rank_parents: dict = {}

    def run(self) -> SeedReport:
        for i, op in enumerate(self.ops):
            divergence = self.step(i, op)
            if divergence is not None:
                return SeedReport(self.seed, self.ops, divergence, i)
        return SeedReport(self.seed, self.ops, None, len(self.ops))

    def fail(self, i, op, kind, message) -> Divergence:
        return Divergence(self.seed, i, op, kind, message)

    def step(self, i, op) -> Divergence | None:
        kind = op[0]
        naive_before = self.naive.find_steps
        rank_before = self.rank_oracle.find_steps
        pre_path = None
        found = None
        if kind == "make":
            self.naive.make(op[1])
            self.rank_oracle.make(op[1])
            self.bf.make(op[1])
            self.basic.make(op[1])
            self.rank.make(op[1])
        elif kind == "union":
            self.naive.union(op[1], op[2])
            self.rank_oracle.union(op[1], op[2])
            self.bf.union(op[1], op[2])
            self.basic.union(op[1], op[2])
            self.rank.union(op[1], op[2])
        else:
            self.naive.find(op[1])
            self.rank_oracle.find(op[1])
            if self.check_invariants:
                # the decode of the previous step is the pre-find state
                pre_path = _path_to_root(self.prev_rank_parents, op[1])
            found = self.rank.find(op[1])
            self.basic.find(op[1])

        try:
            basic_parents, _ranks, basic_roots = self.basic.decode_forest()
            rank_parents, rank_ranks, rank_roots = self.rank.decode_forest()
        except ForestViolation as exc:
            return self.fail(i, op, "forest", str(exc))
        self.prev_rank_parents = rank_parents

        if basic_parents != self.naive.p:
            return self.fail(i, op, "structure",
                             f"basic parents {basic_parents} != naive {self.naive.p}")
        if rank_parents != self.rank_oracle.p:
            return self.fail(i, op, "structure",
                             f"rank parents {rank_parents} != oracle {self.rank_oracle.p}")
        # parents are equal, so the root sets coincide; compare rank per root
        oracle_rank = self.rank_oracle.rank
        for r, rk in rank_ranks.items():
            if rk != oracle_rank[r]:
                return self.fail(i, op, "structure",
                                 f"rank of root {r!r} is {rk}, oracle has {oracle_rank[r]}")

        basic_steps = self.basic.op_log[-1].find_steps
        rank_steps = self.rank.op_log[-1].find_steps
        if basic_steps != self.naive.find_steps - naive_before:
            return self.fail(i, op, "counters",
                             f"basic find steps {basic_steps} != "
                             f"naive {self.naive.find_steps - naive_before}")
        if rank_steps != self.rank_oracle.find_steps - rank_before:
            return self.fail(i, op, "counters",
                             f"rank find steps {rank_steps} != "
                             f"oracle {self.rank_oracle.find_steps - rank_before}")

        if not _partition_matches(basic_roots, self.bf):
            return self.fail(i, op, "partition", "basic partition mismatch")
        if not _partition_matches(rank_roots, self.bf):
            return self.fail(i, op, "partition", "rank partition mismatch")

        if self.check_invariants:
            d = self.invariants(i, op, rank_parents, rank_ranks, rank_roots, pre_path,
                                found if kind == "find" else None)
            if d is not None:
                return d
        return None

    def invariants(self, i, op, parents, ranks, roots, pre_path, found) -> Divergence | None:
        sizes = _tree_sizes(roots)
        for r, rank in ranks.items():
            if rank is None:
                continue
            if (1 << rank) > sizes[r]:
                return self.fail(i, op, "invariant",
                                 f"2^rank > tree size at root {r!r} "
                                 f"(rank {rank}, size {sizes[r]})")
            if rank < self.prev_root_ranks.get(r, 0):
                return self.fail(i, op, "invariant",
                                 f"rank of {r!r} decreased")
        self.prev_root_ranks = {r: rank for r, rank in ranks.items() if rank is not None}
        heights = _heights(parents, roots)
        for r, h in heights.items():
            if ranks.get(r) is not None and h > ranks[r]:
                return self.fail(i, op, "invariant",
                                 f"tree height {h} exceeds rank {ranks[r]} at {r!r}")
        oracle_rank = self.rank_oracle.rank
        for x, p in parents.items():
            if x != p and oracle_rank[x] >= oracle_rank[p]:
                return self.fail(i, op, "invariant",
                                 f"rank not strictly increasing along {x!r} -> {p!r}")
        if pre_path is not None:
            for x in pre_path:
                if parents[x] != found:
                    return self.fail(i, op, "invariant",
                                     f"path compression incomplete: {x!r} points at "
                                     f"{parents[x]!r}, not {found!r}")
        return None


def check_seed(n: int, seed: int, *, op_count: int | None = None,
               check_invariants: bool = False, store_mode: str = "doubling",
               swap_link_rules: bool = False) -> SeedReport:
    """Run the full lockstep battery for one seed."""
    if op_count is None:
        ops = gen_random_workload(n, seed).ops
    else:
        ops = mixed_random_ops(n, op_count, seed)
    checker = _SeedChecker(seed, ops, check_invariants=check_invariants,
                           store_mode=store_mode, swap_link_rules=swap_link_rules)
    return checker.run()


def minimize_ops(ops: list, diverges) -> list:
    """Greedy shrink of a failing op list (callers pass the failing
    prefix): drop operations one by one while the failure persists.

    ``diverges(ops)`` must return True when the op list still fails.
    """
    current = list(ops)
    assert diverges(current), "op list does not diverge"
    i = len(current) - 1
    while i >= 0:
        candidate = current[:i] + current[i + 1 :]
        try:
            still = diverges(candidate)
        except Exception:
            still = False  # dropping a make can break the contract; keep the op
        if still:
            current = candidate
        i -= 1
    return current
