"""Workload generation and counter-based scaling measurements.

Workloads are fully deterministic: the only randomness source is a
splitmix64 generator seeded explicitly, so identical (N, seed) pairs give
identical operation lists on any platform.

Two workload shapes are provided:

* random: N makes, then N unions and N finds with arguments drawn
  uniformly among the elements;
* contrived: equal-size trees are unioned pairwise round by round until
  one tree remains (N must be a power of two; every union is an
  equal-rank tie), optionally followed by N seeded random finds.

Scaling runs record counters, not wall time: wall time is reported in the
CSV for context but never decides anything.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .oracle import NaiveUF, RankUF, apply_op, bf_partition
from .programs import UfSession, Variant

_M64 = (1 << 64) - 1

CSV_HEADER = "variant,workload,N,M,find_steps,firings,wakes,probes,wall_ns"

ORACLE_TARGETS = ("naive_oracle", "rank_oracle")
CHR_TARGETS = ("basic", "rank")


class SplitMix64:
    """splitmix64: 64-bit state advanced by the golden-gamma constant."""

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & _M64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _M64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
        return z ^ (z >> 31)


def element_name(i: int) -> str:
    """Benchmark elements are the atoms e1..eN."""
    return f"e{i}"


@dataclass
class WorkloadSpec:
    """A reproducible operation sequence over N elements."""

    kind: str  # 'random' | 'contrived'
    n: int
    seed: int | None
    ops: list[tuple]

    @property
    def total_ops(self) -> int:
        return len(self.ops)


def gen_random_workload(n: int, seed: int) -> WorkloadSpec:
    """N makes, then N random unions, then N random finds."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = SplitMix64(seed)
    ops: list[tuple] = [("make", element_name(i)) for i in range(1, n + 1)]
    for _ in range(n):
        a = rng.next() % n
        b = rng.next() % n
        ops.append(("union", element_name(a + 1), element_name(b + 1)))
    for _ in range(n):
        c = rng.next() % n
        ops.append(("find", element_name(c + 1)))
    return WorkloadSpec("random", n, seed, ops)


def gen_contrived_workload(n: int, *, finds: bool = False,
                           seed: int = 0) -> WorkloadSpec:
    """Pairwise merge schedule: in round r, union(e_i, e_{i + 2^(r-1)})
    for every i = 1 (mod 2^r); N-1 unions in total.  With ``finds``, N
    seeded random finds follow the unions."""
    if n < 1 or n & (n - 1):
        raise ValueError("contrived workloads need a power-of-two element count")
    ops: list[tuple] = [("make", element_name(i)) for i in range(1, n + 1)]
    half = 1
    while half < n:
        step = half * 2
        for i in range(1, n + 1, step):
            ops.append(("union", element_name(i), element_name(i + half)))
        half = step
    if finds:
        rng = SplitMix64(seed)
        for _ in range(n):
            c = rng.next() % n
            ops.append(("find", element_name(c + 1)))
    return WorkloadSpec("contrived", n, seed if finds else None, ops)


def format_ops(spec: WorkloadSpec) -> str:
    """One op per line, the golden-file format for seeded workloads."""
    lines = []
    for op in spec.ops:
        lines.append(" ".join(str(p) for p in op))
    return "\n".join(lines) + "\n"


@dataclass
class Metrics:
    """Counters for one workload run on one target."""

    target: str
    workload: str
    n: int
    total_ops: int
    find_steps: int = 0
    firings: int = 0
    wake_events: int = 0
    partner_probes: int = 0
    inserts: int = 0
    deletes: int = 0
    wall_ns: int = 0
    rule_firings: dict = field(default_factory=dict)
    per_op_find_steps: list = field(default_factory=list)

    def csv_row(self) -> str:
        return (f"{self.target},{self.workload},{self.n},{self.total_ops},"
                f"{self.find_steps},{self.firings},{self.wake_events},"
                f"{self.partner_probes},{self.wall_ns}")


def run_workload(target: str, spec: WorkloadSpec, *, store_mode: str = "doubling",
                 presize: int | None = None, check_partition: bool | None = None,
                 per_op: bool = False) -> Metrics:
    """Execute a workload on a CHR session or an imperative oracle.

    Unless disabled, runs at or below 512 elements are cross-checked
    against the brute-force partition at the end.
    """
    if check_partition is None:
        check_partition = spec.n <= 512
    metrics = Metrics(target=target, workload=spec.kind, n=spec.n,
                      total_ops=spec.total_ops)
    start = time.perf_counter_ns()
    if target in CHR_TARGETS:
        session = UfSession(Variant.parse(target), store_mode=store_mode,
                            presize=presize)
        for op in spec.ops:
            session.apply(op)
        metrics.wall_ns = time.perf_counter_ns() - start
        counters = session.engine.counters()
        metrics.find_steps = counters.rule_firings.get("findNode", 0)
        metrics.firings = counters.total_firings
        metrics.wake_events = counters.wake_events
        metrics.partner_probes = counters.partner_probes
        metrics.inserts = counters.inserts
        metrics.deletes = counters.deletes
        metrics.rule_firings = counters.rule_firings
        if per_op:
            metrics.per_op_find_steps = [r.find_steps for r in session.op_log]
        if check_partition:
            _check_against_bf(spec, _partition_of_parents(session.parent_map()))
    elif target in ORACLE_TARGETS:
        uf = NaiveUF() if target == "naive_oracle" else RankUF()
        per_op_steps = []
        for op in spec.ops:
            before = uf.find_steps
            apply_op(uf, op)
            if per_op:
                per_op_steps.append(uf.find_steps - before)
        metrics.wall_ns = time.perf_counter_ns() - start
        metrics.find_steps = uf.find_steps
        metrics.per_op_find_steps = per_op_steps
        if check_partition:
            _check_against_bf(spec, _partition_of_parents(uf.p))
    else:
        raise ValueError(f"unknown target {target!r}")
    return metrics


def _partition_of_parents(parents: dict) -> frozenset:
    roots: dict = {}
    groups: dict = {}

    def root_of(x):
        r = roots.get(x)
        if r is not None:
            return r
        path = []
        while parents[x] != x:
            path.append(x)
            x = parents[x]
            r = roots.get(x)
            if r is not None:
                break
        r = r if r is not None else x
        for y in path:
            roots[y] = r
        roots[x] = r
        return r

    for x in parents:
        groups.setdefault(root_of(x), []).append(x)
    return frozenset(frozenset(g) for g in groups.values())


def _check_against_bf(spec: WorkloadSpec, partition: frozenset):
    expected = bf_partition(spec.ops)
    if partition != expected:
        raise AssertionError(
            f"partition mismatch on {spec.kind} workload N={spec.n} seed={spec.seed}")


@dataclass
class ScalingRow:
    n: int
    metrics: Metrics
    ratios: dict = field(default_factory=dict)


def scaling_report(target: str, kind: str, sizes, repetitions: int = 1, *,
                   store_mode: str = "doubling", presize: int | None = None,
                   seed: int = 1, contrived_finds: bool = True) -> list[ScalingRow]:
    """Run a workload family over ascending sizes; mean counters per size
    plus doubling ratios against the previous size."""
    rows: list[ScalingRow] = []
    for n in sizes:
        runs = []
        for rep in range(repetitions):
            if kind == "random":
                spec = gen_random_workload(n, seed + rep)
            elif kind == "contrived":
                spec = gen_contrived_workload(n, finds=contrived_finds, seed=seed + rep)
            else:
                raise ValueError(f"unknown workload kind {kind!r}")
            runs.append(run_workload(target, spec, store_mode=store_mode,
                                     presize=presize, check_partition=False))
        mean = Metrics(target=target, workload=kind, n=n, total_ops=runs[0].total_ops)
        count = len(runs)
        mean.find_steps = _mean([r.find_steps for r in runs], count)
        mean.firings = _mean([r.firings for r in runs], count)
        mean.wake_events = _mean([r.wake_events for r in runs], count)
        mean.partner_probes = _mean([r.partner_probes for r in runs], count)
        mean.inserts = _mean([r.inserts for r in runs], count)
        mean.deletes = _mean([r.deletes for r in runs], count)
        mean.wall_ns = _mean([r.wall_ns for r in runs], count)
        row = ScalingRow(n=n, metrics=mean)
        if rows:
            prev = rows[-1].metrics
            for name in ("find_steps", "firings", "partner_probes"):
                prev_v = getattr(prev, name)
                cur_v = getattr(mean, name)
                row.ratios[name] = (cur_v / prev_v) if prev_v else float("nan")
        rows.append(row)
    return rows


def _mean(values: list, n: int):
    total = sum(values)
    return total // n if total % n == 0 else total / n


def report_csv(rows: list[ScalingRow]) -> str:
    lines = [CSV_HEADER]
    for row in rows:
        lines.append(row.metrics.csv_row())
    return "\n".join(lines) + "\n"


def report_table(rows: list[ScalingRow]) -> str:
    lines = ["N        find_steps   ratio   probes       ratio"]
    for row in rows:
        m = row.metrics
        fr = row.ratios.get("find_steps")
        pr = row.ratios.get("partner_probes")
        fr_s = "-" if fr is None else f"{fr:.3f}"
        pr_s = "-" if pr is None else f"{pr:.3f}"
        lines.append(f"{row.n:<8} {m.find_steps:<12} {fr_s:<7} "
                     f"{m.partner_probes:<12} {pr_s}")
    return "\n".join(lines)
