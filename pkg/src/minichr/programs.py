"""The two built-in union-find rule programs and a typed session API.

``ufd_basic`` is the unoptimized algorithm; ``ufd_rank`` adds union-by-rank
and path compression.  The canonical ``.chr`` sources ship as package data
and are the single source of truth; :class:`UfSession` compiles one of them
and exposes make/union/find with contract checking, per-operation counter
deltas, and decoding of the quiescent store back to parent/rank maps.

Operation constraints (make, union, find, link) are transient commands;
data constraints (root, ``~>``) persist between operations and encode the
forest.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from importlib import resources

from .engine import Engine, compile_program
from .parser import parse_program
from .store import render_snapshot
from .terms import Var

OPERATION_FUNCTORS_BASIC = frozenset(
    [("make", 1), ("union", 2), ("find", 2), ("link", 2)])
OPERATION_FUNCTORS_RANK = OPERATION_FUNCTORS_BASIC


class Variant(enum.Enum):
    BASIC = "basic"
    RANK = "rank"

    @classmethod
    def parse(cls, name) -> "Variant":
        if isinstance(name, Variant):
            return name
        return cls(str(name).lower())


def program_source(variant) -> str:
    """The canonical rule text for a built-in variant."""
    variant = Variant.parse(variant)
    fname = "ufd_basic.chr" if variant is Variant.BASIC else "ufd_rank.chr"
    return resources.files("minichr.data").joinpath(fname).read_text("utf-8")


def variant_program(variant, swap_link_rules: bool = False):
    """Parse a built-in variant; optionally reorder the two link rules.

    Reordering the equal-rank tie (linkRight before linkLeft) is a fault
    injection used by the verification harness: it changes representatives
    but not the induced partition.
    """
    program = parse_program(program_source(variant))
    if swap_link_rules:
        if Variant.parse(variant) is not Variant.RANK:
            raise ValueError("link rule swap only applies to the rank variant")
        rules = list(program.rules)
        by_name = {r.name: i for i, r in enumerate(rules)}
        i, j = by_name["linkLeft"], by_name["linkRight"]
        rules[i], rules[j] = rules[j], rules[i]
        program.rules = tuple(rules)
    return program


_COMPILED_CACHE: dict[Variant, object] = {}


def compiled_variant(variant):
    variant = Variant.parse(variant)
    compiled = _COMPILED_CACHE.get(variant)
    if compiled is None:
        compiled = compile_program(variant_program(variant))
        _COMPILED_CACHE[variant] = compiled
    return compiled


class UnionFindContractError(Exception):
    """The session was used outside the make/union/find contract."""


class DuplicateMake(UnionFindContractError):
    pass


class UnknownElement(UnionFindContractError):
    pass


class ForestViolation(Exception):
    """The data constraints do not encode a forest."""


@dataclass
class OpRecord:
    """Per-operation counter deltas, in operation order."""

    op: tuple
    find_steps: int
    firings: int
    wake_events: int
    partner_probes: int


class UfSession:
    """One interactive union-find run over a compiled variant program.

    Elements are atoms (str) or integers.  Between operations the store is
    quiescent and ground and contains only data constraints; this is
    asserted after every operation.
    """

    def __init__(self, variant="rank", *, store_mode: str = "doubling",
                 presize: int | None = None, trace: bool = False,
                 swap_link_rules: bool = False, firing_hook=None):
        self.variant = Variant.parse(variant)
        if swap_link_rules:
            compiled = compile_program(variant_program(self.variant, True))
        else:
            compiled = compiled_variant(self.variant)
        self.engine = Engine(compiled, store_mode=store_mode, presize=presize,
                             trace=trace, firing_hook=firing_hook)
        self.elements: set = set()
        self.op_log: list[OpRecord] = []
        self._varmap: dict = {}
        self._findnode_index = compiled.rule_labels.index("findNode")

    # -- internals ---------------------------------------------------------

    def _check_element(self, x):
        if x not in self.elements:
            raise UnknownElement(f"element {x!r} was never made")

    def _run_op(self, op, items):
        engine = self.engine
        before_steps = engine.firings[self._findnode_index]
        before_firings = sum(engine.firings)
        before_wakes = engine.wake_events
        before_probes = engine.store.counters.lookup_probes
        self._varmap = engine.run_query(items)
        if engine.failed:
            raise UnionFindContractError(
                f"operation {op!r} failed: {engine.failure_message}")
        self._assert_quiescent_data_store()
        self.op_log.append(OpRecord(
            op=op,
            find_steps=engine.firings[self._findnode_index] - before_steps,
            firings=sum(engine.firings) - before_firings,
            wake_events=engine.wake_events - before_wakes,
            partner_probes=engine.store.counters.lookup_probes - before_probes,
        ))

    def _assert_quiescent_data_store(self):
        store = self.engine.store
        for functor in OPERATION_FUNCTORS_BASIC:
            if store.live_count(*functor) != 0:
                raise UnionFindContractError(
                    f"operation constraint {functor[0]}/{functor[1]} left in store "
                    "(element used before make?)")

    # -- operations -----------------------------------------------------------

    def make(self, x):
        if x in self.elements:
            raise DuplicateMake(f"element {x!r} already made")
        self.elements.add(x)
        self._run_op(("make", x), [_atom("make", (x,))])

    def union(self, x, y):
        self._check_element(x)
        self._check_element(y)
        self._run_op(("union", x, y), [_atom("union", (x, y))])

    def find(self, x):
        self._check_element(x)
        result_var = Var(0, "R")
        self._run_op(("find", x), [_atom("find", (x, result_var))])
        value = self.engine.deref(self._varmap["R"])
        if isinstance(value, Var):
            raise UnionFindContractError(f"find({x!r}) did not bind its result")
        return value

    def apply(self, op):
        kind = op[0]
        if kind == "make":
            self.make(op[1])
        elif kind == "union":
            self.union(op[1], op[2])
        elif kind == "find":
            self.find(op[1])
        else:
            raise ValueError(f"unknown op {op!r}")

    # -- inspection -----------------------------------------------------------

    def snapshot(self):
        return self.engine.store.snapshot()

    def snapshot_lines(self) -> list[str]:
        return render_snapshot(self.snapshot())

    def decode_forest(self) -> tuple[dict, dict, dict]:
        """Decode the quiescent store into (parents, root ranks, root map).

        Validates the forest shape: every made element carries exactly one
        data constraint as its first argument, parent chains are acyclic
        and end at an element with a root constraint.  Raises
        ForestViolation (naming the offender) otherwise.
        """
        parents: dict = {}
        ranks: dict = {}
        store = self.engine.store
        root_arity = 1 if self.variant is Variant.BASIC else 2
        allowed = {("root", root_arity), ("~>", 2)}
        for functor, reg in store._by_symbol.items():
            if reg and functor not in allowed:
                raise ForestViolation(f"unexpected constraint {functor[0]}/{functor[1]} in store")
        constraints = store._constraints
        reg = store._by_symbol.get(("root", root_arity))
        if reg:
            if root_arity == 2:
                for cid in reg:
                    x, r = constraints[cid].args
                    if type(x) is Var or type(r) is Var:
                        raise ForestViolation(f"non-ground constraint root#{cid}")
                    if x in parents:
                        raise ForestViolation(f"element {x!r} has multiple constraints")
                    parents[x] = x
                    ranks[x] = r
            else:
                for cid in reg:
                    (x,) = constraints[cid].args
                    if type(x) is Var:
                        raise ForestViolation(f"non-ground constraint root#{cid}")
                    if x in parents:
                        raise ForestViolation(f"element {x!r} has multiple constraints")
                    parents[x] = x
                    ranks[x] = None
        reg = store._by_symbol.get(("~>", 2))
        if reg:
            for cid in reg:
                x, px = constraints[cid].args
                if type(x) is Var or type(px) is Var:
                    raise ForestViolation(f"non-ground constraint ~>#{cid}")
                if x in parents:
                    raise ForestViolation(f"element {x!r} has multiple parents")
                parents[x] = px
        if parents.keys() != self.elements:
            for x in self.elements:
                if x not in parents:
                    raise ForestViolation(f"element {x!r} has no tree constraint")
            extra = next(iter(parents.keys() - self.elements))
            raise ForestViolation(f"constraint for unmade element {extra!r}")
        roots: dict = {}
        roots_get = roots.get
        parents_get = parents.get
        limit = len(parents)
        for x, p in parents.items():
            if x in roots:
                continue
            if p == x:
                roots[x] = x
                continue
            gp = parents_get(p)
            if gp == p:
                roots[x] = p  # depth-1 chains dominate compressed forests
                continue
            path = [x]
            cur = p
            while True:
                r = roots_get(cur)
                if r is not None:
                    break
                p = parents_get(cur)
                if p is None:
                    raise ForestViolation(f"chain from {x!r} reaches unmade {cur!r}")
                if p == cur:
                    r = cur
                    break
                path.append(cur)
                if len(path) > limit:
                    raise ForestViolation(f"cycle in parent chain through {x!r}")
                cur = p
            for y in path:
                roots[y] = r
        return parents, ranks, roots

    def parents_and_ranks(self) -> dict:
        """Element -> (parent, rank or None); roots map to themselves."""
        parents, ranks, _roots = self.decode_forest()
        return {x: (p, ranks.get(x)) for x, p in parents.items()}

    def parent_map(self) -> dict:
        parents, _ranks, _roots = self.decode_forest()
        return parents

    def root_ranks(self) -> dict:
        _parents, ranks, _roots = self.decode_forest()
        return {x: r for x, r in ranks.items() if r is not None}


def _atom(symbol, args):
    from .terms import Atom

    return Atom(symbol, tuple(args))
