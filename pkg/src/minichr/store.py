"""Indexed constraint store.

Supports constant-time (amortized) insertion and deletion of constraint
instances and constant-time lookup of all live constraints holding a given
ground value at a given argument position.  Every ground argument position
is indexed.  The index tables are explicit chained hash tables so that the
probe counters measure real work:

* ``doubling`` (default): tables start small and double when the number of
  distinct keys reaches the capacity, rehashing everything.
* ``presized``: tables start at a configured capacity, emulating the
  collision-free array regime.
* ``poor``: lookups ignore the per-argument indexes and scan every live
  constraint of the symbol, emulating a store that can only index on the
  constraint symbol.  Results are identical; only the probe cost changes.

Unbound variables in stored arguments are tracked in per-variable
occurrence lists; binding a variable re-indexes the affected constraints
and reports them as the wake set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .terms import Term, Var, render_term

_M64 = (1 << 64) - 1

MODES = ("doubling", "presized", "poor")


class StoreError(Exception):
    """Store misuse (engine bug): arity mismatch, dead-id delete, etc."""


@dataclass
class StoreCounters:
    inserts: int = 0
    deletes: int = 0
    lookups: int = 0
    lookup_probes: int = 0
    insert_probes: int = 0
    delete_probes: int = 0
    rehash_probes: int = 0

    @property
    def total_probes(self) -> int:
        return (self.lookup_probes + self.insert_probes
                + self.delete_probes + self.rehash_probes)


class StoredConstraint:
    """A live (or dead) constraint instance.  Args are eagerly dereferenced:
    binding a variable overwrites it in place via the occurrence lists."""

    __slots__ = ("cid", "symbol", "arity", "args", "alive")

    def __init__(self, cid: int, symbol: str, arity: int, args: list):
        self.cid = cid
        self.symbol = symbol
        self.arity = arity
        self.args = args
        self.alive = True

    @property
    def functor(self) -> tuple[str, int]:
        return (self.symbol, self.arity)

    def render(self) -> str:
        from .terms import Atom, render_atom

        return render_atom(Atom(self.symbol, tuple(self.args)))


def _mix(k: int) -> int:
    """SplitMix64 finalizer; process-independent slot hashing."""
    k &= _M64
    k = ((k ^ (k >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    k = ((k ^ (k >> 27)) * 0x94D049BB133111EB) & _M64
    return k ^ (k >> 31)


class _HashIndex:
    """Chained hash table: integer key -> ordered set of constraint ids."""

    __slots__ = ("slots", "cap", "nkeys")

    def __init__(self, cap: int):
        self.cap = cap
        self.slots: list[list | None] = [None] * cap
        self.nkeys = 0

    def _find(self, key: int, counters: StoreCounters, bucket: str):
        h = _mix(key) & (self.cap - 1)
        chain = self.slots[h]
        probes = 1
        entry = None
        if chain is not None:
            for e in chain:
                probes += 1
                if e[0] == key:
                    entry = e
                    break
        setattr(counters, bucket, getattr(counters, bucket) + probes)
        return h, chain, entry

    def add(self, key: int, cid: int, counters: StoreCounters):
        h, chain, entry = self._find(key, counters, "insert_probes")
        if entry is not None:
            entry[1][cid] = None
            return
        if chain is None:
            chain = []
            self.slots[h] = chain
        chain.append([key, {cid: None}])
        self.nkeys += 1
        if self.nkeys > self.cap:
            self._grow(counters)

    def remove(self, key: int, cid: int, counters: StoreCounters):
        h, chain, entry = self._find(key, counters, "delete_probes")
        if entry is None:
            raise StoreError("index entry missing on delete")
        del entry[1][cid]
        if not entry[1]:
            chain.remove(entry)
            self.nkeys -= 1

    def get(self, key: int, counters: StoreCounters) -> dict | None:
        _, _, entry = self._find(key, counters, "lookup_probes")
        return entry[1] if entry is not None else None

    def _grow(self, counters: StoreCounters):
        old = self.slots
        self.cap *= 2
        self.slots = [None] * self.cap
        moved = 0
        for chain in old:
            if chain is None:
                continue
            for e in chain:
                moved += 1
                h = _mix(e[0]) & (self.cap - 1)
                dest = self.slots[h]
                if dest is None:
                    dest = []
                    self.slots[h] = dest
                dest.append(e)
        counters.rehash_probes += moved

    def items(self):
        for chain in self.slots:
            if chain is not None:
                for key, ids in chain:
                    yield key, ids


def _pow2_at_least(n: int) -> int:
    cap = 8
    while cap < n:
        cap *= 2
    return cap


class Store:
    """The constraint store of one engine session."""

    def __init__(self, mode: str = "doubling", presize: int | None = None):
        if mode not in MODES:
            raise ValueError(f"unknown store mode {mode!r}")
        self.mode = mode
        self.presize = presize
        self.counters = StoreCounters()
        self._next_id = 0
        self._constraints: list[StoredConstraint | None] = []
        self._by_symbol: dict[tuple[str, int], dict[int, None]] = {}
        self._indexes: dict[tuple[str, int, int], _HashIndex] = {}
        self._occ: dict[int, dict[int, None]] = {}
        self._intern: dict[str, int] = {}

    # -- keys -----------------------------------------------------------

    def _key(self, value) -> int:
        if isinstance(value, str):
            k = self._intern.get(value)
            if k is None:
                k = len(self._intern)
                self._intern[value] = k
            return k * 2
        return value * 2 + 1

    def _new_index(self) -> _HashIndex:
        if self.presize is not None:
            return _HashIndex(_pow2_at_least(self.presize))
        return _HashIndex(8)

    # -- identity ---------------------------------------------------------

    def new_id(self) -> int:
        cid = self._next_id
        self._next_id += 1
        self._constraints.append(None)
        return cid

    def get(self, cid: int) -> StoredConstraint:
        c = self._constraints[cid]
        if c is None:
            raise StoreError(f"constraint #{cid} was never inserted")
        return c

    def alive(self, cid: int) -> bool:
        c = self._constraints[cid]
        return c is not None and c.alive

    # -- mutation ---------------------------------------------------------

    def insert(self, symbol: str, args, cid: int | None = None) -> int:
        """Insert a constraint instance; returns its id.

        ``cid`` allows inserting under a pre-reserved id (from new_id).
        """
        if cid is None:
            cid = self.new_id()
        elif self._constraints[cid] is not None:
            raise StoreError(f"id #{cid} already used")
        arity = len(args)
        c = StoredConstraint(cid, symbol, arity, list(args))
        self._constraints[cid] = c
        self._by_symbol.setdefault((symbol, arity), {})[cid] = None
        counters = self.counters
        counters.inserts += 1
        for pos, a in enumerate(c.args):
            if isinstance(a, Var):
                self._occ.setdefault(a.id, {})[cid] = None
            else:
                idx = self._indexes.get((symbol, arity, pos))
                if idx is None:
                    idx = self._new_index()
                    self._indexes[(symbol, arity, pos)] = idx
                idx.add(self._key(a), cid, counters)
        return cid

    def delete(self, cid: int):
        c = self._constraints[cid]
        if c is None or not c.alive:
            raise StoreError(f"delete of dead constraint #{cid}")
        c.alive = False
        del self._by_symbol[(c.symbol, c.arity)][cid]
        counters = self.counters
        counters.deletes += 1
        for pos, a in enumerate(c.args):
            if isinstance(a, Var):
                occ = self._occ.get(a.id)
                if occ is not None:
                    occ.pop(cid, None)
                    if not occ:
                        del self._occ[a.id]
            else:
                self._indexes[(c.symbol, c.arity, pos)].remove(self._key(a), cid, counters)

    # -- lookup -----------------------------------------------------------

    def lookup(self, symbol: str, arity: int, pos: int, value):
        """Yield ids of live constraints with ``value`` at argument ``pos``.

        Ids deleted before or during iteration are never yielded.  In
        ``poor`` mode this scans every live constraint of the symbol.
        """
        if isinstance(value, Var):
            raise StoreError("lookup value must be ground")
        counters = self.counters
        counters.lookups += 1
        if self.mode == "poor":
            reg = self._by_symbol.get((symbol, arity))
            if reg is None:
                counters.lookup_probes += 1
                return
            counters.lookup_probes += len(reg) or 1
            constraints = self._constraints
            for cid in list(reg):
                c = constraints[cid]
                if c.alive and c.args[pos] == value:
                    yield cid
            return
        idx = self._indexes.get((symbol, arity, pos))
        if idx is None:
            counters.lookup_probes += 1
            return
        ids = idx.get(self._key(value), counters)
        if ids is None:
            return
        constraints = self._constraints
        for cid in list(ids):
            counters.lookup_probes += 1
            c = constraints[cid]
            if c.alive:
                yield cid

    def lookup_list(self, symbol: str, arity: int, pos: int, value) -> list[int]:
        """Same accounting as lookup(), returning a snapshot list.

        Used by the engine's partner search, which never mutates the store
        while a candidate list is in use.
        """
        counters = self.counters
        counters.lookups += 1
        if self.mode == "poor":
            reg = self._by_symbol.get((symbol, arity))
            if reg is None:
                counters.lookup_probes += 1
                return []
            counters.lookup_probes += len(reg) or 1
            constraints = self._constraints
            return [cid for cid in reg if constraints[cid].args[pos] == value]
        idx = self._indexes.get((symbol, arity, pos))
        if idx is None:
            counters.lookup_probes += 1
            return []
        ids = idx.get(self._key(value), counters)
        if ids is None:
            return []
        counters.lookup_probes += len(ids)
        return list(ids)

    def lookup_all(self, symbol: str, arity: int):
        """Yield all live ids of a symbol (used for nullary partners)."""
        self.counters.lookups += 1
        reg = self._by_symbol.get((symbol, arity))
        self.counters.lookup_probes += (len(reg) if reg else 0) or 1
        if reg is None:
            return
        for cid in list(reg):
            if self.alive(cid):
                yield cid

    def live_count(self, symbol: str, arity: int) -> int:
        reg = self._by_symbol.get((symbol, arity))
        return len(reg) if reg else 0

    def live_constraints(self):
        for reg in self._by_symbol.values():
            for cid in reg:
                yield self._constraints[cid]

    # -- variable binding ---------------------------------------------------

    def rebind_index(self, var: Var, value) -> list[int]:
        """Ground ``var`` to ``value`` in all stored constraints.

        Newly ground argument positions are indexed; returns the affected
        ids in ascending order (the wake set).
        """
        occ = self._occ.pop(var.id, None)
        if not occ:
            return []
        counters = self.counters
        woken = sorted(occ)
        for cid in woken:
            c = self._constraints[cid]
            for pos, a in enumerate(c.args):
                if isinstance(a, Var) and a.id == var.id:
                    c.args[pos] = value
                    idx = self._indexes.get((c.symbol, c.arity, pos))
                    if idx is None:
                        idx = self._new_index()
                        self._indexes[(c.symbol, c.arity, pos)] = idx
                    idx.add(self._key(value), cid, counters)
        return woken

    # -- inspection -----------------------------------------------------------

    def snapshot(self) -> tuple:
        """Canonical sorted multiset of the live, ground store contents.

        Raises StoreError naming the offending constraint if any live
        constraint still contains an unbound variable.
        """
        out = []
        for c in self.live_constraints():
            for a in c.args:
                if isinstance(a, Var):
                    raise StoreError(
                        f"non-ground constraint in snapshot: {c.render()}#{c.cid}")
            out.append((c.symbol, tuple(c.args)))
        out.sort(key=_snapshot_key)
        return tuple(out)

    def dump_lines(self) -> list[str]:
        """One line per live constraint: ``symbol(arg,...)#id``."""
        lines = [f"{c.render()}#{c.cid}" for c in self.live_constraints()]
        lines.sort()
        return lines

    def audit(self):
        """O(store) consistency check; raises StoreError on violation."""
        live = {}
        for (symbol, arity), reg in self._by_symbol.items():
            for cid in reg:
                c = self._constraints[cid]
                if c is None or not c.alive:
                    raise StoreError(f"dead id #{cid} in symbol registry")
                if c.functor != (symbol, arity):
                    raise StoreError(f"#{cid} registered under wrong symbol")
                live[cid] = c
        for c in (x for x in self._constraints if x is not None):
            if c.alive and c.cid not in live:
                raise StoreError(f"live #{c.cid} missing from symbol registry")

        indexed: dict[tuple, set] = {}
        for (symbol, arity, pos), idx in self._indexes.items():
            for key, ids in idx.items():
                for cid in ids:
                    c = self._constraints[cid]
                    if c is None or not c.alive:
                        raise StoreError(f"dead id #{cid} in index ({symbol}/{arity},{pos})")
                    a = c.args[pos]
                    if isinstance(a, Var) or self._key(a) != key:
                        raise StoreError(
                            f"#{cid} indexed under wrong key at ({symbol}/{arity},{pos})")
                    indexed.setdefault((symbol, arity, pos), set()).add(cid)
        for c in live.values():
            ground_positions = 0
            for pos, a in enumerate(c.args):
                if isinstance(a, Var):
                    occ = self._occ.get(a.id)
                    if occ is None or c.cid not in occ:
                        raise StoreError(f"#{c.cid} missing from occurrence list of {a.name}")
                else:
                    ground_positions += 1
                    if c.cid not in indexed.get((c.symbol, c.arity, pos), ()):
                        raise StoreError(f"#{c.cid} missing from index ({c.symbol},{pos})")
        for var_id, occ in self._occ.items():
            for cid in occ:
                c = self._constraints[cid]
                if c is None or not c.alive:
                    raise StoreError(f"dead id #{cid} in occurrence list of var {var_id}")
                if not any(isinstance(a, Var) and a.id == var_id for a in c.args):
                    raise StoreError(f"#{cid} listed for var {var_id} it does not contain")

        # Bucket sizes must add up to the ground argument slots of the
        # live constraints, symbol by symbol.
        per_functor_buckets: dict[tuple[str, int], int] = {}
        for (symbol, arity, _pos), idx in self._indexes.items():
            total = sum(len(ids) for _k, ids in idx.items())
            per_functor_buckets[(symbol, arity)] = per_functor_buckets.get((symbol, arity), 0) + total
        for functor, total in per_functor_buckets.items():
            expected = sum(
                sum(1 for a in self._constraints[cid].args if not isinstance(a, Var))
                for cid in self._by_symbol.get(functor, ())
            )
            if total != expected:
                raise StoreError(
                    f"index bucket sizes for {functor} total {total}, expected {expected}")


def _snapshot_key(entry):
    symbol, args = entry
    return (symbol, len(args), tuple(
        (0, a) if isinstance(a, int) else (1, a) for a in args))


def render_snapshot(snapshot) -> list[str]:
    """Render a snapshot() result one constraint per line."""
    from .terms import Atom, render_atom

    return [render_atom(Atom(sym, args)) for sym, args in snapshot]
