"""Rule execution engine.

Implements the deterministic execution order of real CHR systems: goals
run left to right, an activated constraint walks the occurrences of its
symbol in textual program order, partner constraints are fetched through
the store indexes, and the first occurrence whose partners and guard
match commits (no backtracking over rule choice).  A constraint that
survives all its occurrences is inserted into the store; stored
constraints are reconsidered (woken) when one of their variables gets
bound.

Compilation turns each head-atom position into an occurrence with a
partner lookup plan: remaining head atoms are ordered greedily so that
each next lookup shares an already-bound variable when possible, and the
leftmost bound argument position is used as the index key.  A partner
that could never be fetched through an index is a compile error.

Execution is an explicit stack machine (goal frames and activation
frames), so recursion depth in the interpreted program does not consume
Python stack.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .parser import parse_program, parse_query
from .store import Store, StoreError
from .terms import (
    Atom,
    BinExpr,
    Bind,
    Cmp,
    Is,
    Program,
    Rule,
    TrueGoal,
    Var,
    render_term,
)


class CompileError(Exception):
    """A rule cannot be executed under the indexed-lookup regime."""


class EngineError(Exception):
    """Runtime fault: instantiation error, bind-once violation, etc."""


@dataclass
class Counters:
    """Snapshot of the per-session transition and cost counters."""

    activations: int = 0
    drops: int = 0
    active_removals: int = 0
    default_transitions: int = 0
    wake_events: int = 0
    guard_checks: int = 0
    partner_probes: int = 0
    inserts: int = 0
    deletes: int = 0
    rule_firings: dict[str, int] = field(default_factory=dict)

    @property
    def total_firings(self) -> int:
        return sum(self.rule_firings.values())


class _Occurrence:
    __slots__ = (
        "rule_index", "label", "head_index", "n_head", "active_pattern",
        "partner_steps", "guard", "body", "fresh_slots", "nslots",
        "removed_head_idxs", "is_propagation",
    )

    def __init__(self, **kw):
        for k, v in kw.items():
            setattr(self, k, v)


@dataclass
class CompiledProgram:
    program: Program
    occurrences: dict[tuple[str, int], tuple]
    rule_labels: tuple[str, ...]


# -- compilation -------------------------------------------------------------


def _compile_expr(e, slot_of):
    if isinstance(e, int):
        return ("i", e)
    if isinstance(e, Var):
        return ("s", slot_of(e))
    return (e.op, _compile_expr(e.left, slot_of), _compile_expr(e.right, slot_of))


def _compile_pattern(atom: Atom, slot_of):
    return tuple(
        ("v", slot_of(t)) if isinstance(t, Var) else ("c", t) for t in atom.args
    )


def _compile_occurrence(rule: Rule, rule_idx: int, head_pos: int) -> _Occurrence:
    head = rule.head_atoms
    slots: dict[int, int] = {}

    def slot_of(v: Var) -> int:
        s = slots.get(v.id)
        if s is None:
            s = len(slots)
            slots[v.id] = s
        return s

    active_pattern = _compile_pattern(head[head_pos], slot_of)
    bound_ids = set(slots)

    remaining = [(i, a) for i, a in enumerate(head) if i != head_pos]
    steps = []
    while remaining:
        choice = None
        for want_sharing in (True, False):
            for i, atom in remaining:
                shares = any(isinstance(t, Var) and t.id in bound_ids for t in atom.args)
                key = None
                for pos, t in enumerate(atom.args):
                    if not isinstance(t, Var):
                        key = (pos, ("c", t))
                        break
                    if t.id in bound_ids:
                        key = (pos, ("s", slots[t.id]))
                        break
                if key is None and atom.arity == 0:
                    key = (None, None)
                if key is not None and (shares or not want_sharing):
                    choice = (i, atom, key)
                    break
            if choice is not None:
                break
        if choice is None:
            raise CompileError(
                f"rule {rule.label}: head constraint "
                f"{remaining[0][1].symbol}/{remaining[0][1].arity} cannot be "
                "looked up through an index (no constant or shared variable argument)")
        i, atom, (key_pos, key_spec) = choice
        pattern = _compile_pattern(atom, slot_of)
        steps.append((atom.symbol, atom.arity, key_pos, key_spec, pattern, i))
        bound_ids.update(t.id for t in atom.args if isinstance(t, Var))
        remaining = [(j, a) for j, a in remaining if j != i]

    guard = tuple(
        (c.op, _compile_expr(c.left, slot_of), _compile_expr(c.right, slot_of))
        for c in rule.guard
    )

    head_slot_count = len(slots)
    body = []
    for item in rule.body:
        if isinstance(item, Atom):
            body.append(("chr", item.symbol, len(item.args),
                         _compile_pattern(item, slot_of)))
        elif isinstance(item, Bind):
            lspec = ("v", slot_of(item.left)) if isinstance(item.left, Var) else ("c", item.left)
            rspec = ("v", slot_of(item.right)) if isinstance(item.right, Var) else ("c", item.right)
            body.append(("bind", lspec, rspec))
        elif isinstance(item, Is):
            body.append(("is", ("v", slot_of(item.target)),
                         _compile_expr(item.expr, slot_of)))
        elif isinstance(item, TrueGoal):
            pass
    fresh_slots = tuple(range(head_slot_count, len(slots)))

    n_kept = len(rule.kept)
    removed_head_idxs = tuple(range(n_kept, len(head)))
    return _Occurrence(
        rule_index=rule_idx,
        label=rule.label,
        head_index=head_pos,
        n_head=len(head),
        active_pattern=active_pattern,
        partner_steps=tuple(steps),
        guard=guard,
        body=tuple(body),
        fresh_slots=fresh_slots,
        nslots=len(slots),
        removed_head_idxs=removed_head_idxs,
        is_propagation=(not rule.removed),
    )


def compile_program(program: Program) -> CompiledProgram:
    """Build per-symbol occurrence lists in textual order."""
    occurrences: dict[tuple[str, int], list] = {}
    for rule_idx, rule in enumerate(program.rules):
        for head_pos, atom in enumerate(rule.head_atoms):
            occ = _compile_occurrence(rule, rule_idx, head_pos)
            occurrences.setdefault(atom.functor, []).append(occ)
    return CompiledProgram(
        program=program,
        occurrences={k: tuple(v) for k, v in occurrences.items()},
        rule_labels=tuple(r.label for r in program.rules),
    )


# -- execution ---------------------------------------------------------------


class _GoalFrame:
    __slots__ = ("items", "idx")

    def __init__(self, items):
        self.items = items
        self.idx = 0


class _ActiveFrame:
    __slots__ = ("cid", "symbol", "arity", "args", "occs", "cursor", "removed",
                 "stored", "activated", "has_vars")

    def __init__(self, cid, symbol, arity, args, occs, stored=False):
        self.cid = cid
        self.symbol = symbol
        self.arity = arity
        self.args = args
        self.occs = occs
        self.cursor = 0
        self.removed = False
        self.stored = stored
        self.activated = not stored
        self.has_vars = stored or any(type(a) is Var for a in args)


class _NonGround(Exception):
    pass


class Engine:
    """A single-threaded execution session over one compiled program."""

    def __init__(self, compiled: CompiledProgram, *, store: Store | None = None,
                 store_mode: str = "doubling", presize: int | None = None,
                 trace: bool = False, firing_hook=None):
        self.compiled = compiled
        self.store = store if store is not None else Store(store_mode, presize)
        self.bindings: dict[int, object] = {}
        self.history: set = set()
        self.trace_lines: list[str] | None = [] if trace else None
        self.firing_hook = firing_hook
        self._next_var = 0
        self._stack: list = []
        self.failed = False
        self.failure_message = ""
        # transition counters
        self.activations = 0
        self.drops = 0
        self.active_removals = 0
        self.default_transitions = 0
        self.wake_events = 0
        self.guard_checks = 0
        self.firings = [0] * len(compiled.rule_labels)

    # -- small helpers ---------------------------------------------------

    def fresh_var(self, name: str | None = None) -> Var:
        v = Var(self._next_var, name if name is not None else f"_G{self._next_var}")
        self._next_var += 1
        return v

    def deref(self, t):
        if type(t) is Var:
            return self.bindings.get(t.id, t)
        return t

    def counters(self) -> Counters:
        sc = self.store.counters
        return Counters(
            activations=self.activations,
            drops=self.drops,
            active_removals=self.active_removals,
            default_transitions=self.default_transitions,
            wake_events=self.wake_events,
            guard_checks=self.guard_checks,
            partner_probes=sc.lookup_probes,
            inserts=sc.inserts,
            deletes=sc.deletes,
            rule_firings={
                label: n for label, n in zip(self.compiled.rule_labels, self.firings)
            },
        )

    # -- goals -------------------------------------------------------------

    def run_query(self, items) -> dict[str, Var]:
        """Execute parsed goal items to quiescence.

        Returns a map from query variable name to its runtime variable
        (look bindings up with :meth:`deref`).  Query failure sets
        ``self.failed``; runtime faults raise EngineError.
        """
        if self.failed:
            raise EngineError("session already failed")
        varmap: dict[str, Var] = {}
        by_id: dict[int, Var] = {}

        def conv(t):
            if isinstance(t, Var):
                rv = by_id.get(t.id)
                if rv is None:
                    rv = self.fresh_var(t.name)
                    by_id[t.id] = rv
                    if t.name != "_" and t.name not in varmap:
                        varmap[t.name] = rv
                return rv
            return t

        def conv_expr(e):
            if isinstance(e, BinExpr):
                return BinExpr(e.op, conv_expr(e.left), conv_expr(e.right))
            return conv(e)

        runtime = []
        for item in items:
            if isinstance(item, Atom):
                runtime.append(("chr", item.symbol, len(item.args),
                                tuple(conv(a) for a in item.args)))
            elif isinstance(item, Bind):
                runtime.append(("bind", conv(item.left), conv(item.right)))
            elif isinstance(item, Is):
                runtime.append(("is", conv(item.target), conv_expr(item.expr)))
        self._stack.append(_GoalFrame(runtime))
        self._drive()
        return varmap

    def _drive(self):
        stack = self._stack
        while stack:
            frame = stack[-1]
            if type(frame) is _GoalFrame:
                if frame.idx >= len(frame.items):
                    stack.pop()
                    continue
                item = frame.items[frame.idx]
                frame.idx += 1
                self._exec_item(item)
            else:
                self._step_active(frame)

    def _exec_item(self, item):
        kind = item[0]
        if kind == "chr":
            _, symbol, arity, args = item
            deref = self.deref
            args = tuple(deref(a) for a in args)
            cid = self.store.new_id()
            self.activations += 1
            if self.trace_lines is not None:
                self.trace_lines.append(f"ACT {symbol}/{arity}#{cid}")
            occs = self.compiled.occurrences.get((symbol, arity), ())
            self._stack.append(_ActiveFrame(cid, symbol, arity, args, occs))
        elif kind == "bind":
            left = self.deref(item[1])
            right = self.deref(item[2])
            if type(left) is Var:
                if type(right) is Var:
                    if left.id != right.id:
                        raise EngineError(
                            "cannot alias two unbound variables "
                            f"({left.name} = {right.name})")
                    return
                self._bind(left, right)
            elif type(right) is Var:
                self._bind(right, left)
            elif left != right:
                self._fail(f"{render_term(left)} = {render_term(right)} failed")
        elif kind == "is":
            value = self._eval_runtime_expr(item[2])
            target = self.deref(item[1])
            if type(target) is Var:
                self._bind(target, value)
            elif target != value:
                self._fail(f"{render_term(target)} is {value} failed")

    def _eval_runtime_expr(self, e):
        if type(e) is int:
            return e
        if type(e) is Var:
            v = self.bindings.get(e.id)
            if v is None:
                raise EngineError(
                    f"instantiation fault: {e.name} unbound in arithmetic expression")
            if not isinstance(v, int):
                raise EngineError(
                    f"type fault: {render_term(v)} is not an integer")
            return v
        if type(e) is BinExpr:
            left = self._eval_runtime_expr(e.left)
            right = self._eval_runtime_expr(e.right)
            return left + right if e.op == "+" else max(left, right)
        raise EngineError(f"type fault: {render_term(e)} in arithmetic expression")

    def _bind(self, var: Var, value):
        if var.id in self.bindings:
            raise EngineError(f"bind-once violation on {var.name}")
        if type(value) is Var:
            raise EngineError("cannot bind a variable to a variable")
        self.bindings[var.id] = value
        if self.trace_lines is not None:
            self.trace_lines.append(f"BIND V{var.id} := {render_term(value)}")
        woken = self.store.rebind_index(var, value)
        if woken:
            self.wake_events += len(woken)
            if self.trace_lines is not None:
                for cid in woken:
                    self.trace_lines.append(f"WAKE #{cid}")
            stack = self._stack
            store = self.store
            occ_map = self.compiled.occurrences
            for cid in reversed(woken):
                c = store.get(cid)
                stack.append(_ActiveFrame(
                    cid, c.symbol, c.arity, None,
                    occ_map.get((c.symbol, c.arity), ()), stored=True))

    def _fail(self, message: str):
        self.failed = True
        self.failure_message = message
        self._stack.clear()

    # -- active constraints --------------------------------------------------

    def _step_active(self, frame: _ActiveFrame):
        stack = self._stack
        if frame.removed:
            stack.pop()
            return
        store = self.store
        if frame.stored:
            if not store.alive(frame.cid):
                # deleted by another rule instance before (or while) running
                if frame.activated:
                    self.active_removals += 1
                stack.pop()
                return
            # re-read args: bindings may have grounded them
            frame.args = tuple(store.get(frame.cid).args)
            if not frame.activated:
                frame.activated = True
                self.activations += 1
                if self.trace_lines is not None:
                    self.trace_lines.append(
                        f"ACT {frame.symbol}/{frame.arity}#{frame.cid}")
        elif frame.has_vars:
            deref = self.deref
            frame.args = tuple(deref(a) for a in frame.args)
            frame.has_vars = any(type(a) is Var for a in frame.args)
        occs = frame.occs
        cursor = frame.cursor
        while cursor < len(occs):
            if self._try_occurrence(occs[cursor], frame):
                frame.cursor = cursor
                return
            cursor += 1
            self.default_transitions += 1
        frame.cursor = cursor
        if not frame.stored:
            store.insert(frame.symbol, frame.args, frame.cid)
        self.drops += 1
        if self.trace_lines is not None:
            self.trace_lines.append(f"DROP #{frame.cid}")
        stack.pop()

    def _match_active(self, patterns, args, env) -> bool:
        # like _match_args, but env is fresh: no trail bookkeeping needed
        for pat, a in zip(patterns, args):
            if pat[0] == "v":
                s = pat[1]
                cur = env[s]
                if cur is None:
                    env[s] = a
                elif cur != a:
                    return False
            elif pat[1] != a:
                return False
        return True

    def _match_args(self, patterns, args, env, trail) -> bool:
        for pat, a in zip(patterns, args):
            if pat[0] == "v":
                s = pat[1]
                cur = env[s]
                if cur is None:
                    env[s] = a
                    trail.append(s)
                elif cur != a:
                    return False
            elif pat[1] != a:
                return False
        return True

    def _eval_guard_expr(self, e, env):
        tag = e[0]
        if tag == "i":
            return e[1]
        if tag == "s":
            v = env[e[1]]
            if type(v) is Var:
                v = self.bindings.get(v.id)
            if v is None or not isinstance(v, int):
                raise _NonGround
            return v
        left = self._eval_guard_expr(e[1], env)
        right = self._eval_guard_expr(e[2], env)
        return left + right if tag == "+" else max(left, right)

    def _check_guard(self, guard, env) -> bool:
        for op, le, re_ in guard:
            self.guard_checks += 1
            try:
                left = self._eval_guard_expr(le, env)
                right = self._eval_guard_expr(re_, env)
            except _NonGround:
                return False
            if op == ">=":
                ok = left >= right
            elif op == ">":
                ok = left > right
            elif op == "=<":
                ok = left <= right
            elif op == "<":
                ok = left < right
            else:
                ok = left == right
            if not ok:
                return False
        return True

    def _search_partners(self, occ, steps, step_i, env, used, matched) -> bool:
        if step_i == len(steps):
            if not self._check_guard(occ.guard, env):
                return False
            if occ.is_propagation:
                key = (occ.rule_index, tuple(sorted(matched)))
                if key in self.history:
                    return False
            return True
        symbol, arity, key_pos, key_spec, pattern, head_idx = steps[step_i]
        store = self.store
        if key_pos is None:
            candidates = store.lookup_all(symbol, arity)
        else:
            value = key_spec[1] if key_spec[0] == "c" else env[key_spec[1]]
            if type(value) is Var:
                return False  # no indexed lookup on an unbound key
            candidates = store.lookup_list(symbol, arity, key_pos, value)
        constraints = store._constraints
        for cid in candidates:
            if cid in used:
                continue
            trail = []
            if self._match_args(pattern, constraints[cid].args, env, trail):
                used.add(cid)
                matched[head_idx] = cid
                if self._search_partners(occ, steps, step_i + 1, env, used, matched):
                    return True
                used.discard(cid)
            for s in trail:
                env[s] = None
        return False

    def _try_occurrence(self, occ, frame: _ActiveFrame) -> bool:
        env = [None] * occ.nslots
        if not self._match_active(occ.active_pattern, frame.args, env):
            return False
        steps = occ.partner_steps
        if steps:
            matched = [None] * occ.n_head
            matched[occ.head_index] = frame.cid
            used = {frame.cid}
            if not self._search_partners(occ, steps, 0, env, used, matched):
                return False
        else:
            if not self._check_guard(occ.guard, env):
                return False
            if occ.is_propagation:
                if (occ.rule_index, (frame.cid,)) in self.history:
                    return False
            matched = [frame.cid]

        # Commit.
        store = self.store
        if self.trace_lines is not None:
            ids = ",".join(f"#{c}" for c in matched)
            self.trace_lines.append(f"FIRE {occ.label} ids=[{ids}]")
        self.firings[occ.rule_index] += 1
        if occ.is_propagation:
            self.history.add((occ.rule_index, tuple(sorted(matched))))
        for h in occ.removed_head_idxs:
            cid = matched[h]
            if cid == frame.cid:
                frame.removed = True
                self.active_removals += 1
                if frame.stored:
                    store.delete(cid)
            else:
                store.delete(cid)
        for s in occ.fresh_slots:
            env[s] = self.fresh_var()
        items = []
        for it in occ.body:
            kind = it[0]
            if kind == "chr":
                items.append(("chr", it[1], it[2],
                              tuple(spec[1] if spec[0] == "c" else env[spec[1]]
                                    for spec in it[3])))
            elif kind == "bind":
                items.append(("bind",
                              it[1][1] if it[1][0] == "c" else env[it[1][1]],
                              it[2][1] if it[2][0] == "c" else env[it[2][1]]))
            else:  # is
                items.append(("is", env[it[1][1]], _inst_expr(it[2], env)))
        if self.firing_hook is not None:
            self.firing_hook(self)
        if items:
            self._stack.append(_GoalFrame(items))
        return True


def _inst_expr(spec, env):
    tag = spec[0]
    if tag == "i":
        return spec[1]
    if tag == "s":
        return env[spec[1]]
    return BinExpr(tag, _inst_expr(spec[1], env), _inst_expr(spec[2], env))


# -- one-shot runs -----------------------------------------------------------


def _term_sort_key(t):
    if isinstance(t, int):
        return (0, t, "")
    if isinstance(t, str):
        return (1, 0, t)
    return (2, t.id, t.name)


def store_lines(store: Store) -> list[str]:
    """Canonical text of the live store, tolerating unbound variables."""
    entries = []
    for c in store.live_constraints():
        entries.append(((c.symbol, len(c.args)) + tuple(_term_sort_key(a) for a in c.args),
                        c.render()))
    entries.sort()
    return [text for _k, text in entries]


@dataclass
class RunResult:
    """Outcome of executing one query against one program."""

    status: str  # 'ok' | 'fail' | 'error'
    message: str = ""
    store_text: list[str] = field(default_factory=list)
    snapshot: tuple | None = None
    bindings: dict[str, object] = field(default_factory=dict)
    counters: Counters | None = None
    trace: list[str] | None = None


def run(program_text: str, query_text: str, *, store_mode: str = "doubling",
        presize: int | None = None, trace: bool = False) -> RunResult:
    """Parse, compile and execute; deterministic for identical inputs.

    Parse errors propagate as ParseError; runtime faults are reported in
    the result status so callers can map them to exit codes.
    """
    program = parse_program(program_text)
    compiled = compile_program(program)
    query = parse_query(query_text)
    engine = Engine(compiled, store_mode=store_mode, presize=presize, trace=trace)
    try:
        varmap = engine.run_query(query)
    except EngineError as exc:
        return RunResult(status="error", message=str(exc),
                         store_text=store_lines(engine.store),
                         counters=engine.counters(), trace=engine.trace_lines)
    if engine.failed:
        return RunResult(status="fail", message=engine.failure_message,
                         store_text=store_lines(engine.store),
                         counters=engine.counters(), trace=engine.trace_lines)
    bindings = {}
    for name, var in varmap.items():
        value = engine.deref(var)
        bindings[name] = None if isinstance(value, Var) else value
    try:
        snapshot = engine.store.snapshot()
    except StoreError:
        snapshot = None
    return RunResult(status="ok", store_text=store_lines(engine.store),
                     snapshot=snapshot, bindings=bindings,
                     counters=engine.counters(), trace=engine.trace_lines)
