"""minichr: a miniature committed-choice rule engine.

Parses a small CHR-style rule language, executes it deterministically with
an indexed constraint store, ships the classic union-find programs (naive
and rank/path-compression variants), and verifies them against imperative
reference implementations with counter-based complexity measurements.
"""

from .bench import (
    Metrics,
    SplitMix64,
    WorkloadSpec,
    gen_contrived_workload,
    gen_random_workload,
    run_workload,
    scaling_report,
)
from .engine import (
    CompileError,
    CompiledProgram,
    Counters,
    Engine,
    EngineError,
    RunResult,
    compile_program,
    run,
)
from .oracle import BruteForcePartition, NaiveUF, RankUF, bf_partition
from .parser import ParseError, Warning, parse_program, parse_query, validate_program
from .programs import (
    DuplicateMake,
    ForestViolation,
    UfSession,
    UnknownElement,
    Variant,
    program_source,
    variant_program,
)
from .store import Store, StoreError
from .terms import (
    Atom,
    BinExpr,
    Bind,
    Cmp,
    Is,
    Program,
    Rule,
    Var,
    alpha_key,
    programs_equal,
    render_program,
)
from .verify import check_seed, minimize_ops

__version__ = "0.1.0"
