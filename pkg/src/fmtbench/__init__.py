"""fmtbench: a finite model theory workbench.

Finite relational structures with composition operators, a first-order
evaluator, a Datalog(not) engine, generators for a family of
extension-closed queries and their witness structures, and a prefix
Ehrenfeucht-Fraisse game solver, tied together by a CLI verification
harness (``fmtbench verify``).
"""

from .structures import (
    ORDER,
    MissingSymbolError,
    NotOrderedError,
    Structure,
    StructureError,
    StructureParseError,
    Vocabulary,
    VocabularyError,
    check_ordered,
    check_partial_successor,
    induced_substructure,
    is_partial_isomorphism,
    isomorphic,
    minmax_expand,
    ordered_sum,
    ordered_sum_seq,
    parse_structure,
    reduct,
    serialize,
    star_expand,
)
from .fo import (
    Evaluator,
    Formula,
    FormulaParseError,
    PrefixClass,
    classify_prefix,
    evaluate,
    format_formula,
    parse_formula,
    relativize,
    to_pnf,
)
from .datalog import (
    DatalogProgram,
    Literal,
    ProgramParseError,
    Rule,
    check_extension_closed_sample,
    eval_fixpoint,
    goal_holds,
    parse_program,
    program_to_text,
    validate,
    violations,
)
from .constructions import (
    ScaleParams,
    build_datalog,
    build_family,
    build_G,
    build_gap,
    build_L,
    build_sat,
    build_sentence,
    build_tot,
    build_unsat,
    rho,
    sigma,
)
from .games import (
    BudgetExceededError,
    GameSpec,
    GameVerdict,
    check_minmax_composition,
    check_ordered_sum_composition,
    naive_game_search,
    prefix_equiv,
    prefix_implies,
    rank_equiv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
