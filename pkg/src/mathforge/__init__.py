"""mathforge: verification-first data pipeline for math instruction tuning.

Library surface: exact expression checking (expr), equation/answer
extraction (extract), response verdicts and filtering (verify), diversity
augmentation (augment, client), preference pairs and reference losses
(prefs), and the evaluation harness (evaluation). The CLI in mathforge.cli
wires these into pipeline stages over JSONL artifacts.
"""

from .expr import (
    DivisionByZero,
    Equation,
    EquationVerdict,
    EvalError,
    NumericValue,
    Overflow,
    ParseError,
    TolerancePolicy,
    check_equation,
    eval_expression,
    numeric_equal,
    parse_expression,
)
from .extract import (
    AnswerValue,
    ExtractionPatterns,
    DEFAULT_PATTERNS,
    NormalizationError,
    extract_equations,
    extract_final_answer,
    normalize_answer,
)
from .verify import (
    FilterPolicy,
    GenMeta,
    ItemMeta,
    MathItem,
    ReasoningPath,
    Verdict,
    answers_equal,
    dedup_paths,
    filter_paths,
    verify_response,
)
from .prefs import (
    LossInputs,
    PreferencePair,
    build_preference_pairs,
    dpo_loss,
    rm_accuracy,
    rm_ranking_loss,
)
from .evaluation import (
    EvalConfig,
    GradedResult,
    NumberedTemplate,
    Report,
    aggregate_metrics,
    grade_prediction,
    perturb_numbers,
)

__version__ = "0.1.0"
