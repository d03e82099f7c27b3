from __future__ import annotations

from timeline_qa.harness.default_suite import default_suite
from timeline_qa.harness.grading import extract_letter, grade, normalize_answer
from timeline_qa.harness.oracle import OracleResult, brute_force_oracle
from timeline_qa.harness.runner import (
    AblationRow,
    QuestionOutcome,
    RunReport,
    ablation_table,
    accuracy_drops,
    duration_sweep,
    run_question,
    run_suite,
    stretch_suite,
)
from timeline_qa.harness.suite import (
    QuestionMode,
    ScriptedSuite,
    SuiteQuestion,
    load_suite,
    suite_from_documents,
    write_suite,
)

__all__ = [
    "AblationRow",
    "OracleResult",
    "QuestionMode",
    "QuestionOutcome",
    "RunReport",
    "ScriptedSuite",
    "SuiteQuestion",
    "ablation_table",
    "accuracy_drops",
    "brute_force_oracle",
    "default_suite",
    "duration_sweep",
    "extract_letter",
    "grade",
    "load_suite",
    "normalize_answer",
    "run_question",
    "run_suite",
    "stretch_suite",
    "suite_from_documents",
    "write_suite",
]
