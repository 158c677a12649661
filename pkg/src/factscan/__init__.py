"""Fact-level, black-box hallucination detection by cross-sample consistency.

A response is decomposed into a knowledge graph of (head, relation,
tail) facts; each fact is scored by how consistently it reappears across
stochastic re-generations of the same prompt; fact scores aggregate to
sentence and passage scores and drive targeted correction.
"""

from .kg import EmptyTermError, Fact, KnowledgeGraph, Schema, Term, normalize_term
from .parsing import (
    NoJsonArrayFound,
    YesNoVerdict,
    facts_to_csv,
    parse_choice,
    parse_json_list,
    parse_triples,
    parse_yes_no,
)
from .llm import (
    BackendUnreachable,
    BudgetExceeded,
    CorruptSession,
    EmptyPromptError,
    GenerationParams,
    HttpBackend,
    LlmClient,
    LlmError,
    LlmExchange,
    MalformedBackendResponse,
    MissingRecording,
    ResponseCache,
    ScriptedBackend,
    load_session,
    record_session,
    request_digest,
)
from .dataset import (
    DetectionInstance,
    SchemaMismatch,
    UnknownLabel,
    binarize_label,
    load_dataset,
    passage_gold_score,
    split_sentences,
)
from .extraction import (
    ExtractionFailed,
    KgExtractor,
    PassageExtraction,
    build_sample_schema,
)
from .scoring import (
    Aggregation,
    FactScore,
    NoSamplesError,
    ScoreReport,
    Scorer,
    aggregate_passage,
    aggregate_sentence,
    frequency_score,
    kg_size_passage_score,
    llm_kg_score,
    llm_text_score,
    psi_average,
    score_instance,
)
from .metrics import (
    ConstantInput,
    DegenerateLabels,
    MetricResult,
    auc_pr,
    average_ranks,
    pearson,
    random_baseline,
    spearman,
)
from .evaluation import (
    EvaluationResult,
    IdMismatch,
    annotate_fact_judge,
    evaluate_reports,
    sweep_samples,
)
from .correction import (
    CorrectionMode,
    CorrectionReport,
    CorrectionRun,
    EmptyRun,
    Judgment,
    MalformedCorrection,
    correction_report,
    flag_hallucinations,
    judge_sentence,
    run_correction,
)
from .dot import export_dot
from .config import RunConfig, api_key_from_env, load_config

__version__ = "0.1.0"
