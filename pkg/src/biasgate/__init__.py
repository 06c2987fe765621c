"""biasgate: retrieval-grounded social bias detection for LLM output.

The pipeline, end to end: a knowledge base of labeled biased statements
is embedded into a retrieval index; for each sentence under judgement
the nearest statements are injected into a structured prompt; a chat
backend answers in a fixed template; the answer is parsed into a
structured verdict. On top of that sit an evaluation harness (decision,
category and attribution metrics) and a moderation gateway that audits
upstream generations and blocks biased output.
"""

from .backends import ChatBackend, MockRuleBackend, RemoteChatBackend, RemoteChatConfig, mock_complete
from .detector import BatchItem, DetectionResult, Detector
from ._wire import RetryPolicy
from .embeddings import LocalHashingEmbedder, RemoteEmbedder, RemoteEmbedderConfig, fnv1a_64, tokenize
from .errors import (
    BackendUnavailable,
    BadFlagValue,
    BiasGateError,
    DimensionMismatch,
    EmbedderMismatch,
    EmptyInput,
    EmptySentence,
    EmptyStatement,
    MissingAttribution,
    MissingColumn,
    SchemaError,
    TemplateError,
    UnknownBiasType,
)
from .evalharness import (
    ChatGenerator,
    Confusion,
    GenerationReport,
    ItemLog,
    MetricsReport,
    ReplayGenerator,
    TypeAccuracy,
    compute_metrics,
    evaluate_generation,
    evaluate_labeled,
    judge_pair,
)
from .gateway import Gateway, GatewayConfig, create_app
from .knowledge import (
    clean_text,
    AliasMap,
    BiasEntry,
    BiasType,
    IngestReport,
    KnowledgeBase,
    append,
    ingest,
    load,
    save,
)
from .labels import (
    ColumnMapping,
    GenerationTask,
    GoldLabel,
    LabeledExample,
    import_labeled_csv,
    load_generation_tasks,
    load_labeled,
    load_replay,
    save_labeled,
)
from .prompting import (
    PromptBundle,
    PromptConfig,
    TrainingRecord,
    build_prompt,
    build_training_records,
    read_training_records,
    render_gold_answer,
    write_training_records,
)
from .retrieval import Reference, RetrievalIndex, build_index, load_index, query, save_index
from .templates import TemplateSet, default_templates, load_templates
from .verdict import Verdict, normalize_span, parse, spans_match

__version__ = "0.1.0"

__all__ = [
    "AliasMap", "BackendUnavailable", "BadFlagValue", "BatchItem", "BiasEntry",
    "BiasGateError", "BiasType", "ChatBackend", "ChatGenerator", "ColumnMapping",
    "Confusion", "DetectionResult", "Detector", "DimensionMismatch",
    "EmbedderMismatch", "EmptyInput", "EmptySentence", "EmptyStatement",
    "Gateway", "GatewayConfig", "GenerationReport", "GenerationTask", "GoldLabel",
    "IngestReport", "ItemLog", "KnowledgeBase", "LabeledExample",
    "LocalHashingEmbedder", "MetricsReport", "MissingAttribution", "MissingColumn",
    "MockRuleBackend", "PromptBundle", "PromptConfig", "Reference",
    "RemoteChatBackend", "RemoteChatConfig", "RemoteEmbedder",
    "RemoteEmbedderConfig", "ReplayGenerator", "RetrievalIndex", "RetryPolicy", "SchemaError",
    "TemplateError", "TemplateSet", "TrainingRecord", "TypeAccuracy",
    "UnknownBiasType", "Verdict", "append", "build_index", "build_prompt",
    "build_training_records", "clean_text", "compute_metrics", "create_app", "default_templates",
    "evaluate_generation", "evaluate_labeled", "fnv1a_64", "import_labeled_csv",
    "ingest", "judge_pair", "load", "load_generation_tasks", "load_index",
    "load_labeled", "load_replay", "load_templates", "mock_complete",
    "normalize_span", "parse", "query", "read_training_records",
    "render_gold_answer", "save", "save_index", "save_labeled", "spans_match",
    "tokenize", "write_training_records",
]
