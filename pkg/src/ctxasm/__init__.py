"""Toolkit for context-aware NL-to-assembly generation experiments:
corpus handling, preprocessing, contextual splits, generation backends,
and output-similarity metrics."""

from .context import (
    DEFAULT_SEPARATOR,
    ContextualInput,
    DatasetSplit,
    ExperimentConfig,
    build_contextual_input,
    export_split,
    generate_splits,
    load_preset,
)
from .corpus import (
    ContextCategory,
    Corpus,
    Sample,
    build_corpus,
    category_histogram,
    corpus_content_hash,
    load_corpus,
    save_corpus,
    validate_corpus,
)
from .generation import (
    EchoBackend,
    GenerationRequest,
    GenerationResponse,
    RemoteBackend,
    RetrievalBackend,
    build_retrieval_index,
    remote_generate,
    retrieve_generate,
)
from .metrics import (
    EvalPair,
    MetricConfig,
    MetricReport,
    edit_distance_sim,
    evaluate_corpus,
    exact_match,
    meteor,
    rouge_l,
)
from .preprocess import (
    StandardizationDict,
    StopwordList,
    TextKind,
    destandardize,
    filter_stopwords,
    standardize,
    tokenize,
)

__version__ = "0.1.0"
