"""Analogy scoring between short narratives.

Stories are decomposed into event units by a chat model, abstracted at
several levels, and aligned by a deterministic structural mapping
engine that scores candidate target stories against a base story.
"""

from .benchmark import (
    AblationSpec,
    BenchmarkItem,
    EvalReport,
    Granularity,
    Instruction,
    Method,
    load_dataset,
    run_grid,
    run_llm_baseline,
    run_sm,
    score_report,
)
from .embeddings import (
    EmbeddingProvider,
    FileVectorBackend,
    HashProjectionBackend,
    HttpEmbeddingBackend,
    Vector,
    cosine,
)
from .extraction import Extractor
from .gateway import ChatRequest, Gateway, HttpChatProvider, MockProvider, StructuredReply
from .mapping import (
    PairSourceView,
    ViewElement,
    build_view,
    generate_pairs,
    greedy_global,
    score_local,
    score_story_pair,
    select_target,
)
from .model import (
    ArcLabel,
    ArcStage,
    ConceptualAbstraction,
    ConceptualRender,
    Constraint,
    EvaluativeLabel,
    EventUnit,
    FunctionalRole,
    GlobalMapping,
    JointLabel,
    MappingConfig,
    PairSource,
    Polarity,
    Prediction,
    Quadruple,
    Representation,
    StageAbstraction,
    StageLayer,
    Story,
    StoryRole,
    joint_label,
    render_conceptual,
    validate_representation,
)
from .store import Store

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
