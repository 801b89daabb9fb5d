"""Structural mapping between two story representations.

The engine builds an ordered element view per story from the configured
pair source, enumerates all cross-story pairs of element pairs (local
mappings), scores them by averaged embedding cosines, and merges them
greedily into a one-to-one global mapping, restarting from each of the
top-scoring candidates and keeping the best run. Everything is
deterministic given the vectors.
"""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .embeddings import EmbeddingProvider, cosine
from .errors import (
    ConfigUnsatisfiable,
    DegenerateVector,
    DimensionError,
    EmbeddingUnavailable,
    InsufficientUnits,
    PredictionFailed,
)
from .model import (
    ArcStage,
    Constraint,
    GlobalMapping,
    MappingConfig,
    PairSource,
    Prediction,
    Quadruple,
    Representation,
    StageLayer,
    render_conceptual,
)

LOG = logging.getLogger(__name__)


@dataclass(frozen=True)
class ViewElement:
    """One alignable element: its text plus the label text per active constraint."""

    element_id: int
    text: str
    constraint_texts: dict[Constraint, str] = field(default_factory=dict)


@dataclass(frozen=True)
class PairSourceView:
    """Ordered elements of one story under a mapping config.

    Ordering is by ascending temporal position: units and conceptual
    frames use the unit's temporal index with extraction index as the
    tiebreak, stage0 groups use the minimum temporal index of their
    members. Element ids are positions in this ordering.
    """

    story_id: str
    source: PairSource
    elements: tuple[ViewElement, ...]

    def __len__(self) -> int:
        return len(self.elements)


def _temporal_order(rep: Representation) -> list[int]:
    def sort_key(i: int) -> tuple[int, int]:
        t = rep.units[i].temporal_index
        return (t if t is not None else i + 1, i)

    return sorted(range(rep.n_units), key=sort_key)


def build_view(rep: Representation, config: MappingConfig) -> PairSourceView:
    """Project a representation onto the configured pair source.

    Raises ConfigUnsatisfiable when a required layer is absent.
    """
    if not rep.units:
        raise ConfigUnsatisfiable("units", f"story {rep.story_id} has no extracted units")

    needs_evaluative = Constraint.EVALUATIVE in config.constraints
    if needs_evaluative and rep.evaluative is None:
        raise ConfigUnsatisfiable("evaluative", f"story {rep.story_id}")

    if config.pair_source in (PairSource.UNITS, PairSource.CONCEPTUAL):
        if config.pair_source is PairSource.CONCEPTUAL:
            frames = rep.conceptual.get(config.conceptual_level)
            if frames is None:
                raise ConfigUnsatisfiable(f"conceptual:{config.conceptual_level}", f"story {rep.story_id}")
        elements = []
        for pos, i in enumerate(_temporal_order(rep)):
            if config.pair_source is PairSource.UNITS:
                text = rep.units[i].phrase
            else:
                text = render_conceptual(frames[i], config.conceptual_render)
            constraint_texts = {}
            if needs_evaluative:
                constraint_texts[Constraint.EVALUATIVE] = rep.evaluative[i].joint.value
            elements.append(ViewElement(pos, text, constraint_texts))
        return PairSourceView(rep.story_id, config.pair_source, tuple(elements))

    groups = rep.stage.get(config.stage_layer)
    if groups is None:
        raise ConfigUnsatisfiable(config.stage_layer.value, f"story {rep.story_id}")
    needs_arc = Constraint.ARC in config.constraints
    if needs_arc:
        if config.stage_layer is not StageLayer.STAGE0:
            raise ConfigUnsatisfiable("arc", "arc constraint only applies to stage0 groups")
        if rep.arc is None:
            raise ConfigUnsatisfiable("arc", f"story {rep.story_id}")

    def group_key(group) -> tuple[int, int]:
        temporal = [
            rep.units[i].temporal_index if rep.units[i].temporal_index is not None else i + 1
            for i in group.members
        ]
        return (min(temporal), min(group.members))

    elements = []
    for pos, group in enumerate(sorted(groups, key=group_key)):
        constraint_texts = {}
        if needs_arc:
            stage: ArcStage = rep.arc[group.members[0]].stage
            constraint_texts[Constraint.ARC] = stage.text
        elements.append(ViewElement(pos, group.label, constraint_texts))
    return PairSourceView(rep.story_id, config.pair_source, tuple(elements))


def generate_pairs(view: PairSourceView) -> list[tuple[int, int]]:
    """All within-story element pairs, ordered by view position."""
    if len(view) < 2:
        raise InsufficientUnits(f"story {view.story_id}: {len(view)} element(s), need 2 for pairs")
    return list(combinations(range(len(view)), 2))


def score_local(
    view1: PairSourceView,
    view2: PairSourceView,
    s1_pair: tuple[int, int],
    s2_pair: tuple[int, int],
    config: MappingConfig,
    embedder: EmbeddingProvider,
) -> float:
    """Score one local mapping.

    Without constraints this is the mean of the two aligned element
    cosines (first element with first, second with second). Each active
    constraint contributes two more cosines over its label texts, and
    the mean runs uniformly over all 2 + 2*|constraints| terms.
    """
    i, j = s1_pair
    k, l = s2_pair
    e1, f1 = view1.elements[i], view1.elements[j]
    e2, f2 = view2.elements[k], view2.elements[l]
    terms = [
        cosine(embedder.embed(e1.text), embedder.embed(e2.text)),
        cosine(embedder.embed(f1.text), embedder.embed(f2.text)),
    ]
    for constraint in sorted(config.constraints, key=lambda c: c.value):
        terms.append(
            cosine(
                embedder.embed(e1.constraint_texts[constraint]),
                embedder.embed(e2.constraint_texts[constraint]),
            )
        )
        terms.append(
            cosine(
                embedder.embed(f1.constraint_texts[constraint]),
                embedder.embed(f2.constraint_texts[constraint]),
            )
        )
    return sum(terms) / len(terms)


def _cosine_matrix(texts1: Sequence[str], texts2: Sequence[str], embedder: EmbeddingProvider) -> np.ndarray:
    m1 = embedder.embed_many(texts1)
    m2 = embedder.embed_many(texts2)
    n1 = np.linalg.norm(m1, axis=1, keepdims=True)
    n2 = np.linalg.norm(m2, axis=1, keepdims=True)
    if np.any(n1 == 0) or np.any(n2 == 0):
        raise DegenerateVector("zero vector in cosine matrix")
    sim = (m1 / n1) @ (m2 / n2).T
    return np.clip(sim, -1.0, 1.0)


def _element_similarity(
    view1: PairSourceView,
    view2: PairSourceView,
    config: MappingConfig,
    embedder: EmbeddingProvider,
) -> np.ndarray:
    """Per-element similarity averaged over the text and constraint channels.

    The local score of a quadruple is then just the mean of the two
    aligned entries of this matrix, which keeps full story pairs cheap.
    """
    sim = _cosine_matrix([e.text for e in view1.elements], [e.text for e in view2.elements], embedder)
    channels = [sim]
    for constraint in sorted(config.constraints, key=lambda c: c.value):
        channels.append(
            _cosine_matrix(
                [e.constraint_texts[constraint] for e in view1.elements],
                [e.constraint_texts[constraint] for e in view2.elements],
                embedder,
            )
        )
    return np.mean(channels, axis=0)


def enumerate_quadruples(
    view1: PairSourceView,
    view2: PairSourceView,
    config: MappingConfig,
    embedder: EmbeddingProvider,
) -> list[Quadruple]:
    """All |P1| x |P2| local mappings with their scores."""
    pairs1 = generate_pairs(view1)
    pairs2 = generate_pairs(view2)
    sim = _element_similarity(view1, view2, config, embedder)
    quadruples = []
    for i, j in pairs1:
        for k, l in pairs2:
            score = (sim[i, k] + sim[j, l]) / 2.0
            quadruples.append(Quadruple((i, j), (k, l), float(score)))
    return quadruples


def greedy_global(quadruples: Sequence[Quadruple], beam_n: int, rng_seed: int = 0) -> GlobalMapping:
    """Merge local mappings into the best one-to-one global mapping.

    Sort all quadruples by descending score and take the top beam_n as
    alternative starting points. Each run seeds the mapping with its
    starting quadruple's two correspondences, then scans every remaining
    quadruple in descending order, adding any whose induced
    correspondences are each either new on both sides or already present
    identically. The run's score is the sum of its included quadruples'
    scores; the best run wins.

    Score ties in the scan order are broken by pair indices, so the
    result is deterministic; rng_seed is accepted for interface parity
    with the stochastic tie-break in target selection but is unused.
    """
    del rng_seed
    if beam_n < 1:
        raise ValueError("beam_n must be >= 1")
    if not quadruples:
        return GlobalMapping({}, [], 0.0)

    order = sorted(quadruples, key=lambda q: (-q.score, q.s1_pair, q.s2_pair))
    best: GlobalMapping | None = None
    for start in order[: min(beam_n, len(order))]:
        fwd: dict[int, int] = {}
        bwd: dict[int, int] = {}
        included: list[Quadruple] = []

        def try_add(q: Quadruple) -> None:
            mappings = q.atomic_mappings
            for x, y in mappings:
                if fwd.get(x, y) != y or bwd.get(y, x) != x:
                    return
            for x, y in mappings:
                fwd[x] = y
                bwd[y] = x
            included.append(q)

        try_add(start)
        for q in order:
            if q is start:
                continue
            try_add(q)
        score = sum(q.score for q in included)
        if best is None or score > best.score:
            best = GlobalMapping(dict(fwd), included, score)
    assert best is not None
    return best


@dataclass
class StoryPairResult:
    """Full scoring trace for one story pair, consumed by the explain dump."""

    base_view: PairSourceView
    target_view: PairSourceView
    quadruples: list[Quadruple]
    mapping: GlobalMapping | None
    score: float
    singleton_fallback: bool


def score_pair_detail(
    rep1: Representation,
    rep2: Representation,
    config: MappingConfig,
    embedder: EmbeddingProvider,
) -> StoryPairResult:
    view1 = build_view(rep1, config)
    view2 = build_view(rep2, config)
    if len(view1) < 2 or len(view2) < 2:
        # No pairs can be formed on a singleton side. Fall back to the
        # best single element correspondence: the maximum element cosine
        # over the cross-story grid.
        sim = _cosine_matrix(
            [e.text for e in view1.elements], [e.text for e in view2.elements], embedder
        )
        LOG.info(
            "singleton fallback for %s vs %s (%d x %d elements)",
            rep1.story_id,
            rep2.story_id,
            len(view1),
            len(view2),
        )
        return StoryPairResult(view1, view2, [], None, float(sim.max()), True)
    quadruples = enumerate_quadruples(view1, view2, config, embedder)
    mapping = greedy_global(quadruples, config.beam_n, config.rng_seed)
    score = mapping.score
    if config.normalize_by_included and mapping.included_quadruples:
        score = score / len(mapping.included_quadruples)
    return StoryPairResult(view1, view2, quadruples, mapping, score, False)


def score_story_pair(
    rep1: Representation,
    rep2: Representation,
    config: MappingConfig,
    embedder: EmbeddingProvider,
) -> float:
    """End-to-end score of a candidate target against a base story."""
    return score_pair_detail(rep1, rep2, config, embedder).score


def select_target(
    base_rep: Representation,
    target_reps: Sequence[Representation],
    config: MappingConfig,
    embedder: EmbeddingProvider,
) -> Prediction:
    """Score every target and pick the argmax.

    A target that fails hard scores -inf and is never chosen unless all
    of them fail. Exact score ties are broken by a pseudorandom draw
    seeded from (config seed, base story id), so reruns agree.
    """
    if not target_reps:
        raise ValueError("select_target needs at least one target")
    scores: dict[str, float] = {}
    for rep in target_reps:
        try:
            scores[rep.story_id] = score_story_pair(base_rep, rep, config, embedder)
        except (ConfigUnsatisfiable, EmbeddingUnavailable, DegenerateVector, DimensionError) as exc:
            LOG.warning("target %s failed to score: %s", rep.story_id, exc)
            scores[rep.story_id] = -math.inf
    best = max(scores.values())
    if best == -math.inf:
        raise PredictionFailed(f"every target failed against base {base_rep.story_id}")
    tied = [rep.story_id for rep in target_reps if scores[rep.story_id] == best]
    if len(tied) > 1:
        rng = random.Random(f"{config.rng_seed}:tie:{base_rep.story_id}")
        chosen = rng.choice(tied)
        return Prediction(base_rep.story_id, scores, chosen, tie_broken=True)
    return Prediction(base_rep.story_id, scores, tied[0], tie_broken=False)


def pair_debug_record(result: StoryPairResult) -> dict:
    """Line-record form of a scoring trace: quadruple table plus the winner."""
    included = set()
    if result.mapping is not None:
        included = {(q.s1_pair, q.s2_pair) for q in result.mapping.included_quadruples}
    table = [
        {
            "s1_pair": list(q.s1_pair),
            "s2_pair": list(q.s2_pair),
            "s1_texts": [result.base_view.elements[q.s1_pair[0]].text, result.base_view.elements[q.s1_pair[1]].text],
            "s2_texts": [result.target_view.elements[q.s2_pair[0]].text, result.target_view.elements[q.s2_pair[1]].text],
            "score": q.score,
            "included": (q.s1_pair, q.s2_pair) in included,
        }
        for q in sorted(result.quadruples, key=lambda q: (-q.score, q.s1_pair, q.s2_pair))
    ]
    return {
        "base_id": result.base_view.story_id,
        "target_id": result.target_view.story_id,
        "pair_source": result.base_view.source.value,
        "base_elements": [e.text for e in result.base_view.elements],
        "target_elements": [e.text for e in result.target_view.elements],
        "quadruples": table,
        "correspondences": (
            {str(k): v for k, v in sorted(result.mapping.correspondences.items())}
            if result.mapping is not None
            else {}
        ),
        "score": result.score,
        "singleton_fallback": result.singleton_fallback,
    }
