"""Domain types for narrative analogy scoring.

A story is decomposed into event units; each unit carries several
abstraction layers (conceptual frame, evaluative label, narrative arc
stage), and stage-level layers group units. The per-story bundle of
layers is a Representation, the input to the mapping engine.

Everything here is a plain value: construct once, share freely across
threads, never mutate.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

ARN_CATEGORIES = ("near-far", "far-far", "near-near", "far-near")

_WS = re.compile(r"\s+")


def normalize_phrase(text: str) -> str:
    """Lowercase and collapse whitespace.

    The canonical surface form used for redundancy checks and embedding
    cache keys.
    """
    return _WS.sub(" ", text.strip().lower())


class StoryRole(str, Enum):
    BASE = "base"
    TARGET = "target"


class FunctionalRole(str, Enum):
    STATE = "state"
    ACTION = "action"
    OUTCOME = "outcome"


class Polarity(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    NEUTRAL = "neutral"


class JointLabel(str, Enum):
    """Joint functional-role and polarity category for one event."""

    STRUGGLE = "struggle"            # negative state
    EASE = "ease"                    # positive state
    EFFORT = "effort"                # positive action
    INDIFFERENCE = "indifference"    # negative action
    GAIN = "gain"                    # positive outcome
    LOSS = "loss"                    # negative outcome
    NEUTRAL_STATE = "neutral_state"
    NEUTRAL_ACTION = "neutral_action"
    NEUTRAL_OUTCOME = "neutral_outcome"


_JOINT_TABLE: dict[tuple[FunctionalRole, Polarity], JointLabel] = {
    (FunctionalRole.STATE, Polarity.NEGATIVE): JointLabel.STRUGGLE,
    (FunctionalRole.STATE, Polarity.POSITIVE): JointLabel.EASE,
    (FunctionalRole.ACTION, Polarity.POSITIVE): JointLabel.EFFORT,
    (FunctionalRole.ACTION, Polarity.NEGATIVE): JointLabel.INDIFFERENCE,
    (FunctionalRole.OUTCOME, Polarity.POSITIVE): JointLabel.GAIN,
    (FunctionalRole.OUTCOME, Polarity.NEGATIVE): JointLabel.LOSS,
    (FunctionalRole.STATE, Polarity.NEUTRAL): JointLabel.NEUTRAL_STATE,
    (FunctionalRole.ACTION, Polarity.NEUTRAL): JointLabel.NEUTRAL_ACTION,
    (FunctionalRole.OUTCOME, Polarity.NEUTRAL): JointLabel.NEUTRAL_OUTCOME,
}

_JOINT_INVERSE = {v: k for k, v in _JOINT_TABLE.items()}


def joint_label(functional_role: FunctionalRole, polarity: Polarity) -> JointLabel:
    """Map a (functional role, polarity) cell to its joint label.

    Total over the enum domain; the nine cells map one-to-one onto the
    nine joint labels.
    """
    return _JOINT_TABLE[(functional_role, polarity)]


def roles_for_joint(joint: JointLabel) -> tuple[FunctionalRole, Polarity]:
    """Inverse of joint_label."""
    return _JOINT_INVERSE[joint]


class ArcStage(str, Enum):
    """Five-stage narrative arc; the main event is mandatory per story."""

    BACKGROUND = "background"
    MAIN_EVENT = "main_event"
    CHALLENGE = "challenge"
    ACTION = "action"
    CONCLUSION = "conclusion"

    @property
    def text(self) -> str:
        """Human surface form ("main event"), used where the stage name is embedded."""
        return self.value.replace("_", " ")


class StageLayer(str, Enum):
    STAGE0 = "stage0"   # one abstraction per arc-stage group of events
    STAGE1 = "stage1"   # one abstraction for the whole story


class PairSource(str, Enum):
    UNITS = "units"
    CONCEPTUAL = "conceptual"
    STAGE = "stage"


class ConceptualRender(str, Enum):
    ROOT_ONLY = "root_only"
    MODIFIER_AND_ROOT = "modifier_and_root"


class Constraint(str, Enum):
    EVALUATIVE = "evaluative"
    ARC = "arc"


@dataclass(frozen=True)
class Story:
    """A narrative with its dataset role and optional provenance metadata."""

    id: str
    text: str
    role: StoryRole = StoryRole.BASE
    dataset_meta: Mapping[str, Any] | None = None

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError(f"story {self.id!r} has empty text")
        meta = self.dataset_meta or {}
        category = meta.get("arn_category")
        if category is not None and category not in ARN_CATEGORIES:
            raise ValueError(f"story {self.id!r}: unknown arn_category {category!r}")


@dataclass(frozen=True)
class EventUnit:
    """One extracted event phrase.

    index is the 0-based extraction order; temporal_index is the 1-based
    chronological position (ties allowed for simultaneous events) and is
    None until the ordering task has run.
    """

    index: int
    phrase: str
    temporal_index: int | None = None

    def __post_init__(self) -> None:
        if not self.phrase.strip():
            raise ValueError("event unit with empty phrase")
        if self.temporal_index is not None and self.temporal_index < 1:
            raise ValueError(f"temporal_index must be >= 1, got {self.temporal_index}")


@dataclass(frozen=True)
class ConceptualAbstraction:
    """A modifier + root semantic frame for one event phrase.

    level 0 frames come straight from event phrases; level i > 0 frames
    generalize the level i-1 frames.
    """

    level: int
    modifier: str
    root: str

    def __post_init__(self) -> None:
        if self.level < 0:
            raise ValueError("conceptual level must be >= 0")
        if not self.root:
            raise ValueError("conceptual abstraction needs a non-empty root")


def render_conceptual(abstraction: ConceptualAbstraction, mode: ConceptualRender) -> str:
    """Render a frame as text: either the root alone or "modifier_root".

    An empty modifier falls back to the root in both modes, so the
    rendered form is never empty and cache keys stay stable.
    """
    if mode is ConceptualRender.MODIFIER_AND_ROOT and abstraction.modifier:
        return f"{abstraction.modifier}_{abstraction.root}"
    return abstraction.root


@dataclass(frozen=True)
class EvaluativeLabel:
    """Functional role plus polarity, collapsed into one of nine joint labels."""

    functional_role: FunctionalRole
    polarity: Polarity
    joint: JointLabel

    def __post_init__(self) -> None:
        expected = joint_label(self.functional_role, self.polarity)
        if self.joint is not expected:
            raise ValueError(
                f"joint label {self.joint.value!r} does not match "
                f"({self.functional_role.value}, {self.polarity.value})"
            )

    @classmethod
    def from_parts(cls, functional_role: FunctionalRole, polarity: Polarity) -> "EvaluativeLabel":
        return cls(functional_role, polarity, joint_label(functional_role, polarity))

    @classmethod
    def from_joint(cls, joint: JointLabel) -> "EvaluativeLabel":
        role, pol = roles_for_joint(joint)
        return cls(role, pol, joint)


@dataclass(frozen=True)
class ArcLabel:
    stage: ArcStage


@dataclass(frozen=True)
class StageAbstraction:
    """A stage-layer abstraction over a group of units.

    stage0 members are the unit indices sharing one arc stage; the
    single stage1 abstraction covers every unit in the story.
    """

    layer: StageLayer
    members: tuple[int, ...]
    label: str

    def __post_init__(self) -> None:
        if not self.members:
            raise ValueError("stage abstraction with no member units")
        if not self.label.strip():
            raise ValueError("stage abstraction with empty label")


@dataclass
class Representation:
    """Per-story bundle of extracted layers.

    Any subset of layers may be absent; mapping configs validate what
    they need at use time. All per-unit lists are index-aligned with
    units. temporal_fallback records that chronological ordering could
    not be inferred and textual order was used instead.
    """

    story_id: str
    units: tuple[EventUnit, ...] = ()
    conceptual: dict[int, tuple[ConceptualAbstraction, ...]] = field(default_factory=dict)
    evaluative: tuple[EvaluativeLabel, ...] | None = None
    arc: tuple[ArcLabel, ...] | None = None
    stage: dict[StageLayer, tuple[StageAbstraction, ...]] = field(default_factory=dict)
    temporal_fallback: bool = False

    @property
    def n_units(self) -> int:
        return len(self.units)

    def has_temporal(self) -> bool:
        return bool(self.units) and all(u.temporal_index is not None for u in self.units)


def validate_representation(rep: Representation) -> None:
    """Check the cross-layer invariants every module relies on.

    Raises ValueError on the first violation. Partial representations
    are fine; only the layers that exist are checked.
    """
    n = rep.n_units
    seen: set[str] = set()
    for pos, unit in enumerate(rep.units):
        if unit.index != pos:
            raise ValueError(f"{rep.story_id}: unit at position {pos} has index {unit.index}")
        key = normalize_phrase(unit.phrase)
        if key in seen:
            raise ValueError(f"{rep.story_id}: redundant unit phrase {unit.phrase!r}")
        seen.add(key)
    for level, frames in rep.conceptual.items():
        if len(frames) != n:
            raise ValueError(f"{rep.story_id}: conceptual level {level} has {len(frames)} frames for {n} units")
        for frame in frames:
            if frame.level != level:
                raise ValueError(f"{rep.story_id}: frame level {frame.level} stored under level {level}")
    if rep.evaluative is not None and len(rep.evaluative) != n:
        raise ValueError(f"{rep.story_id}: {len(rep.evaluative)} evaluative labels for {n} units")
    if rep.arc is not None:
        if len(rep.arc) != n:
            raise ValueError(f"{rep.story_id}: {len(rep.arc)} arc labels for {n} units")
        if not any(label.stage is ArcStage.MAIN_EVENT for label in rep.arc):
            raise ValueError(f"{rep.story_id}: no unit carries the mandatory main event stage")
    stage0 = rep.stage.get(StageLayer.STAGE0)
    if stage0 is not None:
        covered = [i for group in stage0 for i in group.members]
        if sorted(covered) != list(range(n)):
            raise ValueError(f"{rep.story_id}: stage0 members do not partition the unit indices")
    stage1 = rep.stage.get(StageLayer.STAGE1)
    if stage1 is not None:
        if len(stage1) != 1:
            raise ValueError(f"{rep.story_id}: expected exactly one stage1 abstraction, got {len(stage1)}")
        if set(stage1[0].members) != set(range(n)):
            raise ValueError(f"{rep.story_id}: stage1 members must cover every unit")


# Which soft constraints make sense for each pair source. Stage pairs can
# only be constrained by the arc stage of the group; unit and conceptual
# pairs only by the unit's evaluative label.
_ALLOWED_CONSTRAINTS: dict[PairSource, frozenset[Constraint]] = {
    PairSource.UNITS: frozenset({Constraint.EVALUATIVE}),
    PairSource.CONCEPTUAL: frozenset({Constraint.EVALUATIVE}),
    PairSource.STAGE: frozenset({Constraint.ARC}),
}


@dataclass(frozen=True)
class MappingConfig:
    """Everything the mapping engine needs to know about one setting."""

    pair_source: PairSource
    conceptual_level: int = 0
    conceptual_render: ConceptualRender = ConceptualRender.ROOT_ONLY
    stage_layer: StageLayer = StageLayer.STAGE0
    constraints: frozenset[Constraint] = frozenset()
    beam_n: int = 1
    rng_seed: int = 0
    normalize_by_included: bool = False

    def __post_init__(self) -> None:
        if self.beam_n < 1:
            raise ValueError("beam_n must be >= 1")
        if self.conceptual_level < 0:
            raise ValueError("conceptual_level must be >= 0")
        extra = self.constraints - _ALLOWED_CONSTRAINTS[self.pair_source]
        if extra:
            names = ", ".join(sorted(c.value for c in extra))
            raise ValueError(f"constraints [{names}] not allowed with pair_source={self.pair_source.value}")


@dataclass(frozen=True)
class Quadruple:
    """A candidate local mapping: one ordered element pair per story, scored.

    Pair entries index elements of the respective pair-source view and
    are strictly increasing within each pair.
    """

    s1_pair: tuple[int, int]
    s2_pair: tuple[int, int]
    score: float

    def __post_init__(self) -> None:
        if not self.s1_pair[0] < self.s1_pair[1]:
            raise ValueError(f"s1_pair must be ordered, got {self.s1_pair}")
        if not self.s2_pair[0] < self.s2_pair[1]:
            raise ValueError(f"s2_pair must be ordered, got {self.s2_pair}")

    @property
    def atomic_mappings(self) -> tuple[tuple[int, int], tuple[int, int]]:
        """The two element correspondences this local mapping induces."""
        return (
            (self.s1_pair[0], self.s2_pair[0]),
            (self.s1_pair[1], self.s2_pair[1]),
        )


@dataclass
class GlobalMapping:
    """A consistent one-to-one set of element correspondences with its score."""

    correspondences: dict[int, int]
    included_quadruples: list[Quadruple]
    score: float


@dataclass
class Prediction:
    """Target choice for one base story."""

    base_id: str
    per_target_scores: dict[str, float]
    chosen_target: str
    tie_broken: bool = False


# --- JSON persistence -------------------------------------------------------
#
# One file per story; field names match the dataclass fields. Absent
# layers are simply omitted.


def representation_to_dict(rep: Representation) -> dict[str, Any]:
    out: dict[str, Any] = {
        "story_id": rep.story_id,
        "units": [
            {"index": u.index, "phrase": u.phrase, "temporal_index": u.temporal_index}
            for u in rep.units
        ],
        "temporal_fallback": rep.temporal_fallback,
    }
    if rep.conceptual:
        out["conceptual"] = {
            str(level): [
                {"level": f.level, "modifier": f.modifier, "root": f.root} for f in frames
            ]
            for level, frames in sorted(rep.conceptual.items())
        }
    if rep.evaluative is not None:
        out["evaluative"] = [
            {
                "functional_role": e.functional_role.value,
                "polarity": e.polarity.value,
                "joint": e.joint.value,
            }
            for e in rep.evaluative
        ]
    if rep.arc is not None:
        out["arc"] = [{"stage": a.stage.value} for a in rep.arc]
    if rep.stage:
        out["stage"] = {
            layer.value: [
                {"layer": s.layer.value, "members": list(s.members), "label": s.label}
                for s in groups
            ]
            for layer, groups in sorted(rep.stage.items(), key=lambda kv: kv[0].value)
        }
    return out


def representation_from_dict(data: Mapping[str, Any]) -> Representation:
    units = tuple(
        EventUnit(index=u["index"], phrase=u["phrase"], temporal_index=u.get("temporal_index"))
        for u in data.get("units", [])
    )
    conceptual = {
        int(level): tuple(
            ConceptualAbstraction(level=f["level"], modifier=f["modifier"], root=f["root"])
            for f in frames
        )
        for level, frames in data.get("conceptual", {}).items()
    }
    evaluative = None
    if "evaluative" in data:
        evaluative = tuple(
            EvaluativeLabel(
                FunctionalRole(e["functional_role"]),
                Polarity(e["polarity"]),
                JointLabel(e["joint"]),
            )
            for e in data["evaluative"]
        )
    arc = None
    if "arc" in data:
        arc = tuple(ArcLabel(ArcStage(a["stage"])) for a in data["arc"])
    stage = {
        StageLayer(layer): tuple(
            StageAbstraction(StageLayer(s["layer"]), tuple(s["members"]), s["label"])
            for s in groups
        )
        for layer, groups in data.get("stage", {}).items()
    }
    return Representation(
        story_id=data["story_id"],
        units=units,
        conceptual=conceptual,
        evaluative=evaluative,
        arc=arc,
        stage=stage,
        temporal_fallback=bool(data.get("temporal_fallback", False)),
    )
