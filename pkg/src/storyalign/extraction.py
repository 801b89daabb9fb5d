"""Builds story representations through prompting tasks.

Each layer of a Representation comes from one templated chat task:
event extraction, chronological ordering, conceptual frames (two
levels), evaluative labels, arc stages, and the two stage-abstraction
layers. Layers within a story run sequentially in dependency order;
different stories are independent.
"""

from __future__ import annotations

import logging
import re
from importlib import resources
from pathlib import Path
from string import Template
from typing import Any, Iterable, Sequence

from .errors import ExtractionFailed
from .gateway import ChatRequest, Gateway
from .model import (
    ArcLabel,
    ArcStage,
    ConceptualAbstraction,
    EvaluativeLabel,
    EventUnit,
    JointLabel,
    Representation,
    StageAbstraction,
    StageLayer,
    Story,
    normalize_phrase,
    validate_representation,
)

LOG = logging.getLogger(__name__)

SYSTEM_PROMPT = "You are a careful story-annotation assistant. Follow the output format exactly."

TASKS = ("events", "temporal", "conceptual0", "conceptual1", "evaluative", "arc", "stage0", "stage1")

# Layer names accepted by build_representation.
LAYER_EVENTS = "events"
LAYER_TEMPORAL = "temporal"
LAYER_EVALUATIVE = "evaluative"
LAYER_ARC = "arc"
LAYER_STAGE0 = "stage0"
LAYER_STAGE1 = "stage1"

MAX_CONCEPTUAL_LEVEL = 1

_STOPWORDS = frozenset(
    "a an the and or but so to of in on at by for with from he she it they i you we his her its "
    "their was were is are be been had has have this that as not no".split()
)


def conceptual_layer(level: int) -> str:
    return f"conceptual:{level}"


def resolve_needs(needs: Iterable[str]) -> list[str]:
    """Expand a layer request to its dependency closure, in build order.

    Events and temporal ordering are always included; conceptual levels
    pull in the levels below them; the stage layers pull in the arc (and
    for the story-level layer, also the evaluative) labels.
    """
    wanted = set(needs)
    wanted.update({LAYER_EVENTS, LAYER_TEMPORAL})
    if LAYER_STAGE1 in wanted:
        wanted.update({LAYER_STAGE0, LAYER_EVALUATIVE})
    if LAYER_STAGE0 in wanted:
        wanted.add(LAYER_ARC)
    levels = set()
    for name in list(wanted):
        match = re.fullmatch(r"conceptual:(\d+)", name)
        if match:
            level = int(match.group(1))
            if level > MAX_CONCEPTUAL_LEVEL:
                raise ValueError(f"conceptual level {level} beyond the supported hierarchy")
            levels.update(range(level + 1))
    wanted.update(conceptual_layer(i) for i in levels)
    order = [LAYER_EVENTS, LAYER_TEMPORAL]
    order += [conceptual_layer(i) for i in sorted(levels)]
    order += [name for name in (LAYER_EVALUATIVE, LAYER_ARC, LAYER_STAGE0, LAYER_STAGE1) if name in wanted]
    unknown = wanted - set(order)
    if unknown:
        raise ValueError(f"unknown layers requested: {sorted(unknown)}")
    return order


# --- reply validators ---------------------------------------------------


def _as_str_list(value: Any) -> list[str]:
    if not isinstance(value, list) or not value:
        raise ValueError("expected a non-empty JSON array")
    out = []
    for entry in value:
        if not isinstance(entry, str) or not entry.strip():
            raise ValueError("expected an array of non-empty strings")
        out.append(entry.strip())
    return out


def _as_int_list(value: Any) -> list[int]:
    if not isinstance(value, list) or not value:
        raise ValueError("expected a non-empty JSON array")
    out = []
    for entry in value:
        if isinstance(entry, bool) or not isinstance(entry, int):
            raise ValueError("expected an array of integers")
        out.append(entry)
    return out


def _as_frame_list(value: Any) -> list[str]:
    # Either a bare array of frame names or an object with a results
    # array of {frame_name: ...} entries.
    if isinstance(value, dict) and isinstance(value.get("results"), list):
        names = []
        for entry in value["results"]:
            if not isinstance(entry, dict) or not isinstance(entry.get("frame_name"), str):
                raise ValueError("results entries need a frame_name string")
            names.append(entry["frame_name"])
        value = names
    return _as_str_list(value)


def _as_label_text(value: Any) -> str:
    if isinstance(value, dict) and isinstance(value.get("label"), str):
        value = value["label"]
    if not isinstance(value, str) or not value.strip():
        raise ValueError("expected a non-empty JSON string")
    return value.strip()


# --- label normalization -------------------------------------------------


def parse_frame_name(name: str, level: int) -> ConceptualAbstraction:
    """Split a frame name into modifier and root on its last separator.

    Accepts underscore, hyphen, or whitespace separation and lowercases
    both parts; a single-token frame gets an empty modifier.
    """
    cleaned = re.sub(r"\s+", "_", name.strip().lower())
    cleaned = cleaned.strip("_-")
    if not cleaned:
        raise ValueError(f"empty frame name {name!r}")
    parts = re.split(r"[_-]", cleaned)
    root = parts[-1]
    modifier = "_".join(parts[:-1])
    if not root:
        raise ValueError(f"frame name {name!r} has no root")
    return ConceptualAbstraction(level=level, modifier=modifier, root=root)


def parse_joint_label(text: str) -> JointLabel:
    key = re.sub(r"[\s\-]+", "_", text.strip().lower())
    try:
        return JointLabel(key)
    except ValueError:
        raise ValueError(f"unknown evaluative label {text!r}") from None


def parse_arc_stage(text: str) -> ArcStage:
    key = re.sub(r"[\s\-]+", "_", text.strip().lower())
    try:
        return ArcStage(key)
    except ValueError:
        raise ValueError(f"unknown arc stage {text!r}") from None


def coverage_ratio(story_text: str, phrases: Sequence[str]) -> float:
    """Fraction of the story's content words that appear in some unit.

    Diagnostic only: logged, never asserted.
    """
    words = [w for w in re.findall(r"[a-z']+", story_text.lower()) if w not in _STOPWORDS]
    if not words:
        return 1.0
    unit_words = set()
    for phrase in phrases:
        unit_words.update(re.findall(r"[a-z']+", phrase.lower()))
    covered = sum(1 for w in words if w in unit_words)
    return covered / len(words)


def _story_ngrams(text: str, n: int) -> set[str]:
    words = normalize_phrase(text).split()
    return {" ".join(words[i : i + n]) for i in range(len(words) - n + 1)}


def check_no_story_leak(prompt: str, story_text: str, max_words: int = 3) -> None:
    """Guard that a prompt contains no story span longer than max_words.

    Used by the story-level stage task, which must be conditioned on the
    extracted layers only.
    """
    prompt_norm = normalize_phrase(prompt)
    for ngram in _story_ngrams(story_text, max_words + 1):
        if ngram in prompt_norm:
            raise RuntimeError(f"prompt leaks story text: {ngram!r}")


def group_units_by_stage(
    units: Sequence[EventUnit], arc: Sequence[ArcLabel]
) -> list[tuple[ArcStage, tuple[int, ...]]]:
    """Partition unit indices by arc stage, ordered by earliest temporal position."""
    groups: dict[ArcStage, list[int]] = {}
    for unit, label in zip(units, arc):
        groups.setdefault(label.stage, []).append(unit.index)

    def key(item: tuple[ArcStage, list[int]]) -> tuple[int, int]:
        members = item[1]
        temporal = [
            units[i].temporal_index if units[i].temporal_index is not None else i + 1 for i in members
        ]
        return (min(temporal), min(members))

    return [(stage, tuple(members)) for stage, members in sorted(groups.items(), key=key)]


class Extractor:
    """Runs the extraction tasks for one story at a time.

    Templates are plain text files with named placeholders; a directory
    of overrides takes precedence over the packaged defaults, so the
    few-shot exemplars can be adapted per dataset without code changes.
    """

    def __init__(
        self,
        gateway: Gateway,
        store=None,
        templates_dir: Path | str | None = None,
        max_tokens: int = 2048,
    ):
        self.gateway = gateway
        self.store = store
        self.templates_dir = Path(templates_dir) if templates_dir else None
        self.max_tokens = max_tokens
        self._templates: dict[str, Template] = {}

    # -- plumbing ---------------------------------------------------------

    def _template(self, task: str) -> Template:
        if task not in self._templates:
            if self.templates_dir is not None:
                override = self.templates_dir / f"{task}.txt"
                if override.is_file():
                    self._templates[task] = Template(override.read_text(encoding="utf-8"))
                    return self._templates[task]
            text = resources.files("storyalign.prompts").joinpath(f"{task}.txt").read_text(encoding="utf-8")
            self._templates[task] = Template(text)
        return self._templates[task]

    def _ask(self, task: str, story_id: str, fields: dict[str, str], schema) -> Any:
        prompt = self._template(task).substitute(fields)
        req = ChatRequest(
            system_prompt=SYSTEM_PROMPT,
            user_prompt=prompt,
            temperature=0.0,
            max_tokens=self.max_tokens,
            tag=f"{task}/{story_id}",
        )
        reply = self.gateway.complete_structured(req, schema)
        if not reply.parse_ok:
            raise ExtractionFailed(story_id, task, f"unparseable reply after {reply.attempts} attempts")
        return reply.extracted_payload

    @staticmethod
    def _numbered(lines: Iterable[str]) -> str:
        return "\n".join(f"{i + 1}. {line}" for i, line in enumerate(lines))

    # -- tasks --------------------------------------------------------------

    def extract_events(self, story: Story) -> tuple[EventUnit, ...]:
        """Decompose a story into event phrases; temporal indices stay unset.

        Redundant phrases (equal after normalization) are dropped and the
        indices compacted, which keeps the non-redundancy invariant
        without a re-prompt.
        """
        phrases = self._ask("events", story.id, {"story": story.text}, _as_str_list)
        units: list[EventUnit] = []
        seen: set[str] = set()
        for phrase in phrases:
            key = normalize_phrase(phrase)
            if key in seen:
                LOG.info("story %s: dropping redundant event %r", story.id, phrase)
                continue
            seen.add(key)
            units.append(EventUnit(index=len(units), phrase=phrase))
        if not units:
            raise ExtractionFailed(story.id, "events", "model returned no events")
        ratio = coverage_ratio(story.text, [u.phrase for u in units])
        LOG.info("story %s: %d events, coverage %.2f", story.id, len(units), ratio)
        return tuple(units)

    def assign_temporal_order(self, story: Story, units: Sequence[EventUnit]) -> tuple[tuple[EventUnit, ...], bool]:
        """Attach chronological indices to extracted units.

        Returns (units, used_fallback). On a malformed or miscounted
        reply the textual order stands in for chronology and the
        fallback flag is set instead of failing the story.
        """
        fields = {"story": story.text, "units": self._numbered(u.phrase for u in units)}
        try:
            indices = self._ask("temporal", story.id, fields, _as_int_list)
            if len(indices) != len(units) or min(indices) < 1:
                raise ExtractionFailed(story.id, "temporal", "index list does not match the units")
        except ExtractionFailed:
            LOG.warning("story %s: temporal ordering failed, falling back to textual order", story.id)
            ordered = tuple(
                EventUnit(index=u.index, phrase=u.phrase, temporal_index=u.index + 1) for u in units
            )
            return ordered, True
        shift = min(indices) - 1
        ordered = tuple(
            EventUnit(index=u.index, phrase=u.phrase, temporal_index=t - shift)
            for u, t in zip(units, indices)
        )
        return ordered, False

    def abstract_conceptual(
        self,
        story: Story,
        units: Sequence[EventUnit],
        level: int,
        prior: Sequence[ConceptualAbstraction] | None = None,
    ) -> tuple[ConceptualAbstraction, ...]:
        if level == 0:
            if prior is not None:
                raise ValueError("level 0 takes no prior frames")
            fields = {"story": story.text, "units": self._numbered(u.phrase for u in units)}
            task = "conceptual0"
        else:
            if prior is None or len(prior) != len(units):
                raise ValueError(f"level {level} needs prior frames aligned with the units")
            lines = (
                f"{u.phrase} -> {f.modifier}_{f.root}" if f.modifier else f"{u.phrase} -> {f.root}"
                for u, f in zip(units, prior)
            )
            fields = {"story": story.text, "units": self._numbered(lines)}
            task = "conceptual1"
        names = self._ask(task, story.id, fields, _as_frame_list)
        if len(names) != len(units):
            raise ExtractionFailed(story.id, task, f"{len(names)} frames for {len(units)} units")
        try:
            return tuple(parse_frame_name(name, level) for name in names)
        except ValueError as exc:
            raise ExtractionFailed(story.id, task, str(exc)) from exc

    def abstract_evaluative(self, story: Story, units: Sequence[EventUnit]) -> tuple[EvaluativeLabel, ...]:
        fields = {"story": story.text, "units": self._numbered(u.phrase for u in units)}
        labels = self._ask("evaluative", story.id, fields, _as_str_list)
        if len(labels) != len(units):
            raise ExtractionFailed(story.id, "evaluative", f"{len(labels)} labels for {len(units)} units")
        out = []
        for label in labels:
            try:
                out.append(EvaluativeLabel.from_joint(parse_joint_label(label)))
            except ValueError as exc:
                raise ExtractionFailed(story.id, "evaluative", str(exc)) from exc
        return tuple(out)

    def abstract_arc(self, story: Story, units: Sequence[EventUnit]) -> tuple[ArcLabel, ...]:
        fields = {"story": story.text, "units": self._numbered(u.phrase for u in units)}
        stages = self._ask("arc", story.id, fields, _as_str_list)
        if len(stages) != len(units):
            raise ExtractionFailed(story.id, "arc", f"{len(stages)} stages for {len(units)} units")
        out = []
        for stage in stages:
            try:
                out.append(ArcLabel(parse_arc_stage(stage)))
            except ValueError as exc:
                raise ExtractionFailed(story.id, "arc", str(exc)) from exc
        if not any(label.stage is ArcStage.MAIN_EVENT for label in out):
            raise ExtractionFailed(story.id, "arc", "no unit labeled with the mandatory main event stage")
        return tuple(out)

    def abstract_stage0(
        self, story: Story, units: Sequence[EventUnit], arc: Sequence[ArcLabel]
    ) -> tuple[StageAbstraction, ...]:
        groups = group_units_by_stage(units, arc)
        lines = (
            f"[{stage.text}] " + "; ".join(units[i].phrase for i in members) for stage, members in groups
        )
        fields = {"story": story.text, "groups": self._numbered(lines)}
        labels = self._ask("stage0", story.id, fields, _as_str_list)
        if len(labels) != len(groups):
            raise ExtractionFailed(story.id, "stage0", f"{len(labels)} labels for {len(groups)} stage groups")
        return tuple(
            StageAbstraction(StageLayer.STAGE0, members, label)
            for (_, members), label in zip(groups, labels)
        )

    def abstract_stage1(
        self,
        story: Story,
        stage0: Sequence[StageAbstraction],
        arc: Sequence[ArcLabel],
        evaluative: Sequence[EvaluativeLabel],
    ) -> StageAbstraction:
        """One story-level abstraction from the extracted layers alone.

        The prompt is built from the stage labels, arc stages, and
        evaluative labels; the story text never reaches the provider,
        and a leak check enforces that.
        """
        if not stage0 or not arc or not evaluative:
            raise ValueError("stage1 needs non-empty stage0, arc, and evaluative layers")
        stage_lines = []
        for group in stage0:
            stage_name = arc[group.members[0]].stage.text
            stage_lines.append(f"[{stage_name}] {group.label}")
        fields = {
            "stage_labels": self._numbered(stage_lines),
            "arc_labels": ", ".join(label.stage.text for label in arc),
            "evaluative_labels": ", ".join(label.joint.value for label in evaluative),
        }
        prompt = self._template("stage1").substitute(fields)
        check_no_story_leak(prompt, story.text)
        req = ChatRequest(
            system_prompt=SYSTEM_PROMPT,
            user_prompt=prompt,
            temperature=0.0,
            max_tokens=self.max_tokens,
            tag=f"stage1/{story.id}",
        )
        reply = self.gateway.complete_structured(req, _as_label_text)
        if not reply.parse_ok:
            raise ExtractionFailed(story.id, "stage1", f"unparseable reply after {reply.attempts} attempts")
        members = tuple(range(len(arc)))
        return StageAbstraction(StageLayer.STAGE1, members, reply.extracted_payload)

    # -- orchestration -------------------------------------------------------

    def build_representation(
        self, story: Story, needs: Iterable[str], force_refresh: bool = False
    ) -> Representation:
        """Produce a representation with the requested layers.

        Layers already in the store are reused unless force_refresh;
        only the missing ones trigger provider calls. The result is
        validated and persisted before returning.
        """
        order = resolve_needs(needs)
        rep: Representation | None = None
        if self.store is not None and not force_refresh:
            rep = self.store.load_representation(story.id)
        if rep is None:
            rep = Representation(story_id=story.id)

        changed = False
        if not rep.units:
            rep.units = self.extract_events(story)
            rep.conceptual = {}
            rep.evaluative = None
            rep.arc = None
            rep.stage = {}
            changed = True
        if LAYER_TEMPORAL in order and not rep.has_temporal():
            rep.units, rep.temporal_fallback = self.assign_temporal_order(story, rep.units)
            changed = True
        for name in order:
            match = re.fullmatch(r"conceptual:(\d+)", name)
            if match:
                level = int(match.group(1))
                if level not in rep.conceptual:
                    prior = rep.conceptual.get(level - 1) if level > 0 else None
                    rep.conceptual[level] = self.abstract_conceptual(story, rep.units, level, prior)
                    changed = True
        if LAYER_EVALUATIVE in order and rep.evaluative is None:
            rep.evaluative = self.abstract_evaluative(story, rep.units)
            changed = True
        if LAYER_ARC in order and rep.arc is None:
            rep.arc = self.abstract_arc(story, rep.units)
            changed = True
        if LAYER_STAGE0 in order and StageLayer.STAGE0 not in rep.stage:
            rep.stage[StageLayer.STAGE0] = self.abstract_stage0(story, rep.units, rep.arc)
            changed = True
        if LAYER_STAGE1 in order and StageLayer.STAGE1 not in rep.stage:
            stage1 = self.abstract_stage1(story, rep.stage[StageLayer.STAGE0], rep.arc, rep.evaluative)
            rep.stage[StageLayer.STAGE1] = (stage1,)
            changed = True

        validate_representation(rep)
        if self.store is not None and changed:
            self.store.save_representation(rep)
        return rep
