"""Dataset loading, baselines, metrics, and the ablation grid runner.

Items are line-delimited JSON records {item_id, base_text,
target_texts[], gold_index, category?}. An ablation spec names either a
structural-mapping setting (a MappingConfig) or an LLM prompting
baseline (input granularity plus instruction style); the grid runner
evaluates a list of specs over one dataset and emits a comparison
table.
"""

from __future__ import annotations

import json
import logging
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .errors import (
    ConfigError,
    ConfigUnsatisfiable,
    DatasetError,
    DegenerateVector,
    DimensionError,
    EmbeddingUnavailable,
    ExtractionFailed,
    PredictionFailed,
    ProviderUnavailable,
    ReportError,
    StoryAlignError,
)
from .extraction import Extractor, conceptual_layer, resolve_needs
from .gateway import ChatRequest, Gateway
from .mapping import select_target
from .model import (
    ARN_CATEGORIES,
    Constraint,
    ConceptualRender,
    MappingConfig,
    PairSource,
    Prediction,
    StageLayer,
    Story,
    StoryRole,
)

LOG = logging.getLogger(__name__)

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+(?=[A-Z\"'])")
_FIRST_INT = re.compile(r"\b(\d+)\b")

DATASET_SCHEMAS = {"mcq": 4, "arn": 2}


@dataclass(frozen=True)
class BenchmarkItem:
    item_id: str
    base: Story
    targets: tuple[Story, ...]
    gold_index: int
    category: str | None = None

    def __post_init__(self) -> None:
        if len(self.targets) < 2:
            raise ValueError(f"item {self.item_id}: needs at least 2 targets")
        if not 0 <= self.gold_index < len(self.targets):
            raise ValueError(f"item {self.item_id}: gold_index {self.gold_index} out of range")

    @property
    def gold_target_id(self) -> str:
        return self.targets[self.gold_index].id

    @property
    def stories(self) -> tuple[Story, ...]:
        return (self.base,) + self.targets


def load_dataset(path: Path | str, schema: str) -> list[BenchmarkItem]:
    """Load and validate a line-delimited dataset file."""
    if schema not in DATASET_SCHEMAS:
        raise DatasetError(0, f"unknown dataset schema {schema!r}")
    expected_targets = DATASET_SCHEMAS[schema]
    items: list[BenchmarkItem] = []
    seen_ids: set[str] = set()
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(line_no, f"invalid JSON: {exc}") from None
            try:
                item_id = str(record["item_id"])
                base_text = record["base_text"]
                target_texts = record["target_texts"]
                gold_index = record["gold_index"]
            except (KeyError, TypeError) as exc:
                raise DatasetError(line_no, f"missing field: {exc}") from None
            if item_id in seen_ids:
                raise DatasetError(line_no, f"duplicate item_id {item_id!r}")
            seen_ids.add(item_id)
            if not isinstance(target_texts, list) or len(target_texts) != expected_targets:
                raise DatasetError(line_no, f"{schema} items need exactly {expected_targets} targets")
            category = record.get("category")
            if schema == "arn":
                if category not in ARN_CATEGORIES:
                    raise DatasetError(line_no, f"arn item needs a category from {ARN_CATEGORIES}")
            elif category is not None and category not in ARN_CATEGORIES:
                raise DatasetError(line_no, f"unknown category {category!r}")
            if not isinstance(gold_index, int) or not 0 <= gold_index < expected_targets:
                raise DatasetError(line_no, "gold_index out of range")
            meta = {"dataset_name": schema, "item_id": item_id}
            if category:
                meta["arn_category"] = category
            try:
                base = Story(f"{item_id}:base", base_text, StoryRole.BASE, meta)
                targets = tuple(
                    Story(f"{item_id}:t{j}", text, StoryRole.TARGET, meta)
                    for j, text in enumerate(target_texts)
                )
                items.append(BenchmarkItem(item_id, base, targets, gold_index, category))
            except (ValueError, TypeError) as exc:
                raise DatasetError(line_no, str(exc)) from None
    return items


@dataclass
class EvalReport:
    n_items: int
    n_correct: int
    accuracy: float
    per_category: dict[str, float] = field(default_factory=dict)
    per_category_n: dict[str, int] = field(default_factory=dict)
    n_fallbacks: int = 0
    n_ties: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_items": self.n_items,
            "n_correct": self.n_correct,
            "accuracy": self.accuracy,
            "per_category": dict(sorted(self.per_category.items())),
            "per_category_n": dict(sorted(self.per_category_n.items())),
            "n_fallbacks": self.n_fallbacks,
            "n_ties": self.n_ties,
        }


def score_report(
    predictions: Mapping[str, Prediction],
    items: Sequence[BenchmarkItem],
    fallback_items: Iterable[str] = (),
) -> EvalReport:
    """Accuracy plus the four-way category cells and their two-way rollups."""
    correct_by_cat: dict[str, list[bool]] = {}
    n_correct = 0
    n_ties = 0
    for item in items:
        pred = predictions.get(item.item_id)
        if pred is None:
            raise ReportError(f"no prediction for item {item.item_id}")
        correct = pred.chosen_target == item.gold_target_id
        n_correct += int(correct)
        n_ties += int(pred.tie_broken)
        if item.category:
            correct_by_cat.setdefault(item.category, []).append(correct)
    per_category: dict[str, float] = {}
    per_category_n: dict[str, int] = {}
    for cat, flags in correct_by_cat.items():
        per_category[cat] = sum(flags) / len(flags)
        per_category_n[cat] = len(flags)
    # Two-way rollup: the first word of the category names the analogy's
    # surface similarity to the base.
    for rollup, cells in (("near", ("near-far", "near-near")), ("far", ("far-far", "far-near"))):
        flags = [f for cell in cells for f in correct_by_cat.get(cell, [])]
        if flags:
            per_category[rollup] = sum(flags) / len(flags)
            per_category_n[rollup] = len(flags)
    n_items = len(items)
    fallback_set = set(fallback_items) & {item.item_id for item in items}
    return EvalReport(
        n_items=n_items,
        n_correct=n_correct,
        accuracy=n_correct / n_items if n_items else 0.0,
        per_category=per_category,
        per_category_n=per_category_n,
        n_fallbacks=len(fallback_set),
        n_ties=n_ties,
    )


class Method(str, Enum):
    SM = "sm"
    LLM_ZS = "llm_zs"
    LLM_COT = "llm_cot"


class Granularity(str, Enum):
    STORY = "story"
    SENTENCE = "sentence"
    EVENT = "event"
    STAGE_LABEL = "stage_label"


class Instruction(str, Enum):
    MESSAGE_INFERENCE = "message_inference"
    EVENT_MAPPING = "event_mapping"


@dataclass(frozen=True)
class AblationSpec:
    """One runnable experimental setting."""

    model_tag: str
    method: Method
    mapping_config: MappingConfig | None = None
    granularity: Granularity | None = None
    instruction: Instruction | None = None
    label: str = ""

    def __post_init__(self) -> None:
        if self.method is Method.SM:
            if self.mapping_config is None:
                raise ValueError("sm specs need a mapping config")
        else:
            if self.granularity is None or self.instruction is None:
                raise ValueError("llm specs need granularity and instruction")
            if self.granularity in (Granularity.STORY, Granularity.SENTENCE, Granularity.STAGE_LABEL):
                if self.instruction is not Instruction.MESSAGE_INFERENCE:
                    raise ValueError(f"{self.granularity.value} input only supports message inference")
        if not self.label:
            object.__setattr__(self, "label", default_label(self))

    @property
    def paper_setting(self) -> bool:
        return is_paper_setting(self)


def default_label(spec: AblationSpec) -> str:
    if spec.method is Method.SM:
        cfg = spec.mapping_config
        if cfg.pair_source is PairSource.UNITS:
            base = "sm:units"
        elif cfg.pair_source is PairSource.CONCEPTUAL:
            render = "root" if cfg.conceptual_render is ConceptualRender.ROOT_ONLY else "modroot"
            base = f"sm:conceptual{cfg.conceptual_level}-{render}"
        else:
            base = f"sm:{cfg.stage_layer.value}"
        suffix = "".join(f"+{c.value[:3]}" for c in sorted(cfg.constraints, key=lambda c: c.value))
        return base + suffix
    return f"{spec.method.value}:{spec.granularity.value}-{spec.instruction.value}"


def is_paper_setting(spec: AblationSpec) -> bool:
    """Whether this setting belongs to the documented experimental matrix."""
    if spec.method is not Method.SM:
        return (spec.granularity, spec.instruction) in {
            (Granularity.STORY, Instruction.MESSAGE_INFERENCE),
            (Granularity.SENTENCE, Instruction.MESSAGE_INFERENCE),
            (Granularity.EVENT, Instruction.MESSAGE_INFERENCE),
            (Granularity.EVENT, Instruction.EVENT_MAPPING),
            (Granularity.STAGE_LABEL, Instruction.MESSAGE_INFERENCE),
        }
    cfg = spec.mapping_config
    if cfg.normalize_by_included:
        return False
    if cfg.pair_source is PairSource.UNITS:
        return not cfg.constraints
    if cfg.pair_source is PairSource.CONCEPTUAL:
        if cfg.conceptual_level > 1:
            return False
        if not cfg.constraints:
            return True
        return (
            cfg.constraints == frozenset({Constraint.EVALUATIVE})
            and cfg.conceptual_level == 0
            and cfg.conceptual_render is ConceptualRender.ROOT_ONLY
        )
    if cfg.stage_layer is StageLayer.STAGE0:
        return cfg.constraints in (frozenset(), frozenset({Constraint.ARC}))
    return not cfg.constraints


def needs_for_config(config: MappingConfig) -> set[str]:
    needs = {"events", "temporal"}
    if config.pair_source is PairSource.CONCEPTUAL:
        needs.add(conceptual_layer(config.conceptual_level))
    elif config.pair_source is PairSource.STAGE:
        needs.add(config.stage_layer.value)
    if Constraint.EVALUATIVE in config.constraints:
        needs.add("evaluative")
    if Constraint.ARC in config.constraints:
        needs.add("arc")
    return needs


def _fallback_choice(seed: int, item: BenchmarkItem) -> Prediction:
    # Namespaced per item: grid order and parallelism never change a
    # fallback draw.
    rng = random.Random(f"{seed}:fallback:{item.item_id}")
    chosen = item.targets[rng.randrange(len(item.targets))].id
    return Prediction(item.base.id, {}, chosen, tie_broken=False)


def run_sm(
    items: Sequence[BenchmarkItem],
    spec: AblationSpec,
    extractor: Extractor,
    embedder,
    seed: int = 0,
    max_workers: int = 1,
) -> tuple[dict[str, Prediction], EvalReport]:
    """Structural-mapping evaluation of one spec over a dataset.

    Per-item failures fall back to a seeded random choice and are
    counted in the report rather than aborting the run.
    """
    if spec.method is not Method.SM:
        raise ValueError("run_sm needs an sm spec")
    config = spec.mapping_config
    needs = needs_for_config(config)
    fallback_items: list[str] = []

    def evaluate(item: BenchmarkItem) -> tuple[str, Prediction, bool]:
        try:
            base_rep = extractor.build_representation(item.base, needs)
            target_reps = [extractor.build_representation(t, needs) for t in item.targets]
            pred = select_target(base_rep, target_reps, config, embedder)
            return item.item_id, pred, False
        except (
            ExtractionFailed,
            ConfigUnsatisfiable,
            PredictionFailed,
            EmbeddingUnavailable,
            DegenerateVector,
            DimensionError,
            ProviderUnavailable,
        ) as exc:
            LOG.warning("item %s fell back to a random choice: %s", item.item_id, exc)
            return item.item_id, _fallback_choice(seed, item), True

    results: list[tuple[str, Prediction, bool]]
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(evaluate, items))
    else:
        results = [evaluate(item) for item in items]
    predictions = {}
    for item_id, pred, fell_back in results:
        predictions[item_id] = pred
        if fell_back:
            fallback_items.append(item_id)
    return predictions, score_report(predictions, items, fallback_items)


# --- LLM prompting baselines --------------------------------------------


def split_sentences(text: str) -> list[str]:
    parts = [p.strip() for p in _SENTENCE_SPLIT.split(text.strip())]
    return [p for p in parts if p]


def _render_story(story: Story, granularity: Granularity, extractor: Extractor | None) -> str:
    if granularity is Granularity.STORY:
        return story.text
    if granularity is Granularity.SENTENCE:
        return "\n".join(split_sentences(story.text))
    if extractor is None:
        raise ValueError(f"{granularity.value} granularity needs an extractor")
    if granularity is Granularity.EVENT:
        rep = extractor.build_representation(story, {"events"})
        return "\n".join(f"- {u.phrase}" for u in rep.units)
    rep = extractor.build_representation(story, {"stage1"})
    return rep.stage[StageLayer.STAGE1][0].label


_BASELINE_SYSTEM = "You compare a base story against candidate target stories and pick the most analogous target."

_INSTRUCTION_TEXT = {
    Instruction.MESSAGE_INFERENCE: (
        "Infer the high-level message of the base story and of every target story. "
        "Pick the target whose message best matches the base story's message."
    ),
    Instruction.EVENT_MAPPING: (
        "Compare the events of the base story with the events of each target story "
        "according to their abstract meaning, their functional role, and their position "
        "in the narrative. Pick the target whose events align best one-to-one with the "
        "base story's events."
    ),
}


def build_baseline_request(
    item: BenchmarkItem,
    spec: AblationSpec,
    extractor: Extractor | None = None,
    max_tokens: int = 1024,
) -> ChatRequest:
    parts = [f"Base story:\n{_render_story(item.base, spec.granularity, extractor)}", ""]
    for j, target in enumerate(item.targets, start=1):
        parts.append(f"Target {j}:\n{_render_story(target, spec.granularity, extractor)}")
        parts.append("")
    parts.append(_INSTRUCTION_TEXT[spec.instruction])
    if spec.method is Method.LLM_COT:
        parts.append(
            "Reason step by step, then give your final answer wrapped in <JSON> ... </JSON> tags "
            'as {"answer": N} where N is the number of your chosen target.'
        )
    else:
        parts.append("Answer with just one number: the number of your chosen target.")
    return ChatRequest(
        system_prompt=_BASELINE_SYSTEM,
        user_prompt="\n".join(parts),
        temperature=0.0,
        max_tokens=max_tokens,
        tag=f"baseline-{'cot' if spec.method is Method.LLM_COT else 'zs'}/{item.item_id}",
    )


def _parse_zs_answer(reply: str, n_targets: int) -> int | None:
    match = _FIRST_INT.search(reply)
    if not match:
        return None
    value = int(match.group(1))
    return value if 1 <= value <= n_targets else None


def _cot_schema(n_targets: int):
    def validate(value: Any) -> int:
        if isinstance(value, dict):
            value = value.get("answer")
        if isinstance(value, bool) or not isinstance(value, int):
            raise ValueError("answer must be an integer")
        if not 1 <= value <= n_targets:
            raise ValueError("answer out of range")
        return value

    return validate


def run_llm_baseline(
    items: Sequence[BenchmarkItem],
    spec: AblationSpec,
    gateway: Gateway,
    seed: int = 0,
    extractor: Extractor | None = None,
) -> tuple[dict[str, Prediction], EvalReport]:
    """Prompting baseline: the model picks the target directly.

    Format failures after the retry budget fall back to a seeded random
    choice; transport failures abort the run.
    """
    if spec.method is Method.SM:
        raise ValueError("run_llm_baseline needs an llm spec")
    predictions: dict[str, Prediction] = {}
    fallback_items: list[str] = []
    for item in items:
        req = build_baseline_request(item, spec, extractor)
        answer: int | None = None
        if spec.method is Method.LLM_COT:
            reply = gateway.complete_structured(req, _cot_schema(len(item.targets)))
            if reply.parse_ok:
                answer = reply.extracted_payload
        else:
            for _ in range(gateway.max_attempts):
                answer = _parse_zs_answer(gateway.complete(req), len(item.targets))
                if answer is not None:
                    break
        if answer is None:
            predictions[item.item_id] = _fallback_choice(seed, item)
            fallback_items.append(item.item_id)
            continue
        chosen = item.targets[answer - 1].id
        scores = {t.id: 1.0 if t.id == chosen else 0.0 for t in item.targets}
        predictions[item.item_id] = Prediction(item.base.id, scores, chosen)
    return predictions, score_report(predictions, items, fallback_items)


# --- grid runner -----------------------------------------------------------


@dataclass
class GridRow:
    spec: AblationSpec
    report: EvalReport | None = None
    error: str | None = None


def run_grid(
    specs: Sequence[AblationSpec],
    items: Sequence[BenchmarkItem],
    *,
    extractor: Extractor | None = None,
    embedder=None,
    gateway: Gateway | None = None,
    seed: int = 0,
    max_workers: int = 1,
) -> list[GridRow]:
    """Evaluate every spec; failures are recorded per row and the grid continues."""
    if not specs:
        raise ValueError("run_grid needs at least one spec")
    rows = []
    for spec in specs:
        try:
            if spec.method is Method.SM:
                if extractor is None or embedder is None:
                    raise ConfigError("sm specs need an extractor and an embedder")
                _, report = run_sm(items, spec, extractor, embedder, seed, max_workers)
            else:
                if gateway is None:
                    raise ConfigError("llm specs need a gateway")
                _, report = run_llm_baseline(items, spec, gateway, seed, extractor)
            rows.append(GridRow(spec, report=report))
        except StoryAlignError as exc:
            LOG.error("spec %s aborted: %s", spec.label, exc)
            rows.append(GridRow(spec, error=str(exc)))
    return rows


_TABLE_CATEGORIES = ("near-far", "far-far", "near-near", "far-near", "near", "far")


def rows_to_records(rows: Sequence[GridRow]) -> list[dict[str, Any]]:
    records = []
    for row in rows:
        record: dict[str, Any] = {
            "label": row.spec.label,
            "method": row.spec.method.value,
            "model_tag": row.spec.model_tag,
            "paper_setting": row.spec.paper_setting,
        }
        if row.error is not None:
            record["error"] = row.error
        if row.report is not None:
            record["report"] = row.report.to_dict()
        records.append(record)
    return records


def format_table(rows: Sequence[GridRow]) -> str:
    headers = ["spec", "n", "acc"] + list(_TABLE_CATEGORIES) + ["fallbacks", "ties"]
    lines = []
    for row in rows:
        if row.report is None:
            lines.append([row.spec.label, "-", "ERROR: " + (row.error or "?")] + [""] * (len(headers) - 3))
            continue
        rep = row.report
        cells = [row.spec.label, str(rep.n_items), f"{rep.accuracy:.3f}"]
        for cat in _TABLE_CATEGORIES:
            acc = rep.per_category.get(cat)
            cells.append("" if acc is None else f"{acc:.3f}")
        cells += [str(rep.n_fallbacks), str(rep.n_ties)]
        lines.append(cells)
    widths = [max(len(headers[i]), *(len(line[i]) for line in lines)) if lines else len(headers[i]) for i in range(len(headers))]
    def fmt(cells: Sequence[str]) -> str:
        return "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(cells)).rstrip()
    out = [fmt(headers), fmt(["-" * w for w in widths])]
    out += [fmt(line) for line in lines]
    return "\n".join(out)


def estimate_provider_calls(spec: AblationSpec, items: Sequence[BenchmarkItem]) -> int:
    """Cold-cache chat call estimate for a dry run."""
    if spec.method is not Method.SM:
        calls = len(items)
        if spec.granularity is Granularity.EVENT:
            calls += 2 * sum(len(item.stories) for item in items)  # events + temporal
        elif spec.granularity is Granularity.STAGE_LABEL:
            calls += 6 * sum(len(item.stories) for item in items)  # full closure to stage1
        return calls
    tasks = len(resolve_needs(needs_for_config(spec.mapping_config)))
    return tasks * sum(len(item.stories) for item in items)


# --- documented experimental grids -----------------------------------------


def _sm_spec(model_tag: str, config: MappingConfig) -> AblationSpec:
    return AblationSpec(model_tag, Method.SM, mapping_config=config)


def default_beam(schema: str) -> int:
    return 3 if schema == "arn" else 2


def main_table_grid(model_tag: str, schema: str, seed: int = 0, beam_n: int | None = None) -> list[AblationSpec]:
    """The headline comparison: both baselines plus the five mapping rows."""
    beam = default_beam(schema) if beam_n is None else beam_n

    def cfg(**kwargs) -> MappingConfig:
        return MappingConfig(beam_n=beam, rng_seed=seed, **kwargs)

    return [
        AblationSpec(model_tag, Method.LLM_ZS, granularity=Granularity.EVENT, instruction=Instruction.EVENT_MAPPING),
        AblationSpec(model_tag, Method.LLM_COT, granularity=Granularity.EVENT, instruction=Instruction.EVENT_MAPPING),
        _sm_spec(model_tag, cfg(pair_source=PairSource.UNITS)),
        _sm_spec(model_tag, cfg(pair_source=PairSource.CONCEPTUAL)),
        _sm_spec(model_tag, cfg(pair_source=PairSource.CONCEPTUAL, constraints=frozenset({Constraint.EVALUATIVE}))),
        _sm_spec(model_tag, cfg(pair_source=PairSource.STAGE)),
        _sm_spec(model_tag, cfg(pair_source=PairSource.STAGE, constraints=frozenset({Constraint.ARC}))),
    ]


def conceptual_levels_grid(model_tag: str, schema: str, seed: int = 0, beam_n: int | None = None) -> list[AblationSpec]:
    """Hierarchy level crossed with modifier rendering."""
    beam = default_beam(schema) if beam_n is None else beam_n
    specs = []
    for level in (0, 1):
        for render in (ConceptualRender.ROOT_ONLY, ConceptualRender.MODIFIER_AND_ROOT):
            specs.append(
                _sm_spec(
                    model_tag,
                    MappingConfig(
                        pair_source=PairSource.CONCEPTUAL,
                        conceptual_level=level,
                        conceptual_render=render,
                        beam_n=beam,
                        rng_seed=seed,
                    ),
                )
            )
    return specs


def stage_levels_grid(model_tag: str, schema: str, seed: int = 0, beam_n: int | None = None) -> list[AblationSpec]:
    """Group-level vs story-level stage abstraction; the story-level layer
    is a single phrase, so mapping degenerates to its cosine, and the
    same phrases also feed the prompting baselines."""
    beam = default_beam(schema) if beam_n is None else beam_n

    def cfg(layer: StageLayer) -> MappingConfig:
        return MappingConfig(pair_source=PairSource.STAGE, stage_layer=layer, beam_n=beam, rng_seed=seed)

    return [
        _sm_spec(model_tag, cfg(StageLayer.STAGE0)),
        _sm_spec(model_tag, cfg(StageLayer.STAGE1)),
        AblationSpec(model_tag, Method.LLM_ZS, granularity=Granularity.STAGE_LABEL, instruction=Instruction.MESSAGE_INFERENCE),
        AblationSpec(model_tag, Method.LLM_COT, granularity=Granularity.STAGE_LABEL, instruction=Instruction.MESSAGE_INFERENCE),
    ]


def granularity_grid(model_tag: str) -> list[AblationSpec]:
    """Input granularity crossed with instruction style for the baselines."""
    combos = [
        (Granularity.STORY, Instruction.MESSAGE_INFERENCE),
        (Granularity.SENTENCE, Instruction.MESSAGE_INFERENCE),
        (Granularity.EVENT, Instruction.MESSAGE_INFERENCE),
        (Granularity.EVENT, Instruction.EVENT_MAPPING),
    ]
    return [
        AblationSpec(model_tag, method, granularity=gran, instruction=instr)
        for method in (Method.LLM_ZS, Method.LLM_COT)
        for gran, instr in combos
    ]


# --- ablation spec files ----------------------------------------------------

_SPEC_KEYS = {"label", "model_tag", "method", "mapping", "granularity", "instruction"}
_MAPPING_KEYS = {
    "pair_source",
    "conceptual_level",
    "conceptual_render",
    "stage_layer",
    "constraints",
    "beam_n",
    "normalize_by_included",
}


def parse_ablation_spec(data: Mapping[str, Any], schema: str, seed: int = 0) -> AblationSpec:
    unknown = set(data) - _SPEC_KEYS
    if unknown:
        raise ConfigError(f"unknown spec field {sorted(unknown)[0]!r}")
    try:
        method = Method(data.get("method", ""))
    except ValueError:
        raise ConfigError(f"unknown method {data.get('method')!r}") from None
    model_tag = str(data.get("model_tag", "default"))
    label = str(data.get("label", ""))
    if method is Method.SM:
        mapping = data.get("mapping")
        if not isinstance(mapping, Mapping):
            raise ConfigError("sm specs need a mapping object")
        unknown = set(mapping) - _MAPPING_KEYS
        if unknown:
            raise ConfigError(f"unknown spec field {sorted(unknown)[0]!r}")
        try:
            config = MappingConfig(
                pair_source=PairSource(mapping.get("pair_source", "units")),
                conceptual_level=int(mapping.get("conceptual_level", 0)),
                conceptual_render=ConceptualRender(mapping.get("conceptual_render", "root_only")),
                stage_layer=StageLayer(mapping.get("stage_layer", "stage0")),
                constraints=frozenset(Constraint(c) for c in mapping.get("constraints", [])),
                beam_n=int(mapping.get("beam_n", default_beam(schema))),
                rng_seed=seed,
                normalize_by_included=bool(mapping.get("normalize_by_included", False)),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return AblationSpec(model_tag, method, mapping_config=config, label=label)
    try:
        granularity = Granularity(data.get("granularity", ""))
        instruction = Instruction(data.get("instruction", ""))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    try:
        return AblationSpec(model_tag, method, granularity=granularity, instruction=instruction, label=label)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_spec_file(path: Path | str, schema: str, seed: int = 0) -> list[AblationSpec]:
    with Path(path).open(encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, list) or not data:
        raise ConfigError("spec file must hold a non-empty JSON array")
    return [parse_ablation_spec(entry, schema, seed) for entry in data]
