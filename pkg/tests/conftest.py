"""Shared fixtures: a planted benchmark world and canned extraction replies.

The planted world is a 12-item two-target dataset where each correct
target shares its conceptual frames, evaluative labels, and stage
labels with the base story verbatim, while the distractor uses disjoint
vocabulary. Under the hash-projection embedding backend, identical
texts embed identically, so the correct target's identity mapping
scores the maximum possible and structural mapping with abstractions
must solve every item.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import pytest

from storyalign.embeddings import EmbeddingProvider, HashProjectionBackend
from storyalign.extraction import Extractor
from storyalign.gateway import Gateway, MockProvider


def _json_reply(value) -> str:
    return f"<JSON>{json.dumps(value)}</JSON>"


@dataclass
class StoryPlan:
    """Everything the mock provider should say about one story."""

    phrases: list[str]
    frames0: list[str]
    frames1: list[str]
    evaluative: list[str]
    arc: list[str]
    stage0: list[str]
    stage1: str

    @property
    def text(self) -> str:
        return ". ".join(self.phrases) + "."

    def fixtures(self, story_id: str) -> dict[str, str]:
        return {
            f"events/{story_id}": _json_reply(self.phrases),
            f"temporal/{story_id}": _json_reply(list(range(1, len(self.phrases) + 1))),
            f"conceptual0/{story_id}": _json_reply(self.frames0),
            f"conceptual1/{story_id}": _json_reply(self.frames1),
            f"evaluative/{story_id}": _json_reply(self.evaluative),
            f"arc/{story_id}": _json_reply(self.arc),
            f"stage0/{story_id}": _json_reply(self.stage0),
            f"stage1/{story_id}": _json_reply(self.stage1),
        }


def _analog_pair(i: int) -> tuple[StoryPlan, StoryPlan]:
    """A base story and its analogous target: same abstractions, fresh surface."""
    shared = dict(
        frames0=[f"goal_drive{i}a", f"push_grind{i}b", f"prize_win{i}c"],
        frames1=[f"broad_theme{i}a", f"broad_theme{i}b", f"broad_theme{i}c"],
        evaluative=["struggle", "effort", "gain"],
        arc=["main event", "action", "conclusion"],
        stage0=[f"burden building {i}", f"steady push {i}", f"earned payoff {i}"],
        stage1=f"perseverance rewarded {i}",
    )
    base = StoryPlan(
        phrases=[
            f"Rhea juggled three client audits in week {i}",
            f"Rhea worked late into the nights of week {i}",
            f"Rhea won the quarterly award in week {i}",
        ],
        **shared,
    )
    analog = StoryPlan(
        phrases=[
            f"Sam faced a broken irrigation pump on field {i}",
            f"Sam repaired the pump piece by piece on field {i}",
            f"Sam saved the entire harvest of field {i}",
        ],
        **shared,
    )
    return base, analog


def _distractor(i: int) -> StoryPlan:
    return StoryPlan(
        phrases=[
            f"Kim strolled through the market on day {i}",
            f"Kim skipped the council meeting on day {i}",
            f"Kim misplaced the house keys on day {i}",
        ],
        frames0=[f"idle_walk{i}a", f"duty_lapse{i}b", f"item_slip{i}c"],
        frames1=[f"drift_mood{i}a", f"drift_mood{i}b", f"drift_mood{i}c"],
        evaluative=["neutral_action", "indifference", "loss"],
        arc=["main event", "challenge", "conclusion"],
        stage0=[f"aimless start {i}", f"ignored duty {i}", f"careless loss {i}"],
        stage1=f"neglect brings loss {i}",
    )


GOLD_PATTERN = [0, 1, 1, 0, 1, 0, 0, 1, 0, 1, 1, 0]
CATEGORY_CYCLE = ["near-far", "far-far", "near-near", "far-near"]


@dataclass
class PlantedWorld:
    records: list[dict]
    fixtures: dict[str, str]

    def write_dataset(self, path: Path) -> Path:
        with path.open("w", encoding="utf-8") as fh:
            for record in self.records:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        return path

    def write_fixture_dir(self, root: Path) -> Path:
        for tag, reply in self.fixtures.items():
            path = root / tag
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(reply, encoding="utf-8")
        return root


def build_planted_world(n_items: int = 12) -> PlantedWorld:
    records = []
    fixtures: dict[str, str] = {}
    for i in range(n_items):
        item_id = f"item{i:02d}"
        gold = GOLD_PATTERN[i % len(GOLD_PATTERN)]
        base, analog = _analog_pair(i)
        distractor = _distractor(i)
        targets = [None, None]
        targets[gold] = analog
        targets[1 - gold] = distractor
        records.append(
            {
                "item_id": item_id,
                "base_text": base.text,
                "target_texts": [t.text for t in targets],
                "gold_index": gold,
                "category": CATEGORY_CYCLE[i % len(CATEGORY_CYCLE)],
            }
        )
        fixtures.update(base.fixtures(f"{item_id}:base"))
        for j, plan in enumerate(targets):
            fixtures.update(plan.fixtures(f"{item_id}:t{j}"))
        fixtures[f"baseline-zs/{item_id}"] = str(gold + 1)
        fixtures[f"baseline-cot/{item_id}"] = _json_reply({"answer": gold + 1})
    return PlantedWorld(records, fixtures)


# --- the worked example used across the extraction tests --------------------

JOHNNY_TEXT = (
    "Johnny had too many projects and too many short deadlines, and he was stressed. "
    "He kept working as hard as he could to finish everything. "
    "His boss noticed how hard he was working and offered him a raise."
)

JOHNNY_PHRASES = [
    "Johnny had too many projects",
    "Johnny had too many short deadlines",
    "Johnny was stressed",
    "Johnny kept working hard",
    "Johnny finished everything",
    "Johnny's boss noticed his hard work",
    "Johnny's boss offered a raise",
]

JOHNNY_FRAMES = [
    "TASKS_WORKLOAD",
    "TIME_PRESSURE",
    "EMOTION_STRESS",
    "WORK_DEDICATION",
    "TASKS_COMPLETION",
    "WORK_RECOGNITION",
    "WORK_REWARD",
]

JOHNNY_EVALUATIVE = ["struggle", "struggle", "struggle", "effort", "gain", "gain", "gain"]

JOHNNY_ARC = ["Main event", "Main event", "Challenge", "Action", "Action", "Conclusion", "Conclusion"]

JOHNNY_STAGE0 = [
    "work overload",
    "stress from workload",
    "persistent effort and completion",
    "reward for dedication",
]

JOHNNY_STAGE1 = "hard work under pressure leads to reward"


def johnny_fixtures(story_id: str = "johnny") -> dict[str, str]:
    return {
        f"events/{story_id}": _json_reply(JOHNNY_PHRASES),
        f"temporal/{story_id}": _json_reply([1, 2, 3, 4, 5, 6, 7]),
        f"conceptual0/{story_id}": _json_reply(JOHNNY_FRAMES),
        f"evaluative/{story_id}": _json_reply(JOHNNY_EVALUATIVE),
        f"arc/{story_id}": _json_reply(JOHNNY_ARC),
        f"stage0/{story_id}": _json_reply(JOHNNY_STAGE0),
        f"stage1/{story_id}": _json_reply(JOHNNY_STAGE1),
    }


# --- pytest fixtures ---------------------------------------------------------


@pytest.fixture(scope="session")
def planted_world() -> PlantedWorld:
    return build_planted_world()


@pytest.fixture(scope="session")
def planted_dataset(planted_world, tmp_path_factory) -> Path:
    path = tmp_path_factory.mktemp("data") / "planted.jsonl"
    return planted_world.write_dataset(path)


@pytest.fixture
def hash_embedder() -> EmbeddingProvider:
    return EmbeddingProvider(HashProjectionBackend(dim=64), model_id="hash-64")


@pytest.fixture
def planted_extractor(planted_world) -> Extractor:
    gateway = Gateway(MockProvider(planted_world.fixtures))
    return Extractor(gateway)


def make_extractor(fixtures: dict[str, str], store=None, max_attempts: int = 3) -> Extractor:
    return Extractor(Gateway(MockProvider(fixtures), max_attempts=max_attempts), store=store)
