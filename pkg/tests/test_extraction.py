import json

import pytest

from conftest import (
    JOHNNY_PHRASES,
    JOHNNY_STAGE0,
    JOHNNY_STAGE1,
    JOHNNY_TEXT,
    johnny_fixtures,
    make_extractor,
)

from storyalign.errors import ExtractionFailed
from storyalign.extraction import (
    check_no_story_leak,
    coverage_ratio,
    parse_frame_name,
    resolve_needs,
)
from storyalign.model import ArcStage, JointLabel, StageLayer, Story
from storyalign.store import Store


def reply(value) -> str:
    return f"<JSON>{json.dumps(value)}</JSON>"


JOHNNY = Story("johnny", JOHNNY_TEXT)


class TestExtractEvents:
    def test_worked_example_yields_seven_phrases(self):
        extractor = make_extractor(johnny_fixtures())
        units = extractor.extract_events(JOHNNY)
        assert len(units) == 7
        assert units[0].phrase == "Johnny had too many projects"
        assert units[-1].phrase == "Johnny's boss offered a raise"
        assert [u.index for u in units] == list(range(7))
        assert all(u.temporal_index is None for u in units)

    def test_single_event_story(self):
        extractor = make_extractor({"events/tom": reply(["Tom slept"])})
        units = extractor.extract_events(Story("tom", "Tom slept."))
        assert len(units) == 1

    def test_duplicates_dropped_and_indices_compacted(self):
        fixtures = {"events/s": reply(["A fox ran", "a  FOX ran", "A hen hid"])}
        units = make_extractor(fixtures).extract_events(Story("s", "A fox ran. A hen hid."))
        assert [u.phrase for u in units] == ["A fox ran", "A hen hid"]
        assert [u.index for u in units] == [0, 1]

    def test_empty_list_fails(self):
        extractor = make_extractor({"events/s": reply([])})
        with pytest.raises(ExtractionFailed) as err:
            extractor.extract_events(Story("s", "something"))
        assert err.value.task == "events"

    def test_unparseable_reply_fails_with_task_name(self):
        extractor = make_extractor({"events/s": "no structure here at all"})
        with pytest.raises(ExtractionFailed) as err:
            extractor.extract_events(Story("s", "something"))
        assert err.value.task == "events"


class TestTemporalOrder:
    def test_flashback_reorders(self):
        fixtures = {
            "events/f": reply(["He smiled", "He had won the final"]),
            "temporal/f": reply([2, 1]),
        }
        extractor = make_extractor(fixtures)
        story = Story("f", "He smiled. Yesterday he had won the final.")
        units = extractor.extract_events(story)
        ordered, fallback = extractor.assign_temporal_order(story, units)
        assert [u.temporal_index for u in ordered] == [2, 1]
        assert not fallback

    def test_chronological_story_is_monotone(self):
        extractor = make_extractor(johnny_fixtures())
        units = extractor.extract_events(JOHNNY)
        ordered, fallback = extractor.assign_temporal_order(JOHNNY, units)
        assert [u.temporal_index for u in ordered] == [1, 2, 3, 4, 5, 6, 7]
        assert not fallback

    def test_failed_call_falls_back_to_textual_order(self):
        fixtures = {
            "events/f": reply(["one thing", "another thing"]),
            "temporal/f": "not valid at all",
        }
        extractor = make_extractor(fixtures)
        story = Story("f", "One thing. Another thing.")
        units = extractor.extract_events(story)
        ordered, fallback = extractor.assign_temporal_order(story, units)
        assert [u.temporal_index for u in ordered] == [1, 2]
        assert fallback

    def test_count_mismatch_falls_back(self):
        fixtures = {
            "events/f": reply(["one thing", "another thing"]),
            "temporal/f": reply([1, 2, 3]),
        }
        extractor = make_extractor(fixtures)
        story = Story("f", "One thing. Another thing.")
        units = extractor.extract_events(story)
        ordered, fallback = extractor.assign_temporal_order(story, units)
        assert fallback

    def test_indices_shift_down_to_start_at_one(self):
        fixtures = {
            "events/f": reply(["one thing", "another thing"]),
            "temporal/f": reply([4, 3]),
        }
        extractor = make_extractor(fixtures)
        story = Story("f", "One thing. Another thing.")
        units = extractor.extract_events(story)
        ordered, _ = extractor.assign_temporal_order(story, units)
        assert [u.temporal_index for u in ordered] == [2, 1]


class TestConceptualAbstraction:
    def test_worked_example_frames(self):
        extractor = make_extractor(johnny_fixtures())
        units = extractor.extract_events(JOHNNY)
        frames = extractor.abstract_conceptual(JOHNNY, units, level=0)
        assert frames[0].modifier == "tasks"
        assert frames[0].root == "workload"
        assert frames[1].modifier == "time"
        assert frames[1].root == "pressure"

    def test_frame_name_parsing(self):
        frame = parse_frame_name("HEALTH_AWARENESS", 0)
        assert (frame.modifier, frame.root) == ("health", "awareness")
        hyphenated = parse_frame_name("time-pressure", 0)
        assert (hyphenated.modifier, hyphenated.root) == ("time", "pressure")
        single = parse_frame_name("STRESS", 1)
        assert (single.modifier, single.root) == ("", "stress")
        spaced = parse_frame_name("tasks workload", 0)
        assert (spaced.modifier, spaced.root) == ("tasks", "workload")

    def test_count_mismatch_fails(self):
        fixtures = dict(johnny_fixtures())
        fixtures["conceptual0/johnny"] = reply(["ONLY_ONE"] * 6)
        extractor = make_extractor(fixtures)
        units = extractor.extract_events(JOHNNY)
        with pytest.raises(ExtractionFailed) as err:
            extractor.abstract_conceptual(JOHNNY, units, level=0)
        assert err.value.task == "conceptual0"

    def test_results_object_shape_accepted(self):
        payload = {"results": [{"id": "p1", "frame_name": "WORK_REWARD"}]}
        fixtures = {
            "events/s": reply(["She got a bonus"]),
            "conceptual0/s": reply(payload),
        }
        extractor = make_extractor(fixtures)
        story = Story("s", "She got a bonus.")
        units = extractor.extract_events(story)
        frames = extractor.abstract_conceptual(story, units, level=0)
        assert (frames[0].modifier, frames[0].root) == ("work", "reward")

    def test_level_one_requires_prior(self):
        extractor = make_extractor(johnny_fixtures())
        units = extractor.extract_events(JOHNNY)
        with pytest.raises(ValueError):
            extractor.abstract_conceptual(JOHNNY, units, level=1, prior=None)


class TestEvaluativeAbstraction:
    def test_worked_example_labels(self):
        extractor = make_extractor(johnny_fixtures())
        units = extractor.extract_events(JOHNNY)
        labels = extractor.abstract_evaluative(JOHNNY, units)
        assert labels[2].joint is JointLabel.STRUGGLE
        assert labels[3].joint is JointLabel.EFFORT
        assert labels[4].joint is JointLabel.GAIN

    def test_out_of_vocabulary_label_fails(self):
        fixtures = dict(johnny_fixtures())
        fixtures["evaluative/johnny"] = reply(["hopeful"] * 7)
        extractor = make_extractor(fixtures)
        units = extractor.extract_events(JOHNNY)
        with pytest.raises(ExtractionFailed) as err:
            extractor.abstract_evaluative(JOHNNY, units)
        assert err.value.task == "evaluative"

    def test_case_and_spacing_tolerated(self):
        fixtures = {
            "events/s": reply(["It rained"]),
            "evaluative/s": reply(["  Neutral State "]),
        }
        extractor = make_extractor(fixtures)
        story = Story("s", "It rained.")
        units = extractor.extract_events(story)
        labels = extractor.abstract_evaluative(story, units)
        assert labels[0].joint is JointLabel.NEUTRAL_STATE


class TestArcAbstraction:
    def test_worked_example_stages(self):
        extractor = make_extractor(johnny_fixtures())
        units = extractor.extract_events(JOHNNY)
        arc = extractor.abstract_arc(JOHNNY, units)
        assert arc[2].stage is ArcStage.CHALLENGE
        assert arc[6].stage is ArcStage.CONCLUSION

    def test_missing_main_event_fails(self):
        fixtures = dict(johnny_fixtures())
        fixtures["arc/johnny"] = reply(["background"] * 7)
        extractor = make_extractor(fixtures)
        units = extractor.extract_events(JOHNNY)
        with pytest.raises(ExtractionFailed) as err:
            extractor.abstract_arc(JOHNNY, units)
        assert err.value.task == "arc"

    def test_unknown_stage_fails(self):
        fixtures = dict(johnny_fixtures())
        fixtures["arc/johnny"] = reply(["prologue"] * 7)
        extractor = make_extractor(fixtures)
        units = extractor.extract_events(JOHNNY)
        with pytest.raises(ExtractionFailed):
            extractor.abstract_arc(JOHNNY, units)


class TestStageAbstractions:
    def _prepared(self):
        extractor = make_extractor(johnny_fixtures())
        units = extractor.extract_events(JOHNNY)
        units, _ = extractor.assign_temporal_order(JOHNNY, units)
        arc = extractor.abstract_arc(JOHNNY, units)
        return extractor, units, arc

    def test_worked_example_groups(self):
        extractor, units, arc = self._prepared()
        stage0 = extractor.abstract_stage0(JOHNNY, units, arc)
        assert [s.label for s in stage0] == JOHNNY_STAGE0
        assert stage0[0].members == (0, 1)
        assert stage0[-1].label == "reward for dedication"

    def test_single_stage_story(self):
        fixtures = {
            "events/s": reply(["one thing", "another thing"]),
            "temporal/s": reply([1, 2]),
            "arc/s": reply(["main event", "main event"]),
            "stage0/s": reply(["a single core situation"]),
        }
        extractor = make_extractor(fixtures)
        story = Story("s", "One thing. Another thing.")
        units = extractor.extract_events(story)
        units, _ = extractor.assign_temporal_order(story, units)
        arc = extractor.abstract_arc(story, units)
        stage0 = extractor.abstract_stage0(story, units, arc)
        assert len(stage0) == 1
        assert stage0[0].members == (0, 1)

    def test_group_count_mismatch_fails(self):
        extractor, units, arc = self._prepared()
        fixtures = dict(johnny_fixtures())
        fixtures["stage0/johnny"] = reply(["too", "few"])
        extractor = make_extractor(fixtures)
        with pytest.raises(ExtractionFailed) as err:
            extractor.abstract_stage0(JOHNNY, units, arc)
        assert err.value.task == "stage0"

    def test_stage1_golden_label(self):
        extractor, units, arc = self._prepared()
        evaluative = extractor.abstract_evaluative(JOHNNY, units)
        stage0 = extractor.abstract_stage0(JOHNNY, units, arc)
        stage1 = extractor.abstract_stage1(JOHNNY, stage0, arc, evaluative)
        assert stage1.label == JOHNNY_STAGE1
        assert stage1.members == tuple(range(7))
        assert stage1.layer is StageLayer.STAGE1

    def test_stage1_is_deterministic(self):
        extractor, units, arc = self._prepared()
        evaluative = extractor.abstract_evaluative(JOHNNY, units)
        stage0 = extractor.abstract_stage0(JOHNNY, units, arc)
        first = extractor.abstract_stage1(JOHNNY, stage0, arc, evaluative)
        second = extractor.abstract_stage1(JOHNNY, stage0, arc, evaluative)
        assert first == second

    def test_stage1_rejects_empty_inputs_before_any_call(self):
        extractor, units, arc = self._prepared()
        evaluative = extractor.abstract_evaluative(JOHNNY, units)
        calls_before = extractor.gateway.calls
        with pytest.raises(ValueError):
            extractor.abstract_stage1(JOHNNY, (), arc, evaluative)
        assert extractor.gateway.calls == calls_before

    def test_stage1_prompt_contains_no_story_span(self):
        # every 4-word window of the story must be absent from the prompt
        extractor, units, arc = self._prepared()
        evaluative = extractor.abstract_evaluative(JOHNNY, units)
        stage0 = extractor.abstract_stage0(JOHNNY, units, arc)
        extractor.abstract_stage1(JOHNNY, stage0, arc, evaluative)  # does not raise

    def test_leak_check_catches_story_text(self):
        with pytest.raises(RuntimeError):
            check_no_story_leak("prefix Johnny had too many projects suffix", JOHNNY_TEXT)
        check_no_story_leak("too many projects", JOHNNY_TEXT)  # 3 words are fine


class TestResolveNeeds:
    def test_conceptual_and_evaluative_closure(self):
        order = resolve_needs({"conceptual:0", "evaluative"})
        assert order == ["events", "temporal", "conceptual:0", "evaluative"]

    def test_stage1_pulls_in_everything_it_conditions_on(self):
        order = resolve_needs({"stage1"})
        assert order == ["events", "temporal", "evaluative", "arc", "stage0", "stage1"]

    def test_level_one_pulls_level_zero(self):
        order = resolve_needs({"conceptual:1"})
        assert "conceptual:0" in order
        assert order.index("conceptual:0") < order.index("conceptual:1")

    def test_unknown_layer_rejected(self):
        with pytest.raises(ValueError):
            resolve_needs({"sentiment"})

    def test_too_deep_hierarchy_rejected(self):
        with pytest.raises(ValueError):
            resolve_needs({"conceptual:2"})


class TestBuildRepresentation:
    def test_requested_layers_only(self, tmp_path):
        extractor = make_extractor(johnny_fixtures(), store=Store(tmp_path))
        rep = extractor.build_representation(JOHNNY, {"conceptual:0", "evaluative"})
        assert rep.n_units == 7
        assert rep.has_temporal()
        assert 0 in rep.conceptual
        assert rep.evaluative is not None
        assert rep.arc is None
        assert not rep.stage

    def test_stage1_closure(self, tmp_path):
        extractor = make_extractor(johnny_fixtures(), store=Store(tmp_path))
        rep = extractor.build_representation(JOHNNY, {"stage1"})
        assert rep.arc is not None
        assert rep.evaluative is not None
        assert StageLayer.STAGE0 in rep.stage
        assert rep.stage[StageLayer.STAGE1][0].label == JOHNNY_STAGE1

    def test_warm_cache_issues_zero_calls(self, tmp_path):
        store = Store(tmp_path)
        extractor = make_extractor(johnny_fixtures(), store=store)
        extractor.build_representation(JOHNNY, {"stage1"})
        calls_after_first = extractor.gateway.calls
        again = make_extractor(johnny_fixtures(), store=store)
        rep = again.build_representation(JOHNNY, {"stage1"})
        assert again.gateway.calls == 0
        assert rep.stage[StageLayer.STAGE1][0].label == JOHNNY_STAGE1
        assert calls_after_first > 0

    def test_incremental_layer_addition_reuses_cached_layers(self, tmp_path):
        store = Store(tmp_path)
        extractor = make_extractor(johnny_fixtures(), store=store)
        extractor.build_representation(JOHNNY, {"conceptual:0"})
        base_calls = extractor.gateway.calls
        extractor.build_representation(JOHNNY, {"evaluative"})
        assert extractor.gateway.calls == base_calls + 1  # only the new layer

    def test_force_refresh_recomputes(self, tmp_path):
        store = Store(tmp_path)
        extractor = make_extractor(johnny_fixtures(), store=store)
        extractor.build_representation(JOHNNY, {"evaluative"})
        calls = extractor.gateway.calls
        extractor.build_representation(JOHNNY, {"evaluative"}, force_refresh=True)
        assert extractor.gateway.calls > calls

    def test_failure_carries_task_name(self, tmp_path):
        fixtures = dict(johnny_fixtures())
        fixtures["evaluative/johnny"] = reply(["hopeful"] * 7)
        extractor = make_extractor(fixtures, store=Store(tmp_path))
        with pytest.raises(ExtractionFailed) as err:
            extractor.build_representation(JOHNNY, {"evaluative"})
        assert err.value.task == "evaluative"


class TestTemplateOverride:
    def test_override_directory_wins(self, tmp_path):
        override = tmp_path / "templates"
        override.mkdir()
        (override / "events.txt").write_text(
            "Custom instructions for ${story}\nReturn <JSON>...</JSON>.", encoding="utf-8"
        )
        fixtures = {"events/s": reply(["a thing happened"])}
        extractor = make_extractor(fixtures)
        extractor.templates_dir = override
        units = extractor.extract_events(Story("s", "A thing happened."))
        assert len(units) == 1


class TestCoverage:
    def test_full_coverage(self):
        assert coverage_ratio("The fox ran home", ["fox ran home"]) == 1.0

    def test_partial_coverage(self):
        ratio = coverage_ratio("The fox ran home quickly", ["fox ran"])
        assert 0.0 < ratio < 1.0
