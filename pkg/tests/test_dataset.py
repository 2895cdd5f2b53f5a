import json
import os

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenebgm.backends import FaultInjectingBackend, MockBackend
from scenebgm.dataset import (
    NO_MATCH,
    Caption,
    PairKind,
    Provenance,
    ScenarioGrid,
    TrainingPair,
    count_report,
    export_pairs,
    import_pairs,
    load_captions,
    load_scene_pool,
    reverse_pair,
    synthesize_pairs,
)
from scenebgm.errors import BackendUnavailable, ConfigInvalid, IoFailure
from scenebgm.scene import characterize, detect_mode
from scenebgm.worldsim import Scenario, simulate_stream


def _grid(**axes):
    return ScenarioGrid.from_obj({"axes": axes or {"Scene": ["forest", "desert"], "Time": ["morning", "night"],
                                                   "Weather": ["clear"]}})


def _pool(n=6):
    return [characterize(s, detect_mode(s))
            for s in simulate_stream(Scenario(seed=2, duration_ms=n * 1000, emit_period_ms=1000))]


def test_grid_counts_and_pairs(templates, fast_settings):
    grid = _grid()
    assert len(grid) == 4
    pairs = synthesize_pairs(grid, MockBackend(), templates, fast_settings)
    assert len(pairs) == 8
    assert count_report(pairs) == {"total": 8, "rejections": 0,
                                   "SceneToNarrative/Synthesized": 4, "NarrativeToMusic/Synthesized": 4}
    first, second = pairs[0], pairs[1]
    assert first.instruction == templates["narrative"].role_preamble
    assert "Scene: forest" in first.input
    # the music pair's input carries the narrative verbatim
    assert first.output in second.input
    assert len(second.output.split()) <= 20


def test_grid_patch_axes_and_points():
    grid = ScenarioGrid.from_obj({
        "base": {"Weather": "rain"},
        "points": [{"Scene": "swamp"}],
        "axes": {"danger": [{}, {"Being Attacked": True}], "Scene": ["forest"]},
    })
    snaps = list(grid.snapshots())
    assert [s.scene for s in snaps] == ["swamp", "forest", "forest"]
    assert [s.being_attacked for s in snaps] == [False, False, True]
    assert all(s.weather == "rain" for s in snaps)


@pytest.mark.parametrize("obj", [
    {"axes": {"Scene": []}},
    {"axes": {"danger": ["high"]}},
    {"axes": {"Health": [50]}},
    [],
])
def test_invalid_grids(obj):
    with pytest.raises(ConfigInvalid):
        list(ScenarioGrid.from_obj(obj).snapshots())


def test_grid_limit():
    assert len(ScenarioGrid.from_obj({"axes": {"Scene": ["a", "b", "c"]}, "limit": 2})) == 2


def test_synthesis_is_deterministic(tmp_path, templates, fast_settings):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    export_pairs(synthesize_pairs(_grid(), MockBackend(), templates, fast_settings), a)
    export_pairs(synthesize_pairs(_grid(), MockBackend(), templates, fast_settings), b)
    assert a.read_bytes() == b.read_bytes()


def test_export_field_order_and_round_trip(tmp_path, templates, fast_settings):
    pairs = synthesize_pairs(_grid(), MockBackend(), templates, fast_settings)
    path = tmp_path / "p.jsonl"
    assert export_pairs(pairs, path) == 8
    lines = path.read_text().splitlines()
    assert len(lines) == 8
    assert list(json.loads(lines[0]))[:3] == ["instruction", "input", "output"]
    assert import_pairs(path) == pairs


def test_plain_export_has_only_three_fields(tmp_path):
    pair = TrainingPair("i", "x", "y", PairKind.SCENE_TO_NARRATIVE, Provenance.SYNTHESIZED)
    path = tmp_path / "p.jsonl"
    export_pairs([pair], path, "iio")
    assert list(json.loads(path.read_text())) == ["instruction", "input", "output"]
    with pytest.raises(ValueError):
        export_pairs([pair], path, "csv")


def test_empty_export_warns(tmp_path, caplog):
    path = tmp_path / "empty.jsonl"
    assert export_pairs([], path) == 0
    assert path.read_text() == ""
    assert "empty" in caplog.text


def test_unwritable_path(tmp_path):
    with pytest.raises(IoFailure):
        export_pairs([], tmp_path / "missing-dir" / "x.jsonl")
    if os.geteuid() != 0:  # root ignores permission bits
        locked = tmp_path / "locked"
        locked.mkdir(mode=0o500)
        with pytest.raises(IoFailure):
            export_pairs([], locked / "x.jsonl")


def test_pair_fields_must_be_non_empty():
    with pytest.raises(ValueError):
        TrainingPair("i", " ", "o", PairKind.SCENE_TO_NARRATIVE, Provenance.SYNTHESIZED)


_texts = st.text(alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1).filter(str.strip)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(_texts, _texts, _texts, st.sampled_from(PairKind), st.sampled_from(Provenance)),
                max_size=8))
def test_round_trip_property(tmp_path_factory, rows):
    pairs = [TrainingPair(*row) for row in rows]
    path = tmp_path_factory.mktemp("rt") / "p.jsonl"
    export_pairs(pairs, path)
    assert import_pairs(path) == pairs


# ---------------------------------------------------------------------------
# reverse pairing

def test_reverse_three_captions(templates, fast_settings):
    captions = ["Calm piano.", "Upbeat synth.", "Dark drones."]
    result = reverse_pair(captions, _pool(), MockBackend(), templates, fast_settings)
    assert len(result.pairs) == 3 and not result.rejections
    for pair, caption in zip(result.pairs, captions):
        assert pair.output == caption
        assert pair.provenance is Provenance.REVERSE_PAIRED
        assert pair.kind is PairKind.NARRATIVE_TO_MUSIC
        assert pair.instruction == templates["music"].role_preamble


def test_reverse_rejection_is_reported(templates, fast_settings):
    captions = [Caption(f"c{i}", f"caption number {i}") for i in range(5)]
    backend = FaultInjectingBackend(MockBackend(), lambda req, i: NO_MATCH if "number 3" in req.prompt else None)
    result = reverse_pair(captions, _pool(), backend, templates, fast_settings)
    assert len(result.pairs) == 4
    assert [r.caption_id for r in result.rejections] == ["c3"]
    assert result.accounted == 5


def test_reverse_empty_answers_become_rejections(templates, fast_settings):
    backend = FaultInjectingBackend(MockBackend(), lambda req, i: "")
    result = reverse_pair(["a"], _pool(), backend, templates, fast_settings)
    assert result.rejections[0].reason.startswith("empty")


def test_reverse_backend_down_propagates(templates, fast_settings):
    backend = FaultInjectingBackend(MockBackend(), lambda req, i: "error")
    with pytest.raises(BackendUnavailable):
        reverse_pair(["a"], _pool(), backend, templates, fast_settings)


def test_reverse_needs_inputs(templates):
    with pytest.raises(ConfigInvalid):
        reverse_pair([], _pool(), MockBackend(), templates)
    with pytest.raises(ConfigInvalid):
        reverse_pair(["a"], [], MockBackend(), templates)


def test_candidates_are_capped(templates, fast_settings):
    seen = []

    class Spy(MockBackend):
        def complete(self, request):
            seen.append(request.prompt)
            return super().complete(request)

    reverse_pair(["a"], _pool(20), Spy(), templates, fast_settings, max_candidates=4)
    assert seen[0].count("\n[") == 4


def test_caption_and_scene_files(tmp_path):
    plain = tmp_path / "c.txt"
    plain.write_text("one\n\n two \n")
    assert [c.text for c in load_captions(plain)] == ["one", "two"]
    jl = tmp_path / "c.jsonl"
    jl.write_text('{"id": "x1", "caption": "hello"}\n')
    assert load_captions(jl) == [Caption("x1", "hello")]
    scenes = tmp_path / "s.jsonl"
    scenes.write_text("\n".join(s.to_json() for s in simulate_stream(Scenario(duration_ms=3000))) + "\n")
    assert len(load_scene_pool(scenes)) == 3
    with pytest.raises(IoFailure):
        load_captions(tmp_path / "nope")


def test_reverse_is_seeded(templates, fast_settings):
    pool = _pool(30)
    a = reverse_pair(["x", "y"], pool, MockBackend(), templates, fast_settings, seed=1)
    b = reverse_pair(["x", "y"], pool, MockBackend(), templates, fast_settings, seed=1)
    assert a.pairs == b.pairs
