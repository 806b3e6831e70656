import itertools

import numpy as np
import pytest

from evasive.data import ingest, ingest_crashes
from evasive.geometry import obb_overlap
from evasive.synth import (OUTCOMES, TEMPLATES, CorpusSpec, ScenarioSpec, _first_contact, _plan, frame_suite, generate,
                           generate_corpus, random_spec, write_corpus)

VALID = [(t, o) for t, o in itertools.product(TEMPLATES, OUTCOMES)
         if not (t == "parallel" and o != "benign") and (t, o) != ("head_on", "resolved")]


def test_head_on_impact_time():
    sc = generate(ScenarioSpec("head_on", "crash", speed_a=5.0, speed_b=5.0, angle=np.pi, gap=30.0))
    assert sc.impact_time == pytest.approx(3.0, abs=1e-9)
    assert sc.track_a.times[-1] == pytest.approx(3.0)


def test_invalid_specs():
    with pytest.raises(ValueError):
        ScenarioSpec("parallel", "crash")
    with pytest.raises(ValueError):
        ScenarioSpec("head_on", "resolved")
    with pytest.raises(ValueError):
        ScenarioSpec("spiral", "crash")


@pytest.mark.parametrize("seed", range(6))
def test_crash_contact_is_at_impact(seed):
    spec = random_spec(("crossing", "merging", "pedestrian", "head_on")[seed % 4], "crash", seed)
    sc = generate(spec)
    p = _plan(spec)
    fa, fb = sc.track_a.frames, sc.track_b.frames
    assert obb_overlap(fa[-1].footprint(), fb[-1].footprint(), tol=1e-9)
    assert not obb_overlap(fa[-2].footprint(), fb[-2].footprint())
    # frames are phased so the last one sits at first contact of the underlying paths
    s_hit = _first_contact(p, p.tc + 2.0)
    assert p.overlap(s_hit) and not p.overlap(s_hit - 1e-6)
    assert sc.impact_time == pytest.approx(sc.track_a.times[-1])
    assert sc.track_a.frames[-1].position == p.a(s_hit).position


@pytest.mark.parametrize("template,outcome", VALID)
def test_templates_generate(template, outcome):
    sc = generate(random_spec(template, outcome, 7))
    assert len(sc.track_a.frames) == len(sc.track_b.frames)
    assert np.allclose(sc.track_a.times, sc.track_b.times)
    if outcome != "crash":
        assert sc.impact_time is None
        assert not any(obb_overlap(a.footprint(), b.footprint())
                       for a, b in zip(sc.track_a.frames, sc.track_b.frames))
    if outcome == "resolved":
        v = [f.speed for f in sc.track_a.frames]
        assert v[-1] < max(v)


def test_corpus_round_trip_and_determinism(tmp_path):
    cs = CorpusSpec(n_crash=4, n_noncrash=10, seed=3)
    tracks, crashes = generate_corpus(cs)
    assert len(tracks) == 20 and len(crashes) == 4
    write_corpus(tmp_path / "t.csv", tmp_path / "c.csv", tracks, crashes)
    back = ingest(tmp_path / "t.csv")
    assert sorted(t.track_id for t in back) == sorted(t.track_id for t in tracks)
    cases = ingest_crashes(tmp_path / "c.csv")
    assert [c.impact_time for c in cases] == [c.impact_time for c in crashes]
    write_corpus(tmp_path / "t2.csv", tmp_path / "c2.csv", *generate_corpus(cs))
    assert (tmp_path / "t.csv").read_bytes() == (tmp_path / "t2.csv").read_bytes()


def test_frame_suite():
    fs = frame_suite(50, seed=1)
    assert len(fs) == 50
    assert all(not obb_overlap(a.footprint(), b.footprint()) for a, b in fs)
