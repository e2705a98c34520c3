import json
import math
import random

import pytest

import mcce


def test_version():
    assert mcce.__version__ == "0.1.0"


def test_dominance_and_ranks():
    assert mcce.dominates([1, 1], [0, 0])
    assert not mcce.dominates([1, 0], [0, 1])
    assert mcce.nondominated_ranks([[1, 1], [0.5, 0.5], [0, 0]]) == [[0], [1], [2]]


def brute_force_ranks(pts):
    def dom(a, b):
        return all(x >= y for x, y in zip(a, b)) and any(x > y for x, y in zip(a, b))

    rank = [0] * len(pts)
    remaining = set(range(len(pts)))
    level = 0
    while remaining:
        front = {i for i in remaining if not any(dom(pts[j], pts[i]) for j in remaining if j != i)}
        for i in front:
            rank[i] = level
        remaining -= front
        level += 1
    return rank


def test_ranks_match_oracle():
    rng = random.Random(4)
    pts = [[rng.random() for _ in range(3)] for _ in range(60)]
    fronts = mcce.nondominated_ranks(pts)
    oracle = brute_force_ranks(pts)
    for level, members in enumerate(fronts):
        for i in members:
            assert oracle[i] == level


def test_hypervolume():
    assert mcce.hypervolume([[1, 0.5], [0.5, 1]]) == pytest.approx(0.75, abs=1e-12)
    assert mcce.hypervolume([[1, 1]], ref=[0.5, 0.5]) == pytest.approx(0.25)
    with pytest.raises(mcce.Error):
        mcce.hypervolume([[1, 1, 1]], ref=[0, 0])


def test_znormalize():
    z = mcce.znormalize([[1.0, 5.0], [3.0, 5.0]])
    assert z[0][0] == pytest.approx(-1.0)
    assert z[1][0] == pytest.approx(1.0)
    assert z[0][1] == 0.0 and z[1][1] == 0.0


def test_similarity():
    assert mcce.tanimoto("CCO", "CCO") == 1.0
    assert mcce.tanimoto("CCC", "NNN") == 0.0
    stats = mcce.similarity_stats([0.2, 0.8])
    assert stats["mu"] == pytest.approx(0.5, abs=1e-12)
    assert stats["sigma"] == pytest.approx(0.3, abs=1e-12)
    assert stats["i1"] == pytest.approx([0.7, 0.8], abs=1e-12)
    assert stats["i3"] == pytest.approx([0.5, 0.8], abs=1e-12)


def test_parse_response():
    got, warnings = mcce.parse_response("<mol>CC</mol><mol>CO</mol><mol>N</mol>")
    assert got == ["CC", "CO"]
    assert warnings
    assert mcce.parse_response("nothing") == ([], [])


def test_dpo_loss():
    assert mcce.dpo_loss(-3, -4, -3, -4, 0.1) == pytest.approx(math.log(2), abs=1e-12)
    assert mcce.dpo_loss(-1, -4, -3, -4, 0.1) < math.log(2)


def test_run_and_replay(tmp_path):
    out = tmp_path / "run"
    res = mcce.run({"population_size": 10, "generations": 4, "seed": 3}, output_dir=out)
    assert len(res["timeline"]) == 4
    assert res["manifest"]["generations_completed"] == 4
    csv = (out / "metrics.csv").read_text()
    assert mcce.metrics_csv(str(out / "trajectory.jsonl")) == csv

    pairs, report = mcce.synthesize(out / "trajectory.jsonl", window=20, alpha=0.3, pairs=1)
    assert report["emitted"] == len(pairs)
    for p in pairs:
        assert p["metadata"]["chosen"]["score"] > p["metadata"]["rejected"]["score"]


def test_run_is_deterministic():
    cfg = json.dumps({"population_size": 8, "generations": 3, "seed": 9})
    a = mcce.run(cfg)
    b = mcce.run(cfg)
    assert a["timeline"] == b["timeline"]


def test_errors():
    assert issubclass(mcce.ConfigError, mcce.Error)
    assert issubclass(mcce.LogParseError, mcce.Error)
    with pytest.raises(mcce.ConfigError):
        mcce.run({"population_size": 7})
    with pytest.raises(mcce.ConfigError):
        mcce.run({"generations": 2}, overrides=["alpha=0.9"])
    with pytest.raises(mcce.Error):
        mcce.synthesize("/no/such/log.jsonl")
