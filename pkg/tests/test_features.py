import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rugbyeffort.features import (assign_week_indices, build_features, compute_effort, compute_prevperf,
                                  standardize_diffs, summarize_features, write_features)
from rugbyeffort.ingest import PrevSeasonTable, parse_matches_text

from .conftest import csv_text, match_row

counts = st.integers(min_value=0, max_value=30)


@pytest.mark.parametrize("args, expected", [
    ((3, 3, 2, 0), 0.375),
    ((0, 0, 0, 0), 0.0),
    ((2, 1, 0, 0), 2 / 3),
])
def test_compute_effort(args, expected):
    assert compute_effort(*args) == pytest.approx(expected, abs=1e-12)


@given(counts, counts, counts, counts, st.integers(min_value=1, max_value=9))
def test_effort_scale_free(t, c, p, d, k):
    e = compute_effort(t, c, p, d)
    assert 0.0 <= e <= 1.0
    assert compute_effort(k * t, k * c, k * p, k * d) == pytest.approx(e, abs=1e-15)


def _table(scored, received, names="ABC"):
    return PrevSeasonTable(dict(zip(names, map(float, scored))), dict(zip(names, map(float, received))))


def test_prevperf_aligned_rankings():
    pp = compute_prevperf(_table((30, 20, 10), (10, 20, 30)), "ABC")
    np.testing.assert_allclose(pp, [1.0, 0.5, 0.0])


def test_prevperf_symmetric_pair():
    pp = compute_prevperf(_table((10, 10), (5, 5), "AB"), "AB")
    np.testing.assert_allclose(pp, [0.5, 0.5])


def test_prevperf_opposing_rankings():
    # attack ranks A=1,B=2,C=3 -> 1, .5, 0; defense (ascending received) A=3,B=2,C=1 -> 0, .5, 1
    pp = compute_prevperf(_table((30, 20, 10), (30, 20, 10)), "ABC")
    np.testing.assert_allclose(pp, [0.5, 0.5, 0.5])


def test_prevperf_missing_team_and_single_team():
    pp = compute_prevperf(_table((30, 20, 10), (10, 20, 30)), ["A", "Promoted", "C"])
    np.testing.assert_allclose(pp, [1.0, 0.5, 0.0])
    with pytest.raises(ValueError):
        compute_prevperf(_table((1,), (1,), "A"), "A")


@given(st.lists(st.tuples(st.integers(0, 100), st.integers(0, 100)), min_size=2, max_size=14))
def test_prevperf_range_and_mean(rows):
    names = [f"T{i}" for i in range(len(rows))]
    table = _table([r[0] for r in rows], [r[1] for r in rows], names)
    pp = compute_prevperf(table, names)
    assert np.all((pp >= 0) & (pp <= 1))
    # averaged ranks keep the mean rank at (n+1)/2, so the mean stays 0.5 even with ties
    assert pp.mean() == pytest.approx(0.5, abs=1e-12)


def test_week_indices_skip_canceled():
    ds = parse_matches_text(csv_text(
        match_row(1, "A", "B"),
        match_row(2, "A", "C", hs=0, as_=0, canceled=1),
        match_row(2, "B", "D"),
        match_row(3, "C", "A"),
        match_row(3, "D", "B"),
    ))
    hw, aw = assign_week_indices(ds)
    # A: round 1 -> 1, round 2 canceled, round 3 -> 2
    assert (hw[0], aw[0]) == (1, 1)
    assert (hw[2], aw[2]) == (1, 2)
    assert (hw[1], aw[1]) == (2, 1)
    assert (hw[3], aw[3]) == (2, 3)


def test_week_indices_follow_rounds_not_file_order():
    ds = parse_matches_text(csv_text(match_row(2, "A", "B"), match_row(1, "B", "A")))
    hw, aw = assign_week_indices(ds)
    assert hw.tolist() == [2, 1] and aw.tolist() == [2, 1]


def test_week_sequences_have_no_gaps():
    from rugbyeffort.simulate import SimConfig, simulate_season

    ds = simulate_season(SimConfig(nteams=6, seed=3)).dataset
    hw, aw = assign_week_indices(ds)
    idx = ds.team_index()
    for team in ds.teams:
        weeks = sorted([hw[g] for g, m in enumerate(ds.matches) if m.home_team == team]
                       + [aw[g] for g, m in enumerate(ds.matches) if m.away_team == team])
        assert weeks == list(range(1, len(weeks) + 1))
    assert idx


def test_standardize_two_points():
    y, scale = standardize_diffs([10, -10])
    assert scale == pytest.approx(14.142135623730951)
    np.testing.assert_allclose(y, [0.7071067811865475, -0.7071067811865475])


def test_standardize_against_hand_sd():
    raw = [21, -7, 14, 0]
    mean = sum(raw) / 4
    sd = (sum((r - mean) ** 2 for r in raw) / 3) ** 0.5
    y, scale = standardize_diffs(raw)
    assert scale == pytest.approx(sd, rel=1e-14)
    np.testing.assert_allclose(y, np.array(raw) / sd, rtol=1e-14)


def test_standardize_errors():
    with pytest.raises(ValueError, match="zero variance"):
        standardize_diffs([5, 5, 5])
    with pytest.raises(ValueError):
        standardize_diffs([3])


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=50))
def test_standardized_sd_is_one(raw):
    if np.std(raw, ddof=1) < 1e-6:
        return
    y, _ = standardize_diffs(raw)
    assert np.std(y, ddof=1) == pytest.approx(1.0, abs=1e-12)


def test_summary_single_game():
    ds = parse_matches_text(csv_text(match_row(1, "A", "B")))
    summ = summarize_features(ds)
    for side, col, stats in summ.rows():
        assert stats["min"] == stats["max"] == stats["mean"] == stats["median"]


def test_summary_quartiles_by_hand():
    scores = [3, 17, 23, 74]
    ds = parse_matches_text(csv_text(*(match_row(r + 1, "A", "B", hs=s) for r, s in enumerate(scores[:2])),
                                     *(match_row(r + 3, "B", "A", hs=s) for r, s in enumerate(scores[2:]))))
    summ = summarize_features(ds)
    # linear interpolation on sorted (3, 17, 23, 74): q1 at position 0.75, q3 at 2.25
    h = summ.home["score"]
    assert h["q1"] == pytest.approx(3 + 0.75 * 14)
    assert h["median"] == pytest.approx(20.0)
    assert h["q3"] == pytest.approx(23 + 0.25 * 51)
    assert h["min"] <= h["q1"] <= h["median"] <= h["q3"] <= h["max"]


def test_build_features_and_dump(tmp_path):
    ds = parse_matches_text(csv_text(
        match_row(1, "A", "B", hs=30, as_=10, ht=3, hc=3, hp=2, hd=0),
        match_row(2, "B", "A", hs=12, as_=20, att=1, day=0),
    ))
    prev = _table((30, 10), (5, 20), "AB")
    fs = build_features(ds, prev)
    assert fs.eff_home[0] == pytest.approx(0.375)
    assert fs.nweeks == 2
    assert fs.scale == pytest.approx(np.std([20, -8], ddof=1))
    np.testing.assert_allclose(fs.raw_diff, [20, -8])
    assert fs.prevperf.tolist() == [1.0, 0.0]
    obs = fs.observations
    assert obs[1].atten == 1 and obs[1].day == 0
    out = tmp_path / "features.csv"
    write_features(fs, out)
    lines = out.read_text().splitlines()
    assert lines[0].startswith("game,home_idx")
    assert len(lines) == 3
