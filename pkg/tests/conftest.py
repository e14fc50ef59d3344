import numpy as np
import pytest

from rugbyeffort._accel import njit
from rugbyeffort.features import FeatureSet

HEADER = ("round,home_team,away_team,home_score,away_score,home_tries,away_tries,home_conv_att,"
          "home_pen_att,home_drop_att,away_conv_att,away_pen_att,away_drop_att,attendance,weekend,canceled")


def match_row(rnd, home, away, hs=20, as_=10, ht=2, at=1, hc=2, hp=2, hd=0, ac=1, ap=1, ad=0,
              att=0, day=1, canceled=0):
    return f"{rnd},{home},{away},{hs},{as_},{ht},{at},{hc},{hp},{hd},{ac},{ap},{ad},{att},{day},{canceled}"


def csv_text(*rows):
    return "\n".join((HEADER,) + rows) + "\n"


def small_features(seed=0, y=None):
    """3 teams, 4 weeks each: every pair meets home and away."""
    rng = np.random.default_rng(seed)
    pairs = [(0, 1), (1, 2), (2, 0), (1, 0), (2, 1), (0, 2)]
    home_week = [1, 2, 2, 3, 3, 4]
    away_week = [1, 1, 2, 3, 4, 4]
    return FeatureSet.from_arrays(
        teams=("A", "B", "C"),
        home_idx=[p[0] for p in pairs],
        away_idx=[p[1] for p in pairs],
        home_week=home_week,
        away_week=away_week,
        y=rng.normal(size=6) if y is None else y,
        eff_home=rng.uniform(size=6),
        eff_away=rng.uniform(size=6),
        atten=[0, 1, 0, 1, 1, 0],
        day=[1, 1, 0, 0, 1, 0],
        prevperf=[0.2, 0.9, 0.5],
    )


@pytest.fixture
def tiny_fs():
    return small_features()


@njit
def gaussian_target(theta, data):
    """Independent normal with per-coordinate variances ``data[0]``."""
    var = data[0]
    g = -theta / var
    return 0.5 * float(np.sum(theta * g)), g


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
