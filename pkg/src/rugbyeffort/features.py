"""Model covariates: effort ratios, previous-season strength, week clocks."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .ingest import Dataset, PrevSeasonTable


@dataclass(frozen=True)
class GameObservation:
    home_idx: int
    away_idx: int
    home_week: int
    away_week: int
    y: float
    eff_home: float
    eff_away: float
    atten: int
    day: int


@dataclass(frozen=True, eq=False)
class FeatureSet:
    """Column-oriented covariates for every played game.

    Week indices are 1-based as in the data; kernels convert to 0-based.
    ``y`` is in standardized units, ``raw_diff = y * scale`` in points.
    """

    teams: tuple[str, ...]
    home_idx: np.ndarray
    away_idx: np.ndarray
    home_week: np.ndarray
    away_week: np.ndarray
    y: np.ndarray
    eff_home: np.ndarray
    eff_away: np.ndarray
    atten: np.ndarray
    day: np.ndarray
    prevperf: np.ndarray
    nweeks: int
    scale: float

    def __post_init__(self):
        n = len(self.y)
        for name in ("home_idx", "away_idx", "home_week", "away_week", "eff_home", "eff_away", "atten", "day"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has length {len(getattr(self, name))}, expected {n}")
        if len(self.prevperf) != len(self.teams):
            raise ValueError("prevperf must have one entry per team")
        if n and (self.home_week.min() < 1 or self.away_week.min() < 1):
            raise ValueError("week indices are 1-based")
        if n and max(self.home_week.max(), self.away_week.max()) > self.nweeks:
            raise ValueError("week index exceeds nweeks")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        for arr in (self.eff_home, self.eff_away, self.prevperf):
            if arr.size and (arr.min() < 0 or arr.max() > 1):
                raise ValueError("efforts and prevperf must lie in [0, 1]")

    @classmethod
    def from_arrays(cls, teams, home_idx, away_idx, home_week, away_week, y, eff_home, eff_away,
                    atten, day, prevperf, nweeks=None, scale=1.0) -> FeatureSet:
        home_week = np.asarray(home_week, dtype=np.int64)
        away_week = np.asarray(away_week, dtype=np.int64)
        if nweeks is None:
            nweeks = int(max(home_week.max(initial=1), away_week.max(initial=1)))
        return cls(
            teams=tuple(teams),
            home_idx=np.asarray(home_idx, dtype=np.int64),
            away_idx=np.asarray(away_idx, dtype=np.int64),
            home_week=home_week,
            away_week=away_week,
            y=np.asarray(y, dtype=np.float64),
            eff_home=np.asarray(eff_home, dtype=np.float64),
            eff_away=np.asarray(eff_away, dtype=np.float64),
            atten=np.asarray(atten, dtype=np.float64),
            day=np.asarray(day, dtype=np.float64),
            prevperf=np.asarray(prevperf, dtype=np.float64),
            nweeks=int(nweeks),
            scale=float(scale),
        )

    @property
    def ngames(self) -> int:
        return len(self.y)

    @property
    def nteams(self) -> int:
        return len(self.teams)

    @property
    def raw_diff(self) -> np.ndarray:
        return self.y * self.scale

    @property
    def observations(self) -> list[GameObservation]:
        return [
            GameObservation(int(self.home_idx[g]), int(self.away_idx[g]), int(self.home_week[g]),
                            int(self.away_week[g]), float(self.y[g]), float(self.eff_home[g]),
                            float(self.eff_away[g]), int(self.atten[g]), int(self.day[g]))
            for g in range(self.ngames)
        ]

    def replace_y(self, y) -> FeatureSet:
        """Copy with a different outcome vector (same covariates)."""
        d = dict(self.__dict__)
        d["y"] = np.asarray(y, dtype=np.float64).copy()
        return FeatureSet(**d)

    def subset(self, games) -> FeatureSet:
        """Keep only the given game indices; nweeks is left unchanged."""
        games = np.asarray(games, dtype=np.int64)
        d = dict(self.__dict__)
        for name in ("home_idx", "away_idx", "home_week", "away_week", "y", "eff_home", "eff_away", "atten", "day"):
            d[name] = getattr(self, name)[games]
        return FeatureSet(**d)


def compute_effort(tries: int, conv_att: int, pen_att: int, drop_att: int) -> float:
    """Tries over tries plus attempted scoring kicks; 0 when nothing was tried."""
    total = tries + conv_att + pen_att + drop_att
    if total == 0:
        return 0.0
    return tries / total


def compute_prevperf(table: PrevSeasonTable, teams) -> np.ndarray:
    """Average of the normalized attack and defense rankings, per team.

    Attack ranks descending ``scored``, defense ranks ascending ``received``;
    ties share the average rank. Rank ``r`` of ``n`` maps to ``(n-r)/(n-1)``.
    Teams missing from ``table`` get 0.5.
    """
    teams = list(teams)
    if len(table) < 2 or len(teams) < 2:
        raise ValueError("prevperf needs at least two teams to normalize rankings")
    names = list(table.scored)
    n = len(names)
    attack = rankdata([-table.scored[t] for t in names], method="average")
    defense = rankdata([table.received[t] for t in names], method="average")
    score = ((n - attack) / (n - 1) + (n - defense) / (n - 1)) / 2
    by_team = dict(zip(names, score))
    return np.array([by_team.get(t, 0.5) for t in teams], dtype=np.float64)


def assign_week_indices(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Per-team played-game counters (1-based), aligned with ``dataset.matches``.

    Games are counted in round order (stable for equal rounds); canceled
    games never advance a counter.
    """
    matches = dataset.matches
    order = sorted(range(len(matches)), key=lambda g: matches[g].round)
    played = dict.fromkeys(dataset.teams, 0)
    home_week = np.zeros(len(matches), dtype=np.int64)
    away_week = np.zeros(len(matches), dtype=np.int64)
    for g in order:
        m = matches[g]
        played[m.home_team] += 1
        played[m.away_team] += 1
        home_week[g] = played[m.home_team]
        away_week[g] = played[m.away_team]
    return home_week, away_week


def standardize_diffs(raw) -> tuple[np.ndarray, float]:
    """Divide by the sample sd (ddof=1); no centering."""
    raw = np.asarray(raw, dtype=np.float64)
    if raw.size < 2:
        raise ValueError("need at least 2 games to standardize score differences")
    scale = float(np.std(raw, ddof=1))
    if not scale > 0:
        raise ValueError("score differences have zero variance")
    return raw / scale, scale


def build_features(dataset: Dataset, prev: PrevSeasonTable | None, scale: float | None = None) -> FeatureSet:
    """Covariates for every played game of ``dataset``.

    ``scale`` fixes the standardization divisor; by default it is the sample
    sd of the raw differences. With ``prev=None`` every team gets 0.5.
    """
    matches = dataset.matches
    if not matches:
        raise ValueError("dataset has no played games")
    idx = dataset.team_index()
    home_week, away_week = assign_week_indices(dataset)
    raw = np.array([m.raw_diff for m in matches])
    if scale is None:
        y, scale = standardize_diffs(raw)
    else:
        y = raw / scale
    if prev is None:
        prevperf = np.full(dataset.nteams, 0.5)
    else:
        prevperf = compute_prevperf(prev, dataset.teams)
    return FeatureSet.from_arrays(
        teams=dataset.teams,
        home_idx=[idx[m.home_team] for m in matches],
        away_idx=[idx[m.away_team] for m in matches],
        home_week=home_week,
        away_week=away_week,
        y=y,
        eff_home=[compute_effort(m.home_tries, m.home_conv_att, m.home_pen_att, m.home_drop_att) for m in matches],
        eff_away=[compute_effort(m.away_tries, m.away_conv_att, m.away_pen_att, m.away_drop_att) for m in matches],
        atten=[m.attendance for m in matches],
        day=[m.weekend for m in matches],
        prevperf=prevperf,
        scale=scale,
    )


_SUMMARY_COLUMNS = ("score", "tries", "conv_att", "pen_att", "drop_att", "effort")


@dataclass(frozen=True)
class EffortSummary:
    """``home[column][stat]`` and ``away[column][stat]``.

    Stats are min, q1, median, mean, q3, max.
    """

    home: dict
    away: dict

    def rows(self):
        for side, table in (("home", self.home), ("away", self.away)):
            for col in _SUMMARY_COLUMNS:
                yield side, col, table[col]


def _describe(values) -> dict:
    v = np.asarray(values, dtype=np.float64)
    q1, med, q3 = np.quantile(v, [0.25, 0.5, 0.75])
    return {"min": float(v.min()), "q1": float(q1), "median": float(med), "mean": float(v.mean()),
            "q3": float(q3), "max": float(v.max())}


def summarize_features(dataset: Dataset, featureset: FeatureSet | None = None) -> EffortSummary:
    matches = dataset.matches
    if not matches:
        raise ValueError("dataset has no played games")
    out = {}
    for side in ("home", "away"):
        cols = {
            "score": [getattr(m, f"{side}_score") for m in matches],
            "tries": [getattr(m, f"{side}_tries") for m in matches],
            "conv_att": [getattr(m, f"{side}_conv_att") for m in matches],
            "pen_att": [getattr(m, f"{side}_pen_att") for m in matches],
            "drop_att": [getattr(m, f"{side}_drop_att") for m in matches],
        }
        if featureset is not None:
            cols["effort"] = featureset.eff_home if side == "home" else featureset.eff_away
        else:
            cols["effort"] = [compute_effort(getattr(m, f"{side}_tries"), getattr(m, f"{side}_conv_att"),
                                             getattr(m, f"{side}_pen_att"), getattr(m, f"{side}_drop_att"))
                              for m in matches]
        out[side] = {k: _describe(v) for k, v in cols.items()}
    return EffortSummary(out["home"], out["away"])


FEATURE_COLUMNS = ("game", "home_idx", "away_idx", "home_week", "away_week", "y", "eff_home", "eff_away",
                   "atten", "day", "raw_diff")


def write_features(fs: FeatureSet, path) -> None:
    """Audit dump, one row per game."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FEATURE_COLUMNS)
        raw = fs.raw_diff
        for g in range(fs.ngames):
            w.writerow([g + 1, int(fs.home_idx[g]), int(fs.away_idx[g]), int(fs.home_week[g]),
                        int(fs.away_week[g]), repr(float(fs.y[g])), repr(float(fs.eff_home[g])),
                        repr(float(fs.eff_away[g])), int(fs.atten[g]), int(fs.day[g]), repr(float(raw[g]))])
