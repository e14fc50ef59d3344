"""Synthetic seasons drawn from the model itself, for recovery experiments."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .features import FeatureSet, build_features, compute_prevperf
from .ingest import Dataset, MatchRecord, PrevSeasonTable


@dataclass(frozen=True)
class SimConfig:
    nteams: int = 12
    nrounds: int | None = None  # default: double round robin
    b_home: float = 0.35
    b_prev: float = 1.7
    b_effort: float = 3.0
    b_atten: float = 0.0
    b_day: float = 0.0
    nu: float = 12.0
    sigma_y: float = 1.6
    sigma_a: float | tuple = 0.1
    eta_sd: float = 0.5
    effort_beta: tuple = (5.0, 8.0)
    mean_attempts: float = 6.0
    equal_efforts: bool = False
    p_atten: float = 0.3
    p_weekend: float = 0.7
    point_scale: float = 15.0
    seed: int = 0

    def __post_init__(self):
        if self.nteams < 2 or self.nteams % 2:
            raise ValueError("nteams must be even and >= 2")
        if self.nrounds is not None and not 1 <= self.nrounds <= 2 * (self.nteams - 1):
            raise ValueError("nrounds must lie in 1..2*(nteams-1)")
        if not (self.nu > 0 and self.sigma_y >= 0 and self.point_scale > 0):
            raise ValueError("nu and point_scale must be positive, sigma_y nonnegative")
        if min(self.effort_beta) <= 0:
            raise ValueError("effort beta parameters must be positive")

    @property
    def rounds(self) -> int:
        return self.nrounds if self.nrounds is not None else 2 * (self.nteams - 1)

    def sigma_a_vector(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.sigma_a, dtype=float), (self.nteams,)).copy()


def round_robin(nteams: int, nrounds: int) -> list[list[tuple[int, int]]]:
    """Circle-method fixtures; the second half mirrors the first with venues swapped.

    Teams are relabelled so that they first appear in index order, which keeps
    team order stable when the season is written out and read back.
    """
    teams = list(range(nteams))
    single = []
    for r in range(nteams - 1):
        pairs = []
        for i in range(nteams // 2):
            a, b = teams[i], teams[nteams - 1 - i]
            pairs.append((a, b) if (r + i) % 2 == 0 else (b, a))
        single.append(pairs)
        teams = [teams[0], teams[-1]] + teams[1:-1]
    double = single + [[(b, a) for a, b in rnd] for rnd in single]
    order = {}
    for rnd in double:
        for h, a in rnd:
            order.setdefault(h, len(order))
            order.setdefault(a, len(order))
    return [[(order[h], order[a]) for h, a in rnd] for rnd in double[:nrounds]]


@dataclass
class SimulatedSeason:
    dataset: Dataset
    features: FeatureSet
    prev: PrevSeasonTable
    truth: dict = field(repr=False)

    def write(self, directory) -> dict:
        from pathlib import Path

        from .ingest import write_matches, write_prev_season

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {"matches": directory / "matches.csv", "prev": directory / "prev.csv",
                 "truth": directory / "truth.json"}
        write_matches(self.dataset, paths["matches"])
        write_prev_season(self.prev, paths["prev"])
        with open(paths["truth"], "w", encoding="utf-8") as fh:
            json.dump(self.truth, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return paths


def _kick_split(kicks: int, tries: int, rng) -> tuple[int, int, int]:
    conv = min(kicks, tries)
    rest = kicks - conv
    drop = int(rng.binomial(rest, 0.05)) if rest else 0
    return conv, rest - drop, drop


def simulate_season(config: SimConfig) -> SimulatedSeason:
    """Draw abilities, efforts and Student-t score differences for one season.

    Efforts come from integer counts: attempts ``1 + Poisson(mean_attempts-1)``
    and tries ``Binomial(attempts, p)`` with ``p ~ Beta(*effort_beta)``, so the
    CSV written by :meth:`SimulatedSeason.write` reproduces them exactly.
    """
    rng = np.random.default_rng(config.seed)
    n = config.nteams
    names = tuple(f"Team{t + 1:02d}" for t in range(n))
    nweeks = config.rounds

    # previous season table built so that compute_prevperf recovers a spread of strengths
    attack_rank = rng.permutation(n)
    defense_rank = rng.permutation(n)
    prev = PrevSeasonTable(
        scored={names[t]: float(100 - 5 * attack_rank[t]) for t in range(n)},
        received={names[t]: float(20 + 5 * defense_rank[t]) for t in range(n)},
    )
    prevperf = compute_prevperf(prev, names)

    sigma_a = config.sigma_a_vector()
    eta = rng.normal(0.0, config.eta_sd, size=(nweeks, n)) if config.eta_sd > 0 else np.zeros((nweeks, n))
    steps = sigma_a * eta
    steps[0] = config.b_prev * prevperf + eta[0]
    a = np.cumsum(steps, axis=0)

    fixtures = round_robin(n, nweeks)
    records = []
    mu_all, y_all = [], []
    for r, pairs in enumerate(fixtures):
        for home, away in pairs:
            counts = {}
            for side in ("home", "away"):
                if config.equal_efforts:
                    tries, kicks = 2, 2
                else:
                    attempts = 1 + int(rng.poisson(config.mean_attempts - 1))
                    p = rng.beta(*config.effort_beta)
                    tries = int(rng.binomial(attempts, p))
                    kicks = attempts - tries
                conv, pen, drop = _kick_split(kicks, tries, rng)
                counts[side] = (tries, conv, pen, drop)
            eff_h = counts["home"][0] / max(1, sum(counts["home"]))
            eff_a = counts["away"][0] / max(1, sum(counts["away"]))
            atten = int(rng.random() < config.p_atten)
            day = int(rng.random() < config.p_weekend)
            mu = (a[r, home] - a[r, away] + config.b_effort * (eff_h - eff_a) + config.b_home
                  + config.b_atten * atten + config.b_day * day)
            y = mu + config.sigma_y * rng.standard_t(config.nu)
            mu_all.append(mu)
            y_all.append(y)
            y_raw = y * config.point_scale
            margin = int(round(y_raw))
            base = 5 * min(counts["home"][0], counts["away"][0]) + 3
            records.append(MatchRecord(
                round=r + 1, home_team=names[home], away_team=names[away],
                home_score=base + max(margin, 0), away_score=base + max(-margin, 0),
                home_tries=counts["home"][0], away_tries=counts["away"][0],
                home_conv_att=counts["home"][1], home_pen_att=counts["home"][2], home_drop_att=counts["home"][3],
                away_conv_att=counts["away"][1], away_pen_att=counts["away"][2], away_drop_att=counts["away"][3],
                attendance=atten, weekend=day, canceled=0, y_raw=float(y_raw),
            ))

    dataset = Dataset(names, tuple(records))
    features = build_features(dataset, prev, scale=config.point_scale)
    truth = {
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(config).items()},
        "b_home": config.b_home, "b_prev": config.b_prev, "b_effort": config.b_effort,
        "b_atten": config.b_atten, "b_day": config.b_day, "nu": config.nu, "sigma_y": config.sigma_y,
        "sigma_a": sigma_a.tolist(), "eta": eta.tolist(), "a": a.tolist(),
        "prevperf": prevperf.tolist(), "location": mu_all, "y": y_all,
        "point_scale": config.point_scale,
    }
    return SimulatedSeason(dataset, features, prev, truth)
