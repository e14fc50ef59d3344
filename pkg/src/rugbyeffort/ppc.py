"""Posterior predictive replication, outlier flags, and the luck decomposition."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .features import FeatureSet
from .sampler import DrawsMatrix


@dataclass(frozen=True)
class ReplicationSet:
    """Replicated standardized score differences, ``(replications, games)``."""

    replications: np.ndarray
    observed: np.ndarray
    pvalues: np.ndarray
    locations: np.ndarray

    @property
    def rep_mean(self) -> np.ndarray:
        return self.replications.mean(axis=1)

    @property
    def rep_sd(self) -> np.ndarray:
        return self.replications.std(axis=1, ddof=1)

    @property
    def pred_mean(self) -> np.ndarray:
        return self.replications.mean(axis=0)

    @property
    def pred_sd(self) -> np.ndarray:
        return self.replications.std(axis=0, ddof=1)


def draw_locations(draws: DrawsMatrix, fs: FeatureSet) -> np.ndarray:
    """Location of every game under every stored draw, ``(draws, games)``."""
    a = draws.block("a", (fs.nweeks, fs.nteams))
    hw, aw = fs.home_week - 1, fs.away_week - 1
    mu = a[:, hw, fs.home_idx] - a[:, aw, fs.away_idx]
    mu += draws.flat("b_effort")[:, None] * (fs.eff_home - fs.eff_away)[None, :]
    mu += draws.flat("b_home")[:, None]
    if "b_atten" in draws:
        mu += draws.flat("b_atten")[:, None] * fs.atten[None, :]
    if "b_day" in draws:
        mu += draws.flat("b_day")[:, None] * fs.day[None, :]
    return mu


def replicate_scores(draws: DrawsMatrix, fs: FeatureSet, seed: int, n_replications: int | None = None,
                     observed=None) -> ReplicationSet:
    """One Student-t replication per stored draw (or ``n_replications``, cycling draws)."""
    mu = draw_locations(draws, fs)
    nu = draws.flat("nu")
    sigma = draws.flat("sigma_y")
    ndraws = mu.shape[0]
    if n_replications is None:
        n_replications = ndraws
    pick = np.arange(n_replications) % ndraws
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x505043]))
    noise = rng.standard_t(nu[pick][:, None], size=(n_replications, fs.ngames))
    reps = mu[pick] + sigma[pick][:, None] * noise
    obs = fs.y if observed is None else np.asarray(observed, dtype=float)
    pv = np.array([ppc_pvalue(reps[:, g], obs[g]) for g in range(fs.ngames)])
    return ReplicationSet(reps, obs.copy(), pv, mu[pick])


def ppc_pvalue(replications, observed: float) -> float:
    """Mid-p share of replications at or below ``observed``."""
    r = np.asarray(replications, dtype=float)
    below = np.count_nonzero(r < observed)
    ties = np.count_nonzero(r == observed)
    return (below + 0.5 * ties) / r.size


@dataclass(frozen=True)
class Outlier:
    game: int  # 0-based index into the feature set
    pvalue: float
    side: str  # "high": home did better than predicted


def flag_outliers(reps: ReplicationSet, alpha: float = 0.005) -> list[Outlier]:
    """Games whose p-value is within ``alpha`` of either tail, most extreme first."""
    out = []
    for g, p in enumerate(reps.pvalues):
        tail = min(p, 1.0 - p)
        if tail <= alpha:
            out.append(Outlier(g, float(p), "low" if p < 0.5 else "high"))
    out.sort(key=lambda o: (min(o.pvalue, 1.0 - o.pvalue), o.game))
    return out


PPC_COLUMNS = ("game", "observed", "pred_mean", "pred_sd", "pvalue", "flag")


def write_ppc(reps: ReplicationSet, path, alpha: float = 0.005, scale: float = 1.0) -> None:
    """Per-game table; ``scale`` converts to points."""
    flagged = {o.game: o.side for o in flag_outliers(reps, alpha)}
    pm, ps = reps.pred_mean, reps.pred_sd
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PPC_COLUMNS)
        for g in range(len(reps.observed)):
            w.writerow([g + 1, repr(float(reps.observed[g] * scale)), repr(float(pm[g] * scale)),
                        repr(float(ps[g] * scale)), repr(float(reps.pvalues[g])), flagged.get(g, "")])


def histogram_bins(observed, replications, bins=20):
    """Common bin edges plus counts for the observed set and every replication."""
    observed = np.asarray(observed, dtype=float)
    lo = min(observed.min(), replications.min())
    hi = max(observed.max(), replications.max())
    edges = np.linspace(lo, hi, bins + 1)
    obs_counts = np.histogram(observed, edges)[0]
    # clip so the right edge lands in the last bin, as np.histogram does
    idx = np.clip(np.searchsorted(edges, replications, side="right") - 1, 0, bins - 1)
    rep_counts = np.stack([np.bincount(row, minlength=bins) for row in idx])
    return edges, obs_counts, rep_counts


@dataclass(frozen=True)
class LuckDecomposition:
    var_performance: float
    var_luck: float
    var_effort: float
    var_ability: float
    p: float
    g: int
    ability_negative: bool

    def to_json(self, extra=None) -> str:
        d = asdict(self)
        if extra:
            d.update(extra)
        return json.dumps(d, indent=2, sort_keys=True) + "\n"


def decompose_variance(var_performance: float, var_effort: float, g: int, p: float = 0.5) -> LuckDecomposition:
    """Ability variance as performance minus binomial luck minus effort variance."""
    if g < 1:
        raise ValueError("g must be >= 1")
    if not 0 <= p <= 1:
        raise ValueError("p must lie in [0, 1]")
    var_luck = p * (1 - p) / g
    var_ability = var_performance - var_luck - var_effort
    return LuckDecomposition(float(var_performance), var_luck, float(var_effort), var_ability, float(p), int(g),
                             var_ability < 0)


def luck_decomposition(wins, efforts, g: int, p: float = 0.5, ddof: int = 1) -> LuckDecomposition:
    """Decomposition from per-team win counts and pooled per-game efforts.

    Performance variance is taken over win fractions ``wins / g``.
    """
    wins = np.asarray(wins, dtype=float)
    efforts = np.asarray(efforts, dtype=float)
    if wins.size < 2:
        raise ValueError("luck decomposition needs at least two teams")
    if efforts.size <= ddof:
        raise ValueError("not enough effort observations")
    var_perf = float(np.var(wins / g, ddof=ddof))
    var_eff = float(np.var(efforts, ddof=ddof))
    return decompose_variance(var_perf, var_eff, g, p)


def season_wins(dataset) -> tuple[np.ndarray, np.ndarray]:
    """Wins per team (draws count one half) and games played per team."""
    idx = dataset.team_index()
    wins = np.zeros(dataset.nteams)
    played = np.zeros(dataset.nteams, dtype=int)
    for m in dataset.matches:
        h, a = idx[m.home_team], idx[m.away_team]
        played[h] += 1
        played[a] += 1
        d = m.raw_diff
        if d > 0:
            wins[h] += 1
        elif d < 0:
            wins[a] += 1
        else:
            wins[h] += 0.5
            wins[a] += 0.5
    return wins, played


def performance_variance_conventions(wins, g: int) -> dict:
    """Every reading of "variance of games won" (counts or fractions, n or n-1)."""
    wins = np.asarray(wins, dtype=float)
    return {
        "fraction_ddof0": float(np.var(wins / g, ddof=0)),
        "fraction_ddof1": float(np.var(wins / g, ddof=1)),
        "count_ddof0": float(np.var(wins, ddof=0)),
        "count_ddof1": float(np.var(wins, ddof=1)),
    }


def predictive_sd(nu: float, sigma: float) -> float:
    """Standard deviation of a Student-t(nu, 0, sigma); infinite for nu <= 2."""
    return sigma * math.sqrt(nu / (nu - 2)) if nu > 2 else math.inf
