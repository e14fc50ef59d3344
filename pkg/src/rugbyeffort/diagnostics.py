"""Convergence diagnostics and posterior summary tables."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .sampler import DrawsMatrix

SUMMARY_COLUMNS = ("param", "rhat", "n_eff", "mean", "sd", "q025", "q500", "q975")
REPORT_ORDER = ("b_home", "b_prev", "b_atten", "b_effort", "b_day", "nu", "sigma_y")


def _split(draws) -> np.ndarray:
    """(chains, n) -> (2*chains, n//2); the middle draw of odd chains is dropped."""
    x = np.asarray(draws, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    half = x.shape[1] // 2
    if half < 4:
        raise ValueError("need at least 4 draws per split half")
    return np.concatenate([x[:, :half], x[:, x.shape[1] - half:]], axis=0)


def split_rhat(draws) -> float:
    """Potential scale reduction over split chains; NaN when within variance is 0.

    ``draws`` is ``(chains, n)`` (a 1-D array is one chain).
    """
    x = _split(draws)
    n = x.shape[1]
    W = x.var(axis=1, ddof=1).mean()
    if not W > 0 or np.ptp(x) == 0:
        return math.nan
    B = n * x.mean(axis=1).var(ddof=1)
    return math.sqrt(((n - 1) / n * W + B / n) / W)


def _autocovariance(x: np.ndarray) -> np.ndarray:
    """Biased (1/n) autocovariance per row, via FFT."""
    n = x.shape[1]
    xc = x - x.mean(axis=1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size, axis=1)
    return np.fft.irfft(f * np.conj(f), size, axis=1)[:, :n] / n


def effective_sample_size(draws) -> float:
    """Multi-chain ESS over split chains.

    Autocorrelations combine within-chain autocovariances with the pooled
    variance estimate; the sum is truncated at the first negative pair
    (Geyer's initial positive sequence) and made monotone. Capped at
    ``N log10 N``. NaN when the within variance is 0.
    """
    x = _split(draws)
    m, n = x.shape
    acov = _autocovariance(x)
    chain_var = acov[:, 0] * n / (n - 1)
    W = chain_var.mean()
    if not W > 0 or np.ptp(x) == 0:
        return math.nan
    var_plus = W * (n - 1) / n
    if m > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    mean_acov = acov.mean(axis=0)
    rho = np.zeros(n)
    rho[0] = 1.0
    rho_even = 1.0
    rho_odd = 1.0 - (W - mean_acov[1]) / var_plus
    rho[1] = rho_odd
    t = 0
    while t < n - 5 and rho_even + rho_odd > 0:
        t += 2
        rho_even = 1.0 - (W - mean_acov[t]) / var_plus
        rho_odd = 1.0 - (W - mean_acov[t + 1]) / var_plus
        if rho_even + rho_odd >= 0:
            rho[t] = rho_even
            rho[t + 1] = rho_odd
    max_t = t
    if rho_even > 0:
        rho[max_t] = rho_even
    t = 0
    while t <= max_t - 4:
        t += 2
        if rho[t] + rho[t + 1] > rho[t - 2] + rho[t - 1]:
            rho[t] = rho[t + 1] = (rho[t - 2] + rho[t - 1]) / 2
    total = m * n
    tau = -1.0 + 2.0 * rho[:max_t].sum() + rho[max_t]
    tau = max(tau, 1.0 / math.log10(total))
    return total / tau


@dataclass(frozen=True)
class SummaryRow:
    param: str
    rhat: float
    n_eff: float
    mean: float
    sd: float
    q025: float
    q500: float
    q975: float

    def as_tuple(self):
        return (self.param, self.rhat, self.n_eff, self.mean, self.sd, self.q025, self.q500, self.q975)


def summarize_param(name: str, draws) -> SummaryRow:
    x = np.asarray(draws, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    flat = x.reshape(-1)
    try:
        rhat = split_rhat(x)
        n_eff = effective_sample_size(x)
    except ValueError:
        rhat = n_eff = math.nan
    q025, q500, q975 = np.quantile(flat, [0.025, 0.5, 0.975])
    sd = float(flat.std(ddof=1)) if flat.size > 1 else 0.0
    return SummaryRow(name, rhat, n_eff, float(flat.mean()), sd, float(q025), float(q500), float(q975))


def summarize(draws: DrawsMatrix, params=None, latent: bool = False) -> list[SummaryRow]:
    """Posterior table rows.

    Default rows: the betas, then nu and sigma_y;
    ``latent=True`` appends sigma_a, eta and ability columns.
    """
    if params is None:
        params = [p for p in REPORT_ORDER if p in draws]
        if latent:
            params += [n for n in draws.names if n.split("[")[0] in ("sigma_a", "eta", "a")]
    return [summarize_param(p, draws[p]) for p in params]


def _fmt(x: float) -> str:
    return "NA" if not math.isfinite(x) else repr(float(x))


def write_summary(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow([r.param] + [_fmt(v) for v in r.as_tuple()[1:]])


def format_table(rows) -> str:
    head = f"{'param':<10}{'Rhat':>8}{'n_eff':>8}{'mean':>9}{'sd':>8}{'2.5%':>9}{'50%':>9}{'97.5%':>9}"
    lines = [head]
    for r in rows:
        lines.append(f"{r.param:<10}{r.rhat:>8.3f}{r.n_eff:>8.0f}{r.mean:>9.3f}{r.sd:>8.3f}"
                     f"{r.q025:>9.3f}{r.q500:>9.3f}{r.q975:>9.3f}")
    return "\n".join(lines)
