"""Score-difference model: parameter layout, transforms, density and gradient.

Model variants differ only in which home-advantage terms enter the location:

    I    b_home
    II   b_home + b_atten * atten
    III  b_home + b_atten * atten + b_day * day
    IV   as III, with prevperf built from points instead of tries
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import _kernels
from ._accel import USE_NUMBA
from .features import FeatureSet

VARIANTS = ("I", "II", "III", "IV")


class NonFiniteDensityError(FloatingPointError):
    """Density or gradient overflowed to NaN/inf."""


@dataclass(frozen=True)
class ModelConfig:
    variant: str = "II"
    nu_shape: float = 9.0
    nu_rate: float = 0.5
    beta_mean: float = 0.5
    beta_sd: float = 1.0
    sigma_y_mean: float = 0.5
    sigma_y_sd: float = 1.0
    sigma_a_sd: float = 0.1
    eta_sd: float = 0.5
    nu_min: float = 0.1
    prevperf_mode: str = "tries"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        for name in ("nu_shape", "nu_rate", "beta_sd", "sigma_y_sd", "sigma_a_sd", "eta_sd"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.nu_min < 0:
            raise ValueError("nu_min must be nonnegative")
        if self.prevperf_mode not in ("tries", "points"):
            raise ValueError("prevperf_mode must be 'tries' or 'points'")
        if self.variant == "IV":
            object.__setattr__(self, "prevperf_mode", "points")

    @property
    def has_atten(self) -> bool:
        return self.variant != "I"

    @property
    def has_day(self) -> bool:
        return self.variant in ("III", "IV")

    @property
    def beta_names(self) -> tuple[str, ...]:
        names = ["b_home", "b_prev", "b_effort"]
        if self.has_atten:
            names.append("b_atten")
        if self.has_day:
            names.append("b_day")
        return tuple(names)

    def hyper(self) -> np.ndarray:
        return np.array([self.beta_mean, self.beta_sd, self.nu_shape, self.nu_rate, self.sigma_y_mean,
                         self.sigma_y_sd, self.sigma_a_sd, self.eta_sd, self.nu_min])


@dataclass(frozen=True)
class ParameterLayout:
    """Slices of the unconstrained vector for one variant and season size."""

    config: ModelConfig
    nteams: int
    nweeks: int

    @property
    def nbeta(self) -> int:
        return len(self.config.beta_names)

    @property
    def i_log_nu(self) -> int:
        return self.nbeta

    @property
    def i_log_sigma_y(self) -> int:
        return self.nbeta + 1

    @property
    def sigma_a(self) -> slice:
        return slice(self.nbeta + 2, self.nbeta + 2 + self.nteams)

    @property
    def eta(self) -> slice:
        start = self.nbeta + 2 + self.nteams
        return slice(start, start + self.nweeks * self.nteams)

    @property
    def size(self) -> int:
        return self.nbeta + 2 + self.nteams + self.nweeks * self.nteams

    @cached_property
    def unconstrained_names(self) -> tuple[str, ...]:
        return (self.config.beta_names + ("log_nu", "log_sigma_y")
                + tuple(f"sigma_a[{t}]" for t in range(1, self.nteams + 1))
                + tuple(f"eta[{w},{t}]" for w in range(1, self.nweeks + 1) for t in range(1, self.nteams + 1)))

    @cached_property
    def constrained_names(self) -> tuple[str, ...]:
        """Output naming: betas, nu, sigma_y, sigma_a[t], eta[w,t], a[w,t] (1-based)."""
        u = self.unconstrained_names
        abil = tuple(f"a[{w},{t}]" for w in range(1, self.nweeks + 1) for t in range(1, self.nteams + 1))
        return self.config.beta_names + ("nu", "sigma_y") + u[self.nbeta + 2:] + abil

    def view(self, theta) -> dict:
        """Named views into one unconstrained state."""
        theta = np.asarray(theta)
        out = {name: float(theta[i]) for i, name in enumerate(self.config.beta_names)}
        out["log_nu"] = float(theta[self.i_log_nu])
        out["log_sigma_y"] = float(theta[self.i_log_sigma_y])
        out["sigma_a_raw"] = theta[self.sigma_a]
        out["eta"] = theta[self.eta].reshape(self.nweeks, self.nteams)
        return out

    def pack(self, *, betas: dict, nu: float, sigma_y: float, sigma_a, eta) -> np.ndarray:
        """Unconstrained vector from constrained values."""
        theta = np.empty(self.size)
        for i, name in enumerate(self.config.beta_names):
            theta[i] = betas[name]
        theta[self.i_log_nu], theta[self.i_log_sigma_y] = unconstrain_positive(np.array([nu, sigma_y]))
        theta[self.sigma_a] = np.broadcast_to(np.asarray(sigma_a, dtype=float), (self.nteams,))
        theta[self.eta] = np.asarray(eta, dtype=float).reshape(-1)
        return theta

    def constrain(self, theta, prevperf) -> np.ndarray:
        """Map unconstrained states (1-D or 2-D) to the constrained output row(s)."""
        theta = np.asarray(theta, dtype=np.float64)
        single = theta.ndim == 1
        th = np.atleast_2d(theta)
        a = _kernels.abilities(th, prevperf, self.nweeks, self.nteams, self.nbeta)
        out = np.concatenate([th[:, : self.nbeta], constrain_positive(th[:, self.nbeta:self.nbeta + 2]),
                              th[:, self.nbeta + 2:], a.reshape(len(th), -1)], axis=1)
        return out[0] if single else out


def constrain_positive(u):
    return np.exp(u)


def unconstrain_positive(x):
    x = np.asarray(x, dtype=np.float64)
    if np.any(x <= 0):
        raise ValueError("positive parameter must be > 0")
    return np.log(x)


def pack_data(fs: FeatureSet, config: ModelConfig, lik_weight: float = 1.0) -> tuple:
    """Kernel data tuple (see ``_kernels``)."""
    return (
        np.ascontiguousarray(fs.y, dtype=np.float64),
        np.ascontiguousarray(fs.home_idx, dtype=np.int64),
        np.ascontiguousarray(fs.away_idx, dtype=np.int64),
        np.ascontiguousarray(fs.home_week - 1, dtype=np.int64),
        np.ascontiguousarray(fs.away_week - 1, dtype=np.int64),
        np.ascontiguousarray(fs.eff_home - fs.eff_away, dtype=np.float64),
        np.ascontiguousarray(fs.atten, dtype=np.float64),
        np.ascontiguousarray(fs.day, dtype=np.float64),
        np.ascontiguousarray(fs.prevperf, dtype=np.float64),
        int(fs.nweeks),
        int(fs.nteams),
        int(config.has_atten),
        int(config.has_day),
        config.hyper(),
        float(lik_weight),
    )


def kernel(use_numba: bool | None = None):
    """The ``(theta, data) -> (lp, grad)`` kernel for the selected path."""
    if use_numba is None:
        use_numba = USE_NUMBA
    return _kernels.logp_grad_nb if use_numba else _kernels.logp_grad_numpy


class Posterior:
    """Bound density for one feature set; the object the sampler drives."""

    def __init__(self, fs: FeatureSet, config: ModelConfig, lik_weight: float = 1.0, use_numba=None):
        self.features = fs
        self.config = config
        self.layout = ParameterLayout(config, fs.nteams, fs.nweeks)
        self.data = pack_data(fs, config, lik_weight)
        self.fn = kernel(use_numba)

    @property
    def dim(self) -> int:
        return self.layout.size

    def logp_grad(self, theta):
        return self.fn(np.ascontiguousarray(theta, dtype=np.float64), self.data)

    def log_density(self, theta) -> float:
        lp, _ = self.logp_grad(theta)
        _check_finite(lp, "log density")
        return lp

    def gradient(self, theta) -> np.ndarray:
        lp, g = self.logp_grad(theta)
        _check_finite(g, "gradient")
        return g


def _check_finite(x, what):
    x = np.asarray(x)
    if np.any(np.isnan(x)) or np.any(x == np.inf):
        raise NonFiniteDensityError(f"{what} is not finite")


def build_abilities(theta, layout: ParameterLayout, prevperf) -> np.ndarray:
    """nweeks x nteams ability matrix for one unconstrained state."""
    return _kernels.abilities(theta, np.asarray(prevperf, dtype=float), layout.nweeks, layout.nteams, layout.nbeta)


def location(fs: FeatureSet, a: np.ndarray, theta, layout: ParameterLayout, games=None) -> np.ndarray:
    """Expected standardized score difference for each game (or ``games``)."""
    v = layout.view(theta)
    g = slice(None) if games is None else games
    hw = fs.home_week[g] - 1
    aw = fs.away_week[g] - 1
    mu = (a[hw, fs.home_idx[g]] - a[aw, fs.away_idx[g]] + v["b_effort"] * (fs.eff_home[g] - fs.eff_away[g])
          + v["b_home"])
    if layout.config.has_atten:
        mu = mu + v["b_atten"] * fs.atten[g]
    if layout.config.has_day:
        mu = mu + v["b_day"] * fs.day[g]
    return mu


def log_prior(theta, fs: FeatureSet, config: ModelConfig) -> float:
    """Prior on the unconstrained scale (log-Jacobians included).

    Returns -inf when nu falls below ``config.nu_min``; raises on NaN/overflow.
    """
    return Posterior(fs, config, lik_weight=0.0).log_density(theta)


def log_likelihood(theta, fs: FeatureSet, config: ModelConfig) -> float:
    layout = ParameterLayout(config, fs.nteams, fs.nweeks)
    v = layout.view(theta)
    nu = math.exp(v["log_nu"])
    sig = math.exp(v["log_sigma_y"])
    mu = location(fs, build_abilities(theta, layout, fs.prevperf), theta, layout)
    out = float(np.sum(student_t_logpdf(fs.y, nu, mu, sig)))
    _check_finite(out, "log likelihood")
    return out


def log_posterior(theta, fs: FeatureSet, config: ModelConfig) -> float:
    return Posterior(fs, config).log_density(theta)


def grad_log_posterior(theta, fs: FeatureSet, config: ModelConfig) -> np.ndarray:
    return Posterior(fs, config).gradient(theta)


def student_t_logpdf(x, nu, loc, scale):
    """Location-scale Student-t log density."""
    z = (np.asarray(x, dtype=float) - loc) / scale
    return (math.lgamma(0.5 * (nu + 1)) - math.lgamma(0.5 * nu) - 0.5 * math.log(nu * math.pi)
            - math.log(scale) - 0.5 * (nu + 1) * np.log1p(z * z / nu))
