"""Hamiltonian Monte Carlo with jittered trajectory lengths.

Warmup adapts a step size by dual averaging and a diagonal inverse metric
from windowed sample variances; both are frozen afterwards. Chains are
independent and seeded from ``SeedSequence([seed, chain])`` so results do not
depend on how chains are scheduled.
"""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._accel import USE_NUMBA, is_jitted
from .features import FeatureSet
from .model import ModelConfig, ParameterLayout, Posterior

log = logging.getLogger(__name__)

MAX_ENERGY_ERROR = 1000.0


class SamplerError(RuntimeError):
    def __init__(self, message, chain=None):
        self.chain = chain
        super().__init__(f"chain {chain}: {message}" if chain is not None else message)


@dataclass(frozen=True)
class SamplerConfig:
    chains: int = 4
    iters: int = 2500
    warmup: int = 1500
    seed: int = 0
    target_accept: float = 0.8
    max_leapfrog_steps: int = 1024
    init_radius: float = 2.0
    path_length: float = 4.0
    workers: int = 1

    def __post_init__(self):
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if not 0 < self.warmup < self.iters:
            raise ValueError("need 0 < warmup < iters")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must be in (0, 1)")
        if self.max_leapfrog_steps < 1 or self.path_length <= 0 or self.init_radius <= 0:
            raise ValueError("max_leapfrog_steps, path_length and init_radius must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


# -- integrator ---------------------------------------------------------------

def _pick_leapfrog(fn, use_numba):
    if use_numba is None:
        use_numba = USE_NUMBA
    if is_jitted(fn):
        if use_numba:
            return _kernels.leapfrog_nb, fn
        return _kernels.leapfrog_loop, fn.py_func
    return _kernels.leapfrog_loop, fn


def leapfrog(theta, momentum, step_size, n_steps, fn, data=None, inv_mass=None, lp_grad=None, use_numba=None):
    """Integrate Hamilton's equations for ``n_steps`` steps.

    ``fn(theta, data) -> (logp, grad)``. Jitted targets run through the
    compiled integrator unless numba is disabled.

    Returns (theta, momentum, logp, grad, energies, diverged).
    """
    if not step_size > 0:
        raise ValueError("step_size must be positive")
    theta = np.asarray(theta, dtype=np.float64)
    momentum = np.asarray(momentum, dtype=np.float64)
    if inv_mass is None:
        inv_mass = np.ones_like(theta)
    integrate, fn = _pick_leapfrog(fn, use_numba)
    if lp_grad is None:
        lp_grad = fn(theta, data)
    lp, grad = lp_grad
    return integrate(theta, momentum, float(lp), grad, float(step_size), int(n_steps),
                     np.asarray(inv_mass, dtype=np.float64), fn, data, MAX_ENERGY_ERROR)


@dataclass
class Transition:
    theta: np.ndarray
    lp: float
    grad: np.ndarray
    accept_prob: float
    diverged: bool
    n_steps: int
    accepted: bool


def hmc_transition(theta, lp, grad, rng, step_size, inv_mass, n_max, fn, data=None, use_numba=None) -> Transition:
    """One Metropolis-corrected HMC step with ``n ~ Uniform{1..n_max}`` leapfrog steps."""
    integrate, fn = _pick_leapfrog(fn, use_numba)
    n_steps = int(rng.integers(1, n_max + 1))
    p = rng.standard_normal(theta.shape[0]) / np.sqrt(inv_mass)
    u = rng.random()
    new_theta, _, new_lp, new_grad, energies, diverged = integrate(
        theta, p, float(lp), grad, float(step_size), n_steps, inv_mass, fn, data, MAX_ENERGY_ERROR)
    if diverged:
        return Transition(theta, lp, grad, 0.0, True, n_steps, False)
    log_ratio = energies[0] - energies[-1]
    accept_prob = 1.0 if log_ratio >= 0 else math.exp(log_ratio)
    if u < accept_prob:
        return Transition(new_theta, new_lp, new_grad, accept_prob, False, n_steps, True)
    return Transition(theta, lp, grad, accept_prob, False, n_steps, False)


# -- adaptation ---------------------------------------------------------------

class DualAveraging:
    """Nesterov dual averaging of log step size toward a target acceptance."""

    def __init__(self, step_size, target, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = math.log(10 * step_size)
        self.target = target
        self.gamma, self.t0, self.kappa = gamma, t0, kappa
        self.t = 0
        self.h_bar = 0.0
        self.log_eps_bar = 0.0
        self.step_size = step_size

    def update(self, accept_prob):
        self.t += 1
        w = 1.0 / (self.t + self.t0)
        self.h_bar = (1 - w) * self.h_bar + w * (self.target - accept_prob)
        log_eps = self.mu - math.sqrt(self.t) / self.gamma * self.h_bar
        x = self.t ** (-self.kappa)
        self.log_eps_bar = x * log_eps + (1 - x) * self.log_eps_bar
        self.step_size = math.exp(log_eps)
        return self.step_size

    @property
    def final(self):
        return math.exp(self.log_eps_bar)


def find_reasonable_step_size(theta, lp, grad, inv_mass, fn, data, rng, start=0.1):
    """Halve or double until one-step acceptance crosses 1/2."""
    eps = start

    def one_step_ratio(eps):
        p = rng.standard_normal(theta.shape[0]) / np.sqrt(inv_mass)
        *_, energies, diverged = _kernels.leapfrog_loop(theta, p, lp, grad, eps, 1, inv_mass, fn, data, np.inf)
        d = energies[0] - energies[-1]
        return d if np.isfinite(d) else -np.inf

    d = one_step_ratio(eps)
    direction = 1 if d > math.log(0.5) else -1
    for _ in range(60):
        if (direction == 1 and d <= math.log(0.5)) or (direction == -1 and d > math.log(0.5)):
            break
        eps = eps * (2.0 if direction == 1 else 0.5)
        d = one_step_ratio(eps)
    return eps if direction == -1 else eps / 2


def warmup_windows(warmup: int) -> tuple[int, int, int]:
    """Ends of the initial fast window and the two metric windows."""
    return round(0.15 * warmup), round(0.5 * warmup), round(0.9 * warmup)


def regularized_variance(samples: np.ndarray) -> np.ndarray:
    n = samples.shape[0]
    var = samples.var(axis=0, ddof=1)
    return (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))


@dataclass
class AdaptResult:
    theta: np.ndarray
    lp: float
    grad: np.ndarray
    step_size: float
    inv_mass: np.ndarray
    n_divergent: int
    accept_probs: np.ndarray = field(repr=False)


def adapt_warmup(theta, fn, data, warmup, rng, target_accept=0.8, max_leapfrog_steps=1024,
                 path_length=4.0, use_numba=None, chain=None) -> AdaptResult:
    """Run ``warmup`` adapting transitions; return the frozen step size and metric.

    The inverse metric is the (regularized) variance of the draws in the
    window [0.5, 0.9) of warmup; an earlier window [0.15, 0.5) provides an
    interim metric. Dual averaging restarts after each metric update.
    """
    if warmup < 100:
        raise ValueError("warmup must be >= 100 to adapt")
    integrate_fn = _pick_leapfrog(fn, use_numba)[1]
    theta = np.asarray(theta, dtype=np.float64).copy()
    lp, grad = integrate_fn(theta, data)
    inv_mass = np.ones_like(theta)
    eps = find_reasonable_step_size(theta, lp, grad, inv_mass, _pick_leapfrog(fn, False)[1], data, rng)
    da = DualAveraging(eps, target_accept)
    fast_end, mid, slow_end = warmup_windows(warmup)
    window = []
    divergent = 0
    accepts = np.empty(warmup)
    for i in range(warmup):
        n_max = max(1, min(max_leapfrog_steps, math.ceil(path_length / eps)))
        tr = hmc_transition(theta, lp, grad, rng, eps, inv_mass, n_max, fn, data, use_numba)
        theta, lp, grad = tr.theta, tr.lp, tr.grad
        divergent += tr.diverged
        accepts[i] = tr.accept_prob
        eps = da.update(tr.accept_prob)
        if fast_end <= i < slow_end:
            window.append(theta)
        if i + 1 in (mid, slow_end) and len(window) >= 10:
            inv_mass = regularized_variance(np.asarray(window))
            window = []
            eps = find_reasonable_step_size(theta, lp, grad, inv_mass, _pick_leapfrog(fn, False)[1], data, rng,
                                            start=eps)
            da = DualAveraging(eps, target_accept)
    if divergent == warmup:
        raise SamplerError(f"all {warmup} warmup transitions diverged", chain)
    return AdaptResult(theta, lp, grad, da.final, inv_mass, divergent, accepts)


# -- chains -------------------------------------------------------------------

@dataclass
class ChainResult:
    draws: np.ndarray
    accept_prob: np.ndarray
    divergent: np.ndarray
    n_steps: np.ndarray
    step_size: float
    inv_mass: np.ndarray
    warmup_divergent: int


def chain_rng(seed: int, chain: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, chain]))


def initial_point(fn, data, dim, radius, rng, chain=None, tries=100):
    for _ in range(tries):
        theta = rng.uniform(-radius, radius, size=dim)
        lp, grad = fn(theta, data)
        if np.isfinite(lp) and np.all(np.isfinite(grad)):
            return theta
    raise SamplerError(f"no finite initial point after {tries} tries", chain)


def run_chain(fn, data, dim, config: SamplerConfig, chain: int, use_numba=None, init=None) -> ChainResult:
    rng = chain_rng(config.seed, chain)
    plain = _pick_leapfrog(fn, use_numba)[1]
    theta = initial_point(plain, data, dim, config.init_radius, rng, chain) if init is None else np.array(init, float)
    ad = adapt_warmup(theta, fn, data, config.warmup, rng, config.target_accept, config.max_leapfrog_steps,
                      config.path_length, use_numba, chain)
    theta, lp, grad = ad.theta, ad.lp, ad.grad
    n_keep = config.iters - config.warmup
    n_max = max(1, min(config.max_leapfrog_steps, math.ceil(config.path_length / ad.step_size)))
    draws = np.empty((n_keep, dim))
    acc = np.empty(n_keep)
    div = np.zeros(n_keep, dtype=bool)
    steps = np.empty(n_keep, dtype=np.int64)
    for i in range(n_keep):
        tr = hmc_transition(theta, lp, grad, rng, ad.step_size, ad.inv_mass, n_max, fn, data, use_numba)
        theta, lp, grad = tr.theta, tr.lp, tr.grad
        draws[i] = theta
        acc[i], div[i], steps[i] = tr.accept_prob, tr.diverged, tr.n_steps
    if not np.all(np.isfinite(draws)):
        raise SamplerError("non-finite draw", chain)
    log.debug("chain %d: step %.4g, accept %.3f, divergent %d", chain, ad.step_size, acc.mean(), div.sum())
    return ChainResult(draws, acc, div, steps, ad.step_size, ad.inv_mass, ad.n_divergent)


def sample(fn, data, dim, config: SamplerConfig, use_numba=None, inits=None) -> list[ChainResult]:
    """Run ``config.chains`` independent chains on an arbitrary target."""

    def one(c):
        try:
            return run_chain(fn, data, dim, config, c, use_numba, None if inits is None else inits[c])
        except SamplerError:
            raise
        except Exception as exc:
            raise SamplerError(f"{type(exc).__name__}: {exc}", c) from exc

    if config.workers == 1 or config.chains == 1:
        return [one(c) for c in range(config.chains)]
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(one, range(config.chains)))


# -- model draws --------------------------------------------------------------

@dataclass
class DrawsMatrix:
    """Post-warmup draws on the constrained scale, ``(chains, draws, params)``."""

    names: tuple[str, ...]
    draws: np.ndarray
    accept_prob: np.ndarray | None = None
    divergent: np.ndarray | None = None
    step_size: np.ndarray | None = None
    inv_mass: np.ndarray | None = None

    def __post_init__(self):
        if self.draws.ndim != 3 or self.draws.shape[2] != len(self.names):
            raise ValueError("draws must be (chains, draws, len(names))")
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate parameter name")
        self._index = {n: i for i, n in enumerate(self.names)}

    @property
    def nchains(self) -> int:
        return self.draws.shape[0]

    @property
    def ndraws(self) -> int:
        return self.draws.shape[1]

    def __contains__(self, name):
        return name in self._index

    def __getitem__(self, name) -> np.ndarray:
        """``(chains, draws)`` array for one parameter."""
        return self.draws[:, :, self._index[name]]

    def flat(self, name) -> np.ndarray:
        return self[name].reshape(-1)

    def block(self, prefix: str, shape) -> np.ndarray:
        """Stack ``prefix[i,j]`` columns into ``(chains*draws, *shape)``."""
        cols = [i for i, n in enumerate(self.names) if n.startswith(prefix + "[")]
        return self.draws[:, :, cols].reshape(-1, *shape)

    @property
    def n_divergent(self) -> int:
        return 0 if self.divergent is None else int(self.divergent.sum())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            # names like eta[1,2] contain commas, so the header goes through csv quoting
            csv.writer(fh, lineterminator="\n").writerow(("chain", "iter") + self.names)
            for c in range(self.nchains):
                for i in range(self.ndraws):
                    fh.write(f"{c + 1},{i + 1}," + ",".join(map(repr, self.draws[c, i].tolist())) + "\n")

    @classmethod
    def from_csv(cls, path) -> DrawsMatrix:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:2] != ["chain", "iter"]:
                raise ValueError(f"{path}: draws header must start with chain,iter")
            rows = [list(map(float, r)) for r in reader if r]
        arr = np.asarray(rows)
        chain = arr[:, 0].astype(int)
        chains = sorted(set(chain))
        per = [arr[chain == c, 2:] for c in chains]
        if len({len(p) for p in per}) != 1:
            raise ValueError(f"{path}: chains have unequal lengths")
        return cls(tuple(header[2:]), np.stack(per))


def run_sampler(fs: FeatureSet, model_config: ModelConfig, config: SamplerConfig, lik_weight: float = 1.0,
                use_numba=None) -> DrawsMatrix:
    """Fit the model; returns post-warmup draws with abilities appended."""
    post = Posterior(fs, model_config, lik_weight, use_numba)
    chains = sample(post.fn, post.data, post.dim, config, use_numba)
    layout: ParameterLayout = post.layout
    draws = np.stack([layout.constrain(ch.draws, fs.prevperf) for ch in chains])
    return DrawsMatrix(
        names=layout.constrained_names,
        draws=draws,
        accept_prob=np.stack([ch.accept_prob for ch in chains]),
        divergent=np.stack([ch.divergent for ch in chains]),
        step_size=np.array([ch.step_size for ch in chains]),
        inv_mass=np.stack([ch.inv_mass for ch in chains]),
    )
