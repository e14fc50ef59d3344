"""Log-posterior and gradient kernels.

Both kernels take ``(theta, data)`` where ``data`` is the tuple built by
``model.pack_data``::

    (y, home_idx, away_idx, home_week0, away_week0, eff_diff, atten, day,
     prevperf, nweeks, nteams, has_atten, has_day, hyper, lik_weight)

``hyper`` = [beta_mean, beta_sd, nu_shape, nu_rate, sigma_y_mean, sigma_y_sd,
sigma_a_sd, eta_sd, nu_min]. Weeks are 0-based here.

``theta`` layout: betas (home, prev, effort[, atten][, day]), log_nu,
log_sigma_y, sigma_a_raw[nteams], eta[nweeks, nteams] row-major.
"""
import math

import numpy as np

from ._accel import njit

HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
LOG_PI = math.log(math.pi)


def digamma(x):
    """psi(x) for x > 0: upward recurrence to x >= 10, then the asymptotic series."""
    acc = 0.0
    while x < 10.0:
        acc -= 1.0 / x
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    series = inv2 * (1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 * (1.0 / 240 - inv2 * (1.0 / 132)))))
    return acc + math.log(x) - 0.5 * inv - series


digamma_nb = njit(digamma)


def logp_grad_loops(theta, data):
    y, hi, ai, hw, aw, effd, att, day, pp, nweeks, nteams, has_att, has_day, hyper, lik_weight = data
    grad = np.zeros(theta.shape[0])
    beta_mean = hyper[0]
    beta_sd = hyper[1]
    shape = hyper[2]
    rate = hyper[3]
    sy_mean = hyper[4]
    sy_sd = hyper[5]
    sa_sd = hyper[6]
    eta_sd = hyper[7]
    nu_min = hyper[8]

    nb = 3 + has_att + has_day
    b_home = theta[0]
    b_prev = theta[1]
    b_eff = theta[2]
    b_att = theta[3] if has_att else 0.0
    b_day = theta[3 + has_att] if has_day else 0.0
    log_nu = theta[nb]
    log_sig = theta[nb + 1]
    nu = math.exp(log_nu)
    sig = math.exp(log_sig)
    so = nb + 2
    eo = so + nteams

    lp = 0.0
    c_beta = -math.log(beta_sd) - HALF_LOG_2PI
    for i in range(nb):
        z = (theta[i] - beta_mean) / beta_sd
        lp += c_beta - 0.5 * z * z
        grad[i] = -z / beta_sd

    # gamma(shape, rate) on nu, plus log-Jacobian
    lp += shape * math.log(rate) - math.lgamma(shape) + shape * log_nu - rate * nu
    grad[nb] = shape - rate * nu

    z = (sig - sy_mean) / sy_sd
    lp += -math.log(sy_sd) - HALF_LOG_2PI - 0.5 * z * z + log_sig
    grad[nb + 1] = -z / sy_sd * sig + 1.0

    c_sa = -math.log(sa_sd) - HALF_LOG_2PI
    for t in range(nteams):
        z = theta[so + t] / sa_sd
        lp += c_sa - 0.5 * z * z
        grad[so + t] = -z / sa_sd

    c_eta = -math.log(eta_sd) - HALF_LOG_2PI
    for j in range(nweeks * nteams):
        z = theta[eo + j] / eta_sd
        lp += c_eta - 0.5 * z * z
        grad[eo + j] = -z / eta_sd

    if lik_weight != 0.0:
        a = np.empty((nweeks, nteams))
        for t in range(nteams):
            a[0, t] = b_prev * pp[t] + theta[eo + t]
        for w in range(1, nweeks):
            for t in range(nteams):
                a[w, t] = a[w - 1, t] + theta[so + t] * theta[eo + w * nteams + t]

        G = np.zeros((nweeks, nteams))
        ngames = y.shape[0]
        c_t = math.lgamma(0.5 * (nu + 1.0)) - math.lgamma(0.5 * nu) - 0.5 * (log_nu + LOG_PI) - log_sig
        c_dnu = 0.5 * digamma_nb(0.5 * (nu + 1.0)) - 0.5 * digamma_nb(0.5 * nu) - 0.5 / nu
        lik = 0.0
        g_home = 0.0
        g_eff = 0.0
        g_att = 0.0
        g_day = 0.0
        g_nu = 0.0
        g_sig = 0.0
        sig2 = sig * sig
        for g in range(ngames):
            mu = (a[hw[g], hi[g]] - a[aw[g], ai[g]] + b_eff * effd[g] + b_home
                  + b_att * att[g] + b_day * day[g])
            r = y[g] - mu
            z2 = r * r / sig2
            l1p = math.log1p(z2 / nu)
            lik += c_t - 0.5 * (nu + 1.0) * l1p
            dmu = (nu + 1.0) * r / (nu * sig2 + r * r)
            g_home += dmu
            g_eff += dmu * effd[g]
            g_att += dmu * att[g]
            g_day += dmu * day[g]
            G[hw[g], hi[g]] += dmu
            G[aw[g], ai[g]] -= dmu
            g_nu += c_dnu - 0.5 * l1p + 0.5 * (nu + 1.0) * z2 / (nu * (nu + z2))
            g_sig += -1.0 + (nu + 1.0) * z2 / (nu + z2)

        lp += lik_weight * lik
        grad[0] += lik_weight * g_home
        grad[2] += lik_weight * g_eff
        if has_att:
            grad[3] += lik_weight * g_att
        if has_day:
            grad[3 + has_att] += lik_weight * g_day
        grad[nb] += lik_weight * g_nu * nu
        grad[nb + 1] += lik_weight * g_sig

        # reverse accumulation through the random walk
        g_prev = 0.0
        for t in range(nteams):
            tail = 0.0
            for w in range(nweeks - 1, 0, -1):
                tail += G[w, t]
                grad[eo + w * nteams + t] += lik_weight * theta[so + t] * tail
                grad[so + t] += lik_weight * theta[eo + w * nteams + t] * tail
            tail += G[0, t]
            grad[eo + t] += lik_weight * tail
            g_prev += pp[t] * tail
        grad[1] += lik_weight * g_prev

    if nu < nu_min:
        lp = -np.inf
    return lp, grad


logp_grad_nb = njit(logp_grad_loops)


def logp_grad_numpy(theta, data):
    """Vectorized twin of ``logp_grad_loops`` used when numba is disabled."""
    y, hi, ai, hw, aw, effd, att, day, pp, nweeks, nteams, has_att, has_day, hyper, lik_weight = data
    beta_mean, beta_sd, shape, rate, sy_mean, sy_sd, sa_sd, eta_sd, nu_min = hyper
    has_att = int(has_att)
    has_day = int(has_day)
    nb = 3 + has_att + has_day
    so = nb + 2
    eo = so + nteams
    grad = np.empty_like(theta)

    betas = theta[:nb]
    zb = (betas - beta_mean) / beta_sd
    lp = nb * (-math.log(beta_sd) - HALF_LOG_2PI) - 0.5 * float(zb @ zb)
    grad[:nb] = -zb / beta_sd

    log_nu = float(theta[nb])
    log_sig = float(theta[nb + 1])
    nu = math.exp(log_nu)
    sig = math.exp(log_sig)
    lp += shape * math.log(rate) - math.lgamma(shape) + shape * log_nu - rate * nu
    grad[nb] = shape - rate * nu
    z = (sig - sy_mean) / sy_sd
    lp += -math.log(sy_sd) - HALF_LOG_2PI - 0.5 * z * z + log_sig
    grad[nb + 1] = -z / sy_sd * sig + 1.0

    s = theta[so:eo]
    eta_flat = theta[eo:]
    lp += nteams * (-math.log(sa_sd) - HALF_LOG_2PI) - 0.5 * float(s @ s) / sa_sd**2
    grad[so:eo] = -s / sa_sd**2
    lp += eta_flat.size * (-math.log(eta_sd) - HALF_LOG_2PI) - 0.5 * float(eta_flat @ eta_flat) / eta_sd**2
    grad[eo:] = -eta_flat / eta_sd**2

    if lik_weight != 0.0:
        eta = eta_flat.reshape(nweeks, nteams)
        b_home, b_prev, b_eff = theta[0], theta[1], theta[2]
        b_att = theta[3] if has_att else 0.0
        b_day = theta[3 + has_att] if has_day else 0.0
        steps = s * eta
        steps[0] = b_prev * pp + eta[0]
        a = np.cumsum(steps, axis=0)

        mu = a[hw, hi] - a[aw, ai] + b_eff * effd + b_home + b_att * att + b_day * day
        r = y - mu
        sig2 = sig * sig
        z2 = r * r / sig2
        l1p = np.log1p(z2 / nu)
        n = y.size
        c_t = math.lgamma(0.5 * (nu + 1.0)) - math.lgamma(0.5 * nu) - 0.5 * (log_nu + LOG_PI) - log_sig
        lp += lik_weight * (n * c_t - 0.5 * (nu + 1.0) * float(l1p.sum()))

        dmu = (nu + 1.0) * r / (nu * sig2 + r * r)
        grad[0] += lik_weight * dmu.sum()
        grad[2] += lik_weight * float(dmu @ effd)
        if has_att:
            grad[3] += lik_weight * float(dmu @ att)
        if has_day:
            grad[3 + has_att] += lik_weight * float(dmu @ day)
        c_dnu = 0.5 * digamma(0.5 * (nu + 1.0)) - 0.5 * digamma(0.5 * nu) - 0.5 / nu
        g_nu = n * c_dnu - 0.5 * l1p.sum() + 0.5 * (nu + 1.0) * float(np.sum(z2 / (nu * (nu + z2))))
        grad[nb] += lik_weight * g_nu * nu
        grad[nb + 1] += lik_weight * float(np.sum(-1.0 + (nu + 1.0) * z2 / (nu + z2)))

        size = nweeks * nteams
        G = (np.bincount(hw * nteams + hi, weights=dmu, minlength=size)
             - np.bincount(aw * nteams + ai, weights=dmu, minlength=size)).reshape(nweeks, nteams)
        tail = np.cumsum(G[::-1], axis=0)[::-1]
        geta = np.empty_like(tail)
        geta[0] = tail[0]
        geta[1:] = s * tail[1:]
        grad[eo:] += lik_weight * geta.ravel()
        grad[so:eo] += lik_weight * np.sum(eta[1:] * tail[1:], axis=0)
        grad[1] += lik_weight * float(pp @ tail[0])

    if nu < nu_min:
        lp = -np.inf
    return lp, grad


def abilities(theta, prevperf, nweeks, nteams, nbeta):
    """Ability matrices for one state (1-D theta) or a stack of states (2-D)."""
    theta = np.asarray(theta, dtype=np.float64)
    single = theta.ndim == 1
    th = np.atleast_2d(theta)
    so = nbeta + 2
    eo = so + nteams
    s = th[:, so:eo]
    eta = th[:, eo:].reshape(-1, nweeks, nteams)
    steps = s[:, None, :] * eta
    steps[:, 0, :] = th[:, 1:2] * prevperf[None, :] + eta[:, 0, :]
    a = np.cumsum(steps, axis=1)
    return a[0] if single else a


def leapfrog_loop(theta, p, lp, grad, step_size, n_steps, inv_mass, fn, data, max_error):
    """Velocity-Verlet integration.

    Returns (theta, p, lp, grad, energies, diverged); ``energies[0]`` is the
    starting Hamiltonian and integration stops at the first step whose energy
    error exceeds ``max_error`` or is not finite.
    """
    theta = theta.copy()
    p = p.copy()
    energies = np.empty(n_steps + 1)
    h0 = -lp + 0.5 * np.sum(inv_mass * p * p)
    energies[0] = h0
    for i in range(n_steps):
        p = p + 0.5 * step_size * grad
        theta = theta + step_size * inv_mass * p
        lp, grad = fn(theta, data)
        p = p + 0.5 * step_size * grad
        h = -lp + 0.5 * np.sum(inv_mass * p * p)
        energies[i + 1] = h
        if not np.isfinite(h) or h - h0 > max_error:
            return theta, p, lp, grad, energies[: i + 2], True
    return theta, p, lp, grad, energies, False


leapfrog_nb = njit(leapfrog_loop)
