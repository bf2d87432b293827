"""Finite-blocklength reliability of grant-free uplink data with matched filtering.

Notation: gamma0 is the average received SNR per user, K_c = K - 1 the number
of interferers, r = R / (m_D * T_s * N_D * delta_f) the rate in bits per
channel use, n = N_D * m_D the blocklength.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy import integrate, special, stats

PERFECT, ERROR = "perfect", "error"


class NumericError(RuntimeError):
    pass


def capacity(x):
    return np.log2(1.0 + np.asarray(x, dtype=float))


def dispersion(x):
    return 1.0 - 1.0 / (1.0 + np.asarray(x, dtype=float)) ** 2


def qfunc(z):
    return special.ndtr(-np.asarray(z, dtype=float))


@dataclass(frozen=True)
class ReliabilityParams:
    gamma0: float = 10.0  # linear
    n_users: int = 12
    n_antennas: int = 128
    n_data: int = 4
    m_data: int = 12
    symbol_time_us: float = 8.93
    delta_f_hz: float = 120e3
    packet_bits: int = 256
    est_error: float = 0.0

    @property
    def n_interferers(self) -> int:
        return self.n_users - 1

    @property
    def blocklength(self) -> int:
        return self.n_data * self.m_data

    @property
    def rate(self) -> float:
        uses = self.m_data * self.symbol_time_us * 1e-6 * self.n_data * self.delta_f_hz
        if uses <= 0:
            raise ValueError("rate undefined for an empty data block")
        return self.packet_bits / uses


@dataclass(frozen=True)
class ReliabilityPoint:
    gamma_asy: float
    P_d: float
    P_e: float
    T_us: float


# SINR ------------------------------------------------------------------


def sinr_asymptotic(p: ReliabilityParams, mode: str = PERFECT) -> float:
    """Large-array matched-filter SINR with perfect or lambda-weighted CSI."""
    g, Kc, N = p.gamma0, p.n_interferers, p.n_antennas
    if mode == PERFECT:
        return N * g / (g * Kc + 1.0)
    if mode == ERROR:
        lam = p.est_error
        if not 0.0 <= lam < 1.0:
            raise ValueError(f"estimation error weight must lie in [0, 1), got {lam}")
        return N * g * (1.0 - lam) / (g * Kc + lam * g + 1.0)
    raise ValueError(f"unknown SINR mode {mode!r}")


def interference_log_pdf(x, p: ReliabilityParams) -> np.ndarray:
    """log f_{K_c}(x): density of gamma0 X / (gamma0 Y + 1), X ~ Gamma(N_T), Y ~ Gamma(K_c)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    g, N, Kc = p.gamma0, p.n_antennas, p.n_interferers
    out = np.full(x.shape, -np.inf)
    pos = x > 0
    xp = x[pos]
    base = (N - 1) * np.log(xp) - xp / g - special.gammaln(N) - N * np.log(g)
    if Kc == 0:
        out[pos] = base
        return out
    i = np.arange(N + 1)
    log_coef = (
        special.gammaln(N + 1) - special.gammaln(i + 1) - special.gammaln(N - i + 1)
        + i * np.log(g) + special.gammaln(Kc + i) - special.gammaln(Kc)
    )
    terms = log_coef[None, :] - (Kc + i)[None, :] * np.log1p(xp)[:, None]
    out[pos] = base + special.logsumexp(terms, axis=1)
    return out


def interference_pdf(x, p: ReliabilityParams):
    vals = np.exp(interference_log_pdf(x, p))
    return vals[0] if np.ndim(x) == 0 else vals


def sample_sinr(p: ReliabilityParams, draws: int, seed=None) -> np.ndarray:
    rng = np.random.default_rng(seed)
    X = rng.gamma(p.n_antennas, 1.0, draws)
    Y = rng.gamma(p.n_interferers, 1.0, draws) if p.n_interferers else np.zeros(draws)
    return p.gamma0 * X / (p.gamma0 * Y + 1.0)


def _support(p: ReliabilityParams, tail: float = 1e-12) -> float:
    # the interference-free Gamma(N_T, gamma0) variable dominates the SINR
    return float(stats.gamma.isf(tail, p.n_antennas, scale=p.gamma0))


def _breakpoints(p: ReliabilityParams, upper: float) -> list[float]:
    lo = stats.gamma.ppf(1e-9, p.n_antennas, scale=p.gamma0) / (p.gamma0 * max(p.n_interferers, 1) * 8 + 1)
    pts = np.geomspace(max(lo, 1e-12), upper, 24)
    return [0.0, *[float(v) for v in pts if v < upper], upper]


def _integrate(fun, p: ReliabilityParams, extra: Iterable[float] = (), epsabs: float = 1e-8) -> float:
    upper = _support(p)
    edges = sorted({*_breakpoints(p, upper), *(e for e in extra if 0 < e < upper)})
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        val, err, *info = integrate.quad(fun, a, b, epsabs=epsabs / len(edges), epsrel=1e-10, limit=200, full_output=1)
        if len(info) > 1 and err > 10 * epsabs:
            raise NumericError(f"quadrature did not converge on [{a:g}, {b:g}]: {info[1]} (error {err:.2e})")
        total += val
    return total


def pdf_mass(p: ReliabilityParams) -> float:
    return _integrate(lambda x: float(interference_pdf(x, p)), p)


def _q_arg(x, r: float, n: int):
    c, v = capacity(x), dispersion(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (c - r) / np.sqrt(v / n)
    return np.where(v > 0, z, np.where(c > r, np.inf, -np.inf))


def decoding_error_integral(p: ReliabilityParams) -> float:
    """Average of the normal-approximation error over the SINR density."""
    r, n = p.rate, p.blocklength
    if n < 1:
        raise ValueError("blocklength must be positive")
    crossing = 2.0**r - 1.0  # where C(x) = r

    def fun(x: float) -> float:
        return float(qfunc(_q_arg(x, r, n)) * interference_pdf(x, p))

    return min(1.0, max(0.0, _integrate(fun, p, extra=(crossing,))))


def decoding_error_mc(p: ReliabilityParams, draws: int = 10**6, seed=None) -> float:
    x = sample_sinr(p, draws, seed)
    return float(np.mean(qfunc(_q_arg(x, p.rate, p.blocklength))))


def decoding_error_asymptotic(gamma_asy: float, p: ReliabilityParams) -> float:
    if gamma_asy < 0:
        raise ValueError("SINR must be non-negative")
    if gamma_asy == 0:
        return 1.0 if p.rate > 0 else 0.0
    return float(qfunc(_q_arg(gamma_asy, p.rate, p.blocklength)))


def failure_probability(P_d: float) -> float:
    """One retransmission: both attempts must fail."""
    if not 0.0 <= P_d <= 1.0:
        raise ValueError(f"P_d = {P_d} is not a probability")
    return P_d * P_d


def failure_probability_time_form(p: ReliabilityParams, mode: str = PERFECT) -> float:
    """Failure probability with the Q argument written in time-frequency units.

    sqrt(N_D m_D T_s) (C - R / (m_D T_s N_D df)) / sqrt(V T_s); the T_s
    factors cancel against the blocklength form.
    """
    g = sinr_asymptotic(p, mode)
    Ts = p.symbol_time_us * 1e-6
    rate = p.packet_bits / (p.m_data * Ts * p.n_data * p.delta_f_hz)
    z = math.sqrt(p.n_data * p.m_data * Ts) * (float(capacity(g)) - rate) / math.sqrt(float(dispersion(g)) * Ts)
    return float(qfunc(z)) ** 2


# latency ---------------------------------------------------------------


def latency_us(n_users: int, m_data: int, symbol_time_us: float, t_extra_us: float) -> float:
    return (n_users + 2 + m_data) * symbol_time_us + t_extra_us


def latency_budget(
    n_users: int, m_data: int, symbol_time_us: float, t_extra_us: float, t_con_us: float = 1000.0
) -> tuple[float, bool]:
    T = latency_us(n_users, m_data, symbol_time_us, t_extra_us)
    return T, T <= t_con_us


def max_data_symbols(n_users: int, symbol_time_us: float, t_extra_us: float, t_con_us: float = 1000.0) -> int:
    """Largest m_D keeping the total latency within t_con_us (may be <= 0 when infeasible)."""
    m_E = n_users + 2
    # tiny slack absorbs float error when the budget divides exactly
    return math.floor((t_con_us - m_E * symbol_time_us - t_extra_us) / symbol_time_us + 1e-9)


def reliability_point(p: ReliabilityParams, mode: str = PERFECT, t_extra_us: float = 100.0) -> ReliabilityPoint:
    g = sinr_asymptotic(p, mode)
    P_d = decoding_error_asymptotic(g, p)
    return ReliabilityPoint(g, P_d, failure_probability(P_d), latency_us(p.n_users, p.m_data, p.symbol_time_us, t_extra_us))


def sweep(p: ReliabilityParams, variable: str, values: Iterable, mode: str = PERFECT, t_extra_us: float = 100.0):
    """(value, ReliabilityPoint) pairs over one ReliabilityParams field."""
    return [(v, reliability_point(replace(p, **{variable: v}), mode, t_extra_us)) for v in values]


def write_curve(path: str | Path, rows, comments: dict | None = None, extra: dict | None = None) -> None:
    """CSV with columns sweep_variable, P_d, P_e, gamma_asy, T_us (+ extra constant columns)."""
    extra = extra or {}
    with open(path, "w", newline="") as fh:
        for k, v in (comments or {}).items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh)
        w.writerow(["sweep_variable", "P_d", "P_e", "gamma_asy", "T_us", *extra])
        for v, pt in rows:
            w.writerow([v, repr(pt.P_d), repr(pt.P_e), repr(pt.gamma_asy), repr(pt.T_us), *extra.values()])


def params_dict(p: ReliabilityParams) -> dict:
    return asdict(p)
