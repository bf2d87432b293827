"""Uplink SIMO-OFDM world: channels, SAP pilot bursts, LS estimation, matched filtering.

Frequency grid
--------------
Subcarriers live on an ``n_fft``-point grid.  Channel-estimation subcarriers
take the even indices, data subcarriers the first ``n_data`` odd indices and,
in ``"taps"`` TRP mode, TRP subcarriers the odd indices after those.  The
frequency response of tap vector h on subcarrier j is F_L[j] @ h with
F_L[j, l] = exp(-2j*pi*j*l/n_fft).

TRP subcarriers default to ``"independent"`` fading: one pilot every few
subcarriers is assumed to see independent channel variations, which an
L-tap model cannot provide for more than L subcarriers.
"""
from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .superimposed_code import Codebook

Seed = int | np.random.Generator | np.random.SeedSequence | None


def as_rng(seed: Seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def crandn(rng: np.random.Generator, shape, var: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with variance ``var``."""
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


class AllocationError(ValueError):
    pass


class EstimationError(ValueError):
    pass


class AttackMode(str, enum.Enum):
    SC = "SC"
    WB_PJ = "WB-PJ"
    PB_PJ = "PB-PJ"


@dataclass(frozen=True)
class SystemConfig:
    """Physical-layer parameters.  Times in microseconds, powers linear."""

    n_antennas: int = 128
    n_users: int = 12  # active users K
    n_ce: int = 128
    n_data: int = 4
    m_data: int = 12
    delta_f_hz: float = 120e3
    symbol_time_us: float = 8.93
    t_extra_us: float = 100.0
    t_con_us: float = 1000.0
    n_taps: int = 6
    noise_power: float = 1.0
    pilot_power: float = 10.0
    attacker_power: float = 10.0
    data_snr: float = 10.0
    est_error: float = 0.0
    trp_channel: str = "independent"

    def __post_init__(self):
        if self.n_taps < 1:
            raise ValueError("need at least one channel tap")
        if self.n_ce < self.n_taps:
            raise ValueError("n_ce must be >= n_taps for LS estimation")
        if not 0.0 <= self.est_error < 1.0:
            raise ValueError(f"est_error must lie in [0, 1), got {self.est_error}")
        if self.trp_channel not in ("independent", "taps"):
            raise ValueError(f"unknown trp_channel {self.trp_channel!r}")

    @property
    def m_trp(self) -> int:
        return self.n_users + 2

    @property
    def latency_us(self) -> float:
        return (self.m_trp + self.m_data) * self.symbol_time_us + self.t_extra_us

    def n_fft(self, n_trp: int = 0) -> int:
        odd_needed = self.n_data + (n_trp if self.trp_channel == "taps" else 0)
        return 2 * max(self.n_ce, odd_needed)

    def layout(self, n_trp: int) -> dict[str, np.ndarray]:
        """Disjoint subcarrier index sets on the FFT grid."""
        odd = 2 * np.arange(self.n_fft(n_trp) // 2) + 1
        return {
            "ce": 2 * np.arange(self.n_ce),
            "data": odd[: self.n_data],
            "trp": odd[self.n_data : self.n_data + n_trp],
        }

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def dft_rows(rows: np.ndarray, n_taps: int, n_fft: int) -> np.ndarray:
    """F_L restricted to ``rows``: shape (len(rows), n_taps), unit-modulus entries."""
    return np.exp(-2j * np.pi * np.outer(rows, np.arange(n_taps)) / n_fft)


@dataclass(frozen=True)
class ChannelSet:
    """One coherent channel realisation.

    ``user_taps``: (K, N_T, L); ``attacker_taps``: (N_T, L); ``user_trp`` and
    ``attacker_trp`` are TRP-subcarrier responses of shape (K, N_E, N_T) and
    (N_E, N_T).
    """

    user_taps: np.ndarray
    attacker_taps: np.ndarray
    user_trp: np.ndarray
    attacker_trp: np.ndarray
    n_fft: int

    def response(self, rows: np.ndarray, taps: np.ndarray | None = None) -> np.ndarray:
        """Frequency responses on ``rows``: (K, len(rows), N_T) for user taps."""
        taps = self.user_taps if taps is None else taps
        F = dft_rows(np.asarray(rows), taps.shape[-1], self.n_fft)
        return np.einsum("jl,...il->...ji", F, taps)


def draw_channels(cfg: SystemConfig, seed: Seed, n_trp: int = 0, n_users: int | None = None) -> ChannelSet:
    """Rayleigh taps with a uniform power profile, E|g|^2 = 1 per subcarrier."""
    rng = as_rng(seed)
    K = cfg.n_users if n_users is None else n_users
    L, NT = cfg.n_taps, cfg.n_antennas
    user_taps = crandn(rng, (K, NT, L), 1.0 / L)
    attacker_taps = crandn(rng, (NT, L), 1.0 / L)
    n_fft = cfg.n_fft(n_trp)
    if cfg.trp_channel == "independent":
        user_trp = crandn(rng, (K, n_trp, NT))
        attacker_trp = crandn(rng, (n_trp, NT))
    else:
        rows = cfg.layout(n_trp)["trp"]
        F = dft_rows(rows, L, n_fft)
        user_trp = np.einsum("jl,kil->kji", F, user_taps)
        attacker_trp = np.einsum("jl,il->ji", F, attacker_taps)
    return ChannelSet(user_taps, attacker_taps, user_trp, attacker_trp, n_fft)


# pilot bursts --------------------------------------------------------------


@dataclass(frozen=True)
class AttackScenario:
    mode: AttackMode
    codeword: np.ndarray  # attacker occupancy over the TRP subcarriers
    power: float

    @property
    def active(self) -> bool:
        return bool(self.codeword.any())


def draw_attack(mode: AttackMode | str, n_trp: int, power: float, seed: Seed) -> AttackScenario:
    """SC: silent; WB-PJ: every subcarrier; PB-PJ: uniform over non-trivial patterns."""
    mode = AttackMode(mode)
    rng = as_rng(seed)
    if mode is AttackMode.SC:
        a = np.zeros(n_trp, dtype=np.uint8)
    elif mode is AttackMode.WB_PJ:
        a = np.ones(n_trp, dtype=np.uint8)
    else:
        if n_trp < 2:
            raise ValueError("PB-PJ needs at least two subcarriers")
        while True:
            a = rng.integers(0, 2, n_trp).astype(np.uint8)
            if 0 < a.sum() < n_trp:
                break
    return AttackScenario(mode, a, power)


@dataclass(frozen=True)
class PilotBurst:
    """Active users: cluster ids, chosen codeword indices and their pilot phases."""

    user_ids: tuple[int, ...]
    codewords: tuple[int, ...]
    phases: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.user_ids)


def draw_active_users(book: Codebook, n_users: int, seed: Seed) -> PilotBurst:
    """Pick ``n_users`` distinct clusters and one codeword from each."""
    rng = as_rng(seed)
    G = book.params.G
    if n_users > G:
        raise AllocationError(f"{n_users} active users but only {G} clusters")
    users = np.sort(rng.choice(G, size=n_users, replace=False))
    size = book.params.cluster_size
    cws = tuple(int(u * size + rng.integers(size)) for u in users)
    return PilotBurst(tuple(int(u) for u in users), cws, tuple(book.phase_for(c) for c in cws))


def pilot_sequences(burst: PilotBurst, n_symbols: int, power: float) -> np.ndarray:
    """(K, n_symbols) pilots: sqrt(power) * exp(j*phase) * DFT row (user id mod n_symbols).

    Rows are mutually orthogonal while the active user ids are distinct modulo
    ``n_symbols``; the same values are sent on TRP and estimation subcarriers.
    """
    k = np.arange(n_symbols)
    rows = [np.exp(2j * np.pi * (u % n_symbols) * k / n_symbols) for u in burst.user_ids]
    phase = np.exp(1j * np.asarray(burst.phases))[:, None]
    return np.sqrt(power) * phase * np.array(rows).reshape(len(burst), n_symbols)


@dataclass(frozen=True)
class SubcarrierObservation:
    Y: np.ndarray  # (N_T, M)
    noise_power: float

    @property
    def n_symbols(self) -> int:
        return self.Y.shape[1]


def _check_allocation(book: Codebook, burst: PilotBurst) -> None:
    for u, c in zip(burst.user_ids, burst.codewords):
        if book.cluster_of(c) != u:
            raise AllocationError(f"codeword {c} is not in cluster {u}")
    if len(set(burst.user_ids)) != len(burst):
        raise AllocationError("active users must be distinct")


def trp_occupancy(book: Codebook, burst: PilotBurst) -> np.ndarray:
    """(K, N_E) per-user subcarrier activation patterns."""
    return book.words[list(burst.codewords)]


def emit_sap_burst(
    book: Codebook,
    burst: PilotBurst,
    attack: AttackScenario,
    channels: ChannelSet,
    cfg: SystemConfig,
    seed: Seed,
) -> list[SubcarrierObservation]:
    """Per-subcarrier received blocks over the M = K+2 TRP symbols."""
    _check_allocation(book, burst)
    rng = as_rng(seed)
    M, NT, N_E = cfg.m_trp, cfg.n_antennas, book.length
    if len(burst) != channels.user_trp.shape[0] or channels.user_trp.shape[1] != N_E:
        raise ValueError("channel set does not match the burst / codebook")
    occ = trp_occupancy(book, burst).astype(float)  # (K, N_E)
    x = pilot_sequences(burst, M, cfg.pilot_power)  # (K, M)
    Y = np.einsum("ki,kin,km->inm", occ, channels.user_trp, x)
    if attack.active:
        jam = np.sqrt(attack.power) * np.exp(2j * np.pi * rng.random((N_E, M)))
        jam *= attack.codeword[:, None]
        Y += channels.attacker_trp[:, :, None] * jam[:, None, :]
    Y += crandn(rng, (N_E, NT, M), cfg.noise_power)
    return [SubcarrierObservation(Y[i], cfg.noise_power) for i in range(N_E)]


def save_observations(obs: list[SubcarrierObservation], path: str | Path) -> None:
    """Raw complex64 little-endian dump plus a JSON sidecar with the dimensions."""
    path = Path(path)
    Y = np.stack([o.Y for o in obs]).astype("<c8")
    Y.tofile(path)
    meta = {
        "dtype": "complex64",
        "byteorder": "little",
        "shape": list(Y.shape),
        "axes": ["subcarrier", "antenna", "symbol"],
        "noise_power": obs[0].noise_power if obs else None,
    }
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2))


def load_observations(path: str | Path) -> list[SubcarrierObservation]:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    Y = np.fromfile(path, dtype="<c8").reshape(meta["shape"])
    return [SubcarrierObservation(Y[i].astype(complex), meta["noise_power"]) for i in range(Y.shape[0])]


# channel estimation ---------------------------------------------------------


@dataclass(frozen=True)
class EstimationResult:
    """Estimated data-subcarrier responses (K, N_D, N_T) and, for LS, the taps."""

    data_response: np.ndarray
    mode: str  # "perfect" | "ls" | "orthogonal" | "literal"
    est_error: float = 0.0
    taps: np.ndarray | None = None
    gain: float = 1.0  # c with E[g | g_hat] = c g_hat


def ls_channel_estimate(
    cfg: SystemConfig,
    channels: ChannelSet,
    pilots: np.ndarray,
    attacker_power: float = 0.0,
    seed: Seed = None,
    noise: bool = True,
) -> EstimationResult:
    """Least-squares tap estimate h_hat = F_L^+ Y x^+ on the estimation subcarriers.

    ``pilots`` is (K, m) with mutually orthogonal rows.  A non-zero
    ``attacker_power`` adds random-phase jamming on every estimation subcarrier.
    """
    rng = as_rng(seed)
    X = np.asarray(pilots)
    K, m = X.shape
    gram = X @ X.conj().T
    diag = np.real(np.diag(gram))
    if np.linalg.matrix_rank(X) < K or np.any(diag <= 0):
        raise EstimationError("pilot matrix is rank deficient")
    off = gram - np.diag(np.diag(gram))
    if np.max(np.abs(off)) > 1e-9 * diag.max():
        raise EstimationError("pilot sequences are not mutually orthogonal")

    layout = cfg.layout(0)
    F = dft_rows(layout["ce"], cfg.n_taps, channels.n_fft)  # (N_CE, L)
    # (N_T, N_CE, m)
    Y = np.einsum("jl,kil,km->ijm", F, channels.user_taps, X)
    if attacker_power > 0:
        xa = np.sqrt(attacker_power) * np.exp(2j * np.pi * rng.random((cfg.n_ce, m)))
        ga = np.einsum("jl,il->ij", F, channels.attacker_taps)
        Y += ga[:, :, None] * xa[None]
    if noise and cfg.noise_power > 0:
        Y += crandn(rng, Y.shape, cfg.noise_power)
    F_pinv = np.linalg.pinv(F)  # (L, N_CE)
    X_pinv = np.linalg.pinv(X)  # (m, K); column k is the pseudo-inverse of row k
    taps = np.einsum("lj,ijm,mk->kil", F_pinv, Y, X_pinv)
    g_hat = channels.response(layout["data"], taps)
    return EstimationResult(g_hat, "ls", 0.0, taps)


def synthetic_estimate(
    cfg: SystemConfig,
    channels: ChannelSet,
    est_error: float | None = None,
    seed: Seed = None,
    model: str = "orthogonal",
) -> EstimationResult:
    """Estimation-error model applied directly to the data-subcarrier responses.

    ``orthogonal``: g_hat = (1-lam) g - sqrt(lam(1-lam)) g_tilde, so the error
    g - g_hat has variance lam and is uncorrelated with g_hat.
    ``literal``: g_hat = (1-lam) g - lam g_tilde, whose conditional mean
    E[g | g_hat] is g_hat scaled by (1-lam) / ((1-lam)^2 + lam^2).
    With lam = 0 both reduce to perfect CSI.
    """
    lam = cfg.est_error if est_error is None else est_error
    if not 0.0 <= lam < 1.0:
        raise ValueError(f"estimation error weight must lie in [0, 1), got {lam}")
    g = channels.response(cfg.layout(0)["data"])
    if lam == 0.0:
        return EstimationResult(g.copy(), "perfect", 0.0)
    rng = as_rng(seed)
    g_tilde = crandn(rng, g.shape)
    if model == "orthogonal":
        g_hat = (1 - lam) * g - np.sqrt(lam * (1 - lam)) * g_tilde
        gain = 1.0
    elif model == "literal":
        g_hat = (1 - lam) * g - lam * g_tilde
        gain = (1 - lam) / ((1 - lam) ** 2 + lam**2)
    else:
        raise ValueError(f"unknown error model {model!r}")
    return EstimationResult(g_hat, model, lam, gain=gain)


# data detection -------------------------------------------------------------


@dataclass(frozen=True)
class MatchedFilterOutput:
    outputs: np.ndarray  # (K, N_D, m_D) filtered samples
    signal_power: float
    interference_power: float
    noise_power: float
    sinr_sampled: float  # same decomposition measured on the drawn symbols

    @property
    def sinr(self) -> float:
        return self.signal_power / (self.interference_power + self.noise_power)


def matched_filter_decode(
    cfg: SystemConfig,
    channels: ChannelSet,
    est: EstimationResult,
    seed: Seed = None,
    n_symbols: int | None = None,
) -> MatchedFilterOutput:
    """Apply (1/N_T) g_hat^H to the data subcarriers and split the output.

    Signal, inter-user and noise powers are expectations over data and noise
    for the realised channels, averaged over users and subcarriers.  The
    desired part uses the receiver's best guess of the channel, E[g | g_hat];
    the remainder of the own-channel gain (estimation error leaking through
    the filter) counts as interference.
    """
    rng = as_rng(seed)
    NT = cfg.n_antennas
    m_D = cfg.m_data if n_symbols is None else n_symbols
    g = channels.response(cfg.layout(0)["data"])  # (K, N_D, N_T)
    g_hat = est.data_response
    K, N_D, _ = g.shape
    gamma = cfg.data_snr

    # A[m, j, p] = (1/N_T) g_hat_{j,m}^H g_{j,p}
    A = np.einsum("mji,pji->mjp", g_hat.conj(), g) / NT
    own = np.einsum("mjm->mj", A)
    known = est.gain * np.sum(np.abs(g_hat) ** 2, axis=2) / NT
    cross = np.sum(np.abs(A) ** 2, axis=2) - np.abs(own) ** 2 + np.abs(own - known) ** 2
    w_gain = np.sum(np.abs(g_hat) ** 2, axis=2) / NT**2

    signal = gamma * float(np.mean(np.abs(known) ** 2))
    interference = gamma * float(np.mean(cross))
    noise = cfg.noise_power * float(np.mean(w_gain))

    d = crandn(rng, (K, N_D, m_D), gamma)
    w = crandn(rng, (N_D, NT, m_D), cfg.noise_power)
    total = np.einsum("mjp,pjk->mjk", A, d)
    sig_part = known[:, :, None] * d
    noise_part = np.einsum("mji,jik->mjk", g_hat.conj(), w) / NT
    outputs = total + noise_part
    sampled = np.mean(np.abs(sig_part) ** 2) / (
        np.mean(np.abs(total - sig_part) ** 2) + np.mean(np.abs(noise_part) ** 2)
    )
    return MatchedFilterOutput(outputs, signal, interference, noise, float(sampled))


def instantaneous_sinr(g: np.ndarray, gamma: float, noise_power: float = 1.0) -> np.ndarray:
    """Per-user matched-filter SINR with perfect CSI.

    ``g`` holds stacked responses (..., K, N_T); returns (..., K).
    """
    gram = np.einsum("...mi,...pi->...mp", g.conj(), g)
    power = np.real(np.einsum("...mm->...m", gram))
    cross = np.sum(np.abs(gram) ** 2, axis=-1) - power**2
    return gamma * power**2 / (gamma * cross + noise_power * power)


def ergodic_sinr(cfg: SystemConfig, trials: int, seed: Seed = None, model: str = "orthogonal") -> float:
    """Matched-filter SINR as mean signal power over mean interference plus noise.

    Powers are averaged over ``trials`` independent channel and estimation-error
    draws before taking the ratio, which is the quantity the large-array limit
    describes.  Averaging per-draw ratios instead is biased upward when few
    interferers are present.
    """
    if trials < 1:
        raise ValueError("need at least one channel draw")
    rng = as_rng(seed)
    S = I = N = 0.0
    for _ in range(trials):
        ch = draw_channels(cfg, rng)
        est = synthetic_estimate(cfg, ch, seed=rng, model=model)
        out = matched_filter_decode(cfg, ch, est, seed=rng, n_symbols=1)
        S += out.signal_power
        I += out.interference_power
        N += out.noise_power
    return S / (I + N)
