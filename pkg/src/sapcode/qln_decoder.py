"""Five-layer decoder: signal counting, independence codes, AMD, digit attribution, recovery."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence

import numpy as np

from .phy_sim import AttackMode, Seed, SubcarrierObservation, as_rng, crandn
from .quantum_core import run_parity_circuit
from .superimposed_code import Codebook, DecodeFailure, StackedCodebook, to_mask

ZETA = 0.5


class CalibrationError(ValueError):
    def __init__(self, message: str, achieved: float | None = None):
        super().__init__(message)
        self.achieved = achieved


class Membership(Protocol):
    def is_member(self, mask: int, order: int) -> bool: ...


def _book_of(S: Codebook | StackedCodebook) -> Codebook:
    return S.book if isinstance(S, StackedCodebook) else S


# signal counting ---------------------------------------------------------


def eigen_ratios(Y: np.ndarray, noise_power: float = 1.0) -> np.ndarray:
    """T_k = lambda_k / lambda_1 (ascending) of Y^H Y / sigma^2; batched over leading axes."""
    R = np.einsum("...im,...in->...mn", Y.conj(), Y) / noise_power
    lam = np.linalg.eigvalsh(R)
    return lam / lam[..., :1]


def count_signals(obs: SubcarrierObservation, threshold: float, n_users: int | None = None) -> int:
    """Number of signal eigenvalues: statistics T_k, k = 2..M, above ``threshold``.

    The ratios are sorted, so the count equals M + 1 - k* with k* the smallest
    exceeding index.
    """
    Y = obs.Y
    N, M = Y.shape
    if n_users is not None and M < n_users + 2:
        raise ValueError(f"need {n_users + 2} symbol columns, observation has {M}")
    if N < M:
        raise ValueError(f"{N} antennas cannot resolve {M} symbol dimensions")
    T = eigen_ratios(Y, obs.noise_power)
    return int(np.count_nonzero(T[1:] > threshold))


def count_all(obs: Sequence[SubcarrierObservation], threshold: float, n_users: int | None = None) -> np.ndarray:
    if n_users is not None:
        for o in obs:
            if o.n_symbols < n_users + 2:
                raise ValueError(f"need {n_users + 2} symbol columns, observation has {o.n_symbols}")
    Y = np.stack([o.Y for o in obs])
    T = eigen_ratios(Y, obs[0].noise_power)
    return np.count_nonzero(T[:, 1:] > threshold, axis=1)


def mp_ratio_bound(n_antennas: int, n_symbols: int) -> float:
    """((1 + sqrt(c)) / (1 - sqrt(c)))^2 with c = M / N_T: asymptotic noise-only eigenvalue spread."""
    c = n_symbols / n_antennas
    if c >= 1:
        raise ValueError("Marchenko-Pastur ratio bound needs M < N_T")
    s = math.sqrt(c)
    return ((1 + s) / (1 - s)) ** 2


def noise_max_ratios(n_antennas: int, n_symbols: int, trials: int, seed: Seed, batch: int = 2000) -> np.ndarray:
    """lambda_max / lambda_min of noise-only Gram matrices, one per draw."""
    rng = as_rng(seed)
    out = np.empty(trials)
    for start in range(0, trials, batch):
        n = min(batch, trials - start)
        Y = crandn(rng, (n, n_antennas, n_symbols))
        out[start : start + n] = eigen_ratios(Y)[:, -1]
    return out


def calibrate_threshold(
    n_antennas: int,
    n_users: int,
    target_pf: float = 0.0,
    trials: int = 10_000,
    seed: Seed = 0,
) -> float:
    """Smallest threshold with empirical noise-only false alarm <= ``target_pf``.

    Floored at the Marchenko-Pastur ratio bound.
    """
    if trials < 10_000:
        raise CalibrationError(f"calibration needs at least 10^4 trials, got {trials}")
    if not 0.0 <= target_pf <= 1.0:
        raise CalibrationError(f"target false alarm {target_pf} outside [0, 1]")
    if 0.0 < target_pf < 1.0 / trials:
        raise CalibrationError(
            f"target {target_pf:g} below the resolution of {trials} trials", achieved=1.0 / trials
        )
    M = n_users + 2
    ratios = np.sort(noise_max_ratios(n_antennas, M, trials, seed))
    allowed = int(math.floor(target_pf * trials + 1e-9))
    # a draw raises a false alarm when its largest ratio strictly exceeds the threshold
    thr = 0.0 if allowed >= trials else float(ratios[trials - 1 - allowed])
    return max(thr, mp_ratio_bound(n_antennas, M))


def false_alarm_rate(threshold: float, n_antennas: int, n_users: int, trials: int, seed: Seed) -> float:
    ratios = noise_max_ratios(n_antennas, n_users + 2, trials, seed)
    return float(np.mean(ratios > threshold))


# independence features -----------------------------------------------------


@dataclass(frozen=True)
class FeatureVector:
    m_I: np.ndarray  # signal counts per TRP subcarrier
    D: np.ndarray  # differential-code matrix, row i = d_i

    @property
    def b_I(self) -> np.ndarray:
        return (self.m_I >= 1).astype(np.uint8)

    @property
    def length(self) -> int:
        return len(self.m_I)

    def a(self, j: int) -> np.ndarray:
        """b_I with digit j zeroed."""
        out = self.b_I.copy()
        out[j] = 0
        return out

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["subcarrier", "M", "b", "d"])
            for i, (m, b) in enumerate(zip(self.m_I, self.b_I)):
                w.writerow([i, int(m), int(b), "".join(str(int(x)) for x in self.D[i])])


def extract_independence(
    obs: Sequence[SubcarrierObservation],
    occupancy: np.ndarray,
    zeta: float = ZETA,
    symbol: int = 0,
) -> np.ndarray:
    """Differential-code matrix D from normalised inner products at one symbol.

    Idle subcarriers (occupancy 0) are zeroed before the inner products, so
    they contribute digit 0.  Row i is XOR-ed with occupancy[i], which clears
    the diagonal.
    """
    occupancy = np.asarray(occupancy, dtype=np.uint8)
    V = np.stack([o.Y[:, symbol] for o in obs])  # (N_E, N_T)
    V = V * occupancy[:, None]
    norms = np.linalg.norm(V, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    U = V / safe[:, None]
    I = np.abs(U.conj() @ U.T)
    I[norms == 0, :] = 0.0
    I[:, norms == 0] = 0.0
    d = (I > zeta).astype(np.uint8)
    return d ^ occupancy[:, None]


def extract_features(
    obs: Sequence[SubcarrierObservation],
    threshold: float,
    n_users: int | None = None,
    zeta: float = ZETA,
) -> FeatureVector:
    m = count_all(obs, threshold, n_users)
    D = extract_independence(obs, (m >= 1).astype(np.uint8), zeta)
    return FeatureVector(m.astype(int), D)


def ideal_features(book: Codebook, codewords: Sequence[int], attacker: np.ndarray | None = None) -> FeatureVector:
    """Error-free features: exact counts, and every occupied subcarrier independent of the others."""
    m = book.words[list(codewords)].sum(axis=0).astype(int)
    if attacker is not None:
        m = m + np.asarray(attacker, dtype=int)
    b = (m >= 1).astype(np.uint8)
    D = np.repeat(b[:, None], len(b), axis=1)
    np.fill_diagonal(D, 0)
    return FeatureVector(m, D)


# attack-mode detection -------------------------------------------------------


@dataclass(frozen=True)
class AmdVerdict:
    A: int  # 1: WB-PJ, 0: SC, -1: PB-PJ
    b_A: np.ndarray

    @property
    def mode(self) -> AttackMode:
        return {1: AttackMode.WB_PJ, 0: AttackMode.SC, -1: AttackMode.PB_PJ}[self.A]


def _weight_sum(book: Codebook, mask: int, order: int) -> int | None:
    """Total weight of the constituents of ``mask`` if it is an OR of exactly ``order`` codewords."""
    if not book.is_member(mask, order):
        return None
    return int(sum(book.weights[i] for i in book.contained(mask)))


def detect_attack_mode(f: FeatureVector, S: Codebook | StackedCodebook, n_users: int) -> AmdVerdict:
    """Classify the attack from (D, b_I, m_I).

    WB-PJ needs D all-ones off the diagonal and the decremented occupancy
    1[M_i >= 2] to be an OR of K codewords whose weights sum to sum(M_i - 1).
    SC needs b_I in B_K with weights summing to sum(M_i).  Anything else is PB-PJ.
    """
    book = _book_of(S)
    K = n_users
    off = ~np.eye(f.length, dtype=bool)
    if np.all(f.D[off] == 1):
        b_bar = (f.m_I >= 2).astype(np.uint8)
        w = _weight_sum(book, to_mask(b_bar), K)
        if w is not None and w == int(np.sum(f.m_I - 1)):
            return AmdVerdict(1, b_bar)
    w = _weight_sum(book, to_mask(f.b_I), K)
    if w is not None and w == int(np.sum(f.m_I)):
        return AmdVerdict(0, f.b_I.copy())
    return AmdVerdict(-1, f.b_I.copy())


# digit attribution -----------------------------------------------------------


def consistent_hypotheses(
    book: Codebook, m_I: np.ndarray, n_users: int, limit: int = 64, max_nodes: int = 200_000
) -> list[tuple[int, ...]]:
    """K-sets of codewords, one per distinct allocated cluster, whose count vector
    c_S leaves a residual m_I - c_S in {0, 1} (a single attacker)."""
    m = np.asarray(m_I, dtype=int)
    mask = to_mask((m >= 1).astype(np.uint8))
    by_cluster: dict[int, list[int]] = {}
    for i in book.contained(mask):
        g = book.cluster_of(i)
        if g is not None:
            by_cluster.setdefault(g, []).append(i)
    clusters = sorted(by_cluster)
    words = book.words.astype(int)
    found: list[tuple[int, ...]] = []
    nodes = 0

    def walk(start: int, chosen: list[int], residual: np.ndarray) -> None:
        nonlocal nodes
        if len(found) >= limit or nodes >= max_nodes:
            return
        if len(chosen) == n_users:
            if residual.max(initial=0) <= 1:
                found.append(tuple(chosen))
            return
        for ci in range(start, len(clusters) - (n_users - len(chosen)) + 1):
            for i in by_cluster[clusters[ci]]:
                nodes += 1
                r = residual - words[i]
                if r.min() < 0:
                    continue
                walk(ci + 1, chosen + [i], r)

    walk(0, [], m)
    return found


def _dispensable(book: Codebook, hyps: Sequence[tuple[int, ...]], j: int) -> bool:
    return bool(hyps) and all(book.words[i, j] == 0 for h in hyps for i in h)


G3 = Callable[[int], int]


def build_g3(
    j: int,
    f: FeatureVector,
    verdict: AmdVerdict,
    S: Codebook | StackedCodebook,
    n_users: int,
    rule: str = "consistent",
    hypotheses: Sequence[tuple[int, ...]] | None = None,
) -> G3:
    """Two-point identification function for digit j.

    g3(0) = F1: 0 iff b_A is in B_{K+1}.
    g3(1) = F2 when b_A is in B_{K+1} (0 iff digit j can go), else F3 (1 iff it can).

    With ``rule="literal"`` "can go" means a(j) is in B_K, which only resolves
    attackers with a single digit outside the users' OR.  ``"consistent"``
    means no count-consistent user hypothesis occupies digit j.
    """
    book = _book_of(S)
    K = n_users
    in_k1 = S.is_member(to_mask(verdict.b_A), K + 1) if K + 1 <= book.params.K + 1 else False
    if rule == "literal":
        removable = S.is_member(to_mask(f.a(j)), K)
    elif rule == "consistent":
        hyps = consistent_hypotheses(book, f.m_I, K) if hypotheses is None else hypotheses
        removable = _dispensable(book, hyps, j)
    else:
        raise ValueError(f"unknown attribution rule {rule!r}")
    y1 = 0 if in_k1 else 1
    y_x1 = (0 if removable else 1) if in_k1 else (1 if removable else 0)

    def g3(x: int) -> int:
        return y1 if x == 0 else y_x1

    return g3


@dataclass(frozen=True)
class DigitAttribution:
    B: np.ndarray
    D1: tuple[int, ...]
    D2: tuple[int, ...]
    queries: int


def attribute_digit(g3: G3, path: str = "quantum") -> int:
    """B_j = 1 iff g3 is constant (parity 0)."""
    if path == "quantum":
        parity = run_parity_circuit(g3)
    elif path == "classical":
        parity = g3(0) ^ g3(1)
    else:
        raise ValueError(f"unknown path {path!r}")
    return 1 - parity


def attribute_digits(
    f: FeatureVector,
    verdict: AmdVerdict,
    S: Codebook | StackedCodebook,
    n_users: int,
    path: str = "quantum",
    rule: str = "consistent",
) -> DigitAttribution:
    N = f.length
    if verdict.A == 1:
        return DigitAttribution(np.ones(N, dtype=np.uint8), (), tuple(range(N)), 0)
    if verdict.A == 0:
        return DigitAttribution(np.zeros(N, dtype=np.uint8), (), (), 0)
    book = _book_of(S)
    D1 = tuple(int(j) for j in np.flatnonzero((f.m_I == 1) & (verdict.b_A == 1)))
    hyps = consistent_hypotheses(book, f.m_I, n_users) if rule == "consistent" and D1 else None
    B = np.zeros(N, dtype=np.uint8)
    for j in D1:
        B[j] = attribute_digit(build_g3(j, f, verdict, S, n_users, rule, hyps), path)
    queries = len(D1) * (1 if path == "quantum" else 2)
    return DigitAttribution(B, D1, tuple(int(j) for j in np.flatnonzero(B)), queries)


# recovery ----------------------------------------------------------------------


@dataclass(frozen=True)
class AccessReport:
    attack_label: str
    user_ids: tuple[int, ...]
    codeword_indices: tuple[int, ...]
    phases: tuple[float, ...]
    status: str  # "success" | "decode-failure"
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "success"

    def to_json(self) -> str:
        d = asdict(self)
        d["user_ids"] = list(self.user_ids)
        d["codeword_indices"] = list(self.codeword_indices)
        d["phases"] = list(self.phases)
        return json.dumps(d)


def detect_and_recover(
    verdict: AmdVerdict,
    attribution: DigitAttribution,
    m_I: np.ndarray,
    S: Codebook | StackedCodebook,
    n_users: int,
) -> AccessReport:
    book = _book_of(S)
    label = verdict.mode.value
    m = np.asarray(m_I, dtype=int)

    def failure(why: str) -> AccessReport:
        return AccessReport(label, (), (), (), "decode-failure", why)

    if verdict.A == 1:
        target, expected = (m >= 2).astype(np.uint8), lambda c: np.array_equal(c, m - 1)
    elif verdict.A == 0:
        target, expected = verdict.b_A, lambda c: np.array_equal(c, m)
    else:
        target = verdict.b_A * (1 - attribution.B)

        def expected(c):
            r = m - c
            return r.min() >= 0 and r.max() <= 1

    try:
        cws = book.decompose(target.astype(np.uint8), max_order=min(n_users, book.params.K))
    except DecodeFailure as exc:
        return failure(str(exc))
    if len(cws) != n_users:
        return failure(f"{len(cws)} codewords recovered, {n_users} users expected")
    counts = book.words[list(cws)].sum(axis=0).astype(int)
    if not expected(counts):
        return failure("recovered codewords disagree with the signal counts")
    users = [book.cluster_of(c) for c in cws]
    if None in users or len(set(users)) != len(users):
        return failure("recovered codewords do not map to distinct user clusters")
    return AccessReport(
        label, tuple(int(u) for u in users), tuple(int(c) for c in cws), tuple(book.phase_for(c) for c in cws), "success"
    )


@dataclass(frozen=True)
class DecodeResult:
    features: FeatureVector
    verdict: AmdVerdict
    attribution: DigitAttribution
    report: AccessReport


def decode_features(
    f: FeatureVector,
    S: Codebook | StackedCodebook,
    n_users: int,
    path: str = "quantum",
    rule: str = "consistent",
) -> DecodeResult:
    verdict = detect_attack_mode(f, S, n_users)
    attribution = attribute_digits(f, verdict, S, n_users, path, rule)
    report = detect_and_recover(verdict, attribution, f.m_I, S, n_users)
    return DecodeResult(f, verdict, attribution, report)


def decode_burst(
    obs: Sequence[SubcarrierObservation],
    threshold: float,
    S: Codebook | StackedCodebook,
    n_users: int,
    zeta: float = ZETA,
    path: str = "quantum",
    rule: str = "consistent",
) -> DecodeResult:
    f = extract_features(obs, threshold, n_users, zeta)
    return decode_features(f, S, n_users, path, rule)
