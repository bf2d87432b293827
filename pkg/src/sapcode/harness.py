"""Experiment orchestration: configs, Monte Carlo trials, figure data."""
from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from functools import lru_cache
from pathlib import Path
from typing import Any, Iterable, Iterator

import numpy as np

from . import phy_sim, qln_decoder, reliability
from .phy_sim import AttackMode, SystemConfig
from .superimposed_code import CodeParameterError, CodeParams, code_rate, construct_codebook, min_length


class ConfigError(ValueError):
    pass


MIXED = "mixed"
_MODES = [m.value for m in AttackMode]
DEFAULT_SYSTEM = SystemConfig(n_users=3)


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemConfig = DEFAULT_SYSTEM
    q: int = 11
    k: int = 2
    code_K: int = 10
    G: int = 5
    attack_mode: str = "SC"  # one of SC, WB-PJ, PB-PJ, mixed
    trials: int = 100
    seed: int = 0
    out: str | None = None
    features: str = "measured"  # measured | ideal
    attribution_path: str = "quantum"
    attribution_rule: str = "consistent"
    threshold: float | None = None
    calibration_trials: int = 100_000
    measure_sinr: bool = True
    workers: int = 1
    sweep: dict | None = None  # {"variable": name, "start": a, "stop": b, "step": s}

    @property
    def code(self) -> CodeParams:
        return CodeParams(self.q, self.k, self.code_K, self.G)

    def validate(self) -> None:
        s = self.system
        try:
            self.code.validate()
        except CodeParameterError as exc:
            raise ConfigError(str(exc)) from exc
        if self.attack_mode not in (*_MODES, MIXED):
            raise ConfigError(f"attack_mode must be one of {_MODES + [MIXED]}, got {self.attack_mode!r}")
        if self.trials < 0:
            raise ConfigError("trials must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if s.n_users < 1 or s.n_users > self.code_K:
            raise ConfigError(f"n_users={s.n_users} must lie in [1, code_K={self.code_K}]")
        if s.n_users > self.G:
            raise ConfigError(f"n_users={s.n_users} exceeds the {self.G} user clusters")
        if s.n_antennas <= s.m_trp:
            raise ConfigError("n_antennas must exceed the K+2 TRP symbols")
        if self.features not in ("measured", "ideal"):
            raise ConfigError(f"features must be 'measured' or 'ideal', got {self.features!r}")
        if self.attribution_path not in ("quantum", "classical"):
            raise ConfigError(f"unknown attribution path {self.attribution_path!r}")
        if self.attribution_rule not in ("consistent", "literal"):
            raise ConfigError(f"unknown attribution rule {self.attribution_rule!r}")
        if self.threshold is None and self.features == "measured" and self.calibration_trials < 10_000:
            raise ConfigError("calibration needs at least 10^4 trials")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        _, feasible = reliability.latency_budget(s.n_users, s.m_data, s.symbol_time_us, s.t_extra_us, s.t_con_us)
        if not feasible:
            raise ConfigError("TRP plus data symbols exceed the latency cap t_con_us")
        if self.sweep is not None:
            if set(self.sweep) != {"variable", "start", "stop", "step"}:
                raise ConfigError("sweep needs exactly variable, start, stop, step")
            if self.sweep["step"] <= 0:
                raise ConfigError("sweep step must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(d.pop("system"))
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        sys_names = {f.name for f in fields(SystemConfig)}
        own_names = {f.name for f in fields(cls)} - {"system"}
        unknown = set(data) - sys_names - own_names
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            system = replace(DEFAULT_SYSTEM, **{k: v for k, v in data.items() if k in sys_names})
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return cls(system=system, **{k: v for k, v in data.items() if k in own_names})


def load_config(path: str | Path | None, **overrides) -> ExperimentConfig:
    data: dict[str, Any] = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
    data.update({k: v for k, v in overrides.items() if v is not None})
    cfg = ExperimentConfig.from_dict(data)
    cfg.validate()
    return cfg


# trials --------------------------------------------------------------------


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    seed: int
    attack_truth: str
    amd_verdict: str
    uad_exact: bool
    pilot_exact: bool
    status: str
    sinr: float
    t_features_s: float
    t_decode_s: float

    @classmethod
    def header(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> list:
        return [repr(v) if isinstance(v, float) else v for v in asdict(self).values()]

    @classmethod
    def from_row(cls, row: dict[str, str]) -> "TrialRecord":
        def boolean(s: str) -> bool:
            return s == "True"

        return cls(
            int(row["trial"]), int(row["seed"]), row["attack_truth"], row["amd_verdict"],
            boolean(row["uad_exact"]), boolean(row["pilot_exact"]), row["status"],
            float(row["sinr"]), float(row["t_features_s"]), float(row["t_decode_s"]),
        )


@dataclass(frozen=True)
class Summary:
    trials: int
    amd_accuracy: float
    uad_rate: float
    pilot_rate: float
    mean_sinr: float
    per_mode: dict[str, dict[str, float]]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def summarize(records: Iterable[TrialRecord]) -> Summary:
    recs = list(records)

    def rates(rs: list[TrialRecord]) -> dict[str, float]:
        n = len(rs)
        if n == 0:
            return {"trials": 0, "amd_accuracy": math.nan, "uad_rate": math.nan, "pilot_rate": math.nan}
        return {
            "trials": n,
            "amd_accuracy": sum(r.amd_verdict == r.attack_truth for r in rs) / n,
            "uad_rate": sum(r.uad_exact for r in rs) / n,
            "pilot_rate": sum(r.pilot_exact for r in rs) / n,
        }

    overall = rates(recs)
    sinrs = [r.sinr for r in recs if not math.isnan(r.sinr)]
    per_mode = {m: rates([r for r in recs if r.attack_truth == m]) for m in _MODES}
    per_mode = {m: v for m, v in per_mode.items() if v["trials"]}
    return Summary(
        len(recs),
        overall["amd_accuracy"],
        overall["uad_rate"],
        overall["pilot_rate"],
        float(np.mean(sinrs)) if sinrs else math.nan,
        per_mode,
    )


def trial_seed(master: int, trial: int) -> int:
    """Per-trial seed from (master seed, trial counter); independent of scheduling."""
    return int(np.random.SeedSequence([master, trial]).generate_state(2, np.uint32).view(np.uint64)[0])


@lru_cache(maxsize=8)
def _codebook(params: CodeParams):
    return construct_codebook(params)


def _mode_for(cfg: ExperimentConfig, trial: int) -> AttackMode:
    if cfg.attack_mode == MIXED:
        return AttackMode(_MODES[trial % len(_MODES)])
    return AttackMode(cfg.attack_mode)


def run_trial(cfg: ExperimentConfig, trial: int, threshold: float | None) -> TrialRecord:
    s = cfg.system
    book = _codebook(cfg.code)
    seed = trial_seed(cfg.seed, trial)
    r_users, r_chan, r_att, r_obs, r_est, r_data = np.random.SeedSequence(seed).spawn(6)
    mode = _mode_for(cfg, trial)
    burst = phy_sim.draw_active_users(book, s.n_users, r_users)
    attack = phy_sim.draw_attack(mode, book.length, s.attacker_power, r_att)
    channels = phy_sim.draw_channels(s, r_chan, n_trp=book.length)

    t0 = time.perf_counter()
    if cfg.features == "ideal":
        f = qln_decoder.ideal_features(book, burst.codewords, attack.codeword)
    else:
        obs = phy_sim.emit_sap_burst(book, burst, attack, channels, s, r_obs)
        f = qln_decoder.extract_features(obs, threshold, s.n_users)
    t1 = time.perf_counter()
    res = qln_decoder.decode_features(f, book, s.n_users, cfg.attribution_path, cfg.attribution_rule)
    t2 = time.perf_counter()

    sinr = math.nan
    if cfg.measure_sinr:
        est = phy_sim.synthetic_estimate(s, channels, seed=r_est)
        sinr = phy_sim.matched_filter_decode(s, channels, est, seed=r_data).sinr

    rep = res.report
    return TrialRecord(
        trial, seed, mode.value, res.verdict.mode.value,
        rep.ok and rep.user_ids == tuple(burst.user_ids),
        rep.ok and rep.codeword_indices == tuple(sorted(burst.codewords)),
        rep.status, sinr, t1 - t0, t2 - t1,
    )


def _run_chunk(args) -> list[TrialRecord]:
    cfg, trials, threshold = args
    return [run_trial(cfg, t, threshold) for t in trials]


def scenario_threshold(cfg: ExperimentConfig) -> float | None:
    if cfg.features == "ideal":
        return None
    if cfg.threshold is not None:
        return cfg.threshold
    s = cfg.system
    return qln_decoder.calibrate_threshold(
        s.n_antennas, s.n_users, 0.0, cfg.calibration_trials, seed=np.random.SeedSequence([cfg.seed, 2**32])
    )


def iter_scenario(cfg: ExperimentConfig, threshold: float | None = None) -> Iterator[TrialRecord]:
    """TrialRecords in trial order; the same for any worker count."""
    cfg.validate()
    if cfg.trials == 0:
        return
    threshold = scenario_threshold(cfg) if threshold is None else threshold
    if cfg.workers == 1:
        for t in range(cfg.trials):
            yield run_trial(cfg, t, threshold)
        return
    size = max(1, math.ceil(cfg.trials / (4 * cfg.workers)))
    chunks = [(cfg, range(a, min(a + size, cfg.trials)), threshold) for a in range(0, cfg.trials, size)]
    with ProcessPoolExecutor(cfg.workers) as pool:
        for recs in pool.map(_run_chunk, chunks):
            yield from recs


def run_scenario(cfg: ExperimentConfig, threshold: float | None = None) -> tuple[Summary, list[TrialRecord]]:
    records = list(iter_scenario(cfg, threshold))
    return summarize(records), records


def comment_lines(cfg: dict) -> str:
    return "".join(f"# {k}: {json.dumps(v)}\n" for k, v in cfg.items())


def write_records(path: str | Path, records: Iterable[TrialRecord], header: dict | None = None) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(comment_lines(header or {}))
        w = csv.writer(fh)
        w.writerow(TrialRecord.header())
        for r in records:
            w.writerow(r.row())


def read_csv(path: str | Path) -> tuple[dict, list[dict[str, str]]]:
    """(comment header, rows) of a CSV written by this module."""
    meta, body = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition(": ")
                try:
                    meta[key] = json.loads(value)
                except json.JSONDecodeError:
                    meta[key] = value
            else:
                body.append(line)
    return meta, list(csv.DictReader(body))


def read_records(path: str | Path) -> list[TrialRecord]:
    return [TrialRecord.from_row(r) for r in read_csv(path)[1]]


# sweeps ----------------------------------------------------------------------


def sweep_values(sweep: dict) -> list:
    start, stop, step = sweep["start"], sweep["stop"], sweep["step"]
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    vals = [start + i * step for i in range(max(n, 0))]
    return [int(v) if all(isinstance(x, int) for x in (start, step)) else float(v) for v in vals]


def run_sweep(cfg: ExperimentConfig) -> list[tuple[Any, Summary]]:
    """One scenario per sweep value; SystemConfig fields or top-level fields may be swept."""
    sweep = cfg.sweep
    if sweep is None:
        raise ConfigError("config has no sweep settings")
    out = []
    for v in sweep_values(sweep):
        data = cfg.to_dict()
        data["sweep"] = None
        if sweep["variable"] not in data:
            raise ConfigError(f"cannot sweep unknown field {sweep['variable']!r}")
        data[sweep["variable"]] = v
        point = ExperimentConfig.from_dict(data)
        point.validate()
        out.append((v, run_scenario(point)[0]))
    return out


# figures -----------------------------------------------------------------------

FIGURE_DEFAULTS: dict[str, dict[str, Any]] = {
    "fig6": {"n_antennas": 128, "users": [12, 16, 20], "thresholds": [2.0, 9.0, 0.1], "trials": 10_000, "seed": 0},
    "fig7": {"k_values": [2, 3], "users": [4, 8], "n_e_max": 400},
    "fig8": {"k_values": [2, 3], "users": [4, 5, 6, 7, 8, 9, 10, 11, 12], "m_data": [12, 20],
             "symbol_time_us": 8.93, "t_extra_us": 100.0},
    "fig9": {"users": [12, 16], "gamma0": 0.1, "numerologies": [[60e3, 17.84], [120e3, 8.93]],
             "est_error": [0.0, 0.9, 0.05], "t_extra_us": 300.0, "t_con_us": 1000.0,
             "n_antennas": 128, "n_data": 4, "packet_bits": 256},
    "fig10": {"users": [4, 8, 12, 16, 32], "gamma0": 10.0, "est_error": 0.2, "m_data": [12, 30, 1],
              "delta_f_hz": 120e3, "symbol_time_us": 8.93, "t_extra_us": 300.0,
              "n_antennas": 128, "n_data": 4, "packet_bits": 256},
}


def _arange(grid: list) -> np.ndarray:
    start, stop, step = grid
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(n)


def _fig6(o: dict) -> tuple[list[str], list[list]]:
    rows = []
    thresholds = _arange(o["thresholds"])
    for K in o["users"]:
        ratios = qln_decoder.noise_max_ratios(o["n_antennas"], K + 2, o["trials"], np.random.SeedSequence([o["seed"], K]))
        bound = qln_decoder.mp_ratio_bound(o["n_antennas"], K + 2)
        for thr in thresholds:
            rows.append([K, round(float(thr), 10), float(np.mean(ratios > thr)), bound])
    return ["K", "threshold", "P_f", "mp_bound"], rows


def _fig7(o: dict) -> tuple[list[str], list[list]]:
    rows = []
    for k in o["k_values"]:
        for K in o["users"]:
            d = K * (k - 1)
            q = max(d, 2)
            while True:
                p = CodeParams(q, k, K)
                if p.length > o["n_e_max"]:
                    break
                rows.append([k, K, q, p.length, code_rate(p)])
                q += 1
    return ["k", "K", "q", "N_E", "R_c"], rows


def _fig8(o: dict) -> tuple[list[str], list[list]]:
    rows = []
    for k in o["k_values"]:
        for m_D in o["m_data"]:
            for K in o["users"]:
                T = reliability.latency_us(K, m_D, o["symbol_time_us"], o["t_extra_us"])
                rows.append([k, m_D, K, min_length(k, K), T])
    return ["k", "m_D", "K", "N_E", "T_us"], rows


def _fig9(o: dict) -> tuple[list[str], list[list]]:
    rows = []
    for df, ts in o["numerologies"]:
        for K in o["users"]:
            m_D = reliability.max_data_symbols(K, ts, o["t_extra_us"], o["t_con_us"])
            base = reliability.ReliabilityParams(
                gamma0=o["gamma0"], n_users=K, n_antennas=o["n_antennas"], n_data=o["n_data"],
                m_data=m_D, symbol_time_us=ts, delta_f_hz=df, packet_bits=o["packet_bits"],
            )
            for lam in _arange(o["est_error"]):
                lam = round(float(lam), 10)
                pt = reliability.reliability_point(replace(base, est_error=lam), reliability.ERROR, o["t_extra_us"])
                rows.append([lam, pt.P_d, pt.P_e, pt.gamma_asy, pt.T_us, K, df, m_D])
    return ["sweep_variable", "P_d", "P_e", "gamma_asy", "T_us", "K", "delta_f_hz", "m_D"], rows


def _fig10(o: dict) -> tuple[list[str], list[list]]:
    rows = []
    for K in o["users"]:
        for m_D in _arange(o["m_data"]):
            p = reliability.ReliabilityParams(
                gamma0=o["gamma0"], n_users=K, n_antennas=o["n_antennas"], n_data=o["n_data"],
                m_data=int(m_D), symbol_time_us=o["symbol_time_us"], delta_f_hz=o["delta_f_hz"],
                packet_bits=o["packet_bits"], est_error=o["est_error"],
            )
            pt = reliability.reliability_point(p, reliability.ERROR, o["t_extra_us"])
            rows.append([int(m_D), pt.P_d, pt.P_e, pt.gamma_asy, pt.T_us, K])
    return ["sweep_variable", "P_d", "P_e", "gamma_asy", "T_us", "K"], rows


_FIGURES = {"fig6": _fig6, "fig7": _fig7, "fig8": _fig8, "fig9": _fig9, "fig10": _fig10}


def figure_options(name: str, overrides: dict | None = None) -> dict:
    if name not in _FIGURES:
        raise ConfigError(f"unknown figure {name!r}; choose from {sorted(_FIGURES)}")
    opts = dict(FIGURE_DEFAULTS[name])
    for key, value in (overrides or {}).items():
        if key not in opts:
            raise ConfigError(f"{name} has no option {key!r}; options: {sorted(opts)}")
        opts[key] = value
    return opts


def figure_command(name: str, out: str | Path, overrides: dict | None = None) -> Path:
    """Write the data behind one figure as CSV with the resolved options as '#' comments."""
    opts = figure_options(name, overrides)
    header, rows = _FIGURES[name](opts)
    out = Path(out)
    with open(out, "w", newline="") as fh:
        fh.write(comment_lines({"figure": name, **opts}))
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return out
