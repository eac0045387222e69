"""Experiment harness: JSON config ingestion, the four experiment runners
(train / evaluate / sweep-k / bench-runtime), CSV emission and static SVG
plots.

Every output artifact starts with a provenance comment line carrying the
config hash, the seed and the package version. Paired evaluation is the
default everywhere: all methods and modes inside one run score the same
channel realizations (the channel stream depends only on the system
dimensions, the geometry and the seed, never on the mode or K).

CSV schemas (stable external contract):
  reward:  episode, mean_se_bpshz, mean_scaled_reward, clip_fraction, kl_estimate
  se:      mode, n_ris, k_active, mean_se_bpshz, std_se_bpshz, n_channels
  runtime: method, n_ris, median_ms, mean_ms, min_ms, max_ms, n_trials
"""

import copy
import hashlib
import json
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import AoSettings, ao_optimize, random_baseline
from .channel import (ChannelSet, GeometryParams, SystemConfig, db_to_linear,
                      dbm_to_watts, draw_channel, draw_channels,
                      noise_power_watts)
from .env import (HrisEnv, decode_action, decode_actions_batch, default_fixed_set,
                  encode_state, encode_states, spectral_efficiency_batch)
from .ppo import PpoHyper, infer, load_checkpoint, save_checkpoint, train

__all__ = [
    "ConfigError",
    "MissingCheckpoint",
    "PlotDataError",
    "ExperimentConfig",
    "ResultRow",
    "profile_defaults",
    "load_config",
    "cmd_train",
    "cmd_evaluate",
    "cmd_sweep_k",
    "cmd_bench_runtime",
    "cmd_plot",
]


class ConfigError(ValueError):
    """Config file failed schema validation."""


class MissingCheckpoint(FileNotFoundError):
    """A requested DRL evaluation has no checkpoint to load."""


class PlotDataError(ValueError):
    """A result CSV was malformed or carried an empty data series."""


@dataclass(frozen=True)
class ResultRow:
    """Generic provenance-carrying result record."""
    experiment: str
    seed: int
    mode: str
    n_ris: int
    k_active: int
    metric: str
    value: float
    unit: str
    wall_ms: float
    config_hash: str


# --------------------------------------------------------------------------
# Config: profiles, schema, ingestion
# --------------------------------------------------------------------------

def profile_defaults(profile: str = "desk") -> dict:
    """Built-in experiment defaults; `desk` is minutes-scale, `paper` is the
    full published setup (training at that scale is not expected here)."""
    base = {
        "experiment": "train",
        "mode": "dynamic",
        "seed": 0,
        "episodes": 2000,
        "eval_channels": 50,
        "output_dir": "out",
        "fixed_active_set": None,
        "checkpoint": None,
        "methods": ["drl", "ao-surrogate", "random"],
        "system": {
            "n_tx": 4,
            "n_rx": 2,
            "n_streams": 2,
            "n_ris": 16,
            "n_active": 2,
            "max_bs_power_dbm": 40.0,
            "amp_factor": 10.0,
            "noise_psd_dbm_per_hz": -169.0,
            "bandwidth_hz": 20e6,
            "noise_figure_db": 10.0,
            "residual_si_db": 1.0,
        },
        "geometry": {
            "bs_pos": [0.0, 0.0],
            "ris_pos": [50.0, 0.0],
            "user_pos": [45.0, 2.0],
            "beta0_db": -30.0,
            "d0": 1.0,
            "exponents": [3.5, 2.2, 2.0],
            "rician_k": [0.0, 1.0, "inf"],
        },
        "ppo": {
            "gamma": 0.99,
            "lam": 0.95,
            "clip_eps": 0.2,
            "lr_actor": 1e-3,
            "lr_critic": 1e-3,
            "batch_len": 2048,
            "minibatch_size": 256,
            "epochs_per_update": 10,
            "entropy_coef": 0.0,
            "reward_scale": 10.0,
        },
        "ao": {
            "max_sweeps": 20,
            "se_tol": 1e-3,
            "phase_grid": 64,
            "restarts": 4,
            "refine": True,
        },
        "sweep": {
            "k_values": [0, 1, 2, 4],
            "modes": ["passive", "fixed", "dynamic"],
            "methods": ["ao-surrogate", "random"],
            "checkpoints": {},
        },
        "runtime": {
            "n_values": [16, 50, 100],
            "trials": 100,
            "ao_trials": 100,
            "warmup": 3,
            "methods": ["drl-inference", "ao-surrogate"],
            "checkpoints": {},
        },
    }
    if profile == "desk":
        return base
    if profile == "paper":
        paper = copy.deepcopy(base)
        paper["system"]["n_ris"] = 50
        paper["system"]["n_active"] = 4
        paper["episodes"] = 200_000
        paper["sweep"]["k_values"] = [2, 4, 6, 8]
        paper["runtime"]["n_values"] = [50, 100, 150]
        return paper
    raise ConfigError(f"unknown profile {profile!r} (expected desk or paper)")


_EXPERIMENTS = ("train", "evaluate", "sweep-k", "bench-runtime")
_MODES = ("passive", "fixed", "dynamic")


def _reject_unknown(user: dict, known: dict, path: str = "") -> None:
    for key, val in user.items():
        here = f"{path}.{key}" if path else key
        if key not in known:
            raise ConfigError(f"unknown config key: {here}")
        if isinstance(known[key], dict) and key not in ("checkpoints",):
            if not isinstance(val, dict):
                raise ConfigError(f"{here} must be an object")
            _reject_unknown(val, known[key], here)


def _merge(defaults: dict, user: dict) -> dict:
    out = copy.deepcopy(defaults)
    for key, val in user.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict) \
                and key not in ("checkpoints",):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _parse_kappa(value) -> float:
    if value in ("inf", "Infinity", "infinity"):
        return math.inf
    return float(value)


@dataclass
class ExperimentConfig:
    """Validated experiment description plus the built runtime objects."""
    experiment: str
    mode: str
    seed: int
    episodes: int
    eval_channels: int
    output_dir: str
    fixed_active_set: list
    checkpoint: str
    methods: list
    cfg: SystemConfig
    geo: GeometryParams
    hp: PpoHyper
    ao: AoSettings
    sweep: dict
    runtime: dict
    raw: dict = field(repr=False, default=None)
    config_hash: str = ""


def _hash_config(merged: dict) -> str:
    canon = json.dumps(merged, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:12]


def load_config(path=None, profile: str = "desk", overrides: dict = None
                ) -> ExperimentConfig:
    """Merge profile defaults, an optional JSON file and CLI overrides, then
    validate strictly (unknown keys anywhere are rejected)."""
    merged = profile_defaults(profile)
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                user = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}")
        if not isinstance(user, dict):
            raise ConfigError("top-level config must be a JSON object")
        _reject_unknown(user, merged)
        merged = _merge(merged, user)
    if overrides:
        merged = _merge(merged, overrides)

    if merged["experiment"] not in _EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {_EXPERIMENTS}")
    if merged["mode"] not in _MODES:
        raise ConfigError(f"mode must be one of {_MODES}")
    for key in ("seed", "episodes", "eval_channels"):
        if not isinstance(merged[key], int) or merged[key] < 0:
            raise ConfigError(f"{key} must be a non-negative integer")

    sysd = merged["system"]
    geod = merged["geometry"]
    try:
        cfg = SystemConfig(
            n_tx=sysd["n_tx"], n_rx=sysd["n_rx"], n_streams=sysd["n_streams"],
            n_ris=sysd["n_ris"], n_active=sysd["n_active"],
            max_bs_power=dbm_to_watts(sysd["max_bs_power_dbm"]),
            amp_factor=float(sysd["amp_factor"]),
            noise_power=noise_power_watts(sysd["noise_psd_dbm_per_hz"],
                                          sysd["bandwidth_hz"],
                                          sysd["noise_figure_db"]),
            residual_si=db_to_linear(sysd["residual_si_db"]),
        )
        geo = GeometryParams(
            bs_pos=tuple(geod["bs_pos"]), ris_pos=tuple(geod["ris_pos"]),
            user_pos=tuple(geod["user_pos"]), beta0_db=geod["beta0_db"],
            d0=geod["d0"], exponents=tuple(geod["exponents"]),
            rician_k=tuple(_parse_kappa(k) for k in geod["rician_k"]),
        )
        hp = PpoHyper(**merged["ppo"])
        ao = AoSettings(**merged["ao"])
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc

    fixed = merged["fixed_active_set"]
    if fixed is not None:
        fixed = [int(i) for i in fixed]
        if len(fixed) != cfg.n_active or any(
                not 0 <= i < cfg.n_ris for i in fixed):
            raise ConfigError("fixed_active_set must hold n_active indices "
                              "in [0, n_ris)")

    return ExperimentConfig(
        experiment=merged["experiment"], mode=merged["mode"],
        seed=merged["seed"], episodes=merged["episodes"],
        eval_channels=merged["eval_channels"],
        output_dir=merged["output_dir"], fixed_active_set=fixed,
        checkpoint=merged["checkpoint"], methods=list(merged["methods"]),
        cfg=cfg, geo=geo, hp=hp, ao=ao,
        sweep=copy.deepcopy(merged["sweep"]),
        runtime=copy.deepcopy(merged["runtime"]),
        raw=merged, config_hash=_hash_config(merged),
    )


# --------------------------------------------------------------------------
# CSV emission
# --------------------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".12g")
    return str(x)


def _write_csv(path: Path, header, rows, exp: ExperimentConfig) -> None:
    lines = [f"# config_hash={exp.config_hash} seed={exp.seed} "
             f"version=hrislink-{__version__}"]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_result_csv(path) -> tuple:
    """Read one of the harness CSVs; returns (header, list of row dicts)."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise MissingCheckpoint(f"result file not found: {path}") from exc
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    if not lines:
        raise PlotDataError(f"{path}: no data")
    header = lines[0].split(",")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != len(header):
            raise PlotDataError(f"{path}: malformed row {ln!r}")
        rows.append(dict(zip(header, parts)))
    return header, rows


# --------------------------------------------------------------------------
# Shared evaluation helpers
# --------------------------------------------------------------------------

def eval_channel_batch(exp: ExperimentConfig, cfg: SystemConfig = None,
                       count: int = None) -> ChannelSet:
    """Held-out evaluation channels, keyed (seed, 4); independent of the
    training stream, identical across modes/methods/K."""
    cfg = cfg or exp.cfg
    count = count or exp.eval_channels
    return draw_channels(cfg, exp.geo, (exp.seed, 4), count)


def policy_se_per_channel(policy, channels: ChannelSet, cfg: SystemConfig,
                          mode: str, fixed_set) -> np.ndarray:
    """Deterministic-policy SE on each realization of a batched ChannelSet."""
    states = encode_states(channels)
    mu = policy.mean(states).astype(float)
    f, alpha, mask = decode_actions_batch(mu, cfg, mode, fixed_set)
    return spectral_efficiency_batch(f, alpha, mask, channels, cfg)


def ao_se_per_channel(channels: ChannelSet, cfg: SystemConfig, mode: str,
                      ao: AoSettings, seed: int, fixed_set=None) -> np.ndarray:
    from .channel import channel_at
    out = np.empty(channels.h_direct.shape[0])
    for i in range(out.size):
        rng = np.random.default_rng((seed, 17, i))
        out[i] = ao_optimize(channel_at(channels, i), cfg, mode, ao, rng,
                             fixed_set).se
    return out


def random_se_per_channel(channels: ChannelSet, cfg: SystemConfig, mode: str,
                          seed: int, fixed_set=None) -> np.ndarray:
    from .channel import channel_at
    out = np.empty(channels.h_direct.shape[0])
    for i in range(out.size):
        rng = np.random.default_rng((seed, 17, i))
        _, _, out[i] = random_baseline(channel_at(channels, i), cfg, mode,
                                       rng, fixed_set)
    return out


def _load_policy(path):
    if path is None:
        raise MissingCheckpoint("no checkpoint configured for DRL evaluation")
    try:
        _, _, state, _ = load_checkpoint(path)
    except FileNotFoundError as exc:
        raise MissingCheckpoint(f"checkpoint not found: {path}") from exc
    return state.policy


# --------------------------------------------------------------------------
# Experiment runners
# --------------------------------------------------------------------------

def cmd_train(exp: ExperimentConfig, log_fn=None) -> dict:
    """Train one agent; emit the reward-curve CSV and a checkpoint."""
    out = Path(exp.output_dir)
    env = HrisEnv(exp.cfg, exp.geo, exp.mode, exp.fixed_active_set,
                  seed=exp.seed)
    state = train(env, exp.hp, exp.episodes, seed=exp.seed, log_fn=log_fn)
    stem = f"{exp.mode}_seed{exp.seed}"
    csv_path = out / f"reward_curve_{stem}.csv"
    rows = [(r["episode"], r["mean_se_bpshz"], r["mean_scaled_reward"],
             r["clip_fraction"], r["kl_estimate"]) for r in state.curve]
    _write_csv(csv_path, ("episode", "mean_se_bpshz", "mean_scaled_reward",
                          "clip_fraction", "kl_estimate"), rows, exp)
    ckpt_path = out / f"checkpoint_{stem}.npz"
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ckpt_path, state, env, exp.hp, exp.seed)
    return {"reward_csv": csv_path, "checkpoint": ckpt_path, "state": state}


def _se_rows(exp, label, mode, k, se):
    row = (label, exp.cfg.n_ris, k, float(np.mean(se)), float(np.std(se)),
           int(se.size))
    result = ResultRow(exp.experiment, exp.seed, label, exp.cfg.n_ris, k,
                       "mean_se", float(np.mean(se)), "bps/Hz", 0.0,
                       exp.config_hash)
    return row, result


def cmd_evaluate(exp: ExperimentConfig) -> dict:
    """Score the configured methods on paired held-out channels."""
    channels = eval_channel_batch(exp)
    k = exp.cfg.n_active if exp.mode != "passive" else 0
    fixed = exp.fixed_active_set
    if exp.mode == "fixed" and fixed is None:
        fixed = default_fixed_set(exp.cfg.n_ris, exp.cfg.n_active)
    rows, results, per_channel = [], [], {}
    for method in exp.methods:
        if method == "drl":
            policy = _load_policy(exp.checkpoint)
            se = policy_se_per_channel(policy, channels, exp.cfg, exp.mode,
                                       fixed)
        elif method == "ao-surrogate":
            se = ao_se_per_channel(channels, exp.cfg, exp.mode, exp.ao,
                                   exp.seed, fixed)
        elif method == "random":
            se = random_se_per_channel(channels, exp.cfg, exp.mode, exp.seed,
                                       fixed)
        else:
            raise ConfigError(f"unknown method {method!r}")
        label = f"{method}-{exp.mode}"
        row, result = _se_rows(exp, label, exp.mode, k, se)
        rows.append(row)
        results.append(result)
        per_channel[label] = se
    csv_path = Path(exp.output_dir) / f"evaluate_{exp.mode}_seed{exp.seed}.csv"
    _write_csv(csv_path, ("mode", "n_ris", "k_active", "mean_se_bpshz",
                          "std_se_bpshz", "n_channels"), rows, exp)
    return {"se_csv": csv_path, "rows": results, "per_channel": per_channel}


def cmd_sweep_k(exp: ExperimentConfig, k_values=None) -> dict:
    """Mean SE per (method, mode, K) on one shared channel set.

    DRL rows need a checkpoint per mode in sweep.checkpoints (key "mode" or
    "mode:k"); the policy shape does not depend on K, so one checkpoint per
    mode may serve every K.
    """
    k_values = list(k_values if k_values is not None
                    else exp.sweep["k_values"])
    modes = list(exp.sweep["modes"])
    methods = list(exp.sweep["methods"])
    channels = eval_channel_batch(exp)
    rows, results, per = [], [], {}

    def one(method, mode, k):
        cfg_k = replace(exp.cfg, n_active=k)
        fixed = default_fixed_set(cfg_k.n_ris, k) if mode == "fixed" else None
        if method == "drl":
            ckpts = exp.sweep["checkpoints"]
            path = ckpts.get(f"{mode}:{k}", ckpts.get(mode))
            policy = _load_policy(path)
            return policy_se_per_channel(policy, channels, cfg_k, mode, fixed)
        if method == "ao-surrogate":
            return ao_se_per_channel(channels, cfg_k, mode, exp.ao, exp.seed,
                                     fixed)
        if method == "random":
            return random_se_per_channel(channels, cfg_k, mode, exp.seed,
                                         fixed)
        raise ConfigError(f"unknown method {method!r}")

    for method in methods:
        for mode in modes:
            ks = [0] if mode == "passive" else k_values
            for k in ks:
                se = one(method, mode, k)
                label = f"{method}-{mode}"
                row, result = _se_rows(exp, label, mode, k, se)
                rows.append(row)
                results.append(result)
                per[(label, k)] = se

    csv_path = Path(exp.output_dir) / f"sweep_k_seed{exp.seed}.csv"
    _write_csv(csv_path, ("mode", "n_ris", "k_active", "mean_se_bpshz",
                          "std_se_bpshz", "n_channels"), rows, exp)
    return {"se_csv": csv_path, "rows": results, "per_channel": per}


def _median_stats(samples_ms):
    a = np.asarray(samples_ms)
    return (float(np.median(a)), float(np.mean(a)), float(np.min(a)),
            float(np.max(a)), int(a.size))


def cmd_bench_runtime(exp: ExperimentConfig, n_values=None) -> dict:
    """Median wall time per channel for DRL inference and the AO surrogate.

    DRL inference time includes state encoding and action decoding. A
    checkpoint per N may be supplied in runtime.checkpoints; otherwise an
    untrained network of the right shape is timed (the cost is
    shape-determined) and flagged in the provenance line.
    """
    from .ppo import init_train_state
    n_values = list(n_values if n_values is not None
                    else exp.runtime["n_values"])
    methods = list(exp.runtime["methods"])
    trials = int(exp.runtime["trials"])
    ao_trials = int(exp.runtime["ao_trials"])
    warmup = int(exp.runtime["warmup"])
    rows, results, untrained = [], [], []

    for n in n_values:
        cfg_n = replace(exp.cfg, n_ris=n,
                        n_active=min(exp.cfg.n_active, n))
        fixed = (default_fixed_set(n, cfg_n.n_active)
                 if exp.mode == "fixed" else exp.fixed_active_set)

        if "drl-inference" in methods:
            path = exp.runtime["checkpoints"].get(str(n))
            if path is not None:
                policy = _load_policy(path)
            else:
                env_n = HrisEnv(cfg_n, exp.geo, exp.mode, fixed, seed=exp.seed)
                policy = init_train_state(env_n, exp.hp, exp.seed).policy
                untrained.append(n)
            times = []
            for i in range(warmup + trials):
                ch = draw_channel(cfg_n, exp.geo, (exp.seed, 5, n, i))
                t0 = time.perf_counter()
                state_vec = encode_state(ch)
                raw = infer(policy, state_vec)
                decode_action(raw, cfg_n, exp.mode, fixed)
                dt = (time.perf_counter() - t0) * 1e3
                if i >= warmup:
                    times.append(dt)
            med, mean, lo, hi, cnt = _median_stats(times)
            rows.append(("drl-inference", n, med, mean, lo, hi, cnt))
            results.append(ResultRow(exp.experiment, exp.seed, exp.mode, n,
                                     cfg_n.n_active, "drl_inference_ms", med,
                                     "ms", med, exp.config_hash))

        if "ao-surrogate" in methods:
            times = []
            for i in range(min(warmup, 1) + ao_trials):
                ch = draw_channel(cfg_n, exp.geo, (exp.seed, 5, n, i))
                rng = np.random.default_rng((exp.seed, 6, n, i))
                t0 = time.perf_counter()
                ao_optimize(ch, cfg_n, exp.mode, exp.ao, rng, fixed)
                dt = (time.perf_counter() - t0) * 1e3
                if i >= min(warmup, 1):
                    times.append(dt)
            med, mean, lo, hi, cnt = _median_stats(times)
            rows.append(("ao-surrogate", n, med, mean, lo, hi, cnt))
            results.append(ResultRow(exp.experiment, exp.seed, exp.mode, n,
                                     cfg_n.n_active, "ao_solve_ms", med, "ms",
                                     med, exp.config_hash))

    csv_path = Path(exp.output_dir) / f"runtime_seed{exp.seed}.csv"
    _write_csv(csv_path, ("method", "n_ris", "median_ms", "mean_ms",
                          "min_ms", "max_ms", "n_trials"), rows, exp)
    if untrained:
        text = csv_path.read_text(encoding="utf-8").splitlines()
        text[0] += f" untrained_drl_at_n={','.join(map(str, untrained))}"
        csv_path.write_text("\n".join(text) + "\n", encoding="utf-8")
    return {"runtime_csv": csv_path, "rows": results}


# --------------------------------------------------------------------------
# SVG plotting (hand-rolled, dependency-free, deterministic)
# --------------------------------------------------------------------------

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
            "#8c564b", "#17becf", "#7f7f7f")


def _ticks(lo: float, hi: float, count: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    raw_step = (hi - lo) / max(count - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw_step))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        step = mult * mag
        if step >= raw_step:
            break
    start = math.floor(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * step:
        if t >= lo - 1e-12 * step:
            ticks.append(t)
        t += step
    return ticks or [lo, hi]


def _svg_line_chart(title: str, series: list, xlabel: str, ylabel: str,
                    logy: bool = False) -> str:
    """series: list of (label, xs, ys). Returns an SVG document string."""
    if not series:
        raise PlotDataError("no data series to plot")
    for label, xs, ys in series:
        if len(xs) == 0 or len(xs) != len(ys):
            raise PlotDataError(f"empty or ragged series {label!r}")
        if logy and any(y <= 0 for y in ys):
            raise PlotDataError(f"log-scale series {label!r} has values <= 0")

    width, height = 640, 420
    ml, mr, mt, mb = 72, 16, 42, 52
    pw, ph = width - ml - mr, height - mt - mb

    all_x = [x for _, xs, _ in series for x in xs]
    all_y = [y for _, _, ys in series for y in ys]
    x_lo, x_hi = min(all_x), max(all_x)
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if logy:
        y_lo = math.floor(math.log10(min(all_y)))
        y_hi = math.ceil(math.log10(max(all_y)))
        if y_hi == y_lo:
            y_hi += 1
        y_ticks = [10.0 ** e for e in range(int(y_lo), int(y_hi) + 1)]
        to_y = lambda y: mt + ph * (1 - (math.log10(y) - y_lo) / (y_hi - y_lo))
    else:
        span = max(all_y) - min(all_y)
        pad = 0.05 * span if span else max(abs(max(all_y)), 1.0) * 0.05
        y_lo, y_hi = min(all_y) - pad, max(all_y) + pad
        y_ticks = _ticks(y_lo, y_hi)
        to_y = lambda y: mt + ph * (1 - (y - y_lo) / (y_hi - y_lo))
    x_ticks = _ticks(x_lo, x_hi)
    to_x = lambda x: ml + pw * (x - x_lo) / (x_hi - x_lo)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{title}</text>',
    ]
    # axes
    out.append(f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" '
               f'stroke="black"/>')
    out.append(f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" '
               f'stroke="black"/>')
    for t in x_ticks:
        px = to_x(t)
        out.append(f'<line x1="{px:.2f}" y1="{mt + ph}" x2="{px:.2f}" '
                   f'y2="{mt + ph + 4}" stroke="black"/>')
        out.append(f'<text x="{px:.2f}" y="{mt + ph + 18}" '
                   f'text-anchor="middle" font-family="sans-serif" '
                   f'font-size="10">{t:.6g}</text>')
    for t in y_ticks:
        py = to_y(t)
        out.append(f'<line x1="{ml - 4}" y1="{py:.2f}" x2="{ml}" '
                   f'y2="{py:.2f}" stroke="black"/>')
        out.append(f'<text x="{ml - 7}" y="{py + 3:.2f}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="10">{t:.6g}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 14}" '
               f'text-anchor="middle" font-family="sans-serif" '
               f'font-size="11">{xlabel}</text>')
    out.append(f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="11" '
               f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{ylabel}</text>')

    for i, (label, xs, ys) in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{to_x(x):.2f},{to_y(y):.2f}"
                       for x, y in zip(xs, ys))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                   f'stroke-width="1.5"/>')
        ly = mt + 14 + 14 * i
        out.append(f'<line x1="{ml + pw - 150}" y1="{ly - 4}" '
                   f'x2="{ml + pw - 130}" y2="{ly - 4}" stroke="{color}" '
                   f'stroke-width="1.5"/>')
        out.append(f'<text x="{ml + pw - 125}" y="{ly}" '
                   f'font-family="sans-serif" font-size="10">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _classify_csv(header) -> str:
    if header[:2] == ["episode", "mean_se_bpshz"]:
        return "reward"
    if header[:3] == ["mode", "n_ris", "k_active"]:
        return "se"
    if header[:2] == ["method", "n_ris"]:
        return "runtime"
    raise PlotDataError(f"unrecognized CSV schema: {header}")


def cmd_plot(csv_paths, out_dir) -> dict:
    """Render result CSVs to standalone SVG line charts.

    Reward CSVs share one chart (one polyline per file), SE CSVs one chart
    with one polyline per mode label, runtime CSVs one log-y chart per
    method. Raises PlotDataError before writing anything if a series is
    empty.
    """
    out_dir = Path(out_dir)
    groups = {"reward": [], "se": [], "runtime": []}
    for path in csv_paths:
        header, rows = read_result_csv(path)
        kind = _classify_csv(header)
        groups[kind].append((Path(path), rows))

    written = {}
    if groups["reward"]:
        series = []
        for path, rows in groups["reward"]:
            xs = [int(r["episode"]) for r in rows]
            ys = [float(r["mean_se_bpshz"]) for r in rows]
            series.append((path.stem.replace("reward_curve_", ""), xs, ys))
        svg = _svg_line_chart("Training reward", series, "episode",
                              "mean SE (bps/Hz)")
        written["reward"] = out_dir / "reward_curve.svg"
    if groups["se"]:
        by_label = {}
        for _, rows in groups["se"]:
            for r in rows:
                by_label.setdefault(r["mode"], []).append(
                    (int(r["k_active"]), float(r["mean_se_bpshz"])))
        series = []
        for label in sorted(by_label):
            pts = sorted(by_label[label])
            series.append((label, [p[0] for p in pts], [p[1] for p in pts]))
        svg_se = _svg_line_chart("Spectral efficiency vs active elements",
                                 series, "active elements K",
                                 "mean SE (bps/Hz)")
        written["se"] = out_dir / "se_vs_k.svg"
    if groups["runtime"]:
        by_method = {}
        for _, rows in groups["runtime"]:
            for r in rows:
                by_method.setdefault(r["method"], []).append(
                    (int(r["n_ris"]), float(r["median_ms"])))
        series = []
        for label in sorted(by_method):
            pts = sorted(by_method[label])
            series.append((label, [p[0] for p in pts], [p[1] for p in pts]))
        svg_rt = _svg_line_chart("Runtime vs surface size", series,
                                 "HRIS elements N", "median runtime (ms)",
                                 logy=True)
        written["runtime"] = out_dir / "runtime_vs_n.svg"

    if not written:
        raise PlotDataError("no plottable CSVs given")
    out_dir.mkdir(parents=True, exist_ok=True)
    if "reward" in written:
        written["reward"].write_text(svg, encoding="utf-8")
    if "se" in written:
        written["se"].write_text(svg_se, encoding="utf-8")
    if "runtime" in written:
        written["runtime"].write_text(svg_rt, encoding="utf-8")
    return written
