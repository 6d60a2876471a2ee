"""Experiment configs and the runners that turn them into output files.

Configs are flat key = value text, one experiment per file. Every run is
fully determined by (config, seed); every output file embeds the config
hash and the master seed in its leading comment lines, and all floats are
written with 17 significant digits so they round-trip exactly.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import mc, oracle, thermo
from .core import EnsembleSpec, new_market
from .stats import Histogram

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "parse_config_text",
    "load_config",
    "config_hash",
    "run_experiment",
    "EXPERIMENT_KINDS",
]

REQUIRED = object()


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


def _bool(raw: str) -> bool:
    if raw.lower() in ("true", "1", "yes"):
        return True
    if raw.lower() in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected a boolean, got {raw!r}")


def _float_list(raw: str) -> tuple:
    return tuple(float(x) for x in raw.split(","))


def _int_list(raw: str) -> tuple:
    return tuple(int(x) for x in raw.split(","))


# key -> (coercion, default); REQUIRED means the config must set it
_SCHEMAS = {
    "kinetic": {
        "agents": (int, REQUIRED),
        "total_money": (float, REQUIRED),
        "total_goods": (float, 0.0),
        "exchanges": (int, REQUIRED),
        "burn_in_rounds": (int, 0),
        "thin_rounds": (int, 1),
        "loss": (float, 0.0),
        "goods_exchange": (_bool, False),
        "allocation": (str, "equal"),
    },
    "canonical": {
        "agents": (int, REQUIRED),
        "temperature": (float, REQUIRED),
        "volume": (float, REQUIRED),
        "sweeps": (int, REQUIRED),
        "burn_in": (int, 0),
        "thin": (int, 1),
        "width": (float, 0.0),
        "k0": (float, 1.0),
        "replicas": (int, 1),
    },
    "npt": {
        "agents": (int, REQUIRED),
        "temperature": (float, REQUIRED),
        "pressure": (float, REQUIRED),
        "sweeps": (int, REQUIRED),
        "burn_in": (int, 0),
        "thin": (int, 1),
        "width": (float, 0.0),
        "k0": (float, 1.0),
        "replicas": (int, 1),
    },
    "grand": {
        "temperature": (float, REQUIRED),
        "volume": (float, REQUIRED),
        "mu": (float, REQUIRED),
        "steps": (int, REQUIRED),
        "burn_in": (int, 0),
        "thin": (int, 1),
        "initial_agents": (int, 0),
        "k0": (float, 1.0),
        "replicas": (int, 1),
    },
    "heatflow": {
        "n1": (int, REQUIRED),
        "t1": (float, REQUIRED),
        "n2": (int, REQUIRED),
        "t2": (float, REQUIRED),
        "coupling_rate": (float, 0.01),
        "rounds": (int, REQUIRED),
        "interval": (int, 100),
        "burn_in": (int, 200),
        "k0": (float, 1.0),
    },
    "sweep": {
        "agents": (int, REQUIRED),
        "temperature": (float, REQUIRED),
        "v_start": (float, REQUIRED),
        "v_peak": (float, REQUIRED),
        "stages_up": (int, 5),
        "rounds_per_stage": (int, 100),
        "measure_rounds": (int, 60),
        "k0": (float, 1.0),
    },
    "oracle": {
        "t_values": (_float_list, REQUIRED),
        "n_values": (_int_list, REQUIRED),
        "volume": (float, REQUIRED),
        "k0": (float, 1.0),
    },
    "verify": {
        "scale": (str, "quick"),
    },
}

EXPERIMENT_KINDS = tuple(_SCHEMAS)


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment: kind, typed parameters, seed, output dir."""

    kind: str
    params: dict
    seed: int
    out_dir: Path

    def canonical_text(self) -> str:
        lines = [f"experiment = {self.kind}", f"seed = {self.seed}"]
        for key in sorted(self.params):
            value = self.params[key]
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


def config_hash(config: ExperimentConfig) -> str:
    return hashlib.sha256(config.canonical_text().encode()).hexdigest()[:16]


def make_config(kind: str, params: dict, seed: int, out_dir) -> ExperimentConfig:
    """Build a validated config from an in-memory parameter dict, applying
    the same schema defaults as a config file."""
    if kind not in _SCHEMAS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    schema = _SCHEMAS[kind]
    full = {}
    for key, value in params.items():
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} for experiment {kind}")
        full[key] = value
    for key, (_, default) in schema.items():
        if key not in full:
            if default is REQUIRED:
                raise ConfigError(f"experiment {kind} requires key {key!r}")
            full[key] = default
    return ExperimentConfig(kind=kind, params=full, seed=seed, out_dir=Path(out_dir))


def parse_config_text(text: str) -> dict[str, str]:
    """Flat key = value lines; '#' starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw_line in enumerate(text.splitlines(), 1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw_line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_config(
    path: str | Path,
    seed_override: int | None = None,
    out_dir_override: str | None = None,
    kind_override: str | None = None,
) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    raw = parse_config_text(text)
    kind = kind_override or raw.pop("experiment", None)
    if kind is None:
        raise ConfigError("config must set 'experiment' (or pass a subcommand)")
    if "experiment" in raw:
        if raw.pop("experiment") != kind:
            raise ConfigError("config 'experiment' disagrees with the subcommand")
    if kind not in _SCHEMAS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    seed_raw = raw.pop("seed", None)
    seed = seed_override if seed_override is not None else (
        int(seed_raw) if seed_raw is not None else 0
    )
    out_raw = raw.pop("out_dir", None)
    out_dir = out_dir_override or out_raw
    if out_dir is None:
        raise ConfigError("set out_dir in the config or pass --out-dir")
    schema = _SCHEMAS[kind]
    params = {}
    for key, value in raw.items():
        if key not in schema:
            raise ConfigError(f"unknown key {key!r} for experiment {kind}")
        coerce, _ = schema[key]
        try:
            params[key] = coerce(value)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"bad value for {key}: {exc}") from exc
    for key, (_, default) in schema.items():
        if key not in params:
            if default is REQUIRED:
                raise ConfigError(f"experiment {kind} requires key {key!r}")
            params[key] = default
    return ExperimentConfig(kind=kind, params=params, seed=seed, out_dir=Path(out_dir))


# ---------------------------------------------------------------------------
# output writing


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def _write_csv(path: Path, columns: list[str], rows, config: ExperimentConfig):
    lines = [
        f"# config_hash={config_hash(config)}",
        f"# seed={config.seed}",
        ",".join(columns),
    ]
    for row in rows:
        lines.append(",".join(_fmt(x) for x in row))
    path.write_text("\n".join(lines) + "\n")


def _write_summary(path: Path, config: ExperimentConfig, fields: dict):
    lines = [
        f"config_hash = {config_hash(config)}",
        f"seed = {config.seed}",
        f"experiment = {config.kind}",
    ]
    for key in sorted(config.params):
        value = config.params[key]
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        lines.append(f"config.{key} = {value}")
    for key, value in fields.items():
        lines.append(f"{key} = {_fmt(value) if isinstance(value, (int, float, np.floating, np.integer)) else value}")
    path.write_text("\n".join(lines) + "\n")


def _trace_rows(trace: mc.Trace):
    for r in range(trace.replicas):
        for k in range(trace.step.size):
            yield (trace.step[k], trace.E[r, k], trace.V[r, k], trace.N[r, k])


def _report_fields(report, prefix="report."):
    out = {}
    for name in ("mean_E", "mean_V", "mean_N", "pressure", "temperature",
                 "financial_potential", "entropy", "var_E", "var_V", "var_N",
                 "stderr_E", "stderr_V", "stderr_N", "sample_count"):
        out[prefix + name] = getattr(report, name)
    return out


def _write_trace_outputs(config, trace, hist_data, extra_fields=None):
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "trace": out / "trace.csv",
        "hist": out / "hist.csv",
        "summary": out / "summary.txt",
    }
    _write_csv(paths["trace"], ["step", "E", "V", "N"], _trace_rows(trace), config)
    hist = Histogram.from_samples(hist_data)
    _write_csv(paths["hist"], ["bin_left", "bin_right", "count"], hist.rows(), config)
    report = thermo.summarize_trace(trace)
    fields = _report_fields(report)
    if extra_fields:
        fields.update(extra_fields)
    _write_summary(paths["summary"], config, fields)
    return paths


def _run_kinetic(config: ExperimentConfig):
    p = config.params
    n = p["agents"]
    if n < 2:
        raise ConfigError("kinetic experiments need at least two agents")
    rounds = max(1, p["exchanges"] // (n // 2))
    state = new_market(n, p["total_money"], p["total_goods"], p["allocation"],
                       seed=config.seed if p["allocation"] != "equal" else None)
    spec = EnsembleSpec.isolated(E=p["total_money"], V=p["total_goods"], N=n)
    rule = mc.ExchangeRule(loss_fraction=p["loss"], goods_exchange=p["goods_exchange"])
    cfg = mc.ChainConfig(steps=rounds + p["burn_in_rounds"], burn_in=p["burn_in_rounds"],
                         thin=p["thin_rounds"], seed=config.seed)
    trace = mc.run_chain(state, spec, cfg, rule=rule)
    money = np.concatenate([s.money for s in trace.final_states])
    extra = {
        "oracle.mean_money": p["total_money"] / n,
        "measured.mean_money": float(money.mean()),
    }
    return _write_trace_outputs(config, trace, money, extra)


def _run_canonical(config: ExperimentConfig):
    p = config.params
    n, T, V = p["agents"], p["temperature"], p["volume"]
    spec = EnsembleSpec.canonical(T=T, V=V, N=n, k0=p["k0"])
    cfg = mc.ChainConfig(steps=p["sweeps"], burn_in=p["burn_in"], thin=p["thin"],
                         seed=config.seed, replicas=p["replicas"],
                         proposal_width=p["width"] or None)
    state = new_market(n, n * p["k0"] * T, V, "equal")
    trace = mc.run_chain(state, spec, cfg)
    money = np.concatenate([s.money for s in trace.final_states])
    extra = {
        "oracle.mean_E": oracle.ideal_mean_energy(T, n, p["k0"]),
        "oracle.pressure": oracle.ideal_eos_pressure(T, V, n, p["k0"]),
        "oracle.entropy": oracle.ideal_entropy(T, V, n, p["k0"]),
    }
    return _write_trace_outputs(config, trace, money, extra)


def _run_npt(config: ExperimentConfig):
    p = config.params
    n, T, pres = p["agents"], p["temperature"], p["pressure"]
    spec = EnsembleSpec.isothermal_isobaric(T=T, p=pres, N=n, k0=p["k0"])
    cfg = mc.ChainConfig(steps=p["sweeps"], burn_in=p["burn_in"], thin=p["thin"],
                         seed=config.seed, replicas=p["replicas"],
                         proposal_width=p["width"] or None)
    state = new_market(n, n * p["k0"] * T, n * p["k0"] * T / pres, "equal")
    trace = mc.run_chain(state, spec, cfg)
    money = np.concatenate([s.money for s in trace.final_states])
    extra = {
        "oracle.mean_V": oracle.ideal_npt_mean_volume(T, pres, n, p["k0"]),
        "oracle.mean_E": oracle.ideal_mean_energy(T, n, p["k0"]),
    }
    return _write_trace_outputs(config, trace, money, extra)


def _run_grand(config: ExperimentConfig):
    p = config.params
    T, V, mu, k0 = p["temperature"], p["volume"], p["mu"], p["k0"]
    spec = EnsembleSpec.grand_canonical(T=T, V=V, mu=mu, k0=k0)
    n0 = p["initial_agents"] or max(1, int(round(oracle.ideal_grand_mean_count(T, V, mu, k0))))
    cfg = mc.ChainConfig(steps=p["steps"], burn_in=p["burn_in"], thin=p["thin"],
                         seed=config.seed, replicas=p["replicas"])
    state = new_market(n0, n0 * k0 * T, V, "equal")
    trace = mc.run_chain(state, spec, cfg)
    counts = trace.series("N").astype(int)
    extra = {
        "oracle.mean_N": oracle.ideal_grand_mean_count(T, V, mu, k0),
        "oracle.var_N": oracle.ideal_grand_count_variance(T, V, mu, k0),
    }
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "trace": out / "trace.csv",
        "hist": out / "hist.csv",
        "summary": out / "summary.txt",
    }
    _write_csv(paths["trace"], ["step", "E", "V", "N"], _trace_rows(trace), config)
    edges = np.arange(counts.min() - 0.5, counts.max() + 1.5)
    hist = Histogram.from_samples(counts, edges=edges)
    _write_csv(paths["hist"], ["bin_left", "bin_right", "count"], hist.rows(), config)
    report = thermo.summarize_trace(trace)
    fields = _report_fields(report)
    fields.update(extra)
    _write_summary(paths["summary"], config, fields)
    return paths


def _run_heatflow(config: ExperimentConfig):
    p = config.params
    spec = thermo.CoupledSpec(n1=p["n1"], temp1=p["t1"], n2=p["n2"], temp2=p["t2"],
                              coupling_rate=p["coupling_rate"], rounds=p["rounds"],
                              interval=p["interval"], burn_in=p["burn_in"],
                              seed=config.seed, k0=p["k0"])
    report = thermo.heat_flow_experiment(spec)
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    rows = [
        (k, report.t1[k], report.t2[k], report.dq12_interval[k],
         report.dq12_cumulative[k], report.s1[k], report.s2[k], report.s_total[k])
        for k in range(len(report.t1))
    ]
    paths = {"heatflow": out / "heatflow.csv", "summary": out / "summary.txt"}
    _write_csv(paths["heatflow"],
               ["interval", "T1", "T2", "dq12_interval", "dq12_cumulative",
                "S1", "S2", "S_total"], rows, config)
    verdict = thermo.second_law_check(thermo.records_from_heat_flow(report))
    expected_final = (p["n1"] * p["t1"] + p["n2"] * p["t2"]) / (p["n1"] + p["n2"])
    _write_summary(paths["summary"], config, {
        "final_temperature": report.final_temperature,
        "oracle.final_temperature": expected_final,
        "entropy_check": "PASS" if verdict.all_pass else "FAIL",
    })
    return paths


def _run_sweep(config: ExperimentConfig):
    p = config.params
    n = p["agents"]
    market = new_market(n, n * p["k0"] * p["temperature"], p["v_start"], "equal")
    spec = thermo.SweepSpec(
        volumes=thermo.make_sweep_path(p["v_start"], p["v_peak"], p["stages_up"]),
        rounds_per_stage=p["rounds_per_stage"], measure_rounds=p["measure_rounds"],
        seed=config.seed, k0=p["k0"])
    result = thermo.quasistatic_sweep(market, spec)
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    rows = [
        (i, s.volume, s.pressure, s.pressure_stderr, s.temperature,
         s.eos_ratio, s.autocorr_ratio)
        for i, s in enumerate(result.stages)
    ]
    paths = {"sweep": out / "sweep.csv", "summary": out / "summary.txt"}
    _write_csv(paths["sweep"],
               ["stage", "V", "pressure", "pressure_stderr", "temperature",
                "eos_ratio", "autocorr_ratio"], rows, config)
    _write_summary(paths["summary"], config, {
        "initial_pressure": result.stages[0].pressure,
        "final_pressure": result.stages[-1].pressure,
        "quasistatic_ok": str(result.quasistatic_ok),
    })
    return paths


def _run_oracle(config: ExperimentConfig):
    p = config.params
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    V, k0 = p["volume"], p["k0"]
    for T in p["t_values"]:
        for n in p["n_values"]:
            rows.append((
                T, n, V,
                oracle.ideal_eos_pressure(T, V, n, k0),
                oracle.ideal_mean_energy(T, n, k0),
                oracle.ideal_entropy(T, V, n, k0),
                oracle.ideal_canonical_log_z(T, V, n, k0),
            ))
    paths = {"oracle": out / "oracle.csv"}
    _write_csv(paths["oracle"],
               ["T", "N", "V", "eos_pressure", "mean_energy", "entropy", "log_z"],
               rows, config)
    return paths


_RUNNERS = {
    "kinetic": _run_kinetic,
    "canonical": _run_canonical,
    "npt": _run_npt,
    "grand": _run_grand,
    "heatflow": _run_heatflow,
    "sweep": _run_sweep,
    "oracle": _run_oracle,
}


def run_experiment(config: ExperimentConfig) -> dict:
    """Execute one experiment; returns the mapping of output names to paths."""
    if config.kind == "verify":
        raise ConfigError("verify runs through the CLI, not run_experiment")
    if config.kind not in _RUNNERS:
        raise ConfigError(f"unknown experiment kind {config.kind!r}")
    return _RUNNERS[config.kind](config)
