"""Command-line front end.

Usage::

    darksqueeze <derive|budget|evolve|sweep|oracle> [config] [--set key=value ...]

The configuration file holds one ``key = value`` per line; ``#`` starts a
comment. Frequencies (keys ending in ``_kHz``) are in 2pi kHz and times
(``_us``) in microseconds. Exit codes: 0 success, 1 configuration error,
2 numerical-validity failure.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import sys
import tempfile
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from typing import List, Optional, Sequence

from .analysis import error_budget
from .dynamics import (
    LEVELS,
    SHAPES,
    EvolveConfig,
    ModelLevel,
    Schedule,
    TimeSeries,
    run_protocol,
)
from .model import (
    ATOMIC,
    FIELD,
    ParameterError,
    PhysicalParams,
    ThresholdError,
    TruncationError,
    derive_couplings,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Flat run description; defaults are the Rb-87 ring-cavity benchmark."""

    g1_kHz: float = 50.0
    g2_kHz: float = 50.0
    omega1_kHz: float = 5000.0
    omega2_max_kHz: float = 4000.0
    delta1_kHz: float = 1.0e6
    delta2_kHz: float = 1.0e6
    phi1: float = 0.0
    phi2: float = 0.0
    cavity_offset_kHz: float = 0.0
    delta_a_kHz: Optional[float] = 100.0  # when set, overrides cavity_offset_kHz
    two_photon_offset_kHz: float = 0.0
    n_atoms: int = 1_000_000
    kappa_kHz: float = 25.0
    gamma_kHz: float = 6000.0
    shape: str = "sine_squared"
    t_total_us: float = 31.830988618379067
    steepness: float = 4.0
    n_steps: int = 400
    method: str = "piecewise"
    truncation_tol: float = 1e-6
    record_every: int = 10
    level: str = "two_mode"
    branch: str = ATOMIC
    open_system: bool = False
    keep_residual_stark: bool = False
    cavity_dim: int = 10
    b_dim: int = 60
    n_atoms_model: int = 2
    output: str = ""

    # -- conversion -------------------------------------------------------
    def physical_params(self) -> PhysicalParams:
        p = PhysicalParams(
            g1=self.g1_kHz, g2=self.g2_kHz,
            omega1_rabi=self.omega1_kHz, omega2_rabi_max=self.omega2_max_kHz,
            delta1=self.delta1_kHz, delta2=self.delta2_kHz,
            phi1=self.phi1, phi2=self.phi2,
            cavity_offset=self.cavity_offset_kHz, two_photon_offset=self.two_photon_offset_kHz,
            n_atoms=self.n_atoms, kappa=self.kappa_kHz, gamma=self.gamma_kHz,
        )
        if self.delta_a_kHz is not None:
            p = p.with_delta_a(self.delta_a_kHz)
        return p

    def schedule(self) -> Schedule:
        return Schedule(self.t_total_us, self.omega2_max_kHz, self.shape, self.steepness)

    def evolve_config(self) -> EvolveConfig:
        return EvolveConfig(n_steps=self.n_steps, method=self.method,
                            truncation_tol=self.truncation_tol, record_every=self.record_every)

    def model_level(self) -> ModelLevel:
        n = self.n_atoms_model if self.level in ("full", "spin") else None
        return ModelLevel(kind=self.level, dim_a=self.cavity_dim, dim_b=self.b_dim, n_atoms=n,
                          branch=self.branch, keep_residual_stark=self.keep_residual_stark)

    def validate(self) -> "RunConfig":
        """Raise ConfigError naming the first offending key."""
        try:
            self.physical_params()
        except ParameterError as exc:
            raise ConfigError(str(exc)) from None
        if self.shape not in SHAPES:
            raise ConfigError(f"shape must be one of {', '.join(SHAPES)}")
        if self.level not in LEVELS:
            raise ConfigError(f"level must be one of {', '.join(LEVELS)}")
        if self.branch not in (ATOMIC, FIELD):
            raise ConfigError("branch must be atomic or field")
        for name, build in (("schedule", self.schedule), ("evolve", self.evolve_config),
                            ("dims", self.model_level)):
            try:
                build()
            except ParameterError as exc:
                raise ConfigError(str(exc)) from None
        return self

    # -- text format ------------------------------------------------------
    def serialize(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            lines.append(f"{f.name} = {_format_value(v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str, overrides: Sequence[str] = ()) -> "RunConfig":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            values[key] = val
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}")
            key, val = (s.strip() for s in item.split("=", 1))
            values[key] = val
        return cls.from_strings(values)

    @classmethod
    def from_strings(cls, values: dict) -> "RunConfig":
        types = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, val in values.items():
            if key not in types:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, types[key], val)
        return cls(**kwargs)


_OPTIONAL_FLOATS = {"delta_a_kHz"}


def _format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(key: str, f: dataclasses.Field, val: str):
    default = f.default
    try:
        if key in _OPTIONAL_FLOATS:
            return None if val.lower() in ("none", "") else float(val)
        if isinstance(default, bool):
            low = val.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(val)
        if isinstance(default, int):
            x = float(val)
            if x != int(x):
                raise ValueError(val)
            return int(x)
        if isinstance(default, float):
            x = float(val)
            if not math.isfinite(x):
                raise ValueError(val)
            return x
        return val
    except ValueError:
        raise ConfigError(f"invalid value for {key}: {val!r}") from None


# ---------------------------------------------------------------- output helpers

def atomic_write(path: str, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, (int,)):
        return str(x)
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else ("nan" if math.isnan(x) else repr(x))
    return str(x)


def time_series_csv(ts: TimeSeries) -> str:
    buf = io.StringIO()
    buf.write(TimeSeries.CSV_HEADER + "\n")
    for row in ts.rows():
        buf.write(",".join(_fmt(float(v)) for v in row) + "\n")
    return buf.getvalue()


def _emit(text: str, path: str, out) -> None:
    if path:
        atomic_write(path, text)
    else:
        out.write(text)


# ---------------------------------------------------------------- commands

def _unit_rows(c):
    def num(x, fmt):
        return "n/a" if x is None else format(x, fmt)
    return [
        ("eta_e", num(c.eta_e, ".6g"), "2pi kHz"),
        ("eta_g", num(c.eta_g, ".6g"), "2pi kHz"),
        ("xi_e", num(c.xi_e, ".6g"), "2pi kHz"),
        ("xi_g", num(c.xi_g, ".6g"), "2pi kHz"),
        ("lambda1", num(c.lambda1, ".4f"), "2pi kHz"),
        ("lambda2", num(c.lambda2, ".4f"), "2pi kHz"),
    ]


def cmd_derive(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    p = cfg.physical_params()
    start = derive_couplings(p, 0.0)
    c = derive_couplings(p)
    rows = _unit_rows(c)
    mu_max = start.mu
    rows += [
        ("mu_max", "n/a" if mu_max is None else f"{mu_max:.2f}", "2pi kHz"),
        ("mu_min", "n/a" if c.mu is None else f"{c.mu:.2f}", "2pi kHz"),
        ("r", "n/a" if c.r is None else f"{c.r:.4f}", ""),
        ("theta", "n/a" if c.theta is None else f"{c.theta:.4f}", "rad"),
        ("theta_field", "n/a" if c.theta_field is None else f"{c.theta_field:.4f}", "rad"),
        ("delta_a", f"{c.delta_a:.6g}", "2pi kHz"),
        ("delta_b", f"{c.delta_b:.6g}", "2pi kHz"),
    ]
    for name, val, unit in rows:
        out.write(f"{name:<12} = {val:>14} {unit}".rstrip() + "\n")
    if not c.below_threshold:
        out.write("warning: lambda2 >= lambda1 at omega2_max (above threshold)\n")
    return EXIT_OK


BUDGET_FIELDS = ("T", "deltaE_max", "deltaE_min", "delta_a", "P_b", "kappa_e", "gamma_e", "total_error")


def cmd_budget(cfg: RunConfig, out=None) -> int:
    out = out or sys.stdout
    p = cfg.physical_params()
    if not p.delta_a > 0:
        raise ConfigError("delta_a must be positive for budget")
    b = error_budget(p, cfg.t_total_us)
    d = b.as_dict()
    for k in BUDGET_FIELDS:
        out.write(f"{k:<12} = {d[k]:.6g}\n")
    text = ",".join(BUDGET_FIELDS) + "\n" + ",".join(_fmt(float(d[k])) for k in BUDGET_FIELDS) + "\n"
    _emit(text, cfg.output, out)
    return EXIT_OK


def run_summary(cfg: RunConfig):
    """Run one protocol; returns (summary dict, ProtocolResult)."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = run_protocol(cfg.physical_params(), cfg.schedule(), cfg.evolve_config(),
                           cfg.model_level(), cfg.open_system)
    return res.summary(), res


def cmd_evolve(cfg: RunConfig, out=None, err=None) -> int:
    out, err = out or sys.stdout, err or sys.stderr
    summary, res = run_summary(cfg)
    _emit(time_series_csv(res.time_series), cfg.output, out)
    line = ("final_fidelity={final_fidelity:.12g} leakage={leakage:.12g} "
            "min_gap_kHz={min_gap_kHz:.12g} valid={valid}").format(**summary)
    (out if cfg.output else err).write(line + "\n")
    if not res.valid:
        err.write(f"invalid run: {res.time_series.breach_reason} at t = {res.time_series.breach_time} us\n")
        return EXIT_NUMERIC
    return EXIT_OK


SWEEP_FIELDS = ("final_fidelity", "leakage", "min_gap_kHz", "final_n_a", "final_n_b", "valid", "error")


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple

    def __post_init__(self):
        if self.parameter not in {f.name for f in fields(RunConfig)}:
            raise ConfigError(f"unknown config key {self.parameter!r}")
        if len(self.values) == 0:
            raise ConfigError("sweep grid is empty")
        for v in self.values:
            if not isinstance(v, str) and not math.isfinite(v):
                raise ConfigError("sweep grid values must be finite")

    def configs(self, base: RunConfig) -> List[RunConfig]:
        out = []
        for v in self.values:
            d = {f.name: _format_value(getattr(base, f.name)) for f in fields(base)}
            d[self.parameter] = _format_value(v)
            out.append(RunConfig.from_strings(d))
        return out


def _sweep_point(cfg: RunConfig) -> dict:
    try:
        cfg.validate()
        summary, _ = run_summary(cfg)
        summary["error"] = ""
        return summary
    except (ParameterError, ThresholdError, TruncationError, ConfigError, ValueError) as exc:
        return {k: float("nan") for k in SWEEP_FIELDS[:-2]} | {"valid": False, "error": str(exc)}


def worker_count(n_tasks: int) -> int:
    env = os.environ.get("DARKSQUEEZE_THREADS", "").strip()
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise ConfigError("DARKSQUEEZE_THREADS must be an integer") from None
    return max(1, min(cap, n_tasks))


def run_sweep(base: RunConfig, spec: SweepSpec) -> List[dict]:
    cfgs = spec.configs(base)
    workers = worker_count(len(cfgs))
    if workers == 1:
        return [_sweep_point(c) for c in cfgs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_point, cfgs))  # map preserves grid order


def cmd_sweep(cfg: RunConfig, spec: SweepSpec, out=None) -> int:
    out = out or sys.stdout
    rows = run_sweep(cfg, spec)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow((spec.parameter,) + SWEEP_FIELDS)
    for v, row in zip(spec.values, rows):
        writer.writerow([_fmt(v)] + [_fmt(row[k]) for k in SWEEP_FIELDS])
    _emit(buf.getvalue(), cfg.output, out)
    if all(not r["valid"] for r in rows):
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_oracle(cfg: RunConfig, negative_controls: bool = False, out=None) -> int:
    out = out or sys.stdout
    from .oracle import validation_suite

    p = cfg.physical_params()
    dims = (cfg.cavity_dim, cfg.b_dim)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        checks = validation_suite(p, cfg.level, negative_controls, dims)
    lines = []
    failed = False
    for c in checks:
        if c.inconclusive:
            status = "INCONCLUSIVE"
        elif c.expect_fail:
            status = "FAIL (expected)" if c.passed else "UNEXPECTED PASS"
            failed |= not c.passed
        else:
            status = "PASS" if c.passed else "FAIL"
            failed |= not c.passed
        out.write(f"{c.name:<34} {status:<16} value={c.value:.3e} threshold={c.threshold:.1e}\n")
        lines.append(c.to_json())
    if cfg.output:
        atomic_write(cfg.output, "\n".join(lines) + ("\n" if lines else ""))
    if not checks:
        out.write("no oracle checks apply to this configuration\n")
    return EXIT_NUMERIC if failed else EXIT_OK


# ---------------------------------------------------------------- entry point

def _parse_grid(text: str) -> tuple:
    items = [s.strip() for s in text.split(",") if s.strip()]
    try:
        return tuple(float(s) for s in items)
    except ValueError:
        return tuple(items)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="darksqueeze", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("derive", "budget", "evolve", "sweep", "oracle"):
        sp = sub.add_parser(name)
        sp.add_argument("config", nargs="?", help="key = value configuration file")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a configuration key (repeatable)")
        sp.add_argument("-o", "--output", help="output path (overrides the config key)")
        if name == "sweep":
            sp.add_argument("--param", required=True, help="configuration key to sweep")
            sp.add_argument("--values", required=True, help="comma-separated grid values")
        if name == "oracle":
            sp.add_argument("--negative-controls", action="store_true",
                            help="also run perturbed checks that are expected to fail")
    return parser


def load_config(path: Optional[str], overrides: Sequence[str], output: Optional[str] = None) -> RunConfig:
    text = ""
    if path:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    if output is not None:
        overrides = list(overrides) + [f"output={output}"]
    return RunConfig.parse(text, overrides).validate()


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.set, args.output)
        if args.command == "derive":
            return cmd_derive(cfg)
        if args.command == "budget":
            return cmd_budget(cfg)
        if args.command == "evolve":
            return cmd_evolve(cfg)
        if args.command == "sweep":
            return cmd_sweep(cfg, SweepSpec(args.param, _parse_grid(args.values)))
        return cmd_oracle(cfg, args.negative_controls)
    except (ConfigError, ParameterError, ThresholdError) as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except TruncationError as exc:
        sys.stderr.write(f"numerical error: {exc}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
