"""Detuning sweeps from flat ``key = value`` config files, written as CSV.

Usage::

    optoblockade sweep --config weak.cfg --output weak.csv --g=1
    optoblockade check

Exit codes: 0 success, 1 solver failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import io
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import analytic
from .hilbert import SpaceDims
from .liouvillian import (
    SolverError,
    TruncationDivergenceError,
    converge_truncation,
    liouvillian_for,
    steady_state,
)
from .model import COUPLING_MODELS, QUBIT_CONVENTIONS, SystemParams
from .observables import UndefinedStatisticsError, g2_zero, mean_photon

log = logging.getLogger(__name__)

__all__ = [
    "CSV_HEADER",
    "ConfigError",
    "METHODS",
    "SweepAbortedError",
    "SweepConfig",
    "SweepResult",
    "SweepRow",
    "main",
    "parse_config",
    "parse_config_text",
    "run_sweep",
    "serialize_config",
    "write_csv",
]

METHODS = ("master_rabi", "master_jc", "analytic")
CSV_HEADER = ("delta_ratio", "g2_master_rabi", "g2_master_jc", "g2_analytic",
              "mean_photon_master", "residual", "n_cav", "n_mech")
ERROR_MARK = "error"
MAX_FAILED_FRACTION = 0.10
PRESCAN_POINTS = 21

# config key -> (kind, SystemParams field or None)
FLOAT_PARAMS = ("nu_b", "nu_q", "chi", "g", "omega_drive", "gamma_a", "gamma_b", "gamma_q")
KEYS = FLOAT_PARAMS + ("temperature_mK", "qubit_convention", "coupling_model", "sweep_min",
                       "sweep_max", "points", "methods", "output", "n_cav", "n_mech")


class ConfigError(ValueError):
    """Malformed or out-of-range configuration."""


class SweepAbortedError(RuntimeError):
    """Too many grid points failed."""


@dataclass(frozen=True)
class SweepConfig:
    params: SystemParams = field(default_factory=SystemParams)
    sweep_min: float = -0.5
    sweep_max: float = 1.5
    points: int = 401
    methods: tuple = ("master_rabi",)
    output: str | None = None
    truncation: SpaceDims | None = None

    def __post_init__(self):
        if not (math.isfinite(self.sweep_min) and math.isfinite(self.sweep_max)):
            raise ConfigError("sweep range must be finite")
        if not self.sweep_min < self.sweep_max:
            raise ConfigError(f"sweep_min ({self.sweep_min}) must be < sweep_max ({self.sweep_max})")
        if int(self.points) != self.points or self.points < 2:
            raise ConfigError(f"points must be an integer >= 2, got {self.points!r}")
        if not self.methods:
            raise ConfigError("at least one method must be selected")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown method(s) {bad}; choose from {METHODS}")
        if self.params.nu_b <= 0:
            raise ConfigError("nu_b must be > 0 (the sweep variable is delta_a / nu_b)")

    def grid(self) -> np.ndarray:
        return np.linspace(self.sweep_min, self.sweep_max, self.points)

    def point_params(self, ratio: float, method: str) -> SystemParams:
        p = self.params.replace(delta_a=ratio * self.params.nu_b)
        if method == "master_rabi":
            return p.replace(coupling_model="rabi")
        if method == "master_jc":
            return p.replace(coupling_model="jaynes_cummings")
        return p


@dataclass
class SweepRow:
    delta_ratio: float
    g2: dict = field(default_factory=dict)  # method -> float or None (failed)
    mean_photon: dict = field(default_factory=dict)
    residual: float | None = None
    errors: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return bool(self.errors)


@dataclass
class SweepResult:
    config: SweepConfig
    rows: list
    truncation: SpaceDims | None

    def column(self, method: str) -> np.ndarray:
        return np.array([r.g2.get(method, np.nan) if r.g2.get(method) is not None else np.nan
                         for r in self.rows])

    @property
    def ratios(self) -> np.ndarray:
        return np.array([r.delta_ratio for r in self.rows])

    def to_csv(self) -> str:
        return write_csv(self)


# ------------------------------------------------------------------ config


def _defaults() -> dict:
    p = SystemParams()
    values = {k: getattr(p, k) for k in FLOAT_PARAMS}
    values.update(temperature_mK=_millikelvin(p.temperature), qubit_convention=p.qubit_convention,
                  coupling_model=p.coupling_model, sweep_min=-0.5, sweep_max=1.5,
                  points=401, methods=("master_rabi",), output=None, n_cav=None, n_mech=None)
    return values


def _convert(key: str, raw: str):
    raw = raw.strip()
    if key in ("qubit_convention", "coupling_model"):
        allowed = QUBIT_CONVENTIONS if key == "qubit_convention" else COUPLING_MODELS
        if raw not in allowed:
            raise ConfigError(f"{key} must be one of {allowed}, got {raw!r}")
        return raw
    if key == "methods":
        methods = tuple(m.strip() for m in raw.split(",") if m.strip())
        return methods
    if key == "output":
        return raw or None
    if key in ("points", "n_cav", "n_mech"):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {raw!r}") from None
    try:
        value = float(raw)
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {raw!r}") from None
    if not math.isfinite(value):
        raise ConfigError(f"{key} must be finite, got {raw!r}")
    return value


def _check_ranges(values: dict):
    for key in FLOAT_PARAMS + ("temperature_mK",):
        if values[key] < 0:
            raise ConfigError(f"{key} out of range: must be >= 0, got {values[key]!r}")
    for key in ("n_cav", "n_mech"):
        if values[key] is not None and values[key] < 2:
            raise ConfigError(f"{key} out of range: must be >= 2, got {values[key]!r}")
    if (values["n_cav"] is None) != (values["n_mech"] is None):
        raise ConfigError("n_cav and n_mech must be given together")


def _build(values: dict) -> SweepConfig:
    _check_ranges(values)
    params = SystemParams(**{k: values[k] for k in FLOAT_PARAMS},
                          temperature=values["temperature_mK"] * 1e-3,
                          qubit_convention=values["qubit_convention"],
                          coupling_model=values["coupling_model"])
    trunc = None
    if values["n_cav"] is not None:
        trunc = SpaceDims(values["n_cav"], values["n_mech"])
    return SweepConfig(params, values["sweep_min"], values["sweep_max"], values["points"],
                       tuple(values["methods"]), values["output"], trunc)


def _parse_lines(text: str, values: dict) -> dict:
    for lineno, line in enumerate(io.StringIO(text), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, raw = (s.strip() for s in stripped.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _convert(key, raw)
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    return values


def parse_config_text(text: str, overrides: dict | None = None) -> SweepConfig:
    """Parse config text; ``overrides`` (key -> raw string) take precedence."""
    values = _parse_lines(text, _defaults())
    for key, raw in (overrides or {}).items():
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = _convert(key, raw)
    try:
        return _build(values)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_config(path, overrides: dict | None = None) -> SweepConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, overrides)


def _millikelvin(t: float) -> float:
    """A mK value that parses back to exactly ``t`` kelvin."""
    m = t * 1e3
    for _ in range(4):
        for cand in (m, np.nextafter(m, np.inf), np.nextafter(m, -np.inf)):
            if float(cand) * 1e-3 == t:
                return float(cand)
        m = float(np.nextafter(m, np.inf if m * 1e-3 < t else -np.inf))
    return t * 1e3


def serialize_config(cfg: SweepConfig) -> str:
    """Canonical text form: every key, fixed order, floats in repr form."""
    p = cfg.params
    values = {k: getattr(p, k) for k in FLOAT_PARAMS}
    values.update(temperature_mK=_millikelvin(p.temperature), qubit_convention=p.qubit_convention,
                  coupling_model=p.coupling_model, sweep_min=cfg.sweep_min,
                  sweep_max=cfg.sweep_max, points=cfg.points, methods=",".join(cfg.methods),
                  output=cfg.output or "")
    if cfg.truncation is not None:
        values.update(n_cav=cfg.truncation.n_cav, n_mech=cfg.truncation.n_mech)
    lines = []
    for key in KEYS:
        if key not in values:
            continue
        v = values[key]
        lines.append(f"{key} = {float(v)!r}" if isinstance(v, float) else f"{key} = {v}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ sweeps

SOLVER_ERRORS = (SolverError, UndefinedStatisticsError, analytic.ParameterDegeneracyError,
                 np.linalg.LinAlgError, ArithmeticError)


def _master_methods(cfg: SweepConfig):
    return [m for m in cfg.methods if m.startswith("master")]


def _reference_method(cfg: SweepConfig):
    masters = _master_methods(cfg)
    preferred = "master_rabi" if cfg.params.coupling_model == "rabi" else "master_jc"
    return preferred if preferred in masters else (masters[0] if masters else None)


def choose_truncation(cfg: SweepConfig, d0: SpaceDims = SpaceDims()) -> SpaceDims | None:
    """Converged truncation at the grid point with the largest photon number.

    The point is picked from a coarse pre-scan at ``d0`` using the reference
    master-equation model.
    """
    method = _reference_method(cfg)
    if method is None:
        return None
    if cfg.truncation is not None:
        return cfg.truncation
    grid = cfg.grid()
    coarse = grid[np.unique(np.linspace(0, len(grid) - 1, min(PRESCAN_POINTS, len(grid))).astype(int))]
    best, best_n, x0 = coarse[0], -1.0, None
    for ratio in coarse:
        p = cfg.point_params(ratio, method)
        try:
            rho = steady_state(liouvillian_for(p, d0), d0, x0=x0)
        except SolverError as exc:
            log.warning("pre-scan failed at %.6g: %s", ratio, exc)
            continue
        x0 = rho.matrix.ravel()
        n = mean_photon(rho)
        if n > best_n:
            best, best_n = ratio, n
    log.info("most sensitive point delta_ratio=%.6g (<n> = %.3g)", best, best_n)
    return converge_truncation(cfg.point_params(best, method), d0)


def _run_block(cfg: SweepConfig, ratios, d: SpaceDims | None):
    rows = []
    warm = {}
    ref = _reference_method(cfg)
    for ratio in ratios:
        row = SweepRow(float(ratio))
        residuals = []
        for method in cfg.methods:
            p = cfg.point_params(ratio, method)
            try:
                if method == "analytic":
                    row.g2[method] = analytic.weak_drive_g2(analytic.weak_drive_closed_form(p))
                    continue
                rho = steady_state(liouvillian_for(p, d), d, x0=warm.get(method))
                warm[method] = rho.matrix.ravel()
                row.mean_photon[method] = mean_photon(rho)
                residuals.append(rho.residual)
                row.g2[method] = g2_zero(rho)
            except SOLVER_ERRORS as exc:
                row.g2[method] = None
                row.errors[method] = f"{type(exc).__name__}: {exc}"
                log.warning("delta_ratio=%.6g %s failed: %s", ratio, method, exc)
        if residuals:
            row.residual = max(residuals)
        if ref is not None and ref not in row.mean_photon and row.mean_photon:
            row.mean_photon[ref] = next(iter(row.mean_photon.values()))
        rows.append(row)
    return rows


def run_sweep(cfg: SweepConfig, *, workers: int = 1, d0: SpaceDims = SpaceDims()) -> SweepResult:
    """Evaluate every selected method on the detuning grid.

    Master-equation methods share one truncation (``cfg.truncation`` or the
    converged one at the most sensitive point). Failed points are kept with
    an error marker; more than 10% failed rows raises SweepAbortedError.
    """
    try:
        d = choose_truncation(cfg, d0)
    except TruncationDivergenceError:
        raise
    grid = cfg.grid()
    if workers <= 1:
        rows = _run_block(cfg, grid, d)
    else:
        blocks = [b for b in np.array_split(grid, workers) if len(b)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = [r for part in pool.map(_run_block, [cfg] * len(blocks), blocks,
                                            [d] * len(blocks)) for r in part]
    failed = sum(r.failed for r in rows)
    if failed > MAX_FAILED_FRACTION * len(rows):
        raise SweepAbortedError(f"{failed} of {len(rows)} grid points failed")
    return SweepResult(cfg, rows, d)


def _fmt(x) -> str:
    return format(float(x), ".12g")


def write_csv(result: SweepResult) -> str:
    out = [",".join(CSV_HEADER)]
    ref = _reference_method(result.config)
    d = result.truncation
    for row in result.rows:
        fields = [_fmt(row.delta_ratio)]
        for method in METHODS[:3]:
            if method not in result.config.methods:
                fields.append("")
            elif row.g2.get(method) is None:
                fields.append(ERROR_MARK)
            else:
                fields.append(_fmt(row.g2[method]))
        n = row.mean_photon.get(ref) if ref else None
        fields.append("" if ref is None else (ERROR_MARK if n is None else _fmt(n)))
        fields.append("" if row.residual is None else _fmt(row.residual))
        fields += ["", ""] if d is None else [str(d.n_cav), str(d.n_mech)]
        out.append(",".join(fields))
    return "\n".join(out) + "\n"


# ------------------------------------------------------------------ check


def run_checks(stream=None) -> bool:
    """Fast invariant checks on small truncations; prints one line each."""
    stream = sys.stdout if stream is None else stream
    from .liouvillian import DensityMatrix, evolve, relaxation_time
    from .model import build_rotating_hamiltonian

    rng = np.random.default_rng(1)
    d = SpaceDims(3, 4)
    p = SystemParams(g=1.0)
    results = []

    H = build_rotating_hamiltonian(p, d)
    results.append(("hamiltonian hermitian", H.hermiticity_error() <= 1e-12))
    L = liouvillian_for(p, d)
    results.append(("liouvillian trace preserving", L.trace_defect() <= 1e-10 * L.max_entry()))
    x = rng.normal(size=(d.total_dim,) * 2) + 1j * rng.normal(size=(d.total_dim,) * 2)
    y = L.apply(x + x.conj().T)
    results.append(("hermiticity preserved", np.abs(y - y.conj().T).max() <= 1e-10 * np.abs(y).max()))
    rho = steady_state(L, d)
    results.append(("steady-state residual", rho.residual <= 1e-10))
    rho_t = evolve(L, DensityMatrix.pure(0, d), 40 * relaxation_time(p))
    results.append(("evolve reaches steady state", np.abs(rho_t.matrix - rho.matrix).max() <= 1e-6))
    worst = 0.0
    for _ in range(20):
        q = SystemParams(delta_a=rng.uniform(-10, 10), g=rng.uniform(0, 5), chi=rng.uniform(0, 1),
                         omega_drive=rng.uniform(0.001, 0.1), gamma_a=rng.uniform(0.01, 0.5))
        a, b = analytic.weak_drive_closed_form(q), analytic.weak_drive_linear_solve(q)
        worst = max(worst, max(abs(a.amplitudes[k] - b.amplitudes[k]) for k in analytic.AMPLITUDE_KEYS))
    results.append(("closed form equals linear solve", worst <= 1e-10))
    up, _ = analytic.dressed_energies(p, 0, 1)
    results.append(("dressed level n=0 is +g", math.isclose(up.energy, 2 * math.pi * p.g)))
    for name, ok in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}", file=stream)
    return all(ok for _, ok in results)


# ------------------------------------------------------------------ entry


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="optoblockade", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sweep = sub.add_parser("sweep", help="run a detuning sweep and write CSV")
    sweep.add_argument("--config", help="flat 'key = value' config file")
    sweep.add_argument("--workers", type=int, default=1)
    sweep.add_argument("-v", "--verbose", action="store_true")
    for key in KEYS:
        sweep.add_argument(f"--{key}", dest=key, default=None, metavar="VALUE")
    sub.add_parser("check", help="run the fast invariant checks")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors
        return int(exc.code or 0)
    if args.command == "check":
        logging.basicConfig(level=logging.WARNING)
        try:
            return 0 if run_checks() else 1
        except SOLVER_ERRORS as exc:
            print(f"solver failure: {exc}", file=sys.stderr)
            return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    overrides = {k: getattr(args, k) for k in KEYS if getattr(args, k) is not None}
    try:
        cfg = (parse_config(args.config, overrides) if args.config
               else parse_config_text("", overrides))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if cfg.output is None:
        print("config error: no output path (set 'output' or --output)", file=sys.stderr)
        return 2
    try:
        result = run_sweep(cfg, workers=args.workers)
    except (SweepAbortedError, TruncationDivergenceError, *SOLVER_ERRORS) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1
    with open(cfg.output, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(write_csv(result))
    failed = sum(r.failed for r in result.rows)
    print(f"wrote {len(result.rows)} rows to {cfg.output} ({failed} failed), "
          f"truncation {result.truncation}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
