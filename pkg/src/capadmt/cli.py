"""Command-line front end.

    capadmt curves     --config run.json --output out/
    capadmt dmt        --config run.json
    capadmt array-gain --output out/
    capadmt reproduce  --figure fig6 --trials 100000 --seed 1
    capadmt validate   --output out/

Settings come from built-in defaults, then the JSON config, then flags.
Exit status: 0 success, 1 validation failure, 2 configuration or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import enum
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import scenarios as sc
from . import validation
from .errors import ConfigError, ConvergenceError, DomainError, NumericalError, UnsupportedSpectrumError
from .montecarlo import SimConfig
from .performance import array_gain_ratio_spda, element_count, element_spacing, occupation_ratio
from .spectrum import ApertureConfig, Layout, Side

log = logging.getLogger("capadmt")

EXIT_OK, EXIT_VALIDATION, EXIT_CONFIG = 0, 1, 2
DEFAULT_POWER_GRID_DBM = tuple(float(p) for p in range(-20, 41, 5))
MANIFEST = "manifest.json"
REPORT = "validation_report.json"


class Command(str, enum.Enum):
    CURVES = "curves"
    DMT = "dmt"
    ARRAY_GAIN = "array-gain"
    REPRODUCE = "reproduce"
    VALIDATE = "validate"


@dataclass(frozen=True)
class ScenarioSpec:
    """Link kind, layout, compared arrays and aperture geometry."""

    link: str = "MISO"
    layout: Layout = Layout.LINEAR
    arrays: tuple = ("capa", "spda_half", "spda_full")
    quantities: tuple = ("op", "adr")
    target_rate: float = 5.0
    aperture: ApertureConfig = field(default_factory=ApertureConfig)

    def __post_init__(self) -> None:
        link = str(self.link).upper()
        if link not in sc.LINKS:
            raise ConfigError(f"scenario.link must be one of {sc.LINKS}, got {self.link!r}")
        object.__setattr__(self, "link", link)
        try:
            object.__setattr__(self, "layout", Layout(self.layout))
        except ValueError:
            raise ConfigError(f"scenario.layout must be 'linear' or 'planar', got {self.layout!r}") from None
        arrays = tuple(self.arrays)
        bad = [a for a in arrays if a not in sc.ARRAYS]
        if not arrays or bad:
            raise ConfigError(f"scenario.arrays must be a nonempty subset of {sorted(sc.ARRAYS)}; bad: {bad}")
        object.__setattr__(self, "arrays", arrays)
        qs = tuple(self.quantities)
        if not qs or any(q not in sc.QUANTITIES for q in qs):
            raise ConfigError(f"scenario.quantities must be a nonempty subset of {sc.QUANTITIES}")
        object.__setattr__(self, "quantities", qs)
        if not (self.target_rate > 0 and math.isfinite(self.target_rate)):
            raise ConfigError("scenario.target_rate must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioSpec":
        data = dict(data)
        _reject_unknown(data, {f.name for f in dataclasses.fields(cls)}, "scenario")
        if "aperture" in data:
            try:
                data["aperture"] = ApertureConfig.from_dict(data["aperture"])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"scenario.aperture: {exc}") from exc
        for key in ("arrays", "quantities"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)

    def to_dict(self) -> dict:
        return {
            "link": self.link,
            "layout": self.layout.value,
            "arrays": list(self.arrays),
            "quantities": list(self.quantities),
            "target_rate": self.target_rate,
            "aperture": self.aperture.to_dict(),
        }


@dataclass(frozen=True)
class RunConfig:
    """One CLI invocation, fully resolved."""

    command: Command
    scenario: ScenarioSpec = field(default_factory=ScenarioSpec)
    snr_grid_db: tuple = ()
    methods: tuple = sc.METHODS
    output_path: str = "capadmt_out"
    seed: int = 0
    trials: int = 100_000
    workers: int = 1
    figure: Optional[str] = None
    r_points: int = 99
    importance: bool = False
    noise_dbm: float = field(default_factory=sc.noise_power_dbm)
    cache_dir: Optional[str] = None
    trial_scale: float = 1.0
    checks: Optional[tuple] = None

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "command", Command(self.command))
        except ValueError:
            raise ConfigError(f"unknown command {self.command!r}") from None
        grid = tuple(float(x) for x in self.snr_grid_db)
        if not grid:
            grid = tuple(float(x) for x in sc.snr_db_from_power(DEFAULT_POWER_GRID_DBM, self.noise_dbm))
        if not all(math.isfinite(x) for x in grid):
            raise ConfigError("the SNR grid must be finite")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("the SNR grid must be strictly increasing")
        object.__setattr__(self, "snr_grid_db", grid)
        methods = tuple(self.methods)
        if not methods:
            raise ConfigError(f"select at least one method from {sc.METHODS}")
        bad = [m for m in methods if m not in sc.METHODS]
        if bad:
            raise ConfigError(f"unknown method(s) {bad}; expected a subset of {sc.METHODS}")
        object.__setattr__(self, "methods", tuple(m for m in sc.METHODS if m in methods))
        if self.figure is not None and self.figure not in sc.FIGURES:
            raise ConfigError(f"--figure must be one of {sorted(sc.FIGURES)}, got {self.figure!r}")
        if self.r_points < 1:
            raise ConfigError("r_points must be >= 1")
        if not self.trial_scale > 0:
            raise ConfigError("trial_scale must be positive")
        if self.checks is not None:
            bad = [c for c in self.checks if c not in validation.CHECKS]
            if bad:
                raise ConfigError(f"unknown check id(s) {bad}; valid ids are {sorted(validation.CHECKS)}")
        # trials, seed and workers are checked by SimConfig
        self.sim()

    def sim(self) -> SimConfig:
        return SimConfig(int(self.trials), seed=int(self.seed), workers=int(self.workers))

    def request(self, figure: str) -> sc.CurveRequest:
        return sc.CurveRequest(figure, self.methods, self.sim(), self.noise_dbm, self.r_points, self.importance)

    def to_dict(self) -> dict:
        return {
            "command": self.command.value,
            "scenario": self.scenario.to_dict(),
            "snr_grid_db": list(self.snr_grid_db),
            "methods": list(self.methods),
            "seed": self.seed,
            "trials": self.trials,
            "figure": self.figure,
            "r_points": self.r_points,
            "importance": self.importance,
            "noise_dbm": self.noise_dbm,
        }


_CONFIG_KEYS = {
    "command", "scenario", "snr_grid_db", "power_grid_dbm", "snr_range_db", "power_range_dbm", "methods",
    "output", "seed", "trials", "workers", "figure", "r_points", "importance", "noise_dbm", "cache_dir",
    "trial_scale", "checks",
}


def _reject_unknown(data: dict, allowed: set, where: str) -> None:
    extra = sorted(set(data) - allowed)
    if extra:
        raise ConfigError(f"unknown {where} key(s) {extra}; allowed: {sorted(allowed)}")


def _range(spec, name: str) -> list[float]:
    try:
        start, stop, step = float(spec["start"]), float(spec["stop"]), float(spec["step"])
    except (KeyError, TypeError, ValueError):
        raise ConfigError(f"{name} needs numeric start, stop and step") from None
    if not step > 0:
        raise ConfigError(f"{name}.step must be positive")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [start + i * step for i in range(max(n, 0))]


def _grid_from(data: dict, noise_dbm: float) -> Optional[list[float]]:
    given = [k for k in ("snr_grid_db", "power_grid_dbm", "snr_range_db", "power_range_dbm") if k in data]
    if len(given) > 1:
        raise ConfigError(f"give one SNR axis, not {given}")
    if not given:
        return None
    key = given[0]
    vals = _range(data[key], key) if key.endswith("_range_db") or key.endswith("_range_dbm") else list(data[key])
    if key.startswith("power"):
        vals = [float(v) for v in sc.snr_db_from_power(vals, noise_dbm)]
    return vals


def load_config_file(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("the config must be a JSON object")
    return data


def resolve_config(command: str, file_data: Optional[dict] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Merge JSON settings with flag overrides (flags win)."""
    data = dict(file_data or {})
    _reject_unknown(data, _CONFIG_KEYS, "config")
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    noise = float(data.get("noise_dbm", sc.noise_power_dbm()))
    kw = dict(
        command=command,
        scenario=ScenarioSpec.from_dict(data.get("scenario", {})),
        snr_grid_db=tuple(_grid_from(data, noise) or ()),
        noise_dbm=noise,
    )
    simple = {"methods", "seed", "trials", "workers", "figure", "r_points", "importance", "cache_dir", "trial_scale"}
    for key in simple & set(data):
        kw[key] = data[key]
    if "output" in data:
        kw["output_path"] = data["output"]
    if "checks" in data and data["checks"] is not None:
        kw["checks"] = tuple(int(c) for c in data["checks"])
    for key in ("seed", "trials", "workers", "r_points"):
        if key in kw and not isinstance(kw[key], int):
            raise ConfigError(f"{key} must be an integer")
    if "methods" in kw:
        kw["methods"] = tuple(kw["methods"])
    return RunConfig(**kw)


# --- commands ---------------------------------------------------------------------


def _links(cfg: RunConfig):
    s = cfg.scenario
    return [sc.build_link(s.aperture, s.link, a, s.layout, target_rate=s.target_rate, cache_dir=cfg.cache_dir) for a in s.arrays]


def _write_all(curves, cfg: RunConfig) -> list[str]:
    names = [c.filename for c in curves]
    dup = {n for n in names if names.count(n) > 1}
    if dup:
        raise ConfigError(f"duplicate output files {sorted(dup)}")
    for c in curves:
        sc.write_curve(c, cfg.output_path)
    _write_json(os.path.join(cfg.output_path, MANIFEST), {"config": cfg.to_dict(), "files": sorted(names)})
    return names


def _write_json(path: str, doc: dict) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_curves(cfg: RunConfig) -> list[str]:
    links = _links(cfg)
    req = cfg.request(cfg.figure or "curves")
    curves = []
    for q in cfg.scenario.quantities:
        curves += sc.quantity_curves(req, links, q, cfg.snr_grid_db)
    return _write_all(curves, cfg)


def run_dmt(cfg: RunConfig) -> list[str]:
    links = _links(cfg)
    s = cfg.scenario
    upper = s.layout is Layout.PLANAR and s.link != "MIMO"
    curves = sc.dmt_curve_set(cfg.request(cfg.figure or "dmt"), links, s.aperture, upper)
    return _write_all(curves, cfg)


ARRAY_GAIN_FILE = "array_gain_ratio.csv"


def run_array_gain(cfg: RunConfig) -> list[str]:
    """Array-gain ratio eta_t eta_r of every SPDA of the scenario against the CAPA."""
    s = cfg.scenario
    rows = []
    for a in s.arrays:
        if a == "capa":
            continue
        c = sc.spacing_config(s.aperture, a)
        rows.append([
            a, s.link, s.layout.value,
            repr(element_spacing(c, Side.RX) / c.wavelength), repr(element_spacing(c, Side.TX) / c.wavelength),
            str(element_count(c, Side.RX, s.layout)), str(element_count(c, Side.TX, s.layout)),
            repr(occupation_ratio(c, Side.RX, s.layout)), repr(occupation_ratio(c, Side.TX, s.layout)),
            repr(array_gain_ratio_spda(c, s.link, s.layout)), "closed",
        ])
    os.makedirs(cfg.output_path, exist_ok=True)
    path = os.path.join(cfg.output_path, ARRAY_GAIN_FILE)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["array", "link", "layout", "spacing_rx_wavelengths", "spacing_tx_wavelengths", "elements_rx",
                    "elements_tx", "occupation_rx", "occupation_tx", "ratio", "method"])
        w.writerows(rows)
    return [ARRAY_GAIN_FILE]


def run_reproduce(cfg: RunConfig) -> list[str]:
    figures = [cfg.figure] if cfg.figure else list(sc.FIGURES)
    curves = []
    for f in figures:
        curves += sc.figure_curves(f, cfg.request(f), cfg.scenario.aperture, cfg.scenario.target_rate, cfg.cache_dir)
    return _write_all(curves, cfg)


def run_validate(cfg: RunConfig, echo=print) -> bool:
    ctx = validation.Context(seed=cfg.seed, workers=cfg.workers, trial_scale=cfg.trial_scale, figure_trials=cfg.trials)
    results = validation.run_all(ctx, cfg.checks, echo)
    ok = all(r.passed for r in results)
    doc = {
        "passed": ok,
        "seed": cfg.seed,
        "trial_scale": cfg.trial_scale,
        "checks": [r.to_dict() for r in results],
    }
    _write_json(os.path.join(cfg.output_path, REPORT), doc)
    return ok


# --- argument parsing ---------------------------------------------------------------


def _methods(text: str) -> tuple:
    return tuple(m.strip() for m in text.split(",") if m.strip())


def _checks(text: str) -> tuple:
    try:
        return tuple(int(c) for c in text.split(",") if c.strip())
    except ValueError:
        raise argparse.ArgumentTypeError("--checks takes comma-separated integers") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--output", help="output directory")
    common.add_argument("--seed", type=int, help="Monte-Carlo seed (0 <= seed < 2^64)")
    common.add_argument("--trials", type=int, help="Monte-Carlo trials per curve")
    common.add_argument("--workers", type=int, help="worker threads; results do not depend on it")
    common.add_argument("--methods", type=_methods, help="comma-separated subset of closed,asymptotic,montecarlo")
    common.add_argument("--figure", help="figure preset: " + "|".join(sc.FIGURES))
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="capadmt", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("curves", parents=[common], help="OP/ADR curves of one scenario")
    sub.add_parser("dmt", parents=[common], help="diversity and array gain versus multiplexing gain")
    sub.add_parser("array-gain", parents=[common], help="SPDA/CAPA array-gain ratios")
    sub.add_parser("reproduce", parents=[common], help="regenerate a figure's data (all figures without --figure)")
    v = sub.add_parser("validate", parents=[common], help="run the acceptance checks and write a JSON report")
    v.add_argument("--checks", type=_checks, help="comma-separated check ids (default: all)")
    v.add_argument("--trial-scale", type=float, dest="trial_scale", help="multiply every trial budget")
    return p


RUNNERS = {
    Command.CURVES: run_curves,
    Command.DMT: run_dmt,
    Command.ARRAY_GAIN: run_array_gain,
    Command.REPRODUCE: run_reproduce,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        file_data = load_config_file(args.config) if args.config else {}
        overrides = {k: getattr(args, k, None) for k in ("seed", "trials", "workers", "methods", "figure", "checks", "trial_scale")}
        overrides["output"] = args.output
        cfg = resolve_config(args.command, file_data, overrides)
        if cfg.command is Command.VALIDATE:
            ok = run_validate(cfg)
            print(f"report: {os.path.join(cfg.output_path, REPORT)}")
            return EXIT_OK if ok else EXIT_VALIDATION
        files = RUNNERS[cfg.command](cfg)
        print(f"wrote {len(files)} file(s) to {cfg.output_path}")
        return EXIT_OK
    except (ConfigError, DomainError, UnsupportedSpectrumError, NumericalError, ConvergenceError) as exc:
        print(f"capadmt: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"capadmt: I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
