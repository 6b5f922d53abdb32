"""Scenario configuration and the end-to-end pipeline: drive -> field -> invariants -> strip."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import io
from .errors import ConfigInvalid, MicromotionError, NoEdgeMode, NonContractibleCurve, UnknownScenario
from .models import HarmonicDrive, PiecewiseDrive
from .strip import (
    EDGE_THRESHOLD,
    _profile_of,
    edge_modes,
    edge_profile,
    fit_localization,
    quasienergy_spectrum,
)
from .topology import linking_number, preimage_curves, pseudospin_grid, summarize
from .topology.curves import curves_to_rows

logger = logging.getLogger(__name__)

MODELS = ("piecewise", "harmonic")
SWEEP_PARAMS = ("t0", "mu2", "mu", "omega")
_MODEL_KEYS = {"piecewise": ("mu1", "mu2", "t0", "T"), "harmonic": ("mu", "omega")}

CURVE_HEADER = ("curve", "point", "k1", "k2", "alpha", "w1", "w2", "w3")
SPECTRUM_HEADER = ("k2", "band", "quasienergy", "w_left", "w_right")
PROFILE_HEADER = ("site", "probability")
FIELD_HEADER = ("i", "j", "l", "k1", "k2", "alpha", "nx", "ny", "nz")


@dataclass
class ScenarioConfig:
    """Flat scenario description; ``from_mapping`` rejects unknown keys.

    ``curve_offset`` shifts the field grid by that fraction of a cell on
    every axis, which keeps the grid nodes off the symmetry planes where
    preimage curves would otherwise run along cell edges.
    """

    name: str
    model: str
    mu1: float | None = None
    mu2: float | None = None
    t0: float | None = None
    T: float | None = None
    mu: float | None = None
    omega: float | None = None
    hopf_grid: int = 48
    alpha_points: int | None = None
    strip_sites: int = 60
    k2_points: int = 121
    k2_star: float = float(np.pi / 60)
    branch: str = "lower"
    stencil: str = "lattice"
    curve_offset: float = 0.5
    hopf_tol: float = 0.05
    edge_threshold: float = EDGE_THRESHOLD
    edge_window: float = 0.1
    strip_tol: float = 1e-6
    out: str | None = None
    threads: int = 1
    dump_field: bool = False

    @classmethod
    def from_mapping(cls, data: dict, base: ScenarioConfig | None = None) -> ScenarioConfig:
        known = {f.name for f in fields(cls)}
        data = dict(data)
        base_name = data.pop("base", None)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {', '.join(unknown)}", keys=unknown)
        if base_name is not None:
            base = get_scenario(base_name)
        if base is not None:
            merged = asdict(base)
            if "model" in data and data["model"] != base.model:
                for k in _MODEL_KEYS.get(base.model, ()):
                    merged[k] = None
            merged.update(data)
            data = merged
        if "name" not in data or "model" not in data:
            raise ConfigInvalid("config needs 'name' and 'model'")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def validate(self):
        def bad(msg, **ctx):
            raise ConfigInvalid(f"{self.name}: {msg}", **ctx)

        if self.model not in MODELS:
            bad(f"model must be one of {MODELS}, got {self.model!r}")
        for k in _MODEL_KEYS[self.model]:
            v = getattr(self, k)
            if k == "T" and v is None:
                continue
            if v is None or not np.isfinite(v):
                bad(f"parameter {k} is required for the {self.model} model", key=k)
        other = _MODEL_KEYS["harmonic" if self.model == "piecewise" else "piecewise"]
        stray = [k for k in other if getattr(self, k) is not None]
        if stray:
            bad(f"parameters {stray} do not apply to the {self.model} model", keys=stray)
        if self.model == "piecewise":
            T = self.period
            if not T > 0:
                bad("T must be positive")
            if not 0 < self.t0 < T:
                bad(f"need 0 < t0 < T, got t0={self.t0}, T={T}")
        elif not self.omega > 0:
            bad("omega must be positive")
        if self.hopf_grid < 8 or (self.alpha_points is not None and self.alpha_points < 8):
            bad("Hopf grid counts must be at least 8")
        if self.strip_sites < 8:
            bad("strip_sites must be at least 8")
        if self.k2_points < 3:
            bad("k2_points must be at least 3")
        if self.threads < 1:
            bad("threads must be at least 1")
        if self.branch not in ("lower", "upper"):
            bad("branch must be 'lower' or 'upper'")
        if self.stencil not in ("lattice", "central"):
            bad("stencil must be 'lattice' or 'central'")
        if not 0 < self.edge_threshold < 1 or not 0 < self.edge_window < 1:
            bad("edge_threshold and edge_window must lie in (0, 1)")
        if not 0 < self.hopf_tol < 0.5:
            bad("hopf_tol must lie in (0, 0.5)")

    @property
    def period(self) -> float:
        if self.model == "harmonic":
            return 2 * np.pi / self.omega
        return 1.0 if self.T is None else self.T

    def drive(self):
        if self.model == "piecewise":
            return PiecewiseDrive(self.mu1, self.mu2, self.t0, self.period)
        return HarmonicDrive(self.mu, self.omega)

    def parameters(self) -> dict:
        keys = _MODEL_KEYS[self.model]
        out = {k: getattr(self, k) for k in keys}
        if self.model == "piecewise":
            out["T"] = self.period
        return out

    def to_dict(self) -> dict:
        return asdict(self)


BUILTIN = {
    "example1-trivial": ScenarioConfig("example1-trivial", "piecewise", mu1=-10.0, mu2=-5.0, t0=0.1, T=1.0),
    "example1-nontrivial": ScenarioConfig("example1-nontrivial", "piecewise", mu1=-10.0, mu2=-2.0, t0=0.1, T=1.0),
    "example2-trivial": ScenarioConfig("example2-trivial", "harmonic", mu=-10.0, omega=12.0),
    "example2-nontrivial": ScenarioConfig("example2-nontrivial", "harmonic", mu=-2.0, omega=4.0),
}


def get_scenario(name: str) -> ScenarioConfig:
    try:
        return replace(BUILTIN[name])
    except KeyError:
        raise UnknownScenario(f"unknown scenario {name!r}; known: {', '.join(BUILTIN)}", name=name) from None


def load_config(source) -> ScenarioConfig:
    """A builtin name, a path to a flat JSON object, or a mapping.

    A file may name a builtin under ``"base"`` and override any of its keys.
    """
    if isinstance(source, ScenarioConfig):
        source.validate()
        return source
    if isinstance(source, dict):
        return ScenarioConfig.from_mapping(source)
    text = str(source)
    if text in BUILTIN:
        return get_scenario(text)
    path = Path(text)
    if not path.is_file():
        raise UnknownScenario(f"{text!r} is neither a builtin scenario nor a config file", name=text)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(data, dict) or any(isinstance(v, (dict, list)) for v in data.values()):
        raise ConfigInvalid(f"{path}: config must be a flat JSON object")
    data.setdefault("name", path.stem)
    return ScenarioConfig.from_mapping(data)


def list_scenarios(extra=()) -> list[tuple[str, dict]]:
    """Builtin scenarios followed by any user configs, as ``(name, parameters)``."""
    out = [(name, cfg.parameters() | {"model": cfg.model}) for name, cfg in BUILTIN.items()]
    for src in extra:
        cfg = load_config(src)
        out.append((cfg.name, cfg.parameters() | {"model": cfg.model}))
    return out


@dataclass
class RunReport:
    scenario: str
    config: dict
    status: str = "ok"
    topology: dict | None = None
    edge_modes: dict = field(default_factory=dict)
    localization: dict = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @property
    def hopf_rounded(self):
        return None if self.topology is None else self.topology["hopf_rounded"]

    def edge_count(self, gap: str) -> int:
        return int(self.edge_modes.get(gap, {}).get("count", 0))

    def as_dict(self) -> dict:
        return asdict(self)

    def summary(self) -> dict:
        """Everything except wall-clock timings and the output path, so reruns are byte-identical."""
        d = self.as_dict()
        d.pop("timings")
        d["config"] = {k: v for k, v in d["config"].items() if k != "out"}
        return d


class _Stages:
    def __init__(self, report: RunReport):
        self.report = report

    def run(self, name, fn):
        t = time.perf_counter()
        try:
            return fn()
        except MicromotionError as exc:
            self.report.status = "failed"
            self.report.errors.append(
                {"stage": name, "type": type(exc).__name__, "message": str(exc), "context": _plain(exc.context)}
            )
            logger.error("stage %s failed: %s", name, exc)
            raise _StageFailed from exc
        finally:
            self.report.timings[name] = time.perf_counter() - t


class _StageFailed(Exception):
    pass


def _plain(obj):
    return json.loads(json.dumps(obj, default=io._json_default))


def _edge_summary(spec, gap, cfg):
    T = spec.period
    modes = edge_modes(spec, gap, cfg.edge_window * np.pi / T, cfg.edge_threshold)
    by_side = {}
    for side in ("left", "right"):
        v = [m.velocity for m in modes if m.side == side]
        signs = sorted({int(np.sign(x)) for x in v if x != 0})
        by_side[side] = {"count": len(v), "velocity_signs": signs}
    centre = 0.0 if gap == "0" else np.pi / T
    extras = {}
    if modes:
        extras["min_weight"] = min(m.weight for m in modes)
        extras["max_offset"] = max(abs(abs(m.quasienergy) - centre) for m in modes)
    return modes, {"count": len(modes), **by_side, **extras}


def _profile_from_spectrum(spec, modes):
    best = max(modes, key=lambda m: m.weight)
    p = _profile_of(spec.vectors[best.column][:, best.band], spec.Nx)
    return p, best, fit_localization(p, best.side)


def run_scenario(config, out: str | Path | None = None) -> RunReport:
    """Run every stage for ``config`` and write its files under ``out`` (or ``config.out``).

    Computation errors are recorded in the report with their stage; files
    of a failed stage are never written.
    """
    cfg = load_config(config)
    out_dir = Path(out if out is not None else (cfg.out or Path("runs") / cfg.name))
    out_dir.mkdir(parents=True, exist_ok=True)
    report = RunReport(cfg.name, _plain(cfg.to_dict()))
    stages = _Stages(report)
    files: dict[str, Path] = {}
    drive = cfg.drive()
    N = cfg.hopf_grid
    try:
        off = (cfg.curve_offset,) * 3
        grid = stages.run(
            "field",
            lambda: pseudospin_grid(
                drive, N, N, cfg.alpha_points or N, cfg.branch, offset=off, threads=cfg.threads
            ),
        )

        def topology():
            summ = summarize(grid, stencil=cfg.stencil)
            north = preimage_curves(grid, "north")
            south = preimage_curves(grid, "south")
            try:
                link = linking_number(north, south, spacing=float(np.max(grid.spacing)))
                summ.linking_number = link.rounded
                extra = {"linking_value": link.value, "linking_residual": link.residual}
            except NonContractibleCurve as exc:
                extra = {"linking_value": None, "linking_skipped": str(exc)}
            d = summ.as_dict() | extra
            d["within_tolerance"] = bool(summ.hopf_residual < cfg.hopf_tol)
            d["curves"] = {
                "north": [list(c.winding) for c in north],
                "south": [list(c.winding) for c in south],
            }
            return d, north, south

        report.topology, north, south = stages.run("topology", topology)
        files["curves_north.csv"] = io.write_csv(out_dir / "curves_north.csv", CURVE_HEADER, curves_to_rows(north))
        files["curves_south.csv"] = io.write_csv(out_dir / "curves_south.csv", CURVE_HEADER, curves_to_rows(south))
        if cfg.dump_field:
            files["field.csv"] = io.write_csv(out_dir / "field.csv", FIELD_HEADER, io.field_rows(grid))

        spec = stages.run(
            "strip",
            lambda: quasienergy_spectrum(
                drive, cfg.strip_sites, cfg.k2_points, threads=cfg.threads, tol=cfg.strip_tol
            ),
        )
        files["spectrum.csv"] = io.write_csv(out_dir / "spectrum.csv", SPECTRUM_HEADER, spec.rows())

        def edges():
            found = {}
            for gap, label in (("0", "gap0"), ("pi", "gapPi")):
                modes, summary = _edge_summary(spec, gap, cfg)
                report.edge_modes[label] = summary
                found[label] = modes
            for label in ("gap0", "gapPi"):
                if found[label]:
                    p, best, xi = _profile_from_spectrum(spec, found[label])
                    report.localization[label] = {
                        "k2": best.k2,
                        "quasienergy": best.quasienergy,
                        "side": best.side,
                        "xi": xi,
                    }
                    files[f"profile_{label}.csv"] = io.write_csv(
                        out_dir / f"profile_{label}.csv", PROFILE_HEADER, list(enumerate(p))
                    )
                else:
                    report.localization[label] = None
            left = [report.edge_modes[g]["left"]["velocity_signs"] for g in ("gap0", "gapPi")]
            right = [report.edge_modes[g]["right"]["velocity_signs"] for g in ("gap0", "gapPi")]
            report.edge_modes["same_chirality"] = bool(
                all(len(s) == 1 for s in left + right) and left[0] == left[1] and right[0] == right[1]
            ) if found["gap0"] and found["gapPi"] else None

        stages.run("edges", edges)

        def xi_star():
            try:
                prof = edge_profile(
                    drive,
                    cfg.strip_sites,
                    cfg.k2_star,
                    window=cfg.edge_window * np.pi / drive.period,
                    threshold=cfg.edge_threshold,
                    tol=cfg.strip_tol,
                )
                return {"k2": cfg.k2_star, "xi": prof.localization_length, "side": prof.side}
            except NoEdgeMode:
                return {"k2": cfg.k2_star, "xi": None}

        report.localization["k2_star"] = stages.run("localization", xi_star)
    except _StageFailed:
        pass

    report.manifest = {name: {"path": name, "sha256": io.sha256_file(p)} for name, p in sorted(files.items())}
    report.manifest["summary.json"] = {"path": "summary.json", "sha256": None}
    io.write_json(out_dir / "summary.json", report.summary())
    io.write_json(out_dir / "timings.json", report.timings)
    return report


def sweep(config, parameter: str, values, out: str | Path | None = None) -> dict:
    """Run ``config`` once per value of ``parameter``; failures are recorded and the sweep continues."""
    base = load_config(config)
    if parameter not in SWEEP_PARAMS:
        raise ConfigInvalid(f"cannot sweep {parameter!r}; choose from {SWEEP_PARAMS}", parameter=parameter)
    values = list(values)
    if not values:
        raise ConfigInvalid("sweep needs at least one value")
    if parameter not in _MODEL_KEYS[base.model]:
        raise ConfigInvalid(f"{parameter!r} is not a parameter of the {base.model} model", parameter=parameter)
    out_dir = Path(out if out is not None else (base.out or Path("runs") / f"{base.name}-sweep-{parameter}"))
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, reports = [], []
    for v in values:
        v = float(v)
        tag = f"{parameter}={v:g}"
        try:
            cfg = replace(base, **{parameter: v}, name=f"{base.name}[{tag}]")
            cfg.validate()
            rep = run_scenario(cfg, out_dir / tag)
        except ConfigInvalid as exc:
            rep = RunReport(base.name, {}, status="failed")
            rep.errors.append({"stage": "config", "type": type(exc).__name__, "message": str(exc), "context": {}})
        reports.append(rep)
        topo = rep.topology or {}
        xi = (rep.localization.get("k2_star") or {}).get("xi")
        rows.append(
            (
                v,
                rep.status,
                topo.get("hopf_value", float("nan")),
                topo.get("hopf_rounded", ""),
                "" if topo.get("linking_number") is None else topo["linking_number"],
                rep.edge_count("gap0"),
                rep.edge_count("gapPi"),
                float("nan") if xi is None else xi,
            )
        )
    header = (parameter, "status", "hopf_value", "hopf_rounded", "linking_number", "edge_gap0", "edge_gapPi", "xi")
    path = io.write_csv(out_dir / "sweep.csv", header, rows)
    return {"parameter": parameter, "rows": rows, "reports": reports, "path": path, "sha256": io.sha256_file(path)}
