"""Command-line orchestration: ``eikolab <experiment> [--config PATH] [--set k=v] [--out DIR]``.

Every experiment validates its whole configuration before computing, writes
its declared CSV/EIKF1 outputs atomically, and records a key=value manifest
with the resolved parameters next to them.

Exit status: 0 success, 1 failed acceptance criteria (``suite``), 2 invalid
configuration, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import math
import sys
import time
from pathlib import Path

from . import __version__
from .besov import BesovReport, besov_seminorm, default_shifts
from .covering import COVER_CSV_HEADER, covering_scaling
from .errors import ConfigurationError, FormatError, NumericalFailure
from .flow import BC_CSV_HEADER, RELEASE_C, bc_experiment, check_bc_exponent, mollified_gradient, straightness_audit, trace_batch
from .grid import Annulus, Grid2, _atomic_write_text, read_field, write_field
from .kinetic import AngularGrid, kinetic_measure, production_battery
from .mollify import cone_kernel, mollify
from .solutions import JumpSpec, constant_field, jump_field, vortex_field
from . import suite as suite_mod

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

EXPERIMENTS = ("field", "besov", "entropy", "kinetic", "trace", "cover", "bc")


# ---------------------------------------------------------------------------
# Parameter parsing
# ---------------------------------------------------------------------------


def _vec(text: str) -> tuple[float, float]:
    parts = [float(t) for t in text.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected 'a,b', got {text!r}")
    return parts[0], parts[1]


def _floats(text: str) -> tuple[float, ...]:
    out = tuple(float(t) for t in text.split(",") if t.strip())
    if not out:
        raise ValueError("empty list")
    return out


def _points(text: str) -> tuple[tuple[float, float], ...]:
    out = tuple(_vec(t) for t in text.split(";") if t.strip())
    if not out:
        raise ValueError("empty point list")
    return out


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


FIELD_KEYS = {
    "field": (str, "vortex"),
    "input": (str, ""),
    "n": (int, 201),
    "half_width": (float, 1.0),
    "grid": (str, "plain"),
    "direction": (_vec, (1.0, 0.0)),
    "center": (_vec, (0.0, 0.0)),
    "m_plus": (_vec, (0.5, math.sqrt(3) / 2)),
    "m_minus": (_vec, (0.5, -math.sqrt(3) / 2)),
    "normal": (_vec, (1.0, 0.0)),
}

EXPERIMENT_KEYS = {
    "field": {},
    "besov": {"s": (float, 1 / 3), "p": (float, 3.0), "levels": (int, 5), "base": (int, 1),
              "r_in": (_opt_float, None), "r_out": (_opt_float, None)},
    "entropy": {"eps_test": (float, 0.25), "generators": (int, 12)},
    "kinetic": {"eps_x": (float, 0.2), "n_s": (int, 96), "p": (float, 2.0)},
    "trace": {"epsilon": (float, 0.04), "c0": (float, 0.5), "max_t": (float, 1.0), "dt": (_opt_float, None),
              "starts": (_points, ((0.0, 0.0),)), "backward": (_bool, False), "p": (float, 2.0),
              "C": (float, RELEASE_C), "n_s": (int, 96)},
    "cover": {"eps_list": (_floats, (0.02, 0.04, 0.08)), "q": (float, 3.0), "s": (float, 1 / 3),
              "alpha": (_opt_float, None)},
    "bc": {"epsilon": (float, 0.02), "q": (float, 6.0), "K": (_opt_float, None), "c0": (float, 0.5)},
}

# the disk experiment needs data on [-2.2, 2.2]^2 with no node at the origin
BC_FIELD_DEFAULTS = {"half_width": "2.2", "grid": "shifted", "n": "880"}


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` lines with ``#`` comments (keys are case sensitive)."""
    parser = configparser.ConfigParser(
        delimiters=("=",), comment_prefixes=("#",), inline_comment_prefixes=("#",), interpolation=None,
    )
    parser.optionxform = str
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from None
    try:
        parser.read_string("[run]\n" + text, source=str(path))
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config {path}: {exc}") from None
    return dict(parser["run"])


def resolve(experiment: str, raw: dict[str, str]) -> dict:
    """Typed parameters with defaults filled in; unknown keys and bad values are errors."""
    schema = dict(FIELD_KEYS)
    schema.update(EXPERIMENT_KEYS[experiment])
    raw = dict(raw)
    if experiment == "bc":
        for k, v in BC_FIELD_DEFAULTS.items():
            raw.setdefault(k, v)
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigurationError(f"unknown key(s) for '{experiment}': {', '.join(unknown)}")
    out = {}
    for key, (conv, default) in schema.items():
        if key in raw:
            try:
                out[key] = conv(raw[key])
            except (TypeError, ValueError) as exc:
                raise ConfigurationError(f"bad value for {key}: {exc}") from None
        else:
            out[key] = default
    _validate(experiment, out)
    return out


def _validate(experiment: str, prm: dict) -> None:
    if prm["field"] not in ("constant", "vortex", "jump", "file"):
        raise ConfigurationError(f"field must be constant, vortex, jump or file, got {prm['field']!r}")
    if prm["field"] == "file" and not prm["input"]:
        raise ConfigurationError("field=file needs input=PATH")
    if prm["grid"] not in ("plain", "shifted"):
        raise ConfigurationError(f"grid must be plain or shifted, got {prm['grid']!r}")
    if prm["n"] < 2 or not prm["half_width"] > 0:
        raise ConfigurationError("need n >= 2 and half_width > 0")
    if experiment == "bc":
        check_bc_exponent(prm["q"])
        if not 0 < prm["epsilon"] <= 0.25:
            raise ConfigurationError("bc needs 0 < epsilon <= 0.25")
    if experiment == "trace":
        if not 0 < prm["c0"] <= 1:
            raise ConfigurationError("c0 must lie in (0, 1]")
        if prm["dt"] is not None and not 0 < prm["dt"] <= prm["epsilon"] / 4:
            raise ConfigurationError("need 0 < dt <= epsilon/4")
    if experiment == "cover" and len(prm["eps_list"]) < 3:
        raise ConfigurationError("eps_list needs at least three values")
    if experiment == "besov" and (prm["r_in"] is None) != (prm["r_out"] is None):
        raise ConfigurationError("give both r_in and r_out for an annular region, or neither")


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------


def build_grid(prm: dict) -> Grid2:
    L = prm["half_width"]
    n = prm["n"]
    if prm["grid"] == "shifted":
        return suite_mod.shifted_grid(L, 2 * L / n)
    return suite_mod.square_grid(L, n)


def build_field(prm: dict):
    kind = prm["field"]
    if kind == "file":
        try:
            f = read_field(prm["input"])
        except OSError as exc:
            raise ConfigurationError(f"cannot read field {prm['input']}: {exc}") from None
        if f.values.ndim != 3:
            raise ConfigurationError("input must be an EIKF1 vector field")
        return f
    g = build_grid(prm)
    if kind == "constant":
        return constant_field(g, prm["direction"])
    if kind == "vortex":
        return vortex_field(g, prm["center"])
    return jump_field(g, JumpSpec(prm["m_plus"], prm["m_minus"], prm["normal"]))


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def run_field(prm, m, out: Path, threads: int):
    path = out / "field.eikf"
    write_field(m, path)
    return [path.name], {}


def run_besov(prm, m, out: Path, threads: int):
    region = None
    if prm["r_in"] is not None:
        region = Annulus(prm["center"], prm["r_in"], prm["r_out"])
    shifts = default_shifts(m.grid.dx, prm["levels"], prm["base"])
    rep: BesovReport = besov_seminorm(m, prm["s"], prm["p"], shifts, region, threads=threads)
    _atomic_write_text(out / "besov.csv", rep.to_csv())
    return ["besov.csv"], {"seminorm_estimate": rep.seminorm_estimate, "fit_slope": rep.fit_slope}


def run_entropy(prm, m, out: Path, threads: int):
    rep = production_battery(m, prm["eps_test"], prm["generators"])
    _atomic_write_text(out / "entropy.csv", rep.to_csv())
    return ["entropy.csv"], {"total_l1": rep.total_l1}


def run_kinetic(prm, m, out: Path, threads: int):
    p = prm["p"]
    km = kinetic_measure(m, AngularGrid(prm["n_s"]), prm["eps_x"], p_list=(1.0, 2.0, p))
    d = km.defect.values[km.defect.mask]
    row = km.to_csv_row(p) + [p, float(d.max()) if d.size else 0.0]
    text = _csv(["epsilon", "nu_l1", "nu_l2", "nu_lp", "p", "max_defect"], [row])
    _atomic_write_text(out / "kinetic.csv", text)
    return ["kinetic.csv"], {}


AUDIT_HEADER = ["curve", "stop_reason", "T", "chord", "increase", "max_deviation", "delta_bound", "violated", "required_C"]


def run_trace(prm, m, out: Path, threads: int):
    eps = prm["epsilon"]
    dt = prm["dt"] or eps / 8
    m_eps = mollify(m, cone_kernel(eps))
    nu = kinetic_measure(m, AngularGrid(prm["n_s"]), eps, p_list=(prm["p"],)).norms[prm["p"]]
    curves = trace_batch(mollified_gradient(m_eps), prm["starts"], prm["c0"], prm["max_t"], dt, eps, prm["backward"])
    files, rows = [], []
    for k, c in enumerate(curves):
        name = f"curve_{k:03d}.csv"
        _atomic_write_text(out / name, c.to_csv())
        files.append(name)
        if len(c.t) > 1:
            r = straightness_audit(c, prm["p"], nu, prm["C"])
            rows.append([k, c.stop_reason, r.T, r.chord, r.increase, r.max_deviation, r.delta_bound,
                         r.violated, r.required_C])
        else:
            rows.append([k, c.stop_reason, 0.0, 0.0, 0.0, 0.0, math.nan, False, 0.0])
    _atomic_write_text(out / "audit.csv", _csv(AUDIT_HEADER, rows))
    return files + ["audit.csv"], {"nu_lp": nu}


def run_cover(prm, m, out: Path, threads: int):
    rep = covering_scaling(m, prm["q"], prm["s"], prm["eps_list"], prm["alpha"])
    files = ["cover.csv"]
    _atomic_write_text(out / "cover.csv", _csv(COVER_CSV_HEADER, [r.csv_row() for r in rep.results]))
    for k, r in enumerate(rep.results):
        name = f"centers_{k}.csv"
        _atomic_write_text(out / name, r.centers_csv())
        files.append(name)
    return files, {"fitted_slope": rep.fitted_slope, "expected_slope": rep.expected_slope,
                   "zero_counts": rep.zero_counts}


def run_bc(prm, m, out: Path, threads: int):
    res = bc_experiment(m, prm["epsilon"], prm["q"], K=prm["K"], c0=prm["c0"])
    _atomic_write_text(out / "bc.csv", _csv(BC_CSV_HEADER, [res.csv_row()]))
    return ["bc.csv"], {"K": res.K, "delta": res.delta, "c_fit": res.c_fit}


RUNNERS = {"field": run_field, "besov": run_besov, "entropy": run_entropy, "kinetic": run_kinetic,
           "trace": run_trace, "cover": run_cover, "bc": run_bc}


def _manifest(experiment, prm, grid, files, extra, wall) -> str:
    lines = [f"experiment={experiment}", f"version={__version__}"]
    for k in sorted(prm):
        v = prm[k]
        if isinstance(v, tuple):
            v = ";".join(",".join(repr(float(x)) for x in t) if isinstance(t, tuple) else repr(float(t)) for t in v)
        lines.append(f"{k}={v}")
    lines += [f"nx={grid.nx}", f"ny={grid.ny}", f"dx={grid.dx!r}", f"origin={grid.origin[0]!r},{grid.origin[1]!r}"]
    for k in sorted(extra):
        lines.append(f"result.{k}={extra[k]!r}" if isinstance(extra[k], float) else f"result.{k}={extra[k]}")
    lines.append("outputs=" + ",".join(files))
    lines.append(f"wall_time={wall:.3f}")
    return "\n".join(lines) + "\n"


def run(experiment: str, raw: dict[str, str], out: Path, threads: int = 1) -> list[str]:
    prm = resolve(experiment, raw)
    m = build_field(prm)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    files, extra = RUNNERS[experiment](prm, m, out, threads)
    wall = time.perf_counter() - t0
    _atomic_write_text(out / "manifest.txt", _manifest(experiment, prm, m.grid, files, extra, wall))
    return files + ["manifest.txt"]


def run_suite(battery: str, out: Path | None) -> int:
    results = suite_mod.run_battery(battery)
    print(suite_mod.render_table(results))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _atomic_write_text(out / "suite.csv", suite_mod.render_csv(results))
    failed = [r.number for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return EXIT_FAILED if failed else EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eikolab", description="Numerical regularity lab for the 2D eikonal equation.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", type=Path, help="key=value file (# comments)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one key")
        sp.add_argument("--out", type=Path, default=Path("out"), help="output directory")
        sp.add_argument("--threads", type=int, default=1, help="worker threads where supported")
    sp = sub.add_parser("suite", help="run an acceptance battery")
    sp.add_argument("battery", nargs="?", default="smoke", help=f"one of {', '.join(suite_mod.BATTERIES)}")
    sp.add_argument("--config", type=Path, help="ignored for suites; accepted for uniformity")
    sp.add_argument("--out", type=Path, default=None, help="write suite.csv here")
    sp.add_argument("--threads", type=int, default=1)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "suite":
            if args.battery not in suite_mod.BATTERIES:
                raise ConfigurationError(
                    f"unknown battery {args.battery!r}; choose from {', '.join(suite_mod.BATTERIES)}"
                )
            return run_suite(args.battery, args.out)
        if args.threads < 1:
            raise ConfigurationError("--threads must be >= 1")
        raw = read_config(args.config) if args.config else {}
        for item in args.set:
            if "=" not in item:
                raise ConfigurationError(f"--set expects KEY=VALUE, got {item!r}")
            k, v = item.split("=", 1)
            raw[k.strip()] = v.strip()
        files = run(args.command, raw, args.out, args.threads)
    except (ConfigurationError, FormatError) as exc:
        print(f"eikolab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        print(f"eikolab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for f in files:
        print(args.out / f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
