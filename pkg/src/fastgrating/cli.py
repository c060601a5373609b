"""Command-line driver: config file plus flag overrides, precompute, angle sweep.

Config files are plain ``key = value`` lines (an optional ``[run]`` header
is accepted). Outputs in the ``out`` directory:

``bragg_<i>.csv``    Bragg table for angle i (input order)
``bragg_all.csv``    all angles concatenated
``summary.json``     flux errors, stage timings, inverse-apply counts
``field_<i>.bin``    optional scattered-field grid with a ``.txt`` sidecar
``error.json``       written instead of results when a run fails

Exit status: 0 success, 1 some flux error above ``flux_threshold``,
2 invalid configuration, 3 solver or I/O failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger("fastgrating")

EXIT_OK, EXIT_FLUX, EXIT_CONFIG, EXIT_FAILURE = 0, 1, 2, 3
CSV_HEADER = ["theta", "n", "kappa_n", "k_n", "re_c", "im_c", "re_d", "im_d", "flux_fraction"]


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    omega: float = 10.0
    period: float = 1.0
    geometry: str = ""
    problem: str = "dirichlet"
    index: float | None = None
    N: int = 512
    M: int = 90
    P: int = 1
    tol: float = 1e-10
    thetas: list = field(default_factory=list)
    y0: float | None = None
    wood: str = "auto"
    out: str = "out"
    flux_threshold: float = 1e-6
    leaf_size: int = 64
    samples: int = 40
    save_factorization: str | None = None
    load_factorization: str | None = None
    field_grid: tuple | None = None

    def validate(self):
        if not (self.omega > 0 and self.period > 0):
            raise ConfigError("omega and period must be positive")
        if self.problem not in ("dirichlet", "transmission"):
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.problem == "transmission" and self.index is None:
            raise ConfigError("transmission needs index (nn)")
        if self.P not in (0, 1, 2):
            raise ConfigError("P must be 0, 1 or 2")
        if not 1e-13 <= self.tol <= 1e-4:
            raise ConfigError("tol must lie in [1e-13, 1e-4]")
        if self.wood not in ("auto", "off", "force"):
            raise ConfigError(f"unknown wood mode {self.wood!r}")
        for t in self.thetas:
            if not -math.pi < t < 0:
                raise ConfigError(f"angle {t} outside (-pi, 0)")
        if not self.geometry:
            raise ConfigError("no geometry file given")
        return self


def _floats(text):
    return [float(v) for v in text.replace(",", " ").split()]


def parse_grid(text):
    vals = text.split(",")
    if len(vals) != 6:
        raise ConfigError("field grid needs x0,y0,x1,y1,nx,ny")
    x0, y0, x1, y1 = (float(v) for v in vals[:4])
    nx, ny = int(vals[4]), int(vals[5])
    if nx < 1 or ny < 1:
        raise ConfigError("field grid needs nx, ny >= 1")
    return x0, y0, x1, y1, nx, ny


def read_angles_file(path):
    out = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            out.extend(_floats(line))
    return out


def cos_series(start, step, count):
    """Angles with cos(theta) = start + i * step, i < count, theta in (-pi, 0)."""
    c = start + step * np.arange(int(count))
    if np.any(np.abs(c) >= 1):
        raise ConfigError("cos(theta) series leaves (-1, 1)")
    return list(-np.arccos(c))


_KEYS = {
    "omega": float, "period": float, "geometry": str, "problem": str, "index": float,
    "n": int, "m": int, "p": int, "tol": float, "y0": float, "wood": str, "out": str,
    "flux_threshold": float, "leaf_size": int, "samples": int,
    "save_factorization": str, "load_factorization": str,
}


def load_config(path) -> tuple[dict, Path]:
    """Key/value pairs from a config file; relative paths resolve next to it."""
    path = Path(path)
    text = path.read_text()
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    items = {}
    for sec in parser.sections():
        items.update(parser[sec])
    return items, path.parent


def build_config(args) -> RunConfig:
    raw, base = ({}, Path.cwd())
    if args.config:
        raw, base = load_config(args.config)
    cfg = RunConfig()
    thetas = []
    try:
        for key, val in raw.items():
            k = key.lower()
            if k in ("theta", "thetas"):
                thetas.extend(_floats(val))
            elif k == "angles_file":
                thetas.extend(read_angles_file(base / val))
            elif k in ("cos_start", "cos_step", "count"):
                continue
            elif k == "field_grid":
                cfg.field_grid = parse_grid(val)
            elif k in _KEYS:
                v = _KEYS[k](val)
                if k in ("geometry", "save_factorization", "load_factorization", "out"):
                    v = str(base / v)
                setattr(cfg, {"n": "N", "m": "M", "p": "P"}.get(k, k), v)
            else:
                raise ConfigError(f"unknown config key {key!r}")
        if "cos_start" in raw or "count" in raw:
            thetas.extend(cos_series(float(raw["cos_start"]), float(raw.get("cos_step", 0.0)),
                                     int(raw["count"])))
    except (KeyError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config value: {exc}") from exc

    overrides = {
        "omega": args.omega, "period": args.period, "index": args.nn, "N": args.N,
        "M": args.M, "P": args.P, "tol": args.tol, "problem": args.problem,
        "save_factorization": args.save_factorization,
        "load_factorization": args.load_factorization, "out": args.out,
        "geometry": args.geometry, "wood": args.wood,
    }
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg, k, v)
    if args.theta is not None or args.angles_file is not None:
        thetas = []
        if args.theta is not None:
            thetas.extend(_floats(args.theta))
        if args.angles_file is not None:
            thetas.extend(read_angles_file(args.angles_file))
    cfg.thetas = thetas
    if args.field_grid is not None:
        cfg.field_grid = parse_grid(args.field_grid)
    return cfg.validate()


# --------------------------------------------------------------------------
# output


def atomic_write(path, data: bytes | str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data.encode() if isinstance(data, str) else data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _complex_text(z):
    """``a+bj`` form that Python's complex() and numpy both parse."""
    return f"{z.real!r}{z.imag:+.17g}j"


def bragg_rows(spec):
    frac = spec.flux_up + spec.flux_down
    for i in range(len(spec.n)):
        yield [
            repr(float(spec.theta)), str(int(spec.n[i])), repr(float(spec.kappa[i])),
            _complex_text(complex(spec.k[i])),
            repr(float(spec.c[i].real)), repr(float(spec.c[i].imag)),
            repr(float(spec.d[i].real)), repr(float(spec.d[i].imag)), repr(float(frac[i])),
        ]


def bragg_csv(specs):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for s in specs:
        w.writerows(bragg_rows(s))
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(type(obj))


def write_json(path, obj):
    atomic_write(path, json.dumps(obj, indent=2, default=_jsonable) + "\n")


def error_record(exc, stage):
    return {
        "status": "error",
        "stage": stage,
        "error": type(exc).__name__,
        "module": type(exc).__module__,
        "message": str(exc),
    }


# --------------------------------------------------------------------------
# run


def _meta(cfg: RunConfig, curve):
    return {
        "omega": cfg.omega, "period": cfg.period, "N": cfg.N, "problem": cfg.problem,
        "index": np.nan if cfg.index is None else cfg.index, "tol": cfg.tol,
        "leaf_size": cfg.leaf_size,
        "curve": np.concatenate([curve.cos_coeffs, curve.sin_coeffs, curve.center]),
    }


def _check_meta(meta, expected):
    for key, val in expected.items():
        if key not in meta:
            raise ConfigError(f"factorization lacks {key!r}")
        got = np.asarray(meta[key])
        want = np.asarray(val)
        same = (got.shape == want.shape and got.dtype.kind == want.dtype.kind
                and np.array_equal(got, want, equal_nan=got.dtype.kind == "f"))
        if not same:
            raise ConfigError(f"factorization was built for a different {key}: {got} vs {want}")


def run(cfg: RunConfig) -> int:
    from .geometry import read_geometry
    from .hbs import dump_inverse, load_inverse
    from .periodic_solver import GratingProblem, precompute, solve_angles
    from .postprocess import bragg_amplitudes, eval_field, write_field_grid

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    stage = "setup"
    try:
        curve = read_geometry(cfg.geometry)
        problem = GratingProblem(
            curve, cfg.period, cfg.omega, cfg.N, cfg.M, cfg.P, cfg.tol, cfg.problem,
            cfg.index, cfg.leaf_size, cfg.wood,
        )
        meta = _meta(cfg, curve)
        inverse = None
        if cfg.load_factorization:
            stage = "load"
            inverse, saved = load_inverse(cfg.load_factorization)
            _check_meta(saved, meta)
        stage = "precompute"
        t0 = time.perf_counter()
        pre = precompute(problem, inverse)
        t_pre = time.perf_counter() - t0
        log.info("precompute %.3f s, ranks %s", t_pre, pre.ranks)
        if cfg.save_factorization:
            stage = "save"
            buf = io.BytesIO()
            dump_inverse(pre.inverse, buf, meta)
            atomic_write(cfg.save_factorization, buf.getvalue())

        stage = "solve"
        stats = []
        sols = solve_angles(pre, cfg.thetas, y0=cfg.y0, samples=cfg.samples, stats=stats)
        specs = [bragg_amplitudes(s, samples=cfg.samples) for s in sols]
        errors = [s.flux_error for s in specs]

        stage = "write"
        for i, s in enumerate(specs):
            atomic_write(out / f"bragg_{i}.csv", bragg_csv([s]))
        if specs:
            atomic_write(out / "bragg_all.csv", bragg_csv(specs))
        if cfg.field_grid and sols:
            x0, y0, x1, y1, nx, ny = cfg.field_grid
            xs = np.linspace(x0, x1, nx)
            ys = np.linspace(y0, y1, ny)
            X, Y = np.meshgrid(xs, ys)
            pts = np.stack([X.ravel(), Y.ravel()], axis=1)
            dx = (x1 - x0) / max(nx - 1, 1)
            dy = (y1 - y0) / max(ny - 1, 1)
            for i, s in enumerate(sols):
                # inside the obstacles and outside the unit cell the grid holds NaN
                vals = np.full(len(pts), np.nan + 0j)
                ok = (np.abs(pts[:, 0]) <= cfg.period / 2) & ~pre.form.inside(pts, cfg.P)
                if np.any(ok):
                    vals[ok] = eval_field(s, pts[ok], check=False)
                write_field_grid(out / f"field_{i}.bin", vals, (x0, y0), (dx, dy), (nx, ny))

        bad = [i for i, e in enumerate(errors) if not e <= cfg.flux_threshold]
        summary = {
            "status": "ok" if not bad else "flux_threshold_exceeded",
            "config": {k: v for k, v in asdict(cfg).items() if k != "thetas"},
            "angles": cfg.thetas,
            "flux_errors": errors,
            "max_flux_error": max(errors, default=None),
            "flux_threshold": cfg.flux_threshold,
            "timings": {
                "precompute_seconds": t_pre,
                "precompute_stages": pre.timings,
                "factorization_loaded": inverse is not None,
                "bucket_seconds": [b["seconds"] for b in stats],
            },
            "buckets": len(stats),
            "bucket_stats": stats,
            "inverse_apply_count": sum(b["inverse_vectors"] for b in stats),
            "ranks": pre.ranks,
            "unknowns": {"density": pre.form.size, "wall": 2 * cfg.M},
        }
        write_json(out / "summary.json", summary)
        return EXIT_OK if not bad else EXIT_FLUX
    except ConfigError as exc:
        write_json(out / "error.json", error_record(exc, stage))
        log.error("%s", exc)
        return EXIT_CONFIG
    except Exception as exc:  # every module error becomes an error record
        write_json(out / "error.json", error_record(exc, stage))
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_FAILURE


def make_parser():
    p = argparse.ArgumentParser(prog="fastgrating", description="Direct solver for periodic scattering gratings.")
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--geometry", help="boundary Fourier coefficient file")
    p.add_argument("--omega", type=float)
    p.add_argument("--period", type=float)
    p.add_argument("--theta", help="incident angle(s), comma separated")
    p.add_argument("--angles-file", dest="angles_file")
    p.add_argument("--nn", type=float, help="refractive index (transmission)")
    p.add_argument("--N", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--P", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--problem", choices=["dirichlet", "transmission"])
    p.add_argument("--wood", choices=["auto", "off", "force"])
    p.add_argument("--save-factorization", dest="save_factorization")
    p.add_argument("--load-factorization", dest="load_factorization")
    p.add_argument("--field-grid", dest="field_grid", help="x0,y0,x1,y1,nx,ny")
    p.add_argument("--out", help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = build_config(args)
    except (ConfigError, OSError) as exc:
        out = Path(args.out or "out")
        try:
            write_json(out / "error.json", error_record(exc, "config"))
        except OSError:
            pass
        print(json.dumps(error_record(exc, "config")), file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
