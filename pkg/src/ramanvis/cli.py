"""Command-line front end.

Each subcommand writes plot-ready files into the output directory plus a
``manifest.json`` listing every file with its SHA-256 and the hash of the
inputs. Sweep points run as independent jobs; results are gathered and
written in sweep order, so output bytes do not depend on ``--jobs``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 validity-regime violation under ``--strict``.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, config_hash, load_config, serialize
from .estimation import fit_fringe, fit_gaussian_t2star, fit_saturation
from .fringes import point_seed, synthesize
from .io import read_csv, sha256_file, write_csv, write_json
from .qrt import Channel, ValidityWarning, g1, tau_grid
from .spectral import decay_rates, gamma_sp_closed_form, gamma_sp_spectral
from .visibility import v_blue, v_diag1, _ratio, gaussian_decay

__all__ = ["main", "run", "StageError", "SUBCOMMANDS", "EXIT_OK", "EXIT_CONFIG", "EXIT_NUMERICAL", "EXIT_VALIDITY"]

log = logging.getLogger("ramanvis")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_VALIDITY = 4

SUBCOMMANDS = ("g1", "visibility", "ratio", "roots", "satsweep", "fringes", "fit")


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it and ``code`` is the exit code."""

    def __init__(self, stage: str, exc: BaseException, code: int):
        self.stage = stage
        self.code = code
        super().__init__(f"stage '{stage}' failed: {type(exc).__name__}: {exc}")


@dataclass
class _Outputs:
    root: Path
    meta: dict
    formats: tuple[str, ...]
    files: list[Path] = field(default_factory=list)

    def table(self, name: str, columns: dict, extra: dict | None = None) -> None:
        meta = dict(self.meta)
        meta.update(extra or {})
        if "csv" in self.formats:
            self.files.append(write_csv(self.root / f"{name}.csv", columns, meta))
        if "json" in self.formats:
            self.files.append(write_json(self.root / f"{name}.json", {"meta": meta, "columns": columns}))

    def json(self, name: str, obj) -> None:
        self.files.append(write_json(self.root / f"{name}.json", obj))


def _tag(x: float) -> str:
    return f"{x:g}".replace(".", "p")


def _taus(cfg: ExperimentConfig):
    return tau_grid(cfg.sweep.tau_max_ns, cfg.sweep.tau_points, cfg.sweep.tau_spacing)


def _with_filters(strict: bool):
    if strict:
        warnings.simplefilter("error", ValidityWarning)
    else:
        warnings.simplefilter("always", ValidityWarning)


# -- sweep-point jobs (top level so they pickle) ------------------------------


def _job_g1(cfg, power, strict):
    _with_filters(strict)
    p, taus = cfg.at_power(power), _taus(cfg)
    with warnings.catch_warnings(record=not strict) as caught:
        out = {ch.value: g1(ch, p, taus).columns() for ch in Channel}
    return out, [str(w.message) for w in caught or []]


def _job_visibility(cfg, power, strict):
    _with_filters(strict)
    p, taus = cfg.at_power(power), _taus(cfg)
    with warnings.catch_warnings(record=not strict) as caught:
        blue, diag = v_blue(p, taus), v_diag1(p, taus)
    ratio = _ratio(diag, blue)
    cols = {
        "tau_ns": blue.tau,
        "v_blue": blue.visibility,
        "v_diag1": diag.visibility,
        "ratio": ratio.visibility,
        "model_gaussian": gaussian_decay(blue.tau, p.t2star),
        "valid": ratio.valid,
    }
    return cols, [str(w.message) for w in caught or []]


def _job_satpoint(cfg, power, strict):
    p = cfg.at_power(power)
    return {
        "p_over_psat": power,
        "omega_rad_per_ns": p.omega,
        "gamma_sp_spectral": gamma_sp_spectral(p),
        "gamma_sp_closed_form": gamma_sp_closed_form(p.omega, p.gamma),
    }, []


def _job_fringe(cfg, index, delay, channel, seed, strict):
    _with_filters(strict)
    w = cfg.sweep
    phases = np.linspace(0.0, 2.0 * math.pi, w.phase_points, endpoint=False)
    with warnings.catch_warnings(record=not strict) as caught:
        rec = synthesize(
            cfg.pulse_sequence(delta_t=delay),
            cfg.system_params(),
            phases,
            w.mean_counts,
            point_seed(seed, index),
            channel=channel,
            delta_t=delay,
            background=w.background,
        )
    fit = fit_fringe(rec.phase_grid, rec.counts_port_a)
    return (rec, fit), [str(w.message) for w in caught or []]


def _map(fn, arglists, jobs: int):
    if jobs <= 1 or len(arglists) <= 1:
        return [fn(*a) for a in arglists]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(fn, *a) for a in arglists]
        return [f.result() for f in futures]


# -- subcommands -------------------------------------------------------------


def _cmd_g1(cfg, out, jobs, strict, **_):
    powers = cfg.sweep.visibility_powers
    results = _map(_job_g1, [(cfg, pw, strict) for pw in powers], jobs)
    notes = []
    for pw, (traces, warns) in zip(powers, results):
        notes += warns
        for ch, cols in traces.items():
            out.table(f"g1_{ch}_P{_tag(pw)}", cols, {"channel": ch, "p_over_psat": pw, "units": "tau in ns"})
    return notes


def _cmd_visibility(cfg, out, jobs, strict, **_):
    powers = cfg.sweep.visibility_powers
    results = _map(_job_visibility, [(cfg, pw, strict) for pw in powers], jobs)
    notes = []
    for pw, (cols, warns) in zip(powers, results):
        notes += warns
        out.table(f"visibility_P{_tag(pw)}", cols, {"p_over_psat": pw, "units": "tau in ns"})
    return notes


def _cmd_ratio(cfg, out, jobs, strict, **_):
    cols, warns = _ratio_point(cfg, strict)
    out.table("ratio", cols, {"units": "tau in ns", "t2star_ns": cfg.system.t2star_ns})
    return warns


def _ratio_point(cfg, strict):
    _with_filters(strict)
    p, taus = cfg.system_params(), _taus(cfg)
    with warnings.catch_warnings(record=not strict) as caught:
        blue, diag = v_blue(p, taus), v_diag1(p, taus)
    ratio = _ratio(diag, blue)
    cols = {
        "tau_ns": ratio.tau,
        "ratio": ratio.visibility,
        "model_gaussian": gaussian_decay(ratio.tau, p.t2star),
        "v_blue": blue.visibility,
        "v_diag1": diag.visibility,
        "valid": ratio.valid,
    }
    return cols, [str(w.message) for w in caught or []]


def _cmd_roots(cfg, out, **_):
    spectrum = decay_rates(cfg.system_params())
    rows = spectrum.table()
    cols = {k: np.array([r[k] for r in rows]) for k in rows[0] if k != "label"}
    if "csv" in out.formats:
        meta = dict(out.meta, labels=" ".join(r["label"] for r in rows), units="1/ns")
        out.files.append(write_csv(out.root / "roots.csv", cols, meta))
    out.json("roots", {"meta": out.meta, "gamma_sp": spectrum.gamma_sp, "roots": rows})
    return []


def _cmd_satsweep(cfg, out, jobs, strict, **_):
    powers = cfg.sweep.sat_powers
    results = [r for r, _ in _map(_job_satpoint, [(cfg, pw, strict) for pw in powers], jobs)]
    cols = {k: np.array([r[k] for r in results]) for k in results[0]}
    cols["rel_diff"] = cols["gamma_sp_spectral"] / cols["gamma_sp_closed_form"] - 1.0
    out.table("satsweep", cols, {"units": "rates in 1/ns"})
    fit = fit_saturation(cols["p_over_psat"], cols["gamma_sp_spectral"])
    res = fit.to_dict()
    res["gamma_expected"] = cfg.system_params().gamma
    out.json("fit_saturation", res)
    return []


def _cmd_fringes(cfg, out, jobs, strict, seed, **_):
    points = [(d, ch) for d in cfg.sweep.delays_ns for ch in ("blue", "diag1")]
    args = [(cfg, i, d, ch, seed, strict) for i, (d, ch) in enumerate(points)]
    results = _map(_job_fringe, args, jobs)
    summary, notes = [], []
    for (d, ch), ((rec, fit), warns) in zip(points, results):
        notes += warns
        name = f"fringe_{ch}_dt{_tag(d)}"
        meta = dict(out.meta)
        meta.update(rec.header())
        if "csv" in out.formats:
            out.files.append(write_csv(out.root / f"{name}.csv", rec.columns(), meta))
        if "json" in out.formats:
            out.json(name, {"meta": meta, "columns": rec.columns()})
        summary.append(
            {
                "channel": ch,
                "delta_t_ns": d,
                "seed": rec.seed,
                "visibility_injected": rec.visibility,
                "visibility_fitted": fit.params["visibility"],
                "visibility_sigma": fit.uncertainties["visibility"],
                "fit": fit.to_dict(),
            }
        )
    out.json("fringe_fits", {"meta": out.meta, "points": summary})
    return notes


def _cmd_fit(cfg, out, input_path=None, **_):
    src = Path(input_path) if input_path else out.root / "ratio.csv"
    if not src.is_file():
        raise FileNotFoundError(f"{src}: run the 'ratio' subcommand first or pass --input")
    _, cols = read_csv(src)
    if "tau_ns" not in cols or "ratio" not in cols:
        raise ValueError(f"{src}: needs 'tau_ns' and 'ratio' columns")
    valid = cols["valid"].astype(bool) if "valid" in cols else None
    fit = fit_gaussian_t2star(tau=cols["tau_ns"], visibility=cols["ratio"], valid=valid)
    res = fit.to_dict()
    res["input"] = {"path": src.name, "sha256": sha256_file(src)}
    out.json("fit_gaussian", res)
    return []


_COMMANDS = {
    "g1": _cmd_g1,
    "visibility": _cmd_visibility,
    "ratio": _cmd_ratio,
    "roots": _cmd_roots,
    "satsweep": _cmd_satsweep,
    "fringes": _cmd_fringes,
    "fit": _cmd_fit,
}


def run(
    subcommand: str,
    cfg: ExperimentConfig,
    out_dir=None,
    *,
    seed: int | None = None,
    jobs: int = 1,
    strict: bool = False,
    input_path=None,
) -> Path:
    """Run one subcommand and return the path of its manifest.

    Raises :class:`StageError` naming the failing stage.
    """
    if subcommand not in _COMMANDS:
        raise StageError("dispatch", ValueError(f"unknown subcommand {subcommand!r}"), EXIT_CONFIG)
    root = Path(out_dir if out_dir is not None else cfg.output.dir)
    seed = cfg.run.seed if seed is None else int(seed)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise StageError("output", exc, EXIT_CONFIG) from exc

    extra = [subcommand, str(seed)]
    if input_path is not None:
        extra.append(sha256_file(input_path) if Path(input_path).is_file() else str(input_path))
    input_hash = config_hash(cfg, *extra)
    out = _Outputs(root, {"config_hash": input_hash, "seed": seed, "version": __version__}, cfg.output.formats)

    with warnings.catch_warnings():
        _with_filters(strict)
        try:
            notes = _COMMANDS[subcommand](
                cfg, out, jobs=jobs, strict=strict, seed=seed, input_path=input_path
            )
        except ValidityWarning as exc:
            raise StageError(subcommand, exc, EXIT_VALIDITY) from exc
        except Exception as exc:
            raise StageError(subcommand, exc, EXIT_NUMERICAL) from exc

    for note in sorted(set(notes)):
        log.warning("%s: %s", subcommand, note)
    manifest = {
        "subcommand": subcommand,
        "input_hash": input_hash,
        "seed": seed,
        "version": __version__,
        "config": serialize(cfg),
        "warnings": sorted(set(notes)),
        "files": [{"path": f.name, "sha256": sha256_file(f)} for f in out.files],
    }
    return write_json(root / f"manifest_{subcommand}.json", manifest)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ramanvis",
        description="Coherence of Rayleigh and spin-flip Raman photons: sweeps, fits, synthetic fringes.",
    )
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", type=Path, help="configuration file (defaults when omitted)")
    ap.add_argument("--out", type=Path, help="output directory (overrides [output] dir)")
    ap.add_argument("--seed", type=int, help="base RNG seed (overrides [run] seed)")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for sweep points")
    ap.add_argument("--strict", action="store_true", help="treat validity-regime warnings as errors")
    ap.add_argument("--input", type=Path, help="CSV for 'fit' (default: ratio.csv in the output dir)")
    ap.add_argument("-v", "--verbose", action="store_true", help="log applied defaults and progress")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.jobs < 1:
            raise ConfigError(["--jobs must be >= 1"])
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError(["--seed must be an unsigned 64-bit integer"])
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"ramanvis: stage 'config' failed: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        manifest = run(
            args.subcommand,
            cfg,
            args.out,
            seed=args.seed,
            jobs=args.jobs,
            strict=args.strict,
            input_path=args.input,
        )
    except StageError as exc:
        print(f"ramanvis: {exc}", file=sys.stderr)
        return exc.code
    print(manifest)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
