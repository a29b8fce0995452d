"""Command-line front end.

Every run resolves a semantic config (JSON file plus flag overrides, flags
winning), validates it against a strict per-command schema (unknown keys are
errors), and emits a manifest with the resolved config and its content hash
next to the artifacts.  Re-running any command with ``--config manifest.json``
reproduces every artifact byte for byte, at any ``--workers`` count.

Exit codes: 0 success; 2 config/schema validation failure (click usage
errors land here too); 3 an enabled ``--check`` failed; 4 output I/O failure.
"""

from __future__ import annotations

import math
import os
import sys

import click
import numpy as np

from . import __version__
from . import concentration_lab as lab
from . import plotting, reporting
from .applications import (
    formula_k,
    jl_dim,
    jl_embed_and_score,
    rip_constant_exact,
    rip_sample_size,
)
from .calibration import (
    DEFAULT_SEED,
    load_calibration,
    run_calibration,
    write_calibration,
)
from .ensembles import (
    ColumnLaw,
    column_model,
    gen_matrix,
    normalize_columns,
    nominal_psi_norm,
    row_model,
)
from .set_geometry import (
    ball,
    bracket_to_json,
    complexity_bracket,
    descriptor_to_json,
    dudley_gamma_upper,
    finite_points,
    sparse_sphere,
    sphere_net,
    unit_sphere,
)
from .streams import RandomStream
from .tail_distributions import (
    Family,
    TailLaw,
    law_to_json,
    psi_norm_bisection,
    psi_norm_closed_form,
    psi_norm_moment_ratio,
    sample,
    standardize,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_CHECK = 3
EXIT_IO = 4

_NET_LANE = 2**40  # substream index reserved for auxiliary draws (nets, points)


class SchemaError(Exception):
    pass


class CheckFailure(Exception):
    pass


# -- schema -------------------------------------------------------------------

_LAW_FAMILIES = ("symmetric-weibull", "gaussian", "rademacher", "uniform")

SCHEMAS: dict[str, dict] = {
    "sample": {
        "family": ("choice", _LAW_FAMILIES, "symmetric-weibull"),
        "alpha": ("float", 1.0),
        "scale": ("float", 1.0),
        "count": ("int", 1000),
        "seed": ("int", 0),
        "standardized": ("bool", False),
    },
    "psinorm": {
        "family": ("choice", _LAW_FAMILIES, "symmetric-weibull"),
        "alpha": ("float", 1.0),
        "scale": ("float", 1.0),
        "measure_alpha": ("float", None),
        "samples": ("int", 100000),
        "seed": ("int", 0),
        "method": ("choice", ("bisection", "closed-form", "moment-ratio"), "bisection"),
        "standardized": ("bool", False),
    },
    "gamma": {
        "set": ("choice", ("sphere", "sparse", "ball", "finite"), "sphere"),
        "n": ("int", 8),
        "s": ("int", None),
        "r": ("float", None),
        "points": ("points", None),
        "alpha": ("float", 1.0),
    },
    "tails": {
        "model": ("choice", ("row", "column"), "row"),
        "family": ("choice", _LAW_FAMILIES, "symmetric-weibull"),
        "column_law": ("choice", ("uniform-sphere", "normalized-weibull"), "uniform-sphere"),
        "alpha": ("float", 1.0),
        "m": ("int", 100),
        "n": ("int", 10),
        "trials": ("int", 10000),
        "seed": ("int", 0),
        "tset": ("choice", ("singleton", "net"), "singleton"),
        "net_count": ("int", 64),
        "thresholds": ("floatlist", None),
    },
    "hanson-wright": {
        "family": ("choice", _LAW_FAMILIES, "symmetric-weibull"),
        "alpha": ("float", 1.0),
        "n": ("int", 8),
        "matrix": ("choice", ("identity", "alternating"), "identity"),
        "trials": ("int", 10000),
        "seed": ("int", 0),
        "thresholds": ("floatlist", None),
    },
    "jl": {
        "points": ("int", 200),
        "dim": ("int", 32),
        "eps": ("float", 0.25),
        "delta": ("float", 0.05),
        "model": ("choice", ("row", "column"), "row"),
        "family": ("choice", _LAW_FAMILIES, "symmetric-weibull"),
        "column_law": ("choice", ("uniform-sphere", "normalized-weibull"), "uniform-sphere"),
        "alpha": ("float", 1.0),
        "trials": ("int", 20),
        "seed": ("int", 0),
        "m": ("int", None),
    },
    "rip": {
        "m": ("int", 60),
        "n": ("int", 12),
        "s": ("int", 2),
        "model": ("choice", ("row", "column"), "row"),
        "family": ("choice", _LAW_FAMILIES, "gaussian"),
        "alpha": ("float", 2.0),
        "seed": ("int", 0),
        "budget": ("int", 10**6),
        "sampled_supports": ("int", 2000),
        "delta_target": ("float", None),
        "u": ("float", 1.0),
    },
    "normalize": {
        "m": ("int", 64),
        "n": ("int", 32),
        "family": ("choice", _LAW_FAMILIES, "symmetric-weibull"),
        "alpha": ("float", 1.0),
        "trials": ("int", 1000),
        "seed": ("int", 0),
    },
    "calibrate": {
        "seed": ("int", DEFAULT_SEED),
        "quick": ("bool", False),
    },
}


def _coerce(command: str, key: str, value, kind_spec):
    kind = kind_spec[0]
    try:
        if kind == "int":
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(f"expected an integer, got {value}")
            out = int(value)
            if key == "seed" and not (0 <= out < 2**64):
                raise ValueError("seed must fit in 64 unsigned bits")
            return out
        if kind == "float":
            return float(value)
        if kind == "bool":
            if isinstance(value, bool):
                return value
            raise ValueError("expected a boolean")
        if kind == "choice":
            value = str(value)
            if value not in kind_spec[1]:
                raise ValueError(f"must be one of {kind_spec[1]}")
            return value
        if kind == "floatlist":
            if isinstance(value, str):
                value = [v for v in value.split(",") if v.strip()]
            return [float(v) for v in value]
        if kind == "points":
            arr = np.asarray(value, dtype=float)
            if arr.ndim != 2:
                raise ValueError("points must be a list of coordinate lists")
            return [[float(v) for v in row] for row in arr]
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{command}: bad value for {key!r}: {exc}") from None
    raise SchemaError(f"{command}: unhandled kind {kind}")


def resolve_config(command: str, config_path: str | None, overrides: dict) -> dict:
    """Merge config file and flag overrides against the command schema.

    The file may be a previous run's manifest, in which case its embedded
    resolved config is used.  Flags win over the file; schema defaults fill
    the rest; unknown keys in the file are hard errors.
    """
    schema = SCHEMAS[command]
    merged: dict = {}
    if config_path:
        import json

        try:
            with open(config_path) as fh:
                raw = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise SchemaError(f"cannot read config {config_path}: {exc}") from None
        if "config" in raw and "config_hash" in raw:  # a manifest
            if raw.get("command") not in (None, command):
                raise SchemaError(
                    f"manifest is for {raw.get('command')!r}, not {command!r}"
                )
            raw = raw["config"]
        if not isinstance(raw, dict):
            raise SchemaError("config file must hold a JSON object")
        merged.update(raw)
    for key, value in overrides.items():
        if value is not None:
            merged[key] = value
    unknown = sorted(set(merged) - set(schema))
    if unknown:
        raise SchemaError(f"{command}: unknown config keys {unknown}")
    out = {}
    for key, kind_spec in schema.items():
        if key in merged and merged[key] is not None:
            out[key] = _coerce(command, key, merged[key], kind_spec)
        else:
            out[key] = kind_spec[1 if len(kind_spec) == 2 else 2]
    return out


def _law_from_config(cfg: dict) -> TailLaw:
    fam = Family(cfg["family"])
    scale = float(cfg.get("scale", 1.0))
    alpha = float(cfg["alpha"])
    if fam is Family.GAUSSIAN and alpha != 2.0:
        raise SchemaError("gaussian law requires alpha = 2")
    law = TailLaw(fam, alpha, scale)
    if cfg.get("standardized"):
        law = standardize(law)
    return law


def _ensemble_from_config(cfg: dict):
    if cfg["model"] == "row":
        return row_model(cfg["m"], cfg["n"], _law_from_config(cfg))
    return column_model(cfg["m"], cfg["n"], ColumnLaw(cfg["column_law"]), cfg["alpha"])


# -- artifact plumbing -----------------------------------------------------------


class Emitter:
    def __init__(self, command: str, config: dict, output_dir: str, run_options: dict):
        self.command = command
        self.config = config
        self.output_dir = output_dir
        self.run_options = run_options
        self.hash = reporting.config_hash({"command": command, **config})
        self.artifacts: list[str] = []
        try:
            os.makedirs(output_dir, exist_ok=True)
            probe = os.path.join(output_dir, ".write-probe")
            with open(probe, "w") as fh:
                fh.write("ok")
            os.remove(probe)
        except OSError as exc:
            raise OSError(f"output dir {output_dir!r} is not writable: {exc}") from exc

    def path(self, name: str) -> str:
        self.artifacts.append(name)
        return os.path.join(self.output_dir, name)

    def finish(self, results: dict, calibration_version: str | None = None) -> None:
        report = {
            "command": self.command,
            "config_hash": self.hash,
            "seed": self.config.get("seed"),
            "calibration_version": calibration_version,
            "htsk_version": __version__,
            "results": results,
        }
        reporting.write_json(self.path("report.json"), report)
        manifest = {
            "command": self.command,
            "config": self.config,
            "config_hash": self.hash,
            "run_options": self.run_options,
            "calibration_version": calibration_version,
            "artifacts": sorted(self.artifacts),
        }
        reporting.write_json(os.path.join(self.output_dir, "manifest.json"), manifest)


def _tail_curve_results(curve: lab.TailCurve) -> dict:
    return {
        "trials": curve.trials,
        "location": curve.location,
        "fitted_exponent": curve.fitted_exponent,
        "fit_r2": curve.fit_r2,
        "envelope_ok": curve.envelope_ok,
        "n_thresholds": len(curve.thresholds),
    }


def _write_curve_csv(emitter: Emitter, curve: lab.TailCurve, name: str = "tail_curve.csv"):
    rows = zip(curve.thresholds, curve.survival, curve.ci_low, curve.ci_high)
    reporting.write_csv(
        emitter.path(name), ["threshold", "survival", "ci_low", "ci_high"], rows
    )


def _load_calibration_or_none():
    try:
        return load_calibration()
    except (OSError, KeyError, ValueError):
        return None


def _run_command(handler, command, config_path, overrides, output_dir, run_options):
    try:
        cfg = resolve_config(command, config_path, overrides)
    except SchemaError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    try:
        emitter = Emitter(command, cfg, output_dir, run_options)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_IO)
    try:
        handler(cfg, emitter, run_options)
    except SchemaError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    except CheckFailure as exc:
        click.echo(f"check failed: {exc}", err=True)
        sys.exit(EXIT_CHECK)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_IO)
    sys.exit(EXIT_OK)


def _common_options(fn):
    fn = click.option("--config", "config_path", type=str, default=None,
                      help="JSON config or a previous manifest; flags win.")(fn)
    fn = click.option("--output-dir", "-o", default="htsk-out", show_default=True)(fn)
    fn = click.option("--workers", type=int, default=1, show_default=True)(fn)
    fn = click.option("--check", is_flag=True, default=False,
                      help="Exit 3 when the run's acceptance checks fail.")(fn)
    fn = click.option("--plot/--no-plot", "plot", default=True, show_default=True)(fn)
    return fn


@click.group()
@click.version_option(version=__version__, prog_name="htsk")
def main():
    """Heavy-tailed sketching lab: generate, measure, verify."""


# -- commands ---------------------------------------------------------------------


@main.command("sample")
@_common_options
@click.option("--family", type=str, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--scale", type=float, default=None)
@click.option("--count", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--standardized", is_flag=True, default=None)
def cmd_sample(config_path, output_dir, workers, check, plot, **flags):
    """Draw from a scalar law and dump a single-column CSV."""

    def handler(cfg, emitter, run_options):
        law = _law_from_config(cfg)
        stream = RandomStream.from_seed(cfg["seed"])
        values = sample(law, stream, size=cfg["count"])
        reporting.write_csv(emitter.path("samples.csv"), ["value"],
                            ([float(v)] for v in values))
        results = {
            "law": law_to_json(law),
            "count": cfg["count"],
            "mean": float(np.mean(values)),
            "std": float(np.std(values)),
            "max_abs": float(np.max(np.abs(values))),
        }
        emitter.finish(results)

    _run_command(handler, "sample", config_path, flags, output_dir,
                 {"workers": workers, "check": check, "plot": plot})


@main.command("psinorm")
@_common_options
@click.option("--family", type=str, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--scale", type=float, default=None)
@click.option("--measure-alpha", "measure_alpha", type=float, default=None)
@click.option("--samples", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--method", type=str, default=None)
@click.option("--standardized", is_flag=True, default=None)
def cmd_psinorm(config_path, output_dir, workers, check, plot, **flags):
    """Estimate the tail norm of a scalar law."""

    def handler(cfg, emitter, run_options):
        law = _law_from_config(cfg)
        measure_alpha = cfg["measure_alpha"] or law.alpha
        if cfg["method"] == "closed-form":
            est = psi_norm_closed_form(law, measure_alpha)
        else:
            stream = RandomStream.from_seed(cfg["seed"])
            draws = sample(law, stream, size=cfg["samples"])
            if cfg["method"] == "moment-ratio":
                est = psi_norm_moment_ratio(draws, measure_alpha)
            else:
                est = psi_norm_bisection(draws, measure_alpha)
        results = {
            "law": law_to_json(law),
            "measure_alpha": measure_alpha,
            "value": est.value,
            "method": est.method,
            "sample_count": est.sample_count,
            "ci_low": est.ci_low,
            "ci_high": est.ci_high,
        }
        emitter.finish(results)

    _run_command(handler, "psinorm", config_path, flags, output_dir,
                 {"workers": workers, "check": check, "plot": plot})


@main.command("gamma")
@_common_options
@click.option("--set", "set", type=str, default=None)
@click.option("--n", type=int, default=None)
@click.option("--s", type=int, default=None)
@click.option("--r", type=float, default=None)
@click.option("--alpha", type=float, default=None)
def cmd_gamma(config_path, output_dir, workers, check, plot, **flags):
    """Complexity bracket of an index set."""

    def handler(cfg, emitter, run_options):
        kind = cfg["set"]
        if kind == "sphere":
            descr = unit_sphere(cfg["n"])
        elif kind == "sparse":
            if cfg["s"] is None:
                raise SchemaError("gamma: sparse set needs s")
            descr = sparse_sphere(cfg["n"], cfg["s"])
        elif kind == "ball":
            descr = ball(cfg["n"], cfg["r"] if cfg["r"] is not None else 1.0)
        else:
            if cfg["points"] is None:
                raise SchemaError("gamma: finite set needs points")
            descr = finite_points(cfg["points"])
        alpha = cfg["alpha"]
        bracket = complexity_bracket(descr, alpha)
        results = {
            "descriptor": descriptor_to_json(descr),
            "bracket": bracket_to_json(bracket),
            "entropy_integral": dudley_gamma_upper(descr, alpha),
        }
        if kind == "sparse":
            rate = (cfg["s"] * math.log(math.e * cfg["n"] / cfg["s"])) ** (1.0 / alpha)
            results["sparse_rate"] = rate
            results["sparse_rate_ratio"] = results["entropy_integral"] / rate
        emitter.finish(results)

    _run_command(handler, "gamma", config_path, flags, output_dir,
                 {"workers": workers, "check": check, "plot": plot})


@main.command("tails")
@_common_options
@click.option("--model", type=str, default=None)
@click.option("--family", type=str, default=None)
@click.option("--column-law", "column_law", type=str, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--m", type=int, default=None)
@click.option("--n", type=int, default=None)
@click.option("--trials", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--tset", type=str, default=None)
@click.option("--net-count", "net_count", type=int, default=None)
@click.option("--thresholds", type=str, default=None)
def cmd_tails(config_path, output_dir, workers, check, plot, **flags):
    """Tail curve of the sup-deviation over an index set."""

    def handler(cfg, emitter, run_options):
        spec = _ensemble_from_config(cfg)
        model = lab.Model.ROW_IDENTITY if cfg["model"] == "row" else lab.Model.COLUMN
        stream = RandomStream.from_seed(cfg["seed"])
        if cfg["tset"] == "singleton":
            pts = np.eye(cfg["n"])[:1]
        else:
            pts = sphere_net(cfg["n"], cfg["net_count"], stream.substream(_NET_LANE))
        calib = _load_calibration_or_none()
        env_fn = None
        calib_version = None
        if calib is not None:
            calib_version = calib.version
            try:
                from .calibration import deviation_envelope

                k = nominal_psi_norm(spec, calib)
                k_power = k ** (4.0 / spec.alpha) if cfg["model"] == "row" else k
                c_tail = calib.get(f"{cfg['model']}_tail_C", alpha=spec.alpha)
                gamma_upper = complexity_bracket(
                    finite_points(pts), spec.alpha
                ).gamma_upper
                rad = float(np.linalg.norm(pts, axis=1).max())
                env_fn = deviation_envelope(spec.alpha, k_power, gamma_upper, rad, c_tail)
            except KeyError:
                env_fn = None
        curve = lab.mc_tail_curve(
            spec, model, pts, cfg["trials"], stream,
            thresholds=cfg["thresholds"], workers=run_options["workers"],
            envelope_fn=env_fn,
        )
        _write_curve_csv(emitter, curve)
        if run_options["plot"]:
            plotting.render_tail_curve(
                curve, spec.alpha, emitter.path("plot.svg"),
                title=f"{cfg['model']} model deviation tail",
            )
        results = _tail_curve_results(curve)
        results["net_count"] = len(pts)
        emitter.finish(results, calib_version)
        if run_options["check"] and curve.envelope_ok is not True:
            raise CheckFailure("tail curve exceeded its calibrated envelope")

    _run_command(handler, "tails", config_path, flags, output_dir,
                 {"workers": workers, "check": check, "plot": plot})


@main.command("hanson-wright")
@_common_options
@click.option("--family", type=str, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--n", type=int, default=None)
@click.option("--matrix", type=str, default=None)
@click.option("--trials", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--thresholds", type=str, default=None)
def cmd_hanson_wright(config_path, output_dir, workers, check, plot, **flags):
    """Tail curve of a centered quadratic form against its two-regime envelope."""

    def handler(cfg, emitter, run_options):
        law = standardize(_law_from_config(cfg))
        n = cfg["n"]
        mat = np.eye(n) if cfg["matrix"] == "identity" else np.diag(
            [1.0 if i % 2 == 0 else -1.0 for i in range(n)]
        )
        calib = _load_calibration_or_none()
        c_hat = None
        calib_version = None
        if calib is not None:
            calib_version = calib.version
            try:
                c_hat = calib.get("hanson_wright_C", alpha=law.alpha)
            except KeyError:
                c_hat = None
        stream = RandomStream.from_seed(cfg["seed"])
        curve = lab.hanson_wright_check(
            law, mat, cfg["trials"], stream,
            thresholds=cfg["thresholds"], c_hat=c_hat,
            workers=run_options["workers"],
        )
        _write_curve_csv(emitter, curve)
        if run_options["plot"]:
            plotting.render_tail_curve(
                curve, law.alpha / 2.0, emitter.path("plot.svg"),
                title="quadratic form deviation tail",
            )
        emitter.finish(_tail_curve_results(curve), calib_version)
        if run_options["check"] and curve.envelope_ok is not True:
            raise CheckFailure("quadratic-form tail exceeded its calibrated envelope")

    _run_command(handler, "hanson-wright", config_path, flags, output_dir,
                 {"workers": workers, "check": check, "plot": plot})


@main.command("jl")
@_common_options
@click.option("--points", type=int, default=None)
@click.option("--dim", type=int, default=None)
@click.option("--eps", type=float, default=None)
@click.option("--delta", type=float, default=None)
@click.option("--model", type=str, default=None)
@click.option("--family", type=str, default=None)
@click.option("--column-law", "column_law", type=str, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--trials", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--m", type=int, default=None)
def cmd_jl(config_path, output_dir, workers, check, plot, **flags):
    """Random embedding of a point cloud with pairwise distortion scoring."""

    def handler(cfg, emitter, run_options):
        calib = _load_calibration_or_none()
        if calib is None:
            raise SchemaError("jl needs calibration fixtures (run `htsk calibrate`)")
        stream = RandomStream.from_seed(cfg["seed"])
        pts = stream.substream(_NET_LANE).generator().standard_normal(
            (cfg["points"], cfg["dim"])
        )
        probe = _ensemble_from_config({**cfg, "m": 2, "n": cfg["dim"]})
        k = formula_k(probe, calib) if cfg["model"] == "column" else nominal_psi_norm(probe)
        m = cfg["m"] or jl_dim(
            cfg["eps"], cfg["delta"], cfg["alpha"], k, cfg["model"], calibration=calib
        )
        spec = _ensemble_from_config({**cfg, "m": m, "n": cfg["dim"]})
        report = jl_embed_and_score(
            pts, spec, cfg["eps"], cfg["delta"], cfg["trials"], stream,
            calibration=calib, workers=run_options["workers"],
        )
        reporting.write_csv(
            emitter.path("jl.csv"),
            ["m_used", "m_required", "pairs", "ok_fraction"],
            [[report.m_used, report.m_required, report.pairs,
              report.pairwise_ok_fraction]],
        )
        if run_options["plot"]:
            from scipy.spatial.distance import pdist

            a = gen_matrix(spec, stream.substream(0))
            emb = (pts @ a.T) / (math.sqrt(m) if cfg["model"] == "row" else 1.0)
            plotting.render_jl_distortions(
                pdist(pts), pdist(emb), cfg["eps"], emitter.path("plot.svg"),
                title=f"pairwise distortion at m={m}",
            )
        results = {
            "eps": report.eps, "delta": report.delta, "alpha": report.alpha,
            "K": report.K, "m_required": report.m_required, "m_used": report.m_used,
            "pairwise_ok_fraction": report.pairwise_ok_fraction,
            "trials": report.trials, "pairs": report.pairs,
            "skipped_pairs": report.skipped_pairs,
        }
        emitter.finish(results, calib.version)
        if run_options["check"] and report.pairwise_ok_fraction < 1.0 - cfg["delta"]:
            raise CheckFailure(
                f"ok fraction {report.pairwise_ok_fraction:.4f} < {1 - cfg['delta']:.4f}"
            )

    _run_command(handler, "jl", config_path, flags, output_dir,
                 {"workers": workers, "check": check, "plot": plot})


@main.command("rip")
@_common_options
@click.option("--m", type=int, default=None)
@click.option("--n", type=int, default=None)
@click.option("--s", type=int, default=None)
@click.option("--model", type=str, default=None)
@click.option("--family", type=str, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--budget", type=int, default=None)
@click.option("--sampled-supports", "sampled_supports", type=int, default=None)
@click.option("--delta-target", "delta_target", type=float, default=None)
@click.option("--u", type=float, default=None)
def cmd_rip(config_path, output_dir, workers, check, plot, **flags):
    """Restricted isometry constant of one ensemble draw."""

    def handler(cfg, emitter, run_options):
        cfg_full = {**cfg, "column_law": "uniform-sphere"}
        spec = _ensemble_from_config(cfg_full)
        stream = RandomStream.from_seed(cfg["seed"])
        a = gen_matrix(spec, stream.substream(0))
        if cfg["model"] == "column":
            a = a * math.sqrt(cfg["m"])  # lambda = sqrt(m) normalization
        report = rip_constant_exact(
            a, cfg["s"], budget=cfg["budget"], stream=stream.substream(1),
            sampled_supports=cfg["sampled_supports"],
            workers=run_options["workers"],
        )
        calib = _load_calibration_or_none()
        m_formula = None
        calib_version = None
        if calib is not None:
            calib_version = calib.version
            try:
                k = formula_k(spec, calib)
                m_formula = rip_sample_size(
                    max(report.delta_s, 1e-6) if cfg["delta_target"] is None
                    else cfg["delta_target"],
                    cfg["alpha"], k, cfg["s"], cfg["n"], cfg["u"], cfg["model"],
                    calibration=calib,
                )
            except KeyError:
                m_formula = None
        reporting.write_csv(
            emitter.path("rip.csv"),
            ["s", "delta_s", "delta_s_unsquared", "method", "supports_checked"],
            [[report.s, report.delta_s, report.delta_s_unsquared, report.method,
              report.supports_checked]],
        )
        results = {
            "s": report.s,
            "delta_s": report.delta_s,
            "delta_s_unsquared": report.delta_s_unsquared,
            "method": report.method,
            "supports_checked": report.supports_checked,
            "m_formula": m_formula,
        }
        emitter.finish(results, calib_version)
        if run_options["check"] and cfg["delta_target"] is not None:
            if report.delta_s > cfg["delta_target"]:
                raise CheckFailure(
                    f"delta_s {report.delta_s:.4f} > target {cfg['delta_target']:.4f}"
                )

    _run_command(handler, "rip", config_path, flags, output_dir,
                 {"workers": workers, "check": check, "plot": plot})


@main.command("normalize")
@_common_options
@click.option("--m", type=int, default=None)
@click.option("--n", type=int, default=None)
@click.option("--family", type=str, default=None)
@click.option("--alpha", type=float, default=None)
@click.option("--trials", type=int, default=None)
@click.option("--seed", type=int, default=None)
def cmd_normalize(config_path, output_dir, workers, check, plot, **flags):
    """Column-normalization event statistics over repeated draws."""

    def handler(cfg, emitter, run_options):
        spec = row_model(cfg["m"], cfg["n"], _law_from_config(cfg))
        stream = RandomStream.from_seed(cfg["seed"])
        rows = []
        hits = 0
        for i in range(cfg["trials"]):
            out = normalize_columns(gen_matrix(spec, stream.substream(i)))
            hits += out.event_F
            rows.append([i, out.min_column_norm, int(out.event_F)])
        reporting.write_csv(
            emitter.path("trials.csv"), ["trial", "min_column_norm", "event_F"], rows
        )
        floor = math.sqrt(cfg["m"]) / 2.0
        if run_options["plot"]:
            plotting.render_norm_histogram(
                [r[1] for r in rows], floor, emitter.path("plot.svg"),
                title=f"minimum column norm, m={cfg['m']}, n={cfg['n']}",
            )
        results = {
            "m": cfg["m"], "n": cfg["n"], "trials": cfg["trials"],
            "p_event_F": hits / cfg["trials"],
            "norm_floor": floor,
        }
        emitter.finish(results)
        if run_options["check"] and results["p_event_F"] < 0.99:
            raise CheckFailure(f"P(F) = {results['p_event_F']:.4f} < 0.99")

    _run_command(handler, "normalize", config_path, flags, output_dir,
                 {"workers": workers, "check": check, "plot": plot})


@main.command("calibrate")
@_common_options
@click.option("--seed", type=int, default=None)
@click.option("--quick", is_flag=True, default=None)
def cmd_calibrate(config_path, output_dir, workers, check, plot, **flags):
    """Run the calibration protocol and freeze the constants file."""

    def handler(cfg, emitter, run_options):
        constants = run_calibration(seed=cfg["seed"], quick=cfg["quick"])
        version = write_calibration(
            emitter.path("calibration.json"), constants, cfg["seed"]
        )
        emitter.finish({"version": version, "n_constants": len(constants)})

    _run_command(handler, "calibrate", config_path, flags, output_dir,
                 {"workers": workers, "check": check, "plot": plot})


if __name__ == "__main__":
    main()
