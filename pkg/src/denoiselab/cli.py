"""Command-line surface for reproducible desk-scale experiments.

Every subcommand resolves its settings from flags (optionally over a JSON
config whose keys mirror the flag names; flags win), writes its outputs plus
a ``manifest.json`` recording the resolved flags, seed, and file-format
versions, and exits with a stable code:

  0 success, 1 verification failure, 2 usage error, 3 I/O error,
  4 plugin protocol error.

Reruns with the same resolved flags are byte-identical; a manifest can be
fed back through ``--config``. The ``DENOISELAB_OUT`` environment variable
supplies the default output directory.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import shlex
import sys
from pathlib import Path

import numpy as np

from .dataset import empirical_stats, load_dataset, write_raw_f64
from .denoisers import GaussianDenoiser, MultiDeltaDenoiser
from .distillation import (
    AFFINE_MAGIC,
    DistillConfig,
    closed_form_linear,
    distill_linear,
    load_affine,
    losses_to_csv,
    save_affine,
)
from .errors import PluginError, ToolkitError
from .metrics import (
    linearity_score,
    metric_sweep,
    score_diff,
    series_to_csv,
    series_to_json,
    weight_nmse,
)
from .plugin import PLUGIN_MAGIC, ExternalDenoiser
from .sampler import edm_schedule, gaussian_trajectory, ode_sample, trajectory_to_csv
from .svg import plot_series
from .toytrainer import TOY_MAGIC, load_toy
from .verify import SUITES

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_PLUGIN = 4

FORMAT_VERSIONS = {
    "raw-f64": "DDL1",
    "affine-checkpoint": AFFINE_MAGIC.decode(),
    "toy-checkpoint": TOY_MAGIC.decode(),
    "plugin-protocol": PLUGIN_MAGIC.decode(),
    "manifest": 1,
}

_SCHEDULE_DEFAULTS = {"sigma_min": 0.002, "sigma_max": 80.0, "rho": 7.0, "steps": 10}


class UsageError(Exception):
    """Bad flag combination; maps to exit code 2."""


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge defaults, optional JSON config, and explicit flags (flags win)."""
    resolved = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        loaded = json.loads(Path(config_path).read_text())
        if isinstance(loaded.get("flags"), dict):  # accept a manifest directly
            loaded = loaded["flags"]
        for key in defaults:
            if key in loaded:
                resolved[key] = loaded[key]
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            resolved[key] = value
    return resolved


def _outdir(resolved: dict) -> Path:
    out = resolved.get("out") or os.environ.get("DENOISELAB_OUT") or "."
    resolved["out"] = str(out)
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_manifest(outdir: Path, subcommand: str, flags: dict, outputs: list[str]) -> None:
    manifest = {
        "subcommand": subcommand,
        "flags": flags,
        "seed": flags.get("seed"),
        "format_versions": FORMAT_VERSIONS,
        "outputs": sorted(outputs),
    }
    with open(outdir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_data(resolved: dict):
    if not resolved.get("data"):
        return None
    return load_dataset(resolved["data"], resolved.get("format", "csv"))


def _schedule(resolved: dict):
    return edm_schedule(resolved["sigma_min"], resolved["sigma_max"],
                        resolved["rho"], int(resolved["steps"]))


def _build_denoiser(spec: str, data, stack: contextlib.ExitStack, dim: int | None = None):
    """Instantiate a denoiser from its CLI spec string.

    Specs: ``multi-delta``, ``gaussian``, ``affine:PATH``, ``toy:PATH``,
    ``external:COMMAND``. External children are registered with the exit
    stack so they are shut down when the command finishes.
    """
    if spec == "multi-delta":
        if data is None:
            raise UsageError("denoiser 'multi-delta' needs --data")
        return MultiDeltaDenoiser(data)
    if spec == "gaussian":
        if data is None:
            raise UsageError("denoiser 'gaussian' needs --data")
        return GaussianDenoiser(empirical_stats(data))
    if spec.startswith("affine:"):
        return load_affine(spec.split(":", 1)[1])
    if spec.startswith("toy:"):
        return load_toy(spec.split(":", 1)[1])
    if spec.startswith("external:"):
        command = shlex.split(spec.split(":", 1)[1])
        if not command:
            raise UsageError("empty external denoiser command")
        if dim is None:
            dim = data.dim if data is not None else None
        if dim is None:
            raise UsageError("external denoiser needs --data or --dim for its dimension")
        return stack.enter_context(ExternalDenoiser(command, dim=int(dim)))
    raise UsageError(f"unknown denoiser spec {spec!r}")


def _add_common(parser: argparse.ArgumentParser, schedule: bool = False) -> None:
    parser.add_argument("--config", help="JSON config whose keys mirror the flags")
    parser.add_argument("--out", help="output directory (default $DENOISELAB_OUT or .)")
    parser.add_argument("--seed", type=int)
    if schedule:
        parser.add_argument("--sigma-min", dest="sigma_min", type=float)
        parser.add_argument("--sigma-max", dest="sigma_max", type=float)
        parser.add_argument("--rho", type=float)
        parser.add_argument("--steps", type=int)


def cmd_stats(args: argparse.Namespace) -> int:
    defaults = {"data": None, "format": "csv", "out": None, "seed": 0}
    resolved = _resolve(args, defaults)
    if not resolved["data"]:
        raise UsageError("stats needs --data")
    outdir = _outdir(resolved)
    stats = empirical_stats(_load_data(resolved))
    outputs = ["mean.csv", "eigvals.csv", "basis.f64"]
    with open(outdir / "mean.csv", "w") as fh:
        fh.writelines(repr(float(v)) + "\n" for v in stats.mean)
    with open(outdir / "eigvals.csv", "w") as fh:
        fh.writelines(repr(float(v)) + "\n" for v in stats.eigvals)
    write_raw_f64(outdir / "basis.f64", stats.basis.T)  # one component per row
    _write_manifest(outdir, "stats", resolved, outputs)
    return EXIT_OK


def cmd_sample(args: argparse.Namespace) -> int:
    defaults = {"data": None, "format": "csv", "denoiser": "gaussian", "count": 1,
                "seed": 0, "oracle": False, "raw": False, "dim": None, "out": None,
                **_SCHEDULE_DEFAULTS}
    resolved = _resolve(args, defaults)
    if int(resolved["count"]) < 1:
        raise UsageError(f"count must be at least 1, got {resolved['count']}")
    outdir = _outdir(resolved)
    data = _load_data(resolved)
    schedule = _schedule(resolved)
    outputs = []
    with contextlib.ExitStack() as stack:
        den = _build_denoiser(resolved["denoiser"], data, stack, resolved["dim"])
        if resolved["oracle"] and resolved["denoiser"] != "gaussian":
            raise UsageError("--oracle only applies to the gaussian denoiser")
        stats = empirical_stats(data) if resolved["oracle"] else None
        count = int(resolved["count"])
        finals = np.empty((count, den.dim))
        oracle_gap = 0.0
        for i in range(count):
            rng = np.random.default_rng([int(resolved["seed"]), i])
            x_T = resolved["sigma_max"] * rng.standard_normal(den.dim)
            traj = ode_sample(den, schedule, x_T)
            finals[i] = traj.final
            name = f"trajectory_{i:04d}.csv"
            trajectory_to_csv(traj, outdir / name)
            outputs.append(name)
            if stats is not None:
                exact = gaussian_trajectory(stats, x_T, schedule)
                oname = f"oracle_trajectory_{i:04d}.csv"
                trajectory_to_csv(exact, outdir / oname)
                outputs.append(oname)
                gap = np.linalg.norm(traj.final - exact.final) / np.linalg.norm(exact.final)
                oracle_gap = max(oracle_gap, float(gap))
    with open(outdir / "finals.csv", "w") as fh:
        fh.write("sample," + ",".join(f"x{j}" for j in range(finals.shape[1])) + "\n")
        for i, row in enumerate(finals):
            fh.write(",".join([str(i)] + [repr(float(v)) for v in row]) + "\n")
    outputs.append("finals.csv")
    if resolved["raw"]:
        write_raw_f64(outdir / "finals.f64", finals)
        outputs.append("finals.f64")
    if stats is not None:
        with open(outdir / "report.json", "w") as fh:
            json.dump({"max_final_rel_error": oracle_gap}, fh, indent=2, sort_keys=True)
            fh.write("\n")
        outputs.append("report.json")
    _write_manifest(outdir, "sample", resolved, outputs)
    return EXIT_OK


def _parse_sigmas(raw) -> list[float]:
    if isinstance(raw, (list, tuple)):
        values = [float(v) for v in raw]
    else:
        try:
            values = [float(tok) for tok in str(raw).split(",") if tok.strip()]
        except ValueError as exc:
            raise UsageError(f"unparseable sigma list {raw!r}") from exc
    if not values or any(v <= 0 for v in values):
        raise UsageError(f"sigma list must hold positive values, got {raw!r}")
    return values


def cmd_distill(args: argparse.Namespace) -> int:
    defaults = {"data": None, "format": "csv", "teacher": "multi-delta",
                "sigmas": "1.0", "steps": 6000, "batch": 64, "lr": 5e-3,
                "seed": 0, "dim": None, "out": None}
    resolved = _resolve(args, defaults)
    if not resolved["data"]:
        raise UsageError("distill needs --data")
    outdir = _outdir(resolved)
    data = _load_data(resolved)
    stats = empirical_stats(data)
    sigmas = _parse_sigmas(resolved["sigmas"])
    outputs = []
    report = {}
    with contextlib.ExitStack() as stack:
        teacher = _build_denoiser(resolved["teacher"], data, stack, resolved["dim"])
        for sigma in sigmas:
            cfg = DistillConfig(steps=int(resolved["steps"]), batch=int(resolved["batch"]),
                                lr=float(resolved["lr"]), seed=int(resolved["seed"]))
            fitted, losses = distill_linear(teacher, data, sigma, cfg)
            tag = f"{sigma:g}"
            save_affine(fitted, outdir / f"affine_sigma{tag}.aff1")
            losses_to_csv(losses, outdir / f"loss_sigma{tag}.csv")
            outputs += [f"affine_sigma{tag}.aff1", f"loss_sigma{tag}.csv"]
            exact = closed_form_linear(stats, sigma)
            report[tag] = {
                "weight_nmse_vs_closed_form": weight_nmse(fitted.weight, exact.weight),
                "final_loss": float(losses[-1]),
            }
    with open(outdir / "report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs.append("report.json")
    _write_manifest(outdir, "distill", resolved, outputs)
    return EXIT_OK


def cmd_metrics(args: argparse.Namespace) -> int:
    defaults = {"data": None, "format": "csv", "metric": "linearity",
                "denoiser": "gaussian", "denoiser2": None, "variant": None,
                "n": 100, "seed": 0, "alpha": 1.0 / np.sqrt(2.0),
                "beta": 1.0 / np.sqrt(2.0), "svg": False, "dim": None,
                "out": None, **_SCHEDULE_DEFAULTS}
    resolved = _resolve(args, defaults)
    if not resolved["data"]:
        raise UsageError("metrics needs --data")
    outdir = _outdir(resolved)
    data = _load_data(resolved)
    schedule = _schedule(resolved)
    n = int(resolved["n"])
    seed = int(resolved["seed"])
    with contextlib.ExitStack() as stack:
        den = _build_denoiser(resolved["denoiser"], data, stack, resolved["dim"])
        if resolved["metric"] == "linearity":
            variant = resolved["variant"] or "cosine"
            series = metric_sweep(
                lambda sigma, s: linearity_score(
                    den, data, sigma, resolved["alpha"], resolved["beta"],
                    n_pairs=n, seed=s, variant=variant),
                schedule, master_seed=seed, name=f"linearity-{variant}", n_samples=n)
        elif resolved["metric"] == "score-diff":
            if not resolved["denoiser2"]:
                raise UsageError("metric 'score-diff' needs --denoiser2")
            den2 = _build_denoiser(resolved["denoiser2"], data, stack, resolved["dim"])
            variant = resolved["variant"] or "rmse"
            series = metric_sweep(
                lambda sigma, s: score_diff(den, den2, data, sigma, n=n, seed=s,
                                            variant=variant),
                schedule, master_seed=seed, name=f"score-diff-{variant}", n_samples=n)
        else:
            raise UsageError(f"unknown metric {resolved['metric']!r}")
    outputs = ["series.csv", "series.json"]
    series_to_csv(series, outdir / "series.csv")
    series_to_json(series, outdir / "series.json")
    if resolved["svg"]:
        plot_series([series], outdir / "series.svg", title=series.name)
        outputs.append("series.svg")
    _write_manifest(outdir, "metrics", resolved, outputs)
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    defaults = {"suite": None, "seed": 0, "dim": None, "tolerance": None,
                "n_samples": None, "n_seeds": None, "n_starts": None,
                "steps": None, "out": None}
    resolved = _resolve(args, defaults)
    suite = resolved["suite"]
    if suite not in SUITES:
        raise UsageError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
    if resolved["tolerance"] is not None and resolved["tolerance"] <= 0:
        raise UsageError(f"tolerance must be positive, got {resolved['tolerance']}")
    fn = SUITES[suite]
    accepted = fn.__code__.co_varnames[: fn.__code__.co_argcount]
    kwargs = {"seed": int(resolved["seed"])}
    for key in ("dim", "tolerance", "n_samples", "n_seeds", "n_starts", "steps"):
        if resolved[key] is not None and key in accepted:
            kwargs[key] = resolved[key]
    results = fn(**kwargs)
    for r in results:
        print(r.line())
    if resolved["out"]:
        outdir = _outdir(resolved)
        with open(outdir / "verify.json", "w") as fh:
            json.dump([r.__dict__ for r in results], fh, indent=2, sort_keys=True)
            fh.write("\n")
        _write_manifest(outdir, "verify", resolved, ["verify.json"])
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="denoiselab",
        description="closed-form diffusion denoisers, distillation, and diagnostics")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("stats", help="empirical mean/eigendecomposition artifacts")
    p.add_argument("--data")
    p.add_argument("--format", choices=["csv", "raw-f64", "pgm-dir"])
    _add_common(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("sample", help="probability-flow ODE sampling")
    p.add_argument("--data")
    p.add_argument("--format", choices=["csv", "raw-f64", "pgm-dir"])
    p.add_argument("--denoiser")
    p.add_argument("--count", type=int)
    p.add_argument("--dim", type=int)
    p.add_argument("--oracle", action="store_const", const=True,
                   help="also emit the closed-form trajectories (gaussian only)")
    p.add_argument("--raw", action="store_const", const=True,
                   help="also write finals as a raw-f64 container")
    _add_common(p, schedule=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("distill", help="linear distillation of a teacher denoiser")
    p.add_argument("--data")
    p.add_argument("--format", choices=["csv", "raw-f64", "pgm-dir"])
    p.add_argument("--teacher")
    p.add_argument("--sigmas", help="comma-separated noise levels")
    p.add_argument("--steps", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--dim", type=int)
    _add_common(p)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("metrics", help="per-sigma metric sweeps")
    p.add_argument("--data")
    p.add_argument("--format", choices=["csv", "raw-f64", "pgm-dir"])
    p.add_argument("--metric", choices=["linearity", "score-diff"])
    p.add_argument("--denoiser")
    p.add_argument("--denoiser2")
    p.add_argument("--variant", choices=["cosine", "nmse", "rmse"])
    p.add_argument("--n", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--dim", type=int)
    p.add_argument("--svg", action="store_const", const=True)
    _add_common(p, schedule=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("verify", help="one-command verification suites")
    p.add_argument("--suite", choices=sorted(SUITES))
    p.add_argument("--dim", type=int)
    p.add_argument("--tolerance", type=float)
    p.add_argument("--n-samples", dest="n_samples", type=int)
    p.add_argument("--n-seeds", dest="n_seeds", type=int)
    p.add_argument("--n-starts", dest="n_starts", type=int)
    p.add_argument("--steps", type=int)
    _add_common(p)
    p.set_defaults(func=cmd_verify)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PluginError as exc:
        print(f"plugin error: {exc}", file=sys.stderr)
        return EXIT_PLUGIN
    except (ToolkitError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
