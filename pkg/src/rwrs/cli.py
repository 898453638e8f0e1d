"""Command line front end.

Every subcommand reads one TOML config, runs its experiment on seeded
RNG streams, and writes the report as CSV and/or JSON plus a run
manifest into the output directory.  Outputs are byte-identical across
reruns and worker counts; wall-clock timings live only in the manifest.

Flags mirror environment variables with the RWRS_ prefix (flag wins):
--config/RWRS_CONFIG, --seed/RWRS_SEED, --workers/RWRS_WORKERS,
--out/RWRS_OUT, --format/RWRS_FORMAT, --plots/RWRS_PLOTS.

Exit status: 0 all verdicts pass, 1 configuration or validation
failure, 2 at least one verdict failed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from . import __version__
from .config import (
    ConfigError,
    experiment_from_config,
    int_list,
    load_config,
    subcommand_table,
)
from .experiments import (
    ExperimentConfig,
    cumulant_experiment,
    estimate_c0,
    fclt_experiment,
    moricz_check,
    newman_wright_check,
    toral_verify_experiment,
    variance_experiment,
    _WALK_TAG,
    _map_indexed,
)
from .occupation import lln_table
from .report import StatReport, Verdict, render_csv
from .rng import stream
from .scenery import IIDScenery, ToralScenery
from .walks import sample_path

_COMMANDS = ("lln", "fclt", "variance", "cumulants", "maximal",
             "toral-verify", "estimate-c0")


@dataclass
class RunManifest:
    """Provenance record written next to every report."""

    command: str
    version: str
    config_hash: str
    master_seed: int
    workers: int
    outputs: Dict[str, str] = field(default_factory=dict)
    timings_seconds: Dict[str, float] = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "command": self.command,
            "version": self.version,
            "config_hash": self.config_hash,
            "master_seed": self.master_seed,
            "workers": self.workers,
            "outputs": self.outputs,
            "timings_seconds": self.timings_seconds,
        }
        return json.dumps(payload, indent=2, sort_keys=True)


@dataclass
class _Options:
    config_path: str
    seed: Optional[int]
    workers: int
    out_dir: str
    fmt: str
    plots: bool


def _env(name: str) -> Optional[str]:
    return os.environ.get("RWRS_" + name)


def _resolve_options(args: argparse.Namespace) -> _Options:
    config_path = args.config or _env("CONFIG")
    if not config_path:
        raise ConfigError("no config file: pass --config or set RWRS_CONFIG")
    seed = args.seed
    if seed is None and _env("SEED") is not None:
        seed = int(_env("SEED"))
    workers = args.workers
    if workers is None:
        workers = int(_env("WORKERS") or "1")
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    out_dir = args.out or _env("OUT") or "rwrs-out"
    fmt = args.format or _env("FORMAT") or "both"
    if fmt not in ("csv", "json", "both"):
        raise ConfigError(f"format must be csv, json or both, got {fmt!r}")
    plots = bool(args.plots) or (_env("PLOTS") or "").lower() in ("1", "true", "yes")
    return _Options(config_path=config_path, seed=seed, workers=workers,
                    out_dir=out_dir, fmt=fmt, plots=plots)


# ---------------------------------------------------------------------------
# subcommand runners: each returns [(name, report)]
# ---------------------------------------------------------------------------

def _run_lln(raw: dict, cfg: ExperimentConfig,
             opts: _Options) -> List[Tuple[str, StatReport]]:
    sec = subcommand_table(raw, "lln")
    n = cfg.n
    default_grid = sorted({max(100, n // 100), max(100, n // 10), n})
    n_grid = int_list(sec, "n_grid", default_grid)
    eps = float(sec.get("eps", 0.25))
    trend = float(sec.get("trend_min_fraction", 0.8))
    if not 0.0 <= trend <= 1.0:
        raise ConfigError("lln.trend_min_fraction must lie in [0, 1]")
    count = int(sec.get("paths", cfg.omega_replicates))
    if count < 1:
        raise ConfigError("lln.paths must be >= 1")
    top = max(n_grid)

    def one_path(i: int):
        return sample_path(cfg.walk, top, stream(cfg.master_seed, _WALK_TAG, i),
                           stream_id=(_WALK_TAG, i))

    paths = _map_indexed(one_path, count, opts.workers)
    report = lln_table(paths, n_grid, cfg.resolved_c0(), eps=eps,
                       trend_min_fraction=trend, master_seed=cfg.master_seed)
    return [("lln", report)]


def _run_fclt(raw: dict, cfg: ExperimentConfig,
              opts: _Options) -> List[Tuple[str, StatReport]]:
    return [("fclt", fclt_experiment(cfg, workers=opts.workers))]


def _run_variance(raw: dict, cfg: ExperimentConfig,
                  opts: _Options) -> List[Tuple[str, StatReport]]:
    sec = subcommand_table(raw, "variance")
    window = int(sec.get("window", 20))
    return [("variance", variance_experiment(cfg, window=window,
                                             workers=opts.workers))]


def _run_cumulants(raw: dict, cfg: ExperimentConfig,
                   opts: _Options) -> List[Tuple[str, StatReport]]:
    sec = subcommand_table(raw, "cumulants")
    r = int(sec.get("r", 4))
    n_grid = int_list(sec, "n_grid", ()) or None
    return [("cumulants", cumulant_experiment(cfg, r=r, n_grid=n_grid))]


def _run_maximal(raw: dict, cfg: ExperimentConfig,
                 opts: _Options) -> List[Tuple[str, StatReport]]:
    sec = subcommand_table(raw, "maximal")
    lam = float(sec.get("lam", 3.0))
    out = [("maximal-newman-wright",
            newman_wright_check(cfg, lam=lam, workers=opts.workers))]
    if isinstance(cfg.model, IIDScenery):
        out.append(("maximal-moricz", moricz_check(cfg, workers=opts.workers)))
    else:
        out[0][1].meta["moricz"] = "skipped: fourth-moment bound needs an iid scenery"
    return out


def _run_toral_verify(raw: dict, cfg: ExperimentConfig,
                      opts: _Options) -> List[Tuple[str, StatReport]]:
    if not isinstance(cfg.model, ToralScenery):
        raise ConfigError("toral-verify needs [model] kind = 'toral'")
    sec = subcommand_table(raw, "toral_verify")
    report = toral_verify_experiment(
        cfg.model,
        replicates=int(sec.get("replicates", 4096)),
        master_seed=cfg.master_seed,
        l_max=int(sec.get("l_max", 3)),
        l_check=int(sec.get("l_check", 12)),
    )
    return [("toral-verify", report)]


def _run_estimate_c0(raw: dict, cfg: ExperimentConfig,
                     opts: _Options) -> List[Tuple[str, StatReport]]:
    sec = subcommand_table(raw, "estimate_c0")
    n_grid = int_list(sec, "n_grid", (5000, 10000, 20000, 50000, 100000))
    paths_per_n = int(sec.get("paths_per_n", 4))
    est = estimate_c0(cfg.walk, n_grid, paths_per_n,
                      master_seed=cfg.master_seed, workers=opts.workers)
    positive = est.value > 0 and (est.se is None or est.value > 2.0 * est.se)
    report = StatReport(
        kind="estimate_c0",
        estimates=[est],
        verdicts=[Verdict(name="c0_positive", passed=positive,
                          observed=est.value,
                          threshold="fitted coefficient exceeds twice its "
                                    "standard error",
                          sample_size=est.n or 0)],
        rows=[{"name": est.name, "value": est.value, "se": est.se,
               "n": est.n}],
        columns=("name", "value", "se", "n"),
        meta={"master_seed": cfg.master_seed, "n_grid": list(n_grid),
              "paths_per_n": paths_per_n},
    )
    return [("estimate-c0", report)]


_RUNNERS = {
    "lln": _run_lln,
    "fclt": _run_fclt,
    "variance": _run_variance,
    "cumulants": _run_cumulants,
    "maximal": _run_maximal,
    "toral-verify": _run_toral_verify,
    "estimate-c0": _run_estimate_c0,
}


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _write_outputs(name: str, report: StatReport, opts: _Options,
                   manifest: RunManifest) -> None:
    os.makedirs(opts.out_dir, exist_ok=True)
    csv_path = os.path.join(opts.out_dir, f"{name}.csv")
    if opts.fmt in ("csv", "both"):
        with open(csv_path, "w", newline="") as fh:
            fh.write(render_csv(report))
        manifest.outputs[f"{name}.csv"] = csv_path
    if opts.fmt in ("json", "both"):
        json_path = os.path.join(opts.out_dir, f"{name}.json")
        with open(json_path, "w", newline="") as fh:
            fh.write(report.to_json() + "\n")
        manifest.outputs[f"{name}.json"] = json_path
    if opts.plots and opts.fmt in ("csv", "both"):
        from .plots import render_plots

        for fig_path in render_plots(report.kind, csv_path):
            manifest.outputs[os.path.basename(fig_path)] = fig_path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rwrs",
        description="Random walks in random sceneries: exact occupation "
                    "combinatorics and quenched limit experiments.")
    parser.add_argument("--version", action="version",
                        version=f"rwrs {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration")
    common.add_argument("--seed", type=int, help="master seed override")
    common.add_argument("--workers", type=int,
                        help="worker threads (outputs identical for any count)")
    common.add_argument("--out", help="output directory (default rwrs-out)")
    common.add_argument("--format", choices=("csv", "json", "both"),
                        help="report formats to write (default both)")
    common.add_argument("--plots", action="store_true", default=None,
                        help="also render figures from the emitted CSV")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "lln": "self-intersection growth diagnostics over a path ensemble",
        "fclt": "finite-dimensional distribution tests of the rescaled process",
        "variance": "exact conditional variance against Monte Carlo and theory",
        "cumulants": "partition counts, transform round trips, criterion statistic",
        "maximal": "maximal inequality and fourth-moment bound checks",
        "toral-verify": "toral action invariants and sampler correlations",
        "estimate-c0": "regress mean self-intersections on n log n",
    }
    for name in _COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        opts = _resolve_options(args)
        raw = load_config(opts.config_path)
        cfg = experiment_from_config(raw, seed=opts.seed)
        manifest = RunManifest(command=args.command, version=__version__,
                               config_hash=cfg.config_hash(),
                               master_seed=cfg.master_seed,
                               workers=opts.workers)
        t0 = time.monotonic()
        named_reports = _RUNNERS[args.command](raw, cfg, opts)
        manifest.timings_seconds["run"] = time.monotonic() - t0
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    t0 = time.monotonic()
    for name, report in named_reports:
        _write_outputs(name, report, opts, manifest)
    manifest.timings_seconds["write"] = time.monotonic() - t0
    os.makedirs(opts.out_dir, exist_ok=True)
    manifest_path = os.path.join(opts.out_dir, f"{args.command}-manifest.json")
    with open(manifest_path, "w", newline="") as fh:
        fh.write(manifest.to_json() + "\n")

    failed = False
    for name, report in named_reports:
        for v in report.verdicts:
            status = "PASS" if v.passed else "FAIL"
            print(f"[{status}] {name}/{v.name}: observed={v.observed:.6g} "
                  f"(threshold: {v.threshold})")
            failed = failed or not v.passed
    print(f"wrote {manifest_path}")
    return 2 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
