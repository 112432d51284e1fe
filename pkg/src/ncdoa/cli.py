"""Command line interface: ``ncdoa <command> [config] [options]``."""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .bench import records_to_csv, run_monte_carlo, scenario_bound, trial_seed
from .config import ConfigError, load_config, load_preset, preset_names
from .covio import load_covariances, save_covariances
from .crb import NotIdentifiableError
from .estimators import Grid, estimate
from .identifiability import corollary_bound, lag_union, numeric_kruskal_rank
from .signals import NoiseModel, generate_snapshots, sample_covariances

log = logging.getLogger("ncdoa")


def _config(args):
    if args.preset and args.config:
        raise ConfigError("give either a config file or --preset, not both")
    if args.preset:
        cfg = load_preset(args.preset)
    elif args.config:
        cfg = load_config(args.config)
    else:
        raise ConfigError("a config file or --preset is required")
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "trials", None) is not None:
        changes["trials"] = args.trials
    return cfg.replace(**changes) if changes else cfg


def _emit(text: str, out):
    if out:
        with open(out, "w", encoding="ascii", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_identifiability(args):
    cfg = _config(args)
    array = cfg.array()
    rho = numeric_kruskal_rank(array, trials=args.rank_trials, tol=args.tol,
                               seed=cfg.seed if args.seed is None else args.seed)
    text = (f"card_B = {len(lag_union(array))}\n"
            f"kruskal_rank_estimate = {rho}\n"
            f"max_identifiable = {rho // 2}\n"
            f"corollary_bound = {corollary_bound(array)}\n")
    _emit(text, args.out)


def cmd_crb(args):
    cfg = _config(args)
    if cfg.sweep == "sources":
        raise ConfigError("the crb command needs a fixed source set (snr or snapshots sweep)")
    lines = []
    L = len(cfg.doas_deg)
    head = [cfg.sweep if cfg.sweep == "snapshots" else "snr_db"]
    head += [f"crb_deg_{l + 1}" for l in range(L)] + ["crb_deg"]
    lines.append(",".join(head))
    for i, value in enumerate(cfg.sweep_values()):
        b = scenario_bound(cfg, i)
        if b is None:
            cells = ["nan"] * (L + 1)
        else:
            cells = [f"{x:.10g}" for x in b.rmse_bound_deg] + [f"{b.summary_deg:.10g}"]
        lines.append(",".join([f"{value:g}"] + cells))
    _emit("\n".join(lines) + "\n", args.out)


def cmd_estimate(args):
    source = args.config
    if source and not source.endswith(".toml") and not args.preset:
        covset, array = load_covariances(source)
        if array is None:
            raise ConfigError("covariance file has no sensor positions; "
                              "add a positions line per subarray")
        if args.sources is None:
            raise ConfigError("--sources is required with a covariance file")
        L, grid, estimators = args.sources, Grid.uniform(), ["spice", "mle"]
    else:
        cfg = _config(args)
        array = cfg.array()
        pt = cfg.point(0)
        from .bench import _model
        model = _model(cfg, pt["doas_deg"])
        noise = NoiseModel.from_snr(pt["snr_db"], cfg.power)
        covset = sample_covariances(generate_snapshots(
            array, model, noise, pt["snapshots"], trial_seed(cfg.seed, 0, 0),
            cfg.shared_sources))
        if args.save_covariances:
            save_covariances(args.save_covariances, covset, array)
        L = args.sources or len(pt["doas_deg"])
        grid = Grid.uniform(cfg.grid_step_deg, tuple(cfg.fov_deg))
        estimators = cfg.estimators
    lines = []
    mle_kinds = [e for e in estimators if e != "spice"] or [None]
    res = None
    for kind in mle_kinds:
        res = estimate(array, covset, grid, L, mle=kind)
        if kind is not None:
            m = res.mle
            lines.append(f"{kind}: doas_deg = {_fmt_list(m.doas_deg)}; "
                         f"powers = {_fmt_list(m.powers)}; noise = {m.noise_variance:.6g}; "
                         f"converged = {str(m.converged).lower()}")
    sp = res.spice
    lines.insert(0, f"spice: doas_deg = {_fmt_list(res.spice_doas_deg)}; "
                    f"noise = {sp.noise_variance:.6g}; converged = {str(sp.converged).lower()}")
    _emit("\n".join(lines) + "\n", args.out)


def _fmt_list(xs):
    return "[" + ", ".join(f"{x:.6g}" for x in np.atleast_1d(xs)) + "]"


def cmd_montecarlo(args):
    cfg = _config(args)

    def progress(done, total):
        if args.verbose and (done % 10 == 0 or done == total):
            print(f"{done}/{total} trials", file=sys.stderr)

    records = run_monte_carlo(cfg, threads=args.threads, progress=progress)
    _emit(records_to_csv(records), args.out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ncdoa", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, with_trials=True):
        sp.add_argument("config", nargs="?", help="scenario file (.toml)")
        sp.add_argument("--preset", choices=preset_names())
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="write output here instead of stdout")
        sp.add_argument("--threads", type=int, default=1)
        if with_trials:
            sp.add_argument("--trials", type=int)
        return sp

    s = common(sub.add_parser("identifiability", help="lag count and rank estimate"), False)
    s.add_argument("--rank-trials", type=int, default=200)
    s.add_argument("--tol", type=float, default=1e-8)
    s.set_defaults(func=cmd_identifiability)

    s = common(sub.add_parser("crb", help="bound for each sweep point (CSV)"), False)
    s.set_defaults(func=cmd_crb)

    s = common(sub.add_parser("estimate", help="one estimate from a scenario or covariance file"))
    s.add_argument("--sources", type=int, help="number of sources")
    s.add_argument("--save-covariances", help="export the simulated covariances")
    s.set_defaults(func=cmd_estimate)

    s = common(sub.add_parser("montecarlo", help="Monte Carlo sweep (CSV)"))
    s.set_defaults(func=cmd_montecarlo)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"ncdoa: config error: {exc}", file=sys.stderr)
        return 2
    except NotIdentifiableError as exc:
        print(f"ncdoa: not identifiable: {exc}", file=sys.stderr)
        return 3
    except (np.linalg.LinAlgError, ValueError, OSError) as exc:
        print(f"ncdoa: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
