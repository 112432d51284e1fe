"""Run bundled Monte Carlo presets and write one CSV per preset.

    python scripts/run_figures.py fig4 fig6 --trials 100 --threads 4 --outdir results
"""
import argparse
import time
from pathlib import Path

from ncdoa.bench import records_to_csv, run_monte_carlo
from ncdoa.config import load_preset, preset_names

MONTE_CARLO = ["fig4", "fig5", "fig6", "fig7_e00", "fig7_e03", "fig7_e06", "fig7_e10"]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("presets", nargs="*", default=MONTE_CARLO, choices=preset_names())
    p.add_argument("--trials", type=int)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--outdir", default="results")
    args = p.parse_args()
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.presets:
        cfg = load_preset(name)
        if args.trials:
            cfg = cfg.replace(trials=args.trials)
        t0 = time.perf_counter()
        records = run_monte_carlo(cfg, threads=args.threads)
        (out / f"{name}.csv").write_text(records_to_csv(records))
        print(f"{name}: {len(records)} rows, {time.perf_counter() - t0:.0f} s")


if __name__ == "__main__":
    main()
