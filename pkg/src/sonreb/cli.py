"""Command-line entry point: ``sonreb <command> ...``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import generator_spec_from_kv, model_configs, read_kv
from .data import BASE_COLUMNS, INPUTS, OUTPUT, generate_synthetic, load_csv, r2_table, split_dataset, summarize, write_csv
from .errors import PipelineError, SonrebError
from .hcvcm import DEFAULT_LIBRARY, run_generations, write_report
from .pipeline import FEATURE_MODES, MODELS, RunConfig, compare, run

UNITS = {"upv": "km/s", "rn": "-", "ccs": "kg/cm2"}


def _spec(path):
    return generator_spec_from_kv(read_kv(path) if path else {})


def _dataset(args):
    if getattr(args, "data", None):
        return load_csv(args.data)
    return generate_synthetic(_spec(args.synthetic))


def cmd_generate(args):
    d = generate_synthetic(_spec(args.spec))
    write_csv(d, args.out)
    print(f"wrote {len(d)} rows to {args.out}")


def cmd_stats(args):
    d = _dataset(args)
    out = sys.stdout
    out.write("variable,unit,min,max,average,sd,median\n")
    for c in BASE_COLUMNS:
        s = summarize(d, c)
        out.write(f"{c},{UNITS[c]},{s.min:.4f},{s.max:.4f},{s.average:.4f},{s.sd:.4f},{s.median:.4f}\n")
    out.write("\npair,r2\n")
    for (a, b), v in r2_table(d).items():
        out.write(f"{a}-{b},{v:.4f}\n")


def cmd_hcvcm_report(args):
    d = split_dataset(_dataset(args), args.train_fraction, args.seed)
    library = tuple(args.library.split(",")) if args.library else DEFAULT_LIBRARY
    fs = run_generations(d, INPUTS, library, args.generations, OUTPUT)
    write_report(fs, args.out)
    print("selected: " + (", ".join(fs.names) or "(none)"))


def cmd_fit(args):
    kv = read_kv(args.config) if args.config else {}
    gep_cfg, anfis_cfg = model_configs(kv)
    cfg = RunConfig(
        model=args.model,
        data_path=args.data,
        synthetic=None if args.data else _spec(args.synthetic),
        hcvcm=args.hcvcm,
        hcvcm_generations=args.hcvcm_generations,
        feature_mode=args.feature_mode,
        train_fraction=args.train_fraction,
        seed=args.seed,
        gep=gep_cfg,
        anfis=anfis_cfg,
        out_dir=args.out,
    )
    res = run(cfg)
    print(f"{res.label} inputs: {', '.join(res.inputs)}")
    for split, rep in (("train", res.train_report), ("test", res.test_report)):
        stats = " ".join(f"{k}={v:.4f}" for k, v in rep.as_dict().items())
        print(f"{split}: {stats}")


def cmd_compare(args):
    from .config import run_configs_from_kv

    cfgs = run_configs_from_kv(read_kv(args.config), Path(args.config).parent)
    table = compare(cfgs, args.out)
    sys.stdout.write(table.to_csv())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sonreb", description="Concrete strength from UPV and rebound number.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def data_source(sp, required=True):
        g = sp.add_mutually_exclusive_group(required=required)
        g.add_argument("--data", help="CSV with upv, rn, ccs columns")
        g.add_argument("--synthetic", metavar="SPEC", help="generator spec file (key=value)")

    g = sub.add_parser("generate-data", help="write a calibrated synthetic dataset")
    g.add_argument("--spec", help="generator spec file; defaults to the reference statistics")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("stats", help="summary statistics and pairwise r2")
    data_source(s)
    s.set_defaults(func=cmd_stats)

    h = sub.add_parser("hcvcm-report", help="candidate features with their gate results")
    data_source(h)
    h.add_argument("--seed", type=int, default=0)
    h.add_argument("--train-fraction", type=float, default=0.7)
    h.add_argument("--generations", type=int, default=1)
    h.add_argument("--library", help="comma-separated transform kinds")
    h.add_argument("--out", required=True)
    h.set_defaults(func=cmd_hcvcm_report)

    f = sub.add_parser("fit", help="fit one model and write its artifacts")
    data_source(f)
    f.add_argument("--model", choices=MODELS, required=True)
    f.add_argument("--hcvcm", action="store_true")
    f.add_argument("--hcvcm-generations", type=int, default=1)
    f.add_argument("--feature-mode", choices=FEATURE_MODES, default="best")
    f.add_argument("--train-fraction", type=float, default=0.7)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--config", help="key=value file with gep.* / anfis.* settings")
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_fit)

    c = sub.add_parser("compare", help="run several models on one split")
    c.add_argument("--config", required=True)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SonrebError, OSError) as exc:
        print(f"error: [{args.command}] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
