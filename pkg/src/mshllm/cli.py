"""Command-line entry point: synth, train, eval, transfer, ablate."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .data import DataError, SynthSpec, generate_synthetic, window_arrays, write_csv
from .evaluation import MetricError, pretty_table
from .model import MSHLLM
from .protocols import ABLATIONS, prepare, run_ablate, run_eval, run_grid, run_train, run_transfer
from .training import NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("mshllm")


def _run_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _dump_prompts(cfg: RunConfig) -> None:
    prep = prepare(cfg)
    model = MSHLLM(prep.model_cfg)
    x, _, _ = window_arrays(prep.train, model.cfg.input_length, model.cfg.horizon, stride=prep.train.T)
    if model.cfg.use_data_prompt:
        print("[data-correlated prompt]")
        print(model.data_prompt(x[0]).rendered)
    if model.cfg.use_capability_prompt:
        from .prompts import build_capability_prompt

        print("[capability prompt]")
        print(build_capability_prompt(model.cfg.task).rendered)


def _report(outcome) -> None:
    print(pretty_table(outcome.records))
    for name, path in sorted(outcome.files.items()):
        log.info("wrote %s: %s", name, path)


def cmd_synth(args) -> int:
    if args.config:
        spec = SynthSpec.from_dict(json.loads(Path(args.config).read_text(encoding="utf-8")))
    else:
        spec = SynthSpec()
    changes = {}
    if args.length is not None:
        changes["length"] = args.length
    if args.channels is not None:
        changes["channels"] = args.channels
    if args.periods:
        amps = args.amplitudes or [1.0] * len(args.periods)
        if len(amps) != len(args.periods):
            raise ConfigError("--amplitudes needs one value per period")
        changes["components"] = tuple((float(p), float(a)) for p, a in zip(args.periods, amps))
    if args.noise is not None:
        changes["noise_std"] = args.noise
    if args.trend is not None:
        changes["trend_slope"] = args.trend
    if args.seed is not None:
        changes["seed"] = args.seed
    spec = replace(spec, **changes)
    ds = generate_synthetic(spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(ds, out)
    sidecar = out.with_suffix(out.suffix + ".json")
    sidecar.write_text(json.dumps(spec.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {out} ({ds.T} rows x {ds.D} channels) and {sidecar}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _run_config(args)
    if args.dump_prompts:
        _dump_prompts(cfg)
        return EXIT_OK
    if args.grid:
        best, rows = run_grid(cfg, args.grid, args.out)
        print(f"evaluated {len(rows)} grid points; best validation MSE {min(r['val_mse'] for r in rows):.6g}")
        print(f"best config hash {best.config_hash()}")
        return EXIT_OK
    outcome = run_train(cfg, args.out, export_embeddings=args.export_embeddings, dump_attention=args.dump_attention)
    _report(outcome)
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _run_config(args)
    if args.dump_prompts:
        _dump_prompts(cfg)
        return EXIT_OK
    _report(run_eval(cfg, args.checkpoint, args.out))
    return EXIT_OK


def cmd_transfer(args) -> int:
    cfg_a = _run_config(args)
    cfg_b = load_config(args.target)
    _report(run_transfer(cfg_a, cfg_b, args.out, args.checkpoint, args.fallback))
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _run_config(args)
    _report(run_ablate(cfg, args.variant, args.out))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mshllm", description="Multi-scale hypergraph forecaster with a frozen toy backbone.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=False):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="override every seed in the configuration")
        p.add_argument("--out", required=out_required, help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic multi-scale CSV")
    p.add_argument("--config", help="JSON synthetic spec")
    p.add_argument("--out", required=True, help="CSV path to write")
    p.add_argument("--seed", type=int)
    p.add_argument("--length", type=int)
    p.add_argument("--channels", type=int)
    p.add_argument("--periods", type=float, nargs="+")
    p.add_argument("--amplitudes", type=float, nargs="+")
    p.add_argument("--noise", type=float)
    p.add_argument("--trend", type=float)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train, select on validation and report test metrics")
    common(p)
    p.add_argument("--grid", type=int, metavar="BUDGET", help="search the hyperparameter grid with this many configs")
    p.add_argument("--dump-prompts", action="store_true", help="print rendered prompts for one window and exit")
    p.add_argument("--export-embeddings", action="store_true", help="write hyperedge embeddings per scale per epoch")
    p.add_argument("--dump-attention", action="store_true", help="write per-scale alignment weights for one test window")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dump-prompts", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("transfer", help="zero-shot: train on --config, evaluate on --target")
    common(p)
    p.add_argument("--target", required=True, help="JSON run configuration of the target dataset")
    p.add_argument("--checkpoint", help="use this source checkpoint instead of training")
    p.add_argument("--fallback", help="source frequency to use when the target frequency has no model")
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("ablate", help="train one ablation variant")
    common(p)
    p.add_argument("--variant", required=True, choices=ABLATIONS)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    np.seterr(all="ignore")
    try:
        return args.func(args)
    except (NumericalError, MetricError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
