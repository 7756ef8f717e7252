"""Command-line entry point: ``herosgan generate|train|enhance|evaluate|allan``.

Every command takes ``--config run.json``; flags override values from the
file.  Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config, override
from .dataset import generate_dataset, load_pairs
from .metrics import allan_analysis, csre, zvre
from .nets import load_checkpoint
from .ot import NumericError
from .signal import ParseError, SignalError, clip, load_csv, save_csv
from .training import DataError, NumericFailure, enhance, train

log = logging.getLogger("herosgan")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class CliError(Exception):
    def __init__(self, code: int, msg: str):
        super().__init__(msg)
        self.code = code


def _provenance(cfg: RunConfig) -> dict:
    return {"tool": "herosgan", "version": __version__, "config": cfg.to_dict()}


def _write_json(path, payload: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def cmd_generate(args) -> int:
    cfg = override(load_config(args.config), "generate", n_episodes=args.n_episodes, seed=args.seed)
    manifest = generate_dataset(args.out, cfg.generate, cfg.motion, cfg.noise, _provenance(cfg))
    print(f"wrote {len(manifest['episodes'])} episodes to {args.out}")
    return EXIT_OK


def _train_overrides(args) -> dict:
    ots = args.ots
    if args.l1_substitute and ots is None:
        ots = False
    return dict(
        low_dir=args.low_dir,
        high_dir=args.high_dir,
        checkpoint=args.checkpoint,
        report=args.report,
        steps=args.steps,
        seed=args.seed,
        batch=args.batch,
        window=args.window,
        ots_on=ots,
        mle_on=args.mle,
        l1_substitute_on=args.l1_substitute,
        lambda_adv=args.lambda_adv,
        lambda_cyc=args.lambda_cyc,
        lambda_id=args.lambda_id,
        lambda_ots=args.lambda_ots,
        lambda_mle=args.lambda_mle,
    )


def cmd_train(args) -> int:
    cfg = override(load_config(args.config), "train", **_train_overrides(args))
    tc = cfg.train
    if tc.report is None:
        tc.report = str(Path(tc.checkpoint).with_suffix(".steps.jsonl"))
    _, reports = train(tc)
    summary = _provenance(cfg)
    summary["steps"] = tc.steps
    summary["final"] = reports[-1].losses if reports else None
    _write_json(Path(tc.checkpoint).with_suffix(".summary.json"), summary)
    print(f"checkpoint {tc.checkpoint} after {tc.steps} steps; step reports in {tc.report}")
    return EXIT_OK


def _load_model(path):
    path = Path(path)
    if not path.is_file():
        raise CliError(EXIT_DATA, f"checkpoint not found: {path}")
    params, header = load_checkpoint(path)
    return params, float(header.get("extra", {}).get("scale", 1.0))


def cmd_enhance(args) -> int:
    model = _load_model(args.checkpoint)
    src, dst = Path(args.input), Path(args.output)
    if src.is_dir():
        dst.mkdir(parents=True, exist_ok=True)
        files = sorted(src.glob("*.csv"))
        if not files:
            raise CliError(EXIT_DATA, f"no .csv files in {src}")
        for f in files:
            save_csv(enhance(model, load_csv(f)), dst / f.name)
        print(f"enhanced {len(files)} signals into {dst}")
    else:
        if not src.is_file():
            raise CliError(EXIT_DATA, f"input not found: {src}")
        save_csv(enhance(model, load_csv(src)), dst)
        print(f"enhanced {src} -> {dst}")
    return EXIT_OK


def _evaluate_pairs(args, cfg: RunConfig) -> dict:
    pairs = load_pairs(args.ref, args.recon)
    inputs = None
    if args.input:
        inputs = {n: r for n, _, r in load_pairs(args.ref, args.input)}
    rows = []
    for name, ref, rec in pairs:
        row = {
            "file": name,
            "csre": csre(ref, rec),
            "zvre": zvre(rec).tolist(),
            "zvre_ref": zvre(ref).tolist(),
            "max_abs": float(np.abs(rec.samples).max()),
            "ref_max_abs": float(np.abs(ref.samples).max()),
        }
        if inputs is not None:
            row["input_csre"] = csre(ref, inputs[name])
            row["input_zvre"] = zvre(inputs[name]).tolist()
        rows.append(row)
    summary = {
        "csre_mean": float(np.mean([r["csre"] for r in rows])),
        "zvre_mean": float(np.mean([np.mean(r["zvre"]) for r in rows])),
    }
    if inputs is not None:
        summary["input_csre_mean"] = float(np.mean([r["input_csre"] for r in rows]))
        summary["input_zvre_mean"] = float(np.mean([np.mean(r["input_zvre"]) for r in rows]))
    out = {"pairs": rows, "summary": summary}

    if args.checkpoint:
        # clip the references at each level, reconstruct, and score against the originals
        model = _load_model(args.checkpoint)
        clipped = {}
        for tau in cfg.metrics.clip_levels:
            errs = [csre(ref, enhance(model, clip(ref, tau))) for _, ref, _ in pairs]
            raw = [csre(ref, clip(ref, tau)) for _, ref, _ in pairs]
            clipped[f"{tau:g}"] = {"csre": float(np.mean(errs)), "clipped_csre": float(np.mean(raw))}
        out["clip_csre"] = clipped

    if cfg.metrics.figures:
        from .plotting import plot_episode, plot_metric_bars

        fig_dir = Path(args.figures) if args.figures else Path(args.out).parent / "figures"
        names = [r["file"] for r in rows]
        plot_metric_bars(
            names,
            [r["input_csre"] for r in rows] if inputs is not None else None,
            [r["csre"] for r in rows],
            fig_dir / "csre.png",
            "CSRE [g]",
        )
        plot_metric_bars(
            names,
            [np.mean(r["input_zvre"]) for r in rows] if inputs is not None else None,
            [np.mean(r["zvre"]) for r in rows],
            fig_dir / "zvre.png",
            "mean ZVRE [m/s]",
        )
        for name, ref, rec in pairs[:3]:
            inp = inputs[name].samples if inputs is not None else None
            plot_episode(ref.dt, ref.samples, inp, rec.samples, fig_dir / f"{Path(name).stem}.png", title=name)
        out["figures"] = str(fig_dir)
    return out


def _allan_payload(path, cfg: RunConfig, axis: int | None):
    s = load_csv(path)
    ax = cfg.metrics.allan_axis if axis is None else axis
    if not 0 <= ax < s.axes:
        raise CliError(EXIT_CONFIG, f"axis {ax} out of range for a {s.axes}-axis signal")
    return s, ax, allan_analysis(s, ax, cfg.metrics.allan_points)


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    if args.no_figures:
        cfg.metrics.figures = False
    payload = _provenance(cfg)
    if args.signal:
        if not args.allan:
            raise CliError(EXIT_CONFIG, "--signal requires --allan")
        s, ax, rep = _allan_payload(args.signal, cfg, args.axis)
        payload["allan"] = rep.to_dict() | {"axis": ax, "signal": str(args.signal)}
        payload["zvre"] = zvre(s).tolist()
    elif args.ref and args.recon:
        payload.update(_evaluate_pairs(args, cfg))
    else:
        raise CliError(EXIT_CONFIG, "evaluate needs --ref and --recon, or --signal with --allan")
    _write_json(args.out, payload)
    summary = payload.get("summary")
    if summary:
        print(",".join(f"{k}={v:.6g}" for k, v in sorted(summary.items())))
    print(f"report written to {args.out}")
    return EXIT_OK


def cmd_allan(args) -> int:
    cfg = load_config(args.config)
    s, ax, rep = _allan_payload(args.signal, cfg, args.axis)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = _provenance(cfg) | {"allan": rep.to_dict() | {"axis": ax, "signal": str(args.signal)}}
    _write_json(out / "allan.json", payload)
    (out / "adev.csv").write_text(rep.curve_csv())
    if cfg.metrics.figures and not args.no_figures:
        from .plotting import plot_allan

        plot_allan(rep, out / "allan.png", title=Path(args.signal).name)
    print(f"qn={rep.qn:.6g},vrw={rep.vrw:.6g},bi={rep.bi:.6g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="herosgan", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"herosgan {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic high/low dataset")
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.add_argument("--n-episodes", type=int)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train the enhancement model")
    t.add_argument("--config")
    t.add_argument("--low-dir")
    t.add_argument("--high-dir")
    t.add_argument("--checkpoint")
    t.add_argument("--report")
    t.add_argument("--steps", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--batch", type=int)
    t.add_argument("--window", type=int)
    t.add_argument("--ots", action=argparse.BooleanOptionalAction, default=None)
    t.add_argument("--mle", action=argparse.BooleanOptionalAction, default=None)
    t.add_argument("--l1-substitute", action=argparse.BooleanOptionalAction, default=None)
    for name in ("adv", "cyc", "id", "ots", "mle"):
        t.add_argument(f"--lambda-{name}", type=float)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("enhance", help="enhance a signal file (or a directory of them)")
    e.add_argument("checkpoint")
    e.add_argument("input")
    e.add_argument("output")
    e.set_defaults(func=cmd_enhance)

    v = sub.add_parser("evaluate", help="CSRE/ZVRE over paired directories, or Allan analysis")
    v.add_argument("--config")
    v.add_argument("--ref")
    v.add_argument("--recon")
    v.add_argument("--input", help="degraded inputs paired with --ref, for before/after metrics")
    v.add_argument("--checkpoint", help="also score clip-and-reconstruct CSRE at metrics.clip_levels")
    v.add_argument("--signal")
    v.add_argument("--allan", action="store_true")
    v.add_argument("--axis", type=int)
    v.add_argument("--out", default="report.json")
    v.add_argument("--figures")
    v.add_argument("--no-figures", action="store_true")
    v.set_defaults(func=cmd_evaluate)

    a = sub.add_parser("allan", help="Allan deviation curve and noise coefficients")
    a.add_argument("--config")
    a.add_argument("--signal", required=True)
    a.add_argument("--axis", type=int)
    a.add_argument("--out", required=True)
    a.add_argument("--no-figures", action="store_true")
    a.set_defaults(func=cmd_allan)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericFailure, NumericError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ParseError, SignalError, FileNotFoundError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
