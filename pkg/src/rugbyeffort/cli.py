"""Command line: ``rugbyeffort {fit,summarize,ppc,luck,simulate}``.

Exit codes: 0 success, 1 numeric/inference failure, 2 input/IO failure.
Any flag can also come from ``--config file.json`` (same key names, dashes or
underscores); explicit flags win. ``RUGBYEFFORT_SEED`` sets the default seed.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import format_table, summarize, write_summary
from .features import build_features, write_features
from .ingest import ParseError, parse_matches, parse_prev_season
from .model import VARIANTS, ModelConfig, NonFiniteDensityError
from .ppc import (decompose_variance, flag_outliers, histogram_bins, luck_decomposition,
                  performance_variance_conventions, replicate_scores, season_wins, write_ppc)
from .sampler import DrawsMatrix, SamplerConfig, SamplerError, run_sampler
from .simulate import SimConfig, simulate_season

log = logging.getLogger("rugbyeffort")


class InputError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage, exc, code):
        self.stage, self.exc, self.code = stage, exc, code
        super().__init__(f"{stage}: {exc}")


@contextmanager
def stage(name):
    try:
        yield
    except StageError:
        raise
    except (SamplerError, NonFiniteDensityError, FloatingPointError) as exc:
        raise StageError(name, exc, 1) from exc
    except (ParseError, InputError, OSError, ValueError, KeyError) as exc:
        raise StageError(name, exc, 2) from exc


def _default_seed():
    env = os.environ.get("RUGBYEFFORT_SEED")
    return int(env) if env else 1


def _need_file(path):
    if path is None:
        raise InputError("missing required file argument")
    if not Path(path).is_file():
        raise InputError(f"file not found: {path}")
    return Path(path)


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(args, inputs, outputs, started, manifest_path):
    settings = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())
                if k not in ("func",)}
    blob = json.dumps(settings, sort_keys=True, default=str).encode()
    manifest = {
        "command": args.command,
        "config_hash": hashlib.sha256(blob).hexdigest(),
        "settings": settings,
        "seed": getattr(args, "seed", None),
        "inputs": {str(p): _digest(p) for p in inputs},
        "engine_version": __version__,
        "wall_clock_seconds": round(time.time() - started, 3),
        "outputs": [str(p) for p in outputs],
    }
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path


def _load_features(args):
    data = _need_file(args.data)
    prev = _need_file(args.prev) if args.prev is not None else None
    with stage("ingest"):
        dataset = parse_matches(data)
        table = parse_prev_season(prev) if prev is not None else None
    with stage("features"):
        fs = build_features(dataset, table)
    return dataset, fs, [p for p in (data, prev) if p is not None]


def cmd_fit(args):
    started = time.time()
    if args.prev is None:
        raise StageError("cli", InputError("--prev is required for fit"), 2)
    dataset, fs, inputs = _load_features(args)
    with stage("model"):
        mcfg = ModelConfig(variant=args.model, nu_shape=args.nu_shape, nu_rate=args.nu_rate)
    with stage("sampler"):
        scfg = SamplerConfig(chains=args.chains, iters=args.iters, warmup=args.warmup, seed=args.seed,
                             target_accept=args.target_accept, max_leapfrog_steps=args.max_leapfrog_steps,
                             init_radius=args.init_radius, path_length=args.path_length, workers=args.workers)
        draws = run_sampler(fs, mcfg, scfg, lik_weight=0.0 if args.prior_only else 1.0)
    out = Path(args.out)
    with stage("output"):
        out.parent.mkdir(parents=True, exist_ok=True)
        draws.to_csv(out)
        outputs = [out]
        if args.features_out:
            write_features(fs, args.features_out)
            outputs.append(Path(args.features_out))
        write_manifest(args, inputs, outputs, started, out.with_name(out.name + ".manifest.json"))
    print(f"{draws.nchains} chains x {draws.ndraws} draws, {draws.n_divergent} divergent; wrote {out}")
    return 0


def cmd_summarize(args):
    started = time.time()
    path = _need_file(args.draws)
    with stage("ingest"):
        draws = DrawsMatrix.from_csv(path)
    with stage("diagnostics"):
        rows = summarize(draws, latent=args.latent)
    out = Path(args.out)
    with stage("output"):
        out.parent.mkdir(parents=True, exist_ok=True)
        write_summary(rows, out)
        write_manifest(args, [path], [out], started, out.with_name(out.name + ".manifest.json"))
    print(format_table(rows[:7] if args.latent else rows))
    return 0


def _plot_svg(path, edges, observed, replicated, title):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    centers = 0.5 * (edges[1:] + edges[:-1])
    width = edges[1] - edges[0]
    ax.bar(centers, replicated, width=width, color="0.7", label="replicated")
    ax.step(centers, observed, where="mid", color="tab:blue", label="observed")
    ax.set_title(title)
    ax.legend()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def cmd_ppc(args):
    started = time.time()
    dataset, fs, inputs = _load_features(args)
    draws_path = _need_file(args.draws)
    with stage("ingest"):
        draws = DrawsMatrix.from_csv(draws_path)
    with stage("ppc"):
        reps = replicate_scores(draws, fs, seed=args.seed, n_replications=args.replications)
        flags = flag_outliers(reps, args.alpha)
        edges, obs_counts, rep_counts = histogram_bins(fs.y, reps.replications, args.bins)
    outdir = Path(args.out_dir)
    with stage("output"):
        outdir.mkdir(parents=True, exist_ok=True)
        paths = {
            "ppc": outdir / "ppc.csv",
            "ppc_points": outdir / "ppc_points.csv",
            "hist": outdir / "hist_score_diff.csv",
            "rep_stats": outdir / "rep_stats.csv",
            "obs_pred": outdir / "observed_vs_predicted.csv",
        }
        write_ppc(reps, paths["ppc"], args.alpha)
        write_ppc(reps, paths["ppc_points"], args.alpha, scale=fs.scale)
        with open(paths["hist"], "w", encoding="utf-8") as fh:
            fh.write("bin_lo,bin_hi,bin_lo_points,bin_hi_points,observed,replication_1,replication_mean\n")
            lo, hi = edges[:-1].tolist(), edges[1:].tolist()
            rep_mean = rep_counts.mean(axis=0).tolist()
            for b in range(len(obs_counts)):
                fh.write(f"{lo[b]!r},{hi[b]!r},{lo[b] * fs.scale!r},{hi[b] * fs.scale!r},"
                         f"{int(obs_counts[b])},{int(rep_counts[0, b])},{rep_mean[b]!r}\n")
        with open(paths["rep_stats"], "w", encoding="utf-8") as fh:
            fh.write("replication,mean,sd\n")
            fh.write(f"observed,{float(np.mean(fs.y))!r},{float(np.std(fs.y, ddof=1))!r}\n")
            for i, (m, s) in enumerate(zip(reps.rep_mean, reps.rep_sd), start=1):
                fh.write(f"{i},{float(m)!r},{float(s)!r}\n")
        with open(paths["obs_pred"], "w", encoding="utf-8") as fh:
            fh.write("game,round,home_team,away_team,observed,predicted,observed_points,predicted_points\n")
            for g, m in enumerate(dataset.matches):
                fh.write(f"{g + 1},{m.round},{m.home_team},{m.away_team},{float(fs.y[g])!r},"
                         f"{float(reps.pred_mean[g])!r},{float(fs.raw_diff[g])!r},"
                         f"{float(reps.pred_mean[g] * fs.scale)!r}\n")
        if args.svg:
            paths["svg"] = outdir / "hist_score_diff.svg"
            _plot_svg(paths["svg"], edges, obs_counts, rep_counts[0], "Score difference: observed vs replicated")
        write_manifest(args, inputs + [draws_path], list(paths.values()), started, outdir / "ppc.manifest.json")
    for o in flags:
        m = dataset.matches[o.game]
        print(f"flagged game {o.game + 1}: round {m.round} {m.home_team} {m.home_score}-{m.away_score} "
              f"{m.away_team} p={o.pvalue:.4f} ({o.side})")
    print(f"{len(flags)} of {fs.ngames} games flagged at alpha={args.alpha}; wrote {outdir}")
    return 0


def cmd_luck(args):
    started = time.time()
    inputs = []
    extra = {}
    direct = args.var_performance is not None or args.var_effort is not None
    with stage("ppc"):
        if direct:
            if args.var_performance is None or args.var_effort is None:
                raise InputError("--var-performance and --var-effort go together")
            dec = decompose_variance(args.var_performance, args.var_effort, args.g, args.p)
        else:
            data = _need_file(args.data)
            inputs.append(data)
            dataset = parse_matches(data)
            fs = build_features(dataset, None)
            wins, played = season_wins(dataset)
            efforts = np.concatenate([fs.eff_home, fs.eff_away])
            dec = luck_decomposition(wins, efforts, args.g, args.p)
            extra = {"performance_conventions": performance_variance_conventions(wins, args.g),
                     "effort_variance_ddof0": float(np.var(efforts)),
                     "games_played": played.tolist()}
    text = dec.to_json(extra)
    if args.out:
        out = Path(args.out)
        with stage("output"):
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(text, encoding="utf-8")
            write_manifest(args, inputs, [out], started, out.with_name(out.name + ".manifest.json"))
    sys.stdout.write(text)
    return 0


def cmd_simulate(args):
    started = time.time()
    with stage("simulate"):
        cfg = SimConfig(nteams=args.teams, nrounds=args.rounds, b_home=args.b_home, b_prev=args.b_prev,
                        b_effort=args.b_effort, b_atten=args.b_atten, b_day=args.b_day, nu=args.nu,
                        sigma_y=args.sigma_y, sigma_a=args.sigma_a, point_scale=args.point_scale, seed=args.seed)
        season = simulate_season(cfg)
    with stage("output"):
        paths = season.write(args.out_dir)
        write_manifest(args, [], list(paths.values()), started, Path(args.out_dir) / "simulate.manifest.json")
    print(f"simulated {season.features.ngames} games; wrote {args.out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rugbyeffort", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON file with flag values")
        sp.add_argument("--seed", type=int, default=_default_seed())

    fit = sub.add_parser("fit", help="sample the posterior")
    common(fit)
    fit.add_argument("--data", required=True)
    fit.add_argument("--prev")
    fit.add_argument("--model", choices=VARIANTS, default="II")
    fit.add_argument("--chains", type=int, default=4)
    fit.add_argument("--iters", type=int, default=2500)
    fit.add_argument("--warmup", type=int, default=1500)
    fit.add_argument("--workers", type=int, default=1, help="chains run concurrently")
    fit.add_argument("--target-accept", type=float, default=0.8)
    fit.add_argument("--max-leapfrog-steps", type=int, default=1024)
    fit.add_argument("--init-radius", type=float, default=2.0)
    fit.add_argument("--path-length", type=float, default=4.0)
    fit.add_argument("--nu-shape", type=float, default=9.0)
    fit.add_argument("--nu-rate", type=float, default=0.5)
    fit.add_argument("--prior-only", action="store_true")
    fit.add_argument("--features-out")
    fit.add_argument("--out", required=True)
    fit.set_defaults(func=cmd_fit)

    sm = sub.add_parser("summarize", help="posterior summary table")
    common(sm)
    sm.add_argument("--draws", required=True)
    sm.add_argument("--latent", action="store_true")
    sm.add_argument("--out", required=True)
    sm.set_defaults(func=cmd_summarize)

    pp = sub.add_parser("ppc", help="posterior predictive checks")
    common(pp)
    pp.add_argument("--data", required=True)
    pp.add_argument("--prev")
    pp.add_argument("--draws", required=True)
    pp.add_argument("--alpha", type=float, default=0.005)
    pp.add_argument("--replications", type=int)
    pp.add_argument("--bins", type=int, default=20)
    pp.add_argument("--svg", action="store_true")
    pp.add_argument("--out-dir", required=True)
    pp.set_defaults(func=cmd_ppc)

    lk = sub.add_parser("luck", help="luck/effort/ability variance decomposition")
    common(lk)
    lk.add_argument("--data")
    lk.add_argument("--var-performance", type=float)
    lk.add_argument("--var-effort", type=float)
    lk.add_argument("--g", type=int, default=22)
    lk.add_argument("--p", type=float, default=0.5)
    lk.add_argument("--out")
    lk.set_defaults(func=cmd_luck)

    sim = sub.add_parser("simulate", help="synthetic season")
    common(sim)
    sim.add_argument("--teams", type=int, default=12)
    sim.add_argument("--rounds", type=int)
    sim.add_argument("--b-home", type=float, default=0.35)
    sim.add_argument("--b-prev", type=float, default=1.7)
    sim.add_argument("--b-effort", type=float, default=3.0)
    sim.add_argument("--b-atten", type=float, default=0.0)
    sim.add_argument("--b-day", type=float, default=0.0)
    sim.add_argument("--nu", type=float, default=12.0)
    sim.add_argument("--sigma-y", type=float, default=1.6)
    sim.add_argument("--sigma-a", type=float, default=0.1)
    sim.add_argument("--point-scale", type=float, default=15.0)
    sim.add_argument("--out-dir", required=True)
    sim.set_defaults(func=cmd_simulate)
    return p


def parse_args(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    subparsers = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in subparsers), None)
    if known.config and command:
        try:
            overrides = json.loads(Path(known.config).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            parser.exit(2, f"rugbyeffort cli: cannot read config {known.config}: {exc}\n")
        if not isinstance(overrides, dict):
            parser.exit(2, f"rugbyeffort cli: config {known.config} must hold a JSON object\n")
        sub = subparsers[command]
        overrides = {k.replace("-", "_"): v for k, v in overrides.items()}
        known_dests = {a.dest for a in sub._actions}
        unknown = set(overrides) - known_dests
        if unknown:
            parser.exit(2, f"rugbyeffort cli: unknown config keys {sorted(unknown)}\n")
        sub.set_defaults(**overrides)
        for a in sub._actions:
            if a.dest in overrides:
                a.required = False
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except StageError as err:
        print(f"rugbyeffort {err.stage}: {err.exc}", file=sys.stderr)
        return err.code
    except InputError as err:
        print(f"rugbyeffort cli: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
