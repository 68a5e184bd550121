"""``graphon-ignr``: dataset generation, training, evaluation and reporting.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import evaluate, graphon, nn, train
from . import io as fio
from .errors import CheckpointError, InputDomainError, NumericalError

log = logging.getLogger("ignr")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4

DEFAULT_FAMILY_COUNT = {"s1": 600, "s2": 100}


class UsageError(Exception):
    pass


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _parse_spec(text):
    try:
        return fio.spec_from_text(text)
    except (InputDomainError, ValueError) as exc:
        raise UsageError(f"bad --spec {text!r}: {exc}") from None


def _suffixed(path: Path, tag: str) -> Path:
    return path.with_name(f"{path.stem}-{tag}{path.suffix}")


# ---------------------------------------------------------------------------
# gen


def make_dataset(spec, sizes=None, count=None, seed=0):
    if isinstance(spec, str):
        return graphon.make_dataset_family(spec, count or DEFAULT_FAMILY_COUNT[spec], seed)
    return graphon.make_dataset_single(spec, sizes or graphon.SINGLE_GRAPHON_SIZES, seed)


def cmd_gen(args):
    spec = _parse_spec(args.spec)
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    if args.count is not None and args.count < 1:
        raise UsageError("--count must be positive")
    if isinstance(spec, str) and args.sizes:
        raise UsageError("--sizes applies to single-graphon specs only")
    out = Path(args.out)
    if isinstance(spec, str):
        per_trial = args.count or DEFAULT_FAMILY_COUNT[spec]
    else:
        per_trial = len(args.sizes or graphon.SINGLE_GRAPHON_SIZES)
    for k in range(args.trials):
        # trials use disjoint per-graph seeds
        trial_seed = args.seed + k * per_trial
        ds = make_dataset(spec, args.sizes, args.count, trial_seed)
        path = out if args.trials == 1 else _suffixed(out, f"trial{k}")
        fio.save_dataset(path, ds)
        sizes = [g.n for g in ds.graphs]
        dens = np.mean([g.density() for g in ds.graphs])
        print(f"{path}: {len(ds)} graphs, sizes {min(sizes)}..{max(sizes)}, "
              f"mean density {dens:.4f}, seed {trial_seed}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train


def build_config(objective, config_path=None, overrides=None) -> train.TrainConfig:
    values = fio.load_config(config_path) if config_path else {}
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    values["objective"] = objective or values.get("objective", "ignr")
    if values["objective"] == "ignr" and "latent_dim" in (overrides or {}) \
            and overrides["latent_dim"] is not None:
        raise UsageError("--latent-dim does not apply to the ignr objective")
    ld = values.get("latent_dim")
    if ld is not None and values["objective"] != "ignr" and ld < 1:
        raise UsageError(f"latent dimension must be at least 1, got {ld}")
    try:
        return train.TrainConfig.from_dict(values)
    except InputDomainError as exc:
        raise UsageError(str(exc)) from None


def run_training(ds, cfg, out, history=None):
    ck = train.fit(ds, cfg, callback=lambda e, l: log.info("epoch %d mean GW2 %.6g", e, l))
    out = Path(out)
    fio.save_checkpoint(out, ck)
    history = Path(history) if history else out.with_name("loss_history.csv")
    fio.save_loss_history(history, ck.loss_history)
    return ck, history


def cmd_train(args):
    overrides = {"solver": args.solver, "epochs": args.epochs, "seed": args.seed, "lr": args.lr,
                 "latent_dim": args.latent_dim, "recon_size_policy": args.recon_size}
    cfg = build_config(args.objective, args.config, overrides)
    ds = fio.load_dataset(args.data)
    ck, hist = run_training(ds, cfg, args.out, args.history)
    final = ck.loss_history[-1] if ck.loss_history else float("nan")
    print(f"trained {cfg.objective} on {len(ds)} graphs for {cfg.epochs} epochs; "
          f"final mean loss {final:.6g}")
    print(f"wrote {args.out} and {hist}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


REPORT_HEADER = ["trial", "graphon_index", "graph", "alpha", "error", "mse_sorted"]


def _metrics(text):
    ms = [m.strip() for m in text.split(",") if m.strip()]
    bad = set(ms) - {"gw", "msesorted"}
    if bad or "gw" not in ms:
        raise UsageError("--metric must list gw and optionally msesorted")
    return ms


def evaluate_checkpoint(ck, spec=None, test_ds=None, r=evaluate.DEFAULT_EVAL_RESOLUTION,
                        solver="cg", with_mse=False, jobs=1):
    """``(report, rows)`` for one trial; rows follow :data:`REPORT_HEADER` minus ``trial``."""
    if test_ds is not None:
        rep = evaluate.evaluate_family(ck, test_ds, r=r, solver=solver, jobs=jobs)
        fam = test_ds.provenance.get("family")
        rows = [(fam, i, a, e, None) for i, (a, e) in enumerate(zip(test_ds.alphas, rep.errors))]
        return rep, rows
    if ck.encoder is not None:
        raise UsageError("a conditional checkpoint needs --data with a labeled test set")
    rep = evaluate.evaluate_single(ck, spec, r, solver, with_mse=with_mse)
    label = spec.index if spec.kind == "benchmark" else str(spec)
    mse = rep.mse_sorted[0] if rep.mse_sorted else None
    return rep, [(label, None, spec.alpha, rep.errors[0], mse)]


def write_report(out_dir, reports, rows, extra=None):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    secs = ",".join(f"{r.seconds:.3f}" for r in reports)
    fio.write_csv(out_dir / "report.csv", REPORT_HEADER, rows, seconds=secs)
    errors = [e for r in reports for e in r.errors]
    payload = {"trials": [r.to_dict() for r in reports], "mean": float(np.mean(errors)),
               "std": float(np.std(errors))}
    payload.update(extra or {})
    (out_dir / "report.json").write_text(json.dumps(payload, indent=1) + "\n")
    return out_dir / "report.csv"


def cmd_eval(args):
    metrics = _metrics(args.metric)
    spec = _parse_spec(args.spec) if args.spec else None
    if spec is None and not args.data:
        raise UsageError("eval needs --spec (single graphon) or --data (labeled test set)")
    if isinstance(spec, str):
        spec = None
    if args.resolution < 1:
        raise UsageError("--resolution must be positive")
    test_ds = fio.load_dataset(args.data) if args.data else None
    cks = [fio.load_checkpoint(p) for p in args.checkpoint]

    def one(k):
        return evaluate_checkpoint(cks[k], spec, test_ds, args.resolution, args.solver,
                                   "msesorted" in metrics)

    results = evaluate._map(one, range(len(cks)), args.jobs)
    reports = [rep for rep, _ in results]
    rows = [(k,) + row for k, (_, rs) in enumerate(results) for row in rs]
    path = write_report(args.out_dir, reports, rows,
                        {"resolution": args.resolution, "solver": args.solver,
                         "metrics": metrics, "checkpoints": [str(p) for p in args.checkpoint]})
    errs = [r[4] for r in rows]
    print(f"mean error {np.mean(errs):.6g} +- {np.std(errs):.6g} over {len(errs)} rows "
          f"(resolution {args.resolution}); wrote {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# embed / generate


def cmd_embed(args):
    ck = fio.load_checkpoint(args.checkpoint)
    if ck.encoder is None:
        raise UsageError("checkpoint has no encoder (ignr objective); nothing to embed")
    ds = fio.load_dataset(args.data)
    codes = train.encode_dataset(ck, ds)
    d = codes.shape[1]
    rows = [(i, a, *map(float, z)) for i, (a, z) in enumerate(zip(ds.alphas, codes))]
    fio.write_csv(args.out, ["graph", "alpha"] + [f"z{j + 1}" for j in range(d)], rows)
    msg = f"wrote {len(rows)} embeddings of dimension {d} to {args.out}"
    alphas = ds.alphas
    if len(rows) > 1 and all(a is not None for a in alphas):
        rho = evaluate.latent_alpha_correlation(codes, alphas)
        msg += f"; |spearman(alpha, PC1)| = {rho:.4f}"
    print(msg)
    return EXIT_OK


def cmd_generate(args):
    ck = fio.load_checkpoint(args.checkpoint)
    dec = ck.decoder
    if isinstance(dec, nn.DiscreteDecoderParams):
        raise UsageError("graph generation needs a coordinate-network checkpoint")
    z, alpha = None, None
    if isinstance(dec, nn.ModSirenParams):
        if args.z is not None:
            z = np.array(args.z)
            if z.shape[0] != dec.latent_dim:
                raise UsageError(f"--z has dimension {z.shape[0]}, checkpoint expects {dec.latent_dim}")
        elif args.z_index is not None:
            if not args.data:
                raise UsageError("--z-index needs --data")
            ds = fio.load_dataset(args.data)
            if not 0 <= args.z_index < len(ds):
                raise UsageError(f"--z-index out of range (dataset has {len(ds)} graphs)")
            z = nn.gin_encode(ck.encoder, ds.graphs[args.z_index].adj)
            alpha = ds.alphas[args.z_index]
        else:
            raise UsageError("conditional checkpoint: give --z or --z-index")
    elif args.z is not None or args.z_index is not None:
        raise UsageError("an ignr checkpoint takes no latent code")
    if any(n < 1 for n in args.sizes):
        raise UsageError("--sizes must be positive")
    out = Path(args.out)
    graphs, labels = [], []
    for k, n in enumerate(args.sizes):
        g, prob = train.generate_graph(dec, z, n, args.mode, args.seed + k, return_prob=True)
        graphs.append(g)
        labels.append({"alpha": alpha, "seed": args.seed + k})
        grid_path = _suffixed(out.with_suffix(".csv"), f"prob{n}")
        np.savetxt(grid_path, prob, delimiter=",", fmt="%.17g")
        print(f"n={n}: {int(g.adj.sum() / 2)} edges, density {g.density():.4f}; grid {grid_path}")
    fio.save_dataset(out, graphon.Dataset(graphs, labels, {}))
    print(f"wrote {len(graphs)} graphs to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# report


def summarize(paths):
    """Per-graphon ``(label, mean, std, count)`` across all rows of the given reports."""
    groups = {}
    for p in paths:
        header, rows = fio.read_csv(p)
        try:
            gi, ei = header.index("graphon_index"), header.index("error")
        except ValueError:
            raise CheckpointError(f"{p}: not a report file") from None
        for r in rows:
            groups.setdefault(r[gi], []).append(float(r[ei]))
    if not groups:
        raise CheckpointError("no report rows to summarize")
    return [(k, float(np.mean(v)), float(np.std(v)), len(v)) for k, v in groups.items()]


def format_table(summary) -> str:
    lines = [f"{'graphon':>10}  {'mean':>10}  {'std':>10}  {'n':>4}"]
    for label, m, s, c in summary:
        lines.append(f"{label:>10}  {m:10.4f}  {s:10.4f}  {c:4d}")
    return "\n".join(lines) + "\n"


def _color(t):
    # blue (low alpha) to red (high alpha)
    t = min(max(t, 0.0), 1.0)
    return f"rgb({int(255 * t)},{int(60 + 40 * (1 - abs(2 * t - 1)))},{int(255 * (1 - t))})"


def scatter_svg(points, values=None, size=400, title="") -> str:
    """Self-contained SVG scatter of 2-D points, colored by ``values``."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    pad = 30
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    xy = pad + (pts - lo) / span * (size - 2 * pad)
    if values is not None and len(values):
        v = np.asarray(values, dtype=np.float64)
        vlo, vhi = np.nanmin(v), np.nanmax(v)
        tv = (v - vlo) / (vhi - vlo) if vhi > vlo else np.full(len(v), 0.5)
    else:
        tv = np.full(len(pts), 0.5)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f'<rect width="{size}" height="{size}" fill="white"/>']
    if title:
        out.append(f'<text x="{pad}" y="18" font-size="12" font-family="sans-serif">{title}</text>')
    for (x, y), t in zip(xy, tv):
        out.append(f'<circle cx="{x:.2f}" cy="{size - y:.2f}" r="3" fill="{_color(t)}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _embedding_points(path):
    header, rows = fio.read_csv(path)
    zcols = [i for i, h in enumerate(header) if h.startswith("z")]
    if not zcols:
        raise CheckpointError(f"{path}: no latent columns")
    codes = np.array([[float(r[i]) for i in zcols] for r in rows])
    ai = header.index("alpha") if "alpha" in header else None
    alphas = [float(r[ai]) if ai is not None and r[ai] != "" else np.nan for r in rows]
    if codes.shape[1] == 1:
        pts = np.column_stack([codes[:, 0], np.zeros(len(codes))])
    elif codes.shape[1] == 2:
        pts = codes
    else:
        x = codes - codes.mean(axis=0)
        _, _, vt = np.linalg.svd(x, full_matrices=False)
        pts = x @ vt[:2].T
    return pts, alphas


def cmd_report(args):
    if not args.reports and not args.embeddings:
        raise UsageError("report needs report.csv files and/or --embeddings")
    if args.reports:
        table = format_table(summarize(args.reports))
        if args.out:
            Path(args.out).write_text(table)
        print(table, end="")
    if args.embeddings:
        pts, alphas = _embedding_points(args.embeddings)
        vals = None if np.all(np.isnan(alphas)) else alphas
        svg = scatter_svg(pts, vals, title="latent codes colored by alpha")
        svg_path = args.svg or str(Path(args.embeddings).with_suffix(".svg"))
        Path(svg_path).write_text(svg)
        print(f"wrote scatter of {len(pts)} points to {svg_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# recipes


def run_recipe(recipe: dict, out_dir, jobs=1) -> dict:
    """gen -> train -> eval into ``out_dir``; returns the written paths.

    Recipe keys: ``gen`` (spec, sizes, count, seed), optional ``split``
    (number of training graphs for family specs), ``train`` (TrainConfig
    fields) and ``eval`` (resolution, solver, metric).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    g = recipe.get("gen", {})
    if "spec" not in g:
        raise UsageError("recipe needs gen.spec")
    spec = _parse_spec(g["spec"])
    ds = make_dataset(spec, g.get("sizes"), g.get("count"), int(g.get("seed", 0)))
    paths = {}
    if isinstance(spec, str):
        n_train = int(recipe.get("split", round(0.8 * len(ds))))
        train_ds, test_ds = ds.split(n_train)
        fio.save_dataset(out / "train.jsonl", train_ds)
        fio.save_dataset(out / "test.jsonl", test_ds)
        paths["data"] = [out / "train.jsonl", out / "test.jsonl"]
    else:
        train_ds, test_ds = ds, None
        fio.save_dataset(out / "data.jsonl", ds)
        paths["data"] = [out / "data.jsonl"]
    tc = dict(recipe.get("train", {}))
    try:
        cfg = train.TrainConfig.from_dict(tc)
    except (InputDomainError, TypeError) as exc:
        raise UsageError(f"bad train block: {exc}") from None
    (out / "config.txt").write_text(fio.format_config(cfg))
    ck, hist = run_training(train_ds, cfg, out / "checkpoint.json", out / "loss_history.csv")
    paths.update(checkpoint=out / "checkpoint.json", loss_history=hist)
    e = recipe.get("eval", {})
    metrics = _metrics(e.get("metric", "gw"))
    r = int(e.get("resolution", evaluate.DEFAULT_EVAL_RESOLUTION))
    rep, rows = evaluate_checkpoint(ck, None if isinstance(spec, str) else spec, test_ds, r,
                                    e.get("solver", "cg"), "msesorted" in metrics, jobs)
    paths["report"] = write_report(out, [rep], [(0,) + row for row in rows],
                                   {"resolution": r, "recipe": recipe.get("name", "")})
    return paths


def cmd_run(args):
    try:
        recipe = json.loads(Path(args.recipe).read_text())
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read recipe {args.recipe}: {exc}") from None
    paths = run_recipe(recipe, args.out_dir, args.jobs)
    print(f"recipe {recipe.get('name', args.recipe)}: wrote {paths['report']}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    env_jobs = os.environ.get("IGNR_JOBS", "1")
    p = argparse.ArgumentParser(prog="graphon-ignr",
                                description="Implicit graphon neural representations.")
    p.add_argument("--jobs", type=int, default=int(env_jobs) if env_jobs.isdigit() else 1,
                   help="parallel evaluation workers (default: $IGNR_JOBS or 1)")
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="sample a dataset of graphs")
    g.add_argument("--spec", required=True,
                   help="benchmark:K (0-12), two_block:ALPHA, noisy_ring:ALPHA, s1 or s2")
    g.add_argument("--sizes", type=_int_list, help="graph sizes for single-graphon specs")
    g.add_argument("--count", type=int, help="graph count for s1/s2 (default 600/100)")
    g.add_argument("--trials", type=int, default=1, help="independent datasets, one file each")
    g.add_argument("--seed", type=int, default=0, help="base seed; graph i uses seed+i")
    g.add_argument("--out", required=True, help="output JSON-Lines file")
    g.set_defaults(fn=cmd_gen)

    t = sub.add_parser("train", help="fit a model and write a checkpoint")
    t.add_argument("--objective", choices=train.OBJECTIVES, help="model family (default ignr)")
    t.add_argument("--data", required=True, help="training dataset (JSON Lines)")
    t.add_argument("--config", help="flat key = value file of training settings")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--solver", choices=sorted(train.gw.SOLVERS), help="coupling solver")
    t.add_argument("--epochs", type=int, help="passes over the dataset")
    t.add_argument("--seed", type=int, help="seed for initialization and shuffling")
    t.add_argument("--lr", type=float, help="Adam learning rate")
    t.add_argument("--latent-dim", type=int, help="latent dimension (cignr/discrete only)")
    t.add_argument("--recon-size", help="match_input or cap:K")
    t.add_argument("--history", help="loss history CSV (default: loss_history.csv beside --out)")
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="graphon estimation error of checkpoints")
    e.add_argument("--checkpoint", nargs="+", required=True, help="one checkpoint per trial")
    e.add_argument("--spec", help="true graphon for single-graphon checkpoints")
    e.add_argument("--data", help="labeled test set for conditional checkpoints")
    e.add_argument("--resolution", type=int, default=evaluate.DEFAULT_EVAL_RESOLUTION,
                   help="evaluation grid size R")
    e.add_argument("--metric", default="gw", help="gw or gw,msesorted")
    e.add_argument("--solver", choices=sorted(train.gw.SOLVERS), default="cg")
    e.add_argument("--out-dir", default=".", help="directory for report.csv and report.json")
    e.set_defaults(fn=cmd_eval)

    m = sub.add_parser("embed", help="latent codes of a dataset")
    m.add_argument("--checkpoint", required=True)
    m.add_argument("--data", required=True)
    m.add_argument("--out", required=True, help="embeddings CSV")
    m.set_defaults(fn=cmd_embed)

    n = sub.add_parser("generate", help="sample new graphs from a trained model")
    n.add_argument("--checkpoint", required=True)
    n.add_argument("--z", type=_float_list, help="literal latent code, comma-separated")
    n.add_argument("--z-index", type=int, help="use the code of graph K of --data")
    n.add_argument("--data", help="dataset for --z-index")
    n.add_argument("--sizes", type=_int_list, required=True, help="graph sizes to generate")
    n.add_argument("--mode", choices=("deterministic", "stochastic"), default="deterministic")
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--out", required=True, help="output dataset; grids go beside it")
    n.set_defaults(fn=cmd_generate)

    r = sub.add_parser("report", help="summary table and latent scatter plot")
    r.add_argument("reports", nargs="*", help="report.csv files")
    r.add_argument("--embeddings", help="embeddings CSV for the scatter plot")
    r.add_argument("--svg", help="scatter output path (default: beside the embeddings)")
    r.add_argument("--out", help="also write the table to this file")
    r.set_defaults(fn=cmd_report)

    u = sub.add_parser("run", help="run a gen -> train -> eval recipe")
    u.add_argument("--recipe", required=True, help="recipe JSON file")
    u.add_argument("--out-dir", required=True)
    u.set_defaults(fn=cmd_run)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s", stream=sys.stderr)
    t0 = time.perf_counter()
    try:
        code = args.fn(args)
    except UsageError as exc:
        print(f"graphon-ignr {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"graphon-ignr {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (CheckpointError, InputDomainError) as exc:
        print(f"graphon-ignr {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA
    log.info("done in %.1fs", time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
