"""Command-line surface: train, eval, predict, synth, verify, bench, export-incidence.

Every command validates its configuration before touching data, routes all
randomness through --seed, and with --workers 1 is bit-reproducible: two
identical `train` invocations write byte-identical summary files.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .autodiff import NumericError
from .checkpoint import load_checkpoint, save_checkpoint
from .data import NormStats, ingest, prepare_dataset, save_synth, synth_generate
from .graphs import RoadNetwork
from .hyperedges import write_incidence_csv
from .model import Forecaster, ModelConfig
from .oracles import run_verification
from .training import TrainConfig, evaluate, fit, predict_batch, write_history_csv


def _parse_windows(text: str) -> tuple[int, ...]:
    try:
        windows = tuple(int(w) for w in text.split(",") if w.strip())
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"windows must be comma-separated integers, got {text!r}") from err
    if not windows:
        raise argparse.ArgumentTypeError("windows list is empty")
    return windows


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--d", type=int, default=64, help="hidden width (default 64)")
    p.add_argument("--hyperedges", type=int, default=32, help="number of hyperedges (default 32)")
    p.add_argument("--windows", type=_parse_windows, default=(1, 2, 3, 4, 6, 12),
                   help="pooling window sizes, must divide the lookback (default 1,2,3,4,6,12)")
    p.add_argument("--lp", type=int, default=6, help="prior convolution layers (default 6)")
    p.add_argument("--lh", type=int, default=1, help="hypergraph convolutions per block (default 1)")
    p.add_argument("--ls", type=int, default=2, help="block iterations per scale (default 2)")
    p.add_argument("--lookback", type=int, default=12, help="input steps (default 12)")
    p.add_argument("--horizon", type=int, default=12, help="predicted steps (default 12)")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=100, help="training epochs (default 100)")
    p.add_argument("--batch-size", type=int, default=32, help="minibatch size (default 32)")
    p.add_argument("--lr", type=float, default=0.001, help="Adam learning rate (default 0.001)")
    p.add_argument("--clip-norm", type=float, default=None, help="global gradient norm clip (off by default)")
    p.add_argument("--workers", type=int, default=1,
                   help="parallel samples per batch; keep 1 for bit-reproducible runs")


def _model_config_from_args(args, n_nodes: int, n_features: int) -> ModelConfig:
    return ModelConfig(
        n_nodes=n_nodes,
        n_features=n_features,
        lookback=args.lookback,
        horizon=args.horizon,
        width=args.d,
        n_hyperedges=args.hyperedges,
        windows=args.windows,
        encoder_layers=args.lp,
        hyper_layers=args.lh,
        scale_iters=args.ls,
    )


def _validate_flags_early(args) -> None:
    # Constructing a throwaway config runs the divisibility and positivity
    # checks before any file is opened.
    _model_config_from_args(args, n_nodes=1, n_features=1)


def _split_samples(prepared, split: str):
    if split == "train":
        return prepared.train
    if split == "val":
        return prepared.val
    if split == "test":
        return prepared.test
    return prepared.all_samples


def _load_model(checkpoint_path) -> tuple[Forecaster, NormStats, dict]:
    meta, tensors = load_checkpoint(checkpoint_path)
    cfg = ModelConfig.from_json(meta["model"])
    net = RoadNetwork(cfg.n_nodes, tuple(tuple(e) for e in meta["edges"]))
    model = Forecaster(cfg, net, params=None, seed=0)
    model.load_state(tensors)
    stats = NormStats(mean=np.array(meta["stats"]["mean"]), std=np.array(meta["stats"]["std"]))
    return model, stats, meta


# ---------------------------------------------------------------------------
# Commands


def cmd_train(args) -> int:
    _validate_flags_early(args)
    train_cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr,
                            seed=args.seed, clip_norm=args.clip_norm, workers=args.workers)
    signal, net = ingest(args.data, args.edges)
    cfg = _model_config_from_args(args, n_nodes=signal.n_nodes, n_features=signal.n_features)
    prepared = prepare_dataset(signal, cfg.lookback, cfg.horizon)
    model = Forecaster(cfg, net, seed=args.seed)

    def report(epoch, train_rep, val_rep):
        val = f" val_mae={val_rep.mae:.4f}" if val_rep else ""
        print(f"epoch {epoch}: train_mae={train_rep.mae:.4f}{val}", flush=True)

    result = fit(model, prepared.train, prepared.val, train_cfg, stats=prepared.stats,
                 on_epoch=report)

    test_pred = prepared.stats.invert_flow(predict_batch(model, prepared.test))
    test_true = prepared.stats.invert_flow(np.stack([s.target for s in prepared.test]))
    test_report = evaluate(test_pred, test_true)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "model": cfg.to_json(),
        "stats": {"mean": prepared.stats.mean.tolist(), "std": prepared.stats.std.tolist()},
        "edges": [[u, v, w] for u, v, w in net.edges],
        "seed": args.seed,
    }
    save_checkpoint(out / "model.ckpt", meta, model.state())
    write_history_csv(result.history, out / "history.csv")
    summary = {"test_mae": test_report.mae, "test_rmse": test_report.rmse,
               "test_mape": test_report.mape}
    (out / "summary.json").write_text(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    print(f"test: mae={test_report.mae:.4f} rmse={test_report.rmse:.4f} "
          f"mape={'-' if test_report.mape is None else f'{test_report.mape:.2f}%'}")
    print(f"wrote {out / 'model.ckpt'}, {out / 'history.csv'}, {out / 'summary.json'}")
    return 0


def _prepare_for_checkpoint(args):
    model, stats, _ = _load_model(args.checkpoint)
    signal, net = ingest(args.data, args.edges)
    cfg = model.cfg
    if signal.n_nodes != cfg.n_nodes:
        raise ValueError(f"checkpoint was trained on {cfg.n_nodes} nodes, data has {signal.n_nodes}")
    if signal.n_features != cfg.n_features:
        raise ValueError(f"checkpoint expects {cfg.n_features} features, data has {signal.n_features}")
    if net.edges != model.net.edges:
        raise ValueError("edge file does not match the road network stored in the checkpoint")
    prepared = prepare_dataset(signal, cfg.lookback, cfg.horizon, stats=stats)
    return model, stats, prepared


def cmd_eval(args) -> int:
    model, stats, prepared = _prepare_for_checkpoint(args)
    samples = _split_samples(prepared, args.split)
    if not samples:
        raise ValueError(f"split {args.split!r} is empty")
    pred = stats.invert_flow(predict_batch(model, samples))
    true = stats.invert_flow(np.stack([s.target for s in samples]))
    report = evaluate(pred, true)
    print(json.dumps({"split": args.split, **report.as_dict()}, sort_keys=True))
    return 0


def cmd_predict(args) -> int:
    model, stats, prepared = _prepare_for_checkpoint(args)
    samples = _split_samples(prepared, args.split)
    if not samples:
        raise ValueError(f"split {args.split!r} is empty")
    lookback = model.cfg.lookback
    with open(args.out, "w", newline="") as fh:
        fh.write("t,node,y_true,y_pred\n")
        for sample in samples:
            pred = stats.invert_flow(model.predict(sample.input))
            true = stats.invert_flow(sample.target)
            for k in range(pred.shape[0]):
                t_abs = sample.start + lookback + k
                for i in range(pred.shape[1]):
                    fh.write(f"{t_abs},{i},{float(true[k, i])!r},{float(pred[k, i])!r}\n")
    print(f"wrote {args.out} ({len(samples)} windows)")
    return 0


def cmd_synth(args) -> int:
    signal, net, membership = synth_generate(
        args.nodes, args.communities, args.steps, args.seed,
        noise_std=args.noise, events_per_day=args.events_per_day)
    paths = save_synth(args.out, signal, net, membership)
    print(f"wrote {paths['signals']}, {paths['sidecar']}, {paths['edges']}, {paths['membership']}")
    return 0


def cmd_verify(args) -> int:
    results = run_verification(seed=args.seed, corrupt_grad=args.corrupt_grad)
    families = {r.family for r in results}
    failures = [r for r in results if not r.passed]
    for r in results:
        print(r.line())
    print(f"{len(results)} oracles in {len(families)} families, {len(failures)} failures")
    return 1 if failures else 0


def _bench_model(n: int, t: int, width: int, edges_per_node: int, rng) -> tuple[Forecaster, np.ndarray, int]:
    pairs = set()
    while len(pairs) < edges_per_node * n:
        u, v = rng.integers(0, n, size=2)
        if u != v:
            pairs.add((int(u), int(v)))
    net = RoadNetwork(n, tuple((u, v, float(rng.uniform(0.5, 2.0))) for u, v in pairs))
    cfg = ModelConfig(n_nodes=n, n_features=1, lookback=t, horizon=4, width=width,
                      n_hyperedges=8, windows=(1, 2, 3), encoder_layers=2, scale_iters=1)
    model = Forecaster(cfg, net, seed=0)
    x = rng.normal(size=(t, n, 1))
    return model, x, len(net.edges)


def _time_forward(model: Forecaster, x: np.ndarray, repeats: int) -> float:
    model.predict(x)  # warmup
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        model.predict(x)
        best = min(best, time.perf_counter() - start)
    return best


def cmd_bench(args) -> int:
    rng = np.random.default_rng(args.seed)
    rows = []

    t_grid = list(args.t_grid)
    for t in t_grid:
        model, x, nnz = _bench_model(args.base_n, t, args.d, args.edges_per_node, rng)
        rows.append((args.base_n, t, nnz, _time_forward(model, x, args.repeats)))

    n_grid = list(args.n_grid)
    for n in n_grid:
        model, x, nnz = _bench_model(n, args.t_fixed, args.d, args.edges_per_node, rng)
        rows.append((n, args.t_fixed, nnz, _time_forward(model, x, args.repeats)))

    with open(args.out, "w", newline="") as fh:
        fh.write("n,t,nnz,seconds\n")
        for n, t, nnz, sec in rows:
            fh.write(f"{n},{t},{nnz},{sec!r}\n")

    t_rows = rows[:len(t_grid)]
    n_rows = rows[len(t_grid):]
    slope_t = float(np.polyfit(np.log([r[1] for r in t_rows]), np.log([r[3] for r in t_rows]), 1)[0])
    slope_nnz = float(np.polyfit(np.log([r[2] for r in n_rows]), np.log([r[3] for r in n_rows]), 1)[0])

    model, x, _ = _bench_model(args.base_n, args.t_fixed, args.d, args.edges_per_node, rng)
    small = _time_forward(model, x, args.repeats)
    model, x, _ = _bench_model(args.base_n, args.t_fixed, 2 * args.d, args.edges_per_node, rng)
    ratio_d = _time_forward(model, x, args.repeats) / small

    print(f"slope_t={slope_t:.3f}")
    print(f"slope_nnz={slope_nnz:.3f}")
    print(f"d_double_time_ratio={ratio_d:.3f}")
    print(f"wrote {args.out}")
    return 0


def cmd_export_incidence(args) -> int:
    model, stats, prepared = _prepare_for_checkpoint(args)
    if 1 not in model.cfg.windows:
        raise ValueError("incidence export needs window size 1 in the model's window set")
    samples = _split_samples(prepared, args.split)
    if not (0 <= args.window_index < len(samples)):
        raise ValueError(f"window index {args.window_index} out of range for {len(samples)} windows")
    sample = samples[args.window_index]
    capture: dict = {}
    model.forward(sample.input, capture=capture)
    lam = capture["incidence"][1][-1]  # finest scale, final block iteration
    write_incidence_csv(lam, model.cfg.lookback, model.cfg.n_nodes, args.out)
    print(f"wrote {args.out} ({lam.shape[0] * lam.shape[1]} rows)")
    return 0


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hyperflow",
        description="Traffic flow forecasting with learned dynamic hypergraph structure.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write checkpoint, history, summary")
    p.add_argument("--data", required=True, help="signals .bin file (with .json sidecar)")
    p.add_argument("--edges", required=True, help="road network CSV")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    _add_model_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    for name, func, help_text in (
        ("eval", cmd_eval, "report MAE/RMSE/MAPE of a checkpoint on a data split"),
        ("predict", cmd_predict, "write de-normalized predictions as CSV"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--data", required=True)
        p.add_argument("--edges", required=True)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
        p.add_argument("--seed", type=int, default=0)
        if name == "predict":
            p.add_argument("--out", required=True, help="prediction CSV path")
        p.set_defaults(func=func)

    p = sub.add_parser("synth", help="generate community-structured synthetic traffic data")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--nodes", type=int, default=30)
    p.add_argument("--communities", type=int, default=3)
    p.add_argument("--steps", type=int, default=4032)
    p.add_argument("--noise", type=float, default=3.0)
    p.add_argument("--events-per-day", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("verify", help="run every property oracle and report pass/fail")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corrupt-grad", default=None, help=argparse.SUPPRESS)  # test hook
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", help="time forward passes over size grids and fit scaling slopes")
    p.add_argument("--out", required=True, help="timing CSV path")
    p.add_argument("--d", type=int, default=64)
    p.add_argument("--t-grid", type=_parse_windows, default=(6, 12, 24, 48))
    p.add_argument("--n-grid", type=_parse_windows, default=(50, 100, 200, 400))
    p.add_argument("--base-n", type=int, default=80)
    p.add_argument("--t-fixed", type=int, default=12)
    p.add_argument("--edges-per-node", type=int, default=4)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export-incidence", help="dump the learned incidence matrix for one window")
    p.add_argument("--data", required=True)
    p.add_argument("--edges", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="incidence CSV path")
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    p.add_argument("--window-index", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_export_incidence)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, RuntimeError, NumericError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
