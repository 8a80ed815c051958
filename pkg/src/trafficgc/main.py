"""Command-line entry point for the traffic forecaster."""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .checkpoint import read_checkpoint, save_checkpoint
from .config import ModelConfig, apply_overrides, load_config
from .data import generate_synthetic, save_speed_csv
from .errors import TrafficGCError
from .experiment import Experiment, load_data_dir, load_graph_dir
from .gradcheck import CASES, run_gradcheck
from .graph import build_graph_matrices, save_topology
from .metrics import export_avg_weights, export_predictions, metrics_table
from .models import ModelKind
from .utils.constants import (
    ADJACENCY_FILE, AVG_WEIGHT_FILE, CHECKPOINT_FILE, DISTANCE_FILE, FFR_FILE,
    GRADCHECK_TOLERANCE, IMPUTE_FFILL_BFILL, IMPUTE_POLICIES, KHOP_FILE, MASK_FILE,
    METRICS_FILE, PREDICTIONS_FILE, REPORT_FILE, SPEED_FILE, SWEEP_FILE, SWEEP_REPORT_FILE,
    SYNTHETIC_EVENT_RATE, SYNTHETIC_NOISE_MPH, TOPOLOGIES, TOPOLOGY_RING
)
from .utils.helpers import write_matrix_csv

logger = logging.getLogger(__name__)

MODEL_KINDS = tuple(kind.value for kind in ModelKind)

# Flags whose destinations are config keys; None means "not given"
GRAPH_FLAGS = ("k_hops", "m_steps", "delta_t_min", "free_flow")
TRAIN_FLAGS = ("seq_len", "split", "batch_size", "lambda1", "lambda2", "lr", "alpha",
               "epsilon", "patience", "max_epochs", "seed", "grad_clip")


def _graph_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("graph")
    group.add_argument("--config", type=Path, help="TOML file of key = value settings")
    group.add_argument("--k-hops", type=int, help="Largest hop order K")
    group.add_argument("--m-steps", type=int, help="FFR horizon in time quanta (defaults to K)")
    group.add_argument("--delta-t-min", type=float, help="Time quantum in minutes")
    group.add_argument("--free-flow", type=float, help="Default free-flow speed in mph")
    return parent


def _train_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    group = parent.add_argument_group("training")
    group.add_argument("--data", type=Path, required=True, help="Data directory (topology, node ids, speeds)")
    group.add_argument("--impute", choices=IMPUTE_POLICIES, default=IMPUTE_FFILL_BFILL,
                       help="Missing-value policy")
    group.add_argument("--subset", type=int, help="Use a connected subset of this many nodes")
    group.add_argument("--seq-len", type=int, help="Input sequence length T")
    group.add_argument("--split", help="Train/validation/test fractions, e.g. 0.7,0.1,0.2")
    group.add_argument("--batch-size", type=int)
    group.add_argument("--lambda1", type=float, help="L1 weight penalty")
    group.add_argument("--lambda2", type=float, help="Feature-consistency penalty")
    group.add_argument("--lr", type=float, help="RMSProp learning rate")
    group.add_argument("--alpha", type=float, help="RMSProp decay")
    group.add_argument("--epsilon", type=float, help="RMSProp denominator offset")
    group.add_argument("--patience", type=int, help="Early-stopping patience in epochs")
    group.add_argument("--max-epochs", type=int)
    group.add_argument("--seed", type=int)
    group.add_argument("--grad-clip", type=float, help="Global gradient-norm clip")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="trafficgc",
                                     description="Traffic graph convolutional LSTM speed forecaster")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true", help="Debug logging")
    verbosity.add_argument("--quiet", "-q", action="store_true", help="Warnings and errors only")
    sub = parser.add_subparsers(dest="command", required=True)
    graph, training = _graph_parent(), _train_parent()

    prep = sub.add_parser("prep-graph", parents=[graph],
                          help="Write adjacency, k-hop, distance, FFR and mask CSVs")
    prep.add_argument("--data", type=Path, required=True, help="Data directory with topology and node ids")
    prep.add_argument("--out", type=Path, required=True)

    gen = sub.add_parser("gen-synthetic", help="Generate a synthetic congestion dataset")
    gen.add_argument("--nodes", type=int, default=20)
    gen.add_argument("--topology", choices=TOPOLOGIES, default=TOPOLOGY_RING)
    gen.add_argument("--steps", type=int, default=5000)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--event-rate", type=float, default=SYNTHETIC_EVENT_RATE)
    gen.add_argument("--noise", type=float, default=SYNTHETIC_NOISE_MPH, help="Noise half-width in mph")
    gen.add_argument("--out", type=Path, required=True)

    tr = sub.add_parser("train", parents=[graph, training], help="Train one model")
    tr.add_argument("--model", choices=MODEL_KINDS)
    tr.add_argument("--out", type=Path, required=True, help="Directory for checkpoint and report")

    ev = sub.add_parser("evaluate", parents=[graph, training], help="Score models on the test split")
    ev.add_argument("--checkpoint", type=Path, action="append", default=[], help="Trained checkpoint (repeatable)")
    ev.add_argument("--model", dest="models", choices=MODEL_KINDS, action="append", default=[],
                    help="Model kind to train and score (repeatable)")
    ev.add_argument("--out", type=Path, help="Directory for metrics.csv and forecast series")
    ev.add_argument("--series-node", help="Also write forecast vs observed for this node id")

    ex = sub.add_parser("export-weights", help="Write the averaged TGC weight matrix")
    ex.add_argument("--checkpoint", type=Path, required=True)
    ex.add_argument("--out", type=Path, required=True, help="CSV destination")

    gc = sub.add_parser("gradcheck", help="Finite-difference gradient verification")
    gc.add_argument("--n", type=int, default=5, help="Node count")
    gc.add_argument("--k", type=int, default=2, help="Hop order")
    gc.add_argument("--t", type=int, default=3, help="Sequence length")
    gc.add_argument("--seed", type=int, default=0, help="First seed")
    gc.add_argument("--seeds", type=int, default=10, help="Number of seeds")
    gc.add_argument("--case", dest="cases", choices=tuple(CASES), action="append",
                    help="Restrict to a case (repeatable)")
    gc.add_argument("--tolerance", type=float, default=GRADCHECK_TOLERANCE)

    sw = sub.add_parser("sweep-k", parents=[graph, training], help="Train TGC-LSTM for several hop orders")
    sw.add_argument("--k-list", default="1,2,3", help="Comma-separated hop orders")
    sw.add_argument("--out", type=Path, help="Directory for sweep_k.csv and the per-K training reports")
    return parser


def resolve_config(args: argparse.Namespace) -> ModelConfig:
    """Defaults, then the --config file, then explicit flags."""
    config = load_config(args.config) if getattr(args, "config", None) else ModelConfig()
    overrides = {key: getattr(args, key, None) for key in GRAPH_FLAGS + TRAIN_FLAGS}
    if isinstance(getattr(args, "model", None), str):
        overrides["model"] = args.model
    return apply_overrides(config, overrides)


def _print_table(frame) -> None:
    print(frame.to_string(index=False, float_format=lambda v: f"{v:.4f}"))


def cmd_prep_graph(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    graph, node_ids = load_graph_dir(args.data, config)
    matrices = build_graph_matrices(graph, config.graph.k_hops, config.graph.horizon_steps,
                                    config.graph.delta_t_min)
    out = args.out
    write_matrix_csv(matrices.adjacency.values, node_ids, out / ADJACENCY_FILE, row_labels=True)
    write_matrix_csv(matrices.distance.values, node_ids, out / DISTANCE_FILE, row_labels=True)
    write_matrix_csv(matrices.ffr.values, node_ids, out / FFR_FILE, row_labels=True)
    for k in range(1, matrices.order + 1):
        write_matrix_csv(matrices.khops[k - 1].values, node_ids, out / KHOP_FILE.format(k=k), row_labels=True)
        write_matrix_csv(matrices.mask(k).values, node_ids, out / MASK_FILE.format(k=k), row_labels=True)
    print(f"N={matrices.node_count} K={matrices.order} K_max={matrices.k_max}")
    print(f"Graph matrices written to {out}")
    return 0


def cmd_gen_synthetic(args: argparse.Namespace) -> int:
    graph, dataset = generate_synthetic(args.nodes, args.topology, args.steps, args.seed,
                                        event_rate=args.event_rate, noise_mph=args.noise)
    save_topology(graph, dataset.node_ids, args.out)
    save_speed_csv(dataset, args.out / SPEED_FILE)
    print(f"Synthetic {args.topology} dataset ({args.nodes} nodes, {args.steps} steps) written to {args.out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    experiment = Experiment(load_data_dir(args.data, config, args.impute, args.subset), config)
    model, best, report = experiment.train_model()
    metrics, _ = experiment.evaluate_model(model)
    report.final_metrics = {"mae": metrics.mae, "mape": metrics.mape, "rmse": metrics.rmse}

    save_checkpoint(best, args.out / CHECKPOINT_FILE)
    report.write_csv(args.out / REPORT_FILE)
    print(f"Best epoch {report.best_epoch} (validation loss {report.best_val_loss:.6g})")
    _print_table(metrics_table([(model.kind, metrics)]))
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    if not args.checkpoint and not args.models:
        raise ValueError("evaluate needs at least one --checkpoint or --model")
    config = resolve_config(args)
    experiment = Experiment(load_data_dir(args.data, config, args.impute, args.subset), config)

    rows, series = [], []
    for path in args.checkpoint:
        model = read_checkpoint(path).build()
        metrics, predictions = experiment.evaluate_model(model)
        rows.append((f"{model.kind} ({path.name})", metrics))
        series.append((model.kind, predictions))
    for kind in args.models:
        model, _, _ = experiment.train_model(kind)
        metrics, predictions = experiment.evaluate_model(model)
        rows.append((kind, metrics))
        series.append((kind, predictions))

    table = metrics_table(rows)
    _print_table(table)
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        table.to_csv(args.out / METRICS_FILE, index=False, float_format="%.17g")
        if args.series_node is not None:
            stamps = experiment.data.dataset.timestamps[experiment.data.test.target_rows]
            for kind, predictions in series:
                export_predictions(predictions, experiment.test_targets(), experiment.data.node_ids,
                                   args.out / PREDICTIONS_FILE.format(node=f"{args.series_node}_{kind}"),
                                   args.series_node, stamps)
    return 0


def cmd_export_weights(args: argparse.Namespace) -> int:
    checkpoint = read_checkpoint(args.checkpoint)
    model = checkpoint.build()
    out = args.out if args.out.suffix else args.out / AVG_WEIGHT_FILE
    averaged = export_avg_weights(model, out, checkpoint.meta.get("node_ids"))
    print(f"Averaged weights over K={averaged.order} written to {out}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    report = run_gradcheck(args.n, args.k, args.t, range(args.seed, args.seed + args.seeds),
                           args.cases or tuple(CASES), args.tolerance)
    for case, worst in report.per_case().items():
        print(f"{case:16s} {worst:.3e}")
    print(f"max relative error {report.max_error:.3e} ({'PASS' if report.passed else 'FAIL'})")
    for case, seed, err in report.failures():
        print(f"  failed: {case} seed {seed}: {err:.3e}", file=sys.stderr)
    return 0 if report.passed else 1


def cmd_sweep_k(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    try:
        orders = [int(k) for k in args.k_list.split(",") if k.strip()]
    except ValueError:
        raise ValueError(f"--k-list must be comma-separated integers, got {args.k_list!r}") from None
    experiment = Experiment(load_data_dir(args.data, config, args.impute, args.subset), config)

    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)

    rows, sparsity = [], []
    for k in orders:
        model, _, report = experiment.train_model(ModelKind.TGC_LSTM.value, k)
        if args.out is not None:
            report.write_csv(args.out / SWEEP_REPORT_FILE.format(k=k))
        metrics, _ = experiment.evaluate_model(model)
        rows.append((f"tgc-lstm K={k}", metrics))
        sparsity.append(experiment.sparsity(model))

    table = metrics_table(rows)
    table["k_hops"] = orders
    table["weight_sparsity"] = sparsity
    _print_table(table)
    if args.out is not None:
        table.to_csv(args.out / SWEEP_FILE, index=False, float_format="%.17g")
    return 0


COMMANDS = {
    "prep-graph": cmd_prep_graph,
    "gen-synthetic": cmd_gen_synthetic,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "export-weights": cmd_export_weights,
    "gradcheck": cmd_gradcheck,
    "sweep-k": cmd_sweep_k,
}


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse argv, run the subcommand and return the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        return COMMANDS[args.command](args)
    except KeyboardInterrupt:
        print("Interrupted by user", file=sys.stderr)
        return 1
    except (TrafficGCError, OSError, ValueError) as exc:
        logger.debug("command failed", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
