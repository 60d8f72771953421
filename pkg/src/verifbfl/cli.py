"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 verification failed, 3 runtime error.
Set VERIFBFL_LOG (DEBUG, INFO, WARNING, ...) for log output on stderr.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("verifbfl.cli")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return v


# ---------------------------------------------------------------------------
# statements on disk
# ---------------------------------------------------------------------------


def write_statement(path, kind: str, i: int, z0, z_n, **extra) -> None:
    doc = {"kind": kind, "i": i, "z0": [str(v) for v in z0], "z_n": [str(v) for v in z_n], **extra}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_statement(path) -> tuple:
    try:
        doc = json.loads(Path(path).read_text())
        return int(doc["i"]), [int(v) for v in doc["z0"]], [int(v) for v in doc["z_n"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"malformed statement file {path}: {exc}") from exc


def _desc_for(model, p: int, level: str):
    from verifbfl.protocol import TaskDescription

    desc = TaskDescription(tuple(model.dims), level, model.cfg.scale_bits, model.cfg.value_bits)
    if desc.p != p:
        raise UsageError(f"model was encoded for a different field than level {level!r}")
    return desc


def _load_model(path):
    from verifbfl.fl.model import QuantizedModel

    return QuantizedModel.from_bytes(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_run_sim(args) -> int:
    from verifbfl.sim import Simulation, check_report, load_config, preset

    cfg = load_config(args.config, args.seed) if args.config else preset(args.preset, args.seed)
    sim = Simulation(cfg)
    report = sim.run()
    print(report.summary())
    problems = check_report(report, sim.chain)
    for p in problems:
        print(f"  inconsistency: {p}")
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n")
        print(f"report written to {args.out}")
    if args.plot_dir:
        from verifbfl.report import simulation_figure

        print(f"figure written to {simulation_figure(report, args.plot_dir)}")
    return EXIT_RUNTIME if problems else EXIT_OK


def cmd_prove_accuracy(args) -> int:
    from verifbfl.fl.dataset import load_flat
    from verifbfl.fl.train import evaluate_accuracy
    from verifbfl.protocol import accuracy_context, accuracy_keys, prove_accuracy

    model, p = _load_model(args.model)
    desc = _desc_for(model, p, args.level)
    raw = Path(args.dataset).read_bytes()
    samples = load_flat(args.dataset).quantized(desc.cfg)
    task_id = hashlib.sha256(raw).digest()
    _, vk, _ = accuracy_keys(desc)
    proof = prove_accuracy(desc, task_id, 0, args.trainer, b"", model, rng=args.seed, samples=samples)
    correct, n = evaluate_accuracy(model, samples)
    ctx = accuracy_context(p, task_id, 0, args.trainer, b"")
    out = Path(args.out)
    out.write_bytes(proof.to_bytes())
    Path(args.vk_out or f"{out}.vk").write_bytes(vk.to_bytes())
    write_statement(args.statement_out or f"{out}.json", "accuracy", proof.i, [0, model.digest(p), ctx, ctx],
                    proof.z_n, correct=correct, n=n)
    print(f"accuracy proof over {n} samples: {correct} correct; {len(proof.to_bytes())} bytes -> {out}")
    return EXIT_OK


def cmd_prove_aggregation(args) -> int:
    from verifbfl.fl.fedavg import fedavg
    from verifbfl.protocol import aggregation_keys, aggregation_statement, prove_aggregation

    loaded = [_load_model(m) for m in args.models]
    models = [m for m, _ in loaded]
    p = loaded[0][1]
    if any(q != p or m.dims != models[0].dims for m, q in loaded):
        raise UsageError("local models must share architecture and field")
    volumes = args.volumes or [1] * len(models)
    if len(volumes) != len(models) or min(volumes) < 1:
        raise UsageError("give one positive volume per model")
    desc = _desc_for(models[0], p, args.level)
    _, vk, _ = aggregation_keys(desc)
    task_id = hashlib.sha256(b"".join(m.to_bytes(p) for m in models)).digest()
    proof = prove_aggregation(desc, task_id, 0, args.aggregator, models, volumes, rng=args.seed)
    glob = fedavg(models, volumes, owner=args.aggregator)
    i, z0, z_n = aggregation_statement(desc, task_id, 0, args.aggregator, models, volumes, glob)
    out = Path(args.out)
    out.write_bytes(proof.to_bytes())
    Path(args.vk_out or f"{out}.vk").write_bytes(vk.to_bytes())
    write_statement(args.statement_out or f"{out}.json", "aggregation", i, z0, z_n)
    if args.global_out:
        Path(args.global_out).write_bytes(glob.to_bytes(p))
    print(f"aggregation proof over {len(models)} models; {len(proof.to_bytes())} bytes -> {out}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from verifbfl.errors import DecodeError
    from verifbfl.ivc import IvcProof, VerifyingKey, verify

    vk = VerifyingKey.from_bytes(Path(args.vk).read_bytes())
    i, z0, z_n = read_statement(args.statement)
    try:
        proof = IvcProof.from_bytes(Path(args.proof).read_bytes())
    except DecodeError as exc:
        print(f"invalid: proof does not decode ({exc})")
        return EXIT_INVALID
    if verify(vk, i, z0, z_n, proof):
        print("valid")
        return EXIT_OK
    print("invalid")
    return EXIT_INVALID


def cmd_bench_proofs(args) -> int:
    from verifbfl.bench import bench_proofs, linear_fit

    results = bench_proofs(tuple(args.dims), args.n_eval, args.n_models, args.repeats, args.level, args.seed)
    for r in results:
        print(f"{r.op:18s} steps={int(r.x):4d} setup={r.setup_s:7.3f}s prove={r.prove_s:8.3f}s "
              f"verify={r.verify_s:7.3f}s size={r.proof_bytes}B constraints={r.constraints}")
    acc = [r for r in results if r.op == "prove_accuracy"]
    if len(acc) >= 2:
        slope, _, r2 = linear_fit([r.x for r in acc], [r.prove_s for r in acc])
        print(f"accuracy prove time: {slope:.4f} s/step, R^2={r2:.4f}")
    _emit(results, args)
    return EXIT_OK


def cmd_bench_ledger(args) -> int:
    from verifbfl.bench import bench_ledger

    results = bench_ledger(args.rate, args.ops, args.window, args.capacity, args.period, args.seed, args.clock)
    for r in results:
        print(f"{r.op:18s} rate={r.x:8.1f} throughput={r.throughput_tps:8.2f} tx/s "
              f"latency mean={r.latency_mean_s:7.2f}s p95={r.latency_p95_s:7.2f}s")
    _emit(results, args)
    return EXIT_OK


def _emit(results, args) -> None:
    from verifbfl.bench import write_csv

    if args.out:
        write_csv(results, args.out)
        print(f"csv written to {args.out}")
    if args.plot_dir:
        from verifbfl.report import ledger_figures, proof_figures

        for path in ledger_figures(results, args.plot_dir) + proof_figures(results, args.plot_dir):
            print(f"figure written to {path}")


def cmd_inspect(args) -> int:
    from verifbfl.fl.dataset import FLAT_MAGIC, load_flat
    from verifbfl.fl.model import MAGIC as MODEL_MAGIC
    from verifbfl.ivc import PROOF_MAGIC, VK_MAGIC, IvcProof, VerifyingKey

    data = Path(args.path).read_bytes()
    if data.startswith(VK_MAGIC):
        vk = VerifyingKey.from_bytes(data)
        s = vk.shape
        print(f"verifying key: level={vk.pp.level} group={vk.pp.group_name} arity={vk.arity} "
              f"constraints={s.num_constraints} witness={s.num_witness} digest={vk.digest.hex()}")
    elif data.startswith(PROOF_MAGIC):
        pr = IvcProof.from_bytes(data)
        print(f"proof: group={pr.group_name} steps={pr.i} vk={pr.vk_digest.hex()} size={len(data)}B")
        print(f"  z0={pr.z0}\n  z_n={pr.z_n}")
    elif data.startswith(MODEL_MAGIC):
        m, p = _load_model(args.path)
        print(f"model: arch={m.arch} dims={list(m.dims)} scale_bits={m.cfg.scale_bits} "
              f"value_bits={m.cfg.value_bits} round={m.round} owner={m.owner!r} params={len(m.flat())} "
              f"digest={m.digest(p)}")
    elif data.startswith(FLAT_MAGIC):
        ds = load_flat(args.path)
        print(f"dataset: samples={len(ds)} features={ds.num_features} classes={ds.num_classes}")
    else:
        raise UsageError(f"{args.path}: unrecognized file type")
    return EXIT_OK


def cmd_demo_data(args) -> int:
    """Writes an eval set, a trained model and local models for the prove commands."""
    import numpy as np

    from verifbfl.algebra.group import group_for_level
    from verifbfl.fl.dataset import Dataset, gaussian_blobs, save_flat
    from verifbfl.fl.train import init_model, local_train

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dims = tuple(args.dims)
    p = group_for_level(args.level).order

    def unit(ds):
        # the flat format stores features in [0, 1] with 8-bit resolution
        f = np.clip((ds.features + 8.0) / 16.0, 0.0, 1.0)
        return Dataset(np.rint(f * 255) / 255, ds.labels, ds.num_classes, ds.client_id, ds.seed)

    eval_set = unit(gaussian_blobs(args.n_eval, dims[0], dims[-1], seed=args.seed + 1, centers_seed=args.seed))
    save_flat(eval_set, out / "eval.vbds")
    start = init_model(dims, args.seed)
    for k in range(args.n_models):
        data = unit(gaussian_blobs(200, dims[0], dims[-1], seed=args.seed + 10 + k, centers_seed=args.seed))
        m = local_train(start, data, epochs=20, lr=0.5, seed=args.seed + k, owner=f"client{k}")
        (out / f"local{k}.vbm").write_bytes(m.with_meta(1, f"client{k}").to_bytes(p))
    (out / "model.vbm").write_bytes((out / "local0.vbm").read_bytes())
    print(f"wrote eval.vbds, model.vbm and {args.n_models} local models to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="verifbfl", description="Verifiable federated learning toolkit")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("run-sim", help="run a simulation scenario")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="INI scenario file")
    src.add_argument("--preset", default="mixed", help="bundled scenario name")
    p.add_argument("--seed", type=_u64)
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--plot-dir", help="render figures here (needs matplotlib)")
    p.set_defaults(fn=cmd_run_sim)

    p = sub.add_parser("prove-accuracy", help="prove a model's accuracy on a dataset file")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="proof file")
    p.add_argument("--vk-out")
    p.add_argument("--statement-out")
    p.add_argument("--trainer", default="cli")
    p.add_argument("--level", choices=("test", "standard"), default="test")
    p.add_argument("--seed", type=_u64, default=0)
    p.set_defaults(fn=cmd_prove_accuracy)

    p = sub.add_parser("prove-aggregation", help="prove a weighted average of model files")
    p.add_argument("--models", nargs="+", required=True)
    p.add_argument("--volumes", type=_int_list)
    p.add_argument("--out", required=True)
    p.add_argument("--vk-out")
    p.add_argument("--statement-out")
    p.add_argument("--global-out")
    p.add_argument("--aggregator", default="cli")
    p.add_argument("--level", choices=("test", "standard"), default="test")
    p.add_argument("--seed", type=_u64, default=0)
    p.set_defaults(fn=cmd_prove_aggregation)

    p = sub.add_parser("verify", help="check a proof against a key and a statement")
    p.add_argument("--vk", required=True)
    p.add_argument("--proof", required=True)
    p.add_argument("--statement", required=True)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("bench-proofs", help="time proving and verification")
    p.add_argument("--dims", type=_int_list, default=[8, 16, 3])
    p.add_argument("--n-eval", type=_int_list, default=[100])
    p.add_argument("--n-models", type=_int_list, default=[5])
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--level", choices=("test", "standard"), default="test")
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--clock", choices=("wall",), default="wall")
    p.add_argument("--out", help="CSV output")
    p.add_argument("--plot-dir")
    p.set_defaults(fn=cmd_bench_proofs)

    p = sub.add_parser("bench-ledger", help="throughput and latency under load")
    p.add_argument("--rate", type=_float_list, default=[25, 50, 75, 100, 125, 150, 200, 300])
    p.add_argument("--ops", type=lambda s: [x.strip() for x in s.split(",")],
                   default=["createTask", "subscribe", "submitLocalUpdate"])
    p.add_argument("--window", type=float, default=60.0)
    p.add_argument("--capacity", type=int, default=100)
    p.add_argument("--period", type=float, default=1.0)
    p.add_argument("--clock", choices=("sim", "wall"), default="sim")
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--out", help="CSV output")
    p.add_argument("--plot-dir")
    p.set_defaults(fn=cmd_bench_ledger)

    p = sub.add_parser("inspect", help="describe a proof, key, model or dataset file")
    p.add_argument("path")
    p.set_defaults(fn=cmd_inspect)

    p = sub.add_parser("demo-data", help="write sample model and dataset files")
    p.add_argument("--out", required=True)
    p.add_argument("--dims", type=_int_list, default=[4, 3])
    p.add_argument("--n-eval", type=int, default=20)
    p.add_argument("--n-models", type=int, default=3)
    p.add_argument("--level", choices=("test", "standard"), default="test")
    p.add_argument("--seed", type=_u64, default=0)
    p.set_defaults(fn=cmd_demo_data)
    return ap


def main(argv=None) -> int:
    level = os.environ.get("VERIFBFL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    from verifbfl.errors import ConfigError, VerifBFLError

    try:
        return args.fn(args)
    except (UsageError, ConfigError) as exc:
        print(f"verifbfl: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (VerifBFLError, OSError, ValueError) as exc:
        print(f"verifbfl: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
