"""Performance harness: proof timings and ledger throughput/latency.

Ledger benchmarks default to a simulated discrete clock, so their numbers
depend only on the configuration.  Proof benchmarks use the wall clock.
Both emit rows with the fixed CSV schema in ``CSV_FIELDS``.
"""
from __future__ import annotations

import csv
import hashlib
import random
import statistics
import threading
import time
from dataclasses import asdict, dataclass, fields
from fractions import Fraction

import numpy as np

from verifbfl.fl.dataset import gaussian_blobs
from verifbfl.fl.fedavg import fedavg
from verifbfl.fl.train import init_model, local_train
from verifbfl.ivc import verify
from verifbfl.ledger.chain import Chain
from verifbfl.ledger.machine import LedgerConfig
from verifbfl.ledger.txs import AGGREGATOR, TRAINER, CreateTask, ResolveVerification, Subscribe, SubmitLocalUpdate
from verifbfl.protocol import (
    TaskDescription,
    accuracy_keys,
    accuracy_statement,
    aggregation_keys,
    aggregation_statement,
    prove_accuracy,
    prove_aggregation,
)

OPS = ("createTask", "subscribe", "submitLocalUpdate")


@dataclass
class BenchResult:
    bench: str  # "ledger" | "proof"
    op: str
    x: float  # send rate (tx/s) or step count
    clock: str = "sim"
    level: str = ""
    repeats: int = 1
    submitted: int = 0
    committed: int = 0
    throughput_tps: float = 0.0
    latency_mean_s: float = 0.0
    latency_p50_s: float = 0.0
    latency_p95_s: float = 0.0
    latency_max_s: float = 0.0
    setup_s: float = 0.0
    prove_s: float = 0.0
    prove_std_s: float = 0.0
    verify_s: float = 0.0
    proof_bytes: int = 0
    constraints: int = 0


CSV_FIELDS = [f.name for f in fields(BenchResult)]


def write_csv(results, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        w.writeheader()
        for r in results:
            w.writerow(asdict(r))


def read_csv(path) -> list:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            kw = {}
            for f in fields(BenchResult):
                v = row[f.name]
                kw[f.name] = v if f.type == "str" else (int(float(v)) if f.type == "int" else float(v))
            out.append(BenchResult(**kw))
    return out


def linear_fit(xs, ys) -> tuple:
    """Least-squares line; returns (slope, intercept, r_squared)."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot else 1.0
    return float(slope), float(intercept), r2


# ---------------------------------------------------------------------------
# ledger
# ---------------------------------------------------------------------------


def _tid(i: int) -> bytes:
    return hashlib.sha256(b"bench-task" + i.to_bytes(8, "little")).digest()


class _Workload:
    """Pre-funded accounts, a warm-up prefix, and a factory for the measured txs."""

    def __init__(self, op: str, count: int, cfg: LedgerConfig):
        if op not in OPS:
            raise ValueError(f"unknown ledger op {op!r}; choose from {', '.join(OPS)}")
        self.op = op
        self.cfg = cfg
        self.genesis = {f"u{i}": 10 * cfg.r_min for i in range(count)}
        self.genesis["publisher"] = 10 * cfg.r_min
        self.genesis["agg"] = 10 * cfg.k_min
        self.warmup = []
        self.task = _tid(10**9)
        model = hashlib.sha256(b"bench-model").digest()
        if op == "subscribe":
            # no aggregator yet, so the task stays open for every trainer
            self.warmup.append(CreateTask("publisher", self.task, cfg.r_min, Fraction(1), count, 1, model))
        elif op == "submitLocalUpdate":
            self.warmup.append(CreateTask("publisher", self.task, cfg.r_min, Fraction(1), count, 1, model))
            self.warmup += [Subscribe(f"u{i}", self.task, TRAINER, cfg.k_min) for i in range(count)]
            self.warmup.append(Subscribe("agg", self.task, AGGREGATOR, cfg.k_min))

    def tx(self, i: int):
        cfg = self.cfg
        if self.op == "createTask":
            return CreateTask(f"u{i}", _tid(i), cfg.r_min, Fraction(1, 2), 1, 1, _tid(i))
        if self.op == "subscribe":
            return Subscribe(f"u{i}", self.task, TRAINER, cfg.k_min)
        h = hashlib.sha256(b"m" + i.to_bytes(8, "little")).digest()
        return SubmitLocalUpdate(f"u{i}", self.task, 1, h, h, 1, 1, 1)


def _callback_listener(block, chain):
    # stands in for the oracle network: every request costs one more tx
    for e in block.events:
        if e.name == "VerificationRequested":
            chain.submit(ResolveVerification(chain.config.oracle_address, e.data["request_id"], True, "ok"),
                         block.timestamp)


def _arrivals(rate: float, window: float, seed: int) -> list:
    """Poisson arrival times in [0, window)."""
    rng = random.Random(seed)
    out, t = [], 0.0
    while True:
        t += rng.expovariate(rate)
        if t >= window:
            return out
        out.append(t)


def _prepare(op, rate, window, capacity, period, seed):
    times = _arrivals(rate, window, seed)
    cfg = LedgerConfig(block_capacity=capacity, block_period=period)
    work = _Workload(op, len(times), cfg)
    chain = Chain(work.genesis, cfg, hash_state=False)
    chain.listeners.append(_callback_listener)
    for tx in work.warmup:
        chain.submit(tx, 0.0)
    while chain.pending():
        chain.produce_block(0.0)
    chain.blocks.clear()
    return times, work, chain


def _measure(op, chain, work, n_sub, clock, rate, capacity, period, window) -> BenchResult:
    lat, done = [], []
    kind = type(work.tx(0))
    for b in chain.blocks:
        for r in b.receipts:
            if isinstance(r.tx, kind) and r.ok:
                lat.append(r.latency)
                done.append(r.completed_at)
    res = BenchResult("ledger", op, rate, clock=clock, submitted=n_sub, committed=len(lat))
    if lat:
        # steady state: commits inside the injection window; the drain afterwards
        # only shows up in latency
        res.throughput_tps = sum(1 for t in done if t <= window) / window
        lat.sort()
        res.latency_mean_s = statistics.fmean(lat)
        res.latency_p50_s = lat[len(lat) // 2]
        res.latency_p95_s = lat[min(len(lat) - 1, int(0.95 * len(lat)))]
        res.latency_max_s = lat[-1]
    return res


def bench_ledger_once(op: str, rate: float, window: float = 60.0, capacity: int = 100, period: float = 1.0,
                      seed: int = 0, clock: str = "sim") -> BenchResult:
    """Inject one transaction stream at ``rate`` tx/s for ``window`` seconds."""
    if rate <= 0 or window <= 0:
        raise ValueError("rate and window must be positive")
    if clock == "wall":
        return _bench_ledger_wall(op, rate, window, capacity, period, seed)
    if clock != "sim":
        raise ValueError("clock must be 'sim' or 'wall'")
    times, work, chain = _prepare(op, rate, window, capacity, period, seed)
    i, k = 0, 0
    while i < len(times) or chain.pending():
        k += 1
        now = k * period
        while i < len(times) and times[i] <= now:
            chain.submit(work.tx(i), times[i])
            i += 1
        chain.produce_block(now)
    return _measure(op, chain, work, len(times), "sim", rate, capacity, period, window)


def _bench_ledger_wall(op, rate, window, capacity, period, seed) -> BenchResult:
    times, work, chain = _prepare(op, rate, window, capacity, period, seed)
    t0 = time.perf_counter()
    finished = threading.Event()

    def generator():
        for i, at in enumerate(times):
            delay = t0 + at - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
            chain.submit(work.tx(i), time.perf_counter() - t0)
        finished.set()

    th = threading.Thread(target=generator, daemon=True)
    th.start()
    k = 0
    while not finished.is_set() or chain.pending():
        k += 1
        delay = t0 + k * period - time.perf_counter()
        if delay > 0:
            time.sleep(delay)
        chain.produce_block(time.perf_counter() - t0)
    th.join()
    return _measure(op, chain, work, len(times), "wall", rate, capacity, period, window)


def bench_ledger(rates, ops=OPS, window: float = 60.0, capacity: int = 100, period: float = 1.0,
                 seed: int = 0, clock: str = "sim") -> list:
    return [bench_ledger_once(op, r, window, capacity, period, seed, clock) for op in ops for r in rates]


def saturation_report(results, capacity: int, period: float = 1.0) -> dict:
    """Plateau and latency shape per op, from a bench_ledger sweep."""
    out = {}
    for op in {r.op for r in results}:
        rows = sorted((r for r in results if r.op == op), key=lambda r: r.x)
        out[op] = {
            "plateau_tps": max(r.throughput_tps for r in rows),
            "capacity_tps": capacity / period,
            "rates": [r.x for r in rows],
            "throughput": [r.throughput_tps for r in rows],
            "latency": [r.latency_mean_s for r in rows],
        }
    return out


# ---------------------------------------------------------------------------
# proofs
# ---------------------------------------------------------------------------


def _timed(fn, *a, **kw):
    t0 = time.perf_counter()
    out = fn(*a, **kw)
    return out, time.perf_counter() - t0


def _key_setup(fn, desc):
    # drop any cached keys so the first call measures shape synthesis and keygen
    from verifbfl import protocol

    with protocol._KEYS_LOCK:
        for k in [k for k in protocol._KEYS if k[0] == fn.__name__.split("_")[0]]:
            del protocol._KEYS[k]
    return _timed(fn, desc)


def bench_accuracy(dims=(8, 16, 3), n_eval: int = 100, repeats: int = 10, level: str = "test",
                   seed: int = 0) -> BenchResult:
    desc = TaskDescription(tuple(dims), level, centers_seed=seed, eval_seed=seed, n_eval=n_eval,
                           label="bench")
    (pk, vk, _), setup_s = _key_setup(accuracy_keys, desc)
    start = init_model(dims, seed, desc.cfg)
    data = gaussian_blobs(200, dims[0], dims[-1], seed=seed, centers_seed=seed)
    model = local_train(start, data, epochs=3, seed=seed, owner="bench")
    task_id, start_addr = b"\x01" * 32, b"\x02" * 32
    prove_t, verify_t, size = [], [], 0
    for k in range(repeats):
        proof, dt = _timed(prove_accuracy, desc, task_id, 1, "bench", start_addr, model, rng=seed + k)
        prove_t.append(dt)
        i, z0, _ = accuracy_statement(desc, task_id, 1, "bench", start_addr, model, 0)
        ok, vt = _timed(verify, vk, i, z0, proof.z_n, proof)
        if not ok:
            raise RuntimeError("honest accuracy proof failed to verify")
        verify_t.append(vt)
        size = len(proof.to_bytes())
    return BenchResult("proof", "prove_accuracy", n_eval, clock="wall", level=level, repeats=repeats,
                       setup_s=setup_s, prove_s=statistics.fmean(prove_t),
                       prove_std_s=statistics.pstdev(prove_t), verify_s=statistics.fmean(verify_t),
                       proof_bytes=size, constraints=pk.shape.num_constraints)


def bench_aggregation(dims=(8, 16, 3), n_models: int = 5, repeats: int = 10, level: str = "test",
                      seed: int = 0) -> BenchResult:
    desc = TaskDescription(tuple(dims), level, label="bench")
    (pk, vk, _), setup_s = _key_setup(aggregation_keys, desc)
    models = [init_model(dims, seed + j, desc.cfg, owner=f"t{j}") for j in range(n_models)]
    volumes = [50 + 10 * j for j in range(n_models)]
    glob = fedavg(models, volumes, round=1, owner="bench")
    prove_t, verify_t, size = [], [], 0
    for k in range(repeats):
        proof, dt = _timed(prove_aggregation, desc, b"\x01" * 32, 1, "bench", models, volumes, rng=seed + k)
        prove_t.append(dt)
        i, z0, z_n = aggregation_statement(desc, b"\x01" * 32, 1, "bench", models, volumes, glob)
        ok, vt = _timed(verify, vk, i, z0, z_n, proof)
        if not ok:
            raise RuntimeError("honest aggregation proof failed to verify")
        verify_t.append(vt)
        size = len(proof.to_bytes())
    return BenchResult("proof", "prove_aggregation", n_models, clock="wall", level=level, repeats=repeats,
                       setup_s=setup_s, prove_s=statistics.fmean(prove_t),
                       prove_std_s=statistics.pstdev(prove_t), verify_s=statistics.fmean(verify_t),
                       proof_bytes=size, constraints=pk.shape.num_constraints)


def bench_proofs(dims=(8, 16, 3), n_eval=100, n_models=5, repeats: int = 10, level: str = "test",
                 seed: int = 0) -> list:
    """Accuracy proofs for each step count in ``n_eval`` and aggregation
    proofs for each count in ``n_models`` (ints or lists)."""
    evals = [n_eval] if isinstance(n_eval, int) else list(n_eval)
    models = [n_models] if isinstance(n_models, int) else list(n_models)
    out = [bench_accuracy(dims, n, repeats, level, seed) for n in evals]
    out += [bench_aggregation(dims, m, repeats, level, seed) for m in models]
    return out
