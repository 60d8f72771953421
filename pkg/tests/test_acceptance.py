"""Acceptance criteria, one test each.  Every test prints a PASS or FAIL line.

The security level comes from VERIFBFL_ACCEPTANCE_LEVEL (default ``test``).
"""
import contextlib
import dataclasses
import math
import os
import random
import statistics
import time
from fractions import Fraction

import numpy as np
import pytest

from _circuits import CubeStep
from _ledger_fuzz import run_sequence, statuses_reached
from _tamper import tamper_variants
from verifbfl.algebra.commitment import commit
from verifbfl.algebra.group import TEST_GROUP
from verifbfl.algebra.transcript import Transcript
from verifbfl.bench import bench_accuracy, bench_ledger, linear_fit, saturation_report
from verifbfl.circuits.inference import accuracy_from_counter
from verifbfl.fl.dataset import gaussian_blobs
from verifbfl.fl.dp import DpParams, add_dp_noise, clip_quantized, inference_advantage_bound, laplace_samples
from verifbfl.fl.fedavg import fedavg
from verifbfl.fl.train import evaluate_accuracy, init_model, local_train
from verifbfl.ivc import build_shape, commitment_key, fold, keygen, prove, setup, verify
from verifbfl.oracle import OracleNode, Report, VerificationRequest, check_request, quorum_resolve
from verifbfl.protocol import (
    TaskDescription,
    accuracy_keys,
    accuracy_statement,
    aggregation_keys,
    aggregation_statement,
    prove_accuracy,
    prove_aggregation,
)
from verifbfl.r1cs import RelaxedInstance, RelaxedWitness, is_satisfied
from verifbfl.sim import Simulation, check_report, preset
from verifbfl.store import ContentStore

LEVEL = os.environ.get("VERIFBFL_ACCEPTANCE_LEVEL", "test")
DIMS = (4, 8, 3)
DESC = TaskDescription(DIMS, LEVEL, centers_seed=11, eval_seed=12, n_eval=100, label="acceptance")
TASK_ID, START_ADDR = b"\x0a" * 32, b"\x0b" * 32


@contextlib.contextmanager
def criterion(capsys, n, what):
    t0 = time.perf_counter()
    try:
        yield
    except BaseException:
        with capsys.disabled():
            print(f"\nFAIL criterion {n}: {what}")
        raise
    with capsys.disabled():
        print(f"\nPASS criterion {n}: {what} ({time.perf_counter() - t0:.1f}s)")


def _train(seed, data_seed, owner):
    start = init_model(DIMS, seed, DESC.cfg)
    data = gaussian_blobs(150, DIMS[0], DIMS[-1], seed=data_seed, centers_seed=DESC.centers_seed)
    return local_train(start, data, epochs=4, lr=0.2, seed=seed, owner=owner).with_meta(round=1, owner=owner)


@pytest.fixture(scope="module")
def accuracy_run():
    model = _train(1, 2, "alice")
    t0 = time.perf_counter()
    proof = prove_accuracy(DESC, TASK_ID, 1, "alice", START_ADDR, model, rng=3)
    prove_s = time.perf_counter() - t0
    return dict(model=model, proof=proof, prove_s=prove_s)


def test_criterion_1_accuracy_fidelity(accuracy_run, capsys):
    with criterion(capsys, 1, "proved counter equals plaintext accuracy on 100 samples"):
        model, proof = accuracy_run["model"], accuracy_run["proof"]
        correct, n = evaluate_accuracy(model, DESC.eval_samples(1))
        assert n == 100 and 0 < correct <= n
        assert proof.z_n[0] == correct
        assert accuracy_from_counter(proof.z_n[0], n) == Fraction(correct, n)
        _, vk, _ = accuracy_keys(DESC)
        i, z0, z_n = accuracy_statement(DESC, TASK_ID, 1, "alice", START_ADDR, model, correct)
        assert verify(vk, i, z0, z_n, proof)
        assert accuracy_run["prove_s"] < 600


def test_criterion_2_aggregation_fidelity(capsys):
    with criterion(capsys, 2, "proved global digest equals fedavg over 5 models"):
        models = [_train(10 + k, 20 + k, f"t{k}") for k in range(5)]
        volumes = [40, 75, 90, 120, 150]
        t0 = time.perf_counter()
        proof = prove_aggregation(DESC, TASK_ID, 1, "agg", models, volumes, rng=4)
        elapsed = time.perf_counter() - t0
        glob = fedavg(models, volumes, round=1, owner="agg")
        assert proof.z_n[1] == glob.digest(DESC.p)
        _, vk, _ = aggregation_keys(DESC)
        i, z0, z_n = aggregation_statement(DESC, TASK_ID, 1, "agg", models, volumes, glob)
        assert i == 5 and verify(vk, i, z0, z_n, proof)
        assert elapsed < 120


def test_criterion_3_soundness_battery(accuracy_run, capsys):
    with criterion(capsys, 3, "tampered proofs are never accepted"):
        rng = random.Random(2024)
        counts, accepted = {}, 0

        def check(kind, ok):
            nonlocal accepted
            counts[kind] = counts.get(kind, 0) + 1
            accepted += bool(ok)

        # real accuracy circuit
        model, proof = accuracy_run["model"], accuracy_run["proof"]
        _, acc_vk, _ = accuracy_keys(DESC)
        i, z0, z_n = accuracy_statement(DESC, TASK_ID, 1, "alice", START_ADDR, model, proof.z_n[0])
        for _ in range(6):
            for kind, bad in tamper_variants(proof, DESC.p, rng, DESC.group):
                check(kind, verify(acc_vk, bad.i, z0, bad.z_n, bad))
                check(kind, verify(acc_vk, i, z0, z_n, bad))

        # many short proofs over a small step circuit
        circuit = CubeStep(TEST_GROUP.order)
        shape = build_shape(circuit, TEST_GROUP.order)
        pk, vk = keygen(setup("test", shape), shape)
        for trial in range(30):
            ws = [rng.randrange(100) for _ in range(rng.randint(1, 5))]
            z0c = [rng.randrange(100), rng.randrange(100)]
            honest = prove(pk, circuit, z0c, ws, rng=trial)
            for kind, bad in tamper_variants(honest, TEST_GROUP.order, rng):
                check(kind, verify(vk, bad.i, z0c, bad.z_n, bad))
                check(kind, verify(vk, len(ws), z0c, honest.z_n, bad))

        # cross-vk: a valid proof under the wrong key
        _, agg_vk, _ = aggregation_keys(DESC)
        check("cross-vk", verify(agg_vk, i, z0, z_n, proof))
        other_desc = TaskDescription((4, 3), LEVEL, n_eval=100)
        _, other_vk, _ = accuracy_keys(other_desc)
        check("cross-vk", verify(other_vk, i, z0, z_n, proof))
        for trial in range(10):
            honest = prove(pk, circuit, [trial, 1], [trial], rng=trial)
            check("cross-vk", verify(acc_vk, 1, [trial, 1], honest.z_n, honest))

        # cross-trainer reuse and counter inflation through the oracle check
        store = ContentStore()
        tid = store.put(DESC.encode())
        start = store.put(init_model(DIMS, 1, DESC.cfg).to_bytes(DESC.p))
        honest_proof = prove_accuracy(DESC, tid, 1, "alice", start, model, rng=5)
        m_addr, p_addr = store.put(model.to_bytes(DESC.p)), store.put(honest_proof.to_bytes())
        correct = honest_proof.z_n[0]
        base = VerificationRequest(1, "accuracy", tid, 1, "alice", m_addr, p_addr, correct, 100, start)
        assert check_request(base, store) == (True, "ok")
        for who in ("bob", "carol", "mallory", "alice "):
            r = VerificationRequest(1, "accuracy", tid, 1, who, m_addr, p_addr, correct, 100, start)
            check("cross-trainer", check_request(r, store)[0])
        for rnd in (0, 2, 3):
            r = VerificationRequest(1, "accuracy", tid, rnd, "alice", m_addr, p_addr, correct, 100, start)
            check("cross-round", check_request(r, store)[0])
        for z in {0, correct - 1, correct + 1, 100} - {correct}:
            r = VerificationRequest(1, "accuracy", tid, 1, "alice", m_addr, p_addr, z, 100, start)
            check("z_n", check_request(r, store)[0])

        total = sum(counts.values())
        with capsys.disabled():
            print(f"\n  tampered proofs by kind: {dict(sorted(counts.items()))}, total {total}")
        assert total >= 500
        assert {"witness", "z_n", "transcript", "reorder", "deletion", "cross-vk", "cross-trainer"} <= set(counts)
        assert accepted == 0


def test_criterion_4_folding_properties(capsys):
    with criterion(capsys, 4, "folding keeps satisfiability and commitments are homomorphic"):
        p = TEST_GROUP.order
        shape = build_shape(CubeStep(p), p)
        ck = commitment_key(TEST_GROUP, max(shape.num_witness, shape.num_constraints))
        rng = random.Random(4)

        def random_relaxed():
            u = rng.randrange(p)
            x = [rng.randrange(p) for _ in range(shape.num_io)]
            W = [rng.randrange(p) for _ in range(shape.num_witness)]
            Az, Bz, Cz = shape.products(shape.z_vector(u, x, W))
            E = [(a * b - u * c) % p for a, b, c in zip(Az, Bz, Cz)]
            bw, be = rng.randrange(p), rng.randrange(p)
            return RelaxedInstance(commit(ck, W, bw), commit(ck, E, be), u, x), RelaxedWitness(W, E, bw, be)

        for _ in range(1000):
            pair1, pair2 = random_relaxed(), random_relaxed()
            assert is_satisfied(shape, *pair1, ck) and is_satisfied(shape, *pair2, ck)
            _, (inst, wit), _ = fold(shape, ck, pair1, pair2, Transcript(b"acceptance"), rng=rng)
            assert is_satisfied(shape, inst, wit, ck)

        n = 16
        hck = commitment_key(TEST_GROUP, n)
        for _ in range(1000):
            v = [rng.randrange(p) for _ in range(n)]
            w = [rng.randrange(p) for _ in range(n)]
            r1, r2, k = rng.randrange(p), rng.randrange(p), rng.randrange(p)
            lhs = TEST_GROUP.add(commit(hck, v, r1), TEST_GROUP.mul(commit(hck, w, r2), k))
            assert lhs == commit(hck, [(a + k * b) % p for a, b in zip(v, w)], (r1 + k * r2) % p)


def test_criterion_5_dp_mechanism(capsys):
    with criterion(capsys, 5, "Laplace variance, clipping and advantage bound"):
        for delta, eps in ((1.0, 1.0), (4.0, 20.0), (0.5, 0.1)):
            b = delta / eps
            draws = laplace_samples(b, 100_000, np.random.default_rng(int(eps * 1000)))
            var = float(np.var(draws))
            assert abs(var / (2 * b * b) - 1) < 0.05, (delta, eps, var)

        rng = np.random.default_rng(5)
        for _ in range(200):
            clip_q = int(rng.integers(1, 1 << 20))
            v = rng.integers(-(1 << 31), 1 << 31, size=64)
            assert np.abs(clip_quantized(v, clip_q)).max() <= clip_q
        model = _train(1, 2, "alice")
        clip = 0.05
        for seed in range(20):
            quiet = add_dp_noise(model, DpParams(1e12, clip), seed)
            assert max(abs(v) for v in quiet.flat()) <= round(clip * DESC.cfg.one)

        assert inference_advantage_bound(0) == 0.5
        assert inference_advantage_bound(math.log(3)) == 0.75


def test_criterion_6_ledger_conservation(capsys):
    with criterion(capsys, 6, "supply, transitions and replay over 10^4 random sequences"):
        problems, reached = [], set()
        for seed in range(10_000):
            found, chain = run_sequence(seed, length=30)
            problems += found
            if len(reached) < 5:
                reached |= statuses_reached(chain)
        assert problems == [], problems[:5]
        assert len(reached) == 5


def test_criterion_7_quorum_faithfulness(capsys):
    with criterion(capsys, 7, "exhaustive quorum for N <= 7 and the N=3 boundary"):
        import itertools

        req = VerificationRequest(1, "accuracy", b"t" * 32, 1, "x", b"m" * 32, b"p" * 32)
        byz = ("always-accept", "always-reject", "random", "silent")
        cases = 0
        for truth in (True, False):
            class Fixed(OracleNode):
                def report(self, r, store):
                    if self.behavior == "honest":
                        return Report(r.request_id, self.node_id, truth, "")
                    return super().report(r, store)

            for n in range(1, 8):
                for k in range((n - 1) // 3 + 1):
                    for subset in itertools.combinations(range(n), k):
                        for kinds in itertools.product(byz, repeat=k):
                            behaviors = ["honest"] * n
                            for i, b in zip(subset, kinds):
                                behaviors[i] = b
                            reports = [Fixed(f"n{i}", b, seed=i).report(req, None)
                                       for i, b in enumerate(behaviors)]
                            assert quorum_resolve(reports, n) is truth, (n, behaviors, truth)
                            cases += 1
        assert not quorum_resolve([True, True, False], 3)
        assert not quorum_resolve([True, True, None], 3)
        assert quorum_resolve([True, True, True], 3)
        with capsys.disabled():
            print(f"\n  quorum cases checked: {cases}")


def test_criterion_8_accountability(capsys):
    with criterion(capsys, 8, "mixed scenario slashes each adversary once over 20 seeds"):
        base = preset("mixed")
        adversaries = {p.name for p in base.participants if p.behavior != "honest"}
        honest = {p.name for p in base.participants if p.behavior == "honest"}
        assert adversaries == {"mallory", "trent", "lazy"}
        for seed in range(20):
            cfg = dataclasses.replace(preset("mixed", seed=seed), n_eval=8)
            sim = Simulation(cfg)
            report = sim.run()
            assert check_report(report, sim.chain) == [], seed
            assert sorted(report.slashed) == sorted(adversaries), (seed, report.slashed)
            blacklisted = [e["data"]["who"] for e in report.events if e["name"] == "Blacklisted"]
            assert sorted(blacklisted) == sorted(adversaries)
            assert not honest & set(report.slashed)
            assert report.promotions == ["backup"] and report.status == "Completed", (seed, report.status)
            if seed % 5 == 0:
                assert Simulation(cfg).run().state_hash == report.state_hash


def test_criterion_9_benchmark_shape(capsys):
    with criterion(capsys, 9, "ledger plateau and latency shape, linear prove time"):
        cap = 100
        rates = [25, 50, 100, 150, 200, 300]
        rows = bench_ledger(rates, ("createTask", "submitLocalUpdate"), window=30, capacity=cap)
        rep = saturation_report(rows, cap)
        ct, slu = rep["createTask"], rep["submitLocalUpdate"]
        assert abs(ct["plateau_tps"] / cap - 1) <= 0.05
        assert slu["plateau_tps"] < ct["plateau_tps"]
        lat = dict(zip(ct["rates"], ct["latency"]))
        below = (lat[100] - lat[25]) / 75
        above = (lat[300] - lat[150]) / 150
        # flat until capacity, then a much steeper rise
        assert lat[25] <= 2 and lat[50] <= 2
        assert lat[100] < lat[150] < lat[200] < lat[300]
        assert above > 10 * max(below, 1e-3)
        assert lat[300] > 10 * lat[100]

        steps = [10, 25, 50, 100]
        proofs = [bench_accuracy(DIMS, n, repeats=1, level=LEVEL) for n in steps]
        slope, icpt, r2 = linear_fit(steps, [r.prove_s for r in proofs])
        with capsys.disabled():
            print(f"\n  plateau createTask {ct['plateau_tps']:.1f}/s submitLocalUpdate {slu['plateau_tps']:.1f}/s;"
                  f" latency s at {rates}: {[round(v, 2) for v in ct['latency']]}")
            print(f"  prove time per step {slope:.3f}s, R^2 {r2:.4f}")
        assert slope > 0 and r2 >= 0.95
        test_criterion_9_benchmark_shape.proofs = proofs


def test_criterion_10_proof_size_and_verify_time(accuracy_run, capsys):
    with criterion(capsys, 10, "proof size and verify time reported"):
        proofs = getattr(test_criterion_9_benchmark_shape, "proofs", None)
        if proofs is None:
            proofs = [bench_accuracy(DIMS, n, repeats=1, level=LEVEL) for n in (10, 50)]
        _, vk, _ = accuracy_keys(DESC)
        proof, model = accuracy_run["proof"], accuracy_run["model"]
        i, z0, z_n = accuracy_statement(DESC, TASK_ID, 1, "alice", START_ADDR, model, proof.z_n[0])
        times = []
        for _ in range(3):
            t0 = time.perf_counter()
            assert verify(vk, i, z0, z_n, proof)
            times.append(time.perf_counter() - t0)
        with capsys.disabled():
            for r in proofs:
                print(f"\n  {r.x:4d} steps: {r.proof_bytes} bytes, verify {r.verify_s:.3f}s,"
                      f" {r.constraints} constraints/step", end="")
            print(f"\n  100-step proof: {len(proof.to_bytes())} bytes, verify {statistics.fmean(times):.3f}s")
        sizes = [r.proof_bytes for r in proofs]
        assert sizes == sorted(sizes) and all(s > 0 for s in sizes)
