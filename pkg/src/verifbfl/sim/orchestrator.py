"""End-to-end workflow: publish, subscribe, then train/verify/aggregate rounds,
then rewards, all serialized through one simulated chain.

Participants act between block boundaries.  The clock is discrete: every
produced block advances it by the block period, so a run is a pure function
of (config, seed) apart from the wall-clock timing samples.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from fractions import Fraction

from verifbfl.fl.dp import inference_advantage_bound
from verifbfl.fl.dataset import gaussian_blobs
from verifbfl.fl.model import QuantizedModel
from verifbfl.fl.train import evaluate_accuracy, init_model
from verifbfl.ledger.chain import Chain
from verifbfl.ledger.encoding import to_jsonable
from verifbfl.ledger.machine import ACCEPTED, TERMINAL, Status
from verifbfl.ledger.txs import (
    CreateTask,
    DistributeRewards,
    Subscribe,
    SubmitGlobalModel,
    SubmitLocalUpdate,
)
from verifbfl.oracle import VerificationRequest, check_request, make_network
from verifbfl.protocol import TaskDescription, accuracy_keys, aggregation_keys, prove_accuracy
from verifbfl.sim.behaviors import AGGREGATORS, TRAINERS, AggregatorView, TrainerView, derive_seed
from verifbfl.sim.config import SimulationConfig
from verifbfl.store import ContentStore

log = logging.getLogger(__name__)


@dataclass
class SimulationReport:
    seed: int
    status: str
    rounds: int
    task_id: str
    round_accuracy: dict  # round -> Fraction, the ledger's pooled verified accuracy
    global_accuracy: dict  # round -> Fraction, published global model on that round's eval set
    trainer_accuracy: dict  # round -> {trainer: Fraction} of accepted claims
    verdicts: list
    slashing: list
    promotions: list
    failed_txs: list
    initial_balances: dict
    final_balances: dict
    payouts: dict
    start_models: dict  # round -> {trainer: hex address read at round start}
    timings: dict
    dp_bound: float | None
    state_hash: str
    events: list = field(default_factory=list)

    @property
    def slashed(self) -> list:
        return [s["who"] for s in self.slashing]

    def to_dict(self) -> dict:
        def frac(d):
            return {str(k): float(v) for k, v in d.items()}

        return {
            "seed": self.seed, "status": self.status, "rounds": self.rounds, "task_id": self.task_id,
            "round_accuracy": frac(self.round_accuracy),
            "round_accuracy_exact": {str(k): str(v) for k, v in self.round_accuracy.items()},
            "global_accuracy": frac(self.global_accuracy),
            "trainer_accuracy": {str(r): frac(m) for r, m in self.trainer_accuracy.items()},
            "verdicts": self.verdicts, "slashing": self.slashing, "promotions": self.promotions,
            "failed_txs": self.failed_txs, "initial_balances": self.initial_balances,
            "final_balances": self.final_balances, "payouts": self.payouts,
            "start_models": {str(r): m for r, m in self.start_models.items()},
            "timings": self.timings, "dp_bound": self.dp_bound, "state_hash": self.state_hash,
            "events": self.events,
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    def summary(self) -> str:
        lines = [f"task {self.task_id[:16]} seed {self.seed}: {self.status} after {self.rounds} round(s)"]
        for r in sorted(self.round_accuracy):
            g = self.global_accuracy.get(r)
            extra = f", global model {float(g):.3f}" if g is not None else ""
            lines.append(f"  round {r}: verified accuracy {float(self.round_accuracy[r]):.3f}{extra}")
        for v in self.verdicts:
            lines.append(f"  request {v['request_id']} {v['kind']} by {v['submitter']} (round {v['round']}): "
                         f"{'valid' if v['valid'] else 'invalid'} [{v['reason']}]")
        for s in self.slashing:
            lines.append(f"  slashed {s['who']}: {s['slashed']} tokens ({s['reason']})")
        for p in self.promotions:
            lines.append(f"  aggregator {p} took over")
        for f in self.failed_txs:
            lines.append(f"  rejected tx {f['tx']} from {f['sender']}: {f['error']}")
        lines.append("  balances: " + ", ".join(f"{k}={v}" for k, v in sorted(self.final_balances.items())))
        if self.dp_bound is not None:
            lines.append(f"  membership-inference ceiling under the DP budget: {self.dp_bound:.4f}")
        for k, v in sorted(self.timings.items()):
            if v:
                lines.append(f"  {k}: {len(v)} sample(s), mean {sum(v) / len(v):.3f} s")
        return "\n".join(lines)


class Simulation:
    def __init__(self, cfg: SimulationConfig, store: ContentStore | None = None):
        self.cfg = cfg
        self.store = store if store is not None else ContentStore()
        self.desc = TaskDescription(
            tuple(cfg.dims), cfg.level, centers_seed=derive_seed(cfg.seed, "centers") % 2**32,
            eval_seed=derive_seed(cfg.seed, "eval") % 2**32, n_eval=cfg.n_eval, separation=cfg.separation,
            label=f"sim-{cfg.seed}",
        )
        self.p = self.desc.p
        genesis = {cfg.publisher: cfg.publisher_balance}
        genesis.update({pt.name: pt.balance for pt in cfg.participants})
        self.genesis = genesis
        self.chain = Chain(genesis, cfg.ledger)
        self.oracles = make_network(cfg.oracle_behaviors, self.store, cfg.seed, cfg.ledger.oracle_address)
        self.oracles.attach(self.chain)
        self.now = 0.0
        self.timings = {"prove_accuracy": [], "prove_aggregation": [], "round_wall": []}
        self.start_models: dict = {}
        self.datasets = {
            pt.name: gaussian_blobs(pt.samples or cfg.samples_per_trainer, cfg.dims[0], cfg.dims[-1],
                                    seed=derive_seed(cfg.seed, pt.name, pt.data_seed) % 2**32,
                                    centers_seed=self.desc.centers_seed, separation=cfg.separation,
                                    client_id=pt.name)
            for pt in cfg.trainers
        }
        self.behavior = {pt.name: pt.behavior for pt in cfg.participants}
        self.task_id = b""

    # -- plumbing ---------------------------------------------------------------

    @property
    def ledger(self):
        return self.chain.ledger

    def settle(self) -> None:
        """Produce blocks until the queue (including oracle callbacks) drains."""
        self.now += self.chain.config.block_period
        self.chain.produce_block(self.now)
        while self.chain.pending():
            self.now += self.chain.config.block_period
            self.chain.produce_block(self.now)

    def load_model(self, addr: bytes) -> QuantizedModel:
        model, _ = QuantizedModel.from_bytes(self.store.get(addr))
        return model

    # -- workflow ---------------------------------------------------------------

    def publish(self) -> None:
        cfg = self.cfg
        self.task_id = bytes(self.store.put(self.desc.encode()))
        init = init_model(cfg.dims, derive_seed(cfg.seed, "init") % 2**32, self.desc.cfg, owner=cfg.publisher)
        init_addr = self.store.put(init.to_bytes(self.p))
        # key generation happens off-chain before anyone proves
        accuracy_keys(self.desc)
        aggregation_keys(self.desc)
        self.chain.submit(CreateTask(cfg.publisher, self.task_id, cfg.reward, cfg.target_accuracy,
                                     cfg.n_trainers, cfg.max_rounds, bytes(init_addr)), self.now)
        self.settle()

    def subscribe(self) -> None:
        for pt in self.cfg.trainers + self.cfg.aggregators:
            self.chain.submit(Subscribe(pt.name, self.task_id, pt.role, pt.stake), self.now)
        self.settle()

    def training_round(self) -> bool:
        t = self.ledger.task(self.task_id)
        rnd = t.round
        start_addr = self.ledger.starting_model(self.task_id, rnd)
        start = self.load_model(start_addr)
        subs = t.submissions.get(rnd, {})
        acted = False
        for name in t.live_trainers(self.ledger.blacklist):
            if name in subs:
                continue
            self.start_models.setdefault(rnd, {})[name] = bytes(start_addr).hex()
            view = TrainerView(self.desc, self.task_id, rnd, name, start_addr, start, self.datasets[name],
                               self.cfg.epochs, self.cfg.lr, self.cfg.dp, self.cfg.seed)
            upd = TRAINERS[self.behavior[name]](view)
            for k, v in upd.timings.items():
                self.timings[k].append(v)
            addr = start_addr if upd.reuse_start else self.store.put(upd.model.to_bytes(self.p))
            proof_addr = self.store.put(upd.proof)
            self.chain.submit(SubmitLocalUpdate(name, self.task_id, rnd, bytes(addr), bytes(proof_addr),
                                                upd.z_n, upd.n, upd.volume), self.now)
            acted = True
        return acted

    def aggregation_round(self) -> bool:
        t = self.ledger.task(self.task_id)
        if t.aggregation_request is not None or not t.aggregators:
            return False
        name = t.aggregators[0]
        accepted = self.ledger.accepted_updates(self.task_id, t.round)
        view = AggregatorView(self.desc, self.task_id, t.round, name,
                              [self.load_model(s.model_address) for s in accepted],
                              [s.volume for s in accepted], self.cfg.seed)
        upd = AGGREGATORS[self.behavior[name]](view)
        for k, v in upd.timings.items():
            self.timings[k].append(v)
        addr = self.store.put(upd.model.to_bytes(self.p))
        proof_addr = self.store.put(upd.proof)
        self.chain.submit(SubmitGlobalModel(name, self.task_id, t.round, bytes(addr), bytes(proof_addr)), self.now)
        return True

    def run(self) -> SimulationReport:
        self.publish()
        self.subscribe()
        t = self.ledger.task(self.task_id)
        if t.status == Status.OPEN:
            raise RuntimeError("subscriptions did not open the task")
        # each round needs at most: trainers, then one try per aggregator
        budget = self.cfg.max_rounds * (2 + len(self.cfg.aggregators)) + 2
        while t.status not in TERMINAL and budget > 0:
            budget -= 1
            t0 = time.perf_counter()
            if t.status == Status.TRAINING:
                acted = self.training_round()
            else:
                acted = self.aggregation_round()
            if not acted:
                break
            self.settle()
            self.timings["round_wall"].append(time.perf_counter() - t0)
            t = self.ledger.task(self.task_id)
        if t.status in TERMINAL:
            self.chain.submit(DistributeRewards(self.cfg.publisher, self.task_id), self.now)
            self.settle()
        else:
            log.warning("task stalled in status %s", t.status.value)
        return self.report()

    # -- report -----------------------------------------------------------------

    def report(self) -> SimulationReport:
        led = self.ledger
        t = led.task(self.task_id)
        verdicts, slashing, promotions, failed, events = [], [], [], [], []
        payouts = {}
        for b in self.chain.blocks:
            for r in b.receipts:
                if not r.ok:
                    failed.append({"height": b.height, "tx": type(r.tx).__name__, "sender": r.tx.sender,
                                   "error": r.error})
                for e in r.events:
                    events.append({"height": b.height, "name": e.name, "data": to_jsonable(e.data)})
                    if e.name == "Blacklisted":
                        slashing.append({"who": e.data["who"], "slashed": e.data["slashed"],
                                         "reason": e.data["reason"], "height": b.height})
                    elif e.name == "AggregatorPromoted":
                        promotions.append(e.data["who"])
                    elif e.name == "RewardsDistributed":
                        payouts = dict(e.data["payouts"])
        for rid, res in sorted(self.oracles.resolutions.items()):
            req = res.request
            verdicts.append({"request_id": rid, "kind": req.kind, "round": req.round, "submitter": req.submitter,
                             "valid": res.valid, "reason": res.reason})
        global_acc = {}
        for rnd, addr in t.global_models.items():
            c, n = evaluate_accuracy(self.load_model(addr), self.desc.eval_samples(rnd))
            global_acc[rnd] = Fraction(c, n)
        trainer_acc = {
            rnd: {w: Fraction(s.z_n, s.n) for w, s in subs.items() if s.status == ACCEPTED}
            for rnd, subs in t.submissions.items()
        }
        names = sorted(self.genesis)
        return SimulationReport(
            seed=self.cfg.seed, status=t.status.value, rounds=t.round, task_id=self.task_id.hex(),
            round_accuracy=dict(t.round_accuracy), global_accuracy=global_acc, trainer_accuracy=trainer_acc,
            verdicts=verdicts, slashing=slashing, promotions=promotions, failed_txs=failed,
            initial_balances=dict(self.genesis), final_balances={k: led.balance(k) for k in names},
            payouts=payouts, start_models=dict(self.start_models), timings=self.timings,
            dp_bound=inference_advantage_bound(self.cfg.dp.epsilon) if self.cfg.dp else None,
            state_hash=led.state_hash().hex(), events=events,
        )


def run(cfg: SimulationConfig, store: ContentStore | None = None) -> SimulationReport:
    return Simulation(cfg, store).run()


def check_report(report: SimulationReport, chain: Chain) -> list:
    """Cross-checks a report against the chain's event log; returns the mismatches."""
    problems = []
    names = [e.name for b in chain.blocks for e in b.events]
    if names.count("Blacklisted") != len(report.slashing):
        problems.append("slashing count differs from Blacklisted events")
    resolved = [e.data for b in chain.blocks for e in b.events if e.name == "VerificationResolved"]
    by_id = {v["request_id"]: v["valid"] for v in report.verdicts}
    for d in resolved:
        if by_id.get(d["request_id"]) != d["valid"]:
            problems.append(f"verdict for request {d['request_id']} differs")
    published = {e.data["round"]: e.data["accuracy"] for b in chain.blocks for e in b.events
                 if e.name == "GlobalModelPublished"}
    if published != report.round_accuracy:
        problems.append("round accuracies differ from GlobalModelPublished events")
    for who, bal in report.final_balances.items():
        if chain.ledger.balance(who) != bal:
            problems.append(f"balance of {who} differs")
    if chain.ledger.state_hash().hex() != report.state_hash:
        problems.append("state hash differs")
    if len(set(chain.supply_history)) > 1:
        problems.append("token supply changed across blocks")
    for rnd, reads in report.start_models.items():
        if len(set(reads.values())) > 1:
            problems.append(f"trainers read different start models in round {rnd}")
        expected = chain.ledger.starting_model(bytes.fromhex(report.task_id), rnd).hex()
        if any(a != expected for a in reads.values()):
            problems.append(f"round {rnd} start model is not the published global model")
    return problems


@dataclass
class AttackStats:
    trials: int = 0
    inflated_rejected: int = 0
    reuse_rejected: int = 0
    control_accepted: int = 0

    @property
    def forgeries_accepted(self) -> int:
        return 2 * self.trials - self.inflated_rejected - self.reuse_rejected

    def to_dict(self) -> dict:
        return {"trials": self.trials, "inflated_rejected": self.inflated_rejected,
                "reuse_rejected": self.reuse_rejected, "control_accepted": self.control_accepted,
                "forgeries_accepted": self.forgeries_accepted}


def attack_eval(cfg: SimulationConfig, trials: int = 200, first_seed: int = 0) -> AttackStats:
    """Per seed: an honest trainer proves its update; the forger then (a) inflates
    the counter by one over that proof, (b) submits the same model and proof
    under its own name.  The honest statement is the control."""
    from verifbfl.fl.train import local_train

    stats = AttackStats()
    store = ContentStore()
    for seed in range(first_seed, first_seed + trials):
        desc = TaskDescription(tuple(cfg.dims), cfg.level, centers_seed=seed, eval_seed=seed, n_eval=cfg.n_eval,
                               separation=cfg.separation, label=f"attack-{seed}")
        task_id = bytes(store.put(desc.encode()))
        start = init_model(cfg.dims, seed, desc.cfg, owner="publisher")
        start_addr = bytes(store.put(start.to_bytes(desc.p)))
        data = gaussian_blobs(cfg.samples_per_trainer, cfg.dims[0], cfg.dims[-1], seed=seed,
                              centers_seed=seed, separation=cfg.separation)
        model = local_train(start, data, cfg.epochs, cfg.lr, seed=seed, owner="honest").with_meta(1, "honest")
        correct, n = evaluate_accuracy(model, desc.eval_samples(1))
        proof = prove_accuracy(desc, task_id, 1, "honest", start_addr, model, rng=seed)
        m_addr = bytes(store.put(model.to_bytes(desc.p)))
        p_addr = bytes(store.put(proof.to_bytes()))

        def req(who, z):
            return VerificationRequest(seed, "accuracy", task_id, 1, who, m_addr, p_addr, z, n, start_addr)

        stats.trials += 1
        # a full-marks model cannot go higher; claiming a lower count is the same forgery
        inflated = correct + 1 if correct < n else correct - 1
        stats.inflated_rejected += not check_request(req("honest", inflated), store)[0]
        stats.reuse_rejected += not check_request(req("forger", correct), store)[0]
        stats.control_accepted += check_request(req("honest", correct), store)[0]
    return stats
