"""Round-based simulation of decentralized training under attack.

Plaintext rules run Alg.-1-style neighbour averaging in the clear; the
``securedl`` rule secret-shares every client's update among all ``n``
clients and runs one aggregation instance per receiver over the shares.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .aggregation import (AggregationRule, krum_aggregate, mean_aggregate, median_aggregate,
                          mozi_aggregate, securedl_aggregate, trimmed_mean_aggregate)
from .attacks import AttackSpec, label_flip, poison_update
from .dealer import Dealer, DealerBudget
from .errors import ConfigError
from .learning import (Dataset, Hyperparams, MlpModel, clip_update, iid_partition, load_mnist,
                       local_update, synth_blobs)
from .linalg import NORM_FLOOR, SecureLinalg
from .mpc import NR_ITERATIONS, Protocol, compare_triple_cost
from .ring import FixedPointCodec
from .sharing import share_tensor
from .transport import Transport

log = logging.getLogger(__name__)

DEFAULT_DATA_DIR = Path(__file__).resolve().parents[2] / "data" / "mnist-subset"

CSV_COLUMNS = ["round", "mean_acc", "min_acc", "max_acc", "loss", "rejected_count",
               "t_cosine_ms", "t_compare_ms", "t_norm_ms"]

# stream tags for np.random.default_rng([seed, tag, ...])
_INIT, _TRAIN, _ATTACK, _MOZI = 0, 1, 2, 3


@dataclass
class SimConfig:
    n_clients: int = 10
    n_byzantine: int = 0
    byzantine_ids: list | None = None  # default: the last n_byzantine ids
    attack: str = "none"
    attack_scale: float = 100.0
    noise_mean: float = 0.1
    noise_var: float = 0.1
    combination: list = field(default_factory=lambda: ["lf", "sf", "sa", "noise"])
    rule: str = "mean"
    tau: float = 0.0
    trim: int | None = None  # default: n_byzantine
    krum_f: int | None = None  # default: n_byzantine
    mozi_rho: float = 0.5
    mozi_batch: int = 64
    divide_by_accepted: bool = False
    byzantine_aggregate: bool = True  # False: byzantine clients keep their own trained model
    dataset: str = "synth"
    partition: str = "iid"  # "replicate" gives every client the full training set
    data_dir: str | None = None
    n_train: int | None = None
    n_test: int | None = None
    synth_dim: int = 20
    synth_classes: int = 4
    lr: float = 0.01
    batch_size: int = 128
    local_epochs: int = 1
    clip: float = 1.0
    hidden: int = 32
    rounds: int = 20
    seed: int = 0
    frac_bits: int = 16
    value_bits: int = 32
    norm_floor: float = NORM_FLOOR
    nr_iters: int = NR_ITERATIONS
    timing: bool = True
    workers: int = 1
    adjacency: list | None = None  # per-client neighbour lists for plaintext rules
    transcript_words: int = 0  # masked openings kept for dumping, per kind
    out: str | None = None  # CSV path; JSON summary goes next to it

    @classmethod
    def from_dict(cls, data: dict) -> "SimConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @property
    def byzantine(self) -> tuple:
        if self.byzantine_ids is not None:
            return tuple(int(i) for i in self.byzantine_ids)
        return tuple(range(self.n_clients - self.n_byzantine, self.n_clients))

    @property
    def honest(self) -> list[int]:
        bad = set(self.byzantine)
        return [i for i in range(self.n_clients) if i not in bad]

    def attack_spec(self) -> AttackSpec:
        return AttackSpec(self.attack, self.byzantine, self.noise_mean, self.noise_var,
                          self.attack_scale, tuple(self.combination))

    def aggregation_rule(self) -> AggregationRule:
        return AggregationRule(
            tag=self.rule, tau=self.tau,
            trim=self.n_byzantine if self.trim is None else self.trim,
            byzantine_f=self.n_byzantine if self.krum_f is None else self.krum_f,
            mozi_rho=self.mozi_rho, mozi_batch=self.mozi_batch,
            divide_by_accepted=self.divide_by_accepted,
        )

    def hyperparams(self) -> Hyperparams:
        return Hyperparams(lr=self.lr, batch_size=self.batch_size, local_epochs=self.local_epochs,
                           clip=self.clip, hidden=self.hidden)

    def codec(self) -> FixedPointCodec:
        return FixedPointCodec(self.frac_bits, self.value_bits)

    def neighbours(self) -> list[list[int]]:
        if self.adjacency is None or self.rule == "securedl":
            return [[j for j in range(self.n_clients) if j != i] for i in range(self.n_clients)]
        return [sorted(set(int(j) for j in nb) - {i}) for i, nb in enumerate(self.adjacency)]

    def validate(self) -> None:
        n = self.n_clients
        if n < 2:
            raise ConfigError("need at least two clients")
        if self.byzantine_ids is None and not 0 <= self.n_byzantine <= n:
            raise ConfigError(f"byzantine count {self.n_byzantine} outside [0, {n}]")
        if self.rounds < 0:
            raise ConfigError("rounds must be non-negative")
        if self.dataset not in ("synth", "mnist"):
            raise ConfigError(f"unknown dataset {self.dataset!r}")
        if self.partition not in ("iid", "replicate"):
            raise ConfigError(f"unknown partition {self.partition!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.adjacency is not None:
            if len(self.adjacency) != n:
                raise ConfigError("adjacency needs one neighbour list per client")
            for nb in self.adjacency:
                if any(not 0 <= int(j) < n for j in nb):
                    raise ConfigError("adjacency references unknown client ids")
        self.attack_spec().validate(n)
        if self.attack != "none" and not self.byzantine:
            raise ConfigError(f"attack {self.attack!r} needs at least one byzantine client")
        self.hyperparams().validate()
        try:
            self.codec()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        # krum/bridge see every neighbour plus the receiver itself
        group = min(len(nb) for nb in self.neighbours()) + 1
        self.aggregation_rule().validate(group)


@dataclass
class RoundMetrics:
    round: int
    accuracies: list  # per honest client, in config.honest order
    mean_acc: float
    min_acc: float
    max_acc: float
    loss: float
    rejected_count: int
    accept: list  # n x (n-1): 1 accept, 0 reject, -1 not evaluated
    timings_ms: dict
    dealer_used: dict

    def csv_row(self, timing: bool = True) -> list:
        t = self.timings_ms if timing else {}
        return [self.round, f"{self.mean_acc:.6f}", f"{self.min_acc:.6f}", f"{self.max_acc:.6f}",
                f"{self.loss:.6f}", self.rejected_count,
                f"{t.get('cosine', 0.0):.3f}", f"{t.get('compare', 0.0):.3f}",
                f"{t.get('normalize', 0.0):.3f}"]


@dataclass
class RunResult:
    config: SimConfig
    metrics: list
    models: list
    dealer_budget: dict | None = None
    dealer_used: dict | None = None
    transport: Transport | None = None
    wall_seconds: float = 0.0

    @property
    def final_accuracy(self) -> float:
        return self.metrics[-1].mean_acc if self.metrics else float("nan")

    def summary(self) -> dict:
        out = {
            "final_mean_acc": self.final_accuracy,
            "rounds": len(self.metrics),
            "wall_seconds": round(self.wall_seconds, 3),
            "dealer_budget": self.dealer_budget,
            "dealer_used": self.dealer_used,
        }
        if self.transport is not None:
            out["transport"] = self.transport.stats()
        return out


# -- data --------------------------------------------------------------------------------

def load_data(config: SimConfig) -> tuple[Dataset, Dataset]:
    if config.dataset == "mnist":
        directory = Path(config.data_dir) if config.data_dir else DEFAULT_DATA_DIR
        train = load_mnist(directory, "train", config.n_train)
        test = load_mnist(directory, "test", config.n_test)
        return train, test
    n_train = config.n_train or 200 * config.n_clients
    n_test = config.n_test or 1000
    train = synth_blobs(n_train, config.synth_dim, config.synth_classes, seed=config.seed * 2 + 1)
    test = synth_blobs(n_test, config.synth_dim, config.synth_classes, seed=config.seed * 2 + 2, split="test")
    return train, test


# -- preprocessing demand ----------------------------------------------------------------

def round_demand(linalg: SecureLinalg, receivers: int, senders: int) -> DealerBudget:
    """Upper bound on dealer items per round (every sender assumed accepted)."""
    per_receiver = (
        linalg.cosine_cost(senders, 1)
        + DealerBudget(triple=senders * compare_triple_cost(), edabit=senders)
        + linalg.normalize_cost(senders, 1)
        + DealerBudget(trunc_pair=linalg.d)
    )
    return per_receiver * receivers


# -- simulation --------------------------------------------------------------------------

def _git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True,
                             text=True, cwd=Path(__file__).resolve().parent, timeout=5)
        return out.stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def train_round(model: MlpModel, models, shards, hyper: Hyperparams, seed: int, r: int,
                flipped: dict | None = None, pool: ThreadPoolExecutor | None = None) -> list:
    """Local SGD for every client; each draws from its own (seed, round, client) stream."""
    flipped = flipped or {}

    def one(i: int) -> np.ndarray:
        rng = np.random.default_rng([seed, _TRAIN, r, i])
        return local_update(model, models[i], shards[i], hyper, rng, labels=flipped.get(i))

    if pool is None:
        return [one(i) for i in range(len(models))]
    return list(pool.map(one, range(len(models))))


def run(config: SimConfig, on_round: Callable[[RoundMetrics], None] | None = None,
        data: tuple[Dataset, Dataset] | None = None) -> RunResult:
    config.validate()
    t_start = time.perf_counter()
    train, test = data if data is not None else load_data(config)
    n = config.n_clients
    hyper = config.hyperparams()
    model = MlpModel(train.n_features, hyper.hidden, train.n_classes)
    if config.partition == "replicate":
        shards = [train] * n
    else:
        shards = iid_partition(train, n, seed=config.seed)
    spec = config.attack_spec()
    rule = config.aggregation_rule()
    byzantine = set(config.byzantine)
    honest = config.honest
    neighbours = config.neighbours()

    theta0 = model.init(np.random.default_rng([config.seed, _INIT]))
    models = [theta0.copy() for _ in range(n)]

    secure = rule.tag == "securedl"
    transport = dealer = proto = linalg = budget = None
    if secure:
        receivers = n if config.byzantine_aggregate else len(honest)
        transport = Transport(n, capture_limit=config.transcript_words)
        probe = SecureLinalg(Protocol(Dealer(n, config.seed), Transport(n), config.codec()),
                             model.dim, hyper.clip, config.norm_floor, config.nr_iters)
        budget = round_demand(probe, receivers, n - 1) * max(config.rounds, 1)
        dealer = Dealer(n, config.seed, budget)
        proto = Protocol(dealer, transport, config.codec())
        linalg = SecureLinalg(proto, model.dim, hyper.clip, config.norm_floor, config.nr_iters)
        log.info("dealer budget for %d rounds: %s", config.rounds, budget.as_dict())

    flipped = {i: label_flip(shards[i].y, train.n_classes) for i in byzantine} if spec.poisons_data() else {}

    pool = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    metrics = []
    try:
        for r in range(1, config.rounds + 1):
            clean = train_round(model, models, shards, hyper, config.seed, r, flipped, pool)
            sent = [
                poison_update(clean[i], spec, np.random.default_rng([config.seed, _ATTACK, r, i]))
                if i in byzantine else clean[i]
                for i in range(n)
            ]
            accept = np.full((n, n - 1), -1, dtype=np.int8)
            timings = dict.fromkeys(("cosine", "compare", "normalize", "average"), 0.0)
            beaver_before = proto.timings["beaver"] if proto else 0.0
            used_before = dict(dealer.used) if dealer else {}
            new_models = list(models)

            if secure:
                inputs = np.vstack([clip_update(v, hyper.clip) for v in sent])
                shared = share_tensor(proto.codec.encode(inputs), n, dealer.rng)
                for i in range(n):
                    if i in byzantine and not config.byzantine_aggregate:
                        new_models[i] = clean[i]
                        continue
                    if i in byzantine:
                        own = share_tensor(proto.codec.encode(clean[i]), n, dealer.rng)
                    else:
                        own = shared[i]
                    others = [j for j in range(n) if j != i]
                    decision = securedl_aggregate(linalg, i, own, shared[others], config.tau, n,
                                                  config.divide_by_accepted)
                    accept[i] = decision.accepted
                    for k, v in decision.timings.items():
                        timings[k] += v
                    new_models[i] = proto.codec.decode(decision.aggregate.reveal())
            else:
                for i in range(n):
                    if i in byzantine and not config.byzantine_aggregate:
                        new_models[i] = clean[i]
                        continue
                    nb = neighbours[i]
                    received = np.vstack([sent[j] for j in nb]) if nb else np.zeros((0, model.dim))
                    group = np.vstack([clean[i][None, :], received])
                    flags = np.ones(len(nb), dtype=bool)
                    if rule.tag == "mean":
                        agg = mean_aggregate(group)
                    elif rule.tag == "dmedian":
                        agg = median_aggregate(group)
                    elif rule.tag == "bridge":
                        agg = trimmed_mean_aggregate(group, rule.trim)
                    elif rule.tag == "dkrum":
                        agg = krum_aggregate(group, rule.byzantine_f)
                        chosen = [np.array_equal(agg, v) for v in received]
                        flags = np.array(chosen, dtype=bool)
                    else:
                        batch_rng = np.random.default_rng([config.seed, _MOZI, r, i])
                        idx = batch_rng.choice(len(shards[i]), size=min(rule.mozi_batch, len(shards[i])),
                                               replace=False)
                        bx, by = shards[i].x[idx], shards[i].y[idx]
                        agg, flags = mozi_aggregate(clean[i], received,
                                                    lambda th: model.loss(th, bx, by), rule.mozi_rho)
                    row = np.full(n - 1, -1, dtype=np.int8)
                    others = [j for j in range(n) if j != i]
                    for j, ok in zip(nb, flags):
                        row[others.index(j)] = int(ok)
                    accept[i] = row
                    new_models[i] = agg
            models = new_models

            accs = [model.accuracy(models[i], test) for i in honest]
            losses = [model.loss(models[i], test.x, test.y) for i in honest]
            if proto:
                timings["beaver"] = proto.timings["beaver"] - beaver_before
            m = RoundMetrics(
                round=r,
                accuracies=accs,
                mean_acc=float(np.mean(accs)) if accs else float("nan"),
                min_acc=float(np.min(accs)) if accs else float("nan"),
                max_acc=float(np.max(accs)) if accs else float("nan"),
                loss=float(np.mean(losses)) if losses else float("nan"),
                rejected_count=int(sum((accept[i] == 0).sum() for i in honest)),
                accept=accept.tolist(),
                timings_ms={k: 1000.0 * v for k, v in timings.items()},
                dealer_used={k: dealer.used[k] - used_before[k] for k in dealer.used} if dealer else {},
            )
            metrics.append(m)
            log.debug("round %d: mean acc %.4f, rejected %d", r, m.mean_acc, m.rejected_count)
            if on_round is not None:
                on_round(m)
    finally:
        if pool is not None:
            pool.shutdown()

    result = RunResult(config, metrics, models,
                       dealer_budget=budget.as_dict() if budget else None,
                       dealer_used=dict(dealer.used) if dealer else None,
                       transport=transport,
                       wall_seconds=time.perf_counter() - t_start)
    if config.out:
        emit_csv(metrics, config.out, timing=config.timing)
        emit_json(config, result.summary(), Path(config.out).with_suffix(".json"))
        if transport is not None:
            transport.dump_transcript(Path(config.out).with_suffix(".transcript.npz"))
    return result


# -- experiment drivers ------------------------------------------------------------------

SWEEP_FRACTIONS = (0.0, 0.2, 0.4, 0.6, 0.8)


def sweep(base: SimConfig, rules=("mean", "securedl"), fractions=SWEEP_FRACTIONS,
          on_result: Callable[[dict], None] | None = None) -> list[dict]:
    """Final honest accuracy over a grid of rules and Byzantine fractions."""
    data = load_data(base)
    rows = []
    for rule in rules:
        for frac in fractions:
            b = int(round(frac * base.n_clients))
            cfg = dataclasses.replace(base, rule=rule, n_byzantine=b, byzantine_ids=None,
                                      attack=base.attack if b else "none", out=None)
            if b == base.n_clients:
                continue  # no honest client left to measure
            res = run(cfg, data=data)
            row = {"rule": rule, "byzantine_fraction": frac, "byzantine": b,
                   "final_mean_acc": res.final_accuracy}
            rows.append(row)
            if on_result is not None:
                on_result(row)
    return rows


BENCH_SIZES = (3, 5, 8, 10)


def bench(sizes=BENCH_SIZES, d: int = 1024, reps: int = 3, seed: int = 0,
          codec: FixedPointCodec | None = None) -> list[dict]:
    """Wall time of one full SecureDL round (every client as receiver) per phase.

    Vectors are random and correlated so that most pairs are accepted. The
    fastest of ``reps`` repetitions is reported per phase.
    """
    codec = codec or FixedPointCodec()
    rows = []
    for n in sizes:
        rng = np.random.default_rng([seed, n])
        base = rng.uniform(-0.5, 0.5, size=d)
        vectors = np.clip(base + rng.uniform(-0.3, 0.3, size=(n, d)), -1.0, 1.0)
        best = {}
        for _ in range(reps):
            dealer = Dealer(n, seed)
            proto = Protocol(dealer, Transport(n), codec)
            linalg = SecureLinalg(proto, d)
            shared = share_tensor(codec.encode(vectors), n, dealer.rng)
            totals = dict.fromkeys(("cosine", "compare", "normalize", "average"), 0.0)
            for i in range(n):
                others = [j for j in range(n) if j != i]
                decision = securedl_aggregate(linalg, i, shared[i], shared[others], 0.0, n)
                for k, v in decision.timings.items():
                    totals[k] += v
            for k, v in totals.items():
                best[k] = min(best.get(k, np.inf), v)
        rows.append({"n": n, "d": d, **{f"t_{k}_ms": 1000.0 * v for k, v in best.items()}})
    return rows


# -- output ------------------------------------------------------------------------------

def emit_csv(metrics, path, timing: bool = True) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for m in metrics:
            writer.writerow(m.csv_row(timing))


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def emit_json(config: SimConfig, summary: dict, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"config": config.to_dict(), "seed": config.seed, "git": _git_describe(), "summary": summary}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
