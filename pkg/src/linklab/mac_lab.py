"""Two-UE random-access MAC with a fixed base-station protocol.

The BS schedules uplink transmissions with a four-message downlink alphabet
whose semantics it never reveals; UEs must learn them from rewards alone.
Each episode, every UE receives two SDUs at random steps and should deliver
them without collisions or channel losses.  A population of independently
trained tabular Q-learning UE pairs exhibits a spread of delivery rates, and
the mutual information between downlink messages and the next channel-access
action (the "information coordination") correlates positively with success.

Protocol fixed at the BS (UEs see only opaque message ids):
  downlink  GRANT "transmit now" / HOLD "stay silent" / ACK / NACK
  uplink    0..2 claimed buffer occupancy, 3 no report
The BS polls round-robin among UEs it believes hold traffic, believes uplink
occupancy claims, ACKs successful receptions, NACKs the UE it scheduled when
it hears a garbled or lost burst (silence and unscheduled bursts get nothing),
and suspends fresh grants while a retransmission is pending.  A NACK hands
the lost SDU back to the sender's queue; anything else that fails is gone.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, DegenerateInputError
from .harness.config import MacConfig
from .harness.seeding import STREAM_MAC, STREAM_MAC_EVAL, seed_derive
from .numerics import load_tensors, save_tensors

UE_COUNT = 2
BUFFER_CAP = 2
SDUS_PER_UE = 2

# downlink alphabet
GRANT, HOLD, ACK, NACK = 0, 1, 2, 3
N_DOWNLINK = 4
# uplink alphabet: 0..2 claimed occupancy, 3 = no report
N_UPLINK = 4
UL_NO_REPORT = 3
# PHY action half of a UE action
PHY_IDLE, PHY_TRANSMIT = 0, 1
N_PHASES = 3
N_ACTIONS = 2 * N_UPLINK  # action id = phy * 4 + uplink message

# per-UE per-step outcome codes
OUT_NONE, OUT_DELIVERED, OUT_COLLIDED, OUT_LOST = 0, 1, 2, 3


@dataclass
class EpisodeLog:
    """Per-step, per-UE trace of one episode; arrays are (steps, UE_COUNT)."""

    downlink: np.ndarray
    uplink: np.ndarray
    phy: np.ndarray
    outcome: np.ndarray
    reward: np.ndarray
    arrived: int
    delivered: int

    def __post_init__(self):
        shape = self.downlink.shape
        if len(shape) != 2 or shape[1] != UE_COUNT:
            raise ContractError(f"log arrays must be (steps, {UE_COUNT}), got {shape}")
        for name in ("uplink", "phy", "outcome", "reward"):
            if getattr(self, name).shape != shape:
                raise ContractError(f"log array {name} shape mismatch")

    @property
    def sdu_rate(self) -> float:
        return self.delivered / self.arrived


@dataclass
class BsState:
    """What the base station knows: occupancy beliefs, scheduling, feedback."""

    belief: list = field(default_factory=lambda: [None] * UE_COUNT)  # None = unknown
    rr: int = 0                                   # next UE to poll
    feedback: list = field(default_factory=lambda: [None] * UE_COUNT)
    granted: int | None = None                    # UE granted in the current step


def bs_policy(bs: BsState) -> np.ndarray:
    """One downlink message per UE; advances the poll pointer, consumes feedback.

    Pending ACK/NACK outranks scheduling.  A pending NACK reserves the step
    for the retransmission, so nobody else is granted.  Otherwise exactly one
    UE believed (or not yet known) to hold traffic gets GRANT, round-robin;
    everyone else gets HOLD.
    """
    msgs = np.full(UE_COUNT, -1, dtype=np.int64)
    nack_pending = any(f == NACK for f in bs.feedback)
    bs.granted = None
    for ue in range(UE_COUNT):
        if bs.feedback[ue] is not None:
            msgs[ue] = bs.feedback[ue]
            if bs.feedback[ue] == NACK:
                bs.granted = ue  # the reserved slot belongs to the retransmitter
            bs.feedback[ue] = None
    if not nack_pending:
        candidates = [ue for ue in range(UE_COUNT)
                      if msgs[ue] < 0 and (bs.belief[ue] is None or bs.belief[ue] > 0)]
        for offset in range(UE_COUNT):
            ue = (bs.rr + offset) % UE_COUNT
            if ue in candidates:
                msgs[ue] = GRANT
                bs.granted = ue
                bs.rr = (ue + 1) % UE_COUNT
                break
    msgs[msgs < 0] = HOLD
    return msgs


def bs_update(bs: BsState, uplink: np.ndarray, outcome: np.ndarray) -> None:
    """Fold this step's uplink reports and reception outcomes into BS state."""
    for ue in range(UE_COUNT):
        if uplink[ue] != UL_NO_REPORT:
            bs.belief[ue] = int(uplink[ue])
        if outcome[ue] == OUT_DELIVERED:
            if bs.belief[ue] is not None:
                bs.belief[ue] = max(bs.belief[ue] - 1, 0)
            bs.feedback[ue] = ACK
    g = bs.granted
    if g is not None and outcome[g] in (OUT_COLLIDED, OUT_LOST):
        # Heard energy on g's reserved slot but decoded nothing.  Silence is
        # not NACKed: retransmission credit exists only for detected failures.
        bs.feedback[g] = NACK


class MacEnv:
    """Collision channel with random SDU arrivals and the expert BS above.

    Step order: arrivals land, the BS speaks, UEs observe (own buffer, the
    downlink message just received, episode phase) and act, then the channel
    resolves.  Choosing TRANSMIT occupies the slot even with an empty queue
    (a padding burst), so two transmitters always collide; a lone transmitter
    delivers only if it holds an SDU and the channel does not lose it
    (probability p_loss).

    Retransmissions follow stop-and-wait ARQ: a transmitted SDU leaves the
    queue, and only a NACK puts it back.  The BS can NACK only the UE it
    scheduled, so an SDU sent against the schedule and then lost or collided
    is gone for good -- ignoring the downlink costs real throughput.
    """

    def __init__(self, steps: int = 24, p_loss: float = 0.2, reward_shared: bool = False):
        if steps < 8:
            raise ConfigError("steps must be >= 8")
        if not 0.0 <= p_loss <= 1.0:
            raise ConfigError("p_loss must be in [0, 1]")
        self.steps = steps
        self.p_loss = p_loss
        self.reward_shared = reward_shared
        self.done = True

    def _phase(self) -> int:
        return self.t * N_PHASES // self.steps

    def _observations(self, msgs: np.ndarray) -> tuple:
        phase = self._phase()
        return tuple((int(self.buffers[ue]), int(msgs[ue]), phase)
                     for ue in range(UE_COUNT))

    def arrival_window(self) -> int:
        # 2 SDUs per UE, uniform over the first quarter of the episode.  The
        # window must end early enough that a compliant pair can still drain
        # four SDUs (arrivals after steps-6 could never be scheduled in time),
        # and a narrow window makes the UEs hold traffic simultaneously, so
        # collision-free delivery hinges on actually obeying the scheduler.
        return max(1, min(self.steps - 6, (self.steps + 3) // 4))

    def reset(self, rng: np.random.Generator) -> tuple:
        self.arrivals = np.zeros((self.steps, UE_COUNT), dtype=np.int64)
        window = self.arrival_window()
        for ue in range(UE_COUNT):
            for step in rng.integers(0, window, size=SDUS_PER_UE):
                self.arrivals[step, ue] += 1
        self.buffers = np.zeros(UE_COUNT, dtype=np.int64)
        self.pending = np.zeros(UE_COUNT, dtype=np.int64)  # sent, not yet ACK/NACKed
        self.bs = BsState()
        self.t = 0
        self.arrived = SDUS_PER_UE * UE_COUNT
        self.delivered = 0
        self.done = False
        self.buffers += self.arrivals[0]
        self._msgs = bs_policy(self.bs)
        return self._observations(self._msgs)

    def step(self, actions, rng: np.random.Generator):
        """-> (next observations or None, rewards, done, step record dict)."""
        if self.done:
            raise ContractError("step() on a finished episode")
        phy = np.array([a // N_UPLINK for a in actions], dtype=np.int64)
        uplink = np.array([a % N_UPLINK for a in actions], dtype=np.int64)
        if phy.min() < 0 or phy.max() > 1 or uplink.min() < 0 or uplink.max() >= N_UPLINK:
            raise ContractError(f"action ids must be in [0, {N_ACTIONS})")

        transmitters = [ue for ue in range(UE_COUNT) if phy[ue] == PHY_TRANSMIT]
        outcome = np.full(UE_COUNT, OUT_NONE, dtype=np.int64)
        reward = np.zeros(UE_COUNT)
        if len(transmitters) == UE_COUNT:
            for ue in transmitters:
                outcome[ue] = OUT_COLLIDED
                reward[ue] = -1.0
                if self.buffers[ue] > 0:  # the garbled SDU left the queue
                    self.buffers[ue] -= 1
                    self.pending[ue] += 1
        elif len(transmitters) == 1 and self.buffers[transmitters[0]] > 0:
            ue = transmitters[0]
            self.buffers[ue] -= 1
            if rng.random() < self.p_loss:
                outcome[ue] = OUT_LOST
                self.pending[ue] += 1
            else:
                outcome[ue] = OUT_DELIVERED
                self.delivered += 1
                if self.reward_shared:
                    reward[:] = 1.0
                else:
                    reward[ue] = 1.0

        bs_update(self.bs, uplink, outcome)
        record = {"downlink": self._msgs.copy(), "uplink": uplink, "phy": phy,
                  "outcome": outcome, "reward": reward.copy()}

        self.t += 1
        if self.t == self.steps:
            self.done = True
            return None, reward, True, record
        self.buffers = np.minimum(self.buffers + self.arrivals[self.t], BUFFER_CAP)
        self._msgs = bs_policy(self.bs)
        for ue in range(UE_COUNT):  # a received NACK re-enqueues the lost SDU
            if self._msgs[ue] == NACK and self.pending[ue] > 0:
                self.pending[ue] -= 1
                self.buffers[ue] = min(self.buffers[ue] + 1, BUFFER_CAP)
        return self._observations(self._msgs), reward, False, record


# -- UE policies -------------------------------------------------------------------

def obs_index(obs: tuple) -> tuple:
    buffer, msg, phase = obs
    return (buffer, msg, phase)


class UePolicy:
    """Tabular epsilon-greedy policy over (buffer, downlink message, phase)."""

    def __init__(self, epsilon: float, rng: np.random.Generator | None = None):
        self.epsilon = epsilon
        self.q = np.zeros((BUFFER_CAP + 1, N_DOWNLINK, N_PHASES, N_ACTIONS))
        if rng is not None:  # tiny per-seed tie-breaking noise
            self.q += rng.uniform(0.0, 1e-3, size=self.q.shape)

    def action_probabilities(self, obs: tuple) -> np.ndarray:
        probs = np.full(N_ACTIONS, self.epsilon / N_ACTIONS)
        probs[int(np.argmax(self.q[obs_index(obs)]))] += 1.0 - self.epsilon
        return probs

    def act(self, obs: tuple, rng: np.random.Generator, greedy: bool = False) -> int:
        if not greedy and rng.random() < self.epsilon:
            return int(rng.integers(N_ACTIONS))
        return int(np.argmax(self.q[obs_index(obs)]))


class ExpertUePolicy:
    """Hand-written protocol-compliant UE: transmit on GRANT/NACK, report occupancy."""

    def act(self, obs: tuple, rng=None, greedy: bool = True) -> int:
        buffer, msg, _ = obs
        phy = PHY_TRANSMIT if msg in (GRANT, NACK) and buffer > 0 else PHY_IDLE
        return phy * N_UPLINK + min(buffer, UL_NO_REPORT - 1)

    def action_probabilities(self, obs: tuple) -> np.ndarray:
        probs = np.zeros(N_ACTIONS)
        probs[self.act(obs)] = 1.0
        return probs


def run_episode(env: MacEnv, policies, rng: np.random.Generator,
                greedy: bool = False) -> EpisodeLog:
    obs = env.reset(rng)
    rows = []
    done = False
    while not done:
        actions = [policies[ue].act(obs[ue], rng, greedy=greedy)
                   for ue in range(UE_COUNT)]
        obs, _, done, record = env.step(actions, rng)
        rows.append(record)
    stack = {key: np.stack([r[key] for r in rows]) for key in rows[0]}
    return EpisodeLog(downlink=stack["downlink"], uplink=stack["uplink"],
                      phy=stack["phy"], outcome=stack["outcome"],
                      reward=stack["reward"],
                      arrived=env.arrived, delivered=env.delivered)


# -- training ----------------------------------------------------------------------

def train_pair(cfg: MacConfig, rng: np.random.Generator) -> tuple:
    """Independent Q-learning for both UEs against the fixed BS protocol."""
    env = MacEnv(cfg.steps, cfg.p_loss, cfg.reward_shared)
    policies = (UePolicy(cfg.epsilon, rng), UePolicy(cfg.epsilon, rng))
    for _ in range(cfg.episodes):
        obs = env.reset(rng)
        done = False
        while not done:
            actions = [policies[ue].act(obs[ue], rng) for ue in range(UE_COUNT)]
            nxt, rewards, done, _ = env.step(actions, rng)
            for ue in range(UE_COUNT):
                pol = policies[ue]
                target = rewards[ue]
                if not done:
                    target += cfg.discount * pol.q[obs_index(nxt[ue])].max()
                cell = pol.q[obs_index(obs[ue])]
                cell[actions[ue]] += cfg.lr * (target - cell[actions[ue]])
            obs = nxt
    return policies


def train_population(cfg: MacConfig) -> list:
    """cfg.population independently seeded UE pairs, Q snapped to float32.

    The snap makes in-memory evaluation identical to evaluating a pair that
    went through a save/load round trip.
    """
    pairs = []
    for idx in range(cfg.population):
        rng = np.random.default_rng(seed_derive(cfg.seed_base, STREAM_MAC, idx))
        pair = train_pair(cfg, rng)
        for pol in pair:
            pol.q = pol.q.astype(np.float32).astype(np.float64)
        pairs.append(pair)
    return pairs


def evaluate_pair(pair, cfg: MacConfig, rng: np.random.Generator) -> tuple:
    """Greedy rollouts -> (mean SDU rate, IC bits, logs)."""
    env = MacEnv(cfg.steps, cfg.p_loss, cfg.reward_shared)
    logs = [run_episode(env, pair, rng, greedy=True)
            for _ in range(cfg.eval_episodes)]
    rate = float(np.mean([log.sdu_rate for log in logs]))
    return rate, information_coordination(logs), logs


# -- information coordination ------------------------------------------------------

def mutual_information_bits(xs: np.ndarray, ys: np.ndarray) -> float:
    """Plug-in mutual information of two discrete samples, in bits."""
    xs = np.asarray(xs).reshape(-1)
    ys = np.asarray(ys).reshape(-1)
    if xs.size == 0 or xs.shape != ys.shape:
        raise ContractError("need two equally sized nonempty samples")
    _, xi = np.unique(xs, return_inverse=True)
    _, yi = np.unique(ys, return_inverse=True)
    joint = np.zeros((xi.max() + 1, yi.max() + 1))
    np.add.at(joint, (xi, yi), 1.0)
    joint /= joint.sum()
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    mask = joint > 0
    return float((joint[mask] * np.log2(joint[mask] / (px @ py)[mask])).sum())


def information_coordination(logs) -> float:
    """I(downlink message; channel-access action it triggers), pooled over logs."""
    if not logs:
        raise ContractError("need at least one episode log")
    msgs = np.concatenate([log.downlink.reshape(-1) for log in logs])
    phy = np.concatenate([log.phy.reshape(-1) for log in logs])
    return mutual_information_bits(msgs, phy)


def pearson_rho(points) -> float:
    """Sample Pearson correlation of (x, y) pairs."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 3:
        raise ContractError("need >= 3 (x, y) points")
    x, y = pts[:, 0], pts[:, 1]
    dx, dy = x - x.mean(), y - y.mean()
    vx, vy = (dx ** 2).sum(), (dy ** 2).sum()
    if vx == 0.0 or vy == 0.0:
        raise DegenerateInputError("correlation undefined: zero variance")
    return float((dx * dy).sum() / math.sqrt(vx * vy))


# -- per-seed records, CSV, persistence --------------------------------------------

MAC_CSV_SCHEMA_VERSION = 1
MAC_CSV_HEADER = "schema_version,seed,p_loss,mean_sdu_rate,ic_bits,episodes_trained"


@dataclass(frozen=True)
class MacSeedRecord:
    seed: int
    p_loss: float
    mean_sdu_rate: float
    ic_bits: float
    episodes_trained: int

    def csv_line(self) -> str:
        return ",".join([
            str(MAC_CSV_SCHEMA_VERSION), str(self.seed), repr(float(self.p_loss)),
            repr(float(self.mean_sdu_rate)), repr(float(self.ic_bits)),
            str(self.episodes_trained),
        ])


def evaluate_population(pairs, cfg: MacConfig) -> list:
    records = []
    for idx, pair in enumerate(pairs):
        rng = np.random.default_rng(seed_derive(cfg.seed_base, STREAM_MAC_EVAL, idx))
        rate, ic, _ = evaluate_pair(pair, cfg, rng)
        records.append(MacSeedRecord(seed=idx, p_loss=cfg.p_loss, mean_sdu_rate=rate,
                                     ic_bits=ic, episodes_trained=cfg.episodes))
    return records


def write_mac_csv(records: list, path: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        f.write(MAC_CSV_HEADER + "\n")
        for rec in records:
            f.write(rec.csv_line() + "\n")
    os.replace(tmp, path)


def read_mac_csv(path: str) -> list:
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or lines[0] != MAC_CSV_HEADER:
        raise ContractError(f"{path}:1: unrecognized CSV header")
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise ContractError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
        try:
            if int(parts[0]) != MAC_CSV_SCHEMA_VERSION:
                raise ContractError(f"{path}:{lineno}: schema version {parts[0]} unsupported")
            records.append(MacSeedRecord(
                seed=int(parts[1]), p_loss=float(parts[2]),
                mean_sdu_rate=float(parts[3]), ic_bits=float(parts[4]),
                episodes_trained=int(parts[5]),
            ))
        except ValueError as e:
            raise ContractError(f"{path}:{lineno}: {e}") from e
    return records


def save_population(pairs, cfg: MacConfig, path: str) -> None:
    tensors = {}
    for idx, pair in enumerate(pairs):
        for ue, pol in enumerate(pair):
            tensors[f"seed{idx:03d}.ue{ue}.q"] = pol.q
    save_tensors(path, tensors)
    meta = {"population": len(pairs), "episodes": cfg.episodes, "steps": cfg.steps,
            "p_loss": cfg.p_loss, "epsilon": cfg.epsilon, "lr": cfg.lr,
            "discount": cfg.discount, "reward_shared": cfg.reward_shared,
            "seed_base": cfg.seed_base}
    tmp = path + ".json.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(json.dumps(meta, sort_keys=True, separators=(",", ":")) + "\n")
    os.replace(tmp, path + ".json")


def load_population(path: str) -> tuple:
    """-> (pairs, meta dict saved at training time)."""
    sidecar = path + ".json"
    if not os.path.exists(sidecar):
        raise ContractError(f"missing population sidecar: expected {sidecar}")
    with open(sidecar, "r", encoding="utf-8") as f:
        meta = json.load(f)
    arrays = load_tensors(path)
    pairs = []
    for idx in range(meta["population"]):
        pair = []
        for ue in range(UE_COUNT):
            name = f"seed{idx:03d}.ue{ue}.q"
            if name not in arrays:
                raise ContractError(f"population container missing tensor {name}")
            pol = UePolicy(meta["epsilon"])
            q = np.asarray(arrays[name], dtype=np.float64)
            if q.shape != pol.q.shape:
                raise ContractError(f"tensor {name} has shape {q.shape}, "
                                    f"expected {pol.q.shape}")
            pol.q = q
            pair.append(pol)
        pairs.append(tuple(pair))
    return pairs, meta
