"""Tests for the two-UE MAC environment, policies, and coordination metrics."""

import numpy as np
import pytest

from linklab.errors import ConfigError, ContractError, DegenerateInputError
from linklab.harness.config import MacConfig
from linklab.mac_lab import (
    ACK,
    BUFFER_CAP,
    EpisodeLog,
    ExpertUePolicy,
    GRANT,
    HOLD,
    MAC_CSV_HEADER,
    MacEnv,
    MacSeedRecord,
    NACK,
    N_ACTIONS,
    OUT_COLLIDED,
    OUT_DELIVERED,
    OUT_LOST,
    OUT_NONE,
    PHY_IDLE,
    PHY_TRANSMIT,
    SDUS_PER_UE,
    UE_COUNT,
    UL_NO_REPORT,
    UePolicy,
    evaluate_pair,
    evaluate_population,
    information_coordination,
    load_population,
    mutual_information_bits,
    pearson_rho,
    read_mac_csv,
    run_episode,
    save_population,
    train_pair,
    train_population,
    write_mac_csv,
)

IDLE_SILENT = PHY_IDLE * 4 + UL_NO_REPORT       # idle, no uplink report
TX_SILENT = PHY_TRANSMIT * 4 + UL_NO_REPORT     # transmit, no uplink report


def _controlled_env(buffers, p_loss=0.0, steps=24):
    """Fresh env with hand-set queues and no further arrivals.

    The first downlink (computed at reset from a blank BS state) is always
    GRANT to UE0 / HOLD to UE1, which gives traces a known starting point.
    """
    env = MacEnv(steps=steps, p_loss=p_loss)
    env.reset(np.random.default_rng(0))
    env.arrivals[:] = 0
    env.buffers = np.array(buffers, dtype=np.int64)
    env.pending[:] = 0
    env.arrived = int(sum(buffers))
    env.delivered = 0
    return env


def _mac_cfg(**kw):
    base = dict(episodes=60, population=6, steps=8, p_loss=0.2, epsilon=0.1,
                lr=0.15, discount=0.95, eval_episodes=30, reward_shared=False,
                seed_base=5)
    base.update(kw)
    return MacConfig(**base)


class TestEnvMechanics:
    def test_both_transmit_is_a_collision(self):
        env = _controlled_env([1, 1])
        _, reward, _, rec = env.step([TX_SILENT, TX_SILENT], np.random.default_rng(1))
        assert list(rec["outcome"]) == [OUT_COLLIDED, OUT_COLLIDED]
        assert list(reward) == [-1.0, -1.0]
        assert env.delivered == 0

    def test_solo_transmit_lossless_delivers(self):
        env = _controlled_env([1, 0])
        obs, reward, _, rec = env.step([TX_SILENT, IDLE_SILENT], np.random.default_rng(1))
        assert rec["outcome"][0] == OUT_DELIVERED
        assert list(reward) == [1.0, 0.0]
        assert env.delivered == 1
        assert obs[0][1] == ACK  # receipt acknowledged on the next downlink

    def test_p_loss_one_delivers_nothing(self):
        env = MacEnv(steps=24, p_loss=1.0)
        rng = np.random.default_rng(2)
        pol = UePolicy(0.5, rng)
        for _ in range(10):
            log = run_episode(env, [pol, pol], rng)
            assert log.delivered == 0
            assert log.sdu_rate == 0.0

    def test_step_after_done_is_a_contract_violation(self):
        env = MacEnv(steps=8, p_loss=0.0)
        rng = np.random.default_rng(0)
        env.reset(rng)
        for _ in range(8):
            env.step([IDLE_SILENT, IDLE_SILENT], rng)
        with pytest.raises(ContractError, match="finished episode"):
            env.step([IDLE_SILENT, IDLE_SILENT], rng)

    def test_action_ids_validated(self):
        env = _controlled_env([1, 1])
        with pytest.raises(ContractError, match="action ids"):
            env.step([N_ACTIONS, 0], np.random.default_rng(0))

    def test_padding_burst_occupies_but_carries_nothing(self):
        # empty queue + TRANSMIT still collides with the other transmitter
        env = _controlled_env([0, 1])
        _, reward, _, rec = env.step([TX_SILENT, TX_SILENT], np.random.default_rng(1))
        assert list(rec["outcome"]) == [OUT_COLLIDED, OUT_COLLIDED]
        # ... and alone it delivers nothing at all
        env = _controlled_env([0, 0])
        _, reward, _, rec = env.step([TX_SILENT, IDLE_SILENT], np.random.default_rng(1))
        assert rec["outcome"][0] == OUT_NONE
        assert env.delivered == 0

    def test_scheduled_loss_is_nacked_and_requeued(self):
        env = _controlled_env([1, 0], p_loss=1.0)
        obs, _, _, rec = env.step([TX_SILENT, IDLE_SILENT], np.random.default_rng(1))
        assert rec["outcome"][0] == OUT_LOST
        assert obs[0][1] == NACK
        assert env.buffers[0] == 1      # ARQ handed the SDU back
        assert env.pending[0] == 0
        assert obs[1][1] == HOLD        # retransmission slot stays reserved

    def test_unscheduled_loss_is_gone_for_good(self):
        # UE1 was told HOLD; its lost SDU is never NACKed back
        env = _controlled_env([0, 1], p_loss=1.0)
        obs, _, _, rec = env.step([IDLE_SILENT, TX_SILENT], np.random.default_rng(1))
        assert rec["outcome"][1] == OUT_LOST
        assert obs[1][1] != NACK
        assert env.buffers[1] == 0
        assert env.pending[1] == 1

    def test_silence_on_a_grant_is_not_nacked(self):
        env = _controlled_env([1, 0])
        obs, _, _, rec = env.step([IDLE_SILENT, IDLE_SILENT], np.random.default_rng(1))
        assert rec["outcome"][0] == OUT_NONE
        assert obs[0][1] != NACK

    def test_arrivals_land_early_and_all_arrive(self):
        env = MacEnv(steps=24, p_loss=0.0)
        for seed in range(30):
            env.reset(np.random.default_rng(seed))
            assert env.arrivals.sum() == SDUS_PER_UE * UE_COUNT
            assert env.arrivals[env.arrival_window():].sum() == 0
        assert env.arrival_window() <= env.steps - 6

    def test_buffers_never_exceed_capacity(self):
        env = MacEnv(steps=24, p_loss=0.4)
        rng = np.random.default_rng(9)
        pol = UePolicy(1.0, rng)  # uniform random actions
        for _ in range(20):
            obs = env.reset(rng)
            done = False
            while not done:
                assert max(o[0] for o in obs) <= BUFFER_CAP
                nxt, _, done, _ = env.step(
                    [pol.act(obs[ue], rng) for ue in range(UE_COUNT)], rng)
                obs = nxt if nxt is not None else obs


class TestBsProtocol:
    def test_round_robin_grant_alternation_before_any_uplink(self):
        env = MacEnv(steps=24, p_loss=0.0)
        obs = env.reset(np.random.default_rng(0))
        msgs = [tuple(o[1] for o in obs)]
        for _ in range(3):
            obs, _, _, _ = env.step([IDLE_SILENT, IDLE_SILENT], np.random.default_rng(0))
            msgs.append(tuple(o[1] for o in obs))
        assert msgs == [(GRANT, HOLD), (HOLD, GRANT), (GRANT, HOLD), (HOLD, GRANT)]

    def test_claimed_empty_buffer_gets_hold(self):
        env = _controlled_env([0, 1])
        # UE0 reports occupancy 0; from then on every grant goes to UE1
        obs, _, _, _ = env.step([PHY_IDLE * 4 + 0, IDLE_SILENT], np.random.default_rng(0))
        for _ in range(4):
            assert obs[0][1] == HOLD
            obs, _, _, _ = env.step([IDLE_SILENT, IDLE_SILENT], np.random.default_rng(0))

    def test_nack_suspends_new_grants(self):
        env = _controlled_env([1, 1], p_loss=1.0)
        obs, _, _, _ = env.step([TX_SILENT, IDLE_SILENT], np.random.default_rng(1))
        assert obs[0][1] == NACK
        assert obs[1][1] == HOLD  # nobody else is granted during retransmission

    def test_retransmission_loss_is_nacked_again(self):
        env = _controlled_env([1, 0], p_loss=1.0)
        obs, _, _, _ = env.step([TX_SILENT, IDLE_SILENT], np.random.default_rng(1))
        for _ in range(5):  # ARQ keeps the SDU alive under persistent loss
            assert obs[0][1] == NACK
            assert env.buffers[0] == 1
            obs, _, _, _ = env.step([TX_SILENT, IDLE_SILENT], np.random.default_rng(1))


class TestPolicies:
    @pytest.mark.parametrize("epsilon", [0.0, 0.1, 0.7, 1.0])
    def test_action_probabilities_sum_to_one(self, epsilon):
        pol = UePolicy(epsilon, np.random.default_rng(0))
        for obs in [(0, GRANT, 0), (2, NACK, 2), (1, HOLD, 1)]:
            probs = pol.action_probabilities(obs)
            assert probs.shape == (N_ACTIONS,)
            assert probs.min() >= 0.0
            assert abs(probs.sum() - 1.0) < 1e-12

    def test_expert_probabilities_sum_to_one(self):
        pol = ExpertUePolicy()
        for obs in [(0, GRANT, 0), (2, GRANT, 1), (1, NACK, 2), (2, HOLD, 0)]:
            assert abs(pol.action_probabilities(obs).sum() - 1.0) < 1e-12

    def test_untrained_greedy_policy_is_degenerate(self):
        """Zero Q, eps=0: argmax is action 0 = idle, so nothing ever leaves."""
        env = MacEnv(steps=24, p_loss=0.0)
        pol = UePolicy(0.0)
        rng = np.random.default_rng(3)
        rates = [run_episode(env, [pol, pol], rng, greedy=True).sdu_rate
                 for _ in range(20)]
        assert max(rates) < 0.5

    def test_expert_pair_is_lossless_optimal(self):
        env = MacEnv(steps=24, p_loss=0.0)
        rng = np.random.default_rng(4)
        pols = [ExpertUePolicy(), ExpertUePolicy()]
        for _ in range(100):
            assert run_episode(env, pols, rng, greedy=True).sdu_rate == 1.0

    def test_expert_pair_recovers_from_losses(self):
        env = MacEnv(steps=24, p_loss=0.2)
        rng = np.random.default_rng(5)
        pols = [ExpertUePolicy(), ExpertUePolicy()]
        rates = [run_episode(env, pols, rng, greedy=True).sdu_rate
                 for _ in range(200)]
        assert np.mean(rates) > 0.95


class TestDeterminism:
    def test_same_seed_gives_bit_identical_episodes(self):
        env = MacEnv(steps=24, p_loss=0.3)
        pol = UePolicy(0.2, np.random.default_rng(11))
        logs = []
        for _ in range(2):
            rng = np.random.default_rng(77)
            logs.append(run_episode(env, [pol, pol], rng))
        for name in ("downlink", "uplink", "phy", "outcome", "reward"):
            np.testing.assert_array_equal(getattr(logs[0], name),
                                          getattr(logs[1], name))
        assert logs[0].delivered == logs[1].delivered

    def test_training_is_deterministic(self):
        cfg = _mac_cfg()
        qs = []
        for _ in range(2):
            pair = train_pair(cfg, np.random.default_rng(123))
            qs.append([pol.q.copy() for pol in pair])
        for a, b in zip(qs[0], qs[1]):
            np.testing.assert_array_equal(a, b)


class TestInformationCoordination:
    def test_independent_samples_have_zero_information(self):
        xs = np.array([0, 0, 1, 1] * 25)
        ys = np.array([0, 1, 0, 1] * 25)
        assert mutual_information_bits(xs, ys) == pytest.approx(0.0, abs=1e-12)

    def test_uniform_bijection_is_two_bits(self):
        xs = np.arange(400) % 4
        assert mutual_information_bits(xs, (xs + 1) % 4) == pytest.approx(2.0)

    def test_pooled_over_logs_matches_direct_computation(self):
        rng = np.random.default_rng(8)
        logs = []
        for _ in range(3):
            downlink = rng.integers(0, 4, size=(10, UE_COUNT))
            phy = (downlink == GRANT).astype(np.int64)  # deterministic response
            zeros = np.zeros((10, UE_COUNT))
            logs.append(EpisodeLog(downlink=downlink, uplink=downlink * 0 + 3,
                                   phy=phy, outcome=downlink * 0, reward=zeros,
                                   arrived=4, delivered=0))
        msgs = np.concatenate([log.downlink.reshape(-1) for log in logs])
        acts = np.concatenate([log.phy.reshape(-1) for log in logs])
        assert information_coordination(logs) == pytest.approx(
            mutual_information_bits(msgs, acts))

    def test_always_idle_has_zero_coordination(self):
        rng = np.random.default_rng(9)
        downlink = rng.integers(0, 4, size=(24, UE_COUNT))
        zeros_i = np.zeros((24, UE_COUNT), dtype=np.int64)
        log = EpisodeLog(downlink=downlink, uplink=zeros_i + 3, phy=zeros_i,
                         outcome=zeros_i, reward=zeros_i.astype(float),
                         arrived=4, delivered=0)
        assert information_coordination([log]) == pytest.approx(0.0, abs=1e-12)

    def test_bounded_by_marginal_entropies(self):
        def entropy(v):
            _, counts = np.unique(v, return_counts=True)
            p = counts / counts.sum()
            return float(-(p * np.log2(p)).sum())

        env = MacEnv(steps=24, p_loss=0.2)
        rng = np.random.default_rng(10)
        for trial in range(5):
            pol = UePolicy(0.3, rng)
            pol.q += rng.normal(size=pol.q.shape)
            logs = [run_episode(env, [pol, pol], rng) for _ in range(4)]
            ic = information_coordination(logs)
            msgs = np.concatenate([log.downlink.reshape(-1) for log in logs])
            acts = np.concatenate([log.phy.reshape(-1) for log in logs])
            assert -1e-12 <= ic <= min(entropy(msgs), entropy(acts)) + 1e-12

    def test_empty_log_collection_rejected(self):
        with pytest.raises(ContractError):
            information_coordination([])

    def test_log_shape_validation(self):
        bad = np.zeros((5, 3), dtype=np.int64)
        with pytest.raises(ContractError, match="steps"):
            EpisodeLog(downlink=bad, uplink=bad, phy=bad, outcome=bad,
                       reward=bad.astype(float), arrived=4, delivered=0)


class TestPearsonRho:
    def test_positive_and_negative_lines(self):
        up = [(x, 2.0 * x + 1.0) for x in range(5)]
        down = [(x, -0.5 * x) for x in range(5)]
        assert pearson_rho(up) == pytest.approx(1.0)
        assert pearson_rho(down) == pytest.approx(-1.0)

    def test_tent_is_uncorrelated(self):
        assert pearson_rho([(0, 0), (1, 1), (2, 0)]) == pytest.approx(0.0, abs=1e-12)

    def test_zero_variance_is_degenerate(self):
        with pytest.raises(DegenerateInputError, match="zero variance"):
            pearson_rho([(1, 5), (1, 6), (1, 7)])

    def test_too_few_points_rejected(self):
        with pytest.raises(ContractError):
            pearson_rho([(0, 0), (1, 1)])


class TestPopulation:
    def test_population_spreads_and_is_reproducible(self):
        cfg = _mac_cfg()
        pairs = train_population(cfg)
        recs = evaluate_population(pairs, cfg)
        assert len(recs) == cfg.population
        rates = [r.mean_sdu_rate for r in recs]
        assert len(set(rates)) > 1  # seeds land on visibly different protocols
        recs2 = evaluate_population(train_population(cfg), cfg)
        assert recs == recs2

    def test_csv_round_trip(self, tmp_path):
        recs = [MacSeedRecord(seed=i, p_loss=0.2, mean_sdu_rate=0.5 + 0.1 * i,
                              ic_bits=0.01 * i, episodes_trained=60)
                for i in range(4)]
        path = str(tmp_path / "mac.csv")
        write_mac_csv(recs, path)
        assert read_mac_csv(path) == recs
        with open(path, encoding="utf-8") as f:
            assert f.readline().strip() == MAC_CSV_HEADER

    def test_csv_errors_cite_line_numbers(self, tmp_path):
        path = str(tmp_path / "bad.csv")
        with open(path, "w", encoding="utf-8") as f:
            f.write("wrong,header\n")
        with pytest.raises(ContractError, match=r"bad\.csv:1:"):
            read_mac_csv(path)
        with open(path, "w", encoding="utf-8") as f:
            f.write(MAC_CSV_HEADER + "\n1,0,0.2,0.5\n")
        with pytest.raises(ContractError, match=r"bad\.csv:2:"):
            read_mac_csv(path)
        with open(path, "w", encoding="utf-8") as f:
            f.write(MAC_CSV_HEADER + "\n9,0,0.2,0.5,0.1,60\n")
        with pytest.raises(ContractError, match="schema version"):
            read_mac_csv(path)

    def test_population_container_round_trip(self, tmp_path):
        cfg = _mac_cfg(population=3, episodes=30)
        pairs = train_population(cfg)
        path = str(tmp_path / "pop.ckpt")
        save_population(pairs, cfg, path)
        loaded, meta = load_population(path)
        assert meta["population"] == 3
        assert meta["p_loss"] == cfg.p_loss
        assert len(loaded) == 3
        for orig, back in zip(pairs, loaded):
            for a, b in zip(orig, back):
                np.testing.assert_array_equal(a.q, b.q)  # f32 snap == stored
        before = evaluate_population(pairs, cfg)
        after = evaluate_population(loaded, cfg)
        assert before == after

    def test_missing_sidecar_rejected(self, tmp_path):
        cfg = _mac_cfg(population=1, episodes=5)
        path = str(tmp_path / "pop.ckpt")
        save_population(train_population(cfg), cfg, path)
        (tmp_path / "pop.ckpt.json").unlink()
        with pytest.raises(ContractError, match="sidecar"):
            load_population(path)

    def test_evaluate_pair_reports_rate_and_ic(self):
        cfg = _mac_cfg(population=1)
        pair = train_population(cfg)[0]
        rate, ic, logs = evaluate_pair(pair, cfg, np.random.default_rng(6))
        assert 0.0 <= rate <= 1.0
        assert ic >= 0.0
        assert len(logs) == cfg.eval_episodes


class TestConfigValidation:
    def test_env_rejects_bad_parameters(self):
        with pytest.raises(ConfigError, match="steps"):
            MacEnv(steps=4)
        with pytest.raises(ConfigError, match="p_loss"):
            MacEnv(steps=24, p_loss=1.5)
