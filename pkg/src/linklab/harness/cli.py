"""Command-line entry point.

One binary, eight subcommands:

  simulate    run the configured link at one SNR point, print the tally
  sweep       run the configured SNR grid, write a BER CSV
  train       train the configured learned scheme, write a checkpoint
  evaluate    sweep a learned scheme from an existing checkpoint
  mac-train   train a population of UE pairs, write a population container
  mac-eval    evaluate a trained population, write a per-seed CSV
  plot        render BER curves or an IC-vs-rate scatter from CSVs to SVG
  selftest    run the built-in invariant suite

Every config default can be overridden with a flag of the same dotted name
(e.g. ``--snr.stop_db 6``); ``--config FILE`` layers a key-value file under
the flags.  All failures exit nonzero after printing one machine-readable
``error: <Kind>: <message>`` line to stderr.
"""

from __future__ import annotations

import argparse
import sys


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="linklab", allow_abbrev=False,
                                     description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def runnable(name, help_text, needs_out=False, out_help="output path"):
        p = sub.add_parser(name, help=help_text, allow_abbrev=False)
        p.add_argument("--config", default=None, help="key-value config file")
        if needs_out:
            p.add_argument("--out", required=True, help=out_help)
        return p

    runnable("simulate", "run one SNR point and print the tally")
    runnable("sweep", "run the SNR grid into a CSV", needs_out=True,
             out_help="CSV file to write")
    runnable("train", "train the configured scheme", needs_out=True,
             out_help="checkpoint file to write")
    runnable("evaluate", "sweep a learned scheme from its checkpoint",
             needs_out=True, out_help="CSV file to write")
    runnable("mac-train", "train a UE-pair population", needs_out=True,
             out_help="population container to write")
    runnable("mac-eval", "evaluate a population container into a CSV",
             needs_out=True, out_help="CSV file to write")

    plot = sub.add_parser("plot", help="render CSVs to an SVG",
                          allow_abbrev=False)
    plot.add_argument("csvs", nargs="*", help="input CSV files")
    plot.add_argument("--style", required=True, choices=("ber", "mac"))
    plot.add_argument("--out", required=True, help="SVG file to write")

    sub.add_parser("selftest", help="run the built-in invariant suite",
                   allow_abbrev=False)
    return parser


def _overrides_from(extras: list) -> dict:
    """['--snr.stop_db', '6', ...] -> {'snr.stop_db': '6', ...}"""
    from ..errors import ConfigError

    out = {}
    i = 0
    while i < len(extras):
        token = extras[i]
        if not token.startswith("--") or len(token) <= 2:
            raise ConfigError(f"expected --dotted.key, got {token!r}")
        key = token[2:]
        if "=" in key:
            key, _, value = key.partition("=")
        else:
            if i + 1 >= len(extras):
                raise ConfigError(f"flag --{key} is missing a value")
            value = extras[i + 1]
            i += 1
        out[key] = value
        i += 1
    return out


def _resolved(args, extras) -> dict:
    from .config import read_config_file, resolve

    file_values = read_config_file(args.config) if args.config else None
    return resolve(file_values, _overrides_from(extras))


def _cmd_simulate(args, extras) -> int:
    from .config import link_config_from
    from .sim import run_point
    from .sweep import prepare_run

    cfg = link_config_from(_resolved(args, extras))
    ctx, receiver = prepare_run(cfg)
    tally = run_point(ctx, cfg.snr_start_db, 0, receiver)
    print(f"scheme={cfg.scheme} esno_db={tally.esno_db:g} ber={tally.ber:.6g} "
          f"bler={tally.bler:.6g} bit_errors={tally.bit_errors} "
          f"info_bits={tally.info_bits_counted} ttis={tally.tti_count}")
    return 0


def _cmd_sweep(args, extras, learned_only=False) -> int:
    from ..errors import ConfigError
    from .config import link_config_from
    from .sweep import sweep_records, write_csv

    cfg = link_config_from(_resolved(args, extras))
    if learned_only and cfg.scheme in ("baseline", "perfect_csi"):
        raise ConfigError(
            f"evaluate needs a learned scheme with a checkpoint, got {cfg.scheme!r}")
    records = sweep_records(cfg)
    write_csv(records, args.out)
    for rec in records:
        print(rec.csv_line())
    return 0


def _cmd_train(args, extras) -> int:
    from ..rx_neural import TRAINERS
    from .config import link_config_from, train_config_from

    values = _resolved(args, extras)
    tcfg = train_config_from(values)
    link_cfg = link_config_from(values)
    TRAINERS[tcfg.scheme](link_cfg, tcfg, link_cfg.seed_base, args.out)
    print(f"checkpoint={args.out} scheme={tcfg.scheme} steps={tcfg.steps} "
          f"seed_base={link_cfg.seed_base}")
    return 0


def _cmd_mac_train(args, extras) -> int:
    from ..mac_lab import save_population, train_population
    from .config import mac_config_from

    cfg = mac_config_from(_resolved(args, extras))
    pairs = train_population(cfg)
    save_population(pairs, cfg, args.out)
    print(f"population={cfg.population} episodes={cfg.episodes} "
          f"p_loss={cfg.p_loss:g} container={args.out}")
    return 0


def _cmd_mac_eval(args, extras) -> int:
    from ..errors import ConfigError
    from ..mac_lab import evaluate_population, load_population, write_mac_csv
    from .config import MacConfig

    values = _resolved(args, extras)
    container = values["checkpoint"]
    if not container:
        raise ConfigError("mac-eval needs --checkpoint <population container>")
    pairs, meta = load_population(container)
    # the container's metadata pins the environment the pairs were trained
    # for; the current config only chooses how hard to evaluate
    cfg = MacConfig(episodes=meta["episodes"], population=meta["population"],
                    steps=meta["steps"], p_loss=meta["p_loss"],
                    epsilon=meta["epsilon"], lr=meta["lr"],
                    discount=meta["discount"], reward_shared=meta["reward_shared"],
                    eval_episodes=values["mac.eval_episodes"],
                    seed_base=meta["seed_base"])
    records = evaluate_population(pairs, cfg)
    write_mac_csv(records, args.out)
    for rec in records:
        print(rec.csv_line())
    return 0


def _cmd_plot(args) -> int:
    from .svgplot import emit_plot

    emit_plot(list(args.csvs), args.style, args.out)
    print(f"svg={args.out} style={args.style} inputs={len(args.csvs)}")
    return 0


def _cmd_selftest() -> int:
    import json
    import os
    import tempfile

    import numpy as np

    checks = []

    def check(name, fn):
        fn()
        checks.append(name)
        print(f"ok {name}")

    def seeding():
        from .seeding import STREAM_CHANNEL, STREAM_NOISE, seed_derive
        assert seed_derive(1, STREAM_NOISE, 5) == seed_derive(1, STREAM_NOISE, 5)
        assert seed_derive(1, STREAM_NOISE, 5) != seed_derive(1, STREAM_NOISE, 6)
        assert seed_derive(1, STREAM_NOISE, 5) != seed_derive(1, STREAM_CHANNEL, 5)

    def autodiff():
        from ..numerics import Tensor, finite_difference_error, matmul, relu, tmean, square
        rng = np.random.default_rng(0)
        w = Tensor(rng.normal(size=(4, 3)))
        x = Tensor(rng.normal(size=(3, 2)))

        def build(leaves):
            return tmean(square(relu(matmul(leaves[0], leaves[1]))))

        err = finite_difference_error(build, [w, x])
        assert err < 1e-4, f"gradient mismatch {err:g}"

    def constellation():
        from ..phy_frame import build_qam64_gray
        from ..rx_neural import TrainableConstellation
        qam = build_qam64_gray()
        power = float(np.mean(np.abs(qam.points) ** 2))
        assert abs(power - 1.0) < 1e-12
        pts = TrainableConstellation(seed=3).points()
        assert abs(pts.mean()) < 1e-6 and abs(np.mean(np.abs(pts) ** 2) - 1) < 1e-6

    def ldpc():
        from ..fec import build_5g_code, decode_bp, encode, noiseless_llrs
        code = build_5g_code()
        rng = np.random.default_rng(1)
        bits = rng.integers(0, 2, size=(4, code.k_info))
        decoded, converged, iters = decode_bp(noiseless_llrs(encode(bits, code)), code)
        assert converged.all() and np.all(iters == 2)
        assert np.array_equal(decoded, bits)

    def mac_metrics():
        from ..mac_lab import mutual_information_bits, pearson_rho
        xs = np.arange(64) % 4
        assert abs(mutual_information_bits(xs, (xs + 3) % 4) - 2.0) < 1e-12
        assert abs(mutual_information_bits(np.repeat([0, 1], 8),
                                           np.tile([0, 1], 8))) < 1e-12
        assert abs(pearson_rho([(0, 0), (1, 1), (2, 0)])) < 1e-12

    def csv_and_checkpoint():
        from ..mac_lab import MacSeedRecord, read_mac_csv, write_mac_csv
        from ..numerics import load_tensors, save_tensors
        from .sweep import read_csv, write_csv
        from .svgplot import ber_curve_svg
        from .sweep import BerRecord
        with tempfile.TemporaryDirectory() as tmp:
            recs = [BerRecord(scheme="baseline", esno_db=1.0, ebno_db=-5.0,
                              info_bits_counted=682, bit_errors=3, ber=3 / 682,
                              blocks=1, block_errors=1, bler=1.0, tti_count=1,
                              seed_base=1)]
            path = os.path.join(tmp, "s.csv")
            write_csv(recs, path)
            assert read_csv(path) == recs
            mrecs = [MacSeedRecord(seed=0, p_loss=0.2, mean_sdu_rate=0.75,
                                   ic_bits=0.125, episodes_trained=10)]
            mpath = os.path.join(tmp, "m.csv")
            write_mac_csv(mrecs, mpath)
            assert read_mac_csv(mpath) == mrecs
            ck = os.path.join(tmp, "t.ckpt")
            tensors = {"a.w": np.arange(6, dtype=np.float64).reshape(2, 3)}
            save_tensors(ck, tensors)
            back = load_tensors(ck)
            assert np.array_equal(back["a.w"], tensors["a.w"].astype(np.float32))
            assert ber_curve_svg([]).startswith("<?xml")

    def config_hash_stable():
        from .config import config_hash, resolve
        assert config_hash(resolve()) == config_hash(resolve())
        assert config_hash(resolve(None, {"seed_base": "2"})) != config_hash(resolve())

    check("seed-derivation", seeding)
    check("autodiff-gradients", autodiff)
    check("constellation-invariants", constellation)
    check("ldpc-roundtrip", ldpc)
    check("mac-metrics", mac_metrics)
    check("csv-checkpoint-roundtrip", csv_and_checkpoint)
    check("config-hash", config_hash_stable)
    print(f"selftest passed ({len(checks)} checks)")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args, extras = parser.parse_known_args(argv)
    try:
        if args.command == "simulate":
            return _cmd_simulate(args, extras)
        if args.command == "sweep":
            return _cmd_sweep(args, extras)
        if args.command == "train":
            return _cmd_train(args, extras)
        if args.command == "evaluate":
            return _cmd_sweep(args, extras, learned_only=True)
        if args.command == "mac-train":
            return _cmd_mac_train(args, extras)
        if args.command == "mac-eval":
            return _cmd_mac_eval(args, extras)
        if args.command == "plot":
            if extras:
                from ..errors import ConfigError
                raise ConfigError(f"unrecognized arguments: {' '.join(extras)}")
            return _cmd_plot(args)
        if args.command == "selftest":
            if extras:
                from ..errors import ConfigError
                raise ConfigError(f"unrecognized arguments: {' '.join(extras)}")
            return _cmd_selftest()
        raise AssertionError(f"unhandled command {args.command!r}")
    except Exception as e:  # one machine-readable line, nonzero exit
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
