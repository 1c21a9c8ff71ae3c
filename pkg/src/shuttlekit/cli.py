"""Command-line front end: every pipeline stage as a subcommand.

All randomness descends from the configured seed through named
sub-streams, outputs carry the resolved config in their headers, and a
fixed seed reproduces every artifact byte for byte.

Exit codes: 0 success, 2 unusable configuration or parameters, 3 listen
port unavailable.
"""

from __future__ import annotations

import argparse
import json
import math
import signal
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config, parse_override
from .corpus import generate_corpus, write_corpus_jsonl, write_stats_csv
from .dynamics import DEFAULT_DT
from .estimator import evaluate_predictor, write_error_curves_csv
from .rally import (
    build_serve,
    default_hitter,
    rally_length_sweep,
    simulate_rally,
    write_rally_log,
    write_sweep_csv,
)
from .stream import PredictionSession, StreamServer, replay as stream_replay

__all__ = ["main", "build_parser"]


def _sample_records(cfg: RunConfig, n_records: int, include_windows: bool = False):
    """First n accepted corpus records (with trajectories), deterministically.

    Starts from a launch budget comfortably above n / acceptance-rate and
    doubles when a tail-heavy draw still comes up short.
    """
    seed = cfg.sub_seed("corpus")
    n_launch = max(512, n_records * 40)
    for _ in range(4):
        records, _stats = generate_corpus(
            n_launch, cfg.ranges, cfg.zone, cfg.aero, seed=seed,
            include_trajectory=True, include_windows=include_windows)
        if len(records) >= n_records:
            return records[:n_records]
        n_launch *= 2
    raise ConfigError(
        f"zone acceptance too low: {len(records)} records from {n_launch // 2} launches")


def cmd_generate(args, cfg: RunConfig) -> int:
    if args.n < 1:
        raise ConfigError(f"--n must be >= 1, got {args.n}")
    seed = cfg.sub_seed("corpus")
    records, stats = generate_corpus(
        args.n, cfg.ranges, cfg.zone, cfg.aero, seed=seed,
        include_trajectory=args.include_trajectory)
    write_corpus_jsonl(records, args.out, seed=seed, dt=DEFAULT_DT,
                       ranges=cfg.ranges, zone=cfg.zone, params=cfg.aero,
                       extra_header={"config": cfg.as_dict()})
    write_stats_csv(stats, args.stats, header_comment="config: " + cfg.echo())
    print(f"accepted {stats['n_accepted']} / {stats['n_total']} "
          f"launches (rate {stats['rate']:.6f})")
    print(f"corpus: {args.out}")
    print(f"t_star histogram: {args.stats}")
    return 0


def cmd_evaluate_ekf(args, cfg: RunConfig) -> int:
    if args.records < 1:
        raise ConfigError(f"--records must be >= 1, got {args.records}")
    sigma = cfg.noise.sigma if args.sigma is None else args.sigma
    if sigma < 0:
        raise ConfigError(f"--sigma must be >= 0, got {sigma}")
    records = _sample_records(cfg, args.records)
    curves = evaluate_predictor(
        records, sigma=sigma, rate=cfg.noise.rate, seed=cfg.sub_seed("noise"),
        params=cfg.aero, sigma_a=cfg.noise.sigma_a)
    write_error_curves_csv(curves, args.out, header_comment="config: " + cfg.echo())
    taus = curves["lead_times"]
    for tau in (0.6, 0.3):
        i = int(np.argmin(np.abs(taus - tau)))
        print(f"lead {taus[i]:.2f} s: pos err {curves['pos_err_mean'][i] * 1e3:.1f} mm, "
              f"t err {curves['t_err_mean'][i] * 1e3:.1f} ms")
    print(f"error curves: {args.out}")
    return 0


def cmd_rally(args, cfg: RunConfig) -> int:
    try:
        sigmas = [float(s) for s in args.sigma_pos.split(",") if s.strip() != ""]
    except ValueError as e:
        raise ConfigError(f"--sigma-pos: {e}") from e
    if not sigmas:
        raise ConfigError("--sigma-pos needs at least one value")
    if args.rallies < 1:
        raise ConfigError(f"--rallies must be >= 1, got {args.rallies}")
    seed = cfg.sub_seed("rally")
    rows = rally_length_sweep(sigmas, args.rallies, cfg.court, cfg.aero,
                              seed=seed, max_hits=args.max_hits)
    rows = sorted(rows, key=lambda r: r[0])
    write_sweep_csv(rows, args.sweep_out, header_comment="config: " + cfg.echo())

    # log the first few rallies of each sigma; streams match the sweep's
    serve = build_serve(cfg.court, cfg.aero)
    outcomes = []
    for sig in sigmas:
        for k in range(min(args.log_rallies, args.rallies)):
            rng = np.random.default_rng([seed, k])
            outcomes.append(simulate_rally(
                cfg.court,
                default_hitter("A", cfg.court, pos_error_sigma=sig),
                default_hitter("B", cfg.court, pos_error_sigma=sig),
                serve, cfg.aero, rng, max_hits=args.max_hits))
    write_rally_log(outcomes, args.log_out,
                    header={"config": cfg.as_dict(), "sigmas": sigmas,
                            "rallies_logged_per_sigma": min(args.log_rallies, args.rallies)})
    for sig, mean, std in rows:
        print(f"sigma_pos {sig:g} m: mean length {mean:.2f} (std {std:.2f})")
    print(f"sweep: {args.sweep_out}")
    print(f"rally log: {args.log_out}")
    return 0


def cmd_serve(args, cfg: RunConfig) -> int:
    if args.replay is not None:
        return _do_replay(args.replay, args.speed, cfg, out=None)
    host = cfg.stream.host if args.host is None else args.host
    port = cfg.stream.port if args.port is None else args.port
    rate = cfg.stream.publish_rate if args.publish_rate is None else args.publish_rate
    try:
        server = StreamServer(host=host, port=port,
                              config=cfg.session_config(), publish_rate=rate)
    except OSError as e:
        print(f"error: cannot listen on {host}:{port}: {e}", file=sys.stderr)
        return 3
    print(f"listening on {server.host}:{server.port}", flush=True)
    for signum in (signal.SIGINT, signal.SIGTERM):
        try:
            signal.signal(signum, lambda *_: server.request_stop())
        except ValueError:
            pass  # not the main thread (e.g. under a test harness)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
    return 0


def _do_replay(path: str, speed: float, cfg: RunConfig, out: str | None) -> int:
    session = PredictionSession(cfg.session_config())
    summary = stream_replay(path, session, speed=speed)
    text = json.dumps({"config": cfg.as_dict(), "summary": summary},
                      sort_keys=True)
    print(text)
    if out is not None:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    return 0


def cmd_replay(args, cfg: RunConfig) -> int:
    return _do_replay(args.file, args.speed, cfg, args.out)


def build_parser() -> argparse.ArgumentParser:
    # accepted both before and after the subcommand; SUPPRESS keeps the
    # subparser from clobbering a value given up front
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", default=argparse.SUPPRESS,
                        help="TOML run configuration")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="override the configured seed")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        default=argparse.SUPPRESS,
                        help="override a config entry, e.g. --set aero.L=3.6")

    parser = argparse.ArgumentParser(
        prog="shuttlekit", parents=[common],
        description="shuttle flight corpus, intercept prediction, and rally tools")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_parser(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    p = add_parser("generate", help="sample launches and write the corpus")
    p.add_argument("--n", type=int, default=100000, help="launches to sample")
    p.add_argument("--out", default="corpus.jsonl")
    p.add_argument("--stats", default="corpus_stats.csv")
    p.add_argument("--include-trajectory", action="store_true",
                   help="embed full trajectories (large files)")
    p.set_defaults(func=cmd_generate)

    p = add_parser("evaluate-ekf", help="filter error curves on a corpus sample")
    p.add_argument("--records", type=int, default=20)
    p.add_argument("--sigma", type=float, default=None,
                   help="measurement noise in meters (default: config noise.sigma)")
    p.add_argument("--out", default="error_curves.csv")
    p.set_defaults(func=cmd_evaluate_ekf)

    p = add_parser("rally", help="two-sided rallies and the error sweep")
    p.add_argument("--rallies", type=int, default=200, help="rallies per sigma")
    p.add_argument("--sigma-pos", default="0,0.02,0.05,0.1",
                   help="comma-separated position-error sigmas (m)")
    p.add_argument("--max-hits", type=int, default=21)
    p.add_argument("--log-rallies", type=int, default=3,
                   help="rallies per sigma to write to the log")
    p.add_argument("--sweep-out", default="rally_sweep.csv")
    p.add_argument("--log-out", default="rally_log.jsonl")
    p.set_defaults(func=cmd_rally)

    p = add_parser("serve", help="run the streaming prediction service")
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--publish-rate", type=float, default=None)
    p.add_argument("--replay", metavar="FILE", default=None,
                   help="replay a file instead of serving")
    p.add_argument("--speed", type=float, default=math.inf,
                   help="replay pacing multiplier (inf = fast)")
    p.set_defaults(func=cmd_serve)

    p = add_parser("replay", help="feed a recorded stream file offline")
    p.add_argument("file")
    p.add_argument("--speed", type=float, default=math.inf)
    p.add_argument("--out", default=None, help="also write the summary JSON here")
    p.set_defaults(func=cmd_replay)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        overrides = dict(parse_override(s) for s in getattr(args, "set", []))
        cfg = load_config(getattr(args, "config", None), overrides)
        seed = getattr(args, "seed", None)
        if seed is not None:
            cfg = replace(cfg, seed=seed)
        return args.func(args, cfg)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
