"""Command-line entry point: ``emulate``, ``train``, ``run`` and ``baseline``.

Settings come from built-in defaults, then an optional ``--config`` file of
``key = value`` lines (``#`` starts a comment), then ``--set key=value`` and
the dedicated flags.  Keys are the field names of the plant, the emulator and
the agent hyperparameters, plus ``readout_scale_<quantity>``.

Exit status: 0 on success, 1 on runtime failure, 2 on bad input or a
missing/corrupt file.
"""

from __future__ import annotations

import argparse
import contextlib
import dataclasses
import logging
import statistics
import sys
from pathlib import Path

from . import __version__
from .agent.baseline import linear_policy, load_theta, random_search_baseline, save_theta
from .agent.persist import BrainFormatError, load_brain
from .agent.qlearning import (DisturbancePlan, EpisodeMetrics, Hyperparams,
                              TrainingError, run_episode, train)
from .dynamics import PlantParams
from .emulator import QUANTITIES, REALTIME, VIRTUAL, AnalogEmulator, EmulatorConfig
from .hc import codec
from .hc.client import ClientError, HybridClient, InProcessTransport, TcpTransport
from .hc.server import (Session, TcpServer, Transcript, default_listen, parse_address,
                        serve_stdio)

log = logging.getLogger("analog_cartpole")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

_PLANT_KEYS = {f.name for f in dataclasses.fields(PlantParams)}
_EMULATOR_KEYS = {"speed", "dt", "accel_amplitude", "quantize_decimals", "noise_sigma",
                  "phi0_max", "jitter_ms", "machine_units"}
_HYPER_KEYS = set(Hyperparams.field_names())
_SCALE_PREFIX = "readout_scale_"


class UsageFailure(Exception):
    """Bad input: exits with status 2."""


@dataclasses.dataclass
class RunConfig:
    plant: PlantParams
    emulator: EmulatorConfig
    hyper: Hyperparams


def _coerce(value: str, like):
    if isinstance(like, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {value!r}")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value


def read_config_file(path) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageFailure(f"cannot read config file: {exc}") from exc
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageFailure(f"{path}:{n}: expected key = value")
        out[key.strip()] = value.strip()
    return out


def build_config(settings: dict[str, str], clock: str, seed: int | None) -> RunConfig:
    """Turn ``key -> text`` settings into validated plant/emulator/agent configs."""
    plant_kw, emu_kw, hyper_kw, scale = {}, {}, {}, {}
    plant_defaults, emu_defaults = PlantParams(), EmulatorConfig()
    hyper_defaults = Hyperparams()
    try:
        for key, text in settings.items():
            if key in _PLANT_KEYS:
                plant_kw[key] = _coerce(text, getattr(plant_defaults, key))
            elif key in _EMULATOR_KEYS:
                emu_kw[key] = _coerce(text, getattr(emu_defaults, key))
            elif key in _HYPER_KEYS:
                hyper_kw[key] = _coerce(text, getattr(hyper_defaults, key))
            elif key.startswith(_SCALE_PREFIX) and key[len(_SCALE_PREFIX):] in QUANTITIES:
                scale[key[len(_SCALE_PREFIX):]] = float(text)
            else:
                raise UsageFailure(f"unknown setting {key!r}")
        plant = PlantParams(**plant_kw)
        emulator = EmulatorConfig(clock=clock, seed=seed, plant=plant, readout_scale=scale,
                                  **emu_kw)
        hyper = Hyperparams(**hyper_kw)
    except (TypeError, ValueError) as exc:
        raise UsageFailure(f"invalid setting: {exc}") from exc
    return RunConfig(plant, emulator, hyper)


def _settings(args) -> dict[str, str]:
    settings = read_config_file(args.config) if args.config else {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageFailure(f"--set expects KEY=VALUE, got {item!r}")
        settings[key.strip()] = value.strip()
    for flag in ("probe", "impulse_ms", "max_steps"):
        value = getattr(args, flag, None)
        if value is not None:
            settings[flag] = str(value)
    return settings


def load_run_config(args) -> RunConfig:
    clock = VIRTUAL if args.virtual_time else REALTIME
    return build_config(_settings(args), clock, args.seed)


# -- connections -------------------------------------------------------------


@contextlib.contextmanager
def open_client(args, cfg: RunConfig):
    """Yield a ready client: remote (``--connect``), in-process, or a private server."""
    dialect = args.dialect
    if args.connect:
        host, port = parse_address(args.connect)
        client = HybridClient(TcpTransport(host, port), dialect, cfg.hyper.impulse_ms)
        server = None
    else:
        emulator = AnalogEmulator(cfg.emulator)
        if args.in_process:
            client = HybridClient(InProcessTransport(Session(emulator, dialect)), dialect,
                                  cfg.hyper.impulse_ms)
            server = None
        else:
            # keep the wire path in use: serve the emulator on a private port
            server = TcpServer(emulator, "127.0.0.1", 0, dialect).start()
            client = HybridClient(TcpTransport("127.0.0.1", server.port), dialect,
                                  cfg.hyper.impulse_ms)
    try:
        client.reset()
        client.define_readout_group()
        yield client
    finally:
        with contextlib.suppress(ClientError, OSError):
            client.close()
        if server is not None:
            server.stop()


def bounds_for(cfg: RunConfig) -> PlantParams:
    return cfg.emulator.readout_bounds()


# -- subcommands -------------------------------------------------------------


def cmd_emulate(args) -> int:
    cfg = load_run_config(args)
    emulator = AnalogEmulator(cfg.emulator)
    transcript = Transcript(open(args.transcript, "w")) if args.transcript else None
    try:
        if args.stdio:
            serve_stdio(emulator, args.dialect, transcript)
            return EXIT_OK
        host, port = parse_address(args.listen or default_listen())
        try:
            server = TcpServer(emulator, host, port, args.dialect, transcript,
                               max_sessions=args.sessions)
        except OSError as exc:
            print(f"error: cannot listen on {host}:{port}: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        print(f"listening on {server.address[0]}:{server.port}", flush=True)
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
        return EXIT_OK
    finally:
        if transcript is not None:
            transcript.stream.close()


def cmd_train(args) -> int:
    cfg = load_run_config(args)
    brain = None
    if args.resume:
        brain = _load_brain(args.resume)
    metrics_path = Path(args.metrics)
    brain_path = Path(args.brain)
    try:
        fh = open(metrics_path, "w")
    except OSError as exc:
        raise UsageFailure(f"cannot write metrics: {exc}") from exc
    steps: list[int] = []

    def record(m: EpisodeMetrics) -> None:
        fh.write(m.csv_row() + "\n")
        fh.flush()
        steps.append(m.steps)
        if args.verbose:
            print(f"episode {m.episode}: {m.steps} steps", flush=True)

    with fh:
        fh.write(EpisodeMetrics.HEADER + "\n")
        try:
            with open_client(args, cfg) as client:
                train(client, cfg.hyper, args.episodes, args.seed, bounds_for(cfg),
                      brain_path=brain_path, brain=brain, on_episode=record)
        except (TrainingError, ClientError) as exc:
            print(f"error: training stopped: {exc}", file=sys.stderr)
            print(f"{len(steps)} episodes recorded in {metrics_path}", file=sys.stderr)
            return EXIT_RUNTIME
    tail = steps[-50:]
    print(f"episodes: {len(steps)}")
    print(f"median steps over last {len(tail)} episodes: {statistics.median(tail):g}")
    print(f"brain: {brain_path}")
    return EXIT_OK


def _load_brain(path):
    try:
        return load_brain(path)
    except OSError as exc:
        raise UsageFailure(f"cannot read brain: {exc}") from exc
    except BrainFormatError as exc:
        raise UsageFailure(str(exc)) from exc


def cmd_run(args) -> int:
    if bool(args.brain) == bool(args.theta):
        raise UsageFailure("give exactly one of --brain or --theta")
    cfg = load_run_config(args)
    disturbance = None
    if args.disturb:
        try:
            disturbance = DisturbancePlan.parse(args.disturb)
        except ValueError as exc:
            raise UsageFailure(str(exc)) from exc
    brain, policy = None, None
    if args.brain:
        brain = _load_brain(args.brain)
        hyper = dataclasses.replace(brain.hyper, max_steps=cfg.hyper.max_steps,
                                    impulse_ms=cfg.hyper.impulse_ms)
    else:
        try:
            policy = linear_policy(load_theta(args.theta))
        except OSError as exc:
            raise UsageFailure(f"cannot read controller: {exc}") from exc
        except ValueError as exc:
            raise UsageFailure(str(exc)) from exc
        hyper = cfg.hyper
    try:
        with open_client(args, cfg) as client:
            for k in range(args.episodes):
                res = run_episode(client, brain, hyper, bounds_for(cfg), learn=False,
                                  eps=0.0, policy=policy, disturbance=disturbance)
                for event in res.events:
                    print(f"episode {k + 1}: {event}")
                ending = "fell" if res.terminal else "cap reached"
                print(f"episode {k + 1}: {res.steps} steps ({ending})", flush=True)
    except ClientError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_baseline(args) -> int:
    cfg = load_run_config(args)
    try:
        with open_client(args, cfg) as client:
            theta, length = random_search_baseline(client, args.tries, args.seed,
                                                   bounds_for(cfg), cfg.hyper.max_steps,
                                                   cfg.hyper.impulse_ms)
    except ClientError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print("theta: " + " ".join(repr(float(v)) for v in theta))
    print(f"steps: {length}")
    if args.save:
        try:
            save_theta(theta, length, args.save)
        except OSError as exc:
            print(f"error: cannot save controller: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
    return EXIT_OK


# -- parser ------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="key = value settings file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one setting (repeatable)")
    p.add_argument("--seed", type=int, default=None, help="seed for all random streams")
    p.add_argument("--virtual-time", action="store_true",
                   help="deterministic simulated clock instead of the wall clock")
    p.add_argument("--dialect", choices=(codec.STRICT, codec.EXTENSION),
                   default=codec.EXTENSION, help="wire dialect (default: %(default)s)")


def _agent_side(p: argparse.ArgumentParser) -> None:
    where = p.add_mutually_exclusive_group()
    where.add_argument("--connect", metavar="HOST:PORT",
                       help="use a running emulator instead of starting one")
    where.add_argument("--in-process", action="store_true",
                       help="talk to a private emulator without sockets")
    p.add_argument("--max-steps", type=int, dest="max_steps", help="episode length cap")
    p.add_argument("--impulse-ms", type=int, dest="impulse_ms", help="impulse duration")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="analog-cartpole",
        description="Cart-pole balancing on an emulated analog computer.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="chatty output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("emulate", help="serve the emulated machine")
    _common(p)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--listen", metavar="HOST:PORT",
                      help="TCP address (port 0 picks one; default from $HC_LISTEN)")
    mode.add_argument("--stdio", action="store_true", help="serve one session on stdin/stdout")
    p.add_argument("--sessions", type=int, default=None,
                   help="exit after this many sessions (default: serve forever)")
    p.add_argument("--transcript", metavar="FILE", help="log every frame to FILE")
    p.set_defaults(func=cmd_emulate)

    p = sub.add_parser("train", help="train a Q-learning agent")
    _common(p)
    _agent_side(p)
    p.add_argument("--episodes", type=int, default=500)
    p.add_argument("--probe", type=int, help="snapshot interval in episodes")
    p.add_argument("--brain", default="brain.json", help="brain file (default: %(default)s)")
    p.add_argument("--resume", metavar="BRAIN", help="continue training this brain")
    p.add_argument("--metrics", default="metrics.csv", help="CSV output (default: %(default)s)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("run", help="exploit a trained brain or baseline controller")
    _common(p)
    _agent_side(p)
    p.add_argument("--brain", help="brain file from 'train'")
    p.add_argument("--theta", help="controller file from 'baseline --save'")
    p.add_argument("--episodes", type=int, default=1)
    p.add_argument("--disturb", metavar="MAG:MS@S",
                   help="push the cart with MAG for MS milliseconds at S seconds")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("baseline", help="random search for a linear controller")
    _common(p)
    _agent_side(p)
    p.add_argument("--tries", type=int, default=2000)
    p.add_argument("--save", metavar="FILE", help="write the best controller here")
    p.set_defaults(func=cmd_baseline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    for name in ("episodes", "tries", "sessions"):
        value = getattr(args, name, None)
        if value is not None and value < 1:
            parser.error(f"--{name} must be >= 1")
    try:
        return args.func(args)
    except UsageFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
