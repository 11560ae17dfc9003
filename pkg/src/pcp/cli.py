"""Command-line interface: ``pcp send``, ``pcp receive``, ``pcp simulate``.

The real-network transport is an adapter slot that is not bundled, so both
commands require ``--sim-config`` pointing at a simulation world (see
simworld). ``simulate`` runs scripted scenarios — most usefully the full
send/receive round trip in one process, with the printed passphrase fed
from the sender's output into the receiver's argv.

Exit codes: 0 success, 2 usage, 3 discovery timeout / peer not found,
4 authentication exhausted, 5 transfer rejected, 6 I/O or transfer
failure, 7 interrupted.
"""

from __future__ import annotations

import argparse
import io
import logging
import os
import sys
import tempfile

from . import kernel as ker
from .errors import PassphraseParseError, PcpError
from .session import run_receiver, run_sender
from .simworld import SimWorld
from .transfer import (
    STATUS_ABORTED,
    STATUS_COMPLETED,
    STATUS_FAILED,
    STATUS_REJECTED,
    TransferManifest,
    TransferOutcome,
)

logger = logging.getLogger("pcp.cli")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_TIMEOUT = 3
EXIT_AUTH = 4
EXIT_REJECTED = 5
EXIT_IO = 6
EXIT_INTERRUPTED = 7

CODE_PREFIX = "Code is: "


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcp",
        description="Passphrase-rendezvous peer-to-peer file copy.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_send = sub.add_parser("send", help="offer a file and print the passphrase")
    p_send.add_argument("-w", "--word-count", type=int, default=None,
                        help="number of passphrase words (default 4)")
    p_send.add_argument("--sim-config", metavar="F", default=None,
                        help="run on the simulated network described by F")
    p_send.add_argument("file", help="path of the file to send")

    p_recv = sub.add_parser("receive", help="fetch the file behind a passphrase")
    p_recv.add_argument("--yes", action="store_true",
                        help="accept the transfer without prompting")
    p_recv.add_argument("--dir", default=".", metavar="D",
                        help="destination directory (default: current)")
    p_recv.add_argument("--sim-config", metavar="F", default=None,
                        help="run on the simulated network described by F")
    p_recv.add_argument("words", help="dash-joined passphrase from the sender")

    p_sim = sub.add_parser("simulate", help="run a scripted scenario hermetically")
    p_sim.add_argument("--sim-config", metavar="F", required=True)
    p_sim.add_argument("--scenario", metavar="S", default="transfer",
                       help="scenario name (available: transfer)")
    p_sim.add_argument("--size", type=int, default=65536,
                       help="payload size in bytes for the transfer scenario")
    return parser


def _use_color(out) -> bool:
    return getattr(out, "isatty", lambda: False)() and not os.environ.get("NO_COLOR")


def _emit_code(code: str, out) -> None:
    line = f"{CODE_PREFIX}{code}"
    if _use_color(out):
        line = f"\033[1m{line}\033[0m"
    print(line, file=out, flush=True)


def render_progress(bytes_done: int, total: int, elapsed: float) -> str:
    """One status line: percentage and mean throughput."""
    pct = 100 if total == 0 else min(100, bytes_done * 100 // total)
    rate = bytes_done / elapsed if elapsed > 0 else 0.0
    return f"{pct:3d}% {_human(bytes_done)}/{_human(total)} {_human(rate)}/s"


def _human(n: float) -> str:
    for unit in ("B", "KiB", "MiB", "GiB"):
        if n < 1024 or unit == "GiB":
            return f"{n:.0f} {unit}" if unit == "B" else f"{n:.1f} {unit}"
        n /= 1024
    return f"{n:.1f} GiB"


class _ProgressPrinter:
    """Monotone progress display; prints 100% exactly once, newline-terminated."""

    def __init__(self, out, clock):
        self.out = out
        self.clock = clock
        self.started_at: float | None = None
        self.last_line = ""
        self.finished = False

    def __call__(self, bytes_done: int, total: int) -> None:
        if self.finished:
            return
        if self.started_at is None:
            self.started_at = self.clock.now()
        line = render_progress(bytes_done, total, self.clock.now() - self.started_at)
        if line == self.last_line:
            return
        self.last_line = line
        interactive = getattr(self.out, "isatty", lambda: False)()
        end = "\r" if interactive else "\n"
        done = total > 0 and bytes_done >= total
        if done:
            self.finished = True
            end = "\n"
        print(line, end=end, file=self.out, flush=True)

    def finish(self) -> None:
        if not self.finished and self.last_line:
            print("", file=self.out, flush=True)
        self.finished = True


def outcome_exit_code(outcome: TransferOutcome) -> int:
    if outcome.status == STATUS_COMPLETED:
        return EXIT_OK
    if outcome.status == STATUS_REJECTED:
        return EXIT_REJECTED
    if outcome.status == STATUS_FAILED:
        if outcome.reason in ("timeout", "not-found"):
            return EXIT_TIMEOUT
        if outcome.reason == "auth-exhausted":
            return EXIT_AUTH
        return EXIT_IO
    return EXIT_IO  # aborted and anything else: transfer-level failure


async def send_command(args, world: SimWorld, out) -> int:
    if not os.path.isfile(args.file) or not os.access(args.file, os.R_OK):
        print(f"pcp: cannot read file: {args.file}", file=out)
        return EXIT_IO
    overrides = {}
    if args.word_count is not None:
        overrides["word_count"] = args.word_count
    try:
        config = world.session_config(**overrides)
    except (PcpError, ValueError) as e:
        print(f"pcp: {e}", file=out)
        return EXIT_USAGE
    node = world.new_node()
    progress = _ProgressPrinter(out, world.kernel.clock)
    outcome = await run_sender(
        node,
        config,
        args.file,
        on_code=lambda code: _emit_code(code, out),
        progress=progress,
        rng=world.kernel.rng("sender"),
    )
    progress.finish()
    print(f"pcp: {_describe(outcome)}", file=out)
    return outcome_exit_code(outcome)


async def receive_command(args, world: SimWorld, out) -> int:
    decide = _make_decider(args, out)
    try:
        config = world.session_config()
    except (PcpError, ValueError) as e:
        print(f"pcp: {e}", file=out)
        return EXIT_USAGE
    node = world.new_node()
    progress = _ProgressPrinter(out, world.kernel.clock)
    try:
        outcome = await run_receiver(
            node,
            config,
            args.words,
            dest_dir=args.dir,
            decide=decide,
            progress=progress,
            rng=world.kernel.rng("receiver"),
        )
    except PassphraseParseError as e:
        print(f"pcp: bad passphrase: {e}", file=out)
        return EXIT_USAGE
    progress.finish()
    if outcome.path:
        print(f"pcp: saved to {outcome.path}", file=out)
    print(f"pcp: {_describe(outcome)}", file=out)
    return outcome_exit_code(outcome)


def _describe(outcome: TransferOutcome) -> str:
    if outcome.status == STATUS_COMPLETED:
        return f"transfer completed ({outcome.bytes_received} bytes, digest verified)"
    if outcome.reason:
        return f"transfer {outcome.status} ({outcome.reason})"
    return f"transfer {outcome.status}"


def _make_decider(args, out):
    if args.yes:
        async def accept(manifest: TransferManifest) -> bool:
            print(
                f"Receiving '{manifest.name}' ({manifest.size} bytes); accepting (--yes)",
                file=out,
            )
            return True
        return accept

    if sys.stdin.isatty():
        async def prompt(manifest: TransferManifest) -> bool:
            answer = input(
                f"Receive '{manifest.name}' ({manifest.size} bytes)? [y/N] "
            )
            return answer.strip().lower() in ("y", "yes")
        return prompt

    async def deny(manifest: TransferManifest) -> bool:
        print(
            f"pcp: declining '{manifest.name}' ({manifest.size} bytes): "
            "stdin is not a terminal and --yes was not given",
            file=out,
        )
        return False
    return deny


async def _scenario_transfer(args, world: SimWorld, out) -> int:
    """CLI round trip on one kernel: send's printed code feeds receive."""
    payload = world.kernel.rng("scenario.payload").randbytes(args.size)
    workdir = tempfile.mkdtemp(prefix="pcp-sim-")
    src = os.path.join(workdir, "payload.bin")
    with open(src, "wb") as f:
        f.write(payload)
    inbox = os.path.join(workdir, "inbox")

    parser = build_parser()
    send_out = io.StringIO()
    send_args = parser.parse_args(["send", "--sim-config", args.sim_config, src])
    send_task = world.kernel.spawn(send_command(send_args, world, send_out), name="cli-send")

    code = None
    for _ in range(10_000):
        await ker.sleep(0.05)
        for line in send_out.getvalue().splitlines():
            if line.startswith(CODE_PREFIX):
                code = line[len(CODE_PREFIX):].strip()
                break
        if code or send_task.finished:
            break
    if code is None:
        print("simulate: sender never printed a passphrase", file=out)
        return EXIT_IO

    recv_args = parser.parse_args(
        ["receive", "--yes", "--dir", inbox, "--sim-config", args.sim_config, code]
    )
    recv_rc = await receive_command(recv_args, world, out)
    send_rc = await send_task.join()
    for line in send_out.getvalue().splitlines():
        print(f"[send] {line}", file=out)
    print(f"simulate: send exit {send_rc}, receive exit {recv_rc}", file=out)
    return send_rc or recv_rc


SCENARIOS = {"transfer": _scenario_transfer}


def main(argv: list[str] | None = None, out=None) -> int:
    out = out if out is not None else sys.stdout
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    if args.command in ("send", "receive") and not args.sim_config:
        print(
            "pcp: the real-network transport is not bundled in this build; "
            "pass --sim-config to run on a simulated network (see README)",
            file=out,
        )
        return EXIT_USAGE

    try:
        world = SimWorld.load(args.sim_config)
    except (OSError, PcpError, ValueError) as e:
        print(f"pcp: cannot load sim config: {e}", file=out)
        return EXIT_USAGE

    try:
        if args.command == "send":
            return world.kernel.run(send_command(args, world, out))
        if args.command == "receive":
            return world.kernel.run(receive_command(args, world, out))
        scenario = SCENARIOS.get(args.scenario)
        if scenario is None:
            print(
                f"pcp: unknown scenario {args.scenario!r} "
                f"(available: {', '.join(sorted(SCENARIOS))})",
                file=out,
            )
            return EXIT_USAGE
        return world.kernel.run(scenario(args, world, out))
    except KeyboardInterrupt:
        print("pcp: interrupted", file=out)
        return EXIT_INTERRUPTED
    except PassphraseParseError as e:
        print(f"pcp: bad passphrase: {e}", file=out)
        return EXIT_USAGE


def _setup_logging() -> None:
    level_name = os.environ.get("PCP_LOG", "").upper()
    if level_name:
        level = getattr(logging, level_name, None)
        if isinstance(level, int):
            logging.basicConfig(
                level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s"
            )


if __name__ == "__main__":
    sys.exit(main())
