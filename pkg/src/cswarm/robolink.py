"""Station-robot TCP link: text protocol, lockstep transport, fault handling.

Grammar: one UTF-8 line per message, fields space-separated, newline
terminated.  Numeric fields use fixed 9-decimal formatting; ids and
sequence numbers are decimal integers.

    HELLO <id> <version>              session open (both directions)
    POSE  <id> <x> <y> <theta> <t>    robot -> station
    CMD   <id> <v> <omega> <seq>      station -> robot
    BYE   <id>                        session close (both directions)

Frames advance on the station clock with sequence numbers, never wall
time: each frame the station sends one CMD per live robot and waits for a
POSE stamped at or after that frame's simulation time.  A robot applies a
command, integrates its drive kinematics one fixed step, and reports.
Commands arriving out of order are discarded (never apply seq n after
n+1); a missed command holds the previous one.  A disconnected robot is
marked stale: its last pose freezes, the loop continues, and a new HELLO
with the same id resumes the session.
"""

from __future__ import annotations

import math
import socket
import threading
import time
from dataclasses import dataclass

import numpy as np

from . import diffdrive
from .diffdrive import RobotLimits, RobotState

PROTOCOL_VERSION = "CSWARM/1"
_WIRE_FMT = "{:.9f}"


class ProtocolError(ValueError):
    """A line violated the wire grammar; token_index is 1-based."""

    def __init__(self, token_index: int, reason: str, line: str = ""):
        self.token_index = token_index
        self.reason = reason
        self.line = line
        super().__init__(f"parse error at token {token_index}: {reason}")


@dataclass(frozen=True)
class Hello:
    robot_id: int
    version: str = PROTOCOL_VERSION


@dataclass(frozen=True)
class Pose:
    robot_id: int
    x: float
    y: float
    theta: float
    t: float


@dataclass(frozen=True)
class Cmd:
    robot_id: int
    v: float
    omega: float
    seq: int


@dataclass(frozen=True)
class Bye:
    robot_id: int


def encode(msg) -> str:
    """Render a message as one protocol line (without the newline)."""
    if isinstance(msg, Hello):
        return f"HELLO {msg.robot_id} {msg.version}"
    if isinstance(msg, Pose):
        nums = " ".join(_WIRE_FMT.format(v) for v in (msg.x, msg.y, msg.theta, msg.t))
        return f"POSE {msg.robot_id} {nums}"
    if isinstance(msg, Cmd):
        nums = " ".join(_WIRE_FMT.format(v) for v in (msg.v, msg.omega))
        return f"CMD {msg.robot_id} {nums} {msg.seq}"
    if isinstance(msg, Bye):
        return f"BYE {msg.robot_id}"
    raise TypeError(f"encode: not a protocol message: {msg!r}")


def _parse_int(tokens, i: int, what: str, minimum: int = 0) -> int:
    if i > len(tokens):
        raise ProtocolError(i, f"missing {what}")
    tok = tokens[i - 1]
    try:
        value = int(tok)
    except ValueError:
        raise ProtocolError(i, f"{what} is not an integer: {tok!r}") from None
    if value < minimum:
        raise ProtocolError(i, f"{what} must be >= {minimum}, got {value}")
    return value


def _parse_float(tokens, i: int, what: str) -> float:
    if i > len(tokens):
        raise ProtocolError(i, f"missing {what}")
    tok = tokens[i - 1]
    try:
        value = float(tok)
    except ValueError:
        raise ProtocolError(i, f"{what} is not a number: {tok!r}") from None
    if not math.isfinite(value):
        raise ProtocolError(i, f"{what} must be finite, got {tok!r}")
    return value


def decode(line: str):
    """Parse one protocol line into its message, or raise ProtocolError."""
    tokens = line.split()
    if not tokens:
        raise ProtocolError(1, "empty line", line)
    verb = tokens[0]
    try:
        if verb == "HELLO":
            rid = _parse_int(tokens, 2, "robot id")
            if len(tokens) < 3:
                raise ProtocolError(3, "missing protocol version")
            if len(tokens) > 3:
                raise ProtocolError(4, "unexpected extra field")
            return Hello(rid, tokens[2])
        if verb == "POSE":
            rid = _parse_int(tokens, 2, "robot id")
            x = _parse_float(tokens, 3, "x")
            y = _parse_float(tokens, 4, "y")
            theta = _parse_float(tokens, 5, "theta")
            t = _parse_float(tokens, 6, "t")
            if len(tokens) > 6:
                raise ProtocolError(7, "unexpected extra field")
            return Pose(rid, x, y, theta, t)
        if verb == "CMD":
            rid = _parse_int(tokens, 2, "robot id")
            v = _parse_float(tokens, 3, "v")
            omega = _parse_float(tokens, 4, "omega")
            seq = _parse_int(tokens, 5, "seq", minimum=1)
            if len(tokens) > 5:
                raise ProtocolError(6, "unexpected extra field")
            return Cmd(rid, v, omega, seq)
        if verb == "BYE":
            rid = _parse_int(tokens, 2, "robot id")
            if len(tokens) > 2:
                raise ProtocolError(3, "unexpected extra field")
            return Bye(rid)
    except ProtocolError as err:
        raise ProtocolError(err.token_index, err.reason, line) from None
    raise ProtocolError(1, f"unknown verb {verb!r}", line)


class _Session:
    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.reader = sock.makefile("r", encoding="utf-8", newline="\n")
        self.write_lock = threading.Lock()
        self.alive = True

    def send_line(self, line: str) -> bool:
        try:
            with self.write_lock:
                self.sock.sendall(line.encode("utf-8") + b"\n")
            return True
        except OSError:
            self.alive = False
            return False

    def close(self):
        self.alive = False
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass


class StationServer:
    """Accepts robot sessions and runs the lockstep frame exchange."""

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        dt: float = 0.01,
        pose_timeout: float = 10.0,
    ):
        self.host = host
        self.port = port
        self.dt = dt
        self.pose_timeout = pose_timeout
        self.parse_errors: list = []
        self._cond = threading.Condition()
        self._poses: dict = {}
        self._sessions: dict = {}
        self._stale: set = set()
        self._seq = 0
        self._closing = False
        self._listener: socket.socket | None = None
        self._threads: list = []

    def start(self) -> int:
        """Bind, listen, and return the actual port."""
        self._listener = socket.create_server((self.host, self.port))
        self._listener.settimeout(0.2)
        self.port = self._listener.getsockname()[1]
        th = threading.Thread(target=self._accept_loop, daemon=True)
        th.start()
        self._threads.append(th)
        return self.port

    def _accept_loop(self):
        while not self._closing:
            try:
                sock, _addr = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                return
            th = threading.Thread(target=self._serve, args=(sock,), daemon=True)
            th.start()
            self._threads.append(th)

    def _serve(self, sock: socket.socket):
        sock.settimeout(None)
        session = _Session(sock)
        robot_id = None
        try:
            for line in session.reader:
                try:
                    msg = decode(line)
                except ProtocolError as err:
                    with self._cond:
                        self.parse_errors.append(str(err))
                    continue
                if isinstance(msg, Hello):
                    if msg.version != PROTOCOL_VERSION:
                        with self._cond:
                            self.parse_errors.append(
                                f"version mismatch from robot {msg.robot_id}: {msg.version!r}"
                            )
                        session.send_line(encode(Bye(msg.robot_id)))
                        break
                    robot_id = msg.robot_id
                    session.send_line(encode(Hello(robot_id)))
                    with self._cond:
                        self._sessions[robot_id] = session
                        self._stale.discard(robot_id)
                        self._cond.notify_all()
                elif isinstance(msg, Pose):
                    with self._cond:
                        self._poses[msg.robot_id] = msg
                        self._cond.notify_all()
                elif isinstance(msg, Bye):
                    break
                # a Cmd from a robot is grammatical but meaningless; ignore
        except (OSError, ValueError):
            pass
        finally:
            session.close()
            with self._cond:
                if robot_id is not None and self._sessions.get(robot_id) is session:
                    self._stale.add(robot_id)
                    self._cond.notify_all()

    def ready(self, robot_ids, timeout: float = 30.0) -> bool:
        """Wait until every listed robot has said HELLO and sent a pose."""
        deadline = time.monotonic() + timeout
        with self._cond:
            while True:
                have = all(
                    rid in self._sessions and rid in self._poses for rid in robot_ids
                )
                if have:
                    return True
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return False
                self._cond.wait(remaining)

    def live_robots(self):
        with self._cond:
            return [rid for rid in self._sessions if rid not in self._stale]

    def step(self, commands: dict) -> dict:
        """Send one CMD per robot and wait for the matching poses.

        Robots that miss the pose deadline or whose session died are marked
        stale; their last pose is returned frozen.
        """
        self._seq += 1
        seq = self._seq
        target_t = seq * self.dt
        with self._cond:
            live = {rid for rid in commands if rid not in self._stale}
        for rid in sorted(live):
            v, omega = commands[rid]
            session = self._sessions.get(rid)
            if session is None or not session.send_line(encode(Cmd(rid, v, omega, seq))):
                with self._cond:
                    self._stale.add(rid)
                    self._cond.notify_all()
        deadline = time.monotonic() + self.pose_timeout
        with self._cond:
            while True:
                waiting = [
                    rid
                    for rid in live
                    if rid not in self._stale
                    and (rid not in self._poses or self._poses[rid].t < target_t - 1e-9)
                ]
                if not waiting:
                    break
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    self._stale.update(waiting)
                    break
                self._cond.wait(remaining)
            return dict(self._poses)

    def stale_robots(self):
        with self._cond:
            return set(self._stale)

    def close(self):
        self._closing = True
        with self._cond:
            sessions = list(self._sessions.items())
        for rid, session in sessions:
            session.send_line(encode(Bye(rid)))
            session.close()
        if self._listener is not None:
            try:
                self._listener.close()
            except OSError:
                pass
        for th in self._threads:
            th.join(timeout=2.0)


class NetworkRobotDriver:
    """Frame-loop adapter: tracking commands out over the link, poses back."""

    def __init__(self, station: StationServer, robot_ids, gain: float, limits: RobotLimits):
        self.station = station
        self.robot_ids = list(robot_ids)
        self.gain = gain
        self.limits = limits

    def step(self, robots, observed, references):
        commands = {}
        for rid, obs, (x_des, v_des) in zip(self.robot_ids, observed, references):
            v, omega = diffdrive.tracking_command(obs, x_des, v_des, self.gain, self.limits)
            commands[rid] = (diffdrive.quantize(v), diffdrive.quantize(omega))
        poses = self.station.step(commands)
        out = []
        for rid, prev in zip(self.robot_ids, robots):
            pose = poses.get(rid)
            if pose is None or rid in self.station.stale_robots():
                out.append(prev)  # frozen
            else:
                cmd = commands.get(rid, (prev.cmd_v, prev.cmd_omega))
                out.append(RobotState((pose.x, pose.y), pose.theta, cmd[0], cmd[1]))
        return out

    def close(self):
        self.station.close()


class RobotClient:
    """Simulated robot: applies CMD lines to drive kinematics, reports POSE.

    drop_rate > 0 emulates lost commands on the robot side: the tick still
    happens but holds the previous command.  The applied-command log keeps
    (seq, v, omega, held) tuples for inspection.
    """

    def __init__(
        self,
        host: str,
        port: int,
        robot_id: int,
        state0: RobotState,
        dt: float,
        drop_rate: float = 0.0,
        drop_seed: int = 0,
        timeout: float = 30.0,
    ):
        self.host = host
        self.port = port
        self.robot_id = robot_id
        self.state = state0
        self.dt = dt
        self.drop_rate = drop_rate
        self.timeout = timeout
        self.log: list = []
        self.discarded: list = []
        self.parse_errors: list = []
        self._rng = np.random.default_rng(drop_seed)

    def run(self):
        """Connect, greet, then serve commands until BYE or disconnect."""
        with socket.create_connection((self.host, self.port), timeout=self.timeout) as sock:
            sock.settimeout(self.timeout)
            session = _Session(sock)
            session.send_line(encode(Hello(self.robot_id)))
            session.send_line(self._pose_line(0.0))
            last_seq = 0
            last_cmd = (self.state.cmd_v, self.state.cmd_omega)
            try:
                for line in session.reader:
                    try:
                        msg = decode(line)
                    except ProtocolError as err:
                        self.parse_errors.append(str(err))
                        continue
                    if isinstance(msg, Bye):
                        break
                    if isinstance(msg, Hello):
                        continue
                    if not isinstance(msg, Cmd):
                        continue
                    if msg.seq <= last_seq:
                        self.discarded.append(msg.seq)
                        continue
                    held = self.drop_rate > 0.0 and bool(self._rng.random() < self.drop_rate)
                    v, omega = last_cmd if held else (msg.v, msg.omega)
                    self.state = diffdrive.kinematics_step(self.state, v, omega, self.dt)
                    last_seq = msg.seq
                    last_cmd = (v, omega)
                    self.log.append((msg.seq, v, omega, held))
                    session.send_line(self._pose_line(msg.seq * self.dt))
            except (OSError, ValueError):
                pass
            finally:
                session.send_line(encode(Bye(self.robot_id)))
                session.close()

    def _pose_line(self, t: float) -> str:
        x, y = self.state.position
        return encode(Pose(self.robot_id, x, y, self.state.heading, t))
