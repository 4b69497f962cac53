"""Client for the gridlock episode wire protocol.

Speaks JSON lines to a server reached over TCP or a spawned subprocess,
mirrors the server's session state (one episode at a time, done flags),
and provides rollout helpers that accumulate evaluation metrics on the
client side. Rewards are sums of exactly representable floats, so the
metrics here match a server-side recomputation bit for bit.

Only the standard library is used; the server end is any process that
speaks the protocol (for instance `gridlock serve`).
"""

from __future__ import annotations

import json
import random
import shlex
import socket
import subprocess
from typing import Callable, Mapping

__all__ = [
    "BridgeError",
    "TransportError",
    "ServerError",
    "ShapeError",
    "RolloutAborted",
    "RemoteEnv",
    "RandomPolicy",
    "connect",
    "reset",
    "step",
    "run_episodes",
    "metrics_json",
]

ACTION_CODES = range(5)


class BridgeError(Exception):
    """Base class for everything this client raises on purpose."""


class TransportError(BridgeError):
    """The connection failed or was closed; no server verdict involved."""


class ServerError(BridgeError):
    """The server processed the request and refused it."""


class ShapeError(ServerError):
    """The server accepted the request but the reply violates the schema."""


class RolloutAborted(BridgeError):
    """A policy raised mid-rollout; metrics cover the finished episodes."""

    def __init__(self, message: str, metrics: dict):
        super().__init__(message)
        self.metrics = metrics


def _expect(condition: bool, what: str, payload) -> None:
    if not condition:
        raise ShapeError(f"malformed {what} in server reply: {payload!r}")


def _int_keyed(mapping, what: str) -> dict:
    _expect(isinstance(mapping, dict) and mapping, what, mapping)
    try:
        return {int(key): value for key, value in mapping.items()}
    except (TypeError, ValueError):
        raise ShapeError(f"non-integer agent key in {what}: {mapping!r}") from None


class RemoteEnv:
    """One protocol session: at most one live episode, strictly sequential.

    Construct through connect(). Layout metadata from the server's info
    reply is cached on the instance. Using the env after close() raises
    TransportError; stepping a finished episode raises ServerError
    without a round trip, matching what the server would say.
    """

    def __init__(self, send_line, recv_line, close_transport):
        self._send_line = send_line
        self._recv_line = recv_line
        self._close_transport = close_transport
        self._closed = False
        self._done = True  # no episode yet
        self._t = None
        self._agents: tuple[int, ...] = ()
        info = self.request({"cmd": "info"})
        self.capabilities = info
        self.protocol_version = info.get("protocol_version")
        self.layouts = info.get("layouts", {})

    # -- plumbing --

    @property
    def closed(self) -> bool:
        return self._closed

    def request(self, message: dict) -> dict:
        """One request/response exchange; raises on transport or refusal."""
        if self._closed:
            raise TransportError("connection is closed")
        try:
            self._send_line(json.dumps(message, sort_keys=True) + "\n")
            line = self._recv_line()
        except OSError as exc:
            raise TransportError(f"connection failed: {exc}") from exc
        if not line:
            raise TransportError("server closed the connection")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ShapeError(f"server sent invalid JSON: {line!r}") from exc
        _expect(isinstance(reply, dict) and "ok" in reply, "reply", reply)
        if not reply["ok"]:
            raise ServerError(str(reply.get("error", "unspecified error")))
        return reply

    def close(self) -> None:
        if self._closed:
            return
        try:
            self._send_line('{"cmd": "close"}\n')
            self._recv_line()
        except OSError:
            pass
        finally:
            self._closed = True
            self._close_transport()

    def __enter__(self) -> "RemoteEnv":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- episode control --

    def reset(self, **config) -> dict:
        """Start an episode; returns per-agent observations keyed by int id.

        Keyword arguments pass through to the protocol's reset request
        (layout, variant, n_agents, seed, obs_mode, sensor_range, tasks,
        and so on); None values are dropped.
        """
        request = {"cmd": "reset"}
        request.update(
            {key: value for key, value in config.items() if value is not None}
        )
        reply = self.request(request)
        _expect(reply.get("t") == 0, "reset t", reply)
        observations = _int_keyed(reply.get("obs"), "observations")
        self._agents = tuple(sorted(observations))
        self._done = False
        self._t = 0
        return observations

    def step(self, actions: Mapping[int, int]):
        """One joint step; returns (obs, rewards, terminated, truncated, info)."""
        if self._done:
            raise ServerError("episode finished")
        payload = {str(agent): int(code) for agent, code in actions.items()}
        reply = self.request({"cmd": "step", "actions": payload})
        observations = _int_keyed(reply.get("obs"), "observations")
        rewards = _int_keyed(reply.get("rewards"), "rewards")
        _expect(
            tuple(sorted(rewards)) == self._agents
            and all(isinstance(v, (int, float)) for v in rewards.values()),
            "rewards",
            reply,
        )
        terminated = reply.get("terminated")
        truncated = reply.get("truncated")
        _expect(
            isinstance(terminated, bool) and isinstance(truncated, bool),
            "flags",
            reply,
        )
        _expect(isinstance(reply.get("t"), int), "t", reply)
        self._t = reply["t"]
        self._done = terminated or truncated
        info = dict(reply.get("info") or {})
        info["t"] = reply["t"]
        return observations, rewards, terminated, truncated, info


def connect(endpoint: str, timeout: float = 30.0) -> RemoteEnv:
    """Open a session. Endpoints:

    - "tcp://HOST:PORT" (or plain "HOST:PORT"): TCP connection.
    - "stdio:COMMAND ...": spawn the command, speak over its pipes.
    """
    if endpoint.startswith("stdio:"):
        command = endpoint[len("stdio:"):].strip()
        if not command:
            raise ValueError("stdio endpoint needs a command")
        proc = subprocess.Popen(
            shlex.split(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
        )

        def send_line(line: str) -> None:
            if proc.poll() is not None:
                raise TransportError("server process exited")
            proc.stdin.write(line)
            proc.stdin.flush()

        def close_transport() -> None:
            proc.terminate()
            proc.wait(timeout=5)

        return RemoteEnv(send_line, proc.stdout.readline, close_transport)

    address = endpoint[len("tcp://"):] if endpoint.startswith("tcp://") else endpoint
    host, _, port_text = address.rpartition(":")
    if not host:
        host = "127.0.0.1"
    try:
        port = int(port_text)
    except ValueError:
        raise ValueError(f"bad endpoint {endpoint!r}") from None
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise TransportError(f"cannot connect to {endpoint}: {exc}") from exc
    reader = sock.makefile("r", encoding="utf-8", newline="\n")
    writer = sock.makefile("w", encoding="utf-8", newline="\n")

    def send_line(line: str) -> None:
        writer.write(line)
        writer.flush()

    def close_transport() -> None:
        for handle in (reader, writer):
            try:
                handle.close()
            except OSError:
                pass
        try:
            sock.close()
        except OSError:
            pass

    return RemoteEnv(send_line, reader.readline, close_transport)


def reset(env: RemoteEnv, **config) -> dict:
    return env.reset(**config)


def step(env: RemoteEnv, actions: Mapping[int, int]):
    return env.step(actions)


class RandomPolicy:
    """Uniform over the five action codes, one draw per agent per step.

    Draws happen in ascending agent id from a random.Random stream, and
    begin_episode(seed) replaces the stream, so a rollout is a pure
    function of the episode seed. Evaluation harnesses on the server
    side replicate the exact same sequence.
    """

    def __init__(self, seed: int = 0):
        self._rng = random.Random(seed)

    def begin_episode(self, seed: int) -> None:
        self._rng = random.Random(seed)

    def __call__(self, observations: Mapping[int, object]) -> dict[int, int]:
        return {
            agent: self._rng.randrange(len(ACTION_CODES))
            for agent in sorted(observations)
        }


def _aggregate(records: list[tuple[bool, int, float]]) -> dict:
    episodes = len(records)
    successes = sum(1 for terminated, _, _ in records if terminated)
    if episodes == 0:
        return {
            "episodes": 0,
            "successes": 0,
            "success_rate": None,
            "mean_timesteps": None,
            "mean_episode_reward": None,
        }
    return {
        "episodes": episodes,
        "successes": successes,
        "success_rate": successes / episodes,
        "mean_timesteps": sum(t for _, t, _ in records) / episodes,
        "mean_episode_reward": sum(r for _, _, r in records) / episodes,
    }


def run_episodes(
    env: RemoteEnv,
    policy: Callable[[Mapping[int, object]], Mapping[int, int]],
    n: int,
    seed_base: int = 42,
    **reset_config,
) -> dict:
    """Roll n sequential episodes with seeds seed_base..seed_base+n-1.

    The policy maps observations to a joint action mapping; if it has a
    begin_episode(seed) method it is called before each reset so stateful
    policies can reseed or rewind. A policy exception aborts the run with
    RolloutAborted carrying metrics over the episodes that did finish.
    Transport and server errors propagate unchanged.
    """
    records: list[tuple[bool, int, float]] = []

    def aborted(stage: str, exc: Exception) -> RolloutAborted:
        failure = RolloutAborted(
            f"policy failed during {stage} of episode {len(records)}: {exc}",
            metrics=_aggregate(records),
        )
        failure.__cause__ = exc
        return failure

    for index in range(n):
        seed = seed_base + index
        begin = getattr(policy, "begin_episode", None)
        if begin is not None:
            try:
                begin(seed)
            except Exception as exc:
                raise aborted("begin_episode", exc)
        observations = env.reset(seed=seed, **reset_config)
        terminated = truncated = False
        timesteps = 0
        episode_reward = 0.0
        while not (terminated or truncated):
            try:
                actions = policy(observations)
            except Exception as exc:
                raise aborted("action selection", exc)
            observations, rewards, terminated, truncated, info = env.step(
                actions
            )
            episode_reward += sum(rewards.values())
            timesteps = info["t"]
        records.append((terminated, timesteps, episode_reward))
    return _aggregate(records)


def metrics_json(metrics: dict) -> str:
    """Canonical one-line JSON form used for exact comparisons."""
    return json.dumps(metrics, sort_keys=True)
