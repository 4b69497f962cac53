"""Line-delimited JSON episode serving over standard streams or TCP.

One request object per line, one response per line, strictly in order.
Every response carries "ok"; failures report {"ok": false, "error": msg}
and leave the session usable. A session holds at most one live episode.

Commands:
  {"cmd": "info"}                          -> capabilities and version
  {"cmd": "reset", "layout": ..., ...}     -> {"ok": true, "t": 0, "obs": ...}
  {"cmd": "step", "actions": {...}}        -> rewards, flags, obs, info
  {"cmd": "step", "batch": [{...}, ...]}   -> list of step payloads
  {"cmd": "close"}                         -> ends the session
"""

from __future__ import annotations

import json
import socketserver
import sys
import threading
from pathlib import Path
from typing import Mapping

from . import __version__
from .engine import (
    EpisodeConfig,
    EpisodeOverError,
    EpisodeState,
    JointAction,
    Observation,
    observe_all,
    reset,
    step,
)
from .grid import ACTIONS, COLLISION_MODELS
from .layouts import (
    LayoutError,
    Task,
    build_layout,
    layout_families,
    layout_variants,
    load_layout,
)

PROTOCOL_VERSION = 1
OBS_MODES = ("local", "cte")

# EpisodeConfig knobs a reset request may set, with their JSON types
_RESET_FIELDS = {
    "n_agents": int,
    "seed": int,
    "obs_mode": str,
    "sensor_range": int,
    "collision_model": str,
    "t_max": int,
    "mask_actions": bool,
    "alpha": (int, float),
    "beta": (int, float),
    "gamma": (int, float),
}


class ProtocolError(ValueError):
    """Bad request content; reported to the peer, never fatal."""


def encode_observation(obs: Observation) -> dict:
    """JSON value for one agent's view; shape depends on the mode."""
    grid = [[int(v) for v in row] for row in obs.grid]
    if obs.mode == "local":
        return {
            "grid": grid,
            "pos": [int(obs.pos[0]), int(obs.pos[1])],
            "goal": [int(obs.goal[0]), int(obs.goal[1])],
        }
    return {
        "grid": grid,
        "positions": {
            str(agent): [int(p[0]), int(p[1])]
            for agent, p in sorted(obs.positions.items())
        },
    }


def decode_actions(payload) -> JointAction:
    """Parse {"1": code, ...} into a joint action, validating codes."""
    if not isinstance(payload, Mapping):
        raise ProtocolError("actions must be an object of agent: code")
    actions: JointAction = {}
    for key, value in payload.items():
        try:
            agent = int(key)
        except (TypeError, ValueError):
            raise ProtocolError(f"bad agent id {key!r}") from None
        if isinstance(value, bool) or not isinstance(value, int):
            raise ProtocolError(f"action for agent {agent} must be an integer")
        if value not in ACTIONS:
            raise ProtocolError(
                f"action code {value} for agent {agent} out of range 0..4"
            )
        actions[agent] = value
    return actions


def _encode_all(observations: Mapping[int, Observation]) -> dict:
    return {
        str(agent): encode_observation(obs)
        for agent, obs in sorted(observations.items())
    }


class Session:
    """One peer's episode state plus the request dispatch loop."""

    def __init__(self, layout_dir: str | Path | None = None, session_id: int = 0):
        self.session_id = session_id
        self.layout_dir = Path(layout_dir) if layout_dir is not None else None
        self.closed = False
        self._config: EpisodeConfig | None = None
        self._state: EpisodeState | None = None

    # -- transport-facing entry point --

    def handle_line(self, line: str) -> str:
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            return json.dumps({"ok": False, "error": f"invalid JSON: {exc.msg}"})
        except RecursionError:
            # the C decoder recurses per nesting level; a ["["*10000] bomb
            # must refuse like any other bad line instead of killing the session
            return json.dumps({"ok": False, "error": "invalid JSON: nesting too deep"})
        return json.dumps(self.handle(request), sort_keys=True)

    def handle(self, request) -> dict:
        if not isinstance(request, dict):
            return {"ok": False, "error": "request must be a JSON object"}
        cmd = request.get("cmd")
        if cmd == "info":
            return self._info()
        if cmd == "reset":
            return self._guarded(self._reset, request)
        if cmd == "step":
            return self._guarded(self._step, request)
        if cmd == "close":
            self.closed = True
            self._config = None
            self._state = None
            return {"ok": True}
        return {"ok": False, "error": f"unknown command {cmd!r}"}

    def _guarded(self, fn, request: dict) -> dict:
        try:
            return fn(request)
        except EpisodeOverError:
            return {"ok": False, "error": "episode finished"}
        except (ProtocolError, LayoutError, ValueError) as exc:
            return {"ok": False, "error": str(exc)}

    # -- commands --

    def _info(self) -> dict:
        return {
            "ok": True,
            "protocol_version": PROTOCOL_VERSION,
            "version": __version__,
            "layouts": {
                family: list(layout_variants(family))
                for family in layout_families()
            },
            "obs_modes": list(OBS_MODES),
            "collision_models": list(COLLISION_MODELS),
        }

    def _reset(self, request: dict) -> dict:
        name = request.get("layout")
        if not isinstance(name, str):
            raise ProtocolError("reset needs a layout name")
        variant = request.get("variant")
        if variant is not None and not isinstance(variant, str):
            raise ProtocolError("variant must be a string")
        layout, default_tasks = self._find_layout(name, variant)
        options = {}
        for field, types in _RESET_FIELDS.items():
            if field not in request:
                continue
            value = request[field]
            if isinstance(value, bool) and types is not bool:
                raise ProtocolError(f"bad type for {field}")
            if not isinstance(value, types):
                raise ProtocolError(f"bad type for {field}")
            options[field] = value
        seed = options.pop("seed", None)
        tasks = self._parse_tasks(request.get("tasks"))
        if tasks is None and "n_agents" not in options:
            if default_tasks is None:
                raise ProtocolError("reset needs n_agents or explicit tasks")
            tasks = default_tasks
        if tasks is not None and "n_agents" not in options:
            options["n_agents"] = len(tasks)
        config = EpisodeConfig(layout=layout, tasks=tasks, **options)
        state, observations = reset(config, seed)
        self._config = config
        self._state = state
        return {"ok": True, "t": 0, "obs": _encode_all(observations)}

    def _step(self, request: dict) -> dict:
        if self._config is None or self._state is None:
            raise ProtocolError("no active episode; send reset first")
        if "batch" in request:
            return self._step_batch(request["batch"])
        payload = self._apply(request.get("actions"))
        return {"ok": True, **payload}

    def _step_batch(self, batch) -> dict:
        if not isinstance(batch, list):
            raise ProtocolError("batch must be a list of action objects")
        steps = []
        for entry in batch:
            try:
                steps.append(self._apply(entry))
            except EpisodeOverError:
                return {
                    "ok": False,
                    "error": "episode finished",
                    "steps": steps,
                }
            except (ProtocolError, ValueError) as exc:
                return {"ok": False, "error": str(exc), "steps": steps}
        return {"ok": True, "steps": steps}

    def _apply(self, payload) -> dict:
        assert self._config is not None and self._state is not None
        if self._state.done:
            raise EpisodeOverError("episode finished")
        actions = decode_actions(payload)
        state, result = step(self._config, self._state, actions)
        self._state = state
        return {
            "t": state.t,
            "rewards": {
                str(agent): result.rewards[agent]
                for agent in self._config.agents
            },
            "terminated": result.terminated,
            "truncated": result.truncated,
            "obs": _encode_all(result.observations),
            "info": {
                "collisions": result.info["collisions"],
                "newly_at_goal": result.info["newly_at_goal"],
            },
        }

    # -- helpers --

    def _find_layout(self, name: str, variant: str | None):
        # Sessions only see family ids and plain file stems under
        # layout_dir; peers never name arbitrary filesystem paths.
        family = name.strip().lower().replace("_", ".")
        if family in layout_families():
            return build_layout(family, variant)
        if self.layout_dir is not None and "/" not in name and "\\" not in name:
            for candidate in (
                self.layout_dir / name,
                self.layout_dir / f"{name}.txt",
            ):
                if ".." in candidate.parts or not candidate.is_file():
                    continue
                if variant is not None:
                    raise ProtocolError(
                        "variant only applies to family ids, not files"
                    )
                return load_layout(candidate)
        raise ProtocolError(f"unknown layout {name!r}")

    @staticmethod
    def _parse_tasks(raw):
        if raw is None:
            return None
        if not isinstance(raw, list) or not raw:
            raise ProtocolError("tasks must be a non-empty list of pairs")
        tasks = []
        for entry in raw:
            try:
                (sx, sy), (gx, gy) = entry
                tasks.append(Task((int(sx), int(sy)), (int(gx), int(gy))))
            except (TypeError, ValueError):
                raise ProtocolError(
                    "each task must be [[sx, sy], [gx, gy]]"
                ) from None
        return tuple(tasks)


# --- transports ---------------------------------------------------------------


def serve_stdio(stdin=None, stdout=None, layout_dir=None) -> None:
    """Serve one session over text streams until close or EOF."""
    stdin = sys.stdin if stdin is None else stdin
    stdout = sys.stdout if stdout is None else stdout
    session = Session(layout_dir=layout_dir)
    for line in stdin:
        if not line.strip():
            continue
        stdout.write(session.handle_line(line) + "\n")
        stdout.flush()
        if session.closed:
            break


class _SessionHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        server: TcpServer = self.server  # type: ignore[assignment]
        if not server.try_acquire_slot():
            self.wfile.write(
                json.dumps(
                    {"ok": False, "error": "server at session capacity"}
                ).encode()
                + b"\n"
            )
            return
        try:
            session = Session(
                layout_dir=server.layout_dir,
                session_id=server.next_session_id(),
            )
            for raw in self.rfile:
                line = raw.decode("utf-8", errors="replace")
                if not line.strip():
                    continue
                self.wfile.write(session.handle_line(line).encode() + b"\n")
                self.wfile.flush()
                if session.closed:
                    break
        except (BrokenPipeError, ConnectionResetError):
            pass  # peer vanished mid-episode; nothing to clean up
        finally:
            server.release_slot()


class TcpServer(socketserver.ThreadingTCPServer):
    """Threaded episode server; each connection is an isolated session."""

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address, layout_dir=None, max_sessions=32):
        if max_sessions < 1:
            raise ValueError("max_sessions must be positive")
        super().__init__(address, _SessionHandler)
        self.layout_dir = layout_dir
        self._slots = threading.Semaphore(max_sessions)
        self._id_lock = threading.Lock()
        self._next_id = 0

    def try_acquire_slot(self) -> bool:
        return self._slots.acquire(blocking=False)

    def release_slot(self) -> None:
        self._slots.release()

    def next_session_id(self) -> int:
        with self._id_lock:
            self._next_id += 1
            return self._next_id


def serve_tcp(
    port: int,
    host: str = "127.0.0.1",
    layout_dir=None,
    max_sessions: int = 32,
) -> None:
    """Bind and serve until interrupted; port 0 picks a free port."""
    with TcpServer((host, port), layout_dir, max_sessions) as server:
        bound = server.server_address[1]
        print(f"serving on {host}:{bound}", file=sys.stderr, flush=True)
        server.serve_forever()
