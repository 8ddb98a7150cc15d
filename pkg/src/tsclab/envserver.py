"""TCP server exposing environments to external processes.

Wire format: each message is a 4-byte big-endian unsigned length prefix
followed by that many bytes of UTF-8 JSON carrying a ``type`` field.
Session per connection, one private environment each:

    client                          server
    {"type": "hello"}          ->   {"type": "spec", ...}
    {"type": "reset", "seed"}  ->   {"type": "obs", observations, state}
    {"type": "step", actions}  ->   {"type": "transition", observations,
                                     state, reward, terminated, info}
    {"type": "bye"}            ->   {"type": "bye"}, connection closes

Every request gets exactly one reply, in order.  Protocol faults answer
with {"type": "error", "code", "message"}; only oversized frames close the
connection.  Numbers are serialized at full double precision, so remote
transcripts match in-process results exactly.
"""

from __future__ import annotations

import json
import socket
import struct
import threading
from typing import Dict, Optional, Tuple

from .env import EnvConfig, TrafficEnv

MAX_FRAME = 16 * 1024 * 1024

ERR_BAD_FRAME = "bad_frame"
ERR_FRAME_TOO_LARGE = "frame_too_large"
ERR_UNKNOWN_TYPE = "unknown_type"
ERR_NOT_RESET = "not_reset"
ERR_BAD_ACTIONS = "bad_actions"


def encode_frame(obj: dict) -> bytes:
    body = json.dumps(obj, separators=(",", ":")).encode("utf-8")
    return struct.pack(">I", len(body)) + body


def recv_exact(sock: socket.socket, n: int) -> Optional[bytes]:
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(n - got)
        if not chunk:
            return None
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> Optional[Tuple[int, Optional[dict]]]:
    """Returns (declared_length, parsed_json_or_None) or None on EOF."""
    header = recv_exact(sock, 4)
    if header is None:
        return None
    (length,) = struct.unpack(">I", header)
    if length > MAX_FRAME:
        return length, None
    body = recv_exact(sock, length)
    if body is None:
        return None
    try:
        return length, json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        return length, None


def _error(code: str, message: str) -> dict:
    return {"type": "error", "code": code, "message": message}


class ServerSession:
    """Pure request -> reply mapping over one private environment."""

    def __init__(self, env_config: EnvConfig):
        self.env = TrafficEnv(env_config)

    def spec_payload(self) -> dict:
        return {
            "type": "spec",
            "n_agents": self.env.n_agents,
            "observation_sizes": list(self.env.observation_sizes),
            "action_sizes": list(self.env.action_sizes),
            "state_size": self.env.state_size,
            "episode_limit": self.env.episode_limit,
        }

    def handle(self, msg) -> Tuple[dict, bool]:
        """Returns (reply, close_connection)."""
        if not isinstance(msg, dict) or not isinstance(msg.get("type"), str):
            return _error(ERR_BAD_FRAME, "message must be an object with a 'type'"), False
        kind = msg["type"]
        if kind == "hello":
            return self.spec_payload(), False
        if kind == "reset":
            seed = msg.get("seed")
            obs, state = self.env.reset(None if seed is None else int(seed))
            return {
                "type": "obs",
                "observations": [o.tolist() for o in obs],
                "state": state.tolist(),
            }, False
        if kind == "step":
            if not self.env.ready:
                return _error(ERR_NOT_RESET, "reset the environment before stepping"), False
            actions = msg.get("actions")
            if not isinstance(actions, list) or len(actions) != self.env.n_agents:
                got = len(actions) if isinstance(actions, list) else type(actions).__name__
                return _error(
                    ERR_BAD_ACTIONS,
                    f"expected {self.env.n_agents} actions, got {got}",
                ), False
            try:
                result = self.env.step([int(a) for a in actions])
            except (TypeError, ValueError) as exc:
                return _error(ERR_BAD_ACTIONS, str(exc)), False
            return {
                "type": "transition",
                "observations": [o.tolist() for o in result.observations],
                "state": result.state.tolist(),
                "reward": result.reward,
                "terminated": result.terminated,
                "info": result.info,
            }, False
        if kind == "bye":
            return {"type": "bye"}, True
        return _error(ERR_UNKNOWN_TYPE, f"unknown message type {kind!r}"), False


class EnvServer:
    """Threaded acceptor; each connection owns one session and one env."""

    def __init__(self, env_config: EnvConfig, host: str = "127.0.0.1", port: int = 0):
        self.env_config = env_config
        self._listener = socket.create_server((host, port))
        self._listener.settimeout(0.2)
        self.address = self._listener.getsockname()
        self._stop = threading.Event()
        self._conns: Dict[int, socket.socket] = {}
        self._lock = threading.Lock()
        self._threads = []
        self._acceptor: Optional[threading.Thread] = None

    def start(self) -> "EnvServer":
        self._acceptor = threading.Thread(target=self._accept_loop, daemon=True)
        self._acceptor.start()
        return self

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            with self._lock:
                self._conns[conn.fileno()] = conn
            t = threading.Thread(target=self._serve_connection, args=(conn,), daemon=True)
            t.start()
            self._threads.append(t)

    def _serve_connection(self, conn: socket.socket) -> None:
        key = conn.fileno()
        session = ServerSession(self.env_config)
        try:
            while not self._stop.is_set():
                frame = read_frame(conn)
                if frame is None:
                    break
                length, msg = frame
                if length > MAX_FRAME:
                    conn.sendall(encode_frame(_error(
                        ERR_FRAME_TOO_LARGE, f"frame of {length} bytes exceeds {MAX_FRAME}")))
                    break
                if msg is None:
                    conn.sendall(encode_frame(_error(ERR_BAD_FRAME, "body is not valid JSON")))
                    continue
                reply, close = session.handle(msg)
                conn.sendall(encode_frame(reply))
                if close:
                    break
        except OSError:
            pass
        finally:
            with self._lock:
                self._conns.pop(key, None)
            try:
                conn.close()
            except OSError:
                pass

    def shutdown(self) -> None:
        """Stop accepting, wave bye to live sessions, close everything."""
        self._stop.set()
        with self._lock:
            conns = list(self._conns.values())
        for conn in conns:
            try:
                conn.sendall(encode_frame({"type": "bye"}))
            except OSError:
                pass
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                conn.close()
            except OSError:
                pass
        self._listener.close()
        if self._acceptor is not None:
            self._acceptor.join(timeout=2.0)


def serve_forever(env_config: EnvConfig, host: str, port: int) -> None:
    server = EnvServer(env_config, host, port).start()
    print(f"serving on {server.address[0]}:{server.address[1]}")
    try:
        while True:
            server._stop.wait(3600)
            if server._stop.is_set():
                return
    except KeyboardInterrupt:
        print("shutting down")
    finally:
        server.shutdown()
