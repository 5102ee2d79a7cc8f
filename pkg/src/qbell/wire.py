"""Line-delimited wire protocol separating verifier and prover processes.

One JSON frame per newline-terminated line: {"v": 1, "session": ..,
"seq": .., "msg": {"tag": .., ...payload}} with big integers as decimal
strings.  The verifier drives: it sends the public key, then for each
iteration the message sequence of the protocol; the prover answers
synchronously.  A final {"tag": "end"} frame closes the session.
"""

from __future__ import annotations

import json
import socket
from dataclasses import dataclass

from . import protocol

WIRE_VERSION = 1


class ParseError(ValueError):
    def __init__(self, message, offset=0):
        super().__init__(message)
        self.offset = offset


class TransportError(RuntimeError):
    pass


@dataclass(frozen=True)
class WireFrame:
    session: str
    seq: int
    msg: dict
    version: int = WIRE_VERSION


def _int_out(v):
    return str(v)


def _encode_payload(msg) -> dict:
    body = {"tag": msg["tag"]}
    for k, v in msg.items():
        if k == "tag":
            continue
        if isinstance(v, bool):
            body[k] = v
        elif isinstance(v, int):
            body[k] = _int_out(v)
        elif isinstance(v, (list, tuple)):
            body[k] = [_int_out(x) for x in v]
        else:
            body[k] = v
    return body


def encode_frame(frame: WireFrame) -> bytes:
    doc = {"v": frame.version, "session": frame.session, "seq": frame.seq,
           "msg": _encode_payload(frame.msg)}
    return (json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n").encode()


def decode_frame(line: bytes) -> WireFrame:
    text = line.decode("utf-8", errors="replace").strip()
    if not text:
        raise ParseError("empty frame")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"bad JSON: {e.msg}", offset=e.pos) from None
    if doc.get("v") != WIRE_VERSION:
        raise ParseError(f"unsupported version {doc.get('v')!r}")
    for field in ("session", "seq", "msg"):
        if field not in doc:
            raise ParseError(f"missing field {field!r}")
    msg = doc["msg"]
    if "tag" not in msg:
        raise ParseError("message lacks a tag")
    return WireFrame(session=doc["session"], seq=int(doc["seq"]), msg=msg)


def _as_int(v) -> int:
    return int(v)


# ---------------------------------------------------------------------------
# transports

class Channel:
    """Synchronous framed channel over a pair of byte streams."""

    def __init__(self, rfile, wfile, session: str):
        self.rfile = rfile
        self.wfile = wfile
        self.session = session
        self._seq_out = 0
        self._seq_in = -1

    def send(self, msg: dict) -> None:
        frame = WireFrame(session=self.session, seq=self._seq_out, msg=msg)
        self._seq_out += 1
        try:
            self.wfile.write(encode_frame(frame))
            self.wfile.flush()
        except (BrokenPipeError, OSError) as e:
            raise TransportError(f"send failed: {e}") from None

    def recv(self) -> dict:
        try:
            line = self.rfile.readline()
        except OSError as e:
            raise TransportError(f"recv failed: {e}") from None
        if not line:
            raise TransportError("peer closed the stream")
        frame = decode_frame(line)
        if frame.seq <= self._seq_in:
            raise ParseError(f"sequence went backwards: {frame.seq}")
        self._seq_in = frame.seq
        return frame.msg


def open_tcp_listener(host: str, port: int) -> socket.socket:
    srv = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    srv.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    srv.bind((host, port))
    srv.listen(1)
    return srv


def channel_from_socket(sock: socket.socket, session: str, timeout: float = 30.0) -> Channel:
    sock.settimeout(timeout)
    return Channel(sock.makefile("rb"), sock.makefile("wb"), session)


# ---------------------------------------------------------------------------
# verifier / prover drivers

class RemoteProver:
    """Prover proxy on the verifier side: each protocol round is one
    request/response exchange on the channel."""

    def __init__(self, channel: Channel):
        self.ch = channel

    def round1(self):
        self.ch.send({"tag": "round1"})
        msg = self.ch.recv()
        if msg["tag"] != "image":
            raise TransportError(f"expected image, got {msg['tag']}")
        y = msg["y"]
        y = tuple(_as_int(v) for v in y) if isinstance(y, list) else _as_int(y)
        return y, _as_int(msg.get("h", "0")), int(msg.get("h_len", 0))

    def answer_preimage(self):
        self.ch.send({"tag": "challenge", "kind": "preimage"})
        msg = self.ch.recv()
        if msg["tag"] != "preimage":
            raise TransportError(f"expected preimage, got {msg['tag']}")
        return _as_int(msg["x"])

    def round2(self, r):
        self.ch.send({"tag": "vector", "r": r})
        msg = self.ch.recv()
        if msg["tag"] != "equation":
            raise TransportError(f"expected equation, got {msg['tag']}")
        return _as_int(msg["d"])

    def round3(self, sign):
        self.ch.send({"tag": "basis", "sign": sign})
        msg = self.ch.recv()
        if msg["tag"] != "result":
            raise TransportError(f"expected result, got {msg['tag']}")
        return int(msg["bit"])


def serve_session(channel: Channel, ctx, trials: int, seed: int, config=None):
    """Verifier-side session loop; returns (ScoreReport, transcripts)."""
    from . import tcf as _tcf
    from .seeds import derive_rng
    config = config or protocol.IterationConfig()
    channel.send({"tag": "key", "key_json": _tcf.key_to_json(ctx.keys, include_secret=False),
                  "trials": trials, "prover_seed": seed})
    remote = RemoteProver(channel)
    rng = derive_rng(seed, "verifier")
    transcripts = []
    for i in range(trials):
        transcripts.append(protocol.run_iteration(ctx, remote, rng, config, i))
    channel.send({"tag": "end"})
    return protocol.score(transcripts), transcripts


def prover_loop(channel: Channel, make_prover):
    """Prover-side session loop: builds the prover from the received public
    key and answers until the end frame."""
    hello = channel.recv()
    if hello["tag"] != "key":
        raise TransportError("expected key frame first")
    prover = make_prover(hello["key_json"], int(hello.get("prover_seed", 0)))
    while True:
        msg = channel.recv()
        tag = msg["tag"]
        if tag == "end":
            return
        if tag == "round1":
            y, h, h_len = prover.round1()
            channel.send({"tag": "image", "y": y, "h": h, "h_len": h_len})
        elif tag == "challenge":
            channel.send({"tag": "preimage", "x": prover.answer_preimage()})
        elif tag == "vector":
            channel.send({"tag": "equation", "d": prover.round2(_as_int(msg["r"]))})
        elif tag == "basis":
            channel.send({"tag": "result", "bit": prover.round3(int(msg["sign"]))})
        else:
            raise TransportError(f"unexpected frame {tag!r}")
