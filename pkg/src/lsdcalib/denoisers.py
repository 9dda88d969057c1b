"""Denoiser backends, session lifecycle, and the external-process protocol.

A denoiser estimates the left-multiplied correction for a noisy extrinsic:
given the scene conditions and T_noisy it returns a twist delta_xi such that
``exp_map(delta_xi) @ T_noisy`` approximates the true extrinsic. Backends are
either in-process stand-ins for trained networks (oracle variants, useful as
test doubles) or external child processes speaking a line-delimited JSON
protocol.

Sessions make the condition-buffering contract explicit: whatever
condition-dependent precomputation a backend wants to cache runs exactly once
per session, no matter how many denoise calls follow.
"""

from __future__ import annotations

import hashlib
import json
import queue
import subprocess
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from . import se3
from .geometry import Intrinsics, PointCloud

PROTOCOL_VERSION = 1
DEFAULT_REPLY_TIMEOUT_S = 30.0


class DenoiserError(RuntimeError):
    """Base class for every denoiser failure."""


class SessionOpenError(DenoiserError):
    """Backend preparation failed while opening a session."""


class SpawnError(DenoiserError):
    """The external denoiser process could not be started."""


class ProtocolViolation(DenoiserError):
    """The external denoiser sent traffic outside the wire protocol."""


class ReplyTimeout(DenoiserError):
    """The external denoiser did not reply within the deadline."""


@dataclass(frozen=True)
class Condition:
    """Scene inputs a denoiser conditions on.

    ``fingerprint`` is a 64-bit content hash over the cloud bytes, the
    intrinsics and the image reference; it identifies the condition across
    sessions. ``cloud_path`` is transport plumbing for external backends and
    deliberately excluded from the hash.
    """

    cloud: PointCloud
    intrinsics: Intrinsics
    image_ref: Optional[str] = None
    cloud_path: Optional[str] = None
    fingerprint: int = field(init=False)

    def __post_init__(self):
        h = hashlib.blake2b(digest_size=8)
        h.update(self.cloud.points.tobytes())
        if self.cloud.intensity is not None:
            h.update(self.cloud.intensity.tobytes())
        k = self.intrinsics
        h.update(repr((k.fx, k.fy, k.cx, k.cy, k.skew,
                       k.image_width, k.image_height)).encode())
        h.update(b"\x00" if self.image_ref is None else self.image_ref.encode())
        object.__setattr__(self, "fingerprint", int.from_bytes(h.digest(), "big"))


class DenoiserBackend(ABC):
    """Correction-twist estimator with an explicit prepare/denoise split."""

    @abstractmethod
    def prepare(self, condition: Condition, t0: np.ndarray, sample_id: str) -> Any:
        """Run condition-dependent precomputation once; returns opaque state."""

    @abstractmethod
    def denoise(self, state: Any, T_noisy: np.ndarray) -> np.ndarray:
        """Estimate the correction twist for a noisy extrinsic."""

    def finish(self, state: Any) -> None:
        """Release per-session state. Default: nothing to do."""


class OracleDenoiser(DenoiserBackend):
    """Returns the exact correction twist toward a known true extrinsic."""

    def __init__(self, T_gt):
        self.T_gt = se3.check_transform(T_gt)

    def prepare(self, condition, t0, sample_id):
        return None

    def denoise(self, state, T_noisy):
        return se3.log_map(se3.compose(self.T_gt, se3.invert(T_noisy)))


class ContractiveDenoiser(OracleDenoiser):
    """Oracle scaled by a fixed gain in [0, 1]; gain 0 is the zero denoiser."""

    def __init__(self, T_gt, gain: float):
        super().__init__(T_gt)
        if not 0.0 <= gain <= 1.0:
            raise ValueError(f"gain must lie in [0, 1], got {gain}")
        self.gain = float(gain)

    def denoise(self, state, T_noisy):
        return self.gain * super().denoise(state, T_noisy)


class NoisyOracleDenoiser(ContractiveDenoiser):
    """Contractive oracle plus zero-mean Gaussian twist noise.

    sigma_rot is in radians, sigma_trans in meters. Each denoise call draws
    one fresh perturbation from the backend's own seeded stream; the stream
    is not reset by session boundaries, so reruns with the same seed and
    call order reproduce bitwise.
    """

    def __init__(self, T_gt, gain: float, sigma_rot: float, sigma_trans: float,
                 seed: int = 0):
        super().__init__(T_gt, gain)
        if sigma_rot < 0 or sigma_trans < 0:
            raise ValueError("noise sigmas must be non-negative")
        self.sigma_rot = float(sigma_rot)
        self.sigma_trans = float(sigma_trans)
        self._rng = np.random.default_rng(seed)

    def denoise(self, state, T_noisy):
        twist = super().denoise(state, T_noisy)
        noise = self._rng.standard_normal(6)
        noise[:3] *= self.sigma_rot
        noise[3:] *= self.sigma_trans
        return twist + noise


def make_oracle(T_gt) -> OracleDenoiser:
    return OracleDenoiser(T_gt)


def make_contractive(T_gt, gain: float) -> ContractiveDenoiser:
    return ContractiveDenoiser(T_gt, gain)


def make_noisy_oracle(T_gt, gain: float, sigma_rot: float, sigma_trans: float,
                      seed: int = 0) -> NoisyOracleDenoiser:
    return NoisyOracleDenoiser(T_gt, gain, sigma_rot, sigma_trans, seed)


def _flat(matrix: np.ndarray) -> list[float]:
    return [float(v) for v in np.asarray(matrix, dtype=float).reshape(-1)]


class ExternalDenoiser(DenoiserBackend):
    """Denoiser running as a child process over a line-delimited JSON pipe.

    The protocol is strictly request/reply on stdin/stdout (UTF-8, one JSON
    object per line): a version handshake at spawn, then per session a
    ``begin`` message carrying sample id, cloud path, intrinsics and the
    initial extrinsic, any number of ``denoise`` requests answered with
    ``delta_xi`` twists, and a closing ``end``. Anything else from the child
    is a protocol violation and poisons the backend. One child serves one
    session at a time; run parallel samples on separate instances.
    """

    def __init__(self, command: str, args: Sequence[str] = (),
                 reply_timeout_s: float = DEFAULT_REPLY_TIMEOUT_S):
        self.command = [command, *args]
        self.reply_timeout_s = float(reply_timeout_s)
        self._broken = False
        self._in_session = False
        self._lines: queue.Queue[Optional[str]] = queue.Queue()
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise SpawnError(f"cannot spawn denoiser {self.command!r}: {exc}") from exc
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()
        reply = self._request({"op": "hello", "version": PROTOCOL_VERSION}, "hello_ok")
        if reply.get("version") != PROTOCOL_VERSION:
            self._poison()
            raise ProtocolViolation(
                f"denoiser speaks protocol version {reply.get('version')!r}, "
                f"expected {PROTOCOL_VERSION}"
            )

    def _read_loop(self) -> None:
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _poison(self) -> None:
        self._broken = True
        if self._proc.poll() is None:
            self._proc.kill()
        self.close()

    def _request(self, message: dict, expect_op: str) -> dict:
        if self._broken:
            raise ProtocolViolation("denoiser session unusable after an earlier error")
        try:
            self._proc.stdin.write(json.dumps(message) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            self._poison()
            raise ProtocolViolation(f"denoiser pipe closed: {exc}") from exc
        try:
            line = self._lines.get(timeout=self.reply_timeout_s)
        except queue.Empty:
            self._poison()
            raise ReplyTimeout(
                f"no reply to {message['op']!r} within {self.reply_timeout_s} s"
            ) from None
        if line is None:
            self._poison()
            raise ProtocolViolation("denoiser closed its output stream mid-session")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            self._poison()
            raise ProtocolViolation(f"malformed denoiser reply {line!r}") from exc
        if not isinstance(reply, dict) or reply.get("op") != expect_op:
            self._poison()
            raise ProtocolViolation(
                f"expected {expect_op!r} reply, got {line.strip()!r}"
            )
        return reply

    def prepare(self, condition: Condition, t0, sample_id: str):
        if self._in_session:
            raise SessionOpenError(
                "backend already has an open session; external denoisers "
                "serve one session at a time"
            )
        self._request(
            {
                "op": "begin",
                "sample_id": sample_id,
                "cloud_path": condition.cloud_path or "",
                "intrinsics": _flat(condition.intrinsics.matrix()),
                "image_ref": condition.image_ref,
                "t0": _flat(se3.check_transform(t0)),
            },
            "begin_ok",
        )
        self._in_session = True
        return None

    def denoise(self, state, T_noisy):
        reply = self._request(
            {"op": "denoise", "t_noisy": _flat(se3.check_transform(T_noisy))},
            "delta_xi",
        )
        value = reply.get("value")
        if not isinstance(value, list) or len(value) != 6:
            self._poison()
            raise ProtocolViolation(f"delta_xi value must be 6 floats, got {value!r}")
        try:
            return se3.check_twist(np.array(value, dtype=float))
        except (TypeError, ValueError) as exc:
            self._poison()
            raise ProtocolViolation(f"non-numeric delta_xi value {value!r}") from exc

    def finish(self, state) -> None:
        if self._broken:
            self._in_session = False
            return
        self._request({"op": "end"}, "end_ok")
        self._in_session = False

    def close(self) -> None:
        """Terminate the child process. The backend is unusable afterwards."""
        self._broken = True
        try:
            self._proc.stdin.close()
        except OSError:
            pass
        if self._proc.poll() is None:
            try:
                self._proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        # the reader drains to EOF once the child is gone; join before
        # closing its stream so it never reads from a closed file
        self._reader.join(timeout=2.0)
        try:
            self._proc.stdout.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


def external_denoiser(command: str, args: Sequence[str] = (),
                      reply_timeout_s: float = DEFAULT_REPLY_TIMEOUT_S) -> ExternalDenoiser:
    return ExternalDenoiser(command, args, reply_timeout_s)


@dataclass
class DenoiserSession:
    """One prepared denoiser bound to one condition.

    prepare_count is 1 for the whole session lifetime; denoise_count grows
    with every call. Close (or use as a context manager) to release backend
    state.
    """

    backend: DenoiserBackend
    condition: Condition
    t0: np.ndarray
    sample_id: str
    state: Any
    prepare_count: int = 1
    denoise_count: int = 0

    def denoise(self, T_noisy) -> np.ndarray:
        twist = se3.check_twist(self.backend.denoise(self.state, T_noisy))
        self.denoise_count += 1
        return twist

    def close(self) -> None:
        self.backend.finish(self.state)

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()


def open_session(backend: DenoiserBackend, condition: Condition,
                 t0=None, sample_id: str = "") -> DenoiserSession:
    """Run the backend's one-time preparation and hand back a live session."""
    t0 = se3.identity() if t0 is None else se3.check_transform(t0)
    try:
        state = backend.prepare(condition, t0, sample_id)
    except DenoiserError:
        raise
    except Exception as exc:
        raise SessionOpenError(f"denoiser preparation failed: {exc}") from exc
    return DenoiserSession(backend=backend, condition=condition, t0=t0,
                           sample_id=sample_id, state=state)


class ReopeningSession:
    """Session stand-in that re-prepares before every denoise call.

    Models a consumer that cannot buffer condition features across steps;
    useful for measuring what session reuse saves. prepare_count accumulates
    across calls instead of staying at 1.
    """

    def __init__(self, backend: DenoiserBackend, condition: Condition,
                 t0=None, sample_id: str = ""):
        self.backend = backend
        self.condition = condition
        self.t0 = se3.identity() if t0 is None else se3.check_transform(t0)
        self.sample_id = sample_id
        self.prepare_count = 0
        self.denoise_count = 0

    def denoise(self, T_noisy) -> np.ndarray:
        with open_session(self.backend, self.condition, self.t0,
                          self.sample_id) as session:
            twist = session.denoise(T_noisy)
        self.prepare_count += session.prepare_count
        self.denoise_count += 1
        return twist

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()
