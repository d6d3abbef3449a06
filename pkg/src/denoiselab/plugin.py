"""Out-of-process denoiser plugins over a child's standard streams.

Wire protocol (all integers little-endian, floats IEEE-754 f64):

  handshake  parent sends magic ``DNP1`` + u32 dim; child echoes both and
             they must match
  request    u8 tag 0x01, u32 k, f64 sigma, then k*dim values row-major
  response   u8 tag 0x02, u32 k, then k*dim values row-major
  shutdown   u8 tag 0xFF from the parent; the child exits 0

One request/response round trip per batch. The handle is single-owner:
callers must serialize requests; nothing here multiplexes one child across
threads. Protocol violations, child exits, timeouts, and dimension
mismatches raise distinct exception types.
"""

from __future__ import annotations

import argparse
import os
import select
import struct
import subprocess
import sys
from typing import Callable

import numpy as np

from .errors import (
    DimensionMismatchError,
    PluginExitError,
    PluginProtocolError,
    PluginTimeoutError,
)

PLUGIN_MAGIC = b"DNP1"
TAG_REQUEST = 0x01
TAG_RESPONSE = 0x02
TAG_SHUTDOWN = 0xFF


class ExternalDenoiser:
    """Client side of the plugin protocol, usable wherever a Denoiser is.

    ``command`` is the child's argv list; ``dim`` is the expected data
    dimension, confirmed during the handshake. ``timeout`` (seconds) bounds
    every read.
    """

    def __init__(self, command: list[str], dim: int, timeout: float = 30.0):
        self.dim = dim
        self.timeout = timeout
        self._proc = subprocess.Popen(
            command, stdin=subprocess.PIPE, stdout=subprocess.PIPE)
        try:
            self._write(PLUGIN_MAGIC + struct.pack("<I", dim))
            reply = self._read(8)
        except Exception:
            self._kill()
            raise
        if reply[:4] != PLUGIN_MAGIC:
            self._kill()
            raise PluginProtocolError(
                f"handshake returned magic {reply[:4]!r}, expected {PLUGIN_MAGIC!r}")
        (child_dim,) = struct.unpack("<I", reply[4:])
        if child_dim != dim:
            self._kill()
            raise DimensionMismatchError(
                f"plugin serves dimension {child_dim}, expected {dim}")

    def _write(self, data: bytes) -> None:
        try:
            self._proc.stdin.write(data)
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise PluginExitError(
                f"plugin exited (code {self._proc.poll()}) while writing") from exc

    def _read(self, n: int) -> bytes:
        fd = self._proc.stdout.fileno()
        chunks = b""
        while len(chunks) < n:
            ready, _, _ = select.select([fd], [], [], self.timeout)
            if not ready:
                raise PluginTimeoutError(
                    f"no reply from plugin within {self.timeout}s")
            got = os.read(fd, n - len(chunks))
            if not got:
                raise PluginExitError(
                    f"plugin exited (code {self._proc.poll()}) mid-reply")
            chunks += got
        return chunks

    def evaluate_batch(self, X: np.ndarray, sigma: float) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise DimensionMismatchError(
                f"batch shape {X.shape} does not match plugin dimension {self.dim}")
        k = X.shape[0]
        self._write(struct.pack("<BId", TAG_REQUEST, k, float(sigma))
                    + X.astype("<f8").tobytes())
        header = self._read(5)
        if header[0] != TAG_RESPONSE:
            raise PluginProtocolError(f"expected response tag 0x02, got {header[0]:#x}")
        (reply_k,) = struct.unpack("<I", header[1:])
        if reply_k != k:
            raise DimensionMismatchError(
                f"plugin replied with {reply_k} rows to a {k}-row request")
        payload = self._read(8 * k * self.dim)
        return np.frombuffer(payload, dtype="<f8").reshape(k, self.dim).copy()

    def evaluate(self, x: np.ndarray, sigma: float) -> np.ndarray:
        return self.evaluate_batch(np.asarray(x, dtype=np.float64)[None, :], sigma)[0]

    def close(self) -> None:
        """Send shutdown and reap the child."""
        if self._proc.poll() is None:
            try:
                self._write(struct.pack("<B", TAG_SHUTDOWN))
                self._proc.stdin.close()
            except PluginExitError:
                pass
            try:
                self._proc.wait(timeout=self.timeout)
            except subprocess.TimeoutExpired:
                self._kill()

    def _kill(self) -> None:
        if self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()

    def __del__(self):
        try:
            self._kill()
        except Exception:
            pass


def external_denoise(endpoint: ExternalDenoiser, batch: np.ndarray,
                     sigma: float) -> np.ndarray:
    """One request/response round trip for a batch of rows."""
    return endpoint.evaluate_batch(batch, sigma)


def serve_plugin(handler: Callable[[np.ndarray, float], np.ndarray], dim: int,
                 stdin=None, stdout=None) -> int:
    """Child side of the protocol; returns the intended process exit code.

    ``handler(batch, sigma)`` maps a k x dim array to a k x dim array. The
    loop exits 0 on the shutdown tag, nonzero on protocol violations or EOF.
    """
    stdin = stdin if stdin is not None else sys.stdin.buffer
    stdout = stdout if stdout is not None else sys.stdout.buffer

    def read_exact(n: int) -> bytes | None:
        data = b""
        while len(data) < n:
            got = stdin.read(n - len(data))
            if not got:
                return None
            data += got
        return data

    hello = read_exact(8)
    if hello is None or hello[:4] != PLUGIN_MAGIC:
        return 2
    (parent_dim,) = struct.unpack("<I", hello[4:])
    stdout.write(PLUGIN_MAGIC + struct.pack("<I", dim))
    stdout.flush()
    if parent_dim != dim:
        return 1
    while True:
        tag = read_exact(1)
        if tag is None:
            return 1
        if tag[0] == TAG_SHUTDOWN:
            return 0
        if tag[0] != TAG_REQUEST:
            return 2
        header = read_exact(12)
        if header is None:
            return 1
        k, sigma = struct.unpack("<Id", header)
        payload = read_exact(8 * k * dim)
        if payload is None:
            return 1
        batch = np.frombuffer(payload, dtype="<f8").reshape(k, dim)
        result = np.ascontiguousarray(handler(batch, sigma), dtype=np.float64)
        stdout.write(struct.pack("<BI", TAG_RESPONSE, k))
        stdout.write(result.astype("<f8").tobytes())
        stdout.flush()


def main(argv: list[str] | None = None) -> int:
    """Built-in plugins: an echo loopback and the analytic denoisers."""
    parser = argparse.ArgumentParser(prog="denoiselab-plugin")
    sub = parser.add_subparsers(dest="kind", required=True)
    p_echo = sub.add_parser("echo", help="return every batch unchanged")
    p_echo.add_argument("--dim", type=int, required=True)
    for name in ("gaussian", "multi-delta"):
        p = sub.add_parser(name, help=f"serve the {name} denoiser of a dataset")
        p.add_argument("--data", required=True)
        p.add_argument("--format", default="csv",
                       choices=["csv", "raw-f64", "pgm-dir"])
    p_aff = sub.add_parser("affine", help="serve an affine checkpoint")
    p_aff.add_argument("--checkpoint", required=True)
    args = parser.parse_args(argv)

    if args.kind == "echo":
        return serve_plugin(lambda X, sigma: X, args.dim)
    if args.kind == "affine":
        from .distillation import load_affine

        den = load_affine(args.checkpoint)
        return serve_plugin(den.evaluate_batch, den.dim)
    from .dataset import empirical_stats, load_dataset
    from .denoisers import GaussianDenoiser, MultiDeltaDenoiser

    data = load_dataset(args.data, args.format)
    if args.kind == "gaussian":
        den = GaussianDenoiser(empirical_stats(data))
    else:
        den = MultiDeltaDenoiser(data)
    return serve_plugin(den.evaluate_batch, den.dim)


if __name__ == "__main__":
    sys.exit(main())
