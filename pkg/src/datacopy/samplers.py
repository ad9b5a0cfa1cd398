"""Sampling oracles that are not analytic distributions: pre-drawn point files,
coordinate transforms of another sampler, and external child processes.

A sampler is any object with ``sample(n, rng) -> ndarray of shape (n, d)``.
"""

from __future__ import annotations

import queue
import shlex
import subprocess
import threading

import numpy as np

from .geometry import as_points


class SamplerError(RuntimeError):
    pass


class ProtocolError(SamplerError):
    pass


class ArraySampler:
    """Hands out rows of a pre-drawn array in order; ``rng`` is ignored."""

    def __init__(self, points):
        self.points = as_points(points, name="samples")
        self.dim = self.points.shape[1]
        self._pos = 0

    def sample(self, n, rng=None):
        if self._pos + n > len(self.points):
            raise SamplerError(
                f"sample file exhausted: requested {n} more points after {self._pos}, "
                f"only {len(self.points)} available"
            )
        out = self.points[self._pos : self._pos + n]
        self._pos += n
        return out.copy()

    def cache_key(self):
        return f"ArraySampler|{len(self.points)}"


class TransformedSampler:
    """Applies ``transform`` (an (n, d) -> (n, d) map) to every draw of ``base``."""

    def __init__(self, base, transform):
        self.base = base
        self.transform = transform
        self.dim = base.dim

    def sample(self, n, rng):
        return self.transform(self.base.sample(n, rng))


class ExternalSampler:
    """Client for a child process speaking the line protocol.

    Request: ``SAMPLE <n> <d>\\n`` on the child's stdin. Response: exactly ``n``
    lines on stdout, each holding ``d`` whitespace-separated decimals. The same
    process serves every batch; it is terminated by :meth:`close`.

    Args:
        command: shell-style command line (string) or argv list.
        dim: dimension of the points the child must emit.
        timeout: seconds allowed per batch.
    """

    def __init__(self, command, dim, timeout=60.0):
        self.command = command
        self.dim = int(dim)
        self.timeout = float(timeout)
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        try:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL, text=True, bufsize=1,
            )
        except OSError as exc:
            raise SamplerError(f"cannot spawn sampler {command!r}: {exc}") from exc
        self._lines = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self._line_no = 0

    def _pump(self):
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def sample(self, n, rng=None):
        if self._proc.poll() is not None and self._lines.empty():
            raise ProtocolError("sampler process is not running")
        try:
            self._proc.stdin.write(f"SAMPLE {n} {self.dim}\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"cannot write request to sampler: {exc}") from exc
        out = np.empty((n, self.dim))
        for row in range(n):
            try:
                line = self._lines.get(timeout=self.timeout)
            except queue.Empty:
                raise ProtocolError(
                    f"sampler timed out after {self.timeout:g}s waiting for line {self._line_no + 1}"
                ) from None
            self._line_no += 1
            if line is None:
                raise ProtocolError(
                    f"sampler exited after {row} of {n} lines (line {self._line_no})"
                )
            fields = line.split()
            if len(fields) != self.dim:
                raise ProtocolError(
                    f"line {self._line_no}: expected {self.dim} values, got {len(fields)}"
                )
            try:
                out[row] = [float(f) for f in fields]
            except ValueError:
                raise ProtocolError(f"line {self._line_no}: non-numeric value in {line.strip()!r}") from None
            if not np.all(np.isfinite(out[row])):
                raise ProtocolError(f"line {self._line_no}: non-finite value")
        return out

    def close(self):
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass


def external_sampler_client(command, n, d, timeout=60.0):
    """One-shot request of ``n`` points from an external sampler."""
    with ExternalSampler(command, d, timeout=timeout) as s:
        return s.sample(n)
