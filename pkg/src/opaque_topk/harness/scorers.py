"""Scorer plugins: built-in functions and the external subprocess protocol.

An external scorer is a long-lived command speaking one JSON object per line
over its standard streams. Each request is ``{"ids": [...], "payloads": [...]}``
and the reply must be ``{"scores": [...]}`` with one non-negative finite
number per id.
"""

from __future__ import annotations

import json
import math
import shlex
import subprocess
import tempfile
from typing import Any, Callable, Mapping, Sequence

from ..bandit import InMemoryPlugin, ScorerError


def relu(payload: Sequence[float]) -> float:
    return max(0.0, payload[0])


def constant(payload: Any) -> float:
    return 1.0


def noop(payload: Any) -> float:
    return 0.0


BUILTIN_SCORERS: dict[str, Callable[[Any], float]] = {
    "relu": relu,
    "constant": constant,
    "noop": noop,
}


class ExternalScorer:
    """Scores batches by talking to a subprocess over line-delimited JSON."""

    def __init__(self, command: str | Sequence[str], payloads: Mapping[str, Any]):
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.payloads = payloads
        self._stderr = tempfile.TemporaryFile(mode="w+", encoding="utf-8")
        self._proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=self._stderr,
            text=True,
            encoding="utf-8",
            bufsize=1,
        )

    def __enter__(self) -> "ExternalScorer":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _stderr_tail(self) -> str:
        self._stderr.seek(0)
        text = self._stderr.read().strip()
        return text[-500:] if text else "<no stderr>"

    def _fail(self, message: str) -> ScorerError:
        code = self._proc.poll()
        status = f"exit code {code}" if code is not None else "running"
        return ScorerError(f"external scorer {self.command[0]!r}: {message} ({status}; stderr: {self._stderr_tail()})")

    def fetch_batch(self, ids: Sequence[str]) -> list[tuple[str, Any]]:
        payloads = self.payloads
        return [(i, payloads[i]) for i in ids]

    def score_batch(self, elements: Sequence[tuple[str, Any]]) -> list[float]:
        request = {"ids": [i for i, _ in elements], "payloads": [p for _, p in elements]}
        try:
            self._proc.stdin.write(json.dumps(request) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise self._fail(f"cannot send request ({exc})") from None
        line = self._proc.stdout.readline()
        if not line:
            self._proc.wait(timeout=5)
            raise self._fail("exited before replying")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError:
            raise self._fail(f"malformed reply {line.strip()[:200]!r}") from None
        if not isinstance(reply, dict) or not isinstance(reply.get("scores"), list):
            raise self._fail("reply must be an object with a 'scores' list")
        scores = reply["scores"]
        if len(scores) != len(elements):
            raise self._fail(f"returned {len(scores)} scores for {len(elements)} elements")
        out = []
        for s in scores:
            if isinstance(s, bool) or not isinstance(s, (int, float)) or not (s >= 0 and math.isfinite(s)):
                raise self._fail(f"invalid score {s!r}")
            out.append(float(s))
        return out

    def close(self) -> None:
        proc = self._proc
        if proc.poll() is None:
            try:
                proc.stdin.close()
            except OSError:
                pass
            try:
                proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()
        else:
            try:
                proc.stdin.close()
            except OSError:
                pass
        proc.stdout.close()
        self._stderr.close()


def is_builtin(scorer: str) -> bool:
    return scorer in BUILTIN_SCORERS


def make_plugin(scorer: str, payloads: Mapping[str, Any]):
    """A built-in scorer by name, otherwise ``scorer`` is an external command line."""
    if scorer in BUILTIN_SCORERS:
        return InMemoryPlugin(payloads, BUILTIN_SCORERS[scorer])
    return ExternalScorer(scorer, payloads)
