import json
import math
import queue
import shlex
import subprocess
import threading
from collections import deque
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

from hdea.CustomLogger import CustomLogger
from hdea.errors import EvaluationError, ProtocolError
from hdea.settings.config_loader import section

_EOF = object()


@dataclass(frozen=True)
class ExternalRequest:
    id: int
    genome: List[float]
    sample_index: int
    seed: int

    def to_line(self) -> str:
        return json.dumps(
            {
                "type": "evaluate",
                "id": self.id,
                "genome": [float(v) for v in self.genome],
                "sample_index": self.sample_index,
                "seed": self.seed,
            },
            separators=(",", ":"),
        )

    @classmethod
    def from_message(cls, message: dict) -> "ExternalRequest":
        try:
            return cls(
                id=int(message["id"]),
                genome=[float(v) for v in message["genome"]],
                sample_index=int(message["sample_index"]),
                seed=int(message.get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ProtocolError(f"Malformed evaluate request: {message}") from e


@dataclass(frozen=True)
class ExternalResponse:
    id: int
    value: Optional[float] = None
    error: Optional[str] = None

    def to_line(self) -> str:
        if self.error is not None:
            payload = {"type": "error", "id": self.id, "error": self.error}
        else:
            payload = {"type": "result", "id": self.id, "value": self.value}
        return json.dumps(payload, separators=(",", ":"))


def hello_line(version: int, dimension: int) -> str:
    return json.dumps(
        {"type": "hello", "protocol": version, "dimension": dimension},
        separators=(",", ":"),
    )


SHUTDOWN_LINE = json.dumps({"type": "shutdown"})


def parse_line(line: str, line_number: int) -> dict:
    """Decode one protocol line; anything but a JSON object with a 'type' is a ProtocolError."""
    try:
        message = json.loads(line)
    except json.JSONDecodeError:
        message = None
    if not isinstance(message, dict) or "type" not in message:
        raise ProtocolError(
            f"Malformed protocol message on line {line_number}: {line.rstrip()[:200]!r}"
        )
    return message


class ExternalSession:
    """
    A running evaluator process spoken to over newline-delimited JSON.

    The parent writes one message per line to the child's stdin and reads one
    message per line from its stdout. The exchange is strictly sequential:

        parent: {"type": "hello", "protocol": 1, "dimension": 6}
        child:  {"type": "hello", "protocol": 1, "dimension": 6}
        parent: {"type": "evaluate", "id": 1, "genome": [...], "sample_index": 0, "seed": 42}
        child:  {"type": "result", "id": 1, "value": 480.0}
                or {"type": "error", "id": 1, "error": "text"}
        ...
        parent: {"type": "shutdown"}

    Request ids start at 1 and increase by one per request. The child's stderr
    is collected and its tail is attached to every EvaluationError.
    """

    def __init__(
        self,
        command: Union[str, Sequence[str]],
        dimension: int,
        timeout: Optional[float] = None,
        cwd: Optional[str] = None,
    ):
        protocol = section("external_protocol")
        self.command = shlex.split(command) if isinstance(command, str) else list(command)
        self.dimension = dimension
        self.timeout = float(timeout if timeout is not None else protocol["timeout_seconds"])
        self.cwd = cwd
        self.version = int(protocol["version"])
        self.requests_sent = 0
        self.logger = CustomLogger.get_logger(__name__)

        self._process = None
        self._stdout_thread = None
        self._stderr_thread = None
        self._lines = queue.Queue()
        self._stderr_tail = deque(maxlen=int(protocol["stderr_excerpt_lines"]))
        self._lines_read = 0

    def __enter__(self):
        return self.open()

    def __exit__(self, exc_type, exc, tb):
        self.close()

    @property
    def running(self) -> bool:
        return self._process is not None and self._process.poll() is None

    def stderr_excerpt(self) -> str:
        if self._stderr_thread is not None and self._process is not None:
            if self._process.poll() is not None:
                self._stderr_thread.join(timeout=1)
        return "".join(self._stderr_tail)

    def open(self) -> "ExternalSession":
        """Launch the evaluator and perform the handshake."""
        self.logger.info(f'Launching external evaluator: "{shlex.join(self.command)}"')
        try:
            self._process = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                bufsize=1,
                cwd=self.cwd,
            )
        except OSError as e:
            raise EvaluationError(f"Could not launch evaluator {self.command}: {e}") from e

        self._stdout_thread = threading.Thread(
            target=self._pump_stdout, args=(self._process.stdout,), daemon=True
        )
        self._stdout_thread.start()
        self._stderr_thread = threading.Thread(
            target=self._pump_stderr, args=(self._process.stderr,), daemon=True
        )
        self._stderr_thread.start()

        try:
            self._handshake()
        except (EvaluationError, ProtocolError):
            self._kill()
            self.close()
            raise
        return self

    def _handshake(self):
        self._send(hello_line(self.version, self.dimension))
        reply = self._receive("handshake")
        if reply.get("type") != "hello":
            raise ProtocolError(f"Expected hello from evaluator, got {reply}")
        if reply.get("protocol") != self.version:
            raise ProtocolError(
                f"Protocol version mismatch: expected {self.version}, evaluator speaks {reply.get('protocol')}"
            )
        if reply.get("dimension") != self.dimension:
            raise ProtocolError(
                f"Dimension mismatch: expected {self.dimension}, evaluator declared {reply.get('dimension')}"
            )

    def evaluate(self, genome: Sequence[float], sample_index: int = 0, seed: int = 0) -> float:
        """Send one request and wait for its response."""
        if len(genome) != self.dimension:
            raise ProtocolError(
                f"Genome of length {len(genome)} sent to an evaluator of dimension {self.dimension}"
            )
        self.requests_sent += 1
        request = ExternalRequest(
            id=self.requests_sent, genome=list(genome), sample_index=sample_index, seed=seed
        )
        self._send(request.to_line())
        reply = self._receive(f"request {request.id}")

        if reply.get("id") != request.id:
            raise ProtocolError(
                f"Response id {reply.get('id')} does not match request id {request.id}"
            )
        if reply.get("type") == "error":
            raise EvaluationError(
                f"Evaluator failed on request {request.id}: {reply.get('error')}",
                self.stderr_excerpt(),
            )
        if reply.get("type") != "result":
            raise ProtocolError(f"Unexpected message type for request {request.id}: {reply}")
        value = reply.get("value")
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ProtocolError(
                f"Evaluator returned a non-finite or non-numeric value for request {request.id}: {value!r}"
            )
        return float(value)

    def close(self) -> None:
        """Ask the evaluator to shut down; kill it if it does not exit in time."""
        if self._process is None:
            return
        try:
            if self.running:
                try:
                    self._process.stdin.write(SHUTDOWN_LINE + "\n")
                    self._process.stdin.flush()
                    self._process.stdin.close()
                    self._process.wait(timeout=10)
                except (OSError, ValueError, subprocess.TimeoutExpired):
                    self._kill()
            self.logger.debug(
                f"External evaluator closed after {self.requests_sent} requests "
                f"(exit code {self._process.returncode})"
            )
        finally:
            self._close_pipes()
            self._process = None

    def _close_pipes(self):
        # A pipe still being read is left to its daemon reader; closing it
        # would block on the reader's lock.
        pipes = [
            (self._process.stdin, None),
            (self._process.stdout, self._stdout_thread),
            (self._process.stderr, self._stderr_thread),
        ]
        for pipe, reader in pipes:
            if pipe is None:
                continue
            if reader is not None:
                reader.join(timeout=1)
                if reader.is_alive():
                    self.logger.warning("An evaluator pipe is still being read; leaving it open")
                    continue
            try:
                pipe.close()
            except (OSError, ValueError):
                pass

    def _send(self, line: str) -> None:
        try:
            self._process.stdin.write(line + "\n")
            self._process.stdin.flush()
        except (BrokenPipeError, OSError, ValueError) as e:
            self._reap()
            raise EvaluationError(
                f"Evaluator stopped accepting input (exit code {self._process.returncode})",
                self.stderr_excerpt(),
            ) from e

    def _receive(self, context: str) -> dict:
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            self._kill()
            raise EvaluationError(
                f"Evaluator timed out after {self.timeout:g}s waiting for {context}",
                self.stderr_excerpt(),
            )
        if line is _EOF:
            self._reap()
            raise EvaluationError(
                f"Evaluator exited with code {self._process.returncode} while waiting for {context}",
                self.stderr_excerpt(),
            )
        self._lines_read += 1
        return parse_line(line, self._lines_read)

    def _pump_stdout(self, stream):
        for line in stream:
            if line.strip():
                self._lines.put(line)
        self._lines.put(_EOF)

    def _pump_stderr(self, stream):
        for line in stream:
            self._stderr_tail.append(line)

    def _reap(self):
        try:
            self._process.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._kill()

    def _kill(self):
        if self._process is not None and self._process.poll() is None:
            self._process.kill()
            self._process.wait()
