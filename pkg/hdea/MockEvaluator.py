import sys
from typing import Optional, TextIO

import numpy as np

from hdea.ExternalEvaluator import ExternalRequest, ExternalResponse, hello_line, parse_line
from hdea.Surrogate import SurrogateParams, surrogate_evaluate
from hdea.errors import HDEAError, ProtocolError
from hdea.settings.config_loader import section
from hdea.utils import make_rng

MOCK_MODES = ("constant", "echo", "surrogate", "garbage", "nan")


class MockEvaluator:
    """
    Reference evaluator server speaking the newline-delimited JSON protocol.

    Modes:
        constant   every request returns `value`
        echo       returns genome[0]
        surrogate  one noisy surrogate sample seeded by the request's seed
        garbage    answers the handshake with a line that is not JSON
        nan        returns NaN for every request

    With `crash_after` set, the process exits with code 3 on receiving request
    number crash_after + 1, without answering it.
    A malformed evaluate request is answered with an error reply carrying its id.
    """

    def __init__(
        self,
        mode: str = "constant",
        value: float = 480.0,
        dimension: int = 6,
        crash_after: Optional[int] = None,
        protocol_version: Optional[int] = None,
    ):
        if mode not in MOCK_MODES:
            raise ValueError(f"Unknown mock mode: {mode}")
        self.mode = mode
        self.value = value
        self.dimension = dimension
        self.crash_after = crash_after
        self.protocol_version = (
            protocol_version
            if protocol_version is not None
            else int(section("external_protocol")["version"])
        )
        space = section("search_space")
        self.lower = np.asarray(space["lower"], dtype=float)
        self.upper = np.asarray(space["upper"], dtype=float)
        self.params = SurrogateParams.from_dict()
        self.handled = 0

    def respond(self, request: ExternalRequest) -> ExternalResponse:
        if self.mode == "constant":
            return ExternalResponse(id=request.id, value=self.value)
        if self.mode == "echo":
            return ExternalResponse(id=request.id, value=request.genome[0])
        if self.mode == "nan":
            return ExternalResponse(id=request.id, value=float("nan"))
        try:
            value = surrogate_evaluate(
                self.params, request.genome, self.lower, self.upper, make_rng(request.seed)
            )
        except HDEAError as e:
            return ExternalResponse(id=request.id, error=str(e))
        return ExternalResponse(id=request.id, value=value)

    def serve(self, stdin: TextIO = None, stdout: TextIO = None) -> int:
        """Answer requests until shutdown or end of input; returns the exit code."""
        stdin = stdin or sys.stdin
        stdout = stdout or sys.stdout

        def send(line):
            stdout.write(line + "\n")
            stdout.flush()

        for number, line in enumerate(stdin, start=1):
            if not line.strip():
                continue
            try:
                message = parse_line(line, number)
            except ProtocolError as e:
                sys.stderr.write(f"{e}\n")
                return 1
            kind = message["type"]
            if kind == "hello":
                if self.mode == "garbage":
                    send("this is not a protocol message")
                else:
                    send(hello_line(self.protocol_version, self.dimension))
            elif kind == "shutdown":
                return 0
            elif kind == "evaluate":
                try:
                    request = ExternalRequest.from_message(message)
                except ProtocolError as e:
                    send(ExternalResponse(id=message.get("id"), error=str(e)).to_line())
                    continue
                if self.crash_after is not None and self.handled >= self.crash_after:
                    sys.stderr.write(f"mock evaluator crashing on request {request.id}\n")
                    sys.stderr.flush()
                    return 3
                send(self.respond(request).to_line())
                self.handled += 1
            else:
                sys.stderr.write(f"unknown message type {kind!r} on line {number}\n")
                return 1
        return 0
