import json
import sys

import pytest

from hdea.ExternalEvaluator import ExternalRequest, ExternalResponse, ExternalSession, parse_line
from hdea.errors import EvaluationError, ProtocolError

MOCK = [sys.executable, "-m", "hdea.main", "eval-server", "--mock"]
GENOME = [0.5, 0.5, 5.0, 5.0, 5.0, 10.0]


def mock_session(*args, dimension=6, timeout=60):
    return ExternalSession(MOCK + list(args), dimension, timeout=timeout)


class TestMessages:
    def test_request_line(self):
        line = ExternalRequest(id=3, genome=[1, 0.25], sample_index=2, seed=42).to_line()
        assert json.loads(line) == {
            "type": "evaluate",
            "id": 3,
            "genome": [1.0, 0.25],
            "sample_index": 2,
            "seed": 42,
        }

    def test_response_lines(self):
        assert json.loads(ExternalResponse(id=1, value=2.5).to_line()) == {
            "type": "result",
            "id": 1,
            "value": 2.5,
        }
        assert json.loads(ExternalResponse(id=1, error="boom").to_line())["type"] == "error"

    def test_parse_line_names_the_line(self):
        with pytest.raises(ProtocolError, match="line 4"):
            parse_line("not json", 4)
        with pytest.raises(ProtocolError):
            parse_line('{"id": 1}', 1)

    def test_malformed_request(self):
        with pytest.raises(ProtocolError):
            ExternalRequest.from_message({"type": "evaluate", "id": 1})


class TestHandshake:
    def test_version_mismatch(self, mocker):
        session = ExternalSession(["unused"], 6)
        mocker.patch.object(session, "_send")
        mocker.patch.object(
            session, "_receive", return_value={"type": "hello", "protocol": 2, "dimension": 6}
        )
        with pytest.raises(ProtocolError, match="version mismatch"):
            session._handshake()

    def test_unexpected_reply(self, mocker):
        session = ExternalSession(["unused"], 6)
        mocker.patch.object(session, "_send")
        mocker.patch.object(session, "_receive", return_value={"type": "result", "id": 1})
        with pytest.raises(ProtocolError, match="Expected hello"):
            session._handshake()

    def test_dimension_mismatch(self):
        with pytest.raises(ProtocolError, match="Dimension mismatch"):
            mock_session("--dimension", "5").open()

    def test_garbage_reply_names_line_one(self):
        session = mock_session("--mode", "garbage")
        with pytest.raises(ProtocolError, match="line 1"):
            session.open()
        assert not session.running

    def test_launch_failure(self):
        with pytest.raises(EvaluationError, match="Could not launch"):
            ExternalSession(["/nonexistent/evaluator-binary"], 6).open()


class TestSession:
    def test_constant_mode(self):
        with mock_session("--mode", "constant", "--value", "480") as session:
            assert session.evaluate(GENOME, 0, 7) == 480.0
            assert session.evaluate(GENOME, 1, 8) == 480.0
            assert session.requests_sent == 2
            assert session.running
        assert not session.running

    def test_echo_preserves_the_value_exactly(self):
        genome = [1 / 3] + GENOME[1:]
        with mock_session("--mode", "echo") as session:
            assert session.evaluate(genome) == 1 / 3

    def test_nan_is_a_protocol_error(self):
        with mock_session("--mode", "nan") as session:
            with pytest.raises(ProtocolError, match="non-finite"):
                session.evaluate(GENOME)

    def test_crash_reports_exit_code_and_stderr(self):
        with mock_session("--crash-after", "2") as session:
            session.evaluate(GENOME)
            session.evaluate(GENOME)
            with pytest.raises(EvaluationError, match="exited with code 3") as e:
                session.evaluate(GENOME)
        assert "crashing on request 3" in e.value.stderr_excerpt

    def test_wrong_genome_length(self):
        with mock_session() as session:
            with pytest.raises(ProtocolError):
                session.evaluate(GENOME[:5])

    def test_timeout_kills_the_evaluator(self):
        session = ExternalSession([sys.executable, "-c", "import time; time.sleep(60)"], 6, timeout=0.5)
        with pytest.raises(EvaluationError, match="timed out"):
            session.open()
        assert not session.running

    def test_string_command_is_split(self):
        session = ExternalSession("python -m sim --fast", 6)
        assert session.command == ["python", "-m", "sim", "--fast"]


def pipes_closed(process):
    return process.stdin.closed and process.stdout.closed and process.stderr.closed


class TestClose:
    def test_shutdown_closes_every_pipe(self):
        with mock_session() as session:
            session.evaluate(GENOME)
            process = session._process
        assert process.returncode == 0
        assert pipes_closed(process)

    def test_pipes_are_closed_after_the_evaluator_crashed(self):
        with mock_session("--crash-after", "1") as session:
            session.evaluate(GENOME)
            process = session._process
            with pytest.raises(EvaluationError):
                session.evaluate(GENOME)
            assert not session.running
        assert process.returncode == 3
        assert pipes_closed(process)

    def test_failed_handshake_closes_pipes(self, mocker):
        session = mock_session()
        launched = []

        def refuse():
            launched.append(session._process)
            raise ProtocolError("refused")

        mocker.patch.object(session, "_handshake", side_effect=refuse)
        with pytest.raises(ProtocolError, match="refused"):
            session.open()
        assert launched[0].poll() is not None
        assert pipes_closed(launched[0])
        assert session._process is None

    def test_close_twice_is_harmless(self):
        session = mock_session().open()
        session.close()
        session.close()
        assert not session.running
