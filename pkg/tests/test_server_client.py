import io
import socket

import pytest

from analog_cartpole.dynamics import SimState
from analog_cartpole.emulator import AnalogEmulator, EmulatorConfig, MachineMode
from analog_cartpole.hc import EXTENSION, STRICT, HybridClient, InProcessTransport, Session
from analog_cartpole.hc.client import ArityError, ClientError, RemoteError, TcpTransport
from analog_cartpole.hc.server import (TcpServer, Transcript, parse_address,
                                       serve_stream)


def emulator(**kw):
    kw.setdefault("seed", 0)
    return AnalogEmulator(EmulatorConfig(**kw))


def client_for(emu, dialect=EXTENSION):
    return HybridClient(InProcessTransport(Session(emu, dialect)), dialect)


class TestSession:
    def test_bulk_fetch_frame(self):
        emu = emulator()
        emu.set_state(SimState(0.1, 0.2, -0.3, 0.4))
        s = Session(emu)
        assert s.handle(b"G0223;0222;0161;0160.f") == b"0.1000;0.2000;-0.3000;0.4000\n"

    def test_single_read(self):
        emu = emulator()
        emu.set_state(SimState(x=0.5))
        assert Session(emu).handle(b"g0223") == b"0.5000 0223\n"

    def test_errors_are_frames(self):
        s = Session(emulator())
        out = s.handle(b"f g9999 D7 q")
        assert out.splitlines() == [b"? nogroup no readout group defined",
                                    b"? address unknown element address '9999'",
                                    b"? channel no digital output 7",
                                    b"? unknown unknown command byte b'q'"]

    def test_wait_advances_virtual_time(self):
        emu = emulator()
        s = Session(emu, EXTENSION)
        assert s.handle(b"o!w20.") == b"20.0000 wait\n"
        assert emu.state.t == pytest.approx(0.020)

    def test_close_halts(self):
        emu = emulator()
        s = Session(emu)
        s.handle(b"o")
        s.close()
        assert emu.mode is MachineMode.HALT

    def test_transcript(self):
        buf = io.StringIO()
        s = Session(emulator(), transcript=Transcript(buf))
        s.handle(b"xg0223")
        assert buf.getvalue().splitlines()[:3] == ["> x", "> g0223", "< 0.0000 0223"]

    def test_stream_serving(self):
        out = io.BytesIO()
        serve_stream(Session(emulator()), io.BytesIO(b"g0223g01"), out)
        lines = out.getvalue().splitlines()
        assert lines[0] == b"0.0000 0223"
        assert lines[1].startswith(b"? truncated")


class TestClient:
    def test_state_and_impulse(self):
        emu = emulator(phi0_max=0.0)
        c = client_for(emu)
        c.reset()
        c.define_readout_group()
        c.initial_condition()
        c.operate()
        c.influence_sim(1)
        x, x_dot, phi, phi_dot = c.get_sim_state()
        assert x_dot == pytest.approx(0.2)
        assert abs(emu.input_integral - 10.0 * 0.020) <= 1e-9
        assert not emu.outputs.d1

    def test_action_zero_pushes_other_way(self):
        emu = emulator(phi0_max=0.0)
        c = client_for(emu)
        c.operate()
        c.influence_sim(0)
        assert emu.state.x_dot == pytest.approx(-0.2)

    def test_bad_action(self):
        with pytest.raises(ValueError):
            client_for(emulator()).influence_sim(2)

    def test_arity_error(self):
        c = client_for(emulator())
        c.define_readout_group(["0223"])
        with pytest.raises(ArityError):
            c.get_sim_state()

    def test_remote_error(self):
        c = client_for(emulator())
        with pytest.raises(RemoteError) as info:
            c.fetch()
        assert info.value.error.code == "nogroup"

    def test_get_value(self):
        emu = emulator()
        emu.set_state(SimState(phi=0.25))
        assert client_for(emu).get_value("0161") == 0.25

    def test_disturb(self):
        emu = emulator(phi0_max=0.0)
        c = client_for(emu)
        c.operate()
        c.disturb(5.0, 100)
        c.wait(100)
        assert emu.state.x_dot == pytest.approx(0.5)


class TestTcp:
    def test_session_over_socket(self):
        emu = emulator()
        server = TcpServer(emu, port=0, dialect=EXTENSION).start()
        try:
            c = HybridClient(TcpTransport("127.0.0.1", server.port))
            c.reset()
            c.define_readout_group()
            c.operate()
            c.influence_sim(1)
            assert len(c.get_sim_state()) == 4
            c.close()
        finally:
            server.stop()
        assert emu.mode is MachineMode.HALT

    def test_second_client_is_busy(self):
        server = TcpServer(emulator(), port=0).start()
        try:
            first = TcpTransport("127.0.0.1", server.port)
            first.send(b"g0223")
            assert first.readline() == b"0.0000 0223\n"
            second = socket.create_connection(("127.0.0.1", server.port), timeout=2)
            assert second.makefile("rb").readline() == b"? busy\n"
            second.close()
            first.close()
        finally:
            server.stop()

    def test_connect_failure(self):
        probe = socket.socket()
        probe.bind(("127.0.0.1", 0))
        port = probe.getsockname()[1]
        probe.close()
        with pytest.raises(ClientError):
            TcpTransport("127.0.0.1", port, timeout=0.5)

    def test_strict_dialect_sleeps_instead_of_waiting(self):
        emu = emulator()
        c = client_for(emu, STRICT)
        c.operate()
        c.wait(1)
        assert emu.state.t == 0.0

    @pytest.mark.parametrize("text, expected", [
        ("127.0.0.1:7230", ("127.0.0.1", 7230)), (":9000", ("127.0.0.1", 9000)),
    ])
    def test_parse_address(self, text, expected):
        assert parse_address(text) == expected

    def test_parse_address_needs_port(self):
        with pytest.raises(ValueError):
            parse_address("localhost")
