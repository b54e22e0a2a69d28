"""Shared fixtures.

The whole suite must pass with no network access, so outbound socket
connections are blocked for the entire session; any accidental network
call fails loudly instead of hanging.
"""

import socket

import pytest

_REAL_CONNECT = socket.socket.connect


class NetworkBlockedError(RuntimeError):
    pass


def _blocked_connect(self, address):
    raise NetworkBlockedError(f"outbound network access is disabled in tests: {address}")


@pytest.fixture(scope="session", autouse=True)
def no_network():
    socket.socket.connect = _blocked_connect
    yield
    socket.socket.connect = _REAL_CONNECT


def network_is_blocked() -> bool:
    return socket.socket.connect is _blocked_connect
