"""Hybrid Controller protocol: codec, server sessions and the agent-side client."""

from .codec import EXTENSION, STRICT
from .client import HybridClient, InProcessTransport, TcpTransport
from .server import Session, TcpServer

__all__ = ["EXTENSION", "STRICT", "HybridClient", "InProcessTransport",
           "TcpTransport", "Session", "TcpServer"]
