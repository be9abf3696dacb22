"""NETCONF-style framing and client.

Messages are XML documents terminated by ``]]>]]>``.  Both ends send a
``<hello>`` advertising ``urn:example:netconf-lite:1.0`` before any RPC.
"""

from __future__ import annotations

import asyncio
import itertools
import xml.etree.ElementTree as ET
from typing import Optional

EOM = b"]]>]]>"
BASE_NS = "urn:ietf:params:xml:ns:netconf:base:1.0"
CAPABILITY = "urn:example:netconf-lite:1.0"
DEFAULT_PORT = 2830
STREAM_LIMIT = 64 * 1024 * 1024


class RpcError(Exception):
    def __init__(self, tag: str, message: str = ""):
        super().__init__(f"{tag}: {message}" if message else tag)
        self.tag = tag
        self.message = message


def local_name(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def strip_ns(elem: ET.Element) -> ET.Element:
    for node in elem.iter():
        node.tag = local_name(node.tag)
        for key in [k for k in node.attrib if k.startswith("{")]:
            node.attrib[local_name(key)] = node.attrib.pop(key)
    return elem


def hello_xml(session_id: Optional[int] = None) -> str:
    sid = f"<session-id>{session_id}</session-id>" if session_id is not None else ""
    return (f'<hello xmlns="{BASE_NS}"><capabilities><capability>{CAPABILITY}</capability>'
            f"</capabilities>{sid}</hello>")


async def read_message(reader: asyncio.StreamReader) -> bytes:
    data = await reader.readuntil(EOM)
    return data[:-len(EOM)]


def write_message(writer: asyncio.StreamWriter, xml: str | bytes) -> None:
    if isinstance(xml, str):
        xml = xml.encode("utf-8")
    writer.write(xml + EOM)


def parse_hello(data: bytes) -> list[str]:
    root = strip_ns(ET.fromstring(data))
    if root.tag != "hello":
        raise RpcError("malformed-message", f"expected hello, got <{root.tag}>")
    return [c.text for c in root.iter("capability")]


class NetconfClient:
    """Long-lived session to one device; one outstanding RPC at a time."""

    def __init__(self, host: str, port: int = DEFAULT_PORT, name: str = ""):
        self.host = host
        self.port = port
        self.name = name or f"{host}:{port}"
        self.capabilities: list[str] = []
        self._reader = None
        self._writer = None
        self._ids = itertools.count(1)
        self._lock = asyncio.Lock()

    async def connect(self, timeout: float = 5.0) -> "NetconfClient":
        self._reader, self._writer = await asyncio.wait_for(
            asyncio.open_connection(self.host, self.port, limit=STREAM_LIMIT), timeout)
        write_message(self._writer, hello_xml())
        self.capabilities = parse_hello(await asyncio.wait_for(read_message(self._reader), timeout))
        if CAPABILITY not in self.capabilities:
            raise RpcError("operation-not-supported", f"{self.name} lacks {CAPABILITY}")
        return self

    @property
    def connected(self) -> bool:
        return self._writer is not None and not self._writer.is_closing()

    async def close(self):
        if self._writer is not None:
            self._writer.close()
            try:
                await self._writer.wait_closed()
            except (ConnectionError, OSError):
                pass
            self._writer = None

    async def rpc(self, body: str, timeout: float = 30.0) -> ET.Element:
        async with self._lock:
            if not self.connected:
                raise ConnectionError(f"NETCONF session to {self.name} is down")
            mid = str(next(self._ids))
            write_message(self._writer, f'<rpc message-id="{mid}" xmlns="{BASE_NS}">{body}</rpc>')
            try:
                await self._writer.drain()
                data = await asyncio.wait_for(read_message(self._reader), timeout)
            except (asyncio.IncompleteReadError, asyncio.TimeoutError, OSError) as exc:
                self._writer.close()
                self._writer = None
                raise ConnectionError(f"NETCONF session to {self.name} failed: {exc!r}") from exc
        reply = strip_ns(ET.fromstring(data))
        err = reply.find("rpc-error")
        if err is not None:
            raise RpcError(err.findtext("error-tag", "unknown"), err.findtext("error-message", ""))
        return reply

    async def edit_config(self, config_xml: str, target: str = "candidate"):
        return await self.rpc(f"<edit-config><target><{target}/></target>{config_xml}</edit-config>")

    async def validate(self, source: str = "candidate"):
        return await self.rpc(f"<validate><source><{source}/></source></validate>")

    async def commit(self):
        return await self.rpc("<commit/>")

    async def discard_changes(self):
        return await self.rpc("<discard-changes/>")

    async def get_config(self, source: str = "running") -> ET.Element:
        """Return the ``<config>`` element of the requested datastore."""
        reply = await self.rpc(f"<get-config><source><{source}/></source></get-config>")
        data = reply.find("data")
        config = data.find("config") if data is not None else None
        return config if config is not None else ET.Element("config")
