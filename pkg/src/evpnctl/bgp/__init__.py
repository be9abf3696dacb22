"""MP-BGP EVPN codec and peer sessions."""

from . import codec, session
from .codec import EvpnRoute, PathAttributes, parse_update, serialize_update
from .session import BgpListener, BgpSession

__all__ = ["codec", "session", "EvpnRoute", "PathAttributes", "parse_update",
           "serialize_update", "BgpListener", "BgpSession"]
