"""Context sensing and pattern matching.

Providers are pluggable callables (real sensing belongs to the hosting
platform); a provider failure leaves its field absent rather than failing
the decision. Pattern matching is pure, total, and fail-closed: a pattern
field with no corresponding snapshot field never matches.
"""

from __future__ import annotations

import json
import math
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Mapping, Optional

from .model import (
    CircularZone,
    ContextPattern,
    ContextSnapshot,
    GeoPoint,
    Location,
    NamedZone,
    NetworkDescriptor,
    ValidationError,
    location_from_dict,
    network_from_dict,
)

EARTH_RADIUS_M = 6_371_000.0

NetworkProvider = Callable[[], Optional[NetworkDescriptor]]
LocationProvider = Callable[[], Optional[Location]]
RequesterProvider = Callable[[], Optional[str]]


class ContextManager:
    """Assembles snapshots from whatever providers are configured."""

    def __init__(
        self,
        network: NetworkProvider | None = None,
        location: LocationProvider | None = None,
        requester_object: RequesterProvider | None = None,
    ) -> None:
        self._network = network
        self._location = location
        self._requester = requester_object

    def get_context(self, now: datetime) -> ContextSnapshot:
        """Build a snapshot at ``now``; provider failures yield absent fields."""
        return ContextSnapshot(
            when=now,
            network=_probe(self._network),
            location=_probe(self._location),
            requester_object=_probe(self._requester),
        )


def _probe(provider: Callable[[], Any] | None) -> Any:
    if provider is None:
        return None
    try:
        return provider()
    except Exception:
        return None


def manager_from_config(config: Mapping[str, Any]) -> ContextManager:
    """Build a manager from static fixture values (docs/schema.md, providers).

    Example::

        {"network": {"name": "home-wifi"},
         "location": {"kind": "point", "lat": 43.62, "lon": 7.05},
         "requesterObject": "sensor-17"}
    """
    network = config.get("network")
    location = config.get("location")
    requester = config.get("requesterObject")
    network_value = network_from_dict(network) if network else None
    location_value = location_from_dict(location) if location else None
    return ContextManager(
        network=(lambda: network_value) if network_value else None,
        location=(lambda: location_value) if location_value else None,
        requester_object=(lambda: requester) if requester else None,
    )


def manager_from_file(path: Path) -> ContextManager:
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"provider config is not valid JSON: {exc}") from exc
    return manager_from_config(payload)


def haversine_m(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters on a sphere of radius 6,371 km."""
    lat1, lon1, lat2, lon2 = map(math.radians, (a.lat, a.lon, b.lat, b.lon))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2.0) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def _zone_matches(zone: CircularZone | NamedZone, location: Location | None) -> bool:
    if location is None:
        return False
    if isinstance(zone, NamedZone):
        return isinstance(location, NamedZone) and zone.name == location.name
    if not isinstance(location, GeoPoint):
        return False
    return haversine_m(zone.center, location) <= zone.radius_m


def context_matches(pattern: ContextPattern, snapshot: ContextSnapshot) -> bool:
    """True iff every present pattern field matches the snapshot.

    The empty pattern matches everything; a present pattern field against an
    absent snapshot field is a non-match.
    """
    if pattern.network is not None and pattern.network != snapshot.network:
        return False
    if pattern.zone is not None and not _zone_matches(pattern.zone, snapshot.location):
        return False
    if pattern.time_window is not None and not pattern.time_window.contains(snapshot.when):
        return False
    if pattern.requester_object is not None:
        if pattern.requester_object != snapshot.requester_object:
            return False
    return True
