"""Virtual outdoor anchors from street-view annotated points of interest."""

from __future__ import annotations

import csv
import io
import math
from typing import Iterable, List, Mapping, Union

from ..geom import GeoPose, GeoRangeError
from .model import OUTDOOR, Anchor

VIRTUAL_QUALITY = 0.5
STREET_VIEW_CI_HORIZONTAL = 2.0
STREET_VIEW_CI_YAW = 10.0
STREET_VIEW_CI_VERTICAL = 3.0


class PoiError(ValueError):
    def __init__(self, row: int, field: str, message: str) -> None:
        super().__init__(f"row {row}, field {field!r}: {message}")
        self.row = row
        self.field = field


def _number(row: Mapping[str, str], key: str, index: int, default=None) -> float:
    raw = row.get(key)
    if raw is None or str(raw).strip() == "":
        if default is None:
            raise PoiError(index, key, "missing value")
        return default
    try:
        value = float(raw)
    except ValueError:
        raise PoiError(index, key, f"not a number: {raw!r}") from None
    if not math.isfinite(value):
        raise PoiError(index, key, f"not finite: {raw!r}")
    return value


def import_poi(
    rows: Union[str, Iterable[Mapping[str, str]]],
    *,
    id_prefix: str = "poi-",
    quality: float = VIRTUAL_QUALITY,
    ci_horizontal: float = STREET_VIEW_CI_HORIZONTAL,
    ci_yaw: float = STREET_VIEW_CI_YAW,
    ci_vertical: float = STREET_VIEW_CI_VERTICAL,
    created_at: float = 0.0,
) -> List[Anchor]:
    """Build one outdoor anchor per POI row.

    ``rows`` is CSV text with header ``name,lat,lon,alt,yaw`` (``alt`` and
    ``yaw`` optional) or an iterable of already-parsed dict rows. Row numbers
    in errors count data rows from 1.
    """
    if isinstance(rows, str):
        rows = csv.DictReader(io.StringIO(rows))
    anchors = []
    for index, row in enumerate(rows, start=1):
        name = (row.get("name") or "").strip()
        if not name:
            raise PoiError(index, "name", "missing value")
        lat = _number(row, "lat", index)
        lon = _number(row, "lon", index)
        alt = _number(row, "alt", index, default=0.0)
        yaw = _number(row, "yaw", index, default=0.0)
        if not -90.0 <= lat <= 90.0:
            raise PoiError(index, "lat", f"{lat} outside [-90, 90]")
        if not -180.0 <= lon < 180.0:
            raise PoiError(index, "lon", f"{lon} outside [-180, 180)")
        if not 0.0 <= yaw < 360.0:
            raise PoiError(index, "yaw", f"{yaw} outside [0, 360)")
        try:
            geo = GeoPose(lat, lon, alt, yaw, ci_horizontal, ci_yaw, ci_vertical)
        except (GeoRangeError, ValueError) as exc:
            raise PoiError(index, "geo", str(exc)) from exc
        anchors.append(
            Anchor(
                id=f"{id_prefix}{index}",
                kind=OUTDOOR,
                geo=geo,
                quality=quality,
                name=name,
                created_at=created_at,
            )
        )
    return anchors
