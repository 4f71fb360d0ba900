"""Persistent anchor map: model, canonical file format, POI import, GeoJSON."""

from .geojson import GeoReferenceError, anchor_enu_poses, export_geojson
from .io import (
    MapFormatError,
    canonical_dumps,
    deserialize,
    load_map,
    save_map,
    serialize,
    validate_bytes,
)
from .model import (
    DEFAULT_RELOC_RADIUS,
    FORMAT_VERSION,
    FORWARD,
    INDOOR,
    OUTDOOR,
    REVERSE,
    Anchor,
    Connection,
    ConnectionRecord,
    MapError,
    MapGraph,
    check_map,
    nearby_anchors,
)
from .poi import PoiError, import_poi
from .trail import DEFAULT_SPACING, BreadcrumbTrail, path_length, resample_trail

__all__ = [
    "Anchor", "BreadcrumbTrail", "Connection", "ConnectionRecord", "DEFAULT_RELOC_RADIUS",
    "DEFAULT_SPACING", "FORMAT_VERSION", "FORWARD", "GeoReferenceError", "INDOOR", "MapError",
    "MapFormatError", "MapGraph", "OUTDOOR", "PoiError", "REVERSE", "anchor_enu_poses",
    "canonical_dumps", "check_map", "deserialize", "export_geojson", "import_poi", "load_map",
    "nearby_anchors", "path_length", "resample_trail", "save_map", "serialize", "validate_bytes",
]
