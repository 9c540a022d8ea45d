"""OpenStreetMap XML extract parsing.

Only the node/way/relation elements and their tags are kept; everything
else in the document is ignored. Way node references must resolve against
the node table; relation members may point outside the extract (common in
real exports) and are resolved lazily where used.
"""

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Optional


class OsmParseError(ValueError):
    """The document is not well-formed XML."""


class OsmIntegrityError(ValueError):
    """A way references a node id missing from the extract."""


@dataclass(frozen=True)
class OsmWay:
    node_ids: tuple[int, ...]
    tags: dict[str, str]


@dataclass(frozen=True)
class OsmMember:
    type: str
    ref: int
    role: str


@dataclass(frozen=True)
class OsmRelation:
    members: tuple[OsmMember, ...]
    tags: dict[str, str]


@dataclass(frozen=True)
class OsmExtract:
    nodes: dict[int, tuple[float, float]]  # id -> (lat, lon)
    node_tags: dict[int, dict[str, str]]  # only nodes that carry tags
    ways: dict[int, OsmWay]
    relations: dict[int, OsmRelation]


def _tags_of(elem: ET.Element) -> dict[str, str]:
    return {t.attrib["k"]: t.attrib["v"] for t in elem if t.tag == "tag"}


def parse_osm_xml(xml_bytes: bytes) -> OsmExtract:
    """Parse an OSM XML extract into resolved node/way/relation tables."""
    try:
        root = ET.fromstring(xml_bytes)
    except ET.ParseError as exc:
        raise OsmParseError(f"malformed OSM XML: {exc}") from exc

    nodes: dict[int, tuple[float, float]] = {}
    node_tags: dict[int, dict[str, str]] = {}
    ways: dict[int, OsmWay] = {}
    relations: dict[int, OsmRelation] = {}

    for child in root:
        if child.tag == "node":
            nid = int(child.attrib["id"])
            nodes[nid] = (float(child.attrib["lat"]), float(child.attrib["lon"]))
            tags = _tags_of(child)
            if tags:
                node_tags[nid] = tags
        elif child.tag == "way":
            wid = int(child.attrib["id"])
            refs = tuple(int(m.attrib["ref"]) for m in child if m.tag == "nd")
            ways[wid] = OsmWay(node_ids=refs, tags=_tags_of(child))
        elif child.tag == "relation":
            rid = int(child.attrib["id"])
            members = tuple(
                OsmMember(
                    type=m.attrib.get("type", ""),
                    ref=int(m.attrib["ref"]),
                    role=m.attrib.get("role", ""),
                )
                for m in child
                if m.tag == "member"
            )
            relations[rid] = OsmRelation(members=members, tags=_tags_of(child))

    for wid, way in ways.items():
        for ref in way.node_ids:
            if ref not in nodes:
                raise OsmIntegrityError(f"way {wid} references missing node {ref}")

    return OsmExtract(nodes=nodes, node_tags=node_tags, ways=ways, relations=relations)


def way_coords(osm: OsmExtract, way_id: int) -> list[tuple[float, float]]:
    """(lat, lon) vertices of a way, in node order."""
    return [osm.nodes[ref] for ref in osm.ways[way_id].node_ids]
