"""Line-oriented text format for PSNs, requests and request sequences.

Grammar (one record per line, ``#`` starts a comment)::

    node <id> <cap_cpu> <cap_ram> <max_cpu> <max_ram>
    link <id> <a> <b> <cap_bw> <max_bw>
    request <arrival_time> <lifetime>
    nspr
    vnf <index> <req_cpu> <req_ram>
    vlink <tail> <head> <req_bw>

``nspr`` and ``request`` both open a new request block; the ``vnf``/``vlink``
lines that follow belong to it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Tuple

from .errors import ConfigError, FixtureParseError
from .model import NsprGraph, PhysicalLink, PhysicalNode, PsnGraph, VirtualLink, Vnf
from .objective import Mapping
from .workload import NsprRequest

_ARITY = {"node": 5, "link": 5, "request": 2, "nspr": 0, "vnf": 3, "vlink": 3}


def dump_psn(psn: PsnGraph) -> str:
    lines = [
        f"node {n.id} {n.cap_cpu} {n.cap_ram} {n.max_cpu} {n.max_ram}" for n in psn.nodes
    ]
    lines.extend(
        f"link {link.id} {link.a} {link.b} {link.cap_bw} {link.max_bw}" for link in psn.links
    )
    return "\n".join(lines) + "\n"


def _nspr_lines(nspr: NsprGraph) -> List[str]:
    lines = [f"vnf {v.index} {v.req_cpu} {v.req_ram}" for v in nspr.vnfs]
    lines.extend(f"vlink {vl.tail} {vl.head} {vl.req_bw}" for vl in nspr.vlinks)
    return lines


def dump_nspr(nspr: NsprGraph) -> str:
    return "\n".join(["nspr", *_nspr_lines(nspr)]) + "\n"


def dump_instance(psn: PsnGraph, nspr: NsprGraph) -> str:
    return dump_psn(psn) + dump_nspr(nspr)


def dump_requests(requests: Iterable[NsprRequest]) -> str:
    lines: List[str] = []
    for request in requests:
        lines.append(f"request {request.arrival_time!r} {request.lifetime!r}")
        lines.extend(_nspr_lines(request.nspr))
    return "\n".join(lines) + "\n"


def dump_mapping(mapping: Mapping) -> str:
    """``place <vnf> <node>`` per VNF and ``route <vlink> <link ids...>`` per virtual link."""
    lines = [f"place {k} {node}" for k, node in enumerate(mapping.x) if node is not None]
    for k, path in enumerate(mapping.y):
        if path is not None:
            lines.append(" ".join(["route", str(k), *(str(link) for link in path)]).rstrip())
    return "\n".join(lines) + "\n"


# -----------------------------------------------------------------------------


@dataclass
class _Block:
    line_number: int
    timing: Optional[Tuple[float, float]] = None
    vnfs: List[Vnf] = field(default_factory=list)
    vlinks: List[VirtualLink] = field(default_factory=list)


@dataclass
class _Document:
    nodes: List[PhysicalNode] = field(default_factory=list)
    links: List[PhysicalLink] = field(default_factory=list)
    blocks: List[_Block] = field(default_factory=list)


def _parse(text: str) -> _Document:
    doc = _Document()
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        keyword, *args = line.split()
        if keyword not in _ARITY:
            raise FixtureParseError(f"unknown record {keyword!r}", line_number)
        if len(args) != _ARITY[keyword]:
            raise FixtureParseError(
                f"{keyword!r} expects {_ARITY[keyword]} fields, got {len(args)}", line_number
            )
        try:
            if keyword == "request":
                doc.blocks.append(_Block(line_number, (float(args[0]), float(args[1]))))
                continue
            if keyword == "nspr":
                doc.blocks.append(_Block(line_number))
                continue
            values = [int(arg) for arg in args]
            if keyword == "node":
                doc.nodes.append(PhysicalNode(*values))
            elif keyword == "link":
                doc.links.append(PhysicalLink(*values))
            else:
                if not doc.blocks:
                    raise FixtureParseError(f"{keyword!r} outside of a request block", line_number)
                if keyword == "vnf":
                    doc.blocks[-1].vnfs.append(Vnf(*values))
                else:
                    doc.blocks[-1].vlinks.append(VirtualLink(*values))
        except ValueError as err:
            raise FixtureParseError(str(err), line_number) from err
    return doc


def _to_nspr(block: _Block) -> NsprGraph:
    try:
        return NsprGraph(tuple(block.vnfs), tuple(block.vlinks))
    except ConfigError as err:
        raise FixtureParseError(str(err), block.line_number) from err


def _to_psn(doc: _Document) -> PsnGraph:
    if not doc.nodes:
        raise FixtureParseError("no node records")
    try:
        psn = PsnGraph(doc.nodes, doc.links)
        psn.validate()
    except (ConfigError, IndexError) as err:
        raise FixtureParseError(str(err)) from err
    return psn


def load_psn(text: str) -> PsnGraph:
    return _to_psn(_parse(text))


def load_nspr(text: str) -> NsprGraph:
    doc = _parse(text)
    if len(doc.blocks) != 1:
        raise FixtureParseError(f"expected exactly one request block, got {len(doc.blocks)}")
    return _to_nspr(doc.blocks[0])


def load_instance(text: str) -> Tuple[PsnGraph, NsprGraph]:
    doc = _parse(text)
    if len(doc.blocks) != 1:
        raise FixtureParseError(f"expected exactly one request block, got {len(doc.blocks)}")
    return _to_psn(doc), _to_nspr(doc.blocks[0])


def load_requests(text: str) -> List[NsprRequest]:
    requests: List[NsprRequest] = []
    for block in _parse(text).blocks:
        if block.timing is None:
            raise FixtureParseError("request block without timing", block.line_number)
        try:
            requests.append(NsprRequest(_to_nspr(block), *block.timing))
        except ValueError as err:
            raise FixtureParseError(str(err), block.line_number) from err
    return requests
