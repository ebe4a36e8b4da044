"""Unstructured mesh container, Gmsh MSH 2.2 I/O and the resolution rule.

A :class:`Mesh` stores nodes as a dense coordinate array (the row index is
the node id) and elements in per-kind blocks so that assembly can be
vectorized. All node and element ids are 0-based and dense. Meshes are
immutable after construction and safe for concurrent reads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .elements import KIND_DIM, NODES_PER_KIND, quad_rule, shape_eval

#: Gmsh element type codes accepted by the reader.
GMSH_KIND = {2: "tri3", 3: "quad4", 4: "tet4", 5: "hex8"}
GMSH_CODE = {v: k for k, v in GMSH_KIND.items()}

_EDGES = {
    "tri3": [(0, 1), (1, 2), (2, 0)],
    "quad4": [(0, 1), (1, 2), (2, 3), (3, 0)],
    "tet4": [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)],
    "hex8": [
        (0, 1), (1, 2), (2, 3), (3, 0),
        (4, 5), (5, 6), (6, 7), (7, 4),
        (0, 4), (1, 5), (2, 6), (3, 7),
    ],
}


class MeshError(Exception):
    """Malformed mesh data or unreadable mesh file."""


@dataclass(frozen=True)
class Element:
    """View of one element: global id, kind and connectivity."""

    id: int
    kind: str
    node_ids: np.ndarray


@dataclass
class ElementBlock:
    """Contiguous group of same-kind elements."""

    kind: str
    conn: np.ndarray  # (ne, nodes_per_element) int

    @property
    def n_elements(self) -> int:
        return self.conn.shape[0]


@dataclass(frozen=True)
class ResolutionReport:
    """Outcome of the length-scale resolution check.

    ``pass`` requires the regularization length to be at least five times
    the characteristic element size of the (crack-zone) region, where the
    characteristic size of an element is its minimum edge length.
    """

    h_min: float
    h_max: float
    h_crackzone: float
    ratio: float
    passed: bool


class Mesh:
    """Immutable unstructured mesh with named node and side sets.

    Parameters
    ----------
    nodes : ndarray, shape (n_nodes, dim)
        Coordinates in mm; the row index is the node id.
    blocks : list of ElementBlock
        Element connectivity grouped by kind. Element ids are assigned
        contiguously in block order.
    node_sets : dict
        Named arrays of node ids (boundary conditions, crack zone, ...).
    side_sets : dict
        Named arrays of ``(element_id, local_face)`` pairs.
    metadata : dict
        Free-form annotations (specimen name, notch tip, crack axis, ...).
    """

    def __init__(self, nodes, blocks, node_sets=None, side_sets=None, metadata=None):
        self.nodes = np.ascontiguousarray(nodes, dtype=float)
        self.blocks = list(blocks)
        self.node_sets = {k: np.asarray(v, dtype=np.intp) for k, v in (node_sets or {}).items()}
        self.side_sets = {k: np.asarray(v, dtype=np.intp) for k, v in (side_sets or {}).items()}
        self.metadata = dict(metadata or {})
        self._offsets = np.cumsum([0] + [b.n_elements for b in self.blocks])
        self._validate()

    # ------------------------------------------------------------------
    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_elements(self) -> int:
        return int(self._offsets[-1])

    def element(self, eid: int) -> Element:
        """Return the element with global id ``eid``."""
        if not 0 <= eid < self.n_elements:
            raise IndexError(f"element id {eid} out of range")
        b = int(np.searchsorted(self._offsets, eid, side="right")) - 1
        block = self.blocks[b]
        return Element(id=eid, kind=block.kind, node_ids=block.conn[eid - self._offsets[b]])

    def elements(self):
        """Iterate over all elements in global id order."""
        eid = 0
        for block in self.blocks:
            for row in block.conn:
                yield Element(id=eid, kind=block.kind, node_ids=row)
                eid += 1

    def node_set(self, name: str) -> np.ndarray:
        try:
            return self.node_sets[name]
        except KeyError:
            raise MeshError(f"unknown node set {name!r}") from None

    # ------------------------------------------------------------------
    def _validate(self):
        if self.nodes.ndim != 2 or self.dim not in (2, 3):
            raise MeshError(f"nodes must be (n, 2) or (n, 3), got {self.nodes.shape}")
        if not np.all(np.isfinite(self.nodes)):
            raise MeshError("node coordinates must be finite")
        if not self.blocks:
            raise MeshError("mesh has no elements")
        for block in self.blocks:
            if block.kind not in NODES_PER_KIND:
                raise MeshError(f"unknown element kind {block.kind!r}")
            if KIND_DIM[block.kind] != self.dim:
                raise MeshError(
                    f"{block.kind} elements are {KIND_DIM[block.kind]}D but the "
                    f"mesh is {self.dim}D"
                )
            nper = NODES_PER_KIND[block.kind]
            if block.conn.ndim != 2 or block.conn.shape[1] != nper:
                raise MeshError(
                    f"{block.kind} connectivity must have {nper} nodes per element"
                )
            if block.conn.size and (block.conn.min() < 0 or block.conn.max() >= self.n_nodes):
                bad = int(block.conn.max())
                raise MeshError(f"connectivity references unknown node id {bad}")
            srt = np.sort(block.conn, axis=1)
            if np.any(srt[:, 1:] == srt[:, :-1]):
                raise MeshError(f"repeated node id inside a {block.kind} element")
        for name, ids in {**self.node_sets, **self.side_sets}.items():
            if ids.size == 0:
                raise MeshError(f"set {name!r} is empty")
        for name, ids in self.node_sets.items():
            if ids.min() < 0 or ids.max() >= self.n_nodes:
                raise MeshError(f"node set {name!r} references unknown node ids")
        self._check_jacobians()

    def _check_jacobians(self):
        for block in self.blocks:
            rule = quad_rule(block.kind)
            coords = self.nodes[block.conn]
            for q in range(rule.n_points):
                _, dN = shape_eval(block.kind, rule.points[q])
                J = np.einsum("ai,eaj->eij", dN, coords)
                detJ = np.linalg.det(J)
                if np.any(detJ <= 0.0):
                    bad = int(np.argmax(detJ <= 0.0))
                    raise MeshError(
                        f"inverted {block.kind} element (block-local index {bad}, "
                        f"det J = {detJ[bad]:.3e})"
                    )

    # ------------------------------------------------------------------
    def measure(self) -> float:
        """Total area (2D) or volume (3D) by quadrature."""
        total = 0.0
        for block in self.blocks:
            rule = quad_rule(block.kind)
            coords = self.nodes[block.conn]
            for q in range(rule.n_points):
                _, dN = shape_eval(block.kind, rule.points[q])
                J = np.einsum("ai,eaj->eij", dN, coords)
                total += float(np.linalg.det(J).sum() * rule.weights[q])
        return total

    def element_sizes(self) -> np.ndarray:
        """Minimum edge length of every element, in global id order."""
        out = np.empty(self.n_elements)
        pos = 0
        for block in self.blocks:
            coords = self.nodes[block.conn]  # (ne, nper, dim)
            ne = block.n_elements
            h = np.full(ne, np.inf)
            for a, b in _EDGES[block.kind]:
                edge = np.linalg.norm(coords[:, a] - coords[:, b], axis=1)
                h = np.minimum(h, edge)
            out[pos : pos + ne] = h
            pos += ne
        return out


def characteristic_size(mesh: Mesh, ell: float, region: str | None = None) -> ResolutionReport:
    """Check the mesh against the length-scale resolution rule.

    The characteristic size ``h`` of an element is its minimum edge
    length. The report passes when ``ell / h_crackzone >= 5`` with
    ``h_crackzone`` the largest characteristic size among the elements of
    ``region`` (all elements if no region is given). An element belongs to
    the region when all of its nodes are in the named node set.
    """
    if ell <= 0:
        raise ValueError(f"ell must be positive, got {ell}")
    h = mesh.element_sizes()
    if region is not None:
        ids = mesh.node_set(region)
        in_set = np.zeros(mesh.n_nodes, dtype=bool)
        in_set[ids] = True
        mask = np.empty(mesh.n_elements, dtype=bool)
        pos = 0
        for block in mesh.blocks:
            mask[pos : pos + block.n_elements] = in_set[block.conn].all(axis=1)
            pos += block.n_elements
        if not mask.any():
            raise MeshError(f"region {region!r} contains no whole element")
        h_zone = float(h[mask].max())
    else:
        h_zone = float(h.max())
    ratio = ell / h_zone
    return ResolutionReport(
        h_min=float(h.min()),
        h_max=float(h.max()),
        h_crackzone=h_zone,
        ratio=ratio,
        # tolerate roundoff at the exact ratio-5 boundary
        passed=bool(ratio >= 5.0 * (1.0 - 1e-9)),
    )


# ----------------------------------------------------------------------
# Gmsh MSH 2.2 ASCII
# ----------------------------------------------------------------------

def read_gmsh(path) -> Mesh:
    """Read a Gmsh MSH 2.2 ASCII file.

    Only element type codes 2 (tri3), 3 (quad4), 4 (tet4) and 5 (hex8)
    are accepted; any other code is an error. Physical group names become
    node set names (the nodes of all elements carrying the tag); 1-based
    Gmsh node ids are remapped to dense 0-based ids.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh]

    sections: dict[str, list[str]] = {}
    i = 0
    while i < len(lines):
        ln = lines[i]
        if ln.startswith("$") and not ln.startswith("$End"):
            name = ln[1:]
            end = f"$End{name}"
            try:
                j = lines.index(end, i + 1)
            except ValueError:
                raise MeshError(f"section ${name} is not closed (missing {end})") from None
            sections[name] = lines[i + 1 : j]
            i = j + 1
        else:
            i += 1

    if "MeshFormat" not in sections:
        raise MeshError("missing $MeshFormat section")
    fmt = sections["MeshFormat"][0].split()
    if fmt[:3] != ["2.2", "0", "8"]:
        raise MeshError(f"unsupported MSH format {' '.join(fmt)!r}, expected '2.2 0 8'")

    phys_names: dict[int, str] = {}
    if "PhysicalNames" in sections:
        body = sections["PhysicalNames"]
        try:
            n = int(body[0])
        except (IndexError, ValueError):
            raise MeshError("malformed $PhysicalNames header") from None
        for ln in body[1 : 1 + n]:
            parts = ln.split(None, 2)
            if len(parts) != 3:
                raise MeshError(f"malformed physical name line: {ln!r}")
            phys_names[int(parts[1])] = parts[2].strip().strip('"')

    if "Nodes" not in sections:
        raise MeshError("missing $Nodes section")
    body = sections["Nodes"]
    try:
        n_nodes = int(body[0])
    except (IndexError, ValueError):
        raise MeshError("malformed $Nodes header") from None
    if len(body) - 1 < n_nodes:
        raise MeshError(f"$Nodes announces {n_nodes} nodes but lists {len(body) - 1}")
    gmsh_ids = np.empty(n_nodes, dtype=np.int64)
    coords3 = np.empty((n_nodes, 3))
    for k in range(n_nodes):
        parts = body[1 + k].split()
        if len(parts) != 4:
            raise MeshError(f"malformed node line: {body[1 + k]!r}")
        gmsh_ids[k] = int(parts[0])
        coords3[k] = [float(p) for p in parts[1:]]
    id_map = {int(g): k for k, g in enumerate(gmsh_ids)}
    if len(id_map) != n_nodes:
        raise MeshError("duplicate node ids in $Nodes")

    if "Elements" not in sections:
        raise MeshError("missing $Elements section")
    body = sections["Elements"]
    try:
        n_elem = int(body[0])
    except (IndexError, ValueError):
        raise MeshError("malformed $Elements header") from None
    if len(body) - 1 < n_elem:
        raise MeshError(f"$Elements announces {n_elem} elements but lists {len(body) - 1}")

    conn_by_kind: dict[str, list[list[int]]] = {}
    tags_by_kind: dict[str, list[int]] = {}
    for k in range(n_elem):
        parts = [int(p) for p in body[1 + k].split()]
        if len(parts) < 3:
            raise MeshError(f"malformed element line: {body[1 + k]!r}")
        etype, ntags = parts[1], parts[2]
        if etype not in GMSH_KIND:
            raise MeshError(f"unsupported element type code {etype}")
        kind = GMSH_KIND[etype]
        tags = parts[3 : 3 + ntags]
        node_part = parts[3 + ntags :]
        if len(node_part) != NODES_PER_KIND[kind]:
            raise MeshError(
                f"element {parts[0]}: {kind} needs {NODES_PER_KIND[kind]} nodes, "
                f"got {len(node_part)}"
            )
        try:
            rows = [id_map[g] for g in node_part]
        except KeyError as exc:
            raise MeshError(
                f"element {parts[0]} references unknown node id {exc.args[0]}"
            ) from None
        conn_by_kind.setdefault(kind, []).append(rows)
        tags_by_kind.setdefault(kind, []).append(tags[0] if tags else 0)

    dims = {KIND_DIM[k] for k in conn_by_kind}
    if len(dims) != 1:
        raise MeshError(f"mixed element dimensions in file: {sorted(dims)}")
    dim = dims.pop()
    nodes = coords3[:, :dim].copy()
    if dim == 2 and np.any(coords3[:, 2] != 0.0):
        raise MeshError("2D element file contains nodes with nonzero z coordinate")

    blocks = []
    node_sets: dict[str, set[int]] = {}
    for kind in sorted(conn_by_kind):
        conn = np.asarray(conn_by_kind[kind], dtype=np.intp)
        blocks.append(ElementBlock(kind=kind, conn=conn))
        for row, tag in zip(conn, tags_by_kind[kind]):
            if tag:
                name = phys_names.get(tag, f"physical_{tag}")
                node_sets.setdefault(name, set()).update(int(n) for n in row)

    sets = {name: np.array(sorted(ids), dtype=np.intp) for name, ids in node_sets.items()}
    return Mesh(nodes=nodes, blocks=blocks, node_sets=sets)


def write_msh(mesh: Mesh, path) -> None:
    """Write a mesh as Gmsh MSH 2.2 ASCII.

    Coordinates are written with ``repr`` so that a read/write round trip
    reproduces them bit-exactly.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
        fh.write(f"$Nodes\n{mesh.n_nodes}\n")
        for i, xyz in enumerate(mesh.nodes, start=1):
            coords = [float(v) for v in xyz] + [0.0] * (3 - mesh.dim)
            fh.write(f"{i} {coords[0]!r} {coords[1]!r} {coords[2]!r}\n")
        fh.write("$EndNodes\n")
        fh.write(f"$Elements\n{mesh.n_elements}\n")
        eid = 1
        for block in mesh.blocks:
            code = GMSH_CODE[block.kind]
            for row in block.conn:
                nodes = " ".join(str(int(n) + 1) for n in row)
                fh.write(f"{eid} {code} 2 0 0 {nodes}\n")
                eid += 1
        fh.write("$EndElements\n")
