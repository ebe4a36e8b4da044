"""Parametric built-in specimen meshes.

All specimens are generated as graded tensor-product grids (quad4 in 2D,
hex8 in 3D) with the notch carved out as an open slot of finite width, and
carry the node sets used by the boundary conditions (``load_line``,
``support_left``, ``support_right``) plus a ``crack_zone`` set marking the
refined band around the expected crack corridor.

The three-point bending specimens share the bounding box
25.4 mm x 76.2 mm x 12.7 mm; ``scale`` refines element counts and never
changes dimensions.
"""

from __future__ import annotations

import numpy as np

from .mesh import ElementBlock, Mesh, MeshError

_TOL = 1e-9


def _graded_steps(span: float, h_from: float, h_to: float, ratio: float = 1.35):
    """Step sizes filling ``span``, growing from ``h_from`` toward ``h_to``."""
    if span <= _TOL:
        return []
    steps = []
    h = h_from
    while sum(steps) < span:
        h = min(h * ratio, h_to)
        steps.append(h)
    f = span / sum(steps)
    return [s * f for s in steps]


def graded_axis(start, stop, fine_lo, fine_hi, h_fine, h_coarse):
    """1D grid coordinates, uniform ``h_fine`` in [fine_lo, fine_hi].

    Outside the fine window the spacing grows geometrically toward
    ``h_coarse``. The window bounds become grid points and the uniform
    spacing never exceeds ``h_fine``.
    """
    fine_lo = max(start, fine_lo)
    fine_hi = min(stop, fine_hi)
    if fine_hi <= fine_lo:
        raise ValueError("fine window is empty")
    n_fine = max(1, int(np.ceil((fine_hi - fine_lo) / h_fine - 1e-9)))
    coords = list(np.linspace(fine_lo, fine_hi, n_fine + 1))
    left = _graded_steps(fine_lo - start, h_fine, h_coarse)
    x = fine_lo
    for s in left:
        x -= s
        coords.insert(0, x)
    if left:
        coords[0] = start
    right = _graded_steps(stop - fine_hi, h_fine, h_coarse)
    x = fine_hi
    for s in right:
        x += s
        coords.append(x)
    if right:
        coords[-1] = stop
    return np.asarray(coords)


def snap_to_axis(coords: np.ndarray, value: float) -> np.ndarray:
    """Ensure ``value`` is a grid coordinate, moving the nearest point onto it."""
    coords = np.asarray(coords, dtype=float).copy()
    i = int(np.argmin(np.abs(coords - value)))
    if abs(coords[i] - value) > _TOL:
        if i in (0, len(coords) - 1):
            raise ValueError(f"cannot snap endpoint onto {value}")
        coords[i] = value
    return coords


def _grid_2d(xs, ys):
    nx, ny = len(xs) - 1, len(ys) - 1
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    nid = np.arange(nodes.shape[0]).reshape(ny + 1, nx + 1)
    conn = np.empty((ny * nx, 4), dtype=np.intp)
    k = 0
    for j in range(ny):
        row = np.column_stack(
            [nid[j, :-1], nid[j, 1:], nid[j + 1, 1:], nid[j + 1, :-1]]
        )
        conn[k : k + nx] = row
        k += nx
    return nodes, conn


def _grid_3d(xs, ys, zs):
    nx, ny, nz = len(xs) - 1, len(ys) - 1, len(zs) - 1
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    nid = np.arange(nodes.shape[0]).reshape(len(xs), len(ys), len(zs))
    conn = np.empty((nx * ny * nz, 8), dtype=np.intp)
    k = 0
    for i in range(nx):
        for j in range(ny):
            c = np.column_stack(
                [
                    nid[i, j, :-1], nid[i + 1, j, :-1],
                    nid[i + 1, j + 1, :-1], nid[i, j + 1, :-1],
                    nid[i, j, 1:], nid[i + 1, j, 1:],
                    nid[i + 1, j + 1, 1:], nid[i, j + 1, 1:],
                ]
            )
            conn[k : k + nz] = c
            k += nz
    return nodes, conn


def _carve(nodes, conn, remove_mask):
    """Drop elements where ``remove_mask`` is true and compact node ids."""
    conn = conn[~remove_mask]
    used = np.unique(conn)
    remap = np.full(nodes.shape[0], -1, dtype=np.intp)
    remap[used] = np.arange(used.size)
    return nodes[used], remap[conn]


def _select(nodes, **ranges):
    """Node ids whose coordinates fall inside the given closed intervals."""
    mask = np.ones(nodes.shape[0], dtype=bool)
    axis = {"x": 0, "y": 1, "z": 2}
    for key, (lo, hi) in ranges.items():
        c = nodes[:, axis[key]]
        mask &= (c >= lo - _TOL) & (c <= hi + _TOL)
    ids = np.nonzero(mask)[0]
    if ids.size == 0:
        raise MeshError(f"empty node selection for {ranges}")
    return ids


def three_point_bending_mesh(
    *,
    length=76.2,
    height=25.4,
    thickness=None,
    notch_offset=0.0,
    notch_depth=None,
    notch_width=None,
    span=63.5,
    h_fine=0.1,
    h_coarse=None,
    h_z=None,
    band_margin=3.0,
    support_width=0.0,
    notch_incline_deg=0.0,
    notch_depth_far=None,
) -> Mesh:
    """Notched beam under three-point bending (2D plane strain or 3D).

    Parameters
    ----------
    thickness : float or None
        None builds a 2D plane-strain section; otherwise a 3D block of
        this thickness (mm).
    notch_offset : float
        Horizontal notch position relative to the load line (mm); negative
        places the notch left of the load line (mixed-mode).
    notch_depth : float
        Slot depth from the bottom face; defaults to height / 3.
    notch_width : float
        Open slot width; defaults to two fine-element columns.
    band_margin : float
        Fine-band extension beyond the notch/load corridor (mm).
    support_width : float
        Footprint width of load and support lines; 0 uses a single node
        line.
    notch_incline_deg : float
        3D only: inclination of the notch trace across the thickness.
    notch_depth_far : float
        3D only: notch depth at the far face (z = thickness); the depth
        varies linearly across the thickness. Defaults to ``notch_depth``.
    """
    if notch_depth is None:
        notch_depth = height / 3.0
    if h_coarse is None:
        h_coarse = min(height / 8.0, 16.0 * h_fine)
    if notch_width is None:
        notch_width = 2.0 * h_fine

    load_x = length / 2.0
    notch_x = load_x + notch_offset
    sup_l = load_x - span / 2.0
    sup_r = load_x + span / 2.0
    if not (0 < sup_l < sup_r < length):
        raise ValueError("support span does not fit inside the specimen")
    if not (0 < notch_depth < height):
        raise ValueError("notch depth must lie inside the specimen height")

    band_lo = min(notch_x, load_x) - band_margin
    band_hi = max(notch_x, load_x) + band_margin
    if thickness is not None and notch_incline_deg:
        reach = abs(np.tan(np.radians(notch_incline_deg))) * thickness / 2.0
        band_lo -= reach
        band_hi += reach

    xs = graded_axis(0.0, length, band_lo, band_hi, h_fine, h_coarse)
    xs = snap_to_axis(xs, notch_x)
    xs = snap_to_axis(xs, load_x)
    xs = snap_to_axis(xs, sup_l)
    xs = snap_to_axis(xs, sup_r)
    ys = graded_axis(0.0, height, 0.0, height, h_fine, h_coarse)

    if thickness is None:
        nodes, conn = _grid_2d(xs, ys)
        cent = nodes[conn].mean(axis=1)
        remove = (np.abs(cent[:, 0] - notch_x) < notch_width / 2.0 + _TOL) & (
            cent[:, 1] < notch_depth
        )
        nodes, conn = _carve(nodes, conn, remove)
        kind = "quad4"
        tip = (notch_x, notch_depth)
    else:
        if h_z is None:
            h_z = thickness / 8.0
        zs = graded_axis(0.0, thickness, 0.0, thickness, h_z, h_z)
        nodes, conn = _grid_3d(xs, ys, zs)
        cent = nodes[conn].mean(axis=1)
        slope = np.tan(np.radians(notch_incline_deg))
        x_of_z = notch_x + slope * (cent[:, 2] - thickness / 2.0)
        d_far = notch_depth if notch_depth_far is None else notch_depth_far
        depth_of_z = notch_depth + (d_far - notch_depth) * cent[:, 2] / thickness
        remove = (np.abs(cent[:, 0] - x_of_z) < notch_width / 2.0 + _TOL) & (
            cent[:, 1] < depth_of_z
        )
        nodes, conn = _carve(nodes, conn, remove)
        kind = "hex8"
        tip = (notch_x, 0.5 * (notch_depth + d_far))

    half = max(support_width / 2.0, _TOL)
    sets = {
        "load_line": _select(nodes, x=(load_x - half, load_x + half), y=(height, height)),
        "support_left": _select(nodes, x=(sup_l - half, sup_l + half), y=(0.0, 0.0)),
        "support_right": _select(nodes, x=(sup_r - half, sup_r + half), y=(0.0, 0.0)),
        "crack_zone": _select(nodes, x=(band_lo, band_hi)),
    }
    meta = {
        "specimen": "three_point_bending",
        "notch_tip": tip,
        "crack_axis": "y",
        "load_x": load_x,
        "length": length,
        "height": height,
        "notch_volume": notch_width * notch_depth
        if thickness is None
        else notch_width * 0.5 * (notch_depth + (notch_depth if notch_depth_far is None else notch_depth_far)) * thickness,
    }
    if thickness is not None:
        meta["thickness"] = thickness
    return Mesh(
        nodes=nodes,
        blocks=[ElementBlock(kind=kind, conn=conn)],
        node_sets=sets,
        metadata=meta,
    )


def sent_mesh(
    *,
    size=1.0,
    notch_length=0.5,
    notch_width=None,
    h_fine=0.02,
    h_coarse=None,
    band_halfheight=0.12,
    band_start=0.38,
) -> Mesh:
    """Single-edge-notched tension square (internal regression geometry).

    A ``size x size`` square with an open horizontal slot from the left
    edge to ``notch_length`` at mid height. The bottom edge is held, the
    top edge is pulled; the crack runs to the right of the notch tip
    inside the refined band.
    """
    if h_coarse is None:
        h_coarse = 4.0 * h_fine
    if notch_width is None:
        notch_width = 2.0 * h_fine
    mid = size / 2.0
    xs = graded_axis(0.0, size, band_start, size, h_fine, h_coarse)
    xs = snap_to_axis(xs, notch_length)
    ys = graded_axis(0.0, size, mid - band_halfheight, mid + band_halfheight, h_fine, h_coarse)
    ys = snap_to_axis(ys, mid)

    nodes, conn = _grid_2d(xs, ys)
    cent = nodes[conn].mean(axis=1)
    remove = (np.abs(cent[:, 1] - mid) < notch_width / 2.0 + _TOL) & (
        cent[:, 0] < notch_length
    )
    nodes, conn = _carve(nodes, conn, remove)

    bottom = _select(nodes, y=(0.0, 0.0))
    sets = {
        "load_line": _select(nodes, y=(size, size)),
        "support_left": bottom[nodes[bottom, 0] <= mid + _TOL],
        "support_right": bottom[nodes[bottom, 0] > mid - _TOL],
        "bottom": bottom,
        "crack_zone": _select(
            nodes, x=(band_start, size), y=(mid - band_halfheight, mid + band_halfheight)
        ),
    }
    meta = {
        "specimen": "sent",
        "notch_tip": (notch_length, mid),
        "crack_axis": "x",
        "size": size,
        "notch_volume": notch_width * notch_length,
    }
    return Mesh(
        nodes=nodes,
        blocks=[ElementBlock(kind="quad4", conn=conn)],
        node_sets=sets,
        metadata=meta,
    )


def hexes_to_tets(mesh: Mesh) -> Mesh:
    """Split every hex8 of a 3D mesh into six tet4 (shared main diagonal)."""
    if mesh.dim != 3:
        raise MeshError("tet splitting requires a 3D hex mesh")
    tets = []
    # six tetrahedra around the 0-6 diagonal of each hexahedron
    pattern = [
        (0, 1, 2, 6), (0, 2, 3, 6), (0, 3, 7, 6),
        (0, 7, 4, 6), (0, 4, 5, 6), (0, 5, 1, 6),
    ]
    for block in mesh.blocks:
        if block.kind != "hex8":
            raise MeshError(f"cannot split {block.kind} elements")
        for p in pattern:
            tets.append(block.conn[:, p])
    conn = np.vstack(tets)
    return Mesh(
        nodes=mesh.nodes.copy(),
        blocks=[ElementBlock(kind="tet4", conn=conn)],
        node_sets={k: v.copy() for k, v in mesh.node_sets.items()},
        metadata=dict(mesh.metadata),
    )


#: Built-in specimen parameter sets. HC/HB/HA are 2D plane-strain sections
#: with the fine band sized so the ell = 0.5 mm rule passes at scale 1;
#: H45 and CHALLENGE are coarse 3D desk variants of the same bounding box.
SPECIMENS = {
    "HC": dict(generator="3pb", notch_offset=0.0, h_fine=0.1, band_margin=3.0),
    "HB": dict(generator="3pb", notch_offset=-10.0, h_fine=0.1, band_margin=3.0),
    "HA": dict(generator="3pb", notch_offset=-20.0, h_fine=0.1, band_margin=3.0),
    "H45": dict(
        generator="3pb",
        notch_offset=0.0,
        thickness=12.7,
        notch_incline_deg=45.0,
        h_fine=1.27,
        h_z=1.5875,
        band_margin=4.0,
    ),
    "CHALLENGE": dict(
        generator="3pb",
        notch_offset=-10.0,
        thickness=12.7,
        notch_incline_deg=30.0,
        notch_depth=6.35,
        notch_depth_far=11.43,
        h_fine=1.27,
        h_z=1.5875,
        band_margin=4.0,
    ),
    "SENT": dict(generator="sent", h_fine=0.02),
}


def default_bcs(mesh: Mesh, u_max: float):
    """Standard displacement boundary conditions for a built-in specimen.

    Three-point bending: pinned left support, roller right support and a
    downward load line (plus out-of-plane restraint at the pin in 3D).
    SENT: clamped bottom edge, upward pull on the top edge.
    """
    from .assembly import BoundaryCondition

    specimen = mesh.metadata.get("specimen")
    if specimen == "three_point_bending":
        bcs = [
            BoundaryCondition("support_left", "ux", 0.0),
            BoundaryCondition("support_left", "uy", 0.0),
            BoundaryCondition("support_right", "uy", 0.0),
            BoundaryCondition("load_line", "uy", -u_max),
        ]
        if mesh.dim == 3:
            bcs.append(BoundaryCondition("support_left", "uz", 0.0))
        return bcs
    if specimen == "sent":
        return [
            BoundaryCondition("bottom", "ux", 0.0),
            BoundaryCondition("bottom", "uy", 0.0),
            BoundaryCondition("load_line", "uy", u_max),
        ]
    raise MeshError(
        f"no default boundary conditions for specimen {specimen!r}; "
        "provide them explicitly"
    )


def builtin_geometry(name: str, scale: float = 1.0) -> Mesh:
    """Build one of the named specimens; ``scale`` multiplies element counts."""
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    try:
        spec = dict(SPECIMENS[name.upper()])
    except KeyError:
        raise ValueError(
            f"unknown geometry {name!r}; choose from {sorted(SPECIMENS)}"
        ) from None
    generator = spec.pop("generator")
    for key in ("h_fine", "h_z"):
        if key in spec:
            spec[key] = spec[key] / scale
    if generator == "3pb":
        mesh = three_point_bending_mesh(**spec)
    else:
        mesh = sent_mesh(**spec)
    mesh.metadata["name"] = name.upper()
    mesh.metadata["scale"] = scale
    return mesh
