"""ASCII Gmsh MSH readers (v2.2 and v4.1) and a v2.2 writer.

Only 4-node and 10-node tetrahedra become cells.  Points, lines and
triangles are tolerated as boundary decoration and skipped; any other
element type is rejected.  Node parsing uses plain float() conversion, so
ingestion is locale-independent and bit-exact for round trips.

Gmsh stores the tet10 mid-edge nodes in the order
(0,1),(1,2),(0,2),(0,3),(2,3),(1,3); internally they are re-ordered to
(0,1),(0,2),(0,3),(1,2),(1,3),(2,3).
"""
import numpy as np

from .mesh import Mesh

_GMSH_TO_INTERNAL_MID = (0, 3, 1, 2, 5, 4)   # internal slot of gmsh position 4+p

_DECORATION_TYPES = {15: 1, 1: 2, 8: 3, 2: 3, 9: 6, 26: 4}
_TET_TYPES = {4: 4, 11: 10}


class MeshFormatError(ValueError):
    pass


class _Lines:
    def __init__(self, path):
        with open(path, "r", encoding="ascii") as fh:
            self.lines = fh.read().splitlines()
        self.pos = 0

    def next(self):
        if self.pos >= len(self.lines):
            raise MeshFormatError("unexpected end of file")
        line = self.lines[self.pos]
        self.pos += 1
        return line.strip()

    def error(self, message):
        raise MeshFormatError(f"line {self.pos}: {message}")


def _skip_section(lines, name):
    end = "$End" + name[1:]
    while True:
        if lines.next() == end:
            return


def _collect_elements(raw_elements, lines):
    """Split raw (type, nodes) pairs into tet cells, rejecting unknown types."""
    tet_cells = {4: [], 10: []}
    for lineno, etype, nodes in raw_elements:
        if etype in _TET_TYPES:
            tet_cells[_TET_TYPES[etype]].append(nodes)
        elif etype in _DECORATION_TYPES:
            continue
        else:
            raise MeshFormatError(f"line {lineno}: unsupported element type {etype}")
    if tet_cells[4] and tet_cells[10]:
        raise MeshFormatError("mesh mixes 4-node and 10-node tetrahedra")
    if not tet_cells[4] and not tet_cells[10]:
        raise MeshFormatError("no tetrahedral cells in file")
    if tet_cells[10]:
        cells = np.array(tet_cells[10], dtype=np.int64)
        reordered = cells.copy()
        for p, slot in enumerate(_GMSH_TO_INTERNAL_MID):
            reordered[:, 4 + slot] = cells[:, 4 + p]
        return reordered, 2
    return np.array(tet_cells[4], dtype=np.int64), 1


def _read_v22(lines):
    node_ids, coords, raw_elements = [], [], []
    while lines.pos < len(lines.lines):
        section = lines.next()
        if not section:
            continue
        if section == "$Nodes":
            try:
                count = int(lines.next())
            except ValueError:
                lines.error("malformed node count")
            for _ in range(count):
                parts = lines.next().split()
                if len(parts) != 4:
                    lines.error("malformed node line")
                node_ids.append(int(parts[0]))
                coords.append([float(p) for p in parts[1:]])
            if lines.next() != "$EndNodes":
                lines.error("expected $EndNodes")
        elif section == "$Elements":
            try:
                count = int(lines.next())
            except ValueError:
                lines.error("malformed element count")
            for _ in range(count):
                parts = lines.next().split()
                if len(parts) < 3:
                    lines.error("malformed element line")
                etype = int(parts[1])
                ntags = int(parts[2])
                nodes = [int(p) for p in parts[3 + ntags:]]
                raw_elements.append((lines.pos, etype, nodes))
            if lines.next() != "$EndElements":
                lines.error("expected $EndElements")
        elif section.startswith("$End"):
            continue
        elif section.startswith("$"):
            _skip_section(lines, section)
    return node_ids, coords, raw_elements


def _read_v41(lines):
    node_ids, coords, raw_elements = [], [], []
    while lines.pos < len(lines.lines):
        section = lines.next()
        if not section:
            continue
        if section == "$Nodes":
            header = lines.next().split()
            if len(header) != 4:
                lines.error("malformed $Nodes header")
            nblocks = int(header[0])
            for _ in range(nblocks):
                block = lines.next().split()
                if len(block) != 4:
                    lines.error("malformed node block header")
                nnodes = int(block[3])
                tags = [int(lines.next()) for _ in range(nnodes)]
                for tag in tags:
                    parts = lines.next().split()
                    if len(parts) < 3:
                        lines.error("malformed node coordinate line")
                    node_ids.append(tag)
                    coords.append([float(p) for p in parts[:3]])
            if lines.next() != "$EndNodes":
                lines.error("expected $EndNodes")
        elif section == "$Elements":
            header = lines.next().split()
            if len(header) != 4:
                lines.error("malformed $Elements header")
            nblocks = int(header[0])
            for _ in range(nblocks):
                block = lines.next().split()
                if len(block) != 4:
                    lines.error("malformed element block header")
                etype = int(block[2])
                nelems = int(block[3])
                for _ in range(nelems):
                    parts = [int(p) for p in lines.next().split()]
                    raw_elements.append((lines.pos, etype, parts[1:]))
            if lines.next() != "$EndElements":
                lines.error("expected $EndElements")
        elif section.startswith("$End"):
            continue
        elif section.startswith("$"):
            _skip_section(lines, section)
    return node_ids, coords, raw_elements


def read_gmsh(path):
    """Parse an ASCII MSH file (v2.2 or v4.1) into a Mesh."""
    lines = _Lines(path)
    if lines.next() != "$MeshFormat":
        lines.error("missing $MeshFormat header")
    fmt = lines.next().split()
    if len(fmt) != 3:
        lines.error("malformed format line")
    version, file_type = fmt[0], int(fmt[1])
    if file_type != 0:
        lines.error("binary MSH files are not supported")
    if lines.next() != "$EndMeshFormat":
        lines.error("expected $EndMeshFormat")
    if version == "2.2":
        node_ids, coords, raw_elements = _read_v22(lines)
    elif version == "4.1":
        node_ids, coords, raw_elements = _read_v41(lines)
    else:
        raise MeshFormatError(f"unsupported MSH version {version}")
    if not node_ids:
        raise MeshFormatError("file declares no nodes")
    cells, order = _collect_elements(raw_elements, lines)
    row_of = {tag: i for i, tag in enumerate(node_ids)}
    if len(row_of) != len(node_ids):
        raise MeshFormatError("duplicate node tags")
    try:
        cells = np.vectorize(row_of.__getitem__)(cells)
    except KeyError as exc:
        raise MeshFormatError(f"element references unknown node {exc}") from None
    coords = np.asarray(coords, dtype=float)
    # drop nodes referenced only by decoration elements
    used = np.unique(cells)
    remap = np.full(len(coords), -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return Mesh(coords[used], remap[cells], order=order)


def write_gmsh(mesh, path):
    """Write the mesh as ASCII MSH v2.2 (tetrahedra only)."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
        fh.write(f"$Nodes\n{len(mesh.vertices)}\n")
        for i, (x, y, z) in enumerate(mesh.vertices, start=1):
            fh.write(f"{i} {float(x)!r} {float(y)!r} {float(z)!r}\n")
        fh.write("$EndNodes\n")
        fh.write(f"$Elements\n{mesh.num_cells}\n")
        etype = 4 if mesh.order == 1 else 11
        for i, cell in enumerate(mesh.cells, start=1):
            nodes = list(cell[:4])
            if mesh.order == 2:
                nodes += [cell[4 + _GMSH_TO_INTERNAL_MID[p]] for p in range(6)]
            joined = " ".join(str(n + 1) for n in nodes)
            fh.write(f"{i} {etype} 2 0 0 {joined}\n")
        fh.write("$EndElements\n")
