"""Gmsh MSH 2.2 ASCII reader/writer for 2-node lines and 3-node triangles.

Only the section grammar needed here is supported: ``$MeshFormat`` with
version "2.2 0 8", optional ``$PhysicalNames``, ``$Nodes`` and ``$Elements``
with element types 1 (line) and 2 (triangle). The first element tag is the
physical tag.
"""

from __future__ import annotations

import numpy as np


class ParseError(Exception):
    """Malformed MSH content; carries the 1-based line number."""

    def __init__(self, message, line_no):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class UnsupportedVersion(Exception):
    pass


class DanglingReference(Exception):
    """An element refers to a node id that was never declared."""


def read_msh(path):
    """Parse an MSH 2.2 file into raw arrays.

    Returns ``(points, lines, line_tags, triangles, tri_tags, physical_names)``
    with 0-based connectivity. ``physical_names`` maps tag -> name.
    """
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.read().splitlines()

    idx = 0
    n_lines = len(raw)

    def next_line():
        nonlocal idx
        while idx < n_lines and raw[idx].strip() == "":
            idx += 1
        if idx >= n_lines:
            raise ParseError("unexpected end of file", idx)
        idx += 1
        return raw[idx - 1].strip(), idx

    points = None
    node_ids = None
    lines, line_tags = [], []
    tris, tri_tags = [], []
    physical_names = {}
    seen_nodes = seen_elements = False

    while idx < n_lines:
        if raw[idx].strip() == "":
            idx += 1
            continue
        header, hline = next_line()
        if not header.startswith("$"):
            raise ParseError(f"expected section header, got {header!r}", hline)
        section = header[1:]
        if section == "MeshFormat":
            fmt, fline = next_line()
            parts = fmt.split()
            if len(parts) != 3:
                raise ParseError("malformed $MeshFormat line", fline)
            if parts[0] != "2.2" or parts[1] != "0" or parts[2] != "8":
                raise UnsupportedVersion(f"unsupported MSH format {fmt!r}")
            _expect_end(next_line, "MeshFormat")
        elif section == "PhysicalNames":
            count_line, cline = next_line()
            try:
                count = int(count_line)
            except ValueError:
                raise ParseError("expected physical-name count", cline) from None
            for _ in range(count):
                entry, eline = next_line()
                parts = entry.split(maxsplit=2)
                if len(parts) != 3:
                    raise ParseError("malformed physical name", eline)
                physical_names[int(parts[1])] = parts[2].strip('"')
            _expect_end(next_line, "PhysicalNames")
        elif section == "Nodes":
            count_line, cline = next_line()
            try:
                count = int(count_line.split()[0])
            except (ValueError, IndexError):
                raise ParseError("expected node count", cline) from None
            points = np.empty((count, 2), dtype=np.float64)
            node_ids = {}
            for i in range(count):
                entry, eline = next_line()
                parts = entry.split()
                if len(parts) < 4:
                    raise ParseError("node needs id and 3 coordinates", eline)
                try:
                    nid = int(parts[0])
                    points[i, 0] = float(parts[1])
                    points[i, 1] = float(parts[2])
                except ValueError:
                    raise ParseError("malformed node entry", eline) from None
                node_ids[nid] = i
            seen_nodes = True
            _expect_end(next_line, "Nodes")
        elif section == "Elements":
            if not seen_nodes:
                raise ParseError("$Elements before $Nodes", hline)
            count_line, cline = next_line()
            try:
                count = int(count_line.split()[0])
            except (ValueError, IndexError):
                raise ParseError("expected element count", cline) from None
            for _ in range(count):
                entry, eline = next_line()
                parts = entry.split()
                if len(parts) < 3:
                    raise ParseError("malformed element entry", eline)
                try:
                    etype = int(parts[1])
                    ntags = int(parts[2])
                    tags = [int(t) for t in parts[3:3 + ntags]]
                    conn = [int(v) for v in parts[3 + ntags:]]
                except ValueError:
                    raise ParseError("malformed element entry", eline) from None
                phys = tags[0] if tags else 0
                if etype == 1:
                    if len(conn) != 2:
                        raise ParseError("2-node line needs 2 nodes", eline)
                    lines.append(_lookup(conn, node_ids, eline))
                    line_tags.append(phys)
                elif etype == 2:
                    if len(conn) != 3:
                        raise ParseError("3-node triangle needs 3 nodes", eline)
                    tris.append(_lookup(conn, node_ids, eline))
                    tri_tags.append(phys)
                else:
                    raise ParseError(f"unsupported element type {etype}", eline)
            seen_elements = True
            _expect_end(next_line, "Elements")
        else:
            # skip unknown sections verbatim
            while True:
                entry, _ = next_line()
                if entry == f"$End{section}":
                    break

    if not seen_nodes or not seen_elements:
        raise ParseError("missing $Nodes or $Elements section", n_lines)
    return (
        points,
        np.array(lines, dtype=np.int64).reshape(-1, 2),
        np.array(line_tags, dtype=np.int64),
        np.array(tris, dtype=np.int64).reshape(-1, 3),
        np.array(tri_tags, dtype=np.int64),
        physical_names,
    )


def _expect_end(next_line, section):
    entry, eline = next_line()
    if entry != f"$End{section}":
        raise ParseError(f"expected $End{section}, got {entry!r}", eline)


def _lookup(conn, node_ids, eline):
    try:
        return [node_ids[c] for c in conn]
    except KeyError as exc:
        raise DanglingReference(f"line {eline}: element refers to unknown node {exc.args[0]}") from None


def write_msh(path, points, lines, line_tags, triangles, tri_tags, physical_names=None):
    """Write an MSH 2.2 ASCII file (inverse of read_msh)."""
    points = np.asarray(points)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("$MeshFormat\n2.2 0 8\n$EndMeshFormat\n")
        if physical_names:
            fh.write(f"$PhysicalNames\n{len(physical_names)}\n")
            for tag, name in sorted(physical_names.items()):
                fh.write(f'1 {tag} "{name}"\n')
            fh.write("$EndPhysicalNames\n")
        fh.write(f"$Nodes\n{len(points)}\n")
        for i, (x, y) in enumerate(points, start=1):
            fh.write(f"{i} {x:.16g} {y:.16g} 0\n")
        fh.write("$EndNodes\n")
        nelem = len(lines) + len(triangles)
        fh.write(f"$Elements\n{nelem}\n")
        eid = 1
        for (a, b), tag in zip(np.asarray(lines, dtype=int), np.asarray(line_tags, dtype=int)):
            fh.write(f"{eid} 1 2 {tag} {tag} {a + 1} {b + 1}\n")
            eid += 1
        for (a, b, c), tag in zip(np.asarray(triangles, dtype=int), np.asarray(tri_tags, dtype=int)):
            fh.write(f"{eid} 2 2 {tag} {tag} {a + 1} {b + 1} {c + 1}\n")
            eid += 1
        fh.write("$EndElements\n")
